//! Error against the number of modes N (latent size fixed) and against the
//! latent size n (N fixed), next to plain piecewise POD.
//!
//! ```text
//! cargo run --release --example error_sweep [epochs]
//! ```

use poddl::analysis::{piecewise_pod_errors, sweep_csv, sweep_latent, sweep_rank, Norm};
use poddl::config::RunConfig;
use poddl::dataset::split_samples;
use poddl::fom::generate_dataset;

fn main() -> poddl::error::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let mut cfg = RunConfig::desk();
    cfg.training.ae.max_epochs = epochs;
    cfg.training.regressor.max_epochs = epochs;
    cfg.training.ae.patience = cfg.training.ae.patience.min(epochs);
    cfg.training.regressor.patience = cfg.training.regressor.patience.min(epochs);

    let set = generate_dataset(&cfg.fom_config(), &cfg.params())?;
    let split = split_samples(&set, cfg.split_fractions(), cfg.seed)?;
    let partition = cfg.partition_for(&set)?;
    let base = cfg.offline_config();

    println!("plain piecewise POD (test, L2):");
    for n in [4, 8, 16, 24, 40] {
        let e = piecewise_pod_errors(&set, &split, &partition, n, &split.test)?;
        println!("  N = {n:>2}: {:.4}", e[1]);
    }

    let by_rank = sweep_rank(&set, &split, &partition, &[16, 40], 8, &base)?;
    let by_latent = sweep_latent(&set, &split, &partition, 40, &[4, 8], &base)?;
    let rows: Vec<_> = by_rank.into_iter().chain(by_latent).collect();
    for r in rows.iter().filter(|r| r.norm == Norm::L2) {
        println!(
            "POD-DL N = {:>2}, n = {}: {} eps_poddl {:.4} (eps_ae {:.4}, eps_nn {:.4})",
            r.n_modes, r.n_latent, r.status, r.eps_poddl, r.eps_ae, r.eps_nn
        );
    }
    print!("{}", sweep_csv(&rows));
    Ok(())
}
