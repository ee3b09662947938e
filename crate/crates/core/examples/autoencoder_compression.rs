//! Compress the POD coefficients of one time interval with the autoencoder
//! and compare against simply keeping fewer modes.
//!
//! ```text
//! cargo run --release --example autoencoder_compression [epochs]
//! ```

use poddl::analysis::{relative_error, Norm};
use poddl::autoencoder::{build_autoencoder, train_autoencoder};
use poddl::dataset::{assemble_matrix, split_samples};
use poddl::fom::{generate_dataset, FomConfig};
use poddl::neural::TrainConfig;
use poddl::partition::auto_partition;
use poddl::pod::{compute_pod, RankRule};
use poddl::scaling::fit_coeff_scaler;

fn main() -> poddl::error::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let (n_full, n_latent) = (40, 8);

    let set = generate_dataset(&FomConfig::desk(), &FomConfig::desk_params())?;
    let split = split_samples(&set, (0.75, 0.15, 0.10), 1)?;
    let window = auto_partition(&set, 4, 8)?.window(2);
    let train = assemble_matrix(&set, window, &split.train)?.data;
    let val = assemble_matrix(&set, window, &split.val)?.data;

    let basis = compute_pod(&train, RankRule::Fixed(n_full))?;
    let scaler = fit_coeff_scaler(&basis.project_matrix(&train)?)?;
    let s_train = scaler.apply(&basis.project_matrix(&train)?)?;
    let s_val = scaler.apply(&basis.project_matrix(&val)?)?;

    let mut ae = build_autoencoder(n_full, n_latent, 7, 3)?;
    println!("encoder widths {:?}", ae.encoder().widths());
    let hist = train_autoencoder(&mut ae, &s_train, &s_val, &TrainConfig::new(1e-3, 32, epochs, 200, 0))?;
    println!(
        "stopped at epoch {}, best val mse {:.3e} (epoch {})",
        hist.stopped_epoch,
        hist.best_val_mse(),
        hist.best_epoch
    );

    // reconstruct validation snapshots through N = 40 -> n = 8 -> N = 40
    let rec = scaler.invert(&ae.reconstruct_matrix(&s_val)?)?;
    let u_ae = basis.reconstruct_matrix(&rec)?;
    let small = basis.truncated(n_latent)?;
    let u_small = small.reconstruct_matrix(&small.project_matrix(&val)?)?;
    let (mut e_ae, mut e_small) = (0.0, 0.0);
    for c in 0..val.ncols() {
        let u = val.column(c).into_owned();
        e_ae += relative_error(&u, &u_ae.column(c).into_owned(), Norm::L2)?;
        e_small += relative_error(&u, &u_small.column(c).into_owned(), Norm::L2)?;
    }
    let m = val.ncols() as f64;
    println!("mean val L2 error: POD({n_full}) + AE({n_latent}) {:.4}, POD({n_latent}) {:.4}", e_ae / m, e_small / m);
    Ok(())
}
