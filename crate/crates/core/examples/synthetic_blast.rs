//! Run the desk full-order solver and write the snapshot dataset.
//!
//! ```text
//! cargo run --release --example synthetic_blast [manifest-path]
//! ```

use std::time::Instant;

use poddl::dataset::{load_snapshots, save_snapshots};
use poddl::fom::{generate_dataset, solve_fom, FomConfig};

fn main() -> poddl::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/examples/snapshots.manifest".into());
    let cfg = FomConfig::desk();
    let params = FomConfig::desk_params();

    let t0 = Instant::now();
    let tr = solve_fom(&cfg, params[0])?;
    println!("one trajectory: {} cells x {} instants in {:?}", tr.fields.nrows(), tr.times.len(), t0.elapsed());

    // peak overpressure anywhere in the domain decays as the front spreads
    for c in [0, 10, 25, 50, 99] {
        let peak = tr.fields.column(c).max() - cfg.p0;
        println!("  t = {:.4} s  max overpressure {:>10.1} Pa", tr.times[c], peak);
    }

    let set = generate_dataset(&cfg, &params)?;
    save_snapshots(&set, &out)?;
    let back = load_snapshots(&out)?;
    assert_eq!(back.states(), set.states());
    println!(
        "wrote {out}: N_h = {}, N_mu = {}, N_t = {}, digest {}",
        set.grid().n_cells(),
        set.n_params(),
        set.n_times(),
        &set.digest()[..16]
    );
    Ok(())
}
