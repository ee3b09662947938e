//! Impulse and peak overpressure from a reduced model compared with the
//! full-order solver at a source position outside the training set.
//!
//! ```text
//! cargo run --release --example blast_consequences [model-file]
//! ```
//! Without a model file a short training run is done first (`poddl train`
//! writes a full desk model).

use poddl::analysis::{consequences, field_relative_error, time_l2};
use poddl::config::RunConfig;
use poddl::dataset::split_samples;
use poddl::fom::{generate_dataset, solve_fom};
use poddl::pipeline::{load_model, train_offline, RomModel};

fn model(cfg: &RunConfig) -> poddl::error::Result<RomModel> {
    if let Some(p) = std::env::args().nth(1) {
        return load_model(p);
    }
    let mut cfg = cfg.clone();
    cfg.training.ae.max_epochs = 500;
    cfg.training.regressor.max_epochs = 500;
    let set = generate_dataset(&cfg.fom_config(), &cfg.params())?;
    let split = split_samples(&set, cfg.split_fractions(), cfg.seed)?;
    let partition = cfg.partition_for(&set)?;
    Ok(train_offline(&set, &split, &partition, &cfg.offline_config())?.model)
}

fn main() -> poddl::error::Result<()> {
    let cfg = RunConfig::desk();
    let fom = cfg.fom_config();
    let rom = model(&cfg)?;
    let mu = 76.5;

    let truth = solve_fom(&fom, mu)?;
    let approx = rom.reconstruct_trajectory(mu, &truth.times)?;
    let cf_fom = consequences(&truth, fom.p0)?;
    let cf_rom = consequences(&approx, fom.p0)?;
    println!("at t = {:.3} s", cf_fom.at_time);
    println!("  max impulse        FOM {:>9.2} Pa s   ROM {:>9.2} Pa s", cf_fom.impulse.max(), cf_rom.impulse.max());
    println!(
        "  max peak overpress FOM {:>9.0} Pa     ROM {:>9.0} Pa",
        cf_fom.peak_overpressure.max(),
        cf_rom.peak_overpressure.max()
    );

    // pressure-field error relative to the domain mean, last instant
    let last = truth.times.len() - 1;
    let err = field_relative_error(&truth.fields.column(last).into_owned(), &approx.fields.column(last).into_owned())?;
    println!("  field relative error: max {:.2e}, mean {:.2e}", err.max(), err.mean());

    // pressure history at two probe points: near the building corner and
    // in its shadow
    let g = &fom.grid;
    for (name, (x, y)) in [("corner", (62.0, 57.0)), ("shadow", (82.0, 95.0))] {
        let (i, j) = g.locate(x, y).expect("probe inside grid");
        let k = g.cell_index(i, j);
        let diff: Vec<f64> = (0..truth.times.len())
            .map(|c| truth.fields[(k, c)] - approx.fields[(k, c)])
            .collect();
        let (rss, rms) = time_l2(&diff);
        let peak = (0..truth.times.len()).map(|c| truth.fields[(k, c)] - fom.p0).fold(0.0, f64::max);
        println!("  {name} ({x}, {y}): peak {peak:.0} Pa, time L2 error {rss:.1} (rms {rms:.2}) Pa");
    }
    Ok(())
}
