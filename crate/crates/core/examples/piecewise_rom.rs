//! Offline and online stages end to end on the desk dataset: train one bundle
//! per interval, save and reload the model, then time an online query against
//! a full-order solve.
//!
//! ```text
//! cargo run --release --example piecewise_rom [epochs]
//! ```
//! The desk settings use 3000 epochs per network; the default here is
//! shorter so the example finishes quickly.

use std::time::Instant;

use poddl::analysis::{evaluate_columns, piecewise_pod_errors, relative_error, Norm};
use poddl::config::RunConfig;
use poddl::dataset::split_samples;
use poddl::fom::{generate_dataset, solve_fom};
use poddl::pipeline::{load_model, model_digest, save_model, train_offline};

fn main() -> poddl::error::Result<()> {
    let mut cfg = RunConfig::desk();
    if let Some(e) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.training.ae.max_epochs = e;
        cfg.training.regressor.max_epochs = e;
    } else {
        cfg.training.ae.max_epochs = 500;
        cfg.training.regressor.max_epochs = 500;
    }
    let fom = cfg.fom_config();
    let set = generate_dataset(&fom, &cfg.params())?;
    let split = split_samples(&set, cfg.split_fractions(), cfg.seed)?;
    let partition = cfg.partition_for(&set)?;
    println!("partition {:?}", partition.boundaries());

    let t0 = Instant::now();
    let res = train_offline(&set, &split, &partition, &cfg.offline_config())?;
    println!("offline stage: {:?}", t0.elapsed());
    for (j, h) in res.histories.iter().enumerate() {
        println!(
            "  interval {j}: {} train columns, AE best val {:.2e}, regressor best val {:.2e}",
            h.n_train,
            h.autoencoder.best_val_mse(),
            h.regressor.best_val_mse()
        );
    }

    let path = std::env::temp_dir().join("poddl-example-model.poddl");
    save_model(&res.model, &path)?;
    let model = load_model(&path)?;
    assert_eq!(model_digest(&model), model_digest(&res.model));

    let report = evaluate_columns(&model, &set, &split.test)?;
    let m = report.mean(Norm::L2);
    let pod8 = piecewise_pod_errors(&set, &split, &partition, 8, &split.test)?;
    println!("test L2: POD {:.4}  AE {:.4}  NN {:.4}  POD-DL {:.4}", m[0], m[1], m[2], m[3]);
    println!("plain piecewise POD with 8 modes: {:.4}", pod8[1]);

    // unseen source position
    let (t, mu) = (0.12, 83.0);
    let t0 = Instant::now();
    let truth = solve_fom(&fom, mu)?;
    let t_fom = t0.elapsed();
    let t0 = Instant::now();
    let u = model.evaluate_online(t, mu)?;
    let t_rom = t0.elapsed();
    let c = truth.times.iter().position(|&s| s >= t).unwrap();
    let e = relative_error(&truth.fields.column(c).into_owned(), &model.evaluate_online(truth.times[c], mu)?, Norm::L2)?;
    println!("mu = {mu}: full solve {t_fom:?}, online query {t_rom:?} ({} cells)", u.len());
    println!("relative L2 error at t = {:.4}: {e:.4}", truth.times[c]);
    Ok(())
}
