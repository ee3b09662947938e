use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use poddl::config::RunConfig;
use poddl::dataset::load_snapshots;

const TINY: &str = r#"
seed = 5

[fom]
nx = 16
ny = 12
dx = 5.0
dy = 5.0
origin = [0.0, 0.0]
obstacle = [7, 10, 6, 9]
c = 340.0
density = 1.225
p0 = 100000.0
t_end = 0.1
cfl = 0.5
bubble_radius = 8.0
bubble_overpressure = 500000.0
n_output_times = 20
burn_in_fraction = 0.1
source_y = 20.0
mu_range = [20.0, 60.0]
param_span = [25.0, 55.0]
n_params = 4

[partition]
intervals = 2
n_probe = 3

[pod]
modes = 6

[ae]
latent = 2
levels = 3
leaky_alpha = 0.01

[regressor]
hidden_layers = 2
hidden_width = 8

[training]
parallel = false

[training.ae]
learning_rate = 0.001
batch_size = 16
max_epochs = 40
patience = 10

[training.regressor]
learning_rate = 0.001
batch_size = 16
max_epochs = 40
patience = 10

[split]
fractions = [0.75, 0.15, 0.10]

[paths]
dataset = "data/snapshots.manifest"
model = "data/model.poddl"
out = "data"

[sweep]
modes = [6]
latent = [1, 2]
"#;

fn poddl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poddl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = poddl(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn trained() -> tempfile::TempDir {
    let dir = workspace(TINY);
    ok(dir.path(), &["generate", "--config", "run.toml"]);
    ok(dir.path(), &["train", "--config", "run.toml"]);
    dir
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn generate_reports_sizes_and_reloads() {
    let dir = workspace(TINY);
    let stdout = ok(dir.path(), &["generate", "--config", "run.toml"]);
    assert!(stdout.contains("N_h = 192"), "{stdout}");
    assert!(stdout.contains("N_s = 80"), "{stdout}");
    let set = load_snapshots(dir.path().join("data/snapshots.manifest")).unwrap();
    assert_eq!((set.n_params(), set.n_times()), (4, 20));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = workspace(TINY);
    for cmd in ["generate", "train", "sweep"] {
        let mut args = vec![cmd, "--config", "run.toml", "--dry-run"];
        if cmd == "sweep" {
            args.extend(["--vary", "N"]);
        }
        let stdout = ok(dir.path(), &args);
        assert!(stdout.contains("seed = 5"), "{stdout}");
        assert!(stdout.contains("[training.ae]"), "{stdout}");
    }
    assert_eq!(file_names(dir.path()), vec!["run.toml"]);
}

#[test]
fn invalid_cfl_exits_nonzero_naming_field() {
    let dir = workspace(&TINY.replace("cfl = 0.5", "cfl = 2.0"));
    let out = poddl(dir.path(), &["generate", "--config", "run.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fom.cfl"), "{err}");
    assert!(err.contains("line 15"), "{err}");
    assert!(!dir.path().join("data").exists());
}

#[test]
fn unknown_key_exits_nonzero() {
    let dir = workspace(&TINY.replace("[pod]\nmodes = 6", "[pod]\nmodes = 6\nmode = 3"));
    let out = poddl(dir.path(), &["train", "--config", "run.toml", "--dry-run"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mode") && err.contains("line"), "{err}");
}

#[test]
fn missing_dataset_fails_without_model() {
    let dir = workspace(TINY);
    let out = poddl(dir.path(), &["train", "--config", "run.toml"]);
    assert!(!out.status.success());
    assert!(!dir.path().join("data/model.poddl").exists());
}

#[test]
fn train_writes_histories_and_is_deterministic() {
    let dir = trained();
    let d = dir.path().join("data");
    let mut n_hist = 0;
    for j in 0..2 {
        for net in ["autoencoder", "regressor"] {
            let p = d.join(format!("history_{j}_{net}.csv"));
            assert_eq!(header(&p), "epoch,train_mse,val_mse,train_mae,val_mae");
            let rows = fs::read_to_string(&p).unwrap().lines().count() - 1;
            assert!(rows >= 1 && rows <= 40);
            n_hist += 1;
        }
    }
    assert_eq!(n_hist, 4);
    let intervals = fs::read_to_string(d.join("intervals.csv")).unwrap();
    assert_eq!(
        intervals.lines().next().unwrap(),
        "interval,t_start,t_end,n_train,n_val,ae_stopped_epoch,ae_best_val_mse,regressor_stopped_epoch,regressor_best_val_mse"
    );
    // history row count equals the stopped epoch recorded for the interval
    for line in intervals.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let ae_rows = fs::read_to_string(d.join(format!("history_{}_autoencoder.csv", f[0])))
            .unwrap()
            .lines()
            .count()
            - 1;
        assert_eq!(ae_rows.to_string(), f[5]);
    }

    let first = fs::read(d.join("model.poddl")).unwrap();
    ok(dir.path(), &["train", "--config", "run.toml", "--model", "again.poddl", "--out", "again"]);
    assert_eq!(fs::read(dir.path().join("again.poddl")).unwrap(), first);
    for f in file_names(&d).iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(fs::read(d.join(f)).unwrap(), fs::read(dir.path().join("again").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn query_outputs() {
    let dir = trained();
    let p = dir.path();
    ok(p, &["query", "--config", "run.toml", "--t", "0.05", "--mu", "40", "--out", "q1"]);
    ok(p, &["query", "--config", "run.toml", "--t", "0.05", "--mu", "40", "--out", "q2"]);
    for f in ["field.manifest", "field.bin"] {
        assert_eq!(fs::read(p.join("q1").join(f)).unwrap(), fs::read(p.join("q2").join(f)).unwrap());
    }
    let one = load_snapshots(p.join("q1/field.manifest")).unwrap();
    assert_eq!((one.grid().n_cells(), one.n_samples()), (192, 1));

    // one column per instant of the solver's output grid
    let set = load_snapshots(p.join("data/snapshots.manifest")).unwrap();
    let times: Vec<String> = set.times().iter().map(|t| t.to_string()).collect();
    fs::write(p.join("times.txt"), times.join("\n")).unwrap();
    ok(p, &["query", "--config", "run.toml", "--trajectory", "times.txt", "--mu", "31.5", "--out", "tr", "--consequences"]);
    let tr = load_snapshots(p.join("tr/field.manifest")).unwrap();
    assert_eq!(tr.n_times(), 20);
    assert_eq!(tr.times(), set.times());
    assert_eq!(header(&p.join("tr/consequences.csv")), "cell,x,y,impulse,peak_overpressure");
    let imp = load_snapshots(p.join("tr/impulse.manifest")).unwrap();
    assert!(imp.states().iter().all(|v| *v >= 0.0));
}

#[test]
fn query_outside_time_range_names_range() {
    let dir = trained();
    let out = poddl(dir.path(), &["query", "--config", "run.toml", "--t", "0.001", "--mu", "40"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("outside the modelled range [0.01"), "{err}");
    assert!(err.contains(", 0.1]"), "{err}");
}

#[test]
fn evaluate_and_single_value_sweep_agree() {
    let dir = trained();
    let p = dir.path();
    ok(p, &["evaluate", "--config", "run.toml"]);
    assert_eq!(header(&p.join("data/errors.csv")), "t,mu,norm,eps_pod,eps_ae,eps_nn,eps_poddl");
    assert_eq!(header(&p.join("data/error_summary.csv")), "norm,count,eps_pod,eps_ae,eps_nn,eps_poddl");
    let errors = fs::read_to_string(p.join("data/errors.csv")).unwrap();
    for line in errors.lines().skip(1) {
        for v in line.split(',').skip(3) {
            let x: f64 = v.parse().unwrap();
            assert!(x.is_finite() && x >= 0.0, "{line}");
        }
    }

    ok(p, &["sweep", "--config", "run.toml", "--vary", "N"]);
    let sweep = fs::read_to_string(p.join("data/sweep_N.csv")).unwrap();
    assert_eq!(
        sweep.lines().next().unwrap(),
        "vary,N,n,norm,status,eps_pod_train,eps_pod,eps_ae,eps_nn,eps_poddl"
    );
    let summary = fs::read_to_string(p.join("data/error_summary.csv")).unwrap();
    for norm in ["L1", "L2", "Linf"] {
        let s: Vec<&str> = summary.lines().find(|l| l.starts_with(&format!("{norm},"))).unwrap().split(',').collect();
        let w: Vec<&str> = sweep.lines().find(|l| l.contains(&format!(",{norm},"))).unwrap().split(',').collect();
        assert_eq!(w[4], "ok");
        assert_eq!(&w[6..], &s[2..], "{norm}");
    }
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = workspace(&TINY.replace("modes = [6]", "modes = [1, 6]"));
    ok(dir.path(), &["generate", "--config", "run.toml"]);
    let stdout = ok(dir.path(), &["sweep", "--config", "run.toml", "--vary", "N"]);
    assert!(stdout.contains("2 configurations, 1 failed"), "{stdout}");
    let sweep = fs::read_to_string(dir.path().join("data/sweep_N.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 6);
    assert!(sweep.lines().filter(|l| l.starts_with("N,6,")).all(|l| l.contains(",ok,")));
}

#[test]
fn reference_config_carries_published_values() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.partition.boundaries.as_deref(), Some(&[0.01, 0.1, 0.2, 0.35, 0.5][..]));
    assert_eq!(cfg.pod.modes, Some(200));
    assert_eq!((cfg.ae.latent, cfg.ae.levels, cfg.ae.leaky_alpha), (20, 7, 0.01));
    assert_eq!((cfg.regressor.hidden_layers, cfg.regressor.hidden_width), (8, 50));
    let (a, r) = (cfg.training.ae, cfg.training.regressor);
    assert_eq!((a.learning_rate, a.batch_size, a.max_epochs, a.patience), (1e-4, 32, 10_000, 200));
    assert_eq!((r.learning_rate, r.batch_size, r.max_epochs, r.patience), (1e-4, 32, 5_000, 200));
    assert_eq!(cfg.split.fractions, [0.75, 0.15, 0.10]);
    assert_eq!(cfg.fom.n_params, 30);
    assert_eq!(cfg.fom_config().output_times()[0], 0.01);

    let desk = RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")).unwrap();
    assert_eq!(desk, RunConfig::desk());
}
