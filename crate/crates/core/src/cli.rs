//! Command-line front end: `generate`, `train`, `query`, `evaluate`, `sweep`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, Norm, SweepVar};
use crate::config::RunConfig;
use crate::dataset::{load_snapshots, save_snapshots, split_samples, SnapshotSet};
use crate::error::{Error, Result};
use crate::fom::generate_dataset;
use crate::io::{csv_text, write_atomic};
use crate::neural::HISTORY_HEADER;
use crate::pipeline::{load_model, model_digest, save_model, train_offline, RomModel};

#[derive(Debug, Parser)]
#[command(name = "poddl", version, about = "Piecewise POD + deep learning reduced-order models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full-order solver over the configured parameters.
    Generate(GenerateArgs),
    /// Offline stage: fit bases, autoencoders and regressors.
    Train(TrainArgs),
    /// Online stage: reconstruct a field (or trajectory) for one parameter.
    Query(QueryArgs),
    /// Error decomposition of a model against a dataset.
    Evaluate(EvaluateArgs),
    /// Retrain over a list of ranks or latent sizes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; the desk settings when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Manifest path to write (payload goes next to it).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the resolved configuration and exit without writing.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory for the training-history CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Query time; ignored when `--trajectory` is given.
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: f64,
    /// File of query times separated by whitespace or commas.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Also write impulse and peak overpressure at the last instant.
    #[arg(long)]
    pub consequences: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Vary {
    #[value(name = "N")]
    Modes,
    #[value(name = "n")]
    Latent,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub vary: Vary,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dry_run: bool,
}

/// Time samples used for consequence fields when no trajectory is given.
pub const CONSEQUENCE_SAMPLES: usize = 200;

pub const SUMMARY_HEADER: [&str; 6] = ["norm", "count", "eps_pod", "eps_ae", "eps_nn", "eps_poddl"];
pub const INTERVAL_HEADER: [&str; 9] = [
    "interval",
    "t_start",
    "t_end",
    "n_train",
    "n_val",
    "ae_stopped_epoch",
    "ae_best_val_mse",
    "regressor_stopped_epoch",
    "regressor_best_val_mse",
];
pub const CONSEQUENCE_HEADER: [&str; 5] = ["cell", "x", "y", "impulse", "peak_overpressure"];

/// Parse `args` (program name first), run, print, and map errors to a
/// nonzero exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Execute a parsed command and return what it would print.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Query(a) => cmd_query(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::desk(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn dry_run_report(cfg: &RunConfig, writes: &[&Path]) -> String {
    let mut s = String::from("# resolved configuration\n");
    s.push_str(&cfg.to_toml());
    s.push_str("# dry run: nothing written; would write\n");
    for w in writes {
        let _ = writeln!(s, "#   {}", w.display());
    }
    s
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<String> {
    let cfg = resolve(&a.common)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
    if a.dry_run {
        return Ok(dry_run_report(&cfg, &[&out]));
    }
    let set = generate_dataset(&cfg.fom_config(), &cfg.params())?;
    save_snapshots(&set, &out)?;
    Ok(format!(
        "wrote {}\nN_h = {}\nN_mu = {}\nN_t = {}\nN_s = {}\ndigest = {}\n",
        out.display(),
        set.grid().n_cells(),
        set.n_params(),
        set.n_times(),
        set.n_samples(),
        set.digest()
    ))
}

fn history_csv(h: &crate::neural::TrainHistory) -> String {
    csv_text(&HISTORY_HEADER, h.csv_rows())
}

pub fn cmd_train(a: &TrainArgs) -> Result<String> {
    let cfg = resolve(&a.common)?;
    let dataset = a.dataset.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
    let model_path = a.model.clone().unwrap_or_else(|| cfg.paths.model.clone());
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.out.clone());
    if a.dry_run {
        return Ok(dry_run_report(&cfg, &[&model_path, &out]));
    }
    let set = load_snapshots(&dataset)?;
    let split = split_samples(&set, cfg.split_fractions(), cfg.seed)?;
    let partition = cfg.partition_for(&set)?;
    let result = train_offline(&set, &split, &partition, &cfg.offline_config())?;

    let mut rows = Vec::new();
    for (j, h) in result.histories.iter().enumerate() {
        write_atomic(out.join(format!("history_{j}_autoencoder.csv")), history_csv(&h.autoencoder).as_bytes())?;
        write_atomic(out.join(format!("history_{j}_regressor.csv")), history_csv(&h.regressor).as_bytes())?;
        rows.push(vec![
            j.to_string(),
            partition.window(j).start.to_string(),
            partition.window(j).end.to_string(),
            h.n_train.to_string(),
            h.n_val.to_string(),
            h.autoencoder.stopped_epoch.to_string(),
            format!("{:e}", h.autoencoder.best_val_mse()),
            h.regressor.stopped_epoch.to_string(),
            format!("{:e}", h.regressor.best_val_mse()),
        ]);
    }
    write_atomic(out.join("intervals.csv"), csv_text(&INTERVAL_HEADER, rows).as_bytes())?;
    save_model(&result.model, &model_path)?;
    Ok(format!(
        "wrote {}\nintervals = {:?}\nmodel_digest = {}\n",
        model_path.display(),
        partition.boundaries(),
        model_digest(&result.model)
    ))
}

fn read_times(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let times = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{}: bad time `{s}`", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    if times.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no times", path.display())));
    }
    Ok(times)
}

fn field_set(model: &RomModel, times: Vec<f64>, mu: f64, fields: nalgebra::DMatrix<f64>) -> Result<SnapshotSet> {
    SnapshotSet::new(fields, times, vec![mu], model.grid.clone(), model.p0)
}

pub fn cmd_query(a: &QueryArgs) -> Result<String> {
    let cfg = resolve(&a.common)?;
    let model_path = a.model.clone().unwrap_or_else(|| cfg.paths.model.clone());
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.out.join("query"));
    let model = load_model(&model_path)?;
    let times = match (&a.trajectory, a.t) {
        (Some(p), _) => read_times(p)?,
        (None, Some(t)) => vec![t],
        (None, None) => return Err(Error::InvalidArgument("give --t or --trajectory".into())),
    };
    let (t_min, t_max) = (model.partition.start(), model.partition.end());
    if let Some(&t) = times.iter().find(|&&t| !(t >= t_min && t <= t_max)) {
        return Err(Error::OutOfRange { t, t_min, t_max });
    }
    let tr = model.reconstruct_trajectory(a.mu, &times)?;
    let n_cols = tr.fields.ncols();
    save_snapshots(&field_set(&model, tr.times.clone(), a.mu, tr.fields.clone())?, out.join("field.manifest"))?;
    let mut report = format!("wrote {} ({} cells x {n_cols} instants)\n", out.join("field.manifest").display(), model.n_dofs());

    if a.consequences {
        let t_last = *times.last().expect("nonempty");
        // a single query time is integrated from the start of the modelled range
        let grid_times = if times.len() > 1 {
            times.clone()
        } else if t_last > t_min {
            crate::fom::linspace(t_min, t_last, CONSEQUENCE_SAMPLES)
        } else {
            vec![t_last]
        };
        let full = model.reconstruct_trajectory(a.mu, &grid_times)?;
        let cf = analysis::consequences(&full, model.p0)?;
        let one = |v: &nalgebra::DVector<f64>| nalgebra::DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        save_snapshots(&field_set(&model, vec![cf.at_time], a.mu, one(&cf.impulse))?, out.join("impulse.manifest"))?;
        save_snapshots(
            &field_set(&model, vec![cf.at_time], a.mu, one(&cf.peak_overpressure))?,
            out.join("peak_overpressure.manifest"),
        )?;
        let g = &model.grid;
        let rows = (0..g.n_cells()).map(|k| {
            let (x, y) = g.cell_center(k % g.nx, k / g.nx);
            vec![
                k.to_string(),
                x.to_string(),
                y.to_string(),
                format!("{:e}", cf.impulse[k]),
                format!("{:e}", cf.peak_overpressure[k]),
            ]
        });
        write_atomic(out.join("consequences.csv"), csv_text(&CONSEQUENCE_HEADER, rows).as_bytes())?;
        let _ = writeln!(
            report,
            "consequences at t = {}: max impulse {:e} Pa s, max peak overpressure {:e} Pa",
            cf.at_time,
            cf.impulse.max(),
            cf.peak_overpressure.max()
        );
    }
    Ok(report)
}

fn summary_csv(report: &analysis::ErrorReport) -> String {
    let rows = Norm::ALL.iter().map(|&n| {
        let m = report.mean(n);
        let mut row = vec![n.tag().to_string(), report.for_norm(n).count().to_string()];
        row.extend(m.iter().map(|v| format!("{v:e}")));
        row
    });
    csv_text(&SUMMARY_HEADER, rows)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<String> {
    let cfg = resolve(&a.common)?;
    let model_path = a.model.clone().unwrap_or_else(|| cfg.paths.model.clone());
    let dataset = a.dataset.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.out.clone());
    let model = load_model(&model_path)?;
    let set = load_snapshots(&dataset)?;

    // the training dataset is scored on its held-out test split; any other
    // dataset on every snapshot inside the modelled time range
    let prov = &model.provenance;
    let (cols, which) = if prov.dataset_digest == set.digest() {
        (split_samples(&set, prov.split_fractions, prov.seed)?.test, "test split")
    } else {
        let (lo, hi) = (model.partition.start(), model.partition.end());
        let all = (0..set.n_samples())
            .filter(|&c| (lo..=hi).contains(&set.column_time(c)))
            .collect::<Vec<_>>();
        (all, "all in-range snapshots")
    };
    let report = analysis::evaluate_columns(&model, &set, &cols)?;
    write_atomic(out.join("errors.csv"), report.csv().as_bytes())?;
    write_atomic(out.join("error_summary.csv"), summary_csv(&report).as_bytes())?;
    let m = report.mean(Norm::L2);
    Ok(format!(
        "evaluated {} columns ({which})\nmean L2: eps_pod {:e} eps_ae {:e} eps_nn {:e} eps_poddl {:e}\nwrote {}\n",
        cols.len(),
        m[0],
        m[1],
        m[2],
        m[3],
        out.join("errors.csv").display()
    ))
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<String> {
    let cfg = resolve(&a.common)?;
    let dataset = a.dataset.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.out.clone());
    let var = match a.vary {
        Vary::Modes => SweepVar::Modes,
        Vary::Latent => SweepVar::Latent,
    };
    let file = out.join(format!("sweep_{}.csv", var.tag()));
    if a.dry_run {
        return Ok(dry_run_report(&cfg, &[&file]));
    }
    let set = load_snapshots(&dataset)?;
    let split = split_samples(&set, cfg.split_fractions(), cfg.seed)?;
    let partition = cfg.partition_for(&set)?;
    let base = cfg.offline_config();
    let rows = match var {
        SweepVar::Modes => analysis::sweep_rank(&set, &split, &partition, &cfg.sweep.modes, cfg.ae.latent, &base)?,
        SweepVar::Latent => {
            let n = cfg
                .pod
                .modes
                .ok_or_else(|| Error::Config("sweep --vary n needs a fixed pod.modes".into()))?;
            analysis::sweep_latent(&set, &split, &partition, n, &cfg.sweep.latent, &base)?
        }
    };
    write_atomic(&file, analysis::sweep_csv(&rows).as_bytes())?;
    let failed = rows.iter().filter(|r| r.status != "ok").count() / Norm::ALL.len();
    Ok(format!(
        "wrote {} ({} configurations, {failed} failed)\n",
        file.display(),
        rows.len() / Norm::ALL.len()
    ))
}
