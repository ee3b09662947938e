//! Error measures, blast consequence fields and parameter sweeps.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{assemble_matrix, select_columns, SampleSplit, SnapshotSet};
use crate::error::{Error, Result};
use crate::fom::Trajectory;
use crate::io::csv_text;
use crate::partition::TimePartition;
use crate::pipeline::{train_offline, OfflineConfig, RomModel, Stages};
use crate::pod::{compute_pod, RankRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];

    pub fn tag(self) -> &'static str {
        match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
            Norm::Linf => "Linf",
        }
    }

    pub fn of(self, v: &DVector<f64>) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.norm(),
            Norm::Linf => v.amax(),
        }
    }

    fn index(self) -> usize {
        match self {
            Norm::L1 => 0,
            Norm::L2 => 1,
            Norm::Linf => 2,
        }
    }
}

/// `||u - v|| / ||u||`.
pub fn relative_error(u: &DVector<f64>, v: &DVector<f64>, norm: Norm) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: v.len(),
        });
    }
    let den = norm.of(u);
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference vector has zero norm".into()));
    }
    Ok(norm.of(&(u - v)) / den)
}

/// One row of an error table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub t: f64,
    pub mu: f64,
    pub norm: Norm,
    pub eps_pod: f64,
    pub eps_ae: f64,
    pub eps_nn: f64,
    pub eps_poddl: f64,
}

/// The four relative errors of one snapshot. The POD, autoencoder and
/// regression errors are normalised by the reconstruction they start from.
pub fn decompose(u_h: &DVector<f64>, stages: &Stages, t: f64, mu: f64, norm: Norm) -> Result<ErrorRecord> {
    Ok(ErrorRecord {
        t,
        mu,
        norm,
        eps_pod: relative_error(u_h, &stages.pod, norm)?,
        eps_ae: relative_error(&stages.pod, &stages.ae, norm)?,
        eps_nn: relative_error(&stages.ae, &stages.poddl, norm)?,
        eps_poddl: relative_error(u_h, &stages.poddl, norm)?,
    })
}

pub fn error_decomposition(model: &RomModel, u_h: &DVector<f64>, t: f64, mu: f64, norm: Norm) -> Result<ErrorRecord> {
    decompose(u_h, &model.stages(u_h, t, mu)?, t, mu, norm)
}

/// Absolute distances `(|u - u_pod|, |u_pod - u_ae|, |u_ae - u_poddl|, |u - u_poddl|)`.
pub fn absolute_errors(u_h: &DVector<f64>, s: &Stages, norm: Norm) -> (f64, f64, f64, f64) {
    (
        norm.of(&(u_h - &s.pod)),
        norm.of(&(&s.pod - &s.ae)),
        norm.of(&(&s.ae - &s.poddl)),
        norm.of(&(u_h - &s.poddl)),
    )
}

pub const ERROR_HEADER: [&str; 7] = ["t", "mu", "norm", "eps_pod", "eps_ae", "eps_nn", "eps_poddl"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorReport {
    pub records: Vec<ErrorRecord>,
}

impl ErrorReport {
    pub fn csv(&self) -> String {
        csv_text(
            &ERROR_HEADER,
            self.records.iter().map(|r| {
                vec![
                    r.t.to_string(),
                    r.mu.to_string(),
                    r.norm.tag().to_string(),
                    format!("{:e}", r.eps_pod),
                    format!("{:e}", r.eps_ae),
                    format!("{:e}", r.eps_nn),
                    format!("{:e}", r.eps_poddl),
                ]
            }),
        )
    }

    pub fn for_norm(&self, norm: Norm) -> impl Iterator<Item = &ErrorRecord> {
        self.records.iter().filter(move |r| r.norm == norm)
    }

    /// Mean of each component over the records of `norm`:
    /// `[eps_pod, eps_ae, eps_nn, eps_poddl]`.
    pub fn mean(&self, norm: Norm) -> [f64; 4] {
        let mut acc = [0.0; 4];
        let mut n = 0usize;
        for r in self.for_norm(norm) {
            acc[0] += r.eps_pod;
            acc[1] += r.eps_ae;
            acc[2] += r.eps_nn;
            acc[3] += r.eps_poddl;
            n += 1;
        }
        acc.map(|a| if n == 0 { f64::NAN } else { a / n as f64 })
    }
}

/// Error decomposition of every column in `cols`, in all three norms.
pub fn evaluate_columns(model: &RomModel, set: &SnapshotSet, cols: &[usize]) -> Result<ErrorReport> {
    let mut records = Vec::with_capacity(3 * cols.len());
    for &c in cols {
        let u_h = set.snapshot(c).into_owned();
        let (t, mu) = (set.column_time(c), set.column_param(c));
        let stages = model.stages(&u_h, t, mu)?;
        for norm in Norm::ALL {
            records.push(decompose(&u_h, &stages, t, mu, norm)?);
        }
    }
    Ok(ErrorReport { records })
}

/// Root-sum-square and root-mean-square of an error curve sampled in time.
pub fn time_l2(values: &[f64]) -> (f64, f64) {
    let ss: f64 = values.iter().map(|v| v * v).sum();
    let n = values.len().max(1) as f64;
    (ss.sqrt(), (ss / n).sqrt())
}

/// `|u_h - u_rom| / mean(u_h)` cell by cell.
pub fn field_relative_error(u_h: &DVector<f64>, u_rom: &DVector<f64>) -> Result<DVector<f64>> {
    if u_h.len() != u_rom.len() {
        return Err(Error::Dimension {
            expected: u_h.len(),
            got: u_rom.len(),
        });
    }
    let mean = u_h.mean();
    if mean == 0.0 || !mean.is_finite() {
        return Err(Error::InvalidArgument("reference field has zero mean".into()));
    }
    Ok((u_h - u_rom).map(|d| d.abs() / mean))
}

fn check_trajectory(times: &[f64], fields: &DMatrix<f64>) -> Result<()> {
    if fields.ncols() != times.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: fields.ncols(),
        });
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("times must be strictly increasing".into()));
    }
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("trajectory holds non-finite values".into()));
    }
    Ok(())
}

/// Cumulative impulse `int (p - p0)_+ dt` per cell (rows) at every sample
/// (columns), trapezoidal on the sampled instants, zero at `times[0]`.
pub fn impulse(times: &[f64], fields: &DMatrix<f64>, p0: f64) -> Result<DMatrix<f64>> {
    check_trajectory(times, fields)?;
    let mut out = DMatrix::zeros(fields.nrows(), fields.ncols());
    for c in 1..fields.ncols() {
        let dt = times[c] - times[c - 1];
        for r in 0..fields.nrows() {
            let a = (fields[(r, c - 1)] - p0).max(0.0);
            let b = (fields[(r, c)] - p0).max(0.0);
            out[(r, c)] = out[(r, c - 1)] + 0.5 * dt * (a + b);
        }
    }
    Ok(out)
}

/// Running maximum of `(p - p0)_+` per cell over the sampled instants.
pub fn peak_overpressure(times: &[f64], fields: &DMatrix<f64>, p0: f64) -> Result<DMatrix<f64>> {
    check_trajectory(times, fields)?;
    let mut out = DMatrix::zeros(fields.nrows(), fields.ncols());
    for r in 0..fields.nrows() {
        let mut m: f64 = 0.0;
        for c in 0..fields.ncols() {
            m = m.max(fields[(r, c)] - p0);
            out[(r, c)] = m;
        }
    }
    Ok(out)
}

/// Impulse and peak overpressure at the last instant of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsequenceField {
    pub impulse: DVector<f64>,
    pub peak_overpressure: DVector<f64>,
    pub at_time: f64,
}

pub fn consequences(tr: &Trajectory, p0: f64) -> Result<ConsequenceField> {
    let last = tr
        .times
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    Ok(ConsequenceField {
        impulse: impulse(&tr.times, &tr.fields, p0)?.column(last).into_owned(),
        peak_overpressure: peak_overpressure(&tr.times, &tr.fields, p0)?.column(last).into_owned(),
        at_time: tr.times[last],
    })
}

/// Mean relative projection errors of a piecewise POD basis built from the
/// training columns, evaluated on `cols`; indexed by [`Norm::ALL`] order.
pub fn piecewise_pod_errors(
    set: &SnapshotSet,
    split: &SampleSplit,
    partition: &TimePartition,
    n_modes: usize,
    cols: &[usize],
) -> Result<[f64; 3]> {
    let mut acc = [0.0; 3];
    let mut count = 0usize;
    for j in 0..partition.n_intervals() {
        let window = partition.window(j);
        let eval = select_columns(set, window, cols);
        if eval.is_empty() {
            continue;
        }
        let train = assemble_matrix(set, window, &split.train).map_err(|e| e.in_interval(j))?;
        let basis = compute_pod(&train.data, RankRule::Fixed(n_modes)).map_err(|e| e.in_interval(j))?;
        for &c in &eval {
            let u = set.snapshot(c).into_owned();
            let p = basis.project_onto_span(&u)?;
            for norm in Norm::ALL {
                acc[norm.index()] += relative_error(&u, &p, norm)?;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no columns to evaluate".into()));
    }
    Ok(acc.map(|a| a / count as f64))
}

/// Which dimension a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Modes,
    Latent,
}

impl SweepVar {
    pub fn tag(self) -> &'static str {
        match self {
            SweepVar::Modes => "N",
            SweepVar::Latent => "n",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub vary: SweepVar,
    pub n_modes: usize,
    pub n_latent: usize,
    pub norm: Norm,
    /// `ok`, or the failure message of this configuration.
    pub status: String,
    pub eps_pod_train: f64,
    /// Test-set means.
    pub eps_pod: f64,
    pub eps_ae: f64,
    pub eps_nn: f64,
    pub eps_poddl: f64,
}

pub const SWEEP_HEADER: [&str; 10] = [
    "vary",
    "N",
    "n",
    "norm",
    "status",
    "eps_pod_train",
    "eps_pod",
    "eps_ae",
    "eps_nn",
    "eps_poddl",
];

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    csv_text(
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                r.vary.tag().to_string(),
                r.n_modes.to_string(),
                r.n_latent.to_string(),
                r.norm.tag().to_string(),
                r.status.replace([',', '\n'], ";"),
                format!("{:e}", r.eps_pod_train),
                format!("{:e}", r.eps_pod),
                format!("{:e}", r.eps_ae),
                format!("{:e}", r.eps_nn),
                format!("{:e}", r.eps_poddl),
            ]
        }),
    )
}

fn sweep_one(
    set: &SnapshotSet,
    split: &SampleSplit,
    partition: &TimePartition,
    vary: SweepVar,
    n_modes: usize,
    n_latent: usize,
    base: &OfflineConfig,
) -> Vec<SweepRow> {
    let run = || -> Result<([f64; 3], ErrorReport)> {
        let pod_train = piecewise_pod_errors(set, split, partition, n_modes, &split.train)?;
        let cfg = OfflineConfig {
            rank: RankRule::Fixed(n_modes),
            latent: n_latent,
            ..base.clone()
        };
        let model = train_offline(set, split, partition, &cfg)?.model;
        Ok((pod_train, evaluate_columns(&model, set, &split.test)?))
    };
    let outcome = run();
    Norm::ALL
        .iter()
        .map(|&norm| match &outcome {
            Ok((pod_train, report)) => {
                let m = report.mean(norm);
                SweepRow {
                    vary,
                    n_modes,
                    n_latent,
                    norm,
                    status: "ok".into(),
                    eps_pod_train: pod_train[norm.index()],
                    eps_pod: m[0],
                    eps_ae: m[1],
                    eps_nn: m[2],
                    eps_poddl: m[3],
                }
            }
            Err(e) => SweepRow {
                vary,
                n_modes,
                n_latent,
                norm,
                status: e.to_string(),
                eps_pod_train: f64::NAN,
                eps_pod: f64::NAN,
                eps_ae: f64::NAN,
                eps_nn: f64::NAN,
                eps_poddl: f64::NAN,
            },
        })
        .collect()
}

/// Train and evaluate one model per `N` in `n_list` with latent size
/// `n_fixed`. Failures are recorded in the `status` column.
pub fn sweep_rank(
    set: &SnapshotSet,
    split: &SampleSplit,
    partition: &TimePartition,
    n_list: &[usize],
    n_fixed: usize,
    base: &OfflineConfig,
) -> Result<Vec<SweepRow>> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("empty list of ranks".into()));
    }
    Ok(n_list
        .iter()
        .flat_map(|&n| sweep_one(set, split, partition, SweepVar::Modes, n, n_fixed, base))
        .collect())
}

/// Train and evaluate one model per latent size in `latent_list` with `N`
/// fixed.
pub fn sweep_latent(
    set: &SnapshotSet,
    split: &SampleSplit,
    partition: &TimePartition,
    n_modes: usize,
    latent_list: &[usize],
    base: &OfflineConfig,
) -> Result<Vec<SweepRow>> {
    if latent_list.is_empty() {
        return Err(Error::InvalidArgument("empty list of latent sizes".into()));
    }
    Ok(latent_list
        .iter()
        .flat_map(|&n| sweep_one(set, split, partition, SweepVar::Latent, n_modes, n, base))
        .collect())
}
