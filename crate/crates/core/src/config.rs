//! Run configuration shared by every CLI command.
//!
//! A TOML file with one table per stage. Every table is optional and falls
//! back to the desk settings, but a table that is present must be complete.
//! Unknown keys are rejected and every diagnostic carries a line number.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{GridMeta, Obstacle, SnapshotSet};
use crate::error::{Error, Result};
use crate::fom::FomConfig;
use crate::neural::TrainConfig;
use crate::partition::{auto_partition, TimePartition};
use crate::pipeline::OfflineConfig;
use crate::pod::RankRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub fom: FomSection,
    pub partition: PartitionSection,
    pub pod: PodSection,
    pub ae: AeSection,
    pub regressor: RegressorSection,
    pub training: TrainingSection,
    pub split: SplitSection,
    pub paths: PathsSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FomSection {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: [f64; 2],
    /// `[i0, i1, j0, j1]`, half-open cell ranges. Omit for an open field.
    pub obstacle: Option<[usize; 4]>,
    pub c: f64,
    pub density: f64,
    pub p0: f64,
    pub t_end: f64,
    pub cfl: f64,
    pub bubble_radius: f64,
    pub bubble_overpressure: f64,
    pub n_output_times: usize,
    pub burn_in_fraction: f64,
    pub source_y: f64,
    pub mu_range: [f64; 2],
    /// Sampled source positions: `n_params` evenly spaced over `param_span`.
    pub param_span: [f64; 2],
    pub n_params: usize,
}

/// Explicit `boundaries`, or an automatic split into `intervals` pieces
/// balanced with `n_probe` modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub boundaries: Option<Vec<f64>>,
    pub intervals: Option<usize>,
    pub n_probe: Option<usize>,
}

/// Exactly one of `modes` and `energy_tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodSection {
    pub modes: Option<usize>,
    pub energy_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeSection {
    pub latent: usize,
    pub levels: usize,
    pub leaky_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorSection {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetTraining {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub parallel: bool,
    pub ae: NetTraining,
    pub regressor: NetTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub fractions: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
}

/// Lists swept by `sweep --vary N` and `sweep --vary n`; the other
/// dimension stays at `pod.modes` / `ae.latent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub modes: Vec<usize>,
    pub latent: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

macro_rules! section_defaults {
    ($($t:ty => $f:ident),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                RunConfig::desk().$f
            }
        })*
    };
}
section_defaults!(
    FomSection => fom, PartitionSection => partition, PodSection => pod, AeSection => ae,
    RegressorSection => regressor, TrainingSection => training, SplitSection => split,
    PathsSection => paths, SweepSection => sweep
);

impl RunConfig {
    /// Settings sized for a laptop: a few minutes of training on one core.
    pub fn desk() -> Self {
        let f = FomConfig::desk();
        let o = f.grid.obstacle.expect("desk grid has an obstacle");
        let net = |max_epochs| NetTraining {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs,
            patience: 200,
        };
        Self {
            seed: 1,
            fom: FomSection {
                nx: f.grid.nx,
                ny: f.grid.ny,
                dx: f.grid.dx,
                dy: f.grid.dy,
                origin: [f.grid.origin.0, f.grid.origin.1],
                obstacle: Some([o.i0, o.i1, o.j0, o.j1]),
                c: f.c,
                density: f.density,
                p0: f.p0,
                t_end: f.t_end,
                cfl: f.cfl,
                bubble_radius: f.bubble_radius,
                bubble_overpressure: f.bubble_overpressure,
                n_output_times: f.n_output_times,
                burn_in_fraction: f.burn_in_fraction,
                source_y: f.source_y,
                mu_range: [f.mu_range.0, f.mu_range.1],
                param_span: [50.0, 110.0],
                n_params: 10,
            },
            partition: PartitionSection {
                boundaries: None,
                intervals: Some(4),
                n_probe: Some(8),
            },
            pod: PodSection {
                modes: Some(40),
                energy_tol: None,
            },
            ae: AeSection {
                latent: 8,
                levels: 7,
                leaky_alpha: 0.01,
            },
            regressor: RegressorSection {
                hidden_layers: 8,
                hidden_width: 50,
            },
            training: TrainingSection {
                parallel: false,
                ae: net(3000),
                regressor: net(3000),
            },
            split: SplitSection {
                fractions: [0.75, 0.15, 0.10],
            },
            paths: PathsSection {
                dataset: "out/desk/snapshots.manifest".into(),
                model: "out/desk/model.poddl".into(),
                out: "out/desk".into(),
            },
            sweep: SweepSection {
                modes: vec![8, 16, 24, 40],
                latent: vec![2, 4, 8],
            },
        }
    }

    /// Parse and validate. Errors name the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_at(text, s.start));
            let msg = e.message().trim().to_string();
            match line {
                Some(l) => Error::Config(format!("line {l}: {msg}")),
                None => Error::Config(msg),
            }
        })?;
        cfg.check().map_err(|(section, key, msg)| {
            let at = find_key(text, section, key).unwrap_or(0);
            Error::Config(format!("line {at}: {}: {msg}", qualified(section, key)))
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(section, key, msg)| Error::Config(format!("{}: {msg}", qualified(section, key))))
    }

    fn check(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        if i64::try_from(self.seed).is_err() {
            return Err(("", "seed", format!("{} does not fit a TOML integer", self.seed)));
        }
        let fom = self.fom_config();
        fom.validate().map_err(|e| {
            let msg = match e {
                Error::InvalidArgument(m) => m,
                other => other.to_string(),
            };
            let key = FOM_KEYS.iter().copied().find(|k| msg.starts_with(&format!("{k}:"))).unwrap_or("nx");
            ("fom", key, msg.split_once(": ").map_or(msg.clone(), |(_, m)| m.to_string()))
        })?;
        if self.fom.n_params == 0 {
            return Err(("fom", "n_params", "must be at least 1".into()));
        }
        let [a, b] = self.fom.param_span;
        if !(a <= b) || (self.fom.n_params > 1 && a == b) {
            return Err(("fom", "param_span", format!("[{a}, {b}] does not give distinct positions")));
        }
        if a < self.fom.mu_range[0] || b > self.fom.mu_range[1] {
            return Err(("fom", "param_span", format!("[{a}, {b}] leaves mu_range {:?}", self.fom.mu_range)));
        }

        match (&self.partition.boundaries, self.partition.intervals, self.partition.n_probe) {
            (Some(bs), intervals, None) => {
                if bs.len() < 2 || bs.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(("partition", "boundaries", "need at least two strictly increasing values".into()));
                }
                if intervals.is_some_and(|j| j != bs.len() - 1) {
                    return Err(("partition", "intervals", format!("{} boundaries give {} intervals", bs.len(), bs.len() - 1)));
                }
            }
            (Some(_), _, Some(_)) => {
                return Err(("partition", "n_probe", "only used by automatic partitioning".into()));
            }
            (None, Some(j), Some(p)) => {
                if j == 0 || p == 0 {
                    return Err(("partition", "intervals", "intervals and n_probe must be positive".into()));
                }
            }
            (None, _, _) => {
                return Err(("partition", "intervals", "give either boundaries or intervals and n_probe".into()));
            }
        }

        match (self.pod.modes, self.pod.energy_tol) {
            (Some(0), None) => return Err(("pod", "modes", "must be positive".into())),
            (Some(_), None) => {}
            (None, Some(e)) if e > 0.0 && e < 1.0 => {}
            (None, Some(_)) => return Err(("pod", "energy_tol", "must lie in (0, 1)".into())),
            _ => return Err(("pod", "modes", "give exactly one of modes and energy_tol".into())),
        }
        if let Some(n) = self.pod.modes {
            if self.ae.latent > n {
                return Err(("ae", "latent", format!("latent size {} exceeds pod.modes {n}", self.ae.latent)));
            }
        }
        if self.ae.latent == 0 {
            return Err(("ae", "latent", "must be positive".into()));
        }
        if self.ae.levels < 2 {
            return Err(("ae", "levels", "need at least 2 width levels".into()));
        }
        if !(self.ae.leaky_alpha.is_finite() && self.ae.leaky_alpha >= 0.0) {
            return Err(("ae", "leaky_alpha", "must be finite and non-negative".into()));
        }
        if self.regressor.hidden_layers == 0 || self.regressor.hidden_width == 0 {
            return Err(("regressor", "hidden_layers", "layers and width must be positive".into()));
        }
        for (key, t) in [("ae", &self.training.ae), ("regressor", &self.training.regressor)] {
            TrainConfig::new(t.learning_rate, t.batch_size, t.max_epochs, t.patience, 0)
                .validate()
                .map_err(|e| ("training", key, e.to_string()))?;
        }
        let f = self.split.fractions;
        if f.iter().any(|v| !(*v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(("split", "fractions", format!("{f:?} must be positive and sum to 1")));
        }
        if self.sweep.modes.contains(&0) || self.sweep.latent.contains(&0) {
            return Err(("sweep", "modes", "sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn fom_config(&self) -> FomConfig {
        let f = &self.fom;
        FomConfig {
            grid: GridMeta {
                nx: f.nx,
                ny: f.ny,
                dx: f.dx,
                dy: f.dy,
                origin: (f.origin[0], f.origin[1]),
                obstacle: f.obstacle.map(|[i0, i1, j0, j1]| Obstacle { i0, i1, j0, j1 }),
            },
            c: f.c,
            density: f.density,
            p0: f.p0,
            t_end: f.t_end,
            cfl: f.cfl,
            bubble_radius: f.bubble_radius,
            bubble_overpressure: f.bubble_overpressure,
            n_output_times: f.n_output_times,
            burn_in_fraction: f.burn_in_fraction,
            source_y: f.source_y,
            mu_range: (f.mu_range[0], f.mu_range[1]),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let [a, b] = self.fom.param_span;
        crate::fom::linspace(a, b, self.fom.n_params)
    }

    pub fn rank_rule(&self) -> RankRule {
        match (self.pod.modes, self.pod.energy_tol) {
            (Some(n), _) => RankRule::Fixed(n),
            (None, Some(e)) => RankRule::Energy(e),
            (None, None) => unreachable!("validated config names a rank rule"),
        }
    }

    pub fn offline_config(&self) -> OfflineConfig {
        let net = |t: &NetTraining| TrainConfig::new(t.learning_rate, t.batch_size, t.max_epochs, t.patience, self.seed);
        let [a, b, c] = self.split.fractions;
        OfflineConfig {
            rank: self.rank_rule(),
            latent: self.ae.latent,
            levels: self.ae.levels,
            leaky_alpha: self.ae.leaky_alpha,
            regressor_hidden: (self.regressor.hidden_layers, self.regressor.hidden_width),
            ae: net(&self.training.ae),
            regressor: net(&self.training.regressor),
            seed: self.seed,
            split_fractions: (a, b, c),
            parallel: self.training.parallel,
        }
    }

    pub fn split_fractions(&self) -> (f64, f64, f64) {
        let [a, b, c] = self.split.fractions;
        (a, b, c)
    }

    /// The explicit partition, or the automatic one computed from `set`.
    pub fn partition_for(&self, set: &SnapshotSet) -> Result<TimePartition> {
        match &self.partition.boundaries {
            Some(bs) => TimePartition::new(bs.clone()),
            None => auto_partition(
                set,
                self.partition.intervals.unwrap_or(1),
                self.partition.n_probe.unwrap_or(1),
            ),
        }
    }
}

const FOM_KEYS: [&str; 12] = [
    "cfl",
    "c",
    "density",
    "t_end",
    "n_output_times",
    "burn_in_fraction",
    "bubble_radius",
    "bubble_overpressure",
    "mu_range",
    "obstacle",
    "dx",
    "nx",
];

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// 1-based line of `key = ...` inside `[section]`, or of the section header
/// when the key is absent.
fn find_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        let in_section = current == section || (section == "training" && current.starts_with("training."));
        if in_section {
            let k = line.split('=').next().unwrap_or_default().trim();
            if k == key || current.ends_with(&format!(".{key}")) {
                return Some(i + 1);
            }
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_desk() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::desk());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::desk();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_names_line() {
        let text = "seed = 3\n\n[ae]\nlatent = 4\nlevels = 5\nleaky_alpha = 0.1\nwidth = 3\n";
        let err = RunConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains("line 7"), "{err}");
        assert!(err.contains("width"), "{err}");
    }

    #[test]
    fn incomplete_section_rejected() {
        let err = RunConfig::parse("[ae]\nlatent = 4\n").unwrap_err().to_string();
        assert!(err.contains("levels"), "{err}");
    }

    #[test]
    fn invalid_cfl_names_field_and_line() {
        let mut text = RunConfig::desk().to_toml();
        text = text.replace("cfl = 0.5", "cfl = 1.5");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        let line = text.lines().position(|l| l.starts_with("cfl")).unwrap() + 1;
        assert!(err.contains("fom.cfl"), "{err}");
        assert!(err.contains(&format!("line {line}")), "{err}");
    }

    #[test]
    fn rank_rule_exclusive() {
        let err = RunConfig::parse("[pod]\nmodes = 4\nenergy_tol = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("exactly one"), "{err}");
        let cfg = RunConfig::parse("[pod]\nenergy_tol = 0.01\n").unwrap();
        assert_eq!(cfg.rank_rule(), RankRule::Energy(0.01));
    }

    #[test]
    fn explicit_boundaries() {
        let cfg = RunConfig::parse("[partition]\nboundaries = [0.01, 0.1, 0.5]\n").unwrap();
        assert_eq!(cfg.partition.boundaries.as_deref(), Some(&[0.01, 0.1, 0.5][..]));
        assert!(RunConfig::parse("[partition]\nboundaries = [0.1, 0.1]\n").is_err());
        assert!(RunConfig::parse("[partition]\nboundaries = [0.0, 0.1]\nintervals = 3\n").is_err());
    }

    #[test]
    fn split_must_sum_to_one() {
        let err = RunConfig::parse("[split]\nfractions = [0.5, 0.3, 0.1]\n").unwrap_err().to_string();
        assert!(err.contains("split.fractions"), "{err}");
    }

    #[test]
    fn offline_config_mirrors_sections() {
        let cfg = RunConfig::desk();
        let o = cfg.offline_config();
        assert_eq!(o.rank, RankRule::Fixed(40));
        assert_eq!((o.latent, o.levels, o.regressor_hidden), (8, 7, (8, 50)));
        assert_eq!(o.ae.max_epochs, 3000);
        assert_eq!(cfg.params().len(), 10);
        assert_eq!(cfg.fom_config(), FomConfig::desk());
    }
}
