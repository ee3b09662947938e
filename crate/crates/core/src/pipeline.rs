//! Offline training of one reduced model per time interval, the online
//! evaluation chain, and the model file.
//!
//! Offline, for each interval: POD of the training snapshots, scaling of the
//! coefficients, autoencoder, scaling of the latent codes, regressor from
//! `(t, mu)` to the scaled latent code. Online, the chain runs backwards:
//!
//! ```text
//! (t, mu) -> regressor -> invert latent scaling -> decoder
//!         -> invert coefficient scaling -> V u_N
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::autoencoder::{self, Autoencoder};
use crate::container::Container;
use crate::dataset::{assemble_matrix, GridMeta, Obstacle, SampleSplit, SnapshotSet};
use crate::error::{Error, Result};
use crate::fom::Trajectory;
use crate::io::write_atomic;
use crate::neural::{Activation, DenseNetwork, TrainConfig, TrainHistory};
use crate::partition::TimePartition;
use crate::pod::{compute_pod, PodBasis, RankRule};
use crate::regressor::{self, Regressor};
use crate::scaling::{fit_coeff_scaler, fit_latent_scaler, CoeffScaler, MinMaxScaler, ScalerMode};

pub const MODEL_MAGIC: &str = "poddl-model";
pub const MODEL_VERSION: (u32, u32) = (1, 0);

/// Everything the offline stage needs besides data, split and partition.
///
/// The `seed` fields of `ae` and `regressor` are ignored: every network gets
/// its own initialisation and shuffling seed derived from `seed` and the
/// interval index.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineConfig {
    pub rank: RankRule,
    pub latent: usize,
    pub levels: usize,
    /// Negative-side slope of the autoencoder's leaky ReLU.
    pub leaky_alpha: f64,
    /// Hidden layers and neurons per layer of the regressor.
    pub regressor_hidden: (usize, usize),
    pub ae: TrainConfig,
    pub regressor: TrainConfig,
    pub seed: u64,
    pub split_fractions: (f64, f64, f64),
    /// Train intervals concurrently. Results do not depend on this flag.
    pub parallel: bool,
}

impl OfflineConfig {
    /// Published settings: `N = 200`, `n = 20`, seven width levels.
    pub fn reference(seed: u64) -> Self {
        Self {
            rank: RankRule::Fixed(200),
            latent: 20,
            levels: autoencoder::DEFAULT_LEVELS,
            leaky_alpha: autoencoder::LEAKY_ALPHA,
            regressor_hidden: (regressor::HIDDEN_LAYERS, regressor::HIDDEN_WIDTH),
            ae: autoencoder::reference_train_config(seed),
            regressor: regressor::reference_train_config(seed),
            seed,
            split_fractions: (0.75, 0.15, 0.10),
            parallel: false,
        }
    }

    fn canonical(&self, partition: &TimePartition) -> String {
        let rank = match self.rank {
            RankRule::Fixed(n) => format!("fixed:{n}"),
            RankRule::Energy(e) => format!("energy:{e:?}"),
        };
        let net = |c: &TrainConfig| {
            format!(
                "{:?},{},{},{},{:?},{:?},{:?}",
                c.learning_rate, c.batch_size, c.max_epochs, c.patience, c.beta1, c.beta2, c.eps_adam
            )
        };
        format!(
            "rank={rank};latent={};levels={};alpha={:?};hidden={:?};ae={};reg={};seed={};split={:?};boundaries={:?}",
            self.latent,
            self.levels,
            self.leaky_alpha,
            self.regressor_hidden,
            net(&self.ae),
            net(&self.regressor),
            self.seed,
            self.split_fractions,
            partition.boundaries()
        )
    }

    /// Hash of every setting that influences the trained model.
    pub fn hash(&self, partition: &TimePartition) -> String {
        hex::encode(Sha256::digest(self.canonical(partition).as_bytes()))
    }
}

/// splitmix64 finaliser over `(seed, interval, role)`.
pub fn derive_seed(seed: u64, interval: usize, role: u64) -> u64 {
    let mut z = seed
        .wrapping_add((interval as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(role.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBundle {
    pub basis: PodBasis,
    pub coeff_scaler: CoeffScaler,
    pub autoencoder: Autoencoder,
    pub latent_scaler: MinMaxScaler,
    pub regressor: Regressor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub dataset_digest: String,
    pub config_hash: String,
    pub seed: u64,
    pub split_fractions: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    pub partition: TimePartition,
    pub bundles: Vec<IntervalBundle>,
    pub provenance: Provenance,
    pub grid: GridMeta,
    pub p0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalHistory {
    pub autoencoder: TrainHistory,
    pub regressor: TrainHistory,
    pub n_train: usize,
    pub n_val: usize,
}

#[derive(Debug, Clone)]
pub struct OfflineResult {
    pub model: RomModel,
    pub histories: Vec<IntervalHistory>,
}

/// Intermediate reconstructions of one snapshot.
#[derive(Debug, Clone)]
pub struct Stages {
    pub interval: usize,
    /// `V V^T u_h`.
    pub pod: DVector<f64>,
    /// POD coefficients passed through the scaled autoencoder.
    pub ae: DVector<f64>,
    /// Full online prediction.
    pub poddl: DVector<f64>,
}

fn time_param_inputs(set: &SnapshotSet, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(2, cols.len(), |r, c| {
        if r == 0 {
            set.column_time(cols[c])
        } else {
            set.column_param(cols[c])
        }
    })
}

fn train_interval(
    set: &SnapshotSet,
    split: &SampleSplit,
    partition: &TimePartition,
    cfg: &OfflineConfig,
    j: usize,
) -> Result<(IntervalBundle, IntervalHistory)> {
    let window = partition.window(j);
    // 1. snapshots of this interval
    let train = assemble_matrix(set, window, &split.train)?;
    let val = assemble_matrix(set, window, &split.val)?;
    // 2. basis from training columns only
    let basis = compute_pod(&train.data, cfg.rank)?;
    // 3-4. coefficients, scaled with training statistics
    let u_train = basis.project_matrix(&train.data)?;
    let u_val = basis.project_matrix(&val.data)?;
    let coeff_scaler = fit_coeff_scaler(&u_train)?;
    let s_train = coeff_scaler.apply(&u_train)?;
    let s_val = coeff_scaler.apply(&u_val)?;
    // 5. autoencoder
    let mut ae = autoencoder::build_autoencoder_with(
        basis.n_modes(),
        cfg.latent,
        cfg.levels,
        cfg.leaky_alpha,
        derive_seed(cfg.seed, j, 1),
    )?;
    let ae_cfg = TrainConfig {
        seed: derive_seed(cfg.seed, j, 2),
        ..cfg.ae
    };
    let ae_hist = autoencoder::train_autoencoder(&mut ae, &s_train, &s_val, &ae_cfg)?;
    // 6-7. latent codes, jointly scaled
    let z_train = ae.encode_matrix(&s_train)?;
    let z_val = ae.encode_matrix(&s_val)?;
    let latent_scaler = fit_latent_scaler(&z_train)?;
    let zs_train = latent_scaler.apply_matrix(&z_train);
    let zs_val = latent_scaler.apply_matrix(&z_val);
    // 8. regressor (t, mu) -> scaled latent
    let mut reg = regressor::build_regressor_with(
        2,
        cfg.latent,
        cfg.regressor_hidden.0,
        cfg.regressor_hidden.1,
        derive_seed(cfg.seed, j, 3),
    )?;
    let reg_cfg = TrainConfig {
        seed: derive_seed(cfg.seed, j, 4),
        ..cfg.regressor
    };
    let reg_hist = regressor::train_regressor(
        &mut reg,
        &time_param_inputs(set, &train.columns),
        &zs_train,
        &time_param_inputs(set, &val.columns),
        &zs_val,
        &reg_cfg,
    )?;
    Ok((
        IntervalBundle {
            basis,
            coeff_scaler,
            autoencoder: ae,
            latent_scaler,
            regressor: reg,
        },
        IntervalHistory {
            autoencoder: ae_hist,
            regressor: reg_hist,
            n_train: train.columns.len(),
            n_val: val.columns.len(),
        },
    ))
}

/// Train one bundle per interval of `partition`.
pub fn train_offline(
    set: &SnapshotSet,
    split: &SampleSplit,
    partition: &TimePartition,
    cfg: &OfflineConfig,
) -> Result<OfflineResult> {
    let run = |j: usize| train_interval(set, split, partition, cfg, j).map_err(|e| e.in_interval(j));
    let results: Vec<(IntervalBundle, IntervalHistory)> = if cfg.parallel {
        (0..partition.n_intervals()).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..partition.n_intervals()).map(run).collect::<Result<_>>()?
    };
    let (bundles, histories) = results.into_iter().unzip();
    let model = RomModel {
        partition: partition.clone(),
        bundles,
        provenance: Provenance {
            dataset_digest: set.digest(),
            config_hash: cfg.hash(partition),
            seed: cfg.seed,
            split_fractions: cfg.split_fractions,
        },
        grid: set.grid().clone(),
        p0: set.p0(),
    };
    model.check_chain()?;
    Ok(OfflineResult { model, histories })
}

impl IntervalBundle {
    /// Online chain for one query.
    pub fn evaluate(&self, t: f64, mu: f64) -> Result<DVector<f64>> {
        let zs = self.regressor.predict_latent(t, &[mu])?;
        let z = zs.map(|v| self.latent_scaler.invert(v));
        let s = self.autoencoder.decode(&z)?;
        let u = self.coeff_scaler.invert_vector(&s)?;
        self.basis.reconstruct(&u)
    }

    /// `u_h` through projection, coefficient scaling and the autoencoder.
    pub fn autoencode(&self, u_h: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.basis.project(u_h)?;
        let s = self.coeff_scaler.apply_vector(&u)?;
        let s_ae = self.autoencoder.decode(&self.autoencoder.encode(&s)?)?;
        self.basis.reconstruct(&self.coeff_scaler.invert_vector(&s_ae)?)
    }
}

impl RomModel {
    pub fn n_intervals(&self) -> usize {
        self.bundles.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.grid.n_cells()
    }

    /// Dimensions agree along basis, autoencoder and regressor of every bundle.
    pub fn check_chain(&self) -> Result<()> {
        if self.bundles.len() != self.partition.n_intervals() {
            return Err(Error::Shape(format!(
                "{} bundles for {} intervals",
                self.bundles.len(),
                self.partition.n_intervals()
            )));
        }
        for (j, b) in self.bundles.iter().enumerate() {
            let ok = b.basis.n_dofs() == self.n_dofs()
                && b.autoencoder.n_full() == b.basis.n_modes()
                && b.regressor.n_latent() == b.autoencoder.n_latent()
                && b.regressor.d_in() == 2;
            if !ok {
                return Err(Error::Shape(format!(
                    "interval {j}: basis {}x{}, autoencoder {}->{}, regressor {}->{}",
                    b.basis.n_dofs(),
                    b.basis.n_modes(),
                    b.autoencoder.n_full(),
                    b.autoencoder.n_latent(),
                    b.regressor.d_in(),
                    b.regressor.n_latent()
                )));
            }
        }
        Ok(())
    }

    /// Interval used for `t` and the predicted field.
    pub fn evaluate_with_interval(&self, t: f64, mu: f64) -> Result<(usize, DVector<f64>)> {
        let j = self.partition.locate_interval(t)?;
        Ok((j, self.bundles[j].evaluate(t, mu)?))
    }

    pub fn evaluate_online(&self, t: f64, mu: f64) -> Result<DVector<f64>> {
        Ok(self.evaluate_with_interval(t, mu)?.1)
    }

    pub fn reconstruct_trajectory(&self, mu: f64, times: &[f64]) -> Result<Trajectory> {
        let mut fields = DMatrix::zeros(self.n_dofs(), times.len());
        for (c, &t) in times.iter().enumerate() {
            fields.set_column(c, &self.evaluate_online(t, mu)?);
        }
        Ok(Trajectory {
            times: times.to_vec(),
            fields,
            mu,
        })
    }

    pub fn stages(&self, u_h: &DVector<f64>, t: f64, mu: f64) -> Result<Stages> {
        let j = self.partition.locate_interval(t)?;
        let b = &self.bundles[j];
        Ok(Stages {
            interval: j,
            pod: b.basis.project_onto_span(u_h)?,
            ae: b.autoencode(u_h)?,
            poddl: b.evaluate(t, mu)?,
        })
    }

    /// Source positions spanned by the training inputs of interval 0.
    pub fn training_param_range(&self) -> Option<(f64, f64)> {
        let s = self.bundles.first()?.regressor.input_scalers()?;
        s.get(1).map(|m| (m.lo, m.hi))
    }
}

// ---- model file -------------------------------------------------------------

fn net_to_container(c: &mut Container, prefix: &str, net: &DenseNetwork) {
    c.set(
        format!("{prefix}.activations"),
        net.activations().iter().map(|a| a.tag()).collect::<Vec<_>>().join(", "),
    );
    for (k, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        c.put(format!("{prefix}.{k}.w"), w.clone());
        c.put(format!("{prefix}.{k}.b"), DMatrix::from_column_slice(1, b.len(), b.as_slice()));
    }
}

fn net_from_container(c: &Container, prefix: &str) -> Result<DenseNetwork> {
    let tags: Vec<String> = c.parse_list(&format!("{prefix}.activations"))?;
    let acts = tags
        .iter()
        .map(|t| Activation::parse_tag(t).ok_or_else(|| Error::ModelFormat(format!("unknown activation `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for k in 0..acts.len() {
        weights.push(c.section(&format!("{prefix}.{k}.w"))?.clone());
        let b = c.section(&format!("{prefix}.{k}.b"))?;
        biases.push(DVector::from_iterator(b.len(), b.iter().copied()));
    }
    DenseNetwork::from_parts(weights, biases, acts)
}

fn scaler_to_container(c: &mut Container, name: &str, s: &MinMaxScaler) {
    c.set(format!("{name}.mode"), s.mode.tag());
    c.put(name.to_string(), DMatrix::from_row_slice(1, 2, &[s.lo, s.hi]));
}

fn scaler_from_container(c: &Container, name: &str) -> Result<MinMaxScaler> {
    let tag = c.get(&format!("{name}.mode"))?;
    let mode = ScalerMode::from_tag(tag).ok_or_else(|| Error::ModelFormat(format!("unknown scaler mode `{tag}`")))?;
    let m = c.section(name)?;
    if m.len() != 2 {
        return Err(Error::ModelFormat(format!("scaler `{name}` needs two values")));
    }
    Ok(MinMaxScaler {
        lo: m[0],
        hi: m[1],
        mode,
    })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn model_container(model: &RomModel) -> Container {
    let mut c = Container::new();
    let p = &model.provenance;
    c.set("dataset_digest", &p.dataset_digest);
    c.set("config_hash", &p.config_hash);
    c.set("seed", p.seed);
    c.set(
        "split",
        join(&[p.split_fractions.0, p.split_fractions.1, p.split_fractions.2]),
    );
    let g = &model.grid;
    c.set("grid", format!("{}, {}, {}, {}, {}, {}", g.nx, g.ny, g.dx, g.dy, g.origin.0, g.origin.1));
    c.set(
        "obstacle",
        match g.obstacle {
            Some(o) => format!("{}, {}, {}, {}", o.i0, o.i1, o.j0, o.j1),
            None => "none".into(),
        },
    );
    c.set("p0", model.p0);
    c.set("boundaries", join(model.partition.boundaries()));
    for (j, b) in model.bundles.iter().enumerate() {
        c.set(
            format!("{j}.pod.energy_tol"),
            b.basis.energy_tol().map_or("none".into(), |e| e.to_string()),
        );
        c.put(format!("{j}.pod.modes"), b.basis.modes().clone());
        c.put(format!("{j}.pod.sigma"), DMatrix::from_row_slice(1, b.basis.sigma().len(), b.basis.sigma()));
        scaler_to_container(&mut c, &format!("{j}.coeff.first"), &b.coeff_scaler.first);
        scaler_to_container(&mut c, &format!("{j}.coeff.rest"), &b.coeff_scaler.rest);
        net_to_container(&mut c, &format!("{j}.encoder"), b.autoencoder.encoder());
        net_to_container(&mut c, &format!("{j}.decoder"), b.autoencoder.decoder());
        scaler_to_container(&mut c, &format!("{j}.latent"), &b.latent_scaler);
        let inputs = b.regressor.input_scalers().expect("trained regressor");
        for (k, s) in inputs.iter().enumerate() {
            scaler_to_container(&mut c, &format!("{j}.input.{k}"), s);
        }
        net_to_container(&mut c, &format!("{j}.regressor"), b.regressor.net());
    }
    c
}

pub fn model_bytes(model: &RomModel) -> Vec<u8> {
    model_container(model).to_bytes(MODEL_MAGIC, MODEL_VERSION)
}

/// Write the model atomically; a failed write leaves no partial file.
pub fn save_model(model: &RomModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &model_bytes(model))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<RomModel> {
    let c = Container::from_bytes(bytes, MODEL_MAGIC, MODEL_VERSION.0)?;
    let split: Vec<f64> = c.parse_list("split")?;
    let grid: Vec<f64> = c.parse_list("grid")?;
    if split.len() != 3 || grid.len() != 6 {
        return Err(Error::ModelFormat("`split` needs 3 values and `grid` 6".into()));
    }
    let obstacle = match c.get("obstacle")? {
        "none" => None,
        _ => {
            let o: Vec<usize> = c.parse_list("obstacle")?;
            if o.len() != 4 {
                return Err(Error::ModelFormat("`obstacle` needs 4 values".into()));
            }
            Some(Obstacle {
                i0: o[0],
                i1: o[1],
                j0: o[2],
                j1: o[3],
            })
        }
    };
    let grid = GridMeta {
        nx: grid[0] as usize,
        ny: grid[1] as usize,
        dx: grid[2],
        dy: grid[3],
        origin: (grid[4], grid[5]),
        obstacle,
    };
    let partition = TimePartition::new(c.parse_list("boundaries")?)?;
    let mut bundles = Vec::new();
    for j in 0..partition.n_intervals() {
        let energy_tol = match c.get(&format!("{j}.pod.energy_tol"))? {
            "none" => None,
            _ => Some(c.parse::<f64>(&format!("{j}.pod.energy_tol"))?),
        };
        let basis = PodBasis::from_parts(
            c.section(&format!("{j}.pod.modes"))?.clone(),
            c.section(&format!("{j}.pod.sigma"))?.iter().copied().collect(),
            energy_tol,
        );
        let coeff_scaler = CoeffScaler {
            first: scaler_from_container(&c, &format!("{j}.coeff.first"))?,
            rest: scaler_from_container(&c, &format!("{j}.coeff.rest"))?,
        };
        let autoencoder = Autoencoder::from_parts(
            net_from_container(&c, &format!("{j}.encoder"))?,
            net_from_container(&c, &format!("{j}.decoder"))?,
        )?;
        let latent_scaler = scaler_from_container(&c, &format!("{j}.latent"))?;
        let net = net_from_container(&c, &format!("{j}.regressor"))?;
        let inputs = (0..net.input_dim())
            .map(|k| scaler_from_container(&c, &format!("{j}.input.{k}")))
            .collect::<Result<Vec<_>>>()?;
        bundles.push(IntervalBundle {
            basis,
            coeff_scaler,
            autoencoder,
            latent_scaler,
            regressor: Regressor::from_parts(net, inputs)?,
        });
    }
    let model = RomModel {
        partition,
        bundles,
        provenance: Provenance {
            dataset_digest: c.get("dataset_digest")?.to_string(),
            config_hash: c.get("config_hash")?.to_string(),
            seed: c.parse("seed")?,
            split_fractions: (split[0], split[1], split[2]),
        },
        grid,
        p0: c.parse("p0")?,
    };
    model.check_chain()?;
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RomModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

/// SHA-256 of the serialised model.
pub fn model_digest(model: &RomModel) -> String {
    hex::encode(Sha256::digest(model_bytes(model)))
}
