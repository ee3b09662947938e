//! Dense feed-forward networks with mini-batch Adam training.
//!
//! Batches are matrices whose columns are samples. The loss is the mean
//! squared error over every entry of the batch output; the mean absolute error
//! is logged alongside but never drives stopping.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
    Linear,
}

pub fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => leaky_relu(z, a),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative given the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::LeakyRelu(alpha) => {
                if z >= 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }

    /// Text form used in model files, e.g. `leaky_relu:0.01`.
    pub fn tag(self) -> String {
        match self {
            Activation::LeakyRelu(a) => format!("leaky_relu:{a:?}"),
            Activation::Sigmoid => "sigmoid".into(),
            Activation::Linear => "linear".into(),
        }
    }

    pub fn parse_tag(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "linear" => Some(Activation::Linear),
            _ => {
                let a = s.strip_prefix("leaky_relu:")?.parse::<f64>().ok()?;
                a.is_finite().then_some(Activation::LeakyRelu(a))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    widths: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    activations: Vec<Activation>,
}

/// Pre-activations and outputs of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<DMatrix<f64>>,
    /// `post[0]` is the input; `post[k + 1]` is the output of layer `k`.
    pub post: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("input is always cached")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

impl DenseNetwork {
    /// Zero-initialised network; `activations[k]` follows weight layer `k`.
    pub fn zeros(widths: &[usize], activations: &[Activation]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::Dimension {
                expected: widths.len() - 1,
                got: activations.len(),
            });
        }
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect(),
            biases: widths[1..].iter().map(|&w| DVector::zeros(w)).collect(),
            activations: activations.to_vec(),
        })
    }

    pub fn from_parts(
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() || weights.len() != activations.len() {
            return Err(Error::Shape(format!(
                "{} weight matrices, {} bias vectors, {} activations",
                weights.len(),
                biases.len(),
                activations.len()
            )));
        }
        let mut widths = vec![weights[0].ncols()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != widths[k] || b.len() != w.nrows() || w.nrows() == 0 {
                return Err(Error::Shape(format!(
                    "layer {k}: weights {}x{}, bias {}, incoming width {}",
                    w.nrows(),
                    w.ncols(),
                    b.len(),
                    widths[k]
                )));
            }
            widths.push(w.nrows());
        }
        Ok(Self {
            widths,
            weights,
            biases,
            activations,
        })
    }

    /// He-normal initialisation: weights `N(0, 2 / fan_in)`, zero biases.
    pub fn init_he_normal(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let std = (2.0 / w.ncols() as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            // row-major draw order
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] = dist.sample(&mut rng);
                }
            }
            b.fill(0.0);
        }
    }

    pub fn he_normal(widths: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths, activations)?;
        net.init_he_normal(seed);
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Layers `0..k` and `k..` as two networks.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.n_layers() {
            return Err(Error::InvalidArgument(format!(
                "cannot split a {}-layer network at {k}",
                self.n_layers()
            )));
        }
        let head = Self::from_parts(
            self.weights[..k].to_vec(),
            self.biases[..k].to_vec(),
            self.activations[..k].to_vec(),
        )?;
        let tail = Self::from_parts(
            self.weights[k..].to_vec(),
            self.biases[k..].to_vec(),
            self.activations[k..].to_vec(),
        )?;
        Ok((head, tail))
    }

    /// `other` applied after `self`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if self.output_dim() != other.input_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: other.input_dim(),
            });
        }
        Self::from_parts(
            self.weights.iter().chain(&other.weights).cloned().collect(),
            self.biases.iter().chain(&other.biases).cloned().collect(),
            self.activations.iter().chain(&other.activations).copied().collect(),
        )
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut post = Vec::with_capacity(self.n_layers() + 1);
        post.push(x.clone());
        for k in 0..self.n_layers() {
            let mut z = &self.weights[k] * &post[k];
            for mut col in z.column_iter_mut() {
                col += &self.biases[k];
            }
            let act = self.activations[k];
            let a = z.map(|v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache { pre, post })
    }

    /// Batch forward pass.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for k in 0..self.n_layers() {
            let mut z = &self.weights[k] * &a;
            for mut col in z.column_iter_mut() {
                col += &self.biases[k];
            }
            let act = self.activations[k];
            z.apply(|v| *v = act.apply(*v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        Ok(self.forward(&m)?.column(0).into_owned())
    }

    /// Gradients of the batch MSE with respect to every weight and bias.
    pub fn backward(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Gradients> {
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if y.nrows() != self.output_dim() || y.ncols() != x.ncols() {
            return Err(Error::Shape(format!(
                "targets are {}x{}, expected {}x{}",
                y.nrows(),
                y.ncols(),
                self.output_dim(),
                x.ncols()
            )));
        }
        let cache = self.forward_cached(x)?;
        let scale = 2.0 / (y.len() as f64);
        // dL/da for the output layer
        let mut delta = (cache.output() - y) * scale;
        let n = self.n_layers();
        let mut gw = vec![DMatrix::zeros(0, 0); n];
        let mut gb = vec![DVector::zeros(0); n];
        for k in (0..n).rev() {
            let act = self.activations[k];
            let z = &cache.pre[k];
            let a = &cache.post[k + 1];
            // dL/dz
            delta.zip_zip_apply(z, a, |d, zv, av| *d *= act.derivative(zv, av));
            gw[k] = &delta * cache.post[k].transpose();
            gb[k] = delta.column_sum();
            if k > 0 {
                delta = self.weights[k].tr_mul(&delta);
            }
        }
        Ok(Gradients { weights: gw, biases: gb })
    }

    /// Mean squared and mean absolute error over every entry.
    pub fn errors(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, f64)> {
        let out = self.forward(x)?;
        if out.shape() != y.shape() {
            return Err(Error::Shape(format!("targets {:?} vs outputs {:?}", y.shape(), out.shape())));
        }
        Ok(mse_mae(&out, y))
    }
}

pub fn mse_mae(out: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, f64) {
    let n = out.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, b) in out.iter().zip(y.iter()) {
        let d = a - b;
        se += d * d;
        ae += d.abs();
    }
    (se / n, ae / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
}

impl TrainConfig {
    /// Adam defaults with the given schedule.
    pub fn new(learning_rate: f64, batch_size: usize, max_epochs: usize, patience: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            seed,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("training config: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_adam > 0.0) {
            return bad("Adam constants need 0 <= beta < 1 and eps_adam > 0");
        }
        Ok(())
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNetwork) -> Self {
        let zeros = Gradients {
            weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        };
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps_adam);
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut DenseNetwork, state: &mut AdamState, grads: &Gradients, cfg: &TrainConfig) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    if grads.weights.len() != net.n_layers() || grads.biases.len() != net.n_layers() {
        return Err(Error::Dimension {
            expected: net.n_layers(),
            got: grads.weights.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..net.n_layers() {
        if grads.weights[k].shape() != net.weights[k].shape() || grads.biases[k].len() != net.biases[k].len() {
            return Err(Error::Shape(format!("gradient shape mismatch in layer {k}")));
        }
        adam_update(
            net.weights[k].as_mut_slice(),
            grads.weights[k].as_slice(),
            state.m.weights[k].as_mut_slice(),
            state.v.weights[k].as_mut_slice(),
            cfg,
            c1,
            c2,
        );
        adam_update(
            net.biases[k].as_mut_slice(),
            grads.biases[k].as_slice(),
            state.m.biases[k].as_mut_slice(),
            state.v.biases[k].as_mut_slice(),
            cfg,
            c1,
            c2,
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub train_mae: Vec<f64>,
    pub val_mae: Vec<f64>,
    /// Number of epochs run.
    pub stopped_epoch: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_mse(&self) -> f64 {
        self.val_mse[self.best_epoch - 1]
    }

    pub fn best_train_mse(&self) -> f64 {
        self.train_mse[self.best_epoch - 1]
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.stopped_epoch)
            .map(|e| {
                vec![
                    (e + 1).to_string(),
                    format!("{:e}", self.train_mse[e]),
                    format!("{:e}", self.val_mse[e]),
                    format!("{:e}", self.train_mae[e]),
                    format!("{:e}", self.val_mae[e]),
                ]
            })
            .collect()
    }
}

pub const HISTORY_HEADER: [&str; 5] = ["epoch", "train_mse", "val_mse", "train_mae", "val_mae"];

/// Mini-batch Adam with early stopping on the validation MSE.
///
/// Each epoch reshuffles the training columns from a generator seeded by
/// `(cfg.seed, epoch)`. Training stops once the validation MSE has not
/// strictly improved for `cfg.patience` epochs, and the network is left
/// holding the weights of the best epoch.
pub fn train(
    net: &mut DenseNetwork,
    x_train: &DMatrix<f64>,
    y_train: &DMatrix<f64>,
    x_val: &DMatrix<f64>,
    y_val: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if x_train.ncols() == 0 || x_val.ncols() == 0 {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    for (x, y) in [(x_train, y_train), (x_val, y_val)] {
        if x.nrows() != net.input_dim() || y.nrows() != net.output_dim() || x.ncols() != y.ncols() {
            return Err(Error::Shape(format!(
                "data {}x{} -> {}x{} does not fit network {:?}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols(),
                net.widths()
            )));
        }
    }

    let m = x_train.ncols();
    let mut order: Vec<usize> = (0..m).collect();
    let mut adam = AdamState::new(net);
    let mut hist = TrainHistory::default();
    let mut best = net.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x_train.select_columns(batch);
            let yb = y_train.select_columns(batch);
            let g = net.backward(&xb, &yb)?;
            adam_step(net, &mut adam, &g, cfg).map_err(|e| match e {
                Error::NonFiniteGradient => Error::NonFiniteLoss { epoch },
                other => other,
            })?;
        }
        let (tr_mse, tr_mae) = net.errors(x_train, y_train)?;
        let (va_mse, va_mae) = net.errors(x_val, y_val)?;
        if !(tr_mse.is_finite() && va_mse.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        hist.train_mse.push(tr_mse);
        hist.val_mse.push(va_mse);
        hist.train_mae.push(tr_mae);
        hist.val_mae.push(va_mae);
        hist.stopped_epoch = epoch;
        if va_mse < best_val {
            best_val = va_mse;
            best = net.clone();
            hist.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    *net = best;
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn activation_values() {
        assert_eq!(leaky_relu(1.0, 0.01), 1.0);
        assert_eq!(leaky_relu(-1.0, 0.01), -0.01);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn activation_tags_round_trip() {
        for a in [Activation::LeakyRelu(0.01), Activation::Sigmoid, Activation::Linear] {
            assert_eq!(Activation::parse_tag(&a.tag()), Some(a));
        }
        assert_eq!(Activation::parse_tag("relu"), None);
    }

    #[test]
    fn he_normal_statistics() {
        let net = DenseNetwork::he_normal(&[2, 5000], &[Activation::Linear], 3).unwrap();
        let w = &net.weights()[0];
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 1.0).abs() < 0.05, "std {std}");
        assert!(net.biases()[0].iter().all(|&b| b == 0.0));
        let again = DenseNetwork::he_normal(&[2, 5000], &[Activation::Linear], 3).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn identity_network() {
        let mut net = DenseNetwork::zeros(&[3, 3], &[Activation::Linear]).unwrap();
        net.weights[0] = DMatrix::identity(3, 3);
        let x = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        assert_eq!(net.forward_vec(&x).unwrap(), x);
    }

    #[test]
    fn hand_evaluated_leaky_layer() {
        let mut net = DenseNetwork::zeros(&[1, 1], &[Activation::LeakyRelu(0.01)]).unwrap();
        net.weights[0][(0, 0)] = -1.0;
        let y = net.forward_vec(&DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(y[0], -0.02);
    }

    #[test]
    fn wrong_input_dimension() {
        let net = DenseNetwork::zeros(&[3, 2], &[Activation::Linear]).unwrap();
        assert!(matches!(
            net.forward(&DMatrix::zeros(2, 1)),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
    }

    fn mixed_net(seed: u64) -> DenseNetwork {
        let mut net = DenseNetwork::he_normal(
            &[3, 6, 5, 4, 2],
            &[
                Activation::LeakyRelu(0.01),
                Activation::Sigmoid,
                Activation::LeakyRelu(0.2),
                Activation::Linear,
            ],
            seed,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for b in &mut net.biases {
            b.apply(|x| *x = rng.random_range(-0.5..0.5));
        }
        net
    }

    fn naive_forward(net: &DenseNetwork, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for k in 0..net.n_layers() {
            let w = &net.weights()[k];
            let mut next = vec![0.0; w.nrows()];
            for (r, out) in next.iter_mut().enumerate() {
                let mut z = net.biases()[k][r];
                for (c, ac) in a.iter().enumerate() {
                    z += w[(r, c)] * ac;
                }
                *out = match net.activations()[k] {
                    Activation::LeakyRelu(al) => {
                        if z >= 0.0 {
                            z
                        } else {
                            al * z
                        }
                    }
                    Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                    Activation::Linear => z,
                };
            }
            a = next;
        }
        a
    }

    #[test]
    fn forward_matches_naive_evaluator() {
        let net = mixed_net(5);
        let x = random_matrix(3, 7, 6);
        let y = net.forward(&x).unwrap();
        for c in 0..7 {
            let col: Vec<f64> = x.column(c).iter().copied().collect();
            let expect = naive_forward(&net, &col);
            for r in 0..2 {
                assert!((y[(r, c)] - expect[r]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let net = mixed_net(2);
        let x = random_matrix(3, 4, 9);
        let y = net.forward(&x).unwrap();
        let g = net.backward(&x, &y).unwrap();
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn scalar_linear_gradient() {
        let mut net = DenseNetwork::zeros(&[1, 1], &[Activation::Linear]).unwrap();
        net.weights[0][(0, 0)] = 2.0;
        let g = net
            .backward(&DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 0.0))
            .unwrap();
        assert_eq!(g.weights[0][(0, 0)], 4.0);
    }

    fn loss(net: &DenseNetwork, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        net.errors(x, y).unwrap().0
    }

    fn finite_difference_check(seed: u64) -> f64 {
        let net = mixed_net(seed);
        let x = random_matrix(3, 5, seed + 1);
        let y = random_matrix(2, 5, seed + 2);
        let g = net.backward(&x, &y).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut check = |analytic: f64, perturb: &dyn Fn(&mut DenseNetwork, f64)| {
            let mut plus = net.clone();
            perturb(&mut plus, h);
            let mut minus = net.clone();
            perturb(&mut minus, -h);
            let fd = (loss(&plus, &x, &y) - loss(&minus, &x, &y)) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-5);
            worst = worst.max((analytic - fd).abs() / denom);
        };
        for k in 0..net.n_layers() {
            for i in 0..net.weights[k].len() {
                check(g.weights[k].as_slice()[i], &|n, d| n.weights[k].as_mut_slice()[i] += d);
            }
            for i in 0..net.biases[k].len() {
                check(g.biases[k][i], &|n, d| n.biases[k][i] += d);
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..4 {
            let worst = finite_difference_check(seed * 17);
            assert!(worst <= 1e-4, "seed {seed}: relative error {worst}");
        }
    }

    fn scalar_net(w: f64) -> DenseNetwork {
        let mut net = DenseNetwork::zeros(&[1, 1], &[Activation::Linear]).unwrap();
        net.weights[0][(0, 0)] = w;
        net
    }

    fn scalar_grads(g: f64) -> Gradients {
        Gradients {
            weights: vec![DMatrix::from_element(1, 1, g)],
            biases: vec![DVector::zeros(1)],
        }
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let cfg = TrainConfig::new(1e-4, 32, 10, 5, 0);
        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(&net);
        adam_step(&mut net, &mut st, &scalar_grads(0.5), &cfg).unwrap();
        assert_relative_eq!(net.weights()[0][(0, 0)] - 1.0, -1e-4, max_relative = 1e-6);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let cfg = TrainConfig::new(1e-3, 32, 10, 5, 0);
        let mut net = scalar_net(0.7);
        let mut st = AdamState::new(&net);
        for _ in 0..5 {
            adam_step(&mut net, &mut st, &scalar_grads(0.0), &cfg).unwrap();
        }
        assert_eq!(net.weights()[0][(0, 0)], 0.7);
    }

    #[test]
    fn adam_matches_scalar_oracle_on_quadratic() {
        // f(w) = (w - 3)^2
        let cfg = TrainConfig::new(0.1, 32, 10, 5, 0);
        let mut net = scalar_net(0.0);
        let mut st = AdamState::new(&net);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 2.0 * (net.weights()[0][(0, 0)] - 3.0);
            adam_step(&mut net, &mut st, &scalar_grads(g), &cfg).unwrap();

            let go = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * go;
            v = 0.999 * v + 0.001 * go * go;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((net.weights()[0][(0, 0)] - w).abs() <= 1e-12);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let cfg = TrainConfig::new(1e-3, 32, 10, 5, 0);
        let mut net = scalar_net(0.0);
        let mut st = AdamState::new(&net);
        assert!(matches!(
            adam_step(&mut net, &mut st, &scalar_grads(f64::NAN), &cfg),
            Err(Error::NonFiniteGradient)
        ));
    }

    fn affine_data(m: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = random_matrix(2, m, seed);
        let y = DMatrix::from_fn(1, m, |_, c| 2.0 * x[(0, c)] - x[(1, c)] + 0.5);
        (x, y)
    }

    #[test]
    fn linear_problem_converges() {
        let (x, y) = affine_data(64, 1);
        let (xv, yv) = affine_data(16, 2);
        let mut net = DenseNetwork::he_normal(&[2, 1], &[Activation::Linear], 4).unwrap();
        let cfg = TrainConfig::new(1e-2, 32, 5000, 5000, 7);
        let h = train(&mut net, &x, &y, &xv, &yv, &cfg).unwrap();
        assert!(h.best_train_mse() < 1e-6, "train mse {}", h.best_train_mse());
    }

    #[test]
    fn strictly_improving_runs_to_max_epochs() {
        let (x, y) = affine_data(64, 1);
        let (xv, yv) = affine_data(16, 2);
        let mut net = DenseNetwork::he_normal(&[2, 1], &[Activation::Linear], 4).unwrap();
        let cfg = TrainConfig::new(1e-3, 32, 20, 3, 7);
        let h = train(&mut net, &x, &y, &xv, &yv, &cfg).unwrap();
        assert!(h.val_mse.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(h.stopped_epoch, 20);
        assert_eq!(h.best_epoch, 20);
    }

    #[test]
    fn optimal_network_stops_after_patience() {
        let (x, y) = affine_data(40, 1);
        let (xv, yv) = affine_data(10, 2);
        let mut net = DenseNetwork::zeros(&[2, 1], &[Activation::Linear]).unwrap();
        net.weights[0][(0, 0)] = 2.0;
        net.weights[0][(0, 1)] = -1.0;
        net.biases[0][0] = 0.5;
        let start = net.clone();
        let cfg = TrainConfig::new(1e-3, 8, 1000, 7, 0);
        let h = train(&mut net, &x, &y, &xv, &yv, &cfg).unwrap();
        let expected_stop = 8;
        assert_eq!(h.stopped_epoch, expected_stop);
        assert_eq!(h.best_epoch, 1);
        assert_eq!(h.val_mse.len(), h.stopped_epoch);
        assert_eq!(net, start);
    }

    #[test]
    fn restored_weights_hold_best_validation_loss() {
        let x = random_matrix(3, 48, 11);
        let y = random_matrix(2, 48, 12).map(|v| v.abs());
        let xv = random_matrix(3, 12, 13);
        let yv = random_matrix(2, 12, 14).map(|v| v.abs());
        let mut net = mixed_net(3);
        let cfg = TrainConfig::new(5e-3, 16, 300, 20, 1);
        let h = train(&mut net, &x, &y, &xv, &yv, &cfg).unwrap();
        let min = h.val_mse.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(net.errors(&xv, &yv).unwrap().0, min);
        assert_eq!(h.best_val_mse(), min);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = affine_data(50, 3);
        let (xv, yv) = affine_data(10, 4);
        let run = || {
            let mut net = DenseNetwork::he_normal(&[2, 4, 1], &[Activation::Sigmoid, Activation::Linear], 9).unwrap();
            let h = train(&mut net, &x, &y, &xv, &yv, &TrainConfig::new(1e-2, 8, 50, 10, 5)).unwrap();
            (net, h)
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn split_and_stack_round_trip() {
        let net = mixed_net(1);
        let (a, b) = net.split_at(2).unwrap();
        assert_eq!(a.widths(), &[3, 6, 5]);
        assert_eq!(b.widths(), &[5, 4, 2]);
        assert_eq!(a.stack(&b).unwrap(), net);
        assert!(net.split_at(0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::new(1e-4, 32, 100, 200, 0).validate().is_err());
        assert!(TrainConfig::new(0.0, 32, 100, 10, 0).validate().is_err());
        assert!(TrainConfig::new(1e-4, 32, 10000, 200, 0).validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn gradients_match_finite_differences(seed in 0u64..10_000) {
                let worst = finite_difference_check(seed);
                prop_assert!(worst <= 1e-4, "relative error {}", worst);
            }
        }
    }
}
