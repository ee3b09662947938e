//! Regressor mapping `(t, mu)` to the scaled latent vector of one interval.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::neural::{self, Activation, DenseNetwork, TrainConfig, TrainHistory};
use crate::scaling::{MinMaxScaler, ScalerMode};

pub const HIDDEN_LAYERS: usize = 8;
pub const HIDDEN_WIDTH: usize = 50;

/// Training hyperparameters used for the published results.
pub fn reference_train_config(seed: u64) -> TrainConfig {
    TrainConfig::new(1e-4, 32, 5_000, 200, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    net: DenseNetwork,
    /// One per input component; `None` until trained.
    input_scalers: Option<Vec<MinMaxScaler>>,
}

/// `d_in -> 50 x 8 -> n` with sigmoid hidden layers and a linear output.
pub fn build_regressor(d_in: usize, n: usize, seed: u64) -> Result<Regressor> {
    build_regressor_with(d_in, n, HIDDEN_LAYERS, HIDDEN_WIDTH, seed)
}

/// Same layout with `layers` hidden layers of `width` neurons.
pub fn build_regressor_with(d_in: usize, n: usize, layers: usize, width: usize, seed: u64) -> Result<Regressor> {
    if d_in == 0 || n == 0 || layers == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "regressor dims must be positive, got {d_in} -> {width} x {layers} -> {n}"
        )));
    }
    let mut widths = vec![d_in];
    widths.extend(std::iter::repeat_n(width, layers));
    widths.push(n);
    let mut acts = vec![Activation::Sigmoid; layers];
    acts.push(Activation::Linear);
    Ok(Regressor {
        net: DenseNetwork::he_normal(&widths, &acts, seed)?,
        input_scalers: None,
    })
}

impl Regressor {
    pub fn from_parts(net: DenseNetwork, input_scalers: Vec<MinMaxScaler>) -> Result<Self> {
        if input_scalers.len() != net.input_dim() {
            return Err(Error::Dimension {
                expected: net.input_dim(),
                got: input_scalers.len(),
            });
        }
        Ok(Self {
            net,
            input_scalers: Some(input_scalers),
        })
    }

    pub fn net(&self) -> &DenseNetwork {
        &self.net
    }

    pub fn input_scalers(&self) -> Option<&[MinMaxScaler]> {
        self.input_scalers.as_deref()
    }

    pub fn d_in(&self) -> usize {
        self.net.input_dim()
    }

    pub fn n_latent(&self) -> usize {
        self.net.output_dim()
    }

    fn scale_inputs(scalers: &[MinMaxScaler], x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| scalers[r].apply(x[(r, c)]))
    }

    /// Scaled latent predictions for input columns `(t, mu_1, ..)`.
    pub fn predict_matrix(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let scalers = self
            .input_scalers
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("regressor has not been trained".into()))?;
        if inputs.nrows() != self.d_in() {
            return Err(Error::Dimension {
                expected: self.d_in(),
                got: inputs.nrows(),
            });
        }
        self.net.forward(&Self::scale_inputs(scalers, inputs))
    }

    pub fn predict_latent(&self, t: f64, mu: &[f64]) -> Result<DVector<f64>> {
        let mut x = Vec::with_capacity(1 + mu.len());
        x.push(t);
        x.extend_from_slice(mu);
        let m = DMatrix::from_column_slice(x.len(), 1, &x);
        Ok(self.predict_matrix(&m)?.column(0).into_owned())
    }
}

/// Fit the input scalers on the training inputs, then train the network.
pub fn train_regressor(
    r: &mut Regressor,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    val_inputs: &DMatrix<f64>,
    val_targets: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if inputs.nrows() != r.d_in() || val_inputs.nrows() != r.d_in() {
        return Err(Error::Dimension {
            expected: r.d_in(),
            got: inputs.nrows(),
        });
    }
    let scalers = inputs
        .row_iter()
        .map(|row| MinMaxScaler::fit(row.iter(), ScalerMode::Input))
        .collect::<Result<Vec<_>>>()?;
    let x = Regressor::scale_inputs(&scalers, inputs);
    let xv = Regressor::scale_inputs(&scalers, val_inputs);
    let hist = neural::train(&mut r.net, &x, targets, &xv, val_targets, cfg)?;
    r.input_scalers = Some(scalers);
    Ok(hist)
}
