//! Autoencoder compressing scaled POD coefficients to a small latent vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::neural::{self, Activation, DenseNetwork, TrainConfig, TrainHistory};

pub const LEAKY_ALPHA: f64 = 0.01;
pub const DEFAULT_LEVELS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: DenseNetwork,
    decoder: DenseNetwork,
}

/// `levels` widths decreasing linearly from `n_full` to `n_latent`, rounded
/// to the nearest integer with ties going to the larger width.
pub fn width_ladder(n_full: usize, n_latent: usize, levels: usize) -> Result<Vec<usize>> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 width levels, got {levels}")));
    }
    if n_latent == 0 || n_latent > n_full {
        return Err(Error::InvalidArgument(format!(
            "latent dimension {n_latent} must be in 1..={n_full}"
        )));
    }
    let l1 = levels - 1;
    let drop = n_full - n_latent;
    Ok((0..levels)
        .map(|k| (2 * (n_full * l1 - k * drop) + l1) / (2 * l1))
        .collect())
}

/// Training hyperparameters used for the published results.
pub fn reference_train_config(seed: u64) -> TrainConfig {
    TrainConfig::new(1e-4, 32, 10_000, 200, seed)
}

/// Encoder `n_full -> n_latent` and its mirror image. Every layer uses leaky
/// ReLU except the decoder output, which is a sigmoid.
///
/// `n_latent == n_full` is accepted so that capacity checks can build a
/// non-compressing network.
pub fn build_autoencoder(n_full: usize, n_latent: usize, levels: usize, seed: u64) -> Result<Autoencoder> {
    build_autoencoder_with(n_full, n_latent, levels, LEAKY_ALPHA, seed)
}

/// [`build_autoencoder`] with a custom leaky ReLU slope.
pub fn build_autoencoder_with(
    n_full: usize,
    n_latent: usize,
    levels: usize,
    alpha: f64,
    seed: u64,
) -> Result<Autoencoder> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("leaky slope {alpha} must be finite and non-negative")));
    }
    let widths = width_ladder(n_full, n_latent, levels)?;
    let mut all = widths.clone();
    all.extend(widths.iter().rev().skip(1));
    let n = levels - 1;
    let mut acts = vec![Activation::LeakyRelu(alpha); 2 * n];
    acts[2 * n - 1] = Activation::Sigmoid;
    let full = DenseNetwork::he_normal(&all, &acts, seed)?;
    let (encoder, decoder) = full.split_at(n)?;
    Ok(Autoencoder { encoder, decoder })
}

impl Autoencoder {
    pub fn from_parts(encoder: DenseNetwork, decoder: DenseNetwork) -> Result<Self> {
        let mut rev = encoder.widths().to_vec();
        rev.reverse();
        if decoder.widths() != rev.as_slice() {
            return Err(Error::Shape(format!(
                "decoder widths {:?} do not mirror encoder widths {:?}",
                decoder.widths(),
                encoder.widths()
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn encoder(&self) -> &DenseNetwork {
        &self.encoder
    }

    pub fn decoder(&self) -> &DenseNetwork {
        &self.decoder
    }

    pub fn n_full(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn n_latent(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.encoder.forward_vec(u)
    }

    pub fn decode(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.decoder.forward_vec(z)
    }

    pub fn encode_matrix(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encoder.forward(u)
    }

    pub fn decode_matrix(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.decoder.forward(z)
    }

    pub fn reconstruct_matrix(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.decode_matrix(&self.encode_matrix(u)?)
    }
}

/// Self-supervised training on scaled coefficient columns.
pub fn train_autoencoder(
    ae: &mut Autoencoder,
    train: &DMatrix<f64>,
    val: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    let mut full = ae.encoder.stack(&ae.decoder)?;
    let hist = neural::train(&mut full, train, train, val, val, cfg)?;
    let (encoder, decoder) = full.split_at(ae.encoder.n_layers())?;
    *ae = Autoencoder { encoder, decoder };
    Ok(hist)
}
