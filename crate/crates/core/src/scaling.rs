//! Min-max normalisations applied before the networks.
//!
//! POD coefficients use two scalers: the dominant (first) coefficient on its
//! own, and rows `2..N` jointly with a single range. Latent vectors use one
//! joint range over all entries. Statistics come from training columns only.
//! A degenerate range (`hi == lo`) maps everything to 0.5 and inverts to the
//! constant. No clipping is applied to unseen inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerMode {
    FirstCoefficient,
    JointRest,
    JointLatent,
    Input,
}

impl ScalerMode {
    pub fn tag(self) -> &'static str {
        match self {
            ScalerMode::FirstCoefficient => "first",
            ScalerMode::JointRest => "rest",
            ScalerMode::JointLatent => "latent",
            ScalerMode::Input => "input",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "first" => ScalerMode::FirstCoefficient,
            "rest" => ScalerMode::JointRest,
            "latent" => ScalerMode::JointLatent,
            "input" => ScalerMode::Input,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMaxScaler {
    pub lo: f64,
    pub hi: f64,
    pub mode: ScalerMode,
}

impl MinMaxScaler {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>, mode: ScalerMode) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut any = false;
        for &v in values {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value {v} while fitting scaler")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
            any = true;
        }
        if !any {
            return Err(Error::InvalidArgument("cannot fit a scaler on no data".into()));
        }
        Ok(Self { lo, hi, mode })
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi == self.lo
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (x - self.lo) / (self.hi - self.lo)
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            self.lo + y * (self.hi - self.lo)
        }
    }

    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.map(|x| self.apply(x))
    }

    pub fn invert_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.map(|y| self.invert(y))
    }
}

/// Scaler pair for POD coefficient vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffScaler {
    pub first: MinMaxScaler,
    pub rest: MinMaxScaler,
}

/// Fit on an `N x m` matrix of training coefficients (`N >= 2`).
pub fn fit_coeff_scaler(coeffs: &DMatrix<f64>) -> Result<CoeffScaler> {
    if coeffs.ncols() == 0 || coeffs.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "coefficient scaler needs N >= 2 rows and m >= 1 columns, got {}x{}",
            coeffs.nrows(),
            coeffs.ncols()
        )));
    }
    let first = MinMaxScaler::fit(coeffs.row(0).iter(), ScalerMode::FirstCoefficient)?;
    let rest_rows = coeffs.rows(1, coeffs.nrows() - 1);
    let rest = MinMaxScaler::fit(rest_rows.iter(), ScalerMode::JointRest)?;
    Ok(CoeffScaler { first, rest })
}

impl CoeffScaler {
    fn map_matrix(&self, m: &DMatrix<f64>, f: impl Fn(&MinMaxScaler, f64) -> f64) -> Result<DMatrix<f64>> {
        if m.nrows() < 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: m.nrows(),
            });
        }
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
            let s = if r == 0 { &self.first } else { &self.rest };
            f(s, m[(r, c)])
        }))
    }

    pub fn apply(&self, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.map_matrix(coeffs, MinMaxScaler::apply)
    }

    pub fn invert(&self, scaled: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.map_matrix(scaled, MinMaxScaler::invert)
    }

    pub fn apply_vector(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.apply(&DMatrix::from_column_slice(u.len(), 1, u.as_slice()))?.column(0).into_owned())
    }

    pub fn invert_vector(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.invert(&DMatrix::from_column_slice(u.len(), 1, u.as_slice()))?.column(0).into_owned())
    }
}

/// Joint range over every entry of an `n x m` latent matrix.
pub fn fit_latent_scaler(latent: &DMatrix<f64>) -> Result<MinMaxScaler> {
    MinMaxScaler::fit(latent.iter(), ScalerMode::JointLatent)
}
