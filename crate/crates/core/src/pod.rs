//! Proper orthogonal decomposition of a snapshot matrix.
//!
//! The basis is the leading left singular vectors of the raw (not
//! mean-centred) snapshot matrix. Rank is either fixed or chosen as the
//! smallest `N` whose relative tail energy `sum_{i>N} s_i^2 / sum s_i^2` is at
//! most `eps`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    Fixed(usize),
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    sigma: Vec<f64>,
    energy_tol: Option<f64>,
}

/// Number of singular values above `RANK_TOLERANCE * sigma[0]`.
pub fn numerical_rank(sigma: &[f64]) -> usize {
    match sigma.first() {
        Some(&s1) if s1 > 0.0 => sigma.iter().take_while(|&&s| s > RANK_TOLERANCE * s1).count(),
        _ => 0,
    }
}

/// `sum_{i > n} sigma_i^2`, accumulated from the small end.
pub fn tail_energy(sigma: &[f64], n: usize) -> f64 {
    sigma.iter().skip(n).rev().map(|s| s * s).sum()
}

/// Smallest `N` whose relative tail energy is at most `eps`.
pub fn select_rank(sigma: &[f64], eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("energy tolerance {eps} not in (0, 1)")));
    }
    let total = tail_energy(sigma, 0);
    if total <= 0.0 {
        return Err(Error::InvalidArgument("all singular values are zero".into()));
    }
    // tails[n] = sum_{i >= n} sigma_i^2
    let mut tails = vec![0.0; sigma.len() + 1];
    for i in (0..sigma.len()).rev() {
        tails[i] = tails[i + 1] + sigma[i] * sigma[i];
    }
    Ok((1..=sigma.len())
        .find(|&n| tails[n] / total <= eps)
        .unwrap_or(sigma.len()))
}

pub fn compute_pod(s: &DMatrix<f64>, rule: RankRule) -> Result<PodBasis> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("empty snapshot matrix".into()));
    }
    if let Some(k) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            column: k / s.nrows(),
            row: k % s.nrows(),
        });
    }
    let svd = SVD::new(s.clone(), true, false);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let r = numerical_rank(&sigma);
    let (n, energy_tol) = match rule {
        RankRule::Fixed(n) => {
            if n == 0 {
                return Err(Error::InvalidArgument("rank must be at least 1".into()));
            }
            if n > r {
                return Err(Error::RankTooLarge { requested: n, rank: r });
            }
            (n, None)
        }
        RankRule::Energy(eps) => (select_rank(&sigma, eps)?.min(r.max(1)), Some(eps)),
    };
    let u = svd.u.expect("left singular vectors requested");
    Ok(PodBasis {
        modes: u.columns(0, n).into_owned(),
        sigma,
        energy_tol,
    })
}

impl PodBasis {
    /// Assemble a basis from given orthonormal columns (used by fixtures and
    /// the model loader).
    pub fn from_parts(modes: DMatrix<f64>, sigma: Vec<f64>, energy_tol: Option<f64>) -> Self {
        Self {
            modes,
            sigma,
            energy_tol,
        }
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn energy_tol(&self) -> Option<f64> {
        self.energy_tol
    }

    /// Retained rank `N`.
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_dofs(&self) -> usize {
        self.modes.nrows()
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.sigma)
    }

    /// Keep only the first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::RankTooLarge {
                requested: n,
                rank: self.n_modes(),
            });
        }
        Ok(Self {
            modes: self.modes.columns(0, n).into_owned(),
            sigma: self.sigma.clone(),
            energy_tol: None,
        })
    }

    /// Reduced coefficients `V^T u`.
    pub fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.n_dofs() {
            return Err(Error::Dimension {
                expected: self.n_dofs(),
                got: u.len(),
            });
        }
        Ok(self.modes.tr_mul(u))
    }

    /// `V u_N`.
    pub fn reconstruct(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.n_modes() {
            return Err(Error::Dimension {
                expected: self.n_modes(),
                got: coeffs.len(),
            });
        }
        Ok(&self.modes * coeffs)
    }

    pub fn project_matrix(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if s.nrows() != self.n_dofs() {
            return Err(Error::Dimension {
                expected: self.n_dofs(),
                got: s.nrows(),
            });
        }
        Ok(self.modes.tr_mul(s))
    }

    pub fn reconstruct_matrix(&self, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coeffs.nrows() != self.n_modes() {
            return Err(Error::Dimension {
                expected: self.n_modes(),
                got: coeffs.nrows(),
            });
        }
        Ok(&self.modes * coeffs)
    }

    /// Orthogonal projection `V V^T u` onto the span of the modes.
    pub fn project_onto_span(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.reconstruct(&self.project(u)?)
    }
}
