//! The driving noise: Brownian motion plus square-integrable
//! compound-Poisson jumps.
//!
//! An increment over `dt` is `Σ √dt G + Σ_{k<=K} J_k` with `G` standard
//! normal, `K ~ Poisson(intensity dt)`, and each jump vector `J_k` filled
//! with i.i.d. draws from the scalar jump law. Both jump laws in scope are
//! centered and have finite variance, so the noise is a square-integrable
//! martingale with Gaussian part `C = Σ Σᵀ` and jump second moment
//! `ν₂ = intensity · Var(scalar) · I`.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Scalar law of one jump-vector component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JumpKind {
    /// No jump part at all.
    None,
    /// Centered Laplace with the given scale; variance `2 scale²`.
    Laplace { scale: f64 },
    /// Pareto magnitude (index `alpha`, lower cutoff `x_min`) with a
    /// symmetric random sign; variance `x_min² alpha / (alpha - 2)`.
    SymmetricPareto { alpha: f64, x_min: f64 },
}

/// Compound-Poisson jump specification: scalar law plus arrival intensity.
/// Components of each jump vector are i.i.d. from the scalar law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpSpec {
    pub kind: JumpKind,
    pub intensity: f64,
}

impl JumpSpec {
    pub fn new(kind: JumpKind, intensity: f64) -> Result<Self> {
        if !intensity.is_finite() || intensity < 0.0 {
            return Err(Error::Domain(format!(
                "jump intensity must be finite and nonnegative, got {intensity}"
            )));
        }
        match kind {
            JumpKind::None => {
                if intensity != 0.0 {
                    return Err(Error::Domain(
                        "a jump-free specification cannot carry positive intensity".into(),
                    ));
                }
            }
            JumpKind::Laplace { scale } => {
                if !scale.is_finite() || scale <= 0.0 {
                    return Err(Error::Domain(format!(
                        "Laplace scale must be positive, got {scale}"
                    )));
                }
            }
            JumpKind::SymmetricPareto { alpha, x_min } => {
                // alpha > 2 keeps the second moment finite.
                if !alpha.is_finite() || alpha <= 2.0 {
                    return Err(Error::Domain(format!(
                        "Pareto index must exceed 2, got {alpha}"
                    )));
                }
                if !x_min.is_finite() || x_min <= 0.0 {
                    return Err(Error::Domain(format!(
                        "Pareto cutoff must be positive, got {x_min}"
                    )));
                }
            }
        }
        Ok(Self { kind, intensity })
    }

    pub fn none() -> Self {
        Self {
            kind: JumpKind::None,
            intensity: 0.0,
        }
    }

    /// Variance of one scalar jump component.
    pub fn scalar_variance(&self) -> f64 {
        match self.kind {
            JumpKind::None => 0.0,
            JumpKind::Laplace { scale } => 2.0 * scale * scale,
            JumpKind::SymmetricPareto { alpha, x_min } => {
                x_min * x_min * alpha / (alpha - 2.0)
            }
        }
    }

    fn sample_scalar(&self, rng: &mut SimRng) -> f64 {
        match self.kind {
            JumpKind::None => 0.0,
            JumpKind::Laplace { scale } => {
                let negative = rng.gen::<bool>();
                let u: f64 = rng.gen();
                let magnitude = -scale * (1.0 - u).ln();
                if negative {
                    -magnitude
                } else {
                    magnitude
                }
            }
            JumpKind::SymmetricPareto { alpha, x_min } => {
                let negative = rng.gen::<bool>();
                let u: f64 = rng.gen();
                let magnitude = x_min * (1.0 - u).powf(-1.0 / alpha);
                if negative {
                    -magnitude
                } else {
                    magnitude
                }
            }
        }
    }
}

/// Driving noise of the process: Gaussian factor plus jump specification.
#[derive(Clone, Debug)]
pub struct LevyModel {
    sigma: Array2<f64>,
    jumps: JumpSpec,
}

impl LevyModel {
    pub fn new(sigma: Array2<f64>, jumps: JumpSpec) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "Gaussian factor must be square and non-empty, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(
                "Gaussian factor contains a non-finite entry".into(),
            ));
        }
        Ok(Self { sigma, jumps })
    }

    /// Pure Brownian noise with the given factor.
    pub fn brownian(sigma: Array2<f64>) -> Result<Self> {
        Self::new(sigma, JumpSpec::none())
    }

    /// Standard Brownian noise (identity factor) in dimension `d`.
    pub fn standard_brownian(d: usize) -> Result<Self> {
        Self::brownian(Array2::eye(d))
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &Array2<f64> {
        &self.sigma
    }

    pub fn jumps(&self) -> &JumpSpec {
        &self.jumps
    }

    pub fn has_jumps(&self) -> bool {
        !matches!(self.jumps.kind, JumpKind::None) && self.jumps.intensity > 0.0
    }

    /// Gaussian covariance `C = Σ Σᵀ`.
    pub fn cov_brownian(&self) -> Array2<f64> {
        self.sigma.dot(&self.sigma.t())
    }

    /// Jump second-moment matrix `ν₂ = ∫ z zᵀ ν(dz)`. With i.i.d. centered
    /// components this is `intensity · Var(scalar) · I`.
    pub fn nu2_matrix(&self) -> Array2<f64> {
        Array2::eye(self.dim()) * (self.jumps.intensity * self.jumps.scalar_variance())
    }

    /// One noise increment over `dt`: the full increment and its jump part.
    ///
    /// Draw order is fixed (Gaussian vector, Poisson count, then per jump
    /// the per-component sign/magnitude pairs) so a replay with the same
    /// generator state is bit-identical.
    pub fn sample_increment(
        &self,
        dt: f64,
        rng: &mut SimRng,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Domain(format!(
                "increment length must be positive, got {dt}"
            )));
        }
        let d = self.dim();
        let sqrt_dt = dt.sqrt();
        let g = Array1::from_shape_fn(d, |_| {
            let z: f64 = StandardNormal.sample(rng);
            z * sqrt_dt
        });
        let mut total = self.sigma.dot(&g);

        let mut jump_part = Array1::<f64>::zeros(d);
        let rate = self.jumps.intensity * dt;
        if rate > 0.0 {
            let count = Poisson::new(rate)
                .map_err(|_| Error::Domain("invalid Poisson rate".into()))?
                .sample(rng) as usize;
            for _ in 0..count {
                for c in 0..d {
                    jump_part[c] += self.jumps.sample_scalar(rng);
                }
            }
            total += &jump_part;
        }
        Ok((total, jump_part))
    }
}
