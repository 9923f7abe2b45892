//! Tuning-parameter selection: consecutive-split cross-validation for the
//! penalty levels, the filter-fraction rule for the truncation levels, and
//! the closed-form theoretical choices that need model knowledge (usable
//! only on simulated scenarios).

use crate::contrast::{pseudo_likelihood, TruncationConfig};
use crate::error::{Error, Result};
use crate::estimators::{lasso, slope, DriftEstimate, SolverConfig};
use crate::ou::ObservationSet;

/// Which penalized estimator a tuning step targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyFamily {
    Lasso,
    Slope,
}

#[derive(Clone, Debug)]
pub struct CvConfig {
    /// Fraction of windows in the consecutive training prefix.
    pub train_fraction: f64,
    /// Candidate penalty levels, scanned in the given order.
    pub grid: Vec<f64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            grid: default_grid(),
        }
    }
}

/// 30 logarithmically spaced points spanning `[1e-3, 10]`.
pub fn default_grid() -> Vec<f64> {
    (0..30)
        .map(|k| 10f64.powf(-3.0 + 4.0 * k as f64 / 29.0))
        .collect()
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "training fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("the tuning grid is empty".into()));
        }
        if self.grid.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::Config(
                "tuning grid entries must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// One scored grid point.
#[derive(Clone, Copy, Debug)]
pub struct CvPoint {
    pub lambda: f64,
    pub validation_score: f64,
    pub iters: usize,
}

/// Fits each grid λ on the consecutive training prefix and scores it by
/// the pseudo-likelihood on the validation suffix. Returns the best λ
/// (ties broken toward the smaller value) and the full table in grid
/// order.
pub fn cross_validate(
    obs: &ObservationSet,
    trunc: &TruncationConfig,
    family: PenaltyFamily,
    cfg: &CvConfig,
    solver: &SolverConfig,
) -> Result<(f64, Vec<CvPoint>)> {
    cfg.validate()?;
    let n = obs.n_windows();
    let m = (cfg.train_fraction * n as f64).floor() as usize;
    if m < 1 || m >= n {
        return Err(Error::Domain(format!(
            "split of {n} windows at fraction {} leaves an empty segment",
            cfg.train_fraction
        )));
    }
    let train = obs.prefix(m)?;
    let validation = obs.suffix(m)?;

    let mut table = Vec::with_capacity(cfg.grid.len());
    for &lambda in &cfg.grid {
        let est: DriftEstimate = match family {
            PenaltyFamily::Lasso => lasso(&train, trunc, lambda, solver)?,
            PenaltyFamily::Slope => slope(&train, trunc, lambda, solver)?,
        };
        let score = pseudo_likelihood(&est.a_hat, &validation, trunc)?;
        if !score.is_finite() {
            return Err(Error::Numerical(format!(
                "validation score at lambda {lambda} is not finite"
            )));
        }
        table.push(CvPoint {
            lambda,
            validation_score: score,
            iters: est.iters_used,
        });
    }

    let mut best = table[0];
    for point in &table[1..] {
        if point.validation_score < best.validation_score
            || (point.validation_score == best.validation_score && point.lambda < best.lambda)
        {
            best = *point;
        }
    }
    Ok((best.lambda, table))
}

/// Threshold sitting just above the `(1 - target)`-quantile: with strict
/// `< threshold` filtering, at most `floor(target·n)` values are removed.
fn upper_quantile_threshold(values: &mut [f64], target_fraction: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let k = (target_fraction * n as f64).floor() as usize;
    let v = values[n - 1 - k];
    let nudged = v + 1e-12;
    if nudged > v {
        nudged
    } else {
        // The absolute nudge underflows for large norms; fall back to the
        // next representable scale.
        v * (1.0 + 1e-12)
    }
}

/// The filter-fraction rule: the smallest `b` and `η` whose filters each
/// remove no more than `target_fraction` of the windows (marginally, one
/// filter at a time).
pub fn pick_truncation(obs: &ObservationSet, target_fraction: f64) -> Result<TruncationConfig> {
    if !(target_fraction > 0.0 && target_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "target fraction must lie strictly between 0 and 1, got {target_fraction}"
        )));
    }
    let n = obs.n_windows();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "the quantile rule needs at least 10 windows, got {n}"
        )));
    }
    let d = obs.dim();
    let mut state_norms: Vec<f64> = (0..n)
        .map(|i| obs.state(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut incr_norms: Vec<f64> = (0..n)
        .map(|i| {
            let x = obs.state(i);
            let y = obs.state(i + 1);
            (0..d).map(|c| (y[c] - x[c]) * (y[c] - x[c])).sum::<f64>().sqrt()
        })
        .collect();
    let b = upper_quantile_threshold(&mut state_norms, target_fraction);
    let eta = upper_quantile_threshold(&mut incr_norms, target_fraction);
    TruncationConfig::new(b, eta)
}

/// Tail behavior of the driving noise, with the constants each case needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailClass {
    /// No jumps at all.
    Continuous,
    /// Jump sizes supported inside a ball of radius `a0`.
    BoundedJumps { a0: f64 },
    /// Sub-Weibull jump tails with shape `alpha` and scale constant
    /// `c_alpha`.
    SubWeibull { alpha: f64, c_alpha: f64 },
    /// Only a `p`-th moment of the jump measure, `p ≥ 2`.
    PolyMoment { p: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct TheoryInputs {
    pub tail_class: TailClass,
    /// Growth exponent δ in `n ≤ c_δ T^δ`.
    pub delta_exponent: f64,
    /// The universal constant of the error bounds; never pinned down
    /// numerically, so exposed as a knob (default 1).
    pub c_star: f64,
}

impl TheoryInputs {
    pub fn new(tail_class: TailClass, delta_exponent: f64, c_star: f64) -> Result<Self> {
        match tail_class {
            TailClass::Continuous => {}
            TailClass::BoundedJumps { a0 } => {
                if !(a0 > 0.0) || !a0.is_finite() {
                    return Err(Error::Domain(format!(
                        "jump support radius must be positive, got {a0}"
                    )));
                }
            }
            TailClass::SubWeibull { alpha, c_alpha } => {
                if !(alpha > 0.0) || !alpha.is_finite() || !(c_alpha > 0.0) || !c_alpha.is_finite()
                {
                    return Err(Error::Domain(format!(
                        "sub-Weibull parameters must be positive, got alpha {alpha}, c {c_alpha}"
                    )));
                }
            }
            TailClass::PolyMoment { p } => {
                if !(p >= 2.0) || !p.is_finite() {
                    return Err(Error::Domain(format!(
                        "moment order must be at least 2, got {p}"
                    )));
                }
            }
        }
        if !(delta_exponent > 0.0) || !delta_exponent.is_finite() {
            return Err(Error::Domain(format!(
                "growth exponent must be positive, got {delta_exponent}"
            )));
        }
        if !(c_star > 0.0) || !c_star.is_finite() {
            return Err(Error::Domain(format!(
                "the universal constant must be positive, got {c_star}"
            )));
        }
        Ok(Self {
            tail_class,
            delta_exponent,
            c_star,
        })
    }
}

/// Model quantities the theoretical η needs: a bound on the drift's
/// spectral norm and the largest eigenvalue of `C + ν₂`.
#[derive(Clone, Copy, Debug)]
pub struct ModelBounds {
    pub a0_norm: f64,
    pub lambda_max_c_nu2: f64,
}

impl ModelBounds {
    fn validate(&self) -> Result<()> {
        if !(self.a0_norm >= 0.0) || !self.a0_norm.is_finite() {
            return Err(Error::Domain(format!(
                "drift norm bound must be nonnegative, got {}",
                self.a0_norm
            )));
        }
        if !(self.lambda_max_c_nu2 > 0.0) || !self.lambda_max_c_nu2.is_finite() {
            return Err(Error::Domain(format!(
                "noise eigenvalue bound must be positive, got {}",
                self.lambda_max_c_nu2
            )));
        }
        Ok(())
    }
}

/// The minimal truncation level making the tail of an increment
/// negligible at the stated order, per tail class:
///
/// - continuous: `√(32 δ log(T) d Δₙ e^{2Δₙ‖A₀‖} λ_max(C+ν₂))`
/// - bounded jumps: `√(d δ log T) e^{Δₙ‖A₀‖} (√(32 Δₙ λ_max) ∨ (8/3) a₀ √(δ log T))`
/// - sub-Weibull: `√d e^{Δₙ‖A₀‖} (√(32 δ log(T) λ_max) ∨ 8 δ log(T)^{1+1/α} / (3 c_α^{1/α}))`
/// - p-th moment: `T^{1/p} d^{1/2 - 1/p}`
pub fn theoretical_eta(
    inputs: &TheoryInputs,
    t: f64,
    delta_n: f64,
    d: usize,
    bounds: &ModelBounds,
) -> Result<f64> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "horizon must exceed 1 so log(T) is positive, got {t}"
        )));
    }
    if !(delta_n >= 0.0) || !delta_n.is_finite() {
        return Err(Error::Domain(format!(
            "observation spacing must be nonnegative, got {delta_n}"
        )));
    }
    if d == 0 {
        return Err(Error::Dimension("dimension must be positive".into()));
    }
    bounds.validate()?;
    let delta = inputs.delta_exponent;
    let log_t = t.ln();
    let d_f = d as f64;
    let lam = bounds.lambda_max_c_nu2;
    let decay = (delta_n * bounds.a0_norm).exp();

    let eta = match inputs.tail_class {
        TailClass::Continuous => {
            (32.0 * delta * log_t * d_f * delta_n * decay * decay * lam).sqrt()
        }
        TailClass::BoundedJumps { a0 } => {
            let gaussian = (32.0 * delta_n * lam).sqrt();
            let jump = 8.0 / 3.0 * a0 * (delta * log_t).sqrt();
            (d_f * delta * log_t).sqrt() * decay * gaussian.max(jump)
        }
        TailClass::SubWeibull { alpha, c_alpha } => {
            let gaussian = (32.0 * delta * log_t * lam).sqrt();
            let jump = 8.0 * delta * log_t.powf(1.0 + 1.0 / alpha)
                / (3.0 * c_alpha.powf(1.0 / alpha));
            d_f.sqrt() * decay * gaussian.max(jump)
        }
        TailClass::PolyMoment { p } => t.powf(1.0 / p) * d_f.powf(0.5 - 1.0 / p),
    };
    Ok(eta)
}

/// Model quantities entering `γ(Δₙ)`. The truncated stationary eigenvalue
/// comes from the Monte-Carlo oracle when `b` is finite and from the
/// Lyapunov solution when it is not.
#[derive(Clone, Copy, Debug)]
pub struct GammaInputs {
    pub lambda_max_c_nu2: f64,
    pub lambda_max_cinf_b: f64,
    pub a0_norm: f64,
}

/// `γ(Δₙ) = λ_max(C+ν₂) · (λ_max(C∞(B)) ∨ 1) · e^{Δₙ‖A₀‖}`.
pub fn gamma(inputs: &GammaInputs, delta_n: f64) -> Result<f64> {
    if !(inputs.lambda_max_c_nu2 > 0.0) || !inputs.lambda_max_c_nu2.is_finite() {
        return Err(Error::Domain(format!(
            "noise eigenvalue bound must be positive, got {}",
            inputs.lambda_max_c_nu2
        )));
    }
    if !(inputs.lambda_max_cinf_b >= 0.0) || !inputs.lambda_max_cinf_b.is_finite() {
        return Err(Error::Domain(format!(
            "stationary eigenvalue bound must be nonnegative, got {}",
            inputs.lambda_max_cinf_b
        )));
    }
    if !(inputs.a0_norm >= 0.0) || !inputs.a0_norm.is_finite() {
        return Err(Error::Domain(format!(
            "drift norm bound must be nonnegative, got {}",
            inputs.a0_norm
        )));
    }
    if !(delta_n > 0.0) || !delta_n.is_finite() {
        return Err(Error::Domain(format!(
            "observation spacing must be positive, got {delta_n}"
        )));
    }
    Ok(inputs.lambda_max_c_nu2
        * inputs.lambda_max_cinf_b.max(1.0)
        * (delta_n * inputs.a0_norm).exp())
}

/// The tuning levels of the oracle inequalities, taken with equality:
/// `λ_L = 2c⋆ √(log(2e d²/s) γ(Δₙ)/T)` and `λ_S = 2c⋆ √(γ(Δₙ)/T)`.
pub fn theoretical_lambda(
    family: PenaltyFamily,
    t: f64,
    delta_n: f64,
    d: usize,
    s: usize,
    gamma_inputs: &GammaInputs,
    c_star: f64,
) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {t}"
        )));
    }
    if d == 0 || s < 1 || s > d * d {
        return Err(Error::Domain(format!(
            "sparsity must satisfy 1 <= s <= d², got s = {s} for d = {d}"
        )));
    }
    if !(c_star > 0.0) || !c_star.is_finite() {
        return Err(Error::Domain(format!(
            "the universal constant must be positive, got {c_star}"
        )));
    }
    let g = gamma(gamma_inputs, delta_n)?;
    let value = match family {
        PenaltyFamily::Lasso => {
            let log_term = (2.0 * std::f64::consts::E * (d * d) as f64 / s as f64).ln();
            2.0 * c_star * (log_term * g / t).sqrt()
        }
        PenaltyFamily::Slope => 2.0 * c_star * (g / t).sqrt(),
    };
    Ok(value)
}
