//! The four drift estimators: Lasso (ℓ1), Slope (sorted ℓ1), the
//! truncated MLE (closed-form minimizer of the pseudo-likelihood), and the
//! true MLE (jump-free continuous increments, available in simulation
//! only).
//!
//! Penalized problems are solved by accelerated proximal gradient with a
//! monotonicity guard; the smooth part is exactly quadratic, so the
//! Lipschitz constant `λ_max(Ĉ^η)` is exact and backtracking is a safety
//! net, not the common path.

use ndarray::{Array1, Array2};

use crate::contrast::{empirical_moments, EmpiricalMoments, TruncationConfig};
use crate::error::{Error, Result};
use crate::linalg::{eig_extremes_sym, solve_linear};
use crate::ou::ObservationSet;
use crate::prox::{prox_l1, prox_sorted_l1, sorted_l1_norm, SlopeWeights};
use crate::util::Kahan;

/// Relative rank threshold below which the covariance solve is refused.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when the objective changes by less than this, relative to its
    /// magnitude (floored at 1).
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            rel_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::Config(format!(
                "relative tolerance must be positive and finite, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// Which penalty produced an estimate, with its tuning parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Penalty {
    Lasso(f64),
    Slope(f64),
    None,
}

#[derive(Clone, Debug)]
pub struct DriftEstimate {
    pub a_hat: Array2<f64>,
    pub penalty: Penalty,
    pub iters_used: usize,
    pub final_objective: f64,
    pub kept_fraction: f64,
}

fn flatten(a: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(a.iter().cloned())
}

fn unflatten(v: &Array1<f64>, d: usize) -> Array2<f64> {
    Array2::from_shape_vec((d, d), v.to_vec()).expect("length checked by caller")
}

/// Accelerated proximal gradient on `𝓛(A) + g(A)` with a monotonicity
/// guard: a candidate that raises the objective triggers a plain proximal
/// step from the current iterate with the momentum restarted, doubling the
/// step denominator until the objective decreases.
///
/// `penalty_prox` receives the gradient-step point and the step size `1/L`
/// and must return `argmin ½‖X - point‖² + (1/L)·g(X)`; `penalty_value`
/// evaluates `g` itself.
pub fn fista_minimize(
    moments: &EmpiricalMoments,
    penalty_prox: &dyn Fn(&Array2<f64>, f64) -> Result<Array2<f64>>,
    penalty_value: &dyn Fn(&Array2<f64>) -> Result<f64>,
    cfg: &SolverConfig,
    init: &Array2<f64>,
) -> Result<DriftEstimate> {
    cfg.validate()?;
    let d = moments.dim();
    if init.nrows() != d || init.ncols() != d {
        return Err(Error::Dimension(format!(
            "init is {}x{}, moments are {d}x{d}",
            init.nrows(),
            init.ncols()
        )));
    }
    let composite = |a: &Array2<f64>| -> Result<f64> {
        let v = moments.objective(a)? + penalty_value(a)?;
        if !v.is_finite() {
            return Err(Error::Divergence(
                "composite objective left the finite range".into(),
            ));
        }
        Ok(v)
    };

    let (_, l_max) = eig_extremes_sym(moments.c_hat_eta())?;
    let lipschitz = if l_max > 0.0 { l_max } else { 1.0 };

    let mut a = init.clone();
    let mut obj = composite(&a)?;
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut iters_used = 0;

    for iter in 1..=cfg.max_iters {
        iters_used = iter;
        let grad_y = moments.gradient(&y)?;
        let step_point = &y - &(&grad_y / lipschitz);
        let mut candidate = penalty_prox(&step_point, 1.0 / lipschitz)?;
        let mut cand_obj = composite(&candidate)?;

        if cand_obj > obj {
            // Momentum overshot: restart from the last accepted iterate
            // and fall back to plain proximal descent, shrinking the step
            // until the objective stops increasing.
            let mut local_l = lipschitz;
            let grad_a = moments.gradient(&a)?;
            for _ in 0..60 {
                let point = &a - &(&grad_a / local_l);
                candidate = penalty_prox(&point, 1.0 / local_l)?;
                cand_obj = composite(&candidate)?;
                if cand_obj <= obj {
                    break;
                }
                local_l *= 2.0;
            }
            if cand_obj > obj {
                // No step length makes progress: we are at the minimizer
                // up to floating-point resolution.
                break;
            }
            t = 1.0;
            y = candidate.clone();
            let change = (obj - cand_obj).abs();
            a = candidate;
            let prev = obj;
            obj = cand_obj;
            if change <= cfg.rel_tol * prev.abs().max(1.0) {
                break;
            }
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &candidate + &((&candidate - &a) * ((t - 1.0) / t_next));
        t = t_next;
        let change = (obj - cand_obj).abs();
        let prev = obj;
        a = candidate;
        obj = cand_obj;
        if change <= cfg.rel_tol * prev.abs().max(1.0) {
            break;
        }
    }

    Ok(DriftEstimate {
        a_hat: a,
        penalty: Penalty::None,
        iters_used,
        final_objective: obj,
        kept_fraction: moments.kept_fraction(),
    })
}

/// `argmin 𝓛(A) + λ_L ‖A‖₁`, solved from a zero start.
pub fn lasso(
    obs: &ObservationSet,
    trunc: &TruncationConfig,
    lambda_l: f64,
    cfg: &SolverConfig,
) -> Result<DriftEstimate> {
    if !(lambda_l >= 0.0) || !lambda_l.is_finite() {
        return Err(Error::Domain(format!(
            "Lasso tuning parameter must be finite and nonnegative, got {lambda_l}"
        )));
    }
    let moments = empirical_moments(obs, trunc);
    let d = moments.dim();
    let prox = move |point: &Array2<f64>, step: f64| -> Result<Array2<f64>> {
        let v = flatten(point);
        let out = prox_l1(&v, lambda_l * step)?;
        Ok(unflatten(&out, d))
    };
    let value = move |a: &Array2<f64>| -> Result<f64> {
        Ok(lambda_l * a.iter().map(|x| x.abs()).sum::<f64>())
    };
    let init = Array2::zeros((d, d));
    let mut est = fista_minimize(&moments, &prox, &value, cfg, &init)?;
    est.penalty = Penalty::Lasso(lambda_l);
    Ok(est)
}

/// `argmin 𝓛(A) + λ_S ‖A‖⋆`, solved from a zero start. The sorted-ℓ1
/// weights are `λ_S √(log(2d²/j))`.
pub fn slope(
    obs: &ObservationSet,
    trunc: &TruncationConfig,
    lambda_s: f64,
    cfg: &SolverConfig,
) -> Result<DriftEstimate> {
    if !(lambda_s >= 0.0) || !lambda_s.is_finite() {
        return Err(Error::Domain(format!(
            "Slope tuning parameter must be finite and nonnegative, got {lambda_s}"
        )));
    }
    let moments = empirical_moments(obs, trunc);
    let d = moments.dim();
    let init = Array2::zeros((d, d));
    let mut est = if lambda_s == 0.0 {
        let prox = |point: &Array2<f64>, _step: f64| -> Result<Array2<f64>> { Ok(point.clone()) };
        let value = |_a: &Array2<f64>| -> Result<f64> { Ok(0.0) };
        fista_minimize(&moments, &prox, &value, cfg, &init)?
    } else {
        let weights = SlopeWeights::new(d, lambda_s)?;
        let prox_weights = weights.clone();
        let prox = move |point: &Array2<f64>, step: f64| -> Result<Array2<f64>> {
            let v = flatten(point);
            let out = prox_sorted_l1(&v, &prox_weights.scaled(step))?;
            Ok(unflatten(&out, d))
        };
        let value = move |a: &Array2<f64>| -> Result<f64> { sorted_l1_norm(a, &weights) };
        fista_minimize(&moments, &prox, &value, cfg, &init)?
    };
    est.penalty = Penalty::Slope(lambda_s);
    Ok(est)
}

/// Solves `A Ĉ = -H` for symmetric `Ĉ`, refusing rank-deficient systems.
fn solve_first_order(c: &Array2<f64>, h: &Array2<f64>, context: &str) -> Result<Array2<f64>> {
    let (lo, hi) = eig_extremes_sym(c)?;
    if !(lo > RANK_TOL * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::Numerical(format!(
            "{context} covariance is rank-deficient (λ_min {lo:.3e}, λ_max {hi:.3e}); \
             widen the truncation radii or extend the observation horizon"
        )));
    }
    let neg_ht = h.t().to_owned() * -1.0;
    let a_t = solve_linear(c, &neg_ht)?;
    Ok(a_t.t().to_owned())
}

/// The unpenalized minimizer `Â = -H (Ĉ^η)⁻¹` of the pseudo-likelihood.
pub fn truncated_mle(obs: &ObservationSet, trunc: &TruncationConfig) -> Result<DriftEstimate> {
    let moments = empirical_moments(obs, trunc);
    let a_hat = solve_first_order(moments.c_hat_eta(), moments.h_hat(), "truncated")?;
    let final_objective = moments.objective(&a_hat)?;
    Ok(DriftEstimate {
        a_hat,
        penalty: Penalty::None,
        iters_used: 0,
        final_objective,
        kept_fraction: moments.kept_fraction(),
    })
}

/// The jump-free baseline `Â = -Hᶜ Ĉₙ⁻¹` built from the continuous part
/// of each increment, with no truncation anywhere. Needs the simulation
/// ledger; real data cannot provide it.
pub fn true_mle(obs: &ObservationSet) -> Result<DriftEstimate> {
    let cont = obs.cont_increments().ok_or_else(|| {
        Error::Config(
            "the true MLE needs continuous increments from the simulation ledger".into(),
        )
    })?;
    let untruncated = TruncationConfig::untruncated();
    let moments = empirical_moments(obs, &untruncated);
    let d = obs.dim();
    let n = obs.n_windows();
    let big_t = obs.big_t();

    let mut h_cont = Array2::<f64>::zeros((d, d));
    {
        let mut cells: Vec<Kahan> = (0..d * d).map(|_| Kahan::new()).collect();
        for i in 0..n {
            let x = obs.state(i);
            for r in 0..d {
                let dxc = cont[[i, r]];
                for c in 0..d {
                    cells[r * d + c].add(dxc * x[c]);
                }
            }
        }
        for r in 0..d {
            for c in 0..d {
                h_cont[[r, c]] = cells[r * d + c].value() / big_t;
            }
        }
    }

    let a_hat = solve_first_order(moments.c_hat(), &h_cont, "untruncated")?;
    let final_objective = moments.objective(&a_hat)?;
    Ok(DriftEstimate {
        a_hat,
        penalty: Penalty::None,
        iters_used: 0,
        final_objective,
        kept_fraction: 1.0,
    })
}
