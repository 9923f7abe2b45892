//! The statistical objective shared by every estimator: the localized and
//! truncated pseudo-likelihood, its gradient, the truncated empirical
//! covariance matrices, and the empirical prediction norm.
//!
//! A window `i` contributes only when its left state lies in the open ball
//! of radius `b` and (where the increment filter applies) the increment
//! norm is strictly below `eta`.

use ndarray::{Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::ou::ObservationSet;
use crate::rng::SimRng;
use crate::util::Kahan;

/// The two truncation levels. `f64::INFINITY` is the untruncated sentinel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationConfig {
    b_radius: f64,
    eta: f64,
}

impl TruncationConfig {
    pub fn new(b_radius: f64, eta: f64) -> Result<Self> {
        if b_radius.is_nan() || b_radius <= 0.0 {
            return Err(Error::Domain(format!(
                "state radius must be positive, got {b_radius}"
            )));
        }
        if eta.is_nan() || eta <= 0.0 {
            return Err(Error::Domain(format!(
                "increment threshold must be positive, got {eta}"
            )));
        }
        Ok(Self { b_radius, eta })
    }

    /// `b = eta = INFINITY`: every window kept.
    pub fn untruncated() -> Self {
        Self {
            b_radius: f64::INFINITY,
            eta: f64::INFINITY,
        }
    }

    pub fn b_radius(&self) -> f64 {
        self.b_radius
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Truncated empirical moments of one observation set.
///
/// `c_hat` uses the state filter only; `c_hat_eta` and `h_hat` use both
/// filters. All are accumulated with compensated summation.
#[derive(Clone, Debug)]
pub struct EmpiricalMoments {
    c_hat: Array2<f64>,
    c_hat_eta: Array2<f64>,
    h_hat: Array2<f64>,
    kept_fraction: f64,
}

impl EmpiricalMoments {
    /// Assembles moments directly, for synthetic instances. The covariance
    /// arguments must be square, symmetric, and dimension-consistent.
    pub fn from_parts(
        c_hat: Array2<f64>,
        c_hat_eta: Array2<f64>,
        h_hat: Array2<f64>,
        kept_fraction: f64,
    ) -> Result<Self> {
        let d = c_hat.nrows();
        for (name, m) in [("c_hat", &c_hat), ("c_hat_eta", &c_hat_eta), ("h_hat", &h_hat)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension(format!(
                    "{name} must be {d}x{d}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("{name} has a non-finite entry")));
            }
        }
        for (name, m) in [("c_hat", &c_hat), ("c_hat_eta", &c_hat_eta)] {
            for r in 0..d {
                for c in 0..r {
                    if (m[[r, c]] - m[[c, r]]).abs() > 1e-10 {
                        return Err(Error::Domain(format!("{name} is not symmetric")));
                    }
                }
            }
        }
        if !(0.0..=1.0).contains(&kept_fraction) {
            return Err(Error::Domain(format!(
                "kept fraction must lie in [0, 1], got {kept_fraction}"
            )));
        }
        Ok(Self {
            c_hat,
            c_hat_eta,
            h_hat,
            kept_fraction,
        })
    }

    /// `Ĉₙ(B) = (Δₙ/T) Σ X Xᵀ · 1_B(X)`.
    pub fn c_hat(&self) -> &Array2<f64> {
        &self.c_hat
    }

    /// `Ĉ^η = (Δₙ/T) Σ X Xᵀ · 1_B(X) · 1(‖ΔX‖ < η)`.
    pub fn c_hat_eta(&self) -> &Array2<f64> {
        &self.c_hat_eta
    }

    /// `H = (1/T) Σ ΔX Xᵀ · 1_B(X) · 1(‖ΔX‖ < η)`.
    pub fn h_hat(&self) -> &Array2<f64> {
        &self.h_hat
    }

    /// Fraction of windows passing both filters.
    pub fn kept_fraction(&self) -> f64 {
        self.kept_fraction
    }

    pub fn dim(&self) -> usize {
        self.c_hat.nrows()
    }

    /// The pseudo-likelihood in moment form:
    /// `tr(A Hᵀ) + ½ tr(A Ĉ^η Aᵀ)`.
    pub fn objective(&self, a: &Array2<f64>) -> Result<f64> {
        let d = self.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::Dimension(format!(
                "drift argument is {}x{}, moments are {d}x{d}",
                a.nrows(),
                a.ncols()
            )));
        }
        let linear: f64 = a.iter().zip(self.h_hat.iter()).map(|(x, h)| x * h).sum();
        let ac = a.dot(&self.c_hat_eta);
        let quad: f64 = ac.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
        Ok(linear + 0.5 * quad)
    }

    /// Gradient of the moment-form objective: `H + A Ĉ^η`.
    pub fn gradient(&self, a: &Array2<f64>) -> Result<Array2<f64>> {
        let d = self.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::Dimension(format!(
                "drift argument is {}x{}, moments are {d}x{d}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(&self.h_hat + &a.dot(&self.c_hat_eta))
    }
}

fn norm_sq(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum()
}

struct KahanMatrix {
    d: usize,
    cells: Vec<Kahan>,
}

impl KahanMatrix {
    fn new(d: usize) -> Self {
        Self {
            d,
            cells: (0..d * d).map(|_| Kahan::new()).collect(),
        }
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.cells[r * self.d + c].add(v);
    }

    fn into_array(self, scale: f64) -> Array2<f64> {
        Array2::from_shape_fn((self.d, self.d), |(r, c)| {
            self.cells[r * self.d + c].value() * scale
        })
    }
}

/// Accumulates all three truncated moment matrices in one pass.
/// All-filtered data yields zero matrices with `kept_fraction = 0`.
pub fn empirical_moments(obs: &ObservationSet, trunc: &TruncationConfig) -> EmpiricalMoments {
    let d = obs.dim();
    let n = obs.n_windows();
    let b_sq = trunc.b_radius * trunc.b_radius;
    let eta_sq = trunc.eta * trunc.eta;

    let mut c = KahanMatrix::new(d);
    let mut c_eta = KahanMatrix::new(d);
    let mut h = KahanMatrix::new(d);
    let mut kept = 0usize;

    for i in 0..n {
        let x = obs.state(i);
        if !(norm_sq(x) < b_sq) {
            continue;
        }
        for r in 0..d {
            for col in 0..d {
                c.add(r, col, x[r] * x[col]);
            }
        }
        let x_next = obs.state(i + 1);
        let mut dx_sq = 0.0;
        for r in 0..d {
            let diff = x_next[r] - x[r];
            dx_sq += diff * diff;
        }
        if dx_sq < eta_sq {
            kept += 1;
            for r in 0..d {
                let dxr = x_next[r] - x[r];
                for col in 0..d {
                    c_eta.add(r, col, x[r] * x[col]);
                    h.add(r, col, dxr * x[col]);
                }
            }
        }
    }

    let big_t = obs.big_t();
    let cov_scale = obs.delta_n() / big_t;
    EmpiricalMoments {
        c_hat: c.into_array(cov_scale),
        c_hat_eta: c_eta.into_array(cov_scale),
        h_hat: h.into_array(1.0 / big_t),
        kept_fraction: kept as f64 / n as f64,
    }
}

fn check_drift_dim(a: &Array2<f64>, obs: &ObservationSet) -> Result<()> {
    let d = obs.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::Dimension(format!(
            "drift argument is {}x{}, observations are {d}-dimensional",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// The pseudo-likelihood as a direct sum over kept windows:
/// `(1/T) Σ (AX)ᵀΔX + (Δₙ/2T) Σ ‖AX‖²`.
pub fn pseudo_likelihood(
    a: &Array2<f64>,
    obs: &ObservationSet,
    trunc: &TruncationConfig,
) -> Result<f64> {
    check_drift_dim(a, obs)?;
    let d = obs.dim();
    let b_sq = trunc.b_radius * trunc.b_radius;
    let eta_sq = trunc.eta * trunc.eta;
    let mut cross = Kahan::new();
    let mut quad = Kahan::new();
    for i in 0..obs.n_windows() {
        let x = obs.state(i);
        if !(norm_sq(x) < b_sq) {
            continue;
        }
        let x_next = obs.state(i + 1);
        let mut dx_sq = 0.0;
        for r in 0..d {
            let diff = x_next[r] - x[r];
            dx_sq += diff * diff;
        }
        if !(dx_sq < eta_sq) {
            continue;
        }
        let ax = a.dot(&x);
        let mut dot = 0.0;
        let mut ax_sq = 0.0;
        for r in 0..d {
            dot += ax[r] * (x_next[r] - x[r]);
            ax_sq += ax[r] * ax[r];
        }
        cross.add(dot);
        quad.add(ax_sq);
    }
    let big_t = obs.big_t();
    Ok(cross.value() / big_t + obs.delta_n() / (2.0 * big_t) * quad.value())
}

/// Gradient of the pseudo-likelihood: `H + A Ĉ^η`.
pub fn gradient(
    a: &Array2<f64>,
    obs: &ObservationSet,
    trunc: &TruncationConfig,
) -> Result<Array2<f64>> {
    check_drift_dim(a, obs)?;
    empirical_moments(obs, trunc).gradient(a)
}

/// The localized and truncated contrast
/// `R_T(A) = (1/T) Σ ‖ΔX + Δₙ A X‖² · 1_B · 1_η`.
///
/// Expanding the square gives `R_T(A) = 2Δₙ·𝓛(A) + (1/T) Σ ‖ΔX‖²·1_B·1_η`,
/// so both share their minimizer. The contrast vanishes exactly where the
/// increments match the drift response `ΔX = -Δₙ A X` on every kept window.
pub fn contrast_rt(
    a: &Array2<f64>,
    obs: &ObservationSet,
    trunc: &TruncationConfig,
) -> Result<f64> {
    check_drift_dim(a, obs)?;
    let d = obs.dim();
    let b_sq = trunc.b_radius * trunc.b_radius;
    let eta_sq = trunc.eta * trunc.eta;
    let delta_n = obs.delta_n();
    let mut acc = Kahan::new();
    for i in 0..obs.n_windows() {
        let x = obs.state(i);
        if !(norm_sq(x) < b_sq) {
            continue;
        }
        let x_next = obs.state(i + 1);
        let mut dx_sq = 0.0;
        for r in 0..d {
            let diff = x_next[r] - x[r];
            dx_sq += diff * diff;
        }
        if !(dx_sq < eta_sq) {
            continue;
        }
        let ax = a.dot(&x);
        let mut resid_sq = 0.0;
        for r in 0..d {
            let resid = (x_next[r] - x[r]) + delta_n * ax[r];
            resid_sq += resid * resid;
        }
        acc.add(resid_sq);
    }
    Ok(acc.value() / obs.big_t())
}

/// Squared empirical prediction norm `tr(M Ĉ^η Mᵀ)`, equal to the direct
/// sum `(Δₙ/T) Σ ‖MX‖² · 1_B · 1_η`.
pub fn empirical_pred_norm(
    m: &Array2<f64>,
    obs: &ObservationSet,
    trunc: &TruncationConfig,
) -> Result<f64> {
    check_drift_dim(m, obs)?;
    let moments = empirical_moments(obs, trunc);
    let mc = m.dot(moments.c_hat_eta());
    Ok(mc.iter().zip(m.iter()).map(|(x, y)| x * y).sum())
}

/// Monte-Carlo estimate of the truncated stationary covariance
/// `C∞(B) = E[X Xᵀ · 1(‖X‖ < b)]` for `X ~ N(0, C∞)`.
///
/// No closed form exists under truncation; this is the sampling oracle.
/// Draws outside the ball contribute zero, so the estimate shrinks with
/// the radius.
pub fn cinf_truncated_mc(
    cinf: &Array2<f64>,
    b_radius: f64,
    draws: usize,
    rng: &mut SimRng,
) -> Result<Array2<f64>> {
    if b_radius.is_nan() || b_radius <= 0.0 {
        return Err(Error::Domain(format!(
            "state radius must be positive, got {b_radius}"
        )));
    }
    if draws == 0 {
        return Err(Error::Domain("need at least one draw".into()));
    }
    let d = cinf.nrows();
    let root = psd_sqrt(cinf)?;
    let b_sq = b_radius * b_radius;
    let mut acc = KahanMatrix::new(d);
    let mut g = vec![0.0f64; d];
    let mut x = vec![0.0f64; d];
    for _ in 0..draws {
        for gi in g.iter_mut() {
            *gi = StandardNormal.sample(rng);
        }
        let mut x_sq = 0.0;
        for r in 0..d {
            let mut v = 0.0;
            for c in 0..d {
                v += root[[r, c]] * g[c];
            }
            x[r] = v;
            x_sq += v * v;
        }
        if x_sq < b_sq {
            for r in 0..d {
                for c in 0..d {
                    acc.add(r, c, x[r] * x[c]);
                }
            }
        }
    }
    Ok(acc.into_array(1.0 / draws as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    use crate::levy::LevyModel;
    use crate::linalg::{eig_extremes_sym, solve_lyapunov, spectral_norm};
    use crate::ou::{assemble_drift, simulate_euler, stationary_start, subsample, DriftMatrix};
    use crate::rng::stream_rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// A short stationary path with mild jumps, reused across tests.
    fn sample_obs(seed_stream: u64, d: usize, n: usize) -> (DriftMatrix, ObservationSet) {
        use crate::levy::{JumpKind, JumpSpec};
        let positions: Vec<(usize, usize)> = (1..d).map(|i| (i, i - 1)).collect();
        let values: Vec<f64> = (1..d).map(|i| 0.3 * if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let drift = assemble_drift(d, &positions, &values).unwrap();
        let model = LevyModel::new(
            Array2::eye(d),
            JumpSpec::new(JumpKind::Laplace { scale: 1.0 }, 1.0).unwrap(),
        )
        .unwrap();
        let mut rng = stream_rng(33, seed_stream);
        let x0 = stationary_start(&drift, &model, 0.01, &mut rng).unwrap();
        let horizon = n as f64 * 0.1;
        let traj = simulate_euler(&drift, &model, &x0, horizon, 0.01, &mut rng).unwrap();
        let obs = subsample(&traj, n).unwrap();
        (drift, obs)
    }

    fn random_matrix(d: usize, seed_stream: u64) -> Array2<f64> {
        use rand::Rng;
        let mut rng = stream_rng(34, seed_stream);
        Array2::from_shape_fn((d, d), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn truncation_config_validates() {
        assert!(TruncationConfig::new(1.0, 1.0).is_ok());
        assert!(TruncationConfig::new(f64::INFINITY, 1.0).is_ok());
        assert!(TruncationConfig::new(0.0, 1.0).is_err());
        assert!(TruncationConfig::new(1.0, -2.0).is_err());
        assert!(TruncationConfig::new(f64::NAN, 1.0).is_err());
        let un = TruncationConfig::untruncated();
        assert!(un.b_radius().is_infinite() && un.eta().is_infinite());
    }

    #[test]
    fn untruncated_two_window_moments_by_hand() {
        // X₀ = e₁, X₁ = e₂, Δₙ = 1, T = 2.
        let obs = ObservationSet::from_states(
            1.0,
            array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            None,
        )
        .unwrap();
        let m = empirical_moments(&obs, &TruncationConfig::untruncated());
        let half_eye = Array2::<f64>::eye(2) * 0.5;
        for (a, b) in m.c_hat().iter().zip(half_eye.iter()) {
            close(*a, *b, 1e-15);
        }
        for (a, b) in m.c_hat_eta().iter().zip(half_eye.iter()) {
            close(*a, *b, 1e-15);
        }
        // ΔX₀ = (-1, 1), ΔX₁ = (0, -1).
        let h_expected = array![[-0.5, 0.0], [0.5, -0.5]];
        for (a, b) in m.h_hat().iter().zip(h_expected.iter()) {
            close(*a, *b, 1e-15);
        }
        close(m.kept_fraction(), 1.0, 0.0);
    }

    #[test]
    fn tiny_radius_filters_everything() {
        let obs = ObservationSet::from_states(
            1.0,
            array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            None,
        )
        .unwrap();
        let m = empirical_moments(&obs, &TruncationConfig::new(1e-6, 1.0).unwrap());
        assert!(m.c_hat().iter().all(|v| *v == 0.0));
        assert!(m.c_hat_eta().iter().all(|v| *v == 0.0));
        assert!(m.h_hat().iter().all(|v| *v == 0.0));
        close(m.kept_fraction(), 0.0, 0.0);
    }

    #[test]
    fn state_on_the_boundary_is_excluded() {
        // Strict indicator: ‖X₀‖ = 1 is outside the open ball of radius 1.
        let obs = ObservationSet::from_states(
            1.0,
            array![[1.0, 0.0], [0.4, 0.0], [0.2, 0.0]],
            None,
        )
        .unwrap();
        let m = empirical_moments(&obs, &TruncationConfig::new(1.0, f64::INFINITY).unwrap());
        close(m.kept_fraction(), 0.5, 0.0);
        close(m.c_hat()[[0, 0]], 0.5 * 0.4 * 0.4, 1e-16);
        // Increment of window 1 is (-0.2, 0); η = 0.2 excludes it strictly.
        let m2 = empirical_moments(&obs, &TruncationConfig::new(1.0, 0.2).unwrap());
        close(m2.kept_fraction(), 0.0, 0.0);
        // Ĉₙ(B) ignores the increment filter.
        close(m2.c_hat()[[0, 0]], 0.5 * 0.4 * 0.4, 1e-16);
    }

    #[test]
    fn moments_match_naive_loop_recomputation() {
        let (_, obs) = sample_obs(0, 3, 50);
        let trunc = TruncationConfig::new(2.0, 0.8).unwrap();
        let m = empirical_moments(&obs, &trunc);

        let d = 3;
        let n = obs.n_windows();
        let mut c = Array2::<f64>::zeros((d, d));
        let mut c_eta = Array2::<f64>::zeros((d, d));
        let mut h = Array2::<f64>::zeros((d, d));
        let mut kept = 0;
        for i in 0..n {
            let x = obs.state(i).to_owned();
            let dx = &obs.state(i + 1).to_owned() - &x;
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dx_norm = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
            if x_norm < 2.0 {
                for r in 0..d {
                    for col in 0..d {
                        c[[r, col]] += x[r] * x[col];
                    }
                }
                if dx_norm < 0.8 {
                    kept += 1;
                    for r in 0..d {
                        for col in 0..d {
                            c_eta[[r, col]] += x[r] * x[col];
                            h[[r, col]] += dx[r] * x[col];
                        }
                    }
                }
            }
        }
        let big_t = obs.big_t();
        c *= obs.delta_n() / big_t;
        c_eta *= obs.delta_n() / big_t;
        h /= big_t;

        assert!(m.kept_fraction() > 0.0 && m.kept_fraction() < 1.0);
        close(m.kept_fraction(), kept as f64 / n as f64, 1e-15);
        for (a, b) in m.c_hat().iter().zip(c.iter()) {
            close(*a, *b, 1e-14);
        }
        for (a, b) in m.c_hat_eta().iter().zip(c_eta.iter()) {
            close(*a, *b, 1e-14);
        }
        for (a, b) in m.h_hat().iter().zip(h.iter()) {
            close(*a, *b, 1e-14);
        }
    }

    #[test]
    fn likelihood_zero_drift_and_hand_example() {
        let (_, obs) = sample_obs(1, 2, 30);
        let trunc = TruncationConfig::untruncated();
        let zero = Array2::<f64>::zeros((2, 2));
        close(pseudo_likelihood(&zero, &obs, &trunc).unwrap(), 0.0, 0.0);

        // Single window, A = I, X = (1,0), ΔX = (-0.1, 0), Δₙ = T = 1:
        // (AX)ᵀΔX = -0.1, (Δₙ/2T)‖AX‖² = 0.5, total 0.4.
        let one = ObservationSet::from_states(1.0, array![[1.0, 0.0], [0.9, 0.0]], None).unwrap();
        let val = pseudo_likelihood(&Array2::eye(2), &one, &trunc).unwrap();
        close(val, 0.4, 1e-15);
    }

    #[test]
    fn likelihood_matches_moment_form() {
        for seed in 0..5 {
            let (_, obs) = sample_obs(10 + seed, 3, 60);
            let trunc = TruncationConfig::new(2.5, 1.0).unwrap();
            let a = random_matrix(3, seed);
            let direct = pseudo_likelihood(&a, &obs, &trunc).unwrap();
            let m = empirical_moments(&obs, &trunc);
            let via_moments = m.objective(&a).unwrap();
            close(direct, via_moments, 1e-12);
        }
    }

    #[test]
    fn likelihood_rejects_wrong_shape() {
        let (_, obs) = sample_obs(2, 2, 10);
        let bad = Array2::<f64>::zeros((3, 3));
        assert!(pseudo_likelihood(&bad, &obs, &TruncationConfig::untruncated()).is_err());
        assert!(gradient(&bad, &obs, &TruncationConfig::untruncated()).is_err());
        assert!(contrast_rt(&bad, &obs, &TruncationConfig::untruncated()).is_err());
        assert!(empirical_pred_norm(&bad, &obs, &TruncationConfig::untruncated()).is_err());
    }

    #[test]
    fn gradient_at_zero_is_h_hat_and_filtered_data_gives_zero() {
        let (_, obs) = sample_obs(3, 3, 40);
        let trunc = TruncationConfig::new(2.0, 1.0).unwrap();
        let m = empirical_moments(&obs, &trunc);
        let g = gradient(&Array2::zeros((3, 3)), &obs, &trunc).unwrap();
        for (a, b) in g.iter().zip(m.h_hat().iter()) {
            close(*a, *b, 1e-15);
        }
        let all_out = TruncationConfig::new(1e-9, 1e-9).unwrap();
        let g0 = gradient(&random_matrix(3, 40), &obs, &all_out).unwrap();
        assert!(g0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (_, obs) = sample_obs(4, 4, 50);
        let trunc = TruncationConfig::new(3.0, 1.2).unwrap();
        let a = random_matrix(4, 41);
        let g = gradient(&a, &obs, &trunc).unwrap();
        let step = 1e-5;
        for r in 0..4 {
            for c in 0..4 {
                let mut plus = a.clone();
                plus[[r, c]] += step;
                let mut minus = a.clone();
                minus[[r, c]] -= step;
                let fd = (pseudo_likelihood(&plus, &obs, &trunc).unwrap()
                    - pseudo_likelihood(&minus, &obs, &trunc).unwrap())
                    / (2.0 * step);
                close(g[[r, c]], fd, 1e-6);
            }
        }
    }

    #[test]
    fn contrast_at_zero_is_mean_square_increment() {
        let (_, obs) = sample_obs(5, 2, 40);
        let trunc = TruncationConfig::new(2.0, 1.0).unwrap();
        let r0 = contrast_rt(&Array2::zeros((2, 2)), &obs, &trunc).unwrap();
        let b_sq = 4.0;
        let eta_sq = 1.0;
        let mut expected = 0.0;
        for i in 0..obs.n_windows() {
            let x = obs.state(i);
            let dx = &obs.state(i + 1).to_owned() - &x.to_owned();
            let dx_sq: f64 = dx.iter().map(|v| v * v).sum();
            if x.iter().map(|v| v * v).sum::<f64>() < b_sq && dx_sq < eta_sq {
                expected += dx_sq;
            }
        }
        close(r0, expected / obs.big_t(), 1e-13);
    }

    #[test]
    fn contrast_vanishes_on_exact_drift_response() {
        // Build increments that satisfy ΔX = -Δₙ A X on every window.
        let a = array![[0.8, -0.2], [0.1, 0.5]];
        let delta_n = 0.1;
        let mut states = Array2::<f64>::zeros((21, 2));
        let mut x = array![1.0, -0.5];
        for k in 0..21 {
            states.row_mut(k).assign(&x);
            let dx = a.dot(&x) * (-delta_n);
            x = &x + &dx;
        }
        let obs = ObservationSet::from_states(delta_n, states, None).unwrap();
        let r = contrast_rt(&a, &obs, &TruncationConfig::untruncated()).unwrap();
        close(r, 0.0, 1e-28);
    }

    #[test]
    fn contrast_identity_with_likelihood() {
        for seed in 0..5 {
            let (_, obs) = sample_obs(20 + seed, 3, 60);
            let trunc = TruncationConfig::new(2.5, 1.1).unwrap();
            let a = random_matrix(3, 50 + seed);
            let r = contrast_rt(&a, &obs, &trunc).unwrap();
            let l = pseudo_likelihood(&a, &obs, &trunc).unwrap();
            let base = contrast_rt(&Array2::zeros((3, 3)), &obs, &trunc).unwrap();
            close(r, 2.0 * obs.delta_n() * l + base, 1e-12);
        }
    }

    #[test]
    fn pred_norm_routes_agree() {
        let (_, obs) = sample_obs(6, 3, 50);
        let trunc = TruncationConfig::new(2.0, 1.0).unwrap();
        let zero = Array2::<f64>::zeros((3, 3));
        close(empirical_pred_norm(&zero, &obs, &trunc).unwrap(), 0.0, 0.0);

        let m = empirical_moments(&obs, &trunc);
        let eye_val = empirical_pred_norm(&Array2::eye(3), &obs, &trunc).unwrap();
        let trace: f64 = (0..3).map(|i| m.c_hat_eta()[[i, i]]).sum();
        close(eye_val, trace, 1e-14);

        let mat = random_matrix(3, 60);
        let tr_form = empirical_pred_norm(&mat, &obs, &trunc).unwrap();
        let b_sq = 4.0;
        let eta_sq = 1.0;
        let mut direct = 0.0;
        for i in 0..obs.n_windows() {
            let x = obs.state(i).to_owned();
            let dx = &obs.state(i + 1).to_owned() - &x;
            let dx_sq: f64 = dx.iter().map(|v| v * v).sum();
            if x.iter().map(|v| v * v).sum::<f64>() < b_sq && dx_sq < eta_sq {
                let mx = mat.dot(&x);
                direct += mx.iter().map(|v| v * v).sum::<f64>();
            }
        }
        direct *= obs.delta_n() / obs.big_t();
        close(tr_form, direct, 1e-12);
    }

    #[test]
    fn covariance_matrices_are_psd_and_ordered() {
        let (_, obs) = sample_obs(7, 3, 80);
        let trunc = TruncationConfig::new(2.0, 0.9).unwrap();
        let m = empirical_moments(&obs, &trunc);
        let (lo_eta, hi_eta) = eig_extremes_sym(m.c_hat_eta()).unwrap();
        let (lo_b, hi_b) = eig_extremes_sym(m.c_hat()).unwrap();
        assert!(lo_eta >= -1e-12 && lo_b >= -1e-12);
        // Dropping windows can only shrink the quadratic form.
        let diff = m.c_hat() - m.c_hat_eta();
        let (lo_diff, _) = eig_extremes_sym(&diff).unwrap();
        assert!(lo_diff >= -1e-12);
        assert!(hi_eta <= hi_b + 1e-12);
        // Each kept summand has spectral norm ≤ b²Δₙ/T and there are ≤ n.
        assert!(hi_b <= 4.0 + 1e-12);
    }

    #[test]
    fn covariance_concentrates_with_horizon() {
        // d=2 pure Brownian: median error vs C∞(B) shrinks from T=50 to T=400.
        let drift = DriftMatrix::new(array![[1.0, 0.3], [0.0, 0.8]]).unwrap();
        let model = LevyModel::standard_brownian(2).unwrap();
        let cinf = solve_lyapunov(drift.matrix(), &model.cov_brownian()).unwrap();
        let b = 1.5;
        let mut oracle_rng = stream_rng(35, 0);
        let cinf_b = cinf_truncated_mc(&cinf, b, 1_000_000, &mut oracle_rng).unwrap();

        let trunc = TruncationConfig::new(b, f64::INFINITY).unwrap();
        let mut errs_short = Vec::new();
        let mut errs_long = Vec::new();
        for seed in 0..20u64 {
            for (t, errs) in [(50.0, &mut errs_short), (400.0, &mut errs_long)] {
                let mut rng = stream_rng(36, seed * 2 + if t > 100.0 { 1 } else { 0 });
                let x0 = stationary_start(&drift, &model, 0.01, &mut rng).unwrap();
                let traj = simulate_euler(&drift, &model, &x0, t, 0.01, &mut rng).unwrap();
                let n = (t / 0.05).round() as usize;
                let obs = subsample(&traj, n).unwrap();
                let m = empirical_moments(&obs, &trunc);
                let diff = m.c_hat() - &cinf_b;
                errs.push(spectral_norm(&diff).unwrap());
            }
        }
        errs_short.sort_by(|a, b| a.partial_cmp(b).unwrap());
        errs_long.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med_short = 0.5 * (errs_short[9] + errs_short[10]);
        let med_long = 0.5 * (errs_long[9] + errs_long[10]);
        assert!(
            med_long < med_short,
            "T=400 error {med_long} not below T=50 error {med_short}"
        );
    }

    #[test]
    fn truncated_stationary_covariance_oracle() {
        // Untruncated: the MC estimate recovers C∞ within Monte-Carlo error.
        let cinf = array![[1.0, 0.3], [0.3, 0.5]];
        let mut rng = stream_rng(37, 0);
        let est = cinf_truncated_mc(&cinf, f64::INFINITY, 200_000, &mut rng).unwrap();
        let n = 200_000f64;
        for i in 0..2 {
            for j in 0..2 {
                let se = ((cinf[[i, i]] * cinf[[j, j]] + cinf[[i, j]] * cinf[[i, j]]) / n).sqrt();
                close(est[[i, j]], cinf[[i, j]], 5.0 * se);
            }
        }

        // Scalar truncation against a quadrature oracle:
        // E[X²1(|X|<b)] = σ² ∫_{-c}^{c} u²φ(u) du with c = b/σ.
        let sigma_sq = 0.7f64;
        let b = 1.1f64;
        let c = b / sigma_sq.sqrt();
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let steps = 20_000;
        let h = 2.0 * c / steps as f64;
        let mut integral = 0.0;
        for k in 0..steps {
            let u0 = -c + k as f64 * h;
            let u1 = u0 + h;
            let um = 0.5 * (u0 + u1);
            integral += h / 6.0
                * (u0 * u0 * phi(u0) + 4.0 * um * um * phi(um) + u1 * u1 * phi(u1));
        }
        let target = sigma_sq * integral;
        let mut rng = stream_rng(37, 1);
        let est = cinf_truncated_mc(&array![[sigma_sq]], b, 400_000, &mut rng).unwrap();
        // Truncated second moment has variance below E[X⁴] = 3σ⁴.
        let se = (3.0 * sigma_sq * sigma_sq / 400_000.0).sqrt();
        close(est[[0, 0]], target, 5.0 * se);

        // Monotone in the radius.
        let mut rng_small = stream_rng(37, 2);
        let small = cinf_truncated_mc(&array![[sigma_sq]], 0.5, 100_000, &mut rng_small).unwrap();
        assert!(small[[0, 0]] < est[[0, 0]]);

        assert!(cinf_truncated_mc(&cinf, 0.0, 10, &mut rng).is_err());
        assert!(cinf_truncated_mc(&cinf, 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn gradient_vanishes_at_quadratic_minimizer() {
        let (_, obs) = sample_obs(8, 3, 80);
        let trunc = TruncationConfig::new(15.0, 6.0).unwrap();
        let m = empirical_moments(&obs, &trunc);
        assert!(m.kept_fraction() > 0.5);
        // Â = -H (Ĉ^η)⁻¹ solves H + A Ĉ^η = 0; by symmetry of Ĉ^η the
        // transposed system reads Ĉ^η Âᵀ = -Hᵀ.
        let neg_ht = m.h_hat().t().to_owned() * -1.0;
        let a_t = crate::linalg::solve_linear(m.c_hat_eta(), &neg_ht).unwrap();
        let a_hat = a_t.t().to_owned();
        let g = m.gradient(&a_hat).unwrap();
        assert!(spectral_norm(&g).unwrap() <= 1e-10);
    }
}
