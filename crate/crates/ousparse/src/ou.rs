//! The Ornstein-Uhlenbeck process itself: sparse stable drift generation,
//! Euler simulation on a fine grid, stationary initial draws, subsampling
//! to an observation grid, and the exact Gaussian transition for the pure
//! Brownian case.
//!
//! The model is `dX_t = -A₀ X_t dt + dZ_t` with `A₀` one-sided stable, so
//! `X` admits a stationary law whose covariance solves
//! `A₀ C∞ + C∞ A₀ᵀ = C + ν₂`.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::linalg::{expm, min_re_eig, psd_sqrt, solve_lyapunov};
use crate::rng::SimRng;
use crate::util::fmt_f64;

/// Euclidean norm beyond which a simulated state counts as diverged.
const DIVERGENCE_RADIUS: f64 = 1e12;

/// A one-sided stable drift matrix together with its sparsity count.
///
/// Construction verifies stability numerically: every eigenvalue must have
/// a strictly positive real part.
#[derive(Clone, Debug)]
pub struct DriftMatrix {
    a0: Array2<f64>,
    sparsity: usize,
}

impl DriftMatrix {
    pub fn new(a0: Array2<f64>) -> Result<Self> {
        if a0.nrows() != a0.ncols() || a0.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "drift must be square and non-empty, got {}x{}",
                a0.nrows(),
                a0.ncols()
            )));
        }
        if a0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("drift contains a non-finite entry".into()));
        }
        if min_re_eig(&a0)? <= 0.0 {
            return Err(Error::Domain(
                "drift is not one-sided stable (an eigenvalue has nonpositive real part)".into(),
            ));
        }
        let sparsity = a0.iter().filter(|x| **x != 0.0).count();
        Ok(Self { a0, sparsity })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a0
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    /// Number of exactly nonzero entries.
    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    /// Slowest mean-reversion rate: the smallest eigenvalue real part.
    pub fn reversion_rate(&self) -> Result<f64> {
        min_re_eig(&self.a0)
    }
}

/// Fills the drift recipe deterministically: the given off-diagonal
/// positions receive the given values, then each diagonal entry is set to
/// the absolute row sum plus 0.1, which makes the matrix strictly
/// diagonally dominant with positive diagonal and therefore stable.
pub fn assemble_drift(
    d: usize,
    positions: &[(usize, usize)],
    values: &[f64],
) -> Result<DriftMatrix> {
    if positions.len() != values.len() {
        return Err(Error::Dimension(
            "positions and values must pair up".into(),
        ));
    }
    let mut a0 = Array2::<f64>::zeros((d, d));
    for (&(i, j), &v) in positions.iter().zip(values) {
        if i >= d || j >= d {
            return Err(Error::Dimension(format!(
                "position ({i},{j}) outside a {d}x{d} matrix"
            )));
        }
        if i == j {
            return Err(Error::Domain(
                "only off-diagonal positions can be assigned".into(),
            ));
        }
        a0[[i, j]] = v;
    }
    for i in 0..d {
        let row_sum: f64 = (0..d).filter(|&j| j != i).map(|j| a0[[i, j]].abs()).sum();
        a0[[i, i]] = row_sum + 0.1;
    }
    DriftMatrix::new(a0)
}

/// Draws a sparse stable drift: `s - d` distinct off-diagonal positions
/// chosen uniformly, filled with i.i.d. uniform values from `value_range`,
/// diagonal set by the dominance recipe. `s` counts all nonzero entries,
/// diagonal included, so `d <= s <= d²`.
pub fn generate_sparse_stable_drift(
    d: usize,
    s: usize,
    value_range: (f64, f64),
    rng: &mut SimRng,
) -> Result<DriftMatrix> {
    if d == 0 {
        return Err(Error::Dimension("dimension must be positive".into()));
    }
    if s < d || s > d * d {
        return Err(Error::Domain(format!(
            "sparsity must satisfy d <= s <= d², got s = {s} for d = {d}"
        )));
    }
    let (lo, hi) = value_range;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::Domain(format!(
            "value range must be a proper finite interval, got [{lo}, {hi}]"
        )));
    }

    let off_diag_slots = d * d - d;
    let picked = index_sample(rng, off_diag_slots, s - d);
    let mut slots: Vec<usize> = picked.into_iter().collect();
    slots.sort_unstable();
    // Slot k enumerates off-diagonal positions row-major, diagonal skipped.
    let positions: Vec<(usize, usize)> = slots
        .iter()
        .map(|&k| {
            let row = k / (d - 1);
            let col_idx = k % (d - 1);
            let col = if col_idx >= row { col_idx + 1 } else { col_idx };
            (row, col)
        })
        .collect();
    let values: Vec<f64> = positions
        .iter()
        .map(|_| rng.gen_range(lo..hi))
        .collect();
    assemble_drift(d, &positions, &values)
}

/// A fine-grid Euler path: states at every grid point plus the ledger of
/// jump contributions per fine step, which later separates the continuous
/// part of coarse increments.
#[derive(Clone, Debug)]
pub struct Trajectory {
    dt_fine: f64,
    /// `(steps + 1) x d`.
    states: Array2<f64>,
    /// `steps x d`; row `k` holds the jump part of the step from `k` to `k+1`.
    jump_ledger: Array2<f64>,
}

impl Trajectory {
    pub fn from_parts(
        dt_fine: f64,
        states: Array2<f64>,
        jump_ledger: Array2<f64>,
    ) -> Result<Self> {
        if !dt_fine.is_finite() || dt_fine <= 0.0 {
            return Err(Error::Domain(format!(
                "fine step must be positive, got {dt_fine}"
            )));
        }
        if states.nrows() < 2 {
            return Err(Error::InsufficientData(
                "a trajectory needs at least one step".into(),
            ));
        }
        if jump_ledger.nrows() + 1 != states.nrows() || jump_ledger.ncols() != states.ncols() {
            return Err(Error::Dimension(
                "jump ledger must have one row per fine step".into(),
            ));
        }
        if states.iter().chain(jump_ledger.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Domain("trajectory contains non-finite data".into()));
        }
        Ok(Self {
            dt_fine,
            states,
            jump_ledger,
        })
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    pub fn steps(&self) -> usize {
        self.states.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn total_time(&self) -> f64 {
        self.dt_fine * self.steps() as f64
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    pub fn jump_ledger(&self) -> &Array2<f64> {
        &self.jump_ledger
    }

    pub fn final_state(&self) -> Array1<f64> {
        self.states.row(self.steps()).to_owned()
    }

    /// Writes `t, x_1..x_d` rows (states) and `step, j_1..j_d` rows
    /// (ledger) with 17 significant digits, enough to round-trip bits.
    pub fn write_csv<W: Write, V: Write>(&self, states: &mut W, ledger: &mut V) -> Result<()> {
        let d = self.dim();
        let mut header = String::from("t");
        for c in 1..=d {
            header.push_str(&format!(",x_{c}"));
        }
        writeln!(states, "{header}")?;
        for (k, row) in self.states.rows().into_iter().enumerate() {
            let mut line = fmt_f64(k as f64 * self.dt_fine);
            for v in row {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(states, "{line}")?;
        }

        let mut header = String::from("step");
        for c in 1..=d {
            header.push_str(&format!(",j_{c}"));
        }
        writeln!(ledger, "{header}")?;
        for (k, row) in self.jump_ledger.rows().into_iter().enumerate() {
            let mut line = k.to_string();
            for v in row {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(ledger, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead, S: BufRead>(states: R, ledger: S) -> Result<Self> {
        let state_rows = parse_numeric_csv(states, "t")?;
        let ledger_rows = parse_numeric_csv(ledger, "step")?;
        if state_rows.len() < 2 {
            return Err(Error::InsufficientData(
                "trajectory file holds fewer than two states".into(),
            ));
        }
        let d = state_rows[0].len() - 1;
        let dt_fine = state_rows[1][0];
        let states_arr = Array2::from_shape_fn((state_rows.len(), d), |(r, c)| {
            state_rows[r][c + 1]
        });
        let ledger_arr = Array2::from_shape_fn((ledger_rows.len(), d), |(r, c)| {
            ledger_rows[r][c + 1]
        });
        Self::from_parts(dt_fine, states_arr, ledger_arr)
    }
}

fn parse_numeric_csv<R: BufRead>(reader: R, expected_first: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if lineno == 0 {
            if !line.starts_with(expected_first) {
                return Err(Error::Domain(format!(
                    "unexpected CSV header: {line}"
                )));
            }
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Domain(format!("bad CSV field on line {lineno}: {e}")))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Domain("ragged CSV row".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("CSV has no data rows".into()));
    }
    Ok(rows)
}

/// Discrete observations on an equidistant coarse grid, optionally with
/// the continuous (jump-free) part of each increment carried alongside.
#[derive(Clone, Debug)]
pub struct ObservationSet {
    delta_n: f64,
    /// `(n + 1) x d`.
    obs: Array2<f64>,
    /// `n x d` when present.
    cont_increments: Option<Array2<f64>>,
}

impl ObservationSet {
    pub fn from_states(
        delta_n: f64,
        obs: Array2<f64>,
        cont_increments: Option<Array2<f64>>,
    ) -> Result<Self> {
        if !delta_n.is_finite() || delta_n <= 0.0 {
            return Err(Error::Domain(format!(
                "observation spacing must be positive, got {delta_n}"
            )));
        }
        if obs.nrows() < 2 || obs.ncols() == 0 {
            return Err(Error::InsufficientData(
                "need at least two observations".into(),
            ));
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("observations contain non-finite data".into()));
        }
        if let Some(cont) = &cont_increments {
            if cont.nrows() + 1 != obs.nrows() || cont.ncols() != obs.ncols() {
                return Err(Error::Dimension(
                    "continuous increments must have one row per window".into(),
                ));
            }
            if cont.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(
                    "continuous increments contain non-finite data".into(),
                ));
            }
        }
        Ok(Self {
            delta_n,
            obs,
            cont_increments,
        })
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    /// Number of increments (windows).
    pub fn n_windows(&self) -> usize {
        self.obs.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.obs.ncols()
    }

    /// Observation horizon `T = n Δₙ`.
    pub fn big_t(&self) -> f64 {
        self.delta_n * self.n_windows() as f64
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.obs
    }

    pub fn state(&self, i: usize) -> ArrayView1<'_, f64> {
        self.obs.row(i)
    }

    pub fn cont_increments(&self) -> Option<&Array2<f64>> {
        self.cont_increments.as_ref()
    }

    /// The first `m` windows as their own observation set.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m < 1 || m > self.n_windows() {
            return Err(Error::Domain(format!(
                "prefix of {m} windows out of {}",
                self.n_windows()
            )));
        }
        Self::from_states(
            self.delta_n,
            self.obs.slice(ndarray::s![..=m, ..]).to_owned(),
            self.cont_increments
                .as_ref()
                .map(|c| c.slice(ndarray::s![..m, ..]).to_owned()),
        )
    }

    /// Windows `m..n` as their own observation set.
    pub fn suffix(&self, m: usize) -> Result<Self> {
        if m >= self.n_windows() {
            return Err(Error::Domain(format!(
                "suffix starting at window {m} of {}",
                self.n_windows()
            )));
        }
        Self::from_states(
            self.delta_n,
            self.obs.slice(ndarray::s![m.., ..]).to_owned(),
            self.cont_increments
                .as_ref()
                .map(|c| c.slice(ndarray::s![m.., ..]).to_owned()),
        )
    }

    /// Writes `t, x_1..x_d` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let d = self.dim();
        let mut header = String::from("t");
        for c in 1..=d {
            header.push_str(&format!(",x_{c}"));
        }
        writeln!(out, "{header}")?;
        for (k, row) in self.obs.rows().into_iter().enumerate() {
            let mut line = fmt_f64(k as f64 * self.delta_n);
            for v in row {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Writes the continuous parts as `window, dxc_1..dxc_d` rows.
    pub fn write_cont_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let cont = self.cont_increments.as_ref().ok_or_else(|| {
            Error::Lookup("observation set carries no continuous increments".into())
        })?;
        let d = self.dim();
        let mut header = String::from("window");
        for c in 1..=d {
            header.push_str(&format!(",dxc_{c}"));
        }
        writeln!(out, "{header}")?;
        for (k, row) in cont.rows().into_iter().enumerate() {
            let mut line = k.to_string();
            for v in row {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(states: R, cont: Option<R>) -> Result<Self> {
        let state_rows = parse_numeric_csv(states, "t")?;
        if state_rows.len() < 2 {
            return Err(Error::InsufficientData(
                "observation file holds fewer than two states".into(),
            ));
        }
        let d = state_rows[0].len() - 1;
        let delta_n = state_rows[1][0];
        let obs = Array2::from_shape_fn((state_rows.len(), d), |(r, c)| state_rows[r][c + 1]);
        let cont_arr = match cont {
            Some(r) => {
                let rows = parse_numeric_csv(r, "window")?;
                Some(Array2::from_shape_fn((rows.len(), d), |(r, c)| {
                    rows[r][c + 1]
                }))
            }
            None => None,
        };
        Self::from_states(delta_n, obs, cont_arr)
    }
}

/// Euler scheme on the fine grid: `X_{k+1} = X_k - dt A₀ X_k + ΔZ_k`.
///
/// `total_time` must be a whole number of fine steps. The jump part of
/// every increment is recorded in the ledger. States are checked against a
/// divergence radius of 1e12.
pub fn simulate_euler(
    drift: &DriftMatrix,
    model: &LevyModel,
    x0: &Array1<f64>,
    total_time: f64,
    dt_fine: f64,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    let d = drift.dim();
    if model.dim() != d || x0.len() != d {
        return Err(Error::Dimension(
            "drift, noise model and initial state disagree on dimension".into(),
        ));
    }
    if !dt_fine.is_finite() || dt_fine <= 0.0 {
        return Err(Error::Domain(format!(
            "fine step must be positive, got {dt_fine}"
        )));
    }
    if !total_time.is_finite() || total_time <= 0.0 {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {total_time}"
        )));
    }
    let steps_f = total_time / dt_fine;
    let steps = steps_f.round();
    if steps < 1.0 || (steps_f - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::Domain(format!(
            "horizon {total_time} is not a whole number of fine steps {dt_fine}"
        )));
    }
    let steps = steps as usize;
    if x0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("initial state is not finite".into()));
    }

    let a0 = drift.matrix();
    let mut states = Array2::<f64>::zeros((steps + 1, d));
    let mut ledger = Array2::<f64>::zeros((steps, d));
    states.row_mut(0).assign(x0);
    let mut x = x0.clone();
    for k in 0..steps {
        let (total, jump) = model.sample_increment(dt_fine, rng)?;
        let drift_term = a0.dot(&x) * dt_fine;
        x = &x - &drift_term + &total;
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        if !norm_sq.is_finite() || norm_sq > DIVERGENCE_RADIUS * DIVERGENCE_RADIUS {
            return Err(Error::Divergence(format!(
                "state norm left the trusted range at step {k}"
            )));
        }
        states.row_mut(k + 1).assign(&x);
        ledger.row_mut(k).assign(&jump);
    }
    Trajectory::from_parts(dt_fine, states, ledger)
}

/// Covariance of the stationary law: solves `A₀ C∞ + C∞ A₀ᵀ = C + ν₂`.
pub fn stationary_covariance(drift: &DriftMatrix, model: &LevyModel) -> Result<Array2<f64>> {
    let rhs = model.cov_brownian() + model.nu2_matrix();
    solve_lyapunov(drift.matrix(), &rhs)
}

/// Draws an initial state from (approximately) the stationary law.
///
/// Pure Brownian noise: exact draw from `N(0, C∞)`. With jumps the
/// stationary law has no closed form, so the draw is the endpoint of an
/// Euler burn-in from zero over `10 / min Re eig(A₀)` time units.
pub fn stationary_start(
    drift: &DriftMatrix,
    model: &LevyModel,
    dt_fine: f64,
    rng: &mut SimRng,
) -> Result<Array1<f64>> {
    let d = drift.dim();
    if model.dim() != d {
        return Err(Error::Dimension(
            "drift and noise model disagree on dimension".into(),
        ));
    }
    if !model.has_jumps() {
        let cinf = stationary_covariance(drift, model)?;
        let root = psd_sqrt(&cinf)?;
        let g = Array1::from_shape_fn(d, |_| StandardNormal.sample(rng));
        return Ok(root.dot(&g));
    }
    if !dt_fine.is_finite() || dt_fine <= 0.0 {
        return Err(Error::Domain(format!(
            "fine step must be positive, got {dt_fine}"
        )));
    }
    let rate = drift.reversion_rate()?;
    let burn_steps = (10.0 / rate / dt_fine).ceil().max(1.0) as usize;
    let zero = Array1::zeros(d);
    let burn = simulate_euler(
        drift,
        model,
        &zero,
        burn_steps as f64 * dt_fine,
        dt_fine,
        rng,
    )?;
    Ok(burn.final_state())
}

/// Picks `n` approximately equidistant observations from the fine grid
/// (indices `round(k · steps / n)`) and splits each coarse increment into
/// its jump part (from the ledger) and the continuous remainder.
pub fn subsample(traj: &Trajectory, n: usize) -> Result<ObservationSet> {
    let steps = traj.steps();
    if n < 2 {
        return Err(Error::InsufficientData(
            "need at least two observation windows".into(),
        ));
    }
    if n > steps {
        return Err(Error::Domain(format!(
            "cannot pick {n} windows from {steps} fine steps"
        )));
    }
    let d = traj.dim();
    let delta_n = traj.total_time() / n as f64;
    let indices: Vec<usize> = (0..=n)
        .map(|k| ((k as f64) * (steps as f64) / (n as f64)).round() as usize)
        .collect();

    let mut obs = Array2::<f64>::zeros((n + 1, d));
    for (row, &idx) in indices.iter().enumerate() {
        obs.row_mut(row).assign(&traj.states().row(idx));
    }
    let ledger = traj.jump_ledger();
    let mut cont = Array2::<f64>::zeros((n, d));
    for w in 0..n {
        let (lo, hi) = (indices[w], indices[w + 1]);
        for c in 0..d {
            let mut jump_sum = 0.0;
            for k in lo..hi {
                jump_sum += ledger[[k, c]];
            }
            cont[[w, c]] = traj.states()[[hi, c]] - traj.states()[[lo, c]] - jump_sum;
        }
    }
    ObservationSet::from_states(delta_n, obs, Some(cont))
}

/// One exact transition of the pure-Brownian process over `dt`:
/// `X' ~ N(e^{-dt A₀} x, C∞ - e^{-dt A₀} C∞ e^{-dt A₀ᵀ})`.
///
/// Only defined without jumps; `dt = 0` returns the state unchanged.
pub fn exact_gaussian_transition(
    drift: &DriftMatrix,
    model: &LevyModel,
    x: &Array1<f64>,
    dt: f64,
    rng: &mut SimRng,
) -> Result<Array1<f64>> {
    if model.has_jumps() {
        return Err(Error::Domain(
            "exact transitions are only available for pure Brownian noise".into(),
        ));
    }
    let d = drift.dim();
    if model.dim() != d || x.len() != d {
        return Err(Error::Dimension(
            "drift, noise model and state disagree on dimension".into(),
        ));
    }
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::Domain(format!(
            "transition length must be nonnegative, got {dt}"
        )));
    }
    if dt == 0.0 {
        return Ok(x.clone());
    }
    let decay = expm(&(drift.matrix() * (-dt)))?;
    let cinf = stationary_covariance(drift, model)?;
    let shrunk = decay.dot(&cinf).dot(&decay.t());
    let cov = (&cinf - &shrunk + &(&cinf - &shrunk).t()) * 0.5;
    let root = psd_sqrt(&cov)?;
    let g = Array1::from_shape_fn(d, |_| StandardNormal.sample(rng));
    Ok(decay.dot(x) + root.dot(&g))
}
