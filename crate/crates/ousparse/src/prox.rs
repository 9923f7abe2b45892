//! Proximal operators for the l1 and sorted-l1 (Slope) penalties.
//!
//! The sorted-l1 norm of a matrix weighs the j-th largest absolute entry by
//! `w_j = λ sqrt(log(2 d₁ d₂ / j))`, so larger entries pay more. Its prox
//! reduces, after sorting magnitudes, to an isotonic projection handled by
//! a single stack pass over the shifted values.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Weight sequence of the sorted-l1 penalty for d-by-d matrices:
/// `w_j = lambda * sqrt(log(2 d² / j))` for `j = 1..d²`. Strictly positive
/// and nonincreasing by construction.
#[derive(Clone, Debug)]
pub struct SlopeWeights {
    weights: Vec<f64>,
}

impl SlopeWeights {
    /// Weights for the entries of a d-by-d matrix at level `lambda`.
    pub fn new(d: usize, lambda: f64) -> Result<Self> {
        Self::for_len(d.checked_mul(d).ok_or_else(|| {
            Error::Dimension("matrix dimension overflows".into())
        })?, lambda)
    }

    /// Weights for a plain vector of length `p`:
    /// `w_j = lambda * sqrt(log(2 p / j))`.
    pub fn for_len(p: usize, lambda: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::Dimension(
                "slope weights need at least one entry".into(),
            ));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Domain(format!(
                "slope level must be positive and finite, got {lambda}"
            )));
        }
        let weights = (1..=p)
            .map(|j| lambda * (2.0 * p as f64 / j as f64).ln().sqrt())
            .collect();
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// The same weights multiplied by `factor` (e.g. a solver step size).
    pub fn scaled(&self, factor: f64) -> Vec<f64> {
        self.weights.iter().map(|w| w * factor).collect()
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Dimension("weight vector is empty".into()));
    }
    for pair in w.windows(2) {
        if !(pair[0].is_finite() && pair[1].is_finite()) {
            return Err(Error::Domain("weights contain a non-finite entry".into()));
        }
        if pair[1] > pair[0] {
            return Err(Error::Domain(
                "sorted-l1 weights must be nonincreasing".into(),
            ));
        }
    }
    if w[w.len() - 1] < 0.0 || !w[0].is_finite() {
        return Err(Error::Domain(
            "sorted-l1 weights must be nonnegative".into(),
        ));
    }
    Ok(())
}

/// Sorted-l1 norm of a matrix: absolute entries sorted in decreasing order,
/// dotted with the weight sequence.
pub fn sorted_l1_norm(m: &Array2<f64>, w: &SlopeWeights) -> Result<f64> {
    if m.len() != w.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} entries but weights have {}",
            m.len(),
            w.len()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("matrix contains a non-finite entry".into()));
    }
    let mut mags: Vec<f64> = m.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(mags
        .iter()
        .zip(w.as_slice())
        .map(|(m, w)| m * w)
        .sum())
}

/// Soft-thresholding, the prox of `tau * ||x||_1`.
pub fn prox_l1(v: &Array1<f64>, tau: f64) -> Result<Array1<f64>> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::Domain(format!(
            "soft threshold must be nonnegative and finite, got {tau}"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("input contains a non-finite entry".into()));
    }
    Ok(v.mapv(|x| x.signum() * (x.abs() - tau).max(0.0)))
}

/// Prox of the sorted-l1 penalty `x -> Σ_j w_j |x|_(j)` at `v`.
///
/// Steps: sort magnitudes in decreasing order, subtract the weights, project
/// onto the nonincreasing cone by pooling adjacent violators with a block
/// stack, clip at zero, then undo the permutation and restore signs.
pub fn prox_sorted_l1(v: &Array1<f64>, w: &[f64]) -> Result<Array1<f64>> {
    check_weights(w)?;
    if v.len() != w.len() {
        return Err(Error::Dimension(format!(
            "input has {} entries but weights have {}",
            v.len(),
            w.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("input contains a non-finite entry".into()));
    }
    let p = v.len();

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| v[j].abs().partial_cmp(&v[i].abs()).unwrap());

    // Shifted magnitudes in sorted order.
    let z: Vec<f64> = order
        .iter()
        .zip(w)
        .map(|(&i, wj)| v[i].abs() - wj)
        .collect();

    // Pool adjacent violators: block averages must end up nonincreasing.
    // Each stack entry is (start index, length, sum).
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(p);
    for (i, &zi) in z.iter().enumerate() {
        blocks.push((i, 1, zi));
        while blocks.len() >= 2 {
            let top = blocks[blocks.len() - 1];
            let below = blocks[blocks.len() - 2];
            if top.2 * below.1 as f64 >= below.2 * top.1 as f64 {
                blocks.pop();
                blocks.pop();
                blocks.push((below.0, below.1 + top.1, below.2 + top.2));
            } else {
                break;
            }
        }
    }

    let mut out = Array1::<f64>::zeros(p);
    for &(start, len, sum) in &blocks {
        let value = (sum / len as f64).max(0.0);
        if value == 0.0 {
            continue;
        }
        for k in start..(start + len) {
            let i = order[k];
            out[i] = v[i].signum() * value;
        }
    }
    Ok(out)
}
