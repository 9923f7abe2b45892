//! Dense matrix kernels used everywhere else: matrix exponential, Lyapunov
//! solve, symmetric eigenvalues, operator and entrywise norms.
//!
//! Matrices are `ndarray::Array2<f64>` and stay small (dimension at most a
//! few tens), so the kernels favor robustness over asymptotic cleverness:
//! Pade-13 scaling-and-squaring for the exponential, a dense Kronecker
//! solve for the Lyapunov equation, cyclic Jacobi rotations for symmetric
//! eigenvalues. The only routine delegated to an external solver is the
//! general (non-symmetric) eigenvalue computation, which goes through
//! nalgebra's Schur decomposition.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::util::Kahan;

/// Pade order-13 coefficients for the matrix exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest operator 1-norm handled by the Pade step without scaling.
const PADE13_THETA: f64 = 5.37;

/// Absolute tolerance for treating an input as symmetric.
const SYM_TOL: f64 = 1e-10;

fn check_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{what} contains a non-finite entry")));
    }
    Ok(())
}

fn check_square(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn max_asymmetry(m: &Array2<f64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

/// Operator 1-norm (maximum absolute column sum).
fn op_norm_1(m: &Array2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for col in m.columns() {
        let s: f64 = col.iter().map(|x| x.abs()).sum();
        worst = worst.max(s);
    }
    worst
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
///
/// Fails with a numerical error when a pivot falls below
/// `n * eps * max|A|`, which is how singular Lyapunov systems and
/// rank-deficient moment matrices are detected.
pub fn solve_linear(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(a, "coefficient matrix")?;
    check_finite(a, "coefficient matrix")?;
    check_finite(b, "right-hand side")?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, expected {n}",
            b.nrows()
        )));
    }
    let m = b.ncols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = (n as f64) * f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    for k in 0..n {
        let mut piv = k;
        let mut best = lu[[k, k]].abs();
        for r in (k + 1)..n {
            let cand = lu[[r, k]].abs();
            if cand > best {
                best = cand;
                piv = r;
            }
        }
        if best <= tol {
            return Err(Error::Numerical(
                "singular linear system (pivot below tolerance)".into(),
            ));
        }
        if piv != k {
            for c in 0..n {
                lu.swap([k, c], [piv, c]);
            }
            for c in 0..m {
                x.swap([k, c], [piv, c]);
            }
        }
        let pivot = lu[[k, k]];
        for r in (k + 1)..n {
            let f = lu[[r, k]] / pivot;
            if f == 0.0 {
                continue;
            }
            lu[[r, k]] = 0.0;
            for c in (k + 1)..n {
                lu[[r, c]] -= f * lu[[k, c]];
            }
            for c in 0..m {
                x[[r, c]] -= f * x[[k, c]];
            }
        }
    }
    for k in (0..n).rev() {
        for c in 0..m {
            let mut acc = x[[k, c]];
            for j in (k + 1)..n {
                acc -= lu[[k, j]] * x[[j, c]];
            }
            x[[k, c]] = acc / lu[[k, k]];
        }
    }
    Ok(x)
}

/// Matrix exponential by Pade order 13 with scaling and squaring.
///
/// The argument is halved until its operator 1-norm is at most 5.37, the
/// order-13 evaluation threshold, and the result is squared back up.
pub fn expm(m: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(m, "expm argument")?;
    check_finite(m, "expm argument")?;
    let d = m.nrows();
    let norm = op_norm_1(m);
    let squarings = if norm > PADE13_THETA {
        (norm / PADE13_THETA).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);

    let b = &PADE13;
    let eye = Array2::<f64>::eye(d);
    let m2 = scaled.dot(&scaled);
    let m4 = m2.dot(&m2);
    let m6 = m2.dot(&m4);

    let u_inner = m6.dot(&(&m6 * b[13] + &m4 * b[11] + &m2 * b[9]))
        + &m6 * b[7]
        + &m4 * b[5]
        + &m2 * b[3]
        + &eye * b[1];
    let u = scaled.dot(&u_inner);
    let v = m6.dot(&(&m6 * b[12] + &m4 * b[10] + &m2 * b[8]))
        + &m6 * b[6]
        + &m4 * b[4]
        + &m2 * b[2]
        + &eye * b[0];

    let num = &v + &u;
    let den = &v - &u;
    let mut result = solve_linear(&den, &num)?;
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    Ok(result)
}

/// Solves the continuous Lyapunov equation `A C + C Aᵀ = Q` for `C`.
///
/// Vectorizing turns the equation into a d²-by-d² dense linear system,
/// solved directly; O(d⁶) work is acceptable at the dimensions in scope
/// and avoids a Schur-based solver. `Q` must be symmetric; the solution is
/// symmetrized before returning. The system is singular exactly when some
/// eigenvalue pair of `A` sums to zero, i.e. when `A` is not one-sided
/// stable, and that surfaces as a numerical error.
pub fn solve_lyapunov(a: &Array2<f64>, q: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(a, "Lyapunov coefficient")?;
    check_finite(a, "Lyapunov coefficient")?;
    check_finite(q, "Lyapunov right-hand side")?;
    let d = a.nrows();
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::Dimension(format!(
            "right-hand side is {}x{}, expected {d}x{d}",
            q.nrows(),
            q.ncols()
        )));
    }
    if max_asymmetry(q) > SYM_TOL {
        return Err(Error::Domain(
            "Lyapunov right-hand side is not symmetric".into(),
        ));
    }

    // Row (i,j) of the system is the (i,j) entry of A C + C Aᵀ = Q; the
    // unknown C is flattened row-major: (A C)_ij pulls C_{t j}, (C Aᵀ)_ij
    // pulls C_{i t}.
    let n = d * d;
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..d {
        for j in 0..d {
            let r = i * d + j;
            for t in 0..d {
                k[[r, t * d + j]] += a[[i, t]];
                k[[r, i * d + t]] += a[[j, t]];
            }
        }
    }
    let rhs = Array2::from_shape_fn((n, 1), |(r, _)| q[[r / d, r % d]]);
    let sol = solve_linear(&k, &rhs).map_err(|_| {
        Error::Numerical(
            "Lyapunov system is singular (an eigenvalue pair of the coefficient sums to zero)"
                .into(),
        )
    })?;
    let c = Array2::from_shape_fn((d, d), |(i, j)| sol[[i * d + j, 0]]);
    Ok((&c + &c.t()) * 0.5)
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. The input must be symmetric within 1e-10; it is
/// symmetrized exactly before iterating.
pub fn sym_eigen(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    check_square(m, "symmetric eigenproblem")?;
    check_finite(m, "symmetric eigenproblem")?;
    if max_asymmetry(m) > SYM_TOL {
        return Err(Error::Domain(
            "matrix is not symmetric within tolerance".into(),
        ));
    }
    let d = m.nrows();
    let mut a = (m + &m.t()) * 0.5;
    let mut v = Array2::<f64>::eye(d);
    if d == 1 {
        return Ok((Array1::from_elem(1, a[[0, 0]]), v));
    }

    let fro_sq: f64 = a.iter().map(|x| x * x).sum();
    let stop = 1e-30 * fro_sq.max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _sweep in 0..100 {
        let mut off_sq = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off_sq += 2.0 * a[[p, q]] * a[[p, q]];
            }
        }
        if off_sq <= stop {
            converged = true;
            break;
        }
        for p in 0..(d - 1) {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.5 / theta
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[[p, p]] -= t * apq;
                a[[q, q]] += t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for r in 0..d {
                    if r != p && r != q {
                        let arp = a[[r, p]];
                        let arq = a[[r, q]];
                        a[[r, p]] = arp - s * (arq + tau * arp);
                        a[[p, r]] = a[[r, p]];
                        a[[r, q]] = arq + s * (arp - tau * arq);
                        a[[q, r]] = a[[r, q]];
                    }
                }
                for r in 0..d {
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = vrp - s * (vrq + tau * vrp);
                    v[[r, q]] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "Jacobi eigenvalue iteration failed to converge".into(),
        ));
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[[i, i]].partial_cmp(&a[[j, j]]).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = Array2::from_shape_fn((d, d), |(r, c)| v[[r, order[c]]]);
    Ok((values, vectors))
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eig_extremes_sym(m: &Array2<f64>) -> Result<(f64, f64)> {
    let (values, _) = sym_eigen(m)?;
    Ok((values[0], values[values.len() - 1]))
}

/// Largest singular value, computed as the root of the largest eigenvalue
/// of the smaller Gram matrix. Accepts rectangular input.
pub fn spectral_norm(m: &Array2<f64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension("spectral norm of an empty matrix".into()));
    }
    check_finite(m, "spectral norm argument")?;
    let gram = if m.ncols() <= m.nrows() {
        m.t().dot(m)
    } else {
        m.dot(&m.t())
    };
    let sym = (&gram + &gram.t()) * 0.5;
    let (_, top) = eig_extremes_sym(&sym)?;
    Ok(top.max(0.0).sqrt())
}

/// Entrywise p-norm `(Σ |m_ij|^p)^(1/p)` for `p >= 1`, with
/// `p = infinity` meaning the maximum absolute entry.
pub fn entrywise_norm(m: &Array2<f64>, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!(
            "entrywise norm requires p >= 1, got {p}"
        )));
    }
    check_finite(m, "norm argument")?;
    if p.is_infinite() {
        return Ok(m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())));
    }
    let mut acc = Kahan::new();
    if p == 1.0 {
        for x in m.iter() {
            acc.add(x.abs());
        }
        Ok(acc.value())
    } else if p == 2.0 {
        for x in m.iter() {
            acc.add(x * x);
        }
        Ok(acc.value().sqrt())
    } else {
        for x in m.iter() {
            acc.add(x.abs().powf(p));
        }
        Ok(acc.value().powf(1.0 / p))
    }
}

/// Number of entries exceeding `tol` in absolute value.
pub fn count_nonzero(m: &Array2<f64>, tol: f64) -> Result<usize> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Domain(format!(
            "nonzero tolerance must be nonnegative, got {tol}"
        )));
    }
    Ok(m.iter().filter(|x| x.abs() > tol).count())
}

/// Smallest real part among the eigenvalues of a general square matrix.
///
/// Positive means the matrix is one-sided stable (`e^{-tM} -> 0`). Backed
/// by nalgebra's Schur decomposition.
pub fn min_re_eig(m: &Array2<f64>) -> Result<f64> {
    check_square(m, "eigenvalue argument")?;
    check_finite(m, "eigenvalue argument")?;
    let d = m.nrows();
    if d == 1 {
        return Ok(m[[0, 0]]);
    }
    let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[[i, j]]);
    // The deflation test can stall at machine epsilon when an eigenvalue
    // repeats many times, so retry with a looser criterion before giving
    // up; the loosest rung still resolves real parts far beyond what the
    // stability threshold or a burn-in horizon needs.
    for eps in [f64::EPSILON, 1e-14, 1e-12, 1e-10] {
        if let Some(schur) = nalgebra::Schur::try_new(dm.clone(), eps, 100_000) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::INFINITY, f64::min));
        }
    }
    Err(Error::Numerical(
        "Schur eigenvalue iteration failed to converge".into(),
    ))
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Eigenvalues slightly negative from rounding (within `1e-8` of the
/// spectral scale) are clipped to zero; anything more negative is a domain
/// error.
pub fn psd_sqrt(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (values, vectors) = sym_eigen(m)?;
    let d = values.len();
    let scale = values[d - 1].abs().max(1.0);
    if values[0] < -1e-8 * scale {
        return Err(Error::Domain(
            "matrix is not positive semidefinite".into(),
        ));
    }
    let mut out = Array2::<f64>::zeros((d, d));
    for k in 0..d {
        let root = values[k].max(0.0).sqrt();
        if root == 0.0 {
            continue;
        }
        for i in 0..d {
            for j in 0..d {
                out[[i, j]] += root * vectors[[i, k]] * vectors[[j, k]];
            }
        }
    }
    Ok((&out + &out.t()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    use crate::rng::stream_rng;

    fn assert_mat_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(
                (x - y).abs() <= tol,
                "entries differ: {x} vs {y} (tol {tol})"
            );
        }
    }

    fn random_matrix(d: usize, scale: f64, rng: &mut crate::rng::SimRng) -> Array2<f64> {
        Array2::from_shape_fn((d, d), |_| rng.gen_range(-scale..scale))
    }

    /// Plain truncated power series; independent of the Pade route.
    fn expm_series(m: &Array2<f64>, terms: usize) -> Array2<f64> {
        let d = m.nrows();
        let mut sum = Array2::<f64>::eye(d);
        let mut term = Array2::<f64>::eye(d);
        for k in 1..=terms {
            term = term.dot(m) / (k as f64);
            sum = sum + &term;
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = Array2::<f64>::zeros((3, 3));
        assert_mat_close(&expm(&z).unwrap(), &Array2::eye(3), 1e-15);
    }

    #[test]
    fn expm_rotation_matches_closed_form() {
        let theta: f64 = 1.3;
        let m = array![[0.0, -theta], [theta, 0.0]];
        let expected = array![
            [theta.cos(), -theta.sin()],
            [theta.sin(), theta.cos()]
        ];
        assert_mat_close(&expm(&m).unwrap(), &expected, 1e-12);
        assert_mat_close(&expm_series(&m, 30), &expected, 1e-12);
    }

    #[test]
    fn expm_diagonal_exponentiates_entrywise() {
        let m = array![[-2.0, 0.0], [0.0, 0.5]];
        let expected = array![[(-2.0f64).exp(), 0.0], [0.0, 0.5f64.exp()]];
        assert_mat_close(&expm(&m).unwrap(), &expected, 1e-13);
    }

    #[test]
    fn expm_matches_series_oracle_below_and_above_squaring_threshold() {
        let mut rng = stream_rng(7, 1);
        for d in [2usize, 3, 4] {
            let small = random_matrix(d, 0.8, &mut rng);
            let got = expm(&small).unwrap();
            assert_mat_close(&got, &expm_series(&small, 60), 1e-12);

            // 1-norm well above 5.37 forces the squaring branch.
            let big = &small * 6.0;
            let got = expm(&big).unwrap();
            let reference = expm_series(&big, 120);
            let scale = entrywise_norm(&reference, f64::INFINITY).unwrap().max(1.0);
            assert_mat_close(&(got / scale), &(reference / scale), 1e-11);
        }
    }

    #[test]
    fn expm_rejects_nonfinite_and_nonsquare() {
        let bad = array![[f64::NAN, 0.0], [0.0, 0.0]];
        assert!(matches!(expm(&bad), Err(Error::Domain(_))));
        let rect = Array2::<f64>::zeros((2, 3));
        assert!(matches!(expm(&rect), Err(Error::Dimension(_))));
    }

    #[test]
    fn solve_linear_known_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![[5.0], [10.0]];
        let x = solve_linear(&a, &b).unwrap();
        assert_mat_close(&x, &array![[1.0], [3.0]], 1e-12);
    }

    #[test]
    fn solve_linear_flags_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![[1.0], [2.0]];
        assert!(matches!(solve_linear(&a, &b), Err(Error::Numerical(_))));
    }

    #[test]
    fn lyapunov_scalar_and_diagonal() {
        let c = solve_lyapunov(&array![[2.0]], &array![[4.0]]).unwrap();
        assert!((c[[0, 0]] - 1.0).abs() < 1e-14);

        let a = array![[1.0, 0.0], [0.0, 3.0]];
        let q = Array2::<f64>::eye(2);
        let c = solve_lyapunov(&a, &q).unwrap();
        let expected = array![[0.5, 0.0], [0.0, 1.0 / 6.0]];
        assert_mat_close(&c, &expected, 1e-14);
    }

    #[test]
    fn lyapunov_residual_small_on_random_stable_systems() {
        let mut rng = stream_rng(7, 2);
        for d in [2usize, 3, 5, 6] {
            let g = random_matrix(d, 1.0, &mut rng);
            let shift = spectral_norm(&g).unwrap() + 0.3;
            let a = &g + &(Array2::<f64>::eye(d) * shift);
            let h = random_matrix(d, 1.0, &mut rng);
            let q = h.dot(&h.t()) + Array2::<f64>::eye(d) * 0.1;
            let c = solve_lyapunov(&a, &q).unwrap();
            let residual = a.dot(&c) + c.dot(&a.t()) - &q;
            assert!(entrywise_norm(&residual, 2.0).unwrap() < 1e-10);
        }
    }

    #[test]
    fn lyapunov_matches_quadrature_oracle() {
        // C = ∫ e^{-sA} Q e^{-sAᵀ} ds, integrated by composite Simpson on
        // [0, 50/min Re eig] with the integrand advanced one factor per node.
        let mut rng = stream_rng(7, 3);
        for d in [2usize, 3, 4] {
            let g = random_matrix(d, 0.8, &mut rng);
            let shift = spectral_norm(&g).unwrap() + 0.4;
            let a = &g + &(Array2::<f64>::eye(d) * shift);
            let h = random_matrix(d, 0.9, &mut rng);
            let q = h.dot(&h.t()) + Array2::<f64>::eye(d) * 0.05;

            let t_int = 50.0 / min_re_eig(&a).unwrap();
            let steps = 20_000usize;
            let hstep = t_int / steps as f64;
            let e = expm(&(&a * (-hstep))).unwrap();
            let mut f = q.clone();
            let mut acc = f.clone();
            for k in 1..=steps {
                f = e.dot(&f).dot(&e.t());
                let w = if k == steps {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc = acc + &(&f * w);
            }
            let oracle = acc * (hstep / 3.0);

            let c = solve_lyapunov(&a, &q).unwrap();
            assert_mat_close(&c, &oracle, 1e-6);
        }
    }

    #[test]
    fn lyapunov_rejects_asymmetric_rhs_and_unstable_coefficient() {
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let q = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(matches!(solve_lyapunov(&a, &q), Err(Error::Domain(_))));

        // Eigenvalues 1 and -1 sum to zero across the pair: singular system.
        let a = array![[1.0, 0.0], [0.0, -1.0]];
        let q = Array2::<f64>::eye(2);
        assert!(matches!(solve_lyapunov(&a, &q), Err(Error::Numerical(_))));
    }

    #[test]
    fn sym_eigen_closed_form_2x2() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let (lo, hi) = eig_extremes_sym(&m).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eigen_reconstructs_input() {
        let mut rng = stream_rng(7, 4);
        for d in [1usize, 2, 5, 8] {
            let g = random_matrix(d, 1.0, &mut rng);
            let m = (&g + &g.t()) * 0.5;
            let (values, vectors) = sym_eigen(&m).unwrap();
            let mut rebuilt = Array2::<f64>::zeros((d, d));
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        rebuilt[[i, j]] += values[k] * vectors[[i, k]] * vectors[[j, k]];
                    }
                }
            }
            assert_mat_close(&rebuilt, &m, 1e-11);
            // Columns orthonormal.
            let vtv = vectors.t().dot(&vectors);
            assert_mat_close(&vtv, &Array2::eye(d), 1e-12);
        }
    }

    #[test]
    fn sym_eigen_rejects_asymmetric() {
        let m = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(matches!(sym_eigen(&m), Err(Error::Domain(_))));
    }

    /// Bisection on the characteristic polynomial, an implementation-free
    /// route to the extreme eigenvalues of a small symmetric matrix.
    fn eig_extremes_by_bisection(m: &Array2<f64>) -> (f64, f64) {
        let d = m.nrows();
        let det = |lambda: f64| -> f64 {
            let mut a = m.clone();
            for i in 0..d {
                a[[i, i]] -= lambda;
            }
            let mut sign = 1.0f64;
            let mut prod = 1.0f64;
            for k in 0..d {
                let mut piv = k;
                for r in (k + 1)..d {
                    if a[[r, k]].abs() > a[[piv, k]].abs() {
                        piv = r;
                    }
                }
                if a[[piv, k]] == 0.0 {
                    return 0.0;
                }
                if piv != k {
                    sign = -sign;
                    for c in 0..d {
                        a.swap([k, c], [piv, c]);
                    }
                }
                prod *= a[[k, k]];
                for r in (k + 1)..d {
                    let f = a[[r, k]] / a[[k, k]];
                    for c in k..d {
                        a[[r, c]] -= f * a[[k, c]];
                    }
                }
            }
            sign * prod
        };

        let radius = (0..d)
            .map(|i| (0..d).map(|j| m[[i, j]].abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
            + 1.0;
        let grid = 4000;
        let mut roots = Vec::new();
        let mut prev_x = -radius;
        let mut prev_f = det(prev_x);
        for g in 1..=grid {
            let x = -radius + 2.0 * radius * (g as f64) / (grid as f64);
            let f = det(x);
            if prev_f == 0.0 {
                roots.push(prev_x);
            } else if prev_f * f < 0.0 {
                let (mut lo, mut hi) = (prev_x, x);
                let mut flo = prev_f;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let fm = det(mid);
                    if flo * fm <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev_x = x;
            prev_f = f;
        }
        let lo = roots.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = roots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    #[test]
    fn sym_eigen_extremes_match_bisection_oracle() {
        let mut rng = stream_rng(7, 5);
        let g = random_matrix(5, 1.0, &mut rng);
        let m = (&g + &g.t()) * 0.5;
        let (lo, hi) = eig_extremes_sym(&m).unwrap();
        let (olo, ohi) = eig_extremes_by_bisection(&m);
        assert!((lo - olo).abs() < 1e-8, "{lo} vs {olo}");
        assert!((hi - ohi).abs() < 1e-8, "{hi} vs {ohi}");
    }

    #[test]
    fn spectral_norm_rectangular_known_value() {
        let m = array![[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]];
        assert!((spectral_norm(&m).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let mut rng = stream_rng(7, 6);
        let m = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let gram = m.t().dot(&m);
        let mut v = Array1::from_elem(3, 1.0f64);
        for _ in 0..20_000 {
            let w = gram.dot(&v);
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w / n;
        }
        let oracle = v.dot(&gram.dot(&v)).sqrt();
        let got = spectral_norm(&m).unwrap();
        assert!((got - oracle).abs() < 1e-8 * oracle.max(1.0));
    }

    #[test]
    fn entrywise_norms_and_count() {
        let m = array![[1.0, -2.0], [0.0, 2.0]];
        assert!((entrywise_norm(&m, 1.0).unwrap() - 5.0).abs() < 1e-14);
        assert!((entrywise_norm(&m, 2.0).unwrap() - 3.0).abs() < 1e-14);
        assert!((entrywise_norm(&m, f64::INFINITY).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(
            entrywise_norm(&m, 0.5),
            Err(Error::Domain(_))
        ));
        assert_eq!(count_nonzero(&m, 1e-12).unwrap(), 3);
        assert_eq!(count_nonzero(&m, 1.5).unwrap(), 2);
        assert!(count_nonzero(&m, -1.0).is_err());
    }

    #[test]
    fn min_re_eig_known_spectra() {
        let m = array![[1.0, 5.0], [0.0, 3.0]];
        assert!((min_re_eig(&m).unwrap() - 1.0).abs() < 1e-10);
        // Complex pair 1 ± 2i.
        let m = array![[1.0, -2.0], [2.0, 1.0]];
        assert!((min_re_eig(&m).unwrap() - 1.0).abs() < 1e-10);
        let m = array![[-0.25]];
        assert!((min_re_eig(&m).unwrap() + 0.25).abs() < 1e-15);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = stream_rng(7, 8);
        let g = random_matrix(4, 1.0, &mut rng);
        let m = g.dot(&g.t());
        let s = psd_sqrt(&m).unwrap();
        assert_mat_close(&s.dot(&s), &m, 1e-10);
        let not_psd = array![[1.0, 0.0], [0.0, -1.0]];
        assert!(matches!(psd_sqrt(&not_psd), Err(Error::Domain(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn small_matrix(max_d: usize, scale: f64) -> impl Strategy<Value = Array2<f64>> {
            (1..=max_d).prop_flat_map(move |d| {
                proptest::collection::vec(-scale..scale, d * d).prop_map(move |entries| {
                    Array2::from_shape_vec((d, d), entries).unwrap()
                })
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(40))]

            #[test]
            fn expm_times_expm_of_negation_is_identity(m in small_matrix(5, 1.4)) {
                // Spectral norm capped at 5 by construction check.
                let s = spectral_norm(&m).unwrap();
                let m = if s > 5.0 { &m * (5.0 / s) } else { m };
                let fwd = expm(&m).unwrap();
                let bwd = expm(&(&m * -1.0)).unwrap();
                let prod = fwd.dot(&bwd);
                let eye = Array2::<f64>::eye(m.nrows());
                for (x, y) in prod.iter().zip(eye.iter()) {
                    prop_assert!((x - y).abs() < 1e-10);
                }
            }

            #[test]
            fn lyapunov_solution_is_symmetric_psd(g in small_matrix(4, 1.0), h in small_matrix(4, 1.0)) {
                let d = g.nrows().min(h.nrows());
                let g = g.slice(ndarray::s![..d, ..d]).to_owned();
                let h = h.slice(ndarray::s![..d, ..d]).to_owned();
                let shift = spectral_norm(&g).unwrap() + 0.3;
                let a = &g + &(Array2::<f64>::eye(d) * shift);
                let q = h.dot(&h.t());
                let c = solve_lyapunov(&a, &q).unwrap();
                prop_assert!(max_asymmetry(&c) < 1e-12);
                let (lo, _) = eig_extremes_sym(&c).unwrap();
                prop_assert!(lo > -1e-10);
            }

            #[test]
            fn spectral_norm_bounded_by_frobenius(m in small_matrix(5, 2.0)) {
                let s = spectral_norm(&m).unwrap();
                let f = entrywise_norm(&m, 2.0).unwrap();
                prop_assert!(s <= f + 1e-12);
            }
        }
    }
}
