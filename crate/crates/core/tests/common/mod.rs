//! Brute-force references for the test suite. Nothing here calls into the
//! differentiation, SVD or least-squares code it is used to check.

#![allow(dead_code)]

use nalgebra::DMatrix;
use srcond::expr::ExprTree;

/// Row-major dense matrix, kept deliberately plain.
pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Model output at `theta`, one value per row of `x`.
fn predict(tree: &ExprTree, theta: &[f64], x: &DMatrix<f64>) -> Vec<f64> {
    tree.evaluate_with(theta, x).expect("valid tree and data")
}

/// Default step for column `j`: `ε^(1/3)·max(1, |θⱼ|)`.
pub fn fd_step(theta_j: f64) -> f64 {
    f64::EPSILON.cbrt() * theta_j.abs().max(1.0)
}

/// Central-difference Jacobian of the residual `y − f(θ)` with per-column
/// step `h(θⱼ)`.
pub fn fd_jacobian_with(tree: &ExprTree, theta: &[f64], x: &DMatrix<f64>, h: impl Fn(f64) -> f64) -> Rows {
    let n = x.nrows();
    let k = theta.len();
    let mut out = vec![vec![0.0; k]; n];
    for j in 0..k {
        let step = h(theta[j]);
        assert!(step > 0.0);
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[j] += step;
        minus[j] -= step;
        let fp = predict(tree, &plus, x);
        let fm = predict(tree, &minus, x);
        for i in 0..n {
            // The residual is y − f, so its derivative is −∂f/∂θ.
            out[i][j] = -(fp[i] - fm[i]) / (2.0 * step);
        }
    }
    out
}

pub fn fd_jacobian(tree: &ExprTree, theta: &[f64], x: &DMatrix<f64>) -> Rows {
    fd_jacobian_with(tree, theta, x, fd_step)
}

/// Largest column-wise relative deviation `‖aⱼ − bⱼ‖∞ / ‖bⱼ‖∞`, with the
/// column scale floored at `floor`.
pub fn max_column_deviation(a: &Rows, b: &Rows, floor: f64) -> f64 {
    let k = b.first().map_or(0, |r| r.len());
    let mut worst: f64 = 0.0;
    for j in 0..k {
        let scale = b.iter().map(|r| r[j].abs()).fold(floor, f64::max);
        let diff = a.iter().zip(b).map(|(ra, rb)| (ra[j] - rb[j]).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    worst
}

/// `AᵀA` by explicit triple loop.
pub fn gram(a: &Rows) -> Rows {
    let k = a.first().map_or(0, |r| r.len());
    let mut g = vec![vec![0.0; k]; k];
    for row in a {
        for p in 0..k {
            for q in 0..k {
                g[p][q] += row[p] * row[q];
            }
        }
    }
    g
}

/// Eigenvalues of a symmetric matrix by the cyclic two-sided Jacobi method.
pub fn symmetric_eigenvalues(mut s: Rows) -> Vec<f64> {
    let k = s.len();
    for _ in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|p| (0..k).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| s[p][q] * s[p][q])
            .sum();
        let diag: f64 = (0..k).map(|p| s[p][p] * s[p][p]).sum();
        if off <= 1e-34 * diag || off == 0.0 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                if s[p][q] == 0.0 {
                    continue;
                }
                let theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for row in s.iter_mut() {
                    let (a, b) = (row[p], row[q]);
                    row[p] = c * a - sn * b;
                    row[q] = sn * a + c * b;
                }
                let (rp, rq) = (s[p].clone(), s[q].clone());
                for r in 0..k {
                    s[p][r] = c * rp[r] - sn * rq[r];
                    s[q][r] = sn * rp[r] + c * rq[r];
                }
            }
        }
    }
    (0..k).map(|p| s[p][p]).collect()
}

/// Singular values as square roots of the eigenvalues of `JᵀJ`, descending.
/// Negative round-off eigenvalues are clamped to zero.
pub fn eig_jtj(j: &Rows) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetric_eigenvalues(gram(j)).into_iter().map(|e| e.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

#[derive(Debug)]
pub struct Singular;

/// Least-squares solution from the normal equations `AᵀA θ = Aᵀb`, solved
/// by Gaussian elimination with partial pivoting.
pub fn normal_equations_ls(a: &Rows, b: &[f64]) -> Result<Vec<f64>, Singular> {
    let k = a.first().map_or(0, |r| r.len());
    let mut m = gram(a);
    let mut rhs = vec![0.0; k];
    for (row, bi) in a.iter().zip(b) {
        for p in 0..k {
            rhs[p] += row[p] * bi;
        }
    }
    let scale = (0..k).map(|p| m[p][p].abs()).fold(0.0, f64::max);
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap()).unwrap();
        if m[piv][c].abs() <= 1e-14 * scale || scale == 0.0 {
            return Err(Singular);
        }
        m.swap(c, piv);
        rhs.swap(c, piv);
        for r in c + 1..k {
            let f = m[r][c] / m[c][c];
            let pivot_row = m[c].clone();
            for (dst, src) in m[r][c..].iter_mut().zip(&pivot_row[c..]) {
                *dst -= f * src;
            }
            rhs[r] -= f * rhs[c];
        }
    }
    let mut theta = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|q| m[c][q] * theta[q]).sum();
        theta[c] = (rhs[c] - s) / m[c][c];
    }
    Ok(theta)
}

/// `‖b − Aθ‖²` by direct summation.
pub fn ssr(a: &Rows, b: &[f64], theta: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(row, bi)| {
            let r = bi - row.iter().zip(theta).map(|(x, t)| x * t).sum::<f64>();
            r * r
        })
        .sum()
}

/// Relative difference `|a − b| / max(|a|, |b|)`, zero when both are zero.
pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}
