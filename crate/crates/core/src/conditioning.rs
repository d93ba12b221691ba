//! Singular values, numeric rank and condition numbers of Jacobians.
//!
//! Singular values come from a one-sided (Hestenes) Jacobi iteration. Tall
//! matrices are first reduced to their `k × k` triangular factor by a
//! Householder QR, which preserves the spectrum and makes the Jacobi sweeps
//! independent of the number of observations. The square factor is then
//! re-factored with column pivoting and Jacobi runs on the transposed
//! triangle, which needs only a few sweeps. One-sided Jacobi computes
//! small singular values to high relative accuracy, which is what the rank
//! decision needs.
//!
//! Conventions: `σ₁ ≥ σ₂ ≥ … ≥ σ_k ≥ 0`; the numeric rank `r` counts the
//! values strictly above `k·ε·σ₁` with `ε = f64::EPSILON`; `κ = σ₁/σ_k` and
//! the truncated `κ_r = σ₁/σ_r`.

use nalgebra::DMatrix;

use crate::diff::Jacobian;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Singular values in descending order, padded with zeros to `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdSpectrum {
    pub sigma: Vec<f64>,
}

impl SvdSpectrum {
    pub fn new(mut sigma: Vec<f64>) -> Self {
        sigma.sort_by(|a, b| b.total_cmp(a));
        SvdSpectrum { sigma }
    }

    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    pub fn largest(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Rank threshold `k·ε·σ₁`.
    pub fn tolerance(&self) -> f64 {
        self.k() as f64 * f64::EPSILON * self.largest()
    }
}

/// Conditioning summary of one Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    /// Parameter count (columns).
    pub k: usize,
    /// Numeric rank.
    pub rank: usize,
    /// `σ₁/σ_k`; `+∞` for an exactly singular spectrum, NaN when `k = 0`.
    pub kappa: f64,
    /// `σ₁/σ_r`; `+∞` only when `r = 0`, NaN when `k = 0`.
    pub kappa_r: f64,
    pub tolerance: f64,
    pub sigma: Vec<f64>,
}

impl JacobianReport {
    pub fn redundant(&self) -> usize {
        self.k - self.rank
    }
}

/// Singular values of `j`. Non-finite input is rejected.
pub fn singular_values(j: &Jacobian) -> Result<SvdSpectrum> {
    if !j.finite {
        return Err(Error::NonFinite("Jacobian"));
    }
    Ok(spectrum_of(&j.matrix))
}

/// Spectrum of a finite matrix.
pub fn spectrum_of(a: &DMatrix<f64>) -> SvdSpectrum {
    let k = a.ncols();
    let reduced = if a.nrows() > k {
        householder_qr(a, None).0
    } else {
        pad_rows(a, k)
    };
    let mut sigma = square_svd(&reduced, false).sigma;
    sigma.resize(k, 0.0);
    SvdSpectrum::new(sigma)
}

/// Number of singular values strictly greater than `k·ε·σ₁`.
pub fn numeric_rank(spectrum: &SvdSpectrum) -> usize {
    let s1 = spectrum.largest();
    if s1 <= 0.0 {
        return 0;
    }
    let tol = spectrum.tolerance();
    spectrum.sigma.iter().filter(|&&s| s > tol).count()
}

/// `(κ, κ_r)` for a spectrum and its numeric rank.
pub fn condition_numbers(spectrum: &SvdSpectrum, rank: usize) -> (f64, f64) {
    let k = spectrum.k();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let s1 = spectrum.largest();
    let ratio = |s: f64| if s > 0.0 { s1 / s } else { f64::INFINITY };
    let kappa = ratio(spectrum.sigma[k - 1]);
    let kappa_r = if rank == 0 {
        f64::INFINITY
    } else {
        ratio(spectrum.sigma[rank - 1])
    };
    (kappa, kappa_r)
}

/// Full conditioning report for one Jacobian.
pub fn analyze(j: &Jacobian) -> Result<JacobianReport> {
    Ok(report_from_spectrum(singular_values(j)?))
}

pub fn report_from_spectrum(spectrum: SvdSpectrum) -> JacobianReport {
    let rank = numeric_rank(&spectrum);
    let (kappa, kappa_r) = condition_numbers(&spectrum, rank);
    JacobianReport {
        k: spectrum.k(),
        rank,
        kappa,
        kappa_r,
        tolerance: spectrum.tolerance(),
        sigma: spectrum.sigma,
    }
}

/// Copy of `a` with zero rows appended up to `rows`.
pub(crate) fn pad_rows(a: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.max(a.nrows()), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out
}

/// Householder QR of an `n × k` matrix with `n > k`.
///
/// Returns the `k × k` upper-triangular factor and, if `rhs` is given, the
/// first `k` entries of `Qᵀ·rhs`.
pub(crate) fn householder_qr(a: &DMatrix<f64>, rhs: Option<&[f64]>) -> (DMatrix<f64>, Option<Vec<f64>>) {
    let (n, k) = a.shape();
    debug_assert!(n > k);
    let mut w = a.clone();
    let mut b = rhs.map(|r| r.to_vec());
    let mut v = vec![0.0; n];
    for j in 0..k {
        let m = n - j;
        v[..m].copy_from_slice(&w.as_slice()[j * n + j..(j + 1) * n]);
        let norm = dot(&v[..m], &v[..m]).sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vtv = dot(&v[..m], &v[..m]);
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        let data = w.as_mut_slice();
        for c in j..k {
            let col = &mut data[c * n + j..(c + 1) * n];
            let f = beta * dot(col, &v[..m]);
            axpy_neg(f, &v[..m], col);
        }
        if let Some(b) = b.as_mut() {
            let f = beta * dot(&b[j..], &v[..m]);
            axpy_neg(f, &v[..m], &mut b[j..]);
        }
    }
    let mut r = DMatrix::zeros(k, k);
    for c in 0..k {
        for i in 0..=c {
            r[(i, c)] = w[(i, c)];
        }
    }
    (r, b.map(|mut b| {
        b.truncate(k);
        b
    }))
}

/// Result of a one-sided Jacobi sweep: `A·V = W` with orthogonal columns
/// in `W`, whose norms are the singular values (same order as `V`).
pub(crate) struct JacobiSvd {
    pub sigma: Vec<f64>,
    pub v: Option<DMatrix<f64>>,
    pub w: DMatrix<f64>,
}

/// SVD of a square matrix, `A = U·diag(σ)·Vᵀ`, with columns of `U` and `V`
/// in the order of `sigma` (not sorted).
pub(crate) struct SquareSvd {
    pub sigma: Vec<f64>,
    pub u: Option<DMatrix<f64>>,
    pub v: Option<DMatrix<f64>>,
}

/// SVD of a square matrix through a column-pivoted QR `A·P = Q·R`
/// followed by one-sided Jacobi on `Rᵀ`. The rows of `R` are graded by the
/// pivoting, so Jacobi needs far fewer sweeps than on `A` itself.
pub(crate) fn square_svd(a: &DMatrix<f64>, want_vectors: bool) -> SquareSvd {
    let k = a.ncols();
    debug_assert_eq!(a.nrows(), k);
    let (r, reflectors, perm) = pivoted_qr(a.clone());
    // Rᵀ·Vj = W  gives  R = Vj·Σ·(W/σ)ᵀ  and so  A = (Q·Vj)·Σ·(P·W/σ)ᵀ.
    let svd = one_sided_jacobi(r.transpose(), want_vectors);
    if !want_vectors {
        return SquareSvd {
            sigma: svd.sigma,
            u: None,
            v: None,
        };
    }
    let mut u = svd.v.expect("vectors requested");
    for (j, (h, beta)) in reflectors.iter().enumerate().rev() {
        for c in 0..k {
            let col = &mut u.as_mut_slice()[c * k + j..(c + 1) * k];
            let f = beta * dot(col, h);
            axpy_neg(f, h, col);
        }
    }
    let mut v = DMatrix::zeros(k, k);
    for c in 0..k {
        let s = svd.sigma[c];
        if s > 0.0 {
            for (i, &p) in perm.iter().enumerate() {
                v[(p, c)] = svd.w[(i, c)] / s;
            }
        }
    }
    SquareSvd {
        sigma: svd.sigma,
        u: Some(u),
        v: Some(v),
    }
}

/// Householder QR with column pivoting on a square matrix. Returns `R`, the
/// reflectors `(h, β)` with `H = I − β·h·hᵀ` acting on rows `j..`, and the
/// permutation (`perm[j]` is the original index of column `j`).
#[allow(clippy::type_complexity)]
fn pivoted_qr(mut w: DMatrix<f64>) -> (DMatrix<f64>, Vec<(Vec<f64>, f64)>, Vec<usize>) {
    let k = w.ncols();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut reflectors = Vec::with_capacity(k);
    for j in 0..k {
        let data = w.as_mut_slice();
        let norms = (j..k).map(|c| {
            let col = &data[c * k + j..(c + 1) * k];
            dot(col, col)
        });
        let best = j + norms
            .enumerate()
            .fold((0, -1.0), |acc, (i, n)| if n > acc.1 { (i, n) } else { acc })
            .0;
        if best != j {
            for i in 0..k {
                data.swap(j * k + i, best * k + i);
            }
            perm.swap(j, best);
        }
        let m = k - j;
        let mut h = data[j * k + j..(j + 1) * k].to_vec();
        let norm = dot(&h, &h).sqrt();
        let alpha = if h[0] > 0.0 { -norm } else { norm };
        h[0] -= alpha;
        let hth = dot(&h, &h);
        let beta = if norm == 0.0 || hth == 0.0 { 0.0 } else { 2.0 / hth };
        if beta != 0.0 {
            for c in j..k {
                let col = &mut data[c * k + j..(c + 1) * k];
                let f = beta * dot(col, &h);
                axpy_neg(f, &h, col);
            }
        }
        debug_assert_eq!(h.len(), m);
        reflectors.push((h, beta));
    }
    let mut r = DMatrix::zeros(k, k);
    for c in 0..k {
        for i in 0..=c {
            r[(i, c)] = w[(i, c)];
        }
    }
    (r, reflectors, perm)
}

fn rotate(data: &mut [f64], m: usize, p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (lo, hi) = data.split_at_mut(q * m);
    let cp = &mut lo[p * m..(p + 1) * m];
    let cq = &mut hi[..m];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

pub(crate) fn one_sided_jacobi(mut a: DMatrix<f64>, want_v: bool) -> JacobiSvd {
    let (m, k) = a.shape();
    let mut v = want_v.then(|| DMatrix::<f64>::identity(k, k));
    let tol = f64::EPSILON * (m.max(1) as f64).sqrt();
    let col_norm2 = |a: &DMatrix<f64>, j: usize| {
        let c = &a.as_slice()[j * m..(j + 1) * m];
        dot(c, c)
    };

    for _ in 0..MAX_SWEEPS {
        // Exact norms once per sweep; within a sweep they are updated in
        // closed form after each rotation.
        let mut norms: Vec<f64> = (0..k).map(|j| col_norm2(&a, j)).collect();
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let data = a.as_slice();
                let gamma = dot(&data[p * m..(p + 1) * m], &data[q * m..(q + 1) * m]);
                if gamma.abs() <= tol * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(a.as_mut_slice(), m, p, q, c, s);
                if let Some(v) = v.as_mut() {
                    rotate(v.as_mut_slice(), k, p, q, c, s);
                }
                norms[p] = (alpha - t * gamma).max(0.0);
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = (0..k).map(|j| col_norm2(&a, j).sqrt()).collect();
    JacobiSvd { sigma, v, w: a }
}

/// Dot product with four partial sums.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y -= f·x`.
fn axpy_neg(f: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= f * xi;
    }
}
