//! Trust-region Levenberg-Marquardt.
//!
//! Each iteration solves
//!
//! ```text
//! min_p ‖J p + F‖₂   subject to   ‖D p‖₂ ≤ Δ
//! ```
//!
//! where `D` holds the running maximum of the Jacobian column norms and `Δ`
//! adapts to the ratio of actual to predicted reduction. The subproblem is
//! solved through the SVD of `J·D⁻¹` (Householder QR followed by one-sided
//! Jacobi), truncated at its numeric rank, so rank-deficient Jacobians give
//! minimum-norm steps instead of failures. The same factorization yields the
//! [`JacobianReport`] for every Jacobian evaluated.
//!
//! Counting: `nfev` includes the evaluation at the starting point, and
//! `njev` counts every Jacobian evaluation including a final non-finite one.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::conditioning::{householder_qr, pad_rows, square_svd, report_from_spectrum, JacobianReport, SvdSpectrum};
use crate::diff::{jacobian, Jacobian};
use crate::expr::{residuals, ExprTree};
use crate::{rng, Error, Result};

const ACCEPT_RATIO: f64 = 1e-4;
const SHRINK_BELOW: f64 = 0.25;
const GROW_ABOVE: f64 = 0.75;
const MAX_REJECTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    /// Maximum number of Jacobian evaluations (outer iterations).
    pub max_iterations: usize,
    /// Relative reduction tolerance on the sum of squares.
    pub ftol: f64,
    /// Relative tolerance on the trust radius versus `‖D θ‖`.
    pub xtol: f64,
    /// Cosine between the residual and any Jacobian column.
    pub gtol: f64,
    /// Initial trust radius is this factor times `‖D θ₀‖` (or the factor
    /// itself when that is zero).
    pub step_bound: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 10,
            ftol: f64::EPSILON.sqrt(),
            xtol: f64::EPSILON.sqrt(),
            gtol: 1e-10,
            step_bound: 100.0,
        }
    }
}

impl LmConfig {
    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.ftol > 0.0 && self.xtol > 0.0 && self.gtol > 0.0 && self.step_bound > 0.0) {
            return Err(Error::Config("tolerances and step bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct LocalOptResult {
    pub theta: Vec<f64>,
    /// Final `‖F‖₂²`.
    pub ssr: f64,
    pub initial_ssr: f64,
    pub nfev: usize,
    pub njev: usize,
    /// One report per finite Jacobian, in evaluation order.
    pub reports: Vec<JacobianReport>,
    pub termination: Termination,
    /// Objective at the start and after every accepted step.
    pub accepted: Vec<f64>,
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Scaled SVD of one Jacobian, reused for all trust-radius retries.
struct StepBasis {
    /// Retained singular values of `J·D⁻¹`.
    s: Vec<f64>,
    /// `uᵢᵀF` for the retained components.
    g: Vec<f64>,
    /// Matching right singular vectors (columns).
    v: DMatrix<f64>,
}

impl StepBasis {
    fn new(j: &DMatrix<f64>, f: &[f64], diag: &[f64]) -> (Self, SvdSpectrum) {
        let (n, k) = j.shape();
        let (r, qtf) = if n > k {
            let (r, qtf) = householder_qr(j, Some(f));
            (r, qtf.unwrap())
        } else {
            let mut qtf = f.to_vec();
            qtf.resize(k, 0.0);
            (pad_rows(j, k), qtf)
        };
        let mut sigma = square_svd(&r, false).sigma;
        sigma.resize(k, 0.0);
        let spectrum = SvdSpectrum::new(sigma);

        let mut scaled = r;
        for (c, d) in diag.iter().enumerate() {
            scaled.column_mut(c).unscale_mut(*d);
        }
        let svd = square_svd(&scaled, true);
        let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
        let tol = k as f64 * f64::EPSILON * smax;
        let u = svd.u.expect("vectors requested");
        let v_all = svd.v.expect("vectors requested");
        let qtf = DVector::from_vec(qtf);
        let keep: Vec<usize> = (0..k).filter(|&i| svd.sigma[i] > tol && smax > 0.0).collect();
        let s: Vec<f64> = keep.iter().map(|&i| svd.sigma[i]).collect();
        let g: Vec<f64> = keep
            .iter()
            .map(|&i| u.column(i).dot(&qtf))
            .collect();
        let v = DMatrix::from_fn(k, keep.len(), |r, c| v_all[(r, keep[c])]);
        (StepBasis { s, g, v }, spectrum)
    }

    fn step_norm(&self, lambda: f64) -> f64 {
        self.s
            .iter()
            .zip(&self.g)
            .map(|(s, g)| {
                let w = s * g / (s * s + lambda);
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Levenberg parameter giving a step of length within 10% of `delta`.
    fn lambda_for(&self, delta: f64) -> f64 {
        let q0 = self.step_norm(0.0);
        if q0 <= 1.1 * delta {
            return 0.0;
        }
        let a2: Vec<f64> = self.s.iter().zip(&self.g).map(|(s, g)| (s * g).powi(2)).collect();
        let mut lo = 0.0;
        let mut hi = a2.iter().sum::<f64>().sqrt() / delta;
        let mut lambda = 0.0;
        for _ in 0..100 {
            let qn = self.step_norm(lambda);
            if (qn - delta).abs() <= 0.1 * delta {
                break;
            }
            if qn > delta {
                lo = lambda;
            } else {
                hi = lambda;
            }
            // Newton on 1/‖q(λ)‖ - 1/Δ, which is close to linear in λ.
            let dq = -self
                .s
                .iter()
                .zip(&a2)
                .map(|(s, a)| a / (s * s + lambda).powi(3))
                .sum::<f64>()
                / qn;
            let psi = 1.0 / qn - 1.0 / delta;
            let dpsi = -dq / (qn * qn);
            let mut next = lambda - psi / dpsi;
            if !(next > lo && next < hi) {
                next = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            }
            lambda = next;
        }
        lambda
    }

    /// Scaled step `q = D p` and the predicted decrease `‖F‖² - ‖F + Jp‖²`.
    fn step(&self, lambda: f64) -> (DVector<f64>, f64) {
        let mut w = DVector::zeros(self.s.len());
        let mut pred = 0.0;
        for (i, (s, g)) in self.s.iter().zip(&self.g).enumerate() {
            let d = s * s + lambda;
            w[i] = -s * g / d;
            let t = s * s * g * g / d;
            pred += 2.0 * t - t * s * s / d;
        }
        (&self.v * w, pred)
    }
}

/// Minimizes `‖F(θ)‖₂²` from `theta0`.
///
/// `hook` sees every finite Jacobian before it is factorized.
pub fn levenberg_marquardt<R, J, H>(
    mut residual_fn: R,
    mut jacobian_fn: J,
    theta0: &[f64],
    config: &LmConfig,
    mut hook: H,
) -> LocalOptResult
where
    R: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> Jacobian,
    H: FnMut(&Jacobian),
{
    let k = theta0.len();
    let mut x = theta0.to_vec();
    let mut f = residual_fn(&x);
    let mut nfev = 1;
    let mut njev = 0;
    let mut fnorm2 = sum_sq(&f);
    let initial_ssr = fnorm2;
    let mut reports = Vec::new();
    let mut accepted = vec![fnorm2];

    let finish = |x: Vec<f64>, ssr, nfev, njev, reports, termination, accepted| LocalOptResult {
        theta: x,
        ssr,
        initial_ssr,
        nfev,
        njev,
        reports,
        termination,
        accepted,
    };

    if !all_finite(&x) || !all_finite(&f) {
        return finish(x, fnorm2, nfev, njev, reports, Termination::NumericalFailure, accepted);
    }
    if k == 0 {
        return finish(x, fnorm2, nfev, njev, reports, Termination::Converged, accepted);
    }

    let mut diag = vec![0.0; k];
    let mut delta = 0.0;
    let mut xnorm = 0.0;
    let mut termination = Termination::MaxIterations;

    'outer: for iter in 0..config.max_iterations {
        let jac = jacobian_fn(&x);
        njev += 1;
        if !jac.finite {
            termination = Termination::NumericalFailure;
            break;
        }
        hook(&jac);
        let j = &jac.matrix;

        let col_norms: Vec<f64> = (0..k).map(|c| j.column(c).norm()).collect();
        for (d, &cn) in diag.iter_mut().zip(&col_norms) {
            if iter == 0 {
                *d = if cn > 0.0 { cn } else { 1.0 };
            } else {
                *d = d.max(cn);
            }
        }
        if iter == 0 {
            xnorm = weighted_norm(&diag, &x);
            delta = config.step_bound * xnorm;
            if delta == 0.0 {
                delta = config.step_bound;
            }
        }

        let (basis, spectrum) = StepBasis::new(j, &f, &diag);
        reports.push(report_from_spectrum(spectrum));

        if fnorm2 == 0.0 {
            termination = Termination::Converged;
            break;
        }
        let fnorm = fnorm2.sqrt();
        let gnorm = (0..k)
            .filter(|&c| col_norms[c] > 0.0)
            .map(|c| {
                let dot: f64 = j.column(c).iter().zip(&f).map(|(a, b)| a * b).sum();
                dot.abs() / (col_norms[c] * fnorm)
            })
            .fold(0.0, f64::max);
        if gnorm <= config.gtol {
            termination = Termination::Converged;
            break;
        }

        let mut first = iter == 0;
        for _ in 0..MAX_REJECTIONS {
            let lambda = basis.lambda_for(delta);
            let (q, pred) = basis.step(lambda);
            let pnorm = q.norm();
            if first {
                delta = delta.min(pnorm);
                first = false;
            }
            let prered = pred / fnorm2;
            if prered.is_nan() || prered <= 0.0 || pnorm == 0.0 {
                termination = Termination::Converged;
                break 'outer;
            }
            let trial: Vec<f64> = x.iter().zip(q.iter()).zip(&diag).map(|((xi, qi), d)| xi + qi / d).collect();
            let f_new = residual_fn(&trial);
            nfev += 1;
            let trial_ok = all_finite(&f_new) && all_finite(&trial);
            let fnorm2_new = if trial_ok { sum_sq(&f_new) } else { f64::INFINITY };
            let actred = if trial_ok { 1.0 - fnorm2_new / fnorm2 } else { -1.0 };
            let ratio = actred / prered;

            if ratio < SHRINK_BELOW {
                delta = 0.5 * delta.min(pnorm);
            } else if ratio > GROW_ABOVE {
                delta = delta.max(2.0 * pnorm);
            }

            let accept = ratio > ACCEPT_RATIO && fnorm2_new < fnorm2;
            if accept {
                x = trial;
                f = f_new;
                fnorm2 = fnorm2_new;
                xnorm = weighted_norm(&diag, &x);
                accepted.push(fnorm2);
            }

            let ftol_hit = actred.abs() <= config.ftol && prered <= config.ftol && 0.5 * ratio <= 1.0;
            let xtol_hit = delta <= config.xtol * xnorm;
            if ftol_hit || xtol_hit || fnorm2 == 0.0 {
                termination = Termination::Converged;
                break 'outer;
            }
            if accept {
                continue 'outer;
            }
        }
        // Trust region collapsed without an acceptable step.
        termination = Termination::Converged;
        break;
    }

    finish(x, fnorm2, nfev, njev, reports, termination, accepted)
}

fn weighted_norm(diag: &[f64], x: &[f64]) -> f64 {
    diag.iter().zip(x).map(|(d, v)| (d * v).powi(2)).sum::<f64>().sqrt()
}

/// Runs LM on `tree` against data `(x, y)` starting from `theta0`.
pub fn fit_tree(
    tree: &ExprTree,
    x: &DMatrix<f64>,
    y: &[f64],
    theta0: &[f64],
    config: &LmConfig,
) -> Result<LocalOptResult> {
    if theta0.len() != tree.num_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector length",
            expected: tree.num_params(),
            actual: theta0.len(),
        });
    }
    // Validate dimensions once so the closures can unwrap.
    residuals(tree, theta0, x, y)?;
    Ok(levenberg_marquardt(
        |t| residuals(tree, t, x, y).expect("dimensions checked"),
        |t| jacobian(tree, t, x).expect("dimensions checked"),
        theta0,
        config,
        |_| {},
    ))
}

/// Multiplicative-plus-additive perturbation around `theta`.
///
/// Each entry is multiplied by a factor drawn uniformly from
/// `[1 - scale/2, 1 + scale]` and receives additive noise
/// `0.1·scale·|θ|·N(0,1)`. At scale 1 the factor range is `[0.5, 2]`;
/// above scale 2 it includes negative factors, so signs can flip.
pub fn perturb(theta: &[f64], scale: f64, rng: &mut rng::Rng) -> Vec<f64> {
    theta
        .iter()
        .map(|&t| {
            if scale == 0.0 {
                return t;
            }
            let m = rng.random_range(1.0 - 0.5 * scale..=1.0 + scale);
            let z: f64 = StandardNormal.sample(rng);
            t * m + 0.1 * scale * t.abs() * z
        })
        .collect()
}

/// Relative ssr slack under which two optima count as the same fit.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// LM runs from `starts` independent random points `θⱼ ~ N(0, 1)`.
/// Runs that end with a non-finite objective are dropped.
pub fn multistart(
    tree: &ExprTree,
    x: &DMatrix<f64>,
    y: &[f64],
    starts: usize,
    seed: u64,
    config: &LmConfig,
) -> Result<Vec<LocalOptResult>> {
    let k = tree.num_params();
    let mut fits = Vec::with_capacity(starts);
    for s in 0..starts {
        let mut r = rng::stream(seed, &[s as u64]);
        let theta0: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut r)).collect();
        let res = fit_tree(tree, x, y, &theta0, config)?;
        if res.ssr.is_finite() {
            fits.push(res);
        }
    }
    if fits.is_empty() {
        return Err(Error::AllRestartsFailed(starts));
    }
    Ok(fits)
}

/// Fits whose ssr is within [`TIE_TOLERANCE`] of the best one.
pub fn tied_optima(fits: &[LocalOptResult]) -> Vec<&LocalOptResult> {
    let best = fits.iter().map(|f| f.ssr).fold(f64::INFINITY, f64::min);
    fits.iter()
        .filter(|f| f.ssr <= best * (1.0 + TIE_TOLERANCE) + f64::MIN_POSITIVE)
        .collect()
}

/// Lowest-ssr result of [`multistart`], with the tree carrying its
/// parameters. Ties go to the earlier start.
pub fn multistart_fit(
    tree: &ExprTree,
    x: &DMatrix<f64>,
    y: &[f64],
    starts: usize,
    seed: u64,
    config: &LmConfig,
) -> Result<(ExprTree, LocalOptResult)> {
    let fits = multistart(tree, x, y, starts, seed, config)?;
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.ssr < a.ssr { b } else { a })
        .expect("non-empty");
    Ok((tree.with_parameters(&best.theta)?, best))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartStats {
    pub restarts: usize,
    pub mean_nfev: f64,
    pub mean_njev: f64,
    /// Fraction of restarts within `(1 + 1e-6)` of the best objective.
    pub success_rate: f64,
    pub best_ssr: f64,
    pub failures: usize,
}

/// Relative slack on the objective for a restart to count as a success.
pub const SUCCESS_TOLERANCE: f64 = 1e-6;

/// Restart experiment around the optimum reachable from the tree's current
/// parameters.
///
/// A reference optimum is located first: LM from the stored parameters, then
/// 20 perturbed multi-starts around it, keeping the best. Each of the
/// `n_restarts` runs then starts from an independent perturbation of that
/// reference and runs LM to convergence under `config`.
pub fn restart_experiment(
    tree: &ExprTree,
    x: &DMatrix<f64>,
    y: &[f64],
    n_restarts: usize,
    perturbation_scale: f64,
    seed: u64,
    config: &LmConfig,
) -> Result<RestartStats> {
    if n_restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    let mut reference = fit_tree(tree, x, y, &tree.parameters(), config)?;
    for s in 0..20u64 {
        let mut r = rng::stream(seed, &[u64::MAX, s]);
        let start = perturb(&reference.theta, perturbation_scale, &mut r);
        let res = fit_tree(tree, x, y, &start, config)?;
        if res.ssr.is_finite() && res.ssr < reference.ssr {
            reference = res;
        }
    }

    let runs: Vec<LocalOptResult> = (0..n_restarts)
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let start = perturb(&reference.theta, perturbation_scale, &mut r);
            fit_tree(tree, x, y, &start, config)
        })
        .collect::<Result<_>>()?;

    let failures = runs
        .iter()
        .filter(|r| r.termination == Termination::NumericalFailure && !r.ssr.is_finite())
        .count();
    if failures == n_restarts {
        return Err(Error::AllRestartsFailed(n_restarts));
    }
    let best_ssr = runs
        .iter()
        .map(|r| r.ssr)
        .filter(|s| s.is_finite())
        .fold(reference.ssr, f64::min);
    let successes = runs
        .iter()
        .filter(|r| r.ssr <= (1.0 + SUCCESS_TOLERANCE) * best_ssr)
        .count();
    let n = n_restarts as f64;
    Ok(RestartStats {
        restarts: n_restarts,
        mean_nfev: runs.iter().map(|r| r.nfev as f64).sum::<f64>() / n,
        mean_njev: runs.iter().map(|r| r.njev as f64).sum::<f64>() / n,
        success_rate: successes as f64 / n,
        best_ssr,
        failures,
    })
}
