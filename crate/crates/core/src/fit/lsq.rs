//! Damped Gauss-Newton (Levenberg-Marquardt) least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::FitError;

/// A weighted least-squares problem expressed through its residual vector
/// `r_i(p) = (y_i - f_i(p)) / sigma_i`.
pub trait LeastSquaresProblem {
    fn n_residuals(&self) -> usize;

    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// `d r_i / d p_j`, row-major by residual. Defaults to central differences.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        numeric_jacobian(self, p, jac);
    }
}

/// Central-difference Jacobian with step `1e-6 * max(|p_j|, 1)`.
pub fn numeric_jacobian<P: LeastSquaresProblem + ?Sized>(problem: &P, p: &[f64], jac: &mut DMatrix<f64>) {
    let m = problem.n_residuals();
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1.0);
        q[j] = p[j] + h;
        problem.residuals(&q, &mut hi);
        q[j] = p[j] - h;
        problem.residuals(&q, &mut lo);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (hi[i] - lo[i]) / (2.0 * h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const FREE: Bound = Bound {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn at_least(lo: f64) -> Self {
        Self::new(lo, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub chi2_rtol: f64,
    pub gradient_tol: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            chi2_rtol: 1e-10,
            gradient_tol: 1e-10,
            lambda0: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i][j]
    }

    /// Reorders or flips parameters: `new[k] = sign[k] * old[perm[k]]`.
    pub fn transformed(&self, perm: &[usize], sign: &[f64]) -> FitResult {
        let n = perm.len();
        let params = (0..n).map(|k| sign[k] * self.params[perm[k]]).collect();
        let covariance: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| sign[a] * sign[b] * self.covariance[perm[a]][perm[b]])
                    .collect()
            })
            .collect();
        let sigmas = (0..n).map(|k| covariance[k][k].max(0.0).sqrt()).collect();
        FitResult {
            params,
            sigmas,
            covariance,
            ..self.clone()
        }
    }
}

fn project(p: &mut [f64], bounds: Option<&[Bound]>) {
    if let Some(b) = bounds {
        for (v, bd) in p.iter_mut().zip(b) {
            *v = v.clamp(bd.lo, bd.hi);
        }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `sum r_i(p)^2` starting at `init`.
///
/// Bounds are enforced by projecting every trial point onto the box. The
/// covariance is `(J^T J)^-1` at the optimum, scaled by `chi2 / dof` when
/// there are more residuals than parameters. A fit that exhausts the
/// iteration budget is returned with `converged = false`.
pub fn least_squares<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    init: &[f64],
    bounds: Option<&[Bound]>,
    opts: &LmOptions,
) -> Result<FitResult, FitError> {
    let n = init.len();
    let m = problem.n_residuals();
    if m == 0 || n == 0 {
        return Err(FitError::InsufficientData("no residuals or parameters".into()));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("initial parameters"));
    }
    if let Some(b) = bounds {
        assert_eq!(b.len(), n, "one bound per parameter");
    }

    let mut p = init.to_vec();
    project(&mut p, bounds);
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut chi2 = sum_sq(&r);
    if !chi2.is_finite() {
        return Err(FitError::NonFinite("initial residuals"));
    }

    let mut jac = DMatrix::zeros(m, n);
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if chi2 == 0.0 {
            converged = true;
            break;
        }
        problem.jacobian(&p, &mut jac);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if grad.amax() < opts.gradient_tol {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let diag_floor = 1e-15 * jtj.diagonal().amax().max(1e-300);

        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            for k in 0..n {
                trial[k] = p[k] + step[k];
            }
            project(&mut trial, bounds);
            problem.residuals(&trial, &mut r_trial);
            let chi2_trial = sum_sq(&r_trial);
            if chi2_trial.is_finite() && chi2_trial <= chi2 {
                let rel = (chi2 - chi2_trial) / chi2;
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                chi2 = chi2_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < opts.chi2_rtol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step exists at any damping: numerically stationary
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    problem.jacobian(&p, &mut jac);
    let jtj = jac.transpose() * &jac;
    let inv = invert_spd(&jtj).ok_or(FitError::SingularJacobian)?;
    let dof = m.saturating_sub(n);
    let scale = if dof > 0 { chi2 / dof as f64 } else { 1.0 };
    let covariance: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)]) * scale).collect())
        .collect();
    let sigmas = (0..n).map(|i| covariance[i][i].max(0.0).sqrt()).collect();
    Ok(FitResult {
        params: p,
        sigmas,
        covariance,
        chi2,
        dof,
        converged,
        iterations,
    })
}

/// Inverse of a symmetric positive-definite matrix, or `None` when it is
/// singular to working precision.
pub fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    // equilibrate so that a badly scaled but well-posed problem still passes
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * s[i] * s[j]);
    let eig = scaled.clone().symmetric_eigen();
    let (min, max) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(v.abs())));
    if !(min > 1e-13 * max) {
        return None;
    }
    let inv = scaled.cholesky()?.inverse();
    Some(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * s[i] * s[j]))
}

/// Generic weighted curve `y ~ f(x; p)` with optional analytic gradient.
pub struct CurveProblem<'a, F, G>
where
    F: Fn(f64, &[f64]) -> f64,
    G: Fn(f64, &[f64], &mut [f64]),
{
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sigma: &'a [f64],
    pub f: F,
    pub grad: Option<G>,
}

impl<F, G> LeastSquaresProblem for CurveProblem<'_, F, G>
where
    F: Fn(f64, &[f64]) -> f64,
    G: Fn(f64, &[f64], &mut [f64]),
{
    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.x.len() {
            out[i] = (self.y[i] - (self.f)(self.x[i], p)) / self.sigma[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        match &self.grad {
            None => numeric_jacobian(self, p, jac),
            Some(g) => {
                let mut row = vec![0.0; p.len()];
                for i in 0..self.x.len() {
                    g(self.x[i], p, &mut row);
                    for (j, v) in row.iter().enumerate() {
                        jac[(i, j)] = -v / self.sigma[i];
                    }
                }
            }
        }
    }
}

/// Poisson weights `sqrt(max(N, 1))`.
pub fn poisson_sigma(counts: &[f64]) -> Vec<f64> {
    counts.iter().map(|n| n.max(1.0).sqrt()).collect()
}
