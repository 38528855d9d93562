//! Joint fit of `(N0, theta, delta, Nd)` to coincidence curves at fixed `alpha`.
//!
//! The counts depend on the state only through `u = sin 2theta cos delta` and
//! `v = cos 2theta`, so `(theta, delta)`, `(-theta, pi - delta)`,
//! `(theta, -delta)` and `(theta + pi, delta)` all give identical curves. Fitted
//! values are reported in the canonical copy `theta in [-pi/2, 0]`,
//! `delta in [0, pi]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use super::lsq::{invert_spd, least_squares, Bound, FitResult, LeastSquaresProblem, LmOptions};
use crate::error::FitError;
use crate::quantum::{CountModel, TwoPhotonState};

/// Coincidence counts versus `beta` at one fixed `alpha` (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCurve {
    pub alpha: f64,
    /// `(beta, counts)` pairs.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFit {
    pub state: TwoPhotonState,
    pub counts: CountModel,
    /// Parameters in the order `N0, theta, delta, Nd`.
    pub fit: FitResult,
}

pub const N0: usize = 0;
pub const THETA: usize = 1;
pub const DELTA: usize = 2;
pub const ND: usize = 3;

/// `N0 P_VV + Nd` without clipping, so the fit sees a smooth surface.
pub fn state_model(p: &[f64], alpha: f64, beta: f64) -> f64 {
    let (s2t, c2t) = (2.0 * p[THETA]).sin_cos();
    let u = s2t * p[DELTA].cos();
    let (s2a, c2a) = (2.0 * alpha).sin_cos();
    let (s2b, c2b) = (2.0 * beta).sin_cos();
    let prob = (1.0 - u * (c2a + c2b) + c2a * c2b + c2t * s2a * s2b) / 4.0;
    p[N0] * prob + p[ND]
}

fn state_gradient(p: &[f64], alpha: f64, beta: f64, g: &mut [f64; 4]) {
    let (s2t, c2t) = (2.0 * p[THETA]).sin_cos();
    let (sd, cd) = p[DELTA].sin_cos();
    let (s2a, c2a) = (2.0 * alpha).sin_cos();
    let (s2b, c2b) = (2.0 * beta).sin_cos();
    let cc = c2a + c2b;
    let ss = s2a * s2b;
    g[N0] = (1.0 - s2t * cd * cc + c2a * c2b + c2t * ss) / 4.0;
    g[THETA] = p[N0] * (-2.0 * c2t * cd * cc - 2.0 * s2t * ss) / 4.0;
    g[DELTA] = p[N0] * (s2t * sd * cc) / 4.0;
    g[ND] = 1.0;
}

struct Flat {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
}

impl LeastSquaresProblem for Flat {
    fn n_residuals(&self) -> usize {
        self.y.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.y.len() {
            out[i] = (self.y[i] - state_model(p, self.alpha[i], self.beta[i])) / self.s[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let mut g = [0.0; 4];
        for i in 0..self.y.len() {
            state_gradient(p, self.alpha[i], self.beta[i], &mut g);
            for j in 0..4 {
                jac[(i, j)] = -g[j] / self.s[i];
            }
        }
    }
}

/// Weighted linear fit in `(N0, N0 u, N0 v, Nd)` mapped back to a starting
/// point in the canonical gauge.
fn linear_start(f: &Flat) -> [f64; 4] {
    let m = f.y.len();
    let a = DMatrix::from_fn(m, 4, |i, j| {
        let (s2a, c2a) = (2.0 * f.alpha[i]).sin_cos();
        let (s2b, c2b) = (2.0 * f.beta[i]).sin_cos();
        let v = match j {
            0 => (1.0 + c2a * c2b) / 4.0,
            1 => -(c2a + c2b) / 4.0,
            2 => s2a * s2b / 4.0,
            _ => 1.0,
        };
        v / f.s[i]
    });
    let b = DVector::from_fn(m, |i, _| f.y[i] / f.s[i]);
    let max_y = f.y.iter().cloned().fold(0.0, f64::max);
    let fallback = [4.0 * max_y.max(1.0), -0.3, FRAC_PI_2, 0.0];
    let Some(sol) = a.clone().svd(true, true).solve(&b, 1e-12).ok() else {
        return fallback;
    };
    let n0 = sol[0];
    if !(n0 > 0.0) {
        return fallback;
    }
    let v = (sol[2] / n0).clamp(-0.999, 0.999);
    let two_theta = -v.acos();
    let u = sol[1] / n0;
    let cos_delta = (u / two_theta.sin()).clamp(-0.999, 0.999);
    [n0, two_theta / 2.0, cos_delta.acos(), sol[3].max(0.0)]
}

/// Maps any `(theta, delta)` onto the canonical copy, returning the sign
/// each parameter picked up.
pub fn canonical_gauge(theta: f64, delta: f64) -> (f64, f64, f64, f64) {
    let mut t = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    let mut d = delta;
    let (mut st, mut sd) = (1.0, 1.0);
    if t > 0.0 {
        t = -t;
        d = PI - d;
        st = -1.0;
        sd = -1.0;
    }
    d = d.rem_euclid(2.0 * PI);
    if d > PI {
        d = 2.0 * PI - d;
        sd = -sd;
    }
    (t, d, st, sd)
}

pub fn fit_state(curves: &[StateCurve]) -> Result<StateFit, FitError> {
    let mut alphas: Vec<f64> = curves.iter().map(|c| c.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if alphas.len() < 4 {
        return Err(FitError::InsufficientData(format!(
            "state fit needs four alpha curves, got {}",
            alphas.len()
        )));
    }
    if let Some(c) = curves.iter().find(|c| c.points.len() < 8) {
        return Err(FitError::InsufficientData(format!(
            "curve at alpha={:.2} deg has {} points, need 8",
            c.alpha.to_degrees(),
            c.points.len()
        )));
    }
    let mut flat = Flat {
        alpha: vec![],
        beta: vec![],
        y: vec![],
        s: vec![],
    };
    for c in curves {
        for &(beta, n) in &c.points {
            if !beta.is_finite() || !n.is_finite() {
                return Err(FitError::NonFinite("state curve"));
            }
            flat.alpha.push(c.alpha);
            flat.beta.push(beta);
            flat.y.push(n);
            flat.s.push(n.max(1.0).sqrt());
        }
    }

    let init = linear_start(&flat);
    let bounds = [
        Bound::at_least(0.0),
        Bound::FREE,
        Bound::FREE,
        Bound::at_least(0.0),
    ];
    let raw = least_squares(&flat, &init, Some(&bounds), &LmOptions::default()).map_err(|e| match e {
        FitError::SingularJacobian => FitError::DegenerateFit("normal matrix singular: delta is not identifiable".into()),
        other => other,
    })?;

    let (theta, delta, st, sd) = canonical_gauge(raw.params[THETA], raw.params[DELTA]);
    if (2.0 * theta).sin().abs() < 1e-6 {
        return Err(FitError::DegenerateFit(
            "sin 2theta = 0: delta does not enter the counts".into(),
        ));
    }
    let mut fit = raw.transformed(&[0, 1, 2, 3], &[1.0, st, sd, 1.0]);
    fit.params[THETA] = theta;
    fit.params[DELTA] = delta;
    let cov = DMatrix::from_fn(4, 4, |i, j| fit.covariance[i][j]);
    if invert_spd(&cov).is_none() {
        return Err(FitError::DegenerateFit("covariance is singular".into()));
    }
    Ok(StateFit {
        state: TwoPhotonState::new(theta, delta),
        counts: CountModel {
            n0: fit.params[N0],
            nd: fit.params[ND],
        },
        fit,
    })
}

/// Curves on a regular `beta` grid sampled from the noiseless model.
pub fn model_curves(state: &TwoPhotonState, counts: &CountModel, alphas: &[f64], betas: &[f64]) -> Vec<StateCurve> {
    let p = [counts.n0, state.theta, state.delta, counts.nd];
    alphas
        .iter()
        .map(|&alpha| StateCurve {
            alpha,
            points: betas.iter().map(|&b| (b, state_model(&p, alpha, b))).collect(),
        })
        .collect()
}

/// The four `alpha` values and the 10-degree `beta` grid of the reference scan.
pub fn reference_grid() -> (Vec<f64>, Vec<f64>) {
    let alphas = [0.0f64, 45.0, 90.0, 135.0].iter().map(|d| d.to_radians()).collect();
    let betas = (0..36).map(|i| (i as f64 * 10.0).to_radians()).collect();
    (alphas, betas)
}
