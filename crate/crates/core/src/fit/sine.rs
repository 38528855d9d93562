//! `A sin(2 pi / T (x + phi)) + D` fits to polarizer scans (angles in degrees).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::lsq::{least_squares, FitResult, LeastSquaresProblem, LmOptions};
use crate::error::FitError;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineParams {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub offset: f64,
}

impl SineParams {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (2.0 * PI / self.period * (x + self.phase)).sin() + self.offset
    }

    fn to_vec(self) -> [f64; 4] {
        [self.amplitude, self.period, self.phase, self.offset]
    }

    fn from_slice(p: &[f64]) -> Self {
        Self {
            amplitude: p[0],
            period: p[1],
            phase: p[2],
            offset: p[3],
        }
    }
}

/// One measured point of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub angle_deg: f64,
    pub value: f64,
    /// One-sigma error; `None` means Poisson (`sqrt(max(value, 1))`).
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineFit {
    pub params: SineParams,
    pub fit: FitResult,
}

struct SineProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    s: &'a [f64],
}

impl LeastSquaresProblem for SineProblem<'_> {
    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let sp = SineParams::from_slice(p);
        for i in 0..self.x.len() {
            out[i] = (self.y[i] - sp.eval(self.x[i])) / self.s[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (a, t, phi) = (p[0], p[1], p[2]);
        let w = 2.0 * PI / t;
        for i in 0..self.x.len() {
            let u = self.x[i] + phi;
            let (sn, cs) = (w * u).sin_cos();
            let s = self.s[i];
            jac[(i, 0)] = -sn / s;
            jac[(i, 1)] = a * cs * w * u / t / s;
            jac[(i, 2)] = -a * cs * w / s;
            jac[(i, 3)] = -1.0 / s;
        }
    }
}

/// Wraps `phase` into `[-T/2, T/2)`.
pub fn wrap_phase(phase: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let w = (phase + half).rem_euclid(period) - half;
    if w >= half {
        w - period
    } else {
        w
    }
}

fn initial_guess(x: &[f64], y: &[f64]) -> SineParams {
    let n = x.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let period = 180.0;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut phase = None;
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        let (yi, yj) = (y[i] - mean, y[j] - mean);
        if yi < 0.0 && yj >= 0.0 {
            let x0 = x[i] + (x[j] - x[i]) * (-yi) / (yj - yi);
            phase = Some(-x0);
            break;
        }
    }
    let phase = phase.unwrap_or_else(|| {
        let imax = order.iter().copied().max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
        period / 4.0 - x[imax]
    });
    SineParams {
        amplitude: (hi - lo) / 2.0,
        period,
        phase: wrap_phase(phase, period),
        offset: mean,
    }
}

/// Folds a negative period or amplitude into the phase and wraps the phase.
fn canonicalize(fit: FitResult) -> SineFit {
    let mut sign = [1.0; 4];
    let mut p = SineParams::from_slice(&fit.params);
    if p.period < 0.0 {
        p.period = -p.period;
        p.amplitude = -p.amplitude;
        sign[1] = -1.0;
        sign[0] = -sign[0];
    }
    if p.amplitude < 0.0 {
        p.amplitude = -p.amplitude;
        p.phase += p.period / 2.0;
        sign[0] = -sign[0];
    }
    p.phase = wrap_phase(p.phase, p.period);
    let mut fit = fit.transformed(&[0, 1, 2, 3], &sign);
    fit.params = p.to_vec().to_vec();
    SineFit { params: p, fit }
}

pub fn fit_sine(points: &[ScanPoint], init: Option<SineParams>) -> Result<SineFit, FitError> {
    if points.len() < 5 {
        return Err(FitError::InsufficientData(format!(
            "sine fit needs at least 5 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.angle_deg.is_finite() || !p.value.is_finite()) {
        return Err(FitError::NonFinite("scan points"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.angle_deg).collect();
    let y: Vec<f64> = points.iter().map(|p| p.value).collect();
    let s: Vec<f64> = points
        .iter()
        .map(|p| p.sigma.unwrap_or_else(|| p.value.max(1.0).sqrt()))
        .collect();
    if s.iter().any(|v| !(*v > 0.0)) {
        return Err(FitError::InsufficientData("point errors must be positive".into()));
    }
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let expected_period = init.map(|p| p.period).unwrap_or(180.0);
    if span <= expected_period / 2.0 {
        return Err(FitError::InsufficientData(format!(
            "angles span {span} deg, need more than half a period"
        )));
    }

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let range = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if range <= 1e-12 * mean.abs().max(1e-300) || range == 0.0 {
        return Ok(flat_fit(mean, &s, expected_period));
    }

    let guess = init.unwrap_or_else(|| initial_guess(&x, &y));
    let problem = SineProblem { x: &x, y: &y, s: &s };
    let fit = least_squares(&problem, &guess.to_vec(), None, &LmOptions::default())?;
    Ok(canonicalize(fit))
}

/// Zero-visibility result for constant data: only the offset carries an error.
fn flat_fit(mean: f64, sigma: &[f64], period: f64) -> SineFit {
    let wsum: f64 = sigma.iter().map(|s| 1.0 / (s * s)).sum();
    let mut covariance = vec![vec![0.0; 4]; 4];
    covariance[3][3] = 1.0 / wsum;
    let params = SineParams {
        amplitude: 0.0,
        period,
        phase: 0.0,
        offset: mean,
    };
    SineFit {
        params,
        fit: FitResult {
            params: params.to_vec().to_vec(),
            sigmas: vec![0.0, 0.0, 0.0, covariance[3][3].sqrt()],
            covariance,
            chi2: 0.0,
            dof: sigma.len().saturating_sub(4),
            converged: true,
            iterations: 0,
        },
    }
}
