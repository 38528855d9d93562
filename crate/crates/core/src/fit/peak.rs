//! Coincidence-peak fits: Gaussian core plus optional wide Gaussian on a flat floor.
//!
//! Fits are Poisson maximum-likelihood fits computed by iteratively
//! reweighted least squares, so empty or sparse bins do not bias the floor.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::lsq::{least_squares, Bound, FitResult, LeastSquaresProblem, LmOptions};
use crate::error::FitError;
use crate::hist::Histogram;

/// Parameter indices of a peak fit.
pub const MEAN: usize = 0;
pub const SIGMA_CORE: usize = 1;
pub const SIGMA_WIDE: usize = 2;
pub const AMP_CORE: usize = 3;
pub const AMP_WIDE: usize = 4;
pub const FLOOR: usize = 5;

/// Heights are counts per bin at the peak centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFitParams {
    pub mean: f64,
    pub sigma_core: f64,
    pub sigma_wide: f64,
    pub amp_core: f64,
    pub amp_wide: f64,
    pub floor: f64,
}

impl PeakFitParams {
    fn from_slice(p: &[f64]) -> Self {
        Self {
            mean: p[MEAN],
            sigma_core: p[SIGMA_CORE],
            sigma_wide: p[SIGMA_WIDE],
            amp_core: p[AMP_CORE],
            amp_wide: p[AMP_WIDE],
            floor: p[FLOOR],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.mean;
        self.amp_core * (-d * d / (2.0 * self.sigma_core.powi(2))).exp()
            + self.amp_wide * (-d * d / (2.0 * self.sigma_wide.powi(2))).exp()
            + self.floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub params: PeakFitParams,
    /// Six parameters in [`PeakFitParams`] field order.
    pub fit: FitResult,
    pub bin_width: f64,
    /// Whether the wide component was kept.
    pub double: bool,
}

/// Single Gaussian plus constant: `mean, sigma, amp, floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub sigma: f64,
    pub amp: f64,
    pub floor: f64,
    pub fit: FitResult,
}

/// Widths and relative height of the two Gaussians, shared by runs that
/// see the same detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakShape {
    pub sigma_core: f64,
    pub sigma_wide: f64,
    /// `amp_wide / amp_core`.
    pub wide_ratio: f64,
}

impl PeakShape {
    pub fn of(fit: &PeakFit) -> Self {
        let p = &fit.params;
        Self {
            sigma_core: p.sigma_core,
            sigma_wide: p.sigma_wide,
            wide_ratio: if p.amp_core > 0.0 { p.amp_wide / p.amp_core } else { 0.0 },
        }
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Single,
    Double,
    /// `mean, amp_core, floor` with the widths and ratio held.
    Fixed(PeakShape),
}

struct PeakProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    s: Vec<f64>,
    shape: Shape,
}

fn eval_shape(shape: Shape, p: &[f64], x: f64) -> f64 {
    match shape {
        Shape::Single => {
            let d = x - p[0];
            p[2] * (-d * d / (2.0 * p[1] * p[1])).exp() + p[3]
        }
        Shape::Double => PeakFitParams::from_slice(p).eval(x),
        Shape::Fixed(sh) => {
            let d = x - p[0];
            let ec = (-d * d / (2.0 * sh.sigma_core * sh.sigma_core)).exp();
            let ew = (-d * d / (2.0 * sh.sigma_wide * sh.sigma_wide)).exp();
            p[1] * (ec + sh.wide_ratio * ew) + p[2]
        }
    }
}

fn grad_shape(shape: Shape, p: &[f64], x: f64, g: &mut [f64]) {
    match shape {
        Shape::Single => {
            let d = x - p[0];
            let e = (-d * d / (2.0 * p[1] * p[1])).exp();
            g[0] = p[2] * e * d / (p[1] * p[1]);
            g[1] = p[2] * e * d * d / p[1].powi(3);
            g[2] = e;
            g[3] = 1.0;
        }
        Shape::Double => {
            let d = x - p[MEAN];
            let (sc, sw) = (p[SIGMA_CORE], p[SIGMA_WIDE]);
            let ec = (-d * d / (2.0 * sc * sc)).exp();
            let ew = (-d * d / (2.0 * sw * sw)).exp();
            g[MEAN] = p[AMP_CORE] * ec * d / (sc * sc) + p[AMP_WIDE] * ew * d / (sw * sw);
            g[SIGMA_CORE] = p[AMP_CORE] * ec * d * d / sc.powi(3);
            g[SIGMA_WIDE] = p[AMP_WIDE] * ew * d * d / sw.powi(3);
            g[AMP_CORE] = ec;
            g[AMP_WIDE] = ew;
            g[FLOOR] = 1.0;
        }
        Shape::Fixed(sh) => {
            let d = x - p[0];
            let (sc, sw) = (sh.sigma_core, sh.sigma_wide);
            let ec = (-d * d / (2.0 * sc * sc)).exp();
            let ew = sh.wide_ratio * (-d * d / (2.0 * sw * sw)).exp();
            g[0] = p[1] * (ec * d / (sc * sc) + ew * d / (sw * sw));
            g[1] = ec + ew;
            g[2] = 1.0;
        }
    }
}

impl LeastSquaresProblem for PeakProblem<'_> {
    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.x.len() {
            out[i] = (self.y[i] - eval_shape(self.shape, p, self.x[i])) / self.s[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let mut g = vec![0.0; p.len()];
        for i in 0..self.x.len() {
            grad_shape(self.shape, p, self.x[i], &mut g);
            for (j, v) in g.iter().enumerate() {
                jac[(i, j)] = -v / self.s[i];
            }
        }
    }
}

const MODEL_FLOOR: f64 = 1e-2;
const IRLS_PASSES: usize = 4;

/// Least-squares start with data weights, then reweighting by the model.
fn irls(
    x: &[f64],
    y: &[f64],
    shape: Shape,
    init: &[f64],
    bounds: &[Bound],
) -> Result<(FitResult, f64), FitError> {
    let mut problem = PeakProblem {
        x,
        y,
        s: y.iter().map(|v| v.max(1.0).sqrt()).collect(),
        shape,
    };
    let opts = LmOptions::default();
    let mut fit = least_squares(&problem, init, Some(bounds), &opts)?;
    for _ in 0..IRLS_PASSES {
        problem.s = x
            .iter()
            .map(|&xi| eval_shape(shape, &fit.params, xi).max(MODEL_FLOOR).sqrt())
            .collect();
        fit = least_squares(&problem, &fit.params, Some(bounds), &opts)?;
    }
    let pearson = pearson_chi2(x, y, |xi| eval_shape(shape, &fit.params, xi));
    Ok((fit, pearson))
}

fn pearson_chi2(x: &[f64], y: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let m = f(xi).max(MODEL_FLOOR);
            (yi - m) * (yi - m) / m
        })
        .sum()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

struct Seed {
    mean: f64,
    sigma: f64,
    amp: f64,
    floor: f64,
}

fn seed(hist: &Histogram) -> Result<Seed, FitError> {
    if hist.len() < 20 {
        return Err(FitError::InsufficientData(format!(
            "peak fit needs at least 20 bins, got {}",
            hist.len()
        )));
    }
    if hist.counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(FitError::NonFinite("histogram counts"));
    }
    let floor = median(&hist.counts);
    let c = &hist.counts;
    let max = c.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 || max < floor + 3.0 * floor.sqrt() {
        return Err(FitError::NoPeak { floor, max });
    }
    // locate the peak on a 3-bin running sum to be robust to single spikes
    let n = c.len();
    let smooth = |i: usize| c[i.saturating_sub(1)] + c[i] + c[(i + 1).min(n - 1)];
    let imax = (0..n).max_by(|&a, &b| smooth(a).total_cmp(&smooth(b))).unwrap();
    let amp = (c[imax] - floor).max(1.0);
    let half = floor + amp / 2.0;
    let mut lo = imax;
    while lo > 0 && c[lo - 1] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && c[hi + 1] > half {
        hi += 1;
    }
    let fwhm = (hi - lo + 1) as f64 * hist.bin_width;
    Ok(Seed {
        mean: hist.center(imax),
        sigma: (fwhm / 2.3548).max(0.5 * hist.bin_width),
        amp,
        floor,
    })
}

fn sigma_bound(hist: &Histogram) -> Bound {
    Bound::new(0.05 * hist.bin_width, hist.end() - hist.start)
}

/// Single Gaussian plus constant.
pub fn fit_gaussian_peak(hist: &Histogram) -> Result<GaussianFit, FitError> {
    let s = seed(hist)?;
    let x = hist.centers();
    let bounds = [
        Bound::new(hist.start, hist.end()),
        sigma_bound(hist),
        Bound::at_least(0.0),
        Bound::at_least(0.0),
    ];
    let (fit, _) = irls(&x, &hist.counts, Shape::Single, &[s.mean, s.sigma, s.amp, s.floor], &bounds)?;
    Ok(GaussianFit {
        mean: fit.params[0],
        sigma: fit.params[1],
        amp: fit.params[2],
        floor: fit.params[3],
        fit,
    })
}

/// Shared-mean double Gaussian plus constant. The wide component is kept
/// only when it improves chi2 by more than 9 and its height is significant
/// at 2 sigma; otherwise the single-Gaussian result is returned embedded in
/// the six-parameter layout with `amp_wide = 0`.
pub fn fit_coincidence_peak(hist: &Histogram) -> Result<PeakFit, FitError> {
    let s = seed(hist)?;
    let x = hist.centers();
    let sb = sigma_bound(hist);
    let single_bounds = [Bound::new(hist.start, hist.end()), sb, Bound::at_least(0.0), Bound::at_least(0.0)];
    let (single, chi2_single) = irls(&x, &hist.counts, Shape::Single, &[s.mean, s.sigma, s.amp, s.floor], &single_bounds)?;

    let p = &single.params;
    let init = [p[0], p[1] * 0.8, p[1] * 3.0, p[2] * 0.85, p[2] * 0.15, p[3]];
    let bounds = [
        Bound::new(hist.start, hist.end()),
        sb,
        sb,
        Bound::at_least(0.0),
        Bound::at_least(0.0),
        Bound::at_least(0.0),
    ];
    if let Ok((double, chi2_double)) = irls(&x, &hist.counts, Shape::Double, &init, &bounds) {
        let double = order_components(double);
        let aw = double.params[AMP_WIDE];
        let significant = chi2_single - chi2_double > 9.0 && aw > 2.0 * double.sigmas[AMP_WIDE];
        let sane = double.params[SIGMA_WIDE] < 0.5 * (hist.end() - hist.start);
        if double.converged && significant && sane {
            return Ok(PeakFit {
                params: PeakFitParams::from_slice(&double.params),
                fit: double,
                bin_width: hist.bin_width,
                double: true,
            });
        }
    }
    let embedded = embed_single(&single);
    Ok(PeakFit {
        params: PeakFitParams::from_slice(&embedded.params),
        fit: embedded,
        bin_width: hist.bin_width,
        double: false,
    })
}

/// Peak of known shape: only the mean, the core height and the floor are
/// fitted. The result uses the six-parameter layout with zero variance on
/// the widths and `amp_wide` tied to `amp_core`.
pub fn fit_peak_with_shape(hist: &Histogram, shape: &PeakShape) -> Result<PeakFit, FitError> {
    if !(shape.sigma_core > 0.0 && shape.sigma_wide > 0.0 && shape.wide_ratio >= 0.0) {
        return Err(FitError::DegenerateFit(format!("invalid peak shape {shape:?}")));
    }
    let s = seed(hist)?;
    let x = hist.centers();
    let bounds = [Bound::new(hist.start, hist.end()), Bound::at_least(0.0), Bound::at_least(0.0)];
    let (fit, _) = irls(&x, &hist.counts, Shape::Fixed(*shape), &[s.mean, s.amp / (1.0 + shape.wide_ratio), s.floor], &bounds)?;
    let p = &fit.params;
    let r = shape.wide_ratio;
    let params = vec![p[0], shape.sigma_core, shape.sigma_wide, p[1], r * p[1], p[2]];
    // rows of d(six params)/d(three params)
    let map: [[f64; 3]; 6] = [[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], [0.0, 1.0, 0.0], [0.0, r, 0.0], [0.0, 0.0, 1.0]];
    let covariance: Vec<Vec<f64>> = (0..6)
        .map(|a| {
            (0..6)
                .map(|b| {
                    let mut v = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            v += map[a][i] * map[b][j] * fit.covariance[i][j];
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();
    let sigmas = (0..6).map(|k| covariance[k][k].max(0.0).sqrt()).collect();
    let fit = FitResult {
        params,
        sigmas,
        covariance,
        ..fit
    };
    Ok(PeakFit {
        params: PeakFitParams::from_slice(&fit.params),
        fit,
        bin_width: hist.bin_width,
        double: r > 0.0,
    })
}

fn order_components(fit: FitResult) -> FitResult {
    if fit.params[SIGMA_WIDE] >= fit.params[SIGMA_CORE] {
        return fit;
    }
    fit.transformed(&[MEAN, SIGMA_WIDE, SIGMA_CORE, AMP_WIDE, AMP_CORE, FLOOR], &[1.0; 6])
}

fn embed_single(single: &FitResult) -> FitResult {
    let map = [Some(0), Some(1), None, Some(2), None, Some(3)];
    let params: Vec<f64> = (0..6)
        .map(|k| match (k, map[k]) {
            (SIGMA_WIDE, _) => single.params[1],
            (_, Some(j)) => single.params[j],
            _ => 0.0,
        })
        .collect();
    let covariance: Vec<Vec<f64>> = (0..6)
        .map(|a| {
            (0..6)
                .map(|b| match (map[a], map[b]) {
                    (Some(i), Some(j)) => single.covariance[i][j],
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    let sigmas = (0..6).map(|k| covariance[k][k].max(0.0).sqrt()).collect();
    FitResult {
        params,
        sigmas,
        covariance,
        dof: single.dof,
        ..single.clone()
    }
}

/// Signal yield under the Gaussians, `(N, sigma_N)`.
pub fn gaussian_area(fit: &PeakFit) -> (f64, f64) {
    let p = &fit.params;
    let k = (2.0 * PI).sqrt() / fit.bin_width;
    let n = (p.amp_core * p.sigma_core + p.amp_wide * p.sigma_wide) * k;
    let mut g = [0.0; 6];
    g[SIGMA_CORE] = p.amp_core * k;
    g[SIGMA_WIDE] = p.amp_wide * k;
    g[AMP_CORE] = p.sigma_core * k;
    g[AMP_WIDE] = p.sigma_wide * k;
    let mut var = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            var += g[i] * g[j] * fit.fit.covariance[i][j];
        }
    }
    (n, var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::lsq::numeric_jacobian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn synthetic(seed: u64, comps: &[(f64, usize)], floor: f64) -> Histogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Histogram::symmetric(100.0, 1.0);
        for &(sigma, n) in comps {
            let g = Normal::new(0.3, sigma).unwrap();
            for _ in 0..n {
                h.fill(g.sample(&mut rng));
            }
        }
        for c in &mut h.counts {
            *c += Poisson::new(floor).unwrap().sample(&mut rng);
        }
        h
    }

    fn fake_fit(amp_core: f64, sigma_core: f64, amp_wide: f64, sigma_wide: f64, bw: f64) -> PeakFit {
        let params = PeakFitParams {
            mean: 0.0,
            sigma_core,
            sigma_wide,
            amp_core,
            amp_wide,
            floor: 0.0,
        };
        PeakFit {
            params,
            fit: FitResult {
                params: vec![0.0, sigma_core, sigma_wide, amp_core, amp_wide, 0.0],
                sigmas: vec![0.0; 6],
                covariance: vec![vec![0.0; 6]; 6],
                chi2: 0.0,
                dof: 0,
                converged: true,
                iterations: 0,
            },
            bin_width: bw,
            double: true,
        }
    }

    #[test]
    fn area_identity() {
        let (n, _) = gaussian_area(&fake_fit(100.0, 2.0, 0.0, 2.0, 1.0));
        assert!((n - 100.0 * 2.0 * (2.0 * PI).sqrt()).abs() < 1e-9);
        assert!((n - 501.3).abs() < 0.1);
        assert_eq!(gaussian_area(&fake_fit(0.0, 2.0, 0.0, 5.0, 1.0)).0, 0.0);
    }

    #[test]
    fn area_matches_numeric_integration() {
        let f = fake_fit(37.0, 1.7, 5.0, 6.2, 1.5625);
        let (n, _) = gaussian_area(&f);
        let (lo, hi) = (-10.0 * 6.2, 10.0 * 6.2);
        let steps = 200_000;
        let h = (hi - lo) / steps as f64;
        let mut sum = 0.0;
        for i in 0..=steps {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            sum += w * f.params.eval(x);
        }
        let integral = sum * h / f.bin_width;
        assert!((n - integral).abs() < 1e-6 * n, "{n} vs {integral}");
    }

    #[test]
    fn single_gaussian_recovery() {
        let h = synthetic(1, &[(2.0, 10_000)], 3.0);
        let f = fit_coincidence_peak(&h).unwrap();
        assert!((f.params.mean - 0.3).abs() < 0.05 * 2.0);
        assert!((f.params.sigma_core - 2.0).abs() < 0.05 * 2.0);
        let (n, sn) = gaussian_area(&f);
        let small_wide = !f.double || f.params.amp_wide * f.params.sigma_wide < 0.05 * n;
        assert!(small_wide, "{:?}", f.params);
        assert!((n - 10_000.0).abs() < 4.0 * sn.max(100.0));
    }

    #[test]
    fn flat_histogram_has_no_peak() {
        let h = Histogram {
            start: 0.0,
            bin_width: 1.0,
            counts: vec![50.0; 64],
        };
        assert!(matches!(fit_coincidence_peak(&h), Err(FitError::NoPeak { .. })));
        let z = Histogram::new(0.0, 1.0, 64);
        assert!(matches!(fit_gaussian_peak(&z), Err(FitError::NoPeak { .. })));
    }

    #[test]
    fn two_component_areas() {
        let h = synthetic(2, &[(2.0, 30_000), (8.0, 10_000)], 2.0);
        let f = fit_coincidence_peak(&h).unwrap();
        assert!(f.double, "{:?}", f.params);
        let k = (2.0 * PI).sqrt() / f.bin_width;
        let core = f.params.amp_core * f.params.sigma_core * k;
        let wide = f.params.amp_wide * f.params.sigma_wide * k;
        assert!((core - 30_000.0).abs() < 3_000.0, "{core}");
        assert!((wide - 10_000.0).abs() < 1_000.0, "{wide}");
        assert!(f.params.sigma_wide >= f.params.sigma_core);
    }

    #[test]
    fn injected_count_within_three_sigma() {
        let mut inside = 0;
        for seed in 0..20 {
            let h = synthetic(100 + seed, &[(2.5, 5000)], 4.0);
            let f = fit_coincidence_peak(&h).unwrap();
            let (n, sn) = gaussian_area(&f);
            if (n - 5000.0).abs() < 3.0 * sn {
                inside += 1;
            }
        }
        assert!(inside >= 19, "{inside}/20");
    }

    #[test]
    fn fixed_shape_recovers_small_peaks() {
        let big = synthetic(7, &[(2.0, 60_000), (8.0, 6_000)], 2.0);
        let shape = PeakShape::of(&fit_coincidence_peak(&big).unwrap());
        assert!((shape.sigma_wide - 8.0).abs() < 1.0, "{shape:?}");
        let mut inside = 0;
        for seed in 0..20 {
            let h = synthetic(200 + seed, &[(2.0, 500), (8.0, 50)], 2.0);
            let f = fit_peak_with_shape(&h, &shape).unwrap();
            assert_eq!((f.params.sigma_core, f.params.sigma_wide), (shape.sigma_core, shape.sigma_wide));
            let (n, sn) = gaussian_area(&f);
            if (n - 550.0).abs() < 3.0 * sn {
                inside += 1;
            }
        }
        assert!(inside >= 18, "{inside}/20");
    }

    #[test]
    fn invalid_shape_is_rejected() {
        let h = synthetic(1, &[(2.0, 1000)], 1.0);
        let bad = PeakShape {
            sigma_core: 0.0,
            sigma_wide: 1.0,
            wide_ratio: 0.0,
        };
        assert!(matches!(fit_peak_with_shape(&h, &bad), Err(FitError::DegenerateFit(_))));
    }

    #[test]
    fn too_few_bins() {
        let h = Histogram::new(0.0, 1.0, 10);
        assert!(matches!(fit_coincidence_peak(&h), Err(FitError::InsufficientData(_))));
    }

    #[test]
    fn analytic_gradients_match_numeric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..40).map(|i| -20.0 + i as f64).collect();
        let y = vec![1.0; 40];
        let fixed = Shape::Fixed(PeakShape {
            sigma_core: 2.1,
            sigma_wide: 7.5,
            wide_ratio: 0.2,
        });
        for shape in [Shape::Single, Shape::Double, fixed] {
            for _ in 0..20 {
                let p: Vec<f64> = match shape {
                    Shape::Single => vec![rng.random_range(-3.0..3.0), rng.random_range(1.0..5.0), rng.random_range(1.0..100.0), rng.random_range(0.0..5.0)],
                    Shape::Fixed(_) => vec![rng.random_range(-3.0..3.0), rng.random_range(1.0..100.0), rng.random_range(0.0..5.0)],
                    Shape::Double => vec![
                        rng.random_range(-3.0..3.0),
                        rng.random_range(1.0..3.0),
                        rng.random_range(3.0..9.0),
                        rng.random_range(1.0..100.0),
                        rng.random_range(1.0..30.0),
                        rng.random_range(0.0..5.0),
                    ],
                };
                let prob = PeakProblem { x: &x, y: &y, s: vec![1.3; 40], shape };
                let mut a = DMatrix::zeros(40, p.len());
                let mut n = DMatrix::zeros(40, p.len());
                prob.jacobian(&p, &mut a);
                numeric_jacobian(&prob, &p, &mut n);
                for j in 0..p.len() {
                    let scale = a.column(j).amax().max(1e-8);
                    for i in 0..40 {
                        assert!((a[(i, j)] - n[(i, j)]).abs() <= 1e-4 * scale);
                    }
                }
            }
        }
    }
}
