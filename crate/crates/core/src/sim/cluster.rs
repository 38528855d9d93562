//! Pixel footprint of one intensifier flash.
//!
//! A flash deposits a log-normally distributed total signal spread over the
//! pixels by a 2D Gaussian (integrated over each pixel). Signals are in units
//! of the pixel threshold; pixels above 1 fire. Pixel centres sit at integer
//! coordinates, so pixel `i` covers `[i - 0.5, i + 0.5)`.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use statrs::function::erf::erf;

use super::DetectorConfig;
use crate::error::SimError;
use crate::pipeline::event::PixelEvent;

/// Half-width of the pixel window evaluated around the flash.
const REACH: i32 = 3;
const SIDE: usize = (2 * REACH + 1) as usize;
/// Sub-pixel positions per axis used to calibrate the signal scale.
const CAL_GRID: usize = 16;

fn phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Fractions of a unit Gaussian (width `sigma`) centred at `x` that fall in
/// the pixels `round(x) - REACH ..= round(x) + REACH`.
fn axis_fractions(x: f64, sigma: f64) -> (i32, [f64; SIDE]) {
    let c = x.round() as i32;
    let mut f = [0.0; SIDE];
    let mut lo = phi((c as f64 - REACH as f64 - 0.5 - x) / sigma);
    for (k, fk) in f.iter_mut().enumerate() {
        let edge = c as f64 - REACH as f64 + k as f64 + 0.5;
        let hi = phi((edge - x) / sigma);
        *fk = hi - lo;
        lo = hi;
    }
    (c - REACH, f)
}

/// `a / (TOT + b)`-shaped threshold delay.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeWalkModel {
    /// Delay in ns at vanishing TOT.
    pub w0: f64,
    /// TOT in ns at which the delay has halved.
    pub tot_ref: f64,
}

impl TimeWalkModel {
    pub const NONE: TimeWalkModel = TimeWalkModel { w0: 0.0, tot_ref: 1.0 };

    pub fn shift(&self, tot_ns: f64) -> f64 {
        self.w0 * self.tot_ref / (tot_ns.max(0.0) + self.tot_ref)
    }
}

/// One simulated pixel hit before quantization of its arrival time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimHit {
    pub toa_ns: f64,
    pub x: u16,
    pub y: u16,
    pub tot: u16,
}

/// Calibrated flash model for a given detector configuration.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    signal: LogNormal<f64>,
    median_signal: f64,
    footprint_sigma: f64,
    tot_scale: f64,
    tot_tick_ns: f64,
    walk: TimeWalkModel,
    /// Part of the jitter shared by all pixels of a flash.
    common_jitter: f64,
    pixel_jitter: f64,
    latency: f64,
    width: u16,
    height: u16,
}

impl ClusterModel {
    pub fn new(det: &DetectorConfig) -> Result<Self, SimError> {
        let median = calibrate_median_signal(det.footprint_sigma, det.signal_sigma_log, det.cluster_size_mean)?;
        let signal = LogNormal::new(median.ln(), det.signal_sigma_log)
            .map_err(|e| SimError::ConfigInvalid(format!("signal distribution: {e}")))?;
        Ok(Self {
            signal,
            median_signal: median,
            footprint_sigma: det.footprint_sigma,
            tot_scale: det.tot_scale,
            tot_tick_ns: det.timebase.tot_tick_ns as f64,
            walk: det.walk,
            common_jitter: (det.jitter_sigma.powi(2) - det.pixel_jitter.powi(2)).sqrt(),
            pixel_jitter: det.pixel_jitter,
            latency: det.latency,
            width: det.sensor_size.0,
            height: det.sensor_size.1,
        })
    }

    /// Median total signal, in threshold units.
    pub fn median_signal(&self) -> f64 {
        self.median_signal
    }

    fn tot_ticks(&self, signal: f64) -> u16 {
        let ns = self.tot_scale * (signal - 1.0);
        (ns / self.tot_tick_ns).ceil().clamp(1.0, u16::MAX as f64) as u16
    }

    /// Appends the over-threshold pixels of one flash and returns how many.
    pub fn emit<R: Rng + ?Sized>(&self, t: f64, x: f64, y: f64, rng: &mut R, out: &mut Vec<SimHit>) -> usize {
        let total = self.signal.sample(rng);
        self.emit_with_signal(t, x, y, total, rng, out)
    }

    pub fn emit_with_signal<R: Rng + ?Sized>(
        &self,
        t: f64,
        x: f64,
        y: f64,
        total: f64,
        rng: &mut R,
        out: &mut Vec<SimHit>,
    ) -> usize {
        let (x0, fx) = axis_fractions(x, self.footprint_sigma);
        let (y0, fy) = axis_fractions(y, self.footprint_sigma);
        let common = truncated_normal(rng) * self.common_jitter;
        let before = out.len();
        for (j, fyj) in fy.iter().enumerate() {
            let py = y0 + j as i32;
            if py < 0 || py >= self.height as i32 {
                continue;
            }
            let row = total * fyj;
            if row * fx.iter().cloned().fold(0.0, f64::max) <= 1.0 {
                continue;
            }
            for (i, fxi) in fx.iter().enumerate() {
                let px = x0 + i as i32;
                let s = row * fxi;
                if s <= 1.0 || px < 0 || px >= self.width as i32 {
                    continue;
                }
                let tot = self.tot_ticks(s);
                let tot_ns = self.tot_scale * (s - 1.0);
                let jitter = common + truncated_normal(rng) * self.pixel_jitter;
                out.push(SimHit {
                    toa_ns: t + self.latency + self.walk.shift(tot_ns) + jitter,
                    x: px as u16,
                    y: py as u16,
                    tot,
                });
            }
        }
        out.len() - before
    }
}

/// Standard normal truncated to `[-5, 5]`, so a finite latency bounds how
/// early a hit can appear.
fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 5.0 {
            return z;
        }
    }
}

/// Mean number of fired pixels per flash, counting only flashes that fire at
/// least one pixel, for a given median total signal. Averaged over a grid of
/// sub-pixel positions and (exactly) over the log-normal signal.
pub fn mean_multiplicity(footprint_sigma: f64, sigma_log: f64, median: f64) -> f64 {
    let mu = median.ln();
    let (mut n, mut p) = (0.0, 0.0);
    for a in 0..CAL_GRID {
        for b in 0..CAL_GRID {
            let x = (a as f64 + 0.5) / CAL_GRID as f64 - 0.5;
            let y = (b as f64 + 0.5) / CAL_GRID as f64 - 0.5;
            let (_, fx) = axis_fractions(x, footprint_sigma);
            let (_, fy) = axis_fractions(y, footprint_sigma);
            let mut fmax: f64 = 0.0;
            for u in fx {
                for v in fy {
                    let f = u * v;
                    if f > 0.0 {
                        n += phi((f.ln() + mu) / sigma_log);
                        fmax = fmax.max(f);
                    }
                }
            }
            p += phi((fmax.ln() + mu) / sigma_log);
        }
    }
    n / p
}

/// Median total signal giving the requested mean multiplicity.
pub fn calibrate_median_signal(footprint_sigma: f64, sigma_log: f64, target: f64) -> Result<f64, SimError> {
    if !(footprint_sigma > 0.0) || !(sigma_log > 0.0) {
        return Err(SimError::ConfigInvalid("footprint and signal widths must be positive".into()));
    }
    let (mut lo, mut hi) = (0.0f64, 12.0f64);
    let f = |mu: f64| mean_multiplicity(footprint_sigma, sigma_log, mu.exp());
    if !(target >= f(lo) && target <= f(hi)) {
        return Err(SimError::ConfigInvalid(format!(
            "cluster_size_mean {target} outside the reachable range [{:.2}, {:.2}]",
            f(lo),
            f(hi)
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Convenience single-flash entry point. Calibrates the model on every call;
/// use [`ClusterModel`] directly in loops.
pub fn emit_cluster<R: Rng + ?Sized>(
    true_time: f64,
    true_x: f64,
    true_y: f64,
    det: &DetectorConfig,
    rng: &mut R,
) -> Result<Vec<PixelEvent>, SimError> {
    let model = ClusterModel::new(det)?;
    let mut hits = Vec::new();
    model.emit(true_time, true_x, true_y, rng, &mut hits);
    Ok(hits
        .into_iter()
        .map(|h| PixelEvent::new(h.x, h.y, det.timebase.toa_ticks_floor(h.toa_ns), h.tot))
        .collect())
}
