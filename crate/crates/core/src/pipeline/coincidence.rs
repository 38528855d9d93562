//! Pairing photons between the two fiber regions.

use serde::{Deserialize, Serialize};

use super::centroid::Photon;
use crate::error::PipelineError;
use crate::fit::fit_gaussian_peak;
use crate::hist::Histogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceParams {
    /// Pairs need `-window_ns <= dt < window_ns`.
    pub window_ns: f64,
    pub bin_width_ns: f64,
}

impl Default for CoincidenceParams {
    fn default() -> Self {
        Self {
            window_ns: 500.0,
            bin_width_ns: 1.5625,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidencePair {
    pub photon_a: Photon,
    pub photon_b: Photon,
    /// `toa_a - toa_b` on corrected times, ns.
    pub dt: f64,
}

/// Unique pairs between two time-ordered lists, chosen greedily by smallest
/// `|dt|`, with their `dt` histogram. Every pair lands in the histogram.
/// Pairs come back ordered by the time of their A photon.
pub fn find_coincidences(a: &[Photon], b: &[Photon], params: &CoincidenceParams) -> (Vec<CoincidencePair>, Histogram) {
    let mut hist = Histogram::symmetric(params.window_ns, params.bin_width_ns);
    debug_assert!(a.windows(2).all(|w| w[0].toa_corr <= w[1].toa_corr));
    debug_assert!(b.windows(2).all(|w| w[0].toa_corr <= w[1].toa_corr));

    // every (a, b) inside the histogram range
    let mut candidates: Vec<(f64, u32, u32)> = Vec::new();
    let mut lo = 0;
    for (i, pa) in a.iter().enumerate() {
        while lo < b.len() && pa.toa_corr - b[lo].toa_corr >= params.window_ns {
            lo += 1;
        }
        for (j, pb) in b.iter().enumerate().skip(lo) {
            let dt = pa.toa_corr - pb.toa_corr;
            if dt < -params.window_ns {
                break;
            }
            if hist.bin_of(dt).is_some() {
                candidates.push((dt, i as u32, j as u32));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.abs().total_cmp(&y.0.abs()).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut chosen: Vec<(u32, u32, f64)> = Vec::new();
    for (dt, i, j) in candidates {
        if !used_a[i as usize] && !used_b[j as usize] {
            used_a[i as usize] = true;
            used_b[j as usize] = true;
            chosen.push((i, j, dt));
        }
    }
    chosen.sort_by_key(|c| c.0);
    let pairs: Vec<CoincidencePair> = chosen
        .into_iter()
        .map(|(i, j, dt)| {
            hist.fill(dt);
            CoincidencePair {
                photon_a: a[i as usize],
                photon_b: b[j as usize],
                dt,
            }
        })
        .collect();
    (pairs, hist)
}

/// Fewest pairs [`time_resolution`] will fit.
pub const MIN_RESOLUTION_PAIRS: usize = 500;

/// Half-range of the `dt` histogram fitted by [`time_resolution`], ns.
pub const RESOLUTION_RANGE_NS: f64 = 50.0;

/// Single-photon time resolution: the width of a Gaussian plus constant
/// fitted to `dt` of pairs where both photons have `tot_max > tot_min`,
/// divided by sqrt 2.
pub fn time_resolution(pairs: &[CoincidencePair], tot_min: f64, bin_width_ns: f64) -> Result<f64, PipelineError> {
    let kept: Vec<f64> = pairs
        .iter()
        .filter(|p| p.photon_a.tot_max > tot_min && p.photon_b.tot_max > tot_min)
        .map(|p| p.dt)
        .collect();
    if kept.len() < MIN_RESOLUTION_PAIRS {
        return Err(PipelineError::InsufficientData(format!(
            "{} pairs pass TOT > {tot_min} ns, need {MIN_RESOLUTION_PAIRS}",
            kept.len()
        )));
    }
    let mut sorted = kept.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut hist = Histogram::new(median - RESOLUTION_RANGE_NS, bin_width_ns, (2.0 * RESOLUTION_RANGE_NS / bin_width_ns).round() as usize);
    for dt in kept {
        hist.fill(dt);
    }
    let fit = fit_gaussian_peak(&hist)?;
    Ok(fit.sigma / std::f64::consts::SQRT_2)
}
