//! Coincidence counts of many polarizer settings turned into polarization
//! curves, CHSH S-values and a spatially resolved S-matrix.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::BellError;
use crate::fit::{fit_coincidence_peak, fit_peak_with_shape, fit_sine, gaussian_area, PeakShape, ScanPoint, SineFit, SineParams};
use crate::geometry::PixelBox;
use crate::hist::Histogram;
use crate::pipeline::{find_coincidences, CoincidenceParams, Photon};
use crate::quantum::{chsh_s, ChshAngles, CountsQuad, PolarizerSetting, SValueReport};

/// Result of one polarizer setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub setting: PolarizerSetting,
    /// Live time, s.
    pub duration: f64,
    /// Fitted coincidence count and its one-sigma error.
    pub coincidences: f64,
    pub sigma: f64,
    /// Photons seen in each region, for the drift check.
    pub singles: Option<[f64; 2]>,
    pub regions: Option<[PixelBox; 2]>,
}

impl RunRecord {
    /// A record with Poisson error on a plain count.
    pub fn from_count(setting: PolarizerSetting, duration: f64, n: f64) -> Self {
        Self {
            setting,
            duration,
            coincidences: n,
            sigma: n.max(0.0).sqrt(),
            singles: None,
            regions: None,
        }
    }

    /// A record whose count is the Gaussian area of the `dt` peak, with the
    /// peak shape fitted on this histogram alone.
    pub fn from_histogram(setting: PolarizerSetting, duration: f64, hist: &Histogram) -> Result<Self, BellError> {
        Ok(Self::from_fit(setting, duration, &fit_coincidence_peak(hist)?))
    }

    /// As [`from_histogram`](Self::from_histogram) with the peak shape held.
    pub fn with_shape(setting: PolarizerSetting, duration: f64, hist: &Histogram, shape: &PeakShape) -> Result<Self, BellError> {
        Ok(Self::from_fit(setting, duration, &fit_peak_with_shape(hist, shape)?))
    }

    /// Records of runs taken with one detector: the peak shape is fitted on
    /// the summed histogram and held for every run, so all counts use the
    /// same model.
    pub fn from_histograms(runs: &[(PolarizerSetting, f64, &Histogram)]) -> Result<Vec<Self>, BellError> {
        let shape = shared_shape(runs.iter().map(|r| r.2))?;
        runs.iter().map(|&(s, d, h)| Self::with_shape(s, d, h, &shape)).collect()
    }

    fn from_fit(setting: PolarizerSetting, duration: f64, fit: &crate::fit::PeakFit) -> Self {
        let (n, sigma) = gaussian_area(fit);
        Self {
            setting,
            duration,
            coincidences: n.max(0.0),
            sigma,
            singles: None,
            regions: None,
        }
    }
}

/// Peak shape of the sum of histograms with identical binning.
pub fn shared_shape<'a>(hists: impl IntoIterator<Item = &'a Histogram>) -> Result<PeakShape, BellError> {
    let mut it = hists.into_iter();
    let mut sum = it.next().ok_or_else(|| BellError::InsufficientStatistics("no histograms".into()))?.clone();
    for h in it {
        if h.counts.len() != sum.counts.len() || h.start != sum.start || h.bin_width != sum.bin_width {
            return Err(BellError::InsufficientStatistics("histograms have different binning".into()));
        }
        sum.add(h);
    }
    Ok(PeakShape::of(&fit_coincidence_peak(&sum)?))
}

/// Polarizer angles agree modulo 180 degrees.
fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b) / PI;
    (d - d.round()).abs() * PI < 1e-6
}

fn find_run<'a>(runs: &'a [RunRecord], s: &PolarizerSetting) -> Result<&'a RunRecord, BellError> {
    runs.iter()
        .find(|r| same_angle(r.setting.alpha, s.alpha) && same_angle(r.setting.beta, s.beta))
        .ok_or(BellError::MissingRun {
            alpha_deg: s.alpha.to_degrees(),
            beta_deg: s.beta.to_degrees(),
        })
}

/// Fractional spread above which the singles drift check warns.
pub const DRIFT_WARNING: f64 = 0.05;
/// Fractional duration spread beyond which runs cannot be combined.
pub const DURATION_TOLERANCE: f64 = 0.10;

/// The four runs at `(a,b)`, `(a,b+90)`, `(a+90,b)`, `(a+90,b+90)` as
/// `N_VV`, `N_VH`, `N_HV`, `N_HH`. Counts of unequal runs are rescaled to the
/// live time of the `(a,b)` run when durations agree within 10%.
pub fn assemble_quad(runs: &[RunRecord], setting: &PolarizerSetting) -> Result<CountsQuad, BellError> {
    let [vv, vh, hv, hh] = setting.quad().map(|s| find_run(runs, &s));
    let four = [vv?, vh?, hv?, hh?];
    let durations = four.map(|r| r.duration);
    let min = durations.iter().copied().fold(f64::INFINITY, f64::min);
    let max = durations.iter().copied().fold(0.0, f64::max);
    if !(min > 0.0) || max >= min * (1.0 + DURATION_TOLERANCE) * (1.0 - 1e-12) {
        return Err(BellError::DurationMismatch { min, max });
    }
    if max > min {
        log::warn!(
            "rescaling runs at alpha={:.1} beta={:.1} to a common live time ({min} s to {max} s)",
            setting.alpha.to_degrees(),
            setting.beta.to_degrees()
        );
    }
    let reference = four[0].duration;
    let n = four.map(|r| r.coincidences * reference / r.duration);

    let rates: Vec<f64> = four.iter().filter_map(|r| r.singles.map(|s| (s[0] + s[1]) / r.duration)).collect();
    if rates.len() == 4 {
        let mean = rates.iter().sum::<f64>() / 4.0;
        let spread = rates.iter().fold(0.0f64, |m, r| m.max((r - mean).abs())) / mean;
        if spread > DRIFT_WARNING {
            log::warn!(
                "singles rate varies by {:.1}% across the runs at alpha={:.1} beta={:.1}",
                spread * 100.0,
                setting.alpha.to_degrees(),
                setting.beta.to_degrees()
            );
        }
    }
    Ok(CountsQuad::new(n[0], n[2], n[1], n[3]))
}

/// CHSH S from the sixteen runs covering the four quads of `angles`.
pub fn bell_test(runs: &[RunRecord], angles: &ChshAngles) -> Result<SValueReport, BellError> {
    let s = angles.settings();
    let quads = [
        assemble_quad(runs, &s[0])?,
        assemble_quad(runs, &s[1])?,
        assemble_quad(runs, &s[2])?,
        assemble_quad(runs, &s[3])?,
    ];
    Ok(chsh_s(angles, &quads)?)
}

/// A scan of the A polarizer at one fixed B angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCurve {
    pub beta_deg: f64,
    pub points: Vec<ScanPoint>,
    pub fit: SineFit,
}

/// Fewest distinct A angles accepted for one curve.
pub const MIN_SCAN_SETTINGS: usize = 8;

/// Normalised counts against the A angle, for runs sharing one B angle, and
/// their sine fit. Counts and errors are divided by `norm`.
pub fn polarization_scan(runs: &[RunRecord], norm: f64) -> Result<ScanCurve, BellError> {
    let Some(first) = runs.first() else {
        return Err(BellError::InsufficientStatistics("no runs in scan".into()));
    };
    if runs.iter().any(|r| !same_angle(r.setting.beta, first.setting.beta)) {
        return Err(BellError::InsufficientStatistics("scan runs must share one B angle".into()));
    }
    let mut alphas: Vec<f64> = runs.iter().map(|r| r.setting.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if alphas.len() < MIN_SCAN_SETTINGS {
        return Err(BellError::InsufficientStatistics(format!(
            "scan needs {MIN_SCAN_SETTINGS} settings, got {}",
            alphas.len()
        )));
    }
    let points: Vec<ScanPoint> = runs
        .iter()
        .map(|r| ScanPoint {
            angle_deg: r.setting.alpha.to_degrees(),
            value: r.coincidences / norm,
            sigma: Some(if r.sigma > 0.0 { r.sigma } else { r.coincidences.max(1.0).sqrt() } / norm),
        })
        .collect();
    let fit = fit_sine(&points, None)?;
    Ok(ScanCurve {
        beta_deg: first.setting.beta.to_degrees(),
        points,
        fit,
    })
}

/// One curve per fixed B angle (degrees), all normalised to the fitted
/// amplitude of the first curve.
pub fn polarization_scans(runs: &[RunRecord], betas_deg: &[f64]) -> Result<Vec<ScanCurve>, BellError> {
    let group = |b: f64| -> Vec<RunRecord> { runs.iter().filter(|r| same_angle(r.setting.beta, b.to_radians())).copied().collect() };
    let Some(&b0) = betas_deg.first() else {
        return Ok(vec![]);
    };
    let raw = polarization_scan(&group(b0), 1.0)?;
    let norm = raw.fit.params.amplitude;
    if !(norm > 0.0) {
        return Err(BellError::InsufficientStatistics("reference curve has no modulation".into()));
    }
    betas_deg.iter().map(|&b| polarization_scan(&group(b), norm)).collect()
}

/// Parameter values of Table-style output: `(A, T, phi, D)` with errors.
pub fn scan_table(curves: &[ScanCurve]) -> Vec<(f64, SineParams, SineParams)> {
    curves
        .iter()
        .map(|c| {
            let s = &c.fit.fit.sigmas;
            (
                c.beta_deg,
                c.fit.params,
                SineParams {
                    amplitude: s[0],
                    period: s[1],
                    phase: s[2],
                    offset: s[3],
                },
            )
        })
        .collect()
}

/// A region cut into `nx x ny` sub-boxes, indexed row-major from the top
/// left (smallest x and y). The last row and column absorb any remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubareaGrid {
    pub region: PixelBox,
    pub nx: u16,
    pub ny: u16,
}

impl SubareaGrid {
    pub fn new(region: PixelBox, nx: u16, ny: u16) -> Result<Self, BellError> {
        if nx == 0 || ny == 0 || nx > region.w || ny > region.h {
            return Err(BellError::InsufficientStatistics(format!(
                "cannot split a {}x{} region into {nx}x{ny}",
                region.w, region.h
            )));
        }
        Ok(Self { region, nx, ny })
    }

    pub fn len(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn split(len: u16, n: u16, k: u16) -> (u16, u16) {
        let step = len / n;
        let start = k * step;
        let size = if k + 1 == n { len - start } else { step };
        (start, size)
    }

    /// Pixel box of cell `k`.
    pub fn cell(&self, k: usize) -> PixelBox {
        let (row, col) = ((k / self.nx as usize) as u16, (k % self.nx as usize) as u16);
        let (x, w) = Self::split(self.region.w, self.nx, col);
        let (y, h) = Self::split(self.region.h, self.ny, row);
        PixelBox::new(self.region.x0 + x, self.region.y0 + y, w, h)
    }

    /// Cell holding a sub-pixel position, if inside the region.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        if !self.region.contains(x, y) {
            return None;
        }
        let fx = x - self.region.x0 as f64 + 0.5;
        let fy = y - self.region.y0 as f64 + 0.5;
        let col = ((fx / (self.region.w / self.nx) as f64).floor() as u16).min(self.nx - 1);
        let row = ((fy / (self.region.h / self.ny) as f64).floor() as u16).min(self.ny - 1);
        Some(row as usize * self.nx as usize + col as usize)
    }
}

/// Photons of one polarizer setting, per region, each list time-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonRun {
    pub setting: PolarizerSetting,
    pub duration: f64,
    pub photons: [Vec<Photon>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialParams {
    pub coincidence: CoincidenceParams,
    /// Cells where any run fits fewer coincidences are flagged.
    pub min_coincidences: f64,
}

impl Default for SpatialParams {
    fn default() -> Self {
        Self {
            coincidence: CoincidenceParams::default(),
            min_coincidences: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCell {
    pub cell_a: usize,
    pub cell_b: usize,
    /// Present unless the cell is flagged.
    pub report: Option<SValueReport>,
    /// Smallest fitted coincidence count over the runs.
    pub min_coincidences: f64,
    /// Why the cell has no S-value.
    pub flag: Option<String>,
}

/// S-values for every pair of cells, row index from region A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSMatrix {
    pub n_a: usize,
    pub n_b: usize,
    /// Row-major: `cells[i * n_b + j]` pairs cell `i` of A with cell `j` of B.
    pub cells: Vec<SpatialCell>,
}

impl SpatialSMatrix {
    pub fn get(&self, i: usize, j: usize) -> &SpatialCell {
        &self.cells[i * self.n_b + j]
    }

    pub fn populated(&self) -> impl Iterator<Item = (&SpatialCell, &SValueReport)> {
        self.cells.iter().filter_map(|c| c.report.as_ref().map(|r| (c, r)))
    }
}

fn split_cells(photons: &[Photon], grid: &SubareaGrid) -> Vec<Vec<Photon>> {
    let mut out = vec![Vec::new(); grid.len()];
    for p in photons {
        if let Some(k) = grid.cell_of(p.cx, p.cy) {
            out[k].push(*p);
        }
    }
    out
}

fn region_histograms(runs: &[PhotonRun], params: &CoincidenceParams) -> Vec<Histogram> {
    runs.par_iter().map(|r| find_coincidences(&r.photons[0], &r.photons[1], params).1).collect()
}

/// Coincidence counting and CHSH test on every pair of cells, reusing the
/// photons' existing walk correction. Every cell is fitted with the peak
/// shape of the whole regions.
pub fn spatial_bell(runs: &[PhotonRun], grids: &[SubareaGrid; 2], angles: &ChshAngles, params: &SpatialParams) -> Result<SpatialSMatrix, BellError> {
    if runs.is_empty() {
        return Err(BellError::InsufficientStatistics("no runs".into()));
    }
    let shape = shared_shape(&region_histograms(runs, &params.coincidence))?;
    let (n_a, n_b) = (grids[0].len(), grids[1].len());
    // one run's cells at a time keeps memory at one copy of a run
    let hists: Vec<Vec<Histogram>> = runs
        .iter()
        .map(|r| {
            let (ca, cb) = (split_cells(&r.photons[0], &grids[0]), split_cells(&r.photons[1], &grids[1]));
            (0..n_a * n_b)
                .into_par_iter()
                .map(|k| find_coincidences(&ca[k / n_b], &cb[k % n_b], &params.coincidence).1)
                .collect()
        })
        .collect();
    let results: Vec<SpatialCell> = (0..n_a * n_b)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n_b, k % n_b);
            let mut records = Vec::with_capacity(runs.len());
            let mut min_n = f64::INFINITY;
            let mut flag = None;
            for (run, h) in runs.iter().zip(&hists) {
                match RunRecord::with_shape(run.setting, run.duration, &h[k], &shape) {
                    Ok(rec) => {
                        min_n = min_n.min(rec.coincidences);
                        records.push(rec);
                    }
                    Err(e) => {
                        min_n = 0.0;
                        flag.get_or_insert(format!("peak fit failed at alpha={:.1} beta={:.1}: {e}", run.setting.alpha.to_degrees(), run.setting.beta.to_degrees()));
                    }
                }
            }
            if flag.is_none() && min_n < params.min_coincidences {
                flag = Some(format!("{min_n:.0} coincidences in a run, need {}", params.min_coincidences));
            }
            let report = match flag {
                None => match bell_test(&records, angles) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        flag = Some(e.to_string());
                        None
                    }
                },
                Some(_) => None,
            };
            SpatialCell {
                cell_a: i,
                cell_b: j,
                report,
                min_coincidences: min_n,
                flag,
            }
        })
        .collect();
    Ok(SpatialSMatrix { n_a, n_b, cells: results })
}

/// Run records of whole-region coincidences, as used for the global S.
pub fn region_records(runs: &[PhotonRun], params: &CoincidenceParams) -> Result<Vec<RunRecord>, BellError> {
    if runs.is_empty() {
        return Err(BellError::InsufficientStatistics("no runs".into()));
    }
    let hists = region_histograms(runs, params);
    let shape = shared_shape(&hists)?;
    runs.par_iter()
        .zip(&hists)
        .map(|(r, hist)| {
            let mut rec = RunRecord::with_shape(r.setting, r.duration, hist, &shape)?;
            rec.singles = Some([r.photons[0].len() as f64, r.photons[1].len() as f64]);
            Ok(rec)
        })
        .collect()
}

/// Chi-square of populated cells against one S-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n_cells: usize,
}

/// Tests whether every populated cell agrees with `s_global`, with `n - 1`
/// degrees of freedom for `n` cells.
pub fn uniformity_test(m: &SpatialSMatrix, s_global: f64) -> Result<Uniformity, BellError> {
    let terms: Vec<f64> = m.populated().map(|(_, r)| ((r.s - s_global) / r.sigma_s).powi(2)).collect();
    if terms.len() < 2 {
        return Err(BellError::InsufficientStatistics("fewer than two populated cells".into()));
    }
    let chi2: f64 = terms.iter().sum();
    let dof = terms.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| BellError::InsufficientStatistics(e.to_string()))?;
    Ok(Uniformity {
        chi2,
        dof,
        p_value: dist.sf(chi2),
        n_cells: terms.len(),
    })
}
