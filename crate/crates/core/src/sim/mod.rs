//! Synthetic raw pixel streams from an entangled-pair source viewed by the camera.
//!
//! Arm A carries the `alpha` polarizer and is imaged onto fiber spot 0, arm B
//! carries `beta` and lands on spot 1. All times are ns, all positions pixels.

pub mod cluster;
pub mod counts;
pub mod deadtime;
pub mod photons;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

pub use cluster::{emit_cluster, ClusterModel, SimHit, TimeWalkModel};
pub use deadtime::apply_dead_time;

use crate::error::SimError;
use crate::geometry::PixelBox;
use crate::pipeline::event::{PixelEvent, Timebase};
use crate::quantum::{outcome_probabilities, PolarizerSetting, TwoPhotonState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub state: TwoPhotonState,
    /// Pairs per second at the fiber outputs.
    pub pair_rate: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            state: TwoPhotonState::new(-0.15, 2.10),
            pair_rate: 333_000.0,
            duration: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TruthLevel {
    /// No truth records and no event origins.
    None,
    /// Records for detected photons and dark counts.
    #[default]
    Detected,
    /// Records for every photon of every pair.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Probability that a photon reaching the photocathode is detected.
    pub qe: f64,
    /// Dark counts per second over the whole sensor.
    pub dark_rate: f64,
    /// Per-pixel dead time, ns.
    pub dead_time: f64,
    pub sensor_size: (u16, u16),
    /// Centres of the fiber images for arm A and arm B.
    pub fiber_centers: [(f64, f64); 2],
    /// Gaussian mode radius of the fiber images, pixels.
    pub fiber_sigma: f64,
    /// Mean over-threshold pixels per flash.
    pub cluster_size_mean: f64,
    /// Gaussian radius of one flash on the sensor, pixels.
    pub footprint_sigma: f64,
    /// Log-normal width of the total flash signal.
    pub signal_sigma_log: f64,
    /// TOT per threshold unit of pixel signal above threshold, ns.
    pub tot_scale: f64,
    pub walk: TimeWalkModel,
    /// Total timing jitter of each pixel, ns.
    pub jitter_sigma: f64,
    /// Part of `jitter_sigma` that is independent between pixels of one
    /// flash; the rest is shared. Must not exceed `jitter_sigma`.
    pub pixel_jitter: f64,
    /// Fixed delay between photon arrival and the earliest possible hit, ns.
    pub latency: f64,
    /// Extra optical path of arm B, ns.
    pub arm_delay: f64,
    pub hot_pixel_fraction: f64,
    /// Hits per second on each hot pixel.
    pub hot_pixel_rate: f64,
    /// Seed for the (run-independent) hot-pixel map.
    pub hot_pixel_seed: u64,
    pub readout_shuffle: bool,
    /// Maximum readout delay used by the shuffle, ns.
    pub shuffle_window: f64,
    pub timebase: Timebase,
    /// Pairs whose arm-A photon lands here get independent random polarizer
    /// outcomes.
    pub decoherent_region: Option<PixelBox>,
    pub truth: TruthLevel,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            qe: 0.18,
            dark_rate: 1200.0,
            dead_time: 1000.0,
            sensor_size: (256, 256),
            fiber_centers: [(70.0, 128.0), (186.0, 128.0)],
            fiber_sigma: 6.0,
            cluster_size_mean: 4.0,
            footprint_sigma: 0.6,
            signal_sigma_log: 0.5,
            tot_scale: 300.0,
            walk: TimeWalkModel {
                w0: 100.0,
                tot_ref: 100.0,
            },
            jitter_sigma: 3.0,
            pixel_jitter: 1.0,
            latency: 25.0,
            arm_delay: 0.0,
            hot_pixel_fraction: 0.001,
            hot_pixel_rate: 1000.0,
            hot_pixel_seed: 0x5eed,
            readout_shuffle: true,
            shuffle_window: 2000.0,
            timebase: Timebase::default(),
            decoherent_region: None,
            truth: TruthLevel::Detected,
        }
    }
}

impl DetectorConfig {
    /// Default analysis boxes: 30x30 around fiber A, 42x42 around fiber B.
    pub fn default_regions(&self) -> [PixelBox; 2] {
        let [(ax, ay), (bx, by)] = self.fiber_centers;
        [PixelBox::centered(ax, ay, 30), PixelBox::centered(bx, by, 42)]
    }

    /// The hot pixels, fixed by `hot_pixel_seed` and sorted.
    pub fn hot_pixels(&self) -> Vec<(u16, u16)> {
        let (w, h) = self.sensor_size;
        let n_pix = w as usize * h as usize;
        let n_hot = (self.hot_pixel_fraction * n_pix as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.hot_pixel_seed);
        let picked = rand::seq::index::sample(&mut rng, n_pix, n_hot.min(n_pix));
        let mut out: Vec<(u16, u16)> = picked.iter().map(|i| ((i % w as usize) as u16, (i / w as usize) as u16)).collect();
        out.sort_unstable();
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::ConfigInvalid(m.to_string()));
        if !(0.0..=1.0).contains(&self.qe) {
            return bad("qe must be within [0, 1]");
        }
        if !(self.dark_rate >= 0.0) || !(self.hot_pixel_rate >= 0.0) {
            return bad("rates must be non-negative");
        }
        if !(self.dead_time >= 0.0) {
            return bad("dead_time must be non-negative");
        }
        if self.sensor_size.0 == 0 || self.sensor_size.1 == 0 {
            return bad("sensor must have pixels");
        }
        if !(0.0..=1.0).contains(&self.hot_pixel_fraction) {
            return bad("hot_pixel_fraction must be within [0, 1]");
        }
        if !(self.fiber_sigma > 0.0) || !(self.tot_scale > 0.0) {
            return bad("fiber_sigma and tot_scale must be positive");
        }
        if !(self.jitter_sigma >= 0.0) || !(self.pixel_jitter >= 0.0) || !(self.shuffle_window >= 0.0) {
            return bad("jitters and shuffle window must be non-negative");
        }
        if !(self.walk.w0 >= 0.0) || !(self.walk.tot_ref > 0.0) {
            return bad("walk needs w0 >= 0 and tot_ref > 0");
        }
        if self.pixel_jitter > self.jitter_sigma {
            return bad("pixel_jitter cannot exceed jitter_sigma");
        }
        if !(self.latency >= 5.0 * (self.jitter_sigma + self.pixel_jitter)) {
            return bad("latency must cover five jitter sigmas so no hit precedes its photon");
        }
        if self.timebase.toa_tick_fs == 0 || self.timebase.tot_tick_ns == 0 {
            return bad("clock ticks must be positive");
        }
        let [a, b] = self.default_regions();
        if a.intersects(&b) {
            return bad("fiber regions overlap");
        }
        Ok(())
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.pair_rate >= 0.0) || !self.pair_rate.is_finite() {
            return Err(SimError::ConfigInvalid("pair_rate must be finite and non-negative".into()));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(SimError::ConfigInvalid("duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

/// Ground truth of one simulated photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    /// Pair index; `None` for dark counts.
    pub pair_id: Option<u64>,
    /// Emission (dark: arrival) time, ns.
    pub emission_time: f64,
    /// `None` for dark counts.
    pub arm: Option<Arm>,
    pub passed_polarizer: bool,
    /// Detected by the photocathode and fired at least one pixel.
    pub detected: bool,
    pub true_x: f64,
    pub true_y: f64,
    pub is_dark: bool,
}

/// Origin marker for hits from hot pixels.
pub const HOT_PIXEL: u32 = u32::MAX;

#[derive(Debug, Clone, Default)]
pub struct SimRun {
    /// Hits in readout order (time order if the shuffle is off).
    pub events: Vec<PixelEvent>,
    /// Index into `truth` for every event, or [`HOT_PIXEL`]. Empty when
    /// truth is off.
    pub origins: Vec<u32>,
    pub truth: Vec<TruthRecord>,
    pub timebase: Timebase,
    pub sensor_size: (u16, u16),
}

/// Random streams, one per physical process, so that changing one rate does
/// not reshuffle the others.
pub(crate) mod stream {
    pub const PAIRS: u64 = 1;
    pub const DARK: u64 = 2;
    pub const FLASH: u64 = 3;
    pub const HOT: u64 = 4;
    pub const READOUT: u64 = 5;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub(crate) struct Flash {
    pub(crate) t: f64,
    pub(crate) x: f64,
    pub(crate) y: f64,
    pub(crate) truth: u32,
}

/// Detected photons and dark counts, pairs first in time order, then darks.
pub(crate) fn generate_flashes(src: &SourceConfig, det: &DetectorConfig, setting: &PolarizerSetting) -> (Vec<Flash>, Vec<TruthRecord>) {
    let keep_truth = det.truth != TruthLevel::None;
    let duration_ns = src.duration * 1e9;

    let mut truth: Vec<TruthRecord> = Vec::new();
    let mut flashes: Vec<Flash> = Vec::new();

    // photon pairs
    let mut rng = rng_for(src.seed, stream::PAIRS);
    let probs = outcome_probabilities(&src.state, setting);
    let cum = [probs[0], probs[0] + probs[1], probs[0] + probs[1] + probs[2]];
    let fiber = Normal::new(0.0, det.fiber_sigma).expect("validated sigma");
    if src.pair_rate > 0.0 {
        let gap = Exp::new(src.pair_rate * 1e-9).expect("positive rate");
        let mut t = 0.0;
        let mut pair_id = 0u64;
        loop {
            t += gap.sample(&mut rng);
            if t >= duration_ns {
                break;
            }
            let pos_a = det.decoherent_region.map(|_| {
                let (cx, cy) = det.fiber_centers[0];
                (cx + fiber.sample(&mut rng), cy + fiber.sample(&mut rng))
            });
            let (pass_a, pass_b) = match (pos_a, det.decoherent_region) {
                (Some((x, y)), Some(region)) if region.contains(x, y) => (rng.random::<bool>(), rng.random::<bool>()),
                _ => {
                    let u: f64 = rng.random();
                    match cum.iter().position(|c| u < *c).unwrap_or(3) {
                        0 => (true, true),
                        1 => (true, false),
                        2 => (false, true),
                        _ => (false, false),
                    }
                }
            };
            for (arm, passed) in [(Arm::A, pass_a), (Arm::B, pass_b)] {
                let detected = passed && rng.random::<f64>() < det.qe;
                if !detected && det.truth != TruthLevel::All {
                    continue;
                }
                let k = arm as usize;
                let (cx, cy) = det.fiber_centers[k];
                let (x, y) = match (arm, pos_a) {
                    (Arm::A, Some(p)) => p,
                    _ => (cx + fiber.sample(&mut rng), cy + fiber.sample(&mut rng)),
                };
                let t_arm = if arm == Arm::B { t + det.arm_delay } else { t };
                let idx = truth.len() as u32;
                if keep_truth {
                    truth.push(TruthRecord {
                        pair_id: Some(pair_id),
                        emission_time: t_arm,
                        arm: Some(arm),
                        passed_polarizer: passed,
                        detected,
                        true_x: x,
                        true_y: y,
                        is_dark: false,
                    });
                }
                if detected {
                    flashes.push(Flash { t: t_arm, x, y, truth: idx });
                }
            }
            pair_id += 1;
        }
    }

    // photocathode dark counts, uniform over the sensor
    let mut rng = rng_for(src.seed, stream::DARK);
    let (w, h) = det.sensor_size;
    let n_dark = if det.dark_rate > 0.0 {
        Poisson::new(det.dark_rate * src.duration).expect("positive mean").sample(&mut rng) as usize
    } else {
        0
    };
    for _ in 0..n_dark {
        let t = rng.random::<f64>() * duration_ns;
        let x = rng.random::<f64>() * w as f64 - 0.5;
        let y = rng.random::<f64>() * h as f64 - 0.5;
        let idx = truth.len() as u32;
        if keep_truth {
            truth.push(TruthRecord {
                pair_id: None,
                emission_time: t,
                arm: None,
                passed_polarizer: false,
                detected: true,
                true_x: x,
                true_y: y,
                is_dark: true,
            });
        }
        flashes.push(Flash { t, x, y, truth: idx });
    }
    (flashes, truth)
}

/// Simulates one polarizer setting. See the module docs for the geometry.
pub fn generate_run(src: &SourceConfig, det: &DetectorConfig, setting: &PolarizerSetting) -> Result<SimRun, SimError> {
    src.validate()?;
    det.validate()?;
    let model = ClusterModel::new(det)?;
    let keep_truth = det.truth != TruthLevel::None;
    let duration_ns = src.duration * 1e9;
    let (flashes, mut truth) = generate_flashes(src, det, setting);

    // flashes to pixel hits
    let mut rng = rng_for(src.seed, stream::FLASH);
    let mut hits: Vec<(SimHit, u32)> = Vec::with_capacity(flashes.len() * 5);
    let mut scratch = Vec::with_capacity(16);
    for f in &flashes {
        scratch.clear();
        let n = model.emit(f.t, f.x, f.y, &mut rng, &mut scratch);
        if n == 0 && keep_truth {
            truth[f.truth as usize].detected = false;
        }
        hits.extend(scratch.iter().map(|h| (*h, f.truth)));
    }
    drop(flashes);

    // hot pixels fire single-pixel hits at a fixed rate
    let mut rng = rng_for(src.seed, stream::HOT);
    if det.hot_pixel_rate > 0.0 {
        let gap = Exp::new(det.hot_pixel_rate * 1e-9).expect("positive rate");
        for (x, y) in det.hot_pixels() {
            let mut t = gap.sample(&mut rng);
            while t < duration_ns {
                let tot = rng.random_range(1..=40u16);
                hits.push((SimHit { toa_ns: t, x, y, tot }, HOT_PIXEL));
                t += gap.sample(&mut rng);
            }
        }
    }

    hits.sort_by(|a, b| a.0.toa_ns.total_cmp(&b.0.toa_ns));
    let kept = apply_dead_time(&hits, |(h, _)| (h.x, h.y, h.toa_ns), det.dead_time, det.sensor_size);

    let tb = det.timebase;
    let mut events: Vec<PixelEvent> = Vec::with_capacity(kept.len());
    let mut origins: Vec<u32> = Vec::with_capacity(if keep_truth { kept.len() } else { 0 });
    for &i in &kept {
        let (h, o) = hits[i];
        events.push(PixelEvent::new(h.x, h.y, tb.toa_ticks_floor(h.toa_ns), h.tot));
        if keep_truth {
            origins.push(o);
        }
    }
    drop(hits);

    if det.readout_shuffle && det.shuffle_window > 0.0 {
        let mut rng = rng_for(src.seed, stream::READOUT);
        let order = readout_order(&events, det.shuffle_window / tb.toa_tick_ns(), &mut rng);
        events = order.iter().map(|&i| events[i]).collect();
        if keep_truth {
            origins = order.iter().map(|&i| origins[i]).collect();
        }
    }

    Ok(SimRun {
        events,
        origins,
        truth,
        timebase: tb,
        sensor_size: det.sensor_size,
    })
}

/// Permutation of a time-ordered stream into readout order. Each hit is
/// read out after a random delay of up to `window_ticks`; hits sharing a
/// timestamp keep their relative order, so a stable sort by TOA restores the
/// original stream exactly.
pub fn readout_order<R: Rng + ?Sized>(events: &[PixelEvent], window_ticks: f64, rng: &mut R) -> Vec<usize> {
    let n = events.len();
    let keys: Vec<f64> = events
        .iter()
        .map(|e| e.toa as f64 + rng.random::<f64>() * window_ticks)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    // first index of each run of equal timestamps
    let mut group_start = vec![0usize; n];
    for i in 1..n {
        group_start[i] = if events[i].toa == events[i - 1].toa { group_start[i - 1] } else { i };
    }
    let mut taken = vec![0usize; n];
    for slot in order.iter_mut() {
        let g = group_start[*slot];
        *slot = g + taken[g];
        taken[g] += 1;
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_detector() -> DetectorConfig {
        DetectorConfig {
            qe: 1.0,
            dark_rate: 0.0,
            hot_pixel_fraction: 0.0,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        DetectorConfig::default().validate().unwrap();
        SourceConfig::default().validate().unwrap();
        assert_eq!(DetectorConfig::default().hot_pixels().len(), 66);
    }

    #[test]
    fn invalid_configs() {
        let mut d = DetectorConfig::default();
        d.qe = 1.5;
        assert!(d.validate().is_err());
        let mut d = DetectorConfig::default();
        d.fiber_centers = [(100.0, 100.0), (110.0, 100.0)];
        assert!(d.validate().is_err());
        let s = SourceConfig { duration: 0.0, ..SourceConfig::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn deterministic() {
        let src = SourceConfig { duration: 0.01, ..SourceConfig::default() };
        let det = DetectorConfig::default();
        let set = PolarizerSetting::from_degrees(0.0, 22.5);
        let a = generate_run(&src, &det, &set).unwrap();
        let b = generate_run(&src, &det, &set).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.origins, b.origins);
        assert_eq!(a.truth, b.truth);
        let c = generate_run(&SourceConfig { seed: 2, ..src }, &det, &set).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn phi_plus_aligned_pairs() {
        let src = SourceConfig {
            state: TwoPhotonState::PHI_PLUS,
            pair_rate: 1e4,
            duration: 1.0,
            seed: 11,
        };
        let det = DetectorConfig {
            truth: TruthLevel::Detected,
            ..quiet_detector()
        };
        let run = generate_run(&src, &det, &PolarizerSetting::new(0.0, 0.0)).unwrap();
        let mut arms = std::collections::HashMap::<u64, u8>::new();
        for t in run.truth.iter().filter(|t| t.passed_polarizer) {
            *arms.entry(t.pair_id.unwrap()).or_default() += 1;
        }
        let both = arms.values().filter(|&&n| n == 2).count() as f64;
        assert!((both - 5000.0).abs() < 3.0 * 5000f64.sqrt(), "{both}");
        // phi+ at equal angles: never exactly one photon through
        assert_eq!(arms.values().filter(|&&n| n == 1).count(), 0);
    }

    #[test]
    fn dark_only_run() {
        let src = SourceConfig {
            pair_rate: 0.0,
            duration: 1.0,
            ..SourceConfig::default()
        };
        let det = DetectorConfig {
            dark_rate: 1e3,
            hot_pixel_fraction: 0.0,
            readout_shuffle: false,
            ..DetectorConfig::default()
        };
        let run = generate_run(&src, &det, &PolarizerSetting::new(0.0, 0.0)).unwrap();
        let n_dark = run.truth.len() as f64;
        assert!((n_dark - 1e3).abs() < 4.0 * 1e3f64.sqrt());
        let per_flash = run.events.len() as f64 / run.truth.iter().filter(|t| t.detected).count() as f64;
        assert!((per_flash - 4.0).abs() < 0.3, "{per_flash}");
        let left = run.events.iter().filter(|e| e.x < 128).count() as f64;
        let frac = left / run.events.len() as f64;
        assert!((frac - 0.5).abs() < 0.06, "{frac}");
    }

    #[test]
    fn shuffle_is_undone_by_stable_sort() {
        let src = SourceConfig { duration: 0.005, ..SourceConfig::default() };
        let on = DetectorConfig::default();
        let off = DetectorConfig {
            readout_shuffle: false,
            ..DetectorConfig::default()
        };
        let set = PolarizerSetting::new(0.3, 0.1);
        let a = generate_run(&src, &on, &set).unwrap();
        let b = generate_run(&src, &off, &set).unwrap();
        assert_ne!(a.events, b.events);
        let mut idx: Vec<usize> = (0..a.events.len()).collect();
        idx.sort_by_key(|&i| a.events[i].toa);
        let sorted: Vec<PixelEvent> = idx.iter().map(|&i| a.events[i]).collect();
        let origins: Vec<u32> = idx.iter().map(|&i| a.origins[i]).collect();
        assert_eq!(sorted, b.events);
        assert_eq!(origins, b.origins);
    }

    #[test]
    fn hits_never_precede_emission() {
        let src = SourceConfig { duration: 0.005, ..SourceConfig::default() };
        let det = DetectorConfig::default();
        let run = generate_run(&src, &det, &PolarizerSetting::new(0.0, 0.0)).unwrap();
        let tb = run.timebase;
        for (e, &o) in run.events.iter().zip(&run.origins) {
            if o != HOT_PIXEL {
                // floor quantization can move a hit back by at most one tick
                assert!(tb.toa_ns(e.toa) + tb.toa_tick_ns() > run.truth[o as usize].emission_time);
            }
        }
    }

    #[test]
    fn outcome_frequencies_match_quantum_model() {
        use rand::SeedableRng;
        let mut pick = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..10 {
            let state = TwoPhotonState::new(pick.random_range(-1.5..1.5), pick.random_range(0.0..6.28));
            let setting = PolarizerSetting::new(pick.random_range(0.0..3.14), pick.random_range(0.0..3.14));
            let src = SourceConfig {
                state,
                pair_rate: 1e6,
                duration: 0.1,
                seed: trial,
            };
            let det = DetectorConfig {
                truth: TruthLevel::All,
                ..quiet_detector()
            };
            let run = generate_run(&src, &det, &setting).unwrap();
            let mut pass = std::collections::HashMap::<u64, [bool; 2]>::new();
            for t in &run.truth {
                let e = pass.entry(t.pair_id.unwrap()).or_default();
                e[t.arm.unwrap() as usize] = t.passed_polarizer;
            }
            let n = pass.len() as f64;
            let mut counts = [0.0; 4];
            for [a, b] in pass.values() {
                counts[match (a, b) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    _ => 3,
                }] += 1.0;
            }
            let p = outcome_probabilities(&state, &setting);
            for k in 0..4 {
                let sd = (n * p[k] * (1.0 - p[k])).sqrt().max(1.0);
                assert!((counts[k] - n * p[k]).abs() < 4.0 * sd, "trial {trial} outcome {k}");
            }
        }
    }
}
