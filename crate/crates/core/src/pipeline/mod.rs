//! Raw pixel stream to photons and coincident pairs: time ordering, hot
//! pixel masking, clustering, centroiding, walk correction and pairing.

pub mod centroid;
pub mod cluster;
pub mod coincidence;
pub mod event;
pub mod order;
pub mod walk;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use centroid::{centroid, centroids, Photon};
pub use cluster::{cluster, cluster_chunked, cluster_labels, Cluster, ClusterParams, ClusterSet};
pub use coincidence::{find_coincidences, time_resolution, CoincidenceParams, CoincidencePair};
pub use event::{EventSource, PixelEvent, Timebase};
pub use order::{find_hot_pixels, mask_hot_pixels, time_order, PixelMask};
pub use walk::{build_walk_table, dtoa_spread, residual_shifts, DtoaSpread, WalkParams, WalkTable};

use crate::error::PipelineError;
use crate::geometry::PixelBox;
use crate::hist::Histogram;

/// Fiber image centres the default analysis boxes are drawn around.
pub const DEFAULT_FIBER_CENTERS: [(f64, f64); 2] = [(70.0, 128.0), (186.0, 128.0)];

/// 30x30 around fiber A and 42x42 around fiber B.
pub fn default_regions() -> [PixelBox; 2] {
    let [(ax, ay), (bx, by)] = DEFAULT_FIBER_CENTERS;
    [PixelBox::centered(ax, ay, 30), PixelBox::centered(bx, by, 42)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessConfig {
    pub cluster: ClusterParams,
    pub walk: WalkParams,
    pub coincidence: CoincidenceParams,
    /// Analysis boxes for arm A and arm B.
    pub regions: [PixelBox; 2],
    pub hot_pixels: Vec<(u16, u16)>,
    /// Approximate time span clustered per parallel block, ns.
    pub chunk_ns: f64,
    /// Build a walk table from the run when none is supplied.
    pub correct_walk: bool,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterParams::default(),
            walk: WalkParams::default(),
            coincidence: CoincidenceParams::default(),
            regions: default_regions(),
            hot_pixels: Vec::new(),
            chunk_ns: 1e6,
            correct_walk: true,
        }
    }
}

/// Wall time per stage, seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub order: f64,
    pub cluster: f64,
    pub walk: f64,
    pub centroid: f64,
    pub coincide: f64,
}

impl StageTimes {
    /// Time-order, cluster, walk calibration and centroiding.
    pub fn reconstruction(&self) -> f64 {
        self.order + self.cluster + self.walk + self.centroid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutput {
    /// Hits read, before masking.
    pub n_events: usize,
    pub n_masked: usize,
    pub n_clusters: usize,
    pub walk: Option<WalkTable>,
    /// Photons inside each region, ordered by corrected time.
    pub photons: [Vec<Photon>; 2],
    pub pairs: Vec<CoincidencePair>,
    pub histogram: Histogram,
    pub times: StageTimes,
}

/// Photons whose centroid lies in `region`, ordered by corrected time.
pub fn photons_in_region(photons: &[Photon], region: &PixelBox) -> Vec<Photon> {
    let mut v: Vec<Photon> = photons.iter().filter(|p| region.contains(p.cx, p.cy)).copied().collect();
    v.sort_by(|a, b| a.toa_corr.total_cmp(&b.toa_corr));
    v
}

/// Full reconstruction of one run. `walk` overrides the table built from
/// the run itself.
pub fn process(mut events: Vec<PixelEvent>, tb: &Timebase, cfg: &ProcessConfig, walk: Option<WalkTable>) -> Result<ProcessOutput, PipelineError> {
    let mut times = StageTimes::default();
    let n_events = events.len();

    let clock = Instant::now();
    if !cfg.hot_pixels.is_empty() {
        let (w, h) = events.iter().fold((1u16, 1u16), |(w, h), e| (w.max(e.x + 1), h.max(e.y + 1)));
        mask_hot_pixels(&mut events, &PixelMask::new((w, h), cfg.hot_pixels.iter().copied()));
    }
    let n_masked = n_events - events.len();
    time_order(&mut events);
    times.order = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let set = cluster_chunked(&events, tb, &cfg.cluster, cfg.chunk_ns);
    drop(events);
    times.cluster = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let walk = match walk {
        Some(w) => Some(w),
        None if cfg.correct_walk => {
            let table = build_walk_table(&set, tb, &cfg.walk)?;
            if !table.flagged_bins().is_empty() {
                log::info!("walk table: {} bins interpolated for lack of entries", table.flagged_bins().len());
            }
            Some(table)
        }
        None => None,
    };
    times.walk = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let all = centroids(&set, tb, walk.as_ref());
    let n_clusters = set.len();
    drop(set);
    let photons = [photons_in_region(&all, &cfg.regions[0]), photons_in_region(&all, &cfg.regions[1])];
    drop(all);
    times.centroid = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (pairs, histogram) = find_coincidences(&photons[0], &photons[1], &cfg.coincidence);
    times.coincide = clock.elapsed().as_secs_f64();

    Ok(ProcessOutput {
        n_events,
        n_masked,
        n_clusters,
        walk,
        photons,
        pairs,
        histogram,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_regions_are_disjoint() {
        let [a, b] = default_regions();
        assert!(!a.intersects(&b));
        assert_eq!(a.area(), 900);
        assert_eq!(b.area(), 1764);
    }

    #[test]
    fn region_filter_sorts() {
        let p = |x: f64, t: f64| Photon {
            cx: x,
            cy: 128.0,
            toa_raw: t,
            toa_corr: t,
            tot_max: 1.0,
            tot_sum: 1.0,
            n_pixels: 1,
        };
        let all = [p(70.0, 5.0), p(186.0, 1.0), p(71.0, 2.0), p(10.0, 0.0)];
        let a = photons_in_region(&all, &default_regions()[0]);
        assert_eq!(a.iter().map(|q| q.toa_corr).collect::<Vec<_>>(), vec![2.0, 5.0]);
    }
}
