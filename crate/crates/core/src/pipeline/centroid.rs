//! Photon position and time from a pixel cluster.

use serde::{Deserialize, Serialize};

use super::cluster::ClusterSet;
use super::event::{PixelEvent, Timebase};
use super::walk::WalkTable;

/// One reconstructed photon. Times and TOTs in ns, positions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Photon {
    pub cx: f64,
    pub cy: f64,
    /// TOA of the member with the largest TOT.
    pub toa_raw: f64,
    /// `toa_raw` minus the walk shift for that member's TOT.
    pub toa_corr: f64,
    pub tot_max: f64,
    pub tot_sum: f64,
    pub n_pixels: u32,
}

/// TOT-weighted centre and the time of the brightest pixel. Among members
/// sharing the largest TOT the earliest one is taken.
pub fn centroid(members: &[PixelEvent], tb: &Timebase, walk: Option<&WalkTable>) -> Photon {
    assert!(!members.is_empty(), "empty cluster");
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sw = 0.0;
    let mut best = members[0];
    for e in members {
        let w = e.tot as f64;
        sx += w * e.x as f64;
        sy += w * e.y as f64;
        sw += w;
        if e.tot > best.tot || (e.tot == best.tot && e.toa < best.toa) {
            best = *e;
        }
    }
    let (cx, cy) = if sw > 0.0 {
        (sx / sw, sy / sw)
    } else {
        let n = members.len() as f64;
        (
            members.iter().map(|e| e.x as f64).sum::<f64>() / n,
            members.iter().map(|e| e.y as f64).sum::<f64>() / n,
        )
    };
    let toa_raw = tb.toa_ns(best.toa);
    let tot_max = tb.tot_ns(best.tot);
    Photon {
        cx,
        cy,
        toa_raw,
        toa_corr: toa_raw - walk.map_or(0.0, |w| w.shift(tot_max)),
        tot_max,
        tot_sum: sw * tb.tot_tick_ns as f64,
        n_pixels: members.len() as u32,
    }
}

/// Photons of every cluster, in cluster order.
pub fn centroids(set: &ClusterSet, tb: &Timebase, walk: Option<&WalkTable>) -> Vec<Photon> {
    set.iter().map(|m| centroid(m, tb, walk)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::cluster::bounding_box;
    use proptest::prelude::*;

    fn tb() -> Timebase {
        Timebase::default()
    }

    #[test]
    fn weighted_mean() {
        let m = [PixelEvent::new(10, 10, 5, 40), PixelEvent::new(11, 10, 3, 120)];
        let p = centroid(&m, &tb(), None);
        assert!((p.cx - 10.75).abs() < 1e-12);
        assert_eq!(p.cy, 10.0);
        assert_eq!(p.toa_raw, tb().toa_ns(3));
        assert_eq!(p.tot_max, 3000.0);
        assert_eq!(p.tot_sum, 4000.0);
        assert_eq!(p.n_pixels, 2);
    }

    #[test]
    fn single_pixel() {
        let p = centroid(&[PixelEvent::new(7, 9, 64, 3)], &tb(), None);
        assert_eq!((p.cx, p.cy), (7.0, 9.0));
        assert_eq!(p.toa_raw, 100.0);
        assert_eq!(p.toa_corr, 100.0);
    }

    #[test]
    fn walk_correction_uses_brightest_pixel() {
        let table = WalkTable::from_shifts(25.0, vec![40.0, 30.0, 20.0, 10.0], 100.0);
        let m = [PixelEvent::new(1, 1, 100, 1), PixelEvent::new(2, 1, 110, 2)];
        let p = centroid(&m, &tb(), Some(&table));
        assert_eq!(p.toa_raw, tb().toa_ns(110));
        assert_eq!(p.toa_corr, p.toa_raw - 20.0);
    }

    proptest! {
        #[test]
        fn centroid_inside_bounding_box(pix in prop::collection::vec((0u16..20, 0u16..20, 1u16..200), 1..12)) {
            let m: Vec<PixelEvent> = pix.iter().enumerate().map(|(i, &(x, y, t))| PixelEvent::new(x, y, i as u64, t)).collect();
            let p = centroid(&m, &tb(), None);
            let (x0, y0, x1, y1) = bounding_box(&m);
            prop_assert!(p.cx >= x0 as f64 - 1e-9 && p.cx <= x1 as f64 + 1e-9);
            prop_assert!(p.cy >= y0 as f64 - 1e-9 && p.cy <= y1 as f64 + 1e-9);
            prop_assert!(p.n_pixels >= 1);
        }
    }
}
