//! TOT-dependent time-walk calibration.
//!
//! Within a flash every pixel sees the same photon, so the spread of pixel
//! TOAs against their TOT measures the threshold walk. Each member's delay
//! behind the earliest pixel of its cluster is averaged per TOT bin and
//! referred to the mean delay of bright pixels, where walk has died out.

use serde::{Deserialize, Serialize};

use super::cluster::ClusterSet;
use super::event::Timebase;
use crate::error::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// TOT bin width, ns.
    pub tot_bin: f64,
    /// Pixels at or above this TOT define zero walk, ns.
    pub stable_tot: f64,
    /// Bins with fewer entries are interpolated from their neighbours.
    pub min_entries: u64,
    /// Passes over the data, each re-measuring on corrected times.
    pub iterations: usize,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            tot_bin: 25.0,
            stable_tot: 1500.0,
            min_entries: 100,
            iterations: 3,
        }
    }
}

/// Per-bin TOA shift to subtract; zero at and above `reference_tot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkTable {
    /// `n + 1` ascending edges, the last equal to `reference_tot`.
    pub tot_bin_edges: Vec<f64>,
    pub dtoa_shift: Vec<f64>,
    pub reference_tot: f64,
    /// Pixels measured per bin in the final pass.
    pub entries: Vec<u64>,
    /// Bins whose shift was interpolated for lack of entries.
    pub flagged: Vec<bool>,
}

impl WalkTable {
    /// Uniform bins of `bin` ns from zero. `reference_tot` must equal
    /// `bin * shifts.len()`.
    pub fn from_shifts(bin: f64, shifts: Vec<f64>, reference_tot: f64) -> Self {
        let n = shifts.len();
        Self {
            tot_bin_edges: (0..=n).map(|k| k as f64 * bin).collect(),
            dtoa_shift: shifts,
            reference_tot,
            entries: vec![0; n],
            flagged: vec![false; n],
        }
    }

    pub fn zero(bin: f64, reference_tot: f64) -> Self {
        let n = (reference_tot / bin).ceil() as usize;
        let mut t = Self::from_shifts(bin, vec![0.0; n], reference_tot);
        *t.tot_bin_edges.last_mut().expect("edges") = reference_tot;
        t
    }

    pub fn len(&self) -> usize {
        self.dtoa_shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dtoa_shift.is_empty()
    }

    pub fn bin_of(&self, tot_ns: f64) -> Option<usize> {
        if !(tot_ns >= self.tot_bin_edges[0]) || tot_ns >= self.reference_tot {
            return None;
        }
        let k = self.tot_bin_edges.partition_point(|e| *e <= tot_ns);
        Some((k - 1).min(self.len() - 1))
    }

    pub fn shift(&self, tot_ns: f64) -> f64 {
        self.bin_of(tot_ns).map_or(0.0, |k| self.dtoa_shift[k])
    }

    pub fn flagged_bins(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.flagged[k]).collect()
    }
}

/// Mean delay behind the earliest (corrected) pixel, per bin and for the
/// stable region, over all members of multi-pixel clusters.
struct Accumulated {
    sum: Vec<f64>,
    count: Vec<u64>,
    stable_sum: f64,
    stable_count: u64,
}

fn accumulate(set: &ClusterSet, tb: &Timebase, table: &WalkTable) -> Accumulated {
    let n = table.len();
    let mut acc = Accumulated {
        sum: vec![0.0; n],
        count: vec![0; n],
        stable_sum: 0.0,
        stable_count: 0,
    };
    let mut times = Vec::new();
    for members in set.iter().filter(|m| m.len() > 1) {
        times.clear();
        times.extend(members.iter().map(|e| {
            let tot = tb.tot_ns(e.tot);
            (tb.toa_ns(e.toa) - table.shift(tot), tot)
        }));
        let t0 = times.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        for &(t, tot) in &times {
            match table.bin_of(tot) {
                Some(k) => {
                    acc.sum[k] += t - t0;
                    acc.count[k] += 1;
                }
                None if tot >= table.reference_tot => {
                    acc.stable_sum += t - t0;
                    acc.stable_count += 1;
                }
                None => {}
            }
        }
    }
    acc
}

/// Weighted pool-adjacent-violators fit, non-increasing.
fn pav_non_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (v2, w2, n2) = blocks[blocks.len() - 1];
            let (v1, w1, n1) = blocks[blocks.len() - 2];
            if v1 >= v2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().expect("block") = ((v1 * w1 + v2 * w2) / w, w, n1 + n2);
        }
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

/// Fills flagged entries by linear interpolation between the nearest good
/// bins; beyond the last good bin values fall linearly to zero at `n`.
fn interpolate_flagged(values: &mut [f64], flagged: &[bool]) {
    let n = values.len();
    let good: Vec<usize> = (0..n).filter(|&k| !flagged[k]).collect();
    for k in 0..n {
        if !flagged[k] {
            continue;
        }
        let below = good.iter().rev().find(|&&g| g < k).copied();
        let above = good.iter().find(|&&g| g > k).copied();
        values[k] = match (below, above) {
            (Some(a), Some(b)) => values[a] + (values[b] - values[a]) * (k - a) as f64 / (b - a) as f64,
            (None, Some(b)) => values[b],
            (Some(a), None) => values[a] * (n - k) as f64 / (n - a) as f64,
            (None, None) => 0.0,
        };
    }
}

/// Measured walk per bin on data already corrected by `table`, or `None`
/// where a bin has fewer than `min_entries` pixels. Zero everywhere for a
/// self-consistent table.
pub fn residual_shifts(set: &ClusterSet, tb: &Timebase, table: &WalkTable, min_entries: u64) -> Result<Vec<Option<f64>>, PipelineError> {
    let acc = accumulate(set, tb, table);
    if acc.stable_count == 0 {
        return Err(PipelineError::InsufficientData(format!(
            "no pixels with TOT >= {} ns in multi-pixel clusters",
            table.reference_tot
        )));
    }
    let stable = acc.stable_sum / acc.stable_count as f64;
    Ok((0..table.len())
        .map(|k| (acc.count[k] >= min_entries.max(1)).then(|| acc.sum[k] / acc.count[k] as f64 - stable))
        .collect())
}

/// Builds the table from time-ordered clusters. Bins short of
/// `min_entries` are interpolated and listed in [`WalkTable::flagged`].
pub fn build_walk_table(set: &ClusterSet, tb: &Timebase, params: &WalkParams) -> Result<WalkTable, PipelineError> {
    if !(params.tot_bin > 0.0) || !(params.stable_tot > params.tot_bin) {
        return Err(PipelineError::InsufficientData("walk binning needs 0 < tot_bin < stable_tot".into()));
    }
    let mut table = WalkTable::zero(params.tot_bin, params.stable_tot);
    for pass in 0..params.iterations.max(1) {
        let acc = accumulate(set, tb, &table);
        let residual = residual_shifts(set, tb, &table, params.min_entries)?;
        let flagged: Vec<bool> = residual.iter().map(Option::is_none).collect();
        if flagged.iter().all(|f| *f) {
            return Err(PipelineError::InsufficientData(format!(
                "no TOT bin below {} ns has {} entries",
                params.stable_tot, params.min_entries
            )));
        }
        let mut shifts: Vec<f64> = residual
            .iter()
            .zip(&table.dtoa_shift)
            .map(|(r, s)| r.map_or(0.0, |r| s + r))
            .collect();
        interpolate_flagged(&mut shifts, &flagged);
        let weights: Vec<f64> = acc.count.iter().map(|&c| (c as f64).max(1.0)).collect();
        let shifts: Vec<f64> = pav_non_increasing(&shifts, &weights).into_iter().map(|s| s.max(0.0)).collect();
        let change = shifts
            .iter()
            .zip(&table.dtoa_shift)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        table.dtoa_shift = shifts;
        table.entries = acc.count;
        table.flagged = flagged;
        log::debug!("walk pass {pass}: largest change {change:.3} ns");
        if change < 0.05 {
            break;
        }
    }
    Ok(table)
}

/// Spread of member times within clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtoaSpread {
    /// Root mean square delay behind the earliest pixel, ns.
    pub rms: f64,
    /// Pixels contributing: every member except the earliest of each
    /// multi-pixel cluster.
    pub n: u64,
}

/// Intra-cluster delay spread, after subtracting `table` shifts if given.
pub fn dtoa_spread(set: &ClusterSet, tb: &Timebase, table: Option<&WalkTable>) -> DtoaSpread {
    let mut sum2 = 0.0;
    let mut n = 0u64;
    let mut times = Vec::new();
    for members in set.iter().filter(|m| m.len() > 1) {
        times.clear();
        times.extend(members.iter().map(|e| tb.toa_ns(e.toa) - table.map_or(0.0, |t| t.shift(tb.tot_ns(e.tot)))));
        let (i0, t0) = times
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, t)| if t < best.1 { (i, t) } else { best });
        for (i, t) in times.iter().enumerate() {
            if i != i0 {
                sum2 += (t - t0).powi(2);
                n += 1;
            }
        }
    }
    DtoaSpread {
        rms: if n > 0 { (sum2 / n as f64).sqrt() } else { 0.0 },
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::event::PixelEvent;
    use proptest::prelude::*;

    #[test]
    fn lookup() {
        let t = WalkTable::from_shifts(25.0, vec![40.0, 30.0, 20.0, 10.0], 100.0);
        assert_eq!(t.shift(0.0), 40.0);
        assert_eq!(t.shift(24.9), 40.0);
        assert_eq!(t.shift(25.0), 30.0);
        assert_eq!(t.shift(99.0), 10.0);
        assert_eq!(t.shift(100.0), 0.0);
        assert_eq!(t.shift(5000.0), 0.0);
        assert_eq!(t.shift(-1.0), 0.0);
    }

    #[test]
    fn pav_examples() {
        assert_eq!(pav_non_increasing(&[3.0, 2.0, 1.0], &[1.0; 3]), vec![3.0, 2.0, 1.0]);
        assert_eq!(pav_non_increasing(&[1.0, 3.0], &[1.0; 2]), vec![2.0, 2.0]);
        assert_eq!(pav_non_increasing(&[5.0, 1.0, 3.0], &[1.0, 1.0, 3.0]), vec![5.0, 2.5, 2.5]);
    }

    #[test]
    fn interpolation() {
        let mut v = vec![0.0, 10.0, 0.0, 6.0, 0.0];
        interpolate_flagged(&mut v, &[true, false, true, false, true]);
        assert_eq!(v, vec![10.0, 10.0, 8.0, 6.0, 3.0]);
    }

    /// Clusters of two pixels: one bright reference and one whose delay is
    /// a known function of its TOT tick.
    fn synthetic(delay: impl Fn(u16) -> u64) -> ClusterSet {
        let mut events = vec![];
        let mut offsets = vec![0];
        let mut t = 0;
        for rep in 0..200u64 {
            for tick in 1..=80u16 {
                t += 10_000;
                events.push(PixelEvent::new(10, 10, t, 100));
                events.push(PixelEvent::new(11, 10, t + delay(tick) + rep % 2, tick));
                offsets.push(events.len());
            }
        }
        ClusterSet { events, offsets }
    }

    #[test]
    fn recovers_step_walk() {
        let tb = Timebase::default();
        // 64 ticks (100 ns) for the faintest pixels, decreasing to zero at 1000 ns
        let set = synthetic(|tick| (64u64 * 40).saturating_sub(64 * tick as u64) / 40);
        let table = build_walk_table(&set, &tb, &WalkParams::default()).unwrap();
        assert_eq!(table.len(), 60);
        for k in 1..60usize {
            let want = tb.toa_ns((64u64 * 40).saturating_sub(64 * k as u64) / 40);
            assert!((table.dtoa_shift[k] - want).abs() < 1.0, "bin {k}: {} vs {want}", table.dtoa_shift[k]);
        }
        // bin 0 holds no pixels (TOT is at least one tick)
        assert!(table.flagged[0]);
        let before = dtoa_spread(&set, &tb, None);
        let after = dtoa_spread(&set, &tb, Some(&table));
        assert!(before.rms > 40.0 && after.rms < 1.5, "{before:?} {after:?}");
    }

    #[test]
    fn no_walk_gives_flat_table() {
        let tb = Timebase::default();
        let table = build_walk_table(&synthetic(|_| 0), &tb, &WalkParams::default()).unwrap();
        assert!(table.dtoa_shift.iter().all(|s| *s <= 2.0));
    }

    #[test]
    fn missing_stable_region() {
        let set = ClusterSet {
            events: vec![PixelEvent::new(0, 0, 0, 3), PixelEvent::new(1, 0, 5, 2)],
            offsets: vec![0, 2],
        };
        assert!(build_walk_table(&set, &Timebase::default(), &WalkParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn table_invariants(delays in prop::collection::vec(0u64..100, 80)) {
            let tb = Timebase::default();
            let set = synthetic(|tick| delays[tick as usize - 1]);
            let table = build_walk_table(&set, &tb, &WalkParams::default()).unwrap();
            prop_assert!(table.dtoa_shift.iter().all(|s| *s >= 0.0));
            prop_assert!(table.dtoa_shift.windows(2).all(|w| w[0] >= w[1] - 1e-9));
            prop_assert_eq!(table.shift(1500.0), 0.0);
        }
    }
}
