//! Comma-separated tables and JSON summaries. Floats are written in
//! shortest round-trip form, so re-reading reproduces values exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::hist::Histogram;
use crate::pipeline::{Photon, WalkTable};
use crate::sim::{Arm, TruthRecord};

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, IoError> {
    csv::Writer::from_path(path).map_err(|e| IoError::parse(path, e))
}

/// Error for a malformed CSV row, naming the byte offset when known.
fn csv_error(path: &Path, e: csv::Error) -> IoError {
    let offset = e.position().map(|p| p.byte());
    match offset {
        Some(offset) => IoError::InvalidRecord {
            path: path.to_path_buf(),
            offset,
            reason: e.to_string(),
        },
        None => IoError::parse(path, e),
    }
}

/// Writes `rows` with a header line taken from the row type.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| IoError::parse(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IoError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::parse(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| IoError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| IoError::parse(path, e))
}

/// One line of a photon list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonRow {
    pub arm: Arm,
    pub cx: f64,
    pub cy: f64,
    pub toa_raw: f64,
    pub toa_corr: f64,
    pub tot_max: f64,
    pub tot_sum: f64,
    pub n_pixels: u32,
}

impl PhotonRow {
    pub fn new(arm: Arm, p: &Photon) -> Self {
        Self {
            arm,
            cx: p.cx,
            cy: p.cy,
            toa_raw: p.toa_raw,
            toa_corr: p.toa_corr,
            tot_max: p.tot_max,
            tot_sum: p.tot_sum,
            n_pixels: p.n_pixels,
        }
    }

    pub fn photon(&self) -> Photon {
        Photon {
            cx: self.cx,
            cy: self.cy,
            toa_raw: self.toa_raw,
            toa_corr: self.toa_corr,
            tot_max: self.tot_max,
            tot_sum: self.tot_sum,
            n_pixels: self.n_pixels,
        }
    }
}

/// Photons of both regions; arm A rows first, each list in stored order.
pub fn write_photons(path: impl AsRef<Path>, photons: &[Vec<Photon>; 2]) -> Result<(), IoError> {
    let rows = photons[0].iter().map(|p| PhotonRow::new(Arm::A, p)).chain(photons[1].iter().map(|p| PhotonRow::new(Arm::B, p)));
    write_csv(path, rows)
}

pub fn read_photons(path: impl AsRef<Path>) -> Result<[Vec<Photon>; 2], IoError> {
    let rows: Vec<PhotonRow> = read_csv(path)?;
    let mut out = [Vec::new(), Vec::new()];
    for r in rows {
        out[(r.arm == Arm::B) as usize].push(r.photon());
    }
    Ok(out)
}

/// One bin of a `dt` histogram. Every row repeats the bin width so the
/// binning is recovered exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub dt_lo: f64,
    pub bin_width: f64,
    pub count: f64,
}

pub fn write_histogram(path: impl AsRef<Path>, h: &Histogram) -> Result<(), IoError> {
    write_csv(
        path,
        h.counts.iter().enumerate().map(|(i, &count)| HistogramRow {
            dt_lo: h.start + i as f64 * h.bin_width,
            bin_width: h.bin_width,
            count,
        }),
    )
}

pub fn read_histogram(path: impl AsRef<Path>) -> Result<Histogram, IoError> {
    let path = path.as_ref();
    let rows: Vec<HistogramRow> = read_csv(path)?;
    let first = rows.first().ok_or_else(|| IoError::parse(path, "histogram has no bins"))?;
    if !(first.bin_width > 0.0) || rows.iter().any(|r| r.bin_width != first.bin_width) {
        return Err(IoError::parse(path, "bin widths must be positive and equal"));
    }
    Ok(Histogram {
        start: first.dt_lo,
        bin_width: first.bin_width,
        counts: rows.iter().map(|r| r.count).collect(),
    })
}

/// One TOT bin of a walk table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkRow {
    pub tot_lo: f64,
    pub tot_hi: f64,
    pub dtoa_shift: f64,
    pub entries: u64,
    pub flagged: bool,
}

/// The last row's `tot_hi` is the reference TOT.
pub fn write_walk_table(path: impl AsRef<Path>, t: &WalkTable) -> Result<(), IoError> {
    write_csv(
        path,
        (0..t.len()).map(|i| WalkRow {
            tot_lo: t.tot_bin_edges[i],
            tot_hi: t.tot_bin_edges[i + 1],
            dtoa_shift: t.dtoa_shift[i],
            entries: t.entries[i],
            flagged: t.flagged[i],
        }),
    )
}

pub fn read_walk_table(path: impl AsRef<Path>) -> Result<WalkTable, IoError> {
    let path = path.as_ref();
    let rows: Vec<WalkRow> = read_csv(path)?;
    if rows.is_empty() {
        return Err(IoError::parse(path, "walk table has no bins"));
    }
    if rows.windows(2).any(|w| w[0].tot_hi != w[1].tot_lo) || rows.iter().any(|r| !(r.tot_hi > r.tot_lo)) {
        return Err(IoError::parse(path, "walk table bins must be contiguous and ascending"));
    }
    let mut edges: Vec<f64> = rows.iter().map(|r| r.tot_lo).collect();
    edges.push(rows[rows.len() - 1].tot_hi);
    Ok(WalkTable {
        reference_tot: edges[edges.len() - 1],
        tot_bin_edges: edges,
        dtoa_shift: rows.iter().map(|r| r.dtoa_shift).collect(),
        entries: rows.iter().map(|r| r.entries).collect(),
        flagged: rows.iter().map(|r| r.flagged).collect(),
    })
}

/// Flat form of [`TruthRecord`]; empty cells mean "none".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TruthRow {
    pair_id: Option<u64>,
    emission_time: f64,
    arm: Option<Arm>,
    passed_polarizer: bool,
    detected: bool,
    true_x: f64,
    true_y: f64,
    is_dark: bool,
}

impl From<&TruthRecord> for TruthRow {
    fn from(t: &TruthRecord) -> Self {
        Self {
            pair_id: t.pair_id,
            emission_time: t.emission_time,
            arm: t.arm,
            passed_polarizer: t.passed_polarizer,
            detected: t.detected,
            true_x: t.true_x,
            true_y: t.true_y,
            is_dark: t.is_dark,
        }
    }
}

impl From<TruthRow> for TruthRecord {
    fn from(t: TruthRow) -> Self {
        Self {
            pair_id: t.pair_id,
            emission_time: t.emission_time,
            arm: t.arm,
            passed_polarizer: t.passed_polarizer,
            detected: t.detected,
            true_x: t.true_x,
            true_y: t.true_y,
            is_dark: t.is_dark,
        }
    }
}

/// Truth sidecar of a simulated run.
pub fn write_truth(path: impl AsRef<Path>, truth: &[TruthRecord]) -> Result<(), IoError> {
    write_csv(path, truth.iter().map(TruthRow::from))
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>, IoError> {
    Ok(read_csv::<TruthRow>(path)?.into_iter().map(TruthRecord::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn photon() -> impl Strategy<Value = Photon> {
        (any::<f64>(), -1e3..1e3f64, 0.0..1e12f64, -1e-3..1e12f64, 0.0..2e4f64, 0.0..1e6f64, 1u32..100).prop_map(|(cx, cy, toa_raw, toa_corr, tot_max, tot_sum, n_pixels)| Photon {
            cx: if cx.is_finite() { cx } else { 0.5 },
            cy,
            toa_raw,
            toa_corr,
            tot_max,
            tot_sum,
            n_pixels,
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn photons_round_trip(a in prop::collection::vec(photon(), 0..50), b in prop::collection::vec(photon(), 0..50)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("p.csv");
            let ph = [a, b];
            write_photons(&p, &ph).unwrap();
            prop_assert_eq!(read_photons(&p).unwrap(), ph);
        }

        #[test]
        fn histogram_round_trip(start in -1e3..0.0f64, w in 1e-3..10.0f64, counts in prop::collection::vec(0.0..1e6f64, 1..100)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("h.csv");
            let h = Histogram { start, bin_width: w, counts };
            write_histogram(&p, &h).unwrap();
            prop_assert_eq!(read_histogram(&p).unwrap(), h);
        }

        #[test]
        fn walk_table_round_trip(shifts in prop::collection::vec(0.0..200.0f64, 1..80), entries in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("w.csv");
            let n = shifts.len();
            let mut t = WalkTable::from_shifts(25.0, shifts, 25.0 * n as f64);
            t.entries[0] = entries;
            t.flagged[n - 1] = true;
            write_walk_table(&p, &t).unwrap();
            prop_assert_eq!(read_walk_table(&p).unwrap(), t);
        }
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = vec![
            TruthRecord {
                pair_id: Some(7),
                emission_time: 1.0 / 3.0,
                arm: Some(Arm::B),
                passed_polarizer: true,
                detected: false,
                true_x: 186.25,
                true_y: 0.1,
                is_dark: false,
            },
            TruthRecord {
                pair_id: None,
                emission_time: 5e8,
                arm: None,
                passed_polarizer: false,
                detected: true,
                true_x: 3.0,
                true_y: 4.0,
                is_dark: true,
            },
        ];
        write_truth(&p, &t).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("pair_id,emission_time,arm,"));
        assert_eq!(read_truth(&p).unwrap(), t);
    }

    #[test]
    fn malformed_rows_name_an_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        std::fs::write(&p, "dt_lo,bin_width,count\n0,1,2\n1,1,oops\n").unwrap();
        match read_histogram(&p) {
            Err(IoError::InvalidRecord { offset, .. }) => assert_eq!(offset, 28),
            other => panic!("{other:?}"),
        }
    }
}
