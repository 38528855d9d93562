//! Result tables: coincidence quads with correlations, sine parameters of
//! polarization scans, and the subarea S-matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tables::write_csv;
use crate::bell::{assemble_quad, RunRecord, scan_table, ScanCurve, SpatialSMatrix, SubareaGrid, Uniformity};
use crate::error::{BellError, IoError};
use crate::quantum::SValueReport;

/// One CHSH setting: its four counts and correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub n_vv: f64,
    pub n_hv: f64,
    pub n_vh: f64,
    pub n_hh: f64,
    pub e: f64,
    pub sigma_e: f64,
}

/// Rows for the four settings of `report`, in its term order.
pub fn correlation_rows(runs: &[RunRecord], report: &SValueReport) -> Result<Vec<CorrelationRow>, BellError> {
    report
        .e_terms
        .iter()
        .map(|t| {
            let q = assemble_quad(runs, &t.setting)?;
            Ok(CorrelationRow {
                alpha_deg: t.setting.alpha.to_degrees(),
                beta_deg: t.setting.beta.to_degrees(),
                n_vv: q.n_vv,
                n_hv: q.n_hv,
                n_vh: q.n_vh,
                n_hh: q.n_hh,
                e: t.e,
                sigma_e: t.sigma_e,
            })
        })
        .collect()
}

/// Sine parameters of one scan and their errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub beta_deg: f64,
    pub amplitude: f64,
    pub sigma_amplitude: f64,
    pub period_deg: f64,
    pub sigma_period_deg: f64,
    pub phase_deg: f64,
    pub sigma_phase_deg: f64,
    pub offset: f64,
    pub sigma_offset: f64,
}

pub fn scan_rows(curves: &[ScanCurve]) -> Vec<ScanRow> {
    scan_table(curves)
        .into_iter()
        .map(|(beta_deg, p, s)| ScanRow {
            beta_deg,
            amplitude: p.amplitude,
            sigma_amplitude: s.amplitude,
            period_deg: p.period,
            sigma_period_deg: s.period,
            phase_deg: p.phase,
            sigma_phase_deg: s.phase,
            offset: p.offset,
            sigma_offset: s.offset,
        })
        .collect()
}

/// One cell pair of the S-matrix; positions are `row x col` within each
/// grid, `0 x 0` at the top left. Flagged cells leave `s` empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SMatrixRow {
    pub a_row: usize,
    pub a_col: usize,
    pub b_row: usize,
    pub b_col: usize,
    pub s: Option<f64>,
    pub sigma_s: Option<f64>,
    pub min_coincidences: f64,
    pub flag: Option<String>,
}

pub fn s_matrix_rows(m: &SpatialSMatrix, grids: &[SubareaGrid; 2]) -> Vec<SMatrixRow> {
    m.cells
        .iter()
        .map(|c| {
            let (na, nb) = (grids[0].nx as usize, grids[1].nx as usize);
            SMatrixRow {
                a_row: c.cell_a / na,
                a_col: c.cell_a % na,
                b_row: c.cell_b / nb,
                b_col: c.cell_b % nb,
                s: c.report.as_ref().map(|r| r.s),
                sigma_s: c.report.as_ref().map(|r| r.sigma_s),
                min_coincidences: c.min_coincidences,
                flag: c.flag.clone(),
            }
        })
        .collect()
}

/// Machine-readable companion of the tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportSummary {
    pub chsh: Option<SValueReport>,
    pub correlations: Vec<CorrelationRow>,
    pub scans: Vec<ScanRow>,
    pub spatial: Option<SpatialSMatrix>,
    pub uniformity: Option<Uniformity>,
}

/// File names used by [`write_report`].
pub const CORRELATION_TABLE: &str = "correlations.csv";
pub const SCAN_TABLE: &str = "scans.csv";
pub const S_MATRIX_TABLE: &str = "s_matrix.csv";
pub const SUMMARY: &str = "summary.json";

/// Writes the non-empty tables and the summary into `dir`; returns the
/// files written.
pub fn write_report(dir: &Path, summary: &ReportSummary, grids: Option<&[SubareaGrid; 2]>) -> Result<Vec<std::path::PathBuf>, IoError> {
    let mut written = vec![];
    if !summary.correlations.is_empty() {
        let p = dir.join(CORRELATION_TABLE);
        write_csv(&p, &summary.correlations)?;
        written.push(p);
    }
    if !summary.scans.is_empty() {
        let p = dir.join(SCAN_TABLE);
        write_csv(&p, &summary.scans)?;
        written.push(p);
    }
    if let (Some(m), Some(g)) = (&summary.spatial, grids) {
        let p = dir.join(S_MATRIX_TABLE);
        write_csv(&p, s_matrix_rows(m, g))?;
        written.push(p);
    }
    let p = dir.join(SUMMARY);
    super::tables::write_json(&p, summary)?;
    written.push(p);
    Ok(written)
}
