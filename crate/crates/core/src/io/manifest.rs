//! TOML run manifests. Angles are stored in degrees and converted once on
//! load; relative paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bell::{RunRecord, SubareaGrid};
use crate::error::{BellError, IoError};
use crate::geometry::PixelBox;
use crate::pipeline::CoincidenceParams;
use crate::quantum::{ChshAngles, PolarizerSetting};

/// Settings shared by every run of a manifest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Analysis boxes of arm A and arm B.
    pub regions: Option<[PixelBox; 2]>,
    /// Subarea grid `[nx, ny]` applied to both regions.
    pub grid: Option<[u16; 2]>,
    /// CHSH angles `[alpha, alpha', beta, beta']`, degrees.
    pub chsh_deg: Option<[f64; 4]>,
    /// Fixed `beta` values of polarization scans, degrees.
    pub scan_betas_deg: Option<Vec<f64>>,
    pub coincidence: Option<CoincidenceParams>,
    /// Pixels to mask before clustering, `[x, y]`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hot_pixels: Vec<[u16; 2]>,
}

impl AnalysisSpec {
    pub fn chsh_angles(&self) -> ChshAngles {
        match self.chsh_deg {
            Some([a, ap, b, bp]) => ChshAngles::from_degrees(a, ap, b, bp),
            None => ChshAngles::default(),
        }
    }

    /// The grid over each region, when both are given.
    pub fn grids(&self) -> Result<Option<[SubareaGrid; 2]>, BellError> {
        match (self.regions, self.grid) {
            (Some([ra, rb]), Some([nx, ny])) => Ok(Some([SubareaGrid::new(ra, nx, ny)?, SubareaGrid::new(rb, nx, ny)?])),
            _ => Ok(None),
        }
    }
}

/// One polarizer setting and the files or counts that describe it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub name: String,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    /// Live time, s.
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// PXE1 event file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    /// Truth sidecar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Photon list written by `process`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photons: Option<PathBuf>,
    /// `dt` histogram written by `process`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<PathBuf>,
    /// Coincidence count, measured or fitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coincidences: Option<f64>,
    /// Error of `coincidences`; Poisson when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Photons in the A and B regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singles: Option<[f64; 2]>,
}

impl RunEntry {
    pub fn new(name: impl Into<String>, alpha_deg: f64, beta_deg: f64, duration_s: f64) -> Self {
        Self {
            name: name.into(),
            alpha_deg,
            beta_deg,
            duration_s,
            seed: None,
            events: None,
            truth: None,
            photons: None,
            histogram: None,
            coincidences: None,
            sigma: None,
            singles: None,
        }
    }

    pub fn setting(&self) -> PolarizerSetting {
        PolarizerSetting::from_degrees(self.alpha_deg, self.beta_deg)
    }

    /// The count as a record, when the run has one.
    pub fn record(&self) -> Option<RunRecord> {
        let n = self.coincidences?;
        let mut r = RunRecord::from_count(self.setting(), self.duration_s, n);
        if let Some(s) = self.sigma {
            r.sigma = s;
        }
        r.singles = self.singles;
        Some(r)
    }

    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        [&self.events, &self.truth, &self.photons, &self.histogram].into_iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default, rename = "run")]
    pub runs: Vec<RunEntry>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunManifest {
    /// Parses, checks angles and durations, and checks that every named
    /// file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        let mut m: RunManifest = toml::from_str(&text).map_err(|e| {
            let reason = match e.span() {
                Some(span) => format!("at byte {}: {}", span.start, e.message()),
                None => e.message().to_string(),
            };
            IoError::parse(path, reason)
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate(path)?;
        Ok(m)
    }

    fn validate(&self, path: &Path) -> Result<(), IoError> {
        let angles = self.analysis.chsh_deg.iter().flatten().chain(self.analysis.scan_betas_deg.iter().flatten());
        if angles.into_iter().any(|a| !a.is_finite()) {
            return Err(IoError::parse(path, "analysis angles must be finite"));
        }
        for r in &self.runs {
            if !r.alpha_deg.is_finite() || !r.beta_deg.is_finite() {
                return Err(IoError::parse(path, format!("run {}: angles must be finite", r.name)));
            }
            if !(r.duration_s > 0.0) || !r.duration_s.is_finite() {
                return Err(IoError::parse(path, format!("run {}: duration_s must be positive", r.name)));
            }
            if r.coincidences.is_some_and(|n| !(n >= 0.0) || !n.is_finite()) {
                return Err(IoError::parse(path, format!("run {}: coincidences must be finite and non-negative", r.name)));
            }
            for p in r.paths() {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(IoError::parse(path, format!("run {}: {} does not exist", r.name, full.display())));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        let path = path.as_ref();
        let text = self.to_toml().map_err(|e| IoError::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| IoError::io(path, e))
    }

    /// Records of every run that carries a count.
    pub fn records(&self) -> Vec<RunRecord> {
        self.runs.iter().filter_map(RunEntry::record).collect()
    }

    pub fn coincidence_params(&self) -> CoincidenceParams {
        self.analysis.coincidence.unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("r0.pxe1"), b"").unwrap();
        let mut run = RunEntry::new("r0", 0.0, 22.5, 1.5);
        run.seed = Some(3);
        run.events = Some("r0.pxe1".into());
        run.coincidences = Some(17656.0);
        let m = RunManifest {
            analysis: AnalysisSpec {
                regions: Some([PixelBox::new(55, 113, 30, 30), PixelBox::new(165, 107, 42, 42)]),
                grid: Some([3, 3]),
                chsh_deg: Some([0.0, 45.0, 22.5, 67.5]),
                ..AnalysisSpec::default()
            },
            runs: vec![run],
            base_dir: PathBuf::new(),
        };
        let p = dir.path().join("m.toml");
        m.save(&p).unwrap();
        let back = RunManifest::load(&p).unwrap();
        assert_eq!(back.base_dir, dir.path());
        assert_eq!(RunManifest { base_dir: PathBuf::new(), ..back.clone() }, m);
        assert_eq!(back.resolve(Path::new("r0.pxe1")), dir.path().join("r0.pxe1"));
        let rec = back.records()[0];
        assert!((rec.setting.beta - 22.5f64.to_radians()).abs() < 1e-15);
        assert_eq!(rec.sigma, 17656f64.sqrt());
        assert_eq!(back.analysis.grids().unwrap().unwrap()[0].len(), 9);
    }

    #[test]
    fn load_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        let run = |extra: &str| format!("[[run]]\nname = \"x\"\nalpha_deg = 0.0\nbeta_deg = 0.0\nduration_s = 1.0\n{extra}");
        std::fs::write(&p, run("events = \"missing.pxe1\"\n")).unwrap();
        assert!(matches!(RunManifest::load(&p), Err(IoError::Parse { reason, .. }) if reason.contains("does not exist")));
        std::fs::write(&p, run("").replace("alpha_deg = 0.0", "alpha_deg = nan")).unwrap();
        assert!(RunManifest::load(&p).is_err());
        std::fs::write(&p, run("colour = 1\n")).unwrap();
        assert!(matches!(RunManifest::load(&p), Err(IoError::Parse { reason, .. }) if reason.contains("byte")));
        std::fs::write(&p, run("")).unwrap();
        assert_eq!(RunManifest::load(&p).unwrap().runs.len(), 1);
    }
}
