//! File formats: PXE1 event files, run manifests, result tables and
//! summaries.

pub mod events;
pub mod manifest;
pub mod report;
pub mod tables;

pub use events::{read_events, write_events, EventFileHeader, EventReader, EventWriter};
pub use manifest::{AnalysisSpec, RunEntry, RunManifest};
pub use tables::{
    read_csv, read_histogram, read_json, read_photons, read_truth, read_walk_table, write_csv, write_histogram, write_json, write_photons, write_truth, write_walk_table,
};
