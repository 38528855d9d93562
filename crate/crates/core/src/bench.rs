//! Throughput harness for [`process`](crate::pipeline::process).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, SimError};
use crate::pipeline::{process, PixelEvent, ProcessConfig, StageTimes, Timebase};
use crate::quantum::PolarizerSetting;
use crate::sim::{generate_run, DetectorConfig, SourceConfig, TruthLevel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub n_events: usize,
    /// Best wall time over the repeats, s.
    pub seconds: f64,
    pub events_per_second: f64,
    /// Stage times of the best repeat.
    pub times: StageTimes,
    pub threads: usize,
}

/// A simulated run of at least `n_events` hits in readout order, with the
/// default detector and hot pixels included.
pub fn bench_events(n_events: usize, seed: u64) -> Result<(Vec<PixelEvent>, Timebase, Vec<(u16, u16)>), SimError> {
    let det = DetectorConfig {
        truth: TruthLevel::None,
        ..DetectorConfig::default()
    };
    let setting = PolarizerSetting::from_degrees(0.0, 0.0);
    let mut duration = (n_events as f64 / 3e5).max(1e-3);
    loop {
        let src = SourceConfig {
            duration,
            seed,
            ..SourceConfig::default()
        };
        let run = generate_run(&src, &det, &setting)?;
        if run.events.len() >= n_events {
            let mut events = run.events;
            events.truncate(n_events);
            return Ok((events, run.timebase, det.hot_pixels()));
        }
        duration *= 1.5 * n_events as f64 / run.events.len().max(1) as f64;
    }
}

/// Times the full reconstruction of `events` `repeats` times, building the
/// walk table from the data, and keeps the fastest pass.
pub fn run_benchmark(events: &[PixelEvent], tb: &Timebase, cfg: &ProcessConfig, repeats: usize) -> Result<BenchResult, PipelineError> {
    let mut best: Option<(f64, StageTimes)> = None;
    for _ in 0..repeats.max(1) {
        let input = events.to_vec();
        let clock = Instant::now();
        let out = process(input, tb, cfg, None)?;
        let secs = clock.elapsed().as_secs_f64();
        if best.is_none_or(|(b, _)| secs < b) {
            best = Some((secs, out.times));
        }
    }
    let (seconds, times) = best.expect("at least one repeat");
    Ok(BenchResult {
        n_events: events.len(),
        seconds,
        events_per_second: events.len() as f64 / seconds,
        times,
        threads: rayon::current_num_threads(),
    })
}
