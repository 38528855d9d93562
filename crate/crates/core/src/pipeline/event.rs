//! Raw pixel hits and the clock granularity they are recorded with.

use serde::{Deserialize, Serialize};

/// One time-stamped pixel hit. Times are integer clock ticks; see [`Timebase`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelEvent {
    pub toa: u64,
    pub x: u16,
    pub y: u16,
    pub tot: u16,
}

impl PixelEvent {
    pub fn new(x: u16, y: u16, toa: u64, tot: u16) -> Self {
        Self { toa, x, y, tot }
    }
}

/// Tick sizes of the TOA and TOT counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timebase {
    pub toa_tick_fs: u64,
    pub tot_tick_ns: u16,
}

impl Default for Timebase {
    fn default() -> Self {
        Self {
            toa_tick_fs: 1_562_500,
            tot_tick_ns: 25,
        }
    }
}

impl Timebase {
    pub fn toa_tick_ns(&self) -> f64 {
        self.toa_tick_fs as f64 * 1e-6
    }

    pub fn toa_ns(&self, ticks: u64) -> f64 {
        ticks as f64 * self.toa_tick_ns()
    }

    pub fn tot_ns(&self, ticks: u16) -> f64 {
        ticks as f64 * self.tot_tick_ns as f64
    }

    /// Whole TOA ticks in `ns`, rounded down.
    pub fn toa_ticks_floor(&self, ns: f64) -> u64 {
        (ns * 1e6 / self.toa_tick_fs as f64).floor().max(0.0) as u64
    }

    /// TOT ticks for a pulse of `ns`, rounded up, at least one tick.
    pub fn tot_ticks_ceil(&self, ns: f64) -> u16 {
        let t = (ns / self.tot_tick_ns as f64).ceil();
        t.clamp(1.0, u16::MAX as f64) as u16
    }
}

/// Adapter for camera-native raw formats. Implementors yield hits in
/// readout order, converted to this crate's tick conventions.
pub trait EventSource {
    type Error: std::error::Error + Send + Sync + 'static;

    fn timebase(&self) -> Timebase;

    fn sensor_size(&self) -> (u16, u16);

    fn next_event(&mut self) -> Option<Result<PixelEvent, Self::Error>>;
}
