//! Fixed-width 1D histogram.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Lower edge of the first bin.
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn new(start: f64, bin_width: f64, n_bins: usize) -> Self {
        assert!(bin_width > 0.0, "bin width must be positive");
        Self {
            start,
            bin_width,
            counts: vec![0.0; n_bins],
        }
    }

    /// Bins covering `[-half_range, half_range)` with the given width.
    pub fn symmetric(half_range: f64, bin_width: f64) -> Self {
        let n = (2.0 * half_range / bin_width).round().max(1.0) as usize;
        Self::new(-(n as f64) * bin_width / 2.0, bin_width, n)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.start + self.bin_width * self.counts.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.start + (i as f64 + 0.5) * self.bin_width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let k = ((x - self.start) / self.bin_width).floor();
        if k >= 0.0 && (k as usize) < self.counts.len() {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Adds `x` and reports whether it fell inside the range.
    pub fn fill(&mut self, x: f64) -> bool {
        match self.bin_of(x) {
            Some(k) => {
                self.counts[k] += 1.0;
                true
            }
            None => false,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Adds another histogram with identical binning.
    pub fn add(&mut self, other: &Histogram) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_layout() {
        let h = Histogram::symmetric(500.0, 1.5625);
        assert_eq!(h.len(), 640);
        assert_eq!(h.start, -500.0);
        assert_eq!(h.bin_of(0.0), Some(320));
        assert_eq!(h.bin_of(-0.1), Some(319));
        assert_eq!(h.bin_of(500.0), None);
        assert_eq!(h.bin_of(-500.0), Some(0));
    }

    #[test]
    fn fill_and_total() {
        let mut h = Histogram::new(0.0, 1.0, 3);
        assert!(h.fill(0.5));
        assert!(h.fill(2.9));
        assert!(!h.fill(3.0));
        assert_eq!(h.counts, vec![1.0, 0.0, 1.0]);
        assert_eq!(h.total(), 2.0);
        assert_eq!(h.center(1), 1.5);
    }
}
