//! Time ordering and hot-pixel masking.

use std::collections::HashSet;

use super::event::PixelEvent;

/// Stable sort by TOA: hits with equal timestamps keep their input order.
pub fn time_order(events: &mut [PixelEvent]) {
    if events.windows(2).all(|w| w[0].toa <= w[1].toa) {
        return;
    }
    events.sort_by_key(|e| e.toa);
}

/// Permutation that [`time_order`] would apply, for carrying side arrays along.
pub fn time_order_permutation(events: &[PixelEvent]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..events.len()).collect();
    idx.sort_by_key(|&i| events[i].toa);
    idx
}

/// Set of masked pixels with O(1) lookup.
#[derive(Debug, Clone, Default)]
pub struct PixelMask {
    width: u16,
    bits: Vec<bool>,
    pixels: HashSet<(u16, u16)>,
}

impl PixelMask {
    pub fn new(sensor_size: (u16, u16), pixels: impl IntoIterator<Item = (u16, u16)>) -> Self {
        let (w, h) = sensor_size;
        let mut bits = vec![false; w as usize * h as usize];
        let mut set = HashSet::new();
        for (x, y) in pixels {
            if x < w && y < h {
                bits[y as usize * w as usize + x as usize] = true;
            }
            set.insert((x, y));
        }
        Self {
            width: w,
            bits,
            pixels: set,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        let i = y as usize * self.width as usize + x as usize;
        match self.bits.get(i) {
            Some(b) if x < self.width => *b,
            _ => self.pixels.contains(&(x, y)),
        }
    }

    pub fn pixels(&self) -> Vec<(u16, u16)> {
        let mut v: Vec<_> = self.pixels.iter().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Drops hits on masked pixels, preserving the order of the rest.
pub fn mask_hot_pixels(events: &mut Vec<PixelEvent>, mask: &PixelMask) {
    if mask.is_empty() {
        return;
    }
    events.retain(|e| !mask.contains(e.x, e.y));
}

/// Pixels whose hit count exceeds `factor` times the median count over
/// pixels that fired at all.
pub fn find_hot_pixels(events: &[PixelEvent], sensor_size: (u16, u16), factor: f64) -> Vec<(u16, u16)> {
    let (w, h) = sensor_size;
    let mut counts = vec![0u64; w as usize * h as usize];
    for e in events {
        if e.x < w && e.y < h {
            counts[e.y as usize * w as usize + e.x as usize] += 1;
        }
    }
    let mut fired: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if fired.is_empty() {
        return vec![];
    }
    fired.sort_unstable();
    let median = fired[fired.len() / 2] as f64;
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c as f64 > factor * median.max(1.0))
        .map(|(i, _)| ((i % w as usize) as u16, (i / w as usize) as u16))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64) -> PixelEvent {
        PixelEvent::new(0, 0, t, 1)
    }

    #[test]
    fn sorts() {
        let mut v = vec![ev(30), ev(10), ev(20)];
        time_order(&mut v);
        assert_eq!(v, vec![ev(10), ev(20), ev(30)]);
        let before = v.clone();
        time_order(&mut v);
        assert_eq!(v, before);
    }

    #[test]
    fn stable_for_equal_toa() {
        let mut v = vec![PixelEvent::new(1, 0, 5, 1), PixelEvent::new(2, 0, 3, 1), PixelEvent::new(3, 0, 5, 1)];
        time_order(&mut v);
        assert_eq!(v.iter().map(|e| e.x).collect::<Vec<_>>(), vec![2, 1, 3]);
    }

    #[test]
    fn masking() {
        let mut v = vec![
            PixelEvent::new(5, 5, 1, 1),
            PixelEvent::new(1, 5, 2, 1),
            PixelEvent::new(5, 5, 3, 1),
            PixelEvent::new(5, 1, 4, 1),
            PixelEvent::new(5, 5, 5, 1),
        ];
        let empty = PixelMask::new((16, 16), []);
        let mut same = v.clone();
        mask_hot_pixels(&mut same, &empty);
        assert_eq!(same, v);
        mask_hot_pixels(&mut v, &PixelMask::new((16, 16), [(5, 5)]));
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].toa, 2);
    }

    #[test]
    fn hot_pixel_search() {
        let mut v = vec![];
        for x in 0..10 {
            v.push(PixelEvent::new(x, 0, 0, 1));
        }
        for t in 0..100 {
            v.push(PixelEvent::new(3, 3, t, 1));
        }
        assert_eq!(find_hot_pixels(&v, (16, 16), 10.0), vec![(3, 3)]);
    }
}
