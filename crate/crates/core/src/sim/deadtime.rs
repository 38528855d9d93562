//! Non-paralyzable per-pixel dead time.

/// Indices of the hits that survive: on each pixel, a hit arriving less than
/// `dead_time` after the last *accepted* hit is dropped. `items` must be
/// sorted by time; `key` yields `(x, y, t)`.
pub fn apply_dead_time<T>(
    items: &[T],
    key: impl Fn(&T) -> (u16, u16, f64),
    dead_time: f64,
    sensor_size: (u16, u16),
) -> Vec<usize> {
    let w = sensor_size.0 as usize;
    let mut last = vec![f64::NEG_INFINITY; w * sensor_size.1 as usize];
    let mut kept = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let (x, y, t) = key(item);
        let slot = &mut last[y as usize * w + x as usize];
        if t - *slot >= dead_time {
            *slot = t;
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn key(h: &(u16, u16, f64)) -> (u16, u16, f64) {
        *h
    }

    #[test]
    fn window_arithmetic() {
        let hits = [(0, 0, 0.0), (0, 0, 500.0), (0, 0, 1500.0)];
        assert_eq!(apply_dead_time(&hits, key, 1000.0, (4, 4)), vec![0, 2]);
    }

    #[test]
    fn dead_time_is_per_pixel() {
        let hits = [(0, 0, 10.0), (1, 0, 10.0), (0, 1, 10.0)];
        assert_eq!(apply_dead_time(&hits, key, 1000.0, (4, 4)), vec![0, 1, 2]);
    }

    #[test]
    fn non_paralyzable_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gap = Exp::new(1e6 * 1e-9).unwrap();
        let mut t = 0.0;
        let mut hits = vec![];
        while t < 1e9 {
            t += gap.sample(&mut rng);
            hits.push((3, 3, t));
        }
        let kept = apply_dead_time(&hits, key, 1000.0, (8, 8)).len() as f64;
        let expected = 1e6 / (1.0 + 1e6 * 1e-6);
        assert!((kept - expected).abs() < 0.02 * expected, "{kept}");
    }
}
