//! Coincidence counts sampled directly from the count model, without a camera.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::fit::state::StateCurve;
use crate::quantum::{expected_counts, CountModel, PolarizerSetting, TwoPhotonState};

/// One Poisson draw of `N0 P_VV + Nd`.
pub fn sample_count<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng)
    } else {
        0.0
    }
}

/// Poisson-noised curves over `alphas x betas` (radians).
pub fn sample_curves(
    state: &TwoPhotonState,
    model: &CountModel,
    alphas: &[f64],
    betas: &[f64],
    seed: u64,
) -> Vec<StateCurve> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    alphas
        .iter()
        .map(|&alpha| StateCurve {
            alpha,
            points: betas
                .iter()
                .map(|&beta| {
                    let mean = expected_counts(state, model, &PolarizerSetting::new(alpha, beta));
                    (beta, sample_count(mean, &mut rng))
                })
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_samples() {
        let s = TwoPhotonState::PHI_PLUS;
        let m = CountModel { n0: 1000.0, nd: 0.0 };
        let betas: Vec<f64> = vec![0.0; 400];
        let c = sample_curves(&s, &m, &[0.0], &betas, 4);
        let mean = c[0].points.iter().map(|p| p.1).sum::<f64>() / 400.0;
        assert!((mean - 500.0).abs() < 4.0 * (500.0f64 / 400.0).sqrt());
        let zero = sample_curves(&s, &CountModel { n0: 0.0, nd: 0.0 }, &[0.0], &[0.0], 1);
        assert_eq!(zero[0].points[0].1, 0.0);
    }
}
