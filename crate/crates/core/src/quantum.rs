//! Closed-form predictions for a polarization-entangled photon pair.
//!
//! The source state is a real-angle superposition of the two Bell states
//! `|phi+> = (|HH> + |VV>)/sqrt(2)` and `|phi-> = (|HH> - |VV>)/sqrt(2)`:
//!
//! ```text
//! |psi> = cos(theta) |phi+> + exp(i delta) sin(theta) |phi->
//! ```
//!
//! Each photon passes a linear polarizer (angle `alpha` for arm 1, `beta` for
//! arm 2) and the camera registers the transmitted (`V`-projected) light only.
//! All angles are radians.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::QuantumError;

/// Pure two-photon state parameterized by mixing angle and relative phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonState {
    pub theta: f64,
    pub delta: f64,
}

impl TwoPhotonState {
    pub const PHI_PLUS: TwoPhotonState = TwoPhotonState {
        theta: 0.0,
        delta: 0.0,
    };

    pub fn new(theta: f64, delta: f64) -> Self {
        Self { theta, delta }
    }

    /// `sin(2 theta) cos(delta)`: the only combination of the two parameters
    /// that enters the `cos 2alpha`/`cos 2beta` terms of the coincidence rate.
    pub fn coherence(&self) -> f64 {
        (2.0 * self.theta).sin() * self.delta.cos()
    }

    /// `cos(2 theta)`: weight of the `sin 2alpha sin 2beta` term.
    pub fn visibility_diagonal(&self) -> f64 {
        (2.0 * self.theta).cos()
    }
}

/// Polarizer angles for the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizerSetting {
    pub alpha: f64,
    pub beta: f64,
}

impl PolarizerSetting {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn from_degrees(alpha_deg: f64, beta_deg: f64) -> Self {
        Self::new(alpha_deg.to_radians(), beta_deg.to_radians())
    }

    /// The four settings whose transmitted counts make up one projector quad:
    /// `(VV, VH, HV, HH)` = `(a,b)`, `(a,b+90)`, `(a+90,b)`, `(a+90,b+90)`.
    pub fn quad(&self) -> [PolarizerSetting; 4] {
        let (a, b) = (self.alpha, self.beta);
        [
            Self::new(a, b),
            Self::new(a, b + FRAC_PI_2),
            Self::new(a + FRAC_PI_2, b),
            Self::new(a + FRAC_PI_2, b + FRAC_PI_2),
        ]
    }
}

/// Expected pair and background counts feeding the coincidence model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    pub n0: f64,
    pub nd: f64,
}

/// Coincidence counts for the four projector outcomes at one `(alpha, beta)`.
///
/// Counts are real-valued because camera coincidences come from fitted peak
/// areas rather than integer tallies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountsQuad {
    pub n_vv: f64,
    pub n_hv: f64,
    pub n_vh: f64,
    pub n_hh: f64,
}

impl CountsQuad {
    pub fn new(n_vv: f64, n_hv: f64, n_vh: f64, n_hh: f64) -> Self {
        Self {
            n_vv,
            n_hv,
            n_vh,
            n_hh,
        }
    }

    pub fn total(&self) -> f64 {
        self.n_vv + self.n_hv + self.n_vh + self.n_hh
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.n_vv * k, self.n_hv * k, self.n_vh * k, self.n_hh * k)
    }

    fn check(&self) -> Result<(), QuantumError> {
        let all = [self.n_vv, self.n_hv, self.n_vh, self.n_hh];
        if all.iter().any(|n| !n.is_finite() || *n < 0.0) {
            return Err(QuantumError::NegativeCount);
        }
        if self.total() <= 0.0 {
            return Err(QuantumError::ZeroTotal);
        }
        Ok(())
    }
}

/// The four CHSH angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub beta_prime: f64,
}

impl ChshAngles {
    pub fn from_degrees(alpha: f64, alpha_prime: f64, beta: f64, beta_prime: f64) -> Self {
        Self {
            alpha: alpha.to_radians(),
            alpha_prime: alpha_prime.to_radians(),
            beta: beta.to_radians(),
            beta_prime: beta_prime.to_radians(),
        }
    }

    /// Settings in the order `(a,b)`, `(a',b)`, `(a,b')`, `(a',b')`, matching
    /// the sign pattern `+ + - +` of the S sum.
    pub fn settings(&self) -> [PolarizerSetting; 4] {
        [
            PolarizerSetting::new(self.alpha, self.beta),
            PolarizerSetting::new(self.alpha_prime, self.beta),
            PolarizerSetting::new(self.alpha, self.beta_prime),
            PolarizerSetting::new(self.alpha_prime, self.beta_prime),
        ]
    }
}

impl Default for ChshAngles {
    fn default() -> Self {
        Self::from_degrees(0.0, 45.0, 22.5, 67.5)
    }
}

/// Counts for the four settings of a CHSH test, ordered as
/// [`ChshAngles::settings`].
pub type ChshCounts = [CountsQuad; 4];

/// One `E` term of an S-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTerm {
    pub setting: PolarizerSetting,
    pub e: f64,
    pub sigma_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SValueReport {
    pub s: f64,
    pub sigma_s: f64,
    pub e_terms: [CorrelationTerm; 4],
}

const CHSH_SIGNS: [f64; 4] = [1.0, 1.0, -1.0, 1.0];

pub fn state_amplitudes(state: &TwoPhotonState) -> (Complex64, Complex64) {
    let phi_plus = Complex64::new(state.theta.cos(), 0.0);
    let phi_minus = Complex64::from_polar(state.theta.sin(), state.delta);
    (phi_plus, phi_minus)
}

/// Amplitudes of `|V_alpha V_beta>` over the product basis `HH, HV, VH, VV`.
pub fn projection_vector(alpha: f64, beta: f64) -> [f64; 4] {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    [sa * sb, -sa * cb, -ca * sb, ca * cb]
}

/// `(c0, c1, c2)` such that `P_VV(alpha, beta) = c0 + c1 cos 2beta + c2 sin 2beta`.
pub fn projection_coefficients(state: &TwoPhotonState, alpha: f64) -> (f64, f64, f64) {
    let u = state.coherence();
    let (s2a, c2a) = (2.0 * alpha).sin_cos();
    let c0 = (1.0 - u * c2a) / 4.0;
    let c1 = (c2a - u) / 4.0;
    let c2 = state.visibility_diagonal() * s2a / 4.0;
    (c0, c1, c2)
}

/// Probability that both photons are transmitted by their polarizers.
pub fn coincidence_probability(state: &TwoPhotonState, setting: &PolarizerSetting) -> f64 {
    let (c0, c1, c2) = projection_coefficients(state, setting.alpha);
    let (s2b, c2b) = (2.0 * setting.beta).sin_cos();
    (c0 + c1 * c2b + c2 * s2b).clamp(0.0, 1.0)
}

/// Joint transmission probabilities `[pass/pass, pass/block, block/pass, block/block]`
/// for arm 1 / arm 2.
pub fn outcome_probabilities(state: &TwoPhotonState, setting: &PolarizerSetting) -> [f64; 4] {
    let q = setting.quad();
    let mut p = [0.0; 4];
    for (pi, s) in p.iter_mut().zip(q.iter()) {
        *pi = coincidence_probability(state, s);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|pi| *pi /= total);
    p
}

pub fn expected_counts(state: &TwoPhotonState, model: &CountModel, setting: &PolarizerSetting) -> f64 {
    model.n0 * coincidence_probability(state, setting) + model.nd
}

/// Analytic correlation `E(alpha, beta)` of the pure state. Only `cos 2theta`
/// survives: the `sin 2theta cos delta` terms cancel between the four outcomes.
pub fn analytic_correlation(state: &TwoPhotonState, setting: &PolarizerSetting) -> f64 {
    let (s2a, c2a) = (2.0 * setting.alpha).sin_cos();
    let (s2b, c2b) = (2.0 * setting.beta).sin_cos();
    c2a * c2b + state.visibility_diagonal() * s2a * s2b
}

pub fn analytic_s(state: &TwoPhotonState, angles: &ChshAngles) -> f64 {
    angles
        .settings()
        .iter()
        .zip(CHSH_SIGNS)
        .map(|(s, sign)| sign * analytic_correlation(state, s))
        .sum()
}

pub fn correlation(q: &CountsQuad) -> Result<f64, QuantumError> {
    q.check()?;
    let same = q.n_vv + q.n_hh;
    let diff = q.n_vh + q.n_hv;
    Ok((same - diff) / (same + diff))
}

/// Poisson uncertainty of [`correlation`].
pub fn correlation_uncertainty(q: &CountsQuad) -> Result<f64, QuantumError> {
    q.check()?;
    let same = q.n_vv + q.n_hh;
    let diff = q.n_hv + q.n_vh;
    if same <= 0.0 || diff <= 0.0 {
        return Err(QuantumError::ZeroGroup);
    }
    let total = same + diff;
    Ok(2.0 * same * diff / (total * total) * (1.0 / same + 1.0 / diff).sqrt())
}

pub fn chsh_s(angles: &ChshAngles, quads: &ChshCounts) -> Result<SValueReport, QuantumError> {
    let settings = angles.settings();
    let mut terms = [CorrelationTerm {
        setting: settings[0],
        e: 0.0,
        sigma_e: 0.0,
    }; 4];
    for ((term, quad), setting) in terms.iter_mut().zip(quads.iter()).zip(settings) {
        *term = CorrelationTerm {
            setting,
            e: correlation(quad)?,
            sigma_e: correlation_uncertainty(quad)?,
        };
    }
    let s = terms.iter().zip(CHSH_SIGNS).map(|(t, sign)| sign * t.e).sum();
    let sigma_s = terms.iter().map(|t| t.sigma_e * t.sigma_e).sum::<f64>().sqrt();
    Ok(SValueReport {
        s,
        sigma_s,
        e_terms: terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

    /// `<psi| M |psi>` by explicit 4-dim state-vector arithmetic.
    fn oracle_probability(theta: f64, delta: f64, alpha: f64, beta: f64) -> f64 {
        let r2 = std::f64::consts::SQRT_2;
        let e = Complex64::from_polar(1.0, delta);
        // basis HH, HV, VH, VV
        let psi = [
            (theta.cos() + e * theta.sin()) / r2,
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            (theta.cos() - e * theta.sin()) / r2,
        ];
        let proj = [
            alpha.sin() * beta.sin(),
            -alpha.sin() * beta.cos(),
            -alpha.cos() * beta.sin(),
            alpha.cos() * beta.cos(),
        ];
        let amp: Complex64 = psi.iter().zip(proj).map(|(p, v)| p * v).sum();
        amp.norm_sqr()
    }

    /// `Tr{rho M}` through explicit 4x4 matrices.
    fn oracle_trace(theta: f64, delta: f64, alpha: f64, beta: f64) -> f64 {
        let r2 = std::f64::consts::SQRT_2;
        let e = Complex64::from_polar(1.0, delta);
        let z = Complex64::new(0.0, 0.0);
        let psi = [
            (theta.cos() + e * theta.sin()) / r2,
            z,
            z,
            (theta.cos() - e * theta.sin()) / r2,
        ];
        let v = [
            alpha.sin() * beta.sin(),
            -alpha.sin() * beta.cos(),
            -alpha.cos() * beta.sin(),
            alpha.cos() * beta.cos(),
        ];
        let mut tr = z;
        for i in 0..4 {
            for j in 0..4 {
                let rho_ij = psi[i] * psi[j].conj();
                let m_ji = v[j] * v[i];
                tr += rho_ij * m_ji;
            }
        }
        tr.re
    }

    const TABLE_ROWS: [[f64; 4]; 4] = [
        // VV, HV, VH, HH
        [17656.0, 4393.0, 3344.0, 23767.0],
        [3344.0, 23767.0, 17656.0, 4393.0],
        [19064.0, 2984.0, 5516.0, 21596.0],
        [21596.0, 5516.0, 2984.0, 19064.0],
    ];

    fn table_quad(row: usize) -> CountsQuad {
        let r = TABLE_ROWS[row];
        CountsQuad::new(r[0], r[1], r[2], r[3])
    }

    #[test]
    fn amplitudes_of_pure_bell_states() {
        let (a, b) = state_amplitudes(&TwoPhotonState::new(0.0, 0.0));
        assert_eq!((a.re, a.im, b.re, b.im), (1.0, 0.0, 0.0, 0.0));
        let (a, b) = state_amplitudes(&TwoPhotonState::new(PI / 2.0, 0.0));
        assert!(a.norm() < 1e-12);
        assert!((b - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn amplitudes_of_fitted_source_state() {
        let (a, b) = state_amplitudes(&TwoPhotonState::new(-0.15, 2.10));
        let sin_t = (-0.15f64).sin();
        assert!((a.re - (-0.15f64).cos()).abs() < 1e-15 && a.im == 0.0);
        assert!((b.re - sin_t * 2.10f64.cos()).abs() < 1e-15);
        assert!((b.im - sin_t * 2.10f64.sin()).abs() < 1e-15);
        assert!((a.re - 0.98877).abs() < 1e-5);
        assert!((b.re - 0.07544).abs() < 1e-5);
        assert!((b.im + 0.12900).abs() < 1e-5);
    }

    #[test]
    fn projection_vector_examples() {
        assert_eq!(projection_vector(0.0, 0.0), [0.0, -0.0, -0.0, 1.0]);
        let hh = projection_vector(PI / 2.0, PI / 2.0);
        assert!((hh[0] - 1.0).abs() < 1e-12 && hh[1..].iter().all(|v| v.abs() < 1e-12));
        let q = projection_vector(FRAC_PI_4, FRAC_PI_4);
        for (got, want) in q.iter().zip([0.5, -0.5, -0.5, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn coefficient_examples() {
        let phi = TwoPhotonState::PHI_PLUS;
        let (c0, c1, c2) = projection_coefficients(&phi, 0.0);
        assert!((c0 - 0.25).abs() < 1e-15 && (c1 - 0.25).abs() < 1e-15 && c2.abs() < 1e-15);
        let (c0, c1, c2) = projection_coefficients(&phi, FRAC_PI_4);
        assert!((c0 - 0.25).abs() < 1e-15 && c1.abs() < 1e-15 && (c2 - 0.25).abs() < 1e-15);

        // against the density-matrix oracle: fit (c0, c1, c2) from three betas
        let s = TwoPhotonState::new(-0.15, 2.10);
        let (c0, c1, c2) = projection_coefficients(&s, 0.0);
        for beta in [0.0f64, 0.3, 1.1, 2.0] {
            let model = c0 + c1 * (2.0 * beta).cos() + c2 * (2.0 * beta).sin();
            assert!((model - oracle_trace(-0.15, 2.10, 0.0, beta)).abs() < 1e-10);
        }
    }

    #[test]
    fn probability_examples() {
        let phi = TwoPhotonState::PHI_PLUS;
        for a in [0.0, 0.4, 1.3] {
            let p = coincidence_probability(&phi, &PolarizerSetting::new(a, a));
            assert!((p - 0.5).abs() < 1e-12);
        }
        assert!(coincidence_probability(&phi, &PolarizerSetting::new(0.0, PI / 2.0)) < 1e-15);
        let s = TwoPhotonState::new(-0.15, 2.10);
        let p = coincidence_probability(&s, &PolarizerSetting::new(FRAC_PI_4, FRAC_PI_8));
        assert!((p - oracle_trace(-0.15, 2.10, FRAC_PI_4, FRAC_PI_8)).abs() < 1e-10);
    }

    #[test]
    fn expected_count_examples() {
        let s = TwoPhotonState::new(-0.15, 2.10);
        let bg = CountModel { n0: 0.0, nd: 7.0 };
        assert_eq!(expected_counts(&s, &bg, &PolarizerSetting::new(0.3, 1.2)), 7.0);
        let m = CountModel { n0: 100.0, nd: 0.0 };
        let n = expected_counts(&TwoPhotonState::PHI_PLUS, &m, &PolarizerSetting::new(0.0, 0.0));
        assert!((n - 50.0).abs() < 1e-12);

        // direct evaluation of N0 P + Nd and the printed C-coefficient form
        let m = CountModel { n0: 47640.0, nd: 380.0 };
        let n = expected_counts(&s, &m, &PolarizerSetting::new(0.0, 0.0));
        let direct = m.n0 * oracle_probability(-0.15, 2.10, 0.0, 0.0) + m.nd;
        assert!((n - direct).abs() < 1e-8);
        assert!((n - 2.065e4).abs() < 10.0, "{n}");
        let (t, d, a) = (s.theta, s.delta, 0.0f64);
        let big_c0 = -m.n0 * d.cos() * (2.0 * t).sin() / 4.0 * (2.0 * a).cos() + (m.n0 + 4.0 * m.nd) / 4.0;
        let big_c1 = m.n0 / 4.0 * (2.0 * a).cos() - m.n0 * d.cos() * (2.0 * t).sin() / 4.0;
        assert!((n - (big_c0 + big_c1)).abs() < 1e-8);
    }

    #[test]
    fn table_correlations() {
        let e1 = correlation(&table_quad(0)).unwrap();
        assert!((e1 - 0.685243).abs() < 1e-4);
        assert!((correlation(&table_quad(1)).unwrap() + 0.685243).abs() < 1e-4);
        assert!((correlation(&table_quad(2)).unwrap() - 0.654174).abs() < 1e-4);
        assert!((correlation(&table_quad(3)).unwrap() - 0.654174).abs() < 1e-4);
        assert_eq!(correlation(&CountsQuad::new(9.0, 0.0, 0.0, 9.0)).unwrap(), 1.0);
        assert_eq!(
            correlation(&CountsQuad::new(0.0, 0.0, 0.0, 0.0)),
            Err(QuantumError::ZeroTotal)
        );
    }

    /// Independent route: propagate sqrt(N) of each of the four counts
    /// through the E ratio using its partial derivatives.
    fn poisson_propagation(q: &CountsQuad) -> f64 {
        let t = q.total();
        let same = q.n_vv + q.n_hh;
        let diff = q.n_hv + q.n_vh;
        // dE/dN = 2 diff / t^2 for same-outcome counts, -2 same / t^2 otherwise
        let d_same = 2.0 * diff / (t * t);
        let d_diff = -2.0 * same / (t * t);
        let var = d_same * d_same * (q.n_vv + q.n_hh) + d_diff * d_diff * (q.n_hv + q.n_vh);
        var.sqrt()
    }

    #[test]
    fn uncertainty_matches_propagation() {
        let q = table_quad(0);
        let closed = correlation_uncertainty(&q).unwrap();
        let oracle = poisson_propagation(&q);
        assert!((closed - oracle).abs() < 1e-12, "{closed} vs {oracle}");
        let four = correlation_uncertainty(&q.scaled(4.0)).unwrap();
        assert!((four - closed / 2.0).abs() < 1e-12);
        assert_eq!(
            correlation_uncertainty(&CountsQuad::new(5.0, 0.0, 0.0, 5.0)),
            Err(QuantumError::ZeroGroup)
        );
    }

    #[test]
    fn table_s_value() {
        // (0,22.5), (45,22.5), (0,67.5), (45,67.5)
        let quads = [table_quad(0), table_quad(2), table_quad(1), table_quad(3)];
        let r = chsh_s(&ChshAngles::default(), &quads).unwrap();
        assert!((r.s - 2.679).abs() < 2e-3, "{}", r.s);
        assert!((r.sigma_s - 0.007).abs() < 2e-3, "{}", r.sigma_s);
    }

    #[test]
    fn ideal_counts_reach_tsirelson() {
        let angles = ChshAngles::default();
        let phi = TwoPhotonState::PHI_PLUS;
        let m = CountModel { n0: 1e12, nd: 0.0 };
        let quads = angles.settings().map(|s| {
            let q = s.quad().map(|x| expected_counts(&phi, &m, &x));
            CountsQuad::new(q[0], q[2], q[1], q[3])
        });
        let r = chsh_s(&angles, &quads).unwrap();
        assert!((r.s - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-6);
        assert!((analytic_s(&phi, &angles) - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    fn quads_from_model(state: &TwoPhotonState, angles: &ChshAngles, n0: f64) -> ChshCounts {
        let m = CountModel { n0, nd: 0.0 };
        angles.settings().map(|s| {
            let q = s.quad().map(|x| expected_counts(state, &m, &x));
            CountsQuad::new(q[0], q[2], q[1], q[3])
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn outcome_probabilities_sum_to_one(t in -4.0..4.0f64, d in -7.0..7.0f64, a in -4.0..4.0f64, b in -4.0..4.0f64) {
            let s = TwoPhotonState::new(t, d);
            let sum: f64 = PolarizerSetting::new(a, b).quad().iter().map(|x| coincidence_probability(&s, x)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }

        #[test]
        fn probability_matches_state_vector_oracle(t in -4.0..4.0f64, d in -7.0..7.0f64, a in -4.0..4.0f64, b in -4.0..4.0f64) {
            let p = coincidence_probability(&TwoPhotonState::new(t, d), &PolarizerSetting::new(a, b));
            prop_assert!((p - oracle_probability(t, d, a, b)).abs() < 1e-10);
        }

        #[test]
        fn amplitudes_normalized_and_periodic(t in -4.0..4.0f64, d in -7.0..7.0f64, a in -4.0..4.0f64, b in -4.0..4.0f64) {
            let s = TwoPhotonState::new(t, d);
            let (x, y) = state_amplitudes(&s);
            prop_assert!((x.norm_sqr() + y.norm_sqr() - 1.0).abs() < 1e-12);
            let set = PolarizerSetting::new(a, b);
            let p = coincidence_probability(&s, &set);
            let shifted = TwoPhotonState::new(t + 2.0 * PI, d + 2.0 * PI);
            prop_assert!((p - coincidence_probability(&shifted, &set)).abs() < 1e-12);
            prop_assert!((p - coincidence_probability(&s, &PolarizerSetting::new(a + PI, b))).abs() < 1e-12);
            prop_assert!((p - coincidence_probability(&s, &PolarizerSetting::new(a, b + PI))).abs() < 1e-12);
        }

        #[test]
        fn counts_periodic_in_beta(t in -2.0..2.0f64, d in 0.0..6.3f64, a in 0.0..3.2f64, b in 0.0..3.2f64, n0 in 0.0..1e5f64, nd in 0.0..1e3f64) {
            let s = TwoPhotonState::new(t, d);
            let m = CountModel { n0, nd };
            let x = expected_counts(&s, &m, &PolarizerSetting::new(a, b));
            prop_assert!(x >= 0.0);
            prop_assert!((x - expected_counts(&s, &m, &PolarizerSetting::new(a, b + PI))).abs() < 1e-10 * x.max(1.0));
        }

        #[test]
        fn quantum_s_respects_tsirelson(t in -2.0..2.0f64, d in 0.0..6.3f64, a in 0.0..3.2f64, a2 in 0.0..3.2f64, b in 0.0..3.2f64, b2 in 0.0..3.2f64) {
            let s = TwoPhotonState::new(t, d);
            let angles = ChshAngles { alpha: a, alpha_prime: a2, beta: b, beta_prime: b2 };
            let quads = quads_from_model(&s, &angles, 1e6);
            if let Ok(r) = chsh_s(&angles, &quads) {
                prop_assert!(r.s.abs() <= 2.0 * std::f64::consts::SQRT_2 + 1e-9);
            }
        }

        #[test]
        fn correlation_scale_invariance(vv in 1.0..1e5f64, hv in 1.0..1e5f64, vh in 1.0..1e5f64, hh in 1.0..1e5f64, k in 0.01..100.0f64) {
            let q = CountsQuad::new(vv, hv, vh, hh);
            let e = correlation(&q).unwrap();
            prop_assert!((e - correlation(&q.scaled(k)).unwrap()).abs() < 1e-12);
            let de = correlation_uncertainty(&q).unwrap();
            let dk = correlation_uncertainty(&q.scaled(k)).unwrap();
            prop_assert!((dk * k.sqrt() - de).abs() < 1e-12 * de.max(1e-3) * 1e3);
        }
    }

    #[test]
    fn analytic_s_of_source_state() {
        let s = TwoPhotonState::new(-0.15, 2.10);
        let angles = ChshAngles::default();
        let quads = quads_from_model(&s, &angles, 1e9);
        let r = chsh_s(&angles, &quads).unwrap();
        assert!((r.s - analytic_s(&s, &angles)).abs() < 1e-9);
    }
}
