use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::kraus::{kraus_pair, KrausPair, Observable};
use crate::sim::state::StateVector;

/// Result of one weak-measurement channel application.
#[derive(Clone, Copy, Debug)]
pub struct MeasurementOutcome {
    /// `+1` for Kraus branch `M1`, `-1` for `M2`.
    pub sign: i8,
    /// Probability of the `M1` branch before sampling.
    pub p1: f64,
}

/// Samples one weak measurement of `observable` at strength `gamma` on the
/// contiguous qubits starting at `site`, applies the selected Kraus operator
/// and renormalizes the state.
pub fn apply_weak_measurement(
    state: &mut StateVector,
    observable: Observable,
    site: usize,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<MeasurementOutcome> {
    let pair = kraus_pair(observable, gamma)?;
    apply_weak_measurement_with(state, &pair, site, rng)
}

/// As [`apply_weak_measurement`] with a prebuilt Kraus pair (the hot path for
/// trajectory sampling, where the three pairs are fixed per configuration).
pub fn apply_weak_measurement_with(
    state: &mut StateVector,
    pair: &KrausPair,
    site: usize,
    rng: &mut impl Rng,
) -> Result<MeasurementOutcome> {
    if site + pair.arity > state.num_qubits() {
        return Err(Error::domain(format!(
            "operator of arity {} at site {site} exceeds chain of {} qubits",
            pair.arity,
            state.num_qubits()
        )));
    }
    // p1 = <psi| M1^dag M1 |psi> with M1^dag M1 = I/2 + cos(2 theta)/2 * Q
    // and cos(2 theta) = sin(gamma pi/2); the closed form is exact at the
    // gamma = 0 (p1 = 1/2) and gamma = 1 (Born rule) limits.
    let exp_q = state.expectation_local(pair.pauli(), pair.arity, site);
    let p1 = 0.5 * (1.0 + (pair.gamma * std::f64::consts::FRAC_PI_2).sin() * exp_q);
    if !(-1e-12..=1.0 + 1e-12).contains(&p1) {
        return Err(Error::Internal(format!(
            "branch probability p1 = {p1} outside [0,1]"
        )));
    }
    let p1 = p1.clamp(0.0, 1.0);
    let sign = if rng.gen::<f64>() < p1 { 1 } else { -1 };
    state.apply_local(if sign == 1 { &pair.m1 } else { &pair.m2 }, pair.arity, site);
    state.normalize();
    Ok(MeasurementOutcome { sign, p1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use num_complex::Complex64;

    fn plus_x_state() -> StateVector {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        StateVector::from_amplitudes(1, vec![h, h]).unwrap()
    }

    #[test]
    fn eigenstate_gives_p1_cos2_theta_and_fixed_point() {
        // |+x> is the +1 eigenstate of X: p1 = cos^2(theta), state unchanged
        let mut rng = rng_from_seed(7);
        for gamma in [0.0, 0.3, 0.85, 1.0] {
            let theta = crate::sim::theta_of_gamma(gamma).unwrap();
            let reference = plus_x_state();
            let mut s = plus_x_state();
            let out =
                apply_weak_measurement(&mut s, Observable::X, 0, gamma, &mut rng).unwrap();
            assert!(
                (out.p1 - theta.cos().powi(2)).abs() < 1e-12,
                "gamma={gamma}"
            );
            assert!((s.fidelity(&reference) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_expectation_gives_half_for_every_gamma() {
        // the initial |0>+i|1> qubit has <X> = 0
        let mut rng = rng_from_seed(11);
        for gamma in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut s = StateVector::initial(1).unwrap();
            let out =
                apply_weak_measurement(&mut s, Observable::X, 0, gamma, &mut rng).unwrap();
            assert_eq!(out.p1, 0.5, "gamma={gamma}");
        }
    }

    #[test]
    fn projective_repeat_reproduces_outcome() {
        let mut rng = rng_from_seed(3);
        for trial in 0..20 {
            let mut s = StateVector::initial(3).unwrap();
            // scramble with a few weak measurements first
            for site in 0..3 {
                apply_weak_measurement(&mut s, Observable::X, site, 0.4, &mut rng).unwrap();
            }
            let first =
                apply_weak_measurement(&mut s, Observable::X, 1, 1.0, &mut rng).unwrap();
            let second =
                apply_weak_measurement(&mut s, Observable::X, 1, 1.0, &mut rng).unwrap();
            assert_eq!(first.sign, second.sign, "trial {trial}");
            assert!((second.p1 - if first.sign == 1 { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_zero_channel_is_identity_with_p_half() {
        let mut rng = rng_from_seed(5);
        let mut s = StateVector::initial(4).unwrap();
        for site in 0..3 {
            apply_weak_measurement(&mut s, Observable::Zxz, site, 0.6, &mut rng).unwrap();
        }
        let reference = s.clone();
        for (obs, site) in [
            (Observable::X, 2),
            (Observable::Zz, 0),
            (Observable::Zxz, 1),
        ] {
            let out = apply_weak_measurement(&mut s, obs, site, 0.0, &mut rng).unwrap();
            assert_eq!(out.p1, 0.5);
            assert!((s.fidelity(&reference) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_is_preserved_by_every_channel() {
        let mut rng = rng_from_seed(13);
        let mut s = StateVector::initial(5).unwrap();
        for round in 0..50 {
            let gamma = (round % 11) as f64 / 10.0;
            apply_weak_measurement(&mut s, Observable::X, round % 5, gamma, &mut rng).unwrap();
            apply_weak_measurement(&mut s, Observable::Zz, round % 4, gamma, &mut rng).unwrap();
            apply_weak_measurement(&mut s, Observable::Zxz, round % 3, gamma, &mut rng).unwrap();
            assert!((s.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn out_of_range_site_is_rejected() {
        let mut rng = rng_from_seed(1);
        let mut s = StateVector::initial(3).unwrap();
        assert!(apply_weak_measurement(&mut s, Observable::Zxz, 1, 0.5, &mut rng).is_err());
    }
}
