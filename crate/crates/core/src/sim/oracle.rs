use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::circuit::step_events;
use crate::sim::config::CircuitConfig;
use crate::sim::kraus::{kraus_pair, KrausPair, Observable};
use crate::sim::state::StateVector;

/// Enumeration guard: 2^20 leaves.
const MAX_EVENTS: usize = 20;

/// Exact outcome distribution of a small circuit by depth-first enumeration of
/// both Kraus branches at every measurement event (schedule order). Branches
/// of probability zero are pruned; the surviving leaf probabilities sum to 1.
///
/// This is the ground-truth oracle for the trajectory sampler.
pub fn brute_force_outcome_distribution(
    config: &CircuitConfig,
) -> Result<BTreeMap<Vec<i8>, f64>> {
    config.validate()?;
    let events: Vec<(Observable, usize)> = (0..config.t)
        .flat_map(|t| step_events(config.l, t))
        .collect();
    if events.len() > MAX_EVENTS {
        return Err(Error::Resource(format!(
            "{} measurement events exceed the enumeration limit of {MAX_EVENTS}",
            events.len()
        )));
    }
    let pairs = [
        kraus_pair(Observable::X, config.gamma_x)?,
        kraus_pair(Observable::Zz, config.gamma_zz)?,
        kraus_pair(Observable::Zxz, config.gamma_zxz)?,
    ];
    let state = StateVector::initial(config.l)?;
    let mut out = BTreeMap::new();
    let mut prefix = Vec::with_capacity(events.len());
    descend(&state, &events, &pairs, &mut prefix, 1.0, &mut out);
    Ok(out)
}

fn descend(
    state: &StateVector,
    events: &[(Observable, usize)],
    pairs: &[KrausPair; 3],
    prefix: &mut Vec<i8>,
    prob: f64,
    out: &mut BTreeMap<Vec<i8>, f64>,
) {
    let Some(&(obs, site)) = events.first() else {
        out.insert(prefix.clone(), prob);
        return;
    };
    let pair = match obs {
        Observable::X => &pairs[0],
        Observable::Zz => &pairs[1],
        Observable::Zxz => &pairs[2],
    };
    let p1 = state
        .expectation_local(&pair.effect(1), pair.arity, site)
        .clamp(0.0, 1.0);
    for (sign, p, m) in [(1i8, p1, &pair.m1), (-1i8, 1.0 - p1, &pair.m2)] {
        if p <= 1e-15 {
            continue;
        }
        let mut next = state.clone();
        next.apply_local(m, pair.arity, site);
        next.normalize();
        prefix.push(sign);
        descend(&next, &events[1..], pairs, prefix, prob * p, out);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_probabilities_sum_to_one() {
        let cfg = CircuitConfig::new(3, 1, 0.5, 0.3, 0.2, 0, "oracle").unwrap();
        let dist = brute_force_outcome_distribution(&cfg).unwrap();
        assert_eq!(dist.len(), 32); // 5 events, all branches open at generic gamma
        let total: f64 = dist.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(dist.keys().all(|k| k.len() == 5));
    }

    #[test]
    fn projective_zxz_repeats_deterministically() {
        // gamma = (0,0,1): X and ZZ channels are unbiased coin flips with no
        // back-action, ZXZ is projective. Triplet 0 fires at t = 0 and t = 3;
        // the second outcome must repeat the first with certainty.
        let cfg = CircuitConfig::new(3, 4, 0.0, 0.0, 1.0, 0, "proj").unwrap();
        let dist = brute_force_outcome_distribution(&cfg).unwrap();
        let total: f64 = dist.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        // event sequence: t=0 -> [X,X,X,ZZ0,ZXZ0], t=1 -> [X,X,X,ZZ1],
        // t=2 -> [X,X,X,ZZ0], t=3 -> [X,X,X,ZZ1,ZXZ0]; 18 events total
        for key in dist.keys() {
            assert_eq!(key.len(), 18);
            assert_eq!(key[4], key[17], "projective repeat must match");
        }
    }

    #[test]
    fn event_limit_enforced() {
        let cfg = CircuitConfig::new(6, 4, 0.5, 0.3, 0.2, 0, "big").unwrap();
        assert!(brute_force_outcome_distribution(&cfg).is_err());
    }
}
