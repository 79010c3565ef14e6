use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, trajectory_seed};
use crate::sim::config::CircuitConfig;
use crate::sim::kraus::{kraus_pair, KrausPair, Observable};
use crate::sim::measure::apply_weak_measurement_with;
use crate::sim::state::StateVector;

/// Dense grid of measurement outcomes, entries in `{+1, -1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignGrid {
    rows: usize,
    cols: usize,
    data: Vec<i8>,
}

impl SignGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        SignGrid {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain("sign grid data does not match shape"));
        }
        Ok(SignGrid { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i8) {
        self.data[r * self.cols + c] = v;
    }

    /// Row-major entries.
    pub fn data(&self) -> &[i8] {
        &self.data
    }

    /// Keeps columns `first..first+count`.
    pub fn crop_cols(&self, first: usize, count: usize) -> SignGrid {
        let mut out = SignGrid::new(self.rows, count);
        for r in 0..self.rows {
            for c in 0..count {
                out.set(r, c, self.get(r, first + c));
            }
        }
        out
    }
}

/// Raw binary outcomes of the three channels for one circuit run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub x_outcomes: SignGrid,
    pub zz_outcomes: SignGrid,
    pub zxz_outcomes: SignGrid,
    pub seed: u64,
}

impl TrajectoryRecord {
    /// Crops all three grids to the centered `l_window`-qubit subchain of a
    /// record generated at system size `l`. Bonds and triplets that stick out
    /// of the window are dropped; at `l_window = 2` the ZXZ grid is empty.
    pub fn crop_to_window(&self, l: usize, l_window: usize) -> Result<TrajectoryRecord> {
        if l_window < 2 || l_window > l {
            return Err(Error::domain(format!(
                "window {l_window} invalid for system size {l}"
            )));
        }
        if (l - l_window) % 2 != 0 {
            return Err(Error::domain(
                "window must leave an even margin so it can be centered",
            ));
        }
        let first = (l - l_window) / 2;
        Ok(TrajectoryRecord {
            x_outcomes: self.x_outcomes.crop_cols(first, l_window),
            zz_outcomes: self.zz_outcomes.crop_cols(first, l_window - 1),
            zxz_outcomes: if l_window >= 3 {
                self.zxz_outcomes.crop_cols(first, l_window - 2)
            } else {
                SignGrid::new(self.zxz_outcomes.rows(), 0)
            },
            seed: self.seed,
        })
    }
}

/// Iterates the measurement events of step `t` in schedule order:
/// the full X layer, then the active ZZ bonds, then the active ZXZ triplets,
/// each left to right. Bond `i` fires when `i = t (mod 2)`; triplet `i` when
/// `i = t (mod 3)`.
pub fn step_events(l: usize, t: usize) -> impl Iterator<Item = (Observable, usize)> {
    let x = (0..l).map(|site| (Observable::X, site));
    let zz = (0..l - 1)
        .filter(move |i| i % 2 == t % 2)
        .map(|site| (Observable::Zz, site));
    let zxz = (0..l.saturating_sub(2))
        .filter(move |i| i % 3 == t % 3)
        .map(|site| (Observable::Zxz, site));
    x.chain(zz).chain(zxz)
}

fn kraus_set(config: &CircuitConfig) -> Result<[KrausPair; 3]> {
    Ok([
        kraus_pair(Observable::X, config.gamma_x)?,
        kraus_pair(Observable::Zz, config.gamma_zz)?,
        kraus_pair(Observable::Zxz, config.gamma_zxz)?,
    ])
}

/// Runs one trajectory with the given per-trajectory seed and records every
/// outcome. `observer` is called with `(step, state)` for the initial state
/// (`step = 0`) and after each completed step (`step = t + 1`).
pub fn simulate_trajectory_observed(
    config: &CircuitConfig,
    seed: u64,
    mut observer: impl FnMut(usize, &StateVector),
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let [(xr, xc), (zr, zc), (vr, vc)] = config.record_shapes();
    let mut record = TrajectoryRecord {
        x_outcomes: SignGrid::new(xr, xc),
        zz_outcomes: SignGrid::new(zr, zc),
        zxz_outcomes: SignGrid::new(vr, vc),
        seed,
    };
    let pairs = kraus_set(config)?;
    let mut rng = rng_from_seed(seed);
    let mut state = StateVector::initial(config.l)?;
    observer(0, &state);
    for t in 0..config.t {
        for (obs, site) in step_events(config.l, t) {
            let pair = match obs {
                Observable::X => &pairs[0],
                Observable::Zz => &pairs[1],
                Observable::Zxz => &pairs[2],
            };
            let out = apply_weak_measurement_with(&mut state, pair, site, &mut rng)?;
            match obs {
                Observable::X => record.x_outcomes.set(t, site, out.sign),
                Observable::Zz => record.zz_outcomes.set(t / 2, site, out.sign),
                Observable::Zxz => record.zxz_outcomes.set(t / 3, site, out.sign),
            }
        }
        observer(t + 1, &state);
    }
    Ok(record)
}

/// Runs one trajectory and returns the dense outcome record.
pub fn simulate_trajectory(config: &CircuitConfig, seed: u64) -> Result<TrajectoryRecord> {
    simulate_trajectory_observed(config, seed, |_, _| {})
}

/// A collection of trajectories sampled at one parameter point.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: CircuitConfig,
    pub records: Vec<TrajectoryRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Samples `m` trajectories in parallel. Trajectory `i` uses the seed
/// `trajectory_seed(master_seed, point_id, i)`, so the result is independent
/// of worker count and a prefix of any longer run with the same stream.
pub fn generate_dataset(config: &CircuitConfig, m: usize) -> Result<Dataset> {
    config.validate()?;
    if m < 1 {
        return Err(Error::domain("dataset size must be >= 1"));
    }
    if config.t % 6 != 0 {
        log::warn!(
            "T = {} is not divisible by 6; records cannot feed the classifier",
            config.t
        );
    }
    let records: Vec<TrajectoryRecord> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let seed = trajectory_seed(config.master_seed, &config.point_id, i);
            simulate_trajectory(config, seed)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        config: config.clone(),
        records,
    })
}
