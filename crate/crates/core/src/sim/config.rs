use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the measurement-strength simplex constraint.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Parameters of one circuit realization: geometry, measurement strengths and
/// the provenance of its random stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    /// Qubit count (open boundary chain).
    pub l: usize,
    /// Number of brickwork time steps.
    pub t: usize,
    pub gamma_x: f64,
    pub gamma_zz: f64,
    pub gamma_zxz: f64,
    pub master_seed: u64,
    /// Tag identifying the parameter point; part of the seed derivation.
    pub point_id: String,
}

impl CircuitConfig {
    pub fn new(
        l: usize,
        t: usize,
        gamma_x: f64,
        gamma_zz: f64,
        gamma_zxz: f64,
        master_seed: u64,
        point_id: impl Into<String>,
    ) -> Result<Self> {
        let cfg = CircuitConfig {
            l,
            t,
            gamma_x,
            gamma_zz,
            gamma_zxz,
            master_seed,
            point_id: point_id.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 3 {
            return Err(Error::domain(format!("L must be >= 3, got {}", self.l)));
        }
        if self.t < 1 {
            return Err(Error::domain("T must be >= 1"));
        }
        for (name, g) in [
            ("gamma_x", self.gamma_x),
            ("gamma_zz", self.gamma_zz),
            ("gamma_zxz", self.gamma_zxz),
        ] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::domain(format!("{name} must lie in [0,1], got {g}")));
            }
        }
        let sum = self.gamma_x + self.gamma_zz + self.gamma_zxz;
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!(
                "measurement strengths must sum to 1 (got {sum})"
            )));
        }
        Ok(())
    }

    /// Flattened record dimension `D = T*L + T/2*(L-1) + T/3*(L-2)`.
    pub fn record_dim(&self) -> usize {
        self.t * self.l + (self.t / 2) * (self.l - 1) + (self.t / 3) * (self.l - 2)
    }

    /// Record grid shapes `(X, ZZ, ZXZ)` as `(rows, cols)` pairs.
    pub fn record_shapes(&self) -> [(usize, usize); 3] {
        [
            (self.t, self.l),
            (self.t / 2, self.l - 1),
            (self.t / 3, self.l - 2),
        ]
    }
}
