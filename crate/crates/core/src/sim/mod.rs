//! Exact statevector simulation of the measurement-only brickwork circuit.

mod circuit;
mod config;
mod entropy;
mod kraus;
mod measure;
mod oracle;
mod state;

pub use circuit::{
    generate_dataset, simulate_trajectory, simulate_trajectory_observed, Dataset, SignGrid,
    TrajectoryRecord,
};
pub use config::CircuitConfig;
pub use entropy::{
    entropy_curve, mutual_information, topological_ee, von_neumann_entropy, EntropyReport,
};
pub use kraus::{kraus_pair, theta_of_gamma, KrausPair, Observable};
pub use measure::{apply_weak_measurement, apply_weak_measurement_with, MeasurementOutcome};
pub use oracle::brute_force_outcome_distribution;
pub use state::StateVector;
