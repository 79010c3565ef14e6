use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::trajectory_seed;
use crate::sim::circuit::simulate_trajectory_observed;
use crate::sim::config::CircuitConfig;
use crate::sim::state::StateVector;

/// Schmidt coefficients below this are treated as exact zeros.
const EIGENVALUE_CLAMP: f64 = 1e-14;

/// Von Neumann entanglement entropy of `subsystem` in bits.
///
/// The entropy is computed from the eigenvalues of the reduced density
/// operator of the smaller side of the cut (equal for pure states).
pub fn von_neumann_entropy(state: &StateVector, subsystem: &[usize]) -> Result<f64> {
    let l = state.num_qubits();
    validate_subsystem(l, subsystem)?;
    if subsystem.len() == l {
        return Err(Error::domain("subsystem must be a proper subset"));
    }
    let mut subsys: Vec<usize> = subsystem.to_vec();
    subsys.sort_unstable();
    if subsys.len() > l - subsys.len() {
        subsys = (0..l).filter(|q| !subsys.contains(q)).collect();
    }
    let rho = reduced_density(state, &subsys);
    let dim = 1usize << subsys.len();
    let eigs = hermitian_eigenvalues(&rho, dim);
    let mut s = 0.0;
    for lam in eigs {
        if lam > EIGENVALUE_CLAMP {
            s -= lam * lam.log2();
        }
    }
    Ok(s.max(0.0))
}

/// Mutual information `S_A + S_B - S_{A u B}` in bits for disjoint regions.
pub fn mutual_information(state: &StateVector, a: &[usize], b: &[usize]) -> Result<f64> {
    validate_subsystem(state.num_qubits(), a)?;
    validate_subsystem(state.num_qubits(), b)?;
    if a.iter().any(|q| b.contains(q)) {
        return Err(Error::domain("mutual information regions must be disjoint"));
    }
    let joint: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    Ok(von_neumann_entropy(state, a)? + von_neumann_entropy(state, b)?
        - von_neumann_entropy(state, &joint)?)
}

/// Topological entanglement entropy `S_AB + S_BC - S_B - S_ABC` in bits, with
/// the chain split into contiguous equal quarters A, B, C, D.
pub fn topological_ee(state: &StateVector) -> Result<f64> {
    let l = state.num_qubits();
    if l % 4 != 0 {
        return Err(Error::domain(format!(
            "topological entropy needs L divisible by 4, got {l}"
        )));
    }
    let q = l / 4;
    let ab: Vec<usize> = (0..2 * q).collect();
    let bc: Vec<usize> = (q..3 * q).collect();
    let b: Vec<usize> = (q..2 * q).collect();
    let abc: Vec<usize> = (0..3 * q).collect();
    Ok(von_neumann_entropy(state, &ab)? + von_neumann_entropy(state, &bc)?
        - von_neumann_entropy(state, &b)?
        - von_neumann_entropy(state, &abc)?)
}

/// Trajectory-averaged entanglement diagnostics.
#[derive(Clone, Debug)]
pub struct EntropyReport {
    /// Sampled step indices (0 = initial state).
    pub times: Vec<usize>,
    /// Mean half-chain entropy per sample time, in bits.
    pub s_half: Vec<f64>,
    /// Standard error of the mean per sample time.
    pub s_half_se: Vec<f64>,
    /// Mean end-to-end mutual information of the final states.
    pub mi: f64,
    pub mi_se: f64,
    /// Mean topological entropy of the final states (`None` if L % 4 != 0).
    pub s_topo: Option<f64>,
    pub s_topo_se: Option<f64>,
    pub n_traj: usize,
}

/// Averages the half-chain entropy at `sample_times` over `n_traj` independent
/// trajectories, plus end-to-end mutual information and topological entropy of
/// the final states.
pub fn entropy_curve(
    config: &CircuitConfig,
    sample_times: &[usize],
    n_traj: usize,
) -> Result<EntropyReport> {
    config.validate()?;
    if n_traj < 1 {
        return Err(Error::domain("n_traj must be >= 1"));
    }
    if let Some(&bad) = sample_times.iter().find(|&&t| t > config.t) {
        return Err(Error::domain(format!(
            "sample time {bad} exceeds circuit depth {}",
            config.t
        )));
    }
    let l = config.l;
    let half: Vec<usize> = (0..l / 2).collect();
    let want_tee = l % 4 == 0;

    struct TrajStats {
        s_half: Vec<f64>,
        mi: f64,
        tee: f64,
    }
    let per_traj: Vec<TrajStats> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let seed = trajectory_seed(config.master_seed, &config.point_id, i);
            let mut s_half = vec![0.0; sample_times.len()];
            let mut final_state: Option<StateVector> = None;
            simulate_trajectory_observed(config, seed, |step, state| {
                for (k, &t) in sample_times.iter().enumerate() {
                    if t == step {
                        s_half[k] = von_neumann_entropy(state, &half).unwrap_or(f64::NAN);
                    }
                }
                if step == config.t {
                    final_state = Some(state.clone());
                }
            })?;
            let fin = final_state.expect("observer sees the final step");
            let mi = mutual_information(&fin, &[0], &[l - 1])?;
            let tee = if want_tee { topological_ee(&fin)? } else { 0.0 };
            Ok(TrajStats { s_half, mi, tee })
        })
        .collect::<Result<_>>()?;

    let n = n_traj as f64;
    let mean_se = |values: Vec<f64>| -> (f64, f64) {
        let mean = values.iter().sum::<f64>() / n;
        if n_traj < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };

    let mut s_half = Vec::with_capacity(sample_times.len());
    let mut s_half_se = Vec::with_capacity(sample_times.len());
    for k in 0..sample_times.len() {
        let (m, se) = mean_se(per_traj.iter().map(|t| t.s_half[k]).collect());
        s_half.push(m);
        s_half_se.push(se);
    }
    let (mi, mi_se) = mean_se(per_traj.iter().map(|t| t.mi).collect());
    let (s_topo, s_topo_se) = if want_tee {
        let (m, se) = mean_se(per_traj.iter().map(|t| t.tee).collect());
        (Some(m), Some(se))
    } else {
        (None, None)
    };
    Ok(EntropyReport {
        times: sample_times.to_vec(),
        s_half,
        s_half_se,
        mi,
        mi_se,
        s_topo,
        s_topo_se,
        n_traj,
    })
}

fn validate_subsystem(l: usize, subsystem: &[usize]) -> Result<()> {
    if subsystem.is_empty() {
        return Err(Error::domain("subsystem must be nonempty"));
    }
    let mut seen = vec![false; l];
    for &q in subsystem {
        if q >= l {
            return Err(Error::domain(format!("qubit {q} outside chain of {l}")));
        }
        if seen[q] {
            return Err(Error::domain(format!("duplicate qubit {q} in subsystem")));
        }
        seen[q] = true;
    }
    Ok(())
}

/// Reduced density matrix of the (sorted) subsystem, row-major.
fn reduced_density(state: &StateVector, subsys: &[usize]) -> Vec<Complex64> {
    let l = state.num_qubits();
    let rest: Vec<usize> = (0..l).filter(|q| !subsys.contains(q)).collect();
    let na = subsys.len();
    let nb = rest.len();
    let dim_a = 1usize << na;
    let dim_b = 1usize << nb;
    // gather amplitudes into an A x B matrix
    let mut m = vec![Complex64::new(0.0, 0.0); dim_a * dim_b];
    for (idx, &amp) in state.amplitudes().iter().enumerate() {
        let mut row = 0usize;
        for (r, &q) in subsys.iter().enumerate() {
            row |= ((idx >> (l - 1 - q)) & 1) << (na - 1 - r);
        }
        let mut col = 0usize;
        for (c, &q) in rest.iter().enumerate() {
            col |= ((idx >> (l - 1 - q)) & 1) << (nb - 1 - c);
        }
        m[row * dim_b + col] = amp;
    }
    let mut rho = vec![Complex64::new(0.0, 0.0); dim_a * dim_a];
    for r1 in 0..dim_a {
        for r2 in 0..=r1 {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..dim_b {
                acc += m[r1 * dim_b + c] * m[r2 * dim_b + c].conj();
            }
            rho[r1 * dim_a + r2] = acc;
            rho[r2 * dim_a + r1] = acc.conj();
        }
    }
    rho
}

/// Eigenvalues of a Hermitian matrix via the real symmetric embedding
/// `[[Re, -Im], [Im, Re]]` (each eigenvalue appears twice) and cyclic Jacobi
/// rotations.
fn hermitian_eigenvalues(h: &[Complex64], n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut b = vec![0.0f64; m * m];
    for i in 0..n {
        for j in 0..n {
            let v = h[i * n + j];
            b[i * m + j] = v.re;
            b[(i + n) * m + (j + n)] = v.re;
            b[i * m + (j + n)] = -v.im;
            b[(i + n) * m + j] = v.im;
        }
    }
    jacobi_eigenvalues(&mut b, m);
    let mut eigs: Vec<f64> = (0..m).map(|i| b[i * m + i]).collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // the doubled spectrum is sorted, so every other entry is one copy
    eigs.into_iter().step_by(2).collect()
}

/// In-place cyclic Jacobi diagonalization of a real symmetric matrix.
fn jacobi_eigenvalues(a: &mut [f64], n: usize) {
    let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).sum::<f64>().max(1.0);
    let tol = 1e-30 * scale * scale;
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
}
