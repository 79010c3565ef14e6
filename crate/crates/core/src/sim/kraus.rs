use num_complex::Complex64;

use crate::error::{Error, Result};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// The three measured Pauli strings of the brickwork circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observable {
    /// Single-qubit `X_i`.
    X,
    /// Nearest-neighbor `Z_i Z_{i+1}`.
    Zz,
    /// Three-qubit `Z_i X_{i+1} Z_{i+2}`.
    Zxz,
}

impl Observable {
    pub fn arity(self) -> usize {
        match self {
            Observable::X => 1,
            Observable::Zz => 2,
            Observable::Zxz => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::X => "X",
            Observable::Zz => "ZZ",
            Observable::Zxz => "ZXZ",
        }
    }

    /// Dense `2^arity x 2^arity` matrix of the Pauli string, with the leftmost
    /// qubit of the string as the most significant bit.
    pub fn pauli_matrix(self) -> Vec<Complex64> {
        let x = [C_ZERO, C_ONE, C_ONE, C_ZERO];
        let z = [C_ONE, C_ZERO, C_ZERO, -C_ONE];
        match self {
            Observable::X => x.to_vec(),
            Observable::Zz => kron(&z, &z, 2, 2),
            Observable::Zxz => kron(&kron(&z, &x, 2, 2), &z, 4, 2),
        }
    }
}

/// Kronecker product of row-major square matrices (`a` is `na x na`).
fn kron(a: &[Complex64], b: &[Complex64], na: usize, nb: usize) -> Vec<Complex64> {
    let n = na * nb;
    let mut out = vec![C_ZERO; n * n];
    for i in 0..na {
        for j in 0..na {
            for k in 0..nb {
                for l in 0..nb {
                    out[(i * nb + k) * n + (j * nb + l)] = a[i * na + j] * b[k * nb + l];
                }
            }
        }
    }
    out
}

/// Mixing angle `theta = (1 - gamma) * pi / 4` of a weak measurement of
/// strength `gamma`.
pub fn theta_of_gamma(gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::domain(format!(
            "measurement strength must lie in [0,1], got {gamma}"
        )));
    }
    Ok((1.0 - gamma) * std::f64::consts::FRAC_PI_4)
}

/// Kraus pair of a generalized weak measurement:
/// `M1 = cos(theta) P+ + sin(theta) P-` and `M2 = sin(theta) P+ + cos(theta) P-`
/// with `P± = (I ± Q)/2`. At `gamma = 1` the pair reduces to the projectors;
/// at `gamma = 0` both operators equal `I/sqrt(2)`.
#[derive(Clone, Debug)]
pub struct KrausPair {
    pub m1: Vec<Complex64>,
    pub m2: Vec<Complex64>,
    /// `2^arity` rows/columns.
    pub arity: usize,
    pub theta: f64,
    pub gamma: f64,
    /// The measured Pauli string, cached for branch-probability evaluation.
    q: Vec<Complex64>,
}

pub fn kraus_pair(observable: Observable, gamma: f64) -> Result<KrausPair> {
    let theta = theta_of_gamma(gamma)?;
    let arity = observable.arity();
    let dim = 1usize << arity;
    let q = observable.pauli_matrix();
    let (c, s) = (theta.cos(), theta.sin());
    let mut m1 = vec![C_ZERO; dim * dim];
    let mut m2 = vec![C_ZERO; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let ident = if i == j { C_ONE } else { C_ZERO };
            let p_plus = (ident + q[i * dim + j]) * 0.5;
            let p_minus = (ident - q[i * dim + j]) * 0.5;
            m1[i * dim + j] = p_plus * c + p_minus * s;
            m2[i * dim + j] = p_plus * s + p_minus * c;
        }
    }
    Ok(KrausPair {
        m1,
        m2,
        arity,
        theta,
        gamma,
        q,
    })
}

impl KrausPair {
    /// The measured Pauli string as a dense matrix.
    pub fn pauli(&self) -> &[Complex64] {
        &self.q
    }

    /// `M_k^dag M_k` for outcome `k` (1 or 2), row-major.
    pub fn effect(&self, k: u8) -> Vec<Complex64> {
        let dim = 1usize << self.arity;
        let m = if k == 1 { &self.m1 } else { &self.m2 };
        let mut out = vec![C_ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = C_ZERO;
                for r in 0..dim {
                    acc += m[r * dim + i].conj() * m[r * dim + j];
                }
                out[i * dim + j] = acc;
            }
        }
        out
    }

    /// Max-norm deviation of `M1^dag M1 + M2^dag M2` from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let dim = 1usize << self.arity;
        let e1 = self.effect(1);
        let e2 = self.effect(2);
        let mut max = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let ident = if i == j { C_ONE } else { C_ZERO };
                let d = (e1[i * dim + j] + e2[i * dim + j] - ident).norm();
                max = max.max(d);
            }
        }
        max
    }
}
