use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on the simulated system size (2^24 amplitudes = 256 MiB).
pub const MAX_QUBITS: usize = 24;

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Pure state of `l` qubits as a dense amplitude vector.
///
/// Qubit 0 is the most significant bit of the basis index, so qubit `j`
/// occupies bit position `l - 1 - j`.
#[derive(Clone, Debug)]
pub struct StateVector {
    l: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The circuit's initial product state `((|0> + i|1>)/sqrt(2))^(x L)`,
    /// i.e. every qubit polarized along +Y.
    pub fn initial(l: usize) -> Result<Self> {
        let mut state = Self::computational(l, 0)?;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // amplitude of |b> is prod_j (1/sqrt2) * i^{b_j}
        for (idx, amp) in state.amps.iter_mut().enumerate() {
            let ones = (idx as u64).count_ones();
            let phase = match ones % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, 1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, -1.0),
            };
            *amp = phase * h.powi(l as i32);
        }
        Ok(state)
    }

    /// Computational basis state `|basis>`.
    pub fn computational(l: usize, basis: u64) -> Result<Self> {
        if l == 0 || l > MAX_QUBITS {
            return Err(Error::Resource(format!(
                "qubit count {l} outside supported range 1..={MAX_QUBITS}"
            )));
        }
        let dim = 1usize << l;
        let mut amps = vec![C_ZERO; dim];
        amps[basis as usize] = Complex64::new(1.0, 0.0);
        Ok(StateVector { l, amps })
    }

    pub fn from_amplitudes(l: usize, amps: Vec<Complex64>) -> Result<Self> {
        if l == 0 || l > MAX_QUBITS {
            return Err(Error::Resource(format!(
                "qubit count {l} outside supported range 1..={MAX_QUBITS}"
            )));
        }
        if amps.len() != 1 << l {
            return Err(Error::domain(format!(
                "amplitude vector length {} does not match 2^{l}",
                amps.len()
            )));
        }
        Ok(StateVector { l, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.l
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
    }

    /// Overlap `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm()
    }

    /// Applies a dense `2^arity x 2^arity` operator (row-major) to the
    /// contiguous qubits `site..site+arity`, in place.
    pub fn apply_local(&mut self, matrix: &[Complex64], arity: usize, site: usize) {
        debug_assert!(arity >= 1 && arity <= 3);
        debug_assert!(site + arity <= self.l);
        debug_assert_eq!(matrix.len(), 1 << (2 * arity));
        let dim = 1usize << arity;
        let low_bits = self.l - site - arity;
        let low_count = 1usize << low_bits;
        let high_count = 1usize << site;
        let mut buf = [C_ZERO; 8];
        for h in 0..high_count {
            let hbase = h << (arity + low_bits);
            for lo in 0..low_count {
                let base = hbase | lo;
                for (s, b) in buf.iter_mut().enumerate().take(dim) {
                    *b = self.amps[base | (s << low_bits)];
                }
                for r in 0..dim {
                    let mut acc = C_ZERO;
                    let row = &matrix[r * dim..(r + 1) * dim];
                    for (c, b) in buf.iter().enumerate().take(dim) {
                        acc += row[c] * b;
                    }
                    self.amps[base | (r << low_bits)] = acc;
                }
            }
        }
    }

    /// Expectation value `<psi|A|psi>` of a dense local operator on the
    /// contiguous qubits `site..site+arity`. Returns the real part (callers
    /// pass Hermitian operators).
    pub fn expectation_local(&self, matrix: &[Complex64], arity: usize, site: usize) -> f64 {
        debug_assert!(arity >= 1 && arity <= 3);
        debug_assert!(site + arity <= self.l);
        let dim = 1usize << arity;
        let low_bits = self.l - site - arity;
        let low_count = 1usize << low_bits;
        let high_count = 1usize << site;
        let mut buf = [C_ZERO; 8];
        let mut acc = 0.0;
        for h in 0..high_count {
            let hbase = h << (arity + low_bits);
            for lo in 0..low_count {
                let base = hbase | lo;
                for (s, b) in buf.iter_mut().enumerate().take(dim) {
                    *b = self.amps[base | (s << low_bits)];
                }
                for r in 0..dim {
                    let mut row_acc = C_ZERO;
                    let row = &matrix[r * dim..(r + 1) * dim];
                    for (c, b) in buf.iter().enumerate().take(dim) {
                        row_acc += row[c] * b;
                    }
                    acc += (buf[r].conj() * row_acc).re;
                }
            }
        }
        acc
    }
}
