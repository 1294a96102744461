use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};

/// Normalized amplitude vector over `n_qubits` qubits. Qubit 0 is the most
/// significant bit of the basis index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

pub const NORM_TOL: f64 = 1e-10;

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amplitudes }
    }

    /// Validates length (power of two) and norm.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amplitudes.len())?;
        let norm = linalg::vector_norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(format!("state norm {norm} is not 1")));
        }
        Ok(StateVector { n_qubits, amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = linalg::vector_norm(&amplitudes);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::validation("cannot normalize a zero or non-finite vector"));
        }
        let scaled = amplitudes.into_iter().map(|z| z / norm).collect();
        Self::new(scaled)
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::normalized(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Uniform superposition `H^{⊗n}|0⟩`.
    pub fn uniform(n_qubits: usize) -> Self {
        let len = 1usize << n_qubits;
        let a = Complex64::new(1.0 / (len as f64).sqrt(), 0.0);
        StateVector { n_qubits, amplitudes: vec![a; len] }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        linalg::vector_norm(&self.amplitudes)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `self ⊗ other`, with `self` on the leading (more significant) qubits.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut amplitudes = Vec::with_capacity(self.amplitudes.len() * other.amplitudes.len());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        StateVector { n_qubits: self.n_qubits + other.n_qubits, amplitudes }
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        linalg::fidelity(&self.amplitudes, &other.amplitudes)
    }

    pub fn scaled(&self, phase: Complex64) -> StateVector {
        StateVector {
            n_qubits: self.n_qubits,
            amplitudes: self.amplitudes.iter().map(|z| z * phase).collect(),
        }
    }

    /// Applies `m` to the qubits `targets` (first target = most significant
    /// bit of `m`'s index) on the subspace where every qubit in `controls` is 1.
    pub fn apply(&mut self, controls: &[usize], targets: &[usize], m: &ComplexMatrix) {
        let n = self.n_qubits;
        let k = targets.len();
        debug_assert_eq!(m.dim(), 1 << k);
        let target_masks: Vec<usize> = targets.iter().map(|&q| 1 << (n - 1 - q)).collect();
        let control_mask: usize = controls.iter().map(|&q| 1 << (n - 1 - q)).sum();
        let target_mask: usize = target_masks.iter().sum();
        let sub = 1usize << k;
        let offsets: Vec<usize> = (0..sub)
            .map(|s| {
                (0..k)
                    .filter(|&i| s & (1 << (k - 1 - i)) != 0)
                    .map(|i| target_masks[i])
                    .sum()
            })
            .collect();
        let mut gathered = vec![Complex64::new(0.0, 0.0); sub];
        for base in 0..self.amplitudes.len() {
            if base & target_mask != 0 || base & control_mask != control_mask {
                continue;
            }
            for (s, off) in offsets.iter().enumerate() {
                gathered[s] = self.amplitudes[base | off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (s, g) in gathered.iter().enumerate() {
                    acc += m[(r, s)] * g;
                }
                self.amplitudes[base | off] = acc;
            }
        }
    }
}

pub(crate) fn qubits_for_len(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::validation(format!("length {len} is not a power of two")));
    }
    Ok(len.trailing_zeros() as usize)
}
