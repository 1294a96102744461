use serde::Serialize;

use super::gate::{self, Gate};
use super::state::StateVector;
use super::synth;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Named contiguous qubit range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Register {
    pub name: String,
    pub start: usize,
    pub width: usize,
}

impl Register {
    pub fn new(name: impl Into<String>, start: usize, width: usize) -> Self {
        Register { name: name.into(), start, width }
    }

    pub fn qubits(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.width
    }

    fn overlaps(&self, other: &Register) -> bool {
        self.start < other.start + other.width && other.start < self.start + self.width
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    registers: Vec<Register>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, gates: Vec::new(), registers: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn register(&self, name: &str) -> Option<&Register> {
        self.registers.iter().find(|r| r.name == name)
    }

    pub fn add_register(&mut self, name: &str, start: usize, width: usize) -> Result<()> {
        let reg = Register::new(name, start, width);
        if width == 0 || start + width > self.n_qubits {
            return Err(Error::validation(format!("register '{name}' does not fit in {} qubits", self.n_qubits)));
        }
        if self.registers.iter().any(|r| r.name == name || r.overlaps(&reg)) {
            return Err(Error::validation(format!("register '{name}' clashes with an existing register")));
        }
        self.registers.push(reg);
        Ok(())
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    /// Appends `fragment` with its qubit `q` relabelled to `offset + q`.
    pub fn append(&mut self, fragment: &Circuit, offset: usize) -> Result<()> {
        for g in &fragment.gates {
            self.push(relabel(g, |q| q + offset))?;
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::adjoint).collect(),
            registers: self.registers.clone(),
        }
    }

    pub fn entangling_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_entangling()).count()
    }

    /// Applies every gate in order; no noise.
    pub fn apply(&self, state: &mut StateVector) {
        for g in &self.gates {
            g.apply(state);
        }
    }

    /// Full `2^n × 2^n` matrix, column by column. Meant for small circuits.
    pub fn unitary(&self) -> ComplexMatrix {
        let dim = 1 << self.n_qubits;
        let mut out = ComplexMatrix::zeros(dim);
        for col in 0..dim {
            let mut s = StateVector::basis(self.n_qubits, col);
            self.apply(&mut s);
            for (row, a) in s.amplitudes().iter().enumerate() {
                out[(row, col)] = *a;
            }
        }
        out
    }

    /// Rewrites every multi-qubit gate into single-qubit unitaries and CNOTs, so
    /// that `entangling_count` becomes the number of CNOTs. Equal to the
    /// original up to a global phase.
    pub fn synthesize(&self) -> Result<Circuit> {
        let mut out = Circuit { n_qubits: self.n_qubits, gates: Vec::new(), registers: self.registers.clone() };
        for g in &self.gates {
            match g {
                Gate::Hadamard { .. } | Gate::Unitary { .. } | Gate::Cnot { .. } => out.push(g.clone())?,
                Gate::Controlled { control, targets, matrix } => {
                    let s = synth::decompose_controlled_unitary(matrix, targets.len())?;
                    let map: Vec<usize> = std::iter::once(*control).chain(targets.iter().copied()).collect();
                    for sg in &s.gates {
                        out.push(relabel(sg, |q| map[q]))?;
                    }
                }
                Gate::PhaseRotation { control, target, k, dagger } => {
                    let sign = if *dagger { -1.0 } else { 1.0 };
                    let m = gate::phase(sign * 2.0 * std::f64::consts::PI / 2f64.powi(*k as i32));
                    let s = synth::decompose_controlled_unitary(&m, 1)?;
                    let map = [*control, *target];
                    for sg in &s.gates {
                        out.push(relabel(sg, |q| map[q]))?;
                    }
                }
                Gate::Swap { a, b } => {
                    out.push(Gate::Cnot { control: *a, target: *b })?;
                    out.push(Gate::Cnot { control: *b, target: *a })?;
                    out.push(Gate::Cnot { control: *a, target: *b })?;
                }
            }
        }
        Ok(out)
    }

    /// Line-per-gate debug dump.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for r in &self.registers {
            s.push_str(&format!("REGISTER {} {}..{}\n", r.name, r.start, r.start + r.width));
        }
        for g in &self.gates {
            s.push_str(&g.dump());
            s.push('\n');
        }
        s
    }
}

pub(crate) fn relabel(g: &Gate, f: impl Fn(usize) -> usize) -> Gate {
    match g {
        Gate::Hadamard { qubit } => Gate::Hadamard { qubit: f(*qubit) },
        Gate::Unitary { qubit, matrix } => Gate::Unitary { qubit: f(*qubit), matrix: matrix.clone() },
        Gate::Controlled { control, targets, matrix } => Gate::Controlled {
            control: f(*control),
            targets: targets.iter().map(|&q| f(q)).collect(),
            matrix: matrix.clone(),
        },
        Gate::PhaseRotation { control, target, k, dagger } => {
            Gate::PhaseRotation { control: f(*control), target: f(*target), k: *k, dagger: *dagger }
        }
        Gate::Cnot { control, target } => Gate::Cnot { control: f(*control), target: f(*target) },
        Gate::Swap { a, b } => Gate::Swap { a: f(*a), b: f(*b) },
    }
}

/// Swap-free inverse QFT on `n` qubits.
///
/// Pairs with phase kickback where qubit `i` controls `U^{2^i}`: the register
/// then reads the phase with qubit 0 as the most significant bit.
pub fn inverse_qft(n: usize) -> Circuit {
    let mut c = Circuit::new(n);
    for i in (0..n).rev() {
        for m in ((i + 1)..n).rev() {
            c.gates.push(Gate::PhaseRotation { control: m, target: i, k: (m - i + 1) as u32, dagger: true });
        }
        c.gates.push(Gate::h(i));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_bit_inverse_qft_is_hadamard() {
        let c = inverse_qft(1);
        assert_eq!(c.gates(), &[Gate::h(0)]);
    }

    #[test]
    fn registers_must_be_disjoint() {
        let mut c = Circuit::new(3);
        c.add_register("eigenvalue", 0, 2).unwrap();
        assert!(c.add_register("eigenvector", 1, 2).is_err());
        assert!(c.add_register("eigenvector", 2, 2).is_err());
        c.add_register("eigenvector", 2, 1).unwrap();
    }

    #[test]
    fn swap_synthesis_matches() {
        let mut c = Circuit::new(2);
        c.push(Gate::Swap { a: 0, b: 1 }).unwrap();
        let s = c.synthesize().unwrap();
        assert_eq!(s.entangling_count(), 3);
        assert!(s.unitary().max_abs_diff(&c.unitary()) < 1e-14);
    }
}
