use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use super::state::StateVector;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    Hadamard { qubit: usize },
    Unitary { qubit: usize, matrix: ComplexMatrix },
    /// `matrix` acts on `targets` (first target = most significant) when `control` is 1.
    Controlled { control: usize, targets: Vec<usize>, matrix: ComplexMatrix },
    /// Controlled `R_k = diag(1, e^{2πi/2^k})`, or its adjoint when `dagger`.
    PhaseRotation { control: usize, target: usize, k: u32, dagger: bool },
    Cnot { control: usize, target: usize },
    Swap { a: usize, b: usize },
}

impl Gate {
    pub fn h(qubit: usize) -> Gate {
        Gate::Hadamard { qubit }
    }

    pub fn unitary(qubit: usize, matrix: ComplexMatrix) -> Result<Gate> {
        if matrix.dim() != 2 || !matrix.is_unitary(UNITARY_TOL) {
            return Err(Error::validation("single-qubit payload must be a 2x2 unitary"));
        }
        Ok(Gate::Unitary { qubit, matrix })
    }

    pub fn controlled(control: usize, targets: Vec<usize>, matrix: ComplexMatrix) -> Result<Gate> {
        if matrix.dim() != 1 << targets.len() {
            return Err(Error::validation(format!(
                "controlled payload is {0}x{0} but there are {1} targets",
                matrix.dim(),
                targets.len()
            )));
        }
        if !matrix.is_unitary(UNITARY_TOL) {
            return Err(Error::validation("controlled payload is not unitary"));
        }
        Ok(Gate::Controlled { control, targets, matrix })
    }

    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::Hadamard { qubit } | Gate::Unitary { qubit, .. } => vec![*qubit],
            Gate::Controlled { control, targets, .. } => {
                let mut q = vec![*control];
                q.extend(targets);
                q
            }
            Gate::PhaseRotation { control, target, .. } | Gate::Cnot { control, target } => {
                vec![*control, *target]
            }
            Gate::Swap { a, b } => vec![*a, *b],
        }
    }

    /// Touches two or more qubits.
    pub fn is_entangling(&self) -> bool {
        self.qubits().len() >= 2
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Gate::Hadamard { .. } => "h",
            Gate::Unitary { .. } => "u",
            Gate::Controlled { .. } => "cu",
            Gate::PhaseRotation { dagger: false, .. } => "cr",
            Gate::PhaseRotation { dagger: true, .. } => "crdg",
            Gate::Cnot { .. } => "cx",
            Gate::Swap { .. } => "swap",
        }
    }

    pub(crate) fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= n_qubits {
                return Err(Error::validation(format!("qubit {q} out of range for {n_qubits} qubits")));
            }
            if qs[..i].contains(&q) {
                return Err(Error::validation(format!("qubit {q} repeated in {} gate", self.kind())));
            }
        }
        if let Gate::PhaseRotation { k, .. } = self {
            if *k == 0 || *k > 52 {
                return Err(Error::validation(format!("phase rotation order k={k} out of range")));
            }
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Gate {
        match self {
            Gate::Unitary { qubit, matrix } => Gate::Unitary { qubit: *qubit, matrix: matrix.adjoint() },
            Gate::Controlled { control, targets, matrix } => Gate::Controlled {
                control: *control,
                targets: targets.clone(),
                matrix: matrix.adjoint(),
            },
            Gate::PhaseRotation { control, target, k, dagger } => {
                Gate::PhaseRotation { control: *control, target: *target, k: *k, dagger: !dagger }
            }
            g => g.clone(),
        }
    }

    /// Matrix acting on `targets()` when the controls are set.
    fn payload(&self) -> (Vec<usize>, Vec<usize>, ComplexMatrix) {
        match self {
            Gate::Hadamard { qubit } => (vec![], vec![*qubit], hadamard()),
            Gate::Unitary { qubit, matrix } => (vec![], vec![*qubit], matrix.clone()),
            Gate::Controlled { control, targets, matrix } => (vec![*control], targets.clone(), matrix.clone()),
            Gate::PhaseRotation { control, target, k, dagger } => {
                let sign = if *dagger { -1.0 } else { 1.0 };
                (vec![*control], vec![*target], phase(sign * 2.0 * PI / 2f64.powi(*k as i32)))
            }
            Gate::Cnot { control, target } => (vec![*control], vec![*target], pauli_x()),
            Gate::Swap { a, b } => (vec![], vec![*a, *b], swap_matrix()),
        }
    }

    pub fn apply(&self, state: &mut StateVector) {
        let (controls, targets, m) = self.payload();
        state.apply(&controls, &targets, &m);
    }

    /// One-line text form `GATE kind qubits [matrix]`.
    pub fn dump(&self) -> String {
        let qubits = self.qubits().iter().map(|q| q.to_string()).collect::<Vec<_>>().join(",");
        let matrix = match self {
            Gate::Unitary { matrix, .. } | Gate::Controlled { matrix, .. } => format!(" {}", format_matrix(matrix)),
            Gate::PhaseRotation { k, .. } => format!(" k={k}"),
            _ => String::new(),
        };
        format!("GATE {} {}{}", self.kind(), qubits, matrix)
    }
}

fn format_matrix(m: &ComplexMatrix) -> String {
    let rows: Vec<String> = m
        .rows()
        .iter()
        .map(|r| {
            let entries: Vec<String> = r.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
            format!("[{}]", entries.join(" "))
        })
        .collect();
    format!("[{}]", rows.join(" "))
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn hadamard() -> ComplexMatrix {
    let h = FRAC_1_SQRT_2;
    ComplexMatrix::from_rows(&[vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]]).unwrap()
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(-1.0, 0.0)])
}

/// `diag(1, e^{iφ})`.
pub fn phase(phi: f64) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[c(1.0, 0.0), Complex64::from_polar(1.0, phi)])
}

/// `Rz(θ) = diag(e^{-iθ/2}, e^{iθ/2})`.
pub fn rz(theta: f64) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[Complex64::from_polar(1.0, -theta / 2.0), Complex64::from_polar(1.0, theta / 2.0)])
}

/// `Ry(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`.
pub fn ry(theta: f64) -> ComplexMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    ComplexMatrix::from_rows(&[vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]).unwrap()
}

pub fn swap_matrix() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 2)] = c(1.0, 0.0);
    m[(2, 1)] = c(1.0, 0.0);
    m[(3, 3)] = c(1.0, 0.0);
    m
}

/// Pre-measurement rotation that maps the x eigenbasis onto z.
pub fn x_basis_rotation() -> ComplexMatrix {
    hadamard()
}

/// Pre-measurement rotation `H·S†` that maps the y eigenbasis onto z.
pub fn y_basis_rotation() -> ComplexMatrix {
    &hadamard() * &phase(-PI / 2.0)
}

/// The general single-qubit direction `r(α, β, γ)` in U3 form.
pub fn r_direction(alpha: f64, beta: f64, gamma: f64) -> ComplexMatrix {
    let (s, co) = alpha.sin_cos();
    ComplexMatrix::from_rows(&[
        vec![c(co, 0.0), -Complex64::from_polar(s, gamma)],
        vec![Complex64::from_polar(s, beta), Complex64::from_polar(co, beta + gamma)],
    ])
    .unwrap()
}
