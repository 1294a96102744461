//! Gate-level statevector simulation: gates and circuits, register
//! projection and shot sampling, depolarizing trajectories, and
//! controlled-unitary synthesis.

mod circuit;
mod gate;
mod measure;
mod noise;
mod state;
mod synth;

pub use circuit::{inverse_qft, Circuit, Register};
pub use gate::{
    hadamard, pauli_x, pauli_y, pauli_z, phase, r_direction, ry, rz, swap_matrix, x_basis_rotation,
    y_basis_rotation, Gate,
};
pub use measure::{
    bits_value, conditional, marginal, parse_bits, project_register, register_probabilities, sample_distribution,
    sample_shots, to_bits, ShotHistogram, MIN_PROJECTION_PROBABILITY,
};
pub use noise::{average_probabilities, run_circuit, run_trajectory, trajectories, NoiseModel};
pub use state::StateVector;
pub use synth::{controlled_matrix, cosine_sine, decompose_controlled_unitary, zyz_angles, CosineSine, Synthesis};

/// Total-variation distance between two distributions of equal length.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
