use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::circuit::Circuit;
use super::gate::{pauli_x, pauli_y, pauli_z};
use super::state::StateVector;
use crate::error::{Error, Result};

/// Depolarizing error after every gate that touches two or more qubits.
///
/// With probability `p` each touched qubit independently receives a uniform
/// draw from `{I, X, Y, Z}`, i.e. the touched qubits are replaced by the
/// maximally mixed state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub two_qubit_depolarizing_p: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("depolarizing probability {p} outside [0, 1]")));
        }
        Ok(NoiseModel { two_qubit_depolarizing_p: p, seed })
    }

    /// Independent generator for trajectory `index`.
    pub fn trajectory_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn check_dims(c: &Circuit, input: &StateVector) -> Result<()> {
    if input.n_qubits() != c.n_qubits() {
        return Err(Error::validation(format!(
            "input has {} qubits, circuit has {}",
            input.n_qubits(),
            c.n_qubits()
        )));
    }
    Ok(())
}

/// Runs `c` on `input`. With a noise model this is one stochastic trajectory
/// drawn from the model's seed.
pub fn run_circuit(c: &Circuit, input: &StateVector, noise: Option<&NoiseModel>) -> Result<StateVector> {
    check_dims(c, input)?;
    let mut s = input.clone();
    match noise {
        None => c.apply(&mut s),
        Some(n) => {
            let mut rng = n.trajectory_rng(0);
            apply_noisy(c, &mut s, n.two_qubit_depolarizing_p, &mut rng);
        }
    }
    Ok(s)
}

pub fn run_trajectory<R: Rng>(c: &Circuit, input: &StateVector, p: f64, rng: &mut R) -> Result<StateVector> {
    check_dims(c, input)?;
    let mut s = input.clone();
    apply_noisy(c, &mut s, p, rng);
    Ok(s)
}

fn apply_noisy<R: Rng>(c: &Circuit, s: &mut StateVector, p: f64, rng: &mut R) {
    let paulis = [pauli_x(), pauli_y(), pauli_z()];
    for g in c.gates() {
        g.apply(s);
        if g.is_entangling() && rng.random::<f64>() < p {
            for q in g.qubits() {
                let which = rng.random_range(0..4usize);
                if which > 0 {
                    s.apply(&[], &[q], &paulis[which - 1]);
                }
            }
        }
    }
}

/// `count` independent trajectories; trajectory `i` uses stream `i` of the
/// model's seed, so results do not depend on thread scheduling.
pub fn trajectories(c: &Circuit, input: &StateVector, noise: &NoiseModel, count: usize) -> Result<Vec<StateVector>> {
    check_dims(c, input)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = noise.trajectory_rng(i);
            let mut s = input.clone();
            apply_noisy(c, &mut s, noise.two_qubit_depolarizing_p, &mut rng);
            s
        })
        .collect())
}

/// Mean computational-basis distribution over `count` trajectories.
pub fn average_probabilities(c: &Circuit, input: &StateVector, noise: &NoiseModel, count: usize) -> Result<Vec<f64>> {
    let states = trajectories(c, input, noise, count)?;
    let mut acc = vec![0.0; 1 << c.n_qubits()];
    for s in &states {
        for (a, p) in acc.iter_mut().zip(s.probabilities()) {
            *a += p;
        }
    }
    let n = count.max(1) as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::gate::Gate;

    #[test]
    fn rejects_probability_outside_unit_interval() {
        assert!(NoiseModel::new(1.2, 0).is_err());
        assert!(NoiseModel::new(-0.1, 0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_validation_error() {
        let c = Circuit::new(2);
        assert!(matches!(run_circuit(&c, &StateVector::zero(3), None), Err(Error::Validation(_))));
    }

    #[test]
    fn seeded_trajectory_is_reproducible() {
        let mut c = Circuit::new(2);
        c.push(Gate::h(0)).unwrap();
        c.push(Gate::Cnot { control: 0, target: 1 }).unwrap();
        let n = NoiseModel::new(0.5, 9).unwrap();
        let a = average_probabilities(&c, &StateVector::zero(2), &n, 200).unwrap();
        let b = average_probabilities(&c, &StateVector::zero(2), &n, 200).unwrap();
        assert_eq!(a, b);
    }
}
