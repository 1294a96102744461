use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::circuit::Register;
use super::state::StateVector;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Projections with less weight than this are treated as impossible.
pub const MIN_PROJECTION_PROBABILITY: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotHistogram {
    pub basis: String,
    pub width: usize,
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
}

impl ShotHistogram {
    pub fn count(&self, bits: &str) -> u64 {
        self.counts.get(bits).copied().unwrap_or(0)
    }

    pub fn frequency(&self, bits: &str) -> f64 {
        self.count(bits) as f64 / self.shots as f64
    }

    /// Relative frequencies indexed by basis state.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..1usize << self.width).map(|i| self.frequency(&to_bits(i, self.width))).collect()
    }

    /// Most frequent outcome; ties go to the lexicographically smallest string.
    pub fn modal(&self) -> Option<&str> {
        let mut best: Option<(&str, u64)> = None;
        for (k, &v) in &self.counts {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k.as_str(), v));
            }
        }
        best.map(|(k, _)| k)
    }
}

pub fn to_bits(index: usize, width: usize) -> String {
    (0..width).map(|i| if index >> (width - 1 - i) & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bits(bits: &str, width: usize) -> Result<usize> {
    if bits.len() != width || !bits.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::validation(format!("'{bits}' is not a {width}-bit string")));
    }
    Ok(usize::from_str_radix(bits, 2).unwrap_or(0))
}

/// Value `Σ b_k 2^{-k}` of a binary fraction `0.b₁b₂…`.
pub fn bits_value(bits: &str) -> f64 {
    bits.chars()
        .enumerate()
        .map(|(k, c)| if c == '1' { 0.5f64.powi(k as i32 + 1) } else { 0.0 })
        .sum()
}

fn check_register(n_qubits: usize, reg: &Register) -> Result<()> {
    if reg.width == 0 || reg.start + reg.width > n_qubits {
        return Err(Error::validation(format!("register '{}' out of range", reg.name)));
    }
    Ok(())
}

fn register_index(index: usize, n_qubits: usize, reg: &Register) -> usize {
    (index >> (n_qubits - reg.start - reg.width)) & ((1 << reg.width) - 1)
}

/// Marginal distribution of `reg` from a full distribution over `n_qubits`.
pub fn marginal(probs: &[f64], n_qubits: usize, reg: &Register) -> Result<Vec<f64>> {
    check_register(n_qubits, reg)?;
    let mut out = vec![0.0; 1 << reg.width];
    for (i, p) in probs.iter().enumerate() {
        out[register_index(i, n_qubits, reg)] += p;
    }
    Ok(out)
}

pub fn register_probabilities(s: &StateVector, reg: &Register) -> Result<Vec<f64>> {
    marginal(&s.probabilities(), s.n_qubits(), reg)
}

/// Distribution of the qubits outside `reg`, conditioned on `reg` reading
/// `bits`, plus the probability of that reading.
pub fn conditional(probs: &[f64], n_qubits: usize, reg: &Register, bits: &str) -> Result<(Vec<f64>, f64)> {
    check_register(n_qubits, reg)?;
    let want = parse_bits(bits, reg.width)?;
    let rest = n_qubits - reg.width;
    let mut out = vec![0.0; 1 << rest];
    for (i, p) in probs.iter().enumerate() {
        if register_index(i, n_qubits, reg) == want {
            out[remaining_index(i, n_qubits, reg)] += p;
        }
    }
    let total: f64 = out.iter().sum();
    if total < MIN_PROJECTION_PROBABILITY {
        return Err(Error::DegenerateProjection { bitstring: bits.to_string(), probability: total });
    }
    Ok((out.into_iter().map(|p| p / total).collect(), total))
}

fn remaining_index(i: usize, n_qubits: usize, reg: &Register) -> usize {
    let low_bits = n_qubits - reg.start - reg.width;
    let low = i & ((1 << low_bits) - 1);
    let high = i >> (low_bits + reg.width);
    (high << low_bits) | low
}

/// Projects `reg` onto `bits` and renormalizes the remaining qubits.
pub fn project_register(s: &StateVector, reg: &Register, bits: &str) -> Result<(StateVector, f64)> {
    let n = s.n_qubits();
    check_register(n, reg)?;
    if reg.width == n {
        return Err(Error::validation("projection must leave at least one qubit"));
    }
    let want = parse_bits(bits, reg.width)?;
    let mut out = vec![Complex64::new(0.0, 0.0); 1 << (n - reg.width)];
    for (i, a) in s.amplitudes().iter().enumerate() {
        if register_index(i, n, reg) == want {
            out[remaining_index(i, n, reg)] = *a;
        }
    }
    let probability: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    if probability < MIN_PROJECTION_PROBABILITY {
        return Err(Error::DegenerateProjection { bitstring: bits.to_string(), probability });
    }
    let norm = probability.sqrt();
    let state = StateVector::new(out.into_iter().map(|z| z / norm).collect())?;
    Ok((state, probability))
}

/// Draws `shots` outcomes from `probs` over a `width`-bit register.
pub fn sample_distribution(probs: &[f64], width: usize, shots: u64, seed: u64, basis: &str) -> Result<ShotHistogram> {
    if shots == 0 {
        return Err(Error::validation("shots must be at least 1"));
    }
    let weights: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::numerical(format!("bad distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = vec![0u64; probs.len()];
    for _ in 0..shots {
        tally[dist.sample(&mut rng)] += 1;
    }
    let counts = tally
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, c)| (to_bits(i, width), c))
        .collect();
    Ok(ShotHistogram { basis: basis.to_string(), width, counts, shots })
}

/// Measures `reg` after applying `rotation[i]` to its `i`-th qubit.
pub fn sample_shots(
    s: &StateVector,
    reg: &Register,
    rotation: Option<&[ComplexMatrix]>,
    shots: u64,
    seed: u64,
) -> Result<ShotHistogram> {
    check_register(s.n_qubits(), reg)?;
    let mut rotated = s.clone();
    let basis = match rotation {
        None => "z".to_string(),
        Some(rots) => {
            if rots.len() != reg.width {
                return Err(Error::validation("one basis rotation per register qubit is required"));
            }
            for (q, m) in reg.qubits().zip(rots) {
                rotated.apply(&[], &[q], m);
            }
            "rotated".to_string()
        }
    };
    let probs = register_probabilities(&rotated, reg)?;
    sample_distribution(&probs, reg.width, shots, seed, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_helpers() {
        assert_eq!(to_bits(3, 3), "011");
        assert_eq!(parse_bits("110", 3).unwrap(), 6);
        assert!(parse_bits("12", 2).is_err());
        assert!((bits_value("111") - 0.875).abs() < 1e-15);
        assert_eq!(bits_value("00"), 0.0);
    }

    #[test]
    fn projection_of_product_state() {
        let psi = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let s = StateVector::basis(2, 0b11).tensor(&psi);
        let reg = Register::new("eigenvalue", 0, 2);
        let (out, p) = project_register(&s, &reg, "11").unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!(out.fidelity(&psi) > 1.0 - 1e-15);
        assert!(matches!(project_register(&s, &reg, "01"), Err(Error::DegenerateProjection { .. })));
    }

    #[test]
    fn middle_register_projection_keeps_outer_qubits() {
        // |1⟩|0⟩|1⟩ projected on the middle qubit leaves |11⟩.
        let s = StateVector::basis(3, 0b101);
        let (out, _) = project_register(&s, &Register::new("m", 1, 1), "0").unwrap();
        assert_eq!(out.probabilities(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_shots_rejected() {
        assert!(sample_distribution(&[1.0], 0, 0, 1, "z").is_err());
    }
}
