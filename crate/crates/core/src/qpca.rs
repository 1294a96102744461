//! Phase-estimation quantum PCA.
//!
//! The eigenvalue register (`n` qubits, qubit 0 most significant) is put in
//! uniform superposition, qubit `k` controls `e^{i t ρ 2^k}` on the
//! eigenvector register, and a swap-free inverse QFT writes the phase
//! estimate back. Post-selecting the eigenvalue register on a bitstring `y`
//! filters the eigenvector register towards the eigenvectors whose phase
//! reads as `y`. Iterating the filter converges on the leading eigenvector.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, eigh, expm_unitary, ComplexMatrix, DensityMatrix};
use crate::qsim::{
    self, bits_value, conditional, inverse_qft, marginal, project_register, r_direction, run_trajectory,
    sample_distribution, to_bits, x_basis_rotation, y_basis_rotation, Circuit, Gate, NoiseModel, Register,
    ShotHistogram, StateVector,
};

/// Angles of the auxiliary measurement direction used in phase recovery.
pub const R_ALPHA: f64 = 1.00;
pub const R_BETA: f64 = 0.80;
pub const R_GAMMA: f64 = 0.16;

/// Cross-fidelity at or above which two random starts are taken to have
/// found the same eigenvector.
pub const AMBIGUITY_THRESHOLD: f64 = 0.98;
/// Phase uncertainties above this (radians) mark the phase as unresolved.
pub const PHASE_RESOLUTION: f64 = 0.5;

const AMBIGUITY_MAX_ROUNDS: usize = 100;
const AMBIGUITY_STOP: f64 = 1e-10;
const MAX_BITS: usize = 12;

pub const EIGENVALUE_REGISTER: &str = "eigenvalue";
pub const EIGENVECTOR_REGISTER: &str = "eigenvector";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpcaConfig {
    pub n_bits: usize,
    /// `t` in `e^{itρ}`.
    pub evolution_time: f64,
    pub max_iterations: usize,
    /// Raw shots per measurement setting, before post-selection.
    pub shots: u64,
    /// Stop once `1 - fidelity(b_k, b_{k-1})` is at most this.
    pub convergence_tol: f64,
    pub target_bitstring: Option<String>,
    pub noise: Option<NoiseModel>,
    pub seed: u64,
    /// Noise trajectories averaged per measurement setting.
    pub trajectories: usize,
    /// Run the two-start ambiguity check before accepting a quantum factor.
    pub ambiguity_check: bool,
}

impl Default for QpcaConfig {
    fn default() -> Self {
        QpcaConfig {
            n_bits: 2,
            evolution_time: 2.0 * PI,
            max_iterations: 10,
            shots: 8192,
            convergence_tol: 0.01,
            target_bitstring: None,
            noise: None,
            seed: 0,
            trajectories: 10_000,
            ambiguity_check: true,
        }
    }
}

impl QpcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bits == 0 || self.n_bits > MAX_BITS {
            return Err(Error::validation(format!("n_bits must be in 1..={MAX_BITS}, got {}", self.n_bits)));
        }
        if !self.evolution_time.is_finite() {
            return Err(Error::validation("evolution_time must be finite"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be at least 1"));
        }
        if self.shots == 0 {
            return Err(Error::validation("shots must be at least 1"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol < 1.0) {
            return Err(Error::validation("convergence_tol must lie in (0, 1)"));
        }
        if self.trajectories == 0 {
            return Err(Error::validation("trajectories must be at least 1"));
        }
        if let Some(y) = &self.target_bitstring {
            qsim::parse_bits(y, self.n_bits)?;
        }
        Ok(())
    }
}

/// Value of an eigenvalue bitstring, reading the all-zeros string as 1
/// (at `t = 2π` a unit eigenvalue aliases to phase 0).
pub fn bitstring_eigenvalue(bits: &str) -> f64 {
    let v = bits_value(bits);
    if v == 0.0 {
        1.0
    } else {
        v
    }
}

/// Bitstring `y` minimizing the circular distance `|λ - 0.y|` mod 1.
pub fn nearest_bitstring(lambda: f64, n_bits: usize) -> String {
    let size = 1u64 << n_bits;
    let k = (lambda * size as f64).round().rem_euclid(size as f64) as usize;
    to_bits(k, n_bits)
}

fn eigenvector_qubits(rho: &DensityMatrix) -> Result<usize> {
    let d = rho.dim();
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::validation(format!("density matrix dimension {d} is not a power of two (zero-pad it)")));
    }
    Ok(d.trailing_zeros() as usize)
}

/// The phase-estimation circuit over `n_bits + log2(dim ρ)` qubits with
/// registers `eigenvalue` and `eigenvector`.
pub fn build_qpca_circuit(rho: &DensityMatrix, cfg: &QpcaConfig) -> Result<Circuit> {
    cfg.validate()?;
    let m = eigenvector_qubits(rho)?;
    let n = cfg.n_bits;
    let mut c = Circuit::new(n + m);
    c.add_register(EIGENVALUE_REGISTER, 0, n)?;
    c.add_register(EIGENVECTOR_REGISTER, n, m)?;
    for q in 0..n {
        c.push(Gate::h(q))?;
    }
    for k in (0..n).rev() {
        let u = expm_unitary(rho.hermitian(), cfg.evolution_time * (1u64 << k) as f64)?;
        c.push(Gate::controlled(k, (n..n + m).collect(), u)?)?;
    }
    c.append(&inverse_qft(n), 0)?;
    Ok(c)
}

/// Independent sub-seed for `stream`.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Haar-random pure state on `n_qubits`.
pub fn haar_random_state(n_qubits: usize, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps: Vec<Complex64> = (0..1usize << n_qubits)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    StateVector::normalized(amps).expect("Gaussian vector is nonzero")
}

// Stream tags keep every stochastic step on its own sub-seed.
const TAG_CALIBRATION: u64 = 1 << 40;
const TAG_ITERATION: u64 = 2 << 40;
const TAG_PHASES: u64 = 3 << 40;
const TAG_QPE: u64 = 4 << 40;
const TAG_AMBIGUITY: u64 = 5 << 40;
const TAG_NOISE: u64 = 1 << 32;

/// Executes the qPCA circuit noiselessly or by trajectory averaging.
struct Runner {
    circuit: Circuit,
    noise: Option<NoiseModel>,
    trajectories: usize,
    n_bits: usize,
    m: usize,
}

impl Runner {
    fn new(rho: &DensityMatrix, cfg: &QpcaConfig) -> Result<Self> {
        let circuit = build_qpca_circuit(rho, cfg)?;
        // Noise is charged per CNOT, so noisy runs use the synthesized form.
        let circuit = if cfg.noise.is_some() { circuit.synthesize()? } else { circuit };
        Ok(Runner {
            circuit,
            noise: cfg.noise,
            trajectories: cfg.trajectories,
            n_bits: cfg.n_bits,
            m: eigenvector_qubits(rho)?,
        })
    }

    fn total(&self) -> usize {
        self.n_bits + self.m
    }

    fn eigenvalue_register(&self) -> Register {
        Register::new(EIGENVALUE_REGISTER, 0, self.n_bits)
    }

    fn input(&self, b: &StateVector) -> Result<StateVector> {
        if b.n_qubits() != self.m {
            return Err(Error::validation(format!(
                "start state has {} qubits, eigenvector register has {}",
                b.n_qubits(),
                self.m
            )));
        }
        Ok(StateVector::zero(self.n_bits).tensor(b))
    }

    /// Circuit followed by single-qubit `rotations` on eigenvector qubits.
    fn with_rotations(&self, rotations: &[(usize, ComplexMatrix)]) -> Result<Circuit> {
        let mut c = self.circuit.clone();
        for (q, r) in rotations {
            c.push(Gate::unitary(self.n_bits + q, r.clone())?)?;
        }
        Ok(c)
    }

    /// Full-register outcome distribution.
    fn distribution(&self, b: &StateVector, rotations: &[(usize, ComplexMatrix)], tag: u64) -> Result<Vec<f64>> {
        let c = self.with_rotations(rotations)?;
        let input = self.input(b)?;
        match &self.noise {
            None => Ok(qsim::run_circuit(&c, &input, None)?.probabilities()),
            Some(n) => {
                let model = NoiseModel::new(n.two_qubit_depolarizing_p, derive_seed(n.seed, TAG_NOISE | tag))?;
                qsim::average_probabilities(&c, &input, &model, self.trajectories)
            }
        }
    }

    /// Output states: the exact state, or one per noise trajectory.
    fn states(&self, b: &StateVector, tag: u64) -> Result<Vec<StateVector>> {
        let input = self.input(b)?;
        match &self.noise {
            None => Ok(vec![qsim::run_circuit(&self.circuit, &input, None)?]),
            Some(n) => {
                let model = NoiseModel::new(n.two_qubit_depolarizing_p, derive_seed(n.seed, TAG_NOISE | tag))?;
                qsim::trajectories(&self.circuit, &input, &model, self.trajectories)
            }
        }
    }

    /// Raw shots on the whole register, kept when the eigenvalue register reads `target`.
    fn post_selected(
        &self,
        b: &StateVector,
        rotations: &[(usize, ComplexMatrix)],
        target: &str,
        shots: u64,
        seed: u64,
        basis: &str,
        tag: u64,
    ) -> Result<(ShotHistogram, f64)> {
        let probs = self.distribution(b, rotations, tag)?;
        let (_, p) = conditional(&probs, self.total(), &self.eigenvalue_register(), target)?;
        let raw = sample_distribution(&probs, self.total(), shots, seed, basis)?;
        let mut counts = BTreeMap::new();
        let mut kept = 0;
        for (bits, &count) in &raw.counts {
            if &bits[..self.n_bits] == target {
                *counts.entry(bits[self.n_bits..].to_string()).or_insert(0) += count;
                kept += count;
            }
        }
        if kept == 0 {
            return Err(Error::DegenerateProjection { bitstring: target.to_string(), probability: 0.0 });
        }
        Ok((ShotHistogram { basis: basis.to_string(), width: self.m, counts, shots: kept }, p))
    }
}

/// Outcome of the target-selection run.
#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub bitstring: String,
    pub histogram: ShotHistogram,
}

/// Picks `y` from the eigenvalue-register histogram with the eigenvector
/// register prepared in `ρ` itself, so each eigenvalue's bin is weighted by
/// the eigenvalue. The modal outcome wins, except that all-zeros (where
/// zero-padding and tiny eigenvalues land) is chosen only if nothing else
/// was seen.
pub fn select_target(rho: &DensityMatrix, cfg: &QpcaConfig) -> Result<Calibration> {
    let runner = Runner::new(rho, cfg)?;
    let spec = eigh(rho.hermitian())?;
    let n = cfg.n_bits;
    let mut mix = vec![0.0; 1 << n];
    for (j, (lam, u)) in spec.eigenvalues.iter().zip(&spec.eigenvectors).enumerate() {
        if *lam <= 0.0 {
            continue;
        }
        let b = StateVector::new(u.clone())?;
        let probs = runner.distribution(&b, &[], TAG_CALIBRATION | j as u64)?;
        for (acc, p) in mix.iter_mut().zip(marginal(&probs, runner.total(), &runner.eigenvalue_register())?) {
            *acc += lam * p;
        }
    }
    let histogram = sample_distribution(&mix, n, cfg.shots, derive_seed(cfg.seed, TAG_CALIBRATION), "z")?;
    let zeros = "0".repeat(n);
    let mut best: Option<(&str, u64)> = None;
    for (k, &v) in &histogram.counts {
        if *k != zeros && best.is_none_or(|(_, b)| v > b) {
            best = Some((k.as_str(), v));
        }
    }
    let bitstring = best.map_or(zeros, |(k, _)| k.to_string());
    Ok(Calibration { bitstring, histogram })
}

fn resolve_target(rho: &DensityMatrix, cfg: &QpcaConfig) -> Result<(String, Option<Calibration>)> {
    match &cfg.target_bitstring {
        Some(y) => Ok((y.clone(), None)),
        None => {
            let cal = select_target(rho, cfg)?;
            Ok((cal.bitstring.clone(), Some(cal)))
        }
    }
}

fn leading_eigenvector(rho: &DensityMatrix) -> Result<Vec<Complex64>> {
    let spec = eigh(rho.hermitian())?;
    Ok(spec.eigenvectors[0].clone())
}

/// Magnitudes `√f` and their binomial uncertainties `√((1-f)/(4N))`.
fn magnitudes(h: &ShotHistogram) -> (Vec<f64>, Vec<f64>) {
    let n = h.shots as f64;
    h.frequencies().iter().map(|&f| (f.sqrt(), ((1.0 - f) / (4.0 * n)).sqrt())).unzip()
}

fn real_state(values: &[f64]) -> Result<StateVector> {
    StateVector::from_real(values)
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub input: Vec<Complex64>,
    pub magnitudes: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub projection_probability: f64,
    pub accepted_shots: u64,
    pub fidelity_to_previous: f64,
    /// Fidelity of the new estimate to the leading eigenvector of `ρ`.
    pub oracle_fidelity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationTrace {
    pub target_bitstring: String,
    pub calibration: Option<Calibration>,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

impl IterationTrace {
    pub fn final_magnitudes(&self) -> &[f64] {
        &self.records.last().expect("at least one iteration").magnitudes
    }

    pub fn final_uncertainties(&self) -> &[f64] {
        &self.records.last().expect("at least one iteration").uncertainties
    }
}

/// Runs the circuit on `|0…0⟩|b_k⟩`, post-selects `y`, estimates the
/// magnitudes from z shots and feeds them back as `b_{k+1}`.
pub fn qpca_iterate(rho: &DensityMatrix, b0: &StateVector, cfg: &QpcaConfig) -> Result<IterationTrace> {
    let runner = Runner::new(rho, cfg)?;
    let (target, calibration) = resolve_target(rho, cfg)?;
    let oracle = leading_eigenvector(rho)?;
    let mut b = b0.clone();
    let mut records = Vec::new();
    let mut converged = false;
    for k in 1..=cfg.max_iterations {
        let tag = TAG_ITERATION | k as u64;
        let seed = derive_seed(cfg.seed, tag);
        let (hist, p) = runner.post_selected(&b, &[], &target, cfg.shots, seed, "z", tag)?;
        let (mags, unc) = magnitudes(&hist);
        let next = real_state(&mags)?;
        let fidelity_to_previous = next.fidelity(&b);
        records.push(IterationRecord {
            iteration: k,
            input: b.amplitudes().to_vec(),
            oracle_fidelity: linalg::fidelity(next.amplitudes(), &oracle),
            magnitudes: mags,
            uncertainties: unc,
            projection_probability: p,
            accepted_shots: hist.shots,
            fidelity_to_previous,
        });
        b = next;
        if k > 1 && fidelity_to_previous >= 1.0 - cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    let iterations = records.len();
    Ok(IterationTrace { target_bitstring: target, calibration, records, converged, iterations })
}

/// Relative phase estimate along one hypercube edge `low → low|bit(q)`.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeEstimate {
    pub qubit: usize,
    pub low: usize,
    pub high: usize,
    /// Least-squares estimate of `conj(c_low)·c_high`.
    pub overlap: Complex64,
    pub phase: f64,
    pub phase_uncertainty: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRecovery {
    /// First nonzero coefficient real and nonnegative.
    pub vector: Vec<Complex64>,
    /// Same state with the global phase chosen to split the phases evenly.
    pub split_phase: Vec<Complex64>,
    pub magnitudes: Vec<f64>,
    pub magnitude_uncertainty: Vec<f64>,
    pub phases: Vec<f64>,
    pub phase_uncertainty: Vec<f64>,
    pub edges: Vec<EdgeEstimate>,
    pub histograms: BTreeMap<String, ShotHistogram>,
    /// False when some phase uncertainty exceeds [`PHASE_RESOLUTION`].
    pub resolved: bool,
}

impl PhaseRecovery {
    /// Per-coefficient uncertainty combining magnitude and phase errors.
    pub fn coefficient_uncertainty(&self) -> Vec<f64> {
        self.magnitudes
            .iter()
            .zip(&self.magnitude_uncertainty)
            .zip(&self.phase_uncertainty)
            .map(|((m, dm), dp)| (dm * dm + (m * dp) * (m * dp)).sqrt())
            .collect()
    }
}

/// Multi-basis phase reconstruction over `m` qubits. `measure(q, rotation, key)`
/// returns shots after `rotation` on qubit `q` (z basis if `None`).
fn reconstruct_phases(
    m: usize,
    mut measure: impl FnMut(Option<(usize, ComplexMatrix)>, &str) -> Result<ShotHistogram>,
) -> Result<PhaseRecovery> {
    let dim = 1usize << m;
    let mut histograms = BTreeMap::new();
    let z = measure(None, "z")?;
    let fz = z.frequencies();
    let (mags, mag_unc) = magnitudes(&z);
    histograms.insert("z".to_string(), z);

    let r_dag = r_direction(R_ALPHA, R_BETA, R_GAMMA).adjoint();
    let (s2, c2) = (2.0 * R_ALPHA).sin_cos();
    // Normal equations for rows (2,0), (0,2), 2 sin2α (cos β, sin β).
    let (rb_c, rb_s) = (2.0 * s2 * R_BETA.cos(), 2.0 * s2 * R_BETA.sin());
    let ata = [[4.0 + rb_c * rb_c, rb_c * rb_s], [rb_c * rb_s, 4.0 + rb_s * rb_s]];
    let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
    let inv = [[ata[1][1] / det, -ata[0][1] / det], [-ata[1][0] / det, ata[0][0] / det]];

    let mut edges = Vec::new();
    for q in 0..m {
        let bit = 1usize << (m - 1 - q);
        let mut settings = Vec::new();
        for (name, rot) in [("x", x_basis_rotation()), ("y", y_basis_rotation()), ("r", r_dag.clone())] {
            let key = format!("{name}{q}");
            let h = measure(Some((q, rot)), &key)?;
            settings.push(h.frequencies());
            histograms.insert(key, h);
        }
        let shots = ["x", "y", "r"].iter().map(|n| histograms[&format!("{n}{q}")].shots).min().unwrap_or(1);
        let var = 1.0 / shots as f64;
        for low in (0..dim).filter(|i| i & bit == 0) {
            let high = low | bit;
            let dx = settings[0][low] - settings[0][high];
            let dy = settings[1][low] - settings[1][high];
            let dr = settings[2][low] - settings[2][high] - c2 * (fz[low] - fz[high]);
            let atb = [2.0 * dx + rb_c * dr, 2.0 * dy + rb_s * dr];
            let u = inv[0][0] * atb[0] + inv[0][1] * atb[1];
            let v = inv[1][0] * atb[0] + inv[1][1] * atb[1];
            let overlap = Complex64::new(u, v);
            let phase = v.atan2(u);
            let r = overlap.norm();
            let phase_uncertainty = if r > 0.0 {
                let (sn, cs) = phase.sin_cos();
                let var_t = var * (inv[0][0] * sn * sn + inv[1][1] * cs * cs - 2.0 * inv[0][1] * sn * cs);
                var_t.max(0.0).sqrt() / r
            } else {
                PI
            };
            edges.push(EdgeEstimate { qubit: q, low, high, overlap, phase, phase_uncertainty });
        }
    }

    // Grow a spanning tree from the first populated basis state, always
    // taking the strongest remaining edge.
    let mut phases = vec![0.0; dim];
    let mut phase_unc = vec![0.0f64; dim];
    let mut assigned = vec![false; dim];
    if let Some(root) = fz.iter().position(|&f| f > 0.0) {
        assigned[root] = true;
        loop {
            let next = edges
                .iter()
                .filter(|e| assigned[e.low] != assigned[e.high] && fz[e.low] > 0.0 && fz[e.high] > 0.0)
                .max_by(|a, b| a.overlap.norm().total_cmp(&b.overlap.norm()));
            let Some(e) = next else { break };
            if assigned[e.low] {
                phases[e.high] = phases[e.low] + e.phase;
                phase_unc[e.high] = phase_unc[e.low].hypot(e.phase_uncertainty);
                assigned[e.high] = true;
            } else {
                phases[e.low] = phases[e.high] - e.phase;
                phase_unc[e.low] = phase_unc[e.high].hypot(e.phase_uncertainty);
                assigned[e.low] = true;
            }
        }
    }
    let phases: Vec<f64> = phases.iter().map(|p| wrap(*p)).collect();
    let vector: Vec<Complex64> = mags.iter().zip(&phases).map(|(&r, &p)| Complex64::from_polar(r, p)).collect();
    let populated: Vec<f64> = phases.iter().zip(&mags).filter(|(_, &r)| r > 0.0).map(|(p, _)| *p).collect();
    let mean = populated.iter().sum::<f64>() / populated.len().max(1) as f64;
    let split_phase = vector.iter().map(|z| z * Complex64::from_polar(1.0, -mean)).collect();
    let resolved = phase_unc.iter().zip(&mags).all(|(u, &r)| r == 0.0 || *u <= PHASE_RESOLUTION);
    Ok(PhaseRecovery {
        vector,
        split_phase,
        magnitudes: mags,
        magnitude_uncertainty: mag_unc,
        phases,
        phase_uncertainty: phase_unc,
        edges,
        histograms,
        resolved,
    })
}

fn wrap(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Re-runs the projected circuit from the converged magnitudes and measures
/// the eigenvector register in z, x, y and the auxiliary `r` basis.
pub fn recover_phases(rho: &DensityMatrix, u_magnitudes: &[f64], cfg: &QpcaConfig) -> Result<PhaseRecovery> {
    let runner = Runner::new(rho, cfg)?;
    let (target, _) = resolve_target(rho, cfg)?;
    let b = real_state(u_magnitudes)?;
    let mut setting = 0u64;
    reconstruct_phases(runner.m, |rot, key| {
        setting += 1;
        let tag = TAG_PHASES | setting;
        let rotations: Vec<(usize, ComplexMatrix)> = rot.into_iter().collect();
        let (h, _) = runner.post_selected(&b, &rotations, &target, cfg.shots, derive_seed(cfg.seed, tag), key, tag)?;
        Ok(h)
    })
}

/// Phase recovery applied directly to a known state, `shots` per setting.
pub fn recover_state_phases(state: &StateVector, shots: u64, seed: u64) -> Result<PhaseRecovery> {
    let m = state.n_qubits();
    let reg = Register::new(EIGENVECTOR_REGISTER, 0, m);
    let mut setting = 0u64;
    reconstruct_phases(m, |rot, key| {
        setting += 1;
        let mut s = state.clone();
        if let Some((q, r)) = rot {
            s.apply(&[], &[q], &r);
        }
        let mut h = qsim::sample_shots(&s, &reg, None, shots, derive_seed(seed, TAG_PHASES | setting))?;
        h.basis = key.to_string();
        Ok(h)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct QpcaResult {
    pub eigenvector: Vec<Complex64>,
    pub split_phase: Vec<Complex64>,
    pub uncertainty: Vec<f64>,
    pub eigenvalue_bitstring: String,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
    pub oracle_fidelity: Option<f64>,
    pub trace: IterationTrace,
    pub phases: PhaseRecovery,
}

/// Iteration to a fixed point followed by phase recovery.
pub fn run_qpca(rho: &DensityMatrix, b0: &StateVector, cfg: &QpcaConfig) -> Result<QpcaResult> {
    let trace = qpca_iterate(rho, b0, cfg)?;
    let mut fixed = cfg.clone();
    fixed.target_bitstring = Some(trace.target_bitstring.clone());
    let phases = recover_phases(rho, trace.final_magnitudes(), &fixed)?;
    let oracle = leading_eigenvector(rho)?;
    Ok(QpcaResult {
        eigenvector: phases.vector.clone(),
        split_phase: phases.split_phase.clone(),
        uncertainty: phases.coefficient_uncertainty(),
        eigenvalue: bitstring_eigenvalue(&trace.target_bitstring),
        eigenvalue_bitstring: trace.target_bitstring.clone(),
        iterations: trace.iterations,
        converged: trace.converged,
        oracle_fidelity: Some(linalg::fidelity(&phases.vector, &oracle)),
        trace,
        phases,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct QpeResult {
    pub bitstring: String,
    pub value: f64,
    /// Probability of the modal bitstring in the (trajectory-averaged) distribution.
    pub probability: f64,
    pub distribution: Vec<f64>,
    pub histogram: ShotHistogram,
    /// `⟨u_est|ρ_post|u_est⟩` for the eigenvector register after post-selecting the modal bitstring.
    pub post_fidelity: f64,
    pub tv_to_uniform: f64,
    /// CNOTs after synthesis.
    pub entangling_gates: usize,
}

/// Phase estimation with `cfg.n_bits` bits on `u_est`.
pub fn qpe_refine(rho: &DensityMatrix, u_est: &StateVector, cfg: &QpcaConfig) -> Result<QpeResult> {
    let runner = Runner::new(rho, cfg)?;
    let entangling_gates = match cfg.noise {
        Some(_) => runner.circuit.entangling_count(),
        None => runner.circuit.synthesize()?.entangling_count(),
    };
    let states = runner.states(u_est, TAG_QPE)?;
    let reg = runner.eigenvalue_register();
    let mut distribution = vec![0.0; 1 << cfg.n_bits];
    for s in &states {
        for (acc, p) in distribution.iter_mut().zip(qsim::register_probabilities(s, &reg)?) {
            *acc += p / states.len() as f64;
        }
    }
    let histogram = sample_distribution(&distribution, cfg.n_bits, cfg.shots, derive_seed(cfg.seed, TAG_QPE), "z")?;
    let bitstring = histogram.modal().expect("at least one shot").to_string();
    let index = qsim::parse_bits(&bitstring, cfg.n_bits)?;
    let (mut weight, mut acc) = (0.0, 0.0);
    for s in &states {
        if let Ok((post, p)) = project_register(s, &reg, &bitstring) {
            weight += p;
            acc += p * post.fidelity(u_est);
        }
    }
    let uniform = vec![1.0 / distribution.len() as f64; distribution.len()];
    Ok(QpeResult {
        value: bits_value(&bitstring),
        probability: distribution[index],
        tv_to_uniform: qsim::total_variation(&distribution, &uniform),
        post_fidelity: if weight > 0.0 { acc / weight } else { 0.0 },
        bitstring,
        distribution,
        histogram,
        entangling_gates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "K=1")]
    Unique,
    #[serde(rename = "K>1")]
    Multiple,
}

#[derive(Clone, Debug, Serialize)]
pub struct AmbiguityReport {
    pub target_bitstring: String,
    pub start_b: Vec<Complex64>,
    pub start_c: Vec<Complex64>,
    pub state_b: Vec<Complex64>,
    pub state_c: Vec<Complex64>,
    pub rounds_b: usize,
    pub rounds_c: usize,
    pub cross_fidelity: f64,
    pub verdict: Verdict,
    pub recommendation: Option<String>,
}

/// Re-applies the projected circuit to its own post-selected output. Noisy
/// runs follow one trajectory per round.
fn filter_to_fixed_point(runner: &Runner, start: &StateVector, target: &str, seed: u64) -> Result<(StateVector, usize)> {
    let mut b = start.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reg = runner.eigenvalue_register();
    for round in 1..=AMBIGUITY_MAX_ROUNDS {
        let input = runner.input(&b)?;
        let out = match &runner.noise {
            None => qsim::run_circuit(&runner.circuit, &input, None)?,
            Some(n) => run_trajectory(&runner.circuit, &input, n.two_qubit_depolarizing_p, &mut rng)?,
        };
        let (next, _) = project_register(&out, &reg, target)?;
        let done = runner.noise.is_none() && next.fidelity(&b) >= 1.0 - AMBIGUITY_STOP;
        b = next;
        if done {
            return Ok((b, round));
        }
    }
    Ok((b, AMBIGUITY_MAX_ROUNDS))
}

/// Filters two independent Haar-random starts to their fixed points and
/// compares them. Agreement means a single eigenvector sits under the
/// target bitstring.
pub fn check_ambiguity(rho: &DensityMatrix, cfg: &QpcaConfig, seed_b: u64, seed_c: u64) -> Result<AmbiguityReport> {
    if seed_b == seed_c {
        return Err(Error::validation("ambiguity check needs two distinct seeds"));
    }
    let runner = Runner::new(rho, cfg)?;
    let (target, _) = resolve_target(rho, cfg)?;
    let start_b = haar_random_state(runner.m, seed_b);
    let start_c = haar_random_state(runner.m, seed_c);
    let (state_b, rounds_b) = filter_to_fixed_point(&runner, &start_b, &target, derive_seed(seed_b, TAG_AMBIGUITY))?;
    let (state_c, rounds_c) = filter_to_fixed_point(&runner, &start_c, &target, derive_seed(seed_c, TAG_AMBIGUITY))?;
    let cross_fidelity = state_b.fidelity(&state_c).clamp(0.0, 1.0);
    let verdict = if cross_fidelity >= AMBIGUITY_THRESHOLD { Verdict::Unique } else { Verdict::Multiple };
    let recommendation = (verdict == Verdict::Multiple).then(|| {
        format!("several eigenvalues read as '{target}'; increase n_bits beyond {}", cfg.n_bits)
    });
    Ok(AmbiguityReport {
        target_bitstring: target,
        start_b: start_b.amplitudes().to_vec(),
        start_c: start_c.amplitudes().to_vec(),
        state_b: state_b.amplitudes().to_vec(),
        state_c: state_c.amplitudes().to_vec(),
        rounds_b,
        rounds_c,
        cross_fidelity,
        verdict,
        recommendation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn nearest_bitstring_examples() {
        assert_eq!(nearest_bitstring(0.8576, 2), "11");
        assert_eq!(nearest_bitstring(0.8576, 3), "111");
        assert_eq!(nearest_bitstring(0.0, 4), "0000");
        assert_eq!(nearest_bitstring(0.97, 2), "00");
    }

    #[test]
    fn circuit_shapes() {
        let cfg = QpcaConfig { n_bits: 2, ..Default::default() };
        let c = build_qpca_circuit(&fixtures::rho2(), &cfg).unwrap();
        let kinds: Vec<&str> = c.gates().iter().map(|g| g.kind()).collect();
        assert_eq!(kinds, ["h", "h", "cu", "cu", "h", "crdg", "h"]);
        let cfg = QpcaConfig { n_bits: 1, ..Default::default() };
        let c = build_qpca_circuit(&fixtures::rho4(), &cfg).unwrap();
        let kinds: Vec<&str> = c.gates().iter().map(|g| g.kind()).collect();
        assert_eq!(kinds, ["h", "cu", "h"]);
        assert_eq!(c.n_qubits(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(QpcaConfig { n_bits: 0, ..Default::default() }.validate().is_err());
        assert!(QpcaConfig { convergence_tol: 1.0, ..Default::default() }.validate().is_err());
        assert!(QpcaConfig { target_bitstring: Some("1".into()), ..Default::default() }.validate().is_err());
        assert!(QpcaConfig::default().validate().is_ok());
    }

    #[test]
    fn wrap_stays_in_range() {
        for p in [-7.0, -PI, 0.0, PI, 3.0 * PI, 10.0] {
            let w = wrap(p);
            assert!(w > -PI && w <= PI);
            assert!((Complex64::from_polar(1.0, w) - Complex64::from_polar(1.0, p)).norm() < 1e-12);
        }
    }
}
