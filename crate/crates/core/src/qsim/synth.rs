//! Controlled-unitary synthesis into single-qubit gates and CNOTs.
//!
//! A controlled single-qubit gate uses the two-CNOT `A·X·B·X·C` construction.
//! Larger targets go through a recursive cosine-sine decomposition: the
//! controlled gate is a multiplexor `(I, U)` selected by the control, each CSD
//! level splits a multiplexor into two smaller multiplexors around a
//! uniformly controlled `Ry`, and the single-target leaves become uniformly
//! controlled `Rz·Ry·Rz` plus a diagonal phase. Uniformly controlled rotations
//! with `k` selectors cost `2^k` CNOTs (Gray-code ordering).

use num_complex::Complex64;
use serde::Serialize;

use super::circuit::Circuit;
use super::gate::{self, Gate};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, HermitianMatrix};

const UNITARY_TOL: f64 = 1e-10;
const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Gates on qubits `0` (control) and `1..=n_targets`, plus the global phase
/// that makes the product equal the controlled unitary exactly.
#[derive(Clone, Debug, Serialize)]
pub struct Synthesis {
    pub n_targets: usize,
    pub gates: Vec<Gate>,
    pub global_phase: f64,
    pub entangling_count: usize,
}

impl Synthesis {
    /// Product of the emitted gates times the tracked global phase.
    pub fn matrix(&self) -> ComplexMatrix {
        let mut c = Circuit::new(self.n_targets + 1);
        for g in &self.gates {
            c.push(g.clone()).expect("synthesized gate indices are in range");
        }
        c.unitary().scale(Complex64::from_polar(1.0, self.global_phase))
    }
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ U` with the control as the most significant qubit.
pub fn controlled_matrix(u: &ComplexMatrix) -> ComplexMatrix {
    let d = u.dim();
    ComplexMatrix::from_fn(2 * d, |i, j| match (i < d, j < d) {
        (true, true) => {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
        (false, false) => u[(i - d, j - d)],
        _ => Complex64::new(0.0, 0.0),
    })
}

pub fn decompose_controlled_unitary(u: &ComplexMatrix, n_target_qubits: usize) -> Result<Synthesis> {
    if n_target_qubits == 0 || u.dim() != 1 << n_target_qubits {
        return Err(Error::validation(format!(
            "unitary of dimension {} does not act on {n_target_qubits} qubits",
            u.dim()
        )));
    }
    if !u.is_unitary(UNITARY_TOL) {
        return Err(Error::validation("input to controlled-unitary synthesis is not unitary"));
    }
    let mut b = Builder::default();
    if n_target_qubits == 1 {
        b.controlled_single(0, 1, u);
    } else {
        let targets: Vec<usize> = (1..=n_target_qubits).collect();
        b.multiplexor(&[0], &targets, &[ComplexMatrix::identity(u.dim()), u.clone()])?;
    }
    let entangling_count = b.gates.iter().filter(|g| g.is_entangling()).count();
    let out = Synthesis { n_targets: n_target_qubits, gates: b.gates, global_phase: b.global_phase, entangling_count };

    let err = out.matrix().max_abs_diff(&controlled_matrix(u));
    if err > RECONSTRUCTION_TOL {
        return Err(Error::numerical(format!("controlled-unitary synthesis residual {err:e}")));
    }
    Ok(out)
}

/// `U = e^{iφ}·Rz(a)·Ry(b)·Rz(c)`; returns `(φ, a, b, c)`.
pub fn zyz_angles(u: &ComplexMatrix) -> (f64, f64, f64, f64) {
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let phi = det.arg() / 2.0;
    let unphase = Complex64::from_polar(1.0, -phi);
    let v00 = u[(0, 0)] * unphase;
    let v10 = u[(1, 0)] * unphase;
    let b = 2.0 * v10.norm().atan2(v00.norm());
    let tiny = 1e-14;
    let sum = if v00.norm() > tiny { -2.0 * v00.arg() } else { 0.0 };
    let diff = if v10.norm() > tiny { 2.0 * v10.arg() } else { 0.0 };
    (phi, (sum + diff) / 2.0, b, (sum - diff) / 2.0)
}

#[derive(Clone, Copy)]
enum Axis {
    Y,
    Z,
}

#[derive(Default)]
struct Builder {
    gates: Vec<Gate>,
    global_phase: f64,
}

impl Builder {
    fn single(&mut self, qubit: usize, m: ComplexMatrix) {
        self.gates.push(Gate::Unitary { qubit, matrix: m });
    }

    fn rotation(&mut self, axis: Axis, qubit: usize, theta: f64) {
        if theta.abs() < 1e-15 {
            return;
        }
        let m = match axis {
            Axis::Y => gate::ry(theta),
            Axis::Z => gate::rz(theta),
        };
        self.single(qubit, m);
    }

    /// Two-CNOT construction for a controlled single-qubit gate.
    fn controlled_single(&mut self, control: usize, target: usize, u: &ComplexMatrix) {
        let (alpha, beta, gamma, delta) = zyz_angles(u);
        let a = &gate::rz(beta) * &gate::ry(gamma / 2.0);
        let b = &gate::ry(-gamma / 2.0) * &gate::rz(-(delta + beta) / 2.0);
        let c = gate::rz((delta - beta) / 2.0);
        self.single(target, c);
        self.gates.push(Gate::Cnot { control, target });
        self.single(target, b);
        self.gates.push(Gate::Cnot { control, target });
        self.single(target, a);
        self.single(control, gate::phase(alpha));
    }

    /// Uniformly controlled rotation: `R(angles[x])` on `target` when the
    /// selectors (first = most significant) read `x`.
    fn uniformly_controlled_rotation(&mut self, axis: Axis, selectors: &[usize], target: usize, angles: &[f64]) {
        let k = selectors.len();
        debug_assert_eq!(angles.len(), 1 << k);
        if k == 0 {
            self.rotation(axis, target, angles[0]);
            return;
        }
        if angles.iter().all(|a| a.abs() < 1e-15) {
            return;
        }
        let n = 1usize << k;
        let gray = |i: usize| i ^ (i >> 1);
        for i in 0..n {
            let g = gray(i);
            let alpha = angles
                .iter()
                .enumerate()
                .map(|(x, th)| if (x & g).count_ones() % 2 == 0 { *th } else { -*th })
                .sum::<f64>()
                / n as f64;
            self.rotation(axis, target, alpha);
            let flipped = g ^ gray((i + 1) % n);
            let bit = flipped.trailing_zeros() as usize;
            self.gates.push(Gate::Cnot { control: selectors[k - 1 - bit], target });
        }
    }

    /// `diag(e^{i phases[x]})` over `qubits` (first = most significant).
    fn diagonal(&mut self, qubits: &[usize], phases: &[f64]) {
        let k = qubits.len();
        if k == 0 {
            self.global_phase += phases[0];
            return;
        }
        let half = phases.len() / 2;
        let mut thetas = Vec::with_capacity(half);
        let mut means = Vec::with_capacity(half);
        for x in 0..half {
            let (p0, p1) = (phases[2 * x], phases[2 * x + 1]);
            thetas.push(p1 - p0);
            means.push((p0 + p1) / 2.0);
        }
        self.uniformly_controlled_rotation(Axis::Z, &qubits[..k - 1], qubits[k - 1], &thetas);
        self.diagonal(&qubits[..k - 1], &means);
    }

    /// Uniformly controlled single-qubit gate `blocks[x]` on `target`.
    fn uniformly_controlled_single(&mut self, selectors: &[usize], target: usize, blocks: &[ComplexMatrix]) {
        if selectors.is_empty() {
            self.single(target, blocks[0].clone());
            return;
        }
        let angles: Vec<(f64, f64, f64, f64)> = blocks.iter().map(zyz_angles).collect();
        let pick = |f: fn(&(f64, f64, f64, f64)) -> f64| angles.iter().map(f).collect::<Vec<f64>>();
        self.uniformly_controlled_rotation(Axis::Z, selectors, target, &pick(|a| a.3));
        self.uniformly_controlled_rotation(Axis::Y, selectors, target, &pick(|a| a.2));
        self.uniformly_controlled_rotation(Axis::Z, selectors, target, &pick(|a| a.1));
        self.diagonal(selectors, &pick(|a| a.0));
    }

    /// `blocks[x]` on `targets` when `selectors` read `x`.
    fn multiplexor(&mut self, selectors: &[usize], targets: &[usize], blocks: &[ComplexMatrix]) -> Result<()> {
        if targets.len() == 1 {
            self.uniformly_controlled_single(selectors, targets[0], blocks);
            return Ok(());
        }
        let mut lefts = Vec::with_capacity(2 * blocks.len());
        let mut rights = Vec::with_capacity(2 * blocks.len());
        let mut thetas = Vec::new();
        for b in blocks {
            let d = cosine_sine(b)?;
            lefts.push(d.l0);
            lefts.push(d.l1);
            rights.push(d.r0);
            rights.push(d.r1);
            thetas.extend(d.thetas);
        }
        let mut outer: Vec<usize> = selectors.to_vec();
        outer.push(targets[0]);
        let mut middle: Vec<usize> = selectors.to_vec();
        middle.extend_from_slice(&targets[1..]);

        self.multiplexor(&outer, &targets[1..], &rights)?;
        self.uniformly_controlled_rotation(Axis::Y, &middle, targets[0], &thetas);
        self.multiplexor(&outer, &targets[1..], &lefts)
    }
}

/// `U = (L0 ⊕ L1) · [[C, −S], [S, C]] · (R0 ⊕ R1)` with `C = diag(cos θ/2)`, `S = diag(sin θ/2)`.
pub struct CosineSine {
    pub l0: ComplexMatrix,
    pub l1: ComplexMatrix,
    pub thetas: Vec<f64>,
    pub r0: ComplexMatrix,
    pub r1: ComplexMatrix,
}

impl CosineSine {
    pub fn matrix(&self) -> ComplexMatrix {
        let h = self.l0.dim();
        let left = block_diag(&self.l0, &self.l1);
        let right = block_diag(&self.r0, &self.r1);
        let cs = ComplexMatrix::from_fn(2 * h, |i, j| {
            let (bi, ii) = (i / h, i % h);
            let (bj, jj) = (j / h, j % h);
            if ii != jj {
                return Complex64::new(0.0, 0.0);
            }
            let (s, c) = (self.thetas[ii] / 2.0).sin_cos();
            Complex64::new(
                match (bi, bj) {
                    (0, 0) | (1, 1) => c,
                    (0, 1) => -s,
                    _ => s,
                },
                0.0,
            )
        });
        &(&left * &cs) * &right
    }
}

fn block_diag(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let h = a.dim();
    ComplexMatrix::from_fn(2 * h, |i, j| match (i < h, j < h) {
        (true, true) => a[(i, j)],
        (false, false) => b[(i - h, j - h)],
        _ => Complex64::new(0.0, 0.0),
    })
}

/// Cosine-sine decomposition of an even-dimensional unitary into equal halves.
pub fn cosine_sine(u: &ComplexMatrix) -> Result<CosineSine> {
    let n = u.dim();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::validation("cosine-sine decomposition needs an even dimension"));
    }
    let h = n / 2;
    let u00 = u.block(0, 0, h);
    let u10 = u.block(h, 0, h);

    let gram = &u00.adjoint() * &u00;
    let gram = ComplexMatrix::from_fn(h, |i, j| (gram[(i, j)] + gram[(j, i)].conj()) * 0.5);
    let spec = linalg::eigh(&HermitianMatrix::new(gram)?)?;
    let r0_cols = &spec.eigenvectors;

    let w: Vec<Vec<Complex64>> = r0_cols.iter().map(|v| u00.mul_vec(v)).collect();
    let w2: Vec<Vec<Complex64>> = r0_cols.iter().map(|v| u10.mul_vec(v)).collect();
    let order_c: Vec<usize> = (0..h).collect();
    let order_s: Vec<usize> = (0..h).rev().collect();
    let l0_cols = orthonormalize(&w, &order_c);
    let l1_cols = orthonormalize(&w2, &order_s);

    let thetas: Vec<f64> = (0..h)
        .map(|j| {
            let c = linalg::inner(&l0_cols[j], &w[j]).re;
            let s = linalg::inner(&l1_cols[j], &w2[j]).re;
            2.0 * s.atan2(c)
        })
        .collect();

    let l0 = from_columns(&l0_cols);
    let l1 = from_columns(&l1_cols);
    // Remaining right factor: K = CS^{-1} (L0 ⊕ L1)^† U.
    let partial = CosineSine {
        l0: ComplexMatrix::identity(h),
        l1: ComplexMatrix::identity(h),
        thetas: thetas.clone(),
        r0: ComplexMatrix::identity(h),
        r1: ComplexMatrix::identity(h),
    }
    .matrix();
    let k = &(&partial.adjoint() * &block_diag(&l0.adjoint(), &l1.adjoint())) * u;
    let off = k.block(0, h, h).frobenius_norm() + k.block(h, 0, h).frobenius_norm();
    if off > RECONSTRUCTION_TOL {
        return Err(Error::numerical(format!("cosine-sine decomposition left off-diagonal residual {off:e}")));
    }
    Ok(CosineSine { l0, l1, thetas, r0: k.block(0, 0, h), r1: k.block(h, h, h) })
}

fn from_columns(cols: &[Vec<Complex64>]) -> ComplexMatrix {
    ComplexMatrix::from_fn(cols.len(), |i, j| cols[j][i])
}

/// Gram-Schmidt over `vectors` in `order`; columns too small to normalize are
/// filled with an orthonormal completion.
fn orthonormalize(vectors: &[Vec<Complex64>], order: &[usize]) -> Vec<Vec<Complex64>> {
    let n = vectors.len();
    let mut out: Vec<Option<Vec<Complex64>>> = vec![None; n];
    let mut accepted: Vec<Vec<Complex64>> = Vec::new();
    let project_out = |v: &mut Vec<Complex64>, basis: &[Vec<Complex64>]| {
        for _ in 0..2 {
            for b in basis {
                let p = linalg::inner(b, v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
    };
    for &j in order {
        let mut v = vectors[j].clone();
        project_out(&mut v, &accepted);
        let norm = linalg::vector_norm(&v);
        if norm > 1e-7 {
            let v: Vec<Complex64> = v.into_iter().map(|z| z / norm).collect();
            accepted.push(v.clone());
            out[j] = Some(v);
        }
    }
    let mut e = 0;
    for j in order {
        if out[*j].is_some() {
            continue;
        }
        loop {
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            v[e] = Complex64::new(1.0, 0.0);
            e += 1;
            project_out(&mut v, &accepted);
            let norm = linalg::vector_norm(&v);
            if norm > 0.5 {
                let v: Vec<Complex64> = v.into_iter().map(|z| z / norm).collect();
                accepted.push(v.clone());
                out[*j] = Some(v);
                break;
            }
        }
    }
    out.into_iter().map(|v| v.expect("every column filled")).collect()
}
