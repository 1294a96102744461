//! Independent oracles shared by the integration suites. None of these go
//! through the simulator's gate application path.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qpca_hjm::linalg::{eigh, ComplexMatrix, DensityMatrix};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary(dim: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    for _ in 0..dim {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)))
            .collect();
        for u in &cols {
            let p: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= p * y;
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|z| z / n).collect());
    }
    let rows: Vec<Vec<Complex64>> = (0..dim).map(|i| (0..dim).map(|j| cols[j][i]).collect()).collect();
    ComplexMatrix::from_rows(&rows).unwrap()
}

pub fn random_hermitian(dim: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        m[(i, i)] = c(rng.sample(StandardNormal), 0.0);
        for j in (i + 1)..dim {
            let z = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Embeds a `k`-qubit operator acting on `qubits` (first = most significant)
/// into `n` qubits by explicit index arithmetic.
pub fn embed(n: usize, qubits: &[usize], op: &ComplexMatrix) -> ComplexMatrix {
    let d = 1 << n;
    let k = qubits.len();
    let mut out = ComplexMatrix::zeros(d);
    for col in 0..d {
        let bit = |idx: usize, q: usize| (idx >> (n - 1 - q)) & 1;
        let sub_col = qubits.iter().fold(0, |acc, &q| acc * 2 + bit(col, q));
        for sub_row in 0..(1 << k) {
            let mut row = col;
            for (i, &q) in qubits.iter().enumerate() {
                let b = (sub_row >> (k - 1 - i)) & 1;
                row = (row & !(1 << (n - 1 - q))) | (b << (n - 1 - q));
            }
            out[(row, col)] += op[(sub_row, sub_col)];
        }
    }
    out
}

pub fn controlled(u: &ComplexMatrix) -> ComplexMatrix {
    let d = u.dim();
    let mut m = ComplexMatrix::identity(2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(d + i, d + j)] = u[(i, j)];
        }
    }
    m
}

pub fn pauli(i: usize) -> ComplexMatrix {
    match i {
        0 => ComplexMatrix::identity(2),
        1 => ComplexMatrix::from_rows(&[vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.), c(0., 0.)]]).unwrap(),
        2 => ComplexMatrix::from_rows(&[vec![c(0., 0.), c(0., -1.)], vec![c(0., 1.), c(0., 0.)]]).unwrap(),
        _ => ComplexMatrix::from_diagonal(&[c(1., 0.), c(-1., 0.)]),
    }
}

/// Explicit density-matrix evolution. Each step is (qubits, operator, noisy).
/// A noisy step is followed by full depolarization of its qubits with probability `p`.
pub fn density_evolve(n: usize, psi: &[Complex64], steps: &[(Vec<usize>, ComplexMatrix)], p: f64) -> Vec<f64> {
    let d = 1 << n;
    let mut rho = ComplexMatrix::from_fn(d, |i, j| psi[i] * psi[j].conj());
    for (qs, op) in steps {
        let u = embed(n, qs, op);
        rho = &(&u * &rho) * &u.adjoint();
        if qs.len() >= 2 && p > 0.0 {
            let mut acc = ComplexMatrix::zeros(d);
            let combos = 1usize << (2 * qs.len());
            for code in 0..combos {
                let mut full = ComplexMatrix::identity(d);
                for (i, &q) in qs.iter().enumerate() {
                    let which = (code >> (2 * i)) & 3;
                    full = &embed(n, &[q], &pauli(which)) * &full;
                }
                let term = &(&full * &rho) * &full.adjoint();
                acc = add(&acc, &term);
            }
            let mixed = acc.scale(c(p / combos as f64, 0.0));
            rho = add(&rho.scale(c(1.0 - p, 0.0)), &mixed);
        }
    }
    (0..d).map(|i| rho[(i, i)].re).collect()
}

pub fn add(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.sub(&b.scale(c(-1.0, 0.0)))
}

/// Amplitude the `n`-bit phase-estimation circuit assigns to outcome `y`
/// for eigenphase `lambda`: `2^{-n} Σ_k e^{2πi k (λ − y/2^n)}`.
pub fn qpe_kernel(lambda: f64, y: usize, n: usize) -> Complex64 {
    let big_n = (1usize << n) as f64;
    (0..(1usize << n))
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 * (lambda - y as f64 / big_n)))
        .sum::<Complex64>()
        / big_n
}

/// Post-projection eigenvector-register state predicted by the kernel:
/// `Σ_j β_j g(λ_j, y) |u_j⟩`, normalized, plus its probability.
pub fn filtered_state(rho: &DensityMatrix, b: &[Complex64], y: usize, n: usize) -> (Vec<Complex64>, f64) {
    let spec = eigh(rho.hermitian()).unwrap();
    let dim = b.len();
    let mut out = vec![c(0.0, 0.0); dim];
    for (lam, u) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let beta: Complex64 = u.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        let g = qpe_kernel(*lam, y, n);
        for (o, ui) in out.iter_mut().zip(u) {
            *o += beta * g * ui;
        }
    }
    let p: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    (out.into_iter().map(|z| z / p.sqrt()).collect(), p)
}

pub fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
