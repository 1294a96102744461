//! Dense complex linear algebra on small square matrices.
//!
//! Everything here works on row-major `dim × dim` matrices of `Complex64`.
//! The Hermitian eigensolver is a cyclic Jacobi sweep, which is plenty for
//! the `dim <= 16` matrices the circuits need and gives eigenvectors that are
//! orthonormal to machine precision.

use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-entry tolerance for the Hermitian check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues above `-PSD_TOL` count as nonnegative. Admits the exact zero
/// eigenvalue introduced by zero-padding a covariance matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Gaps below this are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        ComplexMatrix { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting non-square or non-finite input.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::validation("matrix must have at least one row"));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::validation(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("matrix entries must be finite"));
        }
        Ok(ComplexMatrix { dim, data })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        ComplexMatrix { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let d = self.dim * other.dim;
        Self::from_fn(d, |i, j| {
            self[(i / other.dim, j / other.dim)] * other[(i % other.dim, j % other.dim)]
        })
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        self.data.chunks(self.dim).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (i..self.dim).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (&self.adjoint() * self).max_abs_diff(&Self::identity(self.dim)) <= tol
    }

    /// Block `[r0..r0+n, c0..c0+n]`.
    pub fn block(&self, r0: usize, c0: usize, n: usize) -> Self {
        Self::from_fn(n, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Largest `|a|` such that `self ≈ a · other`, compared with the optimal phase.
    /// Returns the residual `max |self - e^{iφ} other|` after removing the best global phase.
    pub fn distance_up_to_phase(&self, other: &Self) -> f64 {
        let overlap: Complex64 =
            other.data.iter().zip(&self.data).map(|(o, s)| o.conj() * s).sum();
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
        self.max_abs_diff(&other.scale(phase))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix product");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// A matrix known to equal its adjoint to within [`HERMITIAN_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::validation("matrix is not Hermitian"));
        }
        // Symmetrize so downstream code sees an exactly Hermitian matrix.
        let sym = ComplexMatrix::from_fn(m.dim, |i, j| {
            if i == j {
                Complex64::new(m[(i, i)].re, 0.0)
            } else {
                (m[(i, j)] + m[(j, i)].conj()) * 0.5
            }
        });
        Ok(HermitianMatrix(sym))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(ComplexMatrix::from_real_rows(rows)?)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Embeds the matrix in the top-left corner of a `dim × dim` zero matrix.
    pub fn zero_pad(&self, dim: usize) -> Result<Self> {
        if dim < self.dim() {
            return Err(Error::validation(format!("cannot pad {}x{} down to {dim}", self.dim(), self.dim())));
        }
        let m = ComplexMatrix::from_fn(dim, |i, j| {
            if i < self.dim() && j < self.dim() {
                self.0[(i, j)]
            } else {
                ZERO
            }
        });
        Ok(HermitianMatrix(m))
    }
}

/// Trace-one positive semidefinite Hermitian matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    pub fn new(h: HermitianMatrix) -> Result<Self> {
        let tr = h.trace();
        if (tr - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("density matrix trace {tr} differs from 1")));
        }
        let spec = eigh(&h)?;
        if let Some(&min) = spec.eigenvalues.last() {
            if min < -PSD_TOL {
                return Err(Error::validation(format!("density matrix has negative eigenvalue {min:e}")));
            }
        }
        Ok(DensityMatrix(h))
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.0.matrix()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues sorted in descending order.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` belongs to `eigenvalues[i]`.
    pub eigenvectors: Vec<Vec<Complex64>>,
    /// Adjacent index pairs whose eigenvalue gap is below [`DEGENERACY_TOL`].
    pub degenerate_pairs: Vec<(usize, usize)>,
    pub sweeps: usize,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let mut out = ComplexMatrix::zeros(n);
        for (lam, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += v[i] * v[j].conj() * *lam;
                }
            }
        }
        out
    }

    /// Sum of eigenprojectors weighted by `f(λ)`.
    pub fn apply_function(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let mut out = ComplexMatrix::zeros(n);
        for (lam, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let w = f(*lam);
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += w * v[i] * v[j].conj();
                }
            }
        }
        out
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_pairs.is_empty()
    }
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Eigenvectors are phase-fixed so that their largest-magnitude component
/// (first one on ties) is real and nonnegative.
pub fn eigh(h: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let n = h.dim();
    let mut a = h.matrix().clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();
    let mut sweeps = 0;

    while off_diagonal_norm(&a) > JACOBI_OFF_TOL * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::numerical(format!(
                "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let g = a[(p, q)];
                let gabs = g.norm();
                if gabs == 0.0 {
                    continue;
                }
                // D = diag(1, e^{-iφ}) makes the (p,q) entry real, then a real rotation zeroes it.
                let phase = g / gabs;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * gabs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Columns of the combined unitary G restricted to (p, q).
                let gpp = Complex64::new(c, 0.0);
                let gqp = -phase.conj() * s;
                let gpq = Complex64::new(s, 0.0);
                let gqq = phase.conj() * c;
                // A <- A G
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * gpp + akq * gqp;
                    a[(k, q)] = akp * gpq + akq * gqq;
                }
                // A <- G^† A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                // V <- V G
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&i| {
            let mut col = v.column(i);
            fix_phase(&mut col);
            col
        })
        .collect();
    let degenerate_pairs = eigenvalues
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] - w[1]).abs() < DEGENERACY_TOL)
        .map(|(i, _)| (i, i + 1))
        .collect();

    Ok(SpectralDecomposition { eigenvalues, eigenvectors, degenerate_pairs, sweeps })
}

/// Rotates `v` by a global phase so its largest-magnitude entry is real and nonnegative.
pub fn fix_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-12)).unwrap();
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// Divides a PSD Hermitian matrix by its trace.
pub fn normalize_to_density(c: &HermitianMatrix) -> Result<DensityMatrix> {
    let tr = c.trace();
    if !(tr > 0.0) {
        return Err(Error::validation(format!("trace must be positive, got {tr}")));
    }
    let scaled = HermitianMatrix(c.matrix().scale(Complex64::new(1.0 / tr, 0.0)));
    DensityMatrix::new(scaled)
}

/// `e^{itH}` assembled from the spectral decomposition of `H`.
pub fn expm_unitary(h: &HermitianMatrix, t: f64) -> Result<ComplexMatrix> {
    let spec = eigh(h)?;
    Ok(spec.apply_function(|lam| Complex64::from_polar(1.0, t * lam)))
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vector_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `|⟨a|b⟩|²` for unit vectors.
pub fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    inner(a, b).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_half_is_degenerate() {
        let h = HermitianMatrix::from_real_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let s = eigh(&h).unwrap();
        assert_eq!(s.eigenvalues, vec![0.5, 0.5]);
        assert_eq!(s.degenerate_pairs, vec![(0, 1)]);
        assert!(inner(&s.eigenvectors[0], &s.eigenvectors[1]).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 1.0)], vec![c(0.0, 1.0), c(1.0, 0.0)]])
            .unwrap();
        assert!(matches!(HermitianMatrix::new(m), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_non_square_and_nan() {
        assert!(ComplexMatrix::from_real_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(ComplexMatrix::from_real_rows(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn complex_hermitian_eigenpairs() {
        // [[2, i],[-i, 2]] has eigenvalues 3 and 1.
        let m = ComplexMatrix::from_rows(&[vec![c(2.0, 0.0), c(0.0, 1.0)], vec![c(0.0, -1.0), c(2.0, 0.0)]])
            .unwrap();
        let h = HermitianMatrix::new(m.clone()).unwrap();
        let s = eigh(&h).unwrap();
        assert!((s.eigenvalues[0] - 3.0).abs() < 1e-13);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-13);
        for (lam, v) in s.eigenvalues.iter().zip(&s.eigenvectors) {
            let mv = m.mul_vec(v);
            for (x, y) in mv.iter().zip(v) {
                assert!((x - y * *lam).norm() < 1e-12);
            }
            let pivot = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let p = v.iter().find(|z| z.norm() >= pivot * (1.0 - 1e-12)).unwrap();
            assert!(p.im.abs() < 1e-15 && p.re >= 0.0);
        }
    }

    #[test]
    fn normalize_rejects_bad_trace_and_negative_spectrum() {
        let zero = HermitianMatrix::from_real_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(normalize_to_density(&zero).is_err());
        let indefinite = HermitianMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(normalize_to_density(&indefinite).is_err());
        let two_i = HermitianMatrix::from_real_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let rho = normalize_to_density(&two_i).unwrap();
        assert!(rho.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale(c(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn expm_at_zero_is_identity() {
        let h = HermitianMatrix::from_real_rows(&[vec![0.3, 0.1], vec![0.1, 0.7]]).unwrap();
        let u = expm_unitary(&h, 0.0).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
    }
}
