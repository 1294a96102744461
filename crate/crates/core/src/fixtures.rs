//! Built-in matrices: the one-, three- and six-month covariance matrix of
//! rate changes and the density matrices derived from it.

use crate::error::{Error, Result};
use crate::linalg::{normalize_to_density, DensityMatrix, HermitianMatrix};

/// Covariance of one-, three- and six-month rate changes.
pub const SIGMA3: [[f64; 3]; 3] = [
    [0.000189, 0.000097, 0.000091],
    [0.000097, 0.000106, 0.000101],
    [0.000091, 0.000101, 0.000126],
];

/// Tenors (years) of the `SIGMA3` rows.
pub const SIGMA3_TENORS: [f64; 3] = [1.0 / 12.0, 3.0 / 12.0, 6.0 / 12.0];

pub const FIXTURE_NAMES: [&str; 4] = ["sigma2", "sigma3", "rho2", "rho4"];

pub fn sigma3() -> HermitianMatrix {
    let rows: Vec<Vec<f64>> = SIGMA3.iter().map(|r| r.to_vec()).collect();
    HermitianMatrix::from_real_rows(&rows).expect("fixture is symmetric")
}

/// Top-left 2×2 block of `SIGMA3`.
pub fn sigma2() -> HermitianMatrix {
    let rows: Vec<Vec<f64>> = SIGMA3[..2].iter().map(|r| r[..2].to_vec()).collect();
    HermitianMatrix::from_real_rows(&rows).expect("fixture is symmetric")
}

pub fn rho2() -> DensityMatrix {
    normalize_to_density(&sigma2()).expect("fixture is PSD")
}

/// `SIGMA3` zero-padded to 4×4 and trace-normalized.
pub fn rho4() -> DensityMatrix {
    normalize_to_density(&sigma3().zero_pad(4).expect("pad")).expect("fixture is PSD")
}

pub fn tenors_for(name: &str) -> Option<Vec<f64>> {
    match name {
        "sigma3" => Some(SIGMA3_TENORS.to_vec()),
        "sigma2" => Some(SIGMA3_TENORS[..2].to_vec()),
        _ => None,
    }
}

/// Looks up a built-in matrix by name (`identityN` gives the N×N identity).
pub fn by_name(name: &str) -> Result<HermitianMatrix> {
    match name {
        "sigma2" => Ok(sigma2()),
        "sigma3" => Ok(sigma3()),
        "rho2" => Ok(rho2().hermitian().clone()),
        "rho4" => Ok(rho4().hermitian().clone()),
        _ => {
            if let Some(n) = name.strip_prefix("identity").and_then(|n| n.parse::<usize>().ok()) {
                if n > 0 {
                    let rows: Vec<Vec<f64>> =
                        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
                    return HermitianMatrix::from_real_rows(&rows);
                }
            }
            Err(Error::validation(format!("unknown fixture '{name}'")))
        }
    }
}
