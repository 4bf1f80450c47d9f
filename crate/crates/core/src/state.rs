use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Hermitian, positive semidefinite, unit-trace state of a finite system.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        linalg::check_square(&entries, "density matrix")?;
        let defect = linalg::hermiticity_defect(&entries);
        if defect > HERMITIAN_TOL {
            return Err(Error::Contract(format!("density matrix not Hermitian ({defect:e})")));
        }
        let tr = linalg::trace(&entries);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Contract(format!("density matrix trace {tr}")));
        }
        let lowest = linalg::eigh(&entries).0.first().copied().unwrap_or(0.0);
        if lowest < -PSD_TOL {
            return Err(Error::Contract(format!("negative eigenvalue {lowest:e}")));
        }
        Ok(Self { entries })
    }

    /// Hermitizes and renormalizes the trace before validating. Used for
    /// matrices assembled from sums where round-off breaks symmetry slightly.
    pub fn from_nearly_valid(entries: CMatrix) -> Result<Self> {
        linalg::check_square(&entries, "density matrix")?;
        let h = linalg::hermitian_part(&entries);
        let tr = linalg::trace(&h).re;
        if tr <= 0.0 {
            return Err(Error::Contract(format!("non-positive trace {tr}")));
        }
        Self::new(h / linalg::c(tr))
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Contract(format!("state norm {norm}")));
        }
        Self::from_nearly_valid(linalg::outer(psi, psi))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { entries: CMatrix::identity(dim, dim) / linalg::c(dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// `tr(ρ O)`.
    pub fn expectation(&self, op: &CMatrix) -> Complex64 {
        (0..self.dim()).map(|i| (0..self.dim()).map(|k| self.entries[(i, k)] * op[(k, i)]).sum::<Complex64>()).sum()
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        linalg::trace_norm(&(&self.entries - &other.entries))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn rejects_bad_trace() {
        let m = CMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(m), Err(Error::Contract(_))));
    }

    #[test]
    fn rejects_negative() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.2), c(-0.2)]));
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn pure_state_purity_one() {
        let psi = CVector::from_vec(vec![c(0.6), Complex64::new(0.0, 0.8)]);
        let rho = DensityMatrix::pure(&psi).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-14);
    }
}
