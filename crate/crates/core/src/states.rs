//! Density matrices and the state functionals used by the diagnostics.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, hermiticity_defect};
use crate::spectra::SpectralDecomposition;
use crate::C64;

/// Tolerance on Hermiticity and unit trace for validated states.
pub const STATE_TOL: f64 = 1e-12;
/// Lowest eigenvalue accepted for a valid state.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// A trace-one positive semidefinite Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validate a matrix. Inputs outside tolerance are rejected, not repaired.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidState("empty matrix".into()));
        }
        let herm = hermiticity_defect(&matrix);
        if !(herm <= STATE_TOL) {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = linalg::trace(&matrix).re;
        if !((tr - 1.0).abs() <= STATE_TOL) {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min = linalg::eigenvalues(&matrix)[0];
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` for the normalized input.
    pub fn from_pure(vector: &DVector<C64>) -> Result<Self> {
        let n = vector.norm();
        if vector.is_empty() || n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        let v = vector.unscale(n);
        Ok(Self {
            matrix: &v * v.adjoint(),
        })
    }

    /// Diagonal state from a probability vector (normalized here).
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidState("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroVector);
        }
        let d = DVector::from_iterator(probs.len(), probs.iter().map(|p| C64::new(p / total, 0.0)));
        Ok(Self {
            matrix: DMatrix::from_diagonal(&d),
        })
    }

    /// `I/d`.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidState("dimension must be >= 1".into()));
        }
        Ok(Self {
            matrix: DMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0)),
        })
    }

    /// Wrap a matrix that is a state by construction (sampler output, image of
    /// a state under a map). No checks are run.
    pub fn from_psd_unchecked(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigenvalues(&self.matrix)[0]
    }

    /// `ρ_A ⊗ ρ_B`.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// Trace out the second factor of `A ⊗ B` with `dim(B) = d_b`.
    pub fn partial_trace_second(&self, d_b: usize) -> Result<DensityMatrix> {
        if d_b == 0 || self.dim() % d_b != 0 {
            return Err(Error::DimensionMismatch {
                expected: d_b,
                found: self.dim(),
            });
        }
        let d_a = self.dim() / d_b;
        Ok(Self {
            matrix: linalg::partial_trace_second(&self.matrix, d_a, d_b),
        })
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// First two moments of the energy distribution of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStats {
    /// `⟨H⟩`.
    pub mean: f64,
    /// `ΔH`.
    pub std: f64,
    /// `⟨H⟩ − E_g`.
    pub mean_above_ground: f64,
}

/// Level populations `tr(P_m ρ)`.
pub fn level_populations(rho: &DensityMatrix, spec: &SpectralDecomposition) -> Result<Vec<f64>> {
    check_dim(spec.dim(), rho.dim())?;
    spec.blocks().populations(rho.matrix())
}

/// Mean, standard deviation and mean excitation above the ground level.
pub fn energy_stats(rho: &DensityMatrix, spec: &SpectralDecomposition) -> Result<EnergyStats> {
    let pops = level_populations(rho, spec)?;
    Ok(stats_from_populations(&pops, spec.energies()))
}

pub(crate) fn stats_from_populations(pops: &[f64], energies: &[f64]) -> EnergyStats {
    let mean: f64 = pops.iter().zip(energies).map(|(p, e)| p * e).sum();
    let var: f64 = pops
        .iter()
        .zip(energies)
        .map(|(p, e)| p * (e - mean) * (e - mean))
        .sum();
    EnergyStats {
        mean,
        std: var.max(0.0).sqrt(),
        mean_above_ground: mean - energies[0],
    }
}

/// `Σ_m P_m ρ P_m`.
pub fn luders_project(rho: &DensityMatrix, spec: &SpectralDecomposition) -> Result<DensityMatrix> {
    check_dim(spec.dim(), rho.dim())?;
    Ok(DensityMatrix::from_psd_unchecked(spec.blocks().luders(rho.matrix())?))
}

/// `√⟨ψ|ρ|ψ⟩` for the normalized `ψ`.
pub fn fidelity(rho: &DensityMatrix, psi: &DVector<C64>) -> Result<f64> {
    check_dim(rho.dim(), psi.len())?;
    let n = psi.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    let v = psi.unscale(n);
    let overlap = (v.adjoint() * rho.matrix() * &v)[(0, 0)].re;
    Ok(overlap.clamp(0.0, 1.0).sqrt())
}

/// `½ Σ |λ_i(a − b)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let diff = a.matrix() - b.matrix();
    Ok(0.5 * linalg::eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>())
}

/// `(|E_max⟩ + sign·|E_g⟩)/√2` built from the first basis vector of each
/// extreme level.
pub fn pure_extremes(spec: &SpectralDecomposition, sign: f64) -> Result<DVector<C64>> {
    if spec.count() < 2 {
        return Err(Error::InvalidParameter(
            "pure_extremes needs at least two levels".into(),
        ));
    }
    let top = spec.level_vector(spec.count() - 1);
    let bottom = spec.level_vector(0);
    let s = if sign < 0.0 { -1.0 } else { 1.0 };
    Ok((top + bottom.scale(s)).scale(core::f64::consts::FRAC_1_SQRT_2))
}

/// Eigenvector of level `m` as a state.
pub fn eigenstate(spec: &SpectralDecomposition, m: usize) -> Result<DensityMatrix> {
    if m >= spec.count() {
        return Err(Error::InvalidParameter(format!(
            "level {m} out of range (count {})",
            spec.count()
        )));
    }
    DensityMatrix::from_pure(&spec.level_vector(m))
}
