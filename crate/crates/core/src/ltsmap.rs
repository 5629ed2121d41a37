//! The exact local-time map and its derived objects.
//!
//! Every map here is a [`BlockCoefficientMap`]: an `N × N` coefficient matrix
//! `c` acting as `ρ ↦ Σ_{m,n} c[m][n] P_m ρ P_n` on a fixed projector family.
//! Composition of two such maps on the same family is the entrywise product of
//! their coefficients, since `P_m P_n = δ_mn P_m` removes every cross term.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, phase};
use crate::spectra::{Blocks, SpectralDecomposition};
use crate::states::{self, DensityMatrix};
use crate::C64;

/// Tolerance for `c[n][m] = conj(c[m][n])`.
pub const HERMITIAN_COMPAT_TOL: f64 = 1e-12;
/// Eigenvalues of the modulus matrix below `-PSD_TOL` rule out a Kraus form.
pub const PSD_TOL: f64 = 1e-10;
/// Kraus weights at or below this are dropped.
pub const KRAUS_WEIGHT_CUTOFF: f64 = 1e-13;

/// `exp(−gap² / 4λ)`; equal to 1 for `λ = ∞`.
pub fn gaussian_factor(gap: f64, lambda: f64) -> f64 {
    if lambda.is_infinite() {
        1.0
    } else {
        (-gap * gap / (4.0 * lambda)).exp()
    }
}

/// Parameters of the Gaussian final-instant distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTimeParams {
    /// Centre `t0 ≥ 0` of the distribution.
    pub t0: f64,
    /// Concentration `λ > 0` (energy²); `f64::INFINITY` gives sharp time.
    pub lambda: f64,
    /// Half-width of the integration window, reported and checked only.
    pub delta_t: Option<f64>,
}

/// Modelling bounds that a parameter set violates. None of them prevents
/// constructing the map.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamWarning {
    /// `λ ≤ C²` for energy scale `C`.
    LambdaBelowScale { lambda: f64, scale_sq: f64 },
    /// `Δt ≥ τ_min`.
    WindowNotBelowMinimalTime { delta_t: f64, tau_min: f64 },
    /// `Δt ≤ λ^(−1/2)`.
    WindowNotAboveWidth { delta_t: f64, width: f64 },
    /// `t0 = 0`, outside the open interval the construction assumes.
    InitialInstant,
}

impl fmt::Display for ParamWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LambdaBelowScale { lambda, scale_sq } => {
                write!(f, "lambda = {lambda} does not exceed C^2 = {scale_sq}")
            }
            Self::WindowNotBelowMinimalTime { delta_t, tau_min } => {
                write!(f, "delta_t = {delta_t} is not below tau_min = {tau_min}")
            }
            Self::WindowNotAboveWidth { delta_t, width } => {
                write!(f, "delta_t = {delta_t} is not above lambda^-1/2 = {width}")
            }
            Self::InitialInstant => write!(f, "t0 = 0 lies outside (0, inf); map shown for the t -> 0 limit"),
        }
    }
}

impl LocalTimeParams {
    pub fn new(t0: f64, lambda: f64) -> Result<Self> {
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(invalid("t0 must be finite and >= 0"));
        }
        if !(lambda > 0.0) {
            return Err(invalid("lambda must be > 0"));
        }
        Ok(Self {
            t0,
            lambda,
            delta_t: None,
        })
    }

    pub fn with_window(mut self, delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0) || !delta_t.is_finite() {
            return Err(invalid("delta_t must be positive"));
        }
        self.delta_t = Some(delta_t);
        Ok(self)
    }

    /// `λ^(−1/2)`, the width scale of the distribution.
    pub fn width(&self) -> f64 {
        1.0 / self.lambda.sqrt()
    }

    /// Check the modelling bounds against a spectrum and, for the window
    /// condition `τ_min > Δt > λ^(−1/2)`, an initial state.
    pub fn validate(&self, spec: &SpectralDecomposition, rho: Option<&DensityMatrix>) -> Result<Vec<ParamWarning>> {
        let mut out = Vec::new();
        let scale_sq = spec.energy_scale() * spec.energy_scale();
        if self.lambda <= scale_sq {
            out.push(ParamWarning::LambdaBelowScale {
                lambda: self.lambda,
                scale_sq,
            });
        }
        if self.t0 == 0.0 {
            out.push(ParamWarning::InitialInstant);
        }
        if let Some(dt) = self.delta_t {
            if dt <= self.width() {
                out.push(ParamWarning::WindowNotAboveWidth {
                    delta_t: dt,
                    width: self.width(),
                });
            }
            if let Some(rho) = rho {
                let tau = minimal_time(&states::energy_stats(rho, spec)?);
                if dt >= tau {
                    out.push(ParamWarning::WindowNotBelowMinimalTime {
                        delta_t: dt,
                        tau_min: tau,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// `max{π/(2ΔH), π/(2(⟨H⟩ − E_g))}`; infinite for a stationary state.
pub fn minimal_time(stats: &states::EnergyStats) -> f64 {
    let t = |x: f64| if x > 0.0 { PI / (2.0 * x) } else { f64::INFINITY };
    t(stats.std).max(t(stats.mean_above_ground))
}

/// A map `ρ ↦ Σ_{m,n} c[m][n] P_m ρ P_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCoefficientMap {
    blocks: Arc<Blocks>,
    coeff: DMatrix<C64>,
    /// Per-level angles `φ_m` such that `c[m][n] = e^{−iφ_m} A[m][n] e^{iφ_n}`
    /// with `A` real, when the map is known to factor that way.
    phases: Option<Vec<f64>>,
    notes: Vec<String>,
}

impl BlockCoefficientMap {
    /// Wrap a coefficient matrix, checking its shape and Hermitian
    /// compatibility.
    pub fn from_coefficients(blocks: Arc<Blocks>, coeff: DMatrix<C64>) -> Result<Self> {
        let n = blocks.count();
        if coeff.nrows() != coeff.ncols() {
            return Err(Error::NotSquare {
                rows: coeff.nrows(),
                cols: coeff.ncols(),
            });
        }
        if coeff.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: coeff.nrows(),
            });
        }
        let defect = linalg::hermiticity_defect(&coeff);
        if !(defect <= HERMITIAN_COMPAT_TOL) {
            return Err(invalid(format!(
                "coefficients are not Hermitian-compatible (defect {defect:e})"
            )));
        }
        Ok(Self {
            blocks,
            coeff,
            phases: None,
            notes: Vec::new(),
        })
    }

    pub(crate) fn from_parts(
        blocks: Arc<Blocks>,
        coeff: DMatrix<C64>,
        phases: Option<Vec<f64>>,
        notes: Vec<String>,
    ) -> Self {
        Self {
            blocks,
            coeff,
            phases,
            notes,
        }
    }

    /// The identity map.
    pub fn identity(blocks: Arc<Blocks>) -> Self {
        let n = blocks.count();
        Self {
            blocks,
            coeff: DMatrix::from_element(n, n, C64::new(1.0, 0.0)),
            phases: Some(vec![0.0; n]),
            notes: Vec::new(),
        }
    }

    /// `ρ ↦ Σ_m P_m ρ P_m`.
    pub fn luders(blocks: Arc<Blocks>) -> Self {
        let n = blocks.count();
        Self {
            blocks,
            coeff: DMatrix::identity(n, n),
            phases: Some(vec![0.0; n]),
            notes: Vec::new(),
        }
    }

    pub fn blocks(&self) -> &Arc<Blocks> {
        &self.blocks
    }

    pub fn coefficients(&self) -> &DMatrix<C64> {
        &self.coeff
    }

    pub fn coefficient(&self, m: usize, n: usize) -> C64 {
        self.coeff[(m, n)]
    }

    /// Number of blocks `N`.
    pub fn count(&self) -> usize {
        self.coeff.nrows()
    }

    pub fn dim(&self) -> usize {
        self.blocks.dim()
    }

    pub fn phases(&self) -> Option<&[f64]> {
        self.phases.as_deref()
    }

    /// Warnings and remarks attached at construction.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub(crate) fn same_blocks(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.blocks, &other.blocks) || self.blocks == other.blocks
    }

    /// `outer ∘ self`: entrywise product of the coefficients.
    pub fn then(&self, outer: &Self) -> Result<Self> {
        compose(outer, self)
    }

    /// Largest `|c_self[m][n] − c_other[m][n]|`.
    pub fn max_coefficient_diff(&self, other: &Self) -> Result<f64> {
        if !self.same_blocks(other) {
            return Err(Error::BlockMismatch);
        }
        Ok(linalg::max_abs_diff(&self.coeff, &other.coeff))
    }

    /// Largest `|c[m][n]|` over `m ≠ n`.
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.count();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.coeff[(i, j)].norm());
                }
            }
        }
        worst
    }

    /// Image of an arbitrary operator.
    pub fn apply_operator(&self, op: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        self.blocks.schur(&self.coeff, op)
    }

    /// Image of a state. Positivity is inherited only for CP maps; the result
    /// is not re-validated.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_psd_unchecked(self.apply_operator(rho.matrix())?))
    }

    /// Kraus operators `K_k = √γ_k Σ_m u_k[m] e^{−iφ_m} P_m` from the
    /// eigendecomposition `A = Σ_k γ_k u_k u_k†` of the phase-stripped
    /// coefficients.
    pub fn kraus_decomposition(&self) -> Result<KrausSet> {
        let n = self.count();
        let a = match &self.phases {
            Some(ph) => DMatrix::from_fn(n, n, |m, k| phase(ph[m]).conj() * self.coeff[(m, k)] * phase(ph[k])),
            None => self.coeff.clone(),
        };
        let (values, vectors) = linalg::hermitian_eigen(&a);
        if values[0] < -PSD_TOL {
            return Err(Error::NoKrausForm(values[0]));
        }
        let mut weights = Vec::new();
        let mut level_coeffs = Vec::new();
        for (k, &gamma) in values.iter().enumerate().rev() {
            if gamma <= KRAUS_WEIGHT_CUTOFF {
                continue;
            }
            let mut u: Vec<C64> = vectors.column(k).iter().copied().collect();
            // Fix the global phase: largest-modulus component real positive.
            let mut big = 0;
            for (i, z) in u.iter().enumerate() {
                if z.norm() > u[big].norm() + 1e-12 {
                    big = i;
                }
            }
            let g = u[big].conj() / u[big].norm();
            for z in &mut u {
                *z *= g;
            }
            let s = gamma.sqrt();
            let kappa = (0..n)
                .map(|m| {
                    let ph = self.phases.as_ref().map_or(C64::new(1.0, 0.0), |p| phase(p[m]));
                    u[m] * ph * s
                })
                .collect();
            weights.push(gamma);
            level_coeffs.push(kappa);
        }
        Ok(KrausSet {
            blocks: self.blocks.clone(),
            weights,
            level_coeffs,
        })
    }
}

/// `outer ∘ inner` on a shared projector family.
pub fn compose(outer: &BlockCoefficientMap, inner: &BlockCoefficientMap) -> Result<BlockCoefficientMap> {
    if !outer.same_blocks(inner) {
        return Err(Error::BlockMismatch);
    }
    let coeff = outer.coeff.component_mul(&inner.coeff);
    let phases = match (&outer.phases, &inner.phases) {
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x + y).collect()),
        _ => None,
    };
    let mut notes = outer.notes.clone();
    for n in &inner.notes {
        if !notes.contains(n) {
            notes.push(n.clone());
        }
    }
    Ok(BlockCoefficientMap::from_parts(
        outer.blocks.clone(),
        coeff,
        phases,
        notes,
    ))
}

/// Coefficients `exp(−i t (E_m − E_n)) · exp(−(E_m − E_n)² / 4λ)`.
fn lts_coefficients(spec: &SpectralDecomposition, t: f64, lambda: f64) -> DMatrix<C64> {
    let e = spec.energies();
    let n = e.len();
    DMatrix::from_fn(n, n, |m, k| {
        if m == k {
            C64::new(1.0, 0.0)
        } else {
            let gap = e[m] - e[k];
            phase(t * gap) * gaussian_factor(gap, lambda)
        }
    })
}

/// The exact local-time map at `params`. Violated modelling bounds are kept
/// as notes on the map.
pub fn exact_map(spec: &SpectralDecomposition, params: &LocalTimeParams) -> Result<BlockCoefficientMap> {
    let checked = LocalTimeParams::new(params.t0, params.lambda)?;
    let mut checked = checked;
    checked.delta_t = params.delta_t;
    let notes = checked.validate(spec, None)?.iter().map(|w| format!("{w}")).collect();
    Ok(BlockCoefficientMap::from_parts(
        spec.blocks().clone(),
        lts_coefficients(spec, params.t0, params.lambda),
        Some(spec.energies().iter().map(|e| params.t0 * e).collect()),
        notes,
    ))
}

/// Conjugation by `exp(−i t H)`.
pub fn unitary_map(spec: &SpectralDecomposition, t: f64) -> BlockCoefficientMap {
    BlockCoefficientMap::from_parts(
        spec.blocks().clone(),
        lts_coefficients(spec, t, f64::INFINITY),
        Some(spec.energies().iter().map(|e| t * e).collect()),
        Vec::new(),
    )
}

/// Composition of `k` exact maps over equal subintervals of `(0, t0]`.
pub fn kfold_family_map(spec: &SpectralDecomposition, params: &LocalTimeParams, k: u32) -> Result<BlockCoefficientMap> {
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    let step = LocalTimeParams::new(params.t0 / f64::from(k), params.lambda)?;
    let piece = exact_map(spec, &step)?;
    let mut acc = piece.clone();
    for _ in 1..k {
        acc = compose(&piece, &acc)?;
    }
    Ok(acc)
}

/// Frobenius norm of `E_(0)[ρ] − ρ`, the jump of the map at `t0 = 0`.
pub fn identity_defect(spec: &SpectralDecomposition, lambda: f64, rho: &DensityMatrix) -> Result<f64> {
    let map = exact_map(spec, &LocalTimeParams::new(0.0, lambda)?)?;
    let out = map.apply(rho)?;
    Ok((out.matrix() - rho.matrix()).norm())
}

/// Effect of a weak interaction acting before the initial instant:
/// `σ'(0) = Σ_{p,q} exp(−(E'_p − E'_q)² / 4λ') p_p ρ0 p_q`, and its trace
/// distance from `ρ0`. Requires `λ' ≥ λ`.
pub fn initial_instant_perturbation(
    pre_spec: &SpectralDecomposition,
    lambda: f64,
    lambda_prime: f64,
    rho0: &DensityMatrix,
) -> Result<(DensityMatrix, f64)> {
    if !(lambda > 0.0) || !(lambda_prime > 0.0) {
        return Err(invalid("lambda and lambda' must be > 0"));
    }
    if lambda_prime < lambda {
        return Err(invalid("lambda' must not be smaller than lambda"));
    }
    let map = exact_map(pre_spec, &LocalTimeParams::new(0.0, lambda_prime)?)?;
    let sigma = map.apply(rho0)?;
    let dev = states::trace_distance(&sigma, rho0)?;
    Ok((sigma, dev))
}

/// Kraus operators of a block-coefficient map, each a combination
/// `Σ_m κ_k[m] P_m` of the projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    blocks: Arc<Blocks>,
    weights: Vec<f64>,
    level_coeffs: Vec<Vec<C64>>,
}

impl KrausSet {
    /// Eigenvalues `γ_k` of the modulus matrix, descending.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `κ_k[m]` with `K_k = Σ_m κ_k[m] P_m`.
    pub fn level_coefficients(&self, k: usize) -> &[C64] {
        &self.level_coeffs[k]
    }

    /// Dense `K_k`.
    pub fn operator(&self, k: usize) -> DMatrix<C64> {
        let d = self.blocks.dim();
        let labels = self.blocks.labels();
        let diag = DVector::from_iterator(d, labels.iter().map(|&l| self.level_coeffs[k][l]));
        self.blocks.from_working(DMatrix::from_diagonal(&diag))
    }

    pub fn operators(&self) -> Vec<DMatrix<C64>> {
        (0..self.len()).map(|k| self.operator(k)).collect()
    }

    /// `Σ_k K_k† K_k`.
    pub fn completeness(&self) -> DMatrix<C64> {
        let d = self.blocks.dim();
        let mut acc = DMatrix::zeros(d, d);
        for k in self.operators() {
            acc += k.adjoint() * &k;
        }
        acc
    }

    /// `Σ_k K_k ρ K_k†`.
    pub fn apply(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        self.blocks.check_operator(rho)?;
        let d = self.blocks.dim();
        let mut acc = DMatrix::zeros(d, d);
        for k in self.operators() {
            acc += &k * rho * k.adjoint();
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::random::{random_density_matrix, random_hermitian};
    use crate::spectra::DEFAULT_DEG_TOL;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn qubit(gap: f64) -> SpectralDecomposition {
        SpectralDecomposition::from_diagonal(&[0.0, gap], DEFAULT_DEG_TOL).unwrap()
    }

    fn coherent_qubit() -> DensityMatrix {
        DensityMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)],
        ))
        .unwrap()
    }

    #[test]
    fn gaussian_reference_constants() {
        let e = 1.0;
        let lambda = 1.1 * (e / PI).powi(2);
        let map = exact_map(&qubit(e), &LocalTimeParams::new(0.3, lambda).unwrap()).unwrap();
        assert!((map.coefficient(0, 1).norm() - 0.1059).abs() < 0.002);
        let lambda = (0.7 * e / PI).powi(2);
        let map = exact_map(&qubit(e / 1.71), &LocalTimeParams::new(0.0, lambda).unwrap()).unwrap();
        assert!((map.coefficient(0, 1).norm() - 0.179).abs() < 0.005);
    }

    #[test]
    fn infinite_lambda_is_unitary() {
        let spec = SpectralDecomposition::from_diagonal(&[0.0, 0.4, 1.3], DEFAULT_DEG_TOL).unwrap();
        let a = exact_map(&spec, &LocalTimeParams::new(2.0, f64::INFINITY).unwrap()).unwrap();
        let b = unitary_map(&spec, 2.0);
        assert!(a.max_coefficient_diff(&b).unwrap() < 1e-15);
        let k = a.kraus_decomposition().unwrap();
        assert_eq!(k.len(), 1);
        assert!((k.weights()[0] - 3.0).abs() < 1e-12);
        let u = k.operator(0);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![phase(0.0), phase(0.8), phase(2.6)]));
        assert!(max_abs_diff(&u, &expected) < 1e-12);
    }

    #[test]
    fn qubit_action() {
        let gap = 1.3;
        let lambda = 0.9;
        let t0 = 0.7;
        let map = exact_map(&qubit(gap), &LocalTimeParams::new(t0, lambda).unwrap()).unwrap();
        let out = map.apply(&coherent_qubit()).unwrap();
        let expected = phase(gap * t0).conj() * 0.5 * (-gap * gap / (4.0 * lambda)).exp();
        // Level 0 is the lower one, so c[0][1] carries e^{+i gap t0}.
        assert!((out.matrix()[(0, 1)] - expected).norm() < 1e-15);
        assert_eq!(out.matrix()[(0, 0)], c(0.5, 0.0));
    }

    #[test]
    fn unital_and_diagonal_fixed() {
        let spec = SpectralDecomposition::spin_ensemble(3, 1.0).unwrap();
        let map = exact_map(&spec, &LocalTimeParams::new(1.7, 1.2).unwrap()).unwrap();
        let mixed = DensityMatrix::maximally_mixed(8).unwrap();
        assert!(max_abs_diff(map.apply(&mixed).unwrap().matrix(), mixed.matrix()) < 1e-15);
        let diag = DensityMatrix::diagonal(&[0.1, 0.2, 0.0, 0.1, 0.3, 0.0, 0.2, 0.1]).unwrap();
        assert!(max_abs_diff(map.apply(&diag).unwrap().matrix(), diag.matrix()) < 1e-15);
    }

    #[test]
    fn notes_record_modelling_bounds() {
        let spec = qubit(1.0);
        let map = exact_map(&spec, &LocalTimeParams::new(0.0, 0.5).unwrap()).unwrap();
        assert_eq!(map.notes().len(), 2);
        let map = exact_map(&spec, &LocalTimeParams::new(1.0, 2.0).unwrap()).unwrap();
        assert!(map.notes().is_empty());
        assert!(LocalTimeParams::new(1.0, 0.0).is_err());
        assert!(LocalTimeParams::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn window_validation() {
        let spec = qubit(1.0);
        let rho = coherent_qubit();
        // ΔH = ⟨H⟩ − E_g = 0.5, so τ_min = π.
        let p = LocalTimeParams::new(1.0, 4.0).unwrap().with_window(1.0).unwrap();
        assert!(p.validate(&spec, Some(&rho)).unwrap().is_empty());
        let p = LocalTimeParams::new(1.0, 4.0).unwrap().with_window(4.0).unwrap();
        assert!(matches!(
            p.validate(&spec, Some(&rho)).unwrap()[..],
            [ParamWarning::WindowNotBelowMinimalTime { .. }]
        ));
        let p = LocalTimeParams::new(1.0, 4.0).unwrap().with_window(0.4).unwrap();
        assert!(matches!(
            p.validate(&spec, Some(&rho)).unwrap()[..],
            [ParamWarning::WindowNotAboveWidth { .. }]
        ));
    }

    #[test]
    fn composition_examples() {
        let spec = SpectralDecomposition::from_diagonal(&[0.0, 0.5, 2.0], DEFAULT_DEG_TOL).unwrap();
        let lambda = 0.8;
        let e = exact_map(&spec, &LocalTimeParams::new(1.0, lambda).unwrap()).unwrap();
        let id = BlockCoefficientMap::identity(spec.blocks().clone());
        assert_eq!(compose(&id, &e).unwrap().coefficients(), e.coefficients());
        let two = compose(
            &exact_map(&spec, &LocalTimeParams::new(0.6, lambda).unwrap()).unwrap(),
            &exact_map(&spec, &LocalTimeParams::new(0.4, lambda).unwrap()).unwrap(),
        )
        .unwrap();
        let gap: f64 = 2.0;
        assert!((two.coefficient(0, 2).norm() - (-2.0 * gap * gap / (4.0 * lambda)).exp()).abs() < 1e-15);
        let k5 = kfold_family_map(&spec, &LocalTimeParams::new(1.0, lambda).unwrap(), 5).unwrap();
        assert!((k5.coefficient(0, 2).norm() - (-5.0 * gap * gap / (4.0 * lambda)).exp()).abs() < 1e-15);
        assert!((k5.coefficient(0, 2).arg() - e.coefficient(0, 2).arg()).abs() < 1e-12);
        let k1 = kfold_family_map(&spec, &LocalTimeParams::new(1.0, lambda).unwrap(), 1).unwrap();
        assert_eq!(k1, e);
        assert!(kfold_family_map(&spec, &LocalTimeParams::new(1.0, lambda).unwrap(), 0).is_err());
        let other = qubit(1.0);
        assert_eq!(compose(&unitary_map(&other, 1.0), &e), Err(Error::BlockMismatch));
    }

    #[test]
    fn kfold_limit_is_luders() {
        let spec = SpectralDecomposition::from_diagonal(&[0.0, 1.0, 2.0, 3.0], DEFAULT_DEG_TOL).unwrap();
        let scale = spec.energy_scale();
        let map = kfold_family_map(&spec, &LocalTimeParams::new(3.0, 1.01 * scale * scale).unwrap(), 400).unwrap();
        assert!(map.max_off_diagonal() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density_matrix(&mut rng, 4);
        let l = states::luders_project(&rho, &spec).unwrap();
        assert!(max_abs_diff(map.apply(&rho).unwrap().matrix(), l.matrix()) < 1e-12);
    }

    #[test]
    fn qubit_kraus_by_hand() {
        let gap = 1.0;
        let lambda = 0.5;
        let a = gaussian_factor(gap, lambda);
        let map = exact_map(&qubit(gap), &LocalTimeParams::new(0.9, lambda).unwrap()).unwrap();
        let k = map.kraus_decomposition().unwrap();
        assert_eq!(k.len(), 2);
        assert!((k.weights()[0] - (1.0 + a)).abs() < 1e-14);
        assert!((k.weights()[1] - (1.0 - a)).abs() < 1e-14);
        assert!(max_abs_diff(&k.completeness(), &DMatrix::identity(2, 2)) < 1e-14);
        let rho = coherent_qubit();
        assert!(max_abs_diff(&k.apply(rho.matrix()).unwrap(), map.apply(&rho).unwrap().matrix()) < 1e-14);
    }

    #[test]
    fn non_psd_has_no_kraus_form() {
        let blocks = Arc::new(Blocks::contiguous(vec![1, 1]).unwrap());
        let coeff = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.2, 0.0), c(1.2, 0.0), c(1.0, 0.0)]);
        let map = BlockCoefficientMap::from_coefficients(blocks, coeff).unwrap();
        assert!(matches!(map.kraus_decomposition(), Err(Error::NoKrausForm(v)) if (v + 0.2).abs() < 1e-12));
    }

    #[test]
    fn rejects_incompatible_coefficients() {
        let blocks = Arc::new(Blocks::contiguous(vec![1, 1]).unwrap());
        let coeff = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.1), c(0.2, 0.1), c(1.0, 0.0)]);
        assert!(BlockCoefficientMap::from_coefficients(blocks, coeff).is_err());
    }

    #[test]
    fn identity_defect_examples() {
        let spec = qubit(1.0);
        let lambda = 0.7;
        let a = gaussian_factor(1.0, lambda);
        let d = identity_defect(&spec, lambda, &coherent_qubit()).unwrap();
        assert!((d - (1.0 - a) * 2f64.sqrt() * 0.5).abs() < 1e-15);
        let diag = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        assert_eq!(identity_defect(&spec, lambda, &diag).unwrap(), 0.0);
        let spin = SpectralDecomposition::spin_ensemble(4, 1.0).unwrap();
        let e = spin.span();
        let psi = DensityMatrix::from_pure(&states::pure_extremes(&spin, 1.0).unwrap()).unwrap();
        let d = identity_defect(&spin, 1.1 * (e / PI).powi(2), &psi).unwrap();
        assert!((d - 0.632).abs() < 1e-3);
    }

    #[test]
    fn initial_instant_examples() {
        let rho = coherent_qubit();
        let trivial = SpectralDecomposition::from_diagonal(&[0.0, 0.0], DEFAULT_DEG_TOL).unwrap();
        let (s, dev) = initial_instant_perturbation(&trivial, 1.0, 1.0, &rho).unwrap();
        assert_eq!(s, rho);
        assert_eq!(dev, 0.0);
        let big_c = 1.0;
        let lambda = 1.01 * big_c * big_c;
        let (_, dev) = initial_instant_perturbation(&qubit(0.1 * big_c), lambda, lambda, &rho).unwrap();
        assert!(dev < 0.003);
        let (_, dev) = initial_instant_perturbation(&qubit(big_c), lambda, lambda, &rho).unwrap();
        assert!(dev > 0.1);
        assert!(initial_instant_perturbation(&qubit(1.0), 2.0, 1.0, &rho).is_err());
    }

    #[test]
    fn unitary_group_law_and_zero_time() {
        let spec = SpectralDecomposition::from_diagonal(&[-1.0, 0.2, 0.9], DEFAULT_DEG_TOL).unwrap();
        let id = BlockCoefficientMap::identity(spec.blocks().clone());
        assert!(unitary_map(&spec, 0.0).max_coefficient_diff(&id).unwrap() < 1e-16);
        let ab = compose(&unitary_map(&spec, 0.4), &unitary_map(&spec, 1.1)).unwrap();
        assert!(ab.max_coefficient_diff(&unitary_map(&spec, 1.5)).unwrap() < 1e-14);
    }

    #[test]
    fn dense_hamiltonian_map_matches_conjugation_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 4);
        let spec = SpectralDecomposition::from_hermitian(&h, DEFAULT_DEG_TOL).unwrap();
        let rho = random_density_matrix(&mut rng, 4);
        // t0 = 0 and λ = ∞ is the identity.
        let map = exact_map(&spec, &LocalTimeParams::new(0.0, f64::INFINITY).unwrap()).unwrap();
        assert!(max_abs_diff(map.apply(&rho).unwrap().matrix(), rho.matrix()) < 1e-12);
    }

    fn random_spec(rng: &mut ChaCha8Rng, levels: usize) -> SpectralDecomposition {
        let mut e: Vec<f64> = Vec::new();
        for _ in 0..levels {
            let ranks = rng.random_range(1..3);
            let v: f64 = rng.random_range(-2.0..2.0);
            for _ in 0..ranks {
                e.push(v);
            }
        }
        SpectralDecomposition::from_diagonal(&e, DEFAULT_DEG_TOL).unwrap()
    }

    proptest! {
        #[test]
        fn structural_invariants(seed in any::<u64>(), levels in 1usize..5, t0 in 0.0f64..20.0, lambda in 0.05f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, levels);
            let map = exact_map(&spec, &LocalTimeParams::new(t0, lambda).unwrap()).unwrap();
            let rho = random_density_matrix(&mut rng, spec.dim());
            let out = map.apply(&rho).unwrap();
            prop_assert!((out.trace() - 1.0).abs() < 1e-12);
            prop_assert!(linalg::hermiticity_defect(out.matrix()) < 1e-12);
            prop_assert!(out.min_eigenvalue() > -1e-10);
            let before = states::energy_stats(&rho, &spec).unwrap();
            let after = states::energy_stats(&out, &spec).unwrap();
            prop_assert!((before.mean - after.mean).abs() < 1e-10);
            prop_assert!((before.std - after.std).abs() < 1e-10);
            let l = states::luders_project(&rho, &spec).unwrap();
            prop_assert!(max_abs_diff(states::luders_project(&out, &spec).unwrap().matrix(), l.matrix()) < 1e-14);
            prop_assert!(max_abs_diff(map.apply(&l).unwrap().matrix(), l.matrix()) < 1e-14);
        }

        #[test]
        fn unitary_sandwich_reproduces_exact_map(seed in any::<u64>(), t0 in 0.0f64..10.0, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0, lambda in 0.1f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, 4);
            let t1 = t0 * f1.min(f2);
            let t2 = t0 * f1.max(f2);
            let window = exact_map(&spec, &LocalTimeParams::new(t2 - t1, lambda).unwrap()).unwrap();
            let chain = compose(&unitary_map(&spec, t0 - t2), &compose(&window, &unitary_map(&spec, t1)).unwrap()).unwrap();
            let direct = exact_map(&spec, &LocalTimeParams::new(t0, lambda).unwrap()).unwrap();
            let rho = random_density_matrix(&mut rng, spec.dim());
            prop_assert!(max_abs_diff(chain.apply(&rho).unwrap().matrix(), direct.apply(&rho).unwrap().matrix()) < 1e-12);
        }

        #[test]
        fn kraus_round_trip(seed in any::<u64>(), t0 in 0.0f64..10.0, lambda in 0.05f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, 5);
            let map = exact_map(&spec, &LocalTimeParams::new(t0, lambda).unwrap()).unwrap();
            let k = map.kraus_decomposition().unwrap();
            prop_assert!(max_abs_diff(&k.completeness(), &DMatrix::identity(spec.dim(), spec.dim())) < 1e-10);
            let rho = random_density_matrix(&mut rng, spec.dim());
            prop_assert!(max_abs_diff(&k.apply(rho.matrix()).unwrap(), map.apply(&rho).unwrap().matrix()) < 1e-10);
        }
    }
}
