//! Complete positivity, divisibility and Markovianity verdicts.
//!
//! A family of maps is Markovian here when every member and every
//! intermediate map `Λ(t_j) Λ(t_i)^{-1}` is completely positive and the family
//! obeys the composition law `Λ(t_j) = Λ(t_j − t_i) Λ(t_i)`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::ltsmap::{exact_map, unitary_map, BlockCoefficientMap, LocalTimeParams};
use crate::spectra::SpectralDecomposition;
use crate::states::{self, DensityMatrix};
use crate::C64;

/// Eigenvalue tolerance for positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;
/// Largest `d` for which the dense `d² × d²` extended state is built.
pub const JAMIOLKOWSKI_MAX_DIM: usize = 64;
/// Coefficient tolerance for the composition law.
pub const COMPOSITION_TOL: f64 = 1e-10;

/// Outcome of the coefficient-matrix CP test.
#[derive(Debug, Clone, PartialEq)]
pub struct CpReport {
    /// Smallest eigenvalue of the coefficient matrix.
    pub min_eigenvalue: f64,
    pub is_cp: bool,
    /// Unit eigenvector (over blocks) for `min_eigenvalue`.
    pub witness: Option<DVector<C64>>,
}

/// A block-coefficient map is CP exactly when its coefficient matrix is
/// positive semidefinite.
pub fn is_cp(map: &BlockCoefficientMap) -> CpReport {
    let (min, v) = linalg::min_eigenpair(map.coefficients());
    CpReport {
        min_eigenvalue: min,
        is_cp: min >= -PSD_TOL,
        witness: Some(v),
    }
}

fn check_jamiolkowski_dim(d: usize) -> Result<()> {
    if d > JAMIOLKOWSKI_MAX_DIM {
        return Err(Error::TooLarge(d));
    }
    Ok(())
}

/// `J = (1/d) Σ_{ij} |i⟩⟨j| ⊗ E[|i⟩⟨j|]` with row index `i·d + a`.
pub fn extended_state(map: &BlockCoefficientMap) -> Result<DMatrix<C64>> {
    let d = map.dim();
    check_jamiolkowski_dim(d)?;
    let mut j = DMatrix::zeros(d * d, d * d);
    let scale = 1.0 / d as f64;
    for r in 0..d {
        for s in 0..d {
            let mut unit = DMatrix::zeros(d, d);
            unit[(r, s)] = C64::new(1.0, 0.0);
            let img = map.apply_operator(&unit)?;
            for a in 0..d {
                for b in 0..d {
                    j[(r * d + a, s * d + b)] = img[(a, b)] * scale;
                }
            }
        }
    }
    Ok(j)
}

/// Smallest `⟨φ|J|φ⟩` over normalized probes, from the dense extended state.
pub fn jamiolkowski_check(map: &BlockCoefficientMap, probes: &[DVector<C64>]) -> Result<f64> {
    let j = extended_state(map)?;
    let d2 = j.nrows();
    let mut best = f64::INFINITY;
    for p in probes {
        if p.len() != d2 {
            return Err(Error::DimensionMismatch {
                expected: d2,
                found: p.len(),
            });
        }
        let n = p.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        let v = p.unscale(n);
        best = best.min((v.adjoint() * &j * &v)[(0, 0)].re);
    }
    Ok(best)
}

/// Lift a block-space witness `w` to a `d²` probe `φ` with
/// `⟨φ|J|φ⟩ ∝ w† c w`.
pub fn witness_probe(map: &BlockCoefficientMap, witness: &DVector<C64>) -> Result<DVector<C64>> {
    let blocks = map.blocks();
    let d = blocks.dim();
    if witness.len() != blocks.count() {
        return Err(Error::DimensionMismatch {
            expected: blocks.count(),
            found: witness.len(),
        });
    }
    // Φ = Σ_m w_m conj(v_m) v_mᵀ with v_m one working-basis vector of block m.
    let mut phi = DMatrix::<C64>::zeros(d, d);
    for m in 0..blocks.count() {
        let v = blocks.basis_vector(blocks.first_member(m));
        phi += (v.map(|z| z.conj()) * v.transpose()) * witness[m];
    }
    let flat = DVector::from_fn(d * d, |k, _| phi[(k / d, k % d)]);
    let n = flat.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(flat.unscale(n))
}

/// The map `X` with `total = X ∘ initial`: coefficient quotient. A zero
/// initial coefficient is accepted only when the total one is zero too.
pub fn intermediate_map(total: &BlockCoefficientMap, initial: &BlockCoefficientMap) -> Result<BlockCoefficientMap> {
    if !total.same_blocks(initial) {
        return Err(Error::BlockMismatch);
    }
    let n = total.count();
    let mut coeff = DMatrix::zeros(n, n);
    for r in 0..n {
        for s in 0..n {
            let den = initial.coefficient(r, s);
            let num = total.coefficient(r, s);
            coeff[(r, s)] = if den == C64::new(0.0, 0.0) {
                if num != C64::new(0.0, 0.0) {
                    return Err(Error::NotInvertible(r, s));
                }
                C64::new(0.0, 0.0)
            } else {
                num / den
            };
        }
    }
    let phases = match (total.phases(), initial.phases()) {
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x - y).collect()),
        _ => None,
    };
    Ok(BlockCoefficientMap::from_parts(
        total.blocks().clone(),
        coeff,
        phases,
        Vec::new(),
    ))
}

/// `max |c(t0) − c(t0 − t') c(t')|` for the exact family.
pub fn family_divisibility_defect(spec: &SpectralDecomposition, params: &LocalTimeParams, t_prime: f64) -> Result<f64> {
    if !(t_prime > 0.0) || t_prime > params.t0 {
        return Err(invalid("need 0 < t' <= t0"));
    }
    let total = exact_map(spec, params)?;
    let first = exact_map(spec, &LocalTimeParams::new(t_prime, params.lambda)?)?;
    let rest = exact_map(spec, &LocalTimeParams::new(params.t0 - t_prime, params.lambda)?)?;
    let composed = crate::ltsmap::compose(&rest, &first)?;
    total.max_coefficient_diff(&composed)
}

/// Analytic and sampled long-time averages of the evolved state.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAverage {
    /// `Σ_n P_n ρ P_n`.
    pub analytic: DensityMatrix,
    /// Trapezoid average of `σ(t0)` over `[0, t_max]`.
    pub numeric: DensityMatrix,
    /// Trace distance between the two.
    pub gap: f64,
}

/// Time average of the exact map's output over `t0 ∈ [0, t_max]`.
pub fn ergodic_average(
    spec: &SpectralDecomposition,
    lambda: f64,
    rho: &DensityMatrix,
    t_max: f64,
    n_samples: usize,
) -> Result<ErgodicAverage> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(invalid("t_max must be positive"));
    }
    if n_samples < 2 {
        return Err(invalid("n_samples must be >= 2"));
    }
    let n = spec.count();
    let e = spec.energies();
    let h = t_max / (n_samples - 1) as f64;
    let mut avg = DMatrix::<C64>::zeros(n, n);
    for r in 0..n {
        for s in 0..n {
            let gap = e[r] - e[s];
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n_samples {
                let w = if k == 0 || k == n_samples - 1 { 0.5 } else { 1.0 };
                acc += linalg::phase(gap * h * k as f64) * w;
            }
            avg[(r, s)] = acc * (h / t_max) * crate::ltsmap::gaussian_factor(gap, lambda);
        }
    }
    let numeric = DensityMatrix::from_psd_unchecked(spec.blocks().schur(&avg, rho.matrix())?);
    let analytic = states::luders_project(rho, spec)?;
    let gap = states::trace_distance(&analytic, &numeric)?;
    Ok(ErgodicAverage { analytic, numeric, gap })
}

/// A one-parameter family of block-coefficient maps.
pub trait MapFamily {
    fn map_at(&self, t: f64) -> Result<BlockCoefficientMap>;
}

impl<F> MapFamily for F
where
    F: Fn(f64) -> Result<BlockCoefficientMap>,
{
    fn map_at(&self, t: f64) -> Result<BlockCoefficientMap> {
        self(t)
    }
}

/// Exact maps at fixed `λ`.
#[derive(Debug, Clone)]
pub struct ExactFamily {
    pub spec: SpectralDecomposition,
    pub lambda: f64,
}

impl MapFamily for ExactFamily {
    fn map_at(&self, t: f64) -> Result<BlockCoefficientMap> {
        exact_map(&self.spec, &LocalTimeParams::new(t, self.lambda)?)
    }
}

/// Unitary conjugations `exp(−i t H)`.
#[derive(Debug, Clone)]
pub struct UnitaryFamily {
    pub spec: SpectralDecomposition,
}

impl MapFamily for UnitaryFamily {
    fn map_at(&self, t: f64) -> Result<BlockCoefficientMap> {
        Ok(unitary_map(&self.spec, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Markovian,
    NonMarkovianByComposition,
    NonMarkovianByCp,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Markovian => "markovian",
            Verdict::NonMarkovianByComposition => "non-markovian-by-composition",
            Verdict::NonMarkovianByCp => "non-markovian-by-cp",
        }
    }
}

/// Evidence for one ordered pair `t_initial < t_total`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub t_initial: f64,
    pub t_total: f64,
    /// CP report of the intermediate map; `None` when it does not exist.
    pub intermediate: Option<CpReport>,
    /// Block at which the initial map is not invertible.
    pub not_invertible: Option<(usize, usize)>,
    /// `max |c(t_total) − c(t_total − t_initial) c(t_initial)|`.
    pub composition_defect: f64,
}

impl PairReport {
    pub fn intermediate_cp(&self) -> bool {
        self.intermediate.as_ref().is_some_and(|r| r.is_cp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovianityReport {
    pub members: Vec<(f64, CpReport)>,
    pub pairs: Vec<PairReport>,
    pub verdict: Verdict,
    /// First pair `(t_initial, t_total)` responsible for the verdict, or the
    /// member time `(t, t)` when a member itself is not CP.
    pub first_failure: Option<(f64, f64)>,
}

/// Apply the Markovianity definition literally on a time grid: all members
/// and intermediate maps CP, and the composition law satisfied for every pair.
pub fn markovianity_verdict<F: MapFamily + ?Sized>(family: &F, times: &[f64]) -> Result<MarkovianityReport> {
    if times.len() < 3 {
        return Err(invalid("need at least three time points"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotoneTimes);
    }
    let maps = times.iter().map(|&t| family.map_at(t)).collect::<Result<Vec<_>>>()?;
    let members: Vec<(f64, CpReport)> = times.iter().zip(&maps).map(|(&t, m)| (t, is_cp(m))).collect();
    let mut pairs = Vec::new();
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let (intermediate, not_invertible) = match intermediate_map(&maps[j], &maps[i]) {
                Ok(x) => (Some(is_cp(&x)), None),
                Err(Error::NotInvertible(r, s)) => (None, Some((r, s))),
                Err(e) => return Err(e),
            };
            let step = family.map_at(times[j] - times[i])?;
            let composed = crate::ltsmap::compose(&step, &maps[i])?;
            pairs.push(PairReport {
                t_initial: times[i],
                t_total: times[j],
                intermediate,
                not_invertible,
                composition_defect: maps[j].max_coefficient_diff(&composed)?,
            });
        }
    }
    let (verdict, first_failure) = if let Some((t, _)) = members.iter().find(|(_, r)| !r.is_cp) {
        (Verdict::NonMarkovianByCp, Some((*t, *t)))
    } else if let Some(p) = pairs.iter().find(|p| !p.intermediate_cp()) {
        (Verdict::NonMarkovianByCp, Some((p.t_initial, p.t_total)))
    } else if let Some(p) = pairs.iter().find(|p| p.composition_defect > COMPOSITION_TOL) {
        (Verdict::NonMarkovianByComposition, Some((p.t_initial, p.t_total)))
    } else {
        (Verdict::Markovian, None)
    };
    Ok(MarkovianityReport {
        members,
        pairs,
        verdict,
        first_failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltsmap::gaussian_factor;
    use crate::random::{random_density_matrix, random_hermitian, random_pure_state};
    use crate::spectra::{Blocks, DEFAULT_DEG_TOL};
    use alloc::sync::Arc;
    use alloc::vec;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn qubit(gap: f64) -> SpectralDecomposition {
        SpectralDecomposition::from_diagonal(&[0.0, gap], DEFAULT_DEG_TOL).unwrap()
    }

    fn synthetic() -> BlockCoefficientMap {
        let blocks = Arc::new(Blocks::contiguous(vec![1, 1]).unwrap());
        let coeff = DMatrix::from_row_slice(2, 2, &[c(1.0), c(1.2), c(1.2), c(1.0)]);
        BlockCoefficientMap::from_coefficients(blocks, coeff).unwrap()
    }

    #[test]
    fn cp_examples() {
        let spec = SpectralDecomposition::spin_ensemble(3, 1.0).unwrap();
        for (t0, lambda) in [(0.0, 0.3), (2.5, 1.0), (40.0, 7.0)] {
            let r = is_cp(&exact_map(&spec, &LocalTimeParams::new(t0, lambda).unwrap()).unwrap());
            assert!(r.is_cp, "{t0} {lambda} {}", r.min_eigenvalue);
        }
        let r = is_cp(&BlockCoefficientMap::identity(spec.blocks().clone()));
        assert!(r.is_cp && r.min_eigenvalue >= -1e-12);
        let r = is_cp(&synthetic());
        assert!((r.min_eigenvalue + 0.2).abs() < 1e-12);
        assert!(!r.is_cp);
    }

    #[test]
    fn witness_lift_is_negative() {
        let map = synthetic();
        let r = is_cp(&map);
        let probe = witness_probe(&map, r.witness.as_ref().unwrap()).unwrap();
        let v = jamiolkowski_check(&map, &[probe]).unwrap();
        // ⟨φ|J|φ⟩ = (1/d) w†cw / ‖Φ‖² with ‖Φ‖ = 1 here.
        assert!((v - (-0.2 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn product_eigenvector_probe_is_nonnegative() {
        let spec = SpectralDecomposition::from_diagonal(&[0.0, 1.0, 1.0, 3.0], DEFAULT_DEG_TOL).unwrap();
        let map = exact_map(&spec, &LocalTimeParams::new(1.3, 0.4).unwrap()).unwrap();
        let mut p = DVector::zeros(16);
        p[2 * 4 + 3] = c(1.0);
        assert!(jamiolkowski_check(&map, &[p]).unwrap() >= 0.0);
    }

    #[test]
    fn jamiolkowski_refuses_large() {
        let spec = SpectralDecomposition::spin_ensemble(7, 1.0).unwrap();
        let map = exact_map(&spec, &LocalTimeParams::new(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(jamiolkowski_check(&map, &[]), Err(Error::TooLarge(128)));
    }

    #[test]
    fn jamiolkowski_probes_on_exact_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = SpectralDecomposition::from_hermitian(&random_hermitian(&mut rng, 4), DEFAULT_DEG_TOL).unwrap();
        let map = exact_map(&spec, &LocalTimeParams::new(0.8, 0.6).unwrap()).unwrap();
        let probes: Vec<_> = (0..200).map(|_| random_pure_state(&mut rng, 16)).collect();
        assert!(jamiolkowski_check(&map, &probes).unwrap() >= -1e-12);
        // The extended state of a CP map is PSD with unit trace.
        let j = extended_state(&map).unwrap();
        assert!((linalg::trace(&j).re - 1.0).abs() < 1e-12);
        assert!(linalg::eigenvalues(&j)[0] > -1e-12);
    }

    #[test]
    fn intermediate_examples() {
        let spec = SpectralDecomposition::from_diagonal(&[0.0, 0.7, 2.0], DEFAULT_DEG_TOL).unwrap();
        let total = exact_map(&spec, &LocalTimeParams::new(3.0, 0.5).unwrap()).unwrap();
        let initial = exact_map(&spec, &LocalTimeParams::new(1.0, 0.5).unwrap()).unwrap();
        let x = intermediate_map(&total, &initial).unwrap();
        assert!(x.coefficients().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(x.max_coefficient_diff(&unitary_map(&spec, 2.0)).unwrap() < 1e-12);
        let back = crate::ltsmap::compose(&x, &initial).unwrap();
        assert!(back.max_coefficient_diff(&total).unwrap() < 1e-14);
        let same = intermediate_map(&total, &total).unwrap();
        assert!(
            same.max_coefficient_diff(&BlockCoefficientMap::identity(spec.blocks().clone()))
                .unwrap()
                < 1e-15
        );
    }

    #[test]
    fn zero_coefficient_rules() {
        let blocks = Arc::new(Blocks::contiguous(vec![1, 1]).unwrap());
        let l = BlockCoefficientMap::luders(blocks.clone());
        let id = BlockCoefficientMap::identity(blocks);
        assert_eq!(intermediate_map(&id, &l), Err(Error::NotInvertible(0, 1)));
        assert_eq!(intermediate_map(&l, &l).unwrap().coefficients(), l.coefficients());
    }

    #[test]
    fn qubit_divisibility_defect() {
        let lambda = 1.1 / (PI * PI);
        let a = gaussian_factor(1.0, lambda);
        let d = family_divisibility_defect(&qubit(1.0), &LocalTimeParams::new(2.0, lambda).unwrap(), 0.7).unwrap();
        assert!((d - a * (1.0 - a)).abs() < 1e-12);
        assert!((d - 0.0948).abs() < 2e-4);
        let one = SpectralDecomposition::from_diagonal(&[1.0, 1.0], DEFAULT_DEG_TOL).unwrap();
        assert_eq!(
            family_divisibility_defect(&one, &LocalTimeParams::new(2.0, 1.0).unwrap(), 1.0).unwrap(),
            0.0
        );
        assert!(family_divisibility_defect(&one, &LocalTimeParams::new(2.0, 1.0).unwrap(), 3.0).is_err());
    }

    #[test]
    fn defect_positive_on_grid() {
        let spec = SpectralDecomposition::from_diagonal(&[0.0, 0.3, 1.1], DEFAULT_DEG_TOL).unwrap();
        let params = LocalTimeParams::new(5.0, 0.8).unwrap();
        for k in 1..=100 {
            let tp = 5.0 * k as f64 / 101.0;
            assert!(family_divisibility_defect(&spec, &params, tp).unwrap() > 0.0);
        }
    }

    #[test]
    fn ergodic_examples() {
        let spec = qubit(1.0);
        let diag = DensityMatrix::diagonal(&[0.4, 0.6]).unwrap();
        let r = ergodic_average(&spec, 1.0, &diag, 3.0, 11).unwrap();
        assert!(r.gap < 1e-15);
        let plus = DensityMatrix::from_pure(&DVector::from_vec(vec![c(1.0), c(1.0)])).unwrap();
        let r = ergodic_average(&spec, 1.0, &plus, 200.0 * 2.0 * PI, 100_000).unwrap();
        assert!(r.gap < 5e-3, "{}", r.gap);
        let spin = SpectralDecomposition::spin_ensemble(4, 1.0).unwrap();
        let psi = DensityMatrix::from_pure(&states::pure_extremes(&spin, 1.0).unwrap()).unwrap();
        let r = ergodic_average(&spin, 1.0, &psi, 200.0 * 2.0 * PI, 20_000).unwrap();
        assert!(r.gap < 5e-3);
        assert!((r.numeric.matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!(ergodic_average(&spec, 1.0, &plus, 0.0, 10).is_err());
    }

    #[test]
    fn verdicts() {
        let spec = SpectralDecomposition::from_diagonal(&[0.0, 0.5, 1.7], DEFAULT_DEG_TOL).unwrap();
        let times = [0.5, 1.0, 2.0, 3.5];
        let r = markovianity_verdict(&UnitaryFamily { spec: spec.clone() }, &times).unwrap();
        assert_eq!(r.verdict, Verdict::Markovian);
        let r = markovianity_verdict(
            &ExactFamily {
                spec: spec.clone(),
                lambda: 0.8,
            },
            &times,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::NonMarkovianByComposition);
        assert!(r.pairs.iter().all(|p| p.intermediate_cp()));
        assert_eq!(r.first_failure, Some((0.5, 1.0)));
        let bad = |_t: f64| Ok(synthetic());
        assert_eq!(
            markovianity_verdict(&bad, &[1.0, 2.0, 3.0]).unwrap().verdict,
            Verdict::NonMarkovianByCp
        );
        assert_eq!(
            markovianity_verdict(&UnitaryFamily { spec: spec.clone() }, &[1.0, 0.5, 2.0]).unwrap_err(),
            Error::NonMonotoneTimes
        );
        assert!(markovianity_verdict(&UnitaryFamily { spec }, &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn psd_and_probing_agree(seed in any::<u64>(), d in 2usize..6, t0 in 0.0f64..10.0, lambda in 0.05f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let spec = SpectralDecomposition::from_diagonal(&e, DEFAULT_DEG_TOL).unwrap();
            let map = exact_map(&spec, &LocalTimeParams::new(t0, lambda).unwrap()).unwrap();
            let r = is_cp(&map);
            prop_assert!(r.is_cp);
            let probes: Vec<_> = (0..20).map(|_| random_pure_state(&mut rng, d * d)).collect();
            prop_assert!(jamiolkowski_check(&map, &probes).unwrap() >= -PSD_TOL);
            // Perturb into a non-CP map and check the lifted witness sees it.
            let n = spec.count();
            if n >= 2 {
                let mut coeff = map.coefficients().clone();
                coeff[(0, 1)] = c(1.5);
                coeff[(1, 0)] = c(1.5);
                let bad = BlockCoefficientMap::from_coefficients(spec.blocks().clone(), coeff).unwrap();
                let rb = is_cp(&bad);
                prop_assert!(!rb.is_cp);
                let probe = witness_probe(&bad, rb.witness.as_ref().unwrap()).unwrap();
                prop_assert!(jamiolkowski_check(&bad, &[probe]).unwrap() < -PSD_TOL);
            }
            let rho = random_density_matrix(&mut rng, d);
            prop_assert!(map.apply(&rho).unwrap().min_eigenvalue() > -1e-10);
        }
    }
}
