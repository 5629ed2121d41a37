//! Energy coarse graining and the approximate map it induces.
//!
//! Each level `m` may carry a set of companion levels `{ν_m}` that are
//! operationally indistinguishable from it. The approximate map keeps the
//! diagonal blocks, attaches a pure phase `exp(i t0 δ_m)` to every block
//! `(m, ν_m)` and drops everything else. Because no level is both a
//! companion of `m` and has `m` among its own companions, phases compose
//! additively and the approximate family is divisible.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, phase};
use crate::ltsmap::{gaussian_factor, BlockCoefficientMap};
use crate::markov::{MapFamily, PSD_TOL};
use crate::spectra::{Blocks, SpectralDecomposition};
use crate::C64;

/// Default upper bound on Gaussian factors between groups, `e^{-4}`.
pub const DEFAULT_FAR_THRESHOLD: f64 = 0.018_315_638_888_734_18;
/// Default lower bound on Gaussian factors within a group.
pub const DEFAULT_NEAR_THRESHOLD: f64 = 0.9;

/// Coefficient given to blocks between two companions of the same level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompanionBlocks {
    /// Coefficient 0: only `(m, ν_m)` blocks survive.
    #[default]
    Omit,
    /// Unit modulus, with the phase difference of the two companions, so
    /// each group is a rank-one block.
    Unit,
}

/// Which gap sets the phase of block `(m, ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseRule {
    /// The group's mean gap `δ_m` for every companion.
    #[default]
    GroupMean,
    /// Each companion's own gap `E_ν − E_m`.
    PerPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ApproxOptions {
    pub companions: CompanionBlocks,
    pub phase_rule: PhaseRule,
}

/// Companion sets, gaps and degeneracy bookkeeping of a coarse graining.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGraining {
    blocks: Arc<Blocks>,
    companions: Vec<Vec<usize>>,
    deltas: Vec<f64>,
    pair_gaps: Vec<Vec<f64>>,
}

impl CoarseGraining {
    /// General constructor. `pair_gaps[m][j]` is the gap to the `j`-th
    /// companion of `m`; `deltas[m]` is the group phase rate.
    pub fn new(
        blocks: Arc<Blocks>,
        companions: Vec<Vec<usize>>,
        deltas: Vec<f64>,
        pair_gaps: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = blocks.count();
        if companions.len() != n || deltas.len() != n || pair_gaps.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: companions.len(),
            });
        }
        let mut member = vec![vec![false; n]; n];
        for (m, comp) in companions.iter().enumerate() {
            if comp.len() != pair_gaps[m].len() {
                return Err(invalid("one gap per companion required"));
            }
            for &v in comp {
                if v >= n {
                    return Err(invalid(format!("companion {v} out of range")));
                }
                if v == m {
                    return Err(invalid(format!("level {m} cannot be its own companion")));
                }
                if member[m][v] {
                    return Err(invalid(format!("companion {v} repeated for level {m}")));
                }
                member[m][v] = true;
            }
            if !(deltas[m] >= 0.0) || !deltas[m].is_finite() {
                return Err(invalid("gaps must be finite and >= 0"));
            }
        }
        for m in 0..n {
            for v in 0..n {
                if member[m][v] && member[v][m] {
                    return Err(invalid(format!("levels {m} and {v} are companions of each other")));
                }
            }
        }
        Ok(Self {
            blocks,
            companions,
            deltas,
            pair_gaps,
        })
    }

    /// Companion sets over a spectrum; gaps are `E_ν − E_m` and `δ_m` is
    /// their mean.
    pub fn from_spectrum(spec: &SpectralDecomposition, companions: Vec<Vec<usize>>) -> Result<Self> {
        let e = spec.energies();
        let mut deltas = Vec::with_capacity(companions.len());
        let mut pair_gaps = Vec::with_capacity(companions.len());
        for (m, comp) in companions.iter().enumerate() {
            let gaps: Vec<f64> = comp
                .iter()
                .map(|&v| e.get(v).map_or(f64::NAN, |ev| ev - e[m]))
                .collect();
            if gaps.iter().any(|g| !(*g >= 0.0)) {
                return Err(invalid("companions must lie above their level"));
            }
            deltas.push(if gaps.is_empty() {
                0.0
            } else {
                gaps.iter().sum::<f64>() / gaps.len() as f64
            });
            pair_gaps.push(gaps);
        }
        Self::new(spec.blocks().clone(), companions, deltas, pair_gaps)
    }

    /// Companion sets without gap data, for maps whose phases come from
    /// elsewhere (the reduced approximate map).
    pub fn from_companions(blocks: Arc<Blocks>, companions: Vec<Vec<usize>>) -> Result<Self> {
        let n = companions.len();
        let gaps = companions.iter().map(|c| vec![0.0; c.len()]).collect();
        Self::new(blocks, companions, vec![0.0; n], gaps)
    }

    /// Coarse graining with no companions at all.
    pub fn trivial(blocks: Arc<Blocks>) -> Self {
        let n = blocks.count();
        Self {
            blocks,
            companions: vec![Vec::new(); n],
            deltas: vec![0.0; n],
            pair_gaps: vec![Vec::new(); n],
        }
    }

    pub fn blocks(&self) -> &Arc<Blocks> {
        &self.blocks
    }

    pub fn count(&self) -> usize {
        self.companions.len()
    }

    pub fn companions(&self, m: usize) -> &[usize] {
        &self.companions[m]
    }

    pub fn delta(&self, m: usize) -> f64 {
        self.deltas[m]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn pair_gaps(&self, m: usize) -> &[f64] {
        &self.pair_gaps[m]
    }

    /// Levels with at least one companion.
    pub fn representatives(&self) -> Vec<usize> {
        (0..self.count()).filter(|&m| !self.companions[m].is_empty()).collect()
    }

    /// `g_m = tr P_m`.
    pub fn g_m(&self, m: usize) -> usize {
        self.blocks.rank(m)
    }

    /// `g^(m) = tr Π^(m)`.
    pub fn g_upper(&self, m: usize) -> usize {
        self.companions[m].iter().map(|&v| self.blocks.rank(v)).sum()
    }

    /// `g = max_m tr Π^(m)`.
    pub fn g(&self) -> usize {
        (0..self.count()).map(|m| self.g_upper(m)).max().unwrap_or(0)
    }

    /// `g_max = max_m tr P_m`.
    pub fn g_max(&self) -> usize {
        self.blocks.ranks().iter().copied().max().unwrap_or(0)
    }

    /// Dense `Π^(m)`.
    pub fn pi_projector_matrix(&self, m: usize) -> DMatrix<C64> {
        let d = self.blocks.dim();
        let mut acc = DMatrix::zeros(d, d);
        for &v in &self.companions[m] {
            acc += self.blocks.projector_matrix(v);
        }
        acc
    }

    fn angle(&self, m: usize, j: usize, rule: PhaseRule) -> f64 {
        match rule {
            PhaseRule::GroupMean => self.deltas[m],
            PhaseRule::PerPair => self.pair_gaps[m][j],
        }
    }

    /// Coefficient matrix of the approximate map at `t0`.
    pub fn approx_coefficients(&self, t0: f64, opts: &ApproxOptions) -> DMatrix<C64> {
        let n = self.count();
        let mut c = DMatrix::identity(n, n);
        for m in 0..n {
            self.fill_group(m, t0, opts, &mut |r, s, z| c[(r, s)] = z);
        }
        c
    }

    /// Emit the off-diagonal entries that level `m`'s companion set adds.
    fn fill_group(&self, m: usize, t0: f64, opts: &ApproxOptions, set: &mut dyn FnMut(usize, usize, C64)) {
        let comp = &self.companions[m];
        let z: Vec<C64> = (0..comp.len())
            .map(|j| phase(-t0 * self.angle(m, j, opts.phase_rule)))
            .collect();
        for (j, &v) in comp.iter().enumerate() {
            set(m, v, z[j]);
            set(v, m, z[j].conj());
        }
        if opts.companions == CompanionBlocks::Unit {
            for (a, &va) in comp.iter().enumerate() {
                for (b, &vb) in comp.iter().enumerate() {
                    if a != b {
                        set(va, vb, z[a].conj() * z[b]);
                    }
                }
            }
        }
    }

    /// Smallest eigenvalue of the approximate coefficient matrix, computed
    /// group by group.
    pub fn approx_min_eigenvalue(&self, t0: f64, opts: &ApproxOptions) -> f64 {
        Components::new(self).min_eigenvalue(&mut |m, set| self.fill_group(m, t0, opts, set))
    }
}

/// Connected groups of a coarse graining. The approximate coefficient matrix
/// is block diagonal over them.
pub(crate) struct Components {
    groups: Vec<Vec<usize>>,
    local: Vec<usize>,
    has_singletons: bool,
}

impl Components {
    pub(crate) fn new(cg: &CoarseGraining) -> Self {
        let n = cg.count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in 0..n {
            for &v in &cg.companions[m] {
                let (a, b) = (root(&mut parent, m), root(&mut parent, v));
                parent[a] = b;
            }
        }
        let mut index = vec![usize::MAX; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut local = vec![0; n];
        for m in 0..n {
            let r = root(&mut parent, m);
            if index[r] == usize::MAX {
                index[r] = groups.len();
                groups.push(Vec::new());
            }
            local[m] = groups[index[r]].len();
            groups[index[r]].push(m);
        }
        let has_singletons = groups.iter().any(|g| g.len() == 1);
        groups.retain(|g| g.len() > 1);
        Self {
            groups,
            local,
            has_singletons,
        }
    }

    /// `fill(m, set)` must emit the entries contributed by level `m`.
    pub(crate) fn min_eigenvalue(&self, fill: &mut dyn FnMut(usize, &mut dyn FnMut(usize, usize, C64))) -> f64 {
        let mut best = if self.has_singletons { 1.0 } else { f64::INFINITY };
        for g in &self.groups {
            let mut c = DMatrix::<C64>::identity(g.len(), g.len());
            for &m in g {
                fill(m, &mut |r, s, z| c[(self.local[r], self.local[s])] = z);
            }
            best = best.min(linalg::eigenvalues(&c)[0]);
        }
        best
    }
}

/// Approximate map `Σ_m P_m σ P_m + Σ_m e^{i t0 δ_m} P_m σ Π^(m) + h.c.`
/// with the default options.
pub fn approx_map(cg: &CoarseGraining, t0: f64) -> BlockCoefficientMap {
    approx_map_with(cg, t0, &ApproxOptions::default())
}

pub fn approx_map_with(cg: &CoarseGraining, t0: f64, opts: &ApproxOptions) -> BlockCoefficientMap {
    BlockCoefficientMap::from_parts(cg.blocks.clone(), cg.approx_coefficients(t0, opts), None, Vec::new())
}

/// The approximate maps as a family in `t0`.
#[derive(Debug, Clone)]
pub struct ApproxFamily {
    pub cg: CoarseGraining,
    pub options: ApproxOptions,
}

impl MapFamily for ApproxFamily {
    fn map_at(&self, t: f64) -> Result<BlockCoefficientMap> {
        Ok(approx_map_with(&self.cg, t, &self.options))
    }
}

fn check_thresholds(far: f64, near: f64) -> Result<()> {
    if !(far > 0.0 && far < near && near < 1.0) {
        return Err(invalid("need 0 < far_threshold < near_threshold < 1"));
    }
    Ok(())
}

fn far_violation(spec: &SpectralDecomposition, lambda: f64, group_of: &[Option<usize>], far: f64) -> Option<String> {
    let e = spec.energies();
    for a in 0..e.len() {
        for b in a + 1..e.len() {
            if let (Some(ga), Some(gb)) = (group_of[a], group_of[b]) {
                if ga != gb {
                    let f = gaussian_factor(e[b] - e[a], lambda);
                    if f > far {
                        return Some(format!(
                            "levels {a} and {b} lie in different groups but their factor {f:.4} exceeds {far:.4}"
                        ));
                    }
                }
            }
        }
    }
    None
}

fn from_groups(spec: &SpectralDecomposition, groups: &[Vec<usize>]) -> Result<CoarseGraining> {
    let mut companions = vec![Vec::new(); spec.count()];
    for g in groups {
        companions[g[0]] = g[1..].to_vec();
    }
    CoarseGraining::from_spectrum(spec, companions)
}

/// Greedy partition in energy order: a level joins the current group when its
/// Gaussian factor with the group's lowest level is at least `near`. Fails if
/// two levels in different groups have factor above `far`.
pub fn build_coarse_graining(spec: &SpectralDecomposition, lambda: f64, far: f64, near: f64) -> Result<CoarseGraining> {
    check_thresholds(far, near)?;
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be > 0"));
    }
    let e = spec.energies();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..e.len() {
        match groups.last_mut() {
            Some(g) if gaussian_factor(e[k] - e[g[0]], lambda) >= near => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    let mut group_of = vec![None; e.len()];
    for (i, g) in groups.iter().enumerate() {
        for &k in g {
            group_of[k] = Some(i);
        }
    }
    if let Some(msg) = far_violation(spec, lambda, &group_of, far) {
        return Err(Error::NoAdmissibleCoarseGraining(msg));
    }
    from_groups(spec, &groups)
}

/// Partition of the levels flagged in `support` into chains whose
/// consecutive members are closer than `window`. Levels outside the support
/// stay uncoupled. Fails if two supported levels in different groups have
/// Gaussian factor above `far`.
pub fn build_window_coarse_graining(
    spec: &SpectralDecomposition,
    lambda: f64,
    window: f64,
    far: f64,
    support: &[bool],
) -> Result<CoarseGraining> {
    if support.len() != spec.count() {
        return Err(Error::DimensionMismatch {
            expected: spec.count(),
            found: support.len(),
        });
    }
    if !(window > 0.0) || !(far > 0.0 && far < 1.0) || !(lambda > 0.0) {
        return Err(invalid("need window > 0, 0 < far < 1, lambda > 0"));
    }
    let e = spec.energies();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut prev: Option<usize> = None;
    for k in (0..e.len()).filter(|&k| support[k]) {
        match (groups.last_mut(), prev) {
            (Some(g), Some(p)) if e[k] - e[p] < window => g.push(k),
            _ => groups.push(vec![k]),
        }
        prev = Some(k);
    }
    let mut group_of = vec![None; e.len()];
    for (i, g) in groups.iter().enumerate() {
        for &k in g {
            group_of[k] = Some(i);
        }
    }
    if let Some(msg) = far_violation(spec, lambda, &group_of, far) {
        return Err(Error::NoAdmissibleCoarseGraining(msg));
    }
    from_groups(spec, &groups)
}

/// `max |c_app(t0) − c_app(t0 − t') c_app(t')|`; zero by the exclusion
/// property.
pub fn check_divisibility(cg: &CoarseGraining, t0: f64, t_prime: f64, opts: &ApproxOptions) -> Result<f64> {
    if !(t_prime > 0.0) || t_prime > t0 {
        return Err(invalid("need 0 < t' <= t0"));
    }
    let total = cg.approx_coefficients(t0, opts);
    let composed = cg
        .approx_coefficients(t0 - t_prime, opts)
        .component_mul(&cg.approx_coefficients(t_prime, opts));
    Ok(linalg::max_abs_diff(&total, &composed))
}

/// Time-resolved CP diagnostics of the approximate map.
#[derive(Debug, Clone, PartialEq)]
pub struct CpScanReport {
    pub times: Vec<f64>,
    /// Smallest eigenvalue of the coefficient matrix with companion blocks
    /// omitted.
    pub min_eigs: Vec<f64>,
    /// Same with unit-modulus companion blocks.
    pub min_eigs_unit: Vec<f64>,
    /// `(1/d)[Σ_m a_m² + 2 Σ_m Σ_ν cos(δ t0) a_m a_ν]`, the extended-state
    /// value at the probe `Σ_i p_i |i⟩|i⟩`, with block masses `a_m = Σ_{i∈m} p_i`.
    pub probe_criterion: Vec<f64>,
    /// Fraction of times with `min_eigs < −PSD_TOL`.
    pub violation_fraction: f64,
    pub violation_fraction_unit: f64,
    /// Fraction of times with a negative criterion.
    pub criterion_violation_fraction: f64,
    pub g: usize,
    pub g_max: usize,
    /// `Σ_m a_m²`.
    pub probe_mass: f64,
}

/// Per-block probe masses `a_m`; uniform `p_i = 1/√d` when `probe` is `None`.
pub(crate) fn probe_masses(blocks: &Blocks, probe: Option<&[f64]>) -> Result<Vec<f64>> {
    let d = blocks.dim();
    match probe {
        None => {
            let s = 1.0 / (d as f64).sqrt();
            Ok(blocks.ranks().iter().map(|&r| r as f64 * s).collect())
        }
        Some(p) => {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !(*x >= 0.0)) {
                return Err(invalid("probe amplitudes must be >= 0"));
            }
            let norm: f64 = p.iter().map(|x| x * x).sum();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(invalid("probe must satisfy sum p_i^2 = 1"));
            }
            let mut a = vec![0.0; blocks.count()];
            for (i, l) in blocks.labels().into_iter().enumerate() {
                a[l] += p[i];
            }
            Ok(a)
        }
    }
}

/// Earliest grid time from which every later value is at least `-tol`;
/// `None` if the last value already fails.
pub fn sustained_from(times: &[f64], values: &[f64], tol: f64) -> Option<f64> {
    let mut first = None;
    for (i, v) in values.iter().enumerate().rev() {
        if *v < -tol {
            break;
        }
        first = Some(times[i]);
    }
    first
}

pub(crate) fn fraction(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| **v < -PSD_TOL).count() as f64 / values.len() as f64
}

/// Scan CP of the approximate map over a time grid.
pub fn cp_scan(
    cg: &CoarseGraining,
    times: &[f64],
    probe: Option<&[f64]>,
    phase_rule: PhaseRule,
) -> Result<CpScanReport> {
    if times.is_empty() {
        return Err(invalid("time grid is empty"));
    }
    let a = probe_masses(&cg.blocks, probe)?;
    let d = cg.blocks.dim() as f64;
    let omit = ApproxOptions {
        companions: CompanionBlocks::Omit,
        phase_rule,
    };
    let unit = ApproxOptions {
        companions: CompanionBlocks::Unit,
        phase_rule,
    };
    let mass: f64 = a.iter().map(|x| x * x).sum();
    let comps = Components::new(cg);
    let mut min_eigs = Vec::with_capacity(times.len());
    let mut min_eigs_unit = Vec::with_capacity(times.len());
    let mut crit = Vec::with_capacity(times.len());
    for &t in times {
        min_eigs.push(comps.min_eigenvalue(&mut |m, set| cg.fill_group(m, t, &omit, set)));
        min_eigs_unit.push(comps.min_eigenvalue(&mut |m, set| cg.fill_group(m, t, &unit, set)));
        let mut osc = 0.0;
        for m in 0..cg.count() {
            for (j, &v) in cg.companions[m].iter().enumerate() {
                osc += (t * cg.angle(m, j, phase_rule)).cos() * a[m] * a[v];
            }
        }
        crit.push((mass + 2.0 * osc) / d);
    }
    Ok(CpScanReport {
        violation_fraction: fraction(&min_eigs),
        violation_fraction_unit: fraction(&min_eigs_unit),
        criterion_violation_fraction: fraction(&crit),
        times: times.to_vec(),
        min_eigs,
        min_eigs_unit,
        probe_criterion: crit,
        g: cg.g(),
        g_max: cg.g_max(),
        probe_mass: mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltsmap::{exact_map, LocalTimeParams};
    use crate::markov::{is_cp, markovianity_verdict, Verdict};
    use crate::random::random_density_matrix;
    use crate::spectra::DEFAULT_DEG_TOL;
    use crate::states;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(e: &[f64]) -> SpectralDecomposition {
        SpectralDecomposition::from_diagonal(e, DEFAULT_DEG_TOL).unwrap()
    }

    fn defaults() -> (f64, f64) {
        (DEFAULT_FAR_THRESHOLD, DEFAULT_NEAR_THRESHOLD)
    }

    #[test]
    fn far_pairs_give_singletons() {
        let s = spec(&[0.0, 10.0]);
        let cg = build_coarse_graining(&s, 1.0, 0.02, 0.95).unwrap();
        assert!(cg.representatives().is_empty());
        assert_eq!(cg.g(), 0);
        assert!(cg.pi_projector_matrix(0).iter().all(|z| *z == C64::new(0.0, 0.0)));
        let m = approx_map(&cg, 3.0);
        assert_eq!(
            m.coefficients(),
            BlockCoefficientMap::luders(s.blocks().clone()).coefficients()
        );
    }

    #[test]
    fn paired_spectrum() {
        let s = spec(&[0.0, 0.01, 10.0, 10.01]);
        let (far, near) = defaults();
        let cg = build_coarse_graining(&s, 1.0, far, near).unwrap();
        assert_eq!(cg.companions(0), &[1]);
        assert_eq!(cg.companions(2), &[3]);
        assert!((cg.delta(0) - 0.01).abs() < 1e-12 && (cg.delta(2) - 0.01).abs() < 1e-9);
        assert_eq!((cg.g(), cg.g_max()), (1, 1));
        // Projector algebra (i) and (ii).
        for m in 0..4 {
            let pm = s.blocks().projector_matrix(m);
            assert!((&pm * cg.pi_projector_matrix(m)).norm() == 0.0);
            for k in 0..4 {
                let pk = cg.pi_projector_matrix(k);
                assert!((&pm * &pk - &pk * &pm).norm() == 0.0);
                if (&pm * &pk).norm() != 0.0 {
                    assert!((s.blocks().projector_matrix(k) * cg.pi_projector_matrix(m)).norm() == 0.0);
                }
            }
        }
        // Coherence across a near pair rotates at rate δ with unit modulus.
        let psi = nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ]);
        let rho = states::DensityMatrix::from_pure(&psi).unwrap();
        let t = 37.0;
        let out = approx_map(&cg, t).apply(&rho).unwrap();
        assert!((out.matrix()[(0, 1)] - phase(-t * cg.delta(0)) * 0.5).norm() < 1e-14);
        // Close to the exact map coefficient-wise.
        let exact = exact_map(&s, &LocalTimeParams::new(t, 1.0).unwrap()).unwrap();
        let dev = exact.max_coefficient_diff(&approx_map(&cg, t)).unwrap();
        assert!(dev <= far.max(1.0 - near));
    }

    #[test]
    fn inadmissible_spectrum() {
        let s = spec(&[0.0, 1.0, 2.0]);
        let (far, near) = defaults();
        assert!(matches!(
            build_coarse_graining(&s, 1.0, far, near),
            Err(Error::NoAdmissibleCoarseGraining(_))
        ));
        assert!(build_coarse_graining(&s, 1.0, 0.5, 0.4).is_err());
    }

    #[test]
    fn invariant_checks() {
        let b = Arc::new(Blocks::contiguous(vec![1, 1, 1]).unwrap());
        let ok = |c: Vec<Vec<usize>>| {
            let gaps = c.iter().map(|v| vec![0.1; v.len()]).collect();
            CoarseGraining::new(b.clone(), c, vec![0.1; 3], gaps)
        };
        assert!(ok(vec![vec![1], vec![], vec![1]]).is_ok());
        assert!(ok(vec![vec![0], vec![], vec![]]).is_err());
        assert!(ok(vec![vec![1], vec![0], vec![]]).is_err());
        assert!(ok(vec![vec![1, 1], vec![], vec![]]).is_err());
        assert!(ok(vec![vec![5], vec![], vec![]]).is_err());
    }

    #[test]
    fn pair_is_boundary_cp_at_all_times() {
        let s = spec(&[0.0, 0.05]);
        let cg = CoarseGraining::from_spectrum(&s, vec![vec![1], vec![]]).unwrap();
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.7).collect();
        let r = cp_scan(&cg, &times, None, PhaseRule::GroupMean).unwrap();
        assert!(r.min_eigs.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(r.violation_fraction, 0.0);
        let single = cp_scan(
            &CoarseGraining::trivial(s.blocks().clone()),
            &times,
            None,
            PhaseRule::GroupMean,
        )
        .unwrap();
        assert!(single.min_eigs.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        assert!(cp_scan(&cg, &[], None, PhaseRule::GroupMean).is_err());
        assert!(cp_scan(&cg, &times, Some(&[1.0]), PhaseRule::GroupMean).is_err());
    }

    #[test]
    fn criterion_is_probe_value_and_bounded_by_min_eig() {
        let s = spec(&[0.0, 0.03, 0.07, 5.0, 5.02]);
        let cg = CoarseGraining::from_spectrum(&s, vec![vec![1, 2], vec![], vec![], vec![4], vec![]]).unwrap();
        let p = [0.1, 0.5, 0.3, 0.6, 0.5377];
        let norm: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p: Vec<f64> = p.iter().map(|x| x / norm).collect();
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 3.1).collect();
        let r = cp_scan(&cg, &times, Some(&p), PhaseRule::GroupMean).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let c = cg.approx_coefficients(t, &ApproxOptions::default());
            let a = nalgebra::DVector::from_iterator(5, p.iter().map(|x| C64::new(*x, 0.0)));
            let direct = (a.adjoint() * &c * &a)[(0, 0)].re / 5.0;
            assert!((direct - r.probe_criterion[k]).abs() < 1e-14);
            assert!(r.probe_criterion[k] >= r.min_eigs[k] / 5.0 - 1e-14);
        }
        // A group of three with companion blocks omitted is never CP.
        assert_eq!(r.violation_fraction, 1.0);
        assert_eq!(r.violation_fraction_unit, 0.0);
        assert!(r.min_eigs.iter().all(|v| (*v - (1.0 - 2f64.sqrt())).abs() < 1e-12));
    }

    #[test]
    fn approximate_family_is_markovian() {
        let s = spec(&[0.0, 0.01, 10.0, 10.013, 20.0]);
        let (far, near) = defaults();
        let cg = build_coarse_graining(&s, 1.0, far, near).unwrap();
        let fam = ApproxFamily {
            cg,
            options: ApproxOptions::default(),
        };
        let times = [100.0, 150.0, 220.0, 400.0];
        assert_eq!(markovianity_verdict(&fam, &times).unwrap().verdict, Verdict::Markovian);
    }

    #[test]
    fn approx_map_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = spec(&[0.0, 0.02, 0.03, 8.0, 8.01, 16.0]);
        let cg = build_coarse_graining(&s, 1.0, DEFAULT_FAR_THRESHOLD, 0.99).unwrap();
        for opts in [
            ApproxOptions::default(),
            ApproxOptions {
                companions: CompanionBlocks::Unit,
                phase_rule: PhaseRule::PerPair,
            },
        ] {
            let map = approx_map_with(&cg, 12.5, &opts);
            assert!(linalg::hermiticity_defect(map.coefficients()) == 0.0);
            let rho = random_density_matrix(&mut rng, 6);
            let out = map.apply(&rho).unwrap();
            assert!((out.trace() - 1.0).abs() < 1e-12);
            let mixed = states::DensityMatrix::maximally_mixed(6).unwrap();
            assert!(linalg::max_abs_diff(map.apply(&mixed).unwrap().matrix(), mixed.matrix()) < 1e-15);
        }
        let unit = approx_map_with(
            &cg,
            12.5,
            &ApproxOptions {
                companions: CompanionBlocks::Unit,
                ..Default::default()
            },
        );
        assert!(is_cp(&unit).is_cp);
    }

    fn random_cg(rng: &mut ChaCha8Rng, levels: usize) -> CoarseGraining {
        let mut e = Vec::new();
        let mut base = 0.0;
        while e.len() < levels {
            let size = rng.random_range(1..4).min(levels - e.len());
            for j in 0..size {
                e.push(base + j as f64 * rng.random_range(0.001..0.01));
            }
            base += 10.0 + rng.random_range(0.0..1.0);
        }
        let s = spec(&e);
        build_coarse_graining(&s, 1.0, DEFAULT_FAR_THRESHOLD, DEFAULT_NEAR_THRESHOLD).unwrap()
    }

    #[test]
    fn sustained_time() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(sustained_from(&t, &[-1.0, 0.0, -1.0, 0.0], 1e-10), Some(3.0));
        assert_eq!(sustained_from(&t, &[0.0, 0.0, 0.0, 0.0], 1e-10), Some(0.0));
        assert_eq!(sustained_from(&t, &[0.0, 0.0, 0.0, -1.0], 1e-10), None);
    }

    #[test]
    fn divisibility_examples() {
        let s = spec(&[0.0, 0.01, 10.0, 10.01]);
        let trivial = CoarseGraining::trivial(s.blocks().clone());
        assert_eq!(
            check_divisibility(&trivial, 2.0, 1.0, &ApproxOptions::default()).unwrap(),
            0.0
        );
        let cg = build_coarse_graining(&s, 1.0, DEFAULT_FAR_THRESHOLD, DEFAULT_NEAR_THRESHOLD).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let t0: f64 = rng.random_range(0.1..1000.0);
            let tp = t0 * rng.random_range(0.01..1.0);
            assert!(check_divisibility(&cg, t0, tp, &ApproxOptions::default()).unwrap() < 1e-14);
        }
        assert!(check_divisibility(&cg, 1.0, 2.0, &ApproxOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn random_admissible_divisible(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cg = random_cg(&mut rng, 12);
            for opts in [ApproxOptions::default(), ApproxOptions { companions: CompanionBlocks::Unit, phase_rule: PhaseRule::PerPair }] {
                for _ in 0..50 {
                    let t0: f64 = rng.random_range(0.0..500.0);
                    let tp = t0 * rng.random_range(0.001..1.0);
                    if tp > 0.0 {
                        prop_assert!(check_divisibility(&cg, t0, tp, &opts).unwrap() < 1e-14);
                    }
                }
            }
        }
    }
}
