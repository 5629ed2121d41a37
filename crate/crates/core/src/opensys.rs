//! Reduced dynamics of a system under a pure-decoherence interaction
//! `H_int = Σ_{α,β} E_αβ P_α ⊗ Π_β`.
//!
//! With the interaction dominating the evolution, tracing out the environment
//! from the exact map leaves a block-coefficient map on the system blocks
//! `P_α` with coherence factors
//!
//! ```text
//! B_αγ(t0) = Σ_β exp(−i t0 (E_αβ − E_γβ)) exp(−(E_αβ − E_γβ)² / 4λ) p_β,
//! ```
//!
//! where `p_β = tr(Π_β ρ_E)`. The environment state enters only through these
//! probabilities, so every function here takes them directly; use
//! [`PureDecoherenceInteraction::environment_weights`] to obtain them from a
//! density matrix.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::coarse::{
    fraction, probe_masses, ApproxOptions, CoarseGraining, CompanionBlocks, Components, CpScanReport, PhaseRule,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::phase;
use crate::ltsmap::{gaussian_factor, BlockCoefficientMap};
use crate::markov::MapFamily;
use crate::spectra::{Blocks, SpectralDecomposition};
use crate::states::{self, DensityMatrix};
use crate::C64;

/// Default coherence threshold for the decoherence time.
pub const DEFAULT_EPSILON_DEC: f64 = 0.05;
/// Default number of consecutive samples that must stay below threshold.
pub const DEFAULT_PERSISTENCE: usize = 10;
/// Tolerance on environment probabilities summing to one.
const WEIGHT_TOL: f64 = 1e-9;

/// Separable interaction spectrum `E_αβ` with system and environment
/// projector families.
#[derive(Debug, Clone, PartialEq)]
pub struct PureDecoherenceInteraction {
    energies: DMatrix<f64>,
    system: Arc<Blocks>,
    environment: Arc<Blocks>,
    warnings: Vec<String>,
}

impl PureDecoherenceInteraction {
    /// `energies[(α, β)] = E_αβ`. Coincident values are allowed and reported
    /// as warnings.
    pub fn new(energies: DMatrix<f64>, system: Arc<Blocks>, environment: Arc<Blocks>) -> Result<Self> {
        if energies.nrows() != system.count() {
            return Err(Error::DimensionMismatch {
                expected: system.count(),
                found: energies.nrows(),
            });
        }
        if energies.ncols() != environment.count() {
            return Err(Error::DimensionMismatch {
                expected: environment.count(),
                found: energies.ncols(),
            });
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(invalid("interaction energies must be finite"));
        }
        let mut values: Vec<f64> = energies.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        let coincident = values
            .windows(2)
            .filter(|w| (w[1] - w[0]).abs() <= 1e-12 * w[0].abs().max(1.0))
            .count();
        let mut warnings = Vec::new();
        if coincident > 0 {
            warnings.push(format!(
                "{coincident} coincident interaction energies; E_ab is not pairwise distinct"
            ));
        }
        Ok(Self {
            energies,
            system,
            environment,
            warnings,
        })
    }

    /// Interaction with system and environment blocks given by consecutive
    /// computational-basis ranges of the listed ranks.
    pub fn with_ranks(energies: DMatrix<f64>, system_ranks: Vec<usize>, env_ranks: Vec<usize>) -> Result<Self> {
        Self::new(
            energies,
            Arc::new(Blocks::contiguous(system_ranks)?),
            Arc::new(Blocks::contiguous(env_ranks)?),
        )
    }

    pub fn energies(&self) -> &DMatrix<f64> {
        &self.energies
    }

    pub fn energy(&self, alpha: usize, beta: usize) -> f64 {
        self.energies[(alpha, beta)]
    }

    pub fn system(&self) -> &Arc<Blocks> {
        &self.system
    }

    pub fn environment(&self) -> &Arc<Blocks> {
        &self.environment
    }

    pub fn system_count(&self) -> usize {
        self.energies.nrows()
    }

    pub fn environment_count(&self) -> usize {
        self.energies.ncols()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `p_β = tr(Π_β ρ_E)`.
    pub fn environment_weights(&self, rho_env: &DensityMatrix) -> Result<Vec<f64>> {
        if rho_env.dim() != self.environment.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.environment.dim(),
                found: rho_env.dim(),
            });
        }
        self.environment.populations(rho_env.matrix())
    }

    fn check_weights(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.environment_count() {
            return Err(Error::DimensionMismatch {
                expected: self.environment_count(),
                found: p.len(),
            });
        }
        if p.iter().any(|x| !(*x >= -WEIGHT_TOL)) {
            return Err(invalid("environment weights must be >= 0"));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > WEIGHT_TOL {
            return Err(invalid(format!("environment weights sum to {s}, not 1")));
        }
        Ok(())
    }

    /// The interaction as a Hamiltonian on `S ⊗ E`, with product index
    /// `i · d_E + j`. Needs computational-basis blocks on both sides.
    pub fn interaction_spectrum(&self) -> Result<SpectralDecomposition> {
        if !self.system.is_computational() || !self.environment.is_computational() {
            return Err(invalid("interaction_spectrum needs computational-basis blocks"));
        }
        let ls = self.system.labels();
        let le = self.environment.labels();
        let mut diag = Vec::with_capacity(ls.len() * le.len());
        for &a in &ls {
            for &b in &le {
                diag.push(self.energies[(a, b)]);
            }
        }
        SpectralDecomposition::from_diagonal(&diag, 0.0)
    }
}

/// Coherence factors at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceFactors {
    /// `B_αγ(t0)`.
    pub b: DMatrix<C64>,
    /// `ζ_αγ = Σ_β exp(−(E_αβ − E_γβ)²/4λ) p_β`.
    pub zeta: DMatrix<f64>,
    /// `p_β^(αγ)`, stored at `α · N_S + γ`.
    pub weights: Vec<Vec<f64>>,
}

impl CoherenceFactors {
    pub fn pair_weights(&self, alpha: usize, gamma: usize) -> &[f64] {
        &self.weights[alpha * self.b.nrows() + gamma]
    }
}

fn reduced_coefficients(inter: &PureDecoherenceInteraction, p: &[f64], lambda: f64, t0: f64, k: f64) -> DMatrix<C64> {
    let ns = inter.system_count();
    DMatrix::from_fn(ns, ns, |a, g| {
        if a == g {
            return C64::new(1.0, 0.0);
        }
        let mut acc = C64::new(0.0, 0.0);
        for (beta, &pb) in p.iter().enumerate() {
            if pb == 0.0 {
                continue;
            }
            let gap = inter.energies[(a, beta)] - inter.energies[(g, beta)];
            let damp = if lambda.is_infinite() {
                1.0
            } else {
                (-k * gap * gap / (4.0 * lambda)).exp()
            };
            acc += phase(t0 * gap) * (damp * pb);
        }
        acc
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be > 0"));
    }
    Ok(())
}

/// `B`, `ζ` and the normalized pair weights at `t0`.
pub fn coherence_factors(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    lambda: f64,
    t0: f64,
) -> Result<CoherenceFactors> {
    inter.check_weights(env_weights)?;
    check_lambda(lambda)?;
    let ns = inter.system_count();
    let b = reduced_coefficients(inter, env_weights, lambda, t0, 1.0);
    let mut zeta = DMatrix::zeros(ns, ns);
    let mut weights = Vec::with_capacity(ns * ns);
    for a in 0..ns {
        for g in 0..ns {
            let raw: Vec<f64> = env_weights
                .iter()
                .enumerate()
                .map(|(beta, &pb)| pb * gaussian_factor(inter.energies[(a, beta)] - inter.energies[(g, beta)], lambda))
                .collect();
            let z: f64 = raw.iter().sum();
            zeta[(a, g)] = z;
            weights.push(if z > 0.0 {
                raw.iter().map(|x| x / z).collect()
            } else {
                vec![0.0; raw.len()]
            });
        }
    }
    Ok(CoherenceFactors { b, zeta, weights })
}

/// Exact reduced map at `t0`.
pub fn reduced_exact_map(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    lambda: f64,
    t0: f64,
) -> Result<BlockCoefficientMap> {
    kfold_reduced(inter, env_weights, lambda, t0, 1)
}

/// Reduced map after dividing `(0, t0]` into `k` pieces on the total system:
/// Gaussian exponents are multiplied by `k`.
pub fn kfold_reduced(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    lambda: f64,
    t0: f64,
    k: u32,
) -> Result<BlockCoefficientMap> {
    inter.check_weights(env_weights)?;
    check_lambda(lambda)?;
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    Ok(BlockCoefficientMap::from_parts(
        inter.system.clone(),
        reduced_coefficients(inter, env_weights, lambda, t0, f64::from(k)),
        None,
        Vec::new(),
    ))
}

/// Exact reduced maps at fixed `λ` and environment weights.
#[derive(Debug, Clone)]
pub struct ReducedExactFamily {
    pub interaction: PureDecoherenceInteraction,
    pub env_weights: Vec<f64>,
    pub lambda: f64,
}

impl MapFamily for ReducedExactFamily {
    fn map_at(&self, t: f64) -> Result<BlockCoefficientMap> {
        reduced_exact_map(&self.interaction, &self.env_weights, self.lambda, t)
    }
}

/// `Σ_α P_α ρ_S P_α`.
pub fn steady_state(inter: &PureDecoherenceInteraction, rho_sys: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_sys.dim() != inter.system.dim() {
        return Err(Error::DimensionMismatch {
            expected: inter.system.dim(),
            found: rho_sys.dim(),
        });
    }
    Ok(DensityMatrix::from_psd_unchecked(
        inter.system.luders(rho_sys.matrix())?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceOptions {
    pub epsilon: f64,
    pub persistence: usize,
}

impl Default for DecoherenceOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON_DEC,
            persistence: DEFAULT_PERSISTENCE,
        }
    }
}

/// Largest off-diagonal coherence factor over a time grid, with decoherence
/// and recurrence times read off it.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceProfile {
    pub times: Vec<f64>,
    /// `max_{α≠γ} |B_αγ(t)|`.
    pub max_coherence: Vec<f64>,
    /// First time the coherence drops below `epsilon` and stays there for
    /// `persistence` samples.
    pub decoherence_time: Option<f64>,
    /// Start of the first later excursion above half the initial value.
    pub recurrence_onset: Option<f64>,
    /// Peak of that excursion.
    pub recurrence_time: Option<f64>,
}

/// Sample `max |B|` on `times` and locate decoherence and recurrence.
pub fn decoherence_profile(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    lambda: f64,
    times: &[f64],
    opts: &DecoherenceOptions,
) -> Result<DecoherenceProfile> {
    inter.check_weights(env_weights)?;
    check_lambda(lambda)?;
    if times.is_empty() {
        return Err(invalid("time grid is empty"));
    }
    if opts.persistence == 0 || !(opts.epsilon > 0.0) {
        return Err(invalid("need epsilon > 0 and persistence >= 1"));
    }
    let ns = inter.system_count();
    let values: Vec<f64> = times
        .iter()
        .map(|&t| {
            let b = reduced_coefficients(inter, env_weights, lambda, t, 1.0);
            let mut worst = 0.0f64;
            for a in 0..ns {
                for g in 0..ns {
                    if a != g {
                        worst = worst.max(b[(a, g)].norm());
                    }
                }
            }
            worst
        })
        .collect();
    let n = values.len();
    let dec_idx = (0..n)
        .find(|&i| i + opts.persistence <= n && values[i..i + opts.persistence].iter().all(|v| *v < opts.epsilon));
    let half = 0.5 * values[0];
    // Search for a revival after the coherence has first been lost.
    let lost_idx = dec_idx.or_else(|| (0..n).find(|&i| values[i] < half));
    let mut recurrence_onset = None;
    let mut recurrence_time = None;
    if let Some(start) = lost_idx {
        if let Some(on) = (start..n).find(|&i| values[i] > half) {
            let end = (on..n).find(|&i| values[i] <= half).unwrap_or(n);
            let peak = (on..end).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(on);
            recurrence_onset = Some(times[on]);
            recurrence_time = Some(times[peak]);
        }
    }
    Ok(DecoherenceProfile {
        times: times.to_vec(),
        max_coherence: values,
        decoherence_time: dec_idx.map(|i| times[i]),
        recurrence_onset,
        recurrence_time,
    })
}

fn check_cg(inter: &PureDecoherenceInteraction, cg: &CoarseGraining) -> Result<()> {
    if cg.count() != inter.system_count() || cg.blocks().as_ref() != inter.system.as_ref() {
        return Err(Error::BlockMismatch);
    }
    Ok(())
}

/// Greedy partition of the system blocks in index order. A block joins the
/// current group when its factor with the group's first block is at least
/// `near` for every populated environment block. Fails when two blocks in
/// different groups have factor above `far` for some populated environment
/// block.
pub fn build_reduced_coarse_graining(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    lambda: f64,
    far: f64,
    near: f64,
) -> Result<CoarseGraining> {
    inter.check_weights(env_weights)?;
    check_lambda(lambda)?;
    if !(far > 0.0 && far < near && near < 1.0) {
        return Err(invalid("need 0 < far_threshold < near_threshold < 1"));
    }
    let ns = inter.system_count();
    let populated: Vec<usize> = (0..env_weights.len()).filter(|&b| env_weights[b] > 0.0).collect();
    let factor = |a: usize, g: usize, beta: usize| {
        gaussian_factor(inter.energies[(a, beta)] - inter.energies[(g, beta)], lambda)
    };
    let mut group_of = vec![usize::MAX; ns];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for a in 0..ns {
        if group_of[a] != usize::MAX {
            continue;
        }
        let id = groups.len();
        group_of[a] = id;
        let mut g = vec![a];
        for c in a + 1..ns {
            if group_of[c] == usize::MAX && populated.iter().all(|&b| factor(a, c, b) >= near) {
                group_of[c] = id;
                g.push(c);
            }
        }
        groups.push(g);
    }
    for a in 0..ns {
        for c in a + 1..ns {
            if group_of[a] != group_of[c] {
                for &b in &populated {
                    let f = factor(a, c, b);
                    if f > far {
                        return Err(Error::NoAdmissibleCoarseGraining(format!(
                            "system blocks {a} and {c} lie in different groups but their factor {f:.4} at environment block {b} exceeds {far:.4}"
                        )));
                    }
                }
            }
        }
    }
    let mut companions = vec![Vec::new(); ns];
    for g in &groups {
        companions[g[0]] = g[1..].to_vec();
    }
    CoarseGraining::from_companions(inter.system.clone(), companions)
}

/// Phase rates `δ_αβ` for every representative, companion and environment
/// block: `E_νβ − E_αβ`.
fn reduced_angles(
    inter: &PureDecoherenceInteraction,
    cg: &CoarseGraining,
    alpha: usize,
    rule: PhaseRule,
) -> Vec<Vec<f64>> {
    let comp = cg.companions(alpha);
    let nb = inter.environment_count();
    let per_pair: Vec<Vec<f64>> = comp
        .iter()
        .map(|&v| {
            (0..nb)
                .map(|b| inter.energies[(v, b)] - inter.energies[(alpha, b)])
                .collect()
        })
        .collect();
    match rule {
        PhaseRule::PerPair => per_pair,
        PhaseRule::GroupMean => {
            let mean: Vec<f64> = (0..nb)
                .map(|b| per_pair.iter().map(|g| g[b]).sum::<f64>() / per_pair.len() as f64)
                .collect();
            vec![mean; comp.len()]
        }
    }
}

fn reduced_approx_coefficients(
    inter: &PureDecoherenceInteraction,
    p: &[f64],
    cg: &CoarseGraining,
    t0: f64,
    opts: &ApproxOptions,
) -> DMatrix<C64> {
    let ns = inter.system_count();
    let mut c = DMatrix::identity(ns, ns);
    for a in 0..ns {
        fill_reduced_group(inter, p, cg, a, t0, opts, &mut |r, s, z| c[(r, s)] = z);
    }
    c
}

/// Emit the off-diagonal entries that system block `a`'s companion set adds.
fn fill_reduced_group(
    inter: &PureDecoherenceInteraction,
    p: &[f64],
    cg: &CoarseGraining,
    a: usize,
    t0: f64,
    opts: &ApproxOptions,
    set: &mut dyn FnMut(usize, usize, C64),
) {
    let comp = cg.companions(a);
    if comp.is_empty() {
        return;
    }
    let angles = reduced_angles(inter, cg, a, opts.phase_rule);
    // z[j][β] = exp(i t0 δ_αβ) for companion j.
    let z: Vec<Vec<C64>> = angles
        .iter()
        .map(|row| row.iter().map(|d| phase(-t0 * d)).collect())
        .collect();
    for (j, &v) in comp.iter().enumerate() {
        let s: C64 = z[j].iter().zip(p).map(|(w, pb)| w * *pb).sum();
        set(a, v, s);
        set(v, a, s.conj());
    }
    if opts.companions == CompanionBlocks::Unit {
        for (x, &vx) in comp.iter().enumerate() {
            for (y, &vy) in comp.iter().enumerate() {
                if x != y {
                    set(vx, vy, (0..p.len()).map(|b| z[x][b].conj() * z[y][b] * p[b]).sum());
                }
            }
        }
    }
}

/// Approximate reduced map: diagonal blocks kept, block `(α, ν_α)` weighted
/// by `Σ_β p_β exp(i t0 δ_αβ)`, everything else dropped.
pub fn approx_reduced_map(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    cg: &CoarseGraining,
    t0: f64,
    opts: &ApproxOptions,
) -> Result<BlockCoefficientMap> {
    inter.check_weights(env_weights)?;
    check_cg(inter, cg)?;
    Ok(BlockCoefficientMap::from_parts(
        inter.system.clone(),
        reduced_approx_coefficients(inter, env_weights, cg, t0, opts),
        None,
        Vec::new(),
    ))
}

/// Approximate reduced maps as a family in `t0`.
#[derive(Debug, Clone)]
pub struct ReducedApproxFamily {
    pub interaction: PureDecoherenceInteraction,
    pub env_weights: Vec<f64>,
    pub cg: CoarseGraining,
    pub options: ApproxOptions,
}

impl MapFamily for ReducedApproxFamily {
    fn map_at(&self, t: f64) -> Result<BlockCoefficientMap> {
        approx_reduced_map(&self.interaction, &self.env_weights, &self.cg, t, &self.options)
    }
}

/// `max |c_app(t0) − c_app(t0 − t') c_app(t')|` for the reduced approximate
/// map.
pub fn check_reduced_divisibility(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    cg: &CoarseGraining,
    t0: f64,
    t_prime: f64,
    opts: &ApproxOptions,
) -> Result<f64> {
    if !(t_prime > 0.0) || t_prime > t0 {
        return Err(invalid("need 0 < t' <= t0"));
    }
    let total = approx_reduced_map(inter, env_weights, cg, t0, opts)?;
    let a = approx_reduced_map(inter, env_weights, cg, t0 - t_prime, opts)?;
    let b = approx_reduced_map(inter, env_weights, cg, t_prime, opts)?;
    total.max_coefficient_diff(&crate::ltsmap::compose(&a, &b)?)
}

/// CP scan of the reduced approximate map.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCpScanReport {
    /// Coefficient-matrix eigenvalues and the probe value
    /// `(1/d)[Σ_α a_α² + Σ_α ε_α(t) a_α Σ_ν a_ν]` as `probe_criterion`.
    pub scan: CpScanReport,
    /// `ε(t) = max_α ε_α(t)` with `ε_α = 2 Σ_β p_β cos(δ_αβ t)`.
    pub epsilon: Vec<f64>,
    /// `(1/d)[Σ_α a_α² + ε(t) Σ_α χ_α]`.
    pub estimate: Vec<f64>,
    /// `g' = max_α tr Π^(α)`.
    pub g_prime: usize,
}

/// Scan CP of the reduced approximate map over a time grid, using the
/// group-mean phase rule.
pub fn cp_scan_reduced(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    cg: &CoarseGraining,
    times: &[f64],
    probe: Option<&[f64]>,
) -> Result<ReducedCpScanReport> {
    inter.check_weights(env_weights)?;
    check_cg(inter, cg)?;
    if times.is_empty() {
        return Err(invalid("time grid is empty"));
    }
    let a = probe_masses(&inter.system, probe)?;
    let d = inter.system.dim() as f64;
    let ns = inter.system_count();
    let mass: f64 = a.iter().map(|x| x * x).sum();
    let omit = ApproxOptions::default();
    let unit = ApproxOptions {
        companions: CompanionBlocks::Unit,
        ..Default::default()
    };
    let angles: Vec<Vec<f64>> = (0..ns)
        .map(|al| {
            reduced_angles(inter, cg, al, PhaseRule::GroupMean)
                .into_iter()
                .next()
                .unwrap_or_default()
        })
        .collect();
    let chi: Vec<f64> = (0..ns)
        .map(|al| a[al] * cg.companions(al).iter().map(|&v| a[v]).sum::<f64>())
        .collect();
    let chi_total: f64 = chi.iter().sum();
    let comps = Components::new(cg);
    let mut min_eigs = Vec::with_capacity(times.len());
    let mut min_eigs_unit = Vec::with_capacity(times.len());
    let mut crit = Vec::with_capacity(times.len());
    let mut epsilon = Vec::with_capacity(times.len());
    let mut estimate = Vec::with_capacity(times.len());
    for &t in times {
        min_eigs
            .push(comps.min_eigenvalue(&mut |al, set| fill_reduced_group(inter, env_weights, cg, al, t, &omit, set)));
        min_eigs_unit
            .push(comps.min_eigenvalue(&mut |al, set| fill_reduced_group(inter, env_weights, cg, al, t, &unit, set)));
        let mut osc = 0.0;
        let mut eps_max = f64::NEG_INFINITY;
        for al in 0..ns {
            if cg.companions(al).is_empty() {
                continue;
            }
            let eps: f64 = 2.0
                * angles[al]
                    .iter()
                    .zip(env_weights)
                    .map(|(dl, pb)| pb * (dl * t).cos())
                    .sum::<f64>();
            osc += eps * chi[al];
            eps_max = eps_max.max(eps);
        }
        if eps_max == f64::NEG_INFINITY {
            eps_max = 0.0;
        }
        crit.push((mass + osc) / d);
        epsilon.push(eps_max);
        estimate.push((mass + eps_max * chi_total) / d);
    }
    let scan = CpScanReport {
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
    };
    Ok(ReducedCpScanReport {
        g_prime: scan.g,
        scan,
        epsilon,
        estimate,
    })
}

fn check_gamma(gamma: &DMatrix<f64>, a_values: &[Vec<f64>]) -> Result<usize> {
    if gamma.nrows() != gamma.ncols() {
        return Err(Error::NotSquare {
            rows: gamma.nrows(),
            cols: gamma.ncols(),
        });
    }
    if gamma.nrows() != a_values.len() {
        return Err(Error::DimensionMismatch {
            expected: gamma.nrows(),
            found: a_values.len(),
        });
    }
    let n = a_values.first().map_or(0, Vec::len);
    if n == 0 || a_values.iter().any(|v| v.len() != n) {
        return Err(invalid("every operator needs the same nonzero number of eigenvalues"));
    }
    let asym = (gamma - gamma.transpose()).amax();
    if asym > 1e-12 {
        return Err(invalid("gamma must be symmetric"));
    }
    let min = nalgebra::SymmetricEigen::new(gamma.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -crate::markov::PSD_TOL {
        return Err(Error::NotPsd(min));
    }
    Ok(n)
}

/// `Γ_mn = Σ_{α,β} γ_αβ (a_αm − a_αn)(a_βm − a_βn)`.
pub fn dephasing_rates(gamma: &DMatrix<f64>, a_values: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = check_gamma(gamma, a_values)?;
    let k = a_values.len();
    Ok(DMatrix::from_fn(n, n, |m, q| {
        let v = nalgebra::DVector::from_fn(k, |al, _| a_values[al][m] - a_values[al][q]);
        (v.transpose() * gamma * &v)[(0, 0)]
    }))
}

/// Analytic solution `ρ_mn(t) = exp(−Γ_mn t / 2) ρ_mn(0)` of the dephasing
/// master equation with commuting diagonal operators.
pub fn lindblad_dephasing(
    gamma: &DMatrix<f64>,
    a_values: &[Vec<f64>],
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    let rates = dephasing_rates(gamma, a_values)?;
    if rates.nrows() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            expected: rates.nrows(),
            found: rho0.dim(),
        });
    }
    if !(t >= 0.0) {
        return Err(invalid("t must be >= 0"));
    }
    let out = DMatrix::from_fn(rho0.dim(), rho0.dim(), |m, q| {
        rho0.matrix()[(m, q)] * (-rates[(m, q)] * t / 2.0).exp()
    });
    Ok(DensityMatrix::from_psd_unchecked(out))
}

/// LTS and Lindblad coherence envelopes for one block pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub alpha: usize,
    pub gamma: usize,
    /// `|B_αγ(t)|`.
    pub lts_modulus: Vec<f64>,
    /// Running time average `(1/t) ∫_0^t |B_αγ|`.
    pub lts_running_mean: Vec<f64>,
    /// `exp(−Γ_αγ t / 2)`.
    pub lindblad: Vec<f64>,
    pub rate: f64,
    /// First grid time with `|B_αγ| < e^{-1}`.
    pub lts_crossing: Option<f64>,
    /// `2 / Γ_αγ`.
    pub lindblad_crossing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladComparison {
    pub times: Vec<f64>,
    pub pairs: Vec<PairComparison>,
}

/// Compare LTS coherence factors with Lindblad dephasing for every pair
/// `α < γ` of system blocks. `a_values[k][α]` is the eigenvalue of the
/// `k`-th Lindblad operator on block `α`.
pub fn lts_vs_lindblad(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    lambda: f64,
    gamma: &DMatrix<f64>,
    a_values: &[Vec<f64>],
    times: &[f64],
) -> Result<LindbladComparison> {
    inter.check_weights(env_weights)?;
    check_lambda(lambda)?;
    let rates = dephasing_rates(gamma, a_values)?;
    let ns = inter.system_count();
    if rates.nrows() != ns {
        return Err(Error::DimensionMismatch {
            expected: ns,
            found: rates.nrows(),
        });
    }
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotoneTimes);
    }
    let bs: Vec<DMatrix<C64>> = times
        .iter()
        .map(|&t| reduced_coefficients(inter, env_weights, lambda, t, 1.0))
        .collect();
    let threshold = (-1.0f64).exp();
    let mut pairs = Vec::new();
    for a in 0..ns {
        for g in a + 1..ns {
            let modulus: Vec<f64> = bs.iter().map(|b| b[(a, g)].norm()).collect();
            let mut running = Vec::with_capacity(times.len());
            let mut integral = 0.0;
            for i in 0..times.len() {
                if i > 0 {
                    integral += 0.5 * (modulus[i] + modulus[i - 1]) * (times[i] - times[i - 1]);
                }
                let span = times[i] - times[0];
                running.push(if span > 0.0 { integral / span } else { modulus[i] });
            }
            let rate = rates[(a, g)];
            pairs.push(PairComparison {
                alpha: a,
                gamma: g,
                lindblad: times.iter().map(|t| (-rate * t / 2.0).exp()).collect(),
                lts_crossing: modulus.iter().position(|m| *m < threshold).map(|i| times[i]),
                lindblad_crossing: if rate > 0.0 { Some(2.0 / rate) } else { None },
                lts_modulus: modulus,
                lts_running_mean: running,
                rate,
            });
        }
    }
    Ok(LindbladComparison {
        times: times.to_vec(),
        pairs,
    })
}

/// Trace distance between the reduced state at `t0` and the steady state.
pub fn distance_to_steady_state(
    inter: &PureDecoherenceInteraction,
    env_weights: &[f64],
    lambda: f64,
    rho_sys: &DensityMatrix,
    t0: f64,
) -> Result<f64> {
    let evolved = reduced_exact_map(inter, env_weights, lambda, t0)?.apply(rho_sys)?;
    states::trace_distance(&evolved, &steady_state(inter, rho_sys)?)
}
