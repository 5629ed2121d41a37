//! State-domain classifier for closed systems.
//!
//! With `E = E_max − E_g`, `ΔH = E/d` and `⟨H⟩ − E_g = E/r`, a coarse
//! graining with interval `E/k` is possible only for
//! `1 < k < max{d, r}/2.55`. States that allow it are coarse-grainable
//! Markovian. States with both `ΔH` and `⟨H⟩ − E_g` large stay close to the
//! unitary evolution. Everything in between is non-Markovian.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::DVector;

use crate::coarse::{build_window_coarse_graining, CoarseGraining, DEFAULT_FAR_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::ltsmap::{exact_map, gaussian_factor, LocalTimeParams};
use crate::spectra::SpectralDecomposition;
use crate::states::{self, DensityMatrix};
use crate::C64;

/// Divisor in the bound `k < max{d, r}/2.55`.
pub const COARSENING_DIVISOR: f64 = 2.55;
/// Levels with smaller population are outside the state's support.
pub const DEFAULT_POP_TOL: f64 = 1e-6;
/// Relative margin by which the minimal policy exceeds its lower bound.
pub const MINIMAL_LAMBDA_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// `√λ` just above `(2/π) min{ΔH, ⟨H⟩ − E_g}`.
    Minimal,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    CoarseMarkovian,
    UnitaryLike,
    NonMarkovian,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CoarseMarkovian => "coarse_markovian",
            Self::UnitaryLike => "unitary_like",
            Self::NonMarkovian => "non_markovian",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Open interval of coarsening parameters `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        !(self.upper > self.lower)
    }

    pub fn contains(&self, k: f64) -> bool {
        k > self.lower && k < self.upper
    }

    /// Midpoint, or `None` for an empty or unbounded interval.
    pub fn midpoint(&self) -> Option<f64> {
        if self.is_empty() || !self.upper.is_finite() {
            None
        } else {
            Some(0.5 * (self.lower + self.upper))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub lambda_policy: LambdaPolicy,
    pub pop_tol: f64,
    /// Upper bounds on `d` and `r` for the unitary-like domain.
    pub d_hi: f64,
    pub r_hi: f64,
    /// Lower bound on the fidelity floor for the unitary-like domain.
    pub fid_tol: f64,
    /// `r` in `δ_m = r δE`.
    pub r_small: f64,
    pub s: f64,
    /// Upper bound on Gaussian factors between groups.
    pub far_threshold: f64,
    /// Coarsening parameter to use instead of the midpoint of the feasible
    /// interval. Ignored when it lies outside that interval.
    pub k: Option<f64>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            lambda_policy: LambdaPolicy::Minimal,
            pop_tol: DEFAULT_POP_TOL,
            d_hi: 2.1,
            r_hi: 2.1,
            fid_tol: 0.70,
            r_small: 1.0,
            s: 9.0,
            far_threshold: DEFAULT_FAR_THRESHOLD,
            k: None,
        }
    }
}

/// Coarsening bookkeeping `(k, x, r, s)` tied by
/// `x = (r s + 1)/(1 − k E_m/E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseningParams {
    pub k: f64,
    pub x: f64,
    pub r_small: f64,
    pub s: f64,
}

impl CoarseningParams {
    /// Derive `x` for level energy `e_m` in a spectrum of span `span`.
    pub fn consistent(k: f64, r_small: f64, s: f64, e_m: f64, span: f64) -> Result<Self> {
        check_positive(k, r_small, s, span)?;
        let denom = 1.0 - k * e_m / span;
        if !(denom > 0.0) {
            return Err(invalid(format!("k = {k} must be below E/E_m = {}", span / e_m)));
        }
        Ok(Self {
            k,
            x: (r_small * s + 1.0) / denom,
            r_small,
            s,
        })
    }
}

fn check_positive(k: f64, r_small: f64, s: f64, span: f64) -> Result<()> {
    if !(k > 0.0 && r_small >= 0.0 && s > 0.0 && span > 0.0) {
        return Err(invalid("need k > 0, r >= 0, s > 0 and E > 0"));
    }
    if !(k.is_finite() && r_small.is_finite() && s.is_finite() && span.is_finite()) {
        return Err(invalid("coarsening parameters must be finite"));
    }
    Ok(())
}

/// Near-group Gaussian factor under the two readings of its exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearFactor {
    /// `δE = E/(x k)`.
    pub delta_e: f64,
    /// `δ_m = r δE`.
    pub delta_m: f64,
    /// `exp(−δ_m²/4λ)`.
    pub convention_a: f64,
    /// `exp(−δ_m²/λ)`.
    pub convention_b: f64,
}

/// Near factor for level energy `e_m` in a spectrum of span `span`. The two
/// expressions for `δ_m` must agree.
pub fn near_factor_at(span: f64, lambda: f64, e_m: f64, params: &CoarseningParams) -> Result<NearFactor> {
    check_positive(params.k, params.r_small, params.s, span)?;
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be > 0"));
    }
    if !(params.x > 0.0) {
        return Err(invalid("x must be > 0"));
    }
    let delta_e = span / (params.x * params.k);
    let delta_m = params.r_small * delta_e;
    let from_interval = (span / params.k - (e_m + delta_e)) / params.s;
    if (from_interval - delta_m).abs() > 1e-9 * span {
        return Err(invalid(format!(
            "inconsistent (k, x, r, s): r dE = {delta_m} but (E/k - E_m - dE)/s = {from_interval}"
        )));
    }
    let q = delta_m * delta_m / lambda;
    Ok(NearFactor {
        delta_e,
        delta_m,
        convention_a: (-q / 4.0).exp(),
        convention_b: (-q).exp(),
    })
}

/// [`near_factor_at`] for level `m` of a spectrum.
pub fn near_factor(
    spec: &SpectralDecomposition,
    lambda: f64,
    params: &CoarseningParams,
    m: usize,
) -> Result<NearFactor> {
    if m >= spec.count() {
        return Err(invalid(format!("level {m} out of range")));
    }
    near_factor_at(spec.span(), lambda, spec.energy(m), params)
}

fn supported_levels(pops: &[f64], pop_tol: f64) -> Vec<usize> {
    (0..pops.len()).filter(|&m| pops[m] > pop_tol).collect()
}

fn floor_value(qa: f64, qb: f64, gap: f64, lambda: f64) -> f64 {
    let a = gaussian_factor(gap, lambda);
    (qa * qa + qb * qb + 2.0 * qa * qb * a).sqrt()
}

/// Time-independent fidelity `√⟨ψ(t0)|σ(t0)|ψ(t0)⟩` of a pure state on two
/// levels `a`, `b` with weights `q`: `√(q_a² + q_b² + 2 q_a q_b A)` with
/// `A = exp(−(E_a − E_b)²/4λ)`.
pub fn fidelity_floor(spec: &SpectralDecomposition, psi: &DVector<C64>, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be > 0"));
    }
    let rho = DensityMatrix::from_pure(psi)?;
    let pops = states::level_populations(&rho, spec)?;
    let support = supported_levels(&pops, 1e-12);
    if support.len() != 2 {
        return Err(Error::SupportNotTwoLevels(support.len()));
    }
    let (a, b) = (support[0], support[1]);
    Ok(floor_value(pops[a], pops[b], spec.energy(b) - spec.energy(a), lambda))
}

/// Fidelity between the LTS-evolved state and the unitarily evolved pure
/// state at `t0`.
pub fn fidelity_at(spec: &SpectralDecomposition, psi: &DVector<C64>, lambda: f64, t0: f64) -> Result<f64> {
    let rho = DensityMatrix::from_pure(psi)?;
    let sigma = exact_map(spec, &LocalTimeParams::new(t0, lambda)?)?.apply(&rho)?;
    let u = crate::ltsmap::unitary_map(spec, t0);
    // U ψ ψ† U† = |Uψ⟩⟨Uψ|; read Uψ off the evolved projector's column of
    // largest norm.
    let evolved = u.apply(&rho)?;
    let m = evolved.matrix();
    let col = (0..m.ncols())
        .max_by(|&i, &j| m.column(i).norm().total_cmp(&m.column(j).norm()))
        .unwrap_or(0);
    let v: DVector<C64> = m.column(col).into_owned();
    states::fidelity(&sigma, &v)
}

/// Classifier output with every intermediate quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainReport {
    /// `E = E_max − E_g`.
    pub energy_span: f64,
    /// `ΔH`.
    pub delta_h: f64,
    /// `⟨H⟩ − E_g`.
    pub mean_above_ground: f64,
    /// `λ` chosen by the policy.
    pub lambda: f64,
    /// `E/ΔH`.
    pub d_param: f64,
    /// `E/(⟨H⟩ − E_g)`.
    pub r_param: f64,
    pub k_feasible: Interval,
    pub k_chosen: Option<f64>,
    /// `x` at the ground level.
    pub x: Option<f64>,
    /// `E/(x k)`.
    pub delta_e: Option<f64>,
    pub r_small: f64,
    pub s: f64,
    /// Near factor at the ground level.
    pub near: Option<NearFactor>,
    /// `π δ_mn / (2 min{ΔH, ⟨H⟩ − E_g})` minimised over supported levels in
    /// different groups; must exceed 4.
    pub separation_ratio: Option<f64>,
    pub coarse_graining: Option<CoarseGraining>,
    pub fidelity_floor: Option<f64>,
    pub domain: Domain,
    pub notes: Vec<String>,
}

fn lambda_for(policy: LambdaPolicy, lower: f64) -> Result<f64> {
    match policy {
        LambdaPolicy::Explicit(l) if l > 0.0 => Ok(l),
        LambdaPolicy::Explicit(_) => Err(invalid("lambda must be > 0")),
        LambdaPolicy::Minimal => {
            let root = (1.0 + MINIMAL_LAMBDA_MARGIN) * 2.0 / PI * lower;
            Ok(root * root)
        }
    }
}

/// Assign `rho` to one of the three domains.
pub fn classify_state(
    spec: &SpectralDecomposition,
    rho: &DensityMatrix,
    opts: &ClassifyOptions,
) -> Result<DomainReport> {
    let span = spec.span();
    if !(span > 0.0) {
        return Err(invalid("classification needs at least two levels"));
    }
    let pops = states::level_populations(rho, spec)?;
    let stats = states::energy_stats(rho, spec)?;
    let support = supported_levels(&pops, opts.pop_tol);
    let d_param = span / stats.std;
    let r_param = span / stats.mean_above_ground;
    let mut notes = Vec::new();
    let e = spec.energies();

    if stats.std <= 1e-12 * span {
        let lambda = match opts.lambda_policy {
            LambdaPolicy::Explicit(l) => lambda_for(LambdaPolicy::Explicit(l), 0.0)?,
            LambdaPolicy::Minimal => f64::INFINITY,
        };
        notes.push(String::from(
            "zero energy variance: the state is stationary under every map",
        ));
        return Ok(DomainReport {
            energy_span: span,
            delta_h: stats.std,
            mean_above_ground: stats.mean_above_ground,
            lambda,
            d_param: f64::INFINITY,
            r_param,
            k_feasible: Interval {
                lower: 1.0,
                upper: f64::INFINITY,
            },
            k_chosen: None,
            x: None,
            delta_e: None,
            r_small: opts.r_small,
            s: opts.s,
            near: None,
            separation_ratio: None,
            coarse_graining: None,
            fidelity_floor: None,
            domain: Domain::CoarseMarkovian,
            notes,
        });
    }

    let lower = stats.std.min(stats.mean_above_ground);
    let lambda = lambda_for(opts.lambda_policy, lower)?;

    let mut upper = d_param.max(r_param) / COARSENING_DIVISOR;
    if let Some(top) = support.iter().map(|&m| e[m]).filter(|x| *x > 0.0).reduce(f64::max) {
        upper = upper.min(span / top);
    }
    let k_feasible = Interval { lower: 1.0, upper };
    let k_chosen = match opts.k {
        Some(k) if k_feasible.contains(k) => Some(k),
        Some(k) => {
            notes.push(format!("requested k = {k} lies outside the feasible interval"));
            k_feasible.midpoint()
        }
        None => k_feasible.midpoint(),
    };

    let mut x = None;
    let mut delta_e = None;
    let mut near = None;
    let mut separation_ratio = None;
    let mut coarse_graining = None;
    if let Some(k) = k_chosen {
        let params = CoarseningParams::consistent(k, opts.r_small, opts.s, spec.ground_energy(), span)?;
        let nf = near_factor(spec, lambda, &params, 0)?;
        x = Some(params.x);
        delta_e = Some(nf.delta_e);
        near = Some(nf);
        let mut mask = alloc::vec![false; spec.count()];
        for &m in &support {
            mask[m] = true;
        }
        match build_window_coarse_graining(spec, lambda, span / k, opts.far_threshold, &mask) {
            Ok(cg) => {
                let mut group = alloc::vec![usize::MAX; spec.count()];
                for r in cg.representatives() {
                    group[r] = r;
                    for &v in cg.companions(r) {
                        group[v] = r;
                    }
                }
                let mut worst = f64::INFINITY;
                for (i, &a) in support.iter().enumerate() {
                    for &b in &support[i + 1..] {
                        if group[a] != group[b] {
                            worst = worst.min(PI * (e[b] - e[a]) / (2.0 * lower));
                        }
                    }
                }
                if worst.is_finite() {
                    separation_ratio = Some(worst);
                }
                coarse_graining = Some(cg);
            }
            Err(Error::NoAdmissibleCoarseGraining(msg)) => notes.push(msg),
            Err(err) => return Err(err),
        }
    }

    let fidelity_floor = if support.len() == 2 && rho.purity() > 1.0 - 1e-10 {
        let (a, b) = (support[0], support[1]);
        Some(floor_value(pops[a], pops[b], e[b] - e[a], lambda))
    } else {
        None
    };

    let domain = if coarse_graining.is_some() {
        Domain::CoarseMarkovian
    } else if d_param <= opts.d_hi && r_param <= opts.r_hi && fidelity_floor.is_some_and(|f| f >= opts.fid_tol) {
        Domain::UnitaryLike
    } else {
        Domain::NonMarkovian
    };

    Ok(DomainReport {
        energy_span: span,
        delta_h: stats.std,
        mean_above_ground: stats.mean_above_ground,
        lambda,
        d_param,
        r_param,
        k_feasible,
        k_chosen,
        x,
        delta_e,
        r_small: opts.r_small,
        s: opts.s,
        near,
        separation_ratio,
        coarse_graining,
        fidelity_floor,
        domain,
        notes,
    })
}
