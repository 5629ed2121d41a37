//! One function per task kind. Each returns its output files (as suffixes
//! of the task stem) and a JSON summary for the manifest.

use std::collections::BTreeSet;
use std::sync::Arc;

use anyhow::{ensure, Context as _, Result};
use lts_core::classify::{self, ClassifyOptions, CoarseningParams, DomainReport, LambdaPolicy};
use lts_core::coarse::{self, ApproxFamily, ApproxOptions, CoarseGraining, CompanionBlocks};
use lts_core::ltsmap::{exact_map, gaussian_factor, unitary_map};
use lts_core::markov::{self, ExactFamily, MapFamily, UnitaryFamily};
use lts_core::opensys::{self, DecoherenceOptions, PureDecoherenceInteraction};
use lts_core::{linalg, states, Blocks, LocalTimeParams, SpectralDecomposition, C64};
use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::build::{self, Prepared};
use crate::output::{complex_matrix, json_bytes, num, nums, opt_num, real_matrix, Cell, Csv};
use crate::scenario::{
    Builder, ClassifyTask, CoarseTask, Companions, Distribution, EvolveTask, FactorsTask, Family, InteractionSpec,
    LambdaChoice, MarkovScanTask, NearTask, OpensysTask, Params, PhaseRule, StateSpec, TaskSpec,
};

/// Shared inputs of a task.
pub struct Context<'a> {
    pub spec: Option<&'a SpectralDecomposition>,
    pub state: Option<&'a Prepared>,
    /// Scenario parameters merged with the task's own.
    pub params: Params,
    pub rng: ChaCha8Rng,
}

impl<'a> Context<'a> {
    fn spec(&self) -> Result<&'a SpectralDecomposition> {
        self.spec.context("task needs a [model]")
    }

    fn state(&self) -> Result<&'a Prepared> {
        self.state.context("task needs a [state]")
    }

    fn lambda(&self) -> Result<f64> {
        build::require_lambda(&self.params, self.spec.map(|s| s.span()))
    }
}

#[derive(Debug, Default)]
pub struct TaskOutput {
    /// `(suffix, bytes)`; the file is `<stem><suffix>`.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
}

impl TaskOutput {
    fn file(&mut self, suffix: &str, bytes: Vec<u8>) {
        self.files.push((suffix.to_string(), bytes));
    }
}

pub fn run(task: &TaskSpec, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    match task {
        TaskSpec::Spectrum(_) => spectrum(ctx),
        TaskSpec::Evolve(t) => evolve(t, ctx),
        TaskSpec::MarkovScan(t) => markov_scan(t, ctx),
        TaskSpec::Coarse(t) => coarse_task(t, ctx),
        TaskSpec::Opensys(t) => opensys_task(t, ctx),
        TaskSpec::Classify(t) => classify_task(t, ctx),
        TaskSpec::Factors(t) => factors(t, ctx),
        TaskSpec::Near(t) => near(t, ctx),
    }
}

fn approx_options(companions: Companions, rule: PhaseRule) -> ApproxOptions {
    ApproxOptions {
        companions: match companions {
            Companions::Omit => CompanionBlocks::Omit,
            Companions::Unit => CompanionBlocks::Unit,
        },
        phase_rule: phase_rule(rule),
    }
}

fn phase_rule(rule: PhaseRule) -> coarse::PhaseRule {
    match rule {
        PhaseRule::GroupMean => coarse::PhaseRule::GroupMean,
        PhaseRule::PerPair => coarse::PhaseRule::PerPair,
    }
}

fn spectrum(ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let sd = ctx.spec()?;
    let mut csv = Csv::new(&["level", "energy", "degeneracy"]);
    for m in 0..sd.count() {
        csv.row(vec![m.into(), sd.energy(m).into(), sd.degeneracies()[m].into()]);
    }
    let mut out = TaskOutput::default();
    out.file(".csv", csv.into_bytes());
    out.summary = json!({
        "dim": sd.dim(),
        "levels": sd.count(),
        "ground_energy": num(sd.ground_energy()),
        "max_energy": num(sd.max_energy()),
        "span": num(sd.span()),
        "energy_scale": num(sd.energy_scale()),
    });
    Ok(out)
}

/// `tr(a b)` for Hermitian `a`, `b`.
fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| (x * y).re).sum()
}

fn half_trace_norm(m: &DMatrix<C64>) -> f64 {
    0.5 * linalg::eigenvalues(m).iter().map(|l| l.abs()).sum::<f64>()
}

fn evolve(task: &EvolveTask, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let sd = ctx.spec()?;
    let st = ctx.state()?;
    let lambda = ctx.lambda()?;
    let times = build::times(&ctx.params);
    let rho0 = &st.rho;
    let limit = states::luders_project(rho0, sd)?;
    let mut header = vec!["t", "trace", "purity", "min_eigenvalue", "distance_to_dephased"];
    if st.pure.is_some() {
        header.push("fidelity_unitary");
    }
    let mut csv = Csv::new(&header);
    let mut warnings = BTreeSet::new();
    let mut last = None;
    for &t in &times {
        let params = LocalTimeParams::new(t, lambda)?;
        for w in params.validate(sd, Some(rho0))? {
            warnings.insert(w.to_string());
        }
        let map = exact_map(sd, &params)?;
        let rho = map.apply(rho0)?;
        let mut row: Vec<Cell> = vec![
            t.into(),
            rho.trace().into(),
            rho.purity().into(),
            rho.min_eigenvalue().into(),
            half_trace_norm(&(rho.matrix() - limit.matrix())).into(),
        ];
        if st.pure.is_some() {
            let target = unitary_map(sd, t).apply_operator(rho0.matrix())?;
            row.push(trace_product(rho.matrix(), &target).clamp(0.0, 1.0).sqrt().into());
        }
        csv.row(row);
        last = Some((t, map, rho));
    }
    let (t_last, map, rho) = last.context("empty time grid")?;
    let mut out = TaskOutput::default();
    out.file(".csv", csv.into_bytes());
    out.file(
        "-final.json",
        json_bytes(&json!({ "t": num(t_last), "rho": complex_matrix(rho.matrix()) })),
    );
    if task.kraus {
        let k = map.kraus_decomposition()?;
        let ops: Vec<Value> = (0..k.len())
            .map(|i| {
                let c = k.level_coefficients(i);
                json!({
                    "weight": num(k.weights()[i]),
                    "level_coefficients": c.iter().map(|z| json!([num(z.re), num(z.im)])).collect::<Vec<_>>(),
                })
            })
            .collect();
        out.file(
            "-kraus.json",
            json_bytes(&json!({ "t": num(t_last), "lambda": num(lambda), "operators": ops })),
        );
    }
    out.summary = json!({
        "lambda": num(lambda),
        "points": times.len(),
        "warnings": warnings.into_iter().collect::<Vec<_>>(),
    });
    Ok(out)
}

fn markov_scan(task: &MarkovScanTask, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let sd = ctx.spec()?;
    let times = build::times(&ctx.params);
    let (report, lambda) = match task.family {
        Family::Unitary => (
            markov::markovianity_verdict(&UnitaryFamily { spec: sd.clone() }, &times)?,
            None,
        ),
        Family::Exact => {
            let lambda = ctx.lambda()?;
            let fam = ExactFamily {
                spec: sd.clone(),
                lambda,
            };
            (markov::markovianity_verdict(&fam, &times)?, Some(lambda))
        }
        Family::Approx => {
            let lambda = ctx.lambda()?;
            let cg = coarse::build_coarse_graining(sd, lambda, task.far, task.near)?;
            let fam = ApproxFamily {
                cg,
                options: approx_options(task.companions, task.phase_rule),
            };
            (
                markov::markovianity_verdict(&fam as &dyn MapFamily, &times)?,
                Some(lambda),
            )
        }
    };
    let mut members = Csv::new(&["t", "min_eigenvalue", "is_cp"]);
    for (t, r) in &report.members {
        members.row(vec![(*t).into(), r.min_eigenvalue.into(), r.is_cp.into()]);
    }
    let mut pairs = Csv::new(&[
        "t_initial",
        "t_total",
        "intermediate_min_eigenvalue",
        "intermediate_cp",
        "not_invertible_block",
        "composition_defect",
    ]);
    for p in &report.pairs {
        pairs.row(vec![
            p.t_initial.into(),
            p.t_total.into(),
            p.intermediate.as_ref().map(|r| r.min_eigenvalue).into(),
            p.intermediate_cp().into(),
            p.not_invertible.map(|(r, s)| format!("{r};{s}")).into(),
            p.composition_defect.into(),
        ]);
    }
    let mut out = TaskOutput::default();
    out.file("-members.csv", members.into_bytes());
    out.file("-pairs.csv", pairs.into_bytes());
    out.summary = json!({
        "family": match task.family { Family::Exact => "exact", Family::Unitary => "unitary", Family::Approx => "approx" },
        "lambda": opt_num(lambda),
        "verdict": report.verdict.as_str(),
        "first_failure": report.first_failure.map(|(a, b)| json!([num(a), num(b)])),
        "max_composition_defect": num(report.pairs.iter().map(|p| p.composition_defect).fold(0.0, f64::max)),
    });
    Ok(out)
}

fn groups_csv(cg: &CoarseGraining, energy: impl Fn(usize) -> f64) -> Csv {
    let mut csv = Csv::new(&["representative", "energy", "companions", "delta", "g_m", "g_upper"]);
    for m in cg.representatives() {
        let comp: Vec<String> = cg.companions(m).iter().map(|v| v.to_string()).collect();
        csv.row(vec![
            m.into(),
            energy(m).into(),
            comp.join(";").into(),
            cg.delta(m).into(),
            cg.g_m(m).into(),
            cg.g_upper(m).into(),
        ]);
    }
    csv
}

fn groups_json(cg: &CoarseGraining) -> Value {
    Value::Array(
        cg.representatives()
            .into_iter()
            .map(|m| json!({ "representative": m, "companions": cg.companions(m), "delta": num(cg.delta(m)) }))
            .collect(),
    )
}

fn coarse_task(task: &CoarseTask, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let sd = ctx.spec()?;
    let lambda = ctx.lambda()?;
    let times = build::times(&ctx.params);
    let cg = match task.builder {
        Builder::Greedy => coarse::build_coarse_graining(sd, lambda, task.far, task.near)?,
        Builder::Window => {
            let rel = task.window_rel.context("window builder needs window_rel")?;
            ensure!(rel > 0.0, "window_rel must be > 0");
            let support = match ctx.state {
                Some(st) => states::level_populations(&st.rho, sd)?
                    .into_iter()
                    .map(|p| p > classify::DEFAULT_POP_TOL)
                    .collect(),
                None => vec![true; sd.count()],
            };
            coarse::build_window_coarse_graining(sd, lambda, rel * sd.span(), task.far, &support)?
        }
    };
    let scan = coarse::cp_scan(&cg, &times, None, phase_rule(task.phase_rule))?;
    let mut header = vec!["t", "min_eigenvalue_omit", "min_eigenvalue_unit", "probe_criterion"];
    if ctx.state.is_some() {
        header.push("approx_distance");
    }
    let mut csv = Csv::new(&header);
    let opts = approx_options(Companions::Omit, task.phase_rule);
    for (k, &t) in times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![
            t.into(),
            scan.min_eigs[k].into(),
            scan.min_eigs_unit[k].into(),
            scan.probe_criterion[k].into(),
        ];
        if let Some(st) = ctx.state {
            let exact = exact_map(sd, &LocalTimeParams::new(t, lambda)?)?.apply_operator(st.rho.matrix())?;
            let approx = coarse::approx_map_with(&cg, t, &opts).apply_operator(st.rho.matrix())?;
            row.push(half_trace_norm(&(exact - approx)).into());
        }
        csv.row(row);
    }
    let mut out = TaskOutput::default();
    out.file("-groups.csv", groups_csv(&cg, |m| sd.energy(m)).into_bytes());
    out.file("-scan.csv", csv.into_bytes());
    out.summary = json!({
        "lambda": num(lambda),
        "groups": groups_json(&cg),
        "g": scan.g,
        "g_max": scan.g_max,
        "violation_fraction": num(scan.violation_fraction),
        "violation_fraction_unit": num(scan.violation_fraction_unit),
        "criterion_violation_fraction": num(scan.criterion_violation_fraction),
        "sustained_cp_from": opt_num(coarse::sustained_from(&times, &scan.min_eigs, lts_core::ltsmap::PSD_TOL)),
    });
    Ok(out)
}

fn interaction(spec: &InteractionSpec, rng: &mut ChaCha8Rng) -> Result<PureDecoherenceInteraction> {
    match spec {
        InteractionSpec::Explicit {
            energies,
            system_ranks,
            env_ranks,
        } => {
            let ns = energies.len();
            ensure!(ns >= 1, "energies must have at least one row");
            let ne = energies[0].len();
            ensure!(
                energies.iter().all(|r| r.len() == ne),
                "energies rows must have equal length"
            );
            let e = DMatrix::from_fn(ns, ne, |a, b| energies[a][b]);
            let sr = system_ranks.clone().unwrap_or_else(|| vec![1; ns]);
            let er = env_ranks.clone().unwrap_or_else(|| vec![1; ne]);
            Ok(PureDecoherenceInteraction::with_ranks(e, sr, er)?)
        }
        InteractionSpec::Random {
            system_levels,
            env_levels,
            distribution,
            scale,
        } => {
            ensure!(
                *system_levels >= 1 && *env_levels >= 1,
                "need at least one system and one environment level"
            );
            ensure!(*scale > 0.0, "scale must be > 0");
            let normal = *distribution == Distribution::Normal;
            let mut e = DMatrix::zeros(*system_levels, *env_levels);
            for b in 0..*env_levels {
                for a in 0..*system_levels {
                    e[(a, b)] = build::draw(rng, normal, *scale);
                }
            }
            Ok(PureDecoherenceInteraction::with_ranks(
                e,
                vec![1; *system_levels],
                vec![1; *env_levels],
            )?)
        }
    }
}

fn env_weights(given: Option<&Vec<f64>>, count: usize) -> Result<Vec<f64>> {
    match given {
        None => Ok(vec![1.0 / count as f64; count]),
        Some(w) => {
            ensure!(
                w.len() == count,
                "env_weights has {} entries, environment has {count} levels",
                w.len()
            );
            ensure!(w.iter().all(|p| *p >= 0.0), "env_weights must be >= 0");
            let s: f64 = w.iter().sum();
            ensure!((s - 1.0).abs() <= 1e-9, "env_weights sum to {s}, expected 1");
            Ok(w.clone())
        }
    }
}

fn opensys_task(task: &OpensysTask, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let inter = interaction(&task.interaction, &mut ctx.rng)?;
    let p = env_weights(task.env_weights.as_ref(), inter.environment_count())?;
    let lambda = ctx.lambda()?;
    let times = build::times(&ctx.params);
    let ns = inter.system_count();
    let labels = SpectralDecomposition::new(
        Arc::<Blocks>::clone(inter.system()),
        (0..ns).map(|a| a as f64).collect(),
    )?;
    let uniform = StateSpec::Superposition {
        weights: vec![1.0; ns],
        phases: None,
    };
    let rho_s = build::state(task.system_state.as_ref().unwrap_or(&uniform), &labels, &mut ctx.rng)?.rho;

    let mut coh = Csv::new(&["t", "alpha", "gamma", "re", "im", "modulus"]);
    let mut prof_csv = Csv::new(&["t", "max_coherence", "distance_to_steady"]);
    let steady = opensys::steady_state(&inter, &rho_s)?;
    let profile = opensys::decoherence_profile(
        &inter,
        &p,
        lambda,
        &times,
        &DecoherenceOptions {
            epsilon: task.epsilon,
            persistence: task.persistence,
        },
    )?;
    for (k, &t) in times.iter().enumerate() {
        let f = opensys::coherence_factors(&inter, &p, lambda, t)?;
        for a in 0..ns {
            for g in a + 1..ns {
                let z = f.b[(a, g)];
                coh.row(vec![
                    t.into(),
                    a.into(),
                    g.into(),
                    z.re.into(),
                    z.im.into(),
                    z.norm().into(),
                ]);
            }
        }
        let d = opensys::distance_to_steady_state(&inter, &p, lambda, &rho_s, t)?;
        prof_csv.row(vec![t.into(), profile.max_coherence[k].into(), d.into()]);
    }
    let mut out = TaskOutput::default();
    out.file("-coherence.csv", coh.into_bytes());
    out.file("-profile.csv", prof_csv.into_bytes());
    let mut summary = json!({
        "lambda": num(lambda),
        "system_levels": ns,
        "environment_levels": inter.environment_count(),
        "env_weights": nums(&p),
        "energies": real_matrix(inter.energies()),
        "decoherence_time": opt_num(profile.decoherence_time),
        "recurrence_onset": opt_num(profile.recurrence_onset),
        "recurrence_time": opt_num(profile.recurrence_time),
        "steady_state": complex_matrix(steady.matrix()),
        "warnings": inter.warnings(),
    });
    if let Some(l) = &task.lindblad {
        let k = l.gamma.len();
        ensure!(l.gamma.iter().all(|r| r.len() == k), "gamma must be square");
        let gamma = DMatrix::from_fn(k, k, |a, b| l.gamma[a][b]);
        let cmp = opensys::lts_vs_lindblad(&inter, &p, lambda, &gamma, &l.a_values, &times)?;
        let mut csv = Csv::new(&["t", "alpha", "gamma", "lts_modulus", "lts_running_mean", "lindblad"]);
        for pair in &cmp.pairs {
            for (k, &t) in cmp.times.iter().enumerate() {
                csv.row(vec![
                    t.into(),
                    pair.alpha.into(),
                    pair.gamma.into(),
                    pair.lts_modulus[k].into(),
                    pair.lts_running_mean[k].into(),
                    pair.lindblad[k].into(),
                ]);
            }
        }
        out.file("-lindblad.csv", csv.into_bytes());
        summary["lindblad"] = Value::Array(
            cmp.pairs
                .iter()
                .map(|c| {
                    json!({
                        "alpha": c.alpha,
                        "gamma": c.gamma,
                        "rate": num(c.rate),
                        "lts_crossing": opt_num(c.lts_crossing),
                        "lindblad_crossing": opt_num(c.lindblad_crossing),
                    })
                })
                .collect(),
        );
    }
    if let Some(scan_spec) = &task.reduced_scan {
        let cg = opensys::build_reduced_coarse_graining(&inter, &p, lambda, scan_spec.far, scan_spec.near)?;
        let r = opensys::cp_scan_reduced(&inter, &p, &cg, &times, None)?;
        let mut csv = Csv::new(&[
            "t",
            "min_eigenvalue_omit",
            "min_eigenvalue_unit",
            "probe_criterion",
            "epsilon",
            "estimate",
        ]);
        for (k, &t) in times.iter().enumerate() {
            csv.row(vec![
                t.into(),
                r.scan.min_eigs[k].into(),
                r.scan.min_eigs_unit[k].into(),
                r.scan.probe_criterion[k].into(),
                r.epsilon[k].into(),
                r.estimate[k].into(),
            ]);
        }
        out.file("-reduced-scan.csv", csv.into_bytes());
        summary["reduced_scan"] = json!({
            "groups": groups_json(&cg),
            "g_prime": r.g_prime,
            "violation_fraction": num(r.scan.violation_fraction),
            "violation_fraction_unit": num(r.scan.violation_fraction_unit),
            "sustained_cp_from": opt_num(coarse::sustained_from(&times, &r.scan.min_eigs, lts_core::ltsmap::PSD_TOL)),
        });
    }
    out.summary = summary;
    Ok(out)
}

fn report_json(r: &DomainReport) -> Value {
    json!({
        "domain": r.domain.as_str(),
        "energy_span": num(r.energy_span),
        "delta_h": num(r.delta_h),
        "mean_above_ground": num(r.mean_above_ground),
        "lambda": num(r.lambda),
        "d_param": num(r.d_param),
        "r_param": num(r.r_param),
        "k_feasible": [num(r.k_feasible.lower), num(r.k_feasible.upper)],
        "k_chosen": opt_num(r.k_chosen),
        "x": opt_num(r.x),
        "delta_e": opt_num(r.delta_e),
        "r_small": num(r.r_small),
        "s": num(r.s),
        "near": r.near.map(|n| json!({
            "delta_e": num(n.delta_e),
            "delta_m": num(n.delta_m),
            "convention_a": num(n.convention_a),
            "convention_b": num(n.convention_b),
        })),
        "separation_ratio": opt_num(r.separation_ratio),
        "groups": r.coarse_graining.as_ref().map(groups_json),
        "fidelity_floor": opt_num(r.fidelity_floor),
        "notes": r.notes,
    })
}

fn classify_task(task: &ClassifyTask, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let sd = ctx.spec()?;
    let policy = match task.lambda_policy {
        LambdaChoice::Minimal => LambdaPolicy::Minimal,
        LambdaChoice::Explicit => LambdaPolicy::Explicit(ctx.lambda()?),
    };
    let opts = ClassifyOptions {
        lambda_policy: policy,
        d_hi: task.d_hi,
        r_hi: task.r_hi,
        fid_tol: task.fid_tol,
        r_small: task.r_small,
        s: task.s,
        k: task.k,
        ..ClassifyOptions::default()
    };
    let prepared: Vec<Prepared> = match &task.states {
        Some(list) => {
            ensure!(!list.is_empty(), "states must not be empty");
            list.iter()
                .map(|s| build::state(s, sd, &mut ctx.rng))
                .collect::<Result<_>>()?
        }
        None => vec![ctx.state()?.clone()],
    };
    let mut csv = Csv::new(&[
        "state",
        "domain",
        "lambda",
        "d_param",
        "r_param",
        "k_lower",
        "k_upper",
        "k_chosen",
        "x",
        "delta_e",
        "near_a",
        "near_b",
        "separation_ratio",
        "fidelity_floor",
        "notes",
    ]);
    let mut reports = Vec::new();
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for (i, st) in prepared.iter().enumerate() {
        let r = classify::classify_state(sd, &st.rho, &opts).with_context(|| format!("state {i}"))?;
        *counts.entry(r.domain.as_str()).or_default() += 1;
        csv.row(vec![
            i.into(),
            r.domain.as_str().into(),
            r.lambda.into(),
            r.d_param.into(),
            r.r_param.into(),
            r.k_feasible.lower.into(),
            r.k_feasible.upper.into(),
            r.k_chosen.into(),
            r.x.into(),
            r.delta_e.into(),
            r.near.map(|n| n.convention_a).into(),
            r.near.map(|n| n.convention_b).into(),
            r.separation_ratio.into(),
            r.fidelity_floor.into(),
            r.notes.join("; ").into(),
        ]);
        reports.push(report_json(&r));
    }
    let mut out = TaskOutput::default();
    out.file(".csv", csv.into_bytes());
    out.file(".json", json_bytes(&Value::Array(reports.clone())));
    out.summary = json!({ "states": prepared.len(), "domains": counts, "first": reports[0] });
    Ok(out)
}

fn factors(task: &FactorsTask, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let lambda = ctx.lambda()?;
    let span = ctx.spec.map(|s| s.span());
    let mut gaps: Vec<(String, f64)> = task.gaps.iter().map(|g| (format!("{g}"), *g)).collect();
    if !task.gaps_rel.is_empty() || !task.gap_divisors.is_empty() {
        let e = span.context("relative gaps need a [model]")?;
        gaps.extend(task.gaps_rel.iter().map(|r| (format!("{r}*E"), r * e)));
        gaps.extend(task.gap_divisors.iter().map(|q| (format!("E/{q}"), e / q)));
    }
    let mut csv = Csv::new(&["gap_label", "gap", "lambda", "factor", "factor_b"]);
    let mut rows = Vec::new();
    for (label, g) in &gaps {
        let a = gaussian_factor(*g, lambda);
        let b = (-g * g / lambda).exp();
        csv.row(vec![
            label.as_str().into(),
            (*g).into(),
            lambda.into(),
            a.into(),
            b.into(),
        ]);
        rows.push(json!({ "gap": label, "factor": num(a), "factor_b": num(b) }));
    }
    let mut out = TaskOutput::default();
    out.file(".csv", csv.into_bytes());
    out.summary = json!({ "lambda": num(lambda), "factors": rows });
    Ok(out)
}

fn near(task: &NearTask, ctx: &mut Context<'_>) -> Result<TaskOutput> {
    let sd = ctx.spec()?;
    let lambda = ctx.lambda()?;
    let span = sd.span();
    let e_m = match (task.e_m, task.level) {
        (Some(e), _) => e,
        (None, Some(m)) => {
            ensure!(m < sd.count(), "level {m} out of range");
            sd.energy(m)
        }
        (None, None) => sd.ground_energy(),
    };
    let params = CoarseningParams::consistent(task.k, task.r_small, task.s, e_m, span)?;
    let nf = classify::near_factor_at(span, lambda, e_m, &params)?;
    let v = json!({
        "lambda": num(lambda),
        "span": num(span),
        "e_m": num(e_m),
        "k": num(params.k),
        "x": num(params.x),
        "r_small": num(params.r_small),
        "s": num(params.s),
        "delta_e": num(nf.delta_e),
        "delta_m": num(nf.delta_m),
        "convention_a": num(nf.convention_a),
        "convention_b": num(nf.convention_b),
    });
    let mut out = TaskOutput::default();
    out.file(".json", json_bytes(&v));
    out.summary = v;
    Ok(out)
}
