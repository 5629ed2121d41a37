use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lts::runner::{self, RunOptions, RunSummary};
use lts::scenario::{
    Builder, ClassifyTask, CoarseTask, Companions, Distribution, EvolveTask, Family, InteractionSpec, LambdaChoice,
    MarkovScanTask, ModelSpec, OpensysTask, Params, PhaseRule, ReducedScanSpec, Scenario, SpectrumTask, StateSpec,
    TaskSpec,
};

/// Exit status when the scenario or arguments are invalid.
const EXIT_CONFIG: u8 = 2;
/// Exit status when at least one task failed.
const EXIT_TASK_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "lts",
    version,
    about = "Local-time-scheme dynamical maps: spectra, maps, Markovianity scans and classification"
)]
struct Cli {
    /// Seed for every random draw (overrides the scenario seed).
    #[arg(long, global = true, env = "LTS_SEED")]
    seed: Option<u64>,
    /// Output directory (overrides the scenario's out_dir).
    #[arg(long, global = true, env = "LTS_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for running tasks.
    #[arg(long, global = true, env = "LTS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every task of a TOML scenario.
    Run { scenario: PathBuf },
    /// Write the level energies and degeneracies.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Apply the exact map to a state over a time grid.
    Evolve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Also write the Kraus form of the last map.
        #[arg(long)]
        kraus: bool,
    },
    /// CP and composition checks for a family of maps on a time grid.
    MarkovScan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = FamilyArg::Exact)]
        family: FamilyArg,
        #[command(flatten)]
        approx: ApproxArgs,
    },
    /// Build a coarse graining and scan the approximate map.
    Coarse {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = BuilderArg::Greedy)]
        builder: BuilderArg,
        /// Window width as a fraction of the span (window builder).
        #[arg(long)]
        window_rel: Option<f64>,
        #[command(flatten)]
        approx: ApproxArgs,
    },
    /// Reduced dynamics under a pure-decoherence coupling.
    Opensys {
        /// Coupling energies, rows `α` separated by ';' and entries `β` by ','.
        #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["system_levels", "env_levels"])]
        energies: Option<String>,
        /// Random coupling: number of system levels.
        #[arg(long, requires = "env_levels")]
        system_levels: Option<usize>,
        /// Random coupling: number of environment levels.
        #[arg(long, requires = "system_levels")]
        env_levels: Option<usize>,
        #[arg(long, value_enum, default_value_t = DistArg::Normal)]
        distribution: DistArg,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Environment level weights; uniform when absent.
        #[arg(long, value_delimiter = ',')]
        env_weights: Option<Vec<f64>>,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = lts_core::opensys::DEFAULT_EPSILON_DEC)]
        epsilon: f64,
        #[arg(long, default_value_t = lts_core::opensys::DEFAULT_PERSISTENCE)]
        persistence: usize,
        /// Also scan CP of the approximate reduced map.
        #[arg(long)]
        reduced_scan: bool,
        #[arg(long, default_value_t = lts_core::coarse::DEFAULT_FAR_THRESHOLD)]
        far: f64,
        #[arg(long, default_value_t = lts_core::coarse::DEFAULT_NEAR_THRESHOLD)]
        near: f64,
    },
    /// Assign a state to a Markovianity domain.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 2.1)]
        d_hi: f64,
        #[arg(long, default_value_t = 2.1)]
        r_hi: f64,
        #[arg(long, default_value_t = 0.70)]
        fid_tol: f64,
        #[arg(long, default_value_t = 1.0)]
        r_small: f64,
        #[arg(long, default_value_t = 9.0)]
        s: f64,
        /// Coarsening parameter instead of the feasible midpoint.
        #[arg(long)]
        k: Option<f64>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelKind {
    Spin,
    Oscillator,
    Levels,
    RandomHermitian,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Spin)]
    model: ModelKind,
    #[arg(long, default_value_t = 4)]
    n_spins: u32,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 1)]
    modes: u32,
    #[arg(long, default_value_t = 10)]
    nu_max: u32,
    /// Level energies for `--model levels`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    energies: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    degeneracies: Option<Vec<usize>>,
    /// Dimension for `--model random-hermitian`.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long = "h-scale", default_value_t = 1.0)]
    h_scale: f64,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        Ok(match self.model {
            ModelKind::Spin => ModelSpec::Spin {
                n_spins: self.n_spins,
                omega: self.omega,
            },
            ModelKind::Oscillator => ModelSpec::Oscillator {
                modes: self.modes,
                omega: self.omega,
                nu_max: self.nu_max,
            },
            ModelKind::Levels => {
                if self.energies.is_empty() {
                    bail!("--model levels needs --energies");
                }
                ModelSpec::Levels {
                    energies: self.energies.clone(),
                    degeneracies: self.degeneracies.clone(),
                    energy_scale: None,
                }
            }
            ModelKind::RandomHermitian => ModelSpec::RandomHermitian {
                dim: self.dim,
                scale: self.h_scale,
            },
        })
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StateKind {
    Extremes,
    Eigen,
    Populations,
    Superposition,
    RandomPure,
    RandomMixed,
    MaximallyMixed,
}

#[derive(Args, Debug)]
struct StateArgs {
    #[arg(long, value_enum, default_value_t = StateKind::Extremes)]
    state: StateKind,
    /// Relative sign of the extremes superposition.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sign: f64,
    #[arg(long, default_value_t = 0)]
    level: usize,
    /// Per-level populations or superposition weights.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    phases: Option<Vec<f64>>,
}

impl StateArgs {
    fn spec(&self) -> StateSpec {
        match self.state {
            StateKind::Extremes => StateSpec::Extremes { sign: self.sign },
            StateKind::Eigen => StateSpec::Eigen { level: self.level },
            StateKind::Populations => StateSpec::Populations {
                probs: self.weights.clone(),
            },
            StateKind::Superposition => StateSpec::Superposition {
                weights: self.weights.clone(),
                phases: self.phases.clone(),
            },
            StateKind::RandomPure => StateSpec::RandomPure,
            StateKind::RandomMixed => StateSpec::RandomMixed,
            StateKind::MaximallyMixed => StateSpec::MaximallyMixed,
        }
    }
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[arg(long, group = "lam")]
    lambda: Option<f64>,
    /// `λ = rel·(E/π)²` with `E` the spectral span.
    #[arg(long, group = "lam")]
    lambda_rel: Option<f64>,
    /// `√λ = rel·E/π`.
    #[arg(long, group = "lam")]
    sqrt_lambda_rel: Option<f64>,
    #[arg(long)]
    t_start: Option<f64>,
    #[arg(long)]
    t_stop: Option<f64>,
    #[arg(long)]
    t_count: Option<usize>,
}

impl ParamArgs {
    fn spec(&self) -> Params {
        Params {
            lambda: self.lambda,
            lambda_rel: self.lambda_rel,
            sqrt_lambda_rel: self.sqrt_lambda_rel,
            t_start: self.t_start,
            t_stop: self.t_stop,
            t_count: self.t_count,
            times: None,
        }
    }

    fn has_lambda(&self) -> bool {
        self.lambda.is_some() || self.lambda_rel.is_some() || self.sqrt_lambda_rel.is_some()
    }
}

#[derive(Args, Debug)]
struct ApproxArgs {
    #[arg(long, default_value_t = lts_core::coarse::DEFAULT_FAR_THRESHOLD)]
    far: f64,
    #[arg(long, default_value_t = lts_core::coarse::DEFAULT_NEAR_THRESHOLD)]
    near: f64,
    /// Coefficient of blocks between two companions.
    #[arg(long, value_enum, default_value_t = CompanionsArg::Omit)]
    companions: CompanionsArg,
    #[arg(long, value_enum, default_value_t = PhaseRuleArg::GroupMean)]
    phase_rule: PhaseRuleArg,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FamilyArg {
    Exact,
    Unitary,
    Approx,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum BuilderArg {
    Greedy,
    Window,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum CompanionsArg {
    Omit,
    Unit,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PhaseRuleArg {
    GroupMean,
    PerPair,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DistArg {
    Normal,
    Uniform,
}

fn companions(c: CompanionsArg) -> Companions {
    match c {
        CompanionsArg::Omit => Companions::Omit,
        CompanionsArg::Unit => Companions::Unit,
    }
}

fn phase_rule(p: PhaseRuleArg) -> PhaseRule {
    match p {
        PhaseRuleArg::GroupMean => PhaseRule::GroupMean,
        PhaseRuleArg::PerPair => PhaseRule::PerPair,
    }
}

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad number {x:?} in --energies"))
                })
                .collect()
        })
        .collect()
}

/// One-task scenario for a subcommand other than `run`.
fn subcommand_scenario(cmd: Command) -> Result<Scenario> {
    let sc = match cmd {
        Command::Run { .. } => unreachable!("handled by the caller"),
        Command::Spectrum { model } => Scenario::single(
            Some(model.spec()?),
            None,
            Params::default(),
            TaskSpec::Spectrum(SpectrumTask {
                name: Some("spectrum".into()),
            }),
        ),
        Command::Evolve {
            model,
            state,
            params,
            kraus,
        } => Scenario::single(
            Some(model.spec()?),
            Some(state.spec()),
            params.spec(),
            TaskSpec::Evolve(EvolveTask {
                name: Some("evolve".into()),
                params: None,
                kraus,
            }),
        ),
        Command::MarkovScan {
            model,
            params,
            family,
            approx,
        } => Scenario::single(
            Some(model.spec()?),
            None,
            params.spec(),
            TaskSpec::MarkovScan(MarkovScanTask {
                name: Some("markov-scan".into()),
                params: None,
                family: match family {
                    FamilyArg::Exact => Family::Exact,
                    FamilyArg::Unitary => Family::Unitary,
                    FamilyArg::Approx => Family::Approx,
                },
                far: approx.far,
                near: approx.near,
                companions: companions(approx.companions),
                phase_rule: phase_rule(approx.phase_rule),
            }),
        ),
        Command::Coarse {
            model,
            state,
            params,
            builder,
            window_rel,
            approx,
        } => Scenario::single(
            Some(model.spec()?),
            Some(state.spec()),
            params.spec(),
            TaskSpec::Coarse(CoarseTask {
                name: Some("coarse".into()),
                params: None,
                builder: match builder {
                    BuilderArg::Greedy => Builder::Greedy,
                    BuilderArg::Window => Builder::Window,
                },
                window_rel,
                far: approx.far,
                near: approx.near,
                phase_rule: phase_rule(approx.phase_rule),
            }),
        ),
        Command::Opensys {
            energies,
            system_levels,
            env_levels,
            distribution,
            scale,
            env_weights,
            params,
            epsilon,
            persistence,
            reduced_scan,
            far,
            near,
        } => {
            let interaction = match (energies, system_levels, env_levels) {
                (Some(e), _, _) => InteractionSpec::Explicit {
                    energies: parse_rows(&e)?,
                    system_ranks: None,
                    env_ranks: None,
                },
                (None, Some(s), Some(e)) => InteractionSpec::Random {
                    system_levels: s,
                    env_levels: e,
                    distribution: match distribution {
                        DistArg::Normal => Distribution::Normal,
                        DistArg::Uniform => Distribution::Uniform,
                    },
                    scale,
                },
                _ => bail!("opensys needs --energies or --system-levels with --env-levels"),
            };
            Scenario::single(
                None,
                None,
                params.spec(),
                TaskSpec::Opensys(OpensysTask {
                    name: Some("opensys".into()),
                    params: None,
                    interaction,
                    env_weights,
                    system_state: None,
                    epsilon,
                    persistence,
                    lindblad: None,
                    reduced_scan: reduced_scan.then_some(ReducedScanSpec { far, near }),
                }),
            )
        }
        Command::Classify {
            model,
            state,
            params,
            d_hi,
            r_hi,
            fid_tol,
            r_small,
            s,
            k,
        } => Scenario::single(
            Some(model.spec()?),
            Some(state.spec()),
            params.spec(),
            TaskSpec::Classify(ClassifyTask {
                name: Some("classify".into()),
                params: None,
                states: None,
                lambda_policy: if params.has_lambda() {
                    LambdaChoice::Explicit
                } else {
                    LambdaChoice::Minimal
                },
                d_hi,
                r_hi,
                fid_tol,
                r_small,
                s,
                k,
            }),
        ),
    };
    sc.validate(None).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(sc)
}

fn report(summary: &RunSummary) {
    for t in &summary.tasks {
        match &t.error {
            None => {
                let files: Vec<String> = t.files.iter().map(|f| f.display().to_string()).collect();
                println!("{} ({}): ok  {}", t.name, t.kind, files.join(" "));
            }
            Some(e) => println!("{} ({}): FAILED  {e}", t.name, t.kind),
        }
    }
    println!("manifest: {}", summary.manifest.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, source, input) = match cli.command {
        Command::Run { scenario } => {
            let text = match std::fs::read_to_string(&scenario) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: reading {}: {e}", scenario.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match Scenario::parse(&text) {
                Ok(sc) => (sc, scenario.display().to_string(), text.into_bytes()),
                Err(e) => {
                    eprintln!("error: {}: {e}", scenario.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
        cmd => match subcommand_scenario(cmd) {
            Ok(sc) => {
                let text = sc.to_toml();
                (sc, "<command line>".to_string(), text.into_bytes())
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
    };
    let out_dir = cli
        .out_dir
        .or_else(|| scenario.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("lts-out"));
    let opts = RunOptions {
        out_dir,
        seed: cli.seed,
        threads: cli.threads,
        source,
        input,
    };
    match runner::run(&scenario, &opts) {
        Ok(summary) => {
            report(&summary);
            if summary.failed() > 0 {
                ExitCode::from(EXIT_TASK_FAILED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
