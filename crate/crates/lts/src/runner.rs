//! Execute a scenario: build the model and state once, run the tasks in
//! parallel, write their files and a manifest.
//!
//! Random draws are reproducible from the seed alone. The model uses stream
//! 0 of a ChaCha8 generator, the scenario state stream 1 and task `i` stream
//! `i + 2`, so results do not depend on the thread count or task order.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::build;
use crate::output::{json_bytes, num, sha256_hex, write_atomic};
use crate::scenario::Scenario;
use crate::tasks::{self, Context};

pub const MANIFEST: &str = "manifest.json";
pub const SCENARIO_COPY: &str = "scenario.toml";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Worker threads; rayon's default when `None`.
    pub threads: Option<usize>,
    /// Where the scenario came from, for the manifest.
    pub source: String,
    /// Raw scenario bytes, hashed into the manifest.
    pub input: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub name: String,
    pub kind: &'static str,
    pub error: Option<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: PathBuf,
    pub tasks: Vec<TaskRecord>,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.tasks.iter().filter(|t| t.error.is_some()).count()
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct Done {
    record: TaskRecord,
    value: Value,
}

fn run_one(sc: &Scenario, i: usize, mut ctx: Context<'_>, out_dir: &Path) -> Done {
    let task = sc.tasks[i].get_ref();
    let stem = sc.stem(i);
    let start = Instant::now();
    let result = tasks::run(task, &mut ctx).and_then(|out| {
        let mut written = Vec::new();
        for (suffix, bytes) in &out.files {
            let file = format!("{stem}{suffix}");
            write_atomic(&out_dir.join(&file), bytes)?;
            written.push((file, sha256_hex(bytes)));
        }
        Ok((written, out.summary))
    });
    let wall = start.elapsed().as_secs_f64();
    let (files, error, summary) = match result {
        Ok((w, s)) => (w, None, s),
        Err(e) => (Vec::new(), Some(format!("{e:#}")), Value::Null),
    };
    let value = json!({
        "name": stem,
        "kind": task.kind(),
        "status": if error.is_some() { "failed" } else { "ok" },
        "error": error,
        "outputs": files.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect::<Vec<_>>(),
        "summary": summary,
        "wall_seconds": num(wall),
    });
    Done {
        record: TaskRecord {
            name: stem,
            kind: task.kind(),
            error,
            files: files.into_iter().map(|(f, _)| out_dir.join(f)).collect(),
        },
        value,
    }
}

/// Run every task. Errors building the model or the scenario state abort
/// the run; a failing task is recorded and the others continue.
pub fn run(sc: &Scenario, opts: &RunOptions) -> Result<RunSummary> {
    let start = Instant::now();
    let seed = opts.seed.unwrap_or(sc.seed);
    let spec = sc
        .model
        .as_ref()
        .map(|m| build::model(m, &mut rng(seed, 0)))
        .transpose()
        .context("building the model")?;
    let state = match (&sc.state, &spec) {
        (Some(s), Some(sd)) => Some(build::state(s, sd, &mut rng(seed, 1)).context("building the state")?),
        (Some(_), None) => anyhow::bail!("[state] needs a [model]"),
        _ => None,
    };
    fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    write_atomic(&opts.out_dir.join(SCENARIO_COPY), sc.to_toml().as_bytes())?;

    let work = || -> Vec<Done> {
        (0..sc.tasks.len())
            .into_par_iter()
            .map(|i| {
                let ctx = Context {
                    spec: spec.as_ref(),
                    state: state.as_ref(),
                    params: sc.params.merged(sc.tasks[i].get_ref().params()),
                    rng: rng(seed, i as u64 + 2),
                };
                run_one(sc, i, ctx, &opts.out_dir)
            })
            .collect()
    };
    let done = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("starting the thread pool")?
            .install(work),
        None => work(),
    };

    let manifest = json!({
        "tool": "lts",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": opts.source,
        "scenario_sha256": sha256_hex(&opts.input),
        "seed": seed,
        "threads": opts.threads.unwrap_or_else(rayon::current_num_threads),
        "tasks": done.iter().map(|d| d.value.clone()).collect::<Vec<_>>(),
        "wall_seconds": num(start.elapsed().as_secs_f64()),
    });
    let path = opts.out_dir.join(MANIFEST);
    write_atomic(&path, &json_bytes(&manifest))?;
    Ok(RunSummary {
        manifest: path,
        tasks: done.into_iter().map(|d| d.record).collect(),
    })
}
