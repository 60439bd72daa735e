//! One function per subcommand. Each writes its artifacts atomically and
//! returns a one-line summary for stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use qvf_core::align::{group_by_prompt, mine_pairs, GrpoGroup, DPO_SCHEMA, GRPO_SCHEMA};
use qvf_core::candidates::{
    generate_all, Candidate, CandidateRecord, GenerationRequest, GenerationTarget, CANDIDATE_SCHEMA,
};
use qvf_core::evalkit::{run_benchmark, BenchTask, EvalConfig, BENCH_SCHEMA};
use qvf_core::io::{self, IoError};
use qvf_core::merge::{slerp_merge, MergeError, TensorFile};
use qvf_core::qlang::Dialect;
use qvf_core::rng::{derive_seed, PRNG_ALGORITHM};
use qvf_core::sandbox::{
    read_buckets, verify_batch, write_buckets, BatchOutcome, Executor, FailureRecord, RunManifest,
    Sandbox, SandboxError, VerifyConfig, WorkerPool,
};
use qvf_core::synth::{generate_dataset, Task, TASK_SCHEMA};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "manifest/1";

/// Salt that keeps GRPO rollouts independent of `sample` draws on the same seed.
const GRPO_SALT: u64 = 0x6790;

/// Provenance written next to every artifact as `<file>.manifest.json`.
#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    schema: &'static str,
    command: &'a str,
    config_hash: String,
    prng_algorithm: &'static str,
    seeds: BTreeMap<&'static str, u64>,
    counts: Value,
    input_digests: BTreeMap<&'static str, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failures: Vec<FailureRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<Value>,
}

impl<'a> Sidecar<'a> {
    fn new(command: &'a str, cfg: &RunConfig, counts: Value) -> Self {
        Sidecar {
            schema: MANIFEST_SCHEMA,
            command,
            config_hash: cfg.hash(),
            prng_algorithm: PRNG_ALGORITHM,
            seeds: BTreeMap::from([("config", cfg.seed)]),
            counts,
            input_digests: BTreeMap::new(),
            failures: Vec::new(),
            details: None,
        }
    }

    fn input(mut self, role: &'static str, path: &Path) -> Result<Self, CliError> {
        self.input_digests
            .insert(role, io::file_digest(path).map_err(bad_input)?);
        Ok(self)
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{name}.manifest.json"))
}

/// Write an artifact and its sidecar together.
fn write_with_sidecar(out: &Path, bytes: Vec<u8>, sidecar: &Sidecar) -> Result<(), CliError> {
    io::write_all_atomic(&[
        (out.to_path_buf(), bytes),
        (sidecar_path(out), io::to_json_pretty(sidecar).into_bytes()),
    ])
    .map_err(|e| CliError::infra(e.to_string()))
}

/// Unreadable or malformed inputs are the caller's mistake.
fn bad_input(e: IoError) -> CliError {
    CliError::config(e.to_string())
}

fn sandbox_error(e: SandboxError) -> CliError {
    match e {
        SandboxError::WorkerUnavailable(_) | SandboxError::Protocol(_) => {
            CliError::infra(e.to_string())
        }
        _ => CliError::config(e.to_string()),
    }
}

/// Outputs are written first; failures then turn into exit code 3.
fn finish(summary: Value, failures: &[FailureRecord]) -> Result<Value, CliError> {
    match failures.first() {
        None => Ok(summary),
        Some(f) => Err(CliError::infra(format!(
            "{} failure(s); first: {}: {}",
            failures.len(),
            f.candidate_id,
            f.error
        ))),
    }
}

fn read_tasks(path: &Path) -> Result<Vec<Task>, CliError> {
    io::read_jsonl(path, TASK_SCHEMA).map_err(bad_input)
}

fn executor(cfg: &RunConfig) -> Sandbox {
    match &cfg.worker {
        Some(cmd) => Sandbox::with_worker(WorkerPool::new(
            cmd.clone(),
            cfg.pool_size,
            cfg.exec_timeout_ms,
        )),
        None => Sandbox::builtin(),
    }
}

fn verify_config(cfg: &RunConfig) -> VerifyConfig {
    VerifyConfig {
        pool_size: cfg.pool_size,
        timeout_ms: cfg.exec_timeout_ms,
        weights: cfg.weights,
        format_scoring: cfg.format_scoring,
    }
}

/// Generate `n` candidates per task. Tasks whose generation failed are
/// reported as failure records and contribute no candidates.
fn draw(
    cfg: &RunConfig,
    tasks: &[Task],
    n: usize,
    salts: &[u64],
) -> (Vec<Candidate>, Vec<FailureRecord>) {
    let generator = cfg.generator.build();
    let jobs: Vec<(GenerationTarget, GenerationRequest)> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut s = vec![i as u64];
            s.extend_from_slice(salts);
            let req = GenerationRequest {
                prompt: t.prompt.clone(),
                n,
                temperature: cfg.sampling.temperature,
                max_tokens: cfg.sampling.max_tokens,
                seed: derive_seed(cfg.seed, &s),
            };
            (GenerationTarget::from(t), req)
        })
        .collect();
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (task, result) in tasks.iter().zip(generate_all(
        generator.as_ref(),
        &jobs,
        cfg.generator.max_in_flight,
    )) {
        match result {
            Ok(c) => candidates.extend(c),
            Err(e) => failures.push(FailureRecord {
                task_id: task.task_id.clone(),
                candidate_id: String::new(),
                error: format!("generation failed: {e}"),
            }),
        }
    }
    (candidates, failures)
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Value, CliError> {
    let families = cfg.template_families()?;
    let tasks = generate_dataset(&families, cfg.count, cfg.seed)
        .map_err(|e| CliError::config(e.to_string()))?;
    let runtime = tasks.iter().filter(|t| t.requires_runtime).count();
    let counts = json!({ "tasks": tasks.len(), "requires_runtime": runtime });
    let sidecar = Sidecar::new("generate", cfg, counts.clone());
    write_with_sidecar(
        out,
        io::to_jsonl(TASK_SCHEMA, &tasks).into_bytes(),
        &sidecar,
    )?;
    Ok(json!({ "command": "generate", "out": out, "counts": counts }))
}

pub fn sample(cfg: &RunConfig, tasks_path: &Path, out: &Path) -> Result<Value, CliError> {
    let tasks = read_tasks(tasks_path)?;
    let (candidates, failures) = draw(cfg, &tasks, cfg.n_per_prompt, &[]);
    let records: Vec<&CandidateRecord> = candidates.iter().map(|c| &c.record).collect();
    let mutated = candidates.iter().filter(|c| c.is_mutated()).count();
    let counts = json!({
        "tasks": tasks.len(),
        "candidates": records.len(),
        "mutated": mutated,
        "failures": failures.len(),
    });
    let mut sidecar = Sidecar::new("sample", cfg, counts.clone()).input("tasks", tasks_path)?;
    sidecar.failures = failures.clone();
    sidecar.details = Some(json!({ "generator_id": cfg.generator.build().id() }));
    write_with_sidecar(
        out,
        io::to_jsonl(CANDIDATE_SCHEMA, &records).into_bytes(),
        &sidecar,
    )?;
    finish(
        json!({ "command": "sample", "out": out, "counts": counts }),
        &failures,
    )
}

pub fn verify(
    cfg: &RunConfig,
    tasks_path: &Path,
    cands_path: &Path,
    out_dir: &Path,
) -> Result<Value, CliError> {
    let tasks = read_tasks(tasks_path)?;
    let records: Vec<CandidateRecord> =
        io::read_jsonl(cands_path, CANDIDATE_SCHEMA).map_err(bad_input)?;
    let dialects: BTreeMap<&str, Dialect> = tasks
        .iter()
        .map(|t| (t.task_id.as_str(), t.dialect))
        .collect();
    let candidates: Vec<Candidate> = records
        .into_iter()
        .map(|r| {
            // Orphans are reported by verify_batch; the dialect is irrelevant for them.
            let d = dialects
                .get(r.task_id.as_str())
                .copied()
                .unwrap_or(Dialect::Qlang);
            Candidate::from_record(r, d)
        })
        .collect();

    let sandbox = executor(cfg);
    let started = Instant::now();
    let outcome =
        verify_batch(&sandbox, &tasks, &candidates, &verify_config(cfg)).map_err(sandbox_error)?;
    let wall = started.elapsed();
    let seeds = BTreeMap::from([("config".to_string(), cfg.seed)]);
    let manifest = RunManifest::new(&cfg.hash(), seeds, &sandbox.id(), &tasks, &outcome);
    write_buckets(out_dir, &outcome.samples, &manifest, wall)
        .map_err(|e| CliError::infra(e.to_string()))?;
    finish(
        json!({ "command": "verify", "out_dir": out_dir, "counts": manifest.counts }),
        &outcome.failures,
    )
}

pub fn mine_dpo(cfg: &RunConfig, buckets: &Path, out: &Path) -> Result<Value, CliError> {
    let samples = read_buckets(buckets).map_err(bad_input)?;
    let embedder = cfg.embedder.build();
    let outcome = mine_pairs(&samples, embedder.as_ref(), cfg.n_per_prompt, cfg.seed).map_err(
        |e| match e {
            qvf_core::align::AlignError::Http(_) => CliError::infra(e.to_string()),
            _ => CliError::config(e.to_string()),
        },
    )?;
    let counts = serde_json::to_value(&outcome.stats).expect("stats serialize");
    let mut sidecar = Sidecar::new("mine-dpo", cfg, counts.clone());
    for (role, file) in [
        ("bucket_a", qvf_core::sandbox::BUCKET_A_FILE),
        ("bucket_b", qvf_core::sandbox::BUCKET_B_FILE),
    ] {
        sidecar = sidecar.input(role, &buckets.join(file))?;
    }
    sidecar.details =
        Some(json!({ "embedder_id": embedder.id(), "n_per_prompt": cfg.n_per_prompt }));
    write_with_sidecar(
        out,
        io::to_jsonl(DPO_SCHEMA, &outcome.pairs).into_bytes(),
        &sidecar,
    )?;
    Ok(json!({ "command": "mine-dpo", "out": out, "counts": counts }))
}

pub fn grpo_batch(cfg: &RunConfig, tasks_path: &Path, out: &Path) -> Result<Value, CliError> {
    let tasks = read_tasks(tasks_path)?;
    let (candidates, mut failures) = draw(cfg, &tasks, cfg.group_size, &[GRPO_SALT]);
    let sandbox = executor(cfg);
    let BatchOutcome {
        samples,
        failures: exec_failures,
    } = verify_batch(&sandbox, &tasks, &candidates, &verify_config(cfg)).map_err(sandbox_error)?;
    failures.extend(exec_failures);

    let mut groups = Vec::new();
    let mut skipped = 0usize;
    for group in group_by_prompt(&samples) {
        let completions = group.iter().map(|s| s.completion.clone()).collect();
        let rewards = group.iter().map(|s| s.rewards.total).collect();
        match GrpoGroup::new(&group[0].prompt_id, completions, rewards) {
            Ok(g) => groups.push(g),
            Err(_) => skipped += 1,
        }
    }
    let counts = json!({
        "tasks": tasks.len(),
        "groups": groups.len(),
        "rollouts": samples.len(),
        "skipped_groups": skipped,
        "failures": failures.len(),
    });
    let mut sidecar = Sidecar::new("grpo-batch", cfg, counts.clone()).input("tasks", tasks_path)?;
    sidecar.failures = failures.clone();
    sidecar.details = Some(json!({
        "generator_id": cfg.generator.build().id(),
        "executor_id": sandbox.id(),
        "group_size": cfg.group_size,
        "grpo": cfg.grpo,
    }));
    write_with_sidecar(
        out,
        io::to_jsonl(GRPO_SCHEMA, &groups).into_bytes(),
        &sidecar,
    )?;
    finish(
        json!({ "command": "grpo-batch", "out": out, "counts": counts }),
        &failures,
    )
}

pub fn eval(cfg: &RunConfig, bench: &Path, out: &Path) -> Result<Value, CliError> {
    let tasks: Vec<BenchTask> = io::read_jsonl(bench, BENCH_SCHEMA).map_err(bad_input)?;
    let eval_cfg = EvalConfig {
        n: cfg.eval.n,
        ks: cfg.eval.ks.clone(),
        seed: cfg.seed,
        temperature: cfg.sampling.temperature,
        top_p: cfg.sampling.top_p,
        max_tokens: cfg.sampling.max_tokens,
        timeout_ms: cfg.exec_timeout_ms,
        pool_size: cfg.pool_size,
        bootstrap_resamples: cfg.eval.bootstrap_resamples,
    };
    let generator = cfg.generator.build();
    let sandbox = executor(cfg);
    let report = run_benchmark(&tasks, generator.as_ref(), &sandbox, &eval_cfg, &cfg.hash())
        .map_err(|e| CliError::config(e.to_string()))?;
    let flagged = report
        .records
        .iter()
        .filter(|r| !r.flags.is_empty())
        .count();
    let counts = json!({ "tasks": report.records.len(), "flagged_tasks": flagged });
    let sidecar = Sidecar::new("eval", cfg, counts.clone()).input("bench", bench)?;
    write_with_sidecar(out, io::to_json_pretty(&report).into_bytes(), &sidecar)?;
    let scores: BTreeMap<String, f64> = report
        .pass_at_k
        .iter()
        .map(|s| (format!("pass@{}", s.k), s.mean))
        .collect();
    Ok(json!({ "command": "eval", "out": out, "counts": counts, "pass_at_k": scores }))
}

fn merge_error(e: MergeError) -> CliError {
    match e {
        MergeError::Io(_) => CliError::infra(e.to_string()),
        _ => CliError::config(e.to_string()),
    }
}

pub fn merge(cfg: &RunConfig, a: &Path, b: &Path, out: &Path) -> Result<Value, CliError> {
    let read = |p: &Path| {
        TensorFile::read(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
    };
    let (fa, fb) = (read(a)?, read(b)?);
    let outcome = slerp_merge(&fa, &fb, &cfg.merge).map_err(merge_error)?;
    let linear = outcome
        .info
        .iter()
        .filter(|i| i.method != qvf_core::merge::Interpolation::Spherical)
        .count();
    let counts = json!({ "tensors": outcome.info.len(), "linear_fallbacks": linear });
    let mut sidecar = Sidecar::new("merge", cfg, counts.clone())
        .input("a", a)?
        .input("b", b)?;
    sidecar.details = Some(json!({ "t": cfg.merge.t, "tensors": outcome.info }));
    write_with_sidecar(out, outcome.file.to_bytes(), &sidecar)?;
    Ok(json!({ "command": "merge", "out": out, "counts": counts }))
}

pub fn make_bench(cfg: &RunConfig, tasks_path: &Path, out: &Path) -> Result<Value, CliError> {
    let tasks = read_tasks(tasks_path)?;
    let bench: Vec<BenchTask> = tasks.iter().map(BenchTask::from).collect();
    let counts = json!({ "tasks": bench.len() });
    let sidecar = Sidecar::new("make-bench", cfg, counts.clone()).input("tasks", tasks_path)?;
    write_with_sidecar(
        out,
        io::to_jsonl(BENCH_SCHEMA, &bench).into_bytes(),
        &sidecar,
    )?;
    Ok(json!({ "command": "make-bench", "out": out, "counts": counts }))
}
