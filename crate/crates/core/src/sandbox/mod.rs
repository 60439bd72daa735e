//! Execution orchestration: routes candidate programs to an executor, turns
//! the per-test outcomes into rewards, and persists the accepted (bucket A)
//! and rejected (bucket B) samples.

mod inproc;
mod protocol;
mod worker;

pub use inproc::InProcessExecutor;
pub use protocol::{ExecRequest, ExecResponse, ExecStatus, TestCase, EXEC_SCHEMA};
pub use worker::{WorkerCommand, WorkerPool};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{Candidate, MutationOp};
use crate::io::{self, IoError};
use crate::qlang::{Dialect, QLANG_VERSION};
use crate::rng::PRNG_ALGORITHM;
use crate::synth::Task;
use crate::verify::{
    format_reward_with, quantum_reward, total_reward, FormatScoring, RewardBreakdown,
    RewardWeights, TestResult, ASSERT_SCHEMA,
};

pub const SAMPLE_SCHEMA: &str = "sample/1";
pub const RUN_SCHEMA: &str = "run/1";
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandboxError {
    #[error("no executor configured for dialect {0:?}")]
    Unroutable(Dialect),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("worker unavailable: {0}")]
    WorkerUnavailable(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub trait Executor: Send + Sync {
    fn id(&self) -> String;
    fn execute(&self, req: &ExecRequest) -> Result<ExecResponse, SandboxError>;
}

/// Routes qlang to the built-in executor and everything else to an external
/// worker pool, if one is configured.
pub struct Sandbox {
    builtin: InProcessExecutor,
    external: Option<WorkerPool>,
}

impl Sandbox {
    pub fn builtin() -> Self {
        Self {
            builtin: InProcessExecutor,
            external: None,
        }
    }

    pub fn with_worker(pool: WorkerPool) -> Self {
        Self {
            builtin: InProcessExecutor,
            external: Some(pool),
        }
    }
}

impl Default for Sandbox {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Executor for Sandbox {
    fn id(&self) -> String {
        match &self.external {
            None => self.builtin.id(),
            Some(p) => format!("{}+{}", self.builtin.id(), p.id()),
        }
    }

    fn execute(&self, req: &ExecRequest) -> Result<ExecResponse, SandboxError> {
        match (req.dialect, &self.external) {
            (Dialect::Qlang, _) => self.builtin.execute(req),
            (_, Some(pool)) => pool.execute(req),
            (d, None) => Err(SandboxError::Unroutable(d)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bucket {
    A,
    B,
}

/// One executed candidate with its rewards (`sample/1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedSample {
    pub prompt_id: String,
    pub candidate_id: String,
    pub candidate_index: usize,
    pub prompt: String,
    pub completion: String,
    pub program: String,
    pub dialect: Dialect,
    pub status: ExecStatus,
    pub tests: Vec<TestResult>,
    pub tests_passed: usize,
    pub tests_total: usize,
    pub rewards: RewardBreakdown,
    pub generator_id: String,
    pub seed: u64,
    #[serde(default)]
    pub mutations: Vec<MutationOp>,
    pub bucket: Bucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub pool_size: usize,
    pub timeout_ms: u64,
    pub weights: RewardWeights,
    pub format_scoring: FormatScoring,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            pool_size: 4,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            weights: RewardWeights::default(),
            format_scoring: FormatScoring::default(),
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.pool_size == 0 {
            return Err(SandboxError::Config("pool_size must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(SandboxError::Config("timeout_ms must be positive".into()));
        }
        self.weights
            .validate()
            .map_err(|e| SandboxError::Config(e.to_string()))
    }
}

/// A candidate that could not be executed normally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub task_id: String,
    pub candidate_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub samples: Vec<VerifiedSample>,
    pub failures: Vec<FailureRecord>,
}

pub fn request_for(task: &Task, id: &str, program: &str, timeout_ms: u64) -> ExecRequest {
    ExecRequest {
        id: id.to_string(),
        dialect: task.dialect,
        program: program.to_string(),
        tests: task
            .assertions
            .iter()
            .cloned()
            .map(TestCase::from)
            .collect(),
        timeout_ms,
    }
}

fn score(task: &Task, cand: &Candidate, resp: ExecResponse, cfg: &VerifyConfig) -> VerifiedSample {
    let r_quantum = quantum_reward(&resp.report()).unwrap_or(0.0);
    let r_format = format_reward_with(&cand.record.completion, cfg.format_scoring);
    let rewards = total_reward(r_quantum, r_format, &cfg.weights).expect("weights validated");
    VerifiedSample {
        prompt_id: task.task_id.clone(),
        candidate_id: cand.record.candidate_id.clone(),
        candidate_index: cand.record.index,
        prompt: task.prompt.clone(),
        completion: cand.record.completion.clone(),
        program: cand.source().to_string(),
        dialect: task.dialect,
        status: resp.status,
        tests_passed: resp.tests.iter().filter(|t| t.passed).count(),
        tests_total: resp.tests.len(),
        tests: resp.tests,
        rewards,
        generator_id: cand.record.generator_id.clone(),
        seed: cand.record.seed,
        mutations: cand.record.mutations.clone(),
        bucket: if r_quantum == 1.0 {
            Bucket::A
        } else {
            Bucket::B
        },
    }
}

fn verify_one(
    executor: &dyn Executor,
    task: &Task,
    cand: &Candidate,
    cfg: &VerifyConfig,
) -> (VerifiedSample, Option<FailureRecord>) {
    let req = request_for(
        task,
        &cand.record.candidate_id,
        cand.source(),
        cfg.timeout_ms,
    );
    if cand.extraction.is_none() {
        let reason = cand.defect.clone().unwrap_or_else(|| "no program".into());
        return (
            score(
                task,
                cand,
                ExecResponse::failed(&req, ExecStatus::Error, &reason, 0),
                cfg,
            ),
            None,
        );
    }
    match executor.execute(&req) {
        Ok(resp) => (score(task, cand, resp, cfg), None),
        Err(e) => {
            let reason = format!("infrastructure error: {e}");
            let resp = ExecResponse::failed(&req, ExecStatus::Error, &reason, 0);
            let failure = FailureRecord {
                task_id: task.task_id.clone(),
                candidate_id: cand.record.candidate_id.clone(),
                error: e.to_string(),
            };
            (score(task, cand, resp, cfg), Some(failure))
        }
    }
}

/// Execute every candidate against its task's tests with at most
/// `pool_size` requests in flight. Output order is (task order, candidate
/// index) regardless of completion order. Candidates whose task is unknown
/// produce no sample and are listed as failures.
pub fn verify_batch(
    executor: &dyn Executor,
    tasks: &[Task],
    candidates: &[Candidate],
    cfg: &VerifyConfig,
) -> Result<BatchOutcome, SandboxError> {
    cfg.validate()?;
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, t) in tasks.iter().enumerate() {
        position.entry(t.task_id.as_str()).or_insert(i);
    }
    let mut failures = Vec::new();
    let mut jobs: Vec<(usize, &Candidate)> = Vec::with_capacity(candidates.len());
    for c in candidates {
        match position.get(c.record.task_id.as_str()) {
            Some(&i) => jobs.push((i, c)),
            None => failures.push(FailureRecord {
                task_id: c.record.task_id.clone(),
                candidate_id: c.record.candidate_id.clone(),
                error: "candidate refers to an unknown task".into(),
            }),
        }
    }
    jobs.sort_by_key(|(task, cand)| (*task, cand.record.index));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.pool_size)
        .build()
        .map_err(|e| SandboxError::Config(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, c)| verify_one(executor, &tasks[i], c, cfg))
            .collect()
    });

    let mut samples = Vec::with_capacity(results.len());
    for (s, f) in results {
        samples.push(s);
        failures.extend(f);
    }
    Ok(BatchOutcome { samples, failures })
}

/// Re-run a stored sample's program against its task and return r_quantum.
pub fn reverify(
    executor: &dyn Executor,
    task: &Task,
    sample: &VerifiedSample,
    timeout_ms: u64,
) -> Result<f64, SandboxError> {
    let req = request_for(task, &sample.candidate_id, &sample.program, timeout_ms);
    let resp = executor.execute(&req)?;
    Ok(quantum_reward(&resp.report()).unwrap_or(0.0))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub samples: usize,
    pub bucket_a: usize,
    pub bucket_b: usize,
    pub status_ok: usize,
    pub status_error: usize,
    pub status_timeout: usize,
    pub failures: usize,
}

impl RunCounts {
    pub fn tally(samples: &[VerifiedSample], failures: usize) -> Self {
        let mut c = RunCounts {
            samples: samples.len(),
            failures,
            ..Default::default()
        };
        for s in samples {
            match s.bucket {
                Bucket::A => c.bucket_a += 1,
                Bucket::B => c.bucket_b += 1,
            }
            match s.status {
                ExecStatus::Ok => c.status_ok += 1,
                ExecStatus::Error => c.status_error += 1,
                ExecStatus::Timeout => c.status_timeout += 1,
            }
        }
        c
    }
}

/// Everything about a verification run except its timing, so reruns of the
/// same configuration produce identical bytes. Timing goes to `timing.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub config_hash: String,
    pub prng_algorithm: String,
    pub seeds: BTreeMap<String, u64>,
    pub counts: RunCounts,
    pub executor_id: String,
    pub template_versions: Vec<String>,
    pub failures: Vec<FailureRecord>,
}

impl RunManifest {
    pub fn new(
        config_hash: &str,
        seeds: BTreeMap<String, u64>,
        executor_id: &str,
        tasks: &[Task],
        outcome: &BatchOutcome,
    ) -> Self {
        RunManifest {
            schema: RUN_SCHEMA.to_string(),
            config_hash: config_hash.to_string(),
            prng_algorithm: PRNG_ALGORITHM.to_string(),
            seeds,
            counts: RunCounts::tally(&outcome.samples, outcome.failures.len()),
            executor_id: executor_id.to_string(),
            template_versions: template_versions(tasks),
            failures: outcome.failures.clone(),
        }
    }
}

/// Sorted template ids seen in `tasks`, plus the DSL and assertion schema
/// versions they were written against.
pub fn template_versions(tasks: &[Task]) -> Vec<String> {
    let mut v: BTreeSet<String> = tasks.iter().map(|t| t.template_id.clone()).collect();
    v.insert(QLANG_VERSION.to_string());
    v.insert(ASSERT_SCHEMA.to_string());
    v.into_iter().collect()
}

pub const BUCKET_A_FILE: &str = "bucket_a.jsonl";
pub const BUCKET_B_FILE: &str = "bucket_b.jsonl";
pub const MANIFEST_FILE: &str = "run.json";
pub const TIMING_FILE: &str = "timing.json";

/// Write both buckets and the manifest together (all or nothing), then the
/// timing side file.
pub fn write_buckets(
    dir: &Path,
    samples: &[VerifiedSample],
    manifest: &RunManifest,
    wall_time: Duration,
) -> Result<(), IoError> {
    let (a, b): (Vec<&VerifiedSample>, Vec<&VerifiedSample>) =
        samples.iter().partition(|s| s.bucket == Bucket::A);
    io::write_all_atomic(&[
        (
            dir.join(BUCKET_A_FILE),
            io::to_jsonl(SAMPLE_SCHEMA, &a).into_bytes(),
        ),
        (
            dir.join(BUCKET_B_FILE),
            io::to_jsonl(SAMPLE_SCHEMA, &b).into_bytes(),
        ),
        (
            dir.join(MANIFEST_FILE),
            io::to_json_pretty(manifest).into_bytes(),
        ),
    ])?;
    let timing =
        serde_json::json!({ "schema": "timing/1", "wall_time_s": wall_time.as_secs_f64() });
    io::write_atomic(
        &dir.join(TIMING_FILE),
        io::to_json_pretty(&timing).as_bytes(),
    )
}

/// Read `bucket_a.jsonl` and `bucket_b.jsonl` from a run directory.
pub fn read_buckets(dir: &Path) -> Result<Vec<VerifiedSample>, IoError> {
    let mut all = io::read_jsonl(&dir.join(BUCKET_A_FILE), SAMPLE_SCHEMA)?;
    all.extend(io::read_jsonl::<VerifiedSample>(
        &dir.join(BUCKET_B_FILE),
        SAMPLE_SCHEMA,
    )?);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{GenerationRequest, GenerationTarget, Generator, MockGenerator};
    use crate::synth::{builtin_families, generate_dataset};

    fn setup(count: usize, n: usize, rate: f64) -> (Vec<Task>, Vec<Candidate>) {
        let tasks = generate_dataset(&builtin_families(), count, 5).unwrap();
        let g = MockGenerator::new(rate);
        let cands = tasks
            .iter()
            .flat_map(|t| {
                let req = GenerationRequest {
                    prompt: t.prompt.clone(),
                    n,
                    temperature: 1.0,
                    max_tokens: 2048,
                    seed: 11,
                };
                g.generate(&GenerationTarget::from(t), &req).unwrap()
            })
            .collect();
        (tasks, cands)
    }

    #[test]
    fn bucket_invariant_and_counts() {
        let (tasks, cands) = setup(10, 4, 0.5);
        let out = verify_batch(
            &Sandbox::builtin(),
            &tasks,
            &cands,
            &VerifyConfig::default(),
        )
        .unwrap();
        assert_eq!(out.samples.len(), 40);
        assert!(out.failures.is_empty());
        for s in &out.samples {
            assert_eq!(s.bucket == Bucket::A, s.rewards.r_quantum == 1.0);
            assert_eq!(s.tests_total, s.tests.len());
        }
        let a = out.samples.iter().filter(|s| s.bucket == Bucket::A).count();
        assert!(a > 0 && a < 40);
    }

    #[test]
    fn order_is_task_then_index() {
        let (tasks, mut cands) = setup(5, 3, 0.5);
        cands.reverse();
        let out = verify_batch(
            &Sandbox::builtin(),
            &tasks,
            &cands,
            &VerifyConfig::default(),
        )
        .unwrap();
        let keys: Vec<(String, usize)> = out
            .samples
            .iter()
            .map(|s| (s.prompt_id.clone(), s.candidate_index))
            .collect();
        let expected: Vec<(String, usize)> = tasks
            .iter()
            .flat_map(|t| (0..3).map(move |i| (t.task_id.clone(), i)))
            .collect();
        assert_eq!(keys, expected);
    }

    #[test]
    fn rename_mutants_all_rejected() {
        let tasks = generate_dataset(&builtin_families(), 8, 1).unwrap();
        let g = MockGenerator::with_operators(1.0, vec![MutationOp::RenameBinding]);
        let cands: Vec<Candidate> = tasks
            .iter()
            .flat_map(|t| {
                let req = GenerationRequest {
                    prompt: String::new(),
                    n: 4,
                    temperature: 1.0,
                    max_tokens: 1,
                    seed: 2,
                };
                g.generate(&t.into(), &req).unwrap()
            })
            .collect();
        let out = verify_batch(
            &Sandbox::builtin(),
            &tasks,
            &cands,
            &VerifyConfig::default(),
        )
        .unwrap();
        assert!(out.samples.iter().all(|s| s.bucket == Bucket::B));
    }

    #[test]
    fn orphans_and_unroutable_are_failures() {
        let (tasks, mut cands) = setup(2, 2, 0.0);
        cands[0].record.task_id = "missing".into();
        let out = verify_batch(
            &Sandbox::builtin(),
            &tasks,
            &cands,
            &VerifyConfig::default(),
        )
        .unwrap();
        assert_eq!(out.samples.len(), 3);
        assert_eq!(out.failures.len(), 1);

        let mut foreign = tasks.clone();
        foreign[0].dialect = Dialect::Pyqiskit;
        let (_, cands) = setup(2, 2, 0.0);
        let out = verify_batch(
            &Sandbox::builtin(),
            &foreign,
            &cands,
            &VerifyConfig::default(),
        )
        .unwrap();
        assert_eq!(out.failures.len(), 2);
        assert!(out.samples[..2]
            .iter()
            .all(|s| s.status == ExecStatus::Error && s.rewards.r_quantum == 0.0));
    }

    #[test]
    fn zero_pool_rejected() {
        let cfg = VerifyConfig {
            pool_size: 0,
            ..Default::default()
        };
        assert!(verify_batch(&Sandbox::builtin(), &[], &[], &cfg).is_err());
    }

    #[test]
    fn buckets_round_trip_and_empty_run() {
        let dir = tempfile::tempdir().unwrap();
        let empty = BatchOutcome {
            samples: vec![],
            failures: vec![],
        };
        let m = RunManifest::new("h", BTreeMap::new(), "x", &[], &empty);
        write_buckets(dir.path(), &[], &m, Duration::ZERO).unwrap();
        assert_eq!(std::fs::read(dir.path().join(BUCKET_A_FILE)).unwrap(), b"");
        assert_eq!(m.counts, RunCounts::default());

        let (tasks, cands) = setup(4, 3, 0.5);
        let sb = Sandbox::builtin();
        let out = verify_batch(&sb, &tasks, &cands, &VerifyConfig::default()).unwrap();
        let m = RunManifest::new(
            "h",
            BTreeMap::from([("generate".into(), 5)]),
            &sb.id(),
            &tasks,
            &out,
        );
        write_buckets(dir.path(), &out.samples, &m, Duration::from_millis(5)).unwrap();
        let back = read_buckets(dir.path()).unwrap();
        assert_eq!(back.len(), out.samples.len());
        let by_id: HashMap<&str, &Task> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
        for s in &back {
            let r = reverify(&sb, by_id[s.prompt_id.as_str()], s, 10_000).unwrap();
            assert_eq!(r == 1.0, s.bucket == Bucket::A);
        }
    }
}
