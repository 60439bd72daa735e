//! pass@k estimation and a benchmark runner over `bench/1` task files.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{GenerationRequest, GenerationTarget, Generator};
use crate::qlang::{Dialect, Program};
use crate::rng::{derive_seed, Prng, PRNG_ALGORITHM};
use crate::sandbox::{ExecRequest, Executor, TestCase, DEFAULT_TIMEOUT_MS};
use crate::synth::Task;
use crate::verify::quantum_reward;

pub const BENCH_SCHEMA: &str = "bench/1";
pub const REPORT_SCHEMA: &str = "report/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("k = {k} must lie in 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("c = {c} exceeds n = {n}")]
    CountExceedsN { c: usize, n: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("benchmark task `{task_id}`: {reason}")]
    BadTask { task_id: String, reason: String },
}

/// Unbiased pass@k: `1 - C(n-c, k) / C(n, k)`, evaluated as a running
/// product so nothing overflows.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, EvalError> {
    if k == 0 || k > n {
        return Err(EvalError::InvalidK { k, n });
    }
    if c > n {
        return Err(EvalError::CountExceedsN { c, n });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

/// One benchmark problem (`bench/1`). `reference` is optional and only
/// consumed by the mock generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTask {
    pub task_id: String,
    pub prompt: String,
    pub dialect: Dialect,
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl BenchTask {
    fn target(&self) -> Result<GenerationTarget, EvalError> {
        let reference = self
            .reference
            .as_deref()
            .map(|src| Program::new(self.dialect, src))
            .transpose()
            .map_err(|e| EvalError::BadTask {
                task_id: self.task_id.clone(),
                reason: format!("reference does not parse: {e}"),
            })?;
        Ok(GenerationTarget {
            task_id: self.task_id.clone(),
            prompt: self.prompt.clone(),
            dialect: self.dialect,
            reference,
        })
    }
}

impl From<&Task> for BenchTask {
    fn from(t: &Task) -> Self {
        BenchTask {
            task_id: t.task_id.clone(),
            prompt: t.prompt.clone(),
            dialect: t.dialect,
            tests: t.assertions.iter().cloned().map(TestCase::from).collect(),
            reference: Some(t.reference.source.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub timeout_ms: u64,
    pub pool_size: usize,
    pub bootstrap_resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n: 64,
            ks: vec![1, 5, 10],
            seed: 0,
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 2048,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            pool_size: 4,
            bootstrap_resamples: 1000,
        }
    }
}

impl EvalConfig {
    /// A single deterministic sample per task.
    pub fn greedy(seed: u64) -> Self {
        Self {
            n: 1,
            ks: vec![1],
            seed,
            temperature: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n == 0 {
            return Err(EvalError::Config("n must be at least 1".into()));
        }
        if self.ks.is_empty() {
            return Err(EvalError::Config("at least one k is required".into()));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.n) {
            return Err(EvalError::InvalidK { k, n: self.n });
        }
        if self.pool_size == 0 || self.timeout_ms == 0 {
            return Err(EvalError::Config(
                "pool_size and timeout_ms must be positive".into(),
            ));
        }
        if !(self.temperature >= 0.0) || !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(EvalError::Config(
                "temperature must be >= 0 and top_p in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub n: usize,
    pub c: usize,
    /// Generation or execution problems; affected candidates count as failing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub mean: f64,
    pub bootstrap_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    pub n: usize,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub config_hash: String,
    pub prng_algorithm: String,
    pub seed: u64,
    pub generator_id: String,
    pub executor_id: String,
    pub decoding: Decoding,
    pub bootstrap_resamples: usize,
    pub pass_at_k: Vec<KScore>,
    pub records: Vec<EvalRecord>,
}

fn evaluate_task(
    task: &BenchTask,
    index: usize,
    generator: &dyn Generator,
    executor: &dyn Executor,
    cfg: &EvalConfig,
) -> Result<EvalRecord, EvalError> {
    let target = task.target()?;
    let mut record = EvalRecord {
        task_id: task.task_id.clone(),
        n: cfg.n,
        c: 0,
        flags: Vec::new(),
    };
    let req = GenerationRequest {
        prompt: task.prompt.clone(),
        n: cfg.n,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        seed: derive_seed(cfg.seed, &[index as u64]),
    };
    let candidates = match generator.generate(&target, &req) {
        Ok(c) => c,
        Err(e) => {
            record.flags.push(format!("generation failed: {e}"));
            return Ok(record);
        }
    };
    for cand in candidates.iter().take(cfg.n) {
        if cand.extraction.is_none() {
            continue;
        }
        let exec = ExecRequest {
            id: cand.record.candidate_id.clone(),
            dialect: task.dialect,
            program: cand.source().to_string(),
            tests: task.tests.clone(),
            timeout_ms: cfg.timeout_ms,
        };
        match executor.execute(&exec) {
            Ok(resp) if quantum_reward(&resp.report()).unwrap_or(0.0) == 1.0 => record.c += 1,
            Ok(_) => {}
            Err(e) => record
                .flags
                .push(format!("{}: {e}", cand.record.candidate_id)),
        }
    }
    Ok(record)
}

fn mean_pass_at_k(records: &[&EvalRecord], k: usize) -> f64 {
    let total: f64 = records
        .iter()
        .map(|r| pass_at_k(r.n, r.c, k).expect("validated k"))
        .sum();
    total / records.len() as f64
}

/// Standard deviation of the mean pass@k over task-level bootstrap
/// resamples.
fn bootstrap_std(records: &[EvalRecord], k: usize, resamples: usize, seed: u64) -> f64 {
    if records.len() < 2 || resamples < 2 {
        return 0.0;
    }
    let mut rng = Prng::new(derive_seed(seed, &[k as u64, 0xB007]));
    let means: Vec<f64> = (0..resamples)
        .map(|_| {
            let pick: Vec<&EvalRecord> = (0..records.len())
                .map(|_| &records[rng.index(records.len())])
                .collect();
            mean_pass_at_k(&pick, k)
        })
        .collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / means.len() as f64).sqrt()
}

/// Draw `n` candidates per task, verify them, and report mean pass@k per k.
/// A candidate passes iff every test passes.
pub fn run_benchmark(
    tasks: &[BenchTask],
    generator: &dyn Generator,
    executor: &dyn Executor,
    cfg: &EvalConfig,
    config_hash: &str,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(EvalError::Config("benchmark has no tasks".into()));
    }
    if let Some(t) = tasks.iter().find(|t| t.tests.is_empty()) {
        return Err(EvalError::BadTask {
            task_id: t.task_id.clone(),
            reason: "no tests".into(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.pool_size)
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let records: Vec<EvalRecord> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| evaluate_task(t, i, generator, executor, cfg))
            .collect::<Result<_, _>>()
    })?;

    let all: Vec<&EvalRecord> = records.iter().collect();
    let mut ks = cfg.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let pass_at_k = ks
        .iter()
        .map(|&k| KScore {
            k,
            mean: mean_pass_at_k(&all, k),
            bootstrap_std: bootstrap_std(&records, k, cfg.bootstrap_resamples, cfg.seed),
        })
        .collect();
    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        config_hash: config_hash.to_string(),
        prng_algorithm: PRNG_ALGORITHM.to_string(),
        seed: cfg.seed,
        generator_id: generator.id(),
        executor_id: executor.id(),
        decoding: Decoding {
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            n: cfg.n,
            max_tokens: cfg.max_tokens,
        },
        bootstrap_resamples: cfg.bootstrap_resamples,
        pass_at_k,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{MockGenerator, MutationOp};
    use crate::sandbox::Sandbox;
    use crate::synth::{builtin_families, generate_dataset};
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(pass_at_k(5, 5, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(2, 1, 1).unwrap(), 0.5);
        assert!((pass_at_k(4, 2, 2).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(pass_at_k(10, 0, 3).unwrap(), 0.0);
        assert!(pass_at_k(3, 1, 4).is_err());
        assert!(pass_at_k(3, 4, 1).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
    }

    #[test]
    fn large_n_stays_finite() {
        let p = pass_at_k(10_000, 3, 500).unwrap();
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
        // C(n-c, k) / C(n, k) as a product over the k drawn slots.
        let ratio: f64 = (0..500)
            .map(|i| (10_000 - 3 - i) as f64 / (10_000 - i) as f64)
            .product();
        let closed = 1.0 - ratio;
        assert!((p - closed).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn monotone_in_k_and_c(n in 1usize..40, c_frac in 0.0f64..=1.0, k_frac in 0.0f64..=1.0) {
            let c = ((n as f64) * c_frac) as usize;
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let p = pass_at_k(n, c, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            if k < n {
                prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= p - 1e-15);
            }
            if c < n {
                prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= p - 1e-15);
            }
            prop_assert!((pass_at_k(n, c, 1).unwrap() - c as f64 / n as f64).abs() < 1e-12);
        }
    }

    fn bench(count: usize) -> Vec<BenchTask> {
        generate_dataset(&builtin_families(), count, 3)
            .unwrap()
            .iter()
            .map(BenchTask::from)
            .collect()
    }

    fn cfg(n: usize, ks: Vec<usize>) -> EvalConfig {
        EvalConfig {
            n,
            ks,
            seed: 9,
            bootstrap_resamples: 200,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_generator_scores_one() {
        let r = run_benchmark(
            &bench(6),
            &MockGenerator::new(0.0),
            &Sandbox::builtin(),
            &EvalConfig::greedy(1),
            "h",
        )
        .unwrap();
        assert_eq!(r.pass_at_k[0].mean, 1.0);
        assert_eq!(r.pass_at_k[0].bootstrap_std, 0.0);
        assert_eq!(r.decoding.temperature, 0.0);
    }

    #[test]
    fn breaking_mutants_score_zero() {
        let g = MockGenerator::with_operators(1.0, vec![MutationOp::RenameBinding]);
        let r =
            run_benchmark(&bench(6), &g, &Sandbox::builtin(), &cfg(4, vec![1, 4]), "h").unwrap();
        assert!(r.pass_at_k.iter().all(|s| s.mean == 0.0));
    }

    #[test]
    fn mixed_generator_is_monotone_and_deterministic() {
        let g = MockGenerator::new(0.5);
        let b = bench(10);
        let r = run_benchmark(&b, &g, &Sandbox::builtin(), &cfg(16, vec![8, 1, 4]), "h").unwrap();
        let means: Vec<f64> = r.pass_at_k.iter().map(|s| s.mean).collect();
        assert_eq!(
            r.pass_at_k.iter().map(|s| s.k).collect::<Vec<_>>(),
            vec![1, 4, 8]
        );
        assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
        assert!(r.pass_at_k[0].bootstrap_std > 0.0);
        let again =
            run_benchmark(&b, &g, &Sandbox::builtin(), &cfg(16, vec![8, 1, 4]), "h").unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn generator_failures_are_flagged() {
        let mut b = bench(2);
        b[0].reference = None;
        let r = run_benchmark(
            &b,
            &MockGenerator::new(0.0),
            &Sandbox::builtin(),
            &cfg(2, vec![1]),
            "h",
        )
        .unwrap();
        assert_eq!(r.records[0].c, 0);
        assert!(r.records[0].flags[0].contains("generation failed"));
        assert_eq!(r.records[1].c, 2);
    }

    #[test]
    fn config_validation() {
        let b = bench(1);
        let g = MockGenerator::new(0.0);
        assert!(run_benchmark(&b, &g, &Sandbox::builtin(), &cfg(2, vec![3]), "h").is_err());
        assert!(run_benchmark(&[], &g, &Sandbox::builtin(), &cfg(2, vec![1]), "h").is_err());
    }

    #[test]
    fn bench_record_round_trips() {
        let b = bench(2);
        let text = crate::io::to_jsonl(BENCH_SCHEMA, &b);
        let back: Vec<BenchTask> =
            crate::io::from_jsonl(&text, BENCH_SCHEMA, std::path::Path::new("m")).unwrap();
        assert_eq!(back, b);
    }
}
