//! Run configuration: a JSON file whose values command-line flags override.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use qvf_core::align::{
    DpoConfig, Embedder, GrpoConfig, HttpEmbedder, TrigramEmbedder, DEFAULT_N_PER_PROMPT,
};
use qvf_core::candidates::{Generator, HttpGenerator, MockGenerator, MutationOp};
use qvf_core::merge::MergeConfig;
use qvf_core::sandbox::{WorkerCommand, DEFAULT_TIMEOUT_MS};
use qvf_core::synth::{builtin_families, TemplateFamily};
use qvf_core::verify::{FormatScoring, RewardWeights};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub mutation_rate: f64,
    /// Mutation operators the mock may use; all of them when absent.
    pub operators: Option<Vec<MutationOp>>,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Mock,
            mutation_rate: 0.5,
            operators: None,
            endpoint: None,
            timeout_ms: 60_000,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

impl GeneratorSpec {
    pub fn build(&self) -> Box<dyn Generator> {
        match self.kind {
            GeneratorKind::Mock => {
                let ops = self
                    .operators
                    .clone()
                    .unwrap_or_else(|| MutationOp::ALL.to_vec());
                Box::new(MockGenerator::with_operators(self.mutation_rate, ops))
            }
            GeneratorKind::Http => Box::new(HttpGenerator::new(
                self.endpoint.as_deref().expect("validated"),
                Duration::from_millis(self.timeout_ms),
                self.retries,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Trigram,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Trigram,
            endpoint: None,
            timeout_ms: 30_000,
            retries: 2,
        }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Box<dyn Embedder> {
        match self.kind {
            EmbedderKind::Trigram => Box::new(TrigramEmbedder),
            EmbedderKind::Http => Box::new(HttpEmbedder::new(
                self.endpoint.as_deref().expect("validated"),
                Duration::from_millis(self.timeout_ms),
                self.retries,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n: usize,
    pub ks: Vec<usize>,
    pub bootstrap_resamples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n: 16,
            ks: vec![1, 4, 8],
            bootstrap_resamples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub count: usize,
    /// Template ids or short names (`t1`..`t4`); empty means all.
    pub families: Vec<String>,
    pub generator: GeneratorSpec,
    pub n_per_prompt: usize,
    pub sampling: Sampling,
    pub weights: RewardWeights,
    pub format_scoring: FormatScoring,
    pub pool_size: usize,
    pub exec_timeout_ms: u64,
    pub worker: Option<WorkerCommand>,
    pub embedder: EmbedderSpec,
    pub dpo: DpoConfig,
    pub grpo: GrpoConfig,
    pub group_size: usize,
    pub eval: EvalSection,
    pub merge: MergeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 200,
            families: Vec::new(),
            generator: GeneratorSpec::default(),
            n_per_prompt: DEFAULT_N_PER_PROMPT,
            sampling: Sampling::default(),
            weights: RewardWeights::default(),
            format_scoring: FormatScoring::default(),
            pool_size: 4,
            exec_timeout_ms: DEFAULT_TIMEOUT_MS,
            worker: None,
            embedder: EmbedderSpec::default(),
            dpo: DpoConfig::default(),
            grpo: GrpoConfig::default(),
            group_size: 32,
            eval: EvalSection::default(),
            merge: MergeConfig::new(0.5),
        }
    }
}

/// Keys that change how fast a run goes but never what it writes.
const EXECUTION_ONLY: [&str; 2] = ["pool_size", "max_in_flight"];

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::config(m.to_string()));
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if self.n_per_prompt == 0 {
            return bad("n_per_prompt must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.generator.mutation_rate) {
            return bad("generator.mutation_rate must lie in [0, 1]");
        }
        if self.generator.kind == GeneratorKind::Http && self.generator.endpoint.is_none() {
            return bad("generator.endpoint is required for the http generator");
        }
        if self.generator.max_in_flight == 0 || self.generator.timeout_ms == 0 {
            return bad("generator.max_in_flight and generator.timeout_ms must be positive");
        }
        if self.generator.operators.as_ref().is_some_and(Vec::is_empty) {
            return bad("generator.operators must not be empty");
        }
        if self.embedder.kind == EmbedderKind::Http && self.embedder.endpoint.is_none() {
            return bad("embedder.endpoint is required for the http embedder");
        }
        if !(self.sampling.temperature >= 0.0)
            || !(self.sampling.top_p > 0.0 && self.sampling.top_p <= 1.0)
        {
            return bad("sampling.temperature must be >= 0 and sampling.top_p in (0, 1]");
        }
        if self.pool_size == 0 {
            return bad("pool_size must be at least 1");
        }
        if self.exec_timeout_ms == 0 {
            return bad("exec_timeout_ms must be positive");
        }
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if self.eval.n == 0
            || self.eval.ks.is_empty()
            || self.eval.ks.iter().any(|&k| k == 0 || k > self.eval.n)
        {
            return bad("eval.ks must be non-empty with every k in 1..=eval.n");
        }
        self.weights
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.dpo
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.grpo
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.merge
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.template_families()?;
        Ok(())
    }

    pub fn template_families(&self) -> Result<Vec<TemplateFamily>, CliError> {
        let all = builtin_families();
        if self.families.is_empty() {
            return Ok(all);
        }
        self.families
            .iter()
            .map(|name| {
                all.iter()
                    .find(|f| f.template_id == name || f.short_name() == name)
                    .cloned()
                    .ok_or_else(|| CliError::config(format!("unknown template family `{name}`")))
            })
            .collect()
    }

    /// Hash of everything that can influence output bytes.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        strip_keys(&mut v);
        qvf_core::io::config_hash(&v)
    }
}

fn strip_keys(v: &mut serde_json::Value) {
    if let Some(obj) = v.as_object_mut() {
        for k in EXECUTION_ONLY {
            obj.remove(k);
        }
        obj.values_mut().for_each(strip_keys);
    }
}
