//! Candidate solutions: a seeded mutation-based stand-in for a model, a
//! client for an external generation service (`gen/1`), and parsing of raw
//! completions into programs.

mod extract;
mod http;
mod mutate;

pub use extract::{extract_program, extract_source, format_completion, Extracted};
pub use http::{GenRequestBody, GenResponseBody, HttpGenerator};
pub use mutate::{MutationOp, MutationPlan};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::HttpError;
use crate::qlang::{Dialect, ParseError, Program};
use crate::rng::{derive_seed, fnv1a, Prng};
use crate::synth::Task;

pub const CANDIDATE_SCHEMA: &str = "cand/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CandidateError {
    #[error("no program source left after extraction")]
    EmptySource,
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("server returned {got} completions, {expected} requested")]
    Truncated { expected: usize, got: usize },
    #[error("mock generation needs a reference solution for task `{0}`")]
    NoReference(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), CandidateError> {
        if self.n == 0 {
            return Err(CandidateError::InvalidRequest(
                "n must be at least 1".into(),
            ));
        }
        if !(self.temperature >= 0.0) {
            return Err(CandidateError::InvalidRequest(
                "temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// What a generator needs to know about a task.
#[derive(Debug, Clone)]
pub struct GenerationTarget {
    pub task_id: String,
    pub prompt: String,
    pub dialect: Dialect,
    pub reference: Option<Program>,
}

impl From<&Task> for GenerationTarget {
    fn from(t: &Task) -> Self {
        GenerationTarget {
            task_id: t.task_id.clone(),
            prompt: t.prompt.clone(),
            dialect: t.dialect,
            reference: Some(t.reference.clone()),
        }
    }
}

/// Serialized form of a candidate (`cand/1`). The program is re-extracted
/// from the completion when loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub task_id: String,
    pub candidate_id: String,
    pub index: usize,
    pub completion: String,
    pub generator_id: String,
    pub seed: u64,
    #[serde(default)]
    pub mutations: Vec<MutationOp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub record: CandidateRecord,
    pub dialect: Dialect,
    /// `None` when the completion yielded no usable program.
    pub program: Option<Program>,
    pub extraction: Option<Extracted>,
    /// Why extraction or parsing failed.
    pub defect: Option<String>,
}

impl Candidate {
    pub fn from_record(record: CandidateRecord, dialect: Dialect) -> Self {
        let (program, extraction, defect) = match extract_source(&record.completion) {
            Err(e) => (None, None, Some(e.to_string())),
            Ok(ex) => match Program::new(dialect, &ex.source) {
                Ok(p) => (Some(p), Some(ex), None),
                Err(e) => (None, Some(ex), Some(CandidateError::from(e).to_string())),
            },
        };
        Candidate {
            record,
            dialect,
            program,
            extraction,
            defect,
        }
    }

    pub fn unparseable(&self) -> bool {
        self.program.is_none()
    }

    pub fn is_mutated(&self) -> bool {
        !self.record.mutations.is_empty()
    }

    /// Source to hand to the sandbox: the parsed program, or whatever text
    /// extraction produced so the executor reports the failure itself.
    pub fn source(&self) -> &str {
        match (&self.program, &self.extraction) {
            (Some(p), _) => &p.source,
            (None, Some(ex)) => &ex.source,
            (None, None) => "",
        }
    }
}

pub fn candidate_id(task_id: &str, index: usize) -> String {
    format!("{task_id}/c{index:03}")
}

pub trait Generator: Send + Sync {
    fn id(&self) -> String;
    fn generate(
        &self,
        target: &GenerationTarget,
        req: &GenerationRequest,
    ) -> Result<Vec<Candidate>, CandidateError>;
}

/// Reference solution, wrapped in the reasoning-then-code layout and mutated
/// with probability `mutation_rate`.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub mutation_rate: f64,
    pub operators: Vec<MutationOp>,
}

impl MockGenerator {
    pub fn new(mutation_rate: f64) -> Self {
        Self {
            mutation_rate,
            operators: MutationOp::ALL.to_vec(),
        }
    }

    pub fn with_operators(mutation_rate: f64, operators: Vec<MutationOp>) -> Self {
        Self {
            mutation_rate,
            operators,
        }
    }
}

fn reasoning_for(prompt: &str) -> String {
    let first = prompt
        .split(". ")
        .next()
        .unwrap_or(prompt)
        .trim_end_matches('.');
    format!(
        "The request starts with: {first}.\nI will build each requested object in order and bind it under the name the prompt asks for."
    )
}

impl Generator for MockGenerator {
    fn id(&self) -> String {
        format!("mock-mutation/1(rate={})", self.mutation_rate)
    }

    fn generate(
        &self,
        target: &GenerationTarget,
        req: &GenerationRequest,
    ) -> Result<Vec<Candidate>, CandidateError> {
        req.validate()?;
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(CandidateError::InvalidRequest(
                "mutation_rate must lie in [0, 1]".into(),
            ));
        }
        let reference = target
            .reference
            .as_ref()
            .ok_or_else(|| CandidateError::NoReference(target.task_id.clone()))?;
        let reasoning = reasoning_for(&target.prompt);
        let task_salt = fnv1a(target.task_id.as_bytes());
        let generator_id = self.id();

        Ok((0..req.n)
            .map(|i| {
                let seed = derive_seed(req.seed, &[task_salt, i as u64]);
                let mut rng = Prng::new(seed);
                let (source, mutations) =
                    if reference.dialect == Dialect::Qlang && rng.bernoulli(self.mutation_rate) {
                        let mut stmts = reference.statements.clone();
                        let applied = MutationPlan::draw(&self.operators, &stmts, &mut rng)
                            .map(|plan| plan.apply(&mut stmts))
                            .unwrap_or_default();
                        (Program::from_statements(stmts).source, applied)
                    } else {
                        (reference.source.clone(), Vec::new())
                    };
                let record = CandidateRecord {
                    task_id: target.task_id.clone(),
                    candidate_id: candidate_id(&target.task_id, i),
                    index: i,
                    completion: format_completion(&reasoning, &source, reference.dialect),
                    generator_id: generator_id.clone(),
                    seed,
                    mutations,
                };
                Candidate::from_record(record, target.dialect)
            })
            .collect())
    }
}

/// Run many generation jobs with at most `max_in_flight` running at once.
/// Results come back in job order.
pub fn generate_all(
    generator: &dyn Generator,
    jobs: &[(GenerationTarget, GenerationRequest)],
    max_in_flight: usize,
) -> Vec<Result<Vec<Candidate>, CandidateError>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .map(|(t, r)| generator.generate(t, r))
            .collect()
    })
}
