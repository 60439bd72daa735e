//! Prompt engine and test engine: seeded template families that emit a
//! prompt, a reference qlang solution, and the assertions that check it.
//!
//! The four families are a representative reconstruction of the kinds of
//! tasks the pipeline targets (circuit construction, random circuits,
//! estimator jobs, sampler jobs); they are not a published inventory.

mod families;

pub use families::{builtin_families, FamilyKind, SlotSpec, TemplateFamily};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qlang::{interpret, Dialect, Program};
use crate::rng::derive_seed;
use crate::verify::{quantum_reward, run_assertions, Assertion};

pub const TASK_SCHEMA: &str = "task/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub prompt: String,
    pub reference: Program,
    pub assertions: Vec<Assertion>,
    pub dialect: Dialect,
    pub template_id: String,
    pub seed: u64,
    pub requires_runtime: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("template {template_id} seed {seed} is not self-consistent: {detail}")]
    SelfConsistency {
        template_id: String,
        seed: u64,
        detail: String,
    },
    #[error("template {template_id} left slot `{slot}` unfilled")]
    UnfilledSlot { template_id: String, slot: String },
    #[error("no template families given")]
    NoFamilies,
    #[error("count must be at least 1")]
    ZeroCount,
}

/// Check that the reference solution passes every one of its own tests.
pub fn self_check(task: &Task) -> Result<(), String> {
    let env = interpret(&task.reference).map_err(|e| e.to_string())?;
    let report = run_assertions(&env, &task.assertions);
    let reward = quantum_reward(&report).map_err(|e| e.to_string())?;
    if reward < 1.0 {
        let failed: Vec<String> = report
            .results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| format!("{}: {}", r.name, r.message))
            .collect();
        return Err(failed.join("; "));
    }
    Ok(())
}

/// Fill one family from a seed. The emitted task is verified against its own
/// reference before it is returned.
pub fn instantiate(family: &TemplateFamily, seed: u64) -> Result<Task, SynthError> {
    let draft = family.draw(seed)?;
    let task = Task {
        task_id: format!("{}-{seed:016x}", family.short_name()),
        prompt: draft.prompt,
        reference: Program::from_statements(draft.reference),
        assertions: draft.assertions,
        dialect: Dialect::Qlang,
        template_id: family.template_id.to_string(),
        seed,
        requires_runtime: family.requires_runtime,
    };
    self_check(&task).map_err(|detail| SynthError::SelfConsistency {
        template_id: family.template_id.to_string(),
        seed,
        detail,
    })?;
    Ok(task)
}

/// Smooth weighted round-robin order over the families for one full cycle.
fn schedule(families: &[TemplateFamily]) -> Vec<usize> {
    let total: i64 = families.iter().map(|f| f.weight as i64).sum();
    let mut current = vec![0i64; families.len()];
    let mut order = Vec::with_capacity(total as usize);
    for _ in 0..total {
        for (c, f) in current.iter_mut().zip(families) {
            *c += f.weight as i64;
        }
        let (best, _) = current
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        current[best] -= total;
        order.push(best);
    }
    order
}

/// Cycle through the families by weight, one derived seed per task.
pub fn generate_dataset(
    families: &[TemplateFamily],
    count: usize,
    seed: u64,
) -> Result<Vec<Task>, SynthError> {
    if families.is_empty() || families.iter().all(|f| f.weight == 0) {
        return Err(SynthError::NoFamilies);
    }
    if count == 0 {
        return Err(SynthError::ZeroCount);
    }
    let order = schedule(families);
    (0..count)
        .map(|i| {
            let family = &families[order[i % order.len()]];
            let task_seed = derive_seed(seed, &[i as u64]);
            let mut task = instantiate(family, task_seed)?;
            task.task_id = format!("t{i:05}-{}", family.short_name());
            Ok(task)
        })
        .collect()
}
