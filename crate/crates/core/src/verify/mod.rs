//! Unit-test assertions over an [`Env`] and the reward arithmetic built on
//! their outcomes.

mod assertion;
mod reward;

pub use assertion::{run_assertions, Assertion, Check, ASSERT_SCHEMA};
pub use reward::{
    format_reward, format_reward_with, quantum_reward, total_reward, FormatScoring,
    RewardBreakdown, RewardWeights,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    ParseError,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub results: Vec<TestResult>,
    pub execution_status: ExecutionStatus,
}

impl TestReport {
    /// Report for a program that never produced an environment: every test
    /// is marked failed with the same reason.
    pub fn all_failed<'a>(
        names: impl IntoIterator<Item = &'a str>,
        status: ExecutionStatus,
        reason: &str,
    ) -> Self {
        TestReport {
            results: names
                .into_iter()
                .map(|n| TestResult {
                    name: n.to_string(),
                    passed: false,
                    message: reason.to_string(),
                })
                .collect(),
            execution_status: status,
        }
    }

    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }

    pub fn total(&self) -> usize {
        self.results.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("report has no test results")]
    EmptyTests,
    #[error("reward weight `{0}` is negative")]
    NegativeWeight(&'static str),
    #[error("invalid assertion `{name}`: {reason}")]
    InvalidAssertion { name: String, reason: String },
}
