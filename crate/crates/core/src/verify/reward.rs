use serde::{Deserialize, Serialize};

use super::{ExecutionStatus, TestReport, VerifyError};

/// Fraction of unit tests that passed. Any execution failure scores zero.
pub fn quantum_reward(report: &TestReport) -> Result<f64, VerifyError> {
    if report.results.is_empty() {
        return Err(VerifyError::EmptyTests);
    }
    if report.execution_status != ExecutionStatus::Ok {
        return Ok(0.0);
    }
    Ok(report.passed() as f64 / report.total() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatScoring {
    /// 0.5 for the reasoning block, 0.5 for the code block.
    #[default]
    Graded,
    /// 1.0 only when both parts are present.
    Binary,
}

fn leading_think_block(completion: &str) -> Option<&str> {
    let body = completion.trim_start().strip_prefix("<think>")?;
    if completion.matches("<think>").count() != 1 || completion.matches("</think>").count() != 1 {
        return None;
    }
    let end = body.find("</think>")?;
    Some(&body[end + "</think>".len()..])
}

fn fence_lines(text: &str) -> usize {
    text.lines()
        .filter(|l| l.trim_start().starts_with("```"))
        .count()
}

pub fn format_reward(completion: &str) -> f64 {
    format_reward_with(completion, FormatScoring::Graded)
}

/// Score the reasoning-then-code layout of a completion.
pub fn format_reward_with(completion: &str, scoring: FormatScoring) -> f64 {
    let think = leading_think_block(completion);
    let rest = think.unwrap_or(completion);
    let has_think = think.is_some();
    let has_code = fence_lines(rest) == 2;
    match scoring {
        FormatScoring::Graded => 0.5 * has_think as u8 as f64 + 0.5 * has_code as u8 as f64,
        FormatScoring::Binary => (has_think && has_code) as u8 as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_quantum: f64,
    pub w_format: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_quantum: 1.0,
            w_format: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if !(self.w_quantum >= 0.0) {
            return Err(VerifyError::NegativeWeight("w_quantum"));
        }
        if !(self.w_format >= 0.0) {
            return Err(VerifyError::NegativeWeight("w_format"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_quantum: f64,
    pub r_format: f64,
    pub total: f64,
}

pub fn total_reward(
    r_quantum: f64,
    r_format: f64,
    weights: &RewardWeights,
) -> Result<RewardBreakdown, VerifyError> {
    weights.validate()?;
    Ok(RewardBreakdown {
        r_quantum,
        r_format,
        total: weights.w_quantum * r_quantum + weights.w_format * r_format,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::TestResult;
    use proptest::prelude::*;

    fn report(passes: &[bool], status: ExecutionStatus) -> TestReport {
        TestReport {
            results: passes
                .iter()
                .enumerate()
                .map(|(i, &p)| TestResult {
                    name: format!("t{i}"),
                    passed: p,
                    message: String::new(),
                })
                .collect(),
            execution_status: status,
        }
    }

    #[test]
    fn percentage_of_passed_tests() {
        assert_eq!(
            quantum_reward(&report(&[true, true, true, false], ExecutionStatus::Ok)).unwrap(),
            0.75
        );
        assert_eq!(
            quantum_reward(&report(&[true; 5], ExecutionStatus::Ok)).unwrap(),
            1.0
        );
        assert_eq!(
            quantum_reward(&report(&[false; 3], ExecutionStatus::Timeout)).unwrap(),
            0.0
        );
        assert_eq!(
            quantum_reward(&report(&[], ExecutionStatus::Ok)),
            Err(VerifyError::EmptyTests)
        );
    }

    #[test]
    fn format_cases() {
        assert_eq!(
            format_reward("<think>plan</think>\n```\ncircuit qc 1 1\n```"),
            1.0
        );
        assert_eq!(format_reward("```qlang\ncircuit qc 1 1\n```"), 0.5);
        assert_eq!(format_reward("<think>only reasoning</think>"), 0.5);
        assert_eq!(format_reward("Just build a circuit."), 0.0);
        assert_eq!(
            format_reward("<think>a</think><think>b</think>\n```\nx\n```"),
            0.5
        );
        assert_eq!(
            format_reward("<think>a</think>\n```\nx\n```\n```\ny\n```"),
            0.5
        );
        assert_eq!(format_reward("<think>unterminated\n```\nx\n```"), 0.5);
        assert_eq!(
            format_reward_with("```\nx\n```", FormatScoring::Binary),
            0.0
        );
    }

    #[test]
    fn weighted_totals() {
        let w = RewardWeights::default();
        assert!((total_reward(0.75, 1.0, &w).unwrap().total - 0.85).abs() < 1e-15);
        assert!((total_reward(1.0, 1.0, &w).unwrap().total - 1.1).abs() < 1e-15);
        assert_eq!(total_reward(0.0, 0.0, &w).unwrap().total, 0.0);
        let neg = RewardWeights {
            w_quantum: -1.0,
            w_format: 0.1,
        };
        assert!(total_reward(1.0, 1.0, &neg).is_err());
    }

    proptest! {
        #[test]
        fn reward_bounded_and_monotone(passes in prop::collection::vec(any::<bool>(), 1..40), flip in any::<prop::sample::Index>()) {
            let r = quantum_reward(&report(&passes, ExecutionStatus::Ok)).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            let i = flip.index(passes.len());
            let mut up = passes.clone();
            up[i] = true;
            prop_assert!(quantum_reward(&report(&up, ExecutionStatus::Ok)).unwrap() >= r);
        }

        #[test]
        fn total_is_linear(q in 0.0f64..1.0, f in 0.0f64..1.0, a in 0.0f64..3.0) {
            let w = RewardWeights::default();
            let base = total_reward(q, f, &w).unwrap().total;
            let scaled = total_reward(a * q, a * f, &w).unwrap().total;
            prop_assert!((scaled - a * base).abs() < 1e-12);
        }
    }
}
