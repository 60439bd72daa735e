//! The `exec/1` wire protocol: one JSON request line in, one response line out.

use serde::{Deserialize, Serialize};

use super::SandboxError;
use crate::qlang::Dialect;
use crate::verify::{Assertion, ExecutionStatus, TestReport, TestResult};

pub const EXEC_SCHEMA: &str = "exec/1";

/// A test handed to the executor: a structured assertion for qlang, or an
/// opaque named test body for workers that run foreign code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestCase {
    Assertion(Assertion),
    Opaque { name: String, source: String },
}

impl TestCase {
    pub fn name(&self) -> &str {
        match self {
            TestCase::Assertion(a) => &a.name,
            TestCase::Opaque { name, .. } => name,
        }
    }
}

impl From<Assertion> for TestCase {
    fn from(a: Assertion) -> Self {
        TestCase::Assertion(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub id: String,
    pub dialect: Dialect,
    pub program: String,
    pub tests: Vec<TestCase>,
    pub timeout_ms: u64,
}

impl ExecRequest {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.id.is_empty() {
            return Err(SandboxError::InvalidRequest("empty request id".into()));
        }
        if self.timeout_ms == 0 {
            return Err(SandboxError::InvalidRequest(
                "timeout_ms must be positive".into(),
            ));
        }
        if self.tests.is_empty() {
            return Err(SandboxError::InvalidRequest(format!(
                "request `{}` has no tests",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecStatus {
    Ok,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResponse {
    pub id: String,
    pub status: ExecStatus,
    pub tests: Vec<TestResult>,
    pub duration_ms: u64,
}

impl ExecResponse {
    /// Every test failed with one shared reason.
    pub fn failed(req: &ExecRequest, status: ExecStatus, reason: &str, duration_ms: u64) -> Self {
        ExecResponse {
            id: req.id.clone(),
            status,
            tests: req
                .tests
                .iter()
                .map(|t| TestResult {
                    name: t.name().to_string(),
                    passed: false,
                    message: reason.to_string(),
                })
                .collect(),
            duration_ms,
        }
    }

    /// Check a response against the request it answers.
    pub fn conforms_to(&self, req: &ExecRequest) -> Result<(), SandboxError> {
        let violation = |m: String| Err(SandboxError::Protocol(m));
        if self.id != req.id {
            return violation(format!(
                "response id `{}` for request `{}`",
                self.id, req.id
            ));
        }
        if self.tests.len() != req.tests.len() {
            return violation(format!(
                "{} results for {} tests",
                self.tests.len(),
                req.tests.len()
            ));
        }
        if let Some((got, want)) = self
            .tests
            .iter()
            .zip(&req.tests)
            .find(|(r, t)| r.name != t.name())
        {
            return violation(format!(
                "result `{}` where `{}` was expected",
                got.name,
                want.name()
            ));
        }
        if self.status != ExecStatus::Ok && self.tests.iter().any(|t| t.passed) {
            return violation("non-ok status with passing tests".into());
        }
        Ok(())
    }

    pub fn report(&self) -> TestReport {
        TestReport {
            results: self.tests.clone(),
            execution_status: match self.status {
                ExecStatus::Ok => ExecutionStatus::Ok,
                ExecStatus::Error => ExecutionStatus::RuntimeError,
                ExecStatus::Timeout => ExecutionStatus::Timeout,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::Check;

    fn req() -> ExecRequest {
        ExecRequest {
            id: "r1".into(),
            dialect: Dialect::Qlang,
            program: "circuit qc 1 0\n".into(),
            tests: vec![
                Assertion::new("has_qc", Check::VarExists { var: "qc".into() }).into(),
                TestCase::Opaque {
                    name: "opaque".into(),
                    source: "assert True".into(),
                },
            ],
            timeout_ms: 100,
        }
    }

    #[test]
    fn wire_shape() {
        let r = req();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["tests"][0]["kind"], "var_exists");
        assert_eq!(v["tests"][1]["source"], "assert True");
        let back: ExecRequest = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
        let resp = ExecResponse::failed(&r, ExecStatus::Timeout, "slow", 3);
        let text = serde_json::to_string(&resp).unwrap();
        assert!(text.contains(r#""status":"timeout""#));
    }

    #[test]
    fn conformance_checks() {
        let r = req();
        let ok = ExecResponse::failed(&r, ExecStatus::Error, "x", 0);
        ok.conforms_to(&r).unwrap();
        let mut bad = ok.clone();
        bad.id = "other".into();
        assert!(bad.conforms_to(&r).is_err());
        let mut bad = ok.clone();
        bad.tests[0].passed = true;
        assert!(bad.conforms_to(&r).is_err());
        let mut bad = ok.clone();
        bad.tests.pop();
        assert!(bad.conforms_to(&r).is_err());
    }

    #[test]
    fn request_validation() {
        let mut r = req();
        r.timeout_ms = 0;
        assert!(r.validate().is_err());
        let mut r = req();
        r.tests.clear();
        assert!(r.validate().is_err());
    }
}
