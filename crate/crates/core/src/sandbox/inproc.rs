use std::time::{Duration, Instant};

use super::{ExecRequest, ExecResponse, ExecStatus, Executor, SandboxError, TestCase};
use crate::budget::Deadline;
use crate::qlang::{interpret_within, Dialect, Program, QLANG_VERSION};
use crate::verify::{run_assertions, Assertion};

/// Runs qlang programs on the built-in simulator under a cooperative
/// wall-clock budget.
#[derive(Debug, Clone, Copy, Default)]
pub struct InProcessExecutor;

impl Executor for InProcessExecutor {
    fn id(&self) -> String {
        format!("inproc/{QLANG_VERSION}")
    }

    fn execute(&self, req: &ExecRequest) -> Result<ExecResponse, SandboxError> {
        req.validate()?;
        if req.dialect != Dialect::Qlang {
            return Err(SandboxError::Unroutable(req.dialect));
        }
        let assertions: Vec<Assertion> = req
            .tests
            .iter()
            .map(|t| match t {
                TestCase::Assertion(a) => Ok(a.clone()),
                TestCase::Opaque { name, .. } => Err(SandboxError::InvalidRequest(format!(
                    "opaque test `{name}` cannot run in-process"
                ))),
            })
            .collect::<Result<_, _>>()?;

        let start = Instant::now();
        let deadline = Deadline::after(Duration::from_millis(req.timeout_ms));
        let elapsed = || start.elapsed().as_millis() as u64;

        let program = match Program::parse_qlang(&req.program) {
            Ok(p) => p,
            Err(e) => {
                return Ok(ExecResponse::failed(
                    req,
                    ExecStatus::Error,
                    &format!("parse error: {e}"),
                    elapsed(),
                ))
            }
        };
        let env = match interpret_within(&program, &deadline) {
            Ok(env) => env,
            Err(e) if e.is_timeout() => {
                let reason = format!("timed out after {} ms", req.timeout_ms);
                return Ok(ExecResponse::failed(
                    req,
                    ExecStatus::Timeout,
                    &reason,
                    elapsed(),
                ));
            }
            Err(e) => {
                return Ok(ExecResponse::failed(
                    req,
                    ExecStatus::Error,
                    &format!("runtime error: {e}"),
                    elapsed(),
                ))
            }
        };
        let report = run_assertions(&env, &assertions);
        Ok(ExecResponse {
            id: req.id.clone(),
            status: ExecStatus::Ok,
            tests: report.results,
            duration_ms: elapsed(),
        })
    }
}
