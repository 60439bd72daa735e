use std::time::{Duration, Instant};

use qvf_core::qlang::Dialect;
use qvf_core::sandbox::{
    ExecRequest, ExecStatus, Executor, Sandbox, SandboxError, TestCase, WorkerCommand, WorkerPool,
};
use qvf_core::verify::{Assertion, Check};
use rayon::prelude::*;

fn pool(capacity: usize) -> WorkerPool {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/stub_worker.py");
    let cmd = WorkerCommand {
        program: "python3".into(),
        args: vec![script.into()],
    };
    WorkerPool::new(cmd, capacity, 5_000).with_grace(Duration::from_millis(1_500))
}

fn opaque(name: &str, source: &str) -> TestCase {
    TestCase::Opaque {
        name: name.into(),
        source: source.into(),
    }
}

fn request(id: &str, program: &str, timeout_ms: u64) -> ExecRequest {
    ExecRequest {
        id: id.into(),
        dialect: Dialect::Pyqiskit,
        program: program.into(),
        tests: vec![opaque("first", "pass"), opaque("second", "fail")],
        timeout_ms,
    }
}

#[test]
fn ok_path_reports_per_test() {
    let p = pool(1);
    let resp = p.execute(&request("r1", "x = 1", 1_000)).unwrap();
    assert_eq!(resp.id, "r1");
    assert_eq!(resp.status, ExecStatus::Ok);
    let passed: Vec<bool> = resp.tests.iter().map(|t| t.passed).collect();
    assert_eq!(passed, [true, false]);
}

#[test]
fn worker_error_status_passes_through() {
    let resp = pool(1).execute(&request("r", "raise", 1_000)).unwrap();
    assert_eq!(resp.status, ExecStatus::Error);
    assert!(resp.tests.iter().all(|t| !t.passed));
}

#[test]
fn hang_is_killed_and_worker_replaced() {
    let p = pool(1);
    let start = Instant::now();
    let resp = p.execute(&request("slow", "hang", 10)).unwrap();
    assert_eq!(resp.status, ExecStatus::Timeout);
    assert!(resp.tests.iter().all(|t| !t.passed));
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(p.kills(), 1);
    let resp = p.execute(&request("next", "x = 1", 1_000)).unwrap();
    assert_eq!(resp.status, ExecStatus::Ok);
}

#[test]
fn crash_means_unavailable_then_recovers() {
    let p = pool(1);
    assert!(matches!(
        p.execute(&request("c", "crash", 1_000)),
        Err(SandboxError::WorkerUnavailable(_))
    ));
    assert_eq!(
        p.execute(&request("d", "y = 2", 1_000)).unwrap().status,
        ExecStatus::Ok
    );
}

#[test]
fn protocol_violations_detected() {
    let p = pool(1);
    assert!(matches!(
        p.execute(&request("g", "garbage", 1_000)),
        Err(SandboxError::Protocol(_))
    ));
    assert!(matches!(
        p.execute(&request("w", "wrong_id", 1_000)),
        Err(SandboxError::Protocol(_))
    ));
    assert_eq!(p.kills(), 2);
}

#[test]
fn timeout_budget_exported_to_worker() {
    let resp = pool(1).execute(&request("e", "env", 1_000)).unwrap();
    assert_eq!(resp.tests[0].message, "5000");
}

#[test]
fn missing_launcher_is_unavailable() {
    let p = WorkerPool::new(
        WorkerCommand {
            program: "/nonexistent/worker".into(),
            args: vec![],
        },
        1,
        100,
    );
    assert!(matches!(
        p.execute(&request("m", "x", 100)),
        Err(SandboxError::WorkerUnavailable(_))
    ));
}

#[test]
fn parallel_requests_keep_their_ids() {
    let p = pool(4);
    let reqs: Vec<ExecRequest> = (0..12)
        .map(|i| request(&format!("p{i}"), "z = 3", 2_000))
        .collect();
    let out: Vec<_> = reqs.par_iter().map(|r| p.execute(r).unwrap()).collect();
    for (r, o) in reqs.iter().zip(out) {
        assert_eq!(r.id, o.id);
    }
}

#[test]
fn sandbox_routes_by_dialect() {
    let sb = Sandbox::with_worker(pool(1));
    let resp = sb.execute(&request("py", "x = 1", 1_000)).unwrap();
    assert_eq!(resp.status, ExecStatus::Ok);
    let q = ExecRequest {
        id: "q".into(),
        dialect: Dialect::Qlang,
        program: "circuit qc 1 0\n".into(),
        tests: vec![Assertion::new("qc", Check::VarExists { var: "qc".into() }).into()],
        timeout_ms: 1_000,
    };
    assert!(sb.execute(&q).unwrap().tests[0].passed);
    assert!(sb.id().contains("worker:python3"));
    assert!(matches!(
        Sandbox::builtin().execute(&request("py", "x = 1", 1_000)),
        Err(SandboxError::Unroutable(Dialect::Pyqiskit))
    ));
}
