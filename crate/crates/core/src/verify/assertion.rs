use serde::{Deserialize, Serialize};

use super::{ExecutionStatus, TestReport, TestResult, VerifyError};
use crate::qlang::{Env, Value, ValueKind};
use crate::qsim::{lookup_backend, Gate, JobKind};

pub const ASSERT_SCHEMA: &str = "assert/1";

fn default_tol() -> f64 {
    1e-9
}

/// One named unit test. Serializes flat: `{"name": .., "kind": .., ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    VarExists {
        var: String,
    },
    VarKind {
        var: String,
        expected: ValueKind,
    },
    CircuitNumQubits {
        var: String,
        expected: usize,
    },
    CircuitNumClbits {
        var: String,
        expected: usize,
    },
    CircuitHasGate {
        var: String,
        gate: Gate,
        qubits: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    RoutedRespectsCoupling {
        var: String,
        backend: String,
    },
    RoutedLevel {
        var: String,
        level: u8,
    },
    CountsKeysSubset {
        var: String,
        allowed: Vec<String>,
    },
    CountsTotal {
        var: String,
        shots: u64,
    },
    ExpectationClose {
        var: String,
        value: f64,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    ObservableTerms {
        var: String,
        labels: Vec<String>,
        coeffs: Vec<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

impl Assertion {
    pub fn new(name: impl Into<String>, check: Check) -> Self {
        Self {
            name: name.into(),
            check,
        }
    }

    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |reason: &str| {
            Err(VerifyError::InvalidAssertion {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        match &self.check {
            Check::CircuitHasGate { tol, .. } | Check::ExpectationClose { tol, .. }
                if !(*tol > 0.0) =>
            {
                bad("tol must be positive")
            }
            Check::ObservableTerms {
                labels,
                coeffs,
                tol,
                ..
            } => {
                if !(*tol > 0.0) {
                    bad("tol must be positive")
                } else if labels.len() != coeffs.len() {
                    bad("labels and coeffs differ in length")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Evaluate against an environment; `Err` carries the failure message.
    pub fn evaluate(&self, env: &Env) -> Result<(), String> {
        self.validate().map_err(|e| e.to_string())?;
        let get = |var: &str| {
            env.get(var)
                .ok_or_else(|| format!("`{var}` is not defined"))
        };
        let kind_err = |var: &str, want: ValueKind, v: &Value| {
            format!("`{var}` is a {}, expected a {want}", v.kind())
        };

        match &self.check {
            Check::VarExists { var } => get(var).map(|_| ()),
            Check::VarKind { var, expected } => {
                let v = get(var)?;
                if v.kind() == *expected {
                    Ok(())
                } else {
                    Err(kind_err(var, *expected, v))
                }
            }
            Check::CircuitNumQubits { var, expected }
            | Check::CircuitNumClbits { var, expected } => {
                let c = match get(var)? {
                    Value::Circuit(c) => c,
                    v => return Err(kind_err(var, ValueKind::Circuit, v)),
                };
                let (what, got) = if matches!(self.check, Check::CircuitNumQubits { .. }) {
                    ("qubits", c.num_qubits)
                } else {
                    ("clbits", c.num_clbits)
                };
                if got == *expected {
                    Ok(())
                } else {
                    Err(format!("`{var}` has {got} {what}, expected {expected}"))
                }
            }
            Check::CircuitHasGate {
                var,
                gate,
                qubits,
                theta,
                tol,
            } => {
                let c = match get(var)? {
                    Value::Circuit(c) => c,
                    v => return Err(kind_err(var, ValueKind::Circuit, v)),
                };
                let found = c.gates().any(|g| {
                    g.gate == *gate
                        && g.qubits == *qubits
                        && match (theta, g.theta) {
                            (Some(want), Some(got)) => (want - got).abs() <= *tol,
                            (None, _) => true,
                            (Some(_), None) => false,
                        }
                });
                if found {
                    Ok(())
                } else {
                    let seen: Vec<String> = c
                        .gates()
                        .map(|g| match g.theta {
                            Some(t) => format!("{}{:?}({t})", g.gate, g.qubits),
                            None => format!("{}{:?}", g.gate, g.qubits),
                        })
                        .collect();
                    Err(format!(
                        "`{var}` has no {gate} on {qubits:?}{}; gates: [{}]",
                        theta
                            .map(|t| format!(" with theta≈{t}"))
                            .unwrap_or_default(),
                        seen.join(", ")
                    ))
                }
            }
            Check::RoutedRespectsCoupling { var, backend } => {
                let r = match get(var)? {
                    Value::Routed(r) => r,
                    v => return Err(kind_err(var, ValueKind::Routed, v)),
                };
                let b = lookup_backend(backend).map_err(|e| e.to_string())?;
                if r.circuit.num_qubits > b.num_qubits {
                    return Err(format!("`{var}` is wider than backend {backend}"));
                }
                match r
                    .circuit
                    .gates()
                    .find(|g| g.gate.arity() == 2 && !b.are_coupled(g.qubits[0], g.qubits[1]))
                {
                    None => Ok(()),
                    Some(g) => Err(format!(
                        "{} on {:?} is not a {backend} coupling edge",
                        g.gate, g.qubits
                    )),
                }
            }
            Check::RoutedLevel { var, level } => match get(var)? {
                Value::Routed(r) if r.level == *level => Ok(()),
                Value::Routed(r) => Err(format!(
                    "`{var}` was transpiled at level {}, expected {level}",
                    r.level
                )),
                v => Err(kind_err(var, ValueKind::Routed, v)),
            },
            Check::CountsKeysSubset { var, allowed } => {
                let counts = counts_of(var, get(var)?)?;
                match counts.keys().find(|k| !allowed.contains(k)) {
                    None => Ok(()),
                    Some(k) => Err(format!(
                        "`{var}` observed outcome `{k}` outside {allowed:?}"
                    )),
                }
            }
            Check::CountsTotal { var, shots } => {
                let total: u64 = counts_of(var, get(var)?)?.values().sum();
                if total == *shots {
                    Ok(())
                } else {
                    Err(format!("`{var}` counts sum to {total}, expected {shots}"))
                }
            }
            Check::ExpectationClose { var, value, tol } => match get(var)? {
                Value::Job(j) if j.kind == JobKind::Expectation => {
                    let got = j.value.unwrap_or(f64::NAN);
                    if (got - value).abs() <= *tol {
                        Ok(())
                    } else {
                        Err(format!(
                            "`{var}` expectation {got}, expected {value} ± {tol}"
                        ))
                    }
                }
                Value::Job(_) => Err(format!(
                    "`{var}` is a sampler job, expected an estimator job"
                )),
                v => Err(kind_err(var, ValueKind::Job, v)),
            },
            Check::ObservableTerms {
                var,
                labels,
                coeffs,
                tol,
            } => {
                let obs = match get(var)? {
                    Value::Observable(o) => o,
                    v => return Err(kind_err(var, ValueKind::Observable, v)),
                };
                let same = obs.terms.len() == labels.len()
                    && obs
                        .terms
                        .iter()
                        .zip(labels.iter().zip(coeffs))
                        .all(|(t, (l, c))| t.label == *l && (t.coeff - c).abs() <= *tol);
                if same {
                    Ok(())
                } else {
                    let got: Vec<String> = obs
                        .terms
                        .iter()
                        .map(|t| format!("{}:{}", t.label, t.coeff))
                        .collect();
                    Err(format!(
                        "`{var}` terms [{}] differ from expected",
                        got.join(" ")
                    ))
                }
            }
        }
    }
}

fn counts_of<'a>(
    var: &str,
    v: &'a Value,
) -> Result<&'a std::collections::BTreeMap<String, u64>, String> {
    match v {
        Value::Job(j) => j
            .counts
            .as_ref()
            .ok_or_else(|| format!("`{var}` is an estimator job, expected sampler counts")),
        v => Err(format!("`{var}` is a {}, expected a job", v.kind())),
    }
}

/// Evaluate every assertion independently against `env`.
pub fn run_assertions(env: &Env, assertions: &[Assertion]) -> TestReport {
    TestReport {
        results: assertions
            .iter()
            .map(|a| match a.evaluate(env) {
                Ok(()) => TestResult {
                    name: a.name.clone(),
                    passed: true,
                    message: "ok".to_string(),
                },
                Err(message) => TestResult {
                    name: a.name.clone(),
                    passed: false,
                    message,
                },
            })
            .collect(),
        execution_status: ExecutionStatus::Ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlang::{interpret, Program};

    fn env(src: &str) -> Env {
        interpret(&Program::parse_qlang(src).unwrap()).unwrap()
    }

    fn appendix_assertions() -> Vec<Assertion> {
        vec![
            Assertion::new("qc_exists", Check::VarExists { var: "qc".into() }),
            Assertion::new(
                "qc_is_circuit",
                Check::VarKind {
                    var: "qc".into(),
                    expected: ValueKind::Circuit,
                },
            ),
            Assertion::new(
                "qc_qubits",
                Check::CircuitNumQubits {
                    var: "qc".into(),
                    expected: 2,
                },
            ),
            Assertion::new(
                "qc_clbits",
                Check::CircuitNumClbits {
                    var: "qc".into(),
                    expected: 2,
                },
            ),
            Assertion::new(
                "crx_gate",
                Check::CircuitHasGate {
                    var: "qc".into(),
                    gate: Gate::Crx,
                    qubits: vec![0, 1],
                    theta: Some(0.75),
                    tol: 1e-9,
                },
            ),
            Assertion::new(
                "pm_routed",
                Check::RoutedRespectsCoupling {
                    var: "pm".into(),
                    backend: "line5".into(),
                },
            ),
            Assertion::new(
                "pm_level",
                Check::RoutedLevel {
                    var: "pm".into(),
                    level: 1,
                },
            ),
        ]
    }

    #[test]
    fn appendix_style_all_pass() {
        let e = env("circuit qc 2 2\ncrx qc 0 1 0.75\nbackend b line5\ntranspile pm qc b 1");
        let report = run_assertions(&e, &appendix_assertions());
        assert!(report.results.iter().all(|r| r.passed), "{report:?}");
    }

    #[test]
    fn empty_env_fails_existence() {
        let report = run_assertions(
            &Env::new(),
            &[Assertion::new("x", Check::VarExists { var: "qc".into() })],
        );
        assert!(!report.results[0].passed);
        assert!(report.results[0].message.contains("qc"));
    }

    #[test]
    fn bell_counts_subset() {
        let e = env("circuit bell 2 2\nh bell 0\ncx bell 0 1\nmeasure_all bell\nsampler j bell shots=256 seed=1");
        let ok = Assertion::new(
            "keys",
            Check::CountsKeysSubset {
                var: "j".into(),
                allowed: vec!["00".into(), "11".into()],
            },
        );
        let narrow = Assertion::new(
            "keys",
            Check::CountsKeysSubset {
                var: "j".into(),
                allowed: vec!["00".into()],
            },
        );
        assert!(ok.evaluate(&e).is_ok());
        let msg = narrow.evaluate(&e).unwrap_err();
        assert!(msg.contains("`11`"), "{msg}");
        let total = Assertion::new(
            "total",
            Check::CountsTotal {
                var: "j".into(),
                shots: 256,
            },
        );
        assert!(total.evaluate(&e).is_ok());
    }

    #[test]
    fn theta_tolerance() {
        let e = env("circuit qc 2 2\ncrx qc 0 1 1.5");
        let a = &appendix_assertions()[4];
        assert!(a.evaluate(&e).is_err());
    }

    #[test]
    fn json_schema_is_flat_with_kind() {
        let a = &appendix_assertions()[4];
        let v = serde_json::to_value(a).unwrap();
        assert_eq!(v["kind"], "circuit_has_gate");
        assert_eq!(v["name"], "crx_gate");
        assert_eq!(v["gate"], "crx");
        let back: Assertion = serde_json::from_value(v).unwrap();
        assert_eq!(&back, a);
        let parsed: Assertion = serde_json::from_str(
            r#"{"name":"e","kind":"expectation_close","var":"job","value":0.5}"#,
        )
        .unwrap();
        assert_eq!(
            parsed.check,
            Check::ExpectationClose {
                var: "job".into(),
                value: 0.5,
                tol: 1e-9
            }
        );
    }

    #[test]
    fn invalid_parameters_fail_rather_than_panic() {
        let a = Assertion::new(
            "bad",
            Check::ExpectationClose {
                var: "j".into(),
                value: 0.0,
                tol: 0.0,
            },
        );
        assert!(a.validate().is_err());
        assert!(a.evaluate(&Env::new()).is_err());
    }

    #[test]
    fn observable_terms_check() {
        let e = env("observable obs XXYYZ:1 XYZZI:-1 XXZZZ:-1");
        let a = Assertion::new(
            "terms",
            Check::ObservableTerms {
                var: "obs".into(),
                labels: vec!["XXYYZ".into(), "XYZZI".into(), "XXZZZ".into()],
                coeffs: vec![1.0, -1.0, -1.0],
                tol: 1e-9,
            },
        );
        assert!(a.evaluate(&e).is_ok());
    }
}
