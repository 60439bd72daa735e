use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dialect, Program, Statement};
use crate::budget::Deadline;
use crate::qsim::{
    estimate_within, lookup_backend, random_circuit, sample_within, transpile, Backend, Circuit,
    GateOp, JobResult, Observable, QsimError, RoutedCircuit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Circuit,
    Backend,
    Observable,
    Job,
    Routed,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Circuit => "circuit",
            ValueKind::Backend => "backend",
            ValueKind::Observable => "observable",
            ValueKind::Job => "job",
            ValueKind::Routed => "routed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Circuit(Circuit),
    Backend(Backend),
    Observable(Observable),
    Job(JobResult),
    Routed(RoutedCircuit),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Circuit(_) => ValueKind::Circuit,
            Value::Backend(_) => ValueKind::Backend,
            Value::Observable(_) => ValueKind::Observable,
            Value::Job(_) => ValueKind::Job,
            Value::Routed(_) => ValueKind::Routed,
        }
    }
}

/// Named objects produced by running a program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Env {
    bindings: BTreeMap<String, Value>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    pub fn insert(&mut self, name: &str, value: Value) -> Result<(), RuntimeErrorKind> {
        if self.bindings.contains_key(name) {
            return Err(RuntimeErrorKind::DuplicateBinding(name.to_string()));
        }
        self.bindings.insert(name.to_string(), value);
        Ok(())
    }

    pub fn circuit(&self, name: &str) -> Result<&Circuit, RuntimeErrorKind> {
        match self.lookup(name)? {
            Value::Circuit(c) => Ok(c),
            other => Err(wrong(name, ValueKind::Circuit, other)),
        }
    }

    fn circuit_mut(&mut self, name: &str) -> Result<&mut Circuit, RuntimeErrorKind> {
        match self.bindings.get_mut(name) {
            Some(Value::Circuit(c)) => Ok(c),
            Some(other) => Err(RuntimeErrorKind::WrongKind {
                name: name.to_string(),
                expected: ValueKind::Circuit,
                found: other.kind(),
            }),
            None => Err(RuntimeErrorKind::UnknownName(name.to_string())),
        }
    }

    fn lookup(&self, name: &str) -> Result<&Value, RuntimeErrorKind> {
        self.bindings
            .get(name)
            .ok_or_else(|| RuntimeErrorKind::UnknownName(name.to_string()))
    }
}

fn wrong(name: &str, expected: ValueKind, found: &Value) -> RuntimeErrorKind {
    RuntimeErrorKind::WrongKind {
        name: name.to_string(),
        expected,
        found: found.kind(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeErrorKind {
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("`{name}` is a {found}, expected a {expected}")]
    WrongKind {
        name: String,
        expected: ValueKind,
        found: ValueKind,
    },
    #[error("`{0}` is already bound")]
    DuplicateBinding(String),
    #[error("only qlang programs can be interpreted in-process")]
    NotQlang,
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct InterpretError {
    pub line: usize,
    pub kind: RuntimeErrorKind,
}

impl InterpretError {
    pub fn is_timeout(&self) -> bool {
        matches!(
            self.kind,
            RuntimeErrorKind::Qsim(QsimError::DeadlineExceeded)
        )
    }
}

pub fn interpret(program: &Program) -> Result<Env, InterpretError> {
    interpret_within(program, &Deadline::none())
}

/// Run statements in order, aborting on the first runtime failure.
pub fn interpret_within(program: &Program, deadline: &Deadline) -> Result<Env, InterpretError> {
    if program.dialect != Dialect::Qlang {
        return Err(InterpretError {
            line: 0,
            kind: RuntimeErrorKind::NotQlang,
        });
    }
    let mut env = Env::new();
    for (i, stmt) in program.statements.iter().enumerate() {
        let line = program.lines.get(i).copied().unwrap_or(i + 1);
        if deadline.expired() {
            return Err(InterpretError {
                line,
                kind: QsimError::DeadlineExceeded.into(),
            });
        }
        exec(&mut env, stmt, deadline).map_err(|kind| InterpretError { line, kind })?;
    }
    Ok(env)
}

fn exec(env: &mut Env, stmt: &Statement, deadline: &Deadline) -> Result<(), RuntimeErrorKind> {
    match stmt {
        Statement::Circuit {
            name,
            num_qubits,
            num_clbits,
        } => env.insert(
            name,
            Value::Circuit(Circuit::new(name.clone(), *num_qubits, *num_clbits)?),
        ),
        Statement::Gate {
            gate,
            circuit,
            qubits,
            theta,
        } => {
            let op = GateOp::new(*gate, qubits.clone(), theta.map(|t| t.radians()))?;
            env.circuit_mut(circuit)?.push_gate(op)?;
            Ok(())
        }
        Statement::Measure {
            circuit,
            qubit,
            clbit,
        } => Ok(env.circuit_mut(circuit)?.measure(*qubit, *clbit)?),
        Statement::MeasureAll { circuit } => {
            env.circuit_mut(circuit)?.measure_all();
            Ok(())
        }
        Statement::Backend { name, backend_id } => {
            env.insert(name, Value::Backend(lookup_backend(backend_id)?))
        }
        Statement::Observable { name, terms } => {
            env.insert(name, Value::Observable(Observable::new(terms.clone())?))
        }
        Statement::Transpile {
            out,
            circuit,
            backend,
            level,
        } => {
            let c = env.circuit(circuit)?;
            let b = match env.lookup(backend)? {
                Value::Backend(b) => b,
                other => return Err(wrong(backend, ValueKind::Backend, other)),
            };
            let routed = transpile(c, b, *level)?;
            env.insert(out, Value::Routed(routed))
        }
        Statement::Sampler {
            job,
            circuit,
            shots,
            seed,
        } => {
            let result = sample_within(env.circuit(circuit)?, *shots, *seed, deadline)?;
            env.insert(job, Value::Job(result))
        }
        Statement::Estimator {
            job,
            circuit,
            observable,
        } => {
            let obs = match env.lookup(observable)? {
                Value::Observable(o) => o,
                other => return Err(wrong(observable, ValueKind::Observable, other)),
            };
            let result = estimate_within(env.circuit(circuit)?, obs, deadline)?;
            env.insert(job, Value::Job(result))
        }
        Statement::RandomCircuit {
            name,
            num_qubits,
            depth,
            seed,
            measure,
        } => env.insert(
            name,
            Value::Circuit(random_circuit(name, *num_qubits, *depth, *seed, *measure)?),
        ),
    }
}
