//! `qlang/1`: a line-oriented mini language for circuit programs.
//!
//! One statement per line, `#` starts a comment:
//!
//! ```text
//! circuit <name> <nq> <nc>
//! <gate> <circ> <q...> [<theta>]
//! measure <circ> <q> <c>
//! measure_all <circ>
//! backend <name> <id>
//! observable <name> <label>:<coeff> [...]
//! transpile <out> <circ> <backend> <level>
//! sampler <job> <circ> shots=<n> seed=<n>
//! estimator <job> <circ> <obs>
//! random_circuit <name> <nq> <depth> seed=<n> measure=<bool>
//! ```
//!
//! Angles are decimal literals or `pi`, `pi/<k>`, optionally negated.

mod interp;
mod parse;

pub use interp::{
    interpret, interpret_within, Env, InterpretError, RuntimeErrorKind, Value, ValueKind,
};
pub use parse::{parse, render, Angle, ParseError, Statement};

use serde::{Deserialize, Serialize};

pub const QLANG_VERSION: &str = "qlang/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Qlang,
    Pyqiskit,
}

/// Source text in one of the supported dialects; qlang programs carry their
/// parsed statements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProgramRecord", into = "ProgramRecord")]
pub struct Program {
    pub dialect: Dialect,
    pub source: String,
    pub statements: Vec<Statement>,
    /// 1-based source line of each statement.
    pub lines: Vec<usize>,
}

impl Program {
    pub fn parse_qlang(source: &str) -> Result<Self, ParseError> {
        let parsed = parse(source)?;
        Ok(Program {
            dialect: Dialect::Qlang,
            source: source.to_string(),
            statements: parsed.iter().map(|(_, s)| s.clone()).collect(),
            lines: parsed.iter().map(|(l, _)| *l).collect(),
        })
    }

    pub fn opaque(dialect: Dialect, source: &str) -> Self {
        Program {
            dialect,
            source: source.to_string(),
            statements: Vec::new(),
            lines: Vec::new(),
        }
    }

    pub fn new(dialect: Dialect, source: &str) -> Result<Self, ParseError> {
        match dialect {
            Dialect::Qlang => Self::parse_qlang(source),
            Dialect::Pyqiskit => Ok(Self::opaque(dialect, source)),
        }
    }

    /// Rebuild a qlang program from statements, in canonical text form.
    pub fn from_statements(statements: Vec<Statement>) -> Self {
        let source = render(&statements);
        let lines = (1..=statements.len()).collect();
        Program {
            dialect: Dialect::Qlang,
            source,
            statements,
            lines,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ProgramRecord {
    dialect: Dialect,
    source: String,
}

impl TryFrom<ProgramRecord> for Program {
    type Error = ParseError;

    fn try_from(r: ProgramRecord) -> Result<Self, Self::Error> {
        Program::new(r.dialect, &r.source)
    }
}

impl From<Program> for ProgramRecord {
    fn from(p: Program) -> Self {
        ProgramRecord {
            dialect: p.dialect,
            source: p.source,
        }
    }
}
