use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::qsim::Gate;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Literal(f64),
    /// `±pi/divisor`; `pi` alone has divisor 1.
    Pi {
        negative: bool,
        divisor: u32,
    },
}

impl Angle {
    pub fn radians(self) -> f64 {
        match self {
            Angle::Literal(v) => v,
            Angle::Pi { negative, divisor } => {
                let v = PI / divisor as f64;
                if negative {
                    -v
                } else {
                    v
                }
            }
        }
    }

    fn parse(tok: &str) -> Option<Angle> {
        let (negative, body) = match tok.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, tok),
        };
        if let Some(rest) = body.strip_prefix("pi") {
            let divisor = if rest.is_empty() {
                1
            } else {
                rest.strip_prefix('/')?
                    .parse::<u32>()
                    .ok()
                    .filter(|&d| d > 0)?
            };
            return Some(Angle::Pi { negative, divisor });
        }
        let looks_numeric = tok
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
        if !looks_numeric {
            return None;
        }
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Angle::Literal)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Angle::Literal(v) => write!(f, "{v}"),
            Angle::Pi { negative, divisor } => {
                if negative {
                    f.write_str("-")?;
                }
                f.write_str("pi")?;
                if divisor != 1 {
                    write!(f, "/{divisor}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Circuit {
        name: String,
        num_qubits: usize,
        num_clbits: usize,
    },
    Gate {
        gate: Gate,
        circuit: String,
        qubits: Vec<usize>,
        theta: Option<Angle>,
    },
    Measure {
        circuit: String,
        qubit: usize,
        clbit: usize,
    },
    MeasureAll {
        circuit: String,
    },
    Backend {
        name: String,
        backend_id: String,
    },
    Observable {
        name: String,
        terms: Vec<(String, f64)>,
    },
    Transpile {
        out: String,
        circuit: String,
        backend: String,
        level: u8,
    },
    Sampler {
        job: String,
        circuit: String,
        shots: u64,
        seed: u64,
    },
    Estimator {
        job: String,
        circuit: String,
        observable: String,
    },
    RandomCircuit {
        name: String,
        num_qubits: usize,
        depth: usize,
        seed: u64,
        measure: bool,
    },
}

impl Statement {
    /// Name this statement binds in the environment, if any.
    pub fn binding(&self) -> Option<&str> {
        match self {
            Statement::Circuit { name, .. }
            | Statement::Backend { name, .. }
            | Statement::Observable { name, .. }
            | Statement::RandomCircuit { name, .. } => Some(name),
            Statement::Transpile { out, .. } => Some(out),
            Statement::Sampler { job, .. } | Statement::Estimator { job, .. } => Some(job),
            Statement::Gate { .. } | Statement::Measure { .. } | Statement::MeasureAll { .. } => {
                None
            }
        }
    }

    /// Every identifier slot in the statement, bound or referenced.
    pub fn names_mut(&mut self) -> Vec<&mut String> {
        match self {
            Statement::Circuit { name, .. }
            | Statement::Backend { name, .. }
            | Statement::Observable { name, .. }
            | Statement::RandomCircuit { name, .. } => vec![name],
            Statement::Gate { circuit, .. }
            | Statement::Measure { circuit, .. }
            | Statement::MeasureAll { circuit } => vec![circuit],
            Statement::Transpile {
                out,
                circuit,
                backend,
                ..
            } => vec![out, circuit, backend],
            Statement::Sampler { job, circuit, .. } => vec![job, circuit],
            Statement::Estimator {
                job,
                circuit,
                observable,
            } => vec![job, circuit, observable],
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Circuit {
                name,
                num_qubits,
                num_clbits,
            } => write!(f, "circuit {name} {num_qubits} {num_clbits}"),
            Statement::Gate {
                gate,
                circuit,
                qubits,
                theta,
            } => {
                write!(f, "{gate} {circuit}")?;
                for q in qubits {
                    write!(f, " {q}")?;
                }
                if let Some(t) = theta {
                    write!(f, " {t}")?;
                }
                Ok(())
            }
            Statement::Measure {
                circuit,
                qubit,
                clbit,
            } => write!(f, "measure {circuit} {qubit} {clbit}"),
            Statement::MeasureAll { circuit } => write!(f, "measure_all {circuit}"),
            Statement::Backend { name, backend_id } => write!(f, "backend {name} {backend_id}"),
            Statement::Observable { name, terms } => {
                write!(f, "observable {name}")?;
                for (label, coeff) in terms {
                    write!(f, " {label}:{coeff}")?;
                }
                Ok(())
            }
            Statement::Transpile {
                out,
                circuit,
                backend,
                level,
            } => write!(f, "transpile {out} {circuit} {backend} {level}"),
            Statement::Sampler {
                job,
                circuit,
                shots,
                seed,
            } => write!(f, "sampler {job} {circuit} shots={shots} seed={seed}"),
            Statement::Estimator {
                job,
                circuit,
                observable,
            } => write!(f, "estimator {job} {circuit} {observable}"),
            Statement::RandomCircuit {
                name,
                num_qubits,
                depth,
                seed,
                measure,
            } => write!(
                f,
                "random_circuit {name} {num_qubits} {depth} seed={seed} measure={measure}"
            ),
        }
    }
}

/// Canonical text: one statement per line, trailing newline.
pub fn render(statements: &[Statement]) -> String {
    let mut out = String::new();
    for s in statements {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

fn ident(line: usize, tok: &str) -> Result<String, ParseError> {
    let mut chars = tok.chars();
    let ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok {
        return err(line, format!("invalid identifier `{tok}`"));
    }
    Ok(tok.to_string())
}

fn number<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T, ParseError> {
    tok.parse::<T>()
        .or_else(|_| err(line, format!("expected {what}, found `{tok}`")))
}

fn keyed<'a>(line: usize, tok: &'a str, key: &str) -> Result<&'a str, ParseError> {
    tok.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| ParseError {
            line,
            message: format!("expected `{key}=<value>`, found `{tok}`"),
        })
}

fn expect_len(line: usize, toks: &[&str], n: usize, usage: &str) -> Result<(), ParseError> {
    if toks.len() != n {
        return err(line, format!("usage: {usage}"));
    }
    Ok(())
}

fn parse_line(line: usize, toks: &[&str]) -> Result<Statement, ParseError> {
    let kw = toks[0];
    let stmt = match kw {
        "circuit" => {
            expect_len(line, toks, 4, "circuit <name> <nq> <nc>")?;
            Statement::Circuit {
                name: ident(line, toks[1])?,
                num_qubits: number(line, toks[2], "qubit count")?,
                num_clbits: number(line, toks[3], "clbit count")?,
            }
        }
        "measure" => {
            expect_len(line, toks, 4, "measure <circ> <q> <c>")?;
            Statement::Measure {
                circuit: ident(line, toks[1])?,
                qubit: number(line, toks[2], "qubit index")?,
                clbit: number(line, toks[3], "clbit index")?,
            }
        }
        "measure_all" => {
            expect_len(line, toks, 2, "measure_all <circ>")?;
            Statement::MeasureAll {
                circuit: ident(line, toks[1])?,
            }
        }
        "backend" => {
            expect_len(line, toks, 3, "backend <name> <id>")?;
            Statement::Backend {
                name: ident(line, toks[1])?,
                backend_id: ident(line, toks[2])?,
            }
        }
        "observable" => {
            if toks.len() < 3 {
                return err(line, "usage: observable <name> <label>:<coeff> [...]");
            }
            let terms = toks[2..]
                .iter()
                .map(|t| {
                    let (label, coeff) = t.split_once(':').ok_or_else(|| ParseError {
                        line,
                        message: format!("expected `<label>:<coeff>`, found `{t}`"),
                    })?;
                    if label.is_empty() {
                        return err(line, "empty Pauli label");
                    }
                    let coeff: f64 = number(line, coeff, "coefficient")?;
                    if !coeff.is_finite() {
                        return err(line, "non-finite coefficient");
                    }
                    Ok((label.to_string(), coeff))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Statement::Observable {
                name: ident(line, toks[1])?,
                terms,
            }
        }
        "transpile" => {
            expect_len(line, toks, 5, "transpile <out> <circ> <backend> <level>")?;
            Statement::Transpile {
                out: ident(line, toks[1])?,
                circuit: ident(line, toks[2])?,
                backend: ident(line, toks[3])?,
                level: number(line, toks[4], "optimization level")?,
            }
        }
        "sampler" => {
            expect_len(line, toks, 5, "sampler <job> <circ> shots=<n> seed=<n>")?;
            Statement::Sampler {
                job: ident(line, toks[1])?,
                circuit: ident(line, toks[2])?,
                shots: number(line, keyed(line, toks[3], "shots")?, "shot count")?,
                seed: number(line, keyed(line, toks[4], "seed")?, "seed")?,
            }
        }
        "estimator" => {
            expect_len(line, toks, 4, "estimator <job> <circ> <obs>")?;
            Statement::Estimator {
                job: ident(line, toks[1])?,
                circuit: ident(line, toks[2])?,
                observable: ident(line, toks[3])?,
            }
        }
        "random_circuit" => {
            expect_len(
                line,
                toks,
                6,
                "random_circuit <name> <nq> <depth> seed=<n> measure=<bool>",
            )?;
            Statement::RandomCircuit {
                name: ident(line, toks[1])?,
                num_qubits: number(line, toks[2], "qubit count")?,
                depth: number(line, toks[3], "depth")?,
                seed: number(line, keyed(line, toks[4], "seed")?, "seed")?,
                measure: number(line, keyed(line, toks[5], "measure")?, "boolean")?,
            }
        }
        other => {
            let gate: Gate = match other.parse() {
                Ok(g) => g,
                Err(_) => return err(line, format!("unknown keyword or gate `{other}`")),
            };
            if toks.len() < 2 {
                return err(line, format!("usage: {gate} <circ> <q...>"));
            }
            let circuit = ident(line, toks[1])?;
            let mut args = &toks[2..];
            let theta = if gate.is_parametric() {
                let Some((last, rest)) = args.split_last() else {
                    return err(line, format!("gate {gate} needs an angle"));
                };
                args = rest;
                Some(Angle::parse(last).ok_or_else(|| ParseError {
                    line,
                    message: format!("invalid angle `{last}`"),
                })?)
            } else {
                None
            };
            if args.len() != gate.arity() {
                return err(
                    line,
                    format!(
                        "arity mismatch: gate {gate} takes {} qubit(s), got {}",
                        gate.arity(),
                        args.len()
                    ),
                );
            }
            let qubits = args
                .iter()
                .map(|t| number(line, t, "qubit index"))
                .collect::<Result<Vec<usize>, _>>()?;
            Statement::Gate {
                gate,
                circuit,
                qubits,
                theta,
            }
        }
    };
    Ok(stmt)
}

/// Parse source into `(line_number, statement)` pairs.
pub fn parse(source: &str) -> Result<Vec<(usize, Statement)>, ParseError> {
    let mut out = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        out.push((line, parse_line(line, &toks)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stmts(src: &str) -> Vec<Statement> {
        parse(src).unwrap().into_iter().map(|(_, s)| s).collect()
    }

    #[test]
    fn two_statement_program() {
        let s = stmts("circuit qc 2 2\ncrx qc 0 1 0.75");
        assert_eq!(s.len(), 2);
        assert_eq!(
            s[1],
            Statement::Gate {
                gate: Gate::Crx,
                circuit: "qc".into(),
                qubits: vec![0, 1],
                theta: Some(Angle::Literal(0.75)),
            }
        );
    }

    #[test]
    fn empty_source() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# only a comment\n\n   \n").unwrap().is_empty());
    }

    #[test]
    fn unknown_keyword_reports_line() {
        let e = parse("bogus qc").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse("circuit qc 1 0\n\nbogus qc").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn pi_angles() {
        let s = stmts("rz qc 0 pi/4\nrx qc 0 -pi\nry qc 1 -0.5");
        let thetas: Vec<f64> = s
            .iter()
            .map(|st| match st {
                Statement::Gate { theta: Some(t), .. } => t.radians(),
                _ => unreachable!(),
            })
            .collect();
        assert!((thetas[0] - PI / 4.0).abs() < 1e-15);
        assert!((thetas[1] + PI).abs() < 1e-15);
        assert_eq!(thetas[2], -0.5);
        assert!(parse("rz qc 0 pi/0").is_err());
        assert!(parse("rz qc 0 nan").is_err());
    }

    #[test]
    fn arity_is_checked() {
        let e = parse("cx qc 0").unwrap_err();
        assert!(e.message.contains("arity"), "{}", e.message);
        assert!(parse("rx qc 0").is_err());
        assert!(parse("h qc 0 1").is_err());
    }

    #[test]
    fn keyed_arguments() {
        let s = stmts("sampler j bell shots=16 seed=3\nrandom_circuit r 3 2 seed=1 measure=false");
        assert!(matches!(
            s[0],
            Statement::Sampler {
                shots: 16,
                seed: 3,
                ..
            }
        ));
        assert!(matches!(
            s[1],
            Statement::RandomCircuit { measure: false, .. }
        ));
        assert!(parse("sampler j bell 16 seed=3").is_err());
        assert!(parse("random_circuit r 3 2 seed=1 measure=maybe").is_err());
    }

    #[test]
    fn comments_and_identifiers() {
        let s = stmts("observable obs XXYYZ:1 XYZZI:-1 # trailing\n");
        assert_eq!(
            s[0],
            Statement::Observable {
                name: "obs".into(),
                terms: vec![("XXYYZ".into(), 1.0), ("XYZZI".into(), -1.0)],
            }
        );
        assert!(parse("circuit 9qc 1 0").is_err());
    }

    fn arb_statement() -> impl Strategy<Value = Statement> {
        let name = "[a-z_][a-z0-9_]{0,6}";
        let angle = prop_oneof![
            (-10.0f64..10.0).prop_map(Angle::Literal),
            (any::<bool>(), 1u32..16)
                .prop_map(|(negative, divisor)| Angle::Pi { negative, divisor }),
        ];
        prop_oneof![
            (name, 1usize..14, 0usize..14).prop_map(|(name, num_qubits, num_clbits)| {
                Statement::Circuit {
                    name,
                    num_qubits,
                    num_clbits,
                }
            }),
            (name, 0usize..8, 1usize..8, angle).prop_map(|(circuit, a, d, t)| Statement::Gate {
                gate: Gate::Crx,
                circuit,
                qubits: vec![a, a + d],
                theta: Some(t),
            }),
            (name, 0usize..8).prop_map(|(circuit, q)| Statement::Gate {
                gate: Gate::H,
                circuit,
                qubits: vec![q],
                theta: None,
            }),
            (
                name,
                prop::collection::vec(("[IXYZ]{3}", -5.0f64..5.0), 1..4)
            )
                .prop_map(|(name, terms)| Statement::Observable { name, terms }),
            (name, name, name, 0u8..4).prop_map(|(out, circuit, backend, level)| {
                Statement::Transpile {
                    out,
                    circuit,
                    backend,
                    level,
                }
            }),
            (name, name, 1u64..10_000, any::<u64>()).prop_map(|(job, circuit, shots, seed)| {
                Statement::Sampler {
                    job,
                    circuit,
                    shots,
                    seed,
                }
            }),
            (name, 1usize..10, 0usize..10, any::<u64>(), any::<bool>()).prop_map(
                |(name, num_qubits, depth, seed, measure)| Statement::RandomCircuit {
                    name,
                    num_qubits,
                    depth,
                    seed,
                    measure
                }
            ),
            (name, name).prop_map(|(circuit, _)| Statement::MeasureAll { circuit }),
        ]
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(stmts_in in prop::collection::vec(arb_statement(), 0..12)) {
            let text = render(&stmts_in);
            let back: Vec<Statement> = parse(&text).unwrap().into_iter().map(|(_, s)| s).collect();
            prop_assert_eq!(back, stmts_in);
        }
    }
}
