use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::QsimError;

/// Largest register the simulator accepts (2^14 amplitudes).
pub const MAX_QUBITS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    X,
    Y,
    Z,
    H,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    Cx,
    Cz,
    Crx,
    Cry,
    Crz,
    Swap,
}

impl Gate {
    pub const ALL: [Gate; 17] = [
        Gate::X,
        Gate::Y,
        Gate::Z,
        Gate::H,
        Gate::S,
        Gate::Sdg,
        Gate::T,
        Gate::Tdg,
        Gate::Rx,
        Gate::Ry,
        Gate::Rz,
        Gate::Cx,
        Gate::Cz,
        Gate::Crx,
        Gate::Cry,
        Gate::Crz,
        Gate::Swap,
    ];

    pub fn arity(self) -> usize {
        match self {
            Gate::Cx | Gate::Cz | Gate::Crx | Gate::Cry | Gate::Crz | Gate::Swap => 2,
            _ => 1,
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            Gate::Rx | Gate::Ry | Gate::Rz | Gate::Crx | Gate::Cry | Gate::Crz
        )
    }

    /// Gates whose two qubit arguments can be exchanged without changing the unitary.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Gate::Cz | Gate::Swap)
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::X => "x",
            Gate::Y => "y",
            Gate::Z => "z",
            Gate::H => "h",
            Gate::S => "s",
            Gate::Sdg => "sdg",
            Gate::T => "t",
            Gate::Tdg => "tdg",
            Gate::Rx => "rx",
            Gate::Ry => "ry",
            Gate::Rz => "rz",
            Gate::Cx => "cx",
            Gate::Cz => "cz",
            Gate::Crx => "crx",
            Gate::Cry => "cry",
            Gate::Crz => "crz",
            Gate::Swap => "swap",
        }
    }

    /// The gate that undoes this one, with the angle it needs.
    pub fn inverse(self, theta: Option<f64>) -> (Gate, Option<f64>) {
        match self {
            Gate::S => (Gate::Sdg, None),
            Gate::Sdg => (Gate::S, None),
            Gate::T => (Gate::Tdg, None),
            Gate::Tdg => (Gate::T, None),
            g if g.is_parametric() => (g, theta.map(|t| -t)),
            g => (g, None),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gate {
    type Err = QsimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Gate::ALL
            .iter()
            .copied()
            .find(|g| g.name() == s)
            .ok_or_else(|| QsimError::UnknownGate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub gate: Gate,
    pub qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl GateOp {
    pub fn new(gate: Gate, qubits: Vec<usize>, theta: Option<f64>) -> Result<Self, QsimError> {
        if qubits.len() != gate.arity() {
            return Err(QsimError::Arity {
                gate,
                expected: gate.arity(),
                got: qubits.len(),
            });
        }
        if gate.is_parametric() != theta.is_some() {
            return Err(QsimError::Parameter(gate));
        }
        if let Some(t) = theta {
            if !t.is_finite() {
                return Err(QsimError::Parameter(gate));
            }
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(QsimError::RepeatedQubit(qubits[0]));
        }
        Ok(Self {
            gate,
            qubits,
            theta,
        })
    }

    pub fn inverse(&self) -> GateOp {
        let (gate, theta) = self.gate.inverse(self.theta);
        GateOp {
            gate,
            qubits: self.qubits.clone(),
            theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Op {
    Gate(GateOp),
    Measure { qubit: usize, clbit: usize },
}

impl Op {
    pub fn qubits(&self) -> &[usize] {
        match self {
            Op::Gate(g) => &g.qubits,
            Op::Measure { qubit, .. } => std::slice::from_ref(qubit),
        }
    }

    pub fn as_gate(&self) -> Option<&GateOp> {
        match self {
            Op::Gate(g) => Some(g),
            Op::Measure { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub name: String,
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub ops: Vec<Op>,
}

impl Circuit {
    pub fn new(
        name: impl Into<String>,
        num_qubits: usize,
        num_clbits: usize,
    ) -> Result<Self, QsimError> {
        if num_qubits == 0 {
            return Err(QsimError::EmptyRegister);
        }
        if num_qubits > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(num_qubits));
        }
        Ok(Self {
            name: name.into(),
            num_qubits,
            num_clbits,
            ops: Vec::new(),
        })
    }

    fn check_qubit(&self, q: usize) -> Result<(), QsimError> {
        if q >= self.num_qubits {
            return Err(QsimError::QubitOutOfRange {
                qubit: q,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    pub fn push_gate(&mut self, op: GateOp) -> Result<(), QsimError> {
        for &q in &op.qubits {
            self.check_qubit(q)?;
        }
        self.ops.push(Op::Gate(op));
        Ok(())
    }

    pub fn gate(
        &mut self,
        gate: Gate,
        qubits: &[usize],
        theta: Option<f64>,
    ) -> Result<(), QsimError> {
        self.push_gate(GateOp::new(gate, qubits.to_vec(), theta)?)
    }

    pub fn measure(&mut self, qubit: usize, clbit: usize) -> Result<(), QsimError> {
        self.check_qubit(qubit)?;
        if clbit >= self.num_clbits {
            return Err(QsimError::ClbitOutOfRange {
                clbit,
                num_clbits: self.num_clbits,
            });
        }
        self.ops.push(Op::Measure { qubit, clbit });
        Ok(())
    }

    /// Measure qubit `i` into clbit `i` for every qubit, growing the
    /// classical register when it is too small.
    pub fn measure_all(&mut self) {
        self.num_clbits = self.num_clbits.max(self.num_qubits);
        for q in 0..self.num_qubits {
            self.ops.push(Op::Measure { qubit: q, clbit: q });
        }
    }

    pub fn has_measurements(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Measure { .. }))
    }

    pub fn gates(&self) -> impl Iterator<Item = &GateOp> {
        self.ops.iter().filter_map(Op::as_gate)
    }

    /// Copy of the circuit with every measurement dropped.
    pub fn without_measurements(&self) -> Circuit {
        Circuit {
            name: self.name.clone(),
            num_qubits: self.num_qubits,
            num_clbits: self.num_clbits,
            ops: self
                .ops
                .iter()
                .filter(|op| matches!(op, Op::Gate(_)))
                .cloned()
                .collect(),
        }
    }

    /// Re-check every structural invariant, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), QsimError> {
        if self.num_qubits == 0 {
            return Err(QsimError::EmptyRegister);
        }
        if self.num_qubits > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(self.num_qubits));
        }
        for op in &self.ops {
            match op {
                Op::Gate(g) => {
                    GateOp::new(g.gate, g.qubits.clone(), g.theta)?;
                    for &q in &g.qubits {
                        self.check_qubit(q)?;
                    }
                }
                Op::Measure { qubit, clbit } => {
                    self.check_qubit(*qubit)?;
                    if *clbit >= self.num_clbits {
                        return Err(QsimError::ClbitOutOfRange {
                            clbit: *clbit,
                            num_clbits: self.num_clbits,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_names_round_trip() {
        for g in Gate::ALL {
            assert_eq!(g.name().parse::<Gate>().unwrap(), g);
        }
        assert!("ccx".parse::<Gate>().is_err());
    }

    #[test]
    fn theta_presence_matches_gate() {
        assert!(GateOp::new(Gate::Rx, vec![0], None).is_err());
        assert!(GateOp::new(Gate::X, vec![0], Some(1.0)).is_err());
        assert!(GateOp::new(Gate::Crx, vec![0, 1], Some(0.75)).is_ok());
    }

    #[test]
    fn arity_and_repeated_qubits_rejected() {
        assert!(matches!(
            GateOp::new(Gate::Cx, vec![0], None),
            Err(QsimError::Arity { .. })
        ));
        assert!(matches!(
            GateOp::new(Gate::Cx, vec![1, 1], None),
            Err(QsimError::RepeatedQubit(1))
        ));
    }

    #[test]
    fn register_bounds() {
        assert!(Circuit::new("c", 0, 0).is_err());
        assert!(Circuit::new("c", 15, 0).is_err());
        let mut c = Circuit::new("c", 2, 1).unwrap();
        assert!(c.gate(Gate::H, &[2], None).is_err());
        assert!(c.measure(0, 1).is_err());
        c.measure_all();
        assert_eq!(c.num_clbits, 2);
    }
}
