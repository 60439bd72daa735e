//! Source-level mutation operators that stand in for model mistakes.

use serde::{Deserialize, Serialize};

use crate::qlang::{Angle, Statement};
use crate::qsim::Gate;
use crate::rng::Prng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    /// M1: scale one gate angle by 0.5 or 2.0.
    PerturbAngle,
    /// M2: exchange the qubit arguments of a two-qubit gate.
    SwapQubitArgs,
    /// M3: replace a gate with a different one of the same shape.
    SubstituteGate,
    /// M4: drop one statement.
    DeleteStatement,
    /// M5: rename a binding and every reference to it.
    RenameBinding,
    /// M6: change a transpile optimization level.
    ChangeTranspileLevel,
}

impl MutationOp {
    pub const ALL: [MutationOp; 6] = [
        MutationOp::PerturbAngle,
        MutationOp::SwapQubitArgs,
        MutationOp::SubstituteGate,
        MutationOp::DeleteStatement,
        MutationOp::RenameBinding,
        MutationOp::ChangeTranspileLevel,
    ];

    fn targets(self, stmts: &[Statement]) -> Vec<usize> {
        stmts
            .iter()
            .enumerate()
            .filter(|(_, s)| match (self, s) {
                (MutationOp::PerturbAngle, Statement::Gate { theta, .. }) => {
                    theta.is_some_and(|t| t.radians() != 0.0)
                }
                (MutationOp::SwapQubitArgs, Statement::Gate { qubits, .. }) => qubits.len() == 2,
                (MutationOp::SubstituteGate, Statement::Gate { .. }) => true,
                (MutationOp::DeleteStatement, _) => true,
                (MutationOp::RenameBinding, s) => s.binding().is_some(),
                (MutationOp::ChangeTranspileLevel, Statement::Transpile { .. }) => true,
                _ => false,
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn applicable(self, stmts: &[Statement]) -> bool {
        !self.targets(stmts).is_empty()
    }

    /// Apply to one randomly chosen target. Returns false when nothing fits.
    pub fn apply(self, stmts: &mut Vec<Statement>, rng: &mut Prng) -> bool {
        let targets = self.targets(stmts);
        if targets.is_empty() {
            return false;
        }
        let i = *rng.choose(&targets);
        match self {
            MutationOp::PerturbAngle => {
                if let Statement::Gate { theta: Some(t), .. } = &mut stmts[i] {
                    let factor = *rng.choose(&[0.5, 2.0]);
                    *t = Angle::Literal(t.radians() * factor);
                }
            }
            MutationOp::SwapQubitArgs => {
                if let Statement::Gate { qubits, .. } = &mut stmts[i] {
                    qubits.swap(0, 1);
                }
            }
            MutationOp::SubstituteGate => {
                if let Statement::Gate { gate, .. } = &mut stmts[i] {
                    let class = same_shape(*gate);
                    let others: Vec<Gate> = class.iter().copied().filter(|g| g != gate).collect();
                    *gate = *rng.choose(&others);
                }
            }
            MutationOp::DeleteStatement => {
                stmts.remove(i);
            }
            MutationOp::RenameBinding => {
                let old = stmts[i]
                    .binding()
                    .expect("target has a binding")
                    .to_string();
                let mut new = format!("{old}_v2");
                while stmts.iter().any(|s| s.binding() == Some(new.as_str())) {
                    new.push('x');
                }
                for s in stmts.iter_mut() {
                    for name in s.names_mut() {
                        if *name == old {
                            *name = new.clone();
                        }
                    }
                }
            }
            MutationOp::ChangeTranspileLevel => {
                if let Statement::Transpile { level, .. } = &mut stmts[i] {
                    *level = (*level + 1 + rng.index(3) as u8) % 4;
                }
            }
        }
        true
    }
}

fn same_shape(g: Gate) -> &'static [Gate] {
    match g {
        Gate::Rx | Gate::Ry | Gate::Rz => &[Gate::Rx, Gate::Ry, Gate::Rz],
        Gate::Crx | Gate::Cry | Gate::Crz => &[Gate::Crx, Gate::Cry, Gate::Crz],
        Gate::Cx | Gate::Cz | Gate::Swap => &[Gate::Cx, Gate::Cz, Gate::Swap],
        _ => &[
            Gate::X,
            Gate::Y,
            Gate::Z,
            Gate::H,
            Gate::S,
            Gate::Sdg,
            Gate::T,
            Gate::Tdg,
        ],
    }
}

/// Operators chosen for one mutated candidate (one or two of them).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationPlan {
    pub operators: Vec<MutationOp>,
    pub seed: u64,
}

impl MutationPlan {
    /// Draw 1-2 operators from `allowed` that apply to `stmts`.
    pub fn draw(
        allowed: &[MutationOp],
        stmts: &[Statement],
        rng: &mut Prng,
    ) -> Option<MutationPlan> {
        let mut pool: Vec<MutationOp> = allowed
            .iter()
            .copied()
            .filter(|op| op.applicable(stmts))
            .collect();
        if pool.is_empty() {
            return None;
        }
        let seed = rng.next_u64();
        let count = if pool.len() > 1 && rng.bernoulli(0.5) {
            2
        } else {
            1
        };
        rng.shuffle(&mut pool);
        pool.truncate(count);
        Some(MutationPlan {
            operators: pool,
            seed,
        })
    }

    /// Apply in order; returns the operators that actually changed something.
    pub fn apply(&self, stmts: &mut Vec<Statement>) -> Vec<MutationOp> {
        let mut rng = Prng::new(self.seed);
        self.operators
            .iter()
            .copied()
            .filter(|op| op.apply(stmts, &mut rng))
            .collect()
    }
}
