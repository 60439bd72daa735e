//! Routing-only transpilation.
//!
//! Level 0 maps the circuit onto the device with a trivial initial layout and
//! greedy SWAP insertion along shortest paths. Level 1 and above additionally
//! cancel adjacent inverse gate pairs; levels 2 and 3 do nothing further.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Backend, Circuit, Gate, GateOp, Op, QsimError};

pub const MAX_LEVEL: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedCircuit {
    pub circuit: Circuit,
    /// `final_layout[v]` is the physical qubit holding virtual qubit `v` once
    /// the routed circuit has run.
    pub final_layout: Vec<usize>,
    pub level: u8,
    pub backend_id: String,
}

impl RoutedCircuit {
    /// Check every two-qubit gate against the device's coupling map.
    pub fn respects(&self, backend: &Backend) -> bool {
        self.circuit
            .gates()
            .filter(|g| g.gate.arity() == 2)
            .all(|g| backend.are_coupled(g.qubits[0], g.qubits[1]))
    }
}

pub fn transpile(
    circuit: &Circuit,
    backend: &Backend,
    level: u8,
) -> Result<RoutedCircuit, QsimError> {
    if level > MAX_LEVEL {
        return Err(QsimError::BadLevel(level));
    }
    if circuit.num_qubits > backend.num_qubits {
        return Err(QsimError::CircuitTooLarge {
            circuit: circuit.num_qubits,
            backend: backend.num_qubits,
        });
    }
    backend.validate()?;
    circuit.validate()?;

    let n = backend.num_qubits;
    // layout[v] = physical, inverse[p] = virtual
    let mut layout: Vec<usize> = (0..n).collect();
    let mut inverse: Vec<usize> = (0..n).collect();
    let mut ops: Vec<Op> = Vec::with_capacity(circuit.ops.len());

    for op in &circuit.ops {
        match op {
            Op::Measure { qubit, clbit } => ops.push(Op::Measure {
                qubit: layout[*qubit],
                clbit: *clbit,
            }),
            Op::Gate(g) if g.gate.arity() == 1 => ops.push(Op::Gate(GateOp {
                gate: g.gate,
                qubits: vec![layout[g.qubits[0]]],
                theta: g.theta,
            })),
            Op::Gate(g) => {
                let (v0, v1) = (g.qubits[0], g.qubits[1]);
                if !backend.are_coupled(layout[v0], layout[v1]) {
                    let path = backend
                        .shortest_path(layout[v0], layout[v1])
                        .ok_or_else(|| QsimError::Disconnected(backend.id.clone()))?;
                    for w in path[..path.len() - 1].windows(2) {
                        let (pa, pb) = (w[0], w[1]);
                        ops.push(Op::Gate(GateOp {
                            gate: Gate::Swap,
                            qubits: vec![pa, pb],
                            theta: None,
                        }));
                        let (va, vb) = (inverse[pa], inverse[pb]);
                        inverse.swap(pa, pb);
                        layout[va] = pb;
                        layout[vb] = pa;
                    }
                }
                ops.push(Op::Gate(GateOp {
                    gate: g.gate,
                    qubits: vec![layout[v0], layout[v1]],
                    theta: g.theta,
                }));
            }
        }
    }

    if level >= 1 {
        ops = cancel_inverse_pairs(ops, n);
    }

    Ok(RoutedCircuit {
        circuit: Circuit {
            name: circuit.name.clone(),
            num_qubits: n,
            num_clbits: circuit.num_clbits,
            ops,
        },
        final_layout: layout,
        level,
        backend_id: backend.id.clone(),
    })
}

fn is_inverse_pair(a: &GateOp, b: &GateOp) -> bool {
    let same_wires = a.qubits == b.qubits
        || (a.gate.is_symmetric()
            && a.qubits.len() == 2
            && a.qubits[0] == b.qubits[1]
            && a.qubits[1] == b.qubits[0]);
    if !same_wires {
        return false;
    }
    let (inv_gate, inv_theta) = a.gate.inverse(a.theta);
    if inv_gate != b.gate {
        return false;
    }
    match (inv_theta, b.theta) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    }
}

/// Remove gate pairs `G; G⁻¹` with nothing in between on their wires.
/// Cancellations cascade, so `X H H X` vanishes entirely.
fn cancel_inverse_pairs(ops: Vec<Op>, num_qubits: usize) -> Vec<Op> {
    let mut kept: Vec<Option<Op>> = Vec::with_capacity(ops.len());
    // Per-wire stack of indices into `kept` for ops still alive.
    let mut wires: Vec<Vec<usize>> = vec![Vec::new(); num_qubits];

    for op in ops {
        if let Op::Gate(g) = &op {
            let tops: Vec<Option<usize>> =
                g.qubits.iter().map(|&q| wires[q].last().copied()).collect();
            if let Some(Some(k)) = tops.first() {
                let k = *k;
                let all_same = tops.iter().all(|t| *t == Some(k));
                if all_same {
                    if let Some(Op::Gate(prev)) = &kept[k] {
                        if prev.qubits.len() == g.qubits.len() && is_inverse_pair(prev, g) {
                            for &q in &prev.qubits {
                                wires[q].pop();
                            }
                            kept[k] = None;
                            continue;
                        }
                    }
                }
            }
        }
        let idx = kept.len();
        for &q in op.qubits() {
            wires[q].push(idx);
        }
        kept.push(Some(op));
    }
    kept.into_iter().flatten().collect()
}

/// Reorder a routed statevector back into virtual-qubit order.
pub fn unpermute(routed: &[Complex64], final_layout: &[usize]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); routed.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let j = final_layout
            .iter()
            .enumerate()
            .fold(0usize, |acc, (v, &p)| acc | (((i >> v) & 1) << p));
        *slot = routed[j];
    }
    out
}
