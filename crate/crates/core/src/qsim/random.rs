use std::f64::consts::TAU;

use super::{Circuit, Gate, QsimError};
use crate::rng::Prng;

/// Seeded layered random circuit.
///
/// Each layer shuffles the qubits and pairs neighbours in the shuffled order.
/// A pair gets a CX with probability 1/2, otherwise one single-qubit gate per
/// qubit drawn from {h, x, rz(θ ~ U[0, 2π))}. An odd qubit out gets one
/// single-qubit gate.
pub fn random_circuit(
    name: &str,
    num_qubits: usize,
    depth: usize,
    seed: u64,
    measure: bool,
) -> Result<Circuit, QsimError> {
    let num_clbits = if measure { num_qubits } else { 0 };
    let mut circuit = Circuit::new(name, num_qubits, num_clbits)?;
    let mut rng = Prng::new(seed);
    let mut order: Vec<usize> = (0..num_qubits).collect();

    let single = |rng: &mut Prng, c: &mut Circuit, q: usize| -> Result<(), QsimError> {
        match rng.index(3) {
            0 => c.gate(Gate::H, &[q], None),
            1 => c.gate(Gate::X, &[q], None),
            _ => {
                let theta = rng.next_f64() * TAU;
                c.gate(Gate::Rz, &[q], Some(theta))
            }
        }
    };

    for _ in 0..depth {
        rng.shuffle(&mut order);
        for pair in order.chunks(2) {
            match *pair {
                [a, b] => {
                    if rng.bernoulli(0.5) {
                        circuit.gate(Gate::Cx, &[a, b], None)?;
                    } else {
                        single(&mut rng, &mut circuit, a)?;
                        single(&mut rng, &mut circuit, b)?;
                    }
                }
                [a] => single(&mut rng, &mut circuit, a)?,
                _ => unreachable!(),
            }
        }
    }
    if measure {
        for q in 0..num_qubits {
            circuit.measure(q, q)?;
        }
    }
    Ok(circuit)
}
