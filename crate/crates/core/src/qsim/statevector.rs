//! Dense statevector kernel plus the sampler and estimator primitives.
//!
//! Basis index bit `q` holds qubit `q` (little-endian). Pauli labels follow
//! the same convention: the rightmost character acts on qubit 0.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Circuit, Gate, GateOp, Op, QsimError, MAX_QUBITS};
use crate::budget::Deadline;
use crate::rng::Prng;

pub type Statevector = Vec<Complex64>;

type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn base_matrix(gate: Gate, theta: Option<f64>) -> Mat2 {
    let t = theta.unwrap_or(0.0);
    let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match gate {
        Gate::X | Gate::Cx => [[ZERO, ONE], [ONE, ZERO]],
        Gate::Y => [[ZERO, -I], [I, ZERO]],
        Gate::Z | Gate::Cz => [[ONE, ZERO], [ZERO, -ONE]],
        Gate::H => [[r.into(), r.into()], [r.into(), (-r).into()]],
        Gate::S => [[ONE, ZERO], [ZERO, I]],
        Gate::Sdg => [[ONE, ZERO], [ZERO, -I]],
        Gate::T => [
            [ONE, ZERO],
            [
                ZERO,
                Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
            ],
        ],
        Gate::Tdg => [
            [ONE, ZERO],
            [
                ZERO,
                Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4),
            ],
        ],
        Gate::Rx | Gate::Crx => [
            [c.into(), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), c.into()],
        ],
        Gate::Ry | Gate::Cry => [[c.into(), (-s).into()], [s.into(), c.into()]],
        Gate::Rz | Gate::Crz => [
            [Complex64::from_polar(1.0, -t / 2.0), ZERO],
            [ZERO, Complex64::from_polar(1.0, t / 2.0)],
        ],
        Gate::Swap => unreachable!("swap has no 2x2 form"),
    }
}

fn apply_1q(state: &mut [Complex64], target: usize, m: &Mat2, control: Option<usize>) {
    let tbit = 1usize << target;
    let cmask = control.map_or(0, |c| 1usize << c);
    for i in 0..state.len() {
        if i & tbit != 0 || i & cmask != cmask {
            continue;
        }
        let j = i | tbit;
        let (a0, a1) = (state[i], state[j]);
        state[i] = m[0][0] * a0 + m[0][1] * a1;
        state[j] = m[1][0] * a0 + m[1][1] * a1;
    }
}

fn apply_swap(state: &mut [Complex64], a: usize, b: usize) {
    let (abit, bbit) = (1usize << a, 1usize << b);
    for i in 0..state.len() {
        if i & abit != 0 && i & bbit == 0 {
            state.swap(i, (i & !abit) | bbit);
        }
    }
}

/// Apply one gate in place.
pub fn apply_gate(state: &mut [Complex64], op: &GateOp) {
    match op.gate {
        Gate::Swap => apply_swap(state, op.qubits[0], op.qubits[1]),
        g if g.arity() == 2 => {
            let m = base_matrix(g, op.theta);
            apply_1q(state, op.qubits[1], &m, Some(op.qubits[0]));
        }
        g => {
            let m = base_matrix(g, op.theta);
            apply_1q(state, op.qubits[0], &m, None);
        }
    }
}

pub fn zero_state(num_qubits: usize) -> Statevector {
    let mut sv = vec![ZERO; 1 << num_qubits];
    sv[0] = ONE;
    sv
}

/// Evolve |0…0⟩ through every gate of a measurement-free circuit.
pub fn simulate(circuit: &Circuit) -> Result<Statevector, QsimError> {
    simulate_within(circuit, &Deadline::none())
}

pub fn simulate_within(circuit: &Circuit, deadline: &Deadline) -> Result<Statevector, QsimError> {
    if circuit.has_measurements() {
        return Err(QsimError::MeasurementInStatevector);
    }
    evolve(circuit, deadline)
}

fn evolve(circuit: &Circuit, deadline: &Deadline) -> Result<Statevector, QsimError> {
    if circuit.num_qubits > MAX_QUBITS {
        return Err(QsimError::TooManyQubits(circuit.num_qubits));
    }
    circuit.validate()?;
    let mut sv = zero_state(circuit.num_qubits);
    for g in circuit.gates() {
        if deadline.expired() {
            return Err(QsimError::DeadlineExceeded);
        }
        apply_gate(&mut sv, g);
    }
    Ok(sv)
}

pub fn norm(sv: &[Complex64]) -> f64 {
    sv.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub label: String,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub terms: Vec<PauliTerm>,
}

impl Observable {
    pub fn new(terms: Vec<(String, f64)>) -> Result<Self, QsimError> {
        let obs = Self {
            terms: terms
                .into_iter()
                .map(|(label, coeff)| PauliTerm { label, coeff })
                .collect(),
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        let first = self.terms.first().ok_or(QsimError::EmptyObservable)?;
        let width = first.label.len();
        for t in &self.terms {
            if let Some(bad) = t
                .label
                .chars()
                .find(|c| !matches!(c, 'I' | 'X' | 'Y' | 'Z'))
            {
                return Err(QsimError::InvalidPauli(bad));
            }
            if t.label.len() != width {
                return Err(QsimError::LabelLength {
                    expected: width,
                    got: t.label.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(QsimError::NonFinite("observable coefficient"));
            }
        }
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.terms.first().map_or(0, |t| t.label.len())
    }

    pub fn scaled(&self, alpha: f64) -> Observable {
        Observable {
            terms: self
                .terms
                .iter()
                .map(|t| PauliTerm {
                    label: t.label.clone(),
                    coeff: t.coeff * alpha,
                })
                .collect(),
        }
    }
}

/// ⟨ψ|P|ψ⟩ for one Pauli string.
pub fn pauli_expectation(sv: &[Complex64], label: &str) -> Result<f64, QsimError> {
    let n = label.len();
    let (mut flip, mut phase_mask, mut ny) = (0usize, 0usize, 0u32);
    for (pos, ch) in label.chars().enumerate() {
        let q = n - 1 - pos;
        match ch {
            'I' => {}
            'X' => flip |= 1 << q,
            'Z' => phase_mask |= 1 << q,
            'Y' => {
                flip |= 1 << q;
                phase_mask |= 1 << q;
                ny += 1;
            }
            other => return Err(QsimError::InvalidPauli(other)),
        }
    }
    // Y = i·X·Z on each factor, so P|i⟩ = i^ny · (-1)^{|i ∧ zy|} |i ⊕ flip⟩.
    let global = I.powu(ny);
    let mut acc = ZERO;
    for (i, &amp) in sv.iter().enumerate() {
        let sign = if (i & phase_mask).count_ones() % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        acc += sv[i ^ flip].conj() * amp * sign;
    }
    Ok((acc * global).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Counts,
    Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub kind: JobKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub shots: u64,
    pub seed: u64,
}

/// Draw `shots` measurement outcomes. Measurements are deferred to the end
/// of the circuit, so a gate may not touch a qubit after it was measured.
pub fn sample(circuit: &Circuit, shots: u64, seed: u64) -> Result<JobResult, QsimError> {
    sample_within(circuit, shots, seed, &Deadline::none())
}

pub fn sample_within(
    circuit: &Circuit,
    shots: u64,
    seed: u64,
    deadline: &Deadline,
) -> Result<JobResult, QsimError> {
    if shots == 0 {
        return Err(QsimError::ZeroShots);
    }
    // clbit -> qubit; a later measurement into the same clbit overwrites.
    let mut readout: BTreeMap<usize, usize> = BTreeMap::new();
    let mut measured = vec![false; circuit.num_qubits];
    for op in &circuit.ops {
        match op {
            Op::Measure { qubit, clbit } => {
                measured[*qubit] = true;
                readout.insert(*clbit, *qubit);
            }
            Op::Gate(g) => {
                if let Some(&q) = g
                    .qubits
                    .iter()
                    .find(|&&q| measured.get(q).copied().unwrap_or(false))
                {
                    return Err(QsimError::GateAfterMeasure(q));
                }
            }
        }
    }
    if readout.is_empty() {
        return Err(QsimError::NoMeasurements);
    }
    let sv = evolve(circuit, deadline)?;

    let mut cdf = Vec::with_capacity(sv.len());
    let mut running = 0.0;
    for a in &sv {
        running += a.norm_sqr();
        cdf.push(running);
    }
    let total = running;
    let last_nonzero = sv.iter().rposition(|a| a.norm_sqr() > 0.0).unwrap_or(0);

    let clbits: Vec<usize> = readout.values().rev().copied().collect();
    let mut by_index: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rng = Prng::new(seed);
    for _ in 0..shots {
        let u = rng.next_f64() * total;
        let idx = cdf.partition_point(|&c| c <= u).min(last_nonzero);
        *by_index.entry(idx).or_default() += 1;
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (idx, n) in by_index {
        let key: String = clbits
            .iter()
            .map(|&q| if (idx >> q) & 1 == 1 { '1' } else { '0' })
            .collect();
        *counts.entry(key).or_default() += n;
    }
    Ok(JobResult {
        kind: JobKind::Counts,
        counts: Some(counts),
        value: None,
        shots,
        seed,
    })
}

/// Exact expectation value Σ c_j ⟨ψ|P_j|ψ⟩.
pub fn estimate(circuit: &Circuit, observable: &Observable) -> Result<JobResult, QsimError> {
    estimate_within(circuit, observable, &Deadline::none())
}

pub fn estimate_within(
    circuit: &Circuit,
    observable: &Observable,
    deadline: &Deadline,
) -> Result<JobResult, QsimError> {
    observable.validate()?;
    if observable.num_qubits() != circuit.num_qubits {
        return Err(QsimError::LabelLength {
            expected: circuit.num_qubits,
            got: observable.num_qubits(),
        });
    }
    let sv = simulate_within(circuit, deadline)?;
    let mut value = 0.0;
    for term in &observable.terms {
        value += term.coeff * pauli_expectation(&sv, &term.label)?;
    }
    if !value.is_finite() {
        return Err(QsimError::NonFinite("expectation value"));
    }
    Ok(JobResult {
        kind: JobKind::Expectation,
        counts: None,
        value: Some(value),
        shots: 0,
        seed: 0,
    })
}
