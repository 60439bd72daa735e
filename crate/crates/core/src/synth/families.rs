use std::collections::BTreeMap;

use super::SynthError;
use crate::qlang::{Angle, Statement, ValueKind};
use crate::qsim::{backend_registry, estimate, Circuit, Gate, Observable};
use crate::rng::Prng;
use crate::verify::{Assertion, Check};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// Build a circuit with one controlled gate, then transpile it.
    CircuitBuild,
    /// Seeded random circuit, then transpile it.
    RandomTranspile,
    /// Prepare a state and run the estimator on a Pauli observable.
    Estimator,
    /// Bell or GHZ state measured through the sampler.
    BellSampler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotSpec {
    pub name: &'static str,
    pub domain: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateFamily {
    pub kind: FamilyKind,
    pub template_id: &'static str,
    pub prompt_template: &'static str,
    pub slots: &'static [SlotSpec],
    pub requires_runtime: bool,
    /// Share of the dataset cycle this family occupies.
    pub weight: usize,
}

pub(super) struct Draft {
    pub prompt: String,
    pub reference: Vec<Statement>,
    pub assertions: Vec<Assertion>,
}

const T1_SLOTS: &[SlotSpec] = &[
    SlotSpec {
        name: "name",
        domain: "{qc, circ, qc_main, my_circuit}",
    },
    SlotSpec {
        name: "n",
        domain: "2..=5",
    },
    SlotSpec {
        name: "gate",
        domain: "{crx, cry, crz, cx, cz}",
    },
    SlotSpec {
        name: "a",
        domain: "0..n",
    },
    SlotSpec {
        name: "b",
        domain: "0..n, != a",
    },
    SlotSpec {
        name: "theta_clause",
        domain: "angle from a fixed list, empty for cx/cz",
    },
    SlotSpec {
        name: "backend",
        domain: "backend registry ids",
    },
    SlotSpec {
        name: "bvar",
        domain: "{backend, dev, b}",
    },
    SlotSpec {
        name: "level",
        domain: "0..=3",
    },
    SlotSpec {
        name: "routed",
        domain: "{pm, routed, transpiled}",
    },
];

const T2_SLOTS: &[SlotSpec] = &[
    SlotSpec {
        name: "name",
        domain: "{rand_circ, rc, random_qc}",
    },
    SlotSpec {
        name: "n",
        domain: "2..=5",
    },
    SlotSpec {
        name: "depth",
        domain: "1..=4",
    },
    SlotSpec {
        name: "measure",
        domain: "{True, False}",
    },
    SlotSpec {
        name: "circ_seed",
        domain: "0..100",
    },
    SlotSpec {
        name: "backend",
        domain: "backend registry ids",
    },
    SlotSpec {
        name: "bvar",
        domain: "{backend, dev, b}",
    },
    SlotSpec {
        name: "level",
        domain: "0..=3",
    },
    SlotSpec {
        name: "routed",
        domain: "{pm, routed, transpiled}",
    },
];

const T3_SLOTS: &[SlotSpec] = &[
    SlotSpec {
        name: "qc",
        domain: "{qc, circuit, state}",
    },
    SlotSpec {
        name: "n",
        domain: "2..=5",
    },
    SlotSpec {
        name: "prep",
        domain: "one of {h, x, s, ry(angle)} per qubit, then cx 0->1",
    },
    SlotSpec {
        name: "obs",
        domain: "{observable, obs, op}",
    },
    SlotSpec {
        name: "k",
        domain: "2..=3",
    },
    SlotSpec {
        name: "labels",
        domain: "random strings over IXYZ of length n",
    },
    SlotSpec {
        name: "coeffs",
        domain: "{1, -1, 0.5, -0.5, 2}",
    },
    SlotSpec {
        name: "job",
        domain: "{job, est_job}",
    },
];

const T4_SLOTS: &[SlotSpec] = &[
    SlotSpec {
        name: "state",
        domain: "Bell for n=2, GHZ otherwise",
    },
    SlotSpec {
        name: "name",
        domain: "{bell, ghz, qc}",
    },
    SlotSpec {
        name: "n",
        domain: "2..=4",
    },
    SlotSpec {
        name: "shots",
        domain: "{128, 256, 512, 1024}",
    },
    SlotSpec {
        name: "seed",
        domain: "0..1000",
    },
    SlotSpec {
        name: "job",
        domain: "{job, result, counts_job}",
    },
];

/// The built-in families. Runtime-bearing families carry weight 1 of 20 each,
/// so one task in ten needs a runtime primitive.
pub fn builtin_families() -> Vec<TemplateFamily> {
    vec![
        TemplateFamily {
            kind: FamilyKind::CircuitBuild,
            template_id: "T1-circuit-build/1",
            prompt_template: "Design a circuit named {name} that has {n} quantum bits & {n} classical bits. \
Then insert {gate} gate between qubits {a} and {b}{theta_clause}. \
Next, load the {backend} backend into a variable named {bvar}. \
Also, it should work with an optimization level {level}. \
Now use it to transpile the circuit and call the result {routed}.",
            slots: T1_SLOTS,
            requires_runtime: false,
            weight: 9,
        },
        TemplateFamily {
            kind: FamilyKind::RandomTranspile,
            template_id: "T2-random-transpile/1",
            prompt_template: "Construct a random circuit called {name} with {n} qbits and of depth {depth}. \
Also set measure to {measure}. Remember to set its seed to {circ_seed}. \
Once the circuit has been created load the {backend} backend as {bvar}. \
Also it should be using optimization level {level}. \
Finally use it to transpile the circuit into {routed}.",
            slots: T2_SLOTS,
            requires_runtime: false,
            weight: 9,
        },
        TemplateFamily {
            kind: FamilyKind::Estimator,
            template_id: "T3-estimator/1",
            prompt_template: "Create a quantum circuit {qc} with {n} qubits and apply {prep}. \
Define the observables in a variable named {obs} using {k} Pauli matrices with the following labels {labels}, \
and set the coefficients to {coeffs}. \
Finally, run the estimator on the circuit and the observable, the job should be called {job}.",
            slots: T3_SLOTS,
            requires_runtime: true,
            weight: 1,
        },
        TemplateFamily {
            kind: FamilyKind::BellSampler,
            template_id: "T4-bell-sampler/1",
            prompt_template: "Create a {state} circuit named {name} on {n} qubits and measure all qubits. \
Then execute the circuit with the sampler primitive using {shots} shots and seed {seed}. \
The job should be called {job}.",
            slots: T4_SLOTS,
            requires_runtime: true,
            weight: 1,
        },
    ]
}

fn fill(
    template_id: &str,
    template: &str,
    slots: &BTreeMap<&str, String>,
) -> Result<String, SynthError> {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    if let Some(start) = out.find('{') {
        let end = out[start..].find('}').map_or(out.len(), |e| start + e);
        return Err(SynthError::UnfilledSlot {
            template_id: template_id.to_string(),
            slot: out[start + 1..end].to_string(),
        });
    }
    Ok(out)
}

const ANGLES: &[Angle] = &[
    Angle::Literal(0.25),
    Angle::Literal(0.5),
    Angle::Literal(0.75),
    Angle::Literal(1.0),
    Angle::Literal(1.25),
    Angle::Literal(1.5),
    Angle::Literal(2.0),
    Angle::Pi {
        negative: false,
        divisor: 2,
    },
    Angle::Pi {
        negative: false,
        divisor: 3,
    },
    Angle::Pi {
        negative: false,
        divisor: 4,
    },
];

fn pick<'a>(rng: &mut Prng, items: &[&'a str]) -> &'a str {
    items[rng.index(items.len())]
}

fn range(rng: &mut Prng, lo: usize, hi_inclusive: usize) -> usize {
    lo + rng.index(hi_inclusive - lo + 1)
}

fn exists(var: &str) -> Assertion {
    Assertion::new(
        format!("{var}_exists"),
        Check::VarExists {
            var: var.to_string(),
        },
    )
}

fn kind_is(var: &str, expected: ValueKind) -> Assertion {
    Assertion::new(
        format!("{var}_is_{expected}"),
        Check::VarKind {
            var: var.to_string(),
            expected,
        },
    )
}

fn routing_checks(bvar: &str, routed: &str, backend: &str, level: u8) -> Vec<Assertion> {
    vec![
        exists(bvar),
        kind_is(bvar, ValueKind::Backend),
        exists(routed),
        Assertion::new(
            format!("{routed}_respects_{backend}"),
            Check::RoutedRespectsCoupling {
                var: routed.to_string(),
                backend: backend.to_string(),
            },
        ),
        Assertion::new(
            format!("{routed}_level"),
            Check::RoutedLevel {
                var: routed.to_string(),
                level,
            },
        ),
    ]
}

fn gate_stmt(gate: Gate, circuit: &str, qubits: Vec<usize>, theta: Option<Angle>) -> Statement {
    Statement::Gate {
        gate,
        circuit: circuit.to_string(),
        qubits,
        theta,
    }
}

impl TemplateFamily {
    pub fn short_name(&self) -> &'static str {
        match self.kind {
            FamilyKind::CircuitBuild => "t1",
            FamilyKind::RandomTranspile => "t2",
            FamilyKind::Estimator => "t3",
            FamilyKind::BellSampler => "t4",
        }
    }

    pub(super) fn draw(&self, seed: u64) -> Result<Draft, SynthError> {
        let mut rng = Prng::new(seed);
        let (slots, reference, assertions) = match self.kind {
            FamilyKind::CircuitBuild => draw_circuit_build(&mut rng),
            FamilyKind::RandomTranspile => draw_random_transpile(&mut rng),
            FamilyKind::Estimator => draw_estimator(&mut rng),
            FamilyKind::BellSampler => draw_bell_sampler(&mut rng),
        };
        Ok(Draft {
            prompt: fill(self.template_id, self.prompt_template, &slots)?,
            reference,
            assertions,
        })
    }
}

type Drawn = (
    BTreeMap<&'static str, String>,
    Vec<Statement>,
    Vec<Assertion>,
);

fn draw_backend(rng: &mut Prng) -> (String, usize) {
    let reg = backend_registry();
    let b = &reg[rng.index(reg.len())];
    (b.id.clone(), b.num_qubits)
}

fn draw_circuit_build(rng: &mut Prng) -> Drawn {
    let name = pick(rng, &["qc", "circ", "qc_main", "my_circuit"]);
    let n = range(rng, 2, 5);
    let gate = *rng.choose(&[Gate::Crx, Gate::Cry, Gate::Crz, Gate::Cx, Gate::Cz]);
    let a = rng.index(n);
    let b = (a + 1 + rng.index(n - 1)) % n;
    let theta = gate.is_parametric().then(|| *rng.choose(ANGLES));
    let (backend, _) = draw_backend(rng);
    let bvar = pick(rng, &["backend", "dev", "b"]);
    let level = rng.index(4) as u8;
    let routed = pick(rng, &["pm", "routed", "transpiled"]);

    let gate_phrase = match gate {
        Gate::Crx => "controlled-rx",
        Gate::Cry => "controlled-ry",
        Gate::Crz => "controlled-rz",
        Gate::Cx => "controlled-x",
        _ => "controlled-z",
    };
    let slots = BTreeMap::from([
        ("name", name.to_string()),
        ("n", n.to_string()),
        ("gate", gate_phrase.to_string()),
        ("a", a.to_string()),
        ("b", b.to_string()),
        (
            "theta_clause",
            theta.map_or(String::new(), |t| {
                format!(", and set the gate parameters to theta={t}")
            }),
        ),
        ("backend", backend.clone()),
        ("bvar", bvar.to_string()),
        ("level", level.to_string()),
        ("routed", routed.to_string()),
    ]);
    let reference = vec![
        Statement::Circuit {
            name: name.to_string(),
            num_qubits: n,
            num_clbits: n,
        },
        gate_stmt(gate, name, vec![a, b], theta),
        Statement::Backend {
            name: bvar.to_string(),
            backend_id: backend.clone(),
        },
        Statement::Transpile {
            out: routed.to_string(),
            circuit: name.to_string(),
            backend: bvar.to_string(),
            level,
        },
    ];
    let mut assertions = vec![
        exists(name),
        kind_is(name, ValueKind::Circuit),
        Assertion::new(
            format!("{name}_num_qubits"),
            Check::CircuitNumQubits {
                var: name.to_string(),
                expected: n,
            },
        ),
        Assertion::new(
            format!("{name}_num_clbits"),
            Check::CircuitNumClbits {
                var: name.to_string(),
                expected: n,
            },
        ),
        Assertion::new(
            format!("{name}_has_{gate}"),
            Check::CircuitHasGate {
                var: name.to_string(),
                gate,
                qubits: vec![a, b],
                theta: theta.map(Angle::radians),
                tol: 1e-9,
            },
        ),
    ];
    assertions.extend(routing_checks(bvar, routed, &backend, level));
    (slots, reference, assertions)
}

fn draw_random_transpile(rng: &mut Prng) -> Drawn {
    let name = pick(rng, &["rand_circ", "rc", "random_qc"]);
    let (backend, width) = draw_backend(rng);
    let n = range(rng, 2, width.min(5));
    let depth = range(rng, 1, 4);
    let measure = rng.bernoulli(0.5);
    let circ_seed = rng.below(100);
    let bvar = pick(rng, &["backend", "dev", "b"]);
    let level = rng.index(4) as u8;
    let routed = pick(rng, &["pm", "routed", "transpiled"]);

    let slots = BTreeMap::from([
        ("name", name.to_string()),
        ("n", n.to_string()),
        ("depth", depth.to_string()),
        (
            "measure",
            if measure { "True" } else { "False" }.to_string(),
        ),
        ("circ_seed", circ_seed.to_string()),
        ("backend", backend.clone()),
        ("bvar", bvar.to_string()),
        ("level", level.to_string()),
        ("routed", routed.to_string()),
    ]);
    let reference = vec![
        Statement::RandomCircuit {
            name: name.to_string(),
            num_qubits: n,
            depth,
            seed: circ_seed,
            measure,
        },
        Statement::Backend {
            name: bvar.to_string(),
            backend_id: backend.clone(),
        },
        Statement::Transpile {
            out: routed.to_string(),
            circuit: name.to_string(),
            backend: bvar.to_string(),
            level,
        },
    ];
    let mut assertions = vec![
        exists(name),
        kind_is(name, ValueKind::Circuit),
        Assertion::new(
            format!("{name}_num_qubits"),
            Check::CircuitNumQubits {
                var: name.to_string(),
                expected: n,
            },
        ),
        Assertion::new(
            format!("{name}_num_clbits"),
            Check::CircuitNumClbits {
                var: name.to_string(),
                expected: if measure { n } else { 0 },
            },
        ),
    ];
    assertions.extend(routing_checks(bvar, routed, &backend, level));
    (slots, reference, assertions)
}

fn draw_estimator(rng: &mut Prng) -> Drawn {
    let qc = pick(rng, &["qc", "circuit", "state"]);
    let n = range(rng, 2, 5);
    let obs = pick(rng, &["observable", "obs", "op"]);
    let job = pick(rng, &["job", "est_job"]);
    let k = range(rng, 2, 3);

    let mut reference = vec![Statement::Circuit {
        name: qc.to_string(),
        num_qubits: n,
        num_clbits: 0,
    }];
    let mut prep = Vec::new();
    for q in 0..n {
        let (stmt, text) = match rng.index(4) {
            0 => (
                gate_stmt(Gate::H, qc, vec![q], None),
                format!("h on qubit {q}"),
            ),
            1 => (
                gate_stmt(Gate::X, qc, vec![q], None),
                format!("x on qubit {q}"),
            ),
            2 => (
                gate_stmt(Gate::S, qc, vec![q], None),
                format!("s on qubit {q}"),
            ),
            _ => {
                let t = *rng.choose(ANGLES);
                (
                    gate_stmt(Gate::Ry, qc, vec![q], Some(t)),
                    format!("ry({t}) on qubit {q}"),
                )
            }
        };
        reference.push(stmt);
        prep.push(text);
    }
    reference.push(gate_stmt(Gate::Cx, qc, vec![0, 1], None));
    prep.push("then a cx from qubit 0 to qubit 1".to_string());

    let paulis = ['I', 'X', 'Y', 'Z'];
    let labels: Vec<String> = (0..k)
        .map(|_| (0..n).map(|_| paulis[rng.index(4)]).collect())
        .collect();
    let coeffs: Vec<f64> = (0..k)
        .map(|_| *rng.choose(&[1.0, -1.0, 0.5, -0.5, 2.0]))
        .collect();
    reference.push(Statement::Observable {
        name: obs.to_string(),
        terms: labels.iter().cloned().zip(coeffs.iter().copied()).collect(),
    });
    reference.push(Statement::Estimator {
        job: job.to_string(),
        circuit: qc.to_string(),
        observable: obs.to_string(),
    });

    // Test engine: expected value straight from the simulator.
    let mut circuit = Circuit::new(qc, n, 0).expect("n within cap");
    for stmt in &reference {
        if let Statement::Gate {
            gate,
            qubits,
            theta,
            ..
        } = stmt
        {
            circuit
                .gate(*gate, qubits, theta.map(Angle::radians))
                .expect("template gates are valid");
        }
    }
    let observable = Observable::new(labels.iter().cloned().zip(coeffs.iter().copied()).collect())
        .expect("valid observable");
    let expected = estimate(&circuit, &observable)
        .expect("estimator on template circuit")
        .value
        .expect("expectation job");

    let fmt_list = |xs: Vec<String>| xs.join(",");
    let slots = BTreeMap::from([
        ("qc", qc.to_string()),
        ("n", n.to_string()),
        ("prep", prep.join(", ")),
        ("obs", obs.to_string()),
        ("k", k.to_string()),
        ("labels", fmt_list(labels.clone())),
        (
            "coeffs",
            fmt_list(coeffs.iter().map(|c| c.to_string()).collect()),
        ),
        ("job", job.to_string()),
    ]);
    let assertions = vec![
        exists(qc),
        Assertion::new(
            format!("{qc}_num_qubits"),
            Check::CircuitNumQubits {
                var: qc.to_string(),
                expected: n,
            },
        ),
        Assertion::new(
            format!("{obs}_terms"),
            Check::ObservableTerms {
                var: obs.to_string(),
                labels,
                coeffs,
                tol: 1e-9,
            },
        ),
        exists(job),
        kind_is(job, ValueKind::Job),
        Assertion::new(
            format!("{job}_value"),
            Check::ExpectationClose {
                var: job.to_string(),
                value: expected,
                tol: 1e-9,
            },
        ),
    ];
    (slots, reference, assertions)
}

fn draw_bell_sampler(rng: &mut Prng) -> Drawn {
    let n = range(rng, 2, 4);
    let name = pick(rng, &["bell", "ghz", "qc"]);
    let shots = *rng.choose(&[128u64, 256, 512, 1024]);
    let seed = rng.below(1000);
    let job = pick(rng, &["job", "result", "counts_job"]);
    let state = if n == 2 { "Bell" } else { "GHZ" };

    let mut reference = vec![
        Statement::Circuit {
            name: name.to_string(),
            num_qubits: n,
            num_clbits: n,
        },
        gate_stmt(Gate::H, name, vec![0], None),
    ];
    for q in 0..n - 1 {
        reference.push(gate_stmt(Gate::Cx, name, vec![q, q + 1], None));
    }
    reference.push(Statement::MeasureAll {
        circuit: name.to_string(),
    });
    reference.push(Statement::Sampler {
        job: job.to_string(),
        circuit: name.to_string(),
        shots,
        seed,
    });

    let slots = BTreeMap::from([
        ("state", state.to_string()),
        ("name", name.to_string()),
        ("n", n.to_string()),
        ("shots", shots.to_string()),
        ("seed", seed.to_string()),
        ("job", job.to_string()),
    ]);
    let assertions = vec![
        exists(name),
        Assertion::new(
            format!("{name}_num_qubits"),
            Check::CircuitNumQubits {
                var: name.to_string(),
                expected: n,
            },
        ),
        Assertion::new(
            format!("{name}_has_h"),
            Check::CircuitHasGate {
                var: name.to_string(),
                gate: Gate::H,
                qubits: vec![0],
                theta: None,
                tol: 1e-9,
            },
        ),
        kind_is(job, ValueKind::Job),
        Assertion::new(
            format!("{job}_shots"),
            Check::CountsTotal {
                var: job.to_string(),
                shots,
            },
        ),
        Assertion::new(
            format!("{job}_outcomes"),
            Check::CountsKeysSubset {
                var: job.to_string(),
                allowed: vec!["0".repeat(n), "1".repeat(n)],
            },
        ),
    ];
    (slots, reference, assertions)
}
