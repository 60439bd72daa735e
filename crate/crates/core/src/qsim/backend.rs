use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Gate, QsimError};

/// A fake device: qubit count, undirected coupling map, basis gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backend {
    pub id: String,
    pub num_qubits: usize,
    /// Undirected edges, stored with the smaller index first.
    pub coupling_map: BTreeSet<(usize, usize)>,
    pub basis_gates: BTreeSet<Gate>,
}

impl Backend {
    pub fn new(id: &str, num_qubits: usize, edges: &[(usize, usize)]) -> Result<Self, QsimError> {
        let backend = Self {
            id: id.to_string(),
            num_qubits,
            coupling_map: edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect(),
            basis_gates: Gate::ALL.into_iter().collect(),
        };
        backend.validate()?;
        Ok(backend)
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        for &(a, b) in &self.coupling_map {
            if a >= self.num_qubits || b >= self.num_qubits || a == b {
                return Err(QsimError::BadCouplingEdge(a, b));
            }
        }
        if !self.is_connected() {
            return Err(QsimError::Disconnected(self.id.clone()));
        }
        Ok(())
    }

    pub fn are_coupled(&self, a: usize, b: usize) -> bool {
        self.coupling_map.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, q: usize) -> impl Iterator<Item = usize> + '_ {
        self.coupling_map.iter().filter_map(move |&(a, b)| {
            if a == q {
                Some(b)
            } else if b == q {
                Some(a)
            } else {
                None
            }
        })
    }

    pub fn is_connected(&self) -> bool {
        if self.num_qubits == 0 {
            return false;
        }
        let mut seen = vec![false; self.num_qubits];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(q) = queue.pop_front() {
            for n in self.neighbors(q) {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// BFS shortest path from `from` to `to`, inclusive of both ends. Ties
    /// resolve toward lower-index neighbours.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.num_qubits];
        let mut seen = vec![false; self.num_qubits];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(q) = queue.pop_front() {
            if q == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            let mut ns: Vec<usize> = self.neighbors(q).collect();
            ns.sort_unstable();
            for n in ns {
                if !seen[n] {
                    seen[n] = true;
                    prev[n] = q;
                    queue.push_back(n);
                }
            }
        }
        None
    }
}

/// Built-in devices standing in for named hardware.
pub fn backend_registry() -> Vec<Backend> {
    let ring: Vec<(usize, usize)> = (0..8).map(|i| (i, (i + 1) % 8)).collect();
    vec![
        Backend::new("line5", 5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).expect("line5 fixture"),
        Backend::new("tee5", 5, &[(0, 1), (1, 2), (1, 3), (3, 4)]).expect("tee5 fixture"),
        Backend::new("ring8", 8, &ring).expect("ring8 fixture"),
    ]
}

pub fn lookup_backend(id: &str) -> Result<Backend, QsimError> {
    backend_registry()
        .into_iter()
        .find(|b| b.id == id)
        .ok_or_else(|| QsimError::UnknownBackend(id.to_string()))
}
