//! Seeded inputs shared by the criterion benches.

use qvf_core::merge::{Tensor, TensorFile};
use qvf_core::rng::Prng;

/// `count` tensors of `len` values each, uniform in [-1, 1).
pub fn tensor_file(count: usize, len: usize, seed: u64) -> TensorFile {
    let mut rng = Prng::new(seed);
    let tensors = (0..count)
        .map(|i| {
            let data = (0..len)
                .map(|_| (rng.next_f64() * 2.0 - 1.0) as f32)
                .collect();
            Tensor::new(&format!("layer.{i:03}"), vec![len], data).expect("shape matches")
        })
        .collect();
    TensorFile { tensors }
}

/// A completion of roughly `lines` lines in the reasoning-then-code layout.
pub fn completion(lines: usize) -> String {
    let body: String = (0..lines)
        .map(|i| format!("c.rz({}.{i}, {})\n", i % 7, i % 5))
        .collect();
    format!("Build the circuit then rotate each qubit.\n```qlang\nc = circuit(5)\n{body}```\n")
}
