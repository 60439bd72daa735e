//! Core library for the quantum-verified post-training data pipeline.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod budget;
pub mod candidates;
pub mod evalkit;
pub mod http;
pub mod io;
pub mod loopback;
pub mod merge;
pub mod qlang;
pub mod qsim;
pub mod rng;
pub mod sandbox;
pub mod synth;
pub mod verify;
