// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Composite-pulse synthesis and validation for addressed single-qubit gates.
//!
//! Several ions sit in one microwave field and cannot be driven separately.
//! What distinguishes them is the drive amplitude each one sees, so a train
//! of global pulses with well-chosen amplitudes and phases can still realize
//! an independent rotation on every ion at once. This crate synthesizes such
//! pulse trains, simulates them on noisy qubits, benchmarks them with
//! randomized Clifford sequences, and closes the calibration loops an
//! experiment needs to keep them working.
//!
//! Module map:
//!
//! * [`rotor`]: unit-quaternion rotation algebra, target gates, and the
//!   single-qubit Clifford table.
//! * [`synth`]: pulse-train synthesis by damped least squares, plus the
//!   phase-shift orbit structure that collapses the gate-pair library.
//! * [`qsim`]: density-operator simulation of driven qubits with dephasing,
//!   leakage, spectator levels, a.c. Zeeman shifts, and motion.
//! * [`bench`]: randomized benchmarking sequence generation, compilation to
//!   pulses, and exponential-decay fitting.
//! * [`calib`]: amplitude / detuning / Zeeman-compensation calibration,
//!   sequence acceptance loops, and drift monitoring.
//! * [`cli`]: the batch experiment runner behind the `compulse` binary.
//!
//! Everything downstream of a seed is deterministic: parallel and sequential
//! execution produce identical results, and rerunning an experiment with the
//! same config and seed reproduces its output files byte for byte.

pub mod bench;
pub mod calib;
pub mod cli;
pub mod error;
mod optim;
pub mod par;
pub mod qsim;
pub mod rotor;
pub mod synth;
mod util;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
