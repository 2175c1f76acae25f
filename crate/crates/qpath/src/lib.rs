//! Compilation and cross-validated simulation of classically-controlled
//! quantum programs with intermediate measurements.
//!
//! A program here is a finite branching tree of quantum gate applications
//! whose classical control may branch on measurement outcomes and input
//! bits, but never on the quantum superposition itself. The crate provides:
//!
//! - exact Gaussian-integer amplitude arithmetic over the universal gate
//!   library `{CNOT, F, F+, H, I}` ([`exact`], [`gate`]);
//! - a textual program DSL with a normalization pass that makes every
//!   outcome branch apply the same number of gates of each kind
//!   ([`program`]);
//! - decomposition of arbitrary unitaries to CNOT plus single-qubit gates
//!   ([`decompose`]) and Solovay-Kitaev approximation of single-qubit gates
//!   by words over `{F, F+, H}` ([`skcompile`]);
//! - two independent simulation backends: unnormalized branch statevectors
//!   ([`statevec`]) and exact path counting over the computation tree
//!   ([`pathcount`]), cross-validated as exact rationals;
//! - the unbounded-error threshold decision built from the path counts
//!   ([`pathcount::threshold_decide`]).
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, and the `qpath` binary for the scriptable interface.

pub mod cli;
pub mod corpus;
pub mod decompose;
pub mod exact;
pub mod expr;
pub mod fixed;
pub mod gate;
pub mod pathcount;
pub mod program;
pub mod report;
pub mod skcompile;
pub mod statevec;
pub mod unitary;

pub use exact::{gaussian_mul, ComplexApprox, ExactAmplitude, GaussianInt};
pub use gate::{Gate, GateRef, LibGate};
pub use program::{BranchingProgram, OutcomeHistory, ProgramProfile};
pub use unitary::UnitaryMatrix;

/// Default cap on enumerated measurement branches.
pub const DEFAULT_BRANCH_CAP: usize = 1 << 20;
