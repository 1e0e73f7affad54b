//! Numerical synthesis of coherent quantum observers for directly coupled
//! quantum harmonic oscillators.
//!
//! A closed harmonic oscillator is described by a nonsingular antisymmetric
//! CCR matrix `Θ` and a symmetric energy matrix `R`; its dynamics matrix is
//! `A = 2ΘR`. A quantum plant and a measurement-free observer are coupled
//! through an energy term parameterized by a coupling matrix `L`, and the
//! observer carries its own energy matrix `M`. This crate evaluates
//! exponentially discounted second moments of the composite system, the
//! induced mean-square estimation-error cost with a back-action penalty,
//! and synthesizes `(L, M)` by projected gradient descent, verifying the
//! first-order stationarity conditions in both their raw and Lie-algebraic
//! forms.
//!
//! Module layout:
//! - [`matcore`]: dense matrix kernel (Lyapunov solves, matrix exponential,
//!   commutators, stability margins);
//! - [`qho`]: single-oscillator models and their mode decomposition;
//! - [`moments`]: discounted moment averages by three independent routes;
//! - [`coupled`]: plant-observer assembly, admissibility and Gramians;
//! - [`cqf`]: cost, Fréchet gradients, optimality conditions and the
//!   synthesis optimizer;
//! - [`cli`]: config parsing, report serialization and command drivers
//!   behind the `cqf` binary.

pub mod cli;
pub mod coupled;
pub mod cqf;
pub mod error;
pub mod matcore;
pub mod moments;
pub mod policy;
pub mod qho;

pub use error::{Error, Result};
pub use policy::NumericPolicy;
