//! Deterministic, pathwise numerics built on rough path theory.
//!
//! The crate is organised bottom-up:
//!
//! * [`paths`] – piecewise-linear sampled paths, increments, p-variation and
//!   Hölder seminorms.
//! * [`tensor`] – the truncated tensor algebra, words, linear functionals and
//!   the shuffle product.
//! * [`rough`] – level-2 rough paths, controlled paths, rough and Young
//!   integration and a second-order RDE solver.
//! * [`signature`] – truncated signatures of time-augmented paths and the
//!   shuffle identities used by signature stopping.
//! * [`stopping`] – randomized signature stopping policies, Monte Carlo
//!   valuation and American option pricing.
//! * [`filtering`] – Kalman–Bucy filtering, likelihoods and penalty-based
//!   robust expectations.
//! * [`control`] – a pathwise optimal-control lab on piecewise-constant
//!   control lattices.
//!
//! Serialization helpers live in [`io`]; the `roughkit` binary drives batch
//! experiments through [`cli`].

pub mod cli;
pub mod control;
pub mod error;
pub mod filtering;
pub mod io;
pub mod paths;
pub mod rough;
pub mod rng;
pub mod signature;
pub mod stopping;
pub mod tensor;

pub use error::{Error, Result};
pub use paths::SampledPath;
pub use rough::{ControlledPath, RoughPath};
pub use signature::Signature;
pub use tensor::{LinearFunctional, TruncatedTensor, Word};
