//! Discrete curvature-dimension conditions for reversible continuous-time
//! Markov chains: the `Υ`-calculus operators, numerical certification and
//! falsification of `CD_Υ(κ, F)`, the heat semigroup and its entropy
//! trajectory, and the functional inequalities that follow from a
//! curvature-dimension bound.

pub mod cd;
pub mod chain;
pub mod error;
pub mod families;
pub mod inequalities;
pub mod operators;
pub mod optimize;
pub mod quadrature;
pub mod semigroup;

pub use cd::CdFunction;
pub use chain::{build_chain, ChainSpec, LocalStats, MarkovChain};
pub use error::{Error, Result};
pub use families::{make_example, Certificate, Example, Family};
pub use operators::{ScalarKernel, StateFunction};
pub use semigroup::Semigroup;
