//! Simulation of QAOA for weighted Max-Cut on qubits coupled to a
//! non-Markovian environment represented by damped ancilla oscillators.

pub mod augmented;
pub mod error;
pub mod experiment;
pub mod lindblad;
pub mod maxcut;
pub mod metrics;
pub mod operator;
pub mod optimizer;
pub mod rng;
pub mod schedule;
pub mod trajectory;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/operators.md")]
    pub mod operators {}
    #[doc = include_str!("../../../book/src/maxcut.md")]
    pub mod maxcut {}
    #[doc = include_str!("../../../book/src/schedule.md")]
    pub mod schedule {}
    #[doc = include_str!("../../../book/src/augmented.md")]
    pub mod augmented {}
    #[doc = include_str!("../../../book/src/master.md")]
    pub mod master {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    pub mod trajectories {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    pub mod optimizer {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
