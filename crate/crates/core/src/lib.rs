//! Random stochastic matrices with ranked rows and independently permuted
//! columns, and the tools to watch their chains mix.
//!
//! The crate realizes the environment lazily ([`env_model`]), generates the
//! standard ensembles ([`ensembles`]), reports entropy diagnostics
//! ([`stats`]), propagates distributions exactly ([`dynamics`]), samples
//! trajectories ([`walker`]), builds weighted forward trees ([`forward`]) and
//! checks the heavy-tailed size-biased limit ([`beta_limit`]).
//!
//! ```
//! use entropic_cutoff::{ensembles::EnsembleSpec, stats};
//!
//! let profiles = EnsembleSpec::r_out(1000, 10, 7).profiles().unwrap();
//! let t_ent = stats::entropic_time(&profiles).unwrap();
//! assert!((t_ent - 3.0).abs() < 1e-12);
//! ```

pub mod beta_limit;
pub mod dynamics;
pub mod ensembles;
pub mod env_model;
pub mod error;
pub mod forward;
pub mod io;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;
pub mod walker;

pub use env_model::{LazyEnvironment, RowProfile, RowSource, StochasticMatrix};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/mixing.md")]
    pub struct Mixing;
    #[doc = include_str!("../../../book/src/trajectories.md")]
    pub struct Trajectories;
    #[doc = include_str!("../../../book/src/forward.md")]
    pub struct Forward;
    #[doc = include_str!("../../../book/src/heavy_tails.md")]
    pub struct HeavyTails;
}
