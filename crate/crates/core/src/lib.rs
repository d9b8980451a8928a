//! Temporal point process library built around an RNN-parameterised
//! sum-of-basis-functions intensity model, with parametric Hawkes
//! baselines, exact simulators for four process families, likelihood-based
//! evaluation, and a reproducible experiment pipeline (see the `unipoint`
//! binary for the CLI).

pub mod basis;
pub mod checkpoint;
pub mod cli;
pub mod events;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod oracles;
pub mod processes;
pub mod rng;
pub mod unipoint;
