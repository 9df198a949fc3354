//! Fixed-point iteration toolkit: weak-contraction operators, step-size
//! schedules, nine iteration schemes, and the analysis layer (rate
//! comparison, error bounds, recursion lemmas, data dependence) behind the
//! `fixpoint-race` command-line interface.

pub mod analysis;
pub mod cli;
pub mod norm;
pub mod operators;
pub mod schedules;
pub mod schemes;
