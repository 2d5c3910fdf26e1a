//! Non-private inner solvers.

mod acsa;
mod sgd;

pub use acsa::{ac_sa_stage, multi_stage_ac_sa, stage_plan, AcSaParams, AcSaState, NoiseBound};
pub use sgd::{one_pass_sgd, SgdConfig};
