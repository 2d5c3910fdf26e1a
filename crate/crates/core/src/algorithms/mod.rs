//! The user-level private algorithms and their schedules.

mod accel;
mod nonsmooth;
mod phased_sgd;
mod report;
mod schedule;

pub use accel::{
    accelerated_phased_erm, dp_accel_minibatch_sgd, filtered_gradient_mean, GradientFilter, MinibatchOutcome,
    MinibatchParams,
};
pub use nonsmooth::{nonsmooth_setup, nonsmooth_solve, smoothing_radius};
pub use phased_sgd::{alg1_partition, alg1_phase, phase_stream, phased_sgd, Alg1PhaseOutcome, Alg1PhaseParams};
pub use report::{NoiseSwitches, PhaseDiagnostics, RunReport};
pub use schedule::{
    alg1_group_count, phase_count, phase_users, schedule_alg1, schedule_alg3, Alg1Options, Alg1Phase, Alg3Options,
    Alg3Phase, PhaseScheduleAlg1, PhaseScheduleAlg3, ProblemSize,
};
