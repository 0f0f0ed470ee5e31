//! Particle filtering: ensembles, resampling, models and the filter loop.

mod engine;
mod ensemble;
mod flow_model;
mod init;
mod linear;
mod model;
mod resample;
mod trace;

pub use engine::{run_filter, step_noise, FilterConfig, FilterRun, ResampleTiming, StepRecord};
pub use ensemble::{ess, is_normalized, normalize_log_weights, update_log_weights, EnsembleSnapshot, ParticleEnsemble};
pub use flow_model::{
    cosine_log_likelihood, proposal_log_density, FlowModel, MeasurementModel, ModelConfig, PrototypeDynamics,
};
pub use init::{InitKind, InitialDistribution};
pub use linear::{kalman_oracle, KalmanOutput, LinearGaussian};
pub use model::{Episode, ParticleModel, Propagation};
pub use resample::{multinomial, soft_probs, soft_resample};
pub use trace::{FilterTrace, TraceRow};
