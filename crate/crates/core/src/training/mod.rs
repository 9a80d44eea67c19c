//! Sampling-based training: CD-k, PCD-k and parallel tempering, with the
//! initialisation, momentum and column-norm recipes.

mod config;
mod phases;
mod trainer;
mod update;

pub use config::{Method, MomentumDecay, TrainConfig};
pub use phases::{
    cd_negative_phase, pcd_negative_phase, positive_phase, pt_negative_phase, swap_acceptance,
    SamplerState,
};
pub use trainer::{
    continue_training, train, train_monitored, EpochRecord, Monitor, TrainOutcome, Trainer,
};
pub use update::{
    activated_units_histogram, apply_update, first_order_biases, init_params,
    restrict_column_norms, Velocity,
};
