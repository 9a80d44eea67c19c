use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};
use crate::estimators::{ais_log_partition, AisConfig};
use crate::exact::{ExactDensity, DEFAULT_ENUMERATION_CAP};
use crate::model::{DataBatch, GrbmParams};
use crate::rng::{stream, streams, ChainRng};

use super::config::{Method, TrainConfig};
use super::phases::{
    cd_negative_phase, pcd_negative_phase, positive_phase, pt_negative_phase, SamplerState,
};
use super::update::{apply_update, init_params, Velocity};

/// How the average log-likelihood is tracked during training.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Monitor {
    Off,
    /// Exact evaluation when the hidden layer is small enough to enumerate;
    /// skipped otherwise.
    #[default]
    Exact,
    /// AIS estimate of `ln Z`, with the exact unnormalised marginal.
    Ais(AisConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 for the initial parameters, then 1-based epoch counts.
    pub epoch: usize,
    pub train_log_likelihood: Option<f64>,
    pub test_log_likelihood: Option<f64>,
    /// Mean Euclidean norm of the applied updates over the epoch.
    pub mean_update_norm: f64,
    pub momentum: f64,
    pub swap_acceptance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: GrbmParams,
    pub history: Vec<EpochRecord>,
    /// Wall time per epoch, kept apart from the reproducible history.
    pub epoch_seconds: Vec<f64>,
}

/// Stepwise trainer holding parameters, momentum, persistent chains and the
/// run's random stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    params: GrbmParams,
    velocity: Velocity,
    sampler: SamplerState,
    rng: ChainRng,
    /// Minibatch order; separate from the sampling stream so every sampler
    /// sees the same batches for a given seed.
    order_rng: ChainRng,
    epoch: usize,
}

impl Trainer {
    /// Initialises parameters from the data with the configured recipe.
    pub fn new(d: &DataBatch, n_hidden: usize, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(cfg.seed, streams::TRAIN);
        let params = init_params(d, n_hidden, cfg.tau_init, &mut rng)?;
        Self::assemble(params, cfg, rng)
    }

    /// Continues from given parameters.
    pub fn from_params(params: GrbmParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let rng = stream(cfg.seed, streams::TRAIN);
        Self::assemble(params, cfg, rng)
    }

    fn assemble(params: GrbmParams, cfg: TrainConfig, rng: ChainRng) -> Result<Self> {
        let sampler = match cfg.method {
            Method::Pt => SamplerState::tempered(cfg.pt_inverse_temperatures.clone())?,
            _ => SamplerState::persistent(),
        };
        Ok(Self {
            velocity: Velocity::zeros_like(&params),
            order_rng: stream(cfg.seed, streams::SHUFFLE),
            cfg,
            params,
            sampler,
            rng,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &GrbmParams {
        &self.params
    }

    pub fn into_params(self) -> GrbmParams {
        self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn sampler(&self) -> &SamplerState {
        &self.sampler
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One pass over a fresh shuffle of `d` in minibatches. Returns the mean
    /// update norm.
    pub fn run_epoch(&mut self, d: &DataBatch) -> Result<f64> {
        ensure_dim("data dimension", self.params.n_visible(), d.dim())?;
        let momentum = self.cfg.momentum_at(self.epoch);
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.shuffle(&mut self.order_rng);
        let mut norm_sum = 0.0;
        let mut updates = 0usize;
        for rows in order.chunks(self.cfg.batch_size) {
            let batch = d.select(rows);
            self.step(&batch, momentum).map(|n| {
                norm_sum += n;
                updates += 1;
            })?;
        }
        self.epoch += 1;
        Ok(norm_sum / updates as f64)
    }

    /// One gradient update on a minibatch.
    pub fn step(&mut self, batch: &DataBatch, momentum: f64) -> Result<f64> {
        let p = &self.params;
        let pos = positive_phase(batch, p)?;
        let neg = match self.cfg.method {
            Method::Cd => cd_negative_phase(batch, p, self.cfg.k_steps, &mut self.rng)?.0,
            Method::Pcd | Method::Pt => {
                if !self.sampler.is_initialized() {
                    let chains = self.cfg.num_chains.unwrap_or(self.cfg.batch_size);
                    self.sampler.initialize(batch.view(), chains, p.n_hidden());
                }
                if self.cfg.method == Method::Pcd {
                    pcd_negative_phase(p, &mut self.sampler, self.cfg.k_steps, &mut self.rng)?
                } else {
                    pt_negative_phase(p, &mut self.sampler, &mut self.rng)?
                }
            }
        };
        let g = pos.minus(&neg);
        apply_update(
            &mut self.params,
            &g,
            &mut self.velocity,
            momentum,
            &self.cfg,
        )
    }
}

fn evaluate(p: &GrbmParams, d: &DataBatch, monitor: &Monitor, epoch: usize) -> Result<Option<f64>> {
    match monitor {
        Monitor::Off => Ok(None),
        Monitor::Exact if p.n_hidden() > DEFAULT_ENUMERATION_CAP => Ok(None),
        Monitor::Exact => ExactDensity::new(p)?.avg_log_likelihood(d).map(Some),
        Monitor::Ais(cfg) => {
            // A fresh seed per evaluation keeps estimates at different epochs
            // independent.
            let cfg = AisConfig {
                seed: cfg.seed.wrapping_add(epoch as u64),
                ..cfg.clone()
            };
            let log_z = ais_log_partition(p, &cfg)?.log_z;
            Ok(Some(
                crate::estimators::avg_unnormalized_log_marginal(d, p)? - log_z,
            ))
        }
    }
}

/// Trains from the recipe initialisation, tracking the exact training
/// log-likelihood when feasible.
pub fn train(d: &DataBatch, n_hidden: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_monitored(d, None, n_hidden, cfg, &Monitor::Exact)
}

pub fn train_monitored(
    d: &DataBatch,
    held_out: Option<&DataBatch>,
    n_hidden: usize,
    cfg: &TrainConfig,
    monitor: &Monitor,
) -> Result<TrainOutcome> {
    let trainer = Trainer::new(d, n_hidden, cfg.clone())?;
    continue_training(trainer, d, held_out, monitor)
}

/// Runs the remaining configured epochs of `trainer`, recording the initial
/// state as epoch 0.
pub fn continue_training(
    mut trainer: Trainer,
    d: &DataBatch,
    held_out: Option<&DataBatch>,
    monitor: &Monitor,
) -> Result<TrainOutcome> {
    if let Some(t) = held_out {
        ensure_dim("held-out dimension", d.dim(), t.dim())?;
    }
    let record = |t: &Trainer, norm: f64, momentum: f64| -> Result<EpochRecord> {
        Ok(EpochRecord {
            epoch: t.epoch(),
            train_log_likelihood: evaluate(t.params(), d, monitor, t.epoch())?,
            test_log_likelihood: match held_out {
                Some(h) => evaluate(t.params(), h, monitor, t.epoch())?,
                None => None,
            },
            mean_update_norm: norm,
            momentum,
            swap_acceptance: t.sampler().swap_acceptance_rate(),
        })
    };
    let mut history = vec![record(&trainer, 0.0, trainer.config().momentum_at(0))?];
    let mut epoch_seconds = Vec::new();
    while trainer.epoch() < trainer.config().epochs {
        let momentum = trainer.config().momentum_at(trainer.epoch());
        let start = Instant::now();
        let norm = trainer.run_epoch(d)?;
        epoch_seconds.push(start.elapsed().as_secs_f64());
        history.push(record(&trainer, norm, momentum)?);
    }
    Ok(TrainOutcome {
        params: trainer.into_params(),
        history,
        epoch_seconds,
    })
}
