use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Contrastive divergence: chains restart at the data for every update.
    Cd,
    /// Persistent CD: chains carry over between updates.
    Pcd,
    /// Parallel tempering over several energy scalings.
    Pt,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Cd => "cd",
            Method::Pcd => "pcd",
            Method::Pt => "pt",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cd" => Ok(Method::Cd),
            "pcd" => Ok(Method::Pcd),
            "pt" => Ok(Method::Pt),
            other => Err(Error::InvalidConfig(format!(
                "unknown training method {other:?}"
            ))),
        }
    }
}

/// Momentum is multiplied by `factor` after every `every_epochs` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumDecay {
    pub factor: f64,
    pub every_epochs: usize,
}

impl Default for MomentumDecay {
    fn default() -> Self {
        Self {
            factor: 0.9,
            every_epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Gibbs steps per update for CD and PCD.
    pub k_steps: usize,
    /// Energy scalings of the tempered chains, strictly increasing and ending
    /// at 1.0. The chain at scaling `β` samples from `∝ e^{−βE}`; the
    /// gradient is read from the `β = 1` chain.
    pub pt_inverse_temperatures: Vec<f64>,
    pub learning_rate_w: f64,
    /// Also used for `σ` when it is learned.
    pub learning_rate_b: f64,
    pub learning_rate_c: f64,
    pub momentum_initial: f64,
    pub momentum_decay: MomentumDecay,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cap on the Euclidean norm of every column of the weight update.
    pub grad_norm_cap: Option<f64>,
    pub learn_sigma: bool,
    /// Target first-order to anchor mixing ratio used by the hidden bias
    /// initialisation.
    pub tau_init: f64,
    /// Persistent chains for PCD and PT, per temperature. Defaults to the
    /// batch size.
    pub num_chains: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Cd,
            k_steps: 1,
            pt_inverse_temperatures: (1..=10).map(|i| i as f64 / 10.0).collect(),
            learning_rate_w: 0.1,
            learning_rate_b: 0.1,
            learning_rate_c: 0.01,
            momentum_initial: 0.9,
            momentum_decay: MomentumDecay::default(),
            epochs: 20,
            batch_size: 100,
            grad_norm_cap: None,
            learn_sigma: false,
            tau_init: 0.01,
            num_chains: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k_steps == 0 {
            return bad("k_steps must be at least 1".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        for (name, lr) in [
            ("learning_rate_w", self.learning_rate_w),
            ("learning_rate_b", self.learning_rate_b),
            ("learning_rate_c", self.learning_rate_c),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum_initial) {
            return bad(format!(
                "momentum_initial must lie in [0, 1), got {}",
                self.momentum_initial
            ));
        }
        if !(0.0..=1.0).contains(&self.momentum_decay.factor)
            || self.momentum_decay.every_epochs == 0
        {
            return bad("momentum decay needs a factor in [0, 1] and a positive period".into());
        }
        if let Some(cap) = self.grad_norm_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return bad(format!("grad_norm_cap must be positive, got {cap}"));
            }
        }
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return bad(format!("tau_init must be positive, got {}", self.tau_init));
        }
        if self.num_chains == Some(0) {
            return bad("num_chains must be positive".into());
        }
        validate_inverse_temperatures(&self.pt_inverse_temperatures)
    }

    /// Momentum in effect during `epoch` (0-based).
    pub fn momentum_at(&self, epoch: usize) -> f64 {
        let decays = epoch / self.momentum_decay.every_epochs;
        self.momentum_initial * self.momentum_decay.factor.powi(decays as i32)
    }
}

pub(crate) fn validate_inverse_temperatures(betas: &[f64]) -> Result<()> {
    let ok = !betas.is_empty()
        && betas.iter().all(|&b| b > 0.0 && b.is_finite())
        && betas.windows(2).all(|w| w[0] < w[1])
        && *betas.last().unwrap() == 1.0;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "inverse temperatures must be positive, strictly increasing and end at 1.0, got {betas:?}"
        )))
    }
}
