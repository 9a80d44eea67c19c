//! Annealed importance sampling of `ln Z`.
//!
//! The base model shares `b` and `σ` with the target but has `W = 0` and
//! `c = 0`, so `ln Z_base = (M/2) ln(2πσ²) + N ln 2`. Intermediate models
//! scale `W` and `c` by `β`; with the hidden units summed out their
//! unnormalised log marginals are
//!
//! ```text
//! f_β(x) = −||x − b||²/(2σ²) + Σ_j softplus(β (c_j + xᵀw_{*j}/σ²))
//! ```

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::exact::unnormalized_log_marginal_batch;
use crate::math::{log_mean_exp, sigmoid, softplus, LogSumExp};
use crate::model::{bernoulli, DataBatch, GrbmParams};
use crate::rng::{stream, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Evenly spaced betas.
    Linear,
    /// Linear on `[0, 0.5]` for half the betas, then geometrically
    /// shrinking steps towards 1.
    GeometricTail,
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Schedule::Linear),
            "geometric-tail" | "geometric_tail" => Ok(Schedule::GeometricTail),
            other => Err(Error::InvalidConfig(format!(
                "unknown AIS schedule {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AisConfig {
    pub num_chains: usize,
    /// Number of betas including the endpoints 0 and 1.
    pub num_betas: usize,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for AisConfig {
    fn default() -> Self {
        Self {
            num_chains: 100,
            num_betas: 1000,
            schedule: Schedule::Linear,
            seed: 0,
        }
    }
}

impl AisConfig {
    pub fn betas(&self) -> Result<Vec<f64>> {
        if self.num_chains == 0 {
            return Err(Error::InvalidConfig("AIS needs at least one chain".into()));
        }
        let k = self.num_betas;
        match self.schedule {
            Schedule::Linear if k >= 2 => {
                let mut b: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
                b[k - 1] = 1.0;
                Ok(b)
            }
            Schedule::GeometricTail if k >= 6 => {
                let head = k / 2;
                let tail = k - head;
                let q = 1e-2f64.powf(1.0 / (tail - 2) as f64);
                let denom = 1.0 - q.powi((tail - 1) as i32);
                let mut b: Vec<f64> = (0..head).map(|i| 0.5 * i as f64 / head as f64).collect();
                b.extend((0..tail).map(|i| 0.5 + 0.5 * (1.0 - q.powi(i as i32)) / denom));
                b[k - 1] = 1.0;
                Ok(b)
            }
            _ => Err(Error::InvalidConfig(format!(
                "{:?} schedule cannot be built from {k} betas",
                self.schedule
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisEstimate {
    pub log_z: f64,
    /// Jackknife standard error of `log_z`.
    pub std_err: f64,
    /// Final importance log-weight of each chain.
    pub log_weights: Vec<f64>,
    pub effective_sample_size: f64,
}

pub fn base_log_partition(p: &GrbmParams) -> f64 {
    0.5 * p.n_visible() as f64 * (2.0 * PI * p.sigma * p.sigma).ln()
        + p.n_hidden() as f64 * std::f64::consts::LN_2
}

pub fn ais_log_partition(p: &GrbmParams, cfg: &AisConfig) -> Result<AisEstimate> {
    let betas = cfg.betas()?;
    ais_with_betas(p, &betas, cfg.num_chains, cfg.seed)
}

/// AIS over an explicit schedule, which must start at 0, end at 1 and be
/// non-decreasing. Chain `i` uses its own random stream, so results do not
/// depend on the thread count.
pub fn ais_with_betas(
    p: &GrbmParams,
    betas: &[f64],
    num_chains: usize,
    seed: u64,
) -> Result<AisEstimate> {
    p.validate()?;
    let valid = betas.len() >= 2
        && betas[0] == 0.0
        && *betas.last().unwrap() == 1.0
        && betas.windows(2).all(|w| w[0] <= w[1]);
    if !valid || num_chains == 0 {
        return Err(Error::InvalidConfig(
            "AIS schedule must rise from 0 to 1 and use at least one chain".into(),
        ));
    }
    let log_weights: Vec<f64> = (0..num_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = stream(seed, (streams::AIS << 32) | chain as u64);
            run_chain(p, betas, &mut rng)
        })
        .collect();
    if log_weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("AIS importance weights"));
    }
    let log_z = base_log_partition(p) + log_mean_exp(&log_weights);
    Ok(AisEstimate {
        log_z,
        std_err: jackknife_log_mean_exp_se(&log_weights),
        effective_sample_size: effective_sample_size(&log_weights),
        log_weights,
    })
}

/// Importance log-weight of one annealing run.
fn run_chain<R: Rng + ?Sized>(p: &GrbmParams, betas: &[f64], rng: &mut R) -> f64 {
    let (m, n) = p.weights.dim();
    let s2 = p.sigma * p.sigma;
    let mut x: Array1<f64> = p
        .visible_bias
        .mapv(|b| b + p.sigma * Distribution::<f64>::sample(&StandardNormal, rng));
    let mut h = Array1::zeros(n);
    let mut log_w = 0.0;
    for pair in betas.windows(2) {
        let (prev, beta) = (pair[0], pair[1]);
        let a = &p.hidden_bias + &(x.dot(&p.weights) / s2);
        // The quadratic term is common to every f_β and cancels.
        log_w += a
            .iter()
            .map(|&aj| softplus(beta * aj) - softplus(prev * aj))
            .sum::<f64>();
        // Gibbs transition leaving the β model invariant.
        for j in 0..n {
            h[j] = bernoulli(sigmoid(beta * a[j]), rng);
        }
        let mean = &p.visible_bias + &(p.weights.dot(&h) * beta);
        for i in 0..m {
            let z: f64 = StandardNormal.sample(rng);
            x[i] = mean[i] + p.sigma * z;
        }
    }
    log_w
}

/// Jackknife standard error of `ln((1/n) Σ e^{w_i})`, with leave-one-out
/// sums built from prefix and suffix accumulators.
pub fn jackknife_log_mean_exp_se(log_weights: &[f64]) -> f64 {
    let n = log_weights.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut prefix = vec![LogSumExp::new(); n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i];
        prefix[i + 1].push(log_weights[i]);
    }
    let mut suffix = LogSumExp::new();
    let mut loo = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = prefix[i];
        acc.merge(suffix);
        loo[i] = acc.value() - ((n - 1) as f64).ln();
        suffix.push(log_weights[i]);
    }
    let mean = loo.iter().sum::<f64>() / n as f64;
    let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}

/// `(Σ w)² / Σ w²` computed in log space.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let mut s1 = LogSumExp::new();
    let mut s2 = LogSumExp::new();
    for &w in log_weights {
        s1.push(w);
        s2.push(2.0 * w);
    }
    (2.0 * s1.value() - s2.value()).exp()
}

/// Mean of `ln Σ_h e^{−E(x,h)}` over the rows of `d`; subtracting `ln Z`
/// gives the average log-likelihood.
pub fn avg_unnormalized_log_marginal(d: &DataBatch, p: &GrbmParams) -> Result<f64> {
    ensure_dim("data dimension", p.n_visible(), d.dim())?;
    Ok(unnormalized_log_marginal_batch(d, p)
        .mean()
        .unwrap_or(f64::NAN))
}

/// Average log-likelihood of `d` with an AIS estimate of `ln Z`.
pub fn ais_avg_log_likelihood(
    d: &DataBatch,
    p: &GrbmParams,
    cfg: &AisConfig,
) -> Result<(f64, AisEstimate)> {
    let est = ais_log_partition(p, cfg)?;
    Ok((avg_unnormalized_log_marginal(d, p)? - est.log_z, est))
}

/// Draws `count` visible samples by running independent Gibbs chains for
/// `burn_in` sweeps from `N(b, σ²I)`; chain `i` is sample `i`.
pub fn sample_visible_chains(
    p: &GrbmParams,
    count: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    p.validate()?;
    let rows: Vec<Array1<f64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, (streams::EVAL << 32) | i as u64);
            let mut x = p
                .visible_bias
                .mapv(|b| b + p.sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            for _ in 0..burn_in {
                x = p
                    .gibbs_step(x.view(), &mut rng)
                    .expect("dimensions match")
                    .0;
            }
            x
        })
        .collect();
    let m = p.n_visible();
    Ok(Array2::from_shape_fn((count, m), |(i, j)| rows[i][j]))
}
