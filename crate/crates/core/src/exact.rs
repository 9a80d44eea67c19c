//! Exact density analysis for models with few hidden units.
//!
//! Integrating `x` out of the joint gives the hidden marginal in closed form,
//!
//! ```text
//! P(h) = (2πσ²)^{M/2} / Z · exp(cᵀh + (||b + Wh||² − ||b||²) / (2σ²)),
//! ```
//!
//! so `ln Z` is a log-sum-exp over `2^N` log weights and the visible marginal
//! is a mixture of isotropic Gaussians `N(b + Wh, σ²I)` with those weights.
//! Summing out `h` instead gives the product-of-experts form with `N` factors,
//! each a pair of Gaussians of variance `Nσ²` at `b` and `b + N w_{*j}`.
//!
//! Enumeration is split into fixed chunks of hidden states. Chunks may be
//! evaluated by any number of workers; partial results are always combined in
//! chunk order, so results do not depend on the worker count.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::math::{log_add_exp, softplus, LogSumExp};
use crate::model::{DataBatch, GradientSet, GrbmParams};

pub const DEFAULT_ENUMERATION_CAP: usize = 25;

/// Hidden states per enumeration chunk, as a power of two.
const CHUNK_BITS: usize = 10;

/// Walks hidden states chunk by chunk, producing the component mean
/// `b + Wh` and the unnormalised log weight of every state.
struct StateWalker<'a> {
    p: &'a GrbmParams,
    low_bits: usize,
    low_shift: Array2<f64>,
    low_bias: Vec<f64>,
    b_norm2: f64,
}

impl<'a> StateWalker<'a> {
    fn new(p: &'a GrbmParams) -> Self {
        let n = p.n_hidden();
        let m = p.n_visible();
        let low_bits = n.min(CHUNK_BITS);
        let count = 1usize << low_bits;
        let mut low_shift = Array2::zeros((count, m));
        let mut low_bias = vec![0.0; count];
        for idx in 1..count {
            // Extend the state with its lowest set bit removed.
            let j = idx.trailing_zeros() as usize;
            let prev = idx & (idx - 1);
            let row = &low_shift.row(prev) + &p.weights.column(j);
            low_shift.row_mut(idx).assign(&row);
            low_bias[idx] = low_bias[prev] + p.hidden_bias[j];
        }
        Self {
            p,
            low_bits,
            low_shift,
            low_bias,
            b_norm2: p.visible_bias.dot(&p.visible_bias),
        }
    }

    fn num_chunks(&self) -> u64 {
        1u64 << (self.p.n_hidden() - self.low_bits)
    }

    fn visit_chunk(&self, chunk: u64, mut f: impl FnMut(u64, ArrayView1<f64>, f64)) {
        let p = self.p;
        let s2 = p.sigma * p.sigma;
        let mut base = p.visible_bias.clone();
        let mut high_bias = 0.0;
        for j in self.low_bits..p.n_hidden() {
            if (chunk >> (j - self.low_bits)) & 1 == 1 {
                base += &p.weights.column(j);
                high_bias += p.hidden_bias[j];
            }
        }
        let mut mean = Array1::zeros(p.n_visible());
        for (low, shift) in self.low_shift.rows().into_iter().enumerate() {
            let mut norm2 = 0.0;
            for ((mu, &b), &s) in mean.iter_mut().zip(base.iter()).zip(shift.iter()) {
                *mu = b + s;
                norm2 += *mu * *mu;
            }
            let log_weight = high_bias + self.low_bias[low] + (norm2 - self.b_norm2) / (2.0 * s2);
            f(
                (chunk << self.low_bits) | low as u64,
                mean.view(),
                log_weight,
            );
        }
    }

    /// Log-sum-exp of all unnormalised log weights.
    fn log_weight_total(&self) -> f64 {
        let partials: Vec<LogSumExp> = (0..self.num_chunks())
            .into_par_iter()
            .map(|chunk| {
                let mut acc = LogSumExp::new();
                self.visit_chunk(chunk, |_, _, a| acc.push(a));
                acc
            })
            .collect();
        partials
            .into_iter()
            .fold(LogSumExp::new(), |mut total, part| {
                total.merge(part);
                total
            })
            .value()
    }
}

fn check_cap(p: &GrbmParams, cap: usize) -> Result<()> {
    if p.n_hidden() > cap || p.n_hidden() >= 63 {
        return Err(Error::EnumerationInfeasible {
            hidden: p.n_hidden(),
            cap,
        });
    }
    Ok(())
}

fn gaussian_log_norm(m: usize, variance: f64) -> f64 {
    0.5 * m as f64 * (2.0 * PI * variance).ln()
}

/// `ln Σ_h e^{−E(x,h)} = −||x − b||²/(2σ²) + Σ_j softplus(c_j + xᵀw_{*j}/σ²)`.
///
/// Costs `O(MN)` and needs no enumeration.
pub fn unnormalized_log_marginal(x: ArrayView1<f64>, p: &GrbmParams) -> Result<f64> {
    let a = p.hidden_preactivation(x)?;
    let diff = &x - &p.visible_bias;
    Ok(-diff.dot(&diff) / (2.0 * p.sigma * p.sigma) + a.iter().map(|&v| softplus(v)).sum::<f64>())
}

/// Row-wise [`unnormalized_log_marginal`].
pub fn unnormalized_log_marginal_batch(d: &DataBatch, p: &GrbmParams) -> Array1<f64> {
    let a = p.hidden_preactivation_batch(d.view(), 1.0);
    let s2 = p.sigma * p.sigma;
    d.samples()
        .rows()
        .into_iter()
        .zip(a.rows())
        .map(|(x, ar)| {
            let mut quad = 0.0;
            for (xi, bi) in x.iter().zip(p.visible_bias.iter()) {
                quad += (xi - bi) * (xi - bi);
            }
            -quad / (2.0 * s2) + ar.iter().map(|&v| softplus(v)).sum::<f64>()
        })
        .collect()
}

/// Per-expert log factors `ln p_j(x)` of the product-of-experts form; their
/// sum minus `ln Z` is `ln P(x)`.
pub fn expert_log_values(x: ArrayView1<f64>, p: &GrbmParams) -> Result<Array1<f64>> {
    ensure_dim("visible vector", p.n_visible(), x.len())?;
    let m = p.n_visible();
    let n = p.n_hidden() as f64;
    let var = n * p.sigma * p.sigma;
    let b = &p.visible_bias;
    let b_norm2 = b.dot(b);
    let prefactor = gaussian_log_norm(m, var);
    let dx = &x - b;
    let log_anchor = -dx.dot(&dx) / (2.0 * var) - prefactor;
    let values = p
        .weights
        .columns()
        .into_iter()
        .zip(p.hidden_bias.iter())
        .map(|(w, &c)| {
            let shifted = b + &(&w * n);
            let scale = (shifted.dot(&shifted) - b_norm2) / (2.0 * var) + c;
            let dz = &x - &shifted;
            let log_shifted = -dz.dot(&dz) / (2.0 * var) - prefactor;
            prefactor + log_add_exp(log_anchor, scale + log_shifted)
        })
        .collect();
    Ok(values)
}

/// Per-expert evaluation together with the normaliser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertEval {
    pub expert_logs: Array1<f64>,
    pub log_partition: f64,
}

impl ExpertEval {
    pub fn log_pdf(&self) -> f64 {
        self.expert_logs.sum() - self.log_partition
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub hidden: Vec<u8>,
    pub mean: Array1<f64>,
    pub log_weight: f64,
}

impl MixtureComponent {
    /// Number of active hidden units; 0 is the anchor, 1 a first-order
    /// component.
    pub fn order(&self) -> usize {
        self.hidden.iter().filter(|&&h| h == 1).count()
    }
}

/// The visible marginal as an explicit mixture of `2^N` isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureView {
    pub components: Vec<MixtureComponent>,
    /// Mass of all hidden states with exactly `k` active units, `k = 0..=N`.
    pub order_mass: Vec<f64>,
    pub log_partition: f64,
    pub sigma: f64,
}

impl MixtureView {
    pub fn anchor(&self) -> &MixtureComponent {
        &self.components[0]
    }

    /// `ln P(x)` evaluated as `ln Σ_h P(h) N(x; b + Wh, σ²I)`.
    pub fn log_pdf(&self, x: ArrayView1<f64>) -> Result<f64> {
        let m = self.anchor().mean.len();
        ensure_dim("visible vector", m, x.len())?;
        let s2 = self.sigma * self.sigma;
        let norm = gaussian_log_norm(m, s2);
        let mut acc = LogSumExp::new();
        for comp in &self.components {
            let d = &x - &comp.mean;
            acc.push(comp.log_weight - d.dot(&d) / (2.0 * s2) - norm);
        }
        Ok(acc.value())
    }
}

/// A model together with its exact log partition function.
#[derive(Debug, Clone)]
pub struct ExactDensity<'a> {
    params: &'a GrbmParams,
    /// `ln Σ_h exp(cᵀh + (||b + Wh||² − ||b||²)/(2σ²))`
    log_weight_total: f64,
    log_partition: f64,
}

impl<'a> ExactDensity<'a> {
    pub fn new(params: &'a GrbmParams) -> Result<Self> {
        Self::with_cap(params, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(params: &'a GrbmParams, cap: usize) -> Result<Self> {
        check_cap(params, cap)?;
        let log_weight_total = StateWalker::new(params).log_weight_total();
        let log_partition =
            gaussian_log_norm(params.n_visible(), params.sigma * params.sigma) + log_weight_total;
        Ok(Self {
            params,
            log_weight_total,
            log_partition,
        })
    }

    pub fn params(&self) -> &GrbmParams {
        self.params
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// `ln P(h)`.
    pub fn hidden_log_marginal(&self, h: ArrayView1<f64>) -> Result<f64> {
        let p = self.params;
        let (mean, _) = p.visible_conditional(h)?;
        let b2 = p.visible_bias.dot(&p.visible_bias);
        let a = p.hidden_bias.dot(&h) + (mean.dot(&mean) - b2) / (2.0 * p.sigma * p.sigma);
        Ok(a - self.log_weight_total)
    }

    pub fn hidden_marginal(&self, h: ArrayView1<f64>) -> Result<f64> {
        Ok(self.hidden_log_marginal(h)?.exp())
    }

    pub fn mixture_view(&self) -> MixtureView {
        let p = self.params;
        let n = p.n_hidden();
        let walker = StateWalker::new(p);
        let chunks: Vec<Vec<MixtureComponent>> = (0..walker.num_chunks())
            .into_par_iter()
            .map(|chunk| {
                let mut out = Vec::with_capacity(1 << walker.low_bits);
                walker.visit_chunk(chunk, |idx, mean, a| {
                    out.push(MixtureComponent {
                        hidden: (0..n).map(|j| ((idx >> j) & 1) as u8).collect(),
                        mean: mean.to_owned(),
                        log_weight: a - self.log_weight_total,
                    })
                });
                out
            })
            .collect();
        let components: Vec<MixtureComponent> = chunks.into_iter().flatten().collect();
        let mut per_order = vec![LogSumExp::new(); n + 1];
        for comp in &components {
            per_order[comp.order()].push(comp.log_weight);
        }
        MixtureView {
            components,
            order_mass: per_order.iter().map(|acc| acc.value().exp()).collect(),
            log_partition: self.log_partition,
            sigma: p.sigma,
        }
    }

    /// Mass of each activation order without materialising the components.
    pub fn order_mass(&self) -> Vec<f64> {
        let n = self.params.n_hidden();
        let walker = StateWalker::new(self.params);
        let partials: Vec<Vec<LogSumExp>> = (0..walker.num_chunks())
            .into_par_iter()
            .map(|chunk| {
                let mut acc = vec![LogSumExp::new(); n + 1];
                walker.visit_chunk(chunk, |idx, _, a| acc[idx.count_ones() as usize].push(a));
                acc
            })
            .collect();
        let mut total = vec![LogSumExp::new(); n + 1];
        for part in partials {
            for (t, p) in total.iter_mut().zip(part) {
                t.merge(p);
            }
        }
        total
            .iter()
            .map(|acc| (acc.value() - self.log_weight_total).exp())
            .collect()
    }

    pub fn log_pdf(&self, x: ArrayView1<f64>) -> Result<f64> {
        Ok(unnormalized_log_marginal(x, self.params)? - self.log_partition)
    }

    /// Average log-likelihood per sample.
    pub fn avg_log_likelihood(&self, d: &DataBatch) -> Result<f64> {
        ensure_dim("data dimension", self.params.n_visible(), d.dim())?;
        let values = unnormalized_log_marginal_batch(d, self.params);
        Ok(values.sum() / d.len() as f64 - self.log_partition)
    }

    pub fn expert_eval(&self, x: ArrayView1<f64>) -> Result<ExpertEval> {
        Ok(ExpertEval {
            expert_logs: expert_log_values(x, self.params)?,
            log_partition: self.log_partition,
        })
    }

    /// Model-side expectation of `−∂E/∂θ`, computed as
    /// `Σ_h P(h) E_{x ~ N(b+Wh, σ²I)}[−∂E/∂θ]` in closed form.
    pub fn model_expectation(&self) -> GradientSet {
        let p = self.params;
        let (m, n) = p.weights.dim();
        let s2 = p.sigma * p.sigma;
        let s3 = s2 * p.sigma;
        let walker = StateWalker::new(p);
        let partials: Vec<GradientSet> = (0..walker.num_chunks())
            .into_par_iter()
            .map(|chunk| {
                let mut acc = GradientSet::zeros(m, n);
                walker.visit_chunk(chunk, |idx, mean, a| {
                    let prob = (a - self.log_weight_total).exp();
                    let shift = &mean - &p.visible_bias;
                    acc.d_b.scaled_add(prob, &shift);
                    for j in 0..n {
                        if (idx >> j) & 1 == 1 {
                            acc.d_c[j] += prob;
                            acc.d_w.column_mut(j).scaled_add(prob, &mean);
                        }
                    }
                    // E||x − b||² − 2 E[x]ᵀWh with E[x] = b + Wh.
                    let spread = shift.dot(&shift) + m as f64 * s2 - 2.0 * mean.dot(&shift);
                    acc.d_sigma += prob * spread;
                });
                acc
            })
            .collect();
        let mut total = GradientSet::zeros(m, n);
        for part in partials {
            total.d_w += &part.d_w;
            total.d_b += &part.d_b;
            total.d_c += &part.d_c;
            total.d_sigma += part.d_sigma;
        }
        total.d_w /= s2;
        total.d_b /= s2;
        total.d_sigma /= s3;
        total
    }

    /// Exact `∂ℓ̂/∂θ` over the batch: data expectation minus model
    /// expectation of `−∂E/∂θ`.
    pub fn gradient(&self, d: &DataBatch) -> Result<GradientSet> {
        ensure_dim("data dimension", self.params.n_visible(), d.dim())?;
        let data = data_expectation(d, self.params);
        Ok(data.minus(&self.model_expectation()))
    }
}

/// Data-side expectation of `−∂E/∂θ` with `h` summed out under `P(h|x)`.
pub(crate) fn data_expectation(d: &DataBatch, p: &GrbmParams) -> GradientSet {
    expectation_at(d.view(), p)
}

/// `⟨(x−b)/σ²⟩`, `⟨P(h=1|x)⟩`, `⟨x P(h=1|x)ᵀ⟩/σ²` and
/// `⟨||x−b||² − 2xᵀW P(h=1|x)⟩/σ³` over the rows of `x`.
pub(crate) fn expectation_at(x: ndarray::ArrayView2<f64>, p: &GrbmParams) -> GradientSet {
    let l = x.nrows() as f64;
    let s2 = p.sigma * p.sigma;
    let probs = p.hidden_probs_batch(x);
    let centered = &x - &p.visible_bias;
    let d_b = centered.sum_axis(Axis(0)) / (l * s2);
    let d_c = probs.sum_axis(Axis(0)) / l;
    let d_w = x.t().dot(&probs) / (l * s2);
    let xw = x.dot(&p.weights);
    let mut spread = 0.0;
    for ((c, xwr), pr) in centered.rows().into_iter().zip(xw.rows()).zip(probs.rows()) {
        spread += c.dot(&c) - 2.0 * xwr.dot(&pr);
    }
    GradientSet {
        d_w,
        d_b,
        d_c,
        d_sigma: spread / (l * s2 * p.sigma),
    }
}

pub fn log_partition_exact(p: &GrbmParams) -> Result<f64> {
    Ok(ExactDensity::new(p)?.log_partition())
}

pub fn hidden_marginal(h: ArrayView1<f64>, p: &GrbmParams) -> Result<f64> {
    ExactDensity::new(p)?.hidden_marginal(h)
}

pub fn mixture_view(p: &GrbmParams) -> Result<MixtureView> {
    Ok(ExactDensity::new(p)?.mixture_view())
}

pub fn log_pdf(x: ArrayView1<f64>, p: &GrbmParams) -> Result<f64> {
    ExactDensity::new(p)?.log_pdf(x)
}

pub fn avg_log_likelihood(d: &DataBatch, p: &GrbmParams) -> Result<f64> {
    ExactDensity::new(p)?.avg_log_likelihood(d)
}

pub fn poe_expert_logs(x: ArrayView1<f64>, p: &GrbmParams) -> Result<ExpertEval> {
    ExactDensity::new(p)?.expert_eval(x)
}

pub fn exact_gradient(d: &DataBatch, p: &GrbmParams) -> Result<GradientSet> {
    ExactDensity::new(p)?.gradient(d)
}

/// Integration box for a 2-D visible space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds2d {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Bounds2d {
    /// Box hull of every component mean `b + Wh`, padded by `8σ`.
    pub fn around_components(p: &GrbmParams) -> Self {
        let pad = 8.0 * p.sigma;
        let range = |i: usize| {
            let row = p.weights.row(i);
            let lo = p.visible_bias[i] + row.iter().map(|&w| w.min(0.0)).sum::<f64>();
            let hi = p.visible_bias[i] + row.iter().map(|&w| w.max(0.0)).sum::<f64>();
            (lo - pad, hi + pad)
        };
        Self {
            x: range(0),
            y: range(1),
        }
    }
}

/// Natural log of the midpoint-rule integral of `exp(log_f)` over the box.
pub fn log_midpoint_integral_2d(
    bounds: Bounds2d,
    step: f64,
    mut log_f: impl FnMut(f64, f64) -> f64,
) -> f64 {
    let nx = ((bounds.x.1 - bounds.x.0) / step).ceil() as usize;
    let ny = ((bounds.y.1 - bounds.y.0) / step).ceil() as usize;
    let mut acc = LogSumExp::new();
    for ix in 0..nx {
        let x = bounds.x.0 + (ix as f64 + 0.5) * step;
        for iy in 0..ny {
            let y = bounds.y.0 + (iy as f64 + 0.5) * step;
            acc.push(log_f(x, y));
        }
    }
    acc.value() + 2.0 * step.ln()
}

/// `ln ∫ Σ_h e^{−E(x,h)} dx` by the midpoint rule; an independent check of
/// `ln Z` for two visible units.
pub fn log_integral_unnormalized_2d(
    p: &GrbmParams,
    bounds: Option<Bounds2d>,
    step: f64,
) -> Result<f64> {
    ensure_dim("numeric integration (visible units)", 2, p.n_visible())?;
    let bounds = bounds.unwrap_or_else(|| Bounds2d::around_components(p));
    let s2 = p.sigma * p.sigma;
    let (b0, b1) = (p.visible_bias[0], p.visible_bias[1]);
    let w0 = p.weights.row(0).to_owned() / s2;
    let w1 = p.weights.row(1).to_owned() / s2;
    let c = p.hidden_bias.clone();
    Ok(log_midpoint_integral_2d(bounds, step, |x, y| {
        let quad = ((x - b0).powi(2) + (y - b1).powi(2)) / (2.0 * s2);
        let mut sp = 0.0;
        for j in 0..c.len() {
            sp += softplus(c[j] + x * w0[j] + y * w1[j]);
        }
        sp - quad
    }))
}

/// Midpoint-rule integral of the normalised density `P(x)` over the box.
pub fn numeric_integral_2d(p: &GrbmParams, bounds: Option<Bounds2d>, step: f64) -> Result<f64> {
    ensure_dim("numeric integration (visible units)", 2, p.n_visible())?;
    let log_z = log_partition_exact(p)?;
    Ok((log_integral_unnormalized_2d(p, bounds, step)? - log_z).exp())
}
