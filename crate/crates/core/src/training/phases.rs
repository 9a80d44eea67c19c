//! Data- and model-side gradient statistics.
//!
//! Every estimator returns the expectation of `−∂E/∂θ` with the hidden units
//! summed out under `P(h|x)`, so the log-likelihood gradient estimate is
//! `positive_phase(batch) − negative_phase(...)`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::exact::expectation_at;
use crate::model::{DataBatch, GradientSet, GrbmParams};

use super::config::validate_inverse_temperatures;

/// Data-side statistics of the batch.
pub fn positive_phase(batch: &DataBatch, p: &GrbmParams) -> Result<GradientSet> {
    ensure_dim("data dimension", p.n_visible(), batch.dim())?;
    Ok(expectation_at(batch.view(), p))
}

/// CD-k: chains start at the batch and take `k` full Gibbs steps. Returns
/// the model-side statistics at the final samples together with them.
pub fn cd_negative_phase<R: Rng + ?Sized>(
    batch: &DataBatch,
    p: &GrbmParams,
    k: usize,
    rng: &mut R,
) -> Result<(GradientSet, Array2<f64>)> {
    ensure_dim("data dimension", p.n_visible(), batch.dim())?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut x = batch.samples().clone();
    for _ in 0..k {
        x = p.gibbs_sweep_batch(x.view(), 1.0, rng).0;
    }
    Ok((expectation_at(x.view(), p), x))
}

/// Persistent chains, optionally replicated over several energy scalings.
///
/// With a single scaling of 1.0 this is the PCD state; with several it is
/// the parallel-tempering state, the last replica being the `β = 1` chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    betas: Vec<f64>,
    visible: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
    sweeps: u64,
    swap_attempts: u64,
    swap_accepts: u64,
}

impl SamplerState {
    pub fn persistent() -> Self {
        Self::from_betas(vec![1.0])
    }

    pub fn tempered(inverse_temperatures: Vec<f64>) -> Result<Self> {
        validate_inverse_temperatures(&inverse_temperatures)?;
        Ok(Self::from_betas(inverse_temperatures))
    }

    fn from_betas(betas: Vec<f64>) -> Self {
        Self {
            betas,
            visible: Vec::new(),
            hidden: Vec::new(),
            sweeps: 0,
            swap_attempts: 0,
            swap_accepts: 0,
        }
    }

    pub fn is_initialized(&self) -> bool {
        !self.visible.is_empty()
    }

    /// Seeds `num_chains` chains per replica from the rows of `seed_rows`,
    /// cycling through them if there are fewer rows than chains.
    pub fn initialize(&mut self, seed_rows: ArrayView2<f64>, num_chains: usize, n_hidden: usize) {
        let rows = seed_rows.nrows();
        let x = Array2::from_shape_fn((num_chains, seed_rows.ncols()), |(i, j)| {
            seed_rows[[i % rows, j]]
        });
        self.visible = vec![x; self.betas.len()];
        self.hidden = vec![Array2::zeros((num_chains, n_hidden)); self.betas.len()];
        self.sweeps = 0;
        self.swap_attempts = 0;
        self.swap_accepts = 0;
    }

    pub fn inverse_temperatures(&self) -> &[f64] {
        &self.betas
    }

    /// Current visible states of the `β = 1` chains.
    pub fn chains(&self) -> Option<ArrayView2<'_, f64>> {
        self.visible.last().map(|x| x.view())
    }

    /// Visible states of every replica, ordered like the inverse
    /// temperatures.
    pub fn replicas(&self) -> &[Array2<f64>] {
        &self.visible
    }

    pub fn swap_acceptance_rate(&self) -> Option<f64> {
        (self.swap_attempts > 0).then(|| self.swap_accepts as f64 / self.swap_attempts as f64)
    }

    fn check(&self, p: &GrbmParams) -> Result<()> {
        let Some(x) = self.visible.last() else {
            return Err(Error::UninitializedSampler);
        };
        ensure_dim("persistent chain dimension", p.n_visible(), x.ncols())
    }
}

/// PCD-k: the `β = 1` chains advance `k` Gibbs steps from where they were.
pub fn pcd_negative_phase<R: Rng + ?Sized>(
    p: &GrbmParams,
    state: &mut SamplerState,
    k: usize,
    rng: &mut R,
) -> Result<GradientSet> {
    state.check(p)?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let last = state.visible.len() - 1;
    for _ in 0..k {
        let (x, h) = p.gibbs_sweep_batch(state.visible[last].view(), 1.0, rng);
        state.visible[last] = x;
        state.hidden[last] = h;
    }
    state.sweeps += 1;
    Ok(expectation_at(state.visible[last].view(), p))
}

/// Metropolis acceptance for exchanging the states of replicas `a` and `b`.
pub fn swap_acceptance(beta_a: f64, beta_b: f64, energy_a: f64, energy_b: f64) -> f64 {
    ((beta_a - beta_b) * (energy_a - energy_b)).exp().min(1.0)
}

/// One parallel-tempering round: a Gibbs sweep of every replica under its
/// scaled energy, then Metropolis swaps between neighbouring replicas.
/// Neighbour pairs alternate between even and odd offsets on successive
/// rounds. Statistics are read from the `β = 1` replica.
pub fn pt_negative_phase<R: Rng + ?Sized>(
    p: &GrbmParams,
    state: &mut SamplerState,
    rng: &mut R,
) -> Result<GradientSet> {
    state.check(p)?;
    for t in 0..state.betas.len() {
        let (x, h) = p.gibbs_sweep_batch(state.visible[t].view(), state.betas[t], rng);
        state.visible[t] = x;
        state.hidden[t] = h;
    }
    let replicas = state.betas.len();
    if replicas > 1 {
        let energies: Vec<_> = (0..replicas)
            .map(|t| p.energies_batch(state.visible[t].view(), state.hidden[t].view()))
            .collect();
        let start = (state.sweeps % 2) as usize;
        let chains = state.visible[0].nrows();
        for a in (start..replicas - 1).step_by(2) {
            let b = a + 1;
            let (beta_a, beta_b) = (state.betas[a], state.betas[b]);
            let (lo_x, hi_x) = state.visible.split_at_mut(b);
            let (lo_h, hi_h) = state.hidden.split_at_mut(b);
            for i in 0..chains {
                let accept = swap_acceptance(beta_a, beta_b, energies[a][i], energies[b][i]);
                state.swap_attempts += 1;
                if rng.random::<f64>() < accept {
                    state.swap_accepts += 1;
                    swap_rows(&mut lo_x[a], &mut hi_x[0], i);
                    swap_rows(&mut lo_h[a], &mut hi_h[0], i);
                }
            }
        }
    }
    state.sweeps += 1;
    let last = replicas - 1;
    Ok(expectation_at(state.visible[last].view(), p))
}

fn swap_rows(a: &mut Array2<f64>, b: &mut Array2<f64>, row: usize) {
    let mut ra = a.row_mut(row);
    let mut rb = b.row_mut(row);
    ndarray::Zip::from(&mut ra)
        .and(&mut rb)
        .for_each(|x, y| std::mem::swap(x, y));
}
