//! GRBM parameters, energy, conditional distributions and Gibbs sampling.
//!
//! Conventions: `weights` is `M × N` with column `w_{*j}` belonging to hidden
//! unit `j`; visible states are length-`M` real vectors and hidden states are
//! length-`N` vectors holding exactly `0.0` or `1.0`. Batches are row-major
//! (`L × M` visible, `L × N` hidden) and are sampled row by row, so a batch
//! draw consumes the generator exactly like the equivalent sequence of
//! single-vector draws.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::math::sigmoid;

/// Lower bound applied to `σ` whenever it is learned.
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrbmParams {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub sigma: f64,
}

impl GrbmParams {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        sigma: f64,
    ) -> Result<Self> {
        let p = Self {
            weights,
            visible_bias,
            hidden_bias,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero weights and biases: the model is `N(0, σ²I)` over `x` and
    /// uniform over `h`.
    pub fn zeros(n_visible: usize, n_hidden: usize, sigma: f64) -> Result<Self> {
        Self::new(
            Array2::zeros((n_visible, n_hidden)),
            Array1::zeros(n_visible),
            Array1::zeros(n_hidden),
            sigma,
        )
    }

    /// Random instance for tests and benchmarks: `w_ij ~ U(±weight_scale)`,
    /// `b_i, c_j ~ U(±1)`, `σ ~ U(0.6, 1.4)`.
    pub fn random<R: Rng + ?Sized>(
        n_visible: usize,
        n_hidden: usize,
        weight_scale: f64,
        rng: &mut R,
    ) -> Self {
        let weights = Array2::from_shape_fn((n_visible, n_hidden), |_| {
            rng.random_range(-weight_scale..=weight_scale)
        });
        let visible_bias = Array1::from_shape_fn(n_visible, |_| rng.random_range(-1.0..=1.0));
        let hidden_bias = Array1::from_shape_fn(n_hidden, |_| rng.random_range(-1.0..=1.0));
        let sigma = rng.random_range(0.6..1.4);
        Self {
            weights,
            visible_bias,
            hidden_bias,
            sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.weights.dim();
        if m == 0 || n == 0 {
            return Err(Error::InvalidParams(format!(
                "need at least one visible and one hidden unit, got {m}x{n}"
            )));
        }
        ensure_dim("visible bias", m, self.visible_bias.len())?;
        ensure_dim("hidden bias", n, self.hidden_bias.len())?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        let finite = self.weights.iter().all(|v| v.is_finite())
            && self.visible_bias.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter entry".into()));
        }
        Ok(())
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    /// `M·N + M + N + 1`.
    pub fn num_params(&self) -> usize {
        let (m, n) = self.weights.dim();
        m * n + m + n + 1
    }

    pub fn is_finite(&self) -> bool {
        self.sigma.is_finite()
            && self.weights.iter().all(|v| v.is_finite())
            && self.visible_bias.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite())
    }

    fn check_visible(&self, x: &ArrayView1<f64>) -> Result<()> {
        ensure_dim("visible vector", self.n_visible(), x.len())
    }

    fn check_hidden(&self, h: &ArrayView1<f64>) -> Result<()> {
        ensure_dim("hidden vector", self.n_hidden(), h.len())?;
        if h.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData(
                "hidden state entries must be exactly 0 or 1".into(),
            ));
        }
        Ok(())
    }

    /// `E(x, h) = ||x − b||²/(2σ²) − cᵀh − xᵀWh/σ²`.
    pub fn energy(&self, x: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
        self.check_visible(&x)?;
        self.check_hidden(&h)?;
        Ok(self.energy_unchecked(x, h))
    }

    pub(crate) fn energy_unchecked(&self, x: ArrayView1<f64>, h: ArrayView1<f64>) -> f64 {
        let s2 = self.sigma * self.sigma;
        let diff = &x - &self.visible_bias;
        let wh = self.weights.dot(&h);
        diff.dot(&diff) / (2.0 * s2) - self.hidden_bias.dot(&h) - x.dot(&wh) / s2
    }

    /// Joint energies of paired rows.
    pub fn energies_batch(&self, x: ArrayView2<f64>, h: ArrayView2<f64>) -> Array1<f64> {
        let s2 = self.sigma * self.sigma;
        let wh = h.dot(&self.weights.t());
        let mut out = Array1::zeros(x.nrows());
        Zip::from(&mut out)
            .and(x.rows())
            .and(h.rows())
            .and(wh.rows())
            .for_each(|e, xr, hr, whr| {
                let mut quad = 0.0;
                for (xi, bi) in xr.iter().zip(self.visible_bias.iter()) {
                    quad += (xi - bi) * (xi - bi);
                }
                *e = quad / (2.0 * s2) - self.hidden_bias.dot(&hr) - xr.dot(&whr) / s2;
            });
        out
    }

    /// Parameters of `P(x | h) = N(b + Wh, σ²I)`.
    pub fn visible_conditional(&self, h: ArrayView1<f64>) -> Result<(Array1<f64>, f64)> {
        self.check_hidden(&h)?;
        Ok((&self.visible_bias + &self.weights.dot(&h), self.sigma))
    }

    /// Hidden pre-activations `c_j + xᵀw_{*j}/σ²`.
    pub fn hidden_preactivation(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_visible(&x)?;
        let s2 = self.sigma * self.sigma;
        Ok(&self.hidden_bias + &(x.dot(&self.weights) / s2))
    }

    /// `P(h_j = 1 | x) = logistic(c_j + xᵀw_{*j}/σ²)`.
    pub fn hidden_activation_probs(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.hidden_preactivation(x)?.mapv(sigmoid))
    }

    pub fn sample_hidden<R: Rng + ?Sized>(
        &self,
        x: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let probs = self.hidden_activation_probs(x)?;
        Ok(probs.mapv(|p| bernoulli(p, rng)))
    }

    pub fn sample_visible<R: Rng + ?Sized>(
        &self,
        h: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let (mean, sigma) = self.visible_conditional(h)?;
        Ok(mean.mapv(|mu| mu + sigma * Distribution::<f64>::sample(&StandardNormal, rng)))
    }

    /// One alternating step: `h ~ P(h|x)`, then `x' ~ P(x|h)`.
    pub fn gibbs_step<R: Rng + ?Sized>(
        &self,
        x: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let h = self.sample_hidden(x, rng)?;
        let x_next = self.sample_visible(h.view(), rng)?;
        Ok((x_next, h))
    }

    /// Pre-activations for every row of `x`, scaled by the inverse
    /// temperature `beta`.
    pub fn hidden_preactivation_batch(&self, x: ArrayView2<f64>, beta: f64) -> Array2<f64> {
        let s2 = self.sigma * self.sigma;
        let mut a = x.dot(&self.weights);
        let scale = beta / s2;
        Zip::from(a.rows_mut()).for_each(|mut row| {
            Zip::from(&mut row)
                .and(&self.hidden_bias)
                .for_each(|v, &c| *v = beta * c + scale * *v);
        });
        a
    }

    pub fn hidden_probs_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.hidden_preactivation_batch(x, 1.0).mapv(sigmoid)
    }

    /// Hidden states for every row of `x` under the energy scaled by `beta`.
    pub fn sample_hidden_batch<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        beta: f64,
        rng: &mut R,
    ) -> Array2<f64> {
        let mut a = self.hidden_preactivation_batch(x, beta);
        a.iter_mut().for_each(|v| *v = bernoulli(sigmoid(*v), rng));
        a
    }

    /// Visible states for every row of `h` under the energy scaled by
    /// `beta`: `x ~ N(b + Wh, σ²/β)`.
    pub fn sample_visible_batch<R: Rng + ?Sized>(
        &self,
        h: ArrayView2<f64>,
        beta: f64,
        rng: &mut R,
    ) -> Array2<f64> {
        let std = self.sigma / beta.sqrt();
        let mut x = h.dot(&self.weights.t());
        for mut row in x.rows_mut() {
            Zip::from(&mut row)
                .and(&self.visible_bias)
                .for_each(|v, &b| {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += b + std * z;
                });
        }
        x
    }

    /// One Gibbs sweep over every row. Returns the new visible rows and the
    /// hidden rows that generated them.
    pub fn gibbs_sweep_batch<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        beta: f64,
        rng: &mut R,
    ) -> (Array2<f64>, Array2<f64>) {
        // Rows are independent chains; interleave per row so a batch sweep
        // matches repeated single-vector `gibbs_step` calls.
        let (l, m) = x.dim();
        let n = self.n_hidden();
        let mut xs = Array2::zeros((l, m));
        let mut hs = Array2::zeros((l, n));
        let a = self.hidden_preactivation_batch(x, beta);
        let std = self.sigma / beta.sqrt();
        for r in 0..l {
            let mut hrow = hs.row_mut(r);
            Zip::from(&mut hrow)
                .and(a.row(r))
                .for_each(|h, &ar| *h = bernoulli(sigmoid(ar), rng));
            let mean = &self.visible_bias + &self.weights.dot(&hrow);
            let mut xrow = xs.row_mut(r);
            Zip::from(&mut xrow).and(&mean).for_each(|v, &mu| {
                let z: f64 = StandardNormal.sample(rng);
                *v = mu + std * z;
            });
        }
        (xs, hs)
    }
}

#[inline]
pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Binary hidden state whose bit `j` of `index` is unit `j`.
pub fn hidden_state(index: u64, n_hidden: usize) -> Array1<f64> {
    Array1::from_shape_fn(n_hidden, |j| ((index >> j) & 1) as f64)
}

/// Rows are i.i.d. observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch(Array2<f64>);

impl DataBatch {
    pub fn new(samples: Array2<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidData(format!(
                "data batch must be non-empty, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "data batch has non-finite entries".into(),
            ));
        }
        Ok(Self(samples))
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn mean(&self) -> Array1<f64> {
        self.0.mean_axis(Axis(0)).expect("non-empty batch")
    }

    /// Largest Euclidean row norm.
    pub fn max_norm(&self) -> f64 {
        self.0
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn select(&self, rows: &[usize]) -> DataBatch {
        DataBatch(self.0.select(Axis(0), rows))
    }
}

/// Gradient (or update) blocks, shaped like [`GrbmParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub d_w: Array2<f64>,
    pub d_b: Array1<f64>,
    pub d_c: Array1<f64>,
    pub d_sigma: f64,
}

impl GradientSet {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            d_w: Array2::zeros((n_visible, n_hidden)),
            d_b: Array1::zeros(n_visible),
            d_c: Array1::zeros(n_hidden),
            d_sigma: 0.0,
        }
    }

    pub fn zeros_like(p: &GrbmParams) -> Self {
        Self::zeros(p.n_visible(), p.n_hidden())
    }

    /// `self − other`, block by block.
    pub fn minus(&self, other: &GradientSet) -> GradientSet {
        GradientSet {
            d_w: &self.d_w - &other.d_w,
            d_b: &self.d_b - &other.d_b,
            d_c: &self.d_c - &other.d_c,
            d_sigma: self.d_sigma - other.d_sigma,
        }
    }

    pub fn scaled(&self, factor: f64) -> GradientSet {
        GradientSet {
            d_w: &self.d_w * factor,
            d_b: &self.d_b * factor,
            d_c: &self.d_c * factor,
            d_sigma: self.d_sigma * factor,
        }
    }

    /// Euclidean norm over all blocks.
    pub fn norm(&self) -> f64 {
        (self.d_w.iter().map(|v| v * v).sum::<f64>()
            + self.d_b.dot(&self.d_b)
            + self.d_c.dot(&self.d_c)
            + self.d_sigma * self.d_sigma)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.d_sigma.is_finite()
            && self.d_w.iter().all(|v| v.is_finite())
            && self.d_b.iter().all(|v| v.is_finite())
            && self.d_c.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    /// Double-sum form of the energy, written independently of the
    /// vectorised implementation.
    fn energy_double_sum(x: &[f64], h: &[f64], p: &GrbmParams) -> f64 {
        let s2 = p.sigma * p.sigma;
        let mut e = 0.0;
        for i in 0..x.len() {
            e += (x[i] - p.visible_bias[i]).powi(2) / (2.0 * s2);
        }
        for j in 0..h.len() {
            e -= p.hidden_bias[j] * h[j];
        }
        for i in 0..x.len() {
            for j in 0..h.len() {
                e -= x[i] * p.weights[[i, j]] * h[j] / s2;
            }
        }
        e
    }

    #[test]
    fn energy_vanishes_at_origin() {
        let mut rng = seeded(1);
        let mut p = GrbmParams::random(3, 2, 1.0, &mut rng);
        p.visible_bias.fill(0.0);
        p.sigma = 1.0;
        let e = p
            .energy(Array1::zeros(3).view(), Array1::zeros(2).view())
            .unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn energy_direct_substitution() {
        let p = GrbmParams::new(array![[1.0], [0.0]], array![0.0, 0.0], array![0.0], 1.0).unwrap();
        let e = p
            .energy(array![1.0, 0.0].view(), array![1.0].view())
            .unwrap();
        assert!((e - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn energy_matches_double_sum() {
        let mut rng = seeded(2);
        for _ in 0..20 {
            let p = GrbmParams::random(3, 2, 1.5, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            for idx in 0..4 {
                let h = hidden_state(idx, 2);
                let e = p.energy(Array1::from(x.clone()).view(), h.view()).unwrap();
                let oracle = energy_double_sum(&x, h.as_slice().unwrap(), &p);
                assert!(
                    (e - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                    "{e} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn energy_rejects_mismatch_and_non_binary() {
        let p = GrbmParams::zeros(2, 2, 1.0).unwrap();
        assert!(matches!(
            p.energy(array![1.0].view(), array![0.0, 1.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(p
            .energy(array![1.0, 2.0].view(), array![0.5, 1.0].view())
            .is_err());
    }

    #[test]
    fn batch_energies_match_single() {
        let mut rng = seeded(3);
        let p = GrbmParams::random(4, 3, 1.0, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-2.0..2.0));
        let h = Array2::from_shape_fn((5, 3), |_| bernoulli(0.5, &mut rng));
        let e = p.energies_batch(x.view(), h.view());
        for r in 0..5 {
            let single = p.energy(x.row(r), h.row(r)).unwrap();
            assert!((e[r] - single).abs() < 1e-12);
        }
    }

    #[test]
    fn visible_conditional_mean() {
        let p = GrbmParams::new(
            array![[1.0, 0.0], [0.0, 1.0]],
            array![0.0, 0.0],
            array![0.3, -0.2],
            0.7,
        )
        .unwrap();
        let (mean, s) = p.visible_conditional(array![1.0, 1.0].view()).unwrap();
        assert_eq!(mean, array![1.0, 1.0]);
        assert_eq!(s, 0.7);
        let mut rng = seeded(4);
        let q = GrbmParams::random(3, 2, 1.0, &mut rng);
        let (mean, _) = q.visible_conditional(array![0.0, 0.0].view()).unwrap();
        assert_eq!(mean, q.visible_bias);
    }

    #[test]
    fn visible_conditional_matches_coordinatewise_form() {
        // P(x_i|h) = N(b_i + w_{i*}ᵀh, σ²) per coordinate.
        let mut rng = seeded(5);
        let p = GrbmParams::random(4, 3, 1.0, &mut rng);
        for idx in 0..8 {
            let h = hidden_state(idx, 3);
            let (mean, _) = p.visible_conditional(h.view()).unwrap();
            for i in 0..4 {
                let mut mu = p.visible_bias[i];
                for j in 0..3 {
                    mu += p.weights[[i, j]] * h[j];
                }
                assert!((mean[i] - mu).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn visible_conditional_density_integrates_to_one() {
        let mut rng = seeded(6);
        let p = GrbmParams::random(2, 2, 1.0, &mut rng);
        let (mean, s) = p.visible_conditional(array![1.0, 0.0].view()).unwrap();
        for &mu in mean.iter() {
            let step = 1e-3;
            let mut total = 0.0;
            let mut x = mu - 10.0 * s + step / 2.0;
            while x < mu + 10.0 * s {
                total += (-(x - mu).powi(2) / (2.0 * s * s)).exp()
                    / (2.0 * std::f64::consts::PI * s * s).sqrt()
                    * step;
                x += step;
            }
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hidden_probs_half_at_zero_input() {
        let p = GrbmParams::zeros(3, 4, 1.0).unwrap();
        let probs = p
            .hidden_activation_probs(array![0.3, -1.0, 2.0].view())
            .unwrap();
        assert!(probs.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hidden_probs_match_brute_force_normalisation() {
        let mut rng = seeded(7);
        for _ in 0..10 {
            let p = GrbmParams::random(2, 3, 1.5, &mut rng);
            let x = array![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            // Marginalise the other hidden units explicitly from joint energies.
            let weights: Vec<(Array1<f64>, f64)> = (0..8)
                .map(|i| {
                    let h = hidden_state(i, 3);
                    let e = energy_double_sum(x.as_slice().unwrap(), h.as_slice().unwrap(), &p);
                    (h, (-e).exp())
                })
                .collect();
            let total: f64 = weights.iter().map(|(_, w)| w).sum();
            let probs = p.hidden_activation_probs(x.view()).unwrap();
            for j in 0..3 {
                let on: f64 = weights
                    .iter()
                    .filter(|(h, _)| h[j] == 1.0)
                    .map(|(_, w)| w)
                    .sum();
                assert!((probs[j] - on / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hidden_probs_monotone_in_bias_and_saturating() {
        let mut p = GrbmParams::zeros(2, 1, 1.0).unwrap();
        let x = array![0.4, -0.3];
        let mut last = 0.0;
        for c in [-20.0, -5.0, -1.0, 0.0, 1.0, 5.0, 20.0] {
            p.hidden_bias[0] = c;
            let v = p.hidden_activation_probs(x.view()).unwrap()[0];
            assert!(v > last && v < 1.0);
            last = v;
        }
        assert!(last > 1.0 - 1e-8);
    }

    #[test]
    fn sample_hidden_extremes() {
        let mut rng = seeded(8);
        let mut p = GrbmParams::zeros(2, 5, 1.0).unwrap();
        p.hidden_bias.fill(800.0);
        let h = p.sample_hidden(array![0.0, 0.0].view(), &mut rng).unwrap();
        assert!(h.iter().all(|&v| v == 1.0));
        p.hidden_bias.fill(-800.0);
        let h = p.sample_hidden(array![0.0, 0.0].view(), &mut rng).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sample_hidden_binomial_bound() {
        let mut rng = seeded(9);
        let p = GrbmParams::zeros(1, 1, 1.0).unwrap();
        let n = 100_000;
        let ones: f64 = (0..n)
            .map(|_| p.sample_hidden(array![0.0].view(), &mut rng).unwrap()[0])
            .sum();
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones - n as f64 * 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn sample_visible_moments_and_determinism() {
        let p = GrbmParams::zeros(1, 1, 1.0).unwrap();
        let mut rng = seeded(10);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| p.sample_visible(array![0.0].view(), &mut rng).unwrap()[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        // Var of the sample variance for a Gaussian is 2σ⁴/n.
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());

        let mut q = GrbmParams::random(3, 2, 1.0, &mut seeded(11));
        let a = q
            .sample_visible(array![1.0, 0.0].view(), &mut seeded(12))
            .unwrap();
        let b = q
            .sample_visible(array![1.0, 0.0].view(), &mut seeded(12))
            .unwrap();
        assert_eq!(a, b);
        q.sigma = 1e-12;
        let x = q.sample_visible(array![1.0, 1.0].view(), &mut rng).unwrap();
        let (mean, _) = q.visible_conditional(array![1.0, 1.0].view()).unwrap();
        assert!((&x - &mean).iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn gibbs_step_is_composition() {
        let p = GrbmParams::random(3, 4, 1.0, &mut seeded(13));
        let x0 = array![0.5, -0.2, 1.0];
        let (x1, h1) = p.gibbs_step(x0.view(), &mut seeded(14)).unwrap();
        let mut rng = seeded(14);
        let h = p.sample_hidden(x0.view(), &mut rng).unwrap();
        let x = p.sample_visible(h.view(), &mut rng).unwrap();
        assert_eq!(h, h1);
        assert_eq!(x, x1);
        let (x2, _) = p.gibbs_step(x0.view(), &mut seeded(14)).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn batch_sweep_matches_repeated_single_steps() {
        let p = GrbmParams::random(3, 4, 1.0, &mut seeded(15));
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let (xs, hs) = p.gibbs_sweep_batch(x.view(), 1.0, &mut seeded(16));
        let mut rng = seeded(16);
        for r in 0..4 {
            let (x1, h1) = p.gibbs_step(x.row(r), &mut rng).unwrap();
            assert_eq!(h1, hs.row(r));
            for (a, b) in x1.iter().zip(xs.row(r).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn data_batch_validation() {
        assert!(DataBatch::new(Array2::zeros((0, 2))).is_err());
        assert!(DataBatch::new(array![[1.0, f64::NAN]]).is_err());
        let d = DataBatch::new(array![[3.0, 4.0], [0.0, 1.0]]).unwrap();
        assert_eq!(d.max_norm(), 5.0);
        assert_eq!(d.mean(), array![1.5, 2.5]);
    }

    #[test]
    fn params_validation() {
        assert!(GrbmParams::zeros(2, 2, 0.0).is_err());
        assert!(GrbmParams::zeros(0, 2, 1.0).is_err());
        assert!(GrbmParams::new(
            Array2::zeros((2, 2)),
            Array1::zeros(3),
            Array1::zeros(2),
            1.0
        )
        .is_err());
        assert_eq!(GrbmParams::zeros(3, 2, 1.0).unwrap().num_params(), 12);
    }
}
