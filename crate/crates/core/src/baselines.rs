//! Reference models for the separation task: FastICA, an isotropic Gaussian,
//! isotropic Gaussian mixtures fit by EM, closed-form likelihoods, and the
//! Amari error.

use std::f64::consts::{LN_2, PI, SQRT_2};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{sorted_eigen, BssGroundTruth};
use crate::error::{ensure_dim, Error, Result};
use crate::math::{determinant, invert, log_sum_exp};
use crate::model::DataBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    /// Rows are the filters `w_{*j}ᵀ`.
    pub unmixing: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `(WWᵀ)^{−1/2} W`.
pub fn symmetric_decorrelation(w: &Array2<f64>) -> Array2<f64> {
    let (values, vectors) = sorted_eigen(&w.dot(&w.t()));
    let inv_sqrt = values.mapv(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt());
    let scaled = &vectors * &inv_sqrt.view().insert_axis(Axis(0));
    scaled.dot(&vectors.t()).dot(w)
}

/// Symmetric FastICA with the `tanh` contrast on whitened data. Stops once
/// the largest angle between a filter and its previous value drops below
/// `tol` radians; hitting `max_iter` first returns the current filters with
/// `converged = false`.
pub fn fast_ica<R: Rng + ?Sized>(
    d: &DataBatch,
    tol: f64,
    max_iter: usize,
    rng: &mut R,
) -> Result<IcaModel> {
    let m = d.dim();
    let x = d.samples();
    let l = d.len() as f64;
    let init = Array2::from_shape_simple_fn((m, m), || StandardNormal.sample(rng));
    let mut w = symmetric_decorrelation(&init);
    for it in 1..=max_iter {
        let y = x.dot(&w.t());
        let g = y.mapv(f64::tanh);
        let g_prime_mean = g
            .mapv(|t| 1.0 - t * t)
            .mean_axis(Axis(0))
            .expect("non-empty");
        let mut next = g.t().dot(x) / l;
        for (mut row, (&gp, old)) in next
            .rows_mut()
            .into_iter()
            .zip(g_prime_mean.iter().zip(w.rows()))
        {
            row.scaled_add(-gp, &old);
        }
        let next = symmetric_decorrelation(&next);
        let max_angle = next
            .rows()
            .into_iter()
            .zip(w.rows())
            .map(|(a, b)| a.dot(&b).abs().min(1.0).acos())
            .fold(0.0, f64::max);
        w = next;
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("FastICA filters"));
        }
        if max_angle < tol {
            return Ok(IcaModel {
                unmixing: w,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(IcaModel {
        unmixing: w,
        iterations: max_iter,
        converged: false,
    })
}

/// `ln(2 cosh² y)` without overflow.
fn ln_two_cosh_sq(y: f64) -> f64 {
    let a = y.abs();
    // cosh y = e^{|y|}(1 + e^{−2|y|})/2.
    LN_2 + 2.0 * (a + (-2.0 * a).exp().ln_1p() - LN_2)
}

/// Average log-likelihood under independent `1/(2cosh²)` sources:
/// `−⟨Σ_j ln 2cosh²(w_{*j}ᵀx)⟩ + ln|det W|`.
pub fn ica_avg_ll(d: &DataBatch, model: &IcaModel) -> Result<f64> {
    let w = &model.unmixing;
    ensure_dim("unmixing columns", d.dim(), w.ncols())?;
    ensure_dim("unmixing rows", w.ncols(), w.nrows())?;
    let det = determinant(w);
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Singular("unmixing matrix"));
    }
    let y = d.samples().dot(&w.t());
    let total: f64 = y.iter().map(|&v| ln_two_cosh_sq(v)).sum();
    Ok(-total / d.len() as f64 + det.abs().ln())
}

/// Exact average log-likelihood of whitened two-source Laplacian data:
/// `−√2⟨|u_{1*}x| + |u_{2*}x|⟩ − ln 2 + ln|det U|`.
pub fn true_bss_avg_ll(d: &DataBatch, truth: &BssGroundTruth) -> Result<f64> {
    ensure_dim("separation data dimension", 2, d.dim())?;
    let u = &truth.unmixing_true;
    ensure_dim("unmixing dimension", 2, u.nrows())?;
    let s = d.samples().dot(&u.t());
    let abs_sum: f64 = s.iter().map(|v| v.abs()).sum();
    Ok(-SQRT_2 * abs_sum / d.len() as f64 - LN_2 + determinant(u).abs().ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicGaussian {
    pub mean: Array1<f64>,
    pub variance: f64,
}

impl IsotropicGaussian {
    /// Maximum-likelihood mean and shared variance.
    pub fn fit(d: &DataBatch) -> Result<Self> {
        let mean = d.mean();
        let centred = d.samples() - &mean;
        let variance = centred.iter().map(|v| v * v).sum::<f64>() / (d.len() * d.dim()) as f64;
        if !(variance > 0.0) {
            return Err(Error::ZeroVariance("isotropic Gaussian fit"));
        }
        Ok(Self { mean, variance })
    }

    pub fn log_pdf_rows(&self, d: &DataBatch) -> Result<Array1<f64>> {
        ensure_dim("data dimension", self.mean.len(), d.dim())?;
        let norm = 0.5 * d.dim() as f64 * (2.0 * PI * self.variance).ln();
        Ok(d.samples()
            .rows()
            .into_iter()
            .map(|x| {
                let diff = &x - &self.mean;
                -diff.dot(&diff) / (2.0 * self.variance) - norm
            })
            .collect())
    }

    pub fn avg_ll(&self, d: &DataBatch) -> Result<f64> {
        Ok(self.log_pdf_rows(d)?.mean().expect("non-empty"))
    }
}

/// Fits the isotropic Gaussian on `train` and evaluates it on `test`.
pub fn gaussian_avg_ll(train: &DataBatch, test: &DataBatch) -> Result<f64> {
    IsotropicGaussian::fit(train)?.avg_ll(test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    Shared,
    PerComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicMog {
    /// One mean per row.
    pub means: Array2<f64>,
    pub variances: Array1<f64>,
    pub weights: Array1<f64>,
}

/// Components whose variance falls under this are re-seeded.
pub const MOG_VARIANCE_FLOOR: f64 = 1e-6;

impl IsotropicMog {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    /// `ln(π_k N(x; μ_k, s_k² I))` for every row and component.
    pub fn joint_log_densities(&self, d: &DataBatch) -> Result<Array2<f64>> {
        ensure_dim("data dimension", self.means.ncols(), d.dim())?;
        let m = d.dim() as f64;
        let x = d.samples();
        let mut out = Array2::zeros((d.len(), self.num_components()));
        for (k, mean) in self.means.rows().into_iter().enumerate() {
            let var = self.variances[k];
            let offset = self.weights[k].ln() - 0.5 * m * (2.0 * PI * var).ln();
            for (i, row) in x.rows().into_iter().enumerate() {
                out[[i, k]] = offset - squared_distance(row, mean) / (2.0 * var);
            }
        }
        Ok(out)
    }

    pub fn avg_ll(&self, d: &DataBatch) -> Result<f64> {
        let joint = self.joint_log_densities(d)?;
        let total: f64 = joint
            .rows()
            .into_iter()
            .map(|r| log_sum_exp(r.as_slice().expect("contiguous row")))
            .sum();
        Ok(total / d.len() as f64)
    }
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogFit {
    pub model: IsotropicMog,
    /// Training average log-likelihood before each M step, then after the
    /// last.
    pub trace: Vec<f64>,
    /// Number of collapse re-seeds; the trace is only monotone when zero.
    pub reseeds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MogInit {
    /// Means at `k` distinct random data points, uniform weights.
    RandomPoints,
    /// One component at the data mean holding most of the weight, the rest
    /// at random data points sharing [`ANCHORED_INIT_REST`].
    Anchored,
}

impl std::str::FromStr for MogInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-points" => Ok(Self::RandomPoints),
            "anchored" => Ok(Self::Anchored),
            _ => Err(Error::InvalidConfig(format!("unknown MoG init {s:?}"))),
        }
    }
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(Self::Shared),
            "per-component" => Ok(Self::PerComponent),
            _ => Err(Error::InvalidConfig(format!("unknown variance mode {s:?}"))),
        }
    }
}

/// Total initial weight of the non-anchor components under
/// [`MogInit::Anchored`].
pub const ANCHORED_INIT_REST: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MogOptions {
    pub max_iter: usize,
    /// Stop once the per-sample log-likelihood gain drops below this.
    pub tol: f64,
    pub variance: VarianceMode,
    pub init: MogInit,
    /// Independent runs; the one with the best final training likelihood
    /// is kept.
    pub restarts: usize,
}

impl Default for MogOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-9,
            variance: VarianceMode::Shared,
            init: MogInit::Anchored,
            restarts: 1,
        }
    }
}

/// EM for an isotropic Gaussian mixture with variances starting at the data
/// variance.
pub fn em_isotropic_mog<R: Rng + ?Sized>(
    d: &DataBatch,
    k: usize,
    opts: &MogOptions,
    rng: &mut R,
) -> Result<MogFit> {
    let mut best: Option<MogFit> = None;
    for _ in 0..opts.restarts.max(1) {
        let fit = em_single(d, k, opts, rng)?;
        let last = |f: &MogFit| f.trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| last(&fit) > last(b)) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}

fn em_single<R: Rng + ?Sized>(
    d: &DataBatch,
    k: usize,
    opts: &MogOptions,
    rng: &mut R,
) -> Result<MogFit> {
    if k == 0 {
        return Err(Error::InvalidConfig(
            "MoG needs at least one component".into(),
        ));
    }
    if k > d.len() {
        return Err(Error::InvalidData(format!(
            "{k} components but only {} samples",
            d.len()
        )));
    }
    let base = IsotropicGaussian::fit(d)?;
    let x = d.samples();
    let (l, m) = x.dim();
    let picks = sample_indices(rng, l, k).into_vec();
    let mut model = IsotropicMog {
        means: x.select(Axis(0), &picks),
        variances: Array1::from_elem(k, base.variance),
        weights: Array1::from_elem(k, 1.0 / k as f64),
    };
    if opts.init == MogInit::Anchored && k > 1 {
        model.means.row_mut(0).assign(&base.mean);
        model.weights.fill(ANCHORED_INIT_REST / (k - 1) as f64);
        model.weights[0] = 1.0 - ANCHORED_INIT_REST;
    }
    let (iters, tol, mode) = (opts.max_iter, opts.tol, opts.variance);
    let mut trace = Vec::new();
    let mut reseeds = 0;
    for _ in 0..iters {
        // E step.
        let joint = model.joint_log_densities(d)?;
        let mut resp = joint.clone();
        let mut ll = 0.0;
        for mut row in resp.rows_mut() {
            let lse = log_sum_exp(row.as_slice().expect("contiguous row"));
            ll += lse;
            row.mapv_inplace(|v| (v - lse).exp());
        }
        ll /= l as f64;
        let gain = trace.last().map(|&prev| ll - prev);
        trace.push(ll);
        if gain.is_some_and(|g| g.abs() < tol) {
            return Ok(MogFit {
                model,
                trace,
                reseeds,
            });
        }
        // M step.
        let nk = resp.sum_axis(Axis(0));
        let mut sq = Array1::zeros(k);
        for j in 0..k {
            if nk[j] <= 0.0 {
                continue;
            }
            let r = resp.column(j);
            let mean = r.dot(x) / nk[j];
            sq[j] = x
                .rows()
                .into_iter()
                .zip(r.iter())
                .map(|(row, &w)| w * squared_distance(row, mean.view()))
                .sum::<f64>();
            model.means.row_mut(j).assign(&mean);
        }
        model.weights = &nk / l as f64;
        match mode {
            VarianceMode::Shared => {
                let v = sq.sum() / (l * m) as f64;
                model.variances.fill(v);
            }
            VarianceMode::PerComponent => {
                for j in 0..k {
                    model.variances[j] = if nk[j] > 0.0 {
                        sq[j] / (nk[j] * m as f64)
                    } else {
                        0.0
                    };
                }
            }
        }
        for j in 0..k {
            if !(model.variances[j] >= MOG_VARIANCE_FLOOR) || !(model.weights[j] > 0.0) {
                reseeds += 1;
                let pick = rng.random_range(0..l);
                model.means.row_mut(j).assign(&x.row(pick));
                model.variances[j] = base.variance;
                model.weights[j] = 1.0 / k as f64;
                let total = model.weights.sum();
                model.weights /= total;
            }
        }
    }
    trace.push(model.avg_ll(d)?);
    Ok(MogFit {
        model,
        trace,
        reseeds,
    })
}

pub fn mog_avg_ll(d: &DataBatch, m: &IsotropicMog) -> Result<f64> {
    m.avg_ll(d)
}

/// Mixing weights in decreasing order.
pub fn mog_order_mass(m: &IsotropicMog) -> Vec<f64> {
    let mut w = m.weights.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

/// `(1/2N) Σ_ij [|P_ij|/max_k|P_ik| + |P_ij|/max_k|P_kj|] − 1` with
/// `P = A B^{−1}`.
pub fn amari_error(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    ensure_dim("Amari error operand", a.nrows(), a.ncols())?;
    ensure_dim("Amari error operands", a.nrows(), b.nrows())?;
    ensure_dim("Amari error operand", b.nrows(), b.ncols())?;
    let b_inv = invert(b).ok_or(Error::Singular("Amari error reference"))?;
    let p = a.dot(&b_inv).mapv(f64::abs);
    let n = p.nrows();
    let row_max = p.map_axis(Axis(1), |r| r.fold(0.0f64, |m, &v| m.max(v)));
    let col_max = p.map_axis(Axis(0), |c| c.fold(0.0f64, |m, &v| m.max(v)));
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += p[[i, j]] / row_max[i] + p[[i, j]] / col_max[j];
        }
    }
    if !total.is_finite() {
        return Err(Error::Singular("Amari error product"));
    }
    Ok(total / (2.0 * n as f64) - 1.0)
}

/// Amari errors between pairs of independent random matrices with entries
/// uniform on `[−1, 1]`, as a reference distribution.
pub fn random_amari_baseline<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = Array2::from_shape_simple_fn((dim, dim), || rng.random_range(-1.0..=1.0));
        let b = Array2::from_shape_simple_fn((dim, dim), || rng.random_range(-1.0..=1.0));
        if let Ok(e) = amari_error(&a, &b) {
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{laplacian_sources, WhiteningKind, WhiteningTransform};
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn ln_two_cosh_sq_matches_naive() {
        for y in [-30.0, -2.0, 0.0, 0.5, 3.0] {
            let naive = (2.0 * f64::cosh(y).powi(2)).ln();
            assert!((ln_two_cosh_sq(y) - naive).abs() < 1e-12, "{y}");
        }
        assert!(ln_two_cosh_sq(1000.0).is_finite());
    }

    #[test]
    fn ica_ll_at_origin() {
        let d = DataBatch::new(array![[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let model = IcaModel {
            unmixing: Array2::eye(2),
            iterations: 0,
            converged: true,
        };
        assert!((ica_avg_ll(&d, &model).unwrap() + 2.0 * LN_2).abs() < 1e-15);
        let singular = IcaModel {
            unmixing: array![[1.0, 1.0], [1.0, 1.0]],
            ..model
        };
        assert!(matches!(ica_avg_ll(&d, &singular), Err(Error::Singular(_))));
    }

    #[test]
    fn true_ll_at_origin() {
        let d = DataBatch::new(array![[0.0, 0.0]]).unwrap();
        let eye = Array2::<f64>::eye(2);
        let truth = BssGroundTruth {
            mixing: eye.clone(),
            whitening: WhiteningTransform {
                mean: Array1::zeros(2),
                forward: eye.clone(),
                inverse: eye.clone(),
                kind: WhiteningKind::Pca,
            },
            unmixing_true: eye,
        };
        assert!((true_bss_avg_ll(&d, &truth).unwrap() + LN_2).abs() < 1e-15);
    }

    #[test]
    fn ica_on_raw_sources_finds_a_signed_permutation() {
        let s = laplacian_sources(20_000, 2, &mut seeded(1));
        let d = DataBatch::new(s).unwrap();
        let model = fast_ica(&d, 1e-6, 200, &mut seeded(2)).unwrap();
        assert!(model.converged);
        let wwt = model.unmixing.dot(&model.unmixing.t());
        assert!((&wwt - &Array2::<f64>::eye(2))
            .iter()
            .all(|v| v.abs() < 1e-8));
        assert!(amari_error(&model.unmixing, &Array2::eye(2)).unwrap() < 0.05);
    }

    #[test]
    fn gaussian_fit_and_degenerate_input() {
        let d = DataBatch::new(array![[1.0, 2.0]]).unwrap();
        assert!(matches!(
            IsotropicGaussian::fit(&d),
            Err(Error::ZeroVariance(_))
        ));
        let d = DataBatch::new(array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let g = IsotropicGaussian::fit(&d).unwrap();
        assert!((g.variance - 0.5).abs() < 1e-15);
        // Each point at squared distance 1: −1/(2·0.5) − ln(2π·0.5).
        let expect = -1.0 - PI.ln();
        assert!((g.avg_ll(&d).unwrap() - expect).abs() < 1e-14);
    }

    fn opts(max_iter: usize, variance: VarianceMode) -> MogOptions {
        MogOptions {
            max_iter,
            tol: 0.0,
            variance,
            init: MogInit::RandomPoints,
            restarts: 1,
        }
    }

    #[test]
    fn restarts_keep_the_best_run() {
        let s = laplacian_sources(1000, 2, &mut seeded(9));
        let d = DataBatch::new(s).unwrap();
        let single = |seed| {
            em_isotropic_mog(&d, 3, &opts(30, VarianceMode::Shared), &mut seeded(seed)).unwrap()
        };
        let best = em_isotropic_mog(
            &d,
            3,
            &MogOptions {
                restarts: 3,
                ..opts(30, VarianceMode::Shared)
            },
            &mut seeded(10),
        )
        .unwrap();
        // The three runs share one generator, so compare against a replay.
        let mut rng = seeded(10);
        let runs: Vec<f64> = (0..3)
            .map(|_| {
                *em_isotropic_mog(&d, 3, &opts(30, VarianceMode::Shared), &mut rng)
                    .unwrap()
                    .trace
                    .last()
                    .unwrap()
            })
            .collect();
        let top = runs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(*best.trace.last().unwrap(), top);
        assert!(single(10).trace.last().unwrap() <= &top);
    }

    #[test]
    fn anchored_init_starts_at_the_mean() {
        let s = laplacian_sources(1000, 2, &mut seeded(11));
        let d = DataBatch::new(s).unwrap();
        let fit = em_isotropic_mog(
            &d,
            3,
            &MogOptions {
                max_iter: 0,
                init: MogInit::Anchored,
                ..MogOptions::default()
            },
            &mut seeded(12),
        )
        .unwrap();
        assert_eq!(fit.model.means.row(0), d.mean());
        assert_eq!(fit.model.weights.to_vec(), vec![0.9, 0.05, 0.05]);
    }

    #[test]
    fn single_component_mog_is_the_gaussian() {
        let s = laplacian_sources(500, 2, &mut seeded(3));
        let d = DataBatch::new(s).unwrap();
        for mode in [VarianceMode::Shared, VarianceMode::PerComponent] {
            let fit = em_isotropic_mog(&d, 1, &opts(20, mode), &mut seeded(4)).unwrap();
            let g = gaussian_avg_ll(&d, &d).unwrap();
            assert!((fit.model.avg_ll(&d).unwrap() - g).abs() < 1e-10);
        }
    }

    #[test]
    fn em_is_monotone() {
        let s = laplacian_sources(2000, 2, &mut seeded(5));
        let d = DataBatch::new(s).unwrap();
        for mode in [VarianceMode::Shared, VarianceMode::PerComponent] {
            let fit = em_isotropic_mog(&d, 3, &opts(100, mode), &mut seeded(6)).unwrap();
            assert_eq!(fit.reseeds, 0);
            for w in fit.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "{mode:?}: {} -> {}", w[0], w[1]);
            }
            assert!((fit.model.weights.sum() - 1.0).abs() < 1e-12);
            let mass = mog_order_mass(&fit.model);
            assert!(mass.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn amari_properties() {
        let b = array![[0.3, -1.2], [0.8, 0.5]];
        assert!(amari_error(&b, &b).unwrap().abs() < 1e-15);
        let perm = array![[0.0, 3.0], [-2.0, 0.0]];
        assert!(amari_error(&perm.dot(&b), &b).unwrap().abs() < 1e-14);
        // P = [[1, 1], [0, 1]]: rows give 2 + 1, columns 1 + 2, so 6/4 − 1.
        let a = array![[1.0, 1.0], [0.0, 1.0]].dot(&b);
        assert!((amari_error(&a, &b).unwrap() - 0.5).abs() < 1e-14);
        assert!(amari_error(&b, &array![[1.0, 1.0], [1.0, 1.0]]).is_err());
        let base = random_amari_baseline(2, 100, &mut seeded(7));
        assert!(base.iter().all(|&e| (0.0..=1.0 + 1e-12).contains(&e)));
    }
}
