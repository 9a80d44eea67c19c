use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{ensure_dim, Error, Result};
use crate::model::{DataBatch, GradientSet, GrbmParams, SIGMA_FLOOR};

use super::config::TrainConfig;

/// Initial parameters: `b` at the data mean, `σ = 1`, Glorot-uniform
/// weights, and hidden biases chosen so every first-order component carries
/// `tau` times the anchor's mixing weight.
pub fn init_params<R: Rng + ?Sized>(
    d: &DataBatch,
    n_hidden: usize,
    tau: f64,
    rng: &mut R,
) -> Result<GrbmParams> {
    if n_hidden == 0 {
        return Err(Error::InvalidParams("need at least one hidden unit".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let m = d.dim();
    let b = d.mean();
    let limit = 6f64.sqrt() / ((n_hidden + m) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let w = Array2::from_shape_simple_fn((m, n_hidden), || dist.sample(rng));
    let sigma = 1.0;
    let c = first_order_biases(&w, &b, sigma, tau);
    GrbmParams::new(w, b, c, sigma)
}

/// `c_j = −(||b + w_j||² − ||b||²)/(2σ²) + ln τ`.
pub fn first_order_biases(w: &Array2<f64>, b: &Array1<f64>, sigma: f64, tau: f64) -> Array1<f64> {
    let b2 = b.dot(b);
    let ln_tau = tau.ln();
    w.columns()
        .into_iter()
        .map(|col| {
            let shifted = b + &col;
            -(shifted.dot(&shifted) - b2) / (2.0 * sigma * sigma) + ln_tau
        })
        .collect()
}

/// Rescales every column of `update` whose Euclidean norm exceeds `cap`
/// down to `cap`. Columns already within rounding of `cap` are left alone so
/// the operation is idempotent.
pub fn restrict_column_norms(update: &mut Array2<f64>, cap: f64) {
    for mut col in update.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        if norm > cap * (1.0 + 4.0 * f64::EPSILON) {
            col *= cap / norm;
        }
    }
}

/// Momentum state of the parameter updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity(pub GradientSet);

impl Velocity {
    pub fn zeros_like(p: &GrbmParams) -> Self {
        Self(GradientSet::zeros_like(p))
    }
}

/// Applies one momentum step `v ← μ v + η g` to every block, caps the weight
/// columns of `v`, and adds it to the parameters. Returns the norm of the
/// applied update.
pub fn apply_update(
    p: &mut GrbmParams,
    g: &GradientSet,
    velocity: &mut Velocity,
    momentum: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    ensure_dim("gradient rows", p.n_visible(), g.d_w.nrows())?;
    ensure_dim("gradient columns", p.n_hidden(), g.d_w.ncols())?;
    let v = &mut velocity.0;
    v.d_w
        .zip_mut_with(&g.d_w, |v, &g| *v = momentum * *v + cfg.learning_rate_w * g);
    v.d_b
        .zip_mut_with(&g.d_b, |v, &g| *v = momentum * *v + cfg.learning_rate_b * g);
    v.d_c
        .zip_mut_with(&g.d_c, |v, &g| *v = momentum * *v + cfg.learning_rate_c * g);
    v.d_sigma = if cfg.learn_sigma {
        momentum * v.d_sigma + cfg.learning_rate_b * g.d_sigma
    } else {
        0.0
    };
    if let Some(cap) = cfg.grad_norm_cap {
        restrict_column_norms(&mut v.d_w, cap);
    }
    p.weights += &v.d_w;
    p.visible_bias += &v.d_b;
    p.hidden_bias += &v.d_c;
    p.sigma = (p.sigma + v.d_sigma).max(SIGMA_FLOOR);
    if !p.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite("parameter update"));
    }
    Ok(v.norm())
}

/// Counts, over the rows of `d`, how many hidden units are on in one sample
/// from `P(h|x)`. Entry `k` is the number of rows with exactly `k` active
/// units.
pub fn activated_units_histogram<R: Rng + ?Sized>(
    p: &GrbmParams,
    d: &DataBatch,
    rng: &mut R,
) -> Result<Vec<u64>> {
    ensure_dim("data dimension", p.n_visible(), d.dim())?;
    let h = p.sample_hidden_batch(d.view(), 1.0, rng);
    let mut hist = vec![0u64; p.n_hidden() + 1];
    for row in h.rows() {
        hist[row.sum().round() as usize] += 1;
    }
    Ok(hist)
}
