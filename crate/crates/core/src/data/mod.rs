//! Synthetic blind-source-separation data, whitening, image patches and
//! dataset splitting. File formats live in [`io`].

pub mod io;

use std::f64::consts::SQRT_2;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::math::{determinant, from_nalgebra, invert, to_nalgebra};
use crate::model::DataBatch;

/// Eigenvalues of the sample covariance below this are treated as rank loss.
pub const EIGENVALUE_FLOOR: f64 = 1e-8;

/// Redraw threshold for random mixing matrices.
pub const MIN_MIXING_DET: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhiteningKind {
    Pca,
    Zca,
}

impl std::str::FromStr for WhiteningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(WhiteningKind::Pca),
            "zca" => Ok(WhiteningKind::Zca),
            other => Err(Error::InvalidConfig(format!("unknown whitening {other:?}"))),
        }
    }
}

/// `y = V (x − μ)` with `V` the forward matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    pub forward: Array2<f64>,
    pub inverse: Array2<f64>,
    pub kind: WhiteningKind,
}

impl WhiteningTransform {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Maximum-likelihood covariance `(1/L) Σ (x − μ)(x − μ)ᵀ` and the mean.
pub fn covariance(d: &DataBatch) -> (Array1<f64>, Array2<f64>) {
    let mean = d.mean();
    let centred = d.samples() - &mean;
    let cov = centred.t().dot(&centred) / d.len() as f64;
    (mean, cov)
}

/// Eigenvalues in descending order with eigenvectors as columns, each
/// signed so its largest-magnitude entry is positive.
pub fn sorted_eigen(cov: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(cov));
    let vecs = from_nalgebra(&eig.eigenvectors);
    let mut order: Vec<usize> = (0..cov.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut sorted = Array2::zeros(cov.raw_dim());
    for (k, &i) in order.iter().enumerate() {
        let col = vecs.column(i);
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        sorted.column_mut(k).assign(&(&col * sign));
    }
    (values, sorted)
}

fn whitening(d: &DataBatch, kind: WhiteningKind) -> Result<WhiteningTransform> {
    let (mean, cov) = covariance(d);
    let (values, vectors) = sorted_eigen(&cov);
    if let Some(&min) = values.iter().min_by(|a, b| a.total_cmp(b)) {
        if !(min >= EIGENVALUE_FLOOR) {
            return Err(Error::RankDeficient {
                eigenvalue: min,
                floor: EIGENVALUE_FLOOR,
            });
        }
    }
    let inv_sqrt = values.mapv(|v| 1.0 / v.sqrt());
    let sqrt = values.mapv(f64::sqrt);
    // D^{-1/2} Eᵀ and its inverse E D^{1/2}.
    let pca_forward = &vectors.t() * &inv_sqrt.view().insert_axis(Axis(1));
    let pca_inverse = &vectors * &sqrt.view().insert_axis(Axis(0));
    let (forward, inverse) = match kind {
        WhiteningKind::Pca => (pca_forward, pca_inverse),
        WhiteningKind::Zca => (vectors.dot(&pca_forward), pca_inverse.dot(&vectors.t())),
    };
    Ok(WhiteningTransform {
        mean,
        forward,
        inverse,
        kind,
    })
}

pub fn pca_whitening(d: &DataBatch) -> Result<WhiteningTransform> {
    whitening(d, WhiteningKind::Pca)
}

pub fn zca_whitening(d: &DataBatch) -> Result<WhiteningTransform> {
    whitening(d, WhiteningKind::Zca)
}

pub fn fit_whitening(d: &DataBatch, kind: WhiteningKind) -> Result<WhiteningTransform> {
    whitening(d, kind)
}

pub fn apply_whitening(t: &WhiteningTransform, d: &DataBatch) -> Result<DataBatch> {
    ensure_dim("whitening input", t.dim(), d.dim())?;
    let centred = d.samples() - &t.mean;
    DataBatch::new(centred.dot(&t.forward.t()))
}

pub fn invert_whitening(t: &WhiteningTransform, d: &DataBatch) -> Result<DataBatch> {
    ensure_dim("whitened input", t.dim(), d.dim())?;
    DataBatch::new(d.samples().dot(&t.inverse.t()) + &t.mean)
}

/// Mixing, whitening and the resulting true unmixing `U = (VA)^{-1}` of a
/// two-source problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssGroundTruth {
    pub mixing: Array2<f64>,
    pub whitening: WhiteningTransform,
    pub unmixing_true: Array2<f64>,
}

impl BssGroundTruth {
    pub fn new(mixing: Array2<f64>, whitening: WhiteningTransform) -> Result<Self> {
        ensure_dim("mixing columns", mixing.nrows(), mixing.ncols())?;
        ensure_dim("whitening dimension", mixing.nrows(), whitening.dim())?;
        let va = whitening.forward.dot(&mixing);
        let unmixing_true = invert(&va).ok_or(Error::Singular("whitened mixing matrix"))?;
        Ok(Self {
            mixing,
            whitening,
            unmixing_true,
        })
    }
}

/// One draw from the unit-variance Laplacian `e^{−√2|s|}/√2` by inverse CDF.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    let scale = 1.0 / SQRT_2;
    // 1 − 2|u| lies in (0, 1] because u > −0.5.
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// `n × dim` independent unit-variance Laplacian sources.
pub fn laplacian_sources<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, dim), || sample_laplace(rng))
}

/// Square matrix with entries uniform on `[−1, 1]`, redrawn until
/// `|det| > MIN_MIXING_DET`.
pub fn random_mixing<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array2<f64> {
    loop {
        let a = Array2::from_shape_simple_fn((dim, dim), || rng.random_range(-1.0..=1.0));
        if determinant(&a).abs() > MIN_MIXING_DET {
            return a;
        }
    }
}

/// Mixed but unwhitened observations `x' = A s`, one per row.
pub fn mix_sources(sources: &Array2<f64>, mixing: &Array2<f64>) -> Result<DataBatch> {
    ensure_dim("mixing columns", sources.ncols(), mixing.ncols())?;
    if determinant(mixing).abs() <= 1e-6 {
        return Err(Error::Singular("mixing matrix"));
    }
    DataBatch::new(sources.dot(&mixing.t()))
}

/// Two Laplacian sources mixed by `mixing` (or a random matrix) and PCA
/// whitened on the generated sample.
pub fn generate_laplacian_bss<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    mixing: Option<Array2<f64>>,
) -> Result<(DataBatch, BssGroundTruth)> {
    if n == 0 {
        return Err(Error::InvalidData("need at least one sample".into()));
    }
    let mixing = match mixing {
        Some(a) => a,
        None => random_mixing(2, rng),
    };
    let sources = laplacian_sources(n, mixing.ncols(), rng);
    let raw = mix_sources(&sources, &mixing)?;
    let whitening = pca_whitening(&raw)?;
    let data = apply_whitening(&whitening, &raw)?;
    Ok((data, BssGroundTruth::new(mixing, whitening)?))
}

/// `count` square patches with uniformly random top-left corners, each
/// flattened row-major.
pub fn extract_patches<R: Rng + ?Sized>(
    image: &Array2<f64>,
    size: usize,
    count: usize,
    rng: &mut R,
) -> Result<DataBatch> {
    let (rows, cols) = image.dim();
    if size == 0 || rows < size || cols < size {
        return Err(Error::InvalidData(format!(
            "cannot cut {size}×{size} patches from a {rows}×{cols} image"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidData("patch count must be positive".into()));
    }
    let mut out = Array2::zeros((count, size * size));
    for mut row in out.rows_mut() {
        let r = rng.random_range(0..=rows - size);
        let c = rng.random_range(0..=cols - size);
        let patch = image.slice(ndarray::s![r..r + size, c..c + size]);
        row.iter_mut().zip(patch.iter()).for_each(|(d, &s)| *d = s);
    }
    DataBatch::new(out)
}

/// Patches drawn evenly across several images: image `i` contributes
/// `count / k` patches plus one of the remainder if `i < count % k`.
pub fn extract_patches_from_images<R: Rng + ?Sized>(
    images: &[Array2<f64>],
    size: usize,
    count: usize,
    rng: &mut R,
) -> Result<DataBatch> {
    if images.is_empty() {
        return Err(Error::InvalidData("no images given".into()));
    }
    let k = images.len();
    let mut parts = Vec::with_capacity(k);
    for (i, img) in images.iter().enumerate() {
        let share = count / k + usize::from(i < count % k);
        if share > 0 {
            parts.push(extract_patches(img, size, share, rng)?.into_inner());
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let all = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::InvalidData(format!("patch assembly failed: {e}")))?;
    DataBatch::new(all)
}

/// Synthetic grayscale scene of overlapping discs ("dead leaves") with
/// power-law radii plus a little pixel noise, in `[0, 1]`. Such scenes share
/// the heavy-tailed, edge-dominated statistics of natural images and stand in
/// for them when no photographs are supplied.
pub fn dead_leaves_image<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Array2<f64> {
    let mut img = Array2::from_elem((height, width), f64::NAN);
    let mut unfilled = height * width;
    let (r_min, r_max) = (1.5f64, (height.max(width) as f64) / 3.0);
    // Discs are painted front to back until every pixel is covered.
    while unfilled > 0 {
        // Density ∝ r^{-3} on [r_min, r_max] by inverse CDF.
        let u: f64 = rng.random();
        let inv_sq = r_min.powi(-2) - u * (r_min.powi(-2) - r_max.powi(-2));
        let r = inv_sq.powf(-0.5);
        let cy = rng.random_range(-r..height as f64 + r);
        let cx = rng.random_range(-r..width as f64 + r);
        let shade: f64 = rng.random();
        let (y0, y1) = (
            (cy - r).floor().max(0.0) as usize,
            ((cy + r).ceil().max(0.0) as usize).min(height),
        );
        let (x0, x1) = (
            (cx - r).floor().max(0.0) as usize,
            ((cx + r).ceil().max(0.0) as usize).min(width),
        );
        for y in y0..y1 {
            for x in x0..x1 {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                if dy * dy + dx * dx <= r * r && img[[y, x]].is_nan() {
                    img[[y, x]] = shade;
                    unfilled -= 1;
                }
            }
        }
    }
    img.mapv_inplace(|v| (v + 0.02 * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0));
    img
}

/// Shuffled disjoint split; the training part has `round(fraction · L)` rows
/// and both parts are non-empty.
pub fn split<R: Rng + ?Sized>(
    d: &DataBatch,
    fraction: f64,
    rng: &mut R,
) -> Result<(DataBatch, DataBatch)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if d.len() < 2 {
        return Err(Error::InvalidData(
            "cannot split fewer than two samples".into(),
        ));
    }
    let n_train = ((fraction * d.len() as f64).round() as usize).clamp(1, d.len() - 1);
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(rng);
    Ok((d.select(&idx[..n_train]), d.select(&idx[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn laplace_moments() {
        let mut rng = seeded(1);
        let n = 100_000;
        let s: Vec<f64> = (0..n).map(|_| sample_laplace(&mut rng)).collect();
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let m4 = s.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
        // Var of the sample variance is (μ4 − 1)/n = 5/n for this law.
        assert!((var - 1.0).abs() < 3.0 * (5.0 / n as f64).sqrt(), "{var}");
        let kurt = m4 / (var * var) - 3.0;
        assert!((kurt - 3.0).abs() < 0.3, "{kurt}");
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn diagonal_covariance_whitening() {
        // Columns with variances 4 and 1, mean zero.
        let d = DataBatch::new(array![[2.0, 1.0], [-2.0, -1.0], [2.0, -1.0], [-2.0, 1.0]]).unwrap();
        let t = pca_whitening(&d).unwrap();
        let expect = array![[0.5, 0.0], [0.0, 1.0]];
        assert!(
            (&t.forward - &expect).iter().all(|v| v.abs() < 1e-12),
            "{}",
            t.forward
        );
        let z = zca_whitening(&d).unwrap();
        assert!((&z.forward - &expect).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zca_of_white_data_is_identity() {
        let d = DataBatch::new(array![[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let z = zca_whitening(&d).unwrap();
        let eye = Array2::<f64>::eye(2);
        assert!((&z.forward - &eye).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn whitened_covariance_is_identity_and_round_trips() {
        let mut rng = seeded(2);
        let a = Array2::from_shape_simple_fn((5, 5), || rng.random_range(-1.0..1.0));
        let z = Array2::from_shape_simple_fn((500, 5), || rng.random_range(-1.0..1.0));
        let d = DataBatch::new(z.dot(&a.t()) + 3.0).unwrap();
        for kind in [WhiteningKind::Pca, WhiteningKind::Zca] {
            let t = fit_whitening(&d, kind).unwrap();
            let y = apply_whitening(&t, &d).unwrap();
            let (mean, cov) = covariance(&y);
            assert!(mean.iter().all(|v| v.abs() < 1e-10));
            let eye = Array2::<f64>::eye(5);
            assert!((&cov - &eye).iter().all(|v| v.abs() < 1e-8), "{cov}");
            let back = invert_whitening(&t, &y).unwrap();
            assert!((back.samples() - d.samples())
                .iter()
                .all(|v| v.abs() < 1e-8));
            let prod = t.forward.dot(&t.inverse);
            assert!((&prod - &eye).iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn zero_vector_maps_to_offset() {
        let d = DataBatch::new(array![[1.0, 3.0], [3.0, 1.0], [2.0, 4.0], [0.0, 2.0]]).unwrap();
        let t = pca_whitening(&d).unwrap();
        let y = apply_whitening(&t, &DataBatch::new(array![[0.0, 0.0]]).unwrap()).unwrap();
        let expect = -t.forward.dot(&t.mean);
        assert!((&y.samples().row(0) - &expect)
            .iter()
            .all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn rank_deficient_covariance_is_rejected() {
        let d = DataBatch::new(array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            pca_whitening(&d),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn bss_generation_is_white_and_reproducible() {
        let (d, truth) = generate_laplacian_bss(2000, &mut seeded(3), None).unwrap();
        let (_, cov) = covariance(&d);
        assert!((&cov - &Array2::<f64>::eye(2))
            .iter()
            .all(|v| v.abs() < 1e-6));
        assert!(determinant(&truth.mixing).abs() > MIN_MIXING_DET);
        // U V A = I.
        let prod = truth
            .unmixing_true
            .dot(&truth.whitening.forward.dot(&truth.mixing));
        assert!((&prod - &Array2::<f64>::eye(2))
            .iter()
            .all(|v| v.abs() < 1e-10));
        let (d2, truth2) = generate_laplacian_bss(2000, &mut seeded(3), None).unwrap();
        assert_eq!(d, d2);
        assert_eq!(truth, truth2);
        assert!(matches!(
            generate_laplacian_bss(10, &mut seeded(3), Some(array![[1.0, 2.0], [2.0, 4.0]])),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn patches() {
        let img = Array2::from_elem((10, 12), 7.0);
        let p = extract_patches(&img, 4, 6, &mut seeded(4)).unwrap();
        assert_eq!(p.samples().dim(), (6, 16));
        assert!(p.samples().iter().all(|&v| v == 7.0));
        let img = Array2::from_shape_fn((3, 3), |(i, j)| (3 * i + j) as f64);
        let p = extract_patches(&img, 3, 2, &mut seeded(4)).unwrap();
        for row in p.samples().rows() {
            assert_eq!(row.to_vec(), (0..9).map(f64::from).collect::<Vec<_>>());
        }
        assert!(extract_patches(&img, 4, 1, &mut seeded(4)).is_err());
        let ramp = Array2::from_shape_fn((20, 20), |(i, j)| (i * 20 + j) as f64);
        let a = extract_patches(&ramp, 5, 10, &mut seeded(5)).unwrap();
        assert_eq!(a, extract_patches(&ramp, 5, 10, &mut seeded(5)).unwrap());
        // Row-major: neighbours in a row differ by one, rows by twenty.
        let first = a.samples().row(0);
        assert_eq!(first[1] - first[0], 1.0);
        assert_eq!(first[5] - first[0], 20.0);
        let multi = extract_patches_from_images(&[ramp.clone(), img.clone()], 3, 5, &mut seeded(6))
            .unwrap();
        assert_eq!(multi.len(), 5);
    }

    #[test]
    fn dead_leaves_cover_the_frame() {
        let img = dead_leaves_image(32, 40, &mut seeded(8));
        assert_eq!(img.dim(), (32, 40));
        assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(img, dead_leaves_image(32, 40, &mut seeded(8)));
        // Neighbouring pixels mostly share a disc.
        let close = img
            .windows((1, 2))
            .into_iter()
            .filter(|w| (w[[0, 0]] - w[[0, 1]]).abs() < 0.05)
            .count();
        assert!(close * 2 > 32 * 39, "{close}");
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let d = DataBatch::new(Array2::from_shape_fn((10, 1), |(i, _)| i as f64)).unwrap();
        let (a, b) = split(&d, 0.7, &mut seeded(7)).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        let mut all: Vec<f64> = a
            .samples()
            .iter()
            .chain(b.samples().iter())
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
        let (a2, _) = split(&d, 0.7, &mut seeded(7)).unwrap();
        assert_eq!(a, a2);
        assert!(split(&d, 1.0, &mut seeded(7)).is_err());
    }
}
