//! Gaussian-mixture classification tasks: cluster geometry, canonical
//! builders and the input sampler.
//!
//! Cluster means are stored unscaled (`mean_scaled` holds the vector whose
//! actual center is `mean_scaled / sqrt(D)`), so the signal-to-noise
//! bookkeeping `snr = |mu| / (sqrt(D) sigma)` stays explicit and the division
//! by `sqrt(D)` happens in exactly one place, the sampler.

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;
const PSD_REL_TOL: f64 = 1e-8;

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Plus,
    Minus,
}

impl Label {
    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Label::Plus),
            -1 => Ok(Label::Minus),
            other => Err(Error::InvalidMixture(format!(
                "label must be +1 or -1, got {other}"
            ))),
        }
    }

    pub fn to_i8(self) -> i8 {
        match self {
            Label::Plus => 1,
            Label::Minus => -1,
        }
    }

    pub fn value<F: Scalar>(self) -> F {
        match self {
            Label::Plus => F::one(),
            Label::Minus => -F::one(),
        }
    }
}

/// One Gaussian component: unscaled mean, label and probability mass.
#[derive(Debug, Clone)]
pub struct Cluster<F: Scalar> {
    pub mean_scaled: Array1<F>,
    pub label: Label,
    pub weight: F,
}

/// Shared input covariance, in one of three parametrizations.
#[derive(Debug, Clone)]
pub enum CovarianceSpec<F: Scalar> {
    /// `sigma^2 * I`.
    Isotropic(F),
    /// Full symmetric PSD matrix.
    Dense(Array2<F>),
    /// Pre-diagonalised: `Omega = basis diag(eigenvalues) basis^T`,
    /// `basis` columns orthonormal.
    Spectral {
        eigenvalues: Array1<F>,
        basis: Array2<F>,
    },
}

/// Eigen-view of the covariance: eigenvalues plus (for non-isotropic kinds)
/// the orthonormal basis and the PSD square-root factor used by the sampler.
#[derive(Debug)]
pub struct SpectralDecomp<F: Scalar> {
    pub eigenvalues: Array1<F>,
    /// `None` means "any orthonormal basis", i.e. the covariance is isotropic.
    pub basis: Option<Array2<F>>,
    sqrt_factor: Option<Array2<F>>,
}

/// A full Gaussian-mixture classification task.
#[derive(Debug)]
pub struct MixtureSpec<F: Scalar> {
    dim: usize,
    clusters: Vec<Cluster<F>>,
    covariance: CovarianceSpec<F>,
    decomp: OnceLock<SpectralDecomp<F>>,
}

impl<F: Scalar> Clone for MixtureSpec<F> {
    fn clone(&self) -> Self {
        MixtureSpec {
            dim: self.dim,
            clusters: self.clusters.clone(),
            covariance: self.covariance.clone(),
            decomp: OnceLock::new(),
        }
    }
}

/// One draw from the mixture.
#[derive(Debug, Clone)]
pub struct Sample<F: Scalar> {
    pub x: Array1<F>,
    pub y: F,
    pub cluster_index: usize,
}

impl<F: Scalar> MixtureSpec<F> {
    pub fn new(
        dim: usize,
        clusters: Vec<Cluster<F>>,
        covariance: CovarianceSpec<F>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("mixture dimension must be >= 1".into()));
        }
        if clusters.is_empty() {
            return Err(Error::InvalidMixture("mixture needs at least one cluster".into()));
        }
        let mut weight_sum = 0.0f64;
        let mut has_plus = false;
        let mut has_minus = false;
        for (i, c) in clusters.iter().enumerate() {
            if c.mean_scaled.len() != dim {
                return Err(Error::InvalidMixture(format!(
                    "cluster {i} mean has length {} but dim = {dim}",
                    c.mean_scaled.len()
                )));
            }
            if !(c.weight > F::zero()) {
                return Err(Error::InvalidMixture(format!(
                    "cluster {i} weight must be > 0, got {}",
                    c.weight
                )));
            }
            weight_sum += c.weight.to_f64_lossy();
            match c.label {
                Label::Plus => has_plus = true,
                Label::Minus => has_minus = true,
            }
        }
        // f32 weights cannot hit 1e-12; scale the check to the scalar's epsilon.
        let tol = WEIGHT_SUM_TOL.max(8.0 * F::epsilon().to_f64_lossy());
        if (weight_sum - 1.0).abs() > tol {
            return Err(Error::InvalidMixture(format!(
                "cluster weights sum to {weight_sum}, expected 1 within {tol:e}"
            )));
        }
        if !(has_plus && has_minus) {
            return Err(Error::InvalidMixture(
                "mixture needs at least one cluster per label".into(),
            ));
        }
        validate_covariance(dim, &covariance)?;
        Ok(MixtureSpec {
            dim,
            clusters,
            covariance,
            decomp: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Cluster<F>] {
        &self.clusters
    }

    pub fn covariance(&self) -> &CovarianceSpec<F> {
        &self.covariance
    }

    pub fn weights(&self) -> Array1<F> {
        self.clusters.iter().map(|c| c.weight).collect()
    }

    pub fn labels(&self) -> Array1<F> {
        self.clusters.iter().map(|c| c.label.value()).collect()
    }

    /// For an isotropic covariance, its variance.
    pub fn isotropic_sigma2(&self) -> Option<F> {
        match self.covariance {
            CovarianceSpec::Isotropic(s2) => Some(s2),
            _ => None,
        }
    }

    /// Mean-overlap constants `T[a][b] = mu_a . mu_b / D`.
    pub fn mean_overlap_matrix(&self) -> Array2<F> {
        let n = self.n_clusters();
        let mut t = Array2::zeros((n, n));
        let inv_d = F::one() / F::cast(self.dim as f64);
        for a in 0..n {
            for b in a..n {
                let dot = self.clusters[a]
                    .mean_scaled
                    .dot(&self.clusters[b].mean_scaled)
                    * inv_d;
                t[[a, b]] = dot;
                t[[b, a]] = dot;
            }
        }
        t
    }

    /// Second spectral moment `chi = sum_tau rho_tau^2 / D` of the covariance.
    pub fn spectral_second_moment(&self) -> F {
        match &self.covariance {
            CovarianceSpec::Isotropic(s2) => *s2 * *s2,
            _ => {
                let evs = &self.spectral().eigenvalues;
                evs.iter().map(|&r| r * r).sum::<F>() / F::cast(self.dim as f64)
            }
        }
    }

    /// Eigen-view of the covariance. Dense covariances are decomposed lazily
    /// on first access and the result is cached.
    pub fn spectral(&self) -> &SpectralDecomp<F> {
        self.decomp.get_or_init(|| match &self.covariance {
            CovarianceSpec::Isotropic(s2) => SpectralDecomp {
                eigenvalues: Array1::from_elem(self.dim, *s2),
                basis: None,
                sqrt_factor: None,
            },
            CovarianceSpec::Dense(m) => {
                let (vals, vecs) = sym_eigen(m);
                let clamped: Array1<F> = vals.mapv(|v| v.max(F::zero()));
                let mut sqrt = vecs.clone();
                for (mut col, &v) in sqrt.columns_mut().into_iter().zip(clamped.iter()) {
                    let s = v.sqrt();
                    col.mapv_inplace(|x| x * s);
                }
                SpectralDecomp {
                    eigenvalues: clamped,
                    basis: Some(vecs),
                    sqrt_factor: Some(sqrt),
                }
            }
            CovarianceSpec::Spectral { eigenvalues, basis } => {
                let clamped: Array1<F> = eigenvalues.mapv(|v| v.max(F::zero()));
                let mut sqrt = basis.clone();
                for (mut col, &v) in sqrt.columns_mut().into_iter().zip(clamped.iter()) {
                    let s = v.sqrt();
                    col.mapv_inplace(|x| x * s);
                }
                SpectralDecomp {
                    eigenvalues: clamped,
                    basis: Some(basis.clone()),
                    sqrt_factor: Some(sqrt),
                }
            }
        })
    }

    /// `Omega v`.
    pub fn covariance_apply(&self, v: ArrayView1<F>) -> Array1<F> {
        match &self.covariance {
            CovarianceSpec::Isotropic(s2) => v.mapv(|x| x * *s2),
            CovarianceSpec::Dense(m) => m.dot(&v),
            CovarianceSpec::Spectral { eigenvalues, basis } => {
                let proj = basis.t().dot(&v);
                let scaled: Array1<F> = &proj * eigenvalues;
                basis.dot(&scaled)
            }
        }
    }

    /// Draw one labelled sample: cluster `alpha` with probability `weight`,
    /// then `x = mu_alpha / sqrt(D) + Omega^{1/2} z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample<F> {
        let idx = self.pick_cluster(rng);
        let x = self.sample_from_cluster(idx, rng);
        Sample {
            x,
            y: self.clusters[idx].label.value(),
            cluster_index: idx,
        }
    }

    /// Draw a batch; rows of the returned matrix are samples.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> (Array2<F>, Array1<F>, Vec<usize>) {
        let mut xs = Array2::zeros((n, self.dim));
        let mut ys = Array1::zeros(n);
        let mut idxs = Vec::with_capacity(n);
        for i in 0..n {
            let s = self.sample(rng);
            xs.row_mut(i).assign(&s.x);
            ys[i] = s.y;
            idxs.push(s.cluster_index);
        }
        (xs, ys, idxs)
    }

    fn pick_cluster<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, c) in self.clusters.iter().enumerate() {
            acc += c.weight.to_f64_lossy();
            if u < acc {
                return i;
            }
        }
        self.clusters.len() - 1
    }

    fn sample_from_cluster<R: Rng + ?Sized>(&self, idx: usize, rng: &mut R) -> Array1<F> {
        let sqrt_d = F::cast((self.dim as f64).sqrt());
        let mut x: Array1<F> = self.clusters[idx].mean_scaled.mapv(|m| m / sqrt_d);
        match &self.covariance {
            CovarianceSpec::Isotropic(s2) => {
                let s = s2.sqrt();
                for xi in x.iter_mut() {
                    *xi += s * F::standard_normal(rng);
                }
            }
            _ => {
                let decomp = self.spectral();
                let sqrt = decomp
                    .sqrt_factor
                    .as_ref()
                    .expect("non-isotropic decomposition has a sqrt factor");
                let z: Array1<F> =
                    Array1::from_iter((0..self.dim).map(|_| F::standard_normal(rng)));
                x += &sqrt.dot(&z);
            }
        }
        x
    }
}

fn validate_covariance<F: Scalar>(dim: usize, cov: &CovarianceSpec<F>) -> Result<()> {
    match cov {
        CovarianceSpec::Isotropic(s2) => {
            if *s2 < F::zero() {
                return Err(Error::NotPsd(format!("isotropic variance {s2} is negative")));
            }
        }
        CovarianceSpec::Dense(m) => {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidMixture(format!(
                    "covariance is {}x{} but dim = {dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let mut scale = F::zero();
            for v in m.iter() {
                scale = scale.max(v.abs());
            }
            let tol = F::cast(SYMMETRY_TOL) * scale.max(F::one());
            for i in 0..dim {
                for j in (i + 1)..dim {
                    if (m[[i, j]] - m[[j, i]]).abs() > tol {
                        return Err(Error::InvalidMixture(format!(
                            "covariance not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
            let (vals, _) = sym_eigen(m);
            let max_eig = vals[0].max(F::zero());
            let min_eig = vals[dim - 1];
            if min_eig < -F::cast(PSD_REL_TOL) * max_eig.max(F::cast(1e-300)) {
                return Err(Error::NotPsd(format!(
                    "covariance eigenvalue {min_eig} below -{PSD_REL_TOL} * {max_eig}"
                )));
            }
        }
        CovarianceSpec::Spectral { eigenvalues, basis } => {
            if eigenvalues.len() != dim || basis.nrows() != dim || basis.ncols() != dim {
                return Err(Error::InvalidMixture(
                    "spectral covariance shapes do not match dim".into(),
                ));
            }
            if eigenvalues.iter().any(|&v| v < F::zero()) {
                return Err(Error::NotPsd("spectral eigenvalue is negative".into()));
            }
        }
    }
    Ok(())
}

/// XOR-like mixture: means `+-mu e1` labelled `+1` and `+-mu e2` labelled
/// `-1`, equal weights 1/4, isotropic covariance. Cluster order is
/// `(+0, +1, -0, -1)`.
pub fn build_xor_mixture<F: Scalar>(dim: usize, mu_norm: F, sigma2: F) -> Result<MixtureSpec<F>> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "XOR mixture needs dim >= 2, got {dim}"
        )));
    }
    if !(mu_norm > F::zero()) {
        return Err(Error::InvalidMixture(format!(
            "XOR mixture needs mu_norm > 0, got {mu_norm}"
        )));
    }
    let quarter = F::cast(0.25);
    let mut clusters = Vec::with_capacity(4);
    for (axis, label, sign) in [
        (0usize, Label::Plus, F::one()),
        (0, Label::Plus, -F::one()),
        (1, Label::Minus, F::one()),
        (1, Label::Minus, -F::one()),
    ] {
        let mut mean = Array1::zeros(dim);
        mean[axis] = sign * mu_norm;
        clusters.push(Cluster {
            mean_scaled: mean,
            label,
            weight: quarter,
        });
    }
    MixtureSpec::new(dim, clusters, CovarianceSpec::Isotropic(sigma2))
}

/// Three-cluster mixture: one positive cluster at the origin (weight 1/2)
/// and two negative clusters with first mean component `+-mu0` (weight 1/4
/// each), isotropic covariance.
pub fn build_three_cluster_mixture<F: Scalar>(
    dim: usize,
    mu0: F,
    sigma2: F,
) -> Result<MixtureSpec<F>> {
    if dim < 1 {
        return Err(Error::InvalidDimension("three-cluster mixture needs dim >= 1".into()));
    }
    let mut clusters = vec![Cluster {
        mean_scaled: Array1::zeros(dim),
        label: Label::Plus,
        weight: F::cast(0.5),
    }];
    for sign in [F::one(), -F::one()] {
        let mut mean = Array1::zeros(dim);
        mean[0] = sign * mu0;
        clusters.push(Cluster {
            mean_scaled: mean,
            label: Label::Minus,
            weight: F::cast(0.25),
        });
    }
    MixtureSpec::new(dim, clusters, CovarianceSpec::Isotropic(sigma2))
}

#[derive(Serialize, Deserialize)]
struct MixtureFile {
    dim: usize,
    clusters: Vec<ClusterFile>,
    covariance: CovarianceFile,
}

#[derive(Serialize, Deserialize)]
struct ClusterFile {
    mean: Vec<f64>,
    label: i8,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CovarianceFile {
    Isotropic { sigma2: f64 },
    Dense { matrix: Vec<Vec<f64>> },
}

/// Load a mixture from the JSON file format
/// `{dim, clusters: [{mean, label, weight}], covariance: {kind, ...}}`.
pub fn load_mixture<F: Scalar>(path: impl AsRef<Path>) -> Result<MixtureSpec<F>> {
    let text = std::fs::read_to_string(path)?;
    mixture_from_json(&text)
}

pub fn mixture_from_json<F: Scalar>(text: &str) -> Result<MixtureSpec<F>> {
    let file: MixtureFile = serde_json::from_str(text)?;
    let clusters = file
        .clusters
        .into_iter()
        .map(|c| {
            Ok(Cluster {
                mean_scaled: c.mean.into_iter().map(F::cast).collect(),
                label: Label::from_i8(c.label)?,
                weight: F::cast(c.weight),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let covariance = match file.covariance {
        CovarianceFile::Isotropic { sigma2 } => CovarianceSpec::Isotropic(F::cast(sigma2)),
        CovarianceFile::Dense { matrix } => {
            let d = matrix.len();
            let mut m = Array2::zeros((d, matrix.first().map_or(0, Vec::len)));
            for (i, row) in matrix.iter().enumerate() {
                if row.len() != m.ncols() {
                    return Err(Error::InvalidMixture("ragged covariance matrix".into()));
                }
                for (j, v) in row.iter().enumerate() {
                    m[[i, j]] = F::cast(*v);
                }
            }
            CovarianceSpec::Dense(m)
        }
    };
    MixtureSpec::new(file.dim, clusters, covariance)
}

/// Serialize a mixture to the JSON file format accepted by [`load_mixture`].
pub fn mixture_to_json<F: Scalar>(spec: &MixtureSpec<F>) -> String {
    let file = MixtureFile {
        dim: spec.dim(),
        clusters: spec
            .clusters()
            .iter()
            .map(|c| ClusterFile {
                mean: c.mean_scaled.iter().map(|v| v.to_f64_lossy()).collect(),
                label: c.label.to_i8(),
                weight: c.weight.to_f64_lossy(),
            })
            .collect(),
        covariance: match spec.covariance() {
            CovarianceSpec::Isotropic(s2) => CovarianceFile::Isotropic {
                sigma2: s2.to_f64_lossy(),
            },
            CovarianceSpec::Dense(m) => CovarianceFile::Dense {
                matrix: m
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
                    .collect(),
            },
            CovarianceSpec::Spectral { eigenvalues, basis } => {
                // Files only know isotropic/dense; rebuild the dense matrix.
                let scaled = basis * eigenvalues;
                let dense = scaled.dot(&basis.t());
                CovarianceFile::Dense {
                    matrix: dense
                        .rows()
                        .into_iter()
                        .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
                        .collect(),
                }
            }
        },
    };
    serde_json::to_string_pretty(&file).expect("mixture serializes")
}

pub fn save_mixture<F: Scalar>(spec: &MixtureSpec<F>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, mixture_to_json(spec))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xor_mixture_geometry() {
        let dim = 4;
        let spec = build_xor_mixture::<f64>(dim, 2.0, 1.0).unwrap();
        assert_eq!(spec.n_clusters(), 4);
        let c = spec.clusters();
        // Opposite-label means are orthogonal, same-axis means antiparallel.
        assert_eq!(c[0].mean_scaled.dot(&c[2].mean_scaled), 0.0);
        assert_eq!(c[0].mean_scaled.dot(&c[3].mean_scaled), 0.0);
        assert_eq!(c[0].mean_scaled.dot(&c[1].mean_scaled), -4.0);
        for cl in c {
            assert_eq!(cl.mean_scaled.dot(&cl.mean_scaled).sqrt(), 2.0);
            assert_eq!(cl.weight, 0.25);
        }
    }

    #[test]
    fn xor_rejects_dim_one() {
        assert!(build_xor_mixture::<f64>(1, 1.0, 0.1).is_err());
    }

    #[test]
    fn xor_overlap_matrix_pattern() {
        // mu_norm = sqrt(D) gives the +-1 block pattern.
        let d = 1000;
        let spec = build_xor_mixture::<f64>(d, (d as f64).sqrt(), 0.05 * 0.05).unwrap();
        let t = spec.mean_overlap_matrix();
        let expect = [
            [1.0, -1.0, 0.0, 0.0],
            [-1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, -1.0, 1.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((t[[a, b]] - expect[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_noise_sampler_returns_scaled_means() {
        let spec = build_xor_mixture::<f64>(2, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..32 {
            let s = spec.sample(&mut rng);
            let mu = &spec.clusters()[s.cluster_index].mean_scaled;
            let sqrt_d = (2.0f64).sqrt();
            for i in 0..2 {
                assert_eq!(s.x[i], mu[i] / sqrt_d);
            }
            assert_eq!(s.y, spec.clusters()[s.cluster_index].label.value::<f64>());
        }
    }

    #[test]
    fn class_frequencies_match_weights() {
        let spec = build_xor_mixture::<f64>(8, 1.0, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut plus = 0usize;
        for _ in 0..n {
            if spec.sample(&mut rng).y > 0.0 {
                plus += 1;
            }
        }
        let freq = plus as f64 / n as f64;
        let bound = 3.0 * (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < bound, "freq {freq} outside {bound}");
    }

    #[test]
    fn three_cluster_layout() {
        let spec = build_three_cluster_mixture::<f64>(3, 2.0, 1.0).unwrap();
        let c = spec.clusters();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].weight, 0.5);
        assert_eq!(c[0].label, Label::Plus);
        assert_eq!(c[1].mean_scaled[0], 2.0);
        assert_eq!(c[2].mean_scaled[0], -2.0);
        assert_eq!(c[1].weight, 0.25);
    }

    #[test]
    fn sampler_moments_match_spec_dense() {
        // Within-cluster empirical mean and covariance for a small dense case.
        let d = 4;
        let mut omega = Array2::<f64>::eye(d);
        omega[[0, 1]] = 0.3;
        omega[[1, 0]] = 0.3;
        omega[[2, 2]] = 0.5;
        let clusters = vec![
            Cluster {
                mean_scaled: Array1::from_elem(d, 1.0),
                label: Label::Plus,
                weight: 0.5,
            },
            Cluster {
                mean_scaled: Array1::from_elem(d, -1.0),
                label: Label::Minus,
                weight: 0.5,
            },
        ];
        let spec = MixtureSpec::new(d, clusters, CovarianceSpec::Dense(omega.clone())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut count = 0usize;
        let mut mean = Array1::<f64>::zeros(d);
        let mut cov = Array2::<f64>::zeros((d, d));
        for _ in 0..n {
            let s = spec.sample(&mut rng);
            if s.cluster_index != 0 {
                continue;
            }
            count += 1;
            mean += &s.x;
        }
        mean /= count as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..n {
            let s = spec.sample(&mut rng);
            if s.cluster_index != 0 {
                continue;
            }
            let c = &s.x - &mean;
            for i in 0..d {
                for j in 0..d {
                    cov[[i, j]] += c[i] * c[j];
                }
            }
        }
        cov /= count as f64;
        let expect_mean = 1.0 / (d as f64).sqrt();
        for i in 0..d {
            assert!((mean[i] - expect_mean).abs() < 0.02);
            for j in 0..d {
                assert!((cov[[i, j]] - omega[[i, j]]).abs() < 0.05);
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact_for_f64() {
        let spec = build_xor_mixture::<f64>(6, (6.0f64).sqrt(), 0.05f64.powi(2)).unwrap();
        let text = mixture_to_json(&spec);
        let back: MixtureSpec<f64> = mixture_from_json(&text).unwrap();
        for (a, b) in spec.clusters().iter().zip(back.clusters()) {
            assert_eq!(a.mean_scaled, b.mean_scaled);
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.label, b.label);
        }
        assert_eq!(
            spec.isotropic_sigma2().unwrap(),
            back.isotropic_sigma2().unwrap()
        );
    }

    #[test]
    fn load_rejects_bad_weight_sum() {
        let text = r#"{
            "dim": 2,
            "clusters": [
                {"mean": [1.0, 0.0], "label": 1, "weight": 0.5},
                {"mean": [0.0, 1.0], "label": -1, "weight": 0.4}
            ],
            "covariance": {"kind": "isotropic", "sigma2": 1.0}
        }"#;
        let err = mixture_from_json::<f64>(text).unwrap_err();
        assert!(err.to_string().contains("sum"), "unexpected error {err}");
    }

    #[test]
    fn load_rejects_negative_covariance_eigenvalue() {
        let text = r#"{
            "dim": 2,
            "clusters": [
                {"mean": [1.0, 0.0], "label": 1, "weight": 0.5},
                {"mean": [0.0, 1.0], "label": -1, "weight": 0.5}
            ],
            "covariance": {"kind": "dense", "matrix": [[1.0, 0.0], [0.0, -0.5]]}
        }"#;
        let err = mixture_from_json::<f64>(text).unwrap_err();
        assert!(
            matches!(err, Error::NotPsd(_)),
            "expected PSD error, got {err}"
        );
    }

    #[test]
    fn chi_is_sigma_fourth_for_isotropic() {
        let spec = build_xor_mixture::<f64>(16, 1.0, 0.3).unwrap();
        assert!((spec.spectral_second_moment() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn f32_instantiation_smoke() {
        let spec = build_xor_mixture::<f32>(8, 2.0f32, 0.1f32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = spec.sample(&mut rng);
        assert_eq!(s.x.len(), 8);
        assert!(s.y == 1.0 || s.y == -1.0);
    }
}
