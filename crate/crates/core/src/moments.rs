//! Expectations of activation products over jointly Gaussian local fields.
//!
//! The production path is Monte-Carlo with antithetic pairing; the same
//! expectation code also runs over tensor Gauss-Hermite nodes for
//! low-rank covariances, which gives a deterministic alternative. The
//! weak-correlation expansions live at the bottom of the module.

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt_factor;
use crate::quadrature::gauss_hermite;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Hidden-unit nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    /// `g(x) = erf(x / sqrt(2))`.
    ScaledErf,
}

impl ActivationKind {
    #[inline]
    pub fn g<F: Scalar>(self, x: F) -> F {
        match self {
            ActivationKind::Relu => x.max(F::zero()),
            ActivationKind::ScaledErf => (x / F::cast(std::f64::consts::SQRT_2)).erf(),
        }
    }

    #[inline]
    pub fn g_prime<F: Scalar>(self, x: F) -> F {
        match self {
            ActivationKind::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            ActivationKind::ScaledErf => {
                F::cast(0.7978845608028654) * (-x * x / F::cast(2.0)).exp()
            }
        }
    }
}

/// First two moments of the local fields entering one integral request.
#[derive(Debug, Clone)]
pub struct LocalFieldGaussian<F: Scalar> {
    mean: Array1<F>,
    cov: Array2<F>,
}

impl<F: Scalar> LocalFieldGaussian<F> {
    pub fn new(mean: Array1<F>, cov: Array2<F>) -> Result<Self> {
        let k = mean.len();
        if k == 0 || k > 4 {
            return Err(Error::InvalidDimension(format!(
                "local-field Gaussian supports 1 <= k <= 4, got {k}"
            )));
        }
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::InvalidDimension(format!(
                "covariance is {}x{}, mean has length {k}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let mut scale = F::zero();
        for v in cov.iter() {
            scale = scale.max(v.abs());
        }
        let tol = F::cast(1e-12) * scale.max(F::one());
        for i in 0..k {
            for j in (i + 1)..k {
                if (cov[[i, j]] - cov[[j, i]]).abs() > tol {
                    return Err(Error::NotPsd(format!(
                        "local-field covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let (vals, _) = crate::linalg::sym_eigen(&cov);
        let min = vals[k - 1];
        if min < -F::cast(1e-10) * scale.max(F::one()) {
            return Err(Error::NotPsd(format!(
                "local-field covariance eigenvalue {min} is negative"
            )));
        }
        Ok(LocalFieldGaussian { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<F> {
        &self.mean
    }

    pub fn cov(&self) -> &Array2<F> {
        &self.cov
    }
}

/// Identifier of one activation-product expectation; indices address neurons.
///
/// With `G = g(lambda)`, `G' = g'(lambda)`:
/// `I31(k) = E G'_k`, `I32(k,j) = E G'_k lam_j`, `I3(k,j,l) = E G'_k lam_j G_l`,
/// `I22(k,j) = E G'_k G_j`, `I42(k,l) = E G'_k G'_l`,
/// `I43(k,l,j) = E G'_k G'_l G_j`, `I4(k,l,j,a) = E G'_k G'_l G_j G_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralId {
    I31 { k: usize },
    I32 { k: usize, j: usize },
    I3 { k: usize, j: usize, l: usize },
    I22 { k: usize, j: usize },
    I42 { k: usize, l: usize },
    I43 { k: usize, l: usize, j: usize },
    I4 { k: usize, l: usize, j: usize, a: usize },
}

impl IntegralId {
    pub fn max_index(self) -> usize {
        match self {
            IntegralId::I31 { k } => k,
            IntegralId::I32 { k, j } | IntegralId::I22 { k, j } => k.max(j),
            IntegralId::I3 { k, j, l } => k.max(j).max(l),
            IntegralId::I42 { k, l } => k.max(l),
            IntegralId::I43 { k, l, j } => k.max(l).max(j),
            IntegralId::I4 { k, l, j, a } => k.max(l).max(j).max(a),
        }
    }

    #[inline]
    fn product<F: Scalar>(self, g: &[F], gp: &[F], lam: &[F]) -> F {
        match self {
            IntegralId::I31 { k } => gp[k],
            IntegralId::I32 { k, j } => gp[k] * lam[j],
            IntegralId::I3 { k, j, l } => gp[k] * lam[j] * g[l],
            IntegralId::I22 { k, j } => gp[k] * g[j],
            IntegralId::I42 { k, l } => gp[k] * gp[l],
            IntegralId::I43 { k, l, j } => gp[k] * gp[l] * g[j],
            IntegralId::I4 { k, l, j, a } => gp[k] * gp[l] * g[j] * g[a],
        }
    }
}

/// A set of local-field points (Monte-Carlo samples or quadrature nodes)
/// with cached activations, over which expectations are plain weighted means.
#[derive(Debug, Clone)]
pub struct FieldEnsemble<F: Scalar> {
    lambda: Array2<F>,
    g: Array2<F>,
    gp: Array2<F>,
    /// Normalized node weights; `None` means uniform `1/n`.
    weights: Option<Array1<F>>,
}

impl<F: Scalar> FieldEnsemble<F> {
    /// Antithetic Monte-Carlo ensemble for a single Gaussian.
    pub fn sample<R: Rng + ?Sized>(
        mean: &Array1<F>,
        cov: &Array2<F>,
        act: ActivationKind,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let family = Self::sample_family(std::slice::from_ref(mean), cov, act, n_samples, rng)?;
        Ok(family.into_iter().next().expect("one ensemble"))
    }

    /// Ensembles for several means sharing one covariance, built from common
    /// random numbers: the same standard-normal block drives every cluster.
    pub fn sample_family<R: Rng + ?Sized>(
        means: &[Array1<F>],
        cov: &Array2<F>,
        act: ActivationKind,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Vec<Self>> {
        if n_samples == 0 {
            return Err(Error::Domain("n_samples must be >= 1".into()));
        }
        let k = cov.nrows();
        let factor = psd_sqrt_factor(cov, F::cast(1e-8))?; // (k, rank)
        let rank = factor.ncols();
        let pairs = n_samples.div_ceil(2);
        let n = 2 * pairs;

        // z block (pairs, rank); antithetic rows are +-z.
        let mut z = Array2::zeros((pairs, rank));
        for v in z.iter_mut() {
            *v = F::standard_normal(rng);
        }
        let shift = z.dot(&factor.t()); // (pairs, k)

        let mut out = Vec::with_capacity(means.len());
        for mean in means {
            assert_eq!(mean.len(), k, "mean length matches covariance");
            let mut lambda = Array2::zeros((n, k));
            for p in 0..pairs {
                for c in 0..k {
                    lambda[[2 * p, c]] = mean[c] + shift[[p, c]];
                    lambda[[2 * p + 1, c]] = mean[c] - shift[[p, c]];
                }
            }
            out.push(Self::from_lambda(lambda, act, None));
        }
        Ok(out)
    }

    /// Deterministic tensor Gauss-Hermite ensemble; the covariance must have
    /// numerical rank at most `max_rank` (at most 4).
    pub fn quadrature_family(
        means: &[Array1<F>],
        cov: &Array2<F>,
        act: ActivationKind,
        nodes_per_dim: usize,
        max_rank: usize,
    ) -> Result<Vec<Self>> {
        let k = cov.nrows();
        let factor = psd_sqrt_factor(cov, F::cast(1e-8))?;
        let rank = factor.ncols();
        if rank > max_rank.min(4) {
            return Err(Error::RankDeficient(format!(
                "quadrature ensemble supports rank <= {}, covariance has rank {rank}",
                max_rank.min(4)
            )));
        }
        let (nodes, weights) = gauss_hermite(nodes_per_dim);
        let n = nodes_per_dim.pow(rank as u32).max(1);
        let norm = std::f64::consts::PI.powf(-(rank as f64) / 2.0);
        let sqrt2 = std::f64::consts::SQRT_2;

        let mut zs = Array2::zeros((n, rank));
        let mut ws = Array1::zeros(n);
        for row in 0..n {
            let mut idx = row;
            let mut w = norm;
            for d in 0..rank {
                let i = idx % nodes_per_dim;
                idx /= nodes_per_dim;
                zs[[row, d]] = F::cast(sqrt2 * nodes[i]);
                w *= weights[i];
            }
            ws[row] = F::cast(w);
        }
        let shift = zs.dot(&factor.t());
        let mut out = Vec::with_capacity(means.len());
        for mean in means {
            assert_eq!(mean.len(), k);
            let mut lambda = shift.clone();
            for mut row in lambda.rows_mut() {
                row += mean;
            }
            out.push(Self::from_lambda(lambda, act, Some(ws.clone())));
        }
        Ok(out)
    }

    fn from_lambda(lambda: Array2<F>, act: ActivationKind, weights: Option<Array1<F>>) -> Self {
        let g = lambda.mapv(|x| act.g(x));
        let gp = lambda.mapv(|x| act.g_prime(x));
        FieldEnsemble {
            lambda,
            g,
            gp,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.nrows() == 0
    }

    pub fn n_units(&self) -> usize {
        self.lambda.ncols()
    }

    fn weighted_rows(&self, m: &Array2<F>) -> Array2<F> {
        match &self.weights {
            Some(w) => {
                let mut out = m.clone();
                for (mut row, &wi) in out.rows_mut().into_iter().zip(w.iter()) {
                    row.mapv_inplace(|x| x * wi);
                }
                out
            }
            None => m / F::cast(self.len() as f64),
        }
    }

    fn row_weight(&self, i: usize) -> F {
        match &self.weights {
            Some(w) => w[i],
            None => F::one() / F::cast(self.len() as f64),
        }
    }

    /// Mean of the activation-product named by `id`.
    pub fn expectation(&self, id: IntegralId) -> F {
        let mut acc = F::zero();
        for i in 0..self.len() {
            let g = self.g.row(i);
            let gp = self.gp.row(i);
            let lam = self.lambda.row(i);
            acc += self.row_weight(i)
                * id.product(
                    g.as_slice().expect("row-major"),
                    gp.as_slice().expect("row-major"),
                    lam.as_slice().expect("row-major"),
                );
        }
        acc
    }

    /// `E[(sum_k v_k g_k - y)^2]`: the per-cluster squared error.
    pub fn expected_sq_error(&self, v: &Array1<F>, y: F) -> F {
        let s = self.g.dot(v);
        let mut acc = F::zero();
        for i in 0..self.len() {
            let d = s[i] - y;
            acc += self.row_weight(i) * d * d;
        }
        acc
    }

    /// `P[y * sum_k v_k g_k < 0]`, counting a zero output as half an error.
    pub fn misclass_prob(&self, v: &Array1<F>, y: F) -> F {
        let s = self.g.dot(v);
        let half = F::cast(0.5);
        let mut acc = F::zero();
        for i in 0..self.len() {
            let out = y * s[i];
            if out < F::zero() {
                acc += self.row_weight(i);
            } else if out == F::zero() {
                acc += half * self.row_weight(i);
            }
        }
        acc
    }

    /// All expectation tables the equations of motion consume, in one sweep.
    pub fn tables(&self, v: &Array1<F>, y: F) -> ClusterTables<F> {
        let s = self.g.dot(v);
        let mut scaled = self.gp.clone();
        let mut resid = self.gp.clone();
        for (i, (mut srow, mut rrow)) in scaled
            .rows_mut()
            .into_iter()
            .zip(resid.rows_mut())
            .enumerate()
        {
            let d = (s[i] - y).abs();
            srow.mapv_inplace(|x| x * d);
            let e = y - s[i];
            rrow.mapv_inplace(|x| x * e);
        }

        let wgp = self.weighted_rows(&self.gp);
        let wg = self.weighted_rows(&self.g);
        let wscaled = self.weighted_rows(&scaled);
        let wresid = self.weighted_rows(&resid);

        ClusterTables {
            i31: wgp.sum_axis(Axis(0)),
            eg: wg.sum_axis(Axis(0)),
            e22: wgp.t().dot(&self.g),
            egg: wg.t().dot(&self.g),
            ephi: wresid.sum_axis(Axis(0)),
            rw_raw: wresid.t().dot(&self.lambda),
            noise: wscaled.t().dot(&scaled),
        }
    }
}

/// Per-cluster expectation tables over the local fields, with
/// `s = sum_j v_j g_j` the network output.
///
/// Entry conventions (all expectations under one cluster's Gaussian):
/// `i31[k] = E g'_k`, `eg[k] = E g_k`, `e22[k][j] = E g'_k g_j`,
/// `egg[k][j] = E g_k g_j`, `ephi[k] = E g'_k (y - s)`,
/// `rw_raw[k][l] = E g'_k (y - s) lam_l`,
/// `noise[k][l] = E g'_k g'_l (s - y)^2`.
#[derive(Debug, Clone)]
pub struct ClusterTables<F: Scalar> {
    pub i31: Array1<F>,
    pub eg: Array1<F>,
    pub e22: Array2<F>,
    pub egg: Array2<F>,
    pub ephi: Array1<F>,
    pub rw_raw: Array2<F>,
    pub noise: Array2<F>,
}

/// Unbiased Monte-Carlo estimate of the expectation named by `id` under
/// `N(mean, cov)`. Deterministic given the RNG state; antithetic pairing
/// halves the variance. `n_samples` is rounded up to the next even number.
pub fn mc_integral<F: Scalar, R: Rng + ?Sized>(
    id: IntegralId,
    gauss: &LocalFieldGaussian<F>,
    act: ActivationKind,
    n_samples: usize,
    rng: &mut R,
) -> Result<F> {
    if id.max_index() >= gauss.dim() {
        return Err(Error::InvalidDimension(format!(
            "integral index {} out of range for k = {}",
            id.max_index(),
            gauss.dim()
        )));
    }
    let ens = FieldEnsemble::sample(gauss.mean(), gauss.cov(), act, n_samples, rng)?;
    Ok(ens.expectation(id))
}

/// The five one-dimensional expectations entering the weak-correlation
/// formulas for one factor: `E f(x)`, `E[(x - xbar) f(x)]` and `Var x`.
#[derive(Debug, Clone, Copy)]
pub struct FactorStats<F> {
    pub mean: F,
    pub weighted: F,
    pub variance: F,
}

/// Joint expectations of the strongly-correlated pair `(x1, x2)` needed by
/// the three-point formula.
#[derive(Debug, Clone, Copy)]
pub struct PairStats<F> {
    /// `E[f(x1) g(x2)]`
    pub mean: F,
    /// `E[f g (x1 - x1bar)]`
    pub weighted_x1: F,
    /// `E[f g (x2 - x2bar)]`
    pub weighted_x2: F,
}

/// First-order expansion of `E[f(x) g(y)]` for weakly correlated `(x, y)`
/// with covariance `eps_m12`:
/// `E f E g + E[(x - xbar) f] eps_m12 E[(y - ybar) g] / (C_x C_y)`.
///
/// Exact (not just first order) when `f` and `g` are affine.
pub fn weak_corr_2pt<F: Scalar>(
    f: FactorStats<F>,
    g: FactorStats<F>,
    eps_m12: F,
) -> Result<F> {
    if !(f.variance > F::zero()) || !(g.variance > F::zero()) {
        return Err(Error::Domain(
            "weak_corr_2pt needs strictly positive variances".into(),
        ));
    }
    Ok(f.mean * g.mean + f.weighted * eps_m12 * g.weighted / (f.variance * g.variance))
}

/// First-order expansion of `E[f(x1) g(x2) h(x3)]` when `x1, x2` carry an
/// O(1) covariance `m12` and are each weakly correlated with `x3`
/// (covariances `eps_m13`, `eps_m23`).
pub fn weak_corr_3pt<F: Scalar>(
    f: FactorStats<F>,
    g: FactorStats<F>,
    h: FactorStats<F>,
    joint: PairStats<F>,
    m12: F,
    eps_m13: F,
    eps_m23: F,
) -> Result<F> {
    let det = f.variance * g.variance - m12 * m12;
    if !(det > F::zero()) {
        return Err(Error::Domain(format!(
            "degenerate (x1, x2) covariance: C1 C2 - M12^2 = {det}"
        )));
    }
    if !(h.variance > F::zero()) {
        return Err(Error::Domain("weak_corr_3pt needs C3 > 0".into()));
    }
    let bracket = joint.weighted_x1 * (eps_m13 * g.variance - m12 * eps_m23)
        + joint.weighted_x2 * (eps_m23 * f.variance - m12 * eps_m13);
    Ok(joint.mean * h.mean + h.weighted * bracket / (det * h.variance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::normal_expectation;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gauss1(m: f64, q: f64) -> LocalFieldGaussian<f64> {
        LocalFieldGaussian::new(array![m], array![[q]]).unwrap()
    }

    // Quadrature oracle for I31 with the scaled-erf activation:
    // closed form sqrt(2/pi) exp(-m^2 / (2 (1+q))) / sqrt(1+q).
    fn i31_erf_oracle(m: f64, q: f64) -> f64 {
        (2.0 / std::f64::consts::PI).sqrt() * (-m * m / (2.0 * (1.0 + q))).exp() / (1.0 + q).sqrt()
    }

    #[test]
    fn i31_erf_matches_quadrature_oracle() {
        // Frozen from the 1-d oracle: m = 0, q = 1 gives 1/sqrt(pi).
        let oracle = i31_erf_oracle(0.0, 1.0);
        assert!((oracle - 0.5641895835477563).abs() < 1e-15);
        // Cross-check the closed form against direct Gauss-Hermite.
        let gh: f64 = normal_expectation(64, |z: f64| {
            ActivationKind::ScaledErf.g_prime(0.3 + 1.4 * z)
        });
        assert!((gh - i31_erf_oracle(0.3, 1.4 * 1.4)).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let est = mc_integral(
            IntegralId::I31 { k: 0 },
            &gauss1(0.0, 1.0),
            ActivationKind::ScaledErf,
            1_000_000,
            &mut rng,
        )
        .unwrap();
        assert!((est - oracle).abs() < 2e-3, "estimate {est} oracle {oracle}");
    }

    #[test]
    fn i22_relu_matches_quadrature_oracle() {
        // E[Theta(lam) lam] at m = 0, q = 1 is 1/sqrt(2 pi) (frozen from the
        // 1-d quadrature oracle below: relu integrands are smooth on the
        // positive half-line, so integrate there with Gauss-Legendre).
        let oracle = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let gl: f64 = crate::quadrature::integrate_legendre(96, 0.0, 12.0, |z: f64| {
            z * crate::special::normal_pdf(z)
        });
        assert!((gl - oracle).abs() < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let est = mc_integral(
            IntegralId::I22 { k: 0, j: 0 },
            &gauss1(0.0, 1.0),
            ActivationKind::Relu,
            1_000_000,
            &mut rng,
        )
        .unwrap();
        assert!((est - oracle).abs() < 2e-3, "estimate {est} oracle {oracle}");
    }

    #[test]
    fn degenerate_covariance_evaluates_at_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = LocalFieldGaussian::new(array![0.7, -0.2], Array2::zeros((2, 2))).unwrap();
        let est = mc_integral(
            IntegralId::I31 { k: 0 },
            &g,
            ActivationKind::ScaledErf,
            100,
            &mut rng,
        )
        .unwrap();
        let expect = ActivationKind::ScaledErf.g_prime(0.7f64);
        assert!((est - expect).abs() < 1e-15);
        let est4 = mc_integral(
            IntegralId::I4 {
                k: 0,
                l: 1,
                j: 0,
                a: 1,
            },
            &g,
            ActivationKind::ScaledErf,
            100,
            &mut rng,
        )
        .unwrap();
        let gp = |x: f64| ActivationKind::ScaledErf.g_prime(x);
        let gg = |x: f64| ActivationKind::ScaledErf.g(x);
        assert!((est4 - gp(0.7) * gp(-0.2) * gg(0.7) * gg(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_limit_is_continuous() {
        // Shrinking the covariance drives the integral to the value at the
        // mean, monotonically in the gap.
        let mut prev_gap = f64::INFINITY;
        let target = ActivationKind::ScaledErf.g_prime(0.5f64) * ActivationKind::ScaledErf.g(0.5);
        for scale in [1e-1, 1e-2, 1e-3] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let g = LocalFieldGaussian::new(array![0.5], array![[scale]]).unwrap();
            let est = mc_integral(
                IntegralId::I22 { k: 0, j: 0 },
                &g,
                ActivationKind::ScaledErf,
                200_000,
                &mut rng,
            )
            .unwrap();
            let gap = (est - target).abs();
            assert!(gap < prev_gap + 1e-4);
            prev_gap = gap;
        }
        assert!(prev_gap < 2e-3);
    }

    #[test]
    fn exchange_symmetry_of_identical_neurons() {
        // Independent identical neurons: relabeling (k, j) leaves I22
        // invariant; same for I4 under (k <-> l) and (j <-> a).
        let mean = array![0.3, 0.3];
        let cov = array![[0.8, 0.0], [0.0, 0.8]];
        let g = LocalFieldGaussian::new(mean, cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: f64 = mc_integral(IntegralId::I22 { k: 0, j: 1 }, &g, ActivationKind::Relu, 400_000, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b: f64 = mc_integral(IntegralId::I22 { k: 1, j: 0 }, &g, ActivationKind::Relu, 400_000, &mut rng).unwrap();
        assert!((a - b).abs() < 3e-3);
    }

    #[test]
    fn mc_is_deterministic_given_seed() {
        let g = LocalFieldGaussian::new(array![0.1, -0.4], array![[1.0, 0.2], [0.2, 0.5]]).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(1234);
            mc_integral(IntegralId::I43 { k: 0, l: 1, j: 0 }, &g, ActivationKind::Relu, 10_000, &mut rng)
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn index_out_of_range_is_an_error() {
        let g = gauss1(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mc_integral(
            IntegralId::I22 { k: 0, j: 1 },
            &g,
            ActivationKind::Relu,
            10,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn quadrature_family_matches_mc() {
        let mean = array![0.2, -0.1];
        let cov = array![[0.7, 0.3], [0.3, 0.6]];
        let means = [mean];
        let quad =
            FieldEnsemble::<f64>::quadrature_family(&means, &cov, ActivationKind::ScaledErf, 48, 2)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mc =
            FieldEnsemble::<f64>::sample_family(&means, &cov, ActivationKind::ScaledErf, 400_000, &mut rng)
                .unwrap();
        let id = IntegralId::I3 { k: 0, j: 1, l: 1 };
        let q = quad[0].expectation(id);
        let m = mc[0].expectation(id);
        assert!((q - m).abs() < 3e-3, "quad {q} mc {m}");
    }

    #[test]
    fn tables_agree_with_single_integrals() {
        let mean = array![0.4, -0.3, 0.1];
        let cov = array![[1.0, 0.2, 0.0], [0.2, 0.8, -0.1], [0.0, -0.1, 0.5]];
        let means = [mean];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ens = FieldEnsemble::<f64>::sample_family(&means, &cov, ActivationKind::Relu, 50_000, &mut rng)
            .unwrap();
        let v = array![0.5, -1.0, 0.25];
        let y = 1.0;
        let t = ens[0].tables(&v, y);
        for k in 0..3 {
            assert!((t.i31[k] - ens[0].expectation(IntegralId::I31 { k })).abs() < 1e-12);
            // ephi[k] = y I31(k) - sum_j v_j I22(k, j).
            let mut ephi = y * ens[0].expectation(IntegralId::I31 { k });
            for j in 0..3 {
                ephi -= v[j] * ens[0].expectation(IntegralId::I22 { k, j });
            }
            assert!((t.ephi[k] - ephi).abs() < 1e-10);
            for j in 0..3 {
                assert!(
                    (t.e22[[k, j]] - ens[0].expectation(IntegralId::I22 { k, j })).abs() < 1e-12
                );
                // rw_raw[k][l] = y I32(k, l) - sum_j v_j I3(k, l, j).
                let mut rw = y * ens[0].expectation(IntegralId::I32 { k, j });
                for jj in 0..3 {
                    rw -= v[jj] * ens[0].expectation(IntegralId::I3 { k, j, l: jj });
                }
                assert!((t.rw_raw[[k, j]] - rw).abs() < 1e-10);
            }
        }
        // noise[k][l] equals I42 - 2 y sum_j v_j I43 + sum_{ja} v_j v_a I4.
        let (k, l) = (0, 2);
        let mut expect = ens[0].expectation(IntegralId::I42 { k, l });
        for j in 0..3 {
            expect -= 2.0 * v[j] * ens[0].expectation(IntegralId::I43 { k, l, j });
            for a in 0..3 {
                expect += v[j] * v[a] * ens[0].expectation(IntegralId::I4 { k, l, j, a });
            }
        }
        assert!((t.noise[[k, l]] - expect).abs() < 1e-10);
    }

    #[test]
    fn weak_corr_2pt_bilinear_is_exact() {
        // f = g = identity: E[x y] = xbar ybar + eps exactly.
        let f = FactorStats {
            mean: 0.7,
            weighted: 1.3, // E[(x - xbar) x] = Var x
            variance: 1.3,
        };
        let g = FactorStats {
            mean: -0.2,
            weighted: 0.9,
            variance: 0.9,
        };
        let v: f64 = weak_corr_2pt(f, g, 0.05).unwrap();
        assert!((v - (0.7 * -0.2 + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn weak_corr_2pt_relu_slope() {
        // f = g = relu, zero means, C = sigma^2: formula gives
        // sigma^2 / (2 pi) + c / 4.
        let sigma2 = 1.7f64;
        let e_relu = (sigma2 / (2.0 * std::f64::consts::PI)).sqrt();
        let weighted = sigma2 / 2.0; // E[x relu(x)]
        let f = FactorStats {
            mean: e_relu,
            weighted,
            variance: sigma2,
        };
        let c = 0.01;
        let v = weak_corr_2pt(f, f, c).unwrap();
        let expect = sigma2 / (2.0 * std::f64::consts::PI) + c / 4.0;
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn weak_corr_2pt_independence() {
        let f = FactorStats {
            mean: 0.3,
            weighted: 0.1,
            variance: 0.5,
        };
        let g = FactorStats {
            mean: -0.6,
            weighted: 0.2,
            variance: 0.8,
        };
        let v: f64 = weak_corr_2pt(f, g, 0.0).unwrap();
        assert_eq!(v, 0.3 * -0.6);
    }

    #[test]
    fn weak_corr_2pt_rejects_bad_variance() {
        let f = FactorStats {
            mean: 0.0,
            weighted: 0.0,
            variance: 0.0,
        };
        assert!(weak_corr_2pt::<f64>(f, f, 0.1).is_err());
    }

    #[test]
    fn weak_corr_3pt_block_independence() {
        let f = FactorStats { mean: 1.0, weighted: 0.3, variance: 1.0 };
        let g = FactorStats { mean: 2.0, weighted: 0.1, variance: 2.0 };
        let h = FactorStats { mean: -0.5, weighted: 0.7, variance: 0.9 };
        let joint = PairStats { mean: 2.3, weighted_x1: 0.4, weighted_x2: -0.2 };
        let v: f64 = weak_corr_3pt(f, g, h, joint, 0.6, 0.0, 0.0).unwrap();
        assert_eq!(v, 2.3 * -0.5);
    }

    #[test]
    fn weak_corr_3pt_gaussian_third_moment() {
        // f = g = h = identity, all means zero: the formula reproduces the
        // vanishing Gaussian third moment E[x1 x2 x3] = eps(M13 C2 ... ) with
        // E[fg(x1-x1bar)] = 0 arguments... here E[x1 x2 x1] = 0 by symmetry
        // only when means vanish; plug the exact joint moments:
        // E[x1 x2] = m12, E[x1 x2 x1] = 0, E[x1 x2 x2] = 0, E h = 0.
        let f = FactorStats { mean: 0.0, weighted: 1.0, variance: 1.0 };
        let h = FactorStats { mean: 0.0, weighted: 1.0, variance: 1.0 };
        let joint = PairStats { mean: 0.4, weighted_x1: 0.0, weighted_x2: 0.0 };
        let v: f64 = weak_corr_3pt(f, f, h, joint, 0.4, 1e-3, 2e-3).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn weak_corr_3pt_degenerate_pair_is_error() {
        let f = FactorStats { mean: 0.0, weighted: 1.0, variance: 1.0 };
        let joint = PairStats { mean: 1.0, weighted_x1: 0.0, weighted_x2: 0.0 };
        assert!(weak_corr_3pt::<f64>(f, f, f, joint, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn weak_corr_3pt_matches_trivariate_mc() {
        // Brute-force trivariate MC oracle for f = g = h = relu with a
        // strongly-correlated (x1, x2) pair and small couplings to x3.
        let c1 = 1.0f64;
        let c2 = 0.8;
        let c3 = 0.9;
        let m12 = 0.4;
        let eps = 1e-3;
        let m13 = eps;
        let m23 = 2.0 * eps;
        let cov = array![[c1, m12, m13], [m12, c2, m23], [m13, m23, c3]];
        let mean = array![0.1, -0.2, 0.3];
        let relu = |x: f64| x.max(0.0);

        let n = 10_000_000usize;
        let factor = psd_sqrt_factor(&cov, 1e-10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut acc = 0.0;
        let mut acc_sq = 0.0;
        for _ in 0..n {
            let z: Array1<f64> = Array1::from_iter((0..3).map(|_| f64::standard_normal(&mut rng)));
            let x = &mean + &factor.dot(&z);
            let p = relu(x[0]) * relu(x[1]) * relu(x[2]);
            acc += p;
            acc_sq += p * p;
        }
        let mc = acc / n as f64;
        let mc_var = (acc_sq / n as f64 - mc * mc) / n as f64;
        let mc_std = mc_var.sqrt();

        // Exact marginal/joint inputs for the formula, from 2-d quadrature of
        // the (x1, x2) block and 1-d closed forms for x3.
        let s3 = c3.sqrt();
        let e_h = mean[2] * crate::special::normal_cdf(mean[2] / s3)
            + s3 * crate::special::normal_pdf(mean[2] / s3);
        let weighted_h = {
            // E[(x3 - m3) relu(x3)] = E[x3 relu] - m3 E[relu]
            let m = mean[2];
            let e_x_relu = (m * m + c3) * crate::special::normal_cdf(m / s3)
                + m * s3 * crate::special::normal_pdf(m / s3);
            e_x_relu - m * e_h
        };
        let h = FactorStats { mean: e_h, weighted: weighted_h, variance: c3 };
        let f = FactorStats { mean: 0.0, weighted: 0.0, variance: c1 }; // only variances used
        let g = FactorStats { mean: 0.0, weighted: 0.0, variance: c2 };

        // Joint (x1, x2) expectations by dense 2-d Gauss-Legendre over a box.
        let quad = |weight: usize| -> f64 {
            let half = 8.0;
            let n1 = 160;
            let (nodes, ws) = crate::quadrature::gauss_legendre(n1);
            let det = c1 * c2 - m12 * m12;
            let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
            let mut total = 0.0;
            for (xi, wi) in nodes.iter().zip(&ws) {
                let x = mean[0] + half * xi;
                for (yj, wj) in nodes.iter().zip(&ws) {
                    let y = mean[1] + half * yj;
                    let dx = x - mean[0];
                    let dy = y - mean[1];
                    let q = (c2 * dx * dx - 2.0 * m12 * dx * dy + c1 * dy * dy) / det;
                    let dens = norm * (-q / 2.0).exp();
                    let base = relu(x) * relu(y);
                    let extra = match weight {
                        0 => 1.0,
                        1 => dx,
                        _ => dy,
                    };
                    total += wi * wj * half * half * base * extra * dens;
                }
            }
            total
        };
        let joint = PairStats {
            mean: quad(0),
            weighted_x1: quad(1),
            weighted_x2: quad(2),
        };

        let formula = weak_corr_3pt(f, g, h, joint, m12, m13, m23).unwrap();
        assert!(
            (formula - mc).abs() < 3.0 * mc_std + 1e-5,
            "formula {formula} mc {mc} +- {mc_std}"
        );
    }
}
