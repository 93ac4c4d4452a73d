//! Closed-form and semi-analytic theory of random features on Gaussian
//! mixtures: feature moments (general low-SNR expansion and exact ReLU),
//! the ridgeless asymptotic regression solution with its test errors, and
//! the kernel correspondence.
//!
//! Feature covariances are kept in factored form (`diag + gains F F^T
//! gains / D`), so the asymptotic solve either materializes the `P x P`
//! matrix and eigendecomposes it (small `P`, the spec'd pseudo-inverse
//! route) or runs matrix-free conjugate gradients at `O(P D)` memory for
//! large `P`.

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, sym_eigen};
use crate::mixture::MixtureSpec;
use crate::moments::ActivationKind;
use crate::quadrature::normal_expectation;
use crate::scalar::Scalar;
use crate::special::{normal_cdf, normal_pdf};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// Low-SNR activation constants: `a = E psi(sigma z)`, `b = E z psi(sigma z)`,
/// `c^2 = E psi(sigma z)^2`, `d^2 = E z psi(sigma z)^2` over standard normal `z`.
#[derive(Debug, Clone, Copy)]
pub struct AbcConstants<F> {
    pub a: F,
    pub b: F,
    pub c2: F,
    pub d2: F,
}

/// Activation constants by closed form (ReLU) or 1-d Gauss-Hermite
/// quadrature (scaled erf).
pub fn abc_constants<F: Scalar>(act: ActivationKind, sigma: F) -> AbcConstants<F> {
    match act {
        ActivationKind::Relu => AbcConstants {
            a: sigma * F::cast(0.3989422804014327), // 1/sqrt(2 pi)
            b: sigma * F::cast(0.5),
            c2: sigma * sigma * F::cast(0.5),
            d2: sigma * sigma * F::cast(0.7978845608028654), // sqrt(2/pi)
        },
        ActivationKind::ScaledErf => {
            let n = 96;
            let a = normal_expectation(n, |z: F| act.g(sigma * z));
            let b = normal_expectation(n, |z: F| z * act.g(sigma * z));
            let c2 = normal_expectation(n, |z: F| {
                let g = act.g(sigma * z);
                g * g
            });
            let d2 = normal_expectation(n, |z: F| {
                let g = act.g(sigma * z);
                z * g * g
            });
            AbcConstants { a, b, c2, d2 }
        }
    }
}

fn par_matvec<F: Scalar>(m: &Array2<F>, x: &Array1<F>) -> Array1<F> {
    let rows: Vec<F> = m
        .axis_iter(ndarray::Axis(0))
        .into_par_iter()
        .map(|r| r.dot(x))
        .collect();
    Array1::from_vec(rows)
}

fn par_matvec_t<F: Scalar>(m: &Array2<F>, y: &Array1<F>) -> Array1<F> {
    let d = m.ncols();
    let flat = m.as_slice().expect("row-major projection");
    let ys = y.as_slice().expect("contiguous");
    let acc = flat
        .par_chunks(d)
        .zip(ys.par_iter())
        .fold(
            || vec![F::zero(); d],
            |mut acc, (row, &yi)| {
                for (a, &r) in acc.iter_mut().zip(row) {
                    *a += yi * r;
                }
                acc
            },
        )
        .reduce(
            || vec![F::zero(); d],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Array1::from_vec(acc)
}

/// Within-cluster feature covariance, factored as
/// `diag + gains (F F^T / D) gains` with per-cluster or shared pieces.
#[derive(Debug, Clone)]
pub enum FeatureCov<F: Scalar> {
    /// Low-SNR expansion: off-diagonal `b^2 (F F^T)_{ij} / D`, diagonal
    /// `c^2 - a^2`, shared across clusters.
    LowSnr { offdiag_b2: F, diag: F },
    /// Exact ReLU: per-cluster gains `g_i = (sigma/2)(1 + erf(rho_i /
    /// sqrt(2)))` and diagonal corrections on top of the factored part.
    ClusterRelu {
        gains: Vec<Array1<F>>,
        diag_adjust: Vec<Array1<F>>,
    },
}

/// First two moments of the features `z = psi(F x / sqrt(D))` under every
/// cluster of a mixture.
#[derive(Debug, Clone)]
pub struct FeatureMoments<F: Scalar> {
    projection: Arc<Array2<F>>,
    /// `|F_i|^2 / D` per feature.
    row_norms: Array1<F>,
    /// Per-cluster feature means.
    pub means: Vec<Array1<F>>,
    pub weights: Array1<F>,
    pub labels: Array1<F>,
    pub cov: FeatureCov<F>,
}

impl<F: Scalar> FeatureMoments<F> {
    pub fn n_features(&self) -> usize {
        self.projection.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.means.len()
    }

    pub fn projection(&self) -> &Arc<Array2<F>> {
        &self.projection
    }

    /// Mixture-wide feature mean.
    pub fn mean_bar(&self) -> Array1<F> {
        let mut bar = Array1::zeros(self.n_features());
        for (m, &w) in self.means.iter().zip(self.weights.iter()) {
            bar.scaled_add(w, m);
        }
        bar
    }

    /// Input-label covariance `Phi_i = E[z_i y]` (centered if requested;
    /// identical for balanced labels).
    pub fn label_covariance(&self, center: bool) -> Array1<F> {
        let bar = if center {
            self.mean_bar()
        } else {
            Array1::zeros(self.n_features())
        };
        let mut phi = Array1::zeros(self.n_features());
        for a in 0..self.n_clusters() {
            let w = self.weights[a] * self.labels[a];
            phi.scaled_add(w, &(&self.means[a] - &bar));
        }
        phi
    }

    /// `cov_alpha x` without materializing the matrix.
    pub fn cov_apply(&self, alpha: usize, x: &Array1<F>) -> Array1<F> {
        match &self.cov {
            FeatureCov::LowSnr { offdiag_b2, diag } => {
                let ft_x = par_matvec_t(&self.projection, x);
                let mut out = par_matvec(&self.projection, &ft_x);
                let inv_d = F::one() / F::cast(self.projection.ncols() as f64);
                for i in 0..out.len() {
                    out[i] = *offdiag_b2 * (out[i] * inv_d - self.row_norms[i] * x[i])
                        + *diag * x[i];
                }
                out
            }
            FeatureCov::ClusterRelu { gains, diag_adjust } => {
                let g = &gains[alpha];
                let gx: Array1<F> = g * x;
                let ft = par_matvec_t(&self.projection, &gx);
                let mut out = par_matvec(&self.projection, &ft);
                let inv_d = F::one() / F::cast(self.projection.ncols() as f64);
                for i in 0..out.len() {
                    out[i] = g[i] * out[i] * inv_d + diag_adjust[alpha][i] * x[i];
                }
                out
            }
        }
    }

    /// `w^T cov_alpha w`.
    pub fn cov_quad_form(&self, alpha: usize, w: &Array1<F>) -> F {
        let inv_d = F::one() / F::cast(self.projection.ncols() as f64);
        match &self.cov {
            FeatureCov::LowSnr { offdiag_b2, diag } => {
                let ft = par_matvec_t(&self.projection, w);
                let mut diag_part = F::zero();
                for i in 0..w.len() {
                    diag_part += (*diag - *offdiag_b2 * self.row_norms[i]) * w[i] * w[i];
                }
                diag_part + *offdiag_b2 * ft.dot(&ft) * inv_d
            }
            FeatureCov::ClusterRelu { gains, diag_adjust } => {
                let gw: Array1<F> = &gains[alpha] * w;
                let ft = par_matvec_t(&self.projection, &gw);
                let mut diag_part = F::zero();
                for i in 0..w.len() {
                    diag_part += diag_adjust[alpha][i] * w[i] * w[i];
                }
                diag_part + ft.dot(&ft) * inv_d
            }
        }
    }

    /// Dense within-cluster covariance (small `P` only).
    pub fn cov_materialize(&self, alpha: usize) -> Array2<F> {
        let p = self.n_features();
        let inv_d = F::one() / F::cast(self.projection.ncols() as f64);
        let gram = self.projection.dot(&self.projection.t());
        let mut cov = Array2::zeros((p, p));
        match &self.cov {
            FeatureCov::LowSnr { offdiag_b2, diag } => {
                for i in 0..p {
                    for j in 0..p {
                        cov[[i, j]] = *offdiag_b2 * gram[[i, j]] * inv_d;
                    }
                    cov[[i, i]] = *diag;
                }
            }
            FeatureCov::ClusterRelu { gains, diag_adjust } => {
                let g = &gains[alpha];
                for i in 0..p {
                    for j in 0..p {
                        cov[[i, j]] = g[i] * g[j] * gram[[i, j]] * inv_d;
                    }
                    cov[[i, i]] += diag_adjust[alpha][i];
                }
            }
        }
        cov
    }

    /// Apply the mixture-wide second moment of (optionally centered)
    /// features: `sum_alpha P_alpha [cov_alpha x + (d_alpha . x) d_alpha]`
    /// with `d_alpha` the (centered) cluster mean.
    pub fn second_moment_apply(&self, x: &Array1<F>, center: bool) -> Array1<F> {
        let bar = if center {
            self.mean_bar()
        } else {
            Array1::zeros(self.n_features())
        };
        let mut out = Array1::zeros(self.n_features());
        for a in 0..self.n_clusters() {
            let w = self.weights[a];
            out.scaled_add(w, &self.cov_apply(a, x));
            let d: Array1<F> = &self.means[a] - &bar;
            out.scaled_add(w * d.dot(x), &d);
        }
        out
    }

    /// Dense mixture-wide second moment (small `P` only).
    pub fn second_moment_materialize(&self, center: bool) -> Array2<F> {
        let p = self.n_features();
        let bar = if center {
            self.mean_bar()
        } else {
            Array1::zeros(p)
        };
        let mut omega = Array2::zeros((p, p));
        for a in 0..self.n_clusters() {
            let w = self.weights[a];
            omega.scaled_add(w, &self.cov_materialize(a));
            let d: Array1<F> = &self.means[a] - &bar;
            for i in 0..p {
                for j in 0..p {
                    omega[[i, j]] += w * d[i] * d[j];
                }
            }
        }
        omega
    }
}

fn isotropic_sigma<F: Scalar>(spec: &MixtureSpec<F>) -> Result<F> {
    match spec.isotropic_sigma2() {
        Some(s2) if s2 > F::zero() => Ok(s2.sqrt()),
        Some(_) => Err(Error::Domain(
            "feature moments need sigma^2 > 0".into(),
        )),
        None => Err(Error::Domain(
            "feature-moment formulas assume an isotropic input covariance".into(),
        )),
    }
}

fn row_norms<F: Scalar>(f: &Array2<F>) -> Array1<F> {
    let inv_d = F::one() / F::cast(f.ncols() as f64);
    Array1::from_iter(f.rows().into_iter().map(|r| r.dot(&r) * inv_d))
}

/// Low-SNR feature moments for a generic activation (Gaussian-equivalence
/// regime `|mu| / sqrt(D) = O(1)`): per-cluster means
/// `a + b (F mu)_i / (sigma D)`, shared covariance with diagonal `c^2 - a^2`
/// and off-diagonal `b^2 (F F^T)_{ij} / D`.
pub fn low_snr_moments<F: Scalar>(
    spec: &MixtureSpec<F>,
    projection: Arc<Array2<F>>,
    act: ActivationKind,
) -> Result<FeatureMoments<F>> {
    let sigma = isotropic_sigma(spec)?;
    if projection.ncols() != spec.dim() {
        return Err(Error::InvalidDimension(
            "projection columns must match mixture dim".into(),
        ));
    }
    let consts = abc_constants(act, sigma);
    let d = F::cast(spec.dim() as f64);
    let means = spec
        .clusters()
        .iter()
        .map(|c| {
            let proj = par_matvec(&projection, &c.mean_scaled);
            proj.mapv(|t| consts.a + consts.b * t / (sigma * d))
        })
        .collect();
    Ok(FeatureMoments {
        row_norms: row_norms(&projection),
        projection,
        means,
        weights: spec.weights(),
        labels: spec.labels(),
        cov: FeatureCov::LowSnr {
            offdiag_b2: consts.b * consts.b,
            diag: consts.c2 - consts.a * consts.a,
        },
    })
}

/// Exact ReLU feature moments, valid at any SNR: truncated-Gaussian means
/// and covariance per cluster.
///
/// Each pre-activation `u_i` is exactly Gaussian with mean `(F mu)_i / D`
/// and variance `sigma^2 |F_i|^2 / D`; the moments use the realized row
/// norms rather than their large-D limit of 1, so they are exact for the
/// given projection (the limit form is recovered as `D` grows).
pub fn relu_moments<F: Scalar>(
    spec: &MixtureSpec<F>,
    projection: Arc<Array2<F>>,
) -> Result<FeatureMoments<F>> {
    let sigma = isotropic_sigma(spec)?;
    if projection.ncols() != spec.dim() {
        return Err(Error::InvalidDimension(
            "projection columns must match mixture dim".into(),
        ));
    }
    let d = F::cast(spec.dim() as f64);
    let rn = row_norms(&projection);
    let feature_std: Array1<F> = rn.mapv(|r| sigma * r.sqrt());
    let mut means = Vec::with_capacity(spec.n_clusters());
    let mut gains = Vec::with_capacity(spec.n_clusters());
    let mut diag_adjust = Vec::with_capacity(spec.n_clusters());
    for c in spec.clusters() {
        let shift: Array1<F> = par_matvec(&projection, &c.mean_scaled).mapv(|t| t / d);
        let mut mean = Array1::zeros(shift.len());
        let mut gain = Array1::zeros(shift.len());
        let mut adjust = Array1::zeros(shift.len());
        for i in 0..shift.len() {
            let s = feature_std[i];
            if s == F::zero() {
                mean[i] = shift[i].max(F::zero());
                continue;
            }
            let r = shift[i] / s;
            let cdf = normal_cdf(r);
            let pdf = normal_pdf(r);
            let h = r * cdf + pdf; // E relu(N(r, 1))
            mean[i] = s * h;
            // Off-diagonal couplings keep the cross-covariance
            // sigma^2 (F F^T)_{ij} / D; the per-feature slope is Phi(r).
            gain[i] = sigma * cdf;
            let var = s * s * ((r * r + F::one()) * cdf + r * pdf - h * h);
            adjust[i] = (var - gain[i] * gain[i] * rn[i]).max(F::zero());
        }
        means.push(mean);
        gains.push(gain);
        diag_adjust.push(adjust);
    }
    Ok(FeatureMoments {
        row_norms: rn,
        projection,
        means,
        weights: spec.weights(),
        labels: spec.labels(),
        cov: FeatureCov::ClusterRelu { gains, diag_adjust },
    })
}

/// How the ridgeless normal equations are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfSolver {
    /// Materialize the `P x P` second moment, eigendecompose, drop modes
    /// below the relative rank cutoff.
    Dense,
    /// Matrix-free conjugate gradients (large `P`; the second moment must be
    /// positive definite).
    MatrixFree,
    /// Dense below 600 features, matrix-free above.
    Auto,
}

/// Options for the asymptotic regression solve.
#[derive(Debug, Clone)]
pub struct RfSolveOptions<F: Scalar> {
    /// Center features by the mixture-wide mean (the appendix convention).
    /// The non-centered path instead solves against the raw second moment,
    /// which is what plain SGD on the features converges to; for balanced
    /// labels it simply augments the regression with the constant mode.
    pub center: bool,
    pub solver: RfSolver,
    /// Relative eigenvalue cutoff of the dense pseudo-inverse.
    pub rank_cutoff: F,
    pub cg_tol: F,
    pub cg_max_iter: usize,
}

impl<F: Scalar> Default for RfSolveOptions<F> {
    fn default() -> Self {
        RfSolveOptions {
            center: true,
            solver: RfSolver::Auto,
            rank_cutoff: F::cast(1e-10),
            cg_tol: F::cast(1e-12),
            cg_max_iter: 2_000,
        }
    }
}

/// Asymptotic (`t -> infinity`) ridgeless solution of the feature
/// regression.
#[derive(Debug, Clone)]
pub struct RfAsymptotics<F: Scalar> {
    /// `w_hat = sqrt(P) Omega_z^+ Phi`.
    pub w_hat: Array1<F>,
    /// `pmse_inf = (1 - Phi^T Omega_z^+ Phi) / 2`.
    pub pmse_inf: F,
    pub centered: bool,
}

/// Fixed point of the averaged SGD update: eigendecompose (or CG-solve) the
/// feature second moment against the input-label covariance.
pub fn asymptotic_weights<F: Scalar>(
    moments: &FeatureMoments<F>,
    opts: &RfSolveOptions<F>,
) -> Result<RfAsymptotics<F>> {
    let p = moments.n_features();
    let sqrt_p = F::cast(p as f64).sqrt();
    let phi = moments.label_covariance(opts.center);
    let solver = match opts.solver {
        RfSolver::Auto => {
            if p <= 600 {
                RfSolver::Dense
            } else {
                RfSolver::MatrixFree
            }
        }
        s => s,
    };
    let x = match solver {
        RfSolver::Dense => {
            let omega = moments.second_moment_materialize(opts.center);
            let (vals, vecs) = sym_eigen(&omega);
            let max_eig = vals[0].max(F::zero());
            let cutoff = opts.rank_cutoff * max_eig;
            let kept: Vec<usize> = (0..p).filter(|&c| vals[c] > cutoff).collect();
            if kept.is_empty() {
                return Err(Error::RankDeficient(
                    "all feature-covariance eigenvalues below the rank cutoff".into(),
                ));
            }
            let mut x = Array1::zeros(p);
            for &c in &kept {
                let col = vecs.column(c);
                let proj = col.dot(&phi) / vals[c];
                for i in 0..p {
                    x[i] += vecs[[i, c]] * proj;
                }
            }
            x
        }
        RfSolver::MatrixFree => cg_solve(
            |v| moments.second_moment_apply(v, opts.center),
            &phi,
            opts.cg_tol,
            opts.cg_max_iter,
        )?,
        RfSolver::Auto => unreachable!(),
    };
    let pmse_inf = F::cast(0.5) * (F::one() - phi.dot(&x));
    Ok(RfAsymptotics {
        w_hat: x.mapv(|v| v * sqrt_p),
        pmse_inf,
        centered: opts.center,
    })
}

/// Per-cluster local-field moments and the asymptotic classification error.
#[derive(Debug, Clone)]
pub struct RfClassError<F: Scalar> {
    pub class_error: F,
    /// `(M_alpha, Q_alpha)` per cluster.
    pub per_cluster: Vec<(F, F)>,
}

/// Gaussian-equivalence classification error of the asymptotic solution:
/// `(1 - sum_alpha P_alpha y_alpha erf(M_alpha / sqrt(2 Q_alpha))) / 2`.
pub fn asymptotic_class_error<F: Scalar>(
    asym: &RfAsymptotics<F>,
    moments: &FeatureMoments<F>,
) -> Result<RfClassError<F>> {
    let p = moments.n_features();
    let sqrt_p = F::cast(p as f64).sqrt();
    let bar = if asym.centered {
        moments.mean_bar()
    } else {
        Array1::zeros(p)
    };
    let mut per_cluster = Vec::with_capacity(moments.n_clusters());
    let mut acc = F::zero();
    for a in 0..moments.n_clusters() {
        let d: Array1<F> = &moments.means[a] - &bar;
        let m_a = asym.w_hat.dot(&d) / sqrt_p;
        let q_a = moments.cov_quad_form(a, &asym.w_hat) / F::cast(p as f64);
        if !(q_a > F::zero()) {
            return Err(Error::Domain(format!(
                "degenerate local-field variance Q_{a} = {q_a}"
            )));
        }
        acc += moments.weights[a]
            * moments.labels[a]
            * (m_a / (F::cast(2.0) * q_a).sqrt()).erf();
        per_cluster.push((m_a, q_a));
    }
    Ok(RfClassError {
        class_error: F::cast(0.5) * (F::one() - acc),
        per_cluster,
    })
}

/// Limiting ReLU random-features kernel (angular form):
/// `K(x, y) = |x||y| (sin th + (pi - th) cos th) / (2 pi D)` with
/// `cos th = x.y / (|x||y|)`.
pub fn relu_kernel<F: Scalar>(x: ArrayView1<F>, y: ArrayView1<F>) -> Result<F> {
    let d = x.len();
    if y.len() != d {
        return Err(Error::InvalidDimension("kernel inputs differ in length".into()));
    }
    let nx = x.dot(&x).sqrt();
    let ny = y.dot(&y).sqrt();
    if !(nx > F::zero()) || !(ny > F::zero()) {
        return Err(Error::Domain("relu kernel needs nonzero inputs".into()));
    }
    let cos = (x.dot(&y) / (nx * ny)).min(F::one()).max(-F::one());
    let theta = cos.acos();
    let pi = F::cast(std::f64::consts::PI);
    Ok(nx * ny * (theta.sin() + (pi - theta) * cos)
        / (F::cast(2.0) * pi * F::cast(d as f64)))
}

/// Monte-Carlo estimates of `(a^2, b^2, c^2)` directly from a kernel
/// evaluator, with standard errors.
#[derive(Debug, Clone, Copy)]
pub struct KernelAbcEstimate<F> {
    pub a2: F,
    pub b2: F,
    pub c2: F,
    pub a2_std_err: F,
    pub b2_std_err: F,
    pub c2_std_err: F,
}

impl<F: Scalar> KernelAbcEstimate<F> {
    /// Positive-branch constants; errors if `b^2` is negative beyond three
    /// standard errors of the Monte-Carlo estimate.
    pub fn to_constants(&self) -> Result<(F, F, F)> {
        if self.b2 < -F::cast(3.0) * self.b2_std_err {
            return Err(Error::Estimation(format!(
                "b^2 estimate {} negative beyond noise {}",
                self.b2, self.b2_std_err
            )));
        }
        Ok((
            self.a2.max(F::zero()).sqrt(),
            self.b2.max(F::zero()).sqrt(),
            self.c2,
        ))
    }
}

/// Recover the low-SNR constants from a kernel:
/// `c^2 = E K(s w1, s w1)`, `a^2 = E K(s w1, s w2)` and `b^2` from the
/// second mixed difference of mean shifts,
/// `b^2 = D s^2 E[K(m + s w1, m + s w2) - K(m + s w1, s w2)
///               - K(s w1, m + s w2) + K(s w1, s w2)]`,
/// with `m = mu / sqrt(D)` and all four kernels on common probes (paired
/// noise). The mixed difference isolates the `<psi'>^2` cross term; the
/// plain both-shifted difference also carries a `<psi><psi''> |mu|^2/D`
/// self-term, which is nonzero for activations with a kink (ReLU) and does
/// not decay with `D`.
pub fn kernel_abc<F: Scalar, K, R>(
    kernel: K,
    sigma: F,
    mu: &Array1<F>,
    n_probes: usize,
    rng: &mut R,
) -> Result<KernelAbcEstimate<F>>
where
    K: Fn(ArrayView1<F>, ArrayView1<F>) -> Result<F>,
    R: Rng + ?Sized,
{
    if n_probes < 2 {
        return Err(Error::Domain("kernel_abc needs at least 2 probes".into()));
    }
    let d = mu.len();
    let sqrt_d = F::cast(d as f64).sqrt();
    let center: Array1<F> = mu.mapv(|m| m / sqrt_d);
    let mut acc = [F::zero(); 3];
    let mut acc_sq = [F::zero(); 3];
    let mut w1 = Array1::zeros(d);
    let mut w2 = Array1::zeros(d);
    for _ in 0..n_probes {
        for i in 0..d {
            w1[i] = sigma * F::standard_normal(rng);
            w2[i] = sigma * F::standard_normal(rng);
        }
        let c_probe = kernel(w1.view(), w1.view())?;
        let a_probe = kernel(w1.view(), w2.view())?;
        let shifted1: Array1<F> = &center + &w1;
        let shifted2: Array1<F> = &center + &w2;
        let b_probe = kernel(shifted1.view(), shifted2.view())?
            - kernel(shifted1.view(), w2.view())?
            - kernel(w1.view(), shifted2.view())?
            + a_probe;
        for (slot, v) in [c_probe, a_probe, b_probe].into_iter().enumerate() {
            acc[slot] += v;
            acc_sq[slot] += v * v;
        }
    }
    let n = F::cast(n_probes as f64);
    let mean = |s: F| s / n;
    let std_err = |s: F, sq: F| {
        let m = s / n;
        ((sq / n - m * m).max(F::zero()) / n).sqrt()
    };
    let scale = F::cast(d as f64) * sigma * sigma;
    Ok(KernelAbcEstimate {
        c2: mean(acc[0]),
        a2: mean(acc[1]),
        b2: scale * mean(acc[2]),
        c2_std_err: std_err(acc[0], acc_sq[0]),
        a2_std_err: std_err(acc[1], acc_sq[1]),
        b2_std_err: scale * std_err(acc[2], acc_sq[2]),
    })
}
