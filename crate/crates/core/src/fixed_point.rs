//! Long-time performance of the two-layer network on the XOR-like mixture:
//! the reduced-ansatz fixed point of the equations of motion, and the
//! nearest-mean oracle benchmark.
//!
//! The XOR geometry (isotropic covariance, means `+-sqrt(D) e1` / `+-sqrt(D)
//! e2`) pins the weights to the plane of the means, so every local field is
//! `lam_k = M_k + sigma (a_k z1 + b_k z2)` with a rank-2 covariance. All
//! activation integrals then reduce to two-dimensional Gaussian integrals;
//! for ReLU these are evaluated in closed form along radial rays (the
//! integrand is piecewise polynomial in the radius), which keeps the
//! residuals smooth and lets the root-finder converge to tight tolerances.
//! A Monte-Carlo residual backend with a frozen seed is available as well.

use crate::dynamics_ode::{drift_coefficients, OrderParameterState, QPseudo, SpectrumGrid};
use crate::error::{Error, Result};
use crate::linalg::{min_norm_lsq, solve_dense};
use crate::moments::{ActivationKind, ClusterTables, FieldEnsemble};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Classification error of the oracle that assigns each input the label of
/// the nearest mean: `(1 - erf(|mu| / (2 sigma sqrt(D)))^2) / 2`, taking the
/// `|mu| / sqrt(D)` ratio directly.
pub fn oracle_error<F: Scalar>(mu_norm_over_sqrt_d: F, sigma: F) -> Result<F> {
    if sigma < F::zero() {
        return Err(Error::Domain(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == F::zero() {
        return if mu_norm_over_sqrt_d > F::zero() {
            Ok(F::zero())
        } else {
            Err(Error::Domain(
                "oracle error undefined for sigma = 0 with zero-separation means".into(),
            ))
        };
    }
    let e = (mu_norm_over_sqrt_d / (F::cast(2.0) * sigma)).erf();
    Ok(F::cast(0.5) * (F::one() - e * e))
}

/// Cluster order used throughout: `(+0, +1, -0, -1)` with labels
/// `(+1, +1, -1, -1)` and mean overlaps `T` in the `+-1` block pattern.
pub const XOR_LABELS: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

fn xor_t_matrix<F: Scalar>() -> Array2<F> {
    let mut t = Array2::zeros((4, 4));
    let pattern = [
        [1.0, -1.0, 0.0, 0.0],
        [-1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, -1.0],
        [0.0, 0.0, -1.0, 1.0],
    ];
    for a in 0..4 {
        for b in 0..4 {
            t[[a, b]] = F::cast(pattern[a][b]);
        }
    }
    t
}

/// Reduced description of the XOR fixed point: the `K` free overlaps.
///
/// Neurons pair up under the mixture's symmetry: neuron `i < K/2` has
/// overlaps `(a_i, b_i)` with the positive/negative mean directions and its
/// partner `i + K/2` carries the swapped pair `(b_i, a_i)`. The cluster
/// constraint `M[alpha][k] = -M[alpha+1][k]` holds by construction, and the
/// in-plane geometry fixes `Q = sigma^2 (a a^T + b b^T)`.
#[derive(Debug, Clone)]
pub struct XorAnsatz<F: Scalar> {
    /// `[a_1 .. a_{K/2}, b_1 .. b_{K/2}]`
    pub m_free: Array1<F>,
}

impl<F: Scalar> XorAnsatz<F> {
    pub fn new(m_free: Array1<F>) -> Result<Self> {
        let k = m_free.len();
        if k < 4 || k % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "XOR ansatz needs even K >= 4, got {k}"
            )));
        }
        Ok(XorAnsatz { m_free })
    }

    pub fn k(&self) -> usize {
        self.m_free.len()
    }

    /// Overlap of every neuron with the positive-label mean direction.
    pub fn axis_a(&self) -> Array1<F> {
        let h = self.k() / 2;
        let mut a = Array1::zeros(self.k());
        for i in 0..h {
            a[i] = self.m_free[i];
            a[i + h] = self.m_free[i + h];
        }
        a
    }

    /// Overlap of every neuron with the negative-label mean direction.
    pub fn axis_b(&self) -> Array1<F> {
        let h = self.k() / 2;
        let mut b = Array1::zeros(self.k());
        for i in 0..h {
            b[i] = self.m_free[i + h];
            b[i + h] = self.m_free[i];
        }
        b
    }

    /// Full `4 x K` overlap matrix in the `(+0, +1, -0, -1)` cluster order.
    pub fn expand_m(&self) -> Array2<F> {
        let k = self.k();
        let a = self.axis_a();
        let b = self.axis_b();
        let mut m = Array2::zeros((4, k));
        for j in 0..k {
            m[[0, j]] = a[j];
            m[[1, j]] = -a[j];
            m[[2, j]] = b[j];
            m[[3, j]] = -b[j];
        }
        m
    }

    /// `Q = sigma^2 (a a^T + b b^T)`: the in-plane constraint.
    pub fn q_matrix(&self, sigma2: F) -> Array2<F> {
        let k = self.k();
        let a = self.axis_a();
        let b = self.axis_b();
        let mut q = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                q[[i, j]] = sigma2 * (a[i] * a[j] + b[i] * b[j]);
            }
        }
        q
    }

    /// Second layer implied by requiring output `+-1` on the four means:
    /// the minimum-norm solution of `sum_k v_k g(M[alpha][k]) = y_alpha`.
    pub fn solve_v(&self) -> Array1<F> {
        let m = self.expand_m();
        let g = m.mapv(|x| ActivationKind::Relu.g(x));
        let y = Array1::from_iter(XOR_LABELS.iter().map(|&v| F::cast(v)));
        min_norm_lsq(&g, &y, F::cast(1e-10))
    }

    /// Expand to a single-bin order-parameter state (atom at `sigma^2`).
    pub fn to_state(&self, sigma: F, v: &Array1<F>) -> OrderParameterState<F> {
        let k = self.k();
        let sigma2 = sigma * sigma;
        let m_full = self.expand_m();
        let q_full = self.q_matrix(sigma2);
        let mut m = Array3::zeros((4, k, 1));
        let mut q = Array3::zeros((k, k, 1));
        for a in 0..4 {
            for j in 0..k {
                m[[a, j, 0]] = m_full[[a, j]];
            }
        }
        // Q = rho * q at the single atom rho = sigma^2.
        for i in 0..k {
            for j in 0..k {
                q[[i, j, 0]] = q_full[[i, j]] / sigma2;
            }
        }
        OrderParameterState {
            m,
            q,
            v: v.clone(),
            t_matrix: xor_t_matrix(),
            chi: sigma2 * sigma2,
            time: F::infinity(),
            grid: SpectrumGrid::single_atom(sigma2),
        }
    }
}

/// Exact rank-2 ReLU integral engine for one cluster.
///
/// Fields along the polar ray `z = r (cos th, sin th)` are affine in `r`, so
/// with ReLU every expectation is piecewise polynomial in `r` and the radial
/// integrals against the Rayleigh density come out in closed form; only the
/// angular average is discretized.
struct RadialRelu<'a, F: Scalar> {
    mean: &'a Array1<F>,
    dir1: &'a Array1<F>,
    dir2: &'a Array1<F>,
    v: &'a Array1<F>,
    y: F,
    n_theta: usize,
}

#[derive(Debug, Clone, Copy)]
struct RadialMoments<F> {
    i0: F,
    i1: F,
    i2: F,
}

fn radial_moments<F: Scalar>(lo: F, hi: Option<F>) -> RadialMoments<F> {
    let half = F::cast(0.5);
    let sqrt_half_pi = F::cast(1.2533141373155003); // sqrt(pi/2)
    let inv_sqrt2 = F::cast(std::f64::consts::FRAC_1_SQRT_2);
    let e_lo = (-lo * lo * half).exp();
    match hi {
        Some(h) => {
            let e_hi = (-h * h * half).exp();
            RadialMoments {
                i0: e_lo - e_hi,
                i1: lo * e_lo - h * e_hi
                    + sqrt_half_pi * ((h * inv_sqrt2).erf() - (lo * inv_sqrt2).erf()),
                i2: (lo * lo + F::cast(2.0)) * e_lo - (h * h + F::cast(2.0)) * e_hi,
            }
        }
        None => RadialMoments {
            i0: e_lo,
            i1: lo * e_lo + sqrt_half_pi * (lo * inv_sqrt2).erfc(),
            i2: (lo * lo + F::cast(2.0)) * e_lo,
        },
    }
}

/// Everything a fixed-point residual or readout needs from one cluster.
struct RadialOutput<F: Scalar> {
    tables: ClusterTables<F>,
    pmse: F,
    class_error: F,
}

impl<'a, F: Scalar> RadialRelu<'a, F> {
    fn integrate(&self) -> RadialOutput<F> {
        let k_units = self.mean.len();
        let mut tables = ClusterTables {
            i31: Array1::zeros(k_units),
            eg: Array1::zeros(k_units),
            e22: Array2::zeros((k_units, k_units)),
            egg: Array2::zeros((k_units, k_units)),
            ephi: Array1::zeros(k_units),
            rw_raw: Array2::zeros((k_units, k_units)),
            noise: Array2::zeros((k_units, k_units)),
        };
        let mut pmse = F::zero();
        let mut class_error = F::zero();
        let w_theta = F::one() / F::cast(self.n_theta as f64);
        let two_pi = F::cast(std::f64::consts::TAU);

        let mut coef = vec![F::zero(); k_units];
        let mut cuts: Vec<F> = Vec::with_capacity(k_units + 1);
        let mut active: Vec<usize> = Vec::with_capacity(k_units);

        for it in 0..self.n_theta {
            let theta = two_pi * (F::cast(it as f64) + F::cast(0.5)) * w_theta;
            let (sin_t, cos_t) = theta.sin_cos();
            for k in 0..k_units {
                coef[k] = self.dir1[k] * cos_t + self.dir2[k] * sin_t;
            }
            cuts.clear();
            cuts.push(F::zero());
            for k in 0..k_units {
                if coef[k] != F::zero() {
                    let r = -self.mean[k] / coef[k];
                    if r > F::zero() && r.is_finite() {
                        cuts.push(r);
                    }
                }
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));

            for piece in 0..cuts.len() {
                let lo = cuts[piece];
                let hi = cuts.get(piece + 1).copied();
                let probe = match hi {
                    Some(h) => (lo + h) * F::cast(0.5),
                    None => lo + F::one(),
                };
                active.clear();
                let mut out_const = F::zero();
                let mut out_slope = F::zero();
                for k in 0..k_units {
                    if self.mean[k] + coef[k] * probe > F::zero() {
                        active.push(k);
                        out_const += self.v[k] * self.mean[k];
                        out_slope += self.v[k] * coef[k];
                    }
                }
                let mom = radial_moments(lo, hi);
                let err_const = out_const - self.y;
                let sq = err_const * err_const * mom.i0
                    + F::cast(2.0) * err_const * out_slope * mom.i1
                    + out_slope * out_slope * mom.i2;
                pmse += w_theta * sq;

                // Mass of { y * output < 0 } within the piece.
                let yc = self.y * out_const;
                let ys = self.y * out_slope;
                if ys == F::zero() {
                    if yc < F::zero() {
                        class_error += w_theta * mom.i0;
                    } else if yc == F::zero() {
                        class_error += w_theta * mom.i0 * F::cast(0.5);
                    }
                } else {
                    let root = -yc / ys;
                    let (neg_lo, neg_hi) = if ys > F::zero() {
                        (lo, Some(root))
                    } else {
                        (root, hi)
                    };
                    let neg_lo = neg_lo.max(lo);
                    let clipped_hi = match (neg_hi, hi) {
                        (Some(nh), Some(h)) => Some(nh.min(h)),
                        (Some(nh), None) => Some(nh),
                        (None, h) => h,
                    };
                    let empty = match clipped_hi {
                        Some(h) => h <= neg_lo,
                        None => false,
                    };
                    if !empty {
                        class_error += w_theta * radial_moments(neg_lo, clipped_hi).i0;
                    }
                }

                let err = self.y - out_const; // y - f = err - out_slope r
                for &k in &active {
                    let mk = self.mean[k];
                    let ck = coef[k];
                    tables.i31[k] += w_theta * mom.i0;
                    tables.eg[k] += w_theta * (mk * mom.i0 + ck * mom.i1);
                    tables.ephi[k] += w_theta * (err * mom.i0 - out_slope * mom.i1);
                    // lam_l enters unclipped: run over every unit.
                    for l in 0..k_units {
                        let ml = self.mean[l];
                        let cl = coef[l];
                        tables.rw_raw[[k, l]] += w_theta
                            * (err * ml * mom.i0 + (err * cl - out_slope * ml) * mom.i1
                                - out_slope * cl * mom.i2);
                    }
                    for &j in &active {
                        let mj = self.mean[j];
                        let cj = coef[j];
                        let lin_j = mj * mom.i0 + cj * mom.i1;
                        let cross = mk * mj * mom.i0 + (mk * cj + mj * ck) * mom.i1
                            + ck * cj * mom.i2;
                        tables.e22[[k, j]] += w_theta * lin_j;
                        tables.egg[[k, j]] += w_theta * cross;
                        tables.noise[[k, j]] += w_theta * sq;
                    }
                }
            }
        }
        RadialOutput {
            tables,
            pmse,
            class_error,
        }
    }
}

/// How the residual integrals are evaluated.
#[derive(Debug, Clone, Copy)]
pub enum ResidualBackend {
    /// Closed-form radial integration (ReLU, rank-2); deterministic and
    /// smooth, resolves the fixed point to tight tolerances.
    Analytic { n_theta: usize },
    /// Monte-Carlo with the seed frozen across solver iterations.
    MonteCarlo { n_samples: usize },
}

impl Default for ResidualBackend {
    fn default() -> Self {
        ResidualBackend::Analytic { n_theta: 2048 }
    }
}

/// Solver settings.
#[derive(Debug, Clone)]
pub struct FixedPointConfig<F: Scalar> {
    pub backend: ResidualBackend,
    pub seed: u64,
    /// Residual max-norm target.
    pub tol: F,
    pub max_iter: usize,
}

impl<F: Scalar> Default for FixedPointConfig<F> {
    fn default() -> Self {
        FixedPointConfig {
            backend: ResidualBackend::default(),
            seed: 0,
            tol: F::cast(1e-8),
            max_iter: 200,
        }
    }
}

/// Solved fixed point with its readouts.
#[derive(Debug, Clone)]
pub struct FixedPointResult<F: Scalar> {
    pub ansatz: XorAnsatz<F>,
    pub v: Array1<F>,
    pub residual_norm: F,
    pub pmse: F,
    pub class_error: F,
    pub converged: bool,
    pub iterations: usize,
}

struct XorSystem<F: Scalar> {
    sigma: F,
    kappa: F,
    backend: ResidualBackend,
    seed: u64,
    t_matrix: Array2<F>,
    labels: [F; 4],
    weights: F,
}

impl<F: Scalar> XorSystem<F> {
    fn new(sigma: F, kappa: F, backend: ResidualBackend, seed: u64) -> Self {
        XorSystem {
            sigma,
            kappa,
            backend,
            seed,
            t_matrix: xor_t_matrix(),
            labels: [F::one(), F::one(), -F::one(), -F::one()],
            weights: F::cast(0.25),
        }
    }

    fn cluster_outputs(&self, ansatz: &XorAnsatz<F>, v: &Array1<F>) -> Vec<RadialOutput<F>> {
        let m_full = ansatz.expand_m();
        let a = ansatz.axis_a();
        let b = ansatz.axis_b();
        let sigma = self.sigma;
        let dir1: Array1<F> = a.mapv(|x| x * sigma);
        let dir2: Array1<F> = b.mapv(|x| x * sigma);
        match self.backend {
            ResidualBackend::Analytic { n_theta } => (0..4)
                .map(|alpha| {
                    let mean = m_full.row(alpha).to_owned();
                    RadialRelu {
                        mean: &mean,
                        dir1: &dir1,
                        dir2: &dir2,
                        v,
                        y: self.labels[alpha],
                        n_theta,
                    }
                    .integrate()
                })
                .collect(),
            ResidualBackend::MonteCarlo { n_samples } => {
                let q = ansatz.q_matrix(sigma * sigma);
                let means: Vec<Array1<F>> =
                    (0..4).map(|alpha| m_full.row(alpha).to_owned()).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(7);
                let ens =
                    FieldEnsemble::sample_family(&means, &q, ActivationKind::Relu, n_samples, &mut rng)
                        .expect("XOR ansatz covariance is PSD by construction");
                ens.iter()
                    .enumerate()
                    .map(|(alpha, e)| RadialOutput {
                        tables: e.tables(v, self.labels[alpha]),
                        pmse: e.expected_sq_error(v, self.labels[alpha]),
                        class_error: e.misclass_prob(v, self.labels[alpha]),
                    })
                    .collect()
            }
        }
    }

    /// Drift of the full `4 x K` overlap matrix, divided by the learning
    /// rate (`eta` drops out of the first-order equations).
    fn m_drift(&self, ansatz: &XorAnsatz<F>, v: &Array1<F>) -> Array2<F> {
        let k_units = ansatz.k();
        let m_full = ansatz.expand_m();
        let q = ansatz.q_matrix(self.sigma * self.sigma);
        let q_pinv = QPseudo::new(&q);
        let rho = self.sigma * self.sigma;
        let outputs = self.cluster_outputs(ansatz, v);
        let mut dm = Array2::zeros((4, k_units));
        for alpha in 0..4 {
            let coeff =
                drift_coefficients(&outputs[alpha].tables, m_full.row(alpha), &q_pinv, v);
            for beta in 0..4 {
                let t_ab = self.t_matrix[[alpha, beta]];
                for k in 0..k_units {
                    let mut mix = F::zero();
                    for l in 0..k_units {
                        mix += coeff.b[[k, l]] * m_full[[beta, l]];
                    }
                    dm[[beta, k]] += self.weights
                        * (coeff.a[k] * t_ab + rho * mix - self.kappa * m_full[[beta, k]]);
                }
            }
        }
        dm
    }

    /// Residual restricted to the K free parameters.
    fn residual(&self, x: &Array1<F>) -> Result<Array1<F>> {
        let ansatz = XorAnsatz::new(x.clone())?;
        let v = ansatz.solve_v();
        let dm = self.m_drift(&ansatz, &v);
        let h = x.len() / 2;
        let mut r = Array1::zeros(x.len());
        for i in 0..h {
            r[i] = dm[[0, i]]; // d a_i / dt
            r[i + h] = dm[[2, i]]; // d b_i / dt
        }
        Ok(r)
    }
}

fn max_norm<F: Scalar>(v: &Array1<F>) -> F {
    v.iter().fold(F::zero(), |m, &x| m.max(x.abs()))
}

/// Residual of the K reduced equations at a free-overlap vector; the
/// second layer is slaved to the means-output constraint. Exposed for
/// solver-independent consistency checks.
pub fn xor_reduced_residual<F: Scalar>(
    m_free: &Array1<F>,
    sigma: F,
    kappa: F,
    backend: ResidualBackend,
    seed: u64,
) -> Result<Array1<F>> {
    XorSystem::new(sigma, kappa, backend, seed).residual(m_free)
}

/// Solve the K reduced fixed-point equations for the XOR mixture.
///
/// The equations are root-found by Levenberg-Marquardt on the residual with
/// a finite-difference Jacobian; the slaved-v reduced flow is not a descent
/// direction, so plain fixed-point (Picard) iteration wanders and the
/// least-squares globalization is what makes the solve robust. Without an
/// explicit initial ansatz, several seeded starting geometries and scales
/// are tried and the converged root with the lowest pmse is returned (the
/// equations also admit "dead-cluster" fixed points, which are genuine but
/// not the long-time attractor the sweeps track). On failure the best
/// residual is returned with `converged = false`.
pub fn solve_xor_fixed_point<F: Scalar>(
    k: usize,
    sigma: F,
    _eta: F,
    kappa: F,
    cfg: &FixedPointConfig<F>,
    init: Option<XorAnsatz<F>>,
) -> Result<FixedPointResult<F>> {
    if k < 4 || k % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "XOR fixed point needs even K >= 4, got {k}"
        )));
    }
    if !(sigma > F::zero()) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let system = XorSystem::new(sigma, kappa, cfg.backend, cfg.seed);

    let starts: Vec<Array1<F>> = match init {
        Some(a) => {
            if a.k() != k {
                return Err(Error::InvalidDimension(
                    "initial ansatz size does not match K".into(),
                ));
            }
            vec![a.m_free]
        }
        None => default_inits(k, kappa, cfg.seed),
    };

    let mut best: Option<FixedPointResult<F>> = None;
    for x0 in starts {
        let (x, r_norm, iterations) = levenberg_marquardt(&system, x0, cfg)?;
        let ansatz = XorAnsatz::new(x)?;
        let v = ansatz.solve_v();
        let outputs = system.cluster_outputs(&ansatz, &v);
        let quarter = F::cast(0.25);
        let candidate = FixedPointResult {
            pmse: outputs.iter().map(|o| o.pmse).sum::<F>() * quarter,
            class_error: outputs.iter().map(|o| o.class_error).sum::<F>() * quarter,
            ansatz,
            v,
            residual_norm: r_norm,
            converged: r_norm <= cfg.tol,
            iterations,
        };
        let better = match &best {
            None => true,
            Some(b) => match (candidate.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => candidate.pmse < b.pmse,
                (false, false) => candidate.residual_norm < b.residual_norm,
            },
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one start"))
}

fn levenberg_marquardt<F: Scalar>(
    system: &XorSystem<F>,
    mut x: Array1<F>,
    cfg: &FixedPointConfig<F>,
) -> Result<(Array1<F>, F, usize)> {
    let n = x.len();
    let mut r = system.residual(&x)?;
    let mut r_norm = max_norm(&r);
    let mut lambda = F::cast(1e-3);
    let mut iterations = 0usize;

    while r_norm > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let jac = fd_jacobian(system, &x, &r)?;
        let jtj = jac.t().dot(&jac);
        let jtr = jac.t().dot(&r);
        let mut improved = false;
        for _ in 0..25 {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[[i, i]] += lambda * jtj[[i, i]].max(F::cast(1e-12));
            }
            let rhs = jtr.mapv(|v| -v);
            let dx = match solve_dense(&lhs, &rhs) {
                Ok(dx) => dx,
                Err(_) => {
                    lambda *= F::cast(10.0);
                    continue;
                }
            };
            let trial: Array1<F> = &x + &dx;
            let r_trial = system.residual(&trial)?;
            let n_trial = max_norm(&r_trial);
            if n_trial < r_norm {
                x = trial;
                r = r_trial;
                r_norm = n_trial;
                lambda = (lambda / F::cast(3.0)).max(F::cast(1e-14));
                improved = true;
                break;
            }
            lambda *= F::cast(4.0);
            if lambda > F::cast(1e14) {
                break;
            }
        }
        if !improved {
            break; // stationary point of the least-squares merit
        }
    }
    Ok((x, r_norm, iterations))
}

/// Starting geometries: oracle-like (neurons on the mean axes with a small
/// opposite-sign cross overlap) at a few overall scales, plus seeded jitter.
/// The scale family matters because weight decay pins the fixed-point norm
/// at roughly `1/sqrt(kappa)`.
fn default_inits<F: Scalar>(k: usize, kappa: F, seed: u64) -> Vec<Array1<F>> {
    let h = k / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let kappa_scale = if kappa > F::zero() {
        (F::one() / kappa.sqrt()).min(F::cast(100.0)).max(F::one())
    } else {
        F::cast(10.0)
    };
    let mut inits = Vec::new();
    for scale in [F::one(), kappa_scale, F::cast(4.0)] {
        for jitter in [F::zero(), F::cast(0.08)] {
            let mut x = Array1::zeros(k);
            for i in 0..h {
                let sign = if i % 2 == 0 { F::one() } else { -F::one() };
                let ja = jitter * F::standard_normal(&mut rng);
                let jb = jitter * F::standard_normal(&mut rng);
                x[i] = scale * (sign * (F::one() + F::cast(0.1 * (i / 2) as f64)) + ja);
                x[i + h] = scale * (-sign * F::cast(0.25) + jb);
            }
            inits.push(x);
        }
    }
    inits
}

fn fd_jacobian<F: Scalar>(
    system: &XorSystem<F>,
    x: &Array1<F>,
    r0: &Array1<F>,
) -> Result<Array2<F>> {
    let n = x.len();
    let mut jac = Array2::zeros((n, n));
    for j in 0..n {
        let h = F::cast(1e-6) * x[j].abs().max(F::one());
        let mut xp = x.clone();
        xp[j] += h;
        let rp = system.residual(&xp)?;
        for i in 0..n {
            jac[[i, j]] = (rp[i] - r0[i]) / h;
        }
    }
    Ok(jac)
}

/// Full single-bin residuals (`dm/eta`, `dq/eta`) of the unreduced equations
/// of motion evaluated at an ansatz: all `4K` overlap equations and the
/// `K(K+1)/2` symmetric `q` equations (the `eta^2` SGD-noise term enters the
/// latter through `eta`).
pub fn xor_full_residuals<F: Scalar>(
    ansatz: &XorAnsatz<F>,
    v: &Array1<F>,
    sigma: F,
    eta: F,
    kappa: F,
    backend: ResidualBackend,
    seed: u64,
) -> (Array2<F>, Array2<F>) {
    let system = XorSystem::new(sigma, kappa, backend, seed);
    let k_units = ansatz.k();
    let m_full = ansatz.expand_m();
    let sigma2 = sigma * sigma;
    let q = ansatz.q_matrix(sigma2);
    let outputs = system.cluster_outputs(ansatz, v);

    let dm = system.m_drift(ansatz, v);
    let mut dq = Array2::zeros((k_units, k_units));
    let quarter = F::cast(0.25);
    let q_pinv = QPseudo::new(&q);
    // Single-atom density q(rho) = Q / rho.
    let q_density = q.mapv(|val| val / sigma2);
    for alpha in 0..4 {
        let coeff = drift_coefficients(&outputs[alpha].tables, m_full.row(alpha), &q_pinv, v);
        for k in 0..k_units {
            for l in k..k_units {
                let mut drift = coeff.a[k] * m_full[[alpha, l]]
                    + coeff.a[l] * m_full[[alpha, k]]
                    - F::cast(2.0) * kappa * q_density[[k, l]];
                let mut mix = F::zero();
                for lp in 0..k_units {
                    mix += coeff.b[[k, lp]] * q_density[[lp, l]]
                        + coeff.b[[l, lp]] * q_density[[lp, k]];
                }
                drift += sigma2 * mix;
                drift += eta * sigma2 * v[k] * v[l] * outputs[alpha].tables.noise[[k, l]];
                dq[[k, l]] += quarter * drift;
            }
        }
    }
    for k in 0..k_units {
        for l in (k + 1)..k_units {
            dq[[l, k]] = dq[[k, l]];
        }
    }
    (dm, dq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn oracle_error_reference_values() {
        // (1, 0.5) -> (1 - erf(1)^2) / 2, high-precision erf evaluation.
        let e: f64 = oracle_error(1.0, 0.5).unwrap();
        assert!((e - 0.14492768678096089).abs() < 1e-15);
    }

    #[test]
    fn oracle_error_limits() {
        let e_inf: f64 = oracle_error(1.0, 1e9).unwrap();
        assert!((e_inf - 0.5).abs() < 1e-8);
        let e_sharp: f64 = oracle_error(1.0, 0.05).unwrap();
        assert!(e_sharp < 1e-40);
        assert_eq!(oracle_error(1.0, 0.0).unwrap(), 0.0);
        assert!(oracle_error(1.0, -0.1).is_err());
        assert!(oracle_error(0.0, 0.0).is_err());
    }

    #[test]
    fn ansatz_constraints_hold_by_construction() {
        let ansatz = XorAnsatz::<f64>::new(array![0.9, -1.1, -0.2, 0.3]).unwrap();
        let m = ansatz.expand_m();
        for k in 0..4 {
            assert_eq!(m[[1, k]], -m[[0, k]]);
            assert_eq!(m[[3, k]], -m[[2, k]]);
        }
        // Q relation: sigma^2 (M_{+0} M_{+0}^T + M_{-0} M_{-0}^T).
        let sigma2 = 0.1f64;
        let q = ansatz.q_matrix(sigma2);
        for i in 0..4 {
            for j in 0..4 {
                let expect = sigma2 * (m[[0, i]] * m[[0, j]] + m[[2, i]] * m[[2, j]]);
                assert!((q[[i, j]] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn v_constraint_reproduces_labels_on_means() {
        let ansatz = XorAnsatz::new(array![1.0, -1.0, -0.3, 0.3]).unwrap();
        let v = ansatz.solve_v();
        let m = ansatz.expand_m();
        let g = m.mapv(|x: f64| ActivationKind::Relu.g(x));
        let out = g.dot(&v);
        let y = [1.0, 1.0, -1.0, -1.0];
        for a in 0..4 {
            assert!((out[a] - y[a]).abs() < 1e-10, "cluster {a}: {}", out[a]);
        }
    }

    #[test]
    fn radial_engine_matches_monte_carlo_tables() {
        let ansatz = XorAnsatz::<f64>::new(array![1.1, -0.9, -0.35, 0.3]).unwrap();
        let v = ansatz.solve_v();
        let sigma = 0.4;
        let analytic = XorSystem::new(sigma, 0.0, ResidualBackend::Analytic { n_theta: 4096 }, 0);
        let mc = XorSystem::new(
            sigma,
            0.0,
            ResidualBackend::MonteCarlo {
                n_samples: 2_000_000,
            },
            3,
        );
        let oa = analytic.cluster_outputs(&ansatz, &v);
        let om = mc.cluster_outputs(&ansatz, &v);
        for alpha in 0..4 {
            assert!((oa[alpha].pmse - om[alpha].pmse).abs() < 5e-3);
            assert!((oa[alpha].class_error - om[alpha].class_error).abs() < 2e-3);
            for k in 0..4 {
                assert!(
                    (oa[alpha].tables.i31[k] - om[alpha].tables.i31[k]).abs() < 3e-3,
                    "i31 cluster {alpha} unit {k}"
                );
                assert!((oa[alpha].tables.ephi[k] - om[alpha].tables.ephi[k]).abs() < 5e-3);
                for j in 0..4 {
                    assert!(
                        (oa[alpha].tables.e22[[k, j]] - om[alpha].tables.e22[[k, j]]).abs() < 3e-3
                    );
                    assert!(
                        (oa[alpha].tables.rw_raw[[k, j]] - om[alpha].tables.rw_raw[[k, j]]).abs()
                            < 8e-3
                    );
                    assert!(
                        (oa[alpha].tables.noise[[k, j]] - om[alpha].tables.noise[[k, j]]).abs()
                            < 8e-3
                    );
                }
            }
        }
    }

    #[test]
    fn solver_converges_and_is_consistent() {
        let cfg = FixedPointConfig::<f64>::default();
        let res = solve_xor_fixed_point(4, 0.1f64.sqrt(), 0.1, 1e-3, &cfg, None).unwrap();
        assert!(res.converged, "residual {}", res.residual_norm);
        assert!(res.residual_norm <= 1e-8);
        assert!(res.pmse > 0.0 && res.pmse < 0.5, "pmse {}", res.pmse);
        assert!(res.class_error < 0.2, "eps {}", res.class_error);
    }

    #[test]
    fn cluster_sign_symmetry_of_solutions() {
        // Swapping the roles of the two free axes gives an equivalent fixed
        // point with identical pmse.
        let cfg = FixedPointConfig::<f64>::default();
        let res = solve_xor_fixed_point(4, 0.35, 0.1, 1e-3, &cfg, None).unwrap();
        let h = 2;
        let mut swapped = res.ansatz.m_free.clone();
        for i in 0..h {
            swapped.swap(i, i + h);
        }
        let mirrored = solve_xor_fixed_point(
            4,
            0.35,
            0.1,
            1e-3,
            &cfg,
            Some(XorAnsatz::new(swapped).unwrap()),
        )
        .unwrap();
        assert!(mirrored.converged);
        assert!((mirrored.pmse - res.pmse).abs() < 1e-6);
        assert!((mirrored.class_error - res.class_error).abs() < 1e-6);
    }

    #[test]
    fn noiseless_limit_reaches_zero_error() {
        let cfg = FixedPointConfig::<f64>::default();
        let res = solve_xor_fixed_point(4, 0.02, 0.1, 0.0, &cfg, None).unwrap();
        assert!(res.converged, "residual {}", res.residual_norm);
        assert!(res.class_error < 1e-6, "eps {}", res.class_error);
    }

    #[test]
    fn readout_matches_state_expansion() {
        // pmse / class error from the radial engine agree with the
        // dynamics_ode readouts on the expanded state.
        use crate::dynamics_ode::{class_error_from_state, pmse_from_state, OdeConfig};
        use crate::mixture::build_xor_mixture;
        let cfg = FixedPointConfig::<f64>::default();
        let sigma = 0.3f64;
        let res = solve_xor_fixed_point(4, sigma, 0.1, 1e-3, &cfg, None).unwrap();
        let state = res.ansatz.to_state(sigma, &res.v);
        let d = 512;
        let spec = build_xor_mixture(d, (d as f64).sqrt(), sigma * sigma).unwrap();
        let ode_cfg = OdeConfig::new(0.1, 1e-3, ActivationKind::Relu, 5).with_mc_samples(400_000);
        let pmse = pmse_from_state(&state, &spec, &ode_cfg).unwrap();
        let eps = class_error_from_state(&state, &spec, &ode_cfg).unwrap();
        assert!((pmse - res.pmse).abs() < 5e-3, "{pmse} vs {}", res.pmse);
        assert!((eps - res.class_error).abs() < 3e-3, "{eps} vs {}", res.class_error);
    }
}
