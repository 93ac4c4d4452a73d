//! Order-parameter equations of motion for a two-layer network trained by
//! online SGD on a shared-covariance Gaussian mixture.
//!
//! The state tracks the spectral densities `m[alpha][k](rho)` and
//! `q[k][l](rho)` on an eigenvalue grid of the input covariance, the second
//! layer `v`, and the constants of motion `T[alpha][beta]` and `chi`. One
//! Euler step assembles, for every cluster, the drift of the densities from
//! Monte-Carlo estimates of the activation integrals; the per-cluster
//! Gaussians share the local-field covariance `Q` (shared input covariance),
//! so a single standard-normal block drives all clusters in a step.

use crate::error::{Error, Result};
use crate::mixture::MixtureSpec;
use crate::moments::{ActivationKind, ClusterTables, FieldEnsemble};
use crate::scalar::Scalar;
use crate::trajectory::{ErrorTrace, ParamSummary};
use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const MASS_SUM_TOL: f64 = 1e-10;

/// Binned spectral density of the input covariance.
#[derive(Debug, Clone)]
pub struct SpectrumGrid<F: Scalar> {
    eigenvalues: Array1<F>,
    masses: Array1<F>,
}

impl<F: Scalar> SpectrumGrid<F> {
    pub fn new(eigenvalues: Array1<F>, masses: Array1<F>) -> Result<Self> {
        if eigenvalues.len() != masses.len() || eigenvalues.is_empty() {
            return Err(Error::InvalidDimension(
                "spectrum grid needs matching, nonempty eigenvalue/mass lists".into(),
            ));
        }
        if masses.iter().any(|&m| m < F::zero()) {
            return Err(Error::Domain("spectrum masses must be nonnegative".into()));
        }
        let sum = masses.sum().to_f64_lossy();
        let tol = MASS_SUM_TOL.max(8.0 * F::epsilon().to_f64_lossy() * masses.len() as f64);
        if (sum - 1.0).abs() > tol {
            return Err(Error::Domain(format!(
                "spectrum masses sum to {sum}, expected 1 within {tol:e}"
            )));
        }
        Ok(SpectrumGrid {
            eigenvalues,
            masses,
        })
    }

    /// Isotropic covariance collapses to a single atom at `sigma2`.
    pub fn single_atom(sigma2: F) -> Self {
        SpectrumGrid {
            eigenvalues: Array1::from_elem(1, sigma2),
            masses: Array1::from_elem(1, F::one()),
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &Array1<F> {
        &self.eigenvalues
    }

    pub fn masses(&self) -> &Array1<F> {
        &self.masses
    }
}

/// Equal-mass binning of a descending eigenvalue list; returns the grid and
/// the index ranges backing each bin.
fn bin_eigenvalues<F: Scalar>(
    evs: ArrayView1<F>,
    n_bins: usize,
) -> (SpectrumGrid<F>, Vec<std::ops::Range<usize>>) {
    let d = evs.len();
    let n_bins = n_bins.clamp(1, d);
    let mut ranges = Vec::with_capacity(n_bins);
    let mut eigenvalues = Array1::zeros(n_bins);
    let mut masses = Array1::zeros(n_bins);
    let base = d / n_bins;
    let extra = d % n_bins;
    let mut start = 0;
    for b in 0..n_bins {
        let len = base + usize::from(b < extra);
        let range = start..start + len;
        let mut mean = F::zero();
        for i in range.clone() {
            mean += evs[i];
        }
        eigenvalues[b] = mean / F::cast(len as f64);
        masses[b] = F::cast(len as f64 / d as f64);
        ranges.push(range);
        start += len;
    }
    (
        SpectrumGrid {
            eigenvalues,
            masses,
        },
        ranges,
    )
}

/// Order-parameter state of the ODE system.
#[derive(Debug, Clone)]
pub struct OrderParameterState<F: Scalar> {
    /// `m[alpha][k][bin]`
    pub m: Array3<F>,
    /// `q[k][l][bin]`, symmetric in `(k, l)` at every bin
    pub q: Array3<F>,
    /// Second-layer weights.
    pub v: Array1<F>,
    /// Mean-overlap constants `T[alpha][beta]` (constant of motion).
    pub t_matrix: Array2<F>,
    /// Second spectral moment of the covariance (constant of motion).
    pub chi: F,
    /// Training time `t = N / D`.
    pub time: F,
    pub grid: SpectrumGrid<F>,
}

impl<F: Scalar> OrderParameterState<F> {
    pub fn k(&self) -> usize {
        self.v.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.m.dim().0
    }

    pub fn n_bins(&self) -> usize {
        self.grid.len()
    }

    /// `M[alpha][k] = sum_b mass_b m[alpha][k](rho_b)`.
    pub fn m_integrated(&self) -> Array2<F> {
        let (n_clusters, k_units, n_bins) = self.m.dim();
        let mut out = Array2::zeros((n_clusters, k_units));
        for a in 0..n_clusters {
            for k in 0..k_units {
                let mut acc = F::zero();
                for b in 0..n_bins {
                    acc += self.grid.masses[b] * self.m[[a, k, b]];
                }
                out[[a, k]] = acc;
            }
        }
        out
    }

    /// `Q[k][l] = sum_b mass_b rho_b q[k][l](rho_b)`.
    pub fn q_integrated(&self) -> Array2<F> {
        let (k_units, _, n_bins) = self.q.dim();
        let mut out = Array2::zeros((k_units, k_units));
        for k in 0..k_units {
            for l in k..k_units {
                let mut acc = F::zero();
                for b in 0..n_bins {
                    acc += self.grid.masses[b] * self.grid.eigenvalues[b] * self.q[[k, l, b]];
                }
                out[[k, l]] = acc;
                out[[l, k]] = acc;
            }
        }
        out
    }

    /// Exact order parameters of microscopic weights `w` (`K x D`) and `v`
    /// under the mixture's covariance, binned on `n_bins` spectral bins.
    pub fn from_microscopic(
        w: &Array2<F>,
        v: &Array1<F>,
        spec: &MixtureSpec<F>,
        n_bins: usize,
    ) -> Result<Self> {
        let d = spec.dim();
        let k_units = w.nrows();
        if w.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "weights have {} columns, mixture dim is {d}",
                w.ncols()
            )));
        }
        if v.len() != k_units {
            return Err(Error::InvalidDimension(
                "second-layer length must match first-layer rows".into(),
            ));
        }
        let n_clusters = spec.n_clusters();
        let t_matrix = spec.mean_overlap_matrix();
        let chi = spec.spectral_second_moment();
        let inv_d = F::one() / F::cast(d as f64);

        let (grid, m, q) = if let Some(sigma2) = spec.isotropic_sigma2() {
            let grid = SpectrumGrid::single_atom(sigma2);
            let mut m = Array3::zeros((n_clusters, k_units, 1));
            for (a, c) in spec.clusters().iter().enumerate() {
                for k in 0..k_units {
                    m[[a, k, 0]] = w.row(k).dot(&c.mean_scaled) * inv_d;
                }
            }
            let mut q = Array3::zeros((k_units, k_units, 1));
            for k in 0..k_units {
                for l in k..k_units {
                    let val = w.row(k).dot(&w.row(l)) * inv_d;
                    q[[k, l, 0]] = val;
                    q[[l, k, 0]] = val;
                }
            }
            (grid, m, q)
        } else {
            let decomp = spec.spectral();
            let basis = decomp
                .basis
                .as_ref()
                .expect("non-isotropic covariance has a basis");
            let (grid, ranges) = bin_eigenvalues(decomp.eigenvalues.view(), n_bins);
            let w_tilde = w.dot(basis); // (K, D) in eigen-coordinates
            let mut mu_tilde = Array2::zeros((n_clusters, d));
            for (a, c) in spec.clusters().iter().enumerate() {
                mu_tilde.row_mut(a).assign(&basis.t().dot(&c.mean_scaled));
            }
            let n_b = grid.len();
            let mut m = Array3::zeros((n_clusters, k_units, n_b));
            let mut q = Array3::zeros((k_units, k_units, n_b));
            for (b, range) in ranges.iter().enumerate() {
                let inv_len = F::one() / F::cast(range.len() as f64);
                for a in 0..n_clusters {
                    for k in 0..k_units {
                        let mut acc = F::zero();
                        for tau in range.clone() {
                            acc += w_tilde[[k, tau]] * mu_tilde[[a, tau]];
                        }
                        m[[a, k, b]] = acc * inv_len;
                    }
                }
                for k in 0..k_units {
                    for l in k..k_units {
                        let mut acc = F::zero();
                        for tau in range.clone() {
                            acc += w_tilde[[k, tau]] * w_tilde[[l, tau]];
                        }
                        let val = acc * inv_len;
                        q[[k, l, b]] = val;
                        q[[l, k, b]] = val;
                    }
                }
            }
            (grid, m, q)
        };

        Ok(OrderParameterState {
            m,
            q,
            v: v.clone(),
            t_matrix,
            chi,
            time: F::zero(),
            grid,
        })
    }
}

/// Integration settings for the equations of motion.
#[derive(Debug, Clone)]
pub struct OdeConfig<F: Scalar> {
    pub lr: F,
    pub weight_decay: F,
    pub activation: ActivationKind,
    /// Euler step in units of `t = N / D`.
    pub dt: F,
    pub mc_samples: usize,
    pub seed: u64,
}

impl<F: Scalar> OdeConfig<F> {
    pub fn new(lr: F, weight_decay: F, activation: ActivationKind, seed: u64) -> Self {
        OdeConfig {
            lr,
            weight_decay,
            activation,
            dt: F::cast(0.05),
            mc_samples: 10_000,
            seed,
        }
    }

    pub fn with_dt(mut self, dt: F) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_mc_samples(mut self, n: usize) -> Self {
        self.mc_samples = n;
        self
    }
}

/// Weak-recovery initialization: draw microscopic weights
/// `W ~ N(0, sigma0^2)` (then `v ~ N(0, sigma0^2)`) at the mixture's
/// dimension and compute the order parameters exactly from them, so the
/// state carries the O(1/sqrt(D)) finite-size overlaps that seed learning.
pub fn init_state<F: Scalar>(
    spec: &MixtureSpec<F>,
    k: usize,
    sigma0: F,
    seed: u64,
) -> Result<OrderParameterState<F>> {
    if k == 0 {
        return Err(Error::InvalidDimension("need at least one hidden unit".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let mut w = Array2::zeros((k, d));
    for x in w.iter_mut() {
        *x = sigma0 * F::standard_normal(&mut rng);
    }
    let mut v = Array1::zeros(k);
    for x in v.iter_mut() {
        *x = sigma0 * F::standard_normal(&mut rng);
    }
    OrderParameterState::from_microscopic(&w, &v, spec, default_bins(d))
}

/// Default spectral resolution: one atom for isotropic covariances is chosen
/// automatically; dense spectra get an equal-mass histogram.
pub fn default_bins(d: usize) -> usize {
    100.min(d)
}

/// Per-neuron drift coefficients of one cluster's contribution:
/// `d w_tilde^k = (eta / D) (A[k] mu_tilde + rho sum_l B[k][l] w_tilde^l - kappa w_tilde^k)`.
pub(crate) struct DriftCoefficients<F: Scalar> {
    pub a: Array1<F>,
    pub b: Array2<F>,
}

/// Pseudo-inverse of the local-field covariance `Q`, used to turn the
/// weighted expectations `E[(lam - M) g'_k (y - s)]` into drift
/// coefficients (Gaussian integration by parts over all K fields at once).
///
/// Directions in the numerical null space of `Q` correspond to vanishing
/// weight combinations, which contribute nothing to any order-parameter
/// density, so dropping them below the cutoff is exact rather than an
/// approximation. This formulation stays stable when student neurons align
/// and pairwise 2x2 blocks of `Q` become singular.
pub(crate) struct QPseudo<F: Scalar> {
    vals: Array1<F>,
    vecs: Array2<F>,
    cutoff: F,
}

impl<F: Scalar> QPseudo<F> {
    pub fn new(q: &Array2<F>) -> Self {
        let (vals, vecs) = crate::linalg::sym_eigen(q);
        let max = vals.iter().fold(F::zero(), |m, &x| m.max(x));
        QPseudo {
            vals,
            vecs,
            cutoff: F::cast(1e-12) * max.max(F::cast(1e-300)),
        }
    }

    fn apply(&self, x: &Array1<F>) -> Array1<F> {
        let n = x.len();
        let mut out = Array1::zeros(n);
        for c in 0..n {
            if self.vals[c] <= self.cutoff {
                continue;
            }
            let col = self.vecs.column(c);
            let proj = col.dot(x) / self.vals[c];
            for i in 0..n {
                out[i] += self.vecs[[i, c]] * proj;
            }
        }
        out
    }
}

/// Assemble the drift coefficients from the integral tables of one cluster:
/// `A[k] = v_k E[g'_k (y - s)]` and
/// `B[k][.] = v_k Q^+ E[(lam - M_alpha) g'_k (y - s)]`.
pub(crate) fn drift_coefficients<F: Scalar>(
    tables: &ClusterTables<F>,
    m_alpha: ArrayView1<F>,
    q_pinv: &QPseudo<F>,
    v: &Array1<F>,
) -> DriftCoefficients<F> {
    let k_units = v.len();
    let mut a = Array1::zeros(k_units);
    let mut b = Array2::zeros((k_units, k_units));
    for k in 0..k_units {
        a[k] = v[k] * tables.ephi[k];
        let centered: Array1<F> =
            Array1::from_iter((0..k_units).map(|l| {
                tables.rw_raw[[k, l]] - tables.ephi[k] * m_alpha[l]
            }));
        let coeff = q_pinv.apply(&centered);
        for l in 0..k_units {
            b[[k, l]] = v[k] * coeff[l];
        }
    }
    DriftCoefficients { a, b }
}

/// Right-hand side of the equations of motion at `state`.
#[derive(Debug, Clone)]
pub struct OdeRhs<F: Scalar> {
    pub dm: Array3<F>,
    pub dq: Array3<F>,
    pub dv: Array1<F>,
}

impl<F: Scalar> OdeRhs<F> {
    /// Max-norm across all components, divided by the learning rate; a
    /// fixed-point diagnostic that stays meaningful as `eta` shrinks.
    pub fn residual_norm(&self, lr: F) -> F {
        let mut m = F::zero();
        for x in self.dm.iter().chain(self.dq.iter()).chain(self.dv.iter()) {
            m = m.max(x.abs());
        }
        m / lr
    }
}

/// Evaluate the equations of motion once. The integral estimates use
/// `cfg.mc_samples` Monte-Carlo samples drawn from `rng`, shared across
/// clusters within the call.
pub fn eom_rhs<F: Scalar>(
    state: &OrderParameterState<F>,
    spec: &MixtureSpec<F>,
    cfg: &OdeConfig<F>,
    rng: &mut impl Rng,
) -> Result<OdeRhs<F>> {
    let k_units = state.k();
    let n_clusters = spec.n_clusters();
    let n_bins = state.n_bins();
    if state.n_clusters() != n_clusters {
        return Err(Error::InvalidDimension(
            "state clusters do not match mixture".into(),
        ));
    }

    let big_m = state.m_integrated();
    let big_q = state.q_integrated();
    let means: Vec<Array1<F>> = (0..n_clusters).map(|a| big_m.row(a).to_owned()).collect();
    let ensembles = FieldEnsemble::sample_family(
        &means,
        &big_q,
        cfg.activation,
        cfg.mc_samples,
        rng,
    )
    .map_err(|e| match e {
        Error::NotPsd(what) => Error::Diverged {
            step: (state.time / cfg.dt).to_f64_lossy().round() as usize,
            what: format!("reconstructed Q lost positivity: {what}"),
        },
        other => other,
    })?;

    let labels = spec.labels();
    let weights = spec.weights();
    let q_pinv = QPseudo::new(&big_q);

    let per_cluster: Vec<(ClusterTables<F>, DriftCoefficients<F>)> = ensembles
        .par_iter()
        .enumerate()
        .map(|(a, ens)| {
            let tables = ens.tables(&state.v, labels[a]);
            let coeff = drift_coefficients(&tables, big_m.row(a), &q_pinv, &state.v);
            (tables, coeff)
        })
        .collect();

    let eta = cfg.lr;
    let kappa = cfg.weight_decay;
    let mut dm = Array3::zeros((n_clusters, k_units, n_bins));
    let mut dq = Array3::zeros((k_units, k_units, n_bins));
    let mut dv = Array1::zeros(k_units);

    for alpha in 0..n_clusters {
        let (tables, coeff) = &per_cluster[alpha];
        let w_a = weights[alpha];
        let y_a = labels[alpha];

        for k in 0..k_units {
            let mut readout = F::zero();
            for j in 0..k_units {
                readout += state.v[j] * tables.egg[[k, j]];
            }
            dv[k] += w_a * eta * (y_a * tables.eg[k] - readout - kappa * state.v[k]);
        }

        for b in 0..n_bins {
            let rho = state.grid.eigenvalues[b];
            for beta in 0..n_clusters {
                let t_ab = state.t_matrix[[alpha, beta]];
                for k in 0..k_units {
                    let mut mix = F::zero();
                    for l in 0..k_units {
                        mix += coeff.b[[k, l]] * state.m[[beta, l, b]];
                    }
                    dm[[beta, k, b]] +=
                        w_a * eta * (coeff.a[k] * t_ab + rho * mix - kappa * state.m[[beta, k, b]]);
                }
            }
            for k in 0..k_units {
                for l in k..k_units {
                    let mut drift = coeff.a[k] * state.m[[alpha, l, b]]
                        + coeff.a[l] * state.m[[alpha, k, b]]
                        - F::cast(2.0) * kappa * state.q[[k, l, b]];
                    let mut mix = F::zero();
                    for lp in 0..k_units {
                        mix += coeff.b[[k, lp]] * state.q[[lp, l, b]]
                            + coeff.b[[l, lp]] * state.q[[lp, k, b]];
                    }
                    drift += rho * mix;
                    // SGD noise: eta^2 rho v^k v^l E[g'_k g'_l Delta^2] at the
                    // density level; its rho-weighted integral carries chi.
                    drift += eta * rho * state.v[k] * state.v[l] * tables.noise[[k, l]];
                    dq[[k, l, b]] += w_a * eta * drift;
                }
            }
        }
    }
    for b in 0..n_bins {
        for k in 0..k_units {
            for l in (k + 1)..k_units {
                dq[[l, k, b]] = dq[[k, l, b]];
            }
        }
    }
    Ok(OdeRhs { dm, dq, dv })
}

/// One explicit Euler step of size `cfg.dt`.
pub fn eom_step<F: Scalar>(
    state: &OrderParameterState<F>,
    spec: &MixtureSpec<F>,
    cfg: &OdeConfig<F>,
    rng: &mut impl Rng,
) -> Result<OrderParameterState<F>> {
    let rhs = eom_rhs(state, spec, cfg, rng)?;
    let mut next = state.clone();
    next.m.scaled_add(cfg.dt, &rhs.dm);
    next.q.scaled_add(cfg.dt, &rhs.dq);
    next.v.scaled_add(cfg.dt, &rhs.dv);
    next.time += cfg.dt;
    if next.m.iter().any(|x| !x.is_finite())
        || next.q.iter().any(|x| !x.is_finite())
        || next.v.iter().any(|x| !x.is_finite())
    {
        return Err(Error::Diverged {
            step: (next.time / cfg.dt).to_f64_lossy().round() as usize,
            what: "non-finite order parameter".into(),
        });
    }
    Ok(next)
}

fn readout_ensembles<F: Scalar>(
    state: &OrderParameterState<F>,
    spec: &MixtureSpec<F>,
    activation: ActivationKind,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<Vec<FieldEnsemble<F>>> {
    let big_m = state.m_integrated();
    let big_q = state.q_integrated();
    let means: Vec<Array1<F>> = (0..spec.n_clusters())
        .map(|a| big_m.row(a).to_owned())
        .collect();
    FieldEnsemble::sample_family(&means, &big_q, activation, n_samples, rng)
}

/// Population MSE of the state: cluster-weighted `E[(sum_k v_k g_k - y)^2]`
/// over the local-field Gaussians. Deterministic given `cfg.seed`.
pub fn pmse_from_state<F: Scalar>(
    state: &OrderParameterState<F>,
    spec: &MixtureSpec<F>,
    cfg: &OdeConfig<F>,
) -> Result<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let ens = readout_ensembles(state, spec, cfg.activation, cfg.mc_samples, &mut rng)?;
    let weights = spec.weights();
    let labels = spec.labels();
    let mut acc = F::zero();
    for a in 0..spec.n_clusters() {
        acc += weights[a] * ens[a].expected_sq_error(&state.v, labels[a]);
    }
    Ok(acc)
}

/// Classification error of the state, `sign(0)` counted as half an error.
pub fn class_error_from_state<F: Scalar>(
    state: &OrderParameterState<F>,
    spec: &MixtureSpec<F>,
    cfg: &OdeConfig<F>,
) -> Result<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let ens = readout_ensembles(state, spec, cfg.activation, cfg.mc_samples, &mut rng)?;
    let weights = spec.weights();
    let labels = spec.labels();
    let mut acc = F::zero();
    for a in 0..spec.n_clusters() {
        acc += weights[a] * ens[a].misclass_prob(&state.v, labels[a]);
    }
    Ok(acc)
}

/// What to record along a trajectory.
#[derive(Debug, Clone)]
pub struct ObserveSpec<F: Scalar> {
    /// Observation times; values outside `(state.t, t_max]` are clamped.
    pub times: Vec<F>,
    /// Monte-Carlo samples per error readout.
    pub eval_samples: usize,
    /// Keep full state snapshots at observation times.
    pub keep_snapshots: bool,
}

impl<F: Scalar> ObserveSpec<F> {
    /// `n` log-spaced observation times in `[t_min, t_max]`.
    pub fn log_spaced(t_min: F, t_max: F, n: usize, eval_samples: usize) -> Self {
        let mut times = Vec::with_capacity(n);
        let (a, b) = (t_min.to_f64_lossy().max(1e-3), t_max.to_f64_lossy());
        for i in 0..n {
            let f = i as f64 / (n.max(2) - 1) as f64;
            times.push(F::cast(a * (b / a).powf(f)));
        }
        ObserveSpec {
            times,
            eval_samples,
            keep_snapshots: false,
        }
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }
}

/// Trajectory of the integrated equations.
#[derive(Debug, Clone)]
pub struct OdeTrajectory<F: Scalar> {
    pub trace: ErrorTrace<F>,
    pub snapshots: Vec<(F, OrderParameterState<F>)>,
}

/// Integrate from `state` to `t_max` with Euler steps of `cfg.dt`, recording
/// errors (and optionally snapshots) at the requested times. Returns the
/// trajectory and the final state.
pub fn integrate<F: Scalar>(
    state: &OrderParameterState<F>,
    spec: &MixtureSpec<F>,
    cfg: &OdeConfig<F>,
    t_max: F,
    observe: &ObserveSpec<F>,
) -> Result<(OdeTrajectory<F>, OrderParameterState<F>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let mut times: Vec<F> = observe
        .times
        .iter()
        .cloned()
        .filter(|&t| t >= state.time && t <= t_max + cfg.dt / F::cast(2.0))
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();

    let mut trajectory = OdeTrajectory {
        trace: ErrorTrace::new(),
        snapshots: Vec::new(),
    };
    let mut current = state.clone();
    let mut next_obs = times.into_iter().peekable();
    let half_dt = cfg.dt / F::cast(2.0);

    loop {
        while let Some(&t_obs) = next_obs.peek() {
            if t_obs <= current.time + half_dt {
                observe_state(&mut trajectory, &current, spec, cfg, observe)?;
                next_obs.next();
            } else {
                break;
            }
        }
        if current.time + half_dt >= t_max {
            break;
        }
        current = eom_step(&current, spec, cfg, &mut rng)?;
    }
    Ok((trajectory, current))
}

fn observe_state<F: Scalar>(
    trajectory: &mut OdeTrajectory<F>,
    state: &OrderParameterState<F>,
    spec: &MixtureSpec<F>,
    cfg: &OdeConfig<F>,
    observe: &ObserveSpec<F>,
) -> Result<()> {
    let eval_cfg = OdeConfig {
        mc_samples: observe.eval_samples,
        ..cfg.clone()
    };
    let pmse = pmse_from_state(state, spec, &eval_cfg)?;
    let eps = class_error_from_state(state, spec, &eval_cfg)?;
    trajectory.trace.push_with_params(
        state.time,
        pmse,
        eps,
        ParamSummary {
            m: state.m_integrated(),
            q: state.q_integrated(),
            v: state.v.clone(),
        },
    );
    if observe.keep_snapshots {
        trajectory.snapshots.push((state.time, state.clone()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::build_xor_mixture;
    use ndarray::array;

    fn xor_spec(d: usize, sigma2: f64) -> MixtureSpec<f64> {
        build_xor_mixture(d, (d as f64).sqrt(), sigma2).unwrap()
    }

    #[test]
    fn init_state_xor_t_matrix() {
        let spec = xor_spec(1000, 0.05 * 0.05);
        let state = init_state(&spec, 3, 1.0, 0).unwrap();
        let expect = [
            [1.0, -1.0, 0.0, 0.0],
            [-1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, -1.0, 1.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((state.t_matrix[[a, b]] - expect[a][b]).abs() < 1e-12);
            }
        }
        // chi = sigma^4 for isotropic covariance.
        assert!((state.chi - 0.05f64.powi(4)).abs() < 1e-18);
        // Weak-recovery overlaps are O(1/sqrt(D)), not zero.
        let m = state.m_integrated();
        assert!(m.iter().any(|&x| x.abs() > 1e-3));
        assert!(m.iter().all(|&x| x.abs() < 0.5));
    }

    #[test]
    fn zero_init_is_fixed_point_without_decay() {
        let spec = xor_spec(50, 0.1);
        let state = init_state(&spec, 4, 0.0, 1).unwrap();
        let cfg = OdeConfig::new(0.1, 0.0, ActivationKind::Relu, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let next = eom_step(&state, &spec, &cfg, &mut rng).unwrap();
        assert!(next.m.iter().all(|&x| x == 0.0));
        assert!(next.q.iter().all(|&x| x == 0.0));
        assert!(next.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_learning_rate_freezes_state() {
        let spec = xor_spec(100, 0.1);
        let state = init_state(&spec, 3, 0.5, 3).unwrap();
        let cfg = OdeConfig::new(0.0, 0.01, ActivationKind::ScaledErf, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let next = eom_step(&state, &spec, &cfg, &mut rng).unwrap();
        assert_eq!(next.m, state.m);
        assert_eq!(next.q, state.q);
        assert_eq!(next.v, state.v);
    }

    #[test]
    fn strong_decay_shrinks_everything() {
        let spec = xor_spec(100, 0.1);
        let state = init_state(&spec, 3, 1.0, 5).unwrap();
        // kappa = 1e3 with a small step: decay terms dominate every drift.
        let cfg = OdeConfig::new(0.1, 1e3, ActivationKind::ScaledErf, 13).with_dt(1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut current = state.clone();
        for _ in 0..50 {
            current = eom_step(&current, &spec, &cfg, &mut rng).unwrap();
        }
        let ratio = current.v[0] / state.v[0];
        assert!(ratio > 0.0 && ratio < 0.7, "ratio {ratio}");
        let m0 = state.m_integrated();
        let m1 = current.m_integrated();
        assert!(m1[[0, 0]].abs() < m0[[0, 0]].abs());
    }

    #[test]
    fn conservation_and_symmetry_along_trajectory() {
        let spec = xor_spec(64, 0.2);
        let state = init_state(&spec, 4, 1.0, 17).unwrap();
        let cfg = OdeConfig::new(0.1, 1e-2, ActivationKind::Relu, 19).with_mc_samples(500);
        let t0 = state.t_matrix.clone();
        let chi0 = state.chi;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut current = state;
        for _ in 0..20 {
            current = eom_step(&current, &spec, &cfg, &mut rng).unwrap();
            assert_eq!(current.t_matrix, t0, "T must be bit-identical");
            assert_eq!(current.chi, chi0, "chi must be bit-identical");
            for b in 0..current.n_bins() {
                for k in 0..current.k() {
                    for l in 0..current.k() {
                        assert_eq!(current.q[[k, l, b]], current.q[[l, k, b]]);
                    }
                }
            }
        }
    }

    #[test]
    fn pmse_of_zero_network_is_one_and_error_half() {
        let spec = xor_spec(50, 0.1);
        let state = init_state(&spec, 4, 0.0, 23).unwrap();
        let cfg = OdeConfig::new(0.1, 0.0, ActivationKind::Relu, 29).with_mc_samples(4_000);
        let pmse = pmse_from_state(&state, &spec, &cfg).unwrap();
        assert!((pmse - 1.0).abs() < 1e-12);
        let eps = class_error_from_state(&state, &spec, &cfg).unwrap();
        assert!((eps - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_trajectory_when_t_max_equals_start() {
        let spec = xor_spec(30, 0.1);
        let state = init_state(&spec, 2, 0.5, 31).unwrap();
        let cfg = OdeConfig::new(0.1, 0.0, ActivationKind::Relu, 37).with_mc_samples(200);
        let observe = ObserveSpec {
            times: vec![],
            eval_samples: 200,
            keep_snapshots: false,
        };
        let (traj, fin) = integrate(&state, &spec, &cfg, 0.0, &observe).unwrap();
        assert!(traj.trace.rows.is_empty());
        assert_eq!(fin.time, 0.0);
    }

    #[test]
    fn permutation_equivariance_of_short_trajectory() {
        let spec = xor_spec(40, 0.1);
        let k = 3;
        // Generic initialization with distinct q eigenvalues.
        let state = init_state(&spec, k, 0.9, 41).unwrap();
        let perm = [2usize, 0, 1];
        let mut permuted = state.clone();
        for (new_k, &old_k) in perm.iter().enumerate() {
            permuted.v[new_k] = state.v[old_k];
            for a in 0..spec.n_clusters() {
                permuted.m[[a, new_k, 0]] = state.m[[a, old_k, 0]];
            }
            for (new_l, &old_l) in perm.iter().enumerate() {
                permuted.q[[new_k, new_l, 0]] = state.q[[old_k, old_l, 0]];
            }
        }
        let cfg = OdeConfig::new(0.1, 1e-3, ActivationKind::ScaledErf, 43).with_mc_samples(2_000);
        let mut rng_a = ChaCha8Rng::seed_from_u64(9);
        let mut rng_b = ChaCha8Rng::seed_from_u64(9);
        let mut sa = state;
        let mut sb = permuted;
        for _ in 0..10 {
            sa = eom_step(&sa, &spec, &cfg, &mut rng_a).unwrap();
            sb = eom_step(&sb, &spec, &cfg, &mut rng_b).unwrap();
        }
        for (new_k, &old_k) in perm.iter().enumerate() {
            assert!((sb.v[new_k] - sa.v[old_k]).abs() < 1e-9);
            for a in 0..spec.n_clusters() {
                assert!((sb.m[[a, new_k, 0]] - sa.m[[a, old_k, 0]]).abs() < 1e-9);
            }
            for (new_l, &old_l) in perm.iter().enumerate() {
                assert!((sb.q[[new_k, new_l, 0]] - sa.q[[old_k, old_l, 0]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spectrum_grid_validation() {
        assert!(SpectrumGrid::new(array![1.0, 2.0], array![0.5, 0.4]).is_err());
        assert!(SpectrumGrid::new(array![1.0, 2.0], array![0.5, 0.5]).is_ok());
        let atom = SpectrumGrid::single_atom(0.3f64);
        assert_eq!(atom.len(), 1);
    }

    #[test]
    fn equal_mass_binning_reconstructs_moments() {
        let evs = Array1::from_iter((0..57).map(|i| 2.0 - 0.03 * i as f64));
        let (grid, ranges) = bin_eigenvalues(evs.view(), 10);
        let total_mass: f64 = grid.masses().sum();
        assert!((total_mass - 1.0).abs() < 1e-14);
        let mean_binned: f64 = grid
            .eigenvalues()
            .iter()
            .zip(grid.masses())
            .map(|(&e, &m)| e * m)
            .sum();
        let mean_exact = evs.sum() / evs.len() as f64;
        assert!((mean_binned - mean_exact).abs() < 1e-12);
        assert_eq!(ranges.iter().map(|r| r.len()).sum::<usize>(), 57);
    }
}
