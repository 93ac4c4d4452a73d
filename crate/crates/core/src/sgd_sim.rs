//! Microscopic online-SGD training of the two-layer network and the
//! random-features linear model, one fresh sample per step, with held-out
//! error measurement and order-parameter extraction.

use crate::error::{Error, Result};
use crate::mixture::MixtureSpec;
use crate::moments::ActivationKind;
use crate::scalar::Scalar;
use crate::trajectory::{ErrorTrace, ParamSummary};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Anything that maps an input to a scalar output; `sign` of the output is
/// the predicted label.
pub trait Predictor<F: Scalar> {
    fn predict(&self, x: ArrayView1<F>) -> F;
}

/// Two-layer network `phi(x) = sum_k v_k g(w_k . x / sqrt(D))`.
#[derive(Debug, Clone)]
pub struct TwoLayerNet<F: Scalar> {
    pub w: Array2<F>,
    pub v: Array1<F>,
    pub activation: ActivationKind,
}

impl<F: Scalar> TwoLayerNet<F> {
    /// Both layers i.i.d. `N(0, sigma0^2)`.
    pub fn init<R: Rng + ?Sized>(
        k: usize,
        dim: usize,
        sigma0: F,
        activation: ActivationKind,
        rng: &mut R,
    ) -> Self {
        let mut w = Array2::zeros((k, dim));
        for x in w.iter_mut() {
            *x = sigma0 * F::standard_normal(rng);
        }
        let mut v = Array1::zeros(k);
        for x in v.iter_mut() {
            *x = sigma0 * F::standard_normal(rng);
        }
        TwoLayerNet { w, v, activation }
    }

    pub fn k(&self) -> usize {
        self.v.len()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn local_fields(&self, x: ArrayView1<F>) -> Array1<F> {
        let inv_sqrt_d = F::one() / F::cast((self.dim() as f64).sqrt());
        self.w.dot(&x).mapv_into(|l| l * inv_sqrt_d)
    }
}

impl<F: Scalar> Predictor<F> for TwoLayerNet<F> {
    fn predict(&self, x: ArrayView1<F>) -> F {
        let lam = self.local_fields(x);
        let mut out = F::zero();
        for (vk, l) in self.v.iter().zip(lam.iter()) {
            out += *vk * self.activation.g(*l);
        }
        out
    }
}

/// Random-features model `phi(x) = w . psi(F x / sqrt(D)) / sqrt(P)` with a
/// fixed projection.
#[derive(Debug, Clone)]
pub struct RfModel<F: Scalar> {
    projection: Array2<F>,
    pub w: Array1<F>,
    pub activation: ActivationKind,
}

impl<F: Scalar> RfModel<F> {
    /// Fresh i.i.d. standard-normal projection, zero readout.
    pub fn init<R: Rng + ?Sized>(
        p: usize,
        dim: usize,
        activation: ActivationKind,
        rng: &mut R,
    ) -> Self {
        let mut projection = Array2::zeros((p, dim));
        for x in projection.iter_mut() {
            *x = F::standard_normal(rng);
        }
        RfModel {
            projection,
            w: Array1::zeros(p),
            activation,
        }
    }

    pub fn p(&self) -> usize {
        self.w.len()
    }

    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }

    /// The fixed projection matrix (immutable after construction).
    pub fn projection(&self) -> &Array2<F> {
        &self.projection
    }

    /// `z = psi(F x / sqrt(D))`.
    pub fn features(&self, x: ArrayView1<F>) -> Array1<F> {
        let inv_sqrt_d = F::one() / F::cast((self.dim() as f64).sqrt());
        self.projection
            .dot(&x)
            .mapv_into(|u| self.activation.g(u * inv_sqrt_d))
    }
}

impl<F: Scalar> Predictor<F> for RfModel<F> {
    fn predict(&self, x: ArrayView1<F>) -> F {
        let z = self.features(x);
        self.w.dot(&z) / F::cast((self.p() as f64).sqrt())
    }
}

/// Oracle that assigns each input the label of the nearest cluster center.
#[derive(Debug, Clone)]
pub struct NearestMeanOracle<F: Scalar> {
    centers: Array2<F>,
    labels: Array1<F>,
}

impl<F: Scalar> NearestMeanOracle<F> {
    pub fn from_mixture(spec: &MixtureSpec<F>) -> Self {
        let sqrt_d = F::cast((spec.dim() as f64).sqrt());
        let mut centers = Array2::zeros((spec.n_clusters(), spec.dim()));
        for (a, c) in spec.clusters().iter().enumerate() {
            centers.row_mut(a).assign(&c.mean_scaled.mapv(|m| m / sqrt_d));
        }
        NearestMeanOracle {
            centers,
            labels: spec.labels(),
        }
    }
}

impl<F: Scalar> Predictor<F> for NearestMeanOracle<F> {
    fn predict(&self, x: ArrayView1<F>) -> F {
        let mut best = F::infinity();
        let mut label = F::one();
        for (row, &y) in self.centers.rows().into_iter().zip(self.labels.iter()) {
            let mut dist = F::zero();
            for (a, b) in row.iter().zip(x.iter()) {
                let d = *a - *b;
                dist += d * d;
            }
            if dist < best {
                best = dist;
                label = y;
            }
        }
        label
    }
}

/// Online-SGD settings.
#[derive(Debug, Clone)]
pub struct TrainConfig<F: Scalar> {
    pub lr: F,
    pub weight_decay: F,
    pub steps: usize,
    pub eval_every: usize,
    pub eval_set_size: usize,
    pub seed: u64,
}

impl<F: Scalar> TrainConfig<F> {
    pub fn new(lr: F, weight_decay: F, steps: usize, seed: u64) -> Self {
        TrainConfig {
            lr,
            weight_decay,
            steps,
            eval_every: (steps / 20).max(1),
            eval_set_size: 10_000,
            seed,
        }
    }

    pub fn with_eval(mut self, eval_every: usize, eval_set_size: usize) -> Self {
        self.eval_every = eval_every.max(1);
        self.eval_set_size = eval_set_size;
        self
    }
}

/// Monte-Carlo test errors `(pmse, class_error)` of a predictor on fresh
/// samples; `sign(0)` counts as half an error.
pub fn measure_errors<F: Scalar>(
    model: &impl Predictor<F>,
    spec: &MixtureSpec<F>,
    n_test: usize,
    seed: u64,
) -> (F, F) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    measure_errors_with(model, spec, n_test, &mut rng)
}

fn measure_errors_with<F: Scalar, R: Rng + ?Sized>(
    model: &impl Predictor<F>,
    spec: &MixtureSpec<F>,
    n_test: usize,
    rng: &mut R,
) -> (F, F) {
    let half = F::cast(0.5);
    let mut se = F::zero();
    let mut misses = F::zero();
    for _ in 0..n_test {
        let s = spec.sample(rng);
        let out = model.predict(s.x.view());
        let d = out - s.y;
        se += d * d;
        let m = out * s.y;
        if m < F::zero() {
            misses += F::one();
        } else if m == F::zero() {
            misses += half;
        }
    }
    let n = F::cast(n_test as f64);
    (se / n, misses / n)
}

fn check_finite<F: Scalar>(values: impl IntoIterator<Item = F>, step: usize) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::Diverged {
                step,
                what: "non-finite weight".into(),
            });
        }
    }
    Ok(())
}

/// Train a two-layer network by one-pass SGD on the quadratic loss:
/// per step `dw_k = -(eta/sqrt(D)) v_k Delta g'(lam_k) x - (eta/D) kappa w_k`
/// and `dv_k = -(eta/D) (g(lam_k) Delta + kappa v_k)`, both computed from
/// the pre-update weights. The L2 decay carries the same `eta/D` scaling on
/// both layers: that is the scaling under which the decay survives as the
/// finite `-kappa eta` drift of the high-dimensional limit (a decay at
/// `eta/sqrt(D)` per step would grow as `sqrt(D)` per unit `t = N/D` and
/// leave no limit for the order parameters to follow).
///
/// Every `eval_every` steps the test errors are measured on a fresh batch
/// and recorded together with the order parameters.
pub fn train_2lnn<F: Scalar>(
    net: &mut TwoLayerNet<F>,
    spec: &MixtureSpec<F>,
    cfg: &TrainConfig<F>,
) -> Result<ErrorTrace<F>> {
    if net.dim() != spec.dim() {
        return Err(Error::InvalidDimension(format!(
            "network dim {} vs mixture dim {}",
            net.dim(),
            spec.dim()
        )));
    }
    let d = spec.dim() as f64;
    let inv_sqrt_d = F::one() / F::cast(d.sqrt());
    let eta_w = cfg.lr * inv_sqrt_d;
    let eta_v = cfg.lr / F::cast(d);
    let kappa = cfg.weight_decay;
    let k_units = net.k();

    let mut train_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    train_rng.set_stream(0);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    eval_rng.set_stream(1);

    let mut trace = ErrorTrace::new();
    let mut observe = |net: &TwoLayerNet<F>, step: usize, rng: &mut ChaCha8Rng| -> Result<()> {
        let (pmse, eps) = measure_errors_with(net, spec, cfg.eval_set_size, rng);
        let params = order_params_of(net, spec)?;
        trace.push_with_params(
            F::cast(step as f64) / F::cast(d),
            pmse,
            eps,
            ParamSummary {
                m: params.m,
                q: params.q,
                v: params.v,
            },
        );
        Ok(())
    };

    observe(net, 0, &mut eval_rng)?;
    let mut g_buf = Array1::<F>::zeros(k_units);
    for step in 1..=cfg.steps {
        let sample = spec.sample(&mut train_rng);
        let lam = net.local_fields(sample.x.view());
        let mut delta = -sample.y;
        for k in 0..k_units {
            g_buf[k] = net.activation.g(lam[k]);
            delta += net.v[k] * g_buf[k];
        }
        // First layer: both layers update from pre-update weights.
        let x_slice = sample.x.as_slice().expect("contiguous sample");
        let decay = eta_v * kappa;
        for k in 0..k_units {
            let gain = eta_w * net.v[k] * delta * net.activation.g_prime(lam[k]);
            let row = net.w.row_mut(k).into_slice().expect("contiguous row");
            for (wi, xi) in row.iter_mut().zip(x_slice) {
                *wi -= gain * *xi + decay * *wi;
            }
        }
        for k in 0..k_units {
            let vk = net.v[k];
            net.v[k] = vk - eta_v * (g_buf[k] * delta + kappa * vk);
        }

        if step % cfg.eval_every == 0 || step == cfg.steps {
            check_finite(net.v.iter().cloned(), step)?;
            check_finite(net.w.iter().cloned(), step)?;
            observe(net, step, &mut eval_rng)?;
        }
    }
    Ok(trace)
}

/// Train the random-features readout by one-pass SGD with rate `eta/sqrt(P)`
/// on the quadratic loss (L2 decay, when requested, at `eta/P` per step for
/// the same reason as in [`train_2lnn`]; the theory is ridgeless).
pub fn train_rf<F: Scalar>(
    model: &mut RfModel<F>,
    spec: &MixtureSpec<F>,
    cfg: &TrainConfig<F>,
) -> Result<ErrorTrace<F>> {
    if model.dim() != spec.dim() {
        return Err(Error::InvalidDimension(format!(
            "model dim {} vs mixture dim {}",
            model.dim(),
            spec.dim()
        )));
    }
    let p = model.p();
    let inv_sqrt_p = F::one() / F::cast((p as f64).sqrt());
    let eta_p = cfg.lr * inv_sqrt_p;
    let kappa = cfg.weight_decay;

    let mut train_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    train_rng.set_stream(0);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    eval_rng.set_stream(1);

    let mut trace = ErrorTrace::new();
    let d = spec.dim() as f64;
    {
        let (pmse, eps) = measure_errors_with(model, spec, cfg.eval_set_size, &mut eval_rng);
        trace.push(F::zero(), pmse, eps);
    }
    for step in 1..=cfg.steps {
        let sample = spec.sample(&mut train_rng);
        let z = model.features(sample.x.view());
        let out = model.w.dot(&z) * inv_sqrt_p;
        let delta = out - sample.y;
        let gain = eta_p * delta;
        let decay = cfg.lr * kappa / F::cast(p as f64);
        let w_slice = model.w.as_slice_mut().expect("contiguous readout");
        let z_slice = z.as_slice().expect("contiguous features");
        for (wi, zi) in w_slice.iter_mut().zip(z_slice) {
            *wi -= gain * *zi + decay * *wi;
        }
        if step % cfg.eval_every == 0 || step == cfg.steps {
            check_finite(model.w.iter().cloned(), step)?;
            let (pmse, eps) = measure_errors_with(model, spec, cfg.eval_set_size, &mut eval_rng);
            trace.push(F::cast(step as f64) / F::cast(d), pmse, eps);
        }
    }
    Ok(trace)
}

/// Exact order parameters of a microscopic network under the mixture.
#[derive(Debug, Clone)]
pub struct OrderParams<F: Scalar> {
    /// `M[alpha][k] = w_k . mu_alpha / D`
    pub m: Array2<F>,
    /// `Q[k][l] = w_k^T Omega w_l / D`
    pub q: Array2<F>,
    pub v: Array1<F>,
    /// `T[alpha][beta] = mu_alpha . mu_beta / D`
    pub t_matrix: Array2<F>,
    /// `chi = sum_tau rho_tau^2 / D`
    pub chi: F,
}

pub fn order_params_of<F: Scalar>(
    net: &TwoLayerNet<F>,
    spec: &MixtureSpec<F>,
) -> Result<OrderParams<F>> {
    if net.dim() != spec.dim() {
        return Err(Error::InvalidDimension(
            "network and mixture dimensions differ".into(),
        ));
    }
    let d = F::cast(spec.dim() as f64);
    let k_units = net.k();
    let n_clusters = spec.n_clusters();
    let mut m = Array2::zeros((n_clusters, k_units));
    for (a, c) in spec.clusters().iter().enumerate() {
        for k in 0..k_units {
            m[[a, k]] = net.w.row(k).dot(&c.mean_scaled) / d;
        }
    }
    let mut q = Array2::zeros((k_units, k_units));
    for l in 0..k_units {
        let omega_wl = spec.covariance_apply(net.w.row(l));
        for k in 0..=l {
            let val = net.w.row(k).dot(&omega_wl) / d;
            q[[k, l]] = val;
            q[[l, k]] = val;
        }
    }
    Ok(OrderParams {
        m,
        q,
        v: net.v.clone(),
        t_matrix: spec.mean_overlap_matrix(),
        chi: spec.spectral_second_moment(),
    })
}

/// The convergence criterion used by the over-parametrization experiment:
/// a run counts as converged when its final classification error is at most
/// `factor` times the oracle error.
pub fn converged_to_oracle<F: Scalar>(class_error: F, oracle_error: F, factor: F) -> bool {
    class_error <= factor * oracle_error
}

/// Portable JSON dump of network weights (nested arrays, no binary).
pub fn net_weights_to_json<F: Scalar>(net: &TwoLayerNet<F>) -> String {
    #[derive(serde::Serialize)]
    struct Dump {
        w: Vec<Vec<f64>>,
        v: Vec<f64>,
        activation: &'static str,
    }
    let dump = Dump {
        w: net
            .w
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|x| x.to_f64_lossy()).collect())
            .collect(),
        v: net.v.iter().map(|x| x.to_f64_lossy()).collect(),
        activation: match net.activation {
            ActivationKind::Relu => "relu",
            ActivationKind::ScaledErf => "scaled_erf",
        },
    };
    serde_json::to_string_pretty(&dump).expect("weights serialize")
}

/// Portable JSON dump of a random-features readout (the projection is
/// reproducible from its seed and omitted).
pub fn rf_weights_to_json<F: Scalar>(model: &RfModel<F>) -> String {
    #[derive(serde::Serialize)]
    struct Dump {
        w: Vec<f64>,
        activation: &'static str,
    }
    let dump = Dump {
        w: model.w.iter().map(|x| x.to_f64_lossy()).collect(),
        activation: match model.activation {
            ActivationKind::Relu => "relu",
            ActivationKind::ScaledErf => "scaled_erf",
        },
    };
    serde_json::to_string_pretty(&dump).expect("weights serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::oracle_error;
    use crate::mixture::build_xor_mixture;

    fn xor_spec(d: usize, sigma2: f64) -> MixtureSpec<f64> {
        build_xor_mixture(d, (d as f64).sqrt(), sigma2).unwrap()
    }

    #[test]
    fn zero_lr_zero_decay_leaves_weights_untouched() {
        let spec = xor_spec(64, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = TwoLayerNet::init(4, 64, 1.0, ActivationKind::Relu, &mut rng);
        let w0 = net.w.clone();
        let v0 = net.v.clone();
        let cfg = TrainConfig::new(0.0, 0.0, 500, 3).with_eval(100, 100);
        train_2lnn(&mut net, &spec, &cfg).unwrap();
        assert_eq!(net.w, w0);
        assert_eq!(net.v, v0);

        let mut rf = RfModel::init(32, 64, ActivationKind::Relu, &mut rng);
        let w0 = rf.w.clone();
        train_rf(&mut rf, &spec, &cfg).unwrap();
        assert_eq!(rf.w, w0);
    }

    #[test]
    fn reproducible_given_seed() {
        let spec = xor_spec(32, 0.1);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut net = TwoLayerNet::init(3, 32, 0.5, ActivationKind::Relu, &mut rng);
            let cfg = TrainConfig::new(0.1, 1e-3, 2_000, 17).with_eval(500, 500);
            let trace = train_2lnn(&mut net, &spec, &cfg).unwrap();
            (net.w, net.v, trace.rows.last().unwrap().pmse)
        };
        let (wa, va, pa) = run();
        let (wb, vb, pb) = run();
        assert_eq!(wa, wb);
        assert_eq!(va, vb);
        assert_eq!(pa, pb);
    }

    #[test]
    fn constant_zero_model_measures_one_and_half() {
        let spec = xor_spec(16, 0.2);
        struct Zero;
        impl Predictor<f64> for Zero {
            fn predict(&self, _x: ArrayView1<f64>) -> f64 {
                0.0
            }
        }
        let (pmse, eps) = measure_errors(&Zero, &spec, 5_000, 0);
        assert!((pmse - 1.0).abs() < 1e-12);
        assert!((eps - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_classifier_matches_erf_formula() {
        // Nearest-mean oracle on the XOR mixture vs the closed-form error.
        let d = 400;
        let sigma = 0.5;
        let spec = xor_spec(d, sigma * sigma);
        let oracle = NearestMeanOracle::from_mixture(&spec);
        let n = 200_000;
        let (_, eps) = measure_errors(&oracle, &spec, n, 5);
        let expect = oracle_error(1.0, sigma).unwrap();
        let std3 = 3.0 * (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (eps - expect).abs() < std3,
            "oracle mc {eps} formula {expect} tol {std3}"
        );
    }

    #[test]
    fn measurement_noise_within_binomial_bound() {
        let d = 100;
        let spec = xor_spec(d, 0.25);
        let oracle = NearestMeanOracle::from_mixture(&spec);
        let n = 100_000;
        let (_, e1) = measure_errors(&oracle, &spec, n, 1);
        let (_, e2) = measure_errors(&oracle, &spec, n, 2);
        let p = 0.5f64.min(e1.max(1e-4));
        let bound = 4.0 * (2.0 * p * (1.0 - p) / n as f64).sqrt();
        assert!((e1 - e2).abs() < bound, "{e1} vs {e2}, bound {bound}");
    }

    #[test]
    fn order_params_of_zero_weights() {
        let spec = xor_spec(24, 0.1);
        let net = TwoLayerNet {
            w: Array2::zeros((2, 24)),
            v: Array1::zeros(2),
            activation: ActivationKind::Relu,
        };
        let p = order_params_of(&net, &spec).unwrap();
        assert!(p.m.iter().all(|&x| x == 0.0));
        assert!(p.q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn order_params_of_mean_copy() {
        // w_k a copy of mu_{+0}, isotropic covariance sigma2:
        // M[0][k] = |mu|^2 / D, Q[kk] = sigma2 |mu|^2 / D.
        let d = 50;
        let sigma2 = 0.3;
        let spec = xor_spec(d, sigma2);
        let mu = spec.clusters()[0].mean_scaled.clone();
        let net = TwoLayerNet {
            w: mu.clone().insert_axis(ndarray::Axis(0)),
            v: Array1::ones(1),
            activation: ActivationKind::Relu,
        };
        let p = order_params_of(&net, &spec).unwrap();
        let mu_sq = mu.dot(&mu) / d as f64;
        assert!((p.m[[0, 0]] - mu_sq).abs() < 1e-12);
        assert!((p.q[[0, 0]] - sigma2 * mu_sq).abs() < 1e-12);
    }

    #[test]
    fn divergence_reports_step() {
        let spec = xor_spec(16, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = TwoLayerNet::init(2, 16, 1.0, ActivationKind::Relu, &mut rng);
        // Absurd learning rate forces a blow-up.
        let cfg = TrainConfig::new(1e12, 0.0, 2_000, 3).with_eval(50, 10);
        let err = train_2lnn(&mut net, &spec, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "got {err}");
    }

    #[test]
    fn trajectory_times_are_steps_over_d() {
        let spec = xor_spec(40, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = TwoLayerNet::init(2, 40, 0.1, ActivationKind::Relu, &mut rng);
        let cfg = TrainConfig::new(0.05, 0.0, 80, 5).with_eval(40, 50);
        let trace = train_2lnn(&mut net, &spec, &cfg).unwrap();
        let times: Vec<f64> = trace.rows.iter().map(|r| r.t).collect();
        assert_eq!(times, vec![0.0, 1.0, 2.0]);
    }
}
