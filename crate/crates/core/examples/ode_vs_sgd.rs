use gmix_core::Scalar;
use gmix_core::dynamics_ode::*;
use gmix_core::mixture::*;
use gmix_core::moments::ActivationKind;
use gmix_core::sgd_sim::*;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run_pair(
    spec: &MixtureSpec<f64>,
    k: usize,
    act: ActivationKind,
    lr: f64,
    kappa: f64,
    sigma0: f64,
    t_max: f64,
    label: &str,
) {
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let net0 = TwoLayerNet::init(k, d, sigma0, act, &mut rng);

    // ODE initialized from the same microscopic weights.
    let state = OrderParameterState::from_microscopic(&net0.w, &net0.v, spec, 100).unwrap();
    let cfg = OdeConfig::new(lr, kappa, act, 5).with_mc_samples(10_000);
    let times: Vec<f64> = (1..=10).map(|i| t_max * i as f64 / 10.0).collect();
    let observe = ObserveSpec {
        times: times.clone(),
        eval_samples: 200_000,
        keep_snapshots: false,
    };
    let (traj, _) = integrate(&state, spec, &cfg, t_max, &observe).unwrap();

    // SGD on the same weights.
    let mut net = net0.clone();
    let steps = (t_max * d as f64) as usize;
    let every = steps / 10;
    let sim_cfg = TrainConfig::new(lr, kappa, steps, 1234).with_eval(every, 200_000);
    let sim = train_2lnn(&mut net, spec, &sim_cfg).unwrap();

    println!("--- {label} ---");
    println!("{:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "t", "pmse_ode", "pmse_sgd", "eps_ode", "eps_sgd", "dM_max", "dQ_max");
    for row in &traj.trace.rows {
        // Find matching sim row.
        let sim_row = sim
            .rows
            .iter()
            .min_by(|a, b| {
                (a.t - row.t).abs().partial_cmp(&(b.t - row.t).abs()).unwrap()
            })
            .unwrap();
        let po = row.params.as_ref().unwrap();
        let ps = sim_row.params.as_ref().unwrap();
        let dm = (&po.m - &ps.m).iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let dq = (&po.q - &ps.q).iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        println!(
            "{:8.2} {:9.4} {:9.4} {:9.4} {:9.4} {:9.4} {:9.4}",
            row.t, row.pmse, sim_row.pmse, row.class_error, sim_row.class_error, dm, dq
        );
    }
}

fn main() {
    // Small XOR + relu sanity check.
    let d = 400;
    let spec = build_xor_mixture(d, (d as f64).sqrt(), 0.05f64 * 0.05).unwrap();
    run_pair(&spec, 8, ActivationKind::Relu, 0.1, 1e-2, 1.0, 50.0, "XOR relu K=8 D=400");

    // Generic 4-cluster mixture, dense random covariance, erf activation.
    let d = 300usize;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut f = Array2::<f64>::zeros((d, d));
    for x in f.iter_mut() {
        *x = f64::standard_normal(&mut rng);
    }
    let omega = f.t().dot(&f) / (d as f64).powf(1.5); // F^T F / D^{3/2}: O(1) eigenvalues
    let mut clusters = Vec::new();
    for (i, label) in [Label::Plus, Label::Minus, Label::Plus, Label::Minus]
        .into_iter()
        .enumerate()
    {
        let mean: Array1<f64> =
            Array1::from_iter((0..d).map(|_| f64::standard_normal(&mut rng)));
        clusters.push(Cluster {
            mean_scaled: mean,
            label,
            weight: if i < 2 { 0.3 } else { 0.2 },
        });
    }
    let spec = MixtureSpec::new(d, clusters, CovarianceSpec::Dense(omega)).unwrap();
    run_pair(&spec, 3, ActivationKind::ScaledErf, 0.1, 0.0, 1.0, 30.0, "generic erf K=3 D=300 dense cov");
}
