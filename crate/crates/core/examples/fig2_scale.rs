use gmix_core::dynamics_ode::*;
use gmix_core::mixture::*;
use gmix_core::moments::ActivationKind;
use gmix_core::sgd_sim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let d = 1000usize;
    let spec = build_xor_mixture(d, (d as f64).sqrt(), 0.05f64 * 0.05).unwrap();
    let k = 8;
    let act = ActivationKind::Relu;
    let lr = 0.1;
    let kappa = 1e-2;
    let start = std::time::Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let net0 = TwoLayerNet::init(k, d, 1.0, act, &mut rng);
    let state = OrderParameterState::from_microscopic(&net0.w, &net0.v, &spec, 1).unwrap();
    let cfg = OdeConfig::new(lr, kappa, act, 5).with_mc_samples(10_000);
    let times: Vec<f64> = (0..=14).map(|i| 1.0 * (1000.0f64 / 1.0).powf(i as f64 / 14.0)).collect();
    let observe = ObserveSpec {
        times: times.clone(),
        eval_samples: 200_000,
        keep_snapshots: false,
    };
    let (traj, _) = integrate(&state, &spec, &cfg, 1000.0, &observe).unwrap();
    println!("ODE done in {:.1?}", start.elapsed());

    let mut net = net0.clone();
    let steps = 1000 * d;
    let sim_cfg = TrainConfig::new(lr, kappa, steps, 1234).with_eval(5 * d, 200_000);
    let sim = train_2lnn(&mut net, &spec, &sim_cfg).unwrap();
    println!("SGD done in {:.1?}", start.elapsed());

    let mut worst_pmse = 0.0f64;
    let mut worst_eps = 0.0f64;
    for row in &traj.trace.rows {
        let sim_row = sim
            .rows
            .iter()
            .min_by(|a, b| (a.t - row.t).abs().partial_cmp(&(b.t - row.t).abs()).unwrap())
            .unwrap();
        let dp = (row.pmse - sim_row.pmse).abs();
        let de = (row.class_error - sim_row.class_error).abs();
        worst_pmse = worst_pmse.max(dp);
        worst_eps = worst_eps.max(de);
        println!(
            "t={:8.2} pmse {:.4} vs {:.4} (|d|={:.4})  eps {:.4} vs {:.4} (|d|={:.4})",
            row.t, row.pmse, sim_row.pmse, dp, row.class_error, sim_row.class_error, de
        );
    }
    println!("worst pmse gap {worst_pmse:.4}, worst eps gap {worst_eps:.4}");
    println!("total {:.1?}", start.elapsed());
}
