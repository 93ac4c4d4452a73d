use gmix_core::dynamics_ode::*;
use gmix_core::mixture::*;
use gmix_core::moments::ActivationKind;
use gmix_core::sgd_sim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let d = 400;
    let spec = build_xor_mixture(d, (d as f64).sqrt(), 0.05f64 * 0.05).unwrap();
    let k = 8;
    let act = ActivationKind::Relu;
    let kappa = 1e-2;
    let sigma0 = 1.0;

    for lr in [0.1, 0.02] {
        let t_max = 50.0 * (0.1 / lr); // same effective progress
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let net0 = TwoLayerNet::init(k, d, sigma0, act, &mut rng);
        let state = OrderParameterState::from_microscopic(&net0.w, &net0.v, &spec, 1).unwrap();
        let cfg = OdeConfig::new(lr, kappa, act, 5).with_mc_samples(20_000);
        let times: Vec<f64> = (1..=5).map(|i| t_max * i as f64 / 5.0).collect();
        let observe = ObserveSpec {
            times,
            eval_samples: 100_000,
            keep_snapshots: false,
        };
        let (traj, _) = integrate(&state, &spec, &cfg, t_max, &observe).unwrap();

        // Three SGD seeds from the same weights.
        let steps = (t_max * d as f64) as usize;
        let every = steps / 5;
        let mut sims = Vec::new();
        for seed in [1234u64, 777, 31] {
            let mut net = net0.clone();
            let sim_cfg = TrainConfig::new(lr, kappa, steps, seed).with_eval(every, 100_000);
            sims.push(train_2lnn(&mut net, &spec, &sim_cfg).unwrap());
        }
        println!("--- eta = {lr}, t_max = {t_max} ---");
        for (i, row) in traj.trace.rows.iter().enumerate() {
            let pmses: Vec<f64> = sims
                .iter()
                .map(|s| {
                    s.rows
                        .iter()
                        .min_by(|a, b| {
                            (a.t - row.t).abs().partial_cmp(&(b.t - row.t).abs()).unwrap()
                        })
                        .unwrap()
                        .pmse
                })
                .collect();
            println!(
                "t={:7.1} pmse_ode={:.4} pmse_sgd={:?}",
                row.t,
                row.pmse,
                pmses.iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>()
            );
            let _ = i;
        }
    }
}
