use gmix_core::dynamics_ode::*;
use gmix_core::mixture::*;
use gmix_core::moments::ActivationKind;
use gmix_core::sgd_sim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let act = ActivationKind::Relu;
    let kappa = 1e-2;
    let sigma0 = 1.0;
    let lr = 0.1;
    let t_max = 30.0;
    for d in [200usize, 400, 800, 1600] {
        let spec = build_xor_mixture(d, (d as f64).sqrt(), 0.05f64 * 0.05).unwrap();
        let k = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let net0 = TwoLayerNet::init(k, d, sigma0, act, &mut rng);
        let state = OrderParameterState::from_microscopic(&net0.w, &net0.v, &spec, 1).unwrap();
        let cfg = OdeConfig::new(lr, kappa, act, 5).with_mc_samples(20_000);
        let observe = ObserveSpec {
            times: vec![t_max],
            eval_samples: 200_000,
            keep_snapshots: false,
        };
        let (traj, _) = integrate(&state, &spec, &cfg, t_max, &observe).unwrap();
        let mut net = net0.clone();
        let steps = (t_max * d as f64) as usize;
        let sim_cfg = TrainConfig::new(lr, kappa, steps, 1234).with_eval(steps, 200_000);
        let sim = train_2lnn(&mut net, &spec, &sim_cfg).unwrap();
        let po = traj.trace.rows.last().unwrap();
        let ps = sim.rows.last().unwrap();
        println!(
            "D={d}: pmse_ode={:.4} pmse_sgd={:.4} gap={:+.4}",
            po.pmse,
            ps.pmse,
            po.pmse - ps.pmse
        );
    }
}
