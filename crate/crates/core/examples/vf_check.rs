use gmix_core::dynamics_ode::*;
use gmix_core::mixture::*;
use gmix_core::moments::ActivationKind;
use gmix_core::sgd_sim::*;
use gmix_core::Scalar;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let d = 400usize;
    let spec = build_xor_mixture(d, (d as f64).sqrt(), 0.05f64 * 0.05).unwrap();
    let k = 8usize;
    let act = ActivationKind::Relu;
    let lr = 0.1;
    let kappa = 1e-2;

    // Run SGD to t = 20 to land mid-transition.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut net = TwoLayerNet::init(k, d, 1.0, act, &mut rng);
    let steps = 20 * d;
    let cfg_sim = TrainConfig::new(lr, kappa, steps, 1234).with_eval(steps, 1000);
    train_2lnn(&mut net, &spec, &cfg_sim).unwrap();

    // Empirical expected drift of M, Q, v per unit t, from n_probe fresh
    // samples applied to the frozen network.
    let n_probe = 400_000usize;
    let mut probe_rng = ChaCha8Rng::seed_from_u64(555);
    let sqrt_d = (d as f64).sqrt();
    let eta_w = lr / sqrt_d;
    let eta_v = lr / d as f64;
    let mut dw_sum = Array2::<f64>::zeros((k, d));
    let mut dv_sum = Array1::<f64>::zeros(k);
    // For dQ we need E[d(w^T Omega w)] including the quadratic term; with
    // isotropic covariance Omega = sigma2 I: Q = sigma2 w w^T / D.
    let mut dq_sum = Array2::<f64>::zeros((k, k));
    for _ in 0..n_probe {
        let s = spec.sample(&mut probe_rng);
        let lam = net.local_fields(s.x.view());
        let g: Vec<f64> = lam.iter().map(|&l| act.g(l)).collect();
        let gp: Vec<f64> = lam.iter().map(|&l| act.g_prime(l)).collect();
        let delta: f64 = (0..k).map(|j| net.v[j] * g[j]).sum::<f64>() - s.y;
        // dw rows for this sample
        let mut dw = Array2::<f64>::zeros((k, d));
        for kk in 0..k {
            let gain = eta_w * net.v[kk] * delta * gp[kk];
            let decay = eta_w * kappa;
            for i in 0..d {
                dw[[kk, i]] = -gain * s.x[i] - decay * net.w[[kk, i]];
            }
        }
        dw_sum += &dw;
        for kk in 0..k {
            dv_sum[kk] += -eta_v * (g[kk] * delta + kappa * net.v[kk]);
        }
        // dQ = sigma2/D [dw w^T + w dw^T + dw dw^T]
        for a in 0..k {
            for b in 0..k {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += dw[[a, i]] * net.w[[b, i]]
                        + net.w[[a, i]] * dw[[b, i]]
                        + dw[[a, i]] * dw[[b, i]];
                }
                dq_sum[[a, b]] += acc;
            }
        }
    }
    let scale = d as f64 / n_probe as f64; // per-step -> per unit t
    let sigma2 = 0.05f64 * 0.05;
    let emp_dv = dv_sum.mapv(|x| x * scale);
    let mut emp_dm = Array2::<f64>::zeros((4, k));
    for (a, c) in spec.clusters().iter().enumerate() {
        for kk in 0..k {
            emp_dm[[a, kk]] = dw_sum.row(kk).dot(&c.mean_scaled) / d as f64 * scale;
        }
    }
    let emp_dq = dq_sum.mapv(|x| x * scale * sigma2 / d as f64);

    // ODE vector field at the matching state.
    let state = OrderParameterState::from_microscopic(&net.w, &net.v, &spec, 1).unwrap();
    let cfg = OdeConfig::new(lr, kappa, act, 5).with_mc_samples(2_000_000);
    let mut ode_rng = ChaCha8Rng::seed_from_u64(4242);
    let rhs = eom_rhs(&state, &spec, &cfg, &mut ode_rng).unwrap();

    println!("dv  empirical vs ODE:");
    for kk in 0..k {
        println!("  {kk}: {:+.6e} vs {:+.6e}", emp_dv[kk], rhs.dv[kk]);
    }
    println!("dM (cluster 0) empirical vs ODE:");
    for kk in 0..k {
        println!("  {kk}: {:+.6e} vs {:+.6e}", emp_dm[[0, kk]], rhs.dm[[0, kk, 0]]);
    }
    println!("dM (cluster 2) empirical vs ODE:");
    for kk in 0..k {
        println!("  {kk}: {:+.6e} vs {:+.6e}", emp_dm[[2, kk]], rhs.dm[[2, kk, 0]]);
    }
    println!("dQ diagonal (q-density * rho = Q):");
    for kk in 0..k {
        // ODE dq is the density drift; dQ = rho * dq * mass.
        let ode_dq = rhs.dq[[kk, kk, 0]] * sigma2;
        println!("  {kk}: {:+.6e} vs {:+.6e}", emp_dq[[kk, kk]], ode_dq);
    }
    let ode_dq01 = rhs.dq[[0, 1, 0]] * sigma2;
    println!("dQ[0][1]: {:+.6e} vs {:+.6e}", emp_dq[[0, 1]], ode_dq01);
}
