use gmix_core::dynamics_ode::*;
use gmix_core::fixed_point::*;
use gmix_core::mixture::build_xor_mixture;
use gmix_core::moments::ActivationKind;
use ndarray::{array, Array1};

fn main() {
    let d = 1000usize;
    let sigma2 = 0.1f64;
    let spec = build_xor_mixture(d, (d as f64).sqrt(), sigma2).unwrap();
    let kappa = 1e-3;
    let cfg = OdeConfig::new(0.1, kappa, ActivationKind::Relu, 4).with_mc_samples(4_000);
    let state = init_state(&spec, 4, 1.0, 7).unwrap();
    let observe = ObserveSpec {
        times: vec![10.0, 100.0, 500.0, 1000.0, 1500.0, 2000.0],
        eval_samples: 100_000,
        keep_snapshots: false,
    };
    let (traj, fin) = integrate(&state, &spec, &cfg, 2000.0, &observe).unwrap();
    for row in &traj.trace.rows {
        println!("t={:8.1} pmse={:.5} eps={:.5}", row.t, row.pmse, row.class_error);
    }
    let m = fin.m_integrated();
    let q = fin.q_integrated();
    println!("final M (clusters x K):");
    for a in 0..4 {
        let row: Vec<f64> = (0..4).map(|k| m[[a, k]]).collect();
        println!("  {row:?}");
    }
    println!("final v = {:?}", fin.v.as_slice().unwrap());
    println!("final Q:");
    for k in 0..4 {
        let row: Vec<f64> = (0..4).map(|l| q[[k, l]]).collect();
        println!("  {row:?}");
    }
    // Output at the four means: sum_k v_k relu(M[alpha][k]).
    for a in 0..4 {
        let out: f64 = (0..4).map(|k| fin.v[k] * m[[a, k]].max(0.0)).sum();
        println!("output at mean {a}: {out:.4}");
    }
    // Q vs the ansatz relation sigma^2 (M0 M0^T + M2 M2^T).
    let mut worst = 0.0f64;
    for k in 0..4 {
        for l in 0..4 {
            let pred = sigma2 * (m[[0, k]] * m[[0, l]] + m[[2, k]] * m[[2, l]]);
            worst = worst.max((pred - q[[k, l]]).abs());
        }
    }
    println!("max |Q - ansatz relation| = {worst:.5}");

    // Identify the pair structure: which neuron is the partner of which?
    // Project into ansatz coordinates a_k = M[0][k], b_k = M[2][k].
    let a_axis: Array1<f64> = (0..4).map(|k| m[[0, k]]).collect();
    let b_axis: Array1<f64> = (0..4).map(|k| m[[2, k]]).collect();
    println!("a axis: {:?}", a_axis.as_slice().unwrap());
    println!("b axis: {:?}", b_axis.as_slice().unwrap());

    // Try the reduced residual at the projected configuration, assuming
    // neurons sorted so the first two are "a-dominant".
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&i, &j| {
        (b_axis[j].abs() - a_axis[j].abs())
            .partial_cmp(&(b_axis[i].abs() - a_axis[i].abs()))
            .unwrap()
    });
    // idx now has a-dominant first? sort by |a|-|b| descending:
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&i, &j| {
        (a_axis[j].abs() - b_axis[j].abs())
            .partial_cmp(&(a_axis[i].abs() - b_axis[i].abs()))
            .unwrap()
    });
    println!("a-dominant order: {idx:?}");
    let x = array![
        a_axis[idx[0]],
        a_axis[idx[1]],
        b_axis[idx[0]],
        b_axis[idx[1]]
    ];
    println!("projected m_free = {:?}", x.as_slice().unwrap());
    let backend = ResidualBackend::Analytic { n_theta: 2048 };
    let r = xor_reduced_residual(&x, sigma2.sqrt(), kappa, backend, 0).unwrap();
    println!("reduced residual at ODE fixed point: {:?}", r.as_slice().unwrap());

    // And the slaved v at that ansatz vs dynamical v.
    let ansatz = XorAnsatz::new(x).unwrap();
    let v_slaved = ansatz.solve_v();
    println!("slaved v (ansatz order) = {:?}", v_slaved.as_slice().unwrap());
    let v_dyn: Vec<f64> = vec![
        fin.v[idx[0]],
        fin.v[idx[1]],
        fin.v[idx[2]],
        fin.v[idx[3]],
    ];
    println!("dynamical v (same order) = {v_dyn:?}");
}
