use gmix_core::fixed_point::*;
use ndarray::array;

fn main() {
    for sigma in [0.5, 0.35, 0.3162, 0.2, 0.1, 0.05, 0.02] {
        let cfg = FixedPointConfig::<f64>::default();
        let res = solve_xor_fixed_point(4, sigma, 0.1, 0.0, &cfg, None).unwrap();
        println!(
            "sigma={sigma}: conv={} res={:.2e} iters={} pmse={:.5} eps={:.5} x={:?} v={:?}",
            res.converged,
            res.residual_norm,
            res.iterations,
            res.pmse,
            res.class_error,
            res.ansatz.m_free.as_slice().unwrap(),
            res.v.as_slice().unwrap()
        );
    }
    // Oracle-style init at small sigma.
    let cfg = FixedPointConfig::<f64>::default();
    let init = XorAnsatz::new(array![1.0, -1.0, -0.05, 0.05]).unwrap();
    let res = solve_xor_fixed_point(4, 0.02, 0.1, 0.0, &cfg, Some(init)).unwrap();
    println!(
        "sigma=0.02 oracle-init: conv={} res={:.2e} iters={} pmse={:.5} eps={:.6} x={:?}",
        res.converged,
        res.residual_norm,
        res.iterations,
        res.pmse,
        res.class_error,
        res.ansatz.m_free.as_slice().unwrap()
    );
    // Mirrored solve at sigma=0.35.
    let res = solve_xor_fixed_point(4, 0.35, 0.1, 1e-3, &cfg, None).unwrap();
    println!(
        "sigma=0.35 base: conv={} res={:.2e} pmse={:.5} x={:?}",
        res.converged, res.residual_norm, res.pmse, res.ansatz.m_free.as_slice().unwrap()
    );
    let mut sw = res.ansatz.m_free.clone();
    let h = 2;
    for i in 0..h {
        sw.swap(i, i + h);
    }
    let mirrored =
        solve_xor_fixed_point(4, 0.35, 0.1, 1e-3, &cfg, Some(XorAnsatz::new(sw).unwrap()))
            .unwrap();
    println!(
        "sigma=0.35 mirrored: conv={} res={:.2e} iters={} pmse={:.5} x={:?}",
        mirrored.converged,
        mirrored.residual_norm,
        mirrored.iterations,
        mirrored.pmse,
        mirrored.ansatz.m_free.as_slice().unwrap()
    );
}
