use gmix_core::fixed_point::*;
use ndarray::{array, Array1};

fn main() {
    let sigma = 0.35f64;
    let kappa = 1e-3;
    let backend = ResidualBackend::Analytic { n_theta: 2048 };
    let mut x = array![1.0, -1.0, -0.25, 0.25];
    for it in 0..4000 {
        let r = xor_reduced_residual(&x, sigma, kappa, backend, 0).unwrap();
        let n = r.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if it % 200 == 0 || it < 6 {
            println!("it {it}: |R| = {n:.3e} x = {:?}", x.as_slice().unwrap());
        }
        let step: Array1<f64> = &r * 0.5;
        x = &x + &step;
    }
    let r = xor_reduced_residual(&x, sigma, kappa, backend, 0).unwrap();
    let n = r.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    println!("final |R| = {n:.3e} x = {:?}", x.as_slice().unwrap());
    println!("R = {:?}", r.as_slice().unwrap());

    for nt in [512usize, 2048, 8192, 32768] {
        let backend = ResidualBackend::Analytic { n_theta: nt };
        let r = xor_reduced_residual(&x, sigma, kappa, backend, 0).unwrap();
        let n = r.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        println!("n_theta {nt}: |R(x_end)| = {n:.6e}");
    }
}
