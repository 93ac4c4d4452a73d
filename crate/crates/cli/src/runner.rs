//! Executes one experiment config: runs the requested computation (grid
//! cells in parallel, canonical output order), then writes `results.csv`,
//! `config.lock.json` and `plot.svg` into the output directory.

use crate::config::*;
use crate::plots;
use anyhow::{Context, Result};
use gmix_core::dynamics_ode::{self, ObserveSpec, OdeConfig, OrderParameterState};
use gmix_core::fixed_point::{self, FixedPointConfig, ResidualBackend};
use gmix_core::mixture::build_xor_mixture;
use gmix_core::moments::ActivationKind;
use gmix_core::rf_theory::{self, RfSolveOptions, RfSolver};
use gmix_core::sgd_sim::{self, RfModel, TrainConfig, TwoLayerNet};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct RunArtifacts {
    pub csv: String,
    pub plot: String,
    pub lock: String,
}

/// Execute a config and write artifacts under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let artifacts = execute(config, seed_override)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    std::fs::write(out_dir.join("results.csv"), &artifacts.csv)?;
    std::fs::write(out_dir.join("plot.svg"), &artifacts.plot)?;
    let lock = serde_json::json!({
        "version": VERSION,
        "kind": config.kind_name(),
        "config_hash": config.canonical_hash(),
        "resolved_config": serde_json::to_value(config)?,
        "seed_override": seed_override,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    std::fs::write(
        out_dir.join("config.lock.json"),
        serde_json::to_string_pretty(&lock)?,
    )?;
    let _ = artifacts.lock;
    Ok(())
}

/// Execute a config fully in memory.
pub fn execute(config: &ExperimentConfig, seed_override: Option<u64>) -> Result<RunArtifacts> {
    config.validate()?;
    let header = format!(
        "# gmix {} kind={} config={}\n",
        VERSION,
        config.kind_name(),
        config.canonical_hash()
    );
    let (body, plot) = match config {
        ExperimentConfig::OdeRun(c) => ode_run(c, seed_override)?,
        ExperimentConfig::Sgd2lnn(c) => sgd_2lnn(c, seed_override)?,
        ExperimentConfig::SgdRf(c) => sgd_rf(c, seed_override)?,
        ExperimentConfig::FixedPointSweep(c) => fixed_point_sweep(c, seed_override)?,
        ExperimentConfig::RfAsymptoticsSweep(c) => rf_asymptotics_sweep(c, seed_override)?,
        ExperimentConfig::SnrComparison(c) => snr_comparison(c, seed_override)?,
        ExperimentConfig::OverparamSweep(c) => overparam_sweep(c, seed_override)?,
        ExperimentConfig::MasterCurve(c) => master_curve(c, seed_override)?,
    };
    Ok(RunArtifacts {
        csv: format!("{header}{body}"),
        plot,
        lock: String::new(),
    })
}

fn observe_times(t_max: f64, n: usize) -> Vec<f64> {
    let lo = (t_max / 1000.0).max(0.5).min(t_max);
    (0..n)
        .map(|i| lo * (t_max / lo).powf(i as f64 / (n.max(2) - 1) as f64))
        .collect()
}

fn ode_run(c: &OdeRunConfig, seed_override: Option<u64>) -> Result<(String, String)> {
    let seed = seed_override.unwrap_or(c.seed);
    let spec = c.mixture.build()?;
    let act: ActivationKind = c.activation.into();

    // Microscopic initialization shared between the ODE and the simulation.
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let net0 = TwoLayerNet::init(c.k, spec.dim(), c.sigma0, act, &mut init_rng);
    let state = OrderParameterState::from_microscopic(
        &net0.w,
        &net0.v,
        &spec,
        dynamics_ode::default_bins(spec.dim()),
    )?;

    let cfg = OdeConfig::new(c.lr, c.weight_decay, act, seed)
        .with_dt(c.dt)
        .with_mc_samples(c.mc_samples);
    let observe = ObserveSpec {
        times: observe_times(c.t_max, c.observe_points),
        eval_samples: c.eval_samples,
        keep_snapshots: false,
    };
    let (traj, _) = dynamics_ode::integrate(&state, &spec, &cfg, c.t_max, &observe)?;

    let mut csv = String::from("t,pmse,class_error,method\n");
    for row in &traj.trace.rows {
        writeln!(csv, "{},{},{},ode", row.t, row.pmse, row.class_error)?;
    }
    if c.with_simulation {
        let steps = (c.t_max * spec.dim() as f64).round() as usize;
        let eval_every = (steps / c.observe_points.max(1)).max(1);
        let sim_cfg = TrainConfig::new(c.lr, c.weight_decay, steps, derive_seed(seed, "sgd"))
            .with_eval(eval_every, c.sim_eval_set_size);
        let mut net = net0;
        let trace = sgd_sim::train_2lnn(&mut net, &spec, &sim_cfg)?;
        for row in &trace.rows {
            writeln!(csv, "{},{},{},sgd", row.t, row.pmse, row.class_error)?;
        }
    }
    let plot = plots::trajectory_plot(&csv, "order-parameter ODE vs one-pass SGD")?;
    Ok((csv, plot))
}

fn sgd_2lnn(c: &Sgd2lnnConfig, seed_override: Option<u64>) -> Result<(String, String)> {
    let seed = seed_override.unwrap_or(c.seed);
    let spec = c.mixture.build()?;
    let act: ActivationKind = c.activation.into();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = TwoLayerNet::init(c.k, spec.dim(), c.sigma0, act, &mut rng);
    let cfg = TrainConfig::new(c.lr, c.weight_decay, c.steps, derive_seed(seed, "sgd"))
        .with_eval(c.eval_every, c.eval_set_size);
    let trace = sgd_sim::train_2lnn(&mut net, &spec, &cfg)?;
    let mut csv = String::from("t,pmse,class_error,method\n");
    for row in &trace.rows {
        writeln!(csv, "{},{},{},sgd", row.t, row.pmse, row.class_error)?;
    }
    let plot = plots::trajectory_plot(&csv, "two-layer network, one-pass SGD")?;
    Ok((csv, plot))
}

fn sgd_rf(c: &SgdRfConfig, seed_override: Option<u64>) -> Result<(String, String)> {
    let seed = seed_override.unwrap_or(c.seed);
    let spec = c.mixture.build()?;
    let act: ActivationKind = c.activation.into();
    let p = ((spec.dim() as f64) * c.gamma).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "projection"));
    let mut model = RfModel::init(p, spec.dim(), act, &mut rng);
    let cfg = TrainConfig::new(c.lr, c.weight_decay, c.steps, derive_seed(seed, "sgd"))
        .with_eval(c.eval_every, c.eval_set_size);
    let trace = sgd_sim::train_rf(&mut model, &spec, &cfg)?;
    let mut csv = String::from("t,pmse,class_error,method\n");
    for row in &trace.rows {
        writeln!(csv, "{},{},{},rf_sgd", row.t, row.pmse, row.class_error)?;
    }
    let plot = plots::trajectory_plot(&csv, "random features, one-pass SGD")?;
    Ok((csv, plot))
}

fn fixed_point_sweep(c: &FixedPointSweepConfig, seed_override: Option<u64>) -> Result<(String, String)> {
    let master = seed_override.unwrap_or_else(|| c.seeds.first().copied().unwrap_or(0));
    let backend = if c.mc_samples == 0 {
        ResidualBackend::Analytic { n_theta: c.n_theta }
    } else {
        ResidualBackend::MonteCarlo {
            n_samples: c.mc_samples,
        }
    };
    let sigma = c.sigma2.sqrt();
    let mut cells: Vec<(usize, u64)> = Vec::new();
    for (ki, _) in c.kappa_grid.iter().enumerate() {
        for &s in &c.seeds {
            cells.push((ki, s));
        }
    }
    let results: Vec<(usize, u64, Result<fixed_point::FixedPointResult<f64>>)> = cells
        .par_iter()
        .map(|&(ki, s)| {
            let kappa = c.kappa_grid[ki];
            let cfg = FixedPointConfig {
                backend,
                seed: derive_seed(master ^ s, &format!("kappa={kappa}")),
                tol: c.tol,
                ..Default::default()
            };
            (
                ki,
                s,
                fixed_point::solve_xor_fixed_point(c.k, sigma, c.lr, kappa, &cfg, None)
                    .map_err(Into::into),
            )
        })
        .collect();

    let mut rows: Vec<(usize, u64, String)> = Vec::new();
    for (ki, s, res) in results {
        let kappa = c.kappa_grid[ki];
        let line = match res {
            Ok(r) => format!(
                "{},{},{},{},{}",
                kappa, r.pmse, r.class_error, r.residual_norm, r.converged
            ),
            Err(_) => format!("{kappa},NaN,NaN,NaN,false"),
        };
        rows.push((ki, s, line));
    }
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut csv = String::from("kappa,pmse,class_error,residual,converged\n");
    for (_, _, line) in rows {
        csv.push_str(&line);
        csv.push('\n');
    }
    let plot = plots::fig3_plot(&csv)?;
    Ok((csv, plot))
}

struct RfCell {
    d: usize,
    gamma: f64,
    sigma: f64,
    eps_analytic: f64,
    eps_sim: Option<f64>,
}

fn rf_cell(
    d: usize,
    gamma: f64,
    sigma: f64,
    mu_over_sqrt_d: f64,
    seed: u64,
    simulate: Option<&RfSimSettings>,
) -> Result<RfCell> {
    let p = ((d as f64) * gamma).round() as usize;
    let spec = build_xor_mixture(d, mu_over_sqrt_d * (d as f64).sqrt(), sigma * sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Array2::<f64>::zeros((p, d));
    for x in f.iter_mut() {
        *x = gmix_core::Scalar::standard_normal(&mut rng);
    }
    let moments = rf_theory::relu_moments(&spec, Arc::new(f))?;
    let opts = RfSolveOptions {
        solver: if p <= 600 { RfSolver::Dense } else { RfSolver::MatrixFree },
        ..Default::default()
    };
    let asym = rf_theory::asymptotic_weights(&moments, &opts)?;
    let eps = rf_theory::asymptotic_class_error(&asym, &moments)?.class_error;

    let eps_sim = match simulate {
        None => None,
        Some(s) => {
            let mut model_rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = RfModel::init(p, d, ActivationKind::Relu, &mut model_rng);
            debug_assert_eq!(model.projection(), moments.projection().as_ref());
            let cfg = TrainConfig::new(s.lr, 0.0, s.steps, derive_seed(seed, "rf-sgd"))
                .with_eval(s.steps, s.eval_set_size);
            let trace = sgd_sim::train_rf(&mut model, &spec, &cfg)?;
            trace.rows.last().map(|r| r.class_error)
        }
    };
    Ok(RfCell {
        d,
        gamma,
        sigma,
        eps_analytic: eps,
        eps_sim,
    })
}

fn rf_grid_csv(cells: &[RfCell]) -> String {
    let mut csv = String::from("sigma,D,P,gamma,scaling_var,class_error_analytic,class_error_sim\n");
    for c in cells {
        let p = (c.d as f64 * c.gamma).round();
        let scaling = c.sigma * (c.d as f64 / c.gamma).powf(0.25);
        let sim = c
            .eps_sim
            .map(|e| e.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            c.sigma, c.d, p, c.gamma, scaling, c.eps_analytic, sim
        );
    }
    csv
}

fn rf_asymptotics_sweep(
    c: &RfAsymptoticsSweepConfig,
    seed_override: Option<u64>,
) -> Result<(String, String)> {
    let master = seed_override.unwrap_or(c.seed);
    let mut coords = Vec::new();
    for &d in &c.d_grid {
        for &gamma in &c.gamma_grid {
            for &sigma in &c.sigma_grid {
                coords.push((d, gamma, sigma));
            }
        }
    }
    let mut cells: Vec<RfCell> = coords
        .par_iter()
        .map(|&(d, gamma, sigma)| {
            let seed = derive_seed(master, &format!("d={d}/gamma={gamma}/sigma={sigma}"));
            rf_cell(d, gamma, sigma, c.mu_over_sqrt_d, seed, c.simulate.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    cells.sort_by(|a, b| {
        (a.d, a.gamma, a.sigma)
            .partial_cmp(&(b.d, b.gamma, b.sigma))
            .expect("finite grid")
    });
    let csv = rf_grid_csv(&cells);
    let plot = plots::rf_sweep_plot(&csv, "random-features error: analytic vs simulation")?;
    Ok((csv, plot))
}

fn master_curve(c: &MasterCurveConfig, seed_override: Option<u64>) -> Result<(String, String)> {
    let master = seed_override.unwrap_or(c.seed);
    let mut coords = Vec::new();
    for &(d, gamma) in &c.points {
        for &sigma in &c.sigma_grid {
            coords.push((d, gamma, sigma));
        }
    }
    let mut cells: Vec<RfCell> = coords
        .par_iter()
        .map(|&(d, gamma, sigma)| {
            let seed = derive_seed(master, &format!("d={d}/gamma={gamma}/sigma={sigma}"));
            rf_cell(d, gamma, sigma, c.mu_over_sqrt_d, seed, None)
        })
        .collect::<Result<Vec<_>>>()?;
    cells.sort_by(|a, b| {
        (a.d, a.gamma, a.sigma)
            .partial_cmp(&(b.d, b.gamma, b.sigma))
            .expect("finite grid")
    });
    let csv = rf_grid_csv(&cells);
    let plot = plots::fig4_plot(&csv)?;
    Ok((csv, plot))
}

fn snr_comparison(c: &SnrComparisonConfig, seed_override: Option<u64>) -> Result<(String, String)> {
    let master = seed_override.unwrap_or(c.seed);
    // Fixed-point branch per snr point (continuation would bias parallel
    // runs; each point multi-starts on its own).
    #[derive(Clone, Copy)]
    struct Row {
        snr: f64,
        sigma: f64,
        eps_2lnn: f64,
        eps_rf: f64,
        eps_oracle: f64,
    }
    let mut rows: Vec<Row> = c
        .snr_grid
        .par_iter()
        .map(|&snr| -> Result<Row> {
            let sigma = 1.0 / snr;
            let fp_cfg = FixedPointConfig::<f64> {
                seed: derive_seed(master, &format!("fp/snr={snr}")),
                ..Default::default()
            };
            let fp = fixed_point::solve_xor_fixed_point(c.k, sigma, c.lr, c.kappa, &fp_cfg, None)?;
            let cell = rf_cell(
                c.rf_dim,
                c.rf_gamma,
                sigma,
                1.0,
                derive_seed(master, &format!("rf/snr={snr}")),
                None,
            )?;
            Ok(Row {
                snr,
                sigma,
                eps_2lnn: fp.class_error,
                eps_rf: cell.eps_analytic,
                eps_oracle: fixed_point::oracle_error(1.0, sigma)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.snr.partial_cmp(&b.snr).expect("finite snr"));
    let mut csv = String::from("snr,sigma,eps_2lnn,eps_rf,eps_oracle\n");
    for r in rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.snr, r.sigma, r.eps_2lnn, r.eps_rf, r.eps_oracle
        )?;
    }
    let plot = plots::fig1_plot(&csv)?;
    Ok((csv, plot))
}

fn overparam_sweep(c: &OverparamSweepConfig, seed_override: Option<u64>) -> Result<(String, String)> {
    let master = seed_override.unwrap_or(c.seed);
    let spec = build_xor_mixture(c.dim, (c.dim as f64).sqrt(), c.sigma2)?;
    let oracle = fixed_point::oracle_error(1.0, c.sigma2.sqrt())?;
    let mut cells = Vec::new();
    for &k in &c.k_grid {
        for rep in 0..c.n_seeds {
            cells.push((k, rep));
        }
    }
    let results: Vec<(usize, usize, Result<(f64, f64)>)> = cells
        .par_iter()
        .map(|&(k, rep)| {
            let seed = derive_seed(master, &format!("k={k}/rep={rep}"));
            let out = (|| -> Result<(f64, f64)> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut net =
                    TwoLayerNet::init(k, c.dim, c.sigma0, ActivationKind::Relu, &mut rng);
                let cfg = TrainConfig::new(c.lr, c.weight_decay, c.steps, derive_seed(seed, "sgd"))
                    .with_eval(c.steps, c.eval_set_size);
                let trace = sgd_sim::train_2lnn(&mut net, &spec, &cfg)?;
                let last = trace.rows.last().expect("evaluated at final step");
                Ok((last.pmse, last.class_error))
            })();
            (k, rep, out)
        })
        .collect();

    // Aggregate per K in canonical order; failed cells are recorded and
    // excluded from the statistics.
    let mut csv = String::from(
        "k,n_seeds,n_failed,converged_fraction,mean_eps_converged,std_eps_converged,mean_pmse_converged\n",
    );
    for &k in &c.k_grid {
        let mut eps_conv = Vec::new();
        let mut pmse_conv = Vec::new();
        let mut failed = 0usize;
        let mut converged = 0usize;
        for (kk, _, res) in &results {
            if *kk != k {
                continue;
            }
            match res {
                Err(_) => failed += 1,
                Ok((pmse, eps)) => {
                    if sgd_sim::converged_to_oracle(*eps, oracle, c.oracle_factor) {
                        converged += 1;
                        eps_conv.push(*eps);
                        pmse_conv.push(*pmse);
                    }
                }
            }
        }
        let frac = converged as f64 / c.n_seeds as f64;
        let (mean_eps, std_eps) = mean_std(&eps_conv);
        let (mean_pmse, _) = mean_std(&pmse_conv);
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            k, c.n_seeds, failed, frac, mean_eps, std_eps, mean_pmse
        )?;
    }
    let plot = plots::overparam_plot(&csv)?;
    Ok((csv, plot))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

use crate::config::derive_seed;
