//! Built-in figure recipes: ready-to-run configs reproducing the standard
//! experiments at desk scale.

use crate::config::*;

pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub config: ExperimentConfig,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub fn builtin() -> Vec<Recipe> {
    let xor = |dim: usize, sigma2: f64| MixtureConfig::Xor {
        dim,
        mu_norm: MuSpec::Scaled { scale: 1.0, power: 0.5 },
        sigma2,
    };
    vec![
        Recipe {
            name: "fig1",
            description: "long-time error vs snr: 2LNN fixed point, RF analytic, oracle",
            config: ExperimentConfig::SnrComparison(SnrComparisonConfig {
                snr_grid: log_grid(0.2, 10.0, 13),
                k: 4,
                lr: 0.1,
                kappa: 1e-4,
                rf_dim: 4000,
                rf_gamma: 2.0,
                seed: 1,
            }),
        },
        Recipe {
            name: "fig2",
            description: "ODE vs one SGD run on the XOR mixture (K=8, D=1000, sigma=0.05)",
            config: ExperimentConfig::OdeRun(OdeRunConfig {
                mixture: xor(1000, 0.05 * 0.05),
                k: 8,
                lr: 0.1,
                weight_decay: 1e-2,
                sigma0: 1.0,
                activation: ActivationConfig::Relu,
                dt: 0.05,
                mc_samples: 10_000,
                t_max: 1000.0,
                observe_points: 16,
                eval_samples: 100_000,
                seed: 2,
                with_simulation: true,
                sim_eval_set_size: 100_000,
            }),
        },
        Recipe {
            name: "fig3",
            description: "fixed-point pmse vs weight decay (sigma^2=0.1, K=4, MC residuals)",
            config: ExperimentConfig::FixedPointSweep(FixedPointSweepConfig {
                k: 4,
                sigma2: 0.1,
                lr: 0.1,
                kappa_grid: log_grid(1e-4, 1.0, 9),
                mc_samples: 10_000,
                n_theta: 2048,
                tol: 1e-4,
                seeds: (0..10).collect(),
            }),
        },
        Recipe {
            name: "fig4",
            description: "master-curve collapse of the analytic RF error",
            config: ExperimentConfig::MasterCurve(MasterCurveConfig {
                points: vec![(800, 1.0), (800, 2.0), (800, 4.0), (1600, 1.0), (1600, 2.0), (3200, 1.0)],
                sigma_grid: log_grid(0.08, 1.2, 10),
                mu_over_sqrt_d: 1.0,
                seed: 4,
            }),
        },
        Recipe {
            name: "fig5",
            description: "2LNN vs RF trajectories in the low-snr XOR regime (see also fig5_high / fig5_mixed)",
            config: fig5_variant(MuSpec::Scaled { scale: 1.0, power: 0.5 }, MuSpec::Scaled { scale: 1.0, power: 0.5 }),
        },
        Recipe {
            name: "fig5_high",
            description: "2LNN vs RF trajectories, high-snr XOR (|mu| ~ D)",
            config: fig5_variant(MuSpec::Scaled { scale: 1.0, power: 1.0 }, MuSpec::Scaled { scale: 1.0, power: 1.0 }),
        },
        Recipe {
            name: "fig5_mixed",
            description: "2LNN vs RF trajectories, mixed-snr XOR (mu1 ~ sqrt(D), mu2 ~ D)",
            config: fig5_variant(MuSpec::Scaled { scale: 1.0, power: 0.5 }, MuSpec::Scaled { scale: 1.0, power: 1.0 }),
        },
        Recipe {
            name: "fig7",
            description: "2LNN vs RF on the three-cluster problem (low snr; asymmetric mixed variant inside)",
            config: ExperimentConfig::Sgd2lnn(Sgd2lnnConfig {
                mixture: MixtureConfig::ThreeCluster {
                    dim: 500,
                    mu0: MuSpec::Scaled { scale: 1.0, power: 0.5 },
                    sigma2: 0.05,
                },
                k: 10,
                lr: 0.1,
                weight_decay: 0.0,
                sigma0: 1e-2,
                activation: ActivationConfig::Relu,
                steps: 200_000,
                eval_every: 10_000,
                eval_set_size: 20_000,
                seed: 7,
            }),
        },
        Recipe {
            name: "fig7_mixed",
            description: "three-cluster problem with asymmetric negative means (mixed snr)",
            config: ExperimentConfig::Sgd2lnn(Sgd2lnnConfig {
                mixture: MixtureConfig::ThreeClusterAsym {
                    dim: 500,
                    mu_left: MuSpec::Scaled { scale: 1.0, power: 0.5 },
                    mu_right: MuSpec::Scaled { scale: 1.0, power: 1.0 },
                    sigma2: 0.05,
                },
                k: 10,
                lr: 0.1,
                weight_decay: 0.0,
                sigma0: 1e-2,
                activation: ActivationConfig::Relu,
                steps: 200_000,
                eval_every: 10_000,
                eval_set_size: 20_000,
                seed: 7,
            }),
        },
        Recipe {
            name: "overparam",
            description: "fraction of runs reaching near-oracle error vs K (implicit acceleration)",
            config: ExperimentConfig::OverparamSweep(OverparamSweepConfig {
                dim: 800,
                sigma2: 0.1,
                lr: 0.1,
                weight_decay: 0.0,
                sigma0: 1.0,
                k_grid: vec![4, 6, 8, 10, 12],
                n_seeds: 20,
                steps: 100_000,
                eval_set_size: 20_000,
                oracle_factor: 1.5,
                seed: 11,
            }),
        },
        Recipe {
            name: "odevsim",
            description: "ODE vs SGD on a generic 4-cluster mixture with dense covariance (erf)",
            config: ExperimentConfig::OdeRun(OdeRunConfig {
                mixture: MixtureConfig::RandomDense { dim: 800, seed: 120 },
                k: 3,
                lr: 0.1,
                weight_decay: 0.0,
                sigma0: 1.0,
                activation: ActivationConfig::ScaledErf,
                dt: 0.05,
                mc_samples: 10_000,
                t_max: 50.0,
                observe_points: 12,
                eval_samples: 100_000,
                seed: 12,
                with_simulation: true,
                sim_eval_set_size: 100_000,
            }),
        },
        Recipe {
            name: "figc1",
            description: "RF analytic error vs SGD-to-convergence (D=800, gamma in {1,2,4})",
            config: ExperimentConfig::RfAsymptoticsSweep(RfAsymptoticsSweepConfig {
                d_grid: vec![800],
                gamma_grid: vec![1.0, 2.0, 4.0],
                sigma_grid: vec![0.15, 0.25, 0.4, 0.6, 0.9, 1.3],
                mu_over_sqrt_d: 1.0,
                seed: 13,
                simulate: Some(RfSimSettings {
                    lr: 0.1,
                    steps: 400_000,
                    eval_set_size: 100_000,
                }),
            }),
        },
    ]
}

fn fig5_variant(mu1: MuSpec, mu2: MuSpec) -> ExperimentConfig {
    ExperimentConfig::Sgd2lnn(Sgd2lnnConfig {
        mixture: MixtureConfig::MixedXor {
            dim: 500,
            mu1,
            mu2,
            sigma2: 0.05,
        },
        k: 10,
        lr: 0.1,
        weight_decay: 0.0,
        sigma0: 1e-2,
        activation: ActivationConfig::Relu,
        steps: 200_000,
        eval_every: 10_000,
        eval_set_size: 20_000,
        seed: 5,
    })
}

pub fn find(name: &str) -> Option<Recipe> {
    builtin().into_iter().find(|r| r.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipes_serialize_and_validate() {
        for recipe in builtin() {
            let text = serde_json::to_string_pretty(&recipe.config).unwrap();
            let back = ExperimentConfig::from_json(&text).unwrap();
            assert_eq!(back.canonical_hash(), recipe.config.canonical_hash(), "{}", recipe.name);
        }
    }

    #[test]
    fn recipe_names_are_unique() {
        let mut names: Vec<&str> = builtin().iter().map(|r| r.name).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(n, names.len());
    }
}
