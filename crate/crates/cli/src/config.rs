//! Experiment configuration: a single JSON document with a `kind`
//! discriminator. Physics parameters (learning rate, noise, decay) are
//! always explicit — no silent defaults.

use anyhow::{bail, Context, Result};
use gmix_core::mixture::{self, Cluster, CovarianceSpec, Label, MixtureSpec};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// A mean magnitude, either literal or scaling with the dimension as
/// `scale * D^power` (e.g. `{"scale": 1.0, "power": 0.5}` for `sqrt(D)`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSpec {
    Value(f64),
    Scaled { scale: f64, power: f64 },
}

impl MuSpec {
    pub fn resolve(self, dim: usize) -> f64 {
        match self {
            MuSpec::Value(v) => v,
            MuSpec::Scaled { scale, power } => scale * (dim as f64).powf(power),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum MixtureConfig {
    /// Means `+-mu e1` (label +) and `+-mu e2` (label -).
    Xor {
        dim: usize,
        mu_norm: MuSpec,
        sigma2: f64,
    },
    /// One positive cluster at the origin, two negative at `+-mu0 e1`.
    ThreeCluster {
        dim: usize,
        mu0: MuSpec,
        sigma2: f64,
    },
    /// XOR pattern with per-axis magnitudes: means `(s1 mu1, s2 mu2)` over
    /// signs, labelled by the sign product (the mixed-snr construction).
    MixedXor {
        dim: usize,
        mu1: MuSpec,
        mu2: MuSpec,
        sigma2: f64,
    },
    /// Three clusters with asymmetric negative means `+mu_right e1`,
    /// `-mu_left e1` (the mixed-snr three-cluster construction).
    ThreeClusterAsym {
        dim: usize,
        mu_left: MuSpec,
        mu_right: MuSpec,
        sigma2: f64,
    },
    /// Four clusters with i.i.d. standard-normal means (alternating labels,
    /// weights 0.3/0.3/0.2/0.2) and a random dense covariance
    /// `F^T F / D^{3/2}`; fully determined by the seed.
    RandomDense { dim: usize, seed: u64 },
    File { path: String },
}

impl MixtureConfig {
    pub fn build(&self) -> Result<MixtureSpec<f64>> {
        match self {
            MixtureConfig::Xor { dim, mu_norm, sigma2 } => {
                Ok(mixture::build_xor_mixture(*dim, mu_norm.resolve(*dim), *sigma2)?)
            }
            MixtureConfig::ThreeCluster { dim, mu0, sigma2 } => Ok(
                mixture::build_three_cluster_mixture(*dim, mu0.resolve(*dim), *sigma2)?,
            ),
            MixtureConfig::MixedXor {
                dim,
                mu1,
                mu2,
                sigma2,
            } => {
                if *dim < 2 {
                    bail!("mixed XOR mixture needs dim >= 2");
                }
                let m1 = mu1.resolve(*dim);
                let m2 = mu2.resolve(*dim);
                let mut clusters = Vec::new();
                for (s1, s2) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                    let mut mean = Array1::zeros(*dim);
                    mean[0] = s1 * m1;
                    mean[1] = s2 * m2;
                    clusters.push(Cluster {
                        mean_scaled: mean,
                        label: if s1 * s2 > 0.0 { Label::Plus } else { Label::Minus },
                        weight: 0.25,
                    });
                }
                Ok(MixtureSpec::new(*dim, clusters, CovarianceSpec::Isotropic(*sigma2))?)
            }
            MixtureConfig::ThreeClusterAsym {
                dim,
                mu_left,
                mu_right,
                sigma2,
            } => {
                let ml = mu_left.resolve(*dim);
                let mr = mu_right.resolve(*dim);
                let mut clusters = vec![Cluster {
                    mean_scaled: Array1::zeros(*dim),
                    label: Label::Plus,
                    weight: 0.5,
                }];
                for (sign, m) in [(1.0, mr), (-1.0, ml)] {
                    let mut mean = Array1::zeros(*dim);
                    mean[0] = sign * m;
                    clusters.push(Cluster {
                        mean_scaled: mean,
                        label: Label::Minus,
                        weight: 0.25,
                    });
                }
                Ok(MixtureSpec::new(*dim, clusters, CovarianceSpec::Isotropic(*sigma2))?)
            }
            MixtureConfig::RandomDense { dim, seed } => {
                use gmix_core::Scalar;
                use rand::SeedableRng;
                let d = *dim;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let mut f = ndarray::Array2::<f64>::zeros((d, d));
                for x in f.iter_mut() {
                    *x = f64::standard_normal(&mut rng);
                }
                let omega = f.t().dot(&f) / (d as f64).powf(1.5);
                let mut clusters = Vec::new();
                for (i, label) in [Label::Plus, Label::Minus, Label::Plus, Label::Minus]
                    .into_iter()
                    .enumerate()
                {
                    let mean =
                        Array1::from_iter((0..d).map(|_| f64::standard_normal(&mut rng)));
                    clusters.push(Cluster {
                        mean_scaled: mean,
                        label,
                        weight: if i < 2 { 0.3 } else { 0.2 },
                    });
                }
                Ok(MixtureSpec::new(d, clusters, CovarianceSpec::Dense(omega))?)
            }
            MixtureConfig::File { path } => Ok(mixture::load_mixture(path)?),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ActivationConfig {
    Relu,
    ScaledErf,
}

impl From<ActivationConfig> for gmix_core::moments::ActivationKind {
    fn from(a: ActivationConfig) -> Self {
        match a {
            ActivationConfig::Relu => gmix_core::moments::ActivationKind::Relu,
            ActivationConfig::ScaledErf => gmix_core::moments::ActivationKind::ScaledErf,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeRunConfig {
    pub mixture: MixtureConfig,
    pub k: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub sigma0: f64,
    pub activation: ActivationConfig,
    pub dt: f64,
    pub mc_samples: usize,
    pub t_max: f64,
    pub observe_points: usize,
    pub eval_samples: usize,
    pub seed: u64,
    /// Also run a microscopic SGD trajectory from the same initial weights
    /// and merge it into the CSV (`method` column).
    pub with_simulation: bool,
    pub sim_eval_set_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sgd2lnnConfig {
    pub mixture: MixtureConfig,
    pub k: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub sigma0: f64,
    pub activation: ActivationConfig,
    pub steps: usize,
    pub eval_every: usize,
    pub eval_set_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgdRfConfig {
    pub mixture: MixtureConfig,
    pub gamma: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub activation: ActivationConfig,
    pub steps: usize,
    pub eval_every: usize,
    pub eval_set_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointSweepConfig {
    pub k: usize,
    pub sigma2: f64,
    pub lr: f64,
    pub kappa_grid: Vec<f64>,
    /// Monte-Carlo samples per residual; 0 selects the analytic radial
    /// backend.
    pub mc_samples: usize,
    pub n_theta: usize,
    pub tol: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfSimSettings {
    pub lr: f64,
    pub steps: usize,
    pub eval_set_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfAsymptoticsSweepConfig {
    pub d_grid: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub mu_over_sqrt_d: f64,
    pub seed: u64,
    /// Optionally also train an online-SGD readout to convergence at each
    /// grid point and record its measured error.
    pub simulate: Option<RfSimSettings>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnrComparisonConfig {
    pub snr_grid: Vec<f64>,
    pub k: usize,
    pub lr: f64,
    pub kappa: f64,
    pub rf_dim: usize,
    pub rf_gamma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverparamSweepConfig {
    pub dim: usize,
    pub sigma2: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub sigma0: f64,
    pub k_grid: Vec<usize>,
    pub n_seeds: usize,
    pub steps: usize,
    pub eval_set_size: usize,
    pub oracle_factor: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MasterCurveConfig {
    pub points: Vec<(usize, f64)>,
    pub sigma_grid: Vec<f64>,
    pub mu_over_sqrt_d: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    OdeRun(OdeRunConfig),
    Sgd2lnn(Sgd2lnnConfig),
    SgdRf(SgdRfConfig),
    FixedPointSweep(FixedPointSweepConfig),
    RfAsymptoticsSweep(RfAsymptoticsSweepConfig),
    SnrComparison(SnrComparisonConfig),
    OverparamSweep(OverparamSweepConfig),
    MasterCurve(MasterCurveConfig),
}

impl ExperimentConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentConfig::OdeRun(_) => "ode_run",
            ExperimentConfig::Sgd2lnn(_) => "sgd_2lnn",
            ExperimentConfig::SgdRf(_) => "sgd_rf",
            ExperimentConfig::FixedPointSweep(_) => "fixed_point_sweep",
            ExperimentConfig::RfAsymptoticsSweep(_) => "rf_asymptotics_sweep",
            ExperimentConfig::SnrComparison(_) => "snr_comparison",
            ExperimentConfig::OverparamSweep(_) => "overparam_sweep",
            ExperimentConfig::MasterCurve(_) => "master_curve",
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).context("failed to parse experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::FixedPointSweep(c) => {
                if c.kappa_grid.is_empty() {
                    bail!("kappa_grid must not be empty");
                }
                if c.seeds.is_empty() {
                    bail!("seeds must be explicit and non-empty");
                }
            }
            ExperimentConfig::RfAsymptoticsSweep(c) => {
                if c.d_grid.is_empty() || c.gamma_grid.is_empty() || c.sigma_grid.is_empty() {
                    bail!("rf_asymptotics_sweep grids must not be empty");
                }
            }
            ExperimentConfig::SnrComparison(c) => {
                if c.snr_grid.is_empty() {
                    bail!("snr_grid must not be empty");
                }
            }
            ExperimentConfig::OverparamSweep(c) => {
                if c.k_grid.is_empty() {
                    bail!("k_grid must not be empty");
                }
                if c.n_seeds == 0 {
                    bail!("n_seeds must be >= 1");
                }
            }
            ExperimentConfig::MasterCurve(c) => {
                if c.points.is_empty() || c.sigma_grid.is_empty() {
                    bail!("master_curve grids must not be empty");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Stable hex digest of the canonicalized (sorted-key) JSON encoding.
    pub fn canonical_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hash_value(&value, &mut hasher);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(16);
        for b in digest.iter().take(8) {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

fn hash_value(v: &Value, hasher: &mut Sha256) {
    match v {
        Value::Null => hasher.update(b"n"),
        Value::Bool(b) => hasher.update(if *b { b"t" } else { b"f" }),
        Value::Number(n) => {
            hasher.update(b"#");
            hasher.update(n.to_string().as_bytes());
        }
        Value::String(s) => {
            hasher.update(b"s");
            hasher.update(s.as_bytes());
        }
        Value::Array(items) => {
            hasher.update(b"[");
            for item in items {
                hash_value(item, hasher);
                hasher.update(b",");
            }
            hasher.update(b"]");
        }
        Value::Object(map) => {
            hasher.update(b"{");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for k in keys {
                hasher.update(k.as_bytes());
                hasher.update(b":");
                hash_value(&map[k], hasher);
                hasher.update(b",");
            }
            hasher.update(b"}");
        }
    }
}

/// Per-grid-point seed: a stable hash of the master seed and the cell's
/// coordinate key, so seeds survive grid reordering.
pub fn derive_seed(master: u64, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(b"/");
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_under_key_order() {
        let a = ExperimentConfig::from_json(
            r#"{"kind":"master_curve","points":[[800,2.0]],"sigma_grid":[0.3],"mu_over_sqrt_d":1.0,"seed":7}"#,
        )
        .unwrap();
        let b = ExperimentConfig::from_json(
            r#"{"seed":7,"mu_over_sqrt_d":1.0,"sigma_grid":[0.3],"points":[[800,2.0]],"kind":"master_curve"}"#,
        )
        .unwrap();
        assert_eq!(a.canonical_hash(), b.canonical_hash());
    }

    #[test]
    fn derive_seed_stable_and_distinct() {
        let s1 = derive_seed(42, "d=800/gamma=2/sigma=0.3");
        let s2 = derive_seed(42, "d=800/gamma=2/sigma=0.3");
        let s3 = derive_seed(42, "d=800/gamma=2/sigma=0.4");
        assert_eq!(s1, s2);
        assert_ne!(s1, s3);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"kind":"master_curve","points":[],"sigma_grid":[0.3],"mu_over_sqrt_d":1.0,"seed":7}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn mu_spec_resolution() {
        assert_eq!(MuSpec::Value(3.0).resolve(100), 3.0);
        assert_eq!(
            MuSpec::Scaled { scale: 1.0, power: 0.5 }.resolve(100),
            10.0
        );
        assert_eq!(MuSpec::Scaled { scale: 2.0, power: 1.0 }.resolve(50), 100.0);
    }

    #[test]
    fn mixed_xor_labels_by_sign_product() {
        let cfg = MixtureConfig::MixedXor {
            dim: 4,
            mu1: MuSpec::Value(1.0),
            mu2: MuSpec::Value(2.0),
            sigma2: 0.1,
        };
        let spec = cfg.build().unwrap();
        assert_eq!(spec.n_clusters(), 4);
        for c in spec.clusters() {
            let product = c.mean_scaled[0] * c.mean_scaled[1];
            assert_eq!(product > 0.0, c.label == Label::Plus);
        }
    }
}
