//! TOML experiment configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, ensure, Context};
use fire_core::baselines::Propagation;
use fire_core::benchmarks::DEFAULT_RATIOS;
use fire_core::{AugmentationMode, GpConfig, GpFactory, KernelFamily, KernelSpec, QuantileLevels, SharedFactory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::external::{ExternalFactory, SidecarCommand, DEFAULT_TIMEOUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    Fire,
    FireRecursive,
    Ar1,
    Resgp,
    Nargp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Gp,
    External,
}

fn default_true() -> bool {
    true
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// Label written to the results.
    pub name: String,
    pub kind: AlgorithmKind,
    /// Residual features for FIRE.
    #[serde(default)]
    pub mode: AugmentationMode,
    /// Quantile levels for FIRE; deciles when absent.
    #[serde(default)]
    pub quantiles: Option<QuantileLevels>,
    #[serde(default)]
    pub kernel: KernelFamily,
    #[serde(default = "default_true")]
    pub ard: bool,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    /// How NARGP passes lower-fidelity predictions upward.
    #[serde(default)]
    pub propagation: Propagation,
    /// Learner for every stage unless overridden below.
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub base_backend: Option<Backend>,
    #[serde(default)]
    pub residual_backend: Option<Backend>,
    /// Sidecar executable; falls back to `FIRE_MF_SIDECAR`.
    #[serde(default)]
    pub sidecar: Option<PathBuf>,
    #[serde(default)]
    pub sidecar_args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
}

impl AlgorithmConfig {
    pub fn new(name: &str, kind: AlgorithmKind) -> Self {
        Self {
            name: name.into(),
            kind,
            mode: AugmentationMode::default(),
            quantiles: None,
            kernel: KernelFamily::default(),
            ard: true,
            iterations: None,
            restarts: None,
            propagation: Propagation::default(),
            backend: Backend::default(),
            base_backend: None,
            residual_backend: None,
            sidecar: None,
            sidecar_args: Vec::new(),
            timeout_seconds: default_timeout(),
        }
    }

    pub fn levels(&self) -> QuantileLevels {
        self.quantiles.clone().unwrap_or_default()
    }

    fn uses_external(&self) -> bool {
        [Some(self.backend), self.base_backend, self.residual_backend].contains(&Some(Backend::External))
    }

    fn gp_config(&self) -> GpConfig {
        let mut config = GpConfig {
            kernel: KernelSpec {
                family: self.kernel,
                ard: self.ard,
            },
            ..GpConfig::default()
        };
        if let Some(n) = self.iterations {
            config.iterations = n;
        }
        if let Some(n) = self.restarts {
            config.restarts = n;
        }
        config
    }

    fn sidecar_command(&self) -> anyhow::Result<SidecarCommand> {
        let command = match &self.sidecar {
            Some(path) => SidecarCommand::new(path),
            None => SidecarCommand::from_env().with_context(|| {
                format!("{} uses an external backend but neither `sidecar` nor FIRE_MF_SIDECAR is set", self.name)
            })?,
        };
        Ok(command
            .args(self.sidecar_args.clone())
            .timeout(Duration::from_secs_f64(self.timeout_seconds)))
    }

    pub fn factory(&self, backend: Backend) -> anyhow::Result<SharedFactory> {
        Ok(match backend {
            Backend::Gp => Arc::new(GpFactory::new(self.gp_config())),
            Backend::External => Arc::new(ExternalFactory::new(self.sidecar_command()?)),
        })
    }

    /// Learners for the base and residual stages.
    pub fn stage_factories(&self) -> anyhow::Result<(SharedFactory, SharedFactory)> {
        let base = self.factory(self.base_backend.unwrap_or(self.backend))?;
        let residual = self.factory(self.residual_backend.unwrap_or(self.backend))?;
        Ok((base, residual))
    }
}

fn default_folds() -> usize {
    5
}

fn default_trials() -> usize {
    10
}

fn default_ratios() -> Vec<f64> {
    DEFAULT_RATIOS.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog names or paths to multi-fidelity CSV files.
    pub problems: Vec<String>,
    pub algorithms: Vec<AlgorithmConfig>,
    /// High-fidelity budgets in percent.
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Draw each fidelity's inputs from the next lower fidelity's.
    #[serde(default)]
    pub nested: bool,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub allow_custom_ratios: bool,
    /// Overrides the lower-fidelity sizes of catalog problems.
    #[serde(default)]
    pub lf_sizes: Option<Vec<usize>>,
    /// Fixes the high-fidelity size instead of deriving it from the ratio.
    #[serde(default)]
    pub n_hf: Option<usize>,
    #[serde(default)]
    pub test_size: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text).context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a configuration file; a relative `output` resolves against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut config = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        if config.output.is_relative() {
            if let Some(dir) = path.parent() {
                config.output = dir.join(&config.output);
            }
        }
        for p in &mut config.problems {
            if is_csv(p) && Path::new(p).is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p).display().to_string();
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(!self.problems.is_empty(), "no problems configured");
        ensure!(!self.algorithms.is_empty(), "no algorithms configured");
        ensure!(!self.ratios.is_empty(), "no ratios configured");
        ensure!(self.folds >= 1, "folds must be at least 1");
        ensure!(self.trials >= 1, "trials must be at least 1");
        for &r in &self.ratios {
            ensure!(r > 0.0 && r.is_finite(), "ratio {r} must be positive");
            if !self.allow_custom_ratios && !DEFAULT_RATIOS.contains(&r) {
                bail!("ratio {r} is not one of {DEFAULT_RATIOS:?}; set allow_custom_ratios = true to use it");
            }
        }
        let mut names = HashSet::new();
        for a in &self.algorithms {
            ensure!(!a.name.is_empty(), "algorithm names must not be empty");
            ensure!(names.insert(&a.name), "duplicate algorithm name '{}'", a.name);
            ensure!(a.timeout_seconds > 0.0, "{}: timeout must be positive", a.name);
            if a.uses_external() {
                a.sidecar_command()?;
            }
        }
        if self.problems.iter().any(|p| is_csv(p)) {
            ensure!(self.folds >= 2, "CSV problems hold out one fold for testing and need folds >= 2");
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, ignoring the worker count.
    pub fn hash(&self) -> String {
        let canonical = Self {
            workers: 0,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("configs serialise");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn is_csv(problem: &str) -> bool {
    problem.ends_with(".csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
problems = ["forrester", "currin"]
ratios = [5, 10]
folds = 2
trials = 3
seed = 7

[[algorithms]]
name = "fire-gp"
kind = "fire"
mode = "mean_variance"

[[algorithms]]
name = "nargp-mc"
kind = "nargp"
propagation = { kind = "monte_carlo", samples = 20 }
"#;

    #[test]
    fn parses_and_defaults() {
        let c = RunConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(c.ratios, vec![5.0, 10.0]);
        assert_eq!((c.folds, c.trials, c.seed, c.nested), (2, 3, 7, false));
        assert_eq!(c.algorithms[0].mode, AugmentationMode::MeanVariance);
        assert_eq!(c.algorithms[1].propagation, Propagation::MonteCarlo { samples: 20 });
        assert_eq!(c.algorithms[1].timeout_seconds, 300.0);
        assert_eq!(c.output, PathBuf::from("results"));

        let defaults = RunConfig::from_toml(
            "problems = [\"booth\"]\n[[algorithms]]\nname = \"ar1\"\nkind = \"ar1\"\n",
        )
        .unwrap();
        assert_eq!((defaults.folds, defaults.trials), (5, 10));
        assert_eq!(defaults.ratios, DEFAULT_RATIOS.to_vec());
    }

    #[test]
    fn rejects_bad_configs() {
        let with = |extra: &str| RunConfig::from_toml(&format!("{extra}\n{}", EXAMPLE.replace("folds = 2", "")));
        assert!(with("folds = 0").is_err());
        let custom = RunConfig::from_toml(&EXAMPLE.replace("[5, 10]", "[7]"));
        assert!(custom.unwrap_err().to_string().contains("allow_custom_ratios"));
        assert!(RunConfig::from_toml(&format!("allow_custom_ratios = true\n{}", EXAMPLE.replace("[5, 10]", "[7]"))).is_ok());
        assert!(RunConfig::from_toml(&EXAMPLE.replace("nargp-mc", "fire-gp")).is_err());
        assert!(RunConfig::from_toml(&format!("{EXAMPLE}\nbogus = 1\n")).is_err());
    }

    #[test]
    fn hash_ignores_workers_only() {
        let a = RunConfig::from_toml(EXAMPLE).unwrap();
        let b = RunConfig { workers: 8, ..a.clone() };
        let c = RunConfig { seed: 8, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
