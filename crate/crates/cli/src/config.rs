//! Run configurations: one JSON object per run with a `command` field.
//!
//! The command string selects the config shape; everything else the run
//! needs lives in the same file, so a config plus a seed reproduces a run
//! exactly. Command line flags override only the seed and the output root.

use std::path::PathBuf;

use rvlab_core::model::ModelConfig;
use rvlab_core::model::{PayoffSpec, VolSpec};
use rvlab_core::rates::{default_case1_plan, default_case2_plan, default_strong_plan, ExperimentPlan};
use rvlab_core::Error;
use serde::Deserialize;

/// Runner failure, carrying the exit-code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation or config file: exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure inside a module call; invalid-input kinds map to exit code 2,
    /// numerical kinds to exit code 3.
    #[error(transparent)]
    Core(#[from] Error),
    /// Artifact or filesystem failure: exit code 3.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(err) => match err {
                Error::InvalidInput(_) | Error::Dimension(_) | Error::Format(_) => 2,
                _ => 3,
            },
            CliError::Io(_) => 3,
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Kernel identity and scaling suite.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsConfig {
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    /// Dyadic exponents k for the delta-K suite spacings 2^-k.
    #[serde(default = "default_k_levels")]
    pub levels: Vec<u32>,
}

fn default_k_levels() -> Vec<u32> {
    (3..=9).collect()
}

/// Joint exact sampler dump.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub h: f64,
    pub t: f64,
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    /// Also dump the covariance and its Cholesky factor in the binary
    /// matrix format.
    #[serde(default)]
    pub write_factor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeakCase {
    Case1,
    Case2,
}

/// Weak-rate experiment; the plan defaults to the documented benchmark for
/// the chosen case.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakRateConfig {
    pub case: WeakCase,
    pub plan: Option<ExperimentPlan>,
    pub threads: Option<usize>,
}

/// Strong-rate experiment; the plan defaults to the documented benchmark.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongRateConfig {
    pub plan: Option<ExperimentPlan>,
    pub threads: Option<usize>,
}

/// Perturbation direction for the curve derivative estimators.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionConfig {
    /// The kernel direction K(., t), evaluated at left endpoints.
    #[default]
    Singular,
    /// An explicit bounded direction: one value per sub-grid node.
    Curve(Vec<f64>),
}

/// Conditional PPDE evaluation at (t, x, omega).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpdeConfig {
    pub model: ModelConfig,
    /// Evaluation time; the curve lives on [t, model.t].
    pub t: f64,
    pub x: f64,
    /// Forward curve values at the sub-grid nodes, inline.
    pub omega: Option<Vec<f64>>,
    /// Forward curve values from a CSV file with header `s,omega`.
    pub omega_csv: Option<PathBuf>,
    #[serde(default)]
    pub direction: DirectionConfig,
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    /// Also run the PPDE residual decomposition on the same curve.
    #[serde(default)]
    pub residual: bool,
}

/// Telescopic decomposition check; defaults reproduce the documented rough
/// benchmark at the coarsest resolution.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelescopeConfig {
    pub model: Option<ModelConfig>,
    #[serde(default = "default_coarse_n")]
    pub n: usize,
    #[serde(default = "default_nested_paths")]
    pub m_outer: usize,
    #[serde(default = "default_nested_paths")]
    pub m_inner: usize,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
}

fn default_coarse_n() -> usize {
    2
}

fn default_nested_paths() -> usize {
    2000
}

/// The rough benchmark model used by the telescope default: quadratic payoff
/// with exponential volatility at H = 0.3 and negative leverage.
pub fn benchmark_model() -> ModelConfig {
    ModelConfig {
        x0: 0.2,
        zeta: 0.0,
        rho: -0.5,
        h: 0.3,
        t: 1.0,
        vol: VolSpec::Exponential { nu: 0.3 },
        payoff: PayoffSpec::Quadratic { a: 1.0, b: 0.0, c: 0.0 },
    }
}

/// A parsed run configuration of any command.
#[derive(Debug)]
pub enum RunConfig {
    Kernels(KernelsConfig),
    Sample(SampleConfig),
    WeakRate(WeakRateConfig),
    StrongRate(StrongRateConfig),
    Ppde(PpdeConfig),
    Telescope(TelescopeConfig),
}

impl RunConfig {
    /// Parses the raw config bytes: a JSON object whose `command` field
    /// selects the shape of the remaining fields.
    pub fn parse(raw: &[u8]) -> Result<Self, CliError> {
        let mut value: serde_json::Value = serde_json::from_slice(raw)
            .map_err(|e| usage(format!("config is not valid JSON: {e}")))?;
        let object = value
            .as_object_mut()
            .ok_or_else(|| usage("config must be a JSON object"))?;
        let command = match object.remove("command") {
            Some(serde_json::Value::String(name)) => name,
            Some(_) => return Err(usage("`command` must be a string")),
            None => return Err(usage("config needs a `command` field")),
        };
        let config = match command.as_str() {
            "kernels" => RunConfig::Kernels(from_value(value)?),
            "sample" => RunConfig::Sample(from_value(value)?),
            "weak-rate" => RunConfig::WeakRate(from_value(value)?),
            "strong-rate" => RunConfig::StrongRate(from_value(value)?),
            "ppde" => RunConfig::Ppde(from_value(value)?),
            "telescope" => RunConfig::Telescope(from_value(value)?),
            other => {
                return Err(usage(format!(
                    "unknown command `{other}`; expected kernels | sample | weak-rate | \
                     strong-rate | ppde | telescope"
                )))
            }
        };
        Ok(config)
    }

    pub fn command_name(&self) -> &'static str {
        match self {
            RunConfig::Kernels(_) => "kernels",
            RunConfig::Sample(_) => "sample",
            RunConfig::WeakRate(_) => "weak-rate",
            RunConfig::StrongRate(_) => "strong-rate",
            RunConfig::Ppde(_) => "ppde",
            RunConfig::Telescope(_) => "telescope",
        }
    }

    /// Fills in default plans and checks everything the owning modules do
    /// not check themselves. Call before reading the seed: the effective
    /// seed of a defaulted plan comes from the default.
    pub fn resolve(&mut self) -> Result<(), CliError> {
        match self {
            RunConfig::Kernels(cfg) => {
                if cfg.levels.is_empty() {
                    return Err(usage("kernels needs a non-empty `levels` list"));
                }
                if cfg.levels.len() < 3 {
                    return Err(usage("kernels needs at least 3 levels for a slope"));
                }
                if cfg.levels.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(usage("kernels `levels` must be strictly increasing"));
                }
                if *cfg.levels.last().unwrap() > 40 {
                    return Err(usage("kernels `levels` beyond 40 underflow the spacing"));
                }
            }
            RunConfig::Sample(cfg) => {
                if cfg.m == 0 {
                    return Err(usage("sample needs at least one path (m >= 1)"));
                }
                if cfg.write_factor && cfg.n > usize::from(u16::MAX) {
                    return Err(usage("the binary matrix format caps the grid at 65535 steps"));
                }
            }
            RunConfig::WeakRate(cfg) => {
                if cfg.plan.is_none() {
                    cfg.plan = Some(match cfg.case {
                        WeakCase::Case1 => default_case1_plan(),
                        WeakCase::Case2 => default_case2_plan(),
                    });
                }
            }
            RunConfig::StrongRate(cfg) => {
                if cfg.plan.is_none() {
                    cfg.plan = Some(default_strong_plan());
                }
            }
            RunConfig::Ppde(cfg) => {
                if cfg.m == 0 {
                    return Err(usage("ppde needs at least one path (m >= 1)"));
                }
                if cfg.omega.is_some() == cfg.omega_csv.is_some() {
                    return Err(usage("ppde needs exactly one of `omega` or `omega_csv`"));
                }
            }
            RunConfig::Telescope(cfg) => {
                if cfg.model.is_none() {
                    cfg.model = Some(benchmark_model());
                }
            }
        }
        Ok(())
    }

    /// The seed the run will use, after `resolve`.
    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Kernels(cfg) => cfg.seed,
            RunConfig::Sample(cfg) => cfg.seed,
            RunConfig::WeakRate(cfg) => cfg.plan.as_ref().map_or(0, |p| p.seed),
            RunConfig::StrongRate(cfg) => cfg.plan.as_ref().map_or(0, |p| p.seed),
            RunConfig::Ppde(cfg) => cfg.seed,
            RunConfig::Telescope(cfg) => cfg.seed,
        }
    }

    /// Applies the `--seed` override. For the rate experiments the seed
    /// lives inside the plan, so `resolve` must have run first.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            RunConfig::Kernels(cfg) => cfg.seed = seed,
            RunConfig::Sample(cfg) => cfg.seed = seed,
            RunConfig::WeakRate(cfg) => {
                if let Some(plan) = cfg.plan.as_mut() {
                    plan.seed = seed;
                }
            }
            RunConfig::StrongRate(cfg) => {
                if let Some(plan) = cfg.plan.as_mut() {
                    plan.seed = seed;
                }
            }
            RunConfig::Ppde(cfg) => cfg.seed = seed,
            RunConfig::Telescope(cfg) => cfg.seed = seed,
        }
    }

    pub fn threads(&self) -> Option<usize> {
        match self {
            RunConfig::Kernels(cfg) => cfg.threads,
            RunConfig::Sample(cfg) => cfg.threads,
            RunConfig::WeakRate(cfg) => cfg.threads,
            RunConfig::StrongRate(cfg) => cfg.threads,
            RunConfig::Ppde(cfg) => cfg.threads,
            RunConfig::Telescope(cfg) => cfg.threads,
        }
    }
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| usage(format!("config: {e}")))
}
