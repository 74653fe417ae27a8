//! Run configuration: the TOML schema, cross-field validation and conversion
//! into core objects. Unknown keys are errors, every constraint violation is
//! named, and a serialized config re-parses to an identical value so the
//! config hash embedded in result files pins the exact run.

use cbf_core::field::{to_spectral, PhysicalField, SpectralField};
use cbf_core::grid::{DealiasFraction, FluidParams, GridSpec};
use cbf_core::integrator::SolverConfig;
use cbf_core::noise::{NoiseFamily, NoiseModel};
use cbf_core::ops::leray_project;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub fluid: FluidSection,
    pub initial: InitialSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub modes_per_axis: usize,
    /// Dealias fraction as an exact rational, e.g. "2/3".
    #[serde(default = "default_dealias")]
    pub dealias: String,
}

fn default_dealias() -> String {
    "2/3".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidSection {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    /// `amp (sin x cos y, −cos x sin y)` — divergence-free by construction.
    TaylorGreen { amplitude: f64 },
    /// Random divergence-free field with the given H norm.
    Random { seed: u64, h_norm: f64 },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// One of "additive", "diagonal_linear", "affine".
    pub family: String,
    pub weights: Vec<f64>,
    /// Moment exponent recorded with the hypothesis constants.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub t_horizon: f64,
    /// Time step as the dyadic fraction `dt = T/2^dt_log2`.
    pub dt_log2: u32,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Wong-Zakai levels for the convergence studies.
    pub levels: Vec<u32>,
    pub samples: usize,
    pub master_seed: u64,
    /// Dyadic resolution of the sampled Brownian paths.
    pub path_level: u32,
    #[serde(default = "default_ctrl_mesh")]
    pub control_mesh_log2: u32,
    #[serde(default = "default_verify_trials")]
    pub verify_trials: usize,
    /// Grid for the random-pair inequality batteries.
    #[serde(default = "default_verify_grid")]
    pub verify_grid: usize,
    #[serde(default = "default_skeleton_seeds")]
    pub skeleton_seeds: usize,
    #[serde(default = "default_audit_samples")]
    pub audit_samples: usize,
}

fn default_ctrl_mesh() -> u32 {
    3
}

fn default_verify_trials() -> usize {
    10_000
}

fn default_verify_grid() -> usize {
    16
}

fn default_skeleton_seeds() -> usize {
    8
}

fn default_audit_samples() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Default output directory; overridden by `--out`, falls back to the
    /// `CBF_OUT_DIR` environment variable and then `out`.
    pub dir: Option<String>,
}

impl RunConfig {
    /// The default benchmark: 2D torus, N = 32, μ = 1, α = 0.1, β = 1, r = 3,
    /// diagonal linear noise on eight modes, T = 1/2, dt = T/2¹²,
    /// levels 3..=8, 32 samples.
    pub fn default_benchmark() -> Self {
        RunConfig {
            grid: GridSection {
                modes_per_axis: 32,
                dealias: default_dealias(),
            },
            fluid: FluidSection {
                mu: 1.0,
                alpha: 0.1,
                beta: 1.0,
                r: 3.0,
            },
            initial: InitialSection::TaylorGreen { amplitude: 0.5 },
            noise: NoiseSection {
                family: "diagonal_linear".to_string(),
                weights: vec![0.4, 0.3, 0.2, 0.15, 0.1, 0.08, 0.06, 0.05],
                gamma: default_gamma(),
            },
            solver: SolverSection {
                t_horizon: 0.5,
                dt_log2: 12,
                record_stride: default_stride(),
            },
            experiment: ExperimentSection {
                levels: vec![3, 4, 5, 6, 7, 8],
                samples: 32,
                master_seed: 42,
                path_level: 12,
                control_mesh_log2: default_ctrl_mesh(),
                verify_trials: default_verify_trials(),
                verify_grid: default_verify_grid(),
                skeleton_seeds: default_skeleton_seeds(),
                audit_samples: default_audit_samples(),
            },
            output: OutputSection::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialized form.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn parse_dealias(&self) -> Result<DealiasFraction, ConfigError> {
        let parts: Vec<&str> = self.grid.dealias.split('/').collect();
        let bad = || {
            ConfigError(format!(
                "grid.dealias must be a rational like \"2/3\", got {:?}",
                self.grid.dealias
            ))
        };
        match parts.as_slice() {
            [n] => {
                let num: u32 = n.trim().parse().map_err(|_| bad())?;
                DealiasFraction::new(num, 1).map_err(|e| ConfigError(e.to_string()))
            }
            [n, d] => {
                let num: u32 = n.trim().parse().map_err(|_| bad())?;
                let den: u32 = d.trim().parse().map_err(|_| bad())?;
                DealiasFraction::new(num, den).map_err(|e| ConfigError(e.to_string()))
            }
            _ => Err(bad()),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::with_dealias(self.grid.modes_per_axis, self.parse_dealias()?)
            .map_err(|e| ConfigError(format!("grid: {e}")))
    }

    pub fn fluid_params(&self) -> Result<FluidParams, ConfigError> {
        FluidParams::new(self.fluid.mu, self.fluid.alpha, self.fluid.beta, self.fluid.r)
            .map_err(|e| ConfigError(format!("fluid: {e}")))
    }

    pub fn noise_family(&self) -> Result<NoiseFamily, ConfigError> {
        match self.noise.family.as_str() {
            "additive" => Ok(NoiseFamily::Additive),
            "diagonal_linear" => Ok(NoiseFamily::DiagonalLinear),
            "affine" => Ok(NoiseFamily::Affine),
            other => err(format!(
                "noise.family must be one of additive, diagonal_linear, affine; got {other:?}"
            )),
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel, ConfigError> {
        NoiseModel::new(
            self.noise_family()?,
            self.noise.weights.clone(),
            self.grid_spec()?,
            self.noise.gamma,
        )
        .map_err(|e| ConfigError(format!("noise: {e}")))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        SolverConfig::new(
            self.solver.t_horizon,
            self.solver.dt_log2,
            self.solver.record_stride,
        )
        .map_err(|e| ConfigError(format!("solver: {e}")))
    }

    pub fn initial_field(&self) -> Result<SpectralField, ConfigError> {
        let grid = self.grid_spec()?;
        Ok(match self.initial {
            InitialSection::TaylorGreen { amplitude } => {
                leray_project(&to_spectral(&PhysicalField::from_fn(grid, |x, y| {
                    (amplitude * x.sin() * y.cos(), -amplitude * x.cos() * y.sin())
                })))
            }
            InitialSection::Random { seed, h_norm } => {
                cbf_core::experiments::random_field(grid, seed, h_norm)
            }
            InitialSection::Zero => SpectralField::zero(grid),
        })
    }

    /// Cross-field constraint checks with named messages.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid_spec()?;
        self.fluid_params()?;
        self.noise_model()?;
        self.solver_config()?;
        let e = &self.experiment;
        if e.levels.is_empty() {
            return err("experiment.levels must be non-empty");
        }
        if e.levels.contains(&0) {
            return err("experiment.levels entries must be >= 1");
        }
        let max_level = *e.levels.iter().max().expect("non-empty");
        if max_level as usize > self.noise.weights.len() {
            return err(format!(
                "experiment.levels: level {} exceeds noise dimension {} (level n uses noise modes 1..=n)",
                max_level,
                self.noise.weights.len()
            ));
        }
        if max_level > e.path_level {
            return err(format!(
                "experiment.levels: level {} exceeds experiment.path_level {}",
                max_level, e.path_level
            ));
        }
        if e.path_level > 26 {
            return err("experiment.path_level must be <= 26");
        }
        if self.solver.dt_log2 < max_level {
            return err(format!(
                "solver.dt_log2 ({}) must be >= the finest level ({}) so dt divides sigma",
                self.solver.dt_log2, max_level
            ));
        }
        if self.solver.dt_log2 < e.control_mesh_log2 {
            return err(format!(
                "solver.dt_log2 ({}) must be >= experiment.control_mesh_log2 ({})",
                self.solver.dt_log2, e.control_mesh_log2
            ));
        }
        if e.samples == 0 {
            return err("experiment.samples must be >= 1");
        }
        if e.skeleton_seeds == 0 {
            return err("experiment.skeleton_seeds must be >= 1");
        }
        if e.verify_trials == 0 {
            return err("experiment.verify_trials must be >= 1");
        }
        GridSpec::new(e.verify_grid).map_err(|e| ConfigError(format!("experiment.verify_grid: {e}")))?;
        Ok(())
    }
}

/// Parses and validates a config from TOML text. Unknown keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig =
        toml::from_str(text).map_err(|e| ConfigError(format!("config parse: {e}")))?;
    config.validate()?;
    Ok(config)
}
