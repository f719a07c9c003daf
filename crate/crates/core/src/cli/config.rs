//! Experiment configuration.
//!
//! The file is TOML restricted to the keys below; anything else is rejected.
//! Every key is optional and falls back to the reference scenario.
//!
//! ```toml
//! system.a = [[1.05, 0.0], [1.0, 0.9]]   # row-major
//! system.c = [[1.0, 0.0], [0.0, 1.0]]
//! system.q = [[1.0, 0.0], [0.0, 1.0]]
//! system.r = [[0.8, 0.0], [0.0, 0.8]]
//! system.sample_period = 1.0             # seconds, diagnostics only
//!
//! channel.alpha = 5.0                    # idle -> busy rate, 1/s
//! channel.beta = 20.0                    # busy -> idle rate, 1/s
//!
//! sensing.bandwidth = 2e6                # samples per second
//! sensing.eps_d = 1.2
//! sensing.snr_db = -3.0                  # eps_f = eps_d / (1 + snr) unless eps_f is set
//! # sensing.eps_f = 0.8
//! sensing.tau_max = 0.02                 # seconds
//! sensing.t_x = 0.05                     # seconds
//!
//! energy.e_s = 100.0                     # per second of sensing
//! energy.e_tx = 100.0                    # per packet
//!
//! target.gamma_ref = 0.7                 # P_bar = average bound at (gamma_ref, n_ref)
//! target.n_ref = 6
//! # target.p_bar = [[20.0, 0.0], [0.0, 300.0]]   # explicit target instead
//! target.order = "loewner"               # or "trace"
//!
//! sweep.variable = "idle_probability"    # or "energy_ratio"
//! sweep.values = [0.3, 0.4, 0.5]
//!
//! monte_carlo.trials = 1000
//! monte_carlo.horizon = 1000
//! monte_carlo.master_seed = 0
//!
//! output.path = "out.csv"
//! output.format = "csv"                  # or "json"
//! ```

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::channel::ChannelModel;
use crate::dynamics::LinearSystem;
use crate::error::{Error, Result};
use crate::estimation::{self, ConstraintOrder};
use crate::linalg;
use crate::optimizer::ProblemSpec;
use crate::sensing::{eps_f_from_snr, EnergyParams, SensingConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    channel: RawChannel,
    #[serde(default)]
    sensing: RawSensing,
    #[serde(default)]
    energy: RawEnergy,
    #[serde(default)]
    target: RawTarget,
    sweep: Option<RawSweep>,
    #[serde(default)]
    monte_carlo: RawMonteCarlo,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    a: Option<Vec<Vec<f64>>>,
    c: Option<Vec<Vec<f64>>>,
    q: Option<Vec<Vec<f64>>>,
    r: Option<Vec<Vec<f64>>>,
    sample_period: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensing {
    bandwidth: Option<f64>,
    eps_d: Option<f64>,
    eps_f: Option<f64>,
    snr_db: Option<f64>,
    tau_max: Option<f64>,
    t_x: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    e_s: Option<f64>,
    e_tx: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    p_bar: Option<Vec<Vec<f64>>>,
    gamma_ref: Option<f64>,
    n_ref: Option<usize>,
    order: Option<ConstraintOrder>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: SweepVariable,
    values: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonteCarlo {
    trials: Option<usize>,
    horizon: Option<usize>,
    master_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
    format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Target `p_I`; `beta` is set to `alpha p_I / (1 - p_I)`.
    IdleProbability,
    /// `e_tx / e_s` with `e_s` held fixed.
    EnergyRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn default_idle_probability() -> Self {
        Self {
            variable: SweepVariable::IdleProbability,
            values: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95],
        }
    }

    pub fn default_energy_ratio() -> Self {
        Self {
            variable: SweepVariable::EnergyRatio,
            values: vec![0.5, 1.0, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub trials: usize,
    pub horizon: usize,
    pub master_seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            horizon: 1000,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: ProblemSpec,
    pub sample_period: f64,
    pub sweep: Option<Sweep>,
    pub monte_carlo: MonteCarloConfig,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
}

fn matrix(key: &str, rows: Option<Vec<Vec<f64>>>, default: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match rows {
        None => Ok(default.clone()),
        Some(rows) => linalg::from_rows(&rows).ok_or_else(|| Error::Config(format!("{key}: rows have unequal lengths"))),
    }
}

fn invariant_err(e: Error) -> Error {
    match e {
        Error::Invariant { invariant, detail } => Error::Config(format!("invariant `{invariant}` violated: {detail}")),
        other => Error::Config(other.to_string()),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let plant = LinearSystem::reference_plant();

    let sys = LinearSystem::new(
        matrix("system.a", raw.system.a, plant.a())?,
        matrix("system.c", raw.system.c, plant.c())?,
        matrix("system.q", raw.system.q, plant.q())?,
        matrix("system.r", raw.system.r, plant.r())?,
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    if let Some(fail) = sys.validate().first_failure() {
        return Err(Error::Config(format!(
            "invariant `system.{}` violated: {}",
            fail.name, fail.evidence
        )));
    }
    let sample_period = raw.system.sample_period.unwrap_or(1.0);
    if !(sample_period > 0.0) {
        return Err(Error::Config(format!(
            "invariant `system.sample_period_positive` violated: {sample_period}"
        )));
    }

    let ch = ChannelModel::new(raw.channel.alpha.unwrap_or(5.0), raw.channel.beta.unwrap_or(20.0))
        .map_err(invariant_err)?;

    let eps_d = raw.sensing.eps_d.unwrap_or(1.2);
    let eps_f = match raw.sensing.eps_f {
        Some(v) => v,
        None => eps_f_from_snr(eps_d, raw.sensing.snr_db.unwrap_or(-3.0)),
    };
    let sense = SensingConfig::new(
        0.0,
        raw.sensing.tau_max.unwrap_or(0.02),
        raw.sensing.bandwidth.unwrap_or(2e6),
        eps_d,
        eps_f,
        raw.sensing.t_x.unwrap_or(0.05),
    )
    .map_err(invariant_err)?;

    let energy =
        EnergyParams::new(raw.energy.e_s.unwrap_or(100.0), raw.energy.e_tx.unwrap_or(100.0)).map_err(invariant_err)?;

    let order = raw.target.order.unwrap_or_default();
    let p_bar = match raw.target.p_bar {
        Some(rows) => {
            if raw.target.gamma_ref.is_some() || raw.target.n_ref.is_some() {
                return Err(Error::Config(
                    "target.p_bar conflicts with target.gamma_ref / target.n_ref".into(),
                ));
            }
            matrix("target.p_bar", Some(rows), plant.q())?
        }
        None => {
            let g = raw.target.gamma_ref.unwrap_or(0.7);
            let n = raw.target.n_ref.unwrap_or(6);
            estimation::average_bound_default(&sys, g, n).map_err(|e| {
                Error::Config(format!("target: cannot evaluate average bound at gamma={g}, n={n}: {e}"))
            })?
        }
    };
    let spec = ProblemSpec::new(sys, ch, sense, energy, p_bar, order).map_err(invariant_err)?;

    let sweep = match raw.sweep {
        None => None,
        Some(s) => {
            if s.values.is_empty() {
                return Err(Error::Config("sweep.values is empty".into()));
            }
            let bad = s.values.iter().find(|&&v| match s.variable {
                SweepVariable::IdleProbability => !(v > 0.0 && v < 1.0),
                SweepVariable::EnergyRatio => !(v >= 0.0 && v.is_finite()),
            });
            if let Some(v) = bad {
                return Err(Error::Config(format!("sweep.values: {v} out of range for {:?}", s.variable)));
            }
            Some(Sweep {
                variable: s.variable,
                values: s.values,
            })
        }
    };

    let defaults = MonteCarloConfig::default();
    let monte_carlo = MonteCarloConfig {
        trials: raw.monte_carlo.trials.unwrap_or(defaults.trials),
        horizon: raw.monte_carlo.horizon.unwrap_or(defaults.horizon),
        master_seed: raw.monte_carlo.master_seed.unwrap_or(defaults.master_seed),
    };
    if monte_carlo.trials == 0 || monte_carlo.horizon == 0 {
        return Err(Error::Config(
            "invariant `monte_carlo.positive_trials_and_horizon` violated".into(),
        ));
    }

    Ok(ExperimentConfig {
        spec,
        sample_period,
        sweep,
        monte_carlo,
        output_path: raw.output.path,
        format: raw.output.format.unwrap_or_default(),
    })
}
