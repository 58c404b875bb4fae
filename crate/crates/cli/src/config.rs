//! Flat TOML configuration shared by all subcommands.
//!
//! Every key is optional; unknown keys are rejected. Example:
//!
//! ```toml
//! dims = [20, 20, 20]
//! blocks = [3, 3, 3]
//! snr_db = inf
//! sample_ratio = 0.15
//! seed = 1
//! lambda = 1.0
//! backend = "als"
//! swept = "snr_db"
//! values = [-5.0, 10.0, 25.0]
//! trials = 5
//! methods = ["BTD_ALS", "CPD_ALS"]
//! ```

use std::path::Path;

use hbtc_core::admm::{Init, SolverConfig, SvtThreshold};
use hbtc_core::synth::{CsiParams, GenConfig, Scenario};
use hbtc_core::{Backend, BlockStructure, Method, SweepSpec, SweptVariable};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    // data
    pub dims: Option<[usize; 3]>,
    pub blocks: Option<Vec<usize>>,
    pub snr_db: Option<f64>,
    pub sample_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub scenario: Option<String>,
    pub angle_spread_deg: Option<f64>,
    pub max_angle_deg: Option<f64>,
    pub doppler_spread: Option<f64>,
    // solver
    pub lambda: Option<f64>,
    pub beta0: Option<f64>,
    pub rho: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tol: Option<f64>,
    pub backend: Option<String>,
    pub svt_threshold: Option<String>,
    pub overwrite_observed: Option<bool>,
    // sweep
    pub swept: Option<String>,
    pub values: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub record_timing: Option<bool>,
    pub profile: Option<String>,
}

/// Command-line overrides, applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub lambda: Option<f64>,
    pub beta0: Option<f64>,
    pub rho: Option<f64>,
    pub iters: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("invalid config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        self.seed = o.seed.or(self.seed);
        self.backend = o.backend.clone().or(self.backend.take());
        self.lambda = o.lambda.or(self.lambda);
        self.beta0 = o.beta0.or(self.beta0);
        self.rho = o.rho.or(self.rho);
        self.max_iterations = o.iters.or(self.max_iterations);
    }

    fn is_csi(&self) -> Result<bool, CliError> {
        match self.scenario.as_deref() {
            None | Some("generic") => Ok(false),
            Some("csi") | Some("csi_like") => Ok(true),
            Some(other) => Err(field_error("scenario", format!("expected `generic` or `csi`, got `{other}`"))),
        }
    }

    pub fn gen_config(&self) -> Result<GenConfig, CliError> {
        let mut g = if self.is_csi()? {
            let defaults = CsiParams::default();
            GenConfig {
                scenario: Scenario::CsiLike(CsiParams {
                    angle_spread_deg: self.angle_spread_deg.unwrap_or(defaults.angle_spread_deg),
                    max_angle_deg: self.max_angle_deg.unwrap_or(defaults.max_angle_deg),
                    doppler_spread: self.doppler_spread.unwrap_or(defaults.doppler_spread),
                }),
                ..GenConfig::csi_default()
            }
        } else {
            for (set, name) in [
                (self.angle_spread_deg.is_some(), "angle_spread_deg"),
                (self.max_angle_deg.is_some(), "max_angle_deg"),
                (self.doppler_spread.is_some(), "doppler_spread"),
            ] {
                if set {
                    return Err(field_error(name, "only valid with scenario = \"csi\""));
                }
            }
            GenConfig::default()
        };
        if let Some([i, j, k]) = self.dims {
            g.dims = (i, j, k);
        }
        if let Some(b) = &self.blocks {
            g.structure = BlockStructure::new(b.clone()).map_err(CliError::from)?;
        }
        g.snr_db = self.snr_db.unwrap_or(g.snr_db);
        g.sample_ratio = self.sample_ratio.unwrap_or(g.sample_ratio);
        g.seed = self.seed.unwrap_or(g.seed);
        g.validate()?;
        Ok(g)
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let d = SolverConfig::default();
        let backend = match &self.backend {
            Some(b) => b.parse::<Backend>()?,
            None => d.backend,
        };
        let svt_threshold = match self.svt_threshold.as_deref() {
            None | Some("half_inverse_beta") => SvtThreshold::HalfInverseBeta,
            Some("inverse_beta") => SvtThreshold::InverseBeta,
            Some(other) => {
                return Err(field_error(
                    "svt_threshold",
                    format!("expected `half_inverse_beta` or `inverse_beta`, got `{other}`"),
                ))
            }
        };
        let s = SolverConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            beta0: self.beta0.unwrap_or(d.beta0),
            rho_penalty: self.rho.unwrap_or(d.rho_penalty),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tol_rel_change: self.tol.unwrap_or(d.tol_rel_change),
            backend,
            seed: self.seed.unwrap_or(d.seed),
            init: Init::Random,
            svt_threshold,
            overwrite_observed: self.overwrite_observed.unwrap_or(d.overwrite_observed),
        };
        s.validate()?;
        Ok(s)
    }

    /// Block structure to fit in `complete`.
    pub fn structure(&self) -> Result<BlockStructure, CliError> {
        Ok(self.gen_config()?.structure)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let swept: SweptVariable = self.swept.as_deref().unwrap_or("snr_db").parse()?;
        let mut gen = self.gen_config()?;
        // The sampling sweep is run at 20 dB unless stated otherwise.
        if swept == SweptVariable::SampleRatio && self.snr_db.is_none() && !self.is_csi()? {
            gen.snr_db = 20.0;
        }
        let values = match (&self.values, swept) {
            (Some(v), _) => v.clone(),
            (None, SweptVariable::SnrDb) => vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            (None, SweptVariable::SampleRatio) => vec![0.03, 0.05, 0.07, 0.09, 0.11, 0.13, 0.15],
            (None, SweptVariable::Lambda) => vec![0.01, 0.1, 1.0, 10.0, 100.0],
        };
        let default_trials = match self.profile.as_deref() {
            None | Some("full") => 50,
            Some("ci") => 5,
            Some(other) => return Err(field_error("profile", format!("expected `full` or `ci`, got `{other}`"))),
        };
        let methods = match &self.methods {
            Some(m) => m.iter().map(|s| s.parse::<Method>()).collect::<Result<Vec<_>, _>>()?,
            None => Method::ALL.to_vec(),
        };
        let spec = SweepSpec {
            swept,
            values,
            trials: self.trials.unwrap_or(default_trials),
            gen,
            solver: self.solver_config()?,
            methods,
            lambda_grid: self.lambda_grid.clone(),
            record_timing: self.record_timing.unwrap_or(true),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn field_error(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("invalid configuration `{field}`: {reason}"))
}
