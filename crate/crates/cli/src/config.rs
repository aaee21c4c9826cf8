//! Experiment configuration (JSON, `schema_version` 1).
//!
//! Units: MeV for deuteron energies, radians for angles and time steps in MeV⁻¹.

use std::path::{Path, PathBuf};

use expval::sqpe::{BiasMode, StopRule};
use expval::{Observable, State};
use num_complex::Complex;
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OaCurve,
    SqpeLinear,
    SqpeCubic,
    ConditionsFig1,
    ConditionsFig8,
    NoiseBudget,
    ReadoutDemo,
    TrotterScan,
    VqeDemo,
    ChannelPtm,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::OaCurve => "oa_curve",
            Self::SqpeLinear => "sqpe_linear",
            Self::SqpeCubic => "sqpe_cubic",
            Self::ConditionsFig1 => "conditions_fig1",
            Self::ConditionsFig8 => "conditions_fig8",
            Self::NoiseBudget => "noise_budget",
            Self::ReadoutDemo => "readout_demo",
            Self::TrotterScan => "trotter_scan",
            Self::VqeDemo => "vqe_demo",
            Self::ChannelPtm => "channel_ptm",
        }
    }
}

/// `"deuteron"`, a path to an observable JSON file, or an inline observable.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Named(String),
    Inline(Observable),
}

impl Default for ObservableSpec {
    fn default() -> Self {
        Self::Named("deuteron".into())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    /// Only `"ground"` is accepted.
    Named(String),
    /// `R_y(θ)|0…0⟩` on the first qubit.
    Angle { theta: f64 },
    Amplitudes { amplitudes: Vec<f64> },
    ComplexAmplitudes { amplitudes_complex: Vec<[f64; 2]> },
}

impl Default for StateSpec {
    fn default() -> Self {
        Self::Named("ground".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauName {
    Opt,
    HalfOpt,
    InverseNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TauChoice {
    Named(TauName),
    Value(f64),
}

impl TauChoice {
    pub fn label(&self) -> String {
        match self {
            Self::Named(TauName::Opt) => "opt".into(),
            Self::Named(TauName::HalfOpt) => "half_opt".into(),
            Self::Named(TauName::InverseNorm) => "inverse_norm".into(),
            Self::Value(v) => format!("{v}"),
        }
    }
}

/// Where `⟨O^{2K}⟩` comes from in the loose conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Oracle,
    /// `λ_φ^{2K} + Δ‖Ō‖₁^{2K}` with `Δ` the family's overlap defect.
    FidelityBound,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Readout flip probabilities; defaults to the five device qubits.
    pub readout_p: Option<Vec<f64>>,
    /// Calibration shots per run; 0 means the rate is known exactly.
    pub calibration_shots: Option<u64>,
    /// Calibration already paid for in the precomputed budget mode.
    pub precomputed_calibration_shots: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub observable: ObservableSpec,
    #[serde(default)]
    pub state: StateSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_target")]
    pub target_rel_eps: f64,
    pub shot_cap: Option<u64>,
    /// `oa_curve`: `[start, end, points]` of the log schedule.
    pub schedule: Option<(u64, u64, usize)>,
    /// `sqpe_linear`.
    pub taus: Option<Vec<TauChoice>>,
    /// `sqpe_linear`: field-mode eigenvalue bound replacing the oracle `|m₁|` by `λ_u³`.
    pub lambda_u: Option<f64>,
    pub block_size: Option<u64>,
    pub min_blocks: Option<usize>,
    pub bias_modes: Option<Vec<BiasMode>>,
    pub stop_rule: Option<StopRule>,
    pub tau_max: Option<f64>,
    pub noise: Option<NoiseSpec>,
    pub grid: Option<usize>,
    pub k_max: Option<u32>,
    pub x_min: Option<f64>,
    pub moment_source: Option<MomentSource>,
    /// `trotter_scan`.
    pub orders: Option<Vec<u32>>,
    pub trotter_taus: Option<Vec<f64>>,
    pub eps_list: Option<Vec<f64>>,
    /// `channel_ptm`.
    pub channel_taus: Option<Vec<f64>>,
    pub shots_per_eval: Option<u64>,
    pub max_iterations: Option<u64>,
    /// Shots per run in `readout_demo`.
    pub shots: Option<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_target() -> f64 {
    0.01
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "must not be empty"));
        }
        if !(self.target_rel_eps > 0.0 && self.target_rel_eps.is_finite()) {
            return Err(config_err("target_rel_eps", "must be positive"));
        }
        if self.shot_cap == Some(0) {
            return Err(config_err("shot_cap", "must be at least 1"));
        }
        if let Some(b) = self.block_size {
            if b < 2 || b % 2 != 0 {
                return Err(config_err("block_size", "must be even and at least 2"));
            }
        }
        if let Some((start, end, points)) = self.schedule {
            if start == 0 || end <= start || points < 2 {
                return Err(config_err("schedule", "need 0 < start < end and at least 2 points"));
            }
        }
        if let Some(g) = self.grid {
            if g < 16 {
                return Err(config_err("grid", "resolution must be at least 16"));
            }
        }
        if self.k_max == Some(0) {
            return Err(config_err("k_max", "must be at least 1"));
        }
        if self.shots_per_eval == Some(0) {
            return Err(config_err("shots_per_eval", "must be at least 1"));
        }
        if let Some(taus) = &self.taus {
            if taus.iter().any(|t| matches!(t, TauChoice::Value(v) if !(*v > 0.0))) {
                return Err(config_err("taus", "explicit steps must be positive"));
            }
        }
        if self.experiment == ExperimentKind::ConditionsFig8 && self.moment_source.is_none() {
            return Err(config_err("moment_source", "conditions_fig8 needs an explicit moment provenance (oracle or fidelity_bound)"));
        }
        if let Some(n) = &self.noise {
            if let Some(ps) = &n.readout_p {
                if ps.is_empty() || ps.iter().any(|p| !(*p >= 0.0 && *p < 0.5)) {
                    return Err(config_err("noise.readout_p", "rates must lie in [0, 0.5)"));
                }
            }
        }
        Ok(())
    }

    pub fn is_deuteron(&self) -> bool {
        matches!(&self.observable, ObservableSpec::Named(n) if n == "deuteron")
    }

    pub fn is_ground(&self) -> bool {
        matches!(&self.state, StateSpec::Named(n) if n == "ground")
    }

    /// Deuteron ground state at 1% relative error: the setting the landmark checks refer to.
    pub fn is_benchmark(&self) -> bool {
        self.is_deuteron() && self.is_ground() && (self.target_rel_eps - 0.01).abs() < 1e-12
    }

    pub fn resolve_observable(&self, base: &Path) -> Result<Observable, CliError> {
        match &self.observable {
            ObservableSpec::Inline(o) => Ok(o.clone()),
            ObservableSpec::Named(n) if n == "deuteron" => Ok(crate::deuteron::hamiltonian()),
            ObservableSpec::Named(path) => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| config_err("observable", format!("cannot read {}: {e}", full.display())))?;
                serde_json::from_str(&text).map_err(|e| config_err("observable", format!("{}: {e}", full.display())))
            }
        }
    }

    pub fn resolve_state(&self, obs: &Observable) -> Result<State, CliError> {
        let state = match &self.state {
            StateSpec::Named(n) if n == "ground" => return Ok(obs.oracle().ground_state()),
            StateSpec::Named(other) => return Err(config_err("state", format!("unknown state {other:?}"))),
            StateSpec::Angle { theta } => {
                let mut amps = vec![Complex::new(0.0, 0.0); obs.dim()];
                amps[0] = Complex::new((theta / 2.0).cos(), 0.0);
                amps[obs.dim() / 2] = Complex::new((theta / 2.0).sin(), 0.0);
                State::new(amps)
            }
            StateSpec::Amplitudes { amplitudes } => State::normalized(amplitudes.iter().map(|&a| Complex::new(a, 0.0)).collect()),
            StateSpec::ComplexAmplitudes { amplitudes_complex } => {
                State::normalized(amplitudes_complex.iter().map(|&[re, im]| Complex::new(re, im)).collect())
            }
        };
        let state = state.map_err(|e| config_err("state", e))?;
        if state.dim() != obs.dim() {
            return Err(config_err("state", format!("dimension {} does not match observable dimension {}", state.dim(), obs.dim())));
        }
        Ok(state)
    }
}
