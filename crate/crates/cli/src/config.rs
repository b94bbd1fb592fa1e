//! Scenario files: TOML with unit-suffixed quantities and no unknown keys.

use std::path::{Path, PathBuf};

use photonfb::cavity::{to_sim_params, FrequencyConvention, QedParams, Rate};
use photonfb::ensemble::EnsembleSpec;
use photonfb::fock::HilbertConfig;
use photonfb::sme::{InitialState, Integrator, SimParams};
use serde::Deserialize;

use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub simulation: SimulationSection,
    pub qed: Option<QedSection>,
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Take `M`, `kappa` and `eta` from `[qed]`, with the clock in units of `1/M`.
    #[serde(default)]
    pub rates_from_qed: bool,
    pub measurement_strength: Option<String>,
    pub kappa: Option<String>,
    pub efficiency: Option<f64>,
    pub gain: f64,
    pub n_star: usize,
    pub dt: String,
    pub t_final: String,
    pub n_max: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_initial")]
    pub initial_state: String,
    #[serde(default = "default_true")]
    pub feedback: bool,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub snapshot_times: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateEntry {
    pub value: String,
    pub convention: FrequencyConvention,
}

impl RateEntry {
    fn parse(&self) -> Result<Rate, String> {
        Ok(Rate::new(parse_quantity(&self.value, Dimension::Frequency)?, self.convention))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QedSection {
    pub probe_power: String,
    pub probe_wavelength: String,
    pub detuning: RateEntry,
    pub gamma: RateEntry,
    pub sample_radius: String,
    pub g0: RateEntry,
    pub intensity_ratio: f64,
    pub atom_number: f64,
    pub kappa: RateEntry,
    pub efficiency: f64,
    pub cavity_length: Option<String>,
    pub finesse: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: usize,
    pub master_seed: Option<u64>,
    pub kappa_sweep: Option<Vec<String>>,
    pub decimation: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub q_grid_points: Option<usize>,
}

fn default_initial() -> String {
    "vacuum".into()
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

/// `vacuum`, `number:<m>` or `coherent:<re>[,<im>]`.
pub fn parse_state(text: &str) -> Result<InitialState<f64>, String> {
    let text = text.trim();
    if text == "vacuum" {
        return Ok(InitialState::Vacuum);
    }
    if let Some(m) = text.strip_prefix("number:") {
        let m = m.trim().parse().map_err(|_| format!("bad photon number in \"{text}\""))?;
        return Ok(InitialState::Number(m));
    }
    if let Some(amp) = text.strip_prefix("coherent:") {
        let parts: Vec<&str> = amp.split(',').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad amplitude in \"{text}\""));
        return match parts.as_slice() {
            [re] => Ok(InitialState::coherent(num(re)?, 0.0)),
            [re, im] => Ok(InitialState::coherent(num(re)?, num(im)?)),
            _ => Err(format!("bad coherent amplitude \"{text}\"")),
        };
    }
    Err(format!("unknown state \"{text}\"; expected vacuum, number:<m> or coherent:<re>[,<im>]"))
}

impl QedSection {
    pub fn to_params(&self) -> Result<QedParams, String> {
        let p = QedParams {
            probe_power: parse_quantity(&self.probe_power, Dimension::Power)?,
            probe_wavelength: parse_quantity(&self.probe_wavelength, Dimension::Length)?,
            detuning: self.detuning.parse()?,
            gamma: self.gamma.parse()?,
            sample_radius: parse_quantity(&self.sample_radius, Dimension::Length)?,
            g0: self.g0.parse()?,
            intensity_ratio: self.intensity_ratio,
            atom_number: self.atom_number,
            kappa: self.kappa.parse()?,
            efficiency: self.efficiency,
            cavity_length: self
                .cavity_length
                .as_deref()
                .map(|l| parse_quantity(l, Dimension::Length))
                .transpose()?,
            finesse: self.finesse,
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.sim_params()?;
        if let Some(q) = &cfg.qed {
            q.to_params()?;
        }
        if cfg.ensemble.is_some() {
            cfg.ensemble_spec()?;
        }
        Ok(cfg)
    }

    pub fn qed_params(&self) -> Result<QedParams, String> {
        self.qed.as_ref().ok_or("scenario has no [qed] section")?.to_params()
    }

    pub fn sim_params(&self) -> Result<SimParams<f64>, String> {
        let s = &self.simulation;
        let mut p = SimParams::new(1.0, s.gain, s.n_star);
        p.dt = parse_quantity(&s.dt, Dimension::SimTime)?;
        p.t_final = parse_quantity(&s.t_final, Dimension::SimTime)?;
        if let Some(n_max) = s.n_max {
            p.hilbert = HilbertConfig::new(n_max).map_err(|e| e.to_string())?;
        }
        p.seed = s.seed;
        p.initial_state = parse_state(&s.initial_state)?;
        p.feedback_enabled = s.feedback;
        p.integrator = s.integrator;
        p.record_stride = s.record_stride;
        p.snapshot_times = s
            .snapshot_times
            .iter()
            .map(|t| parse_quantity(t, Dimension::SimTime))
            .collect::<Result<_, _>>()?;
        if s.rates_from_qed {
            if s.measurement_strength.is_some() || s.kappa.is_some() || s.efficiency.is_some() {
                return Err("rates_from_qed = true conflicts with explicit measurement_strength, kappa or efficiency".into());
            }
            let qed = self.qed_params()?;
            p = to_sim_params(&qed, s.n_star, &p).map_err(|e| e.to_string())?;
        } else {
            let m = s.measurement_strength.as_deref().ok_or("simulation.measurement_strength is required")?;
            p.measurement_strength = parse_quantity(m, Dimension::SimRate)?;
            p.kappa = match s.kappa.as_deref() {
                Some(k) => parse_quantity(k, Dimension::SimRate)?,
                None => 0.0,
            };
            p.efficiency = s.efficiency.unwrap_or(1.0);
        }
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec<f64>, String> {
        let e = self.ensemble.as_ref().ok_or("scenario has no [ensemble] section")?;
        let base = self.sim_params()?;
        let mut spec = EnsembleSpec::new(base, e.n_traj);
        if let Some(seed) = e.master_seed {
            spec.master_seed = seed;
        }
        if let Some(d) = e.decimation {
            spec.decimation = d;
        }
        spec.kappa_sweep = e
            .kappa_sweep
            .as_ref()
            .map(|ks| ks.iter().map(|k| parse_quantity(k, Dimension::SimRate)).collect::<Result<Vec<_>, _>>())
            .transpose()?;
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.directory.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
