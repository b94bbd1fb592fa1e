//! Measurement strength and feasibility figures from cavity-QED parameters.
//!
//! ```text
//! M = (P_b / hbar w_b) [ 3 N Gamma lambda_b^2 / (4 pi^2 r^2 Delta_b) * g0^2 / (g0^2 + Omega^2) ]^2
//! Omega = Gamma sqrt(I / 2 I_sat)
//! ```
//!
//! Every rate carries a [`FrequencyConvention`]. Rates are converted to
//! angular frequency (rad/s) before evaluation and all outputs are angular.
//! Because `M` depends on rates only through the ratios `Gamma / Delta_b` and
//! `g0 / Omega`, reading every input under one convention gives the same `M`
//! either way; the factor-of-2pi ambiguity only bites when the table mixes
//! conventions. [`FeasibilityReport::alternatives`] carries both uniform
//! readings next to the declared one.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::HilbertConfig;
use crate::scalar::{lit, Real};
use crate::sme::SimParams;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyConvention {
    /// Cycles per second (Hz).
    Ordinary,
    /// Radians per second.
    Angular,
}

impl fmt::Display for FrequencyConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ordinary => "ordinary",
            Self::Angular => "angular",
        })
    }
}

/// A rate together with the convention its number was quoted in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub convention: FrequencyConvention,
}

impl Rate {
    pub const fn new(value: f64, convention: FrequencyConvention) -> Self {
        Self { value, convention }
    }

    pub const fn ordinary(hz: f64) -> Self {
        Self::new(hz, FrequencyConvention::Ordinary)
    }

    pub const fn angular(rad_per_s: f64) -> Self {
        Self::new(rad_per_s, FrequencyConvention::Angular)
    }

    /// Value in rad/s.
    pub fn to_angular(self) -> f64 {
        match self.convention {
            FrequencyConvention::Ordinary => self.value * TAU,
            FrequencyConvention::Angular => self.value,
        }
    }

    /// Value in Hz.
    pub fn to_ordinary(self) -> f64 {
        match self.convention {
            FrequencyConvention::Ordinary => self.value,
            FrequencyConvention::Angular => self.value / TAU,
        }
    }

    pub fn in_convention(self, convention: FrequencyConvention) -> f64 {
        match convention {
            FrequencyConvention::Ordinary => self.to_ordinary(),
            FrequencyConvention::Angular => self.to_angular(),
        }
    }

    /// The same quoted number reinterpreted under `convention`.
    pub fn reinterpret(self, convention: FrequencyConvention) -> Self {
        Self::new(self.value, convention)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.convention {
            FrequencyConvention::Ordinary => write!(f, "{} Hz", self.value),
            FrequencyConvention::Angular => write!(f, "{} rad/s", self.value),
        }
    }
}

/// Natural linewidth and wavelength of an atomic transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicLine {
    pub name: &'static str,
    pub gamma: Rate,
    pub wavelength: f64,
}

/// Cesium D2 line, `Gamma = 2 pi x 5.22 MHz`.
pub const CESIUM_D2: AtomicLine = AtomicLine {
    name: "Cs D2",
    gamma: Rate::ordinary(5.22e6),
    wavelength: 852.35e-9,
};

/// Cavity-QED parameters in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QedParams {
    /// Probe power (W).
    pub probe_power: f64,
    /// Probe wavelength (m).
    pub probe_wavelength: f64,
    pub detuning: Rate,
    /// Atomic spontaneous emission rate.
    pub gamma: Rate,
    /// Atomic sample radius (m).
    pub sample_radius: f64,
    /// Single-photon coupling.
    pub g0: Rate,
    /// Drive intensity in units of the saturation intensity.
    pub intensity_ratio: f64,
    pub atom_number: f64,
    pub kappa: Rate,
    pub efficiency: f64,
    /// Cavity length (m).
    pub cavity_length: Option<f64>,
    pub finesse: Option<f64>,
}

impl QedParams {
    /// Table values with `N = 1e6` and the cesium D2 linewidth. The detuning
    /// and the cavity decay rate are read as angular, the coupling and the
    /// linewidth as ordinary frequencies; this is the only assignment that
    /// lands near the quoted `M ~ 2.5 MHz`.
    pub fn table1() -> Self {
        Self {
            probe_power: 1e-6,
            probe_wavelength: CESIUM_D2.wavelength,
            detuning: Rate::angular(2e9),
            gamma: CESIUM_D2.gamma,
            sample_radius: 110e-6,
            g0: Rate::ordinary(200e3),
            intensity_ratio: 0.25,
            atom_number: 1e6,
            kappa: Rate::angular(12e3),
            efficiency: 0.8,
            cavity_length: Some(0.04),
            finesse: Some(3e5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("probe power", self.probe_power),
            ("probe wavelength", self.probe_wavelength),
            ("gamma", self.gamma.value),
            ("sample radius", self.sample_radius),
            ("g0", self.g0.value),
            ("atom number", self.atom_number),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidQed(format!("{name} must be positive, got {v}")));
            }
        }
        if self.detuning.value == 0.0 {
            return Err(Error::ZeroDetuning);
        }
        if !self.detuning.value.is_finite() {
            return Err(Error::InvalidQed("detuning must be finite".into()));
        }
        for (name, v) in [("intensity ratio", self.intensity_ratio), ("kappa", self.kappa.value)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidQed(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidQed(format!("efficiency must lie in (0, 1], got {}", self.efficiency)));
        }
        for (name, v) in [("cavity length", self.cavity_length), ("finesse", self.finesse)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidQed(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Every rate reinterpreted under one convention.
    pub fn uniform(&self, convention: FrequencyConvention) -> Self {
        Self {
            detuning: self.detuning.reinterpret(convention),
            gamma: self.gamma.reinterpret(convention),
            g0: self.g0.reinterpret(convention),
            kappa: self.kappa.reinterpret(convention),
            ..self.clone()
        }
    }

    /// Probe angular frequency `2 pi c / lambda_b`.
    pub fn probe_angular_frequency(&self) -> f64 {
        TAU * SPEED_OF_LIGHT / self.probe_wavelength
    }
}

/// `Omega = Gamma sqrt(I / 2 I_sat)`, in the convention of `gamma`.
pub fn rabi_frequency(gamma: Rate, intensity_ratio: f64) -> Rate {
    Rate::new(gamma.value * (intensity_ratio / 2.0).sqrt(), gamma.convention)
}

/// Measurement strength in s^-1 (angular convention).
pub fn measurement_strength(p: &QedParams) -> Result<f64> {
    p.validate()?;
    let gamma = p.gamma.to_angular();
    let g0 = p.g0.to_angular();
    let omega = rabi_frequency(p.gamma, p.intensity_ratio).to_angular();
    let delta = p.detuning.to_angular();
    let photon_flux = p.probe_power / (HBAR * p.probe_angular_frequency());
    let saturation = g0 * g0 / (g0 * g0 + omega * omega);
    let bracket = 3.0 * p.atom_number * gamma * p.probe_wavelength.powi(2)
        / (4.0 * PI * PI * p.sample_radius.powi(2) * delta)
        * saturation;
    Ok(photon_flux * bracket * bracket)
}

/// `sqrt(N) g0^2 / (Gamma kappa)`; infinite when `kappa = 0`.
pub fn strong_coupling(p: &QedParams) -> f64 {
    let g0 = p.g0.to_angular();
    p.atom_number.sqrt() * g0 * g0 / (p.gamma.to_angular() * p.kappa.to_angular())
}

/// Cavity linewidth `FSR / F = c / (2 L F)` as an ordinary frequency.
pub fn kappa_from_geometry(length: f64, finesse: f64) -> Result<Rate> {
    if !(length > 0.0 && finesse > 0.0) {
        return Err(Error::InvalidQed(format!(
            "cavity length and finesse must be positive, got {length} and {finesse}"
        )));
    }
    Ok(Rate::ordinary(SPEED_OF_LIGHT / (2.0 * length * finesse)))
}

/// Feasibility figures under one reading of the rate conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionVariant {
    pub label: String,
    /// s^-1.
    pub m: f64,
    pub m_over_kappa: f64,
    pub strong_coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Measurement strength (s^-1).
    pub m: f64,
    pub m_over_kappa: f64,
    pub strong_coupling: f64,
    /// Probe angular frequency (rad/s).
    pub omega_b: f64,
    /// Drive Rabi frequency (rad/s).
    pub rabi: f64,
    /// Cavity decay rate as used (s^-1).
    pub kappa: f64,
    /// Linewidth implied by length and finesse, when both are given (Hz).
    pub kappa_geometry_hz: Option<f64>,
    /// Uniform-convention readings of the same numbers.
    pub alternatives: Vec<ConventionVariant>,
}

impl FeasibilityReport {
    /// Flat `key = value` block.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("M".to_string(), format!("{:.6e}", self.m)),
            ("M_over_kappa".to_string(), format!("{:.6e}", self.m_over_kappa)),
            ("strong_coupling".to_string(), format!("{:.6e}", self.strong_coupling)),
            ("omega_b".to_string(), format!("{:.6e}", self.omega_b)),
            ("Omega".to_string(), format!("{:.6e}", self.rabi)),
            ("kappa".to_string(), format!("{:.6e}", self.kappa)),
        ];
        if let Some(k) = self.kappa_geometry_hz {
            out.push(("kappa_geometry_hz".into(), format!("{k:.6e}")));
        }
        for v in &self.alternatives {
            out.push((format!("M[{}]", v.label), format!("{:.6e}", v.m)));
            out.push((format!("M_over_kappa[{}]", v.label), format!("{:.6e}", v.m_over_kappa)));
            out.push((format!("strong_coupling[{}]", v.label), format!("{:.6e}", v.strong_coupling)));
        }
        out
    }
}

fn variant(label: &str, p: &QedParams) -> Result<ConventionVariant> {
    let m = measurement_strength(p)?;
    Ok(ConventionVariant {
        label: label.to_string(),
        m,
        m_over_kappa: m / p.kappa.to_angular(),
        strong_coupling: strong_coupling(p),
    })
}

pub fn feasibility(p: &QedParams) -> Result<FeasibilityReport> {
    let declared = variant("declared", p)?;
    let alternatives = vec![
        variant("all_ordinary", &p.uniform(FrequencyConvention::Ordinary))?,
        variant("all_angular", &p.uniform(FrequencyConvention::Angular))?,
    ];
    for v in std::iter::once(&declared).chain(&alternatives) {
        log::info!(
            "{}: M = {:.4e} /s, M/kappa = {:.4e}, sqrt(N) g0^2/(Gamma kappa) = {:.4e}",
            v.label,
            v.m,
            v.m_over_kappa,
            v.strong_coupling
        );
    }
    let kappa_geometry_hz = match (p.cavity_length, p.finesse) {
        (Some(l), Some(f)) => Some(kappa_from_geometry(l, f)?.to_ordinary()),
        _ => None,
    };
    Ok(FeasibilityReport {
        m: declared.m,
        m_over_kappa: declared.m_over_kappa,
        strong_coupling: declared.strong_coupling,
        omega_b: p.probe_angular_frequency(),
        rabi: rabi_frequency(p.gamma, p.intensity_ratio).to_angular(),
        kappa: p.kappa.to_angular(),
        kappa_geometry_hz,
        alternatives,
    })
}

/// Simulation parameters on the `M t` clock: `M_sim = 1`, `kappa_sim =
/// kappa / M`, efficiency from `p`. Step size, horizon, gain, seed and the
/// remaining numerics come from `numerics`, already in units of `1/M`.
pub fn to_sim_params<T: Real>(p: &QedParams, n_star: usize, numerics: &SimParams<T>) -> Result<SimParams<T>> {
    let m = measurement_strength(p)?;
    let mut out = numerics.clone();
    out.measurement_strength = T::one();
    out.kappa = lit(p.kappa.to_angular() / m);
    out.efficiency = lit(p.efficiency);
    if out.n_star != n_star {
        out.n_star = n_star;
        out.hilbert = out.hilbert.max_with(HilbertConfig::for_target(n_star));
    }
    out.validate()?;
    Ok(out)
}
