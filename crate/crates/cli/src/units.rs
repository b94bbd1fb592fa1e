//! Unit-suffixed quantities, e.g. `"1 uW"`, `"852.35 nm"`, `"12 kHz"`.
//!
//! A bare number is rejected for every dimensional quantity.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Power,
    Length,
    Frequency,
    /// Simulation time in units of the `M t` clock (`t`).
    SimTime,
    /// Simulation rate in units of `1/t`.
    SimRate,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Power => "power (W, mW, uW, nW)",
            Self::Length => "length (m, cm, mm, um, nm)",
            Self::Frequency => "frequency (Hz, kHz, MHz, GHz)",
            Self::SimTime => "simulation time (t)",
            Self::SimRate => "simulation rate (/t)",
        })
    }
}

fn scale(dim: Dimension, unit: &str) -> Option<f64> {
    use Dimension::*;
    Some(match (dim, unit) {
        (Power, "W") => 1.0,
        (Power, "mW") => 1e-3,
        (Power, "uW" | "µW") => 1e-6,
        (Power, "nW") => 1e-9,
        (Length, "m") => 1.0,
        (Length, "cm") => 1e-2,
        (Length, "mm") => 1e-3,
        (Length, "um" | "µm") => 1e-6,
        (Length, "nm") => 1e-9,
        (Frequency, "Hz") => 1.0,
        (Frequency, "kHz") => 1e3,
        (Frequency, "MHz") => 1e6,
        (Frequency, "GHz") => 1e9,
        (SimTime, "t") => 1.0,
        (SimRate, "/t") => 1.0,
        _ => return None,
    })
}

/// Parses `"<number> <unit>"` into SI (or simulation) units.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace() || c == '/' || (c.is_alphabetic() && c != 'e' && c != 'E') || c == 'µ')
        .ok_or_else(|| format!("\"{text}\" has no unit; expected {dim}"))?;
    let (number, unit) = text.split_at(split);
    let unit = unit.trim();
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| format!("\"{text}\": cannot parse \"{}\" as a number", number.trim()))?;
    if !value.is_finite() {
        return Err(format!("\"{text}\" is not finite"));
    }
    let factor = scale(dim, unit).ok_or_else(|| format!("\"{text}\": unknown unit \"{unit}\" for {dim}"))?;
    Ok(value * factor)
}
