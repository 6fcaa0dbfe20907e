//! Embedded model presets, so closure runs, simulations, and the acceptance
//! suite need no hand-authored input files.
//!
//! Quantum presets bundle a model, a measurement scheme, and an initial
//! state; classical presets are polynomial filtering models.

use crate::classical::ClassicalModel;
use crate::io::{self, IoError};
use crate::operators::Operator;
use crate::superops::{MeasurementScheme, ModelSpec};

pub struct QuantumPreset {
    pub model: ModelSpec<f64>,
    pub scheme: MeasurementScheme<f64>,
    pub rho0: Operator<f64>,
}

macro_rules! quantum_preset {
    ($name:literal) => {
        (
            include_str!(concat!("../presets/", $name, ".model.json")),
            include_str!(concat!("../presets/", $name, ".scheme.json")),
            include_str!(concat!("../presets/", $name, ".rho0.json")),
        )
    };
}

pub const QUANTUM_PRESETS: &[&str] = &[
    "qubit-decay",
    "qubit-driven",
    "qubit-shifted",
    "oscillator-trunc-10",
    "oscillator-trunc-16",
];

pub const CLASSICAL_PRESETS: &[&str] = &["kalman-1d", "cubic-sensor", "rotational-2d"];

/// Load a quantum preset by name; `None` for unknown names.
pub fn quantum(name: &str) -> Option<Result<QuantumPreset, IoError>> {
    let (model, scheme, rho0) = match name {
        "qubit-decay" => quantum_preset!("qubit-decay"),
        "qubit-driven" => quantum_preset!("qubit-driven"),
        "qubit-shifted" => quantum_preset!("qubit-shifted"),
        "oscillator-trunc-10" => quantum_preset!("oscillator-trunc-10"),
        "oscillator-trunc-16" => quantum_preset!("oscillator-trunc-16"),
        _ => return None,
    };
    Some(load_quantum(model, scheme, rho0))
}

fn load_quantum(model: &str, scheme: &str, rho0: &str) -> Result<QuantumPreset, IoError> {
    let model = io::parse_model(model)?;
    let scheme = io::parse_scheme(scheme)?;
    let rows: io::MatrixJson = serde_json::from_str(rho0)?;
    let rho0 = io::matrix_from_json(&rows, "rho0")?;
    Ok(QuantumPreset { model, scheme, rho0 })
}

/// Load a classical preset by name; `None` for unknown names.
pub fn classical(name: &str) -> Option<Result<ClassicalModel, IoError>> {
    let text = match name {
        "kalman-1d" => include_str!("../presets/kalman-1d.classical.json"),
        "cubic-sensor" => include_str!("../presets/cubic-sensor.classical.json"),
        "rotational-2d" => include_str!("../presets/rotational-2d.classical.json"),
        _ => return None,
    };
    Some(io::parse_classical_model(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_load() {
        for name in QUANTUM_PRESETS {
            let p = quantum(name).unwrap().unwrap();
            assert!(p.scheme.is_complete(p.model.channels()), "{name} scheme incomplete");
            assert!((p.rho0.trace().re - 1.0).abs() < 1e-12, "{name} rho0 trace");
        }
        for name in CLASSICAL_PRESETS {
            classical(name).unwrap().unwrap();
        }
        assert!(quantum("nope").is_none());
        assert!(classical("nope").is_none());
    }
}
