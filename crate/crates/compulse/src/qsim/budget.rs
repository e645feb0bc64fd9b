// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Per-source error budget for the benchmarking experiment.
//!
//! Each noise source is simulated in isolation on the elementary unit (one
//! pi/2 pulse plus one inter-pulse delay) and scaled by the average number
//! of pulses a Clifford costs. The rows therefore add up to a predicted
//! per-Clifford error that can be held against the measured decay.

use super::{
    average_gate_error, propagate_delay, propagate_pulse, rel_amp_mod_from_thermal,
    unit_channel_error, MotionNoise, NoiseModel, SpectatorLine,
};
use crate::rotor::Rotation;
use crate::synth::Pulse;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};

/// Thermal motion parameters: Lamb-Dicke scale of the drive gradient and
/// mean phonon number of the relevant mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionBudget {
    pub freq_hz: f64,
    pub eta: f64,
    pub nbar: f64,
}

impl Default for MotionBudget {
    fn default() -> Self {
        MotionBudget {
            freq_hz: 5.66e6,
            eta: 8e-4,
            nbar: 23.0,
        }
    }
}

/// Independently measured noise magnitudes feeding the budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSpec {
    pub t2_s: f64,
    pub leakage_per_s: f64,
    /// Relative miscalibration of the pulse amplitude.
    pub amp_offset: f64,
    /// Residual drive-frequency offset after calibration.
    pub detuning_hz: f64,
    /// Residual Zeeman shift the frame tracker misses.
    pub zeeman_residual_hz: f64,
    /// Nearest off-resonant transitions, a symmetric pair at full drive
    /// strength.
    pub spectator_offset_hz: f64,
    pub motion: MotionBudget,
    pub pulse_duration_s: f64,
    pub ramp_s: f64,
    pub delay_s: f64,
    pub pulses_per_clifford: f64,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec {
            t2_s: 4.6,
            leakage_per_s: 0.02,
            amp_offset: 3e-4,
            detuning_hz: 28.0,
            zeeman_residual_hz: 34.0,
            spectator_offset_hz: 100e6,
            motion: MotionBudget::default(),
            pulse_duration_s: 0.6e-6,
            ramp_s: 120e-9,
            delay_s: 2e-6,
            // Mean generator count of a uniformly random Clifford, 52/24.
            pulses_per_clifford: 52.0 / 24.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BudgetRow {
    pub source: String,
    pub error_per_clifford: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorBudget {
    pub rows: Vec<BudgetRow>,
    pub total: f64,
    pub pulses_per_clifford: f64,
}

impl ErrorBudget {
    pub fn row(&self, source: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.source == source)
            .map(|r| r.error_per_clifford)
    }
}

pub fn error_budget(spec: &BudgetSpec) -> Result<ErrorBudget> {
    let pulse = Pulse::new(0.5, 0.0, spec.pulse_duration_s, spec.ramp_s)?;
    let unit = |noise: &NoiseModel| unit_channel_error(noise, &pulse, spec.delay_s, 1.0);

    let decoherence = unit(&NoiseModel {
        t2_s: spec.t2_s,
        ..NoiseModel::ideal()
    })?;

    // Motion has a phase the experiment does not control; average the unit
    // error over an 8-point quadrature of it.
    let depth = rel_amp_mod_from_thermal(spec.motion.eta, spec.motion.nbar);
    let mut motion = 0.0;
    for k in 0..8 {
        motion += unit(&NoiseModel {
            motion: Some(MotionNoise {
                freq_hz: spec.motion.freq_hz,
                rel_amp_mod: depth,
                phase: k as f64 * TAU / 8.0,
            }),
            ..NoiseModel::ideal()
        })?;
    }
    motion /= 8.0;

    let leakage = unit(&NoiseModel {
        leakage_per_s: spec.leakage_per_s,
        ..NoiseModel::ideal()
    })?;

    let amplitude = unit(&NoiseModel {
        amp_scale: 1.0 + spec.amp_offset,
        ..NoiseModel::ideal()
    })?;

    let detuning = unit(&NoiseModel {
        detuning_hz: spec.detuning_hz,
        ..NoiseModel::ideal()
    })?;

    let zeeman = unit(&NoiseModel {
        zeeman_shift_hz: spec.zeeman_residual_hz,
        ..NoiseModel::ideal()
    })?;

    // The spectator pair needs its own dimension, so it cannot reuse the
    // plain unit helper's target bookkeeping; same channel otherwise.
    let spectator_noise = NoiseModel {
        spectators: vec![
            SpectatorLine {
                offset_hz: spec.spectator_offset_hz,
                rel_rabi: 1.0,
            },
            SpectatorLine {
                offset_hz: -spec.spectator_offset_hz,
                rel_rabi: 1.0,
            },
        ],
        ..NoiseModel::ideal()
    };
    let target = Rotation::from_axis_angle(0.0, FRAC_PI_2);
    let spectator = average_gate_error(2, &target, |state| {
        propagate_pulse(state, &pulse, 1.0, &spectator_noise)?;
        propagate_delay(state, spec.delay_s, &spectator_noise);
        Ok(())
    })?;

    let rows: Vec<BudgetRow> = [
        ("decoherence", decoherence),
        ("motion", motion),
        ("leakage", leakage),
        ("amplitude", amplitude),
        ("detuning", detuning),
        ("zeeman", zeeman),
        ("spectator", spectator),
    ]
    .into_iter()
    .map(|(source, unit_error)| BudgetRow {
        source: source.to_string(),
        error_per_clifford: unit_error * spec.pulses_per_clifford,
    })
    .collect();

    let total = rows.iter().map(|r| r.error_per_clifford).sum();
    Ok(ErrorBudget {
        rows,
        total,
        pulses_per_clifford: spec.pulses_per_clifford,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_rows_order_and_total() {
        let budget = error_budget(&BudgetSpec::default()).unwrap();
        for row in &budget.rows {
            eprintln!("{:12} {:.3e}", row.source, row.error_per_clifford);
        }
        eprintln!("total        {:.3e}", budget.total);

        let sum: f64 = budget.rows.iter().map(|r| r.error_per_clifford).sum();
        assert!((budget.total - sum).abs() < 1e-18);

        let get = |s: &str| budget.row(s).unwrap();
        // Every source contributes something.
        for row in &budget.rows {
            assert!(row.error_per_clifford > 0.0, "{} vanished", row.source);
        }
        // Known ordering of the static rows.
        assert!(get("decoherence") > get("leakage"));
        assert!(get("leakage") > get("amplitude"));
        assert!(get("amplitude") > get("detuning"));
        assert!(get("detuning") > get("zeeman"));
        assert!(get("zeeman") > get("spectator"));

        // Decoherence has a closed form to sanity-check against.
        let spec = BudgetSpec::default();
        let t_unit = spec.pulse_duration_s + spec.delay_s;
        let expect = spec.pulses_per_clifford * t_unit / (3.0 * spec.t2_s);
        let dec = get("decoherence");
        assert!((dec - expect).abs() < 0.1 * expect, "{dec} vs {expect}");
    }
}
