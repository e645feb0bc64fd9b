// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Density-operator simulation of one driven ion.
//!
//! The model is a qubit (levels 0 and 1) plus optional spectator levels
//! coupled to level 1 by the same drive, evolved in the frame rotating at
//! the drive frequency. Pulses integrate the coherent dynamics with a
//! fixed-step RK4 on drho/dt = -i[H(t), rho]; dephasing and leakage are
//! interleaved per step as exponential damping factors. Delays have a
//! closed form: a z rotation at the residual detuning, coherence decay,
//! and uniform leakage.
//!
//! Sign conventions match [`crate::rotor`]: a pulse of phase phi rotates
//! the Bloch vector about (cos phi, sin phi, 0), and a positive detuning
//! precesses it counterclockwise about +z (`Rotation::about_z` with a
//! positive angle).
//!
//! Frame bookkeeping: the control system tracks a qubit frequency estimate
//! and advances its reference phase between pulses, compensating the slow
//! Zeeman drift it believes in (`zeeman_comp_hz`). In that control frame a
//! pulse sees the z detuning `detuning_hz + zeeman_shift_hz -
//! zeeman_comp_hz`, while free evolution between pulses precesses only at
//! `detuning_hz`, the part of the drive offset the tracker does not model.
//! `QubitState::frame_phase` records the accumulated compensation phase
//! for diagnostics; it does not feed back into the dynamics.

mod budget;
mod cmat;

pub use budget::{error_budget, BudgetRow, BudgetSpec, ErrorBudget, MotionBudget};

use crate::rotor::Rotation;
use crate::synth::{Pulse, PulseSequence};
use crate::{Error, Result};
use cmat::CMat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Resolve the fastest angular frequency in the Hamiltonian with at least
/// this many steps per period. Far-detuned spectator lines oscillate at
/// tens of MHz and their populations matter down to 1e-9, which RK4 only
/// delivers well below (omega dt)^5 ~ 1e-11 per step.
const STEPS_PER_PERIOD: f64 = 1000.0;
/// Steps across one envelope ramp. The sin^2 ramp is the one time scale
/// the Hamiltonian's own rate bound does not advertise; square pulses have
/// no envelope structure and take steps as long as the dynamics allow,
/// which keeps millisecond-long weak probes affordable.
const RAMP_STEPS: f64 = 128.0;
/// Steps per period of the motional amplitude modulation. The modulation
/// is a multiplicative 1e-3-level perturbation, so it needs far fewer
/// samples than a comparable term in the Hamiltonian would.
const MOTION_STEPS_PER_PERIOD: f64 = 200.0;
/// Never integrate a pulse with fewer steps than this.
const MIN_STEPS: usize = 64;

/// One off-resonant transition sharing the drive: couples level 1 to its
/// own level with strength `rel_rabi` times the qubit Rabi rate, detuned
/// by `offset_hz`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectatorLine {
    pub offset_hz: f64,
    pub rel_rabi: f64,
}

/// Coherent amplitude modulation from residual ion motion: the effective
/// Rabi rate is scaled by `1 + rel_amp_mod * sin(2 pi freq_hz t + phase)`,
/// with t global so the modulation stays coherent across a sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionNoise {
    pub freq_hz: f64,
    pub rel_amp_mod: f64,
    pub phase: f64,
}

/// Relative Rabi modulation depth for an ion in a thermal motional state:
/// the Debye-Waller factor fluctuates by eta * sqrt(2 nbar + 1) to first
/// order in the Lamb-Dicke parameter eta.
pub fn rel_amp_mod_from_thermal(eta: f64, nbar: f64) -> f64 {
    eta * (2.0 * nbar + 1.0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Residual drive-frequency offset the frame tracker does not know
    /// about. Acts during pulses and delays.
    pub detuning_hz: f64,
    /// Coherence time of the 0-1 transition.
    pub t2_s: f64,
    /// Multiplicative drive amplitude error, 1.0 is nominal.
    pub amp_scale: f64,
    /// Linear relative amplitude drift per second, applied on top of
    /// `amp_scale` as the sequence clock advances.
    pub amp_drift_per_s: f64,
    /// Slow qubit frequency shift (real physics).
    pub zeeman_shift_hz: f64,
    /// The tracker's estimate of that shift (control knob).
    pub zeeman_comp_hz: f64,
    /// Uniform population loss out of the simulated manifold.
    pub leakage_per_s: f64,
    pub spectators: Vec<SpectatorLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motion: Option<MotionNoise>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            detuning_hz: 0.0,
            t2_s: f64::INFINITY,
            amp_scale: 1.0,
            amp_drift_per_s: 0.0,
            zeeman_shift_hz: 0.0,
            zeeman_comp_hz: 0.0,
            leakage_per_s: 0.0,
            spectators: Vec::new(),
            motion: None,
        }
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        NoiseModel::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t2_s <= 0.0 {
            return Err(Error::invalid("t2_s", "must be positive (may be inf)"));
        }
        if self.amp_scale <= 0.0 {
            return Err(Error::invalid("amp_scale", "must be positive"));
        }
        if self.leakage_per_s < 0.0 {
            return Err(Error::invalid("leakage_per_s", "must be nonnegative"));
        }
        if self.spectators.iter().any(|s| s.rel_rabi < 0.0) {
            return Err(Error::invalid("spectators", "rel_rabi must be nonnegative"));
        }
        if let Some(m) = &self.motion {
            if m.freq_hz <= 0.0 {
                return Err(Error::invalid("motion.freq_hz", "must be positive"));
            }
        }
        Ok(())
    }

    /// Simulation dimension: the qubit plus one level per spectator line.
    pub fn dimension(&self) -> usize {
        2 + self.spectators.len()
    }

    fn pulse_z_detuning(&self) -> f64 {
        TAU * (self.detuning_hz + self.zeeman_shift_hz - self.zeeman_comp_hz)
    }
}

/// Bloch vectors of the six cardinal pure states. Averaging a state
/// fidelity over them equals the average over all pure states.
pub const CARDINAL_DIRECTIONS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

#[derive(Clone, Debug)]
pub struct QubitState {
    rho: CMat,
    /// Population lost out of the simulated manifold; monotone.
    pub leaked: f64,
    /// Accumulated compensation phase of the control frame (diagnostic).
    pub frame_phase: f64,
    /// Sequence clock, advanced by pulses and delays.
    pub elapsed_s: f64,
}

impl QubitState {
    /// |0> with `n_spectators` empty extra levels.
    pub fn ground(n_spectators: usize) -> Self {
        QubitState::from_bloch([0.0, 0.0, 1.0], n_spectators)
    }

    /// Pure qubit state with the given Bloch vector (|v| <= 1 gives the
    /// corresponding mixed state).
    pub fn from_bloch(v: [f64; 3], n_spectators: usize) -> Self {
        let mut rho = CMat::zeros(2 + n_spectators);
        rho.set(0, 0, Complex64::new(0.5 * (1.0 + v[2]), 0.0));
        rho.set(1, 1, Complex64::new(0.5 * (1.0 - v[2]), 0.0));
        rho.set(0, 1, Complex64::new(0.5 * v[0], -0.5 * v[1]));
        rho.set(1, 0, Complex64::new(0.5 * v[0], 0.5 * v[1]));
        QubitState {
            rho,
            leaked: 0.0,
            frame_phase: 0.0,
            elapsed_s: 0.0,
        }
    }

    /// Imperfect preparation: |0> flipped to |1> with probability `flip`.
    pub fn mixed_ground(flip: f64, n_spectators: usize) -> Self {
        assert!((0.0..=1.0).contains(&flip));
        QubitState::from_bloch([0.0, 0.0, 1.0 - 2.0 * flip], n_spectators)
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn population(&self, level: usize) -> f64 {
        self.rho.get(level, level).re
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    /// Qubit Bloch vector (not renormalized for leakage).
    pub fn bloch(&self) -> [f64; 3] {
        let r01 = self.rho.get(0, 1);
        [
            2.0 * r01.re,
            -2.0 * r01.im,
            self.rho.get(0, 0).re - self.rho.get(1, 1).re,
        ]
    }

    /// Tr(rho P_v) with P_v the projector on the pure qubit state with
    /// Bloch vector v. Leaked and spectator population count against it.
    pub fn overlap_with_bloch(&self, v: [f64; 3]) -> f64 {
        let b = self.bloch();
        let qubit_trace = self.population(0) + self.population(1);
        0.5 * (qubit_trace + b[0] * v[0] + b[1] * v[1] + b[2] * v[2])
    }

    /// |trace + leaked - 1|, which exact bookkeeping keeps at rounding
    /// level.
    pub fn total_drift(&self) -> f64 {
        (self.trace() + self.leaked - 1.0).abs()
    }
}

/// Time-dependent pulse Hamiltonian in the control frame.
struct PulseHam<'a> {
    pulse: &'a Pulse,
    noise: &'a NoiseModel,
    /// Peak qubit Rabi rate in rad/s, amplitude errors included.
    omega_peak: f64,
    delta_p: f64,
    /// Global clock at pulse start, for coherent motion modulation.
    t0: f64,
}

impl PulseHam<'_> {
    fn fill(&self, t_local: f64, h: &mut CMat) {
        let mut omega = self.omega_peak * self.pulse.envelope(t_local);
        if let Some(m) = &self.noise.motion {
            omega *= 1.0 + m.rel_amp_mod * (TAU * m.freq_hz * (self.t0 + t_local) + m.phase).sin();
        }
        let half = 0.5 * omega;
        let phi = self.pulse.phase();
        let drive = Complex64::new(half * phi.cos(), -half * phi.sin());

        let d = h.dim();
        for i in 0..d {
            for j in 0..d {
                h.set(i, j, Complex64::ZERO);
            }
        }
        h.set(0, 0, Complex64::new(0.5 * self.delta_p, 0.0));
        h.set(1, 1, Complex64::new(-0.5 * self.delta_p, 0.0));
        h.set(0, 1, drive);
        h.set(1, 0, drive.conj());
        for (k, line) in self.noise.spectators.iter().enumerate() {
            let s = 2 + k;
            h.set(
                s,
                s,
                Complex64::new(-0.5 * self.delta_p - TAU * line.offset_hz, 0.0),
            );
            let c = drive * line.rel_rabi;
            h.set(1, s, c);
            h.set(s, 1, c.conj());
        }
    }

    /// Largest angular frequency in the Hamiltonian, for step-size
    /// selection. The motional modulation is capped separately.
    fn max_rate(&self) -> f64 {
        let mut w: f64 = self.omega_peak.abs().max(self.delta_p.abs());
        for line in &self.noise.spectators {
            w = w.max(TAU * line.offset_hz.abs() + (line.rel_rabi * self.omega_peak).abs());
        }
        w
    }
}

/// Integrate one pulse. `a_pi_k` is this ion's pi-flip amplitude; the
/// noise model supplies everything the hardware gets wrong.
pub fn propagate_pulse(
    state: &mut QubitState,
    pulse: &Pulse,
    a_pi_k: f64,
    noise: &NoiseModel,
) -> Result<()> {
    noise.validate()?;
    if state.dim() != noise.dimension() {
        return Err(Error::invalid(
            "state",
            format!("dimension {} vs noise {}", state.dim(), noise.dimension()),
        ));
    }
    let duration = pulse.duration_s();
    let amp_eff = noise.amp_scale * (1.0 + noise.amp_drift_per_s * state.elapsed_s);
    let ham = PulseHam {
        pulse,
        noise,
        omega_peak: PI * pulse.amplitude() * amp_eff / (a_pi_k * pulse.effective_duration_s()),
        delta_p: noise.pulse_z_detuning(),
        t0: state.elapsed_s,
    };

    let rate = ham.max_rate();
    let mut dt = if pulse.ramp_s() > 0.0 {
        pulse.ramp_s() / RAMP_STEPS
    } else {
        f64::INFINITY
    };
    if rate > 0.0 {
        dt = dt.min(TAU / rate / STEPS_PER_PERIOD);
    }
    if let Some(m) = &noise.motion {
        dt = dt.min(1.0 / (m.freq_hz * MOTION_STEPS_PER_PERIOD));
    }
    let n_steps = ((duration / dt).ceil() as usize).max(MIN_STEPS);
    let dt = duration / n_steps as f64;

    let d = state.dim();
    let mut h = CMat::zeros(d);
    let mut k1 = CMat::zeros(d);
    let mut k2 = CMat::zeros(d);
    let mut k3 = CMat::zeros(d);
    let mut k4 = CMat::zeros(d);
    let mut tmp = CMat::zeros(d);

    let dephase = (-dt / noise.t2_s).exp();
    let keep = (-noise.leakage_per_s * dt).exp();

    for step in 0..n_steps {
        let t = step as f64 * dt;
        ham.fill(t, &mut h);
        CMat::minus_i_commutator_into(&mut k1, &h, &state.rho);

        ham.fill(t + 0.5 * dt, &mut h);
        tmp.copy_from(&state.rho);
        tmp.add_scaled(&k1, 0.5 * dt);
        CMat::minus_i_commutator_into(&mut k2, &h, &tmp);

        tmp.copy_from(&state.rho);
        tmp.add_scaled(&k2, 0.5 * dt);
        CMat::minus_i_commutator_into(&mut k3, &h, &tmp);

        // Rounding in t + dt can land one ulp past the pulse end.
        ham.fill((t + dt).min(duration), &mut h);
        tmp.copy_from(&state.rho);
        tmp.add_scaled(&k3, dt);
        CMat::minus_i_commutator_into(&mut k4, &h, &tmp);

        state.rho.add_scaled(&k1, dt / 6.0);
        state.rho.add_scaled(&k2, dt / 3.0);
        state.rho.add_scaled(&k3, dt / 3.0);
        state.rho.add_scaled(&k4, dt / 6.0);

        if dephase < 1.0 {
            state.rho.damp_level_coherence(1, dephase);
        }
        if keep < 1.0 {
            state.leaked += (1.0 - keep) * state.rho.trace().re;
            state.rho.scale(keep);
        }
        state.rho.hermitize();
    }

    state.elapsed_s += duration;

    let drift = state.total_drift();
    if drift > 1e-9 {
        return Err(Error::TraceDrift {
            total: state.trace() + state.leaked,
            drift,
        });
    }
    // Hermitized RK4 leaks out of the physical cone by ~1e-15 per pulse,
    // so a pure state can sit 1e-10 below zero after the ~1e5 pulses of a
    // long noiseless benchmarking trial. Step-size misuse blows past any
    // such bound within a few pulses, so 1e-8 still catches it.
    let min_eig = state.rho.eigenvalues_hermitian()[0];
    if min_eig < -1e-8 {
        return Err(Error::NotPositive { min_eig });
    }
    Ok(())
}

/// Free evolution: z precession at the untracked detuning, dephasing, and
/// leakage, all closed-form.
pub fn propagate_delay(state: &mut QubitState, dt: f64, noise: &NoiseModel) {
    assert!(dt >= 0.0, "negative delay");
    let d = state.dim();
    let half = Complex64::new(0.0, -0.5 * TAU * noise.detuning_hz * dt).exp();
    // U = diag(e^{-i a/2}, e^{+i a/2}, 1, ...): rho_01 picks up e^{-i a},
    // which rotates the Bloch vector by +a about z.
    for j in 0..d {
        if j == 0 {
            continue;
        }
        let u = if j == 1 { half * half } else { half };
        let v = state.rho.get(0, j) * u;
        state.rho.set(0, j, v);
        state.rho.set(j, 0, v.conj());
    }
    for j in 2..d {
        let v = state.rho.get(1, j) * half.conj();
        state.rho.set(1, j, v);
        state.rho.set(j, 1, v.conj());
    }

    let dephase = (-dt / noise.t2_s).exp();
    if dephase < 1.0 {
        state.rho.damp_level_coherence(1, dephase);
    }
    let keep = (-noise.leakage_per_s * dt).exp();
    if keep < 1.0 {
        state.leaked += (1.0 - keep) * state.rho.trace().re;
        state.rho.scale(keep);
    }

    state.frame_phase -= TAU * noise.zeeman_comp_hz * dt;
    state.elapsed_s += dt;
}

/// Run a whole train on one ion: each pulse is followed by the inter-pulse
/// delay.
pub fn run_sequence(
    state: &mut QubitState,
    seq: &PulseSequence,
    a_pi_k: f64,
    noise: &NoiseModel,
) -> Result<()> {
    for pulse in seq.pulses() {
        propagate_pulse(state, pulse, a_pi_k, noise)?;
        propagate_delay(state, seq.delay_s(), noise);
    }
    Ok(())
}

/// Average gate error of a channel against a target rotation, from the six
/// cardinal input states. Population that leaks or ends up in spectator
/// levels counts as error.
pub fn average_gate_error<F>(n_spectators: usize, target: &Rotation, mut apply: F) -> Result<f64>
where
    F: FnMut(&mut QubitState) -> Result<()>,
{
    let mut fidelity_sum = 0.0;
    for v in CARDINAL_DIRECTIONS {
        let mut state = QubitState::from_bloch(v, n_spectators);
        apply(&mut state)?;
        fidelity_sum += state.overlap_with_bloch(target.apply(v));
    }
    Ok(1.0 - fidelity_sum / 6.0)
}

/// Error of the elementary experimental unit, one pulse plus one delay,
/// against the rotation the pulse would ideally perform.
pub fn unit_channel_error(
    noise: &NoiseModel,
    pulse: &Pulse,
    delay_s: f64,
    a_pi: f64,
) -> Result<f64> {
    let target = Rotation::from_axis_angle(pulse.phase(), PI * pulse.amplitude() / a_pi);
    average_gate_error(noise.spectators.len(), &target, |state| {
        propagate_pulse(state, pulse, a_pi, noise)?;
        propagate_delay(state, delay_s, noise);
        Ok(())
    })
}
