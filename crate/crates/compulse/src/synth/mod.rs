// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Composite pulse-train synthesis.
//!
//! All ions share one drive field; ion k is distinguished only by the
//! amplitude `a_pi[k]` it needs for a pi flip. A pulse of amplitude A and
//! phase phi therefore rotates ion k by pi * A / a_pi[k] about the
//! equatorial axis at azimuth phi. Synthesis searches the 2 * n_pulses
//! amplitudes and phases of a shared train so that the per-ion products hit
//! independent target gates, one per ion: a damped least-squares descent on
//! the summed Hilbert-Schmidt distances, restarted from fresh random
//! initial conditions until it lands on an exact solution.
//!
//! Each pulse contributes two degrees of freedom and each ion's target
//! costs three, so N ions need ceil(3N/2) pulses; a spare pulse beyond
//! that leaves slack that synthesis can spend on robustness.

mod orbits;

pub use orbits::{
    orbit_classes, AddressedGate, Orbit, OrbitMember, SequenceLibrary,
};

use crate::optim::{levenberg_marquardt, LmOptions};
use crate::rotor::{Rotation, TargetGate};
use crate::util::{derive_seed, wrap_angle};
use crate::{par, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Default pulse timing, matching a microwave setup where a pi/2 takes
/// 600 ns on resonance and addressed pulses run longer at reduced power.
pub const DEFAULT_PI2_DURATION_S: f64 = 0.6e-6;
pub const DEFAULT_ADDRESSED_DURATION_S: f64 = 2.12e-6;
pub const DEFAULT_RAMP_S: f64 = 120e-9;
pub const DEFAULT_DELAY_S: f64 = 2.0e-6;

/// One drive pulse. Amplitude is in the same (arbitrary) units as
/// `IonSet::a_pi`; phase is the drive phase in radians. Amplitude is kept
/// nonnegative: a negative rotation is expressed by phase + pi instead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pulse {
    amplitude: f64,
    phase: f64,
    duration_s: f64,
    ramp_s: f64,
}

impl Pulse {
    pub fn new(amplitude: f64, phase: f64, duration_s: f64, ramp_s: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::invalid("amplitude", "must be finite"));
        }
        if duration_s <= 0.0 || ramp_s < 0.0 {
            return Err(Error::invalid(
                "duration_s/ramp_s",
                format!("got duration {duration_s}, ramp {ramp_s}"),
            ));
        }
        if 2.0 * ramp_s > duration_s {
            return Err(Error::invalid(
                "ramp_s",
                format!("2 * ramp ({}) exceeds duration ({duration_s})", 2.0 * ramp_s),
            ));
        }
        let (amplitude, phase) = if amplitude < 0.0 {
            (-amplitude, wrap_angle(phase + PI))
        } else {
            (amplitude, wrap_angle(phase))
        };
        Ok(Pulse {
            amplitude,
            phase,
            duration_s,
            ramp_s,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn ramp_s(&self) -> f64 {
        self.ramp_s
    }

    pub fn with_phase(&self, phase: f64) -> Pulse {
        Pulse {
            phase: wrap_angle(phase),
            ..*self
        }
    }

    /// sin^2 turn-on/off envelope, 1.0 on the flat top. `t` is measured
    /// from the pulse start and must lie within [0, duration]; anything
    /// else is a caller bug.
    pub fn envelope(&self, t: f64) -> f64 {
        assert!(
            (0.0..=self.duration_s).contains(&t),
            "t = {t} outside pulse of duration {}",
            self.duration_s
        );
        if self.ramp_s == 0.0 {
            return 1.0;
        }
        if t < self.ramp_s {
            let s = (PI * t / (2.0 * self.ramp_s)).sin();
            s * s
        } else if t > self.duration_s - self.ramp_s {
            let s = (PI * (self.duration_s - t) / (2.0 * self.ramp_s)).sin();
            s * s
        } else {
            1.0
        }
    }

    /// Integral of the envelope: duration minus one ramp (each sin^2 ramp
    /// integrates to half its length). The peak Rabi rate for a given
    /// rotation angle scales with 1/effective_duration.
    pub fn effective_duration_s(&self) -> f64 {
        self.duration_s - self.ramp_s
    }
}

/// An ordered train of pulses sharing one duration and ramp, separated (and
/// followed) by a fixed inter-pulse delay.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    pulses: Vec<Pulse>,
    delay_s: f64,
}

impl PulseSequence {
    pub fn new(pulses: Vec<Pulse>, delay_s: f64) -> Result<Self> {
        if pulses.is_empty() {
            return Err(Error::invalid("pulses", "sequence must be non-empty"));
        }
        if delay_s < 0.0 {
            return Err(Error::invalid("delay_s", "must be nonnegative"));
        }
        let (d0, r0) = (pulses[0].duration_s, pulses[0].ramp_s);
        if pulses.iter().any(|p| p.duration_s != d0 || p.ramp_s != r0) {
            return Err(Error::invalid(
                "pulses",
                "all pulses in a sequence share duration and ramp",
            ));
        }
        Ok(PulseSequence { pulses, delay_s })
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn delay_s(&self) -> f64 {
        self.delay_s
    }

    pub fn duration_s(&self) -> f64 {
        self.pulses[0].duration_s
    }

    pub fn ramp_s(&self) -> f64 {
        self.pulses[0].ramp_s
    }

    /// Wall-clock length: every pulse is followed by the inter-pulse delay.
    pub fn total_time_s(&self) -> f64 {
        self.pulses.len() as f64 * (self.duration_s() + self.delay_s)
    }

    /// Concatenate two trains that share timing parameters.
    pub fn concat(&self, other: &PulseSequence) -> Result<PulseSequence> {
        let mut pulses = self.pulses.clone();
        pulses.extend_from_slice(&other.pulses);
        if (self.delay_s - other.delay_s).abs() > 0.0 {
            return Err(Error::invalid("delay_s", "mismatched inter-pulse delays"));
        }
        PulseSequence::new(pulses, self.delay_s)
    }
}

/// The ions sharing the drive, described by their pi-flip amplitudes.
/// Rabi ratios follow as `a_pi[0] / a_pi[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IonSet {
    a_pi: Vec<f64>,
}

impl IonSet {
    pub fn new(a_pi: Vec<f64>) -> Result<Self> {
        if a_pi.is_empty() {
            return Err(Error::invalid("a_pi", "need at least one ion"));
        }
        if a_pi.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::invalid("a_pi", "pi amplitudes must be positive"));
        }
        Ok(IonSet { a_pi })
    }

    /// Two ions with the given Rabi ratio of ion 1 relative to ion 0.
    pub fn pair_with_ratio(ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) || ratio <= 0.0 {
            return Err(Error::invalid("ratio", "must lie in (0, 1)"));
        }
        IonSet::new(vec![1.0, 1.0 / ratio])
    }

    pub fn len(&self) -> usize {
        self.a_pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_pi.is_empty()
    }

    pub fn a_pi(&self, ion: usize) -> f64 {
        self.a_pi[ion]
    }

    pub fn a_pi_all(&self) -> &[f64] {
        &self.a_pi
    }

    pub fn max_a_pi(&self) -> f64 {
        self.a_pi.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// Rotation a single pulse performs on ion with pi amplitude `a_pi_k`,
/// ignoring the envelope: angle pi * A / a_pi, axis at the drive phase.
pub fn ideal_pulse_rotation(pulse: &Pulse, a_pi_k: f64) -> Rotation {
    assert!(a_pi_k > 0.0, "a_pi must be positive");
    Rotation::from_axis_angle(pulse.phase, PI * pulse.amplitude / a_pi_k)
}

/// Net rotation of the whole train on one ion; the first pulse acts first.
pub fn sequence_rotation(seq: &PulseSequence, a_pi_k: f64) -> Rotation {
    let mut acc = Rotation::IDENTITY;
    for p in seq.pulses() {
        acc = ideal_pulse_rotation(p, a_pi_k) * acc;
    }
    acc
}

/// Synthesis objective: summed Hilbert-Schmidt distances between realized
/// and target rotations, one term per ion. Zero exactly when every ion gets
/// its gate.
pub fn cost(seq: &PulseSequence, targets: &[TargetGate], ions: &IonSet) -> f64 {
    assert_eq!(targets.len(), ions.len(), "one target per ion");
    targets
        .iter()
        .enumerate()
        .map(|(k, g)| {
            sequence_rotation(seq, ions.a_pi(k)).distance_hs(&g.rotation())
        })
        .sum()
}

/// Minimum number of pulses for arbitrary independent gates on `n_ions`
/// ions: each target costs three degrees of freedom, each pulse supplies
/// two.
pub fn required_pulse_count(n_ions: usize) -> usize {
    (3 * n_ions).div_ceil(2)
}

/// Add `delta` to every pulse phase. Rotates every realized gate G into
/// Rz(delta) G Rz(-delta), which is what maps a sequence across its orbit.
pub fn shift_phases(seq: &PulseSequence, delta: f64) -> PulseSequence {
    let pulses = seq
        .pulses()
        .iter()
        .map(|p| p.with_phase(p.phase + delta))
        .collect();
    PulseSequence {
        pulses,
        delay_s: seq.delay_s,
    }
}

/// Knobs for [`synthesize`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_pulses: usize,
    /// Accept a solution once the cost falls below this.
    pub tol: f64,
    /// Restart budget: fresh random initializations before giving up.
    pub restarts: usize,
    pub duration_s: f64,
    pub ramp_s: f64,
    pub delay_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pulses: 4,
            tol: 1e-9,
            restarts: 200,
            duration_s: DEFAULT_ADDRESSED_DURATION_S,
            ramp_s: DEFAULT_RAMP_S,
            delay_s: DEFAULT_DELAY_S,
        }
    }
}

/// A synthesized train together with what it was asked to do.
#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub sequence: PulseSequence,
    pub targets: Vec<TargetGate>,
    pub a_pi: Vec<f64>,
    /// `cost` recomputed on the final, canonicalized sequence.
    pub residual_cost: f64,
    /// Optimizer restarts consumed, including the accepted one.
    pub attempts: usize,
}

/// Serialization schema for sequence exchange files.
#[derive(Debug, Serialize, Deserialize)]
pub struct SequenceFile {
    pub duration_s: f64,
    pub ramp_s: f64,
    pub delay_s: f64,
    pub pulses: Vec<PulseEntry>,
    pub targets: Vec<TargetGate>,
    pub a_pi: Vec<f64>,
    pub residual_cost: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PulseEntry {
    pub amplitude: f64,
    pub phase_rad: f64,
}

impl SynthesisResult {
    pub fn to_file(&self) -> SequenceFile {
        SequenceFile {
            duration_s: self.sequence.duration_s(),
            ramp_s: self.sequence.ramp_s(),
            delay_s: self.sequence.delay_s(),
            pulses: self
                .sequence
                .pulses()
                .iter()
                .map(|p| PulseEntry {
                    amplitude: p.amplitude(),
                    phase_rad: p.phase(),
                })
                .collect(),
            targets: self.targets.clone(),
            a_pi: self.a_pi.clone(),
            residual_cost: self.residual_cost,
        }
    }

    pub fn from_file(f: &SequenceFile) -> Result<SynthesisResult> {
        let pulses = f
            .pulses
            .iter()
            .map(|e| Pulse::new(e.amplitude, e.phase_rad, f.duration_s, f.ramp_s))
            .collect::<Result<Vec<_>>>()?;
        Ok(SynthesisResult {
            sequence: PulseSequence::new(pulses, f.delay_s)?,
            targets: f.targets.clone(),
            a_pi: f.a_pi.clone(),
            residual_cost: f.residual_cost,
            attempts: 0,
        })
    }
}

/// Parameter vector layout: [amp_0, phase_0, amp_1, phase_1, ...].
fn params_to_sequence(params: &[f64], cfg: &SynthConfig) -> PulseSequence {
    let pulses: Vec<Pulse> = params
        .chunks_exact(2)
        .map(|ap| {
            Pulse::new(ap[0], ap[1], cfg.duration_s, cfg.ramp_s)
                .expect("validated template timing")
        })
        .collect();
    PulseSequence {
        pulses,
        delay_s: cfg.delay_s,
    }
}

fn fill_residuals(params: &[f64], targets: &[Rotation], a_pi: &[f64], out: &mut [f64]) {
    let mut idx = 0;
    for (k, target) in targets.iter().enumerate() {
        let mut acc = Rotation::IDENTITY;
        for ap in params.chunks_exact(2) {
            acc = Rotation::from_axis_angle(ap[1], PI * ap[0] / a_pi[k]) * acc;
        }
        let m = acc.so3();
        let g = target.so3();
        for i in 0..3 {
            for j in 0..3 {
                out[idx] = m[i][j] - g[i][j];
                idx += 1;
            }
        }
    }
}

/// Search for a shared pulse train realizing `targets[k]` on ion k.
///
/// Each restart draws amplitudes uniformly from [0, 2 * max(a_pi)] and
/// phases from [0, 2*pi), then runs a damped least-squares descent on the
/// squared cost. The first restart whose polished cost beats `cfg.tol`
/// wins; if none does, the error carries the best attempt. Restarts run in
/// parallel batches but the outcome is identical to the sequential scan:
/// acceptance goes to the lowest restart index that converged.
pub fn synthesize(
    targets: &[TargetGate],
    ions: &IonSet,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SynthesisResult> {
    if targets.len() != ions.len() {
        return Err(Error::invalid(
            "targets",
            format!("{} targets for {} ions", targets.len(), ions.len()),
        ));
    }
    if cfg.n_pulses == 0 {
        return Err(Error::invalid("n_pulses", "need at least one pulse"));
    }
    if cfg.restarts == 0 {
        return Err(Error::invalid("restarts", "restart budget must be positive"));
    }
    // Template validity (ramp vs duration) checked once up front.
    Pulse::new(0.0, 0.0, cfg.duration_s, cfg.ramp_s)?;

    let target_rots: Vec<Rotation> = targets.iter().map(|t| t.rotation()).collect();
    let a_pi = ions.a_pi_all().to_vec();
    let n_res = 9 * targets.len();
    let amp_hi = 2.0 * ions.max_a_pi();

    let run_restart = |restart: usize| -> (f64, Vec<f64>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x737e, restart as u64));
        let mut init = Vec::with_capacity(2 * cfg.n_pulses);
        for _ in 0..cfg.n_pulses {
            init.push(rng.gen_range(0.0..amp_hi));
            init.push(rng.gen_range(0.0..TAU));
        }
        let mut f = |p: &[f64], out: &mut [f64]| fill_residuals(p, &target_rots, &a_pi, out);
        let fit = levenberg_marquardt(&mut f, n_res, &init, &LmOptions::default());
        let seq = params_to_sequence(&fit.params, cfg);
        let c = cost(&seq, targets, ions);
        (c, fit.params, fit.iterations)
    };

    // Batched parallel scan with deterministic first-hit semantics. Every
    // restart before the accepted one had cost >= tol, so "first below tol"
    // and "best so far" coincide.
    const BATCH: usize = 16;
    let mut best: Option<(f64, Vec<f64>, usize)> = None; // (cost, params, restart idx)
    let mut accepted: Option<(Vec<f64>, usize)> = None;
    let mut consumed = 0;

    'outer: for batch_start in (0..cfg.restarts).step_by(BATCH) {
        let batch_len = BATCH.min(cfg.restarts - batch_start);
        let results = par::map_indexed(batch_len, |i| run_restart(batch_start + i));
        for (i, (c, params, _iters)) in results.into_iter().enumerate() {
            let restart = batch_start + i;
            consumed = restart + 1;
            if c < cfg.tol {
                accepted = Some((params, restart));
                break 'outer;
            }
            match &best {
                Some((bc, _, _)) if *bc <= c => {}
                _ => best = Some((c, params, restart)),
            }
        }
    }

    let (params, attempts) = match accepted {
        Some((params, idx)) => (params, idx + 1),
        None => {
            let (c, params, _) = best.expect("at least one restart ran");
            let result = finish(params, targets, ions, cfg, consumed);
            return Err(Error::SynthesisDidNotConverge {
                residual: c,
                attempts: consumed,
                tol: cfg.tol,
                best: Box::new(result),
            });
        }
    };

    let result = finish(params, targets, ions, cfg, attempts);
    debug_assert!(result.residual_cost < cfg.tol);
    Ok(result)
}

fn finish(
    params: Vec<f64>,
    targets: &[TargetGate],
    ions: &IonSet,
    cfg: &SynthConfig,
    attempts: usize,
) -> SynthesisResult {
    // Canonicalization (negative amplitude -> phase + pi) happens inside
    // Pulse::new and leaves every per-ion rotation bit-identical.
    let sequence = params_to_sequence(&params, cfg);
    let residual_cost = cost(&sequence, targets, ions);
    SynthesisResult {
        sequence,
        targets: targets.to_vec(),
        a_pi: ions.a_pi_all().to_vec(),
        residual_cost,
        attempts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn pulse(a: f64, phi: f64) -> Pulse {
        Pulse::new(a, phi, DEFAULT_ADDRESSED_DURATION_S, DEFAULT_RAMP_S).unwrap()
    }

    fn quarter_targets() -> Vec<TargetGate> {
        vec![
            TargetGate::from_rotation(&Rotation::from_axis_angle(0.0, FRAC_PI_2)),
            TargetGate::from_rotation(&Rotation::from_axis_angle(FRAC_PI_2, FRAC_PI_2)),
        ]
    }

    fn random_targets(rng: &mut impl Rng, n: usize) -> Vec<TargetGate> {
        (0..n)
            .map(|_| {
                TargetGate::new(
                    rng.gen_range(0.1..PI - 0.1),
                    rng.gen_range(0.0..TAU),
                    rng.gen_range(0.0..TAU),
                )
            })
            .collect()
    }

    #[test]
    fn pulse_canonicalizes_negative_amplitude() {
        let p = Pulse::new(-0.5, 0.3, 1e-6, 0.0).unwrap();
        assert_eq!(p.amplitude(), 0.5);
        assert!((p.phase() - (0.3 + PI)).abs() < 1e-15);
        // Same rotation either way.
        let q = pulse(0.5, 0.3 + PI);
        assert!(ideal_pulse_rotation(&p, 1.0)
            .quat_distance(&ideal_pulse_rotation(&q, 1.0))
            < 1e-15);
    }

    #[test]
    fn pulse_rejects_bad_timing() {
        assert!(Pulse::new(1.0, 0.0, 1e-6, 0.6e-6).is_err());
        assert!(Pulse::new(1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn envelope_shape_and_area() {
        let p = pulse(1.0, 0.0);
        assert_eq!(p.envelope(0.0), 0.0);
        assert!((p.envelope(p.ramp_s() / 2.0) - 0.5).abs() < 1e-12);
        assert_eq!(p.envelope(p.duration_s() / 2.0), 1.0);
        assert!((p.envelope(p.duration_s()) - 0.0).abs() < 1e-12);
        // Numerical integral matches duration - ramp.
        let n = 200_000;
        let dt = p.duration_s() / n as f64;
        let area: f64 = (0..n)
            .map(|i| p.envelope((i as f64 + 0.5) * dt) * dt)
            .sum();
        assert!((area - p.effective_duration_s()).abs() < 1e-12);
    }

    #[test]
    fn pulse_on_weaker_ion_rotates_by_ratio() {
        // A pi-amplitude pulse for one ion turns a 0.80-ratio ion by 0.80 pi.
        let p = pulse(1.0, 0.7);
        let r = ideal_pulse_rotation(&p, 1.25);
        assert!((r.angle() - 0.8 * PI).abs() < 1e-12);
    }

    #[test]
    fn sequence_rotation_orders_first_pulse_first() {
        let ions = IonSet::new(vec![1.0]).unwrap();
        let seq = PulseSequence::new(vec![pulse(0.5, 0.0), pulse(0.5, FRAC_PI_2)], 2e-6).unwrap();
        // Quarter turn about x, then about y: the quaternion product by
        // hand is (1/2)(1, 1, 1, -1), a 2*pi/3 turn about (1, 1, -1)/sqrt(3).
        let r = sequence_rotation(&seq, ions.a_pi(0));
        let e = 1.0 / 3.0f64.sqrt();
        let ax = r.axis().unwrap();
        assert!((r.angle() - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((ax[0] - e).abs() < 1e-12, "axis {ax:?}");
        assert!((ax[1] - e).abs() < 1e-12, "axis {ax:?}");
        assert!((ax[2] + e).abs() < 1e-12, "axis {ax:?}");
    }

    #[test]
    fn cost_is_zero_for_exact_sequence() {
        let ions = IonSet::new(vec![1.0]).unwrap();
        let seq = PulseSequence::new(vec![pulse(0.5, 0.0)], 2e-6).unwrap();
        let targets = vec![TargetGate::from_rotation(&Rotation::from_axis_angle(
            0.0, FRAC_PI_2,
        ))];
        assert!(cost(&seq, &targets, &ions) < 1e-15);
    }

    #[test]
    fn required_pulse_count_is_ceil_3n_over_2() {
        assert_eq!(required_pulse_count(1), 2);
        assert_eq!(required_pulse_count(2), 3);
        assert_eq!(required_pulse_count(3), 5);
        assert_eq!(required_pulse_count(4), 6);
        assert_eq!(required_pulse_count(5), 8);
    }

    #[test]
    fn shift_phases_conjugates_realized_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ions = IonSet::pair_with_ratio(0.8).unwrap();
        for _ in 0..100 {
            let pulses: Vec<Pulse> = (0..4)
                .map(|_| pulse(rng.gen_range(0.0..2.5), rng.gen_range(0.0..TAU)))
                .collect();
            let seq = PulseSequence::new(pulses, 2e-6).unwrap();
            let delta = rng.gen_range(0.0..TAU);
            let shifted = shift_phases(&seq, delta);
            for k in 0..2 {
                let lhs = sequence_rotation(&shifted, ions.a_pi(k));
                let rz = Rotation::about_z(delta);
                let rhs = rz * sequence_rotation(&seq, ions.a_pi(k)) * rz.inverse();
                assert!(lhs.distance_hs(&rhs) < 1e-12);
            }
        }
    }

    #[test]
    fn synthesize_hits_quarter_turn_pair_with_four_pulses() {
        let ions = IonSet::pair_with_ratio(0.8).unwrap();
        let cfg = SynthConfig::default();
        let result = synthesize(&quarter_targets(), &ions, &cfg, 7).unwrap();
        assert!(result.residual_cost < 1e-9);
        assert_eq!(result.sequence.pulses().len(), 4);
        // Residual must equal a fresh recomputation of the cost.
        let again = cost(&result.sequence, &result.targets, &ions);
        assert!((again - result.residual_cost).abs() < 1e-12);
        // And the per-ion realized gates must match the targets.
        for k in 0..2 {
            let d = sequence_rotation(&result.sequence, ions.a_pi(k))
                .distance_hs(&result.targets[k].rotation());
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn synthesize_is_deterministic_and_parallel_invariant() {
        let ions = IonSet::pair_with_ratio(0.8).unwrap();
        let cfg = SynthConfig::default();
        let targets = quarter_targets();
        let a = synthesize(&targets, &ions, &cfg, 42).unwrap();
        let b = synthesize(&targets, &ions, &cfg, 42).unwrap();
        assert_eq!(a.sequence, b.sequence);
        assert_eq!(a.attempts, b.attempts);

        crate::par::set_force_sequential(true);
        let c = synthesize(&targets, &ions, &cfg, 42).unwrap();
        crate::par::set_force_sequential(false);
        assert_eq!(a.sequence, c.sequence);
        assert_eq!(a.attempts, c.attempts);
    }

    #[test]
    fn three_pulses_suffice_for_two_ions() {
        // ceil(3*2/2) = 3 pulses carry exactly the six degrees of freedom
        // two arbitrary targets need. The system is exactly determined, so
        // a few target pairs sit near the edge of the reachable set and
        // need many restarts; the working configuration uses four pulses
        // precisely to buy that slack.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut converged = 0;
        let n_seeds = 50;
        for s in 0..n_seeds {
            let ratio = rng.gen_range(0.55..0.95);
            let ions = IonSet::pair_with_ratio(ratio).unwrap();
            let targets = random_targets(&mut rng, 2);
            let cfg = SynthConfig {
                n_pulses: 3,
                restarts: 200,
                ..SynthConfig::default()
            };
            if synthesize(&targets, &ions, &cfg, 1000 + s).is_ok() {
                converged += 1;
            }
        }
        eprintln!("3-pulse convergence: {converged}/{n_seeds}");
        assert!(converged * 10 >= n_seeds * 9, "only {converged}/{n_seeds} converged");
    }

    #[test]
    fn two_pulses_cannot_realize_generic_pairs() {
        // Four degrees of freedom against six constraints: the optimizer
        // must report non-convergence and the best residual stays large.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for s in 0..10 {
            let ions = IonSet::pair_with_ratio(rng.gen_range(0.55..0.95)).unwrap();
            let targets = random_targets(&mut rng, 2);
            let cfg = SynthConfig {
                n_pulses: 2,
                restarts: 40,
                ..SynthConfig::default()
            };
            match synthesize(&targets, &ions, &cfg, 2000 + s) {
                Err(Error::SynthesisDidNotConverge { residual, .. }) => {
                    assert!(residual > 1e-3, "suspicious residual {residual}");
                }
                Ok(r) => panic!("2 pulses claimed to solve a generic pair: {:?}", r.residual_cost),
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn n_ion_scaling_with_required_pulses() {
        // Well-separated pi amplitudes; nearly equal ones make two ions
        // respond almost identically and independent targets unreachable
        // at sane drive strengths. Separation is the addressing resource.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for (a_pi, tries_needed) in [
            (vec![1.0, 1.25, 1.6], 9),
            (vec![1.0, 1.2, 1.5, 1.9], 9),
        ] {
            let n_ions = a_pi.len();
            let ions = IonSet::new(a_pi).unwrap();
            let mut ok = 0;
            let tries = 10;
            for s in 0..tries {
                let targets = random_targets(&mut rng, n_ions);
                let cfg = SynthConfig {
                    n_pulses: required_pulse_count(n_ions),
                    tol: 1e-8,
                    restarts: 300,
                    ..SynthConfig::default()
                };
                if synthesize(&targets, &ions, &cfg, 3000 + s).is_ok() {
                    ok += 1;
                }
            }
            eprintln!("{n_ions}-ion convergence: {ok}/{tries}");
            assert!(ok >= tries_needed, "{n_ions} ions: {ok}/{tries}");
        }
    }

    #[test]
    fn cost_slope_matches_directional_derivative() {
        // Analytic derivative of the cost in one pulse phase, evaluated
        // slightly off a solved point where the norm is smooth, compared
        // against a central finite difference.
        let ions = IonSet::pair_with_ratio(0.8).unwrap();
        let cfg = SynthConfig::default();
        let result = synthesize(&quarter_targets(), &ions, &cfg, 5).unwrap();

        let eval = |dphi: f64| -> f64 {
            let mut pulses: Vec<Pulse> = result.sequence.pulses().to_vec();
            pulses[1] = pulses[1].with_phase(pulses[1].phase() + dphi);
            let seq = PulseSequence::new(pulses, cfg.delay_s).unwrap();
            cost(&seq, &result.targets, &ions)
        };

        // Cost rises linearly out of the solution: c(eps) ~ slope * |eps|.
        let c3 = eval(1e-3);
        let c4 = eval(1e-4);
        let c5 = eval(1e-5);
        assert!(c3 > 1e-6, "perturbation had no effect: {c3}");
        let s43 = c4 / c3;
        let s54 = c5 / c4;
        assert!((s43 - 0.1).abs() < 0.02, "c(1e-4)/c(1e-3) = {s43}");
        assert!((s54 - 0.1).abs() < 0.02, "c(1e-5)/c(1e-4) = {s54}");

        // At a smooth point the derivative computed from the product rule
        // (dR/dphi = Lz R - R Lz per factor) matches the finite difference.
        let x0 = 1e-3;
        let fd = (eval(x0 + 1e-6) - eval(x0 - 1e-6)) / 2e-6;

        let analytic = {
            let base: Vec<Pulse> = result.sequence.pulses().to_vec();
            let mut total = 0.0;
            for k in 0..2 {
                let a_pi = ions.a_pi(k);
                let rots: Vec<[[f64; 3]; 3]> = base
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let phase = if j == 1 { p.phase() + x0 } else { p.phase() };
                        Rotation::from_axis_angle(phase, PI * p.amplitude() / a_pi).so3()
                    })
                    .collect();
                let lz = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
                let mul = |a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]| {
                    let mut m = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            for k2 in 0..3 {
                                m[i][j] += a[i][k2] * b[k2][j];
                            }
                        }
                    }
                    m
                };
                // Product and its derivative in pulse 1's phase.
                let mut prod = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                for r in &rots {
                    prod = mul(r, &prod);
                }
                // d/dphi R(phi) = Lz R - R Lz for a rotation about an
                // equatorial axis at azimuth phi.
                let dr1 = {
                    let a = mul(&lz, &rots[1]);
                    let b = mul(&rots[1], &lz);
                    let mut m = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            m[i][j] = a[i][j] - b[i][j];
                        }
                    }
                    m
                };
                let mut dprod = dr1;
                // Chain: R3 R2 (dR1') R0 with rots applied first-first.
                // prod = r3*r2*r1*r0 (r0 first): derivative in r1 slot.
                dprod = mul(&dprod, &rots[0]);
                for r in rots.iter().skip(2) {
                    dprod = mul(r, &dprod);
                }
                let g = result.targets[k].rotation().so3();
                let mut dist2 = 0.0;
                let mut inner = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        let d = prod[i][j] - g[i][j];
                        dist2 += d * d;
                        inner += d * dprod[i][j];
                    }
                }
                total += inner / dist2.sqrt();
            }
            total
        };

        assert!(
            (fd - analytic).abs() < 1e-5 * (1.0 + analytic.abs()),
            "fd {fd} vs analytic {analytic}"
        );
    }

    #[test]
    fn sequence_file_round_trips() {
        let ions = IonSet::pair_with_ratio(0.8).unwrap();
        let result = synthesize(&quarter_targets(), &ions, &SynthConfig::default(), 3).unwrap();
        let json = serde_json::to_string_pretty(&result.to_file()).unwrap();
        let parsed: SequenceFile = serde_json::from_str(&json).unwrap();
        let back = SynthesisResult::from_file(&parsed).unwrap();
        assert_eq!(back.sequence, result.sequence);
        assert!((back.residual_cost - result.residual_cost).abs() < 1e-18);
        // Field names are the exchange contract.
        assert!(json.contains("\"phase_rad\""));
        assert!(json.contains("\"a_pi\""));
        assert!(json.contains("\"residual_cost\""));
    }
}
