// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Randomized benchmarking on the simulator.
//!
//! A run draws sequences of uniform random Cliffords, closes each with an
//! inverting element so the net operation is a Pauli-axis rotation, compiles
//! the stream to physical pulses, plays it through qsim, and fits the decay
//! of the expected-outcome probability to
//!
//! ```text
//! P(m) = 1/2 + (1/2 - s) * alpha^m,    error per gate = (1 - alpha) / 2
//! ```
//!
//! Two compilation modes exist. `Single` drives one ion at a time: every
//! generator in a Clifford word becomes one resonant quarter-turn pulse.
//! `Simultaneous` runs an independent Clifford stream on each of two ions
//! sharing the field; the generator streams are aligned (the shorter one
//! padded with identities), and each aligned pair is looked up in a
//! synthesized [`SequenceLibrary`], so every slot costs one 4-pulse train.
//! In that mode lengths are naturally counted in addressed gates rather
//! than Cliffords; [`GateMetric`] picks the x axis of the fit.
//!
//! Survivals are exact expectation values from the density operator unless
//! `shots` asks for binomial sampling. Trials are independent work items
//! seeded from (seed, length, trial), so runs are reproducible and safe to
//! fan out.

use crate::qsim::{propagate_delay, propagate_pulse, NoiseModel, QubitState};
use crate::rotor::{build_clifford_table, CliffordTable, Rotation};
use crate::synth::{
    AddressedGate, IonSet, Pulse, PulseSequence, SequenceLibrary, DEFAULT_DELAY_S,
    DEFAULT_PI2_DURATION_S, DEFAULT_RAMP_S,
};
use crate::util::derive_seed;
use crate::{par, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RBMode {
    Single,
    Simultaneous,
}

impl fmt::Display for RBMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RBMode::Single => "single",
            RBMode::Simultaneous => "simultaneous",
        })
    }
}

/// What one unit of sequence length means in the results and the fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMetric {
    /// Number of random Cliffords (the inverter is excluded; its error is
    /// absorbed into the fitted intercept).
    Clifford,
    /// Number of addressed gate slots actually played, identity padding and
    /// the inverting word included.
    AddressedGate,
}

/// Physical timing of the quarter-turn pulses used in single mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseTiming {
    pub duration_s: f64,
    pub ramp_s: f64,
    pub delay_s: f64,
}

impl Default for PulseTiming {
    fn default() -> Self {
        PulseTiming {
            duration_s: DEFAULT_PI2_DURATION_S,
            ramp_s: DEFAULT_RAMP_S,
            delay_s: DEFAULT_DELAY_S,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RBConfig {
    /// Requested Clifford counts per sequence, strictly increasing.
    pub lengths: Vec<usize>,
    pub trials_per_length: usize,
    pub seed: u64,
    pub mode: RBMode,
    pub gate_metric: GateMetric,
    /// Binomial sampling of each survival; `None` keeps exact expectations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    /// Probability that state preparation yields |1> instead of |0>.
    pub prep_error: f64,
    /// Replace every pulse with a delay of the same duration, measuring the
    /// preparation/readout floor instead of gate error.
    pub spam_reference: bool,
    pub timing: PulseTiming,
}

impl Default for RBConfig {
    fn default() -> Self {
        RBConfig {
            lengths: vec![1, 10, 100, 1000, 10000],
            trials_per_length: 4,
            seed: 0,
            mode: RBMode::Single,
            gate_metric: GateMetric::Clifford,
            shots: None,
            prep_error: 0.0,
            spam_reference: false,
            timing: PulseTiming::default(),
        }
    }
}

impl RBConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths[0] < 1 {
            return Err(Error::invalid("lengths", "need at least one length >= 1"));
        }
        if !self.lengths.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("lengths", "must be strictly increasing"));
        }
        if self.trials_per_length < 1 {
            return Err(Error::invalid("trials_per_length", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.prep_error) {
            return Err(Error::invalid("prep_error", "must be in [0, 1)"));
        }
        if self.shots == Some(0) {
            return Err(Error::invalid("shots", "must be >= 1 when set"));
        }
        // A throwaway pulse validates the timing numbers once.
        Pulse::new(0.5, 0.0, self.timing.duration_s, self.timing.ramp_s)?;
        Ok(())
    }
}

/// One measured point: `length` is in [`GateMetric`] units, so in
/// simultaneous addressed-gate runs it varies from trial to trial.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SurvivalPoint {
    pub ion: usize,
    pub length: f64,
    pub trial: usize,
    pub survival: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub ion: usize,
    pub error_per_gate: f64,
    /// Linearized 1-sigma uncertainty; infinite when the fit is degenerate.
    pub error_stderr: f64,
    /// Fitted SPAM parameter s.
    pub spam: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct RBResult {
    pub mode: RBMode,
    pub gate_metric: GateMetric,
    /// Ordered by (length index, trial, ion).
    pub survivals: Vec<SurvivalPoint>,
    /// One fit per ion, ion order.
    pub fits: Vec<DecayFit>,
}

/// The four Pauli-axis rotations: identity and the three pi flips.
pub fn pauli_rotations() -> [Rotation; 4] {
    [
        Rotation::IDENTITY,
        Rotation::from_axis_angle(0.0, PI),
        Rotation::from_axis_angle(FRAC_PI_2, PI),
        Rotation::about_z(PI),
    ]
}

/// A generated benchmarking sequence before compilation.
#[derive(Clone, Debug)]
pub struct RBSequence {
    /// The m random draws, in application order.
    pub cliffords: Vec<usize>,
    /// Final Clifford index closing the sequence to a Pauli.
    pub inverter: usize,
    /// Net rotation of the whole sequence, one of the four Paulis.
    pub pauli: Rotation,
    /// Whether the expected measurement outcome is |0>.
    pub expected_up: bool,
}

impl RBSequence {
    /// All indices in play order, inverter last.
    pub fn indices(&self) -> Vec<usize> {
        let mut v = self.cliffords.clone();
        v.push(self.inverter);
        v
    }
}

/// Draw m uniform Cliffords and close them with an inverting element so the
/// net rotation is a uniformly drawn Pauli. The rng is consumed in a fixed
/// order (m index draws, then the Pauli), which per-trial seeding relies on.
pub fn gen_rb_sequence(m: usize, rng: &mut impl Rng, table: &CliffordTable) -> RBSequence {
    assert!(m >= 1, "sequence needs at least one Clifford");
    let cliffords: Vec<usize> = (0..m).map(|_| rng.gen_range(0..table.len())).collect();
    let mut total = Rotation::IDENTITY;
    for &i in &cliffords {
        total = table.element(i) * total;
    }
    let pauli = pauli_rotations()[rng.gen_range(0..4usize)];
    let inverter = table
        .find(&(pauli * total.inverse()))
        .expect("a Pauli times an inverse Clifford is a Clifford");
    let expected_up = pauli.apply([0.0, 0.0, 1.0])[2] > 0.0;
    RBSequence {
        cliffords,
        inverter,
        pauli,
        expected_up,
    }
}

/// A Clifford stream expanded to physical quarter-turn pulses.
#[derive(Clone, Debug)]
pub struct CompiledSingle {
    /// Pulses in play order; empty when every Clifford in the stream
    /// reduced to the identity word.
    pub pulses: Vec<Pulse>,
    /// Pulse cost of this particular stream.
    pub pulses_per_clifford: f64,
}

/// Expand Clifford indices into one resonant pulse per generator, at
/// amplitude a_pi/2 and the generator's drive phase.
pub fn compile_single(
    indices: &[usize],
    table: &CliffordTable,
    a_pi_k: f64,
    timing: &PulseTiming,
) -> Result<CompiledSingle> {
    let mut pulses = Vec::new();
    for &idx in indices {
        for g in table.word(idx) {
            pulses.push(Pulse::new(
                0.5 * a_pi_k,
                g.drive_phase(),
                timing.duration_s,
                timing.ramp_s,
            )?);
        }
    }
    let pulses_per_clifford = pulses.len() as f64 / indices.len().max(1) as f64;
    Ok(CompiledSingle {
        pulses,
        pulses_per_clifford,
    })
}

/// Gate labels of a Clifford index stream, ready for pairing with the other
/// ion's stream.
pub fn stream_gates(indices: &[usize], table: &CliffordTable) -> Vec<AddressedGate> {
    indices
        .iter()
        .flat_map(|&i| table.word(i).iter().map(|&g| AddressedGate::from(g)))
        .collect()
}

/// Align two gate streams by padding the shorter one with identities at the
/// tail. Only the shorter stream is padded, so two I-free inputs never
/// produce an (I, I) slot.
pub fn pad_streams(
    a: &[AddressedGate],
    b: &[AddressedGate],
) -> Vec<(AddressedGate, AddressedGate)> {
    (0..a.len().max(b.len()))
        .map(|i| {
            (
                a.get(i).copied().unwrap_or(AddressedGate::Identity),
                b.get(i).copied().unwrap_or(AddressedGate::Identity),
            )
        })
        .collect()
}

/// Compile two per-ion gate streams into one shared 4-pulse train per
/// aligned slot. Errors if any slot (including a contract-violating (I, I))
/// is missing from the library.
pub fn compile_simultaneous(
    words_ion0: &[AddressedGate],
    words_ion1: &[AddressedGate],
    library: &SequenceLibrary,
) -> Result<Vec<PulseSequence>> {
    pad_streams(words_ion0, words_ion1)
        .into_iter()
        .map(|pair| library.lookup(pair).map(|e| e.sequence.clone()))
        .collect()
}

/// Play a pulse list on one ion, each pulse followed by the inter-pulse
/// delay. Accepts an empty list, unlike [`PulseSequence`].
fn run_pulse_train(
    state: &mut QubitState,
    pulses: &[Pulse],
    delay_s: f64,
    a_pi_k: f64,
    noise: &NoiseModel,
) -> Result<()> {
    for p in pulses {
        propagate_pulse(state, p, a_pi_k, noise)?;
        propagate_delay(state, delay_s, noise);
    }
    Ok(())
}

/// Replace every pulse slot with a delay of the same total duration,
/// keeping preparation and the passive evolution.
fn run_reference_train(state: &mut QubitState, pulses: &[Pulse], delay_s: f64, noise: &NoiseModel) {
    for p in pulses {
        propagate_delay(state, p.duration_s() + delay_s, noise);
    }
}

fn sample_binomial(rng: &mut impl Rng, shots: u64, p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let mut hits = 0u64;
    for _ in 0..shots {
        if rng.gen::<f64>() < p {
            hits += 1;
        }
    }
    hits as f64 / shots as f64
}

/// Run the full benchmark described by `config`. Simultaneous mode needs
/// the synthesized `library`, and `ions` must match the one it was built
/// for; single mode benchmarks each ion of `ions` independently.
pub fn run_rb(
    config: &RBConfig,
    noise: &NoiseModel,
    ions: &IonSet,
    library: Option<&SequenceLibrary>,
) -> Result<RBResult> {
    config.validate()?;
    noise.validate()?;
    let table = build_clifford_table()?;
    let survivals = match config.mode {
        RBMode::Single => run_single_mode(config, noise, ions, &table)?,
        RBMode::Simultaneous => {
            let lib = library.ok_or_else(|| {
                Error::invalid("library", "simultaneous mode needs a sequence library")
            })?;
            if ions.a_pi_all() != lib.ions().a_pi_all() {
                return Err(Error::invalid(
                    "ions",
                    "ion set does not match the one the library was synthesized for",
                ));
            }
            run_simultaneous_mode(config, noise, lib, &table)?
        }
    };

    let n_ions = match config.mode {
        RBMode::Single => ions.len(),
        RBMode::Simultaneous => 2,
    };
    let mut fits = Vec::with_capacity(n_ions);
    for ion in 0..n_ions {
        let points: Vec<(f64, f64)> = survivals
            .iter()
            .filter(|p| p.ion == ion)
            .map(|p| (p.length, p.survival))
            .collect();
        fits.push(fit_decay(ion, &points)?);
    }
    Ok(RBResult {
        mode: config.mode,
        gate_metric: config.gate_metric,
        survivals,
        fits,
    })
}

fn run_single_mode(
    config: &RBConfig,
    noise: &NoiseModel,
    ions: &IonSet,
    table: &CliffordTable,
) -> Result<Vec<SurvivalPoint>> {
    let n_ions = ions.len();
    let trials = config.trials_per_length;
    let jobs = config.lengths.len() * trials * n_ions;
    // Each ion gets its own stream family; trials then derive from
    // (base, length, trial) so results are independent of execution order.
    let rows = par::map_indexed(jobs, |j| -> Result<SurvivalPoint> {
        let li = j / (trials * n_ions);
        let trial = (j / n_ions) % trials;
        let ion = j % n_ions;
        let m = config.lengths[li];
        let base = derive_seed(config.seed, 0x51, ion as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, m as u64, trial as u64));
        let seq = gen_rb_sequence(m, &mut rng, table);
        let compiled = compile_single(&seq.indices(), table, ions.a_pi(ion), &config.timing)?;

        let mut state = QubitState::mixed_ground(config.prep_error, noise.spectators.len());
        let expected = if config.spam_reference {
            run_reference_train(&mut state, &compiled.pulses, config.timing.delay_s, noise);
            // Nothing is played, so the reference measures return to |0>.
            [0.0, 0.0, 1.0]
        } else {
            run_pulse_train(
                &mut state,
                &compiled.pulses,
                config.timing.delay_s,
                ions.a_pi(ion),
                noise,
            )?;
            if seq.expected_up {
                [0.0, 0.0, 1.0]
            } else {
                [0.0, 0.0, -1.0]
            }
        };
        let mut survival = state.overlap_with_bloch(expected);
        if let Some(shots) = config.shots {
            survival = sample_binomial(&mut rng, shots, survival);
        }
        // Integrator rounding can leave the expectation a few 1e-12 outside
        // [0, 1]; report a probability.
        survival = survival.clamp(0.0, 1.0);
        let length = match config.gate_metric {
            GateMetric::Clifford => m as f64,
            GateMetric::AddressedGate => compiled.pulses.len() as f64,
        };
        Ok(SurvivalPoint {
            ion,
            length,
            trial,
            survival,
        })
    });
    rows.into_iter().collect()
}

fn run_simultaneous_mode(
    config: &RBConfig,
    noise: &NoiseModel,
    library: &SequenceLibrary,
    table: &CliffordTable,
) -> Result<Vec<SurvivalPoint>> {
    let ions = library.ions();
    let trials = config.trials_per_length;
    let jobs = config.lengths.len() * trials;
    let rows = par::map_indexed(jobs, |j| -> Result<[SurvivalPoint; 2]> {
        let li = j / trials;
        let trial = j % trials;
        let m = config.lengths[li];
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, m as u64, trial as u64));
        // One rng per trial, ion 0's stream drawn first.
        let seqs = [
            gen_rb_sequence(m, &mut rng, table),
            gen_rb_sequence(m, &mut rng, table),
        ];
        let words = [
            stream_gates(&seqs[0].indices(), table),
            stream_gates(&seqs[1].indices(), table),
        ];
        let trains = compile_simultaneous(&words[0], &words[1], library)?;
        let n_slots = words[0].len().max(words[1].len());

        let mut out = [SurvivalPoint {
            ion: 0,
            length: 0.0,
            trial,
            survival: 0.0,
        }; 2];
        for ion in 0..2 {
            let mut state = QubitState::mixed_ground(config.prep_error, noise.spectators.len());
            let expected = if config.spam_reference {
                for seq in &trains {
                    run_reference_train(&mut state, seq.pulses(), seq.delay_s(), noise);
                }
                [0.0, 0.0, 1.0]
            } else {
                for seq in &trains {
                    run_pulse_train(&mut state, seq.pulses(), seq.delay_s(), ions.a_pi(ion), noise)?;
                }
                if seqs[ion].expected_up {
                    [0.0, 0.0, 1.0]
                } else {
                    [0.0, 0.0, -1.0]
                }
            };
            let mut survival = state
                .overlap_with_bloch(expected)
                .clamp(0.0, 1.0);
            if let Some(shots) = config.shots {
                survival = sample_binomial(&mut rng, shots, survival);
            }
            let length = match config.gate_metric {
                GateMetric::Clifford => m as f64,
                GateMetric::AddressedGate => n_slots as f64,
            };
            out[ion] = SurvivalPoint {
                ion,
                length,
                trial,
                survival,
            };
        }
        Ok(out)
    });
    let mut flat = Vec::with_capacity(jobs * 2);
    for row in rows {
        flat.extend(row?);
    }
    Ok(flat)
}

/// Spread below which survivals are treated as constant: the fit reports
/// zero error with an infinite uncertainty instead of chasing noise in the
/// last bits.
const FLAT_TOL: f64 = 1e-13;

/// Least-squares fit of P(x) = 1/2 + (1/2 - s) alpha^x over one ion's
/// points. Uniform weights: survivals are exact expectations by default,
/// so there is no shot-noise structure to weight against.
pub fn fit_decay(ion: usize, points: &[(f64, f64)]) -> Result<DecayFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::FitFailed {
            reason: format!("need >= 3 distinct lengths, got {}", xs.len()),
        });
    }

    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let spread = points.iter().map(|p| p.1).fold(f64::MIN, f64::max)
        - points.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    if spread < FLAT_TOL {
        return Ok(DecayFit {
            ion,
            error_per_gate: 0.0,
            error_stderr: f64::INFINITY,
            spam: 1.0 - mean,
            alpha: 1.0,
        });
    }

    // Initial guess from the mean survivals at the shortest and longest
    // lengths; alpha0 falls back to "slow decay" when the endpoint ratio is
    // unusable.
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let mean_at = |x: f64| {
        let sel: Vec<f64> = points.iter().filter(|p| p.0 == x).map(|p| p.1).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let (p0, p1) = (mean_at(x0), mean_at(x1));
    let ratio = (p1 - 0.5) / (p0 - 0.5);
    let alpha0 = if ratio.is_finite() && ratio > 0.0 {
        ratio.powf(1.0 / (x1 - x0)).clamp(0.1, 1.0)
    } else {
        0.99
    };
    let s0 = 0.5 - (p0 - 0.5) / alpha0.powf(x0);

    let mut residuals = |p: &[f64], out: &mut [f64]| {
        let (alpha, s) = (p[0], p[1]);
        for (i, (x, y)) in points.iter().enumerate() {
            out[i] = 0.5 + (0.5 - s) * alpha.powf(*x) - y;
        }
    };
    let fit = crate::optim::levenberg_marquardt(
        &mut residuals,
        points.len(),
        &[alpha0, s0],
        &crate::optim::LmOptions::default(),
    );

    // Clamp a hair-above-one decay parameter (possible for near-flat data)
    // to the physical edge.
    let alpha = fit.params[0].min(1.0);
    let spam = fit.params[1];
    let error_per_gate = 0.5 * (1.0 - alpha);
    let error_stderr = fit
        .covariance()
        .map(|cov| 0.5 * cov[0].max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::FitFailed {
            reason: format!("decay parameter {alpha} outside (0, 1]"),
        });
    }
    Ok(DecayFit {
        ion,
        error_per_gate,
        error_stderr,
        spam,
        alpha,
    })
}
