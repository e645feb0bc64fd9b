// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Batch experiment runner behind the `compulse` binary.
//!
//! Experiments are described by a TOML config plus dotted-path command line
//! overrides (`--noise.t2_s=4.6`); the subcommand picks the experiment kind.
//! Every run writes its results as CSV/JSON files into the output directory,
//! together with the resolved config (`config.toml`) and a `manifest.json`
//! naming the config hash, seed, toolkit version, and wall-clock start and
//! finish. Given the same config and seed, result files are byte-identical
//! across runs; only the manifest differs (it carries the timestamps).

use crate::bench::{run_rb, RBConfig, RBMode, RBResult};
use crate::calib::{
    acceptance_loop, calibrate_amplitude, calibrate_detuning, calibrate_zeeman_compensation,
    drift_monitor, CalibrationRecord, ProbeSpec,
};
use crate::qsim::{error_budget, unit_channel_error, BudgetSpec, NoiseModel};
use crate::rotor::TargetGate;
use crate::synth::{
    orbit_classes, synthesize, AddressedGate, IonSet, Pulse, SequenceLibrary, SynthConfig,
};
use crate::util::derive_seed;
use crate::{par, Error, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Synthesize one shared pulse train for the configured target pair.
    Synth,
    /// List the equivalence classes of simultaneous gate pairs.
    Orbits,
    /// Randomized benchmarking, single-ion or simultaneous.
    Rb,
    /// Gate error versus detuning, amplitude, Zeeman offset, and delay.
    Sweep,
    /// Simulated calibration procedures against the configured noise.
    Calibrate,
    /// Per-source error budget table.
    Budget,
    /// Replay an amplitude trace through the repeated-pulse drift monitor.
    Drift,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Synth => "synth",
            ExperimentKind::Orbits => "orbits",
            ExperimentKind::Rb => "rb",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::Budget => "budget",
            ExperimentKind::Drift => "drift",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IonConfig {
    /// Relative pi-pulse amplitude of each ion.
    pub a_pi: Vec<f64>,
}

impl Default for IonConfig {
    fn default() -> Self {
        IonConfig {
            a_pi: vec![1.0, 1.25],
        }
    }
}

impl IonConfig {
    pub fn build(&self) -> Result<IonSet> {
        IonSet::new(self.a_pi.clone())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Drive-frequency offsets for the detuning panel (Hz).
    pub detuning_hz: Vec<f64>,
    /// Relative amplitude offsets from nominal.
    pub amp_offset: Vec<f64>,
    /// In-pulse frequency offsets from the calibrated compensation (Hz).
    pub zeeman_hz: Vec<f64>,
    /// Inter-pulse delays (s).
    pub delay_s: Vec<f64>,
}

fn mirrored(halves: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = halves.iter().map(|x| -x).chain(halves.iter().copied()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            detuning_hz: mirrored(&[25.0, 50.0, 100.0, 200.0, 400.0, 800.0]),
            amp_offset: mirrored(&[2.5e-4, 5e-4, 1e-3, 2e-3, 4e-3, 8e-3]),
            zeeman_hz: mirrored(&[50.0, 100.0, 200.0, 400.0, 800.0]),
            delay_s: vec![2e-6, 5e-6, 1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibProcedure {
    Amplitude,
    Detuning,
    Zeeman,
    Acceptance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub procedures: Vec<CalibProcedure>,
    /// Starting software amplitude correction for the amplitude procedure.
    pub init_scale: f64,
    /// Acceptance-loop error threshold per addressed gate.
    pub threshold: f64,
    /// Acceptance-loop candidate budget.
    pub budget: usize,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            procedures: vec![
                CalibProcedure::Amplitude,
                CalibProcedure::Detuning,
                CalibProcedure::Zeeman,
            ],
            init_scale: 1.0,
            threshold: 5e-5,
            budget: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    /// CSV file with header `time_s,amp_scale`; takes precedence over the
    /// inline trace.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_file: Option<String>,
    /// Inline trace as [time_s, amp_scale] rows.
    pub trace: Vec<(f64, f64)>,
    pub n_pulses: usize,
    /// Per-pulse rotation in pi units; each ion is probed at this fraction
    /// of its own pi amplitude, so 0.5 winds quarter turns on every ion.
    pub amplitude: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        DriftSection {
            trace_file: None,
            trace: (0..9).map(|i| (450.0 * i as f64, 1.0)).collect(),
            n_pulses: 101,
            amplitude: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Usually supplied by the subcommand rather than the file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    /// Mandatory, here or via --seed; runs take no wall-clock entropy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    /// Addressed gate per ion, e.g. ["XPlus", "YPlus"]; used by synth and
    /// the acceptance loop.
    pub targets: Vec<AddressedGate>,
    pub ions: IonConfig,
    pub noise: NoiseModel,
    pub rb: RBConfig,
    pub synth: SynthConfig,
    pub budget: BudgetSpec,
    pub sweep: SweepSection,
    pub calibrate: CalibrateSection,
    pub drift: DriftSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            seed: None,
            out_dir: None,
            targets: vec![AddressedGate::XPlus, AddressedGate::YPlus],
            ions: IonConfig::default(),
            noise: NoiseModel::default(),
            rb: RBConfig::default(),
            synth: SynthConfig::default(),
            budget: BudgetSpec::default(),
            sweep: SweepSection::default(),
            calibrate: CalibrateSection::default(),
            drift: DriftSection::default(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    /// SHA-256 of the resolved config as echoed to config.toml.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// UNIX seconds; the only nondeterministic output fields.
    pub started: f64,
    pub finished: f64,
}

/// Split raw argv into clap-visible args and `key=value` config overrides.
/// Any `--path=value` whose path is not one of the runner's own flags is an
/// override; nested fields use dots (`--noise.t2_s=4.6`).
pub fn split_cli_args(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut plain = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        if let Some(rest) = a.strip_prefix("--") {
            if let Some((k, v)) = rest.split_once('=') {
                if !matches!(k, "config" | "seed" | "out" | "help" | "version") {
                    overrides.push((k.to_string(), v.to_string()));
                    continue;
                }
            }
        }
        plain.push(a);
    }
    (plain, overrides)
}

fn parse_override_value(raw: &str) -> toml::Value {
    // Reuse TOML's own literal grammar so numbers, booleans, arrays and
    // quoted strings all work; fall back to a bare string.
    toml::from_str::<toml::Table>(&format!("x = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set `key` (dot-separated path) to `raw` in a TOML document, creating
/// intermediate tables as needed.
pub fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(key, "empty path segment"));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::invalid(key, format!("{part} is not a table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let leaf = parts[parts.len() - 1];
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::invalid(key, format!("{leaf}'s parent is not a table")))?;
    table.insert(leaf.to_string(), parse_override_value(raw));
    Ok(())
}

/// Load a config file (or start empty), apply overrides, deserialize.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut root: toml::Value = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            toml::from_str(&text).map_err(|e| Error::invalid("config", e.to_string()))?
        }
        None => toml::Value::Table(toml::Table::new()),
    };
    for (key, raw) in overrides {
        apply_override(&mut root, key, raw)?;
    }
    root.try_into()
        .map_err(|e| Error::invalid("config", e.to_string()))
}

#[derive(Parser, Debug)]
#[command(name = "compulse", version, about = "Composite-pulse gate toolkit runner")]
struct Cli {
    #[command(subcommand)]
    kind: ExperimentKind,
    /// TOML experiment config; flags and --key.path=value override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; mandatory unless the config file provides one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

/// Entry point for the binary; returns the process exit code.
pub fn main(args: Vec<String>) -> i32 {
    let (plain, overrides) = split_cli_args(args);
    let cli = match Cli::try_parse_from(plain) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_from_cli(cli, &overrides) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_from_cli(cli: Cli, overrides: &[(String, String)]) -> Result<Vec<PathBuf>> {
    let mut config = load_config(cli.config.as_deref(), overrides)?;
    match config.kind {
        None => config.kind = Some(cli.kind),
        Some(k) if k == cli.kind => {}
        Some(k) => {
            return Err(Error::invalid(
                "kind",
                format!("config says {k}, command line says {}", cli.kind),
            ))
        }
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = Some(out.display().to_string());
    }
    run_experiment(&config)
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_text(&path, text)?;
        self.files.push(path);
        Ok(())
    }
}

/// Run one experiment and return the files written, manifest last.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let started = unix_now();
    let kind = config
        .kind
        .ok_or_else(|| Error::invalid("kind", "no experiment kind; pass a subcommand"))?;
    let seed = config
        .seed
        .ok_or_else(|| Error::invalid("seed", "a seed is required (--seed or config)"))?;
    let dir = PathBuf::from(config.out_dir.as_deref().unwrap_or("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let ions = config.ions.build()?;
    config.noise.validate()?;

    let mut out = Outputs {
        dir,
        files: Vec::new(),
    };
    match kind {
        ExperimentKind::Synth => run_synth(config, &ions, seed, &mut out)?,
        ExperimentKind::Orbits => run_orbits(&mut out)?,
        ExperimentKind::Rb => run_rb_kind(config, &ions, seed, &mut out)?,
        ExperimentKind::Sweep => run_sweep(config, &ions, &mut out)?,
        ExperimentKind::Calibrate => run_calibrate(config, &ions, seed, &mut out)?,
        ExperimentKind::Budget => run_budget(config, &mut out)?,
        ExperimentKind::Drift => run_drift(config, &ions, &mut out)?,
    }

    // Echo the resolved config; the output location is wherever the files
    // already are, so it stays out of the echo and the hash.
    let mut echo = config.clone();
    echo.kind = Some(kind);
    echo.seed = Some(seed);
    echo.out_dir = None;
    let echo_text =
        toml::to_string_pretty(&echo).map_err(|e| Error::invalid("config", e.to_string()))?;
    out.write("config.toml", &echo_text)?;

    let manifest = Manifest {
        config_hash: sha256_hex(&echo_text),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: unix_now(),
    };
    let manifest_text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::invalid("manifest", e.to_string()))?;
    out.write("manifest.json", &manifest_text)?;
    Ok(out.files)
}

fn run_synth(config: &ExperimentConfig, ions: &IonSet, seed: u64, out: &mut Outputs) -> Result<()> {
    let targets: Vec<TargetGate> = config.targets.iter().map(|g| g.target()).collect();
    let result = synthesize(&targets, ions, &config.synth, seed)?;
    let json = serde_json::to_string_pretty(&result.to_file())
        .map_err(|e| Error::invalid("sequence", e.to_string()))?;
    out.write("sequence.json", &json)
}

#[derive(Serialize)]
struct MemberView {
    gates: [String; 2],
    shift_rad: f64,
}

#[derive(Serialize)]
struct OrbitView {
    representative: [String; 2],
    members: Vec<MemberView>,
}

fn run_orbits(out: &mut Outputs) -> Result<()> {
    let views: Vec<OrbitView> = orbit_classes()
        .iter()
        .map(|o| OrbitView {
            representative: [o.representative.0.to_string(), o.representative.1.to_string()],
            members: o
                .members
                .iter()
                .map(|m| MemberView {
                    gates: [m.gates.0.to_string(), m.gates.1.to_string()],
                    shift_rad: m.shift,
                })
                .collect(),
        })
        .collect();
    let json = serde_json::to_string_pretty(&views)
        .map_err(|e| Error::invalid("orbits", e.to_string()))?;
    out.write("orbits.json", &json)
}

fn run_rb_kind(
    config: &ExperimentConfig,
    ions: &IonSet,
    seed: u64,
    out: &mut Outputs,
) -> Result<()> {
    let mut rb = config.rb.clone();
    rb.seed = seed;
    let library;
    let lib_ref = match rb.mode {
        RBMode::Single => None,
        RBMode::Simultaneous => {
            library = SequenceLibrary::build(ions, &config.synth, derive_seed(seed, 0x11b, 0))?;
            Some(&library)
        }
    };
    let result = run_rb(&rb, &config.noise, ions, lib_ref)?;

    let mut csv = String::from("mode,ion,length,trial,survival\n");
    for p in &result.survivals {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            result.mode, p.ion, p.length, p.trial, p.survival
        );
    }
    out.write("results.csv", &csv)?;

    let fits = serde_json::to_string_pretty(&result.fits)
        .map_err(|e| Error::invalid("fits", e.to_string()))?;
    out.write("fits.json", &fits)?;

    match rb.mode {
        RBMode::Single => emit_fig1b(&rb, ions, &result, out),
        RBMode::Simultaneous => emit_fig4b(&rb, ions, &result, out),
    }
}

fn fit_survival(fit: &crate::bench::DecayFit, x: f64) -> f64 {
    0.5 + (0.5 - fit.spam) * fit.alpha.powf(x)
}

/// Decay curve data: one row per requested length, averaged over trials
/// and ions.
fn emit_fig1b(rb: &RBConfig, ions: &IonSet, result: &RBResult, out: &mut Outputs) -> Result<()> {
    let per_len = rb.trials_per_length * ions.len();
    let mut csv = String::from("length,error,fit\n");
    for chunk in result.survivals.chunks(per_len) {
        let n = chunk.len() as f64;
        let x = chunk.iter().map(|p| p.length).sum::<f64>() / n;
        let p = chunk.iter().map(|p| p.survival).sum::<f64>() / n;
        let fit = result.fits.iter().map(|f| fit_survival(f, x)).sum::<f64>()
            / result.fits.len() as f64;
        let _ = writeln!(csv, "{},{},{}", x, 1.0 - p, 1.0 - fit);
    }
    out.write("fig1b.csv", &csv)
}

/// Per-ion decay curves of a simultaneous run.
fn emit_fig4b(rb: &RBConfig, ions: &IonSet, result: &RBResult, out: &mut Outputs) -> Result<()> {
    let per_len = rb.trials_per_length * ions.len();
    let mut csv = String::from("ion,length,error,fit\n");
    for ion in 0..ions.len() {
        let fit = &result.fits[ion];
        for chunk in result.survivals.chunks(per_len) {
            let pts: Vec<_> = chunk.iter().filter(|p| p.ion == ion).collect();
            let n = pts.len() as f64;
            let x = pts.iter().map(|p| p.length).sum::<f64>() / n;
            let p = pts.iter().map(|p| p.survival).sum::<f64>() / n;
            let _ = writeln!(csv, "{},{},{},{}", ion, x, 1.0 - p, 1.0 - fit_survival(fit, x));
        }
    }
    out.write("fig4b.csv", &csv)
}

/// Quadratic guide line anchored at the largest-offset point, where the
/// swept error dominates any noise floor.
fn anchored_quadratic(values: &[f64], measured: &[f64]) -> Vec<f64> {
    let mut anchor = (0.0f64, 0.0f64);
    for (x, m) in values.iter().zip(measured) {
        if x.abs() > anchor.0.abs() {
            anchor = (*x, *m);
        }
    }
    if anchor.0 == 0.0 {
        return vec![0.0; values.len()];
    }
    values
        .iter()
        .map(|x| anchor.1 * (x / anchor.0).powi(2))
        .collect()
}

fn sweep_csv(var: &str, values: &[f64], measured: &[f64], model: &[f64]) -> String {
    let mut csv = format!("{var},measured,model\n");
    for i in 0..values.len() {
        let _ = writeln!(csv, "{},{},{}", values[i], measured[i], model[i]);
    }
    csv
}

fn run_sweep(config: &ExperimentConfig, ions: &IonSet, out: &mut Outputs) -> Result<()> {
    let timing = config.rb.timing;
    let pulse = Pulse::new(0.5, 0.0, timing.duration_s, timing.ramp_s)?;
    let a_pi = ions.a_pi(0);
    let base = &config.noise;

    // Sweep points are independent; fan out and keep file writes here.
    let measure = |noises: Vec<NoiseModel>, delays: Vec<f64>| -> Result<Vec<f64>> {
        let results = par::map_indexed(noises.len(), |i| {
            unit_channel_error(&noises[i], &pulse, delays[i], a_pi)
        });
        results.into_iter().collect()
    };

    let xs = &config.sweep.detuning_hz;
    let noises: Vec<NoiseModel> = xs
        .iter()
        .map(|x| NoiseModel {
            detuning_hz: *x,
            ..base.clone()
        })
        .collect();
    let measured = measure(noises, vec![timing.delay_s; xs.len()])?;
    let model = anchored_quadratic(xs, &measured);
    out.write("figS4_a.csv", &sweep_csv("detuning_hz", xs, &measured, &model))?;

    let xs = &config.sweep.amp_offset;
    let noises: Vec<NoiseModel> = xs
        .iter()
        .map(|x| NoiseModel {
            amp_scale: base.amp_scale + x,
            ..base.clone()
        })
        .collect();
    let measured = measure(noises, vec![timing.delay_s; xs.len()])?;
    let model = anchored_quadratic(xs, &measured);
    out.write("figS4_b.csv", &sweep_csv("amp_offset", xs, &measured, &model))?;

    let xs = &config.sweep.zeeman_hz;
    let noises: Vec<NoiseModel> = xs
        .iter()
        .map(|x| NoiseModel {
            zeeman_shift_hz: base.zeeman_shift_hz + x,
            ..base.clone()
        })
        .collect();
    let measured = measure(noises, vec![timing.delay_s; xs.len()])?;
    let model = anchored_quadratic(xs, &measured);
    out.write(
        "figS4_c.csv",
        &sweep_csv("zeeman_offset_hz", xs, &measured, &model),
    )?;

    let xs = &config.sweep.delay_s;
    let noises: Vec<NoiseModel> = xs.iter().map(|_| base.clone()).collect();
    let measured = measure(noises, xs.clone())?;
    let model: Vec<f64> = if base.t2_s.is_finite() {
        xs.iter()
            .map(|x| (timing.duration_s + x) / (3.0 * base.t2_s))
            .collect()
    } else {
        vec![0.0; xs.len()]
    };
    out.write("figS4_d.csv", &sweep_csv("delay_s", xs, &measured, &model))
}

fn push_history(csv: &mut String, rec: &CalibrationRecord) {
    for s in &rec.history {
        let _ = writeln!(csv, "{},{},{},{}", s.step, s.parameter, s.value, s.residual);
    }
    // Close each procedure's block with its result.
    let _ = writeln!(
        csv,
        "{},{},{},{}",
        rec.iterations, rec.parameter, rec.value, rec.residual
    );
}

fn run_calibrate(
    config: &ExperimentConfig,
    ions: &IonSet,
    seed: u64,
    out: &mut Outputs,
) -> Result<()> {
    let section = &config.calibrate;
    let a0 = ions.a_pi(0);
    let mut csv = String::from("step,parameter,value,residual\n");
    for proc in &section.procedures {
        match proc {
            CalibProcedure::Amplitude => {
                push_history(
                    &mut csv,
                    &calibrate_amplitude(&config.noise, a0, section.init_scale)?,
                );
            }
            CalibProcedure::Detuning => {
                push_history(&mut csv, &calibrate_detuning(&config.noise, a0)?);
            }
            CalibProcedure::Zeeman => {
                push_history(&mut csv, &calibrate_zeeman_compensation(&config.noise, a0)?);
            }
            CalibProcedure::Acceptance => {
                if config.targets.len() != 2 {
                    return Err(Error::invalid(
                        "targets",
                        format!("acceptance loop needs a pair, got {}", config.targets.len()),
                    ));
                }
                let state = acceptance_loop(
                    (config.targets[0], config.targets[1]),
                    ions,
                    &config.noise,
                    section.threshold,
                    section.budget,
                    seed,
                )?;
                let mut fig = String::from("candidate,error,threshold\n");
                for c in &state.candidates {
                    let _ = writeln!(fig, "{},{},{}", c.candidate, c.rb_error, state.threshold);
                }
                out.write("figS2.csv", &fig)?;
                if state.accepted.is_none() {
                    out.write("calibration.csv", &csv)?;
                    return Err(Error::BudgetExhausted {
                        what: "acceptance-loop candidates".to_string(),
                        budget: section.budget,
                        criterion: format!("rb error < {}", section.threshold),
                    });
                }
            }
        }
    }
    out.write("calibration.csv", &csv)
}

fn run_budget(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let budget = error_budget(&config.budget)?;
    let mut csv = String::from("source,error_per_clifford\n");
    for row in &budget.rows {
        let _ = writeln!(csv, "{},{}", row.source, row.error_per_clifford);
    }
    let _ = writeln!(csv, "total,{}", budget.total);
    out.write("budget.csv", &csv)
}

fn parse_trace_csv(text: &str, path: &str) -> Result<Vec<(f64, f64)>> {
    let mut trace = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("time_s")) {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |f: Option<&str>| -> Option<f64> { f.and_then(|s| s.trim().parse().ok()) };
        match (parse(fields.next()), parse(fields.next())) {
            (Some(t), Some(s)) => trace.push((t, s)),
            _ => {
                return Err(Error::invalid(
                    path,
                    format!("line {} is not time_s,amp_scale", i + 1),
                ))
            }
        }
    }
    Ok(trace)
}

fn run_drift(config: &ExperimentConfig, ions: &IonSet, out: &mut Outputs) -> Result<()> {
    let section = &config.drift;
    let trace = match &section.trace_file {
        Some(f) => {
            let text = fs::read_to_string(f).map_err(|e| Error::io(f.clone(), e))?;
            parse_trace_csv(&text, f)?
        }
        None => section.trace.clone(),
    };
    if trace.is_empty() {
        return Err(Error::invalid("drift.trace", "no trace points"));
    }
    // Each ion gets its own probe train scaled to its pi amplitude. A
    // shared drive can only wind an odd quarter-turn count onto every ion
    // for special a_pi ratios, and the monitor does not need simultaneity.
    let mut by_ion = Vec::with_capacity(ions.len());
    for ion in 0..ions.len() {
        let single = IonSet::new(vec![ions.a_pi(ion)])?;
        let probe = ProbeSpec {
            n_pulses: section.n_pulses,
            amplitude: section.amplitude * ions.a_pi(ion),
            timing: config.rb.timing,
        };
        by_ion.push(drift_monitor(&config.noise, &single, &probe, &trace)?);
    }
    let mut csv = String::from("time_s,ion,amp_error,pulse_error\n");
    for t in 0..trace.len() {
        for (ion, points) in by_ion.iter().enumerate() {
            let p = &points[t];
            let _ = writeln!(csv, "{},{},{},{}", p.time_s, ion, p.amp_error, p.pulse_error);
        }
    }
    out.write("figS5.csv", &csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::GateMetric;

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    fn base_config(kind: ExperimentKind, seed: u64, dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            kind: Some(kind),
            seed: Some(seed),
            out_dir: Some(dir.display().to_string()),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let mut root = toml::Value::Table(toml::Table::new());
        apply_override(&mut root, "noise.t2_s", "4.6").unwrap();
        apply_override(&mut root, "rb.lengths", "[1, 4, 16]").unwrap();
        apply_override(&mut root, "rb.mode", "\"simultaneous\"").unwrap();
        apply_override(&mut root, "seed", "9").unwrap();
        let cfg: ExperimentConfig = root.try_into().unwrap();
        assert_eq!(cfg.noise.t2_s, 4.6);
        assert_eq!(cfg.rb.lengths, vec![1, 4, 16]);
        assert_eq!(cfg.rb.mode, RBMode::Simultaneous);
        assert_eq!(cfg.seed, Some(9));
    }

    #[test]
    fn unknown_override_keys_are_rejected() {
        let mut root = toml::Value::Table(toml::Table::new());
        apply_override(&mut root, "noise.t2", "4.6").unwrap();
        let err = load_err(root);
        assert!(err.contains("t2"), "error does not name the field: {err}");

        fn load_err(root: toml::Value) -> String {
            let r: std::result::Result<ExperimentConfig, _> = root.try_into();
            r.err().map(|e| e.to_string()).unwrap()
        }
    }

    #[test]
    fn split_separates_overrides_from_flags() {
        let args: Vec<String> = [
            "compulse",
            "rb",
            "--seed=5",
            "--noise.t2_s=4.6",
            "--out",
            "d",
            "--rb.lengths=[1,2]",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let (plain, overrides) = split_cli_args(args);
        assert_eq!(plain, vec!["compulse", "rb", "--seed=5", "--out", "d"]);
        assert_eq!(
            overrides,
            vec![
                ("noise.t2_s".to_string(), "4.6".to_string()),
                ("rb.lengths".to_string(), "[1,2]".to_string()),
            ]
        );
    }

    #[test]
    fn rb_reruns_are_byte_identical_except_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let run = |name: &str| -> PathBuf {
            let dir = tmp.path().join(name);
            let mut cfg = base_config(ExperimentKind::Rb, 33, &dir);
            cfg.ions.a_pi = vec![1.0];
            cfg.noise.t2_s = 0.05;
            cfg.noise.detuning_hz = 60.0;
            cfg.rb.lengths = vec![1, 4, 16];
            cfg.rb.trials_per_length = 2;
            cfg.rb.shots = Some(200);
            run_experiment(&cfg).unwrap();
            dir
        };
        let a = run("a");
        let b = run("b");
        for name in ["results.csv", "fits.json", "fig1b.csv", "config.toml"] {
            assert_eq!(read(&a, name), read(&b, name), "{name} differs");
        }
        let ma: Manifest = serde_json::from_str(&read(&a, "manifest.json")).unwrap();
        let mb: Manifest = serde_json::from_str(&read(&b, "manifest.json")).unwrap();
        assert_eq!(ma.config_hash, mb.config_hash);
        assert_eq!(ma.seed, 33);
        assert!(ma.finished >= ma.started);

        // The figure file carries one row per requested length.
        let fig = read(&a, "fig1b.csv");
        assert_eq!(fig.lines().count(), 1 + 3);
    }

    #[test]
    fn simultaneous_rb_emits_per_ion_figure() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("rb");
        let mut cfg = base_config(ExperimentKind::Rb, 5, &dir);
        cfg.rb.lengths = vec![1, 3, 6];
        cfg.rb.trials_per_length = 2;
        cfg.rb.mode = RBMode::Simultaneous;
        cfg.rb.gate_metric = GateMetric::AddressedGate;
        run_experiment(&cfg).unwrap();
        let fig = read(&dir, "fig4b.csv");
        assert_eq!(fig.lines().count(), 1 + 2 * 3);
        let results = read(&dir, "results.csv");
        assert!(results.starts_with("mode,ion,length,trial,survival\n"));
        assert!(results.lines().nth(1).unwrap().starts_with("simultaneous,"));
    }

    #[test]
    fn orbit_listing_has_six_classes() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("orbits");
        let cfg = base_config(ExperimentKind::Orbits, 1, &dir);
        run_experiment(&cfg).unwrap();
        let views: serde_json::Value = serde_json::from_str(&read(&dir, "orbits.json")).unwrap();
        assert_eq!(views.as_array().unwrap().len(), 6);
        for orbit in views.as_array().unwrap() {
            assert_eq!(orbit["members"].as_array().unwrap().len(), 4);
        }
    }

    #[test]
    fn synth_emits_a_converged_sequence() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("synth");
        let cfg = base_config(ExperimentKind::Synth, 17, &dir);
        run_experiment(&cfg).unwrap();
        let seq: serde_json::Value = serde_json::from_str(&read(&dir, "sequence.json")).unwrap();
        assert!(seq["residual_cost"].as_f64().unwrap() < 1e-9);
        assert_eq!(seq["pulses"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn budget_rows_sum_to_total() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("budget");
        let cfg = base_config(ExperimentKind::Budget, 1, &dir);
        run_experiment(&cfg).unwrap();
        let csv = read(&dir, "budget.csv");
        let mut sum = 0.0;
        let mut total = None;
        for line in csv.lines().skip(1) {
            let (name, value) = line.split_once(',').unwrap();
            let value: f64 = value.parse().unwrap();
            if name == "total" {
                total = Some(value);
            } else {
                sum += value;
            }
        }
        let total = total.expect("no total row");
        assert!((sum - total).abs() <= 1e-12 * total.max(1e-300));
    }

    #[test]
    fn detuning_sweep_is_symmetric() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("sweep");
        let cfg = base_config(ExperimentKind::Sweep, 1, &dir);
        run_experiment(&cfg).unwrap();
        let csv = read(&dir, "figS4_a.csv");
        let rows: Vec<(f64, f64)> = csv
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap())
            })
            .collect();
        for (x, m) in &rows {
            let (_, m_neg) = rows
                .iter()
                .find(|(x2, _)| (*x2 + *x).abs() < 1e-9)
                .expect("missing mirrored point");
            assert!(
                (m - m_neg).abs() <= 1e-6 * m.abs().max(*m_neg),
                "asymmetric at {x}: {m} vs {m_neg}"
            );
        }
    }

    #[test]
    fn calibrate_writes_history_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("cal");
        let mut cfg = base_config(ExperimentKind::Calibrate, 3, &dir);
        cfg.noise.detuning_hz = 120.0;
        cfg.calibrate.procedures = vec![CalibProcedure::Detuning];
        run_experiment(&cfg).unwrap();
        let csv = read(&dir, "calibration.csv");
        assert!(csv.starts_with("step,parameter,value,residual\n"));
        let last = csv.lines().last().unwrap();
        let fields: Vec<&str> = last.split(',').collect();
        assert_eq!(fields[1], "detuning_hz");
        let value: f64 = fields[2].parse().unwrap();
        assert!((value - 120.0).abs() < 5.0, "recovered {value}");
    }

    #[test]
    fn acceptance_history_carries_constant_threshold() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("acc");
        let mut cfg = base_config(ExperimentKind::Calibrate, 11, &dir);
        cfg.calibrate.procedures = vec![CalibProcedure::Acceptance];
        cfg.calibrate.budget = 3;
        run_experiment(&cfg).unwrap();
        let csv = read(&dir, "figS2.csv");
        assert!(csv.starts_with("candidate,error,threshold\n"));
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[2].parse::<f64>().unwrap(), 5e-5);
            assert!(fields[1].parse::<f64>().unwrap() < 5e-5);
        }
    }

    #[test]
    fn drift_replays_a_trace_file() {
        let tmp = tempfile::tempdir().unwrap();
        let trace_path = tmp.path().join("trace.csv");
        fs::write(&trace_path, "time_s,amp_scale\n0,1.0\n600,1.0002\n1200,1.0004\n").unwrap();
        let dir = tmp.path().join("drift");
        let mut cfg = base_config(ExperimentKind::Drift, 1, &dir);
        cfg.ions.a_pi = vec![1.0];
        cfg.drift.trace_file = Some(trace_path.display().to_string());
        run_experiment(&cfg).unwrap();
        let csv = read(&dir, "figS5.csv");
        assert_eq!(csv.lines().count(), 1 + 3);
        let last = csv.lines().last().unwrap();
        let fields: Vec<&str> = last.split(',').collect();
        let inferred: f64 = fields[2].parse().unwrap();
        assert!((inferred - 4e-4).abs() < 2e-5, "inferred {inferred}");
    }

    #[test]
    fn drift_probes_every_ion_of_the_default_register() {
        // a_pi 1.0 and 1.25 admit no shared probe with odd quarter turns
        // on both ions, so this only works with per-ion probe scaling.
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("drift");
        let mut cfg = base_config(ExperimentKind::Drift, 1, &dir);
        cfg.noise.amp_scale = 1.0003;
        cfg.drift.trace = vec![(0.0, 1.0), (450.0, 1.0)];
        run_experiment(&cfg).unwrap();
        let csv = read(&dir, "figS5.csv");
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            let inferred: f64 = fields[2].parse().unwrap();
            assert!((inferred - 3e-4).abs() < 2e-5, "row {line}");
        }
    }
}
