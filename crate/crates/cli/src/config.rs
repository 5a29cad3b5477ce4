//! Experiment files: TOML with strict units, checked in three passes.
//!
//! 1. structure: kind known, no sections the kind does not use, every
//!    required key present (all missing keys are reported together);
//! 2. schema: types, units and unknown keys via serde;
//! 3. values: ranges and cross-field constraints.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use metabattle::optimizers::OptimizerSettings;
use metabattle::{BattleSchedule, ObjectiveSense, OptimizerKind, PropagationParams, TimingMode};

use crate::units::{Angle, Frequency, Length, Level};

/// One problem found in a config file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// All diagnostics of one file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            match d.line {
                Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, d.message)?,
                None => write!(f, "{}: {}", self.path.display(), d.message)?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Battle,
    AlgorithmMatrix,
    SpeedMatrix,
    ElementMatrix,
    FrequencySweep,
    DistanceSweep,
    OrientationSweep,
    CouplingTest,
    Jamming,
    Protego,
    Irshield,
    Risiren,
}

const GEOMETRY: &[&str] = &["geometry.distance_a", "geometry.distance_b", "geometry.frequency"];
const PARTIES: &[&str] = &["party_a.optimizer", "party_a.sense", "party_b.optimizer", "party_b.sense"];
const SCHEDULE: &[&str] = &["schedule.mode", "schedule.steps"];

/// Static facts about one kind.
pub struct KindInfo {
    pub kind: Kind,
    pub name: &'static str,
    pub description: &'static str,
    /// README section describing the experiment.
    pub anchor: &'static str,
    /// Top-level sections the kind reads.
    pub sections: &'static [&'static str],
    /// Dotted keys that must be present (besides `kind` and `seed`).
    pub required: &'static [&'static [&'static str]],
}

pub const KINDS: [KindInfo; 12] = [
    KindInfo {
        kind: Kind::Battle,
        name: "battle",
        description: "one battle between two optimizers; per-step trace and outcome",
        anchor: "#battle",
        sections: &["geometry", "propagation", "party_a", "party_b", "schedule"],
        required: &[GEOMETRY, PARTIES, SCHEDULE],
    },
    KindInfo {
        kind: Kind::AlgorithmMatrix,
        name: "algorithm_matrix",
        description: "every ordered pair of optimizer kinds fought simultaneously",
        anchor: "#algorithm_matrix",
        sections: &["geometry", "propagation", "algorithm_matrix"],
        required: &[
            GEOMETRY,
            &["algorithm_matrix.kinds", "algorithm_matrix.sense_a", "algorithm_matrix.steps", "algorithm_matrix.trials"],
        ],
    },
    KindInfo {
        kind: Kind::SpeedMatrix,
        name: "speed_matrix",
        description: "battles for every pair of pause values (relative speed)",
        anchor: "#speed_matrix",
        sections: &["geometry", "propagation", "party_a", "party_b", "speed_matrix"],
        required: &[GEOMETRY, PARTIES, &["speed_matrix.pauses", "speed_matrix.steps", "speed_matrix.trials"]],
    },
    KindInfo {
        kind: Kind::ElementMatrix,
        name: "element_matrix",
        description: "battles for every pair of active element counts",
        anchor: "#element_matrix",
        sections: &["geometry", "propagation", "party_a", "party_b", "element_matrix"],
        required: &[GEOMETRY, PARTIES, &["element_matrix.counts", "element_matrix.steps", "element_matrix.trials"]],
    },
    KindInfo {
        kind: Kind::FrequencySweep,
        name: "frequency_sweep",
        description: "carrier sweep: direct-path variation and post-battle gain",
        anchor: "#frequency_sweep",
        sections: &["geometry", "propagation", "party_a", "party_b", "schedule", "frequency_sweep"],
        required: &[GEOMETRY, PARTIES, SCHEDULE, &["frequency_sweep.frequencies", "frequency_sweep.trials"]],
    },
    KindInfo {
        kind: Kind::DistanceSweep,
        name: "distance_sweep",
        description: "surface-to-antenna distances against mutual SNR and gain",
        anchor: "#distance_sweep",
        sections: &["propagation", "party_a", "party_b", "schedule", "distance_sweep"],
        required: &[PARTIES, SCHEDULE, &["distance_sweep.points", "distance_sweep.trials"]],
    },
    KindInfo {
        kind: Kind::OrientationSweep,
        name: "orientation_sweep",
        description: "surface B turned away step by step",
        anchor: "#orientation_sweep",
        sections: &["geometry", "propagation", "party_a", "party_b", "schedule", "orientation_sweep"],
        required: &[GEOMETRY, PARTIES, SCHEDULE, &["orientation_sweep.angles", "orientation_sweep.trials"]],
    },
    KindInfo {
        kind: Kind::CouplingTest,
        name: "coupling_test",
        description: "superposition error of facing surfaces, with and without coupling",
        anchor: "#coupling_test",
        sections: &["propagation", "coupling_test"],
        required: &[&[
            "coupling_test.separation",
            "coupling_test.angles",
            "coupling_test.ensemble",
            "coupling_test.trials",
            "coupling_test.steps",
        ]],
    },
    KindInfo {
        kind: Kind::Jamming,
        name: "jamming",
        description: "reception rate against jamming power: baseline, attack, defense",
        anchor: "#jamming",
        sections: &["propagation", "jamming"],
        required: &[&["jamming.steps", "jamming.packets", "jamming.gains"]],
    },
    KindInfo {
        kind: Kind::Protego,
        name: "protego",
        description: "secure QPSK with an obfuscating set, then Eve's counterattack",
        anchor: "#protego",
        sections: &["propagation", "protego"],
        required: &[&["protego.eve_surface_distance", "protego.symbols"]],
    },
    KindInfo {
        kind: Kind::Irshield,
        name: "irshield",
        description: "motion detection under IRShield, with and without an attacker",
        anchor: "#irshield",
        sections: &["irshield"],
        required: &[&["irshield"]],
    },
    KindInfo {
        kind: Kind::Risiren,
        name: "risiren",
        description: "spoofed Doppler spectrogram by toggling, then the defense",
        anchor: "#risiren",
        sections: &["geometry", "propagation", "risiren"],
        required: &[GEOMETRY, &["risiren.target"]],
    },
];

pub fn info(kind: Kind) -> &'static KindInfo {
    KINDS.iter().find(|k| k.kind == kind).expect("every kind is listed")
}

const BASE_KEYS: &[&str] = &["kind", "seed", "output"];

// ----- schema -----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<PropagationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party_a: Option<PartyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party_b: Option<PartyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm_matrix: Option<AlgorithmMatrixConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_matrix: Option<SpeedMatrixConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_matrix: Option<ElementMatrixConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_sweep: Option<FrequencySweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_sweep: Option<DistanceSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation_sweep: Option<OrientationSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_test: Option<CouplingTestConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jamming: Option<JammingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protego: Option<ProtegoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irshield: Option<IrshieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risiren: Option<RisirenConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub distance_a: Length,
    pub distance_b: Length,
    pub frequency: Frequency,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub path_loss_exponent: Option<f64>,
    pub rician_k: Option<f64>,
    pub element_gain: Option<f64>,
    pub direct_attenuation: Option<Level>,
    /// Measurement noise power, `10·log10` of the variance.
    pub noise: Option<Level>,
    pub coupling: Option<bool>,
    pub motion: Option<MotionConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    pub ar_coefficient: Option<f64>,
    pub perturbation_std: Option<f64>,
    pub element_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettingsConfig {
    pub refresh_interval: Option<usize>,
    pub mutation_mean_fraction: Option<f64>,
    pub mutation_max_fraction: Option<f64>,
    pub probe_factor: Option<usize>,
    pub beam_candidates: Option<usize>,
    pub beam_range: Option<Length>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyConfig {
    pub optimizer: OptimizerKind,
    pub sense: ObjectiveSense,
    #[serde(default)]
    pub settings: SettingsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: TimingMode,
    pub steps: usize,
    #[serde(default = "one")]
    pub pause_a: usize,
    #[serde(default = "one")]
    pub pause_b: usize,
    #[serde(default = "default_baseline_trials")]
    pub baseline_trials: usize,
}

fn one() -> usize {
    1
}

fn default_baseline_trials() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmMatrixConfig {
    pub kinds: Vec<OptimizerKind>,
    pub sense_a: ObjectiveSense,
    pub steps: usize,
    pub trials: usize,
    #[serde(default)]
    pub settings: SettingsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedMatrixConfig {
    pub pauses: Vec<usize>,
    pub steps: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementMatrixConfig {
    pub counts: Vec<usize>,
    pub steps: usize,
    pub trials: usize,
}

fn default_probe_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySweepConfig {
    pub frequencies: Vec<Frequency>,
    pub trials: usize,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSweepConfig {
    /// `[distance_a, distance_b]` pairs.
    pub points: Vec<[Length; 2]>,
    pub trials: usize,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationSweepConfig {
    pub angles: Vec<Angle>,
    pub trials: usize,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingTestConfig {
    pub separation: Length,
    pub angles: Vec<Angle>,
    pub ensemble: usize,
    pub trials: usize,
    /// Optimization steps per surface before the comparison; 0 compares
    /// random configurations.
    pub steps: usize,
    #[serde(default = "maximize")]
    pub sense_a: ObjectiveSense,
    #[serde(default = "maximize")]
    pub sense_b: ObjectiveSense,
    /// Also run every angle with coupling switched off.
    #[serde(default = "yes")]
    pub reference: bool,
    /// Ensemble of the reference run; defaults to `ensemble`.
    #[serde(default)]
    pub reference_ensemble: Option<usize>,
    #[serde(default)]
    pub settings: SettingsConfig,
}

fn maximize() -> ObjectiveSense {
    ObjectiveSense::Maximize
}

fn yes() -> bool {
    true
}

/// Jamming gains from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainRange {
    pub start: Level,
    pub stop: Level,
    pub step: Level,
}

impl GainRange {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop.0 - self.start.0) / self.step.0 + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start.0 + i as f64 * self.step.0).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammingConfig {
    pub steps: usize,
    pub packets: usize,
    pub gains: GainRange,
    #[serde(default = "default_jam_snr")]
    pub snr: Level,
    #[serde(default = "default_jam_margin")]
    pub threshold_margin: Level,
    #[serde(default = "default_jitter_k")]
    pub jitter_k: f64,
    #[serde(default)]
    pub settings: SettingsConfig,
}

fn default_jam_snr() -> Level {
    Level(30.0)
}

fn default_jam_margin() -> Level {
    Level(16.0)
}

fn default_jitter_k() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtegoConfig {
    pub eve_surface_distance: Length,
    pub symbols: usize,
    #[serde(default = "default_set_size")]
    pub set_size: usize,
    #[serde(default = "default_backoff")]
    pub backoff: Level,
    #[serde(default = "default_build_steps")]
    pub build_steps: usize,
    #[serde(default = "default_counter_steps")]
    pub counter_steps: usize,
    #[serde(default = "default_protego_snr")]
    pub snr: Level,
    #[serde(default)]
    pub settings: SettingsConfig,
}

fn default_set_size() -> usize {
    4
}

fn default_backoff() -> Level {
    Level(3.0)
}

fn default_build_steps() -> usize {
    3000
}

fn default_counter_steps() -> usize {
    2000
}

fn default_protego_snr() -> Level {
    Level(25.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrshieldConfig {
    /// Rotation of the defender's surface about the vertical axis in the
    /// attacker run.
    #[serde(default = "default_defender_rotation")]
    pub defender_rotation: Angle,
    #[serde(default = "default_redraw")]
    pub redraw_period: usize,
    #[serde(default = "default_invert")]
    pub invert_period: usize,
    #[serde(default = "default_block")]
    pub block: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_false_alarm")]
    pub false_alarm: f64,
    #[serde(default = "default_attacker_steps")]
    pub attacker_steps: usize,
    #[serde(default = "default_attacker_window")]
    pub attacker_window: usize,
    #[serde(default)]
    pub settings: SettingsConfig,
}

fn default_defender_rotation() -> Angle {
    Angle(-std::f64::consts::FRAC_PI_2)
}

fn default_redraw() -> usize {
    16
}

fn default_invert() -> usize {
    4
}

fn default_block() -> usize {
    500
}

fn default_blocks() -> usize {
    8
}

fn default_window() -> usize {
    32
}

fn default_false_alarm() -> f64 {
    0.05
}

fn default_attacker_steps() -> usize {
    1000
}

fn default_attacker_window() -> usize {
    256
}

/// Spectrogram the spoofer imitates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    DopplerRamp { samples: usize, start: Frequency, end: Frequency },
    SquareWave { samples: usize, frequency: Frequency },
    Silent { samples: usize },
    /// One sample per line; relative paths start at the config file.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub window: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub sample_rate: Frequency,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window: 64,
            hop: 16,
            fft_size: 64,
            sample_rate: Frequency(100.0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: Option<usize>,
    pub mutation_rate: Option<f64>,
    pub crossover_rate: Option<f64>,
    pub elitism: Option<usize>,
    pub generations: Option<usize>,
    pub tournament: Option<usize>,
    pub polish_sweeps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisirenConfig {
    pub target: TargetConfig,
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default = "default_toggle_steps")]
    pub toggle_steps: usize,
    #[serde(default = "default_defense_steps")]
    pub defense_steps: usize,
    #[serde(default = "default_window")]
    pub defense_window: usize,
    /// Band whose spectrogram energy the defense is judged on.
    #[serde(default = "default_band")]
    pub band: [Frequency; 2],
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub settings: SettingsConfig,
}

fn default_toggle_steps() -> usize {
    1000
}

fn default_defense_steps() -> usize {
    2000
}

fn default_band() -> [Frequency; 2] {
    [Frequency(5.0), Frequency(25.0)]
}

// ----- conversions -----

impl SettingsConfig {
    pub fn resolve(&self) -> OptimizerSettings {
        let d = OptimizerSettings::default();
        OptimizerSettings {
            refresh_interval: self.refresh_interval.unwrap_or(d.refresh_interval),
            mutation_mean_fraction: self.mutation_mean_fraction.unwrap_or(d.mutation_mean_fraction),
            mutation_max_fraction: self.mutation_max_fraction.unwrap_or(d.mutation_max_fraction),
            probe_factor: self.probe_factor.unwrap_or(d.probe_factor),
            beam_candidates: self.beam_candidates.unwrap_or(d.beam_candidates),
            beam_range: self.beam_range.map_or(d.beam_range, |l| l.0),
        }
    }
}

impl PropagationConfig {
    /// Office defaults overridden by the given keys.
    pub fn resolve(&self) -> PropagationParams {
        let mut p = metabattle::scenarios::presets::office_params();
        if let Some(v) = self.path_loss_exponent {
            p.path_loss_exponent = v;
        }
        if let Some(v) = self.rician_k {
            p.rician_k = v;
        }
        if let Some(v) = self.element_gain {
            p.element_gain = v;
        }
        if let Some(v) = self.direct_attenuation {
            p.direct_attenuation_db = v.0;
        }
        if let Some(v) = self.noise {
            p.measurement_noise_variance = 10f64.powf(v.0 / 10.0);
        }
        if let Some(v) = self.coupling {
            p.coupling_enabled = v;
        }
        if let Some(m) = &self.motion {
            if let Some(v) = m.ar_coefficient {
                p.motion.ar_coefficient = v;
            }
            if let Some(v) = m.perturbation_std {
                p.motion.perturbation_std = v;
            }
            if let Some(v) = m.element_fraction {
                p.motion.element_fraction = v;
            }
        }
        p
    }
}

impl ScheduleConfig {
    pub fn resolve(&self) -> BattleSchedule {
        BattleSchedule {
            mode: self.mode,
            pause_a: self.pause_a,
            pause_b: self.pause_b,
            total_steps: self.steps,
            baseline_trials: self.baseline_trials,
        }
    }
}

impl GaConfig {
    pub fn resolve(&self) -> metabattle::scenarios::genetic::GaParams {
        let d = metabattle::scenarios::genetic::GaParams::default();
        metabattle::scenarios::genetic::GaParams {
            population: self.population.unwrap_or(d.population),
            mutation_rate: self.mutation_rate.or(d.mutation_rate),
            crossover_rate: self.crossover_rate.unwrap_or(d.crossover_rate),
            elitism: self.elitism.unwrap_or(d.elitism),
            generations: self.generations.unwrap_or(d.generations),
            tournament: self.tournament.unwrap_or(d.tournament),
            polish_sweeps: self.polish_sweeps.unwrap_or(d.polish_sweeps),
        }
    }
}

impl StftConfig {
    pub fn resolve(&self) -> metabattle::scenarios::spectrogram::StftParams {
        metabattle::scenarios::spectrogram::StftParams {
            window: self.window,
            hop: self.hop,
            fft_size: self.fft_size,
            sample_rate_hz: self.sample_rate.0,
        }
    }
}

impl ExperimentConfig {
    pub fn propagation(&self) -> PropagationParams {
        self.propagation.clone().unwrap_or_default().resolve()
    }

    /// Output directory: explicit key, else `results/<kind>`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| Path::new("results").join(info(self.kind).name))
    }
}

// ----- loading -----

/// A validated config plus the directory relative paths resolve against.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    /// Canonical JSON of the config, hashed into the manifest.
    pub canonical: String,
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let fail = |diagnostics| ConfigError {
        path: path.to_path_buf(),
        diagnostics,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(vec![Diagnostic::at(None, format!("cannot read file: {e}"))]))?;
    let config = parse(&text).map_err(fail)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(r) = &config.risiren {
        if matches!(r.target, TargetConfig::Csv { .. }) {
            crate::experiments::target_series(&r.target, &r.stft.resolve(), &base_dir)
                .map_err(|e| fail(vec![Diagnostic::at(locate(&text, Some("risiren.target"), "path"), e)]))?;
        }
    }
    let canonical = serde_json::to_string(&config).expect("config serializes");
    Ok(Loaded {
        config,
        base_dir,
        canonical,
    })
}

/// Runs all three passes on the file contents.
pub fn parse(text: &str) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let table: toml::Table = toml::from_str(text).map_err(|e| vec![toml_diagnostic(text, &e)])?;
    check_structure(text, &table)?;
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| vec![toml_diagnostic(text, &e)])?;
    let problems = check_values(text, &config);
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(problems)
    }
}

fn toml_diagnostic(text: &str, e: &toml::de::Error) -> Diagnostic {
    let line = e.span().map(|s| line_of(text, s.start));
    Diagnostic::at(line, e.message().trim().to_string())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn check_structure(text: &str, table: &toml::Table) -> Result<(), Vec<Diagnostic>> {
    let Some(kind_value) = table.get("kind") else {
        let mut d = vec![Diagnostic::at(None, "missing required key `kind`")];
        if !table.contains_key("seed") {
            d.push(Diagnostic::at(None, "missing required key `seed`"));
        }
        return Err(d);
    };
    let kind_line = locate(text, None, "kind");
    let name = kind_value.as_str().unwrap_or_default();
    let Some(info) = KINDS.iter().find(|k| k.name == name) else {
        let names: Vec<&str> = KINDS.iter().map(|k| k.name).collect();
        return Err(vec![Diagnostic::at(
            kind_line,
            format!("unknown experiment kind {kind_value}; expected one of {}", names.join(", ")),
        )]);
    };
    let mut out = Vec::new();
    for (key, value) in table {
        if BASE_KEYS.contains(&key.as_str()) || info.sections.contains(&key.as_str()) {
            continue;
        }
        let line = locate_section(text, key).or_else(|| locate(text, None, key));
        let known = KINDS.iter().any(|k| k.sections.contains(&key.as_str()));
        if known && value.is_table() {
            out.push(Diagnostic::at(line, format!("section [{key}] is not used by kind `{name}`")));
        } else {
            out.push(Diagnostic::at(line, format!("unknown key `{key}`")));
        }
    }
    let mut missing = Vec::new();
    if !table.contains_key("seed") {
        missing.push("seed");
    }
    for path in info.required.iter().flat_map(|g| g.iter()) {
        if lookup(table, path).is_none() {
            missing.push(path);
        }
    }
    if !missing.is_empty() {
        out.push(Diagnostic::at(None, format!("missing required keys: {}", missing.join(", "))));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn lookup<'a>(table: &'a toml::Table, dotted: &str) -> Option<&'a toml::Value> {
    let mut parts = dotted.split('.');
    let mut v = table.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

/// Line of `[section]`.
fn locate_section(text: &str, section: &str) -> Option<usize> {
    text.lines().position(|l| header(l) == Some(section)).map(|i| i + 1)
}

fn header(line: &str) -> Option<&str> {
    let t = line.trim();
    let t = t.split('#').next()?.trim();
    t.strip_prefix('[')?.strip_suffix(']').map(str::trim)
}

/// Line of `key = ...` inside `[section]` (`None`: top level), falling back
/// to the section header.
fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<&str> = None;
    for (i, line) in text.lines().enumerate() {
        if let Some(h) = header(line) {
            current = Some(h);
            continue;
        }
        let t = line.trim_start();
        let (k, dotted) = match section {
            Some(s) => (key.to_string(), format!("{s}.{key}")),
            None => (key.to_string(), key.to_string()),
        };
        let starts = |pat: &str| {
            t.strip_prefix(pat)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        };
        if (current == section && starts(&k)) || (current.is_none() && starts(&dotted)) {
            return Some(i + 1);
        }
    }
    section.and_then(|s| locate_section(text, s))
}

// ----- values -----

struct Checker<'a> {
    text: &'a str,
    out: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn require(&mut self, ok: bool, section: &str, key: &str, constraint: &str) {
        if !ok {
            let sec = (!section.is_empty()).then_some(section);
            let name = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            self.out
                .push(Diagnostic::at(locate(self.text, sec, key), format!("{name} {constraint}")));
        }
    }

    fn core(&mut self, r: metabattle::Result<()>, section: &str) {
        if let Err(e) = r {
            self.out
                .push(Diagnostic::at(locate_section(self.text, section), format!("[{section}]: {e}")));
        }
    }

    fn settings(&mut self, s: &SettingsConfig, section: &str) {
        self.core(s.resolve().validate(), section);
    }
}

fn check_values(text: &str, c: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut k = Checker { text, out: Vec::new() };
    if let Some(g) = &c.geometry {
        k.require(g.distance_a.0 > 0.0, "geometry", "distance_a", "must be positive");
        k.require(g.distance_b.0 > 0.0, "geometry", "distance_b", "must be positive");
        k.require(g.frequency.0 > 0.0, "geometry", "frequency", "must be positive");
    }
    if let Some(p) = &c.propagation {
        k.core(p.resolve().validate(), "propagation");
    }
    for (name, party) in [("party_a", &c.party_a), ("party_b", &c.party_b)] {
        if let Some(p) = party {
            k.settings(&p.settings, &format!("{name}.settings"));
        }
    }
    if let Some(s) = &c.schedule {
        k.require(s.pause_a >= 1, "schedule", "pause_a", "must be at least 1");
        k.require(s.pause_b >= 1, "schedule", "pause_b", "must be at least 1");
        k.require(s.steps >= 1, "schedule", "steps", "must be at least 1");
        k.require(s.baseline_trials >= 1, "schedule", "baseline_trials", "must be at least 1");
    }
    if let Some(m) = &c.algorithm_matrix {
        k.require(!m.kinds.is_empty(), "algorithm_matrix", "kinds", "must list at least one optimizer");
        k.require(m.steps >= 1, "algorithm_matrix", "steps", "must be at least 1");
        k.require(m.trials >= 1, "algorithm_matrix", "trials", "must be at least 1");
        k.settings(&m.settings, "algorithm_matrix.settings");
    }
    if let Some(m) = &c.speed_matrix {
        k.require(!m.pauses.is_empty() && m.pauses.iter().all(|&p| p >= 1), "speed_matrix", "pauses", "must be a non-empty list of values ≥ 1");
        k.require(m.steps >= 1, "speed_matrix", "steps", "must be at least 1");
        k.require(m.trials >= 1, "speed_matrix", "trials", "must be at least 1");
    }
    if let Some(m) = &c.element_matrix {
        k.require(!m.counts.is_empty() && m.counts.iter().all(|&n| (1..=256).contains(&n)), "element_matrix", "counts", "must be a non-empty list of values in 1..=256");
        k.require(m.steps >= 1, "element_matrix", "steps", "must be at least 1");
        k.require(m.trials >= 1, "element_matrix", "trials", "must be at least 1");
    }
    if let Some(s) = &c.frequency_sweep {
        k.require(s.frequencies.len() >= 2 && s.frequencies.iter().all(|f| f.0 > 0.0), "frequency_sweep", "frequencies", "must list at least two positive frequencies");
        k.require(s.trials >= 1, "frequency_sweep", "trials", "must be at least 1");
        k.require(s.probe_samples >= 2, "frequency_sweep", "probe_samples", "must be at least 2");
    }
    if let Some(s) = &c.distance_sweep {
        k.require(!s.points.is_empty() && s.points.iter().flatten().all(|d| d.0 > 0.0), "distance_sweep", "points", "must be a non-empty list of positive distance pairs");
        k.require(s.trials >= 1, "distance_sweep", "trials", "must be at least 1");
        k.require(s.probe_samples >= 2, "distance_sweep", "probe_samples", "must be at least 2");
    }
    if let Some(s) = &c.orientation_sweep {
        k.require(!s.angles.is_empty(), "orientation_sweep", "angles", "must list at least one angle");
        k.require(s.trials >= 1, "orientation_sweep", "trials", "must be at least 1");
        k.require(s.probe_samples >= 2, "orientation_sweep", "probe_samples", "must be at least 2");
    }
    if let Some(s) = &c.coupling_test {
        k.require(s.separation.0 > 0.0, "coupling_test", "separation", "must be positive");
        k.require(!s.angles.is_empty(), "coupling_test", "angles", "must list at least one angle");
        k.require(s.ensemble >= 2, "coupling_test", "ensemble", "must be at least 2");
        k.require(s.reference_ensemble.is_none_or(|e| e >= 2), "coupling_test", "reference_ensemble", "must be at least 2");
        k.require(s.trials >= 1, "coupling_test", "trials", "must be at least 1");
        k.settings(&s.settings, "coupling_test.settings");
    }
    if let Some(j) = &c.jamming {
        k.require(j.steps >= 1, "jamming", "steps", "must be at least 1");
        k.require(j.packets >= 1, "jamming", "packets", "must be at least 1");
        k.require(j.gains.step.0 > 0.0 && j.gains.stop.0 >= j.gains.start.0, "jamming", "gains", "needs step > 0 dB and stop ≥ start");
        k.require(j.jitter_k >= 0.0, "jamming", "jitter_k", "must be non-negative");
        k.settings(&j.settings, "jamming.settings");
    }
    if let Some(p) = &c.protego {
        k.require(p.eve_surface_distance.0 > 0.0, "protego", "eve_surface_distance", "must be positive");
        k.require(p.symbols >= 1, "protego", "symbols", "must be at least 1");
        k.require((1..=4).contains(&p.set_size), "protego", "set_size", "must lie in 1..=4");
        k.require(p.backoff.0 >= 0.0, "protego", "backoff", "must be non-negative");
        k.settings(&p.settings, "protego.settings");
    }
    if let Some(s) = &c.irshield {
        k.require(s.redraw_period >= 1, "irshield", "redraw_period", "must be at least 1");
        k.require(s.invert_period >= 1, "irshield", "invert_period", "must be at least 1");
        k.require(s.block > s.window, "irshield", "block", "must be longer than the window");
        k.require(s.blocks >= 2, "irshield", "blocks", "must be at least 2");
        k.require(s.window >= 2, "irshield", "window", "must be at least 2");
        k.require(s.false_alarm > 0.0 && s.false_alarm < 1.0, "irshield", "false_alarm", "must lie in (0, 1)");
        k.require(s.attacker_window >= 2, "irshield", "attacker_window", "must be at least 2");
        k.settings(&s.settings, "irshield.settings");
    }
    if let Some(r) = &c.risiren {
        k.core(r.stft.resolve().validate(), "risiren.stft");
        k.core(r.ga.resolve().validate(), "risiren.ga");
        k.settings(&r.settings, "risiren.settings");
        k.require(r.defense_window >= 2, "risiren", "defense_window", "must be at least 2");
        k.require(r.band[0].0 < r.band[1].0, "risiren", "band", "must be an increasing pair");
        let samples = match &r.target {
            TargetConfig::DopplerRamp { samples, .. } | TargetConfig::SquareWave { samples, .. } | TargetConfig::Silent { samples } => Some(*samples),
            TargetConfig::Csv { .. } => None,
        };
        if let Some(n) = samples {
            k.require(n >= r.stft.window, "risiren.target", "samples", "must cover at least one STFT window");
        }
    }
    k.out
}
