//! Maps each experiment kind onto the engine and tabulates the results.

use std::path::Path;

use serde_json::json;

use metabattle::battle::{algorithm_matrix, element_matrix, fight, speed_matrix, Arena, ArenaFn, BattleMatrix, PartySpec};
use metabattle::metasurface::random_config;
use metabattle::scenarios::genetic::GaParams;
use metabattle::scenarios::irshield::{irshield_run, irshield_scene, IrshieldParams, ShieldMode};
use metabattle::scenarios::jamming::{jamming_battle, jamming_geometry, jamming_link, JammingParams};
use metabattle::scenarios::protego::{
    protego_build_set, protego_counterattack, protego_frame, protego_geometry, protego_links, protego_transmit,
};
use metabattle::scenarios::risiren::{induced_series, risiren_defend, risiren_synthesize, risiren_toggle_configs};
use metabattle::scenarios::spectrogram::{detrended, doppler_ramp, spectrogram, SpectrogramTarget, StftParams};
use metabattle::sweeps::{coupling_test, distance_sweep, frequency_sweep, orientation_sweep, CouplingSetup, SweepBattle};
use metabattle::{
    ChannelModel, Endpoint, Error, Geometry, MetasurfaceSpec, ObjectiveSense, Optimizer, OptimizerKind, PropagationParams,
    RandomStream, Result, SurfaceId,
};

use crate::config::{ExperimentConfig, GeometryConfig, Kind, PartyConfig, TargetConfig};
use crate::output::{Cell, Outputs, Table};

/// Runs the experiment the config describes. `base_dir` anchors relative
/// paths inside the config.
pub fn run(config: &ExperimentConfig, base_dir: &Path) -> Result<Outputs> {
    let root = RandomStream::new(config.seed, 0);
    let params = config.propagation();
    match config.kind {
        Kind::Battle => battle(config, &params, &root),
        Kind::AlgorithmMatrix => {
            let m = config.algorithm_matrix.as_ref().ok_or_else(|| missing("algorithm_matrix"))?;
            let geometry = office(geometry_of(config)?);
            let arenas = |_: usize, s: &mut RandomStream| arena(&geometry, &params, s);
            let matrix = algorithm_matrix(&arenas, &m.kinds, m.sense_a, &m.settings.resolve(), m.steps, m.trials, &root)?;
            Ok(matrix_outputs(&matrix, "kind_a", "kind_b", m.trials))
        }
        Kind::SpeedMatrix => {
            let m = config.speed_matrix.as_ref().ok_or_else(|| missing("speed_matrix"))?;
            let (a, b) = parties(config)?;
            let geometry = office(geometry_of(config)?);
            let arenas = |_: usize, s: &mut RandomStream| arena(&geometry, &params, s);
            let matrix = speed_matrix(&arenas, &a, &b, &m.pauses, m.steps, m.trials, &root)?;
            Ok(matrix_outputs(&matrix, "pause_a", "pause_b", m.trials))
        }
        Kind::ElementMatrix => {
            let m = config.element_matrix.as_ref().ok_or_else(|| missing("element_matrix"))?;
            let (a, b) = parties(config)?;
            let geometry = office(geometry_of(config)?);
            let arenas: &ArenaFn = &|_, s| arena(&geometry, &params, s);
            let matrix = element_matrix(arenas, &a, &b, &m.counts, m.steps, m.trials, &root)?;
            Ok(matrix_outputs(&matrix, "elements_a", "elements_b", m.trials))
        }
        Kind::FrequencySweep => {
            let s = config.frequency_sweep.as_ref().ok_or_else(|| missing("frequency_sweep"))?;
            let setup = sweep_battle(config, s.trials, s.probe_samples)?;
            let freqs: Vec<f64> = s.frequencies.iter().map(|f| f.0).collect();
            let r = frequency_sweep(&freqs, &office(geometry_of(config)?), &params, &setup, &root)?;
            let mut t = Table::new(
                "frequency",
                &["frequency_hz", "direct_magnitude", "random_std_a", "random_std_b", "median_gain_db"],
            );
            for row in &r.rows {
                t.push(vec![
                    row.frequency_hz.into(),
                    row.direct_magnitude.into(),
                    row.random_std_a.into(),
                    row.random_std_b.into(),
                    row.median_gain_db.into(),
                ]);
            }
            Ok(Outputs::default()
                .table(t)
                .document("summary", json!({ "direct_magnitude_variance": r.direct_magnitude_variance })))
        }
        Kind::DistanceSweep => {
            let s = config.distance_sweep.as_ref().ok_or_else(|| missing("distance_sweep"))?;
            let setup = sweep_battle(config, s.trials, s.probe_samples)?;
            let points: Vec<(f64, f64)> = s.points.iter().map(|[a, b]| (a.0, b.0)).collect();
            let r = distance_sweep(&points, &params, &setup, &root)?;
            let mut t = Table::new(
                "distance",
                &["distance_a_m", "distance_b_m", "snr_b_db", "median_gain_db", "win_rate_a", "win_rate_b"],
            );
            for row in &r.rows {
                t.push(vec![
                    row.distance_a.into(),
                    row.distance_b.into(),
                    row.snr_b_db.into(),
                    row.median_gain_db.into(),
                    row.win_rate_a.into(),
                    row.win_rate_b.into(),
                ]);
            }
            Ok(Outputs::default().table(t).document("summary", json!({ "spearman": r.spearman })))
        }
        Kind::OrientationSweep => {
            let s = config.orientation_sweep.as_ref().ok_or_else(|| missing("orientation_sweep"))?;
            let setup = sweep_battle(config, s.trials, s.probe_samples)?;
            let angles: Vec<f64> = s.angles.iter().map(|a| a.0).collect();
            let rows = orientation_sweep(&angles, &office(geometry_of(config)?), &params, &setup, &root)?;
            let mut t = Table::new(
                "orientation",
                &["angle_rad", "max_amplitude_a", "max_amplitude_b", "snr_b_db", "median_gain_db", "win_rate_b"],
            );
            for row in &rows {
                t.push(vec![
                    row.angle_rad.into(),
                    row.max_amplitude_a.into(),
                    row.max_amplitude_b.into(),
                    row.snr_b_db.into(),
                    row.median_gain_db.into(),
                    row.win_rate_b.into(),
                ]);
            }
            Ok(Outputs::default().table(t))
        }
        Kind::CouplingTest => coupling(config, &params, &root),
        Kind::Jamming => jamming(config, &params, &root),
        Kind::Protego => protego(config, &params, &root),
        Kind::Irshield => irshield(config, &root),
        Kind::Risiren => risiren(config, &params, base_dir, &root),
    }
}

fn missing(section: &str) -> Error {
    Error::Contract(format!("config has no [{section}] section"))
}

fn geometry_of(config: &ExperimentConfig) -> Result<&GeometryConfig> {
    config.geometry.as_ref().ok_or_else(|| missing("geometry"))
}

/// Office room at the configured distances and carrier.
fn office(g: &GeometryConfig) -> Geometry {
    Geometry {
        frequency_hz: g.frequency.0,
        ..Geometry::office(g.distance_a.0, g.distance_b.0)
    }
}

fn arena(geometry: &Geometry, params: &PropagationParams, stream: &mut RandomStream) -> Result<Arena> {
    let count = |id| geometry.surface(id).map_or(0, |s| s.element_count());
    let model = ChannelModel::synthesize(
        geometry,
        params,
        MetasurfaceSpec::binary(count(SurfaceId::A)),
        MetasurfaceSpec::binary(count(SurfaceId::B)),
        Endpoint::Alice,
        Endpoint::Bob,
        stream,
    )?;
    Ok(Arena {
        model,
        geometry: Some(geometry.clone()),
    })
}

fn party(p: &PartyConfig) -> PartySpec {
    PartySpec {
        kind: p.optimizer,
        sense: p.sense,
        settings: p.settings.resolve(),
    }
}

fn parties(config: &ExperimentConfig) -> Result<(PartySpec, PartySpec)> {
    let a = config.party_a.as_ref().ok_or_else(|| missing("party_a"))?;
    let b = config.party_b.as_ref().ok_or_else(|| missing("party_b"))?;
    Ok((party(a), party(b)))
}

fn sweep_battle(config: &ExperimentConfig, trials: usize, probe_samples: usize) -> Result<SweepBattle> {
    let (a, b) = parties(config)?;
    let schedule = config.schedule.as_ref().ok_or_else(|| missing("schedule"))?.resolve();
    Ok(SweepBattle {
        a,
        b,
        schedule,
        trials,
        probe_samples,
    })
}

fn battle(config: &ExperimentConfig, params: &PropagationParams, root: &RandomStream) -> Result<Outputs> {
    let (a, b) = parties(config)?;
    let schedule = config.schedule.as_ref().ok_or_else(|| missing("schedule"))?.resolve();
    let arena = arena(&office(geometry_of(config)?), params, &mut root.fork(1))?;
    let (trace, outcome) = fight(&arena, &a, &b, &schedule, &root.fork(2))?;
    let mut t = Table::new(
        "trace",
        &[
            "step",
            "config_a_hash",
            "config_b_hash",
            "acted_a",
            "acted_b",
            "believed_a",
            "believed_b",
            "true_power_db",
            "true_phase_rad",
        ],
    );
    for s in &trace.steps {
        t.push(vec![
            s.step.into(),
            format!("{:016x}", s.config_a).into(),
            format!("{:016x}", s.config_b).into(),
            s.acted_a.into(),
            s.acted_b.into(),
            s.believed_a.into(),
            s.believed_b.into(),
            (10.0 * s.true_channel.norm_sqr().log10()).into(),
            s.true_channel.arg().into(),
        ]);
    }
    let summary = json!({
        "gain_db": outcome.gain_db,
        "winner": outcome.winner,
        "believed_gain_a_db": finite(outcome.believed_gain_a_db),
        "believed_gain_b_db": finite(outcome.believed_gain_b_db),
        "baseline_mean_power": trace.baseline_mean,
        "baseline_std_power": trace.baseline_std,
    });
    Ok(Outputs::default().table(t).document("outcome", summary))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn matrix_outputs(m: &BattleMatrix, row_name: &str, col_name: &str, trials: usize) -> Outputs {
    let corner = format!("{row_name}\\{col_name}");
    let mut header = vec![corner.as_str()];
    header.extend(m.col_labels.iter().map(String::as_str));
    let mut grid = Table::new("matrix", &header);
    let mut cells = Table::new(
        "cells",
        &[row_name, col_name, "median_gain_db", "mean_gain_db", "win_rate_a", "win_rate_b"],
    );
    for (label, row) in m.row_labels.iter().zip(&m.cells) {
        let mut r: Vec<Cell> = vec![label.as_str().into()];
        r.extend(row.iter().map(|c| Cell::from(c.median_gain_db)));
        grid.push(r);
        for (col, c) in m.col_labels.iter().zip(row) {
            cells.push(vec![
                label.as_str().into(),
                col.as_str().into(),
                c.median_gain_db.into(),
                c.mean_gain_db.into(),
                c.win_rate_a.into(),
                c.win_rate_b.into(),
            ]);
        }
    }
    let header_doc = json!({
        "rows": row_name,
        "columns": col_name,
        "row_labels": m.row_labels,
        "column_labels": m.col_labels,
        "value": "median post-battle power gain over the random baseline, dB",
        "trials_per_cell": trials,
    });
    Outputs::default().table(grid).table(cells).document("matrix_header", header_doc)
}

fn coupling(config: &ExperimentConfig, params: &PropagationParams, root: &RandomStream) -> Result<Outputs> {
    let c = config.coupling_test.as_ref().ok_or_else(|| missing("coupling_test"))?;
    let angles: Vec<f64> = c.angles.iter().map(|a| a.0).collect();
    let setup = CouplingSetup {
        separation: c.separation.0,
        ensemble: c.ensemble,
        trials: c.trials,
        steps: c.steps,
        sense_a: c.sense_a,
        sense_b: c.sense_b,
        settings: c.settings.resolve(),
    };
    let mut rows = coupling_test(&angles, params, &setup, root)?;
    if c.reference {
        let off = PropagationParams {
            coupling_enabled: false,
            ..params.clone()
        };
        let reference = CouplingSetup {
            ensemble: c.reference_ensemble.unwrap_or(c.ensemble),
            ..setup
        };
        rows.extend(coupling_test(&angles, &off, &reference, root)?);
    }
    let mut t = Table::new(
        "coupling",
        &["coupling_enabled", "angle_rad", "angle_deg", "median_error_db", "median_abs_error_db"],
    );
    for r in &rows {
        t.push(vec![
            r.coupling_enabled.into(),
            r.angle_rad.into(),
            r.angle_rad.to_degrees().into(),
            r.median_error_db.into(),
            r.median_abs_error_db.into(),
        ]);
    }
    Ok(Outputs::default().table(t))
}

fn jamming(config: &ExperimentConfig, params: &PropagationParams, root: &RandomStream) -> Result<Outputs> {
    let j = config.jamming.as_ref().ok_or_else(|| missing("jamming"))?;
    let jp = JammingParams {
        snr_db: j.snr.0,
        threshold_margin_db: j.threshold_margin.0,
        jitter_k: j.jitter_k,
    };
    let link = jamming_link(&jamming_geometry(), params, &jp, &mut root.fork(1))?;
    let gains = j.gains.values();
    let r = jamming_battle(&link, &j.settings.resolve(), j.steps, &gains, j.packets, &root.fork(2))?;
    let mut t = Table::new("reception", &["gain_db", "baseline", "attack", "defense"]);
    for (i, &g) in gains.iter().enumerate() {
        t.push(vec![
            g.into(),
            r.baseline.reception[i].into(),
            r.attack.reception[i].into(),
            r.defense.reception[i].into(),
        ]);
    }
    let summary = json!({
        "zero_reception_gain_db": {
            "baseline": finite(r.baseline.zero_reception_gain_db),
            "attack": finite(r.attack.zero_reception_gain_db),
            "defense": finite(r.defense.zero_reception_gain_db),
        },
        "defense_margin_db": finite(r.defense_margin_db()),
    });
    Ok(Outputs::default().table(t).document("summary", summary))
}

fn protego(config: &ExperimentConfig, params: &PropagationParams, root: &RandomStream) -> Result<Outputs> {
    let p = config.protego.as_ref().ok_or_else(|| missing("protego"))?;
    let settings = p.settings.resolve();
    let links = protego_links(&protego_geometry(p.eve_surface_distance.0), params, &mut root.fork(1))?;
    let cfg_b = random_config(links.bob.spec(SurfaceId::B), &mut root.fork(2));
    let set = protego_build_set(&links, &cfg_b, p.set_size, p.backoff.0, &settings, p.build_steps, &mut root.fork(3))?;
    let frame = protego_frame(&links, &set.configs, &cfg_b, p.symbols, &mut root.fork(4))?;
    let (bob, eve) = protego_transmit(&frame, p.snr.0, &mut root.fork(5))?;
    let mut eve_opt = Optimizer::with_initial(
        OptimizerKind::GD,
        ObjectiveSense::Minimize,
        links.eve.spec(SurfaceId::B).clone(),
        settings,
        cfg_b,
    )?;
    let cfg_eve = protego_counterattack(&links, &set.configs, &mut eve_opt, p.counter_steps, &mut root.fork(6))?;
    let frame = protego_frame(&links, &set.configs, &cfg_eve, p.symbols, &mut root.fork(7))?;
    let (bob_after, eve_after) = protego_transmit(&frame, p.snr.0, &mut root.fork(8))?;
    let mut t = Table::new("ser", &["phase", "bob_ser", "eve_ser"]);
    t.push(vec!["obfuscated".into(), bob.into(), eve.into()]);
    t.push(vec!["counterattack".into(), bob_after.into(), eve_after.into()]);
    let summary = json!({
        "set_size": set.configs.len(),
        "backoff_db": set.backoff_db,
        "bob_power_spread_db": set.bob_power_spread_db,
        "bob_phase_spread_rad": set.bob_phase_spread,
        "eve_offsets_rad": set.eve_offsets,
    });
    Ok(Outputs::default().table(t).document("protego_set", summary))
}

fn irshield(config: &ExperimentConfig, root: &RandomStream) -> Result<Outputs> {
    let c = config.irshield.as_ref().ok_or_else(|| missing("irshield"))?;
    let params = IrshieldParams {
        redraw_period: c.redraw_period,
        invert_period: c.invert_period,
        block: c.block,
        blocks: c.blocks,
        window: c.window,
        false_alarm: c.false_alarm,
        attacker_steps: c.attacker_steps,
        attacker_window: c.attacker_window,
    };
    let facing = irshield_scene(0.0, &root.fork(1))?;
    let turned = irshield_scene(c.defender_rotation.0, &root.fork(1))?;
    let mut attacker = Optimizer::new(
        OptimizerKind::GD,
        ObjectiveSense::Maximize,
        turned.model.spec(SurfaceId::B).clone(),
        c.settings.resolve(),
        &mut root.fork(4),
    )?;
    let runs = [
        ("baseline", 0.0, irshield_run(&facing, ShieldMode::Baseline, None, &params, &root.fork(3))?),
        ("shield", 0.0, irshield_run(&facing, ShieldMode::Shield, None, &params, &root.fork(3))?),
        (
            "shield_with_attacker",
            c.defender_rotation.0,
            irshield_run(&turned, ShieldMode::ShieldWithAttacker, Some(&mut attacker), &params, &root.fork(3))?,
        ),
    ];
    let mut det = Table::new(
        "detection",
        &["mode", "defender_rotation_rad", "detection_rate", "false_alarm_rate", "threshold", "auc"],
    );
    let mut roc = Table::new("roc", &["mode", "false_alarm", "detection"]);
    let mut csi = Table::new("csi", &["mode", "sample", "magnitude", "moving"]);
    for (mode, rotation, (series, r)) in &runs {
        det.push(vec![
            (*mode).into(),
            (*rotation).into(),
            r.detection_rate.into(),
            r.false_alarm_rate.into(),
            r.threshold.into(),
            r.auc.into(),
        ]);
        for &(fa, d) in &r.roc {
            roc.push(vec![(*mode).into(), fa.into(), d.into()]);
        }
        for (i, (&m, &moving)) in series.csi_magnitudes.iter().zip(&series.moving).enumerate() {
            csi.push(vec![(*mode).into(), i.into(), m.into(), moving.into()]);
        }
    }
    Ok(Outputs::default().table(det).table(roc).table(csi))
}

/// Template series of the configured target.
pub fn target_series(target: &TargetConfig, stft: &StftParams, base_dir: &Path) -> std::result::Result<Vec<f64>, String> {
    Ok(match target {
        TargetConfig::DopplerRamp { samples, start, end } => doppler_ramp(*samples, stft.sample_rate_hz, start.0, end.0),
        TargetConfig::SquareWave { samples, frequency } => (0..*samples)
            .map(|i| {
                let x = (2.0 * std::f64::consts::PI * frequency.0 * i as f64 / stft.sample_rate_hz).sin();
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect(),
        TargetConfig::Silent { samples } => vec![0.0; *samples],
        TargetConfig::Csv { path } => {
            let path = base_dir.join(path);
            let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read target {}: {e}", path.display()))?;
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                let v: f64 = t
                    .parse()
                    .map_err(|_| format!("{}:{}: not a number: '{t}'", path.display(), i + 1))?;
                out.push(v);
            }
            if out.len() < stft.window {
                return Err(format!("target {} has {} samples, fewer than one STFT window", path.display(), out.len()));
            }
            out
        }
    })
}

fn spectrogram_table(name: &str, s: &SpectrogramTarget) -> Table {
    let cols: Vec<String> = (0..s.params.bins())
        .map(|k| format!("f_{}", s.params.bin_frequency(k)))
        .collect();
    let mut header = vec!["frame"];
    header.extend(cols.iter().map(String::as_str));
    let mut t = Table::new(name, &header);
    for (i, row) in s.magnitudes.iter().enumerate() {
        let mut r: Vec<Cell> = vec![i.into()];
        r.extend(row.iter().map(|&m| Cell::from(m)));
        t.push(r);
    }
    t
}

fn risiren(config: &ExperimentConfig, params: &PropagationParams, base_dir: &Path, root: &RandomStream) -> Result<Outputs> {
    let c = config.risiren.as_ref().ok_or_else(|| missing("risiren"))?;
    let stft = c.stft.resolve();
    let settings = c.settings.resolve();
    let ga: GaParams = c.ga.resolve();
    let series = target_series(&c.target, &stft, base_dir).map_err(Error::Contract)?;
    let target = spectrogram(&detrended(&series), &stft)?;
    let model = arena(&office(geometry_of(config)?), params, &mut root.fork(1))?.model;
    let cfg_a = random_config(model.spec(SurfaceId::A), &mut root.fork(2));
    let pair = risiren_toggle_configs(&model, &cfg_a, &settings, c.toggle_steps, &mut root.fork(3))?;
    let synthesis = risiren_synthesize(&model, &cfg_a, &pair, &target, &ga, &mut root.fork(4))?;
    let mut defender = Optimizer::with_initial(
        OptimizerKind::GD,
        ObjectiveSense::Minimize,
        model.spec(SurfaceId::A).clone(),
        settings,
        cfg_a.clone(),
    )?;
    let band = (c.band[0].0, c.band[1].0);
    let defense = risiren_defend(
        &model,
        &mut defender,
        &pair,
        &synthesis.bits,
        c.defense_steps,
        c.defense_window,
        &stft,
        band,
        &mut root.fork(5),
    )?;
    let attacked = induced_series(&model, &cfg_a, &pair, &synthesis.bits)?;
    let defended = induced_series(&model, &defense.config_a, &pair, &synthesis.bits)?;
    let achieved = spectrogram(&detrended(&attacked), &stft)?;
    let mut seq = Table::new("sequence", &["sample", "bit", "attacked_magnitude", "defended_magnitude"]);
    for (i, ((&b, &x), &y)) in synthesis.bits.iter().zip(&attacked).zip(&defended).enumerate() {
        seq.push(vec![i.into(), b.into(), x.into(), y.into()]);
    }
    let summary = json!({
        "toggle_gap_db": pair.gap_db,
        "spoof_fitness": synthesis.fitness,
        "undefended_std": defense.undefended_std,
        "residual_std": defense.residual_std,
        "reduction_db": defense.reduction_db,
        "band_energy_ratio": defense.band_energy_ratio,
        "band_hz": [band.0, band.1],
        "ga_history": synthesis.history,
    });
    let header = json!({
        "rows": "STFT frame",
        "columns": "one-sided frequency bin, Hz",
        "window": stft.window,
        "hop": stft.hop,
        "fft_size": stft.fft_size,
        "sample_rate_hz": stft.sample_rate_hz,
    });
    Ok(Outputs::default()
        .table(spectrogram_table("target_spectrogram", &target))
        .table(spectrogram_table("spoofed_spectrogram", &achieved))
        .table(seq)
        .document("summary", summary)
        .document("spectrogram_header", header))
}
