//! Sensing spoofing: surface B toggles between two configurations to paint
//! a fake Doppler signature onto the link, surface A tries to flatten it.

use std::f64::consts::PI;

use serde::Serialize;

use super::genetic::{evolve_seeded, GaParams};
use super::spectrogram::{detrended, similarity, spectrogram, SpectrogramTarget, StftParams};
use crate::channel::ChannelModel;
use crate::environment::SurfaceId;
use crate::error::{domain, Result};
use crate::mathcore::RandomStream;
use crate::metasurface::SurfaceConfig;
use crate::optimizers::{optimize, Feedback, ObjectiveSense, Optimizer, OptimizerKind, OptimizerSettings};
use crate::stats;

/// The attacker's two switching states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TogglePair {
    pub cfg_max: SurfaceConfig,
    pub cfg_min: SurfaceConfig,
    pub gap_db: f64,
}

/// GD-optimizes surface B for maximum and minimum power with A held at `cfg_a`.
pub fn risiren_toggle_configs(
    model: &ChannelModel,
    cfg_a: &SurfaceConfig,
    settings: &OptimizerSettings,
    steps: usize,
    stream: &mut RandomStream,
) -> Result<TogglePair> {
    let spec = model.spec(SurfaceId::B).clone();
    let mut noise = stream.fork(1);
    let mut run = |sense: ObjectiveSense, s: &mut RandomStream| -> Result<SurfaceConfig> {
        let mut opt = Optimizer::new(OptimizerKind::GD, sense, spec.clone(), settings.clone(), s)?;
        optimize(&mut opt, steps, s, |cfg| {
            let h = model.measure(cfg_a, cfg, &mut noise);
            Ok(Feedback {
                score: h.norm_sqr(),
                channel: Some(h),
            })
        })?;
        Ok(opt.current_config().clone())
    };
    let cfg_max = run(ObjectiveSense::Maximize, &mut stream.fork(2))?;
    let cfg_min = run(ObjectiveSense::Minimize, &mut stream.fork(3))?;
    let p_max = model.effective_channel(cfg_a, &cfg_max)?.norm_sqr();
    let p_min = model.effective_channel(cfg_a, &cfg_min)?.norm_sqr();
    let gap_db = if p_max == p_min {
        0.0
    } else {
        10.0 * (p_max / p_min).log10()
    };
    Ok(TogglePair { cfg_max, cfg_min, gap_db })
}

/// Noiseless `|H(t)|` while B plays `bits` (true = `cfg_max`).
pub fn induced_series(model: &ChannelModel, cfg_a: &SurfaceConfig, pair: &TogglePair, bits: &[bool]) -> Result<Vec<f64>> {
    let hi = model.effective_channel(cfg_a, &pair.cfg_max)?.norm();
    let lo = model.effective_channel(cfg_a, &pair.cfg_min)?.norm();
    Ok(bits.iter().map(|&b| if b { hi } else { lo }).collect())
}

/// Series length whose spectrogram has the target's frame count.
pub fn sequence_length(target: &SpectrogramTarget) -> usize {
    let p = &target.params;
    (target.frames().max(1) - 1) * p.hop + p.window
}

/// Square waves at every interior STFT bin frequency, used to seed the GA.
pub fn toggle_seeds(len: usize, params: &StftParams) -> Vec<Vec<bool>> {
    (1..params.bins().saturating_sub(1))
        .map(|k| {
            let f = params.bin_frequency(k);
            (0..len)
                .map(|i| (2.0 * PI * f * i as f64 / params.sample_rate_hz).sin() >= 0.0)
                .collect()
        })
        .collect()
}

/// Spectrogram match of the Doppler content of a series.
pub fn spoof_fitness(series: &[f64], target: &SpectrogramTarget) -> Result<f64> {
    similarity(&spectrogram(&detrended(series), &target.params)?, target)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Synthesis {
    pub bits: Vec<bool>,
    pub fitness: f64,
    pub history: Vec<f64>,
}

/// GA search for a switching sequence whose induced spectrogram matches
/// `target`. A silent target is answered by a constant sequence.
pub fn risiren_synthesize(
    model: &ChannelModel,
    cfg_a: &SurfaceConfig,
    pair: &TogglePair,
    target: &SpectrogramTarget,
    ga: &GaParams,
    stream: &mut RandomStream,
) -> Result<Synthesis> {
    let len = sequence_length(target);
    if target.is_silent() {
        return Ok(Synthesis {
            bits: vec![false; len],
            fitness: 1.0,
            history: vec![1.0],
        });
    }
    let hi = model.effective_channel(cfg_a, &pair.cfg_max)?.norm();
    let lo = model.effective_channel(cfg_a, &pair.cfg_min)?.norm();
    if hi == lo {
        return Err(domain("toggle configurations induce identical magnitudes"));
    }
    let seeds: Vec<Vec<bool>> = toggle_seeds(len, &target.params)
        .into_iter()
        .take(ga.population)
        .collect();
    let fitness = |bits: &[bool]| {
        let x: Vec<f64> = bits.iter().map(|&b| if b { hi } else { lo }).collect();
        spoof_fitness(&x, target).unwrap_or(0.0)
    };
    let r = evolve_seeded(len, ga, &seeds, fitness, stream)?;
    if r.best_fitness < 0.8 {
        log::warn!("spoofing sequence reaches only fitness {:.3}", r.best_fitness);
    }
    Ok(Synthesis {
        bits: r.best,
        fitness: r.best_fitness,
        history: r.history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Defense {
    pub config_a: SurfaceConfig,
    /// Std of the noiseless induced series before and after.
    pub undefended_std: f64,
    pub residual_std: f64,
    /// `20·log10(undefended / residual)`.
    pub reduction_db: f64,
    /// Energy in `band` after defense over energy before.
    pub band_energy_ratio: f64,
}

/// Surface A minimizes the std of `|H|` over `window` consecutive samples
/// while B keeps replaying `bits`; each defender step consumes one window.
#[allow(clippy::too_many_arguments)]
pub fn risiren_defend(
    model: &ChannelModel,
    defender: &mut Optimizer,
    pair: &TogglePair,
    bits: &[bool],
    steps: usize,
    window: usize,
    stft: &StftParams,
    band: (f64, f64),
    stream: &mut RandomStream,
) -> Result<Defense> {
    if window < 2 || bits.is_empty() {
        return Err(domain("defense needs a window of at least 2 and a non-empty attack"));
    }
    let start = defender.current_config().clone();
    let mut noise = stream.fork(1);
    let mut t = 0usize;
    optimize(defender, steps, &mut stream.fork(2), |cfg| {
        let mags: Vec<f64> = (0..window)
            .map(|i| {
                let b = if bits[(t + i) % bits.len()] { &pair.cfg_max } else { &pair.cfg_min };
                model.measure(cfg, b, &mut noise).norm()
            })
            .collect();
        t += window;
        Ok(Feedback::score(stats::pop_std(&mags)))
    })?;
    let config_a = defender.current_config().clone();
    let before = induced_series(model, &start, pair, bits)?;
    let after = induced_series(model, &config_a, pair, bits)?;
    let undefended_std = stats::pop_std(&before);
    let residual_std = stats::pop_std(&after);
    let band_energy = |x: &[f64]| -> Result<f64> { Ok(spectrogram(&detrended(x), stft)?.band_energy(band.0, band.1)) };
    let (e0, e1) = (band_energy(&before)?, band_energy(&after)?);
    Ok(Defense {
        config_a,
        undefended_std,
        residual_std,
        reduction_db: 20.0 * (undefended_std / residual_std).log10(),
        band_energy_ratio: if e0 > 0.0 { e1 / e0 } else { 0.0 },
    })
}
