//! Sensing obfuscation: surface A randomizes the channel so that a sliding
//! std motion detector loses a walking person; surface B tries to restore
//! the detector by drowning the randomization in a strong static path.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use super::presets::office_params;
use crate::environment::{motion_elements, motion_step, Endpoint, Geometry, MotionParams, MotionState, SurfaceId};
use crate::error::{contract, domain, Result};
use crate::mathcore::{Complex, RandomStream};
use crate::metasurface::{invert, random_config, MetasurfaceSpec, SurfaceConfig};
use crate::optimizers::{optimize, Feedback, ObjectiveSense, Optimizer};
use crate::stats;

/// Random redraw every `redraw_period` steps. Between redraws the drawn
/// configuration and its full inversion alternate in cycles of
/// `invert_period` steps (first half plain, second half inverted). Pass
/// `usize::MAX` to never redraw.
pub fn irshield_stream(
    spec: &MetasurfaceSpec,
    redraw_period: usize,
    invert_period: usize,
    steps: usize,
    stream: &mut RandomStream,
) -> Result<Vec<SurfaceConfig>> {
    if redraw_period == 0 || invert_period == 0 {
        return Err(domain("IRShield periods must be at least 1"));
    }
    let mut out = Vec::with_capacity(steps);
    let plain_len = invert_period.div_ceil(2);
    let mut plain = random_config(spec, stream);
    let mut inverted = invert(spec, &plain)?;
    for t in 0..steps {
        let since = t % redraw_period;
        if since == 0 && t > 0 {
            plain = random_config(spec, stream);
            inverted = invert(spec, &plain)?;
        }
        out.push(if since % invert_period < plain_len {
            plain.clone()
        } else {
            inverted.clone()
        });
    }
    Ok(out)
}

/// A channel in which a moving person scales the direct path and a fixed
/// subset of each surface's sub-channels by `1 + m(t)`.
#[derive(Clone, Debug)]
pub struct MovingScene {
    pub model: ChannelModel,
    pub motion: MotionParams,
    pub elements_a: Vec<usize>,
    pub elements_b: Vec<usize>,
}

impl MovingScene {
    pub fn new(model: ChannelModel, motion: MotionParams, stream: &mut RandomStream) -> Result<Self> {
        motion.validate()?;
        let elements_a = motion_elements(model.spec(SurfaceId::A).element_count(), motion.element_fraction, stream);
        let elements_b = motion_elements(model.spec(SurfaceId::B).element_count(), motion.element_fraction, stream);
        Ok(Self {
            model,
            motion,
            elements_a,
            elements_b,
        })
    }

    fn moving_part(&self, a: &SurfaceConfig, b: &SurfaceConfig) -> Complex {
        let m = &self.model;
        let part = |id: SurfaceId, cfg: &SurfaceConfig, elems: &[usize]| -> Complex {
            let (comb, spec) = (m.combined(id), m.spec(id));
            elems.iter().map(|&l| comb[l] * spec.coefficient(cfg.states()[l])).sum()
        };
        m.direct() + part(SurfaceId::A, a, &self.elements_a) + part(SurfaceId::B, b, &self.elements_b)
    }

    /// Noiseless channel under perturbation `m`.
    pub fn channel(&self, a: &SurfaceConfig, b: &SurfaceConfig, m: Complex) -> Complex {
        self.model.evaluate(a, b) + self.moving_part(a, b) * m
    }

    /// Measured `|H(t)|`. A's configuration cycles through `configs_a`;
    /// motion runs where `moving[t]` is set and is frozen at zero otherwise.
    pub fn csi_series(
        &self,
        configs_a: &[SurfaceConfig],
        cfg_b: &SurfaceConfig,
        moving: &[bool],
        stream: &mut RandomStream,
    ) -> Result<Vec<f64>> {
        if configs_a.is_empty() {
            return Err(domain("need at least one configuration for A"));
        }
        let mut motion_rng = stream.fork(1);
        let mut noise = stream.fork(2);
        let mut state = MotionState::still();
        let mut was_moving = false;
        let sigma = self.model.noise_variance().sqrt();
        Ok(moving
            .iter()
            .enumerate()
            .map(|(t, &mv)| {
                let m = if mv {
                    if !was_moving {
                        state = MotionState::stationary(&self.motion, &mut motion_rng);
                    }
                    motion_step(&mut state, &self.motion, &mut motion_rng)
                } else {
                    Complex::new(0.0, 0.0)
                };
                was_moving = mv;
                let a = &configs_a[t % configs_a.len()];
                let h = self.channel(a, cfg_b, m) + crate::mathcore::cn1(&mut noise) * sigma;
                h.norm()
            })
            .collect())
    }
}

/// Windowed coefficient of variation `std/mean` of a magnitude series.
pub fn sliding_cv(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 || series.len() < window {
        return Err(domain("sliding window must be at least 2 and fit the series"));
    }
    Ok(series
        .windows(window)
        .map(|w| {
            let m = stats::mean(w);
            if m > 0.0 {
                stats::pop_std(w) / m
            } else {
                0.0
            }
        })
        .collect())
}

/// Labeled magnitude series and its sliding statistic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionSeries {
    pub csi_magnitudes: Vec<f64>,
    /// Per-sample ground truth: true while the person moves.
    pub moving: Vec<bool>,
    pub window_length: usize,
    pub statistic: Vec<f64>,
}

impl DetectionSeries {
    pub fn new(csi_magnitudes: Vec<f64>, moving: Vec<bool>, window_length: usize) -> Result<Self> {
        if moving.len() != csi_magnitudes.len() {
            return Err(contract("labels must cover every sample"));
        }
        let statistic = sliding_cv(&csi_magnitudes, window_length)?;
        Ok(Self {
            csi_magnitudes,
            moving,
            window_length,
            statistic,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionResult {
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub threshold: f64,
    /// `(false alarm, detection)` pairs for decreasing thresholds.
    pub roc: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold at the 95th percentile of motion-free windows; windows that
/// straddle a label change are ignored.
pub fn motion_detect(series: &DetectionSeries, false_alarm: f64) -> Result<DetectionResult> {
    let w = series.window_length;
    let (mut idle, mut busy) = (Vec::new(), Vec::new());
    for (i, &s) in series.statistic.iter().enumerate() {
        let lab = &series.moving[i..i + w];
        if lab.iter().all(|&m| m) {
            busy.push(s);
        } else if lab.iter().all(|&m| !m) {
            idle.push(s);
        }
    }
    if idle.is_empty() || busy.is_empty() {
        return Err(contract("series needs both motion and motion-free windows"));
    }
    let threshold = stats::quantile(&idle, 1.0 - false_alarm);
    let rate = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x > t).count() as f64 / xs.len() as f64;
    let mut cuts: Vec<f64> = idle.iter().chain(&busy).cloned().collect();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let mut roc = vec![(0.0, 0.0)];
    roc.extend(cuts.iter().map(|&t| (rate(&idle, t - f64::EPSILON * t.abs()), rate(&busy, t - f64::EPSILON * t.abs()))));
    roc.push((1.0, 1.0));
    let auc = roc.windows(2).map(|p| (p[1].0 - p[0].0) * (p[1].1 + p[0].1) / 2.0).sum();
    Ok(DetectionResult {
        detection_rate: rate(&busy, threshold),
        false_alarm_rate: rate(&idle, threshold),
        threshold,
        roc,
        auc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShieldMode {
    /// Both surfaces hold random configurations.
    Baseline,
    /// A runs IRShield, B holds a random configuration.
    Shield,
    /// A runs IRShield, B was optimized against it beforehand.
    ShieldWithAttacker,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IrshieldParams {
    pub redraw_period: usize,
    pub invert_period: usize,
    /// Samples per labeled block; blocks alternate still/moving.
    pub block: usize,
    pub blocks: usize,
    pub window: usize,
    pub false_alarm: f64,
    /// Attacker steps, each scoring the mean magnitude over
    /// `attacker_window` samples of the IRShield stream.
    pub attacker_steps: usize,
    pub attacker_window: usize,
}

impl Default for IrshieldParams {
    fn default() -> Self {
        Self {
            redraw_period: 16,
            invert_period: 4,
            block: 500,
            blocks: 8,
            window: 32,
            false_alarm: 0.05,
            attacker_steps: 1000,
            attacker_window: 256,
        }
    }
}

/// Alternating still/moving labels, starting still.
pub fn block_labels(block: usize, blocks: usize) -> Vec<bool> {
    (0..block * blocks).map(|t| (t / block) % 2 == 1).collect()
}

/// B maximizes the windowed mean of the still `|H|` while A runs IRShield,
/// so its static path swamps A's randomization.
pub fn irshield_attack(
    scene: &MovingScene,
    attacker: &mut Optimizer,
    shield: &[SurfaceConfig],
    window: usize,
    steps: usize,
    stream: &mut RandomStream,
) -> Result<SurfaceConfig> {
    if shield.is_empty() || window < 2 {
        return Err(domain("attack needs a shield stream and a window of at least 2"));
    }
    if attacker.sense() != ObjectiveSense::Maximize {
        return Err(contract("the IRShield attacker must maximize"));
    }
    let mut noise = stream.fork(1);
    let mut t = 0usize;
    optimize(attacker, steps, &mut stream.fork(2), |b| {
        let mags: Vec<f64> = (0..window)
            .map(|i| scene.model.measure(&shield[(t + i) % shield.len()], b, &mut noise).norm())
            .collect();
        t += window;
        Ok(Feedback::score(stats::mean(&mags)))
    })?;
    Ok(attacker.current_config().clone())
}

/// Office room with a person moving near both surfaces: half of each
/// surface's sub-channels and the direct path fluctuate with std 0.3, and
/// noise sits 30 dB below the direct path. Surface A is turned by
/// `defender_rotation` radians about the vertical axis.
pub fn irshield_scene(defender_rotation: f64, stream: &RandomStream) -> Result<MovingScene> {
    let mut params = office_params();
    params.motion.perturbation_std = 0.3;
    params.motion.element_fraction = 0.5;
    let mut geometry = Geometry::office(0.3, 0.3);
    geometry.surface_a = geometry.surface_a.map(|s| s.rotated(defender_rotation));
    let model = ChannelModel::synthesize(
        &geometry,
        &params,
        MetasurfaceSpec::binary(256),
        MetasurfaceSpec::binary(256),
        Endpoint::Alice,
        Endpoint::Bob,
        &mut stream.fork(1),
    )?;
    let noise = model.direct().norm_sqr() * 1e-3;
    MovingScene::new(model.with_noise(noise)?, params.motion, &mut stream.fork(2))
}

/// One detection run in the given mode.
pub fn irshield_run(
    scene: &MovingScene,
    mode: ShieldMode,
    attacker: Option<&mut Optimizer>,
    params: &IrshieldParams,
    stream: &RandomStream,
) -> Result<(DetectionSeries, DetectionResult)> {
    let spec_a = scene.model.spec(SurfaceId::A);
    let labels = block_labels(params.block, params.blocks);
    let static_a = vec![random_config(spec_a, &mut stream.fork(1))];
    let mut cfg_b = random_config(scene.model.spec(SurfaceId::B), &mut stream.fork(2));
    let configs_a = match mode {
        ShieldMode::Baseline => static_a,
        _ => irshield_stream(spec_a, params.redraw_period, params.invert_period, labels.len(), &mut stream.fork(3))?,
    };
    if mode == ShieldMode::ShieldWithAttacker {
        let opt = attacker.ok_or_else(|| contract("attacker mode needs an optimizer"))?;
        // the attacker trains on an independent stretch of the shield
        let training = irshield_stream(spec_a, params.redraw_period, params.invert_period, 4096, &mut stream.fork(4))?;
        cfg_b = irshield_attack(scene, opt, &training, params.attacker_window, params.attacker_steps, &mut stream.fork(5))?;
    }
    let mags = scene.csi_series(&configs_a, &cfg_b, &labels, &mut stream.fork(6))?;
    let series = DetectionSeries::new(mags, labels, params.window)?;
    let result = motion_detect(&series, params.false_alarm)?;
    Ok((series, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{DirectChannel, SubchannelSet};
    use crate::mathcore::cn1;

    #[test]
    fn stream_periods() {
        let spec = MetasurfaceSpec::binary(32);
        let mut s = RandomStream::new(1, 0);
        let alt = irshield_stream(&spec, usize::MAX, 2, 6, &mut s).unwrap();
        let inv = invert(&spec, &alt[0]).unwrap();
        for (t, c) in alt.iter().enumerate() {
            assert_eq!(c, if t % 2 == 0 { &alt[0] } else { &inv });
        }
        let iid = irshield_stream(&spec, 1, 4, 50, &mut s).unwrap();
        assert!(iid.windows(2).all(|w| w[0] != w[1]));
        let d = irshield_stream(&spec, 16, 4, 64, &mut s).unwrap();
        for t in 1..64 {
            let flipped = d[t] == invert(&spec, &d[t - 1]).unwrap();
            assert_eq!(flipped, t % 16 != 0 && t % 2 == 0, "step {t}");
            assert_eq!(d[t] == d[t - 1], t % 2 == 1, "step {t}");
        }
        let never = irshield_stream(&spec, 8, 1, 8, &mut s).unwrap();
        assert!(never.iter().all(|c| c == &never[0]));
        assert!(irshield_stream(&spec, 0, 4, 5, &mut s).is_err());
    }

    #[test]
    fn stream_decorrelates_within_a_redraw() {
        let spec = MetasurfaceSpec::binary(256);
        let mut s = RandomStream::new(2, 0);
        let cfgs = irshield_stream(&spec, 16, 4, 16 * 400, &mut s).unwrap();
        let spin = |c: &SurfaceConfig| -> Vec<f64> { c.states().iter().map(|&x| if x == 0 { 1.0 } else { -1.0 }).collect() };
        let corr = |lag: usize| {
            let mut acc = 0.0;
            let mut n = 0.0;
            for t in 0..cfgs.len() - lag {
                let (a, b) = (spin(&cfgs[t]), spin(&cfgs[t + lag]));
                acc += a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / 256.0;
                n += 1.0;
            }
            acc / n
        };
        assert!(corr(16).abs() < 0.02);
        assert!(corr(32).abs() < 0.02);
    }

    fn scene(std: f64) -> MovingScene {
        let mut s = RandomStream::new(3, 0);
        let sub = |s: &mut RandomStream| SubchannelSet::new((0..16).map(|_| cn1(s) * 0.1).collect(), (0..16).map(|_| cn1(s)).collect()).unwrap();
        let (a, b) = (sub(&mut s), sub(&mut s));
        let model = ChannelModel::new(
            DirectChannel { value: Complex::new(1.0, 0.0) },
            a,
            MetasurfaceSpec::binary(16),
            b,
            MetasurfaceSpec::binary(16),
        )
        .unwrap();
        let motion = MotionParams {
            perturbation_std: std,
            ..MotionParams::default()
        };
        MovingScene::new(model, motion, &mut s).unwrap()
    }

    #[test]
    fn moving_channel_matches_perturbed_model() {
        let sc = scene(0.1);
        let mut s = RandomStream::new(4, 0);
        let a = random_config(sc.model.spec(SurfaceId::A), &mut s);
        let b = random_config(sc.model.spec(SurfaceId::B), &mut s);
        let m = Complex::new(0.07, -0.03);
        let want = sc.model.perturbed(m, &sc.elements_a, &sc.elements_b).effective_channel(&a, &b).unwrap();
        assert!((sc.channel(&a, &b, m) - want).norm() < 1e-12);
    }

    #[test]
    fn still_noiseless_series_never_detects() {
        let sc = scene(0.0);
        let labels = block_labels(100, 4);
        let mut s = RandomStream::new(5, 0);
        let a = vec![random_config(sc.model.spec(SurfaceId::A), &mut s)];
        let b = random_config(sc.model.spec(SurfaceId::B), &mut s);
        let mags = sc.csi_series(&a, &b, &labels, &mut s).unwrap();
        let series = DetectionSeries::new(mags, labels, 16).unwrap();
        assert!(series.statistic.iter().all(|&x| x.abs() < 1e-12));
        let r = motion_detect(&series, 0.05).unwrap();
        assert_eq!(r.detection_rate, 0.0);
    }

    #[test]
    fn roc_is_monotone_and_auc_bounded() {
        let sc = scene(0.2);
        let p = IrshieldParams {
            block: 200,
            blocks: 4,
            ..IrshieldParams::default()
        };
        let (_, r) = irshield_run(&sc, ShieldMode::Baseline, None, &p, &RandomStream::new(6, 0)).unwrap();
        assert!(r.roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        assert!((0.0..=1.0).contains(&r.auc));
        assert!(r.detection_rate > 0.9);
    }

    #[test]
    fn unlabeled_series_is_rejected() {
        let s = DetectionSeries::new(vec![1.0; 100], vec![false; 100], 10).unwrap();
        assert!(motion_detect(&s, 0.05).is_err());
        assert!(DetectionSeries::new(vec![1.0; 100], vec![false; 99], 10).is_err());
    }
}
