//! Secure transmission by channel obfuscation: surface A cycles through a
//! small set of configurations that keep Bob's channel fixed while turning
//! Eve's phase by quarter turns. Eve's surface B fights back by pulling her
//! phases together.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::Serialize;

use crate::channel::ChannelModel;
use crate::environment::{Endpoint, Geometry, PropagationParams, SurfaceId, SurfacePlacement, Vec3, DEFAULT_FREQUENCY_HZ};
use crate::error::{domain, Error, Result};
use crate::mathcore::{circular_std, cn1, undb, wrap_phase, Complex, RandomStream};
use crate::metasurface::{MetasurfaceSpec, SurfaceConfig};
use crate::optimizers::{optimize, Feedback, ObjectiveSense, Optimizer, OptimizerKind, OptimizerSettings};

/// Alice transmits with surface A just behind her; Eve listens 1.5 m off the
/// link with surface B close to her antenna.
pub fn protego_geometry(eve_surface_distance: f64) -> Geometry {
    let alice = Vec3::new(0.0, 0.0, 0.0);
    let bob = Vec3::new(3.0, 0.0, 0.0);
    let eve = Vec3::new(2.0, 1.5, 0.0);
    let cb = eve + Vec3::new(0.0, eve_surface_distance, 0.0);
    Geometry {
        alice,
        bob,
        eve: Some(eve),
        surface_a: Some(SurfacePlacement::default_grid(
            alice + Vec3::new(-0.3, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        )),
        surface_b: Some(SurfacePlacement::facing_both(cb, eve, alice)),
        frequency_hz: DEFAULT_FREQUENCY_HZ,
    }
}

/// Alice's channels to Bob and to Eve, sharing both surfaces.
#[derive(Clone, Debug)]
pub struct ProtegoLinks {
    pub bob: ChannelModel,
    pub eve: ChannelModel,
}

pub fn protego_links(geometry: &Geometry, params: &PropagationParams, stream: &mut RandomStream) -> Result<ProtegoLinks> {
    let spec = |id| MetasurfaceSpec::binary(geometry.surface(id).map_or(0, |s: &SurfacePlacement| s.element_count()));
    let mk = |rx, s: &mut RandomStream| {
        ChannelModel::synthesize(
            geometry,
            params,
            spec(SurfaceId::A),
            spec(SurfaceId::B),
            Endpoint::Alice,
            rx,
            s,
        )
    };
    Ok(ProtegoLinks {
        bob: mk(Endpoint::Bob, &mut stream.fork(1))?,
        eve: mk(Endpoint::Eve, &mut stream.fork(2))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtegoSet {
    pub configs: Vec<SurfaceConfig>,
    /// Back-off actually used, after any escalation.
    pub backoff_db: f64,
    /// Bob power spread (dB) and phase spread (rad) across the set.
    pub bob_power_spread_db: f64,
    pub bob_phase_spread: f64,
    /// Eve's phase of each member relative to the first.
    pub eve_offsets: Vec<f64>,
}

/// Largest pairwise circular distance.
fn phase_spread(phases: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, a) in phases.iter().enumerate() {
        for b in &phases[i + 1..] {
            m = m.max(wrap_phase(a - b).abs());
        }
    }
    m
}

/// Quadrant index of `offset` with quadrants centered on multiples of π/2.
pub fn quadrant(offset: f64) -> usize {
    ((offset + FRAC_PI_4).rem_euclid(std::f64::consts::TAU) / FRAC_PI_2) as usize % 4
}

/// Optimizes toward Bob, then builds every member around a Bob channel
/// `backoff_db` below that optimum: each member stays within 4% (complex
/// distance) of it while pulling Eve's channel onto successive quarter
/// turns. The back-off leaves room to move Eve without disturbing Bob.
/// Members after the first also search from their predecessor.
///
/// When Bob's and Eve's channels are strongly tied, a small back-off can
/// leave no room for the later quarter turns. The back-off then grows in
/// `BACKOFF_STEP_DB` steps, up to `BACKOFF_RETRIES` times.
pub fn protego_build_set(
    links: &ProtegoLinks,
    cfg_b: &SurfaceConfig,
    set_size: usize,
    backoff_db: f64,
    settings: &OptimizerSettings,
    steps: usize,
    stream: &mut RandomStream,
) -> Result<ProtegoSet> {
    if !(1..=4).contains(&set_size) {
        return Err(domain("Protego sets hold 1 to 4 configurations"));
    }
    if !(backoff_db >= 0.0) {
        return Err(domain("back-off must be non-negative"));
    }
    let mut last = None;
    for attempt in 0..=BACKOFF_RETRIES {
        let b = backoff_db + attempt as f64 * BACKOFF_STEP_DB;
        match build_once(links, cfg_b, set_size, b, settings, steps, &mut stream.fork(attempt as u64)) {
            Err(Error::SearchFailed(m)) => last = Some(m),
            r => return r,
        }
    }
    Err(Error::SearchFailed(last.unwrap_or_default()))
}

pub const BACKOFF_STEP_DB: f64 = 1.5;
pub const BACKOFF_RETRIES: usize = 3;

#[allow(clippy::too_many_arguments)]
fn build_once(
    links: &ProtegoLinks,
    cfg_b: &SurfaceConfig,
    set_size: usize,
    backoff_db: f64,
    settings: &OptimizerSettings,
    steps: usize,
    stream: &mut RandomStream,
) -> Result<ProtegoSet> {
    let spec = links.bob.spec(SurfaceId::A).clone();
    let bob = |a: &SurfaceConfig| links.bob.evaluate(a, cfg_b);
    let eve = |a: &SurfaceConfig| links.eve.evaluate(a, cfg_b);
    let mut toward_bob = Optimizer::new(OptimizerKind::GD, ObjectiveSense::Maximize, spec.clone(), settings.clone(), stream)?;
    optimize(&mut toward_bob, steps, stream, |a| Ok(Feedback::score(bob(a).norm_sqr())))?;
    let anchor = toward_bob.current_config().clone();
    let bob_goal = bob(&anchor) * 10f64.powf(-backoff_db / 20.0);
    let h_e0 = eve(&anchor);
    let phi_e0 = h_e0.arg();
    let mut configs = Vec::with_capacity(set_size);
    for k in 0..set_size {
        let goal = wrap_phase(phi_e0 + k as f64 * FRAC_PI_2);
        // only Eve's phase matters to her decisions
        let cost = |a: &SurfaceConfig| {
            let miss_bob = (bob(a) - bob_goal).norm() / bob_goal.norm();
            wrap_phase(eve(a).arg() - goal).abs() / PI + 10.0 * (miss_bob - 0.04).max(0.0)
        };
        // searching from the anchor alone can stall short of the half turn;
        // the previous member is already a quarter turn along
        let mut starts = vec![anchor.clone()];
        starts.extend(configs.last().cloned());
        let mut best: Option<(f64, SurfaceConfig)> = None;
        for start in starts {
            let mut opt = Optimizer::with_initial(OptimizerKind::GD, ObjectiveSense::Minimize, spec.clone(), settings.clone(), start)?;
            optimize(&mut opt, steps, stream, |a| Ok(Feedback::score(cost(a))))?;
            let found = opt.current_config().clone();
            let c = cost(&found);
            if best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, found));
            }
        }
        configs.push(best.expect("at least one start").1);
    }
    let powers: Vec<f64> = configs.iter().map(|a| 10.0 * bob(a).norm_sqr().log10()).collect();
    let bob_phases: Vec<f64> = configs.iter().map(|a| bob(a).arg()).collect();
    let eve_offsets: Vec<f64> = configs.iter().map(|a| wrap_phase(eve(a).arg() - phi_e0)).collect();
    let bob_power_spread_db = powers.iter().cloned().fold(f64::MIN, f64::max) - powers.iter().cloned().fold(f64::MAX, f64::min);
    let bob_phase_spread = phase_spread(&bob_phases);
    let quadrants_ok = eve_offsets.iter().enumerate().all(|(k, &o)| quadrant(o) == k);
    if bob_power_spread_db > 1.0 || bob_phase_spread > 0.5 || !quadrants_ok {
        return Err(Error::SearchFailed(format!(
            "Protego set out of tolerance: Bob power spread {bob_power_spread_db:.2} dB, \
             Bob phase spread {bob_phase_spread:.3} rad, Eve offsets {eve_offsets:.3?} \
             at {backoff_db:.1} dB back-off"
        )));
    }
    Ok(ProtegoSet {
        configs,
        backoff_db,
        bob_power_spread_db,
        bob_phase_spread,
        eve_offsets,
    })
}

/// Gray-mapped QPSK point for symbol `s`.
pub fn qpsk_point(s: u8) -> Complex {
    // Gray order around the circle: 00, 01, 11, 10
    let quadrant = match s & 3 {
        0 => 0,
        1 => 1,
        3 => 2,
        _ => 3,
    };
    Complex::from_polar(1.0, FRAC_PI_4 + quadrant as f64 * FRAC_PI_2)
}

/// Nearest QPSK symbol.
pub fn qpsk_decide(y: Complex) -> u8 {
    let q = (y.arg().rem_euclid(std::f64::consts::TAU) / FRAC_PI_2) as usize % 4;
    [0, 1, 3, 2][q]
}

/// Symbols plus the per-symbol channel each receiver sees.
#[derive(Clone, Debug, PartialEq)]
pub struct QpskFrame {
    pub symbols: Vec<u8>,
    pub bob_channels: Vec<Complex>,
    pub eve_channels: Vec<Complex>,
}

/// Draws a frame where each symbol uses a uniformly chosen set member.
pub fn protego_frame(
    links: &ProtegoLinks,
    set: &[SurfaceConfig],
    cfg_b: &SurfaceConfig,
    symbols: usize,
    stream: &mut RandomStream,
) -> Result<QpskFrame> {
    if set.is_empty() {
        return Err(domain("empty configuration set"));
    }
    let hb: Vec<Complex> = set.iter().map(|a| links.bob.effective_channel(a, cfg_b)).collect::<Result<_>>()?;
    let he: Vec<Complex> = set.iter().map(|a| links.eve.effective_channel(a, cfg_b)).collect::<Result<_>>()?;
    let mut frame = QpskFrame {
        symbols: Vec::with_capacity(symbols),
        bob_channels: Vec::with_capacity(symbols),
        eve_channels: Vec::with_capacity(symbols),
    };
    for _ in 0..symbols {
        let k = stream.below(set.len());
        frame.symbols.push(stream.below(4) as u8);
        frame.bob_channels.push(hb[k]);
        frame.eve_channels.push(he[k]);
    }
    Ok(frame)
}

/// Symbol error rates of Bob and Eve. Each equalizes with the channel of the
/// first symbol only; noise is set per receiver by `snr_db` relative to that
/// receiver's mean channel power.
pub fn protego_transmit(frame: &QpskFrame, snr_db: f64, stream: &mut RandomStream) -> Result<(f64, f64)> {
    let n = frame.symbols.len();
    if n == 0 || frame.bob_channels.len() != n || frame.eve_channels.len() != n {
        return Err(domain("frame channels must match the symbol count"));
    }
    let mut ser = |channels: &[Complex]| {
        let mean_p = channels.iter().map(|h| h.norm_sqr()).sum::<f64>() / n as f64;
        let sigma = (mean_p / undb(snr_db)).sqrt();
        let reference = channels[0];
        let errors = frame
            .symbols
            .iter()
            .zip(channels)
            .filter(|&(&s, &h)| {
                let y = h * qpsk_point(s) + cn1(stream) * sigma;
                qpsk_decide(y / reference) != s
            })
            .count();
        errors as f64 / n as f64
    };
    let bob = ser(&frame.bob_channels);
    let eve = ser(&frame.eve_channels);
    Ok((bob, eve))
}

/// Eve's surface B minimizes the circular std of her channel phases across
/// the Protego set.
pub fn protego_counterattack(
    links: &ProtegoLinks,
    set: &[SurfaceConfig],
    eve_opt: &mut Optimizer,
    steps: usize,
    stream: &mut RandomStream,
) -> Result<SurfaceConfig> {
    let mut noise = stream.fork(1);
    optimize(eve_opt, steps, &mut stream.fork(2), |b| {
        let phases: Vec<f64> = set.iter().map(|a| links.eve.measure(a, b, &mut noise).arg()).collect();
        Ok(Feedback::score(circular_std(&phases)?))
    })?;
    Ok(eve_opt.current_config().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_round_trip_and_gray_neighbours() {
        for s in 0..4u8 {
            assert_eq!(qpsk_decide(qpsk_point(s)), s);
            assert_eq!(qpsk_decide(qpsk_point(s) * Complex::from_polar(1.0, 0.7)), s);
        }
        // adjacent points differ in exactly one bit
        for q in 0..4 {
            let a = qpsk_decide(Complex::from_polar(1.0, FRAC_PI_4 + q as f64 * FRAC_PI_2));
            let b = qpsk_decide(Complex::from_polar(1.0, FRAC_PI_4 + (q + 1) as f64 * FRAC_PI_2));
            assert_eq!((a ^ b).count_ones(), 1);
        }
    }

    #[test]
    fn quadrants() {
        assert_eq!(quadrant(0.1), 0);
        assert_eq!(quadrant(-0.7), 0);
        assert_eq!(quadrant(FRAC_PI_2), 1);
        assert_eq!(quadrant(3.1), 2);
        assert_eq!(quadrant(-FRAC_PI_2), 3);
    }

    fn frame(eve: impl Fn(usize) -> Complex, n: usize) -> QpskFrame {
        let mut s = RandomStream::new(8, 0);
        QpskFrame {
            symbols: (0..n).map(|_| s.below(4) as u8).collect(),
            bob_channels: vec![Complex::new(1.0, 0.0); n],
            eve_channels: (0..n).map(eve).collect(),
        }
    }

    #[test]
    fn identity_channels_are_error_free() {
        let f = frame(|_| Complex::new(1.0, 0.0), 1000);
        assert_eq!(protego_transmit(&f, 60.0, &mut RandomStream::new(1, 0)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn quarter_turn_obfuscation_gives_three_quarters() {
        let mut s = RandomStream::new(5, 0);
        let turns: Vec<usize> = (0..10_000).map(|_| s.below(4)).collect();
        let f = frame(|i| Complex::from_polar(1.0, turns[i] as f64 * FRAC_PI_2), 10_000);
        let (bob, eve) = protego_transmit(&f, 60.0, &mut RandomStream::new(1, 0)).unwrap();
        assert_eq!(bob, 0.0);
        assert!((eve - 0.75).abs() <= 0.02, "{eve}");
    }
}
