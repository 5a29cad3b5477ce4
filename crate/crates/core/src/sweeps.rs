//! Placement experiments: distance, carrier frequency, orientation and
//! inter-surface coupling.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{max_amplitude, mutual_snr, randomization_variance, MutualSnrEstimate};
use crate::battle::{fight, Arena, BattleSchedule, PartySpec};
use crate::channel::{superposition_estimate, ChannelModel};
use crate::environment::{Endpoint, Geometry, PropagationParams, SurfaceId, SurfacePlacement, Vec3};
use crate::error::{domain, Result};
use crate::mathcore::RandomStream;
use crate::metasurface::{random_config, MetasurfaceSpec, SurfaceConfig};
use crate::optimizers::{optimize, Feedback, ObjectiveSense, Optimizer, OptimizerKind, OptimizerSettings};
use crate::stats;

/// Replays one random configuration sequence per surface: A alone (B held),
/// B alone (A held), then both together, and feeds the three `|H|` traces
/// to the matched-filter estimator.
pub fn mutual_snr_probe(model: &ChannelModel, samples: usize, stream: &mut RandomStream) -> Result<MutualSnrEstimate> {
    if samples < 2 {
        return Err(domain("mutual SNR probe needs at least 2 samples"));
    }
    let (sa, sb) = (model.spec(SurfaceId::A), model.spec(SurfaceId::B));
    let hold_a = random_config(sa, stream);
    let hold_b = random_config(sb, stream);
    let seq_a: Vec<SurfaceConfig> = (0..samples).map(|_| random_config(sa, stream)).collect();
    let seq_b: Vec<SurfaceConfig> = (0..samples).map(|_| random_config(sb, stream)).collect();
    let mut noise = stream.fork(1);
    let mut trace = |vary_a: bool, vary_b: bool| -> Vec<f64> {
        (0..samples)
            .map(|t| {
                let a = if vary_a { &seq_a[t] } else { &hold_a };
                let b = if vary_b { &seq_b[t] } else { &hold_b };
                model.measure(a, b, &mut noise).norm()
            })
            .collect()
    };
    let only_a = trace(true, false);
    let only_b = trace(false, true);
    let joint = trace(true, true);
    mutual_snr(&only_a, &only_b, &joint)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceRow {
    pub distance_a: f64,
    pub distance_b: f64,
    /// Median over trials of `10·log10(snr_b)`.
    pub snr_b_db: f64,
    pub median_gain_db: f64,
    pub win_rate_a: f64,
    pub win_rate_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceSweep {
    pub rows: Vec<DistanceRow>,
    /// Rank correlation between `snr_b_db` and `median_gain_db`.
    pub spearman: f64,
}

/// Shared settings of the battle-based sweeps.
#[derive(Clone, Debug)]
pub struct SweepBattle {
    pub a: PartySpec,
    pub b: PartySpec,
    pub schedule: BattleSchedule,
    pub trials: usize,
    pub probe_samples: usize,
}

struct TrialResult {
    snr_b_db: f64,
    gain_db: f64,
    winner: crate::battle::Winner,
}

/// Runs `trials` battles plus a mutual-SNR probe per point on the arena
/// produced by `arena(point, trial)`. Streams are keyed by (point, trial).
fn battle_points<F>(points: usize, setup: &SweepBattle, stream: &RandomStream, arena: F) -> Result<Vec<Vec<TrialResult>>>
where
    F: Fn(usize, usize) -> Result<Arena> + Sync,
{
    if setup.trials == 0 {
        return Err(domain("need at least one trial per point"));
    }
    let jobs: Vec<(usize, usize)> = (0..points).flat_map(|p| (0..setup.trials).map(move |t| (p, t))).collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let s = stream.fork(((p as u64) << 32) | t as u64);
            let arena = arena(p, t)?;
            let est = mutual_snr_probe(&arena.model, setup.probe_samples, &mut s.fork(2))?;
            let (_, o) = fight(&arena, &setup.a, &setup.b, &setup.schedule, &s.fork(3))?;
            Ok(TrialResult {
                snr_b_db: 10.0 * est.snr_b.log10(),
                gain_db: o.gain_db,
                winner: o.winner,
            })
        })
        .collect::<Result<_>>()?;
    let mut grouped: Vec<Vec<TrialResult>> = (0..points).map(|_| Vec::new()).collect();
    for ((p, _), r) in jobs.into_iter().zip(results) {
        grouped[p].push(r);
    }
    Ok(grouped)
}

fn summarize(trials: &[TrialResult]) -> (f64, f64, f64, f64) {
    use crate::battle::Winner;
    let n = trials.len() as f64;
    let snr: Vec<f64> = trials.iter().map(|r| r.snr_b_db).collect();
    let gain: Vec<f64> = trials.iter().map(|r| r.gain_db).collect();
    let rate = |w: Winner| trials.iter().filter(|r| r.winner == w).count() as f64 / n;
    (stats::median(&snr), stats::median(&gain), rate(Winner::A), rate(Winner::B))
}

/// Office room with the two surfaces at the given antenna distances.
pub fn distance_sweep(
    points: &[(f64, f64)],
    params: &PropagationParams,
    setup: &SweepBattle,
    stream: &RandomStream,
) -> Result<DistanceSweep> {
    if points.is_empty() {
        return Err(domain("distance sweep needs at least one point"));
    }
    if points.iter().any(|&(a, b)| !(a > 0.0 && b > 0.0)) {
        return Err(domain("surface distances must be positive"));
    }
    let env = stream.fork(0xE0);
    let grouped = battle_points(points.len(), setup, stream, |p, t| {
        let (da, db) = points[p];
        office_pair_arena(Geometry::office(da, db), params, &mut env.fork(((p as u64) << 32) | t as u64))
    })?;
    let rows: Vec<DistanceRow> = points
        .iter()
        .zip(&grouped)
        .map(|(&(distance_a, distance_b), g)| {
            let (snr_b_db, median_gain_db, win_rate_a, win_rate_b) = summarize(g);
            DistanceRow {
                distance_a,
                distance_b,
                snr_b_db,
                median_gain_db,
                win_rate_a,
                win_rate_b,
            }
        })
        .collect();
    let snr: Vec<f64> = rows.iter().map(|r| r.snr_b_db).collect();
    let gain: Vec<f64> = rows.iter().map(|r| r.median_gain_db).collect();
    let spearman = if rows.len() >= 2 { stats::spearman(&snr, &gain)? } else { f64::NAN };
    Ok(DistanceSweep { rows, spearman })
}

fn office_pair_arena(geometry: Geometry, params: &PropagationParams, stream: &mut RandomStream) -> Result<Arena> {
    let la = geometry.surface_a.as_ref().map_or(0, |s| s.element_count());
    let lb = geometry.surface_b.as_ref().map_or(0, |s| s.element_count());
    let model = ChannelModel::synthesize(
        &geometry,
        params,
        MetasurfaceSpec::binary(la),
        MetasurfaceSpec::binary(lb),
        Endpoint::Alice,
        Endpoint::Bob,
        stream,
    )?;
    Ok(Arena {
        model,
        geometry: Some(geometry),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub frequency_hz: f64,
    pub direct_magnitude: f64,
    /// Std of each surface's channel under random configurations.
    pub random_std_a: f64,
    pub random_std_b: f64,
    pub median_gain_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencySweep {
    pub rows: Vec<FrequencyRow>,
    /// Sample variance of the direct-path magnitude across frequencies.
    pub direct_magnitude_variance: f64,
}

/// Same room at each carrier; scatter is redrawn per frequency step.
pub fn frequency_sweep(
    frequencies_hz: &[f64],
    geometry: &Geometry,
    params: &PropagationParams,
    setup: &SweepBattle,
    stream: &RandomStream,
) -> Result<FrequencySweep> {
    if frequencies_hz.iter().any(|&f| !(f > 0.0)) {
        return Err(domain("frequencies must be positive"));
    }
    if frequencies_hz.len() < 2 {
        return Err(domain("frequency sweep needs at least two points"));
    }
    // one environment per frequency, shared by all trials of that point
    let env = stream.fork(0xF0);
    let arenas: Vec<Arena> = frequencies_hz
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let mut g = geometry.clone();
            g.frequency_hz = f;
            office_pair_arena(g, params, &mut env.fork(i as u64))
        })
        .collect::<Result<_>>()?;
    let grouped = battle_points(arenas.len(), setup, &stream.fork(0xF1), |p, _| Ok(arenas[p].clone()))?;
    let rows: Vec<FrequencyRow> = frequencies_hz
        .iter()
        .zip(&arenas)
        .zip(&grouped)
        .map(|((&frequency_hz, arena), g)| FrequencyRow {
            frequency_hz,
            direct_magnitude: arena.model.direct().norm(),
            random_std_a: randomization_variance(arena.model.subchannels(SurfaceId::A)).sqrt(),
            random_std_b: randomization_variance(arena.model.subchannels(SurfaceId::B)).sqrt(),
            median_gain_db: summarize(g).1,
        })
        .collect();
    let mags: Vec<f64> = rows.iter().map(|r| r.direct_magnitude).collect();
    Ok(FrequencySweep {
        direct_magnitude_variance: stats::std_dev(&mags).powi(2),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrientationRow {
    pub angle_rad: f64,
    /// Coherent amplitude each surface could reach.
    pub max_amplitude_a: f64,
    pub max_amplitude_b: f64,
    pub snr_b_db: f64,
    pub median_gain_db: f64,
    pub win_rate_b: f64,
}

/// Office room with surface B turned by each angle about the vertical axis.
pub fn orientation_sweep(
    angles_rad: &[f64],
    geometry: &Geometry,
    params: &PropagationParams,
    setup: &SweepBattle,
    stream: &RandomStream,
) -> Result<Vec<OrientationRow>> {
    if angles_rad.is_empty() {
        return Err(domain("orientation sweep needs at least one angle"));
    }
    let turned = |p: usize| {
        let mut g = geometry.clone();
        g.surface_b = g.surface_b.map(|s| s.rotated(angles_rad[p]));
        g
    };
    // trial t sees the same scatter draws at every angle
    let env = stream.fork(0xA0);
    let grouped = battle_points(angles_rad.len(), setup, stream, |p, t| office_pair_arena(turned(p), params, &mut env.fork(t as u64)))?;
    angles_rad
        .iter()
        .enumerate()
        .zip(&grouped)
        .map(|((p, &angle_rad), g)| {
            let arena = office_pair_arena(turned(p), params, &mut env.fork(0))?;
            let (snr_b_db, median_gain_db, _, win_rate_b) = summarize(g);
            Ok(OrientationRow {
                angle_rad,
                max_amplitude_a: max_amplitude(arena.model.subchannels(SurfaceId::A)),
                max_amplitude_b: max_amplitude(arena.model.subchannels(SurfaceId::B)),
                snr_b_db,
                median_gain_db,
                win_rate_b,
            })
        })
        .collect()
}

/// Alice and Bob 3 m apart with both surfaces midway, `separation` apart
/// and facing each other; B is then tilted away about the Alice-Bob axis by
/// `angle` radians, which weakens every path through B alike.
pub fn facing_geometry(separation: f64, angle: f64) -> Geometry {
    let mid = Vec3::new(1.5, 0.0, 0.0);
    let half = Vec3::new(0.0, separation / 2.0, 0.0);
    let a = SurfacePlacement::default_grid(mid - half, Vec3::new(0.0, 1.0, 0.0));
    let b = SurfacePlacement::default_grid(mid + half, Vec3::new(0.0, -angle.cos(), angle.sin()));
    Geometry {
        alice: Vec3::new(0.0, 0.0, 0.0),
        bob: Vec3::new(3.0, 0.0, 0.0),
        eve: None,
        surface_a: Some(a),
        surface_b: Some(b),
        frequency_hz: crate::environment::DEFAULT_FREQUENCY_HZ,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingRow {
    pub angle_rad: f64,
    pub coupling_enabled: bool,
    /// Median over trials of the superposition error.
    pub median_error_db: f64,
    pub median_abs_error_db: f64,
}

#[derive(Clone, Debug)]
pub struct CouplingSetup {
    pub separation: f64,
    pub ensemble: usize,
    pub trials: usize,
    /// Optimization steps per surface before the superposition test; 0
    /// tests random configurations.
    pub steps: usize,
    pub sense_a: ObjectiveSense,
    pub sense_b: ObjectiveSense,
    pub settings: OptimizerSettings,
}

/// Superposition error per angle. Each trial draws an environment, lets
/// both surfaces optimize the channel in alternating rounds, then compares
/// the measured channel with the ensemble estimate.
pub fn coupling_test(
    angles_rad: &[f64],
    params: &PropagationParams,
    setup: &CouplingSetup,
    stream: &RandomStream,
) -> Result<Vec<CouplingRow>> {
    if angles_rad.is_empty() || setup.trials == 0 {
        return Err(domain("coupling test needs angles and trials"));
    }
    let jobs: Vec<(usize, usize)> = (0..angles_rad.len()).flat_map(|p| (0..setup.trials).map(move |t| (p, t))).collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, t)| {
            // trial t shares its scatter draws across angles
            let s = stream.fork(t as u64);
            let arena = office_pair_arena(facing_geometry(setup.separation, angles_rad[p]), params, &mut s.fork(1))?;
            let (a, b) = mutual_optimum(&arena.model, setup, &mut s.fork(2))?;
            Ok(superposition_estimate(&arena.model, &a, &b, setup.ensemble, &mut s.fork(3))?.error_db)
        })
        .collect::<Result<_>>()?;
    Ok(angles_rad
        .iter()
        .zip(errors.chunks(setup.trials))
        .map(|(&angle_rad, e)| {
            let abs: Vec<f64> = e.iter().map(|x| x.abs()).collect();
            CouplingRow {
                angle_rad,
                coupling_enabled: params.coupling_enabled,
                median_error_db: stats::median(e),
                median_abs_error_db: stats::median(&abs),
            }
        })
        .collect())
}

/// GD on both surfaces in alternating rounds of ten steps.
fn mutual_optimum(model: &ChannelModel, setup: &CouplingSetup, stream: &mut RandomStream) -> Result<(SurfaceConfig, SurfaceConfig)> {
    let settings = &setup.settings;
    let mut oa = Optimizer::new(OptimizerKind::GD, setup.sense_a, model.spec(SurfaceId::A).clone(), settings.clone(), stream)?;
    let mut ob = Optimizer::new(OptimizerKind::GD, setup.sense_b, model.spec(SurfaceId::B).clone(), settings.clone(), stream)?;
    let mut noise = stream.fork(1);
    let (steps, mut done) = (setup.steps, 0);
    while done < steps {
        let round = (steps - done).min(10);
        let held_b = ob.current_config().clone();
        optimize(&mut oa, round, stream, |c| Ok(Feedback::score(model.measure(c, &held_b, &mut noise).norm_sqr())))?;
        let held_a = oa.current_config().clone();
        optimize(&mut ob, round, stream, |c| Ok(Feedback::score(model.measure(&held_a, c, &mut noise).norm_sqr())))?;
        done += round;
    }
    Ok((oa.current_config().clone(), ob.current_config().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{DirectChannel, SubchannelSet};
    use crate::mathcore::{cn1, Complex};

    #[test]
    fn probe_sees_the_stronger_surface() {
        let mut s = RandomStream::new(1, 0);
        let mut sub = |scale: f64| SubchannelSet::new((0..64).map(|_| cn1(&mut s) * scale).collect(), vec![Complex::new(1.0, 0.0); 64]).unwrap();
        let (a, b) = (sub(0.01), sub(0.1));
        let m = ChannelModel::new(DirectChannel { value: Complex::new(1.0, 0.0) }, a, MetasurfaceSpec::binary(64), b, MetasurfaceSpec::binary(64)).unwrap();
        let est = mutual_snr_probe(&m, 1000, &mut RandomStream::new(2, 0)).unwrap();
        assert!(est.snr_b > 10.0, "snr {}", est.snr_b);
        let swapped = ChannelModel::new(
            DirectChannel { value: Complex::new(1.0, 0.0) },
            m.subchannels(SurfaceId::B).clone(),
            MetasurfaceSpec::binary(64),
            m.subchannels(SurfaceId::A).clone(),
            MetasurfaceSpec::binary(64),
        )
        .unwrap();
        let est = mutual_snr_probe(&swapped, 1000, &mut RandomStream::new(2, 0)).unwrap();
        assert!(est.snr_b < 0.1, "snr {}", est.snr_b);
    }

    #[test]
    fn facing_geometry_faces() {
        let g = facing_geometry(0.6, 0.0);
        let (a, b) = (g.surface_a.unwrap(), g.surface_b.unwrap());
        assert!((a.normal.dot(b.center - a.center) / 0.6 - 1.0).abs() < 1e-12);
        assert!((b.normal.dot(a.center - b.center) / 0.6 - 1.0).abs() < 1e-12);
        let g = facing_geometry(0.6, 0.5);
        let b = g.surface_b.unwrap();
        assert!((b.normal.y + 0.5f64.cos()).abs() < 1e-12 && (b.normal.z - 0.5f64.sin()).abs() < 1e-12);
        assert_eq!(g.surface_a.unwrap().normal, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn sweeps_reject_empty_input() {
        let s = RandomStream::new(0, 0);
        let setup = SweepBattle {
            a: PartySpec::new(OptimizerKind::NO, ObjectiveSense::Minimize),
            b: PartySpec::new(OptimizerKind::NO, ObjectiveSense::Maximize),
            schedule: BattleSchedule::simultaneous(10),
            trials: 1,
            probe_samples: 10,
        };
        let p = PropagationParams::default();
        assert!(distance_sweep(&[], &p, &setup, &s).is_err());
        assert!(distance_sweep(&[(0.0, 1.0)], &p, &setup, &s).is_err());
        assert!(frequency_sweep(&[5e9], &Geometry::office(0.3, 0.3), &p, &setup, &s).is_err());
        assert!(orientation_sweep(&[], &Geometry::office(0.3, 0.3), &p, &setup, &s).is_err());
    }
}
