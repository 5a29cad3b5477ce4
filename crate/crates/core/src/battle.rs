//! Two optimizers fighting over one channel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::channel::ChannelModel;
use crate::environment::{Geometry, SurfaceId};
use crate::error::{contract, domain, Error, Result};
use crate::mathcore::{power_db, Complex, RandomStream};
use crate::metasurface::{mask_random_elements, random_config, SurfaceConfig};
use crate::optimizers::{beamform_candidates, Feedback, ObjectiveSense, Optimizer, OptimizerKind, OptimizerSettings};
use crate::stats;

/// Half-width of the band around 0 dB reported as a draw.
pub const DRAW_BAND_DB: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    /// Each party optimizes against a frozen random opponent; final
    /// configurations are then combined.
    Independent,
    /// A optimizes first and freezes; B then optimizes against it.
    Reactive,
    /// Both parties step in the same loop at their own pace.
    Simultaneous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BattleSchedule {
    pub mode: TimingMode,
    pub pause_a: usize,
    pub pause_b: usize,
    pub total_steps: usize,
    pub baseline_trials: usize,
}

impl BattleSchedule {
    pub fn simultaneous(total_steps: usize) -> Self {
        Self {
            mode: TimingMode::Simultaneous,
            pause_a: 1,
            pause_b: 1,
            total_steps,
            baseline_trials: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pause_a == 0 || self.pause_b == 0 {
            return Err(domain("pause values must be at least 1"));
        }
        if self.total_steps == 0 {
            return Err(contract("a battle needs at least one step"));
        }
        if self.baseline_trials == 0 {
            return Err(domain("baseline needs at least one trial"));
        }
        Ok(())
    }
}

/// Scalar score a party derives from its own observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationFn {
    /// `10·log10|H|²`.
    PowerDb,
    /// `|H|`.
    Magnitude,
}

impl EvaluationFn {
    pub fn score(self, observation: Complex) -> f64 {
        match self {
            EvaluationFn::PowerDb => power_db(observation),
            EvaluationFn::Magnitude => observation.norm(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
    Draw,
}

/// One battle step. Configurations are recorded by digest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub config_a: u64,
    pub config_b: u64,
    pub acted_a: bool,
    pub acted_b: bool,
    /// Latest score each party computed from its own observation; NaN
    /// before the first one.
    pub believed_a: f64,
    pub believed_b: f64,
    /// Noiseless effective channel after the step.
    pub true_channel: Complex,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BattleTrace {
    pub steps: Vec<TraceStep>,
    pub final_a: SurfaceConfig,
    pub final_b: SurfaceConfig,
    pub baseline_mean: f64,
    pub baseline_std: f64,
}

impl BattleTrace {
    /// Long-format CSV, one row per step and party.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,party,applied_config_hash,believed_score,true_magnitude_db,true_phase_rad\n");
        for s in &self.steps {
            let mag = power_db(s.true_channel);
            let ph = s.true_channel.arg();
            for (party, hash, believed) in [("A", s.config_a, s.believed_a), ("B", s.config_b, s.believed_b)] {
                let b = if believed.is_nan() { String::new() } else { format!("{believed:.6}") };
                let _ = writeln!(out, "{},{party},{hash:016x},{b},{mag:.6},{ph:.6}", s.step);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BattleOutcome {
    /// Final true power relative to the random baseline.
    pub gain_db: f64,
    pub winner: Winner,
    /// Each party's last believed power relative to the baseline (power
    /// scores only; NaN otherwise).
    pub believed_gain_a_db: f64,
    pub believed_gain_b_db: f64,
}

/// Winner implied by a gain given the parties' senses.
pub fn judge(gain_db: f64, sense_a: ObjectiveSense, sense_b: ObjectiveSense) -> Winner {
    if gain_db.abs() <= DRAW_BAND_DB {
        return Winner::Draw;
    }
    let up = gain_db > 0.0;
    let wins = |s: ObjectiveSense| (s == ObjectiveSense::Maximize) == up;
    match (wins(sense_a), wins(sense_b)) {
        (true, false) => Winner::A,
        (false, true) => Winner::B,
        _ => Winner::Draw,
    }
}

/// Mean and standard deviation of `|H_eff|²` over random configuration pairs.
pub fn baseline_power(model: &ChannelModel, trials: usize, stream: &mut RandomStream) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(domain("baseline needs at least one trial"));
    }
    let p: Vec<f64> = (0..trials)
        .map(|_| {
            let a = random_config(model.spec(SurfaceId::A), stream);
            let b = random_config(model.spec(SurfaceId::B), stream);
            model.evaluate(&a, &b).norm_sqr()
        })
        .collect();
    Ok((stats::mean(&p), stats::std_dev(&p)))
}

struct Party<'a> {
    id: SurfaceId,
    opt: &'a mut Optimizer,
    eval: EvaluationFn,
    held: SurfaceConfig,
    believed: f64,
    rng: RandomStream,
}

impl Party<'_> {
    /// One propose/observe/feedback cycle against the opponent's held config.
    fn act(&mut self, model: &ChannelModel, other: &SurfaceConfig, noise: &mut RandomStream) -> Result<()> {
        let cfg = self.opt.propose(&mut self.rng);
        let h = match self.id {
            SurfaceId::A => model.measure(&cfg, other, noise),
            SurfaceId::B => model.measure(other, &cfg, noise),
        };
        let score = self.eval.score(h);
        self.opt.feedback(&cfg, Feedback { score, channel: Some(h) })?;
        self.held = self.opt.current_config().clone();
        self.believed = score;
        Ok(())
    }
}

/// Runs one battle.
///
/// In the sequential modes the step budget is split in halves, A's phase
/// first. In simultaneous mode A acts before B within a step whenever
/// `step % pause == 0` for it.
pub fn run_battle(
    model: &ChannelModel,
    opt_a: &mut Optimizer,
    opt_b: &mut Optimizer,
    schedule: &BattleSchedule,
    eval_a: EvaluationFn,
    eval_b: EvaluationFn,
    stream: &RandomStream,
) -> Result<(BattleTrace, BattleOutcome)> {
    schedule.validate()?;
    if opt_a.spec() != model.spec(SurfaceId::A) || opt_b.spec() != model.spec(SurfaceId::B) {
        return Err(contract("optimizer specs do not match the channel model"));
    }
    let (baseline_mean, baseline_std) = baseline_power(model, schedule.baseline_trials, &mut stream.fork(0))?;
    let mut noise = stream.fork(3);
    let mut a = Party {
        id: SurfaceId::A,
        held: opt_a.current_config().clone(),
        opt: opt_a,
        eval: eval_a,
        believed: f64::NAN,
        rng: stream.fork(1),
    };
    let mut b = Party {
        id: SurfaceId::B,
        held: opt_b.current_config().clone(),
        opt: opt_b,
        eval: eval_b,
        believed: f64::NAN,
        rng: stream.fork(2),
    };
    let (start_a, start_b) = (a.held.clone(), b.held.clone());
    let half = schedule.total_steps / 2;
    let mut steps = Vec::with_capacity(schedule.total_steps);
    for t in 0..schedule.total_steps {
        let (mut acted_a, mut acted_b) = (false, false);
        let (shown_a, shown_b);
        match schedule.mode {
            TimingMode::Simultaneous => {
                if t % schedule.pause_a == 0 {
                    a.act(model, &b.held, &mut noise)?;
                    acted_a = true;
                }
                if t % schedule.pause_b == 0 {
                    b.act(model, &a.held, &mut noise)?;
                    acted_b = true;
                }
                shown_a = a.held.clone();
                shown_b = b.held.clone();
            }
            TimingMode::Independent | TimingMode::Reactive if t < half => {
                if (t % schedule.pause_a) == 0 {
                    a.act(model, &start_b, &mut noise)?;
                    acted_a = true;
                }
                shown_a = a.held.clone();
                shown_b = start_b.clone();
            }
            TimingMode::Independent | TimingMode::Reactive => {
                let opponent = if schedule.mode == TimingMode::Independent {
                    &start_a
                } else {
                    &a.held
                };
                if ((t - half) % schedule.pause_b) == 0 {
                    b.act(model, opponent, &mut noise)?;
                    acted_b = true;
                }
                shown_a = opponent.clone();
                shown_b = b.held.clone();
            }
        }
        steps.push(TraceStep {
            step: t,
            config_a: shown_a.digest(),
            config_b: shown_b.digest(),
            acted_a,
            acted_b,
            believed_a: a.believed,
            believed_b: b.believed,
            true_channel: model.evaluate(&shown_a, &shown_b),
        });
    }
    let final_a = a.held.clone();
    let final_b = b.held.clone();
    let final_power = model.evaluate(&final_a, &final_b).norm_sqr();
    let gain_db = 10.0 * (final_power / baseline_mean).log10();
    let rel = |p: &Party| {
        if p.eval == EvaluationFn::PowerDb {
            p.believed - 10.0 * baseline_mean.log10()
        } else {
            f64::NAN
        }
    };
    let outcome = BattleOutcome {
        gain_db,
        winner: judge(gain_db, a.opt.sense(), b.opt.sense()),
        believed_gain_a_db: rel(&a),
        believed_gain_b_db: rel(&b),
    };
    Ok((
        BattleTrace {
            steps,
            final_a,
            final_b,
            baseline_mean,
            baseline_std,
        },
        outcome,
    ))
}

/// A channel plus, optionally, the geometry it came from (needed by BF).
#[derive(Clone, Debug)]
pub struct Arena {
    pub model: ChannelModel,
    pub geometry: Option<Geometry>,
}

/// How one party fights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartySpec {
    pub kind: OptimizerKind,
    pub sense: ObjectiveSense,
    pub settings: OptimizerSettings,
}

impl PartySpec {
    pub fn new(kind: OptimizerKind, sense: ObjectiveSense) -> Self {
        Self {
            kind,
            sense,
            settings: OptimizerSettings::default(),
        }
    }
}

/// Builds a party's optimizer; BF beams are anchored at the antenna each
/// surface sits next to (Alice for A, Bob for B).
pub fn build_optimizer(arena: &Arena, id: SurfaceId, party: &PartySpec, stream: &mut RandomStream) -> Result<Optimizer> {
    let spec = arena.model.spec(id).clone();
    if party.kind != OptimizerKind::BF {
        return Optimizer::new(party.kind, party.sense, spec, party.settings.clone(), stream);
    }
    let geometry = arena
        .geometry
        .as_ref()
        .ok_or_else(|| Error::Unsupported("BF needs the arena geometry".into()))?;
    let known = match id {
        SurfaceId::A => geometry.alice,
        SurfaceId::B => geometry.bob,
    };
    let initial = random_config(&spec, stream);
    let candidates = beamform_candidates(
        geometry,
        id,
        &spec,
        known,
        party.settings.beam_candidates,
        party.settings.beam_range,
        stream,
    )?;
    Optimizer::beamformer(party.sense, spec, party.settings.clone(), initial, candidates)
}

/// Builds both optimizers and runs one battle with power scores.
pub fn fight(
    arena: &Arena,
    a: &PartySpec,
    b: &PartySpec,
    schedule: &BattleSchedule,
    stream: &RandomStream,
) -> Result<(BattleTrace, BattleOutcome)> {
    let mut oa = build_optimizer(arena, SurfaceId::A, a, &mut stream.fork(10))?;
    let mut ob = build_optimizer(arena, SurfaceId::B, b, &mut stream.fork(11))?;
    run_battle(&arena.model, &mut oa, &mut ob, schedule, EvaluationFn::PowerDb, EvaluationFn::PowerDb, stream)
}

/// Aggregate of repeated battles for one matrix cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellStats {
    pub gains_db: Vec<f64>,
    pub median_gain_db: f64,
    pub mean_gain_db: f64,
    pub win_rate_a: f64,
    pub win_rate_b: f64,
}

impl CellStats {
    pub fn from_outcomes(outcomes: &[BattleOutcome]) -> Self {
        let gains: Vec<f64> = outcomes.iter().map(|o| o.gain_db).collect();
        let n = outcomes.len() as f64;
        Self {
            median_gain_db: stats::median(&gains),
            mean_gain_db: stats::mean(&gains),
            win_rate_a: outcomes.iter().filter(|o| o.winner == Winner::A).count() as f64 / n,
            win_rate_b: outcomes.iter().filter(|o| o.winner == Winner::B).count() as f64 / n,
            gains_db: gains,
        }
    }
}

/// Grid of cells with row and column labels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BattleMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<CellStats>>,
}

impl BattleMatrix {
    pub fn median_grid(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|r| r.iter().map(|c| c.median_gain_db).collect()).collect()
    }

    /// CSV grid of median gains with headers.
    pub fn to_csv(&self, corner: &str) -> String {
        let mut out = String::from(corner);
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            out.push_str(label);
            for c in row {
                let _ = write!(out, ",{:.6}", c.median_gain_db);
            }
            out.push('\n');
        }
        out
    }
}

/// Produces the arena for trial `i`; called with a stream keyed by trial.
pub type ArenaFn<'a> = dyn Fn(usize, &mut RandomStream) -> Result<Arena> + Sync + 'a;

/// One battle configuration within a sweep.
#[derive(Clone, Debug)]
pub struct CellSetup {
    pub a: PartySpec,
    pub b: PartySpec,
    pub schedule: BattleSchedule,
    /// Active elements per surface; `None` keeps the arena's specs.
    pub active: Option<(usize, usize)>,
}

/// Runs `trials` battles for each cell in parallel.
///
/// Trial `i` sees the same environment in every cell, and every battle's
/// stream is keyed by (cell, trial), so results do not depend on thread
/// count or scheduling.
pub fn run_cells(arenas: &ArenaFn, cells: &[CellSetup], trials: usize, stream: &RandomStream) -> Result<Vec<CellStats>> {
    if trials == 0 {
        return Err(domain("need at least one trial"));
    }
    let env_root = stream.fork(0xE7);
    let arenas: Vec<Arena> = (0..trials)
        .into_par_iter()
        .map(|i| arenas(i, &mut env_root.fork(i as u64)))
        .collect::<Result<_>>()?;
    let battle_root = stream.fork(0xBA);
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..trials).map(move |t| (c, t))).collect();
    let outcomes: Vec<BattleOutcome> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let cell = &cells[c];
            let key = ((c as u64) << 32) | t as u64;
            let s = battle_root.fork(key);
            let arena = match cell.active {
                None => arenas[t].clone(),
                Some((la, lb)) => masked_arena(&arenas[t], la, lb, &mut s.fork(20))?,
            };
            fight(&arena, &cell.a, &cell.b, &cell.schedule, &s).map(|(_, o)| o)
        })
        .collect::<Result<_>>()?;
    Ok(outcomes.chunks(trials).map(CellStats::from_outcomes).collect())
}

/// Deactivates elements so that `la` and `lb` remain active.
pub fn masked_arena(arena: &Arena, la: usize, lb: usize, stream: &mut RandomStream) -> Result<Arena> {
    let sa = arena.model.spec(SurfaceId::A);
    let sb = arena.model.spec(SurfaceId::B);
    if la > sa.element_count() || lb > sb.element_count() {
        return Err(domain("more active elements requested than the surface has"));
    }
    let ma = mask_random_elements(sa, sa.element_count() - la, stream)?;
    let mb = mask_random_elements(sb, sb.element_count() - lb, stream)?;
    Ok(Arena {
        model: arena.model.with_specs(ma, mb)?,
        geometry: arena.geometry.clone(),
    })
}

/// Simultaneous battles for every (pause_a, pause_b) pair.
pub fn speed_matrix(
    arenas: &ArenaFn,
    a: &PartySpec,
    b: &PartySpec,
    pauses: &[usize],
    total_steps: usize,
    trials: usize,
    stream: &RandomStream,
) -> Result<BattleMatrix> {
    if pauses.is_empty() {
        return Err(domain("speed matrix needs at least one pause value"));
    }
    let mut cells = Vec::new();
    for &pa in pauses {
        for &pb in pauses {
            cells.push(CellSetup {
                a: a.clone(),
                b: b.clone(),
                schedule: BattleSchedule {
                    pause_a: pa,
                    pause_b: pb,
                    ..BattleSchedule::simultaneous(total_steps)
                },
                active: None,
            });
        }
    }
    let stats = run_cells(arenas, &cells, trials, stream)?;
    let labels: Vec<String> = pauses.iter().map(|p| p.to_string()).collect();
    Ok(BattleMatrix {
        row_labels: labels.clone(),
        col_labels: labels,
        cells: stats.chunks(pauses.len()).map(|r| r.to_vec()).collect(),
    })
}

/// Every ordered pair of optimizer kinds, fought simultaneously.
pub fn algorithm_matrix(
    arenas: &ArenaFn,
    kinds: &[OptimizerKind],
    sense_a: ObjectiveSense,
    settings: &OptimizerSettings,
    total_steps: usize,
    trials: usize,
    stream: &RandomStream,
) -> Result<BattleMatrix> {
    let mut cells = Vec::new();
    for &ka in kinds {
        for &kb in kinds {
            cells.push(CellSetup {
                a: PartySpec {
                    kind: ka,
                    sense: sense_a,
                    settings: settings.clone(),
                },
                b: PartySpec {
                    kind: kb,
                    sense: sense_a.opposite(),
                    settings: settings.clone(),
                },
                schedule: BattleSchedule::simultaneous(total_steps),
                active: None,
            });
        }
    }
    let stats = run_cells(arenas, &cells, trials, stream)?;
    let labels: Vec<String> = kinds.iter().map(|k| k.name().to_string()).collect();
    Ok(BattleMatrix {
        row_labels: labels.clone(),
        col_labels: labels,
        cells: stats.chunks(kinds.len().max(1)).map(|r| r.to_vec()).collect(),
    })
}

/// Battles for every pair of active-element counts.
pub fn element_matrix(
    arenas: &ArenaFn,
    a: &PartySpec,
    b: &PartySpec,
    counts: &[usize],
    total_steps: usize,
    trials: usize,
    stream: &RandomStream,
) -> Result<BattleMatrix> {
    let mut cells = Vec::new();
    for &la in counts {
        for &lb in counts {
            cells.push(CellSetup {
                a: a.clone(),
                b: b.clone(),
                schedule: BattleSchedule::simultaneous(total_steps),
                active: Some((la, lb)),
            });
        }
    }
    let stats = run_cells(arenas, &cells, trials, stream)?;
    let labels: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
    Ok(BattleMatrix {
        row_labels: labels.clone(),
        col_labels: labels,
        cells: stats.chunks(counts.len().max(1)).map(|r| r.to_vec()).collect(),
    })
}
