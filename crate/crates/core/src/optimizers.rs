//! Feedback-driven configuration search strategies.
//!
//! Every optimizer follows the same cycle: [`Optimizer::propose`] returns a
//! configuration, the caller applies and evaluates it exactly once, and
//! [`Optimizer::feedback`] hands the score back. One cycle costs one channel
//! evaluation, which is what makes battles between different kinds fair.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::environment::{Geometry, SurfaceId, Vec3};
use crate::error::{contract, domain, Error, Result};
use crate::mathcore::{Complex, RandomStream};
use crate::metasurface::{random_config, MetasurfaceSpec, SurfaceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveSense {
    Maximize,
    Minimize,
}

impl ObjectiveSense {
    /// Strict improvement; ties are not improvements.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            ObjectiveSense::Maximize => candidate > incumbent,
            ObjectiveSense::Minimize => candidate < incumbent,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            ObjectiveSense::Maximize => 1.0,
            ObjectiveSense::Minimize => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            ObjectiveSense::Maximize => ObjectiveSense::Minimize,
            ObjectiveSense::Minimize => ObjectiveSense::Maximize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OptimizerKind {
    /// Greedy stochastic hill climbing with multi-element mutations.
    GD,
    /// Element-wise flip testing.
    FL,
    /// Precomputed beam configurations.
    BF,
    /// Linear regression on spin variables.
    LR,
    /// Random sampling.
    RD,
    /// No optimization.
    NO,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::GD,
        OptimizerKind::FL,
        OptimizerKind::BF,
        OptimizerKind::LR,
        OptimizerKind::RD,
        OptimizerKind::NO,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::GD => "GD",
            OptimizerKind::FL => "FL",
            OptimizerKind::BF => "BF",
            OptimizerKind::LR => "LR",
            OptimizerKind::RD => "RD",
            OptimizerKind::NO => "NO",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| domain(format!("unknown optimizer kind '{s}'")))
    }
}

/// Hyperparameters; defaults are calibration knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// GD re-measures its incumbent every this many proposals so a stale
    /// record does not block progress once the channel has moved.
    pub refresh_interval: usize,
    /// Mean GD mutation size as a fraction of the active elements.
    pub mutation_mean_fraction: f64,
    /// Largest GD mutation as a fraction of the active elements.
    pub mutation_max_fraction: f64,
    /// LR probes per active element before solving.
    pub probe_factor: usize,
    /// Number of BF beam candidates.
    pub beam_candidates: usize,
    /// Range of the BF focal points from the surface center, meters.
    pub beam_range: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            refresh_interval: 8,
            mutation_mean_fraction: 1.0 / 16.0,
            mutation_max_fraction: 1.0 / 16.0,
            probe_factor: 4,
            beam_candidates: 64,
            beam_range: 3.0,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.refresh_interval == 0 {
            return Err(domain("refresh_interval must be at least 1"));
        }
        if !(self.mutation_mean_fraction > 0.0) || !(self.mutation_max_fraction > 0.0) {
            return Err(domain("mutation fractions must be positive"));
        }
        if self.probe_factor == 0 {
            return Err(domain("probe_factor must be at least 1"));
        }
        if !(self.beam_range > 0.0) {
            return Err(domain("beam_range must be positive"));
        }
        Ok(())
    }
}

/// What a party learns after one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feedback {
    pub score: f64,
    /// Complex channel estimate, needed by LR only.
    pub channel: Option<Complex>,
}

impl Feedback {
    pub fn score(score: f64) -> Self {
        Self { score, channel: None }
    }
}

#[derive(Clone, Debug)]
enum Scratch {
    Gd {
        reference: Option<f64>,
        proposals: usize,
        /// Elements changed by the pending trial with their previous states.
        undo: Option<Vec<(usize, usize)>>,
    },
    Fl {
        cursor: usize,
        trial_state: usize,
        scores: Vec<f64>,
        changed: bool,
        converged: bool,
    },
    Bf {
        candidates: Vec<SurfaceConfig>,
        cursor: usize,
    },
    Lr {
        probes: Vec<(SurfaceConfig, Complex)>,
        budget: usize,
        solution: Option<SurfaceConfig>,
        rank_deficient: bool,
    },
    Rd,
    No,
}

/// One party's search state.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    sense: ObjectiveSense,
    spec: MetasurfaceSpec,
    settings: OptimizerSettings,
    active: Vec<usize>,
    current: SurfaceConfig,
    best_config: SurfaceConfig,
    best_score: Option<f64>,
    evaluations: u64,
    pending: Option<SurfaceConfig>,
    scratch: Scratch,
}

impl Optimizer {
    /// Starts from a uniformly random configuration. BF starts without
    /// candidates; use [`Optimizer::beamformer`] to supply them.
    pub fn new(
        kind: OptimizerKind,
        sense: ObjectiveSense,
        spec: MetasurfaceSpec,
        settings: OptimizerSettings,
        stream: &mut RandomStream,
    ) -> Result<Self> {
        let initial = random_config(&spec, stream);
        Self::with_initial(kind, sense, spec, settings, initial)
    }

    pub fn with_initial(
        kind: OptimizerKind,
        sense: ObjectiveSense,
        spec: MetasurfaceSpec,
        settings: OptimizerSettings,
        initial: SurfaceConfig,
    ) -> Result<Self> {
        settings.validate()?;
        spec.validate(&initial)?;
        let active = spec.active_indices();
        let scratch = match kind {
            OptimizerKind::GD => Scratch::Gd {
                reference: None,
                proposals: 0,
                undo: None,
            },
            OptimizerKind::FL => Scratch::Fl {
                cursor: 0,
                trial_state: 0,
                scores: Vec::new(),
                changed: false,
                converged: active.is_empty(),
            },
            OptimizerKind::BF => Scratch::Bf {
                candidates: Vec::new(),
                cursor: 0,
            },
            OptimizerKind::LR => {
                if !spec.is_binary() {
                    return Err(Error::Unsupported("LR needs a binary alphabet".into()));
                }
                Scratch::Lr {
                    probes: Vec::new(),
                    budget: (settings.probe_factor * active.len()).max(active.len() + 1),
                    solution: None,
                    rank_deficient: false,
                }
            }
            OptimizerKind::RD => Scratch::Rd,
            OptimizerKind::NO => Scratch::No,
        };
        Ok(Self {
            kind,
            sense,
            spec,
            settings,
            active,
            best_config: initial.clone(),
            current: initial,
            best_score: None,
            evaluations: 0,
            pending: None,
            scratch,
        })
    }

    /// BF optimizer consuming the given candidates one per step.
    pub fn beamformer(
        sense: ObjectiveSense,
        spec: MetasurfaceSpec,
        settings: OptimizerSettings,
        initial: SurfaceConfig,
        candidates: Vec<SurfaceConfig>,
    ) -> Result<Self> {
        for c in &candidates {
            spec.validate(c)?;
        }
        let mut o = Self::with_initial(OptimizerKind::BF, sense, spec, settings, initial)?;
        o.scratch = Scratch::Bf { candidates, cursor: 0 };
        Ok(o)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn sense(&self) -> ObjectiveSense {
        self.sense
    }

    pub fn spec(&self) -> &MetasurfaceSpec {
        &self.spec
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best_score
    }

    pub fn best_config(&self) -> &SurfaceConfig {
        &self.best_config
    }

    /// Configuration the party holds between proposals.
    pub fn current_config(&self) -> &SurfaceConfig {
        match (&self.kind, &self.scratch) {
            (OptimizerKind::RD | OptimizerKind::BF, _) => &self.best_config,
            (_, Scratch::Lr { solution: Some(s), .. }) => s,
            (OptimizerKind::LR, _) => &self.best_config,
            _ => &self.current,
        }
    }

    /// FL only: a full sweep passed without any change.
    pub fn is_converged(&self) -> bool {
        matches!(self.scratch, Scratch::Fl { converged: true, .. })
    }

    /// LR only: the probe set was rank deficient and the best probe is held.
    pub fn fell_back(&self) -> bool {
        matches!(self.scratch, Scratch::Lr { rank_deficient: true, .. })
    }

    fn mutation_size(&self, stream: &mut RandomStream) -> usize {
        let n = self.active.len();
        let cap = ((n as f64 * self.settings.mutation_max_fraction).floor() as usize)
            .max(n.min(2))
            .min(n);
        let mean = n as f64 * self.settings.mutation_mean_fraction;
        stream.geometric(mean).clamp(1, cap.max(1))
    }

    fn other_state(&self, state: usize, stream: &mut RandomStream) -> usize {
        let s = self.spec.state_count();
        (state + 1 + stream.below(s - 1)) % s
    }

    pub fn propose(&mut self, stream: &mut RandomStream) -> SurfaceConfig {
        let proposal = self.next_proposal(stream);
        self.pending = Some(proposal.clone());
        proposal
    }

    fn next_proposal(&mut self, stream: &mut RandomStream) -> SurfaceConfig {
        match self.kind {
            OptimizerKind::NO => self.current.clone(),
            OptimizerKind::RD => random_config(&self.spec, stream),
            OptimizerKind::GD => {
                let refresh = match &self.scratch {
                    Scratch::Gd { reference, proposals, .. } => {
                        reference.is_none() || proposals % self.settings.refresh_interval == 0
                    }
                    _ => unreachable!(),
                };
                let undo = if refresh || self.active.is_empty() {
                    None
                } else {
                    let k = self.mutation_size(stream);
                    let mut picked: Vec<usize> = Vec::with_capacity(k);
                    while picked.len() < k {
                        let e = self.active[stream.below(self.active.len())];
                        if !picked.contains(&e) {
                            picked.push(e);
                        }
                    }
                    let mut undo = Vec::with_capacity(k);
                    for e in picked {
                        let old = self.current.states()[e];
                        let new = self.other_state(old, stream);
                        undo.push((e, old));
                        self.current.set(e, new);
                    }
                    Some(undo)
                };
                if let Scratch::Gd { proposals, undo: u, .. } = &mut self.scratch {
                    *proposals += 1;
                    *u = undo;
                }
                self.current.clone()
            }
            OptimizerKind::FL => {
                let (cursor, trial_state) = match &self.scratch {
                    Scratch::Fl { cursor, trial_state, .. } => (*cursor, *trial_state),
                    _ => unreachable!(),
                };
                let mut c = self.current.clone();
                if let Some(&e) = self.active.get(cursor) {
                    c.set(e, trial_state);
                }
                c
            }
            OptimizerKind::BF => match &self.scratch {
                Scratch::Bf { candidates, cursor } if *cursor < candidates.len() => candidates[*cursor].clone(),
                _ => self.best_config.clone(),
            },
            OptimizerKind::LR => match &self.scratch {
                Scratch::Lr { solution: Some(s), .. } => s.clone(),
                Scratch::Lr { probes, budget, .. } if probes.len() < *budget => random_config(&self.spec, stream),
                _ => self.best_config.clone(),
            },
        }
    }

    pub fn feedback(&mut self, applied: &SurfaceConfig, fb: Feedback) -> Result<()> {
        match &self.pending {
            Some(p) if p == applied => {}
            Some(_) => return Err(contract("feedback for a configuration that was not the last proposal")),
            None => return Err(contract("feedback without a pending proposal")),
        }
        self.pending = None;
        self.evaluations += 1;
        let score = fb.score;
        if self.best_score.is_none_or(|b| self.sense.improves(score, b)) {
            self.best_score = Some(score);
            self.best_config = applied.clone();
        }
        let sense = self.sense;
        match &mut self.scratch {
            Scratch::Gd { reference, undo, .. } => match undo.take() {
                None => *reference = Some(score),
                Some(changes) => {
                    if sense.improves(score, reference.unwrap_or(f64::NAN)) {
                        *reference = Some(score);
                    } else {
                        for (e, old) in changes {
                            self.current.set(e, old);
                        }
                    }
                }
            },
            Scratch::Fl {
                cursor,
                trial_state,
                scores,
                changed,
                converged,
            } => {
                if self.active.is_empty() {
                    return Ok(());
                }
                scores.push(score);
                *trial_state += 1;
                if *trial_state == self.spec.state_count() {
                    let e = self.active[*cursor];
                    let orig = self.current.states()[e];
                    let mut pick = orig;
                    for (s, &sc) in scores.iter().enumerate() {
                        if sense.improves(sc, scores[pick]) {
                            pick = s;
                        }
                    }
                    if pick != orig {
                        self.current.set(e, pick);
                        *changed = true;
                    }
                    scores.clear();
                    *trial_state = 0;
                    *cursor += 1;
                    if *cursor == self.active.len() {
                        *cursor = 0;
                        if !*changed {
                            *converged = true;
                        }
                        *changed = false;
                    }
                }
            }
            Scratch::Bf { candidates, cursor } => {
                if *cursor < candidates.len() {
                    *cursor += 1;
                }
            }
            Scratch::Lr {
                probes,
                budget,
                solution,
                rank_deficient,
            } => {
                if solution.is_none() {
                    let h = fb
                        .channel
                        .ok_or_else(|| contract("LR needs complex channel feedback"))?;
                    probes.push((applied.clone(), h));
                    if probes.len() >= *budget {
                        match regression_solve(probes, &self.spec, sense) {
                            Ok((cfg, _)) => *solution = Some(cfg),
                            Err(Error::SearchFailed(msg)) => {
                                log::debug!("LR fallback: {msg}");
                                *rank_deficient = true;
                                *solution = Some(self.best_config.clone());
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            Scratch::Rd | Scratch::No => {}
        }
        Ok(())
    }
}

/// Drives one optimizer for `steps` proposals against a fixed objective.
pub fn optimize<F>(opt: &mut Optimizer, steps: usize, stream: &mut RandomStream, mut objective: F) -> Result<()>
where
    F: FnMut(&SurfaceConfig) -> Result<Feedback>,
{
    for _ in 0..steps {
        let cfg = opt.propose(stream);
        let fb = objective(&cfg)?;
        opt.feedback(&cfg, fb)?;
    }
    Ok(())
}

/// Fitted spin model `H ≈ β_0 + Σ β_l s_l` over the active elements.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionFit {
    pub beta0: Complex,
    /// One coefficient per active element, in element order.
    pub beta: Vec<Complex>,
    pub active: Vec<usize>,
}

impl RegressionFit {
    pub fn predict(&self, spins: &[f64]) -> Complex {
        self.beta0 + self.beta.iter().zip(spins).map(|(b, s)| b * s).sum::<Complex>()
    }
}

fn spin(state: usize) -> f64 {
    if state == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Least-squares spin fit, then the best configuration of the fitted model.
///
/// Maximization is exact: the optimum's spins equal `sign Re(β_l·e^{−jθ})`
/// for `θ = arg H*`, so scanning θ across all sign-change breakpoints
/// enumerates every candidate. Minimization anti-aligns against `β_0` and
/// refines by single-spin descent.
pub fn regression_solve(
    probes: &[(SurfaceConfig, Complex)],
    spec: &MetasurfaceSpec,
    sense: ObjectiveSense,
) -> Result<(SurfaceConfig, RegressionFit)> {
    if !spec.is_binary() {
        return Err(Error::Unsupported("regression needs a binary alphabet".into()));
    }
    let active = spec.active_indices();
    let cols = active.len() + 1;
    if probes.len() < cols {
        return Err(Error::SearchFailed(format!("{} probes for {cols} unknowns", probes.len())));
    }
    let x = DMatrix::from_fn(probes.len(), cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            spin(probes[r].0.states()[active[c - 1]])
        }
    });
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-9 * smax) {
        return Err(Error::SearchFailed("rank-deficient probe set".into()));
    }
    let yr = DVector::from_iterator(probes.len(), probes.iter().map(|p| p.1.re));
    let yi = DVector::from_iterator(probes.len(), probes.iter().map(|p| p.1.im));
    let br = svd.solve(&yr, 1e-12).map_err(|e| Error::SearchFailed(e.to_string()))?;
    let bi = svd.solve(&yi, 1e-12).map_err(|e| Error::SearchFailed(e.to_string()))?;
    let fit = RegressionFit {
        beta0: Complex::new(br[0], bi[0]),
        beta: (1..cols).map(|c| Complex::new(br[c], bi[c])).collect(),
        active: active.clone(),
    };
    let spins = match sense {
        ObjectiveSense::Maximize => maximize_spins(&fit),
        ObjectiveSense::Minimize => minimize_spins(&fit),
    };
    let mut states = spec.frozen_states().to_vec();
    for (k, &e) in active.iter().enumerate() {
        states[e] = if spins[k] > 0.0 { 0 } else { 1 };
    }
    Ok((SurfaceConfig::from_raw(states), fit))
}

fn aligned_spins(beta: &[Complex], theta: f64) -> Vec<f64> {
    let r = Complex::from_polar(1.0, -theta);
    beta.iter().map(|b| if (b * r).re >= 0.0 { 1.0 } else { -1.0 }).collect()
}

fn maximize_spins(fit: &RegressionFit) -> Vec<f64> {
    let mut cuts: Vec<f64> = fit
        .beta
        .iter()
        .flat_map(|b| [b.arg() + PI / 2.0, b.arg() - PI / 2.0])
        .map(|t| t.rem_euclid(2.0 * PI))
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut best = aligned_spins(&fit.beta, fit.beta0.arg());
    let mut best_val = fit.predict(&best).norm_sqr();
    for i in 0..cuts.len() {
        let next = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + 2.0 * PI };
        let s = aligned_spins(&fit.beta, (cuts[i] + next) / 2.0);
        let v = fit.predict(&s).norm_sqr();
        if v > best_val {
            best_val = v;
            best = s;
        }
    }
    best
}

fn minimize_spins(fit: &RegressionFit) -> Vec<f64> {
    let mut s: Vec<f64> = aligned_spins(&fit.beta, fit.beta0.arg()).iter().map(|x| -x).collect();
    let mut h = fit.predict(&s);
    loop {
        let mut improved = false;
        for l in 0..s.len() {
            let flipped = h - fit.beta[l] * (2.0 * s[l]);
            if flipped.norm_sqr() < h.norm_sqr() {
                s[l] = -s[l];
                h = flipped;
                improved = true;
            }
        }
        if !improved {
            return s;
        }
    }
}

/// Configuration focusing the surface from `known` onto `target`, with a
/// global phase offset applied before quantization.
pub fn focus_config(
    geometry: &Geometry,
    surface: SurfaceId,
    spec: &MetasurfaceSpec,
    known: Vec3,
    target: Vec3,
    offset: f64,
) -> Result<SurfaceConfig> {
    let placement = geometry
        .surface(surface)
        .ok_or_else(|| contract(format!("geometry has no surface {surface:?}")))?;
    if placement.element_count() != spec.element_count() {
        return Err(contract("surface placement and spec disagree on element count"));
    }
    let k = 2.0 * PI / geometry.wavelength();
    let states = placement
        .element_positions()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if spec.active_mask()[i] {
                // Cancels the e^{−jk(d1+d2)} propagation phase of the two hops.
                spec.nearest_state(k * (p.distance(known) + p.distance(target)) + offset)
            } else {
                spec.frozen_states()[i]
            }
        })
        .collect();
    Ok(SurfaceConfig::from_raw(states))
}

/// Beams toward random focal points in front of the surface, derived from
/// one known antenna position.
pub fn beamform_candidates(
    geometry: &Geometry,
    surface: SurfaceId,
    spec: &MetasurfaceSpec,
    known: Vec3,
    n_directions: usize,
    range: f64,
    stream: &mut RandomStream,
) -> Result<Vec<SurfaceConfig>> {
    let placement = geometry
        .surface(surface)
        .ok_or_else(|| contract(format!("geometry has no surface {surface:?}")))?;
    let mut out = Vec::with_capacity(n_directions);
    for _ in 0..n_directions {
        let dir = loop {
            let v = Vec3::new(stream.standard_normal(), stream.standard_normal(), stream.standard_normal());
            if v.norm() > 1e-9 {
                break v.normalized();
            }
        };
        let dir = if dir.dot(placement.normal) < 0.0 { dir * -1.0 } else { dir };
        let target = placement.center + dir * range;
        let offset = 2.0 * PI * stream.uniform();
        out.push(focus_config(geometry, surface, spec, known, target, offset)?);
    }
    Ok(out)
}
