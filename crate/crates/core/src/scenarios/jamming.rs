//! Jamming battle: Eve's surface B strengthens the jamming channel to Bob,
//! Bob's surface A weakens it again.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::environment::{synthesize_direct_channel, Endpoint, DEFAULT_FREQUENCY_HZ, Geometry, PropagationParams, SurfaceId, SurfacePlacement, Vec3};
use crate::error::{domain, Result};
use crate::mathcore::{cn1, db, undb, Complex, RandomStream};
use crate::metasurface::{random_config, MetasurfaceSpec, SurfaceConfig};
use crate::optimizers::{optimize, Feedback, ObjectiveSense, Optimizer, OptimizerKind, OptimizerSettings};

/// `Y = X·H_AB + J·H_EB + N` with Eve's jamming power swept relative to
/// Alice's signal power.
#[derive(Clone, Debug)]
pub struct JammingLink {
    pub h_ab: Complex,
    /// Eve → Bob, with surface A beside Bob and surface B beside Eve.
    pub jam_model: ChannelModel,
    pub signal_power: f64,
    pub noise_power: f64,
    pub sjnr_threshold_db: f64,
    /// Rician K of the per-packet fading jitter.
    pub jitter_k: f64,
    /// Jitter scatter power added to `H_EB`, tied to its random-configuration
    /// mean power so that cancellation cannot beat the fading floor.
    pub jam_scatter_power: f64,
}

impl JammingLink {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_power > 0.0 && self.noise_power > 0.0) {
            return Err(domain("signal and noise power must be positive"));
        }
        if !(self.jitter_k >= 0.0) {
            return Err(domain("jitter K must be non-negative"));
        }
        if !(self.jam_scatter_power >= 0.0) {
            return Err(domain("jitter scatter power must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JammingParams {
    /// Clean-link SNR.
    pub snr_db: f64,
    /// Margin of the clean link above the reception threshold.
    pub threshold_margin_db: f64,
    pub jitter_k: f64,
}

impl Default for JammingParams {
    fn default() -> Self {
        Self {
            snr_db: 30.0,
            threshold_margin_db: 16.0,
            jitter_k: 10.0,
        }
    }
}

/// Alice and Bob 3 m apart, Eve 3 m off Alice; each surface 0.3 m beside its
/// owner, turned to face both the owner and the far end of the jamming path.
pub fn jamming_geometry() -> Geometry {
    let alice = Vec3::new(0.0, 0.0, 0.0);
    let bob = Vec3::new(3.0, 0.0, 0.0);
    let eve = Vec3::new(0.0, 3.0, 0.0);
    let ca = bob + Vec3::new(0.0, -0.3, 0.0);
    let cb = eve + Vec3::new(-0.3, 0.0, 0.0);
    Geometry {
        alice,
        bob,
        eve: Some(eve),
        surface_a: Some(SurfacePlacement::facing_both(ca, bob, eve)),
        surface_b: Some(SurfacePlacement::facing_both(cb, eve, bob)),
        frequency_hz: DEFAULT_FREQUENCY_HZ,
    }
}

/// Builds the link with a binary 256-element surface on each side.
pub fn jamming_link(
    geometry: &Geometry,
    propagation: &PropagationParams,
    params: &JammingParams,
    stream: &mut RandomStream,
) -> Result<JammingLink> {
    let h_ab = synthesize_direct_channel(geometry, propagation, Endpoint::Alice, Endpoint::Bob, &mut stream.fork(1))?.value;
    let la = geometry.surface_a.as_ref().map_or(0, |s| s.element_count());
    let lb = geometry.surface_b.as_ref().map_or(0, |s| s.element_count());
    let jam_model = ChannelModel::synthesize(
        geometry,
        propagation,
        MetasurfaceSpec::binary(la),
        MetasurfaceSpec::binary(lb),
        Endpoint::Eve,
        Endpoint::Bob,
        &mut stream.fork(2),
    )?;
    let signal_power = 1.0;
    let noise_power = signal_power * h_ab.norm_sqr() / undb(params.snr_db);
    // random-configuration mean of |H_EB|²
    let mean_jam = jam_model.direct().norm_sqr()
        + jam_model.combined(SurfaceId::A).iter().map(|c| c.norm_sqr()).sum::<f64>()
        + jam_model.combined(SurfaceId::B).iter().map(|c| c.norm_sqr()).sum::<f64>();
    Ok(JammingLink {
        h_ab,
        jam_model,
        signal_power,
        noise_power,
        sjnr_threshold_db: params.snr_db - params.threshold_margin_db,
        jitter_k: params.jitter_k,
        jam_scatter_power: mean_jam / (params.jitter_k + 1.0),
    })
}

/// Reception rate per jamming gain plus the smallest gain that blocks every
/// packet.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReceptionCurve {
    pub gains_db: Vec<f64>,
    pub reception: Vec<f64>,
    pub zero_reception_gain_db: f64,
}

/// Packet `i` survives iff its SJNR clears the threshold. The same fading
/// draws are used for every gain, so the curve is monotone by construction.
pub fn jamming_sweep(
    link: &JammingLink,
    cfg_a: &SurfaceConfig,
    cfg_b: &SurfaceConfig,
    gains_db: &[f64],
    packets: usize,
    stream: &mut RandomStream,
) -> Result<ReceptionCurve> {
    link.validate()?;
    if packets == 0 {
        return Err(domain("need at least one packet per point"));
    }
    let h_eb = link.jam_model.effective_channel(cfg_a, cfg_b)?;
    let los = (link.jitter_k / (link.jitter_k + 1.0)).sqrt();
    let scatter = (1.0 / (link.jitter_k + 1.0)).sqrt();
    let thr = undb(link.sjnr_threshold_db);
    // largest jamming gain packet i survives
    let critical: Vec<f64> = (0..packets)
        .map(|_| {
            let s = link.h_ab * los + cn1(stream) * (link.h_ab.norm() * scatter);
            let j = h_eb * los + cn1(stream) * link.jam_scatter_power.sqrt();
            let room = link.signal_power * s.norm_sqr() / thr - link.noise_power;
            if room <= 0.0 {
                0.0
            } else {
                room / (link.signal_power * j.norm_sqr())
            }
        })
        .collect();
    let reception = gains_db
        .iter()
        .map(|&g| {
            let g = undb(g);
            critical.iter().filter(|&&c| g < c).count() as f64 / packets as f64
        })
        .collect();
    let worst = critical.iter().cloned().fold(0.0, f64::max);
    Ok(ReceptionCurve {
        gains_db: gains_db.to_vec(),
        reception,
        zero_reception_gain_db: if worst > 0.0 { db(worst)? } else { f64::NEG_INFINITY },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JammingReport {
    pub baseline: ReceptionCurve,
    pub attack: ReceptionCurve,
    pub defense: ReceptionCurve,
    pub final_a: SurfaceConfig,
    pub final_b: SurfaceConfig,
}

impl JammingReport {
    /// Extra jamming gain Eve needs after Bob's defense, relative to the attack.
    pub fn defense_margin_db(&self) -> f64 {
        self.defense.zero_reception_gain_db - self.attack.zero_reception_gain_db
    }
}

/// Random baseline, then Eve's GD maximizes `|H_EB|²` against a random A,
/// then Bob's GD minimizes it against Eve's result. Both see power only.
pub fn jamming_battle(
    link: &JammingLink,
    settings: &OptimizerSettings,
    steps: usize,
    gains_db: &[f64],
    packets: usize,
    stream: &RandomStream,
) -> Result<JammingReport> {
    let model = &link.jam_model;
    let start_a = random_config(model.spec(SurfaceId::A), &mut stream.fork(1));
    let start_b = random_config(model.spec(SurfaceId::B), &mut stream.fork(2));
    let mut noise = stream.fork(3);
    let mut eve = Optimizer::with_initial(
        OptimizerKind::GD,
        ObjectiveSense::Maximize,
        model.spec(SurfaceId::B).clone(),
        settings.clone(),
        start_b.clone(),
    )?;
    optimize(&mut eve, steps, &mut stream.fork(4), |cfg| {
        Ok(Feedback::score(model.measure(&start_a, cfg, &mut noise).norm_sqr()))
    })?;
    let final_b = eve.current_config().clone();
    let mut bob = Optimizer::with_initial(
        OptimizerKind::GD,
        ObjectiveSense::Minimize,
        model.spec(SurfaceId::A).clone(),
        settings.clone(),
        start_a.clone(),
    )?;
    optimize(&mut bob, steps, &mut stream.fork(5), |cfg| {
        Ok(Feedback::score(model.measure(cfg, &final_b, &mut noise).norm_sqr()))
    })?;
    let final_a = bob.current_config().clone();
    // common random numbers across the three phases
    let sweep = |a: &SurfaceConfig, b: &SurfaceConfig| jamming_sweep(link, a, b, gains_db, packets, &mut stream.fork(6));
    Ok(JammingReport {
        baseline: sweep(&start_a, &start_b)?,
        attack: sweep(&start_a, &final_b)?,
        defense: sweep(&final_a, &final_b)?,
        final_a,
        final_b,
    })
}
