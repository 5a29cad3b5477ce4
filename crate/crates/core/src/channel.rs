//! Effective channel composition, noisy observation and the ensemble
//! superposition estimator.

use serde::{Deserialize, Serialize};

use crate::environment::{
    synthesize_coupling, synthesize_direct_channel, synthesize_subchannels, DirectChannel, Endpoint, Geometry,
    PropagationParams, SubchannelSet, SurfaceId,
};
use crate::error::{contract, domain, Error, Result};
use crate::mathcore::{cn1, Complex, RandomStream};
use crate::metasurface::{random_config, MetasurfaceSpec, SurfaceConfig};

/// `Σ_l h_l·c_l·g_l`.
pub fn surface_channel(sub: &SubchannelSet, coeffs: &[Complex]) -> Result<Complex> {
    if sub.len() != coeffs.len() {
        return Err(contract(format!(
            "{} reflection coefficients for {} sub-channels",
            coeffs.len(),
            sub.len()
        )));
    }
    Ok(sub
        .h
        .iter()
        .zip(&sub.g)
        .zip(coeffs)
        .map(|((h, g), c)| h * c * g)
        .sum())
}

/// Everything needed to evaluate the effective channel for any pair of
/// configurations.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ChannelDump", into = "ChannelDump")]
pub struct ChannelModel {
    direct: DirectChannel,
    sub_a: SubchannelSet,
    sub_b: SubchannelSet,
    spec_a: MetasurfaceSpec,
    spec_b: MetasurfaceSpec,
    coupling: Option<Vec<Vec<Complex>>>,
    noise_variance: f64,
    /// Row-major `h^A_k·t_kl·g^B_l + g^A_k·t_kl·h^B_l`, both bounce orders
    /// folded into one bilinear form.
    coupling_kernel: Option<Vec<Complex>>,
    combined_a: Vec<Complex>,
    combined_b: Vec<Complex>,
    phasors_a: Vec<Complex>,
    phasors_b: Vec<Complex>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ChannelDump {
    direct: DirectChannel,
    sub_a: SubchannelSet,
    sub_b: SubchannelSet,
    spec_a: MetasurfaceSpec,
    spec_b: MetasurfaceSpec,
    coupling: Option<Vec<Vec<Complex>>>,
    noise_variance: f64,
}

impl TryFrom<ChannelDump> for ChannelModel {
    type Error = Error;
    fn try_from(d: ChannelDump) -> Result<Self> {
        let mut m = ChannelModel::new(d.direct, d.sub_a, d.spec_a, d.sub_b, d.spec_b)?;
        if let Some(t) = d.coupling {
            m = m.with_coupling(t)?;
        }
        m.with_noise(d.noise_variance)
    }
}

impl From<ChannelModel> for ChannelDump {
    fn from(m: ChannelModel) -> Self {
        Self {
            direct: m.direct,
            sub_a: m.sub_a,
            sub_b: m.sub_b,
            spec_a: m.spec_a,
            spec_b: m.spec_b,
            coupling: m.coupling,
            noise_variance: m.noise_variance,
        }
    }
}

/// A single noisy channel estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelObservation {
    pub value: Complex,
    pub step: u64,
}

fn phasor_table(spec: &MetasurfaceSpec) -> Vec<Complex> {
    (0..spec.state_count()).map(|s| spec.coefficient(s)).collect()
}

impl ChannelModel {
    pub fn new(
        direct: DirectChannel,
        sub_a: SubchannelSet,
        spec_a: MetasurfaceSpec,
        sub_b: SubchannelSet,
        spec_b: MetasurfaceSpec,
    ) -> Result<Self> {
        for (sub, spec, name) in [(&sub_a, &spec_a, "A"), (&sub_b, &spec_b, "B")] {
            if sub.len() != spec.element_count() {
                return Err(contract(format!(
                    "surface {name}: {} sub-channels for {} elements",
                    sub.len(),
                    spec.element_count()
                )));
            }
            if !sub.h.iter().chain(&sub.g).all(|c| c.re.is_finite() && c.im.is_finite()) {
                return Err(domain(format!("surface {name}: non-finite sub-channel")));
            }
        }
        if !(direct.value.re.is_finite() && direct.value.im.is_finite()) {
            return Err(domain("non-finite direct channel"));
        }
        Ok(Self {
            combined_a: sub_a.combined(),
            combined_b: sub_b.combined(),
            phasors_a: phasor_table(&spec_a),
            phasors_b: phasor_table(&spec_b),
            direct,
            sub_a,
            sub_b,
            spec_a,
            spec_b,
            coupling: None,
            coupling_kernel: None,
            noise_variance: 0.0,
        })
    }

    /// Builds a model from geometry for the link `tx → rx`.
    pub fn synthesize(
        geometry: &Geometry,
        params: &PropagationParams,
        spec_a: MetasurfaceSpec,
        spec_b: MetasurfaceSpec,
        tx: Endpoint,
        rx: Endpoint,
        stream: &mut RandomStream,
    ) -> Result<Self> {
        params.validate()?;
        let direct = synthesize_direct_channel(geometry, params, tx, rx, stream)?;
        let sub_a = synthesize_subchannels(geometry, params, SurfaceId::A, tx, rx, stream)?;
        let sub_b = synthesize_subchannels(geometry, params, SurfaceId::B, tx, rx, stream)?;
        let mut m = Self::new(direct, sub_a, spec_a, sub_b, spec_b)?;
        if params.coupling_enabled {
            m = m.with_coupling(synthesize_coupling(geometry, params)?)?;
        }
        m.with_noise(params.measurement_noise_variance)
    }

    pub fn with_coupling(mut self, t: Vec<Vec<Complex>>) -> Result<Self> {
        if t.len() != self.sub_a.len() || t.iter().any(|r| r.len() != self.sub_b.len()) {
            return Err(contract(format!(
                "coupling matrix must be {}×{}",
                self.sub_a.len(),
                self.sub_b.len()
            )));
        }
        self.coupling = Some(t);
        self.rebuild_kernel();
        Ok(self)
    }

    fn rebuild_kernel(&mut self) {
        self.coupling_kernel = self.coupling.as_ref().map(|t| {
            let (a, b) = (&self.sub_a, &self.sub_b);
            t.iter()
                .enumerate()
                .flat_map(|(k, row)| row.iter().enumerate().map(move |(l, tkl)| tkl * (a.h[k] * b.g[l] + a.g[k] * b.h[l])))
                .collect()
        });
    }

    pub fn without_coupling(mut self) -> Self {
        self.coupling = None;
        self.coupling_kernel = None;
        self
    }

    pub fn with_noise(mut self, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(domain("noise variance must be non-negative"));
        }
        self.noise_variance = variance;
        Ok(self)
    }

    /// Replaces surface B's sub-channels with a copy of A's, producing two
    /// equivalent surfaces.
    pub fn equalized(&self) -> Result<Self> {
        let mut m = Self::new(
            self.direct,
            self.sub_a.clone(),
            self.spec_a.clone(),
            self.sub_a.clone(),
            self.spec_a.clone(),
        )?;
        m.noise_variance = self.noise_variance;
        Ok(m)
    }

    /// Same channel with different surface specs (e.g. masked elements).
    pub fn with_specs(&self, spec_a: MetasurfaceSpec, spec_b: MetasurfaceSpec) -> Result<Self> {
        let mut m = Self::new(self.direct, self.sub_a.clone(), spec_a, self.sub_b.clone(), spec_b)?;
        m.coupling = self.coupling.clone();
        m.coupling_kernel = self.coupling_kernel.clone();
        m.noise_variance = self.noise_variance;
        Ok(m)
    }

    /// Copy with the direct path and a subset of elements scaled by `1 + m`.
    pub fn perturbed(&self, m: Complex, elements_a: &[usize], elements_b: &[usize]) -> Self {
        let mut out = self.clone();
        let k = Complex::new(1.0, 0.0) + m;
        out.direct.value *= k;
        for &i in elements_a {
            out.sub_a.h[i] *= k;
            out.combined_a[i] *= k;
        }
        for &i in elements_b {
            out.sub_b.h[i] *= k;
            out.combined_b[i] *= k;
        }
        out.rebuild_kernel();
        out
    }

    pub fn direct(&self) -> Complex {
        self.direct.value
    }

    pub fn subchannels(&self, id: SurfaceId) -> &SubchannelSet {
        match id {
            SurfaceId::A => &self.sub_a,
            SurfaceId::B => &self.sub_b,
        }
    }

    pub fn spec(&self, id: SurfaceId) -> &MetasurfaceSpec {
        match id {
            SurfaceId::A => &self.spec_a,
            SurfaceId::B => &self.spec_b,
        }
    }

    pub fn combined(&self, id: SurfaceId) -> &[Complex] {
        match id {
            SurfaceId::A => &self.combined_a,
            SurfaceId::B => &self.combined_b,
        }
    }

    pub fn coupling(&self) -> Option<&Vec<Vec<Complex>>> {
        self.coupling.as_ref()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    fn check(&self, id: SurfaceId, cfg: &SurfaceConfig) -> Result<()> {
        let want = self.spec(id).element_count();
        if cfg.len() != want {
            return Err(contract(format!(
                "surface {id:?}: config of length {} for {want} elements",
                cfg.len()
            )));
        }
        Ok(())
    }

    /// Surface contribution `H_M` for one configuration.
    pub fn surface_value(&self, id: SurfaceId, cfg: &SurfaceConfig) -> Complex {
        let (a, ph) = match id {
            SurfaceId::A => (&self.combined_a, &self.phasors_a),
            SurfaceId::B => (&self.combined_b, &self.phasors_b),
        };
        a.iter().zip(cfg.states()).map(|(a, &s)| a * ph[s]).sum()
    }

    fn coefficient(&self, id: SurfaceId, state: usize) -> Complex {
        match id {
            SurfaceId::A => self.phasors_a[state],
            SurfaceId::B => self.phasors_b[state],
        }
    }

    /// Double-bounce term through both surfaces, in both orders.
    pub fn coupling_channel(&self, cfg_a: &SurfaceConfig, cfg_b: &SurfaceConfig) -> Result<Complex> {
        let kernel = self
            .coupling_kernel
            .as_ref()
            .ok_or_else(|| Error::Unsupported("channel has no coupling matrix".into()))?;
        self.check(SurfaceId::A, cfg_a)?;
        self.check(SurfaceId::B, cfg_b)?;
        Ok(self.coupling_unchecked(kernel, cfg_a, cfg_b))
    }

    fn coupling_unchecked(&self, kernel: &[Complex], cfg_a: &SurfaceConfig, cfg_b: &SurfaceConfig) -> Complex {
        let lb = self.sub_b.len();
        if lb == 0 {
            return Complex::new(0.0, 0.0);
        }
        let cb: Vec<Complex> = cfg_b.states().iter().map(|&s| self.coefficient(SurfaceId::B, s)).collect();
        kernel
            .chunks(lb)
            .zip(cfg_a.states())
            .map(|(row, &sa)| {
                let inner: Complex = row.iter().zip(&cb).map(|(m, c)| m * c).sum();
                self.coefficient(SurfaceId::A, sa) * inner
            })
            .sum()
    }

    /// `H_eff = H_d + H_A + H_B (+ H_AB)`.
    pub fn effective_channel(&self, cfg_a: &SurfaceConfig, cfg_b: &SurfaceConfig) -> Result<Complex> {
        self.check(SurfaceId::A, cfg_a)?;
        self.check(SurfaceId::B, cfg_b)?;
        Ok(self.evaluate(cfg_a, cfg_b))
    }

    /// Unchecked variant for hot loops; lengths are asserted in debug builds.
    pub(crate) fn evaluate(&self, cfg_a: &SurfaceConfig, cfg_b: &SurfaceConfig) -> Complex {
        debug_assert_eq!(cfg_a.len(), self.sub_a.len());
        debug_assert_eq!(cfg_b.len(), self.sub_b.len());
        let mut h = self.direct.value + self.surface_value(SurfaceId::A, cfg_a) + self.surface_value(SurfaceId::B, cfg_b);
        if let Some(kernel) = &self.coupling_kernel {
            h += self.coupling_unchecked(kernel, cfg_a, cfg_b);
        }
        h
    }

    /// Effective channel plus `CN(0, noise_variance)`.
    pub fn observe(
        &self,
        cfg_a: &SurfaceConfig,
        cfg_b: &SurfaceConfig,
        noise_variance: f64,
        step: u64,
        stream: &mut RandomStream,
    ) -> Result<ChannelObservation> {
        if !(noise_variance >= 0.0) {
            return Err(domain("noise variance must be non-negative"));
        }
        let mut value = self.effective_channel(cfg_a, cfg_b)?;
        if noise_variance > 0.0 {
            value += cn1(stream) * noise_variance.sqrt();
        }
        Ok(ChannelObservation { value, step })
    }

    /// Observation with the model's own noise level.
    pub(crate) fn measure(&self, cfg_a: &SurfaceConfig, cfg_b: &SurfaceConfig, stream: &mut RandomStream) -> Complex {
        let mut value = self.evaluate(cfg_a, cfg_b);
        if self.noise_variance > 0.0 {
            value += cn1(stream) * self.noise_variance.sqrt();
        }
        value
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Contract(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Contract(e.to_string()))
    }
}

/// Result of the ensemble superposition test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuperpositionEstimate {
    pub estimate: Complex,
    pub measured: Complex,
    pub error_db: f64,
}

/// Predicts `H_eff(cfg_a, cfg_b)` from single-surface ensemble averages,
/// `Ĥ_A + Ĥ_B − Ĥ_d`, and compares with the measured value.
pub fn superposition_estimate(
    model: &ChannelModel,
    cfg_a: &SurfaceConfig,
    cfg_b: &SurfaceConfig,
    ensemble_size: usize,
    stream: &mut RandomStream,
) -> Result<SuperpositionEstimate> {
    if ensemble_size == 0 {
        return Err(domain("ensemble size must be at least 1"));
    }
    model.check(SurfaceId::A, cfg_a)?;
    model.check(SurfaceId::B, cfg_b)?;
    let n = ensemble_size as f64;
    let (mut ha, mut hb, mut hd) = (Complex::default(), Complex::default(), Complex::default());
    for _ in 0..ensemble_size {
        let ra = random_config(&model.spec_a, stream);
        let rb = random_config(&model.spec_b, stream);
        ha += model.measure(cfg_a, &rb, stream);
        hb += model.measure(&ra, cfg_b, stream);
        let ra2 = random_config(&model.spec_a, stream);
        let rb2 = random_config(&model.spec_b, stream);
        hd += model.measure(&ra2, &rb2, stream);
    }
    let estimate = (ha + hb - hd) / n;
    let measured = model.measure(cfg_a, cfg_b, stream);
    let error_db = 20.0 * (measured.norm() / estimate.norm()).log10();
    Ok(SuperpositionEstimate {
        estimate,
        measured,
        error_db,
    })
}
