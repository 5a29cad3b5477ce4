//! Programmable surfaces: element count, phase alphabet, active-element mask.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{contract, domain, Error, Result};
use crate::mathcore::{Complex, RandomStream};

/// Number of states used to emulate continuous phase shifting.
pub const CONTINUOUS_STATES: usize = 256;

/// Static description of one surface.
///
/// Inactive elements are not removed: they stay in place, frozen at
/// `frozen_states`, exactly like switching off unit cells on hardware.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetasurfaceSpec {
    phase_states: Vec<f64>,
    active_mask: Vec<bool>,
    frozen_states: Vec<usize>,
}

impl MetasurfaceSpec {
    pub fn new(phase_states: Vec<f64>, active_mask: Vec<bool>, frozen_states: Vec<usize>) -> Result<Self> {
        if phase_states.len() < 2 {
            return Err(domain("a surface needs at least two phase states"));
        }
        if active_mask.len() != frozen_states.len() {
            return Err(contract(format!(
                "mask length {} != frozen state length {}",
                active_mask.len(),
                frozen_states.len()
            )));
        }
        if let Some(bad) = frozen_states.iter().find(|&&s| s >= phase_states.len()) {
            return Err(domain(format!("frozen state {bad} outside alphabet")));
        }
        Ok(Self {
            phase_states,
            active_mask,
            frozen_states,
        })
    }

    /// 1-bit surface with states {0, π}, all elements active.
    pub fn binary(element_count: usize) -> Self {
        Self::uniform_alphabet(element_count, 2)
    }

    /// `states` equally spaced phases starting at 0, all elements active.
    pub fn uniform_alphabet(element_count: usize, states: usize) -> Self {
        assert!(states >= 2, "alphabet needs two states");
        let phase_states = (0..states).map(|k| 2.0 * PI * k as f64 / states as f64).collect();
        Self {
            phase_states,
            active_mask: vec![true; element_count],
            frozen_states: vec![0; element_count],
        }
    }

    /// Idealized continuous phase control, discretized finely.
    pub fn continuous(element_count: usize) -> Self {
        Self::uniform_alphabet(element_count, CONTINUOUS_STATES)
    }

    pub fn element_count(&self) -> usize {
        self.active_mask.len()
    }

    pub fn state_count(&self) -> usize {
        self.phase_states.len()
    }

    pub fn is_binary(&self) -> bool {
        self.phase_states.len() == 2
    }

    pub fn phase_states(&self) -> &[f64] {
        &self.phase_states
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active_mask
    }

    pub fn frozen_states(&self) -> &[usize] {
        &self.frozen_states
    }

    pub fn active_count(&self) -> usize {
        self.active_mask.iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.element_count()).filter(|&i| self.active_mask[i]).collect()
    }

    /// `log2` of the free configuration space, `active · log2(states)`.
    pub fn config_space_bits(&self) -> f64 {
        self.active_count() as f64 * (self.state_count() as f64).log2()
    }

    /// Reflection coefficient of a phase state.
    pub fn coefficient(&self, state: usize) -> Complex {
        Complex::from_polar(1.0, self.phase_states[state])
    }

    /// Nearest alphabet state to an arbitrary phase.
    pub fn nearest_state(&self, phase: f64) -> usize {
        let target = Complex::from_polar(1.0, phase);
        (0..self.state_count())
            .max_by(|&a, &b| {
                let ca = (self.coefficient(a) * target.conj()).re;
                let cb = (self.coefficient(b) * target.conj()).re;
                ca.total_cmp(&cb)
            })
            .unwrap_or(0)
    }

    /// Configuration with every active element at `state`.
    pub fn uniform_config(&self, state: usize) -> SurfaceConfig {
        let indices = (0..self.element_count())
            .map(|i| if self.active_mask[i] { state } else { self.frozen_states[i] })
            .collect();
        SurfaceConfig { state_indices: indices }
    }

    pub fn validate(&self, config: &SurfaceConfig) -> Result<()> {
        if config.len() != self.element_count() {
            return Err(contract(format!(
                "config has {} entries, surface has {} elements",
                config.len(),
                self.element_count()
            )));
        }
        for (i, &s) in config.state_indices.iter().enumerate() {
            if s >= self.state_count() {
                return Err(domain(format!("element {i}: state {s} outside alphabet")));
            }
            if !self.active_mask[i] && s != self.frozen_states[i] {
                return Err(contract(format!("element {i} is inactive but not at its frozen state")));
            }
        }
        Ok(())
    }
}

/// Per-element phase-state indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SurfaceConfig {
    state_indices: Vec<usize>,
}

impl SurfaceConfig {
    pub fn new(spec: &MetasurfaceSpec, state_indices: Vec<usize>) -> Result<Self> {
        let cfg = Self { state_indices };
        spec.validate(&cfg)?;
        Ok(cfg)
    }

    /// Builds a config without validation; the caller guarantees consistency.
    pub(crate) fn from_raw(state_indices: Vec<usize>) -> Self {
        Self { state_indices }
    }

    /// Zero-length configuration for an absent surface.
    pub fn empty() -> Self {
        Self { state_indices: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.state_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state_indices.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.state_indices
    }

    pub(crate) fn set(&mut self, element: usize, state: usize) {
        self.state_indices[element] = state;
    }

    /// Number of positions where the two configurations differ.
    pub fn hamming(&self, other: &SurfaceConfig) -> usize {
        self.state_indices
            .iter()
            .zip(&other.state_indices)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// FNV-1a digest, stable across platforms; used to tag trace rows.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &s in &self.state_indices {
            for b in (s as u32).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Hex-packed bit string, element 0 in the most significant bit of the
    /// first nibble. Only defined for binary alphabets.
    pub fn to_hex(&self) -> Result<String> {
        if self.state_indices.iter().any(|&s| s > 1) {
            return Err(Error::Unsupported("hex packing needs a binary configuration".into()));
        }
        let mut out = String::with_capacity(self.len().div_ceil(4));
        for chunk in self.state_indices.chunks(4) {
            let mut nib = 0u8;
            for (k, &bit) in chunk.iter().enumerate() {
                nib |= (bit as u8) << (3 - k);
            }
            out.push(char::from_digit(nib as u32, 16).unwrap());
        }
        Ok(out)
    }

    pub fn from_hex(hex: &str, element_count: usize) -> Result<Self> {
        if hex.len() != element_count.div_ceil(4) {
            return Err(contract(format!(
                "{} hex digits cannot hold exactly {element_count} elements",
                hex.len()
            )));
        }
        let mut states = Vec::with_capacity(element_count);
        for c in hex.chars() {
            let nib = c
                .to_digit(16)
                .ok_or_else(|| domain(format!("'{c}' is not a hex digit")))?;
            for k in 0..4 {
                if states.len() < element_count {
                    states.push(((nib >> (3 - k)) & 1) as usize);
                }
            }
        }
        Ok(Self { state_indices: states })
    }

    /// Text form for result files: hex for binary, comma-separated otherwise.
    pub fn encode(&self) -> String {
        self.to_hex().unwrap_or_else(|_| {
            self.state_indices
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
    }
}

pub fn reflection_coefficients(spec: &MetasurfaceSpec, config: &SurfaceConfig) -> Result<Vec<Complex>> {
    spec.validate(config)?;
    Ok(config.states().iter().map(|&s| spec.coefficient(s)).collect())
}

/// Uniform random configuration over the active elements.
pub fn random_config(spec: &MetasurfaceSpec, stream: &mut RandomStream) -> SurfaceConfig {
    let n = spec.state_count();
    let states = (0..spec.element_count())
        .map(|i| {
            if spec.active_mask[i] {
                stream.below(n)
            } else {
                spec.frozen_states[i]
            }
        })
        .collect();
    SurfaceConfig { state_indices: states }
}

/// Flips every active element of a binary surface.
pub fn invert(spec: &MetasurfaceSpec, config: &SurfaceConfig) -> Result<SurfaceConfig> {
    if !spec.is_binary() {
        return Err(Error::Unsupported(format!(
            "inversion needs a binary alphabet, surface has {} states",
            spec.state_count()
        )));
    }
    spec.validate(config)?;
    let states = config
        .states()
        .iter()
        .enumerate()
        .map(|(i, &s)| if spec.active_mask[i] { 1 - s } else { s })
        .collect();
    Ok(SurfaceConfig { state_indices: states })
}

/// Deactivates `inactive_count` uniformly chosen elements, freezing each at a
/// uniformly random state.
pub fn mask_random_elements(
    spec: &MetasurfaceSpec,
    inactive_count: usize,
    stream: &mut RandomStream,
) -> Result<MetasurfaceSpec> {
    let l = spec.element_count();
    if inactive_count > l {
        return Err(domain(format!("cannot deactivate {inactive_count} of {l} elements")));
    }
    let mut order: Vec<usize> = (0..l).collect();
    stream.shuffle(&mut order);
    let mut mask = vec![true; l];
    let mut frozen = vec![0; l];
    for &i in &order[..inactive_count] {
        mask[i] = false;
        frozen[i] = stream.below(spec.state_count());
    }
    MetasurfaceSpec::new(spec.phase_states.clone(), mask, frozen)
}
