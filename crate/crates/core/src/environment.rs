//! Propagation world: antennas, surface grids, sub-channel synthesis and motion.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::error::{contract, domain, Result};
use crate::mathcore::{cn1, sample_complex_gaussian, Complex, RandomStream};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const DEFAULT_FREQUENCY_HZ: f64 = 5.5e9;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Rotation about the vertical axis.
    pub fn rotate_z(self, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Alice,
    Bob,
    Eve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceId {
    A,
    B,
}

/// A planar rectangular element grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePlacement {
    pub center: Vec3,
    /// Front-facing unit normal.
    pub normal: Vec3,
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl SurfacePlacement {
    /// 16×16 grid at half-wavelength spacing for the default carrier.
    pub fn default_grid(center: Vec3, normal: Vec3) -> Self {
        Self {
            center,
            normal: normal.normalized(),
            rows: 16,
            cols: 16,
            spacing: SPEED_OF_LIGHT / DEFAULT_FREQUENCY_HZ / 2.0,
        }
    }

    /// Default grid at `center` turned to face two points equally.
    pub fn facing_both(center: Vec3, p: Vec3, q: Vec3) -> Self {
        let n = (p - center).normalized() + (q - center).normalized();
        Self::default_grid(center, n)
    }

    pub fn element_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Same grid turned about the vertical axis through its center.
    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            normal: self.normal.rotate_z(angle),
            ..self.clone()
        }
    }

    /// Row-major element positions. Columns run horizontally, rows vertically.
    pub fn element_positions(&self) -> Vec<Vec3> {
        let n = self.normal.normalized();
        let up = if n.z.abs() > 0.99 {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        let u = n.cross(up).normalized();
        let v = u.cross(n).normalized();
        let mut out = Vec::with_capacity(self.element_count());
        for r in 0..self.rows {
            let dv = (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.spacing;
            for c in 0..self.cols {
                let du = (c as f64 - (self.cols as f64 - 1.0) / 2.0) * self.spacing;
                out.push(self.center + u * du + v * dv);
            }
        }
        out
    }
}

/// Positions of everything in the room plus the carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub alice: Vec3,
    pub bob: Vec3,
    pub eve: Option<Vec3>,
    pub surface_a: Option<SurfacePlacement>,
    pub surface_b: Option<SurfacePlacement>,
    pub frequency_hz: f64,
}

impl Geometry {
    /// Office-scale default: link of 3 m, each surface 0.3 m beside one antenna.
    pub fn office(distance_a: f64, distance_b: f64) -> Self {
        let alice = Vec3::new(0.0, 0.0, 0.0);
        let bob = Vec3::new(3.0, 0.0, 0.0);
        let facing = Vec3::new(0.0, -1.0, 0.0);
        Self {
            alice,
            bob,
            eve: None,
            surface_a: Some(SurfacePlacement::default_grid(alice + Vec3::new(0.0, distance_a, 0.0), facing)),
            surface_b: Some(SurfacePlacement::default_grid(bob + Vec3::new(0.0, distance_b, 0.0), facing)),
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn endpoint(&self, which: Endpoint) -> Result<Vec3> {
        match which {
            Endpoint::Alice => Ok(self.alice),
            Endpoint::Bob => Ok(self.bob),
            Endpoint::Eve => self.eve.ok_or_else(|| contract("geometry has no Eve")),
        }
    }

    pub fn surface(&self, id: SurfaceId) -> Option<&SurfacePlacement> {
        match id {
            SurfaceId::A => self.surface_a.as_ref(),
            SurfaceId::B => self.surface_b.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) {
            return Err(domain("carrier frequency must be positive"));
        }
        for s in [&self.surface_a, &self.surface_b].into_iter().flatten() {
            if (s.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(domain("surface normal must have unit length"));
            }
            if !(s.spacing > 0.0) {
                return Err(domain("element spacing must be positive"));
            }
        }
        Ok(())
    }
}

/// AR(1) motion perturbation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub ar_coefficient: f64,
    pub perturbation_std: f64,
    /// Share of surface elements whose sub-channels move with the person.
    pub element_fraction: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            ar_coefficient: 0.9,
            perturbation_std: 0.0,
            element_fraction: 0.2,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(domain("motion AR coefficient must lie in [0, 1)"));
        }
        if !(self.perturbation_std >= 0.0) {
            return Err(domain("motion std must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.element_fraction) {
            return Err(domain("motion element fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    pub path_loss_exponent: f64,
    /// Rician K factor; `f64::INFINITY` gives pure line of sight.
    pub rician_k: f64,
    pub measurement_noise_variance: f64,
    pub coupling_enabled: bool,
    pub motion: MotionParams,
    /// Power gain of one element's re-radiation relative to an isotropic
    /// point scatterer.
    pub element_gain: f64,
    /// Extra loss on the direct path (walls, directional antennas).
    pub direct_attenuation_db: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            rician_k: 5.0,
            measurement_noise_variance: 0.0,
            coupling_enabled: false,
            motion: MotionParams::default(),
            element_gain: 1.0,
            direct_attenuation_db: 0.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(1.5..=4.0).contains(&self.path_loss_exponent) {
            return Err(domain(format!(
                "path loss exponent {} outside [1.5, 4]",
                self.path_loss_exponent
            )));
        }
        if !(self.rician_k >= 0.0) {
            return Err(domain("Rician K must be non-negative"));
        }
        if !(self.measurement_noise_variance >= 0.0) {
            return Err(domain("noise variance must be non-negative"));
        }
        if !(self.element_gain > 0.0) {
            return Err(domain("element gain must be positive"));
        }
        self.motion.validate()
    }

    fn los_weight(&self) -> f64 {
        if self.rician_k.is_infinite() {
            1.0
        } else {
            (self.rician_k / (self.rician_k + 1.0)).sqrt()
        }
    }

    fn scatter_weight(&self) -> f64 {
        if self.rician_k.is_infinite() {
            0.0
        } else {
            (1.0 / (self.rician_k + 1.0)).sqrt()
        }
    }
}

/// Per-element coefficients of one surface (`h`: transmitter→element,
/// `g`: element→receiver).
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SubchannelSet {
    pub h: Vec<Complex>,
    pub g: Vec<Complex>,
}

impl SubchannelSet {
    pub fn new(h: Vec<Complex>, g: Vec<Complex>) -> Result<Self> {
        if h.len() != g.len() {
            return Err(contract(format!("|h| = {} but |g| = {}", h.len(), g.len())));
        }
        Ok(Self { h, g })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Combined illumination `a_l = h_l·g_l`.
    pub fn combined(&self) -> Vec<Complex> {
        self.h.iter().zip(&self.g).map(|(h, g)| h * g).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectChannel {
    pub value: Complex,
}

/// Free-space amplitude `(λ/4π)·d^(−n/2)`.
pub fn path_amplitude(wavelength: f64, distance: f64, exponent: f64) -> f64 {
    wavelength / (4.0 * PI) * distance.powf(-exponent / 2.0)
}

/// One-sided cosine between a grid normal and the ray towards `target`.
fn cos_factor(normal: Vec3, from: Vec3, target: Vec3) -> f64 {
    let d = target - from;
    (normal.dot(d) / d.norm()).max(0.0)
}

fn deterministic_hop(wavelength: f64, d: f64, exponent: f64, cosf: f64) -> Complex {
    let k = 2.0 * PI / wavelength;
    Complex::from_polar(path_amplitude(wavelength, d, exponent) * cosf, -k * d)
}

/// One hop between an element and an endpoint with Rician mixing.
fn hop(
    geometry: &Geometry,
    params: &PropagationParams,
    element: Vec3,
    normal: Vec3,
    endpoint: Vec3,
    stream: &mut RandomStream,
) -> Result<Complex> {
    let lambda = geometry.wavelength();
    let d = element.distance(endpoint);
    if !(d > 0.0) {
        return Err(domain("zero distance between an element and an endpoint"));
    }
    let cosf = cos_factor(normal, element, endpoint);
    let los = deterministic_hop(lambda, d, params.path_loss_exponent, cosf) * params.los_weight();
    let scatter = if params.scatter_weight() > 0.0 {
        cn1(stream) * (params.scatter_weight() * path_amplitude(lambda, d, params.path_loss_exponent))
    } else {
        Complex::new(0.0, 0.0)
    };
    Ok((los + scatter) * params.element_gain.sqrt())
}

/// Per-element sub-channels of one surface between two endpoints.
pub fn synthesize_subchannels(
    geometry: &Geometry,
    params: &PropagationParams,
    surface: SurfaceId,
    tx: Endpoint,
    rx: Endpoint,
    stream: &mut RandomStream,
) -> Result<SubchannelSet> {
    geometry.validate()?;
    let Some(placement) = geometry.surface(surface) else {
        return Ok(SubchannelSet::empty());
    };
    let (ptx, prx) = (geometry.endpoint(tx)?, geometry.endpoint(rx)?);
    let n = placement.normal;
    let mut h = Vec::with_capacity(placement.element_count());
    let mut g = Vec::with_capacity(placement.element_count());
    for p in placement.element_positions() {
        h.push(hop(geometry, params, p, n, ptx, stream)?);
        g.push(hop(geometry, params, p, n, prx, stream)?);
    }
    SubchannelSet::new(h, g)
}

pub fn synthesize_direct_channel(
    geometry: &Geometry,
    params: &PropagationParams,
    tx: Endpoint,
    rx: Endpoint,
    stream: &mut RandomStream,
) -> Result<DirectChannel> {
    geometry.validate()?;
    let (ptx, prx) = (geometry.endpoint(tx)?, geometry.endpoint(rx)?);
    let d = ptx.distance(prx);
    if !(d > 0.0) {
        return Err(domain("transmitter and receiver coincide"));
    }
    let lambda = geometry.wavelength();
    let amp = path_amplitude(lambda, d, params.path_loss_exponent);
    let los = deterministic_hop(lambda, d, params.path_loss_exponent, 1.0) * params.los_weight();
    let scatter = sample_complex_gaussian(stream, (amp * params.scatter_weight()).powi(2))?;
    let atten = 10f64.powf(-params.direct_attenuation_db / 20.0);
    Ok(DirectChannel {
        value: (los + scatter) * atten,
    })
}

/// Line-of-sight element-to-element matrix `t[k][l]` from surface A to B.
///
/// Only the deterministic part is modeled: the double bounce is already
/// far below the scatter floor of single-bounce paths.
pub fn synthesize_coupling(geometry: &Geometry, params: &PropagationParams) -> Result<Vec<Vec<Complex>>> {
    let (Some(sa), Some(sb)) = (&geometry.surface_a, &geometry.surface_b) else {
        return Err(contract("coupling needs both surfaces"));
    };
    let lambda = geometry.wavelength();
    let pa = sa.element_positions();
    let pb = sb.element_positions();
    let mut t = Vec::with_capacity(pa.len());
    for &k in &pa {
        let mut row = Vec::with_capacity(pb.len());
        for &l in &pb {
            let d = k.distance(l);
            if !(d > 0.0) {
                return Err(domain("surfaces overlap"));
            }
            let cosf = cos_factor(sa.normal, k, l) * cos_factor(sb.normal, l, k);
            row.push(deterministic_hop(lambda, d, params.path_loss_exponent, cosf) * params.element_gain);
        }
        t.push(row);
    }
    Ok(t)
}

/// Multiplicative motion perturbation process.
#[derive(Clone, Debug)]
pub struct MotionState {
    pub m: Complex,
}

impl MotionState {
    /// Starts in the stationary distribution so no burn-in is needed.
    pub fn stationary(params: &MotionParams, stream: &mut RandomStream) -> Self {
        let m = cn1(stream) * params.perturbation_std;
        Self { m }
    }

    pub fn still() -> Self {
        Self { m: Complex::new(0.0, 0.0) }
    }
}

/// `m(t+1) = ρ·m(t) + sqrt(1−ρ²)·CN(0, σ²)`.
pub fn motion_step(state: &mut MotionState, params: &MotionParams, stream: &mut RandomStream) -> Complex {
    if params.perturbation_std == 0.0 {
        state.m = Complex::new(0.0, 0.0);
        return state.m;
    }
    let rho = params.ar_coefficient;
    state.m = state.m * rho + cn1(stream) * ((1.0 - rho * rho).sqrt() * params.perturbation_std);
    state.m
}

/// Elements affected by motion, drawn once per environment.
pub fn motion_elements(element_count: usize, fraction: f64, stream: &mut RandomStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..element_count).collect();
    stream.shuffle(&mut idx);
    idx.truncate((element_count as f64 * fraction).round() as usize);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lambda() -> f64 {
        SPEED_OF_LIGHT / DEFAULT_FREQUENCY_HZ
    }

    fn los_params() -> PropagationParams {
        PropagationParams {
            rician_k: f64::INFINITY,
            ..PropagationParams::default()
        }
    }

    fn single_element(center: Vec3, normal: Vec3) -> SurfacePlacement {
        SurfacePlacement {
            center,
            normal,
            rows: 1,
            cols: 1,
            spacing: 0.01,
        }
    }

    fn unit_geometry(normal: Vec3) -> Geometry {
        Geometry {
            alice: Vec3::new(0.0, 0.0, 0.0),
            bob: Vec3::new(0.0, 2.0, 0.0),
            eve: None,
            surface_a: Some(single_element(Vec3::new(1.0, 0.0, 0.0), normal)),
            surface_b: None,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        }
    }

    #[test]
    fn broadside_los_amplitude() {
        let g = unit_geometry(Vec3::new(-1.0, 0.0, 0.0));
        let mut s = RandomStream::new(1, 0);
        let sub = synthesize_subchannels(&g, &los_params(), SurfaceId::A, Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
        assert!((sub.h[0].norm() - lambda() / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn grazing_surface_has_no_deterministic_part() {
        let g = unit_geometry(Vec3::new(0.0, 0.0, 1.0));
        let mut s = RandomStream::new(1, 0);
        let sub = synthesize_subchannels(&g, &los_params(), SurfaceId::A, Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
        assert!(sub.h[0].norm() < 1e-18);
        assert!(sub.g[0].norm() < 1e-18);
    }

    #[test]
    fn scatter_power_matches_configuration() {
        let g = unit_geometry(Vec3::new(-1.0, 0.0, 0.0));
        let p = PropagationParams {
            rician_k: 0.0,
            ..PropagationParams::default()
        };
        let mut s = RandomStream::new(2, 0);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let sub = synthesize_subchannels(&g, &p, SurfaceId::A, Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
            acc += sub.h[0].norm_sqr();
        }
        let expected = (lambda() / (4.0 * PI)).powi(2);
        let ratio = acc / n as f64 / expected;
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn rician_power_split() {
        let g = unit_geometry(Vec3::new(-1.0, 0.0, 0.0));
        let p = PropagationParams::default();
        let mut s = RandomStream::new(3, 0);
        let n = 50_000;
        let det = deterministic_hop(lambda(), 1.0, 2.0, 1.0) * p.los_weight();
        let mut scatter_power = 0.0;
        for _ in 0..n {
            let sub = synthesize_subchannels(&g, &p, SurfaceId::A, Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
            scatter_power += (sub.h[0] - det).norm_sqr();
        }
        let total = (lambda() / (4.0 * PI)).powi(2);
        let ratio = scatter_power / n as f64 / (total / 6.0);
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
        assert!((det.norm_sqr() / (total * 5.0 / 6.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn friis_direct_channel() {
        let g = Geometry {
            bob: Vec3::new(3.0, 0.0, 0.0),
            ..unit_geometry(Vec3::new(1.0, 0.0, 0.0))
        };
        let mut s = RandomStream::new(4, 0);
        let d = synthesize_direct_channel(&g, &los_params(), Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
        assert!((d.value.norm() - lambda() / (4.0 * PI * 3.0)).abs() < 1e-15);

        let p = PropagationParams::default();
        let x = synthesize_direct_channel(&g, &p, Endpoint::Alice, Endpoint::Bob, &mut RandomStream::new(5, 0)).unwrap();
        let y = synthesize_direct_channel(&g, &p, Endpoint::Alice, Endpoint::Bob, &mut RandomStream::new(6, 0)).unwrap();
        assert_ne!(x.value, y.value);
    }

    #[test]
    fn doubling_frequency_halves_los_amplitude() {
        let mut g = unit_geometry(Vec3::new(-1.0, 0.0, 0.0));
        let mut s = RandomStream::new(7, 0);
        let a = synthesize_direct_channel(&g, &los_params(), Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
        g.frequency_hz *= 2.0;
        let b = synthesize_direct_channel(&g, &los_params(), Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
        assert!((b.value.norm() / a.value.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_hop_distance_scaling() {
        let p = los_params();
        let mut s = RandomStream::new(8, 0);
        let normal = Vec3::new(0.0, -1.0, 0.0);
        let make = |scale: f64| Geometry {
            alice: Vec3::new(-1.0, 0.0, 0.0) * scale,
            bob: Vec3::new(1.0, 0.0, 0.0) * scale,
            eve: None,
            surface_a: Some(single_element(Vec3::new(0.0, 1.0, 0.0) * scale, normal)),
            surface_b: None,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        };
        let near = synthesize_subchannels(&make(1.0), &p, SurfaceId::A, Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
        let far = synthesize_subchannels(&make(2.0), &p, SurfaceId::A, Endpoint::Alice, Endpoint::Bob, &mut s).unwrap();
        // Same angles, both hops twice as long: (d1·d2)^(−1) scales by 1/4.
        let ratio = far.combined()[0].norm() / near.combined()[0].norm();
        assert!((ratio - 0.25).abs() < 1e-12, "ratio {ratio}");
    }

    #[test]
    fn frequencies_have_independent_scatter() {
        let g = unit_geometry(Vec3::new(-1.0, 0.0, 0.0));
        let p = PropagationParams {
            rician_k: 0.0,
            ..PropagationParams::default()
        };
        let root = RandomStream::new(9, 0);
        let n = 10_000;
        let mut acc = Complex::new(0.0, 0.0);
        let mut pa = 0.0;
        let mut pb = 0.0;
        for i in 0..n {
            let mut s1 = root.fork(2 * i);
            let mut s2 = root.fork(2 * i + 1);
            let x = synthesize_direct_channel(&g, &p, Endpoint::Alice, Endpoint::Bob, &mut s1).unwrap().value;
            let y = synthesize_direct_channel(&g, &p, Endpoint::Alice, Endpoint::Bob, &mut s2).unwrap().value;
            acc += x * y.conj();
            pa += x.norm_sqr();
            pb += y.norm_sqr();
        }
        let corr = acc.norm() / (pa * pb).sqrt();
        assert!(corr < 0.05, "corr {corr}");
    }

    #[test]
    fn motion_statistics() {
        let params = MotionParams {
            ar_coefficient: 0.9,
            perturbation_std: 0.3,
            element_fraction: 0.2,
        };
        let mut s = RandomStream::new(10, 0);
        let mut st = MotionState::stationary(&params, &mut s);
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            xs.push(motion_step(&mut st, &params, &mut s));
        }
        let var = xs.iter().map(|m| m.norm_sqr()).sum::<f64>() / n as f64;
        assert!((0.085..=0.095).contains(&var), "var {var}");
        let lag: Complex = xs.windows(2).map(|w| w[1] * w[0].conj()).sum();
        let rho = lag.re / (n - 1) as f64 / var;
        assert!((rho - 0.9).abs() < 0.02, "rho {rho}");

        let still = MotionParams {
            perturbation_std: 0.0,
            ..params
        };
        for _ in 0..10 {
            assert_eq!(motion_step(&mut st, &still, &mut s), Complex::new(0.0, 0.0));
        }
    }

    #[test]
    fn coupling_vanishes_when_surfaces_face_away() {
        let g = Geometry {
            surface_a: Some(SurfacePlacement {
                rows: 2,
                cols: 2,
                ..single_element(Vec3::new(0.0, 1.0, 0.0), Vec3::new(-1.0, 0.0, 0.0))
            }),
            surface_b: Some(SurfacePlacement {
                rows: 2,
                cols: 2,
                ..single_element(Vec3::new(1.0, 1.0, 0.0), Vec3::new(1.0, 0.0, 0.0))
            }),
            ..unit_geometry(Vec3::new(1.0, 0.0, 0.0))
        };
        let t = synthesize_coupling(&g, &los_params()).unwrap();
        assert!(t.iter().flatten().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn grid_layout() {
        let p = SurfacePlacement::default_grid(Vec3::new(0.0, 0.3, 0.0), Vec3::new(0.0, -1.0, 0.0));
        let pos = p.element_positions();
        assert_eq!(pos.len(), 256);
        let mean = pos.iter().fold(Vec3::default(), |a, &b| a + b) * (1.0 / 256.0);
        assert!(mean.distance(p.center) < 1e-12);
        assert!((pos[0].distance(pos[1]) - p.spacing).abs() < 1e-12);
        assert!(pos.iter().all(|q| (q.y - 0.3).abs() < 1e-12));
    }
}
