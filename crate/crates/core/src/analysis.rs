//! Closed-form oracle for power battles and the mutual-SNR estimator.

use serde::{Deserialize, Serialize};

use crate::environment::SubchannelSet;
use crate::error::{domain, Error, Result};
use crate::mathcore::{sample_complex_gaussian, wrap_phase, Complex, RandomStream};

/// Multiplicative deviation `η·e^{jφ_e}` of an achieved surface channel
/// from its ideal aligned (or anti-aligned) target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPhasor {
    pub eta: f64,
    pub phi_e: f64,
}

impl ErrorPhasor {
    pub fn new(eta: f64, phi_e: f64) -> Result<Self> {
        if !(eta > 0.0) || !phi_e.is_finite() {
            return Err(domain(format!("invalid error phasor ({eta}, {phi_e})")));
        }
        Ok(Self { eta, phi_e })
    }

    pub fn ideal() -> Self {
        Self { eta: 1.0, phi_e: 0.0 }
    }

    pub fn phasor(&self) -> Complex {
        Complex::from_polar(self.eta, self.phi_e)
    }

    /// `η = |achieved|/|target|`, `φ_e = arg(achieved/target)`.
    pub fn fit(achieved: Complex, target: Complex) -> Result<Self> {
        if target.norm() == 0.0 {
            return Err(domain("cannot fit an error phasor against a zero target"));
        }
        let r = achieved / target;
        Self::new(r.norm(), r.arg())
    }
}

/// Oracle predictions for one channel/error setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub g_max: f64,
    pub g_min: f64,
    pub battle_gain: f64,
    pub r_max: f64,
}

impl GainReport {
    /// Collects all predictions for direct magnitude `h_d_mag` and surfaces
    /// whose coherent maxima are `h_max_a` and `h_max_b`.
    pub fn predict(h_d_mag: f64, h_max_a: f64, h_max_b: f64, err_a: ErrorPhasor, err_b: ErrorPhasor) -> Result<Self> {
        if !(h_d_mag > 0.0) {
            return Err(domain("gain relative to a zero direct channel"));
        }
        // A minimizer weaker than the direct path cannot reach full cancellation.
        let b_rel = ErrorPhasor {
            eta: err_b.eta * (h_max_b / h_d_mag).min(1.0),
            phi_e: err_b.phi_e,
        };
        Ok(Self {
            g_max: gain_max(h_d_mag, h_max_a, err_a)?,
            g_min: gain_min(err_b),
            battle_gain: battle_gain(h_d_mag, h_max_a, err_a, b_rel)?,
            r_max: h_max_a / h_d_mag,
        })
    }
}

/// Variance of the surface channel under uniform random configurations,
/// `σ² = Σ|h_l·g_l|²`.
pub fn randomization_variance(sub: &SubchannelSet) -> f64 {
    sub.h.iter().zip(&sub.g).map(|(h, g)| (h * g).norm_sqr()).sum()
}

/// Coherent maximum `Σ|h_l·g_l|`.
pub fn max_amplitude(sub: &SubchannelSet) -> f64 {
    sub.h.iter().zip(&sub.g).map(|(h, g)| (h * g).norm()).sum()
}

/// Power cancellation ratio `1 − 2η·cos φ_e + η²`.
pub fn gain_min(err: ErrorPhasor) -> f64 {
    1.0 - 2.0 * err.eta * err.phi_e.cos() + err.eta * err.eta
}

/// `||H_d| + η·|H_max|·e^{jφ_e}|² / |H_d|²`.
pub fn gain_max(h_d_mag: f64, h_max_mag: f64, err: ErrorPhasor) -> Result<f64> {
    if !(h_d_mag > 0.0) {
        return Err(domain("gain relative to a zero direct channel"));
    }
    let num = Complex::new(h_d_mag, 0.0) + Complex::from_polar(err.eta * h_max_mag, err.phi_e);
    Ok(num.norm_sqr() / (h_d_mag * h_d_mag))
}

/// Post-battle power gain `|1 + (η_A|H_max,A|/|H_d|)e^{jφ_A} − η_B e^{jφ_B}|²`.
///
/// The minimizer's amplitude `η_B` is relative to `|H_d|`, the maximizer's
/// relative to its own coherent maximum.
pub fn battle_gain(h_d_mag: f64, h_max_a: f64, err_a: ErrorPhasor, err_b: ErrorPhasor) -> Result<f64> {
    if !(h_d_mag > 0.0) {
        return Err(domain("gain relative to a zero direct channel"));
    }
    let r = err_a.eta * h_max_a / h_d_mag;
    Ok((Complex::new(1.0, 0.0) + Complex::from_polar(r, err_a.phi_e) - err_b.phasor()).norm_sqr())
}

/// Equal-channel specialization `|1 + r(e^{jφ_A} − e^{jφ_B})|²`.
pub fn lemma1_gain(r_max: f64, phi_a: f64, phi_b: f64) -> f64 {
    let d = Complex::from_polar(1.0, phi_a) - Complex::from_polar(1.0, phi_b);
    (Complex::new(1.0, 0.0) + d * r_max).norm_sqr()
}

fn nonzero(h: Complex, what: &str) -> Result<()> {
    if h.norm() == 0.0 {
        return Err(domain(format!("{what} has zero magnitude")));
    }
    Ok(())
}

/// Error of a minimizer tuned against `h_d0` once the baseline moves to `h_d1`.
pub fn degrade_minimizer(h_d0: Complex, h_d1: Complex, err: ErrorPhasor) -> Result<ErrorPhasor> {
    nonzero(h_d0, "baseline before reconfiguration")?;
    nonzero(h_d1, "baseline after reconfiguration")?;
    ErrorPhasor::new(
        err.eta * h_d0.norm() / h_d1.norm(),
        wrap_phase(h_d0.arg() - h_d1.arg() + err.phi_e),
    )
}

/// Maximizer counterpart: amplitude error untouched, phase shifted.
pub fn degrade_maximizer(h_d0: Complex, h_d1: Complex, err: ErrorPhasor) -> Result<ErrorPhasor> {
    nonzero(h_d0, "baseline before reconfiguration")?;
    nonzero(h_d1, "baseline after reconfiguration")?;
    ErrorPhasor::new(err.eta, wrap_phase(h_d0.arg() - h_d1.arg() + err.phi_e))
}

/// One realization of the baseline change caused by two random opponent
/// configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DegradationSample {
    pub e0: Complex,
    pub e1: Complex,
    pub h_e: Complex,
    pub amp_error: f64,
    pub phase_error: f64,
}

pub fn sample_degradation(h_d: Complex, sigma_m: f64, stream: &mut RandomStream) -> Result<DegradationSample> {
    let e0 = sample_complex_gaussian(stream, sigma_m * sigma_m)?;
    let e1 = sample_complex_gaussian(stream, sigma_m * sigma_m)?;
    let h_e = (h_d + e1) / (h_d + e0);
    Ok(DegradationSample {
        e0,
        e1,
        h_e,
        amp_error: h_e.norm(),
        phase_error: h_e.arg(),
    })
}

/// Predicted normal laws for `|H_e|` and `φ_e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DegradationPrediction {
    pub amp_mean: f64,
    pub amp_std: f64,
    pub phase_mean: f64,
    pub phase_std: f64,
    /// False when `σ_m/|H_d| ≥ 0.2`, where the small-perturbation
    /// approximation stops holding.
    pub in_regime: bool,
}

pub fn random_degradation_stats(sigma_m: f64, h_d_mag: f64) -> Result<DegradationPrediction> {
    if !(h_d_mag > 0.0) || !(sigma_m >= 0.0) {
        return Err(domain("degradation needs σ ≥ 0 and |H_d| > 0"));
    }
    let ratio = sigma_m / h_d_mag;
    let in_regime = ratio < 0.2;
    if !in_regime {
        log::warn!("σ/|H_d| = {ratio:.3} is outside the small-perturbation regime");
    }
    Ok(DegradationPrediction {
        amp_mean: 1.0,
        amp_std: ratio,
        phase_mean: 0.0,
        phase_std: ratio,
        in_regime,
    })
}

/// Matched-filter energies of each surface's footprint inside a joint trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutualSnrEstimate {
    pub rho_a: f64,
    pub rho_b: f64,
    pub snr_b: f64,
}

fn centered(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| x - m).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `ρ_X = ⟨joint', X'⟩² / ⟨X', X'⟩` on mean-removed traces, `snr_b = ρ_B/ρ_A`.
pub fn mutual_snr(seq_a: &[f64], seq_b: &[f64], seq_joint: &[f64]) -> Result<MutualSnrEstimate> {
    let n = seq_joint.len();
    if n < 2 || seq_a.len() != n || seq_b.len() != n {
        return Err(domain("mutual SNR needs three equal-length traces of at least 2 samples"));
    }
    let (a, b, j) = (centered(seq_a), centered(seq_b), centered(seq_joint));
    let (ea, eb) = (dot(&a, &a), dot(&b, &b));
    if ea == 0.0 || eb == 0.0 {
        return Err(Error::UndefinedSnr("a reference trace has zero energy".into()));
    }
    let rho_a = dot(&j, &a).powi(2) / ea;
    let rho_b = dot(&j, &b).powi(2) / eb;
    if rho_a == 0.0 {
        return Err(Error::UndefinedSnr("surface A has no footprint in the joint trace".into()));
    }
    Ok(MutualSnrEstimate {
        rho_a,
        rho_b,
        snr_b: rho_b / rho_a,
    })
}
