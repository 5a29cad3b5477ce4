//! Magnitude STFT of real channel series.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mathcore::Complex;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub window: usize,
    pub hop: usize,
    /// Zero-padded transform length, at least `window`.
    pub fft_size: usize,
    pub sample_rate_hz: f64,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            window: 64,
            hop: 16,
            fft_size: 64,
            sample_rate_hz: 100.0,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hop == 0 {
            return Err(domain("STFT window and hop must be positive"));
        }
        if self.fft_size < self.window {
            return Err(domain("STFT size must be at least the window length"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(domain("sample rate must be positive"));
        }
        Ok(())
    }

    /// One-sided bin count.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz / self.fft_size as f64
    }

    pub fn frames(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.hop + 1
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// One-sided magnitude spectrogram, rows are frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramTarget {
    pub magnitudes: Vec<Vec<f64>>,
    pub params: StftParams,
}

impl SpectrogramTarget {
    pub fn frames(&self) -> usize {
        self.magnitudes.len()
    }

    /// Energy of the full two-sided spectrum divided by the transform length,
    /// which equals the energy of the windowed frames.
    pub fn energy(&self) -> f64 {
        let n = self.params.fft_size;
        let mut total = 0.0;
        for row in &self.magnitudes {
            for (k, m) in row.iter().enumerate() {
                let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
                total += m * m * if mirrored { 2.0 } else { 1.0 };
            }
        }
        total / n as f64
    }

    /// Energy of the bins whose frequency lies in `[lo, hi]` Hz, same
    /// normalization as [`energy`](Self::energy).
    pub fn band_energy(&self, lo: f64, hi: f64) -> f64 {
        let n = self.params.fft_size;
        let mut total = 0.0;
        for row in &self.magnitudes {
            for (k, m) in row.iter().enumerate() {
                let f = self.params.bin_frequency(k);
                if f < lo || f > hi {
                    continue;
                }
                let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
                total += m * m * if mirrored { 2.0 } else { 1.0 };
            }
        }
        total / n as f64
    }

    pub fn is_silent(&self) -> bool {
        self.magnitudes.iter().flatten().all(|&m| m == 0.0)
    }

    /// Dense CSV, one row per frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.magnitudes {
            let line: Vec<String> = row.iter().map(|m| format!("{m:.9e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn spectrogram(series: &[f64], params: &StftParams) -> Result<SpectrogramTarget> {
    params.validate()?;
    if series.len() < params.window {
        return Err(domain(format!(
            "series of {} samples is shorter than the {}-sample window",
            series.len(),
            params.window
        )));
    }
    let w = hann(params.window);
    let fft = FftPlanner::new().plan_fft_forward(params.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); params.fft_size];
    let mut magnitudes = Vec::with_capacity(params.frames(series.len()));
    for f in 0..params.frames(series.len()) {
        let start = f * params.hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..params.window {
            buf[i] = Complex::new(series[start + i] * w[i], 0.0);
        }
        fft.process(&mut buf);
        magnitudes.push(buf[..params.bins()].iter().map(|c| c.norm()).collect());
    }
    Ok(SpectrogramTarget {
        magnitudes,
        params: *params,
    })
}

/// Total energy of the Hann-windowed frames the STFT sees.
pub fn windowed_energy(series: &[f64], params: &StftParams) -> f64 {
    let w = hann(params.window);
    (0..params.frames(series.len()))
        .map(|f| {
            let s = &series[f * params.hop..f * params.hop + params.window];
            s.iter().zip(&w).map(|(x, w)| (x * w).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Cosine similarity of two equally shaped magnitude matrices. Two silent
/// spectrograms match perfectly; silence against anything else scores 0.
pub fn similarity(a: &SpectrogramTarget, b: &SpectrogramTarget) -> Result<f64> {
    if a.magnitudes.len() != b.magnitudes.len()
        || a.magnitudes.iter().zip(&b.magnitudes).any(|(x, y)| x.len() != y.len())
    {
        return Err(domain("spectrograms differ in shape"));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (ra, rb) in a.magnitudes.iter().zip(&b.magnitudes) {
        for (x, y) in ra.iter().zip(rb) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    Ok(match (na > 0.0, nb > 0.0) {
        (false, false) => 1.0,
        (true, true) => dot / (na * nb).sqrt(),
        _ => 0.0,
    })
}

/// Series with its mean removed: the Doppler content of a magnitude trace.
pub fn detrended(series: &[f64]) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let m = series.iter().sum::<f64>() / series.len() as f64;
    series.iter().map(|x| x - m).collect()
}

/// `cos(2π∫f)` with the instantaneous frequency ramping linearly from
/// `f_start` to `f_end` Hz, the Doppler signature of someone speeding up.
pub fn doppler_ramp(len: usize, sample_rate_hz: f64, f_start: f64, f_end: f64) -> Vec<f64> {
    let dt = 1.0 / sample_rate_hz;
    let dur = len as f64 * dt;
    (0..len)
        .map(|i| {
            let t = i as f64 * dt;
            let phase = 2.0 * PI * (f_start * t + (f_end - f_start) * t * t / (2.0 * dur));
            phase.cos()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> StftParams {
        StftParams::default()
    }

    #[test]
    fn parseval_holds_for_arbitrary_series() {
        let mut s = crate::mathcore::RandomStream::new(4, 0);
        let x: Vec<f64> = (0..500).map(|_| s.standard_normal()).collect();
        for p in [
            params(),
            StftParams {
                fft_size: 100,
                hop: 7,
                ..params()
            },
            StftParams {
                window: 33,
                fft_size: 33,
                ..params()
            },
        ] {
            let sg = spectrogram(&x, &p).unwrap();
            let e = windowed_energy(&x, &p);
            assert!((sg.energy() - e).abs() / e < 1e-6, "{} vs {e}", sg.energy());
        }
    }

    #[test]
    fn tone_lands_in_one_bin() {
        let p = params();
        let f0 = p.bin_frequency(10);
        let x: Vec<f64> = (0..512).map(|i| (2.0 * PI * f0 * i as f64 / p.sample_rate_hz).sin()).collect();
        let sg = spectrogram(&x, &p).unwrap();
        for row in &sg.magnitudes {
            let total: f64 = row.iter().map(|m| m * m).sum();
            assert!(row[10] * row[10] / total >= 0.5, "Hann main lobe splits over three bins");
            let lobe: f64 = row[9..=11].iter().map(|m| m * m).sum();
            assert!(lobe / total >= 0.9);
            let peak = row.iter().cloned().fold(0.0, f64::max);
            assert_eq!(peak, row[10]);
        }
    }

    #[test]
    fn constant_is_pure_dc() {
        let sg = spectrogram(&vec![2.5; 300], &params()).unwrap();
        for row in &sg.magnitudes {
            assert!(row[0] > 0.0);
            assert!(row[2..].iter().all(|m| *m < 1e-9 * row[0]));
            // Hann main lobe: bin 1 carries exactly half the DC magnitude
            assert!((row[1] - 0.5 * row[0]).abs() < 1e-9 * row[0]);
        }
    }

    #[test]
    fn square_wave_has_odd_harmonics() {
        let p = StftParams {
            window: 256,
            fft_size: 256,
            hop: 64,
            ..params()
        };
        // period of 32 samples puts f0 on bin 8 and 3·f0 on bin 24
        let x: Vec<f64> = (0..1024).map(|i| if (i / 16) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sg = spectrogram(&x, &p).unwrap();
        for row in &sg.magnitudes {
            let ratio = row[24] / row[8];
            assert!((ratio - 1.0 / 3.0).abs() / (1.0 / 3.0) < 0.1, "ratio {ratio}");
            assert!(row[16] < 1e-6 * row[8]);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(spectrogram(&[1.0; 10], &params()).is_err());
    }

    #[test]
    fn similarity_conventions() {
        let sg = spectrogram(&doppler_ramp(256, 100.0, 5.0, 20.0), &params()).unwrap();
        assert!((similarity(&sg, &sg).unwrap() - 1.0).abs() < 1e-12);
        let silent = spectrogram(&vec![0.0; 256], &params()).unwrap();
        assert!(silent.is_silent());
        assert_eq!(similarity(&silent, &silent).unwrap(), 1.0);
        assert_eq!(similarity(&silent, &sg).unwrap(), 0.0);
    }
}
