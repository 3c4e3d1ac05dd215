//! Welch power spectral density estimation.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Welch estimator settings: Hann window, 50 % overlap, 1024-sample
/// segments by default.
#[derive(Debug, Clone, Copy)]
pub struct PsdConfig {
    pub segment: usize,
    /// Overlap fraction in `[0, 1)`.
    pub overlap: f64,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            segment: 1024,
            overlap: 0.5,
        }
    }
}

/// One-sided Welch PSD estimate, returned as `(frequency, power density)`
/// column pairs. Power integrates to the signal variance (Parseval).
pub fn psd(series: &[f64], fs: f64, cfg: &PsdConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let nper = cfg.segment;
    if nper < 8 {
        return Err(Error::InvalidInput("segment length must be at least 8".into()));
    }
    if series.len() < nper {
        return Err(Error::InvalidInput(format!(
            "series length {} is shorter than the segment length {nper}",
            series.len()
        )));
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidInput("overlap must lie in [0, 1)".into()));
    }
    if !(fs > 0.0) {
        return Err(Error::InvalidInput("sampling rate must be positive".into()));
    }

    let hop = ((nper as f64) * (1.0 - cfg.overlap)).max(1.0) as usize;
    let window: Vec<f64> = (0..nper)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / nper as f64;
            x.sin() * x.sin()
        })
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nper);

    let n_freq = nper / 2 + 1;
    let mut acc = vec![0.0f64; n_freq];
    let mut n_segments = 0usize;
    let mut start = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); nper];
    while start + nper <= series.len() {
        let seg = &series[start..start + nper];
        let mean: f64 = seg.iter().sum::<f64>() / nper as f64;
        for (i, (&v, w)) in seg.iter().zip(&window).enumerate() {
            buf[i] = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (i, a) in acc.iter_mut().enumerate() {
            *a += buf[i].norm_sqr();
        }
        n_segments += 1;
        start += hop;
    }

    let scale = 1.0 / (fs * win_power * n_segments as f64);
    let mut power: Vec<f64> = acc.iter().map(|a| a * scale).collect();
    // One-sided: double everything except DC and Nyquist.
    for p in power.iter_mut().take(n_freq - 1).skip(1) {
        *p *= 2.0;
    }
    let freqs: Vec<f64> = (0..n_freq).map(|i| i as f64 * fs / nper as f64).collect();
    Ok((freqs, power))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn white_noise_is_flat_and_parseval_holds() {
        let fs = 256.0;
        let n = 1 << 16;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let normal = StandardNormal;
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = normal.sample(&mut rng);
                v
            })
            .collect();
        let var: f64 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let cfg = PsdConfig::default();
        let (freqs, power) = psd(&x, fs, &cfg).unwrap();
        let df = freqs[1] - freqs[0];
        let integral: f64 = power.iter().sum::<f64>() * df;
        assert!(
            (integral - var).abs() / var < 0.10,
            "integral {integral} vs variance {var}"
        );
        // Flat within loose statistical tolerance away from the edges.
        let expected = var / (fs / 2.0);
        for (f, p) in freqs.iter().zip(&power) {
            if *f > 5.0 && *f < fs / 2.0 - 5.0 {
                assert!((p - expected).abs() / expected < 0.5, "at {f} Hz: {p}");
            }
        }
    }

    #[test]
    fn pure_tone_peaks_at_its_frequency() {
        let fs = 128.0;
        let f0 = 10.0;
        let n = 8192;
        let x: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64 / fs).sin())
            .collect();
        let (freqs, power) = psd(&x, fs, &PsdConfig::default()).unwrap();
        let (imax, _) = power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!((freqs[imax] - f0).abs() <= fs / 1024.0);
    }

    #[test]
    fn zero_signal_zero_power() {
        let x = vec![0.0; 4096];
        let (_, power) = psd(&x, 64.0, &PsdConfig::default()).unwrap();
        assert!(power.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn short_series_rejected() {
        let x = vec![0.0; 100];
        assert!(psd(&x, 64.0, &PsdConfig::default()).is_err());
    }
}
