//! Zero-phase Butterworth filtering and decimation.
//!
//! Filters are designed as cascaded biquads from the analog Butterworth
//! prototype via the bilinear transform with frequency prewarping, and
//! applied forward-backward (zero phase) with steady-state initial
//! conditions and odd-symmetric edge padding.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::structural::Quantity;

use super::{Channel, TimeSeriesSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FilterKind {
    Lowpass,
    Highpass,
}

/// Second-order section with normalized `a0 = 1`.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Steady-state filter state for a unit constant input (transposed
    /// direct form II), used to suppress start-up transients.
    fn unit_step_state(&self) -> [f64; 2] {
        let k = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * k;
        let z1 = self.b[1] - self.a[0] * k + z2;
        [z1, z2]
    }

    fn response_at(&self, z: Complex<f64>) -> Complex<f64> {
        let num = self.b[0] * z * z + self.b[1] * z + self.b[2];
        let den = z * z + self.a[0] * z + self.a[1];
        num / den
    }
}

/// Designs an even-order Butterworth filter as second-order sections.
fn butterworth(order: usize, cutoff_hz: f64, fs: f64, kind: FilterKind) -> Result<Vec<Biquad>> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::InvalidInput("filter order must be even and positive".into()));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(Error::InvalidInput(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, fs/2) for fs = {fs} Hz"
        )));
    }
    let fs2 = 2.0 * fs;
    let warped = fs2 * (std::f64::consts::PI * cutoff_hz / fs).tan();

    let mut sections = Vec::with_capacity(order / 2);
    for pair in 0..order / 2 {
        // Prototype pole in the upper-left quadrant; its conjugate completes
        // the section.
        let theta =
            std::f64::consts::PI * (2.0 * (pair + 1) as f64 + order as f64 - 1.0) / (2.0 * order as f64);
        let proto = Complex::new(theta.cos(), theta.sin());
        let s_pole = match kind {
            FilterKind::Lowpass => proto * warped,
            FilterKind::Highpass => warped / proto,
        };
        // Bilinear transform: z = (2 fs + s) / (2 fs - s).
        let z_pole = (Complex::new(fs2, 0.0) + s_pole) / (Complex::new(fs2, 0.0) - s_pole);
        let a = [-2.0 * z_pole.re, z_pole.norm_sqr()];
        let b = match kind {
            // LP zeros sit at z = -1, HP zeros at z = +1.
            FilterKind::Lowpass => [1.0, 2.0, 1.0],
            FilterKind::Highpass => [1.0, -2.0, 1.0],
        };
        sections.push(Biquad { b, a });
    }

    // Normalize overall gain: unity at DC for lowpass, at Nyquist for highpass.
    let z_ref = match kind {
        FilterKind::Lowpass => Complex::new(1.0, 0.0),
        FilterKind::Highpass => Complex::new(-1.0, 0.0),
    };
    let gain: f64 = sections
        .iter()
        .map(|s| s.response_at(z_ref).norm())
        .product();
    if gain <= 0.0 || !gain.is_finite() {
        return Err(Error::Numerical("degenerate filter gain".into()));
    }
    for c in sections[0].b.iter_mut() {
        *c /= gain;
    }
    Ok(sections)
}

fn sosfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in sections {
        let mut state = s.unit_step_state().map(|z| z * y.first().copied().unwrap_or(0.0));
        for v in y.iter_mut() {
            let out = s.b[0] * *v + state[0];
            state[0] = s.b[1] * *v - s.a[0] * out + state[1];
            state[1] = s.b[2] * *v - s.a[1] * out;
            *v = out;
        }
    }
    y
}

/// Forward-backward filtering with odd-symmetric padding at both ends.
fn sosfiltfilt(sections: &[Biquad], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput("signal too short to filter".into()));
    }
    let padlen = (12 * sections.len()).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * padlen);
    for i in (1..=padlen).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=padlen {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let mut y = sosfilt(sections, &ext);
    y.reverse();
    let mut y = sosfilt(sections, &y);
    y.reverse();
    Ok(y[padlen..padlen + n].to_vec())
}

/// Zero-phase 4th-order Butterworth high-pass applied per channel.
/// Displacement channels are passed through untouched unless
/// `filter_displacement` is set, to preserve their quasi-static component.
pub fn highpass(ts: &TimeSeriesSet, cutoff_hz: f64, filter_displacement: bool) -> Result<TimeSeriesSet> {
    let sections = butterworth(4, cutoff_hz, ts.fs, FilterKind::Highpass)?;
    let channels = ts
        .channels
        .iter()
        .map(|ch| {
            if ch.quantity == Quantity::Displacement && !filter_displacement {
                return Ok(ch.clone());
            }
            let (values, valid) = filter_masked(&sections, &ch.values, &ch.valid)?;
            Ok(Channel {
                name: ch.name.clone(),
                quantity: ch.quantity,
                values,
                valid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeriesSet::new(ts.t0, ts.fs, channels)
}

/// Fills masked holes by linear interpolation before filtering and re-masks
/// them (widened by the filter's edge support) afterwards.
fn filter_masked(
    sections: &[Biquad],
    values: &[f64],
    valid: &[bool],
) -> Result<(Vec<f64>, Vec<bool>)> {
    let n = values.len();
    let filled = if valid.iter().all(|v| *v) {
        values.to_vec()
    } else {
        interpolate_holes(values, valid)?
    };
    let out = sosfiltfilt(sections, &filled)?;
    let mut out_valid = valid.to_vec();
    if valid.iter().any(|v| !*v) {
        let widen = 12 * sections.len();
        for k in 0..n {
            if !valid[k] {
                let lo = k.saturating_sub(widen);
                let hi = (k + widen + 1).min(n);
                for item in out_valid.iter_mut().take(hi).skip(lo) {
                    *item = false;
                }
            }
        }
    }
    Ok((out, out_valid))
}

fn interpolate_holes(values: &[f64], valid: &[bool]) -> Result<Vec<f64>> {
    let n = values.len();
    let firsts: Vec<usize> = (0..n).filter(|&k| valid[k]).collect();
    if firsts.is_empty() {
        return Err(Error::InvalidInput("channel has no valid samples".into()));
    }
    let mut out = values.to_vec();
    let mut prev: Option<usize> = None;
    for k in 0..n {
        if valid[k] {
            if let Some(p) = prev {
                if k > p + 1 {
                    let span = (k - p) as f64;
                    for i in p + 1..k {
                        let w = (i - p) as f64 / span;
                        out[i] = values[p] * (1.0 - w) + values[k] * w;
                    }
                }
            }
            prev = Some(k);
        }
    }
    // Extend edges with the nearest valid value.
    let first = firsts[0];
    let last = *firsts.last().unwrap();
    for item in out.iter_mut().take(first) {
        *item = values[first];
    }
    for item in out.iter_mut().skip(last + 1) {
        *item = values[last];
    }
    Ok(out)
}

/// Anti-alias low-pass at 0.8 of the post-decimation Nyquist, then keeps
/// every `factor`-th sample. Masked regions propagate conservatively: an
/// output sample is masked when any input sample within the filter's main
/// support is masked.
pub fn decimate(ts: &TimeSeriesSet, factor: usize) -> Result<TimeSeriesSet> {
    if factor < 2 {
        return Err(Error::InvalidInput("decimation factor must be at least 2".into()));
    }
    let new_fs = ts.fs / factor as f64;
    let cutoff = 0.8 * new_fs / 2.0;
    let sections = butterworth(4, cutoff, ts.fs, FilterKind::Lowpass)?;
    let n = ts.n_samples();
    let support = 3 * factor;

    let channels = ts
        .channels
        .iter()
        .map(|ch| {
            let (filtered, valid) = filter_masked(&sections, &ch.values, &ch.valid)?;
            let mut values = Vec::with_capacity(n / factor + 1);
            let mut out_valid = Vec::with_capacity(n / factor + 1);
            let mut k = 0;
            while k < n {
                values.push(filtered[k]);
                let lo = k.saturating_sub(support);
                let hi = (k + support + 1).min(n);
                out_valid.push((lo..hi).all(|i| valid[i]));
                k += factor;
            }
            Ok(Channel {
                name: ch.name.clone(),
                quantity: ch.quantity,
                values,
                valid: out_valid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeriesSet::new(ts.t0, new_fs, channels)
}
