//! Band definitions and Butterworth band-pass filtering.
//!
//! Filters are realized as cascades of second-order sections for numerical
//! stability at high total order. Design follows the classical route:
//! analog Butterworth prototype, low-pass -> band-pass transformation with
//! prewarped edges, bilinear transform. The -3 dB points land exactly on
//! the requested band edges.

use crate::error::{Result, SteError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Uniformly sampled real-valued signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub fs: f64,
    pub label: String,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, fs: f64, label: impl Into<String>) -> Result<Self> {
        if fs <= 0.0 || !fs.is_finite() {
            return Err(SteError::Config(format!("sampling rate must be > 0, got {fs}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SteError::Config("series contains NaN or infinite values".into()));
        }
        Ok(TimeSeries { values, fs, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Frequency band in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(SteError::Config(format!("band must satisfy 0 < lo < hi, got {lo}:{hi}")));
        }
        Ok(BandSpec { name: name.into(), lo, hi })
    }

    /// Standard EEG band presets. Gamma is 30-45 Hz, the definition used by
    /// the simulation experiments (valid below Nyquist at fs = 128).
    pub fn preset(name: &str) -> Option<BandSpec> {
        let (lo, hi) = match name {
            "delta" => (0.5, 4.0),
            "theta" => (4.0, 8.0),
            "alpha" => (8.0, 12.0),
            "beta" => (12.0, 30.0),
            "gamma" => (30.0, 45.0),
            _ => return None,
        };
        Some(BandSpec { name: name.to_string(), lo, hi })
    }

    pub fn all_presets() -> Vec<BandSpec> {
        ["delta", "theta", "alpha", "beta", "gamma"]
            .iter()
            .map(|n| BandSpec::preset(n).unwrap())
            .collect()
    }

    pub fn validate_for(&self, fs: f64) -> Result<()> {
        if self.lo <= 0.0 || self.hi <= self.lo || self.hi >= fs / 2.0 {
            return Err(SteError::InvalidBand { lo: self.lo, hi: self.hi, fs });
        }
        Ok(())
    }
}

/// Band-pass filter configuration. `order` is the low-pass prototype order;
/// the realized band-pass filter has 2*order poles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub band: BandSpec,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn new(band: BandSpec) -> Self {
        FilterSpec { order: 4, band, zero_phase: true }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn causal(mut self) -> Self {
        self.zero_phase = false;
        self
    }
}

/// One biquad: y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3], // a[0] == 1
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub order: usize,
    pub zero_phase: bool,
}

impl SosFilter {
    /// Complex frequency response at `f` Hz for sampling rate `fs`.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f / fs;
        let z1 = Complex64::new(0.0, -w).exp();
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
            let den = s.a[0] + s.a[1] * z1 + s.a[2] * z2;
            h *= num / den;
        }
        h
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| {
            // poles of z^2 + a1 z + a2 inside the unit circle
            let a1 = s.a[1];
            let a2 = s.a[2];
            a2 < 1.0 - 1e-12 && a1.abs() < 1.0 + a2 + 1e-12
        })
    }
}

/// Design a digital Butterworth band-pass filter as second-order sections.
pub fn design_butterworth(spec: &FilterSpec, fs: f64) -> Result<SosFilter> {
    spec.band.validate_for(fs)?;
    if spec.order < 1 {
        return Err(SteError::Config("filter order must be >= 1".into()));
    }
    let n = spec.order;

    // Prewarped analog edge frequencies (bilinear constant 2*fs).
    let k = 2.0 * fs;
    let wl = k * (std::f64::consts::PI * spec.band.lo / fs).tan();
    let wu = k * (std::f64::consts::PI * spec.band.hi / fs).tan();
    let w0 = (wl * wu).sqrt();
    let bw = wu - wl;

    // Butterworth low-pass prototype poles on the unit left-half circle.
    let mut analog_poles: Vec<Complex64> = Vec::with_capacity(2 * n);
    for m in 1..=n {
        let theta = std::f64::consts::PI * (2.0 * m as f64 + n as f64 - 1.0) / (2.0 * n as f64);
        let p = Complex64::new(theta.cos(), theta.sin());
        // Low-pass -> band-pass: s_bp solves s^2 - bw*p*s + w0^2 = 0.
        let disc = (bw * p * bw * p - 4.0 * w0 * w0 * Complex64::new(1.0, 0.0)).sqrt();
        analog_poles.push((bw * p + disc) / 2.0);
        analog_poles.push((bw * p - disc) / 2.0);
    }

    // Bilinear transform of poles; n zeros at z=1 and n zeros at z=-1.
    let digital_poles: Vec<Complex64> = analog_poles
        .iter()
        .map(|s| (Complex64::new(k, 0.0) + s) / (Complex64::new(k, 0.0) - s))
        .collect();
    if digital_poles.iter().any(|p| p.norm() >= 1.0) {
        return Err(SteError::DesignFailure("pole on or outside the unit circle".into()));
    }

    // Sort poles by imaginary part magnitude so conjugates pair up, then by
    // real part for a reproducible ordering.
    let mut upper: Vec<Complex64> = digital_poles.iter().filter(|p| p.im > 0.0).cloned().collect();
    upper.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap()
            .then(a.re.partial_cmp(&b.re).unwrap())
    });
    if upper.len() != n {
        // Real poles can only arise from numerical degeneracy at extreme bands.
        return Err(SteError::DesignFailure("expected conjugate pole pairs".into()));
    }

    // Each section carries one zero at +1 and one at -1: numerator (z-1)(z+1).
    let mut sections: Vec<Biquad> = upper
        .iter()
        .map(|p| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        })
        .collect();

    // Normalize overall gain to 1 at the digital center frequency.
    let fc = (w0 / k).atan() * fs / std::f64::consts::PI;
    let raw = SosFilter { sections: sections.clone(), order: n, zero_phase: spec.zero_phase };
    let g = raw.response(fc, fs).norm();
    if !(g.is_finite() && g > 0.0) {
        return Err(SteError::DesignFailure("degenerate gain at center frequency".into()));
    }
    let per_section = (1.0 / g).powf(1.0 / n as f64);
    for s in &mut sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }

    let filter = SosFilter { sections, order: n, zero_phase: spec.zero_phase };
    if !filter.is_stable() {
        return Err(SteError::DesignFailure("unstable section".into()));
    }
    Ok(filter)
}

/// Steady-state DF2T state for a unit-step input, used to suppress start-up
/// transients (same role as scipy's lfilter_zi).
fn section_zi(s: &Biquad) -> [f64; 2] {
    let b = s.b;
    let a = s.a;
    // Solve (I - A^T) zi = B where the DF2T update is
    //   z1' = b1 x - a1 y + z2,  z2' = b2 x - a2 y,  y = b0 x + z1.
    // With x = 1, y = H(1):
    let h1 = (b[0] + b[1] + b[2]) / (1.0 + a[1] + a[2]);
    let z2 = b[2] - a[2] * h1;
    let z1 = b[1] - a[1] * h1 + z2;
    [z1, z2]
}

fn sosfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in sections {
        let zi = section_zi(s);
        let x0 = y.first().copied().unwrap_or(0.0);
        let mut z1 = zi[0] * x0;
        let mut z2 = zi[1] * x0;
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b[0] * xin + z1;
            z1 = s.b[1] * xin - s.a[1] * out + z2;
            z2 = s.b[2] * xin - s.a[2] * out;
            *v = out;
        }
    }
    y
}

/// Apply the filter to a series. Zero-phase mode filters forward then
/// backward over an odd-reflection padded copy, so phase distortion is zero
/// and edge transients stay inside the discarded pad.
pub fn filter_band(x: &TimeSeries, spec: &FilterSpec) -> Result<TimeSeries> {
    let filt = design_butterworth(spec, x.fs)?;
    apply_filter(x, &filt)
}

pub fn apply_filter(x: &TimeSeries, filt: &SosFilter) -> Result<TimeSeries> {
    let n = x.len();
    let min_len = 3 * filt.order;
    if n <= min_len {
        return Err(SteError::TooShort { need: min_len + 1, got: n });
    }
    let values = if filt.zero_phase {
        let padlen = (3 * (2 * filt.order + 1)).min(n - 1);
        let mut padded = Vec::with_capacity(n + 2 * padlen);
        let first = x.values[0];
        let last = x.values[n - 1];
        for i in (1..=padlen).rev() {
            padded.push(2.0 * first - x.values[i]);
        }
        padded.extend_from_slice(&x.values);
        for i in 1..=padlen {
            padded.push(2.0 * last - x.values[n - 1 - i]);
        }
        let mut fwd = sosfilt(&filt.sections, &padded);
        fwd.reverse();
        let mut back = sosfilt(&filt.sections, &fwd);
        back.reverse();
        back[padlen..padlen + n].to_vec()
    } else {
        sosfilt(&filt.sections, &x.values)
    };
    TimeSeries::new(values, x.fs, x.label.clone())
}
