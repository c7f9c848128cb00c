//! Radix-2 FFT, one-sided magnitude spectra and peak picking.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::error::SignalError;

/// In-place iterative radix-2 decimation-in-time FFT (forward, unnormalized).
///
/// `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    // twiddles exp(-2 pi i k / n), k < n/2, each from a direct sin/cos call
    let (tw_re, tw_im): (Vec<f64>, Vec<f64>) = (0..n / 2)
        .map(|k| {
            let a = -TAU * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wr, wi) = (tw_re[k * stride], tw_im[k * stride]);
                let (a, b) = (start + k, start + k + half);
                let xr = re[b] * wr - im[b] * wi;
                let xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
        len <<= 1;
    }
}

/// One-sided magnitude spectrum.
///
/// Magnitudes are RMS amplitudes: a tone `A sin(2 pi f t)` on a bin shows up
/// as `A / sqrt(2)`, a constant `c` as `|c|`, and the squared magnitudes sum
/// to the mean power of the (zero-padded) signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Transform length after zero padding.
    pub fft_len: usize,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Sum of squared magnitudes (mean power of the padded signal).
    pub fn power(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }

    /// Index of the bin nearest to `freq`.
    pub fn bin_of(&self, freq: f64) -> usize {
        let w = self.bin_width();
        if w == 0.0 {
            return 0;
        }
        ((freq / w).round().max(0.0) as usize).min(self.magnitudes.len() - 1)
    }

    /// Power in the bins within `radius` of the bin nearest to `freq`.
    pub fn power_near(&self, freq: f64, radius: usize) -> f64 {
        let c = self.bin_of(freq);
        let lo = c.saturating_sub(radius);
        let hi = (c + radius).min(self.magnitudes.len() - 1);
        self.magnitudes[lo..=hi].iter().map(|m| m * m).sum()
    }

    /// Two-column text: frequency and magnitude, one bin per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# frequency magnitude\n");
        for (f, m) in self.frequencies.iter().zip(&self.magnitudes) {
            let _ = writeln!(out, "{f:.9e} {m:.9e}");
        }
        out
    }
}

/// Spectrum of uniformly spaced real samples; the frequency axis is in
/// cycles per unit of `sample_spacing`. Inputs whose length is not a power
/// of two are zero-padded.
pub fn spectrum_1d(samples: &[f64], sample_spacing: f64) -> Result<Spectrum, SignalError> {
    if samples.is_empty() {
        return Err(SignalError::EmptySignal);
    }
    let n = samples.len().next_power_of_two();
    let mut re = samples.to_vec();
    re.resize(n, 0.0);
    let mut im = vec![0.0; n];
    fft_in_place(&mut re, &mut im);
    let bins = n / 2 + 1;
    let scale = 1.0 / n as f64;
    let magnitudes = (0..bins)
        .map(|k| {
            let m = re[k].hypot(im[k]) * scale;
            if k == 0 || (k == n / 2 && n > 1) {
                m
            } else {
                m * std::f64::consts::SQRT_2
            }
        })
        .collect();
    let df = 1.0 / (n as f64 * sample_spacing);
    let frequencies = (0..bins).map(|k| k as f64 * df).collect();
    Ok(Spectrum {
        frequencies,
        magnitudes,
        fft_len: n,
    })
}

/// Frequencies of local maxima whose level is above `floor_db` relative to
/// the largest magnitude; maxima in adjacent bins are merged into the larger.
pub fn peak_frequencies(s: &Spectrum, floor_db: f64) -> Vec<f64> {
    let mags = &s.magnitudes;
    let max = s.max_magnitude();
    if max == 0.0 || mags.is_empty() {
        return Vec::new();
    }
    let threshold = max * 10f64.powf(floor_db / 20.0);
    let last = mags.len() - 1;
    let mut peaks: Vec<usize> = Vec::new();
    for k in 0..=last {
        let m = mags[k];
        if m <= threshold {
            continue;
        }
        let left_ok = k == 0 || m >= mags[k - 1];
        let right_ok = k == last || m >= mags[k + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        match peaks.last_mut() {
            Some(prev) if k - *prev <= 1 => {
                if m > mags[*prev] {
                    *prev = k;
                }
            }
            _ => peaks.push(k),
        }
    }
    peaks.into_iter().map(|k| s.frequencies[k]).collect()
}
