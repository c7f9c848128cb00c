//! One-dimensional spectral checks of the frequency-mixing behaviour of
//! sine compositions, products, squares and the model's building blocks.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::filter::{combine, harmonic_probe, square_probe, Combine};
use crate::oscillator::{oscillator_forward, OscillatorParams, DEFAULT_FREQUENCIES};
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::signal::spectrum::{peak_frequencies, spectrum_1d, Spectrum};
use crate::tape::Tape;
use crate::tensor::ValueGrid;

/// Peaks below this level (relative to the strongest bin) are ignored. The
/// fifth harmonic of `sin(sin(x))` sits near -72 dB.
pub const PEAK_FLOOR_DB: f64 = -80.0;
/// Floor for the pure-tone mixing checks.
pub const MIXING_FLOOR_DB: f64 = -60.0;
/// Largest allowed ratio of even-harmonic to fundamental power.
pub const EVEN_HARMONIC_LIMIT: f64 = 1e-4;

const TONE_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Serialize)]
pub struct ProbeCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ProbeSuite {
    pub checks: Vec<ProbeCheck>,
    /// Named spectra for export.
    pub spectra: Vec<(String, Spectrum)>,
}

impl ProbeSuite {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn tone(freq: f64) -> Vec<f64> {
    (0..TONE_SAMPLES)
        .map(|i| (TAU * freq * i as f64 / TONE_SAMPLES as f64).sin())
        .collect()
}

fn unit_spectrum(samples: &[f64]) -> Spectrum {
    spectrum_1d(samples, 1.0 / samples.len() as f64).expect("non-empty probe")
}

fn close(a: f64, b: f64, bin: f64) -> bool {
    (a - b).abs() <= bin * (1.0 + 1e-9)
}

fn matches_exactly(peaks: &[f64], expected: &[f64], bin: f64) -> bool {
    peaks.len() == expected.len() && peaks.iter().zip(expected).all(|(&p, &e)| close(p, e, bin))
}

fn fmt_peaks(peaks: &[f64]) -> String {
    let parts: Vec<String> = peaks.iter().map(|p| format!("{p:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Odd harmonics present and even harmonics absent for a `depth`-fold sine
/// composition; a single peak for `depth == 1`.
pub fn check_harmonics(omega: f64, depth: usize) -> (ProbeCheck, Spectrum) {
    let s = harmonic_probe(omega, depth);
    let f = omega / TAU;
    let bin = s.bin_width();
    let peaks = peak_frequencies(&s, PEAK_FLOOR_DB);
    let (passed, detail) = if depth == 1 {
        (
            matches_exactly(&peaks, &[f], bin),
            format!("peaks {} expected single peak at {f:.4}", fmt_peaks(&peaks)),
        )
    } else {
        let odd_present = [1.0, 3.0, 5.0].iter().all(|k| peaks.iter().any(|&p| close(p, k * f, bin)));
        let fundamental = s.power_near(f, 1);
        let even: f64 = (1..)
            .map(|k| 2.0 * k as f64 * f)
            .take_while(|&fr| fr <= *s.frequencies.last().unwrap_or(&0.0))
            .map(|fr| s.power_near(fr, 1))
            .sum();
        let ratio = even / fundamental;
        (
            odd_present && ratio < EVEN_HARMONIC_LIMIT,
            format!(
                "peaks {} expected f, 3f, 5f with f={f:.4}; even/fundamental power {ratio:.3e}",
                fmt_peaks(&peaks)
            ),
        )
    };
    (
        ProbeCheck {
            name: format!("harmonics depth={depth}"),
            passed,
            detail,
        },
        s,
    )
}

/// Product of two tones moves energy to the sum and difference frequencies.
pub fn check_product(f1: f64, f2: f64) -> (ProbeCheck, Spectrum) {
    let x: Vec<f64> = tone(f1).iter().zip(tone(f2)).map(|(a, b)| a * b).collect();
    let s = unit_spectrum(&x);
    let peaks = peak_frequencies(&s, MIXING_FLOOR_DB);
    let expected = [(f1 - f2).abs(), f1 + f2];
    let check = ProbeCheck {
        name: "product of tones".into(),
        passed: matches_exactly(&peaks, &expected, s.bin_width()),
        detail: format!("peaks {} expected {}", fmt_peaks(&peaks), fmt_peaks(&expected)),
    };
    (check, s)
}

/// Sum of two tones introduces no new frequencies.
pub fn check_sum(f1: f64, f2: f64) -> (ProbeCheck, Spectrum) {
    let x: Vec<f64> = tone(f1).iter().zip(tone(f2)).map(|(a, b)| a + b).collect();
    let s = unit_spectrum(&x);
    let peaks = peak_frequencies(&s, MIXING_FLOOR_DB);
    let mut expected = [f1, f2];
    expected.sort_by(f64::total_cmp);
    let check = ProbeCheck {
        name: "sum of tones".into(),
        passed: matches_exactly(&peaks, &expected, s.bin_width()),
        detail: format!("peaks {} expected {}", fmt_peaks(&peaks), fmt_peaks(&expected)),
    };
    (check, s)
}

/// `sin^2` of a tone has energy only at DC and twice the frequency.
pub fn check_square(omega: f64) -> (ProbeCheck, Spectrum) {
    let s = square_probe(omega);
    let f = omega / TAU;
    let peaks = peak_frequencies(&s, MIXING_FLOOR_DB);
    let check = ProbeCheck {
        name: "self-mask square".into(),
        passed: matches_exactly(&peaks, &[0.0, 2.0 * f], s.bin_width()),
        detail: format!("peaks {} expected [0, {:.4}]", fmt_peaks(&peaks), 2.0 * f),
    };
    (check, s)
}

/// Runs the filter `combine` step on a main tone `f1` and a mask tone `f2`.
pub fn check_combine(how: Combine, f1: f64, f2: f64) -> (ProbeCheck, Spectrum) {
    let mut tape = Tape::new();
    let z = tape.constant(ValueGrid::from_vec(1, TONE_SAMPLES, tone(f1)).expect("row"));
    let m = tape.constant(ValueGrid::from_vec(1, TONE_SAMPLES, tone(f2)).expect("row"));
    let out = combine(&mut tape, how, z, m).expect("same shape");
    let s = unit_spectrum(tape.value(out).data());
    let peaks = peak_frequencies(&s, MIXING_FLOOR_DB);
    let bin = s.bin_width();
    let inputs = [f1, f2];
    let (passed, expected) = match how {
        Combine::Multiply => {
            let expected = [(f1 - f2).abs(), f1 + f2];
            let new_only = peaks.iter().all(|&p| !inputs.iter().any(|&i| close(p, i, bin)));
            (matches_exactly(&peaks, &expected, bin) && new_only, expected)
        }
        Combine::Add => (peaks.iter().all(|&p| inputs.iter().any(|&i| close(p, i, bin))), inputs),
    };
    let check = ProbeCheck {
        name: format!("filter combine={how}"),
        passed,
        detail: format!("peaks {} expected {}", fmt_peaks(&peaks), fmt_peaks(&expected)),
    };
    (check, s)
}

/// A one-unit oscillator with `W0 = 1`, `b0 = 0` over `[0, 2pi)` shows one
/// peak per basis frequency.
pub fn check_oscillator(frequencies: &[f64]) -> (ProbeCheck, Spectrum) {
    let mut store = ParamStore::new();
    let p = OscillatorParams::init(&mut store, 1, 1, frequencies, true, &mut Rng::new(0)).expect("valid frequencies");
    store.get_mut(p.w0).value = ValueGrid::scalar(1.0);
    store.get_mut(p.b0).value = ValueGrid::scalar(0.0);
    let n = 4096;
    let t: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let x = tape.constant(ValueGrid::from_vec(1, n, t).expect("row"));
    let out = oscillator_forward(&mut tape, &bound, &p, x).expect("shapes");
    let s = spectrum_1d(tape.value(out).data(), TAU / n as f64).expect("non-empty");
    let peaks = peak_frequencies(&s, MIXING_FLOOR_DB);
    let mut expected: Vec<f64> = frequencies.iter().map(|w| w / TAU).collect();
    expected.sort_by(f64::total_cmp);
    let check = ProbeCheck {
        name: "oscillator basis".into(),
        passed: matches_exactly(&peaks, &expected, s.bin_width()),
        detail: format!("peaks {} expected {}", fmt_peaks(&peaks), fmt_peaks(&expected)),
    };
    (check, s)
}

/// The full suite: harmonics at `depth`, tone mixing with 3 and 10 cycles,
/// squaring, both combine modes and the default oscillator basis.
pub fn run_probe_suite(omega: f64, depth: usize) -> ProbeSuite {
    let runs = [
        ("harmonics", check_harmonics(omega, depth)),
        ("product", check_product(3.0, 10.0)),
        ("sum", check_sum(3.0, 10.0)),
        ("square", check_square(omega)),
        ("combine_mul", check_combine(Combine::Multiply, 10.0, 3.0)),
        ("combine_add", check_combine(Combine::Add, 10.0, 3.0)),
        ("oscillator", check_oscillator(&DEFAULT_FREQUENCIES)),
    ];
    let mut checks = Vec::new();
    let mut spectra = Vec::new();
    for (name, (check, spectrum)) in runs {
        checks.push(check);
        spectra.push((name.to_string(), spectrum));
    }
    ProbeSuite { checks, spectra }
}
