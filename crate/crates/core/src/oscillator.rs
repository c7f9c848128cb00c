//! The oscillator stage: an affine map followed by a learnable mixture of
//! fixed-frequency sines, `z = sum_i a_i sin(w_i (W0 x + b0))`.
//!
//! The frequencies are fixed for the lifetime of a model. The amplitudes are
//! `K` global scalars (one per basis, shared by all hidden units) and are
//! trainable unless the model freezes them.

use crate::error::{ModelError, TensorError};
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::ValueGrid;

/// Multi-resolution basis used when a config does not override it.
pub const DEFAULT_FREQUENCIES: [f64; 3] = [8.0, 40.0, 120.0];

/// Largest supported number of sine bases.
pub const MAX_BASES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorParams {
    pub w0: ParamId,
    pub b0: ParamId,
    pub amplitudes: ParamId,
    pub frequencies: Vec<f64>,
}

pub fn validate_frequencies(frequencies: &[f64]) -> Result<(), ModelError> {
    if frequencies.is_empty() || frequencies.len() > MAX_BASES {
        return Err(ModelError::InvalidConfig {
            field: "omegas",
            reason: format!("need 1..={MAX_BASES} frequencies, got {}", frequencies.len()),
        });
    }
    if let Some(bad) = frequencies.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(ModelError::InvalidConfig {
            field: "omegas",
            reason: format!("frequencies must be finite and positive, got {bad}"),
        });
    }
    Ok(())
}

impl OscillatorParams {
    /// Appends `oscillator.*` arrays to `store`.
    ///
    /// `W0 ~ U(±1/in_dim)`, `b0 ~ U(±1/sqrt(in_dim))`, `a_i = 1/K`.
    pub fn init(
        store: &mut ParamStore,
        in_dim: usize,
        hidden: usize,
        frequencies: &[f64],
        learnable_amplitudes: bool,
        rng: &mut Rng,
    ) -> Result<Self, ModelError> {
        validate_frequencies(frequencies)?;
        let k = frequencies.len();
        let w0 = store.push_uniform("oscillator.w0", hidden, in_dim, 1.0 / in_dim as f64, rng);
        let b0 = store.push_uniform("oscillator.b0", hidden, 1, 1.0 / (in_dim as f64).sqrt(), rng);
        let amplitudes = store.push(
            "oscillator.amplitudes",
            ValueGrid::filled(k, 1, 1.0 / k as f64),
            learnable_amplitudes,
        );
        Ok(Self {
            w0,
            b0,
            amplitudes,
            frequencies: frequencies.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.frequencies.len()
    }

    pub fn hidden(&self, store: &ParamStore) -> usize {
        store.get(self.w0).value.rows()
    }

    pub fn amplitudes_learnable(&self, store: &ParamStore) -> bool {
        store.get(self.amplitudes).trainable
    }
}

/// Pre-activation `W0 x + b0`.
pub fn oscillator_preactivation(
    tape: &mut Tape,
    bound: &BoundParams,
    p: &OscillatorParams,
    x: NodeId,
) -> Result<NodeId, TensorError> {
    tape.affine(bound.node(p.w0), x, bound.node(p.b0))
}

/// `hidden x N` oscillator output for `in_dim x N` coordinates.
pub fn oscillator_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    p: &OscillatorParams,
    x: NodeId,
) -> Result<NodeId, TensorError> {
    let v = oscillator_preactivation(tape, bound, p, x)?;
    tape.sine_mixture(v, bound.node(p.amplitudes), &p.frequencies)
}

/// `dL/da_i = <sin(w_i v), upstream>` computed directly from the
/// pre-activation `v` and the gradient arriving at the oscillator output.
pub fn amplitude_gradients(p: &OscillatorParams, preactivation: &ValueGrid, upstream: &ValueGrid) -> Vec<f64> {
    p.frequencies
        .iter()
        .map(|&w| {
            preactivation
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(&v, &g)| (w * v).sin() * g)
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_unit(frequencies: &[f64], amps: &[f64], learnable: bool) -> (ParamStore, OscillatorParams) {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(0);
        let p = OscillatorParams::init(&mut store, 1, 1, frequencies, learnable, &mut rng).unwrap();
        store.get_mut(p.w0).value = ValueGrid::scalar(1.0);
        store.get_mut(p.b0).value = ValueGrid::scalar(0.0);
        store.get_mut(p.amplitudes).value = ValueGrid::column(amps);
        (store, p)
    }

    #[test]
    fn zero_preactivation_gives_zero_output() {
        let (mut store, p) = single_unit(&DEFAULT_FREQUENCIES, &[0.3, -2.0, 5.0], true);
        store.get_mut(p.w0).value = ValueGrid::scalar(0.0);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(ValueGrid::from_rows(&[&[-1.0, 0.2, 0.9]]));
        let z = oscillator_forward(&mut tape, &bound, &p, x).unwrap();
        assert!(tape.value(z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_basis_at_quarter_period() {
        let (store, p) = single_unit(&DEFAULT_FREQUENCIES, &[1.0, 0.0, 0.0], true);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(ValueGrid::scalar(std::f64::consts::PI / 16.0));
        let z = oscillator_forward(&mut tape, &bound, &p, x).unwrap();
        assert!((tape.value(z).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_initialization() {
        let mut store = ParamStore::new();
        let p = OscillatorParams::init(&mut store, 2, 16, &DEFAULT_FREQUENCIES, true, &mut Rng::new(3)).unwrap();
        assert_eq!(p.k(), 3);
        assert_eq!(store.get(p.amplitudes).value.data(), &[1.0 / 3.0; 3]);
        assert!(store.get(p.w0).value.data().iter().all(|v| v.abs() <= 0.5));
        assert_eq!(store.trainable_count(), 2 * 16 + 16 + 3);
    }

    #[test]
    fn frozen_amplitudes_are_not_counted() {
        let mut learn = ParamStore::new();
        OscillatorParams::init(&mut learn, 2, 8, &DEFAULT_FREQUENCIES, true, &mut Rng::new(0)).unwrap();
        let mut frozen = ParamStore::new();
        OscillatorParams::init(&mut frozen, 2, 8, &DEFAULT_FREQUENCIES, false, &mut Rng::new(0)).unwrap();
        assert_eq!(learn.trainable_count(), frozen.trainable_count() + 3);
    }

    #[test]
    fn rejects_bad_frequencies() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(0);
        for bad in [&[][..], &[1.0, -2.0], &[0.0], &[1.0; 9]] {
            let err = OscillatorParams::init(&mut store, 2, 4, bad, true, &mut rng).unwrap_err();
            assert!(matches!(err, ModelError::InvalidConfig { field: "omegas", .. }));
        }
    }

    #[test]
    fn amplitude_gradient_zero_upstream() {
        let (store, p) = single_unit(&DEFAULT_FREQUENCIES, &[1.0, 1.0, 1.0], true);
        let v = ValueGrid::from_rows(&[&[0.1, 0.7]]);
        let g = amplitude_gradients(&p, &v, &ValueGrid::zeros(1, 2));
        assert_eq!(g, vec![0.0; 3]);
        assert!(store.get(p.amplitudes).trainable);
    }

    #[test]
    fn single_basis_amplitude_gradient_is_sum_of_sines() {
        // L = sum(a sin(w v)) -> dL/da = sum(sin(w v))
        let (store, p) = single_unit(&[8.0], &[0.7], true);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xs = [-0.9, -0.1, 0.3, 0.8];
        let x = tape.constant(ValueGrid::from_rows(&[&xs]));
        let z = oscillator_forward(&mut tape, &bound, &p, x).unwrap();
        let loss = tape.sum(z);
        let g = tape.backward(loss).unwrap().wrt(bound.node(p.amplitudes));
        let expect: f64 = xs.iter().map(|x| (8.0 * x).sin()).sum();
        assert!((g.item() - expect).abs() < 1e-13);
    }
}
