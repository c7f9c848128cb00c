//! Finite-difference gradients and comparison against reverse mode.

use serde::Serialize;

use crate::error::ModelError;
use crate::model::Model;
use crate::tape::Tape;
use crate::tensor::ValueGrid;

/// Default step for [`finite_diff_grad`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// Acceptance threshold on the worst relative error.
pub const TOLERANCE: f64 = 1e-5;

/// Denominator floor for [`relative_error`].
///
/// Differences of an O(1) loss carry roughly `eps * |L| / h`, about 1e-11, of
/// round-off. Components smaller than this floor are compared in absolute
/// terms against it instead of against themselves, so at the default
/// tolerance they must agree to 1e-10.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every coordinate of `theta`.
pub fn finite_diff_grad<E>(
    mut f: impl FnMut(&ValueGrid) -> Result<f64, E>,
    theta: &ValueGrid,
    h: f64,
) -> Result<ValueGrid, E> {
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = theta.clone();
    let mut out = ValueGrid::zeros(theta.rows(), theta.cols());
    for i in 0..theta.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(out)
}

/// Richardson-extrapolated central difference, `(4 D(h/2) - D(h)) / 3`.
///
/// Plain central differences carry a truncation error of `h^2 f''' / 6`. With
/// sine frequencies up to 120 inside the model that term alone reaches 1e-5
/// relative at `h = 1e-5`; the extrapolation cancels it and leaves an
/// `O(h^4)` remainder.
pub fn extrapolated_diff_grad<E>(
    mut f: impl FnMut(&ValueGrid) -> Result<f64, E>,
    theta: &ValueGrid,
    h: f64,
) -> Result<ValueGrid, E> {
    let coarse = finite_diff_grad(&mut f, theta, h)?;
    let fine = finite_diff_grad(&mut f, theta, h / 2.0)?;
    Ok(ValueGrid::from_fn(theta.rows(), theta.cols(), |r, c| {
        (4.0 * fine.get(r, c) - coarse.get(r, c)) / 3.0
    }))
}

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(RELATIVE_FLOOR);
    (a - b).abs() / denom
}

/// Worst relative error between two equally shaped grids, with its index.
pub fn max_relative_error(analytic: &ValueGrid, numeric: &ValueGrid) -> (f64, usize) {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .enumerate()
        .map(|(i, (&a, &n))| (relative_error(a, n), i))
        .fold((0.0, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
}

/// Worst offender within one named parameter array.
#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub architecture: String,
    pub parameter_count: usize,
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Deliberate corruption of the reverse-mode result, used as a negative
/// control for the checker itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectedFault {
    pub param: usize,
    pub scale: f64,
}

/// Compares reverse-mode and finite-difference gradients of the MSE loss for
/// every trainable parameter of `model`.
pub fn check_model(
    model: &Model,
    coords: &ValueGrid,
    targets: &ValueGrid,
    h: f64,
    fault: Option<InjectedFault>,
) -> Result<GradCheckReport, ModelError> {
    let (_, mut analytic) = model.loss_and_gradients(coords, targets)?;
    if let Some(f) = fault {
        if let Some(g) = analytic.get_mut(f.param) {
            g.scale_in_place(f.scale);
            g.data_mut().iter_mut().for_each(|v| *v += f.scale * 1e-3);
        }
    }
    let mut params = Vec::new();
    let mut probe = model.clone();
    for (idx, param) in model.params().iter().enumerate() {
        if !param.trainable {
            continue;
        }
        let numeric = extrapolated_diff_grad(
            |theta| {
                probe.params_mut()[idx].value = theta.clone();
                probe.loss(coords, targets)
            },
            &param.value,
            h,
        )?;
        probe.params_mut()[idx].value = param.value.clone();
        let grad = &analytic[idx];
        let (err, index) = max_relative_error(grad, &numeric);
        params.push(ParamCheck {
            name: param.name.clone(),
            max_rel_error: err,
            index,
            analytic: grad.data()[index],
            numeric: numeric.data()[index],
        });
    }
    let max_rel_error = params.iter().fold(0.0f64, |m, p| m.max(p.max_rel_error));
    Ok(GradCheckReport {
        architecture: model.config().arch.to_string(),
        parameter_count: model.parameter_count(),
        params,
        max_rel_error,
        passed: max_rel_error <= TOLERANCE,
    })
}

/// The architectures covered by the standard gradient check, labelled.
pub fn suite_configs(hidden: usize, seed: u64) -> Vec<(String, crate::model::ModelConfig)> {
    use crate::filter::Combine;
    use crate::model::{Architecture, ModelConfig};
    let smn = ModelConfig {
        seed,
        ..ModelConfig::smn(hidden)
    };
    let mut out = vec![
        ("smn".to_string(), smn.clone()),
        (
            "smn-add".to_string(),
            ModelConfig {
                combine: vec![Combine::Add],
                ..smn
            },
        ),
    ];
    for arch in [Architecture::Mlp, Architecture::Siren, Architecture::Gauss] {
        out.push((
            arch.to_string(),
            ModelConfig {
                seed,
                ..ModelConfig::baseline(arch, hidden)
            },
        ));
    }
    out
}

/// Small random regression batch: `n` coordinates in `[-1, 1]` and targets
/// in `[0, 1]`.
pub fn random_batch(in_dim: usize, out_dim: usize, n: usize, seed: u64) -> (ValueGrid, ValueGrid) {
    let mut rng = crate::rng::Rng::new(seed).fork(0x6772_6164);
    let coords = ValueGrid::from_fn(in_dim, n, |_, _| rng.symmetric(1.0));
    let targets = ValueGrid::from_fn(out_dim, n, |_, _| rng.next_f64());
    (coords, targets)
}

/// Finite-difference gradient of a scalar built on a fresh tape, with the
/// grid under test registered as the tape's first node.
pub fn tape_finite_diff(
    theta: &ValueGrid,
    h: f64,
    build: impl Fn(&mut Tape, crate::tape::NodeId) -> crate::tape::NodeId,
) -> ValueGrid {
    finite_diff_grad::<std::convert::Infallible>(
        |t| {
            let mut tape = Tape::new();
            let x = tape.constant(t.clone());
            let out = build(&mut tape, x);
            Ok(tape.value(out).item())
        },
        theta,
        h,
    )
    .unwrap_or_else(|e| match e {})
}
