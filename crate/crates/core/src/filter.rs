//! The filter stage: a main pathway modulated by a parallel mask pathway.
//!
//! The mask pathway is seeded once from the oscillator output and then
//! evolves only through its own `mod` layers. Each filter module:
//!
//! 1. adds the current mask to the main signal,
//! 2. runs the main layer `z = sin(W_main (z + m) + b_main)`,
//! 3. advances the mask one layer ahead `m = sin(W_mod m + b_mod)`,
//! 4. combines `z = z * m` (or `z + m` for the additive variant).
//!
//! After the last module an optional parameter-free self-mask squares the
//! signal elementwise.

use serde::{Deserialize, Serialize};

use crate::error::TensorError;
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::rng::Rng;
use crate::signal::spectrum::{spectrum_1d, Spectrum};
use crate::tape::{NodeId, Tape};

/// How a module merges the evolved mask into the main pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub enum Combine {
    #[default]
    #[serde(rename = "mul", alias = "multiply")]
    Multiply,
    #[serde(rename = "add")]
    Add,
}

impl std::fmt::Display for Combine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Combine::Multiply => "mul",
            Combine::Add => "add",
        })
    }
}

impl std::str::FromStr for Combine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mul" | "multiply" => Ok(Combine::Multiply),
            "add" => Ok(Combine::Add),
            other => Err(format!("unknown combine `{other}` (expected mul or add)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSeedParams {
    pub w_mask: ParamId,
    pub b_mask: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterModuleParams {
    pub w_main: ParamId,
    pub b_main: ParamId,
    pub w_mod: ParamId,
    pub b_mod: ParamId,
    pub combine: Combine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterStackConfig {
    pub num_modules: usize,
    pub self_mask: bool,
    pub hidden: usize,
}

/// Trainable scalars in a stack of `num_modules` modules: the mask seed plus
/// a main and a mod layer per module. An empty stack has no seed.
pub fn stack_parameter_count(hidden: usize, num_modules: usize) -> usize {
    if num_modules == 0 {
        0
    } else {
        hidden * (hidden + 1) * (1 + 2 * num_modules)
    }
}

fn push_layer(store: &mut ParamStore, name: &str, hidden: usize, rng: &mut Rng) -> (ParamId, ParamId) {
    let w = store.push_uniform(format!("{name}.w"), hidden, hidden, (6.0 / hidden as f64).sqrt(), rng);
    let b = store.push_uniform(format!("{name}.b"), hidden, 1, 1.0 / (hidden as f64).sqrt(), rng);
    (w, b)
}

/// Appends `filter.*` arrays to `store`. `combines` gives one flag per
/// module; missing entries default to multiply.
pub fn init_filter_stack(
    store: &mut ParamStore,
    cfg: &FilterStackConfig,
    combines: &[Combine],
    rng: &mut Rng,
) -> (Option<MaskSeedParams>, Vec<FilterModuleParams>) {
    if cfg.num_modules == 0 {
        return (None, Vec::new());
    }
    let (w_mask, b_mask) = push_layer(store, "filter.mask_seed", cfg.hidden, rng);
    let modules = (0..cfg.num_modules)
        .map(|i| {
            let (w_main, b_main) = push_layer(store, &format!("filter.{i}.main"), cfg.hidden, rng);
            let (w_mod, b_mod) = push_layer(store, &format!("filter.{i}.mod"), cfg.hidden, rng);
            FilterModuleParams {
                w_main,
                b_main,
                w_mod,
                b_mod,
                combine: combines.get(i).copied().unwrap_or_default(),
            }
        })
        .collect();
    (Some(MaskSeedParams { w_mask, b_mask }), modules)
}

pub fn combine(tape: &mut Tape, how: Combine, z: NodeId, m: NodeId) -> Result<NodeId, TensorError> {
    match how {
        Combine::Multiply => tape.mul(z, m),
        Combine::Add => tape.add(z, m),
    }
}

/// Runs the dual-pathway stack on the oscillator output `z_osc`.
pub fn filter_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    seed: Option<&MaskSeedParams>,
    modules: &[FilterModuleParams],
    cfg: &FilterStackConfig,
    z_osc: NodeId,
) -> Result<NodeId, TensorError> {
    let (rows, cols) = tape.value(z_osc).shape();
    if rows != cfg.hidden {
        return Err(TensorError::Shape {
            op: "filter_forward",
            left: (rows, cols),
            right: (cfg.hidden, cols),
        });
    }
    let mut z = z_osc;
    if let Some(seed) = seed.filter(|_| !modules.is_empty()) {
        let pre = tape.affine(bound.node(seed.w_mask), z, bound.node(seed.b_mask))?;
        let mut m = tape.sin(pre);
        for module in modules {
            let modulated = tape.add(z, m)?;
            let pre = tape.affine(bound.node(module.w_main), modulated, bound.node(module.b_main))?;
            let main = tape.sin(pre);
            let pre = tape.affine(bound.node(module.w_mod), m, bound.node(module.b_mod))?;
            m = tape.sin(pre);
            z = combine(tape, module.combine, main, m)?;
        }
    }
    if cfg.self_mask {
        z = tape.square(z);
    }
    Ok(z)
}

/// Same parameters, every module switched to additive combination.
pub fn make_smn_add_variant(modules: &[FilterModuleParams]) -> Vec<FilterModuleParams> {
    modules
        .iter()
        .map(|m| FilterModuleParams {
            combine: Combine::Add,
            ..m.clone()
        })
        .collect()
}

/// Whole periods of the fundamental covered by a probe window.
pub const PROBE_PERIODS: usize = 8;
/// Samples per probe window.
pub const PROBE_SAMPLES: usize = 4096;

/// Sample grid for spectral probes: `PROBE_SAMPLES` points spanning exactly
/// `PROBE_PERIODS` periods of `sin(omega t)`, so tones sit on FFT bins.
/// Returns the sample times and the spacing.
pub fn probe_grid(omega: f64) -> (Vec<f64>, f64) {
    let span = PROBE_PERIODS as f64 * std::f64::consts::TAU / omega;
    let dt = span / PROBE_SAMPLES as f64;
    ((0..PROBE_SAMPLES).map(|i| i as f64 * dt).collect(), dt)
}

/// Magnitude spectrum of `sin(sin(...sin(omega t)))` with `depth` nested
/// sines. Frequencies are in cycles per unit, so the fundamental sits at
/// `omega / 2pi`.
pub fn harmonic_probe(omega: f64, depth: usize) -> Spectrum {
    assert!(omega > 0.0 && depth >= 1, "harmonic_probe needs omega > 0 and depth >= 1");
    let (t, dt) = probe_grid(omega);
    let samples: Vec<f64> = t
        .iter()
        .map(|&t| (1..depth).fold((omega * t).sin(), |acc, _| acc.sin()))
        .collect();
    spectrum_1d(&samples, dt).expect("probe grid is non-empty")
}

/// Magnitude spectrum of the self-mask applied to a pure tone, `sin^2(omega t)`.
pub fn square_probe(omega: f64) -> Spectrum {
    let (t, dt) = probe_grid(omega);
    let samples: Vec<f64> = t.iter().map(|&t| (omega * t).sin().powi(2)).collect();
    spectrum_1d(&samples, dt).expect("probe grid is non-empty")
}
