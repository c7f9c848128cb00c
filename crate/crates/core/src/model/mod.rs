//! The model zoo: SMN and the coordinate-network baselines behind one
//! interface.
//!
//! Every model maps `in_dim x N` coordinates to `out_dim x N` predictions,
//! one column per sample, and owns its parameters in a [`ParamStore`].

mod config;
mod encoding;

pub use config::{matched_width, Architecture, ModelConfig, PeConfig, SCHEMA_VERSION};
pub use encoding::PositionalEncoding;

use crate::error::{ModelError, TensorError};
use crate::filter::{filter_forward, init_filter_stack, FilterModuleParams, FilterStackConfig, MaskSeedParams};
use crate::oscillator::{oscillator_forward, OscillatorParams};
use crate::params::{BoundParams, Param, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::ValueGrid;

/// Columns per tape when computing full-batch gradients. Larger batches are
/// split and their gradients summed, which keeps memory bounded without
/// changing the objective. At width 64 one activation block stays just under
/// 128 KiB, small enough for L2 and for the allocator's heap arena.
pub const GRADIENT_CHUNK: usize = 240;

pub fn relu(tape: &mut Tape, x: NodeId) -> NodeId {
    tape.relu(x)
}

/// `sin(omega0 x)`.
pub fn siren_act(tape: &mut Tape, x: NodeId, omega0: f64) -> NodeId {
    tape.sin_scaled(x, omega0)
}

/// `exp(-(s0 x)^2)`.
pub fn gauss_act(tape: &mut Tape, x: NodeId, s0: f64) -> NodeId {
    tape.gauss(x, s0)
}

/// `[sin(Bx); cos(Bx)]` for `in_dim x N` coordinates.
pub fn positional_encode(pe: &PositionalEncoding, coords: &ValueGrid) -> Result<ValueGrid, TensorError> {
    pe.encode(coords)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn init(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, w_bound: f64, b_bound: f64, rng: &mut Rng) -> Self {
        let w = store.push_uniform(format!("{name}.w"), fan_out, fan_in, w_bound, rng);
        let b = store.push_uniform(format!("{name}.b"), fan_out, 1, b_bound, rng);
        Self { w, b }
    }

    fn apply(&self, tape: &mut Tape, bound: &BoundParams, x: NodeId) -> Result<NodeId, TensorError> {
        tape.affine(bound.node(self.w), x, bound.node(self.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activation {
    Relu,
    Sine(f64),
    Gauss(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    Smn {
        oscillator: OscillatorParams,
        seed: Option<MaskSeedParams>,
        modules: Vec<FilterModuleParams>,
        stack: FilterStackConfig,
        head: Linear,
    },
    Dense {
        layers: Vec<Linear>,
        activation: Activation,
        head: Linear,
    },
}

/// Output node of a forward pass plus the tape nodes of every parameter.
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: NodeId,
    pub params: BoundParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout,
    encoding: Option<PositionalEncoding>,
}

/// Validates `cfg` and initializes a model from `cfg.seed`.
pub fn build_model(cfg: &ModelConfig) -> Result<Model, ModelError> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let mut store = ParamStore::new();
    let encoding = cfg
        .positional_encoding
        .map(|pe| PositionalEncoding::log_spaced(cfg.in_dim, pe));
    let d = cfg.encoded_dim();
    let h = cfg.hidden;
    let inv_sqrt = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
    let layout = match cfg.arch {
        Architecture::Smn => {
            let oscillator = OscillatorParams::init(&mut store, d, h, &cfg.omegas, cfg.amplitudes_learnable, &mut rng)?;
            let stack = FilterStackConfig {
                num_modules: cfg.num_modules,
                self_mask: cfg.self_mask,
                hidden: h,
            };
            let (seed, modules) = init_filter_stack(&mut store, &stack, &cfg.module_combines(), &mut rng);
            let head = Linear::init(&mut store, "head", h, cfg.out_dim, inv_sqrt(h), inv_sqrt(h), &mut rng);
            Layout::Smn {
                oscillator,
                seed,
                modules,
                stack,
                head,
            }
        }
        arch => {
            let activation = match arch {
                Architecture::Siren => Activation::Sine(cfg.omega0),
                Architecture::Gauss => Activation::Gauss(cfg.gauss_scale),
                _ => Activation::Relu,
            };
            let mut layers = Vec::with_capacity(cfg.depth);
            for i in 0..cfg.depth {
                let fan_in = if i == 0 { d } else { h };
                let (w_bound, b_bound) = match activation {
                    Activation::Relu => (inv_sqrt(fan_in), inv_sqrt(fan_in)),
                    Activation::Sine(w0) if i > 0 => ((6.0 / fan_in as f64).sqrt() / w0, inv_sqrt(fan_in)),
                    Activation::Sine(_) => (1.0 / fan_in as f64, inv_sqrt(fan_in)),
                    // exp(-(s0 x)^2) has width 1/s0, so hidden pre-activations
                    // (bias included) are kept on that scale.
                    Activation::Gauss(s0) if i > 0 => ((6.0 / fan_in as f64).sqrt() / s0, inv_sqrt(fan_in) / s0),
                    Activation::Gauss(_) => (1.0 / fan_in as f64, inv_sqrt(fan_in)),
                };
                layers.push(Linear::init(&mut store, &format!("layer.{i}"), fan_in, h, w_bound, b_bound, &mut rng));
            }
            let head_bound = match activation {
                Activation::Sine(w0) => (6.0 / h as f64).sqrt() / w0,
                _ => inv_sqrt(h),
            };
            let head = Linear::init(&mut store, "head", h, cfg.out_dim, head_bound, inv_sqrt(h), &mut rng);
            Layout::Dense {
                layers,
                activation,
                head,
            }
        }
    };
    Ok(Model {
        config: cfg.clone(),
        store,
        layout,
        encoding,
    })
}

impl Model {
    /// Rebuilds a model from `cfg` and replaces its parameter values with
    /// `params`, which must match the fresh layout by name, shape and flag.
    pub fn from_params(cfg: &ModelConfig, params: Vec<Param>) -> Result<Self, ModelError> {
        let mut model = build_model(cfg)?;
        if params.len() != model.store.len() {
            return Err(ModelError::InvalidConfig {
                field: "parameters",
                reason: format!("expected {} arrays, got {}", model.store.len(), params.len()),
            });
        }
        for (slot, p) in model.store.as_mut_slice().iter_mut().zip(params) {
            if slot.name != p.name || slot.value.shape() != p.value.shape() || slot.trainable != p.trainable {
                return Err(ModelError::InvalidConfig {
                    field: "parameters",
                    reason: format!(
                        "`{}` {:?} does not match expected `{}` {:?}",
                        p.name,
                        p.value.shape(),
                        slot.name,
                        slot.value.shape()
                    ),
                });
            }
            *slot = p;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> Architecture {
        self.config.arch
    }

    pub fn params(&self) -> &[Param] {
        self.store.as_slice()
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        self.store.as_mut_slice()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Scalars in trainable arrays, counted by enumeration.
    pub fn parameter_count(&self) -> usize {
        self.params().iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn encoding(&self) -> Option<&PositionalEncoding> {
        self.encoding.as_ref()
    }

    /// Current oscillator amplitudes (SMN only).
    pub fn amplitudes(&self) -> Option<Vec<f64>> {
        match &self.layout {
            Layout::Smn { oscillator, .. } => Some(self.store.get(oscillator.amplitudes).value.data().to_vec()),
            Layout::Dense { .. } => None,
        }
    }

    /// Records the forward pass for `coords` on `tape`.
    pub fn forward(&self, tape: &mut Tape, coords: &ValueGrid) -> Result<Forward, ModelError> {
        if let Some(bad) = self.store.first_non_finite() {
            return Err(ModelError::NonFiniteParameter(bad.name.clone()));
        }
        if coords.rows() != self.config.in_dim {
            return Err(TensorError::Shape {
                op: "forward",
                left: coords.shape(),
                right: (self.config.in_dim, coords.cols()),
            }
            .into());
        }
        let input = match &self.encoding {
            Some(pe) => pe.encode(coords)?,
            None => coords.clone(),
        };
        let params = self.store.bind(tape);
        let x = tape.constant(input);
        let output = match &self.layout {
            Layout::Smn {
                oscillator,
                seed,
                modules,
                stack,
                head,
            } => {
                let z = oscillator_forward(tape, &params, oscillator, x)?;
                let z = filter_forward(tape, &params, seed.as_ref(), modules, stack, z)?;
                head.apply(tape, &params, z)?
            }
            Layout::Dense {
                layers,
                activation,
                head,
            } => {
                let mut h = x;
                for layer in layers {
                    let pre = layer.apply(tape, &params, h)?;
                    h = match *activation {
                        Activation::Relu => relu(tape, pre),
                        Activation::Sine(w0) => siren_act(tape, pre, w0),
                        Activation::Gauss(s0) => gauss_act(tape, pre, s0),
                    };
                }
                head.apply(tape, &params, h)?
            }
        };
        Ok(Forward { output, params })
    }

    /// Predictions without gradient bookkeeping, evaluated in column chunks.
    pub fn predict(&self, coords: &ValueGrid) -> Result<ValueGrid, ModelError> {
        let n = coords.cols();
        if n <= GRADIENT_CHUNK {
            let mut tape = Tape::new();
            let fwd = self.forward(&mut tape, coords)?;
            return Ok(tape.value(fwd.output).clone());
        }
        let out_dim = self.config.out_dim;
        let mut out = ValueGrid::zeros(out_dim, n);
        for start in (0..n).step_by(GRADIENT_CHUNK) {
            let end = (start + GRADIENT_CHUNK).min(n);
            let mut tape = Tape::new();
            let fwd = self.forward(&mut tape, &coords.columns(start, end))?;
            let part = tape.value(fwd.output);
            for r in 0..out_dim {
                out.data_mut()[r * n + start..r * n + end].copy_from_slice(part.row(r));
            }
        }
        Ok(out)
    }

    /// Training objective: mean over samples of the squared l2 residual.
    pub fn loss(&self, coords: &ValueGrid, targets: &ValueGrid) -> Result<f64, ModelError> {
        let pred = self.predict(coords)?;
        pred.same_shape(targets, "loss")?;
        Ok(chunked_loss(&pred, targets))
    }

    /// Loss and one gradient per parameter array, in store order. Frozen
    /// arrays get zeros.
    pub fn loss_and_gradients(&self, coords: &ValueGrid, targets: &ValueGrid) -> Result<(f64, Vec<ValueGrid>), ModelError> {
        let n = coords.cols();
        if targets.cols() != n {
            return Err(TensorError::Shape {
                op: "loss_and_gradients",
                left: coords.shape(),
                right: targets.shape(),
            }
            .into());
        }
        let mut loss = 0.0;
        let mut grads: Vec<Option<ValueGrid>> = vec![None; self.store.len()];
        for start in (0..n.max(1)).step_by(GRADIENT_CHUNK) {
            let end = (start + GRADIENT_CHUNK).min(n);
            let (c, t) = if start == 0 && end == n {
                (coords.clone(), targets.clone())
            } else {
                (coords.columns(start, end), targets.columns(start, end))
            };
            let mut tape = Tape::new();
            let fwd = self.forward(&mut tape, &c)?;
            let target = tape.constant(t);
            let l = tape.mse_over(fwd.output, target, n)?;
            loss += tape.value(l).item();
            let mut g = tape.backward(l)?;
            for (slot, &node) in grads.iter_mut().zip(fwd.params.nodes()) {
                let part = g.take(node);
                match slot {
                    Some(acc) => acc.add_assign(&part),
                    None => *slot = Some(part),
                }
            }
        }
        let grads = grads
            .into_iter()
            .zip(self.params())
            .map(|(g, p)| g.unwrap_or_else(|| ValueGrid::zeros(p.value.rows(), p.value.cols())))
            .collect();
        Ok((loss, grads))
    }

    /// The same parameters with every filter module combining additively.
    pub fn smn_add_variant(&self) -> Model {
        let mut out = self.clone();
        if let Layout::Smn { modules, .. } = &mut out.layout {
            *modules = crate::filter::make_smn_add_variant(modules);
            out.config.combine = vec![crate::filter::Combine::Add];
        }
        out
    }
}

/// Mean squared residual per column, reduced chunk by chunk in the same
/// order as `loss_and_gradients`, so both report identical bits.
pub fn chunked_loss(pred: &ValueGrid, targets: &ValueGrid) -> f64 {
    let (rows, n) = pred.shape();
    let (p, t) = (pred.data(), targets.data());
    let mut loss = 0.0;
    for start in (0..n).step_by(GRADIENT_CHUNK) {
        let end = (start + GRADIENT_CHUNK).min(n);
        let total: f64 = (0..rows)
            .flat_map(|r| r * n + start..r * n + end)
            .map(|i| (p[i] - t[i]) * (p[i] - t[i]))
            .sum();
        loss += total / n.max(1) as f64;
    }
    loss
}
