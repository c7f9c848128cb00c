use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::filter::{stack_parameter_count, Combine};
use crate::oscillator::{validate_frequencies, DEFAULT_FREQUENCIES};

/// Config file layout version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Oscillator, modulative filter stack, linear head.
    Smn,
    /// ReLU multilayer perceptron on raw (or encoded) coordinates.
    Mlp,
    /// Sine activations `sin(omega0 x)` throughout.
    Siren,
    /// Gaussian activations `exp(-(s0 x)^2)`.
    Gauss,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Self::Smn, Self::Mlp, Self::Siren, Self::Gauss];
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Smn => "smn",
            Self::Mlp => "mlp",
            Self::Siren => "siren",
            Self::Gauss => "gauss",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smn" => Ok(Self::Smn),
            "mlp" | "relu" => Ok(Self::Mlp),
            "siren" => Ok(Self::Siren),
            "gauss" => Ok(Self::Gauss),
            other => Err(format!("unknown architecture `{other}`")),
        }
    }
}

/// Fixed positional encoding applied to coordinates before the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeConfig {
    /// Octaves per input dimension; frequencies are `2^j * pi`, `j < octaves`.
    pub octaves: usize,
}

/// Architecture and initialization record for every model in the zoo.
///
/// Fields that only apply to one family are ignored by the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub arch: Architecture,
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden: usize,
    /// Oscillator frequencies; their count is K.
    pub omegas: Vec<f64>,
    pub amplitudes_learnable: bool,
    pub num_modules: usize,
    pub self_mask: bool,
    /// Per-module combine flags. Empty means multiply everywhere; a single
    /// entry applies to every module.
    pub combine: Vec<Combine>,
    /// Activated layers in the baseline networks.
    pub depth: usize,
    pub omega0: f64,
    pub gauss_scale: f64,
    pub positional_encoding: Option<PeConfig>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            arch: Architecture::Smn,
            in_dim: 2,
            out_dim: 3,
            hidden: 256,
            omegas: DEFAULT_FREQUENCIES.to_vec(),
            amplitudes_learnable: true,
            num_modules: 2,
            self_mask: true,
            combine: Vec::new(),
            depth: 4,
            omega0: 40.0,
            gauss_scale: 30.0,
            positional_encoding: None,
            seed: 0,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

impl ModelConfig {
    pub fn smn(hidden: usize) -> Self {
        Self {
            hidden,
            ..Self::default()
        }
    }

    pub fn baseline(arch: Architecture, hidden: usize) -> Self {
        Self {
            arch,
            hidden,
            ..Self::default()
        }
    }

    /// Uses the first `k` default frequencies.
    pub fn with_k(mut self, k: usize) -> Result<Self, ModelError> {
        if k == 0 || k > DEFAULT_FREQUENCIES.len() {
            return Err(invalid(
                "omegas",
                format!("K={k} has no default frequency set; list omegas explicitly"),
            ));
        }
        self.omegas = DEFAULT_FREQUENCIES[..k].to_vec();
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.omegas.len()
    }

    /// One combine flag per module, after applying the broadcast rules.
    pub fn module_combines(&self) -> Vec<Combine> {
        match self.combine.as_slice() {
            [] => vec![Combine::Multiply; self.num_modules],
            [one] => vec![*one; self.num_modules],
            many => many.to_vec(),
        }
    }

    /// Width of the first layer's input after any positional encoding.
    pub fn encoded_dim(&self) -> usize {
        match self.positional_encoding {
            Some(pe) => 2 * pe.octaves * self.in_dim,
            None => self.in_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        for (field, v) in [("in_dim", self.in_dim), ("out_dim", self.out_dim), ("hidden", self.hidden), ("depth", self.depth)] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.hidden > 4096 {
            return Err(invalid("hidden", "at most 4096"));
        }
        if self.in_dim > 64 || self.out_dim > 64 {
            return Err(invalid(if self.in_dim > 64 { "in_dim" } else { "out_dim" }, "at most 64"));
        }
        if self.depth > 64 {
            return Err(invalid("depth", "at most 64"));
        }
        if let Some(pe) = self.positional_encoding {
            if pe.octaves == 0 || pe.octaves > 24 {
                return Err(invalid("positional_encoding", "octaves must be in 1..=24"));
            }
        }
        match self.arch {
            Architecture::Smn => {
                validate_frequencies(&self.omegas)?;
                if self.num_modules > 64 {
                    return Err(invalid("num_modules", "at most 64"));
                }
                let n = self.combine.len();
                if n > 1 && n != self.num_modules {
                    return Err(invalid(
                        "combine",
                        format!("{n} flags for {} modules", self.num_modules),
                    ));
                }
            }
            Architecture::Siren if !(self.omega0.is_finite() && self.omega0 > 0.0) => {
                return Err(invalid("omega0", "must be finite and positive"));
            }
            Architecture::Gauss if !(self.gauss_scale.is_finite() && self.gauss_scale > 0.0) => {
                return Err(invalid("gauss_scale", "must be finite and positive"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Trainable parameter count from the wiring formulas alone.
    pub fn closed_form_parameter_count(&self) -> usize {
        let (d, h, o) = (self.encoded_dim(), self.hidden, self.out_dim);
        let head = h * o + o;
        match self.arch {
            Architecture::Smn => {
                let amps = if self.amplitudes_learnable { self.k() } else { 0 };
                (d * h + h) + amps + stack_parameter_count(h, self.num_modules) + head
            }
            Architecture::Mlp | Architecture::Siren | Architecture::Gauss => {
                (d * h + h) + (self.depth - 1) * (h * h + h) + head
            }
        }
    }
}

/// Width whose closed-form parameter count is closest to `target` (ties go
/// to the narrower network).
pub fn matched_width(cfg: &ModelConfig, target: usize) -> usize {
    let count = |h: usize| {
        ModelConfig {
            hidden: h,
            ..cfg.clone()
        }
        .closed_form_parameter_count()
    };
    let mut best = 1;
    for h in 1..=4096 {
        let c = count(h);
        if c.abs_diff(target) < count(best).abs_diff(target) {
            best = h;
        }
        if c > target {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_smn_count() {
        let cfg = ModelConfig::smn(256);
        assert_eq!(cfg.closed_form_parameter_count(), 330_502);
    }

    #[test]
    fn baseline_defaults() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.omega0, 40.0);
        assert_eq!(cfg.gauss_scale, 30.0);
        assert_eq!(cfg.omegas, vec![8.0, 40.0, 120.0]);
        assert_eq!(cfg.num_modules, 2);
    }

    #[test]
    fn validation_names_field() {
        let bad = ModelConfig {
            hidden: 0,
            ..ModelConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig { field: "hidden", .. })));
        let bad = ModelConfig {
            combine: vec![Combine::Add; 3],
            ..ModelConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig { field: "combine", .. })));
        let bad = ModelConfig {
            omegas: vec![],
            ..ModelConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig { field: "omegas", .. })));
        assert!(ModelConfig::default().with_k(4).is_err());
    }

    #[test]
    fn combine_broadcast() {
        let cfg = ModelConfig {
            combine: vec![Combine::Add],
            num_modules: 3,
            ..ModelConfig::default()
        };
        assert_eq!(cfg.module_combines(), vec![Combine::Add; 3]);
        assert_eq!(ModelConfig::default().module_combines(), vec![Combine::Multiply; 2]);
    }

    #[test]
    fn matched_width_is_close() {
        let target = ModelConfig::smn(64).closed_form_parameter_count();
        let mlp = ModelConfig::baseline(Architecture::Mlp, 1);
        let w = matched_width(&mlp, target);
        let got = ModelConfig { hidden: w, ..mlp.clone() }.closed_form_parameter_count();
        let below = ModelConfig { hidden: w - 1, ..mlp.clone() }.closed_form_parameter_count();
        let above = ModelConfig { hidden: w + 1, ..mlp }.closed_form_parameter_count();
        assert!(got.abs_diff(target) <= below.abs_diff(target));
        assert!(got.abs_diff(target) <= above.abs_diff(target));
    }
}
