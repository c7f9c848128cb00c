use crate::error::TensorError;
use crate::model::config::PeConfig;
use crate::tensor::ValueGrid;

/// Fixed feature map `[sin(Bx); cos(Bx)]`. `B` never receives gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    b: ValueGrid,
}

impl PositionalEncoding {
    pub fn new(b: ValueGrid) -> Self {
        Self { b }
    }

    /// Log-spaced axis-aligned frequencies `2^j * pi`, one row per octave
    /// and input dimension.
    pub fn log_spaced(in_dim: usize, cfg: PeConfig) -> Self {
        let rows = cfg.octaves * in_dim;
        let b = ValueGrid::from_fn(rows, in_dim, |r, c| {
            let (octave, dim) = (r / in_dim, r % in_dim);
            if dim == c {
                2f64.powi(octave as i32) * std::f64::consts::PI
            } else {
                0.0
            }
        });
        Self { b }
    }

    pub fn matrix(&self) -> &ValueGrid {
        &self.b
    }

    pub fn num_freqs(&self) -> usize {
        self.b.rows()
    }

    pub fn out_dim(&self) -> usize {
        2 * self.num_freqs()
    }

    /// `2 * num_freqs x N`: sine rows first, then cosine rows.
    pub fn encode(&self, coords: &ValueGrid) -> Result<ValueGrid, TensorError> {
        let bx = self.b.matmul(coords)?;
        let f = self.num_freqs();
        let n = coords.cols();
        let mut out = ValueGrid::zeros(2 * f, n);
        let (sin_part, cos_part) = out.data_mut().split_at_mut(f * n);
        crate::kernels::sin_cos_scaled(bx.data(), 1.0, sin_part, cos_part);
        Ok(out)
    }
}
