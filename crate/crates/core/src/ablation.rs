//! The ablation grid: combine mode x oscillator variant x module count.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::filter::Combine;
use crate::model::{build_model, ModelConfig};
use crate::train::{fit, FitData, FitReport, TrainConfig};

/// Oscillator setting of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OscillatorVariant {
    K1,
    K2,
    K3,
    /// Three bases with the amplitudes frozen at their initial value.
    Fixed,
}

impl OscillatorVariant {
    pub const ALL: [OscillatorVariant; 4] = [Self::K1, Self::K2, Self::K3, Self::Fixed];

    pub fn k(self) -> usize {
        match self {
            Self::K1 => 1,
            Self::K2 => 2,
            Self::K3 | Self::Fixed => 3,
        }
    }

    pub fn learnable(self) -> bool {
        self != Self::Fixed
    }
}

impl std::fmt::Display for OscillatorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::K1 => "k1",
            Self::K2 => "k2",
            Self::K3 => "k3",
            Self::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub schema_version: u32,
    pub combines: Vec<Combine>,
    pub oscillators: Vec<OscillatorVariant>,
    pub modules: Vec<usize>,
    /// Template for every cell; `combine`, `omegas`, `amplitudes_learnable`
    /// and `num_modules` are overridden per cell.
    pub base: ModelConfig,
    /// Width for cells that differ from the reference cell only in the
    /// oscillator. `None` keeps `base.hidden`.
    pub oscillator_hidden: Option<usize>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            schema_version: 1,
            combines: vec![Combine::Multiply, Combine::Add],
            oscillators: OscillatorVariant::ALL.to_vec(),
            modules: vec![2, 3, 4],
            base: ModelConfig::smn(64),
            oscillator_hidden: None,
            train: TrainConfig::default(),
            seeds: vec![0],
        }
    }
}

impl AblationConfig {
    /// Full-width settings: hidden 256, and 312 for the oscillator cells.
    pub fn paper_parity() -> Self {
        Self {
            base: ModelConfig::smn(256),
            oscillator_hidden: Some(312),
            ..Self::default()
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &combine in &self.combines {
            for &oscillator in &self.oscillators {
                for &modules in &self.modules {
                    out.push(Cell {
                        combine,
                        oscillator,
                        modules,
                    });
                }
            }
        }
        out
    }

    /// Model config for `cell` with the given seed.
    pub fn cell_config(&self, cell: Cell, seed: u64) -> Result<ModelConfig, crate::error::ModelError> {
        let mut cfg = ModelConfig {
            combine: vec![cell.combine],
            amplitudes_learnable: cell.oscillator.learnable(),
            num_modules: cell.modules,
            seed,
            ..self.base.clone()
        }
        .with_k(cell.oscillator.k())?;
        if let Some(h) = self.oscillator_hidden {
            if cell.combine == Combine::Multiply && cell.modules == 2 {
                cfg.hidden = h;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub combine: Combine,
    pub oscillator: OscillatorVariant,
    pub modules: usize,
}

impl Cell {
    pub const REFERENCE: Cell = Cell {
        combine: Combine::Multiply,
        oscillator: OscillatorVariant::K3,
        modules: 2,
    };

    pub fn label(&self) -> String {
        let arch = match self.combine {
            Combine::Multiply => "smn",
            Combine::Add => "smn-add",
        };
        format!("{arch}/{}/m{}", self.oscillator, self.modules)
    }

    /// Published full-scale PSNR for the cells that have one.
    pub fn reference_psnr(&self) -> Option<f64> {
        use OscillatorVariant::*;
        match (self.combine, self.oscillator, self.modules) {
            (Combine::Multiply, K3, 2) => Some(41.40),
            (Combine::Add, K3, 2) => Some(40.25),
            (Combine::Multiply, K3, 3) => Some(39.63),
            (Combine::Multiply, K3, 4) => Some(40.76),
            _ => None,
        }
    }

    /// Published PSNR of the oscillator-only comparison (wider network).
    pub fn oscillator_reference_psnr(&self) -> Option<f64> {
        use OscillatorVariant::*;
        match (self.combine, self.modules) {
            (Combine::Multiply, 2) => Some(match self.oscillator {
                Fixed => 35.08,
                K1 => 42.87,
                K2 => 43.09,
                K3 => 43.68,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub label: String,
    pub hidden: usize,
    pub parameter_count: usize,
    pub psnr_per_seed: Vec<f64>,
    pub mean_psnr: Option<f64>,
    pub delta_vs_reference: Option<f64>,
    pub reference_psnr: Option<f64>,
    pub oscillator_reference_psnr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub cells: Vec<CellResult>,
}

impl AblationSummary {
    pub fn get(&self, cell: Cell) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.cell == cell)
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut out = format!(
            "{:<20} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "cell", "hidden", "params", "psnr", "delta", "ref", "osc-ref"
        );
        for c in &self.cells {
            let _ = write!(
                out,
                "{:<20} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}",
                c.label,
                c.hidden,
                c.parameter_count,
                opt(c.mean_psnr),
                c.delta_vs_reference.map_or_else(|| "-".to_string(), |d| format!("{d:+.2}")),
                opt(c.reference_psnr),
                opt(c.oscillator_reference_psnr),
            );
            if let Some(e) = &c.error {
                let _ = write!(out, "  error: {e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Fits every cell for every seed. A failing cell is recorded and the grid
/// moves on. `on_fit` sees each finished run.
pub fn run_ablation(
    cfg: &AblationConfig,
    data: &FitData,
    mut on_fit: impl FnMut(Cell, u64, &FitReport),
) -> AblationSummary {
    let mut cells = Vec::new();
    for cell in cfg.cells() {
        let mut result = CellResult {
            cell,
            label: cell.label(),
            hidden: 0,
            parameter_count: 0,
            psnr_per_seed: Vec::new(),
            mean_psnr: None,
            delta_vs_reference: None,
            reference_psnr: cell.reference_psnr(),
            oscillator_reference_psnr: cell.oscillator_reference_psnr(),
            error: None,
        };
        for &seed in &cfg.seeds {
            let run = cfg
                .cell_config(cell, seed)
                .map_err(|e| e.to_string())
                .and_then(|mc| {
                    result.hidden = mc.hidden;
                    let mut model = build_model(&mc).map_err(|e| e.to_string())?;
                    result.parameter_count = model.parameter_count();
                    let train = TrainConfig { seed, ..cfg.train.clone() };
                    fit(&mut model, data, &train, |_| {}).map_err(|e| e.to_string())
                });
            match run {
                Ok(report) => {
                    result.psnr_per_seed.push(report.final_psnr);
                    on_fit(cell, seed, &report);
                }
                Err(e) => {
                    result.error = Some(format!("seed {seed}: {e}"));
                    break;
                }
            }
        }
        if result.error.is_none() && !result.psnr_per_seed.is_empty() {
            result.mean_psnr = Some(result.psnr_per_seed.iter().sum::<f64>() / result.psnr_per_seed.len() as f64);
        }
        cells.push(result);
    }
    let reference = cells.iter().find(|c| c.cell == Cell::REFERENCE).and_then(|c| c.mean_psnr);
    for c in &mut cells {
        if let (Some(r), Some(p)) = (reference, c.mean_psnr) {
            c.delta_vs_reference = Some(p - r);
        }
    }
    AblationSummary { cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ValueGrid;

    #[test]
    fn default_grid_is_full_cross_product() {
        let cfg = AblationConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 2 * 4 * 3);
        assert!(cells.contains(&Cell::REFERENCE));
    }

    #[test]
    fn cell_configs() {
        let cfg = AblationConfig::paper_parity();
        let fixed = cfg
            .cell_config(
                Cell {
                    oscillator: OscillatorVariant::Fixed,
                    ..Cell::REFERENCE
                },
                3,
            )
            .unwrap();
        assert!(!fixed.amplitudes_learnable);
        assert_eq!((fixed.k(), fixed.hidden, fixed.seed), (3, 312, 3));
        let add = cfg
            .cell_config(
                Cell {
                    combine: Combine::Add,
                    ..Cell::REFERENCE
                },
                0,
            )
            .unwrap();
        assert_eq!(add.hidden, 256);
        assert_eq!(add.module_combines(), vec![Combine::Add; 2]);
    }

    #[test]
    fn tiny_grid_runs_and_records_failures() {
        let n = 16;
        let coords = ValueGrid::from_fn(2, n, |r, c| if r == 0 { (c % 4) as f64 / 1.5 - 1.0 } else { (c / 4) as f64 / 1.5 - 1.0 });
        let data = FitData::new(coords, ValueGrid::filled(3, n, 0.5));
        let cfg = AblationConfig {
            combines: vec![Combine::Multiply],
            oscillators: vec![OscillatorVariant::K3],
            modules: vec![2, 0],
            base: ModelConfig::smn(4),
            train: TrainConfig {
                max_iters: 5,
                ..TrainConfig::default()
            },
            seeds: vec![0, 1],
            ..AblationConfig::default()
        };
        let mut fits = 0;
        let summary = run_ablation(&cfg, &data, |_, _, _| fits += 1);
        assert_eq!(summary.cells.len(), 2);
        assert_eq!(fits, 4);
        let r = summary.get(Cell::REFERENCE).unwrap();
        assert_eq!(r.delta_vs_reference, Some(0.0));
        assert!(summary.to_table().contains("smn/k3/m2"));
        let bad = AblationConfig {
            oscillators: vec![OscillatorVariant::K3],
            base: ModelConfig {
                hidden: 0,
                ..ModelConfig::smn(4)
            },
            ..cfg
        };
        let summary = run_ablation(&bad, &data, |_, _, _| {});
        assert!(summary.cells.iter().all(|c| c.error.is_some() && c.mean_psnr.is_none()));
    }
}
