//! Experiment report assembly and plot-ready file emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{GramKernel, GramMatrix, GramMode};
use crate::pipeline::ExperimentConfig;

/// Published MAPE reference values for the 2-day-average bitcoin task,
/// carried verbatim for side-by-side reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMape {
    pub rbf: f64,
    pub gak: f64,
    pub sig_n: f64,
    pub sig_pde: f64,
    pub reservoir: f64,
}

impl ReferenceMape {
    pub const PUBLISHED: ReferenceMape = ReferenceMape {
        rbf: 4.094,
        gak: 4.458,
        sig_n: 13.420,
        sig_pde: 3.253,
        reservoir: 2.911,
    };
}

/// One scored configuration of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub index: usize,
    pub kernel: Option<GramKernel>,
    pub ridge: f64,
    pub feasible: bool,
    pub validation_mape: Option<f64>,
    /// Human-readable summary of the grid point, e.g. `theta=0.5 fraction=0.6`.
    pub label: String,
}

/// The grid argmin by validation MAPE (first occurrence on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedConfig {
    pub grid_index: usize,
    pub kernel: GramKernel,
    pub ridge: f64,
    pub validation_mape: f64,
}

/// One test forecast in original units, with the input-window provenance
/// used by the no-lookahead check: the window covers rows
/// `[window_start, origin)` and the target starts at row `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub date: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
    pub window_start: usize,
    pub origin: usize,
}

/// Shape and spectrum summary of a Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMeta {
    pub n: usize,
    pub extension_width: usize,
    pub mode: GramMode,
    pub kernel: GramKernel,
    pub value_min: f64,
    pub value_max: f64,
    pub eigen_min: f64,
    pub eigen_max: f64,
}

impl GramMeta {
    pub fn from_gram(gram: &GramMatrix) -> GramMeta {
        let (value_min, value_max) = gram.value_range();
        let (eigen_min, eigen_max) = gram.eigen_extremes();
        GramMeta {
            n: gram.n(),
            extension_width: gram.extension_width(),
            mode: gram.mode(),
            kernel: *gram.kernel(),
            value_min,
            value_max,
            eigen_min,
            eigen_max,
        }
    }
}

/// Full experiment report: validation scores for every grid point, the
/// selected configuration, and (after a full run) the test-set forecasts and
/// errors next to the published reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub scale: f64,
    pub input_bound: Option<f64>,
    pub clipped_rows: usize,
    pub grid: Vec<GridEntry>,
    pub selected: SelectedConfig,
    pub test_mape: Option<f64>,
    pub forecasts: Vec<ForecastRow>,
    pub cumulative_mape: Vec<f64>,
    pub gram: Option<GramMeta>,
    pub reference: ReferenceMape,
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(content.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a `date,actual,predicted` CSV (header only when there are no
/// forecasts).
pub fn write_predictions(rows: &[ForecastRow], path: &Path) -> Result<()> {
    let mut content = String::from("date,actual,predicted\n");
    for row in rows {
        content.push_str(&format!("{},{},{}\n", row.date, row.actual, row.predicted));
    }
    write_file(path, &content)
}

/// Writes `report.json`, `predictions.csv`, `cumulative_mape.csv`, and
/// `gram_meta.json` into `out_dir`, returning the written paths.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();

    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    write_file(&report_path, &json)?;
    written.push(report_path);

    let predictions_path = out_dir.join("predictions.csv");
    write_predictions(&report.forecasts, &predictions_path)?;
    written.push(predictions_path);

    let cumulative_path = out_dir.join("cumulative_mape.csv");
    let mut cumulative = String::from("step,value\n");
    for (step, value) in report.cumulative_mape.iter().enumerate() {
        cumulative.push_str(&format!("{},{}\n", step + 1, value));
    }
    write_file(&cumulative_path, &cumulative)?;
    written.push(cumulative_path);

    if let Some(gram) = &report.gram {
        let gram_path = out_dir.join("gram_meta.json");
        let json = serde_json::to_string_pretty(gram)
            .map_err(|e| Error::Config(format!("cannot serialize gram meta: {e}")))?;
        write_file(&gram_path, &json)?;
        written.push(gram_path);
    }
    Ok(written)
}
