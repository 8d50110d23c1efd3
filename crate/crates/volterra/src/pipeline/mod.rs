//! End-to-end experiment pipeline: CSV ingestion, normalization, rolling
//! windows, hyperparameter grid search with rolling validation, a single
//! refit, rolling test forecasts, and plot-ready report emission.
//!
//! The pipeline is fully deterministic: there is no randomness anywhere, the
//! grid is iterated in declaration order (ties broken by first occurrence),
//! and all file writes happen once at the end.

mod ingest;
mod model;
mod report;

pub use ingest::{ingest_csv, normalize, Normalization, TimeSeries};
pub use model::{fingerprint_windows, ModelExport};
pub use report::{
    emit_report, write_predictions, ExperimentReport, ForecastRow, GramMeta, GridEntry,
    ReferenceMape, SelectedConfig,
};

use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_gram, BaselineParams};
use crate::error::{Error, Result};
use crate::kernel::{gram_extend, gram_pairwise, GramKernel, GramMatrix, KernelParams};
use crate::regression::{cumulative_mape, mape, ridge_fit, ridge_predict, RidgeModel};
use crate::sequence::{
    aggregate_target, make_rolling_windows, row_norm, SampleSet, Sequence, TargetAggregation,
};

/// Which kernel family the pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    #[default]
    Volterra,
    Rbf,
    Polynomial,
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volterra" => Ok(KernelChoice::Volterra),
            "rbf" => Ok(KernelChoice::Rbf),
            "polynomial" => Ok(KernelChoice::Polynomial),
            other => Err(Error::Config(format!("unknown kernel {other:?}"))),
        }
    }
}

/// How inputs whose row norm exceeds the bound `M` are handled. Rising test
/// prices can exceed the train-derived bound; training rows can only exceed
/// it when `safety_factor < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundPolicy {
    /// Rescale offending rows onto the bound and log a warning.
    #[default]
    ClipAndWarn,
    /// Refuse to run.
    Reject,
}

/// Whether the train/test split counts raw days or window/target pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    #[default]
    Days,
    Windows,
}

fn default_date_column() -> String {
    "date".into()
}

fn default_value_columns() -> Vec<String> {
    vec!["close".into()]
}

fn default_window() -> usize {
    36
}

fn default_horizon() -> usize {
    2
}

fn default_train_days() -> usize {
    346
}

fn default_test_days() -> usize {
    78
}

fn default_theta_grid() -> Vec<f64> {
    vec![0.3, 0.5, 0.7, 0.9]
}

fn default_lambda_fraction_grid() -> Vec<f64> {
    vec![0.3, 0.6, 0.9]
}

fn default_ridge_grid() -> Vec<f64> {
    vec![1e-6, 1e-4, 1e-2, 1.0]
}

fn default_gamma_grid() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0]
}

fn default_degree_grid() -> Vec<u32> {
    vec![1, 2, 3]
}

fn default_offset_grid() -> Vec<f64> {
    vec![1.0]
}

fn default_validation_windows() -> usize {
    40
}

fn default_safety_factor() -> f64 {
    1.0
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a run needs: data location, windowing, split, normalization,
/// kernel choice, hyperparameter grids, and output directory. Unspecified
/// fields take the defaults of the bitcoin experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_value_columns")]
    pub value_columns: Vec<String>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_train_days")]
    pub train_days: usize,
    #[serde(default = "default_test_days")]
    pub test_days: usize,
    #[serde(default)]
    pub split_unit: SplitUnit,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub kernel: KernelChoice,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: Vec<f64>,
    #[serde(default = "default_lambda_fraction_grid")]
    pub lambda_fraction_grid: Vec<f64>,
    #[serde(default = "default_ridge_grid")]
    pub ridge_grid: Vec<f64>,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_degree_grid")]
    pub degree_grid: Vec<u32>,
    #[serde(default = "default_offset_grid")]
    pub offset_grid: Vec<f64>,
    #[serde(default = "default_validation_windows")]
    pub validation_windows: usize,
    #[serde(default)]
    pub bound_policy: BoundPolicy,
    #[serde(default = "default_safety_factor")]
    pub safety_factor: f64,
    #[serde(default)]
    pub target_aggregation: TargetAggregation,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: PathBuf::new(),
            date_column: default_date_column(),
            value_columns: default_value_columns(),
            window: default_window(),
            horizon: default_horizon(),
            train_days: default_train_days(),
            test_days: default_test_days(),
            split_unit: SplitUnit::default(),
            normalization: Normalization::default(),
            kernel: KernelChoice::default(),
            theta_grid: default_theta_grid(),
            lambda_fraction_grid: default_lambda_fraction_grid(),
            ridge_grid: default_ridge_grid(),
            gamma_grid: default_gamma_grid(),
            degree_grid: default_degree_grid(),
            offset_grid: default_offset_grid(),
            validation_windows: default_validation_windows(),
            bound_policy: BoundPolicy::default(),
            safety_factor: default_safety_factor(),
            target_aggregation: TargetAggregation::default(),
            out_dir: default_out_dir(),
        }
    }
}

impl ExperimentConfig {
    /// Loads a config from a JSON file.
    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.as_os_str().is_empty() {
            return Err(Error::Config("no data path configured".into()));
        }
        if self.window == 0 || self.horizon == 0 {
            return Err(Error::Config("window and horizon must be >= 1".into()));
        }
        if self.train_days == 0 || self.test_days == 0 {
            return Err(Error::Config("train and test splits must be >= 1".into()));
        }
        if self.validation_windows == 0 {
            return Err(Error::Config("validation_windows must be >= 1".into()));
        }
        if !(self.safety_factor > 0.0) || !self.safety_factor.is_finite() {
            return Err(Error::Config("safety_factor must be positive".into()));
        }
        if self.value_columns.is_empty() {
            return Err(Error::Config("value_columns must not be empty".into()));
        }
        let empty = |name: &str| Err(Error::Config(format!("{name} grid must not be empty")));
        match self.kernel {
            KernelChoice::Volterra => {
                if self.theta_grid.is_empty() {
                    return empty("theta");
                }
                if self.lambda_fraction_grid.is_empty() {
                    return empty("lambda_fraction");
                }
            }
            KernelChoice::Rbf => {
                if self.gamma_grid.is_empty() {
                    return empty("gamma");
                }
            }
            KernelChoice::Polynomial => {
                if self.degree_grid.is_empty() {
                    return empty("degree");
                }
                if self.offset_grid.is_empty() {
                    return empty("offset");
                }
            }
        }
        if self.ridge_grid.is_empty() {
            return empty("ridge");
        }
        Ok(())
    }
}

/// Provenance of one test forecast (indices into the ingested series).
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoint {
    pub window_start: usize,
    /// First target row; the forecast uses no data at or after this index.
    pub origin: usize,
    pub date: NaiveDate,
    /// Target in original units.
    pub actual: f64,
}

/// Ingested, normalized, windowed, and split data, ready for fitting.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub rows: usize,
    pub scale: f64,
    pub input_bound: Option<f64>,
    pub clipped_rows: usize,
    pub train: SampleSet,
    pub test: SampleSet,
    pub test_meta: Vec<TestPoint>,
}

/// Runs the ingest, normalize, and window stages and splits train/test.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    config.validate()?;
    let ts = ingest_csv(&config.data, &config.date_column, &config.value_columns)
        .map_err(|e| e.in_stage("ingest"))?;
    let rows = ts.len();
    let (width, horizon) = (config.window, config.horizon);

    let (train_rows, test_pairs) = match config.split_unit {
        SplitUnit::Days => (config.train_days, config.test_days),
        SplitUnit::Windows => (config.train_days + width + horizon - 1, config.test_days),
    };
    if train_rows < width + horizon {
        return Err(Error::SeriesTooShort {
            required: width + horizon,
            actual: train_rows,
        }
        .in_stage("window"));
    }
    if train_rows > rows {
        return Err(Error::Config(format!(
            "training split of {train_rows} rows exceeds data length {rows}"
        ))
        .in_stage("window"));
    }

    let (scaled, scale) = normalize(ts.values(), config.normalization, train_rows)
        .map_err(|e| e.in_stage("normalize"))?;

    let (kernel_series, input_bound, clipped_rows) = if config.kernel == KernelChoice::Volterra {
        let train_sup = (0..train_rows)
            .map(|i| row_norm(scaled.row(i)))
            .fold(0.0f64, f64::max);
        let bound = train_sup * config.safety_factor;
        if !(bound > 0.0) {
            return Err(
                Error::DegenerateData("training sup-norm is zero; M would be 0".into())
                    .in_stage("normalize"),
            );
        }
        let (series, clipped) = apply_bound_policy(&scaled, bound, config.bound_policy)
            .map_err(|e| e.in_stage("normalize"))?;
        (series, Some(bound), clipped)
    } else {
        (scaled.clone(), None, 0)
    };

    let inputs = make_rolling_windows(
        Arc::new(kernel_series),
        width,
        horizon,
        config.target_aggregation,
    )
    .map_err(|e| e.in_stage("window"))?;
    let total_pairs = inputs.len();

    // Targets always come from the unclipped scaled series; clipping only
    // affects kernel inputs.
    let all = if clipped_rows > 0 {
        let reference = make_rolling_windows(
            Arc::new(scaled.clone()),
            width,
            horizon,
            config.target_aggregation,
        )
        .map_err(|e| e.in_stage("window"))?;
        SampleSet::new(inputs.windows().to_vec(), reference.targets().to_vec())
            .map_err(|e| e.in_stage("window"))?
    } else {
        inputs
    };

    let train_pair_count = train_rows - width - horizon + 1;
    if train_pair_count + test_pairs > total_pairs {
        return Err(Error::Config(format!(
            "split does not fit: {train_pair_count} train + {test_pairs} test pairs \
             from {total_pairs} total"
        ))
        .in_stage("window"));
    }
    let test_start = total_pairs - test_pairs;
    let train = all
        .subset(0, train_pair_count)
        .map_err(|e| e.in_stage("window"))?;
    let test = all
        .subset(test_start, total_pairs)
        .map_err(|e| e.in_stage("window"))?;

    let test_meta = (test_start..total_pairs)
        .map(|k| {
            let origin = k + width;
            TestPoint {
                window_start: k,
                origin,
                date: ts.dates()[origin],
                actual: aggregate_target(ts.values(), origin, horizon, config.target_aggregation),
            }
        })
        .collect();

    Ok(PreparedData {
        rows,
        scale,
        input_bound,
        clipped_rows,
        train,
        test,
        test_meta,
    })
}

fn apply_bound_policy(
    scaled: &Sequence,
    bound: f64,
    policy: BoundPolicy,
) -> Result<(Sequence, usize)> {
    let mut offenders = Vec::new();
    for (i, row) in scaled.rows().enumerate() {
        let norm = row_norm(row);
        if norm > bound {
            offenders.push((i, norm));
        }
    }
    if offenders.is_empty() {
        return Ok((scaled.clone(), 0));
    }
    match policy {
        BoundPolicy::Reject => {
            let (row, norm) = offenders[0];
            Err(Error::InputExceedsBound { row, norm, bound })
        }
        BoundPolicy::ClipAndWarn => {
            log::warn!(
                "{} rows exceed the input bound {bound}; rescaling them onto the bound",
                offenders.len()
            );
            let mut data: Vec<f64> = Vec::with_capacity(scaled.len() * scaled.channels());
            for row in scaled.rows() {
                let norm = row_norm(row);
                if norm > bound {
                    let factor = bound / norm;
                    data.extend(row.iter().map(|v| v * factor));
                } else {
                    data.extend_from_slice(row);
                }
            }
            Ok((Sequence::new(data, scaled.channels())?, offenders.len()))
        }
    }
}

/// One grid point: a kernel candidate (`None` when parameter validation
/// failed, e.g. a lambda fraction >= 1) and a ridge weight.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub kernel: Option<GramKernel>,
    pub ridge: f64,
    pub label: String,
}

/// Expands the configured grids into candidates, iterated in declaration
/// order: kernel parameters outermost, ridge innermost.
pub fn grid_candidates(
    config: &ExperimentConfig,
    input_bound: Option<f64>,
) -> Result<Vec<Candidate>> {
    let mut candidates = Vec::new();
    match config.kernel {
        KernelChoice::Volterra => {
            let bound = input_bound
                .ok_or_else(|| Error::Config("Volterra grid needs the input bound M".into()))?;
            for &theta in &config.theta_grid {
                let tau = theta / bound;
                for &fraction in &config.lambda_fraction_grid {
                    let lambda = fraction * (1.0 - theta * theta).sqrt();
                    let kernel = KernelParams::validate(lambda, tau, bound)
                        .ok()
                        .map(GramKernel::Volterra);
                    for &ridge in &config.ridge_grid {
                        candidates.push(Candidate {
                            kernel,
                            ridge,
                            label: format!("theta={theta} fraction={fraction} ridge={ridge}"),
                        });
                    }
                }
            }
        }
        KernelChoice::Rbf => {
            for &gamma in &config.gamma_grid {
                let kernel = BaselineParams::rbf(gamma).ok().map(GramKernel::Baseline);
                for &ridge in &config.ridge_grid {
                    candidates.push(Candidate {
                        kernel,
                        ridge,
                        label: format!("gamma={gamma} ridge={ridge}"),
                    });
                }
            }
        }
        KernelChoice::Polynomial => {
            for &degree in &config.degree_grid {
                for &offset in &config.offset_grid {
                    let kernel = BaselineParams::polynomial(degree, offset)
                        .ok()
                        .map(GramKernel::Baseline);
                    for &ridge in &config.ridge_grid {
                        candidates.push(Candidate {
                            kernel,
                            ridge,
                            label: format!("degree={degree} offset={offset} ridge={ridge}"),
                        });
                    }
                }
            }
        }
    }
    Ok(candidates)
}

/// Builds the training Gram for a kernel candidate (pairwise mode; rolling
/// windows are not nested truncations).
pub fn build_gram(sample: &SampleSet, kernel: &GramKernel) -> Result<GramMatrix> {
    match kernel {
        GramKernel::Volterra(params) => gram_pairwise(sample, params),
        GramKernel::Baseline(params) => baseline_gram(sample, params),
    }
}

/// Scores every candidate on a held-out validation tail (the last
/// `validation_windows` training samples) and selects the argmin validation
/// MAPE, first occurrence winning ties.
pub fn run_grid(
    train: &SampleSet,
    candidates: &[Candidate],
    validation_windows: usize,
) -> Result<(Vec<GridEntry>, SelectedConfig)> {
    if train.len() <= validation_windows {
        return Err(Error::Config(format!(
            "grid search needs more than {validation_windows} training windows, got {}",
            train.len()
        )));
    }
    let (fit_set, val_set) = train.split_tail(validation_windows)?;

    let mut entries = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    let mut cache: Option<(GramKernel, GramMatrix)> = None;
    for (index, candidate) in candidates.iter().enumerate() {
        let Some(kernel) = candidate.kernel else {
            entries.push(GridEntry {
                index,
                kernel: None,
                ridge: candidate.ridge,
                feasible: false,
                validation_mape: None,
                label: candidate.label.clone(),
            });
            continue;
        };
        let needs_build = !matches!(&cache, Some((key, _)) if *key == kernel);
        if needs_build {
            let gram = build_gram(&fit_set, &kernel)?;
            let extended = gram_extend(&gram, &fit_set, val_set.windows(), &kernel)?;
            cache = Some((kernel, extended));
        }
        let cached = &cache.as_ref().expect("cache was just filled").1;
        let model = ridge_fit(cached, fit_set.targets(), candidate.ridge)?;
        let forecast = ridge_predict(&model, cached)?;
        let score = mape(forecast.values(), val_set.targets())?;
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((index, score));
        }
        entries.push(GridEntry {
            index,
            kernel: Some(kernel),
            ridge: candidate.ridge,
            feasible: true,
            validation_mape: Some(score),
            label: candidate.label.clone(),
        });
    }
    let (best_index, best_score) = best.ok_or(Error::EmptyFeasibleGrid)?;
    let selected = SelectedConfig {
        grid_index: best_index,
        kernel: entries[best_index].kernel.expect("best entry is feasible"),
        ridge: entries[best_index].ridge,
        validation_mape: best_score,
    };
    Ok((entries, selected))
}

fn report_skeleton(
    config: &ExperimentConfig,
    prepared: &PreparedData,
    grid: Vec<GridEntry>,
    selected: SelectedConfig,
) -> ExperimentReport {
    ExperimentReport {
        config: config.clone(),
        rows: prepared.rows,
        train_samples: prepared.train.len(),
        test_samples: prepared.test.len(),
        scale: prepared.scale,
        input_bound: prepared.input_bound,
        clipped_rows: prepared.clipped_rows,
        grid,
        selected,
        test_mape: None,
        forecasts: Vec::new(),
        cumulative_mape: Vec::new(),
        gram: None,
        reference: ReferenceMape::PUBLISHED,
    }
}

/// Grid search only: validation scores and the selected configuration.
pub fn grid_search(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prepared = prepare(config)?;
    let candidates = grid_candidates(config, prepared.input_bound)?;
    let (grid, selected) = run_grid(&prepared.train, &candidates, config.validation_windows)
        .map_err(|e| e.in_stage("grid-search"))?;
    Ok(report_skeleton(config, &prepared, grid, selected))
}

/// Fits the selected configuration on the full training set.
pub fn fit_selected(
    prepared: &PreparedData,
    selected: &SelectedConfig,
) -> Result<(GramMatrix, RidgeModel)> {
    let gram = build_gram(&prepared.train, &selected.kernel).map_err(|e| e.in_stage("fit"))?;
    let model =
        ridge_fit(&gram, prepared.train.targets(), selected.ridge).map_err(|e| e.in_stage("fit"))?;
    Ok((gram, model))
}

/// Forecasts every test window from a fitted model, returning the extended
/// Gram and predictions in original units.
pub fn forecast_test(
    prepared: &PreparedData,
    gram: &GramMatrix,
    model: &RidgeModel,
) -> Result<(GramMatrix, Vec<f64>)> {
    let extended = gram_extend(gram, &prepared.train, prepared.test.windows(), model.kernel())
        .map_err(|e| e.in_stage("forecast"))?;
    let forecast = ridge_predict(model, &extended).map_err(|e| e.in_stage("forecast"))?;
    // No lookahead: every test input row precedes its forecast origin.
    for (window, meta) in prepared.test.windows().iter().zip(&prepared.test_meta) {
        if window.start() + window.width() > meta.origin {
            return Err(Error::Config(format!(
                "lookahead: window [{}, {}) reaches past origin {}",
                window.start(),
                window.start() + window.width(),
                meta.origin
            ))
            .in_stage("forecast"));
        }
    }
    let predicted = forecast
        .values()
        .iter()
        .map(|v| v * prepared.scale)
        .collect();
    Ok((extended, predicted))
}

/// The full experiment: ingest, normalize, window, grid search, refit,
/// rolling test forecasts, and evaluation next to the published references.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prepared = prepare(config)?;
    let candidates = grid_candidates(config, prepared.input_bound)?;
    let (grid, selected) = run_grid(&prepared.train, &candidates, config.validation_windows)
        .map_err(|e| e.in_stage("grid-search"))?;
    let (gram, model) = fit_selected(&prepared, &selected)?;
    let (extended, predicted) = forecast_test(&prepared, &gram, &model)?;

    let actuals: Vec<f64> = prepared.test_meta.iter().map(|m| m.actual).collect();
    let test_mape = mape(&predicted, &actuals).map_err(|e| e.in_stage("evaluate"))?;
    let cumulative = cumulative_mape(&predicted, &actuals).map_err(|e| e.in_stage("evaluate"))?;

    let forecasts = prepared
        .test_meta
        .iter()
        .zip(&predicted)
        .map(|(meta, &predicted)| ForecastRow {
            date: meta.date,
            actual: meta.actual,
            predicted,
            window_start: meta.window_start,
            origin: meta.origin,
        })
        .collect();

    let mut report = report_skeleton(config, &prepared, grid, selected);
    report.test_mape = Some(test_mape);
    report.forecasts = forecasts;
    report.cumulative_mape = cumulative;
    report.gram = Some(GramMeta::from_gram(&extended));
    Ok(report)
}
