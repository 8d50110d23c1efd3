//! Closed-form kernel ridge regression and forecast metrics.
//!
//! The regularized squared-loss problem over representer coefficients,
//!
//! ```text
//! min_alpha ||K alpha - Y||^2 + ridge * alpha^T K alpha,
//! ```
//!
//! has the closed-form solution `alpha = (K^T K + ridge K)^{-1} K Y`. For
//! symmetric `K` the system matrix factors as `K (K + ridge I)`, so whenever
//! `K` is numerically nonsingular the cheaper and better-conditioned SPD
//! system `(K + ridge I) alpha = Y` has the same solution. [`ridge_fit`]
//! solves that system first, verifies the residual of the literal regularized
//! system, and falls back to a rank-revealing solve of the literal system if
//! the check fails.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{GramKernel, GramMatrix};

/// Relative residual of the literal system accepted without fallback.
const FAST_PATH_TOL: f64 = 1e-6;

/// Fitted representer coefficients together with the ridge weight and the
/// kernel the training Gram was built with.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    alpha: DVector<f64>,
    ridge: f64,
    kernel: GramKernel,
}

impl RidgeModel {
    /// Reconstructs a model from stored coefficients (e.g. a model file).
    pub fn from_parts(alpha: Vec<f64>, ridge: f64, kernel: GramKernel) -> Result<Self> {
        if !(ridge > 0.0) || !ridge.is_finite() {
            return Err(Error::InvalidRidge(ridge));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter(
                "model coefficients must be finite".into(),
            ));
        }
        Ok(RidgeModel {
            alpha: DVector::from_vec(alpha),
            ridge,
            kernel,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn kernel(&self) -> &GramKernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// A forecast: one value per Gram extension column, with the column index
/// each value came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    values: Vec<f64>,
    columns: Vec<usize>,
}

impl Forecast {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Relative residual of `(K^T K + ridge K) alpha = K Y`.
fn literal_residual(k: &DMatrix<f64>, alpha: &DVector<f64>, y: &DVector<f64>, ridge: f64) -> f64 {
    let k_alpha = k * alpha;
    let lhs = k * &k_alpha + ridge * &k_alpha;
    let rhs = k * y;
    let scale = rhs.norm();
    if scale == 0.0 {
        lhs.norm()
    } else {
        (lhs - rhs).norm() / scale
    }
}

/// SPD route: `(K + ridge I) alpha = Y` by Cholesky.
pub(crate) fn solve_fast(k: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Option<DVector<f64>> {
    let mut regularized = k.clone();
    for i in 0..k.nrows() {
        regularized[(i, i)] += ridge;
    }
    regularized.cholesky().map(|chol| chol.solve(y))
}

/// Literal route: `(K^T K + ridge K) alpha = K Y` by column-pivoted QR.
pub(crate) fn solve_literal(
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
) -> Result<DVector<f64>> {
    let lhs = k.transpose() * k + ridge * k;
    let rhs = k * y;
    lhs.col_piv_qr().solve(&rhs).ok_or(Error::GramDegenerate)
}

/// Fits representer coefficients for the given Gram, targets, and ridge
/// weight.
pub fn ridge_fit(gram: &GramMatrix, targets: &[f64], ridge: f64) -> Result<RidgeModel> {
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidRidge(ridge));
    }
    let n = gram.n();
    if targets.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: targets.len(),
        });
    }
    let k = gram.values();
    for i in 0..n {
        for j in 0..i {
            if k[(i, j)] != k[(j, i)] {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let y = DVector::from_column_slice(targets);

    if let Some(alpha) = solve_fast(k, &y, ridge) {
        if literal_residual(k, &alpha, &y, ridge) <= FAST_PATH_TOL {
            return Ok(RidgeModel {
                alpha,
                ridge,
                kernel: *gram.kernel(),
            });
        }
    }
    let alpha = solve_literal(k, &y, ridge)?;
    if literal_residual(k, &alpha, &y, ridge) > FAST_PATH_TOL {
        return Err(Error::GramDegenerate);
    }
    Ok(RidgeModel {
        alpha,
        ridge,
        kernel: *gram.kernel(),
    })
}

/// Forecasts from a fitted model and a Gram carrying a forecasting
/// extension: value `j` is the inner product of the coefficients with
/// extension column `j`.
pub fn ridge_predict(model: &RidgeModel, gram_with_extension: &GramMatrix) -> Result<Forecast> {
    let ext = gram_with_extension
        .extension()
        .ok_or(Error::MissingExtension)?;
    if ext.nrows() != model.alpha.len() {
        return Err(Error::LengthMismatch {
            left: ext.nrows(),
            right: model.alpha.len(),
        });
    }
    let h = ext.ncols();
    let mut values = Vec::with_capacity(h);
    for j in 0..h {
        values.push(model.alpha.dot(&ext.column(j)));
    }
    Ok(Forecast {
        values,
        columns: (0..h).collect(),
    })
}

fn percentage_errors(predicted: &[f64], actual: &[f64]) -> Result<Vec<f64>> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    let mut errors = Vec::with_capacity(actual.len());
    for (index, (&p, &a)) in predicted.iter().zip(actual).enumerate() {
        if a == 0.0 {
            return Err(Error::ZeroTarget { index });
        }
        errors.push(100.0 * (p - a).abs() / a.abs());
    }
    Ok(errors)
}

/// Mean absolute percentage error, in percent.
pub fn mape(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    let errors = percentage_errors(predicted, actual)?;
    if errors.is_empty() {
        return Err(Error::DegenerateData("MAPE of an empty forecast".into()));
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Running sum of per-step absolute percentage errors; the last entry equals
/// `len * mape`.
pub fn cumulative_mape(predicted: &[f64], actual: &[f64]) -> Result<Vec<f64>> {
    let errors = percentage_errors(predicted, actual)?;
    let mut running = 0.0;
    Ok(errors
        .into_iter()
        .map(|e| {
            running += e;
            running
        })
        .collect())
}
