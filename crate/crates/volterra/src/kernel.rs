//! The Volterra reservoir kernel.
//!
//! The kernel of two semi-infinite inputs `z`, `z'` bounded by `M` satisfies
//!
//! ```text
//! K(z, z') = 1 + lambda^2 * K(T1 z, T1 z') / (1 - tau^2 <z_0, z'_0>)
//! ```
//!
//! where `T1` drops the most recent entry and `z_0` is the time-0 entry.
//! Under zero left-padding the all-zero tail has the exact value
//! `1 / (1 - lambda^2)`, so finite windows are evaluated exactly by seeding
//! the recursion with that base and applying one step per overlapping time
//! index, most recent entries aligned at time 0. The equivalent series
//!
//! ```text
//! K(z, z') = 1 + sum_{k>=1} lambda^{2k} prod_{j=0}^{k-1} 1 / (1 - tau^2 <z_{-j}, z'_{-j}>)
//! ```
//!
//! is implemented independently in [`kernel_sum`] with a guaranteed remainder
//! bound and serves as the oracle for the recursion and for the Gram
//! builders.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baseline::{self, BaselineParams};
use crate::error::{Error, Result};
use crate::sequence::{row_norm, SampleSet, Sequence, Window};

/// Validated Volterra kernel parameters.
///
/// The triple `(lambda, tau, M)` must satisfy `M > 0`, `tau > 0`,
/// `tau^2 M^2 < 1`, and `0 < lambda < sqrt(1 - tau^2 M^2)`; the derived
/// contraction constant `rho = lambda / sqrt(1 - tau^2 M^2)` then lies in
/// `(0, 1)`, which gives the echo state property and the kernel value bound
/// `B = 1 / (1 - rho^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelParamsRepr", into = "KernelParamsRepr")]
pub struct KernelParams {
    lambda: f64,
    tau: f64,
    bound: f64,
    rho: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct KernelParamsRepr {
    lambda: f64,
    tau: f64,
    m: f64,
}

impl TryFrom<KernelParamsRepr> for KernelParams {
    type Error = Error;

    fn try_from(repr: KernelParamsRepr) -> Result<Self> {
        KernelParams::validate(repr.lambda, repr.tau, repr.m)
    }
}

impl From<KernelParams> for KernelParamsRepr {
    fn from(params: KernelParams) -> Self {
        KernelParamsRepr {
            lambda: params.lambda,
            tau: params.tau,
            m: params.bound,
        }
    }
}

impl KernelParams {
    /// Checks the parameter constraints and computes the derived constants.
    pub fn validate(lambda: f64, tau: f64, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "input bound M must be positive and finite, got {bound}"
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tensorization weight tau must be positive and finite, got {tau}"
            )));
        }
        let product = tau * tau * bound * bound;
        if !(product < 1.0) {
            return Err(Error::TensorizationOutOfRange { product });
        }
        let limit = (1.0 - product).sqrt();
        if !(lambda > 0.0 && lambda < limit) {
            return Err(Error::NoEchoState { lambda, limit });
        }
        Ok(KernelParams {
            lambda,
            tau,
            bound,
            rho: lambda / limit,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// The input sup-norm bound `M`.
    pub fn input_bound(&self) -> f64 {
        self.bound
    }

    /// Contraction constant `rho = lambda / sqrt(1 - tau^2 M^2)` in `(0, 1)`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// State norm bound `L = 1 / (1 - rho)`.
    pub fn state_bound(&self) -> f64 {
        1.0 / (1.0 - self.rho)
    }

    /// Kernel value bound `B = 1 / (1 - rho^2)`; every kernel value lies in
    /// `[1, B]`.
    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.rho * self.rho)
    }

    /// Exact kernel value of two all-zero tails, `1 / (1 - lambda^2)`. Seeds
    /// every recursion and initializes the Gram recursions.
    pub fn recursion_base(&self) -> f64 {
        1.0 / (1.0 - self.lambda * self.lambda)
    }
}

fn row_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One backward recursion step shared by pairwise evaluation and the Gram
/// recursions, so streaming and pairwise paths are bit-identical.
#[inline]
fn recursion_step(prev: f64, dot: f64, lambda_sq: f64, tau_sq: f64) -> f64 {
    1.0 + lambda_sq * prev / (1.0 - tau_sq * dot)
}

fn check_window(window: &Window, params: &KernelParams) -> Result<()> {
    for i in 0..window.width() {
        let norm = row_norm(window.row(i));
        if norm > params.input_bound() {
            return Err(Error::InputExceedsBound {
                row: i,
                norm,
                bound: params.input_bound(),
            });
        }
    }
    Ok(())
}

fn check_pair(a: &Window, b: &Window, params: &KernelParams) -> Result<()> {
    if a.channels() != b.channels() {
        return Err(Error::ChannelMismatch {
            left: a.channels(),
            right: b.channels(),
        });
    }
    check_window(a, params)?;
    check_window(b, params)
}

fn eval_recursion(a: &Window, b: &Window, params: &KernelParams, tail: f64) -> f64 {
    let overlap = a.width().min(b.width());
    let lambda_sq = params.lambda * params.lambda;
    let tau_sq = params.tau * params.tau;
    let mut value = tail;
    // Deepest overlapping index first; indices beyond the shorter window see
    // a zero entry, factor 1, and leave the base value fixed.
    for j in (0..overlap).rev() {
        let dot = row_dot(a.row_from_end(j), b.row_from_end(j));
        value = recursion_step(value, dot, lambda_sq, tau_sq);
    }
    value
}

/// Volterra kernel value of two zero-padded windows, evaluated by the
/// backward recursion. The result lies in `[1, B]`.
pub fn kernel_pair(z: &Window, z_prime: &Window, params: &KernelParams) -> Result<f64> {
    check_pair(z, z_prime, params)?;
    Ok(eval_recursion(z, z_prime, params, params.recursion_base()))
}

/// Same recursion with an explicit value for the all-zero tails instead of
/// the exact `1 / (1 - lambda^2)`. A perturbation `delta` of the tail moves a
/// depth-`n` output by at most `delta * rho^(2n)`.
pub fn kernel_pair_with_tail(
    z: &Window,
    z_prime: &Window,
    params: &KernelParams,
    tail: f64,
) -> Result<f64> {
    check_pair(z, z_prime, params)?;
    Ok(eval_recursion(z, z_prime, params, tail))
}

/// Truncated series evaluation of the kernel. Terms are summed until the
/// remainder bound `rho^(2k) / (1 - rho^2)` drops below `tolerance`, so the
/// result is within `tolerance` of the exact value. Independent of the
/// recursion path; serves as its oracle.
pub fn kernel_sum(
    z: &Window,
    z_prime: &Window,
    params: &KernelParams,
    tolerance: f64,
) -> Result<f64> {
    check_pair(z, z_prime, params)?;
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive and finite, got {tolerance}"
        )));
    }
    let overlap = z.width().min(z_prime.width());
    let lambda_sq = params.lambda * params.lambda;
    let tau_sq = params.tau * params.tau;
    let rho_sq = params.rho * params.rho;

    let mut product = 1.0;
    let mut weight = 1.0;
    let mut total = 1.0;
    let mut tail_bound = params.value_bound();
    let mut k = 0usize;
    while tail_bound >= tolerance {
        if k < overlap {
            let dot = row_dot(z.row_from_end(k), z_prime.row_from_end(k));
            product *= 1.0 / (1.0 - tau_sq * dot);
        }
        weight *= lambda_sq;
        total += weight * product;
        tail_bound *= rho_sq;
        k += 1;
    }
    Ok(total)
}

/// Which kernel produced a Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum GramKernel {
    Volterra(KernelParams),
    Baseline(BaselineParams),
}

impl GramKernel {
    pub fn evaluate(&self, a: &Window, b: &Window) -> Result<f64> {
        match self {
            GramKernel::Volterra(params) => kernel_pair(a, b, params),
            GramKernel::Baseline(params) => baseline::baseline_kernel(a, b, params),
        }
    }
}

/// How the Gram entries were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMode {
    /// Diagonal recursion over nested truncations of one series.
    Streaming,
    /// Direct pairwise evaluation on arbitrary windows.
    Pairwise,
}

/// Symmetric kernel matrix of a sample, with an optional rectangular
/// extension whose column `j` holds kernel values between every training
/// input and forecast input `j`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    kernel: GramKernel,
    mode: GramMode,
    extension: Option<DMatrix<f64>>,
}

impl GramMatrix {
    /// Wraps an externally computed matrix, rejecting non-square or
    /// non-symmetric input.
    pub fn from_values(values: DMatrix<f64>, kernel: GramKernel, mode: GramMode) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::NotSymmetric);
        }
        for i in 0..values.nrows() {
            for j in 0..i {
                if values[(i, j)] != values[(j, i)] {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(GramMatrix {
            values,
            kernel,
            mode,
            extension: None,
        })
    }

    pub(crate) fn new_unchecked(values: DMatrix<f64>, kernel: GramKernel, mode: GramMode) -> Self {
        GramMatrix {
            values,
            kernel,
            mode,
            extension: None,
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kernel(&self) -> &GramKernel {
        &self.kernel
    }

    pub fn mode(&self) -> GramMode {
        self.mode
    }

    pub fn extension(&self) -> Option<&DMatrix<f64>> {
        self.extension.as_ref()
    }

    pub fn extension_width(&self) -> usize {
        self.extension.as_ref().map_or(0, |ext| ext.ncols())
    }

    /// Smallest and largest eigenvalue of the symmetric value matrix.
    pub fn eigen_extremes(&self) -> (f64, f64) {
        if self.n() == 0 {
            return (0.0, 0.0);
        }
        let eigen = self.values.clone().symmetric_eigen();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for value in eigen.eigenvalues.iter() {
            min = min.min(*value);
            max = max.max(*value);
        }
        (min, max)
    }

    /// Positive semidefiniteness up to numerical tolerance: smallest
    /// eigenvalue at least `-rel_tol` times the largest.
    pub fn psd_within(&self, rel_tol: f64) -> bool {
        let (min, max) = self.eigen_extremes();
        min >= -rel_tol * max.abs()
    }

    /// Smallest and largest entry of the value matrix.
    pub fn value_range(&self) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for value in self.values.iter() {
            min = min.min(*value);
            max = max.max(*value);
        }
        (min, max)
    }
}

fn check_series_rows(series: &Sequence, params: &KernelParams) -> Result<()> {
    for (i, row) in series.rows().enumerate() {
        let norm = row_norm(row);
        if norm > params.input_bound() {
            return Err(Error::InputExceedsBound {
                row: i,
                norm,
                bound: params.input_bound(),
            });
        }
    }
    Ok(())
}

/// Gram matrix of the nested truncations of one series, filled by the
/// diagonal recursion in O(1) work per entry:
///
/// ```text
/// K[i][j] = 1 + lambda^2 * K[i-1][j-1] / (1 - tau^2 <series[i-1], series[j-1]>)
/// ```
///
/// seeded with `K[i][0] = K[0][0] = 1 / (1 - lambda^2)`. The lower triangle
/// is completed by symmetry; entries are bit-identical to calling
/// [`kernel_pair`] on every nested pair.
pub fn gram_streaming(sample: &SampleSet, params: &KernelParams) -> Result<GramMatrix> {
    let series = sample.nested_series().ok_or(Error::NotNested)?.clone();
    check_series_rows(&series, params)?;

    let n = sample.len();
    let lambda_sq = params.lambda * params.lambda;
    let tau_sq = params.tau * params.tau;
    let base = params.recursion_base();
    let mut values = DMatrix::zeros(n, n);
    for offset in 0..n {
        let mut value = base;
        for step in 1..=(n - offset) {
            let i = step + offset - 1;
            let j = step - 1;
            let dot = row_dot(series.row(i), series.row(j));
            value = recursion_step(value, dot, lambda_sq, tau_sq);
            values[(i, j)] = value;
            values[(j, i)] = value;
        }
    }
    Ok(GramMatrix::new_unchecked(
        values,
        GramKernel::Volterra(*params),
        GramMode::Streaming,
    ))
}

/// Gram matrix of arbitrary windows by direct pairwise recursion,
/// O(n^2 * w) for width-`w` windows.
pub fn gram_pairwise(sample: &SampleSet, params: &KernelParams) -> Result<GramMatrix> {
    if let Some(first) = sample.windows().first() {
        for window in sample.windows() {
            if window.channels() != first.channels() {
                return Err(Error::ChannelMismatch {
                    left: first.channels(),
                    right: window.channels(),
                });
            }
            check_window(window, params)?;
        }
    }
    let n = sample.len();
    let base = params.recursion_base();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let value = eval_recursion(sample.window(i), sample.window(j), params, base);
            values[(i, j)] = value;
            values[(j, i)] = value;
        }
    }
    Ok(GramMatrix::new_unchecked(
        values,
        GramKernel::Volterra(*params),
        GramMode::Pairwise,
    ))
}

/// Attaches an `n x h` forecasting extension to a Gram matrix.
///
/// In pairwise mode, `new_inputs` are arbitrary windows and column `j` holds
/// the kernel between each training window and `new_inputs[j]`. In streaming
/// mode, `new_inputs` must be width-1 windows — the future observations
/// continuing the nested series — and the columns follow the extended
/// recursion seeded from the last column of the square Gram.
pub fn gram_extend(
    gram: &GramMatrix,
    sample: &SampleSet,
    new_inputs: &[Window],
    kernel: &GramKernel,
) -> Result<GramMatrix> {
    if kernel != gram.kernel() {
        return Err(Error::ParamsMismatch);
    }
    if sample.len() != gram.n() {
        return Err(Error::Config(format!(
            "sample size {} does not match Gram size {}",
            sample.len(),
            gram.n()
        )));
    }
    let n = gram.n();
    let h = new_inputs.len();
    let extension = match (gram.mode(), kernel) {
        (GramMode::Pairwise, GramKernel::Volterra(params)) => {
            for window in new_inputs {
                if let Some(first) = sample.windows().first() {
                    if window.channels() != first.channels() {
                        return Err(Error::ChannelMismatch {
                            left: first.channels(),
                            right: window.channels(),
                        });
                    }
                }
                check_window(window, params)?;
            }
            let base = params.recursion_base();
            let mut ext = DMatrix::zeros(n, h);
            for (j, input) in new_inputs.iter().enumerate() {
                for i in 0..n {
                    ext[(i, j)] = eval_recursion(sample.window(i), input, params, base);
                }
            }
            ext
        }
        (GramMode::Streaming, GramKernel::Volterra(params)) => {
            let series = sample.nested_series().ok_or(Error::NotNested)?.clone();
            for (j, window) in new_inputs.iter().enumerate() {
                if window.width() != 1 {
                    return Err(Error::Config(format!(
                        "streaming extension expects one future observation per input, got width {} at {j}",
                        window.width()
                    )));
                }
                if window.channels() != series.channels() {
                    return Err(Error::ChannelMismatch {
                        left: series.channels(),
                        right: window.channels(),
                    });
                }
                check_window(window, params)?;
            }
            let lambda_sq = params.lambda * params.lambda;
            let tau_sq = params.tau * params.tau;
            let base = params.recursion_base();
            let mut ext = DMatrix::zeros(n, h);
            for j in 0..h {
                let future = new_inputs[j].row(0);
                for i in 0..n {
                    let prev = if i == 0 {
                        base
                    } else if j == 0 {
                        gram.value(i - 1, n - 1)
                    } else {
                        ext[(i - 1, j - 1)]
                    };
                    let dot = row_dot(series.row(i), future);
                    ext[(i, j)] = recursion_step(prev, dot, lambda_sq, tau_sq);
                }
            }
            ext
        }
        (GramMode::Pairwise, GramKernel::Baseline(params)) => {
            let mut ext = DMatrix::zeros(n, h);
            for (j, input) in new_inputs.iter().enumerate() {
                for i in 0..n {
                    ext[(i, j)] = baseline::baseline_kernel(sample.window(i), input, params)?;
                }
            }
            ext
        }
        (GramMode::Streaming, GramKernel::Baseline(_)) => return Err(Error::ParamsMismatch),
    };
    Ok(GramMatrix {
        values: gram.values.clone(),
        kernel: *kernel,
        mode: gram.mode(),
        extension: Some(extension),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{make_rolling_windows, TargetAggregation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn params(lambda: f64, tau: f64, m: f64) -> KernelParams {
        KernelParams::validate(lambda, tau, m).unwrap()
    }

    fn window(values: &[f64]) -> Window {
        Window::whole(Sequence::scalar(values).unwrap()).unwrap()
    }

    fn random_window(rng: &mut ChaCha8Rng, len: usize, channels: usize, bound: f64) -> Window {
        let data: Vec<f64> = (0..len * channels)
            .map(|_| rng.gen_range(-1.0..1.0) * bound / (channels as f64).sqrt())
            .collect();
        Window::whole(Sequence::new(data, channels).unwrap()).unwrap()
    }

    #[test]
    fn validate_computes_derived_constants() {
        let p = params(0.5, 0.5, 1.0);
        assert!((p.rho() - 0.5 / 0.75_f64.sqrt()).abs() < 1e-15);
        assert!((p.value_bound() - 1.5).abs() < 1e-12);
        assert!((p.state_bound() - 1.0 / (1.0 - p.rho())).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_out_of_range_parameters() {
        assert!(matches!(
            KernelParams::validate(0.9, 0.5, 1.0),
            Err(Error::NoEchoState { .. })
        ));
        assert!(matches!(
            KernelParams::validate(0.5, 1.0, 1.0),
            Err(Error::TensorizationOutOfRange { .. })
        ));
        assert!(KernelParams::validate(0.5, -0.1, 1.0).is_err());
        assert!(KernelParams::validate(0.5, 0.5, 0.0).is_err());
        assert!(matches!(
            KernelParams::validate(0.0, 0.5, 1.0),
            Err(Error::NoEchoState { .. })
        ));
    }

    #[test]
    fn kernel_params_serde_round_trip_revalidates() {
        let p = params(0.4, 0.6, 1.2);
        let json = serde_json::to_string(&p).unwrap();
        let back: KernelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);

        let bad = r#"{"lambda":0.99,"tau":0.9,"m":1.0}"#;
        assert!(serde_json::from_str::<KernelParams>(bad).is_err());
    }

    #[test]
    fn all_zero_inputs_give_the_geometric_series_value() {
        let p = params(0.5, 0.5, 1.0);
        let zero = window(&[0.0, 0.0, 0.0]);
        let value = kernel_pair(&zero, &zero, &p).unwrap();
        assert!((value - 4.0 / 3.0).abs() < 1e-15);
        // Zero content of any width is the all-zero input.
        let one = window(&[0.0]);
        assert!((kernel_pair(&one, &zero, &p).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_unit_step_matches_hand_computation() {
        let p = params(0.5, 0.5, 1.0);
        let w = window(&[1.0]);
        let value = kernel_pair(&w, &w, &p).unwrap();
        assert!((value - 13.0 / 9.0).abs() < 1e-14);
        let oracle = kernel_sum(&w, &w, &p, 1e-14).unwrap();
        assert!((value - oracle).abs() < 1e-12);
    }

    #[test]
    fn two_unit_steps_match_the_series_expansion() {
        let p = params(0.5, 0.5, 1.0);
        let w = window(&[1.0, 1.0]);
        let value = kernel_sum(&w, &w, &p, 1e-13).unwrap();
        // 1 + 1/3 + 1/9 + 1/27.
        assert!((value - 40.0 / 27.0).abs() < 1e-12);
        assert!((kernel_pair(&w, &w, &p).unwrap() - 40.0 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn sup_norm_violation_names_the_offending_row() {
        let p = params(0.5, 0.5, 1.0);
        let w = window(&[0.5, 2.0, 0.5]);
        match kernel_pair(&w, &w, &p) {
            Err(Error::InputExceedsBound { row, norm, bound }) => {
                assert_eq!(row, 1);
                assert_eq!(norm, 2.0);
                assert_eq!(bound, 1.0);
            }
            other => panic!("expected InputExceedsBound, got {other:?}"),
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let p = params(0.5, 0.5, 1.0);
        let a = window(&[0.5]);
        let b = Window::whole(Sequence::new(vec![0.1, 0.2], 2).unwrap()).unwrap();
        assert!(matches!(
            kernel_pair(&a, &b, &p),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn all_ones_windows_increase_toward_the_value_bound() {
        let p = params(0.5, 0.5, 1.0);
        let mut previous = 0.0;
        let mut last = 0.0;
        for width in 1..=30 {
            let w = window(&vec![1.0; width]);
            let value = kernel_pair(&w, &w, &p).unwrap();
            assert!(value >= previous, "width {width} decreased");
            previous = value;
            last = value;
        }
        assert!((p.value_bound() - 1.5).abs() < 1e-12);
        assert!((last - 1.5).abs() < 1e-6);
    }

    #[test]
    fn streaming_matches_single_step_initialization() {
        // n = 1: one recursion step from the 1/(1-lambda^2) seed.
        let p = params(0.5, 0.25, 2.0);
        let series = Sequence::scalar(&[1.5]).unwrap();
        let sample = SampleSet::nested(series, vec![0.0]).unwrap();
        let gram = gram_streaming(&sample, &p).unwrap();
        let expected = 1.0 + 0.25 * (4.0 / 3.0) / (1.0 - 0.0625 * 2.25);
        assert!((gram.value(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn streaming_gram_is_bit_identical_to_pairwise_recursion() {
        let p = params(0.45, 0.6, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let series = Sequence::scalar(&values).unwrap();
        let sample = SampleSet::nested(series, vec![0.0; 20]).unwrap();
        let gram = gram_streaming(&sample, &p).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let direct = kernel_pair(sample.window(i), sample.window(j), &p).unwrap();
                assert_eq!(gram.value(i, j), direct, "entry ({i}, {j}) differs");
            }
        }
    }

    #[test]
    fn streaming_gram_agrees_with_the_series_oracle() {
        let p = params(0.45, 0.6, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let values: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let series = Sequence::scalar(&values).unwrap();
        let sample = SampleSet::nested(series, vec![0.0; 20]).unwrap();
        let gram = gram_streaming(&sample, &p).unwrap();
        let mut max_diff = 0.0f64;
        for i in 0..20 {
            for j in 0..=i {
                let oracle = kernel_sum(sample.window(i), sample.window(j), &p, 1e-12).unwrap();
                max_diff = max_diff.max((gram.value(i, j) - oracle).abs());
            }
        }
        assert!(max_diff < 1e-10, "max deviation {max_diff}");
    }

    #[test]
    fn streaming_requires_nested_truncations() {
        let p = params(0.5, 0.5, 1.0);
        let series = Arc::new(Sequence::scalar(&[0.1, 0.2, 0.3, 0.4]).unwrap());
        let rolling = SampleSet::new(
            vec![
                Window::new(Arc::clone(&series), 0, 2).unwrap(),
                Window::new(series, 1, 2).unwrap(),
            ],
            vec![0.0; 2],
        )
        .unwrap();
        assert!(matches!(
            gram_streaming(&rolling, &p),
            Err(Error::NotNested)
        ));
    }

    #[test]
    fn identical_windows_give_a_constant_gram() {
        let p = params(0.5, 0.5, 1.0);
        let w = window(&[0.3, -0.2, 0.8]);
        let sample = SampleSet::new(vec![w.clone(), w.clone(), w], vec![0.0; 3]).unwrap();
        let gram = gram_pairwise(&sample, &p).unwrap();
        let v = gram.value(0, 0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(gram.value(i, j), v);
            }
        }
    }

    #[test]
    fn two_window_gram_matches_direct_calls() {
        let p = params(0.5, 0.5, 1.0);
        let a = window(&[0.3, -0.2]);
        let b = window(&[0.9, 0.1]);
        let sample = SampleSet::new(vec![a.clone(), b.clone()], vec![0.0; 2]).unwrap();
        let gram = gram_pairwise(&sample, &p).unwrap();
        assert_eq!(gram.value(0, 0), kernel_pair(&a, &a, &p).unwrap());
        assert_eq!(gram.value(0, 1), kernel_pair(&a, &b, &p).unwrap());
        assert_eq!(gram.value(0, 1), gram.value(1, 0));
    }

    #[test]
    fn random_pairwise_gram_is_psd_and_bounded() {
        let p = params(0.5, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let windows: Vec<Window> = (0..30)
            .map(|_| {
                let len = rng.gen_range(1..12);
                random_window(&mut rng, len, 1, 1.0)
            })
            .collect();
        let sample = SampleSet::new(windows, vec![0.0; 30]).unwrap();
        let gram = gram_pairwise(&sample, &p).unwrap();
        assert!(gram.psd_within(1e-8));
        let (lo, hi) = gram.value_range();
        assert!(lo >= 1.0 - 1e-12);
        assert!(hi <= p.value_bound() + 1e-12);
    }

    #[test]
    fn pairwise_extension_duplicates_training_columns() {
        let p = params(0.5, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let windows: Vec<Window> = (0..6)
            .map(|_| random_window(&mut rng, 5, 1, 1.0))
            .collect();
        let duplicate = windows[2].clone();
        let sample = SampleSet::new(windows, vec![0.0; 6]).unwrap();
        let gram = gram_pairwise(&sample, &p).unwrap();
        let kernel = GramKernel::Volterra(p);
        let extended = gram_extend(&gram, &sample, &[duplicate], &kernel).unwrap();
        let ext = extended.extension().unwrap();
        for i in 0..6 {
            assert_eq!(ext[(i, 0)], gram.value(i, 2));
        }
    }

    #[test]
    fn empty_extension_leaves_the_gram_unchanged() {
        let p = params(0.5, 0.5, 1.0);
        let w = window(&[0.1, 0.2]);
        let sample = SampleSet::new(vec![w], vec![0.0]).unwrap();
        let gram = gram_pairwise(&sample, &p).unwrap();
        let extended = gram_extend(&gram, &sample, &[], &GramKernel::Volterra(p)).unwrap();
        assert_eq!(extended.extension_width(), 0);
        assert_eq!(extended.value(0, 0), gram.value(0, 0));
    }

    #[test]
    fn streaming_extension_matches_concatenated_oracle() {
        let p = params(0.4, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 10;
        let h = 3;
        let past: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let future: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let sample = SampleSet::nested(Sequence::scalar(&past).unwrap(), vec![0.0; n]).unwrap();
        let gram = gram_streaming(&sample, &p).unwrap();
        let new_inputs: Vec<Window> = future
            .iter()
            .map(|&v| Window::whole(Sequence::scalar(&[v]).unwrap()).unwrap())
            .collect();
        let extended =
            gram_extend(&gram, &sample, &new_inputs, &GramKernel::Volterra(p)).unwrap();
        let ext = extended.extension().unwrap();

        for j in 0..h {
            let mut concatenated = past.clone();
            concatenated.extend_from_slice(&future[..=j]);
            let long = Window::whole(Sequence::scalar(&concatenated).unwrap()).unwrap();
            for i in 0..n {
                let oracle = kernel_sum(sample.window(i), &long, &p, 1e-12).unwrap();
                assert!(
                    (ext[(i, j)] - oracle).abs() < 1e-10,
                    "entry ({i}, {j}): {} vs {oracle}",
                    ext[(i, j)]
                );
            }
        }
    }

    #[test]
    fn extension_rejects_mismatched_parameters() {
        let p = params(0.5, 0.5, 1.0);
        let other = params(0.4, 0.5, 1.0);
        let w = window(&[0.1, 0.2]);
        let sample = SampleSet::new(vec![w.clone()], vec![0.0]).unwrap();
        let gram = gram_pairwise(&sample, &p).unwrap();
        assert!(matches!(
            gram_extend(&gram, &sample, &[w], &GramKernel::Volterra(other)),
            Err(Error::ParamsMismatch)
        ));
    }

    #[test]
    fn tail_perturbation_decays_with_depth() {
        for p in [
            params(0.5, 0.5, 1.0),
            params(0.3, 0.9, 1.0),
            params(0.2, 0.25, 2.0),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(29);
            for &depth in &[5usize, 10, 20] {
                let w = random_window(&mut rng, depth, 1, p.input_bound());
                let v = random_window(&mut rng, depth, 1, p.input_bound());
                let base = p.recursion_base();
                let delta = 1.0;
                let reference = kernel_pair_with_tail(&w, &v, &p, base).unwrap();
                let perturbed = kernel_pair_with_tail(&w, &v, &p, base + delta).unwrap();
                let bound = delta * p.rho().powi(2 * depth as i32);
                assert!(
                    (perturbed - reference).abs() <= bound * (1.0 + 1e-12),
                    "depth {depth}: moved {} > {bound}",
                    (perturbed - reference).abs()
                );
            }
        }
    }

    #[test]
    fn from_values_rejects_asymmetry() {
        let p = params(0.5, 0.5, 1.0);
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 1.0;
        assert!(matches!(
            GramMatrix::from_values(m, GramKernel::Volterra(p), GramMode::Pairwise),
            Err(Error::NotSymmetric)
        ));
    }

    #[test]
    fn multichannel_windows_are_supported() {
        let p = params(0.5, 0.5, 1.0);
        let data = vec![0.1, 0.2, 0.3, -0.3, 0.2, -0.1];
        let w = Window::whole(Sequence::new(data, 3).unwrap()).unwrap();
        let direct = kernel_pair(&w, &w, &p).unwrap();
        let oracle = kernel_sum(&w, &w, &p, 1e-12).unwrap();
        assert!((direct - oracle).abs() < 1e-10);
    }

    #[test]
    fn rolling_sample_gram_matches_oracle_on_windows() {
        let p = params(0.5, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let values: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sample = make_rolling_windows(
            Arc::new(Sequence::scalar(&values).unwrap()),
            6,
            2,
            TargetAggregation::Mean,
        )
        .unwrap();
        let gram = gram_pairwise(&sample, &p).unwrap();
        for i in 0..sample.len() {
            for j in 0..=i {
                let oracle = kernel_sum(sample.window(i), sample.window(j), &p, 1e-12).unwrap();
                assert!((gram.value(i, j) - oracle).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recursion_and_series_agree(
            left in proptest::collection::vec(-1.0f64..1.0, 1..20),
            right in proptest::collection::vec(-1.0f64..1.0, 1..20),
        ) {
            let p = params(0.5, 0.5, 1.0);
            let a = window(&left);
            let b = window(&right);
            let direct = kernel_pair(&a, &b, &p).unwrap();
            let oracle = kernel_sum(&a, &b, &p, 1e-12).unwrap();
            prop_assert!((direct - oracle).abs() < 1e-10);
        }

        #[test]
        fn kernel_is_symmetric_and_bounded(
            left in proptest::collection::vec(-1.0f64..1.0, 1..20),
            right in proptest::collection::vec(-1.0f64..1.0, 1..20),
        ) {
            let p = params(0.5, 0.5, 1.0);
            let a = window(&left);
            let b = window(&right);
            let ab = kernel_pair(&a, &b, &p).unwrap();
            let ba = kernel_pair(&b, &a, &p).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 1.0);
            prop_assert!(ab <= p.value_bound() + 1e-12);
        }

        #[test]
        fn cauchy_schwarz_holds(
            left in proptest::collection::vec(-1.0f64..1.0, 1..20),
            right in proptest::collection::vec(-1.0f64..1.0, 1..20),
        ) {
            let p = params(0.5, 0.5, 1.0);
            let a = window(&left);
            let b = window(&right);
            let ab = kernel_pair(&a, &b, &p).unwrap();
            let aa = kernel_pair(&a, &a, &p).unwrap();
            let bb = kernel_pair(&b, &b, &p).unwrap();
            prop_assert!(ab * ab <= aa * bb * (1.0 + 1e-12));
        }

        #[test]
        fn tighter_tolerance_moves_the_sum_less_than_the_bound(
            left in proptest::collection::vec(-1.0f64..1.0, 1..20),
            right in proptest::collection::vec(-1.0f64..1.0, 1..20),
            exponent in 3u32..10,
        ) {
            let p = params(0.5, 0.5, 1.0);
            let a = window(&left);
            let b = window(&right);
            let tolerance = 10f64.powi(-(exponent as i32));
            let coarse = kernel_sum(&a, &b, &p, tolerance).unwrap();
            let fine = kernel_sum(&a, &b, &p, tolerance / 100.0).unwrap();
            prop_assert!((coarse - fine).abs() < tolerance);
        }
    }
}
