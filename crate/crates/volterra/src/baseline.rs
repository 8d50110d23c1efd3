//! Static comparison kernels on flattened windows.
//!
//! These kernels ignore the sequential structure: a window of `w` rows and
//! `d` channels is flattened time-major (row `i` contributes `d` consecutive
//! coordinates) and fed to an ordinary vector kernel. They provide the RBF
//! comparison point and a polynomial sanity baseline under the same pipeline
//! as the Volterra kernel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{GramKernel, GramMatrix, GramMode};
use crate::sequence::{SampleSet, Window};

/// Parameters of a static baseline kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineParams {
    /// Gaussian kernel `exp(-gamma * ||u - v||^2)` with `gamma > 0`.
    Rbf { gamma: f64 },
    /// Polynomial kernel `(<u, v> + offset)^degree` with `degree >= 1`,
    /// `offset >= 0`.
    Polynomial { degree: u32, offset: f64 },
}

impl BaselineParams {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "RBF width gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(BaselineParams::Rbf { gamma })
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParameter(
                "polynomial degree must be >= 1".into(),
            ));
        }
        if !(offset >= 0.0) || !offset.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "polynomial offset must be nonnegative and finite, got {offset}"
            )));
        }
        Ok(BaselineParams::Polynomial { degree, offset })
    }
}

fn check_pair(a: &Window, b: &Window) -> Result<()> {
    if a.channels() != b.channels() {
        return Err(Error::ChannelMismatch {
            left: a.channels(),
            right: b.channels(),
        });
    }
    if a.width() != b.width() {
        return Err(Error::WidthMismatch {
            left: a.width(),
            right: b.width(),
        });
    }
    Ok(())
}

/// Evaluates a static kernel on two equal-width, equal-channel windows.
pub fn baseline_kernel(a: &Window, b: &Window, params: &BaselineParams) -> Result<f64> {
    check_pair(a, b)?;
    Ok(eval_unchecked(a, b, params))
}

pub(crate) fn eval_unchecked(a: &Window, b: &Window, params: &BaselineParams) -> f64 {
    match *params {
        BaselineParams::Rbf { gamma } => {
            let mut sq_dist = 0.0;
            for i in 0..a.width() {
                for (x, y) in a.row(i).iter().zip(b.row(i)) {
                    let diff = x - y;
                    sq_dist += diff * diff;
                }
            }
            (-gamma * sq_dist).exp()
        }
        BaselineParams::Polynomial { degree, offset } => {
            let mut dot = 0.0;
            for i in 0..a.width() {
                for (x, y) in a.row(i).iter().zip(b.row(i)) {
                    dot += x * y;
                }
            }
            (dot + offset).powi(degree as i32)
        }
    }
}

/// Symmetric Gram matrix of pairwise baseline kernel values.
pub fn baseline_gram(sample: &SampleSet, params: &BaselineParams) -> Result<GramMatrix> {
    let n = sample.len();
    if let Some(first) = sample.windows().first() {
        for window in sample.windows() {
            check_pair(first, window)?;
        }
    }
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let value = eval_unchecked(sample.window(i), sample.window(j), params);
            values[(i, j)] = value;
            values[(j, i)] = value;
        }
    }
    Ok(GramMatrix::new_unchecked(
        values,
        GramKernel::Baseline(*params),
        GramMode::Pairwise,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::Sequence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn window(values: &[f64]) -> Window {
        Window::whole(Sequence::scalar(values).unwrap()).unwrap()
    }

    #[test]
    fn rbf_identical_windows_give_one() {
        let params = BaselineParams::rbf(1.0).unwrap();
        let w = window(&[1.0, -2.0, 3.0]);
        assert_eq!(baseline_kernel(&w, &w, &params).unwrap(), 1.0);
    }

    #[test]
    fn rbf_unit_distance_matches_exp_minus_gamma() {
        let params = BaselineParams::rbf(1.0).unwrap();
        let value = baseline_kernel(&window(&[0.0]), &window(&[1.0]), &params).unwrap();
        assert!((value - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn degree_one_polynomial_is_the_inner_product() {
        let params = BaselineParams::polynomial(1, 0.0).unwrap();
        let value = baseline_kernel(&window(&[1.0, 2.0]), &window(&[3.0, 4.0]), &params).unwrap();
        assert_eq!(value, 11.0);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let params = BaselineParams::rbf(1.0).unwrap();
        let err = baseline_kernel(&window(&[1.0]), &window(&[1.0, 2.0]), &params).unwrap_err();
        assert!(matches!(err, Error::WidthMismatch { left: 1, right: 2 }));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(BaselineParams::rbf(0.0).is_err());
        assert!(BaselineParams::rbf(f64::NAN).is_err());
        assert!(BaselineParams::polynomial(0, 1.0).is_err());
        assert!(BaselineParams::polynomial(2, -1.0).is_err());
    }

    #[test]
    fn single_window_rbf_gram_is_unit() {
        let sample = SampleSet::new(vec![window(&[1.0, 2.0])], vec![0.0]).unwrap();
        let gram = baseline_gram(&sample, &BaselineParams::rbf(0.5).unwrap()).unwrap();
        assert_eq!(gram.n(), 1);
        assert_eq!(gram.value(0, 0), 1.0);
    }

    #[test]
    fn duplicated_window_gram_is_constant() {
        let w = window(&[1.0, 2.0, 3.0]);
        let sample = SampleSet::new(vec![w.clone(), w.clone(), w], vec![0.0; 3]).unwrap();
        let gram = baseline_gram(&sample, &BaselineParams::rbf(2.0).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(gram.value(i, j), 1.0);
            }
        }
    }

    #[test]
    fn random_grams_are_psd_for_both_baselines() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let series: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shared = Arc::new(Sequence::scalar(&series).unwrap());
        let windows: Vec<Window> = (0..30)
            .map(|k| Window::new(Arc::clone(&shared), k % 10, 5).unwrap())
            .collect();
        let n = windows.len();
        let sample = SampleSet::new(windows, vec![0.0; n]).unwrap();

        for params in [
            BaselineParams::rbf(1.5).unwrap(),
            BaselineParams::polynomial(3, 1.0).unwrap(),
        ] {
            let gram = baseline_gram(&sample, &params).unwrap();
            assert!(gram.psd_within(1e-8), "{params:?} gram not PSD");
        }
    }

    #[test]
    fn rbf_values_stay_in_unit_interval_and_hit_one_only_at_equality() {
        let params = BaselineParams::rbf(1.0).unwrap();
        let a = window(&[0.3, -0.4]);
        let b = window(&[0.3, -0.3999999]);
        let value = baseline_kernel(&a, &b, &params).unwrap();
        assert!(value > 0.0 && value < 1.0);
        assert_eq!(baseline_kernel(&a, &a, &params).unwrap(), 1.0);
    }
}
