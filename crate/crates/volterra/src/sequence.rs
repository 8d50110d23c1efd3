//! Finite-sample representations of semi-infinite inputs.
//!
//! A [`Sequence`] stores the observed part of a semi-infinite input: row `i`
//! of an `n`-row sequence sits at time `-(n-1)+i`, so the last row is time 0
//! and everything before the first row is implicitly zero. Zero left-padding
//! is a property of the kernel evaluation (its recursion base case), not of
//! the stored data; [`Window`]s carry only their finite content.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite multivariate real time series: `len` rows of `channels` entries,
/// stored row-major, chronologically ordered (last row is time 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    data: Vec<f64>,
    channels: usize,
}

impl Sequence {
    /// Builds a sequence from row-major data. `data.len()` must be a multiple
    /// of `channels` and every entry must be finite.
    pub fn new(data: Vec<f64>, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter(
                "sequence needs at least one channel".into(),
            ));
        }
        if data.len() % channels != 0 {
            return Err(Error::InvalidParameter(format!(
                "data length {} is not a multiple of {} channels",
                data.len(),
                channels
            )));
        }
        for (i, value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    row: i / channels,
                    channel: i % channels,
                });
            }
        }
        Ok(Sequence { data, channels })
    }

    /// Single-channel sequence from scalar observations.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Sequence::new(values.to_vec(), 1)
    }

    /// The empty sequence with the given channel count; under zero padding it
    /// behaves as the all-zero input.
    pub fn empty(channels: usize) -> Self {
        Sequence {
            data: Vec::new(),
            channels: channels.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    /// Drops the last `tau` rows, shifting the series toward the past.
    /// Delaying by the full length or more saturates at the empty sequence.
    pub fn delay(&self, tau: usize) -> Sequence {
        let keep = self.len().saturating_sub(tau);
        Sequence {
            data: self.data[..keep * self.channels].to_vec(),
            channels: self.channels,
        }
    }

    /// The time-0 entry: the last row, or the zero vector for the empty
    /// sequence (zero-padding convention).
    pub fn project_last(&self) -> Vec<f64> {
        if self.is_empty() {
            vec![0.0; self.channels]
        } else {
            self.row(self.len() - 1).to_vec()
        }
    }

    /// Maximum Euclidean row norm; 0 for the empty sequence.
    pub fn sup_norm(&self) -> f64 {
        self.rows()
            .map(row_norm)
            .fold(0.0, |acc: f64, norm| acc.max(norm))
    }
}

pub(crate) fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A contiguous view into a shared [`Sequence`]. For all kernel purposes it
/// behaves as a semi-infinite input equal to zero before its first row.
#[derive(Debug, Clone)]
pub struct Window {
    series: Arc<Sequence>,
    start: usize,
    width: usize,
}

impl Window {
    pub fn new(series: Arc<Sequence>, start: usize, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidParameter("window width must be >= 1".into()));
        }
        if start + width > series.len() {
            return Err(Error::InvalidParameter(format!(
                "window [{start}, {}) exceeds series length {}",
                start + width,
                series.len()
            )));
        }
        Ok(Window {
            series,
            start,
            width,
        })
    }

    /// A window covering an entire (non-empty) sequence.
    pub fn whole(series: Sequence) -> Result<Self> {
        let len = series.len();
        Window::new(Arc::new(series), 0, len)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.series.channels()
    }

    pub fn series(&self) -> &Arc<Sequence> {
        &self.series
    }

    /// Row `i` counted from the window's first (oldest) entry.
    pub fn row(&self, i: usize) -> &[f64] {
        self.series.row(self.start + i)
    }

    /// Row `j` steps back from time 0 (the window's last entry).
    pub fn row_from_end(&self, j: usize) -> &[f64] {
        self.series.row(self.start + self.width - 1 - j)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.width)
            .map(|i| row_norm(self.row(i)))
            .fold(0.0, |acc: f64, norm| acc.max(norm))
    }

    /// Copies the window content into an owned sequence.
    pub fn to_sequence(&self) -> Sequence {
        let mut data = Vec::with_capacity(self.width * self.channels());
        for i in 0..self.width {
            data.extend_from_slice(self.row(i));
        }
        Sequence {
            data,
            channels: self.channels(),
        }
    }

    pub fn content_eq(&self, other: &Window) -> bool {
        self.width == other.width
            && self.channels() == other.channels()
            && (0..self.width).all(|i| self.row(i) == other.row(i))
    }
}

/// How a window's forecast target is aggregated over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetAggregation {
    /// Mean of the next `horizon` values.
    #[default]
    Mean,
    /// Last of the next `horizon` values.
    Last,
}

/// An ordered collection of input windows with aligned scalar targets.
///
/// Ordering matches the Gram indexing of nested truncations: entry `i`
/// corresponds to the truncation ending `n - 1 - i` steps before time 0.
#[derive(Debug, Clone)]
pub struct SampleSet {
    windows: Vec<Window>,
    targets: Vec<f64>,
}

impl SampleSet {
    pub fn new(windows: Vec<Window>, targets: Vec<f64>) -> Result<Self> {
        if windows.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: windows.len(),
                right: targets.len(),
            });
        }
        Ok(SampleSet { windows, targets })
    }

    /// The nested truncations of a single series: windows are the prefixes of
    /// length 1, 2, ..., n, each aligned with the target observed at its final
    /// time step.
    pub fn nested(series: Sequence, targets: Vec<f64>) -> Result<Self> {
        if series.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: series.len(),
                right: targets.len(),
            });
        }
        let shared = Arc::new(series);
        let windows = (1..=shared.len())
            .map(|width| Window::new(Arc::clone(&shared), 0, width))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet { windows, targets })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn window(&self, i: usize) -> &Window {
        &self.windows[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// The contiguous sub-sample `[start, end)`.
    pub fn subset(&self, start: usize, end: usize) -> Result<SampleSet> {
        if start > end || end > self.len() {
            return Err(Error::Config(format!(
                "subset [{start}, {end}) out of range for {} samples",
                self.len()
            )));
        }
        Ok(SampleSet {
            windows: self.windows[start..end].to_vec(),
            targets: self.targets[start..end].to_vec(),
        })
    }

    /// Splits off the last `held_out` entries, e.g. for rolling validation.
    pub fn split_tail(&self, held_out: usize) -> Result<(SampleSet, SampleSet)> {
        if held_out >= self.len() {
            return Err(Error::Config(format!(
                "cannot hold out {held_out} of {} samples",
                self.len()
            )));
        }
        let cut = self.len() - held_out;
        let head = SampleSet {
            windows: self.windows[..cut].to_vec(),
            targets: self.targets[..cut].to_vec(),
        };
        let tail = SampleSet {
            windows: self.windows[cut..].to_vec(),
            targets: self.targets[cut..].to_vec(),
        };
        Ok((head, tail))
    }

    /// If the sample is a set of nested truncations of one series (prefixes of
    /// width 1..=n in order), returns that series.
    pub(crate) fn nested_series(&self) -> Option<&Arc<Sequence>> {
        let first = self.windows.first()?;
        let series = first.series();
        for (i, window) in self.windows.iter().enumerate() {
            if !Arc::ptr_eq(window.series(), series) || window.start() != 0 || window.width() != i + 1
            {
                return None;
            }
        }
        Some(series)
    }
}

/// Cuts a series into rolling windows of `width` rows, each paired with the
/// aggregation of the following `horizon` rows (channel 0 for multichannel
/// series). Window `k` covers rows `[k, k+width)` and its target aggregates
/// rows `[k+width, k+width+horizon)`, so inputs never overlap their target.
pub fn make_rolling_windows(
    series: Arc<Sequence>,
    width: usize,
    horizon: usize,
    target_agg: TargetAggregation,
) -> Result<SampleSet> {
    if width == 0 || horizon == 0 {
        return Err(Error::InvalidParameter(
            "window width and horizon must be >= 1".into(),
        ));
    }
    let required = width + horizon;
    if series.len() < required {
        return Err(Error::SeriesTooShort {
            required,
            actual: series.len(),
        });
    }
    let count = series.len() - width - horizon + 1;
    let mut windows = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for k in 0..count {
        windows.push(Window::new(Arc::clone(&series), k, width)?);
        targets.push(aggregate_target(&series, k + width, horizon, target_agg));
    }
    Ok(SampleSet { windows, targets })
}

/// Target value for rows `[start, start+horizon)` of channel 0.
pub(crate) fn aggregate_target(
    series: &Sequence,
    start: usize,
    horizon: usize,
    agg: TargetAggregation,
) -> f64 {
    match agg {
        TargetAggregation::Mean => {
            (start..start + horizon).map(|i| series.row(i)[0]).sum::<f64>() / horizon as f64
        }
        TargetAggregation::Last => series.row(start + horizon - 1)[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(values: &[f64]) -> Sequence {
        Sequence::scalar(values).unwrap()
    }

    #[test]
    fn rolling_windows_match_definition() {
        let sample = make_rolling_windows(
            Arc::new(seq(&[1.0, 2.0, 3.0, 4.0, 5.0])),
            2,
            2,
            TargetAggregation::Mean,
        )
        .unwrap();
        assert_eq!(sample.len(), 2);
        assert_eq!(sample.window(0).row(0), &[1.0]);
        assert_eq!(sample.window(0).row(1), &[2.0]);
        assert_eq!(sample.window(1).row(0), &[2.0]);
        assert_eq!(sample.window(1).row(1), &[3.0]);
        assert_eq!(sample.targets(), &[3.5, 4.5]);
    }

    #[test]
    fn rolling_window_count_for_length_382() {
        let values: Vec<f64> = (0..382).map(|i| i as f64).collect();
        let sample =
            make_rolling_windows(Arc::new(seq(&values)), 36, 2, TargetAggregation::Mean).unwrap();
        assert_eq!(sample.len(), 345);
    }

    #[test]
    fn rolling_windows_reject_short_series() {
        let err = make_rolling_windows(Arc::new(seq(&[1.0, 2.0])), 2, 2, TargetAggregation::Mean)
            .unwrap_err();
        match err {
            Error::SeriesTooShort { required, actual } => {
                assert_eq!(required, 4);
                assert_eq!(actual, 2);
            }
            other => panic!("expected SeriesTooShort, got {other:?}"),
        }
    }

    #[test]
    fn last_aggregation_takes_final_horizon_row() {
        let sample = make_rolling_windows(
            Arc::new(seq(&[1.0, 2.0, 3.0, 4.0, 5.0])),
            2,
            2,
            TargetAggregation::Last,
        )
        .unwrap();
        assert_eq!(sample.targets(), &[4.0, 5.0]);
    }

    #[test]
    fn delay_drops_most_recent_rows() {
        let s = seq(&[1.0, 2.0, 3.0]);
        assert_eq!(s.delay(1), seq(&[1.0, 2.0]));
        assert_eq!(s.delay(0), s);
        assert!(s.delay(5).is_empty());
    }

    #[test]
    fn project_last_follows_zero_padding() {
        assert_eq!(seq(&[1.0, 2.0, 3.0]).project_last(), vec![3.0]);
        assert_eq!(Sequence::empty(2).project_last(), vec![0.0, 0.0]);
        let two = Sequence::new(vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(two.project_last(), vec![3.0, 4.0]);
    }

    #[test]
    fn sup_norm_is_max_row_euclidean_norm() {
        assert_eq!(seq(&[3.0, -4.0]).sup_norm(), 4.0);
        assert_eq!(Sequence::empty(1).sup_norm(), 0.0);
        let one_step = Sequence::new(vec![3.0, 4.0], 2).unwrap();
        assert_eq!(one_step.sup_norm(), 5.0);
    }

    #[test]
    fn sequence_rejects_non_finite_entries() {
        let err = Sequence::new(vec![1.0, f64::NAN, 3.0, 4.0], 2).unwrap_err();
        match err {
            Error::NonFinite { row, channel } => {
                assert_eq!((row, channel), (0, 1));
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn window_bounds_are_enforced() {
        let series = Arc::new(seq(&[1.0, 2.0, 3.0]));
        assert!(Window::new(Arc::clone(&series), 0, 0).is_err());
        assert!(Window::new(Arc::clone(&series), 2, 2).is_err());
        let w = Window::new(series, 1, 2).unwrap();
        assert_eq!(w.row_from_end(0), &[3.0]);
        assert_eq!(w.row_from_end(1), &[2.0]);
    }

    #[test]
    fn nested_sample_is_recognized() {
        let targets = vec![0.0; 4];
        let sample = SampleSet::nested(seq(&[1.0, 2.0, 3.0, 4.0]), targets).unwrap();
        assert!(sample.nested_series().is_some());
        assert_eq!(sample.window(0).width(), 1);
        assert_eq!(sample.window(3).width(), 4);

        let series = Arc::new(seq(&[1.0, 2.0, 3.0, 4.0]));
        let rolling = SampleSet::new(
            vec![
                Window::new(Arc::clone(&series), 0, 2).unwrap(),
                Window::new(series, 1, 2).unwrap(),
            ],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert!(rolling.nested_series().is_none());
    }

    #[test]
    fn split_tail_preserves_alignment() {
        let values: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let sample =
            make_rolling_windows(Arc::new(seq(&values)), 2, 1, TargetAggregation::Mean).unwrap();
        let (head, tail) = sample.split_tail(3).unwrap();
        assert_eq!(head.len(), sample.len() - 3);
        assert_eq!(tail.len(), 3);
        assert_eq!(tail.targets(), &sample.targets()[sample.len() - 3..]);
        assert!(sample.split_tail(sample.len()).is_err());
    }

    proptest! {
        #[test]
        fn delay_composes_additively(
            values in proptest::collection::vec(-1e3f64..1e3, 0..30),
            a in 0usize..8,
            b in 0usize..8,
        ) {
            let s = seq(&values);
            prop_assert_eq!(s.delay(a).delay(b), s.delay(a + b));
        }

        #[test]
        fn delay_never_increases_sup_norm(
            values in proptest::collection::vec(-1e3f64..1e3, 0..30),
            a in 0usize..8,
        ) {
            let s = seq(&values);
            prop_assert!(s.delay(a).sup_norm() <= s.sup_norm());
        }

        #[test]
        fn rolling_windows_never_leak_target_indices(
            len in 3usize..60,
            width in 1usize..10,
            horizon in 1usize..5,
        ) {
            prop_assume!(len >= width + horizon);
            let values: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let sample = make_rolling_windows(
                Arc::new(seq(&values)), width, horizon, TargetAggregation::Mean,
            ).unwrap();
            prop_assert_eq!(sample.len(), len - width - horizon + 1);
            for (k, window) in sample.windows().iter().enumerate() {
                // Input rows are [k, k+width); target rows start at k+width.
                prop_assert_eq!(window.start(), k);
                prop_assert!(window.start() + window.width() <= k + width);
                let target_first = k + width;
                prop_assert!(window.start() + window.width() <= target_first);
            }
        }
    }
}
