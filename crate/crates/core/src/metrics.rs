//! Sequence quality measures: batch sizes, changeovers, color differentiation,
//! decreasing-subsequence sortedness, index width, worsening factors and the
//! small statistics kit (summary stats, Pearson, orthogonal regression).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("sequence is empty")]
    EmptySequence,
    #[error("sequence of length {len} is shorter than the window {window}")]
    SequenceTooShort { len: usize, window: usize },
    #[error("blend number {0} occurs more than once")]
    DuplicateBlendNumber(u64),
    #[error("baseline value is zero")]
    ZeroBaseline,
    #[error("degenerate regression input: {0}")]
    DegenerateInput(&'static str),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

/// Maximal same-color runs of a sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub len: usize,
    pub batch_count: usize,
    /// `len / batch_count`, zero for the empty sequence.
    pub abs: Ratio<u64>,
    /// Run length -> number of runs with that length.
    pub batch_length_histogram: BTreeMap<usize, usize>,
}

impl BatchStats {
    pub fn abs_f64(&self) -> f64 {
        *self.abs.numer() as f64 / *self.abs.denom() as f64
    }

    /// Run length -> number of cars sitting in runs of that length.
    pub fn cars_by_length(&self) -> BTreeMap<usize, usize> {
        self.batch_length_histogram
            .iter()
            .map(|(&len, &count)| (len, len * count))
            .collect()
    }

    pub fn changeovers(&self) -> usize {
        self.batch_count.saturating_sub(1)
    }
}

/// Lengths of the maximal runs of equal elements, in order.
pub fn run_lengths<T: PartialEq>(seq: &[T]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut iter = seq.iter();
    let Some(mut current) = iter.next() else {
        return runs;
    };
    let mut len = 1;
    for x in iter {
        if x == current {
            len += 1;
        } else {
            runs.push(len);
            current = x;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn batch_stats<T: PartialEq>(seq: &[T]) -> BatchStats {
    let runs = run_lengths(seq);
    let mut hist = BTreeMap::new();
    for &r in &runs {
        *hist.entry(r).or_insert(0) += 1;
    }
    let abs = if runs.is_empty() {
        Ratio::from_integer(0)
    } else {
        Ratio::new(seq.len() as u64, runs.len() as u64)
    };
    BatchStats {
        len: seq.len(),
        batch_count: runs.len(),
        abs,
        batch_length_histogram: hist,
    }
}

pub fn color_changeovers<T: PartialEq>(seq: &[T]) -> usize {
    seq.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Changeovers per car.
pub fn cpc<T: PartialEq>(seq: &[T]) -> Result<f64, MetricsError> {
    cpc_from_totals(color_changeovers(seq), seq.len())
}

pub fn cpc_from_totals(changeovers: usize, cars: usize) -> Result<f64, MetricsError> {
    if cars == 0 {
        return Err(MetricsError::EmptySequence);
    }
    Ok(changeovers as f64 / cars as f64)
}

/// CPC reduction implied by a relative batch-size gain: `1 - 1 / (1 + gain)`.
pub fn cpc_reduction_from_abs_gain(gain: f64) -> f64 {
    1.0 - 1.0 / (1.0 + gain)
}

/// Histogram of distinct-color counts over every window of `window` consecutive cars.
pub fn color_differentiation<T: Hash + Eq>(
    seq: &[T],
    window: usize,
) -> Result<BTreeMap<usize, usize>, MetricsError> {
    if window == 0 || seq.len() < window {
        return Err(MetricsError::SequenceTooShort {
            len: seq.len(),
            window,
        });
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for x in &seq[..window] {
        *counts.entry(x).or_insert(0) += 1;
    }
    let mut hist = BTreeMap::new();
    *hist.entry(counts.len()).or_insert(0) += 1;
    for i in window..seq.len() {
        *counts.entry(&seq[i]).or_insert(0) += 1;
        let out = &seq[i - window];
        let c = counts.get_mut(out).expect("present");
        *c -= 1;
        if *c == 0 {
            counts.remove(out);
        }
        *hist.entry(counts.len()).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Fraction of windows with at most `max_colors` distinct colors.
pub fn differentiation_mass_at_most(hist: &BTreeMap<usize, usize>, max_colors: usize) -> f64 {
    let total: usize = hist.values().sum();
    if total == 0 {
        return 0.0;
    }
    hist.range(..=max_colors).map(|(_, &c)| c).sum::<usize>() as f64 / total as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SortednessStats {
    pub lds: usize,
    /// Length of the longest decreasing subsequence ending at each element.
    pub per_element_lds: Vec<usize>,
    pub expected_length: f64,
    pub median_length: f64,
}

fn check_distinct(seq: &[u64]) -> Result<(), MetricsError> {
    let mut seen = HashSet::with_capacity(seq.len());
    for &x in seq {
        if !seen.insert(x) {
            return Err(MetricsError::DuplicateBlendNumber(x));
        }
    }
    Ok(())
}

/// Decreasing-subsequence profile of a blend-number sequence (quadratic DP).
pub fn sortedness(seq: &[u64]) -> Result<SortednessStats, MetricsError> {
    check_distinct(seq)?;
    let mut per = vec![1usize; seq.len()];
    for i in 0..seq.len() {
        for j in 0..i {
            if seq[j] > seq[i] && per[j] + 1 > per[i] {
                per[i] = per[j] + 1;
            }
        }
    }
    let lds = per.iter().copied().max().unwrap_or(0);
    let (expected_length, median_length) = if per.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = per.iter().sum::<usize>() as f64 / per.len() as f64;
        let mut sorted = per.clone();
        sorted.sort_unstable();
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid] as f64
        } else {
            (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
        };
        (mean, median)
    };
    Ok(SortednessStats {
        lds,
        per_element_lds: per,
        expected_length,
        median_length,
    })
}

/// Longest decreasing subsequence length in `O(n log n)`.
pub fn lds_fast(seq: &[u64]) -> Result<usize, MetricsError> {
    check_distinct(seq)?;
    Ok(lds_unchecked(seq))
}

/// `lds_fast` without the distinctness check; callers guarantee distinct values.
pub(crate) fn lds_unchecked(seq: &[u64]) -> usize {
    // tails[k]: largest possible last element of a decreasing run of length k+1;
    // tails is strictly decreasing.
    let mut tails: Vec<u64> = Vec::with_capacity(64);
    for &x in seq {
        let pos = tails.partition_point(|&t| t > x);
        if pos == tails.len() {
            tails.push(x);
        } else {
            tails[pos] = x;
        }
    }
    tails.len()
}

/// `LDS / ABS`, the enqueue tie-breaker. `ABS >= 1` for non-empty input.
pub fn lds_abs_ratio<T: PartialEq>(
    colors: &[T],
    blends: &[u64],
) -> Result<Ratio<u64>, MetricsError> {
    if colors.is_empty() || blends.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let lds = lds_fast(blends)?;
    let runs = run_lengths(colors).len();
    Ok(Ratio::new((lds * runs) as u64, colors.len() as u64))
}

/// Population standard deviation of the positions of one planned-date group.
pub fn index_width(positions: &[f64]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let n = positions.len() as f64;
    let mean = positions.iter().sum::<f64>() / n;
    (positions.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `leaving / entering`.
pub fn worsening_factor(entering: f64, leaving: f64) -> Result<f64, MetricsError> {
    if entering == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(leaving / entering)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation, `None` below two samples.
    pub std: Option<f64>,
    /// Standard error of the mean, `None` below two samples.
    pub sem: Option<f64>,
}

impl SummaryStats {
    pub fn std(&self) -> Result<f64, MetricsError> {
        self.std.ok_or(MetricsError::InsufficientSamples {
            needed: 2,
            got: self.n,
        })
    }

    pub fn sem(&self) -> Result<f64, MetricsError> {
        self.sem.ok_or(MetricsError::InsufficientSamples {
            needed: 2,
            got: self.n,
        })
    }
}

pub fn summary_stats(samples: &[f64]) -> Result<SummaryStats, MetricsError> {
    let n = samples.len();
    if n == 0 {
        return Err(MetricsError::InsufficientSamples { needed: 1, got: 0 });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let (std, sem) = if n >= 2 {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        (Some(std), Some(std / (n as f64).sqrt()))
    } else {
        (None, None)
    };
    Ok(SummaryStats { n, mean, std, sem })
}

struct Moments {
    mx: f64,
    my: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Result<Moments, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::DegenerateInput("x and y differ in length"));
    }
    if x.len() < 3 {
        return Err(MetricsError::DegenerateInput("need at least three points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateInput("zero variance"));
    }
    Ok(Moments {
        mx,
        my,
        sxx,
        syy,
        sxy,
    })
}

pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let m = moments(x, y)?;
    Ok(m.sxy / (m.sxx * m.syy).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Orthogonal (Deming, error-variance ratio 1) regression of `y` on `x`.
pub fn deming_regression(x: &[f64], y: &[f64]) -> Result<LineFit, MetricsError> {
    let m = moments(x, y)?;
    if m.sxy == 0.0 {
        return Err(MetricsError::DegenerateInput(
            "uncorrelated input has no orthogonal direction",
        ));
    }
    let d = m.syy - m.sxx;
    let slope = (d + (d * d + 4.0 * m.sxy * m.sxy).sqrt()) / (2.0 * m.sxy);
    Ok(LineFit {
        slope,
        intercept: m.my - slope * m.mx,
    })
}
