use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized equal-width histogram over a fixed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Bin frequencies summing to 1, or all zero for an empty input.
    pub frequencies: Vec<f64>,
    /// Number of values the histogram was built from.
    pub count: usize,
}

impl Histogram {
    pub fn bin_count(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * (self.hi - self.lo) / self.bin_count() as f64
    }

    fn check_compatible(&self, other: &Histogram) -> Result<()> {
        if self.bin_count() != other.bin_count() || self.lo != other.lo || self.hi != other.hi {
            return Err(Error::BinningMismatch(format!(
                "{} bins over [{}, {}] vs {} bins over [{}, {}]",
                self.bin_count(),
                self.lo,
                self.hi,
                other.bin_count(),
                other.lo,
                other.hi
            )));
        }
        Ok(())
    }
}

/// Range used for a characteristic across a whole collection. A degenerate
/// span (all values equal) is widened by 0.5 on each side so the histogram
/// stays well defined.
pub fn global_range(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .into_iter()
        .fold(None, |acc: Option<(f64, f64)>, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })?;
    if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
        Some((lo - 0.5, hi + 0.5))
    } else {
        Some((lo, hi))
    }
}

/// Equal-width histogram of `values` over `[lo, hi]`; a value equal to `hi`
/// lands in the last bin and values outside the range are clamped to the
/// edge bins. An empty input yields all-zero frequencies.
pub fn build_histogram(values: &[f64], bin_count: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bin_count < 2 {
        return Err(Error::input("a histogram needs at least 2 bins"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::input(format!("invalid histogram range [{lo}, {hi}]")));
    }
    let mut counts = vec![0usize; bin_count];
    let width = hi - lo;
    for &v in values {
        if v.is_nan() {
            return Err(Error::input("cannot bin NaN"));
        }
        let pos = ((v - lo) / width * bin_count as f64).floor();
        let bin = if pos < 0.0 { 0 } else { (pos as usize).min(bin_count - 1) };
        counts[bin] += 1;
    }
    let n = values.len();
    let frequencies = counts
        .into_iter()
        .map(|c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    Ok(Histogram {
        lo,
        hi,
        frequencies,
        count: n,
    })
}

/// Euclidean distance between two histograms as vectors, scaled by
/// `1/sqrt(2)` so that disjoint unit-mass histograms are at distance 1.
pub fn hist_euclidean(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    h1.check_compatible(h2)?;
    let sq: f64 = h1
        .frequencies
        .iter()
        .zip(&h2.frequencies)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq.sqrt() / std::f64::consts::SQRT_2).min(1.0))
}

/// Square root of the base-2 Jensen-Shannon divergence (a metric with
/// values in `[0, 1]`).
pub fn jensen_shannon(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    h1.check_compatible(h2)?;
    let mut divergence = 0.0;
    for (&p, &q) in h1.frequencies.iter().zip(&h2.frequencies) {
        let m = 0.5 * (p + q);
        let term = |x: f64| if x > 0.0 { 0.5 * x * (x / m).log2() } else { 0.0 };
        divergence += term(p) + term(q);
    }
    Ok(divergence.clamp(0.0, 1.0).sqrt())
}

/// Per-bin mean absolute difference between the first histogram (the star
/// center) and each of the following ones (its branch neighbors).
pub fn per_bin_variation(histograms: &[Histogram]) -> Result<Vec<f64>> {
    let (center, neighbors) = histograms
        .split_first()
        .filter(|(_, rest)| !rest.is_empty())
        .ok_or_else(|| Error::input("per-bin variation needs a center and at least one neighbor"))?;
    let mut out = vec![0.0; center.bin_count()];
    for h in neighbors {
        center.check_compatible(h)?;
        for (acc, (c, f)) in out.iter_mut().zip(center.frequencies.iter().zip(&h.frequencies)) {
            *acc += (c - f).abs();
        }
    }
    let k = neighbors.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    Ok(out)
}
