//! Binned intensity-correlation estimators.
//!
//! With n_b the number of tags in bin b (bin = timestamp / T_bw) over the B
//! complete bins of the window,
//!
//! ```text
//! g2_cross(k) = B · Σ_b n1_b · n2_(b+k) / (N1 · N2)      k ∈ [−K, K]
//! g2_auto(k)  = B · Σ_b n_b  · n_(b+k)  / N²             k ∈ [0, K]
//! ```
//!
//! The sums are pair counts: the number of ordered tag pairs whose bins are
//! `k` apart. They are computed by a sweep over the sorted timestamps with a
//! trailing pointer into the partner stream, so no dense bin arrays are ever
//! built and the cost is O(tags · pairs per window). At `k = 0` the
//! auto-correlation counts every tag paired with itself, i.e. Σ n_b².
//!
//! The first stream is cut into chunks of consecutive tags; each chunk is
//! swept independently and the integer histograms are summed, so parallel
//! and sequential runs agree bit for bit.

mod export;

pub use export::{HistogramDocument, Provenance};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::timetag::{Ticks, TimeTagStream};

/// Tags per work unit.
pub const DEFAULT_CHUNK_LEN: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Auto,
    Cross,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationHistogram {
    pub kind: CorrelationKind,
    /// T_bw in ticks.
    pub bin_width: Ticks,
    /// K · T_bw, the largest lag reported.
    pub max_lag: Ticks,
    /// Complete bins B in the observation window.
    pub n_bins: u64,
    pub duration: Ticks,
    /// Tags of each stream inside the complete bins (equal for auto).
    pub n1: u64,
    pub n2: u64,
    /// Indexed by lag: `k` for auto, `k + K` for cross.
    pub raw_pair_counts: Vec<u64>,
    pub g2: Vec<f64>,
    /// Poisson pair-count error; +∞ where no pairs were counted.
    pub stderr: Vec<f64>,
}

impl CorrelationHistogram {
    /// K, the largest lag in bins.
    pub fn max_lag_bins(&self) -> i64 {
        (self.max_lag / self.bin_width) as i64
    }

    /// Lags (in bins) in storage order.
    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let k = self.max_lag_bins();
        let first = match self.kind {
            CorrelationKind::Auto => 0,
            CorrelationKind::Cross => -k,
        };
        first..=k
    }

    /// Storage index for a signed lag; auto-correlations are even in the lag.
    pub fn index_of(&self, lag: i64) -> Option<usize> {
        let k = self.max_lag_bins();
        if lag.abs() > k {
            return None;
        }
        Some(match self.kind {
            CorrelationKind::Auto => lag.unsigned_abs() as usize,
            CorrelationKind::Cross => (lag + k) as usize,
        })
    }

    pub fn g2_at(&self, lag: i64) -> Option<f64> {
        self.index_of(lag).map(|i| self.g2[i])
    }

    pub fn stderr_at(&self, lag: i64) -> Option<f64> {
        self.index_of(lag).map(|i| self.stderr[i])
    }

    pub fn raw_at(&self, lag: i64) -> Option<u64> {
        self.index_of(lag).map(|i| self.raw_pair_counts[i])
    }

    /// Mean detected tags per bin of the first stream.
    pub fn mean_counts_per_bin(&self) -> f64 {
        if self.n_bins == 0 {
            0.0
        } else {
            self.n1 as f64 / self.n_bins as f64
        }
    }

    fn from_raw(
        kind: CorrelationKind,
        bin_width: Ticks,
        max_lag_bins: u64,
        duration: Ticks,
        n1: u64,
        n2: u64,
        raw_pair_counts: Vec<u64>,
    ) -> Self {
        let n_bins = duration / bin_width;
        let g2 = normalize(&raw_pair_counts, n_bins, n1, n2);
        let h = CorrelationHistogram {
            kind,
            bin_width,
            max_lag: max_lag_bins * bin_width,
            n_bins,
            duration,
            n1,
            n2,
            stderr: vec![f64::INFINITY; raw_pair_counts.len()],
            raw_pair_counts,
            g2,
        };
        g2_statistical_error(h)
    }
}

fn normalize(raw: &[u64], n_bins: u64, n1: u64, n2: u64) -> Vec<f64> {
    let denom = n1 as f64 * n2 as f64;
    raw.iter()
        .map(|&c| {
            if denom > 0.0 {
                n_bins as f64 * c as f64 / denom
            } else {
                0.0
            }
        })
        .collect()
}

/// Fills `stderr[k] = g2[k] / √raw[k]`, or +∞ where `raw[k] = 0`.
pub fn g2_statistical_error(mut h: CorrelationHistogram) -> CorrelationHistogram {
    h.stderr = h
        .raw_pair_counts
        .iter()
        .zip(&h.g2)
        .map(|(&c, &g)| {
            if c == 0 {
                f64::INFINITY
            } else {
                g / (c as f64).sqrt()
            }
        })
        .collect();
    h
}

/// Correlator settings shared by the auto and cross estimators.
#[derive(Clone, Copy, Debug)]
pub struct Correlator {
    bin_width: Ticks,
    max_lag_bins: u64,
    chunk_len: usize,
}

impl Correlator {
    pub fn new(bin_width: Ticks, max_lag: Ticks) -> Result<Self> {
        if bin_width == 0 {
            return Err(domain("bin width must be positive"));
        }
        let max_lag_bins = max_lag / bin_width;
        if max_lag_bins > 1 << 24 {
            return Err(domain(format!(
                "max lag of {max_lag_bins} bins is too large"
            )));
        }
        Ok(Correlator {
            bin_width,
            max_lag_bins,
            chunk_len: DEFAULT_CHUNK_LEN,
        })
    }

    pub fn with_chunk_len(mut self, chunk_len: usize) -> Self {
        self.chunk_len = chunk_len.max(1);
        self
    }

    /// Tags in complete bins.
    fn complete<'a>(&self, s: &'a TimeTagStream) -> &'a [Ticks] {
        let end = (s.duration() / self.bin_width).saturating_mul(self.bin_width);
        &s.timestamps()[..s.count_before(end)]
    }

    pub fn cross(&self, s1: &TimeTagStream, s2: &TimeTagStream) -> Result<CorrelationHistogram> {
        if s1.duration() != s2.duration() || s1.resolution() != s2.resolution() {
            return Err(config(format!(
                "cannot correlate streams over {} and {} ticks",
                s1.duration(),
                s2.duration()
            )));
        }
        let (t1, t2) = (self.complete(s1), self.complete(s2));
        let k = self.max_lag_bins;
        let width = 2 * k as usize + 1;
        let raw = self.sum_chunks(t1.len(), width, |range, counts| {
            cross_sweep(&t1[range], t2, self.bin_width, k, counts)
        });
        Ok(CorrelationHistogram::from_raw(
            CorrelationKind::Cross,
            self.bin_width,
            k,
            s1.duration(),
            t1.len() as u64,
            t2.len() as u64,
            raw,
        ))
    }

    pub fn auto(&self, s: &TimeTagStream) -> CorrelationHistogram {
        let t = self.complete(s);
        let k = self.max_lag_bins;
        let raw = self.sum_chunks(t.len(), k as usize + 1, |range, counts| {
            auto_sweep(t, range, self.bin_width, k, counts)
        });
        let n = t.len() as u64;
        CorrelationHistogram::from_raw(
            CorrelationKind::Auto,
            self.bin_width,
            k,
            s.duration(),
            n,
            n,
            raw,
        )
    }

    fn sum_chunks<F>(&self, n: usize, width: usize, sweep: F) -> Vec<u64>
    where
        F: Fn(std::ops::Range<usize>, &mut [u64]) + Sync,
    {
        let chunks: Vec<_> = (0..n)
            .step_by(self.chunk_len)
            .map(|s| s..(s + self.chunk_len).min(n))
            .collect();
        chunks
            .into_par_iter()
            .map(|range| {
                let mut counts = vec![0u64; width];
                sweep(range, &mut counts);
                counts
            })
            .reduce(
                || vec![0u64; width],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }
}

/// Counts pairs (a ∈ `t1`, b ∈ `t2`) with bin(b) − bin(a) ∈ [−k, k] into
/// `counts[bin(b) − bin(a) + k]`.
fn cross_sweep(t1: &[Ticks], t2: &[Ticks], bw: Ticks, k: u64, counts: &mut [u64]) {
    let Some(&first) = t1.first() else { return };
    let start = ((first / bw).saturating_sub(k)) * bw;
    let t2 = &t2[t2.partition_point(|&x| x < start)..];
    let mut lo = 0usize;
    for &a in t1 {
        let bin_a = a / bw;
        let lo_t = bin_a.saturating_sub(k) * bw;
        while lo < t2.len() && t2[lo] < lo_t {
            lo += 1;
        }
        let hi_t = (bin_a + k + 1).saturating_mul(bw);
        let offset = k.wrapping_sub(bin_a);
        for &b in &t2[lo..] {
            if b >= hi_t {
                break;
            }
            counts[(b / bw).wrapping_add(offset) as usize] += 1;
        }
    }
}

/// Counts ordered pairs (i, j) of `t` with i in `range` and
/// bin(t_j) − bin(t_i) ∈ [0, k]. Pairs inside one bin are ordered both ways
/// and each tag is paired with itself, giving Σ n_b² at lag 0.
fn auto_sweep(t: &[Ticks], range: std::ops::Range<usize>, bw: Ticks, k: u64, counts: &mut [u64]) {
    for i in range {
        let bin_i = t[i] / bw;
        let hi_t = (bin_i + k + 1).saturating_mul(bw);
        counts[0] += 1;
        for &b in &t[i + 1..] {
            if b >= hi_t {
                break;
            }
            let d = (b / bw - bin_i) as usize;
            counts[d] += if d == 0 { 2 } else { 1 };
        }
    }
}

/// Normalised cross-correlation of two detector streams over signed lags
/// `[−max_lag, max_lag]`.
pub fn cross_correlate(
    s1: &TimeTagStream,
    s2: &TimeTagStream,
    bin_width: Ticks,
    max_lag: Ticks,
) -> Result<CorrelationHistogram> {
    Correlator::new(bin_width, max_lag)?.cross(s1, s2)
}

/// Normalised auto-correlation of one stream over lags `[0, max_lag]`,
/// self-pairs included at zero lag.
pub fn auto_correlate(
    s: &TimeTagStream,
    bin_width: Ticks,
    max_lag: Ticks,
) -> Result<CorrelationHistogram> {
    Ok(Correlator::new(bin_width, max_lag)?.auto(s))
}
