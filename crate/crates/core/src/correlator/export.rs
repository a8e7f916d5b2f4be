//! Histogram exports: plot-ready CSV and a self-describing JSON document.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{g2_statistical_error, CorrelationHistogram, CorrelationKind};
use crate::error::{Error, Result};
use crate::timetag::{Ticks, TICKS_PER_NS};

/// Where a histogram came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(seed: Option<u64>, config_hash: Option<String>) -> Self {
        Provenance {
            seed,
            config_hash,
            tool_version: crate::VERSION.to_string(),
        }
    }
}

/// JSON form of a [`CorrelationHistogram`]. Infinite errors are written as
/// `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramDocument {
    pub kind: CorrelationKind,
    pub bin_width_ps: Ticks,
    pub max_lag_ps: Ticks,
    pub n_bins: u64,
    pub duration_ps: Ticks,
    pub n1: u64,
    pub n2: u64,
    pub lags: Vec<i64>,
    pub raw_pair_counts: Vec<u64>,
    pub g2: Vec<f64>,
    pub stderr: Vec<Option<f64>>,
    pub provenance: Provenance,
}

impl HistogramDocument {
    pub fn new(h: &CorrelationHistogram, provenance: Provenance) -> Self {
        HistogramDocument {
            kind: h.kind,
            bin_width_ps: h.bin_width,
            max_lag_ps: h.max_lag,
            n_bins: h.n_bins,
            duration_ps: h.duration,
            n1: h.n1,
            n2: h.n2,
            lags: h.lags().collect(),
            raw_pair_counts: h.raw_pair_counts.clone(),
            g2: h.g2.clone(),
            stderr: h
                .stderr
                .iter()
                .map(|&e| e.is_finite().then_some(e))
                .collect(),
            provenance,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(self).expect("histogram documents are serializable");
        s.push('\n');
        s
    }

    /// Parses and checks a document: lag axis, array lengths and counts
    /// must be mutually consistent.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HistogramDocument = serde_json::from_str(text)?;
        doc.histogram()?;
        Ok(doc)
    }

    pub fn histogram(&self) -> Result<CorrelationHistogram> {
        let bad = |msg: String| Err(Error::Format(msg));
        if self.bin_width_ps == 0 {
            return bad("bin width must be positive".into());
        }
        if self.max_lag_ps % self.bin_width_ps != 0 {
            return bad("max lag is not a whole number of bins".into());
        }
        if self.n_bins != self.duration_ps / self.bin_width_ps {
            return bad(format!("n_bins {} inconsistent with duration", self.n_bins));
        }
        let k = self.max_lag_ps / self.bin_width_ps;
        if k > 1 << 24 {
            return bad("max lag too large".into());
        }
        let k = k as i64;
        let expected: Vec<i64> = match self.kind {
            CorrelationKind::Auto => (0..=k).collect(),
            CorrelationKind::Cross => (-k..=k).collect(),
        };
        if self.lags != expected {
            return bad("lag axis does not match kind and max lag".into());
        }
        let n = expected.len();
        if self.raw_pair_counts.len() != n || self.g2.len() != n || self.stderr.len() != n {
            return bad("array lengths do not match the lag axis".into());
        }
        if self.kind == CorrelationKind::Auto && self.n1 != self.n2 {
            return bad("auto-correlation with n1 != n2".into());
        }
        if self.g2.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("g2 values must be finite and non-negative".into());
        }
        if self
            .stderr
            .iter()
            .flatten()
            .any(|e| !(e.is_finite() && *e >= 0.0))
        {
            return bad("stderr values must be finite and non-negative".into());
        }
        let h = CorrelationHistogram {
            kind: self.kind,
            bin_width: self.bin_width_ps,
            max_lag: self.max_lag_ps,
            n_bins: self.n_bins,
            duration: self.duration_ps,
            n1: self.n1,
            n2: self.n2,
            raw_pair_counts: self.raw_pair_counts.clone(),
            g2: self.g2.clone(),
            stderr: self
                .stderr
                .iter()
                .map(|e| e.unwrap_or(f64::INFINITY))
                .collect(),
        };
        Ok(h)
    }
}

impl CorrelationHistogram {
    pub fn to_json(&self, provenance: Provenance) -> String {
        HistogramDocument::new(self, provenance).to_json()
    }

    /// Parses a histogram document; stored errors are kept as written.
    pub fn from_json(text: &str) -> Result<(Self, Provenance)> {
        let doc = HistogramDocument::from_json(text)?;
        Ok((doc.histogram()?, doc.provenance))
    }

    /// Same histogram with errors recomputed from the pair counts.
    pub fn with_recomputed_errors(self) -> Self {
        g2_statistical_error(self)
    }

    /// CSV with header `lag_ns,g2,stderr,raw_pairs` over signed lags;
    /// auto-correlations are mirrored to negative lags.
    pub fn to_csv(&self) -> String {
        let k = self.max_lag_bins();
        let mut out = String::from("lag_ns,g2,stderr,raw_pairs\n");
        for lag in -k..=k {
            let i = self.index_of(lag).expect("lag within range");
            let lag_ns = (lag * self.bin_width as i64) as f64 / TICKS_PER_NS as f64;
            let err = self.stderr[i];
            let err = if err.is_finite() {
                err.to_string()
            } else {
                "inf".to_string()
            };
            let _ = writeln!(
                out,
                "{lag_ns:.3},{},{err},{}",
                self.g2[i], self.raw_pair_counts[i]
            );
        }
        out
    }
}
