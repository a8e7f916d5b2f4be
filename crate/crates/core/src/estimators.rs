//! Physics extracted from the correlation histograms: the field-operator
//! commutator at zero and non-zero delay, the detection efficiency from
//! shelving bursts, and the closed-form predictions used to check them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::correlator::{CorrelationHistogram, CorrelationKind};
use crate::detection::{mean_detected_per_bin, DetectionConfig};
use crate::error::{config, domain, Error, Result};
use crate::timetag::TICKS_PER_NS;

/// A value with its one-sigma uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    /// `None` in JSON when infinite.
    #[serde(with = "finite_or_null")]
    pub stderr: f64,
}

impl Measurement {
    pub fn new(value: f64, stderr: f64) -> Self {
        Measurement { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Measurement { value, stderr: 0.0 }
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorEstimate {
    pub value: f64,
    #[serde(with = "finite_or_null")]
    pub stderr: f64,
    pub g2_auto_0: Measurement,
    pub g2_cross_0: Measurement,
    pub mean_n: Measurement,
}

/// ⟨[a, a†]⟩ = (g2_auto(0) − g2_cross(0)) · ⟨N⟩, with first-order error
/// propagation treating the three inputs as independent.
pub fn commutator_zero_delay(
    g2_auto_0: Measurement,
    g2_cross_0: Measurement,
    mean_n: Measurement,
) -> Result<CommutatorEstimate> {
    if !(mean_n.value > 0.0) {
        return Err(domain(format!(
            "mean photon number must be positive, got {}",
            mean_n.value
        )));
    }
    let diff = g2_auto_0.value - g2_cross_0.value;
    let value = diff * mean_n.value;
    let stderr = ((mean_n.value * g2_auto_0.stderr).powi(2)
        + (mean_n.value * g2_cross_0.stderr).powi(2)
        + (diff * mean_n.stderr).powi(2))
    .sqrt();
    Ok(CommutatorEstimate {
        value,
        stderr,
        g2_auto_0,
        g2_cross_0,
        mean_n,
    })
}

/// One point of the commutator-versus-delay curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub lag_bins: i64,
    pub lag_ns: f64,
    pub value: f64,
    #[serde(with = "finite_or_null")]
    pub stderr: f64,
}

/// (g2_auto(k) − g2_cross(k)) · ⟨N⟩ for every signed lag k. This is ≈ 1 at
/// k = 0 and ≈ 0 elsewhere, the binned form of [a(t), a†(t′)] = δ(t − t′).
pub fn commutator_vs_delay(
    auto: &CorrelationHistogram,
    cross: &CorrelationHistogram,
    mean_n: f64,
) -> Result<Vec<DelayPoint>> {
    if auto.kind != CorrelationKind::Auto || cross.kind != CorrelationKind::Cross {
        return Err(config(
            "expected an auto- and a cross-correlation histogram",
        ));
    }
    if auto.bin_width != cross.bin_width || auto.max_lag != cross.max_lag {
        return Err(config(format!(
            "histogram shapes differ: bin width {} vs {}, max lag {} vs {}",
            auto.bin_width, cross.bin_width, auto.max_lag, cross.max_lag
        )));
    }
    Ok(cross
        .lags()
        .map(|lag| {
            let a = auto.index_of(lag).unwrap();
            let c = cross.index_of(lag).unwrap();
            DelayPoint {
                lag_bins: lag,
                lag_ns: (lag * auto.bin_width as i64) as f64 / TICKS_PER_NS as f64,
                value: (auto.g2[a] - cross.g2[c]) * mean_n,
                stderr: mean_n * auto.stderr[a].hypot(cross.stderr[c]),
            }
        })
        .collect())
}

fn check_branching(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain(format!("branching ratio {beta} outside (0, 1)")));
    }
    Ok(())
}

/// Probability of detecting `k` photons from one shelving-terminated burst
/// with branching ratio β and detection efficiency η:
/// (1 − β) (βη)^k / (1 + β(η − 1))^(k+1).
pub fn detection_pmf(k: u64, beta: f64, eta: f64) -> Result<f64> {
    check_branching(beta)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain(format!("efficiency {eta} outside [0, 1]")));
    }
    if eta == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let c = 1.0 + beta * (eta - 1.0);
    let q = beta * eta / c;
    let qk = if k <= i32::MAX as u64 {
        q.powi(k as i32)
    } else {
        q.powf(k as f64)
    };
    Ok((1.0 - beta) / c * qk)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub eta: f64,
    pub stderr: f64,
    /// Pearson χ² of the observed counts against the fitted distribution.
    pub fit_residual: f64,
    /// Degrees of freedom of `fit_residual`.
    pub fit_dof: u64,
    pub cycles: u64,
}

/// Maximum-likelihood detection efficiency from a histogram of detected
/// photons per burst (`k → number of bursts`).
///
/// The detected counts are geometric with mean βη/(1 − β), so the MLE is
/// η̂ = k̄ (1 − β)/β. Its error is the inverse observed Fisher information,
/// I(η̂) = S n / ((S + n) η̂²) with S = Σ k.
pub fn fit_efficiency(counts: &BTreeMap<u64, u64>, beta: f64) -> Result<EfficiencyEstimate> {
    check_branching(beta)?;
    let n = counts.values().fold(0u64, |a, &f| a.saturating_add(f));
    if n == 0 {
        return Err(domain("empty count histogram"));
    }
    let total: f64 = counts.iter().map(|(&k, &f)| k as f64 * f as f64).sum();
    let n_f = counts.values().map(|&f| f as f64).sum::<f64>();
    let mean = total / n_f;
    let eta = mean * (1.0 - beta) / beta;
    if eta > 1.0 {
        return Err(Error::Infeasible(format!(
            "mean of {mean} detected photons per burst implies efficiency {eta} > 1 for branching {beta}"
        )));
    }
    let stderr = if total > 0.0 {
        eta * ((total + n_f) / (total * n_f)).sqrt()
    } else {
        0.0
    };
    let (fit_residual, fit_dof) = chi_square(counts, n_f, beta, eta)?;
    Ok(EfficiencyEstimate {
        eta,
        stderr,
        fit_residual,
        fit_dof,
        cycles: n,
    })
}

/// Pearson χ² with single-k cells while the expected count is at least 5 and
/// one pooled tail cell for the rest.
fn chi_square(counts: &BTreeMap<u64, u64>, n_f: f64, beta: f64, eta: f64) -> Result<(f64, u64)> {
    const MIN_EXPECTED: f64 = 5.0;
    let mut chi2 = 0.0;
    let mut cells = 0u64;
    let mut k = 0u64;
    let mut cdf = 0.0;
    loop {
        let expected = n_f * detection_pmf(k, beta, eta)?;
        if expected < MIN_EXPECTED || k > 1_000_000 {
            break;
        }
        let observed = counts.get(&k).copied().unwrap_or(0) as f64;
        chi2 += (observed - expected).powi(2) / expected;
        cdf += expected / n_f;
        cells += 1;
        k += 1;
    }
    let tail_expected = n_f * (1.0 - cdf).max(0.0);
    let tail_observed: f64 = counts.range(k..).map(|(_, &f)| f as f64).sum();
    if tail_expected > 0.0 {
        chi2 += (tail_observed - tail_expected).powi(2) / tail_expected;
        cells += 1;
    }
    Ok((chi2, cells.saturating_sub(2)))
}

/// Histogram of per-burst counts.
pub fn count_histogram(counts: &[u64]) -> BTreeMap<u64, u64> {
    let mut h = BTreeMap::new();
    for &k in counts {
        *h.entry(k).or_insert(0) += 1;
    }
    h
}

/// g2_auto(0) of coherent light: 1 + 1/⟨N⟩.
pub fn coherent_g2_auto_prediction(mean_n: f64) -> Result<f64> {
    if !(mean_n > 0.0) {
        return Err(domain(format!(
            "mean photon number must be positive, got {mean_n}"
        )));
    }
    Ok(1.0 + 1.0 / mean_n)
}

/// Predicted g2_auto(0) − g2_cross(0) = 1 / N_det, with N_det from the
/// detection geometry and efficiencies.
pub fn predicted_zero_delay_difference(
    cfg: &DetectionConfig,
    photons_per_coherence_time: f64,
    coherence_time: f64,
) -> Result<f64> {
    let n = mean_detected_per_bin(cfg, photons_per_coherence_time, coherence_time)?;
    if n <= 0.0 {
        return Err(domain("no photons are detected"));
    }
    Ok(1.0 / n)
}
