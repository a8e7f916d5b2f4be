//! The measurement chain: beam splitter, lossy detectors with dark counts,
//! timing jitter and dead time, and the relation between the photon number
//! of the light and the mean number of detected photons per bin.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::{self, derive_seed, Rng};
use crate::sources::{CoherentEmitter, Emitter};
use crate::timetag::{
    self, apply_dead_time, merge, ops::check_probability, Ticks, TimeTagStream, TICKS_PER_SECOND,
};

/// One photodetector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Probability that an incident photon produces a click.
    pub efficiency: f64,
    /// Non-paralyzable dead time in ticks.
    pub dead_time: Ticks,
    /// Dark-count rate in counts/s.
    pub dark_rate: f64,
    /// Gaussian timing jitter, standard deviation in ticks.
    pub jitter_sigma: Ticks,
}

impl DetectorConfig {
    pub fn ideal() -> Self {
        DetectorConfig {
            efficiency: 1.0,
            dead_time: 0,
            dark_rate: 0.0,
            jitter_sigma: 0,
        }
    }

    pub fn with_efficiency(efficiency: f64) -> Self {
        DetectorConfig {
            efficiency,
            ..Self::ideal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.efficiency, "detector efficiency")?;
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(domain(format!(
                "dark rate must be >= 0, got {}",
                self.dark_rate
            )));
        }
        Ok(())
    }
}

/// Beam splitter plus two detectors (reflected and transmitted arm), the
/// time-to-digital converter, and the geometry entering the detected
/// photon number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub reflectivity: f64,
    pub detector_r: DetectorConfig,
    pub detector_t: DetectorConfig,
    /// TDC dead time, applied to the merged single-detector stream.
    pub tdc_dead_time: Ticks,
    /// min{A_det, A_mode} / A_mode.
    pub spatial_overlap: f64,
    /// Correlation bin width T_bw in ticks.
    pub bin_width: Ticks,
}

impl DetectionConfig {
    /// 50:50 splitter onto two identical detectors of efficiency `eta`.
    pub fn symmetric(eta: f64, bin_width: Ticks) -> Self {
        DetectionConfig {
            reflectivity: 0.5,
            detector_r: DetectorConfig::with_efficiency(eta),
            detector_t: DetectorConfig::with_efficiency(eta),
            tdc_dead_time: 0,
            spatial_overlap: 1.0,
            bin_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reflectivity > 0.0 && self.reflectivity < 1.0) {
            return Err(domain(format!(
                "reflectivity {} outside (0, 1)",
                self.reflectivity
            )));
        }
        self.detector_r.validate()?;
        self.detector_t.validate()?;
        if !(self.spatial_overlap > 0.0 && self.spatial_overlap <= 1.0) {
            return Err(domain(format!(
                "spatial overlap {} outside (0, 1]",
                self.spatial_overlap
            )));
        }
        if self.bin_width == 0 {
            return Err(domain("bin width must be positive"));
        }
        Ok(())
    }

    /// Overall probability that a photon entering the splitter is detected
    /// by either arm: the sum of the two per-arm efficiencies, each
    /// including its splitting ratio.
    pub fn combined_efficiency(&self) -> f64 {
        self.reflectivity * self.detector_r.efficiency
            + (1.0 - self.reflectivity) * self.detector_t.efficiency
    }
}

/// Routes each tag to the reflected output with probability `reflectivity`,
/// otherwise to the transmitted output. Channel labels are kept, so merging
/// the outputs restores the input exactly.
pub fn beam_split(
    s: &TimeTagStream,
    reflectivity: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    check_probability(reflectivity, "reflectivity")?;
    Ok(split_with(s, reflectivity, &mut rng::rng(seed)))
}

pub(crate) fn split_with(
    s: &TimeTagStream,
    reflectivity: f64,
    rng: &mut Rng,
) -> (TimeTagStream, TimeTagStream) {
    let cap = s.len() / 2 + 16;
    let (mut rt, mut rc) = (Vec::with_capacity(cap), Vec::with_capacity(cap));
    let (mut tt, mut tc) = (Vec::with_capacity(cap), Vec::with_capacity(cap));
    for (&t, &c) in s.timestamps().iter().zip(s.channels()) {
        if rng.random_bool(reflectivity) {
            rt.push(t);
            rc.push(c);
        } else {
            tt.push(t);
            tc.push(c);
        }
    }
    (
        TimeTagStream::from_parts_unchecked(rt, rc, s.duration(), s.resolution()),
        TimeTagStream::from_parts_unchecked(tt, tc, s.duration(), s.resolution()),
    )
}

const STAGE_THIN: u64 = 0;
const STAGE_TAIL: u64 = 1;

/// Full detector response: loss (thinning by η), dark counts, Gaussian
/// jitter, then non-paralyzable dead time. Dark counts carry the channel of
/// the input's first tag (0 for an empty input).
pub fn detect(s: &TimeTagStream, d: &DetectorConfig, seed: u64) -> Result<TimeTagStream> {
    d.validate()?;
    let kept = timetag::thin(s, d.efficiency, derive_seed(seed, STAGE_THIN))?;
    detector_response(kept, d, derive_seed(seed, STAGE_TAIL))
}

/// The part of [`detect`] that follows the loss, for callers that thin
/// window by window and finish on the assembled stream.
pub(crate) fn detector_response(
    s: TimeTagStream,
    d: &DetectorConfig,
    seed: u64,
) -> Result<TimeTagStream> {
    let channel = s.channels().first().copied().unwrap_or(0);
    let mut s = s;
    if d.dark_rate > 0.0 {
        let dark = poisson_stream(d.dark_rate, s.duration(), channel, derive_seed(seed, 0));
        s = merge(&s, &dark)?;
    }
    if d.jitter_sigma > 0 {
        s = add_jitter(&s, d.jitter_sigma, derive_seed(seed, 1))?;
    }
    Ok(apply_dead_time(&s, d.dead_time))
}

pub(crate) fn poisson_stream(rate: f64, duration: Ticks, channel: u8, seed: u64) -> TimeTagStream {
    let mut ts = Vec::new();
    CoherentEmitter::with_rate(rate).fill(0, duration, &mut rng::rng(seed), &mut ts);
    let channels = vec![channel; ts.len()];
    TimeTagStream::from_parts_unchecked(ts, channels, duration, Default::default())
}

fn add_jitter(s: &TimeTagStream, sigma: Ticks, seed: u64) -> Result<TimeTagStream> {
    let normal = Normal::new(0.0, sigma as f64).map_err(|e| domain(e.to_string()))?;
    let mut rng = rng::rng(seed);
    let last = s.duration().saturating_sub(1) as f64;
    let mut tags: Vec<(Ticks, u8)> = s
        .timestamps()
        .iter()
        .zip(s.channels())
        .map(|(&t, &c)| {
            let shifted = (t as f64 + normal.sample(&mut rng))
                .round()
                .clamp(0.0, last);
            (shifted as Ticks, c)
        })
        .collect();
    tags.sort_unstable();
    let (ts, cs) = tags.into_iter().unzip();
    Ok(TimeTagStream::from_parts_unchecked(
        ts,
        cs,
        s.duration(),
        s.resolution(),
    ))
}

/// Adds independent Poissonian background light at `rate` photons/s.
pub fn mix_straylight(s: &TimeTagStream, rate: f64, seed: u64) -> Result<TimeTagStream> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(domain(format!("straylight rate must be >= 0, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(s.clone());
    }
    let channel = s.channels().first().copied().unwrap_or(0);
    merge(s, &poisson_stream(rate, s.duration(), channel, seed))
}

/// Mean detected photons per bin, overlap · (T_bw / T_coh) · η · ⟨a†a⟩,
/// where `photons_per_coherence_time` is ⟨a†a⟩ and η is the combined
/// efficiency of both arms.
pub fn mean_detected_per_bin(
    cfg: &DetectionConfig,
    photons_per_coherence_time: f64,
    coherence_time: f64,
) -> Result<f64> {
    if !(coherence_time > 0.0) {
        return Err(domain(format!(
            "coherence time must be positive, got {coherence_time}"
        )));
    }
    if !(photons_per_coherence_time >= 0.0) {
        return Err(domain("photon number must be >= 0"));
    }
    cfg.validate()?;
    let bin = cfg.bin_width as f64 / TICKS_PER_SECOND as f64;
    Ok(cfg.spatial_overlap
        * (bin / coherence_time)
        * cfg.combined_efficiency()
        * photons_per_coherence_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timetag::TimeTag;

    fn sample_stream() -> TimeTagStream {
        let ts: Vec<u64> = (0..5000).map(|i| i * 7 + (i % 3)).collect();
        TimeTagStream::from_timestamps(ts, 0, 40_000).unwrap()
    }

    #[test]
    fn splitting_extremes() {
        let s = sample_stream();
        let (r, t) = beam_split(&s, 0.0, 1).unwrap();
        assert!(r.is_empty());
        assert_eq!(t, s);
        let (r, t) = beam_split(&s, 1.0, 1).unwrap();
        assert_eq!(r, s);
        assert!(t.is_empty());
        assert!(beam_split(&s, 1.2, 1).is_err());
    }

    #[test]
    fn split_then_merge_is_identity() {
        let tags = vec![
            TimeTag::new(1, 0),
            TimeTag::new(1, 1),
            TimeTag::new(4, 0),
            TimeTag::new(4, 0),
        ];
        let s = TimeTagStream::new(tags, 10).unwrap();
        for seed in 0..20 {
            let (r, t) = beam_split(&s, 0.5, seed).unwrap();
            assert_eq!(merge(&r, &t).unwrap(), s);
        }
        let s = sample_stream();
        let (r, t) = beam_split(&s, 0.3, 8).unwrap();
        assert_eq!(
            timetag::encode(&merge(&r, &t).unwrap()),
            timetag::encode(&s)
        );
    }

    #[test]
    fn ideal_detector_is_identity() {
        let s = sample_stream();
        assert_eq!(detect(&s, &DetectorConfig::ideal(), 4).unwrap(), s);
    }

    #[test]
    fn jitter_keeps_stream_valid() {
        let s = sample_stream();
        let d = DetectorConfig {
            jitter_sigma: 50,
            ..DetectorConfig::ideal()
        };
        let out = detect(&s, &d, 4).unwrap();
        assert_eq!(out.len(), s.len());
        out.validate().unwrap();
        assert_ne!(out, s);
    }

    #[test]
    fn dark_counts_are_added() {
        let s = TimeTagStream::from_timestamps(vec![5], 1, 1_000_000_000_000).unwrap();
        let d = DetectorConfig {
            dark_rate: 1000.0,
            ..DetectorConfig::ideal()
        };
        let out = detect(&s, &d, 2).unwrap();
        assert!(out.len() > 850 && out.len() < 1150, "{}", out.len());
        assert!(out.channels().iter().all(|&c| c == 1));
    }

    #[test]
    fn detected_photon_number_example() {
        let cfg = DetectionConfig::symmetric(0.0461, 1_000);
        let n = mean_detected_per_bin(&cfg, 0.2488, 8.1e-9).unwrap();
        assert!((n - 1.416e-3).abs() < 1e-6, "{n}");
        assert!((n - 1.42e-3).abs() < 0.01e-3);
    }

    #[test]
    fn detected_photon_number_identity_and_linearity() {
        // T_bw = T_coh, all efficiencies 1
        let mut cfg = DetectionConfig::symmetric(1.0, 1_000);
        let n = mean_detected_per_bin(&cfg, 0.37, 1e-9).unwrap();
        assert!((n - 0.37).abs() < 1e-15);
        cfg.spatial_overlap = 0.5;
        let half = mean_detected_per_bin(&cfg, 0.37, 1e-9).unwrap();
        assert!((half - 0.185).abs() < 1e-15);
        assert!(mean_detected_per_bin(&cfg, 0.37, 0.0).is_err());
    }

    #[test]
    fn combined_efficiency_sums_arms() {
        let cfg = DetectionConfig {
            detector_r: DetectorConfig::with_efficiency(2.0 * 0.0267),
            detector_t: DetectorConfig::with_efficiency(2.0 * 0.0194),
            ..DetectionConfig::symmetric(0.0, 1_000)
        };
        assert!((cfg.combined_efficiency() - 0.0461).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = DetectionConfig::symmetric(0.5, 1_000);
        cfg.validate().unwrap();
        cfg.spatial_overlap = 0.0;
        assert!(cfg.validate().is_err());
        cfg.spatial_overlap = 1.0;
        cfg.reflectivity = 1.0;
        assert!(cfg.validate().is_err());
        cfg.reflectivity = 0.5;
        cfg.bin_width = 0;
        assert!(cfg.validate().is_err());
    }
}
