//! Run configuration: one JSON document with units spelled out in the
//! field names.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::{DetectionConfig, DetectorConfig};
use crate::error::{config, Result};
use crate::sources::{CoherentParams, IonParams};
use crate::timetag::{ns_to_ticks, seconds_to_ticks, Ticks, TICKS_PER_NS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    Coherent {
        rate_hz: f64,
        coherence_time_ns: f64,
    },
    Ion {
        /// Γ / 2π.
        linewidth_mhz: f64,
        saturation: f64,
        /// Δ / Γ.
        detuning_linewidths: f64,
        branching: f64,
    },
    Shelving {
        branching: f64,
        n_cycles: u64,
    },
}

impl SourceConfig {
    pub fn ion_params(&self) -> Option<Result<IonParams>> {
        match *self {
            SourceConfig::Ion {
                linewidth_mhz,
                saturation,
                detuning_linewidths,
                branching,
            } => {
                let gamma = 2.0 * PI * linewidth_mhz * 1e6;
                Some(IonParams::new(
                    gamma,
                    saturation,
                    detuning_linewidths * gamma,
                    branching,
                ))
            }
            _ => None,
        }
    }

    pub fn coherent_params(&self) -> Option<Result<CoherentParams>> {
        match *self {
            SourceConfig::Coherent {
                rate_hz,
                coherence_time_ns,
            } => Some(CoherentParams::new(rate_hz, coherence_time_ns * 1e-9)),
            _ => None,
        }
    }
}

fn zero() -> f64 {
    0.0
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSettings {
    pub efficiency: f64,
    #[serde(default = "zero")]
    pub dead_time_ns: f64,
    #[serde(default = "zero")]
    pub dark_rate_hz: f64,
    #[serde(default = "zero")]
    pub jitter_sigma_ns: f64,
}

impl DetectorSettings {
    pub fn ideal(efficiency: f64) -> Self {
        DetectorSettings {
            efficiency,
            dead_time_ns: 0.0,
            dark_rate_hz: 0.0,
            jitter_sigma_ns: 0.0,
        }
    }

    fn to_detector(self) -> Result<DetectorConfig> {
        let d = DetectorConfig {
            efficiency: self.efficiency,
            dead_time: nonneg_ns(self.dead_time_ns, "dead_time_ns")?,
            dark_rate: self.dark_rate_hz,
            jitter_sigma: nonneg_ns(self.jitter_sigma_ns, "jitter_sigma_ns")?,
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSettings {
    pub reflectivity: f64,
    pub detector_r: DetectorSettings,
    pub detector_t: DetectorSettings,
    #[serde(default = "zero")]
    pub tdc_dead_time_ns: f64,
    #[serde(default = "one")]
    pub spatial_overlap: f64,
}

impl DetectionSettings {
    pub fn symmetric(efficiency: f64) -> Self {
        DetectionSettings {
            reflectivity: 0.5,
            detector_r: DetectorSettings::ideal(efficiency),
            detector_t: DetectorSettings::ideal(efficiency),
            tdc_dead_time_ns: 0.0,
            spatial_overlap: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSettings {
    pub binwidth_ns: f64,
    pub max_lag_ns: f64,
}

pub const DEFAULT_SEGMENT_MS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub detection: DetectionSettings,
    pub duration_s: f64,
    pub seed: u64,
    pub correlation: CorrelationSettings,
    pub outputs: PathBuf,
    #[serde(default = "zero")]
    pub straylight_fraction: f64,
    /// Length of the independently generated windows.
    #[serde(default = "default_segment")]
    pub segment_ms: f64,
}

fn default_segment() -> f64 {
    DEFAULT_SEGMENT_MS
}

fn nonneg_ns(ns: f64, what: &str) -> Result<Ticks> {
    if !(ns >= 0.0 && ns.is_finite()) {
        return Err(config(format!(
            "{what} must be a finite value >= 0, got {ns}"
        )));
    }
    Ok(ns_to_ticks(ns))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults filled in, fixed field order, shortest round-trip floats.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configs are serializable")
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configs are serializable");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical JSON with the output directory left out, so
    /// that the same experiment written to different places hashes equally.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.outputs = PathBuf::new();
        hex::encode(Sha256::digest(c.canonical_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(config(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        if self.duration() == 0 {
            return Err(config("duration_s is shorter than one tick"));
        }
        if !(self.straylight_fraction >= 0.0 && self.straylight_fraction < 1.0) {
            return Err(config(format!(
                "straylight_fraction {} outside [0, 1)",
                self.straylight_fraction
            )));
        }
        if !(self.segment_ms > 0.0 && self.segment_ms.is_finite()) || self.segment() == 0 {
            return Err(config(format!(
                "segment_ms must be positive, got {}",
                self.segment_ms
            )));
        }
        match &self.source {
            SourceConfig::Shelving {
                branching,
                n_cycles,
            } => {
                if !(*branching > 0.0 && *branching < 1.0) {
                    return Err(config(format!("branching {branching} outside (0, 1)")));
                }
                if *n_cycles == 0 {
                    return Err(config("n_cycles must be positive"));
                }
            }
            s => {
                if let Some(p) = s.ion_params() {
                    p?;
                }
                if let Some(p) = s.coherent_params() {
                    p?;
                }
            }
        }
        let det = self.detection_config()?;
        let max_lag = nonneg_ns(self.correlation.max_lag_ns, "max_lag_ns")?;
        if max_lag < det.bin_width {
            return Err(config("max_lag_ns must be at least one bin"));
        }
        Ok(())
    }

    pub fn duration(&self) -> Ticks {
        seconds_to_ticks(self.duration_s)
    }

    pub fn segment(&self) -> Ticks {
        seconds_to_ticks(self.segment_ms * 1e-3)
    }

    pub fn bin_width(&self) -> Ticks {
        ns_to_ticks(self.correlation.binwidth_ns)
    }

    pub fn max_lag(&self) -> Ticks {
        ns_to_ticks(self.correlation.max_lag_ns)
    }

    pub fn detection_config(&self) -> Result<DetectionConfig> {
        let d = &self.detection;
        let bin_width = nonneg_ns(self.correlation.binwidth_ns, "binwidth_ns")?;
        if bin_width == 0 {
            return Err(config(format!(
                "binwidth_ns must be at least {} ns",
                1.0 / TICKS_PER_NS as f64
            )));
        }
        let cfg = DetectionConfig {
            reflectivity: d.reflectivity,
            detector_r: d.detector_r.to_detector()?,
            detector_t: d.detector_t.to_detector()?,
            tdc_dead_time: nonneg_ns(d.tdc_dead_time_ns, "tdc_dead_time_ns")?,
            spatial_overlap: d.spatial_overlap,
            bin_width,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The same experiment over `factor` times the duration.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(config(format!("scale must be positive, got {factor}")));
        }
        let mut c = self.clone();
        c.duration_s *= factor;
        c.validate()?;
        Ok(c)
    }

    /// Single ion at the standard operating point with the reference
    /// efficiency split over two detectors.
    pub fn ion_default(duration_s: f64, seed: u64, outputs: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            source: SourceConfig::Ion {
                linewidth_mhz: 19.6,
                saturation: 1.0,
                detuning_linewidths: -0.5,
                branching: 0.995,
            },
            detection: DetectionSettings::symmetric(0.0461),
            duration_s,
            seed,
            correlation: CorrelationSettings {
                binwidth_ns: 1.0,
                max_lag_ns: 100.0,
            },
            outputs: outputs.into(),
            straylight_fraction: 0.0,
            segment_ms: DEFAULT_SEGMENT_MS,
        }
    }

    /// Laser light giving about 1.19e-3 detected photons per 1 ns bin.
    pub fn coherent_default(duration_s: f64, seed: u64, outputs: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            source: SourceConfig::Coherent {
                rate_hz: 2.38e6,
                coherence_time_ns: 1000.0,
            },
            detection: DetectionSettings::symmetric(0.5),
            duration_s,
            seed,
            correlation: CorrelationSettings {
                binwidth_ns: 1.0,
                max_lag_ns: 100.0,
            },
            outputs: outputs.into(),
            straylight_fraction: 0.0,
            segment_ms: DEFAULT_SEGMENT_MS,
        }
    }
}
