//! End-to-end runs: source → straylight → beam splitter → detectors →
//! correlator → estimators, plus the shelving calibration, persistence and
//! thread-pool handling.

mod config;
mod counts;

pub use config::{
    CorrelationSettings, DetectionSettings, DetectorSettings, ExperimentConfig, SourceConfig,
    DEFAULT_SEGMENT_MS,
};
pub use counts::{format_count_histogram, parse_count_histogram, COUNT_HEADER};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::{CorrelationHistogram, Correlator, HistogramDocument, Provenance};
use crate::detection::{detector_response, mean_detected_per_bin, DetectionConfig};
use crate::error::{config, domain, Error, Result};
use crate::estimators::{
    commutator_vs_delay, commutator_zero_delay, count_histogram, fit_efficiency,
    CommutatorEstimate, DelayPoint, EfficiencyEstimate, Measurement,
};
use crate::rng::{self, derive_seed, rng_stream, Rng};
use crate::sources::{gen_shelving_cycles, CoherentEmitter, Emitter, IonEmitter};
use crate::timetag::{apply_dead_time, merge, Resolution, Ticks, TimeTagStream};

pub const THREADS_ENV: &str = "G2LAB_THREADS";

const STAGE_SOURCE: u64 = 1;
const STAGE_STRAY: u64 = 2;
const STAGE_ROUTE: u64 = 3;
const STAGE_DETECTOR_R: u64 = 4;
const STAGE_DETECTOR_T: u64 = 5;
const STAGE_BURSTS: u64 = 6;
const STAGE_THIN: u64 = 7;

pub const CHANNEL_R: u8 = 0;
pub const CHANNEL_T: u8 = 1;

/// Runs `f` on a pool sized by `G2LAB_THREADS` if it is set, otherwise on
/// the global pool.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                config(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place once `write` succeeds.
pub fn write_atomically(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Tag counts after detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCounts {
    pub reflected: u64,
    pub transmitted: u64,
    /// Merged stream after the TDC dead time.
    pub merged: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub auto: CorrelationHistogram,
    pub cross: CorrelationHistogram,
    /// Uses ⟨N⟩ measured from the detected counts.
    pub commutator: CommutatorEstimate,
    /// Uses ⟨N⟩ predicted from source rate and detection geometry.
    pub commutator_model: CommutatorEstimate,
    pub commutator_vs_delay: Vec<DelayPoint>,
    pub counts: ArmCounts,
    pub config_hash: String,
    pub seed: u64,
    /// Not part of any output file.
    pub wall_time: f64,
}

/// result.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub counts: ArmCounts,
    pub commutator: CommutatorEstimate,
    pub commutator_model: CommutatorEstimate,
    pub commutator_vs_delay: Vec<DelayPoint>,
    pub auto: HistogramDocument,
    pub cross: HistogramDocument,
}

impl RunResult {
    pub fn provenance(&self) -> Provenance {
        Provenance::new(Some(self.seed), Some(self.config_hash.clone()))
    }

    pub fn document(&self) -> ResultDocument {
        ResultDocument {
            tool_version: crate::VERSION.to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            counts: self.counts,
            commutator: self.commutator,
            commutator_model: self.commutator_model,
            commutator_vs_delay: self.commutator_vs_delay.clone(),
            auto: HistogramDocument::new(&self.auto, self.provenance()),
            cross: HistogramDocument::new(&self.cross, self.provenance()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(&self.document()).expect("results are serializable");
        s.push('\n');
        s
    }

    pub fn delay_csv(&self) -> String {
        let mut s = String::from("lag_ns,value,stderr\n");
        for p in &self.commutator_vs_delay {
            writeln!(s, "{:.3},{},{}", p.lag_ns, p.value, fmt_err(p.stderr)).unwrap();
        }
        s
    }

    /// Writes auto/cross CSV and JSON, the commutator-vs-delay CSV, the
    /// canonical config and result.json into `dir`.
    pub fn write_outputs(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let prov = self.provenance();
        let files: [(&str, String); 7] = [
            ("config.json", cfg.to_json_pretty()),
            ("auto.csv", self.auto.to_csv()),
            ("cross.csv", self.cross.to_csv()),
            ("auto.json", self.auto.to_json(prov.clone())),
            ("cross.json", self.cross.to_json(prov)),
            ("commutator_vs_delay.csv", self.delay_csv()),
            ("result.json", self.to_json()),
        ];
        for (name, body) in files {
            write_atomically(&dir.join(name), |w| w.write_all(body.as_bytes()))?;
        }
        Ok(())
    }
}

fn fmt_err(e: f64) -> String {
    if e.is_finite() {
        e.to_string()
    } else {
        "inf".into()
    }
}

/// Source, straylight and detection chain for one configuration.
struct Chain {
    emitter: Box<dyn Emitter>,
    stray: Option<CoherentEmitter>,
    /// Photons per second entering the splitter, straylight included.
    photon_rate: f64,
    coherence_time: f64,
    detection: DetectionConfig,
}

impl Chain {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let detection = cfg.detection_config()?;
        let (emitter, coherence_time): (Box<dyn Emitter>, f64) = match &cfg.source {
            SourceConfig::Coherent { .. } => {
                let p = cfg.source.coherent_params().unwrap()?;
                (Box::new(CoherentEmitter::new(&p)?), p.coherence_time)
            }
            SourceConfig::Ion { .. } => {
                let p = cfg.source.ion_params().unwrap()?;
                if p.saturation == 0.0 {
                    (Box::new(CoherentEmitter::with_rate(0.0)), p.coherence_time)
                } else {
                    (Box::new(IonEmitter::new(&p)?), p.coherence_time)
                }
            }
            SourceConfig::Shelving { .. } => {
                return Err(config(
                    "shelving sources are run with the efficiency calibration",
                ));
            }
        };
        let f = cfg.straylight_fraction;
        let stray_rate = emitter.mean_rate() * f / (1.0 - f);
        let stray = (stray_rate > 0.0).then(|| CoherentEmitter::with_rate(stray_rate));
        Ok(Chain {
            photon_rate: emitter.mean_rate() + stray_rate,
            emitter,
            stray,
            coherence_time,
            detection,
        })
    }

    /// Photons of one window routed to the two detectors. A single uniform
    /// per photon decides the splitter port and whether that port's
    /// detector clicks, which has the law of a beam split followed by
    /// independent thinning in each arm.
    fn segment(&self, seed: u64, index: u64, start: Ticks, end: Ticks) -> (Vec<Ticks>, Vec<Ticks>) {
        let mut photons = Vec::new();
        self.emitter.fill(
            start,
            end,
            &mut rng_stream(derive_seed(seed, STAGE_SOURCE), index),
            &mut photons,
        );
        if let Some(stray) = &self.stray {
            let mut extra = Vec::new();
            stray.fill(
                start,
                end,
                &mut rng_stream(derive_seed(seed, STAGE_STRAY), index),
                &mut extra,
            );
            photons = merge_sorted(&photons, &extra);
        }
        let d = &self.detection;
        let r = d.reflectivity;
        let p_r = r * d.detector_r.efficiency;
        let p_t = r + (1.0 - r) * d.detector_t.efficiency;
        let mut rng: Rng = rng_stream(derive_seed(seed, STAGE_ROUTE), index);
        let (mut out_r, mut out_t) = (Vec::new(), Vec::new());
        for t in photons {
            let u: f64 = rng.random();
            if u < p_r {
                out_r.push(t);
            } else if u >= r && u < p_t {
                out_t.push(t);
            }
        }
        (out_r, out_t)
    }

    fn mean_n_model(&self) -> Result<f64> {
        mean_detected_per_bin(
            &self.detection,
            self.photon_rate * self.coherence_time,
            self.coherence_time,
        )
    }
}

fn merge_sorted(a: &[Ticks], b: &[Ticks]) -> Vec<Ticks> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn arm_stream(pieces: Vec<Vec<Ticks>>, channel: u8, duration: Ticks) -> TimeTagStream {
    let ts = pieces.concat();
    let ch = vec![channel; ts.len()];
    TimeTagStream::from_parts_unchecked(ts, ch, duration, Resolution::PICOSECOND)
}

/// The two detector streams of a run: reflected arm on channel 0,
/// transmitted arm on channel 1.
pub fn detected_streams(cfg: &ExperimentConfig) -> Result<(TimeTagStream, TimeTagStream)> {
    cfg.validate()?;
    let chain = Chain::new(cfg)?;
    let duration = cfg.duration();
    let segment = cfg.segment();
    let n_segments = duration.div_ceil(segment);
    let (pieces_r, pieces_t): (Vec<_>, Vec<_>) = (0..n_segments)
        .into_par_iter()
        .map(|i| chain.segment(cfg.seed, i, i * segment, ((i + 1) * segment).min(duration)))
        .unzip();
    let arm_r = arm_stream(pieces_r, CHANNEL_R, duration);
    let arm_t = arm_stream(pieces_t, CHANNEL_T, duration);
    let d = &chain.detection;
    let arm_r = detector_response(
        arm_r,
        &d.detector_r,
        derive_seed(cfg.seed, STAGE_DETECTOR_R),
    )?
    .relabel(CHANNEL_R);
    let arm_t = detector_response(
        arm_t,
        &d.detector_t,
        derive_seed(cfg.seed, STAGE_DETECTOR_T),
    )?
    .relabel(CHANNEL_T);
    Ok((arm_r, arm_t))
}

/// Runs the experiment in memory.
pub fn simulate_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let started = Instant::now();
    cfg.validate()?;
    let chain = Chain::new(cfg)?;
    let (arm_r, arm_t) = detected_streams(cfg)?;
    let correlator = Correlator::new(cfg.bin_width(), cfg.max_lag())?;
    let cross = correlator.cross(&arm_r, &arm_t)?;
    let (n_r, n_t) = (arm_r.len() as u64, arm_t.len() as u64);
    let mut merged = merge(&arm_r, &arm_t)?;
    drop((arm_r, arm_t));
    if chain.detection.tdc_dead_time > 0 {
        merged = apply_dead_time(&merged, chain.detection.tdc_dead_time);
    }
    let auto = correlator.auto(&merged);
    let counts = ArmCounts {
        reflected: n_r,
        transmitted: n_t,
        merged: merged.len() as u64,
    };
    drop(merged);

    if auto.n1 == 0 {
        return Err(domain("no photons were detected"));
    }
    let mean_n = Measurement::new(
        auto.mean_counts_per_bin(),
        (auto.n1 as f64).sqrt() / auto.n_bins as f64,
    );
    let g2a = Measurement::new(auto.g2[0], auto.stderr[0]);
    let c0 = cross.index_of(0).unwrap();
    let g2c = Measurement::new(cross.g2[c0], cross.stderr[c0]);
    let commutator = commutator_zero_delay(g2a, g2c, mean_n)?;
    let commutator_model =
        commutator_zero_delay(g2a, g2c, Measurement::exact(chain.mean_n_model()?))?;
    let commutator_vs_delay = commutator_vs_delay(&auto, &cross, mean_n.value)?;
    Ok(RunResult {
        auto,
        cross,
        commutator,
        commutator_model,
        commutator_vs_delay,
        counts,
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Runs the experiment and writes every artifact into `cfg.outputs`.
/// Nothing is written if the run fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let result = simulate_experiment(cfg)?;
    result.write_outputs(cfg, &cfg.outputs)?;
    Ok(result)
}

fn thin_counts(bursts: &[u64], p: f64, rng: &mut Rng) -> Result<Vec<u64>> {
    bursts
        .iter()
        .map(|&k| {
            if k == 0 || p == 0.0 {
                Ok(0)
            } else {
                Ok(Binomial::new(k, p)
                    .map_err(|e| domain(e.to_string()))?
                    .sample(rng))
            }
        })
        .collect()
}

/// Shelving bursts, each photon detected with probability `eta`, fitted
/// back to an efficiency.
pub fn run_efficiency_calibration(
    branching: f64,
    eta: f64,
    n_cycles: u64,
    seed: u64,
) -> Result<EfficiencyEstimate> {
    crate::timetag::ops::check_probability(eta, "efficiency")?;
    let bursts = gen_shelving_cycles(branching, n_cycles, derive_seed(seed, STAGE_BURSTS))?;
    let detected = thin_counts(&bursts, eta, &mut rng::rng(derive_seed(seed, STAGE_THIN)))?;
    fit_efficiency(&count_histogram(&detected), branching)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub branching: f64,
    pub n_cycles: u64,
    /// Either detector.
    pub combined: EfficiencyEstimate,
    /// Each arm, splitting ratio included.
    pub reflected: EfficiencyEstimate,
    pub transmitted: EfficiencyEstimate,
    #[serde(skip)]
    pub histograms: [BTreeMap<u64, u64>; 3],
}

impl CalibrationResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results are serializable");
        s.push('\n');
        s
    }
}

/// Shelving bursts sent through the configured splitter and detectors.
pub fn simulate_calibration(cfg: &ExperimentConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let SourceConfig::Shelving {
        branching,
        n_cycles,
    } = cfg.source
    else {
        return Err(config("calibration needs a shelving source"));
    };
    let d = cfg.detection_config()?;
    let bursts = gen_shelving_cycles(branching, n_cycles, derive_seed(cfg.seed, STAGE_BURSTS))?;
    let mut rng = rng::rng(derive_seed(cfg.seed, STAGE_THIN));
    let p_r = d.reflectivity * d.detector_r.efficiency;
    let p_t = (1.0 - d.reflectivity) * d.detector_t.efficiency;
    let hits_r = thin_counts(&bursts, p_r, &mut rng)?;
    let rest: Vec<u64> = bursts.iter().zip(&hits_r).map(|(k, r)| k - r).collect();
    let hits_t = thin_counts(&rest, p_t / (1.0 - p_r), &mut rng)?;
    let total: Vec<u64> = hits_r.iter().zip(&hits_t).map(|(a, b)| a + b).collect();
    let histograms = [
        count_histogram(&total),
        count_histogram(&hits_r),
        count_histogram(&hits_t),
    ];
    Ok(CalibrationResult {
        tool_version: crate::VERSION.to_string(),
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        branching,
        n_cycles,
        combined: fit_efficiency(&histograms[0], branching)?,
        reflected: fit_efficiency(&histograms[1], branching)?,
        transmitted: fit_efficiency(&histograms[2], branching)?,
        histograms,
    })
}

/// Calibration with its count histograms and result written to
/// `cfg.outputs`.
pub fn run_calibration(cfg: &ExperimentConfig) -> Result<CalibrationResult> {
    let result = simulate_calibration(cfg)?;
    let dir = &cfg.outputs;
    fs::create_dir_all(dir)?;
    let files = [
        ("config.json", cfg.to_json_pretty()),
        ("counts.csv", format_count_histogram(&result.histograms[0])),
        (
            "counts_r.csv",
            format_count_histogram(&result.histograms[1]),
        ),
        (
            "counts_t.csv",
            format_count_histogram(&result.histograms[2]),
        ),
        ("calibration.json", result.to_json()),
    ];
    for (name, body) in files {
        write_atomically(&dir.join(name), |w| w.write_all(body.as_bytes()))?;
    }
    Ok(result)
}

/// Either kind of run, chosen by the source.
#[derive(Clone, Debug, PartialEq)]
pub enum RunOutput {
    Experiment(Box<RunResult>),
    Calibration(Box<CalibrationResult>),
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.source {
        SourceConfig::Shelving { .. } => {
            run_calibration(cfg).map(|r| RunOutput::Calibration(Box::new(r)))
        }
        _ => run_experiment(cfg).map(|r| RunOutput::Experiment(Box::new(r))),
    }
}

/// Photons per second reaching the beam splitter for `cfg`.
pub fn photon_rate(cfg: &ExperimentConfig) -> Result<f64> {
    Ok(Chain::new(cfg)?.photon_rate)
}

/// Expected detected tags per second, both arms, ignoring dead time.
pub fn expected_detection_rate(cfg: &ExperimentConfig) -> Result<f64> {
    let chain = Chain::new(cfg)?;
    Ok(chain.photon_rate * chain.detection.combined_efficiency())
}
