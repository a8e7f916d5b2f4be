use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use g2lab::correlator::{Correlator, HistogramDocument, Provenance};
use g2lab::estimators::{commutator_vs_delay, commutator_zero_delay, fit_efficiency, Measurement};
use g2lab::pipeline::{self, parse_count_histogram, write_atomically, ExperimentConfig, RunOutput};
use g2lab::timetag::{self, ns_to_ticks};
use g2lab::{CorrelationKind, Error, Result};

#[derive(Parser)]
#[command(
    name = "g2lab",
    version,
    about = "Photon correlation simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiply the simulated duration.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Correlate TTG1 files: one input gives the auto-, two the
    /// cross-correlation.
    Correlate {
        #[arg(long = "in", required = true, num_args = 1)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        binwidth_ns: f64,
        #[arg(long)]
        max_lag_ns: f64,
        /// CSV destination; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the JSON document here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Field commutator from an auto- and a cross-correlation histogram.
    Commutator {
        #[arg(long)]
        auto: PathBuf,
        #[arg(long)]
        cross: PathBuf,
        /// Mean detected photons per bin; measured from the auto histogram
        /// if absent.
        #[arg(long)]
        mean_n: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        mean_n_err: f64,
        /// Print the commutator at every lag as CSV.
        #[arg(long)]
        delay: bool,
    },
    /// Detection efficiency from a histogram of photons per shelving burst.
    CalibrateEta {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        branching: f64,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = pipeline::with_thread_pool(|| execute(cli.command)).and_then(|r| r);
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: kind={} message={}", e.kind(), message);
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Simulate { config, out, scale } => {
            let mut cfg = ExperimentConfig::from_json(&fs::read_to_string(&config)?)?;
            if let Some(out) = out {
                cfg.outputs = out;
            }
            if let Some(f) = scale {
                cfg = cfg.scaled(f)?;
            }
            match pipeline::run(&cfg)? {
                RunOutput::Experiment(r) => {
                    let c = &r.commutator;
                    writeln!(stdout, "commutator {:.4} ± {:.4}", c.value, c.stderr)?;
                    writeln!(
                        stdout,
                        "g2_auto(0) {:.4} ± {:.4}",
                        c.g2_auto_0.value, c.g2_auto_0.stderr
                    )?;
                    writeln!(
                        stdout,
                        "g2_cross(0) {:.4} ± {:.4}",
                        c.g2_cross_0.value, c.g2_cross_0.stderr
                    )?;
                    writeln!(stdout, "mean_n {:.6e}", c.mean_n.value)?;
                    writeln!(stdout, "outputs {}", cfg.outputs.display())?;
                    eprintln!("wall time {:.2} s", r.wall_time);
                }
                RunOutput::Calibration(c) => {
                    for (name, e) in [
                        ("combined", c.combined),
                        ("reflected", c.reflected),
                        ("transmitted", c.transmitted),
                    ] {
                        writeln!(stdout, "eta_{name} {:.6} ± {:.6}", e.eta, e.stderr)?;
                    }
                    writeln!(stdout, "outputs {}", cfg.outputs.display())?;
                }
            }
        }
        Command::Correlate {
            inputs,
            binwidth_ns,
            max_lag_ns,
            out,
            json,
        } => {
            if inputs.len() > 2 {
                return Err(Error::Config("correlate takes one or two inputs".into()));
            }
            if !(binwidth_ns > 0.0 && max_lag_ns >= 0.0) {
                return Err(Error::Config(
                    "binwidth must be positive and max lag non-negative".into(),
                ));
            }
            let correlator = Correlator::new(ns_to_ticks(binwidth_ns), ns_to_ticks(max_lag_ns))?;
            let first = timetag::read_file(&inputs[0])?;
            let h = match inputs.get(1) {
                Some(p) => correlator.cross(&first, &timetag::read_file(p)?)?,
                None => correlator.auto(&first),
            };
            let csv = h.to_csv();
            match out {
                Some(p) => write_atomically(&p, |w| w.write_all(csv.as_bytes()))?,
                None => stdout.write_all(csv.as_bytes())?,
            }
            if let Some(p) = json {
                let doc = h.to_json(Provenance::new(None, None));
                write_atomically(&p, |w| w.write_all(doc.as_bytes()))?;
            }
        }
        Command::Commutator {
            auto,
            cross,
            mean_n,
            mean_n_err,
            delay,
        } => {
            let auto = HistogramDocument::from_json(&fs::read_to_string(&auto)?)?.histogram()?;
            let cross = HistogramDocument::from_json(&fs::read_to_string(&cross)?)?.histogram()?;
            if auto.kind != CorrelationKind::Auto || cross.kind != CorrelationKind::Cross {
                return Err(Error::Config(
                    "--auto needs an auto and --cross a cross histogram".into(),
                ));
            }
            let mean_n = match mean_n {
                Some(v) => Measurement::new(v, mean_n_err),
                None => Measurement::new(
                    auto.mean_counts_per_bin(),
                    (auto.n1 as f64).sqrt() / auto.n_bins.max(1) as f64,
                ),
            };
            let c0 = cross.index_of(0).expect("cross histograms contain lag 0");
            let e = commutator_zero_delay(
                Measurement::new(auto.g2[0], auto.stderr[0]),
                Measurement::new(cross.g2[c0], cross.stderr[c0]),
                mean_n,
            )?;
            if delay {
                writeln!(stdout, "lag_ns,value,stderr")?;
                for p in commutator_vs_delay(&auto, &cross, mean_n.value)? {
                    writeln!(stdout, "{:.3},{},{}", p.lag_ns, p.value, p.stderr)?;
                }
            } else {
                writeln!(stdout, "{} ± {}", e.value, e.stderr)?;
                writeln!(stdout, "{}", serde_json::to_string(&e)?)?;
            }
        }
        Command::CalibrateEta { counts, branching } => {
            let h = parse_count_histogram(&fs::read_to_string(&counts)?)?;
            let e = fit_efficiency(&h, branching)?;
            writeln!(stdout, "{} ± {}", e.eta, e.stderr)?;
            writeln!(stdout, "{}", serde_json::to_string(&e)?)?;
        }
        Command::Selftest => {
            let checks = g2lab::selftest::run_selftest();
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                writeln!(
                    stdout,
                    "{} {} ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )?;
            }
            if failed > 0 {
                return Err(Error::Numerical(format!(
                    "{failed} selftest check(s) failed"
                )));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
