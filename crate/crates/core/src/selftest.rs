//! Built-in oracle suite: exact brute-force references and closed forms
//! the fast code paths must reproduce.

use rand::Rng as _;

use crate::correlator::Correlator;
use crate::detection::beam_split;
use crate::error::Result;
use crate::estimators::{commutator_zero_delay, detection_pmf, Measurement};
use crate::pipeline::run_efficiency_calibration;
use crate::rng;
use crate::sources::{gen_coherent, ion_g2_model, CoherentParams, IonParams};
use crate::timetag::{
    apply_dead_time, decode, encode, merge, Ticks, TimeTagStream, TICKS_PER_SECOND,
};

/// Pair counts of every ordered pair (a ∈ `t1`, b ∈ `t2`) whose bin
/// difference lies in `[−k, k]`, indexed by difference + k. Only tags in
/// complete bins of `duration` take part.
pub fn brute_force_cross(
    t1: &[Ticks],
    t2: &[Ticks],
    duration: Ticks,
    bw: Ticks,
    k: u64,
) -> Vec<u64> {
    let end = duration / bw * bw;
    let mut counts = vec![0u64; 2 * k as usize + 1];
    for &a in t1.iter().filter(|&&a| a < end) {
        for &b in t2.iter().filter(|&&b| b < end) {
            let d = (b / bw) as i64 - (a / bw) as i64;
            if d.unsigned_abs() <= k {
                counts[(d + k as i64) as usize] += 1;
            }
        }
    }
    counts
}

/// Ordered pairs (i, j), i = j included, with bin(t_j) − bin(t_i) ∈ [0, k].
pub fn brute_force_auto(t: &[Ticks], duration: Ticks, bw: Ticks, k: u64) -> Vec<u64> {
    let end = duration / bw * bw;
    let mut counts = vec![0u64; k as usize + 1];
    let t: Vec<Ticks> = t.iter().copied().filter(|&x| x < end).collect();
    for &a in &t {
        for &b in &t {
            if b / bw >= a / bw && b / bw - a / bw <= k {
                counts[(b / bw - a / bw) as usize] += 1;
            }
        }
    }
    counts
}

/// Σ_{n ≥ k} P(n emitted) · C(n, k) η^k (1 − η)^(n−k), summed term by term.
pub fn pmf_by_summation(k: u64, beta: f64, eta: f64) -> f64 {
    let mut term = (1.0 - beta) * (beta * eta).powi(k as i32);
    let mut sum = 0.0;
    let mut n = k;
    loop {
        sum += term;
        let next = term * beta * (1.0 - eta) * (n + 1) as f64 / (n + 1 - k) as f64;
        n += 1;
        if next < 1e-20 * sum && n > k + 10 || next == 0.0 || n > k + 200_000 {
            return sum;
        }
        term = next;
    }
}

pub fn random_stream(rng: &mut rng::Rng, max_len: usize, duration: Ticks) -> TimeTagStream {
    let n = rng.random_range(0..=max_len);
    let mut ts: Vec<Ticks> = (0..n).map(|_| rng.random_range(0..duration)).collect();
    ts.sort_unstable();
    TimeTagStream::from_timestamps(ts, 0, duration).expect("sorted in-window tags")
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn correlator_oracle() -> Result<(bool, String)> {
    let mut rng = rng::rng(0x5e1f);
    let mut mismatches = 0;
    for i in 0..30 {
        let duration = rng.random_range(1_000..200_000);
        let a = random_stream(&mut rng, 300, duration);
        let b = random_stream(&mut rng, 300, duration);
        let bw = rng.random_range(1..2_000);
        let k = rng.random_range(0..40);
        let c = Correlator::new(bw, k * bw)?.with_chunk_len(1 + i % 17);
        if c.cross(&a, &b)?.raw_pair_counts
            != brute_force_cross(a.timestamps(), b.timestamps(), duration, bw, k)
        {
            mismatches += 1;
        }
        if c.auto(&a).raw_pair_counts != brute_force_auto(a.timestamps(), duration, bw, k) {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("{mismatches} mismatching histograms out of 60"),
    ))
}

fn pmf_oracle() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for &(beta, eta) in &[
        (0.995, 0.0461),
        (0.995, 0.0194),
        (0.9, 0.5),
        (0.5, 0.9),
        (0.99, 1.0),
    ] {
        for k in 0..=50 {
            worst =
                worst.max((detection_pmf(k, beta, eta)? - pmf_by_summation(k, beta, eta)).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn ion_model_checks() -> Result<(bool, String)> {
    let p = IonParams::new(1.0, 1.0, -0.5, 0.995)?;
    let reference = [
        (0.5, 0.19088013591164496),
        (1.0, 0.5625692654796403),
        (2.0, 1.127467590750627),
        (5.0, 1.004751254755487),
    ];
    let mut worst: f64 = 0.0;
    for (tau, want) in reference {
        worst = worst.max((ion_g2_model(tau, &p)? - want).abs());
    }
    let zero = ion_g2_model(0.0, &p)?;
    let far = (ion_g2_model(100.0, &p)? - 1.0).abs();
    Ok((
        worst < 1e-6 && zero == 0.0 && far < 1e-3,
        format!("reference deviation {worst:.2e}, g2(0) = {zero}, |g2(100/Γ) − 1| = {far:.1e}"),
    ))
}

fn stream_plumbing() -> Result<(bool, String)> {
    let s = gen_coherent(&CoherentParams::new(1e8, 1e-9)?, TICKS_PER_SECOND / 1000, 3)?;
    let round = decode(&encode(&s))? == s;
    let (r, t) = beam_split(&s, 0.3, 4)?;
    let rejoined = merge(&r, &t)? == s;
    Ok((
        round && rejoined,
        format!(
            "{} tags; TTG1 round trip {round}, split/merge identity {rejoined}",
            s.len()
        ),
    ))
}

fn dead_time_law() -> Result<(bool, String)> {
    let rate = 1e7;
    let dead: Ticks = 50_000;
    let duration = TICKS_PER_SECOND / 10;
    let s = gen_coherent(&CoherentParams::new(rate, 1e-9)?, duration, 8)?;
    let kept = apply_dead_time(&s, dead).len() as f64;
    let expected = rate / (1.0 + rate * dead as f64 / TICKS_PER_SECOND as f64) * 0.1;
    let z = (kept - expected) / expected.sqrt();
    Ok((
        z.abs() < 5.0,
        format!("{kept} kept, {expected:.0} expected, z = {z:.2}"),
    ))
}

fn commutator_fock() -> Result<(bool, String)> {
    let e = commutator_zero_delay(
        Measurement::exact(2.0),
        Measurement::exact(1.0),
        Measurement::exact(1.0),
    )?;
    Ok((e.value == 1.0, format!("value {}", e.value)))
}

fn calibration() -> Result<(bool, String)> {
    let e = run_efficiency_calibration(0.995, 0.0461, 100_000, 12)?;
    let z = (e.eta - 0.0461) / e.stderr;
    Ok((
        z.abs() < 4.0,
        format!("eta = {:.5} ± {:.5}, z = {z:.2}", e.eta, e.stderr),
    ))
}

/// Runs every check; a few seconds in an optimised build.
pub fn run_selftest() -> Vec<Check> {
    vec![
        check("correlator_matches_pair_enumeration", correlator_oracle),
        check("detection_pmf_matches_summation", pmf_oracle),
        check("ion_model_reference_values", ion_model_checks),
        check("stream_roundtrip_and_split_identity", stream_plumbing),
        check("dead_time_rate_law", dead_time_law),
        check("commutator_of_single_photon", commutator_fock),
        check("efficiency_calibration_recovers_truth", calibration),
    ]
}
