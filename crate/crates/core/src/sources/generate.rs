use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Geometric};

use super::bloch::{WaitingTime, TABLE_LIFETIMES};
use super::{scattering_rate, CoherentParams, IonParams};
use crate::error::{domain, Result};
use crate::rng::{self, Rng};
use crate::timetag::{Ticks, TimeTagStream, TICKS_PER_SECOND};

/// A stationary point process that can fill any time window on demand.
///
/// `fill` appends, in increasing order, the emission times falling in
/// `[start, end)` to `out`. Windows generated with independent generators
/// are statistically independent; callers partition long runs into windows
/// with one sub-stream each.
pub trait Emitter: Sync {
    fn fill(&self, start: Ticks, end: Ticks, rng: &mut Rng, out: &mut Vec<Ticks>);

    /// Long-run mean emission rate in photons/s.
    fn mean_rate(&self) -> f64;
}

/// Advances an integer tick clock by real-valued gaps without drift: the
/// integer part is carried in `base`, the sub-tick remainder in `frac`.
struct Clock {
    base: Ticks,
    frac: f64,
}

impl Clock {
    #[inline]
    fn settle(&mut self) {
        let whole = self.frac.floor();
        self.base = self.base.saturating_add(whole as u64);
        self.frac -= whole;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CoherentEmitter {
    rate: f64,
    mean_gap_ticks: f64,
}

impl CoherentEmitter {
    pub fn new(p: &CoherentParams) -> Result<Self> {
        p.validate()?;
        Ok(Self::with_rate(p.rate))
    }

    pub(crate) fn with_rate(rate: f64) -> Self {
        CoherentEmitter {
            rate,
            mean_gap_ticks: TICKS_PER_SECOND as f64 / rate,
        }
    }
}

impl Emitter for CoherentEmitter {
    fn fill(&self, start: Ticks, end: Ticks, rng: &mut Rng, out: &mut Vec<Ticks>) {
        if self.rate <= 0.0 {
            return;
        }
        let mut clock = Clock {
            base: start,
            frac: 0.0,
        };
        loop {
            let e: f64 = Exp1.sample(rng);
            clock.frac += e * self.mean_gap_ticks;
            clock.settle();
            if clock.base >= end {
                break;
            }
            out.push(clock.base);
        }
    }

    fn mean_rate(&self) -> f64 {
        self.rate
    }
}

/// How the single-ion waiting times are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IonSampling {
    /// Invert the tabulated cumulative hazard at an Exp(1) variate.
    #[default]
    InverseTransform,
    /// Ogata thinning of rate-Γ candidates against the tabulated hazard.
    Ogata,
}

/// Resonance fluorescence of one driven ion.
///
/// Every decay resets the atom to its ground state, so emissions form a
/// renewal process. Its waiting-time law comes from [`WaitingTime`]; a decay
/// yields a photon on the detected transition with probability β (the
/// remainder goes to the repumped metastable level and is not seen). Each
/// window starts from a ground-state atom 100 lifetimes before `start`, so
/// the process is stationary by the start of every window.
#[derive(Clone, Debug)]
pub struct IonEmitter {
    waiting: WaitingTime,
    branching: f64,
    rate: f64,
    burn_in_ticks: f64,
    sampling: IonSampling,
}

impl IonEmitter {
    pub fn new(p: &IonParams) -> Result<Self> {
        Self::with_sampling(p, IonSampling::default())
    }

    pub fn with_sampling(p: &IonParams, sampling: IonSampling) -> Result<Self> {
        let waiting = WaitingTime::new(p)?;
        Ok(IonEmitter {
            waiting,
            branching: p.branching,
            rate: scattering_rate(p)?,
            burn_in_ticks: TABLE_LIFETIMES as f64 / p.linewidth * TICKS_PER_SECOND as f64,
            sampling,
        })
    }

    pub fn waiting_time(&self) -> &WaitingTime {
        &self.waiting
    }

    /// Seconds until the next decay.
    #[inline]
    fn next_gap(&self, rng: &mut Rng) -> f64 {
        match self.sampling {
            IonSampling::InverseTransform => self.waiting.invert(Exp1.sample(rng)),
            IonSampling::Ogata => {
                let bound = self.waiting.hazard_bound();
                let mut t = 0.0;
                loop {
                    let e: f64 = Exp1.sample(rng);
                    t += e / bound;
                    if rng.random::<f64>() * bound <= self.waiting.hazard(t) {
                        return t;
                    }
                }
            }
        }
    }
}

impl Emitter for IonEmitter {
    fn fill(&self, start: Ticks, end: Ticks, rng: &mut Rng, out: &mut Vec<Ticks>) {
        const TPS: f64 = TICKS_PER_SECOND as f64;
        let mut rel = -self.burn_in_ticks;
        while rel < 0.0 {
            rel += self.next_gap(rng) * TPS;
        }
        let mut clock = Clock {
            base: start,
            frac: rel,
        };
        loop {
            clock.settle();
            if clock.base >= end {
                break;
            }
            if self.branching >= 1.0 || rng.random::<f64>() < self.branching {
                out.push(clock.base);
            }
            clock.frac += self.next_gap(rng) * TPS;
        }
    }

    fn mean_rate(&self) -> f64 {
        self.rate
    }
}

/// Poissonian photon stream on channel 0.
pub fn gen_coherent(p: &CoherentParams, duration: Ticks, seed: u64) -> Result<TimeTagStream> {
    let emitter = CoherentEmitter::new(p)?;
    Ok(single_window(&emitter, duration, seed))
}

/// Antibunched single-ion photon stream on channel 0.
pub fn gen_single_ion(p: &IonParams, duration: Ticks, seed: u64) -> Result<TimeTagStream> {
    p.validate()?;
    if p.saturation == 0.0 {
        return Ok(TimeTagStream::empty(duration));
    }
    let emitter = IonEmitter::new(p)?;
    Ok(single_window(&emitter, duration, seed))
}

fn single_window(emitter: &dyn Emitter, duration: Ticks, seed: u64) -> TimeTagStream {
    let mut ts = Vec::with_capacity(expected_len(emitter.mean_rate(), duration));
    emitter.fill(0, duration, &mut rng::rng(seed), &mut ts);
    TimeTagStream::from_timestamps(ts, 0, duration).expect("emitters produce sorted in-window tags")
}

pub(crate) fn expected_len(rate: f64, duration: Ticks) -> usize {
    let n = rate * duration as f64 / TICKS_PER_SECOND as f64;
    (n + 5.0 * n.sqrt() + 16.0).min(1e9) as usize
}

/// Photons emitted in each of `n_cycles` fluorescence bursts that end when
/// the ion is shelved: i.i.d. counts with P(n) = βⁿ(1 − β).
pub fn gen_shelving_cycles(branching: f64, n_cycles: u64, seed: u64) -> Result<Vec<u64>> {
    if !(branching > 0.0 && branching < 1.0) {
        return Err(domain(format!(
            "branching ratio {branching} outside (0, 1)"
        )));
    }
    if n_cycles == 0 {
        return Err(domain("need at least one shelving cycle"));
    }
    let geometric = Geometric::new(1.0 - branching).map_err(|e| domain(e.to_string()))?;
    let mut rng = rng::rng(seed);
    Ok((0..n_cycles).map(|_| geometric.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_duration_gives_empty_streams() {
        let c = CoherentParams::new(1e6, 0.1).unwrap();
        assert!(gen_coherent(&c, 0, 1).unwrap().is_empty());
        assert!(gen_single_ion(&IonParams::default(), 0, 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn generators_are_deterministic() {
        let c = CoherentParams::new(1e7, 0.1).unwrap();
        let d = 1_000_000_000;
        assert_eq!(
            gen_coherent(&c, d, 5).unwrap(),
            gen_coherent(&c, d, 5).unwrap()
        );
        assert_ne!(
            gen_coherent(&c, d, 5).unwrap(),
            gen_coherent(&c, d, 6).unwrap()
        );
        let p = IonParams::default();
        assert_eq!(
            gen_single_ion(&p, d, 5).unwrap(),
            gen_single_ion(&p, d, 5).unwrap()
        );
    }

    #[test]
    fn ion_never_emits_twice_at_once() {
        let s = gen_single_ion(&IonParams::default(), 10_000_000_000, 9).unwrap();
        assert!(s.len() > 100_000);
        let min_gap = s
            .timestamps()
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap();
        // the no-emission probability only starts falling after a decay;
        // gaps below 10 ps are astronomically unlikely
        assert!(min_gap > 10, "{min_gap}");
    }

    #[test]
    fn shelving_validation() {
        assert!(gen_shelving_cycles(0.0, 10, 1).is_err());
        assert!(gen_shelving_cycles(1.0, 10, 1).is_err());
        assert!(gen_shelving_cycles(0.5, 0, 1).is_err());
    }

    #[test]
    fn shelving_with_tiny_branching_is_all_zero() {
        let counts = gen_shelving_cycles(1e-9, 10_000, 3).unwrap();
        assert!(counts.iter().all(|&n| n == 0));
    }
}
