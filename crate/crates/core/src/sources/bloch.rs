//! Two-level optical Bloch dynamics.
//!
//! Two related solutions of the same driven, damped two-level atom are
//! tabulated here, both started in the ground state:
//!
//! * the unconditional excited population ρ₂₂(τ) (the optical Bloch
//!   equations), whose ratio to its steady state is the intensity
//!   correlation g²(τ) of the fluorescence;
//! * the no-emission ("no-jump") amplitude evolution, whose norm is the
//!   probability that no photon has been emitted by τ. This gives the exact
//!   waiting-time law between successive emissions.
//!
//! Both are integrated with classical RK4 at a step of at most
//! 1/(200 Γ).

use crate::error::{domain, Error, Result};

use super::{upper_state_population, IonParams};

/// RK4 steps per excited-state lifetime 1/Γ.
pub const BLOCH_STEPS_PER_LIFETIME: usize = 200;
/// Tabulated span, in lifetimes.
pub const TABLE_LIFETIMES: usize = 100;

/// Past this many lifetimes the transient is below f64 resolution.
const SETTLED_LIFETIMES: f64 = 200.0;

fn rk4<const N: usize>(y: &mut [f64; N], h: f64, f: impl Fn(&[f64; N]) -> [f64; N]) {
    let add = |y: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *y;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, h / 2.0));
    let k3 = f(&add(y, &k2, h / 2.0));
    let k4 = f(&add(y, &k3, h));
    for i in 0..N {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Right-hand side of the Bloch equations for (ρ₂₂, Re ρ₂₁, Im ρ₂₁).
fn bloch_rhs(gamma: f64, rabi: f64, detuning: f64) -> impl Fn(&[f64; 3]) -> [f64; 3] {
    move |&[pe, x, y]| {
        [
            -rabi * y - gamma * pe,
            -detuning * y - gamma / 2.0 * x,
            detuning * x - rabi / 2.0 * (1.0 - 2.0 * pe) - gamma / 2.0 * y,
        ]
    }
}

/// Right-hand side of the no-jump Schrödinger equation for
/// (Re c_g, Im c_g, Re c_e, Im c_e) under H − iΓ/2 |e⟩⟨e|.
fn no_jump_rhs(gamma: f64, rabi: f64, detuning: f64) -> impl Fn(&[f64; 4]) -> [f64; 4] {
    move |&[gr, gi, er, ei]| {
        let half = rabi / 2.0;
        [
            half * ei,
            -half * er,
            -detuning * ei - gamma / 2.0 * er + half * gi,
            detuning * er - gamma / 2.0 * ei - half * gr,
        ]
    }
}

fn step_size(p: &IonParams) -> f64 {
    1.0 / (p.linewidth * BLOCH_STEPS_PER_LIFETIME as f64)
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("Bloch integration diverged".into()))
    }
}

fn steady_population(p: &IonParams) -> Result<f64> {
    let steady = upper_state_population(p.saturation)?;
    if steady <= 0.0 {
        return Err(domain("g2 is undefined without drive (S = 0)"));
    }
    Ok(steady)
}

/// Normalised excited-state transient ρ₂₂(τ)/ρ₂₂(∞) after a ground-state
/// start, by direct integration up to `tau` seconds.
pub fn ion_g2_model(tau: f64, p: &IonParams) -> Result<f64> {
    p.validate()?;
    if !(tau >= 0.0) {
        return Err(domain(format!("delay must be >= 0, got {tau}")));
    }
    let steady = steady_population(p)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let tau = tau.min(SETTLED_LIFETIMES / p.linewidth);
    let steps = (tau / step_size(p)).ceil().max(1.0) as usize;
    let h = tau / steps as f64;
    let rhs = bloch_rhs(p.linewidth, p.rabi_frequency(), p.detuning);
    let mut y = [0.0; 3];
    for _ in 0..steps {
        rk4(&mut y, h, &rhs);
    }
    check_finite(&y)?;
    Ok((y[0] / steady).max(0.0))
}

/// Tabulated [`ion_g2_model`] over `[0, 100/Γ]` with linear interpolation.
#[derive(Clone, Debug)]
pub struct IonG2Model {
    step: f64,
    values: Vec<f64>,
}

impl IonG2Model {
    pub fn new(p: &IonParams) -> Result<Self> {
        p.validate()?;
        let steady = steady_population(p)?;
        let n = BLOCH_STEPS_PER_LIFETIME * TABLE_LIFETIMES;
        let h = step_size(p);
        let rhs = bloch_rhs(p.linewidth, p.rabi_frequency(), p.detuning);
        let mut y = [0.0; 3];
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        for _ in 0..n {
            rk4(&mut y, h, &rhs);
            values.push((y[0] / steady).max(0.0));
        }
        check_finite(&values)?;
        Ok(IonG2Model { step: h, values })
    }

    /// g²(τ) for `tau` in seconds; 1 beyond the table.
    pub fn eval(&self, tau: f64) -> f64 {
        let tau = tau.abs();
        let x = tau / self.step;
        let i = x as usize;
        if i + 1 >= self.values.len() {
            return 1.0;
        }
        let f = x - i as f64;
        self.values[i] + f * (self.values[i + 1] - self.values[i])
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn span(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    /// Largest tabulated value (the bunching overshoot).
    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(1.0, f64::max)
    }
}

/// Law of the delay between successive decays of a ground-state-reset atom.
///
/// Stored as the cumulative hazard H(τ) = −ln P(no decay by τ) on the RK4
/// grid, plus a guide table that maps an Exp(1) variate to its grid cell in
/// O(1) on average. Beyond the table the hazard is constant.
#[derive(Clone, Debug)]
pub struct WaitingTime {
    step: f64,
    linewidth: f64,
    cum_hazard: Vec<f64>,
    hazard: Vec<f64>,
    tail_hazard: f64,
    guide: Vec<u32>,
    guide_scale: f64,
}

impl WaitingTime {
    pub fn new(p: &IonParams) -> Result<Self> {
        p.validate()?;
        if p.saturation == 0.0 {
            return Err(domain("an undriven ion never emits (S = 0)"));
        }
        let n = BLOCH_STEPS_PER_LIFETIME * TABLE_LIFETIMES;
        let h = step_size(p);
        let gamma = p.linewidth;
        let rhs = no_jump_rhs(gamma, p.rabi_frequency(), p.detuning);
        let mut y = [1.0, 0.0, 0.0, 0.0];
        let mut cum_hazard = Vec::with_capacity(n + 1);
        let mut hazard = Vec::with_capacity(n + 1);
        cum_hazard.push(0.0);
        hazard.push(0.0);
        for _ in 0..n {
            rk4(&mut y, h, &rhs);
            let excited = y[2] * y[2] + y[3] * y[3];
            let survival = y[0] * y[0] + y[1] * y[1] + excited;
            if !(survival > 0.0) {
                return Err(Error::Numerical(
                    "no-emission probability underflowed".into(),
                ));
            }
            // -ln is monotone; guard against round-off at the very start
            let last = *cum_hazard.last().unwrap();
            cum_hazard.push((-survival.ln()).max(last));
            hazard.push(gamma * excited / survival);
        }
        check_finite(&cum_hazard)?;
        let tail_hazard = (cum_hazard[n] - cum_hazard[n - 1]) / h;
        if !(tail_hazard > 0.0) {
            return Err(Error::Numerical("emission hazard vanished".into()));
        }

        let end = cum_hazard[n];
        let buckets = n;
        let guide_scale = buckets as f64 / end;
        let mut guide = Vec::with_capacity(buckets + 1);
        let mut i = 0usize;
        for m in 0..=buckets {
            let e = m as f64 / guide_scale;
            while i + 1 < n && cum_hazard[i + 1] <= e {
                i += 1;
            }
            guide.push(i as u32);
        }

        Ok(WaitingTime {
            step: h,
            linewidth: gamma,
            cum_hazard,
            hazard,
            tail_hazard,
            guide,
            guide_scale,
        })
    }

    /// Maps an Exp(1) variate to a waiting time in seconds by inverting H.
    #[inline]
    pub fn invert(&self, e: f64) -> f64 {
        let n = self.cum_hazard.len() - 1;
        let end = self.cum_hazard[n];
        if e >= end {
            return n as f64 * self.step + (e - end) / self.tail_hazard;
        }
        let mut i = self.guide[(e * self.guide_scale) as usize] as usize;
        while self.cum_hazard[i + 1] <= e {
            i += 1;
        }
        let lo = self.cum_hazard[i];
        let span = self.cum_hazard[i + 1] - lo;
        let f = if span > 0.0 { (e - lo) / span } else { 0.0 };
        (i as f64 + f) * self.step
    }

    /// Probability that no decay has happened by `tau` seconds.
    pub fn survival(&self, tau: f64) -> f64 {
        (-self.cumulative_hazard(tau)).exp()
    }

    pub fn cumulative_hazard(&self, tau: f64) -> f64 {
        let x = tau.max(0.0) / self.step;
        let n = self.cum_hazard.len() - 1;
        let i = x as usize;
        if i >= n {
            return self.cum_hazard[n] + (tau - n as f64 * self.step) * self.tail_hazard;
        }
        let f = x - i as f64;
        self.cum_hazard[i] + f * (self.cum_hazard[i + 1] - self.cum_hazard[i])
    }

    /// Decay rate at `tau` seconds since the last decay, given none since.
    pub fn hazard(&self, tau: f64) -> f64 {
        let x = tau.max(0.0) / self.step;
        let i = x as usize;
        if i + 1 >= self.hazard.len() {
            return self.tail_hazard;
        }
        let f = x - i as f64;
        self.hazard[i] + f * (self.hazard[i + 1] - self.hazard[i])
    }

    /// Upper bound on [`hazard`](Self::hazard): the full decay rate Γ.
    pub fn hazard_bound(&self) -> f64 {
        self.linewidth
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ion() -> IonParams {
        // Γ = 1 so that delays read in lifetimes
        IonParams::new(1.0, 1.0, -0.5, 0.995).unwrap()
    }

    // Reference values from an independent adaptive 8th-order
    // (Dormand–Prince 8(5,3)) integration at rtol 1e-13.
    const G2_AT_HALF: f64 = 0.190_880_135_911_644_96;
    const G2_AT_ONE: f64 = 0.562_569_265_479_640_3;
    const G2_AT_TWO: f64 = 1.127_467_590_750_627;
    const G2_AT_FIVE: f64 = 1.004_751_254_755_487;
    const SURVIVAL_AT_ONE: f64 = 0.945_135_956_439_178_8;
    const SURVIVAL_AT_THREE: f64 = 0.476_988_213_001_685_15;

    #[test]
    fn g2_starts_at_zero_and_settles_to_one() {
        let p = IonParams::default();
        assert_eq!(ion_g2_model(0.0, &p).unwrap(), 0.0);
        let late = ion_g2_model(100.0 / p.linewidth, &p).unwrap();
        assert!((late - 1.0).abs() < 1e-3, "{late}");
        assert!((late - 1.0).abs() < 1e-10, "{late}");
    }

    #[test]
    fn g2_matches_reference_integration() {
        let p = unit_ion();
        for (tau, want) in [
            (0.5, G2_AT_HALF),
            (1.0, G2_AT_ONE),
            (2.0, G2_AT_TWO),
            (5.0, G2_AT_FIVE),
        ] {
            let got = ion_g2_model(tau, &p).unwrap();
            assert!((got - want).abs() < 1e-8, "tau={tau}: {got} vs {want}");
        }
    }

    #[test]
    fn g2_is_scale_invariant_in_lifetimes() {
        let p = IonParams::default();
        let got = ion_g2_model(1.0 / p.linewidth, &p).unwrap();
        assert!((got - G2_AT_ONE).abs() < 1e-8);
    }

    #[test]
    fn table_agrees_with_direct_integration() {
        let p = IonParams::default();
        let table = IonG2Model::new(&p).unwrap();
        for i in 0..400 {
            let tau = i as f64 * 0.137 / p.linewidth;
            let direct = ion_g2_model(tau, &p).unwrap();
            assert!((table.eval(tau) - direct).abs() < 1e-5, "tau={tau}");
            assert!(table.eval(tau) >= 0.0);
        }
        assert_eq!(table.eval(0.0), 0.0);
        assert_eq!(table.eval(1.0), 1.0);
        assert!((table.sup() - 1.22575).abs() < 1e-4, "{}", table.sup());
    }

    #[test]
    fn g2_rejects_bad_input() {
        let p = IonParams::default();
        assert!(ion_g2_model(-1e-9, &p).is_err());
        assert!(ion_g2_model(f64::NAN, &p).is_err());
        let mut dark = p;
        dark.saturation = 0.0;
        assert!(ion_g2_model(1e-9, &dark).is_err());
    }

    #[test]
    fn survival_matches_reference() {
        let w = WaitingTime::new(&unit_ion()).unwrap();
        assert!((w.survival(1.0) - SURVIVAL_AT_ONE).abs() < 1e-8);
        assert!((w.survival(3.0) - SURVIVAL_AT_THREE).abs() < 1e-8);
        assert_eq!(w.survival(0.0), 1.0);
    }

    #[test]
    fn invert_is_inverse_of_cumulative_hazard() {
        let w = WaitingTime::new(&IonParams::default()).unwrap();
        for i in 0..2000 {
            let e = i as f64 * 0.0217;
            let tau = w.invert(e);
            assert!((w.cumulative_hazard(tau) - e).abs() < 1e-9, "e={e}");
        }
        // deep tail
        let tau = w.invert(80.0);
        assert!((w.cumulative_hazard(tau) - 80.0).abs() < 1e-9);
    }

    #[test]
    fn hazard_is_bounded_by_linewidth() {
        let p = IonParams::default();
        let w = WaitingTime::new(&p).unwrap();
        for i in 0..5000 {
            let h = w.hazard(i as f64 * 0.03 / p.linewidth);
            assert!((0.0..=p.linewidth).contains(&h));
        }
    }

    /// The decay process is a renewal process whose renewal density must be
    /// Γ ρ₂₂(τ): h = w + w * h with waiting density w = −dS/dτ.
    #[test]
    fn renewal_equation_links_waiting_time_to_g2() {
        let p = unit_ion();
        let w = WaitingTime::new(&p).unwrap();
        let model = IonG2Model::new(&p).unwrap();
        let steady = upper_state_population(p.saturation).unwrap();
        let dt = 0.005;
        let n = 3000;
        let density: Vec<f64> = (0..=n)
            .map(|i| {
                let t = i as f64 * dt;
                w.hazard(t) * w.survival(t)
            })
            .collect();
        let renewal: Vec<f64> = (0..=n)
            .map(|i| steady * model.eval(i as f64 * dt))
            .collect();
        for i in (200..=n).step_by(250) {
            // trapezoid for ∫₀^τ w(s) h(τ − s) ds
            let mut conv = 0.0;
            for j in 0..=i {
                let wgt = if j == 0 || j == i { 0.5 } else { 1.0 };
                conv += wgt * density[j] * renewal[i - j];
            }
            conv *= dt;
            let lhs = renewal[i];
            let rhs = density[i] + conv;
            assert!(
                (lhs - rhs).abs() < 1e-4,
                "tau={}: {lhs} vs {rhs}",
                i as f64 * dt
            );
        }
    }
}
