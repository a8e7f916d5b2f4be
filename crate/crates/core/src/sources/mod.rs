//! Photon-emission models: coherent light, a driven single ion, and the
//! shelving-terminated bursts used for efficiency calibration.

mod bloch;
mod generate;

pub use bloch::{ion_g2_model, IonG2Model, WaitingTime, BLOCH_STEPS_PER_LIFETIME, TABLE_LIFETIMES};
pub use generate::{
    gen_coherent, gen_shelving_cycles, gen_single_ion, CoherentEmitter, Emitter, IonEmitter,
    IonSampling,
};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A driven two-level transition with a weak leak out of the cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonParams {
    /// Excited-state decay rate Γ in rad/s.
    pub linewidth: f64,
    /// Saturation parameter S.
    pub saturation: f64,
    /// Laser detuning Δ in rad/s.
    pub detuning: f64,
    /// Probability β that a decay returns to the ground state on the
    /// detected transition.
    pub branching: f64,
    /// Coherence time in seconds; the excited-state lifetime 1/Γ.
    pub coherence_time: f64,
}

impl IonParams {
    pub fn new(linewidth: f64, saturation: f64, detuning: f64, branching: f64) -> Result<Self> {
        let p = IonParams {
            linewidth,
            saturation,
            detuning,
            branching,
            coherence_time: 1.0 / linewidth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth > 0.0 && self.linewidth.is_finite()) {
            return Err(domain(format!(
                "linewidth must be positive, got {}",
                self.linewidth
            )));
        }
        if !(self.saturation >= 0.0 && self.saturation.is_finite()) {
            return Err(domain(format!(
                "saturation must be >= 0, got {}",
                self.saturation
            )));
        }
        if !self.detuning.is_finite() {
            return Err(domain("detuning must be finite"));
        }
        if !(self.branching > 0.0 && self.branching <= 1.0) {
            return Err(domain(format!(
                "branching ratio {} outside (0, 1]",
                self.branching
            )));
        }
        if !(self.coherence_time > 0.0 && self.coherence_time.is_finite()) {
            return Err(domain(format!(
                "coherence time must be positive, got {}",
                self.coherence_time
            )));
        }
        Ok(())
    }

    /// Rabi frequency Ω from S = (Ω²/2) / (Δ² + Γ²/4).
    pub fn rabi_frequency(&self) -> f64 {
        let g = self.linewidth;
        (2.0 * self.saturation * (self.detuning * self.detuning + g * g / 4.0)).sqrt()
    }
}

impl Default for IonParams {
    /// ¹⁷⁴Yb⁺ S₁/₂–P₁/₂ at S = 1, Δ = −Γ/2.
    fn default() -> Self {
        let linewidth = 2.0 * std::f64::consts::PI * 19.6e6;
        IonParams {
            linewidth,
            saturation: 1.0,
            detuning: -linewidth / 2.0,
            branching: 0.995,
            coherence_time: 1.0 / linewidth,
        }
    }
}

/// A stabilised laser: Poissonian photon arrivals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentParams {
    /// Mean photon rate in photons/s.
    pub rate: f64,
    /// Coherence time in seconds.
    pub coherence_time: f64,
}

impl CoherentParams {
    pub fn new(rate: f64, coherence_time: f64) -> Result<Self> {
        let p = CoherentParams {
            rate,
            coherence_time,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(domain(format!(
                "coherent rate must be positive, got {}",
                self.rate
            )));
        }
        if !(self.coherence_time > 0.0 && self.coherence_time.is_finite()) {
            return Err(domain(format!(
                "coherence time must be positive, got {}",
                self.coherence_time
            )));
        }
        Ok(())
    }
}

/// Steady-state excited population ρ₂₂ = S / (2(1 + S)).
pub fn upper_state_population(saturation: f64) -> Result<f64> {
    if !(saturation >= 0.0) {
        return Err(domain(format!("saturation must be >= 0, got {saturation}")));
    }
    if saturation.is_infinite() {
        return Ok(0.5);
    }
    Ok(saturation / (2.0 * (1.0 + saturation)))
}

/// Fluorescence rate on the detected transition, β Γ ρ₂₂, in photons/s.
pub fn scattering_rate(p: &IonParams) -> Result<f64> {
    p.validate()?;
    Ok(p.branching * p.linewidth * upper_state_population(p.saturation)?)
}
