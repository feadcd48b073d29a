//! Parameters, state and right-hand side of the cavity + orientation model.
//!
//! The intracavity amplitude `alpha` obeys, per round trip of duration `tau`,
//!
//! ```text
//! tau dalpha/dt = t alpha_in - (gamma_cav + loss_rt/2 + A(I, p) - i phi_cav) alpha
//! phi_cav       = phi_0 + p phi_L + 2 C gamma_cav delta_a / (1 + delta_a^2 + I)
//! dp/dt         = -gamma_p p + beta I (1 - p)
//! ```
//!
//! with `I = |alpha|^2` in units of the atomic saturation intensity and
//! `phi_L = 2 C gamma_cav delta_a / (1 + delta_a^2)` the unsaturated linear
//! phase. The saturated term decreases with `I` for `delta_a > 0`; the
//! orientation term raises the index. `A` is an optional absorptive loss
//! scaled by the same `(1 + p)` coupling enhancement.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Physical and numerical constants of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Round-trip time, s.
    pub tau: f64,
    /// Amplitude transmission of the coupling mirror.
    pub t_mirror: f64,
    /// Mirror decay per round trip, always `t_mirror^2 / 2`.
    pub gamma_cav: f64,
    /// Extra round-trip intensity loss (windows).
    pub loss_rt: f64,
    /// Bistability parameter C.
    pub coop: f64,
    /// Atomic detuning in half-linewidths, `2 Delta / Gamma`.
    pub delta_a: f64,
    /// Atomic decay rate, rad/s.
    pub gamma_atom: f64,
    /// Orientation decay rate, 1/s.
    pub gamma_p: f64,
    /// Pumping rate per unit saturation intensity, 1/s.
    pub beta: f64,
    pub absorption_on: bool,
    /// When false the orientation is frozen at its initial value.
    pub pumping_on: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        let t_mirror = 0.1f64.sqrt();
        Self {
            tau: 1.668e-9,
            t_mirror,
            gamma_cav: t_mirror * t_mirror / 2.0,
            loss_rt: DEFAULT_LOSS_RT,
            coop: 100.0,
            delta_a: 44.0,
            gamma_atom: 2.0 * PI * 5.2e6,
            gamma_p: DEFAULT_GAMMA_P,
            beta: DEFAULT_BETA,
            absorption_on: false,
            pumping_on: true,
        }
    }
}

/// Default round-trip window loss (both windows together).
pub const DEFAULT_LOSS_RT: f64 = 0.01;
/// Default orientation decay rate, 1/s.
pub const DEFAULT_GAMMA_P: f64 = 1.0e4;
/// Default pumping rate per saturation unit, 1/s. Calibrated so that
/// relaxation oscillations fall between 100 kHz and a few MHz.
pub const DEFAULT_BETA: f64 = 2.0e3;

impl ModelParams {
    /// Builds parameters with `gamma_cav` derived from the mirror transmission.
    pub fn with_mirror(mut self, t_mirror: f64) -> Self {
        self.t_mirror = t_mirror;
        self.gamma_cav = t_mirror * t_mirror / 2.0;
        self
    }

    pub fn with_coop(mut self, coop: f64) -> Self {
        self.coop = coop;
        self
    }

    pub fn with_detuning(mut self, delta_a: f64) -> Self {
        self.delta_a = delta_a;
        self
    }

    pub fn with_pumping(mut self, on: bool) -> Self {
        self.pumping_on = on;
        self
    }

    pub fn with_loss(mut self, loss_rt: f64) -> Self {
        self.loss_rt = loss_rt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        };
        let non_negative = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        positive("tau", self.tau)?;
        positive("Gamma", self.gamma_atom)?;
        non_negative("gamma_p", self.gamma_p)?;
        non_negative("beta", self.beta)?;
        non_negative("C", self.coop)?;
        if !self.delta_a.is_finite() {
            return Err(Error::param("delta_a", "must be finite"));
        }
        if !(self.t_mirror > 0.0 && self.t_mirror < 1.0) {
            return Err(Error::param(
                "t_mirror",
                format!("must lie in (0, 1), got {}", self.t_mirror),
            ));
        }
        if !(self.loss_rt >= 0.0 && self.loss_rt < 1.0) {
            return Err(Error::param(
                "loss_rt",
                format!("must lie in [0, 1), got {}", self.loss_rt),
            ));
        }
        let expected = self.t_mirror * self.t_mirror / 2.0;
        if (self.gamma_cav - expected).abs() > 1e-9 * expected {
            return Err(Error::param(
                "gamma_cav",
                format!(
                    "must equal t_mirror^2/2 = {expected}, got {}",
                    self.gamma_cav
                ),
            ));
        }
        let width = self.linewidth_hz();
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::param(
                "gamma_cav",
                "cavity linewidth must be finite and > 0",
            ));
        }
        Ok(())
    }

    /// Cavity linewidth `gamma_cav / (2 pi tau)` in Hz (mirror contribution only).
    pub fn linewidth_hz(&self) -> f64 {
        self.gamma_cav / (2.0 * PI * self.tau)
    }

    /// Total passive amplitude decay per round trip, `gamma_cav + loss_rt/2`.
    pub fn kappa(&self) -> f64 {
        self.gamma_cav + self.loss_rt / 2.0
    }

    /// Saturation denominator `1 + delta_a^2`.
    fn sat_base(&self) -> f64 {
        1.0 + self.delta_a * self.delta_a
    }

    /// Unsaturated linear atomic phase `phi_L`.
    pub fn phi_linear(&self) -> f64 {
        2.0 * self.coop * self.gamma_cav * self.delta_a / self.sat_base()
    }

    pub(crate) fn phase(&self, intensity: f64, p: f64) -> f64 {
        p * self.phi_linear()
            + 2.0 * self.coop * self.gamma_cav * self.delta_a / (self.sat_base() + intensity)
    }

    /// `d phase / d I` at fixed `p`.
    pub(crate) fn phase_di(&self, intensity: f64) -> f64 {
        let d = self.sat_base() + intensity;
        -2.0 * self.coop * self.gamma_cav * self.delta_a / (d * d)
    }

    pub(crate) fn absorption(&self, intensity: f64, p: f64) -> f64 {
        if self.absorption_on {
            2.0 * self.coop * self.gamma_cav * (1.0 + p) / (self.sat_base() + intensity)
        } else {
            0.0
        }
    }

    pub(crate) fn absorption_di(&self, intensity: f64, p: f64) -> f64 {
        if self.absorption_on {
            let d = self.sat_base() + intensity;
            -2.0 * self.coop * self.gamma_cav * (1.0 + p) / (d * d)
        } else {
            0.0
        }
    }

    pub(crate) fn absorption_dp(&self, intensity: f64) -> f64 {
        if self.absorption_on {
            2.0 * self.coop * self.gamma_cav / (self.sat_base() + intensity)
        } else {
            0.0
        }
    }

    pub(crate) fn pump(&self, intensity: f64) -> f64 {
        if !self.pumping_on {
            return 0.0;
        }
        let rate = self.beta * intensity;
        let total = self.gamma_p + rate;
        if total == 0.0 {
            0.0
        } else {
            rate / total
        }
    }

    /// Complex round-trip decay `K = kappa + A - i phi_cav` at the given point.
    pub(crate) fn decay(&self, intensity: f64, p: f64, phi_0: f64) -> Complex64 {
        Complex64::new(
            self.kappa() + self.absorption(intensity, p),
            -(phi_0 + self.phase(intensity, p)),
        )
    }
}

/// Dynamical state: intracavity amplitude and ground-state orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityState {
    pub alpha: Complex64,
    pub p: f64,
}

impl CavityState {
    pub fn new(alpha: Complex64, p: f64) -> Self {
        Self { alpha, p }
    }

    pub fn empty() -> Self {
        Self::new(Complex64::new(0.0, 0.0), 0.0)
    }

    pub fn intensity(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha.re, self.alpha.im, self.p]
    }

    pub fn from_array(y: [f64; 3]) -> Self {
        Self::new(Complex64::new(y[0], y[1]), y[2])
    }
}

/// Time dependence applied on top of a [`DriveSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Schedule {
    /// Linear ramp rate of `phi_0`, rad/s.
    pub phi_rate: f64,
    /// Time constant of the exponential decay of C, s.
    pub coop_decay: Option<f64>,
}

/// Drive field and cavity tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    /// Real input amplitude; `I_in = alpha_in^2`.
    pub alpha_in: f64,
    /// Empty-cavity round-trip phase at `t = 0`, rad.
    pub phi_0: f64,
    pub schedule: Schedule,
}

/// A [`DriveSpec`] evaluated at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePoint {
    pub alpha_in: f64,
    pub phi_0: f64,
    /// Multiplier applied to C.
    pub coop_scale: f64,
}

impl DriveSpec {
    pub fn constant(input_intensity: f64, phi_0: f64) -> Self {
        Self {
            alpha_in: input_intensity.max(0.0).sqrt(),
            phi_0,
            schedule: Schedule::default(),
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn input_intensity(&self) -> f64 {
        self.alpha_in * self.alpha_in
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_in.is_finite() && self.alpha_in >= 0.0) {
            return Err(Error::param(
                "alpha_in",
                format!("must be >= 0, got {}", self.alpha_in),
            ));
        }
        if let Some(decay) = self.schedule.coop_decay {
            if !(decay.is_finite() && decay > 0.0) {
                return Err(Error::param("T_decay", format!("must be > 0, got {decay}")));
            }
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> DrivePoint {
        DrivePoint {
            alpha_in: self.alpha_in,
            phi_0: self.phi_0 + self.schedule.phi_rate * t,
            coop_scale: self.schedule.coop_decay.map_or(1.0, |tc| (-t / tc).exp()),
        }
    }
}

impl DrivePoint {
    pub fn steady(alpha_in: f64, phi_0: f64) -> Self {
        Self {
            alpha_in,
            phi_0,
            coop_scale: 1.0,
        }
    }

    /// Parameters with the instantaneous value of C.
    pub fn params(&self, params: &ModelParams) -> ModelParams {
        params.with_coop(params.coop * self.coop_scale)
    }
}

fn check_intensity(intensity: f64) -> Result<()> {
    if intensity >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            quantity: "intensity",
            value: intensity,
        })
    }
}

/// Round-trip phase contributed by the atoms, `p phi_L + phi_L (1 + delta_a^2)/(1 + delta_a^2 + I)`.
pub fn atomic_phase(intensity: f64, p: f64, params: &ModelParams) -> Result<f64> {
    check_intensity(intensity)?;
    Ok(params.phase(intensity, p))
}

/// Round-trip amplitude decay from atomic absorption; zero unless enabled.
pub fn atomic_absorption(intensity: f64, p: f64, params: &ModelParams) -> Result<f64> {
    check_intensity(intensity)?;
    Ok(params.absorption(intensity, p))
}

/// Fixed point of the orientation equation at constant intensity.
///
/// With `gamma_p = 0` and `I = 0` the rate equation is degenerate; 0 is returned.
/// With pumping disabled the orientation is frozen and 0 is returned as well.
pub fn pump_steady(intensity: f64, params: &ModelParams) -> Result<f64> {
    check_intensity(intensity)?;
    Ok(params.pump(intensity))
}

/// Time derivative of the state, `(dalpha/dt, dp/dt)`.
pub fn rhs(state: &CavityState, drive: &DrivePoint, params: &ModelParams) -> CavityState {
    let params = drive.params(params);
    let intensity = state.intensity();
    let k = params.decay(intensity, state.p, drive.phi_0);
    let dalpha = (params.t_mirror * drive.alpha_in - k * state.alpha) / params.tau;
    let dp = if params.pumping_on {
        -params.gamma_p * state.p + params.beta * intensity * (1.0 - state.p)
    } else {
        0.0
    };
    CavityState::new(dalpha, dp)
}
