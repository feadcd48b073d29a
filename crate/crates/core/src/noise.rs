//! Linearized quadrature noise of the reflected field.
//!
//! Fluctuations `(da, da*)` around a stable fixed point obey
//! `d/dt X = M X + sqrt(2 k1) A_in + sqrt(2 k2) B_in` with the orientation
//! frozen at its steady value. `A_in` enters through the coupling mirror
//! (`2 k1 = t^2 / tau`), `B_in` through a lumped loss port
//! (`2 k2 = (loss_rt + 2 A) / tau`); both carry vacuum. The output is
//! `A_out = sqrt(2 k1) X - A_in`, which returns vacuum exactly for an empty
//! cavity. Spectra are in shot-noise units.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::steady::{follow_branch, solve_steady, Stability, SteadyState};

type Mat2 = [[Complex64; 2]; 2];

/// Ratio `Omega / gamma_p` below which frozen orientation is questionable.
pub const FROZEN_P_MARGIN: f64 = 10.0;

/// Fluctuation dynamics around one fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedCavity {
    pub steady: SteadyState,
    /// Drift matrix on `(da, da*)`, 1/s.
    pub drift: Mat2,
    /// Amplitude rate of the coupling mirror, `k1`, 1/s.
    pub mirror_rate: f64,
    /// Amplitude rate of the lumped loss port, `k2`, 1/s.
    pub loss_rate: f64,
    /// Orientation decay rate at the fixed point, `gamma_p + beta I`, 1/s.
    pub orientation_rate: f64,
}

/// Quadrature noise at one analysis frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpectrum {
    /// Analysis angular frequency, rad/s.
    pub omega: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Local-oscillator phase of minimal noise, in `[0, pi)`.
    pub theta_min: f64,
    /// Set when `omega` is not well above the orientation rate.
    pub frozen_p_warning: bool,
    mean: f64,
    corr: Complex64,
}

impl NoiseSpectrum {
    /// Noise of the quadrature at local-oscillator phase `theta`.
    pub fn at(&self, theta: f64) -> f64 {
        self.mean + (self.corr * Complex64::from_polar(1.0, -2.0 * theta)).re
    }
}

/// Linearizes around `ss`. Unstable fixed points are rejected.
pub fn linearize(ss: &SteadyState, params: &ModelParams) -> Result<LinearizedCavity> {
    params.validate()?;
    if ss.stability != Stability::Stable {
        return Err(Error::Unstable(ss.stability.label().to_string()));
    }
    let intensity = ss.intensity;
    let p = ss.p;
    let phi_0 = ss.phi_cav - params.phase(intensity, p);
    let tau = params.tau;
    let k = params.decay(intensity, p, phi_0);
    let k_i = Complex64::new(
        params.absorption_di(intensity, p),
        -params.phase_di(intensity),
    );
    let a = ss.alpha;

    let m11 = -(k + a.norm_sqr() * k_i) / tau;
    let m12 = -(a * a * k_i) / tau;
    let drift = [[m11, m12], [m12.conj(), m11.conj()]];

    let trace = m11.re * 2.0;
    let det = (m11 * m11.conj() - m12 * m12.conj()).re;
    if !(trace < 0.0 && det > 0.0) {
        return Err(Error::Unstable(
            "field block with frozen orientation".into(),
        ));
    }

    let absorption = params.absorption(intensity, p);
    let orientation_rate = if params.pumping_on {
        params.gamma_p + params.beta * intensity
    } else {
        0.0
    };
    Ok(LinearizedCavity {
        steady: *ss,
        drift,
        mirror_rate: params.t_mirror * params.t_mirror / (2.0 * tau),
        loss_rate: (params.loss_rt + 2.0 * absorption) / (2.0 * tau),
        orientation_rate,
    })
}

impl LinearizedCavity {
    /// Drift written on `(Re da, Im da)`; equals the field block of the
    /// steady-state Jacobian.
    pub fn real_block(&self) -> [[f64; 2]; 2] {
        let (m11, m12) = (self.drift[0][0], self.drift[0][1]);
        [
            [m11.re + m12.re, m12.im - m11.im],
            [m11.im + m12.im, m11.re - m12.re],
        ]
    }

    /// Mirror and loss transfer matrices at `omega`.
    fn transfer(&self, omega: f64) -> Result<(Mat2, Mat2)> {
        let i_omega = Complex64::new(0.0, omega);
        let m = &self.drift;
        let a = i_omega - m[0][0];
        let b = -m[0][1];
        let c = -m[1][0];
        let d = i_omega - m[1][1];
        let det = a * d - b * c;
        if det.norm() <= 1e-300 || !det.re.is_finite() {
            return Err(Error::Singular(omega));
        }
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let (k1, k2) = (self.mirror_rate, self.loss_rate);
        let gm = 2.0 * k1;
        let gl = 2.0 * (k1 * k2).sqrt();
        let mut ta = [[Complex64::new(0.0, 0.0); 2]; 2];
        let mut tb = ta;
        for r in 0..2 {
            for s in 0..2 {
                ta[r][s] = gm * inv[r][s] - if r == s { 1.0 } else { 0.0 };
                tb[r][s] = gl * inv[r][s];
            }
        }
        Ok((ta, tb))
    }

    /// Analytic quadrature noise at `omega`.
    pub fn spectrum(&self, omega: f64) -> Result<NoiseSpectrum> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::Domain {
                quantity: "Omega",
                value: omega,
            });
        }
        let (ta, tb) = self.transfer(omega)?;
        let mut total = 0.0;
        let mut corr = Complex64::new(0.0, 0.0);
        for t in [&ta, &tb] {
            for (x, y) in t[0].iter().zip(&t[1]) {
                total += x.norm_sqr() + y.norm_sqr();
                corr += x * y.conj();
            }
        }
        let mean = 0.5 * total;
        let width = corr.norm();
        let theta_min = if width == 0.0 {
            0.0
        } else {
            ((corr.arg() + PI) / 2.0).rem_euclid(PI)
        };
        Ok(NoiseSpectrum {
            omega,
            s_min: mean - width,
            s_max: mean + width,
            theta_min,
            frozen_p_warning: omega < FROZEN_P_MARGIN * self.orientation_rate,
            mean,
            corr,
        })
    }
}

/// Noise of the `theta` quadrature at `omega`, shot-noise units.
pub fn quad_spectrum(lin: &LinearizedCavity, omega: f64, theta: f64) -> Result<f64> {
    Ok(lin.spectrum(omega)?.at(theta))
}

/// `(S_min, S_max, theta_min)` at `omega`.
pub fn spectrum_extrema(lin: &LinearizedCavity, omega: f64) -> Result<(f64, f64, f64)> {
    let s = lin.spectrum(omega)?;
    Ok((s.s_min, s.s_max, s.theta_min))
}

/// Efficiencies between the cavity output and the recorded noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionChain {
    /// Photodiode quantum efficiency.
    pub eta_pd: f64,
    /// Homodyne mode-matching and propagation efficiency.
    pub eta_hom: f64,
    /// Common-mode rejection, dB. Diagnostic only.
    pub cmrr_db: f64,
}

impl Default for DetectionChain {
    fn default() -> Self {
        Self {
            eta_pd: 0.94,
            eta_hom: 0.90,
            cmrr_db: 20.0,
        }
    }
}

impl DetectionChain {
    pub fn new(eta_pd: f64, eta_hom: f64) -> Result<Self> {
        let chain = Self {
            eta_pd,
            eta_hom,
            ..Self::default()
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_pd", self.eta_pd), ("eta_hom", self.eta_hom)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        if !self.cmrr_db.is_finite() {
            return Err(Error::param("cmrr_db", "must be finite"));
        }
        Ok(())
    }

    pub fn efficiency(&self) -> f64 {
        self.eta_pd * self.eta_hom
    }
}

/// Noise seen after a detector of efficiency `eta`, `1 + eta (S - 1)`.
pub fn apply_detection(s: f64, chain: &DetectionChain) -> Result<f64> {
    chain.validate()?;
    if !(s >= 0.0) {
        return Err(Error::Domain {
            quantity: "S",
            value: s,
        });
    }
    Ok(1.0 + chain.efficiency() * (s - 1.0))
}

/// Noise at the cavity output inferred from a measured value.
pub fn invert_detection(measured: f64, chain: &DetectionChain) -> Result<f64> {
    chain.validate()?;
    let eta = chain.efficiency();
    let floor = 1.0 - eta;
    if !(measured >= floor) {
        return Err(Error::Unphysical {
            measured,
            floor,
            eta,
        });
    }
    Ok(1.0 + (measured - 1.0) / eta)
}

/// Detuning, in units of the total field decay, beyond which the probe is
/// treated as fully reflected and the output as shot noise.
pub const OFF_RESONANCE_WIDTHS: f64 = 10.0;

/// Sinusoidal local-oscillator phase scan, `theta_0 + amplitude sin(2 pi f t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoScan {
    /// Scan frequency, Hz.
    pub frequency: f64,
    /// Phase excursion, rad.
    pub amplitude: f64,
    pub offset: f64,
}

impl Default for LoScan {
    fn default() -> Self {
        Self {
            frequency: 1e3,
            amplitude: PI,
            offset: 0.0,
        }
    }
}

impl LoScan {
    pub fn phase(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (2.0 * PI * self.frequency * t).sin()
    }
}

/// Settings of a synthesized homodyne recording under atom-number decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneScan {
    pub coop_0: f64,
    /// Decay time of C, s.
    pub t_decay: f64,
    /// Fixed cavity detuning in linewidths.
    pub theta: f64,
    pub input_intensity: f64,
    /// Analysis angular frequency, rad/s.
    pub omega: f64,
    pub lo: LoScan,
    /// Recording length, s.
    pub duration: f64,
    /// Sample spacing, s.
    pub dt: f64,
}

/// Where a homodyne sample was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    /// Probe reflected by the cavity; shot noise by definition.
    OffResonance,
    LowerBranch,
    UpperBranch,
    /// No stable state is occupied; no spectrum is available.
    Unstable,
}

impl SampleKind {
    pub fn label(self) -> &'static str {
        match self {
            SampleKind::OffResonance => "off-resonance",
            SampleKind::LowerBranch => "lower",
            SampleKind::UpperBranch => "upper",
            SampleKind::Unstable => "unstable",
        }
    }
}

/// Synthesized recording with its noise envelopes. Unstable samples hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneTrace {
    pub t0: f64,
    pub dt: f64,
    pub measured: Vec<f64>,
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
    pub coop: Vec<f64>,
    pub kind: Vec<SampleKind>,
}

impl HomodyneTrace {
    pub fn len(&self) -> usize {
        self.measured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measured.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// The recording as a linear noise-power trace; fails if any sample is unstable.
    pub fn trace(&self) -> Result<crate::trace::Trace> {
        if let Some(k) = self.kind.iter().position(|k| *k == SampleKind::Unstable) {
            return Err(Error::Unstable(format!("sample {k} has no stable state")));
        }
        crate::trace::Trace::new(
            self.t0,
            self.dt,
            self.measured.clone(),
            crate::trace::Unit::NoisePowerLinear,
        )
    }
}

fn off_resonance(ss: &SteadyState, params: &ModelParams) -> bool {
    let width = params.kappa() + params.absorption(ss.intensity, ss.p);
    ss.phi_cav.abs() > OFF_RESONANCE_WIDTHS * width
}

/// Noise recorded while the decaying atom number sweeps the cavity across
/// resonance and the local-oscillator phase is scanned.
pub fn synthesize_homodyne_trace(
    scan: &HomodyneScan,
    chain: &DetectionChain,
    params: &ModelParams,
) -> Result<HomodyneTrace> {
    params.validate()?;
    chain.validate()?;
    if !(scan.t_decay > 0.0 && scan.duration > 0.0 && scan.dt > 0.0) {
        return Err(Error::param(
            "homodyne scan",
            "t_decay, duration and dt must be > 0",
        ));
    }
    if !(scan.coop_0 >= 0.0) {
        return Err(Error::param(
            "C_0",
            format!("must be >= 0, got {}", scan.coop_0),
        ));
    }
    if !(scan.lo.frequency > 0.0 && scan.lo.amplitude.is_finite() && scan.lo.offset.is_finite()) {
        return Err(Error::param(
            "lo_scan",
            "frequency must be > 0 and phases finite",
        ));
    }
    let n = (scan.duration / scan.dt).round() as usize;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * scan.dt).collect();
    let coop: Vec<f64> = times
        .iter()
        .map(|t| scan.coop_0 * (-t / scan.t_decay).exp())
        .collect();
    let phi_0 = scan.theta * params.gamma_cav;
    let states = coop
        .iter()
        .map(|&c| solve_steady(scan.input_intensity, phi_0, &params.with_coop(c)))
        .collect::<Result<Vec<_>>>()?;
    let order: Vec<usize> = (0..n).collect();
    let path = follow_branch(&times, &states, &order);

    let mut out = HomodyneTrace {
        t0: 0.0,
        dt: scan.dt,
        measured: Vec::with_capacity(n),
        s_min: Vec::with_capacity(n),
        s_max: Vec::with_capacity(n),
        coop: coop.clone(),
        kind: Vec::with_capacity(n),
    };
    let mut upper = false;
    let mut last_intensity = f64::NAN;
    for (k, point) in path.iter().enumerate() {
        let ss = point.state;
        let local = params.with_coop(coop[k]);
        if point.switched {
            upper = ss.intensity > last_intensity;
        } else if states[k].len() > 1 {
            upper = point.index + 1 == states[k].len();
        }
        last_intensity = ss.intensity;
        if point.unstable_region {
            out.measured.push(f64::NAN);
            out.s_min.push(f64::NAN);
            out.s_max.push(f64::NAN);
            out.kind.push(SampleKind::Unstable);
            continue;
        }
        if off_resonance(&ss, &local) {
            upper = false;
            out.measured.push(1.0);
            out.s_min.push(1.0);
            out.s_max.push(1.0);
            out.kind.push(SampleKind::OffResonance);
            continue;
        }
        let spectrum = match linearize(&ss, &local) {
            Ok(lin) => lin.spectrum(scan.omega)?,
            // stable only through the orientation; no frozen-p spectrum exists
            Err(Error::Unstable(_)) => {
                out.measured.push(f64::NAN);
                out.s_min.push(f64::NAN);
                out.s_max.push(f64::NAN);
                out.kind.push(SampleKind::Unstable);
                continue;
            }
            Err(e) => return Err(e),
        };
        let s = spectrum.at(scan.lo.phase(times[k]));
        out.measured.push(apply_detection(s, chain)?);
        out.s_min.push(apply_detection(spectrum.s_min, chain)?);
        out.s_max.push(apply_detection(spectrum.s_max, chain)?);
        out.kind.push(if upper {
            SampleKind::UpperBranch
        } else {
            SampleKind::LowerBranch
        });
    }
    Ok(out)
}
