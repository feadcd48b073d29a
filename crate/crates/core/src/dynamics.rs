//! Time-domain integration, cavity-length and atom-decay scans, and limit
//! cycle detection.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{rhs, CavityState, DriveSpec, ModelParams, Schedule};
use crate::ode::{self, Stats, Tolerances};
use crate::steady::{solve_steady, Stability, SteadyState};
use crate::trace::{Trace, Unit};

/// Peak-to-peak amplitude, relative to the window mean, above which a window
/// counts as oscillating.
pub const AMPLITUDE_THRESHOLD: f64 = 0.05;
/// Maximum relative disagreement between the zero-crossing and Fourier
/// frequency estimates.
pub const FREQUENCY_AGREEMENT: f64 = 0.2;

/// Default step ceiling, a tenth of the intensity decay time `tau / (2 gamma_cav)`.
pub fn default_step_ceiling(params: &ModelParams) -> f64 {
    0.1 * params.tau / (2.0 * params.gamma_cav)
}

/// Sampled solution of the field + orientation equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<CavityState>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn intensity(&self) -> Trace {
        Trace {
            t0: self.t0,
            dt: self.dt,
            samples: self.states.iter().map(|s| s.intensity()).collect(),
            unit: Unit::Intensity,
        }
    }

    pub fn orientation(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.p).collect()
    }

    pub fn last(&self) -> CavityState {
        *self
            .states
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

/// Integrates from `initial` over `t_span` seconds, sampling every `dt_out`.
///
/// `tol` is the per-step relative (and absolute) error target, in `[1e-12, 1e-3]`.
pub fn integrate(
    initial: CavityState,
    drive: &DriveSpec,
    params: &ModelParams,
    t_span: f64,
    dt_out: f64,
    tol: f64,
) -> Result<Trajectory> {
    integrate_with(
        initial,
        drive,
        params,
        t_span,
        dt_out,
        &Tolerances::new(tol, default_step_ceiling(params)),
    )
}

/// [`integrate`] with explicit step-size control.
pub fn integrate_with(
    initial: CavityState,
    drive: &DriveSpec,
    params: &ModelParams,
    t_span: f64,
    dt_out: f64,
    tol: &Tolerances,
) -> Result<Trajectory> {
    params.validate()?;
    drive.validate()?;
    if !(t_span.is_finite() && t_span > 0.0) {
        return Err(Error::param("t_span", format!("must be > 0, got {t_span}")));
    }
    if !(dt_out > 0.0 && dt_out <= t_span) {
        return Err(Error::param(
            "dt_out",
            format!("must lie in (0, t_span], got {dt_out}"),
        ));
    }
    if !(1e-12..=1e-3).contains(&tol.rtol) {
        return Err(Error::param(
            "tol",
            format!("must lie in [1e-12, 1e-3], got {}", tol.rtol),
        ));
    }
    let samples = (t_span / dt_out).round() as usize + 1;
    let (ys, stats) = ode::integrate(
        |t, y: &[f64; 3]| {
            let d = rhs(&CavityState::from_array(*y), &drive.at(t), params);
            d.to_array()
        },
        0.0,
        initial.to_array(),
        dt_out,
        samples,
        tol,
    )?;
    Ok(Trajectory {
        t0: 0.0,
        dt: dt_out,
        states: ys.into_iter().map(CavityState::from_array).collect(),
        stats,
    })
}

/// Linear ramp of the cavity detuning `Theta = phi_0 / gamma_cav`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityRamp {
    pub theta_start: f64,
    pub theta_end: f64,
    /// Ramp duration, s.
    pub duration: f64,
}

impl CavityRamp {
    /// Scan rate in cavity linewidths per second.
    pub fn rate(&self) -> f64 {
        (self.theta_end - self.theta_start) / self.duration
    }

    pub fn theta_at(&self, t: f64) -> f64 {
        self.theta_start + self.rate() * t
    }
}

/// Output of a dynamic scan.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicScan {
    /// Transmitted intensity (proportional to the intracavity intensity).
    pub transmitted: Trace,
    /// Ground-state orientation on the same time base.
    pub orientation: Vec<f64>,
    /// Cavity detuning on the same time base.
    pub theta: Vec<f64>,
    pub stats: Stats,
}

/// Abrupt change of the transmitted intensity during a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Switch {
    /// Scan coordinate (detuning or time) at the steepest part of the change.
    pub position: f64,
    /// Intensity after over intensity before; above 1 for an upward switch.
    pub ratio: f64,
}

/// Averages `samples` over bins of `step` along the monotone `coord`, then
/// reports runs of same-direction bin-to-bin changes above `min_ratio`.
fn switch_events(coord: &[f64], samples: &[f64], step: f64, min_ratio: f64) -> Result<Vec<Switch>> {
    if !(step > 0.0 && min_ratio > 1.0) {
        return Err(Error::param(
            "switches",
            "step must be > 0 and min_ratio > 1",
        ));
    }
    let (Some(&first), Some(&last)) = (coord.first(), coord.last()) else {
        return Err(Error::EmptyTrace);
    };
    let direction = if last >= first { 1.0 } else { -1.0 };
    let mut bins: Vec<(f64, f64, usize)> = Vec::new();
    for (&x, &v) in coord.iter().zip(samples) {
        let b = ((x - first) * direction / step).floor().max(0.0) as usize;
        while bins.len() <= b {
            bins.push((first + direction * (bins.len() as f64 + 0.5) * step, 0.0, 0));
        }
        bins[b].1 += v;
        bins[b].2 += 1;
    }
    let means: Vec<(f64, f64)> = bins
        .iter()
        .filter(|b| b.2 > 0)
        .map(|b| (b.0, (b.1 / b.2 as f64).max(1e-300)))
        .collect();
    let mut out = Vec::new();
    // (product of ratios, steepest log step, its position)
    let mut run: Option<(f64, f64, f64)> = None;
    for w in means.windows(2) {
        let r = w[1].1 / w[0].1;
        let edge = 0.5 * (w[0].0 + w[1].0);
        let is_event = r > min_ratio || r < 1.0 / min_ratio;
        run = match run {
            Some((prod, steep, at)) if is_event && (prod > 1.0) == (r > 1.0) => {
                if r.ln().abs() > steep.abs() {
                    Some((prod * r, r.ln(), edge))
                } else {
                    Some((prod * r, steep, at))
                }
            }
            prev => {
                if let Some((prod, _, at)) = prev {
                    out.push(Switch {
                        position: at,
                        ratio: prod,
                    });
                }
                is_event.then(|| (r, r.ln(), edge))
            }
        };
    }
    if let Some((prod, _, at)) = run {
        out.push(Switch {
            position: at,
            ratio: prod,
        });
    }
    Ok(out)
}

impl DynamicScan {
    /// Switches along the detuning, after averaging over bins of `theta_step`.
    /// Runs of adjacent same-direction changes above `min_ratio` merge into one.
    pub fn switches(&self, theta_step: f64, min_ratio: f64) -> Result<Vec<Switch>> {
        switch_events(
            &self.theta,
            &self.transmitted.samples,
            theta_step,
            min_ratio,
        )
    }

    /// As [`DynamicScan::switches`], binned in time; positions are in seconds.
    pub fn switches_in_time(&self, t_step: f64, min_ratio: f64) -> Result<Vec<Switch>> {
        let times: Vec<f64> = self.transmitted.times().collect();
        switch_events(&times, &self.transmitted.samples, t_step, min_ratio)
    }
}

/// Lowest-intensity stable steady state, or the lowest state when none is stable.
pub fn lowest_stable(states: &[SteadyState]) -> SteadyState {
    states
        .iter()
        .find(|s| s.stability == Stability::Stable)
        .or_else(|| states.first())
        .copied()
        .expect("solve_steady returns at least one root")
}

/// Integrates while the cavity detuning is ramped linearly, starting from the
/// lowest stable steady state at the start of the ramp.
pub fn scan_cavity_dynamic(
    input_intensity: f64,
    ramp: &CavityRamp,
    params: &ModelParams,
    dt_out: f64,
    tol: f64,
) -> Result<DynamicScan> {
    if !(ramp.duration > 0.0) {
        return Err(Error::param("ramp.duration", "must be > 0"));
    }
    let gamma = params.gamma_cav;
    let start = lowest_stable(&solve_steady(
        input_intensity,
        ramp.theta_start * gamma,
        params,
    )?);
    let drive =
        DriveSpec::constant(input_intensity, ramp.theta_start * gamma).with_schedule(Schedule {
            phi_rate: ramp.rate() * gamma,
            coop_decay: None,
        });
    let traj = integrate(start.state(), &drive, params, ramp.duration, dt_out, tol)?;
    let theta = (0..traj.states.len())
        .map(|k| ramp.theta_at(k as f64 * dt_out))
        .collect();
    Ok(DynamicScan {
        transmitted: traj.intensity(),
        orientation: traj.orientation(),
        theta,
        stats: traj.stats,
    })
}

/// Integrates at fixed cavity detuning while C decays as `C_0 exp(-t / T_decay)`.
#[allow(clippy::too_many_arguments)]
pub fn scan_atom_decay(
    input_intensity: f64,
    theta: f64,
    coop_0: f64,
    t_decay: f64,
    duration: f64,
    params: &ModelParams,
    dt_out: f64,
    tol: f64,
) -> Result<DynamicScan> {
    let params = params.with_coop(coop_0);
    let phi_0 = theta * params.gamma_cav;
    let start = lowest_stable(&solve_steady(input_intensity, phi_0, &params)?);
    let drive = DriveSpec::constant(input_intensity, phi_0).with_schedule(Schedule {
        phi_rate: 0.0,
        coop_decay: Some(t_decay),
    });
    let traj = integrate(start.state(), &drive, &params, duration, dt_out, tol)?;
    let n = traj.states.len();
    Ok(DynamicScan {
        transmitted: traj.intensity(),
        orientation: traj.orientation(),
        theta: vec![theta; n],
        stats: traj.stats,
    })
}

/// Summary of an oscillation analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationReport {
    pub oscillating: bool,
    /// Peak-to-peak amplitude.
    pub amplitude: f64,
    /// Dominant frequency, Hz (zero-crossing estimate); 0 when not oscillating.
    pub frequency: f64,
    /// Frequency of the largest Fourier bin, Hz.
    pub frequency_dft: f64,
    pub mean: f64,
    /// Analysis interval `(start, end)`, s.
    pub window: (f64, f64),
}

/// Mean frequency from hysteretic up-crossings of the mean-removed signal.
fn crossing_frequency(x: &[f64], dt: f64, hysteresis: f64) -> Option<f64> {
    let mut armed = false;
    let mut times = Vec::new();
    for k in 1..x.len() {
        if x[k] < -hysteresis {
            armed = true;
        }
        if armed && x[k - 1] < 0.0 && x[k] >= 0.0 {
            let frac = -x[k - 1] / (x[k] - x[k - 1]);
            times.push((k - 1) as f64 * dt + frac * dt);
            armed = false;
        }
    }
    if times.len() < 3 {
        return None;
    }
    let span = times[times.len() - 1] - times[0];
    (span > 0.0).then(|| (times.len() - 1) as f64 / span)
}

/// Frequency of the largest non-DC bin of a Hann-windowed DFT, with parabolic
/// interpolation between bins.
pub(crate) fn dft_peak(x: &[f64], dt: f64) -> Option<f64> {
    let n = x.len();
    if n < 8 {
        return None;
    }
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            Complex64::new(v * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf[..n / 2].iter().map(|z| z.norm()).collect();
    let (k, _) = mags
        .iter()
        .enumerate()
        .skip(2)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    let shift = if k + 1 < mags.len() {
        let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
        let den = a - 2.0 * b + c;
        if den.abs() > 0.0 {
            0.5 * (a - c) / den
        } else {
            0.0
        }
    } else {
        0.0
    };
    Some((k as f64 + shift) / (n as f64 * dt))
}

fn analyse(trace: &Trace, start: usize, count: usize) -> OscillationReport {
    let s = &trace.samples[start..start + count];
    let mean = s.iter().sum::<f64>() / count as f64;
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let amplitude = hi - lo;
    let x: Vec<f64> = s.iter().map(|v| v - mean).collect();
    let f_zc = crossing_frequency(&x, trace.dt, 0.1 * 0.5 * amplitude);
    let f_dft = dft_peak(&x, trace.dt);
    let window = (
        trace.time(start),
        trace.time(start) + count as f64 * trace.dt,
    );
    let big = amplitude > AMPLITUDE_THRESHOLD * mean.abs() && amplitude > 0.0;
    match (big, f_zc, f_dft) {
        (true, Some(fz), Some(fd))
            if (fz / fd - 1.0).abs() <= FREQUENCY_AGREEMENT
                || (fd / fz - 1.0).abs() <= FREQUENCY_AGREEMENT =>
        {
            OscillationReport {
                oscillating: true,
                amplitude,
                frequency: fz,
                frequency_dft: fd,
                mean,
                window,
            }
        }
        _ => OscillationReport {
            oscillating: false,
            amplitude,
            frequency: 0.0,
            frequency_dft: f_dft.unwrap_or(0.0),
            mean,
            window,
        },
    }
}

/// Analyses the final `window` seconds of `trace`.
pub fn detect_oscillations(trace: &Trace, window: f64) -> Result<OscillationReport> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let count = (window / trace.dt).round() as usize;
    if !(window > 0.0) || count > trace.len() {
        return Err(Error::WindowTooLong {
            window,
            length: trace.duration(),
        });
    }
    Ok(analyse(trace, trace.len() - count, count.max(2)))
}

/// Consecutive non-overlapping windows of `window` seconds across the trace.
pub fn oscillation_segments(trace: &Trace, window: f64) -> Result<Vec<OscillationReport>> {
    let count = (window / trace.dt).round() as usize;
    if !(window > 0.0) || count < 2 || count > trace.len() {
        return Err(Error::WindowTooLong {
            window,
            length: trace.duration(),
        });
    }
    Ok((0..trace.len() / count)
        .map(|w| analyse(trace, w * count, count))
        .collect())
}
