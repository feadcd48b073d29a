//! Spectrum-analyzer post-detection processing: the single-pole videofilter,
//! its frequency-domain inverse, and dB/linear conversion.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::trace::{Trace, Unit};

/// Default clamp on the inverse filter gain used by [`reconstruct`].
pub const DEFAULT_GAIN_CAP: f64 = 100.0;

/// Representation in which a filter was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterDomain {
    LinearPower,
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    FirstOrderLowpass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    /// Corner frequency, Hz.
    pub f_c: f64,
    pub kind: FilterKind,
    pub domain: FilterDomain,
}

impl FilterSpec {
    pub fn lowpass(f_c: f64, domain: FilterDomain) -> Self {
        Self {
            f_c,
            kind: FilterKind::FirstOrderLowpass,
            domain,
        }
    }

    /// Checks the corner against the sample spacing `dt`.
    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.f_c.is_finite() && self.f_c > 0.0) {
            return Err(Error::param(
                "f_c",
                format!("must be finite and > 0, got {}", self.f_c),
            ));
        }
        if !(dt * self.f_c < 0.5) {
            return Err(Error::param(
                "f_c",
                format!("dt * f_c = {} must stay below 0.5", dt * self.f_c),
            ));
        }
        Ok(())
    }

    /// Applies the filter; the trace must be in the filter's domain.
    pub fn apply(&self, trace: &Trace) -> Result<Trace> {
        let expected = match self.domain {
            FilterDomain::LinearPower => Unit::NoisePowerLinear,
            FilterDomain::Db => Unit::NoisePowerDb,
        };
        trace.require(expected)?;
        first_order_lowpass(trace, self.f_c)
    }
}

/// Per-sample smoothing coefficient of the discretized RC filter.
fn smoothing(f_c: f64, dt: f64) -> f64 {
    1.0 - (-2.0 * PI * f_c * dt).exp()
}

/// Exact discrete single-pole low-pass, `y[n] = y[n-1] + a (x[n] - y[n-1])`,
/// started at `y[0] = x[0]`.
pub fn first_order_lowpass(trace: &Trace, f_c: f64) -> Result<Trace> {
    FilterSpec::lowpass(f_c, FilterDomain::LinearPower).validate(trace.dt)?;
    let a = smoothing(f_c, trace.dt);
    let mut out = Vec::with_capacity(trace.len());
    let mut y = match trace.samples.first() {
        Some(&x) => x,
        None => return Err(Error::EmptyTrace),
    };
    for &x in &trace.samples {
        y += a * (x - y);
        out.push(y);
    }
    Trace::new(trace.t0, trace.dt, out, trace.unit)
}

/// Undoes [`first_order_lowpass`] by division in the frequency domain. The
/// inverse gain is clamped to `gain_cap` to bound noise amplification.
pub fn reconstruct(trace: &Trace, f_c: f64, gain_cap: f64) -> Result<Trace> {
    if !(gain_cap > 1.0) {
        return Err(Error::param(
            "gain_cap",
            format!("must be > 1, got {gain_cap}"),
        ));
    }
    FilterSpec::lowpass(f_c, FilterDomain::LinearPower).validate(trace.dt)?;
    let n = trace.len();
    if n == 0 {
        return Err(Error::EmptyTrace);
    }
    let a = smoothing(f_c, trace.dt);
    // the line through the end samples is deconvolved exactly; only the
    // remainder, which vanishes at both ends, wraps around in the DFT
    let first = trace.samples[0];
    let slope = if n > 1 {
        (trace.samples[n - 1] - first) / (n - 1) as f64
    } else {
        0.0
    };
    let line = |k: usize| first + slope * k as f64;
    let mut buf: Vec<Complex64> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(k, &v)| Complex64::new(v - line(k), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let w = 2.0 * PI * k as f64 / n as f64;
        let response = a / (1.0 - (1.0 - a) * Complex64::from_polar(1.0, -w));
        let mut inverse = 1.0 / response;
        if inverse.norm() > gain_cap {
            inverse *= gain_cap / inverse.norm();
        }
        *z *= inverse;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let lag = (1.0 - a) / a * slope;
    let samples = buf
        .iter()
        .enumerate()
        .map(|(k, z)| z.re * scale + line(k) + if k == 0 { 0.0 } else { lag })
        .collect();
    Trace::new(trace.t0, trace.dt, samples, trace.unit)
}

/// `10^(x/10)` pointwise.
pub fn db_to_power(trace: &Trace) -> Result<Trace> {
    trace.require(Unit::NoisePowerDb)?;
    Ok(trace.map(Unit::NoisePowerLinear, |x| 10f64.powf(x / 10.0)))
}

/// `10 log10(x)` pointwise; every sample must be positive.
pub fn power_to_db(trace: &Trace) -> Result<Trace> {
    trace.require(Unit::NoisePowerLinear)?;
    if let Some((index, &value)) = trace.samples.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    Ok(trace.map(Unit::NoisePowerDb, |x| 10.0 * x.log10()))
}

/// Fourier amplitudes of the mean-removed trace at `f, 2f, ..., harmonics f`,
/// read from the nearest DFT bins.
pub fn harmonic_amplitudes(trace: &Trace, f: f64, harmonics: usize) -> Result<Vec<f64>> {
    let n = trace.len();
    if n < 4 {
        return Err(Error::EmptyTrace);
    }
    let mean = trace.mean();
    let mut buf: Vec<Complex64> = trace
        .samples
        .iter()
        .map(|&v| Complex64::new(v - mean, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * trace.dt);
    (1..=harmonics)
        .map(|h| {
            let bin = (h as f64 * f / df).round() as usize;
            if bin == 0 || bin >= n / 2 {
                Err(Error::param(
                    "f",
                    format!("harmonic {h} of {f} Hz is outside the trace band"),
                ))
            } else {
                Ok(2.0 * buf[bin].norm() / n as f64)
            }
        })
        .collect()
}

/// Outcome of [`videofilter_artifact_demo`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideofilterReport {
    /// Minimum of the dB trace after the analyzer videofilter, dB.
    pub displayed_min_db: f64,
    /// Minimum of the reconstructed, power-domain filtered trace.
    pub recovered_min_power: f64,
}

/// Sinusoidally modulated noise power with minimum `depth` and maximum
/// `1 / depth`, sampled on `n` points at spacing `dt`.
pub fn modulated_noise(depth: f64, f_mod: f64, dt: f64, n: usize) -> Result<Trace> {
    let mid = 0.5 * (depth + 1.0 / depth);
    let amp = 0.5 * (1.0 / depth - depth);
    Trace::from_fn(0.0, dt, n, Unit::NoisePowerLinear, |t| {
        mid + amp * (2.0 * PI * f_mod * t).sin()
    })
}

/// Compares the analyzer's dB-domain videofilter with the
/// reconstruct / convert / filter pipeline on a modulated noise power.
pub fn videofilter_artifact_demo(
    depth: f64,
    f_mod: f64,
    f_c_video: f64,
    f_c_numeric: f64,
) -> Result<VideofilterReport> {
    videofilter_demo_with_display(depth, f_mod, f_c_video, f_c_numeric, FilterDomain::Db)
}

/// [`videofilter_artifact_demo`] with the analyzer display law chosen by
/// `display`: the videofilter acts on the dB trace or on linear power.
pub fn videofilter_demo_with_display(
    depth: f64,
    f_mod: f64,
    f_c_video: f64,
    f_c_numeric: f64,
    display: FilterDomain,
) -> Result<VideofilterReport> {
    if !(depth > 0.0 && depth <= 1.0) {
        return Err(Error::param(
            "S_depth",
            format!("must lie in (0, 1], got {depth}"),
        ));
    }
    for (name, v) in [
        ("f_mod", f_mod),
        ("f_c_video", f_c_video),
        ("f_c_numeric", f_c_numeric),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(
                name,
                format!("must be finite and > 0, got {v}"),
            ));
        }
    }
    let fastest = f_c_video.max(f_c_numeric).max(f_mod);
    let dt = (0.01 / fastest).min(1.0 / (200.0 * f_mod));
    let slowest = f_c_video.min(f_c_numeric).min(f_mod);
    // whole number of modulation periods, at least 10 filter time constants
    let periods = (20.0f64).max((10.0 / (2.0 * PI * slowest) * f_mod).ceil() * 2.0);
    let per_period = (1.0 / (f_mod * dt)).round();
    let dt = 1.0 / (f_mod * per_period);
    let n = (periods * per_period) as usize;
    let settled = n / 2;

    let power = modulated_noise(depth, f_mod, dt, n)?;
    let tail_min = |t: &Trace| {
        t.samples[settled..]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    let (displayed_min_db, recovered) = match display {
        FilterDomain::Db => {
            let displayed =
                FilterSpec::lowpass(f_c_video, FilterDomain::Db).apply(&power_to_db(&power)?)?;
            let recovered = reconstruct(&displayed, f_c_video, DEFAULT_GAIN_CAP)?;
            (tail_min(&displayed), db_to_power(&recovered)?)
        }
        FilterDomain::LinearPower => {
            let displayed =
                FilterSpec::lowpass(f_c_video, FilterDomain::LinearPower).apply(&power)?;
            let recovered = reconstruct(&displayed, f_c_video, DEFAULT_GAIN_CAP)?;
            (10.0 * tail_min(&displayed).log10(), recovered)
        }
    };
    let smoothed = FilterSpec::lowpass(f_c_numeric, FilterDomain::LinearPower).apply(&recovered)?;
    Ok(VideofilterReport {
        displayed_min_db,
        recovered_min_power: tail_min(&smoothed),
    })
}
