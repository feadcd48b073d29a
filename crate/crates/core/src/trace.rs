use crate::error::{Error, Result};

/// Physical meaning of the samples in a [`Trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Intensity,
    NoisePowerLinear,
    NoisePowerDb,
    Radians,
}

impl Unit {
    pub fn tag(self) -> &'static str {
        match self {
            Unit::Intensity => "intensity",
            Unit::NoisePowerLinear => "noise-power-linear",
            Unit::NoisePowerDb => "noise-power-dB",
            Unit::Radians => "radians",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "intensity" => Some(Unit::Intensity),
            "noise-power-linear" => Some(Unit::NoisePowerLinear),
            "noise-power-dB" => Some(Unit::NoisePowerDb),
            "radians" => Some(Unit::Radians),
            _ => None,
        }
    }
}

/// Uniformly sampled time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub unit: Unit,
}

impl Trace {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>, unit: Unit) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param(
                "dt",
                format!("must be finite and > 0, got {dt}"),
            ));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("samples", format!("sample {k} is not finite")));
        }
        Ok(Self {
            t0,
            dt,
            samples,
            unit,
        })
    }

    /// Samples `f(t)` on `n` points starting at `t0`.
    pub fn from_fn<F: FnMut(f64) -> f64>(
        t0: f64,
        dt: f64,
        n: usize,
        unit: Unit,
        mut f: F,
    ) -> Result<Self> {
        let samples = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::new(t0, dt, samples, unit)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Covered duration, `n * dt`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return f64::NAN;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sub-trace covering `[start, start + length)`.
    pub fn window(&self, start: f64, length: f64) -> Result<Trace> {
        let end = self.t0 + self.duration();
        if start < self.t0 - 0.5 * self.dt || start + length > end + 0.5 * self.dt {
            return Err(Error::WindowTooLong {
                window: length,
                length: self.duration(),
            });
        }
        let first = ((start - self.t0) / self.dt).round().max(0.0) as usize;
        let count = ((length / self.dt).round() as usize).min(self.len() - first.min(self.len()));
        Ok(Trace {
            t0: self.time(first),
            dt: self.dt,
            samples: self.samples[first..first + count].to_vec(),
            unit: self.unit,
        })
    }

    pub fn map(&self, unit: Unit, f: impl Fn(f64) -> f64) -> Trace {
        Trace {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            unit,
        }
    }

    pub fn require(&self, unit: Unit) -> Result<()> {
        if self.unit == unit {
            Ok(())
        } else {
            Err(Error::UnitMismatch {
                expected: unit.tag(),
                found: self.unit.tag(),
            })
        }
    }
}
