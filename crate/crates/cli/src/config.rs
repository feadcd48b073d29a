//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers. `#` starts a comment. Every key has a default, so an empty file
//! is a complete configuration, and [`RunConfig::echo`] writes all of them
//! back out in a form that parses to the same configuration.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use coldcav::dsp::FilterDomain;
use coldcav::noise::DetectionChain;
use coldcav::steady::bistability_threshold;
use coldcav::{Error as CoreError, ModelParams};

/// Input intensity, absolute or relative to the pumping-off bistability
/// threshold of the configured model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSpec {
    Absolute(f64),
    ThresholdMultiple(f64),
}

impl InputSpec {
    pub fn resolve(&self, params: &ModelParams) -> Result<f64> {
        match *self {
            InputSpec::Absolute(v) => Ok(v),
            InputSpec::ThresholdMultiple(r) => {
                let th = bistability_threshold(params)?.ok_or_else(|| {
                    anyhow!(
                        "no bistability threshold at C = {}: give an absolute input",
                        params.coop
                    )
                })?;
                Ok(r * th.input_intensity)
            }
        }
    }
}

/// `start:end:points`, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| self.start + step * k as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsMode {
    /// Cavity detuning ramp across the scan range.
    Ramp,
    /// Constant drive from a perturbed steady state.
    Fixed,
    /// Fixed detuning while C decays exponentially.
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Lower,
    Upper,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Classify,
    Oscillation,
    Squeezing,
}

/// One sweep axis: a named parameter and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: AxisValues,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisValues {
    /// `start:end:step`, inclusive when the end is hit within rounding.
    Steps {
        start: f64,
        end: f64,
        step: f64,
    },
    List(Vec<f64>),
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match &self.values {
            AxisValues::List(v) => v.clone(),
            AxisValues::Steps { start, end, step } => {
                let n = ((end - start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|k| start + step * k as f64).collect()
            }
        }
    }
}

/// Parameters a sweep axis may vary.
pub const AXIS_NAMES: [&str; 11] = [
    "C",
    "delta_a",
    "loss_rt",
    "gamma_p",
    "beta",
    "t_mirror",
    "tau",
    "input",
    "input_ratio",
    "theta",
    "omega_mhz",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DriveConfig {
    pub input: InputSpec,
    /// Cavity detuning in linewidths.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub theta_range: RangeSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub mode: DynamicsMode,
    pub ramp_duration: f64,
    pub duration: f64,
    pub dt_out: f64,
    pub tol: f64,
    /// Oscillation analysis window, s.
    pub window: f64,
    /// Relative field kick applied to the starting steady state.
    pub perturbation: f64,
    pub coop_0: f64,
    pub t_decay: f64,
    /// Bin width for switch detection along `theta` (ramp mode).
    pub switch_theta_step: f64,
    /// Bin width for switch detection in time (decay mode), s.
    pub switch_time_step: f64,
    pub switch_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub omega_mhz: Vec<f64>,
    pub theta_grid: usize,
    pub branch: Branch,
    pub eta_pd: f64,
    pub eta_hom: f64,
    pub cmrr_db: f64,
}

impl NoiseConfig {
    pub fn chain(&self) -> DetectionChain {
        DetectionChain {
            eta_pd: self.eta_pd,
            eta_hom: self.eta_hom,
            cmrr_db: self.cmrr_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    pub coop_0: f64,
    pub t_decay: f64,
    pub omega_mhz: f64,
    pub lo_frequency: f64,
    pub lo_amplitude: f64,
    pub lo_offset: f64,
    pub duration: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    pub depth: f64,
    pub f_mod: f64,
    pub f_c_video: f64,
    pub f_c_numeric: f64,
    pub display: FilterDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub axes: Vec<Axis>,
    pub kernel: Kernel,
    pub max_points: usize,
    /// Worker threads; 0 picks `COLDCAV_WORKERS` or the machine's
    /// parallelism. Not echoed, since it cannot change any result.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Seed for synthetic noise; every current pipeline is deterministic.
    pub seed: u64,
    /// Adds a wall-clock `created` entry to the metadata, which makes
    /// artifacts differ between runs.
    pub timestamp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub drive: DriveConfig,
    pub scan: ScanConfig,
    pub dynamics: DynamicsConfig,
    pub noise: NoiseConfig,
    pub trace: TraceConfig,
    pub dsp: DspConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let chain = DetectionChain::default();
        Self {
            model: ModelParams::default(),
            drive: DriveConfig {
                input: InputSpec::ThresholdMultiple(1.5),
                theta: 0.0,
            },
            scan: ScanConfig {
                theta_range: RangeSpec {
                    start: -10.0,
                    end: 10.0,
                    points: 401,
                },
            },
            dynamics: DynamicsConfig {
                mode: DynamicsMode::Ramp,
                ramp_duration: 1e-3,
                duration: 1e-3,
                dt_out: 5e-8,
                tol: 1e-7,
                window: 2e-5,
                perturbation: 0.01,
                coop_0: 300.0,
                t_decay: 1e-2,
                switch_theta_step: 0.02,
                switch_time_step: 1e-5,
                switch_ratio: 1.5,
            },
            noise: NoiseConfig {
                omega_mhz: vec![5.0],
                theta_grid: 360,
                branch: Branch::All,
                eta_pd: chain.eta_pd,
                eta_hom: chain.eta_hom,
                cmrr_db: chain.cmrr_db,
            },
            trace: TraceConfig {
                coop_0: 300.0,
                t_decay: 1e-2,
                omega_mhz: 5.0,
                lo_frequency: 1e3,
                lo_amplitude: PI,
                lo_offset: 0.0,
                duration: 2e-2,
                dt: 2e-6,
            },
            dsp: DspConfig {
                depth: 0.5,
                f_mod: 1e3,
                f_c_video: 300.0,
                f_c_numeric: 1e3,
                display: FilterDomain::Db,
            },
            sweep: SweepConfig {
                axes: vec![
                    Axis {
                        name: "C".into(),
                        values: AxisValues::Steps {
                            start: 0.0,
                            end: 400.0,
                            step: 50.0,
                        },
                    },
                    Axis {
                        name: "input_ratio".into(),
                        values: AxisValues::Steps {
                            start: 0.5,
                            end: 3.0,
                            step: 0.25,
                        },
                    },
                ],
                kernel: Kernel::Classify,
                max_points: 10_000,
                workers: 0,
            },
            output: OutputConfig {
                dir: PathBuf::from("coldcav-out"),
                seed: 0,
                timestamp: false,
            },
        }
    }
}

/// A value type that can appear on the right of `key = value`.
pub trait ConfigValue: Sized {
    fn parse(text: &str) -> Result<Self, String>;
    fn show(&self) -> String;
}

fn parse_float(text: &str) -> Result<f64, String> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got `{text}`"))
}

/// Shortest form that reads back to the same bits.
fn show_float(x: f64) -> String {
    format!("{x:?}")
}

impl ConfigValue for f64 {
    fn parse(text: &str) -> Result<Self, String> {
        parse_float(text)
    }
    fn show(&self) -> String {
        show_float(*self)
    }
}

impl ConfigValue for usize {
    fn parse(text: &str) -> Result<Self, String> {
        text.parse()
            .map_err(|_| format!("expected a non-negative integer, got `{text}`"))
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(text: &str) -> Result<Self, String> {
        text.parse()
            .map_err(|_| format!("expected a non-negative integer, got `{text}`"))
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse(text: &str) -> Result<Self, String> {
        match text {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("expected true or false, got `{text}`")),
        }
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for PathBuf {
    fn parse(text: &str) -> Result<Self, String> {
        if text.is_empty() {
            Err("expected a path".into())
        } else {
            Ok(PathBuf::from(text))
        }
    }
    fn show(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Vec<f64> {
    fn parse(text: &str) -> Result<Self, String> {
        text.split(',').map(parse_float).collect()
    }
    fn show(&self) -> String {
        self.iter()
            .map(|x| show_float(*x))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl ConfigValue for InputSpec {
    fn parse(text: &str) -> Result<Self, String> {
        let relative = text
            .strip_suffix("x-threshold")
            .or_else(|| text.strip_suffix('x'));
        match relative {
            Some(r) => parse_float(r).map(InputSpec::ThresholdMultiple),
            None => parse_float(text)
                .map(InputSpec::Absolute)
                .map_err(|_| format!("expected a number or `<ratio>x-threshold`, got `{text}`")),
        }
    }
    fn show(&self) -> String {
        match self {
            InputSpec::Absolute(v) => show_float(*v),
            InputSpec::ThresholdMultiple(r) => format!("{}x-threshold", show_float(*r)),
        }
    }
}

impl ConfigValue for RangeSpec {
    fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, end, points] = parts[..] else {
            return Err(format!("expected start:end:points, got `{text}`"));
        };
        Ok(RangeSpec {
            start: parse_float(start)?,
            end: parse_float(end)?,
            points: usize::parse(points.trim())?,
        })
    }
    fn show(&self) -> String {
        format!(
            "{}:{}:{}",
            show_float(self.start),
            show_float(self.end),
            self.points
        )
    }
}

macro_rules! keyword_value {
    ($ty:ty { $($word:literal => $variant:expr),+ $(,)? }) => {
        impl ConfigValue for $ty {
            fn parse(text: &str) -> Result<Self, String> {
                match text {
                    $($word => Ok($variant),)+
                    _ => Err(format!("expected one of {}, got `{text}`", [$($word),+].join(", "))),
                }
            }
            fn show(&self) -> String {
                $(if *self == $variant { return $word.to_string(); })+
                unreachable!()
            }
        }
    };
}

keyword_value!(DynamicsMode { "ramp" => DynamicsMode::Ramp, "fixed" => DynamicsMode::Fixed, "decay" => DynamicsMode::Decay });
keyword_value!(Branch { "lower" => Branch::Lower, "upper" => Branch::Upper, "all" => Branch::All });
keyword_value!(Kernel { "classify" => Kernel::Classify, "oscillation" => Kernel::Oscillation, "squeezing" => Kernel::Squeezing });
keyword_value!(FilterDomain { "db" => FilterDomain::Db, "linear" => FilterDomain::LinearPower });

impl ConfigValue for Vec<Axis> {
    fn parse(text: &str) -> Result<Self, String> {
        let mut axes = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, spec) = part.split_once('=').ok_or_else(|| {
                format!("axis `{part}` must read name=start:end:step or name=v1,v2,...")
            })?;
            let name = name.trim().to_string();
            let spec = spec.trim();
            let values = if spec.contains(':') {
                let parts: Vec<&str> = spec.split(':').collect();
                let [start, end, step] = parts[..] else {
                    return Err(format!(
                        "axis `{name}`: expected start:end:step, got `{spec}`"
                    ));
                };
                AxisValues::Steps {
                    start: parse_float(start)?,
                    end: parse_float(end)?,
                    step: parse_float(step)?,
                }
            } else {
                AxisValues::List(Vec::<f64>::parse(spec)?)
            };
            axes.push(Axis { name, values });
        }
        Ok(axes)
    }
    fn show(&self) -> String {
        self.iter()
            .map(|a| {
                let spec = match &a.values {
                    AxisValues::Steps { start, end, step } => {
                        format!(
                            "{}:{}:{}",
                            show_float(*start),
                            show_float(*end),
                            show_float(*step)
                        )
                    }
                    AxisValues::List(v) => v.show(),
                };
                format!("{}={spec}", a.name)
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// A settable key: where it lives, and how to read and write it.
struct Field {
    section: &'static str,
    key: &'static str,
    get: fn(&RunConfig) -> String,
    set: fn(&mut RunConfig, &str) -> Result<(), String>,
    echo: bool,
}

macro_rules! fields {
    ($($section:literal $key:literal => $($path:ident).+ $(, $noecho:ident)?;)+) => {
        &[$(Field {
            section: $section,
            key: $key,
            get: |c| ConfigValue::show(&c.$($path).+),
            set: |c, v| {
                c.$($path).+ = ConfigValue::parse(v)?;
                Ok(())
            },
            echo: fields!(@echo $($noecho)?),
        }),+]
    };
    (@echo) => { true };
    (@echo noecho) => { false };
}

static FIELDS: &[Field] = fields! {
    "model" "tau" => model.tau;
    "model" "t_mirror" => model.t_mirror;
    "model" "gamma_cav" => model.gamma_cav;
    "model" "loss_rt" => model.loss_rt;
    "model" "C" => model.coop;
    "model" "delta_a" => model.delta_a;
    "model" "gamma_atom" => model.gamma_atom;
    "model" "gamma_p" => model.gamma_p;
    "model" "beta" => model.beta;
    "model" "absorption" => model.absorption_on;
    "model" "pumping" => model.pumping_on;
    "drive" "input" => drive.input;
    "drive" "theta" => drive.theta;
    "scan" "theta_range" => scan.theta_range;
    "dynamics" "mode" => dynamics.mode;
    "dynamics" "ramp_duration" => dynamics.ramp_duration;
    "dynamics" "duration" => dynamics.duration;
    "dynamics" "dt_out" => dynamics.dt_out;
    "dynamics" "tol" => dynamics.tol;
    "dynamics" "window" => dynamics.window;
    "dynamics" "perturbation" => dynamics.perturbation;
    "dynamics" "coop_0" => dynamics.coop_0;
    "dynamics" "t_decay" => dynamics.t_decay;
    "dynamics" "switch_theta_step" => dynamics.switch_theta_step;
    "dynamics" "switch_time_step" => dynamics.switch_time_step;
    "dynamics" "switch_ratio" => dynamics.switch_ratio;
    "noise" "omega_mhz" => noise.omega_mhz;
    "noise" "theta_grid" => noise.theta_grid;
    "noise" "branch" => noise.branch;
    "noise" "eta_pd" => noise.eta_pd;
    "noise" "eta_hom" => noise.eta_hom;
    "noise" "cmrr_db" => noise.cmrr_db;
    "trace" "coop_0" => trace.coop_0;
    "trace" "t_decay" => trace.t_decay;
    "trace" "omega_mhz" => trace.omega_mhz;
    "trace" "lo_frequency" => trace.lo_frequency;
    "trace" "lo_amplitude" => trace.lo_amplitude;
    "trace" "lo_offset" => trace.lo_offset;
    "trace" "duration" => trace.duration;
    "trace" "dt" => trace.dt;
    "dsp" "depth" => dsp.depth;
    "dsp" "f_mod" => dsp.f_mod;
    "dsp" "f_c_video" => dsp.f_c_video;
    "dsp" "f_c_numeric" => dsp.f_c_numeric;
    "dsp" "display" => dsp.display;
    "sweep" "axes" => sweep.axes;
    "sweep" "kernel" => sweep.kernel;
    "sweep" "max_points" => sweep.max_points;
    "sweep" "workers" => sweep.workers, noecho;
    "output" "dir" => output.dir;
    "output" "seed" => output.seed;
    "output" "timestamp" => output.timestamp;
};

/// Where a key's value came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
enum Origin {
    Line(usize),
    Flag(String),
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag(flag) => write!(f, "{flag}"),
        }
    }
}

/// A command-line value for `section.key`, applied after the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    /// `section.key`.
    pub key: String,
    pub value: String,
    /// How the value was given, e.g. `--I-in`.
    pub source: String,
}

impl Override {
    pub fn new(key: &str, value: impl Into<String>, source: &str) -> Self {
        Self {
            key: key.to_string(),
            value: value.into(),
            source: source.to_string(),
        }
    }

    /// Parses `section.key=value` as given to `--set`.
    pub fn from_assignment(text: &str) -> Result<Self> {
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects section.key=value, got `{text}`"))?;
        Ok(Self::new(key.trim(), value.trim(), "--set"))
    }
}

fn find_field(section: &str, key: &str) -> Option<&'static Field> {
    FIELDS.iter().find(|f| f.section == section && f.key == key)
}

/// Parses a configuration file with no overrides.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

/// Parses `text`, applies `overrides` in order, then resolves and validates
/// the result.
pub fn parse_config_with(text: &str, overrides: &[Override]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut origins: HashMap<String, Origin> = HashMap::new();
    let mut section: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {line_no}: malformed section header `{line}`"))?
                .trim();
            if !FIELDS.iter().any(|f| f.section == name) {
                bail!("line {line_no}: unknown section [{name}]");
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`, got `{line}`"))?;
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section.as_deref() else {
            bail!("line {line_no}: key `{key}` appears before any [section]");
        };
        let field = find_field(sec, key)
            .ok_or_else(|| anyhow!("line {line_no}: unknown key `{key}` in [{sec}]"))?;
        let path = format!("{sec}.{key}");
        if let Some(previous) = origins.get(&path) {
            bail!("line {line_no}: key `{key}` in [{sec}] already set on {previous}");
        }
        (field.set)(&mut cfg, value)
            .map_err(|e| anyhow!("line {line_no}: key `{key}` in [{sec}]: {e}"))?;
        origins.insert(path, Origin::Line(line_no));
    }
    for o in overrides {
        let (sec, key) = o
            .key
            .split_once('.')
            .ok_or_else(|| anyhow!("{}: expected section.key, got `{}`", o.source, o.key))?;
        let field = find_field(sec, key)
            .ok_or_else(|| anyhow!("{}: unknown key `{key}` in [{sec}]", o.source))?;
        (field.set)(&mut cfg, &o.value)
            .map_err(|e| anyhow!("{}: key `{key}` in [{sec}]: {e}", o.source))?;
        origins.insert(o.key.clone(), Origin::Flag(o.source.clone()));
    }
    let origin_of = |path: &str| {
        origins
            .get(path)
            .map_or_else(|| "default".to_string(), |o| o.to_string())
    };
    let fail = |path: &str, msg: String| -> anyhow::Error {
        let key = path.split_once('.').map_or(path, |(_, k)| k);
        anyhow!("{}: key `{key}`: {msg}", origin_of(path))
    };

    // the mirror decay is tied to the transmission
    let m = &mut cfg.model;
    match (
        origins.contains_key("model.t_mirror"),
        origins.contains_key("model.gamma_cav"),
    ) {
        (_, false) => m.gamma_cav = m.t_mirror * m.t_mirror / 2.0,
        (false, true) => m.t_mirror = (2.0 * m.gamma_cav).sqrt(),
        (true, true) => {
            let expected = m.t_mirror * m.t_mirror / 2.0;
            if !((m.gamma_cav - expected).abs() <= 1e-9 * expected) {
                return Err(fail(
                    "model.gamma_cav",
                    format!(
                        "{} violates gamma_cav = t_mirror^2/2 = {expected} (t_mirror = {})",
                        m.gamma_cav, m.t_mirror
                    ),
                ));
            }
            m.gamma_cav = expected;
        }
    }
    cfg.validate_with(&|path, msg| fail(path, msg))?;
    Ok(cfg)
}

/// Config key for a parameter name reported by the core crate.
fn model_key(name: &str) -> &str {
    match name {
        "Gamma" => "gamma_atom",
        other => other,
    }
}

impl RunConfig {
    /// Checks every section against the invariants of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(&|path, msg| anyhow!("key `{path}`: {msg}"))
    }

    fn validate_with(&self, fail: &dyn Fn(&str, String) -> anyhow::Error) -> Result<()> {
        if let Err(e) = self.model.validate() {
            return Err(match e {
                CoreError::InvalidParam { name, reason } => {
                    fail(&format!("model.{}", model_key(name)), reason)
                }
                other => fail("model", other.to_string()),
            });
        }
        let positive = |path: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(fail(path, format!("must be finite and > 0, got {v}")))
            }
        };
        let finite = |path: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(fail(path, format!("must be finite, got {v}")))
            }
        };

        match self.drive.input {
            InputSpec::Absolute(v) if !(v.is_finite() && v >= 0.0) => {
                return Err(fail(
                    "drive.input",
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
            InputSpec::ThresholdMultiple(r) => positive("drive.input", r)?,
            _ => {}
        }
        finite("drive.theta", self.drive.theta)?;

        let r = self.scan.theta_range;
        finite("scan.theta_range", r.start)?;
        finite("scan.theta_range", r.end)?;
        if r.points == 0
            || (r.points == 1 && r.start != r.end)
            || (r.points > 1 && r.start == r.end)
        {
            return Err(fail(
                "scan.theta_range",
                "needs points >= 2 with start != end, or one point with start == end".into(),
            ));
        }

        let d = &self.dynamics;
        for (path, v) in [
            ("dynamics.ramp_duration", d.ramp_duration),
            ("dynamics.duration", d.duration),
            ("dynamics.dt_out", d.dt_out),
            ("dynamics.window", d.window),
            ("dynamics.t_decay", d.t_decay),
            ("dynamics.switch_theta_step", d.switch_theta_step),
            ("dynamics.switch_time_step", d.switch_time_step),
        ] {
            positive(path, v)?;
        }
        if !(1e-12..=1e-3).contains(&d.tol) {
            return Err(fail(
                "dynamics.tol",
                format!("must lie in [1e-12, 1e-3], got {}", d.tol),
            ));
        }
        if !(d.perturbation.is_finite() && d.perturbation >= 0.0) {
            return Err(fail(
                "dynamics.perturbation",
                format!("must be finite and >= 0, got {}", d.perturbation),
            ));
        }
        if !(d.coop_0.is_finite() && d.coop_0 >= 0.0) {
            return Err(fail(
                "dynamics.coop_0",
                format!("must be finite and >= 0, got {}", d.coop_0),
            ));
        }
        if !(d.switch_ratio > 1.0 && d.switch_ratio.is_finite()) {
            return Err(fail(
                "dynamics.switch_ratio",
                format!("must be finite and > 1, got {}", d.switch_ratio),
            ));
        }

        let n = &self.noise;
        if n.omega_mhz.is_empty() {
            return Err(fail(
                "noise.omega_mhz",
                "needs at least one frequency".into(),
            ));
        }
        for &w in &n.omega_mhz {
            positive("noise.omega_mhz", w)?;
        }
        if n.theta_grid < 2 {
            return Err(fail(
                "noise.theta_grid",
                format!("needs at least 2 points, got {}", n.theta_grid),
            ));
        }
        if let Err(e) = n.chain().validate() {
            let path = match &e {
                CoreError::InvalidParam { name, .. } if name.contains("hom") => "noise.eta_hom",
                CoreError::InvalidParam { name, .. } if name.contains("cmrr") => "noise.cmrr_db",
                _ => "noise.eta_pd",
            };
            return Err(fail(path, e.to_string()));
        }

        let t = &self.trace;
        for (path, v) in [
            ("trace.t_decay", t.t_decay),
            ("trace.omega_mhz", t.omega_mhz),
            ("trace.lo_frequency", t.lo_frequency),
            ("trace.duration", t.duration),
            ("trace.dt", t.dt),
        ] {
            positive(path, v)?;
        }
        finite("trace.lo_amplitude", t.lo_amplitude)?;
        finite("trace.lo_offset", t.lo_offset)?;
        if !(t.coop_0.is_finite() && t.coop_0 >= 0.0) {
            return Err(fail(
                "trace.coop_0",
                format!("must be finite and >= 0, got {}", t.coop_0),
            ));
        }
        if t.dt >= t.duration {
            return Err(fail(
                "trace.dt",
                format!("must be below the duration {}", t.duration),
            ));
        }

        let s = &self.dsp;
        if !(s.depth > 0.0 && s.depth <= 1.0) {
            return Err(fail(
                "dsp.depth",
                format!("must lie in (0, 1], got {}", s.depth),
            ));
        }
        for (path, v) in [
            ("dsp.f_mod", s.f_mod),
            ("dsp.f_c_video", s.f_c_video),
            ("dsp.f_c_numeric", s.f_c_numeric),
        ] {
            positive(path, v)?;
        }

        let w = &self.sweep;
        if w.axes.is_empty() || w.axes.len() > 3 {
            return Err(fail(
                "sweep.axes",
                format!("needs 1 to 3 axes, got {}", w.axes.len()),
            ));
        }
        let mut points = 1usize;
        for (k, axis) in w.axes.iter().enumerate() {
            if !AXIS_NAMES.contains(&axis.name.as_str()) {
                return Err(fail(
                    "sweep.axes",
                    format!(
                        "unknown axis `{}`; expected one of {}",
                        axis.name,
                        AXIS_NAMES.join(", ")
                    ),
                ));
            }
            if w.axes[..k].iter().any(|a| a.name == axis.name) {
                return Err(fail(
                    "sweep.axes",
                    format!("axis `{}` given twice", axis.name),
                ));
            }
            if let AxisValues::Steps { start, end, step } = axis.values {
                if !(start.is_finite()
                    && end.is_finite()
                    && step.is_finite()
                    && step > 0.0
                    && end >= start)
                {
                    return Err(fail(
                        "sweep.axes",
                        format!(
                            "axis `{}` needs finite start <= end and step > 0",
                            axis.name
                        ),
                    ));
                }
                if (end - start) / step > 1e7 {
                    return Err(fail(
                        "sweep.axes",
                        format!("axis `{}` has too many points", axis.name),
                    ));
                }
            }
            let values = axis.values();
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(fail(
                    "sweep.axes",
                    format!("axis `{}` needs finite values", axis.name),
                ));
            }
            points = points.saturating_mul(values.len());
        }
        if w.axes.iter().any(|a| a.name == "input")
            && w.axes.iter().any(|a| a.name == "input_ratio")
        {
            return Err(fail(
                "sweep.axes",
                "`input` and `input_ratio` cannot both be axes".into(),
            ));
        }
        if w.max_points == 0 {
            return Err(fail("sweep.max_points", "must be >= 1".into()));
        }
        if points > w.max_points {
            return Err(fail(
                "sweep.axes",
                format!(
                    "grid has {points} points, above max_points = {}",
                    w.max_points
                ),
            ));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a form [`parse_config`] reads
    /// back to this configuration.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for f in FIELDS.iter().filter(|f| f.echo) {
            if f.section != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = f.section;
                let _ = writeln!(out, "[{section}]");
            }
            let _ = writeln!(out, "{} = {}", f.key, (f.get)(self));
        }
        out
    }

    /// Worker count: the configured value, else `COLDCAV_WORKERS`, else the
    /// available parallelism.
    pub fn workers(&self) -> Result<usize> {
        if self.sweep.workers > 0 {
            return Ok(self.sweep.workers);
        }
        if let Ok(text) = std::env::var("COLDCAV_WORKERS") {
            let n: usize = text
                .trim()
                .parse()
                .map_err(|_| anyhow!("COLDCAV_WORKERS must be a positive integer, got `{text}`"))?;
            if n == 0 {
                bail!("COLDCAV_WORKERS must be a positive integer, got 0");
            }
            return Ok(n);
        }
        Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}
