//! Subcommand runners. Each returns the tables it produced; writing them
//! out, with the shared metadata, is left to [`write_artifacts`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Result};
use coldcav::dsp::videofilter_demo_with_display;
use coldcav::dynamics::{
    detect_oscillations, integrate, lowest_stable, oscillation_segments, scan_atom_decay,
    scan_cavity_dynamic, CavityRamp, DynamicScan, Switch,
};
use coldcav::noise::{
    apply_detection, linearize, synthesize_homodyne_trace, HomodyneScan, LoScan, SampleKind,
};
use coldcav::steady::{scan_detuning, solve_steady, SteadyState, ThetaRange};
use coldcav::{CavityState, DriveSpec, Stability, Trace};

use crate::config::{Branch, ConfigValue, DynamicsMode, InputSpec, RunConfig};
use crate::sweep::sweep;
use crate::table::{format_float, write_atomic, write_table, ResultTable, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Steady,
    Scan,
    Dynamics,
    Noise,
    Trace,
    DspDemo,
    Sweep,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Steady => "steady",
            CommandKind::Scan => "scan",
            CommandKind::Dynamics => "dynamics",
            CommandKind::Noise => "noise",
            CommandKind::Trace => "trace",
            CommandKind::DspDemo => "dsp-demo",
            CommandKind::Sweep => "sweep",
        }
    }
}

/// A table and the file name it is written under.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub table: ResultTable,
}

impl Artifact {
    fn new(file: &str, table: ResultTable) -> Self {
        Self {
            file: file.to_string(),
            table,
        }
    }
}

/// Runs one subcommand without touching the file system.
pub fn execute(kind: CommandKind, cfg: &RunConfig, workers: usize) -> Result<Vec<Artifact>> {
    match kind {
        CommandKind::Steady => steady(cfg),
        CommandKind::Scan => scan(cfg),
        CommandKind::Dynamics => dynamics(cfg),
        CommandKind::Noise => noise(cfg),
        CommandKind::Trace => trace(cfg),
        CommandKind::DspDemo => dsp_demo(cfg),
        CommandKind::Sweep => Ok(vec![Artifact::new("sweep.csv", sweep(cfg, workers)?)]),
    }
}

/// Writes every artifact into the output directory with the shared
/// metadata, plus `<command>.cfg` holding the configuration echo.
pub fn write_artifacts(
    kind: CommandKind,
    cfg: &RunConfig,
    artifacts: &[Artifact],
) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output.dir;
    let echo = cfg.echo();
    let mut written = Vec::new();
    for a in artifacts {
        let mut table = a.table.clone();
        let mut meta = vec![
            ("coldcav".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("command".to_string(), kind.name().to_string()),
        ];
        if cfg.output.timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            meta.push(("created_unix".to_string(), secs.to_string()));
        }
        meta.append(&mut table.metadata);
        meta.extend(
            echo.lines()
                .filter(|l| !l.is_empty())
                .map(|l| ("config".to_string(), l.to_string())),
        );
        table.metadata = meta;
        let path = dir.join(&a.file);
        write_table(&table, &path)?;
        written.push(path);
    }
    let path = dir.join(format!("{}.cfg", kind.name()));
    write_atomic(&path, &echo)?;
    written.push(path);
    Ok(written)
}

/// Runs a subcommand and writes its artifacts.
pub fn run_command(kind: CommandKind, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let workers = cfg.workers()?;
    let artifacts = execute(kind, cfg, workers)?;
    write_artifacts(kind, cfg, &artifacts)
}

/// Input intensity, with the threshold it was derived from recorded.
fn resolve_input(cfg: &RunConfig, table: &mut ResultTable) -> Result<f64> {
    let input = cfg.drive.input.resolve(&cfg.model)?;
    if let InputSpec::ThresholdMultiple(r) = cfg.drive.input {
        table.meta("threshold_intensity", format_float(input / r));
    }
    table.meta("input_intensity", format_float(input));
    Ok(input)
}

fn join_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(format_float)
        .collect::<Vec<_>>()
        .join(" ")
}

fn switch_list(switches: &[Switch]) -> String {
    switches
        .iter()
        .map(|s| format!("{}@{}", format_float(s.position), format_float(s.ratio)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn hopf_hz(s: &SteadyState) -> f64 {
    match (s.stability, s.hopf_pair()) {
        (Stability::Oscillatory, Some(z)) => z.im.abs() / (2.0 * PI),
        _ => f64::NAN,
    }
}

fn steady(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let mut table = ResultTable::new(&[
        "theta",
        "root",
        "roots",
        "intensity",
        "alpha_re",
        "alpha_im",
        "orientation",
        "phi_cav",
        "growth_rate",
        "hopf_hz",
        "stability",
    ]);
    let input = resolve_input(cfg, &mut table)?;
    let p = &cfg.model;
    for theta in cfg.scan.theta_range.values() {
        let states = solve_steady(input, theta * p.gamma_cav, p)?;
        for (k, s) in states.iter().enumerate() {
            table.push(vec![
                theta.into(),
                k.into(),
                states.len().into(),
                s.intensity.into(),
                s.alpha.re.into(),
                s.alpha.im.into(),
                s.p.into(),
                s.phi_cav.into(),
                s.growth_rate().into(),
                hopf_hz(s).into(),
                s.stability.label().into(),
            ])?;
        }
    }
    Ok(vec![Artifact::new("steady.csv", table)])
}

fn scan(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let mut table = ResultTable::new(&[
        "theta",
        "roots",
        "up_intensity",
        "up_stability",
        "up_switched",
        "down_intensity",
        "down_stability",
        "down_switched",
    ]);
    let input = resolve_input(cfg, &mut table)?;
    let r = cfg.scan.theta_range;
    let (lo, hi) = (r.start.min(r.end), r.start.max(r.end));
    let trace = scan_detuning(input, &ThetaRange::new(lo, hi, r.points)?, &cfg.model)?;
    for k in 0..trace.theta.len() {
        let (u, d) = (&trace.up[k], &trace.down[k]);
        table.push(vec![
            trace.theta[k].into(),
            trace.states[k].len().into(),
            u.state.intensity.into(),
            u.state.stability.label().into(),
            u.switched.into(),
            d.state.intensity.into(),
            d.state.stability.label().into(),
            d.switched.into(),
        ])?;
    }
    table.meta("up_switches", join_floats(trace.up_switches()));
    table.meta("down_switches", join_floats(trace.down_switches()));
    table.meta("unstable_points", trace.unstable_points().to_string());
    Ok(vec![Artifact::new("scan.csv", table)])
}

fn segments_table(trace: &Trace, theta: Option<&[f64]>, window: f64) -> Result<ResultTable> {
    let mut table = ResultTable::new(&[
        "start",
        "end",
        "theta_mid",
        "oscillating",
        "frequency_hz",
        "frequency_dft_hz",
        "amplitude",
        "mean",
    ]);
    for r in oscillation_segments(trace, window)? {
        let mid = 0.5 * (r.window.0 + r.window.1);
        let theta_mid = theta.map_or(f64::NAN, |th| {
            let k = (((mid - trace.t0) / trace.dt).round() as usize).min(th.len() - 1);
            th[k]
        });
        table.push(vec![
            r.window.0.into(),
            r.window.1.into(),
            theta_mid.into(),
            r.oscillating.into(),
            r.frequency.into(),
            r.frequency_dft.into(),
            r.amplitude.into(),
            r.mean.into(),
        ])?;
    }
    Ok(table)
}

fn dynamics(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let d = &cfg.dynamics;
    let p = &cfg.model;
    match d.mode {
        DynamicsMode::Ramp => {
            let mut table = ResultTable::new(&["t", "theta", "transmitted", "orientation"]);
            let input = resolve_input(cfg, &mut table)?;
            let r = cfg.scan.theta_range;
            let ramp = CavityRamp {
                theta_start: r.start,
                theta_end: r.end,
                duration: d.ramp_duration,
            };
            let scan = scan_cavity_dynamic(input, &ramp, p, d.dt_out, d.tol)?;
            fill_scan(&mut table, &scan, |k| scan.theta[k])?;
            table.meta(
                "switches",
                switch_list(&scan.switches(d.switch_theta_step, d.switch_ratio)?),
            );
            let segments = segments_table(&scan.transmitted, Some(&scan.theta), d.window)?;
            Ok(vec![
                Artifact::new("dynamics.csv", table),
                Artifact::new("oscillations.csv", segments),
            ])
        }
        DynamicsMode::Decay => {
            let mut table = ResultTable::new(&["t", "C", "transmitted", "orientation"]);
            let input = resolve_input(cfg, &mut table)?;
            let scan = scan_atom_decay(
                input,
                cfg.drive.theta,
                d.coop_0,
                d.t_decay,
                d.duration,
                p,
                d.dt_out,
                d.tol,
            )?;
            fill_scan(&mut table, &scan, |k| {
                d.coop_0 * (-scan.transmitted.time(k) / d.t_decay).exp()
            })?;
            table.meta(
                "switches",
                switch_list(&scan.switches_in_time(d.switch_time_step, d.switch_ratio)?),
            );
            let segments = segments_table(&scan.transmitted, None, d.window)?;
            Ok(vec![
                Artifact::new("dynamics.csv", table),
                Artifact::new("oscillations.csv", segments),
            ])
        }
        DynamicsMode::Fixed => {
            let mut table = ResultTable::new(&["t", "theta", "transmitted", "orientation"]);
            let input = resolve_input(cfg, &mut table)?;
            let phi_0 = cfg.drive.theta * p.gamma_cav;
            let start = lowest_stable(&solve_steady(input, phi_0, p)?);
            let kicked = CavityState::new(start.alpha * (1.0 + d.perturbation), start.p);
            let traj = integrate(
                kicked,
                &DriveSpec::constant(input, phi_0),
                p,
                d.duration,
                d.dt_out,
                d.tol,
            )?;
            for (k, s) in traj.states.iter().enumerate() {
                table.push(vec![
                    (traj.t0 + k as f64 * traj.dt).into(),
                    cfg.drive.theta.into(),
                    s.intensity().into(),
                    s.p.into(),
                ])?;
            }
            let intensity = traj.intensity();
            let report = detect_oscillations(&intensity, d.window)?;
            table.meta("start_stability", start.stability.label());
            table.meta("oscillating", report.oscillating.to_string());
            table.meta("frequency_hz", format_float(report.frequency));
            table.meta("amplitude", format_float(report.amplitude));
            let segments = segments_table(&intensity, None, d.window)?;
            Ok(vec![
                Artifact::new("dynamics.csv", table),
                Artifact::new("oscillations.csv", segments),
            ])
        }
    }
}

fn fill_scan(
    table: &mut ResultTable,
    scan: &DynamicScan,
    coord: impl Fn(usize) -> f64,
) -> Result<()> {
    for k in 0..scan.transmitted.len() {
        table.push(vec![
            scan.transmitted.time(k).into(),
            coord(k).into(),
            scan.transmitted.samples[k].into(),
            scan.orientation[k].into(),
        ])?;
    }
    Ok(())
}

fn noise(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let n = &cfg.noise;
    let p = &cfg.model;
    let mut table = ResultTable::new(&[
        "kind",
        "omega_mhz",
        "root",
        "intensity",
        "lo_phase",
        "s",
        "s_detected",
    ]);
    let input = resolve_input(cfg, &mut table)?;
    let states = solve_steady(input, cfg.drive.theta * p.gamma_cav, p)?;
    let stable: Vec<(usize, &SteadyState)> = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.stability == Stability::Stable)
        .collect();
    let chosen: Vec<(usize, &SteadyState)> = match n.branch {
        Branch::All => stable,
        Branch::Lower => stable.into_iter().take(1).collect(),
        Branch::Upper => stable.into_iter().last().into_iter().collect(),
    };
    if chosen.is_empty() {
        bail!(
            "no stable steady state at theta = {}; noise spectra need one",
            cfg.drive.theta
        );
    }
    let chain = n.chain();
    let mut warnings = Vec::new();
    for &omega_mhz in &n.omega_mhz {
        for &(root, ss) in &chosen {
            let spec = linearize(ss, p)?.spectrum(2.0 * PI * omega_mhz * 1e6)?;
            if spec.frozen_p_warning {
                warnings.push(format!("{}@{root}", format_float(omega_mhz)));
            }
            let row = |kind: &str, phase: f64, s: f64| -> Result<Vec<Value>> {
                Ok(vec![
                    kind.into(),
                    omega_mhz.into(),
                    root.into(),
                    ss.intensity.into(),
                    phase.into(),
                    s.into(),
                    apply_detection(s, &chain)?.into(),
                ])
            };
            for k in 0..n.theta_grid {
                let phase = PI * k as f64 / n.theta_grid as f64;
                table.push(row("spectrum", phase, spec.at(phase))?)?;
            }
            table.push(row("min", spec.theta_min, spec.s_min)?)?;
            table.push(row("max", (spec.theta_min + 0.5 * PI) % PI, spec.s_max)?)?;
        }
    }
    table.meta(
        "frozen_orientation_warnings",
        if warnings.is_empty() {
            "none".to_string()
        } else {
            warnings.join(" ")
        },
    );
    Ok(vec![Artifact::new("noise.csv", table)])
}

fn trace(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let t = &cfg.trace;
    let mut table = ResultTable::new(&["t", "C", "measured", "s_min", "s_max", "kind"]);
    let input = resolve_input(cfg, &mut table)?;
    let scan = HomodyneScan {
        coop_0: t.coop_0,
        t_decay: t.t_decay,
        theta: cfg.drive.theta,
        input_intensity: input,
        omega: 2.0 * PI * t.omega_mhz * 1e6,
        lo: LoScan {
            frequency: t.lo_frequency,
            amplitude: t.lo_amplitude,
            offset: t.lo_offset,
        },
        duration: t.duration,
        dt: t.dt,
    };
    let trace = synthesize_homodyne_trace(&scan, &cfg.noise.chain(), &cfg.model)?;
    for k in 0..trace.len() {
        table.push(vec![
            trace.time(k).into(),
            trace.coop[k].into(),
            trace.measured[k].into(),
            trace.s_min[k].into(),
            trace.s_max[k].into(),
            trace.kind[k].label().into(),
        ])?;
    }
    for kind in [
        SampleKind::OffResonance,
        SampleKind::LowerBranch,
        SampleKind::UpperBranch,
        SampleKind::Unstable,
    ] {
        let count = trace.kind.iter().filter(|&&k| k == kind).count();
        table.meta(&format!("samples_{}", kind.label()), count.to_string());
    }
    Ok(vec![Artifact::new("homodyne.csv", table)])
}

fn dsp_demo(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let s = &cfg.dsp;
    let report =
        videofilter_demo_with_display(s.depth, s.f_mod, s.f_c_video, s.f_c_numeric, s.display)?;
    let mut table = ResultTable::new(&[
        "depth",
        "f_mod",
        "f_c_video",
        "f_c_numeric",
        "display",
        "displayed_min_db",
        "recovered_min_power",
    ]);
    table.push(vec![
        s.depth.into(),
        s.f_mod.into(),
        s.f_c_video.into(),
        s.f_c_numeric.into(),
        s.display.show().into(),
        report.displayed_min_db.into(),
        report.recovered_min_power.into(),
    ])?;
    Ok(vec![Artifact::new("dsp.csv", table)])
}

/// Reads a configuration file, naming it in any error.
pub fn read_config_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))
}
