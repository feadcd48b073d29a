//! Parameter sweeps on a worker pool.
//!
//! Every grid point is evaluated independently by a pure kernel, and the
//! results are collected in grid order, so the table does not depend on the
//! number of workers or on scheduling.

use std::f64::consts::PI;

use anyhow::{anyhow, bail, Result};
use coldcav::dynamics::{detect_oscillations, integrate, lowest_stable};
use coldcav::noise::linearize;
use coldcav::steady::{solve_steady, stability_map, StabilityMap};
use coldcav::{CavityState, DriveSpec, ModelParams, Stability};
use rayon::prelude::*;

use crate::config::{Axis, InputSpec, Kernel, RunConfig};
use crate::table::{ResultTable, Value};

/// Phase-diagram class of a drive: does it admit a stable-state-free
/// detuning, two stable states, or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseClass {
    Monostable,
    Bistable,
    Oscillatory,
}

impl PhaseClass {
    pub fn label(self) -> &'static str {
        match self {
            PhaseClass::Monostable => "monostable",
            PhaseClass::Bistable => "bistable",
            PhaseClass::Oscillatory => "oscillatory",
        }
    }

    /// Oscillatory when some detuning has no stable steady state, else
    /// bistable when some detuning has two.
    pub fn of(map: &StabilityMap) -> Self {
        if !map.unstable.is_empty() {
            PhaseClass::Oscillatory
        } else if !map.bistable.is_empty() {
            PhaseClass::Bistable
        } else {
            PhaseClass::Monostable
        }
    }
}

/// Grid coordinates in row-major order, the last axis varying fastest.
pub fn grid(axes: &[Axis]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let values = axis.values();
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Model, drive and analysis frequency at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSetup {
    pub params: ModelParams,
    pub input: InputSpec,
    pub theta: f64,
    /// Analysis frequency for the squeezing kernel, MHz.
    pub omega_mhz: f64,
}

pub fn point_setup(cfg: &RunConfig, axes: &[Axis], coords: &[f64]) -> PointSetup {
    let mut s = PointSetup {
        params: cfg.model,
        input: cfg.drive.input,
        theta: cfg.drive.theta,
        omega_mhz: cfg.noise.omega_mhz[0],
    };
    for (axis, &v) in axes.iter().zip(coords) {
        match axis.name.as_str() {
            "C" => s.params.coop = v,
            "delta_a" => s.params.delta_a = v,
            "loss_rt" => s.params.loss_rt = v,
            "gamma_p" => s.params.gamma_p = v,
            "beta" => s.params.beta = v,
            "t_mirror" => s.params = s.params.with_mirror(v),
            "tau" => s.params.tau = v,
            "input" => s.input = InputSpec::Absolute(v),
            "input_ratio" => s.input = InputSpec::ThresholdMultiple(v),
            "theta" => s.theta = v,
            "omega_mhz" => s.omega_mhz = v,
            other => unreachable!("axis `{other}` passed validation"),
        }
    }
    s
}

/// Kernel output columns, after the axes, `input_intensity` and `class`.
pub fn kernel_columns(kernel: Kernel) -> &'static [&'static str] {
    match kernel {
        Kernel::Classify => &["bistable_width", "unstable_width"],
        Kernel::Oscillation => &["oscillating", "frequency_hz", "amplitude"],
        Kernel::Squeezing => &["intensity", "s_min", "s_max", "lo_phase_min"],
    }
}

/// Result of one grid point, before it becomes a row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub input_intensity: f64,
    pub class: PhaseClass,
    pub values: Vec<Value>,
}

fn total_width(list: &[(f64, f64)]) -> f64 {
    list.iter().fold(0.0, |acc, w| acc + (w.1 - w.0))
}

/// Evaluates `kernel` at one grid point.
pub fn evaluate(cfg: &RunConfig, kernel: Kernel, setup: &PointSetup) -> Result<PointResult> {
    let p = &setup.params;
    p.validate()?;
    let input = setup.input.resolve(p)?;
    if !(input > 0.0) {
        bail!("input intensity must be > 0, got {input}");
    }
    let map = stability_map(input, p)?;
    let class = PhaseClass::of(&map);
    let phi_0 = setup.theta * p.gamma_cav;
    let values = match kernel {
        Kernel::Classify => vec![
            total_width(&map.bistable).into(),
            total_width(&map.unstable).into(),
        ],
        Kernel::Oscillation => {
            let d = &cfg.dynamics;
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
            let report = detect_oscillations(&traj.intensity(), d.window)?;
            vec![
                report.oscillating.into(),
                report.frequency.into(),
                report.amplitude.into(),
            ]
        }
        Kernel::Squeezing => {
            let states = solve_steady(input, phi_0, p)?;
            let ss = states
                .iter()
                .find(|s| s.stability == Stability::Stable)
                .ok_or_else(|| anyhow!("no stable steady state at theta = {}", setup.theta))?;
            let spec = linearize(ss, p)?.spectrum(2.0 * PI * setup.omega_mhz * 1e6)?;
            vec![
                ss.intensity.into(),
                spec.s_min.into(),
                spec.s_max.into(),
                spec.theta_min.into(),
            ]
        }
    };
    Ok(PointResult {
        input_intensity: input,
        class,
        values,
    })
}

/// Placeholder cells for a failed point.
fn failed_cells(kernel: Kernel) -> Vec<Value> {
    match kernel {
        Kernel::Oscillation => vec![false.into(), f64::NAN.into(), f64::NAN.into()],
        k => vec![f64::NAN.into(); kernel_columns(k).len()],
    }
}

/// Runs the configured sweep on `workers` threads.
pub fn sweep(cfg: &RunConfig, workers: usize) -> Result<ResultTable> {
    let axes = &cfg.sweep.axes;
    let kernel = cfg.sweep.kernel;
    let points = grid(axes);
    if points.len() > cfg.sweep.max_points {
        bail!(
            "grid has {} points, above max_points = {}",
            points.len(),
            cfg.sweep.max_points
        );
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let results: Vec<Result<PointResult>> = pool.install(|| {
        points
            .par_iter()
            .map(|coords| evaluate(cfg, kernel, &point_setup(cfg, axes, coords)))
            .collect()
    });

    let mut columns: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
    columns.extend(["input_intensity", "class"]);
    columns.extend(kernel_columns(kernel));
    columns.push("error");
    let mut table = ResultTable::new(&columns);
    let mut failures = 0;
    for (coords, result) in points.iter().zip(results) {
        let mut row: Vec<Value> = coords.iter().map(|&v| v.into()).collect();
        match result {
            Ok(r) => {
                row.push(r.input_intensity.into());
                row.push(r.class.label().into());
                row.extend(r.values);
                row.push("".into());
            }
            Err(e) => {
                failures += 1;
                row.push(f64::NAN.into());
                row.push("".into());
                row.extend(failed_cells(kernel));
                row.push(format!("{e:#}").into());
            }
        }
        table.push(row)?;
    }
    table.meta("grid_points", points.len().to_string());
    table.meta("failed_points", failures.to_string());
    Ok(table)
}
