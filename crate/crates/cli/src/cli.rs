//! Argument parsing for the `coldcav` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::commands::{read_config_file, run_command, CommandKind};
use crate::config::{parse_config_with, Override};

#[derive(Debug, Parser)]
#[command(
    name = "coldcav",
    version,
    about = "Driven cavity with cold atoms: steady states, dynamics, noise spectra"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted both before and after the subcommand. They are declared
/// on each level rather than as global arguments, which would let a
/// repeated `--set` after the subcommand drop the ones before it.
#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// Configuration file; missing keys take their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Sets any configuration key, e.g. `--set model.C=300`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads for sweeps (default: COLDCAV_WORKERS or all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    /// Flags after the subcommand win over those before it; `--set`
    /// assignments accumulate in order.
    fn merged(&self, later: &CommonArgs) -> CommonArgs {
        CommonArgs {
            config: later.config.clone().or_else(|| self.config.clone()),
            out: later.out.clone().or_else(|| self.out.clone()),
            set: self.set.iter().chain(&later.set).cloned().collect(),
            workers: later.workers.or(self.workers),
        }
    }
}

#[derive(Debug, Args)]
pub struct DriveArgs {
    /// Input intensity, absolute or e.g. `1.5x-threshold`.
    #[arg(long = "I-in", allow_hyphen_values = true)]
    pub input: Option<String>,
    /// Cavity detuning in linewidths.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady states and their stability over a detuning range.
    Steady {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        drive: DriveArgs,
        /// `start:end:points`.
        #[arg(long, allow_hyphen_values = true)]
        theta_range: Option<String>,
    },
    /// Quasi-static up and down detuning scans with switch points.
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long, allow_hyphen_values = true)]
        theta_range: Option<String>,
    },
    /// Time-domain runs: detuning ramp, fixed drive or atom-number decay.
    Dynamics {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long, allow_hyphen_values = true)]
        theta_range: Option<String>,
        /// `ramp`, `fixed` or `decay`.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        duration: Option<String>,
    },
    /// Quadrature noise spectra of the stable steady states.
    Noise {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        drive: DriveArgs,
        /// Comma-separated analysis frequencies, MHz.
        #[arg(long)]
        omega_mhz: Option<String>,
        /// Local-oscillator phases over half a turn.
        #[arg(long)]
        theta_grid: Option<String>,
        /// `lower`, `upper` or `all`.
        #[arg(long)]
        branch: Option<String>,
    },
    /// Synthesized homodyne recording while the atom number decays.
    Trace {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long = "coop-0")]
        coop_0: Option<String>,
        #[arg(long)]
        t_decay: Option<String>,
    },
    /// Videofilter artifact on modulated noise, and its reconstruction.
    DspDemo {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        depth: Option<String>,
        /// `db` or `linear`.
        #[arg(long)]
        display: Option<String>,
        #[arg(long)]
        f_c_numeric: Option<String>,
    },
    /// Grid sweep over up to three parameters.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// e.g. `C=0:400:50; input_ratio=0.5:3:0.25`.
        #[arg(long)]
        axes: Option<String>,
        /// `classify`, `oscillation` or `squeezing`.
        #[arg(long)]
        kernel: Option<String>,
        /// Largest number of grid points accepted.
        #[arg(long)]
        max_points: Option<String>,
    },
}

fn push(overrides: &mut Vec<Override>, key: &str, value: &Option<String>, flag: &str) {
    if let Some(v) = value {
        overrides.push(Override::new(key, v.clone(), flag));
    }
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Steady { .. } => CommandKind::Steady,
            Command::Scan { .. } => CommandKind::Scan,
            Command::Dynamics { .. } => CommandKind::Dynamics,
            Command::Noise { .. } => CommandKind::Noise,
            Command::Trace { .. } => CommandKind::Trace,
            Command::DspDemo { .. } => CommandKind::DspDemo,
            Command::Sweep { .. } => CommandKind::Sweep,
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Steady { common, .. }
            | Command::Scan { common, .. }
            | Command::Dynamics { common, .. }
            | Command::Noise { common, .. }
            | Command::Trace { common, .. }
            | Command::DspDemo { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }

    fn overrides(&self, out: &mut Vec<Override>) {
        let drive = |out: &mut Vec<Override>, d: &DriveArgs| {
            push(out, "drive.input", &d.input, "--I-in");
            push(out, "drive.theta", &d.theta, "--theta");
        };
        match self {
            Command::Steady {
                drive: d,
                theta_range,
                ..
            }
            | Command::Scan {
                drive: d,
                theta_range,
                ..
            } => {
                drive(out, d);
                push(out, "scan.theta_range", theta_range, "--theta-range");
            }
            Command::Dynamics {
                drive: d,
                theta_range,
                mode,
                duration,
                ..
            } => {
                drive(out, d);
                push(out, "scan.theta_range", theta_range, "--theta-range");
                push(out, "dynamics.mode", mode, "--mode");
                push(out, "dynamics.duration", duration, "--duration");
            }
            Command::Noise {
                drive: d,
                omega_mhz,
                theta_grid,
                branch,
                ..
            } => {
                drive(out, d);
                push(out, "noise.omega_mhz", omega_mhz, "--omega-mhz");
                push(out, "noise.theta_grid", theta_grid, "--theta-grid");
                push(out, "noise.branch", branch, "--branch");
            }
            Command::Trace {
                drive: d,
                coop_0,
                t_decay,
                ..
            } => {
                drive(out, d);
                push(out, "trace.coop_0", coop_0, "--coop-0");
                push(out, "trace.t_decay", t_decay, "--t-decay");
            }
            Command::DspDemo {
                depth,
                display,
                f_c_numeric,
                ..
            } => {
                push(out, "dsp.depth", depth, "--depth");
                push(out, "dsp.display", display, "--display");
                push(out, "dsp.f_c_numeric", f_c_numeric, "--f-c-numeric");
            }
            Command::Sweep {
                axes,
                kernel,
                max_points,
                ..
            } => {
                push(out, "sweep.axes", axes, "--axes");
                push(out, "sweep.kernel", kernel, "--kernel");
                push(out, "sweep.max_points", max_points, "--max-points");
            }
        }
    }
}

impl Cli {
    /// `--set` values first, then the dedicated flags.
    fn common(&self) -> CommonArgs {
        self.common.merged(self.command.common())
    }

    pub fn overrides(&self) -> Result<Vec<Override>> {
        let common = self.common();
        let mut out = common
            .set
            .iter()
            .map(|s| Override::from_assignment(s))
            .collect::<Result<Vec<_>>>()?;
        if let Some(dir) = &common.out {
            out.push(Override::new(
                "output.dir",
                dir.display().to_string(),
                "--out",
            ));
        }
        if let Some(n) = common.workers {
            out.push(Override::new("sweep.workers", n.to_string(), "--workers"));
        }
        self.command.overrides(&mut out);
        Ok(out)
    }

    pub fn run(&self) -> Result<Vec<PathBuf>> {
        let text = match &self.common().config {
            Some(path) => read_config_file(path)?,
            None => String::new(),
        };
        let cfg = parse_config_with(&text, &self.overrides()?)?;
        run_command(self.command.kind(), &cfg)
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
/// Usage errors exit with 2, run failures with 1.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.run() {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
