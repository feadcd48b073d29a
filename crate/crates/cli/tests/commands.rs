use std::path::Path;
use std::process::Command;

use coldcav::noise::{apply_detection, linearize};
use coldcav::steady::{solve_steady, stability_map};
use coldcav::Stability;
use coldcav_cli::config::Kernel;
use coldcav_cli::sweep::{evaluate, point_setup};
use coldcav_cli::{
    execute, parse_config, read_table, sweep, CommandKind, PhaseClass, ResultTable, Value,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coldcav"))
        .args(args)
        .output()
        .unwrap()
}

fn single(kind: CommandKind, text: &str) -> ResultTable {
    let cfg = parse_config(text).unwrap();
    let mut artifacts = execute(kind, &cfg, 1).unwrap();
    artifacts.remove(0).table
}

fn text_column<'a>(t: &'a ResultTable, name: &str) -> Vec<&'a str> {
    t.values(name)
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect()
}

#[test]
fn steady_rows_match_direct_solutions() {
    let t = single(
        CommandKind::Steady,
        "[model]\npumping = false\n[drive]\ninput = 1.5x\n[scan]\ntheta_range = -3:1:81\n",
    );
    let cfg = parse_config("[model]\npumping = false\n").unwrap();
    let p = &cfg.model;
    let input: f64 = t.meta_value("input_intensity").unwrap().parse().unwrap();
    let threshold: f64 = t
        .meta_value("threshold_intensity")
        .unwrap()
        .parse()
        .unwrap();
    assert!((input / threshold - 1.5).abs() < 1e-12);

    let theta = t.floats("theta").unwrap();
    let intensity = t.floats("intensity").unwrap();
    let stability = text_column(&t, "stability");
    let mut row = 0;
    let mut multi = 0;
    let grid = parse_config("[scan]\ntheta_range = -3:1:81\n")
        .unwrap()
        .scan
        .theta_range
        .values();
    for th in grid {
        let roots = solve_steady(input, th * p.gamma_cav, p).unwrap();
        multi += usize::from(roots.len() == 3);
        for s in &roots {
            assert_eq!(theta[row], th);
            assert_eq!(intensity[row].to_bits(), s.intensity.to_bits());
            assert_eq!(stability[row], s.stability.label());
            row += 1;
        }
    }
    assert_eq!(row, t.rows.len());
    assert!(multi > 0);
}

#[test]
fn noise_extrema_bound_the_spectrum() {
    let t = single(
        CommandKind::Noise,
        "[model]\nC = 300\ndelta_a = 20\npumping = false\n[drive]\ninput = 0.75\ntheta = -27\n[noise]\nomega_mhz = 2, 5\ntheta_grid = 720\n",
    );
    let cfg = parse_config("[model]\nC = 300\ndelta_a = 20\npumping = false\n").unwrap();
    let p = &cfg.model;
    let ss = solve_steady(0.75, -27.0 * p.gamma_cav, p).unwrap()[0];
    assert_eq!(ss.stability, Stability::Stable);
    let kind = text_column(&t, "kind");
    let omega = t.floats("omega_mhz").unwrap();
    let s = t.floats("s").unwrap();
    let detected = t.floats("s_detected").unwrap();
    let chain = cfg.noise.chain();
    for f in [2.0, 5.0] {
        let rows: Vec<usize> = (0..t.rows.len()).filter(|&k| omega[k] == f).collect();
        let spectrum: Vec<f64> = rows
            .iter()
            .filter(|&&k| kind[k] == "spectrum")
            .map(|&k| s[k])
            .collect();
        assert_eq!(spectrum.len(), 720);
        let min = rows
            .iter()
            .find(|&&k| kind[k] == "min")
            .map(|&k| s[k])
            .unwrap();
        let max = rows
            .iter()
            .find(|&&k| kind[k] == "max")
            .map(|&k| s[k])
            .unwrap();
        let grid_min = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
        let grid_max = spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            min <= grid_min + 1e-12 && grid_min - min < 1e-4,
            "{min} vs {grid_min}"
        );
        assert!(
            max >= grid_max - 1e-12 && max - grid_max < 1e-4 * max,
            "{max} vs {grid_max}"
        );
        let spec = linearize(&ss, p)
            .unwrap()
            .spectrum(2.0 * PI * f * 1e6)
            .unwrap();
        assert_eq!(min.to_bits(), spec.s_min.to_bits());
        for &k in &rows {
            assert_eq!(detected[k], apply_detection(s[k], &chain).unwrap());
        }
    }
}

#[test]
fn dsp_demo_reports_one_row() {
    let t = single(CommandKind::DspDemo, "[dsp]\nf_c_numeric = 4e3\n");
    assert_eq!(t.rows.len(), 1);
    let shown = t.floats("displayed_min_db").unwrap()[0];
    let recovered = t.floats("recovered_min_power").unwrap()[0];
    assert!(shown > 10.0 * 0.5f64.log10());
    assert!((recovered / 0.5 - 1.0).abs() < 0.1, "{recovered}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn bad_configuration_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[model]\nC = -5\n").unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "steady"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("C"), "{err}");
    let out = run(&[
        "--config",
        dir.path().join("absent.cfg").to_str().unwrap(),
        "steady",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn configuration_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let first = run(&[
        "--out",
        out_dir,
        "--set",
        "model.C=150",
        "steady",
        "--I-in",
        "120",
        "--theta-range=-4:1:51",
    ]);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let csv = dir.path().join("steady.csv");
    let before = bytes(&csv);
    let table = read_table(&csv).unwrap();
    assert_eq!(table.meta_value("command"), Some("steady"));

    let echo = dir.path().join("steady.cfg");
    let again = run(&["--config", echo.to_str().unwrap(), "steady"]);
    assert!(
        again.status.success(),
        "{}",
        String::from_utf8_lossy(&again.stderr)
    );
    assert_eq!(bytes(&csv), before);
}

fn sweep_config(extra: &str) -> coldcav_cli::RunConfig {
    parse_config(&format!("[output]\ndir = unused\n{extra}")).unwrap()
}

#[test]
fn single_point_sweep_equals_direct_evaluation() {
    let cfg =
        sweep_config("[sweep]\naxes = C=300:300:1; input_ratio=1.3:1.3:1\nkernel = classify\n");
    let table = sweep(&cfg, 1).unwrap();
    assert_eq!(table.rows.len(), 1);
    let direct = evaluate(
        &cfg,
        Kernel::Classify,
        &point_setup(&cfg, &cfg.sweep.axes, &[300.0, 1.3]),
    )
    .unwrap();
    let row = &table.rows[0];
    assert_eq!(row[2], Value::Float(direct.input_intensity));
    assert_eq!(row[3], Value::from(direct.class.label()));
    assert_eq!(row[4..6], direct.values[..]);
}

#[test]
fn sweep_cells_agree_with_core_calls() {
    let cfg = sweep_config("[sweep]\naxes = C=100:400:50; input_ratio=0.75:2.5:0.25\n");
    let table = sweep(&cfg, 4).unwrap();
    let coop = table.floats("C").unwrap();
    let ratio = table.floats("input_ratio").unwrap();
    let input = table.floats("input_intensity").unwrap();
    let class = text_column(&table, "class");
    let bistable = table.floats("bistable_width").unwrap();
    let unstable = table.floats("unstable_width").unwrap();
    assert_eq!(table.meta_value("failed_points"), Some("0"));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let k = rng.gen_range(0..table.rows.len());
        let p = cfg.model.with_coop(coop[k]);
        let threshold = coldcav::steady::bistability_threshold(&p.with_pumping(false))
            .unwrap()
            .unwrap();
        assert!((input[k] / (ratio[k] * threshold.input_intensity) - 1.0).abs() < 1e-12);
        let map = stability_map(input[k], &p).unwrap();
        assert_eq!(class[k], PhaseClass::of(&map).label());
        let width = |l: &[(f64, f64)]| l.iter().map(|w| w.1 - w.0).sum::<f64>();
        assert!((bistable[k] - width(&map.bistable)).abs() < 1e-12);
        assert!((unstable[k] - width(&map.unstable)).abs() < 1e-12);
        // the class is visible in the root sets themselves
        let stable_at = |theta: f64| {
            solve_steady(input[k], theta * p.gamma_cav, &p)
                .unwrap()
                .iter()
                .filter(|s| s.stability == Stability::Stable)
                .count()
        };
        for w in &map.unstable {
            assert_eq!(stable_at(0.5 * (w.0 + w.1)), 0, "cell {k}");
        }
        for w in &map.bistable {
            assert!(stable_at(0.5 * (w.0 + w.1)) >= 2, "cell {k}");
        }
    }
}

#[test]
fn pumping_off_phase_diagram_has_no_oscillations() {
    let cfg = sweep_config(
        "[model]\npumping = false\n[sweep]\naxes = C=60:200:20; input_ratio=0.5:2:0.25\n",
    );
    let table = sweep(&cfg, 4).unwrap();
    let ratio = table.floats("input_ratio").unwrap();
    let class = text_column(&table, "class");
    let errors = text_column(&table, "error");
    let mut bistable = 0;
    for k in 0..table.rows.len() {
        if !errors[k].is_empty() {
            continue;
        }
        assert_ne!(class[k], "oscillatory", "row {k}");
        if ratio[k] < 1.0 {
            assert_eq!(class[k], "monostable", "row {k}");
        } else if ratio[k] > 1.0 && ratio[k] < 2.0 {
            assert_eq!(class[k], "bistable", "row {k}");
            bistable += 1;
        }
    }
    assert!(bistable > 10);
}

#[test]
fn pumping_on_phase_diagram_has_oscillations() {
    let cfg = sweep_config("[sweep]\naxes = C=250:400:50; input_ratio=1.25:1.5:0.25\n");
    let table = sweep(&cfg, 4).unwrap();
    assert!(text_column(&table, "class").contains(&"oscillatory"));
}

#[test]
fn worker_count_does_not_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let axes = "sweep.axes=C=200:400:100; input_ratio=1:2:0.5; theta=-30:-20:10";
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let out = run(&[
            "--out",
            out_dir,
            "--workers",
            workers,
            "--set",
            axes,
            "sweep",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(bytes(&dir.path().join("sweep.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn flags_before_and_after_the_subcommand_accumulate() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&[
        "--set",
        "model.C=150",
        "--set",
        "drive.input=90",
        "--out",
        out_dir,
        "steady",
        "--set",
        "scan.theta_range=-1:0:3",
        "--set",
        "model.delta_a=30",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echo = std::fs::read_to_string(dir.path().join("steady.cfg")).unwrap();
    for line in [
        "C = 150.0",
        "delta_a = 30.0",
        "input = 90.0",
        "theta_range = -1.0:0.0:3",
    ] {
        assert!(
            echo.lines().any(|l| l == line),
            "missing `{line}` in\n{echo}"
        );
    }
}
