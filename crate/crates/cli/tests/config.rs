use coldcav::dsp::FilterDomain;
use coldcav_cli::config::{
    parse_config, parse_config_with, Branch, DynamicsMode, InputSpec, Kernel, Override, RunConfig,
};

fn error_of(text: &str) -> String {
    format!("{:#}", parse_config(text).unwrap_err())
}

#[test]
fn empty_text_gives_defaults() {
    let cfg = parse_config("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert!((cfg.model.gamma_cav - 0.05).abs() < 1e-15);
    assert_eq!(cfg.model.coop, 100.0);
}

#[test]
fn keys_land_in_their_sections() {
    let cfg = parse_config(
        "# comment\n[model]\nC = 300\ndelta_a = -20   # trailing\npumping = false\n\n[drive]\ninput = 1.3x-threshold\ntheta = -33.7\n\
         [noise]\nomega_mhz = 1, 5, 10\nbranch = lower\n[dynamics]\nmode = decay\n[dsp]\ndisplay = linear\n[sweep]\nkernel = squeezing\n",
    )
    .unwrap();
    assert_eq!(cfg.model.coop, 300.0);
    assert_eq!(cfg.model.delta_a, -20.0);
    assert!(!cfg.model.pumping_on);
    assert_eq!(cfg.drive.input, InputSpec::ThresholdMultiple(1.3));
    assert_eq!(cfg.drive.theta, -33.7);
    assert_eq!(cfg.noise.omega_mhz, vec![1.0, 5.0, 10.0]);
    assert_eq!(cfg.noise.branch, Branch::Lower);
    assert_eq!(cfg.dynamics.mode, DynamicsMode::Decay);
    assert_eq!(cfg.dsp.display, FilterDomain::LinearPower);
    assert_eq!(cfg.sweep.kernel, Kernel::Squeezing);
}

#[test]
fn mirror_decay_must_match_transmission() {
    let msg = error_of("[model]\nt_mirror = 0.3162\ngamma_cav = 0.2\n");
    assert!(msg.contains("gamma_cav") && msg.contains("line 3"), "{msg}");
    // either one alone fixes the other
    let cfg = parse_config("[model]\ngamma_cav = 0.08\n").unwrap();
    assert!((cfg.model.t_mirror - 0.4).abs() < 1e-12);
    let cfg = parse_config("[model]\nt_mirror = 0.2\n").unwrap();
    assert!((cfg.model.gamma_cav - 0.02).abs() < 1e-15);
    assert!(parse_config("[model]\nt_mirror = 0.2\ngamma_cav = 0.02\n").is_ok());
}

#[test]
fn errors_name_key_and_line() {
    let cases = [
        ("[model]\nC = 100\nbogus = 1\n", "bogus", "line 3"),
        ("[model]\nC = lots\n", "C", "line 2"),
        ("\n[model]\n\nloss_rt = 1.5\n", "loss_rt", "line 4"),
        ("[model]\ngamma_atom = -1\n", "gamma_atom", "line 2"),
        ("[drive]\ninput = 2y\n", "input", "line 2"),
        ("[scan]\ntheta_range = 1:2\n", "theta_range", "line 2"),
        ("[dynamics]\ntol = 0.5\n", "tol", "line 2"),
        ("[noise]\neta_hom = 1.2\n", "eta_hom", "line 2"),
        ("[dsp]\ndepth = 0\n", "depth", "line 2"),
        ("[sweep]\naxes = C=0:400:50; bogus=1,2\n", "axes", "line 2"),
        ("[sweep]\nmax_points = 10\n", "axes", "default"),
        ("[model]\npumping = yes\n", "pumping", "line 2"),
        ("[model]\nC = 1\nC = 2\n", "C", "line 3"),
    ];
    for (text, key, line) in cases {
        let msg = error_of(text);
        assert!(
            msg.contains(key) && msg.contains(line),
            "`{text}` gave `{msg}`"
        );
    }
    assert!(error_of("[nowhere]\n").contains("line 1"));
    assert!(error_of("C = 1\n").contains("line 1"));
    assert!(error_of("[model]\nC 100\n").contains("line 2"));
}

#[test]
fn flags_override_file_values() {
    let overrides = [
        Override::new("model.C", "250", "--set"),
        Override::new("drive.input", "2.5", "--I-in"),
    ];
    let cfg = parse_config_with("[model]\nC = 300\n[drive]\ninput = 1.5x\n", &overrides).unwrap();
    assert_eq!(cfg.model.coop, 250.0);
    assert_eq!(cfg.drive.input, InputSpec::Absolute(2.5));
    let err = parse_config_with("", &[Override::new("drive.input", "nope", "--I-in")]).unwrap_err();
    assert!(format!("{err:#}").contains("--I-in"));
    let err = parse_config_with("", &[Override::new("model.nothing", "1", "--set")]).unwrap_err();
    assert!(format!("{err:#}").contains("nothing"));
}

#[test]
fn echo_reproduces_the_configuration() {
    let text = "[model]\nC = 300\ndelta_a = 20\ntau = 1.7e-9\nabsorption = true\n[drive]\ninput = 0.1234567890123\ntheta = -0.1\n\
                [scan]\ntheta_range = -40:-28:6001\n[noise]\nomega_mhz = 0.5,5,50\n[trace]\nlo_amplitude = 1.0471975511965976\n\
                [sweep]\naxes = delta_a=10,20,30; theta=-3:3:0.5\nkernel = oscillation\nworkers = 3\n[output]\ndir = out dir/x\nseed = 42\n";
    let cfg = parse_config(text).unwrap();
    let echo = cfg.echo();
    let again = parse_config(&echo).unwrap();
    // the worker count is not part of the echo
    assert_eq!(again.sweep.workers, 0);
    let mut expected = cfg.clone();
    expected.sweep.workers = 0;
    assert_eq!(again, expected);
    assert_eq!(again.echo(), echo);
    // every key is materialized
    for key in [
        "tau =",
        "gamma_cav =",
        "beta =",
        "theta_range =",
        "switch_ratio =",
        "cmrr_db =",
        "lo_offset =",
        "f_c_numeric =",
        "max_points =",
        "timestamp =",
    ] {
        assert!(echo.contains(key), "echo lacks `{key}`");
    }
    assert!(!echo.contains("workers"));
}

#[test]
fn sweep_grid_is_bounded() {
    let cfg = parse_config(
        "[sweep]\naxes = C=100:400:100; input_ratio=1,2; theta=-1:1:1\nmax_points = 24\n",
    )
    .unwrap();
    assert_eq!(cfg.sweep.axes.len(), 3);
    assert!(parse_config(
        "[sweep]\naxes = C=100:400:100; input_ratio=1,2; theta=-1:1:1\nmax_points = 23\n"
    )
    .is_err());
    assert!(parse_config("[sweep]\naxes = C=1,2; delta_a=1; beta=1; gamma_p=1\n").is_err());
    assert!(parse_config("[sweep]\naxes = input=1,2; input_ratio=1\n").is_err());
    assert!(parse_config("[sweep]\naxes = C=1,2; C=3\n").is_err());
}
