//! End-to-end checks of the binary: rerun reproducibility of every
//! command, the exit-code convention, and round-trips of the emitted CSV
//! files through the library parsers.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spinspec::csvio;
use spinspec::dynamics::evolve_populations;
use spinspec::levels::LEVELS;
use spinspec::spectrum::{synthesize_absorption, AbsorptionModel};
use spinspec::{FrequencyGrid, PopulationState};

fn spinspec_bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spinspec"));
    cmd.env_remove("SPINSPEC_OUT");
    cmd
}

/// Fresh scratch directory per test; the tag keeps parallel tests apart.
fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spinspec-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(subcommand: &str, config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = spinspec_bin();
    cmd.arg(subcommand);
    if let Some(cfg) = config {
        cmd.arg("--config").arg(cfg);
    }
    cmd.arg("--out").arg(out);
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "{subcommand} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Run one subcommand twice with the same config and compare every emitted
/// file byte for byte. Returns the emitted file names.
fn assert_reruns_identical(subcommand: &str, config_text: &str, tag: &str) -> Vec<String> {
    let root = scratch(tag);
    let cfg = root.join("run.toml");
    std::fs::write(&cfg, config_text).unwrap();
    let out_a = root.join("a");
    let out_b = root.join("b");
    let stdout_a = run_ok(subcommand, Some(&cfg), &out_a).stdout;
    run_ok(subcommand, Some(&cfg), &out_b);

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty(), "{subcommand} emitted nothing");

    // stdout lists exactly the emitted paths
    let listed: Vec<String> = String::from_utf8(stdout_a)
        .unwrap()
        .lines()
        .map(|l| Path::new(l).file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let mut listed_sorted = listed.clone();
    listed_sorted.sort();
    assert_eq!(listed_sorted, names, "{subcommand}: stdout listing != directory contents");

    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{subcommand}: {name} differs between identical reruns");
    }
    names
}

const HOLEBURN_DECAY_CONFIG: &str = "command = \"holeburn\"\n\
    [holeburn.decay]\n\
    duration_s = 50.0\n\
    samples = 21\n\
    [holeburn.decay.cross_relax]\n\
    2 = 0.01\n";

const ECHO_FULL_CONFIG: &str = "command = \"echo\"\n\
    seed = 7\n\
    [echo]\n\
    noise = 0.02\n\
    linewidth_hz = 130e3\n\
    separation_s = 5e-5\n";

#[test]
fn criterion_11_cli_outputs_reproducible() {
    let mut emitted = 0usize;
    emitted += assert_reruns_identical("spectrum", "command = \"spectrum\"\n", "c11-spectrum").len();
    emitted += assert_reruns_identical("pump", "command = \"pump\"\n", "c11-pump").len();
    emitted += assert_reruns_identical("relax", "command = \"relax\"\n", "c11-relax").len();
    emitted += assert_reruns_identical("holeburn", HOLEBURN_DECAY_CONFIG, "c11-holeburn").len();
    emitted += assert_reruns_identical("lifetime", "command = \"lifetime\"\n", "c11-lifetime").len();
    emitted += assert_reruns_identical("echo", ECHO_FULL_CONFIG, "c11-echo").len();

    // fit consumes a file the echo command just produced
    let root = scratch("c11-fit");
    let data_dir = root.join("data");
    std::fs::write(root.join("echo.toml"), "command = \"echo\"\nseed = 3\n[echo]\nnoise = 0.01\n")
        .unwrap();
    run_ok("echo", Some(&root.join("echo.toml")), &data_dir);
    let fit_cfg = format!(
        "command = \"fit\"\n[fit]\ndriver = \"echo-decay\"\ninput = \"{}\"\n",
        data_dir.join("echo.csv").display()
    );
    emitted += assert_reruns_identical("fit", &fit_cfg, "c11-fit-run").len();

    println!(
        "criterion 11 PASS: identical config and seed reproduced {emitted} emitted files \
         byte for byte across reruns of all 7 commands"
    );
}

#[test]
fn exit_codes_follow_the_documented_convention() {
    let root = scratch("exit-codes");
    let code = |output: &Output| output.status.code().unwrap();

    // no subcommand: usage on stderr, exit 2
    let bare = spinspec_bin().output().unwrap();
    assert_eq!(code(&bare), 2);
    assert!(String::from_utf8_lossy(&bare.stderr).contains("Usage"));

    // declared command disagrees with the invoked one: exit 2
    let mismatch = root.join("mismatch.toml");
    std::fs::write(&mismatch, "command = \"pump\"\n").unwrap();
    let out = spinspec_bin().args(["relax", "--config"]).arg(&mismatch).arg("--out").arg(&root).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]:"));

    // malformed TOML: exit 2
    let bad = root.join("bad.toml");
    std::fs::write(&bad, "command = [\n").unwrap();
    let out = spinspec_bin().args(["relax", "--config"]).arg(&bad).arg("--out").arg(&root).output().unwrap();
    assert_eq!(code(&out), 2);

    // unknown fit driver and trench without bounds: exit 2
    let driver = root.join("driver.toml");
    std::fs::write(&driver, "[fit]\ndriver = \"frobnicate\"\n").unwrap();
    let out = spinspec_bin().args(["fit", "--config"]).arg(&driver).arg("--out").arg(&root).output().unwrap();
    assert_eq!(code(&out), 2);
    let trench = root.join("trench.toml");
    std::fs::write(&trench, "[holeburn]\nburn = \"trench\"\n").unwrap();
    let out = spinspec_bin().args(["holeburn", "--config"]).arg(&trench).arg("--out").arg(&root).output().unwrap();
    assert_eq!(code(&out), 2);

    // missing config file or missing fit input: exit 4
    let out = spinspec_bin().args(["relax", "--config"]).arg(root.join("absent.toml")).arg("--out").arg(&root).output().unwrap();
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]:"));
    let noinput = root.join("noinput.toml");
    std::fs::write(
        &noinput,
        format!("[fit]\ndriver = \"echo-decay\"\ninput = \"{}\"\n", root.join("absent.csv").display()),
    )
    .unwrap();
    let out = spinspec_bin().args(["fit", "--config"]).arg(&noinput).arg("--out").arg(&root).output().unwrap();
    assert_eq!(code(&out), 4);

    // domain failure during evaluation: exit 3
    let domain = root.join("domain.toml");
    std::fs::write(&domain, "[relax]\nt_start_k = -2.0\nt_stop_k = -1.0\n").unwrap();
    let out = spinspec_bin().args(["relax", "--config"]).arg(&domain).arg("--out").arg(&root).output().unwrap();
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[domain]:"));
}

#[test]
fn emitted_csv_files_round_trip_through_the_parsers() {
    let root = scratch("round-trip");

    let out = root.join("spectrum");
    run_ok("spectrum", None, &out);
    let spec = csvio::parse_spectrum(&std::fs::read_to_string(out.join("spectrum.csv")).unwrap()).unwrap();
    assert_eq!(spec.frequencies.len(), 1601);

    let out = root.join("pump");
    run_ok("pump", None, &out);
    let (times, states) =
        csvio::parse_trajectory(&std::fs::read_to_string(out.join("pump.csv")).unwrap()).unwrap();
    assert_eq!(times.len(), 101);
    assert_eq!(states.len(), 101);

    let out = root.join("relax");
    run_ok("relax", None, &out);
    let rates = csvio::parse_rate_curve(&std::fs::read_to_string(out.join("relax.csv")).unwrap()).unwrap();
    assert_eq!(rates.len(), 25);

    let out = root.join("holeburn");
    let cfg = root.join("holeburn.toml");
    std::fs::write(&cfg, HOLEBURN_DECAY_CONFIG).unwrap();
    run_ok("holeburn", Some(&cfg), &out);
    let pattern = csvio::parse_pattern(&std::fs::read_to_string(out.join("holeburn.csv")).unwrap()).unwrap();
    assert!(pattern.iter().any(|r| r.sign < 0) && pattern.iter().any(|r| r.sign > 0));
    let decay = csvio::parse_trace(&std::fs::read_to_string(out.join("holeburn_decay.csv")).unwrap()).unwrap();
    assert_eq!(decay.len(), 21);
    // the tracked hole fills back towards equilibrium
    assert!(decay.last().unwrap().1 < decay[0].1);

    let out = root.join("lifetime");
    run_ok("lifetime", None, &out);
    let curve = csvio::parse_lifetime_curve(&std::fs::read_to_string(out.join("lifetime.csv")).unwrap()).unwrap();
    assert_eq!(curve.len(), 400);
    assert!(curve.iter().all(|&(f, l)| f > 0.0 && l > 0.0));

    let out = root.join("echo");
    let cfg = root.join("echo.toml");
    std::fs::write(&cfg, ECHO_FULL_CONFIG).unwrap();
    run_ok("echo", Some(&cfg), &out);
    let decay = csvio::parse_decay(&std::fs::read_to_string(out.join("echo.csv")).unwrap()).unwrap();
    assert_eq!(decay.len(), 50);
    let envelope = csvio::parse_trace(&std::fs::read_to_string(out.join("echo_envelope.csv")).unwrap()).unwrap();
    assert!(envelope.len() > 100);

    let fit_out = root.join("fit");
    let cfg = root.join("fit.toml");
    std::fs::write(
        &cfg,
        format!(
            "[fit]\ndriver = \"echo-decay\"\ninput = \"{}\"\n",
            root.join("echo").join("echo.csv").display()
        ),
    )
    .unwrap();
    run_ok("fit", Some(&cfg), &fit_out);
    let rows = csvio::parse_fit(&std::fs::read_to_string(fit_out.join("fit.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    let t2 = rows.iter().find(|r| r.parameter == "t2").unwrap();
    // 2% multiplicative noise leaves t2 within a few percent of the truth
    assert!((t2.value - 1.3).abs() < 0.1, "t2 {}", t2.value);
    assert!(t2.low < t2.value && t2.value < t2.high);
    let curve = csvio::parse_decay(&std::fs::read_to_string(fit_out.join("fit_curve.csv")).unwrap()).unwrap();
    assert_eq!(curve.len(), 200);
}

#[test]
fn out_dir_and_seed_resolution() {
    let root = scratch("resolution");
    let env_dir = root.join("env");
    let flag_dir = root.join("flag");
    std::fs::create_dir_all(&env_dir).unwrap();

    // $SPINSPEC_OUT is the fallback when --out is absent
    let out = spinspec_bin().arg("relax").env("SPINSPEC_OUT", &env_dir).output().unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("relax.csv").exists());

    // --out wins over the environment
    let out = spinspec_bin()
        .arg("spectrum")
        .env("SPINSPEC_OUT", &env_dir)
        .arg("--out")
        .arg(&flag_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_dir.join("spectrum.csv").exists());
    assert!(!env_dir.join("spectrum.csv").exists());

    // --seed overrides the config seed; equal seeds reproduce, different differ
    let cfg = root.join("noisy.toml");
    std::fs::write(&cfg, "seed = 7\n[echo]\nnoise = 0.02\n").unwrap();
    let dirs: Vec<PathBuf> = ["s7", "s7-again", "s8"].iter().map(|d| root.join(d)).collect();
    run_ok("echo", Some(&cfg), &dirs[0]);
    run_ok("echo", Some(&cfg), &dirs[1]);
    let mut cmd = spinspec_bin();
    cmd.args(["echo", "--seed", "8", "--config"]).arg(&cfg).arg("--out").arg(&dirs[2]);
    assert!(cmd.output().unwrap().status.success());
    let read = |d: &PathBuf| std::fs::read(d.join("echo.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn timeseries_driver_recovers_gamma_through_the_binary() {
    let root = scratch("timeseries");
    let gamma = 1.26e-3;
    let model = AbsorptionModel::with_defaults();
    let scheme = model.scheme.clone();
    let grid = FrequencyGrid::new(-1.7e9, -0.35e9, 241).unwrap();
    let initial = PopulationState::polarized(LEVELS - 1, 0.9).unwrap();
    let mut series_toml = String::new();
    for (i, &t) in [0.0, 250.0, 700.0, 1500.0].iter().enumerate() {
        let traj = evolve_populations(&initial, &scheme, 1.4, gamma, None, t, 2).unwrap();
        let spec = synthesize_absorption(&model, traj.last(), &grid).unwrap();
        let path = root.join(format!("t{i}.csv"));
        std::fs::write(&path, csvio::format_spectrum(&spec)).unwrap();
        series_toml.push_str(&format!(
            "[[fit.series]]\ntime_s = {t:?}\npath = \"{}\"\n",
            path.display()
        ));
    }
    let cfg = root.join("fit.toml");
    std::fs::write(
        &cfg,
        format!("[fit]\ndriver = \"timeseries\"\ntemperature_k = 1.4\n{series_toml}"),
    )
    .unwrap();
    let out = root.join("out");
    run_ok("fit", Some(&cfg), &out);
    let rows = csvio::parse_fit(&std::fs::read_to_string(out.join("fit.csv")).unwrap()).unwrap();
    let fitted = rows.iter().find(|r| r.parameter == "gamma").unwrap();
    assert!(
        (fitted.value - gamma).abs() <= 1e-6 * gamma,
        "gamma {} vs {gamma}",
        fitted.value
    );
    let trace = csvio::parse_trace(&std::fs::read_to_string(out.join("fit_curve.csv")).unwrap()).unwrap();
    assert_eq!(trace.len(), 100);
    // recovery towards equilibrium raises the band peak monotonically here
    assert!(trace.last().unwrap().1 > trace[0].1);
}

#[test]
fn populations_driver_recovers_fractions_through_the_binary() {
    let root = scratch("populations");
    let model = AbsorptionModel::with_defaults();
    let grid = FrequencyGrid::new(-1.7e9, -0.35e9, 241).unwrap();
    let pops = PopulationState::polarized(LEVELS - 1, 0.95).unwrap();
    let spec = synthesize_absorption(&model, &pops, &grid).unwrap();
    let input = root.join("spectrum.csv");
    std::fs::write(&input, csvio::format_spectrum(&spec)).unwrap();
    let cfg = root.join("fit.toml");
    std::fs::write(
        &cfg,
        format!("[fit]\ndriver = \"populations\"\ninput = \"{}\"\n", input.display()),
    )
    .unwrap();
    let out = root.join("out");
    run_ok("fit", Some(&cfg), &out);
    let rows = csvio::parse_fit(&std::fs::read_to_string(out.join("fit.csv")).unwrap()).unwrap();
    let top = rows.iter().find(|r| r.parameter == "p(+7/2)").unwrap();
    assert!((top.value - 0.95).abs() <= 1e-6, "p(+7/2) {}", top.value);
    let curve = csvio::parse_spectrum(&std::fs::read_to_string(out.join("fit_curve.csv")).unwrap()).unwrap();
    assert_eq!(curve.frequencies.len(), 241);
    for (a, b) in curve.values.iter().zip(&spec.values) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "curve mismatch {a} vs {b}");
    }
}
