//! Config-driven command-line runner. Every subcommand reads one TOML run
//! configuration, emits CSV data plus an SVG plot into the output
//! directory, and prints the emitted paths. Identical config and seed give
//! bit-identical CSV output.

mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use spinspec::csvio;
use spinspec::dynamics::{
    simulate_spin_pumping, BranchingModel, HoleLifetimeModel,
};
use spinspec::echo::{
    echo_amplitude, simulate_raman_echo, DetuningSampler, EchoDecayModel, PulseSequence,
};
use spinspec::fit::{
    fit_echo_decay, fit_eq1, fit_population_fractions, fit_relaxation_timeseries,
    EQ1_MASK_MAX_K,
};
use spinspec::holeburn::{predict_pattern, BurnSpec, FeatureKind, DEFAULT_BURN_WINDOW_HZ};
use spinspec::levels::{m_label, transition_table, StrengthModel, LEVELS};
use spinspec::spectrum::{
    am_response, pm_response, synthesize_absorption, AbsorptionModel, IsotopeComposition,
    DEFAULT_PEAK_CALIBRATION,
};
use spinspec::{Command as ConfigCommand, Error, PopulationState, RunConfig, Spectrum};

use plot::Series;

#[derive(Parser)]
#[command(
    name = "spinspec",
    version,
    about = "Hyperfine spectroscopy models: spectra, spin dynamics, hole burning, echoes, fits",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O failure.\n\
                  Output directory: --out, else $SPINSPEC_OUT, else the working directory."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration; every section is optional and defaults apply
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for emitted files
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the seed from the config
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Print extra diagnostics to stderr
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Synthesize an absorption spectrum or AM/PM sideband response
    Spectrum,
    /// Pump one sideband band and record the sublevel populations over time
    Pump,
    /// Evaluate the spin-lattice relaxation rate over a temperature grid
    Relax,
    /// Predict the hole/anti-hole pattern of a burn, optionally its decay
    Holeburn,
    /// Sweep the spectral-hole lifetime over magnetic field
    Lifetime,
    /// Generate a Mims echo decay curve, optionally the echo envelope
    #[command(
        long_about = "Generate a Mims echo decay curve, optionally the simulated echo \
                      envelope.\n\nThe tau_s abscissa of the decay CSV is the total delay \
                      from excitation to echo (twice the pulse separation), matching the \
                      plotted convention. When [echo] provides linewidth_hz and \
                      separation_s, the envelope around one echo is also simulated."
    )]
    Echo,
    /// Fit a model to a data file and emit parameters with intervals
    #[command(
        long_about = "Fit a model to a data file and emit parameters with RMSD-doubling \
                      intervals.\n\n[fit].driver selects the model: \"echo-decay\" reads a \
                      tau_s,amplitude CSV; \"eq1\" reads a temperature_k,gamma_per_s CSV; \
                      \"populations\" reads a frequency_hz,value spectrum covering the \
                      low-frequency sideband; \"timeseries\" reads [[fit.series]] entries \
                      of timestamped spectra."
    )]
    Fit,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Spectrum => "spectrum",
            Cmd::Pump => "pump",
            Cmd::Relax => "relax",
            Cmd::Holeburn => "holeburn",
            Cmd::Lifetime => "lifetime",
            Cmd::Echo => "echo",
            Cmd::Fit => "fit",
        }
    }
}

#[derive(Clone, Copy)]
enum Stage {
    Setup,
    Compute,
}

struct CliError {
    stage: Stage,
    err: Error,
}

impl CliError {
    fn code(&self) -> u8 {
        match (&self.err, self.stage) {
            (Error::Io(_), _) => 4,
            (_, Stage::Setup) => 2,
            (_, Stage::Compute) => 3,
        }
    }
}

fn setup(err: Error) -> CliError {
    CliError { stage: Stage::Setup, err }
}

fn compute(err: Error) -> CliError {
    CliError { stage: Stage::Compute, err }
}

fn category(err: &Error) -> &'static str {
    match err {
        Error::InvalidConfig(_) | Error::Parse(_) => "config",
        Error::InvalidState(_) => "state",
        Error::Domain(_) => "domain",
        Error::UnsupportedTransition { .. } => "transition",
        Error::Numerical(_) => "numerical",
        Error::InsufficientData(_) => "data",
        Error::Io(_) => "io",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in &files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {}", category(&e.err), e.err);
            ExitCode::from(e.code())
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    verbose: bool,
    files: Vec<PathBuf>,
}

impl Ctx {
    fn emit(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        csvio::write_atomic(&path, content).map_err(compute)?;
        self.files.push(path);
        Ok(())
    }

    fn note(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(setup)?,
        None => RunConfig::default(),
    };
    if let Some(declared) = cfg.command {
        let given = cli.command.name();
        if ConfigCommand::parse(given).ok() != Some(declared) {
            return Err(setup(Error::InvalidConfig(format!(
                "config declares command \"{}\" but \"{given}\" was invoked",
                declared.name()
            ))));
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("SPINSPEC_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)
        .map_err(|e| setup(Error::Io(format!("{}: {e}", out.display()))))?;
    let seed = cli.seed.unwrap_or_else(|| cfg.seed());
    let mut ctx = Ctx { cfg, out, seed, verbose: cli.verbose, files: Vec::new() };
    match cli.command {
        Cmd::Spectrum => cmd_spectrum(&mut ctx)?,
        Cmd::Pump => cmd_pump(&mut ctx)?,
        Cmd::Relax => cmd_relax(&mut ctx)?,
        Cmd::Holeburn => cmd_holeburn(&mut ctx)?,
        Cmd::Lifetime => cmd_lifetime(&mut ctx)?,
        Cmd::Echo => cmd_echo(&mut ctx)?,
        Cmd::Fit => cmd_fit(&mut ctx)?,
    }
    Ok(ctx.files)
}

fn uniform_grid(start: f64, stop: f64, points: usize, what: &str) -> Result<Vec<f64>, CliError> {
    if !(start.is_finite() && stop.is_finite() && start < stop) || points < 2 {
        return Err(setup(Error::InvalidConfig(format!(
            "{what} grid needs finite start < stop and at least 2 points, got \
             [{start}, {stop}] x {points}"
        ))));
    }
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points).map(|i| start + step * i as f64).collect())
}

fn cmd_spectrum(ctx: &mut Ctx) -> Result<(), CliError> {
    let model = ctx.cfg.absorption_model().map_err(setup)?;
    let pops = ctx.cfg.initial_populations(&model.scheme).map_err(setup)?;
    let grid = ctx.cfg.frequency_grid().map_err(setup)?;
    let response = ctx.cfg.spectrum.response.clone();
    match response.as_deref().unwrap_or("absorption") {
        "absorption" => {
            let spec = synthesize_absorption(&model, &pops, &grid).map_err(compute)?;
            ctx.note(&format!("peak {} dB/cm", spec.peak()));
            ctx.emit("spectrum.csv", &csvio::format_spectrum(&spec))?;
            let pts: Vec<(f64, f64)> =
                spec.frequencies.iter().copied().zip(spec.values.iter().copied()).collect();
            ctx.emit(
                "spectrum.svg",
                &plot::line_plot(
                    "Absorption spectrum",
                    "frequency offset (Hz)",
                    "optical depth (dB/cm)",
                    &[Series { label: "absorption", points: &pts }],
                ),
            )
        }
        kind @ ("am" | "pm") => {
            let spec = synthesize_absorption(&model, &pops, &grid).map_err(compute)?;
            let s = &ctx.cfg.spectrum;
            let carrier = s.carrier_hz.unwrap_or(0.0);
            let mods = uniform_grid(
                s.modulation_start_hz.unwrap_or(1.0e7),
                s.modulation_stop_hz.unwrap_or(1.5e9),
                s.modulation_points.unwrap_or(750),
                "modulation",
            )?;
            let path_cm = s.path_cm.unwrap_or(1.0);
            let vals = if kind == "am" {
                am_response(&spec, carrier, &mods, path_cm)
            } else {
                pm_response(&spec, carrier, &mods, path_cm)
            }
            .map_err(compute)?;
            let out = Spectrum::new(mods, vals).map_err(compute)?;
            ctx.emit("spectrum.csv", &csvio::format_spectrum(&out))?;
            let pts: Vec<(f64, f64)> =
                out.frequencies.iter().copied().zip(out.values.iter().copied()).collect();
            let title =
                if kind == "am" { "AM sideband response" } else { "PM sideband response" };
            ctx.emit(
                "spectrum.svg",
                &plot::line_plot(
                    title,
                    "modulation frequency (Hz)",
                    "beat magnitude",
                    &[Series { label: kind, points: &pts }],
                ),
            )
        }
        other => Err(setup(Error::InvalidConfig(format!(
            "spectrum.response must be absorption, am or pm, got \"{other}\""
        )))),
    }
}

fn cmd_pump(ctx: &mut Ctx) -> Result<(), CliError> {
    let scheme = ctx.cfg.level_scheme().map_err(setup)?;
    let gamma = ctx.cfg.gamma().map_err(setup)?;
    let pump = ctx.cfg.pump_config().map_err(setup)?;
    let duration = ctx.cfg.pump.duration_s.unwrap_or(20.0 / gamma);
    let samples = ctx.cfg.pump.samples.unwrap_or(101);
    let temperature = ctx.cfg.temperature();
    let traj = simulate_spin_pumping(&scheme, temperature, gamma, &pump, duration, samples)
        .map_err(compute)?;
    ctx.note(&format!("final |+7/2> fraction {}", traj.last().fraction(LEVELS - 1)));
    let csv = csvio::format_trajectory(&traj.times, &traj.states).map_err(compute)?;
    ctx.emit("pump.csv", &csv)?;
    let labels: Vec<String> = (0..LEVELS).map(|g| format!("p({})", m_label(g))).collect();
    let traces: Vec<Vec<(f64, f64)>> = (0..LEVELS)
        .map(|g| {
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(&t, s)| (t, s.fraction(g)))
                .collect()
        })
        .collect();
    let series: Vec<Series> = labels
        .iter()
        .zip(&traces)
        .map(|(label, points)| Series { label, points })
        .collect();
    ctx.emit(
        "pump.svg",
        &plot::line_plot("Spin pumping", "time (s)", "population fraction", &series),
    )
}

fn cmd_relax(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.cfg.relaxation_params();
    let r = &ctx.cfg.relax;
    let temps = uniform_grid(
        r.t_start_k.unwrap_or(1.4),
        r.t_stop_k.unwrap_or(2.6),
        r.points.unwrap_or(25),
        "temperature",
    )?;
    let mut rows = Vec::with_capacity(temps.len());
    for &t in &temps {
        rows.push((t, params.gamma(t).map_err(compute)?));
    }
    ctx.emit("relax.csv", &csvio::format_rate_curve(&rows))?;
    ctx.emit(
        "relax.svg",
        &plot::line_plot(
            "Relaxation rate vs temperature",
            "temperature (K)",
            "rate (1/s)",
            &[Series { label: "rate", points: &rows }],
        ),
    )
}

fn cmd_holeburn(ctx: &mut Ctx) -> Result<(), CliError> {
    let scheme = ctx.cfg.level_scheme().map_err(setup)?;
    let strengths = ctx.cfg.strength_model();
    let table = transition_table(&scheme, &strengths).map_err(setup)?;
    let branching = BranchingModel::FromStrengths(strengths);
    let h = &ctx.cfg.holeburn;
    let burn = match h.burn.as_deref().unwrap_or("point") {
        "point" => BurnSpec::Point {
            frequency_hz: h.frequency_hz.unwrap_or_else(|| {
                scheme.transition_frequency(LEVELS - 1, LEVELS - 1)
            }),
            window_hz: h.window_hz.unwrap_or(DEFAULT_BURN_WINDOW_HZ),
        },
        "trench" => {
            let (start, stop) = match (h.start_hz, h.stop_hz) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(setup(Error::InvalidConfig(
                        "holeburn: a trench burn needs start_hz and stop_hz".into(),
                    )))
                }
            };
            BurnSpec::Trench { start_hz: start, stop_hz: stop }
        }
        other => {
            return Err(setup(Error::InvalidConfig(format!(
                "holeburn.burn must be point or trench, got \"{other}\""
            ))))
        }
    };
    let pattern = predict_pattern(&scheme, &table, &burn, &branching).map_err(compute)?;
    if let Some(w) = &pattern.warning {
        eprintln!("warning: {w}");
    }
    ctx.emit("holeburn.csv", &csvio::format_pattern(&pattern))?;
    let sticks: Vec<(f64, f64)> = pattern
        .features
        .iter()
        .map(|f| {
            let sign = match f.kind {
                FeatureKind::Hole => -1.0,
                FeatureKind::AntiHole => 1.0,
            };
            (f.offset_hz, sign * f.amplitude)
        })
        .collect();
    ctx.emit(
        "holeburn.svg",
        &plot::stick_plot(
            "Hole and anti-hole pattern",
            "offset from burn (Hz)",
            "signed amplitude",
            &sticks,
        ),
    )?;

    let decay = ctx.cfg.holeburn.decay.clone();
    if let Some(d) = &decay {
        let gamma = match d.gamma_per_s {
            Some(g) => g,
            None => ctx.cfg.gamma().map_err(setup)?,
        };
        let mut cross = BTreeMap::new();
        if let Some(map) = &d.cross_relax {
            for (key, &rate) in map {
                let class: i32 = key.parse().map_err(|_| {
                    setup(Error::InvalidConfig(format!(
                        "holeburn.decay.cross_relax keys are |delta m| classes, got \"{key}\""
                    )))
                })?;
                cross.insert(class, rate);
            }
        }
        let duration = d.duration_s.unwrap_or(100.0);
        let samples = d.samples.unwrap_or(101);
        let traj =
            spinspec::holeburn::simulate_hole_decay(&pattern, gamma, &cross, duration, samples)
                .map_err(compute)?;
        let deepest = pattern
            .features
            .iter()
            .enumerate()
            .filter(|(_, f)| matches!(f.kind, FeatureKind::Hole))
            .max_by(|a, b| a.1.amplitude.total_cmp(&b.1.amplitude))
            .map(|(i, _)| i)
            .ok_or_else(|| {
                compute(Error::InvalidState("burn produced no hole to track".into()))
            })?;
        let rows: Vec<(f64, f64)> = traj
            .times
            .iter()
            .copied()
            .zip(traj.amplitude_history(deepest))
            .collect();
        ctx.emit("holeburn_decay.csv", &csvio::format_trace(&rows))?;
        ctx.emit(
            "holeburn_decay.svg",
            &plot::line_plot(
                "Hole decay",
                "time (s)",
                "hole amplitude",
                &[Series { label: "hole", points: &rows }],
            ),
        )?;
    }
    Ok(())
}

fn cmd_lifetime(ctx: &mut Ctx) -> Result<(), CliError> {
    let phonon = ctx.cfg.phonon_model();
    let params = ctx.cfg.relaxation_params();
    let l = &ctx.cfg.lifetime;
    let fields = uniform_grid(
        l.field_start_t.unwrap_or(0.01),
        l.field_stop_t.unwrap_or(8.0),
        l.points.unwrap_or(400),
        "field",
    )?;
    let model = HoleLifetimeModel::new(&phonon, &params).map_err(setup)?;
    // embarrassingly parallel sweep; chunk order keeps output deterministic
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8);
    let chunk = fields.len().div_ceil(workers);
    let mut lifetimes = vec![0.0f64; fields.len()];
    let mut first_err: Option<Error> = None;
    std::thread::scope(|s| {
        let mut handles = Vec::new();
        for (fs, ls) in fields.chunks(chunk).zip(lifetimes.chunks_mut(chunk)) {
            let model = &model;
            handles.push(s.spawn(move || -> Result<(), Error> {
                for (f, l) in fs.iter().zip(ls.iter_mut()) {
                    *l = model.lifetime(*f)?;
                }
                Ok(())
            }));
        }
        for h in handles {
            if let Err(e) = h.join().expect("lifetime worker panicked") {
                first_err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = first_err {
        return Err(compute(e));
    }
    let rows: Vec<(f64, f64)> = fields.into_iter().zip(lifetimes).collect();
    ctx.emit("lifetime.csv", &csvio::format_lifetime_curve(&rows))?;
    ctx.emit(
        "lifetime.svg",
        &plot::line_plot(
            "Hole lifetime vs magnetic field",
            "field (T)",
            "lifetime (s)",
            &[Series { label: "lifetime", points: &rows }],
        ),
    )
}

fn cmd_echo(ctx: &mut Ctx) -> Result<(), CliError> {
    let e = ctx.cfg.echo.clone();
    let model =
        EchoDecayModel::new(e.t2_s.unwrap_or(1.3), e.mims_x.unwrap_or(1.8)).map_err(setup)?;
    let taus = uniform_grid(
        e.tau_start_s.unwrap_or(0.05),
        e.tau_stop_s.unwrap_or(4.0),
        e.tau_points.unwrap_or(50),
        "tau",
    )?;
    let noise = e.noise.unwrap_or(0.0);
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(setup(Error::InvalidConfig(format!(
            "echo.noise must be finite and >= 0, got {noise}"
        ))));
    }
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in &taus {
        rows.push((tau, echo_amplitude(tau, &model).map_err(compute)?));
    }
    if noise > 0.0 {
        let mut rng = ChaCha12Rng::seed_from_u64(ctx.seed);
        for row in &mut rows {
            // Box-Muller on explicit uniforms keeps the draw stable per seed
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            let n = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            row.1 *= 1.0 + noise * n;
        }
    }
    ctx.emit("echo.csv", &csvio::format_decay(&rows))?;
    ctx.emit(
        "echo.svg",
        &plot::line_plot(
            "Echo decay",
            "total delay (s)",
            "echo amplitude",
            &[Series { label: "decay", points: &rows }],
        ),
    )?;

    if let (Some(linewidth), Some(separation)) = (e.linewidth_hz, e.separation_s) {
        let scheme = ctx.cfg.level_scheme().map_err(setup)?;
        let seq = PulseSequence::new(separation).map_err(setup)?;
        let sampler = match e.sampler.as_deref().unwrap_or("gauss-hermite") {
            "gauss-hermite" => DetuningSampler::GaussHermite,
            "monte-carlo" => DetuningSampler::MonteCarlo { seed: ctx.seed },
            other => {
                return Err(setup(Error::InvalidConfig(format!(
                    "echo.sampler must be gauss-hermite or monte-carlo, got \"{other}\""
                ))))
            }
        };
        let packets = e.packets.unwrap_or(129);
        let env = simulate_raman_echo(&scheme, linewidth, &seq, packets, sampler)
            .map_err(compute)?;
        if let Some(w) = &env.warning {
            eprintln!("warning: {w}");
        }
        let pts: Vec<(f64, f64)> =
            env.times.iter().copied().zip(env.amplitude.iter().copied()).collect();
        ctx.emit("echo_envelope.csv", &csvio::format_trace(&pts))?;
        ctx.emit(
            "echo_envelope.svg",
            &plot::line_plot(
                "Echo envelope",
                "time (s)",
                "envelope amplitude",
                &[Series { label: "envelope", points: &pts }],
            ),
        )?;
    }
    Ok(())
}

fn cmd_fit(ctx: &mut Ctx) -> Result<(), CliError> {
    let fit_cfg = ctx.cfg.fit.clone();
    let driver = fit_cfg.driver.as_deref().ok_or_else(|| {
        setup(Error::InvalidConfig(
            "fit.driver is required: echo-decay, eq1, populations or timeseries".into(),
        ))
    })?;
    let input = |what: &str| -> Result<&Path, CliError> {
        fit_cfg.input.as_deref().ok_or_else(|| {
            setup(Error::InvalidConfig(format!("fit.input is required for {what}")))
        })
    };
    match driver {
        "echo-decay" => {
            let text = csvio::read_to_string(input("echo-decay")?).map_err(setup)?;
            let data = csvio::parse_decay(&text).map_err(setup)?;
            let (model, result) = fit_echo_decay(&data).map_err(compute)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            ctx.note(&result.report());
            ctx.emit("fit.csv", &csvio::format_fit(&result))?;
            let lo = data.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = data.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let mut curve = Vec::with_capacity(200);
            for &tau in &uniform_grid(lo, hi, 200, "curve")? {
                curve.push((tau, echo_amplitude(tau, &model).map_err(compute)?));
            }
            ctx.emit("fit_curve.csv", &csvio::format_decay(&curve))?;
            ctx.emit(
                "fit.svg",
                &plot::line_plot(
                    "Echo decay fit",
                    "total delay (s)",
                    "echo amplitude",
                    &[
                        Series { label: "data", points: &data },
                        Series { label: "model", points: &curve },
                    ],
                ),
            )
        }
        "eq1" => {
            let text = csvio::read_to_string(input("eq1")?).map_err(setup)?;
            let data = csvio::parse_rate_curve(&text).map_err(setup)?;
            let mask = if fit_cfg.mask_t_min_k.is_some() || fit_cfg.mask_t_max_k.is_some() {
                Some((
                    fit_cfg.mask_t_min_k.unwrap_or(0.0),
                    fit_cfg.mask_t_max_k.unwrap_or(EQ1_MASK_MAX_K),
                ))
            } else {
                None
            };
            let splitting = ctx.cfg.relaxation_params().splitting_hz;
            let (params, result) = fit_eq1(&data, splitting, mask).map_err(compute)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            ctx.note(&result.report());
            ctx.emit("fit.csv", &csvio::format_fit(&result))?;
            let lo = data.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = data.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let mut curve = Vec::with_capacity(200);
            for &t in &uniform_grid(lo, hi, 200, "curve")? {
                curve.push((t, params.gamma(t).map_err(compute)?));
            }
            ctx.emit("fit_curve.csv", &csvio::format_rate_curve(&curve))?;
            ctx.emit(
                "fit.svg",
                &plot::line_plot(
                    "Relaxation law fit",
                    "temperature (K)",
                    "rate (1/s)",
                    &[
                        Series { label: "data", points: &data },
                        Series { label: "model", points: &curve },
                    ],
                ),
            )
        }
        "populations" => {
            let text = csvio::read_to_string(input("populations")?).map_err(setup)?;
            let spec = csvio::parse_spectrum(&text).map_err(setup)?;
            let scheme = ctx.cfg.level_scheme().map_err(setup)?;
            let lineshape = ctx.cfg.lineshape().map_err(setup)?;
            let (state, result) =
                fit_population_fractions(&spec, &scheme, &lineshape).map_err(compute)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            ctx.note(&result.report());
            ctx.emit("fit.csv", &csvio::format_fit(&result))?;
            let curve = reconstructed_spectrum(&scheme, &lineshape, &state, &spec.frequencies)
                .map_err(compute)?;
            ctx.emit("fit_curve.csv", &csvio::format_spectrum(&curve))?;
            let data_pts: Vec<(f64, f64)> =
                spec.frequencies.iter().copied().zip(spec.values.iter().copied()).collect();
            let curve_pts: Vec<(f64, f64)> = curve
                .frequencies
                .iter()
                .copied()
                .zip(curve.values.iter().copied())
                .collect();
            ctx.emit(
                "fit.svg",
                &plot::line_plot(
                    "Population fit",
                    "frequency offset (Hz)",
                    "optical depth (dB/cm)",
                    &[
                        Series { label: "data", points: &data_pts },
                        Series { label: "model", points: &curve_pts },
                    ],
                ),
            )
        }
        "timeseries" => {
            if fit_cfg.series.len() < 3 {
                return Err(setup(Error::InvalidConfig(format!(
                    "fit.timeseries needs at least 3 [[fit.series]] entries, got {}",
                    fit_cfg.series.len()
                ))));
            }
            let mut series = Vec::with_capacity(fit_cfg.series.len());
            for entry in &fit_cfg.series {
                let text = csvio::read_to_string(&entry.path).map_err(setup)?;
                series.push((entry.time_s, csvio::parse_spectrum(&text).map_err(setup)?));
            }
            let scheme = ctx.cfg.level_scheme().map_err(setup)?;
            let lineshape = ctx.cfg.lineshape().map_err(setup)?;
            let temperature = fit_cfg.temperature_k.unwrap_or_else(|| ctx.cfg.temperature());
            let (gamma, result) =
                fit_relaxation_timeseries(&series, &scheme, temperature, &lineshape)
                    .map_err(compute)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            ctx.note(&format!("gamma {gamma}\n{}", result.report()));
            ctx.emit("fit.csv", &csvio::format_fit(&result))?;
            // model peak trace on a dense time grid, data peaks alongside;
            // the basis depends only on the grid, so build it once
            let mut init = [0.0f64; LEVELS];
            init[1..].copy_from_slice(&result.params[2..2 + LEVELS - 1]);
            init[0] = 1.0 - init[1..].iter().sum::<f64>();
            let initial = PopulationState::new(init).map_err(compute)?;
            let scale = result.params[1];
            let t_end = series.last().expect("series checked nonempty").0;
            let dense = uniform_grid(0.0, t_end.max(1.0e-9), 100, "curve")?;
            let freqs = &series[0].1.frequencies;
            let table = transition_table(&scheme, &StrengthModel::default())
                .map_err(compute)?;
            let model = AbsorptionModel::new(
                scheme.clone(),
                table,
                lineshape.clone(),
                DEFAULT_PEAK_CALIBRATION,
                IsotopeComposition::default(),
            )
            .map_err(compute)?;
            let (basis, impurity) =
                spinspec::spectrum::absorption_basis(&model, freqs).map_err(compute)?;
            let mut curve = Vec::with_capacity(dense.len());
            for &t in &dense {
                let traj = spinspec::dynamics::evolve_populations(
                    &initial, &scheme, temperature, gamma, None, t, 2,
                )
                .map_err(compute)?;
                let state = traj.last();
                let mut peak = f64::NEG_INFINITY;
                for (b, imp) in basis.iter().zip(&impurity) {
                    let mut v = *imp;
                    for (g, bg) in b.iter().enumerate() {
                        v += state.fraction(g) * bg;
                    }
                    peak = peak.max(v);
                }
                curve.push((t, scale * peak));
            }
            ctx.emit("fit_curve.csv", &csvio::format_trace(&curve))?;
            let data_pts: Vec<(f64, f64)> =
                series.iter().map(|(t, s)| (*t, s.peak())).collect();
            ctx.emit(
                "fit.svg",
                &plot::line_plot(
                    "Relaxation time-series fit",
                    "time (s)",
                    "band peak (dB/cm)",
                    &[
                        Series { label: "data", points: &data_pts },
                        Series { label: "model", points: &curve },
                    ],
                ),
            )
        }
        other => Err(setup(Error::InvalidConfig(format!(
            "fit.driver must be echo-decay, eq1, populations or timeseries, got \"{other}\""
        )))),
    }
}

/// Rebuild the spectrum a fitted population state implies, on the same
/// frequency samples and with the same defaults the population driver uses.
fn reconstructed_spectrum(
    scheme: &spinspec::levels::LevelScheme,
    lineshape: &spinspec::Lineshape,
    state: &PopulationState,
    frequencies: &[f64],
) -> spinspec::Result<Spectrum> {
    let table = transition_table(scheme, &spinspec::levels::StrengthModel::default())?;
    let model = AbsorptionModel::new(
        scheme.clone(),
        table,
        lineshape.clone(),
        DEFAULT_PEAK_CALIBRATION,
        IsotopeComposition::default(),
    )?;
    let (basis, impurity) = spinspec::spectrum::absorption_basis(&model, frequencies)?;
    let values: Vec<f64> = basis
        .iter()
        .zip(&impurity)
        .map(|(b, imp)| {
            let mut v = *imp;
            for (g, bg) in b.iter().enumerate() {
                v += state.fraction(g) * bg;
            }
            v
        })
        .collect();
    Spectrum::new(frequencies.to_vec(), values)
}
