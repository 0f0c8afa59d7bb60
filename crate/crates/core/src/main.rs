use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use chawkes::ergodicity::{analyze, CheckConfig, ClassKind, McConfig};
use chawkes::estimate::{fclt_experiment, FcltConfig, MIN_REPLICATIONS};
use chawkes::hawkes::{simulate, ChainState, PathSeed, StopRule};
use chawkes::lob::{is_lob_shaped, mid_price_scaling_demo_with};
use chawkes::model::{lob_preset, load_spec, save_spec, scaled_identity4, ModelSpec, WeightFunction};
use chawkes::Error;

const EXIT_ERROR: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_POSITIVITY: u8 = 3;
const EXIT_TRANSIENT: u8 = 4;
const EXIT_INCONCLUSIVE: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "chawkes", version, about = "Constrained Hawkes process simulation and analysis")]
struct Cli {
    /// Worker threads (default: all cores). CHAWKES_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Manifest path (default: <out>.manifest.json).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one path and write its event log as CSV.
    Simulate(SimulateArgs),
    /// Classify ergodicity and write the report as JSON.
    Check(CheckArgs),
    /// Replicated scaling experiment for a weighted count.
    Fclt(FcltArgs),
    /// Mid-price diffusion and spread scaling for the order-book preset.
    LobDemo(LobDemoArgs),
    /// Write a preset model file.
    Preset(PresetArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    spec: PathBuf,
    #[arg(long, conflicts_with = "horizon", required_unless_present = "horizon")]
    events: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Initial constraint state, comma-separated (default: free corner).
    #[arg(long)]
    initial: Option<String>,
    /// Add S and lambda columns after every event.
    #[arg(long)]
    snapshots: bool,
    #[arg(long, default_value = "events.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CheckArgs {
    spec: PathBuf,
    /// Side of the start cube for the admissible-path search.
    #[arg(long = "K", visible_alias = "k", default_value_t = 5)]
    k: i64,
    #[arg(long, default_value_t = 64)]
    max_len: usize,
    /// Events per Monte-Carlo run of each restricted chain.
    #[arg(long, default_value_t = 200_000)]
    mc_events: u64,
    #[arg(long, default_value_t = 4)]
    reps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FcltArgs {
    spec: PathBuf,
    /// Comma-separated weights, or `mid` for the order-book preset.
    #[arg(long)]
    w: String,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long, default_value_t = 300)]
    reps: u32,
    #[arg(long, default_value = "0.25,0.5,1")]
    tgrid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run even if the model is not certified geometrically ergodic.
    #[arg(long)]
    force: bool,
    #[arg(long, default_value = "fclt.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LobDemoArgs {
    spec: PathBuf,
    #[arg(long = "T", default_value_t = 4000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 200)]
    reps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
    #[arg(long, default_value = "lob-demo.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PresetArgs {
    /// Only `lob` is available.
    name: String,
    #[arg(long, default_value = "0.1,0.2,0.2,0.1")]
    mu0: String,
    /// Diagonal fertility `c · Id`.
    #[arg(long, default_value_t = 0.1)]
    fertility: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    mu0_null: f64,
    #[arg(long, default_value = "lob.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    spec_path: Option<String>,
    spec_hash: Option<String>,
    seed: Option<u64>,
    stop: Option<serde_json::Value>,
    outputs: Vec<String>,
    threads: usize,
}

/// Error reported to the user with an exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Validation(_) => EXIT_VALIDATION,
            Error::StatePositivity { .. } => EXIT_POSITIVITY,
            _ => EXIT_ERROR,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn read_spec(path: &Path) -> std::result::Result<ModelSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail(EXIT_ERROR, format!("{}: {e}", path.display())))?;
    Ok(load_spec(&text)?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Vec<T>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<T>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| fail(EXIT_VALIDATION, format!("cannot parse {what} `{s}`")))
}

fn parse_weights(s: &str, spec: &ModelSpec) -> std::result::Result<WeightFunction, Failure> {
    if s == "mid" {
        if !is_lob_shaped(spec) {
            return Err(fail(EXIT_VALIDATION, "`mid` weights need the order-book preset shape"));
        }
        return Ok(WeightFunction::mid_price());
    }
    let w = WeightFunction(parse_list(s, "weights")?);
    w.check_len(spec.p).map_err(|e| fail(EXIT_VALIDATION, e.to_string()))?;
    Ok(w)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = with_suffix(path, ".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

struct Run<'a> {
    cli: &'a Cli,
    threads: usize,
}

impl Run<'_> {
    fn manifest(
        &self,
        command: &str,
        spec: Option<(&Path, &ModelSpec)>,
        seed: Option<u64>,
        stop: Option<serde_json::Value>,
        outputs: &[&Path],
    ) -> std::result::Result<(), Failure> {
        let primary = outputs[0];
        let path = self
            .cli
            .manifest
            .clone()
            .unwrap_or_else(|| with_suffix(primary, ".manifest.json"));
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            spec_path: spec.map(|(p, _)| p.display().to_string()),
            spec_hash: spec.map(|(_, s)| s.hash()),
            seed,
            stop,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            threads: self.threads,
        };
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_atomic(&path, format!("{json}\n").as_bytes())?;
        Ok(())
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn cmd_simulate(run: &Run, a: &SimulateArgs) -> Outcome {
    let spec = read_spec(&a.spec)?;
    let init = match &a.initial {
        Some(s) => {
            let st = ChainState::at_rest(&spec, parse_list(s, "initial state")?);
            st.check(&spec).map_err(|e| fail(EXIT_VALIDATION, e.to_string()))?;
            st
        }
        None => ChainState::default_for(&spec),
    };
    let stop = match (a.events, a.horizon) {
        (Some(n), _) => StopRule::Events(n),
        (None, Some(h)) if h.is_finite() && h >= 0.0 => StopRule::Horizon(h),
        _ => return Err(fail(EXIT_VALIDATION, "--horizon must be a finite non-negative number")),
    };
    run.manifest(
        "simulate",
        Some((&a.spec, &spec)),
        Some(a.seed),
        Some(serde_json::to_value(stop).expect("stop rule serializes")),
        &[&a.out],
    )?;
    let log = simulate(&spec, &init, stop, PathSeed::new(a.seed, a.stream), a.snapshots)?;
    let mut out = BufWriter::new(File::create(&a.out)?);
    log.write_csv(&mut out)?;
    out.flush()?;
    eprintln!("{} events written to {}", log.len(), a.out.display());
    Ok(0)
}

fn classify_exit(kind: ClassKind) -> u8 {
    match kind {
        ClassKind::GeometricallyErgodic => 0,
        ClassKind::Transient => EXIT_TRANSIENT,
        ClassKind::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn cmd_check(run: &Run, a: &CheckArgs) -> Outcome {
    let spec = read_spec(&a.spec)?;
    let cfg = CheckConfig {
        k: a.k,
        max_len: a.max_len,
        mc: McConfig {
            events_per_run: a.mc_events,
            replications: a.reps,
            seed: a.seed,
            ..McConfig::default()
        },
    };
    run.manifest("check", Some((&a.spec, &spec)), Some(a.seed), None, &[&a.out])?;
    let report = analyze(&spec, &cfg)?;
    write_atomic(&a.out, &json_bytes(&report))?;
    print!("{report}");
    Ok(classify_exit(report.classification.kind))
}

/// Refuses uncertified models unless forced.
fn require_ergodic(spec: &ModelSpec, force: bool) -> std::result::Result<(), Failure> {
    if force {
        return Ok(());
    }
    let report = analyze(spec, &CheckConfig::default())?;
    if report.classification.kind != ClassKind::GeometricallyErgodic {
        let reason = report.classification.trail.last().cloned().unwrap_or_default();
        return Err(fail(
            EXIT_INCONCLUSIVE,
            format!(
                "model is not certified geometrically ergodic ({}: {reason}); pass --force to run anyway",
                report.classification.kind
            ),
        ));
    }
    Ok(())
}

fn check_reps(reps: u32) -> std::result::Result<(), Failure> {
    if reps < MIN_REPLICATIONS {
        return Err(fail(
            EXIT_VALIDATION,
            format!("--reps {reps} is too small; the estimators need at least {MIN_REPLICATIONS} replications"),
        ));
    }
    Ok(())
}

fn cmd_fclt(run: &Run, a: &FcltArgs) -> Outcome {
    let spec = read_spec(&a.spec)?;
    check_reps(a.reps)?;
    let w = parse_weights(&a.w, &spec)?;
    let t_grid: Vec<f64> = parse_list(&a.tgrid, "t grid")?;
    let cfg = FcltConfig::new(a.horizon, a.reps, t_grid, a.seed);
    let diag_path = with_suffix(&a.out, ".diagnostics.json");
    run.manifest(
        "fclt",
        Some((&a.spec, &spec)),
        Some(a.seed),
        Some(serde_json::json!({ "horizon": a.horizon, "replications": a.reps })),
        &[&a.out, &diag_path],
    )?;
    require_ergodic(&spec, a.force)?;
    let result = fclt_experiment(&spec, &w, &cfg)?;
    let mut out = BufWriter::new(File::create(&a.out)?);
    result.write_csv(&mut out)?;
    out.flush()?;
    let summary = serde_json::json!({
        "pilot": result.pilot,
        "diagnostics": result.diagnostics,
    });
    write_atomic(&diag_path, &json_bytes(&summary))?;

    let p = &result.pilot;
    println!("{:<32} {:.6e} ± {:.2e}", "E(w) (per unit time)", p.e_w, p.e_w_se);
    println!("{:<32} {:.6e}", "mean delta", p.mean_delta);
    println!("{:<32} {:.6e} ± {:.2e}", "v(w) (per step)", p.v_w, p.v_w_se);
    println!("{:<32} {:.6e} ± {:.2e}", "v(w)/E[delta] (per unit time)", p.diffusion, p.diffusion_se);
    println!("\n{:>8} {:>14} {:>14} {:>14}", "t", "mean", "variance", "predicted");
    for g in &result.diagnostics.grid {
        println!("{:>8} {:>14.6} {:>14.6} {:>14.6}", g.t, g.mean, g.variance, g.predicted_variance);
    }
    let d = &result.diagnostics;
    println!("\nendpoint KS: D = {:.4}, p = {:.4}", d.endpoint_ks.statistic, d.endpoint_ks.p_value);
    if let Some(c) = d.increment_correlation {
        println!("first/last increment correlation: {c:.4}");
    }
    Ok(0)
}

fn cmd_lob_demo(run: &Run, a: &LobDemoArgs) -> Outcome {
    let spec = read_spec(&a.spec)?;
    check_reps(a.reps)?;
    if !is_lob_shaped(&spec) {
        return Err(fail(EXIT_VALIDATION, "lob-demo needs the order-book preset shape (p = 4, q = 1)"));
    }
    let paths = with_suffix(&a.out, ".paths.csv");
    run.manifest(
        "lob-demo",
        Some((&a.spec, &spec)),
        Some(a.seed),
        Some(serde_json::json!({ "horizon": a.horizon, "replications": a.reps })),
        &[&a.out, &paths],
    )?;
    require_ergodic(&spec, a.force)?;
    let cfg = FcltConfig::new(a.horizon, a.reps, vec![0.25, 0.5, 1.0], a.seed);
    let report = mid_price_scaling_demo_with(&spec, &cfg)?;
    let mut out = BufWriter::new(File::create(&paths)?);
    report.fclt.write_csv(&mut out)?;
    out.flush()?;
    write_atomic(&a.out, &json_bytes(&report))?;
    print!("{report}");
    Ok(0)
}

fn cmd_preset(run: &Run, a: &PresetArgs) -> Outcome {
    if a.name != "lob" {
        return Err(fail(EXIT_VALIDATION, format!("unknown preset `{}` (available: lob)", a.name)));
    }
    let mu0: Vec<f64> = parse_list(&a.mu0, "mu0")?;
    let mu0: [f64; 4] = mu0
        .try_into()
        .map_err(|_| fail(EXIT_VALIDATION, "--mu0 needs 4 values"))?;
    let spec = lob_preset(mu0, scaled_identity4(a.fertility), a.beta, a.mu0_null)?;
    run.manifest("preset", Some((&a.out, &spec)), None, None, &[&a.out])?;
    write_atomic(&a.out, format!("{}\n", save_spec(&spec)).as_bytes())?;
    Ok(0)
}

fn thread_count(cli: &Cli) -> std::result::Result<usize, Failure> {
    let env = match std::env::var("CHAWKES_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| fail(EXIT_VALIDATION, format!("CHAWKES_THREADS=`{v}` is not a thread count")))?,
        ),
        Err(_) => None,
    };
    let n = env.or(cli.threads).unwrap_or(0);
    Ok(if n == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        n
    })
}

fn dispatch(cli: &Cli) -> Outcome {
    let threads = thread_count(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| fail(EXIT_ERROR, e.to_string()))?;
    let run = Run { cli, threads };
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(&run, a),
        Command::Check(a) => cmd_check(&run, a),
        Command::Fclt(a) => cmd_fclt(&run, a),
        Command::LobDemo(a) => cmd_lob_demo(&run, a),
        Command::Preset(a) => cmd_preset(&run, a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
