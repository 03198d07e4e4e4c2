use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mkv_core::config::{ContractionConfig, InversionConfig, ScenarioConfig};
use mkv_core::engine::flow_to_csv;
use mkv_core::fixpoint::{chain_solve, estimate_contraction, solve_fixed_point, EngineChoice, PicardDiagnostics, WindowReport};
use mkv_core::kernels::verify_inversion;
use mkv_core::measure::{metric_bl_alpha, metric_w_alpha, read_measure};
use mkv_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(name = "mkv", version, about = "McKean-Vlasov solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed point of a scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the particle seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare both sides of the inversion identity for a pair of specs.
    VerifyInversion {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure Picard contraction rates against the horizon.
    Contraction {
        #[arg(long)]
        config: PathBuf,
        /// Rate table; the fits go next to it with a `.json` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance between two stored measures.
    Metric {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum)]
        kind: Kind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Bl,
    W,
}

/// Failure with the exit code it maps to.
struct Failure(u8, String);

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure(EXIT_CONFIG, e.to_string())
    }

    fn solver(e: Error) -> Self {
        match e {
            Error::DegenerateDiffusion(_) | Error::ConfigParse(_) => Failure::config(e),
            e => Failure(EXIT_SOLVER, e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_config(path: &Path) -> Result<(String, PathBuf), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((text, base))
}

fn write(path: &Path, contents: &str) -> Outcome {
    let fail = |e: std::io::Error| Failure(EXIT_SOLVER, format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(fail)?;
    }
    std::fs::write(path, contents).map_err(fail)
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: String,
    config_sha256: String,
    seed: Option<u64>,
    engine: &'a EngineChoice,
    horizon: f64,
    t_sub: Option<f64>,
    tol: f64,
    max_iter: usize,
}

#[derive(Serialize)]
struct RunDiagnostics {
    iterations: usize,
    distances: Vec<f64>,
    rates: Vec<f64>,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    windows: Option<Vec<WindowReport>>,
}

impl From<PicardDiagnostics> for RunDiagnostics {
    fn from(d: PicardDiagnostics) -> Self {
        Self { iterations: d.iterations, distances: d.distances, rates: d.rates, converged: d.converged, windows: None }
    }
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>) -> Outcome {
    let (text, base) = read_config(config)?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(Failure::config)?;
    let sc = cfg.build(&base, seed).map_err(Failure::solver)?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: config.display().to_string(),
        config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        seed: match sc.engine {
            EngineChoice::Particle { seed, .. } => Some(seed),
            EngineChoice::Density => None,
        },
        engine: &sc.engine,
        horizon: cfg.time.horizon,
        t_sub: cfg.solver.t_sub,
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
    };
    write(&out.join("run-manifest.json"), &to_json(&manifest))?;

    let (tol, max_iter) = (cfg.solver.tol, cfg.solver.max_iter);
    let solved = match cfg.solver.t_sub {
        Some(t_sub) if t_sub < cfg.time.horizon => chain_solve(&sc, cfg.time.horizon, t_sub, tol, max_iter).map(|c| {
            let last = c.windows.last().map(|w| w.diagnostics.clone()).unwrap_or_default();
            let diag = RunDiagnostics {
                iterations: c.windows.iter().map(|w| w.diagnostics.iterations).sum(),
                converged: c.windows.iter().all(|w| w.diagnostics.converged),
                distances: last.distances,
                rates: last.rates,
                windows: Some(c.windows),
            };
            (c.flow, diag)
        }),
        _ => solve_fixed_point(&sc, tol, max_iter).map(|(flow, d)| (flow, d.into())),
    };
    match solved {
        Ok((flow, diag)) => {
            write(&out.join("marginals.csv"), &flow_to_csv(&flow))?;
            write(&out.join("diagnostics.json"), &to_json(&diag))?;
            log::info!("converged after {} iterations", diag.iterations);
            Ok(())
        }
        Err(Error::MaxIterationsExceeded { iterations, last_distance, diagnostics }) => {
            write(&out.join("diagnostics.json"), &to_json(&RunDiagnostics::from(*diagnostics)))?;
            Err(Failure(
                EXIT_SOLVER,
                format!("no convergence after {iterations} Picard iterations (last distance {last_distance:e})"),
            ))
        }
        Err(e) => Err(Failure::solver(e)),
    }
}

fn cmd_verify_inversion(config: &Path, out: &Path) -> Outcome {
    let (text, base) = read_config(config)?;
    let cfg = InversionConfig::from_toml(&text).map_err(Failure::config)?;
    let setup = cfg.build(&base).map_err(Failure::config)?;
    let report = verify_inversion(
        &setup.spec_a,
        &setup.spec_b,
        &setup.mu_flow,
        &setup.nu_flow,
        &setup.mu0,
        &setup.f,
        setup.s,
        &setup.options,
    )
    .map_err(Failure::solver)?;
    write(out, &to_json(&report))?;
    println!("lhs = {:.12e}, rhs = {:.12e}, rel_gap = {:.3e}", report.lhs, report.rhs, report.rel_gap);
    if report.rel_gap > setup.threshold {
        return Err(Failure(
            EXIT_THRESHOLD,
            format!("rel_gap {:.3e} exceeds threshold {:.3e}", report.rel_gap, setup.threshold),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct Fit {
    alpha: f64,
    slope: f64,
    intercept: f64,
}

fn cmd_contraction(config: &Path, out: &Path) -> Outcome {
    let (text, base) = read_config(config)?;
    let cfg = ContractionConfig::from_toml(&text).map_err(Failure::config)?;
    let studies = cfg.build(&base).map_err(Failure::config)?;
    let mut table = String::from("T,alpha,rate\n");
    let mut fits = Vec::new();
    for study in &studies {
        let est = estimate_contraction(study).map_err(Failure::solver)?;
        for (t, r) in est.horizons.iter().zip(&est.rates) {
            table.push_str(&format!("{t:?},{:?},{r:?}\n", est.alpha));
        }
        if let (Some(slope), Some(intercept)) = (est.slope, est.intercept) {
            println!("alpha = {}: slope {slope:.4}", est.alpha);
            fits.push(Fit { alpha: est.alpha, slope, intercept });
        } else {
            println!("alpha = {}: fewer than two positive rates, no fit", est.alpha);
        }
    }
    write(out, &table)?;
    write(&out.with_extension("json"), &to_json(&serde_json::json!({ "fits": fits })))
}

fn cmd_metric(a: &Path, b: &Path, alpha: f64, kind: Kind) -> Outcome {
    let load = |p: &Path| read_measure(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())));
    let (ma, mb) = (load(a)?, load(b)?);
    let (ea, eb) = (ma.to_empirical(), mb.to_empirical());
    let value = match kind {
        Kind::Bl => metric_bl_alpha(&ea, &eb, alpha),
        Kind::W => metric_w_alpha(&ea, &eb, alpha),
    }
    .map_err(Failure::config)?;
    println!("{}", significant(value, 12));
    Ok(())
}

/// `value` rounded to `digits` significant digits, without exponent when
/// the magnitude allows.
fn significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let mag = value.abs().log10().floor() as i32;
    if (-5..digits as i32).contains(&mag) {
        let decimals = (digits as i32 - 1 - mag).max(0) as usize;
        format!("{value:.decimals$}")
    } else {
        format!("{value:.prec$e}", prec = digits - 1)
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("MKV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("MKV_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Failure::config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|()| match &cli.command {
        Command::Run { config, out, seed } => cmd_run(config, out, *seed),
        Command::VerifyInversion { config, out } => cmd_verify_inversion(config, out),
        Command::Contraction { config, out } => cmd_contraction(config, out),
        Command::Metric { a, b, alpha, kind } => cmd_metric(a, b, *alpha, *kind),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
