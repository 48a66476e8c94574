use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use staircase_core::flatness::{c0_estimate, flatness_curve, FlatnessOptions};
use staircase_core::hyperbolicity::{monodromy, pn_profile};
use staircase_core::staircase::DepthPolicy;
use staircase_core::GeneratingModel;
use staircase_lab::cache::DiskCache;
use staircase_lab::config::{self, ScanConfig};
use staircase_lab::export::{self, num, Csv};
use staircase_lab::scan::{self, Bundle, FitRecord, Mode, Report};
use staircase_lab::CliError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "staircase-lab", version, about = "Devil's staircase experiments for exact twist maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Model definition file; overrides the model of a scan config.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Frenkel-Kontorova coupling, used when no model file is given.
    #[arg(short = 'k', long, global = true)]
    coupling: Option<f64>,
    #[arg(long, global = true, env = "STAIRCASE_LAB_CACHE")]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Copy)]
struct Rational {
    #[arg(short, allow_negative_numbers = true)]
    p: i64,
    #[arg(short)]
    q: i64,
}

#[derive(Subcommand)]
enum Command {
    /// Full staircase scan described by a config file.
    Scan {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// beta(p/q) and its minimizer.
    Beta {
        #[command(flatten)]
        r: Rational,
        #[command(flatten)]
        common: Common,
    },
    /// Flatness curve u(delta) to the right of p/q.
    Flatness {
        #[command(flatten)]
        r: Rational,
        /// Truncation half-lengths T.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
        t_grid: Vec<usize>,
        /// Skip the loop construction.
        #[arg(long)]
        no_loops: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Monodromy, Lyapunov exponent, phonon gap, barrier and tail prefactor.
    Hyperbolicity {
        #[command(flatten)]
        r: Rational,
        #[command(flatten)]
        common: Common,
    },
    /// Peierls-Nabarro energy profile and barrier.
    PnBarrier {
        #[command(flatten)]
        r: Rational,
        /// Number of constraint values s in [0, 1).
        #[arg(long, default_value_t = 64)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Table, locking intervals and KAM-regime probes from a config file.
    ProbeKam {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn model_from(common: &Common) -> Result<GeneratingModel, CliError> {
    match (&common.model, common.coupling) {
        (Some(_), Some(_)) => Err(CliError::Config("give either --model or --coupling, not both".into())),
        (Some(path), None) => config::load_model_file(path),
        (None, Some(k)) if k.is_finite() && k >= 0.0 => Ok(GeneratingModel::frenkel_kontorova(k)),
        (None, Some(k)) => Err(CliError::Config(format!("coupling must be finite and >= 0, got {k}"))),
        (None, None) => Err(CliError::Config("a model is required: --model <file> or --coupling <k>".into())),
    }
}

fn cache_from(dir: Option<&Path>, seed: u64) -> Option<Arc<DiskCache>> {
    dir.map(|d| Arc::new(DiskCache::new(d, scan::solver_options(seed))))
}

fn digest_of(parts: &[&str]) -> String {
    config::digest(&parts.join("\n"))
}

fn emit(bundle: &Bundle, out_dir: Option<&Path>, stdout: &str) -> Result<(), CliError> {
    if let Some(dir) = out_dir {
        bundle.write_to(dir)?;
    }
    print!("{stdout}");
    Ok(())
}

fn run_config(path: &Path, common: &Common, mode: Mode) -> Result<(), CliError> {
    let (mut cfg, digest) = ScanConfig::load(path)?;
    let (model, digest) = match &common.model {
        Some(m) => {
            let text = std::fs::read_to_string(m).map_err(|e| CliError::Config(format!("{}: {e}", m.display())))?;
            (config::load_model_file(m)?, digest_of(&[&digest, &config::digest(&text)]))
        }
        None if common.coupling.is_some() => (model_from(common)?, digest_of(&[&digest, &format!("k={:?}", common.coupling)])),
        None => (cfg.build_model()?, digest),
    };
    if let Some(w) = common.workers {
        cfg.scan.workers = w.max(1);
    }
    if let Some(s) = common.seed {
        cfg.scan.seed = s;
    }
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| cfg.scan.out_dir.clone())
        .ok_or_else(|| CliError::Config("an output directory is required (--out-dir or scan.out_dir)".into()))?;
    let cache_dir = common.cache_dir.clone().or_else(|| cfg.scan.cache_dir.clone());
    let cache = cache_from(cache_dir.as_deref(), cfg.scan.seed);
    let bundle = scan::run_scan(&cfg, &model, &digest, cache, mode)?;
    bundle.write_to(&out_dir)?;
    eprintln!("wrote {} files to {}", bundle.files.len(), out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct BetaResult {
    p: i64,
    q: i64,
    beta: f64,
    positions: Vec<f64>,
    action_total: f64,
    residual_sup: f64,
    certified_minimal: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scan { config, common } => run_config(&config, &common, Mode::Full),
        Command::ProbeKam { config, common } => run_config(&config, &common, Mode::Probes),
        Command::Beta { r, common } => {
            let model = model_from(&common)?;
            let seed = common.seed.unwrap_or(scan::solver_options(0).seed);
            let engine = scan::engine(model.clone(), seed, cache_from(common.cache_dir.as_deref(), seed));
            let s = scan::with_workers(common.workers.unwrap_or(1), || engine.sample(r.p, r.q))??;
            let c = &s.config;
            let res = BetaResult {
                p: s.p,
                q: s.q,
                beta: s.value,
                positions: c.positions.clone(),
                action_total: c.action_total,
                residual_sup: c.residual_sup,
                certified_minimal: c.is_certified_minimal,
            };
            let mut csv = Csv::new(&["p", "q", "rho", "beta", "c_minus", "c_plus", "bracket_width"]);
            csv.push(vec![s.p.to_string(), s.q.to_string(), num(c.rho()), num(s.value), String::new(), String::new(), String::new()]);
            let digest = digest_of(&["beta", &r.p.to_string(), &r.q.to_string()]);
            let report = export::to_json(&Report::new(&model, &digest, &res));
            let mut b = Bundle::default();
            b.add("beta.csv", csv.render());
            b.add("report.json", report.clone());
            emit(&b, common.out_dir.as_deref(), &report)
        }
        Command::Flatness { r, t_grid, no_loops, common } => {
            if t_grid.is_empty() || t_grid.contains(&0) {
                return Err(CliError::Config("--t-grid needs positive integers".into()));
            }
            let model = model_from(&common)?;
            let seed = common.seed.unwrap_or(scan::solver_options(0).seed);
            let engine = scan::engine(model, seed, cache_from(common.cache_dir.as_deref(), seed));
            let fo = FlatnessOptions { t_grid, loops: !no_loops, depth: DepthPolicy::default(), ..Default::default() };
            let c = scan::with_workers(common.workers.unwrap_or(1), || flatness_curve(&engine, r.p, r.q, &fo))??;
            let fit = export::to_json(&FitRecord::from(&c));
            let mut b = Bundle::default();
            b.add(format!("flatness_{}_{}.csv", r.p, r.q), scan::flatness_csv(&c).render());
            b.add(format!("flatness_{}_{}.json", r.p, r.q), fit.clone());
            emit(&b, common.out_dir.as_deref(), &fit)
        }
        Command::Hyperbolicity { r, common } => {
            let model = model_from(&common)?;
            let seed = common.seed.unwrap_or(scan::solver_options(0).seed);
            let opts = scan::solver_options(seed);
            let engine = scan::engine(model.clone(), seed, cache_from(common.cache_dir.as_deref(), seed));
            let report = scan::with_workers(common.workers.unwrap_or(1), || -> Result<_, CliError> {
                let s = engine.sample(r.p, r.q)?;
                let mut h = monodromy(&model, &s.config)?;
                h.pn_barrier = Some(staircase_core::hyperbolicity::pn_barrier(&model, r.p, r.q, 64, &opts)?);
                h.c0_estimate = match c0_estimate(&model, r.p, r.q, &opts) {
                    Ok(c) => c,
                    Err(staircase_core::Error::DegenerateFamily { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                Ok(h)
            })??;
            let digest = digest_of(&["hyperbolicity", &r.p.to_string(), &r.q.to_string()]);
            let text = export::to_json(&Report::new(&model, &digest, &report));
            let mut b = Bundle::default();
            b.add(format!("hyperbolicity_{}_{}.json", r.p, r.q), text.clone());
            emit(&b, common.out_dir.as_deref(), &text)
        }
        Command::PnBarrier { r, points, common } => {
            if points < 2 {
                return Err(CliError::Config("--points must be >= 2".into()));
            }
            let model = model_from(&common)?;
            let opts = scan::solver_options(common.seed.unwrap_or(scan::solver_options(0).seed));
            let e = scan::with_workers(common.workers.unwrap_or(1), || pn_profile(&model, r.p, r.q, points, &opts))??;
            let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut csv = Csv::new(&["s", "energy"]);
            for (j, v) in e.iter().enumerate() {
                csv.push(vec![num(j as f64 / points as f64), num(*v)]);
            }
            let mut b = Bundle::default();
            b.add(format!("pn_{}_{}.csv", r.p, r.q), csv.render());
            emit(&b, common.out_dir.as_deref(), &format!("{}\n", num(hi - lo)))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
