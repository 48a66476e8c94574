//! Scan pipeline: beta table, locking, staircase, estimators, flatness, probes.

use crate::cache::{DiskCache, TOOL_VERSION};
use crate::config::{FlatnessTarget, ProbeTarget, ScanConfig};
use crate::export::{self, num, opt, Csv};
use crate::CliError;
use serde::Serialize;
use staircase_core::flatness::{flatness_curve, FlatnessCurve, FlatnessOptions};
use staircase_core::staircase::*;
use staircase_core::variational::{BetaEngine, SolverOptions};
use staircase_core::{GeneratingModel, Harmonic};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// Output files held in memory until the whole run has succeeded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bundle {
    pub files: BTreeMap<String, String>,
}

impl Bundle {
    pub fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.insert(name.into(), content);
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (name, content) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub family: &'static str,
    pub k: f64,
    pub a: f64,
    pub harmonics: Vec<Harmonic>,
    pub interaction: Vec<Harmonic>,
    pub hash: String,
}

impl From<&GeneratingModel> for ModelInfo {
    fn from(m: &GeneratingModel) -> Self {
        ModelInfo {
            family: m.family().as_str(),
            k: m.coupling(),
            a: m.elastic(),
            harmonics: m.harmonics().to_vec(),
            interaction: m.interaction().to_vec(),
            hash: m.hash().to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<R: Serialize> {
    pub tool_version: &'static str,
    pub model: ModelInfo,
    pub config_digest: String,
    pub results: R,
}

impl<R: Serialize> Report<R> {
    pub fn new(model: &GeneratingModel, config_digest: &str, results: R) -> Self {
        Report { tool_version: TOOL_VERSION, model: model.into(), config_digest: config_digest.into(), results }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub stage: &'static str,
    pub p: Option<i64>,
    pub q: Option<i64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockedFraction {
    #[serde(rename = "Q")]
    pub q: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub kind: &'static str,
    pub nu: Option<f64>,
    pub theta: Option<f64>,
    #[serde(rename = "Q")]
    pub q: i64,
    pub value: f64,
}

/// The JSON fit record of one flatness curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRecord {
    pub p: i64,
    pub q: i64,
    pub c_plus: f64,
    #[serde(rename = "C_fit")]
    pub c_fit: Option<f64>,
    pub lambda_fit: Option<f64>,
    pub lambda_monodromy: f64,
    pub verdict: String,
}

impl From<&FlatnessCurve> for FitRecord {
    fn from(c: &FlatnessCurve) -> Self {
        FitRecord {
            p: c.p,
            q: c.q,
            c_plus: c.c_plus,
            c_fit: c.fit.as_ref().map(|f| f.c_fit),
            lambda_fit: c.fit.as_ref().map(|f| f.lambda_fit),
            lambda_monodromy: c.lambda_monodromy,
            verdict: serde_json::to_value(c.decay).unwrap().as_str().unwrap_or_default().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessSummary {
    #[serde(flatten)]
    pub fit: FitRecord,
    pub bound_verdict: bool,
    pub c_holdout: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub cf: Vec<u64>,
    pub convexity: Option<ConvexityProbe>,
    pub unlocked: AcProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResults {
    pub q_max: i64,
    pub h_range: [f64; 2],
    pub c_range: [f64; 2],
    pub table_size: usize,
    pub convexity_verified: bool,
    pub failures: Vec<FailureRecord>,
    pub locking_intervals: usize,
    pub locked_fraction: Vec<LockedFraction>,
    pub estimators: Vec<EstimatorRow>,
    pub flatness: Vec<FlatnessSummary>,
    pub probes: Vec<ProbeResult>,
}

/// Which stages of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    /// Table, locking and probes only.
    Probes,
}

pub fn solver_options(seed: u64) -> SolverOptions {
    SolverOptions { seed, ..Default::default() }
}

pub fn engine(model: GeneratingModel, seed: u64, cache: Option<Arc<DiskCache>>) -> BetaEngine {
    let e = BetaEngine::new(model, solver_options(seed));
    match cache {
        Some(c) => e.with_store(c),
        None => e,
    }
}

/// Runs `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn beta_csv(table: &BetaTable) -> Csv {
    let mut csv = Csv::new(&["p", "q", "rho", "beta", "c_minus", "c_plus", "bracket_width"]);
    for e in &table.entries {
        csv.push(vec![
            e.p.to_string(),
            e.q.to_string(),
            num(e.rho),
            num(e.beta),
            opt(e.c_minus),
            opt(e.c_plus),
            opt(e.bracket_width),
        ]);
    }
    csv
}

pub fn locking_csv(intervals: &[LockingInterval]) -> Csv {
    let mut csv = Csv::new(&["p", "q", "c_minus", "c_plus", "width"]);
    for i in intervals {
        csv.push(vec![i.p.to_string(), i.q.to_string(), num(i.c_minus), num(i.c_plus), num(i.width())]);
    }
    csv
}

pub fn staircase_csv(samples: &[AlphaSample]) -> Csv {
    let mut csv = Csv::new(&["c", "d_alpha"]);
    for s in samples {
        csv.push(vec![num(s.c), num(s.rho)]);
    }
    csv
}

pub fn estimators_csv(rows: &[EstimatorRow]) -> Csv {
    let mut csv = Csv::new(&["kind", "nu", "theta", "Q", "value"]);
    for r in rows {
        csv.push(vec![r.kind.to_string(), opt(r.nu), opt(r.theta), r.q.to_string(), num(r.value)]);
    }
    csv
}

pub fn flatness_csv(c: &FlatnessCurve) -> Csv {
    let mut csv = Csv::new(&["T", "delta", "u", "zeta_upper", "bound_value"]);
    for s in &c.samples {
        csv.push(vec![s.t.to_string(), num(s.delta), num(s.u), opt(s.zeta_upper), opt(s.bound_value)]);
    }
    csv
}

pub fn flatness_options(t: &FlatnessTarget) -> FlatnessOptions {
    FlatnessOptions { t_grid: t.t_grid.clone(), loops: t.loops, ..Default::default() }
}

/// Default cohomology window: between the plateaus of the two end rationals.
fn c_window(cfg: &ScanConfig, table: &BetaTable) -> Result<(f64, f64), CliError> {
    if let (Some(a), Some(b)) = (cfg.scan.c_lo, cfg.scan.c_hi) {
        return Ok((a, b));
    }
    let (first, last) = match (table.entries.first(), table.entries.last()) {
        (Some(f), Some(l)) if table.len() > 1 => (f, l),
        _ => return Err(staircase_core::Error::InsufficientSamples { needed: 2, found: table.len() }.into()),
    };
    match (first.c_plus, last.c_minus) {
        (Some(a), Some(b)) if a < b => Ok((a, b)),
        _ => Err(staircase_core::Error::InvalidInput(format!(
            "no cohomology window between {}/{} and {}/{}",
            first.p, first.q, last.p, last.q
        ))
        .into()),
    }
}

fn probe(engine: &BetaEngine, iv: &[LockingInterval], samples: &[AlphaSample], t: &ProbeTarget) -> ProbeResult {
    ProbeResult {
        cf: t.cf.clone(),
        convexity: convexity_probe(engine, &t.cf, t.window, t.cap).ok(),
        unlocked: ac_part_probe(iv, samples, t.rho_lo, t.rho_hi),
    }
}

pub fn run_scan(
    cfg: &ScanConfig,
    model: &GeneratingModel,
    config_digest: &str,
    cache: Option<Arc<DiskCache>>,
    mode: Mode,
) -> Result<Bundle, CliError> {
    let engine = engine(model.clone(), cfg.scan.seed, cache);
    with_workers(cfg.scan.workers, || scan_body(cfg, &engine, model, config_digest, mode))?
}

fn scan_body(
    cfg: &ScanConfig,
    engine: &BetaEngine,
    model: &GeneratingModel,
    config_digest: &str,
    mode: Mode,
) -> Result<Bundle, CliError> {
    let s = &cfg.scan;
    let mut failures = Vec::new();
    let keys = farey_enumerate(s.q_max, s.h_lo, s.h_hi);
    let (table, failed) = BetaTable::build(engine, &keys, Some(DepthPolicy::default()));
    for f in failed {
        failures.push(FailureRecord { stage: "beta", p: Some(f.p), q: Some(f.q), error: f.error.to_string() });
    }
    let (c1, c2) = c_window(cfg, &table)?;
    let intervals = locking_intervals(&table, s.q_max, c1, c2)?;
    let locked_fraction: Vec<LockedFraction> = dyadic_ladder(s.q_max)
        .into_iter()
        .map(|q| Ok(LockedFraction { q, value: completeness_measure(&locking_intervals(&table, q, c1, c2)?, c1, c2) }))
        .collect::<Result<_, CliError>>()?;
    let samples = legendre(&table, &uniform_grid(c1, c2, s.staircase_points))?;

    let mut estimators: Vec<EstimatorRow> = locked_fraction
        .iter()
        .map(|l| EstimatorRow { kind: "locked_fraction", nu: None, theta: None, q: l.q, value: l.value })
        .collect();
    let mut flatness = Vec::new();
    let mut bundle = Bundle::default();
    if mode == Mode::Full {
        let e = &cfg.estimators;
        let eo = EstimatorOptions { nu: e.nu, real_cap: e.real_cap, ..Default::default() };
        for q in cfg.estimator_levels() {
            match flatness_terms(engine, q, &eo) {
                Ok(terms) => {
                    estimators.push(EstimatorRow {
                        kind: "variation",
                        nu: Some(e.nu),
                        theta: None,
                        q,
                        value: variation_from_terms(&terms),
                    });
                    for &theta in &e.thetas {
                        estimators.push(EstimatorRow {
                            kind: "hausdorff",
                            nu: Some(e.nu),
                            theta: Some(theta),
                            q,
                            value: hausdorff_from_terms(&terms, theta),
                        });
                    }
                }
                Err(err) => failures.push(FailureRecord { stage: "estimators", p: None, q: Some(q), error: err.to_string() }),
            }
        }
        for t in &cfg.flatness {
            match flatness_curve(engine, t.p, t.q, &flatness_options(t)) {
                Ok(c) => {
                    bundle.add(format!("flatness_{}_{}.csv", t.p, t.q), flatness_csv(&c).render());
                    let fit = FitRecord::from(&c);
                    bundle.add(format!("flatness_{}_{}.json", t.p, t.q), export::to_json(&fit));
                    flatness.push(FlatnessSummary { fit, bound_verdict: c.bound_verdict, c_holdout: c.c_holdout });
                }
                Err(err) => {
                    failures.push(FailureRecord { stage: "flatness", p: Some(t.p), q: Some(t.q), error: err.to_string() })
                }
            }
        }
        bundle.add("estimators.csv", estimators_csv(&estimators).render());
    }
    let probes: Vec<ProbeResult> = cfg.probe.iter().map(|t| probe(engine, &intervals, &samples, t)).collect();

    bundle.add("beta.csv", beta_csv(&table).render());
    bundle.add("locking.csv", locking_csv(&intervals).render());
    bundle.add("staircase.csv", staircase_csv(&samples).render());
    let results = ScanResults {
        q_max: s.q_max,
        h_range: [s.h_lo, s.h_hi],
        c_range: [c1, c2],
        table_size: table.len(),
        convexity_verified: table.convexity_verified,
        failures,
        locking_intervals: intervals.len(),
        locked_fraction,
        estimators,
        flatness,
        probes,
    };
    bundle.add("report.json", export::to_json(&Report::new(model, config_digest, results)));
    Ok(bundle)
}
