//! Batch experiment runner behind the `roughkit` binary.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    degeneracy_demo, desk_problem, dpp_check, driver_continuity_scan, hjb_residual, interpolation_at,
    trading_value, value_table, ControlGrid, DESK_INSTANCES,
};
use crate::error::Error;
use crate::filtering::{
    kalman_bucy, robust_report, simulate_pair, Coefficients, LinearGaussianModel, PenaltyConfig,
};
use crate::io::{fmt_f64, read_json, read_path_csv, sci_vec, signature_to_json, Sci};
use crate::paths::SampledPath;
use crate::rough::{brownian_path, RoughPath};
use crate::signature::signature;
use crate::stopping::{price_american_option, BachelierModel, GeometricBrownian, McConfig, PathModel};

pub const PVAR_SCHEMA: &str = "pvar-v1";
pub const PRICE_SCHEMA: &str = "price-v1";
pub const FILTER_SCHEMA: &str = "filter-v1";
pub const CONTROL_SCHEMA: &str = "control-v1";

/// Exit status for usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for numerical divergence.
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Lib(Error::Argument(_)) => EXIT_USAGE,
            CliError::Lib(Error::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Lib(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(Error::Json(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "roughkit", version, about = "Rough-path experiments: signatures, p-variation, stopping, filtering, control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Truncated signature of a CSV path.
    Sig {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        level: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// p-variation of a CSV path.
    Pvar {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: f64,
    },
    /// American option pricing with signature stopping policies.
    Price(RunArgs),
    /// Kalman-Bucy filter and robust report on a simulated observation.
    Filter(RunArgs),
    /// Control experiments on named instances.
    ControlLab(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("ROUGHKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return usage(format!("ROUGHKIT_THREADS must be a positive integer, got `{raw}`")),
    };
    // A pool may already exist when running in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Sig { input, level, out } => cmd_sig(input, *level, out.as_deref()),
        Command::Pvar { input, p } => cmd_pvar(input, *p),
        Command::Price(a) => cmd_price(&load_config(a)?, a.seed, &a.out),
        Command::Filter(a) => cmd_filter(&load_config(a)?, a.seed, &a.out),
        Command::ControlLab(a) => cmd_control_lab(&load_config(a)?, a.seed, &a.out),
    }
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(a: &RunArgs) -> CliResult<T> {
    match &a.config {
        Some(path) => Ok(read_json(BufReader::new(File::open(path)?))?),
        None => Ok(T::default()),
    }
}

fn read_path(input: &Path) -> CliResult<SampledPath> {
    Ok(read_path_csv(BufReader::new(File::open(input)?))?)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, doc: &T) -> CliResult<()> {
    write_text(path, &serde_json::to_string_pretty(doc)?)
}

/// CSV table whose first line is a `# <schema>` stamp.
fn write_table(path: &Path, schema: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut text = format!("# {schema}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: &[&str]| w.write_record(rec).map_err(|e| std::io::Error::other(e.to_string()));
    write(&mut w, header)?;
    for r in rows {
        write(&mut w, &r.iter().map(String::as_str).collect::<Vec<_>>())?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    text.push_str(&String::from_utf8(bytes).expect("csv output is UTF-8"));
    write_text(path, &text)
}

/// Writes to stdout; a closed downstream pipe is not an error.
fn print_line(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn cmd_sig(input: &Path, level: usize, out: Option<&Path>) -> CliResult<()> {
    let path = read_path(input)?;
    let sig = signature(&path, level, path.time(0), path.horizon())?;
    let doc = signature_to_json(&sig)?;
    match out {
        Some(dir) => write_text(&dir.join("signature.json"), &doc),
        None => print_line(&doc),
    }
}

#[derive(Serialize)]
struct PvarDoc {
    version: &'static str,
    p: Sci,
    value: Sci,
}

fn cmd_pvar(input: &Path, p: f64) -> CliResult<()> {
    if !(p >= 1.0) {
        return usage(format!("p must be at least 1, got {p}"));
    }
    let path = read_path(input)?;
    let value = path.p_variation(p)?;
    print_line(&serde_json::to_string(&PvarDoc { version: PVAR_SCHEMA, p: Sci(p), value: Sci(value) })?)
}

/// Config for `price`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceConfig {
    /// `put` or `call`.
    pub payoff: String,
    pub strike: f64,
    pub rate: f64,
    /// `gbm` or `bachelier`.
    pub model: String,
    pub s0: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub mc: McConfig,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self {
            payoff: "put".into(),
            strike: 20.0,
            rate: 0.06,
            model: "gbm".into(),
            s0: 20.0,
            sigma: 0.2,
            horizon: 1.0,
            mc: McConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct ConfigEcho {
    payoff: String,
    model: String,
    strike: Sci,
    rate: Sci,
    s0: Sci,
    sigma: Sci,
    horizon: Sci,
    n_steps: usize,
    level: usize,
    budget: Sci,
}

#[derive(Serialize)]
struct PolicyTerm {
    word: String,
    coefficient: Sci,
}

#[derive(Serialize)]
struct PriceDoc {
    version: &'static str,
    config: ConfigEcho,
    seed: u64,
    n_paths: usize,
    price: Sci,
    std_error: Sci,
    in_sample: Sci,
    evaluations: usize,
    budget_exhausted: bool,
    policy: Vec<PolicyTerm>,
}

fn cmd_price(cfg: &PriceConfig, seed: u64, out: &Path) -> CliResult<()> {
    let put = match cfg.payoff.as_str() {
        "put" => true,
        "call" => false,
        other => return usage(format!("unknown payoff kind `{other}`; expected `put` or `call`")),
    };
    let model: Box<dyn PathModel> = match cfg.model.as_str() {
        "gbm" => Box::new(GeometricBrownian { s0: cfg.s0, rate: cfg.rate, sigma: cfg.sigma, horizon: cfg.horizon }),
        "bachelier" => Box::new(BachelierModel { s0: cfg.s0, sigma: cfg.sigma, horizon: cfg.horizon }),
        other => return usage(format!("unknown model `{other}`; expected `gbm` or `bachelier`")),
    };
    let mc = McConfig { seed, ..cfg.mc.clone() };
    let res = price_american_option(cfg.strike, cfg.rate, put, model.as_ref(), &mc)?;
    let doc = PriceDoc {
        version: PRICE_SCHEMA,
        config: ConfigEcho {
            payoff: cfg.payoff.clone(),
            model: cfg.model.clone(),
            strike: Sci(cfg.strike),
            rate: Sci(cfg.rate),
            s0: Sci(cfg.s0),
            sigma: Sci(cfg.sigma),
            horizon: Sci(cfg.horizon),
            n_steps: mc.n_steps,
            level: mc.level,
            budget: Sci(mc.budget),
        },
        seed,
        n_paths: mc.n_paths,
        price: Sci(res.price),
        std_error: Sci(res.std_error),
        in_sample: Sci(res.in_sample.mean),
        evaluations: res.optimization.evaluations,
        budget_exhausted: res.optimization.budget_exhausted,
        policy: res
            .optimization
            .policy
            .functional()
            .terms()
            .map(|(w, c)| PolicyTerm { word: w.to_string(), coefficient: Sci(c) })
            .collect(),
    };
    write_json(&out.join("price.json"), &doc)?;
    let rows: Vec<Vec<String>> = res
        .optimization
        .trace
        .iter()
        .map(|&(i, v)| vec![i.to_string(), fmt_f64(v)])
        .collect();
    write_table(&out.join("price_trace.csv"), PRICE_SCHEMA, &["evaluation", "best_value"], &rows)
}

/// Config for `filter`: a scalar signal observed with candidate observation
/// gains `c · c_scales`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub alpha: f64,
    pub sigma: f64,
    pub c: f64,
    pub rho: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub c_scales: Vec<f64>,
    pub k1: f64,
    pub k2: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha: -1.0,
            sigma: 4.0,
            c: 2.0,
            rho: 0.3,
            mu0: 0.5,
            sigma0: 1.0,
            horizon: 5.0,
            n_steps: 4096,
            c_scales: vec![0.5, 1.0, 2.0],
            k1: 1.0,
            k2: 1.0,
        }
    }
}

#[derive(Serialize)]
struct FilterDoc {
    version: &'static str,
    seed: u64,
    horizon: Sci,
    n_steps: usize,
    c_scales: Vec<Sci>,
    estimate: Sci,
    ci_lo: Sci,
    ci_hi: Sci,
    best_candidate: usize,
    /// `null` marks an inadmissible candidate.
    penalties: Vec<Option<Sci>>,
    clamped_steps: usize,
}

fn cmd_filter(cfg: &FilterConfig, seed: u64, out: &Path) -> CliResult<()> {
    if cfg.c_scales.is_empty() {
        return usage("c_scales must list at least one candidate");
    }
    let model = |c: f64| -> crate::error::Result<LinearGaussianModel> {
        let coeffs = Coefficients::new(
            DMatrix::from_element(1, 1, cfg.alpha),
            DMatrix::from_element(1, 1, cfg.sigma),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, cfg.rho),
        )?;
        LinearGaussianModel::scalar(coeffs, cfg.mu0, cfg.sigma0)
    };
    let truth = model(cfg.c)?;
    let (_, obs) = simulate_pair(&truth, seed, cfg.n_steps, cfg.horizon)?;
    let states = kalman_bucy(&truth, &obs)?;
    let rows: Vec<Vec<String>> = states
        .iter()
        .map(|s| {
            let mut r = vec![fmt_f64(s.t)];
            r.extend(s.q.iter().map(|&x| fmt_f64(x)));
            r.extend(s.r.iter().map(|&x| fmt_f64(x)));
            r
        })
        .collect();
    write_table(&out.join("filter.csv"), FILTER_SCHEMA, &["t", "q1", "R11"], &rows)?;

    let candidates = cfg.c_scales.iter().map(|s| model(s * cfg.c)).collect::<crate::error::Result<Vec<_>>>()?;
    let penalty = PenaltyConfig::new(cfg.k1, cfg.k2)?;
    let phi = |x: &[f64]| x[0];
    let report = robust_report(&phi, &candidates, &obs, &penalty, cfg.horizon)?;
    let doc = FilterDoc {
        version: FILTER_SCHEMA,
        seed,
        horizon: Sci(cfg.horizon),
        n_steps: cfg.n_steps,
        c_scales: sci_vec(&cfg.c_scales),
        estimate: Sci(report.estimate),
        ci_lo: Sci(report.ci_lo),
        ci_hi: Sci(report.ci_hi),
        best_candidate: report.best_candidate,
        penalties: report.penalties.iter().map(|&p| p.is_finite().then_some(Sci(p))).collect(),
        clamped_steps: states.iter().filter(|s| s.clamped).count(),
    };
    write_json(&out.join("filter.json"), &doc)
}

/// Config for `control-lab`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// `trading`, `line`, or one of the desk problems.
    pub instance: String,
    pub horizon: f64,
    /// Finest mesh as a power of two.
    pub log2_steps: u32,
    pub x0: f64,
    pub a0: f64,
    pub q_max: f64,
    pub eps_list: Vec<f64>,
    pub inventory_levels: usize,
    pub n_knots: usize,
    pub u_bounds: (f64, f64),
    pub u_levels: usize,
    pub p: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            instance: "trading".into(),
            horizon: 1.0,
            log2_steps: 10,
            x0: 0.0,
            a0: 0.0,
            q_max: 1.0,
            eps_list: vec![0.0, 0.1],
            inventory_levels: 3,
            n_knots: 2,
            u_bounds: (-1.0, 1.0),
            u_levels: 3,
            p: 2.5,
        }
    }
}

fn cmd_control_lab(cfg: &ControlConfig, seed: u64, out: &Path) -> CliResult<()> {
    if !(1..=14).contains(&cfg.log2_steps) {
        return usage("log2_steps must lie in 1..=14");
    }
    let n = 1usize << cfg.log2_steps;
    match cfg.instance.as_str() {
        "trading" => {
            let sample = brownian_path(seed, n, cfg.horizon, 1)?;
            let ns: Vec<usize> = (4.min(cfg.log2_steps)..=cfg.log2_steps).map(|k| 1usize << k).collect();
            let table = degeneracy_demo(&sample, &ns, cfg.q_max, cfg.x0, &cfg.eps_list, cfg.inventory_levels)?;
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| vec![r.n_steps.to_string(), fmt_f64(r.eps), fmt_f64(r.value), opt(r.closed_form), opt(r.bound)])
                .collect();
            write_table(&out.join("degeneracy.csv"), CONTROL_SCHEMA, &["n_steps", "eps", "value", "closed_form", "bound"], &rows)
        }
        "line" => {
            let eta = SampledPath::from_fn(cfg.horizon, n, 1, |t| vec![t])?;
            let rows = cfg
                .eps_list
                .iter()
                .map(|&eps| {
                    let v = trading_value(&eta, cfg.x0, cfg.q_max, cfg.a0, eps, 2.0, cfg.inventory_levels)?;
                    Ok(vec![fmt_f64(eps), fmt_f64(v), fmt_f64(cfg.x0 + cfg.q_max * cfg.horizon)])
                })
                .collect::<CliResult<Vec<_>>>()?;
            write_table(&out.join("line.csv"), CONTROL_SCHEMA, &["eps", "value", "closed_form"], &rows)
        }
        name if DESK_INSTANCES.contains(&name) => desk_lab(cfg, name, seed, n, out),
        other => usage(format!("unknown instance `{other}`; expected trading, line or one of {DESK_INSTANCES:?}")),
    }
}

fn desk_lab(cfg: &ControlConfig, name: &str, seed: u64, n: usize, out: &Path) -> CliResult<()> {
    let dim = if name == "planar" { 2 } else { 1 };
    let grid = ControlGrid::new(cfg.n_knots, vec![cfg.u_bounds], vec![cfg.u_levels])?;
    let (x, a) = ([cfg.x0], [cfg.a0]);

    let dpp_steps = 16.min(n);
    let coarse = brownian_path(seed, dpp_steps, cfg.horizon, dim)?;
    let problem = desk_problem(name, RoughPath::canonical_lift(&coarse))?;
    let mut rows = Vec::new();
    let mut rs: Vec<usize> = vec![0, dpp_steps];
    rs.extend(grid.knots(dpp_steps));
    rs.sort_unstable();
    rs.dedup();
    for r in rs {
        let rep = dpp_check(&problem, 0.0, coarse.time(r), &x, &a, &grid, 1e-12)?;
        rows.push(vec![fmt_f64(coarse.time(r)), fmt_f64(rep.lhs), fmt_f64(rep.rhs), fmt_f64(rep.gap)]);
    }
    write_table(&out.join("dpp.csv"), CONTROL_SCHEMA, &["r", "lhs", "rhs", "gap"], &rows)?;

    if dim == 1 {
        let lattice: Vec<Vec<f64>> = (0..cfg.u_levels.max(2))
            .map(|i| vec![cfg.u_bounds.0 + (cfg.u_bounds.1 - cfg.u_bounds.0) * i as f64 / (cfg.u_levels.max(2) - 1) as f64])
            .collect();
        let mut rows = Vec::new();
        for m in [8usize, 16, 32] {
            let eta = SampledPath::from_fn(cfg.horizon, m, 1, |t| vec![(std::f64::consts::PI * t).sin()])?;
            let smooth = desk_problem(name, RoughPath::canonical_lift(&eta))?;
            let table = value_table(&smooth, (-2.0, 2.0, 2 * m + 1), (-2.0, 2.0, 2 * m + 1), &lattice)?;
            let res = hjb_residual(&smooth, &table, &lattice)?;
            rows.push(vec![m.to_string(), fmt_f64(res.max_abs)]);
        }
        write_table(&out.join("hjb.csv"), CONTROL_SCHEMA, &["n_steps", "max_residual"], &rows)?;
    }

    let sample = brownian_path(seed, n, cfg.horizon, dim)?;
    let pairs: Vec<(usize, usize)> = (0..cfg.log2_steps).map(|k| (1usize << k, 1usize << (k + 1))).collect();
    let scan_problem = desk_problem(name, RoughPath::canonical_lift(&interpolation_at(&sample, 1)?).refine(sample.times())?)?;
    let scan = driver_continuity_scan(&scan_problem, &sample, &pairs, cfg.p, &x, &a, &grid)?;
    let rows: Vec<Vec<String>> = scan
        .rows
        .iter()
        .map(|r| vec![r.coarse.to_string(), r.fine.to_string(), fmt_f64(r.metric), fmt_f64(r.value_gap), fmt_f64(r.ratio)])
        .collect();
    write_table(&out.join("continuity.csv"), CONTROL_SCHEMA, &["coarse", "fine", "metric", "value_gap", "ratio"], &rows)
}
