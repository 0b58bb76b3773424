//! Command-line frontend: formula tables, simulation, Monte Carlo estimates, validation
//! suites and figure reproduction.

pub mod svg;

use crate::analytic::{
    effective_catastrophe_moments, extinction_lbdpc, mean_lbdpc, state_prob_lbdpc,
    tempered_first_visit_moments, tempered_lbdpc, var_lbdpc, LinearParams, LinearQuantity,
};
use crate::error::{invalid, Error, Result};
use crate::markov::{ModelSpec, TimeChange, Truncation};
use crate::mcstats::{estimate, map_paths, Estimate, Estimated, Model, Quantity};
use crate::mlfunc::SeriesControl;
use crate::simulate::{write_csv, SamplePath};
use crate::validation::{Suite, TABLE1, TABLE1_ALPHA, TABLE1_T, TABLE1_TOL};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use svg::{Chart, Series};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const SCHEMAS: &str = "\
Output schemas (CSV: one '#' metadata line, then a header row):
  moments      t,mean,variance[,mc_mean,mc_mean_se,mc_variance,mc_variance_se]
  extinction   t,extinction[,mc_extinction,mc_extinction_se]
  statedist    n,probability[,mc_probability,mc_probability_se]
  firstpassage quantity,mean,variance[,mc_mean,mc_mean_se,mc_variance,mc_variance_se]
  simulate     path_id,k,Y_k,state,kind
  estimate     quantity,value,stderr,ci95_lo,ci95_hi,n
  table1       row,lambda,mu,nu,mean,expected_mean,variance,expected_variance,pass
  validate     JSON lines {test_id,statistic,threshold,pass,seed,n}
  plot         SVG, or CSV series,x,y with --format csv

Config file: key = value lines using the flag names without dashes prefix
(alpha, theta, lambda, lambda0, mu, nu, m0, t, t-max, grid, n-max, paths, seed,
out, format, compare-mc). Command-line flags override the file.";

#[derive(Debug, Parser)]
#[command(name = "tcbd", version, about = "Time-changed birth-death processes with catastrophes", after_long_help = SCHEMAS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    Mean,
    Var,
    Extinction,
    Statedist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Mean for several α (λ=3, μ=1, ν=1).
    Fig2,
    /// Mean for several ν (α=0.5, λ=4, μ=1).
    Fig3,
    /// Sample paths at α=1 and α=0.5 (λ=15, μ=11, ν=2).
    Fig4,
    /// Sample paths at α=0.3 and α=0.8 (λ=10, μ=12, ν=3).
    Fig5,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Stability index α in (0, 1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Tempering θ ≥ 0 (0 = stable time change)
    #[arg(long)]
    pub theta: Option<f64>,
    /// Per-capita birth rate λ
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Immigration rate λ_0 (birth rate out of zero)
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Per-capita death rate μ
    #[arg(long)]
    pub mu: Option<f64>,
    /// Catastrophe rate ν
    #[arg(long)]
    pub nu: Option<f64>,
    /// Initial population
    #[arg(long)]
    pub m0: Option<u64>,
    /// Single evaluation time
    #[arg(long)]
    pub t: Option<f64>,
    /// End of the time grid or simulation horizon
    #[arg(long = "t-max")]
    pub t_max: Option<f64>,
    /// Number of grid points on [0, t-max]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Largest state reported by statedist
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,
    /// Number of Monte Carlo paths
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Append Monte Carlo columns
    #[arg(long = "compare-mc")]
    pub compare_mc: bool,
    /// key = value file with defaults for the flags above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean and variance on a time grid
    Moments(Common),
    /// Extinction probability on a time grid
    Extinction(Common),
    /// State probabilities at time t
    Statedist(Common),
    /// Tempered first-visit (λ_0 = 0) or effective-catastrophe (λ_0 > 0) moments
    Firstpassage(Common),
    /// Simulate sample paths
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Paths drawn with --format svg
        #[arg(long, default_value_t = 3)]
        show: usize,
    },
    /// Monte Carlo estimate at time t
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "mean")]
        quantity: QuantityArg,
    },
    /// Reference table of means and variances
    Table1(Common),
    /// Run validation suites; nonzero exit on failure
    Validate {
        /// Suite name or "all"
        #[arg(default_value = "all")]
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce a figure as SVG (or CSV)
    Plot {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        show: usize,
    },
}

/// Resolved parameters: flag, then config file, then default.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub theta: f64,
    pub lambda: f64,
    pub lambda0: f64,
    pub mu: f64,
    pub nu: f64,
    pub m0: u64,
    pub m0_given: bool,
    pub t: f64,
    pub t_max: f64,
    pub grid: usize,
    pub n_max: usize,
    pub paths: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub compare_mc: bool,
}

const KEYS: [&str; 16] = [
    "alpha", "theta", "lambda", "lambda0", "mu", "nu", "m0", "t", "t-max", "grid", "n-max",
    "paths", "seed", "out", "format", "compare-mc",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim().trim_start_matches("--").to_string();
        if !KEYS.contains(&k.as_str()) {
            return Err(invalid(format!("config line {}: unknown key {k:?}", i + 1)));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

fn pick<T: std::str::FromStr>(flag: Option<T>, file: &HashMap<String, String>, key: &str, default: T) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => s
            .parse()
            .map_err(|_| invalid(format!("config value {key} = {s:?} does not parse"))),
        None => Ok(default),
    }
}

impl Params {
    pub fn resolve(c: &Common) -> Result<Self> {
        let file = match &c.config {
            Some(p) => parse_config(&fs::read_to_string(p)?)?,
            None => HashMap::new(),
        };
        let format = match c.format {
            Some(f) => Some(f),
            None => match file.get("format") {
                Some(s) => Some(Format::from_str(s, true).map_err(|_| invalid(format!("format {s:?}")))?),
                None => None,
            },
        };
        let compare_mc = c.compare_mc || pick(None, &file, "compare-mc", false)?;
        let out = c.out.clone().or_else(|| file.get("out").map(PathBuf::from));
        let p = Params {
            alpha: pick(c.alpha, &file, "alpha", 0.5)?,
            theta: pick(c.theta, &file, "theta", 0.0)?,
            lambda: pick(c.lambda, &file, "lambda", 1.0)?,
            lambda0: pick(c.lambda0, &file, "lambda0", 0.0)?,
            mu: pick(c.mu, &file, "mu", 2.0)?,
            nu: pick(c.nu, &file, "nu", 0.5)?,
            m0: pick(c.m0, &file, "m0", 1)?,
            m0_given: c.m0.is_some() || file.contains_key("m0"),
            t: pick(c.t, &file, "t", 1.0)?,
            t_max: pick(c.t_max, &file, "t-max", 5.0)?,
            grid: pick(c.grid, &file, "grid", 101)?,
            n_max: pick(c.n_max, &file, "n-max", 20)?,
            paths: pick(c.paths, &file, "paths", 10_000)?,
            seed: pick(c.seed, &file, "seed", 42)?,
            out,
            format,
            compare_mc,
        };
        if p.grid < 2 || !(p.t_max > 0.0) || !p.t_max.is_finite() {
            return Err(invalid(format!("invalid grid: {} points on [0, {}]", p.grid, p.t_max)));
        }
        if !(p.t >= 0.0) || !p.t.is_finite() {
            return Err(invalid(format!("t = {}", p.t)));
        }
        Ok(p)
    }

    pub fn linear(&self) -> Result<LinearParams> {
        LinearParams::new(self.alpha, self.theta, self.lambda, self.mu, self.nu)
    }

    fn time_change(&self) -> TimeChange {
        if self.theta > 0.0 {
            TimeChange::InverseTempered {
                alpha: self.alpha,
                theta: self.theta,
            }
        } else {
            TimeChange::InverseStable { alpha: self.alpha }
        }
    }

    /// Simulation model: the linear simulator when λ_0 = 0, the general one otherwise.
    pub fn model(&self) -> Result<Model> {
        if self.lambda0 == 0.0 {
            Ok(Model::Linear(self.linear()?))
        } else {
            let tc = self.time_change();
            tc.validate()?;
            Ok(Model::General {
                spec: ModelSpec::linear_with_immigration(self.lambda0, self.lambda, self.mu, self.nu)?,
                tc,
                modified: false,
            })
        }
    }

    pub fn grid_points(&self) -> Vec<f64> {
        (0..self.grid)
            .map(|i| self.t_max * i as f64 / (self.grid - 1) as f64)
            .collect()
    }

    /// One-line parameter echo embedded in every output.
    pub fn echo(&self, command: &str) -> String {
        format!(
            "tcbd {VERSION} command={command} seed={} alpha={} theta={} lambda={} lambda0={} mu={} nu={} m0={} t={} t-max={} grid={} paths={}",
            self.seed, self.alpha, self.theta, self.lambda, self.lambda0, self.mu, self.nu,
            self.m0, self.t, self.t_max, self.grid, self.paths
        )
    }
}

/// Six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        let s = trim(format!("{:.*}", (5 - exp).max(0) as usize, x));
        // Rounding may carry into a new digit (e.g. 999999.5); fall through then.
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() <= 6 {
            return s;
        }
    }
    let s = format!("{x:.5e}");
    let (m, e) = s.split_once('e').expect("exponent");
    format!("{}e{e}", trim(m.to_string()))
}

/// A table of numbers with a metadata line, written as CSV or JSON.
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn render(&self, meta: &str, format: Format) -> Result<String> {
        match format {
            Format::Csv => {
                let mut s = format!("# {meta}\n{}\n", self.columns.join(","));
                for r in &self.rows {
                    let cells: Vec<String> = r
                        .iter()
                        .map(|v| match v {
                            Value::Number(n) => sig6(n.as_f64().unwrap_or(f64::NAN)),
                            Value::String(t) => t.clone(),
                            Value::Bool(b) => b.to_string(),
                            Value::Null => "NaN".into(),
                            other => other.to_string(),
                        })
                        .collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                Ok(s)
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        Value::Object(
                            self.columns
                                .iter()
                                .cloned()
                                .zip(r.iter().map(round6))
                                .collect(),
                        )
                    })
                    .collect();
                serde_json::to_string_pretty(&json!({ "meta": meta, "rows": rows }))
                    .map(|s| s + "\n")
                    .map_err(|e| Error::Numerical(e.to_string()))
            }
            Format::Svg => Err(invalid("this table has no SVG form")),
        }
    }
}

fn round6(v: &Value) -> Value {
    match v.as_f64() {
        Some(x) if v.is_f64() => sig6(x).parse::<f64>().map(|y| json!(y)).unwrap_or(Value::Null),
        _ => v.clone(),
    }
}

fn num(x: f64) -> Value {
    json!(x)
}

fn emit(p: &Params, text: &str) -> Result<()> {
    match &p.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn ctl() -> SeriesControl {
    SeriesControl::default()
}

fn analytic(p: &Params, q: LinearQuantity, t: f64) -> Result<f64> {
    if p.lambda0 != 0.0 {
        return Err(invalid("closed forms cover λ_0 = 0; use estimate for λ_0 > 0"));
    }
    let lp = p.linear()?;
    if p.m0 != 1 {
        return Err(invalid("closed forms start from one individual (m0 = 1)"));
    }
    if lp.theta > 0.0 {
        return tempered_lbdpc(&lp, q, t, &ctl());
    }
    match q {
        LinearQuantity::Mean => mean_lbdpc(&lp, t, &ctl()),
        LinearQuantity::Variance => var_lbdpc(&lp, t, &ctl()),
        LinearQuantity::Extinction => extinction_lbdpc(&lp, t, &ctl()),
        LinearQuantity::StateProb(0) => extinction_lbdpc(&lp, t, &ctl()),
        LinearQuantity::StateProb(n) => state_prob_lbdpc(&lp, n, t, &ctl()),
    }
}

/// States of `paths` simulated paths at every grid time.
fn states_on_grid(p: &Params, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let model = p.model()?;
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let per_path = map_paths(&model, p.m0, horizon, p.paths, p.seed, |path| {
        times
            .iter()
            .map(|&t| path.state_at(t).unwrap_or(path.initial) as f64)
            .collect::<Vec<f64>>()
    })?;
    Ok((0..times.len())
        .map(|j| per_path.iter().map(|v| v[j]).collect())
        .collect())
}

fn check_mc(p: &Params) -> Result<()> {
    if p.paths < crate::mcstats::MIN_PATHS {
        return Err(invalid(format!("--paths {} < {}", p.paths, crate::mcstats::MIN_PATHS)));
    }
    Ok(())
}

fn line_chart(title: &str, y_label: &str, series: Vec<Series>) -> Chart {
    Chart {
        title: title.into(),
        x_label: "t".into(),
        y_label: y_label.into(),
        series,
    }
}

fn cmd_moments(p: &Params) -> Result<String> {
    let times = p.grid_points();
    let mut table = Table::new(&["t", "mean", "variance"]);
    if p.compare_mc {
        table.columns.extend(["mc_mean", "mc_mean_se", "mc_variance", "mc_variance_se"].map(String::from));
    }
    let mc = if p.compare_mc {
        check_mc(p)?;
        Some(states_on_grid(p, &times)?)
    } else {
        None
    };
    let mut mean_pts = Vec::new();
    let mut mc_pts = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let m = analytic(p, LinearQuantity::Mean, t)?;
        let v = analytic(p, LinearQuantity::Variance, t)?;
        mean_pts.push((t, m));
        let mut row = vec![num(t), num(m), num(v)];
        if let Some(mc) = &mc {
            let e = Estimate::from_samples(&mc[j])?;
            let ev = Estimate::variance_from_samples(&mc[j])?;
            mc_pts.push((t, e.value));
            row.extend([num(e.value), num(e.stderr), num(ev.value), num(ev.stderr)]);
        }
        table.rows.push(row);
    }
    let meta = p.echo("moments");
    match p.format.unwrap_or(Format::Csv) {
        Format::Svg => {
            let mut series = vec![Series {
                label: "analytic".into(),
                points: mean_pts,
                step: false,
            }];
            if p.compare_mc {
                series.push(Series {
                    label: "Monte Carlo".into(),
                    points: mc_pts,
                    step: false,
                });
            }
            Ok(svg::render(&[line_chart("Expected population", "E N(t)", series)], &meta))
        }
        f => table.render(&meta, f),
    }
}

fn cmd_extinction(p: &Params) -> Result<String> {
    let times = p.grid_points();
    let mut table = Table::new(&["t", "extinction"]);
    if p.compare_mc {
        table.columns.extend(["mc_extinction", "mc_extinction_se"].map(String::from));
    }
    let mc = if p.compare_mc {
        check_mc(p)?;
        Some(states_on_grid(p, &times)?)
    } else {
        None
    };
    let mut pts = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let e = analytic(p, LinearQuantity::Extinction, t)?;
        pts.push((t, e));
        let mut row = vec![num(t), num(e)];
        if let Some(mc) = &mc {
            let zeros: Vec<f64> = mc[j].iter().map(|&s| if s == 0.0 { 1.0 } else { 0.0 }).collect();
            let est = Estimate::from_samples(&zeros)?;
            row.extend([num(est.value), num(est.stderr)]);
        }
        table.rows.push(row);
    }
    let meta = p.echo("extinction");
    match p.format.unwrap_or(Format::Csv) {
        Format::Svg => Ok(svg::render(
            &[line_chart(
                "Extinction probability",
                "P(N(t) = 0)",
                vec![Series {
                    label: "analytic".into(),
                    points: pts,
                    step: false,
                }],
            )],
            &meta,
        )),
        f => table.render(&meta, f),
    }
}

fn cmd_statedist(p: &Params) -> Result<String> {
    let mut table = Table::new(&["n", "probability"]);
    let mc = if p.compare_mc {
        check_mc(p)?;
        table.columns.extend(["mc_probability", "mc_probability_se"].map(String::from));
        let q = Quantity::StateDistAt {
            t: p.t,
            n_max: p.n_max + 1,
        };
        match estimate(q, &p.model()?, p.m0, p.paths, p.seed)? {
            Estimated::Distribution(d) => Some(d),
            Estimated::Scalar(_) => None,
        }
    } else {
        None
    };
    let mut pts = Vec::new();
    for n in 0..=p.n_max {
        let v = analytic(p, LinearQuantity::StateProb(n), p.t)?;
        pts.push((n as f64, v));
        let mut row = vec![json!(n), num(v)];
        if let Some(d) = &mc {
            row.extend([num(d[n].value), num(d[n].stderr)]);
        }
        table.rows.push(row);
    }
    let meta = p.echo("statedist");
    match p.format.unwrap_or(Format::Csv) {
        Format::Svg => Ok(svg::render(
            &[Chart {
                title: format!("State probabilities at t = {}", p.t),
                x_label: "n".into(),
                y_label: "P(N(t) = n)".into(),
                series: vec![Series {
                    label: "analytic".into(),
                    points: pts,
                    step: false,
                }],
            }],
            &meta,
        )),
        f => table.render(&meta, f),
    }
}

fn cmd_firstpassage(p: &Params) -> Result<String> {
    if !(p.theta > 0.0) {
        return Err(invalid("first-passage moments are finite only under tempering (θ > 0)"));
    }
    let spec = ModelSpec::linear_with_immigration(p.lambda0, p.lambda, p.mu, p.nu)?;
    let trunc = Truncation::default();
    let m = p.m0 as usize;
    let (name, exact, model, pick): (&str, _, Model, fn(&SamplePath) -> Option<f64>) = if p.lambda0 == 0.0 {
        (
            "first_visit_zero",
            tempered_first_visit_moments(&spec, p.theta, p.alpha, p.nu, m, &trunc)?,
            Model::Linear(p.linear()?),
            SamplePath::first_visit_zero,
        )
    } else {
        (
            "effective_catastrophe",
            effective_catastrophe_moments(&spec, p.theta, p.alpha, p.nu, m, &trunc)?,
            Model::General {
                spec: spec.clone(),
                tc: p.time_change(),
                modified: true,
            },
            SamplePath::first_catastrophe,
        )
    };
    let mut table = Table::new(&["quantity", "mean", "variance"]);
    let mut row = vec![json!(name), num(exact.mean), num(exact.variance)];
    if p.compare_mc {
        check_mc(p)?;
        table.columns.extend(["mc_mean", "mc_mean_se", "mc_variance", "mc_variance_se"].map(String::from));
        let x: Vec<f64> = map_paths(&model, p.m0, f64::INFINITY, p.paths, p.seed, pick)?
            .into_iter()
            .map(|v| v.ok_or_else(|| Error::Numerical("path ended before the event".into())))
            .collect::<Result<_>>()?;
        let e = Estimate::from_samples(&x)?;
        let v = Estimate::variance_from_samples(&x)?;
        row.extend([num(e.value), num(e.stderr), num(v.value), num(v.stderr)]);
    }
    table.rows.push(row);
    table.render(&p.echo("firstpassage"), p.format.unwrap_or(Format::Csv))
}

fn step_series(path: &SamplePath, label: String) -> Series {
    let mut points = vec![(0.0, path.initial as f64)];
    points.extend(path.events.iter().map(|e| (e.time, e.state as f64)));
    let last = path.events.last().map_or(path.initial, |e| e.state);
    if path.t_max.is_finite() {
        points.push((path.t_max, last as f64));
    }
    Series {
        label,
        points,
        step: true,
    }
}

fn simulate_paths(p: &Params, n: usize) -> Result<Vec<SamplePath>> {
    if p.m0 == 0 && p.lambda0 == 0.0 {
        return Err(invalid("m0 must be at least 1 when zero is absorbing"));
    }
    map_paths(&p.model()?, p.m0, p.t_max, n, p.seed, |path| path.clone())
}

fn cmd_simulate(p: &Params, show: usize) -> Result<String> {
    let meta = p.echo("simulate");
    match p.format.unwrap_or(Format::Csv) {
        Format::Svg => {
            let paths = simulate_paths(p, show.min(p.paths).max(1))?;
            let series = paths
                .iter()
                .enumerate()
                .map(|(i, path)| step_series(path, format!("path {i}")))
                .collect();
            let title = format!("Sample paths, alpha = {}, lambda = {}, mu = {}, nu = {}", p.alpha, p.lambda, p.mu, p.nu);
            Ok(svg::render(
                &[Chart {
                    title,
                    x_label: "t".into(),
                    y_label: "N(t)".into(),
                    series,
                }],
                &meta,
            ))
        }
        Format::Csv => {
            let paths = simulate_paths(p, p.paths)?;
            let mut buf = format!("# {meta}\n").into_bytes();
            write_csv(&paths, &mut buf)?;
            String::from_utf8(buf).map_err(|e| Error::Numerical(e.to_string()))
        }
        Format::Json => Err(invalid("simulate writes CSV or SVG")),
    }
}

fn cmd_estimate(p: &Params, q: QuantityArg) -> Result<String> {
    check_mc(p)?;
    let quantity = match q {
        QuantityArg::Mean => Quantity::MeanAt(p.t),
        QuantityArg::Var => Quantity::VarAt(p.t),
        QuantityArg::Extinction => Quantity::ExtinctionAt(p.t),
        QuantityArg::Statedist => Quantity::StateDistAt { t: p.t, n_max: p.n_max },
    };
    let mut table = Table::new(&["quantity", "value", "stderr", "ci95_lo", "ci95_hi", "n"]);
    let row = |name: String, e: &Estimate| {
        vec![json!(name), num(e.value), num(e.stderr), num(e.ci95.0), num(e.ci95.1), json!(e.n)]
    };
    match estimate(quantity, &p.model()?, p.m0, p.paths, p.seed)? {
        Estimated::Scalar(e) => {
            let name = match q {
                QuantityArg::Mean => "mean",
                QuantityArg::Var => "variance",
                _ => "extinction",
            };
            table.rows.push(row(name.into(), &e));
        }
        Estimated::Distribution(d) => {
            for (n, e) in d.iter().enumerate() {
                let name = if n == p.n_max { format!("p{n}+") } else { format!("p{n}") };
                table.rows.push(row(name, e));
            }
        }
    }
    table.render(&p.echo("estimate"), p.format.unwrap_or(Format::Csv))
}

fn cmd_table1(p: &Params) -> Result<(String, bool)> {
    let mut table = Table::new(&[
        "row", "lambda", "mu", "nu", "mean", "expected_mean", "variance", "expected_variance", "pass",
    ]);
    let mut all = true;
    for (i, &(l, m, nu, em, ev)) in TABLE1.iter().enumerate() {
        let lp = LinearParams::untempered(TABLE1_ALPHA, l, m, nu)?;
        let mean = mean_lbdpc(&lp, TABLE1_T, &ctl())?;
        let var = var_lbdpc(&lp, TABLE1_T, &ctl())?;
        let pass = (mean - em).abs() <= TABLE1_TOL && (var - ev).abs() <= TABLE1_TOL;
        all &= pass;
        table.rows.push(vec![
            json!(i + 1),
            num(l),
            num(m),
            num(nu),
            num(mean),
            num(em),
            num(var),
            num(ev),
            json!(pass),
        ]);
    }
    let meta = format!("tcbd {VERSION} command=table1 alpha={TABLE1_ALPHA} t={TABLE1_T} tolerance={TABLE1_TOL}");
    Ok((table.render(&meta, p.format.unwrap_or(Format::Csv))?, all))
}

fn cmd_validate(suite: &str) -> Result<(String, bool)> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let mut out = String::new();
    let mut all = true;
    for s in suites {
        let records = s.run()?;
        let failed = records.iter().filter(|r| !r.pass).count();
        eprintln!("{s}: {} checks, {failed} failed", records.len());
        for r in records {
            all &= r.pass;
            out.push_str(&r.to_json());
            out.push('\n');
        }
    }
    Ok((out, all))
}

fn mean_curves(p: &Params, curves: &[(String, LinearParams)]) -> Result<Vec<Series>> {
    let times = p.grid_points();
    curves
        .iter()
        .map(|(label, lp)| {
            let points = times
                .iter()
                .map(|&t| Ok((t, mean_lbdpc(lp, t, &ctl())?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Series {
                label: label.clone(),
                points,
                step: false,
            })
        })
        .collect()
}

fn series_csv(meta: &str, charts: &[Chart]) -> String {
    let mut s = format!("# {meta}\nseries,x,y\n");
    for c in charts {
        for ser in &c.series {
            let name = format!("{} / {}", c.title, ser.label).replace(',', ";");
            for &(x, y) in &ser.points {
                s.push_str(&format!("{name},{},{}\n", sig6(x), sig6(y)));
            }
        }
    }
    s
}

fn cmd_plot(p: &Params, figure: Figure, show: usize) -> Result<String> {
    let lin = |a: f64, l: f64, m: f64, nu: f64| LinearParams::untempered(a, l, m, nu);
    let charts = match figure {
        Figure::Fig2 => {
            let curves = [0.3, 0.5, 0.7, 0.9, 1.0]
                .iter()
                .map(|&a| Ok((format!("alpha = {a}"), lin(a, 3.0, 1.0, 1.0)?)))
                .collect::<Result<Vec<_>>>()?;
            vec![line_chart("lambda = 3, mu = 1, nu = 1", "E N(t)", mean_curves(p, &curves)?)]
        }
        Figure::Fig3 => {
            let curves = [0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&nu| Ok((format!("nu = {nu}"), lin(0.5, 4.0, 1.0, nu)?)))
                .collect::<Result<Vec<_>>>()?;
            vec![line_chart("alpha = 0.5, lambda = 4, mu = 1", "E N(t)", mean_curves(p, &curves)?)]
        }
        Figure::Fig4 | Figure::Fig5 => {
            let (alphas, l, m, nu) = if figure == Figure::Fig4 {
                ([1.0, 0.5], 15.0, 11.0, 2.0)
            } else {
                ([0.3, 0.8], 10.0, 12.0, 3.0)
            };
            let m0 = if p.m0_given { p.m0 } else { 10 };
            alphas
                .iter()
                .map(|&a| {
                    let q = Params {
                        alpha: a,
                        theta: 0.0,
                        lambda: l,
                        lambda0: 0.0,
                        mu: m,
                        nu,
                        m0,
                        ..p.clone()
                    };
                    let paths = simulate_paths(&q, show.max(1))?;
                    Ok(Chart {
                        title: format!("alpha = {a}, lambda = {l}, mu = {m}, nu = {nu}"),
                        x_label: "t".into(),
                        y_label: "N(t)".into(),
                        series: paths
                            .iter()
                            .enumerate()
                            .map(|(i, path)| step_series(path, format!("path {i}")))
                            .collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let meta = format!("{} figure={figure:?}", p.echo("plot"));
    match p.format.unwrap_or(Format::Svg) {
        Format::Svg => Ok(svg::render(&charts, &meta)),
        Format::Csv => Ok(series_csv(&meta, &charts)),
        Format::Json => Err(invalid("plot writes SVG or CSV")),
    }
}

/// Runs one parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let (text, ok, p) = match &cli.command {
        Command::Moments(c) => {
            let p = Params::resolve(c)?;
            (cmd_moments(&p)?, true, p)
        }
        Command::Extinction(c) => {
            let p = Params::resolve(c)?;
            (cmd_extinction(&p)?, true, p)
        }
        Command::Statedist(c) => {
            let p = Params::resolve(c)?;
            (cmd_statedist(&p)?, true, p)
        }
        Command::Firstpassage(c) => {
            let p = Params::resolve(c)?;
            (cmd_firstpassage(&p)?, true, p)
        }
        Command::Simulate { common, show } => {
            let p = Params::resolve(common)?;
            (cmd_simulate(&p, *show)?, true, p)
        }
        Command::Estimate { common, quantity } => {
            let p = Params::resolve(common)?;
            (cmd_estimate(&p, *quantity)?, true, p)
        }
        Command::Table1(c) => {
            let p = Params::resolve(c)?;
            let (s, ok) = cmd_table1(&p)?;
            (s, ok, p)
        }
        Command::Validate { suite, common } => {
            let p = Params::resolve(common)?;
            let (s, ok) = cmd_validate(suite)?;
            (s, ok, p)
        }
        Command::Plot { figure, common, show } => {
            let p = Params::resolve(common)?;
            (cmd_plot(&p, *figure, *show)?, true, p)
        }
    };
    emit(&p, &text)?;
    Ok(if ok { 0 } else { 1 })
}

/// Entry point for the binary: parses `std::env::args`, prints errors to stderr.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
