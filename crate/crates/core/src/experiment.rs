//! Experiment configs, policy resolution and report writers behind the CLI.
//!
//! A config is a flat TOML file with optional sections:
//!
//! ```toml
//! [distribution]
//! name = "hyperexp"            # a catalog entry, or `kind = ...` with parameters
//!
//! [system]
//! rho = 0.5                    # or lambda = ...
//!
//! [policies]
//! list = ["fcfs", "fb", "gittins", "step:1", "spike:1", "approx-gittins:0.1", "file:ladder.txt"]
//!
//! [grid]
//! knots = 2048
//! age_points = 201
//! sizes = [2.0, 4.0, 8.0]
//! moments = [1.0]
//!
//! [sim]
//! n_jobs = 1000000
//! replications = 10
//! seed = 1
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every CSV output starts with `#` lines holding the crate version, the
//! command and the fully resolved config; JSON outputs carry the same in a
//! `meta` object. Identical configs and seeds give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::catalog;
use crate::dist::{classify_nbue, make_distribution, DistSpec, GridSpec, JobSizeDistribution, SystemParams, TailClass};
use crate::error::{Error, Result};
use crate::heavy::{diagnostic_curves, fit_exponents, geometric_grid};
use crate::light::{self, classify_soap, decay_rates, policy_decay, Singularity, Verdict};
use crate::rank::{approx_gittins, build_gittins, fmt_f64, rank_table_csv, worst_age, RankFunction};
use crate::sim::{self, ratio_at, simulate, tail_ratio, SimConfig, SimResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rank,
    AnalyzeLight,
    AnalyzeHeavy,
    Simulate,
    Classify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rank => "rank",
            Command::AnalyzeLight => "analyze-light",
            Command::AnalyzeHeavy => "analyze-heavy",
            Command::Simulate => "simulate",
            Command::Classify => "classify",
        }
    }

    fn default_policies(self) -> &'static [&'static str] {
        match self {
            Command::Rank => &["gittins"],
            Command::AnalyzeHeavy => &["gittins", "fb"],
            _ => &["fcfs", "fb", "gittins"],
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rank" => Command::Rank,
            "analyze-light" => Command::AnalyzeLight,
            "analyze-heavy" => Command::AnalyzeHeavy,
            "simulate" => Command::Simulate,
            "classify" => Command::Classify,
            _ => return Err(Error::Config(format!("unknown command `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            lambda: None,
            rho: Some(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default)]
    pub list: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Knots of the Gittins age grid.
    pub knots: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Ages for rank tables; defaults to `age_points` evenly spaced on `[0, age_max)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ages: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age_max: Option<f64>,
    pub age_points: usize,
    /// Job sizes for heavy-tail diagnostics; defaults to `2, 4, ..., 256`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<f64>>,
    pub moments: Vec<f64>,
    /// How far to scan for w-intervals; defaults to the distribution horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_horizon: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            knots: 2048,
            horizon: None,
            ages: None,
            age_max: None,
            age_points: 201,
            sizes: None,
            moments: vec![1.0],
            scan_horizon: None,
        }
    }
}

impl GridSection {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            knots: self.knots,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n_jobs: u64,
    pub replications: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    pub min_tail_samples: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n_jobs: 1_000_000,
            replications: 10,
            seed: 1,
            warmup: None,
            min_tail_samples: sim::MIN_TAIL_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

impl OutputSection {
    fn is_empty(&self) -> bool {
        self.dir.is_none()
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub distribution: DistSpec,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub policies: PolicySection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "OutputSection::is_empty")]
    pub output: OutputSection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            distribution: catalog::spec("exp").expect("catalog"),
            system: SystemSection::default(),
            policies: PolicySection::default(),
            grid: GridSection::default(),
            sim: SimSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    distribution: Option<toml::Table>,
    #[serde(default)]
    system: Option<SystemSection>,
    #[serde(default)]
    policies: PolicySection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    output: OutputSection,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string().trim_end().to_string())
}

impl ExperimentSpec {
    /// Parses config text; errors carry the line and field.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(config_err)?;
        let distribution = match raw.distribution {
            None => catalog::spec("exp").expect("catalog"),
            Some(table) => {
                if let Some(name) = table.get("name") {
                    if table.len() > 1 {
                        return Err(Error::Config(
                            "[distribution]: `name` cannot be combined with other keys".into(),
                        ));
                    }
                    let name = name
                        .as_str()
                        .ok_or_else(|| Error::Config("[distribution] name must be a string".into()))?;
                    catalog::spec(name).ok_or_else(|| {
                        Error::Config(format!(
                            "[distribution] unknown name `{name}`; expected one of {:?}",
                            catalog::NAMES
                        ))
                    })?
                } else {
                    DistSpec::deserialize(toml::Value::Table(table))
                        .map_err(|e| Error::Config(format!("[distribution]: {e}")))?
                }
            }
        };
        let system = raw.system.unwrap_or_default();
        if system.lambda.is_some() == system.rho.is_some() {
            return Err(Error::Config("[system]: give exactly one of `lambda` or `rho`".into()));
        }
        Ok(ExperimentSpec {
            distribution,
            system,
            policies: raw.policies,
            grid: raw.grid,
            sim: raw.sim,
            output: raw.output,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

/// Command-line overrides applied on top of the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<u64>,
    pub reps: Option<usize>,
}

/// Everything needed to run one command.
#[derive(Debug, Clone)]
pub struct Context {
    pub command: Command,
    pub spec: ExperimentSpec,
    pub out_dir: PathBuf,
    /// Base for relative `file:` policies.
    pub base_dir: PathBuf,
}

impl Context {
    pub fn new(command: Command, mut spec: ExperimentSpec, base_dir: PathBuf, ov: &Overrides) -> Self {
        if let Some(s) = ov.seed {
            spec.sim.seed = s;
        }
        if let Some(n) = ov.jobs {
            spec.sim.n_jobs = n;
        }
        if let Some(k) = ov.reps {
            spec.sim.replications = k;
        }
        if spec.policies.list.is_empty() {
            spec.policies.list = command.default_policies().iter().map(|s| s.to_string()).collect();
        }
        let out_dir = ov
            .out
            .clone()
            .or_else(|| spec.output.dir.as_ref().map(|d| base_dir.join(d)))
            .unwrap_or_else(|| PathBuf::from("out"));
        spec.output.dir = None;
        Context {
            command,
            spec,
            out_dir,
            base_dir,
        }
    }

    pub fn distribution(&self) -> Result<JobSizeDistribution> {
        make_distribution(&self.spec.distribution)
    }

    pub fn params(&self, d: &JobSizeDistribution) -> Result<SystemParams> {
        match (self.spec.system.lambda, self.spec.system.rho) {
            (Some(l), _) => SystemParams::from_lambda(d, l),
            (None, Some(r)) => SystemParams::from_rho(d, r),
            (None, None) => Err(Error::Config("[system]: missing `lambda` or `rho`".into())),
        }
    }

    pub fn policies(&self, d: &JobSizeDistribution) -> Result<Vec<RankFunction>> {
        let grid = self.spec.grid.grid_spec();
        self.spec
            .policies
            .list
            .iter()
            .map(|name| resolve_policy(name, d, &grid, &self.base_dir))
            .collect()
    }

    fn header(&self) -> String {
        let mut out = format!("# soap-tails {VERSION}\n# command: {}\n", self.command.name());
        for line in self.spec.to_toml().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }

    fn meta(&self) -> serde_json::Value {
        json!({
            "version": VERSION,
            "command": self.command.name(),
            "spec": self.spec,
        })
    }

    fn write_csv(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        fs::write(&path, format!("{}{}", self.header(), body))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, mut value: serde_json::Value) -> Result<PathBuf> {
        value["meta"] = self.meta();
        let path = self.out_dir.join(name);
        let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Runs the command and returns the written files.
    pub fn run(&self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| Error::Io(format!("{}: {e}", self.out_dir.display())))?;
        match self.command {
            Command::Rank => cmd_rank(self),
            Command::AnalyzeLight => cmd_analyze_light(self),
            Command::AnalyzeHeavy => cmd_analyze_heavy(self),
            Command::Simulate => cmd_simulate(self),
            Command::Classify => cmd_classify(self),
        }
    }
}

/// Resolves `fcfs`, `fb`, `gittins`, `step:A`, `spike:A`,
/// `approx-gittins:EPS` or `file:PATH`.
pub fn resolve_policy(
    name: &str,
    d: &JobSizeDistribution,
    grid: &GridSpec,
    base_dir: &Path,
) -> Result<RankFunction> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("policy `{name}`: `{s}` is not a number")))
    };
    let (head, arg) = match name.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (name, None),
    };
    match (head, arg) {
        ("fcfs", None) => Ok(RankFunction::fcfs()),
        ("fb", None) => Ok(RankFunction::fb()),
        ("gittins", None) => build_gittins(d, grid),
        ("step", Some(a)) => RankFunction::step(num(a)?),
        ("spike", Some(a)) => RankFunction::spike(num(a)?),
        ("approx-gittins", Some(e)) => approx_gittins(d, num(e)?, grid),
        ("file", Some(p)) => {
            let path = base_dir.join(p);
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("policy file {}: {e}", path.display())))?;
            RankFunction::parse(&text)
        }
        _ => Err(Error::Config(format!(
            "unknown policy `{name}`; expected fcfs, fb, gittins, step:A, spike:A, approx-gittins:EPS or file:PATH"
        ))),
    }
}

/// Exit status for an error: 2 config, 3 numeric failure, 4 unstable load.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::ClassMismatch { .. } | Error::Io(_) => 2,
        Error::Unstable { .. } => 4,
        _ => 3,
    }
}

fn file_tag(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn opt_num(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(x) if x.is_finite() => json!(x),
        Some(x) => json!(fmt_f64(x)),
        None => serde_json::Value::Null,
    }
}

fn rank_ages(ctx: &Context, d: &JobSizeDistribution) -> Vec<f64> {
    if let Some(a) = &ctx.spec.grid.ages {
        return a.clone();
    }
    let max = ctx
        .spec
        .grid
        .age_max
        .unwrap_or_else(|| d.horizon().min(20.0 * d.mean()));
    let n = ctx.spec.grid.age_points.max(1);
    (0..n).map(|i| max * i as f64 / n as f64).collect()
}

fn cmd_rank(ctx: &Context) -> Result<Vec<PathBuf>> {
    let d = ctx.distribution()?;
    let ranks = ctx.policies(&d)?;
    let ages = rank_ages(ctx, &d);
    let horizon = ctx.spec.grid.scan_horizon.unwrap_or_else(|| d.horizon());
    let mut files = vec![ctx.write_csv("rank.csv", &rank_table_csv(&ranks, &ages))?];
    let entries: Vec<serde_json::Value> = ranks
        .iter()
        .map(|r| {
            let (sup, attained) = r.sup();
            let a_star = worst_age(r);
            let set = r.w_intervals(sup, horizon);
            let intervals: Vec<_> = set
                .intervals
                .iter()
                .take(32)
                .map(|iv| json!({"b": opt_num(Some(iv.b)), "c": opt_num(Some(iv.c)), "open": iv.open}))
                .collect();
            json!({
                "policy": r.label(),
                "worst_age": opt_num(Some(a_star)),
                "sup_rank": opt_num(Some(sup)),
                "attained": attained,
                "x_max": opt_num(Some(r.x_max())),
                "w_intervals_at_sup": {
                    "level": opt_num(Some(sup)),
                    "count": set.count(),
                    "open_ended": set.open_ended,
                    "intervals": intervals,
                },
            })
        })
        .collect();
    files.push(ctx.write_json(
        "worst_age.json",
        json!({"distribution": d.name(), "policies": entries}),
    )?);
    Ok(files)
}

/// Light-tail decay and verdict of a policy, from its worst age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyLight {
    pub worst_age: f64,
    pub verdict: Verdict,
    pub decay: f64,
    pub singularity: Singularity,
    pub degenerate: bool,
}

pub fn policy_light(
    d: &JobSizeDistribution,
    p: &SystemParams,
    report: &light::LightTailReport,
    r: &RankFunction,
) -> Result<PolicyLight> {
    let a = worst_age(r);
    let verdict = classify_soap(a, d.x_max());
    Ok(match verdict {
        Verdict::LogTailOptimal => PolicyLight {
            worst_age: a,
            verdict,
            decay: report.d_fcfs.value,
            singularity: Singularity::WorkPole,
            degenerate: false,
        },
        Verdict::LogTailPessimal => PolicyLight {
            worst_age: a,
            verdict,
            decay: report.d_fb.value,
            singularity: Singularity::BranchPoint,
            degenerate: false,
        },
        Verdict::LogTailIntermediate => {
            let pd = policy_decay(d, p, a, &report.gamma_w)?;
            PolicyLight {
                worst_age: a,
                verdict,
                decay: pd.rate.value,
                singularity: pd.singularity,
                degenerate: pd.degenerate,
            }
        }
    })
}

fn bracket_json(b: &light::Bracketed) -> serde_json::Value {
    json!({"value": b.value, "lo": b.lo, "hi": b.hi})
}

fn cmd_analyze_light(ctx: &Context) -> Result<Vec<PathBuf>> {
    let d = ctx.distribution()?;
    let p = ctx.params(&d)?;
    let report = decay_rates(&d, &p, None)?;
    let gittins = light::classify_gittins(&d, &ctx.spec.grid.grid_spec())?;
    let ranks = ctx.policies(&d)?;
    let mut rows = String::new();
    let mut entries = Vec::new();
    for r in &ranks {
        let pl = policy_light(&d, &p, &report, r)?;
        let _ = writeln!(
            rows,
            "{},{},{:?},{},{:?},{}",
            r.label(),
            fmt_f64(pl.worst_age),
            pl.verdict,
            fmt_f64(pl.decay),
            pl.singularity,
            pl.degenerate
        );
        entries.push(json!({
            "policy": r.label(),
            "worst_age": opt_num(Some(pl.worst_age)),
            "verdict": pl.verdict,
            "d_policy": pl.decay,
            "singularity": pl.singularity,
            "degenerate": pl.degenerate,
        }));
    }
    let value = json!({
        "distribution": d.name(),
        "lambda": p.lambda,
        "rho": p.rho,
        "gamma_x": opt_num(Some(report.gamma_x)),
        "gamma_w": bracket_json(&report.gamma_w),
        "sigma_at_gamma": bracket_json(&report.sigma_at_gamma),
        "gamma_sigma": bracket_json(&report.gamma_sigma),
        "d_fcfs": bracket_json(&report.d_fcfs),
        "d_fb": bracket_json(&report.d_fb),
        "pole": report.pole,
        "gittins": {
            "verdict": gittins.verdict,
            "nbue": gittins.nbue,
            "worst_age": opt_num(Some(gittins.worst_age)),
            "rank_verdict": gittins.rank_verdict,
            "consistent": gittins.consistent(),
        },
        "policies": entries,
    });
    let mut files = vec![ctx.write_json("light_report.json", value)?];
    let chain = format!(
        "distribution,rho,lambda,gamma_x,gamma_w,sigma_at_gamma,gamma_sigma,d_fcfs,d_fb,gittins_verdict\n{},{},{},{},{},{},{},{},{},{:?}\n",
        d.name(),
        fmt_f64(p.rho),
        fmt_f64(p.lambda),
        fmt_f64(report.gamma_x),
        fmt_f64(report.gamma_w.value),
        fmt_f64(report.sigma_at_gamma.value),
        fmt_f64(report.gamma_sigma.value),
        fmt_f64(report.d_fcfs.value),
        fmt_f64(report.d_fb.value),
        gittins.verdict
    );
    files.push(ctx.write_csv("light_report.csv", &chain)?);
    let body = format!("policy,worst_age,verdict,d_policy,singularity,degenerate\n{rows}");
    files.push(ctx.write_csv("light_policies.csv", &body)?);
    Ok(files)
}

fn heavy_sizes(ctx: &Context) -> Vec<f64> {
    ctx.spec.grid.sizes.clone().unwrap_or_else(|| geometric_grid(1, 8))
}

fn cmd_analyze_heavy(ctx: &Context) -> Result<Vec<PathBuf>> {
    let d = ctx.distribution()?;
    let p = ctx.params(&d)?;
    let ranks = ctx.policies(&d)?;
    let sizes = heavy_sizes(ctx);
    let horizon = ctx.spec.grid.scan_horizon.unwrap_or_else(|| d.horizon());
    let mut diag = String::from(
        "policy,x,p,moment_sum,moment_ratio,intervals,open_ended,integral,integral_ratio\n",
    );
    let mut entries = Vec::new();
    for r in &ranks {
        let fit = fit_exponents(r, &d, &sizes, horizon)?;
        for row in diagnostic_curves(r, &d, &p, &sizes, &ctx.spec.grid.moments, horizon)? {
            let _ = writeln!(
                diag,
                "{},{},{},{},{},{},{},{},{}",
                r.label(),
                fmt_f64(row.x),
                fmt_f64(row.p),
                fmt_f64(row.moment_sum),
                fmt_f64(row.moment_ratio),
                row.intervals,
                row.open_ended,
                fmt_f64(row.integral),
                fmt_f64(row.integral_ratio)
            );
        }
        entries.push(json!({
            "policy": r.label(),
            "zeta": fit.zeta,
            "theta": fit.theta,
            "eta": opt_num(Some(fit.eta)),
            "sufficient": fit.sufficient,
            "margin": fit.margin,
            "vacuous": fit.vacuous,
            "length_ratio_bound": fit.length_ratio_bound(),
            "residuals": fit.residuals,
            "sizes_without_intervals": fit.empty_sizes,
            "records": fit.records.iter().map(|r| json!({
                "x": r.x, "w_x": r.w_x, "b": r.b, "c": r.c, "open": r.open
            })).collect::<Vec<_>>(),
        }));
    }
    let (alpha, beta) = match d.tail_class() {
        TailClass::NicelyHeavy { alpha, beta } => (alpha, beta),
        _ => unreachable!("fit_exponents checked the class"),
    };
    let value = json!({
        "distribution": d.name(),
        "rho": p.rho,
        "lambda": p.lambda,
        "alpha": alpha,
        "beta": beta,
        "note": "exponents are least-squares estimates on a finite size grid; the O(.) constants are not certified",
        "policies": entries,
    });
    Ok(vec![
        ctx.write_json("heavy_fit.json", value)?,
        ctx.write_csv("diagnostics.csv", &diag)?,
    ])
}

fn sim_config(ctx: &Context, d: &JobSizeDistribution, p: &SystemParams, r: RankFunction) -> SimConfig {
    let s = &ctx.spec.sim;
    SimConfig {
        d: d.clone(),
        lambda: p.lambda,
        policy: r,
        n_jobs: s.n_jobs,
        warmup: s.warmup,
        seed: s.seed,
        replications: s.replications,
        record_busy_periods: false,
    }
}

fn cmd_simulate(ctx: &Context) -> Result<Vec<PathBuf>> {
    let d = ctx.distribution()?;
    let p = ctx.params(&d)?;
    let ranks = ctx.policies(&d)?;
    let heavy = matches!(d.tail_class(), TailClass::NicelyHeavy { .. });
    let light_report = match d.tail_class() {
        TailClass::NicelyLight => Some(decay_rates(&d, &p, None)?),
        _ => None,
    };
    let min_tail = ctx.spec.sim.min_tail_samples;

    let mut results: Vec<(RankFunction, SimResult)> = Vec::new();
    for r in ranks {
        let res = simulate(&sim_config(ctx, &d, &p, r.clone()))?;
        results.push((r, res));
    }
    let gittins_mean = results
        .iter()
        .find(|(r, _)| r.label() == "gittins")
        .map(|(_, s)| s.mean);

    let mut files = Vec::new();
    let mut summary =
        String::from("policy,distribution,rho,lambda,replication,samples,mean,busy_time,work_gap,max_in_system,events\n");
    let mut aggregate = String::from(
        "policy,distribution,rho,samples,mean,ci_half,q0.5,q0.9,q0.99,q0.999,q0.9999,decay,decay_stderr,fit_t_lo,fit_t_hi\n",
    );
    let mut compare = if heavy {
        String::from("policy,t_q0.999,tail_ratio,ratio_lo,ratio_hi,mean,mean_ratio_vs_gittins\n")
    } else {
        String::from("policy,analytic_decay,fitted_decay,ratio,fitted_stderr,mean,mean_ratio_vs_gittins\n")
    };
    for (r, res) in &results {
        let label = r.label();
        for rep in &res.reps {
            let _ = writeln!(
                summary,
                "{label},{},{},{},{},{},{},{},{},{},{}",
                d.name(),
                fmt_f64(p.rho),
                fmt_f64(p.lambda),
                rep.rep,
                rep.samples,
                fmt_f64(rep.mean),
                fmt_f64(rep.busy_time),
                fmt_f64(rep.work_gap),
                rep.max_in_system,
                rep.events
            );
        }
        let fit = sim::fit_decay_with(res, min_tail).ok();
        let qs: Vec<String> = res.quantiles.iter().map(|(_, v)| fmt_f64(*v)).collect();
        let f = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            aggregate,
            "{label},{},{},{},{},{},{},{},{},{},{}",
            d.name(),
            fmt_f64(p.rho),
            res.n_samples,
            fmt_f64(res.mean),
            fmt_f64(res.ci_half),
            qs.join(","),
            f(fit.map(|x| x.rate)),
            f(fit.map(|x| x.stderr)),
            f(fit.map(|x| x.t_lo)),
            f(fit.map(|x| x.t_hi))
        );

        let mut tail = String::from(if heavy {
            "t,survival,ci_lo,ci_hi,target,ratio,ratio_lo,ratio_hi\n"
        } else {
            "t,survival,ci_lo,ci_hi\n"
        });
        if heavy {
            for pt in tail_ratio(res, &d, &p) {
                let _ = writeln!(
                    tail,
                    "{},{},{},{},{},{},{},{}",
                    fmt_f64(pt.t),
                    fmt_f64(pt.survival),
                    fmt_f64(pt.ci_lo * pt.target),
                    fmt_f64(pt.ci_hi * pt.target),
                    fmt_f64(pt.target),
                    fmt_f64(pt.ratio),
                    fmt_f64(pt.ci_lo),
                    fmt_f64(pt.ci_hi)
                );
            }
        } else {
            for pt in &res.tail {
                let _ = writeln!(
                    tail,
                    "{},{},{},{}",
                    fmt_f64(pt.t),
                    fmt_f64(pt.survival),
                    fmt_f64(pt.ci_lo),
                    fmt_f64(pt.ci_hi)
                );
            }
        }
        files.push(ctx.write_csv(&format!("tail_{}.csv", file_tag(label)), &tail)?);

        let mean_ratio = f(gittins_mean.map(|g| res.mean / g));
        if heavy {
            let pt = ratio_at(res, &d, &p, res.quantile(0.999));
            let _ = writeln!(
                compare,
                "{label},{},{},{},{},{},{mean_ratio}",
                fmt_f64(pt.t),
                fmt_f64(pt.ratio),
                fmt_f64(pt.ci_lo),
                fmt_f64(pt.ci_hi),
                fmt_f64(res.mean)
            );
        } else {
            let analytic = match &light_report {
                Some(rep) => Some(policy_light(&d, &p, rep, r)?.decay),
                None => None,
            };
            let fitted = fit.map(|x| x.rate);
            let ratio = analytic.zip(fitted).map(|(a, b)| b / a);
            let _ = writeln!(
                compare,
                "{label},{},{},{},{},{},{mean_ratio}",
                f(analytic),
                f(fitted),
                f(ratio),
                f(fit.map(|x| x.stderr)),
                fmt_f64(res.mean)
            );
        }
    }
    files.push(ctx.write_csv("sim_summary.csv", &summary)?);
    files.push(ctx.write_csv("sim_aggregate.csv", &aggregate)?);
    files.push(ctx.write_csv("compare.csv", &compare)?);
    Ok(files)
}

fn cmd_classify(ctx: &Context) -> Result<Vec<PathBuf>> {
    let d = ctx.distribution()?;
    let grid = ctx.spec.grid.grid_spec();
    let class = d.tail_class();
    let nbue = match classify_nbue(&d, &grid) {
        Ok(c) => json!(c),
        Err(e) => json!({"error": e.to_string()}),
    };
    let gittins = match class {
        TailClass::NicelyLight => {
            let g = light::classify_gittins(&d, &grid)?;
            json!({
                "verdict": g.verdict,
                "worst_age": opt_num(Some(g.worst_age)),
                "rank_verdict": g.rank_verdict,
                "consistent": g.consistent(),
            })
        }
        _ => serde_json::Value::Null,
    };
    let ranks = ctx.policies(&d)?;
    let entries: Vec<_> = ranks
        .iter()
        .map(|r| {
            let a = worst_age(r);
            json!({
                "policy": r.label(),
                "worst_age": opt_num(Some(a)),
                "light_verdict": classify_soap(a, d.x_max()),
            })
        })
        .collect();
    let value = json!({
        "distribution": d.name(),
        "mean": d.mean(),
        "x_max": opt_num(Some(d.x_max())),
        "tail_class": class,
        "nbue": nbue,
        "gittins": gittins,
        "policies": entries,
    });
    Ok(vec![ctx.write_json("classify.json", value)?])
}
