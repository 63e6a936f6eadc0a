//! Scenario-driven command line front end.
//!
//! A scenario is a TOML file with dotted sections (`[domain]`, `[cost]`,
//! `[coupling]`, `[theta]`, `[m0]`, `[ocp]`, `[equilibrium]`, `[oracle]`,
//! `[solve]`, `[probe]`, `[reports]`). Every key has a default, so an empty
//! file is a valid scenario. `--set key.path=value` patches the parsed table
//! before it is checked, with `value` read as a TOML literal (bare words
//! fall back to strings).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::geometry::{Domain, Point, State, ThetaMode, ThetaRSpec};
use crate::metrics::{holder_check, HolderReport};
use crate::mfg::{pushforward, sample_m0, truncate_m0, Coupling, EquilibriumConfig, Game, Mixing, TrajectoryMeasure};
use crate::ocp::{self, BuiltinCost, CostSpec, OCPConfig};
use crate::oracle1d::{self, EntryProblem};
use crate::trajectory::{write_csv, GammaCBound, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "accel-mfg", version, about = "Acceleration-controlled agents in bounded domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file; defaults apply without one.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the scenario.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `key.path=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Closed-form entry problem: regime, value, optimal entry time, profile.
    Oracle,
    /// One optimal control problem from `[solve]`.
    Solve,
    /// Fictitious play on the scenario game.
    Equilibrium,
    /// Values along a sequence of states approaching a boundary point.
    ProbeClosedGraph,
    /// Equilibrium invariants and the Hölder check of `t ↦ m(t)`.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Oracle => "oracle",
            Command::Solve => "solve",
            Command::Equilibrium => "equilibrium",
            Command::ProbeClosedGraph => "probe-closed-graph",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad scenario, override or input; exit code 2.
    Config(String),
    /// A computation failed or a check did not hold; exit code 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn config(context: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{context}: {e}"))
}

fn numerical(context: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::Numerical(format!("{context}: {e}"))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Disc { center: Point, radius: f64 },
    Polygon { vertices: Vec<Point> },
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec::Interval { a: -1.0, b: 0.0 }
    }
}

impl DomainSpec {
    pub fn build(&self) -> crate::Result<Domain> {
        match self {
            DomainSpec::Interval { a, b } => Domain::interval(*a, *b),
            DomainSpec::Disc { center, radius } => Domain::disc(*center, *radius),
            DomainSpec::Polygon { vertices } => Domain::polygon(vertices.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub running: BuiltinCost,
    pub terminal: BuiltinCost,
    pub p: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection { running: BuiltinCost::Zero, terminal: BuiltinCost::Zero, p: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaSection {
    pub r: f64,
    /// `interval_1d` on intervals, otherwise margin sets with `rho`.
    pub mode: Option<String>,
    pub rho: f64,
}

impl Default for ThetaSection {
    fn default() -> Self {
        ThetaSection { r: 1.0, mode: None, rho: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Uniform draws from `Θ_r`.
    #[default]
    UniformTheta,
    /// The listed `points`, equally weighted.
    Points,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct M0Section {
    pub sampler: Sampler,
    #[serde(rename = "N")]
    pub n: usize,
    /// Sampling seed; the scenario seed when absent.
    pub seed: Option<u64>,
    /// `[x, v]` on intervals, `[x0, x1, v0, v1]` in the plane.
    pub points: Vec<Vec<f64>>,
    /// Restrict `points` to `Θ_r` and renormalize.
    pub truncate: bool,
}

impl Default for M0Section {
    fn default() -> Self {
        M0Section { sampler: Sampler::UniformTheta, n: 100, seed: None, points: Vec::new(), truncate: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumSection {
    pub max_iters: usize,
    pub mixing: Mixing,
    pub exploitability_tol: f64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        let d = EquilibriumConfig::default();
        EquilibriumSection { max_iters: d.max_iters, mixing: d.mixing, exploitability_tol: d.exploitability_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub x: f64,
    pub v: f64,
    pub w: f64,
    pub theta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Profile samples on `[0, θ]`.
    pub samples: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { x: -1.0, v: 1.0, w: 0.0, theta: 3.0, horizon: 4.0, samples: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub x: Point,
    pub v: Point,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection { x: [-0.5, 0.0], v: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFamily {
    /// `(b − t³/C, t)`: the value jumps by `2C/9` in the limit.
    #[default]
    Cubic,
    /// `(b − t⁴/C, t)`.
    Quartic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub family: ProbeFamily,
    #[serde(rename = "C")]
    pub c: f64,
    pub params: Vec<f64>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { family: ProbeFamily::Cubic, c: 1.0, params: vec![0.3, 0.2, 0.1, 0.05] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportsSection {
    /// Times of the `m(t)` snapshots.
    pub snapshot_times: Vec<f64>,
    /// Times compared pairwise by the Hölder check.
    pub holder_times: Vec<f64>,
    pub use_exact: bool,
}

impl Default for ReportsSection {
    fn default() -> Self {
        ReportsSection {
            snapshot_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            holder_times: vec![0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            use_exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub out: PathBuf,
    pub domain: DomainSpec,
    pub cost: CostSection,
    pub coupling: Coupling,
    pub theta: ThetaSection,
    pub m0: M0Section,
    pub ocp: OCPConfig,
    pub equilibrium: EquilibriumSection,
    pub oracle: OracleSection,
    pub solve: SolveSection,
    pub probe: ProbeSection,
    pub reports: ReportsSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 0,
            out: PathBuf::from("out"),
            domain: DomainSpec::default(),
            cost: CostSection::default(),
            coupling: Coupling::Zero,
            theta: ThetaSection::default(),
            m0: M0Section::default(),
            ocp: OCPConfig::default(),
            equilibrium: EquilibriumSection::default(),
            oracle: OracleSection::default(),
            solve: SolveSection::default(),
            probe: ProbeSection::default(),
            reports: ReportsSection::default(),
        }
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    // A TOML literal is parsed through a one-key document.
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key.path=value` to a parsed scenario table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override key `{key}`: `{part}` is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_literal(raw.trim()));
    Ok(())
}

/// Reads, patches and checks a scenario; `None` starts from the defaults.
pub fn load_scenario(path: Option<&Path>, overrides: &[String]) -> Result<Scenario, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io(p))?;
            text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let scenario: Scenario =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

/// The pieces every computation needs, built once from a scenario.
pub struct Built {
    pub domain: Domain,
    pub cost: CostSpec,
    pub theta: ThetaRSpec,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CliError> {
        let built = self.build()?;
        self.ocp.validate().map_err(config("ocp"))?;
        self.coupling.validate().map_err(config("coupling"))?;
        self.equilibrium_config(&built).map_err(config("equilibrium"))?;
        if self.m0.sampler == Sampler::Points && self.m0.points.is_empty() {
            return Err(CliError::Config("m0.points: the points sampler needs at least one point".into()));
        }
        if self.probe.params.iter().any(|t| !(*t > 0.0)) || !(self.probe.c > 0.0) {
            return Err(CliError::Config("probe: C and every param must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Built, CliError> {
        let domain = self.domain.build().map_err(config("domain"))?;
        let cost = CostSpec::new(self.cost.running.clone(), self.cost.terminal.clone(), self.cost.p).map_err(config("cost"))?;
        let mode = match self.theta.mode.as_deref() {
            None if domain.dim() == 1 => ThetaMode::Interval1D,
            None | Some("margin_sets") => ThetaMode::MarginSets { rho: self.theta.rho },
            Some("interval_1d") => ThetaMode::Interval1D,
            Some(other) => return Err(CliError::Config(format!("theta.mode: unknown mode `{other}`"))),
        };
        let theta = ThetaRSpec::new(domain.clone(), self.theta.r, mode).map_err(config("theta"))?;
        Ok(Built { domain, cost, theta })
    }

    pub fn equilibrium_config(&self, built: &Built) -> crate::Result<EquilibriumConfig> {
        let cfg = EquilibriumConfig {
            agents: self.initial_sample(built).map(|m| m.len()).unwrap_or(self.m0.n),
            max_iters: self.equilibrium.max_iters,
            mixing: self.equilibrium.mixing,
            exploitability_tol: self.equilibrium.exploitability_tol,
            seed: self.seed,
            ocp: self.ocp.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The initial distribution `m₀` as weighted states.
    pub fn initial_sample(&self, built: &Built) -> crate::Result<Vec<(State, f64)>> {
        match self.m0.sampler {
            Sampler::UniformTheta => sample_m0(&built.theta, self.m0.n, self.m0.seed.unwrap_or(self.seed)),
            Sampler::Points => {
                let dim = built.domain.dim();
                let states = self
                    .m0
                    .points
                    .iter()
                    .map(|p| match (dim, p.as_slice()) {
                        (1, [x, v]) => Ok(State::new_1d(*x, *v)),
                        (2, [x0, x1, v0, v1]) => Ok(State::new_2d([*x0, *x1], [*v0, *v1])),
                        _ => Err(Error::DimensionMismatch),
                    })
                    .collect::<crate::Result<Vec<_>>>()?;
                if states.is_empty() {
                    return Err(Error::InvalidArgument("m0.points is empty".into()));
                }
                let w = 1.0 / states.len() as f64;
                let sample: Vec<(State, f64)> = states.into_iter().map(|s| (s, w)).collect();
                if self.m0.truncate {
                    truncate_m0(&sample, &built.theta)
                } else {
                    Ok(sample)
                }
            }
        }
    }
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            // A closed pipe downstream is not a failure of the run.
            let _ = writeln!(std::io::stdout(), "{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("accel-mfg {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

/// Runs one subcommand. Returns the text printed on success: a JSON
/// document for `oracle`, a one-line summary otherwise.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let mut scenario = load_scenario(cli.common.scenario.as_deref(), &cli.common.overrides)?;
    if let Some(seed) = cli.common.seed {
        scenario.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        scenario.out = out.clone();
    }
    let threads = cli.common.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Oracle => run_oracle(&scenario),
        Command::Solve => run_solve(&scenario),
        Command::Equilibrium => run_equilibrium(&scenario).map(|r| r.summary),
        Command::ProbeClosedGraph => run_probe(&scenario),
        Command::Verify => run_verify(&scenario),
    })
}

fn out_dir(scenario: &Scenario) -> Result<&Path, CliError> {
    let dir = scenario.out.as_path();
    fs::create_dir_all(dir).map_err(io(dir))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(io(&path))?;
    f.write_all(contents).map_err(io(&path))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(dir, name, text.as_bytes())
}

/// CSV from rows of already formatted fields.
fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn state_fields(s: &State, dim: usize) -> Vec<String> {
    s.x[..dim].iter().chain(&s.v[..dim]).map(f64::to_string).collect()
}

fn state_header(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["x", "v"]
    } else {
        vec!["x0", "x1", "v0", "v1"]
    }
}

fn run_oracle(scenario: &Scenario) -> Result<String, CliError> {
    let o = &scenario.oracle;
    let problem = EntryProblem::new(o.x, o.v, o.w, o.theta, o.horizon).map_err(config("oracle"))?;
    let sol = oracle1d::entry_trajectory(&problem).map_err(config("oracle"))?;
    let best = oracle1d::optimal_theta(o.x, o.v, o.w, o.horizon).map_err(config("oracle"))?;
    let n = o.samples.max(2);
    let profile: Vec<_> = (0..n)
        .map(|i| {
            let t = o.theta * i as f64 / (n - 1) as f64;
            json!({"t": t, "x": sol.position(t), "v": sol.velocity(t), "a": sol.acceleration(t)})
        })
        .collect();
    let doc = json!({
        "regime": sol.regime,
        "value": sol.value,
        "tau": sol.tau,
        "theta_star": best.theta_star,
        "min_value": best.min_value,
        "complementarity_residual": sol.complementarity_residual(),
        "problem": problem,
        "profile": profile,
    });
    write_json(out_dir(scenario)?, "oracle.json", &doc)?;
    Ok(serde_json::to_string_pretty(&doc).expect("serializable"))
}

fn run_solve(scenario: &Scenario) -> Result<String, CliError> {
    let built = scenario.build()?;
    let dim = built.domain.dim();
    let s = &scenario.solve;
    let start = if dim == 1 { State::new_1d(s.x[0], s.v[0]) } else { State::new_2d(s.x, s.v) };
    if !built.domain.is_admissible_state(&start) {
        return Err(CliError::Config("solve: start state is not admissible".into()));
    }
    let r = ocp::solve(&start, &built.cost, &built.domain, &scenario.ocp).map_err(numerical("solve"))?;
    let dir = out_dir(scenario)?;
    let mut csv = Vec::new();
    write_csv(&r.trajectory, &mut csv).map_err(numerical("solve"))?;
    write_file(dir, "trajectory.csv", &csv)?;
    let doc = json!({
        "value": r.value,
        "constraint_violation": r.constraint_violation,
        "first_order_residual": r.first_order_residual,
        "converged": r.converged,
        "starts_used": r.starts_used,
        "minimizer_values": r.minimizers.iter().map(|m| m.value).collect::<Vec<_>>(),
        "T": r.trajectory.horizon(),
        "N": r.trajectory.times().len(),
        "start": start,
    });
    write_json(dir, "solve.json", &doc)?;
    if !r.converged {
        return Err(CliError::Numerical(format!("solver did not converge (value {})", r.value)));
    }
    Ok(format!("solve: value {} written to {}", r.value, dir.display()))
}

pub struct EquilibriumRun {
    pub game: Game,
    pub measure: TrajectoryMeasure,
    pub m0: Vec<(State, f64)>,
    pub converged: bool,
    pub exploitability: f64,
    pub built: Built,
    pub summary: String,
}

fn run_equilibrium(scenario: &Scenario) -> Result<EquilibriumRun, CliError> {
    let built = scenario.build()?;
    let m0 = scenario.initial_sample(&built).map_err(config("m0"))?;
    let cfg = scenario.equilibrium_config(&built).map_err(config("equilibrium"))?;
    let game = Game::new(built.domain.clone(), scenario.coupling, built.cost.clone()).map_err(config("coupling"))?;
    let eq = game.fictitious_play(&m0, &cfg).map_err(numerical("equilibrium"))?;
    let dir = out_dir(scenario)?;
    let dim = built.domain.dim();

    let rows = eq.history.iter().map(|h| vec![h.iteration.to_string(), h.exploitability.to_string(), h.atoms.to_string()]);
    write_file(dir, "exploitability.csv", &csv_bytes(&["iteration", "exploitability", "atoms"], rows))?;

    let mut header = vec!["atom", "agent", "weight", "t"];
    header.extend(state_header(dim));
    let mut rows = Vec::new();
    for (i, a) in eq.measure.atoms().iter().enumerate() {
        for (t, k) in a.trajectory.times().iter().zip(a.trajectory.knots()) {
            let mut r = vec![i.to_string(), a.agent.to_string(), a.weight.to_string(), t.to_string()];
            r.extend(state_fields(k, dim));
            rows.push(r);
        }
    }
    write_file(dir, "atoms.csv", &csv_bytes(&header, rows))?;

    let mut header = vec!["t", "atom", "weight"];
    header.extend(state_header(dim));
    let mut rows = Vec::new();
    for &t in &scenario.reports.snapshot_times {
        let m = pushforward(&eq.measure, t).map_err(config("reports.snapshot_times"))?;
        for (i, (s, w)) in m.points.iter().enumerate() {
            let mut r = vec![t.to_string(), i.to_string(), w.to_string()];
            r.extend(state_fields(s, dim));
            rows.push(r);
        }
    }
    write_file(dir, "snapshots.csv", &csv_bytes(&header, rows))?;

    let exploitability = eq.history.last().map_or(f64::NAN, |h| h.exploitability);
    let best = eq.history.iter().map(|h| h.exploitability).fold(f64::INFINITY, f64::min);
    let manifest = json!({
        "tool": "accel-mfg",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": scenario.seed,
        "converged": eq.converged,
        "iterations": eq.history.len(),
        "final_exploitability": if eq.converged { exploitability } else { best },
        "atoms": eq.measure.atoms().len(),
        "agents": m0.len(),
        "scenario": scenario,
    });
    write_json(dir, "manifest.json", &manifest)?;
    let summary = format!(
        "equilibrium: {} after {} iterations, exploitability {}, written to {}",
        if eq.converged { "converged" } else { "not converged" },
        eq.history.len(),
        if eq.converged { exploitability } else { best },
        dir.display()
    );
    Ok(EquilibriumRun {
        game,
        measure: eq.measure,
        m0,
        converged: eq.converged,
        exploitability: if eq.converged { exploitability } else { best },
        built,
        summary,
    })
}

fn run_probe(scenario: &Scenario) -> Result<String, CliError> {
    let built = scenario.build()?;
    let Domain::Interval { b, .. } = built.domain else {
        return Err(CliError::Config("probe-closed-graph needs an interval domain".into()));
    };
    let p = &scenario.probe;
    let limit = State::new_1d(b, 0.0);
    let u_limit = ocp::value_u(&limit, &built.cost, &built.domain, &scenario.ocp).map_err(numerical("probe limit"))?;
    let power = match p.family {
        ProbeFamily::Cubic => 3,
        ProbeFamily::Quartic => 4,
    };
    let mut rows = Vec::new();
    for &t in &p.params {
        let s = State::new_1d(b - t.powi(power) / p.c, t);
        let r = ocp::solve(&s, &built.cost, &built.domain, &scenario.ocp).map_err(numerical("probe"))?;
        let margin = built.domain.boundary_margin(&s, built.cost.p, false);
        rows.push(vec![
            t.to_string(),
            s.x[0].to_string(),
            s.v[0].to_string(),
            r.value.to_string(),
            u_limit.to_string(),
            (r.value - u_limit).to_string(),
            oracle1d::blowup_estimate(s.x[0] - b, t).to_string(),
            margin.to_string(),
            r.converged.to_string(),
        ]);
    }
    let dir = out_dir(scenario)?;
    let header = ["param", "x", "v", "u", "u_limit", "gap", "blowup_estimate", "boundary_margin", "converged"];
    write_file(dir, "probe.csv", &csv_bytes(&header, rows))?;
    Ok(format!("probe-closed-graph: {} states written to {}", p.params.len(), dir.join("probe.csv").display()))
}

#[derive(Debug, Serialize)]
struct Invariants {
    initial_marginal_exact: bool,
    total_mass_error: f64,
    atoms_admissible: bool,
    /// Source of the Γ_C constant: the constructive bound, or the atoms'
    /// own speed and energy when the bound is unavailable.
    gamma_c_source: &'static str,
    gamma_c: f64,
    atoms_in_gamma_c: bool,
    converged: bool,
    exploitability: f64,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    invariants: Invariants,
    holder: HolderReport,
}

fn run_verify(scenario: &Scenario) -> Result<String, CliError> {
    let eq = run_equilibrium(scenario)?;
    let mu = &eq.measure;
    let mass: f64 = mu.atoms().iter().map(|a| a.weight).sum();
    let initial_marginal_exact = pushforward(mu, 0.0).map_err(numerical("verify"))?.points == eq.m0;
    let atoms_admissible = mu.atoms().iter().all(|a| a.trajectory.is_admissible(&eq.built.domain, 1e-9, 8));
    let horizon = mu.horizon();
    let (gamma_c_source, c) = match ocp::gamma_c_bound(&eq.built.theta, &eq.built.cost, horizon) {
        Ok(report) if eq.m0.iter().all(|(s, _)| eq.built.theta.contains(s).unwrap_or(false)) && scenario.coupling == Coupling::Zero => {
            ("gamma_c_bound", report.bound.c)
        }
        _ => ("atoms", empirical_c(mu.atoms().iter().map(|a| &a.trajectory))),
    };
    let bound = GammaCBound::new(c.max(f64::MIN_POSITIVE)).map_err(numerical("verify"))?;
    let atoms_in_gamma_c = mu.atoms().iter().all(|a| a.trajectory.in_gamma_c(&bound));
    let holder = holder_check(mu, &scenario.reports.holder_times, scenario.reports.use_exact, &bound)
        .map_err(config("reports.holder_times"))?;
    let invariants = Invariants {
        initial_marginal_exact,
        total_mass_error: (mass - 1.0).abs(),
        atoms_admissible,
        gamma_c_source,
        gamma_c: c,
        atoms_in_gamma_c,
        converged: eq.converged,
        exploitability: eq.exploitability,
    };
    let ok = invariants.initial_marginal_exact
        && invariants.total_mass_error <= 1e-12
        && atoms_admissible
        && atoms_in_gamma_c
        && !holder.violated();
    let dir = out_dir(scenario)?;
    write_json(dir, "verify.json", &VerifyReport { invariants, holder })?;
    if !ok {
        return Err(CliError::Numerical(format!("an invariant failed, see {}", dir.join("verify.json").display())));
    }
    Ok(format!("verify: all invariants hold, report in {}", dir.join("verify.json").display()))
}

/// Smallest `C` with every trajectory in `Γ_C`.
fn empirical_c<'a>(trajs: impl Iterator<Item = &'a Trajectory>) -> f64 {
    trajs.map(|t| t.velocity_sup().max(t.accel_l2())).fold(0.0, f64::max)
}
