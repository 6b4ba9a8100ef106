//! Subcommand implementations. Every command returns an [`Outcome`]: a JSON
//! document, an optional flat CSV table and the list of assertions it checked.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use sbm_core::analysis::{
    bounds_report, fit_log_slope, high_moment_ratio, k_star_hat, large_deviation_probe, tail_report, tail_upper_bound,
    Hypothesis, HypothesisKind, MomentPoint, ProbeObservation, SlopeEstimate, TailInputs,
};
use sbm_core::index::{enumerate_triples, triple_count_closed_form, IndexTriple};
use sbm_core::kernel::{build_kernel_graph, spatial_integral_sum};
use sbm_core::moment::{moment, MomentRequest, DEFAULT_ORDER_CAP, DEFAULT_REL_TOL};
use sbm_core::particles::{
    moments_from_samples, run_replicates, smoothed_mean, smoothed_second_moment_constant, tail_from_samples,
    Extrapolation, Method, ReplicateSet, SimulationConfig,
};
use sbm_core::{InitialCondition, QuadMethod, QuadSettings};

use crate::parse::{self, Grid};
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub command: &'static str,
    pub result: Value,
    pub csv: Option<String>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// The document written by the binary.
    pub fn document(&self) -> Value {
        json!({
            "command": self.command,
            "pass": self.pass(),
            "failures": self.failures(),
            "checks": self.checks,
            "result": self.result,
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Output(e.to_string()))
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// List the index triples labelling the summands of the n-th moment.
    Enumerate(EnumerateArgs),
    /// Compute E[u_t(x)^n] from the moment expansion.
    Moment(MomentArgs),
    /// Run the branching particle system and report smoothed-density statistics.
    Simulate(SimulateArgs),
    /// Normalized log-ratios of moments to the growth envelopes.
    Bounds(BoundsArgs),
    /// Log-log growth slopes of moments in t.
    Slopes(SlopesArgs),
    /// Tail upper bound and Paley-Zygmund lower points against simulated frequencies.
    Tails(TailsArgs),
    /// Every diagnostic in one report.
    Report(ReportArgs),
}

impl Command {
    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Command::Enumerate(a) => a.out.as_ref(),
            Command::Moment(a) => a.out.as_ref(),
            Command::Simulate(a) => a.out.as_ref(),
            Command::Bounds(a) => a.out.as_ref(),
            Command::Slopes(a) => a.out.as_ref(),
            Command::Tails(a) => a.out.as_ref(),
            Command::Report(a) => a.out.as_ref(),
        }
    }

    pub fn run(&self) -> Result<Outcome, CliError> {
        match self {
            Command::Enumerate(a) => enumerate(a),
            Command::Moment(a) => moment_cmd(a),
            Command::Simulate(a) => simulate(a),
            Command::Bounds(a) => bounds(a),
            Command::Slopes(a) => slopes(a),
            Command::Tails(a) => tails(a),
            Command::Report(a) => report(a),
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct QuadArgs {
    #[arg(long, default_value = "importance-mc")]
    pub quad_method: QuadMethod,
    /// Per-summand evaluation cap.
    #[arg(long, default_value_t = 1 << 18)]
    pub quad_budget: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative standard-error target for each moment.
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = DEFAULT_ORDER_CAP)]
    pub order_cap: usize,
}

impl QuadArgs {
    fn request(&self, n: usize, t: f64, x: f64, u0: &InitialCondition) -> MomentRequest {
        let mut req = MomentRequest::new(n, t, x, u0.clone()).with_quad(QuadSettings {
            method: self.quad_method,
            budget: self.quad_budget,
            seed: self.seed,
            rel_tol: self.rel_tol,
            abs_tol: 0.0,
        });
        req.order_cap = self.order_cap;
        req
    }

    fn point(&self, n: usize, t: f64, x: f64, u0: &InitialCondition) -> Result<MomentPoint, CliError> {
        let r = moment(&self.request(n, t, x, u0))?;
        Ok(MomentPoint {
            n,
            t,
            value: r.value,
            std_error: r.std_error,
        })
    }
}

#[derive(Args, Clone, Debug)]
pub struct SimArgs {
    /// Particles per unit mass.
    #[arg(long = "N", default_value_t = 20_000)]
    pub particles: u64,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: usize,
    #[arg(long, default_value = "0.01,0.02,0.04,0.08")]
    pub bandwidths: String,
    /// Half-width of the constant-density window.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, default_value = "genealogy")]
    pub method: Method,
    #[arg(long, default_value = "quadratic")]
    pub extrapolation: Extrapolation,
    #[arg(long, default_value_t = 50.0)]
    pub cap_factor: f64,
}

impl SimArgs {
    pub fn config(&self, t: f64, seed: u64) -> Result<SimulationConfig, CliError> {
        let mut c = SimulationConfig::new(self.particles, t, self.replicates, seed);
        c.bandwidths = parse::reals(&self.bandwidths)?;
        c.domain_truncation = self.window;
        c.method = self.method;
        c.extrapolation = self.extrapolation;
        c.cap_factor = self.cap_factor;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Clone, Debug)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub n: usize,
    /// Number of branch variables; all values below n when omitted.
    #[arg(long)]
    pub nprime: Option<usize>,
    #[arg(long)]
    pub count_only: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn triple_row(out: &mut String, np: usize, i: usize, tr: &IndexTriple) {
    let bits = |b: &[u8]| b.iter().map(|v| v.to_string()).collect::<String>();
    let tau = tr
        .tau_values()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(
        out,
        "{},{np},{i},{},{},{tau}",
        tr.n(),
        bits(tr.alpha()),
        bits(tr.beta())
    );
}

pub fn enumerate(a: &EnumerateArgs) -> Result<Outcome, CliError> {
    let nps: Vec<usize> = match a.nprime {
        Some(np) => vec![np],
        None => (0..a.n).collect(),
    };
    let mut terms = Vec::new();
    let mut checks = Vec::new();
    let mut csv = String::from("n,nprime,index,alpha,beta,tau\n");
    for &np in &nps {
        let triples = enumerate_triples(a.n, np)?;
        let closed = triple_count_closed_form(a.n, np)?;
        checks.push(Check::new(
            format!("count_n{}_nprime{np}", a.n),
            triples.len() as u64 == closed,
            format!("enumerated {} vs closed form {closed}", triples.len()),
        ));
        for (i, tr) in triples.iter().enumerate() {
            triple_row(&mut csv, np, i, tr);
        }
        let mut term = json!({ "n": a.n, "nprime": np, "count": triples.len(), "closed_form": closed });
        if !a.count_only {
            term["triples"] = to_value(&triples)?;
        }
        terms.push(term);
    }
    let result = if a.nprime.is_some() {
        terms.pop().unwrap_or(Value::Null)
    } else {
        json!({ "n": a.n, "terms": terms })
    };
    Ok(Outcome {
        command: "enumerate",
        result,
        csv: (!a.count_only).then_some(csv),
        checks,
    })
}

#[derive(Args, Clone, Debug)]
pub struct MomentArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, default_value = "const:1")]
    pub u0: String,
    #[command(flatten)]
    pub quad: QuadArgs,
    /// Emit the kernel graphs of one summand instead: `NPRIME:INDEX:S1,S2,...`.
    #[arg(long)]
    pub dump_graph: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn dump_graph(a: &MomentArgs, u0: &InitialCondition, spec: &str) -> Result<Outcome, CliError> {
    let mut parts = spec.splitn(3, ':');
    let (np, idx, s) = match (parts.next(), parts.next(), parts.next()) {
        (Some(np), Some(i), Some(s)) => (np, i, s),
        _ => {
            return Err(CliError::Usage(format!(
                "--dump-graph '{spec}' is not NPRIME:INDEX:S1,S2,..."
            )))
        }
    };
    let np: usize = np.parse().map_err(|_| CliError::Usage(format!("bad n' '{np}'")))?;
    let idx: usize = idx
        .parse()
        .map_err(|_| CliError::Usage(format!("bad triple index '{idx}'")))?;
    let s = parse::reals(s)?;
    let triples = enumerate_triples(a.n, np)?;
    let tr = triples
        .get(idx)
        .ok_or_else(|| CliError::Usage(format!("triple index {idx} out of range (count {})", triples.len())))?;
    let graphs = build_kernel_graph(tr, &s, a.t, a.x, u0)?;
    let value = spatial_integral_sum(&graphs)?;
    Ok(Outcome {
        command: "moment",
        result: json!({ "triple": tr, "s": s, "graphs": graphs, "spatial_integral": value }),
        csv: None,
        checks: vec![],
    })
}

pub fn moment_cmd(a: &MomentArgs) -> Result<Outcome, CliError> {
    let u0 = parse::initial_condition(&a.u0)?;
    if let Some(spec) = &a.dump_graph {
        return dump_graph(a, &u0, spec);
    }
    let r = moment(&a.quad.request(a.n, a.t, a.x, &u0))?;
    let mut csv = String::from("nprime,value,std_error,triples\n");
    for p in &r.per_nprime {
        let _ = writeln!(csv, "{},{},{},{}", p.n_prime, p.value, p.std_error, p.triples);
    }
    let checks = vec![Check::new(
        "positive",
        r.value > 0.0 && r.value.is_finite(),
        format!("value {}", r.value),
    )];
    Ok(Outcome {
        command: "moment",
        result: to_value(&r)?,
        csv: Some(csv),
        checks,
    })
}

#[derive(Args, Clone, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value = "const:1")]
    pub u0: String,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Moment orders of the smoothed density.
    #[arg(long, default_value = "1,2")]
    pub orders: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn criticality(name: &str, set: &ReplicateSet, mean: f64, se: f64) -> Check {
    Check::new(
        name,
        (mean - set.initial_mass).abs() <= 3.0 * se,
        format!("mean final mass {mean} +- {se} vs initial {}", set.initial_mass),
    )
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome, CliError> {
    let u0 = parse::initial_condition(&a.u0)?;
    let config = a.sim.config(a.t, a.seed)?;
    let set = run_replicates(&config, &u0, a.x)?;
    let m = moments_from_samples(&set, &parse::orders(&a.orders)?, config.extrapolation)?;
    let mut csv = String::from("replicate,bandwidth,uhat\n");
    for s in &set.samples {
        for (h, u) in set.bandwidths.iter().zip(&s.uhat) {
            let _ = writeln!(csv, "{},{h},{u}", s.replicate);
        }
    }
    let checks = vec![criticality(
        "criticality",
        &set,
        m.total_mass.mean,
        m.total_mass.std_error,
    )];
    Ok(Outcome {
        command: "simulate",
        result: json!({ "config": config, "u0": u0, "x": a.x, "moments": m }),
        csv: Some(csv),
        checks,
    })
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum HypothesisArg {
    H1,
    H2,
}

#[derive(Args, Clone, Debug)]
pub struct AnalysisArgs {
    #[arg(long, value_enum, default_value = "h1")]
    pub hypothesis: HypothesisArg,
    /// Defaults to const:1 under h1 and dirac:0 under h2.
    #[arg(long)]
    pub u0: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    /// `n=1..5;t=0.1,1,10`.
    #[arg(long)]
    pub grid: Option<String>,
}

impl AnalysisArgs {
    fn u0(&self) -> Result<InitialCondition, CliError> {
        let default = match self.hypothesis {
            HypothesisArg::H1 => "const:1",
            HypothesisArg::H2 => "dirac:0",
        };
        parse::initial_condition(self.u0.as_deref().unwrap_or(default))
    }

    fn hypothesis(&self, u0: &InitialCondition) -> Result<Hypothesis, CliError> {
        Ok(match self.hypothesis {
            HypothesisArg::H1 => Hypothesis::h1_for(u0)?,
            HypothesisArg::H2 => Hypothesis::h2_for(u0, self.x)?,
        })
    }

    fn grid(&self, default: Grid) -> Result<Grid, CliError> {
        match &self.grid {
            Some(g) => parse::grid(g, default),
            None => Ok(default),
        }
    }
}

pub fn bounds_default_grid(h: HypothesisArg) -> Grid {
    let times = vec![0.1, 1.0, 10.0, 100.0, 1e3, 1e4];
    match h {
        HypothesisArg::H1 => Grid {
            orders: (1..=5).collect(),
            times,
        },
        HypothesisArg::H2 => Grid {
            orders: (1..=4).collect(),
            times,
        },
    }
}

pub fn slopes_default_grid(h: HypothesisArg) -> Grid {
    let times = vec![1e2, 1e3, 1e4, 1e5];
    match h {
        HypothesisArg::H1 => Grid {
            orders: (2..=5).collect(),
            times,
        },
        HypothesisArg::H2 => Grid {
            orders: (2..=4).collect(),
            times,
        },
    }
}

#[derive(Args, Clone, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Largest admissible spread of the normalized log-ratios.
    #[arg(long, default_value_t = 3.0)]
    pub max_band: f64,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn bounds(a: &BoundsArgs) -> Result<Outcome, CliError> {
    let u0 = a.analysis.u0()?;
    let hyp = a.analysis.hypothesis(&u0)?;
    let grid = a.analysis.grid(bounds_default_grid(a.analysis.hypothesis))?;
    let mut points = Vec::new();
    for &n in &grid.orders {
        for &t in &grid.times {
            points.push(a.quad.point(n, t, a.analysis.x, &u0)?);
        }
    }
    let r = bounds_report(hyp, &points, a.max_band)?;
    let mut csv = String::from("n,t,moment,std_error,lower_shape,upper_shape,rho\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for p in &r.points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            p.n,
            p.t,
            p.moment,
            p.std_error,
            opt(p.envelope.lower),
            opt(p.envelope.upper),
            opt(p.rho)
        );
    }
    let checks = vec![Check::new(
        "band_width",
        r.pass,
        format!(
            "rho in [{}, {}], width {} (max {})",
            r.rho_min, r.rho_max, r.band_width, r.max_band_width
        ),
    )];
    Ok(Outcome {
        command: "bounds",
        result: json!({ "u0": u0, "x": a.analysis.x, "report": r }),
        csv: Some(csv),
        checks,
    })
}

#[derive(Args, Clone, Debug)]
pub struct SlopesArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Admissible distance between fitted and target slope.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    /// Weight points by the inverse variance of log m_n.
    #[arg(long)]
    pub weighted: bool,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
struct SlopeRow {
    #[serde(flatten)]
    estimate: SlopeEstimate,
    pass: bool,
}

pub fn slopes(a: &SlopesArgs) -> Result<Outcome, CliError> {
    let u0 = a.analysis.u0()?;
    let hyp = a.analysis.hypothesis(&u0)?;
    let grid = a.analysis.grid(slopes_default_grid(a.analysis.hypothesis))?;
    let mut rows = Vec::new();
    let mut all_points = Vec::new();
    let mut checks = Vec::new();
    for &n in &grid.orders {
        let (target, floor) = match hyp {
            Hypothesis::H1 { .. } => (0.5 * (n as f64 - 1.0), 0.0),
            Hypothesis::H2 { gamma, c_x, .. } => (0.5 * (n as f64 - 1.0) - gamma, (n as f64 * c_x).max(1.0)),
        };
        let mut pts = Vec::new();
        for &t in grid.times.iter().filter(|&&t| t >= floor) {
            pts.push(a.quad.point(n, t, a.analysis.x, &u0)?);
        }
        match fit_log_slope(n, &pts, a.weighted, target) {
            Ok(est) => {
                let pass = (est.slope - target).abs() <= a.tolerance;
                checks.push(Check::new(
                    format!("slope_n{n}"),
                    pass,
                    format!(
                        "slope {:.4} +- {:.4} vs target {target} (tolerance {})",
                        est.slope, est.half_width, a.tolerance
                    ),
                ));
                rows.push(SlopeRow { estimate: est, pass });
            }
            Err(e) => checks.push(Check::new(format!("slope_n{n}"), false, e.to_string())),
        }
        all_points.extend(pts);
    }
    let mut csv = String::from("n,t,moment,std_error\n");
    for p in &all_points {
        let _ = writeln!(csv, "{},{},{},{}", p.n, p.t, p.value, p.std_error);
    }
    Ok(Outcome {
        command: "slopes",
        result: json!({ "u0": u0, "x": a.analysis.x, "hypothesis": hyp, "slopes": rows, "points": all_points }),
        csv: Some(csv),
        checks,
    })
}

#[derive(Args, Clone, Debug)]
pub struct TailsArgs {
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, default_value = "const:1")]
    pub u0: String,
    /// Exceedance levels; `0, 0.25, ..., 8` when omitted.
    #[arg(long)]
    pub thresholds: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value = "1,2,3")]
    pub pz_orders: String,
    /// Exponent of the large-deviation probe `z = t^sigma`.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Times of the large-deviation probe; none when omitted.
    #[arg(long)]
    pub probe_times: Option<String>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Moments `1..=max_order` at one point.
fn moment_table(
    quad: &QuadArgs,
    max_order: usize,
    t: f64,
    x: f64,
    u0: &InitialCondition,
) -> Result<Vec<(usize, f64)>, CliError> {
    (1..=max_order)
        .map(|n| quad.point(n, t, x, u0).map(|p| (n, p.value)))
        .collect()
}

pub fn tails_with_samples(a: &TailsArgs, set: &ReplicateSet) -> Result<Outcome, CliError> {
    let u0 = parse::initial_condition(&a.u0)?;
    let zs = match &a.thresholds {
        Some(s) => parse::reals(s)?,
        None => (0..=32).map(|i| i as f64 * 0.25).collect(),
    };
    let pz_orders = parse::orders(&a.pz_orders)?;
    let max_order = pz_orders.iter().map(|n| 2 * n).chain([5]).max().unwrap_or(5);
    let moments = moment_table(&a.quad, max_order, a.t, a.x, &u0)?;
    let inputs = TailInputs {
        t: a.t,
        x: a.x,
        moments: &moments,
        thresholds: &zs,
        pz_orders: &pz_orders,
        theta: a.theta,
        replicates: set.samples.len(),
    };
    let report = tail_report(&inputs, |z| tail_from_samples(set, z))?;

    let probe = match &a.probe_times {
        None => Vec::new(),
        Some(s) => {
            let kind = match u0 {
                InitialCondition::ConstantDensity { .. } => HypothesisKind::H1,
                InitialCondition::AtomicMeasure { .. } => HypothesisKind::H2,
            };
            large_deviation_probe(&parse::reals(s)?, a.sigma, kind, |t, z| {
                let m = moment_table(&a.quad, 5, t, a.x, &u0).map_err(|e| sbm_core::Error::Domain(e.to_string()))?;
                let k = k_star_hat(&m, t)?;
                Ok(ProbeObservation {
                    probability: tail_upper_bound(z, t, k, None)?,
                    replicates: None,
                })
            })?
        }
    };

    let mut checks = Vec::new();
    for p in &report.upper {
        if !p.censored {
            checks.push(Check::new(
                format!("upper_z{}", p.z),
                p.consistent,
                format!(
                    "frequency {} +- {} vs bound {}",
                    p.frequency, p.std_error, p.upper_bound
                ),
            ));
        }
    }
    for p in &report.paley_zygmund {
        checks.push(Check::new(
            format!("paley_zygmund_n{}", p.n),
            p.consistent,
            format!(
                "bound {} at z = {} vs frequency {} +- {}",
                p.lower_bound, p.threshold, p.frequency, p.std_error
            ),
        ));
    }
    let mut csv = String::from("z,upper_bound,frequency,std_error,censored\n");
    for p in &report.upper {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            p.z, p.upper_bound, p.frequency, p.std_error, p.censored
        );
    }
    Ok(Outcome {
        command: "tails",
        result: json!({ "u0": u0, "moments": moments, "report": report, "sigma": a.sigma, "probe": probe }),
        csv: Some(csv),
        checks,
    })
}

pub fn tails(a: &TailsArgs) -> Result<Outcome, CliError> {
    let u0 = parse::initial_condition(&a.u0)?;
    let set = run_replicates(&a.sim.config(a.t, a.quad.seed)?, &u0, a.x)?;
    tails_with_samples(a, &set)
}

#[derive(Args, Clone, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Replicates for the simulator calibration runs.
    #[arg(long, default_value_t = 5_000)]
    pub calibration_replicates: usize,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Simulator calibration against exact smoothed moments at `t = 1`, `x = 0`:
/// criticality, `E[uhat] = p_{1+h}(0)` for a unit Dirac mass, and
/// `E[uhat] = 1`, `E[uhat^2] = 1 + (sqrt(1+h) - sqrt h)/sqrt(pi)` for `K = 1`.
pub fn calibration(sim: &SimArgs, replicates: usize, seed: u64) -> Result<Outcome, CliError> {
    let (t, x) = (1.0, 0.0);
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    let mut csv = String::from("u0,bandwidth,n,mean,std_error,exact\n");
    for (label, u0) in [
        ("const", InitialCondition::constant(1.0)?),
        ("dirac", InitialCondition::dirac(0.0)),
    ] {
        let mut sa = sim.clone();
        sa.replicates = replicates;
        let set = run_replicates(&sa.config(t, seed)?, &u0, x)?;
        let m = moments_from_samples(&set, &[1, 2], sa.extrapolation)?;
        checks.push(criticality(
            &format!("criticality_{label}"),
            &set,
            m.total_mass.mean,
            m.total_mass.std_error,
        ));
        for bm in &m.per_bandwidth {
            let h = bm.bandwidth;
            let mut anchors = vec![(1, smoothed_mean(&u0, t, x, h)?)];
            if label == "const" {
                anchors.push((2, smoothed_second_moment_constant(1.0, t, h)));
            }
            for (n, exact) in anchors {
                let e = bm.moments[n - 1];
                let _ = writeln!(csv, "{label},{h},{n},{},{},{exact}", e.mean, e.std_error);
                checks.push(Check::new(
                    format!("anchor_{label}_n{n}_h{h}"),
                    (e.mean - exact).abs() <= 3.0 * e.std_error,
                    format!("mean {} +- {} vs exact {exact}", e.mean, e.std_error),
                ));
            }
        }
        runs.push(json!({ "u0": u0, "moments": m }));
    }
    Ok(Outcome {
        command: "calibration",
        result: Value::Array(runs),
        csv: Some(csv),
        checks,
    })
}

pub fn report(a: &ReportArgs) -> Result<Outcome, CliError> {
    let analysis = |h: HypothesisArg| AnalysisArgs {
        hypothesis: h,
        u0: None,
        x: 0.0,
        grid: None,
    };
    let mut sections = serde_json::Map::new();
    let mut checks = Vec::new();
    let mut csv = String::from("section,check,pass\n");
    let mut add = |name: &str, o: Outcome| {
        for c in &o.checks {
            let _ = writeln!(csv, "{name},{},{}", c.name, c.pass);
            checks.push(Check::new(format!("{name}.{}", c.name), c.pass, c.detail.clone()));
        }
        sections.insert(name.to_string(), o.result);
    };
    for h in [HypothesisArg::H1, HypothesisArg::H2] {
        let tag = if h == HypothesisArg::H1 { "h1" } else { "h2" };
        add(
            &format!("bounds_{tag}"),
            bounds(&BoundsArgs {
                analysis: analysis(h),
                max_band: 3.0,
                quad: a.quad.clone(),
                out: None,
            })?,
        );
        add(
            &format!("slopes_{tag}"),
            slopes(&SlopesArgs {
                analysis: analysis(h),
                tolerance: 0.05,
                weighted: false,
                quad: a.quad.clone(),
                out: None,
            })?,
        );
    }
    let tails_args = TailsArgs {
        t: 1.0,
        x: 0.0,
        u0: "const:1".into(),
        thresholds: None,
        theta: 0.5,
        pz_orders: "1,2,3".into(),
        sigma: 1.0,
        probe_times: None,
        sim: a.sim.clone(),
        quad: a.quad.clone(),
        out: None,
    };
    add("tails", tails(&tails_args)?);
    add(
        "calibration",
        calibration(&a.sim, a.calibration_replicates, a.quad.seed)?,
    );
    // Trend toward 1 is reported, not asserted.
    let u0 = InitialCondition::constant(1.0)?;
    let high: Vec<(usize, f64)> = (2..=a.quad.order_cap.min(7))
        .map(|n| a.quad.point(n, 1.0, 0.0, &u0).map(|p| (n, p.value)))
        .collect::<Result<_, _>>()?;
    sections.insert("high_moment_ratio".into(), to_value(&high_moment_ratio(&high)?)?);
    Ok(Outcome {
        command: "report",
        result: Value::Object(sections),
        csv: Some(csv),
        checks,
    })
}
