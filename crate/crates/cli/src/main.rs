mod format;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use rejsched::adversary::{
    adv_load_immediate, adv_load_unit, adv_maxflow, witness_max_load, witness_max_queue, AdversaryReport,
};
use rejsched::engine::{replay_check, simulate, Trace};
use rejsched::flowtime::{Coupled, FtUnit, Variant};
use rejsched::gen::{generate, GenSpec, Shape};
use rejsched::loadbalance::{LbDoubling, LbUnit, Separated};
use rejsched::metrics::{metrics, Metrics};
use rejsched::model::{Instance, Params, ProblemKind};
use rejsched::oracle::{
    brute_force_opt_load, brute_force_opt_maxflow, build_unit_certificate, verify_certificate, OracleConfig,
};
use rejsched::rational::{int, Rational};

use format::{instance_json, rat_parse, rat_str, read_instance, CertificateFile};

/// Error carrying a machine-readable code for failures outside the library.
#[derive(Debug)]
struct CliError {
    code: &'static str,
    message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn fail(code: &'static str, message: impl Into<String>) -> anyhow::Error {
    CliError {
        code,
        message: message.into(),
    }
    .into()
}

fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.code;
        }
        if let Some(e) = cause.downcast_ref::<rejsched::error::Error>() {
            return e.code();
        }
        if cause.is::<serde_json::Error>() {
            return "malformed-file";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

#[derive(Parser)]
#[command(name = "rejsched", version, about = "Online scheduling with job rejection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an algorithm on instance files and report metrics and invariant checks.
    Run {
        #[arg(required = true)]
        instances: Vec<PathBuf>,
        #[arg(long)]
        algorithm: String,
        /// Overrides the instance's epsilon.
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        t_star: Option<String>,
        /// Trace CSV path; a directory when several instances are given.
        #[arg(long)]
        emit_trace: Option<PathBuf>,
        /// Worker threads when several instances are given.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Exact offline optimum of a small instance.
    Oracle { instance: PathBuf, objective: Objective },
    /// Run a lower-bound construction against an algorithm.
    Adversary {
        which: Which,
        /// Machine count; ignored by `maxflow`, which derives it from epsilon.
        machines: Option<usize>,
        /// Where to save the generated instance; embedded in the report otherwise.
        instance_out: Option<PathBuf>,
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        epsilon: String,
        #[arg(long)]
        t_star: Option<String>,
        #[arg(long)]
        emit_trace: Option<PathBuf>,
    },
    /// Build a dual certificate from an ft-unit trace, or verify a certificate file.
    Certify {
        instance: PathBuf,
        /// A trace CSV (build, then verify) or a certificate JSON (verify only).
        input: PathBuf,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        t_star: Option<String>,
    },
    /// Generate a seeded random instance.
    Gen {
        kind: String,
        n: usize,
        m: usize,
        #[arg(default_value = "uniform")]
        shape: String,
        #[arg(long)]
        epsilon: String,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Load,
    Maxflow,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    LbUnit,
    LbImmediate,
    Maxflow,
}

const ALGORITHMS: [&str; 7] = ["lb-unit", "lb-separated", "lb-doubling", "ft-unit", "ab", "ab-doubling", "gen-ab"];

enum AnyPolicy {
    LbUnit(LbUnit),
    Separated(Separated),
    LbDoubling(LbDoubling),
    FtUnit(FtUnit),
    Coupled(Coupled),
}

macro_rules! with_policy {
    ($policy:expr, $p:ident => $body:expr) => {
        match $policy {
            AnyPolicy::LbUnit($p) => $body,
            AnyPolicy::Separated($p) => $body,
            AnyPolicy::LbDoubling($p) => $body,
            AnyPolicy::FtUnit($p) => $body,
            AnyPolicy::Coupled($p) => $body,
        }
    };
}

fn is_doubling(algorithm: &str) -> bool {
    algorithm.ends_with("-doubling")
}

fn params_for(algorithm: &str, eps: &Rational, t: Option<Rational>) -> Result<Params> {
    Ok(match algorithm {
        "lb-unit" => Params::lb_unit(eps, t)?,
        "lb-separated" | "lb-doubling" => Params::lb_range(eps, t)?,
        "ft-unit" => Params::ft_unit(eps, t)?,
        _ => Params::alg_a(eps, t)?,
    })
}

fn build_policy(algorithm: &str, eps: &Rational, t_star: Option<&str>) -> Result<(AnyPolicy, Params)> {
    if !ALGORITHMS.contains(&algorithm) {
        return Err(fail(
            "unknown-algorithm",
            format!("unknown algorithm {algorithm:?}; expected one of {}", ALGORITHMS.join(", ")),
        ));
    }
    let t = match (t_star, is_doubling(algorithm)) {
        (_, true) => None,
        (Some(s), false) => Some(rat_parse(s, "--t-star")?),
        (None, false) => return Err(fail("missing-t-star", format!("{algorithm} needs --t-star"))),
    };
    let params = params_for(algorithm, eps, t.clone())?;
    let policy = match algorithm {
        "lb-unit" => AnyPolicy::LbUnit(LbUnit::new(&params)?),
        "lb-separated" => AnyPolicy::Separated(Separated::new(&params)?),
        "lb-doubling" => AnyPolicy::LbDoubling(LbDoubling::new(eps)?),
        "ft-unit" => AnyPolicy::FtUnit(FtUnit::new(&params)?),
        "ab" | "ab-doubling" => AnyPolicy::Coupled(Coupled::new(eps, t, Variant::Weighted)?),
        _ => AnyPolicy::Coupled(Coupled::new(eps, t, Variant::Generalized)?),
    };
    Ok((policy, params))
}

#[derive(Serialize)]
struct MetricsDoc {
    max_load_over_time: String,
    max_weighted_flowtime: String,
    max_flowtime: String,
    rejected_count_fraction_prefix_max: String,
    rejected_weight_fraction_prefix_max: String,
    rejected_volume_fraction_prefix_max: String,
    arrivals: usize,
    completions: usize,
    rejections: usize,
}

impl From<&Metrics> for MetricsDoc {
    fn from(m: &Metrics) -> Self {
        MetricsDoc {
            max_load_over_time: rat_str(&m.max_load_over_time),
            max_weighted_flowtime: rat_str(&m.max_weighted_flowtime),
            max_flowtime: rat_str(&m.max_flowtime),
            rejected_count_fraction_prefix_max: rat_str(&m.rejected_count_fraction_prefix_max),
            rejected_weight_fraction_prefix_max: rat_str(&m.rejected_weight_fraction_prefix_max),
            rejected_volume_fraction_prefix_max: rat_str(&m.rejected_volume_fraction_prefix_max),
            arrivals: m.arrivals,
            completions: m.completions,
            rejections: m.rejections,
        }
    }
}

#[derive(Serialize)]
struct ParamsDoc {
    epsilon: String,
    epsilon_instance: String,
    t_star: Option<String>,
    alpha: String,
    delta: i64,
    beta: String,
}

#[derive(Serialize)]
struct PhaseDoc {
    time: String,
    t_star: String,
}

#[derive(Serialize)]
struct RunReport {
    instance: String,
    algorithm: String,
    metrics: MetricsDoc,
    params_used: ParamsDoc,
    phase_boundaries: Vec<PhaseDoc>,
    trace_path: Option<String>,
    pass_fail: BTreeMap<String, bool>,
}

/// Checks the bounds each algorithm guarantees when `T*` is at least the
/// offline optimum.
fn declared_checks(algorithm: &str, m: &Metrics, p: &Params, trace: &Trace) -> BTreeMap<String, bool> {
    let mut out = BTreeMap::new();
    let eps = &p.epsilon;
    if is_doubling(algorithm) {
        let phases = trace.phase_boundaries();
        let ok = phases.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1);
        out.insert("phase-boundaries-monotone".into(), ok);
        return out;
    }
    let t = p.t_star.clone().expect("t_star checked");
    match algorithm {
        "lb-unit" => {
            out.insert("rejection-budget".into(), &m.rejected_count_fraction_prefix_max <= eps);
        }
        "lb-separated" => {
            out.insert("rejection-budget".into(), &m.rejected_count_fraction_prefix_max <= eps);
            let cap = int(2) * &p.alpha * int(p.delta) * &t;
            out.insert("composite-load".into(), m.max_load_over_time <= cap);
        }
        "ft-unit" => {
            out.insert("rejection-budget".into(), &m.rejected_count_fraction_prefix_max <= eps);
            out.insert("flowtime-bound".into(), m.max_flowtime <= &t / eps);
        }
        "ab" => {
            out.insert("rejection-budget".into(), m.rejected_weight_fraction_prefix_max <= int(20) * eps);
            out.insert("flowtime-bound".into(), m.max_weighted_flowtime <= int(2) * &p.beta * &t);
        }
        _ => {
            out.insert("rejection-budget".into(), m.rejected_weight_fraction_prefix_max <= int(20) * eps);
            let a2 = &p.alpha * &p.alpha;
            let e4 = eps * eps * eps * eps;
            out.insert("flowtime-bound".into(), m.max_weighted_flowtime <= int(12) * (a2 + int(2)) * &t / e4);
        }
    }
    out
}

fn run_one(
    path: &Path,
    algorithm: &str,
    epsilon: Option<&str>,
    t_star: Option<&str>,
    trace_out: Option<PathBuf>,
) -> Result<RunReport> {
    let inst = read_instance(&path.to_string_lossy())?;
    let eps = match epsilon {
        Some(s) => rat_parse(s, "--epsilon")?,
        None => inst.epsilon.clone(),
    };
    let (policy, params) = build_policy(algorithm, &eps, t_star)?;
    let trace = with_policy!(policy, p => simulate(p, &inst)?);
    let m = metrics(&trace, &inst)?;
    let mut pass_fail = declared_checks(algorithm, &m, &params, &trace);
    pass_fail.insert("replay".into(), replay_check(&trace, &inst).is_ok());
    if let Some(out) = &trace_out {
        std::fs::write(out, trace.to_csv()).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(RunReport {
        instance: path.display().to_string(),
        algorithm: algorithm.to_string(),
        metrics: (&m).into(),
        params_used: ParamsDoc {
            epsilon: rat_str(&eps),
            epsilon_instance: rat_str(&inst.epsilon),
            t_star: params.t_star.as_ref().map(rat_str),
            alpha: rat_str(&params.alpha),
            delta: params.delta,
            beta: rat_str(&params.beta),
        },
        phase_boundaries: trace
            .phase_boundaries()
            .iter()
            .map(|(time, t)| PhaseDoc {
                time: rat_str(time),
                t_star: rat_str(t),
            })
            .collect(),
        trace_path: trace_out.map(|p| p.display().to_string()),
        pass_fail,
    })
}

fn cmd_run(
    instances: &[PathBuf],
    algorithm: &str,
    epsilon: Option<&str>,
    t_star: Option<&str>,
    emit_trace: Option<&Path>,
    jobs: usize,
) -> Result<(Value, bool)> {
    let trace_path = |path: &Path| -> Option<PathBuf> {
        let out = emit_trace?;
        if instances.len() == 1 {
            return Some(out.to_path_buf());
        }
        let stem = path.file_stem().map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
        Some(out.join(format!("{stem}.csv")))
    };
    if instances.len() > 1 {
        if let Some(dir) = emit_trace {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    let workers = jobs.clamp(1, instances.len());
    let mut results: Vec<Option<Result<RunReport>>> = (0..instances.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunk = instances.len().div_ceil(workers);
        for (paths, slots) in instances.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let trace_path = &trace_path;
            s.spawn(move || {
                for (path, slot) in paths.iter().zip(slots) {
                    *slot = Some(run_one(path, algorithm, epsilon, t_star, trace_path(path)));
                }
            });
        }
    });
    let reports: Vec<RunReport> = results
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect::<Result<_>>()?;
    let ok = reports.iter().all(|r| r.pass_fail.values().all(|&b| b));
    let doc = if reports.len() == 1 {
        serde_json::to_value(&reports[0])?
    } else {
        serde_json::to_value(&reports)?
    };
    Ok((doc, ok))
}

fn cmd_oracle(path: &Path, objective: Objective) -> Result<(Value, bool)> {
    let inst = read_instance(&path.to_string_lossy())?;
    let config = OracleConfig::default();
    let doc = match objective {
        Objective::Load => json!({
            "objective": "load",
            "value": rat_str(&brute_force_opt_load(&inst, &config)?),
            "exact": true,
        }),
        Objective::Maxflow => json!({
            "objective": "maxflow",
            "value": rat_str(&brute_force_opt_maxflow(&inst, &config)?),
            "exact": false,
            "relative_tolerance": rat_str(&config.tolerance),
        }),
    };
    Ok((doc, true))
}

fn adversary_report(
    which: Which,
    algorithm: &str,
    eps: &Rational,
    machines: Option<usize>,
    policy: AnyPolicy,
) -> Result<AdversaryReport> {
    let need_m = || machines.ok_or_else(|| fail("invalid-argument", "this adversary needs a machine count"));
    Ok(match which {
        Which::LbUnit => {
            let m = need_m()?;
            with_policy!(policy, p => adv_load_unit(eps, m, p)?)
        }
        Which::LbImmediate => {
            if !matches!(policy, AnyPolicy::LbUnit(_) | AnyPolicy::FtUnit(_)) {
                return Err(fail(
                    "policy-mismatch",
                    format!("lb-immediate requires a policy that rejects only at arrival; {algorithm} may reject later"),
                ));
            }
            let m = need_m()?;
            with_policy!(policy, p => adv_load_immediate(eps, m, p, usize::MAX)?)
        }
        Which::Maxflow => with_policy!(policy, p => adv_maxflow(eps, p)?),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_adversary(
    which: Which,
    machines: Option<usize>,
    instance_out: Option<&Path>,
    algorithm: &str,
    epsilon: &str,
    t_star: Option<&str>,
    emit_trace: Option<&Path>,
) -> Result<(Value, bool)> {
    let eps = rat_parse(epsilon, "--epsilon")?;
    let (policy, _) = build_policy(algorithm, &eps, t_star)?;
    let report = adversary_report(which, algorithm, &eps, machines, policy)?;
    let inst = &report.generated_instance;
    let witness = match which {
        Which::Maxflow => int(witness_max_queue(inst, &report.offline_assignment)?),
        _ => witness_max_load(inst, &report.offline_assignment)?,
    };
    let (fresh, _) = build_policy(algorithm, &eps, t_star)?;
    let replayed = with_policy!(fresh, p => simulate(p, inst)?);
    let mut pass_fail = BTreeMap::new();
    pass_fail.insert("witness-bound", witness <= report.offline_objective_bound);
    pass_fail.insert("replay", replayed == report.trace);
    let ok = pass_fail.values().all(|&b| b);

    if let Some(out) = emit_trace {
        std::fs::write(out, report.trace.to_csv()).with_context(|| format!("cannot write {}", out.display()))?;
    }
    let mut doc = json!({
        "adversary": which.to_possible_value().expect("named").get_name(),
        "algorithm": algorithm,
        "epsilon": rat_str(&eps),
        "machines": inst.machines,
        "jobs": inst.jobs.len(),
        "online_objective": rat_str(&report.online_objective),
        "offline_objective_bound": rat_str(&report.offline_objective_bound),
        "offline_witness": rat_str(&witness),
        "rejection_fraction_used": rat_str(&report.rejection_fraction_used),
        "rejected": report.rejected_count(),
        "phases_completed": report.phases_completed,
        "phase_jobs": report.phase_jobs,
        "phase_machines": report.phase_machines,
        "final_loads": report.final_loads.iter().map(rat_str).collect::<Vec<_>>(),
        "offline_assignment": report.offline_assignment,
        "trace_path": emit_trace.map(|p| p.display().to_string()),
        "pass_fail": pass_fail,
    });
    match instance_out {
        Some(path) => {
            std::fs::write(path, instance_json(inst)).with_context(|| format!("cannot write {}", path.display()))?;
            doc["instance_path"] = json!(path.display().to_string());
        }
        None => doc["instance"] = serde_json::from_str(&instance_json(inst))?,
    }
    Ok((doc, ok))
}

fn cmd_certify(instance: &Path, input: &Path, epsilon: Option<&str>, t_star: Option<&str>) -> Result<(Value, bool)> {
    let inst = read_instance(&instance.to_string_lossy())?;
    let text = std::fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let (cert, built) = match serde_json::from_str::<CertificateFile>(&text) {
        Ok(file) => (file.to_certificate()?, false),
        Err(_) => {
            let trace = Trace::from_csv(&text)?;
            let eps = match epsilon {
                Some(s) => rat_parse(s, "--epsilon")?,
                None => inst.epsilon.clone(),
            };
            let t = t_star.ok_or_else(|| fail("missing-t-star", "building a certificate needs --t-star"))?;
            let params = Params::ft_unit(&eps, Some(rat_parse(t, "--t-star")?))?;
            (build_unit_certificate(&trace, &params)?, true)
        }
    };
    let mut doc = json!({
        "built": built,
        "certificate": CertificateFile::from_certificate(&cert),
    });
    let ok = match verify_certificate(&cert, &inst) {
        Ok(bound) => {
            doc["feasible"] = json!(true);
            doc["bound"] = json!(rat_str(&bound));
            true
        }
        Err(rejsched::error::Error::InfeasibleCertificate { job, machine, detail }) => {
            doc["feasible"] = json!(false);
            doc["violation"] = json!({ "job": job, "machine": machine, "detail": detail });
            false
        }
        Err(e) => return Err(e.into()),
    };
    Ok((doc, ok))
}

fn cmd_gen(kind: &str, n: usize, m: usize, shape: &str, epsilon: &str, seed: u64) -> Result<(Value, bool)> {
    let spec = GenSpec {
        kind: ProblemKind::from_name(kind)?,
        jobs: n,
        machines: m,
        epsilon: rat_parse(epsilon, "--epsilon")?,
        seed,
        shape: Shape::from_name(shape)?,
    };
    let inst: Instance = generate(&spec)?;
    Ok((serde_json::from_str(&instance_json(&inst))?, true))
}

fn execute(cli: Cli) -> Result<(Value, bool)> {
    match cli.command {
        Command::Run {
            instances,
            algorithm,
            epsilon,
            t_star,
            emit_trace,
            jobs,
        } => cmd_run(
            &instances,
            &algorithm,
            epsilon.as_deref(),
            t_star.as_deref(),
            emit_trace.as_deref(),
            jobs,
        ),
        Command::Oracle { instance, objective } => cmd_oracle(&instance, objective),
        Command::Adversary {
            which,
            machines,
            instance_out,
            algorithm,
            epsilon,
            t_star,
            emit_trace,
        } => cmd_adversary(
            which,
            machines,
            instance_out.as_deref(),
            &algorithm,
            &epsilon,
            t_star.as_deref(),
            emit_trace.as_deref(),
        ),
        Command::Certify {
            instance,
            input,
            epsilon,
            t_star,
        } => cmd_certify(&instance, &input, epsilon.as_deref(), t_star.as_deref()),
        Command::Gen {
            kind,
            n,
            m,
            shape,
            epsilon,
            seed,
        } => cmd_gen(&kind, n, m, &shape, &epsilon, seed),
    }
}

/// Ignores write errors so a closed pipe ends the output quietly.
fn emit(doc: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(doc).expect("document serializes"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok((doc, ok)) => {
            emit(&doc);
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("rejsched: a declared check failed");
                ExitCode::from(1)
            }
        }
        Err(err) => {
            let code = error_code(&err);
            eprintln!("rejsched: {err:#}");
            let doc = json!({ "error": code, "message": format!("{err:#}") });
            emit(&doc);
            ExitCode::from(2)
        }
    }
}
