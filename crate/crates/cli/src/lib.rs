//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand, writes a JSON report plus CSV artifacts into the output
//! directory and returns the process exit code:
//! 0 pass, 1 violation or witness found, 2 configuration or runtime error.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use dde_iss::certify::{check_condition, falsify, Condition, ConditionKind, MIN_BUDGET};
use dde_iss::comparison::ComparisonFn;
use dde_iss::dynamics::{default_step, integrate, InputSignal};
use dde_iss::estimate::{
    brs_envelope, brs_samples, cep_check, estimate_uag, estimate_ugs, estimate_ulim, estimate_ulim_mixed, estimate_uls,
    fit_iss_kl, simulate_runs, starts, IssOptions, Property, RunOptions, EVIDENCE,
};
use dde_iss::example::{example_system, run_claim, BumpPsi, ClaimItem, THETA};
use dde_iss::lkf::{driver_derivative, sandwich_check, LkfCandidate};
use dde_iss::report::SCHEMA_VERSION;
use dde_iss::Error;
use serde::Serialize;
use serde_json::{json, Value};

use config::{Resolved, RunConfig};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DDE_ISS_OUT";

#[derive(Debug, Parser)]
#[command(name = "dde-iss", version, about = "Simulate delay systems and check stability conditions on samples")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and CSV files.
    #[arg(long, global = true, env = OUT_ENV, default_value = "out")]
    out: PathBuf,
    /// Seed of the sample space.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of samples drawn.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate {
        /// End time of the trajectory
        #[arg(long)]
        horizon: Option<f64>,
        /// Solver step; defaults to θ/100
        #[arg(long)]
        step: Option<f64>,
    },
    /// Evaluate the functional and its derivative at the configured history.
    LkfEval,
    /// Sampled check of a dissipation condition.
    Certify {
        /// implication-pointwise, implication-lkf-wise, dissipative-pointwise, dissipative-lkf-wise, ugs, klw, local-decay
        #[arg(long)]
        kind: Option<ConditionKind>,
        /// Slack allowed before a sample counts as a violation
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Empirical stability envelopes.
    Estimate {
        /// v-ugs, v-ugb, v-uls, v-ulim, mixed-v-ulim, v-uag, v-guag, v-iss, v-brs, v-cep
        #[arg(long)]
        property: Option<String>,
        /// Target level for limit and attractivity estimates
        #[arg(long)]
        eps: Option<f64>,
        /// Radius of the initial-condition ball
        #[arg(long)]
        r: Option<f64>,
        /// Simulation horizon; limit estimates use `estimate.t_cap` instead
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Verdicts for the benchmark system.
    Example {
        /// i, ii, iii, iv, v, vi or all
        #[arg(long, default_value = "all")]
        item: String,
    },
    /// Search for a counterexample to a condition.
    Falsify {
        /// Condition to attack; same names as for certify
        #[arg(long)]
        kind: Option<ConditionKind>,
        /// Number of candidate histories tried (at least 100)
        #[arg(long)]
        budget: Option<usize>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Report written for every subcommand.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    verdict: &'a str,
    evidence: &'a str,
    /// Ids of the checks performed.
    checks: Vec<String>,
    config: &'a RunConfig,
    result: T,
}

struct Done {
    pass: bool,
    line: String,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn write(&self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", self.out.display())))?;
        let p = self.out.join(name);
        fs::write(&p, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    fn report<T: Serialize>(&self, command: &str, pass: bool, checks: Vec<String>, result: T) -> Result<PathBuf, Failure> {
        let rep = Report {
            schema_version: SCHEMA_VERSION,
            command,
            verdict: if pass { "pass" } else { "fail" },
            evidence: EVIDENCE,
            checks,
            config: &self.cfg,
            result,
        };
        let mut text = serde_json::to_string_pretty(&rep).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(&format!("{command}.json"), &text)
    }

    fn resolve(&self) -> Result<Resolved, Failure> {
        self.cfg.resolve().map_err(Failure::Config)
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            horizon: self.cfg.solver.horizon,
            step: self.cfg.solver.step,
            heldout_seeds: self.cfg.estimate.heldout_seeds,
        }
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(done) => {
            println!("{}", done.line);
            if done.pass {
                0
            } else {
                1
            }
        }
        Err(f) => {
            let (kind, message) = match f {
                Failure::Config(m) => ("config", m),
                Failure::Runtime(m) => ("runtime", m),
            };
            eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
            2
        }
    }
}

fn execute(cli: Cli) -> Result<Done, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.example.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.samples.count = n;
        cfg.example.samples = n;
    }
    match &cli.cmd {
        Command::Simulate { horizon, step } => {
            if let Some(h) = horizon {
                cfg.solver.horizon = *h;
            }
            if step.is_some() {
                cfg.solver.step = *step;
            }
        }
        Command::Certify { kind, tol } => {
            if let Some(k) = kind {
                cfg.certify.kind = k.id().into();
            }
            if let Some(t) = tol {
                cfg.certify.tol = *t;
            }
        }
        Command::Estimate { property, eps, r, horizon } => {
            if let Some(p) = property {
                cfg.estimate.property = parse_property(p)?;
            }
            if let Some(e) = eps {
                cfg.estimate.eps = *e;
            }
            if let Some(r) = r {
                cfg.estimate.r = *r;
            }
            if let Some(h) = horizon {
                cfg.solver.horizon = *h;
            }
        }
        Command::Falsify { kind, budget } => {
            if let Some(k) = kind {
                cfg.certify.kind = k.id().into();
            }
            if let Some(b) = budget {
                cfg.falsify.budget = *b;
            }
        }
        Command::LkfEval | Command::Example { .. } => {}
    }
    let ctx = Ctx { cfg, out: cli.out };
    let body = || match &cli.cmd {
        Command::Simulate { .. } => simulate(&ctx),
        Command::LkfEval => lkf_eval(&ctx),
        Command::Certify { .. } => certify(&ctx),
        Command::Estimate { .. } => estimate(&ctx),
        Command::Example { item } => example(&ctx, item),
        Command::Falsify { .. } => falsify_cmd(&ctx),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Failure::Runtime(e.to_string()))?
            .install(body),
        None => body(),
    }
}

fn parse_property(s: &str) -> Result<Property, Failure> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase())).map_err(|_| {
        Failure::Config(format!(
            "unknown property '{s}', expected one of v-ugs, v-ugb, v-uls, v-ulim, mixed-v-ulim, v-uag, v-guag, v-iss, v-brs, v-cep"
        ))
    })
}

fn condition_kind(ctx: &Ctx) -> Result<ConditionKind, Failure> {
    ctx.cfg.certify.kind.parse().map_err(Failure::Config)
}

fn shown(p: &Path) -> String {
    p.display().to_string()
}

fn simulate(ctx: &Ctx) -> Result<Done, Failure> {
    let r = ctx.resolve()?;
    let phi = ctx.cfg.history(&r.sys).map_err(Failure::Config)?;
    let horizon = ctx.cfg.solver.horizon;
    let step = ctx.cfg.solver.step.unwrap_or_else(|| default_step(r.sys.theta));
    let traj = integrate(&r.sys, &phi, &InputSignal::constant(&r.input, horizon), horizon, step)?;
    let csv = ctx.write("trajectory.csv", &traj.to_csv())?;
    let t_end = traj.t_end();
    let last = traj.state(t_end)?;
    let result = json!({
        "t_end": t_end,
        "step": step,
        "escape": traj.escape,
        "final_state": last,
        "sup_norm": traj.sup_norm_on(-r.sys.theta, t_end),
        "trajectory_csv": shown(&csv),
    });
    let path = ctx.report("simulate", traj.escape.is_none(), vec!["trajectory".into()], result)?;
    let line = match traj.escape {
        Some(t) => format!("simulate: escaped at t = {t}; report {}", shown(&path)),
        None => format!("simulate: reached t = {t_end} with step {step}; report {}", shown(&path)),
    };
    Ok(Done {
        pass: traj.escape.is_none(),
        line,
    })
}

fn lkf_eval(ctx: &Ctx) -> Result<Done, Failure> {
    let r = ctx.resolve()?;
    let phi = ctx.cfg.history(&r.sys).map_err(Failure::Config)?;
    let value = r.v.eval(&phi)?;
    let head = phi.head().iter().map(|x| x * x).sum::<f64>().sqrt();
    let (lower, upper) = (r.v.psi1.eval(head), r.v.psi2.eval(phi.sup_norm()));
    let own_ok = lower <= value * (1.0 + 1e-9) + 1e-12 && value <= upper * (1.0 + 1e-9) + 1e-12;
    let drift = r.sys.eval(&phi, &r.input);
    let deriv = driver_derivative(&r.v, &phi, &drift, None)?;
    let sandwich = sandwich_check(&r.v, &r.space, r.sys.n, false);
    let pass = own_ok && sandwich.pass;
    let result = json!({
        "lkf": r.v.label(),
        "value": value,
        "psi1_at_head": lower,
        "psi2_at_norm": upper,
        "driver_derivative": deriv,
        "sandwich": sandwich,
    });
    let path = ctx.report("lkf-eval", pass, vec!["lkf-sandwich".into(), "driver-derivative".into()], result)?;
    Ok(Done {
        pass,
        line: format!(
            "lkf-eval: V = {value:.6e}, derivative {:.6e}, sandwich {}; report {}",
            deriv.estimate,
            if pass { "holds" } else { "violated" },
            shown(&path)
        ),
    })
}

fn certify(ctx: &Ctx) -> Result<Done, Failure> {
    let r = ctx.resolve()?;
    let kind = condition_kind(ctx)?;
    let cond = Condition::new(kind, &r.sys, &r.v, &r.alpha, &r.chi).with_tol(ctx.cfg.certify.tol);
    let rep = check_condition(&cond, &r.space)?;
    let pass = rep.pass;
    let line = format!(
        "certify {}: {} ({} violations among {} active of {} samples)",
        kind.id(),
        if pass { "pass" } else { "fail" },
        rep.violation_count,
        rep.gated,
        rep.samples
    );
    let path = ctx.report("certify", pass, vec![kind.id().into()], &rep)?;
    Ok(Done {
        pass,
        line: format!("{line}; report {}", shown(&path)),
    })
}

fn traces_csv(runs: &[dde_iss::estimate::Run]) -> String {
    let mut s = String::from("run,t,v\n");
    for r in runs {
        for (t, v) in r.trace.times.iter().zip(&r.trace.values) {
            s.push_str(&format!("{},{t:.16e},{v:.16e}\n", r.index));
        }
    }
    s
}

fn estimate(ctx: &Ctx) -> Result<Done, Failure> {
    let r = ctx.resolve()?;
    let e = &ctx.cfg.estimate;
    let opts = ctx.run_options();
    let prop = e.property;
    let step = opts.step.unwrap_or_else(|| default_step(r.sys.theta));
    // input gain used by the limit-type estimates
    let gamma = |r: &Resolved| -> Result<ComparisonFn, Failure> {
        if r.space.input_amplitude == 0.0 {
            return Ok(ComparisonFn::zero());
        }
        let fit = estimate_ugs(&r.sys, &r.v, &r.space, &RunOptions { heldout_seeds: 0, ..opts.clone() })?;
        Ok(fit.gamma_fn()?)
    };
    let fit_failed = |msg: String| -> (bool, Value) { (false, json!({ "property": prop, "fit_failure": msg })) };
    let (pass, result): (bool, Value) = match prop {
        Property::VUgs | Property::VUgb => {
            let fit = estimate_ugs(&r.sys, &r.v, &r.space, &opts)?;
            let fit = if prop == Property::VUgb { fit.as_ugb() } else { fit };
            let ok = fit.training_violations == 0 && fit.heldout.as_ref().map_or(true, |h| h.violations == 0);
            (ok, to_value(&fit)?)
        }
        Property::VUls => {
            let fit = estimate_uls(&r.sys, &r.v, &r.space, e.r, &opts)?;
            let ok = fit.training_violations == 0 && fit.heldout.as_ref().map_or(true, |h| h.violations == 0);
            (ok, to_value(&fit)?)
        }
        Property::VUlim | Property::MixedVUlim | Property::VUag | Property::VGuag => {
            let g = gamma(&r)?;
            let fit = match prop {
                Property::VUlim => estimate_ulim(&r.sys, &r.v, &g, e.eps, e.r, &r.space, e.t_cap)?,
                Property::MixedVUlim => estimate_ulim_mixed(&r.sys, &r.v, &g, e.eps, e.r, &r.space, e.t_cap)?,
                Property::VUag => estimate_uag(&r.sys, &r.v, &g, e.eps, e.r, &r.space, e.t_cap, false)?,
                _ => estimate_uag(&r.sys, &r.v, &g, e.eps, e.r, &r.space, e.t_cap, true)?,
            };
            (fit.not_reached == 0, to_value(&fit)?)
        }
        Property::VIss => {
            let io = IssOptions {
                run: opts.clone(),
                levels: e.levels,
                ..IssOptions::default()
            };
            match fit_iss_kl(&r.sys, &r.v, &r.space, &io) {
                Ok(fit) => {
                    let rep = &fit.report;
                    let ok = rep.training_violations == 0 && rep.heldout.as_ref().map_or(true, |h| h.violations == 0);
                    (ok, to_value(rep)?)
                }
                Err(Error::FitFailure(m)) => fit_failed(m),
                Err(other) => return Err(other.into()),
            }
        }
        Property::VBrs => {
            let samples = brs_samples(&r.sys, &r.v, &r.space, &opts, 10)?;
            let env = brs_envelope(&samples)?;
            let ok = samples.iter().all(|&(a, b, t, v)| env.eval(a, b, t) >= v);
            (ok, json!({ "property": prop, "evidence": EVIDENCE, "samples": samples.len(), "envelope": env }))
        }
        Property::VCep => {
            let res = cep_check(&r.sys, &r.v, e.eps, opts.horizon, &r.space)?;
            (res.delta > 0.0 && res.report.pass, to_value(&res)?)
        }
    };
    let (runs, _) = simulate_runs(&r.sys, &r.v, &starts(&r.sys, &r.space), opts.horizon, step)?;
    let csv = ctx.write("traces.csv", &traces_csv(&runs))?;
    let id = serde_json::to_value(prop).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let path = ctx.report("estimate", pass, vec![id.clone()], json!({ "fit": result, "traces_csv": shown(&csv) }))?;
    Ok(Done {
        pass,
        line: format!(
            "estimate {id}: {}; report {}",
            if pass { "consistent with samples" } else { "not supported by samples" },
            shown(&path)
        ),
    })
}

fn to_value<T: Serialize>(x: &T) -> Result<Value, Failure> {
    serde_json::to_value(x).map_err(|e| Failure::Runtime(e.to_string()))
}

fn example(ctx: &Ctx, item: &str) -> Result<Done, Failure> {
    let items: Vec<ClaimItem> = if item.eq_ignore_ascii_case("all") {
        ClaimItem::ALL.to_vec()
    } else {
        vec![item.parse().map_err(Failure::Config)?]
    };
    let cfg = &ctx.cfg.example;
    let mut reports = Vec::new();
    for it in &items {
        reports.push(run_claim(*it, cfg)?);
    }
    let pass = reports.iter().all(|r| r.ok());
    // V(0,1) traces of the benchmark from the claim sample space
    let sys = example_system(BumpPsi);
    let v = LkfCandidate::quad_exp(THETA, 0.0, 1.0)?;
    let space = dde_iss::sampling::SampleSpace::new(
        cfg.seed,
        dde_iss::sampling::HistoryGenerator::RandomCubicSpline,
        cfg.history_amplitude,
        cfg.input_amplitude,
        cfg.fit_samples.max(1),
    );
    let (runs, _) = simulate_runs(&sys, &v, &starts(&sys, &space), cfg.horizon, default_step(THETA))?;
    let csv = ctx.write("example-traces.csv", &traces_csv(&runs))?;
    let verdicts: Vec<String> = reports.iter().map(|r| format!("{}={}", r.item.id(), r.verdict)).collect();
    let checks = reports
        .iter()
        .flat_map(|r| r.reports.iter().map(|c| c.condition_id.clone()))
        .collect::<Vec<_>>();
    let mut checks_dedup = Vec::new();
    for c in checks {
        if !checks_dedup.contains(&c) {
            checks_dedup.push(c);
        }
    }
    let path = ctx.report(
        "example",
        pass,
        checks_dedup,
        json!({ "items": reports, "traces_csv": shown(&csv) }),
    )?;
    Ok(Done {
        pass,
        line: format!("example: {}; report {}", verdicts.join(" "), shown(&path)),
    })
}

fn falsify_cmd(ctx: &Ctx) -> Result<Done, Failure> {
    let r = ctx.resolve()?;
    let kind = condition_kind(ctx)?;
    let budget = ctx.cfg.falsify.budget;
    if budget < MIN_BUDGET {
        return Err(Failure::Config(format!("falsify budget must be at least {MIN_BUDGET}, got {budget}")));
    }
    let cond = Condition::new(kind, &r.sys, &r.v, &r.alpha, &r.chi).with_tol(ctx.cfg.certify.tol);
    let found = falsify(&cond, &r.space, budget)?;
    let pass = found.is_none();
    if let Some(w) = &found {
        ctx.write("witness.csv", &w.phi_csv)?;
    }
    let line = match &found {
        Some(w) => format!(
            "falsify {}: witness found after {} evaluations (margin {:.3e})",
            kind.id(),
            w.evaluations,
            w.margin
        ),
        None => format!("falsify {}: no witness within {budget} evaluations", kind.id()),
    };
    let path = ctx.report("falsify", pass, vec![kind.id().into()], json!({ "budget": budget, "witness": found }))?;
    Ok(Done {
        pass,
        line: format!("{line}; report {}", shown(&path)),
    })
}
