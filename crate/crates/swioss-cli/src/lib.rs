//! Command implementations behind the `swioss` binary: certify a family,
//! generate stabilizing switching signals, simulate, search estimator
//! parameters, and reproduce the builtin ten-run experiment with envelope
//! verification. Everything here is deterministic given its arguments, and
//! all numeric output is formatted to 17 significant digits with LF line
//! endings so repeated runs are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use swioss::conditions::{
    eval_estimator_conditions, find_estimator_params, window_can_certify, DwellCertificate,
    EstimatorCandidate, EstimatorParams,
};
use swioss::envelope::{
    build_estimation_envelope, check_estimator_bounds, check_estimator_iss,
    check_ioss_inequality, Envelope,
};
use swioss::expr::Expr;
use swioss::family::{self, SystemFamily};
use swioss::signals::{generate_signal, validate_stabilizing, SwitchingSignal};
use swioss::sim::{
    attach_estimators, integrate_estimator, integrate_reference_estimator, integrate_switched,
    InputSignal, SimError, Trajectory,
};

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Everything succeeded / the property is feasible (exit 0).
    Success,
    /// Analytic infeasibility or a failed check (exit 1).
    CheckFailed,
}

#[derive(Parser, Debug)]
#[command(name = "swioss", version, about = "stability certification, stabilizing switching-signal generation, simulation and state-norm estimation for switched nonlinear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the dwell-time stability condition and report feasibility.
    Check(CheckArgs),
    /// Generate stabilizing switching signals as JSON files.
    Gen(GenArgs),
    /// Simulate the switched system under a signal, writing CSV output.
    Sim(SimArgs),
    /// Check or search state-norm estimator parameters.
    Estimate(EstimateArgs),
    /// Reproduce the builtin ten-run experiment with envelope verification.
    ReproExample(ReproArgs),
}

#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    /// Builtin family tag (e.g. `paper-example`).
    #[arg(long, conflicts_with = "config")]
    pub builtin: Option<String>,
    /// Path to a family config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl FamilyArgs {
    pub fn resolve(&self) -> Result<SystemFamily> {
        match (&self.builtin, &self.config) {
            (Some(tag), None) => Ok(family::builtin(tag)?),
            (None, Some(path)) => {
                family::load_family(path).with_context(|| format!("loading {}", path.display()))
            }
            _ => bail!("exactly one of --builtin or --config is required"),
        }
    }

    fn description(&self) -> String {
        match (&self.builtin, &self.config) {
            (Some(tag), _) => format!("builtin:{tag}"),
            (_, Some(path)) => path.display().to_string(),
            _ => "<unspecified>".into(),
        }
    }
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Safety margin demanded of the strict inequalities.
    #[arg(long, default_value_t = 0.0)]
    pub margin: f64,
    /// Grid resolution for the feasibility search.
    #[arg(long, default_value_t = 401)]
    pub grid_n: usize,
    /// Directory for certificate.json (optional).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Number of signals.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Signal horizon.
    #[arg(long)]
    pub horizon: f64,
    /// Base seed; signal k uses seed + k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 401)]
    pub grid_n: usize,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Switching-signal JSON file.
    #[arg(long)]
    pub signal: PathBuf,
    /// Initial state, comma-separated.
    #[arg(long)]
    pub x0: String,
    /// Input model: `zero`, `pcw:lo,hi[,period]`, or `expr:<e1>[;<e2>...]`.
    #[arg(long, default_value = "zero")]
    pub input: String,
    /// Seed for sampled inputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Integration step.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Integration horizon (defaults to the signal horizon).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// `auto` to grid-search, or `decay,growth,iss_phase,growth_phase`.
    #[arg(long, default_value = "auto")]
    pub params: String,
    #[arg(long, default_value_t = 0.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 20)]
    pub grid_n: usize,
    /// Directory for estimator_params.json (optional).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReproArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Exactly ten run seeds, comma-separated (default 1..=10).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 15.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
}

/// Dispatches a parsed command line. `Err` means an I/O, parse or usage
/// failure (exit 2); `Ok(CheckFailed)` an analytic failure (exit 1).
pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Check(args) => cmd_check(&args),
        Command::Gen(args) => cmd_gen(&args),
        Command::Sim(args) => cmd_sim(&args),
        Command::Estimate(args) => cmd_estimate(&args),
        Command::ReproExample(args) => cmd_repro_example(&args),
    }
}

pub fn cmd_check(args: &CheckArgs) -> Result<Outcome> {
    let fam = args.family.resolve()?;
    let l = &fam.lyapunov;
    println!("family: {}", args.family.description());
    println!(
        "rates: lambda_s = {}, lambda_u = {}, mu = {}",
        l.lambda_s, l.lambda_u, l.mu
    );
    println!(
        "dwell window: [{}, {}]",
        fam.dwell_min, fam.dwell_max
    );

    let necessary = window_can_certify(fam.dwell_min, fam.dwell_max);
    println!(
        "necessary window condition (Delta < 2*delta): {}",
        if necessary { "satisfied" } else { "violated" }
    );

    let cert = DwellCertificate::for_family(&fam, args.grid_n)?;
    let Some(cert) = cert else {
        println!("no dwell pair in the window satisfies the stability condition");
        if !necessary {
            println!("reason: the necessary window condition already fails");
        }
        println!("feasible: no");
        return Ok(Outcome::CheckFailed);
    };

    println!(
        "dwell pair: stable dwell >= {}, unstable dwell <= {}{}",
        cert.stable_dwell_min,
        cert.unstable_dwell_max,
        if fam.declared_pair.is_some() { " (declared)" } else { " (searched)" }
    );
    println!("condition value: {:.6}", cert.condition_value);
    let s = cert.sufficient;
    println!(
        "sufficient conditions: common-lyapunov {}, any-pair {}, long-stable/short-unstable {}, short-stable/long-unstable {}",
        yesno(s.common_lyapunov),
        yesno(s.any_pair),
        yesno(s.long_stable_short_unstable),
        yesno(s.short_stable_long_unstable),
    );
    let feasible = cert.condition_value < -args.margin;
    println!("feasible: {}", yesno(feasible));

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("certificate.json"), &cert)?;
    }
    Ok(if feasible { Outcome::Success } else { Outcome::CheckFailed })
}

pub fn cmd_gen(args: &GenArgs) -> Result<Outcome> {
    let fam = args.family.resolve()?;
    let Some(cert) = DwellCertificate::for_family(&fam, args.grid_n)? else {
        eprintln!("cannot generate: no feasible dwell pair");
        return Ok(Outcome::CheckFailed);
    };
    if !cert.is_feasible() {
        eprintln!(
            "cannot generate: certificate infeasible (condition value {})",
            cert.condition_value
        );
        return Ok(Outcome::CheckFailed);
    }
    std::fs::create_dir_all(&args.out)?;

    let mut seeds = Vec::new();
    for k in 0..args.n {
        let seed = args.seed + k as u64;
        let sig = match generate_signal(&fam, &cert, args.horizon, seed) {
            Ok(sig) => sig,
            Err(e @ swioss::signals::SignalError::DeadEnd { .. }) => {
                eprintln!("generation failed: {e}");
                return Ok(Outcome::CheckFailed);
            }
            Err(e) => return Err(e.into()),
        };
        let report = validate_stabilizing(&sig, &fam, &cert);
        if !report.pass() {
            bail!("generated signal {k} failed validation: {:?}", report.violations);
        }
        write_json(&args.out.join(format!("signal_{k}.json")), &sig)?;
        seeds.push(seed);
    }
    write_json(
        &args.out.join("gen_manifest.json"),
        &GenManifest {
            family: args.family.description(),
            horizon: args.horizon,
            seeds,
        },
    )?;
    println!("wrote {} signals to {}", args.n, args.out.display());
    Ok(Outcome::Success)
}

pub fn cmd_sim(args: &SimArgs) -> Result<Outcome> {
    let fam = args.family.resolve()?;
    let text = std::fs::read_to_string(&args.signal)
        .with_context(|| format!("reading {}", args.signal.display()))?;
    let sig: SwitchingSignal = serde_json::from_str(&text)?;
    let x0 = parse_floats(&args.x0)?;
    let input = parse_input(&args.input, args.seed, args.step)?;
    let horizon = args.horizon.unwrap_or_else(|| sig.horizon());

    let traj = match integrate_switched(&fam, &sig, &input, &x0, args.step, horizon) {
        Ok(t) => t,
        Err(e @ SimError::Diverged { .. }) => {
            eprintln!("simulation failed: {e}");
            return Ok(Outcome::CheckFailed);
        }
        Err(e) => return Err(e.into()),
    };

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("run.csv"), trajectory_csv(&traj))?;
    write_json(
        &args.out.join("run.meta.json"),
        &RunMeta {
            family: args.family.description(),
            signal: args.signal.display().to_string(),
            seed: args.seed,
            step: args.step,
            horizon,
            x0: x0.clone(),
            input: args.input.clone(),
        },
    )?;
    println!(
        "wrote run.csv ({} nodes, max |x| = {:.6})",
        traj.n_nodes(),
        traj.max_state_norm()
    );
    Ok(Outcome::Success)
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<Outcome> {
    let fam = args.family.resolve()?;
    let Some(cert) = DwellCertificate::for_family(&fam, 401)? else {
        eprintln!("no feasible dwell pair; estimator parameters undefined");
        return Ok(Outcome::CheckFailed);
    };
    if !cert.is_feasible() {
        eprintln!("certificate infeasible (condition value {})", cert.condition_value);
        return Ok(Outcome::CheckFailed);
    }

    let params = if args.params == "auto" {
        match find_estimator_params(&fam, &cert, args.grid_n)? {
            Some(p) => p,
            None => {
                println!("no estimator parameters found on the grid");
                return Ok(Outcome::CheckFailed);
            }
        }
    } else {
        let vals = parse_floats(&args.params)?;
        if vals.len() != 4 {
            bail!("--params expects `auto` or four comma-separated numbers");
        }
        let cand = EstimatorCandidate {
            decay_rate: vals[0],
            growth_rate: vals[1],
            iss_phase: vals[2],
            growth_phase: vals[3],
        };
        match eval_estimator_conditions(&fam, &cert, cand, args.margin) {
            Ok(p) => p,
            Err(violations) => {
                println!("candidate rejected:");
                for v in violations {
                    println!("  {}: value {:.6} (requires {})", v.name, v.value, v.requirement);
                }
                return Ok(Outcome::CheckFailed);
            }
        }
    };

    println!(
        "estimator parameters: decay_rate = {}, growth_rate = {}, iss_phase = {}, growth_phase = {}",
        params.decay_rate, params.growth_rate, params.iss_phase, params.growth_phase
    );
    println!(
        "condition values: starred dwell {:.6}, rate gap {:.6}, schedule decay {:.6}, schedule budget {:.6}",
        params.starred_dwell_value,
        params.rate_gap_value,
        params.schedule_decay_value,
        params.schedule_budget_value
    );
    println!("rate-bound slacks: {:?}", params.rate_bounds);

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("estimator_params.json"), &params)?;
    }
    Ok(Outcome::Success)
}

/// The ten-run reproduction: certificate, ten signals/trajectories with
/// stability verification, one estimator co-simulation with ratio and
/// decay/gain verification, and a machine-readable summary.
pub fn cmd_repro_example(args: &ReproArgs) -> Result<Outcome> {
    if !(args.horizon > 0.0) {
        bail!("horizon must be positive (an empty trajectory has no nodes)");
    }
    let seeds: Vec<u64> = args.seeds.clone().unwrap_or_else(|| (1..=10).collect());
    if seeds.len() != 10 {
        bail!("exactly 10 seeds are required, got {}", seeds.len());
    }
    let (fam, cert, params) = builtin_setup()?;
    if !cert.is_feasible() {
        bail!("builtin certificate unexpectedly infeasible");
    }
    let env = build_estimation_envelope(&fam, &cert, &params)?;

    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("certificate.json"), &cert)?;
    write_json(&args.out.join("estimator_params.json"), &params)?;
    write_json(&args.out.join("envelope.json"), &EnvelopeJson::from(&env))?;

    let mut runs = Vec::new();
    let mut estimator_run = None;
    let mut all_pass = true;
    let mut first_failure: Option<String> = None;

    for (k, &seed) in seeds.iter().enumerate() {
        let run = simulate_run(&fam, &cert, seed, args.horizon, args.step)?;
        write_json(&args.out.join(format!("signal_{k}.json")), &run.signal)?;
        std::fs::write(args.out.join(format!("run_{k}.csv")), trajectory_csv(&run.traj))?;
        write_json(
            &args.out.join(format!("run_{k}.meta.json")),
            &RunMeta {
                family: "builtin:paper-example".into(),
                signal: format!("signal_{k}.json"),
                seed,
                step: args.step,
                horizon: args.horizon,
                x0: run.traj.states[0].clone(),
                input: "pcw:-0.5,0.5 (seed derived from the run seed)".into(),
            },
        )?;

        let bounded = run.traj.max_state_norm() < 10.0;
        let ioss = check_ioss_inequality(&run.traj, &fam, &env);
        let pass = bounded && ioss.pass();
        if !pass && first_failure.is_none() {
            first_failure = Some(format!("run {k}"));
        }
        all_pass &= pass;
        runs.push(RunSummary {
            id: k,
            seed,
            max_state_norm: run.traj.max_state_norm(),
            bounded,
            stability_min_slack: ioss.min_slack,
            stability_argmin_time: ioss.argmin_time,
            pass,
        });

        // The estimator co-simulation rides on the first run.
        if k == 0 {
            let mut traj = run.traj.clone();
            let z = integrate_estimator(
                &params,
                &fam,
                &traj.inputs,
                &traj.outputs,
                2.0,
                args.step,
                args.horizon,
            )?;
            let w = integrate_reference_estimator(
                &fam,
                &cert,
                &params,
                &run.signal,
                &traj.inputs,
                &traj.outputs,
                2.0,
                args.step,
                args.horizon,
            )?;
            attach_estimators(&mut traj, Some(z), Some(w));
            std::fs::write(args.out.join("estimator_run.csv"), trajectory_csv(&traj))?;

            let bounds = check_estimator_bounds(&traj, &env)?;
            let iss = check_estimator_iss(&traj, &fam, &params)?;
            let pass = bounds.pass() && iss.pass();
            if !pass && first_failure.is_none() {
                first_failure = Some("estimator run (run 0)".into());
            }
            all_pass &= pass;
            estimator_run = Some(EstimatorRunSummary {
                run_id: k,
                schedule_bound_min_slack: bounds.schedule_bound.min_slack,
                reference_bound_min_slack: bounds.reference_bound.map(|r| r.min_slack),
                ratio_min_slack: bounds.ratio_check.map(|r| r.min_slack),
                decay_gain_min_slack: iss.min_slack,
                pass,
            });
        }
    }

    let summary = Summary {
        family: "builtin:paper-example".into(),
        condition_value: cert.condition_value,
        feasible: cert.is_feasible(),
        seeds,
        horizon: args.horizon,
        step: args.step,
        estimator: params,
        envelope: EnvelopeJson::from(&env),
        runs,
        estimator_run,
        all_checks_passed: all_pass,
    };
    write_json(&args.out.join("summary.json"), &summary)?;

    if all_pass {
        println!("all runs bounded and all envelope checks passed");
        Ok(Outcome::Success)
    } else {
        eprintln!(
            "envelope verification failed at {}",
            first_failure.unwrap_or_else(|| "unknown run".into())
        );
        Ok(Outcome::CheckFailed)
    }
}

pub struct Run {
    pub signal: SwitchingSignal,
    pub traj: Trajectory,
}

/// The builtin family with its declared-pair certificate and the fixed
/// estimator parameters the reproduction command uses.
pub fn builtin_setup() -> Result<(SystemFamily, DwellCertificate, EstimatorParams)> {
    let fam = family::builtin("paper-example")?;
    let l = &fam.lyapunov;
    let (dc, dh) = fam.declared_pair.expect("builtin declares its dwell pair");
    let cert = DwellCertificate::evaluate(
        l.lambda_s,
        l.lambda_u,
        l.mu,
        fam.dwell_min,
        fam.dwell_max,
        dc,
        dh,
    )?;
    let params = eval_estimator_conditions(
        &fam,
        &cert,
        EstimatorCandidate {
            decay_rate: 3.0,
            growth_rate: 0.75,
            iss_phase: 3.0,
            growth_phase: 4.2,
        },
        0.0,
    )
    .map_err(|v| anyhow!("builtin estimator parameters rejected: {v:?}"))?;
    Ok((fam, cert, params))
}

/// One deterministic run: the seed drives the initial state, the input
/// sample stream and the switching signal.
pub fn simulate_run(
    fam: &SystemFamily,
    cert: &DwellCertificate,
    seed: u64,
    horizon: f64,
    step: f64,
) -> Result<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
    let input_seed: u64 = rng.gen();
    let signal_seed: u64 = rng.gen();
    let signal = generate_signal(fam, cert, horizon, signal_seed)?;
    let input = InputSignal::PiecewiseConstantUniform {
        lo: -0.5,
        hi: 0.5,
        sample_period: step,
        seed: input_seed,
    };
    let traj = integrate_switched(fam, &signal, &input, &x0, step, horizon)?;
    Ok(Run { signal, traj })
}

fn yesno(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad number `{}`", p.trim()))
        })
        .collect()
}

fn parse_input(text: &str, seed: u64, step: f64) -> Result<InputSignal> {
    if text == "zero" {
        return Ok(InputSignal::Zero);
    }
    if let Some(rest) = text.strip_prefix("pcw:") {
        let vals = parse_floats(rest)?;
        let (lo, hi, period) = match vals.as_slice() {
            [lo, hi] => (*lo, *hi, step),
            [lo, hi, period] => (*lo, *hi, *period),
            _ => bail!("pcw input expects `pcw:lo,hi[,period]`"),
        };
        return Ok(InputSignal::PiecewiseConstantUniform {
            lo,
            hi,
            sample_period: period,
            seed,
        });
    }
    if let Some(rest) = text.strip_prefix("expr:") {
        let exprs = rest
            .split(';')
            .map(Expr::parse)
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(InputSignal::Expression(exprs));
    }
    bail!("unknown input model `{text}` (expected zero, pcw:..., expr:...)")
}

/// CSV export with the fixed column layout
/// `t, x1..xd, y1..yp, v1..vm, sigma[, z, w, zeta, upsilon]`,
/// 17 significant digits, LF line endings.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.states[0].len();
    let p = traj.outputs[0].len();
    let m = traj.inputs[0].len();
    let mut out = String::new();
    out.push('t');
    for i in 1..=d {
        let _ = write!(out, ",x{i}");
    }
    for i in 1..=p {
        let _ = write!(out, ",y{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",v{i}");
    }
    out.push_str(",sigma");
    if traj.estimate.is_some() {
        out.push_str(",z");
    }
    if traj.reference_estimate.is_some() {
        out.push_str(",w");
    }
    if traj.schedule_mode.is_some() {
        out.push_str(",zeta");
    }
    if traj.tracking_mode.is_some() {
        out.push_str(",upsilon");
    }
    out.push('\n');

    for k in 0..traj.n_nodes() {
        let _ = write!(out, "{:.16e}", traj.times[k]);
        for v in &traj.states[k] {
            let _ = write!(out, ",{v:.16e}");
        }
        for v in &traj.outputs[k] {
            let _ = write!(out, ",{v:.16e}");
        }
        for v in &traj.inputs[k] {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = write!(out, ",{}", traj.sigma[k]);
        if let Some(z) = &traj.estimate {
            let _ = write!(out, ",{:.16e}", z[k]);
        }
        if let Some(w) = &traj.reference_estimate {
            let _ = write!(out, ",{:.16e}", w[k]);
        }
        if let Some(zeta) = &traj.schedule_mode {
            let _ = write!(out, ",{}", zeta[k]);
        }
        if let Some(ups) = &traj.tracking_mode {
            let _ = write!(out, ",{}", ups[k]);
        }
        out.push('\n');
    }
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct GenManifest {
    family: String,
    horizon: f64,
    seeds: Vec<u64>,
}

#[derive(Serialize)]
struct RunMeta {
    family: String,
    signal: String,
    seed: u64,
    step: f64,
    horizon: f64,
    x0: Vec<f64>,
    input: String,
}

/// Envelope constants in exportable form.
#[derive(Serialize)]
pub struct EnvelopeJson {
    pub decay_offset: f64,
    pub decay_rate: f64,
    pub supply_gain: f64,
    pub comparison_offset: Option<f64>,
    pub comparison_rate: Option<f64>,
    pub supply_comparison_bound: Option<f64>,
    pub comparison_gap: Option<f64>,
    pub ratio_bound: Option<f64>,
    pub ratio_bound_tilde_variant: Option<f64>,
}

impl From<&Envelope> for EnvelopeJson {
    fn from(env: &Envelope) -> Self {
        let est = env.estimation.as_ref();
        EnvelopeJson {
            decay_offset: env.decay_offset,
            decay_rate: env.decay_rate,
            supply_gain: env.supply_gain,
            comparison_offset: est.map(|e| e.comparison_offset),
            comparison_rate: est.map(|e| e.comparison_rate),
            supply_comparison_bound: est.map(|e| e.supply_comparison_bound),
            comparison_gap: est.map(|e| e.comparison_gap),
            ratio_bound: est.map(|e| e.ratio_bound),
            ratio_bound_tilde_variant: est.map(|e| e.ratio_bound_tilde_variant),
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    id: usize,
    seed: u64,
    max_state_norm: f64,
    bounded: bool,
    stability_min_slack: f64,
    stability_argmin_time: f64,
    pass: bool,
}

#[derive(Serialize)]
struct EstimatorRunSummary {
    run_id: usize,
    schedule_bound_min_slack: f64,
    reference_bound_min_slack: Option<f64>,
    ratio_min_slack: Option<f64>,
    decay_gain_min_slack: f64,
    pass: bool,
}

#[derive(Serialize)]
struct Summary {
    family: String,
    condition_value: f64,
    feasible: bool,
    seeds: Vec<u64>,
    horizon: f64,
    step: f64,
    estimator: EstimatorParams,
    envelope: EnvelopeJson,
    runs: Vec<RunSummary>,
    estimator_run: Option<EstimatorRunSummary>,
    all_checks_passed: bool,
}
