//! Command-line front end: reproducible, file-based workflows over the
//! certification toolkit.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a scientific
//! bound was violated (CI-friendly).

use std::fs;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use cvcert_core::applications::{
    fisher_lower_bound, honest_overlap_eta, mbqc_apply_gate, mbqc_tail_bound, optimize_fisher,
    simulate_teleportation, FisherInfo, Gate, GateContext, NoiseDescriptor, NoisePropagationState,
    TeleportationConfig,
};
use cvcert_core::bounds::{evaluate_report, p_null_gaussian, ProtocolParams};
use cvcert_core::graph::{NoiseModel, WeightedGraph};
use cvcert_core::oracles::{check_lnn_inequalities, check_serfling_sampling, povm_integral_oracle};
use cvcert_core::planner::{plan_parameters, table1};
use cvcert_core::protocol::{acceptance_rate, estimate_joint_failure, SourceModel};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Parser)]
#[command(
    name = "cvcert",
    version,
    about = "Certification toolkit for noisy continuous-variable graph states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report to this path instead of stdout.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker-thread count for Monte Carlo trials (0 = library default).
    /// Results never depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the full parameter set from a target joint-failure probability.
    Plan {
        /// Mode count of the target graph state.
        #[arg(long)]
        n: usize,
        /// Target joint-failure probability.
        #[arg(long, default_value_t = 0.1)]
        j: f64,
        /// Target acceptance probability for the honest source.
        #[arg(long = "p-acc", default_value_t = 0.9)]
        p_acc: f64,
    },
    /// Evaluate the closed-form bound suite for one parameter set.
    Bounds(BoundsArgs),
    /// Monte Carlo protocol runs against a configurable source, checked
    /// against the joint soundness bound.
    Simulate(SimulateArgs),
    /// Reference parameter table (n in {1, 2, 5, 10, 100}) with published
    /// figures and discrepancy notes.
    Table1,
    /// Run the independent verification oracle suites.
    Verify {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Teleportation deviation statistics through a certified 2-mode state.
    Teleport(TeleportArgs),
    /// Propagate a gate program's noise recurrences and bound the tail.
    Mbqc(MbqcArgs),
    /// Fisher-information lower bound for displacement sensing.
    Metrology {
        /// Overlap deficit eta of the certified state.
        #[arg(long)]
        eta: f64,
        /// Noise width mu.
        #[arg(long)]
        mu: f64,
        /// Certified envelope width Delta.
        #[arg(long)]
        delta: f64,
    },
}

#[derive(Args)]
struct BoundsArgs {
    /// Graph file `{"n": int, "edges": [[i, j, w], ...]}`.
    #[arg(long)]
    graph: String,
    /// Squeezing parameter of the honest source.
    #[arg(long)]
    sigma: f64,
    /// p-quadrature measurement-noise width.
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    /// x-quadrature measurement-noise width.
    #[arg(long, default_value_t = 0.0)]
    mux: f64,
    /// Acceptance width of the probabilistic test.
    #[arg(long)]
    epsilon: f64,
    /// Failure-fraction threshold.
    #[arg(long)]
    f: f64,
    /// Measurements per nullifier.
    #[arg(long)]
    ntest: u64,
    /// Register ratio N_total / N_test.
    #[arg(long = "mu-ratio")]
    mu_ratio: f64,
    /// Concentration slack.
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
    /// Kept-register count.
    #[arg(long, default_value_t = 1)]
    k: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    bounds: BoundsArgs,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Source family.
    #[arg(long, value_enum, default_value_t = SourceKind::Honest)]
    source: SourceKind,
    /// Comma-separated per-mode p-shift for the bad registers.
    #[arg(long)]
    shift: Option<String>,
    /// Bad-register fraction for the mixture source.
    #[arg(long)]
    q: Option<f64>,
    /// Bad-register count for the block source.
    #[arg(long = "bad-count")]
    bad_count: Option<u64>,
    /// Test hook: corrupt the bound so the violation path is exercised.
    #[arg(long, hide = true, default_value_t = false)]
    corrupt_bound: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceKind {
    Honest,
    Displaced,
    Mixture,
    Block,
}

#[derive(Args)]
struct TeleportArgs {
    #[arg(long)]
    sigma: f64,
    /// Classical communication-noise width.
    #[arg(long, default_value_t = 0.0)]
    mux: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated deviation thresholds to sweep.
    #[arg(long, default_value = "1.0,2.0,3.0")]
    thresholds: String,
    /// Concentration envelope width.
    #[arg(long)]
    delta: f64,
    /// Overlap deficit; defaults to the honest 2-mode value at (sigma, delta).
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args)]
struct MbqcArgs {
    /// Gate program file: JSON array like
    /// `[{"kind": "shear", "s": 2.0}, {"kind": "xshift", "s": 0.5}]`.
    #[arg(long)]
    program: String,
    /// Homodyne measurement-noise width per step.
    #[arg(long = "meas-width", default_value_t = 0.1)]
    meas_width: f64,
    /// Fresh-mode squeezing-noise width per step.
    #[arg(long = "squeeze-width", default_value_t = 0.1)]
    squeeze_width: f64,
    /// Signal-amplitude width for cubic gates.
    #[arg(long = "cubic-signal")]
    cubic_signal: Option<f64>,
    /// Cloud size for non-Gaussian propagation.
    #[arg(long = "cloud-samples", default_value_t = 100_000)]
    cloud_samples: usize,
    /// Tail threshold to bound at the end of the program.
    #[arg(long)]
    t: Option<f64>,
    /// Overlap deficit for the tail bound.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Envelope width for the tail bound.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A finished report: the JSON body plus whether a scientific bound failed.
struct Report {
    command: &'static str,
    config: Value,
    provenance: Vec<(&'static str, &'static str)>,
    result: Value,
    violated: bool,
    /// Pre-rendered CSV body for commands that support the format.
    csv: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Keep help/version on stdout with success, everything else as a
            // usage failure.
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    if cli.workers > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
        {
            eprintln!("error: failed to configure worker pool: {err}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(report) => {
            let rendered = match render(&cli, &report) {
                Ok(r) => r,
                Err(err) => {
                    eprintln!("error: {err}");
                    return ExitCode::from(1);
                }
            };
            if let Some(path) = &cli.out {
                if let Err(err) = fs::write(path, rendered) {
                    eprintln!("error: cannot write {path}: {err}");
                    return ExitCode::from(1);
                }
            } else {
                println!("{rendered}");
            }
            if report.violated {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Plan { n, j, p_acc } => cmd_plan(*n, *j, *p_acc),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Table1 => cmd_table1(),
        Command::Verify { trials, seed } => cmd_verify(*trials, *seed),
        Command::Teleport(args) => cmd_teleport(args),
        Command::Mbqc(args) => cmd_mbqc(args),
        Command::Metrology { eta, mu, delta } => cmd_metrology(*eta, *mu, *delta),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).context("serialization failed")
}

fn cmd_plan(n: usize, j: f64, p_acc: f64) -> Result<Report> {
    let plan = plan_parameters(n, j, p_acc)?;
    Ok(Report {
        command: "plan",
        config: json!({"n": n, "j": j, "p_acc": p_acc}),
        provenance: vec![
            (
                "lambda",
                "simplified joint bound solved for the target failure probability",
            ),
            (
                "n_test",
                "test count formula ceil((2 ln n + 2 ln lambda) lambda^2)",
            ),
            (
                "p_stab",
                "binomial acceptance tail inverted at the target rate",
            ),
            (
                "eps_over_delta",
                "pass-probability eigenvalue inverted under sigma = 1/delta",
            ),
        ],
        result: to_value(&plan)?,
        violated: false,
        csv: None,
    })
}

fn load_graph(path: &str) -> Result<WeightedGraph> {
    let raw = fs::read_to_string(path).with_context(|| format!("cannot read graph file {path}"))?;
    serde_json::from_str(&raw).with_context(|| format!("invalid graph file {path}"))
}

fn params_from_args(
    args: &BoundsArgs,
    graph: &WeightedGraph,
) -> Result<(ProtocolParams, NoiseModel)> {
    let noise = NoiseModel::new(args.nu, args.mux)?;
    let delta = graph.max_combined_noise(&noise);
    let params = ProtocolParams::new(
        graph.n(),
        args.ntest,
        args.mu_ratio,
        args.f,
        args.epsilon,
        args.slack,
        delta,
    )?;
    Ok((params, noise))
}

fn bounds_config(args: &BoundsArgs) -> Value {
    json!({
        "graph": args.graph,
        "sigma": args.sigma,
        "nu": args.nu,
        "mux": args.mux,
        "epsilon": args.epsilon,
        "f": args.f,
        "ntest": args.ntest,
        "mu_ratio": args.mu_ratio,
        "slack": args.slack,
        "k": args.k,
    })
}

fn cmd_bounds(args: &BoundsArgs) -> Result<Report> {
    let graph = load_graph(&args.graph)?;
    let (params, _) = params_from_args(args, &graph)?;
    let report = evaluate_report(&params, args.sigma, args.k, None)?;
    let provenance = vec![
        (
            "p_null",
            "gaussian completeness: single-test pass probability",
        ),
        ("p_acc", "binomial acceptance tail over n*N_test tests"),
        (
            "serfling",
            "sampling-without-replacement concentration on good registers",
        ),
        (
            "soundness_joint_k",
            "joint accept-and-bad-kept-registers upper bound",
        ),
        (
            "overlap_lower_k",
            "certified overlap lower bound at envelope sqrt(eps^2+delta^2)",
        ),
    ];
    Ok(Report {
        command: "bounds",
        config: bounds_config(args),
        provenance,
        result: to_value(&report)?,
        violated: false,
        csv: None,
    })
}

fn parse_shift(raw: Option<&String>, n: usize) -> Result<Vec<f64>> {
    let raw = raw.ok_or_else(|| anyhow!("this source requires --shift"))?;
    let shift: Vec<f64> = raw
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad shift component {tok:?}"))
        })
        .collect::<Result<_>>()?;
    if shift.len() == 1 && n > 1 {
        return Ok(vec![shift[0]; n]);
    }
    if shift.len() != n {
        bail!(
            "shift has {} components but the graph has {n} modes",
            shift.len()
        );
    }
    Ok(shift)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Report> {
    let graph = load_graph(&args.bounds.graph)?;
    let (params, noise) = params_from_args(&args.bounds, &graph)?;
    let n = graph.n();
    let sigma = args.bounds.sigma;
    let source = match args.source {
        SourceKind::Honest => SourceModel::Honest { sigma },
        SourceKind::Displaced => SourceModel::DisplacedIID {
            sigma,
            shift: parse_shift(args.shift.as_ref(), n)?,
        },
        SourceKind::Mixture => SourceModel::Mixture {
            sigma,
            bad_fraction: args
                .q
                .ok_or_else(|| anyhow!("mixture source requires --q"))?,
            bad_shift: parse_shift(args.shift.as_ref(), n)?,
        },
        SourceKind::Block => SourceModel::PermutedBlock {
            sigma,
            bad_count: args
                .bad_count
                .ok_or_else(|| anyhow!("block source requires --bad-count"))?,
            bad_shift: parse_shift(args.shift.as_ref(), n)?,
        },
    };
    let mut joint = estimate_joint_failure(
        &graph,
        &params,
        &noise,
        &source,
        args.bounds.k,
        args.trials,
        args.seed,
    )?;
    if args.corrupt_bound {
        joint.bound.value = -1.0;
        joint.bound.raw = -1.0;
        joint.violated = true;
    }
    let (acc_rate, acc_stderr) = acceptance_rate(
        &graph,
        &params,
        &noise,
        &source,
        args.bounds.k,
        args.trials,
        args.seed,
    )?;
    let bounds = evaluate_report(
        &params,
        sigma,
        args.bounds.k,
        Some(acc_rate.max(f64::MIN_POSITIVE)),
    )?;
    let violated = joint.violated;
    let mut config = bounds_config(&args.bounds);
    let extra = json!({
        "trials": args.trials,
        "seed": args.seed,
        "source": match args.source {
            SourceKind::Honest => "honest",
            SourceKind::Displaced => "displaced",
            SourceKind::Mixture => "mixture",
            SourceKind::Block => "block",
        },
        "shift": args.shift,
        "q": args.q,
        "bad_count": args.bad_count,
    });
    merge(&mut config, extra);
    Ok(Report {
        command: "simulate",
        config,
        provenance: vec![
            (
                "joint",
                "Monte Carlo estimate of P[accept and a kept register is bad]",
            ),
            ("joint.bound", "joint soundness upper bound"),
            ("acceptance_rate", "empirical protocol acceptance frequency"),
            ("bounds", "closed-form bound suite at these parameters"),
        ],
        result: json!({
            "joint": to_value(&joint)?,
            "acceptance_rate": acc_rate,
            "acceptance_stderr": acc_stderr,
            "bounds": to_value(&bounds)?,
        }),
        violated,
        csv: None,
    })
}

fn merge(base: &mut Value, extra: Value) {
    if let (Value::Object(base), Value::Object(extra)) = (base, extra) {
        base.extend(extra);
    }
}

fn cmd_table1() -> Result<Report> {
    let rows = table1()?;
    let mut csv = String::from(
        "n,lambda,n_test,n_total,p_stab,eps_over_delta,published_lambda,published_n_test,published_n_total,published_p_stab,published_eps_over_delta,ratio_at_published_p_stab,notes\n",
    );
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{},{},{},{},{},{:.6},\"{}\"\n",
            row.plan.n,
            row.plan.lambda,
            row.plan.n_test,
            row.plan.n_total,
            row.plan.p_stab,
            row.plan.eps_over_delta,
            row.published_lambda,
            row.published_n_test,
            row.published_n_total,
            row.published_p_stab,
            row.published_eps_over_delta,
            row.ratio_at_published_p_stab,
            row.notes.join("; ").replace('"', "'"),
        ));
    }
    Ok(Report {
        command: "table1",
        config: json!({"j": 0.1, "p_acc": 0.9}),
        provenance: vec![
            (
                "rows",
                "planner-derived parameter rows with published figures side by side",
            ),
            (
                "notes",
                "explicit discrepancy annotations where the published figures depart",
            ),
        ],
        result: to_value(&rows)?,
        violated: false,
        csv: Some(csv),
    })
}

fn cmd_verify(trials: u64, seed: u64) -> Result<Report> {
    let lnn = check_lnn_inequalities(12, trials, seed)?;
    let serf = check_serfling_sampling(200, 100, trials, 0.1, seed.wrapping_add(1))?;
    // Closed-form pass probability against independent quadrature.
    let mut quad_worst = 0.0f64;
    for &sigma in &[0.5, 1.0, 2.0, 5.0, 10.0] {
        for &delta in &[0.0, 0.2, 0.5, 1.0, 2.0] {
            for &eps in &[0.3, 0.7, 1.0, 2.0, 5.0] {
                let closed = p_null_gaussian(sigma, delta, eps)?;
                let width = (delta * delta + 1.0 / (sigma * sigma)).sqrt();
                let numeric = povm_integral_oracle(width, eps, 0.0)?;
                quad_worst = quad_worst.max((closed - numeric).abs());
            }
        }
    }
    let lnn_ok = lnn.max_violation <= 1e-12;
    let serf_ok = serf.max_violation <= 0.0;
    let quad_ok = quad_worst <= 1e-10;
    let all_ok = lnn_ok && serf_ok && quad_ok;
    Ok(Report {
        command: "verify",
        config: json!({"trials": trials, "seed": seed}),
        provenance: vec![
            (
                "tail_product",
                "exhaustive k-fold product tail inequality check",
            ),
            (
                "sampling",
                "without-replacement tail bound sampling experiment",
            ),
            (
                "quadrature",
                "pass-probability closed form vs adaptive quadrature",
            ),
        ],
        result: json!({
            "tail_product": {"report": to_value(&lnn)?, "pass": lnn_ok},
            "sampling": {"report": to_value(&serf)?, "pass": serf_ok},
            "quadrature": {"max_abs_difference": quad_worst, "pass": quad_ok},
            "pass": all_ok,
        }),
        violated: !all_ok,
        csv: None,
    })
}

fn cmd_teleport(args: &TeleportArgs) -> Result<Report> {
    let thresholds: Vec<f64> = args
        .thresholds
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad threshold {tok:?}"))
        })
        .collect::<Result<_>>()?;
    let eta = match args.eta {
        Some(eta) => eta,
        None => honest_overlap_eta(args.sigma, args.delta, 2)?,
    };
    let stats = simulate_teleportation(&TeleportationConfig {
        sigma: args.sigma,
        noise: NoiseModel::new(0.0, args.mux)?,
        input_mean: (0.0, 0.0),
        trials: args.trials,
        seed: args.seed,
        thresholds: thresholds.clone(),
        delta_env: args.delta,
        eta,
        keep_samples: false,
    })?;
    let violated = stats
        .threshold_sweep
        .iter()
        .any(|p| p.x_within.min(p.p_within) + 3.0 * p.stderr < p.bound);
    let mut csv = String::from("t,x_within,p_within,stderr,bound\n");
    for p in &stats.threshold_sweep {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            p.t, p.x_within, p.p_within, p.stderr, p.bound
        ));
    }
    Ok(Report {
        command: "teleport",
        config: json!({
            "sigma": args.sigma,
            "mux": args.mux,
            "trials": args.trials,
            "seed": args.seed,
            "thresholds": thresholds,
            "delta": args.delta,
            "eta": eta,
        }),
        provenance: vec![
            (
                "deviation_widths",
                "output-minus-input deviations of the teleported quadratures",
            ),
            (
                "predicted_width",
                "quadrature sum of the nullifier width and classical noise",
            ),
            (
                "threshold_sweep",
                "within-threshold fractions vs the noisy concentration bound",
            ),
        ],
        result: to_value(&stats)?,
        violated,
        csv: Some(csv),
    })
}

fn cmd_mbqc(args: &MbqcArgs) -> Result<Report> {
    let raw = fs::read_to_string(&args.program)
        .with_context(|| format!("cannot read program file {}", args.program))?;
    let gates: Vec<Gate> = serde_json::from_str(&raw)
        .with_context(|| format!("invalid gate program {}", args.program))?;
    if gates.is_empty() {
        bail!("gate program is empty");
    }
    let ctx = GateContext {
        measurement_width: args.meas_width,
        squeezing_width: args.squeeze_width,
        cubic_signal_width: args.cubic_signal,
        cloud_samples: args.cloud_samples,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let mut state = NoisePropagationState::initial();
    for gate in &gates {
        state = mbqc_apply_gate(&state, gate, &ctx, &mut rng)?;
    }
    let summary = |d: &NoiseDescriptor| match d {
        NoiseDescriptor::Gaussian { mean, width } => {
            json!({"form": "gaussian", "mean": mean, "width": width})
        }
        NoiseDescriptor::SampleCloud(cloud) => {
            let n = cloud.len() as f64;
            let mean = cloud.iter().sum::<f64>() / n;
            let var = cloud.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            json!({
                "form": "cloud",
                "samples": cloud.len(),
                "mean": mean,
                "empirical_width": (2.0 * var).sqrt(),
            })
        }
    };
    let tail = match args.t {
        Some(t) => Some(to_value(&mbqc_tail_bound(
            &state, t, args.eta, args.delta,
        )?)?),
        None => None,
    };
    Ok(Report {
        command: "mbqc",
        config: json!({
            "program": args.program,
            "meas_width": args.meas_width,
            "squeeze_width": args.squeeze_width,
            "cubic_signal": args.cubic_signal,
            "cloud_samples": args.cloud_samples,
            "t": args.t,
            "eta": args.eta,
            "delta": args.delta,
            "seed": args.seed,
        }),
        provenance: vec![
            (
                "x/p",
                "accumulated logical-wire noise after the gate recurrences",
            ),
            (
                "tail_bound",
                "lower bound on both quadrature deviations staying within t",
            ),
        ],
        result: json!({
            "gates": gates.len(),
            "gaussian_track": state.gaussian_track,
            "unbounded": state.unbounded,
            "x": summary(&state.x.descriptor),
            "p": summary(&state.p.descriptor),
            "tail_bound": tail,
        }),
        violated: false,
        csv: None,
    })
}

fn cmd_metrology(eta: f64, mu: f64, delta: f64) -> Result<Report> {
    let (theta_star, q_star) = optimize_fisher(eta, mu, delta)?;
    let at_optimum = fisher_lower_bound(eta, mu, delta, theta_star)?;
    let detail = match at_optimum {
        FisherInfo::Unbounded => json!({"unbounded": true}),
        FisherInfo::Bound(b) => to_value(&b)?,
    };
    Ok(Report {
        command: "metrology",
        config: json!({"eta": eta, "mu": mu, "delta": delta}),
        provenance: vec![
            (
                "fisher_lower",
                "quantum Fisher information lower bound at the optimal threshold",
            ),
            ("p_star", "probe displacement achieving the bound"),
        ],
        result: json!({
            "theta_star": theta_star,
            "q_star": q_star,
            "at_optimum": detail,
        }),
        violated: false,
        csv: None,
    })
}

fn render(cli: &Cli, report: &Report) -> Result<String> {
    let body = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": report.command,
        "config": report.config,
        "provenance": report.provenance.iter()
            .map(|(k, v)| json!({"field": k, "meaning": v}))
            .collect::<Vec<_>>(),
        "result": report.result,
        "violated": report.violated,
    });
    match cli.format {
        Format::Json => Ok(serde_json::to_string_pretty(&body)?),
        Format::Csv => report
            .csv
            .clone()
            .ok_or_else(|| anyhow!("csv output is not supported for this command")),
        Format::Text => {
            let mut out = String::new();
            flatten_text(&body, String::new(), &mut out);
            Ok(out.trim_end().to_string())
        }
    }
}

/// Text rendering: one `path = value` line per leaf, numbers at six
/// significant figures.
fn flatten_text(value: &Value, path: String, out: &mut String) {
    match value {
        Value::Object(map) => {
            for (key, v) in map {
                let next = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                flatten_text(v, next, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten_text(v, format!("{path}[{i}]"), out);
            }
        }
        Value::Number(num) => {
            let rendered = match num.as_f64() {
                Some(v) if num.is_f64() => format_sig(v),
                _ => num.to_string(),
            };
            out.push_str(&format!("{path} = {rendered}\n"));
        }
        other => {
            out.push_str(&format!("{path} = {other}\n"));
        }
    }
}

fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.5e}")
}
