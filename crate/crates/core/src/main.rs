use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use twosided::harness::{
    emit_report, render_csv, render_json, run_bench, run_experiment, AlgorithmChoice, BenchRow,
    ExperimentConfig, HarnessError, InstanceSource, ReportFormat,
};
use twosided::model::{generate_instance, validate_instance, GeneratorParams, Instance};
use twosided::offline::{
    compute_gammas, factor_revealing_t, measure_of_feasibility, sensitivity_check, solve_expected,
    tau,
};

#[derive(Parser)]
#[command(name = "twosided", version, about = "Online allocation with two-sided resource constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a randomly generated instance.
    Gen(GenArgs),
    /// Measure of feasibility, expected optima and granularity parameters.
    Offline(OfflineArgs),
    /// Factor-revealing bound and sensitivity check.
    FactorCheck(OfflineArgs),
    /// Run one algorithm over N seeded trials.
    Run(RunArgs),
    /// Sweep epsilon and horizon.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2)]
    resources: usize,
    #[arg(long, default_value_t = 3)]
    types: usize,
    /// Serving channels, excluding the no-service channel.
    #[arg(long, default_value_t = 2)]
    channels: usize,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    #[arg(long, default_value_t = 0.1)]
    lower_margin: f64,
    #[arg(long, default_value_t = 0.1)]
    upper_margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SourceArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file (JSON); overrides the config's instance.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args)]
struct OfflineArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    alg: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Known feasibility margin for algA1.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    horizons: Vec<usize>,
}

fn build_config(args: &RunArgs, default_epsilon: Option<f64>) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match (&args.source.config, &args.source.instance) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(path)) => {
            let epsilon = args.epsilon.or(default_epsilon).ok_or_else(|| {
                HarnessError::Config("--epsilon is required without --config".into())
            })?;
            ExperimentConfig::new(InstanceSource::Path(path.clone()), AlgorithmChoice::OfflineOnly, epsilon)
        }
        (None, None) => {
            return Err(HarnessError::Config("one of --config or --instance is required".into()))
        }
    };
    if let Some(path) = &args.source.instance {
        config.instance = InstanceSource::Path(path.clone());
    }
    if let Some(alg) = &args.alg {
        config.algorithm = alg.parse()?;
    }
    if let Some(eps) = args.epsilon {
        config.epsilon = eps;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.xi.is_some() {
        config.xi = args.xi;
    }
    if let Some(out) = &args.out {
        config.output = Some(out.clone());
    }
    if let Some(format) = &args.format {
        config.format = format.parse()?;
    }
    config.validate()?;
    Ok(config)
}

fn write_output(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load_instance(args: &OfflineArgs) -> Result<(Instance, f64), HarnessError> {
    let run = RunArgs {
        source: SourceArgs {
            config: args.source.config.clone(),
            instance: args.source.instance.clone(),
        },
        alg: None,
        epsilon: args.epsilon,
        trials: None,
        seed: None,
        xi: None,
        out: None,
        format: None,
    };
    let config = build_config(&run, Some(0.1))?;
    let inst = config.instance.resolve()?;
    let issues = validate_instance(&inst);
    if !issues.is_empty() {
        return Err(HarnessError::Config(format!("invalid instance: {issues}")));
    }
    Ok((inst, config.epsilon))
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let params = GeneratorParams {
        resources: args.resources,
        types: args.types,
        channels: args.channels,
        horizon: args.horizon,
        lower_margin: args.lower_margin,
        upper_margin: args.upper_margin,
        seed: args.seed,
    };
    let mut body = generate_instance(&params).instance.to_json_string();
    body.push('\n');
    write_output(args.out.as_deref(), &body)
}

fn cmd_offline(args: &OfflineArgs) -> Result<()> {
    let (inst, epsilon) = load_instance(args)?;
    let oracle = |e| HarnessError::OracleInfeasible(format!("{e}"));
    let w_e = solve_expected(&inst, 0.0).map_err(oracle)?.w_beta;
    let xi_star = measure_of_feasibility(&inst).map_err(oracle)?.xi_star;
    let tau = tau(epsilon);
    let body = json!({
        "epsilon": epsilon,
        "xi_star": xi_star,
        "w_e": w_e,
        "tau": tau,
        "w_tau": solve_expected(&inst, tau).ok().map(|s| s.w_beta),
        "w_epsilon": solve_expected(&inst, epsilon).ok().map(|s| s.w_beta),
        "gammas": compute_gammas(&inst, epsilon, 1.0),
    });
    write_output(args.out.as_deref(), &format!("{body:#}\n"))
}

fn cmd_factor_check(args: &OfflineArgs) -> Result<()> {
    let (inst, epsilon) = load_instance(args)?;
    let oracle = |e| HarnessError::OracleInfeasible(format!("{e}"));
    let t_star = factor_revealing_t(&inst, epsilon).map_err(oracle)?;
    let report = sensitivity_check(&inst, epsilon).map_err(oracle)?;
    let body = json!({
        "epsilon": epsilon,
        "t_star": t_star,
        "tau_over_xi_star": report.tau / report.xi_star,
        "sensitivity": report,
    });
    write_output(args.out.as_deref(), &format!("{body:#}\n"))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = build_config(args, None)?;
    let report = run_experiment(&config)?;
    match &config.output {
        Some(path) => emit_report(&report, path, config.format)?,
        None => match config.format {
            ReportFormat::Csv => print!("{}", render_csv(&report)),
            ReportFormat::Json => print!("{}", render_json(&report)),
        },
    }
    Ok(())
}

fn bench_csv(rows: &[BenchRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(
        "epsilon,horizon,xi_star,within_regime,mean_ratio,median_ratio,infeasibility_frequency,failure_probability\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epsilon,
            r.horizon,
            r.xi_star,
            r.within_regime,
            opt(r.mean_ratio),
            opt(r.median_ratio),
            opt(r.infeasibility_frequency),
            opt(r.failure_probability)
        )
        .unwrap();
    }
    out
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let first = args.epsilons[0];
    let config = build_config(&args.run, Some(first))?;
    let rows = run_bench(&config, &args.epsilons, &args.horizons)?;
    let body = match config.format {
        ReportFormat::Csv => bench_csv(&rows),
        ReportFormat::Json => format!("{}\n", serde_json::to_string_pretty(&rows)?),
    };
    write_output(config.output.as_deref(), &body)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Offline(a) => cmd_offline(a),
        Command::FactorCheck(a) => cmd_factor_check(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<HarnessError>().map_or(1, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
