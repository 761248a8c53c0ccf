use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use s2rlab::harness::{
    aggregate_rows, check_suite, parse_csv, render_svg, run_experiment, BatterySpec,
    ExperimentConfig,
};
use s2rlab::transfer::{theory_diagnostics, DiagnosticsInput};
use s2rlab::{Error, Result};

#[derive(Parser)]
#[command(name = "s2rlab", about = "Tabular sim-to-real transfer laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a seeded multi-trial experiment from a JSON config.
    Run {
        /// Path to the experiment JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Concurrent trial workers (output is identical for any value).
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the invariant-check battery; nonzero exit on any violation.
    Check {
        /// Battery specifier, e.g. "rand:count=100,eps=0.2,seed=1".
        #[arg(long, default_value = "rand")]
        battery: String,
    },
    /// Print closed-form transfer diagnostics for the given parameters.
    Calc(CalcArgs),
    /// Re-render the aggregate SVG chart from a results CSV.
    Plot {
        /// Input results CSV.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output SVG path.
        #[arg(long = "out")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct CalcArgs {
    /// Feature dimension d.
    #[arg(long)]
    d: usize,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    num_actions: usize,
    /// Max per-(s,a,h) TV distance between sim and real kernels.
    #[arg(long)]
    eps_sim: f64,
    /// Achieved per-step covariance floor of the exploration mixture.
    #[arg(long)]
    lambda_bar_min: f64,
    /// Constraint tolerance of the sim-anchored fit.
    #[arg(long, default_value_t = f64::INFINITY)]
    gamma: f64,
    /// Escape-probability threshold for the depth diagnostic.
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    /// Target accuracy for the sample-complexity bound.
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Best achievable covariance floor (enables the coverage-condition flag).
    #[arg(long)]
    lambda_star: Option<f64>,
    /// Max achievable total reward; defaults to the horizon.
    #[arg(long)]
    r_max: Option<f64>,
    /// Effective log-cardinality of the function class.
    #[arg(long)]
    log_f_eff: Option<f64>,
}

fn cmd_run(config_path: &PathBuf, workers: usize) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    let config = ExperimentConfig::from_json(&text)?;
    let out = run_experiment(&config, workers)?;
    println!(
        "wrote {} ({} records) and {}",
        out.csv_path.display(),
        out.records.len(),
        out.svg_path.display()
    );
    for curve in &out.curves {
        if let Some(last) = curve.points.last() {
            println!(
                "{}: final mean suboptimality {:.6e} +/- {:.6e} over {} trials",
                curve.algorithm, last.mean, last.std_err, last.trials
            );
        }
    }
    Ok(())
}

fn cmd_check(battery: &str) -> Result<()> {
    let spec = BatterySpec::parse(battery)?;
    let report = check_suite(&spec)?;
    for c in &report.checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Error::Check("invariant battery reported violations".into()))
    }
}

fn cmd_calc(args: &CalcArgs) -> Result<()> {
    let report = theory_diagnostics(&DiagnosticsInput {
        d: args.d,
        horizon: args.horizon,
        num_actions: args.num_actions,
        eps_sim: args.eps_sim,
        lambda_bar_min: args.lambda_bar_min,
        gamma: args.gamma,
        kappa: args.kappa,
        epsilon: args.epsilon,
        delta: args.delta,
        lambda_star: args.lambda_star,
        r_max: args.r_max,
        log_f_eff: args.log_f_eff,
    })?;
    println!("value transfer bound (2 H^2 eps_sim): {:.6e}", report.simulation_lemma_bound);
    println!("q-gap bound (H R eps_sim):            {:.6e}", report.q_gap_bound);
    println!("visitation gap bound (H eps_sim):     {:.6e}", report.visitation_bound);
    println!("escape factor xi:                     {:.6e}", report.xi);
    match report.k_star {
        Some(k) => println!("random-exploration depth k*:          {k}"),
        None => println!("random-exploration depth k*:          undefined (xi >= 1)"),
    }
    match report.coverage_condition {
        Some(ok) => println!(
            "coverage condition eps_sim <= lambda*/(64 d H A^3): {}",
            if ok { "satisfied" } else { "violated" }
        ),
        None => println!("coverage condition: not evaluated (pass --lambda-star)"),
    }
    println!(
        "sample bound d^2 H^16 / eps^8 * (ln H + log|F| + ln 1/delta): {:.6e} (constants suppressed, c = 1)",
        report.sample_bound
    );
    println!("log|F|_eff used: {:.6e}", report.log_f_eff);
    Ok(())
}

fn cmd_plot(input: &PathBuf, output: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Config(format!("{}: {e}", input.display())))?;
    let rows = parse_csv(&text)?;
    let config_echo = text
        .lines()
        .find(|l| l.starts_with("# config "))
        .map(|l| l.trim_start_matches("# config ").to_string());
    let curves = aggregate_rows(&rows);
    std::fs::write(output, render_svg(&curves, config_echo.as_deref()))?;
    println!("wrote {} ({} series)", output.display(), curves.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, workers } => cmd_run(config, *workers),
        Command::Check { battery } => cmd_check(battery),
        Command::Calc(args) => cmd_calc(args),
        Command::Plot { input, output } => cmd_plot(input, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
