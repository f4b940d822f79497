use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use starcon::analysis::fit_rate;
use starcon::harness::{
    check_conditions, reproduce_figures, run_single, sweep, tracker_for, verdict_json,
    ExperimentConfig, FigureTarget,
};
use starcon::{condition_report, Result};

#[derive(Parser)]
#[command(name = "starcon", version, about = "Consensus simulation on star boundaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured instance: decide, simulate, and print the verdict JSON.
    Simulate {
        /// Path to a config JSON file.
        config: PathBuf,
        /// Also write the trace CSV (t, errors, product diagnostics) here.
        #[arg(long)]
        trace_csv: Option<PathBuf>,
        /// Also write the full state sequence as JSON here.
        #[arg(long)]
        states_json: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over seeds base, base+1, …, base+runs-1.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        /// Base seed (defaults to the seed in the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = rayon default).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Write one RunRecord JSON per line here.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Write the summary JSON here (also printed to stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Emit plot data for a figure scenario (fig4|fig5|fig6|fig7).
    Figures {
        target: String,
        #[arg(long, default_value = "figures-out")]
        out: PathBuf,
    },
    /// Evaluate the sufficient conditions and the decision test without simulating.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, trace_csv, states_json } => {
            let config = load_config(&config)?;
            let (record, decision, instance) = run_single(&config)?;
            let conditions = condition_report(
                &instance.weights,
                &instance.x0,
                config.tolerances.rank_rel_tol,
            )?;
            let rate = fit_rate(&decision.trace, 0.5).ok();
            println!(
                "{}",
                serde_json::to_string_pretty(&verdict_json(&decision, &conditions, rate.as_ref()))?
            );
            eprintln!(
                "stop: {:?} after {} iterations ({:.3}s)",
                decision.trace.stop_reason,
                record.iterations,
                record.wall_time_s
            );
            if let Some(path) = trace_csv {
                let tracker = tracker_for(&decision, &instance)?;
                let mut file = fs::File::create(&path)?;
                decision.trace.write_csv(Some(&tracker), &mut file)?;
                eprintln!("trace: {}", path.display());
            }
            if let Some(path) = states_json {
                fs::write(&path, serde_json::to_string(&decision.trace.states_json())?)?;
                eprintln!("states: {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, runs, seed, jobs, records, summary } => {
            let config = load_config(&config)?;
            let base_seed = seed.unwrap_or(config.seed);
            let started = std::time::Instant::now();
            let (result, all_records) = sweep(&config, runs, base_seed, jobs)?;
            eprintln!(
                "{} runs in {:.2}s, consensus fraction {}",
                result.runs,
                started.elapsed().as_secs_f64(),
                result.consensus_fraction
            );
            if let Some(path) = records {
                let mut out = String::new();
                for record in &all_records {
                    out.push_str(&serde_json::to_string(record)?);
                    out.push('\n');
                }
                fs::write(&path, out)?;
            }
            let summary_text = serde_json::to_string_pretty(&result)?;
            if let Some(path) = summary {
                fs::write(&path, &summary_text)?;
            }
            println!("{summary_text}");
            if result.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "{} run(s) disagreed between prediction and simulation",
                    result.failures.len()
                );
                Ok(ExitCode::from(2))
            }
        }
        Command::Figures { target, out } => {
            let target: FigureTarget = target.parse()?;
            let paths = reproduce_figures(target, &out)?;
            for path in paths {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config } => {
            let config = load_config(&config)?;
            let (report, v_x0_norm, predicted) = check_conditions(&config)?;
            println!("condition        holds  detail");
            println!(
                "half-space       {:<5}  {}",
                report.halfspace.holds,
                match (&report.halfspace.witness_h, report.halfspace.boundary) {
                    (Some(h), false) => format!("witness h = {h:?}"),
                    (Some(h), true) => format!("boundary witness h = {h:?}"),
                    (None, _) => "no admissible normal".into(),
                }
            );
            println!(
                "full rank        {:<5}  rank {} (smallest singular value {:.3e})",
                report.full_rank.holds,
                report.full_rank.numerical_rank,
                report.full_rank.smallest_singular_value
            );
            println!(
                "cone column      {:<5}  {}",
                report.cone_column.holds,
                match report.cone_column.witness_column_index {
                    Some(j) => format!("column {} avoids the perpendicular set", j + 1),
                    None => "every nonzero column is perpendicular to the cone".into(),
                }
            );
            println!();
            println!("||v(X0) X0|| = {v_x0_norm:.6e}");
            println!("consensus predicted: {predicted}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
