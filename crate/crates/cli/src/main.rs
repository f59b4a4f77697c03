use clap::Parser;
use mpipu_cli::config::ExperimentConfig;
use mpipu_cli::{run_analyze_error, run_simulate_tile, run_sweep, run_trace_ipu, CliError, Workflow};
use std::path::PathBuf;

/// Mixed-precision IPU model: traces, error sweeps, tile simulation.
#[derive(Parser)]
#[command(name = "mpipu", version)]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured workflow
    /// (trace-ipu | analyze-error | simulate-tile | sweep).
    #[arg(long)]
    workflow: Option<String>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results are identical for any count).
    #[arg(long)]
    threads: Option<usize>,
}

/// Write via a temp file in the same directory, then rename into place.
fn write_atomic(path: &PathBuf, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("renaming into {}: {e}", path.display())))?;
    Ok(())
}

fn run(args: Args) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(workflow) = &args.workflow {
        config.workflow = workflow.parse()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out = Some(out);
    }
    if let Some(threads) = args.threads.or(config.threads) {
        // a later workflow in the same process reuses the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    match config.workflow {
        Workflow::TraceIpu => {
            let report = run_trace_ipu(&config)?;
            print!("{}", report.render_text());
            if let Some(out) = &config.out {
                let mut json = serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                json.push('\n');
                write_atomic(out, json.as_bytes())?;
                println!("trace written to {}", out.display());
            }
        }
        Workflow::AnalyzeError | Workflow::SimulateTile | Workflow::Sweep => {
            let csv = match config.workflow {
                Workflow::AnalyzeError => run_analyze_error(&config)?,
                Workflow::SimulateTile => run_simulate_tile(&config)?,
                _ => run_sweep(&config)?,
            };
            match &config.out {
                Some(out) => {
                    write_atomic(out, csv.as_bytes())?;
                    println!("{} rows written to {}", csv.lines().count() - 2, out.display());
                }
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() {
    let args = Args::parse();
    if let Err(e) = run(args) {
        eprintln!("mpipu: {e}");
        std::process::exit(e.exit_code());
    }
}
