use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracheat_cli::config::validate_text;
use fracheat_cli::{ExperimentConfig, Runner, Stage};

#[derive(Parser)]
#[command(name = "fracheat", version, about = "Experiment runner for the fractional heat extension lab")]
struct Cli {
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true, env = "FRACHEAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, else `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the probe seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the extension problem and write the field.
    Solve(Common),
    /// DtN consistency: dual-route comparison or Neumann datum recovery.
    DtnCheck(Common),
    /// Moduli pipeline and the gradient modulus K.
    Moduli(Common),
    /// Lorentz norm and potential estimates of the data.
    Lorentz(Common),
    /// Excess decay, Campanato, gradient-modulus and interior probes.
    Probe(Common),
    /// Convert the CSV tables of an output directory to gnuplot data files.
    Plot(Common),
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the config's stage list, or the one given with `--stages`.
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated stages, e.g. `solve,moduli,probe`; empty for none.
        #[arg(long)]
        stages: Option<String>,
    },
}

fn run(common: &Common, stages: Option<Vec<Stage>>) -> ExitCode {
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let diagnostics = validate_text(&text);
    if !diagnostics.is_empty() {
        for d in diagnostics {
            eprintln!("{}: {d}", common.config.display());
        }
        return ExitCode::from(2);
    }
    let cfg = ExperimentConfig::from_json(&text).expect("validated above");
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let stages = stages.unwrap_or_else(|| cfg.stages.clone());
    match Runner::new(cfg, &out, common.seed).run(&stages) {
        Ok(outcome) => {
            for s in &outcome.manifest.stages {
                match &s.error {
                    Some(e) => eprintln!("{}: {:?}: {e}", s.stage, s.status),
                    None => eprintln!("{}: {:?}", s.stage, s.status),
                }
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", out.display());
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match &cli.command {
        Command::Solve(c) => run(c, Some(vec![Stage::Solve])),
        Command::DtnCheck(c) => run(c, Some(vec![Stage::Dtn])),
        Command::Moduli(c) => run(c, Some(vec![Stage::Moduli])),
        Command::Lorentz(c) => run(c, Some(vec![Stage::Lorentz])),
        Command::Probe(c) => run(c, Some(vec![Stage::Probe])),
        Command::Plot(c) => run(c, Some(vec![Stage::Plot])),
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let diagnostics = validate_text(&text);
            for d in &diagnostics {
                println!("{}: {d}", config.display());
            }
            if diagnostics.is_empty() {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Command::Run { common, stages } => match stages.as_deref().map(Stage::parse_list).transpose() {
            Ok(list) => run(common, list),
            Err(e) => {
                eprintln!("--stages: {e}");
                ExitCode::from(2)
            }
        },
    }
}
