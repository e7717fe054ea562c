use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shapgroups::{execute, plots, score, synth, verify, Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "shapgroups", version, about = "Subgroup discovery from SHAP-space clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and persist every stage.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output_dir` from the configuration.
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Score one raw row (header plus one data line) against a run.
    Score {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        row: PathBuf,
    },
    /// Write plot-ready tables under `<artifacts>/plots`.
    EmitPlots {
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Generate a synthetic cohort from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check hashes and recompute reported metrics from per-row outputs.
    Verify {
        #[arg(long)]
        artifacts: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, outdir } => {
            let cfg = RunConfig::load(&config)?;
            let dir = outdir
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Input("no output directory: pass --outdir or set output_dir".into()))?;
            let report = execute(&cfg, &dir, &mut |stage| eprintln!("stage {stage}: done"))?;
            let subgroups: Vec<&str> = report.subgroups.iter().map(|s| s.name.as_str()).collect();
            eprintln!("run complete: {} subgroup(s) {:?}; artifacts in {}", subgroups.len(), subgroups, dir.display());
        }
        Command::Score { artifacts, row } => {
            let scorer = score::Scorer::load(&artifacts)?;
            let text = std::fs::read_to_string(&row).map_err(|e| Error::Io { path: row.clone(), source: e })?;
            let record = scorer.score_csv(&text, &row.display().to_string())?;
            let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Input(e.to_string()))?;
            println!("{json}");
            eprintln!(
                "cluster {} -> subgroup {} via {} model: p = {:.4}",
                record.cluster, record.subgroup, record.model, record.probability
            );
        }
        Command::EmitPlots { artifacts } => {
            for p in plots::emit_plots(&artifacts)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Synth { spec, out } => {
            let o = synth::synthesize_from(&spec, &out)?;
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote {}, {}, {}", o.csv.display(), o.schema.display(), o.planted.display());
        }
        Command::Verify { artifacts } => {
            for c in verify::verify(&artifacts)? {
                eprintln!("ok: {c}");
            }
            eprintln!("verification passed");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
