use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use serde_json::json;
use sonoloc_cli::output::write_outputs;
use sonoloc_cli::{compare_weighting, run_scenario, ScenarioConfig, ValidationErrors};

#[derive(Parser)]
#[command(name = "sonoloc", version, about = "Simulated acoustic multi-phone localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its result.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides master_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Dump recordings as f32 little-endian PCM.
        #[arg(long)]
        dump_pcm: bool,
    },
    /// Compare equal and optimal weighting over seeds 0..n.
    CompareWeighting {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScenarioConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            dump_pcm,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let started = Instant::now();
            let result = run_scenario(&cfg)?;
            let elapsed = started.elapsed().as_secs_f64();
            let dir = out.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
            match dir {
                Some(dir) => {
                    let files = write_outputs(&cfg, &result, &dir, dump_pcm)?;
                    let unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
                    let info = json!({ "finished_unix_s": unix, "elapsed_s": elapsed, "files": files });
                    std::fs::write(dir.join("run_info.json"), serde_json::to_string_pretty(&info)? + "\n")?;
                    for f in files {
                        eprintln!("wrote {}", f.display());
                    }
                }
                None => print!("{}", result.to_json()),
            }
            match (&result.alignment, &result.error) {
                (Some(a), _) => eprintln!("mean aligned error: {:.4} m", a.mean_error),
                (None, Some(e)) => eprintln!("localization failed: {}", e.message),
                (None, None) => {}
            }
        }
        Command::CompareWeighting { config, seeds } => {
            let cfg = load(&config)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let cmp = compare_weighting(&cfg, &seeds)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
            eprintln!(
                "equal {:.4} m, optimal {:.4} m over {} seeds, improvement {:.1}%",
                cmp.mean_equal_error,
                cmp.mean_optimal_error,
                cmp.compared,
                100.0 * cmp.improvement
            );
        }
        Command::Validate { config } => {
            load(&config)?.validate()?;
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diag = match e.downcast_ref::<ValidationErrors>() {
                Some(v) => json!({ "error": "invalid_config", "fields": v.0 }),
                None => json!({ "error": "failed", "message": format!("{e:#}") }),
            };
            eprintln!("{diag}");
            ExitCode::from(if e.is::<ValidationErrors>() { 2 } else { 1 })
        }
    }
}
