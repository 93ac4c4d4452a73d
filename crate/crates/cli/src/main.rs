//! `gmix`: config-driven experiment runner for the Gaussian-mixture
//! classification laboratory.

mod config;
mod plots;
mod recipes;
mod runner;
mod svg;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "gmix", version, about = "Gaussian-mixture learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (a JSON file or a built-in recipe name).
    Run {
        /// Path to a config JSON, or the name of a built-in recipe.
        config: String,
        /// Output directory (default: ./gmix-out/<kind>-<hash>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (also read from GMIX_JOBS; default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List built-in figure recipes (optionally write their configs out).
    Recipes {
        /// Write each recipe's config JSON into this directory.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Re-render a plot from an existing results.csv.
    Plot {
        csv: PathBuf,
        /// Recipe name controlling axes/series (e.g. fig1, fig3, trajectory).
        #[arg(long)]
        recipe: String,
        /// Output SVG path (default: alongside the CSV).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed,
        } => {
            init_pool(jobs)?;
            let cfg = load_config(&config)?;
            let out_dir = out.unwrap_or_else(|| {
                PathBuf::from("gmix-out").join(format!(
                    "{}-{}",
                    cfg.kind_name(),
                    cfg.canonical_hash()
                ))
            });
            runner::run(&cfg, &out_dir, seed)?;
            println!("wrote {}", out_dir.display());
            Ok(())
        }
        Command::Recipes { write } => {
            let all = recipes::builtin();
            for recipe in &all {
                println!("{:<12} {}", recipe.name, recipe.description);
            }
            if let Some(dir) = write {
                std::fs::create_dir_all(&dir)?;
                for recipe in &all {
                    let path = dir.join(format!("{}.json", recipe.name));
                    std::fs::write(&path, serde_json::to_string_pretty(&recipe.config)?)?;
                }
                println!("configs written to {}", dir.display());
            }
            Ok(())
        }
        Command::Plot { csv, recipe, out } => {
            let text = std::fs::read_to_string(&csv)
                .with_context(|| format!("reading {}", csv.display()))?;
            let svg = plots::emit_plot(&text, &recipe)?;
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            std::fs::write(&out, svg)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn init_pool(jobs: Option<usize>) -> Result<()> {
    let jobs = jobs.or_else(|| {
        std::env::var("GMIX_JOBS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing worker pool")?;
    }
    Ok(())
}

fn load_config(arg: &str) -> Result<ExperimentConfig> {
    if let Some(recipe) = recipes::find(arg) {
        return Ok(recipe.config);
    }
    let path = PathBuf::from(arg);
    if !path.exists() {
        bail!(
            "`{arg}` is neither a built-in recipe nor an existing config file; \
             run `gmix recipes` for the list"
        );
    }
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text)
}
