//! Command-line surface: generate synthetic populations, validate scenario
//! configs, run scenarios, and diff scenario outputs.

mod diff;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use durum_core::config::ScenarioConfig;
use durum_core::{market, orchestrator, population};

#[derive(Parser)]
#[command(name = "durum", version, about = "Durum wheat production system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster farm microdata and synthesize a national-scale population.
    #[command(name = "generate-population")]
    GeneratePopulation {
        /// Microdata CSV (id,area,...,region schema).
        #[arg(long)]
        records: PathBuf,
        /// Number of production-system clusters.
        #[arg(long)]
        clusters: usize,
        /// Target population size.
        #[arg(long)]
        size: usize,
        /// Random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Outlier threshold on per-variable z-scores.
        #[arg(long, default_value_t = 4.0)]
        z_threshold: f64,
        /// Output population CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a scenario config and everything it references.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scenario and write per-season exports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
        /// Directory for seasons.csv, farms_<s>.csv, markets_<s>.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare two scenario output directories season by season.
    Diff {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for diff.csv (defaults to the current directory).
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GeneratePopulation {
            records,
            clusters,
            size,
            seed,
            z_threshold,
            out,
        } => generate_population(&records, clusters, size, seed, z_threshold, &out),
        Command::Validate { config } => validate(&config),
        Command::Run {
            config,
            workers,
            out_dir,
        } => run(&config, workers, &out_dir),
        Command::Diff {
            baseline,
            scenario,
            out_dir,
        } => diff::diff(&baseline, &scenario, &out_dir),
    }
}

fn generate_population(
    records_path: &Path,
    clusters: usize,
    size: usize,
    seed: u64,
    z_threshold: f64,
    out: &Path,
) -> anyhow::Result<()> {
    if size == 0 {
        bail!("--size must be >= 1");
    }
    let records = population::load_farm_records(records_path).context("loading microdata")?;
    println!("loaded {} records from {}", records.len(), records_path.display());
    let kept = population::remove_outliers(&records, z_threshold).context("outlier removal")?;
    if kept.len() < records.len() {
        println!(
            "removed {} outliers at |z| >= {z_threshold}",
            records.len() - kept.len()
        );
    }
    let specs = population::cluster(&kept, clusters, seed).context("clustering")?;
    let pop =
        population::synthesize_population(&specs, size, seed).context("population synthesis")?;
    population::write_population(out, &pop).context("writing population")?;

    println!("cluster summary ({} clusters, {} farms):", specs.len(), size);
    println!(
        "{:>8} {:>8} {:>8} {:>10} {:>10}  centroid (standardized)",
        "cluster", "members", "weight", "count", "region"
    );
    let counts = population::apportion(
        &specs.iter().map(|s| s.weight).collect::<Vec<_>>(),
        size,
    );
    for (spec, count) in specs.iter().zip(&counts) {
        let centroid = spec
            .centroid
            .iter()
            .map(|v| format!("{v:+.2}"))
            .collect::<Vec<_>>()
            .join(" ");
        println!(
            "{:>8} {:>8} {:>8.4} {:>10} {:>10}  [{centroid}]",
            spec.cluster_id, spec.member_count, spec.weight, count, spec.modal_region
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn validate(config_path: &Path) -> anyhow::Result<()> {
    let config = ScenarioConfig::load(config_path).context("validation")?;
    market::build_world(&config.world).context("validation: world")?;
    println!(
        "ok: {} seasons, seed {}, {} workers, {} regions / {} markets, {} policy schemes",
        config.seasons,
        config.seed,
        config.workers,
        config.world.region.len(),
        config.world.market.len(),
        config.policy.len()
    );
    Ok(())
}

fn run(config_path: &Path, workers: Option<usize>, out_dir: &Path) -> anyhow::Result<()> {
    let mut config = ScenarioConfig::load(config_path).context("validation")?;
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be >= 1");
        }
        config.workers = w;
    }
    let seasons = config.seasons;
    let workers = config.workers;
    println!("running {seasons} seasons ({workers} workers)");
    let start = std::time::Instant::now();
    let mut total_farm = 0.0;
    let mut total_market = 0.0;
    let results = orchestrator::run_scenario(config, out_dir, |result, timing| {
        total_farm += timing.farm_phase_s;
        total_market += timing.market_phase_s;
        println!(
            "season {:>3}: price {:>8.2} production {:>12.1} t gap {:>5.3} t/ha adoptions {:>6} [{:.2}s farms, {:.3}s market]{}",
            result.season,
            result.italy_price,
            result.national_production,
            result.mean_yield_gap,
            result.adoption_counts.values().sum::<u64>(),
            timing.farm_phase_s,
            timing.market_phase_s,
            if result.price_flagged { " [price fallback]" } else { "" },
        );
    })
    .context("run")?;
    let non_converged: u64 = results.iter().map(|r| r.non_converged).sum();
    if non_converged > 0 {
        println!("warning: {non_converged} optimizations hit the sweep cap");
    }
    println!(
        "done: {} seasons in {:.2}s (farm phases {:.2}s, market {:.3}s); exports in {}",
        results.len(),
        start.elapsed().as_secs_f64(),
        total_farm,
        total_market,
        out_dir.display()
    );
    Ok(())
}
