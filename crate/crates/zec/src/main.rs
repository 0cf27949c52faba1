use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use zec::baselines::Strategy;
use zec::cms::http::CmsServer;
use zec::cms::SharedCms;
use zec::config::load_scenario;
use zec::data::{synthesize_consumption, synthesize_exposure, write_consumption, write_exposure};
use zec::domain::{ScenarioConfig, Season};
use zec::harness::{
    build_scenario, compare, compare_csv, config_txt, run, write_run_outputs,
};

#[derive(Parser)]
#[command(
    name = "zec",
    version,
    about = "Energy-community simulator: train sharing agents, run baselines, serve the monitor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy on a scenario and write report.csv / steps.csv / config.txt
    Run(RunArgs),
    /// Run several strategies across seeds and write compare.csv
    Compare(CompareArgs),
    /// Write synthetic consumption and exposure series as CSV
    GenData(GenDataArgs),
    /// Serve the community monitoring HTTP API until interrupted
    ServeCms(ServeCmsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SeasonArg {
    Winter,
    Summer,
}

impl From<SeasonArg> for Season {
    fn from(value: SeasonArg) -> Season {
        match value {
            SeasonArg::Winter => Season::Winter,
            SeasonArg::Summer => Season::Summer,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Learned,
    Always,
    Never,
    Random,
}

impl From<StrategyArg> for Strategy {
    fn from(value: StrategyArg) -> Strategy {
        match value {
            StrategyArg::Learned => Strategy::Learned,
            StrategyArg::Always => Strategy::AlwaysShare,
            StrategyArg::Never => Strategy::NeverShare,
            StrategyArg::Random => Strategy::Random,
        }
    }
}

/// Flags that pick and adjust a scenario, shared by `run` and `compare`.
#[derive(Args)]
struct ScenarioArgs {
    /// Standard scenario id: 1 (three houses), 2 (adds a houseless consumer), 3 (ten generated houses)
    #[arg(long, default_value_t = 1, conflicts_with = "config")]
    scenario: u32,

    /// Season to simulate (defaults to winter for standard scenarios)
    #[arg(long, value_enum)]
    season: Option<SeasonArg>,

    /// Master seed (defaults to 0 for standard scenarios)
    #[arg(long)]
    seed: Option<u64>,

    /// Override the episode count
    #[arg(long)]
    episodes: Option<u32>,

    /// Override the simulated days per episode
    #[arg(long)]
    days: Option<u32>,

    /// Override the solar panel yield factor
    #[arg(long)]
    yield_factor: Option<f64>,

    /// Load the scenario from a TOML file instead of a standard id
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut config = match &self.config {
            Some(path) => load_scenario(path)
                .with_context(|| format!("loading scenario from {}", path.display()))?,
            None => build_scenario(
                self.scenario,
                self.season.unwrap_or(SeasonArg::Winter).into(),
                self.seed.unwrap_or(0),
            )?,
        };
        if let Some(season) = self.season {
            config.season = season.into();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(episodes) = self.episodes {
            config.episodes = episodes;
        }
        if let Some(days) = self.days {
            config.days = days;
        }
        if let Some(yield_factor) = self.yield_factor {
            config.params.yield_factor = yield_factor;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Policy to run
    #[arg(long, value_enum, default_value_t = StrategyArg::Learned)]
    strategy: StrategyArg,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Also save trained Q-networks as <agent_id>.qnet in the output directory
    #[arg(long)]
    save_nets: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Policies to compare
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = [StrategyArg::Learned, StrategyArg::Always, StrategyArg::Never, StrategyArg::Random])]
    strategies: Vec<StrategyArg>,

    /// Seeds to average over
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value_t = SeasonArg::Winter)]
    season: SeasonArg,

    /// Days of half-hour readings to generate
    #[arg(long, default_value_t = 3)]
    days: u32,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Mean daily consumption in kWh
    #[arg(long, default_value_t = 10.0)]
    daily_mean: f64,

    /// Output directory for consumption.csv and exposure.csv
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeCmsArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::GenData(args) => cmd_gen_data(args),
        Command::ServeCms(args) => cmd_serve_cms(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.scenario.resolve()?;
    let strategy: Strategy = args.strategy.into();
    let output = run(&config, strategy)?;
    write_run_outputs(&args.out, &config, &output)?;
    if args.save_nets {
        for (agent_id, net) in &output.networks {
            net.save(&args.out.join(format!("{agent_id}.qnet")))?;
        }
    }
    let last = &output.report.final_eval;
    println!(
        "{} on {} house(s), {} episode(s): final community status {:.3} kWh",
        strategy.label(),
        config.houses.len(),
        config.episodes,
        last.community_status_kwh
    );
    println!("reports written to {}", args.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let config = args.scenario.resolve()?;
    let strategies: Vec<Strategy> = args.strategies.iter().map(|&s| s.into()).collect();
    let rows = compare(&config, &strategies, &args.seeds)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("compare.csv");
    std::fs::write(&path, compare_csv(&rows))
        .with_context(|| format!("writing {}", path.display()))?;
    std::fs::write(args.out.join("config.txt"), config_txt(&config))?;
    for strategy in &strategies {
        let label = strategy.label();
        let last = rows
            .iter()
            .filter(|r| r.strategy == *strategy)
            .max_by_key(|r| r.episode)
            .expect("compare emits rows for every requested strategy");
        println!(
            "{label}: final-episode status {:.3} ± {:.3} kWh over {} seed(s)",
            last.mean_status_kwh, last.sd_status_kwh, last.seeds
        );
    }
    println!("comparison written to {}", path.display());
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let season: Season = args.season.into();
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let consumption = synthesize_consumption(args.seed, args.daily_mean, args.days);
    let exposure = synthesize_exposure(args.seed, season, args.days);
    write_consumption(&args.out.join("consumption.csv"), &consumption)?;
    write_exposure(&args.out.join("exposure.csv"), &exposure)?;
    println!(
        "wrote {} half-hour readings per file ({} day(s), {}) to {}",
        consumption.len(),
        args.days,
        season.label(),
        args.out.display()
    );
    Ok(())
}

fn cmd_serve_cms(args: ServeCmsArgs) -> Result<()> {
    let server = CmsServer::start(SharedCms::new(), args.port)?;
    println!("community monitor listening on http://{}", server.addr());
    println!("press Ctrl-C to stop");
    loop {
        std::thread::park();
    }
}
