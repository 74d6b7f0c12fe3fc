//! Command-line front end: campaigns, single runs, replay, metrics and the
//! tracking-stream demo.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use realgap::ads::AdsChoice;
use realgap::experiments::{emit_report, gap_preset, run_campaign, Campaign};
use realgap::metrics::{cloud_stats, evaluate_run, image_battery, ImageMetricReport};
use realgap::mixing::Modality;
use realgap::runtime::{loopback_soak, run_closed_loop, RunConfig, RunLog};
use realgap::sensing::io::{read_depth, read_ppm};
use realgap::sensing::{depth_to_cloud, SensorRig};
use realgap::world::build_scenario;
use realgap::Error;

#[derive(Parser)]
#[command(name = "realgap", version, about = "Closed-loop reality-gap evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign file, or a single episode with --scenario.
    Run {
        campaign: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value = "modular")]
        ads: String,
        /// Replaces the campaign seeds with consecutive seeds from this one.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Restricts the campaign to these modalities; repeatable.
        #[arg(long)]
        modality: Vec<Modality>,
        #[arg(long)]
        gap_preset: Option<String>,
        /// Persist every perception frame of a single episode.
        #[arg(long)]
        frames: bool,
        #[arg(long, default_value_t = 40.0)]
        max_duration: f64,
    },
    /// Re-execute a saved run and check that it reproduces byte for byte.
    Replay { log: PathBuf },
    /// Compare two run logs, two PPM images or two depth frames.
    Metrics { a: PathBuf, b: PathBuf },
    /// Stream poses over loopback UDP and report what arrived.
    UdpDemo {
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
    },
}

enum Failure {
    Config(Error),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Validation(_) | Error::Lookup(_) => Failure::Config(e),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            campaign,
            scenario,
            ads,
            seed,
            out,
            modality,
            gap_preset,
            frames,
            max_duration,
        } => match (campaign, scenario) {
            (Some(path), None) => run_file(&path, seed, &out, &modality, gap_preset.as_deref()),
            (None, Some(name)) => run_single(&name, &ads, seed.unwrap_or(0), &out, &modality, gap_preset.as_deref(), frames, max_duration),
            _ => Err(Failure::Config(Error::Config("give either a campaign file or --scenario".into()))),
        },
        Command::Replay { log } => replay(&log),
        Command::Metrics { a, b } => metrics(&a, &b),
        Command::UdpDemo { rate, duration } => udp_demo(rate, duration),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

fn run_file(path: &Path, seed: Option<u64>, out: &Path, modalities: &[Modality], gap: Option<&str>) -> Result<(), Failure> {
    let mut campaign = Campaign::load(path)?;
    if let Some(s) = seed {
        campaign.seeds = (s..s + campaign.seeds.len() as u64).collect();
    }
    if !modalities.is_empty() {
        campaign.modalities = modalities.to_vec();
    }
    if let Some(g) = gap {
        campaign.gap = g.to_string();
    }
    campaign.validate()?;
    let reports = run_campaign(&campaign)?;
    for p in emit_report(&reports, &campaign.formats, out)? {
        println!("{}", p.display());
    }
    let errors: usize = reports.iter().map(|r| r.run_errors).sum();
    if errors > 0 {
        return Err(Failure::Run(format!("{errors} runs failed with errors; reports written")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_single(name: &str, ads: &str, seed: u64, out: &Path, modalities: &[Modality], gap: Option<&str>, frames: bool, max_duration: f64) -> Result<(), Failure> {
    let scenario = build_scenario(name)?;
    let ads: AdsChoice = ads.parse()?;
    let config = RunConfig {
        store_frames: frames,
        ..RunConfig::default()
    };
    let gap = gap_preset(gap.unwrap_or("zero"), &config.twin, &config.rates)?;
    let modalities = if modalities.is_empty() { vec![Modality::SIL] } else { modalities.to_vec() };
    for m in modalities {
        let log = run_closed_loop(&scenario, m, &ads, &gap, seed, max_duration, &config)?;
        let dir = out.join(format!("{name}_{m}_{}_{seed}", ads.label()));
        log.save(&dir)?;
        println!("{}: {}", dir.display(), log.outcome);
    }
    Ok(())
}

fn replay(dir: &Path) -> Result<(), Failure> {
    let log = RunLog::load(dir)?;
    let h = &log.header;
    let scenario = build_scenario(&h.scenario)?;
    let config = RunConfig {
        rates: h.rates,
        rig: h.rig.clone(),
        ads: h.ads_config.clone(),
        twin: h.twin,
        store_frames: !log.stored_frames.is_empty(),
        ..RunConfig::default()
    };
    let again = run_closed_loop(&scenario, h.modality, &h.ads, &h.gap, h.seed, h.max_duration, &config)?;
    if again.body_bytes() == log.body_bytes() {
        println!("identical: {} ticks, outcome {}", again.ticks.len(), again.outcome);
        Ok(())
    } else {
        let tick = log
            .ticks
            .iter()
            .zip(&again.ticks)
            .position(|(a, b)| a != b)
            .unwrap_or(log.ticks.len().min(again.ticks.len()));
        Err(Failure::Run(format!("replay diverged at tick {tick}")))
    }
}

fn metrics(a: &Path, b: &Path) -> Result<(), Failure> {
    if a.is_dir() && b.is_dir() {
        let (la, lb) = (RunLog::load(a)?, RunLog::load(b)?);
        let scenario = build_scenario(&la.header.scenario)?;
        let m = evaluate_run(&la, &lb, &scenario)?;
        println!("frechet_to_reference = {}", m.frechet_to_reference);
        println!("completion_pct = {}", m.completion_pct);
        println!("completion_delta_vs_reference = {}", m.completion_delta_vs_reference);
        println!("crashes = {}", m.crashes);
        println!("out_of_road = {}", m.out_of_road);
        println!("failure = {}", m.failure);
        return Ok(());
    }
    let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if ext(a) == "ppm" && ext(b) == "ppm" {
        let r = image_battery(&read_ppm(a)?, &read_ppm(b)?)?;
        for (name, v) in ImageMetricReport::NAMES.iter().zip(r.values()) {
            if !v.is_nan() {
                println!("{name} = {v}");
            }
        }
        return Ok(());
    }
    let rig = SensorRig::default();
    let ca = depth_to_cloud(&read_depth(a)?, &rig.tof, rig.min_range)?;
    let cb = depth_to_cloud(&read_depth(b)?, &rig.tof, rig.min_range)?;
    let s = cloud_stats(&ca, &cb)?;
    println!("mean = {}\nmax = {}\nstd = {}\nmatched = {}\nunmatched = {}", s.mean, s.max, s.std, s.matched_count, s.unmatched_count);
    Ok(())
}

fn udp_demo(rate: f64, duration: f64) -> Result<(), Failure> {
    if !(rate > 0.0 && duration > 0.0) {
        return Err(Failure::Config(Error::Config("rate and duration must be positive".into())));
    }
    let r = loopback_soak(rate, duration)?;
    println!("sent = {}\ndecoded = {}\ndropped = {}", r.sent, r.decoded, r.dropped);
    if r.dropped > 0 || r.decoded != r.sent {
        return Err(Failure::Run("datagrams were lost or rejected".into()));
    }
    Ok(())
}
