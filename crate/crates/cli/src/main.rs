use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use footnav::io::{self, ImuLog};
use footnav::pipeline::{self, Mode, RunConfig, RunOutput, RunStatus, Variant};
use footnav::{Error, Foot, Result};

#[derive(Parser, Debug)]
#[command(
    name = "footnav",
    version,
    about = "Dual foot-mounted IMU navigation with inter-foot ranging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a square walk, write its logs and run the filters on it.
    Simulate(Common),
    /// Run the filters on recorded IMU and range logs.
    Replay {
        #[command(flatten)]
        common: Common,
        /// IMU log (t, foot, gx, gy, gz, ax, ay, az).
        #[arg(long)]
        imu: Option<PathBuf>,
        /// Range log (t, d).
        #[arg(long)]
        range: Option<PathBuf>,
    },
    /// Eigen-spectrum and batch solution of the zero-velocity system.
    Observe(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Filter variant to run; repeat for several. Overrides the configuration.
    #[arg(long, value_parser = parse_variant)]
    variant: Vec<Variant>,
    /// Also write GeoJSON tracks.
    #[arg(long)]
    geojson: bool,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::from_tag(s).ok_or_else(|| format!("unknown variant {s:?}; expected zupt, zupt-rng or zupt-rng-ec"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::InvalidInput(_) => 1,
        Error::Parse { .. } | Error::Data { .. } | Error::Io { .. } | Error::Geodetic(_) | Error::Initialization(_) => {
            2
        }
        Error::Divergence(_) | Error::Propagation(_) => 3,
    }
}

fn configure(common: &Common, mode: Mode) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => io::load_config(p)?,
        None => RunConfig::default(),
    };
    cfg.mode = mode;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if !common.variant.is_empty() {
        cfg.variants = common.variant.clone();
    }
    cfg.io.geojson |= common.geojson;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.io.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn report(out: &Path, output: &RunOutput) -> bool {
    let mut diverged = false;
    for s in &output.summaries {
        println!(
            "{:<12} rel pos {:.3} m  rel yaw {:.3} deg  end error L {:.3} m R {:.3} m",
            s.variant.tag(),
            s.relative_position_error,
            s.relative_yaw_error.to_degrees(),
            s.left.position_error,
            s.right.position_error,
        );
        if let RunStatus::Diverged { t, message } = &s.status {
            eprintln!("{}: diverged at t = {t:.3} s: {message}", s.variant.tag());
            diverged = true;
        }
    }
    println!("outputs in {}", out.display());
    diverged
}

fn filter_and_write(cfg: &RunConfig, out: &Path, log: &ImuLog, ranges: &[footnav::RangeSample]) -> Result<bool> {
    let output = pipeline::run_variants(&log.left, &log.right, ranges, cfg)?;
    io::write_run_outputs(out, &output, cfg.io.geojson)?;
    Ok(report(out, &output))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(common) => {
            let (cfg, out) = configure(&common, Mode::Simulate)?;
            cfg.validate()?;
            let walk = footnav::sim::build_square_walk(&cfg.gait, &cfg.earth, cfg.seed)?;
            let log = ImuLog {
                left: walk.imu_left,
                right: walk.imu_right,
            };
            io::write_logs(&out, &log, &walk.range)?;
            io::save_config(&out.join("config.json"), &cfg)?;
            filter_and_write(&cfg, &out, &log, &walk.range)
        }
        Command::Replay { common, imu, range } => {
            let (mut cfg, out) = configure(&common, Mode::Replay)?;
            if let Some(p) = imu {
                cfg.io.imu = Some(p.display().to_string());
            }
            if let Some(p) = range {
                cfg.io.range = Some(p.display().to_string());
            }
            cfg.validate()?;
            let (log, ranges) = io::load_inputs(&cfg)?;
            filter_and_write(&cfg, &out, &log, &ranges)
        }
        Command::Observe(common) => {
            let (cfg, out) = configure(&common, Mode::Observe)?;
            cfg.validate()?;
            let reports = Foot::BOTH
                .into_iter()
                .map(|f| pipeline::observe(&cfg, f))
                .collect::<Result<Vec<_>>>()?;
            io::write_observability(&out, &reports)?;
            for r in &reports {
                println!("{}: {} rows", r.foot.tag(), r.steps.len());
            }
            println!("outputs in {}", out.display());
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(3),
        Err(e) => {
            eprintln!("footnav: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
