use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use firesched::detect::{
    detect_blobs, early_fuse, late_fuse, BoundingBox, Detection, DetectorProfile,
};
use firesched::io::{
    emit_report, emit_tables, load_bundle, load_report, read_instance, read_json, write_instance,
    ScheduleFile,
};
use firesched::mission::{run_mission, truth_instance, FusionMode};
use firesched::par::Execution;
use firesched::scene::Raster;
use firesched::scheduler::{
    solve_bruteforce, solve_exact, validate_schedule, SolveOptions, Variant,
};

#[derive(Parser)]
#[command(
    name = "firesched",
    version,
    about = "Wildfire detection and reconfigurable satellite scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-Block missions.
    #[command(subcommand)]
    Mission(MissionCmd),
    /// Single scheduling instances.
    #[command(subcommand)]
    Schedule(ScheduleCmd),
    /// Find hotspots in a raster.
    Detect(DetectArgs),
    /// Combine rasters or detector outputs.
    #[command(subcommand)]
    Fuse(FuseCmd),
    /// Visibility tensors.
    #[command(subcommand)]
    Visibility(VisibilityCmd),
    /// Re-emit the CSV tables of a finished mission and print the per-Block results.
    Report {
        #[arg(long)]
        mission: PathBuf,
    },
}

#[derive(Subcommand)]
enum MissionCmd {
    Run {
        /// Scenario bundle.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the bundle's.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        scheduler: Option<SchedulerArg>,
        #[arg(long, value_enum)]
        fusion: Option<FusionArg>,
        /// Run every loop on one thread.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Subcommand)]
enum ScheduleCmd {
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Schedule file to write; printed when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the exhaustive reference solver.
        #[arg(long)]
        bruteforce: bool,
        /// Seconds per solve.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Args)]
struct DetectArgs {
    /// PGM raster with its JSON sidecar.
    #[arg(long)]
    raster: PathBuf,
    /// Detector profile JSON; the early-fusion profile when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FuseCmd {
    /// Principal-component fusion of co-registered rasters.
    Early {
        #[arg(long = "raster", required = true, num_args = 1..)]
        rasters: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weighted box fusion of several detectors' boxes.
    Late {
        /// JSON array of boxes.
        #[arg(long)]
        boxes: PathBuf,
        /// Number of detectors that contributed.
        #[arg(long)]
        models: u32,
        #[arg(long, default_value_t = 0.55)]
        iou: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VisibilityCmd {
    /// Instance for the first scheduled Block with every burning fire as a priority target.
    Compute {
        #[arg(long)]
        config: PathBuf,
        /// Instance JSON; the tensor cache is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedulerArg {
    Reossp,
    Eossp,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Band6,
    Band7,
    Early,
    Late,
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            firesched::io::write_json(p, value).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn print_table(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mission(MissionCmd::Run {
            config,
            out,
            scheduler,
            fusion,
            sequential,
        }) => {
            let bundle =
                load_bundle(&config).with_context(|| format!("loading {}", config.display()))?;
            let mut cfg = bundle.mission;
            if let Some(s) = scheduler {
                cfg.scheduler = match s {
                    SchedulerArg::Reossp => Variant::Reossp,
                    SchedulerArg::Eossp => Variant::Eossp,
                };
            }
            if let Some(f) = fusion {
                cfg.fusion = match f {
                    FusionArg::Band6 => FusionMode::Band6,
                    FusionArg::Band7 => FusionMode::Band7,
                    FusionArg::Early => FusionMode::Early,
                    FusionArg::Late => FusionMode::Late,
                };
            }
            cfg.execution = exec(sequential);
            let dir = out.unwrap_or(bundle.output.dir);
            let run = run_mission(&cfg)?;
            for b in &run.report.blocks {
                for w in &b.warnings {
                    log::warn!("{w}");
                }
            }
            let files = emit_report(&run, &dir)?;
            eprintln!("wrote {} files to {}", files.len(), dir.display());
            print_table(&dir.join("schedule_results.csv"))
        }
        Command::Schedule(ScheduleCmd::Solve {
            instance,
            out,
            bruteforce,
            time_limit,
            sequential,
        }) => {
            let inst = read_instance(&instance)
                .with_context(|| format!("loading {}", instance.display()))?;
            let schedule = if bruteforce {
                solve_bruteforce(&inst)?
            } else {
                let opts = SolveOptions {
                    time_limit: time_limit.map(Duration::from_secs_f64),
                    execution: exec(sequential),
                    ..SolveOptions::default()
                };
                solve_exact(&inst, &opts)?
            };
            let violations = validate_schedule(&schedule, &inst);
            let file = ScheduleFile::new(schedule, violations, &inst);
            emit(&file, out.as_deref())?;
            if !file.violations.is_empty() {
                bail!("schedule has {} violations", file.violations.len());
            }
            Ok(())
        }
        Command::Detect(args) => {
            let raster = Raster::read_pgm(&args.raster)
                .with_context(|| format!("reading {}", args.raster.display()))?;
            let profile: DetectorProfile = match &args.profile {
                Some(p) => read_json(p)?,
                None => DetectorProfile::default(),
            };
            profile.validate()?;
            let dets = detect_blobs(&raster, &profile)
                .into_iter()
                .map(|b| Detection::from_box(b, &raster.meta, raster.width, raster.height))
                .collect::<firesched::Result<Vec<_>>>()?;
            emit(&dets, args.out.as_deref())
        }
        Command::Fuse(FuseCmd::Early { rasters, out }) => {
            let loaded = rasters
                .iter()
                .map(|p| Raster::read_pgm(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Raster> = loaded.iter().collect();
            let (fused, weights) = early_fuse(&refs)?;
            fused.write_pgm(&out)?;
            println!("{}", serde_json::to_string(&weights)?);
            Ok(())
        }
        Command::Fuse(FuseCmd::Late {
            boxes,
            models,
            iou,
            out,
        }) => {
            let input: Vec<BoundingBox> = read_json(&boxes)?;
            emit(&late_fuse(&input, models, iou)?, out.as_deref())
        }
        Command::Visibility(VisibilityCmd::Compute { config, out }) => {
            let bundle =
                load_bundle(&config).with_context(|| format!("loading {}", config.display()))?;
            let inst = truth_instance(&bundle.mission)?;
            write_instance(&inst, &out)?;
            let d = &inst.tensors.dims;
            eprintln!(
                "{} satellites, {} stages x {} steps, {} slots, {} targets, {} stations",
                d.satellites,
                d.stages,
                d.steps_per_stage,
                d.slots.iter().max().copied().unwrap_or(0),
                d.n_priority,
                d.n_stations
            );
            Ok(())
        }
        Command::Report { mission } => {
            let report = load_report(&mission)
                .with_context(|| format!("loading the report in {}", mission.display()))?;
            emit_tables(&report, &mission)?;
            print_table(&mission.join("schedule_results.csv"))?;
            print_table(&mission.join("detection_status.csv"))
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        // library errors already fold their source into the message
        let mut msg = String::new();
        for cause in e.chain().map(|c| c.to_string()) {
            if !msg.ends_with(&cause) {
                if !msg.is_empty() {
                    msg.push_str(": ");
                }
                msg.push_str(&cause);
            }
        }
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}
