use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use velest::data_pipeline::{
    compute_norm_stats, read_collection, write_state_file, Dataset, SplitTag,
};
use velest::eval::{
    assign_splits, build_suite, compare_estimators, default_suite, error_along_track, run_case_study,
    run_mkf, run_network, split_of, suite_minutes, truth_states_at, write_suite, write_track_errors,
    CaseConfig, CaseId, Estimator, EvalOptions, ReferenceSource, EVAL_WARMUP,
};
use velest::gru_net::{
    read_checkpoint, train_on_datasets, write_checkpoint, Checkpoint, GruNetwork, TrainConfig,
    DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE,
};
use velest::io::KeyValues;
use velest::mkf::{run_filter, write_estimates, FilterMode};
use velest::vehicle_sim::{simulate, ScenarioConfig, SurfaceClass};
use velest::data_pipeline::{INPUT_DIM, OUTPUT_DIM};

#[derive(Parser)]
#[command(name = "velest", version, about = "Vehicle velocity estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write raw sensor CSVs, truth and manifest.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Seconds.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value = "flat")]
        surface: String,
    },
    /// Synchronize a raw simulator directory into a 200 Hz dataset.
    Prepare {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also build smoothed reference targets (needs the external velocity channel).
        #[arg(long)]
        with_targets: bool,
    },
    /// Simulate and prepare the default evaluation suite, one dataset per subdirectory.
    Suite {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train a network on the train split of a dataset collection.
    Train {
        /// key=value file: training keys plus `hidden`, `dropout`, `leaky_slope`, `init_seed`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the checkpoint path with a `.history.csv` extension.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run one estimator over a dataset.
    Estimate {
        #[arg(long, conflicts_with = "mkf_mode", required_unless_present = "mkf_mode")]
        checkpoint: Option<PathBuf>,
        /// `reference` or `baseline`.
        #[arg(long)]
        mkf_mode: Option<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare estimators on a dataset collection.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Comma list of `baseline`, `reference_mkf`, `reference`, `NAME=CHECKPOINT`.
        #[arg(long)]
        estimators: String,
        #[arg(long)]
        report: PathBuf,
        /// `train`, `test`, `validation` or `all`.
        #[arg(long, default_value = "test")]
        split: String,
        /// `truth` or `targets`.
        #[arg(long, default_value = "truth")]
        against: String,
        #[arg(long, default_value_t = EVAL_WARMUP)]
        warmup: usize,
        /// Five comma-separated %error normalizers (vx, vy, yawrate, ax, ay).
        #[arg(long)]
        normalizers: Option<String>,
    },
    /// Run a case study; exits nonzero when its criterion fails.
    Casestudy {
        /// `bias_calibration`, `launch`, `high_slip` or `outlier`.
        #[arg(long)]
        case: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Summary key=value file; the series CSV goes next to it.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "flat")]
        surface: String,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0.2)]
        bias: f64,
        /// Outlier case: keep IMU-2 alive.
        #[arg(long)]
        no_freeze: bool,
    },
    /// Lateral-velocity error along the driven path of a raw simulator directory.
    TrackError {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long, conflicts_with = "mkf_mode", required_unless_present = "mkf_mode")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mkf_mode: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            scenario,
            seed,
            out,
            duration,
            surface,
        } => {
            let surface: SurfaceClass = surface.parse()?;
            let cfg = ScenarioConfig::new(scenario.parse()?, duration, seed).with_surface(surface);
            let result = simulate(&cfg)?;
            std::fs::create_dir_all(&out)?;
            result.write_dir(&out)?;
            println!(
                "{} s of {} on {} written to {}",
                duration,
                cfg.kind,
                surface,
                out.display()
            );
        }
        Command::Prepare {
            raw,
            out,
            with_targets,
        } => {
            let ds = Dataset::from_raw_dir(&raw, with_targets)?;
            ds.write_dir(&out)?;
            println!("{} frames written to {}", ds.len(), out.display());
        }
        Command::Suite { out, seed } => {
            let entries = default_suite(seed);
            let sets = build_suite(&entries)?;
            write_suite(&out, &sets)?;
            println!(
                "{} datasets, {:.1} simulated minutes, written to {}",
                sets.len(),
                suite_minutes(&entries),
                out.display()
            );
        }
        Command::Train {
            config,
            data,
            checkpoint,
            history,
        } => train_cmd(&config, &data, &checkpoint, history)?,
        Command::Estimate {
            checkpoint,
            mkf_mode,
            data,
            out,
        } => {
            let ds = Dataset::read_dir(&data)?;
            match (checkpoint, mkf_mode) {
                (Some(ck), _) => {
                    let ck = read_checkpoint(&ck)?;
                    write_state_file(&out, &ds.frames, &run_network(&ck, &ds))?;
                }
                (None, Some(mode)) => {
                    let mode: FilterMode = mode.parse()?;
                    let cfg = velest::eval::mkf_config_for(&ds, mode)?;
                    write_estimates(&out, &run_filter(&ds.frames, &cfg)?)?;
                }
                (None, None) => bail!("either --checkpoint or --mkf-mode is required"),
            }
            println!("{} estimates written to {}", ds.len(), out.display());
        }
        Command::Evaluate {
            data,
            estimators,
            report,
            split,
            against,
            warmup,
            normalizers,
        } => {
            let mut sets = read_collection(&data)?;
            if sets.is_empty() {
                bail!("no datasets under {}", data.display());
            }
            let chosen: Vec<&Dataset> = if split == "all" {
                sets.iter().collect()
            } else {
                let tag: SplitTag = split.parse()?;
                if sets.iter().any(|d| d.split.is_none()) {
                    assign_splits(&mut sets)?;
                }
                split_of(&sets, tag)
            };
            if chosen.is_empty() {
                bail!("no datasets in split `{split}`");
            }
            let normalizers = normalizers.map(|s| parse_normalizers(&s)).transpose()?;
            let opts = EvalOptions {
                warmup,
                source: against.parse::<ReferenceSource>()?,
                normalizers,
            };
            let rep = compare_estimators(&chosen, &Estimator::parse_list(&estimators)?, &opts)?;
            rep.write(&report)?;
            print!("{}", rep.format_table());
        }
        Command::Casestudy {
            case,
            checkpoint,
            report,
            seed,
            surface,
            duration,
            bias,
            no_freeze,
        } => {
            let case: CaseId = case.parse()?;
            let ck = read_checkpoint(&checkpoint)?;
            let cfg = CaseConfig {
                seed,
                duration,
                surface: surface.parse()?,
                injected_bias: bias,
                freeze: !no_freeze,
                ..CaseConfig::default()
            };
            let r = run_case_study(case, Some(&ck), &cfg)?;
            r.write_report(&report)?;
            println!("{}: {}", r.case, r.criterion);
            for (k, v) in &r.summary {
                println!("  {k} = {v:.6}");
            }
            println!("{}", if r.passed { "PASS" } else { "FAIL" });
            if !r.passed {
                return Ok(ExitCode::from(2));
            }
        }
        Command::TrackError {
            raw,
            checkpoint,
            mkf_mode,
            out,
        } => {
            let ds = Dataset::from_raw_dir(&raw, false)?;
            let traj = read_trajectory(&raw)?;
            let truth = truth_states_at(&ds.frames, &traj)?;
            let est = match (checkpoint, mkf_mode) {
                (Some(ck), _) => run_network(&read_checkpoint(&ck)?, &ds),
                (None, Some(mode)) => run_mkf(&ds, mode.parse()?)?,
                (None, None) => bail!("either --checkpoint or --mkf-mode is required"),
            };
            let rec = error_along_track(&est, &truth, EVAL_WARMUP)?;
            write_track_errors(&out, &rec)?;
            println!("{} records written to {}", rec.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_normalizers(s: &str) -> Result<[f64; OUTPUT_DIM]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("normalizers must be numbers")?;
    v.try_into()
        .map_err(|v: Vec<f64>| anyhow::anyhow!("expected {OUTPUT_DIM} normalizers, got {}", v.len()))
}

fn read_trajectory(raw: &Path) -> Result<velest::vehicle_sim::Trajectory> {
    let kv = KeyValues::parse(&std::fs::read_to_string(raw.join("manifest.txt"))?)?;
    let params = velest::vehicle_sim::VehicleParams::from_kv(&kv, "vehicle.")?;
    let f = std::fs::File::open(raw.join("truth.csv")).context("truth.csv")?;
    let table = velest::io::read_table(std::io::BufReader::new(f))?;
    Ok(velest::vehicle_sim::Trajectory::from_table(&table, params)?)
}

fn train_cmd(config: &Path, data: &Path, checkpoint: &Path, history: Option<PathBuf>) -> Result<()> {
    let kv = KeyValues::parse(&std::fs::read_to_string(config).context("reading config")?)?;
    let cfg = TrainConfig::from_kv(&kv)?;
    let hidden: Vec<usize> = kv.parse_list("hidden")?.unwrap_or_else(|| vec![64]);
    let net = GruNetwork::new(
        INPUT_DIM,
        &hidden,
        OUTPUT_DIM,
        kv.parse_or("dropout", DEFAULT_DROPOUT)?,
        kv.parse_or("leaky_slope", DEFAULT_LEAKY_SLOPE)?,
        kv.parse_or("init_seed", cfg.seed)?,
    )?;

    let mut sets = read_collection(data)?;
    if sets.iter().any(|d| d.split.is_none()) {
        assign_splits(&mut sets)?;
    }
    let train = split_of(&sets, SplitTag::Train);
    let val = split_of(&sets, SplitTag::Validation);
    if train.is_empty() || val.is_empty() {
        bail!("need datasets in both the train and validation splits");
    }
    let norm = compute_norm_stats(&train)?;
    let (best, hist) = train_on_datasets(&net, &train, &val, &norm, &cfg)?;
    let ck = Checkpoint {
        net: best,
        norm,
        warmup_steps: cfg.warmup_steps,
    };
    write_checkpoint(checkpoint, &ck)?;
    let hpath = history.unwrap_or_else(|| checkpoint.with_extension("history.csv"));
    hist.write(&hpath)?;
    println!(
        "{} epochs, best validation loss {:.5} at epoch {}{}; checkpoint {}, history {}",
        hist.records.len(),
        hist.best_val_loss(),
        hist.best_epoch,
        if hist.stopped_early { " (early stop)" } else { "" },
        checkpoint.display(),
        hpath.display()
    );
    Ok(())
}
