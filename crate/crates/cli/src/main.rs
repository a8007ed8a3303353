use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reachavoid_cli::commands::{self, Sweep};
use reachavoid_cli::sweep::{parse_counts, parse_reals};
use reachavoid_cli::{load_config, CliError, Profile, Result};

#[derive(Parser)]
#[command(name = "reachavoid", version, about = "Reach-avoid decision transformer pipelines")]
struct Cli {
    /// TOML config layered over the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect random-policy trajectories.
    GenData {
        #[arg(long)]
        steps: Option<usize>,
        /// Defaults to <out>/raw.jsonl.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Hindsight goal and avoid relabeling into a paired dataset.
    Relabel {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Re-check the pairing invariant before writing.
        #[arg(long)]
        verify: bool,
    },
    /// Train with periodic checkpoints and select the best one.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from the checkpoint written after this many steps.
        #[arg(long)]
        resume_from: Option<usize>,
    },
    /// Evaluate a checkpoint, optionally sweeping box width or box count.
    Eval {
        /// Model file, checkpoint directory or run directory; defaults to the
        /// selected checkpoint of <out>/train.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Widths as `a,b,c`, `lo..hi` (step 0.02) or `lo..hi:step`.
        #[arg(long, conflicts_with = "n_avoid")]
        box_width: Option<String>,
        /// Box counts as `a,b` or `lo..hi`.
        #[arg(long)]
        n_avoid: Option<String>,
        /// Evaluation seeds per setting; defaults to eval.seeds.
        #[arg(long)]
        seeds: Option<usize>,
        /// Evaluate the uniform random policy instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        random: bool,
    },
    /// Rank visited intermediate states, then re-run avoiding the top one.
    CardioStudy {
        /// Model file, checkpoint directory or run directory; defaults to the
        /// selected checkpoint of <out>/train.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Avoid this state instead of the top-ranked one.
        #[arg(long)]
        avoid_state: Option<String>,
        /// Fixed start state; overrides env.cardio.start.
        #[arg(long)]
        start: Option<String>,
    },
    /// Flatten eval reports into one CSV.
    ExportMetrics {
        /// Defaults to <out>/eval.
        #[arg(long)]
        reports: Option<PathBuf>,
        /// Defaults to <out>/metrics.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref(), cli.profile)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    let out = cfg.out.clone();
    match cli.command {
        Command::GenData { steps, output } => {
            if let Some(s) = steps {
                cfg.data.steps = s;
                cfg.validate()?;
            }
            commands::cmd_gen_data(&cfg, &output.unwrap_or_else(|| out.join(commands::RAW_FILE)))?;
        }
        Command::Relabel { input, output, verify } => {
            let input = input.unwrap_or_else(|| out.join(commands::RAW_FILE));
            let output = output.unwrap_or_else(|| out.join(commands::PAIRED_FILE));
            let report = commands::cmd_relabel(&cfg, &input, &output, &out.join(commands::RELABEL_REPORT_FILE), verify)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Train { data, resume_from } => {
            let data = data.unwrap_or_else(|| out.join(commands::PAIRED_FILE));
            let res = commands::cmd_train(&cfg, &data, &out.join(commands::TRAIN_DIR), resume_from)?;
            for r in &res.records {
                println!("step {:>6}  sr {:.3}  mnc {:.4}", r.step, r.sr, r.mnc);
            }
            if let Some(s) = res.selected {
                println!("selected step {}", s.step);
            }
        }
        Command::Eval { checkpoint, box_width, n_avoid, seeds, random } => {
            let sweep = match (box_width, n_avoid) {
                (Some(w), _) => Sweep::BoxWidth(parse_reals(&w, "--box-width")?),
                (None, Some(n)) => Sweep::NAvoid(parse_counts(&n, "--n-avoid")?),
                (None, None) => Sweep::None,
            };
            let ckpt = if random { None } else { Some(checkpoint.unwrap_or_else(|| out.join(commands::TRAIN_DIR))) };
            let seeds = seeds.unwrap_or(cfg.eval.seeds);
            let reports = commands::cmd_eval(&cfg, ckpt.as_deref(), &sweep, seeds, &out.join(commands::EVAL_DIR))?;
            for r in &reports {
                println!(
                    "{}={}  sr {:.3} ± {:.3}  mnc {:.4} ± {:.4}",
                    r.axis, r.value, r.sr_mean, r.sr_std, r.mnc_mean, r.mnc_std
                );
            }
        }
        Command::CardioStudy { checkpoint, avoid_state, start } => {
            let ckpt = checkpoint.unwrap_or_else(|| out.join(commands::TRAIN_DIR));
            let report = commands::cmd_cardio_study(
                &cfg,
                &ckpt,
                avoid_state.as_deref(),
                start.as_deref(),
                &out.join(commands::STUDY_DIR),
            )?;
            print!("{}", commands::case_summary(&report));
        }
        Command::ExportMetrics { reports, output } => {
            let reports = reports.unwrap_or_else(|| out.join(commands::EVAL_DIR));
            let output = output.unwrap_or_else(|| out.join("metrics.csv"));
            let rows = commands::cmd_export_metrics(&reports, &output)?;
            println!("wrote {rows} rows to {}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
