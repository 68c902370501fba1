use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use tlv_cli::*;
use tlv_core::analysis::Selection;
use tlv_core::ingest::{SampleSpec, Verdict, DEFAULT_MAX_FRAMES};
use tlv_core::resampler::Method;

#[derive(Parser)]
#[command(name = "tlv", version, about = "Video token resampling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print sampled frame indices of a clip, one per line.
    #[command(group(ArgGroup::new("mode").required(true).args(["uniform", "fps"])))]
    Sample {
        video: PathBuf,
        #[arg(long)]
        uniform: Option<usize>,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_MAX_FRAMES, requires = "fps")]
        max: usize,
    },
    /// Train the configured stages.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query-zeroing retention curve for a trained run.
    Probe {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
        fractions: Vec<f64>,
        #[arg(long, value_enum, default_value = "random")]
        selection: SelectionArg,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the attention map of one clip for a trained run.
    Heatmap {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 0)]
        clip_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every point of a group-setting grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the number of visual tokens a method delivers.
    Budget {
        #[arg(long)]
        method: Method,
        #[arg(long, value_delimiter = ',', required = true)]
        frames: Vec<usize>,
        #[arg(long)]
        per_frame: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long, default_value_t = 1)]
        tokens_per_frame: usize,
    },
    /// Filter a tab-separated caption corpus.
    Curate {
        corpus: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Write a synthetic clip container.
    GenVideo {
        out: PathBuf,
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 25.0)]
        rate: f64,
        #[arg(long, default_value_t = 1)]
        tokens: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SelectionArg {
    Random,
    First,
    Last,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Random => Selection::Random,
            SelectionArg::First => Selection::First,
            SelectionArg::Last => Selection::Last,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sample { video, uniform, fps, max } => {
            let spec = match (uniform, fps) {
                (Some(count), _) => SampleSpec::Uniform { count },
                (None, Some(rate)) => SampleSpec::Fps { rate, max_frames: max },
                (None, None) => unreachable!("clap requires a mode"),
            };
            for i in cmd_sample(&video, &spec)? {
                println!("{i}");
            }
        }
        Command::Train {
            config,
            out,
            seed,
            method,
            groups,
            queries,
            steps,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply(&TrainOverrides {
                seed,
                method,
                groups,
                total_queries: queries,
                steps,
            });
            let name = format!("train-{}-seed{}", cfg.model.method, cfg.model.init_seed);
            let dir = artifact_dir(out.as_deref(), &name);
            let outcome = cmd_train(&cfg, &dir)?;
            for r in &outcome.reports {
                println!(
                    "{}: {} steps, eval loss {:.4} -> {:.4}, accuracy {:.4}",
                    r.stage, r.steps, r.eval_loss_before, r.eval_loss_after, r.accuracy
                );
            }
            println!("final accuracy {:.4}", outcome.final_accuracy);
            println!("artifacts in {}", dir.display());
        }
        Command::Replay { manifest, out } => {
            let inv = cmd_replay(&manifest, &out)?;
            println!("replayed {} into {}", inv.name(), out.display());
        }
        Command::Probe {
            run,
            fractions,
            selection,
            seeds,
            samples,
            out,
        } => {
            let dir = artifact_dir(out.as_deref(), "probe");
            let args = ProbeArgs {
                run,
                fractions,
                selection: selection.into(),
                seeds,
                samples,
            };
            let result = cmd_probe(&args, &dir)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", result.to_csv());
        }
        Command::Heatmap { run, clip_seed, out } => {
            let dir = artifact_dir(out.as_deref(), "heatmap");
            let art = cmd_heatmap(&run, clip_seed, &dir)?;
            println!("{}", art.csv.display());
            println!("{}", art.pgm.display());
            println!("{}", art.annotations.display());
        }
        Command::Sweep { config, out } => {
            let cfg = SweepConfig::load(&config)?;
            let dir = artifact_dir(out.as_deref(), "sweep");
            let rows = cmd_sweep(&cfg, &dir)?;
            print!("{}", tlv_core::analysis::sweep_csv(&rows));
        }
        Command::Budget {
            method,
            frames,
            per_frame,
            queries,
            tokens_per_frame,
        } => {
            let rows = cmd_budget(&BudgetArgs {
                method,
                frames,
                per_frame,
                queries,
                tokens_per_frame,
            })?;
            for (_, tokens) in rows {
                println!("{tokens}");
            }
        }
        Command::Curate { corpus, rules } => {
            let records = cmd_curate(&corpus, rules.as_deref())?;
            let kept = records.iter().filter(|r| r.verdict == Verdict::Kept).count();
            for r in &records {
                match &r.verdict {
                    Verdict::Rejected(reason) => println!("{}\trejected\t{reason}", r.id),
                    v => println!("{}\t{v}", r.id),
                }
            }
            eprintln!("{kept} of {} kept", records.len());
        }
        Command::GenVideo {
            out,
            frames,
            rate,
            tokens,
            dim,
        } => cmd_gen_video(&out, frames, rate, tokens, dim)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tlv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
