use std::path::PathBuf;
use std::process::ExitCode;

use alvtts::config::RunConfig;
use alvtts::pipeline::{BertOptions, Pipeline, Stage2Options, SynthMode, SynthRequest};
use alvtts::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "alvtts", version, about = "Cross-dialect TTS with accent latent variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PredictedAlv,
    ReferenceAlv,
    NoAlv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Full,
    Compact,
}

#[derive(Subcommand)]
enum Command {
    /// Write a preset configuration file.
    InitConfig {
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic two-dialect corpus.
    GenCorpus {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the multi-dialect text corpus by translating standard-dialect text.
    Augment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pre-train MD-PL-BERT on the text corpus.
    PretrainBert {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jointly train the reference encoder, codebook and backbone.
    TrainStage1 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fine-tune the ALV predictor on extracted ALVs.
    TrainStage2 {
        #[arg(long)]
        config: PathBuf,
        /// Start from random weights instead of MD-PL-BERT.
        #[arg(long)]
        from_scratch: bool,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Pre-trained MD-PL-BERT checkpoint to start from.
        #[arg(long)]
        bert: Option<PathBuf>,
        /// Output checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesise acoustic frames for a text.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Space-separated words in the target dialect.
        #[arg(long)]
        text: String,
        #[arg(long)]
        speaker: String,
        #[arg(long)]
        dialect: String,
        #[arg(long, value_enum, default_value = "predicted-alv")]
        mode: ModeArg,
        /// Reference utterance id (reference-alv mode).
        #[arg(long)]
        reference: Option<String>,
        /// Output feature file; ALVs are written next to it as `<out>.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        wav: Option<PathBuf>,
    },
    /// Extract ALVs from corpus utterances with the trained quantizer.
    ExtractAlv {
        #[arg(long)]
        config: PathBuf,
        /// Utterance ids; all utterances when omitted.
        #[arg(long = "utt")]
        utts: Vec<String>,
    },
    /// Compute all available metrics and write the metrics JSON.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn pipeline(path: &PathBuf) -> Result<Pipeline> {
    Pipeline::new(RunConfig::load(path)?)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::InitConfig { preset, out } => {
            let c = match preset {
                PresetArg::Desk => RunConfig::desk(),
                PresetArg::Full => RunConfig::full(),
                PresetArg::Compact => RunConfig::compact(),
            };
            std::fs::write(&out, c.to_toml()).map_err(|e| Error::io(&out, e))
        }
        Command::GenCorpus { config } => print_json(&pipeline(&config)?.gen_corpus()?),
        Command::Augment { config } => print_json(&pipeline(&config)?.augment()?),
        Command::PretrainBert { config, seed, out } => {
            let r = pipeline(&config)?.pretrain_bert_with(&BertOptions { seed, out })?;
            print_json(&serde_json::json!({
                "steps": r.steps,
                "final": r.log.last(),
                "checkpoint": r.checkpoint,
                "checkpoint_hash": r.checkpoint_hash,
            }))
        }
        Command::TrainStage1 { config } => {
            let o = pipeline(&config)?.train_stage1()?;
            print_json(&serde_json::json!({
                "steps": o.report.steps,
                "first_total": o.report.first_total,
                "final_total": o.report.final_total,
                "usage_counts": o.report.usage_counts,
                "quantizer_hash": o.quantizer_hash,
                "backbone_hash": o.backbone_hash,
            }))
        }
        Command::TrainStage2 {
            config,
            from_scratch,
            seed,
            bert,
            out,
        } => {
            let o = pipeline(&config)?.train_stage2(&Stage2Options {
                from_scratch,
                seed,
                bert,
                out,
            })?;
            print_json(&serde_json::json!({
                "from_scratch": o.report.from_scratch,
                "initial_val_accuracy": o.report.initial_val_accuracy,
                "best_val_accuracy": o.report.best_val_accuracy,
                "best_step": o.report.best_step,
                "checkpoint": o.checkpoint,
                "checkpoint_hash": o.checkpoint_hash,
            }))
        }
        Command::Synthesize {
            config,
            text,
            speaker,
            dialect,
            mode,
            reference,
            out,
            wav,
        } => {
            let mode = match (mode, reference) {
                (ModeArg::PredictedAlv, _) => SynthMode::PredictedAlv,
                (ModeArg::NoAlv, _) => SynthMode::NoAlv,
                (ModeArg::ReferenceAlv, Some(r)) => SynthMode::ReferenceAlv(r),
                (ModeArg::ReferenceAlv, None) => {
                    return Err(Error::Config("reference-alv mode needs --reference <utt_id>".into()))
                }
            };
            let req = SynthRequest {
                words: text.split_whitespace().map(str::to_string).collect(),
                speaker,
                dialect,
                mode,
                out,
                wav,
            };
            print_json(&pipeline(&config)?.synthesize(&req)?)
        }
        Command::ExtractAlv { config, utts } => {
            for (id, alvs) in pipeline(&config)?.extract_alv(&utts)? {
                println!("{}", serde_json::json!({ "utt_id": id, "alvs": alvs }));
            }
            Ok(())
        }
        Command::Evaluate { config } => print_json(&pipeline(&config)?.evaluate()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
