use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cauda::datagen::{write_labeled_csv, write_unlabeled_csv};
use cauda::pipeline::{
    self, ablation_variants, format_table, load_checkpoint, run_variants, save_checkpoint, tau_variants,
    write_confusion_csv, write_run_outputs, DataSource, JsonlSink, MetricsRecord, MetricsSink, RunConfig,
};
use cauda::Error;

#[derive(Parser)]
#[command(name = "cauda", version, about = "Class-aware unsupervised domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic source/target pair as CSV.
    Generate(Common),
    /// Train on the labeled source set only and save the checkpoint.
    Pretrain(Common),
    /// Pretrain (or load a checkpoint), then adapt to the target set.
    Run {
        #[command(flatten)]
        common: Common,
        /// Start from this pretrained checkpoint instead of pretraining.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a checkpoint on the target set's hidden labels.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the ablation flag matrix, or the τ sweep, and print a table.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sweep_tau: bool,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Directory holding `source.csv` and `target.csv`.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    synthetic: Option<Synthetic>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    Gaussian,
    Moons,
}

impl Common {
    fn config(&self) -> cauda::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.data {
            cfg.data = DataSource::Csv {
                source: dir.join("source.csv"),
                target: dir.join("target.csv"),
            };
        }
        match self.synthetic {
            Some(Synthetic::Gaussian) => cfg.data = DataSource::Gaussian,
            Some(Synthetic::Moons) => {
                cfg.data = DataSource::Moons;
                cfg.num_classes = 2;
            }
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> cauda::Result<&Path> {
        std::fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn execute(cli: Cli) -> cauda::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.config()?;
            let (source, target) = cfg.load_data()?;
            let out = c.out_dir()?;
            write_labeled_csv(&out.join("source.csv"), &source)?;
            write_unlabeled_csv(&out.join("target.csv"), &target)?;
            println!("wrote {} source and {} target samples to {}", source.len(), target.len(), out.display());
        }
        Command::Pretrain(c) => {
            let cfg = c.config()?;
            let (source, _) = cfg.load_data()?;
            let out = c.out_dir()?;
            let mut sink = JsonlSink::create(&out.join(pipeline::METRICS_FILE))?;
            let params = pipeline::pretrain(&cfg, &source, &mut sink)?;
            save_checkpoint(&out.join(pipeline::CHECKPOINT_FILE), &params, None)?;
        }
        Command::Run { common, checkpoint } => {
            let cfg = common.config()?;
            let out = common.out_dir()?;
            let mut sink = JsonlSink::create(&out.join(pipeline::METRICS_FILE))?;
            let report = match checkpoint {
                Some(path) => {
                    let (params, _) = load_checkpoint(&path)?;
                    let (source, target) = cfg.load_data()?;
                    pipeline::run_with_pretrained(&cfg, &source, &target, params, &mut sink)?
                }
                None => pipeline::run(&cfg, &mut sink)?,
            };
            write_run_outputs(out, &report)?;
            print!("{}", pipeline::summary_text(&report));
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = common.config()?;
            let (params, _) = load_checkpoint(&checkpoint)?;
            let (_, target) = cfg.load_data()?;
            let eval = pipeline::evaluate_target(&params, &target)?;
            let out = common.out_dir()?;
            write_confusion_csv(&out.join(pipeline::CONFUSION_FILE), &eval.confusion)?;
            let mut rec = MetricsRecord::new(0, "evaluate");
            rec.target_accuracy = Some(eval.accuracy);
            rec.confusion = Some(eval.confusion);
            JsonlSink::create(&out.join(pipeline::METRICS_FILE))?.record(&rec)?;
            println!("{}", rec.to_json()?);
        }
        Command::Ablate { common, sweep_tau } => {
            let cfg = common.config()?;
            let out = common.out_dir()?.to_path_buf();
            let variants: Vec<(String, RunConfig)> = if sweep_tau {
                tau_variants(&cfg)
            } else {
                ablation_variants(&cfg).into_iter().map(|(n, c)| (n.to_string(), c)).collect()
            };
            let rows = run_variants(&cfg, &variants, |name| {
                let file = out.join(format!("metrics_{}.jsonl", name.replace('=', "_")));
                Ok(Box::new(JsonlSink::create(&file)?) as Box<dyn MetricsSink>)
            })?;
            let table = format_table(&rows);
            std::fs::write(out.join(pipeline::SUMMARY_FILE), &table).map_err(Error::from)?;
            print!("{table}");
        }
    }
    Ok(())
}
