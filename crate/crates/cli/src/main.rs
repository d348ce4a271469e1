use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synlstm::cell::Gate;
use synlstm::data::{parse_corpus, write_corpus};
use synlstm::eval::{
    ablation_run, collect_traces, derive_seed, evaluate, gate_histogram, predict_corpus, run_tree_comparison, Ablation,
};
use synlstm::gradcheck::model_suite;
use synlstm::synthetic::{make_synthetic, SyntheticSpec};
use synlstm::trainer::{apply_tree_source, load, save, train, ModelConfig, TreeSource};
use synlstm::Error;

/// Dependency-guided NER with Syn-LSTM-CRF.
#[derive(Debug, Parser)]
#[command(name = "synlstm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and save the best-dev checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a labelled corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the report as `metric,bucket,value` CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the corpus with its ner column replaced by predictions.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every parameter gradient, per variant.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Histogram of one gate's values as CSV.
    AnalyzeGates {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "m")]
        gate: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per tree source and compare test F1 and mean m gate.
    CompareTrees {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated: given, random, predicted=PATH.
        #[arg(long, default_value = "given,random")]
        sources: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and score the model with one component removed.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// gcn-1-layer, gcn-all, deprel-embedding, pos-embedding or original-dependency.
        #[arg(long)]
        drop: String,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate the synthetic graph-dependent corpus.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        sentences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ModelConfig, Error> {
    let mut config = ModelConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Train { config, train: train_path, dev, out, seed } => {
            let config = load_config(&config, seed)?;
            let tr = apply_tree_source(&parse_corpus(&train_path)?, &config.tree_source, derive_seed(config.seed, 1))?;
            let dv = apply_tree_source(&parse_corpus(&dev)?, &config.tree_source, derive_seed(config.seed, 2))?;
            let ckpt = train(&config, &tr, &dv)?;
            for h in &ckpt.history {
                println!("epoch {:>3} lr={:.5} loss={:.6} dev_f1={:.4}", h.epoch, h.lr, h.loss, h.dev_f1);
            }
            println!("best epoch {} dev F1 {:.4}", ckpt.best_epoch, ckpt.best_dev_f1);
            save(&ckpt, &out)?;
        }
        Command::Eval { model, data, report } => {
            let ckpt = load(&model)?;
            let r = evaluate(&ckpt.model, &parse_corpus(&data)?)?;
            print!("{}", r.to_text());
            if let Some(path) = report {
                std::fs::write(path, r.to_csv())?;
            }
        }
        Command::Predict { model, data, out } => {
            let ckpt = load(&model)?;
            write_corpus(&out, &predict_corpus(&ckpt.model, &parse_corpus(&data)?)?)?;
        }
        Command::Gradcheck { config, tol, hidden, seed } => {
            let config = load_config(&config, seed)?;
            let checks = model_suite(&config, hidden, config.seed)?;
            let mut worst: f64 = 0.0;
            for c in &checks {
                println!("{:<24} params={:<6} max_rel_err={:.3e}", c.variant.to_string(), c.checked, c.max_rel_err);
                worst = worst.max(c.max_rel_err);
            }
            println!("max rel err {worst:.3e}");
            if !(worst < tol) {
                let at = checks.iter().find(|c| c.max_rel_err == worst).and_then(|c| c.worst.clone());
                return Err(Error::Contract(format!("gradient check failed: {worst:.3e} >= {tol:e} at {at:?}")));
            }
        }
        Command::AnalyzeGates { model, data, gate, out } => {
            let gate: Gate = gate.parse()?;
            let ckpt = load(&model)?;
            let traces = collect_traces(&ckpt.model, &parse_corpus(&data)?)?;
            let hist = gate_histogram(&traces, gate)?;
            std::fs::write(out, hist.to_csv())?;
            println!("{} values of gate {} histogrammed", hist.total(), gate.name());
        }
        Command::CompareTrees { config, data, sources, seed } => {
            let config = load_config(&config, seed)?;
            let sources = sources.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<TreeSource>, _>>()?;
            let (cmp, _) = run_tree_comparison(&config, &parse_corpus(&data)?, &sources)?;
            print!("{}", cmp.to_text());
        }
        Command::Ablate { config, data, drop, report, seed } => {
            let config = load_config(&config, seed)?;
            let drop: Ablation = drop.parse()?;
            let (r, _) = ablation_run(&config, &parse_corpus(&data)?, Some(drop))?;
            println!("ablation {drop}");
            print!("{}", r.to_text());
            if let Some(path) = report {
                std::fs::write(path, r.to_csv())?;
            }
        }
        Command::MakeSynthetic { out, sentences, seed } => {
            write_corpus(&out, &make_synthetic(SyntheticSpec::new(sentences, seed)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NumericalAbort { .. } => 3,
                _ => 2,
            })
        }
    }
}
