use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use qarma::dataset::load_dataset;
use qarma::distributed::{mine_distributed, DEFAULT_TASK_TIMEOUT};
use qarma::engine::{EngineConfig, Miner};
use qarma::rule::{write_rules, Ltf, Metric, Precision};

use crate::{fraction, ltf, non_negative, positive_count, ModeArg};

#[derive(Args)]
pub struct MineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = fraction)]
    min_support: f64,
    #[arg(long, value_parser = fraction)]
    min_confidence: f64,
    #[arg(long, value_parser = non_negative)]
    min_conviction: Option<f64>,
    /// Comma-separated metrics compared by dominance.
    #[arg(long, value_parser = ltf, default_value = "confidence")]
    ltf: Ltf,
    /// Attribute shared by every item; the only one a consequent constrains.
    #[arg(long, default_value = "p")]
    consequent_attr: String,
    /// Adds the negation of an attribute so antecedents can bound it from above.
    #[arg(long = "negate-attr")]
    negate_attrs: Vec<String>,
    #[arg(long, default_value_t = 3, value_parser = positive_count)]
    max_len: usize,
    #[arg(long, default_value_t = 1, value_parser = positive_count)]
    workers: usize,
    #[arg(long, default_value_t = 128, value_parser = positive_count)]
    batch: usize,
    #[arg(long, value_enum, default_value = "geq")]
    mode: ModeArg,
    /// Keeps only rules no other emitted rule is wider than.
    #[arg(long)]
    widest: bool,
    /// Comma-separated worker addresses.
    #[arg(long, value_delimiter = ',')]
    workers_remote: Vec<String>,
    /// Rule lines; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn run(args: MineArgs) -> anyhow::Result<()> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let dataset = load_dataset(BufReader::new(file), &args.consequent_attr)?;
    let mut thresholds = vec![(Metric::Confidence, args.min_confidence)];
    if let Some(v) = args.min_conviction {
        thresholds.push((Metric::Conviction, v));
    }
    let config = EngineConfig {
        min_support: args.min_support,
        thresholds,
        ltf: args.ltf.0.clone(),
        shared_attr: args.consequent_attr.clone(),
        max_len: args.max_len,
        workers: args.workers,
        batch: args.batch,
        mode: args.mode.into(),
        widest: args.widest,
        negate_attrs: args.negate_attrs.clone(),
        audit: false,
    };
    let miner = Miner::new(dataset, config)?;
    let out = if args.workers_remote.is_empty() {
        miner.mine()?
    } else {
        mine_distributed(&miner, args.workers_remote.clone(), &args.input, DEFAULT_TASK_TIMEOUT)?
    };
    log::info!("{} rules in {:.3}s", out.rules.len(), out.report.total_secs);

    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_rules(&mut w, &out.rules, &miner.dataset.catalog, Precision::Sig6)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(std::io::stdout().lock());
            write_rules(&mut w, &out.rules, &miner.dataset.catalog, Precision::Sig6)?;
            w.flush()?;
        }
    }
    if let Some(path) = &args.report {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &out.report)?;
        writeln!(w)?;
    }
    Ok(())
}
