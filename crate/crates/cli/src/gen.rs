use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use qarma::dataset::Dataset;
use qarma::generators::{gen_market, gen_rare_event, write_labels, MarketConfig, RareEventConfig};

use crate::{fraction, positive_count};

#[derive(Subcommand)]
pub enum GenCommand {
    /// Simulated shop purchase histories with a price attribute `p`.
    Ecom(EcomArgs),
    /// Sparse points with rare anomalies, as train and test sets with labels.
    Rare(RareArgs),
}

#[derive(Args)]
pub struct EcomArgs {
    #[arg(long, default_value_t = 2000, value_parser = positive_count)]
    items: usize,
    #[arg(long, default_value_t = 2000, value_parser = positive_count)]
    users: usize,
    /// Fraction of price-elastic items.
    #[arg(long, default_value_t = 0.51, value_parser = fraction)]
    elastic: f64,
    #[arg(long, default_value_t = 10, value_parser = positive_count)]
    cycles: usize,
    /// Wish-list size per user and cycle.
    #[arg(long, default_value_t = 10, value_parser = positive_count)]
    purchases: usize,
    #[arg(long, default_value_t = 1.0)]
    pareto_shape: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Market configuration as JSON, needed by `eval discount`.
    #[arg(long)]
    state: Option<PathBuf>,
}

#[derive(Args)]
pub struct RareArgs {
    #[arg(long, default_value_t = 20, value_parser = positive_count)]
    dims: usize,
    /// Normal training points.
    #[arg(long, default_value_t = 35000, value_parser = positive_count)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    anoms: usize,
    #[arg(long, default_value_t = 0.9, value_parser = fraction)]
    sparsity: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Receives train.jsonl, test.jsonl, train_labels.jsonl and test_labels.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(cmd: GenCommand) -> anyhow::Result<()> {
    match cmd {
        GenCommand::Ecom(args) => ecom(args),
        GenCommand::Rare(args) => rare(args),
    }
}

fn write_dataset(path: &Path, ds: &Dataset) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ds.write_histories(&mut w)?;
    w.flush()?;
    Ok(())
}

fn ecom(args: EcomArgs) -> anyhow::Result<()> {
    let config = MarketConfig {
        n_items: args.items,
        n_users: args.users,
        elastic_frac: args.elastic,
        cycles: args.cycles,
        purchases_per_cycle: args.purchases,
        pareto_shape: args.pareto_shape,
        seed: args.seed,
        ..MarketConfig::default()
    };
    let (ds, state) = gen_market(config)?;
    write_dataset(&args.out, &ds)?;
    if let Some(path) = &args.state {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &state.config)?;
        writeln!(w)?;
    }
    Ok(())
}

fn rare(args: RareArgs) -> anyhow::Result<()> {
    let config = RareEventConfig {
        n_train: args.train,
        n_anomalies: args.anoms,
        sparsity: args.sparsity,
        seed: args.seed,
        ..RareEventConfig::with_dims(args.dims)
    };
    let data = gen_rare_event(&config)?;
    fs::create_dir_all(&args.out_dir)?;
    write_dataset(&args.out_dir.join("train.jsonl"), &data.train)?;
    write_dataset(&args.out_dir.join("test.jsonl"), &data.test)?;
    for (name, ds, labels) in [
        ("train_labels.jsonl", &data.train, &data.train_labels),
        ("test_labels.jsonl", &data.test, &data.test_labels),
    ] {
        let mut w = BufWriter::new(File::create(args.out_dir.join(name))?);
        write_labels(&mut w, ds, labels)?;
        w.flush()?;
    }
    Ok(())
}
