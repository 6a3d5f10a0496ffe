use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Subcommand};
use qarma::dataset::{augment_negated, load_dataset, negated_name, Dataset};
use qarma::evaluation::{coverage, report_discounting, reservation_estimates, roc, sig6, write_discounting, write_roc};
use qarma::generators::{gen_market, read_labels, MarketConfig};
use qarma::rule::{read_rules, RuleLine, StoredRule};

use crate::{fraction, positive_count};

#[derive(Subcommand)]
pub enum EvalCommand {
    /// Fraction of histories covered by at least one rule.
    Coverage(Inputs),
    /// Detection, false alarm and accuracy per confidence cut.
    Roc(RocArgs),
    /// Reservation price estimates per history and item.
    Reserve(ReserveArgs),
    /// Revenue under no, horizontal and personalized discounts.
    Discount(DiscountArgs),
}

#[derive(Args)]
pub struct Inputs {
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "p")]
    shared_attr: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RocArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Labels file with one `{"u":..., "anomaly":...}` line per history.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "class")]
    target: String,
    #[arg(long, default_value_t = 25.0)]
    threshold: f64,
    /// Comma-separated confidence cuts; the rules' distinct confidences when absent.
    #[arg(long, value_delimiter = ',', value_parser = fraction)]
    cuts: Vec<f64>,
}

#[derive(Args)]
pub struct ReserveArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 0.7, value_parser = fraction)]
    min_conf: f64,
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    item: Option<String>,
}

#[derive(Args)]
pub struct DiscountArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Market configuration written by `gen ecom --state`.
    #[arg(long)]
    market: PathBuf,
    #[arg(long, default_value_t = 0.7, value_parser = fraction)]
    min_conf: f64,
    /// Comma-separated discount levels in percent.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35,40")]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 10, value_parser = positive_count)]
    cycles: usize,
}

pub fn run(cmd: EvalCommand) -> anyhow::Result<()> {
    match cmd {
        EvalCommand::Coverage(inputs) => {
            let (ds, rules) = load(&inputs)?;
            emit(&inputs, format!("{}\n", sig6(coverage(&rules, &ds)?)))
        }
        EvalCommand::Roc(args) => roc_cmd(args),
        EvalCommand::Reserve(args) => reserve(args),
        EvalCommand::Discount(args) => discount(args),
    }
}

/// Loads the dataset and the rules, adding negated attributes the rules
/// refer to.
fn load(inputs: &Inputs) -> anyhow::Result<(Dataset, Vec<StoredRule>)> {
    let data = File::open(&inputs.data).with_context(|| format!("opening {}", inputs.data.display()))?;
    let mut ds = load_dataset(BufReader::new(data), &inputs.shared_attr)?;
    let text = fs::read_to_string(&inputs.rules).with_context(|| format!("opening {}", inputs.rules.display()))?;
    let mut wanted = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed: RuleLine = serde_json::from_str(line)?;
        for (_, attr, _) in parsed.quants {
            if ds.catalog.attr_id(&attr).is_none() && !wanted.contains(&attr) {
                wanted.push(attr);
            }
        }
    }
    for attr in wanted {
        let source = ds.catalog.attrs().find(|a| negated_name(a) == attr).map(str::to_owned);
        if let Some(source) = source {
            ds = augment_negated(&ds, &source)?;
        }
    }
    let rules = read_rules(text.as_bytes(), &ds.catalog, ds.shared_attr)?;
    Ok((ds, rules))
}

fn emit(inputs: &Inputs, text: String) -> anyhow::Result<()> {
    match &inputs.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn roc_cmd(args: RocArgs) -> anyhow::Result<()> {
    let Some(labels_path) = &args.labels else {
        bail!("eval roc requires --labels");
    };
    let (ds, rules) = load(&args.inputs)?;
    let labels = read_labels(BufReader::new(File::open(labels_path)?), &ds)?;
    let Some(target) = ds.catalog.item_id(&args.target) else {
        bail!("unknown target item `{}`", args.target);
    };
    let mut cuts = args.cuts.clone();
    if cuts.is_empty() {
        cuts = rules.iter().map(|s| s.metrics.confidence).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        if cuts.is_empty() {
            cuts.push(0.0);
        }
    }
    let points = roc(&rules, &ds, &labels, target, args.threshold, &cuts)?;
    let mut buf = Vec::new();
    write_roc(&mut buf, &points)?;
    emit(&args.inputs, String::from_utf8(buf)?)
}

fn reserve(args: ReserveArgs) -> anyhow::Result<()> {
    let (ds, rules) = load(&args.inputs)?;
    let item = match &args.item {
        Some(name) => Some(
            ds.catalog
                .item_id(name)
                .with_context(|| format!("unknown item `{name}`"))?,
        ),
        None => None,
    };
    if let Some(user) = &args.user {
        if !ds.histories.iter().any(|h| &h.user == user) {
            bail!("unknown user `{user}`");
        }
    }
    let mut estimates: Vec<_> = reservation_estimates(&rules, &ds, args.min_conf)
        .into_iter()
        .filter(|((u, i), _)| {
            item.is_none_or(|x| x == *i) && args.user.as_ref().is_none_or(|x| &ds.histories[*u].user == x)
        })
        .collect();
    estimates.sort_by_key(|&(key, _)| key);
    let mut text = String::from("user,item,reservation\n");
    for ((u, i), v) in estimates {
        text.push_str(&format!(
            "{},{},{}\n",
            ds.histories[u].user,
            ds.catalog.item_name(i),
            sig6(v)
        ));
    }
    emit(&args.inputs, text)
}

fn discount(args: DiscountArgs) -> anyhow::Result<()> {
    let (ds, rules) = load(&args.inputs)?;
    let config: MarketConfig = serde_json::from_reader(BufReader::new(File::open(&args.market)?))?;
    let (_, state) = gen_market(config)?;
    let levels: Vec<f64> = args.levels.iter().map(|l| l / 100.0).collect();
    if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        bail!("discount levels must lie in [0, 100]");
    }
    let rows = report_discounting(&state, &ds, &rules, args.min_conf, &levels, args.cycles);
    let mut w = BufWriter::new(Vec::new());
    write_discounting(&mut w, &rows)?;
    emit(&args.inputs, String::from_utf8(w.into_inner()?)?)
}
