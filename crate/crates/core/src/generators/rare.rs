use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::substream;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const RARE_ATTR: &str = "value";
pub const CLASS_ITEM: &str = "class";

const DIMS: u64 = 11;
const TRAIN: u64 = 12;
const TEST: u64 = 13;
const PLACEMENT: u64 = 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RareEventConfig {
    pub dims: usize,
    pub sparsity: f64,
    /// Normal points per dataset.
    pub n_train: usize,
    pub n_anomalies: usize,
    /// Zero-based dimensions pushed to their extremes in anomalies.
    pub anomaly_dims: Vec<usize>,
    pub extremal_band: f64,
    pub normal_class: (f64, f64),
    pub anomalous_class: (f64, f64),
    pub seed: u64,
}

impl Default for RareEventConfig {
    fn default() -> Self {
        RareEventConfig {
            dims: 20,
            sparsity: 0.9,
            n_train: 35000,
            n_anomalies: 100,
            anomaly_dims: vec![17, 18, 19],
            extremal_band: 0.01,
            normal_class: (0.0, 1.0),
            anomalous_class: (50.0, 10.0),
            seed: 1,
        }
    }
}

impl RareEventConfig {
    /// Default settings with the anomaly dimensions moved to the last three
    /// of `dims`.
    pub fn with_dims(dims: usize) -> Self {
        RareEventConfig {
            dims,
            anomaly_dims: (dims.saturating_sub(3)..dims).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Config(format!("sparsity {} is outside [0, 1)", self.sparsity)));
        }
        if self.dims == 0 || self.anomaly_dims.len() > self.dims || self.anomaly_dims.iter().any(|&d| d >= self.dims) {
            return Err(Error::Config(
                "anomaly dimensions must lie within the point dimensions".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.extremal_band) {
            return Err(Error::Config(format!(
                "extremal band {} is outside [0, 1]",
                self.extremal_band
            )));
        }
        if self.normal_class.1 <= 0.0 || self.anomalous_class.1 <= 0.0 {
            return Err(Error::Config("class deviations must be positive".into()));
        }
        Ok(())
    }
}

pub struct RareEventData {
    pub train: Dataset,
    pub test: Dataset,
    /// Aligned with history order.
    pub train_labels: Vec<bool>,
    pub test_labels: Vec<bool>,
}

pub fn dim_name(d: usize) -> String {
    format!("dim_{d}")
}

struct Point {
    values: Vec<Option<f64>>,
    class: f64,
    anomaly: bool,
}

fn normal_points(cfg: &RareEventConfig, dists: &[Normal<f64>], domain: u64) -> Vec<Point> {
    let class = Normal::new(cfg.normal_class.0, cfg.normal_class.1).expect("validated");
    (0..cfg.n_train)
        .map(|k| {
            let mut rng = substream(cfg.seed, domain, k as u64);
            let values = dists
                .iter()
                .map(|d| {
                    let v = d.sample(&mut rng);
                    (!rng.random_bool(cfg.sparsity)).then_some(v)
                })
                .collect();
            Point {
                values,
                class: class.sample(&mut rng),
                anomaly: false,
            }
        })
        .collect()
}

/// Generates train and test sets of identical shape. Anomalous points are
/// placed directly in the top band of each anomaly dimension, measured on
/// the normal points of both sets, and always carry those dimensions.
pub fn gen_rare_event(cfg: &RareEventConfig) -> Result<RareEventData> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, DIMS, 0);
    let dists: Vec<Normal<f64>> = (0..cfg.dims)
        .map(|_| {
            let mean = rng.random_range(0.0..100.0);
            let sd = rng.random_range(1.0..10.0);
            Normal::new(mean, sd).expect("positive deviation")
        })
        .collect();
    let mut sets = [normal_points(cfg, &dists, TRAIN), normal_points(cfg, &dists, TEST)];

    let extremes: Vec<(f64, f64)> = (0..cfg.dims)
        .map(|d| {
            let observed = sets.iter().flatten().filter_map(|p| p.values[d]);
            let (lo, hi) = observed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if lo.is_finite() {
                (lo, hi)
            } else {
                let m = dists[d].mean();
                (m, m)
            }
        })
        .collect();

    let class = Normal::new(cfg.anomalous_class.0, cfg.anomalous_class.1).expect("validated");
    let mut out = Vec::new();
    for (s, points) in sets.iter_mut().enumerate() {
        let mut rng = substream(cfg.seed, PLACEMENT, s as u64);
        for _ in 0..cfg.n_anomalies {
            let values = (0..cfg.dims)
                .map(|d| {
                    let v = dists[d].sample(&mut rng);
                    if cfg.anomaly_dims.contains(&d) {
                        let (lo, hi) = extremes[d];
                        let floor = hi - cfg.extremal_band * (hi - lo);
                        Some(if hi > floor { rng.random_range(floor..=hi) } else { hi })
                    } else {
                        (!rng.random_bool(cfg.sparsity)).then_some(v)
                    }
                })
                .collect();
            points.push(Point {
                values,
                class: class.sample(&mut rng),
                anomaly: true,
            });
        }
        points.shuffle(&mut rng);
        let prefix = if s == 0 { "train" } else { "test" };
        out.push(to_dataset(cfg, points, prefix)?);
    }
    let (test, test_labels) = out.pop().expect("two sets");
    let (train, train_labels) = out.pop().expect("two sets");
    Ok(RareEventData {
        train,
        test,
        train_labels,
        test_labels,
    })
}

fn to_dataset(cfg: &RareEventConfig, points: &[Point], prefix: &str) -> Result<(Dataset, Vec<bool>)> {
    let mut ds = Dataset::empty(RARE_ATTR);
    let mut users = HashMap::new();
    for d in 0..cfg.dims {
        ds.catalog.intern_item(&dim_name(d));
    }
    ds.catalog.intern_item(CLASS_ITEM);
    let mut labels = Vec::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        let user = format!("{prefix}{k}");
        for (d, v) in p.values.iter().enumerate() {
            if let Some(v) = v {
                ds.push(&mut users, &user, &dim_name(d), &[(RARE_ATTR, *v)])?;
            }
        }
        ds.push(&mut users, &user, CLASS_ITEM, &[(RARE_ATTR, p.class)])?;
        labels.push(p.anomaly);
    }
    ds.refresh_ranges();
    Ok((ds, labels))
}

/// One `{"u": key, "anomaly": bool}` line per history.
pub fn write_labels<W: Write>(mut out: W, ds: &Dataset, labels: &[bool]) -> Result<()> {
    for (h, &a) in ds.histories.iter().zip(labels) {
        serde_json::to_writer(&mut out, &serde_json::json!({"u": h.user, "anomaly": a}))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct LabelLine {
    u: String,
    anomaly: bool,
}

/// Labels in `ds` history order from a file written by [`write_labels`].
pub fn read_labels<R: BufRead>(source: R, ds: &Dataset) -> Result<Vec<bool>> {
    let mut by_user = HashMap::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(&line).map_err(|e| Error::Ingestion {
            line: n + 1,
            message: e.to_string(),
        })?;
        by_user.insert(parsed.u, parsed.anomaly);
    }
    ds.histories
        .iter()
        .map(|h| {
            by_user
                .get(&h.user)
                .copied()
                .ok_or_else(|| Error::MissingLabel(h.user.clone()))
        })
        .collect()
}
