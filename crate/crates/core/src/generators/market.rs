use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::substream;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

const PRICE_ATTR: &str = "p";

const ITEMS: u64 = 1;
const RESERVATION: u64 = 2;
const PRICES: u64 = 3;
const WISHES: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub n_items: usize,
    pub n_users: usize,
    pub elastic_frac: f64,
    pub cycles: usize,
    pub purchases_per_cycle: usize,
    pub pareto_shape: f64,
    pub price_range: (f64, f64),
    pub seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            n_items: 2000,
            n_users: 2000,
            elastic_frac: 0.51,
            cycles: 10,
            purchases_per_cycle: 10,
            pareto_shape: 1.0,
            price_range: (1.0, 100.0),
            seed: 1,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.elastic_frac) {
            return Err(Error::Config(format!(
                "elastic fraction {} is outside [0, 1]",
                self.elastic_frac
            )));
        }
        if self.n_items == 0 || self.n_users == 0 || self.cycles == 0 || self.purchases_per_cycle == 0 {
            return Err(Error::Config("market counts must be at least 1".into()));
        }
        if self.pareto_shape.is_nan() || self.pareto_shape <= 0.0 {
            return Err(Error::Config("pareto shape must be positive".into()));
        }
        let (lo, hi) = self.price_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("bad price range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiscountPolicy {
    None,
    /// Every price cut by this fraction.
    Horizontal(f64),
    /// A customer who declines an elastic item at the current price is
    /// offered it at their estimated reservation price, if that is at most
    /// this fraction below the current price.
    Personalized(f64),
}

/// One purchase opportunity: a wish-list entry in some cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wish {
    pub user: usize,
    pub item: usize,
    pub price: f64,
}

#[derive(Clone, Debug)]
pub struct MarketState {
    pub config: MarketConfig,
    pub base_price: Vec<f64>,
    pub elastic: Vec<bool>,
    /// Per user, reservation prices of elastic items, indexed by the
    /// item's position in `elastic_items`.
    reservation: Vec<Vec<f64>>,
    elastic_slot: HashMap<usize, usize>,
    popularity: WeightedIndex<f64>,
    /// Popularity rank to item.
    ranked: Vec<usize>,
    /// First cycle not yet simulated.
    pub next_cycle: usize,
    pub baseline_revenue: f64,
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn item_name(i: usize) -> String {
    format!("i{i}")
}

pub fn user_name(u: usize) -> String {
    format!("u{u}")
}

impl MarketState {
    pub fn new(config: MarketConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, ITEMS, 0);
        let (lo, hi) = config.price_range;
        let base_price: Vec<f64> = (0..config.n_items)
            .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
            .collect();
        let n_elastic = (config.elastic_frac * config.n_items as f64).round() as usize;
        let mut order: Vec<usize> = (0..config.n_items).collect();
        order.shuffle(&mut rng);
        let mut elastic = vec![false; config.n_items];
        for &i in &order[..n_elastic] {
            elastic[i] = true;
        }
        let mut ranked: Vec<usize> = (0..config.n_items).collect();
        ranked.shuffle(&mut rng);
        let weights: Vec<f64> = (1..=config.n_items)
            .map(|r| (r as f64).powf(-config.pareto_shape))
            .collect();
        let popularity = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;

        let elastic_items: Vec<usize> = (0..config.n_items).filter(|&i| elastic[i]).collect();
        let elastic_slot = elastic_items.iter().enumerate().map(|(s, &i)| (i, s)).collect();
        let reservation = (0..config.n_users)
            .map(|u| {
                let mut rng = substream(config.seed, RESERVATION, u as u64);
                elastic_items
                    .iter()
                    .map(|&i| base_price[i] * rng.random_range(0.5..1.5))
                    .collect()
            })
            .collect();
        Ok(MarketState {
            config,
            base_price,
            elastic,
            reservation,
            elastic_slot,
            popularity,
            ranked,
            next_cycle: 0,
            baseline_revenue: 0.0,
        })
    }

    /// Reservation price of `user` for an elastic item.
    pub fn reservation(&self, user: usize, item: usize) -> Option<f64> {
        self.elastic_slot.get(&item).map(|&s| self.reservation[user][s])
    }

    pub fn price(&self, item: usize, cycle: usize) -> f64 {
        let mut rng = substream(self.config.seed, PRICES, (cycle * self.config.n_items + item) as u64);
        round_cents(self.base_price[item] * rng.random_range(0.85..=1.15))
    }

    /// The wish-list entries of one cycle, users in order.
    pub fn wishes(&self, cycle: usize) -> Vec<Wish> {
        let prices: Vec<f64> = (0..self.config.n_items).map(|i| self.price(i, cycle)).collect();
        let mut out = Vec::with_capacity(self.config.n_users * self.config.purchases_per_cycle);
        for user in 0..self.config.n_users {
            let mut rng = substream(self.config.seed, WISHES, (cycle * self.config.n_users + user) as u64);
            for _ in 0..self.config.purchases_per_cycle {
                let item = self.ranked[self.popularity.sample(&mut rng)];
                out.push(Wish {
                    user,
                    item,
                    price: prices[item],
                });
            }
        }
        out
    }

    /// The price paid for a wish under `policy`, if the customer buys.
    pub fn settle(&self, wish: &Wish, policy: DiscountPolicy, estimate: Option<f64>) -> Option<f64> {
        let list = match policy {
            DiscountPolicy::Horizontal(d) => round_cents(wish.price * (1.0 - d)),
            _ => wish.price,
        };
        let Some(r) = self.reservation(wish.user, wish.item) else {
            return Some(list);
        };
        if list <= r {
            return Some(list);
        }
        match (policy, estimate) {
            (DiscountPolicy::Personalized(cap), Some(e)) if e < list && e >= list * (1.0 - cap) && e <= r => Some(e),
            _ => None,
        }
    }

    /// Simulates `cycles` cycles from `next_cycle` without advancing the
    /// state, returning summed revenue. `estimate(user, item)` feeds the
    /// personalized policy.
    pub fn run_discounting(
        &self,
        policy: DiscountPolicy,
        cycles: usize,
        estimate: &dyn Fn(usize, usize) -> Option<f64>,
    ) -> f64 {
        let mut revenue = 0.0;
        for cycle in self.next_cycle..self.next_cycle + cycles {
            for w in self.wishes(cycle) {
                let e = match policy {
                    DiscountPolicy::Personalized(_) if self.elastic[w.item] => estimate(w.user, w.item),
                    _ => None,
                };
                if let Some(paid) = self.settle(&w, policy, e) {
                    revenue += paid;
                }
            }
        }
        revenue
    }
}

/// Runs the configured number of cycles without discounts and records every
/// purchase as a transaction priced at the amount paid.
pub fn gen_market(config: MarketConfig) -> Result<(Dataset, MarketState)> {
    let mut state = MarketState::new(config)?;
    let mut ds = Dataset::empty(PRICE_ATTR);
    let mut users = HashMap::new();
    // declare items and users in a fixed order so ids do not depend on draws
    for i in 0..state.config.n_items {
        ds.catalog.intern_item(&item_name(i));
    }
    let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); state.config.n_users];
    for cycle in 0..state.config.cycles {
        for w in state.wishes(cycle) {
            if let Some(paid) = state.settle(&w, DiscountPolicy::None, None) {
                per_user[w.user].push((w.item, paid));
                state.baseline_revenue += paid;
            }
        }
    }
    for (u, purchases) in per_user.iter().enumerate() {
        if purchases.is_empty() {
            continue;
        }
        for &(item, paid) in purchases {
            ds.push(&mut users, &user_name(u), &item_name(item), &[(PRICE_ATTR, paid)])?;
        }
    }
    ds.refresh_ranges();
    state.next_cycle = state.config.cycles;
    Ok((ds, state))
}
