//! Seeded synthetic datasets: a market simulator with elastic and
//! inelastic demand, and sparse high-dimensional points with rare
//! anomalies.
//!
//! All randomness comes from ChaCha8 substreams keyed by a domain tag and
//! an index, so a user's draws do not depend on how many users came
//! before or on thread scheduling.

mod market;
mod rare;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use market::{
    gen_market, item_name as market_item_name, user_name as market_user_name, DiscountPolicy, MarketConfig,
    MarketState, Wish,
};
pub use rare::{
    dim_name, gen_rare_event, read_labels, write_labels, RareEventConfig, RareEventData, CLASS_ITEM, RARE_ATTR,
};

pub(crate) fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}
