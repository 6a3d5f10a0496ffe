mod common;

use common::{random_dataset, random_rule, scan_counts};
use qarma::dataset::ValueIndex;
use qarma::support::SupportIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn indexed_counts_equal_scan_counts() {
    let mut checked = 0;
    for seed in 0..100 {
        let ds = random_dataset(seed);
        let grid = ValueIndex::build(&ds);
        let idx = SupportIndex::build(&ds, &grid);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..100 {
            let Some(rule) = random_rule(&ds, &grid, &mut rng) else {
                continue;
            };
            let c = idx.counts(&rule).unwrap();
            assert_eq!(
                (c.joint, c.antecedent, c.consequent),
                scan_counts(&ds, &rule),
                "seed {seed}"
            );
            let n = ds.num_users() as u64;
            assert_eq!(idx.support(&rule).unwrap(), c.joint as f64 / n as f64);
            if c.antecedent > 0 {
                assert_eq!(idx.confidence(&rule).unwrap(), c.joint as f64 / c.antecedent as f64);
            }
            checked += 1;
        }
    }
    assert!(checked >= 9000);
}
