//! Seed derivation for replications, sweep cells and rollout batches.
//!
//! A global seed `s` and a task index `i` map to an independent stream seed
//! via SplitMix64 over `s XOR (i+1)·φ64`. The rule is part of the public
//! reproducibility contract: logs and CSV outputs produced with the same
//! global seed are stable across versions and thread schedules.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for task `index` under global seed `global`.
pub fn replication_seed(global: u64, index: u64) -> u64 {
    splitmix64(global ^ (index.wrapping_add(1)).wrapping_mul(GOLDEN_GAMMA))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_indices_give_distinct_seeds() {
        let seeds: Vec<u64> = (0..100).map(|i| replication_seed(42, i)).collect();
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), seeds.len());
    }

    #[test]
    fn rule_is_frozen() {
        // Pinned values: changing them breaks the reproducibility contract.
        assert_eq!(replication_seed(0, 0), 7960286522194355700);
        assert_eq!(replication_seed(42, 7), 14737624668983934838);
    }
}
