/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for one replication of one grid cell. Independent of the order
/// in which cells are run.
pub fn cell_seed(seed: u64, n_index: usize, alpha_index: usize, rep: usize) -> u64 {
    let mut h = mix(seed);
    for part in [n_index as u64, alpha_index as u64, rep as u64] {
        h = mix(h ^ part);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn distinct_over_grid() {
        let mut seen = HashSet::new();
        for n in 0..4 {
            for a in 0..9 {
                for r in 0..200 {
                    assert!(seen.insert(cell_seed(7, n, a, r)));
                }
            }
        }
        assert_ne!(cell_seed(1, 0, 0, 0), cell_seed(2, 0, 0, 0));
        assert_ne!(cell_seed(1, 0, 1, 0), cell_seed(1, 1, 0, 0));
    }
}
