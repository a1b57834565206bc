//! Deterministic seed derivation for experiment cells.

/// One step of the SplitMix64 output function.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one (format, shot count, repeat) cell.
///
/// Each coordinate is folded in through its own mixing round, so cells can
/// be computed in any order and neighbouring coordinates do not collide.
pub fn cell_seed(base_seed: u64, format_index: usize, shot_count: usize, repeat_index: usize) -> u64 {
    [format_index as u64, shot_count as u64, repeat_index as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |acc, x| splitmix64(acc ^ splitmix64(x)))
}
