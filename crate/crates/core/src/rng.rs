//! Counter-based seed derivation.

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent child seed for `(master, counter)`; stable as counts grow.
pub fn split(master: u64, counter: u64) -> u64 {
    mix(mix(master) ^ counter.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Child seed for a named stream within a trial.
pub fn stream(master: u64, counter: u64, tag: &str) -> u64 {
    let h = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    split(split(master, counter), h)
}
