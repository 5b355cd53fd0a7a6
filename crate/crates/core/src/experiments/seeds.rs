//! Per-trial seed derivation.
//!
//! Every random quantity in a trial comes from its own stream, seeded by
//! hashing `(base seed, sweep point, trial, stream)`. Streams that do not
//! depend on the mechanism (population, truths, noise) are shared by all
//! mechanisms at the same trial, so comparisons use common random numbers.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Population,
    Truths,
    Noise,
    References,
    Baselines,
    Thresholds,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Population => 1,
            Stream::Truths => 2,
            Stream::Noise => 3,
            Stream::References => 4,
            Stream::Baselines => 5,
            Stream::Thresholds => 6,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one stream of one trial.
pub fn stream_seed(base: u64, point: usize, trial: usize, stream: Stream) -> u64 {
    [point as u64, trial as u64, stream.tag()]
        .into_iter()
        .fold(splitmix64(base), |h, x| splitmix64(h ^ x))
}
