//! Counter-based splittable random streams.
//!
//! Every random draw in the crate comes from a stream derived purely from the
//! key (master_seed, trial, episode, step), so results are independent of
//! execution order and thread count. Generation is a SplitMix64 sequence whose
//! initial state is obtained by hashing the key words together.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford mix13).
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold one key word into an accumulated seed.
fn fold(seed: u64, word: u64) -> u64 {
    mix64(seed ^ mix64(word.wrapping_add(GAMMA)))
}

/// Derive an independent sub-seed from a seed and a tag; used to give each
/// (algorithm, trial, phase) its own stream family.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    fold(mix64(seed), tag)
}

/// Identifies one episode of one trial; per-step streams are split off it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub master_seed: u64,
    pub trial: u64,
    pub episode: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, trial: u64, episode: u64) -> Self {
        StreamKey { master_seed, trial, episode }
    }

    /// The stream for one step of this episode (step 0 is reserved for
    /// episode-level draws such as mixture-component selection).
    pub fn stream(&self, step: u64) -> RngStream {
        let mut s = mix64(self.master_seed);
        s = fold(s, self.trial);
        s = fold(s, self.episode);
        s = fold(s, step);
        RngStream { state: s }
    }
}

/// A SplitMix64 sequence; cheap to create, one per (key, step).
#[derive(Clone, Debug)]
pub struct RngStream {
    state: u64,
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1), 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Sample an index from an (approximately normalized) probability vector.
    /// Deterministic cumulative scan; falls back to the last positive entry so
    /// 1e-9-level normalization slack can never panic.
    pub fn sample_index(&mut self, probs: &[f64]) -> usize {
        let u = self.next_f64();
        let mut cum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            cum += p;
            if u < cum {
                return i;
            }
        }
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
    }
}
