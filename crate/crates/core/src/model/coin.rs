//! Counter-based coin source.
//!
//! The `k`-th flip of process `p` is a pure function of `(master_seed, p, k)`,
//! so the value a process sees never depends on how the adversary interleaves
//! steps. Each flip owns a private window of the ChaCha keystream: stream `p`,
//! words `[64k, 64k + 64)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ids::{Bit, ProcessId};
use super::step::CoinBias;

/// Maximum number of rejection rounds for a `1/m` flip before it falls back to 0.
pub const MAX_REJECTION_ROUNDS: u32 = 32;

const WORDS_PER_FLIP: u128 = 64;

/// Anything that can answer "what is the `k`-th flip of process `p`".
pub trait CoinOracle {
    fn flip(&mut self, p: ProcessId, k: u64, bias: CoinBias) -> Bit;
}

/// The deterministic seeded coin source used for simulation runs.
#[derive(Clone, Debug)]
pub struct CoinSource {
    master_seed: u64,
    streams: Vec<Option<ChaCha8Rng>>,
}

impl CoinSource {
    pub fn new(master_seed: u64) -> Self {
        CoinSource {
            master_seed,
            streams: Vec::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn stream(&mut self, p: ProcessId, k: u64) -> &mut ChaCha8Rng {
        let i = p.index();
        if self.streams.len() <= i {
            self.streams.resize(i + 1, None);
        }
        let seed = self.master_seed;
        let rng = self.streams[i].get_or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        });
        rng.set_word_pos(u128::from(k) * WORDS_PER_FLIP);
        rng
    }
}

impl CoinOracle for CoinSource {
    fn flip(&mut self, p: ProcessId, k: u64, bias: CoinBias) -> Bit {
        let rng = self.stream(p, k);
        match bias {
            CoinBias::Fair => Bit::from(rng.next_u64() & 1 == 1),
            CoinBias::OneIn(m) => one_in(m, || rng.next_u64()),
        }
    }
}

/// Returns 1 with probability `1/m` by rejection sampling over `ceil(log2 m)`
/// fair bits per round, giving up after [`MAX_REJECTION_ROUNDS`] rounds.
pub fn one_in(m: u64, mut draw: impl FnMut() -> u64) -> Bit {
    if m <= 1 {
        return Bit::One;
    }
    let bits = 64 - (m - 1).leading_zeros();
    let mask = if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    };
    for _ in 0..MAX_REJECTION_ROUNDS {
        let x = draw() & mask;
        if x < m {
            return Bit::from(x == 0);
        }
    }
    Bit::Zero
}

/// Returns a fixed value for every flip; used by the explorer to branch on outcomes.
#[derive(Clone, Copy, Debug)]
pub struct ForcedCoin(pub Bit);

impl CoinOracle for ForcedCoin {
    fn flip(&mut self, _: ProcessId, _: u64, _: CoinBias) -> Bit {
        self.0
    }
}

/// Wraps another oracle and complements every outcome.
#[derive(Clone, Debug)]
pub struct InvertedCoin<C>(pub C);

impl<C: CoinOracle> CoinOracle for InvertedCoin<C> {
    fn flip(&mut self, p: ProcessId, k: u64, bias: CoinBias) -> Bit {
        !self.0.flip(p, k, bias)
    }
}

/// Explicit per-process bit lists; missing entries read as 0.
#[derive(Clone, Debug, Default)]
pub struct FixedCoins {
    pub bits: Vec<Vec<Bit>>,
}

impl CoinOracle for FixedCoins {
    fn flip(&mut self, p: ProcessId, k: u64, _: CoinBias) -> Bit {
        self.bits
            .get(p.index())
            .and_then(|v| v.get(k as usize))
            .copied()
            .unwrap_or(Bit::Zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_is_pure_function_of_seed_process_and_index() {
        let mut a = CoinSource::new(99);
        let mut b = CoinSource::new(99);
        let forward: Vec<Bit> = (0..50)
            .map(|k| a.flip(ProcessId(2), k, CoinBias::Fair))
            .collect();
        // Query in a different order, interleaved with another process.
        let mut backward = vec![Bit::Zero; 50];
        for k in (0..50).rev() {
            b.flip(ProcessId(0), k, CoinBias::Fair);
            backward[k as usize] = b.flip(ProcessId(2), k, CoinBias::Fair);
        }
        assert_eq!(forward, backward);
    }

    #[test]
    fn different_processes_get_different_streams() {
        let mut c = CoinSource::new(1);
        let p0: Vec<Bit> = (0..64)
            .map(|k| c.flip(ProcessId(0), k, CoinBias::Fair))
            .collect();
        let p1: Vec<Bit> = (0..64)
            .map(|k| c.flip(ProcessId(1), k, CoinBias::Fair))
            .collect();
        assert_ne!(p0, p1);
    }

    #[test]
    fn one_in_one_and_two() {
        assert_eq!(one_in(1, || 0), Bit::One);
        assert_eq!(one_in(2, || 0), Bit::One);
        assert_eq!(one_in(2, || 1), Bit::Zero);
    }

    #[test]
    fn one_in_four_needs_two_one_bits_pattern() {
        // 1/(2n) with n = 2 is exactly "two fair bits both select the zero slot".
        for x in 0..4u64 {
            assert_eq!(one_in(4, || x), Bit::from(x == 0));
        }
    }

    #[test]
    fn one_in_six_rejects_out_of_range_draws() {
        let mut draws = [7u64, 6, 0].into_iter();
        assert_eq!(one_in(6, || draws.next().unwrap()), Bit::One);
        assert_eq!(one_in(6, || 7), Bit::Zero);
    }

    #[test]
    fn fair_coin_frequency_is_balanced() {
        let mut c = CoinSource::new(5);
        let ones = (0..20_000)
            .filter(|&k| c.flip(ProcessId(0), k, CoinBias::Fair).is_one())
            .count();
        let freq = ones as f64 / 20_000.0;
        assert!((freq - 0.5).abs() < 0.015, "freq {freq}");
    }
}
