//! Counter-based random streams.
//!
//! Every random quantity in a run is a pure function of
//! `(master seed, stream label, indices, counter)`. The generator is
//! Philox4x32-10: a 64-bit key selects the stream family, the upper half of
//! the 128-bit counter selects the substream (agent, time step, ...) and the
//! lower half walks through the substream. Nothing is shared between
//! substreams, so replications and agents can be evaluated in any order or
//! in parallel without changing a single draw.

use rand_core::RngCore;
use rand_distr::{Distribution, Hypergeometric};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used only to turn stream labels into 64-bit words.
fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Stable 64-bit seed derived from a master seed and a chain of labels and
/// indices. Adding a new label never perturbs the seeds of existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(master_seed: u64) -> Self {
        SeedKey(mix64(master_seed ^ GOLDEN))
    }

    pub fn label(self, label: &str) -> Self {
        SeedKey(mix64(self.0.rotate_left(17) ^ fnv1a(label)).wrapping_add(GOLDEN))
    }

    pub fn index(self, index: u64) -> Self {
        SeedKey(mix64(self.0 ^ mix64(index.wrapping_add(GOLDEN))))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    fn philox_key(self) -> [u32; 2] {
        [self.0 as u32, (self.0 >> 32) as u32]
    }

    /// Sequential stream `substream` of this key.
    pub fn stream(self, substream: u64) -> PhiloxStream {
        PhiloxStream::new(self, substream)
    }

    /// Random 64-bit word at `(substream, position)`, without any state.
    #[inline]
    pub fn word_at(self, substream: u64, position: u64) -> u64 {
        let out = philox4x32_10(
            [position as u32, (position >> 32) as u32, substream as u32, (substream >> 32) as u32],
            self.philox_key(),
        );
        u64::from(out[0]) | (u64::from(out[1]) << 32)
    }

    /// Uniform draw in `[0, 1)` at `(substream, position)`.
    #[inline]
    pub fn uniform_at(self, substream: u64, position: u64) -> f64 {
        unit_f64(self.word_at(substream, position))
    }
}

#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A sequential Philox substream, usable anywhere a `rand_core::RngCore` is.
#[derive(Debug, Clone)]
pub struct PhiloxStream {
    key: [u32; 2],
    substream: u64,
    block: u64,
    buf: [u32; 4],
    used: usize,
}

impl PhiloxStream {
    pub fn new(key: SeedKey, substream: u64) -> Self {
        PhiloxStream { key: key.philox_key(), substream, block: 0, buf: [0; 4], used: 4 }
    }

    fn refill(&mut self) {
        self.buf = philox4x32_10(
            [
                self.block as u32,
                (self.block >> 32) as u32,
                self.substream as u32,
                (self.substream >> 32) as u32,
            ],
            self.key,
        );
        self.block = self.block.wrapping_add(1);
        self.used = 0;
    }

    pub fn uniform(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Unbiased integer in `0..n` (Lemire's multiply-and-reject).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for PhiloxStream {
    fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let word = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&word[..chunk.len()]);
        }
    }
}

/// Draws `m` distinct indices uniformly from `0..n` with a partial
/// Fisher-Yates shuffle. Swaps are tracked sparsely when `m` is small
/// relative to `n`; both branches consume the same draws and return the
/// same subset.
pub fn sample_without_replacement(rng: &mut PhiloxStream, n: usize, m: usize) -> Vec<usize> {
    assert!(m <= n, "cannot draw {m} distinct indices from {n}");
    let mut out = Vec::with_capacity(m);
    if m.saturating_mul(16) >= n {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + rng.below((n - i) as u64) as usize;
            idx.swap(i, j);
            out.push(idx[i]);
        }
    } else {
        let mut displaced = std::collections::HashMap::with_capacity(2 * m);
        for i in 0..m {
            let j = i + rng.below((n - i) as u64) as usize;
            let at_j = *displaced.get(&j).unwrap_or(&j);
            let at_i = *displaced.get(&i).unwrap_or(&i);
            displaced.insert(j, at_i);
            out.push(at_j);
        }
    }
    out
}

/// Below this subset size, members are drawn one at a time.
const SEQUENTIAL_DRAWS: u64 = 24;

/// How many members of each disjoint group fall into a uniform `m`-subset
/// of `n` items drawn without replacement: a multivariate hypergeometric
/// draw, built from one conditional univariate draw per group (or from `m`
/// sequential draws when `m` is small). Items outside all groups fill the
/// rest of the subset.
pub fn subset_counts(rng: &mut PhiloxStream, n: u64, groups: &[u64], m: u64) -> Vec<u64> {
    assert!(m <= n && groups.iter().sum::<u64>() <= n, "groups or subset larger than the population");
    if m < SEQUENTIAL_DRAWS && m < n {
        let mut left: Vec<u64> = groups.to_vec();
        let mut counts = vec![0; groups.len()];
        for i in 0..m {
            let mut u = rng.below(n - i);
            if let Some(g) = left.iter().position(|&l| {
                let hit = u < l;
                u = u.wrapping_sub(l);
                hit
            }) {
                left[g] -= 1;
                counts[g] += 1;
            }
        }
        return counts;
    }
    let (mut left, mut draws) = (n, m);
    groups
        .iter()
        .map(|&g| {
            let x = if draws == 0 || g == 0 {
                0
            } else if draws == left {
                g
            } else {
                Hypergeometric::new(left, g, draws).expect("valid hypergeometric parameters").sample(rng)
            };
            left -= g;
            draws -= x;
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::RngCore;
    use proptest::prelude::*;

    // Known-answer vectors published with the Random123 reference implementation.
    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32_10([0; 4], [0; 2]), [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10([0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344], [0xa409_3822, 0x299f_31d0]),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn stream_matches_random_access() {
        let key = SeedKey::new(7).label("x").index(3);
        let mut s = key.stream(11);
        for pos in 0..5 {
            assert_eq!(s.next_u64(), key.word_at(11, pos));
            s.next_u64();
        }
    }

    #[test]
    fn labels_separate_streams() {
        let a = SeedKey::new(1).label("influence");
        let b = SeedKey::new(1).label("features");
        assert_ne!(a, b);
        assert_ne!(a.index(0), a.index(1));
        assert_eq!(SeedKey::new(1).label("influence"), a);
    }

    #[test]
    fn uniform_mean_and_range() {
        let key = SeedKey::new(42);
        let n = 200_000;
        let mut sum = 0.0;
        for i in 0..n {
            let u = key.uniform_at(0, i);
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        // sd of the mean is sqrt(1/12/n) ~ 6.5e-4
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut s = SeedKey::new(5).stream(0);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[s.below(7) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    fn check_subset_law(m: usize) {
        // same law as counting group members in an explicit uniform subset
        let (n, groups) = (60usize, [12u64, 20]);
        let key = SeedKey::new(11);
        let draws = 40_000;
        let mut fast = [0.0f64; 2];
        let mut slow = [0.0f64; 2];
        let mut fast_sq = 0.0;
        let mut slow_sq = 0.0;
        for i in 0..draws {
            let c = subset_counts(&mut key.stream(2 * i), n as u64, &groups, m as u64);
            let s = sample_without_replacement(&mut key.stream(2 * i + 1), n, m);
            let a = s.iter().filter(|&&j| j < 12).count() as f64;
            let b = s.iter().filter(|&&j| (12..32).contains(&j)).count() as f64;
            fast[0] += c[0] as f64;
            fast[1] += c[1] as f64;
            slow[0] += a;
            slow[1] += b;
            fast_sq += (c[0] as f64).powi(2);
            slow_sq += a * a;
        }
        let d = draws as f64;
        // hypergeometric mean m K / N
        for (g, (f, s)) in groups.iter().zip(fast.iter().zip(&slow)) {
            let mean = m as f64 * *g as f64 / n as f64;
            assert!((f / d - mean).abs() < 0.03 && (s / d - mean).abs() < 0.03);
        }
        let var = |sq: f64, sum: f64| sq / d - (sum / d).powi(2);
        let exact = m as f64 * 0.2 * 0.8 * (60.0 - m as f64) / 59.0;
        assert!((var(fast_sq, fast[0]) - exact).abs() < 0.06, "m = {m}");
        assert!((var(slow_sq, slow[0]) - exact).abs() < 0.06, "m = {m}");
    }

    #[test]
    fn subset_counts_match_explicit_subsets() {
        check_subset_law(9);
        check_subset_law(30);
    }

    #[test]
    fn census_counts_are_exact() {
        let mut rng = SeedKey::new(1).stream(0);
        assert_eq!(subset_counts(&mut rng, 50, &[10, 7], 50), vec![10, 7]);
        assert_eq!(subset_counts(&mut rng, 50, &[10, 7], 0), vec![0, 0]);
    }

    proptest! {
        #[test]
        fn subset_counts_are_feasible(seed in any::<u64>(), n in 1u64..500, a in 0.0f64..=1.0, b in 0.0f64..=1.0, f in 0.0f64..=1.0) {
            let g1 = (n as f64 * a * 0.5) as u64;
            let g2 = (n as f64 * b * 0.5) as u64;
            let m = (n as f64 * f) as u64;
            let c = subset_counts(&mut SeedKey::new(seed).stream(0), n, &[g1, g2], m);
            prop_assert!(c[0] <= g1 && c[1] <= g2 && c[0] + c[1] <= m);
            prop_assert!(m - c[0] - c[1] <= n - g1 - g2);
        }

        #[test]
        fn sample_is_distinct_and_in_range(seed in any::<u64>(), n in 1usize..400, frac in 0.0f64..=1.0) {
            let m = ((n as f64) * frac) as usize;
            let mut rng = SeedKey::new(seed).stream(0);
            let s = sample_without_replacement(&mut rng, n, m);
            prop_assert_eq!(s.len(), m);
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), m);
            prop_assert!(s.iter().all(|&i| i < n));
        }

        #[test]
        fn sparse_and_dense_shuffles_agree(seed in any::<u64>(), n in 20usize..2000, m in 0usize..20) {
            let m = m.min(n);
            let key = SeedKey::new(seed);
            let fast = sample_without_replacement(&mut key.stream(0), n, m);
            // dense reference
            let mut rng = key.stream(0);
            let mut idx: Vec<usize> = (0..n).collect();
            let mut dense = Vec::new();
            for i in 0..m {
                let j = i + rng.below((n - i) as u64) as usize;
                idx.swap(i, j);
                dense.push(idx[i]);
            }
            prop_assert_eq!(fast, dense);
        }
    }
}
