//! Seeded sampling of the intersection graph of a random key graph and an
//! Erdős–Rényi channel overlay.
//!
//! Randomness for one trial is a pure function of [`RngSpec`]. Key rings come
//! from a ChaCha8 stream seeded from the mixed `(master_seed, stream_index)`
//! pair. Channel bits are counter-based: the bit of pair `{i, j}` is a keyed
//! hash of the pair, so it can be evaluated lazily for the handful of pairs
//! that share a key, and the full-graph sampler and the fast isolated-node
//! counter observe exactly the same realisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keymath::{self, EdgeProb, Theta};

/// One model instance: `n` nodes, key parameters `θ` and channel
/// probability `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u64,
    #[serde(flatten)]
    pub theta: Theta,
    pub alpha: EdgeProb,
}

impl ModelParams {
    pub fn new(n: u64, theta: Theta, alpha: EdgeProb) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if n > u64::from(u32::MAX) {
            return Err(Error::InvalidParams(format!("n = {n} exceeds 2^32 - 1")));
        }
        Ok(Self { n, theta, alpha })
    }

    /// Convenience constructor from raw numbers.
    pub fn from_raw(n: u64, k: u64, p: u64, alpha: f64) -> Result<Self> {
        Self::new(n, Theta::new(k, p)?, EdgeProb::new(alpha)?)
    }

    /// Edge probability `α (1 - q(θ))`.
    pub fn p_edge(&self) -> EdgeProb {
        keymath::p_edge(self.theta, self.alpha)
    }
}

/// Address of one trial's randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const KEY_DOMAIN: u64 = 0x6b65_7972_696e_6773; // "keyrings"
const CHANNEL_DOMAIN: u64 = 0x6368_616e_6e65_6c73; // "channels"

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    fn trial_key(&self) -> u64 {
        let seed = mix64(self.master_seed.wrapping_add(GOLDEN));
        mix64(seed ^ mix64(self.stream_index.wrapping_mul(GOLDEN).wrapping_add(1)))
    }

    fn key_ring_rng(&self) -> ChaCha8Rng {
        let mut state = self.trial_key() ^ KEY_DOMAIN;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    fn channels(&self, alpha: EdgeProb) -> ChannelOracle {
        ChannelOracle {
            key: mix64(self.trial_key() ^ CHANNEL_DOMAIN),
            alpha: alpha.value(),
        }
    }
}

/// Counter-based Bernoulli(α) bit per unordered node pair.
#[derive(Debug, Clone, Copy)]
struct ChannelOracle {
    key: u64,
    alpha: f64,
}

impl ChannelOracle {
    fn is_on(&self, i: u32, j: u32) -> bool {
        if self.alpha <= 0.0 {
            return false;
        }
        if self.alpha >= 1.0 {
            return true;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let code = (u64::from(a) << 32) | u64::from(b);
        let h = mix64(self.key ^ mix64(code.wrapping_add(GOLDEN)));
        let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        u < self.alpha
    }
}

/// Symmetric, irreflexive boolean relation on `n` nodes stored as a bitset
/// over unordered pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBits {
    n: usize,
    words: Vec<u64>,
}

impl PairBits {
    pub fn new(n: usize) -> Self {
        let pairs = n * n.saturating_sub(1) / 2;
        Self {
            n,
            words: vec![0; pairs.div_ceil(64)],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let idx = self.index(i, j);
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert_ne!(i, j, "relation is irreflexive");
        let idx = self.index(i, j);
        let mask = 1u64 << (idx % 64);
        if value {
            self.words[idx / 64] |= mask;
        } else {
            self.words[idx / 64] &= !mask;
        }
    }

    /// Number of related unordered pairs.
    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

/// A key ring: `K` distinct key ids from `1..=P`, sorted ascending.
pub type KeyRing = Vec<u64>;

/// Uniform `K`-subset of `1..=P` by Floyd's algorithm, `O(K)` memory.
fn floyd_sample<R: Rng>(rng: &mut R, k: u64, p: u64) -> KeyRing {
    let mut ring: KeyRing = Vec::with_capacity(k as usize);
    for j in (p - k + 1)..=p {
        let t = rng.gen_range(1..=j);
        if ring.contains(&t) {
            ring.push(j);
        } else {
            ring.push(t);
        }
    }
    ring.sort_unstable();
    ring
}

pub fn sample_key_rings(params: &ModelParams, rng: RngSpec) -> Vec<KeyRing> {
    let mut gen = rng.key_ring_rng();
    let (k, p) = (params.theta.k(), params.theta.p());
    (0..params.n)
        .map(|_| floyd_sample(&mut gen, k, p))
        .collect()
}

pub fn sample_er_overlay(params: &ModelParams, rng: RngSpec) -> PairBits {
    let n = params.n as usize;
    let channels = rng.channels(params.alpha);
    let mut bits = PairBits::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if channels.is_on(i as u32, j as u32) {
                bits.set(i, j, true);
            }
        }
    }
    bits
}

/// True when two sorted rings share a key.
pub fn rings_intersect(a: &[u64], b: &[u64]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// One realised intersection graph.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub params: ModelParams,
    pub key_rings: Vec<KeyRing>,
    pub er_edges: PairBits,
    pub adjacency: PairBits,
    pub isolated: Vec<bool>,
    pub isolated_count: u64,
}

/// Samples the full graph. Quadratic in `n`; use [`count_isolated`] when
/// only the number of isolated nodes is needed.
pub fn intersect_and_count(params: &ModelParams, rng: RngSpec) -> GraphSample {
    let n = params.n as usize;
    let key_rings = sample_key_rings(params, rng);
    let er_edges = sample_er_overlay(params, rng);
    let mut adjacency = PairBits::new(n);
    let mut isolated = vec![true; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if er_edges.get(i, j) && rings_intersect(&key_rings[i], &key_rings[j]) {
                adjacency.set(i, j, true);
                isolated[i] = false;
                isolated[j] = false;
            }
        }
    }
    let isolated_count = isolated.iter().filter(|&&b| b).count() as u64;
    GraphSample {
        params: *params,
        key_rings,
        er_edges,
        adjacency,
        isolated,
        isolated_count,
    }
}

/// Number of isolated nodes of the trial addressed by `rng`, identical to
/// `intersect_and_count(params, rng).isolated_count`. Only pairs that share
/// a key have their channel bit evaluated.
pub fn count_isolated(params: &ModelParams, rng: RngSpec) -> u64 {
    let n = params.n as usize;
    if params.alpha.value() <= 0.0 || n < 2 {
        return n as u64;
    }
    let mut gen = rng.key_ring_rng();
    let (k, p) = (params.theta.k(), params.theta.p());
    let mut holders: Vec<(u64, u32)> = Vec::with_capacity(n * k as usize);
    for node in 0..n as u32 {
        for key in floyd_sample(&mut gen, k, p) {
            holders.push((key, node));
        }
    }
    holders.sort_unstable();

    let channels = rng.channels(params.alpha);
    let always_on = params.alpha.value() >= 1.0;
    let mut linked = vec![false; n];
    for group in holders.chunk_by(|a, b| a.0 == b.0) {
        if group.len() < 2 {
            continue;
        }
        if always_on {
            for &(_, v) in group {
                linked[v as usize] = true;
            }
            continue;
        }
        for (x, &(_, a)) in group.iter().enumerate() {
            for &(_, b) in &group[x + 1..] {
                if linked[a as usize] && linked[b as usize] {
                    continue;
                }
                if channels.is_on(a, b) {
                    linked[a as usize] = true;
                    linked[b as usize] = true;
                }
            }
        }
    }
    linked.iter().filter(|&&l| !l).count() as u64
}

/// Empirical statistics of `I` over a batch of trials.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: u64,
    pub master_seed: u64,
    pub mc_mean_I: f64,
    pub mc_var_I: f64,
    pub mc_stderr_mean_I: f64,
    pub mc_freq_I0: f64,
    pub mc_stderr_I0: f64,
    pub wilson95_low_I0: f64,
    pub wilson95_high_I0: f64,
    #[serde(skip)]
    pub counts: Vec<u64>,
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let t = trials as f64;
    let f = successes as f64 / t;
    let z2 = z * z;
    let denom = 1.0 + z2 / t;
    let center = (f + z2 / (2.0 * t)) / denom;
    let half = z / denom * (f * (1.0 - f) / t + z2 / (4.0 * t * t)).sqrt();
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

impl TrialSummary {
    /// Aggregates per-trial counts. Moments are accumulated in exact integer
    /// arithmetic, so the result does not depend on evaluation order.
    pub fn from_counts(counts: Vec<u64>, master_seed: u64) -> Self {
        let t = counts.len() as u64;
        assert!(t >= 1, "at least one trial");
        let s: u128 = counts.iter().map(|&c| u128::from(c)).sum();
        let s2: u128 = counts.iter().map(|&c| u128::from(c) * u128::from(c)).sum();
        let zeros = counts.iter().filter(|&&c| c == 0).count() as u64;
        let tf = t as f64;
        let mean = s as f64 / tf;
        let var = if t > 1 {
            let num = u128::from(t) * s2 - s * s;
            num as f64 / (tf * (tf - 1.0))
        } else {
            0.0
        };
        let freq = zeros as f64 / tf;
        let (lo, hi) = wilson_interval(zeros, t, Z95);
        Self {
            trials: t,
            master_seed,
            mc_mean_I: mean,
            mc_var_I: var,
            mc_stderr_mean_I: (var / tf).sqrt(),
            mc_freq_I0: freq,
            mc_stderr_I0: (freq * (1.0 - freq) / tf).sqrt(),
            wilson95_low_I0: lo,
            wilson95_high_I0: hi,
            counts,
        }
    }

    /// Half-width of the Wilson interval, taken as the larger side.
    pub fn wilson_half_width(&self) -> f64 {
        (self.mc_freq_I0 - self.wilson95_low_I0).max(self.wilson95_high_I0 - self.mc_freq_I0)
    }
}

/// Runs `trials` independent trials on the default thread pool. Trial `t`
/// uses stream index `t`.
pub fn run_trials(params: &ModelParams, trials: u64, master_seed: u64) -> TrialSummary {
    run_trials_with(params, trials, master_seed, 0)
}

/// Like [`run_trials`] on a dedicated pool of `workers` threads (`0` picks
/// rayon's default). The result is independent of `workers`.
pub fn run_trials_with(
    params: &ModelParams,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> TrialSummary {
    assert!(trials >= 1, "at least one trial");
    let work = || -> Vec<u64> {
        (0..trials)
            .into_par_iter()
            .map(|t| count_isolated(params, RngSpec::new(master_seed, t)))
            .collect()
    };
    let counts = if workers == 1 {
        (0..trials)
            .map(|t| count_isolated(params, RngSpec::new(master_seed, t)))
            .collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(work)
    };
    TrialSummary::from_counts(counts, master_seed)
}
