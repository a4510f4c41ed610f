//! Combinatorial probabilities of the Eschenauer–Gligor key scheme.
//!
//! Each node draws a ring of `K` distinct keys uniformly from a pool of `P`
//! keys. All binomial ratios here are telescoping products of at most `K`
//! factors evaluated in log space, so pools up to `10^9` keys stay exact to
//! double precision without touching factorials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Key-ring size `K` and key-pool size `P`, with `1 <= K < P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTheta", into = "RawTheta")]
pub struct Theta {
    k: u64,
    p: u64,
}

#[derive(Serialize, Deserialize)]
struct RawTheta {
    #[serde(rename = "K")]
    k: u64,
    #[serde(rename = "P")]
    p: u64,
}

impl TryFrom<RawTheta> for Theta {
    type Error = Error;
    fn try_from(raw: RawTheta) -> Result<Self> {
        Theta::new(raw.k, raw.p)
    }
}

impl From<Theta> for RawTheta {
    fn from(t: Theta) -> Self {
        RawTheta { k: t.k, p: t.p }
    }
}

impl Theta {
    pub fn new(k: u64, p: u64) -> Result<Self> {
        if k >= 1 && p >= 2 && k < p {
            Ok(Self { k, p })
        } else {
            Err(Error::InvalidTheta { k, p })
        }
    }

    /// Key-ring size.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// Key-pool size.
    pub fn p(&self) -> u64 {
        self.p
    }

    /// True when two rings can be disjoint, i.e. `2K <= P`.
    pub fn rings_can_be_disjoint(&self) -> bool {
        2 * self.k <= self.p
    }
}

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EdgeProb(f64);

impl EdgeProb {
    pub const ZERO: EdgeProb = EdgeProb(0.0);
    pub const ONE: EdgeProb = EdgeProb(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidProbability(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for EdgeProb {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        EdgeProb::new(v)
    }
}

impl From<EdgeProb> for f64 {
    fn from(p: EdgeProb) -> f64 {
        p.0
    }
}

/// Natural log of a probability, in `[-inf, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO_PROB: LogProb = LogProb(f64::NEG_INFINITY);
    pub const CERTAIN: LogProb = LogProb(0.0);

    pub fn new(log_value: f64) -> Result<Self> {
        if log_value <= 0.0 {
            Ok(Self(log_value))
        } else {
            Err(Error::InvalidProbability(log_value.exp()))
        }
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> EdgeProb {
        EdgeProb(self.0.exp())
    }

    /// `1 - exp(ln)` without cancellation.
    pub fn complement(self) -> EdgeProb {
        EdgeProb(-self.0.exp_m1())
    }
}

/// `log v(θ; r)`: log-probability that a random key ring avoids a fixed set
/// of `r` keys.
pub fn log_v(theta: Theta, r: u64) -> LogProb {
    let (k, p) = (theta.k, theta.p);
    if r > p - k {
        return LogProb::ZERO_PROB;
    }
    let r = r as f64;
    let s: f64 = (0..k).map(|i| (-r / (p - i) as f64).ln_1p()).sum();
    LogProb(s.min(0.0))
}

/// `v(θ; r) = C(P - r, K) / C(P, K)`, zero once `r > P - K`.
pub fn v(theta: Theta, r: u64) -> EdgeProb {
    log_v(theta, r).prob()
}

/// Probability that two independent key rings are disjoint. Always equal to
/// `v(θ; K)`.
pub fn q(theta: Theta) -> EdgeProb {
    v(theta, theta.k)
}

/// Key-graph edge probability `1 - q(θ)`, accurate to a few ulps even when
/// `q(θ)` is close to one.
pub fn one_minus_q(theta: Theta) -> EdgeProb {
    if !theta.rings_can_be_disjoint() {
        return EdgeProb::ONE;
    }
    log_v(theta, theta.k).complement()
}

/// Edge probability of the intersection graph, `α (1 - q(θ))`.
pub fn p_edge(theta: Theta, alpha: EdgeProb) -> EdgeProb {
    EdgeProb((alpha.0 * one_minus_q(theta).0).clamp(0.0, 1.0))
}

/// `ln C(a, b)` as a sum of `b` log-ratios.
fn ln_binom(a: u64, b: u64) -> f64 {
    debug_assert!(b <= a);
    let b = b.min(a - b);
    (0..b).map(|i| ((a - i) as f64 / (b - i) as f64).ln()).sum()
}

/// Law of the overlap `|K_1 ∩ K_2|` of two independent rings: the pairs
/// `(m, P[M = m])` for `m` from `max(0, 2K - P)` to `K`.
pub fn overlap_pmf(theta: Theta) -> Vec<(u64, f64)> {
    let (k, p) = (theta.k, theta.p);
    let m_min = (2 * k).saturating_sub(p);
    let start = if m_min == 0 {
        q(theta).0
    } else {
        // C(K, m_min) C(P-K, K-m_min) / C(P, K) with K - m_min = P - K.
        (ln_binom(k, m_min) - ln_binom(p, k)).exp()
    };
    let mut out = Vec::with_capacity((k - m_min + 1) as usize);
    let mut prob = start;
    for m in m_min..=k {
        out.push((m, prob));
        if m < k {
            // P[M = m+1] / P[M = m] = (K-m)^2 / ((m+1)(P-2K+m+1))
            let num = ((k - m) as f64).powi(2);
            let den = (m + 1) as f64 * (p + m + 1 - 2 * k) as f64;
            prob *= num / den;
        }
    }
    out
}

/// `Ψ(x) = -x - log(1 - x)` for `0 <= x < 1`, i.e. `∫_0^x t/(1-t) dt`.
pub fn psi(x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain {
            function: "psi",
            value: x,
        });
    }
    if x <= 0.1 {
        // Power series sum_{j>=2} x^j / j avoids the cancellation in -x - log1p(-x).
        let mut term = x * x;
        let mut sum = 0.0;
        let mut j = 2.0;
        while term / j > sum * 1e-18 && term > 0.0 {
            sum += term / j;
            term *= x;
            j += 1.0;
        }
        Ok(sum)
    } else {
        Ok(-x - (-x).ln_1p())
    }
}

/// Exact rational evaluation of the same quantities, used as an oracle in
/// tests and the identity suite. Cost grows with `K` only.
pub mod exact {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    use super::Theta;

    fn ratio_product(theta: Theta, r: u64) -> BigRational {
        let (k, p) = (theta.k(), theta.p());
        if r > p - k {
            return BigRational::zero();
        }
        let mut acc = BigRational::one();
        for i in 0..k {
            acc *= BigRational::new(BigInt::from(p - r - i), BigInt::from(p - i));
        }
        acc
    }

    pub fn v(theta: Theta, r: u64) -> BigRational {
        ratio_product(theta, r)
    }

    pub fn q(theta: Theta) -> BigRational {
        ratio_product(theta, theta.k())
    }

    pub fn one_minus_q(theta: Theta) -> BigRational {
        BigRational::one() - q(theta)
    }

    pub fn binomial(n: u64, k: u64) -> BigInt {
        if k > n {
            return BigInt::zero();
        }
        let k = k.min(n - k);
        let mut acc = BigInt::one();
        for i in 0..k {
            acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
        }
        acc
    }

    pub fn overlap_pmf(theta: Theta) -> Vec<(u64, BigRational)> {
        let (k, p) = (theta.k(), theta.p());
        let total = binomial(p, k);
        ((2 * k).saturating_sub(p)..=k)
            .map(|m| {
                let count = binomial(k, m) * binomial(p - k, k - m);
                (m, BigRational::new(count, total.clone()))
            })
            .collect()
    }

    pub fn to_f64(x: &BigRational) -> f64 {
        x.to_f64().unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn th(k: u64, p: u64) -> Theta {
        Theta::new(k, p).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn theta_rejects_degenerate() {
        assert!(Theta::new(0, 5).is_err());
        assert!(Theta::new(3, 3).is_err());
        assert!(Theta::new(4, 3).is_err());
        assert!(Theta::new(1, 1).is_err());
        assert!(Theta::new(1, 2).is_ok());
    }

    #[test]
    fn edge_prob_range() {
        assert!(EdgeProb::new(-0.1).is_err());
        assert!(EdgeProb::new(1.1).is_err());
        assert!(EdgeProb::new(f64::NAN).is_err());
        assert_eq!(EdgeProb::new(0.3).unwrap().value(), 0.3);
    }

    #[test]
    fn v_examples() {
        assert_eq!(v(th(2, 5), 0).value(), 1.0);
        assert_eq!(v(th(7, 1000), 0).value(), 1.0);
        assert_eq!(v(th(2, 5), 4).value(), 0.0);
        assert!((v(th(1, 2), 1).value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn q_examples() {
        assert_eq!(q(th(3, 5)).value(), 0.0);
        assert!((q(th(1, 2)).value() - 0.5).abs() < 1e-15);
        let t = th(2, 100);
        assert_eq!(q(t).value().to_bits(), v(t, 2).value().to_bits());
    }

    #[test]
    fn one_minus_q_examples() {
        assert_eq!(one_minus_q(th(3, 5)).value(), 1.0);
        assert!((one_minus_q(th(1, 2)).value() - 0.5).abs() < 1e-15);
        let t = th(4, 1_000_000);
        let oracle = exact::to_f64(&exact::one_minus_q(t));
        assert!(rel_err(one_minus_q(t).value(), oracle) <= 1e-12);
    }

    #[test]
    fn one_minus_q_small_against_exact() {
        for &(k, p) in &[
            (1, 1_000_000_000),
            (2, 123_456_789),
            (8, 1_000_000),
            (40, 10_000),
        ] {
            let t = th(k, p);
            let oracle = exact::to_f64(&exact::one_minus_q(t));
            assert!(rel_err(one_minus_q(t).value(), oracle) <= 1e-12, "{k} {p}");
        }
    }

    #[test]
    fn p_edge_examples() {
        assert_eq!(p_edge(th(3, 10), EdgeProb::ZERO).value(), 0.0);
        assert_eq!(p_edge(th(3, 5), EdgeProb::ONE).value(), 1.0);
        let p = p_edge(th(1, 2), EdgeProb::new(0.5).unwrap()).value();
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn overlap_pmf_examples() {
        let pmf = overlap_pmf(th(1, 2));
        assert_eq!(pmf.len(), 2);
        assert_eq!(pmf[0].0, 0);
        assert!((pmf[0].1 - 0.5).abs() < 1e-15);
        assert!((pmf[1].1 - 0.5).abs() < 1e-15);

        // 2K > P: no disjoint pair, support starts at 2K - P.
        let pmf = overlap_pmf(th(3, 5));
        assert_eq!(pmf.first().unwrap().0, 1);
    }

    #[test]
    fn overlap_pmf_matches_exact_law() {
        for k in 1..=6 {
            for p in (k + 1)..=(2 * k + 30) {
                let t = th(k, p);
                let exact = exact::overlap_pmf(t);
                let approx = overlap_pmf(t);
                assert_eq!(exact.len(), approx.len());
                for ((m1, e), (m2, a)) in exact.iter().zip(&approx) {
                    assert_eq!(m1, m2);
                    let e = exact::to_f64(e);
                    assert!((e - a).abs() <= 1e-13 * e.max(1e-300), "{k} {p} {m1}");
                }
            }
        }
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.0).unwrap(), 0.0);
        // Composite Simpson's rule on t/(1-t) over [0, 0.5].
        let f = |t: f64| t / (1.0 - t);
        let m = 2000;
        let h = 0.5 / m as f64;
        let mut s = f(0.0) + f(0.5);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        let quad = s * h / 3.0;
        assert!((psi(0.5).unwrap() - quad).abs() < 1e-12);
        assert!((quad - 0.193_147_180_559_945_3).abs() < 1e-12);

        let x = 1e-4;
        assert!((psi(x).unwrap() / (x * x) - 0.5).abs() <= 1e-4);
    }

    #[test]
    fn psi_domain() {
        assert!(psi(1.0).is_err());
        assert!(psi(-1e-9).is_err());
        assert!(psi(f64::NAN).is_err());
    }

    #[test]
    fn psi_branches_agree_at_switch() {
        let below = psi(0.1).unwrap();
        let direct = -0.1 - (-0.1f64).ln_1p();
        assert!(rel_err(below, direct) < 1e-14);
    }

    #[test]
    fn v_2k_below_q_squared_grid() {
        for k in 1..=6 {
            for p in (2 * k)..=(2 * k + 50) {
                let t = th(k, p);
                let qv = q(t).value();
                if qv > 0.0 && qv < 1.0 {
                    assert!(v(t, 2 * k).value() < qv * qv, "K={k} P={p}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn v_monotone_in_r(k in 1u64..10, extra in 1u64..500, r in 0u64..600) {
            let t = th(k, k + extra);
            let a = v(t, r).value();
            let b = v(t, r + 1).value();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a);
        }

        #[test]
        fn complement_consistent(k in 1u64..10, p in 2u64..1_000_000) {
            prop_assume!(k < p);
            let t = th(k, p);
            let qv = q(t).value();
            if qv >= 1e-6 {
                prop_assert!((one_minus_q(t).value() + qv - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn overlap_pmf_is_a_law(k in 1u64..12, extra in 1u64..2000) {
            let t = th(k, k + extra);
            let pmf = overlap_pmf(t);
            let total: f64 = pmf.iter().map(|&(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            if t.rings_can_be_disjoint() {
                prop_assert_eq!(pmf[0].0, 0);
                prop_assert!((pmf[0].1 - q(t).value()).abs() <= 1e-12);
            } else {
                prop_assert!(pmf[0].0 > 0);
            }
        }

        #[test]
        fn psi_bounds(x in 1e-9f64..0.999) {
            let y = psi(x).unwrap();
            prop_assert!(y >= x * x / 2.0);
            if x <= 1e-3 {
                prop_assert!((y / (x * x) - 0.5).abs() <= x);
            }
        }
    }
}
