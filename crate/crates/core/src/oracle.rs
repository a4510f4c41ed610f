//! Exhaustive enumeration of the law of `I` on tiny instances.
//!
//! Every key-ring assignment and every channel pattern is visited. Since key
//! rings and channels are independent, assignments are first tallied by the
//! set of key-sharing pairs they produce, and channel patterns are then
//! enumerated once per distinct set.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphgen::{rings_intersect, ModelParams};
use crate::moments;
use crate::summation::NeumaierSum;

/// Largest `C(P,K)^n · 2^C(n,2)` the enumerator accepts.
pub const ENUMERATION_LIMIT: f64 = 1e8;

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    #[serde(flatten)]
    pub params: ModelParams,
    /// `pmf_I[i] = P(I = i)` for `i` in `0..=n`.
    pub pmf_I: Vec<f64>,
    pub p_no_isolated: f64,
    pub e_I: f64,
    pub e_I2: f64,
}

fn all_rings(k: u64, p: u64) -> Vec<Vec<u64>> {
    fn rec(start: u64, p: u64, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for key in start..=(p + 1 - left) {
            cur.push(key);
            rec(key + 1, p, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, p, k, &mut Vec::new(), &mut out);
    out
}

fn binomial_f64(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Enumerates the exact law of the isolated-node count.
#[allow(non_snake_case)]
pub fn enumerate_exact(params: &ModelParams) -> Result<ExactResult> {
    let n = params.n as usize;
    let (k, p) = (params.theta.k(), params.theta.p());
    let pair_count = n * n.saturating_sub(1) / 2;
    let work = binomial_f64(p, k).powi(n as i32) * 2f64.powi(pair_count as i32);
    if work > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            work,
            limit: ENUMERATION_LIMIT,
        });
    }

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();

    // Isolated-node count of every graph on the pair list, indexed by edge mask.
    let patterns = 1usize << pair_count;
    let isolated_of: Vec<usize> = (0..patterns)
        .map(|mask| {
            let mut linked = vec![false; n];
            for (bit, &(i, j)) in pairs.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    linked[i] = true;
                    linked[j] = true;
                }
            }
            linked.iter().filter(|&&l| !l).count()
        })
        .collect();

    // Tally key-ring assignments by their key-sharing pattern.
    let rings = all_rings(k, p);
    let mut sharing_tally: BTreeMap<usize, u64> = BTreeMap::new();
    let mut digits = vec![0usize; n];
    loop {
        let mut mask = 0usize;
        for (bit, &(i, j)) in pairs.iter().enumerate() {
            if rings_intersect(&rings[digits[i]], &rings[digits[j]]) {
                mask |= 1 << bit;
            }
        }
        *sharing_tally.entry(mask).or_insert(0) += 1;

        // Mixed-radix increment.
        let mut pos = 0;
        while pos < n {
            digits[pos] += 1;
            if digits[pos] < rings.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }

    let alpha = params.alpha.value();
    let channel_weight: Vec<f64> = (0..patterns)
        .map(|mask| {
            let on = (mask as u64).count_ones() as i32;
            alpha.powi(on) * (1.0 - alpha).powi(pair_count as i32 - on)
        })
        .collect();
    let assignments = (rings.len() as f64).powi(n as i32);

    let mut pmf_acc = vec![NeumaierSum::new(); n + 1];
    for (&sharing, &count) in &sharing_tally {
        let w_keys = count as f64 / assignments;
        for (channels, &w_ch) in channel_weight.iter().enumerate() {
            if w_ch == 0.0 {
                continue;
            }
            pmf_acc[isolated_of[channels & sharing]].add(w_keys * w_ch);
        }
    }
    let pmf_I: Vec<f64> = pmf_acc.iter().map(NeumaierSum::total).collect();
    let e_I = pmf_I
        .iter()
        .enumerate()
        .map(|(i, &w)| i as f64 * w)
        .collect::<NeumaierSum>()
        .total();
    let e_I2 = pmf_I
        .iter()
        .enumerate()
        .map(|(i, &w)| (i * i) as f64 * w)
        .collect::<NeumaierSum>()
        .total();
    Ok(ExactResult {
        params: *params,
        p_no_isolated: pmf_I[0],
        pmf_I,
        e_I,
        e_I2,
    })
}

/// Enumerated and closed-form values side by side.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub e_I: f64,
    pub first_moment: f64,
    pub e_I2: f64,
    pub second_moment: f64,
    pub p_no_isolated: f64,
    pub lower_bound_P0: f64,
    pub upper_bound_P0: f64,
}

pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// Checks the closed forms against enumeration: both moments to `1e-12`
/// relative and the moment bounds around the exact `P(I = 0)`.
pub fn exact_vs_formula(params: &ModelParams) -> Result<Comparison> {
    let exact = enumerate_exact(params)?;
    let first = moments::first_moment(params);
    let second = moments::second_moment(params);
    let (lower, upper) = moments::probability_bounds(params);
    let tol = ORACLE_TOLERANCE;
    if (exact.e_I - first).abs() > tol * exact.e_I.max(1.0) {
        return Err(Error::Mismatch {
            quantity: "E[I]",
            exact: exact.e_I,
            formula: first,
        });
    }
    if (exact.e_I2 - second).abs() > tol * exact.e_I2.max(1.0) {
        return Err(Error::Mismatch {
            quantity: "E[I^2]",
            exact: exact.e_I2,
            formula: second,
        });
    }
    if exact.p_no_isolated < lower - tol {
        return Err(Error::Mismatch {
            quantity: "first-moment lower bound on P(I=0)",
            exact: exact.p_no_isolated,
            formula: lower,
        });
    }
    if exact.p_no_isolated > upper + tol {
        return Err(Error::Mismatch {
            quantity: "second-moment upper bound on P(I=0)",
            exact: exact.p_no_isolated,
            formula: upper,
        });
    }
    Ok(Comparison {
        e_I: exact.e_I,
        first_moment: first,
        e_I2: exact.e_I2,
        second_moment: second,
        p_no_isolated: exact.p_no_isolated,
        lower_bound_P0: lower,
        upper_bound_P0: upper,
    })
}

/// Parameter points of the exhaustive small grid: `n ∈ {2,3,4}`, `P <= 5`,
/// `1 <= K < P`, `α ∈ {0, 0.3, 0.7, 1}`.
pub fn small_grid() -> Vec<ModelParams> {
    let mut out = Vec::new();
    for n in 2..=4 {
        for p in 2..=5 {
            for k in 1..p {
                for &alpha in &[0.0, 0.3, 0.7, 1.0] {
                    out.push(ModelParams::from_raw(n, k, p, alpha).expect("valid grid point"));
                }
            }
        }
    }
    out
}
