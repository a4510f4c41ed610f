//! Closed-form moments of the isolated-node count `I` and the bounds they
//! give on `P(I = 0)`.
//!
//! Writing `χ_i` for the indicator that node `i` is isolated,
//! `E[I] = n E[χ_1]` and `E[I²] = n E[χ_1] + n(n-1) E[χ_1 χ_2]`. The cross
//! moment is conditioned on the two key rings; it depends on them only
//! through `|K_1 ∪ K_2| = 2K - |K_1 ∩ K_2|`, so it is an exact sum over the
//! overlap law with at most `K + 1` terms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphgen::ModelParams;
use crate::keymath::{self, psi};

/// `1 - p(θ, α)` as `(1 - α) + α q(θ)`, free of cancellation at both ends.
pub fn one_minus_p(params: &ModelParams) -> f64 {
    let alpha = params.alpha.value();
    (1.0 - alpha) + alpha * keymath::q(params.theta).value()
}

/// `ln(1 - p)`, switching formula so neither small nor large `p` cancels.
fn ln_one_minus_p(params: &ModelParams) -> f64 {
    let p = params.p_edge().value();
    if p < 0.5 {
        (-p).ln_1p()
    } else {
        one_minus_p(params).ln()
    }
}

/// `E[χ_1] = (1 - p)^(n-1)`.
pub fn isolation_probability(params: &ModelParams) -> f64 {
    if params.n == 1 {
        return 1.0;
    }
    ((params.n - 1) as f64 * ln_one_minus_p(params)).exp()
}

/// `E[I] = n (1 - p)^(n-1)`.
pub fn first_moment(params: &ModelParams) -> f64 {
    params.n as f64 * isolation_probability(params)
}

/// The three factors of `E[I]` under `p = (log n + γ)/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstMomentExpansion {
    /// `n^(1/n)`
    pub n_root: f64,
    /// `exp(-((n-1)/n) γ)`
    pub deviation_factor: f64,
    /// `exp(-(n-1) Ψ(p))`
    pub psi_factor: f64,
}

impl FirstMomentExpansion {
    pub fn product(&self) -> f64 {
        self.n_root * self.deviation_factor * self.psi_factor
    }
}

/// Splits `E[I]` into `n^(1/n) · e^{-((n-1)/n) γ} · e^{-(n-1) Ψ(p)}`.
/// Requires `p < 1` and `|p - (log n + γ)/n| <= 1e-9`.
pub fn first_moment_expansion(params: &ModelParams, gamma_n: f64) -> Result<FirstMomentExpansion> {
    let n = params.n as f64;
    let p = params.p_edge().value();
    let implied = (n.ln() + gamma_n) / n;
    let gap = (p - implied).abs();
    if gap.is_nan() || gap > 1e-9 {
        return Err(Error::InconsistentDeviation {
            n: params.n,
            p,
            implied,
        });
    }
    let psi_p = psi(p)?;
    Ok(FirstMomentExpansion {
        n_root: n.powf(1.0 / n),
        deviation_factor: (-((n - 1.0) / n) * gamma_n).exp(),
        psi_factor: (-(n - 1.0) * psi_p).exp(),
    })
}

/// `Z_m = (1-p)² + α² (v(θ; 2K-m) - q²)`, evaluated through
/// `(1-p)² - α² q² = (1-α)(1-α+2αq)` so every term is non-negative.
fn z_for_overlap(params: &ModelParams, m: u64) -> f64 {
    let alpha = params.alpha.value();
    let theta = params.theta;
    let q = keymath::q(theta).value();
    let v = keymath::v(theta, 2 * theta.k() - m).value();
    (1.0 - alpha) * (1.0 - alpha + 2.0 * alpha * q) + alpha * alpha * v
}

/// `E[χ_1 χ_2] = Σ_m P[M=m] (1 - α[m ≥ 1]) Z_m^(n-2)`. Requires `n >= 2`.
pub fn cross_moment_exact(params: &ModelParams) -> Result<f64> {
    if params.n < 2 {
        return Err(Error::InvalidParams("cross moment needs n >= 2".into()));
    }
    let alpha = params.alpha.value();
    let exponent = (params.n - 2) as f64;
    let total = keymath::overlap_pmf(params.theta)
        .into_iter()
        .map(|(m, w)| {
            let channel = if m >= 1 { 1.0 - alpha } else { 1.0 };
            w * channel * z_for_overlap(params, m).powf(exponent)
        })
        .sum();
    Ok(total)
}

/// `E[I²] = n E[χ_1] + n(n-1) E[χ_1 χ_2]`.
pub fn second_moment(params: &ModelParams) -> f64 {
    let first = first_moment(params);
    if params.n == 1 {
        return first;
    }
    let n = params.n as f64;
    let cross = cross_moment_exact(params).expect("n >= 2");
    first + n * (n - 1.0) * cross
}

fn bounds_from(first: f64, second: f64) -> (f64, f64) {
    let lower = (1.0 - first).max(0.0);
    let upper = if first > 0.0 {
        (1.0 - first * first / second).min(1.0)
    } else {
        1.0
    };
    (lower, upper)
}

/// First- and second-moment bounds `(lower, upper)` on `P(I = 0)`.
pub fn probability_bounds(params: &ModelParams) -> (f64, f64) {
    bounds_from(first_moment(params), second_moment(params))
}

/// The `R` quantities of the second-moment analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RChain {
    pub r_n: f64,
    pub r_star: f64,
    pub r_circ: f64,
    /// `q + (1 - q) r_star`, the upper bound on `r_n`.
    pub bound_rhs: f64,
}

/// `R_n = Σ_m P[M=m] (1 - α[m ≥ 1]) (1 + Z̃_m)^(n-2)` with
/// `Z̃_m = α² (v(θ; 2K-m) - q²) / (1-p)²`, together with `R*_n`, `R°_n`
/// and the key bound. Requires `n >= 2` and `p < 1`.
pub fn r_chain(params: &ModelParams) -> Result<RChain> {
    if params.n < 2 {
        return Err(Error::InvalidParams("R chain needs n >= 2".into()));
    }
    let p = params.p_edge().value();
    if p >= 1.0 {
        return Err(Error::InvalidParams("R chain needs p < 1".into()));
    }
    let theta = params.theta;
    let alpha = params.alpha.value();
    let q = keymath::q(theta).value();
    let omp = one_minus_p(params);
    let omp2 = omp * omp;
    let ln_omp = ln_one_minus_p(params);
    let exponent = (params.n - 2) as f64;

    let r_n = keymath::overlap_pmf(theta)
        .into_iter()
        .map(|(m, w)| {
            let channel = if m >= 1 { 1.0 - alpha } else { 1.0 };
            if channel == 0.0 || w == 0.0 {
                return 0.0;
            }
            let power = if exponent == 0.0 {
                1.0
            } else {
                let z = z_for_overlap(params, m);
                if z == 0.0 {
                    0.0
                } else {
                    let v = keymath::v(theta, 2 * theta.k() - m).value();
                    let z_tilde = alpha * alpha * (v - q * q) / omp2;
                    let log_base = if z_tilde > -0.5 {
                        z_tilde.ln_1p()
                    } else {
                        z.ln() - 2.0 * ln_omp
                    };
                    (exponent * log_base).exp()
                }
            };
            w * channel * power
        })
        .sum();

    let r_star = (exponent * alpha * q * p / omp2).exp();
    let r_circ = (alpha * (params.n as f64).ln() / omp2).exp();
    Ok(RChain {
        r_n,
        r_star,
        r_circ,
        bound_rhs: q + (1.0 - q) * r_star,
    })
}

/// Every exact analytic for one model instance.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    #[serde(flatten)]
    pub params: ModelParams,
    pub q: f64,
    pub p: f64,
    pub first_moment: f64,
    /// `E[χ_1 χ_2]`; absent for `n = 1`.
    pub cross_moment: Option<f64>,
    pub second_moment: f64,
    pub ratio: f64,
    pub lower_bound_P0: f64,
    pub upper_bound_P0: f64,
    /// Absent unless `n >= 2` and `p < 1`.
    pub r_n: Option<f64>,
    pub r_star: Option<f64>,
    pub r_circ: Option<f64>,
}

impl MomentReport {
    pub fn new(params: &ModelParams) -> Self {
        let first = first_moment(params);
        let cross = (params.n >= 2).then(|| cross_moment_exact(params).expect("n >= 2"));
        let second = second_moment(params);
        let (lower, upper) = bounds_from(first, second);
        let chain = r_chain(params).ok();
        Self {
            params: *params,
            q: keymath::q(params.theta).value(),
            p: params.p_edge().value(),
            first_moment: first,
            cross_moment: cross,
            second_moment: second,
            ratio: if first > 0.0 {
                second / (first * first)
            } else {
                1.0
            },
            lower_bound_P0: lower,
            upper_bound_P0: upper,
            r_n: chain.map(|c| c.r_n),
            r_star: chain.map(|c| c.r_star),
            r_circ: chain.map(|c| c.r_circ),
        }
    }
}
