//! Critical scalings `α_n (1 - q(θ_n)) = (log n + γ_n)/n`: integer
//! dimensioning of `θ_n = (K_n, P_n)` and finite-n regime diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::g17;
use crate::graphgen::ModelParams;
use crate::keymath::{one_minus_q, EdgeProb, Theta};
use crate::moments::first_moment;

/// Largest key pool considered when dimensioning.
pub const P_MAX: u64 = 1_000_000_000;

/// Largest accepted relative gap between achieved and target `1 - q`.
pub const DIMENSION_TOLERANCE: f64 = 0.1;

/// The deviation function `γ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationSpec {
    Constant {
        gamma: f64,
    },
    /// `γ_n = (c - 1) log n`, the strong scaling with constant `c`.
    CLog {
        c: f64,
    },
    /// `γ_n = sign · log log n` with `sign` either `1` or `-1`.
    LogLog {
        sign: f64,
    },
    Custom {
        table: BTreeMap<u64, f64>,
    },
}

impl DeviationSpec {
    pub fn gamma(&self, n: u64) -> Result<f64> {
        let ln = (n as f64).ln();
        match self {
            DeviationSpec::Constant { gamma } => Ok(*gamma),
            DeviationSpec::CLog { c } => Ok(strong_to_deviation(*c, n)),
            DeviationSpec::LogLog { sign } => Ok(sign.signum() * ln.ln()),
            DeviationSpec::Custom { table } => {
                table.get(&n).copied().ok_or_else(|| Error::Infeasible {
                    n,
                    reason: "custom deviation table has no entry".into(),
                })
            }
        }
    }
}

/// `γ_n = (c - 1) log n`.
pub fn strong_to_deviation(c: f64, n: u64) -> f64 {
    debug_assert!(c > 0.0 && n >= 2);
    (c - 1.0) * (n as f64).ln()
}

/// `α_n` as a function of `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSchedule {
    Constant {
        alpha: f64,
    },
    /// `α_n = min(1, scale / log n)`.
    InverseLog {
        scale: f64,
    },
    Table {
        table: BTreeMap<u64, f64>,
    },
}

impl AlphaSchedule {
    pub fn alpha(&self, n: u64) -> f64 {
        match self {
            AlphaSchedule::Constant { alpha } => *alpha,
            AlphaSchedule::InverseLog { scale } => (scale / (n as f64).ln()).min(1.0),
            AlphaSchedule::Table { table } => table.get(&n).copied().unwrap_or(f64::NAN),
        }
    }
}

/// Which coordinate of `θ` is held fixed while the other is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionRule {
    FixK(u64),
    FixP(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub n: u64,
    #[serde(flatten)]
    pub theta: Theta,
    pub alpha: EdgeProb,
    pub gamma_target: f64,
    pub gamma_achieved: f64,
    pub c_equiv: f64,
}

impl ScheduleEntry {
    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.n, self.theta, self.alpha).expect("schedule entries are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSchedule {
    pub entries: Vec<ScheduleEntry>,
}

pub const SCHEDULE_CSV_HEADER: &str = "n,K,P,alpha,gamma_target,gamma_achieved,c_equiv";

impl ScalingSchedule {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SCHEDULE_CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.n,
                e.theta.k(),
                e.theta.p(),
                g17(e.alpha.value()),
                g17(e.gamma_target),
                g17(e.gamma_achieved),
                g17(e.c_equiv)
            ));
        }
        out
    }
}

/// Index in `lo..=hi` minimising `|f(x) - target|`, for `f` monotone on the
/// range. `crossed(x)` must be false then true as `x` grows.
fn closest_monotone(
    lo: u64,
    hi: u64,
    f: impl Fn(u64) -> f64,
    crossed: impl Fn(f64) -> bool,
    target: f64,
) -> u64 {
    if !crossed(f(hi)) {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        if crossed(f(mid)) {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    if a > lo && (f(a - 1) - target).abs() <= (f(a) - target).abs() {
        a - 1
    } else {
        a
    }
}

fn dimension(rule: DimensionRule, target: f64, n: u64) -> Result<Theta> {
    match rule {
        DimensionRule::FixK(k) => {
            if k == 0 || k >= P_MAX {
                return Err(Error::InvalidParams(format!("fixed K = {k} out of range")));
            }
            // 1 - q is non-increasing in P.
            let f = |p: u64| one_minus_q(Theta::new(k, p).expect("P > K")).value();
            let p = closest_monotone(k + 1, P_MAX, f, |v| v <= target, target);
            Ok(Theta::new(k, p)?)
        }
        DimensionRule::FixP(p) => {
            if p < 2 {
                return Err(Error::InvalidParams(format!("fixed P = {p} out of range")));
            }
            // 1 - q is non-decreasing in K.
            let f = |k: u64| one_minus_q(Theta::new(k, p).expect("K < P")).value();
            let k = closest_monotone(1, p - 1, f, |v| v >= target, target);
            Theta::new(k, p).map_err(|_| Error::Infeasible {
                n,
                reason: "no admissible K".into(),
            })
        }
    }
}

/// Dimensions `θ_n` for each `n` so that `1 - q(θ_n)` is as close as
/// possible to `t_n = (log n + γ_n)/(n α_n)`, and records what was achieved.
pub fn build_schedule(
    n_values: &[u64],
    alpha_of: impl Fn(u64) -> f64,
    deviation: &DeviationSpec,
    rule: DimensionRule,
) -> Result<ScalingSchedule> {
    let mut entries = Vec::with_capacity(n_values.len());
    for &n in n_values {
        if n < 2 {
            return Err(Error::Infeasible {
                n,
                reason: "scalings need n >= 2".into(),
            });
        }
        let alpha = alpha_of(n);
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Infeasible {
                n,
                reason: format!("alpha_n = {alpha} is not in (0, 1]"),
            });
        }
        let ln_n = (n as f64).ln();
        let gamma_target = deviation.gamma(n)?;
        let target = (ln_n + gamma_target) / (n as f64 * alpha);
        if !(target > 0.0 && target <= 1.0) {
            return Err(Error::Infeasible {
                n,
                reason: format!("target 1 - q = {target} is not in (0, 1]"),
            });
        }
        let theta = dimension(rule, target, n)?;
        let achieved = one_minus_q(theta).value();
        if (achieved - target).abs() > DIMENSION_TOLERANCE * target {
            return Err(Error::Infeasible {
                n,
                reason: format!(
                    "closest key parameters K={}, P={} give 1 - q = {achieved}, target {target}",
                    theta.k(),
                    theta.p()
                ),
            });
        }
        let scaled = n as f64 * alpha * achieved;
        entries.push(ScheduleEntry {
            n,
            theta,
            alpha: EdgeProb::new(alpha)?,
            gamma_target,
            gamma_achieved: scaled - ln_n,
            c_equiv: scaled / ln_n,
        });
    }
    Ok(ScalingSchedule { entries })
}

pub const DIAGNOSTICS_LABEL: &str =
    "finite-n diagnostics — asymptotic hypotheses are not decidable from finite data";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Flat,
    Decreasing,
}

/// Slopes against `log n` smaller than this in magnitude count as flat.
pub const FLAT_SLOPE: f64 = 0.05;

impl Trend {
    fn of_slope(slope: f64) -> Self {
        if slope > FLAT_SLOPE {
            Trend::Increasing
        } else if slope < -FLAT_SLOPE {
            Trend::Decreasing
        } else {
            Trend::Flat
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub n: u64,
    pub gamma: f64,
    pub alpha: f64,
    pub alpha_log_n: f64,
    pub p: f64,
    pub e_I: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub label: &'static str,
    pub rows: Vec<RegimeRow>,
    /// Sign of the mean achieved `γ_n` over the last quartile of the schedule.
    pub gamma_tail_sign: i8,
    pub gamma_slope: f64,
    pub gamma_trend: Trend,
    pub alpha_log_n_slope: f64,
    pub alpha_log_n_trend: Trend,
    pub alpha_tail_max: f64,
    /// `α_n` reaches one in the last quartile.
    pub alpha_reaches_one: bool,
    /// `α_n log n` grows while `α_n` reaches one: neither side condition of
    /// the zero law is suggested by the data.
    pub zero_law_side_conditions_uncovered: bool,
}

/// Least-squares slope of `y` against `x`; zero for fewer than two points.
fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    sxy / sxx
}

pub fn classify_regime(schedule: &ScalingSchedule) -> Result<RegimeReport> {
    if schedule.entries.is_empty() {
        return Err(Error::InvalidParams("empty schedule".into()));
    }
    let rows: Vec<RegimeRow> = schedule
        .entries
        .iter()
        .map(|e| {
            let prm = e.params();
            let alpha = e.alpha.value();
            RegimeRow {
                n: e.n,
                gamma: e.gamma_achieved,
                alpha,
                alpha_log_n: alpha * (e.n as f64).ln(),
                p: prm.p_edge().value(),
                e_I: first_moment(&prm),
            }
        })
        .collect();
    let log_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let gammas: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    let alpha_log_n: Vec<f64> = rows.iter().map(|r| r.alpha_log_n).collect();

    let tail_start = rows.len() - rows.len().div_ceil(4);
    let tail = &rows[tail_start..];
    let tail_mean = tail.iter().map(|r| r.gamma).sum::<f64>() / tail.len() as f64;
    let alpha_tail_max = tail.iter().map(|r| r.alpha).fold(0.0, f64::max);

    let gamma_slope = ls_slope(&log_n, &gammas);
    let alpha_log_n_slope = ls_slope(&log_n, &alpha_log_n);
    let alpha_log_n_trend = Trend::of_slope(alpha_log_n_slope);
    let alpha_reaches_one = alpha_tail_max >= 1.0 - 1e-12;
    Ok(RegimeReport {
        label: DIAGNOSTICS_LABEL,
        gamma_tail_sign: if tail_mean > 0.0 {
            1
        } else if tail_mean < 0.0 {
            -1
        } else {
            0
        },
        gamma_slope,
        gamma_trend: Trend::of_slope(gamma_slope),
        alpha_log_n_slope,
        alpha_log_n_trend,
        alpha_tail_max,
        alpha_reaches_one,
        zero_law_side_conditions_uncovered: alpha_log_n_trend == Trend::Increasing
            && alpha_reaches_one,
        rows,
    })
}
