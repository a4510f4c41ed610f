//! The invariant suite run by `--mode identities`.
//!
//! Checks read the key-ring probabilities through a [`Kernel`] so tests can
//! swap in a deliberately broken implementation and watch the suite catch it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graphgen::ModelParams;
use crate::keymath::{self, psi, EdgeProb, Theta};
use crate::moments::{self, first_moment_expansion, r_chain};
use crate::oracle;

/// Key-ring probability functions under test.
#[derive(Clone, Copy)]
pub struct Kernel {
    pub q: fn(Theta) -> f64,
    pub v: fn(Theta, u64) -> f64,
    pub one_minus_q: fn(Theta) -> f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Self {
            q: |t| keymath::q(t).value(),
            v: |t, r| keymath::v(t, r).value(),
            one_minus_q: |t| keymath::one_minus_q(t).value(),
        }
    }
}

impl Kernel {
    /// `q` evaluated with one key too many.
    pub fn q_off_by_one() -> Self {
        Self {
            q: |t| keymath::v(t, t.k() + 1).value(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityConfig {
    /// Size of the randomized `(n, θ, α)` grid; `0` disables every grid.
    pub random_tuples: usize,
    pub seed: u64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            random_tuples: 10_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub checks: usize,
    /// First failing tuple, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdentityReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl IdentityReport {
    pub fn total_checks(&self) -> usize {
        self.outcomes.iter().map(|o| o.checks).sum()
    }

    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.failure.is_none())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            match &o.failure {
                None => out.push_str(&format!("PASS {} ({} checks)\n", o.name, o.checks)),
                Some(f) => out.push_str(&format!("FAIL {}: {}\n", o.name, f)),
            }
        }
        let failed = self.outcomes.iter().filter(|o| o.failure.is_some()).count();
        out.push_str(&format!(
            "{} checks in {} groups, {} failed\n",
            self.total_checks(),
            self.outcomes.len(),
            failed
        ));
        out
    }
}

struct Check {
    name: &'static str,
    checks: usize,
    failure: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: 0,
            failure: None,
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(describe());
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name,
            checks: self.checks,
            failure: self.failure,
        }
    }
}

/// A random tuple with `n ∈ [2, 10^4]`, `K ∈ [1, 8]`, `P ∈ [2K, 10^6]`,
/// `α ∈ [0, 1]`. Half the draws take `P` and `n` log-uniform so small pools
/// and small graphs are well represented.
pub fn random_tuple<R: Rng>(rng: &mut R) -> ModelParams {
    let k = rng.gen_range(1..=8u64);
    let log_uniform = rng.gen_bool(0.5);
    let (n, p) = if log_uniform {
        let n = (rng.gen_range(2f64.ln()..=1e4f64.ln())).exp().round() as u64;
        let p = (rng.gen_range(((2 * k) as f64).ln()..=1e6f64.ln()))
            .exp()
            .round() as u64;
        (n.clamp(2, 10_000), p.clamp(2 * k, 1_000_000))
    } else {
        (rng.gen_range(2..=10_000), rng.gen_range(2 * k..=1_000_000))
    };
    let alpha = match rng.gen_range(0..20) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen_range(0.0..=1.0),
    };
    ModelParams::from_raw(n, k, p, alpha).expect("grid tuple is valid")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn tuple(prm: &ModelParams) -> String {
    format!(
        "n={}, K={}, P={}, alpha={}",
        prm.n,
        prm.theta.k(),
        prm.theta.p(),
        prm.alpha.value()
    )
}

fn small_thetas() -> impl Iterator<Item = Theta> {
    (1..=6u64).flat_map(|k| ((k + 1)..=(2 * k + 50)).map(move |p| Theta::new(k, p).unwrap()))
}

pub fn run_identity_suite(config: &IdentityConfig, kernel: &Kernel) -> IdentityReport {
    if config.random_tuples == 0 {
        return IdentityReport::default();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tuples: Vec<ModelParams> = (0..config.random_tuples)
        .map(|_| random_tuple(&mut rng))
        .collect();
    let thetas: Vec<Theta> = small_thetas()
        .chain(tuples.iter().map(|t| t.theta))
        .collect();
    let mut outcomes = Vec::new();

    let mut c = Check::new("q=v(θ,K)");
    for &t in &thetas {
        let (qv, vv) = ((kernel.q)(t), (kernel.v)(t, t.k()));
        c.record(qv.to_bits() == vv.to_bits(), || {
            format!("K={}, P={}: q={qv}, v={vv}", t.k(), t.p())
        });
    }
    outcomes.push(c.finish());

    let mut c = Check::new("v(θ,r) non-increasing in r and within [0,1]");
    for t in small_thetas() {
        let mut prev = 1.0;
        for r in 0..=t.p() {
            let cur = (kernel.v)(t, r);
            c.record((0.0..=1.0).contains(&cur) && cur <= prev, || {
                format!("K={}, P={}, r={r}: v={cur}, previous {prev}", t.k(), t.p())
            });
            prev = cur;
        }
    }
    outcomes.push(c.finish());

    let mut c = Check::new("v(θ,2K)<q(θ)^2 when 0<q<1");
    for &t in thetas.iter().filter(|t| t.rings_can_be_disjoint()) {
        let qv = (kernel.q)(t);
        if qv > 0.0 && qv < 1.0 {
            let v2 = (kernel.v)(t, 2 * t.k());
            c.record(v2 < qv * qv, || {
                format!("K={}, P={}: v(2K)={v2}, q^2={}", t.k(), t.p(), qv * qv)
            });
        }
    }
    outcomes.push(c.finish());

    let mut c = Check::new("(1-q)+q=1 when q>=1e-6");
    for &t in &thetas {
        let qv = (kernel.q)(t);
        if qv >= 1e-6 {
            let s = (kernel.one_minus_q)(t) + qv;
            c.record((s - 1.0).abs() <= 1e-12, || {
                format!("K={}, P={}: sum={s}", t.k(), t.p())
            });
        }
    }
    outcomes.push(c.finish());

    let mut c = Check::new("overlap law sums to 1 with mass q at 0");
    for &t in &thetas {
        let pmf = keymath::overlap_pmf(t);
        let total: f64 = pmf.iter().map(|&(_, w)| w).sum();
        let zero_ok = if t.rings_can_be_disjoint() {
            pmf[0].0 == 0 && (pmf[0].1 - (kernel.q)(t)).abs() <= 1e-12
        } else {
            pmf[0].0 > 0
        };
        c.record((total - 1.0).abs() <= 1e-12 && zero_ok, || {
            format!(
                "K={}, P={}: total={total}, first={:?}",
                t.k(),
                t.p(),
                pmf[0]
            )
        });
    }
    outcomes.push(c.finish());

    let mut c = Check::new("Ψ(x)/x² within x of 1/2 and Ψ(x)>=x²/2");
    for x in [1e-3, 1e-4, 1e-5, 1e-6] {
        let y = psi(x).expect("x in [0,1)");
        c.record((y / (x * x) - 0.5).abs() <= x && y >= x * x / 2.0, || {
            format!("x={x}: Ψ={y}")
        });
    }
    outcomes.push(c.finish());

    let mut c = Check::new("(1-p)²-α²q²=(1-α)(1-α+2αq)");
    for prm in &tuples {
        let alpha = prm.alpha.value();
        let qv = (kernel.q)(prm.theta);
        let omp = 1.0 - alpha * (kernel.one_minus_q)(prm.theta);
        let lhs = omp * omp - alpha * alpha * qv * qv;
        let rhs = (1.0 - alpha) * (1.0 - alpha + 2.0 * alpha * qv);
        c.record(close(lhs, rhs, 1e-12), || {
            format!("{}: {lhs} vs {rhs}", tuple(prm))
        });
    }
    outcomes.push(c.finish());

    let mut key_bound = Check::new("R_n<=q+(1-q)R*_n");
    let mut ratio = Check::new("E[χ1χ2]/E[χ1]²=(1-p)^-2 R_n");
    let mut star_circ = Check::new("R*_n<=R°_n when γ_n<=0");
    for prm in &tuples {
        let Ok(chain) = r_chain(prm) else { continue };
        key_bound.record(
            chain.r_n <= chain.bound_rhs + 1e-12 * chain.bound_rhs.max(1.0),
            || {
                format!(
                    "{}: R_n={}, bound={}",
                    tuple(prm),
                    chain.r_n,
                    chain.bound_rhs
                )
            },
        );
        let n = prm.n as f64;
        if n * prm.p_edge().value() <= n.ln() {
            star_circ.record(chain.r_star <= chain.r_circ * (1.0 + 1e-12), || {
                format!("{}: R*={}, R°={}", tuple(prm), chain.r_star, chain.r_circ)
            });
        }
        let e_chi = moments::isolation_probability(prm);
        if e_chi * e_chi > 1e-200 {
            let lhs = moments::cross_moment_exact(prm).expect("n >= 2") / (e_chi * e_chi);
            let rhs = chain.r_n / moments::one_minus_p(prm).powi(2);
            ratio.record(close(lhs, rhs, 1e-9), || {
                format!("{}: {lhs} vs {rhs}", tuple(prm))
            });
        }
    }
    outcomes.push(key_bound.finish());
    outcomes.push(ratio.finish());
    outcomes.push(star_circ.finish());

    let mut c = Check::new("moment consistency");
    for prm in &tuples {
        let r = moments::MomentReport::new(prm);
        let ok = r.second_moment >= r.first_moment * (1.0 - 1e-12)
            && (r.first_moment == 0.0 || r.ratio >= 1.0 - 1e-12)
            && r.lower_bound_P0 <= r.upper_bound_P0 + 1e-12;
        c.record(ok, || {
            format!(
                "{}: E[I]={}, E[I²]={}, bounds=({}, {})",
                tuple(prm),
                r.first_moment,
                r.second_moment,
                r.lower_bound_P0,
                r.upper_bound_P0
            )
        });
    }
    outcomes.push(c.finish());

    let mut c = Check::new("E[I] non-increasing in α");
    for prm in tuples.iter().take(1000) {
        let higher = (prm.alpha.value() + 0.1).min(1.0);
        let other = ModelParams::new(prm.n, prm.theta, EdgeProb::new(higher).unwrap()).unwrap();
        let (a, b) = (moments::first_moment(prm), moments::first_moment(&other));
        c.record(b <= a, || {
            format!("{}: {a} then {b} at alpha={higher}", tuple(prm))
        });
    }
    outcomes.push(c.finish());

    let mut c = Check::new("E[I] three-factor expansion");
    for prm in tuples.iter().filter(|t| t.p_edge().value() < 1.0).take(100) {
        let n = prm.n as f64;
        let gamma = n * prm.p_edge().value() - n.ln();
        let product = first_moment_expansion(prm, gamma).map(|e| e.product());
        let direct = moments::first_moment(prm);
        c.record(
            matches!(product, Ok(x) if (x - direct).abs() <= 1e-9 * direct.abs().max(f64::MIN_POSITIVE)),
            || format!("{}: product {product:?}, E[I]={direct}", tuple(prm)),
        );
    }
    outcomes.push(c.finish());

    let mut c = Check::new("enumeration oracle equals closed forms");
    for prm in oracle::small_grid() {
        let res = oracle::exact_vs_formula(&prm);
        c.record(res.is_ok(), || {
            format!("{}: {}", tuple(&prm), res.unwrap_err())
        });
    }
    outcomes.push(c.finish());

    IdentityReport { outcomes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let report = run_identity_suite(
            &IdentityConfig {
                random_tuples: 2000,
                seed: 1,
            },
            &Kernel::default(),
        );
        assert!(report.passed(), "{}", report.render());
        assert!(report.total_checks() > 2000);
    }

    #[test]
    fn fault_is_caught_by_name() {
        let report = run_identity_suite(
            &IdentityConfig {
                random_tuples: 100,
                seed: 1,
            },
            &Kernel::q_off_by_one(),
        );
        assert!(!report.passed());
        let first_fail = report
            .outcomes
            .iter()
            .find(|o| o.failure.is_some())
            .unwrap();
        assert_eq!(first_fail.name, "q=v(θ,K)");
        assert!(report.render().contains("FAIL q=v(θ,K)"));
    }

    #[test]
    fn empty_grid() {
        let report = run_identity_suite(
            &IdentityConfig {
                random_tuples: 0,
                seed: 1,
            },
            &Kernel::default(),
        );
        assert_eq!(report.total_checks(), 0);
        assert!(report.passed());
    }

    #[test]
    fn random_tuples_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let t = random_tuple(&mut rng);
            let k = t.theta.k();
            assert!((2..=10_000).contains(&t.n));
            assert!((1..=8).contains(&k));
            assert!((2 * k..=1_000_000).contains(&t.theta.p()));
        }
    }
}
