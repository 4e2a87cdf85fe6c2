//! Fast invariant suite behind `qkin check`.
//!
//! The checks take their q-exponential and master-equation right-hand side
//! through [`Probes`], so a deliberately broken implementation can be fed in
//! and shown to fail.

use std::fmt::Write as _;
use std::time::Instant;

use crate::dynamics::{rhs_raw, step_with, Reduction};
use crate::entropy::{entropy_rate_symmetric, rate_chain_from, rate_weighted_from};
use crate::gas::{moments, random_state, GasState, LevelGrid, Statistics};
use crate::kernel::{build_kernel, CollisionKernel, RateSpec};
use crate::qmath::{exp_q_unchecked, ln_q_unchecked, q_product, QIndex};

pub type ExpQFn = fn(f64, QIndex<f64>) -> f64;
/// `(degeneracies, sign, occupations, kernel) -> dn/dt`
pub type RhsFn = fn(&[f64], f64, &[f64], &CollisionKernel<f64>) -> Vec<f64>;

#[derive(Clone, Copy)]
pub struct Probes {
    pub exp_q: ExpQFn,
    pub rhs: RhsFn,
}

fn library_rhs(g: &[f64], sign: f64, occ: &[f64], kernel: &CollisionKernel<f64>) -> Vec<f64> {
    rhs_raw(g, sign, occ, kernel, Reduction::Canonical)
}

impl Default for Probes {
    fn default() -> Self {
        Self {
            exp_q: exp_q_unchecked,
            rhs: library_rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const Q_VALUES: [f64; 6] = [0.2, 0.5, 0.8, 1.2, 1.5, 1.8];

pub fn run_checks() -> Vec<CheckResult> {
    run_checks_with(Probes::default())
}

pub fn run_checks_with(probes: Probes) -> Vec<CheckResult> {
    vec![
        inverse_pair(probes),
        reciprocal_duality(probes),
        pseudo_additivity(),
        product_homomorphism(),
        rate_agreement(probes),
        conservation(probes),
    ]
}

fn result(name: &'static str, worst: f64, limit: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= limit,
        detail: format!("worst {worst:.3e} (limit {limit:.0e})"),
    }
}

fn inverse_pair(p: Probes) -> CheckResult {
    let mut worst = 0.0f64;
    for q in Q_VALUES {
        let q = QIndex::new(q).unwrap();
        for x in [0.05, 0.3, 1.0, 2.5, 9.0] {
            let back = (p.exp_q)(ln_q_unchecked(x, q), q);
            let err = ((back - x) / x).abs();
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
    }
    result("exp_q inverts ln_q", worst, 1e-13)
}

fn reciprocal_duality(p: Probes) -> CheckResult {
    let mut worst = 0.0f64;
    for q in Q_VALUES {
        let q = QIndex::new(q).unwrap();
        for x in [-0.9, -0.3, 0.2, 0.7] {
            let prod = (p.exp_q)(x, q) * (p.exp_q)(-x, q.dual());
            let err = (prod - 1.0).abs();
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
    }
    result("exp_q(x) exp_q*(-x) = 1", worst, 1e-13)
}

fn pseudo_additivity() -> CheckResult {
    let mut worst = 0.0f64;
    for q in Q_VALUES {
        let q = QIndex::new(q).unwrap();
        for (x, y) in [(0.2, 3.0), (1.5, 1.5), (7.0, 0.4)] {
            let (lx, ly) = (ln_q_unchecked(x, q), ln_q_unchecked(y, q));
            let lhs = ln_q_unchecked(x * y, q);
            let rhs = lx + ly + (1.0 - q.value()) * lx * ly;
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
    }
    result("ln_q pseudo-additivity", worst, 1e-13)
}

fn product_homomorphism() -> CheckResult {
    let mut worst = 0.0f64;
    for q in Q_VALUES {
        let q = QIndex::new(q).unwrap();
        for (x, y) in [(0.6, 3.0), (1.5, 1.5), (7.0, 0.9)] {
            let Ok(prod) = q_product(x, y, q) else {
                worst = f64::INFINITY;
                continue;
            };
            let lhs = ln_q_unchecked(prod, q);
            let rhs = ln_q_unchecked(x, q) + ln_q_unchecked(y, q);
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    result("ln_q maps q-product to sum", worst, 1e-13)
}

fn seeded_cases() -> Vec<(GasState<f64>, CollisionKernel<f64>)> {
    let mut out = Vec::new();
    for (stats, g, n, seed) in [(Statistics::Fermi, 2.0, 6.0, 11u64), (Statistics::Bose, 1.0, 5.0, 12)] {
        let grid = LevelGrid::uniform(8, 1.0, g).unwrap();
        let state = random_state(&grid, n, seed, stats).unwrap();
        let kernel = build_kernel(grid.lattice(), RateSpec::Random { seed, min: 0.2, max: 1.0 }).unwrap();
        out.push((state, kernel));
    }
    out
}

fn rate_agreement(p: Probes) -> CheckResult {
    let mut worst = 0.0f64;
    for (state, kernel) in seeded_cases() {
        let g: Vec<f64> = state.levels().iter().map(|l| l.degeneracy).collect();
        let dn = (p.rhs)(&g, state.statistics().sign_as(), &state.occupations(), &kernel);
        for q in [0.2, 0.5, 1.0, 1.5, 1.8] {
            let q = QIndex::new(q).unwrap();
            let chain = rate_chain_from(&state, &dn, q);
            let (Ok(weighted), Ok(sym)) = (rate_weighted_from(&state, &dn, q), entropy_rate_symmetric(&state, &kernel, q)) else {
                worst = f64::INFINITY;
                continue;
            };
            let scale = chain.abs().max(weighted.abs()).max(sym.abs()).max(1e-300);
            let spread = (chain - weighted).abs().max((chain - sym).abs()).max((weighted - sym).abs());
            worst = worst.max(if spread.is_nan() { f64::INFINITY } else { spread / scale });
        }
    }
    result("three entropy-rate forms agree", worst, 1e-9)
}

fn conservation(p: Probes) -> CheckResult {
    let mut worst = 0.0f64;
    for (mut state, kernel) in seeded_cases() {
        let (n0, e0) = moments(&state);
        let g: Vec<f64> = state.levels().iter().map(|l| l.degeneracy).collect();
        let sign = state.statistics().sign_as();
        for _ in 0..100 {
            match step_with(&state, |occ| (p.rhs)(&g, sign, occ, &kernel), 0.01, 20) {
                Ok(s) => state = s.state,
                Err(e) => {
                    return CheckResult {
                        name: "100-step run conserves N and E",
                        passed: false,
                        detail: e.to_string(),
                    }
                }
            }
        }
        let (n1, e1) = moments(&state);
        worst = worst.max((n1 - n0).abs() / n0).max((e1 - e0).abs() / e0.max(1.0));
    }
    result("100-step run conserves N and E", worst, 1e-10)
}

/// Pass/fail table; `true` iff every check passed.
pub fn report(results: &[CheckResult], elapsed: std::time::Duration) -> (String, bool) {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "{:<width$}  {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    let ok = results.iter().all(|r| r.passed);
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(
        out,
        "{} of {} checks passed in {:.2} s",
        results.len() - failed,
        results.len(),
        elapsed.as_secs_f64()
    );
    (out, ok)
}

/// Runs the suite against the library implementations.
pub fn run_and_report() -> (String, bool) {
    let start = Instant::now();
    let results = run_checks();
    report(&results, start.elapsed())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The q-exponential with the deformation sign flipped: `[1 + (q-1) x]^(1/(q-1))`.
    fn flipped_exp_q(x: f64, q: QIndex<f64>) -> f64 {
        if q.is_classical() {
            return x.exp();
        }
        let a = q.value() - 1.0;
        let base = 1.0 + a * x;
        if base <= 0.0 {
            return if a > 0.0 { 0.0 } else { f64::INFINITY };
        }
        base.powf(1.0 / a)
    }

    /// Master equation that counts a diagonal pair such as `(1, 1)` once.
    fn single_count_rhs(g: &[f64], sign: f64, occ: &[f64], kernel: &CollisionKernel<f64>) -> Vec<f64> {
        let mut out = vec![0.0; occ.len()];
        for ch in kernel.channels() {
            let [a, b, c, d] = ch.id.levels();
            let u = |k: usize| g[k] + sign * occ[k];
            let j = ch.rate * (occ[a] * occ[b] * u(c) * u(d) - occ[c] * occ[d] * u(a) * u(b));
            out[a] -= j;
            if b != a {
                out[b] -= j;
            }
            out[c] += j;
            if d != c {
                out[d] += j;
            }
        }
        out
    }

    #[test]
    fn pristine_suite_passes() {
        let results = run_checks();
        assert!(results.iter().all(|r| r.passed), "{results:#?}");
    }

    #[test]
    fn flipped_exponential_is_caught() {
        let results = run_checks_with(Probes {
            exp_q: flipped_exp_q,
            ..Probes::default()
        });
        let inv = results.iter().find(|r| r.name == "exp_q inverts ln_q").unwrap();
        assert!(!inv.passed);
    }

    #[test]
    fn missing_multiplicity_is_caught() {
        let results = run_checks_with(Probes {
            rhs: single_count_rhs,
            ..Probes::default()
        });
        let failing: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        assert!(failing.contains(&"100-step run conserves N and E"), "{failing:?}");
        assert!(failing.contains(&"three entropy-rate forms agree"), "{failing:?}");
    }

    #[test]
    fn report_lists_every_check() {
        let (table, ok) = run_and_report();
        assert!(ok);
        assert_eq!(table.lines().filter(|l| l.contains("PASS")).count(), 6);
    }
}
