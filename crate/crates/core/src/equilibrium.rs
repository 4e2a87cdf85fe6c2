//! q-generalized Fermi-Dirac / Bose-Einstein distributions.
//!
//! The stationary occupation solves `ln_{q*}(n / (g + s n)) + alpha + beta e = 0`
//! exactly: with `r = exp_{q*}(-(alpha + beta e))` the occupancy ratio is `r`
//! and `n = g r / (1 - s r)`. At `q = 1` this is `g / (e^(alpha + beta e) - s)`.

use crate::error::{domain, invalid, Error, Result};
use crate::gas::{GasState, Statistics};
use crate::kernel::CollisionKernel;
use crate::qmath::{exp_q_m1_unchecked, exp_q_unchecked, ln_q_unchecked, QIndex};
use crate::scalar::Scalar;
use crate::sum::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumParams<T> {
    pub alpha: T,
    /// Inverse energy units.
    pub beta: T,
}

/// Stationary occupation of one group.
///
/// Fermions whose q-exponential diverges saturate at `n = g`; the cutoff
/// branch gives `n = 0`. Bosons need `r < 1`.
pub fn occupation_q<T: Scalar>(
    g: T,
    energy: T,
    params: EquilibriumParams<T>,
    q: QIndex<T>,
    statistics: Statistics,
) -> Result<T> {
    let y = params.alpha + params.beta * energy;
    if !y.is_finite() {
        return Err(domain(format!("alpha + beta e = {y} is not finite")));
    }
    let dual = q.dual();
    let r = exp_q_unchecked(-y, dual);
    match statistics {
        Statistics::Fermi => {
            if r.is_infinite() {
                Ok(g)
            } else {
                Ok(g * r / (T::one() + r))
            }
        }
        Statistics::Bose => {
            // 1 - r, without cancellation as r -> 1
            let one_minus_r = -exp_q_m1_unchecked(-y, dual);
            if !(r.is_finite() && one_minus_r > T::zero()) {
                return Err(domain(format!(
                    "boson occupancy ratio {r} >= 1 at energy {energy} (alpha + beta e = {y})"
                )));
            }
            Ok(g * r / one_minus_r)
        }
    }
}

/// Occupations of every level.
pub fn distribution<T: Scalar>(
    degeneracies: &[T],
    energies: &[T],
    params: EquilibriumParams<T>,
    q: QIndex<T>,
    statistics: Statistics,
) -> Result<Vec<T>> {
    degeneracies
        .iter()
        .zip(energies)
        .map(|(&g, &e)| occupation_q(g, e, params, q, statistics))
        .collect()
}

/// Residuals of the two stationarity conditions, maximized over channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityResiduals<T> {
    /// `max |x_k x_l - x_m x_n|`
    pub res_product: T,
    /// `max |ln_{q*} x_k + ln_{q*} x_l - ln_{q*} x_m - ln_{q*} x_n|`
    pub res_qsum: T,
}

pub fn stationarity_residuals<T: Scalar>(
    state: &GasState<T>,
    kernel: &CollisionKernel<T>,
    q: QIndex<T>,
) -> Result<StationarityResiduals<T>> {
    if !state.is_interior() {
        return Err(domain("stationarity residuals need 0 < n and g + s n > 0 at every level"));
    }
    if kernel.level_count() != state.len() {
        return Err(invalid("kernel", "kernel and state disagree on level count"));
    }
    let dual = q.dual();
    let xs = state.occupancy_ratios()?;
    let logs: Vec<T> = xs.iter().map(|&x| ln_q_unchecked(x, dual)).collect();
    let mut res = StationarityResiduals {
        res_product: T::zero(),
        res_qsum: T::zero(),
    };
    for ch in kernel.channels() {
        let [a, b, c, d] = ch.id.levels();
        res.res_product = res.res_product.max((xs[a] * xs[b] - xs[c] * xs[d]).abs());
        res.res_qsum = res.res_qsum.max(((logs[a] + logs[b]) - (logs[c] + logs[d])).abs());
    }
    Ok(res)
}

/// `max_k |ln_{q*} x_k + alpha + beta e_k|`.
pub fn summational_residual<T: Scalar>(state: &GasState<T>, params: EquilibriumParams<T>, q: QIndex<T>) -> Result<T> {
    let dual = q.dual();
    let xs = state.occupancy_ratios()?;
    let mut worst = T::zero();
    for (l, x) in state.levels().iter().zip(xs) {
        if !(x > T::zero()) {
            return Err(domain(format!("level {} has zero occupation", l.index)));
        }
        worst = worst.max((ln_q_unchecked(x, dual) + params.alpha + params.beta * l.energy).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Starting point; `None` uses `alpha = 0, beta = 1/mean(e)` (bosons
    /// shift `alpha` so every ratio starts below one).
    pub initial: Option<EquilibriumParams<T>>,
    pub max_newton: usize,
    /// Relative tolerance on both constraints.
    pub tolerance: T,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            initial: None,
            max_newton: 100,
            tolerance: T::lit(1e-10),
        }
    }
}

/// Finds `(alpha, beta)` with `sum n = n_target` and `sum e n = e_target`.
pub fn solve_params<T: Scalar>(
    n_target: T,
    e_target: T,
    degeneracies: &[T],
    energies: &[T],
    q: QIndex<T>,
    statistics: Statistics,
) -> Result<EquilibriumParams<T>> {
    solve_params_with(n_target, e_target, degeneracies, energies, q, statistics, SolverOptions::default())
}

/// Damped Newton on `(alpha, beta)` with a finite-difference Jacobian; falls
/// back to nested bisection (outer on `beta`, inner on `alpha` through the
/// monotone number constraint) when Newton stalls or leaves the admissible
/// region.
pub fn solve_params_with<T: Scalar>(
    n_target: T,
    e_target: T,
    degeneracies: &[T],
    energies: &[T],
    q: QIndex<T>,
    statistics: Statistics,
    options: SolverOptions<T>,
) -> Result<EquilibriumParams<T>> {
    let problem = Problem::new(n_target, e_target, degeneracies, energies, q, statistics)?;

    if problem.degenerate_spectrum {
        // every level at one energy: beta is immaterial
        let alpha = problem.alpha_for(T::zero())?;
        return problem.finish(alpha, T::zero(), options.tolerance);
    }

    let start = options.initial.unwrap_or_else(|| problem.initial_guess());
    let start_b = start.beta * problem.e_ref;
    let newton_tol = (options.tolerance * T::lit(1e-2)).max(T::lit(64.0) * T::epsilon());
    if let Some((alpha, b)) = problem.newton(start.alpha, start_b, options.max_newton, newton_tol) {
        if let Ok(p) = problem.finish(alpha, b, options.tolerance) {
            return Ok(p);
        }
    }
    let (alpha, b) = problem.nested_bisection()?;
    problem.finish(alpha, b, options.tolerance)
}

struct Problem<'a, T> {
    n_target: T,
    e_target: T,
    g: &'a [T],
    /// energies divided by `e_ref`
    e_scaled: Vec<T>,
    e_ref: T,
    e_scale: T,
    q: QIndex<T>,
    statistics: Statistics,
    degenerate_spectrum: bool,
}

impl<'a, T: Scalar> Problem<'a, T> {
    fn new(
        n_target: T,
        e_target: T,
        g: &'a [T],
        energies: &[T],
        q: QIndex<T>,
        statistics: Statistics,
    ) -> Result<Self> {
        if g.len() != energies.len() || g.is_empty() {
            return Err(invalid("levels", "need equally many (nonzero) degeneracies and energies"));
        }
        if !(n_target.is_finite() && n_target > T::zero() && e_target.is_finite()) {
            return Err(Error::Infeasible(format!("targets N = {n_target}, E = {e_target}")));
        }
        let e_min = energies.iter().copied().fold(T::infinity(), T::min);
        let e_max = energies.iter().copied().fold(T::neg_infinity(), T::max);
        let e_ref = e_max.abs().max(e_min.abs());
        let e_ref = if e_ref > T::zero() { e_ref } else { T::one() };
        let (lo, hi) = energy_window(n_target, g, energies, statistics)?;
        let degenerate_spectrum = e_max == e_min;
        let slack = T::lit(1e-12) * e_target.abs().max(n_target * e_ref);
        if degenerate_spectrum {
            if (e_target - n_target * e_min).abs() > slack {
                return Err(Error::Infeasible(format!(
                    "all levels sit at energy {e_min}, so E must be {}",
                    n_target * e_min
                )));
            }
        } else if !(e_target > lo && e_target < hi) {
            return Err(Error::Infeasible(format!(
                "E = {e_target} outside the open window ({lo}, {hi}) reachable with N = {n_target}"
            )));
        }
        Ok(Self {
            n_target,
            e_target,
            g,
            e_scaled: energies.iter().map(|&e| e / e_ref).collect(),
            e_ref,
            e_scale: e_target.abs().max(n_target * (e_max - e_min)),
            q,
            statistics,
            degenerate_spectrum,
        })
    }

    fn initial_guess(&self) -> EquilibriumParams<T> {
        let mean = compensated_sum(self.e_scaled.iter().copied()) / T::from_usize(self.g.len()).unwrap();
        let b = if mean > T::zero() { T::one() / mean } else { T::zero() };
        let alpha = match self.statistics {
            Statistics::Fermi => T::zero(),
            Statistics::Bose => {
                let min_e = self.e_scaled.iter().copied().fold(T::infinity(), T::min);
                T::one() - b * min_e
            }
        };
        EquilibriumParams {
            alpha,
            beta: b / self.e_ref,
        }
    }

    fn occupations(&self, alpha: T, b: T) -> Option<Vec<T>> {
        let params = EquilibriumParams { alpha, beta: b };
        self.g
            .iter()
            .zip(&self.e_scaled)
            .map(|(&g, &e)| occupation_q(g, e, params, self.q, self.statistics).ok())
            .collect()
    }

    /// `(N, E)` in scaled units, `None` outside the admissible region.
    fn moments(&self, alpha: T, b: T) -> Option<(T, T)> {
        let occ = self.occupations(alpha, b)?;
        let n = compensated_sum(occ.iter().copied());
        let e = compensated_sum(occ.iter().zip(&self.e_scaled).map(|(&n, &e)| n * e)) * self.e_ref;
        Some((n, e))
    }

    fn residual(&self, alpha: T, b: T) -> Option<(T, T)> {
        let (n, e) = self.moments(alpha, b)?;
        Some(((n - self.n_target) / self.n_target, (e - self.e_target) / self.e_scale))
    }

    fn newton(&self, mut alpha: T, mut b: T, max_iter: usize, tol: T) -> Option<(T, T)> {
        let norm = |(f, g): (T, T)| f.abs().max(g.abs());
        let mut f = self.residual(alpha, b)?;
        for _ in 0..max_iter {
            if norm(f) <= tol {
                return Some((alpha, b));
            }
            let ha = T::lit(1e-7) * alpha.abs().max(T::one());
            let hb = T::lit(1e-7) * b.abs().max(T::one());
            let fa = self.residual(alpha + ha, b).or_else(|| self.residual(alpha - ha, b).map(|r| (r.0 + (f.0 - r.0) * T::two(), r.1 + (f.1 - r.1) * T::two())))?;
            let fb = self.residual(alpha, b + hb).or_else(|| self.residual(alpha, b - hb).map(|r| (r.0 + (f.0 - r.0) * T::two(), r.1 + (f.1 - r.1) * T::two())))?;
            let (j00, j10) = ((fa.0 - f.0) / ha, (fa.1 - f.1) / ha);
            let (j01, j11) = ((fb.0 - f.0) / hb, (fb.1 - f.1) / hb);
            let det = j00 * j11 - j01 * j10;
            if !(det.is_finite() && det != T::zero()) {
                return None;
            }
            let da = -(j11 * f.0 - j01 * f.1) / det;
            let db = -(-j10 * f.0 + j00 * f.1) / det;
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                let (na, nb) = (alpha + lambda * da, b + lambda * db);
                if let Some(nf) = self.residual(na, nb) {
                    if norm(nf) < norm(f) {
                        alpha = na;
                        b = nb;
                        f = nf;
                        accepted = true;
                        break;
                    }
                }
                lambda = lambda / T::two();
            }
            if !accepted {
                return if norm(f) <= tol { Some((alpha, b)) } else { None };
            }
        }
        (norm(f) <= tol).then_some((alpha, b))
    }

    /// Particle number at `(alpha, b)`; `+inf` where a boson ratio reaches one.
    fn number(&self, alpha: T, b: T) -> T {
        self.moments(alpha, b).map(|m| m.0).unwrap_or_else(T::infinity)
    }

    /// The `alpha` that meets the number constraint at fixed `b`.
    fn alpha_for(&self, b: T) -> Result<T> {
        let (mut lo, mut hi);
        match self.statistics {
            Statistics::Fermi => {
                lo = -T::one();
                hi = T::one();
                let mut k = 0;
                while self.number(lo, b) <= self.n_target {
                    lo = lo * T::two();
                    k += 1;
                    if k > 1100 {
                        return Err(self.no_bracket("alpha (low side)"));
                    }
                }
                let mut k = 0;
                while self.number(hi, b) >= self.n_target {
                    hi = hi * T::two();
                    k += 1;
                    if k > 1100 {
                        return Err(self.no_bracket("alpha (high side)"));
                    }
                }
            }
            Statistics::Bose => {
                // N -> inf as alpha -> -b e_min from above
                let min_e = self.e_scaled.iter().copied().fold(T::infinity(), T::min);
                lo = -b * min_e;
                let mut width = T::one();
                hi = lo + width;
                let mut k = 0;
                while self.number(hi, b) >= self.n_target {
                    width = width * T::two();
                    hi = lo + width;
                    k += 1;
                    if k > 1100 {
                        return Err(self.no_bracket("alpha"));
                    }
                }
            }
        }
        // number(lo) > target > number(hi)
        for _ in 0..2000 {
            let mid = lo + (hi - lo) / T::two();
            if mid <= lo || mid >= hi {
                break;
            }
            if self.number(mid, b) > self.n_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let dl = (self.number(lo, b) - self.n_target).abs();
        let dh = (self.number(hi, b) - self.n_target).abs();
        Ok(if dl < dh { lo } else { hi })
    }

    fn energy_along(&self, b: T) -> Result<T> {
        let alpha = self.alpha_for(b)?;
        self.moments(alpha, b)
            .map(|m| m.1)
            .ok_or_else(|| self.no_bracket("energy"))
    }

    fn nested_bisection(&self) -> Result<(T, T)> {
        // E decreases with b along the number constraint
        let mut lo = -T::one();
        let mut hi = T::one();
        let mut k = 0;
        while self.energy_along(lo)? <= self.e_target {
            lo = lo * T::two();
            k += 1;
            if k > 200 {
                return Err(self.no_bracket("beta (low side)"));
            }
        }
        let mut k = 0;
        while self.energy_along(hi)? >= self.e_target {
            hi = hi * T::two();
            k += 1;
            if k > 200 {
                return Err(self.no_bracket("beta (high side)"));
            }
        }
        for _ in 0..2000 {
            let mid = lo + (hi - lo) / T::two();
            if mid <= lo || mid >= hi {
                break;
            }
            if self.energy_along(mid)? > self.e_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let dl = (self.energy_along(lo)? - self.e_target).abs();
        let dh = (self.energy_along(hi)? - self.e_target).abs();
        let b = if dl < dh { lo } else { hi };
        Ok((self.alpha_for(b)?, b))
    }

    fn no_bracket(&self, what: &str) -> Error {
        Error::NonConvergence {
            iterations: 0,
            detail: format!("could not bracket {what} for N = {}, E = {}", self.n_target, self.e_target),
        }
    }

    fn finish(&self, alpha: T, b: T, tol: T) -> Result<EquilibriumParams<T>> {
        let (n, e) = self.moments(alpha, b).ok_or_else(|| self.no_bracket("a valid point"))?;
        let n_err = (n - self.n_target).abs() / self.n_target;
        let e_err = (e - self.e_target).abs() / self.e_target.abs().max(self.e_scale * T::epsilon());
        if n_err <= tol && e_err <= tol {
            Ok(EquilibriumParams {
                alpha,
                beta: b / self.e_ref,
            })
        } else {
            Err(Error::NonConvergence {
                iterations: 0,
                detail: format!("relative errors N: {n_err:e}, E: {e_err:e}"),
            })
        }
    }
}

/// Open interval of total energies reachable with `n` particles.
fn energy_window<T: Scalar>(n: T, g: &[T], energies: &[T], statistics: Statistics) -> Result<(T, T)> {
    let e_min = energies.iter().copied().fold(T::infinity(), T::min);
    let e_max = energies.iter().copied().fold(T::neg_infinity(), T::max);
    match statistics {
        Statistics::Bose => Ok((n * e_min, n * e_max)),
        Statistics::Fermi => {
            let capacity = compensated_sum(g.iter().copied());
            if !(n < capacity) {
                return Err(Error::Infeasible(format!(
                    "N = {n} fermions need N < sum g = {capacity}"
                )));
            }
            let mut order: Vec<usize> = (0..g.len()).collect();
            order.sort_by(|&a, &b| energies[a].partial_cmp(&energies[b]).unwrap());
            let fill = |idx: &mut dyn Iterator<Item = usize>| {
                let mut left = n;
                let mut total = T::zero();
                for k in idx {
                    let take = left.min(g[k]);
                    total = total + take * energies[k];
                    left = left - take;
                    if left <= T::zero() {
                        break;
                    }
                }
                total
            };
            let lo = fill(&mut order.iter().copied());
            let hi = fill(&mut order.iter().rev().copied());
            Ok((lo, hi))
        }
    }
}
