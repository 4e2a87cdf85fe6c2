//! q-deformed quantum entropy and its production rate.
//!
//! The production rate is computed three ways, each from its own algebra:
//!
//! * **chain**: chain rule through the per-level derivative of the entropy,
//!   `-q sum_k [ln_{q*} n_k - ln_{q*}(g_k + s n_k)] dn_k/dt`;
//! * **weighted**: the same bracket rewritten through the q-difference as
//!   `ln_{q*}(x_k) * w_k` with `x = n/(g + s n)` and
//!   `w_k = 1 + (1 - q*) ln_{q*}(g_k + s n_k)`;
//! * **symmetric**: a sum over collision channels of
//!   `A P (x_k x_l - x_m x_n) (w_k ln x_k + w_l ln x_l - w_m ln x_m - w_n ln x_n)`
//!   with `P` the product of the four `g + s n` factors, never touching `dn/dt`.
//!
//! The three agree to rounding on every interior state. At `q = 1` all
//! weights are 1 and the symmetric form is manifestly nonnegative.

use rayon::prelude::*;

use crate::dynamics::{rhs, Reduction};
use crate::error::{domain, invalid, Result};
use crate::gas::{occupancy_ratio, GasState, LevelGroup, Statistics};
use crate::kernel::CollisionKernel;
use crate::qmath::{ln_q, ln_q_unchecked, QIndex};
use crate::scalar::Scalar;
use crate::sum::{compensated_sum, NeumaierSum};

/// Upper bound on the number of cells a positivity scan may visit.
pub const MAX_SCAN_CELLS: u64 = 100_000_000;

/// Entropy and entropy-production snapshot. Entropies are in units of `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyDiagnostics<T> {
    pub s_q: T,
    pub rate_chain: T,
    pub rate_weighted: T,
    pub rate_symmetric: T,
    pub min_n_tilde: T,
    pub negative_phi_channels: usize,
}

/// `v^q ln_q(v)`; at `v = 0` the closed form `(v - v^q)/(1 - q)` is used.
fn entropy_kernel<T: Scalar>(v: T, q: QIndex<T>) -> T {
    if v == T::zero() {
        if q.is_classical() {
            return T::zero();
        }
        return (T::zero() - T::zero().powf(q.value())) / q.deformation();
    }
    if q.is_classical() {
        return v * v.ln();
    }
    v.powf(q.value()) * ln_q_unchecked(v, q)
}

/// `S_q = -sum_k [n^q ln_q n - s (g + s n)^q ln_q(g + s n) + s g^q ln_q g]`.
pub fn entropy_sq<T: Scalar>(state: &GasState<T>, q: QIndex<T>) -> Result<T> {
    let stats = state.statistics();
    let s = stats.sign_as::<T>();
    let mut acc = NeumaierSum::new();
    for level in state.levels() {
        let avail = level.available(stats);
        if !(avail > T::zero()) {
            return Err(domain(format!("g + s n = {avail} at level {}", level.index)));
        }
        acc.add(-entropy_kernel(level.occupation, q));
        acc.add(s * entropy_kernel(avail, q));
        acc.add(-(s * entropy_kernel(level.degeneracy, q)));
    }
    Ok(acc.value())
}

/// `2 - (g + s n)^(q* - 1)`.
///
/// This is a diagnostic weight; it coincides with the q-difference weight
/// [`qdiff_weight`] only at `q = 1` or `g + s n = 1`, and unlike it can be
/// negative (for example `g = 100, n = 0, q = 0.5` gives `-8`).
pub fn n_tilde<T: Scalar>(level: &LevelGroup<T>, statistics: Statistics, q: QIndex<T>) -> Result<T> {
    let avail = level.available(statistics);
    if !(avail > T::zero()) {
        return Err(domain(format!("g + s n = {avail} at level {}", level.index)));
    }
    Ok(T::two() - avail.powf(q.q_star() - T::one()))
}

/// Denominator of the q-difference `ln_{q*} n (-)_{q*} ln_{q*}(g + s n)`:
/// `1 + (1 - q*) ln_{q*}(g + s n)`, which simplifies to `(g + s n)^(q - 1)`
/// and is therefore always positive.
pub fn qdiff_weight<T: Scalar>(level: &LevelGroup<T>, statistics: Statistics, q: QIndex<T>) -> Result<T> {
    let dual = q.dual();
    let avail = level.available(statistics);
    Ok(T::one() + dual.deformation() * ln_q(avail, dual)?)
}

fn require_interior<T: Scalar>(state: &GasState<T>) -> Result<()> {
    if let Some(l) = state
        .levels()
        .iter()
        .find(|l| !(l.occupation > T::zero() && l.available(state.statistics()) > T::zero()))
    {
        return Err(domain(format!(
            "entropy rate needs 0 < n and g + s n > 0; level {} has n = {}, g = {}",
            l.index, l.occupation, l.degeneracy
        )));
    }
    Ok(())
}

fn check_kernel<T: Scalar>(state: &GasState<T>, kernel: &CollisionKernel<T>) -> Result<()> {
    if kernel.level_count() != state.len() {
        return Err(invalid(
            "kernel",
            format!("kernel spans {} levels, state has {}", kernel.level_count(), state.len()),
        ));
    }
    Ok(())
}

/// Chain-rule form, fed by the master-equation right-hand side.
pub fn entropy_rate_chain<T: Scalar>(state: &GasState<T>, kernel: &CollisionKernel<T>, q: QIndex<T>) -> Result<T> {
    require_interior(state)?;
    check_kernel(state, kernel)?;
    Ok(rate_chain_from(state, &rhs(state, kernel, Reduction::Canonical), q))
}

pub(crate) fn rate_chain_from<T: Scalar>(state: &GasState<T>, dn: &[T], q: QIndex<T>) -> T {
    let dual = q.dual();
    let stats = state.statistics();
    let sum = compensated_sum(state.levels().iter().zip(dn).map(|(l, &d)| {
        let bracket = ln_q_unchecked(l.occupation, dual) - ln_q_unchecked(l.available(stats), dual);
        bracket * d
    }));
    -q.value() * sum
}

/// Weighted form through the q-difference identity.
pub fn entropy_rate_weighted<T: Scalar>(state: &GasState<T>, kernel: &CollisionKernel<T>, q: QIndex<T>) -> Result<T> {
    require_interior(state)?;
    check_kernel(state, kernel)?;
    rate_weighted_from(state, &rhs(state, kernel, Reduction::Canonical), q)
}

pub(crate) fn rate_weighted_from<T: Scalar>(state: &GasState<T>, dn: &[T], q: QIndex<T>) -> Result<T> {
    let dual = q.dual();
    let stats = state.statistics();
    let mut acc = NeumaierSum::new();
    for (l, &d) in state.levels().iter().zip(dn) {
        let x = occupancy_ratio(l, stats)?;
        acc.add(ln_q_unchecked(x, dual) * qdiff_weight(l, stats, q)? * d);
    }
    Ok(-q.value() * acc.value())
}

/// Channel-symmetrized form; each unordered channel is visited once.
pub fn entropy_rate_symmetric<T: Scalar>(state: &GasState<T>, kernel: &CollisionKernel<T>, q: QIndex<T>) -> Result<T> {
    entropy_rate_symmetric_with(state, kernel, q, Reduction::Canonical)
}

/// As [`entropy_rate_symmetric`]; `Reduction::Parallel` evaluates the channel
/// terms on the rayon pool. Terms are always summed in canonical channel
/// order, so both modes return bit-identical results.
pub fn entropy_rate_symmetric_with<T: Scalar>(
    state: &GasState<T>,
    kernel: &CollisionKernel<T>,
    q: QIndex<T>,
    reduction: Reduction,
) -> Result<T> {
    require_interior(state)?;
    check_kernel(state, kernel)?;
    let stats = state.statistics();
    let dual = q.dual();
    let per_level = state
        .levels()
        .iter()
        .map(|l| {
            let x = occupancy_ratio(l, stats)?;
            let w = qdiff_weight(l, stats, q)?;
            Ok((l.available(stats), x, w * ln_q_unchecked(x, dual)))
        })
        .collect::<Result<Vec<(T, T, T)>>>()?;
    let term = |ch: &crate::kernel::CollisionChannel<T>| -> T {
        let [a, b, c, d] = ch.id.levels();
        let (ua, xa, la) = per_level[a];
        let (ub, xb, lb) = per_level[b];
        let (uc, xc, lc) = per_level[c];
        let (ud, xd, ld) = per_level[d];
        ch.rate * ua * ub * uc * ud * (xa * xb - xc * xd) * ((la + lb) - (lc + ld))
    };
    let terms: Vec<T> = match reduction {
        Reduction::Canonical => kernel.channels().iter().map(term).collect(),
        Reduction::Parallel => kernel.channels().par_iter().map(term).collect(),
    };
    Ok(q.value() * compensated_sum(terms))
}

/// `(xy - zw)(ln_{q*} x + ln_{q*} y - ln_{q*} z - ln_{q*} w)`.
pub fn phi<T: Scalar>(x: T, y: T, z: T, w: T, q_star: T) -> Result<T> {
    let qs = QIndex::exploratory(q_star)?;
    let (lx, ly, lz, lw) = (ln_q(x, qs)?, ln_q(y, qs)?, ln_q(z, qs)?, ln_q(w, qs)?);
    Ok((x * y - z * w) * ((lx + ly) - (lz + lw)))
}

/// True when `phi` is negative by more than the rounding error its two
/// factors can carry. The products `xy`, `zw` and the q-logarithms are each
/// good to a few ulps, so a product of two near-zero factors of opposite
/// rounding sign is not counted.
fn phi_is_negative<T: Scalar>(xy: T, zw: T, logs: [T; 4]) -> (T, bool) {
    let prod = xy - zw;
    let logsum = (logs[0] + logs[1]) - (logs[2] + logs[3]);
    let value = prod * logsum;
    let log_mag = logs.iter().fold(T::zero(), |acc, l| acc + l.abs());
    let floor = T::lit(8.0) * T::epsilon() * (prod.abs() * log_mag + logsum.abs() * (xy + zw));
    (value, value < -floor)
}

/// Number of channels whose `phi(x_k, x_l, x_m, x_n)` at `q*` is negative.
pub fn negative_phi_channels<T: Scalar>(state: &GasState<T>, kernel: &CollisionKernel<T>, q: QIndex<T>) -> Result<usize> {
    require_interior(state)?;
    let dual = q.dual();
    let xs = state.occupancy_ratios()?;
    let logs: Vec<T> = xs.iter().map(|&x| ln_q_unchecked(x, dual)).collect();
    Ok(kernel
        .channels()
        .iter()
        .filter(|ch| {
            let [a, b, c, d] = ch.id.levels();
            phi_is_negative(xs[a] * xs[b], xs[c] * xs[d], [logs[a], logs[b], logs[c], logs[d]]).1
        })
        .count())
}

/// All diagnostics of one state. Rates need an interior state.
pub fn diagnostics<T: Scalar>(
    state: &GasState<T>,
    kernel: &CollisionKernel<T>,
    q: QIndex<T>,
    reduction: Reduction,
) -> Result<EntropyDiagnostics<T>> {
    let stats = state.statistics();
    let min_n_tilde = state
        .levels()
        .iter()
        .map(|l| n_tilde(l, stats, q))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(T::infinity(), T::min);
    Ok(EntropyDiagnostics {
        s_q: entropy_sq(state, q)?,
        rate_chain: entropy_rate_chain(state, kernel, q)?,
        rate_weighted: entropy_rate_weighted(state, kernel, q)?,
        rate_symmetric: entropy_rate_symmetric_with(state, kernel, q, reduction)?,
        min_n_tilde,
        negative_phi_channels: negative_phi_channels(state, kernel, q)?,
    })
}

/// Regular grid `min, min + step, ...` up to `max`, shared by all four axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiGrid<T> {
    pub min: T,
    pub max: T,
    pub step: T,
}

impl<T: Scalar> PhiGrid<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min.is_finite()
            && self.max.is_finite()
            && self.step.is_finite()
            && self.min > T::zero()
            && self.max >= self.min
            && self.step > T::zero();
        if !ok {
            return Err(invalid(
                "phi grid",
                format!("need 0 < min <= max and step > 0, got min={} max={} step={}", self.min, self.max, self.step),
            ));
        }
        let n = self.points_per_axis();
        if (n as u64).saturating_pow(4) > MAX_SCAN_CELLS {
            return Err(invalid("phi grid", format!("{n}^4 cells exceeds the limit of {MAX_SCAN_CELLS}")));
        }
        Ok(())
    }

    fn points_per_axis(&self) -> usize {
        let span = ((self.max - self.min) / self.step).to_f64_lossy();
        (span + 1e-9).floor().min(1e9) as usize + 1
    }

    /// `min + i * step` for `i = 0..`, evaluated without accumulation.
    pub fn values(&self) -> Vec<T> {
        (0..self.points_per_axis())
            .map(|i| self.min + T::from_usize(i).expect("grid index") * self.step)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiScanReport<T> {
    pub q_star: T,
    pub cells_total: u64,
    pub cells_negative: u64,
    pub phi_min: T,
    pub argmin: [T; 4],
    /// `([x, y, z, w], phi)` of every negative cell in scan order.
    pub negative_cells: Vec<([T; 4], T)>,
}

/// Exhaustive sweep of `phi` over `grid^4` in `x, y, z, w` order (`w`
/// fastest). A cell counts as negative only beyond rounding noise.
pub fn scan_phi_domain<T: Scalar>(q_star: T, grid: &PhiGrid<T>) -> Result<PhiScanReport<T>> {
    grid.validate()?;
    let qs = QIndex::exploratory(q_star)?;
    let vals = grid.values();
    let logs = vals.iter().map(|&v| ln_q(v, qs)).collect::<Result<Vec<_>>>()?;
    let n = vals.len();
    let mut report = PhiScanReport {
        q_star,
        cells_total: 0,
        cells_negative: 0,
        phi_min: T::infinity(),
        argmin: [vals[0]; 4],
        negative_cells: Vec::new(),
    };
    for i in 0..n {
        for j in 0..n {
            let xy = vals[i] * vals[j];
            for k in 0..n {
                for l in 0..n {
                    let zw = vals[k] * vals[l];
                    let (value, negative) = phi_is_negative(xy, zw, [logs[i], logs[j], logs[k], logs[l]]);
                    let cell = [vals[i], vals[j], vals[k], vals[l]];
                    report.cells_total += 1;
                    if value < report.phi_min {
                        report.phi_min = value;
                        report.argmin = cell;
                    }
                    if negative {
                        report.cells_negative += 1;
                        report.negative_cells.push((cell, value));
                    }
                }
            }
        }
    }
    Ok(report)
}
