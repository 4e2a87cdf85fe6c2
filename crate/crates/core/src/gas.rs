//! Spatially homogeneous quantum gas: degenerate energy groups, their mean
//! occupations and the quantum statistics that couples them.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::sum::{compensated_sum, NeumaierSum};

/// Default distance kept from `n = 0` and `n = g` by [`random_state`], as a
/// fraction of `g`.
pub const DEFAULT_INTERIOR_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Bose,
    Fermi,
}

impl Statistics {
    /// `+1` for bosons, `-1` for fermions.
    #[inline]
    pub fn sign(self) -> i8 {
        match self {
            Statistics::Bose => 1,
            Statistics::Fermi => -1,
        }
    }

    #[inline]
    pub fn sign_as<T: Scalar>(self) -> T {
        match self {
            Statistics::Bose => T::one(),
            Statistics::Fermi => -T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistics::Bose => "bose",
            Statistics::Fermi => "fermi",
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One group of `degeneracy` neighbouring single-particle states at a common
/// `energy`, holding `occupation` particles on average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGroup<T> {
    pub index: usize,
    pub degeneracy: T,
    pub energy: T,
    pub occupation: T,
}

impl<T: Scalar> LevelGroup<T> {
    /// The enhancement/blocking factor `g + s n`.
    #[inline]
    pub fn available(&self, statistics: Statistics) -> T {
        self.degeneracy + statistics.sign_as::<T>() * self.occupation
    }
}

/// Ratio `n / (g + s n)`, the variable in which the stationarity conditions
/// factorize. Zero occupation gives zero.
pub fn occupancy_ratio<T: Scalar>(level: &LevelGroup<T>, statistics: Statistics) -> Result<T> {
    let avail = level.available(statistics);
    if !(avail > T::zero()) {
        return Err(domain(format!(
            "g + s n = {avail} is not positive at level {}",
            level.index
        )));
    }
    Ok(level.occupation / avail)
}

/// Energy lattice `epsilon_k = lattice[k] * spacing` with per-level degeneracies.
///
/// Integer lattice coordinates let the collision kernel check energy
/// conservation exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid<T> {
    lattice: Vec<u32>,
    spacing: T,
    degeneracies: Vec<T>,
}

impl<T: Scalar> LevelGrid<T> {
    pub fn new(lattice: Vec<u32>, spacing: T, degeneracies: Vec<T>) -> Result<Self> {
        if lattice.len() != degeneracies.len() {
            return Err(invalid(
                "level grid",
                format!(
                    "{} lattice points but {} degeneracies",
                    lattice.len(),
                    degeneracies.len()
                ),
            ));
        }
        if !(spacing.is_finite() && spacing > T::zero()) {
            return Err(invalid("level grid", format!("spacing must be positive, got {spacing}")));
        }
        if let Some((k, g)) = degeneracies
            .iter()
            .enumerate()
            .find(|(_, g)| !(g.is_finite() && **g > T::zero()))
        {
            return Err(invalid("level grid", format!("degeneracy {g} at level {k} is not positive")));
        }
        Ok(Self {
            lattice,
            spacing,
            degeneracies,
        })
    }

    /// Levels `0..count` on consecutive lattice points, all with degeneracy `g`.
    pub fn uniform(count: usize, spacing: T, g: T) -> Result<Self> {
        Self::new((0..count as u32).collect(), spacing, vec![g; count])
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn lattice(&self) -> &[u32] {
        &self.lattice
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn degeneracies(&self) -> &[T] {
        &self.degeneracies
    }

    pub fn energies(&self) -> Vec<T> {
        self.lattice
            .iter()
            .map(|&k| T::from_u32(k).expect("lattice point representable") * self.spacing)
            .collect()
    }

    /// State on this grid with the given occupations.
    pub fn state(&self, occupations: &[T], statistics: Statistics) -> Result<GasState<T>> {
        if occupations.len() != self.len() {
            return Err(invalid(
                "gas state",
                format!("{} occupations for {} levels", occupations.len(), self.len()),
            ));
        }
        let levels = self
            .degeneracies
            .iter()
            .zip(self.energies())
            .zip(occupations)
            .enumerate()
            .map(|(index, ((&degeneracy, energy), &occupation))| LevelGroup {
                index,
                degeneracy,
                energy,
                occupation,
            })
            .collect();
        GasState::new(levels, statistics)
    }
}

/// Immutable snapshot of the gas.
#[derive(Debug, Clone, PartialEq)]
pub struct GasState<T> {
    levels: Vec<LevelGroup<T>>,
    statistics: Statistics,
}

fn check_level<T: Scalar>(level: &LevelGroup<T>, statistics: Statistics) -> Result<()> {
    let k = level.index;
    if !(level.degeneracy.is_finite() && level.degeneracy > T::zero()) {
        return Err(invalid("gas state", format!("level {k}: degeneracy {} not positive", level.degeneracy)));
    }
    if !(level.energy.is_finite() && level.energy >= T::zero()) {
        return Err(invalid("gas state", format!("level {k}: energy {} not nonnegative", level.energy)));
    }
    if !(level.occupation.is_finite() && level.occupation >= T::zero()) {
        return Err(invalid("gas state", format!("level {k}: occupation {} not nonnegative", level.occupation)));
    }
    if statistics == Statistics::Fermi && level.occupation > level.degeneracy {
        return Err(invalid(
            "gas state",
            format!(
                "level {k}: fermion occupation {} exceeds degeneracy {}",
                level.occupation, level.degeneracy
            ),
        ));
    }
    Ok(())
}

impl<T: Scalar> GasState<T> {
    /// Validates every level. Level indices must be `0..L` in order.
    ///
    /// A saturated fermion group (`n = g`) is a valid state; operations that
    /// need `g - n > 0` reject it themselves.
    pub fn new(levels: Vec<LevelGroup<T>>, statistics: Statistics) -> Result<Self> {
        for (i, level) in levels.iter().enumerate() {
            if level.index != i {
                return Err(invalid(
                    "gas state",
                    format!("level at position {i} has index {}", level.index),
                ));
            }
            check_level(level, statistics)?;
        }
        Ok(Self { levels, statistics })
    }

    pub fn levels(&self) -> &[LevelGroup<T>] {
        &self.levels
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn occupations(&self) -> Vec<T> {
        self.levels.iter().map(|l| l.occupation).collect()
    }

    /// Same levels, new occupations. Fails if any invariant breaks.
    pub fn with_occupations(&self, occupations: &[T]) -> Result<Self> {
        if occupations.len() != self.levels.len() {
            return Err(invalid(
                "gas state",
                format!("{} occupations for {} levels", occupations.len(), self.levels.len()),
            ));
        }
        let mut levels = self.levels.clone();
        for (level, &n) in levels.iter_mut().zip(occupations) {
            level.occupation = n;
            check_level(level, self.statistics)?;
        }
        Ok(Self {
            levels,
            statistics: self.statistics,
        })
    }

    /// True when every occupation is strictly positive and every `g + s n`
    /// is strictly positive, which the entropy-rate formulas require.
    pub fn is_interior(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.occupation > T::zero() && l.available(self.statistics) > T::zero())
    }

    /// `[x_0, ..., x_{L-1}]` with `x = n / (g + s n)`.
    pub fn occupancy_ratios(&self) -> Result<Vec<T>> {
        self.levels
            .iter()
            .map(|l| occupancy_ratio(l, self.statistics))
            .collect()
    }

    /// Writes the `kappa,g,epsilon,n` table, shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kappa", "g", "epsilon", "n"])?;
        for l in &self.levels {
            w.write_record([
                l.index.to_string(),
                l.degeneracy.to_string(),
                l.energy.to_string(),
                l.occupation.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, statistics: Statistics) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["kappa", "g", "epsilon", "n"] {
            return Err(invalid("gas csv", format!("unexpected header {header:?}")));
        }
        let mut levels = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i)
                    .ok_or_else(|| invalid("gas csv", format!("row {row}: missing column {i}")))
            };
            let num = |i: usize| -> Result<T> {
                field(i)?
                    .trim()
                    .parse::<T>()
                    .map_err(|_| invalid("gas csv", format!("row {row}: bad number in column {i}")))
            };
            let index = field(0)?
                .trim()
                .parse::<usize>()
                .map_err(|_| invalid("gas csv", format!("row {row}: bad kappa")))?;
            levels.push(LevelGroup {
                index,
                degeneracy: num(1)?,
                energy: num(2)?,
                occupation: num(3)?,
            });
        }
        Self::new(levels, statistics)
    }
}

/// Total particle number and energy `(N, E)`, compensated sums.
pub fn moments<T: Scalar>(state: &GasState<T>) -> (T, T) {
    let mut n = NeumaierSum::new();
    let mut e = NeumaierSum::new();
    for l in state.levels() {
        n.add(l.occupation);
        e.add(l.occupation * l.energy);
    }
    (n.value(), e.value())
}

/// [`random_state_with_margin`] with [`DEFAULT_INTERIOR_MARGIN`].
pub fn random_state<T: Scalar>(
    grid: &LevelGrid<T>,
    n_target: T,
    seed: u64,
    statistics: Statistics,
) -> Result<GasState<T>> {
    random_state_with_margin(grid, n_target, seed, statistics, T::lit(DEFAULT_INTERIOR_MARGIN))
}

/// Seeded random interior state with `sum n = n_target`.
///
/// Each level draws a weight `w` in `[0.02, 0.98]` from a SplitMix64 stream.
/// Bosons get `n = N w / sum w`. Fermions get
/// `n = m + (g - 2m) * sigmoid(logit(w) + t)` with `m = margin * g`, where the
/// common shift `t` is found by bisection so the total hits `n_target`.
pub fn random_state_with_margin<T: Scalar>(
    grid: &LevelGrid<T>,
    n_target: T,
    seed: u64,
    statistics: Statistics,
    margin: T,
) -> Result<GasState<T>> {
    if !(n_target.is_finite() && n_target > T::zero()) {
        return Err(Error::Infeasible(format!("particle number {n_target} must be positive")));
    }
    if !(margin >= T::zero() && margin < T::lit(0.5)) {
        return Err(invalid("margin", format!("{margin} outside [0, 0.5)")));
    }
    if grid.is_empty() {
        return Err(Error::Infeasible("no levels to populate".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let weights: Vec<T> = (0..grid.len())
        .map(|_| T::lit(0.02 + 0.96 * rng.next_f64()))
        .collect();

    let occupations = match statistics {
        Statistics::Bose => {
            let total = compensated_sum(weights.iter().copied());
            weights.iter().map(|&w| n_target * w / total).collect::<Vec<_>>()
        }
        Statistics::Fermi => fermi_fill(grid.degeneracies(), &weights, n_target, margin)?,
    };
    grid.state(&occupations, statistics)
}

fn fermi_fill<T: Scalar>(g: &[T], weights: &[T], n_target: T, margin: T) -> Result<Vec<T>> {
    let lo_total = compensated_sum(g.iter().map(|&g| margin * g));
    let hi_total = compensated_sum(g.iter().map(|&g| g - margin * g));
    if !(n_target > lo_total && n_target < hi_total) {
        return Err(Error::Infeasible(format!(
            "fermion number {n_target} has no interior state: needs {lo_total} < N < {hi_total}"
        )));
    }
    let logits: Vec<T> = weights.iter().map(|&w| (w / (T::one() - w)).ln()).collect();
    let fill = |t: T| -> Vec<T> {
        g.iter()
            .zip(&logits)
            .map(|(&g, &z)| {
                let m = margin * g;
                let s = T::one() / (T::one() + (-(z + t)).exp());
                m + (g - m - m) * s
            })
            .collect()
    };
    let total = |t: T| compensated_sum(fill(t));

    let mut lo = -T::one();
    let mut hi = T::one();
    while total(lo) > n_target {
        lo = lo + lo;
    }
    while total(hi) < n_target {
        hi = hi + hi;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::two();
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < n_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (n_lo, n_hi) = (total(lo), total(hi));
    let t = if (n_lo - n_target).abs() <= (n_hi - n_target).abs() {
        lo
    } else {
        hi
    };
    Ok(fill(t))
}
