//! Energy-conserving two-body collision channels and their rates.
//!
//! A channel is the unordered pair of unordered level pairs
//! `{(k, l), (m, n)}` with `e_k + e_l = e_m + e_n`. Storing one rate per
//! channel makes the rate of a collision and of its inverse the same number.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{invalid, Result};
use crate::gas::GasState;
use crate::rng::{hash_words, unit_f64};
use crate::scalar::Scalar;

/// Canonical channel identity: `in_pair.0 <= in_pair.1`,
/// `out_pair.0 <= out_pair.1`, `in_pair < out_pair`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId {
    pub in_pair: (usize, usize),
    pub out_pair: (usize, usize),
}

fn sorted_pair((a, b): (usize, usize)) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl ChannelId {
    /// Canonicalizes an arbitrary ordering; `None` for a self-channel.
    pub fn new(p: (usize, usize), r: (usize, usize)) -> Option<Self> {
        let (p, r) = (sorted_pair(p), sorted_pair(r));
        match p.cmp(&r) {
            std::cmp::Ordering::Less => Some(Self { in_pair: p, out_pair: r }),
            std::cmp::Ordering::Greater => Some(Self { in_pair: r, out_pair: p }),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// `[k, l, m, n]`.
    pub fn levels(&self) -> [usize; 4] {
        [self.in_pair.0, self.in_pair.1, self.out_pair.0, self.out_pair.1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionChannel<T> {
    pub id: ChannelId,
    pub rate: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec<T> {
    Constant(T),
    /// Per-channel rate `min + (max - min) * u`, where `u` takes the top 53
    /// bits of `hash_words(seed, [k, l, m, n])` (see [`crate::rng`]).
    Random { seed: u64, min: T, max: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(k, l) -> (m, n)`
    Forward,
    /// `(m, n) -> (k, l)`
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionKernel<T> {
    channels: Vec<CollisionChannel<T>>,
    level_count: usize,
}

/// All channels allowed by exact energy conservation on an integer lattice,
/// in canonical (lexicographic) order.
///
/// Diagonal pairs such as `(1, 1)` are included; a channel never appears twice.
pub fn enumerate_channels(lattice: &[u32]) -> Vec<ChannelId> {
    let mut by_energy: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
    for a in 0..lattice.len() {
        for b in a..lattice.len() {
            let e = u64::from(lattice[a]) + u64::from(lattice[b]);
            by_energy.entry(e).or_default().push((a, b));
        }
    }
    let mut out = Vec::new();
    for pairs in by_energy.values() {
        for (i, &p) in pairs.iter().enumerate() {
            for &r in &pairs[i + 1..] {
                out.push(ChannelId { in_pair: p, out_pair: r });
            }
        }
    }
    out.sort_unstable();
    out
}

pub fn build_kernel<T: Scalar>(lattice: &[u32], rates: RateSpec<T>) -> Result<CollisionKernel<T>> {
    match rates {
        RateSpec::Constant(c) => {
            if !(c.is_finite() && c >= T::zero()) {
                return Err(invalid("rate spec", format!("constant rate {c} must be finite and nonnegative")));
            }
        }
        RateSpec::Random { min, max, .. } => {
            if !(min.is_finite() && max.is_finite() && T::zero() <= min && min <= max) {
                return Err(invalid("rate spec", format!("need 0 <= min <= max, got [{min}, {max}]")));
            }
        }
    }
    let channels = enumerate_channels(lattice)
        .into_iter()
        .map(|id| CollisionChannel { id, rate: channel_rate(id, rates) })
        .collect();
    Ok(CollisionKernel {
        channels,
        level_count: lattice.len(),
    })
}

fn channel_rate<T: Scalar>(id: ChannelId, rates: RateSpec<T>) -> T {
    match rates {
        RateSpec::Constant(c) => c,
        RateSpec::Random { seed, min, max } => {
            let words = id.levels().map(|k| k as u64);
            let u = T::lit(unit_f64(hash_words(seed, &words)));
            min + (max - min) * u
        }
    }
}

impl<T: Scalar> CollisionKernel<T> {
    /// Checks canonical form, uniqueness, index range and rate sign.
    pub fn from_channels(mut channels: Vec<CollisionChannel<T>>, level_count: usize) -> Result<Self> {
        for ch in &channels {
            let canon = ChannelId::new(ch.id.in_pair, ch.id.out_pair)
                .ok_or_else(|| invalid("kernel", format!("self-channel {:?}", ch.id)))?;
            if canon != ch.id {
                return Err(invalid("kernel", format!("channel {:?} not in canonical form", ch.id)));
            }
            if ch.id.levels().iter().any(|&k| k >= level_count) {
                return Err(invalid("kernel", format!("channel {:?} references a level >= {level_count}", ch.id)));
            }
            if !(ch.rate.is_finite() && ch.rate >= T::zero()) {
                return Err(invalid("kernel", format!("channel {:?} has rate {}", ch.id, ch.rate)));
            }
        }
        channels.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = channels.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid("kernel", format!("duplicate channel {:?}", w[0].id)));
        }
        Ok(Self { channels, level_count })
    }

    pub fn channels(&self) -> &[CollisionChannel<T>] {
        &self.channels
    }

    pub fn level_count(&self) -> usize {
        self.level_count
    }

    /// Rate of the collision `p -> r` (in either orientation); zero off shell.
    pub fn rate(&self, p: (usize, usize), r: (usize, usize)) -> T {
        ChannelId::new(p, r)
            .and_then(|id| {
                self.channels
                    .binary_search_by(|c| c.id.cmp(&id))
                    .ok()
                    .map(|i| self.channels[i].rate)
            })
            .unwrap_or_else(T::zero)
    }

    /// Checks every channel conserves lattice energy exactly.
    pub fn check_energy_conservation(&self, lattice: &[u32]) -> Result<()> {
        if lattice.len() != self.level_count {
            return Err(invalid("kernel", "lattice length differs from level count"));
        }
        for ch in &self.channels {
            let [a, b, c, d] = ch.id.levels().map(|k| u64::from(lattice[k]));
            if a + b != c + d {
                return Err(invalid("kernel", format!("channel {:?} does not conserve energy", ch.id)));
            }
        }
        Ok(())
    }

    /// `kappa,lambda,mu,nu,A` rows in canonical order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kappa", "lambda", "mu", "nu", "A"])?;
        for ch in &self.channels {
            let [a, b, c, d] = ch.id.levels();
            w.write_record([
                a.to_string(),
                b.to_string(),
                c.to_string(),
                d.to_string(),
                ch.rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, level_count: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["kappa", "lambda", "mu", "nu", "A"] {
            return Err(invalid("kernel csv", format!("unexpected header {header:?}")));
        }
        let mut channels = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let idx = |i: usize| -> Result<usize> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| invalid("kernel csv", format!("row {row}: bad index in column {i}")))
            };
            let rate = rec
                .get(4)
                .and_then(|s| s.trim().parse::<T>().ok())
                .ok_or_else(|| invalid("kernel csv", format!("row {row}: bad rate")))?;
            channels.push(CollisionChannel {
                id: ChannelId {
                    in_pair: (idx(0)?, idx(1)?),
                    out_pair: (idx(2)?, idx(3)?),
                },
                rate,
            });
        }
        Self::from_channels(channels, level_count)
    }
}

/// Expected number of collisions per unit time along one direction of a
/// channel: `A n_k n_l (g_m + s n_m)(g_n + s n_n)` for `Forward`.
pub fn collision_rate<T: Scalar>(
    state: &GasState<T>,
    channel: &CollisionChannel<T>,
    direction: Direction,
) -> T {
    let lv = state.levels();
    let stats = state.statistics();
    let [a, b, c, d] = channel.id.levels();
    let (src, dst) = match direction {
        Direction::Forward => ((a, b), (c, d)),
        Direction::Reverse => ((c, d), (a, b)),
    };
    channel.rate
        * lv[src.0].occupation
        * lv[src.1].occupation
        * lv[dst.0].available(stats)
        * lv[dst.1].available(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{random_state, Statistics};
    use crate::LevelGrid;
    use proptest::prelude::*;

    fn id(a: usize, b: usize, c: usize, d: usize) -> ChannelId {
        ChannelId::new((a, b), (c, d)).unwrap()
    }

    /// O(L^4) scan over ordered index quadruples.
    fn brute_force(lattice: &[u32]) -> Vec<ChannelId> {
        let l = lattice.len();
        let mut out = Vec::new();
        for a in 0..l {
            for b in 0..l {
                for c in 0..l {
                    for d in 0..l {
                        if lattice[a] + lattice[b] != lattice[c] + lattice[d] {
                            continue;
                        }
                        if let Some(id) = ChannelId::new((a, b), (c, d)) {
                            out.push(id);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    #[test]
    fn enumeration_examples() {
        assert!(enumerate_channels(&[0, 1]).is_empty());
        assert_eq!(enumerate_channels(&[0, 1, 2]), vec![id(0, 2, 1, 1)]);
        assert_eq!(
            enumerate_channels(&[0, 1, 2, 3]),
            vec![id(0, 2, 1, 1), id(0, 3, 1, 2), id(1, 3, 2, 2)]
        );
    }

    #[test]
    fn enumeration_matches_brute_force_for_small_lattices() {
        for l in 0..=12u32 {
            let consecutive: Vec<u32> = (0..l).collect();
            assert_eq!(enumerate_channels(&consecutive), brute_force(&consecutive));
            let sparse: Vec<u32> = (0..l).map(|k| k * k % 7 + k).collect();
            assert_eq!(enumerate_channels(&sparse), brute_force(&sparse));
        }
    }

    #[test]
    fn canonical_identity() {
        let c = ChannelId::new((2, 1), (0, 3)).unwrap();
        assert_eq!(c.in_pair, (0, 3));
        assert_eq!(c.out_pair, (1, 2));
        assert!(ChannelId::new((1, 2), (2, 1)).is_none());
    }

    #[test]
    fn zero_constant_kernel() {
        let k = build_kernel(&[0, 1, 2, 3], RateSpec::Constant(0.0)).unwrap();
        assert_eq!(k.channels().len(), 3);
        assert!(k.channels().iter().all(|c| c.rate == 0.0));
    }

    #[test]
    fn random_kernel_is_deterministic_and_in_range() {
        let spec = RateSpec::Random { seed: 7, min: 0.5, max: 1.5 };
        let a = build_kernel(&[0, 1, 2, 3], spec).unwrap();
        let b = build_kernel(&[0, 1, 2, 3], spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.channels().len(), 3);
        assert!(a.channels().iter().all(|c| (0.5..=1.5).contains(&c.rate)));
        let other = build_kernel(&[0, 1, 2, 3], RateSpec::Random { seed: 8, min: 0.5, max: 1.5 }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rejects_bad_rate_specs() {
        assert!(build_kernel(&[0, 1, 2], RateSpec::Constant(-1.0)).is_err());
        assert!(build_kernel(&[0, 1, 2], RateSpec::Random { seed: 0, min: 2.0, max: 1.0 }).is_err());
    }

    #[test]
    fn inverse_collision_symmetry_is_structural() {
        let k = build_kernel(&(0..6).collect::<Vec<_>>(), RateSpec::Random { seed: 3, min: 0.0, max: 1.0 }).unwrap();
        for ch in k.channels() {
            let [a, b, c, d] = ch.id.levels();
            assert_eq!(k.rate((a, b), (c, d)), k.rate((d, c), (b, a)));
            assert_eq!(k.rate((a, b), (c, d)), ch.rate);
        }
        assert_eq!(k.rate((0, 0), (0, 1)), 0.0);
    }

    #[test]
    fn collision_rate_examples() {
        let lattice = [0, 1, 2];
        let grid = LevelGrid::uniform(3, 1.0, 1.0).unwrap();
        let kernel = build_kernel(&lattice, RateSpec::Constant(1.0)).unwrap();
        let ch = kernel.channels()[0]; // (0,2) <-> (1,1)

        let empty_in = grid.state(&[0.0, 0.5, 0.3], Statistics::Fermi).unwrap();
        assert_eq!(collision_rate(&empty_in, &ch, Direction::Forward), 0.0);

        let blocked = grid.state(&[0.4, 1.0, 0.3], Statistics::Fermi).unwrap();
        assert_eq!(collision_rate(&blocked, &ch, Direction::Forward), 0.0);

        // Bose with every relevant occupation 1: 1*1*(1+1)*(1+1)
        let bose = grid.state(&[1.0, 1.0, 1.0], Statistics::Bose).unwrap();
        assert_eq!(collision_rate(&bose, &ch, Direction::Forward), 4.0);
        assert_eq!(collision_rate(&bose, &ch, Direction::Reverse), 4.0);
    }

    #[test]
    fn csv_round_trip() {
        let lattice: Vec<u32> = (0..5).collect();
        let k = build_kernel(&lattice, RateSpec::Random { seed: 11, min: 0.1, max: 2.0 }).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("kappa,lambda,mu,nu,A\n"));
        let back = CollisionKernel::<f64>::read_csv(buf.as_slice(), 5).unwrap();
        assert_eq!(back, k);
        back.check_energy_conservation(&lattice).unwrap();
    }

    #[test]
    fn from_channels_rejects_duplicates_and_out_of_range() {
        let ch = CollisionChannel { id: id(0, 2, 1, 1), rate: 1.0 };
        assert!(CollisionKernel::from_channels(vec![ch, ch], 3).is_err());
        assert!(CollisionKernel::from_channels(vec![ch], 2).is_err());
        let noncanon = CollisionChannel {
            id: ChannelId { in_pair: (1, 1), out_pair: (0, 2) },
            rate: 1.0,
        };
        assert!(CollisionKernel::from_channels(vec![noncanon], 3).is_err());
    }

    proptest! {
        #[test]
        fn rates_nonnegative(seed in any::<u64>(), bose in any::<bool>()) {
            let stats = if bose { Statistics::Bose } else { Statistics::Fermi };
            let grid = LevelGrid::uniform(6, 1.0, 1.5).unwrap();
            let state = random_state(&grid, 3.0, seed, stats).unwrap();
            let k = build_kernel(grid.lattice(), RateSpec::Random { seed, min: 0.0, max: 2.0 }).unwrap();
            for ch in k.channels() {
                prop_assert!(collision_rate(&state, ch, Direction::Forward) >= 0.0);
                prop_assert!(collision_rate(&state, ch, Direction::Reverse) >= 0.0);
            }
        }
    }
}
