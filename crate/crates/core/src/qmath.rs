//! q-deformed logarithm and exponential, and the q-algebra built on them.
//!
//! Conventions:
//!
//! * `ln_q(x) = (x^(1-q) - 1) / (1 - q)` and `exp_q(x) = [1 + (1-q) x]^(1/(1-q))`,
//!   so that the two are mutual inverses on the valid branch.
//! * Where the base `1 + (1-q) x` of `exp_q` is nonpositive the result is `0`
//!   for `q < 1` (cutoff) and `+inf` for `q > 1` (divergence).
//! * `|q - 1| < 1e-12` selects the exact classical branch (`ln`, `exp`, `*`, `-`).
//!
//! Powers are evaluated as `expm1`/`ln_1p` of scaled logarithms, which keeps
//! full relative accuracy as `q` approaches 1 from either side.

use crate::error::{domain, invalid, Result};
use crate::scalar::Scalar;

/// Distance from `q = 1` below which the classical branch is used.
pub const CLASSICAL_THRESHOLD: f64 = 1e-12;

/// The entropic index `q`.
///
/// Regular construction admits `0 <= q <= 2`. [`QIndex::exploratory`]
/// admits any finite value; it exists for the positivity scanner, which
/// probes outside the admissible window on purpose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QIndex<T> {
    q: T,
    exploratory: bool,
}

impl<T: Scalar> QIndex<T> {
    pub fn new(q: T) -> Result<Self> {
        if !q.is_finite() {
            return Err(invalid("q", format!("q must be finite, got {q}")));
        }
        if q < T::zero() || q > T::two() {
            return Err(invalid(
                "q",
                format!("q = {q} lies outside the admissible interval [0, 2]"),
            ));
        }
        Ok(Self {
            q,
            exploratory: false,
        })
    }

    pub fn exploratory(q: T) -> Result<Self> {
        if !q.is_finite() {
            return Err(invalid("q", format!("q must be finite, got {q}")));
        }
        Ok(Self {
            q,
            exploratory: true,
        })
    }

    pub fn classical() -> Self {
        Self {
            q: T::one(),
            exploratory: false,
        }
    }

    #[inline]
    pub fn value(self) -> T {
        self.q
    }

    /// The dual index `q* = 2 - q`; always recomputed.
    #[inline]
    pub fn q_star(self) -> T {
        T::two() - self.q
    }

    /// The index at `2 - q`, carrying over the exploratory flag.
    #[inline]
    pub fn dual(self) -> Self {
        Self {
            q: self.q_star(),
            exploratory: self.exploratory,
        }
    }

    #[inline]
    pub fn is_exploratory(self) -> bool {
        self.exploratory
    }

    #[inline]
    pub fn is_classical(self) -> bool {
        (self.q - T::one()).abs() < T::lit(CLASSICAL_THRESHOLD)
    }

    /// `1 - q`.
    #[inline]
    pub(crate) fn deformation(self) -> T {
        T::one() - self.q
    }
}

fn check_positive<T: Scalar>(name: &str, x: T) -> Result<()> {
    if !x.is_finite() {
        return Err(domain(format!("{name} must be finite, got {x}")));
    }
    if x <= T::zero() {
        return Err(domain(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// q-logarithm. Strictly increasing in `x`; `ln_q(1) = 0` for every `q`.
pub fn ln_q<T: Scalar>(x: T, q: QIndex<T>) -> Result<T> {
    check_positive("ln_q argument", x)?;
    Ok(ln_q_unchecked(x, q))
}

#[inline]
pub(crate) fn ln_q_unchecked<T: Scalar>(x: T, q: QIndex<T>) -> T {
    if q.is_classical() {
        return x.ln();
    }
    let a = q.deformation();
    (a * x.ln()).exp_m1() / a
}

/// q-exponential with the cutoff/divergence convention described in the
/// module docs. Inverse of [`ln_q`] wherever `1 + (1-q) x > 0`.
pub fn exp_q<T: Scalar>(x: T, q: QIndex<T>) -> Result<T> {
    if !x.is_finite() {
        return Err(domain(format!("exp_q argument must be finite, got {x}")));
    }
    Ok(exp_q_unchecked(x, q))
}

#[inline]
pub(crate) fn exp_q_unchecked<T: Scalar>(x: T, q: QIndex<T>) -> T {
    if q.is_classical() {
        return x.exp();
    }
    let a = q.deformation();
    let ax = a * x;
    if T::one() + ax <= T::zero() {
        return if a > T::zero() {
            T::zero()
        } else {
            T::infinity()
        };
    }
    (ax.ln_1p() / a).exp()
}

/// `exp_q(x) - 1` without cancellation near `x = 0`. Follows the same
/// cutoff/divergence convention as [`exp_q`].
pub(crate) fn exp_q_m1_unchecked<T: Scalar>(x: T, q: QIndex<T>) -> T {
    if q.is_classical() {
        return x.exp_m1();
    }
    let a = q.deformation();
    let ax = a * x;
    if T::one() + ax <= T::zero() {
        return if a > T::zero() {
            -T::one()
        } else {
            T::infinity()
        };
    }
    (ax.ln_1p() / a).exp_m1()
}

/// q-product `[x^(1-q) + y^(1-q) - 1]^(1/(1-q))`, zero where the bracket is
/// nonpositive. `ln_q` maps it to an ordinary sum.
pub fn q_product<T: Scalar>(x: T, y: T, q: QIndex<T>) -> Result<T> {
    check_positive("q_product x", x)?;
    check_positive("q_product y", y)?;
    if q.is_classical() {
        return Ok(x * y);
    }
    let a = q.deformation();
    // x^a + y^a - 1 = 1 + (x^a - 1) + (y^a - 1), kept in expm1 form.
    let bracket_m1 = (a * x.ln()).exp_m1() + (a * y.ln()).exp_m1();
    if T::one() + bracket_m1 <= T::zero() {
        return Ok(T::zero());
    }
    Ok((bracket_m1.ln_1p() / a).exp())
}

/// q-difference `(x - y) / (1 + (1-q) y)`.
///
/// Only an exactly vanishing denominator is rejected; near-singular ones are
/// left to IEEE arithmetic.
pub fn q_difference<T: Scalar>(x: T, y: T, q: QIndex<T>) -> Result<T> {
    if !x.is_finite() || !y.is_finite() {
        return Err(domain("q_difference arguments must be finite"));
    }
    if q.is_classical() {
        return Ok(x - y);
    }
    let den = T::one() + q.deformation() * y;
    if den == T::zero() {
        return Err(domain(format!(
            "q_difference denominator vanishes at y = {y}, q = {}",
            q.value()
        )));
    }
    Ok((x - y) / den)
}

/// `f^(q-1) ln_q(f)`, evaluated in the closed form `(1 - f^(q-1)) / (1 - q)`,
/// which equals `ln_{2-q}(f)`.
pub fn weighted_qlog<T: Scalar>(f: T, q: QIndex<T>) -> Result<T> {
    check_positive("weighted_qlog argument", f)?;
    if q.is_classical() {
        return Ok(f.ln());
    }
    let a = q.deformation();
    Ok(-(-a * f.ln()).exp_m1() / a)
}
