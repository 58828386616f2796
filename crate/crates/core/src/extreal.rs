//! Extended reals `R ∪ {+∞}` as a tagged value.
//!
//! Convex functions in this crate take values in `R ∪ {+∞}` (never −∞).
//! Encoding the infinity explicitly instead of relying on IEEE `f64::INFINITY`
//! keeps arithmetic rules fixed by us (`finite + ∞ = ∞`, comparisons total)
//! and prevents infinities from leaking into quadrature weights as NaNs.

use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

pub use ExtReal::{Finite, PosInf};

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, PosInf)
    }

    /// The finite value, or `None` for +∞.
    pub fn finite(self) -> Option<f64> {
        match self {
            Finite(v) => Some(v),
            PosInf => None,
        }
    }

    /// `e^{-self}`: the natural weight of a convex-function value.
    /// Maps +∞ to 0, so off-domain points contribute nothing to integrals.
    pub fn exp_neg(self) -> f64 {
        match self {
            Finite(v) => (-v).exp(),
            PosInf => 0.0,
        }
    }

    /// `-self` as a log-domain quantity for log-sum-exp accumulation:
    /// +∞ becomes −∞ (a zero contribution).
    pub fn neg_log_weight(self) -> f64 {
        match self {
            Finite(v) => -v,
            PosInf => f64::NEG_INFINITY,
        }
    }

    /// Lift an IEEE float: `+inf` (and anything above the overflow
    /// threshold) becomes the tagged infinity. NaN is a caller bug.
    pub fn from_f64(v: f64) -> ExtReal {
        debug_assert!(!v.is_nan(), "NaN is not an extended real");
        if v == f64::INFINITY {
            PosInf
        } else {
            Finite(v)
        }
    }

    /// Collapse to IEEE for display / serialization.
    pub fn to_f64(self) -> f64 {
        match self {
            Finite(v) => v,
            PosInf => f64::INFINITY,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (Finite(a), Finite(b)) => Finite(a + b),
            _ => PosInf,
        }
    }
}

impl std::ops::Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        match self {
            Finite(a) => Finite(a + rhs),
            PosInf => PosInf,
        }
    }
}

impl std::ops::Mul<ExtReal> for f64 {
    type Output = ExtReal;
    /// Positive scalar times extended real (scaling a convex value).
    fn mul(self, rhs: ExtReal) -> ExtReal {
        debug_assert!(self > 0.0);
        match rhs {
            Finite(v) => Finite(self * v),
            PosInf => PosInf,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &ExtReal) -> Option<Ordering> {
        match (self, other) {
            (Finite(a), Finite(b)) => a.partial_cmp(b),
            (Finite(_), PosInf) => Some(Ordering::Less),
            (PosInf, Finite(_)) => Some(Ordering::Greater),
            (PosInf, PosInf) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finite(v) => write!(f, "{v}"),
            PosInf => write!(f, "inf"),
        }
    }
}

/// Numerically stable `log(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        b
    } else if b == f64::NEG_INFINITY {
        a
    } else if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Streaming log-sum-exp accumulator with a running maximum.
///
/// Accumulates `log Σ_i e^{t_i}` over a stream of log-domain terms without
/// materializing the terms; rescales on the fly whenever a new maximum
/// arrives so intermediate sums never overflow.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64, // Σ e^{t_i - max}
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, term: f64) {
        if term == f64::NEG_INFINITY {
            return;
        }
        if term <= self.max {
            self.sum += (term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - term).exp() + 1.0;
            self.max = term;
        }
    }

    /// `log Σ e^{t_i}`; −∞ if nothing (finite) was added.
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_absorbs_infinity() {
        assert_eq!(Finite(1.0) + Finite(2.0), Finite(3.0));
        assert_eq!(Finite(1.0) + PosInf, PosInf);
        assert_eq!(PosInf + PosInf, PosInf);
        assert_eq!(2.0 * PosInf, PosInf);
        assert_eq!(2.0 * Finite(3.0), Finite(6.0));
    }

    #[test]
    fn order_is_total() {
        assert!(Finite(1e300) < PosInf);
        assert!(PosInf <= PosInf);
        assert!(Finite(-1.0) < Finite(0.0));
    }

    #[test]
    fn weights() {
        assert_eq!(PosInf.exp_neg(), 0.0);
        assert!((Finite(0.0).exp_neg() - 1.0).abs() < 1e-15);
        assert_eq!(PosInf.neg_log_weight(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let terms = [0.3, -1.2, 4.7, 4.7001, -300.0, 2.0];
        let mut acc = LogSumExp::new();
        for &t in &terms {
            acc.add(t);
        }
        let direct: f64 = terms.iter().map(|t| t.exp()).sum();
        assert!((acc.value() - direct.ln()).abs() < 1e-13);
    }

    #[test]
    fn log_sum_exp_huge_terms() {
        let mut acc = LogSumExp::new();
        acc.add(1000.0);
        acc.add(1000.0 + 2.0_f64.ln());
        // log(e^1000 + 2 e^1000) = 1000 + log 3
        assert!((acc.value() - (1000.0 + 3.0_f64.ln())).abs() < 1e-12);
        assert_eq!(LogSumExp::new().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_add_exp_extremes() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_add_exp(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
