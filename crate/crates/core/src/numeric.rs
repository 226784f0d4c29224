//! Small numeric building blocks: bracketed bisection, streaming log-sum-exp,
//! and a signed log-magnitude real for quantities far below `f64::MIN_POSITIVE`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` of reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan());
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersects(&self, other: &Bracket) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Interval sum.
    pub fn add(&self, other: &Bracket) -> Bracket {
        Bracket::new(self.lo + other.lo, self.hi + other.hi)
    }

    pub fn shift(&self, c: f64) -> Bracket {
        Bracket::new(self.lo + c, self.hi + c)
    }

    /// Elementwise minimum of two intervals.
    pub fn min(&self, other: &Bracket) -> Bracket {
        Bracket::new(self.lo.min(other.lo), self.hi.min(other.hi))
    }
}

/// Result of a bisection: the final sign-change interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

impl RootBracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bisection for a continuous function with a sign change on `[lo, hi]`.
///
/// Stops when the interval is no wider than `tol` or `max_iter` halvings were
/// done. The returned interval always brackets the sign change.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<RootBracket>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo <= hi) {
        return Err(Error::Domain(format!("bisection interval [{lo}, {hi}] is empty")));
    }
    let f_lo = f(lo)?;
    if f_lo == 0.0 {
        return Ok(RootBracket { lo, hi: lo, iterations: 0 });
    }
    let f_hi = f(hi)?;
    if f_hi == 0.0 {
        return Ok(RootBracket { lo: hi, hi, iterations: 0 });
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NonBracketing(format!(
            "f({lo}) = {f_lo} and f({hi}) = {f_hi} have the same sign"
        )));
    }
    let lo_positive = f_lo > 0.0;
    let (mut a, mut b) = (lo, hi);
    let mut iterations = 0;
    while b - a > tol && iterations < max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        iterations += 1;
        if fm.is_nan() {
            return Err(Error::NoConvergence(format!("function is NaN at {m}")));
        }
        if fm == 0.0 {
            return Ok(RootBracket { lo: m, hi: m, iterations });
        }
        if (fm > 0.0) == lo_positive {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(RootBracket { lo: a, hi: b, iterations })
}

/// Streaming `log(sum(exp(v_i)))` that never overflows.
///
/// Terms are folded in the order they are added, so a fixed insertion order
/// gives bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub const fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp();
        }
    }

    /// Adds `count` copies of `v`.
    pub fn add_many(&mut self, v: f64, count: f64) {
        if count <= 0.0 {
            return;
        }
        self.merge(&LogSumExp { max: v, scaled: count });
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max > self.max {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        } else {
            self.scaled += other.scaled * (other.max - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(exp(a) - exp(b))` for `a >= b`; `-inf` when they are equal.
#[inline]
fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// Signed real stored as `sign * exp(ln_abs)`.
///
/// Used for positions and distances at scales like `2^-200` where plain
/// `f64` arithmetic on absolute coordinates has no resolution left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogReal {
    sign: i8,
    ln_abs: f64,
}

impl LogReal {
    pub const ZERO: LogReal = LogReal {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn from_parts(sign: i8, ln_abs: f64) -> Self {
        if sign == 0 || ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self {
                sign: sign.signum(),
                ln_abs,
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: if x > 0.0 { 1 } else { -1 },
                ln_abs: x.abs().ln(),
            }
        }
    }

    /// Positive number with the given natural log.
    pub fn from_ln(ln_abs: f64) -> Self {
        Self::from_parts(1, ln_abs)
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn ln_abs(&self) -> f64 {
        self.ln_abs
    }

    pub fn to_f64(&self) -> f64 {
        f64::from(self.sign) * self.ln_abs.exp()
    }

    pub fn neg(&self) -> Self {
        Self {
            sign: -self.sign,
            ln_abs: self.ln_abs,
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            sign: self.sign.abs(),
            ln_abs: self.ln_abs,
        }
    }

    pub fn add(&self, other: &LogReal) -> LogReal {
        if self.sign == 0 {
            return *other;
        }
        if other.sign == 0 {
            return *self;
        }
        if self.sign == other.sign {
            return LogReal::from_parts(self.sign, log_add_exp(self.ln_abs, other.ln_abs));
        }
        match self.ln_abs.partial_cmp(&other.ln_abs) {
            Some(Ordering::Greater) => {
                LogReal::from_parts(self.sign, log_sub_exp(self.ln_abs, other.ln_abs))
            }
            Some(Ordering::Less) => {
                LogReal::from_parts(other.sign, log_sub_exp(other.ln_abs, self.ln_abs))
            }
            _ => LogReal::ZERO,
        }
    }

    pub fn sub(&self, other: &LogReal) -> LogReal {
        self.add(&other.neg())
    }
}

impl PartialOrd for LogReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Some(Ordering::Equal),
                1 => self.ln_abs.partial_cmp(&other.ln_abs),
                _ => other.ln_abs.partial_cmp(&self.ln_abs),
            },
            ord => Some(ord),
        }
    }
}
