//! The beta-transformation, greedy digit expansions, the infinite expansion of
//! one with its Parry classification, and the `beta_N` approximants.

use std::fmt;
use std::str::FromStr;

use log::warn;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::bisect;

/// Default snap-to-integer tolerance for `beta * x` landing on a digit boundary.
pub const DEFAULT_SNAP_TOL: f64 = 1e-14;

/// Bases are restricted so that digits fit in a byte.
pub const MAX_BETA: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParryKind {
    /// The greedy expansion of one terminates.
    SimpleParry,
    NonSimple,
}

impl fmt::Display for ParryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParryKind::SimpleParry => f.write_str("SimpleParry"),
            ParryKind::NonSimple => f.write_str("NonSimple"),
        }
    }
}

/// How a base was specified on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BetaSpec {
    Golden,
    Integer(u32),
    Decimal(f64),
}

impl BetaSpec {
    pub fn value(&self) -> f64 {
        match self {
            BetaSpec::Golden => golden_ratio(),
            BetaSpec::Integer(k) => f64::from(*k),
            BetaSpec::Decimal(x) => *x,
        }
    }
}

impl FromStr for BetaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "golden" | "phi" => return Ok(BetaSpec::Golden),
            _ => {}
        }
        if let Ok(k) = t.parse::<u32>() {
            return Ok(BetaSpec::Integer(k));
        }
        t.parse::<f64>()
            .map(BetaSpec::Decimal)
            .map_err(|_| Error::Config(format!("beta must be a decimal, an integer or \"golden\", got {s:?}")))
    }
}

impl fmt::Display for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSpec::Golden => f.write_str("golden"),
            BetaSpec::Integer(k) => write!(f, "{k}"),
            BetaSpec::Decimal(x) => write!(f, "{x}"),
        }
    }
}

pub fn golden_ratio() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

/// Arithmetic options for a [`BetaSystem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaOptions {
    /// Error instead of warn when a digit past the precision cap is requested.
    pub strict: bool,
    pub snap_tol: f64,
}

impl Default for BetaOptions {
    fn default() -> Self {
        Self {
            strict: false,
            snap_tol: DEFAULT_SNAP_TOL,
        }
    }
}

#[derive(Debug)]
struct LazyDigits {
    digits: Vec<u8>,
    tail: f64,
}

/// A base `beta > 1` together with the infinite expansion of one.
///
/// Immutable apart from the lazily extended expansion of one for non-simple
/// bases, which sits behind a lock so a shared system can be used from many
/// threads.
#[derive(Debug)]
pub struct BetaSystem {
    beta: f64,
    ln_beta: f64,
    max_digit: u8,
    kind: ParryKind,
    /// Repeating block of the infinite expansion for simple Parry numbers.
    period: Vec<u8>,
    lazy: RwLock<LazyDigits>,
    precision_cap: usize,
    options: BetaOptions,
}

/// First `n` digits of a point together with `T^n x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitOrbit {
    pub digits: Vec<u8>,
    pub tail: f64,
    pub reliable_upto: usize,
}

/// Largest digit index trusted under binary64: `floor((52 ln 2 - ln 1000) / ln beta)`.
pub fn precision_cap_for(beta: f64) -> usize {
    let cap = ((52.0 * std::f64::consts::LN_2 - 1000f64.ln()) / beta.ln()).floor();
    cap.max(1.0) as usize
}

impl BetaSystem {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_options(beta, BetaOptions::default())
    }

    pub fn golden() -> Self {
        Self::new(golden_ratio()).expect("golden ratio is a valid base")
    }

    pub fn from_spec(spec: &BetaSpec, options: BetaOptions) -> Result<Self> {
        Self::with_options(spec.value(), options)
    }

    pub fn with_options(beta: f64, options: BetaOptions) -> Result<Self> {
        validate_beta(beta)?;
        let precision_cap = precision_cap_for(beta);
        // Iterate the greedy algorithm on x = 1.
        let first_limit = beta.floor() as u8;
        let mut raw = Vec::new();
        let mut y = beta;
        let mut limit = first_limit;
        let max_digit = max_digit_for(beta);
        loop {
            let (d, t) = greedy_step(y, limit, options.snap_tol);
            raw.push(d);
            if t == 0.0 {
                return Ok(Self::from_raw_terminating(beta, raw, precision_cap, options));
            }
            if raw.len() >= precision_cap {
                return Ok(Self {
                    beta,
                    ln_beta: beta.ln(),
                    max_digit,
                    kind: ParryKind::NonSimple,
                    period: Vec::new(),
                    lazy: RwLock::new(LazyDigits { digits: raw, tail: t }),
                    precision_cap,
                    options,
                });
            }
            y = beta * t;
            limit = max_digit;
        }
    }

    /// Builds the system whose greedy expansion of one is the finite word `raw`.
    ///
    /// Used for the `beta_N` approximants, where the expansion is known exactly
    /// and float detection of termination would be unreliable.
    pub fn from_terminating_expansion(beta: f64, raw: Vec<u8>, options: BetaOptions) -> Result<Self> {
        validate_beta(beta)?;
        if raw.last().copied().unwrap_or(0) == 0 {
            return Err(Error::Domain("terminating expansion must end with a non-zero digit".into()));
        }
        Ok(Self::from_raw_terminating(beta, raw, precision_cap_for(beta), options))
    }

    fn from_raw_terminating(beta: f64, raw: Vec<u8>, precision_cap: usize, options: BetaOptions) -> Self {
        let mut period = raw;
        if let Some(last) = period.last_mut() {
            *last -= 1;
        }
        Self {
            beta,
            ln_beta: beta.ln(),
            max_digit: max_digit_for(beta),
            kind: ParryKind::SimpleParry,
            period,
            lazy: RwLock::new(LazyDigits { digits: Vec::new(), tail: 0.0 }),
            precision_cap,
            options,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ln_beta(&self) -> f64 {
        self.ln_beta
    }

    /// `floor(beta)`, or `beta - 1` for integer bases.
    pub fn max_digit(&self) -> u8 {
        self.max_digit
    }

    pub fn parry_kind(&self) -> ParryKind {
        self.kind
    }

    pub fn precision_cap(&self) -> usize {
        self.precision_cap
    }

    pub fn options(&self) -> BetaOptions {
        self.options
    }

    pub fn is_strict(&self) -> bool {
        self.options.strict
    }

    /// Period of the infinite expansion of one, when `beta` is a simple Parry number.
    pub fn period(&self) -> Option<usize> {
        match self.kind {
            ParryKind::SimpleParry => Some(self.period.len()),
            ParryKind::NonSimple => None,
        }
    }

    /// Checks a digit index against the precision cap: an error in strict
    /// mode, a warning otherwise.
    pub fn check_precision(&self, index: usize) -> Result<()> {
        if index > self.precision_cap {
            if self.options.strict {
                return Err(Error::Precision {
                    index,
                    cap: self.precision_cap,
                    beta: self.beta,
                });
            }
            warn!(
                "digit index {index} exceeds the precision cap {} for beta = {}; results past the cap are not trusted",
                self.precision_cap, self.beta
            );
        }
        Ok(())
    }

    /// The first `n` digits of the infinite expansion of one.
    ///
    /// Never fails: for non-simple bases, digits past the precision cap are
    /// computed by continuing the float iteration. Callers that care about
    /// reliability go through [`BetaSystem::expansion_of_one`].
    pub fn one_prefix(&self, n: usize) -> Vec<u8> {
        match self.kind {
            ParryKind::SimpleParry => self.period.iter().copied().cycle().take(n).collect(),
            ParryKind::NonSimple => {
                {
                    let lazy = self.lazy.read();
                    if lazy.digits.len() >= n {
                        return lazy.digits[..n].to_vec();
                    }
                }
                let mut lazy = self.lazy.write();
                if lazy.digits.len() < n {
                    log::debug!(
                        "extending the expansion of one for beta = {} to {n} digits, past the precision cap {}",
                        self.beta, self.precision_cap
                    );
                    while lazy.digits.len() < n {
                        let (d, t) = greedy_step(self.beta * lazy.tail, self.max_digit, self.options.snap_tol);
                        lazy.digits.push(d);
                        lazy.tail = t;
                    }
                }
                lazy.digits[..n].to_vec()
            }
        }
    }

    /// First `n` digits of the infinite expansion of one, honoring strict mode.
    pub fn expansion_of_one(&self, n: usize) -> Result<Vec<u8>> {
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        if self.kind == ParryKind::NonSimple {
            self.check_precision(n)?;
        }
        Ok(self.one_prefix(n))
    }

    /// One greedy step `(digit, T x)` without domain checks.
    #[inline]
    pub fn step(&self, x: f64) -> (u8, f64) {
        greedy_step(self.beta * x, self.max_digit, self.options.snap_tol)
    }

    /// `T(x) = beta x - floor(beta x)` on `[0, 1)`.
    pub fn t_map(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.step(x).1)
    }

    /// The first `n` greedy digits of `x` and the remainder `T^n x`.
    pub fn expand(&self, x: f64, n: usize) -> Result<DigitOrbit> {
        check_unit(x)?;
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        self.check_precision(n)?;
        let mut digits = Vec::with_capacity(n);
        let mut t = x;
        for _ in 0..n {
            let (d, next) = self.step(t);
            digits.push(d);
            t = next;
        }
        Ok(DigitOrbit {
            digits,
            tail: t,
            reliable_upto: n.min(self.precision_cap),
        })
    }

    /// Greedy digits of a target point in `(0, 1]`; the point `1` uses the
    /// infinite expansion of one. No precision check: callers treat the digit
    /// string itself as the definition of the point.
    pub fn target_digits(&self, x: f64, n: usize) -> Result<Vec<u8>> {
        if !(x > 0.0 && x <= 1.0) && x != 0.0 {
            return Err(Error::Domain(format!("target point {x} is outside [0, 1]")));
        }
        if x == 1.0 {
            return Ok(self.one_prefix(n));
        }
        let mut digits = Vec::with_capacity(n);
        let mut t = x;
        for _ in 0..n {
            let (d, next) = self.step(t);
            digits.push(d);
            t = next;
        }
        Ok(digits)
    }

    /// `beta_N`: the root in `(1, beta]` of `1 = sum_{i<=N} eps*_i x^-i`.
    ///
    /// When `beta` is a simple Parry number, `N` is a multiple of the period and
    /// `eps*_N = 0`, the first `N` digits with the last one raised by one are a
    /// terminating expansion of one for `beta` itself, so `beta_N = beta`.
    pub fn beta_n_approx(&self, n: usize) -> Result<f64> {
        if self.closes_period(n) {
            return Ok(self.beta);
        }
        let eps = self.approximant_digits(n)?;
        let h = |x: f64| -> f64 {
            // Horner in 1/x.
            let inv = 1.0 / x;
            let mut acc = 0.0;
            for &d in eps.iter().rev() {
                acc = (acc + f64::from(d)) * inv;
            }
            acc - 1.0
        };
        if h(self.beta) >= 0.0 {
            return Ok(self.beta);
        }
        let root = bisect(|x| Ok(h(x)), 1.0, self.beta, 1e-15, 200)?;
        let value = root.mid();
        if !(root.hi - root.lo <= 1e-12) {
            return Err(Error::NoConvergence(format!("beta_{n} bracket [{}, {}]", root.lo, root.hi)));
        }
        Ok(value)
    }

    /// The approximating subsystem `beta_N`, whose expansion of one is
    /// `(eps*_1, ..., eps*_{N-1}, eps*_N - 1)^inf`.
    pub fn approximant(&self, n: usize) -> Result<BetaSystem> {
        if self.closes_period(n) {
            return Ok(self.clone());
        }
        let raw = self.approximant_digits(n)?;
        let beta_n = self.beta_n_approx(n)?;
        BetaSystem::from_terminating_expansion(beta_n, raw, self.options)
    }

    fn closes_period(&self, n: usize) -> bool {
        match self.period() {
            Some(p) => n > 0 && n % p == 0 && self.period[p - 1] == 0,
            None => false,
        }
    }

    fn approximant_digits(&self, n: usize) -> Result<Vec<u8>> {
        if n == 0 {
            return Err(Error::InvalidApproximant {
                n,
                reason: "N must be at least 1".into(),
            });
        }
        let eps = self.one_prefix(n);
        if eps[n - 1] == 0 {
            return Err(Error::InvalidApproximant {
                n,
                reason: format!("eps*_{n}(beta) = 0; the approximant needs a non-zero last digit"),
            });
        }
        if eps.iter().map(|&d| u32::from(d)).sum::<u32>() <= 1 {
            return Err(Error::InvalidApproximant {
                n,
                reason: "the digit sum is 1, so beta_N would be 1".into(),
            });
        }
        Ok(eps)
    }

    /// `sum_i w_i beta^-i` evaluated by Horner from the right.
    pub fn value_of(&self, digits: &[u8]) -> f64 {
        let inv = 1.0 / self.beta;
        digits
            .iter()
            .rev()
            .fold(0.0, |acc, &d| (acc + f64::from(d)) * inv)
    }
}

impl Clone for BetaSystem {
    fn clone(&self) -> Self {
        let lazy = self.lazy.read();
        Self {
            beta: self.beta,
            ln_beta: self.ln_beta,
            max_digit: self.max_digit,
            kind: self.kind,
            period: self.period.clone(),
            lazy: RwLock::new(LazyDigits {
                digits: lazy.digits.clone(),
                tail: lazy.tail,
            }),
            precision_cap: self.precision_cap,
            options: self.options,
        }
    }
}

/// Free-function form: the first `n` digits of the infinite expansion of one
/// and the Parry classification of `beta`.
pub fn expansion_of_one(beta: f64, n: usize) -> Result<(Vec<u8>, ParryKind)> {
    let sys = BetaSystem::new(beta)?;
    Ok((sys.expansion_of_one(n)?, sys.parry_kind()))
}

fn validate_beta(beta: f64) -> Result<()> {
    if !(beta > 1.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be a finite real > 1, got {beta}")));
    }
    if beta > MAX_BETA {
        return Err(Error::Domain(format!("beta must not exceed {MAX_BETA}, got {beta}")));
    }
    Ok(())
}

fn max_digit_for(beta: f64) -> u8 {
    let f = beta.floor();
    if f == beta {
        (f - 1.0) as u8
    } else {
        f as u8
    }
}

fn check_unit(x: f64) -> Result<()> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} is outside [0, 1)")));
    }
    Ok(())
}

/// Digit and fractional part of `y = beta x`. When `y` is within `snap_tol`
/// of an integer `k` in `1..=limit`, the digit is `k` and the remainder is 0.
#[inline]
fn greedy_step(y: f64, limit: u8, snap_tol: f64) -> (u8, f64) {
    let k = y.round();
    if k >= 1.0 && k <= f64::from(limit) && (y - k).abs() <= snap_tol {
        return (k as u8, 0.0);
    }
    let f = y.floor().clamp(0.0, f64::from(limit));
    let t = y - f;
    (f as u8, t.clamp(0.0, 1.0 - f64::EPSILON / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_map_examples() {
        let two = BetaSystem::new(2.0).unwrap();
        assert_eq!(two.t_map(0.0).unwrap(), 0.0);
        assert_eq!(two.t_map(0.625).unwrap(), 0.25);
        let g = BetaSystem::golden();
        assert_eq!(g.t_map(1.0 / g.beta()).unwrap(), 0.0);
        assert!(matches!(two.t_map(1.0), Err(Error::Domain(_))));
        assert!(matches!(two.t_map(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn expand_examples() {
        let two = BetaSystem::new(2.0).unwrap();
        let o = two.expand(0.625, 3).unwrap();
        assert_eq!(o.digits, vec![1, 0, 1]);
        assert_eq!(o.tail, 0.0);

        let g = BetaSystem::golden();
        let o = g.expand(1.0 / g.beta(), 3).unwrap();
        assert_eq!(o.digits, vec![1, 0, 0]);
        assert_eq!(o.tail, 0.0);

        // floor(1.35) = 1, T = 0.35, floor(0.525) = 0
        let b = BetaSystem::new(1.5).unwrap();
        let o = b.expand(0.9, 2).unwrap();
        assert_eq!(o.digits, vec![1, 0]);
        assert!((o.tail - 0.525).abs() < 1e-15);
    }

    #[test]
    fn expansion_of_one_examples() {
        assert_eq!(expansion_of_one(2.0, 4).unwrap(), (vec![1, 1, 1, 1], ParryKind::SimpleParry));
        assert_eq!(
            expansion_of_one(golden_ratio(), 4).unwrap(),
            (vec![1, 0, 1, 0], ParryKind::SimpleParry)
        );
        assert_eq!(expansion_of_one(1.5, 5).unwrap(), (vec![1, 0, 1, 0, 0], ParryKind::NonSimple));
        assert_eq!(expansion_of_one(3.0, 3).unwrap().0, vec![2, 2, 2]);
    }

    #[test]
    fn max_digit_and_cap() {
        assert_eq!(BetaSystem::new(2.0).unwrap().max_digit(), 1);
        assert_eq!(BetaSystem::new(2.7).unwrap().max_digit(), 2);
        assert_eq!(BetaSystem::new(2.0).unwrap().precision_cap(), 42);
    }

    #[test]
    fn strict_mode_rejects_past_cap() {
        let opts = BetaOptions { strict: true, ..Default::default() };
        let sys = BetaSystem::with_options(2.0, opts).unwrap();
        assert!(matches!(sys.expand(0.3, 43), Err(Error::Precision { .. })));
        let lax = BetaSystem::new(2.0).unwrap();
        let o = lax.expand(0.3, 50).unwrap();
        assert_eq!(o.reliable_upto, 42);
        let ns = BetaSystem::with_options(1.5, opts).unwrap();
        assert!(ns.expansion_of_one(ns.precision_cap() + 1).is_err());
    }

    #[test]
    fn beta_n_examples() {
        let two = BetaSystem::new(2.0).unwrap();
        assert!((two.beta_n_approx(2).unwrap() - golden_ratio()).abs() < 1e-12);
        assert!((two.beta_n_approx(4).unwrap() - 1.9275619754829254).abs() < 1e-10);
        let g = BetaSystem::golden();
        assert!((g.beta_n_approx(2).unwrap() - golden_ratio()).abs() < 1e-12);
        assert!((g.beta_n_approx(4).unwrap() - golden_ratio()).abs() < 1e-12);
        // 1 = 1/x + 1/x^3
        let b3 = g.beta_n_approx(3).unwrap();
        assert!((1.0 / b3 + 1.0 / b3.powi(3) - 1.0).abs() < 1e-12);
        let b = BetaSystem::new(1.5).unwrap();
        assert!(matches!(b.beta_n_approx(2), Err(Error::InvalidApproximant { .. })));
        // N = 1 for beta = 2 would give beta_1 = 1
        assert!(matches!(two.beta_n_approx(1), Err(Error::InvalidApproximant { .. })));
    }

    #[test]
    fn beta_n_monotone_convergence() {
        let b = BetaSystem::new(1.8).unwrap();
        let eps = b.one_prefix(20);
        let values: Vec<f64> = (1..=20)
            .filter(|&n| eps[n - 1] >= 1)
            .filter_map(|n| b.beta_n_approx(n).ok())
            .collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        // eps*_20(1.8) = 0, so the last admissible N up to 20 is used
        let last = (1..=20).rev().find(|&n| eps[n - 1] >= 1).unwrap();
        assert!((b.beta() - b.beta_n_approx(last).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn approximant_expansion_is_periodic_rewrite() {
        let b = BetaSystem::new(1.8).unwrap();
        let eps = b.one_prefix(10);
        let n = (2..10).find(|&n| eps[n - 1] >= 1).unwrap();
        let sub = b.approximant(n).unwrap();
        assert_eq!(sub.parry_kind(), ParryKind::SimpleParry);
        let mut block = eps[..n].to_vec();
        block[n - 1] -= 1;
        let want: Vec<u8> = block.iter().copied().cycle().take(3 * n).collect();
        assert_eq!(sub.one_prefix(3 * n), want);
        assert!(sub.beta() <= b.beta());
    }

    #[test]
    fn beta_spec_parsing() {
        assert_eq!("golden".parse::<BetaSpec>().unwrap(), BetaSpec::Golden);
        assert_eq!("2".parse::<BetaSpec>().unwrap(), BetaSpec::Integer(2));
        assert_eq!("1.5".parse::<BetaSpec>().unwrap(), BetaSpec::Decimal(1.5));
        assert!("pi".parse::<BetaSpec>().is_err());
        assert!(BetaSystem::new(1.0).is_err());
        assert!(BetaSystem::new(f64::NAN).is_err());
    }
}
