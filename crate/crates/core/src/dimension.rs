//! The two pressure equations, their roots `s1`, `s2`, `s0 = min(s1, s2)`,
//! and a numerical probe of the series characterization of `s0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, log_add_exp, Bracket, LogSumExp};
use crate::potentials::TargetSpec;
use crate::pressure::{
    default_n, phi1_with, phi2, pressure_estimate, renyi_overhead, traverse, PhiValue,
    PressureEstimate, DEFAULT_WORD_BUDGET,
};
use crate::symbolic::count_words;

/// Word budget used to pick the default pressure order.
pub const DEFAULT_PRESSURE_WORDS: f64 = 1e7;

/// Word budget used to pick the default series order.
pub const DEFAULT_SERIES_WORDS: f64 = 1e6;

const MAX_BISECTIONS: usize = 200;

/// Outcome of one root solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSolve {
    /// Rigorous interval for the root under the pressure bracketing model.
    pub bracket: Bracket,
    /// Midpoint of the final bisection interval on the finite-`n` value.
    pub point: f64,
    pub iterations: usize,
    /// Lower bound on `|d phi / d s|` used for the inflation.
    pub slope_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionResult {
    pub s1: RootSolve,
    pub s2: RootSolve,
    /// Elementwise minimum of the `s1` and `s2` brackets, clipped to `[0, 2]`.
    pub s0_bracket: Bracket,
    pub n_used: usize,
    pub iterations: usize,
    pub series_diagnostics: Option<Vec<SeriesRow>>,
}

impl DimensionResult {
    pub fn s1_bracket(&self) -> Bracket {
        self.s1.bracket
    }

    pub fn s2_bracket(&self) -> Bracket {
        self.s2.bracket
    }

    pub fn s0_point(&self) -> f64 {
        self.s1.point.min(self.s2.point)
    }
}

/// Default pressure order: the largest `n` with at most `1e7` words.
pub fn default_pressure_n(spec: &TargetSpec) -> usize {
    default_n(&spec.sys, DEFAULT_PRESSURE_WORDS)
}

/// Default series order: the largest `n` with at most `1e6` words.
pub fn default_series_n(spec: &TargetSpec) -> usize {
    default_n(&spec.sys, DEFAULT_SERIES_WORDS)
}

fn search_upper(spec: &TargetSpec) -> Result<f64> {
    let m = spec.ln_beta() + spec.g.min_value();
    if !(m > 0.0) {
        return Err(Error::Domain(format!("inf(ln beta + g) = {m} must be positive")));
    }
    Ok(2.0 + 4.0 / m)
}

/// Bisects the finite-`n` value of a decreasing bracketed function and
/// inflates the result by the bracket error over the slope bound.
fn solve_decreasing<F>(mut phi: F, hi: f64, slope: f64, tol: f64, name: &str) -> Result<RootSolve>
where
    F: FnMut(f64) -> Result<PhiValue>,
{
    if !(slope > 0.0) {
        return Err(Error::Domain(format!("slope bound {slope} for {name} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let at0 = phi(0.0)?;
    if at0.value <= 0.0 {
        return Ok(RootSolve {
            bracket: Bracket::new(0.0, (at0.upper - at0.value) / slope),
            point: 0.0,
            iterations: 0,
            slope_bound: slope,
        });
    }
    let at_hi = phi(hi)?;
    if at_hi.value >= 0.0 {
        return Err(Error::NonBracketing(format!(
            "{name} is {} >= 0 at the upper end s = {hi}",
            at_hi.value
        )));
    }
    let root = bisect(|s| phi(s).map(|v| v.value), 0.0, hi, tol, MAX_BISECTIONS)?;
    let a = phi(root.lo)?;
    let b = phi(root.hi)?;
    let lo = (root.lo - (a.value - a.lower) / slope).max(0.0);
    let up = root.hi + (b.upper - b.value) / slope;
    Ok(RootSolve {
        bracket: Bracket::new(lo, up),
        point: root.mid(),
        iterations: root.iterations,
        slope_bound: slope,
    })
}

/// `P(-g)` at order `n`.
pub fn pressure_of_neg_g(spec: &TargetSpec, n: usize) -> Result<PressureEstimate> {
    pressure_estimate(&spec.sys, &spec.g.scale_shift(-1.0, 0.0), n, DEFAULT_WORD_BUDGET)
}

/// Root of `P((1 - s) f - s ln beta) + P(-g)`.
pub fn solve_s1(spec: &TargetSpec, n: usize, tol: f64) -> Result<RootSolve> {
    let neg_g = pressure_of_neg_g(spec, n)?;
    let slope = spec.ln_beta() + spec.f.min_value();
    let hi = search_upper(spec)?;
    solve_decreasing(
        |s| phi1_with(spec, s, n, &neg_g, DEFAULT_WORD_BUDGET),
        hi,
        slope,
        tol,
        "phi1",
    )
}

/// Root of `P(-s (ln beta + g)) + ln beta`.
pub fn solve_s2(spec: &TargetSpec, n: usize, tol: f64) -> Result<RootSolve> {
    let slope = spec.ln_beta() + spec.g.min_value();
    let hi = search_upper(spec)?;
    solve_decreasing(|s| phi2(spec, s, n, DEFAULT_WORD_BUDGET), hi, slope, tol, "phi2")
}

pub fn dimension(spec: &TargetSpec, n: usize, tol: f64) -> Result<DimensionResult> {
    let s1 = solve_s1(spec, n, tol)?;
    let s2 = solve_s2(spec, n, tol)?;
    let m = s1.bracket.min(&s2.bracket);
    Ok(DimensionResult {
        s0_bracket: Bracket::new(m.lo.clamp(0.0, 2.0), m.hi.clamp(0.0, 2.0)),
        n_used: n,
        iterations: s1.iterations + s2.iterations,
        s1,
        s2,
        series_diagnostics: None,
    })
}

/// Ergodic sums of `f` and `g` at the left endpoints of every word of length `n`.
#[derive(Debug, Clone)]
pub struct WordSums {
    pub n: usize,
    /// Sorted ascending.
    pub sf: Vec<f64>,
    pub sg: Vec<f64>,
}

pub fn word_sums(spec: &TargetSpec, n: usize, budget: f64) -> Result<WordSums> {
    let (mut sf, sg) = traverse(
        &spec.sys,
        n,
        &[&spec.f, &spec.g],
        budget,
        || (Vec::new(), Vec::new()),
        |acc, leaf| {
            acc.0.push(leaf.sums[0]);
            acc.1.push(leaf.sums[1]);
        },
        |mut a, mut b| {
            a.0.append(&mut b.0);
            a.1.append(&mut b.1);
            a
        },
    )?;
    sf.sort_by(f64::total_cmp);
    Ok(WordSums { n, sf, sg })
}

/// Log partial-sum terms at one order `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub n: usize,
    pub s: f64,
    /// `ln sum_{U, W} e^{S_n f(U) - S_n g(W)} (beta^n e^{S_n f(U)})^{-s}`
    pub ln_a: f64,
    /// `ln sum_{U, W} (beta^n e^{S_n g(W)})^{-s}`
    pub ln_b: f64,
    /// `ln` of the pairwise minimum of the two summands.
    pub ln_c: f64,
    /// `C_n / C_{n-1}`, when the previous order is in the table.
    pub ratio_c: Option<f64>,
}

impl WordSums {
    /// Sums for all three families at exponent `s`.
    pub fn row(&self, ln_beta: f64, s: f64) -> SeriesRow {
        let n = self.n as f64;
        let count = self.sf.len() as f64;
        let ln_a_u = |sf: f64| (1.0 - s) * sf - s * n * ln_beta;
        let ln_b_w = |sg: f64| -s * (n * ln_beta + sg);

        let mut a_sum = LogSumExp::new();
        for &sf in &self.sf {
            a_sum.add(ln_a_u(sf));
        }
        let mut c_w = LogSumExp::new();
        let mut b_w = LogSumExp::new();
        for &sg in &self.sg {
            c_w.add(-sg);
            b_w.add(ln_b_w(sg));
        }
        let ln_a = a_sum.value() + c_w.value();
        let ln_b = count.ln() + b_w.value();

        // ln a_U in ascending order, with prefix log-sums.
        let mut la: Vec<f64> = self.sf.iter().map(|&sf| ln_a_u(sf)).collect();
        if s > 1.0 {
            la.reverse();
        }
        let mut prefix = Vec::with_capacity(la.len() + 1);
        prefix.push(f64::NEG_INFINITY);
        for &v in &la {
            let last = *prefix.last().unwrap_or(&f64::NEG_INFINITY);
            prefix.push(log_add_exp(last, v));
        }
        let mut c_sum = LogSumExp::new();
        for &sg in &self.sg {
            let lc = -sg;
            let lb = ln_b_w(sg);
            // min(a c, b) = a c exactly when ln a < ln b - ln c.
            let k = la.partition_point(|&v| v < lb - lc);
            let low = prefix[k] + lc;
            let high = if k < la.len() {
                lb + ((la.len() - k) as f64).ln()
            } else {
                f64::NEG_INFINITY
            };
            c_sum.add(log_add_exp(low, high));
        }
        SeriesRow {
            n: self.n,
            s,
            ln_a,
            ln_b,
            ln_c: c_sum.value(),
            ratio_c: None,
        }
    }
}

/// Partial-sum terms of the three series at exponent `s` for each order in
/// `n_range`; consecutive orders also report the ratio `C_n / C_{n-1}`.
pub fn series_partial_sums(
    spec: &TargetSpec,
    s: f64,
    n_range: std::ops::RangeInclusive<usize>,
    budget: f64,
) -> Result<Vec<SeriesRow>> {
    let mut rows: Vec<SeriesRow> = Vec::new();
    for n in n_range {
        let sums = word_sums(spec, n, budget)?;
        let mut row = sums.row(spec.ln_beta(), s);
        if let Some(prev) = rows.last() {
            if prev.n + 1 == n {
                row.ratio_c = Some((row.ln_c - prev.ln_c).exp());
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Crossing of the per-order growth exponent `(1/n) ln C_n(s)` through 0,
/// inflated by the counting overhead and the Lipschitz slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub bracket: Bracket,
    pub point: f64,
    pub n: usize,
    pub iterations: usize,
}

pub fn s0_prime_probe(spec: &TargetSpec, n: usize, tol: f64) -> Result<ProbeResult> {
    let budget = (count_words(&spec.sys, n) as f64).max(1.0);
    let sums = word_sums(spec, n, budget)?;
    let lb = spec.ln_beta();
    let nf = n as f64;
    let growth = |s: f64| sums.row(lb, s).ln_c / nf;
    let slope = lb + spec.g.min_value();
    let hi = search_upper(spec)?;
    let beta = spec.beta();
    let ovh = renyi_overhead(beta) / nf;
    let slack = |s: f64| {
        ((1.0 - s).abs() * spec.f.lipschitz() + (1.0 + s) * spec.g.lipschitz()) / ((beta - 1.0) * nf)
    };
    if growth(0.0) <= 0.0 {
        return Ok(ProbeResult {
            bracket: Bracket::new(0.0, slack(0.0) / slope),
            point: 0.0,
            n,
            iterations: 0,
        });
    }
    if growth(hi) >= 0.0 {
        return Err(Error::NonBracketing(format!("series growth is >= 0 at the upper end s = {hi}")));
    }
    let root = bisect(|s| Ok(growth(s)), 0.0, hi, tol, MAX_BISECTIONS)?;
    let lo = (root.lo - (2.0 * ovh + slack(root.lo)) / slope).max(0.0);
    let up = root.hi + slack(root.hi) / slope;
    Ok(ProbeResult {
        bracket: Bracket::new(lo, up),
        point: root.mid(),
        n,
        iterations: root.iterations,
    })
}
