//! Partition sums over `Sigma_beta^n` and bracketed pressure estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::BetaSystem;
use crate::error::{Error, Result};
use crate::numeric::{Bracket, LogSumExp};
use crate::potentials::{Potential, TargetSpec};
use crate::symbolic::{count_words, ln_count_words, renyi_upper};

/// Default cap on the number of words a partition sum may visit.
pub const DEFAULT_WORD_BUDGET: f64 = 1e8;

/// Target number of independent subtrees handed to the thread pool.
const SPLIT_TARGET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SumMode {
    /// `sum exp(S_n p(x*))` with `x*` the cylinder's left endpoint.
    LeftEndpoint,
    /// `sum exp(upper bracket of S_n p over the cylinder)`.
    UpperBound,
}

/// A word of `Sigma_beta^n` as seen by a traversal: the word, the orbit
/// values at its left endpoint and one ergodic sum per potential.
pub struct Leaf<'a> {
    pub word: &'a [u8],
    pub left: f64,
    pub sums: &'a [f64],
}

struct Seed {
    suffix: Vec<u8>,
    x: f64,
    sums: Vec<f64>,
}

struct Walker<'a> {
    beta_inv: f64,
    max_digit: u8,
    eps: &'a [u8],
    pots: &'a [&'a Potential],
    n: usize,
}

impl Walker<'_> {
    /// Whether `buf[pos..]` is at most the equally long prefix of `eps*`,
    /// given that `buf[pos + 1..]` is already admissible.
    #[inline]
    fn head_ok(&self, buf: &[u8], pos: usize) -> bool {
        let w = &buf[pos..];
        for (a, b) in w.iter().zip(self.eps) {
            if a != b {
                return a < b;
            }
        }
        true
    }

    fn dfs<A, L>(&self, buf: &mut [u8], pos: usize, x: f64, sums: &mut Vec<f64>, acc: &mut A, leaf: &L)
    where
        L: Fn(&mut A, Leaf<'_>),
    {
        if pos == 0 {
            leaf(
                acc,
                Leaf {
                    word: buf,
                    left: x,
                    sums,
                },
            );
            return;
        }
        let p = pos - 1;
        for d in 0..=self.max_digit {
            buf[p] = d;
            if !self.head_ok(buf, p) {
                // Larger leading digits compare even higher.
                break;
            }
            let x2 = (f64::from(d) + x) * self.beta_inv;
            let depth = sums.len();
            let mut next = Vec::with_capacity(depth);
            for (s, pot) in sums.iter().zip(self.pots) {
                next.push(s + pot.value(x2));
            }
            self.dfs(buf, p, x2, &mut next, acc, leaf);
        }
    }

    /// Admissible suffixes of length `k`, in a fixed order.
    fn seeds(&self, k: usize) -> Vec<Seed> {
        let mut out = vec![Seed {
            suffix: Vec::new(),
            x: 0.0,
            sums: vec![0.0; self.pots.len()],
        }];
        for _ in 0..k {
            let mut next = Vec::new();
            for seed in &out {
                let len = seed.suffix.len() + 1;
                let mut buf = vec![0u8; len];
                buf[1..].copy_from_slice(&seed.suffix);
                for d in 0..=self.max_digit {
                    buf[0] = d;
                    if !self.head_ok(&buf, 0) {
                        break;
                    }
                    let x2 = (f64::from(d) + seed.x) * self.beta_inv;
                    next.push(Seed {
                        suffix: buf.clone(),
                        x: x2,
                        sums: seed.sums.iter().zip(self.pots).map(|(s, p)| s + p.value(x2)).collect(),
                    });
                }
            }
            out = next;
        }
        out
    }
}

/// Visits every word of `Sigma_beta^n` exactly once, building words from the
/// right so that orbit points and ergodic sums update in O(1) per digit.
///
/// Subtrees are processed in parallel and their accumulators merged in a
/// fixed order, so the result does not depend on the number of threads.
pub fn traverse<A, I, L, M>(
    sys: &BetaSystem,
    n: usize,
    pots: &[&Potential],
    budget: f64,
    init: I,
    leaf: L,
    merge: M,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    L: Fn(&mut A, Leaf<'_>) + Sync,
    M: Fn(A, A) -> A,
{
    if n == 0 {
        return Err(Error::Domain("word length must be at least 1".into()));
    }
    let predicted = count_words(sys, n) as f64;
    if predicted > budget {
        return Err(Error::BudgetExceeded {
            what: format!("partition sum over words of length {n}"),
            predicted,
            budget,
            renyi_bound: renyi_upper(sys.beta(), n),
        });
    }
    let eps = sys.one_prefix(n);
    let walker = Walker {
        beta_inv: 1.0 / sys.beta(),
        max_digit: sys.max_digit(),
        eps: &eps,
        pots,
        n,
    };
    let split = (1..=n)
        .find(|&k| count_words(sys, k) as usize >= SPLIT_TARGET)
        .unwrap_or(n)
        .min(n);
    let seeds = walker.seeds(split);
    let parts: Vec<A> = seeds
        .par_iter()
        .map(|seed| {
            let mut acc = init();
            let mut buf = vec![0u8; walker.n];
            let pos = walker.n - seed.suffix.len();
            buf[pos..].copy_from_slice(&seed.suffix);
            let mut sums = seed.sums.clone();
            walker.dfs(&mut buf, pos, seed.x, &mut sums, &mut acc, &leaf);
            acc
        })
        .collect();
    let mut it = parts.into_iter();
    let first = it.next().unwrap_or_else(&init);
    Ok(it.fold(first, merge))
}

/// Log partition sums in both modes from one traversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSums {
    pub n: usize,
    pub ln_left: f64,
    pub ln_upper: f64,
}

pub fn partition_sums(sys: &BetaSystem, p: &Potential, n: usize, budget: f64) -> Result<PartitionSums> {
    if let Some(c) = p.as_constant() {
        // Every word contributes exp(n c).
        let ln = ln_count_words(sys, n) + n as f64 * c;
        if count_words(sys, n) as f64 > budget {
            return Err(Error::BudgetExceeded {
                what: format!("partition sum over words of length {n}"),
                predicted: count_words(sys, n) as f64,
                budget,
                renyi_bound: renyi_upper(sys.beta(), n),
            });
        }
        return Ok(PartitionSums {
            n,
            ln_left: ln,
            ln_upper: ln,
        });
    }
    let delta = p.cylinder_variation(sys.beta(), n);
    let cap = n as f64 * p.max_value();
    let (left, upper) = traverse(
        sys,
        n,
        &[p],
        budget,
        || (LogSumExp::new(), LogSumExp::new()),
        |acc, leaf| {
            let s = leaf.sums[0];
            acc.0.add(s);
            acc.1.add((s + delta).min(cap));
        },
        |mut a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
            a
        },
    )?;
    Ok(PartitionSums {
        n,
        ln_left: left.value(),
        ln_upper: upper.value(),
    })
}

/// `ln sum_{w in Sigma_beta^n} exp(...)` in the requested mode.
pub fn partition_sum(sys: &BetaSystem, p: &Potential, n: usize, mode: SumMode, budget: f64) -> Result<f64> {
    let sums = partition_sums(sys, p, n, budget)?;
    Ok(match mode {
        SumMode::LeftEndpoint => sums.ln_left,
        SumMode::UpperBound => sums.ln_upper,
    })
}

/// Finite-`n` pressure value with a bracket for the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub n: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub potential_id: String,
}

impl PressureEstimate {
    pub fn bracket(&self) -> Bracket {
        Bracket::new(self.lower, self.upper)
    }
}

/// `ln(beta / (beta - 1))`: the counting overhead from Renyi's bounds.
pub fn renyi_overhead(beta: f64) -> f64 {
    (beta / (beta - 1.0)).ln()
}

pub fn pressure_estimate(sys: &BetaSystem, p: &Potential, n: usize, budget: f64) -> Result<PressureEstimate> {
    let sums = partition_sums(sys, p, n, budget)?;
    Ok(estimate_from_sums(sys, p, &sums))
}

fn estimate_from_sums(sys: &BetaSystem, p: &Potential, sums: &PartitionSums) -> PressureEstimate {
    let beta = sys.beta();
    let nf = sums.n as f64;
    let ovh = renyi_overhead(beta) / nf;
    let value = sums.ln_left / nf;
    let upper = sums.ln_upper / nf + ovh;
    let lower = value - p.lipschitz() / ((beta - 1.0) * nf) - ovh;
    PressureEstimate {
        n: sums.n,
        value,
        lower,
        upper,
        potential_id: p.describe(),
    }
}

/// Bracketed value of one of the two pressure functions at some `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub s: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `x -> (1 - s) f(x) - s ln beta`.
pub fn phi1_potential(spec: &TargetSpec, s: f64) -> Potential {
    spec.f.scale_shift(1.0 - s, -s * spec.ln_beta())
}

/// `x -> -s (ln beta + g(x))`.
pub fn phi2_potential(spec: &TargetSpec, s: f64) -> Potential {
    spec.g.scale_shift(-s, -s * spec.ln_beta())
}

/// `P((1 - s) f - s ln beta) + P(-g)`, reusing a precomputed `P(-g)`.
pub fn phi1_with(spec: &TargetSpec, s: f64, n: usize, neg_g: &PressureEstimate, budget: f64) -> Result<PhiValue> {
    let a = pressure_estimate(&spec.sys, &phi1_potential(spec, s), n, budget)?;
    Ok(PhiValue {
        s,
        value: a.value + neg_g.value,
        lower: a.lower + neg_g.lower,
        upper: a.upper + neg_g.upper,
    })
}

pub fn phi1(spec: &TargetSpec, s: f64, n: usize, budget: f64) -> Result<PhiValue> {
    let neg_g = pressure_estimate(&spec.sys, &spec.g.scale_shift(-1.0, 0.0), n, budget)?;
    phi1_with(spec, s, n, &neg_g, budget)
}

/// `P(-s (ln beta + g)) + ln beta`.
pub fn phi2(spec: &TargetSpec, s: f64, n: usize, budget: f64) -> Result<PhiValue> {
    let a = pressure_estimate(&spec.sys, &phi2_potential(spec, s), n, budget)?;
    let lb = spec.ln_beta();
    Ok(PhiValue {
        s,
        value: a.value + lb,
        lower: a.lower + lb,
        upper: a.upper + lb,
    })
}

/// Largest `n` with `#Sigma_beta^n <= max_words`, capped by the precision cap.
pub fn default_n(sys: &BetaSystem, max_words: f64) -> usize {
    let mut n = 1;
    while n < sys.precision_cap() && (count_words(sys, n + 1) as f64) <= max_words {
        n += 1;
    }
    n
}
