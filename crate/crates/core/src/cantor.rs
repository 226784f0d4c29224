//! The Cantor-type subset used for the lower bound: levels of rectangles
//! `F_i`, their square pieces `G_i`, and the supporting mass distribution.
//!
//! Everything is done on digit strings. Level-2 cylinders are far below the
//! resolution of `f64` near `x0`, so positions are digit words and distances
//! are signed log-magnitudes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::BetaSystem;
use crate::error::{Error, Result};
use crate::numeric::{bisect, LogReal, LogSumExp};
use crate::potentials::TargetSpec;
use crate::symbolic::{
    count_filtered, enumerate_words, format_word, CompletionTable, Follower, Word, WordFilter,
};

/// Which supporting measure is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MassCase {
    /// `s0 > 1`: mass placed on the square pieces according to `f`.
    CaseI,
    /// `s0 <= 1`: mass placed on rectangles according to `g`, split evenly.
    CaseII,
}

impl fmt::Display for MassCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MassCase::CaseI => f.write_str("CaseI"),
            MassCase::CaseII => f.write_str("CaseII"),
        }
    }
}

impl FromStr for MassCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "casei" | "i" | "1" => Ok(MassCase::CaseI),
            "caseii" | "ii" | "2" => Ok(MassCase::CaseII),
            _ => Err(Error::Config(format!("unknown mass case {s:?}; expected CaseI or CaseII"))),
        }
    }
}

/// `m_1, ..., m_depth`; `None` entries (and missing trailing entries) are
/// chosen automatically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MSchedule(pub Vec<Option<usize>>);

impl MSchedule {
    pub fn auto() -> Self {
        Self(Vec::new())
    }

    pub fn get(&self, level: usize) -> Option<usize> {
        self.0.get(level - 1).copied().flatten()
    }
}

/// Parses lists such as `8,auto` or `auto`.
impl FromStr for MSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("auto") {
            return Ok(Self::auto());
        }
        s.split(',')
            .map(|t| {
                let t = t.trim();
                if t.eq_ignore_ascii_case("auto") {
                    Ok(None)
                } else {
                    t.parse::<usize>()
                        .map(Some)
                        .map_err(|_| Error::Config(format!("bad m_schedule entry {t:?}")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for MSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("auto");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|m| m.map_or_else(|| "auto".to_string(), |v| v.to_string()))
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorConfig {
    pub epsilon: f64,
    /// Length `N` of the zero block closing every `U_i`, `W_i`.
    pub zero_block: usize,
    pub depth: usize,
    pub m_schedule: MSchedule,
    pub case_override: Option<MassCase>,
    pub seed: u64,
    /// Word sets up to this size are enumerated, larger ones sampled.
    pub word_budget: usize,
    /// Number of words drawn when a word set is sampled.
    pub sample_size: usize,
    /// Cap on `(U, W)` pairs per parent.
    pub pair_budget: usize,
    /// Cap on rectangles per level across all parents.
    pub element_budget: usize,
    /// `H` sets up to this size are enumerated, larger ones sampled.
    pub h_budget: usize,
    pub h_sample: usize,
    /// Draw `U_i`, `W_i` from the `beta_N` subsystem instead of from full
    /// words of `Sigma_beta` ending with `0^N`.
    pub use_subsystem: bool,
    /// Limit on cylinders scanned per packing search.
    pub max_scan: usize,
}

impl Default for CantorConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.3,
            zero_block: 1,
            depth: 2,
            m_schedule: MSchedule::auto(),
            case_override: None,
            seed: 0,
            word_budget: 4096,
            sample_size: 16,
            pair_budget: 65_536,
            element_budget: 65_536,
            h_budget: 64,
            h_sample: 4,
            use_subsystem: false,
            max_scan: 100_000,
        }
    }
}

impl CantorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.sample_size == 0 || self.pair_budget == 0 || self.element_budget == 0 || self.h_sample == 0 {
            return Err(Error::Config("sampling budgets must be positive".into()));
        }
        Ok(())
    }
}

/// `value(a) - value(b)` for digit strings read as `sum d_i beta^-i`, shorter
/// string padded with zeros. Exact for integer bases whenever the result is
/// representable; otherwise accurate to a few ulps of the result.
pub fn digit_difference(beta: f64, ln_beta: f64, a: &[u8], b: &[u8]) -> LogReal {
    let len = a.len().max(b.len());
    let at = |w: &[u8], i: usize| f64::from(w.get(i).copied().unwrap_or(0));
    let Some(j) = (0..len).find(|&i| at(a, i) != at(b, i)) else {
        return LogReal::ZERO;
    };
    // Left to right the running value stays an exact small integer for
    // integer bases while digits cancel; once it is large no cancellation is
    // possible and the rest is a bounded correction.
    let mut r = 0.0;
    let mut t = j;
    while t < len {
        r = r * beta + (at(a, t) - at(b, t));
        t += 1;
        if r.abs() > 1e6 {
            break;
        }
    }
    let mut c = 0.0;
    for i in (t..len).rev() {
        c = (c + at(a, i) - at(b, i)) / beta;
    }
    let total = r + c;
    if total == 0.0 {
        return LogReal::ZERO;
    }
    LogReal::from_parts(if total > 0.0 { 1 } else { -1 }, total.abs().ln() - t as f64 * ln_beta)
}

/// Full cylinder found inside a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Packed {
    pub word: Word,
    pub order: usize,
}

/// Digit-space packing: the coarsest order `k` with
/// `r > beta^-k > r^{1+eps}` (strict) admitting a full order-`k` cylinder
/// strictly inside `B(target, r)`; the leftmost such cylinder is returned.
pub fn pack_full_cylinder(
    sys: &BetaSystem,
    follower: &Follower,
    target: &[u8],
    ln_r: f64,
    epsilon: f64,
    max_scan: usize,
) -> Result<Packed> {
    let lb = sys.ln_beta();
    let beta = sys.beta();
    let k_lo = ((-ln_r / lb).floor() as usize + 1).max(1);
    let mut k = k_lo;
    let radius = LogReal::from_ln(ln_r);
    while -(k as f64) * lb > (1.0 + epsilon) * ln_r {
        if k + 1 > target.len() {
            return Err(Error::Domain(format!("target digits too short for order {k}")));
        }
        if -(k as f64) * lb >= ln_r {
            k += 1;
            continue;
        }
        let side = LogReal::from_ln(-(k as f64) * lb);
        let start = target[..k].to_vec();
        if follower.run(&start).is_none() {
            return Err(Error::Inadmissible(format!("target prefix ({})", format_word(&start))));
        }
        // Walk left to the first cylinder meeting the ball.
        let mut w = start;
        let mut steps = 0;
        while let Some(prev) = predecessor(follower, &w) {
            // right(prev) - target = left(prev) - target + |I(prev)|, an upper bound.
            let right = digit_difference(beta, lb, &prev, target).add(&side);
            if right.add(&radius).sign() <= 0 {
                break;
            }
            w = prev;
            steps += 1;
            if steps > max_scan {
                break;
            }
        }
        loop {
            let left = digit_difference(beta, lb, &w, target);
            if left.sub(&radius).sign() >= 0 {
                break;
            }
            if follower.run(&w) == Some(0) {
                let right = left.add(&side);
                if left.add(&radius).sign() > 0 && radius.sub(&right).sign() > 0 {
                    return Ok(Packed { word: w, order: k });
                }
            }
            steps += 1;
            if steps > max_scan {
                break;
            }
            match successor(follower, &w) {
                Some(next) => w = next,
                None => break,
            }
        }
        k += 1;
    }
    Err(Error::NoFullCylinder(format!(
        "no full cylinder of length in (r^(1+eps), r) inside the ball of log-radius {ln_r:.6} (orders {k_lo}..{k})"
    )))
}

fn successor(follower: &Follower, w: &[u8]) -> Option<Word> {
    let states = follower.trace(w)?;
    let i = (0..w.len()).rev().find(|&i| w[i] < follower.bound(states[i]))?;
    let mut out = w[..=i].to_vec();
    out[i] += 1;
    out.resize(w.len(), 0);
    Some(out)
}

fn predecessor(follower: &Follower, w: &[u8]) -> Option<Word> {
    let i = (0..w.len()).rev().find(|&i| w[i] > 0)?;
    let mut out = w[..=i].to_vec();
    out[i] -= 1;
    let mut s = follower.run(&out)?;
    while out.len() < w.len() {
        let d = follower.bound(s);
        out.push(d);
        s = follower.step(s, d)?;
    }
    Some(out)
}

/// A word family used at one level: enumerated completely or sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSet {
    pub words: Vec<Word>,
    /// Size of the full family the words come from.
    pub total: f64,
    pub sampled: bool,
}

impl WordSet {
    /// `total / words.len()`, the factor turning sums over `words` into
    /// estimates of sums over the whole family.
    pub fn scale(&self) -> f64 {
        if self.words.is_empty() {
            0.0
        } else {
            self.total / self.words.len() as f64
        }
    }
}

fn seeded(seed: u64, level: usize, tag: u64) -> ChaCha8Rng {
    let mix = seed
        ^ (level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mix)
}

fn word_set(
    table: &CompletionTable,
    sys: &BetaSystem,
    filter: WordFilter,
    budget: usize,
    sample: usize,
    rng: &mut ChaCha8Rng,
) -> Result<WordSet> {
    let total = table.total();
    let n = table.word_length();
    if total <= budget as f64 {
        let words: Vec<Word> = enumerate_words(sys, n, filter, budget as f64 + 1.0)?.collect();
        return Ok(WordSet { words, total, sampled: false });
    }
    let mut set = BTreeSet::new();
    let mut attempts = 0;
    while set.len() < sample && attempts < 100 * sample {
        if let Some(w) = table.sample(rng) {
            set.insert(w);
        }
        attempts += 1;
    }
    Ok(WordSet { words: set.into_iter().collect(), total, sampled: true })
}

/// One square piece `Gamma_i x Upsilon_i` of level `i` (an element of `G_i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelElement {
    /// Index into the previous level; `None` at level 1.
    pub parent: Option<usize>,
    /// Indices into the level's `U` and `W` sets.
    pub u: usize,
    pub w: usize,
    /// `Gamma_i = Gamma_{i-1} U_i K_i`.
    pub gamma: Word,
    /// `Upsilon_i = Upsilon_{i-1} W_i L_i H_i`.
    pub upsilon: Word,
    pub h: Word,
    /// `n_i = |Gamma_{i-1}| + m_i`.
    pub n: usize,
    pub k: usize,
    pub l: usize,
    /// `ln` of the target radii `e^{-S_{n_i} f(x*)}`, `e^{-S_{n_i} g(y*)}`.
    pub ln_radius_x: f64,
    pub ln_radius_y: f64,
    /// `S_{m_i} f` at the left end of `I(U_i)` and `S_{m_i} g` at `I(W_i)`.
    pub sf_u: f64,
    pub sg_w: f64,
    /// `ln` of the mass given by the product formula.
    pub ln_weight: f64,
    /// Mass after renormalising each family of siblings to its parent.
    pub mass: f64,
    /// Children in the next level, as `first_child..first_child + child_count`.
    pub first_child: usize,
    pub child_count: usize,
}

impl LevelElement {
    /// `ln` of the common side `beta^{-(n_i + k_i)}`.
    pub fn ln_side(&self, ln_beta: f64) -> f64 {
        -((self.n + self.k) as f64) * ln_beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub index: usize,
    pub m: usize,
    pub u_set: WordSet,
    pub w_set: WordSet,
    /// `(u, w)` index pairs attached to every parent.
    pub pairs: Vec<(usize, usize)>,
    pub pairs_total: usize,
    /// `S_m f` at the left end of each `I(U)` and `S_m g` at each `I(W)`.
    pub u_sums: Vec<f64>,
    pub w_sums: Vec<f64>,
    pub elements: Vec<LevelElement>,
    /// Exponent `s_i` of the mass factors, set by [`assign_mass`].
    pub s: f64,
    /// Range of `ln sum_children weight factor` over parents.
    pub ln_renorm_min: f64,
    pub ln_renorm_max: f64,
}

impl Level {
    pub fn is_subsampled(&self) -> bool {
        self.u_set.sampled || self.w_set.sampled || self.pairs.len() < self.pairs_total
    }

    pub fn k_range(&self) -> (usize, usize) {
        range_of(self.elements.iter().map(|e| e.k))
    }

    pub fn l_range(&self) -> (usize, usize) {
        range_of(self.elements.iter().map(|e| e.l))
    }

    /// Largest `|Gamma_i|`.
    pub fn max_len(&self) -> usize {
        self.elements.iter().map(|e| e.gamma.len()).max().unwrap_or(0)
    }
}

fn range_of(it: impl Iterator<Item = usize>) -> (usize, usize) {
    it.fold((usize::MAX, 0), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub config: CantorConfig,
    pub levels: Vec<Level>,
    pub case: Option<MassCase>,
    /// `min f >= (1 + eps) max g`; reported, not enforced.
    pub strengthened_hypothesis: bool,
    /// Digits defining `x0` and `y0`.
    pub x0_digits: Word,
    pub y0_digits: Word,
}

/// Smallest `m` with `eps/(1+eps) m ln beta >= len sup|f|`.
pub fn minimal_gap(len: usize, f_norm: f64, epsilon: f64, ln_beta: f64) -> usize {
    let need = len as f64 * f_norm * (1.0 + epsilon) / (epsilon * ln_beta);
    (need - 1e-9).ceil().max(0.0) as usize
}

fn gap_holds(m: usize, len: usize, f_norm: f64, epsilon: f64, ln_beta: f64) -> bool {
    epsilon / (1.0 + epsilon) * m as f64 * ln_beta >= len as f64 * f_norm * (1.0 - 1e-12)
}

/// Builds the levels `F_1 ... F_depth` and their square pieces. Masses are
/// left at zero; see [`assign_mass`].
pub fn build_levels(spec: &TargetSpec, cfg: &CantorConfig) -> Result<Construction> {
    cfg.validate()?;
    if !spec.f_strictly_positive() {
        return Err(Error::Hypothesis(format!(
            "the construction needs f > 0, but min f = {}",
            spec.f.min_value()
        )));
    }
    let sys = spec.sys.as_ref();
    let lb = sys.ln_beta();
    let n0 = cfg.zero_block;
    let filter = if cfg.use_subsystem {
        WordFilter::EndsWithZeroBlock(n0)
    } else {
        WordFilter::FullEndingWithZeroBlock(n0)
    };
    let source = if cfg.use_subsystem && n0 > 0 {
        sys.approximant(n0)?
    } else {
        sys.clone()
    };
    let f_norm = spec.f.sup_norm();
    let max_f = spec.f.max_value().max(0.0);
    let max_g = spec.g.max_value().max(0.0);

    let mut levels: Vec<Level> = Vec::with_capacity(cfg.depth);
    let mut x0_digits = Word::new();
    let mut y0_digits = Word::new();
    for i in 1..=cfg.depth {
        let prev_len = levels.last().map_or(0, Level::max_len);
        let m = match cfg.m_schedule.get(i) {
            Some(m) => {
                if i > 1 && !gap_holds(m, prev_len, f_norm, cfg.epsilon, lb) {
                    return Err(Error::Precondition(format!(
                        "m_{i} = {m} violates the gap condition: need eps/(1+eps) m ln beta >= {prev_len} sup|f| (minimal m is {})",
                        minimal_gap(prev_len, f_norm, cfg.epsilon, lb)
                    )));
                }
                m
            }
            None if i == 1 => n0 + 7,
            None => minimal_gap(prev_len, f_norm, cfg.epsilon, lb) + 2,
        }
        .max(n0.max(1));

        let table = CompletionTable::new(&source, m, filter)?;
        let full = Follower::new(sys, m);
        let keep_full = |mut set: WordSet| {
            if cfg.use_subsystem {
                set.words.retain(|w| full.run(w) == Some(0));
            }
            set
        };
        let u_set = keep_full(word_set(&table, &source, filter, cfg.word_budget, cfg.sample_size, &mut seeded(cfg.seed, i, 1))?);
        let w_set = keep_full(word_set(&table, &source, filter, cfg.word_budget, cfg.sample_size, &mut seeded(cfg.seed, i, 2))?);
        if u_set.words.is_empty() || w_set.words.is_empty() {
            return Err(Error::Precondition(format!(
                "level {i}: no full words of length {m} ending with 0^{n0}"
            )));
        }

        let parents = levels.last().map_or(1, |l| l.elements.len());
        let pairs_total = u_set.words.len() * w_set.words.len();
        let cap = cfg.pair_budget.min(cfg.element_budget / parents).max(1);
        let pairs: Vec<(usize, usize)> = if pairs_total <= cap {
            (0..pairs_total).map(|p| (p / w_set.words.len(), p % w_set.words.len())).collect()
        } else {
            let mut idx = index::sample(&mut seeded(cfg.seed, i, 3), pairs_total, cap).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|p| (p / w_set.words.len(), p % w_set.words.len())).collect()
        };

        // Digits of the targets, long enough for the deepest order reachable here.
        let n_max = prev_len + m;
        let k_max = ((1.0 + cfg.epsilon) * n_max as f64 * max_f.max(max_g) / lb).ceil() as usize + 2;
        let need = n_max + k_max + 64;
        if x0_digits.len() < need {
            x0_digits = sys.target_digits(spec.x0, need)?;
            y0_digits = sys.target_digits(spec.y0, need)?;
        }
        let follower = Follower::new(sys, need + 1);

        let empty = LevelElement {
            parent: None,
            u: 0,
            w: 0,
            gamma: Word::new(),
            upsilon: Word::new(),
            h: Word::new(),
            n: 0,
            k: 0,
            l: 0,
            ln_radius_x: 0.0,
            ln_radius_y: 0.0,
            sf_u: 0.0,
            sg_w: 0.0,
            ln_weight: 0.0,
            mass: 1.0,
            first_child: 0,
            child_count: 0,
        };
        let parent_list: Vec<(Option<usize>, &LevelElement)> = match levels.last() {
            Some(l) => l.elements.iter().enumerate().map(|(j, e)| (Some(j), e)).collect(),
            None => vec![(None, &empty)],
        };
        let sf: Vec<f64> = u_set.words.iter().map(|w| spec.f.ergodic_sum_at_word(sys, w)).collect();
        let sg: Vec<f64> = w_set.words.iter().map(|w| spec.g.ergodic_sum_at_word(sys, w)).collect();
        let h_cache = parking_lot::Mutex::new(std::collections::HashMap::<usize, Vec<Word>>::new());
        let h_words = |d: usize| -> Result<Vec<Word>> {
            if d == 0 {
                return Ok(vec![Word::new()]);
            }
            if let Some(v) = h_cache.lock().get(&d) {
                return Ok(v.clone());
            }
            let t = CompletionTable::new(sys, d, WordFilter::FullOnly)?;
            let set = word_set(&t, sys, WordFilter::FullOnly, cfg.h_budget, cfg.h_sample, &mut seeded(cfg.seed, i, 4 + d as u64))?;
            h_cache.lock().insert(d, set.words.clone());
            Ok(set.words)
        };

        let blocks: Vec<Vec<LevelElement>> = parent_list
            .par_iter()
            .map(|&(pidx, parent)| -> Result<Vec<LevelElement>> {
                let mut out = Vec::new();
                for &(ui, wi) in &pairs {
                    let mut xw = parent.gamma.clone();
                    xw.extend_from_slice(&u_set.words[ui]);
                    let mut yw = parent.upsilon.clone();
                    yw.extend_from_slice(&w_set.words[wi]);
                    let n = xw.len();
                    let ln_rx = -spec.f.ergodic_sum_at_word(sys, &xw);
                    let ln_ry = -spec.g.ergodic_sum_at_word(sys, &yw);
                    let kx = pack_full_cylinder(sys, &follower, &x0_digits, ln_rx, cfg.epsilon, cfg.max_scan)?;
                    let ly = pack_full_cylinder(sys, &follower, &y0_digits, ln_ry, cfg.epsilon, cfg.max_scan)?;
                    if kx.order < ly.order {
                        return Err(Error::Hypothesis(format!(
                            "level {i}: k = {} < l = {}; the x-side cylinder is coarser than the y-side one",
                            kx.order, ly.order
                        )));
                    }
                    xw.extend_from_slice(&kx.word);
                    yw.extend_from_slice(&ly.word);
                    for h in h_words(kx.order - ly.order)? {
                        let mut ups = yw.clone();
                        ups.extend_from_slice(&h);
                        out.push(LevelElement {
                            parent: pidx,
                            u: ui,
                            w: wi,
                            gamma: xw.clone(),
                            upsilon: ups,
                            h,
                            n,
                            k: kx.order,
                            l: ly.order,
                            ln_radius_x: ln_rx,
                            ln_radius_y: ln_ry,
                            sf_u: sf[ui],
                            sg_w: sg[wi],
                            ln_weight: 0.0,
                            mass: 0.0,
                            first_child: 0,
                            child_count: 0,
                        });
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;

        if let Some(prev) = levels.last_mut() {
            let mut start = 0;
            for (e, b) in prev.elements.iter_mut().zip(&blocks) {
                e.first_child = start;
                e.child_count = b.len();
                start += b.len();
            }
        }
        let elements: Vec<LevelElement> = blocks.into_iter().flatten().collect();
        log::debug!(
            "level {i}: m = {m}, |U| = {}, |W| = {}, pairs {} of {}, {} elements",
            u_set.words.len(),
            w_set.words.len(),
            pairs.len(),
            pairs_total,
            elements.len()
        );
        levels.push(Level {
            index: i,
            m,
            u_set,
            w_set,
            pairs,
            pairs_total,
            u_sums: sf,
            w_sums: sg,
            elements,
            s: f64::NAN,
            ln_renorm_min: f64::NAN,
            ln_renorm_max: f64::NAN,
        });
    }
    Ok(Construction {
        config: cfg.clone(),
        levels,
        case: None,
        strengthened_hypothesis: spec.strengthened_hypothesis_holds(cfg.epsilon),
        x0_digits,
        y0_digits,
    })
}

/// Case I when `s0 > 1`, Case II otherwise. Constant potentials use the exact
/// `s0`; otherwise a short pressure computation decides.
pub fn default_case(spec: &TargetSpec) -> Result<MassCase> {
    let s0 = match spec.closed_form_s0() {
        Some(s0) => s0,
        None => {
            let n = crate::dimension::default_pressure_n(spec).min(14);
            crate::dimension::dimension(spec, n, 1e-4)?.s0_point()
        }
    };
    Ok(if s0 > 1.0 + 1e-12 { MassCase::CaseI } else { MassCase::CaseII })
}

fn solve_decreasing<F: Fn(f64) -> f64>(h: F, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 2.0);
    let mut tries = 0;
    while h(lo) < 0.0 {
        lo = 2.0 * lo - 1.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Normalization(format!("{what}: no lower bracket")));
        }
    }
    while h(hi) > 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 120 {
            return Err(Error::Normalization(format!("{what}: no upper bracket")));
        }
    }
    Ok(bisect(|s| Ok(h(s)), lo, hi, 1e-14, 200)?.mid())
}

/// Solves the level normalisation for `s_i`: in Case I
/// `sum_{U,W} e^{S f - S g} (beta^m e^{S f})^{-s} = 1`, in Case II
/// `sum_{U,W} (beta^m e^{S g})^{-s} = 1`, sums taken over the full word
/// families (sampled sets are rescaled).
pub fn level_exponent(level: &Level, case: MassCase, ln_beta: f64) -> Result<f64> {
    let ml = level.m as f64 * ln_beta;
    let (u_sums, w_sums) = (&level.u_sums, &level.w_sums);
    let ln_su = level.u_set.scale().ln();
    let ln_sw = level.w_set.scale().ln();
    let what = format!("level {}", level.index);
    match case {
        MassCase::CaseI => {
            let mut gw = LogSumExp::new();
            w_sums.iter().for_each(|&g| gw.add(-g));
            let cw = ln_sw + gw.value();
            solve_decreasing(
                |s| {
                    let mut acc = LogSumExp::new();
                    u_sums.iter().for_each(|&f| acc.add((1.0 - s) * f - s * ml));
                    ln_su + acc.value() + cw
                },
                &what,
            )
        }
        MassCase::CaseII => {
            let ln_u = level.u_set.total.ln();
            solve_decreasing(
                |s| {
                    let mut acc = LogSumExp::new();
                    w_sums.iter().for_each(|&g| acc.add(-s * (ml + g)));
                    ln_u + ln_sw + acc.value()
                },
                &what,
            )
        }
    }
}

/// Assigns the product-formula weights and the renormalised masses. With
/// `exponent = None` each level uses its own normalising `s_i`; otherwise the
/// given exponent is used at every level.
pub fn assign_mass(
    construction: &mut Construction,
    spec: &TargetSpec,
    case: MassCase,
    exponent: Option<f64>,
) -> Result<()> {
    let sys = spec.sys.as_ref();
    let lb = sys.ln_beta();
    let mut h_counts = std::collections::HashMap::<usize, f64>::new();
    for li in 0..construction.levels.len() {
        let s = match exponent {
            Some(s) => s,
            None => level_exponent(&construction.levels[li], case, lb)?,
        };
        let ml = construction.levels[li].m as f64 * lb;
        let factors: Vec<f64> = construction.levels[li]
            .elements
            .iter()
            .map(|e| match case {
                MassCase::CaseI => -s * (ml + e.sf_u),
                MassCase::CaseII => {
                    let d = e.k - e.l;
                    let h = *h_counts
                        .entry(d)
                        .or_insert_with(|| if d == 0 { 1.0 } else { count_filtered(sys, d, WordFilter::FullOnly) as f64 });
                    -s * (ml + e.sg_w) - h.ln()
                }
            })
            .collect();
        // Parent weight and mass for every element, plus sibling groups.
        let (parent_w, parent_m, groups): (Vec<f64>, Vec<f64>, Vec<(usize, usize)>) = if li == 0 {
            let n = factors.len();
            (vec![0.0; n], vec![1.0; n], vec![(0, n)])
        } else {
            let prev = &construction.levels[li - 1].elements;
            let level = &construction.levels[li];
            let pw = level.elements.iter().map(|e| prev[e.parent.unwrap_or(0)].ln_weight).collect();
            let pm = level.elements.iter().map(|e| prev[e.parent.unwrap_or(0)].mass).collect();
            let groups = prev
                .iter()
                .filter(|p| p.child_count > 0)
                .map(|p| (p.first_child, p.first_child + p.child_count))
                .collect();
            (pw, pm, groups)
        };
        let level = &mut construction.levels[li];
        let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in groups {
            let mut lse = LogSumExp::new();
            factors[a..b].iter().for_each(|&v| lse.add(v));
            let norm = lse.value();
            rmin = rmin.min(norm);
            rmax = rmax.max(norm);
            for j in a..b {
                let e = &mut level.elements[j];
                e.ln_weight = parent_w[j] + factors[j];
                e.mass = parent_m[j] * (factors[j] - norm).exp();
            }
        }
        level.s = s;
        level.ln_renorm_min = rmin;
        level.ln_renorm_max = rmax;
    }
    construction.case = Some(case);
    Ok(())
}

/// Builds the levels and assigns masses with the configured or default case.
pub fn construct(spec: &TargetSpec, cfg: &CantorConfig) -> Result<Construction> {
    let mut c = build_levels(spec, cfg)?;
    let case = match cfg.case_override {
        Some(case) => case,
        None => default_case(spec)?,
    };
    assign_mass(&mut c, spec, case, None)?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassLengthReport {
    pub exponent: f64,
    pub checked: usize,
    /// Largest `ln weight - exponent ln side`; the bound holds when `<= 0`.
    pub worst_margin: f64,
    pub worst_level: usize,
    pub worst_index: usize,
    pub passes: bool,
}

/// Checks `weight(G) <= side(G)^{s/(1+eps)}` on every constructed piece.
pub fn mass_vs_length_check(construction: &Construction, ln_beta: f64, s: f64) -> MassLengthReport {
    let exponent = s / (1.0 + construction.config.epsilon);
    let mut report = MassLengthReport {
        exponent,
        checked: 0,
        worst_margin: f64::NEG_INFINITY,
        worst_level: 0,
        worst_index: 0,
        passes: true,
    };
    for level in &construction.levels {
        for (j, e) in level.elements.iter().enumerate() {
            let margin = e.ln_weight - exponent * e.ln_side(ln_beta);
            report.checked += 1;
            if margin > report.worst_margin {
                report.worst_margin = margin;
                report.worst_level = level.index;
                report.worst_index = j;
            }
        }
    }
    report.passes = report.worst_margin <= 1e-9;
    report
}

/// Why a sampled point lies in the target set at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitWitness {
    pub level: usize,
    pub n: usize,
    /// `ln |T^n x - x0|` and the log-radius it must beat.
    pub ln_dist_x: f64,
    pub ln_radius_x: f64,
    pub ln_dist_y: f64,
    pub ln_radius_y: f64,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPoint {
    pub x: f64,
    pub y: f64,
    pub gamma: Word,
    pub upsilon: Word,
    /// Element index chosen at each level.
    pub path: Vec<usize>,
    pub witnesses: Vec<HitWitness>,
}

/// Descends the levels choosing children uniformly and returns the lower-left
/// corner of the deepest piece, with one hitting witness per level.
pub fn sample_point<R: rand::Rng + ?Sized>(
    construction: &Construction,
    sys: &BetaSystem,
    rng: &mut R,
) -> Result<SampledPoint> {
    let levels = &construction.levels;
    let Some(first) = levels.first() else {
        return Err(Error::Precondition("construction has no levels".into()));
    };
    if first.elements.is_empty() {
        return Err(Error::Precondition("level 1 is empty".into()));
    }
    let mut path = vec![rng.gen_range(0..first.elements.len())];
    for level in &levels[..levels.len() - 1] {
        let e = &level.elements[*path.last().unwrap_or(&0)];
        if e.child_count == 0 {
            return Err(Error::Precondition(format!("level {} piece has no children", level.index)));
        }
        path.push(e.first_child + rng.gen_range(0..e.child_count));
    }
    let deepest = &levels[levels.len() - 1].elements[path[path.len() - 1]];
    let (beta, lb) = (sys.beta(), sys.ln_beta());
    let witnesses = levels
        .iter()
        .zip(&path)
        .map(|(level, &j)| {
            let e = &level.elements[j];
            let dx = digit_difference(beta, lb, &deepest.gamma[e.n..], &construction.x0_digits);
            let dy = digit_difference(beta, lb, &deepest.upsilon[e.n..], &construction.y0_digits);
            HitWitness {
                level: level.index,
                n: e.n,
                ln_dist_x: dx.ln_abs(),
                ln_radius_x: e.ln_radius_x,
                ln_dist_y: dy.ln_abs(),
                ln_radius_y: e.ln_radius_y,
                strict: dx.ln_abs() < e.ln_radius_x && dy.ln_abs() < e.ln_radius_y,
            }
        })
        .collect();
    Ok(SampledPoint {
        x: sys.value_of(&deepest.gamma),
        y: sys.value_of(&deepest.upsilon),
        gamma: deepest.gamma.clone(),
        upsilon: deepest.upsilon.clone(),
        path,
        witnesses,
    })
}

/// One line of a level dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub level: usize,
    pub index: usize,
    pub parent: Option<usize>,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub gamma: String,
    pub upsilon: String,
    pub ln_radius_x: f64,
    pub ln_radius_y: f64,
    pub ln_weight: f64,
    pub mass: f64,
}

pub fn level_records(level: &Level) -> impl Iterator<Item = ElementRecord> + '_ {
    level.elements.iter().enumerate().map(move |(j, e)| ElementRecord {
        level: level.index,
        index: j,
        parent: e.parent,
        m: level.m,
        n: e.n,
        k: e.k,
        l: e.l,
        gamma: format_word(&e.gamma),
        upsilon: format_word(&e.upsilon),
        ln_radius_x: e.ln_radius_x,
        ln_radius_y: e.ln_radius_y,
        ln_weight: e.ln_weight,
        mass: e.mass,
    })
}

/// Structural checks over a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pieces: usize,
    /// Pieces where `r > beta^-k > r^{1+eps}` fails on either axis.
    pub sandwich_violations: usize,
    pub k_below_l: usize,
    /// `Gamma_i` or `Upsilon_i` not a full word.
    pub not_full: usize,
    /// Levels whose `m_i` misses the gap condition.
    pub gap_violations: usize,
    /// Largest `|sum of children - parent| / parent` over the renormalised masses
    /// (level 1 compared against total mass one).
    pub conservation_error: f64,
}

impl AuditReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.sandwich_violations == 0
            && self.k_below_l == 0
            && self.not_full == 0
            && self.gap_violations == 0
            && self.conservation_error <= tol
    }
}

pub fn audit(construction: &Construction, spec: &TargetSpec) -> AuditReport {
    let sys = spec.sys.as_ref();
    let lb = sys.ln_beta();
    let eps = construction.config.epsilon;
    let max_len = construction.levels.iter().map(Level::max_len).max().unwrap_or(0);
    let follower = Follower::new(sys, max_len + 1);
    let mut report = AuditReport {
        pieces: 0,
        sandwich_violations: 0,
        k_below_l: 0,
        not_full: 0,
        gap_violations: 0,
        conservation_error: 0.0,
    };
    let f_norm = spec.f.sup_norm();
    let mut prev_len = 0;
    for (li, level) in construction.levels.iter().enumerate() {
        if li > 0 && !gap_holds(level.m, prev_len, f_norm, eps, lb) {
            report.gap_violations += 1;
        }
        prev_len = level.max_len();
        for e in &level.elements {
            report.pieces += 1;
            let sandwich = |order: usize, ln_r: f64| {
                let len = -(order as f64) * lb;
                ln_r > len && len > (1.0 + eps) * ln_r
            };
            if !sandwich(e.k, e.ln_radius_x) || !sandwich(e.l, e.ln_radius_y) {
                report.sandwich_violations += 1;
            }
            if e.k < e.l {
                report.k_below_l += 1;
            }
            if follower.run(&e.gamma) != Some(0) || follower.run(&e.upsilon) != Some(0) {
                report.not_full += 1;
            }
        }
        let rel = |sum: f64, parent: f64| (sum - parent).abs() / parent;
        if li == 0 {
            let total: f64 = level.elements.iter().map(|e| e.mass).sum();
            report.conservation_error = report.conservation_error.max(rel(total, 1.0));
        }
        if let Some(next) = construction.levels.get(li + 1) {
            for p in level.elements.iter().filter(|p| p.child_count > 0) {
                let sum: f64 = next.elements[p.first_child..p.first_child + p.child_count]
                    .iter()
                    .map(|e| e.mass)
                    .sum();
                report.conservation_error = report.conservation_error.max(rel(sum, p.mass));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::golden_ratio;
    use crate::potentials::Potential;
    use rand::Rng;
    use std::sync::Arc;

    const LN2: f64 = std::f64::consts::LN_2;

    fn binary_spec() -> TargetSpec {
        let sys = Arc::new(BetaSystem::new(2.0).unwrap());
        TargetSpec::new(sys, Potential::constant(LN2), Potential::constant(LN2), 0.5, 0.5).unwrap()
    }

    fn binary_config() -> CantorConfig {
        CantorConfig {
            epsilon: 0.3,
            zero_block: 1,
            depth: 2,
            m_schedule: "8,auto".parse().unwrap(),
            seed: 7,
            ..CantorConfig::default()
        }
    }

    #[test]
    fn schedule_parsing() {
        let m: MSchedule = "8, auto,12".parse().unwrap();
        assert_eq!(m.0, vec![Some(8), None, Some(12)]);
        assert_eq!(m.to_string(), "8,auto,12");
        assert_eq!("auto".parse::<MSchedule>().unwrap(), MSchedule::auto());
        assert!("8,x".parse::<MSchedule>().is_err());
        assert_eq!("case_ii".parse::<MassCase>().unwrap(), MassCase::CaseII);
    }

    #[test]
    fn digit_difference_matches_float() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lb = LN2;
        for _ in 0..500 {
            let a: Vec<u8> = (0..rng.gen_range(1..20)).map(|_| rng.gen_range(0..2)).collect();
            let b: Vec<u8> = (0..rng.gen_range(1..20)).map(|_| rng.gen_range(0..2)).collect();
            let val = |w: &[u8]| w.iter().enumerate().map(|(i, &d)| f64::from(d) * 0.5f64.powi(i as i32 + 1)).sum::<f64>();
            let d = digit_difference(2.0, lb, &a, &b).to_f64();
            let want = val(&a) - val(&b);
            assert!((d - want).abs() <= 1e-14 * want.abs(), "{a:?} {b:?} {d} {want}");
        }
    }

    #[test]
    fn packing_agrees_with_brute_force() {
        let sys = BetaSystem::new(1.5).unwrap();
        let follower = Follower::new(&sys, 200);
        for &(x0, ln_r) in &[(0.5, -3.0), (0.3, -4.2), (0.9, -2.5), (0.75, -5.0)] {
            let target = sys.target_digits(x0, 120).unwrap();
            let got = pack_full_cylinder(&sys, &follower, &target, ln_r, 0.5, 10_000).unwrap();
            let r = ln_r.exp();
            let lb = sys.ln_beta();
            // Oracle: every admissible word of each order, checked with floats.
            let mut expected = None;
            'outer: for k in 1..40usize {
                let len = -(k as f64) * lb;
                if !(len < ln_r && len > 1.5 * ln_r) {
                    continue;
                }
                for w in enumerate_words(&sys, k, WordFilter::FullOnly, 1e7).unwrap() {
                    let left = sys.value_of(&w);
                    let right = left + sys.beta().powi(-(k as i32));
                    if left > x0 - r && right < x0 + r {
                        expected = Some(w);
                        break 'outer;
                    }
                }
            }
            let expected = expected.unwrap();
            assert_eq!(got.order, expected.len());
            assert_eq!(got.word, expected, "x0 = {x0}");
        }
    }

    #[test]
    fn hypothesis_violation_is_reported() {
        let sys = Arc::new(BetaSystem::new(2.0).unwrap());
        let err = TargetSpec::new(sys, Potential::constant(0.1), Potential::constant(0.2), 0.5, 0.5).unwrap_err();
        assert!(err.is_hypothesis_violation());
    }

    #[test]
    fn explicit_m_must_satisfy_gap() {
        let mut cfg = binary_config();
        cfg.m_schedule = "8,40".parse().unwrap();
        let err = build_levels(&binary_spec(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
        // 17 ln 2 (1.3)/(0.3 ln 2) = 73.67.
        assert_eq!(minimal_gap(17, LN2, 0.3, LN2), 74);
    }

    #[test]
    fn binary_two_level_construction() {
        let spec = binary_spec();
        let c = construct(&spec, &binary_config()).unwrap();
        assert!(!c.strengthened_hypothesis);
        assert_eq!(c.case, Some(MassCase::CaseII));
        let (l1, l2) = (&c.levels[0], &c.levels[1]);
        // Full binary words of length 8 ending in 0: 2^7 of each.
        assert_eq!(l1.elements.len(), 128 * 128);
        assert_eq!(l1.k_range(), (9, 9));
        assert_eq!(l1.l_range(), (9, 9));
        assert_eq!(l2.m, 76);
        assert_eq!(l2.elements.len(), 128 * 128 * 4);
        assert!(l2.elements.iter().all(|e| e.n == 93 && e.k == 94 && e.l == 94));
        assert!((l2.elements[0].ln_side(LN2) + 187.0 * LN2).abs() < 1e-9);
        // Case II with f = g = ln 2: 4^{m-1} (4^m)^{-s} = 1 gives s = (m-1)/m.
        assert!((l1.s - 7.0 / 8.0).abs() < 1e-12);
        assert!((l2.s - 75.0 / 76.0).abs() < 1e-12);
        for e in &l1.elements {
            assert!((e.ln_weight + 14.0 * LN2).abs() < 1e-9);
        }
        for e in &l2.elements {
            assert!((e.ln_weight + 164.0 * LN2).abs() < 1e-9);
        }
    }

    #[test]
    fn masses_conserve_and_obey_length_bound() {
        let spec = binary_spec();
        let c = construct(&spec, &binary_config()).unwrap();
        let total: f64 = c.levels[0].elements.iter().map(|e| e.mass).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for p in &c.levels[0].elements {
            let kids = &c.levels[1].elements[p.first_child..p.first_child + p.child_count];
            let sum: f64 = kids.iter().map(|e| e.mass).sum();
            assert!((sum - p.mass).abs() <= 1e-12 * p.mass);
        }
        assert!(mass_vs_length_check(&c, LN2, 0.9).passes);
        let report = audit(&c, &spec);
        assert!(report.passes(1e-12), "{report:?}");
        assert_eq!(report.pieces, 128 * 128 * 5);
        assert!(!mass_vs_length_check(&c, LN2, 1.5).passes);
    }

    #[test]
    fn sampled_points_carry_strict_witnesses() {
        let spec = binary_spec();
        let c = construct(&spec, &binary_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = sample_point(&c, &spec.sys, &mut rng).unwrap();
            assert_eq!(p.witnesses.len(), 2);
            assert!(p.witnesses.iter().all(|w| w.strict), "{:?}", p.witnesses);
        }
    }

    #[test]
    fn golden_depth_one_sandwich() {
        let sys = Arc::new(BetaSystem::new(golden_ratio()).unwrap());
        let spec = TargetSpec::new(sys.clone(), Potential::constant(1.0), Potential::constant(0.5), 1.0, 0.3).unwrap();
        let cfg = CantorConfig { epsilon: 0.5, zero_block: 2, depth: 1, ..CantorConfig::default() };
        let c = construct(&spec, &cfg).unwrap();
        let lb = sys.ln_beta();
        let follower = Follower::new(&sys, 200);
        assert!(!c.levels[0].elements.is_empty());
        for e in &c.levels[0].elements {
            for (order, ln_r) in [(e.k, e.ln_radius_x), (e.l, e.ln_radius_y)] {
                let len = -(order as f64) * lb;
                assert!(ln_r > len && len > 1.5 * ln_r);
            }
            assert!(e.k >= e.l);
            assert_eq!(follower.run(&e.gamma), Some(0));
            assert_eq!(follower.run(&e.upsilon), Some(0));
            assert_eq!(e.gamma.len(), e.upsilon.len());
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let spec = binary_spec();
        let mut cfg = binary_config();
        cfg.element_budget = 2048;
        let a = construct(&spec, &cfg).unwrap();
        let b = construct(&spec, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
