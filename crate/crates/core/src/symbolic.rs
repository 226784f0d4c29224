//! The admissible language `Sigma_beta^n`: membership, enumeration, counting,
//! cylinders, fullness and the covering/packing procedures.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beta::BetaSystem;
use crate::error::{Error, Result};
use crate::numeric::Bracket;

/// A finite digit string.
pub type Word = Vec<u8>;

/// Default guard on the number of words an enumeration may produce.
pub const DEFAULT_ENUM_BUDGET: f64 = 1e8;

/// Compact rendering: digits concatenated when all are below 10, otherwise
/// comma separated.
pub fn format_word(w: &[u8]) -> String {
    if w.iter().all(|&d| d < 10) {
        w.iter().map(|d| char::from(b'0' + d)).collect()
    } else {
        w.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Lexicographic comparison of equal-length digit strings.
pub fn lex_cmp(a: &[u8], b: &[u8]) -> Ordering {
    a.cmp(b)
}

/// Which admissible words an enumeration or count ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordFilter {
    All,
    FullOnly,
    /// Words whose last `N` digits are zero.
    EndsWithZeroBlock(usize),
    /// Full words whose last `N` digits are zero.
    FullEndingWithZeroBlock(usize),
}

impl WordFilter {
    fn zero_block(self) -> usize {
        match self {
            WordFilter::EndsWithZeroBlock(k) | WordFilter::FullEndingWithZeroBlock(k) => k,
            _ => 0,
        }
    }

    fn needs_full(self) -> bool {
        matches!(self, WordFilter::FullOnly | WordFilter::FullEndingWithZeroBlock(_))
    }
}

/// The follower automaton of the beta-shift.
///
/// State `j` means the current suffix agrees with the first `j` digits of the
/// infinite expansion of one, so the next digit is bounded by `eps*_{j+1}`.
/// For simple Parry numbers states are reduced modulo the period.
#[derive(Debug, Clone)]
pub struct Follower {
    eps: Vec<u8>,
    period: Option<usize>,
}

impl Follower {
    /// Automaton able to read words of length up to `depth`.
    pub fn new(sys: &BetaSystem, depth: usize) -> Self {
        match sys.period() {
            Some(p) => Self {
                eps: sys.one_prefix(p),
                period: Some(p),
            },
            None => Self {
                eps: sys.one_prefix(depth + 1),
                period: None,
            },
        }
    }

    /// Number of distinct states reachable within the configured depth.
    pub fn num_states(&self) -> usize {
        match self.period {
            Some(p) => p,
            None => self.eps.len() + 1,
        }
    }

    /// Largest digit allowed from `state`.
    #[inline]
    pub fn bound(&self, state: usize) -> u8 {
        self.eps[state]
    }

    #[inline]
    pub fn step(&self, state: usize, d: u8) -> Option<usize> {
        let e = *self.eps.get(state)?;
        match d.cmp(&e) {
            Ordering::Less => Some(0),
            Ordering::Equal => {
                let next = state + 1;
                match self.period {
                    Some(p) if next == p => Some(0),
                    _ => Some(next),
                }
            }
            Ordering::Greater => None,
        }
    }

    /// State after reading `w` from the initial state, or `None` if inadmissible.
    pub fn run(&self, w: &[u8]) -> Option<usize> {
        self.run_from(0, w)
    }

    pub fn run_from(&self, state: usize, w: &[u8]) -> Option<usize> {
        w.iter().try_fold(state, |s, &d| self.step(s, d))
    }

    /// States before each digit plus the final one (`w.len() + 1` entries).
    pub fn trace(&self, w: &[u8]) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(w.len() + 1);
        let mut s = 0;
        out.push(s);
        for &d in w {
            s = self.step(s, d)?;
            out.push(s);
        }
        Some(out)
    }
}

/// Parry's criterion: every suffix of `w` is lexicographically at most the
/// prefix of the infinite expansion of one of the same length.
pub fn is_admissible(sys: &BetaSystem, w: &[u8]) -> bool {
    if w.iter().any(|&d| d > sys.max_digit()) {
        return false;
    }
    Follower::new(sys, w.len()).run(w).is_some()
}

/// Direct suffix-by-suffix form of the criterion, quadratic in `|w|`.
pub fn is_admissible_naive(sys: &BetaSystem, w: &[u8]) -> bool {
    let eps = sys.one_prefix(w.len());
    (0..w.len()).all(|k| w[k..] <= eps[..w.len() - k])
}

/// Completion counts: `table[r][s]` is the number of ways to finish a word
/// with `r` free positions left from state `s` so that the filter holds.
#[derive(Debug, Clone)]
pub struct CompletionTable {
    follower: Follower,
    filter: WordFilter,
    n: usize,
    free: usize,
    table: Vec<Vec<f64>>,
}

impl CompletionTable {
    pub fn new(sys: &BetaSystem, n: usize, filter: WordFilter) -> Result<Self> {
        let zeros = filter.zero_block();
        if zeros > n {
            return Err(Error::Domain(format!("zero block of length {zeros} exceeds word length {n}")));
        }
        let follower = Follower::new(sys, n);
        let free = n - zeros;
        let states = follower.num_states();
        let zero_tail = vec![0u8; zeros];
        let accept = |s: usize| -> bool {
            match follower.run_from(s, &zero_tail) {
                Some(end) => !filter.needs_full() || end == 0,
                None => false,
            }
        };
        let mut table = Vec::with_capacity(free + 1);
        table.push((0..states).map(|s| if accept(s) { 1.0 } else { 0.0 }).collect::<Vec<f64>>());
        for r in 1..=free {
            let prev = &table[r - 1];
            let row = (0..states)
                .map(|s| {
                    if s >= follower.eps.len() {
                        return 0.0;
                    }
                    (0..=follower.bound(s))
                        .filter_map(|d| follower.step(s, d))
                        .filter(|&t| t < states)
                        .map(|t| prev[t])
                        .sum()
                })
                .collect();
            table.push(row);
        }
        Ok(Self {
            follower,
            filter,
            n,
            free,
            table,
        })
    }

    /// Number of admissible length-`n` words matching the filter.
    pub fn total(&self) -> f64 {
        self.table[self.free][0]
    }

    pub fn word_length(&self) -> usize {
        self.n
    }

    pub fn filter(&self) -> WordFilter {
        self.filter
    }

    /// Uniform sample among the matching words.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Word> {
        if self.total() <= 0.0 {
            return None;
        }
        let mut w = Vec::with_capacity(self.n);
        let mut s = 0usize;
        for r in (1..=self.free).rev() {
            let mass = self.table[r][s];
            let mut u = rng.gen::<f64>() * mass;
            let mut chosen = None;
            for d in 0..=self.follower.bound(s) {
                if let Some(t) = self.follower.step(s, d) {
                    let c = self.table[r - 1][t];
                    if c <= 0.0 {
                        continue;
                    }
                    chosen = Some((d, t));
                    if u < c {
                        break;
                    }
                    u -= c;
                }
            }
            let (d, t) = chosen?;
            w.push(d);
            s = t;
        }
        w.resize(self.n, 0);
        Some(w)
    }
}

/// Exact `#Sigma_beta^n` by dynamic programming over follower states.
/// Saturates at `u128::MAX`.
pub fn count_words(sys: &BetaSystem, n: usize) -> u128 {
    count_filtered(sys, n, WordFilter::All)
}

pub fn count_filtered(sys: &BetaSystem, n: usize, filter: WordFilter) -> u128 {
    let zeros = filter.zero_block();
    if zeros > n {
        return 0;
    }
    let follower = Follower::new(sys, n);
    let states = follower.num_states();
    let zero_tail = vec![0u8; zeros];
    let mut cur = vec![0u128; states];
    cur[0] = 1;
    for _ in 0..n - zeros {
        let mut next = vec![0u128; states];
        for (s, &c) in cur.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for d in 0..=follower.bound(s) {
                if let Some(t) = follower.step(s, d) {
                    next[t] = next[t].saturating_add(c);
                }
            }
        }
        cur = next;
    }
    cur.iter()
        .enumerate()
        .filter(|&(s, _)| match follower.run_from(s, &zero_tail) {
            Some(end) => !filter.needs_full() || end == 0,
            None => false,
        })
        .fold(0u128, |acc, (_, &c)| acc.saturating_add(c))
}

/// Natural log of `#Sigma_beta^n`, valid far beyond the `u128` range.
pub fn ln_count_words(sys: &BetaSystem, n: usize) -> f64 {
    let follower = Follower::new(sys, n);
    let states = follower.num_states();
    let mut cur = vec![0f64; states];
    cur[0] = 1.0;
    let mut ln_scale = 0.0;
    for _ in 0..n {
        let mut next = vec![0f64; states];
        for (s, &c) in cur.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for d in 0..=follower.bound(s) {
                if let Some(t) = follower.step(s, d) {
                    next[t] += c;
                }
            }
        }
        let m = next.iter().cloned().fold(0.0, f64::max);
        for v in &mut next {
            *v /= m;
        }
        ln_scale += m.ln();
        cur = next;
    }
    ln_scale + cur.iter().sum::<f64>().ln()
}

/// Renyi's upper bound `beta^{n+1} / (beta - 1)`.
pub fn renyi_upper(beta: f64, n: usize) -> f64 {
    beta.powi(n as i32 + 1) / (beta - 1.0)
}

/// Lexicographic stream of the admissible words of length `n` matching a filter.
#[derive(Debug, Clone)]
pub struct WordIter {
    follower: Follower,
    filter: WordFilter,
    free: usize,
    zeros: usize,
    digits: Vec<u8>,
    states: Vec<usize>,
    started: bool,
    done: bool,
}

/// Streams the words of `Sigma_beta^n` matching `filter` in lexicographic
/// order, refusing when more than `budget` words would be produced.
pub fn enumerate_words(sys: &BetaSystem, n: usize, filter: WordFilter, budget: f64) -> Result<WordIter> {
    if n == 0 {
        return Err(Error::Domain("word length must be at least 1".into()));
    }
    let zeros = filter.zero_block();
    if zeros > n {
        return Err(Error::Domain(format!("zero block of length {zeros} exceeds word length {n}")));
    }
    let predicted = count_filtered(sys, n, filter) as f64;
    if predicted > budget {
        return Err(Error::BudgetExceeded {
            what: format!("enumeration of admissible words of length {n}"),
            predicted,
            budget,
            renyi_bound: renyi_upper(sys.beta(), n),
        });
    }
    let follower = Follower::new(sys, n);
    let free = n - zeros;
    Ok(WordIter {
        follower,
        filter,
        free,
        zeros,
        digits: vec![0; free],
        states: vec![0; free + 1],
        started: false,
        done: false,
    })
}

impl WordIter {
    fn fill_from(&mut self, start: usize) {
        for i in start..self.free {
            self.digits[i] = 0;
            // Digit 0 is always allowed.
            self.states[i + 1] = self.follower.step(self.states[i], 0).unwrap_or(0);
        }
    }

    fn advance(&mut self) -> bool {
        for i in (0..self.free).rev() {
            let s = self.states[i];
            if self.digits[i] < self.follower.bound(s) {
                self.digits[i] += 1;
                self.states[i + 1] = self.follower.step(s, self.digits[i]).unwrap_or(0);
                self.fill_from(i + 1);
                return true;
            }
        }
        false
    }

    fn accepts(&self) -> bool {
        if !self.filter.needs_full() {
            return true;
        }
        let mut s = self.states[self.free];
        for _ in 0..self.zeros {
            s = self.follower.step(s, 0).unwrap_or(usize::MAX);
        }
        s == 0
    }
}

impl Iterator for WordIter {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        loop {
            if self.done {
                return None;
            }
            if !self.started {
                self.started = true;
                self.fill_from(0);
            } else if !self.advance() {
                self.done = true;
                return None;
            }
            if self.accepts() {
                let mut w = Vec::with_capacity(self.free + self.zeros);
                w.extend_from_slice(&self.digits);
                w.resize(self.free + self.zeros, 0);
                return Some(w);
            }
        }
    }
}

/// An order-`n` cylinder `I_n(w)`: the points whose first `n` digits are `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub word: Word,
    pub left: f64,
    pub length: f64,
    pub full: bool,
    pub order: usize,
}

impl Cylinder {
    pub fn right(&self) -> f64 {
        self.left + self.length
    }

    pub fn interval(&self) -> Bracket {
        Bracket::new(self.left, self.right())
    }
}

/// Relative tolerance used when comparing a cylinder length to `beta^-n`.
pub fn full_tolerance(n: usize) -> f64 {
    2.0 * n.max(1) as f64 * f64::EPSILON
}

/// `tau_j = sum_{k >= 1} eps*_{j+k} beta^-k` for every follower state `j`:
/// an order-`n` cylinder ending in state `j` has length `beta^-n tau_j`.
fn state_tails(sys: &BetaSystem, follower: &Follower) -> Vec<f64> {
    let inv = 1.0 / sys.beta();
    match sys.period() {
        Some(p) => {
            let eps = sys.one_prefix(p);
            let denom = 1.0 - inv.powi(p as i32);
            let mut tails: Vec<f64> = (0..p)
                .map(|j| {
                    let block: Vec<u8> = (0..p).map(|k| eps[(j + k) % p]).collect();
                    sys.value_of(&block) / denom
                })
                .collect();
            tails[0] = 1.0;
            tails
        }
        None => {
            let states = follower.num_states();
            // Enough further digits to push the truncation below 2^-60.
            let extra = (60.0 * std::f64::consts::LN_2 / sys.ln_beta()).ceil() as usize;
            let eps = sys.one_prefix(states + extra);
            let mut tails: Vec<f64> = (0..states).map(|j| sys.value_of(&eps[j..j + extra])).collect();
            tails[0] = 1.0;
            tails
        }
    }
}

/// Cylinder computations for one base, reusing the automaton across calls.
#[derive(Debug, Clone)]
pub struct Cylinders<'a> {
    sys: &'a BetaSystem,
    follower: Follower,
    tails: Vec<f64>,
}

impl<'a> Cylinders<'a> {
    pub fn new(sys: &'a BetaSystem, max_order: usize) -> Self {
        let follower = Follower::new(sys, max_order);
        let tails = state_tails(sys, &follower);
        Self { sys, follower, tails }
    }

    pub fn base(&self) -> &BetaSystem {
        self.sys
    }

    pub fn follower(&self) -> &Follower {
        &self.follower
    }

    fn ensure_depth(&mut self, n: usize) {
        if self.sys.period().is_none() && self.follower.eps.len() <= n {
            self.follower = Follower::new(self.sys, 2 * n);
            self.tails = state_tails(self.sys, &self.follower);
        }
    }

    /// Left endpoint, length and fullness of `I_n(w)`.
    ///
    /// The length is the gap to the left endpoint of the lexicographic
    /// successor. Past the pivot digit the word follows the expansion of one,
    /// so that gap equals `beta^-n tau_j` with `j` the final follower state;
    /// this form avoids the cancellation in `1 - tail`.
    pub fn cylinder_of(&mut self, w: &[u8]) -> Result<Cylinder> {
        self.ensure_depth(w.len());
        let end = self
            .follower
            .run(w)
            .ok_or_else(|| Error::Inadmissible(format!("({})", format_word(w))))?;
        let n = w.len();
        let left = self.sys.value_of(w);
        let target = self.sys.beta().powi(-(n as i32));
        let length = target * self.tails[end];
        let full = (length - target).abs() <= full_tolerance(n) * target;
        Ok(Cylinder {
            word: w.to_vec(),
            left,
            length,
            full,
            order: n,
        })
    }

    /// Length computed literally as `left(successor) - left(w)`, or `1 - left`
    /// for the maximal word. Loses relative accuracy when the pivot is far
    /// from the end; kept as a cross-check.
    pub fn length_by_successor(&mut self, w: &[u8]) -> Result<f64> {
        let left = self.sys.value_of(w);
        match self.successor(w) {
            Some(next) => Ok(self.sys.value_of(&next) - left),
            None if is_admissible(self.sys, w) => Ok(1.0 - left),
            None => Err(Error::Inadmissible(format!("({})", format_word(w)))),
        }
    }

    /// Fullness read off the automaton: the word ends in the initial state.
    pub fn ends_in_initial_state(&mut self, w: &[u8]) -> Option<bool> {
        self.ensure_depth(w.len());
        self.follower.run(w).map(|s| s == 0)
    }

    /// Next admissible word of the same length in lexicographic order.
    pub fn successor(&mut self, w: &[u8]) -> Option<Word> {
        self.ensure_depth(w.len());
        let states = self.follower.trace(w)?;
        let i = (0..w.len()).rev().find(|&i| w[i] < self.follower.bound(states[i]))?;
        let mut out = w[..=i].to_vec();
        out[i] += 1;
        out.resize(w.len(), 0);
        Some(out)
    }

    /// Previous admissible word of the same length in lexicographic order.
    pub fn predecessor(&mut self, w: &[u8]) -> Option<Word> {
        self.ensure_depth(w.len());
        self.follower.trace(w)?;
        let i = (0..w.len()).rev().find(|&i| w[i] > 0)?;
        let mut out = w[..=i].to_vec();
        out[i] -= 1;
        // Largest continuation: follow the bound digit by digit.
        let mut s = self.follower.run(&out)?;
        while out.len() < w.len() {
            let d = self.follower.bound(s);
            out.push(d);
            s = self.follower.step(s, d)?;
        }
        Some(out)
    }

    /// The order-`n` word whose cylinder contains `x` in `[0, 1)`.
    pub fn locate(&mut self, x: f64, n: usize) -> Result<Word> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} is outside [0, 1)")));
        }
        self.ensure_depth(n);
        let beta = self.sys.beta();
        let mut w = Vec::with_capacity(n);
        let mut s = 0usize;
        let mut left = 0.0;
        let mut scale = 1.0;
        for _ in 0..n {
            scale /= beta;
            let mut d = self.follower.bound(s);
            while d > 0 && left + f64::from(d) * scale > x {
                d -= 1;
            }
            left += f64::from(d) * scale;
            s = self.follower.step(s, d).unwrap_or(0);
            w.push(d);
        }
        Ok(w)
    }

    /// Order-`l` cylinders covering `J = [lo, lo + beta^-l)`, in order.
    pub fn cover_interval(&mut self, j: Bracket, l: usize) -> Result<Vec<Cylinder>> {
        let expected = self.sys.beta().powi(-(l as i32));
        let actual = j.width();
        if l == 0 || (actual - expected).abs() > 1e-9 * expected {
            return Err(Error::LengthMismatch {
                actual,
                expected,
                order: l,
            });
        }
        if j.lo < 0.0 || j.lo >= 1.0 {
            return Err(Error::Domain(format!("interval [{}, {}) is not inside [0, 1)", j.lo, j.hi)));
        }
        let mut w = self.locate(j.lo, l)?;
        let mut out = Vec::new();
        loop {
            let c = self.cylinder_of(&w)?;
            let stop = c.right() >= j.hi;
            out.push(c);
            if stop {
                break;
            }
            match self.successor(&w) {
                Some(next) => w = next,
                None => break,
            }
        }
        Ok(out)
    }

    /// Scans order-`n` cylinders meeting `J` from left to right and returns
    /// the first full one contained in `J`.
    pub fn first_full_inside(&mut self, j: Bracket, n: usize, max_steps: usize) -> Result<Option<Cylinder>> {
        let mut w = self.locate(j.lo.clamp(0.0, 1.0 - f64::EPSILON), n)?;
        for _ in 0..max_steps {
            let c = self.cylinder_of(&w)?;
            if c.left >= j.hi {
                break;
            }
            if c.full && c.left >= j.lo && c.right() <= j.hi {
                return Ok(Some(c));
            }
            match self.successor(&w) {
                Some(next) => w = next,
                None => break,
            }
        }
        Ok(None)
    }
}

pub fn cylinder_of(sys: &BetaSystem, w: &[u8]) -> Result<Cylinder> {
    Cylinders::new(sys, w.len()).cylinder_of(w)
}

pub fn is_full(sys: &BetaSystem, w: &[u8]) -> Result<bool> {
    cylinder_of(sys, w).map(|c| c.full)
}

pub fn cover_interval(sys: &BetaSystem, j: Bracket, l: usize) -> Result<Vec<Cylinder>> {
    Cylinders::new(sys, l).cover_interval(j, l)
}

/// Smallest `n0` with `2 m^2 beta < beta^{(m-1) eps}` for every `m >= n0`.
pub fn packing_threshold(beta: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let lb = beta.ln();
    let g = |m: f64| (m - 1.0) * epsilon * lb - (2.0 * m * m * beta).ln();
    // g is increasing once m > 2 / (eps ln beta), so the first success past
    // that point settles every larger m.
    let turn = (2.0 / (epsilon * lb)).ceil() as usize + 1;
    let mut last_fail = 0usize;
    let mut m = 1usize;
    loop {
        if g(m as f64) <= 0.0 {
            last_fail = m;
        } else if m >= turn {
            break;
        }
        m += 1;
        if m > 1_000_000 {
            return Err(Error::NoConvergence("packing threshold search".into()));
        }
    }
    Ok(last_fail + 1)
}

/// Packing property as proved: requires `r < 2 n0 beta^-n0`, picks `n` with
/// `2 n beta^-n <= r < 2 (n-1) beta^-(n-1)` and returns a full order-`n`
/// cylinder inside `J`.
pub fn find_full_cylinder_in(sys: &BetaSystem, j: Bracket, epsilon: f64) -> Result<Cylinder> {
    let r = j.width();
    let beta = sys.beta();
    let n0 = packing_threshold(beta, epsilon)?;
    let bound = 2.0 * n0 as f64 * beta.powi(-(n0 as i32));
    if !(r > 0.0 && r < bound) {
        return Err(Error::Precondition(format!(
            "interval length {r} must lie in (0, 2 n0 beta^-n0) = (0, {bound:e}) with n0 = {n0}"
        )));
    }
    let h = |n: usize| 2.0 * n as f64 * beta.powi(-(n as i32));
    let mut n = n0;
    while h(n) > r {
        n += 1;
    }
    let mut cyl = Cylinders::new(sys, n);
    let found = cyl.first_full_inside(j, n, 4 * (n + 2))?;
    let c = found.ok_or_else(|| {
        Error::NoFullCylinder(format!("no full order-{n} cylinder inside [{}, {})", j.lo, j.hi))
    })?;
    debug_assert!(c.length <= r && c.length > r.powf(1.0 + epsilon));
    Ok(c)
}

/// Packing search without the small-`r` precondition: tries every order `n`
/// with `r^{1+eps} < beta^-n <= r`, coarsest first, and returns the first full
/// cylinder found inside `J`.
pub fn find_full_cylinder_relaxed(sys: &BetaSystem, j: Bracket, epsilon: f64, max_steps: usize) -> Result<Cylinder> {
    let r = j.width();
    if !(r > 0.0) {
        return Err(Error::Domain("interval must have positive length".into()));
    }
    let lb = sys.ln_beta();
    let ln_r = r.ln();
    let n_lo = ((-ln_r) / lb).ceil().max(1.0) as usize;
    let mut n = n_lo;
    let mut cyl = Cylinders::new(sys, n_lo + 8);
    while -(n as f64) * lb > (1.0 + epsilon) * ln_r {
        if let Some(c) = cyl.first_full_inside(j, n, max_steps)? {
            return Ok(c);
        }
        n += 1;
    }
    Err(Error::NoFullCylinder(format!(
        "no full cylinder of length in ({:e}, {r:e}] inside [{}, {})",
        r.powf(1.0 + epsilon),
        j.lo,
        j.hi
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::golden_ratio;

    fn brute_force(sys: &BetaSystem, n: usize) -> Vec<Word> {
        let base = u32::from(sys.max_digit()) + 1;
        let total = base.pow(n as u32);
        (0..total)
            .map(|mut k| {
                let mut w = vec![0u8; n];
                for i in (0..n).rev() {
                    w[i] = (k % base) as u8;
                    k /= base;
                }
                w
            })
            .filter(|w| is_admissible_naive(sys, w))
            .collect()
    }

    #[test]
    fn admissibility_examples() {
        let g = BetaSystem::golden();
        assert!(!is_admissible(&g, &[1, 1]));
        assert!(is_admissible(&g, &[1, 0, 1]));
        let two = BetaSystem::new(2.0).unwrap();
        assert!(is_admissible(&two, &[1, 1, 1, 1]));
        assert!(!is_admissible(&two, &[2]));
        for b in [1.3, golden_ratio(), 2.5, 3.7] {
            let sys = BetaSystem::new(b).unwrap();
            assert!(is_admissible(&sys, &[0; 9]));
        }
    }

    #[test]
    fn enumeration_examples() {
        let g = BetaSystem::golden();
        let words: Vec<_> = enumerate_words(&g, 3, WordFilter::All, 1e8).unwrap().collect();
        assert_eq!(words, vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0], vec![1, 0, 1]]);
        let two = BetaSystem::new(2.0).unwrap();
        assert_eq!(enumerate_words(&two, 4, WordFilter::All, 1e8).unwrap().count(), 16);
        let z: Vec<_> = enumerate_words(&g, 2, WordFilter::EndsWithZeroBlock(1), 1e8).unwrap().collect();
        assert_eq!(z, vec![vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for b in [1.2, 1.5, golden_ratio(), 1.8, 2.0, 2.5, 3.0] {
            let sys = BetaSystem::new(b).unwrap();
            for n in 1..=8 {
                let got: Vec<_> = enumerate_words(&sys, n, WordFilter::All, 1e8).unwrap().collect();
                assert_eq!(got, brute_force(&sys, n), "beta = {b}, n = {n}");
                assert_eq!(count_words(&sys, n), got.len() as u128);
            }
        }
    }

    #[test]
    fn counting_examples() {
        let g = BetaSystem::golden();
        assert_eq!(count_words(&g, 10), 144);
        let two = BetaSystem::new(2.0).unwrap();
        assert_eq!(count_words(&two, 10), 1024);
        let b = BetaSystem::new(1.5).unwrap();
        assert_eq!(count_words(&b, 8), 40);
        assert!((ln_count_words(&g, 10) - 144f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn budget_guard() {
        let two = BetaSystem::new(2.0).unwrap();
        let err = enumerate_words(&two, 20, WordFilter::All, 1000.0).unwrap_err();
        assert!(err.is_budget());
    }

    #[test]
    fn filters_agree_with_post_filtering() {
        for b in [1.5, golden_ratio(), 2.3] {
            let sys = BetaSystem::new(b).unwrap();
            let n = 8;
            let all: Vec<_> = enumerate_words(&sys, n, WordFilter::All, 1e8).unwrap().collect();
            let full: Vec<_> = all.iter().filter(|w| is_full(&sys, w).unwrap()).cloned().collect();
            let got: Vec<_> = enumerate_words(&sys, n, WordFilter::FullOnly, 1e8).unwrap().collect();
            assert_eq!(got, full);
            for zeros in 1..=3 {
                let zf: Vec<_> = full.iter().filter(|w| w[n - zeros..].iter().all(|&d| d == 0)).cloned().collect();
                let got: Vec<_> = enumerate_words(&sys, n, WordFilter::FullEndingWithZeroBlock(zeros), 1e8)
                    .unwrap()
                    .collect();
                assert_eq!(got, zf);
                let table = CompletionTable::new(&sys, n, WordFilter::FullEndingWithZeroBlock(zeros)).unwrap();
                assert_eq!(table.total(), zf.len() as f64);
                assert_eq!(count_filtered(&sys, n, WordFilter::FullEndingWithZeroBlock(zeros)), zf.len() as u128);
            }
        }
    }

    #[test]
    fn sampler_hits_only_matching_words() {
        use rand::SeedableRng;
        let sys = BetaSystem::new(1.5).unwrap();
        let table = CompletionTable::new(&sys, 10, WordFilter::FullEndingWithZeroBlock(2)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            let w = table.sample(&mut rng).unwrap();
            assert!(is_full(&sys, &w).unwrap());
            assert_eq!(&w[8..], &[0, 0]);
            seen.insert(w);
        }
        assert_eq!(seen.len() as f64, table.total());
    }

    #[test]
    fn cylinder_examples() {
        let g = BetaSystem::golden();
        let beta = g.beta();
        let c = cylinder_of(&g, &[0]).unwrap();
        assert_eq!(c.left, 0.0);
        assert!((c.length - 1.0 / beta).abs() < 1e-15);
        assert!(c.full);
        let c = cylinder_of(&g, &[1]).unwrap();
        assert!((c.left - 1.0 / beta).abs() < 1e-15);
        assert!((c.length - 1.0 / (beta * beta)).abs() < 1e-15);
        assert!(!c.full);
        let two = BetaSystem::new(2.0).unwrap();
        for w in enumerate_words(&two, 6, WordFilter::All, 1e8).unwrap() {
            let c = cylinder_of(&two, &w).unwrap();
            assert_eq!(c.length, 2f64.powi(-6));
            assert!(c.full);
        }
        assert!(matches!(cylinder_of(&g, &[1, 1]), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn cylinders_partition_and_fullness_matches_automaton() {
        for b in [1.3, 1.5, golden_ratio(), 2.7] {
            let sys = BetaSystem::new(b).unwrap();
            let mut cyl = Cylinders::new(&sys, 10);
            let mut expected_left = 0.0;
            let mut total = 0.0;
            let mut count = 0usize;
            for w in enumerate_words(&sys, 10, WordFilter::All, 1e8).unwrap() {
                let c = cyl.cylinder_of(&w).unwrap();
                assert!((c.left - expected_left).abs() < 1e-12);
                assert!((c.length - cyl.length_by_successor(&w).unwrap()).abs() < 1e-13);
                assert!(c.length <= b.powi(-10) * (1.0 + 1e-12));
                assert_eq!(Some(c.full), cyl.ends_in_initial_state(&w), "beta = {b}, w = {w:?}, len = {}", c.length);
                expected_left = c.right();
                total += c.length;
                count += 1;
            }
            assert!((total - 1.0).abs() <= 10.0 * f64::EPSILON * count as f64);
        }
    }

    #[test]
    fn successor_and_predecessor_walk_the_language() {
        let sys = BetaSystem::new(1.8).unwrap();
        let mut cyl = Cylinders::new(&sys, 7);
        let words: Vec<_> = enumerate_words(&sys, 7, WordFilter::All, 1e8).unwrap().collect();
        for pair in words.windows(2) {
            assert_eq!(cyl.successor(&pair[0]).as_ref(), Some(&pair[1]));
            assert_eq!(cyl.predecessor(&pair[1]).as_ref(), Some(&pair[0]));
        }
        assert_eq!(cyl.successor(words.last().unwrap()), None);
        assert_eq!(cyl.predecessor(&words[0]), None);
    }

    #[test]
    fn locate_finds_containing_cylinder() {
        let sys = BetaSystem::new(2.4).unwrap();
        let mut cyl = Cylinders::new(&sys, 12);
        for k in 0..500 {
            let x = (k as f64 + 0.37) / 500.0;
            let w = cyl.locate(x, 12).unwrap();
            let c = cyl.cylinder_of(&w).unwrap();
            assert!(c.left <= x + 1e-14 && x < c.right() + 1e-14, "x = {x}");
        }
    }

    #[test]
    fn cover_examples() {
        let two = BetaSystem::new(2.0).unwrap();
        let cover = cover_interval(&two, Bracket::new(0.25, 0.5), 2).unwrap();
        assert_eq!(cover.len(), 1);
        assert_eq!(cover[0].word, vec![0, 1]);

        let g = BetaSystem::golden();
        let len = g.beta().powi(-3);
        let j = Bracket::new(0.3, 0.3 + len);
        let cover = cover_interval(&g, j, 3).unwrap();
        // Direct construction: every order-3 cylinder meeting J.
        let direct: Vec<_> = enumerate_words(&g, 3, WordFilter::All, 1e8)
            .unwrap()
            .map(|w| cylinder_of(&g, &w).unwrap())
            .filter(|c| c.right() > j.lo && c.left < j.hi)
            .map(|c| c.word)
            .collect();
        let got: Vec<_> = cover.iter().map(|c| c.word.clone()).collect();
        assert_eq!(got, direct);
        assert!(cover.len() <= 8);

        assert!(matches!(
            cover_interval(&two, Bracket::new(0.1, 0.2), 2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn packing_threshold_matches_direct_scan() {
        for (b, e) in [(2.0, 0.5), (golden_ratio(), 0.3), (3.0, 0.9)] {
            let n0 = packing_threshold(b, e).unwrap();
            let ok = |m: usize| 2.0 * (m * m) as f64 * b < b.powf((m as f64 - 1.0) * e);
            assert!((n0..n0 + 5000).all(ok));
            assert!(n0 == 1 || !ok(n0 - 1));
        }
        assert_eq!(packing_threshold(2.0, 0.5).unwrap(), 24);
    }

    #[test]
    fn strict_packing() {
        let two = BetaSystem::new(2.0).unwrap();
        let j = Bracket::new(0.3, 0.3 + 1e-6);
        let c = find_full_cylinder_in(&two, j, 0.5).unwrap();
        assert!(c.full);
        assert!(c.left >= j.lo && c.right() <= j.hi);
        assert!(c.length <= 1e-6 && c.length > 1e-9);
        assert_eq!(c.order, 26);

        let g = BetaSystem::golden();
        let err = find_full_cylinder_in(&g, Bracket::new(0.4995, 0.5005), 0.3).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn relaxed_packing() {
        let g = BetaSystem::golden();
        let j = Bracket::new(0.4995, 0.5005);
        let c = find_full_cylinder_relaxed(&g, j, 0.3, 10_000).unwrap();
        assert!(c.full && c.left >= j.lo && c.right() <= j.hi);
        assert!(c.length <= 1e-3 && c.length > 1e-3f64.powf(1.3));

        // Longest dyadic interval inside [0.3, 0.4875] has length 1/16 < 0.1875^1.5.
        let two = BetaSystem::new(2.0).unwrap();
        let j = Bracket::new(0.3, 0.3 + 12.0 / 64.0);
        assert!(matches!(
            find_full_cylinder_relaxed(&two, j, 0.5, 10_000),
            Err(Error::NoFullCylinder(_))
        ));
        let c = find_full_cylinder_relaxed(&two, j, 0.9, 10_000).unwrap();
        assert_eq!(c.length, 1.0 / 16.0);
    }
}
