//! Independent cross-checks: box counting of the finite-stage target set and
//! an audit of the mass distribution built by the Cantor construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::BetaSystem;
use crate::cantor::{digit_difference, sample_point, Construction};
use crate::error::{Error, Result};
use crate::numeric::{Bracket, LogReal, LogSumExp};
use crate::potentials::{Potential, TargetSpec};
use crate::symbolic::{count_words, enumerate_words, Cylinders, WordFilter};

pub const DEFAULT_RECT_BUDGET: f64 = 1e7;

/// `J_n(U)` for every admissible `U` of length `n`: the part of `I_n(U)` whose
/// `n`-th iterate lies within `e^{-S_n p(x*)}` of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageIntervals {
    pub n: usize,
    pub intervals: Vec<Bracket>,
    /// Intervals whose width vanished at `f64` resolution.
    pub dropped: usize,
}

fn stage_intervals(sys: &BetaSystem, p: &Potential, x0: f64, n: usize) -> Result<StageIntervals> {
    let mut cyl = Cylinders::new(sys, n);
    let scale = sys.beta().powi(-(n as i32));
    let mut intervals = Vec::new();
    let mut dropped = 0;
    for w in enumerate_words(sys, n, WordFilter::All, f64::INFINITY)? {
        let c = cyl.cylinder_of(&w)?;
        let half = scale * (-p.ergodic_sum_at_word(sys, &w)).exp();
        let centre = c.left + x0 * scale;
        let lo = (centre - half).max(c.left).max(0.0);
        let hi = (centre + half).min(c.right()).min(1.0);
        if !(hi > lo) || centre - half == centre + half {
            dropped += 1;
            continue;
        }
        intervals.push(Bracket::new(lo, hi));
    }
    Ok(StageIntervals { n, intervals, dropped })
}

/// `union_{n in [n_lo, n_hi]} union_{U, W} J_n(U) x J_n(W)`, stored per `n`
/// as the two interval families whose products are the rectangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteStageSet {
    pub stages: Vec<(StageIntervals, StageIntervals)>,
}

/// Axis-parallel rectangle `x times y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: Bracket,
    pub y: Bracket,
}

impl Rect {
    pub fn area(&self) -> f64 {
        self.x.width() * self.y.width()
    }
}

impl FiniteStageSet {
    pub fn rectangle_count(&self) -> usize {
        self.stages.iter().map(|(x, y)| x.intervals.len() * y.intervals.len()).sum()
    }

    pub fn dropped(&self) -> usize {
        self.stages.iter().map(|(x, y)| x.dropped + y.dropped).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangle_count() == 0
    }

    pub fn rectangles(&self) -> impl Iterator<Item = Rect> + '_ {
        self.stages.iter().flat_map(|(xs, ys)| {
            xs.intervals
                .iter()
                .flat_map(move |&x| ys.intervals.iter().map(move |&y| Rect { x, y }))
        })
    }

    /// Total area of the rectangles of order `n`.
    pub fn area_at(&self, n: usize) -> f64 {
        self.stages
            .iter()
            .filter(|(x, _)| x.n == n)
            .map(|(x, y)| {
                let wx: f64 = x.intervals.iter().map(Bracket::width).sum();
                let wy: f64 = y.intervals.iter().map(Bracket::width).sum();
                wx * wy
            })
            .sum()
    }
}

pub fn finite_stage_set(spec: &TargetSpec, n_lo: usize, n_hi: usize, budget: f64) -> Result<FiniteStageSet> {
    if n_lo > n_hi {
        return Ok(FiniteStageSet { stages: Vec::new() });
    }
    let sys = spec.sys.as_ref();
    let predicted: f64 = (n_lo.max(1)..=n_hi).map(|n| (count_words(sys, n) as f64).powi(2)).sum();
    if predicted > budget {
        return Err(Error::BudgetExceeded {
            what: format!("finite-stage rectangles for n in [{n_lo}, {n_hi}]"),
            predicted,
            budget,
            renyi_bound: (n_lo.max(1)..=n_hi)
                .map(|n| crate::symbolic::renyi_upper(sys.beta(), n).powi(2))
                .sum(),
        });
    }
    let stages = (n_lo.max(1)..=n_hi)
        .into_par_iter()
        .map(|n| {
            Ok((
                stage_intervals(sys, &spec.f, spec.x0, n)?,
                stage_intervals(sys, &spec.g, spec.y0, n)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let set = FiniteStageSet { stages };
    if set.dropped() > 0 {
        log::warn!("{} stage intervals fell below f64 resolution and were dropped", set.dropped());
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCount {
    pub k: u32,
    pub occupied: u64,
    /// `log(occupied) / (k log 2)`; absent for an empty set.
    pub dim_estimate: Option<f64>,
}

/// Grid cells of side `2^-k` met by the open interval `(lo, hi)`.
fn cell_span(iv: &Bracket, k: u32) -> Option<(usize, usize)> {
    let m = (1u64 << k) as f64;
    let last = (1usize << k) - 1;
    let a = (iv.lo * m).floor().max(0.0) as usize;
    let b = ((iv.hi * m).ceil() - 1.0).max(0.0) as usize;
    (iv.hi > iv.lo && a <= last).then(|| (a, b.min(last).max(a)))
}

struct Grid {
    k: u32,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl Grid {
    fn new(k: u32) -> Result<Self> {
        if k > 15 {
            return Err(Error::Config(format!("grid exponent {k} too large (at most 15)")));
        }
        let side = 1usize << k;
        let words_per_row = side.div_ceil(64);
        Ok(Self { k, words_per_row, bits: vec![0; side * words_per_row] })
    }

    /// Marks the cells of `cols x rows` given as column and row masks.
    fn mark(&mut self, cols: &[bool], rows: &[u64]) {
        for (c, _) in cols.iter().enumerate().filter(|(_, &on)| on) {
            let row = &mut self.bits[c * self.words_per_row..(c + 1) * self.words_per_row];
            row.iter_mut().zip(rows).for_each(|(a, b)| *a |= b);
        }
    }

    fn result(&self) -> BoxCount {
        let occupied: u64 = self.bits.iter().map(|w| u64::from(w.count_ones())).sum();
        BoxCount {
            k: self.k,
            occupied,
            dim_estimate: (occupied > 0).then(|| (occupied as f64).ln() / (f64::from(self.k) * std::f64::consts::LN_2)),
        }
    }
}

fn masks(intervals: &[Bracket], k: u32) -> (Vec<bool>, Vec<u64>) {
    let side = 1usize << k;
    let mut cols = vec![false; side];
    let mut rows = vec![0u64; side.div_ceil(64)];
    for iv in intervals {
        if let Some((a, b)) = cell_span(iv, k) {
            for c in a..=b {
                cols[c] = true;
                rows[c / 64] |= 1 << (c % 64);
            }
        }
    }
    (cols, rows)
}

/// Occupied cells of the `2^k x 2^k` grid for arbitrary rectangles.
pub fn box_count<'a>(rects: impl IntoIterator<Item = &'a Rect>, k: u32) -> Result<BoxCount> {
    let mut grid = Grid::new(k)?;
    for r in rects {
        let (cols, _) = masks(&[r.x], k);
        let (_, rows) = masks(&[r.y], k);
        grid.mark(&cols, &rows);
    }
    Ok(grid.result())
}

/// Same count for a finite-stage set, using that each stage is a full product
/// of its two interval families.
pub fn box_count_stages(set: &FiniteStageSet, k: u32) -> Result<BoxCount> {
    let mut grid = Grid::new(k)?;
    for (xs, ys) in &set.stages {
        if xs.intervals.is_empty() || ys.intervals.is_empty() {
            continue;
        }
        let (cols, _) = masks(&xs.intervals, k);
        let (_, rows) = masks(&ys.intervals, k);
        grid.mark(&cols, &rows);
    }
    Ok(grid.result())
}

/// The `(k, occupied)` table used to watch the estimate across resolutions.
pub fn box_count_table(set: &FiniteStageSet, ks: impl IntoIterator<Item = u32>) -> Result<Vec<BoxCount>> {
    ks.into_iter().map(|k| box_count_stages(set, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpOptions {
    pub balls: usize,
    pub seed: u64,
}

impl Default for MdpOptions {
    fn default() -> Self {
        Self { balls: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpReport {
    pub s: f64,
    /// `s/(1+eps) - eps`, the exponent actually tested.
    pub exponent: f64,
    pub c: f64,
    pub delta: f64,
    pub cylinders_checked: usize,
    pub cylinder_violations: usize,
    /// Largest `ln mu - ln(c |U|^exponent)` over pieces; `<= 0` is good.
    pub worst_cylinder_margin: f64,
    pub balls_tested: usize,
    /// Radius below the side of the deepest pieces.
    pub balls_skipped_small: usize,
    /// Radius at least `delta`.
    pub balls_excluded_large: usize,
    pub ball_violations: usize,
    pub worst_ball_margin: f64,
    /// Most distinct order-`n` columns met by one ball on either axis, where
    /// `beta^-n` is the first scale not below the radius.
    pub max_columns: usize,
    pub column_violations: usize,
    pub passes: bool,
}

struct BallResult {
    ln_mass: f64,
    columns: usize,
}

/// Weight of the deepest pieces meeting the square ball of log-radius `ln_r`
/// around a point given by its digits.
fn ball_measure(
    construction: &Construction,
    sys: &BetaSystem,
    index: &[(f64, usize)],
    lefts: &[(f64, f64)],
    cx: (&[u8], &[u8]),
    ln_r: f64,
) -> BallResult {
    let (beta, lb) = (sys.beta(), sys.ln_beta());
    let radius = LogReal::from_ln(ln_r);
    let levels = &construction.levels;
    let meets = |e: &crate::cantor::LevelElement| -> bool {
        let side = LogReal::from_ln(e.ln_side(lb));
        [(&e.gamma, cx.0), (&e.upsilon, cx.1)].iter().all(|(w, c)| {
            let d = digit_difference(beta, lb, w, c);
            d.sub(&radius).sign() < 0 && d.add(&side).add(&radius).sign() > 0
        })
    };
    let (x, y) = (sys.value_of(cx.0), sys.value_of(cx.1));
    let r = ln_r.exp();
    let first = &levels[0].elements;
    let side1 = first.iter().map(|e| e.ln_side(lb)).fold(f64::NEG_INFINITY, f64::max).exp();
    let slack = 1e-12;
    let lo = index.partition_point(|&(xl, _)| xl < x - r - side1 - slack);
    let mut stack: Vec<(usize, usize)> = index[lo..]
        .iter()
        .take_while(|&&(xl, _)| xl < x + r + slack)
        .map(|&(_, j)| j)
        .filter(|&j| {
            let yl = lefts[j].1;
            yl < y + r + slack && yl + side1 > y - r - slack
        })
        .map(|j| (0, j))
        .collect();
    let order = ((-ln_r / lb).floor().max(0.0)) as usize;
    let mut acc = LogSumExp::new();
    let mut xcols = std::collections::BTreeSet::new();
    let mut ycols = std::collections::BTreeSet::new();
    while let Some((li, j)) = stack.pop() {
        let e = &levels[li].elements[j];
        if !meets(e) {
            continue;
        }
        if li + 1 == levels.len() {
            acc.add(e.ln_weight);
            if order <= e.gamma.len() {
                xcols.insert(e.gamma[..order].to_vec());
                ycols.insert(e.upsilon[..order].to_vec());
            }
        } else {
            stack.extend((e.first_child..e.first_child + e.child_count).map(|c| (li + 1, c)));
        }
    }
    BallResult { ln_mass: acc.value(), columns: xcols.len().max(ycols.len()) }
}

/// Mass distribution audit with exponent `s/(1+eps) - eps` against the
/// weights of the constructed pieces: every piece, then random square balls
/// centred at sampled points of the construction.
pub fn mdp_audit(
    construction: &Construction,
    sys: &BetaSystem,
    s: f64,
    c: f64,
    delta: f64,
    options: &MdpOptions,
) -> Result<MdpReport> {
    let levels = &construction.levels;
    if levels.is_empty() || levels[0].elements.is_empty() {
        return Err(Error::Precondition("construction has no pieces".into()));
    }
    if !(c > 0.0 && delta > 0.0) {
        return Err(Error::Domain(format!("c = {c} and delta = {delta} must be positive")));
    }
    let eps = construction.config.epsilon;
    let exponent = s / (1.0 + eps) - eps;
    let lb = sys.ln_beta();
    let ln_c = c.ln();
    let mut report = MdpReport {
        s,
        exponent,
        c,
        delta,
        cylinders_checked: 0,
        cylinder_violations: 0,
        worst_cylinder_margin: f64::NEG_INFINITY,
        balls_tested: 0,
        balls_skipped_small: 0,
        balls_excluded_large: 0,
        ball_violations: 0,
        worst_ball_margin: f64::NEG_INFINITY,
        max_columns: 0,
        column_violations: 0,
        passes: false,
    };
    for level in levels {
        for e in &level.elements {
            let diam = e.ln_side(lb) + 0.5 * std::f64::consts::LN_2;
            let margin = e.ln_weight - (ln_c + exponent * diam);
            report.cylinders_checked += 1;
            report.worst_cylinder_margin = report.worst_cylinder_margin.max(margin);
            if margin > 1e-9 {
                report.cylinder_violations += 1;
            }
        }
    }

    let first = &levels[0].elements;
    let lefts: Vec<(f64, f64)> = first.iter().map(|e| (sys.value_of(&e.gamma), sys.value_of(&e.upsilon))).collect();
    let mut index: Vec<(f64, usize)> = lefts.iter().enumerate().map(|(j, &(x, _))| (x, j)).collect();
    index.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let deepest = &levels[levels.len() - 1].elements;
    let ln_floor = deepest.iter().map(|e| e.ln_side(lb)).fold(f64::INFINITY, f64::min);
    let ln_delta = delta.ln();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut balls = Vec::with_capacity(options.balls);
    for _ in 0..options.balls {
        let p = sample_point(construction, sys, &mut rng)?;
        let ln_r = rng.gen_range(ln_floor - 2.0 * lb..ln_delta + lb);
        balls.push((p, ln_r));
    }
    let results: Vec<Option<BallResult>> = balls
        .par_iter()
        .map(|(p, ln_r)| {
            if *ln_r < ln_floor || *ln_r >= ln_delta {
                return None;
            }
            Some(ball_measure(construction, sys, &index, &lefts, (&p.gamma, &p.upsilon), *ln_r))
        })
        .collect();
    for ((_, ln_r), res) in balls.iter().zip(results) {
        match res {
            None if *ln_r < ln_floor => report.balls_skipped_small += 1,
            None => report.balls_excluded_large += 1,
            Some(b) => {
                report.balls_tested += 1;
                let diam = ln_r + std::f64::consts::LN_2;
                let margin = b.ln_mass - (ln_c + exponent * diam);
                report.worst_ball_margin = report.worst_ball_margin.max(margin);
                if margin > 1e-9 {
                    report.ball_violations += 1;
                }
                report.max_columns = report.max_columns.max(b.columns);
                if b.columns > 3 {
                    report.column_violations += 1;
                }
            }
        }
    }
    report.passes = report.cylinder_violations == 0 && report.ball_violations == 0 && report.column_violations == 0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::{construct, CantorConfig, MassCase};
    use std::sync::Arc;

    const LN2: f64 = std::f64::consts::LN_2;

    fn constants(beta: f64, a: f64, b: f64) -> TargetSpec {
        let sys = Arc::new(BetaSystem::new(beta).unwrap());
        TargetSpec::new(sys, Potential::constant(a), Potential::constant(b), 0.5, 0.5).unwrap()
    }

    #[test]
    fn binary_stage_widths_and_counts() {
        let set = finite_stage_set(&constants(2.0, LN2, LN2), 4, 6, DEFAULT_RECT_BUDGET).unwrap();
        for (xs, ys) in &set.stages {
            let n = xs.n as i32;
            assert_eq!(xs.intervals.len(), 1 << n);
            assert_eq!(ys.intervals.len(), 1 << n);
            let width = 2.0 * 4f64.powi(-n);
            for iv in xs.intervals.iter().chain(&ys.intervals) {
                assert!((iv.width() - width).abs() < 1e-15);
            }
            // 4^n rectangles, each a square of side 2 beta^-n e^{-n c}.
            let area = 4f64.powi(n) * width * width;
            assert!((set.area_at(xs.n) - area).abs() < 1e-12 * area);
        }
        assert_eq!(set.rectangle_count(), 16 * 16 + 32 * 32 + 64 * 64);
        assert_eq!(set.dropped(), 0);
    }

    #[test]
    fn vanishing_widths_are_dropped() {
        let set = finite_stage_set(&constants(2.0, 800.0, 0.5), 3, 3, DEFAULT_RECT_BUDGET).unwrap();
        assert_eq!(set.stages[0].0.dropped, 8);
        assert!(set.is_empty());
        assert!(finite_stage_set(&constants(2.0, 1.0, 1.0), 5, 4, DEFAULT_RECT_BUDGET).unwrap().is_empty());
        let err = finite_stage_set(&constants(2.0, 1.0, 1.0), 1, 20, 1e6).unwrap_err();
        assert!(err.is_budget());
    }

    #[test]
    fn box_count_trivial_cases() {
        let unit = Rect { x: Bracket::new(0.0, 1.0), y: Bracket::new(0.0, 1.0) };
        for k in 1..6 {
            let b = box_count([&unit], k).unwrap();
            assert_eq!(b.occupied, 1 << (2 * k));
            assert!((b.dim_estimate.unwrap() - 2.0).abs() < 1e-12);
        }
        let b = box_count(std::iter::empty(), 4).unwrap();
        assert_eq!(b.occupied, 0);
        assert!(b.dim_estimate.is_none());
    }

    #[test]
    fn product_count_matches_rectangle_count() {
        let spec = constants(1.5, 0.9, 0.4);
        let set = finite_stage_set(&spec, 2, 7, DEFAULT_RECT_BUDGET).unwrap();
        let rects: Vec<Rect> = set.rectangles().collect();
        assert_eq!(rects.len(), set.rectangle_count());
        for k in [3, 6, 9] {
            assert_eq!(box_count(&rects, k).unwrap(), box_count_stages(&set, k).unwrap());
        }
    }

    #[test]
    fn box_count_grows_with_more_stages() {
        let spec = constants(2.0, LN2, LN2);
        let mut last = 0;
        for hi in 6..=9 {
            let set = finite_stage_set(&spec, 6, hi, DEFAULT_RECT_BUDGET).unwrap();
            let b = box_count_stages(&set, 9).unwrap();
            assert!(b.occupied >= last);
            last = b.occupied;
        }
    }

    fn case_one() -> (TargetSpec, Construction) {
        let spec = constants(2.0, 0.5, 0.5);
        let cfg = CantorConfig {
            epsilon: 0.3,
            zero_block: 1,
            depth: 2,
            m_schedule: "6,auto".parse().unwrap(),
            seed: 5,
            ..CantorConfig::default()
        };
        let c = construct(&spec, &cfg).unwrap();
        assert_eq!(c.case, Some(MassCase::CaseI));
        (spec, c)
    }

    #[test]
    fn mdp_audit_passes_below_s0_and_fails_well_above() {
        let (spec, c) = case_one();
        let s0 = spec.closed_form_s0().unwrap();
        let opts = MdpOptions { balls: 2000, seed: 1 };
        let good = mdp_audit(&c, &spec.sys, s0 - 0.1, 12.0, 0.1, &opts).unwrap();
        assert!(good.passes, "{good:?}");
        assert!(good.balls_tested > 1000);
        assert!(good.balls_skipped_small > 0 && good.balls_excluded_large > 0);
        let bad = mdp_audit(&c, &spec.sys, s0 + 1.0, 12.0, 0.1, &opts).unwrap();
        assert!(!bad.passes, "{bad:?}");
    }
}
