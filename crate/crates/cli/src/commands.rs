use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Result;
use betashrink::cantor::{self, level_records, CantorConfig, MSchedule, MassCase};
use betashrink::dimension::{self, DEFAULT_SERIES_WORDS};
use betashrink::pressure::{default_n, pressure_estimate, DEFAULT_WORD_BUDGET};
use betashrink::symbolic::{count_filtered, enumerate_words, format_word, Cylinders, WordFilter, DEFAULT_ENUM_BUDGET};
use betashrink::verify::{self, MdpOptions, DEFAULT_RECT_BUDGET};
use betashrink::{BetaOptions, BetaSpec, BetaSystem, Bracket, Error, Potential, TargetSpec};
use rand::SeedableRng;
use serde::Serialize;

use crate::config::{FileConfig, PotentialInput, TargetSection};
use crate::output::Output;
use crate::{BetaArgs, CantorArgs, Command, TargetArgs};

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn build_sys(args: &BetaArgs, file: &TargetSection) -> Result<Arc<BetaSystem>> {
    let text = match (&args.beta, &file.beta) {
        (Some(b), _) => b.clone(),
        (None, Some(b)) => b.as_text(),
        (None, None) => return Err(config_err("beta is required (--beta or [target] beta)")),
    };
    let spec = BetaSpec::from_str(&text)?;
    let options = BetaOptions {
        strict: args.strict || file.strict.unwrap_or(false),
        ..BetaOptions::default()
    };
    Ok(Arc::new(BetaSystem::from_spec(&spec, options)?))
}

fn potential(flag: &Option<String>, file: &Option<PotentialInput>, name: &str) -> Result<Potential> {
    match (flag, file) {
        (Some(s), _) => Ok(s.parse()?),
        (None, Some(p)) => p.build(),
        (None, None) => Err(config_err(format!("potential {name} is required"))),
    }
}

fn build_target(args: &TargetArgs, file: &TargetSection) -> Result<TargetSpec> {
    let sys = build_sys(&args.beta, file)?;
    let f = potential(&args.f, &file.f, "f")?;
    let g = potential(&args.g, &file.g, "g")?;
    let x0 = args.x0.or(file.x0).unwrap_or(0.5);
    let y0 = args.y0.or(file.y0).unwrap_or(0.5);
    Ok(TargetSpec::new(sys, f, g, x0, y0)?)
}

fn parse_filter(s: &str) -> Result<WordFilter> {
    let s = s.trim().to_ascii_lowercase();
    let zeros = |t: &str| t.parse::<usize>().map_err(|_| config_err(format!("bad zero-block length in filter {s:?}")));
    Ok(match s.split_once(':') {
        None if s == "all" => WordFilter::All,
        None if s == "full" => WordFilter::FullOnly,
        Some(("zeros", n)) => WordFilter::EndsWithZeroBlock(zeros(n)?),
        Some(("full-zeros", n)) => WordFilter::FullEndingWithZeroBlock(zeros(n)?),
        _ => return Err(config_err(format!("unknown filter {s:?}; expected all, full, zeros:N or full-zeros:N"))),
    })
}

fn parse_word(s: &str) -> Result<Vec<u8>> {
    let s = s.trim();
    let bad = || config_err(format!("bad word {s:?}"));
    if s.contains(',') {
        s.split(',').map(|t| t.trim().parse::<u8>().map_err(|_| bad())).collect()
    } else {
        s.chars().map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(bad)).collect()
    }
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || config_err(format!("bad order {s:?}; expected N or A..B"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            Ok(a..=b)
        }
        None => {
            let n: usize = s.trim().parse().map_err(|_| bad())?;
            Ok(n..=n)
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| config_err(format!("bad list entry {t:?} in {s:?}"))))
        .collect()
}

/// Counts that may exceed the TOML integer range are written as strings.
#[derive(Serialize)]
#[serde(untagged)]
enum Count {
    Small(i64),
    Large(String),
}

impl From<u128> for Count {
    fn from(c: u128) -> Self {
        i64::try_from(c).map_or_else(|_| Count::Large(c.to_string()), Count::Small)
    }
}

#[derive(Serialize)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl From<Bracket> for Interval {
    fn from(b: Bracket) -> Self {
        Self { lo: b.lo, hi: b.hi }
    }
}

pub fn dispatch(command: Command, file: &FileConfig, out_dir: Option<PathBuf>) -> Result<()> {
    match command {
        Command::Expand { beta, x, one, n } => expand(&beta, x, one, n, file, Output::new("expand", out_dir)?),
        Command::Words { beta, n, filter, list, budget } => {
            words(&beta, n, filter, list, budget, file, Output::new("words", out_dir)?)
        }
        Command::Cylinder { beta, word } => cylinder(&beta, word, file, Output::new("cylinder", out_dir)?),
        Command::Pressure { beta, potential, n, budget } => {
            pressure(&beta, potential, n, budget, file, Output::new("pressure", out_dir)?)
        }
        Command::Dimension { target, n, tol, probe } => {
            dimension_cmd(&target, n, tol, probe, file, Output::new("dimension", out_dir)?)
        }
        Command::Series { target, s, n_lo, n_hi, budget } => {
            series(&target, s, n_lo, n_hi, budget, file, Output::new("series", out_dir)?)
        }
        Command::Cantor(args) => cantor_cmd(&args, file, Output::new("cantor", out_dir)?),
        Command::Boxdim { target, n_lo, n_hi, grid, budget } => {
            boxdim(&target, n_lo, n_hi, grid, budget, file, Output::new("boxdim", out_dir)?)
        }
    }
}

fn expand(beta: &BetaArgs, x: Option<f64>, one: bool, n: Option<usize>, file: &FileConfig, out: Output) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        index: usize,
        digit: u8,
    }
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        x: f64,
        n: usize,
        digits: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        tail: Option<f64>,
        parry_kind: String,
        precision_cap: usize,
        reliable_upto: usize,
    }
    let sys = build_sys(beta, &file.target)?;
    let n = n.or(file.expand.n).unwrap_or(20);
    let x = if one { 1.0 } else { x.or(file.expand.x).ok_or_else(|| config_err("x is required (--x or --one)"))? };
    let (digits, tail, reliable) = if x == 1.0 {
        let d = sys.expansion_of_one(n)?;
        (d, None, n.min(sys.precision_cap()))
    } else {
        let orbit = sys.expand(x, n)?;
        (orbit.digits, Some(orbit.tail), orbit.reliable_upto)
    };
    out.table("expand", digits.iter().enumerate().map(|(i, &d)| Row { index: i + 1, digit: d }))?;
    out.summary(&Summary {
        beta: sys.beta(),
        x,
        n,
        digits: format_word(&digits),
        tail,
        parry_kind: format!("{:?}", sys.parry_kind()),
        precision_cap: sys.precision_cap(),
        reliable_upto: reliable,
    })
}

fn words(
    beta: &BetaArgs,
    n: Option<usize>,
    filter: Option<String>,
    list: bool,
    budget: Option<f64>,
    file: &FileConfig,
    out: Output,
) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        index: usize,
        word: String,
        left: f64,
        length: f64,
        full: bool,
    }
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        n: usize,
        filter: String,
        count: Count,
    }
    let sys = build_sys(beta, &file.target)?;
    let sec = &file.words;
    let n = n.or(sec.n).ok_or_else(|| config_err("n is required"))?;
    let filter_text = filter.or_else(|| sec.filter.clone()).unwrap_or_else(|| "all".into());
    let filter = parse_filter(&filter_text)?;
    let count = count_filtered(&sys, n, filter);
    if list || sec.list.unwrap_or(false) {
        let budget = budget.or(sec.budget).unwrap_or(DEFAULT_ENUM_BUDGET);
        let mut cyl = Cylinders::new(&sys, n);
        let rows = enumerate_words(&sys, n, filter, budget)?
            .enumerate()
            .map(|(i, w)| {
                let c = cyl.cylinder_of(&w)?;
                Ok(Row { index: i, word: format_word(&w), left: c.left, length: c.length, full: c.full })
            })
            .collect::<Result<Vec<_>>>()?;
        out.table("words", rows)?;
    }
    out.summary(&Summary { beta: sys.beta(), n, filter: filter_text, count: count.into() })
}

fn cylinder(beta: &BetaArgs, word: Option<String>, file: &FileConfig, out: Output) -> Result<()> {
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        word: String,
        order: usize,
        left: f64,
        right: f64,
        length: f64,
        full: bool,
    }
    let sys = build_sys(beta, &file.target)?;
    let text = word.or_else(|| file.cylinder.word.clone()).ok_or_else(|| config_err("word is required"))?;
    let w = parse_word(&text)?;
    let c = Cylinders::new(&sys, w.len()).cylinder_of(&w)?;
    let summary = Summary {
        beta: sys.beta(),
        word: format_word(&w),
        order: c.order,
        left: c.left,
        right: c.right(),
        length: c.length,
        full: c.full,
    };
    out.table("cylinder", [&summary])?;
    out.summary(&summary)
}

fn pressure(
    beta: &BetaArgs,
    potential_flag: Option<String>,
    n: Option<String>,
    budget: Option<f64>,
    file: &FileConfig,
    out: Output,
) -> Result<()> {
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        potential: String,
        n: usize,
        value: f64,
        lower: f64,
        upper: f64,
    }
    let sys = build_sys(beta, &file.target)?;
    let sec = &file.pressure;
    let p = potential(&potential_flag, &sec.potential, "potential")?;
    let range = match n.or_else(|| sec.n.clone()) {
        Some(text) => parse_range(&text)?,
        None => {
            let n = default_n(&sys, dimension::DEFAULT_PRESSURE_WORDS);
            n..=n
        }
    };
    if *range.start() == 0 || range.is_empty() {
        return Err(config_err("pressure orders must be at least 1"));
    }
    let budget = budget.or(sec.budget).unwrap_or(DEFAULT_WORD_BUDGET);
    let rows = range.map(|n| pressure_estimate(&sys, &p, n, budget)).collect::<betashrink::Result<Vec<_>>>()?;
    out.table("pressure", &rows)?;
    let last = rows.last().expect("non-empty range");
    out.summary(&Summary {
        beta: sys.beta(),
        potential: p.describe(),
        n: last.n,
        value: last.value,
        lower: last.lower,
        upper: last.upper,
    })
}

fn dimension_cmd(
    target: &TargetArgs,
    n: Option<usize>,
    tol: Option<f64>,
    probe: bool,
    file: &FileConfig,
    out: Output,
) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        quantity: &'static str,
        lo: f64,
        hi: f64,
        point: f64,
    }
    #[derive(Serialize)]
    struct ClosedForm {
        s1: f64,
        s2: f64,
        s0: f64,
    }
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        f: String,
        g: String,
        n_used: usize,
        s1: Interval,
        s2: Interval,
        s0: Interval,
        s0_point: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        closed_form: Option<ClosedForm>,
        #[serde(skip_serializing_if = "Option::is_none")]
        probe: Option<Interval>,
    }
    let spec = build_target(target, &file.target)?;
    let sec = &file.dimension;
    let n = n.or(sec.n).unwrap_or_else(|| dimension::default_pressure_n(&spec));
    let tol = tol.or(sec.tol).unwrap_or(1e-10);
    let result = dimension::dimension(&spec, n, tol)?;
    let mut rows = vec![
        Row { quantity: "s1", lo: result.s1.bracket.lo, hi: result.s1.bracket.hi, point: result.s1.point },
        Row { quantity: "s2", lo: result.s2.bracket.lo, hi: result.s2.bracket.hi, point: result.s2.point },
        Row { quantity: "s0", lo: result.s0_bracket.lo, hi: result.s0_bracket.hi, point: result.s0_point() },
    ];
    let probe = if probe || sec.probe.unwrap_or(false) {
        let p = dimension::s0_prime_probe(&spec, dimension::default_series_n(&spec).min(n), tol)?;
        rows.push(Row { quantity: "s0_probe", lo: p.bracket.lo, hi: p.bracket.hi, point: p.point });
        Some(p.bracket.into())
    } else {
        None
    };
    out.table("dimension", &rows)?;
    out.summary(&Summary {
        beta: spec.sys.beta(),
        f: spec.f.describe(),
        g: spec.g.describe(),
        n_used: result.n_used,
        s1: result.s1.bracket.into(),
        s2: result.s2.bracket.into(),
        s0: result.s0_bracket.into(),
        s0_point: result.s0_point(),
        closed_form: spec.closed_form_roots().map(|(s1, s2)| ClosedForm { s1, s2, s0: s1.min(s2) }),
        probe,
    })
}

#[allow(clippy::too_many_arguments)]
fn series(
    target: &TargetArgs,
    s: Option<String>,
    n_lo: Option<usize>,
    n_hi: Option<usize>,
    budget: Option<f64>,
    file: &FileConfig,
    out: Output,
) -> Result<()> {
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        s: Vec<f64>,
        n_lo: usize,
        n_hi: usize,
        rows: usize,
    }
    let spec = build_target(target, &file.target)?;
    let sec = &file.series;
    let s_text = s.or_else(|| sec.s.clone()).ok_or_else(|| config_err("s is required"))?;
    let ss: Vec<f64> = parse_list(&s_text)?;
    let n_lo = n_lo.or(sec.n_lo).unwrap_or(1);
    let n_hi = n_hi.or(sec.n_hi).unwrap_or_else(|| dimension::default_series_n(&spec));
    if n_lo == 0 || n_lo > n_hi {
        return Err(config_err("series needs 1 <= n_lo <= n_hi"));
    }
    let budget = budget.or(sec.budget).unwrap_or(DEFAULT_SERIES_WORDS);
    let mut rows = Vec::new();
    for &s in &ss {
        rows.extend(dimension::series_partial_sums(&spec, s, n_lo..=n_hi, budget)?);
    }
    out.table("series", &rows)?;
    out.summary(&Summary { beta: spec.sys.beta(), s: ss, n_lo, n_hi, rows: rows.len() })
}

fn cantor_cmd(args: &CantorArgs, file: &FileConfig, out: Output) -> Result<()> {
    #[derive(Serialize)]
    struct LevelSummary {
        index: usize,
        m: usize,
        elements: usize,
        u_words: usize,
        w_words: usize,
        u_total: f64,
        w_total: f64,
        subsampled: bool,
        k_min: usize,
        k_max: usize,
        l_min: usize,
        l_max: usize,
        s: f64,
    }
    #[derive(Serialize)]
    struct PointRow {
        point: usize,
        x: f64,
        y: f64,
        level: usize,
        n: usize,
        ln_dist_x: f64,
        ln_radius_x: f64,
        ln_dist_y: f64,
        ln_radius_y: f64,
        strict: bool,
    }
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        f: String,
        g: String,
        epsilon: f64,
        zero_block: usize,
        depth: usize,
        m_schedule: String,
        case: String,
        strengthened_hypothesis: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        s0_closed_form: Option<f64>,
        levels: Vec<LevelSummary>,
        audit: cantor::AuditReport,
        mass_vs_length: cantor::MassLengthReport,
        mdp: verify::MdpReport,
        points: usize,
        points_strict: usize,
    }
    let spec = build_target(&args.target, &file.target)?;
    let sys = spec.sys.clone();
    let sec = &file.cantor;
    let defaults = CantorConfig::default();
    let m_schedule = match args.m_schedule.as_ref().or(sec.m_schedule.as_ref()) {
        Some(text) => text.parse::<MSchedule>()?,
        None => defaults.m_schedule.clone(),
    };
    let case_override = match args.case.as_ref().or(sec.case.as_ref()) {
        Some(text) if text.eq_ignore_ascii_case("auto") => None,
        Some(text) => Some(text.parse::<MassCase>()?),
        None => None,
    };
    let cfg = CantorConfig {
        epsilon: args.epsilon.or(sec.epsilon).unwrap_or(defaults.epsilon),
        zero_block: args.zero_block.or(sec.zero_block).unwrap_or(defaults.zero_block),
        depth: args.depth.or(sec.depth).unwrap_or(defaults.depth),
        m_schedule,
        case_override,
        seed: args.seed.or(sec.seed).unwrap_or(defaults.seed),
        word_budget: args.word_budget.or(sec.word_budget).unwrap_or(defaults.word_budget),
        sample_size: args.sample_size.or(sec.sample_size).unwrap_or(defaults.sample_size),
        pair_budget: args.pair_budget.or(sec.pair_budget).unwrap_or(defaults.pair_budget),
        element_budget: args.element_budget.or(sec.element_budget).unwrap_or(defaults.element_budget),
        use_subsystem: args.use_subsystem || sec.use_subsystem.unwrap_or(false),
        ..defaults
    };
    let c = cantor::construct(&spec, &cfg)?;
    let lb = sys.ln_beta();
    let s0 = match spec.closed_form_s0() {
        Some(s0) => s0,
        None => dimension::dimension(&spec, dimension::default_pressure_n(&spec).min(14), 1e-6)?.s0_point(),
    };

    let audit = cantor::audit(&c, &spec);
    let check_s = args.check_s.or(sec.check_s).unwrap_or(s0 - 0.1);
    let mass_vs_length = cantor::mass_vs_length_check(&c, lb, check_s);
    let mdp_s = args.mdp_s.or(sec.mdp_s).unwrap_or(s0 - 0.1);
    let mdp_c = args.mdp_c.or(sec.mdp_c).unwrap_or(3.0 * sys.beta() * sys.beta());
    let mdp_delta = args.mdp_delta.or(sec.mdp_delta).unwrap_or(0.1);
    let options = MdpOptions {
        balls: args.mdp_balls.or(sec.mdp_balls).unwrap_or(MdpOptions::default().balls),
        seed: args.mdp_seed.or(sec.mdp_seed).unwrap_or(cfg.seed),
    };
    let mdp = verify::mdp_audit(&c, &sys, mdp_s, mdp_c, mdp_delta, &options)?;

    let n_points = args.points.or(sec.points).unwrap_or(16);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_9017);
    let mut rows = Vec::new();
    let mut strict_points = 0;
    for i in 0..n_points {
        let p = cantor::sample_point(&c, &sys, &mut rng)?;
        if p.witnesses.iter().all(|w| w.strict) {
            strict_points += 1;
        }
        rows.extend(p.witnesses.iter().map(|w| PointRow {
            point: i,
            x: p.x,
            y: p.y,
            level: w.level,
            n: w.n,
            ln_dist_x: w.ln_dist_x,
            ln_radius_x: w.ln_radius_x,
            ln_dist_y: w.ln_dist_y,
            ln_radius_y: w.ln_radius_y,
            strict: w.strict,
        }));
    }
    out.table("cantor_points", &rows)?;
    if args.dump || sec.dump.unwrap_or(false) {
        out.table("cantor_levels", c.levels.iter().flat_map(level_records))?;
    }

    let levels = c
        .levels
        .iter()
        .map(|l| {
            let (k_min, k_max) = l.k_range();
            let (l_min, l_max) = l.l_range();
            LevelSummary {
                index: l.index,
                m: l.m,
                elements: l.elements.len(),
                u_words: l.u_set.words.len(),
                w_words: l.w_set.words.len(),
                u_total: l.u_set.total,
                w_total: l.w_set.total,
                subsampled: l.is_subsampled(),
                k_min,
                k_max,
                l_min,
                l_max,
                s: l.s,
            }
        })
        .collect();
    out.summary(&Summary {
        beta: sys.beta(),
        f: spec.f.describe(),
        g: spec.g.describe(),
        epsilon: cfg.epsilon,
        zero_block: cfg.zero_block,
        depth: cfg.depth,
        m_schedule: cfg.m_schedule.to_string(),
        case: c.case.map_or_else(|| "none".into(), |case| case.to_string()),
        strengthened_hypothesis: c.strengthened_hypothesis,
        s0_closed_form: spec.closed_form_s0(),
        levels,
        audit,
        mass_vs_length,
        mdp,
        points: n_points,
        points_strict: strict_points,
    })
}

#[allow(clippy::too_many_arguments)]
fn boxdim(
    target: &TargetArgs,
    n_lo: Option<usize>,
    n_hi: Option<usize>,
    grid: Option<String>,
    budget: Option<f64>,
    file: &FileConfig,
    out: Output,
) -> Result<()> {
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        n_lo: usize,
        n_hi: usize,
        rectangles: usize,
        dropped: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        s0_closed_form: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        finest_estimate: Option<f64>,
    }
    let spec = build_target(target, &file.target)?;
    let sec = &file.boxdim;
    let n_lo = n_lo.or(sec.n_lo).unwrap_or(1);
    let n_hi = n_hi.or(sec.n_hi).unwrap_or(10);
    let ks: Vec<u32> = match grid {
        Some(text) => parse_list(&text)?,
        None => sec.grid.clone().unwrap_or_else(|| vec![4, 6, 8, 10, 12]),
    };
    let budget = budget.or(sec.budget).unwrap_or(DEFAULT_RECT_BUDGET);
    let set = verify::finite_stage_set(&spec, n_lo, n_hi, budget)?;
    let table = verify::box_count_table(&set, ks)?;
    out.table("boxdim", &table)?;
    out.summary(&Summary {
        beta: spec.sys.beta(),
        n_lo,
        n_hi,
        rectangles: set.rectangle_count(),
        dropped: set.dropped(),
        s0_closed_form: spec.closed_form_s0(),
        finest_estimate: table.last().and_then(|b| b.dim_estimate),
    })
}
