//! Potentials on `[0, 1]`, their ergodic sums along beta-orbits, and the
//! target specification `(beta, f, g, x0, y0)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::beta::BetaSystem;
use crate::error::{Error, Result};

const POLY_GRID: usize = 10_000;

/// Literal form of a potential, as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Constant { value: f64 },
    /// `c_0 + c_1 x + c_2 x^2 + ...`
    Polynomial { coefficients: Vec<f64> },
    /// `(x, y)` pairs with increasing `x` from 0 to 1.
    PiecewiseLinear { breakpoints: Vec<(f64, f64)> },
}

/// A Lipschitz potential with known bounds over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialSpec", into = "PotentialSpec")]
pub struct Potential {
    spec: PotentialSpec,
    lipschitz: f64,
    min_value: f64,
    max_value: f64,
}

impl From<Potential> for PotentialSpec {
    fn from(p: Potential) -> Self {
        p.spec
    }
}

impl TryFrom<PotentialSpec> for Potential {
    type Error = Error;

    fn try_from(spec: PotentialSpec) -> Result<Self> {
        match &spec {
            PotentialSpec::Constant { value } => {
                check_finite(&[*value])?;
                Ok(Self {
                    lipschitz: 0.0,
                    min_value: *value,
                    max_value: *value,
                    spec,
                })
            }
            PotentialSpec::Polynomial { coefficients } => {
                if coefficients.is_empty() {
                    return Err(Error::Config("polynomial needs at least one coefficient".into()));
                }
                check_finite(coefficients)?;
                let (min_value, max_value, lipschitz) = polynomial_bounds(coefficients);
                Ok(Self {
                    lipschitz,
                    min_value,
                    max_value,
                    spec,
                })
            }
            PotentialSpec::PiecewiseLinear { breakpoints } => {
                if breakpoints.len() < 2 {
                    return Err(Error::Config("piecewise-linear potential needs at least two breakpoints".into()));
                }
                let first = breakpoints[0].0;
                let last = breakpoints[breakpoints.len() - 1].0;
                if first != 0.0 || last != 1.0 {
                    return Err(Error::Config("breakpoints must start at x = 0 and end at x = 1".into()));
                }
                if breakpoints.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(Error::Config("breakpoint abscissae must be strictly increasing".into()));
                }
                let ys: Vec<f64> = breakpoints.iter().map(|b| b.1).collect();
                check_finite(&ys)?;
                let lipschitz = breakpoints
                    .windows(2)
                    .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                    .fold(0.0, f64::max);
                Ok(Self {
                    lipschitz,
                    min_value: ys.iter().cloned().fold(f64::INFINITY, f64::min),
                    max_value: ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    spec,
                })
            }
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Config("potential parameters must be finite".into()))
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// Grid scan with slack: the extremes are widened by `sup|p'| h / 2` and the
/// derivative bound by `sup|p''| h / 2`, where `h` is the grid step.
fn polynomial_bounds(c: &[f64]) -> (f64, f64, f64) {
    let degree = c.iter().rposition(|&a| a != 0.0).unwrap_or(0);
    if degree <= 2 {
        // Extremes at the endpoints or the vertex; |p'| is extremal at an endpoint.
        let mut xs = vec![0.0, 1.0];
        if degree == 2 {
            let v = -c[1] / (2.0 * c[2]);
            if (0.0..=1.0).contains(&v) {
                xs.push(v);
            }
        }
        let vals: Vec<f64> = xs.iter().map(|&x| horner(c, x)).collect();
        let d = |x: f64| {
            let b = c.get(1).copied().unwrap_or(0.0);
            let a = c.get(2).copied().unwrap_or(0.0);
            (b + 2.0 * a * x).abs()
        };
        return (
            vals.iter().cloned().fold(f64::INFINITY, f64::min),
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            d(0.0).max(d(1.0)),
        );
    }
    let d1: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
    let d2_bound: f64 = c
        .iter()
        .enumerate()
        .skip(2)
        .map(|(k, a)| (k * (k - 1)) as f64 * a.abs())
        .sum();
    let h = 1.0 / POLY_GRID as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..=POLY_GRID {
        let x = i as f64 * h;
        let v = horner(c, x);
        lo = lo.min(v);
        hi = hi.max(v);
        if !d1.is_empty() {
            dmax = dmax.max(horner(&d1, x).abs());
        }
    }
    let lipschitz = if d1.iter().all(|&a| a == 0.0) {
        0.0
    } else {
        dmax + 0.5 * h * d2_bound
    };
    let slack = 0.5 * h * lipschitz;
    (lo - slack, hi + slack, lipschitz)
}

impl Potential {
    pub fn constant(value: f64) -> Self {
        PotentialSpec::Constant { value }.try_into().expect("finite constant")
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        PotentialSpec::Polynomial { coefficients }.try_into()
    }

    pub fn piecewise_linear(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        PotentialSpec::PiecewiseLinear { breakpoints }.try_into()
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    /// `sup |p|` over `[0, 1]`.
    pub fn sup_norm(&self) -> f64 {
        self.min_value.abs().max(self.max_value.abs())
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.spec {
            PotentialSpec::Constant { value } => Some(value),
            _ => None,
        }
    }

    /// Evaluation on `[0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("potential evaluated at {x}, outside [0, 1]")));
        }
        Ok(self.value(x))
    }

    /// Unchecked evaluation; `x` is clamped into `[0, 1]`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match &self.spec {
            PotentialSpec::Constant { value } => *value,
            PotentialSpec::Polynomial { coefficients } => horner(coefficients, x),
            PotentialSpec::PiecewiseLinear { breakpoints } => {
                let i = breakpoints.partition_point(|b| b.0 <= x).clamp(1, breakpoints.len() - 1);
                let (x0, y0) = breakpoints[i - 1];
                let (x1, y1) = breakpoints[i];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// `a p + b`, staying inside the same family.
    pub fn scale_shift(&self, a: f64, b: f64) -> Potential {
        let spec = match &self.spec {
            PotentialSpec::Constant { value } => PotentialSpec::Constant { value: a * value + b },
            PotentialSpec::Polynomial { coefficients } => {
                let mut c: Vec<f64> = coefficients.iter().map(|v| a * v).collect();
                c[0] += b;
                PotentialSpec::Polynomial { coefficients: c }
            }
            PotentialSpec::PiecewiseLinear { breakpoints } => PotentialSpec::PiecewiseLinear {
                breakpoints: breakpoints.iter().map(|&(x, y)| (x, a * y + b)).collect(),
            },
        };
        let (lo, hi) = if a >= 0.0 {
            (a * self.min_value + b, a * self.max_value + b)
        } else {
            (a * self.max_value + b, a * self.min_value + b)
        };
        Potential {
            spec,
            lipschitz: a.abs() * self.lipschitz,
            min_value: lo,
            max_value: hi,
        }
    }

    /// Short human-readable description, also used as an identifier.
    pub fn describe(&self) -> String {
        self.to_string()
    }

    /// Ergodic sum `S_n p(x) = sum_{j<n} p(T^j x)` along the float orbit.
    pub fn ergodic_sum(&self, sys: &BetaSystem, x: f64, n: usize) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} is outside [0, 1)")));
        }
        sys.check_precision(n)?;
        let mut t = x;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += self.value(t);
            t = sys.step(t).1;
        }
        Ok(sum)
    }

    /// `S_n p` at the left endpoint of `I_n(w)`. The orbit points are the
    /// values of the suffixes of `w`, computed right to left without error
    /// amplification.
    pub fn ergodic_sum_at_word(&self, sys: &BetaSystem, w: &[u8]) -> f64 {
        let inv = 1.0 / sys.beta();
        let mut v = 0.0;
        let mut sum = 0.0;
        for &d in w.iter().rev() {
            v = (f64::from(d) + v) * inv;
            sum += self.value(v);
        }
        sum
    }

    /// `L sum_{j=0}^{n-1} beta^{j-n}`: how far `S_n p` can move across an
    /// order-`n` cylinder.
    pub fn cylinder_variation(&self, beta: f64, n: usize) -> f64 {
        if self.lipschitz == 0.0 {
            return 0.0;
        }
        self.lipschitz * (1.0 - beta.powi(-(n as i32))) / (beta - 1.0)
    }

    /// Bracket for `S_n p` over `I_n(w)`: left-endpoint value plus or minus the
    /// cylinder variation, clipped to `[n min p, n max p]`.
    pub fn ergodic_sum_bounds(&self, sys: &BetaSystem, w: &[u8]) -> Result<(f64, f64)> {
        if !crate::symbolic::is_admissible(sys, w) {
            return Err(Error::Inadmissible(crate::symbolic::format_word(w)));
        }
        let n = w.len();
        let center = self.ergodic_sum_at_word(sys, w);
        let delta = self.cylinder_variation(sys.beta(), n);
        let lo = (center - delta).max(n as f64 * self.min_value);
        let hi = (center + delta).min(n as f64 * self.max_value);
        Ok((lo, hi))
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.spec {
            PotentialSpec::Constant { value } => write!(f, "{value}"),
            PotentialSpec::Polynomial { coefficients } => {
                let parts: Vec<String> = coefficients.iter().map(|c| c.to_string()).collect();
                write!(f, "poly:{}", parts.join(","))
            }
            PotentialSpec::PiecewiseLinear { breakpoints } => {
                let parts: Vec<String> = breakpoints.iter().map(|(x, y)| format!("{x}:{y}")).collect();
                write!(f, "pwl:{}", parts.join(","))
            }
        }
    }
}

/// Shorthand literals: `2.0`, `const:2.0`, `poly:0.5,1.0`, `pwl:0:1,1:2`.
impl FromStr for Potential {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |what: &str| Error::Config(format!("cannot parse potential {s:?}: {what}"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("expected a number"));
        if let Some(rest) = s.strip_prefix("poly:") {
            let c = rest.split(',').map(num).collect::<Result<Vec<_>>>()?;
            return Potential::polynomial(c);
        }
        if let Some(rest) = s.strip_prefix("pwl:") {
            let pts = rest
                .split(',')
                .map(|pair| {
                    let (x, y) = pair.split_once(':').ok_or_else(|| bad("breakpoints are x:y"))?;
                    Ok((num(x)?, num(y)?))
                })
                .collect::<Result<Vec<_>>>()?;
            return Potential::piecewise_linear(pts);
        }
        let rest = s.strip_prefix("const:").unwrap_or(s);
        let v = num(rest)?;
        if !v.is_finite() {
            return Err(bad("constant must be finite"));
        }
        Ok(Potential::constant(v))
    }
}

/// Everything that defines a shrinking-target set: the base, the two
/// potentials and the target point `(x0, y0)`.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub sys: Arc<BetaSystem>,
    pub f: Potential,
    pub g: Potential,
    pub x0: f64,
    pub y0: f64,
}

impl TargetSpec {
    /// Validates `x0, y0 in (0, 1]` and the standing hypothesis
    /// `min f >= max g`.
    pub fn new(sys: Arc<BetaSystem>, f: Potential, g: Potential, x0: f64, y0: f64) -> Result<Self> {
        for (name, v) in [("x0", x0), ("y0", y0)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        if f.min_value() < g.max_value() {
            return Err(Error::Hypothesis(format!(
                "f >= g fails: min f = {} < max g = {}",
                f.min_value(),
                g.max_value()
            )));
        }
        Ok(Self { sys, f, g, x0, y0 })
    }

    pub fn beta(&self) -> f64 {
        self.sys.beta()
    }

    pub fn ln_beta(&self) -> f64 {
        self.sys.ln_beta()
    }

    /// Whether `min f >= (1 + eps) max g`, the form used by the construction.
    pub fn strengthened_hypothesis_holds(&self, epsilon: f64) -> bool {
        self.f.min_value() >= (1.0 + epsilon) * self.g.max_value()
    }

    pub fn f_strictly_positive(&self) -> bool {
        self.f.min_value() > 0.0
    }

    /// Exact roots of the two pressure equations when both potentials are
    /// constants `f = a`, `g = b`: `s1 = (2 ln b + a - b)/(ln b + a)` and
    /// `s2 = 2 ln b / (ln b + b)` with `ln b` meaning `ln beta`.
    pub fn closed_form_roots(&self) -> Option<(f64, f64)> {
        let a = self.f.as_constant()?;
        let b = self.g.as_constant()?;
        let l = self.ln_beta();
        Some(((2.0 * l + a - b) / (l + a), 2.0 * l / (l + b)))
    }

    pub fn closed_form_s0(&self) -> Option<f64> {
        self.closed_form_roots().map(|(s1, s2)| s1.min(s2))
    }
}
