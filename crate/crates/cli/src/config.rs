//! Config file schema. Every field is optional; command-line flags win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use betashrink::{Potential, PotentialSpec};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub expand: ExpandSection,
    #[serde(default)]
    pub words: WordsSection,
    #[serde(default)]
    pub cylinder: CylinderSection,
    #[serde(default)]
    pub pressure: PressureSection,
    #[serde(default)]
    pub dimension: DimensionSection,
    #[serde(default)]
    pub series: SeriesSection,
    #[serde(default)]
    pub cantor: CantorSection,
    #[serde(default)]
    pub boxdim: BoxdimSection,
}

/// A potential written either as shorthand (`"2.0"`, `"poly:0,1"`,
/// `"pwl:0:1,1:0"`), a bare number, or a table with a `kind` key.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PotentialInput {
    Number(f64),
    Short(String),
    Spec(PotentialSpec),
}

impl PotentialInput {
    pub fn build(&self) -> Result<Potential> {
        Ok(match self {
            PotentialInput::Number(c) => Potential::constant(*c),
            PotentialInput::Short(s) => s.parse()?,
            PotentialInput::Spec(spec) => Potential::try_from(spec.clone())?,
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub beta: Option<BetaInput>,
    pub strict: Option<bool>,
    pub f: Option<PotentialInput>,
    pub g: Option<PotentialInput>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
}

/// `beta = 2`, `beta = 1.5` or `beta = "golden"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BetaInput {
    Integer(i64),
    Number(f64),
    Text(String),
}

impl BetaInput {
    pub fn as_text(&self) -> String {
        match self {
            BetaInput::Integer(k) => k.to_string(),
            BetaInput::Number(x) => x.to_string(),
            BetaInput::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandSection {
    pub x: Option<f64>,
    pub n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordsSection {
    pub n: Option<usize>,
    pub filter: Option<String>,
    pub list: Option<bool>,
    pub budget: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSection {
    pub word: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSection {
    pub potential: Option<PotentialInput>,
    pub n: Option<String>,
    pub budget: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSection {
    pub n: Option<usize>,
    pub tol: Option<f64>,
    pub probe: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub s: Option<String>,
    pub n_lo: Option<usize>,
    pub n_hi: Option<usize>,
    pub budget: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorSection {
    pub epsilon: Option<f64>,
    pub zero_block: Option<usize>,
    pub depth: Option<usize>,
    pub m_schedule: Option<String>,
    pub case: Option<String>,
    pub seed: Option<u64>,
    pub word_budget: Option<usize>,
    pub sample_size: Option<usize>,
    pub pair_budget: Option<usize>,
    pub element_budget: Option<usize>,
    pub use_subsystem: Option<bool>,
    pub check_s: Option<f64>,
    pub mdp_s: Option<f64>,
    pub mdp_c: Option<f64>,
    pub mdp_delta: Option<f64>,
    pub mdp_balls: Option<usize>,
    pub mdp_seed: Option<u64>,
    pub points: Option<usize>,
    pub dump: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxdimSection {
    pub n_lo: Option<usize>,
    pub n_hi: Option<usize>,
    pub grid: Option<Vec<u32>>,
    pub budget: Option<f64>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| betashrink::Error::Config(format!("{}: {e}", path.display())).into())
}
