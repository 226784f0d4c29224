//! Beta-expansions, thermodynamic pressure on the beta-shift, and dimension
//! bounds for shrinking-target sets built from the beta-transformation.

pub mod beta;
pub mod cantor;
pub mod dimension;
pub mod error;
pub mod numeric;
pub mod potentials;
pub mod pressure;
pub mod symbolic;
pub mod verify;

pub use beta::{expansion_of_one, golden_ratio, BetaOptions, BetaSpec, BetaSystem, DigitOrbit, ParryKind};
pub use error::{Error, Result};
pub use numeric::{Bracket, LogReal, LogSumExp, RootBracket};
pub use symbolic::{
    count_words, cover_interval, cylinder_of, enumerate_words, find_full_cylinder_in, is_admissible, is_full,
    Cylinder, Cylinders, Word, WordFilter,
};
pub use potentials::{Potential, PotentialSpec, TargetSpec};
pub use pressure::{partition_sum, pressure_estimate, PressureEstimate, SumMode};
pub use dimension::{dimension, s0_prime_probe, series_partial_sums, solve_s1, solve_s2, DimensionResult};
pub use cantor::{
    assign_mass, audit, build_levels, construct, mass_vs_length_check, sample_point, CantorConfig, Construction, Level,
    LevelElement, MSchedule, MassCase,
};
pub use verify::{box_count, box_count_stages, finite_stage_set, mdp_audit, BoxCount, FiniteStageSet, MdpReport};
