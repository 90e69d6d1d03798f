//! Reduction of raw geotechnical test readings to reported results, and
//! the observation graphs that record both.

mod atterberg;
mod cpt;
mod graph;
mod pressuremeter;
mod spt;

use serde::{Deserialize, Serialize};

pub use atterberg::{
    atterberg_reduce, liquid_limit, liquid_limit_unrounded, plastic_limit, AtterbergResult, CasagrandePoint,
    PlasticityIndex,
};
pub use cpt::{cpt_derive, cpt_derive_series, CptPoint};
pub use graph::{
    build_atterberg_graph, build_cpt_graph, build_spt_graph, AtterbergRaw, CasagrandeTrial, CptRaw, DriveSetRaw,
    GraphRef, GraphRefs, PlasticLimitTrial, SptRaw,
};
pub use pressuremeter::{creep_pressure, limit_pressure, PressuremeterRaw, PressuremeterReading, PressuremeterResult};
pub use spt::{spt_energy_correct, spt_energy_correct_value, spt_reduce, DriveSet, EnergyCorrected, NValue, SptResult, TerminationReason};

use crate::linref::LinrefError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReductionError {
    #[error("{0}: no input values")]
    Empty(&'static str),
    #[error("drive set indexes must run 1, 2, 3; found {found} at position {expected}")]
    NonContiguous { expected: u32, found: u32 },
    #[error("at most 3 drive sets, got {0}")]
    TooManySets(usize),
    #[error("{0} must not be negative")]
    Negative(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("energy transfer ratio {0}% outside (0, 150]")]
    EnergyRatio(f64),
    #[error("overburden factor {0} must be positive")]
    OverburdenFactor(f64),
    #[error("no numeric N-value to correct ({0})")]
    Sentinel(NValue),
    #[error("at least {needed} points required, got {found}")]
    InsufficientPoints { needed: usize, found: usize },
    #[error("blow count {0} occurs more than once")]
    DuplicateBlowCount(u32),
    #[error("blow counts must be positive")]
    ZeroBlowCount,
    #[error("tip resistance is zero with sleeve friction {fs} at depth {depth}")]
    ZeroTipResistance { depth: f64, fs: f64 },
    #[error("depth {depth} does not increase on the previous point")]
    NonIncreasingDepth { depth: f64 },
    #[error("all pressures in a group are equal; no line can be fitted")]
    DegenerateGroup,
    #[error("readings are not ordered by pressure")]
    Unsorted,
    #[error("first injected volume {first} already reaches the initial pocket volume {v0}")]
    InitialVolumeReached { first: f64, v0: f64 },
    #[error("graph reference `{0}` is required")]
    MissingRef(&'static str),
    #[error(transparent)]
    Unit(#[from] LinrefError),
}

/// A reported value that the procedure may fail to determine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Determination<T> {
    Determined(T),
    Undetermined,
}

impl<T: Copy> Determination<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Determination::Determined(v) => Some(*v),
            Determination::Undetermined => None,
        }
    }

    pub fn is_determined(&self) -> bool {
        matches!(self, Determination::Determined(_))
    }
}

/// Rounds half away from zero to an integer; all reported whole numbers use this.
pub fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

fn finite(x: f64, what: &'static str) -> Result<f64, ReductionError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ReductionError::NonFinite(what))
    }
}
