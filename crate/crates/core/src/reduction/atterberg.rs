use std::fmt;

use super::{finite, round_half_away, Determination, ReductionError};

/// One Casagrande trial: blows to close the groove and the water content (%).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CasagrandePoint {
    pub blow_count: u32,
    pub water_content: f64,
}

impl CasagrandePoint {
    pub fn new(blow_count: u32, water_content: f64) -> Self {
        Self { blow_count, water_content }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlasticityIndex {
    Value(i64),
    NonPlastic,
}

impl fmt::Display for PlasticityIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlasticityIndex::Value(v) => write!(f, "{v}"),
            PlasticityIndex::NonPlastic => f.write_str("NP"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtterbergResult {
    pub liquid_limit: Determination<i64>,
    pub plastic_limit: Determination<i64>,
    /// Numeric only when both limits are determined and LL > PL.
    pub plasticity_index: PlasticityIndex,
}

/// Water content at 25 blows, log-linear between the two trials that
/// bracket 25, or the trial at exactly 25. `None` if 25 is not bracketed.
pub fn liquid_limit_unrounded(points: &[CasagrandePoint]) -> Result<Option<f64>, ReductionError> {
    if points.len() < 2 {
        return Err(ReductionError::InsufficientPoints { needed: 2, found: points.len() });
    }
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.blow_count);
    for w in sorted.windows(2) {
        if w[0].blow_count == w[1].blow_count {
            return Err(ReductionError::DuplicateBlowCount(w[0].blow_count));
        }
    }
    for p in &sorted {
        if p.blow_count == 0 {
            return Err(ReductionError::ZeroBlowCount);
        }
        finite(p.water_content, "water content")?;
    }
    if let Some(p) = sorted.iter().find(|p| p.blow_count == 25) {
        return Ok(Some(p.water_content));
    }
    let target = 25f64.log10();
    Ok(sorted.windows(2).find(|w| w[0].blow_count < 25 && w[1].blow_count > 25).map(|w| {
        let (x0, x1) = ((w[0].blow_count as f64).log10(), (w[1].blow_count as f64).log10());
        w[0].water_content + (w[1].water_content - w[0].water_content) * (target - x0) / (x1 - x0)
    }))
}

pub fn liquid_limit(points: &[CasagrandePoint]) -> Result<Determination<i64>, ReductionError> {
    Ok(match liquid_limit_unrounded(points)? {
        Some(v) => Determination::Determined(round_half_away(v)),
        None => Determination::Undetermined,
    })
}

/// Mean of the container water contents, rounded.
pub fn plastic_limit(water_contents: &[f64]) -> Result<Determination<i64>, ReductionError> {
    if water_contents.is_empty() {
        return Err(ReductionError::Empty("plastic limit water contents"));
    }
    for w in water_contents {
        finite(*w, "water content")?;
    }
    let mean = water_contents.iter().sum::<f64>() / water_contents.len() as f64;
    Ok(Determination::Determined(round_half_away(mean)))
}

pub fn atterberg_reduce(ll: Determination<i64>, pl: Determination<i64>) -> AtterbergResult {
    let plasticity_index = match (ll, pl) {
        (Determination::Determined(l), Determination::Determined(p)) if l > p => PlasticityIndex::Value(l - p),
        _ => PlasticityIndex::NonPlastic,
    };
    AtterbergResult { liquid_limit: ll, plastic_limit: pl, plasticity_index }
}
