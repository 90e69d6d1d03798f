use serde::{Deserialize, Serialize};

use super::{finite, ReductionError};

/// One sounding row. `qc`, `fs` and `u2` share one stress unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CptPoint {
    pub depth: f64,
    pub qc: f64,
    pub fs: f64,
    pub u2: f64,
    /// Percent; filled in by [`cpt_derive`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_ratio: Option<f64>,
}

impl CptPoint {
    pub fn new(depth: f64, qc: f64, fs: f64, u2: f64) -> Self {
        Self { depth, qc, fs, u2, friction_ratio: None }
    }
}

/// Adds the friction ratio `100 fs / qc`.
pub fn cpt_derive(point: CptPoint) -> Result<CptPoint, ReductionError> {
    let qc = finite(point.qc, "tip resistance")?;
    let fs = finite(point.fs, "sleeve friction")?;
    finite(point.depth, "depth")?;
    let rf = if qc == 0.0 {
        if fs != 0.0 {
            return Err(ReductionError::ZeroTipResistance { depth: point.depth, fs });
        }
        0.0
    } else {
        100.0 * fs / qc
    };
    Ok(CptPoint { friction_ratio: Some(rf), ..point })
}

/// Derives every row and checks that depth strictly increases.
pub fn cpt_derive_series(points: &[CptPoint]) -> Result<Vec<CptPoint>, ReductionError> {
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if i > 0 && p.depth <= points[i - 1].depth {
            return Err(ReductionError::NonIncreasingDepth { depth: p.depth });
        }
        out.push(cpt_derive(*p)?);
    }
    Ok(out)
}
