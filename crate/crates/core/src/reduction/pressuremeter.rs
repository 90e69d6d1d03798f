use serde::{Deserialize, Serialize};

use super::{finite, Determination, ReductionError};

/// Pressure (MPa) against a volume (cm³): injected volume for the
/// expansion curve, creep volume V60/30 for the creep diagram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressuremeterReading {
    pub pressure: f64,
    pub volume: f64,
}

impl PressuremeterReading {
    pub fn new(pressure: f64, volume: f64) -> Self {
        Self { pressure, volume }
    }
}

/// Raw pressuremeter test file. Either analysis may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PressuremeterRaw {
    /// Second and third reading groups of the creep diagram.
    #[serde(default)]
    pub creep_group2: Vec<PressuremeterReading>,
    #[serde(default)]
    pub creep_group3: Vec<PressuremeterReading>,
    /// Expansion curve, ordered by pressure.
    #[serde(default)]
    pub expansion: Vec<PressuremeterReading>,
    /// Initial pocket volume in cm³.
    #[serde(default)]
    pub initial_volume: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressuremeterResult {
    pub creep_pressure: Option<Determination<f64>>,
    pub limit_pressure: Option<Determination<f64>>,
}

impl PressuremeterRaw {
    pub fn reduce(&self) -> Result<PressuremeterResult, ReductionError> {
        let creep = if self.creep_group2.is_empty() && self.creep_group3.is_empty() {
            None
        } else {
            Some(creep_pressure(&self.creep_group2, &self.creep_group3)?)
        };
        let limit = match self.initial_volume {
            Some(v0) => Some(limit_pressure(&self.expansion, v0)?),
            None => None,
        };
        Ok(PressuremeterResult { creep_pressure: creep, limit_pressure: limit })
    }
}

/// Ordinary least squares `volume = slope * pressure + intercept`.
fn fit(group: &[PressuremeterReading]) -> Result<(f64, f64), ReductionError> {
    if group.len() < 2 {
        return Err(ReductionError::InsufficientPoints { needed: 2, found: group.len() });
    }
    for r in group {
        finite(r.pressure, "pressure")?;
        finite(r.volume, "volume")?;
    }
    let n = group.len() as f64;
    let mp = group.iter().map(|r| r.pressure).sum::<f64>() / n;
    let mv = group.iter().map(|r| r.volume).sum::<f64>() / n;
    let sxx: f64 = group.iter().map(|r| (r.pressure - mp).powi(2)).sum();
    let sxy: f64 = group.iter().map(|r| (r.pressure - mp) * (r.volume - mv)).sum();
    if sxx == 0.0 {
        return Err(ReductionError::DegenerateGroup);
    }
    let slope = sxy / sxx;
    Ok((slope, mv - slope * mp))
}

/// Creep pressure p_f: the pressure where the lines fitted to the second
/// and third reading groups of the creep diagram intersect.
pub fn creep_pressure(
    group2: &[PressuremeterReading],
    group3: &[PressuremeterReading],
) -> Result<Determination<f64>, ReductionError> {
    let (m2, b2) = fit(group2)?;
    let (m3, b3) = fit(group3)?;
    let scale = m2.abs().max(m3.abs());
    if (m2 - m3).abs() <= 1e-9 * scale || scale == 0.0 {
        return Ok(Determination::Undetermined);
    }
    let p = (b3 - b2) / (m2 - m3);
    let lo = group2.iter().map(|r| r.pressure).fold(f64::INFINITY, f64::min);
    let hi = group3.iter().map(|r| r.pressure).fold(f64::NEG_INFINITY, f64::max);
    if p < lo || p > hi {
        return Ok(Determination::Undetermined);
    }
    Ok(Determination::Determined(p))
}

/// Limit pressure p_LM: the pressure at which the injected volume reaches
/// the initial pocket volume `v0`, so the pocket volume has doubled.
/// Interpolates linearly between the bracketing readings.
pub fn limit_pressure(readings: &[PressuremeterReading], v0: f64) -> Result<Determination<f64>, ReductionError> {
    let first = readings.first().ok_or(ReductionError::Empty("pressuremeter readings"))?;
    finite(v0, "initial pocket volume")?;
    for r in readings {
        finite(r.pressure, "pressure")?;
        finite(r.volume, "volume")?;
    }
    if readings.windows(2).any(|w| w[1].pressure < w[0].pressure) {
        return Err(ReductionError::Unsorted);
    }
    if first.volume >= v0 {
        return Err(ReductionError::InitialVolumeReached { first: first.volume, v0 });
    }
    for w in readings.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.volume < v0 && b.volume >= v0 {
            if b.volume == v0 {
                return Ok(Determination::Determined(b.pressure));
            }
            let t = (v0 - a.volume) / (b.volume - a.volume);
            return Ok(Determination::Determined(a.pressure + t * (b.pressure - a.pressure)));
        }
    }
    Ok(Determination::Undetermined)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_line(ps: &[f64], m: f64, b: f64) -> Vec<PressuremeterReading> {
        ps.iter().map(|&p| PressuremeterReading::new(p, m * p + b)).collect()
    }

    #[test]
    fn creep_intersection() {
        let g2 = on_line(&[1.0, 1.5, 2.0], 2.0, 0.0);
        let g3 = on_line(&[4.0, 4.5, 5.0], 1.0, 3.0);
        let p = creep_pressure(&g2, &g3).unwrap().value().unwrap();
        assert!((p - 3.0).abs() <= 1e-9 * 3.0);
        let g3p = on_line(&[4.0, 5.0], 2.0, 1.0);
        assert_eq!(creep_pressure(&g2, &g3p).unwrap(), Determination::Undetermined);
        assert!(matches!(creep_pressure(&g2[..1], &g3), Err(ReductionError::InsufficientPoints { .. })));
    }

    #[test]
    fn limit_pressure_cases() {
        let r = [PressuremeterReading::new(1.0, 600.0), PressuremeterReading::new(1.2, 800.0)];
        let p = limit_pressure(&r, 700.0).unwrap().value().unwrap();
        assert!((p - 1.1).abs() < 1e-9);
        let short = [PressuremeterReading::new(1.0, 400.0), PressuremeterReading::new(1.2, 500.0)];
        assert_eq!(limit_pressure(&short, 700.0).unwrap(), Determination::Undetermined);
        let over = [PressuremeterReading::new(1.0, 800.0)];
        assert!(matches!(limit_pressure(&over, 700.0), Err(ReductionError::InitialVolumeReached { .. })));
        let unsorted = [PressuremeterReading::new(1.2, 600.0), PressuremeterReading::new(1.0, 800.0)];
        assert_eq!(limit_pressure(&unsorted, 700.0), Err(ReductionError::Unsorted));
    }
}
