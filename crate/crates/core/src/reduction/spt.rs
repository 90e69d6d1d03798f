use std::fmt;

use serde::{Deserialize, Serialize};

use super::{finite, round_half_away, ReductionError};
use crate::linref::Length;

/// One SPT increment. `blow_count` is signed so that bad input is reported
/// rather than wrapped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveSet {
    pub index: u32,
    pub blow_count: i64,
    pub penetration: Length,
    pub weight_of_rods: bool,
    pub weight_of_hammer: bool,
}

impl DriveSet {
    pub fn new(index: u32, blow_count: i64, penetration: Length) -> Self {
        Self { index, blow_count, penetration, weight_of_rods: false, weight_of_hammer: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TerminationReason {
    /// 50 blows within one increment.
    BlowsInIncrement,
    /// 100 blows in total.
    TotalBlows,
    /// 10 consecutive blows without advance.
    NoAdvance,
}

/// The reported N-value or the condition reported in its place.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NValue {
    Value(u32),
    Refusal,
    WeightOfRods,
    WeightOfHammer,
    /// Fewer than three full increments without a termination condition.
    Indeterminate,
}

impl NValue {
    pub fn value(self) -> Option<u32> {
        match self {
            NValue::Value(n) => Some(n),
            _ => None,
        }
    }

    /// Text used in reports and observation results for sentinels.
    pub fn label(self) -> String {
        match self {
            NValue::Value(n) => n.to_string(),
            NValue::Refusal => "refusal".into(),
            NValue::WeightOfRods => "WOR".into(),
            NValue::WeightOfHammer => "WOH".into(),
            NValue::Indeterminate => "indeterminate".into(),
        }
    }
}

impl fmt::Display for NValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SptResult {
    pub n_value: NValue,
    /// Present only for a numeric N-value with an energy ratio applied.
    pub n60: Option<i64>,
    pub n1_60: Option<i64>,
    pub termination: Option<TerminationReason>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnergyCorrected {
    pub n60: i64,
    pub n1_60: i64,
}

impl SptResult {
    /// Applies the energy correction when the N-value is numeric.
    pub fn with_energy(mut self, energy_ratio: f64, overburden_factor: f64) -> Result<Self, ReductionError> {
        if let NValue::Value(n) = self.n_value {
            let c = spt_energy_correct(n, energy_ratio, overburden_factor)?;
            self.n60 = Some(c.n60);
            self.n1_60 = Some(c.n1_60);
        }
        Ok(self)
    }
}

fn termination(sets: &[DriveSet]) -> Option<TerminationReason> {
    let mut total = 0i64;
    for s in sets {
        if s.blow_count >= 50 {
            return Some(TerminationReason::BlowsInIncrement);
        }
        if s.blow_count >= 10 && s.penetration.value == 0.0 {
            return Some(TerminationReason::NoAdvance);
        }
        total += s.blow_count;
        if total >= 100 {
            return Some(TerminationReason::TotalBlows);
        }
    }
    None
}

/// Reduces 1 to 3 drive sets. The N-value is the sum of the 2nd and 3rd
/// counts and exists only when all three increments reached full length.
pub fn spt_reduce(sets: &[DriveSet], increment: Length) -> Result<SptResult, ReductionError> {
    if sets.is_empty() {
        return Err(ReductionError::Empty("drive sets"));
    }
    if sets.len() > 3 {
        return Err(ReductionError::TooManySets(sets.len()));
    }
    finite(increment.value, "increment length")?;
    for (i, s) in sets.iter().enumerate() {
        let expected = i as u32 + 1;
        if s.index != expected {
            return Err(ReductionError::NonContiguous { expected, found: s.index });
        }
        if s.blow_count < 0 {
            return Err(ReductionError::Negative("blow count"));
        }
        if finite(s.penetration.value, "penetration")? < 0.0 {
            return Err(ReductionError::Negative("penetration"));
        }
    }
    let flagged = sets.iter().find_map(|s| {
        if s.weight_of_rods {
            Some(NValue::WeightOfRods)
        } else if s.weight_of_hammer {
            Some(NValue::WeightOfHammer)
        } else {
            None
        }
    });
    let reason = termination(sets);
    let full = |s: &DriveSet| s.penetration.in_unit(increment.unit) >= increment.value * (1.0 - 1e-9);
    let n_value = match flagged {
        Some(sentinel) => sentinel,
        None if sets.len() == 3 && sets.iter().all(full) => {
            NValue::Value((sets[1].blow_count + sets[2].blow_count) as u32)
        }
        None if reason.is_some() => NValue::Refusal,
        None => NValue::Indeterminate,
    };
    Ok(SptResult { n_value, n60: None, n1_60: None, termination: reason })
}

/// Normalizes an N-value to 60% rod energy and applies the overburden factor.
pub fn spt_energy_correct(
    n_value: u32,
    energy_ratio: f64,
    overburden_factor: f64,
) -> Result<EnergyCorrected, ReductionError> {
    if !(energy_ratio.is_finite() && energy_ratio > 0.0 && energy_ratio <= 150.0) {
        return Err(ReductionError::EnergyRatio(energy_ratio));
    }
    if !(overburden_factor.is_finite() && overburden_factor > 0.0) {
        return Err(ReductionError::OverburdenFactor(overburden_factor));
    }
    let n60 = n_value as f64 * energy_ratio / 60.0;
    Ok(EnergyCorrected { n60: round_half_away(n60), n1_60: round_half_away(n60 * overburden_factor) })
}

/// Sentinel-aware form of [`spt_energy_correct`].
pub fn spt_energy_correct_value(
    n_value: NValue,
    energy_ratio: f64,
    overburden_factor: f64,
) -> Result<EnergyCorrected, ReductionError> {
    match n_value {
        NValue::Value(n) => spt_energy_correct(n, energy_ratio, overburden_factor),
        other => Err(ReductionError::Sentinel(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linref::LengthUnit;

    fn ft(v: f64) -> Length {
        Length::new(v, LengthUnit::UsSurveyFoot)
    }

    #[test]
    fn full_test_sums_last_two() {
        let sets = [DriveSet::new(1, 9, ft(0.5)), DriveSet::new(2, 8, ft(0.5)), DriveSet::new(3, 9, ft(0.5))];
        let r = spt_reduce(&sets, ft(0.5)).unwrap();
        assert_eq!(r.n_value, NValue::Value(17));
        assert_eq!(r.termination, None);
    }

    #[test]
    fn fifty_blows_is_refusal() {
        let sets = [DriveSet::new(1, 9, ft(0.5)), DriveSet::new(2, 50, ft(0.2))];
        let r = spt_reduce(&sets, ft(0.5)).unwrap();
        assert_eq!(r.n_value, NValue::Refusal);
        assert_eq!(r.termination, Some(TerminationReason::BlowsInIncrement));
    }

    #[test]
    fn weight_of_rods_has_no_value() {
        let mut s = DriveSet::new(1, 0, ft(0.5));
        s.weight_of_rods = true;
        let r = spt_reduce(&[s], ft(0.5)).unwrap();
        assert_eq!(r.n_value, NValue::WeightOfRods);
        assert_eq!(r.n_value.value(), None);
    }

    #[test]
    fn partial_penetration_is_indeterminate() {
        let sets = [DriveSet::new(1, 9, ft(0.5)), DriveSet::new(2, 8, ft(0.5)), DriveSet::new(3, 9, ft(0.3))];
        assert_eq!(spt_reduce(&sets, ft(0.5)).unwrap().n_value, NValue::Indeterminate);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(spt_reduce(&[], ft(0.5)), Err(ReductionError::Empty(_))));
        let gap = [DriveSet::new(1, 9, ft(0.5)), DriveSet::new(3, 8, ft(0.5))];
        assert!(matches!(spt_reduce(&gap, ft(0.5)), Err(ReductionError::NonContiguous { expected: 2, found: 3 })));
        let neg = [DriveSet::new(1, -1, ft(0.5))];
        assert!(matches!(spt_reduce(&neg, ft(0.5)), Err(ReductionError::Negative(_))));
    }

    #[test]
    fn energy_correction() {
        assert_eq!(spt_energy_correct(17, 84.0, 1.0).unwrap(), EnergyCorrected { n60: 24, n1_60: 24 });
        assert_eq!(spt_energy_correct(17, 84.0, 0.5).unwrap().n1_60, 12);
        assert_eq!(spt_energy_correct(23, 60.0, 1.0).unwrap().n60, 23);
        assert!(spt_energy_correct(17, 0.0, 1.0).is_err());
        assert!(spt_energy_correct_value(NValue::Refusal, 84.0, 1.0).is_err());
    }
}
