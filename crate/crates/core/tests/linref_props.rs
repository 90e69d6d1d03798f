//! Linear referencing properties on random borehole trajectories.

use borelog_core::linref::{
    convert_length, point_at_position, Length, LengthUnit, Position, Trajectory,
};
use proptest::prelude::*;

const A: f64 = 6_378_137.0;
const F: f64 = 1.0 / 298.257_223_563;

/// Geodetic to ECEF, written out independently of the library frame.
fn ecef(p: Position) -> [f64; 3] {
    let e2 = F * (2.0 - F);
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    let h = p.height.unwrap_or(0.0);
    let n = A / (1.0 - e2 * lat.sin().powi(2)).sqrt();
    [(n + h) * lat.cos() * lon.cos(), (n + h) * lat.cos() * lon.sin(), (n * (1.0 - e2) + h) * lat.sin()]
}

fn dist(a: Position, b: Position) -> f64 {
    let (a, b) = (ecef(a), ecef(b));
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// A collar plus 1 to 5 further vertices, each a few metres to a few
/// hundred metres on from the previous one.
fn trajectory() -> impl Strategy<Value = Vec<Position>> {
    let collar = (-179.0f64..179.0, -80.0f64..80.0, -100.0f64..3000.0);
    let step = (-1e-3f64..1e-3, -1e-3f64..1e-3, -200.0f64..-1.0);
    (collar, proptest::collection::vec(step, 1..6), any::<bool>()).prop_map(|((lon, lat, h), steps, heights)| {
        let mut out = vec![Position::new(lon, lat, heights.then_some(h))];
        let (mut lon, mut lat, mut h) = (lon, lat, h);
        for (dlon, dlat, dh) in steps {
            lon += dlon;
            lat += dlat;
            h += dh;
            out.push(Position::new(lon, lat, heights.then_some(h)));
        }
        out
    })
}

fn degrees_apart(a: Position, b: Position) -> f64 {
    (a.lon - b.lon).abs().max((a.lat - b.lat).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn endpoints_are_bit_exact(vs in trajectory(), length in 0.5f64..500.0) {
        let t = Trajectory::new(&vs).unwrap();
        prop_assert_eq!(t.point_at_fraction(0.0).unwrap(), vs[0]);
        prop_assert_eq!(t.point_at_fraction(1.0).unwrap(), *vs.last().unwrap());
        let declared = Length::new(length, LengthUnit::Metre);
        prop_assert_eq!(point_at_position(&vs, declared, Length::new(0.0, LengthUnit::Metre)).unwrap(), vs[0]);
        prop_assert_eq!(point_at_position(&vs, declared, declared).unwrap(), *vs.last().unwrap());
    }

    #[test]
    fn along_track_distance_increases(vs in trajectory(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let (f1, f2) = if a < b { (a, b) } else { (b, a) };
        let t = Trajectory::new(&vs).unwrap();
        let along = |f: f64| -> f64 {
            if f == 0.0 {
                return 0.0;
            }
            let part = t.segment_between_fractions(0.0, f).unwrap();
            part.windows(2).map(|w| dist(w[0], w[1])).sum()
        };
        prop_assert!(along(f1) < along(f2), "{} !< {}", along(f1), along(f2));
    }

    #[test]
    fn straight_trajectory_distance_from_collar_increases(
        vs in trajectory().prop_map(|v| vec![v[0], v[1]]),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        prop_assume!((a - b).abs() > 1e-6);
        let (f1, f2) = if a < b { (a, b) } else { (b, a) };
        let t = Trajectory::new(&vs).unwrap();
        let d = |f| dist(vs[0], t.point_at_fraction(f).unwrap());
        prop_assert!(d(f1) < d(f2));
        // Chord fraction: the point sits at f of the collar-to-end distance.
        let total = dist(vs[0], vs[1]);
        prop_assert!((d(f2) - f2 * total).abs() <= 1e-6 * total.max(1.0));
    }

    #[test]
    fn us_survey_feet_match_metres(vs in trajectory(), length_ft in 1.0f64..1500.0, frac in 0.0f64..=1.0) {
        let x_ft = length_ft * frac;
        let in_ft = point_at_position(
            &vs,
            Length::new(length_ft, LengthUnit::UsSurveyFoot),
            Length::new(x_ft, LengthUnit::UsSurveyFoot),
        )
        .unwrap();
        let to_m = |v| convert_length(v, LengthUnit::UsSurveyFoot, LengthUnit::Metre);
        let in_m = point_at_position(
            &vs,
            Length::new(to_m(length_ft), LengthUnit::Metre),
            Length::new(to_m(x_ft), LengthUnit::Metre),
        )
        .unwrap();
        prop_assert!(degrees_apart(in_ft, in_m) <= 1e-9, "{:?} vs {:?}", in_ft, in_m);
        // Mixed units: position in ftUS against a length declared in metres.
        let mixed = point_at_position(&vs, Length::new(to_m(length_ft), LengthUnit::Metre), Length::new(x_ft, LengthUnit::UsSurveyFoot));
        if let Ok(p) = mixed {
            prop_assert!(degrees_apart(in_ft, p) <= 1e-9);
        }
    }

    #[test]
    fn conversions_round_trip(v in -1e6f64..1e6, from in 0usize..5, to in 0usize..5) {
        let (from, to) = (LengthUnit::ALL[from], LengthUnit::ALL[to]);
        let back = convert_length(convert_length(v, from, to), to, from);
        prop_assert!((back - v).abs() <= 4.0 * f64::EPSILON * v.abs());
    }
}
