//! Linear referencing along borehole trajectories.
//!
//! A position down the hole is mapped to a fraction of the trajectory's
//! declared length, and that fraction is located along the cumulative chord
//! length of the trajectory vertices in a local East-North-Up frame anchored
//! at the first vertex. Endpoints (and any vertex hit exactly) are returned
//! as stored, without a projection round trip.

use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::model::{Entity, EntityType};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinrefError {
    #[error("unknown length unit `{0}`")]
    UnknownUnit(String),
    #[error("position {position} is outside [0, {length}]")]
    OutOfBounds { position: f64, length: f64 },
    #[error("invalid interval: from {from} must be below to {to}")]
    InvalidInterval { from: f64, to: f64 },
    #[error("degenerate trajectory geometry")]
    Degenerate,
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("sampling is incomplete: {0}")]
    Sampling(String),
}

/// Supported length units, each with an exact rational factor to metres.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LengthUnit {
    Metre,
    Centimetre,
    Millimetre,
    Foot,
    UsSurveyFoot,
}

impl LengthUnit {
    pub const ALL: [LengthUnit; 5] = [
        LengthUnit::Metre,
        LengthUnit::Centimetre,
        LengthUnit::Millimetre,
        LengthUnit::Foot,
        LengthUnit::UsSurveyFoot,
    ];

    pub fn code(self) -> &'static str {
        match self {
            LengthUnit::Metre => "m",
            LengthUnit::Centimetre => "cm",
            LengthUnit::Millimetre => "mm",
            LengthUnit::Foot => "ft",
            LengthUnit::UsSurveyFoot => "ftUS",
        }
    }

    /// `(numerator, denominator)` of the metre factor.
    pub fn to_metres_ratio(self) -> (u64, u64) {
        match self {
            LengthUnit::Metre => (1, 1),
            LengthUnit::Centimetre => (1, 100),
            LengthUnit::Millimetre => (1, 1000),
            LengthUnit::Foot => (3048, 10000),
            LengthUnit::UsSurveyFoot => (1200, 3937),
        }
    }

    pub fn to_metres(self) -> f64 {
        let (n, d) = self.to_metres_ratio();
        n as f64 / d as f64
    }
}

impl fmt::Display for LengthUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LengthUnit {
    type Err = LinrefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LengthUnit::ALL
            .into_iter()
            .find(|u| u.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LinrefError::UnknownUnit(s.to_string()))
    }
}

/// Converts `value` between units. The ratio is formed from integer
/// numerators and denominators so only the final division rounds.
pub fn convert_length(value: f64, from: LengthUnit, to: LengthUnit) -> f64 {
    if from == to {
        return value;
    }
    let (fnum, fden) = from.to_metres_ratio();
    let (tnum, tden) = to.to_metres_ratio();
    let num = (fnum * tden) as f64;
    let den = (fden * tnum) as f64;
    value * num / den
}

/// Like [`convert_length`] but from unit codes.
pub fn convert_length_codes(value: f64, from: &str, to: &str) -> Result<f64, LinrefError> {
    Ok(convert_length(value, from.parse()?, to.parse()?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Length {
    pub value: f64,
    pub unit: LengthUnit,
}

impl Length {
    pub fn new(value: f64, unit: LengthUnit) -> Self {
        Self { value, unit }
    }

    pub fn in_unit(self, unit: LengthUnit) -> f64 {
        convert_length(self.value, self.unit, unit)
    }
}

/// A WGS84 coordinate in lon/lat[/ellipsoidal height] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub lon: f64,
    pub lat: f64,
    pub height: Option<f64>,
}

impl Position {
    pub fn new(lon: f64, lat: f64, height: Option<f64>) -> Self {
        Self { lon, lat, height }
    }

    fn to_json(self) -> Value {
        match self.height {
            Some(h) => json!([self.lon, self.lat, h]),
            None => json!([self.lon, self.lat]),
        }
    }

    fn from_json(v: &Value) -> Result<Self, LinrefError> {
        let coords = v.as_array().ok_or_else(|| LinrefError::Geometry("coordinate must be an array".into()))?;
        if !(2..=3).contains(&coords.len()) {
            return Err(LinrefError::Geometry("coordinate must have 2 or 3 values".into()));
        }
        let nums: Vec<f64> = coords
            .iter()
            .map(|c| c.as_f64().ok_or_else(|| LinrefError::Geometry("coordinate values must be numbers".into())))
            .collect::<Result<_, _>>()?;
        let (lon, lat) = (nums[0], nums[1]);
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(LinrefError::Geometry(format!("({lon}, {lat}) is not a WGS84 lon/lat")));
        }
        Ok(Position::new(lon, lat, nums.get(2).copied()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Point(Position),
    LineString(Vec<Position>),
}

impl Geometry {
    pub fn from_geojson(v: &Value) -> Result<Self, LinrefError> {
        let ty = v.get("type").and_then(Value::as_str).ok_or_else(|| LinrefError::Geometry("missing type".into()))?;
        let coords = v.get("coordinates").ok_or_else(|| LinrefError::Geometry("missing coordinates".into()))?;
        match ty {
            "Point" => Ok(Geometry::Point(Position::from_json(coords)?)),
            "LineString" => {
                let arr = coords.as_array().ok_or_else(|| LinrefError::Geometry("coordinates must be an array".into()))?;
                if arr.len() < 2 {
                    return Err(LinrefError::Geometry("LineString needs at least 2 vertices".into()));
                }
                Ok(Geometry::LineString(arr.iter().map(Position::from_json).collect::<Result<_, _>>()?))
            }
            other => Err(LinrefError::Geometry(format!("unsupported geometry type `{other}`"))),
        }
    }

    pub fn to_geojson(&self) -> Value {
        match self {
            Geometry::Point(p) => json!({"type": "Point", "coordinates": p.to_json()}),
            Geometry::LineString(ps) => json!({
                "type": "LineString",
                "coordinates": ps.iter().map(|p| p.to_json()).collect::<Vec<_>>(),
            }),
        }
    }
}

// WGS84 ellipsoid
const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

fn geodetic_to_ecef(p: Position) -> [f64; 3] {
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    let h = p.height.unwrap_or(0.0);
    let n = WGS84_A / (1.0 - WGS84_E2 * lat.sin().powi(2)).sqrt();
    [
        (n + h) * lat.cos() * lon.cos(),
        (n + h) * lat.cos() * lon.sin(),
        (n * (1.0 - WGS84_E2) + h) * lat.sin(),
    ]
}

fn ecef_to_geodetic(x: f64, y: f64, z: f64) -> (f64, f64, f64) {
    let lon = y.atan2(x);
    let p = x.hypot(y);
    let mut lat = z.atan2(p * (1.0 - WGS84_E2));
    for _ in 0..12 {
        let n = WGS84_A / (1.0 - WGS84_E2 * lat.sin().powi(2)).sqrt();
        let h = p * lat.cos() + z * lat.sin() - WGS84_A * WGS84_A / n;
        let next = z.atan2(p * (1.0 - WGS84_E2 * n / (n + h)));
        if (next - lat).abs() < 1e-15 {
            lat = next;
            break;
        }
        lat = next;
    }
    let n = WGS84_A / (1.0 - WGS84_E2 * lat.sin().powi(2)).sqrt();
    let h = p * lat.cos() + z * lat.sin() - WGS84_A * WGS84_A / n;
    (lon.to_degrees(), lat.to_degrees(), h)
}

/// Local tangent-plane frame anchored at a geodetic origin.
struct EnuFrame {
    origin: [f64; 3],
    sin_lat: f64,
    cos_lat: f64,
    sin_lon: f64,
    cos_lon: f64,
}

impl EnuFrame {
    fn new(origin: Position) -> Self {
        let (lat, lon) = (origin.lat.to_radians(), origin.lon.to_radians());
        Self {
            origin: geodetic_to_ecef(origin),
            sin_lat: lat.sin(),
            cos_lat: lat.cos(),
            sin_lon: lon.sin(),
            cos_lon: lon.cos(),
        }
    }

    fn to_enu(&self, p: Position) -> [f64; 3] {
        let e = geodetic_to_ecef(p);
        let (dx, dy, dz) = (e[0] - self.origin[0], e[1] - self.origin[1], e[2] - self.origin[2]);
        [
            -self.sin_lon * dx + self.cos_lon * dy,
            -self.sin_lat * self.cos_lon * dx - self.sin_lat * self.sin_lon * dy + self.cos_lat * dz,
            self.cos_lat * self.cos_lon * dx + self.cos_lat * self.sin_lon * dy + self.sin_lat * dz,
        ]
    }

    fn to_geodetic(&self, enu: [f64; 3], with_height: bool) -> Position {
        let [e, n, u] = enu;
        let dx = -self.sin_lon * e - self.sin_lat * self.cos_lon * n + self.cos_lat * self.cos_lon * u;
        let dy = self.cos_lon * e - self.sin_lat * self.sin_lon * n + self.cos_lat * self.sin_lon * u;
        let dz = self.cos_lat * n + self.sin_lat * u;
        let (lon, lat, h) = ecef_to_geodetic(self.origin[0] + dx, self.origin[1] + dy, self.origin[2] + dz);
        Position::new(lon, lat, with_height.then_some(h))
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// A trajectory polyline prepared for repeated lookups.
pub struct Trajectory<'a> {
    vertices: &'a [Position],
    frame: EnuFrame,
    enu: Vec<[f64; 3]>,
    /// Cumulative chord length at each vertex.
    cumulative: Vec<f64>,
    with_height: bool,
}

impl<'a> Trajectory<'a> {
    pub fn new(vertices: &'a [Position]) -> Result<Self, LinrefError> {
        if vertices.len() < 2 {
            return Err(LinrefError::Geometry("trajectory needs at least 2 vertices".into()));
        }
        let frame = EnuFrame::new(vertices[0]);
        let enu: Vec<_> = vertices.iter().map(|p| frame.to_enu(*p)).collect();
        let mut cumulative = Vec::with_capacity(enu.len());
        let mut total = 0.0;
        cumulative.push(0.0);
        for w in enu.windows(2) {
            total += distance(w[0], w[1]);
            cumulative.push(total);
        }
        let with_height = vertices.iter().all(|p| p.height.is_some());
        Ok(Self { vertices, frame, enu, cumulative, with_height })
    }

    pub fn chord_length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Point at fraction `f` ∈ [0, 1] of the cumulative chord length.
    pub fn point_at_fraction(&self, f: f64) -> Result<Position, LinrefError> {
        if !(0.0..=1.0).contains(&f) {
            return Err(LinrefError::OutOfBounds { position: f, length: 1.0 });
        }
        if f == 0.0 {
            return Ok(self.vertices[0]);
        }
        if f == 1.0 {
            return Ok(*self.vertices.last().expect("non-empty"));
        }
        let total = self.chord_length();
        if total <= 0.0 {
            return Err(LinrefError::Degenerate);
        }
        let target = f * total;
        // First segment whose end reaches the target.
        let seg = self.cumulative.partition_point(|c| *c < target).clamp(1, self.cumulative.len() - 1);
        if self.cumulative[seg] == target {
            return Ok(self.vertices[seg]);
        }
        let (start, end) = (self.cumulative[seg - 1], self.cumulative[seg]);
        let t = if end > start { (target - start) / (end - start) } else { 0.0 };
        let (a, b) = (self.enu[seg - 1], self.enu[seg]);
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
        Ok(self.frame.to_geodetic(p, self.with_height))
    }

    /// Sub-linestring between two fractions, keeping any vertex strictly between them.
    pub fn segment_between_fractions(&self, from: f64, to: f64) -> Result<Vec<Position>, LinrefError> {
        if from >= to {
            return Err(LinrefError::InvalidInterval { from, to });
        }
        let total = self.chord_length();
        let mut out = vec![self.point_at_fraction(from)?];
        if total > 0.0 {
            for (i, c) in self.cumulative.iter().enumerate() {
                let fv = c / total;
                if fv > from && fv < to {
                    out.push(self.vertices[i]);
                }
            }
        }
        out.push(self.point_at_fraction(to)?);
        Ok(out)
    }
}

fn fraction(position: Length, declared: Length, offset: f64) -> Result<f64, LinrefError> {
    let length = declared.value;
    let pos = position.in_unit(declared.unit) + offset;
    if !(length > 0.0) {
        return Err(LinrefError::Degenerate);
    }
    if !(0.0..=length).contains(&pos) {
        return Err(LinrefError::OutOfBounds { position: pos, length });
    }
    Ok(pos / length)
}

/// Locates `position` along a trajectory of `declared_length`.
pub fn point_at_position(
    trajectory: &[Position],
    declared_length: Length,
    position: Length,
) -> Result<Position, LinrefError> {
    point_at_position_with_offset(trajectory, declared_length, position, 0.0)
}

/// As [`point_at_position`], with an origin offset (in the declared unit)
/// added to the position first.
pub fn point_at_position_with_offset(
    trajectory: &[Position],
    declared_length: Length,
    position: Length,
    offset: f64,
) -> Result<Position, LinrefError> {
    let f = fraction(position, declared_length, offset)?;
    Trajectory::new(trajectory)?.point_at_fraction(f)
}

pub fn segment_geometry(
    trajectory: &[Position],
    declared_length: Length,
    from: Length,
    to: Length,
) -> Result<Vec<Position>, LinrefError> {
    segment_geometry_with_offset(trajectory, declared_length, from, to, 0.0)
}

pub fn segment_geometry_with_offset(
    trajectory: &[Position],
    declared_length: Length,
    from: Length,
    to: Length,
    offset: f64,
) -> Result<Vec<Position>, LinrefError> {
    let (a, b) = (from.in_unit(declared_length.unit), to.in_unit(declared_length.unit));
    if a >= b {
        return Err(LinrefError::InvalidInterval { from: a, to: b });
    }
    let fa = fraction(from, declared_length, offset)?;
    let fb = fraction(to, declared_length, offset)?;
    Trajectory::new(trajectory)?.segment_between_fractions(fa, fb)
}

/// Where along the trajectory a sampling sits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingExtent {
    At(Length),
    Interval(Length, Length),
    /// No positions: the sampling spans the whole trajectory.
    Entirety,
}

impl SamplingExtent {
    pub fn from_entity(sampling: &Entity) -> Result<Self, LinrefError> {
        debug_assert_eq!(sampling.entity_type, EntityType::BhSampling);
        let unit: LengthUnit = sampling
            .text("positionUom")
            .ok_or_else(|| LinrefError::Sampling("positionUom missing".into()))?
            .parse()?;
        let at = sampling.number("atPosition");
        let from = sampling.number("fromPosition");
        let to = sampling.number("toPosition");
        match (at, from, to) {
            (Some(a), None, None) => Ok(SamplingExtent::At(Length::new(a, unit))),
            (None, Some(f), Some(t)) => Ok(SamplingExtent::Interval(Length::new(f, unit), Length::new(t, unit))),
            (None, None, None) => Ok(SamplingExtent::Entirety),
            _ => Err(LinrefError::Sampling("exclusive position fields".into())),
        }
    }

    /// `(from, to)` in `unit`; `At` yields a zero-length interval, `Entirety` yields `None`.
    pub fn bounds_in(&self, unit: LengthUnit) -> Option<(f64, f64)> {
        match *self {
            SamplingExtent::At(a) => Some((a.in_unit(unit), a.in_unit(unit))),
            SamplingExtent::Interval(f, t) => Some((f.in_unit(unit), t.in_unit(unit))),
            SamplingExtent::Entirety => None,
        }
    }
}

/// Declared length and origin offset of a trajectory entity.
pub fn trajectory_length(trajectory: &Entity) -> Result<(Length, f64), LinrefError> {
    let unit: LengthUnit = trajectory
        .text("uom")
        .ok_or_else(|| LinrefError::Sampling("trajectory uom missing".into()))?
        .parse()?;
    let length = trajectory.number("lengthHole").ok_or_else(|| LinrefError::Sampling("lengthHole missing".into()))?;
    let offset = trajectory.number("offsetHole").unwrap_or(0.0);
    Ok((Length::new(length, unit), offset))
}

/// Geometry of a sampling on its trajectory: a point for `atPosition`, a
/// segment for `fromPosition`/`toPosition`, the whole trajectory otherwise.
pub fn sampling_geometry(
    sampling: &Entity,
    trajectory: &Entity,
    trajectory_geometry: &[Position],
) -> Result<Geometry, LinrefError> {
    let (declared, offset) = trajectory_length(trajectory)?;
    match SamplingExtent::from_entity(sampling)? {
        SamplingExtent::At(p) => {
            point_at_position_with_offset(trajectory_geometry, declared, p, offset).map(Geometry::Point)
        }
        SamplingExtent::Interval(f, t) => {
            segment_geometry_with_offset(trajectory_geometry, declared, f, t, offset).map(Geometry::LineString)
        }
        SamplingExtent::Entirety => Ok(Geometry::LineString(trajectory_geometry.to_vec())),
    }
}
