//! The 24-point geometric face model.
//!
//! Points live in a right-handed frame with `y` pointing up. Normalization
//! re-centres a face on the midpoint of the inner eye corners `el1`/`er1`,
//! rotates that inter-ocular segment onto the x-axis and scales it to unit
//! length, so a normalized face always has `el1 = (-0.5, 0)` and
//! `er1 = (0.5, 0)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandmarkError {
    #[error("line {line}: expected `<id> <x> <y>`")]
    Malformed { line: usize },
    #[error("line {line}: unknown feature point `{name}`")]
    UnknownPoint { line: usize, name: String },
    #[error("line {line}: feature point `{name}` given twice")]
    Duplicate { line: usize, name: String },
    #[error("line {line}: coordinate `{value}` is not a finite number")]
    BadNumber { line: usize, value: String },
    #[error("missing feature point `{0}`")]
    Missing(FeaturePointId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Role of a feature point under facial muscle movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointRole {
    Stable,
    Passive,
    Active,
}

macro_rules! feature_points {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// One of the 24 named landmarks, declared in canonical order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum FeaturePointId {
            $($variant),*
        }

        impl FeaturePointId {
            pub const ALL: [FeaturePointId; 24] = [$(FeaturePointId::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(FeaturePointId::$variant => $name),*
                }
            }
        }

        impl FromStr for FeaturePointId {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(FeaturePointId::$variant),)*
                    other => Err(format!("unknown feature point `{other}`")),
                }
            }
        }
    };
}

feature_points! {
    Bl1 => "bl1", Bl2 => "bl2", Bl3 => "bl3",
    Br1 => "br1", Br2 => "br2", Br3 => "br3",
    El1 => "el1", El2 => "el2", El3 => "el3", El4 => "el4",
    Er1 => "er1", Er2 => "er2", Er3 => "er3", Er4 => "er4",
    Ml1 => "ml1", Ml2 => "ml2", Ml3 => "ml3",
    Mm1 => "mm1", Mm2 => "mm2", Mm3 => "mm3", Mm4 => "mm4",
    Mr1 => "mr1", Mr2 => "mr2", Mr3 => "mr3",
}

impl FeaturePointId {
    /// Position in the canonical order (also the storage index in [`FaceModel`]).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn role(self) -> PointRole {
        use FeaturePointId::*;
        match self {
            Er1 | El1 => PointRole::Stable,
            Er4 | El4 | Mr2 | Ml2 => PointRole::Passive,
            _ => PointRole::Active,
        }
    }

    pub fn is_active(self) -> bool {
        self.role() == PointRole::Active
    }
}

impl fmt::Display for FeaturePointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// A complete 24-point face. Construction guarantees that the inner eye
/// corners are distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    points: [Point; 24],
    pub frame_tag: Option<usize>,
}

impl FaceModel {
    /// Builds a face from points given in canonical order.
    pub fn new(points: [Point; 24]) -> Result<Self, GeometryError> {
        let face = FaceModel {
            points,
            frame_tag: None,
        };
        face.check()?;
        Ok(face)
    }

    /// Builds a face from `(id, point)` pairs; every id must appear exactly once.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, LandmarkError>
    where
        I: IntoIterator<Item = (FeaturePointId, Point)>,
    {
        let mut slots: [Option<Point>; 24] = [None; 24];
        for (id, p) in pairs {
            if slots[id.index()].replace(p).is_some() {
                return Err(LandmarkError::Duplicate {
                    line: 0,
                    name: id.name().to_string(),
                });
            }
        }
        let mut points = [Point::default(); 24];
        for id in FeaturePointId::ALL {
            points[id.index()] = slots[id.index()].ok_or(LandmarkError::Missing(id))?;
        }
        Ok(FaceModel::new(points)?)
    }

    fn check(&self) -> Result<(), GeometryError> {
        if self
            .points
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(GeometryError::InvalidInput(
                "non-finite landmark coordinate".into(),
            ));
        }
        let l = self.point(FeaturePointId::El1);
        let r = self.point(FeaturePointId::Er1);
        if l == r {
            return Err(GeometryError::Degenerate(
                "inner eye corners el1 and er1 coincide",
            ));
        }
        Ok(())
    }

    pub fn point(&self, id: FeaturePointId) -> Point {
        self.points[id.index()]
    }

    pub fn points(&self) -> &[Point; 24] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeaturePointId, Point)> + '_ {
        FeaturePointId::ALL.iter().map(|&id| (id, self.point(id)))
    }

    /// Returns a copy with every point passed through `f`.
    pub fn map_points<F>(&self, mut f: F) -> Result<FaceModel, GeometryError>
    where
        F: FnMut(FeaturePointId, Point) -> Point,
    {
        let mut points = self.points;
        for id in FeaturePointId::ALL {
            points[id.index()] = f(id, points[id.index()]);
        }
        let mut face = FaceModel::new(points)?;
        face.frame_tag = self.frame_tag;
        Ok(face)
    }

    pub fn with_frame_tag(mut self, tag: usize) -> Self {
        self.frame_tag = Some(tag);
        self
    }
}

/// Shift every point so the midpoint of `el1`/`er1` lands on the origin.
pub fn translate_points(face: &FaceModel) -> Result<FaceModel, GeometryError> {
    face.check()?;
    let l = face.point(FeaturePointId::El1);
    let r = face.point(FeaturePointId::Er1);
    let cx = (l.x + r.x) / 2.0;
    let cy = (l.y + r.y) / 2.0;
    face.map_points(|_, p| Point::new(p.x - cx, p.y - cy))
}

/// Rotate about the origin so the `el1 -> er1` direction becomes the +x axis.
pub fn rotate_points(face: &FaceModel) -> Result<FaceModel, GeometryError> {
    face.check()?;
    let l = face.point(FeaturePointId::El1);
    let r = face.point(FeaturePointId::Er1);
    let theta = (r.y - l.y).atan2(r.x - l.x);
    let (sin, cos) = theta.sin_cos();
    face.map_points(|_, p| Point::new(p.x * cos + p.y * sin, -p.x * sin + p.y * cos))
}

/// Divide all coordinates by the inter-ocular distance `2 * x(er1)`.
pub fn scale_points(face: &FaceModel) -> Result<FaceModel, GeometryError> {
    face.check()?;
    let d = 2.0 * face.point(FeaturePointId::Er1).x;
    if d <= 0.0 || !d.is_finite() {
        return Err(GeometryError::Degenerate(
            "inter-ocular distance must be positive",
        ));
    }
    face.map_points(|_, p| Point::new(p.x / d, p.y / d))
}

pub fn normalize_face(face: &FaceModel) -> Result<FaceModel, GeometryError> {
    scale_points(&rotate_points(&translate_points(face)?)?)
}

/// The normalizing similarity of a face as a single affine map.
///
/// Applying it to one point gives the same result as `normalize_face` up to
/// rounding, which lets callers normalize only the points they need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizingTransform {
    center: Point,
    cos: f64,
    sin: f64,
    inv_scale: f64,
}

impl NormalizingTransform {
    pub fn of(face: &FaceModel) -> Result<Self, GeometryError> {
        let l = face.point(FeaturePointId::El1);
        let r = face.point(FeaturePointId::Er1);
        let (dx, dy) = (r.x - l.x, r.y - l.y);
        let d = dx.hypot(dy);
        if d <= 0.0 || !d.is_finite() {
            return Err(GeometryError::Degenerate(
                "inner eye corners el1 and er1 coincide",
            ));
        }
        let (sin, cos) = (dy / d, dx / d);
        Ok(NormalizingTransform {
            center: Point::new((l.x + r.x) / 2.0, (l.y + r.y) / 2.0),
            cos,
            sin,
            inv_scale: 1.0 / d,
        })
    }

    pub fn apply(&self, p: Point) -> Point {
        let x = p.x - self.center.x;
        let y = p.y - self.center.y;
        Point::new(
            (x * self.cos + y * self.sin) * self.inv_scale,
            (-x * self.sin + y * self.cos) * self.inv_scale,
        )
    }
}

/// Per-point `(dx, dy)` of an expressive face relative to a neutral one.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    deltas: [Point; 24],
}

impl Displacement {
    pub fn get(&self, id: FeaturePointId) -> Point {
        self.deltas[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeaturePointId, Point)> + '_ {
        FeaturePointId::ALL.iter().map(|&id| (id, self.get(id)))
    }

    pub fn negate(&self) -> Displacement {
        let mut deltas = self.deltas;
        for d in &mut deltas {
            *d = Point::new(-d.x, -d.y);
        }
        Displacement { deltas }
    }
}

/// Pointwise `expressive - neutral`; both faces are expected to be normalized.
pub fn displacement(expressive: &FaceModel, neutral: &FaceModel) -> Displacement {
    let mut deltas = [Point::default(); 24];
    for id in FeaturePointId::ALL {
        let e = expressive.point(id);
        let n = neutral.point(id);
        deltas[id.index()] = Point::new(e.x - n.x, e.y - n.y);
    }
    Displacement { deltas }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffInterpretation {
    Elongation,
    Contraction,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffResult {
    pub value: f64,
    pub interpretation: DiffInterpretation,
}

impl DiffResult {
    pub fn from_value(value: f64) -> Self {
        let interpretation = if value > 0.0 {
            DiffInterpretation::Elongation
        } else if value < 0.0 {
            DiffInterpretation::Contraction
        } else {
            DiffInterpretation::Neutral
        };
        DiffResult {
            value,
            interpretation,
        }
    }
}

/// Cumulative difference between an expressive and a neutral series: the sum
/// of consecutive increments of `expressive` minus those of `neutral`.
/// A positive value reads as muscle elongation, a negative one as contraction.
pub fn cumulative_diff(expressive: &[f64], neutral: &[f64]) -> Result<DiffResult, GeometryError> {
    if expressive.len() != neutral.len() {
        return Err(GeometryError::InvalidInput(format!(
            "series lengths differ ({} vs {})",
            expressive.len(),
            neutral.len()
        )));
    }
    if expressive.len() < 2 {
        return Err(GeometryError::InvalidInput(
            "cumulative diff needs at least two samples".into(),
        ));
    }
    let increments = |s: &[f64]| s.windows(2).map(|w| w[1] - w[0]).sum::<f64>();
    Ok(DiffResult::from_value(
        increments(expressive) - increments(neutral),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// One coordinate of every point, in canonical point order.
pub fn axis_series(face: &FaceModel, axis: Axis) -> Vec<f64> {
    face.points()
        .iter()
        .map(|p| match axis {
            Axis::X => p.x,
            Axis::Y => p.y,
        })
        .collect()
}

/// [`cumulative_diff`] over the canonical-order series of one axis.
pub fn face_diff(
    expressive: &FaceModel,
    neutral: &FaceModel,
    axis: Axis,
) -> Result<DiffResult, GeometryError> {
    cumulative_diff(&axis_series(expressive, axis), &axis_series(neutral, axis))
}

/// Parses the 24-line `<id> <x> <y>` landmark format. Blank lines and lines
/// starting with `#` are skipped; points may appear in any order.
pub fn parse_landmarks(text: &str) -> Result<FaceModel, LandmarkError> {
    let mut slots: [Option<Point>; 24] = [None; 24];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let [name, xs, ys] = fields[..] else {
            return Err(LandmarkError::Malformed { line });
        };
        let id: FeaturePointId = name.parse().map_err(|_| LandmarkError::UnknownPoint {
            line,
            name: name.to_string(),
        })?;
        let coord = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| LandmarkError::BadNumber {
                    line,
                    value: s.to_string(),
                })
        };
        let p = Point::new(coord(xs)?, coord(ys)?);
        if slots[id.index()].replace(p).is_some() {
            return Err(LandmarkError::Duplicate {
                line,
                name: name.to_string(),
            });
        }
    }
    let mut points = [Point::default(); 24];
    for id in FeaturePointId::ALL {
        points[id.index()] = slots[id.index()].ok_or(LandmarkError::Missing(id))?;
    }
    Ok(FaceModel::new(points)?)
}

/// Writes the landmark format in canonical order. Coordinates use the
/// shortest representation that parses back to the same `f64`.
pub fn format_landmarks(face: &FaceModel) -> String {
    let mut out = String::with_capacity(24 * 32);
    for (id, p) in face.iter() {
        out.push_str(&format!("{} {:?} {:?}\n", id, p.x, p.y));
    }
    out
}
