//! Domain types: labels, scenes, the map database, matcher parameters and
//! outcomes, plus the JSON map and scene file formats.
//!
//! Conventions: map coordinates are meters, x east and y north. Scene
//! coordinates are pixels, u right and v down. The matcher works on scene
//! points relative to the image center with v flipped, so both domains share
//! the same handedness.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::grid::SpatialGrid;

pub const DEFAULT_CELL_SIZE_M: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {index}: {message}")]
    Malformed { index: usize, message: String },
    #[error("record {index}: object '{id}' at ({x}, {y}) lies outside the region")]
    OutOfRegion { index: usize, id: String, x: f64, y: f64 },
    #[error("record {index}: duplicate id '{id}'")]
    DuplicateId { index: usize, id: String },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("label '{0}' has no entry in the label map")]
    UnmappedLabel(String),
    #[error("invalid match parameters: {0}")]
    InvalidParams(String),
}

/// Object class name. Compared by exact string equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(name: impl AsRef<str>) -> Result<Self, ModelError> {
        let name = name.as_ref();
        if name.is_empty() {
            return Err(ModelError::Malformed {
                index: 0,
                message: "empty label".into(),
            });
        }
        Ok(Self(Arc::from(name)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Label {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, ModelError> {
        Label::new(s)
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.0.to_string()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub id: String,
    pub label: Label,
    pub pos: Point2,
}

impl LabeledPoint {
    pub fn new(id: impl Into<String>, label: Label, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            label,
            pos: Point2::new(x, y),
        }
    }
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    #[serde(with = "xy_array")]
    pub min: Point2,
    #[serde(with = "xy_array")]
    pub max: Point2,
}

impl Rect {
    pub const fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn from_size(width: f64, height: f64) -> Self {
        Self::new(Point2::new(0.0, 0.0), Point2::new(width, height))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Grow by `dx` on the left/right and `dy` on the bottom/top.
    pub fn expand(&self, dx: f64, dy: f64) -> Rect {
        Rect::new(
            Point2::new(self.min.x - dx, self.min.y - dy),
            Point2::new(self.max.x + dx, self.max.y + dy),
        )
    }

    pub fn translate(&self, t: Point2) -> Rect {
        Rect::new(self.min + t, self.max + t)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(ModelError::InvalidRegion("non-finite bounds".into()));
        }
        if self.min.x > self.max.x || self.min.y > self.max.y {
            return Err(ModelError::InvalidRegion(format!(
                "min ({}, {}) exceeds max ({}, {})",
                self.min.x, self.min.y, self.max.x, self.max.y
            )));
        }
        Ok(())
    }

    fn bounding(points: impl Iterator<Item = Point2>) -> Option<Rect> {
        points.fold(None, |acc, p| {
            Some(match acc {
                None => Rect::new(p, p),
                Some(r) => Rect::new(
                    Point2::new(r.min.x.min(p.x), r.min.y.min(p.y)),
                    Point2::new(r.max.x.max(p.x), r.max.y.max(p.y)),
                ),
            })
        })
    }
}

mod xy_array {
    use super::Point2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Point2, s: S) -> Result<S::Ok, S::Error> {
        [p.x, p.y].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Point2, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Point2::new(x, y))
    }
}

/// Region restricting where a solved origin may lie.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorRegion {
    Rect(Rect),
    Disc { center: Point2, radius: f64 },
}

impl PriorRegion {
    pub fn contains(&self, p: Point2) -> bool {
        match *self {
            PriorRegion::Rect(r) => r.contains(p),
            PriorRegion::Disc { center, radius } => (p - center).norm_sq() <= radius * radius,
        }
    }

    fn bounds(&self) -> Rect {
        match *self {
            PriorRegion::Rect(r) => r,
            PriorRegion::Disc { center, radius } => Rect::new(
                Point2::new(center.x - radius, center.y - radius),
                Point2::new(center.x + radius, center.y + radius),
            ),
        }
    }

    pub fn intersects(&self, region: &Rect) -> bool {
        let b = self.bounds();
        b.min.x <= region.max.x
            && b.max.x >= region.min.x
            && b.min.y <= region.max.y
            && b.max.y >= region.min.y
    }
}

/// Objects extracted from one image, in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<LabeledPoint>,
    pub width_px: f64,
    pub height_px: f64,
}

impl Scene {
    pub fn new(objects: Vec<LabeledPoint>, width_px: f64, height_px: f64) -> Result<Self, ModelError> {
        if !(width_px > 0.0 && height_px > 0.0 && width_px.is_finite() && height_px.is_finite()) {
            return Err(ModelError::InvalidRegion(format!(
                "image size {width_px}x{height_px}"
            )));
        }
        let frame = Rect::from_size(width_px, height_px);
        for (index, o) in objects.iter().enumerate() {
            if !frame.contains(o.pos) {
                return Err(ModelError::OutOfRegion {
                    index,
                    id: o.id.clone(),
                    x: o.pos.x,
                    y: o.pos.y,
                });
            }
        }
        Ok(Self {
            objects,
            width_px,
            height_px,
        })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.width_px / 2.0, self.height_px / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.width_px.hypot(self.height_px)
    }

    /// Pixel position relative to the image center, v flipped to point up.
    pub fn centered(&self, p: Point2) -> Point2 {
        Point2::new(p.x - self.width_px / 2.0, self.height_px / 2.0 - p.y)
    }

    /// Inverse of [`Scene::centered`].
    pub fn uncentered(&self, q: Point2) -> Point2 {
        Point2::new(q.x + self.width_px / 2.0, self.height_px / 2.0 - q.y)
    }
}

/// Ground truth attached to simulated scene files. The matcher never sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub x: f64,
    pub y: f64,
    pub alt: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFileImage {
    w: u32,
    h: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFileObject {
    label: Label,
    u: f64,
    v: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    image: SceneFileImage,
    objects: Vec<SceneFileObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Truth>,
}

/// Parse a scene file. The truth record is returned separately.
pub fn load_scene(bytes: &[u8]) -> Result<(Scene, Option<Truth>), ModelError> {
    let file: SceneFile = serde_json::from_slice(bytes)?;
    let objects = file
        .objects
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            if !(o.u.is_finite() && o.v.is_finite()) {
                return Err(ModelError::Malformed {
                    index: i,
                    message: "non-finite coordinate".into(),
                });
            }
            Ok(LabeledPoint::new(i.to_string(), o.label, o.u, o.v))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scene = Scene::new(objects, f64::from(file.image.w), f64::from(file.image.h))?;
    Ok((scene, file.truth))
}

pub fn save_scene(scene: &Scene, truth: Option<Truth>) -> Result<String, ModelError> {
    let file = SceneFile {
        image: SceneFileImage {
            w: scene.width_px.round() as u32,
            h: scene.height_px.round() as u32,
        },
        objects: scene
            .objects
            .iter()
            .map(|o| SceneFileObject {
                label: o.label.clone(),
                u: o.pos.x,
                v: o.pos.y,
            })
            .collect(),
        truth,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Labeled map objects in meters, indexed by a uniform grid.
#[derive(Debug, Clone)]
pub struct MapDatabase {
    objects: Vec<LabeledPoint>,
    region: Rect,
    grid: SpatialGrid,
}

impl MapDatabase {
    /// Build a database. Without an explicit region the bounding box of the
    /// objects is used.
    pub fn new(objects: Vec<LabeledPoint>, region: Option<Rect>) -> Result<Self, ModelError> {
        Self::with_cell_size(objects, region, DEFAULT_CELL_SIZE_M)
    }

    pub fn with_cell_size(
        objects: Vec<LabeledPoint>,
        region: Option<Rect>,
        cell_size: f64,
    ) -> Result<Self, ModelError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(ModelError::InvalidRegion(format!("cell size {cell_size}")));
        }
        let mut ids = HashSet::with_capacity(objects.len());
        for (index, o) in objects.iter().enumerate() {
            if !o.pos.is_finite() {
                return Err(ModelError::Malformed {
                    index,
                    message: "non-finite coordinate".into(),
                });
            }
            if !ids.insert(o.id.as_str()) {
                return Err(ModelError::DuplicateId {
                    index,
                    id: o.id.clone(),
                });
            }
        }
        let region = match region {
            Some(r) => r,
            None => Rect::bounding(objects.iter().map(|o| o.pos))
                .unwrap_or_else(|| Rect::new(Point2::default(), Point2::default())),
        };
        region.validate()?;
        if let Some((index, o)) = objects.iter().enumerate().find(|(_, o)| !region.contains(o.pos)) {
            return Err(ModelError::OutOfRegion {
                index,
                id: o.id.clone(),
                x: o.pos.x,
                y: o.pos.y,
            });
        }
        let points: Vec<Point2> = objects.iter().map(|o| o.pos).collect();
        let grid = SpatialGrid::build(&points, region, cell_size);
        Ok(Self {
            objects,
            region,
            grid,
        })
    }

    pub fn objects(&self) -> &[LabeledPoint] {
        &self.objects
    }

    pub fn region(&self) -> Rect {
        self.region
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Same objects and region shifted by `t`.
    pub fn translated(&self, t: Point2) -> MapDatabase {
        let objects = self
            .objects
            .iter()
            .map(|o| LabeledPoint {
                pos: o.pos + t,
                ..o.clone()
            })
            .collect();
        MapDatabase::with_cell_size(objects, Some(self.region.translate(t)), self.grid.cell_size())
            .expect("translation preserves validity")
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let file = MapFileOut {
            region: self.region,
            objects: self
                .objects
                .iter()
                .map(|o| MapFileObject {
                    id: o.id.clone(),
                    label: o.label.clone(),
                    x: o.pos.x,
                    y: o.pos.y,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFileObject {
    id: String,
    label: Label,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct MapFileOut {
    region: Rect,
    objects: Vec<MapFileObject>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFileIn {
    #[serde(default)]
    region: Option<Rect>,
    objects: Vec<serde_json::Value>,
}

/// Parse a map file and build its spatial index.
pub fn load_database(bytes: &[u8]) -> Result<MapDatabase, ModelError> {
    load_database_with_cell_size(bytes, DEFAULT_CELL_SIZE_M)
}

pub fn load_database_with_cell_size(bytes: &[u8], cell_size: f64) -> Result<MapDatabase, ModelError> {
    let file: MapFileIn = serde_json::from_slice(bytes)?;
    let objects = file
        .objects
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            let o: MapFileObject = serde_json::from_value(v).map_err(|e| ModelError::Malformed {
                index,
                message: e.to_string(),
            })?;
            Ok(LabeledPoint::new(o.id, o.label, o.x, o.y))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    MapDatabase::with_cell_size(objects, file.region, cell_size)
}

/// Label coarsening map. Unmapped labels pass through unless `strict`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelMap {
    pub map: BTreeMap<Label, Label>,
    pub strict: bool,
}

impl LabelMap {
    pub fn new(pairs: impl IntoIterator<Item = (Label, Label)>, strict: bool) -> Self {
        Self {
            map: pairs.into_iter().collect(),
            strict,
        }
    }

    /// Map every label in `from` onto a single `to` label.
    pub fn collapse_to(to: Label, from: impl IntoIterator<Item = Label>) -> Self {
        Self::new(from.into_iter().map(|l| (l, to.clone())), false)
    }

    pub fn apply(&self, label: &Label) -> Result<Label, ModelError> {
        match self.map.get(label) {
            Some(l) => Ok(l.clone()),
            None if self.strict => Err(ModelError::UnmappedLabel(label.to_string())),
            None => Ok(label.clone()),
        }
    }
}

/// Replace object labels through a [`LabelMap`], leaving geometry untouched.
pub trait CoarsenLabels: Sized {
    fn coarsen_labels(&self, map: &LabelMap) -> Result<Self, ModelError>;
}

fn relabel(objects: &[LabeledPoint], map: &LabelMap) -> Result<Vec<LabeledPoint>, ModelError> {
    objects
        .iter()
        .map(|o| {
            Ok(LabeledPoint {
                label: map.apply(&o.label)?,
                ..o.clone()
            })
        })
        .collect()
}

impl CoarsenLabels for Scene {
    fn coarsen_labels(&self, map: &LabelMap) -> Result<Self, ModelError> {
        Ok(Scene {
            objects: relabel(&self.objects, map)?,
            ..self.clone()
        })
    }
}

impl CoarsenLabels for MapDatabase {
    fn coarsen_labels(&self, map: &LabelMap) -> Result<Self, ModelError> {
        Ok(MapDatabase {
            objects: relabel(&self.objects, map)?,
            region: self.region,
            grid: self.grid.clone(),
        })
    }
}

/// How the winning hypothesis is chosen among those reaching `n_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Scan in enumeration order and replace the incumbent when
    /// `n >= n_best && score < score_best`.
    Faithful,
    /// Most matches first, then lowest score, then lowest anchor indices.
    #[default]
    Lexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    Exhaustive,
    Sampled { max_hypotheses: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchParams {
    pub n_min: usize,
    /// Tolerance on the anchor-relative radius ratio (dimensionless).
    pub delta_r: f64,
    /// Tolerance on the anchor-relative angle (radians).
    pub delta_theta: f64,
    pub prior_region: Option<PriorRegion>,
    pub selection_mode: SelectionMode,
    pub search_mode: SearchMode,
    pub top_k: usize,
    pub label_map: Option<LabelMap>,
    /// Enforce one-to-one image/database matches by greedy assignment.
    pub injective: bool,
    /// Solved origins may lie outside the database region by this fraction
    /// of the hypothesis' ground footprint.
    pub region_margin_frac: f64,
    /// Candidates closer than this (meters) are merged in ranked output.
    pub merge_radius_m: f64,
    /// Record best-so-far updates in the outcome.
    pub trace: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            n_min: 6,
            delta_r: 0.2,
            delta_theta: 0.2,
            prior_region: None,
            selection_mode: SelectionMode::Lexicographic,
            search_mode: SearchMode::Exhaustive,
            top_k: 1,
            label_map: None,
            injective: false,
            region_margin_frac: 0.2,
            merge_radius_m: 5.0,
            trace: false,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::InvalidParams(m));
        if self.n_min < 3 {
            return fail(format!("n_min must be at least 3, got {}", self.n_min));
        }
        if !(self.delta_r > 0.0 && self.delta_r.is_finite()) {
            return fail(format!("delta_r must be positive, got {}", self.delta_r));
        }
        if !(self.delta_theta > 0.0 && self.delta_theta < std::f64::consts::PI) {
            return fail(format!("delta_theta must lie in (0, pi), got {}", self.delta_theta));
        }
        if self.top_k < 1 {
            return fail("top_k must be at least 1".into());
        }
        if !(self.region_margin_frac >= 0.0 && self.region_margin_frac.is_finite()) {
            return fail(format!("region margin {}", self.region_margin_frac));
        }
        if !(self.merge_radius_m >= 0.0 && self.merge_radius_m.is_finite()) {
            return fail(format!("merge radius {}", self.merge_radius_m));
        }
        if let Some(PriorRegion::Disc { radius, .. }) = self.prior_region {
            if !(radius >= 0.0 && radius.is_finite()) {
                return fail(format!("prior radius {radius}"));
            }
        }
        if let SearchMode::Sampled { max_hypotheses: 0, .. } = self.search_mode {
            return fail("sampled search needs max_hypotheses > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchStatus {
    Accepted,
    Rejected,
}

/// One ranked position candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub position: Point2,
    pub n_matched: usize,
    pub score: f64,
    /// Meters per pixel implied by the hypothesis.
    pub scale: f64,
    /// Image anchors `(i, j)` and database anchors `(I, J)`.
    pub anchors: [usize; 4],
}

/// A fully evaluated hypothesis with its consensus set.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub anchor_image: (usize, usize),
    pub anchor_db: (usize, usize),
    pub origin: Point2,
    pub anchor_radius: f64,
    /// `(image index, database index, e_k)` for each non-anchor match.
    pub matches: Vec<(usize, usize, f64)>,
    pub n_matched: usize,
}

impl Hypothesis {
    pub fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.matches.iter().map(|m| m.2)
    }
}

/// Work counters for one matcher invocation. All are deterministic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchStats {
    /// Label-compatible anchor correspondences considered.
    pub hypotheses: u64,
    /// Correspondences with no bounded origin.
    pub degenerate: u64,
    /// Origins outside the database region plus margin.
    pub pruned_region: u64,
    /// Origins outside the prior region.
    pub pruned_prior: u64,
    /// Hypotheses that entered consensus counting.
    pub evaluated: u64,
    /// Evaluations cut short because they could no longer win.
    pub early_exits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub hypothesis: u64,
    pub n_matched: usize,
    pub score: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub status: MatchStatus,
    pub position: Option<Point2>,
    pub n_matched: usize,
    pub score: Option<f64>,
    pub scale: Option<f64>,
    pub candidates: Vec<Candidate>,
    pub best: Option<Hypothesis>,
    pub stats: MatchStats,
    pub trace: Vec<TraceRecord>,
}

impl MatchOutcome {
    pub fn rejected(stats: MatchStats) -> Self {
        Self {
            status: MatchStatus::Rejected,
            position: None,
            n_matched: 0,
            score: None,
            scale: None,
            candidates: Vec::new(),
            best: None,
            stats,
            trace: Vec::new(),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == MatchStatus::Accepted
    }

    /// Compare the fix and candidates, ignoring work counters and traces.
    pub fn same_fix(&self, other: &MatchOutcome) -> bool {
        self.status == other.status
            && self.position == other.position
            && self.n_matched == other.n_matched
            && self.score == other.score
            && self.scale == other.scale
            && self.candidates == other.candidates
    }
}
