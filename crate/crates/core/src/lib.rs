//! Map-based aerial localization by matching labeled point patterns.
//!
//! An aerial image is reduced to labeled dots (building, intersection, ...)
//! and located in a map database of labeled dots by a consensus search that
//! is invariant to rotation and scale. The crate also carries the camera
//! simulator and the Monte Carlo harness used to evaluate it.

pub mod camera;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod matcher;
pub mod model;

pub use camera::{project_scene, synth_database, CameraModel, LabelDistribution, NoiseModel, TruePose};
pub use geometry::{solve_origin, to_polar, wrap_angle, OriginSolution, Point2, PolarCoord};
pub use matcher::{estimate_height, match_scene, match_with_prior, rank_candidates, MatchError};
pub use model::{
    load_database, load_scene, save_scene, Candidate, CoarsenLabels, Label, LabelMap, LabeledPoint,
    MapDatabase, MatchOutcome, MatchParams, MatchStats, MatchStatus, PriorRegion, Rect, Scene, SearchMode,
    SelectionMode,
};
