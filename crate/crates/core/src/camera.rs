//! Synthetic map databases and pinhole projection of map objects into
//! simulated aerial images.
//!
//! World frame: x east, y north, z up. Camera frame: x along image u
//! (right), y along image v (down), z along the optical axis. A level
//! nadir camera with zero yaw therefore has its x axis east, y axis south
//! and z axis down.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::model::{Label, LabeledPoint, MapDatabase, Rect, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width_px: f64,
    pub height_px: f64,
    /// Horizontal field of view, radians.
    pub hfov: f64,
}

impl CameraModel {
    pub fn new(width_px: f64, height_px: f64, hfov: f64) -> Self {
        assert!(hfov > 0.0 && hfov < std::f64::consts::PI, "hfov out of range");
        assert!(width_px > 0.0 && height_px > 0.0, "image size must be positive");
        Self { width_px, height_px, hfov }
    }

    pub fn from_hfov_deg(width_px: f64, height_px: f64, hfov_deg: f64) -> Self {
        Self::new(width_px, height_px, hfov_deg.to_radians())
    }

    /// Focal length in pixels.
    pub fn f_px(&self) -> f64 {
        (self.width_px / 2.0) / (self.hfov / 2.0).tan()
    }

    pub fn tan_half_vfov(&self) -> f64 {
        (self.hfov / 2.0).tan() * self.height_px / self.width_px
    }

    /// Half-extents (east, north) of the nadir ground footprint at `alt`.
    pub fn footprint_half_extents(&self, alt: f64) -> (f64, f64) {
        (alt * (self.hfov / 2.0).tan(), alt * self.tan_half_vfov())
    }

    pub fn principal_point(&self) -> Point2 {
        Point2::new(self.width_px / 2.0, self.height_px / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TruePose {
    pub x: f64,
    pub y: f64,
    pub alt: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl TruePose {
    pub fn nadir(x: f64, y: f64, alt: f64) -> Self {
        Self { x, y, alt, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Attitude error std applied to roll and pitch, radians.
    pub sigma_att: f64,
    /// Pixel error std applied to u and v, pixels.
    pub sigma_px: f64,
    pub seed: u64,
}

impl NoiseModel {
    /// Draw `(roll, pitch)` errors.
    pub fn sample_attitude<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let n = Normal::new(0.0, self.sigma_att).expect("sigma_att must be finite and >= 0");
        (n.sample(rng), n.sample(rng))
    }
}

/// Weighted label mix for synthetic databases.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    entries: Vec<(Label, f64)>,
}

impl LabelDistribution {
    pub fn single(label: Label) -> Self {
        Self { entries: vec![(label, 1.0)] }
    }

    /// `None` if empty or any weight is negative or all are zero.
    pub fn weighted(entries: Vec<(Label, f64)>) -> Option<Self> {
        let ok = !entries.is_empty()
            && entries.iter().all(|(_, w)| *w >= 0.0 && w.is_finite())
            && entries.iter().any(|(_, w)| *w > 0.0);
        ok.then_some(Self { entries })
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.entries.iter().map(|(l, _)| l)
    }
}

/// Objects uniformly distributed over `region`, labels drawn from `labels`.
pub fn synth_database(region: Rect, n_objects: usize, labels: &LabelDistribution, seed: u64) -> MapDatabase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = WeightedIndex::new(labels.entries.iter().map(|(_, w)| *w)).expect("validated weights");
    let objects = (0..n_objects)
        .map(|i| {
            let x = rng.random_range(region.min.x..=region.max.x);
            let y = rng.random_range(region.min.y..=region.max.y);
            let label = labels.entries[pick.sample(&mut rng)].0.clone();
            LabeledPoint::new(format!("o{i}"), label, x, y)
        })
        .collect();
    MapDatabase::new(objects, Some(region)).expect("synthetic objects lie inside their region")
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Camera-to-world rotation: nadir mount, then roll, then pitch, then yaw.
fn camera_to_world(pose: &TruePose) -> Mat3 {
    // Columns are the camera axes in world coordinates.
    const NADIR: Mat3 = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let att = mat_mul(&rot_z(pose.yaw), &mat_mul(&rot_y(pose.pitch), &rot_x(pose.roll)));
    mat_mul(&att, &NADIR)
}

/// Project a world point; `None` when it is behind the camera.
pub fn project_point(ground: Point2, pose: &TruePose, cam: &CameraModel) -> Option<Point2> {
    let r = camera_to_world(pose);
    let d = [ground.x - pose.x, ground.y - pose.y, -pose.alt];
    // camera = R^T d
    let xc = r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2];
    let yc = r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2];
    let zc = r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2];
    if zc <= 0.0 {
        return None;
    }
    let f = cam.f_px();
    let pp = cam.principal_point();
    Some(Point2::new(pp.x + f * xc / zc, pp.y + f * yc / zc))
}

/// Ground point seen at pixel `px` by an ideal level nadir camera.
pub fn unproject_nadir(px: Point2, pose: &TruePose, cam: &CameraModel) -> Point2 {
    let k = pose.alt / cam.f_px();
    let pp = cam.principal_point();
    Point2::new(pose.x + (px.x - pp.x) * k, pose.y - (px.y - pp.y) * k)
}

/// Render the database into a simulated image. Pixel noise is drawn for
/// every database object in order, so the draw sequence does not depend on
/// which objects end up in view.
pub fn project_scene(db: &MapDatabase, pose: &TruePose, cam: &CameraModel, noise: &NoiseModel) -> Scene {
    assert!(pose.alt > 0.0, "altitude must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let px_noise = Normal::new(0.0, noise.sigma_px).expect("sigma_px must be finite and >= 0");
    let frame = Rect::from_size(cam.width_px, cam.height_px);
    let mut objects = Vec::new();
    for o in db.objects() {
        let du = px_noise.sample(&mut rng);
        let dv = px_noise.sample(&mut rng);
        let Some(p) = project_point(o.pos, pose, cam) else { continue };
        let p = Point2::new(p.x + du, p.y + dv);
        if frame.contains(p) {
            objects.push(LabeledPoint {
                id: o.id.clone(),
                label: o.label.clone(),
                pos: p,
            });
        }
    }
    Scene::new(objects, cam.width_px, cam.height_px).expect("projected objects lie inside the frame")
}
