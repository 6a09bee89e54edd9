#![allow(dead_code)]

use labelnav::{Label, LabeledPoint, MapDatabase, MatchParams, Point2, Rect, Scene, SelectionMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IMG_W: f64 = 640.0;
pub const IMG_H: f64 = 480.0;

pub fn label(s: &str) -> Label {
    Label::new(s).unwrap()
}

/// Image pixel of a map point under `X = q * x + origin`, `x` centered with y up.
pub fn to_pixel(map: Point2, origin: Point2, q: Point2) -> Point2 {
    let c = (map - origin).cdiv(q);
    Point2::new(c.x + IMG_W / 2.0, IMG_H / 2.0 - c.y)
}

pub struct Instance {
    pub scene: Scene,
    pub db: MapDatabase,
    pub params: MatchParams,
    pub origin: Point2,
    /// Noise-free views produce score ties at rounding level.
    pub exact: bool,
}

/// Small random instance: a similarity view of part of a random database,
/// with pixel jitter and a few distractors.
pub fn small_instance(seed: u64, max_scene: usize, max_db: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = [label("a"), label("b")];
    let n_labels = rng.random_range(1..=2);
    let region = Rect::from_size(100.0, 80.0);
    let n_db = rng.random_range(5..=max_db);
    let db_pts: Vec<LabeledPoint> = (0..n_db)
        .map(|k| {
            LabeledPoint::new(
                format!("d{k}"),
                labels[rng.random_range(0..n_labels)].clone(),
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..80.0),
            )
        })
        .collect();
    let db = MapDatabase::new(db_pts.clone(), Some(region)).unwrap();

    let origin = Point2::new(rng.random_range(20.0..80.0), rng.random_range(15.0..65.0));
    let scale = rng.random_range(0.1..0.25);
    let rot = rng.random_range(-3.1..3.1f64);
    let q = Point2::new(scale * rot.cos(), scale * rot.sin());
    let jitter = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.3..4.0) };

    let mut objects = Vec::new();
    for p in &db_pts {
        let px = to_pixel(p.pos, origin, q);
        let px = Point2::new(px.x + rng.random_range(-1.0..=1.0) * jitter, px.y + rng.random_range(-1.0..=1.0) * jitter);
        if px.x > 0.0 && px.x < IMG_W && px.y > 0.0 && px.y < IMG_H && rng.random_bool(0.85) {
            objects.push(LabeledPoint::new(format!("s{}", objects.len()), p.label.clone(), px.x, px.y));
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        objects.push(LabeledPoint::new(
            format!("s{}", objects.len()),
            labels[rng.random_range(0..n_labels)].clone(),
            rng.random_range(1.0..IMG_W - 1.0),
            rng.random_range(1.0..IMG_H - 1.0),
        ));
    }
    while objects.len() > max_scene {
        let k = rng.random_range(0..objects.len());
        objects.remove(k);
    }
    let scene = Scene::new(objects, IMG_W, IMG_H).unwrap();

    let params = MatchParams {
        n_min: rng.random_range(3..=5),
        delta_r: rng.random_range(0.02..0.3),
        delta_theta: rng.random_range(0.02..0.3),
        selection_mode: if rng.random_bool(0.3) { SelectionMode::Faithful } else { SelectionMode::Lexicographic },
        injective: rng.random_bool(0.3),
        top_k: rng.random_range(1..=3),
        ..MatchParams::default()
    };
    Instance { scene, db, params, origin, exact: jitter == 0.0 }
}

pub struct Fixture {
    pub scene: Scene,
    pub db: MapDatabase,
    pub truth: Point2,
    /// Meters per pixel of the generating view.
    pub scale: f64,
}

/// Noiseless view of a random database. Visible objects lie within a disc
/// about the image center, so rotated or rescaled copies stay in frame.
pub fn disc_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let region = Rect::from_size(150.0, 100.0);
    let two_labels = rng.random_bool(0.5);
    let pts: Vec<LabeledPoint> = (0..60)
        .map(|k| {
            let l = if two_labels && rng.random_bool(0.4) { "b" } else { "a" };
            LabeledPoint::new(format!("d{k}"), label(l), rng.random_range(0.0..150.0), rng.random_range(0.0..100.0))
        })
        .collect();
    let db = MapDatabase::new(pts.clone(), Some(region)).unwrap();
    let scale = 0.1;
    loop {
        let truth = Point2::new(rng.random_range(25.0..125.0), rng.random_range(25.0..75.0));
        let rot = rng.random_range(-3.1..3.1f64);
        let q = Point2::new(scale * rot.cos(), scale * rot.sin());
        let center = Point2::new(IMG_W / 2.0, IMG_H / 2.0);
        let objects: Vec<LabeledPoint> = pts
            .iter()
            .filter_map(|p| {
                let px = to_pixel(p.pos, truth, q);
                (px.distance(center) < 230.0).then(|| LabeledPoint::new(p.id.clone(), p.label.clone(), px.x, px.y))
            })
            .collect();
        if objects.len() >= 7 {
            let scene = Scene::new(objects, IMG_W, IMG_H).unwrap();
            return Fixture { scene, db, truth, scale };
        }
    }
}

/// Rotate every object about the image center by `phi` (image y up).
pub fn rotate_scene(scene: &Scene, phi: f64) -> Scene {
    let c = scene.center();
    let objects = scene
        .objects
        .iter()
        .map(|o| {
            let q = scene.centered(o.pos).rotate_about(Point2::new(0.0, 0.0), phi);
            let p = scene.uncentered(q);
            LabeledPoint::new(o.id.clone(), o.label.clone(), p.x.clamp(0.0, 2.0 * c.x), p.y.clamp(0.0, 2.0 * c.y))
        })
        .collect();
    Scene::new(objects, scene.width_px, scene.height_px).unwrap()
}

/// Scale pixel offsets from the center by `lambda`, growing the frame to match.
pub fn scale_scene(scene: &Scene, lambda: f64) -> Scene {
    let (w, h) = (scene.width_px * lambda, scene.height_px * lambda);
    let c = scene.center();
    let objects = scene
        .objects
        .iter()
        .map(|o| {
            let p = Point2::new(w / 2.0 + lambda * (o.pos.x - c.x), h / 2.0 + lambda * (o.pos.y - c.y));
            LabeledPoint::new(o.id.clone(), o.label.clone(), p.x.clamp(0.0, w), p.y.clamp(0.0, h))
        })
        .collect();
    Scene::new(objects, w, h).unwrap()
}
