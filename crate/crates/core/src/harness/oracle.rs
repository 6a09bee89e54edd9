//! Brute-force reference matcher for small instances.
//!
//! Works directly with similarity transforms: each image-pair to
//! database-pair correspondence defines `X = q * x + t` (complex `q`), the
//! image center maps to `t`, and every voter is scored against every
//! database object with plain `atan2` bearings. No grid, no early exit, no
//! origin solver.

use thiserror::Error;

use crate::geometry::{wrap_angle, Point2, EPS_RADIUS_FRACTION};
use crate::model::{
    Candidate, CoarsenLabels, MapDatabase, MatchOutcome, MatchParams, MatchStats, MatchStatus,
    ModelError, Scene, SelectionMode,
};

pub const MAX_SCENE_OBJECTS: usize = 8;
pub const MAX_DB_OBJECTS: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for brute force: {scene} scene / {db} database objects")]
    TooLarge { scene: usize, db: usize },
    #[error(transparent)]
    Config(#[from] ModelError),
}

#[derive(Clone, Copy)]
struct Entry {
    anchors: [usize; 4],
    origin: Point2,
    scale: f64,
    n: usize,
    score: f64,
}

fn better(a: &Entry, b: &Entry) -> bool {
    if a.n != b.n {
        return a.n > b.n;
    }
    if a.score != b.score {
        return a.score < b.score;
    }
    a.anchors < b.anchors
}

fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    var.sqrt()
}

fn bearing(p: Point2) -> f64 {
    p.y.atan2(p.x)
}

pub fn brute_force_oracle(scene: &Scene, db: &MapDatabase, params: &MatchParams) -> Result<MatchOutcome, OracleError> {
    if scene.objects.len() > MAX_SCENE_OBJECTS || db.len() > MAX_DB_OBJECTS {
        return Err(OracleError::TooLarge {
            scene: scene.objects.len(),
            db: db.len(),
        });
    }
    params.validate()?;
    let (scene, db) = match &params.label_map {
        Some(m) => (scene.coarsen_labels(m)?, db.coarsen_labels(m)?),
        None => (scene.clone(), db.clone()),
    };

    let w = scene.width_px;
    let h = scene.height_px;
    let img: Vec<Point2> = scene
        .objects
        .iter()
        .map(|o| Point2::new(o.pos.x - w / 2.0, h / 2.0 - o.pos.y))
        .collect();
    let map: Vec<Point2> = db.objects().iter().map(|o| o.pos).collect();
    let img_label = |k: usize| &scene.objects[k].label;
    let map_label = |k: usize| &db.objects()[k].label;
    let eps_img = EPS_RADIUS_FRACTION * w.hypot(h);
    let eps_map = EPS_RADIUS_FRACTION * db.region().diagonal();
    let region = db.region();

    let mut all: Vec<Entry> = Vec::new();
    let mut best: Option<Entry> = None;
    let mut history: Vec<Entry> = Vec::new();

    for i in 0..img.len() {
        for j in i + 1..img.len() {
            let (r_i, r_j) = (img[i].norm(), img[j].norm());
            if r_i < eps_img || r_j < eps_img {
                continue;
            }
            let d_img = img[j] - img[i];
            if d_img.norm_sq() < 1e-12 * r_i * r_i {
                continue;
            }
            for big_i in 0..map.len() {
                if map_label(big_i) != img_label(i) {
                    continue;
                }
                for big_j in 0..map.len() {
                    if big_j == big_i || map_label(big_j) != img_label(j) || map[big_i] == map[big_j] {
                        continue;
                    }
                    // Similarity taking img[i] -> map[I], img[j] -> map[J].
                    let q = (map[big_j] - map[big_i]).cdiv(d_img);
                    let origin = map[big_i] - q.cmul(img[i]);
                    let big_r_i = map[big_i].distance(origin);
                    if big_r_i < eps_map {
                        continue;
                    }
                    let scale = q.norm();
                    let margin = params.region_margin_frac * scale;
                    if !region.expand(margin * w, margin * h).contains(origin) {
                        continue;
                    }
                    if let Some(prior) = &params.prior_region {
                        if !prior.contains(origin) {
                            continue;
                        }
                    }

                    let theta_i = bearing(img[i]);
                    let big_theta_i = bearing(map[big_i] - origin);
                    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
                    let mut residuals = Vec::new();
                    for k in 0..img.len() {
                        if k == i || k == j {
                            continue;
                        }
                        let r_k = img[k].norm();
                        let mut best_k: Option<(f64, usize)> = None;
                        for big_k in 0..map.len() {
                            if big_k == big_i || big_k == big_j || map_label(big_k) != img_label(k) {
                                continue;
                            }
                            let rel = map[big_k] - origin;
                            let big_r_k = rel.norm();
                            let ratio_err = (r_k / r_i - big_r_k / big_r_i).abs();
                            let angle_err = if r_k < eps_img || big_r_k < eps_map {
                                0.0
                            } else {
                                let dtheta = wrap_angle(theta_i - bearing(img[k]));
                                let big_dtheta = wrap_angle(big_theta_i - bearing(rel));
                                wrap_angle(dtheta - big_dtheta).abs()
                            };
                            if ratio_err < params.delta_r && angle_err < params.delta_theta {
                                let e = ratio_err + angle_err;
                                cands.push((e, k, big_k));
                                if best_k.is_none_or(|(be, bk)| e < be || (e == be && big_k < bk)) {
                                    best_k = Some((e, big_k));
                                }
                            }
                        }
                        if let Some((e, _)) = best_k {
                            residuals.push(e);
                        }
                    }
                    if params.injective {
                        residuals.clear();
                        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
                        let mut used_img = vec![false; img.len()];
                        let mut used_map = vec![false; map.len()];
                        let mut picked = Vec::new();
                        for (e, k, big_k) in cands {
                            if !used_img[k] && !used_map[big_k] {
                                used_img[k] = true;
                                used_map[big_k] = true;
                                picked.push((k, e));
                            }
                        }
                        picked.sort_by_key(|p| p.0);
                        residuals.extend(picked.into_iter().map(|p| p.1));
                    }
                    let n = 2 + residuals.len();
                    if n < params.n_min {
                        continue;
                    }
                    let entry = Entry {
                        anchors: [i, j, big_i, big_j],
                        origin,
                        scale,
                        n,
                        score: std_dev(&residuals),
                    };
                    all.push(entry);
                    let replace = match (params.selection_mode, &best) {
                        (_, None) => true,
                        (SelectionMode::Lexicographic, Some(b)) => better(&entry, b),
                        (SelectionMode::Faithful, Some(b)) => entry.n >= b.n && entry.score < b.score,
                    };
                    if replace {
                        best = Some(entry);
                        history.push(entry);
                    }
                }
            }
        }
    }

    let Some(win) = best else {
        return Ok(MatchOutcome::rejected(MatchStats::default()));
    };
    let ranked: Vec<Entry> = match params.selection_mode {
        SelectionMode::Lexicographic => {
            let mut v = all;
            v.sort_by(|a, b| {
                if better(a, b) {
                    std::cmp::Ordering::Less
                } else if better(b, a) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            });
            v
        }
        SelectionMode::Faithful => history.into_iter().rev().collect(),
    };
    let mut candidates: Vec<Candidate> = Vec::new();
    for e in ranked {
        if candidates.len() == params.top_k {
            break;
        }
        if candidates.iter().all(|c| c.position.distance(e.origin) > params.merge_radius_m) {
            candidates.push(Candidate {
                position: e.origin,
                n_matched: e.n,
                score: e.score,
                scale: e.scale,
                anchors: e.anchors,
            });
        }
    }
    Ok(MatchOutcome {
        status: MatchStatus::Accepted,
        position: Some(win.origin),
        n_matched: win.n,
        score: Some(win.score),
        scale: Some(win.scale),
        candidates,
        best: None,
        stats: MatchStats::default(),
        trace: Vec::new(),
    })
}
