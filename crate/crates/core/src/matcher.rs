//! Consensus matching of labeled image points against the map database.
//!
//! Each hypothesis pairs an unordered image anchor pair `(i, j)` with an
//! ordered, label-compatible database pair `(I, J)`. The image-side polar
//! configuration about the image center fixes the ratio `r_j / r_i` and the
//! relative angle `theta_i - theta_j`; [`OriginSolver`] places the matching
//! origin in the map. Every other image object `k` then votes: it matches a
//! database object `K` with the same label when
//!
//! ```text
//! |r_k / r_i - R_k / R_i| < delta_r   and   |wrap(dtheta_k - dTheta_k)| < delta_theta
//! ```
//!
//! and contributes the smallest `e_k = |ratio error| + |angle error|` among
//! its candidates. Hypotheses reaching `n_min` are scored by the population
//! standard deviation of their `e_k`.
//!
//! Pruning never changes the result: origins outside the database region
//! (plus a margin proportional to the implied footprint) are discarded, voters
//! only look at grid cells around their predicted position, and a hypothesis
//! stops as soon as it can no longer reach the current winner's count.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::camera::CameraModel;
use crate::grid::ClearanceMap;
use crate::geometry::{wrap_angle, OriginSolver, Point2, EPS_RADIUS_FRACTION};
use crate::model::{
    Candidate, CoarsenLabels, Hypothesis, MapDatabase, MatchOutcome, MatchParams, MatchStats,
    MatchStatus, ModelError, Rect, Scene, SearchMode, SelectionMode, TraceRecord,
};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error("prior region does not intersect the database region")]
    PriorDisjoint,
    #[error("match_with_prior needs a prior region")]
    MissingPrior,
    #[error("outcome carries no scale estimate (rejected match)")]
    MissingScale,
}

/// Image object prepared for matching.
#[derive(Debug, Clone, Copy)]
struct ImagePoint {
    /// Centered, v-up pixel position.
    p: Point2,
    r: f64,
    theta: f64,
    label: Option<u32>,
}

/// Non-anchor image object relative to a fixed anchor `i`.
#[derive(Debug, Clone, Copy)]
struct Voter {
    k: usize,
    label: u32,
    ratio: f64,
    /// `p_k / p_i` as a complex number; the predicted map offset from the
    /// origin is `(P_I - c) * a`.
    a: Point2,
    /// Too close to the image center for a bearing.
    guarded: bool,
    /// Tolerance disc radius around the predicted position, per unit `R_I`.
    reach: f64,
    /// Squared radial band per unit `R_I`, padded by a relative guard.
    band_lo2: f64,
    band_hi2: f64,
}

struct AnchorPair {
    i: usize,
    j: usize,
    r_i: f64,
    solver: OriginSolver,
    voters: Vec<Voter>,
    /// Discs covering each voter's tolerance region; voter `n` owns
    /// `pieces[cover[n]..cover[n + 1]]`.
    pieces: Vec<Piece>,
    cover: Vec<u32>,
}

/// Disc in hypothesis-relative units: the map center is
/// `origin + to_anchor * c` and the radius `rad * R_I`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    c: Point2,
    rad: f64,
}

/// Cover the set of offsets matching voter `v` (radial band and bearing
/// sector, per unit `R_I`, relative to the anchor direction) with a few
/// small discs.
fn cover_voter(v: &Voter, dr: f64, dt: f64, out: &mut Vec<Piece>) {
    let (a, b) = ((v.ratio - dr).max(0.0), v.ratio + dr);
    if v.guarded {
        out.push(Piece { c: Point2::new(0.0, 0.0), rad: b * (1.0 + 1e-9) });
        return;
    }
    let half = dt.min(std::f64::consts::PI);
    let dir = v.a * (1.0 / v.a.norm());
    let n_r = 2usize;
    let width = (b - a) / n_r as f64;
    let n_a = ((2.0 * half * b / width.max(1e-12)).ceil() as usize).clamp(1, 6);
    let h = half / n_a as f64;
    for ir in 0..n_r {
        let (lo, hi) = (a + ir as f64 * width, a + (ir + 1) as f64 * width);
        let m = 0.5 * (lo + hi);
        let rad2 = (0.5 * (hi - lo)).powi(2) + 2.0 * hi * m * (1.0 - h.cos());
        for ia in 0..n_a {
            let phi = -half + (2 * ia + 1) as f64 * h;
            let c = dir.cmul(Point2::new(m * phi.cos(), m * phi.sin()));
            out.push(Piece { c, rad: rad2.sqrt() * (1.0 + 1e-9) + 1e-12 });
        }
    }
}

struct Problem<'a> {
    db: &'a MapDatabase,
    db_pos: Vec<Point2>,
    db_label: Vec<u32>,
    groups: Vec<Vec<u32>>,
    image_labels: Vec<Option<u32>>,
    pairs: Vec<AnchorPair>,
    n_image: usize,
    eps_db: f64,
    width: f64,
    height: f64,
    /// Database region; origins are gated against it plus a margin.
    region: Rect,
    /// Per-label clearance rasters for quick certain-miss tests.
    clearance: Vec<ClearanceMap>,
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    anchors: [usize; 4],
    origin: Point2,
    scale: f64,
    n: usize,
    score: f64,
    pair_idx: usize,
}

/// Ordering used for lexicographic selection: `Less` means better.
fn rank(a: &Scored, b: &Scored) -> Ordering {
    b.n.cmp(&a.n)
        .then_with(|| a.score.total_cmp(&b.score))
        .then_with(|| a.anchors.cmp(&b.anchors))
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

impl<'a> Problem<'a> {
    fn new(scene: &Scene, db: &'a MapDatabase, params: &MatchParams) -> Self {
        let (dr, dt) = (params.delta_r, params.delta_theta);
        let mut ids: HashMap<&str, u32> = HashMap::new();
        let db_label: Vec<u32> = db
            .objects()
            .iter()
            .map(|o| {
                let next = ids.len() as u32;
                *ids.entry(o.label.as_str()).or_insert(next)
            })
            .collect();
        let mut groups = vec![Vec::new(); ids.len()];
        for (idx, &l) in db_label.iter().enumerate() {
            groups[l as usize].push(idx as u32);
        }
        let db_pos: Vec<Point2> = db.objects().iter().map(|o| o.pos).collect();
        let region = db.region();
        let clearance = groups
            .iter()
            .map(|g| {
                let pts: Vec<Point2> = g.iter().map(|&idx| db_pos[idx as usize]).collect();
                ClearanceMap::build(&pts, region, (pts.len() * 512).clamp(256, CLEARANCE_CELLS))
            })
            .collect();

        let eps_img = EPS_RADIUS_FRACTION * scene.diagonal();
        let image: Vec<ImagePoint> = scene
            .objects
            .iter()
            .map(|o| {
                let p = scene.centered(o.pos);
                ImagePoint {
                    p,
                    r: p.norm(),
                    theta: p.y.atan2(p.x),
                    label: ids.get(o.label.as_str()).copied(),
                }
            })
            .collect();

        let mut pairs = Vec::new();
        for i in 0..image.len() {
            for j in i + 1..image.len() {
                let (a, b) = (image[i], image[j]);
                if a.label.is_none() || b.label.is_none() || a.r < eps_img || b.r < eps_img {
                    continue;
                }
                let Some(solver) = OriginSolver::new(b.r / a.r, wrap_angle(a.theta - b.theta)) else {
                    continue;
                };
                let mut voters: Vec<Voter> = image
                    .iter()
                    .enumerate()
                    .filter(|&(k, o)| k != i && k != j && o.label.is_some())
                    .map(|(k, o)| {
                        let ratio = o.r / a.r;
                        let lo = (ratio - dr).max(0.0);
                        Voter {
                            k,
                            label: o.label.unwrap(),
                            ratio,
                            a: o.p.cdiv(a.p),
                            guarded: o.r < eps_img,
                            reach: dr + (ratio + dr) * dt,
                            band_lo2: lo * lo * (1.0 - 1e-9),
                            band_hi2: (ratio + dr) * (ratio + dr) * (1.0 + 1e-9),
                        }
                    })
                    .collect();
                voters.sort_by(|x, y| x.ratio.total_cmp(&y.ratio).then(x.k.cmp(&y.k)));
                let mut pieces = Vec::new();
                let mut cover = vec![0u32];
                for v in &voters {
                    cover_voter(v, dr, dt, &mut pieces);
                    cover.push(pieces.len() as u32);
                }
                pairs.push(AnchorPair { i, j, r_i: a.r, solver, voters, pieces, cover });
            }
        }

        Self {
            db,
            db_pos,
            db_label,
            groups,
            image_labels: image.iter().map(|o| o.label).collect(),
            pairs,
            n_image: image.len(),
            eps_db: EPS_RADIUS_FRACTION * db.region().diagonal(),
            width: scene.width_px,
            height: scene.height_px,
            region,
            clearance,
        }
    }
}

/// Raster size of each per-label clearance map.
const CLEARANCE_CELLS: usize = 1 << 16;

/// Per-hypothesis evaluation result.
struct Consensus {
    n: usize,
    score: f64,
}

struct Evaluator<'p, 'a> {
    problem: &'p Problem<'a>,
    params: &'p MatchParams,
    residuals: Vec<(usize, f64)>,
    values: Vec<f64>,
    cand: Vec<(f64, usize, usize)>,
    used: Vec<bool>,
    hit: Vec<bool>,
    screen_order: Vec<Vec<u16>>,
    /// `tan(delta_theta)` shrunk and grown by a relative guard band, when
    /// the tolerance is below a right angle.
    cone: Option<(f64, f64)>,
}

impl<'p, 'a> Evaluator<'p, 'a> {
    fn new(problem: &'p Problem<'a>, params: &'p MatchParams) -> Self {
        Self {
            problem,
            params,
            residuals: Vec::with_capacity(problem.n_image),
            values: Vec::with_capacity(problem.n_image),
            cand: Vec::new(),
            used: vec![false; problem.db_pos.len()],
            hit: vec![false; problem.n_image],
            screen_order: problem.pairs.iter().map(|p| (0..p.voters.len() as u16).rev().collect()).collect(),
            cone: (params.delta_theta < 1.5).then(|| {
                let t = params.delta_theta.tan();
                (t * (1.0 - 1e-9), t * (1.0 + 1e-9))
            }),
        }
    }

    /// Exact tolerance test of database object `kk` against voter `v`;
    /// returns `e_k` on a match.
    #[inline]
    fn check(&self, v: &Voter, w: &Window, h: &Frame, kk: usize) -> Option<f64> {
        let p = self.problem;
        if p.db_label[kk] != v.label || kk == h.skip.0 || kk == h.skip.1 {
            return None;
        }
        let d = p.db_pos[kk] - h.origin;
        let d2 = d.norm_sq();
        if d2 < w.r_lo2 || d2 > w.r_hi2 {
            return None;
        }
        let big_r = d2.sqrt();
        let ratio_err = (v.ratio - big_r * h.inv_radius).abs();
        if !(ratio_err < self.params.delta_r) {
            return None;
        }
        let angle_err = if v.guarded || big_r < p.eps_db {
            0.0
        } else {
            let rel = d.cmul_conj(w.offset);
            if let Some((_, hi)) = self.cone {
                if rel.x <= 0.0 || rel.y.abs() >= hi * rel.x {
                    return None;
                }
            }
            rel.y.atan2(rel.x).abs()
        };
        if !(angle_err < self.params.delta_theta) {
            return None;
        }
        Some(ratio_err + angle_err)
    }

    /// Count consensus for one hypothesis. Returns `None` if it was cut off
    /// because it can no longer reach `threshold` matches.
    ///
    /// Each voter's tolerance region is covered by a few discs; a disc is
    /// scanned only if the clearance map says it may hold an object. Voters
    /// are visited in a per-pair order that promotes the voter which last
    /// cut a hypothesis; whether a hypothesis is cut depends only on the
    /// miss count, so the order never changes results.
    fn consensus(
        &mut self,
        pair_idx: usize,
        h: &Frame,
        threshold: usize,
        mut record: Option<&mut Vec<(usize, usize, f64)>>,
    ) -> Option<Consensus> {
        let pair = &self.problem.pairs[pair_idx];
        let voters = &pair.voters;
        let total = voters.len();
        if 2 + total < threshold {
            return None;
        }
        let allowed = 2 + total - threshold.max(2);
        let eps_db = self.problem.eps_db;
        let grid = self.problem.db.grid();

        let mut misses = 0usize;
        let problem = self.problem;
        let params = self.params;
        let cone = self.cone;
        let order = &mut self.screen_order[pair_idx];
        for pos in 0..total {
            let idx = order[pos] as usize;
            let v = &voters[idx];
            let clearance = &problem.clearance[v.label as usize];
            let w = window(eps_db, v, h);
            let pieces = &pair.pieces[pair.cover[idx] as usize..pair.cover[idx + 1] as usize];
            let found = pieces.iter().any(|piece| {
                let center = h.origin + h.to_anchor.cmul(piece.c);
                let rad = h.anchor_radius * piece.rad + eps_db;
                !clearance.is_clear(center, rad) && {
                    let lo = Point2::new(center.x - rad, center.y - rad);
                    let hi = Point2::new(center.x + rad, center.y + rad);
                    grid.any_in_box(lo, hi, |kk| hits(problem, params, cone, v, &w, h, kk as usize))
                }
            });
            self.hit[idx] = found;
            if !found {
                misses += 1;
                if misses > allowed {
                    if pos > 0 {
                        order.swap(pos, 0);
                    }
                    return None;
                }
            }
        }

        // Score: minimum e_k per voter, or greedy one-to-one assignment.
        self.residuals.clear();
        let mut matched = 2usize;
        if self.params.injective {
            let mut cand = std::mem::take(&mut self.cand);
            cand.clear();
            for (idx, v) in voters.iter().enumerate() {
                if !self.hit[idx] {
                    continue;
                }
                let w = &window(eps_db, v, h);
                grid.for_each_in_box(w.lo, w.hi, |kk| {
                    if let Some(e) = self.check(v, w, h, kk as usize) {
                        cand.push((e, v.k, kk as usize));
                    }
                });
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut image_used = vec![false; self.problem.n_image];
            for &(e, k, kk) in &cand {
                if image_used[k] || self.used[kk] {
                    continue;
                }
                image_used[k] = true;
                self.used[kk] = true;
                matched += 1;
                self.residuals.push((k, e));
                if let Some(rec) = record.as_deref_mut() {
                    rec.push((k, kk, e));
                }
            }
            for &(_, _, kk) in &cand {
                self.used[kk] = false;
            }
            self.cand = cand;
        } else {
            for (idx, v) in voters.iter().enumerate() {
                if !self.hit[idx] {
                    continue;
                }
                let w = &window(eps_db, v, h);
                let mut best = (f64::INFINITY, usize::MAX);
                grid.for_each_in_box(w.lo, w.hi, |kk| {
                    let kk = kk as usize;
                    if let Some(e) = self.check(v, w, h, kk) {
                        if e < best.0 || (e == best.0 && kk < best.1) {
                            best = (e, kk);
                        }
                    }
                });
                matched += 1;
                self.residuals.push((v.k, best.0));
                if let Some(rec) = record.as_deref_mut() {
                    rec.push((v.k, best.1, best.0));
                }
            }
        }
        if matched < threshold {
            return None;
        }
        // Sum in image order so the score does not depend on voter order.
        self.residuals.sort_unstable_by_key(|r| r.0);
        self.values.clear();
        self.values.extend(self.residuals.iter().map(|r| r.1));
        Some(Consensus {
            n: matched,
            score: population_std(&self.values),
        })
    }
}

fn window(eps_db: f64, v: &Voter, h: &Frame) -> Window {
    let offset = h.to_anchor.cmul(v.a);
    let predicted = h.origin + offset;
    let bound = h.anchor_radius * v.reach + eps_db;
    let r2 = h.anchor_radius * h.anchor_radius;
    Window {
        offset,
        lo: Point2::new(predicted.x - bound, predicted.y - bound),
        hi: Point2::new(predicted.x + bound, predicted.y + bound),
        r_lo2: v.band_lo2 * r2,
        r_hi2: v.band_hi2 * r2,
    }
}

/// Same predicate as `Evaluator::check` without computing `e_k`; the
/// bearing test avoids `atan2` unless the point sits on the boundary.
#[inline]
fn hits(
    p: &Problem,
    params: &MatchParams,
    cone: Option<(f64, f64)>,
    v: &Voter,
    w: &Window,
    h: &Frame,
    kk: usize,
) -> bool {
    if p.db_label[kk] != v.label || kk == h.skip.0 || kk == h.skip.1 {
        return false;
    }
    let d = p.db_pos[kk] - h.origin;
    let d2 = d.norm_sq();
    if d2 < w.r_lo2 || d2 > w.r_hi2 {
        return false;
    }
    let big_r = d2.sqrt();
    if !((v.ratio - big_r * h.inv_radius).abs() < params.delta_r) {
        return false;
    }
    if v.guarded || big_r < p.eps_db {
        return true;
    }
    let rel = d.cmul_conj(w.offset);
    if let Some((lo, hi)) = cone {
        let ay = rel.y.abs();
        if rel.x <= 0.0 || ay >= hi * rel.x {
            return false;
        }
        if ay <= lo * rel.x {
            return true;
        }
    }
    rel.y.atan2(rel.x).abs() < params.delta_theta
}

/// Solved hypothesis geometry shared by all voters.
struct Frame {
    origin: Point2,
    to_anchor: Point2,
    anchor_radius: f64,
    inv_radius: f64,
    skip: (usize, usize),
}

/// Tolerance window of one voter under one hypothesis.
#[derive(Clone, Copy)]
struct Window {
    offset: Point2,
    lo: Point2,
    hi: Point2,
    r_lo2: f64,
    r_hi2: f64,
}


enum Gate {
    Pass(Frame),
    Degenerate,
    Region,
    Prior,
}

fn gate(problem: &Problem, params: &MatchParams, pair: &AnchorPair, big_i: usize, big_j: usize) -> Gate {
    let (pi, pj) = (problem.db_pos[big_i], problem.db_pos[big_j]);
    if pi == pj {
        return Gate::Degenerate;
    }
    let (origin, to_anchor) = pair.solver.solve_vec(pi, pj);
    let anchor_radius = to_anchor.norm_sq().sqrt();
    if !(anchor_radius >= problem.eps_db) || !origin.is_finite() {
        return Gate::Degenerate;
    }
    let scale = anchor_radius / pair.r_i;
    let m = params.region_margin_frac * scale;
    if !problem.region.expand(m * problem.width, m * problem.height).contains(origin) {
        return Gate::Region;
    }
    if let Some(prior) = &params.prior_region {
        if !prior.contains(origin) {
            return Gate::Prior;
        }
    }
    Gate::Pass(Frame {
        origin,
        to_anchor,
        anchor_radius,
        inv_radius: 1.0 / anchor_radius,
        skip: (big_i, big_j),
    })
}

struct Search<'p, 'a> {
    problem: &'p Problem<'a>,
    params: &'p MatchParams,
    eval: Evaluator<'p, 'a>,
    stats: MatchStats,
    best: Option<Scored>,
    /// Faithful-mode incumbents in order of replacement.
    history: Vec<Scored>,
    /// All qualifying hypotheses (lexicographic, top_k > 1).
    pool: Vec<Scored>,
    trace: Vec<TraceRecord>,
}

impl<'p, 'a> Search<'p, 'a> {
    fn threshold(&self) -> usize {
        let keep_all = self.params.selection_mode == SelectionMode::Lexicographic && self.params.top_k > 1;
        match self.best {
            Some(b) if !keep_all => b.n.max(self.params.n_min),
            _ => self.params.n_min,
        }
    }

    fn try_hypothesis(&mut self, pair_idx: usize, big_i: usize, big_j: usize) {
        let pair = &self.problem.pairs[pair_idx];
        let seq = self.stats.hypotheses;
        self.stats.hypotheses += 1;
        let frame = match gate(self.problem, self.params, pair, big_i, big_j) {
            Gate::Pass(frame) => frame,
            Gate::Degenerate => {
                self.stats.degenerate += 1;
                return;
            }
            Gate::Region => {
                self.stats.pruned_region += 1;
                return;
            }
            Gate::Prior => {
                self.stats.pruned_prior += 1;
                return;
            }
        };
        self.stats.evaluated += 1;
        let threshold = self.threshold();
        let Some(c) = self.eval.consensus(pair_idx, &frame, threshold, None) else {
            self.stats.early_exits += 1;
            return;
        };
        let scored = Scored {
            anchors: [pair.i, pair.j, big_i, big_j],
            origin: frame.origin,
            scale: frame.anchor_radius / pair.r_i,
            n: c.n,
            score: c.score,
            pair_idx,
        };
        let improved = match (self.params.selection_mode, self.best) {
            (_, None) => true,
            (SelectionMode::Lexicographic, Some(b)) => rank(&scored, &b) == Ordering::Less,
            (SelectionMode::Faithful, Some(b)) => scored.n >= b.n && scored.score < b.score,
        };
        if self.params.selection_mode == SelectionMode::Lexicographic && self.params.top_k > 1 {
            self.pool.push(scored);
        }
        if improved {
            self.best = Some(scored);
            if self.params.selection_mode == SelectionMode::Faithful {
                self.history.push(scored);
            }
            if self.params.trace {
                self.trace.push(TraceRecord {
                    hypothesis: seq,
                    n_matched: scored.n,
                    score: scored.score,
                    x: frame.origin.x,
                    y: frame.origin.y,
                });
            }
        }
    }

    fn run_exhaustive(&mut self) {
        for pair_idx in 0..self.problem.pairs.len() {
            let pair = &self.problem.pairs[pair_idx];
            let (Some(li), Some(lj)) = (self.anchor_label(pair.i), self.anchor_label(pair.j)) else {
                continue;
            };
            let (gi, gj) = (&self.problem.groups[li as usize], &self.problem.groups[lj as usize]);
            for &big_i in gi {
                for &big_j in gj {
                    if big_i != big_j {
                        self.try_hypothesis(pair_idx, big_i as usize, big_j as usize);
                    }
                }
            }
        }
    }

    fn run_sampled(&mut self, max_hypotheses: u64, seed: u64) {
        if self.problem.pairs.is_empty() {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_hypotheses {
            let pair_idx = rng.random_range(0..self.problem.pairs.len());
            let pair = &self.problem.pairs[pair_idx];
            let (Some(li), Some(lj)) = (self.anchor_label(pair.i), self.anchor_label(pair.j)) else {
                continue;
            };
            let (gi, gj) = (&self.problem.groups[li as usize], &self.problem.groups[lj as usize]);
            let big_i = gi[rng.random_range(0..gi.len())] as usize;
            let big_j = gj[rng.random_range(0..gj.len())] as usize;
            if big_i == big_j {
                self.stats.hypotheses += 1;
                self.stats.degenerate += 1;
                continue;
            }
            self.try_hypothesis(pair_idx, big_i, big_j);
        }
    }

    fn anchor_label(&self, k: usize) -> Option<u32> {
        self.problem.image_labels[k]
    }
}

impl<'p, 'a> Search<'p, 'a> {
    fn new(problem: &'p Problem<'a>, params: &'p MatchParams) -> Self {
        Self {
            problem,
            params,
            eval: Evaluator::new(problem, params),
            stats: MatchStats::default(),
            best: None,
            history: Vec::new(),
            pool: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn merge(&self, ranked: impl Iterator<Item = Scored>) -> Vec<Candidate> {
        let r2 = self.params.merge_radius_m * self.params.merge_radius_m;
        let mut kept: Vec<Candidate> = Vec::new();
        for h in ranked {
            if kept.len() == self.params.top_k {
                break;
            }
            if kept.iter().all(|c| (c.position - h.origin).norm_sq() > r2) {
                kept.push(Candidate {
                    position: h.origin,
                    n_matched: h.n,
                    score: h.score,
                    scale: h.scale,
                    anchors: h.anchors,
                });
            }
        }
        kept
    }

    fn finish(mut self) -> MatchOutcome {
        let Some(best) = self.best else {
            let mut out = MatchOutcome::rejected(self.stats);
            out.trace = self.trace;
            return out;
        };
        let pair = &self.problem.pairs[best.pair_idx];
        let (big_i, big_j) = (best.anchors[2], best.anchors[3]);
        let mut matches = Vec::new();
        let Gate::Pass(frame) = gate(self.problem, self.params, pair, big_i, big_j) else {
            unreachable!("winning hypothesis passed the gate once");
        };
        let c = self
            .eval
            .consensus(best.pair_idx, &frame, 0, Some(&mut matches))
            .expect("no cut-off at threshold 0");
        debug_assert_eq!(c.n, best.n);

        let candidates = match self.params.selection_mode {
            SelectionMode::Lexicographic if self.params.top_k > 1 => {
                let mut pool = std::mem::take(&mut self.pool);
                pool.sort_by(rank);
                self.merge(pool.into_iter())
            }
            SelectionMode::Lexicographic => self.merge(std::iter::once(best)),
            SelectionMode::Faithful => self.merge(self.history.iter().rev().copied()),
        };

        MatchOutcome {
            status: MatchStatus::Accepted,
            position: Some(best.origin),
            n_matched: best.n,
            score: Some(best.score),
            scale: Some(best.scale),
            candidates,
            best: Some(Hypothesis {
                anchor_image: (best.anchors[0], best.anchors[1]),
                anchor_db: (big_i, big_j),
                origin: frame.origin,
                anchor_radius: frame.anchor_radius,
                matches,
                n_matched: c.n,
            }),
            stats: self.stats,
            trace: self.trace,
        }
    }
}

/// Locate the scene in the database.
pub fn match_scene(scene: &Scene, db: &MapDatabase, params: &MatchParams) -> Result<MatchOutcome, MatchError> {
    params.validate()?;
    if let Some(prior) = &params.prior_region {
        if !prior.intersects(&db.region()) {
            return Err(MatchError::PriorDisjoint);
        }
    }
    let coarse;
    let (scene, db) = match &params.label_map {
        Some(map) => {
            coarse = (scene.coarsen_labels(map)?, db.coarsen_labels(map)?);
            (&coarse.0, &coarse.1)
        }
        None => (scene, db),
    };
    if scene.objects.len() < 2 {
        return Ok(MatchOutcome::rejected(MatchStats::default()));
    }
    let problem = Problem::new(scene, db, params);
    let mut search = Search::new(&problem, params);
    match params.search_mode {
        SearchMode::Exhaustive => search.run_exhaustive(),
        SearchMode::Sampled { max_hypotheses, seed } => search.run_sampled(max_hypotheses, seed),
    }
    Ok(search.finish())
}

/// [`match_scene`] restricted to origins inside `params.prior_region`.
pub fn match_with_prior(scene: &Scene, db: &MapDatabase, params: &MatchParams) -> Result<MatchOutcome, MatchError> {
    if params.prior_region.is_none() {
        return Err(MatchError::MissingPrior);
    }
    match_scene(scene, db, params)
}

/// Up to `top_k` merged candidates, best first. Empty when rejected.
pub fn rank_candidates(scene: &Scene, db: &MapDatabase, params: &MatchParams) -> Result<Vec<Candidate>, MatchError> {
    Ok(match_scene(scene, db, params)?.candidates)
}

/// Height above ground implied by the winning scale and the focal length.
pub fn estimate_height(outcome: &MatchOutcome, camera: &CameraModel) -> Result<f64, MatchError> {
    match (outcome.status, outcome.scale) {
        (MatchStatus::Accepted, Some(s)) => Ok(s * camera.f_px()),
        _ => Err(MatchError::MissingScale),
    }
}
