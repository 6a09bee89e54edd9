//! Monte Carlo evaluation: random true poses over a synthetic database,
//! simulated scenes, matcher runs, and per-case error statistics.

pub mod oracle;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::camera::{project_scene, synth_database, CameraModel, LabelDistribution, NoiseModel, TruePose};
use crate::geometry::Point2;
use crate::matcher::{match_scene, MatchError};
use crate::model::{Label, MapDatabase, MatchParams, MatchStatus, Rect};

pub use oracle::{brute_force_oracle, OracleError};

/// Accepted fixes farther than this from the truth count as false positives.
pub const DEFAULT_FP_THRESHOLD_M: f64 = 10.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("case '{0}': n_trials must be at least 1")]
    NoTrials(String),
    #[error("case '{name}': {message}")]
    Invalid { name: String, message: String },
    #[error("case '{name}': {source}")]
    Match {
        name: String,
        #[source]
        source: MatchError,
    },
    #[error("failed to build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("report output: {0}")]
    Io(#[from] std::io::Error),
    #[error("report output: {0}")]
    Csv(#[from] csv::Error),
    #[error("report output: {0}")]
    Json(#[from] serde_json::Error),
}

/// Synthetic database layout shared by the trials of a case.
#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseSpec {
    pub region: Rect,
    pub n_objects: usize,
    pub labels: LabelDistribution,
}

impl Default for DatabaseSpec {
    fn default() -> Self {
        Self {
            region: Rect::from_size(250.0, 150.0),
            n_objects: 215,
            labels: LabelDistribution::single(Label::new("obj").expect("non-empty")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub name: String,
    pub sigma_att_deg: f64,
    pub sigma_px: f64,
    pub hfov_deg: f64,
    pub n_trials: usize,
    pub alt_m: f64,
    pub width_px: f64,
    pub height_px: f64,
    pub params: MatchParams,
    pub db_seed: u64,
    pub noise_seed: u64,
    pub fp_threshold_m: f64,
    /// Sample true positions only where the whole nadir footprint lies
    /// inside the database region.
    pub inset: bool,
    pub database: DatabaseSpec,
}

impl Default for EvalCase {
    fn default() -> Self {
        Self {
            name: "case".into(),
            sigma_att_deg: 0.0,
            sigma_px: 0.0,
            hfov_deg: 35.0,
            n_trials: 500,
            alt_m: 100.0,
            width_px: 640.0,
            height_px: 480.0,
            params: MatchParams::default(),
            db_seed: 7,
            noise_seed: 1,
            fp_threshold_m: DEFAULT_FP_THRESHOLD_M,
            inset: false,
            database: DatabaseSpec::default(),
        }
    }
}

impl EvalCase {
    pub fn camera(&self) -> CameraModel {
        CameraModel::from_hfov_deg(self.width_px, self.height_px, self.hfov_deg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |message: String| HarnessError::Invalid {
            name: self.name.clone(),
            message,
        };
        if self.n_trials < 1 {
            return Err(HarnessError::NoTrials(self.name.clone()));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(invalid(format!("hfov_deg {} outside (0, 180)", self.hfov_deg)));
        }
        if !(self.alt_m > 0.0 && self.alt_m.is_finite()) {
            return Err(invalid(format!("alt_m {} must be positive", self.alt_m)));
        }
        if !(self.sigma_att_deg >= 0.0 && self.sigma_px >= 0.0) {
            return Err(invalid("noise sigmas must be non-negative".into()));
        }
        if !(self.width_px > 0.0 && self.height_px > 0.0) {
            return Err(invalid("image size must be positive".into()));
        }
        self.params.validate().map_err(|e| invalid(e.to_string()))?;
        if self.inset {
            let (hx, hy) = self.camera().footprint_half_extents(self.alt_m);
            let r = self.database.region;
            if 2.0 * hx > r.width() || 2.0 * hy > r.height() {
                return Err(invalid("footprint larger than the database region".into()));
            }
        }
        Ok(())
    }

    pub fn build_database(&self) -> MapDatabase {
        let d = &self.database;
        synth_database(d.region, d.n_objects, &d.labels, self.db_seed)
    }
}

/// 64-bit finalizer from SplitMix64.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one trial; depends only on the case seed and the trial index.
pub fn trial_seed(noise_seed: u64, trial: usize) -> u64 {
    mix64(noise_seed ^ mix64(trial as u64))
}

/// Draw the true pose for one trial.
pub fn sample_pose(case: &EvalCase, trial: usize) -> (TruePose, NoiseModel) {
    let seed = trial_seed(case.noise_seed, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut area = case.database.region;
    if case.inset {
        let (hx, hy) = case.camera().footprint_half_extents(case.alt_m);
        area = area.expand(-hx, -hy);
    }
    let x = rng.random_range(area.min.x..=area.max.x);
    let y = rng.random_range(area.min.y..=area.max.y);
    let noise = NoiseModel {
        sigma_att: case.sigma_att_deg.to_radians(),
        sigma_px: case.sigma_px,
        seed: mix64(seed.wrapping_add(1)),
    };
    let (roll, pitch) = noise.sample_attitude(&mut rng);
    let pose = TruePose {
        x,
        y,
        alt: case.alt_m,
        roll,
        pitch,
        yaw: 0.0,
    };
    (pose, noise)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub case: String,
    pub trial: usize,
    pub truth_x: f64,
    pub truth_y: f64,
    pub est_x: Option<f64>,
    pub est_y: Option<f64>,
    pub error_m: Option<f64>,
    pub status: MatchStatus,
    pub false_positive: bool,
    pub n_in_view: usize,
    pub n_matched: usize,
    pub hypotheses_evaluated: u64,
}

/// One row of the evaluation report. Every field is a deterministic
/// function of the case definition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: String,
    pub sigma_att_deg: f64,
    pub sigma_px: f64,
    pub hfov_deg: f64,
    pub n_trials: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
    pub n_false_positive: usize,
    pub rejection_rate: f64,
    pub false_positive_rate: f64,
    /// Std of horizontal distance error over accepted, non-false-positive trials.
    pub error_std_m: Option<f64>,
    /// Same over all accepted trials.
    pub error_std_all_m: Option<f64>,
    pub error_std_x_m: Option<f64>,
    pub error_std_y_m: Option<f64>,
    pub mean_in_view: f64,
    pub mean_hypotheses_evaluated: f64,
}

fn std_opt(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| crate::matcher::population_std(values))
}

fn run_trial(case: &EvalCase, db: &MapDatabase, cam: &CameraModel, trial: usize) -> Result<TrialRecord, MatchError> {
    let (pose, noise) = sample_pose(case, trial);
    let scene = project_scene(db, &pose, cam, &noise);
    let outcome = match_scene(&scene, db, &case.params)?;
    let truth = Point2::new(pose.x, pose.y);
    let error = outcome.position.map(|p| p.distance(truth));
    Ok(TrialRecord {
        case: case.name.clone(),
        trial,
        truth_x: pose.x,
        truth_y: pose.y,
        est_x: outcome.position.map(|p| p.x),
        est_y: outcome.position.map(|p| p.y),
        error_m: error,
        status: outcome.status,
        false_positive: error.is_some_and(|e| e > case.fp_threshold_m),
        n_in_view: scene.objects.len(),
        n_matched: outcome.n_matched,
        hypotheses_evaluated: outcome.stats.evaluated,
    })
}

/// Aggregate trial records (in trial order) into a report row.
pub fn summarize(case: &EvalCase, trials: &[TrialRecord]) -> CaseReport {
    let accepted: Vec<&TrialRecord> = trials.iter().filter(|t| t.status == MatchStatus::Accepted).collect();
    let good: Vec<&TrialRecord> = accepted.iter().copied().filter(|t| !t.false_positive).collect();
    let err = |v: &[&TrialRecord]| v.iter().map(|t| t.error_m.unwrap()).collect::<Vec<_>>();
    let dx: Vec<f64> = good.iter().map(|t| t.est_x.unwrap() - t.truth_x).collect();
    let dy: Vec<f64> = good.iter().map(|t| t.est_y.unwrap() - t.truth_y).collect();
    let n = trials.len();
    let n_fp = accepted.len() - good.len();
    CaseReport {
        case: case.name.clone(),
        sigma_att_deg: case.sigma_att_deg,
        sigma_px: case.sigma_px,
        hfov_deg: case.hfov_deg,
        n_trials: n,
        n_accepted: accepted.len(),
        n_rejected: n - accepted.len(),
        n_false_positive: n_fp,
        rejection_rate: (n - accepted.len()) as f64 / n as f64,
        false_positive_rate: if accepted.is_empty() { 0.0 } else { n_fp as f64 / accepted.len() as f64 },
        error_std_m: std_opt(&err(&good)),
        error_std_all_m: std_opt(&err(&accepted)),
        error_std_x_m: std_opt(&dx),
        error_std_y_m: std_opt(&dy),
        mean_in_view: trials.iter().map(|t| t.n_in_view as f64).sum::<f64>() / n as f64,
        mean_hypotheses_evaluated: trials.iter().map(|t| t.hypotheses_evaluated as f64).sum::<f64>() / n as f64,
    }
}

/// Run all trials of a case on the current rayon pool.
pub fn run_case(case: &EvalCase) -> Result<(CaseReport, Vec<TrialRecord>), HarnessError> {
    case.validate()?;
    let db = case.build_database();
    let cam = case.camera();
    let trials = (0..case.n_trials)
        .into_par_iter()
        .map(|t| run_trial(case, &db, &cam, t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| HarnessError::Match {
            name: case.name.clone(),
            source,
        })?;
    Ok((summarize(case, &trials), trials))
}

/// [`run_case`] on a dedicated pool of `workers` threads.
pub fn run_case_with_workers(case: &EvalCase, workers: usize) -> Result<(CaseReport, Vec<TrialRecord>), HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    pool.install(|| run_case(case))
}

pub fn write_report_csv<W: Write>(rows: &[CaseReport], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials_csv<W: Write>(trials: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for t in trials {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportJson<'a> {
    schema: u32,
    cases: &'a [CaseReport],
}

pub fn write_report_json<W: Write>(rows: &[CaseReport], mut out: W) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(&mut out, &ReportJson { schema: 1, cases: rows })?;
    out.write_all(b"\n")?;
    Ok(())
}
