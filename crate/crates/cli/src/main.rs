//! Command-line front end: database generation, scene simulation,
//! single-shot matching and batch evaluation.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use labelnav::harness::{self, CaseReport, TrialRecord};
use labelnav::model::Truth;
use labelnav::{
    estimate_height, load_database, load_scene, match_scene, project_scene, save_scene, synth_database, CameraModel,
    Label, LabelDistribution, LabelMap, MatchOutcome, MatchParams, NoiseModel, Point2, PriorRegion, Rect, SearchMode,
    SelectionMode, TruePose,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const SCHEMA: u32 = 1;

const EXIT_ACCEPTED: u8 = 0;
const EXIT_FAILED_CASE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REJECTED: u8 = 3;

#[derive(Parser)]
#[command(name = "labelnav", version, about = "Labeled point-pattern localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic map database.
    GenDb(GenDbArgs),
    /// Render a database into a simulated scene file.
    Simulate(SimulateArgs),
    /// Locate a scene in a database and print the fix as JSON.
    Match(MatchArgs),
    /// Run the Monte Carlo cases of a config file.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenDbArgs {
    /// Region size in meters, WIDTHxHEIGHT.
    #[arg(long, default_value = "250x150")]
    region: RegionSize,
    #[arg(long, default_value_t = 215)]
    count: usize,
    /// Label weights, e.g. `building:3,intersection:1`.
    #[arg(long, default_value = "obj")]
    labels: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    x: f64,
    #[arg(long)]
    y: f64,
    #[arg(long, default_value_t = 100.0)]
    alt: f64,
    #[arg(long, default_value_t = 35.0)]
    hfov_deg: f64,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    roll_deg: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pitch_deg: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    yaw_deg: f64,
    /// Attitude error std added to roll and pitch.
    #[arg(long, default_value_t = 0.0)]
    sigma_att_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_px: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leave the truth record out of the scene file.
    #[arg(long)]
    no_truth: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    Lexicographic,
    Faithful,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 6)]
    n_min: usize,
    #[arg(long, default_value_t = 0.2)]
    delta_r: f64,
    /// Angle tolerance in degrees (default 0.2 rad).
    #[arg(long, default_value_t = 0.2f64.to_degrees())]
    delta_theta_deg: f64,
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    /// `rect:X0,Y0,X1,Y1` or `disc:X,Y,R` in meters.
    #[arg(long)]
    prior: Option<Prior>,
    #[arg(long, value_enum, default_value_t = Selection::Lexicographic)]
    selection: Selection,
    #[arg(long)]
    injective: bool,
    /// Random hypotheses instead of the exhaustive search.
    #[arg(long)]
    sampled: Option<u64>,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    /// Label coarsening, e.g. `building=obj,stadium=obj`.
    #[arg(long)]
    label_map: Option<String>,
    /// Fail on labels missing from the label map.
    #[arg(long, requires = "label_map")]
    strict_labels: bool,
    /// Report the height above ground for this horizontal FOV.
    #[arg(long)]
    hfov_deg: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for relative output paths (default: current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override n_trials of every case.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy)]
struct RegionSize(f64, f64);

impl FromStr for RegionSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected WIDTHxHEIGHT in meters, got '{s}'");
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let w: f64 = w.trim().parse().map_err(|_| bad())?;
        let h: f64 = h.trim().parse().map_err(|_| bad())?;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(bad());
        }
        Ok(RegionSize(w, h))
    }
}

#[derive(Clone, Copy)]
struct Prior(PriorRegion);

impl FromStr for Prior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected rect:X0,Y0,X1,Y1 or disc:X,Y,R, got '{s}'");
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let v = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad());
        }
        match (kind, v.as_slice()) {
            ("rect", &[x0, y0, x1, y1]) if x0 <= x1 && y0 <= y1 => Ok(Prior(PriorRegion::Rect(Rect {
                min: Point2::new(x0, y0),
                max: Point2::new(x1, y1),
            }))),
            ("disc", &[x, y, r]) if r >= 0.0 => Ok(Prior(PriorRegion::Disc { center: Point2::new(x, y), radius: r })),
            _ => Err(bad()),
        }
    }
}

fn parse_label_weights(s: &str) -> Result<LabelDistribution> {
    let mut entries = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (name, w) = match item.split_once(':') {
            Some((n, w)) => (n, w.trim().parse::<f64>().with_context(|| format!("label weight in '{item}'"))?),
            None => (item, 1.0),
        };
        entries.push((Label::new(name.trim())?, w));
    }
    LabelDistribution::weighted(entries).context("label weights must be non-negative with a positive total")
}

fn parse_label_map(s: &str, strict: bool) -> Result<LabelMap> {
    let mut pairs = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (from, to) = item.split_once('=').with_context(|| format!("expected FROM=TO, got '{item}'"))?;
        pairs.push((Label::new(from.trim())?, Label::new(to.trim())?));
    }
    Ok(LabelMap::new(pairs, strict))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen_db(a: GenDbArgs) -> Result<()> {
    let labels = parse_label_weights(&a.labels)?;
    let db = synth_database(Rect::from_size(a.region.0, a.region.1), a.count, &labels, a.seed);
    write(&a.out, db.to_json()? + "\n")
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let db = load_database(&read(&a.db)?).with_context(|| format!("loading {}", a.db.display()))?;
    if !(a.alt > 0.0) {
        bail!("--alt must be positive");
    }
    if !(a.hfov_deg > 0.0 && a.hfov_deg < 180.0) {
        bail!("--hfov-deg must lie in (0, 180)");
    }
    if !(a.sigma_att_deg >= 0.0 && a.sigma_px >= 0.0) {
        bail!("noise sigmas must be non-negative");
    }
    let cam = CameraModel::from_hfov_deg(f64::from(a.width), f64::from(a.height), a.hfov_deg);
    let noise = NoiseModel {
        sigma_att: a.sigma_att_deg.to_radians(),
        sigma_px: a.sigma_px,
        seed: a.seed,
    };
    let (droll, dpitch) = noise.sample_attitude(&mut ChaCha8Rng::seed_from_u64(a.seed ^ 0xa77));
    let pose = TruePose {
        x: a.x,
        y: a.y,
        alt: a.alt,
        roll: a.roll_deg.to_radians() + droll,
        pitch: a.pitch_deg.to_radians() + dpitch,
        yaw: a.yaw_deg.to_radians(),
    };
    let scene = project_scene(&db, &pose, &cam, &noise);
    let truth = (!a.no_truth).then_some(Truth { x: a.x, y: a.y, alt: a.alt });
    write(&a.out, save_scene(&scene, truth)? + "\n")?;
    eprintln!("{} objects in view", scene.objects.len());
    Ok(())
}

#[derive(Serialize)]
struct CandidateJson {
    x: f64,
    y: f64,
    n_matched: usize,
    score: f64,
    scale: f64,
}

#[derive(Serialize)]
struct MatchJson {
    schema: u32,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    n_matched: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    height_m: Option<f64>,
    candidates: Vec<CandidateJson>,
    stats: labelnav::MatchStats,
}

fn match_json(out: &MatchOutcome, camera: Option<&CameraModel>) -> MatchJson {
    MatchJson {
        schema: SCHEMA,
        status: if out.is_accepted() { "accepted" } else { "rejected" },
        x: out.position.map(|p| p.x),
        y: out.position.map(|p| p.y),
        n_matched: out.n_matched,
        score: out.score,
        scale: out.scale,
        height_m: camera.and_then(|c| estimate_height(out, c).ok()),
        candidates: out
            .candidates
            .iter()
            .map(|c| CandidateJson {
                x: c.position.x,
                y: c.position.y,
                n_matched: c.n_matched,
                score: c.score,
                scale: c.scale,
            })
            .collect(),
        stats: out.stats,
    }
}

fn cmd_match(a: MatchArgs) -> Result<ExitCode> {
    let db = load_database(&read(&a.db)?).with_context(|| format!("loading {}", a.db.display()))?;
    let (scene, _truth) = load_scene(&read(&a.scene)?).with_context(|| format!("loading {}", a.scene.display()))?;
    let params = MatchParams {
        n_min: a.n_min,
        delta_r: a.delta_r,
        delta_theta: a.delta_theta_deg.to_radians(),
        prior_region: a.prior.map(|p| p.0),
        selection_mode: match a.selection {
            Selection::Lexicographic => SelectionMode::Lexicographic,
            Selection::Faithful => SelectionMode::Faithful,
        },
        search_mode: match a.sampled {
            Some(max_hypotheses) => SearchMode::Sampled { max_hypotheses, seed: a.sample_seed },
            None => SearchMode::Exhaustive,
        },
        top_k: a.top_k,
        label_map: a.label_map.as_deref().map(|s| parse_label_map(s, a.strict_labels)).transpose()?,
        injective: a.injective,
        ..MatchParams::default()
    };
    let camera = match a.hfov_deg {
        Some(h) if h > 0.0 && h < 180.0 => Some(CameraModel::from_hfov_deg(scene.width_px, scene.height_px, h)),
        Some(h) => bail!("--hfov-deg {h} outside (0, 180)"),
        None => None,
    };
    let out = match_scene(&scene, &db, &params)?;
    println!("{}", serde_json::to_string(&match_json(&out, camera.as_ref()))?);
    Ok(ExitCode::from(if out.is_accepted() { EXIT_ACCEPTED } else { EXIT_REJECTED }))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg = config::RunConfig::parse(&text).with_context(|| format!("in {}", a.config.display()))?;
    let mut cases = cfg.cases()?;
    if let Some(n) = a.trials {
        cases.iter_mut().for_each(|c| c.n_trials = n);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.workers.unwrap_or(0)).build()?;
    let base = a.out_dir.unwrap_or_default();
    let mut rows: Vec<CaseReport> = Vec::new();
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut failed = 0;
    for case in &cases {
        let start = Instant::now();
        match pool.install(|| harness::run_case(case)) {
            Ok((row, t)) => {
                eprintln!("{}: {} trials in {:.1} s", case.name, case.n_trials, start.elapsed().as_secs_f64());
                rows.push(row);
                trials.extend(t);
            }
            Err(e) => {
                eprintln!("error: {e}");
                failed += 1;
            }
        }
    }
    let out = &cfg.output;
    let mut csv = Vec::new();
    harness::write_report_csv(&rows, &mut csv)?;
    write(&base.join(&out.report_csv), csv)?;
    let mut json = Vec::new();
    harness::write_report_json(&rows, &mut json)?;
    write(&base.join(&out.report_json), json)?;
    if let Some(path) = &out.trials_csv {
        let mut buf = Vec::new();
        harness::write_trials_csv(&trials, &mut buf)?;
        write(&base.join(path), buf)?;
    }
    Ok(ExitCode::from(if failed > 0 { EXIT_FAILED_CASE } else { 0 }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenDb(a) => cmd_gen_db(a).map(|()| ExitCode::SUCCESS),
        Command::Simulate(a) => cmd_simulate(a).map(|()| ExitCode::SUCCESS),
        Command::Match(a) => cmd_match(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_USAGE)
    })
}
