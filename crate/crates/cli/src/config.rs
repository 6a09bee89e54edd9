//! Evaluation config file (TOML). Angles are given in degrees.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use labelnav::harness::{DatabaseSpec, EvalCase, DEFAULT_FP_THRESHOLD_M};
use labelnav::{Label, LabelDistribution, MatchParams, Rect, SelectionMode};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub database: DatabaseConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub defaults: CaseConfig,
    #[serde(rename = "case", default)]
    pub cases: Vec<CaseConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub trials_csv: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            report_csv: "report.csv".into(),
            report_json: "report.json".into(),
            trials_csv: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub n_objects: usize,
    pub seed: u64,
    /// Label name to relative weight.
    pub labels: BTreeMap<String, f64>,
}

impl Default for DatabaseConfig {
    fn default() -> Self {
        Self {
            width_m: 250.0,
            height_m: 150.0,
            n_objects: 215,
            seed: 7,
            labels: BTreeMap::from([("obj".to_string(), 1.0)]),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Lexicographic,
    Faithful,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub n_min: usize,
    pub delta_r: f64,
    pub delta_theta_deg: f64,
    pub selection: Selection,
    pub injective: bool,
    pub region_margin_frac: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = MatchParams::default();
        Self {
            n_min: p.n_min,
            delta_r: p.delta_r,
            delta_theta_deg: p.delta_theta.to_degrees(),
            selection: Selection::Lexicographic,
            injective: p.injective,
            region_margin_frac: p.region_margin_frac,
        }
    }
}

/// Per-case settings. Missing fields fall back to `[defaults]`, then to
/// built-in values.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: Option<String>,
    pub sigma_att_deg: Option<f64>,
    pub sigma_px: Option<f64>,
    pub hfov_deg: Option<f64>,
    pub n_trials: Option<usize>,
    pub alt_m: Option<f64>,
    pub width_px: Option<f64>,
    pub height_px: Option<f64>,
    pub noise_seed: Option<u64>,
    pub fp_threshold_m: Option<f64>,
    pub inset: Option<bool>,
    pub n_min: Option<usize>,
    pub delta_r: Option<f64>,
    pub delta_theta_deg: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    fn database(&self) -> Result<DatabaseSpec> {
        let d = &self.database;
        if !(d.width_m > 0.0 && d.height_m > 0.0 && d.width_m.is_finite() && d.height_m.is_finite()) {
            bail!("database size {}x{} m must be positive", d.width_m, d.height_m);
        }
        let entries = d
            .labels
            .iter()
            .map(|(k, w)| Ok((Label::new(k)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        let labels = LabelDistribution::weighted(entries).context("database label weights")?;
        Ok(DatabaseSpec {
            region: Rect::from_size(d.width_m, d.height_m),
            n_objects: d.n_objects,
            labels,
        })
    }

    /// Resolve every case, rejecting duplicates and invalid settings.
    pub fn cases(&self) -> Result<Vec<EvalCase>> {
        if self.cases.is_empty() {
            bail!("config defines no [[case]] entries");
        }
        let database = self.database()?;
        let p = &self.params;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (k, c) in self.cases.iter().enumerate() {
            let d = &self.defaults;
            let name = c.name.clone().with_context(|| format!("case #{} has no name", k + 1))?;
            if !seen.insert(name.clone()) {
                bail!("duplicate case name '{name}'");
            }
            let base = EvalCase::default();
            let params = MatchParams {
                n_min: c.n_min.or(d.n_min).unwrap_or(p.n_min),
                delta_r: c.delta_r.or(d.delta_r).unwrap_or(p.delta_r),
                delta_theta: c.delta_theta_deg.or(d.delta_theta_deg).unwrap_or(p.delta_theta_deg).to_radians(),
                selection_mode: match p.selection {
                    Selection::Lexicographic => SelectionMode::Lexicographic,
                    Selection::Faithful => SelectionMode::Faithful,
                },
                injective: p.injective,
                region_margin_frac: p.region_margin_frac,
                ..MatchParams::default()
            };
            let case = EvalCase {
                name,
                sigma_att_deg: c.sigma_att_deg.or(d.sigma_att_deg).unwrap_or(base.sigma_att_deg),
                sigma_px: c.sigma_px.or(d.sigma_px).unwrap_or(base.sigma_px),
                hfov_deg: c.hfov_deg.or(d.hfov_deg).unwrap_or(base.hfov_deg),
                n_trials: c.n_trials.or(d.n_trials).unwrap_or(base.n_trials),
                alt_m: c.alt_m.or(d.alt_m).unwrap_or(base.alt_m),
                width_px: c.width_px.or(d.width_px).unwrap_or(base.width_px),
                height_px: c.height_px.or(d.height_px).unwrap_or(base.height_px),
                params,
                db_seed: self.database.seed,
                noise_seed: c.noise_seed.or(d.noise_seed).unwrap_or(base.noise_seed),
                fp_threshold_m: c.fp_threshold_m.or(d.fp_threshold_m).unwrap_or(DEFAULT_FP_THRESHOLD_M),
                inset: c.inset.or(d.inset).unwrap_or(base.inset),
                database: database.clone(),
            };
            case.validate()?;
            out.push(case);
        }
        Ok(out)
    }
}
