//! Declarative experiment configuration read from TOML, with dotted-path
//! overrides from the command line.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssl_gmm_core::amp::AmpOptions;
use ssl_gmm_core::tuning::{Metric, TuningOptions};
use ssl_gmm_core::{Estimator, GaussHermite, GdConfig, ModelParams, SeOptions};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AmpVsSe,
    GdVsAmp,
    LambdaChi,
    PhaseDiagram,
    MseHeatmap,
    OptimalLambda,
    GeCurve,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::AmpVsSe,
        ExperimentKind::GdVsAmp,
        ExperimentKind::LambdaChi,
        ExperimentKind::PhaseDiagram,
        ExperimentKind::MseHeatmap,
        ExperimentKind::OptimalLambda,
        ExperimentKind::GeCurve,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::AmpVsSe => "amp-vs-se",
            ExperimentKind::GdVsAmp => "gd-vs-amp",
            ExperimentKind::LambdaChi => "lambda-chi",
            ExperimentKind::PhaseDiagram => "phase-diagram",
            ExperimentKind::MseHeatmap => "mse-heatmap",
            ExperimentKind::OptimalLambda => "optimal-lambda",
            ExperimentKind::GeCurve => "ge-curve",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LabError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuesGrid {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeGrid {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
    #[serde(default)]
    pub log: bool,
}

/// A named axis: explicit values or `num` points from `start` to `stop`
/// inclusive, optionally log-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(ValuesGrid),
    Range(RangeGrid),
}

impl GridSpec {
    pub fn points(&self) -> LabResult<Vec<f64>> {
        match self {
            GridSpec::Values(v) => {
                if v.values.iter().any(|x| !x.is_finite()) {
                    return Err(LabError::Config("grid values must be finite".into()));
                }
                Ok(v.values.clone())
            }
            GridSpec::Range(r) => {
                if !(r.start.is_finite() && r.stop.is_finite()) {
                    return Err(LabError::Config("grid bounds must be finite".into()));
                }
                if r.log && !(r.start > 0.0 && r.stop > 0.0) {
                    return Err(LabError::Config("log grids need positive bounds".into()));
                }
                Ok(match r.num {
                    0 => vec![],
                    1 => vec![r.start],
                    n => (0..n)
                        .map(|i| {
                            let s = i as f64 / (n - 1) as f64;
                            if r.log {
                                (r.start.ln() + s * (r.stop.ln() - r.start.ln())).exp()
                            } else {
                                r.start + s * (r.stop - r.start)
                            }
                        })
                        .collect(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmpInitKind {
    /// `supervised` with labels, `aligned` without.
    Auto,
    Supervised,
    /// `ŵ = init_overlap · w0`.
    Aligned,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdSection {
    pub eta: f64,
    pub eps_gd: f64,
    pub max_iter: usize,
    pub lambda: f64,
    pub replicates: usize,
    pub n_boot: usize,
    pub boot_seed: u64,
    /// Record per-iteration order parameters of GD and AMP for the first
    /// replicate of each cell.
    pub trace: bool,
}

impl Default for GdSection {
    fn default() -> Self {
        GdSection {
            eta: 0.1,
            eps_gd: 1e-5,
            max_iter: 100_000,
            lambda: 2.0,
            replicates: 100,
            n_boot: 1000,
            boot_seed: 0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub inv_lambda_min: f64,
    pub inv_lambda_max: f64,
    pub coarse_points: usize,
}

impl Default for TuningSection {
    fn default() -> Self {
        let t = TuningOptions::default();
        TuningSection {
            inv_lambda_min: t.inv_lambda_range.0,
            inv_lambda_max: t.inv_lambda_range.1,
            coarse_points: t.coarse_points,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_nodes() -> usize {
    ssl_gmm_core::quadrature::DEFAULT_NODES
}
fn default_eps_amp() -> f64 {
    1e-8
}
fn default_max_iter_amp() -> usize {
    1000
}
fn default_eps_se() -> f64 {
    1e-10
}
fn default_max_iter_se() -> usize {
    20_000
}
fn default_iterations() -> usize {
    30
}
fn default_init_overlap() -> f64 {
    0.1
}
fn default_init() -> AmpInitKind {
    AmpInitKind::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// When set, seeds run from `seeds[0]` to `seeds[0] + seed_count - 1`.
    #[serde(default)]
    pub seed_count: Option<usize>,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default = "default_eps_amp")]
    pub eps_amp: f64,
    #[serde(default = "default_max_iter_amp")]
    pub max_iter_amp: usize,
    #[serde(default = "default_eps_se")]
    pub eps_se: f64,
    #[serde(default = "default_max_iter_se")]
    pub max_iter_se: usize,
    /// Trajectory length compared in `amp-vs-se`.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_init")]
    pub amp_init: AmpInitKind,
    #[serde(default = "default_init_overlap")]
    pub init_overlap: f64,
    /// Empty means `model.estimator` only.
    #[serde(default)]
    pub estimators: Vec<Estimator>,
    /// Empty means both.
    #[serde(default)]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub grids: BTreeMap<String, GridSpec>,
    #[serde(default)]
    pub gd: GdSection,
    #[serde(default)]
    pub tuning: TuningSection,
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Applies `a.b.c=value` to `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> LabResult<()> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override '{assignment}' is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(LabError::Config(format!("bad key path '{path}'")));
    }
    let mut cur = table;
    for key in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| LabError::Config(format!("'{key}' in '{path}' is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses a config document, applies overrides, and fills in the
    /// experiment from the command line when the document omits it.
    pub fn from_toml_str(text: &str, overrides: &[String], experiment: Option<ExperimentKind>) -> LabResult<Self> {
        let mut table: toml::Table = text.parse()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(kind) = experiment {
            match table.get("experiment").and_then(|v| v.as_str()) {
                Some(name) if name != kind.as_str() => {
                    return Err(LabError::Config(format!(
                        "config is for '{name}' but '{}' was requested",
                        kind.as_str()
                    )))
                }
                _ => {
                    table.insert("experiment".into(), toml::Value::String(kind.as_str().into()));
                }
            }
        }
        let cfg: ExperimentConfig = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> LabResult<()> {
        let mut probe = self.model;
        // The model may be swept; validate with a representative n_dim.
        probe.n_dim = probe.n_dim.max(1);
        probe.validate()?;
        if self.quadrature_nodes < 2 {
            return Err(LabError::Config("quadrature_nodes must be at least 2".into()));
        }
        for (name, v) in [("eps_amp", self.eps_amp), ("eps_se", self.eps_se)] {
            if !(v > 0.0) {
                return Err(LabError::Config(format!("{name} must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(LabError::Config("seeds must not be empty".into()));
        }
        if !(self.tuning.inv_lambda_min > 0.0 && self.tuning.inv_lambda_max > self.tuning.inv_lambda_min) {
            return Err(LabError::Config("tuning window must satisfy 0 < inv_lambda_min < inv_lambda_max".into()));
        }
        self.gd_config().validate()?;
        for g in self.grids.values() {
            g.points()?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        let text = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match self.seed_count {
            Some(n) => (0..n as u64).map(|i| self.seeds[0] + i).collect(),
            None => self.seeds.clone(),
        }
    }

    /// Points of grid `name`, or `None` when the config does not define it.
    pub fn grid(&self, name: &str) -> LabResult<Option<Vec<f64>>> {
        self.grids.get(name).map(GridSpec::points).transpose()
    }

    pub fn require_grid(&self, name: &str) -> LabResult<Vec<f64>> {
        self.grid(name)?.ok_or_else(|| LabError::MissingGrid(name.to_string()))
    }

    /// Grid values, or the single `fallback` when the grid is absent.
    pub fn grid_or(&self, name: &str, fallback: f64) -> LabResult<Vec<f64>> {
        Ok(self.grid(name)?.unwrap_or_else(|| vec![fallback]))
    }

    pub fn estimator_list(&self) -> Vec<Estimator> {
        if self.estimators.is_empty() {
            vec![self.model.estimator]
        } else {
            self.estimators.clone()
        }
    }

    pub fn metric_list(&self) -> Vec<Metric> {
        if self.metrics.is_empty() {
            vec![Metric::Mse, Metric::Ge]
        } else {
            self.metrics.clone()
        }
    }

    pub fn se_options(&self) -> SeOptions {
        SeOptions {
            eps: self.eps_se,
            max_iter: self.max_iter_se,
            ..Default::default()
        }
    }

    pub fn amp_options(&self) -> AmpOptions {
        AmpOptions {
            eps: self.eps_amp,
            max_iter: self.max_iter_amp,
        }
    }

    pub fn gd_config(&self) -> GdConfig {
        GdConfig {
            eta: self.gd.eta,
            eps_gd: self.gd.eps_gd,
            max_iter: self.gd.max_iter,
            lambda: self.gd.lambda,
        }
    }

    pub fn tuning_options(&self) -> TuningOptions {
        TuningOptions {
            inv_lambda_range: (self.tuning.inv_lambda_min, self.tuning.inv_lambda_max),
            coarse_points: self.tuning.coarse_points,
            se: SeOptions {
                eps: self.eps_se.min(1e-12),
                max_iter: self.max_iter_se,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn rule(&self) -> GaussHermite {
        GaussHermite::new(self.quadrature_nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "lambda-chi"
[model]
alpha_u = 2.0
[grids.chi]
start = 0.1
stop = 0.9
num = 5
[grids.alpha_u]
values = [0.5, 1.0]
"#;

    #[test]
    fn parses_grids_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, &[], None).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::LambdaChi);
        assert_eq!(cfg.model.alpha_u, 2.0);
        assert_eq!(cfg.model.rho, 0.5);
        let chi = cfg.require_grid("chi").unwrap();
        assert_eq!(chi.len(), 5);
        assert!((chi[4] - 0.9).abs() < 1e-15);
        assert_eq!(cfg.require_grid("alpha_u").unwrap(), vec![0.5, 1.0]);
        assert!(matches!(cfg.require_grid("snr"), Err(LabError::MissingGrid(_))));
        assert_eq!(cfg.grid_or("rho", 0.5).unwrap(), vec![0.5]);
    }

    #[test]
    fn overrides_reach_nested_tables() {
        let o = vec![
            "model.rho=0.4".to_string(),
            "grids.chi.num=3".to_string(),
            "output_dir=elsewhere".to_string(),
        ];
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, &o, None).unwrap();
        assert_eq!(cfg.model.rho, 0.4);
        assert_eq!(cfg.require_grid("chi").unwrap().len(), 3);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
        assert!(ExperimentConfig::from_toml_str(MINIMAL, &["model.rho".into()], None).is_err());
        assert!(ExperimentConfig::from_toml_str(MINIMAL, &["model.bogus=1".into()], None).is_err());
    }

    #[test]
    fn experiment_mismatch_is_rejected() {
        assert!(ExperimentConfig::from_toml_str(MINIMAL, &[], Some(ExperimentKind::GeCurve)).is_err());
        let cfg = ExperimentConfig::from_toml_str("[model]\nalpha_u = 1.0", &[], Some(ExperimentKind::GeCurve)).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::GeCurve);
        assert!(matches!(
            ExperimentConfig::from_toml_str("experiment = \"nope\"", &[], None),
            Err(LabError::Toml(_))
        ));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::from_toml_str(MINIMAL, &[], None).unwrap();
        let b = ExperimentConfig::from_toml_str(MINIMAL, &["output_dir=x".into()], None).unwrap();
        let c = ExperimentConfig::from_toml_str(MINIMAL, &["model.rho=0.3".into()], None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn log_and_empty_grids() {
        let g = GridSpec::Range(RangeGrid { start: 0.1, stop: 10.0, num: 3, log: true });
        let p = g.points().unwrap();
        assert!((p[1] - 1.0).abs() < 1e-14);
        let g = GridSpec::Range(RangeGrid { start: 0.1, stop: 10.0, num: 0, log: false });
        assert!(g.points().unwrap().is_empty());
        let g = GridSpec::Range(RangeGrid { start: -1.0, stop: 10.0, num: 3, log: true });
        assert!(g.points().is_err());
    }

    #[test]
    fn seed_count_expands() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, &["seeds=[7]".into(), "seed_count=3".into()], None).unwrap();
        assert_eq!(cfg.seed_list(), vec![7, 8, 9]);
    }
}
