//! Cross-product sweeps over a base config.
//!
//! ```json
//! {"base": { …experiment config… },
//!  "axes": {"kappa": [0.4, 0.2, 0.1, 0.05], "S": [2, 3]},
//!  "output": "sweep.csv"}
//! ```
//!
//! Axes: `kappa`, `S`, `d`, `delta`, and `c` (a constant score
//! perturbation). Every point reuses the base `master_seed`. Rows follow the
//! cross-product order, with the first axis (in the order listed above)
//! varying slowest.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::{hash_json, ExperimentConfig};
use crate::error::{CliError, ConfigError};
use crate::run::execute;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    #[serde(default)]
    pub kappa: Vec<f64>,
    #[serde(rename = "S", default)]
    pub vocab: Vec<usize>,
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: Value,
    pub axes: Axes,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Patched base configs, one per grid point, with the axis values used.
    pub fn points(&self) -> Vec<(Vec<(&'static str, f64)>, Value)> {
        let axes: Vec<(&'static str, Vec<f64>)> = [
            ("kappa", self.axes.kappa.clone()),
            ("S", self.axes.vocab.iter().map(|&v| v as f64).collect()),
            ("d", self.axes.d.iter().map(|&v| v as f64).collect()),
            ("delta", self.axes.delta.clone()),
            ("c", self.axes.c.clone()),
        ]
        .into_iter()
        .filter(|(_, values)| !values.is_empty())
        .collect();

        let mut points: Vec<Vec<(&'static str, f64)>> = vec![Vec::new()];
        for (name, values) in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((*name, v));
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|assignment| {
                let mut config = self.base.clone();
                for &(name, v) in &assignment {
                    patch(&mut config, name, v);
                }
                // sweep rows go to the CSV, never to per-run files
                if let Some(obj) = config.as_object_mut() {
                    obj.remove("output");
                    obj.remove("steps_csv");
                }
                (assignment, config)
            })
            .collect()
    }
}

fn patch(config: &mut Value, axis: &str, v: f64) {
    match axis {
        "kappa" => config["kappa"] = json!(v),
        "delta" => config["delta"] = json!(v),
        "S" => config["space"]["S"] = json!(v as usize),
        "d" => config["space"]["d"] = json!(v as usize),
        "c" => {
            if !config["provider"].is_object() {
                config["provider"] = json!({});
            }
            config["provider"]["perturbation"] = json!({"kind": "constant", "c": v});
        }
        _ => unreachable!("unknown axis {axis}"),
    }
}

/// Column order: `config_hash`, then the rest alphabetically (ignoring case).
pub const COLUMNS: [&str; 22] = [
    "config_hash",
    "c",
    "d",
    "delta",
    "disc_err",
    "early_stop_tv",
    "eps_score",
    "error",
    "est_err",
    "init_err",
    "kappa",
    "kl",
    "lhs_kl",
    "n_steps",
    "out_of_range_policy",
    "quad_est",
    "rhs_total",
    "S",
    "sampler",
    "seed",
    "T",
    "tv",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row_for(value: &Value) -> Vec<String> {
    let (hash, outcome) = match ExperimentConfig::from_value(value.clone()) {
        Ok(config) => (config.hash(), execute(&config).map(|r| (config, r)).map_err(|e| e.to_string())),
        Err(e) => (
            hash_json(&serde_json::to_string(value).unwrap_or_default()),
            Err(CliError::from(e).to_string()),
        ),
    };
    let get = |ptr: &str| value.pointer(ptr).map(|v| v.to_string().trim_matches('"').to_string()).unwrap_or_default();
    let c = match value.pointer("/provider/perturbation/kind").and_then(Value::as_str) {
        Some("constant") => get("/provider/perturbation/c"),
        _ => "1".to_string(),
    };
    let mut row = vec![String::new(); COLUMNS.len()];
    let mut set = |col: &str, v: String| {
        let i = COLUMNS.iter().position(|&c| c == col).expect("known column");
        row[i] = v;
    };
    set("config_hash", hash);
    set("c", c);
    set("d", get("/space/d"));
    set("S", get("/space/S"));
    set("kappa", get("/kappa"));
    set("T", get("/T"));
    set("sampler", get("/sampler/kind"));
    set("seed", get("/master_seed"));
    match outcome {
        Ok((config, report)) => {
            set("delta", config.delta().to_string());
            set("out_of_range_policy", serde_json::to_value(config.sampler.out_of_range_policy).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default());
            set("seed", report.seed.to_string());
            set("n_steps", report.n_steps.to_string());
            set("kl", report.kl.value().to_string());
            set("tv", report.tv.to_string());
            set("eps_score", report.eps_score.to_string());
            set("early_stop_tv", report.early_stop_tv.to_string());
            let b = report.bound;
            set("lhs_kl", fmt_opt(b.map(|b| b.lhs_kl)));
            set("init_err", fmt_opt(b.map(|b| b.init_err)));
            set("est_err", fmt_opt(b.map(|b| b.est_err)));
            set("disc_err", fmt_opt(b.map(|b| b.disc_err)));
            set("rhs_total", fmt_opt(b.map(|b| b.rhs_total)));
            set("quad_est", fmt_opt(b.map(|b| b.quad_est)));
        }
        Err(message) => {
            set("delta", get("/delta"));
            set("error", message);
        }
    }
    row
}

/// Executes every point on the worker pool and writes the CSV rows in point
/// order through one writer.
pub fn cli_sweep<W: Write>(spec: &SweepSpec, out: W) -> Result<usize, CliError> {
    let values: Vec<Value> = spec.points().into_iter().map(|(_, v)| v).collect();
    let rows: Vec<Vec<String>> = values.par_iter().map(row_for).collect();
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(COLUMNS)?;
    for row in &rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(rows.len())
}
