//! The reproduction bundle: fixed configurations whose reports are
//! compared with checked-in expected JSON.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::commands::{self, Output};
use crate::config::{DistSpec, ModelSpec, RunConfig};
use crate::error::CliError;
use crate::output::to_canonical;

/// Relative tolerance of the numeric comparison against expected output.
pub const REL_TOL: f64 = 1e-6;
const ABS_FLOOR: f64 = 1e-9;

pub fn default_expected_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("expected")
}

type Runner = fn(&RunConfig) -> Result<Output, CliError>;

pub struct Entry {
    pub name: &'static str,
    pub config: RunConfig,
    run: Runner,
}

fn two_dirac() -> DistSpec {
    DistSpec::Dirac {
        nodes: vec![[2.0, 0.5], [-2.0, 0.5]],
        symmetric: Some(true),
    }
}

fn model(kappa: f64, beta: f64, sigma: f64) -> ModelSpec {
    ModelSpec { kappa, beta, sigma }
}

/// The five bundle entries in execution order.
pub fn bundle() -> Vec<Entry> {
    let mut figure1 = RunConfig {
        model: model(9.0, 1.0, 1.0),
        dist: two_dirac(),
        ..RunConfig::default()
    };
    figure1.gmap.points = Some(64);

    let figure2 = RunConfig {
        model: model(1.0, 1.0, 1.0),
        dist: two_dirac(),
        ..RunConfig::default()
    };

    let example2_1 = RunConfig {
        model: model(1.0, 1.0, 2.0),
        dist: DistSpec::Gaussian {
            mean: 0.0,
            variance: 1.0,
            node_count: None,
            symmetric: Some(true),
        },
        ..RunConfig::default()
    };

    let example3_2 = RunConfig {
        model: model(1.0, 1.0, 1.0),
        dist: two_dirac(),
        ..RunConfig::default()
    };

    let mut example5_1 = RunConfig {
        model: model(2.0, 1.0, 1.0),
        dist: two_dirac(),
        lambda: Some(0.01),
        ..RunConfig::default()
    };
    example5_1.stability.kappas = Some(vec![1.0, 2.0, 2.5, 3.5, 5.0]);

    vec![
        Entry { name: "figure1", config: figure1, run: commands::gmap },
        Entry { name: "figure2", config: figure2, run: commands::penrose },
        Entry { name: "example2_1", config: example2_1, run: commands::thresholds },
        Entry { name: "example3_2", config: example3_2, run: commands::thresholds },
        Entry { name: "example5_1", config: example5_1, run: commands::stability },
    ]
}

impl Entry {
    pub fn run(&self) -> Result<Output, CliError> {
        (self.run)(&self.config)
    }
}

/// First difference between `actual` and `expected`, with the largest
/// relative deviation among matching numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Comparison {
    pub max_rel_diff: f64,
    pub mismatch: Option<String>,
}

pub fn compare(actual: &Value, expected: &Value) -> Comparison {
    let mut cmp = Comparison::default();
    walk(actual, expected, "$", &mut cmp);
    cmp
}

fn walk(a: &Value, e: &Value, path: &str, cmp: &mut Comparison) {
    if cmp.mismatch.is_some() {
        return;
    }
    match (a, e) {
        (Value::Number(xn), Value::Number(yn)) => {
            let (x, y) = (xn.as_f64().unwrap_or(f64::NAN), yn.as_f64().unwrap_or(f64::NAN));
            let rel = (x - y).abs() / y.abs().max(ABS_FLOOR);
            if (x - y).abs() <= ABS_FLOOR {
                return;
            }
            if rel > REL_TOL || rel.is_nan() {
                cmp.mismatch = Some(format!("{path}: {xn} vs expected {yn}"));
            } else {
                cmp.max_rel_diff = cmp.max_rel_diff.max(rel);
            }
        }
        (Value::Array(xs), Value::Array(ys)) => {
            if xs.len() != ys.len() {
                cmp.mismatch = Some(format!("{path}: length {} vs expected {}", xs.len(), ys.len()));
                return;
            }
            for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
                walk(x, y, &format!("{path}[{i}]"), cmp);
            }
        }
        (Value::Object(xs), Value::Object(ys)) => {
            if let Some(k) = ys.keys().find(|k| !xs.contains_key(*k)) {
                cmp.mismatch = Some(format!("{path}.{k}: missing"));
                return;
            }
            if let Some(k) = xs.keys().find(|k| !ys.contains_key(*k)) {
                cmp.mismatch = Some(format!("{path}.{k}: unexpected"));
                return;
            }
            for (k, x) in xs {
                walk(x, &ys[k], &format!("{path}.{k}"), cmp);
            }
        }
        _ if a == e => {}
        _ => cmp.mismatch = Some(format!("{path}: {a} vs expected {e}")),
    }
}

/// Runs the bundle. Returns the summary report, every produced output and
/// whether all entries matched.
pub fn run(expected_dir: &Path, bless: bool) -> Result<(Value, Vec<Output>, bool), CliError> {
    let mut summary = Vec::new();
    let mut outputs = Vec::new();
    let mut all_ok = true;
    for entry in bundle() {
        let out = entry.run()?;
        let path = expected_dir.join(format!("{}.json", entry.name));
        let (status, max_rel, detail) = if bless {
            std::fs::create_dir_all(expected_dir).map_err(|e| CliError::Io(e.to_string()))?;
            std::fs::write(&path, crate::output::render_json(&out.report))
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            ("blessed", 0.0, None)
        } else {
            match std::fs::read_to_string(&path) {
                Err(_) => ("missing", 0.0, Some(format!("no expected file for {}", entry.name))),
                Ok(text) => {
                    let expected: Value = serde_json::from_str(&text)
                        .map_err(|e| CliError::Config(format!("expected {}: {e}", entry.name)))?;
                    let cmp = compare(&out.report, &expected);
                    match cmp.mismatch {
                        None => ("match", cmp.max_rel_diff, None),
                        Some(m) => ("mismatch", cmp.max_rel_diff, Some(m)),
                    }
                }
            }
        };
        all_ok &= status == "match" || status == "blessed";
        summary.push(json!({
            "name": entry.name,
            "command": out.report["command"],
            "status": status,
            "max_rel_diff": max_rel,
            "detail": detail,
        }));
        outputs.push(Output {
            name: entry.name.to_string(),
            files: out
                .files
                .into_iter()
                .map(|(f, c)| (format!("{}_{f}", entry.name), c))
                .collect(),
            ..out
        });
    }
    let report = to_canonical(&json!({
        "command": "repro",
        "tolerance": REL_TOL,
        "entries": summary,
        "all_match": all_ok,
    }));
    Ok((report, outputs, all_ok))
}
