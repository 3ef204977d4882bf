use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use qsmolu_core::export::CsvSink;

use crate::config::{parse_config, ConfigError, ScenarioConfig};
use crate::run::{run_scenario, RunError, Status};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubRun {
    pub index: usize,
    pub value: Value,
    pub directory: String,
    /// `ok`, `failed` (numeric) or `invalid` (the substituted config did not validate).
    pub status: &'static str,
    pub message: Option<String>,
    pub scalars: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub param: String,
    pub runs: Vec<SubRun>,
}

impl SweepReport {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.status == "ok")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Comma-separated list of JSON scalars; bare words are taken as strings.
pub fn parse_values(list: &str) -> Vec<Value> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect()
}

/// Replaces the value at a dotted `path`, creating missing objects.
fn set_path(doc: &mut Value, path: &str, value: Value) -> bool {
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let Some(obj) = node.as_object_mut() else {
            return false;
        };
        if i + 1 == parts.len() {
            obj.insert((*key).to_string(), value);
            return true;
        }
        node = obj.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    false
}

fn substituted(base: &ScenarioConfig, param: &str, value: &Value, dir: &Path) -> Result<ScenarioConfig, SweepError> {
    let mut doc = serde_json::to_value(base).expect("config serializes");
    if !set_path(&mut doc, param, value.clone()) {
        return Err(SweepError::UnknownParam(param.to_string()));
    }
    set_path(&mut doc, "output.directory", Value::String(dir.display().to_string()));
    Ok(parse_config(&doc.to_string())?)
}

/// Checks that `param` names a field of the schema, using a value of the
/// type already present there (or `null` for absent optional fields).
fn check_param(base: &ScenarioConfig, param: &str) -> Result<(), SweepError> {
    let doc = serde_json::to_value(base).expect("config serializes");
    let current = param.split('.').try_fold(&doc, |node, key| node.get(key));
    let probe = current.cloned().unwrap_or(Value::Null);
    let mut doc = doc;
    if !set_path(&mut doc, param, probe) {
        return Err(SweepError::UnknownParam(param.to_string()));
    }
    match serde_path_to_error::deserialize::<_, ScenarioConfig>(doc) {
        Err(e) if e.inner().to_string().contains("unknown field") => Err(SweepError::UnknownParam(param.to_string())),
        _ => Ok(()),
    }
}

/// One sub-run per value in `<out>/run_<index>`, then `sweep.csv` and
/// `sweep.json` in `out`. Failed sub-runs are recorded and the sweep continues.
pub fn sweep(base: &ScenarioConfig, param: &str, values: &[Value], out: &Path) -> Result<SweepReport, SweepError> {
    check_param(base, param)?;
    fs::create_dir_all(out).map_err(RunError::from)?;
    let mut runs = Vec::with_capacity(values.len());
    for (index, value) in values.iter().enumerate() {
        let dir = out.join(format!("run_{index}"));
        let mut sub = SubRun {
            index,
            value: value.clone(),
            directory: dir.display().to_string(),
            status: "ok",
            message: None,
            scalars: BTreeMap::new(),
        };
        match substituted(base, param, value, &dir) {
            Err(SweepError::UnknownParam(p)) => return Err(SweepError::UnknownParam(p)),
            Err(e) => {
                log::warn!("sweep value {value}: {e}");
                sub.status = "invalid";
                sub.message = Some(e.to_string());
            }
            Ok(cfg) => {
                let report = run_scenario(&cfg)?;
                if report.status == Status::Failed {
                    sub.status = "failed";
                    sub.message = report.error.map(|f| f.message);
                }
                sub.scalars = report.scalars;
            }
        }
        runs.push(sub);
    }
    let report = SweepReport {
        param: param.to_string(),
        runs,
    };
    write_table(base, &report, out)?;
    fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&report).map_err(RunError::from)?).map_err(RunError::from)?;
    Ok(report)
}

fn write_table(base: &ScenarioConfig, report: &SweepReport, out: &Path) -> Result<(), SweepError> {
    let keys: BTreeSet<&String> = report.runs.iter().flat_map(|r| r.scalars.keys()).collect();
    let mut header = vec!["index", "value", "status"];
    header.extend(keys.iter().map(|k| k.as_str()));
    let file = BufWriter::new(File::create(out.join("sweep.csv")).map_err(RunError::from)?);
    let mut sink = CsvSink::new(file, &base.hash(), &header).map_err(RunError::from)?;
    for r in &report.runs {
        let mut row = vec![r.index.to_string(), compact(&r.value), r.status.to_string()];
        row.extend(keys.iter().map(|k| r.scalars.get(*k).map_or(String::new(), |v| v.to_string())));
        sink.text_row(&row).map_err(RunError::from)?;
    }
    let mut file = sink.finish().map_err(RunError::from)?;
    std::io::Write::flush(&mut file).map_err(RunError::from)?;
    Ok(())
}

fn compact(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
