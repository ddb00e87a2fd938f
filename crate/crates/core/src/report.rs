//! Run artifacts: `results.csv`, `diagnostics.json`, `manifest.json`.
//!
//! The CSV carries no timestamps by default, so the same configs and seed
//! give the same bytes. Cells that do not apply to an experiment hold `NA`;
//! no cell is ever left empty.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::benes_harness::{ExperimentResult, Verdict, HEAVY_TAIL_SHARE, THREAD_TOLERANCE};
use crate::config::{config_hash, config_to_json, hex, Driver};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Last header column; bump when the column set changes.
pub const SCHEMA_COLUMN: &str = "schema_v1";

pub const COLUMNS: [&str; 19] = [
    "experiment_id",
    "control_family",
    "params",
    "measure_kind",
    "rate",
    "T",
    "n_level",
    "num_paths",
    "mean_z",
    "stderr",
    "verdict",
    "entropy_psi",
    "tilted_log",
    "tail_2",
    "tail_10",
    "gronwall_margin",
    "wall_ms",
    "config_hash",
    SCHEMA_COLUMN,
];

pub const NA: &str = "NA";

fn num<S: Scalar>(x: S) -> String {
    format!("{}", x.as_f64())
}

fn opt<S: Scalar>(x: Option<S>) -> String {
    x.map(num).unwrap_or_else(|| NA.into())
}

/// CSV cells for one experiment. `wall_ms` is written only when
/// `with_timing` is set.
pub fn result_cells<S: Scalar>(r: &ExperimentResult<S>, with_timing: bool) -> Vec<String> {
    let c = &r.config;
    let d = &r.diagnostics;
    let rate = match &c.driver {
        Driver::Jump(m) => num(m.rate),
        Driver::Brownian { .. } => NA.into(),
    };
    vec![
        r.id.clone(),
        c.control.family().into(),
        c.control.params(),
        c.driver.kind_name().into(),
        rate,
        num(c.horizon),
        opt(c.stop_level),
        c.num_paths.to_string(),
        num(r.martingale.estimate.mean),
        num(r.martingale.estimate.stderr),
        r.martingale.verdict.to_string(),
        num(d.entropy.psi_mean.mean),
        num(d.entropy.tilted_log.mean),
        opt(d.tail(2.0)),
        opt(d.tail(10.0)),
        opt(d.gronwall.as_ref().map(|g| g.margin)),
        if with_timing {
            r.wall_ms.to_string()
        } else {
            NA.into()
        },
        config_hash(c),
        "1".into(),
    ]
}

/// Writes the header and one row per experiment.
pub fn write_results<S: Scalar, W: Write>(
    out: W,
    results: &[ExperimentResult<S>],
    with_timing: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in results {
        w.write_record(result_cells(r, with_timing))?;
    }
    w.flush()?;
    Ok(())
}

pub fn results_csv_string<S: Scalar>(
    results: &[ExperimentResult<S>],
    with_timing: bool,
) -> Result<String> {
    let mut buf = Vec::new();
    write_results(&mut buf, results, with_timing)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// One parsed row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub control_family: String,
    pub params: String,
    pub measure_kind: String,
    pub rate: Option<f64>,
    pub horizon: f64,
    pub n_level: Option<f64>,
    pub num_paths: usize,
    pub mean_z: f64,
    pub stderr: f64,
    pub verdict: Verdict,
    pub entropy_psi: f64,
    pub tilted_log: f64,
    pub tail_2: f64,
    pub tail_10: f64,
    pub gronwall_margin: Option<f64>,
    pub wall_ms: Option<u64>,
    pub config_hash: String,
}

fn cell_err(column: &str, value: &str) -> Error {
    Error::SchemaViolation {
        path: column.into(),
        message: format!("cannot parse '{value}'"),
    }
}

fn parse_cell<T: std::str::FromStr>(column: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| cell_err(column, value))
}

fn parse_opt<T: std::str::FromStr>(column: &str, value: &str) -> Result<Option<T>> {
    if value == NA {
        Ok(None)
    } else {
        parse_cell(column, value).map(Some)
    }
}

fn parse_verdict(value: &str) -> Result<Verdict> {
    match value {
        "consistent" => Ok(Verdict::Consistent),
        "deviation" => Ok(Verdict::Deviation),
        "inconclusive_heavy_tail" => Ok(Verdict::InconclusiveHeavyTail),
        _ => Err(cell_err("verdict", value)),
    }
}

/// Parses a results file, checking the header against [`COLUMNS`].
pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != COLUMNS {
        return Err(Error::SchemaViolation {
            path: "header".into(),
            message: format!("expected {}", COLUMNS.join(",")),
        });
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            if rec.iter().any(str::is_empty) {
                return Err(Error::SchemaViolation {
                    path: "row".into(),
                    message: "empty cell".into(),
                });
            }
            Ok(ResultRow {
                experiment_id: f(0).into(),
                control_family: f(1).into(),
                params: f(2).into(),
                measure_kind: f(3).into(),
                rate: parse_opt("rate", f(4))?,
                horizon: parse_cell("T", f(5))?,
                n_level: parse_opt("n_level", f(6))?,
                num_paths: parse_cell("num_paths", f(7))?,
                mean_z: parse_cell("mean_z", f(8))?,
                stderr: parse_cell("stderr", f(9))?,
                verdict: parse_verdict(f(10))?,
                entropy_psi: parse_cell("entropy_psi", f(11))?,
                tilted_log: parse_cell("tilted_log", f(12))?,
                tail_2: parse_cell("tail_2", f(13))?,
                tail_10: parse_cell("tail_10", f(14))?,
                gronwall_margin: parse_opt("gronwall_margin", f(15))?,
                wall_ms: parse_opt("wall_ms", f(16))?,
                config_hash: f(17).into(),
            })
        })
        .collect()
}

/// Per-experiment JSON: config, martingale test and diagnostics.
pub fn experiment_json<S: Scalar>(r: &ExperimentResult<S>) -> Value {
    json!({
        "experiment_id": r.id,
        "config": config_to_json(&r.config),
        "martingale": r.martingale,
        "diagnostics": r.diagnostics,
    })
}

/// `{"experiments": [...], "extra": {...}}`; `extra` holds command-specific
/// sections such as compensator tables.
pub fn diagnostics_json<S: Scalar>(results: &[ExperimentResult<S>], extra: Value) -> Value {
    json!({
        "experiments": results.iter().map(experiment_json).collect::<Vec<_>>(),
        "extra": extra,
    })
}

/// Provenance of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub library_version: String,
    pub command: String,
    pub seed: u64,
    /// RFC 3339
    pub timestamp: String,
    pub wall_ms: u64,
    pub threads: usize,
    /// SHA-256 over the per-experiment hashes, in order
    pub config_hash: String,
    pub experiment_hashes: Vec<String>,
    pub experiment_wall_ms: Vec<u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub results_file: String,
    pub results_sha256: String,
}

/// SHA-256 over the ordered per-experiment config hashes.
pub fn combined_config_hash(hashes: &[String]) -> String {
    let mut h = Sha256::new();
    for x in hashes {
        h.update(x.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Tolerances used by a run, keyed by what they control.
pub fn tolerances<S: Scalar>(results: &[ExperimentResult<S>]) -> BTreeMap<String, f64> {
    let mut t = BTreeMap::new();
    t.insert("parallel_relative".into(), THREAD_TOLERANCE);
    t.insert("heavy_tail_weight_share".into(), HEAVY_TAIL_SHARE);
    for r in results {
        t.entry("verdict_threshold_stderr".into())
            .and_modify(|v: &mut f64| *v = v.max(r.config.verdict_threshold.as_f64()))
            .or_insert(r.config.verdict_threshold.as_f64());
        if matches!(r.config.driver, Driver::Jump(_)) {
            t.entry("quad_step".into())
                .and_modify(|v: &mut f64| *v = v.min(r.config.quad_step.as_f64()))
                .or_insert(r.config.quad_step.as_f64());
        }
    }
    t
}

pub struct ManifestInput<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub timestamp: String,
    pub wall_ms: u64,
    pub threads: usize,
    pub results_csv: &'a [u8],
}

pub fn build_manifest<S: Scalar>(
    results: &[ExperimentResult<S>],
    input: ManifestInput<'_>,
) -> RunManifest {
    let hashes: Vec<String> = results.iter().map(|r| config_hash(&r.config)).collect();
    RunManifest {
        library_version: env!("CARGO_PKG_VERSION").into(),
        command: input.command.into(),
        seed: input.seed,
        timestamp: input.timestamp,
        wall_ms: input.wall_ms,
        threads: input.threads,
        config_hash: combined_config_hash(&hashes),
        experiment_hashes: hashes,
        experiment_wall_ms: results.iter().map(|r| r.wall_ms).collect(),
        tolerances: tolerances(results),
        results_file: "results.csv".into(),
        results_sha256: sha256_hex(input.results_csv),
    }
}

/// Writes all three artifacts into `dir`, creating it if needed.
pub fn write_run<S: Scalar>(
    dir: &Path,
    results: &[ExperimentResult<S>],
    extra: Value,
    input: ManifestInput<'_>,
) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), input.results_csv)?;
    let diag = serde_json::to_string_pretty(&diagnostics_json(results, extra))
        .map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("diagnostics.json"), diag)?;
    let manifest = build_manifest(results, input);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}
