//! Result emission. CSV files carry provenance comment lines followed by a
//! fixed header; JSON files carry a `schema_version` plus the same
//! provenance. Floats are written in shortest round-trip form, so identical
//! inputs produce byte-identical files.

use cbf_core::experiments::{ConvergenceTable, EnergyBudget, InequalityReport};
use cbf_core::integrator::TrajectoryRecord;
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}

impl Provenance {
    fn csv_header(&self) -> String {
        format!(
            "# config_hash={}\n# master_seed={}\n",
            self.config_hash, self.master_seed
        )
    }

    fn json_fields(&self) -> serde_json::Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
        })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)
}

fn emit(
    dir: &Path,
    stem: &str,
    format: Format,
    csv_body: String,
    json_value: serde_json::Value,
) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join(format!("{stem}.csv"));
        write_file(&path, csv_body.as_bytes())?;
        written.push(path);
    }
    if format.json() {
        let path = dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(&json_value).expect("serializable");
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn merge(base: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    let mut obj = base;
    if let (Some(o), Some(e)) = (obj.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            o.insert(k.clone(), v.clone());
        }
    }
    obj
}

pub fn write_convergence(
    dir: &Path,
    stem: &str,
    table: &ConvergenceTable,
    prov: &Provenance,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    let mut csv = prov.csv_header();
    csv.push_str("n,samples,err,ci_half_width\n");
    for row in &table.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            row.level, row.samples, row.err, row.ci_half_width
        );
    }
    let rows: Vec<_> = table
        .rows
        .iter()
        .map(|r| {
            json!({
                "n": r.level,
                "samples": r.samples,
                "err": r.err,
                "ci_half_width": r.ci_half_width,
            })
        })
        .collect();
    let value = merge(
        prov.json_fields(),
        json!({ "rows": rows, "failures": table.failures }),
    );
    emit(dir, stem, format, csv, value)
}

pub fn write_reports(
    dir: &Path,
    stem: &str,
    reports: &[InequalityReport],
    prov: &Provenance,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    let mut csv = prov.csv_header();
    csv.push_str("name,trials,worst_margin,tolerance,pass\n");
    for r in reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.name, r.trials, r.worst_margin, r.tolerance, r.pass
        );
    }
    let rows: Vec<_> = reports
        .iter()
        .map(|r| {
            json!({
                "name": r.name,
                "trials": r.trials,
                "worst_margin": r.worst_margin,
                "tolerance": r.tolerance,
                "pass": r.pass,
            })
        })
        .collect();
    let value = merge(prov.json_fields(), json!({ "reports": rows }));
    emit(dir, stem, format, csv, value)
}

pub struct SkeletonRow {
    pub seed: u64,
    pub family: String,
    pub level: u32,
    pub sup_deviation: f64,
}

pub fn write_skeleton(
    dir: &Path,
    stem: &str,
    rows: &[SkeletonRow],
    prov: &Provenance,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    let mut csv = prov.csv_header();
    csv.push_str("seed,family,n,sup_deviation\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            r.seed, r.family, r.level, r.sup_deviation
        );
    }
    let jrows: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "seed": r.seed,
                "family": r.family,
                "n": r.level,
                "sup_deviation": r.sup_deviation,
            })
        })
        .collect();
    let value = merge(prov.json_fields(), json!({ "rows": jrows }));
    emit(dir, stem, format, csv, value)
}

pub fn write_trajectory(
    dir: &Path,
    stem: &str,
    rec: &TrajectoryRecord,
    budget: &EnergyBudget,
    prov: &Provenance,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    let dt = rec.t_horizon / (1u64 << rec.dt_log2) as f64;
    let mut csv = prov.csv_header();
    csv.push_str("step,time,h_norm,v_norm_sq,lp_pow,cumulative_energy_residual\n");
    for (i, h) in rec.h_series.iter().enumerate() {
        let cum = if i == 0 { 0.0 } else { budget.cumulative[i - 1] };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            i,
            i as f64 * dt,
            h,
            rec.v_sq_series[i],
            rec.lp_pow_series[i],
            cum
        );
    }
    let value = merge(
        prov.json_fields(),
        json!({
            "t_horizon": rec.t_horizon,
            "dt_log2": rec.dt_log2,
            "steps": rec.h_series.len() - 1,
            "stability_number": rec.stability_number,
            "final_h_norm": rec.h_series.last(),
            "sup_h_norm": rec.h_series.iter().cloned().fold(0.0f64, f64::max),
            "max_abs_step_residual": budget.max_abs_step,
            "max_abs_cumulative_residual": budget.max_abs_cumulative,
            "energy_budget": budget.budget,
        }),
    );
    emit(dir, stem, format, csv, value)
}
