//! CSV tables and JSON manifests.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{
    ExperimentSpec, FilterKind, MetricTable, So2Result, So2Spec, SweepParam, TimingRow, TimingSpec,
};
use crate::error::Result;
use crate::par;
use crate::sim::{fmt17, TruthRecord};

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(
        path,
    )?)))
}

fn write_manifest(dir: &Path, name: &str, body: serde_json::Value) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.json"));
    let manifest = json!({
        "experiment": name,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": par::current_threads(),
        "body": body,
    });
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// `<name>.csv` (t, one `δφ̂_t` column per filter), `<name>_<filter>.csv`
/// (per-run time averages and halving times) and `<name>.json`.
pub fn write_attitude(
    dir: &Path,
    spec: &ExperimentSpec,
    table: &MetricTable,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();

    let main = dir.join(format!("{}.csv", spec.name));
    let mut w = csv_writer(&main)?;
    let mut header = vec!["t".to_string()];
    header.extend(table.filters.iter().map(|f| f.filter.name().to_string()));
    w.write_record(&header)?;
    for (n, t) in table.times.iter().enumerate() {
        let mut row = vec![fmt17(*t)];
        row.extend(table.filters.iter().map(|f| fmt17(f.mean_error[n])));
        w.write_record(&row)?;
    }
    w.flush()?;
    paths.push(main);

    for f in &table.filters {
        let path = dir.join(format!("{}_{}.csv", spec.name, f.filter.name()));
        let mut w = csv_writer(&path)?;
        w.write_record(["run", "status", "time_average", "halving_time"])?;
        let halving = f.halving_times(&table.times);
        let mut rows: Vec<(usize, Vec<String>)> = f
            .completed
            .iter()
            .zip(&f.time_averages)
            .zip(&halving)
            .map(|((&run, ta), h)| {
                (
                    run,
                    vec![
                        run.to_string(),
                        "ok".into(),
                        fmt17(*ta),
                        h.map(fmt17).unwrap_or_default(),
                    ],
                )
            })
            .collect();
        rows.extend(f.failures.iter().map(|(run, _)| {
            (
                *run,
                vec![
                    run.to_string(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                ],
            )
        }));
        rows.sort_by_key(|r| r.0);
        for (_, r) in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        paths.push(path);
    }

    let summary: Vec<_> = table
        .filters
        .iter()
        .map(|f| {
            json!({
                "filter": f.filter,
                "completed_runs": f.completed.len(),
                "failures": f.failures,
                "ta_error": f.ta_error,
                "ta_std": f.ta_std,
                "median_halving_time": f.median_halving_time(&table.times),
                "step_seconds": f.step_seconds,
            })
        })
        .collect();
    paths.push(write_manifest(
        dir,
        &spec.name,
        json!({ "spec": spec, "seed": spec.scenario.seed, "filters": summary }),
    )?);
    Ok(paths)
}

/// `<name>.csv` with columns value, filter, ta_error, std, plus `<name>.json`.
pub fn write_sweep(
    dir: &Path,
    name: &str,
    param: SweepParam,
    spec: &ExperimentSpec,
    results: &[(f64, MetricTable)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["value", "filter", "ta_error", "std"])?;
    let mut failures = Vec::new();
    for (v, table) in results {
        for f in &table.filters {
            w.write_record([
                fmt17(*v),
                f.filter.name().to_string(),
                fmt17(f.ta_error),
                fmt17(f.ta_std),
            ])?;
            if !f.failures.is_empty() {
                failures.push(json!({ "value": v, "filter": f.filter, "failures": f.failures }));
            }
        }
    }
    w.flush()?;
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let manifest = write_manifest(
        dir,
        name,
        json!({ "parameter": param, "values": values, "spec": spec, "seed": spec.scenario.seed, "failures": failures }),
    )?;
    Ok(vec![path, manifest])
}

/// `<name>.csv` with columns n, filter, seconds, plus `<name>.json` with the slopes.
pub fn write_timing(
    dir: &Path,
    name: &str,
    spec: &TimingSpec,
    rows: &[TimingRow],
    slopes: &[(FilterKind, f64)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["n", "filter", "seconds"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.filter.name().to_string(),
            fmt17(r.seconds),
        ])?;
    }
    w.flush()?;
    let slopes: Vec<_> = slopes
        .iter()
        .map(|(k, s)| json!({ "filter": k, "loglog_slope": s }))
        .collect();
    let manifest = write_manifest(
        dir,
        name,
        json!({ "spec": spec, "seed": spec.scenario.seed, "slopes": slopes }),
    )?;
    Ok(vec![path, manifest])
}

/// `<name>.csv` in long form (t, bin_center, particles, oracle, moment), plus `<name>.json`.
pub fn write_so2(
    dir: &Path,
    name: &str,
    spec: &So2Spec,
    result: &So2Result,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["t", "bin_center", "particles", "oracle", "moment"])?;
    let width = std::f64::consts::TAU / spec.bins as f64;
    for (k, t) in result.times.iter().enumerate() {
        for b in 0..spec.bins {
            let center = -std::f64::consts::PI + (b as f64 + 0.5) * width;
            w.write_record([
                fmt17(*t),
                fmt17(center),
                fmt17(result.histograms[k][b]),
                fmt17(result.oracle[k][b]),
                fmt17(result.moment[k][b]),
            ])?;
        }
    }
    w.flush()?;
    let manifest = write_manifest(
        dir,
        name,
        json!({ "spec": spec, "seed": spec.seed, "l1": result.l1, "final_l1": result.l1.last() }),
    )?;
    Ok(vec![path, manifest])
}

pub fn write_truth(dir: &Path, name: &str, record: &TruthRecord) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    record.write_csv(BufWriter::new(File::create(&path)?))?;
    Ok(path)
}
