use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, OutputFormat};
use super::{DerivedRun, JobResult, RunReport};
use crate::error::Result;

/// Trace CSV header. Bump [`TRACE_SCHEMA_VERSION`] when it changes.
pub const TRACE_COLUMNS: &[&str] = &[
    "run_name",
    "seed",
    "iteration",
    "suboptimality",
    "suboptimality_normalized",
    "entropy_mean",
    "kl_mean",
    "condition_residual_min",
    "gap_mean",
    "diverged",
];
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub suboptimality: Option<f64>,
    pub suboptimality_normalized: Option<f64>,
    pub entropy_mean: Option<f64>,
    pub kl_mean: Option<f64>,
    pub condition_residual_min: Option<f64>,
    pub gap_mean: Option<f64>,
    pub diverged: bool,
}

impl TraceRow {
    /// Terminal row of a divergent run; numeric fields are empty.
    pub fn divergence_marker(iteration: usize) -> Self {
        TraceRow {
            iteration,
            suboptimality: None,
            suboptimality_normalized: None,
            entropy_mean: None,
            kl_mean: None,
            condition_residual_min: None,
            gap_mean: None,
            diverged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub run_name: String,
    pub iteration: usize,
    pub iqm_suboptimality: f64,
    pub iqm_suboptimality_normalized: f64,
    pub num_seeds: usize,
}

/// 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| crate::error::Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    trace_schema_version: u32,
    config: &'a ExperimentConfig,
    derived: &'a [DerivedRun],
    diverged: Vec<DivergedEntry<'a>>,
    files: Vec<String>,
}

#[derive(Serialize)]
struct DivergedEntry<'a> {
    run_name: &'a str,
    seed: u64,
    iteration: usize,
}

/// Writes every artifact and returns the paths in a fixed order.
pub(super) fn write_all(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: &[JobResult],
    aggregate: &[AggregateRow],
    derived: &[DerivedRun],
) -> Result<Vec<PathBuf>> {
    let csv = config.outputs.formats.contains(&OutputFormat::Csv);
    let json = config.outputs.formats.contains(&OutputFormat::Json);
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();

    if csv {
        let traces = out_dir.join("traces");
        fs::create_dir_all(&traces)?;
        for job in jobs {
            let path = traces.join(format!("{}__seed{}.csv", job.run_name, job.seed));
            let rows = job.rows.iter().map(|r| {
                vec![
                    job.run_name.clone(),
                    job.seed.to_string(),
                    r.iteration.to_string(),
                    opt(r.suboptimality),
                    opt(r.suboptimality_normalized),
                    opt(r.entropy_mean),
                    opt(r.kl_mean),
                    opt(r.condition_residual_min),
                    opt(r.gap_mean),
                    r.diverged.to_string(),
                ]
            });
            write_csv(&path, TRACE_COLUMNS, rows)?;
            files.push(path);
            if let Some(tables) = &job.tables {
                let path = traces.join(format!("{}__seed{}__tables.csv", job.run_name, job.seed));
                let rows = tables.iter().flat_map(|(it, psi, pi)| {
                    let (ns, na) = psi.shape();
                    (0..ns).flat_map(move |s| {
                        (0..na).map(move |a| {
                            vec![
                                job.run_name.clone(),
                                job.seed.to_string(),
                                it.to_string(),
                                s.to_string(),
                                a.to_string(),
                                format_float(psi.get(s, a)),
                                format_float(pi.prob(s, a)),
                            ]
                        })
                    })
                });
                write_csv(&path, &["run_name", "seed", "iteration", "state", "action", "psi", "policy"], rows)?;
                files.push(path);
            }
        }

        let path = out_dir.join("aggregate.csv");
        let rows = aggregate.iter().map(|r| {
            vec![
                r.run_name.clone(),
                r.iteration.to_string(),
                format_float(r.iqm_suboptimality),
                format_float(r.iqm_suboptimality_normalized),
                r.num_seeds.to_string(),
            ]
        });
        write_csv(
            &path,
            &["run_name", "iteration", "iqm_suboptimality", "iqm_suboptimality_normalized", "num_seeds"],
            rows,
        )?;
        files.push(path);

        let errors = out_dir.join("errors");
        fs::create_dir_all(&errors)?;
        for spec in &config.runs {
            let path = errors.join(format!("{}.csv", spec.name));
            let rows = jobs.iter().filter(|j| j.run_name == spec.name).flat_map(|j| {
                j.error_rows.iter().map(move |r| {
                    vec![
                        j.run_name.clone(),
                        j.seed.to_string(),
                        r.iteration.to_string(),
                        format_float(r.cross),
                        format_float(r.cross_identity),
                        format_float(r.entropy),
                        format_float(r.entropy_identity),
                        format_float(r.total),
                        r.premise.to_string(),
                    ]
                })
            });
            write_csv(
                &path,
                &[
                    "run_name",
                    "seed",
                    "iteration",
                    "cross",
                    "cross_identity",
                    "entropy",
                    "entropy_identity",
                    "total",
                    "premise",
                ],
                rows,
            )?;
            files.push(path);
        }
    }

    if json {
        let reports = out_dir.join("reports");
        fs::create_dir_all(&reports)?;
        for (spec, d) in config.runs.iter().zip(derived) {
            let seeds: Vec<&JobResult> = jobs.iter().filter(|j| j.run_name == spec.name).collect();
            let first = seeds.first().expect("at least one seed");
            let report = RunReport {
                run_name: spec.name.clone(),
                tau: d.tau,
                lambda: d.lambda,
                c_f: first.c_f,
                delta_bar_g: first.delta_bar_g,
                width: first.width,
                seeds: seeds.iter().map(|j| j.bounds.clone()).collect(),
            };
            let path = reports.join(format!("{}.json", spec.name));
            write_json(&path, &report)?;
            files.push(path);
        }
    }

    let manifest_path = out_dir.join("manifest.json");
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        trace_schema_version: TRACE_SCHEMA_VERSION,
        config,
        derived,
        diverged: jobs
            .iter()
            .filter_map(|j| {
                j.diverged_at.map(|iteration| DivergedEntry {
                    run_name: &j.run_name,
                    seed: j.seed,
                    iteration,
                })
            })
            .collect(),
        files: files
            .iter()
            .map(|p| p.strip_prefix(out_dir).unwrap_or(p).display().to_string())
            .collect(),
    };
    write_json(&manifest_path, &manifest)?;
    files.push(manifest_path);
    Ok(files)
}
