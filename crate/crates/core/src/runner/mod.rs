//! Seeded batch experiments: config parsing, parallel execution of the
//! run × seed matrix, and deterministic CSV/JSON artifacts.

mod config;
mod output;

pub use config::{
    preset, EnvironmentConfig, ExperimentConfig, OutputConfig, OutputFormat, RunSpec, TraceGranularity, Tolerances,
    PRESETS,
};
pub use output::{format_float, AggregateRow, TraceRow, TRACE_COLUMNS};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    error_terms, gap_summary, iqm, normalize_curve, prop1_bound_check_against, suboptimality_value, BoundFlags,
    ErrorTermRow,
};
use crate::error::{Error, Result};
use crate::mdp::{iteration_cap, TabularMdp};
use crate::soft_ops::{soft_optimal_value, soft_optimum, RegParams, SoftOptimum};
use crate::solvers::{run_scheme, RunTrace};
use crate::tables::{PolicyTable, QTable, ValueVector};

/// Oracles shared by every seed of one run.
struct RunOracles {
    params: RegParams,
    v_star_alpha: ValueVector,
    tau_optimum: SoftOptimum,
}

/// Per-seed bound summary written to the run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedBounds {
    pub seed: u64,
    pub converged: bool,
    pub diverged_at: Option<usize>,
    pub min_upper_slack: f64,
    pub min_lower_slack: f64,
    pub min_tau_slack: f64,
    pub psi_upper_slack: Option<f64>,
    pub psi_lower_slack: Option<f64>,
    pub satisfied: BoundFlags,
    pub cross_term_violations: usize,
    pub entropy_term_violations: usize,
    pub premise_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub run_name: String,
    pub tau: f64,
    pub lambda: f64,
    pub c_f: f64,
    pub delta_bar_g: f64,
    pub width: f64,
    pub seeds: Vec<SeedBounds>,
}

/// Everything one (run, seed) job produces.
pub struct JobResult {
    pub run_name: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub diverged_at: Option<usize>,
    pub bounds: SeedBounds,
    pub c_f: f64,
    pub delta_bar_g: f64,
    pub width: f64,
    pub error_rows: Vec<ErrorTermRow>,
    pub tables: Option<Vec<(usize, QTable, PolicyTable)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub aggregate: Vec<AggregateRow>,
    /// `(run, seed, iteration)` of every divergent job.
    pub diverged: Vec<(String, u64, usize)>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    /// 0 on success, 2 if any run diverged.
    pub fn exit_code(&self) -> i32 {
        if self.diverged.is_empty() {
            0
        } else {
            2
        }
    }

    /// IQM normalized suboptimality of one run, indexed by iteration.
    pub fn curve(&self, run_name: &str) -> Vec<f64> {
        self.aggregate
            .iter()
            .filter(|r| r.run_name == run_name)
            .map(|r| r.iqm_suboptimality_normalized)
            .collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn run_job(
    cfg: &ExperimentConfig,
    mdp: &TabularMdp,
    spec: &RunSpec,
    oracles: &RunOracles,
    seed: u64,
) -> Result<JobResult> {
    let solver = cfg.solver_config(spec, seed)?;
    let trace = run_scheme(mdp, &solver)?;
    let tau = oracles.params.tau();
    let opt = &oracles.tau_optimum;

    let raw = trace
        .records
        .iter()
        .map(|r| suboptimality_value(mdp, r.policy.as_ref().expect("tables kept"), tau, &opt.v).map(|d| d.max(0.0)))
        .collect::<Result<Vec<f64>>>()?;
    let normalized = normalize_curve(&raw);
    let mut rows: Vec<TraceRow> = trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| TraceRow {
            iteration: r.iteration,
            suboptimality: Some(raw[i]),
            suboptimality_normalized: Some(normalized[i]),
            entropy_mean: Some(r.entropy.mean()),
            kl_mean: r.kl.as_ref().map(|k| mean(&k.0)),
            condition_residual_min: Some(r.condition_residual.min()),
            gap_mean: Some(gap_summary(r.iteration, r.psi.as_ref().expect("tables kept"), &r.v).mean),
            diverged: false,
        })
        .collect();
    let diverged_at = trace.diverged.as_ref().map(|d| d.iteration);
    if let Some(it) = diverged_at {
        rows.push(TraceRow::divergence_marker(it));
    }

    let (f, g) = (trace.f, trace.g);
    let report = prop1_bound_check_against(
        mdp,
        &trace,
        oracles.params,
        &f,
        &g,
        &oracles.v_star_alpha,
        &opt.v,
        cfg.tolerances.bounds,
    )?;
    let errors = error_terms(mdp, &trace, oracles.params, &f, &g, &opt.policy, &opt.advantage)?;
    let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    let bounds = SeedBounds {
        seed,
        converged: report.converged,
        diverged_at,
        min_upper_slack: min(&report.upper_slack),
        min_lower_slack: min(&report.lower_slack),
        min_tau_slack: min(&report.tau_slack),
        psi_upper_slack: report.psi_upper_slack,
        psi_lower_slack: report.psi_lower_slack,
        satisfied: report.satisfied,
        cross_term_violations: errors.cross_violations(cfg.tolerances.bounds).len(),
        entropy_term_violations: errors.entropy_violations(cfg.tolerances.bounds).len(),
        premise_iterations: errors.rows.iter().filter(|r| r.premise).count(),
    };
    let tables = (cfg.outputs.trace_granularity == TraceGranularity::Full).then(|| collect_tables(&trace));
    Ok(JobResult {
        run_name: spec.name.clone(),
        seed,
        rows,
        diverged_at,
        bounds,
        c_f: report.c_f,
        delta_bar_g: report.delta_bar_g,
        width: report.width,
        error_rows: errors.rows,
        tables,
    })
}

fn collect_tables(trace: &RunTrace) -> Vec<(usize, QTable, PolicyTable)> {
    trace
        .records
        .iter()
        .filter_map(|r| Some((r.iteration, r.psi.clone()?, r.policy.clone()?)))
        .collect()
}

/// IQM across seeds per (run, iteration), over the seeds that reached the
/// iteration.
pub fn aggregate(config: &ExperimentConfig, jobs: &[JobResult]) -> Result<Vec<AggregateRow>> {
    let mut out = Vec::new();
    for spec in &config.runs {
        let runs: Vec<&JobResult> = jobs.iter().filter(|j| j.run_name == spec.name).collect();
        for it in 0..=config.iterations {
            let mut raw = Vec::new();
            let mut norm = Vec::new();
            for j in &runs {
                if let Some(row) = j.rows.get(it).filter(|r| !r.diverged) {
                    raw.push(row.suboptimality.unwrap_or(f64::NAN));
                    norm.push(row.suboptimality_normalized.unwrap_or(f64::NAN));
                }
            }
            if raw.is_empty() {
                break;
            }
            out.push(AggregateRow {
                run_name: spec.name.clone(),
                iteration: it,
                iqm_suboptimality: iqm(&raw)?,
                iqm_suboptimality_normalized: iqm(&norm)?,
                num_seeds: raw.len(),
            });
        }
    }
    Ok(out)
}

/// Runs the whole matrix and writes artifacts under `out_dir`.
///
/// `jobs` caps the worker count; `None` uses every available core. The
/// artifacts do not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, jobs: Option<usize>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mdp = config.environment.build()?;
    let oracle_tol = config.tolerances.oracle;

    let oracles = config
        .runs
        .iter()
        .map(|spec| {
            let params = RegParams::new(spec.alpha, spec.kappa)?;
            Ok(RunOracles {
                params,
                v_star_alpha: soft_optimal_value(&mdp, params.alpha(), oracle_tol)?,
                tau_optimum: soft_optimum(&mdp, params.tau(), oracle_tol)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let matrix: Vec<(usize, u64)> = (0..config.runs.len())
        .flat_map(|r| config.seeds.iter().map(move |&s| (r, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
    let results: Vec<JobResult> = pool.install(|| {
        matrix
            .par_iter()
            .map(|&(r, seed)| run_job(config, &mdp, &config.runs[r], &oracles[r], seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let aggregate = aggregate(config, &results)?;
    let files = output::write_all(config, out_dir, &results, &aggregate, &oracles_summary(config, &mdp))?;
    let diverged = results
        .iter()
        .filter_map(|j| j.diverged_at.map(|it| (j.run_name.clone(), j.seed, it)))
        .collect();
    Ok(ExperimentOutcome {
        out_dir: out_dir.to_path_buf(),
        aggregate,
        diverged,
        files,
    })
}

/// Derived quantities per run, as shown by `describe` and the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedRun {
    pub name: String,
    pub scheme: crate::solvers::Scheme,
    pub tau: f64,
    pub lambda: f64,
    pub v_max_tau: f64,
    pub f: String,
    pub g: String,
    pub bounding_valid: bool,
}

fn oracles_summary(config: &ExperimentConfig, mdp: &TabularMdp) -> Vec<DerivedRun> {
    config
        .runs
        .iter()
        .map(|spec| {
            let params = RegParams::new(spec.alpha, spec.kappa).expect("validated");
            let solver = config.solver_config(spec, 0).expect("validated");
            let (f, g) = solver.effective_bounding();
            DerivedRun {
                name: spec.name.clone(),
                scheme: spec.scheme,
                tau: params.tau(),
                lambda: params.lambda(),
                v_max_tau: mdp.v_max(params.tau()),
                f: f.to_string(),
                g: g.to_string(),
                bounding_valid: f.is_valid() && g.is_valid(),
            }
        })
        .collect()
}

/// Up to 12 decimals, trailing zeros dropped.
fn short(x: f64) -> String {
    let s = format!("{:.12}", x);
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Human-readable plan of a config, without running it.
pub fn describe(config: &ExperimentConfig) -> Result<String> {
    use std::fmt::Write;
    config.validate()?;
    let mdp = config.environment.build()?;
    let mut s = String::new();
    let env = match &config.environment {
        EnvironmentConfig::Gridworld(g) => format!("gridworld {}x{}, slip {}", g.width, g.height, g.slip_probability),
        EnvironmentConfig::RandomMdp { num_states, num_actions, seed, .. } => {
            format!("random MDP |S|={} |A|={} seed {}", num_states, num_actions, seed)
        }
    };
    let _ = writeln!(s, "environment: {}", env);
    let _ = writeln!(
        s,
        "  |S|={} |A|={} discount={} r_max={}",
        mdp.num_states(),
        mdp.num_actions(),
        mdp.discount(),
        mdp.r_max()
    );
    let _ = writeln!(
        s,
        "matrix: {} runs x {} seeds, {} iterations each ({} scheme steps)",
        config.runs.len(),
        config.seeds.len(),
        config.iterations,
        config.runs.len() * config.seeds.len() * config.iterations
    );
    for d in oracles_summary(config, &mdp) {
        let oracle = iteration_cap(mdp.discount(), config.tolerances.oracle, mdp.v_max(d.tau));
        let _ = writeln!(
            s,
            "run {}: scheme={:?} tau={} lambda={} V^tau_max={} f={} g={}{}",
            d.name,
            d.scheme,
            short(d.tau),
            short(d.lambda),
            short(d.v_max_tau),
            d.f,
            d.g,
            if d.bounding_valid { "" } else { " (invalid bounding, allowed)" }
        );
        let _ = writeln!(s, "  oracle value iteration: at most {} sweeps", oracle);
    }
    let _ = writeln!(
        s,
        "outputs: {} ({:?}, {:?})",
        config.outputs.directory.display(),
        config.outputs.formats,
        config.outputs.trace_granularity
    );
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(iterations: usize) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
  "environment": {{"type": "random_mdp", "num_states": 4, "num_actions": 3, "seed": 2, "discount": 0.9}},
  "runs": [
    {{"name": "mvi", "scheme": "mvi", "alpha": 0.1, "kappa": 0.8}},
    {{"name": "bal", "scheme": "bal", "alpha": 0.1, "kappa": 0.8, "f": {{"type": "tanh", "scale": 1.0}}, "g": {{"type": "tanh", "scale": 1.0}}}}
  ],
  "seeds": [0, 1, 2, 3, 4],
  "iterations": {}
}}"#,
            iterations
        ))
        .unwrap()
    }

    #[test]
    fn zero_iterations_write_init_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(0);
        let out = run_experiment(&cfg, dir.path(), Some(1)).unwrap();
        assert_eq!(out.exit_code(), 0);
        let text = std::fs::read_to_string(dir.path().join("traces/mvi__seed0.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(out.curve("mvi"), vec![1.0]);
    }

    #[test]
    fn worker_count_does_not_change_bytes() {
        let cfg = small_config(15);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let oa = run_experiment(&cfg, a.path(), Some(1)).unwrap();
        let ob = run_experiment(&cfg, b.path(), Some(4)).unwrap();
        assert_eq!(oa.files, ob.files.iter().map(|p| a.path().join(p.strip_prefix(b.path()).unwrap())).collect::<Vec<_>>());
        for f in &oa.files {
            let rel = f.strip_prefix(a.path()).unwrap();
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
        }
    }

    #[test]
    fn describe_lists_runs() {
        let text = describe(&small_config(3)).unwrap();
        assert!(text.contains("run mvi"));
        assert!(text.contains("2 runs x 5 seeds"));
    }

    #[test]
    fn preset_describe_shows_derived_temperatures() {
        let cfg = ExperimentConfig::from_json(preset("gridworld-d1").unwrap()).unwrap();
        let text = describe(&cfg).unwrap();
        let d = oracles_summary(&cfg, &cfg.environment.build().unwrap());
        assert!((d[0].tau - 0.0002).abs() < 1e-15);
        assert!((d[0].lambda - 0.0198).abs() < 1e-15);
        assert!(text.contains("tau=0.0002"), "{}", text);
    }
}
