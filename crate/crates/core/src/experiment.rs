//! Runs a configured experiment and writes its artifacts:
//! `adaptive.csv` / `uniform.csv` run logs, `<mode>_final.vtk` and
//! `summary.txt`. Logs of failed runs are still written before the error is
//! returned.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::adaptivity::{run_adaptive, run_uniform, RunFailure, RunLog, RunOutcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::io::{export_vtk, summary_lines, write_csv, write_summary};
use crate::problems::ProblemSpec;

#[derive(Debug, Default)]
pub struct ExperimentReport {
    pub adaptive: Option<RunLog>,
    pub uniform: Option<RunLog>,
    pub files: Vec<PathBuf>,
}

pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    fs::create_dir_all(out_dir)?;
    let mut report = ExperimentReport::default();
    let mut summary = vec![("problem".to_string(), config.problem.variant.name().to_string())];
    let mut first_error = None;

    let mut runs: Vec<(&str, ProblemSpec)> = Vec::new();
    if config.mode.adaptive() {
        runs.push(("adaptive", config.problem.clone()));
    }
    if config.mode.uniform() {
        runs.push(("uniform", config.uniform_problem()));
    }
    for (name, spec) in runs {
        info!("{name} run of {}", spec.variant.name());
        let result = if name == "adaptive" {
            run_adaptive(&spec, &config.adaptive)
        } else {
            run_uniform(&spec, &config.uniform.gammas, config.adaptive.nrdof_max, &config.adaptive.newton)
        };
        let (log, last) = match result {
            Ok(RunOutcome { log, last }) => (log, Some(last)),
            Err(RunFailure { log, error }) => {
                warn!("{name} run failed: {error}");
                summary.push((format!("{name}.error"), error.to_string()));
                first_error.get_or_insert(error);
                (log, None)
            }
        };
        let csv_path = out_dir.join(format!("{name}.csv"));
        let mut csv = BufWriter::new(File::create(&csv_path)?);
        write_csv(&mut csv, &log)?;
        csv.flush()?;
        report.files.push(csv_path);
        summary.extend(summary_lines(name, &log));

        if let (Some(state), true) = (last, config.write_vtk) {
            let est = state.estimate(&spec)?;
            let fields = state.point_fields();
            let point: Vec<(&str, &[f64])> = fields.iter().map(|(k, f)| (*k, f.values.as_slice())).collect();
            let vtk_path = out_dir.join(format!("{name}_final.vtk"));
            export_vtk(&vtk_path, state.mesh(), &point, &[("indicator", &est.per_element)])?;
            report.files.push(vtk_path);
        }
        match name {
            "adaptive" => report.adaptive = Some(log),
            _ => report.uniform = Some(log),
        }
    }

    let summary_path = out_dir.join("summary.txt");
    let mut out = BufWriter::new(File::create(&summary_path)?);
    write_summary(&mut out, &summary)?;
    out.flush()?;
    report.files.push(summary_path);
    match first_error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = parse_config(
            "problem = obstacle\nmode = both\nnrdof_max = 200\ngamma_max = 1e4\nuniform_gamma_count = 2\n",
        )
        .unwrap();
        let report = run_experiment(&config, dir.path()).unwrap();
        for f in ["adaptive.csv", "uniform.csv", "adaptive_final.vtk", "uniform_final.vtk", "summary.txt"] {
            assert!(dir.path().join(f).is_file(), "{f} missing");
        }
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.starts_with("problem=obstacle\n"));
        assert!(summary.contains("adaptive.final_action=stop"));
        let csv = fs::read_to_string(dir.path().join("uniform.csv")).unwrap();
        assert_eq!(csv.lines().count(), report.uniform.unwrap().records.len() + 1);
    }

    #[test]
    fn failed_run_keeps_its_log() {
        let dir = tempfile::tempdir().unwrap();
        // a single Newton step cannot converge the penalized problem
        let config = parse_config("problem = obstacle\nnewton_max_iterations = 1\ngamma0 = 1e6\n").unwrap();
        let err = run_experiment(&config, dir.path()).unwrap_err();
        assert!(matches!(err, crate::Error::NewtonFailed { .. }), "{err}");
        assert!(dir.path().join("adaptive.csv").is_file());
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("adaptive.error="));
    }
}
