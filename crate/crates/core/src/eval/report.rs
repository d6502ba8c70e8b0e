//! Turns a directory of experiment results into plot-ready CSV files and a
//! human-readable report.
//!
//! The generator scans `runs_dir` for experiment subdirectories (each
//! holding a `summary.json` written by the evaluation drivers), then emits
//! into `out_dir`:
//!
//! - `table2.csv` — per-method, per-surface mean ± std noise levels with
//!   one `Average` row per method;
//! - `fig3.csv` — speed-sweep series (level vs. achieved speed);
//! - `fig4.csv` — quiet-factor-sweep series (level and tracking error vs.
//!   the quiet factor);
//! - `fig5_path.csv` — long-walk traces stacked with their experiment name;
//! - `report.txt` — what was read, long-walk threshold verdicts, and an
//!   errors section naming every missing or corrupt result.
//!
//! Generation is deterministic: inputs are processed in sorted order and
//! re-running on the same inputs is byte-identical. Missing or corrupt
//! results never abort the scan — they are listed in the errors section
//! (and `report.txt`), and the caller decides the exit status.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{ExperimentSummary, LongWalkSummary, SurfaceSummary};
use crate::stats::mean;

/// Outcome of one report generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    /// Files written, relative to the output directory.
    pub written: Vec<String>,
    /// Missing or corrupt inputs, as `name: reason` lines. Non-empty
    /// errors should make the caller exit nonzero.
    pub errors: Vec<String>,
    /// Experiment names successfully read.
    pub experiments: Vec<String>,
}

struct Loaded {
    name: String,
    dir: PathBuf,
    summary: ExperimentSummary,
}

fn scan(runs_dir: &Path, errors: &mut Vec<String>) -> Result<Vec<Loaded>> {
    let entries = fs::read_dir(runs_dir).map_err(|e| {
        Error::Report(format!("cannot read results directory {}: {e}", runs_dir.display()))
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Report(format!(
            "no experiment directories under {}",
            runs_dir.display()
        )));
    }

    let mut loaded = Vec::new();
    for dir in dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let summary_path = dir.join("summary.json");
        if !summary_path.exists() {
            errors.push(format!("{name}: missing summary.json"));
            continue;
        }
        let text = match fs::read_to_string(&summary_path) {
            Ok(t) => t,
            Err(e) => {
                errors.push(format!("{name}: unreadable summary.json ({e})"));
                continue;
            }
        };
        match serde_json::from_str::<ExperimentSummary>(&text) {
            Ok(summary) => loaded.push(Loaded { name, dir, summary }),
            Err(e) => errors.push(format!("{name}: corrupt summary.json ({e})")),
        }
    }
    Ok(loaded)
}

/// Key used to group and sort surface rows: method, then quiet factor,
/// then surface name.
fn surface_sort_key(s: &SurfaceSummary) -> (String, u64, String) {
    (s.method.clone(), s.beta.to_bits(), s.surface.clone())
}

fn table2_rows(surfaces: &[&SurfaceSummary]) -> Vec<String> {
    let mut sorted: Vec<&&SurfaceSummary> = surfaces.iter().collect();
    sorted.sort_by_key(|s| surface_sort_key(s));

    let mut rows = Vec::new();
    let mut group: Vec<&SurfaceSummary> = Vec::new();
    let flush = |group: &mut Vec<&SurfaceSummary>, rows: &mut Vec<String>| {
        if group.is_empty() {
            return;
        }
        let col = |f: fn(&SurfaceSummary) -> f64| -> Vec<f64> {
            group.iter().map(|s| f(s)).collect()
        };
        rows.push(format!(
            "{},{},Average,{},{},{},{},{},{}",
            group[0].method,
            group[0].beta,
            mean(&col(|s| s.aggregate.mnl_mean)),
            mean(&col(|s| s.aggregate.mnl_std)),
            mean(&col(|s| s.aggregate.pnl_mean)),
            mean(&col(|s| s.aggregate.pnl_std)),
            group.iter().map(|s| s.aggregate.completed).sum::<usize>(),
            group.iter().map(|s| s.falls).sum::<usize>(),
        ));
        group.clear();
    };
    for s in sorted {
        if let Some(prev) = group.last() {
            if prev.method != s.method || prev.beta.to_bits() != s.beta.to_bits() {
                flush(&mut group, &mut rows);
            }
        }
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            s.method,
            s.beta,
            s.surface,
            s.aggregate.mnl_mean,
            s.aggregate.mnl_std,
            s.aggregate.pnl_mean,
            s.aggregate.pnl_std,
            s.aggregate.completed,
            s.falls,
        ));
        group.push(s);
    }
    flush(&mut group, &mut rows);
    rows
}

fn fig3_rows(sweeps: &[&SurfaceSummary]) -> Vec<String> {
    let mut sorted: Vec<&&SurfaceSummary> = sweeps.iter().collect();
    sorted.sort_by(|a, b| {
        (a.method.as_str(), a.speed_cmd.to_bits(), a.surface.as_str())
            .cmp(&(b.method.as_str(), b.speed_cmd.to_bits(), b.surface.as_str()))
    });
    sorted
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{},{},{}",
                s.method,
                s.speed_cmd,
                s.aggregate.achieved_speed_mean,
                s.aggregate.mnl_mean,
                s.aggregate.mnl_std,
                s.aggregate.pnl_mean,
                s.aggregate.pnl_std,
                s.falls,
            )
        })
        .collect()
}

fn fig4_rows(sweeps: &[&SurfaceSummary]) -> Vec<String> {
    let mut sorted: Vec<&&SurfaceSummary> = sweeps.iter().collect();
    sorted.sort_by(|a, b| {
        (a.method.as_str(), a.beta.to_bits()).cmp(&(b.method.as_str(), b.beta.to_bits()))
    });
    sorted
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{},{},{}",
                s.method,
                s.beta,
                s.aggregate.mnl_mean,
                s.aggregate.mnl_std,
                s.aggregate.pnl_mean,
                s.aggregate.pnl_std,
                s.aggregate.tracking_sqerr_mean,
                s.aggregate.achieved_speed_mean,
            )
        })
        .collect()
}

fn fig5_rows(walks: &[(&str, &Path, &LongWalkSummary)], errors: &mut Vec<String>) -> Vec<String> {
    let mut rows = Vec::new();
    for (name, dir, _) in walks {
        let path_csv = dir.join("path.csv");
        match fs::read_to_string(&path_csv) {
            Ok(text) => {
                for line in text.lines().skip(1) {
                    rows.push(format!("{name},{line}"));
                }
            }
            Err(e) => errors.push(format!("{name}: missing path.csv ({e})")),
        }
    }
    rows
}

fn write_file(out_dir: &Path, name: &str, contents: &str, written: &mut Vec<String>) -> Result<()> {
    fs::write(out_dir.join(name), contents)?;
    written.push(name.to_string());
    Ok(())
}

fn write_csv(
    out_dir: &Path,
    name: &str,
    header: &str,
    rows: &[String],
    written: &mut Vec<String>,
) -> Result<()> {
    let mut text = String::with_capacity(rows.iter().map(|r| r.len() + 1).sum::<usize>() + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_file(out_dir, name, &text, written)
}

/// Reads every experiment under `runs_dir` and writes the report files
/// into `out_dir`. Returns what was written and which inputs were missing
/// or corrupt; a non-empty error list should translate to a nonzero exit.
pub fn generate_report(runs_dir: &Path, out_dir: &Path) -> Result<ReportOutcome> {
    let mut errors = Vec::new();
    let loaded = scan(runs_dir, &mut errors)?;
    fs::create_dir_all(out_dir)?;

    let mut surfaces: Vec<&SurfaceSummary> = Vec::new();
    let mut speed_rows: Vec<&SurfaceSummary> = Vec::new();
    let mut beta_rows: Vec<&SurfaceSummary> = Vec::new();
    let mut walks: Vec<(&str, &Path, &LongWalkSummary)> = Vec::new();
    for l in &loaded {
        match &l.summary {
            ExperimentSummary::Surface(s) => surfaces.push(s),
            ExperimentSummary::SpeedSweep(sw) => speed_rows.extend(sw.rows.iter()),
            ExperimentSummary::BetaSweep(sw) => beta_rows.extend(sw.rows.iter()),
            ExperimentSummary::LongWalk(w) => walks.push((&l.name, &l.dir, w)),
            ExperimentSummary::Calibration(_) => {}
        }
    }
    walks.sort_by(|a, b| a.0.cmp(b.0));

    let mut written = Vec::new();
    write_csv(
        out_dir,
        "table2.csv",
        "method,beta,surface,mnl_mean,mnl_std,pnl_mean,pnl_std,trials_completed,falls",
        &table2_rows(&surfaces),
        &mut written,
    )?;
    write_csv(
        out_dir,
        "fig3.csv",
        "method,speed_cmd,achieved_speed,mnl_mean,mnl_std,pnl_mean,pnl_std,falls",
        &fig3_rows(&speed_rows),
        &mut written,
    )?;
    write_csv(
        out_dir,
        "fig4.csv",
        "method,beta,mnl_mean,mnl_std,pnl_mean,pnl_std,tracking_sqerr,achieved_speed",
        &fig4_rows(&beta_rows),
        &mut written,
    )?;
    write_csv(
        out_dir,
        "fig5_path.csv",
        "experiment,t,x,surface,dba",
        &fig5_rows(&walks, &mut errors),
        &mut written,
    )?;

    // Human-readable companion with the long-walk verdicts and errors.
    let mut report = String::new();
    report.push_str("results report\n==============\n\n");
    report.push_str(&format!("experiments read: {}\n", loaded.len()));
    for l in &loaded {
        let kind = match &l.summary {
            ExperimentSummary::Surface(_) => "surface",
            ExperimentSummary::SpeedSweep(_) => "speed-sweep",
            ExperimentSummary::BetaSweep(_) => "beta-sweep",
            ExperimentSummary::LongWalk(_) => "long-walk",
            ExperimentSummary::Calibration(_) => "calibration",
        };
        report.push_str(&format!("  {} ({kind})\n", l.name));
    }
    if !walks.is_empty() {
        report.push_str("\nlong-walk threshold checks\n");
        for (name, _, w) in &walks {
            report.push_str(&format!(
                "  {name}: overall MNL {:.2} dBA vs {:.1} dBA threshold: {} \
                 (completed: {}, PNL {:.2} dBA, perceived MNL at {:.1} m: {:.2} dBA)\n",
                w.mnl,
                w.threshold_dba,
                if w.below_threshold { "PASS" } else { "FAIL" },
                w.completed,
                w.pnl,
                w.listener_distance_m,
                w.perceived_mnl,
            ));
        }
    }
    report.push_str("\nfiles written\n");
    for f in &written {
        report.push_str(&format!("  {f}\n"));
    }
    report.push_str("\nerrors\n");
    if errors.is_empty() {
        report.push_str("  none\n");
    } else {
        for e in &errors {
            report.push_str(&format!("  {e}\n"));
        }
    }
    write_file(out_dir, "report.txt", &report, &mut written)?;

    Ok(ReportOutcome {
        written,
        errors,
        experiments: loaded.iter().map(|l| l.name.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::NoiseTrace;
    use crate::eval::{
        write_long_walk_outcome, write_surface_outcome, Aggregate, FallPoint, LongWalkOutcome,
        LongWalkSummary, PathPoint, SegmentRow, SurfaceOutcome, SurfaceSummary, SweepSummary,
        TrialRow,
    };
    use crate::records::ExperimentDir;

    fn surface_summary(method: &str, surface: &str, beta: f64, mnl: f64) -> SurfaceSummary {
        SurfaceSummary {
            method: method.into(),
            surface: surface.into(),
            speed_cmd: 0.5,
            beta,
            duration_s: 20.0,
            warmup_s: 2.0,
            seed: 1,
            trials: vec![TrialRow {
                trial: 0,
                seed: 99,
                fell: false,
                fall_time: None,
                mnl: Some(mnl),
                pnl: Some(mnl + 6.0),
                leq: Some(mnl + 1.0),
                achieved_speed: 0.48,
                tracking_sqerr: 0.004,
                impacts: 40,
                duration_s: 20.0,
            }],
            falls: 0,
            aggregate: Aggregate {
                mnl_mean: mnl,
                mnl_std: 0.5,
                pnl_mean: mnl + 6.0,
                pnl_std: 0.7,
                leq_mean: mnl + 1.0,
                achieved_speed_mean: 0.48,
                tracking_sqerr_mean: 0.004,
                completed: 1,
            },
        }
    }

    fn surface_outcome(method: &str, surface: &str, beta: f64, mnl: f64) -> SurfaceOutcome {
        SurfaceOutcome {
            summary: surface_summary(method, surface, beta, mnl),
            traces: vec![NoiseTrace { dt: 0.05, samples: vec![55.0, mnl] }],
            steps: vec![vec![]],
        }
    }

    fn long_walk_outcome() -> LongWalkOutcome {
        let summary = LongWalkSummary {
            method: "learned policy".into(),
            route: vec![("wood".into(), 2.0)],
            speed_cmd: 0.36,
            beta: 1.0,
            listener_distance_m: 2.0,
            seed: 5,
            completed: true,
            fall: None::<FallPoint>,
            duration_s: 6.0,
            distance_m: 2.1,
            mean_speed: 0.35,
            mnl: 62.0,
            pnl: 71.0,
            leq: 64.0,
            perceived_mnl: 50.0,
            threshold_dba: 70.0,
            below_threshold: true,
            segments: vec![SegmentRow {
                segment: 0,
                surface: "wood".into(),
                x_start: 0.0,
                x_end: 2.0,
                samples: 2,
                t_enter: Some(0.0),
                t_exit: Some(0.05),
                mnl: Some(62.0),
                pnl: Some(71.0),
                leq: Some(64.0),
                perceived_mnl: Some(50.0),
                impacts: 3,
            }],
            impacts: 3,
        };
        LongWalkOutcome {
            summary,
            trace: NoiseTrace { dt: 0.05, samples: vec![55.0, 62.0] },
            steps: vec![],
            path: vec![
                PathPoint { t: 0.0, x: 0.0, surface: "wood".into(), dba: 55.0 },
                PathPoint { t: 0.05, x: 0.02, surface: "wood".into(), dba: 62.0 },
            ],
        }
    }

    fn build_runs(root: &Path) {
        write_surface_outcome(
            &root.join("a_wood_beta0"),
            &surface_outcome("learned policy", "wood", 0.0, 68.0),
        )
        .unwrap();
        write_surface_outcome(
            &root.join("b_wood_beta1"),
            &surface_outcome("learned policy", "wood", 1.0, 63.0),
        )
        .unwrap();
        write_surface_outcome(
            &root.join("c_trot_wood"),
            &surface_outcome("scripted-trot baseline", "wood", 0.0, 73.5),
        )
        .unwrap();
        write_surface_outcome(
            &root.join("d_trot_carpet"),
            &surface_outcome("scripted-trot baseline", "carpet", 0.0, 71.9),
        )
        .unwrap();

        let sweep = SweepSummary {
            axis: "beta".into(),
            rows: vec![
                surface_summary("learned policy", "wood", 0.0, 68.0),
                surface_summary("learned policy", "wood", 1.0, 63.0),
            ],
        };
        let dir = ExperimentDir::create(root.join("e_beta_sweep")).unwrap();
        dir.write_summary(&ExperimentSummary::BetaSweep(sweep)).unwrap();

        write_long_walk_outcome(&root.join("f_longwalk"), &long_walk_outcome()).unwrap();
    }

    #[test]
    fn report_emits_all_csvs_with_average_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let runs = tmp.path().join("runs");
        std::fs::create_dir_all(&runs).unwrap();
        build_runs(&runs);
        let out = tmp.path().join("report");
        let outcome = generate_report(&runs, &out).unwrap();
        assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);

        let table2 = std::fs::read_to_string(out.join("table2.csv")).unwrap();
        // One Average row per (method, beta) group: policy β=0, policy β=1,
        // trot β=0.
        assert_eq!(table2.matches(",Average,").count(), 3);
        assert!(table2.contains("scripted-trot baseline,0,carpet,71.9,"));

        let fig4 = std::fs::read_to_string(out.join("fig4.csv")).unwrap();
        assert_eq!(fig4.lines().count(), 1 + 2);
        assert!(fig4.lines().nth(1).unwrap().starts_with("learned policy,0,68,"));

        let fig5 = std::fs::read_to_string(out.join("fig5_path.csv")).unwrap();
        assert!(fig5.contains("f_longwalk,0.05,0.02,wood,62"));

        let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(report.contains("below 70.0") || report.contains("PASS"));
        assert!(report.contains("errors\n  none"));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let runs = tmp.path().join("runs");
        std::fs::create_dir_all(&runs).unwrap();
        build_runs(&runs);
        let out = tmp.path().join("report");

        let read_all = || -> Vec<u8> {
            let mut names: Vec<PathBuf> = std::fs::read_dir(&out)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            names.sort();
            let mut bytes = Vec::new();
            for n in names {
                bytes.extend(std::fs::read(n).unwrap());
            }
            bytes
        };
        generate_report(&runs, &out).unwrap();
        let first = read_all();
        generate_report(&runs, &out).unwrap();
        assert_eq!(first, read_all());
    }

    #[test]
    fn corrupt_and_missing_summaries_are_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let runs = tmp.path().join("runs");
        std::fs::create_dir_all(runs.join("good")).unwrap();
        write_surface_outcome(
            &runs.join("good"),
            &surface_outcome("m", "wood", 0.0, 60.0),
        )
        .unwrap();
        std::fs::create_dir_all(runs.join("no_summary")).unwrap();
        std::fs::create_dir_all(runs.join("bad_json")).unwrap();
        std::fs::write(runs.join("bad_json").join("summary.json"), "{not json").unwrap();

        let out = tmp.path().join("report");
        let outcome = generate_report(&runs, &out).unwrap();
        assert_eq!(outcome.errors.len(), 2);
        assert!(outcome.errors.iter().any(|e| e.starts_with("no_summary:")));
        assert!(outcome.errors.iter().any(|e| e.starts_with("bad_json:")));
        // The good experiment still lands in the table.
        let table2 = std::fs::read_to_string(out.join("table2.csv")).unwrap();
        assert!(table2.contains("m,0,wood,60,"));
        let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(report.contains("corrupt summary.json"));
    }

    #[test]
    fn empty_results_directory_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let runs = tmp.path().join("runs");
        std::fs::create_dir_all(&runs).unwrap();
        let err = generate_report(&runs, &tmp.path().join("out")).unwrap_err();
        assert!(matches!(err, Error::Report(_)));
        let err2 = generate_report(&tmp.path().join("missing"), &tmp.path().join("out")).unwrap_err();
        assert!(matches!(err2, Error::Report(_)));
    }
}
