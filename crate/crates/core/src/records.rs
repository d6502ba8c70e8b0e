//! Run-artifact writers: per-trial JSONL step logs, a stacked noise-trace
//! CSV, and a JSON summary inside one experiment directory.
//!
//! Every writer is deterministic — no timestamps, map keys ordered, floats
//! printed with Rust's shortest-roundtrip formatting — so re-running an
//! experiment with the same seed reproduces each artifact byte for byte.
//! Layout inside an experiment directory:
//!
//! ```text
//! <experiment>/
//!   config.txt        effective run configuration + master seed
//!   trial_00.jsonl    one JSON object per recorded control step
//!   trial_01.jsonl    ...
//!   trace.csv         stacked microphone traces: trial,t,dba
//!   summary.json      aggregate results (schema owned by the caller)
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acoustics::NoiseTrace;
use crate::error::Result;

/// One contact event attached to a [`StepRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    /// Leg index of the foot that touched down.
    pub leg: usize,
    /// Downward foot speed at impact (m/s).
    pub impact_velocity: f64,
    /// Surface name under the foot.
    pub surface: String,
}

/// One recorded control step of an evaluation trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    /// Time since recording started (s).
    pub t: f64,
    /// Trunk world x (m).
    pub x: f64,
    /// Trunk world z (m).
    pub z: f64,
    /// Trunk pitch (rad).
    pub pitch: f64,
    /// Trunk forward speed (m/s).
    pub vx: f64,
    /// Touchdowns that occurred during this step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventRow>,
}

/// Handle to one experiment directory; creates it on construction.
#[derive(Debug, Clone)]
pub struct ExperimentDir {
    dir: PathBuf,
}

impl ExperimentDir {
    /// Creates (or reuses) the directory and returns a writer handle.
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ExperimentDir { dir })
    }

    /// The experiment directory path.
    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// File name used for trial `idx`'s step log.
    pub fn trial_file(idx: usize) -> String {
        format!("trial_{idx:02}.jsonl")
    }

    /// Writes one trial's step log as JSON lines.
    pub fn write_trial_steps(&self, idx: usize, steps: &[StepRow]) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join(Self::trial_file(idx)))?);
        for step in steps {
            serde_json::to_writer(&mut w, step)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the stacked per-trial microphone traces as `trial,t,dba` rows.
    pub fn write_trace_csv(&self, traces: &[NoiseTrace]) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join("trace.csv"))?);
        writeln!(w, "trial,t,dba")?;
        for (idx, trace) in traces.iter().enumerate() {
            for (k, level) in trace.samples.iter().enumerate() {
                writeln!(w, "{idx},{},{level}", k as f64 * trace.dt)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `summary.json` (pretty-printed, trailing newline).
    pub fn write_summary<T: Serialize>(&self, summary: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(summary)?;
        text.push('\n');
        fs::write(self.dir.join("summary.json"), text)?;
        Ok(())
    }

    /// Echoes the effective configuration (with the master seed) so the run
    /// can be reproduced from the directory alone.
    pub fn write_config_echo(&self, text: &str) -> Result<()> {
        fs::write(self.dir.join("config.txt"), text)?;
        Ok(())
    }

    /// Writes an arbitrary named CSV (header plus preformatted rows).
    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join(name))?);
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_steps() -> Vec<StepRow> {
        vec![
            StepRow {
                t: 0.0,
                x: 0.0,
                z: 0.3,
                pitch: 0.01,
                vx: 0.5,
                events: vec![],
            },
            StepRow {
                t: 0.02,
                x: 0.01,
                z: 0.3,
                pitch: 0.0,
                vx: 0.52,
                events: vec![EventRow {
                    leg: 2,
                    impact_velocity: 0.13,
                    surface: "wood".into(),
                }],
            },
        ]
    }

    #[test]
    fn trial_jsonl_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = ExperimentDir::create(tmp.path().join("exp")).unwrap();
        let steps = sample_steps();
        dir.write_trial_steps(3, &steps).unwrap();
        let text = std::fs::read_to_string(dir.path().join("trial_03.jsonl")).unwrap();
        let parsed: Vec<StepRow> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(parsed, steps);
        // Step rows without events omit the field entirely.
        assert!(!text.lines().next().unwrap().contains("events"));
    }

    #[test]
    fn trace_csv_has_one_row_per_sample() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = ExperimentDir::create(tmp.path().join("exp")).unwrap();
        let traces = vec![
            NoiseTrace {
                dt: 0.05,
                samples: vec![55.0, 56.5],
            },
            NoiseTrace {
                dt: 0.05,
                samples: vec![55.0],
            },
        ];
        dir.write_trace_csv(&traces).unwrap();
        let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3);
        assert_eq!(lines[0], "trial,t,dba");
        assert_eq!(lines[1], "0,0,55");
        assert_eq!(lines[2], "0,0.05,56.5");
        assert_eq!(lines[3], "1,0,55");
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = ExperimentDir::create(tmp.path().join("exp")).unwrap();
        let steps = sample_steps();
        let traces = vec![NoiseTrace {
            dt: 0.05,
            samples: vec![55.0, 60.25, 58.125],
        }];

        let read_all = |dir: &ExperimentDir| -> Vec<u8> {
            let mut bytes = Vec::new();
            for name in ["trial_00.jsonl", "trace.csv", "summary.json"] {
                bytes.extend(std::fs::read(dir.path().join(name)).unwrap());
            }
            bytes
        };

        dir.write_trial_steps(0, &steps).unwrap();
        dir.write_trace_csv(&traces).unwrap();
        dir.write_summary(&serde_json::json!({"mnl": 57.25, "trials": 1}))
            .unwrap();
        let first = read_all(&dir);

        dir.write_trial_steps(0, &steps).unwrap();
        dir.write_trace_csv(&traces).unwrap();
        dir.write_summary(&serde_json::json!({"mnl": 57.25, "trials": 1}))
            .unwrap();
        assert_eq!(first, read_all(&dir));
    }
}
