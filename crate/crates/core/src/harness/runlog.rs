//! CSV and JSONL run logs.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::orchestrator::{run_experiment, ExperimentCase, RoundRecord, RunHeader, RunOutput};

pub const CSV_HEADER: &str = "t,zeta_db,mode,n_participants,n_success,loss,accuracy";
pub const MERGED_CSV_HEADER: &str = "case,t,zeta_db,mode,n_participants,n_success,loss,accuracy";

/// One line of a JSONL run log: a header first, then one record per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header(Box<RunHeader>),
    Round(RoundRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLogPaths {
    pub csv: PathBuf,
    pub jsonl: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_row(r: &RoundRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.t,
        r.zeta_db,
        r.mode.as_str(),
        r.participants.len(),
        r.successes.len(),
        r.loss,
        r.accuracy
    )
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_csv(records: &[RoundRecord], path: &Path) -> Result<(), HarnessError> {
    let mut f = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(f, "{CSV_HEADER}")?;
        for r in records {
            writeln!(f, "{}", csv_row(r))?;
        }
        f.flush()
    };
    write().map_err(io_err(path))
}

/// One CSV with a leading `case` column covering every run.
pub fn write_merged_csv(runs: &[RunOutput], path: &Path) -> Result<(), HarnessError> {
    let mut f = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(f, "{MERGED_CSV_HEADER}")?;
        for run in runs {
            for r in &run.records {
                writeln!(f, "{},{}", run.header.case, csv_row(r))?;
            }
        }
        f.flush()
    };
    write().map_err(io_err(path))
}

/// Writes `<stem>.csv` and `<stem>.jsonl` into `out_dir`.
pub fn write_run_log(
    run: &RunOutput,
    out_dir: &Path,
    stem: &str,
) -> Result<RunLogPaths, HarnessError> {
    let csv = out_dir.join(format!("{stem}.csv"));
    let jsonl = out_dir.join(format!("{stem}.jsonl"));
    write_csv(&run.records, &csv)?;
    let mut f = create(&jsonl)?;
    let mut write = || -> std::io::Result<()> {
        let header = LogLine::Header(Box::new(run.header.clone()));
        serde_json::to_writer(&mut f, &header)?;
        writeln!(f)?;
        for r in &run.records {
            serde_json::to_writer(&mut f, &LogLine::Round(r.clone()))?;
            writeln!(f)?;
        }
        f.flush()
    };
    write().map_err(io_err(&jsonl))?;
    Ok(RunLogPaths { csv, jsonl })
}

pub fn read_jsonl(path: &Path) -> Result<RunOutput, HarnessError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        match parsed {
            LogLine::Header(h) if header.is_none() && records.is_empty() => header = Some(*h),
            LogLine::Header(_) => {
                return Err(HarnessError::Format {
                    path: path.to_path_buf(),
                    message: format!("unexpected header on line {}", i + 1),
                })
            }
            LogLine::Round(r) => records.push(r),
        }
    }
    let header = header.ok_or_else(|| HarnessError::Format {
        path: path.to_path_buf(),
        message: "missing header line".into(),
    })?;
    Ok(RunOutput { header, records })
}

/// Runs cases A, B and C with the same config and seed.
pub fn compare_cases(config: &ExperimentConfig) -> Result<Vec<RunOutput>, HarnessError> {
    ExperimentCase::ALL
        .iter()
        .map(|&case| run_experiment(config, case).map_err(HarnessError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::Mode;
    use crate::orchestrator::Simulation;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            area_side_m: 2_000.0,
            n_clients: 6,
            n_rb: 6,
            rounds: 3,
            synthetic_samples: 120,
            synthetic_features: 3,
            synthetic_classes: 3,
            validation_size: 30,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn csv_has_header_plus_rows() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_experiment(&tiny(), ExperimentCase::A).unwrap();
        let paths = write_run_log(&run, dir.path(), "run").unwrap();
        let text = fs::read_to_string(&paths.csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("0,10,risk_agnostic,"));
    }

    #[test]
    fn empty_log_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_csv(&[], &path).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            format!("{CSV_HEADER}\n")
        );
    }

    #[test]
    fn jsonl_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_experiment(&tiny(), ExperimentCase::B).unwrap();
        let paths = write_run_log(&run, dir.path(), "run").unwrap();
        assert_eq!(read_jsonl(&paths.jsonl).unwrap(), run);
    }

    #[test]
    fn unreachable_weights_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sim = Simulation::new(&tiny(), ExperimentCase::A).unwrap();
        let rec = RoundRecord {
            t: 0,
            zeta_db: 3.25,
            mode: Mode::RiskAgnostic,
            participants: vec![0, 1],
            successes: vec![1],
            debias_weights: vec![None, Some(1.0 / 3.0f64.sqrt())],
            loss: 0.1 + 0.2,
            accuracy: 2.0 / 3.0,
            global_objective: 1e-300,
            transition: true,
        };
        let run = RunOutput {
            header: sim.header(),
            records: vec![rec],
        };
        let paths = write_run_log(&run, dir.path(), "r").unwrap();
        assert_eq!(read_jsonl(&paths.jsonl).unwrap(), run);
    }

    #[test]
    fn header_embeds_config_and_partition() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_experiment(&tiny(), ExperimentCase::C).unwrap();
        let paths = write_run_log(&run, dir.path(), "run").unwrap();
        let first = fs::read_to_string(&paths.jsonl)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        let v: serde_json::Value = serde_json::from_str(&first).unwrap();
        assert_eq!(v["kind"], "header");
        assert_eq!(v["config"]["trust_window"], 5);
        assert_eq!(
            v["trust"]["fully_trusted"].as_u64().unwrap() as usize,
            run.header.partition.fully_trusted.len()
        );
    }

    #[test]
    fn missing_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "").unwrap();
        assert!(matches!(
            read_jsonl(&path),
            Err(HarnessError::Format { .. })
        ));
        fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            read_jsonl(&path),
            Err(HarnessError::Json { line: 1, .. })
        ));
    }

    #[test]
    fn unwritable_path_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "").unwrap();
        let err = write_csv(&[], &blocker.join("sub/x.csv")).unwrap_err();
        assert!(err.to_string().contains("file"));
    }

    #[test]
    fn merged_csv_lists_every_case() {
        let dir = tempfile::tempdir().unwrap();
        let runs = compare_cases(&tiny()).unwrap();
        let path = dir.path().join("m.csv");
        write_merged_csv(&runs, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 3);
        for c in ["A,", "B,", "C,"] {
            assert_eq!(text.lines().filter(|l| l.starts_with(c)).count(), 3);
        }
    }
}
