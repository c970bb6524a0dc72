//! Run directories: spec snapshot, append-only event log, artifact index
//! and report.

use std::fs;
use std::io;
use std::path::Path;

use super::events::{parse_event_log, Event};
use super::report::RunReport;
use crate::artifacts::ArtifactEntry;

pub const SPEC_FILE: &str = "spec.yaml";
pub const SPEC_HASH_FILE: &str = "spec.sha256";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const ARTIFACTS_FILE: &str = "artifacts.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub spec_yaml: String,
    pub spec_sha256: String,
    pub events: Vec<Event>,
    pub artifacts: Vec<ArtifactEntry>,
    pub report: RunReport,
}

pub fn write_run_dir(dir: &Path, rec: &RunRecord) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SPEC_FILE), &rec.spec_yaml)?;
    fs::write(dir.join(SPEC_HASH_FILE), format!("{}\n", rec.spec_sha256))?;
    let mut log = String::new();
    for e in &rec.events {
        log.push_str(&e.to_json_line());
        log.push('\n');
    }
    fs::write(dir.join(EVENTS_FILE), log)?;
    let index = serde_json::to_string_pretty(&rec.artifacts).expect("index serializes") + "\n";
    fs::write(dir.join(ARTIFACTS_FILE), index)?;
    fs::write(dir.join(REPORT_FILE), rec.report.to_json())
}

fn invalid(e: impl ToString) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

/// Reads a run directory back; the report is rebuilt from the event log
/// and must match the stored one.
pub fn load_run_dir(dir: &Path) -> io::Result<RunRecord> {
    let spec_yaml = fs::read_to_string(dir.join(SPEC_FILE))?;
    let spec_sha256 = fs::read_to_string(dir.join(SPEC_HASH_FILE))?.trim().to_string();
    let events = parse_event_log(&fs::read_to_string(dir.join(EVENTS_FILE))?).map_err(invalid)?;
    let artifacts: Vec<ArtifactEntry> =
        serde_json::from_str(&fs::read_to_string(dir.join(ARTIFACTS_FILE))?).map_err(invalid)?;
    let stored: RunReport = serde_json::from_str(&fs::read_to_string(dir.join(REPORT_FILE))?).map_err(invalid)?;
    let run = events
        .first()
        .map(|e| e.run.clone())
        .ok_or_else(|| invalid("empty event log"))?;
    let report = RunReport::from_events(&run, &events).map_err(invalid)?;
    if report != stored {
        return Err(invalid("report.json does not match the event log"));
    }
    Ok(RunRecord {
        spec_yaml,
        spec_sha256,
        events,
        artifacts,
        report,
    })
}
