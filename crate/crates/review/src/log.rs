//! Append-only JSONL decision log.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use affordkit::Point2D;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Adjust,
}

/// One line of the decision log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub record_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub adjusted_points: Vec<Point2D>,
    pub reviewer: String,
    /// Seconds since the Unix epoch (UTC), assigned by the server.
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// Client payload: a decision without id and timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBody {
    pub verdict: Verdict,
    #[serde(default)]
    pub adjusted_points: Vec<Point2D>,
    pub reviewer: String,
    #[serde(default)]
    pub notes: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("decision log {path}: {source}")]
pub struct LogError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// Contents of a log file as read at startup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Replay {
    pub decisions: Vec<ReviewDecision>,
    /// 1-based numbers of lines that did not parse (e.g. a torn final write).
    pub skipped_lines: Vec<usize>,
}

pub fn parse_log(text: &str) -> Replay {
    let mut replay = Replay::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ReviewDecision>(line) {
            Ok(d) => replay.decisions.push(d),
            Err(_) => replay.skipped_lines.push(i + 1),
        }
    }
    replay
}

/// Reads a log without opening it for writing. A missing file is empty.
pub fn read_log(path: &Path) -> Result<Replay, LogError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(parse_log(&text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Replay::default()),
        Err(source) => Err(LogError {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Single writer over the log file. Every append is flushed to disk before
/// it returns.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
    last_timestamp: f64,
}

impl DecisionLog {
    /// Opens (creating if needed) and replays the log. A torn final line is
    /// left in place and terminated so later appends start on a fresh line.
    pub fn open(path: &Path) -> Result<(Self, Replay), LogError> {
        let err = |source| LogError {
            path: path.to_path_buf(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(err)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(err)?;
        if !text.is_empty() && !text.ends_with('\n') {
            file.write_all(b"\n").map_err(err)?;
            file.sync_data().map_err(err)?;
        }
        let replay = parse_log(&text);
        let last_timestamp = replay
            .decisions
            .iter()
            .map(|d| d.timestamp)
            .fold(0.0, f64::max);
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                last_timestamp,
            },
            replay,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Stamps and durably appends a decision. Timestamps never decrease
    /// within the log even if the wall clock steps back.
    pub fn append(&mut self, record_id: &str, body: DecisionBody) -> Result<ReviewDecision, LogError> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let timestamp = now.max(self.last_timestamp);
        let decision = ReviewDecision {
            record_id: record_id.to_string(),
            verdict: body.verdict,
            adjusted_points: body.adjusted_points,
            reviewer: body.reviewer,
            timestamp,
            notes: body.notes,
        };
        let mut line = serde_json::to_vec(&decision).expect("decision serializes");
        line.push(b'\n');
        let err = |source| LogError {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(err)?;
        self.file.sync_data().map_err(err)?;
        self.last_timestamp = timestamp;
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(verdict: Verdict) -> DecisionBody {
        DecisionBody {
            verdict,
            adjusted_points: Vec::new(),
            reviewer: "ana".into(),
            notes: None,
        }
    }

    #[test]
    fn appends_replay_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let (mut log, replay) = DecisionLog::open(&path).unwrap();
        assert!(replay.decisions.is_empty());
        let a = log.append("r1", body(Verdict::Accept)).unwrap();
        let b = log.append("r2", body(Verdict::Reject)).unwrap();
        assert!(b.timestamp >= a.timestamp);
        drop(log);
        let (_, replay) = DecisionLog::open(&path).unwrap();
        assert_eq!(replay.decisions, vec![a, b]);
    }

    #[test]
    fn torn_tail_is_skipped_and_never_rewritten() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let (mut log, _) = DecisionLog::open(&path).unwrap();
        let a = log.append("r1", body(Verdict::Accept)).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"record_id\":\"r2\",\"verd").unwrap();
        drop(f);
        let before = std::fs::read(&path).unwrap();

        let (mut log, replay) = DecisionLog::open(&path).unwrap();
        assert_eq!(replay.decisions, vec![a.clone()]);
        assert_eq!(replay.skipped_lines, vec![2]);
        let c = log.append("r3", body(Verdict::Reject)).unwrap();
        let after = std::fs::read(&path).unwrap();
        assert_eq!(&after[..before.len()], &before[..]);
        assert_eq!(read_log(&path).unwrap().decisions, vec![a, c]);
    }

    #[test]
    fn body_rejects_server_fields() {
        let r: Result<DecisionBody, _> =
            serde_json::from_str(r#"{"verdict":"accept","reviewer":"x","timestamp":1}"#);
        assert!(r.is_err());
        let ok: DecisionBody = serde_json::from_str(r#"{"verdict":"adjust","reviewer":"x","adjusted_points":[[1,2]]}"#).unwrap();
        assert_eq!(ok.adjusted_points, vec![Point2D::new(1.0, 2.0)]);
    }
}
