//! Byte-stable CSV/JSON artifacts with all-or-nothing writes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::log::RoundLog;

/// Column names of the round-log CSV, in order.
pub fn round_log_header() -> Vec<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(RoundLog::default())
        .expect("default row serializes");
    let bytes = w.into_inner().expect("in-memory writer");
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.headers()
        .expect("header row")
        .iter()
        .map(str::to_string)
        .collect()
}

/// Round logs as CSV; an empty list still gets the header.
pub fn round_logs_to_csv(logs: &[RoundLog]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(round_log_header()).expect("in-memory write");
    for l in logs {
        w.serialize(l).expect("round log serializes");
    }
    w.into_inner().expect("in-memory writer")
}

pub fn parse_round_logs(bytes: &[u8]) -> std::result::Result<Vec<RoundLog>, csv::Error> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}

pub fn read_round_logs(path: &Path) -> Result<Vec<RoundLog>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_round_logs(&bytes).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Collects files and writes them only when the whole set is ready. Each
/// file goes to a `.partial` sibling first; on any failure every file
/// written so far is removed.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let result = (|| {
            for (path, bytes) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                let tmp = partial_name(path);
                fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
                staged.push((tmp, path.clone()));
            }
            for (tmp, path) in &staged {
                fs::rename(tmp, path).map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(staged.into_iter().map(|(_, p)| p).collect()),
            Err(e) => {
                for (tmp, path) in &staged {
                    let _ = fs::remove_file(tmp);
                    let _ = fs::remove_file(path);
                }
                Err(e)
            }
        }
    }
}

fn partial_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::{FallbackReason, Phase};

    fn sample_logs() -> Vec<RoundLog> {
        let mut a = RoundLog::new(1, Phase::BurnIn);
        a.bid = 0.1 + 0.2;
        a.x = "0.6;0.8".into();
        a.dual = Some(1.0 / 3.0);
        a.branch = Some(1);
        let mut b = RoundLog::new(2, Phase::Main);
        b.fallback = true;
        b.fallback_reason = Some(FallbackReason::WideInterval);
        b.f_hat_bid = 1e-300;
        b.realized_reward = -0.125;
        vec![a, b]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let logs = sample_logs();
        let bytes = round_logs_to_csv(&logs);
        assert_eq!(parse_round_logs(&bytes).unwrap(), logs);
        assert_eq!(round_logs_to_csv(&logs), bytes);
    }

    #[test]
    fn empty_log_is_header_only() {
        let text = String::from_utf8(round_logs_to_csv(&[])).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("schema_version,t,phase,"));
        assert!(parse_round_logs(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn failed_commit_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("blocked");
        fs::write(&blocker, b"file, not a directory").unwrap();
        let mut set = OutputSet::new();
        set.add(dir.path().join("a.csv"), b"x".to_vec());
        set.add(blocker.join("b.json"), b"y".to_vec());
        assert!(set.commit().is_err());
        let left: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(left, vec![std::ffi::OsString::from("blocked")]);
    }

    #[test]
    fn commit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = OutputSet::new();
        set.add(dir.path().join("sub/a.csv"), b"1".to_vec());
        set.add(dir.path().join("b.json"), b"2".to_vec());
        let written = set.commit().unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(fs::read(dir.path().join("sub/a.csv")).unwrap(), b"1");
    }
}
