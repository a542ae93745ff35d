use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-epoch means of the representation-stage terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderEpoch {
    pub epoch: usize,
    /// Loss minimized by the encoder: `-(alpha*global + beta*local) + gamma*enc_loss`.
    pub encoder_loss: f64,
    pub global_mi: f64,
    pub local_mi: f64,
    pub prior_value: f64,
    pub prior_disc_loss: f64,
    pub prior_enc_loss: f64,
    pub batches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEpoch {
    pub epoch: usize,
    pub loss: f64,
    #[serde(default)]
    pub validation_auc: Option<f64>,
    #[serde(default)]
    pub validation_mean_normal: Option<f64>,
    #[serde(default)]
    pub validation_mean_abnormal: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEvent {
    Encoder(EncoderEpoch),
    Score(ScoreEpoch),
    /// Summary of the retained score network.
    Selection { epoch: usize, validation_auc: Option<f64>, threshold: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(flatten)]
    pub event: LogEvent,
    /// Seconds since the start of the stage.
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub config_hash: String,
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self { seed, config_hash: config_hash.into(), records: Vec::new() }
    }

    pub fn push(&mut self, event: LogEvent, elapsed_seconds: f64) {
        self.records.push(LogRecord { event, elapsed_seconds });
    }

    pub fn extend(&mut self, other: TrainingLog) {
        self.records.extend(other.records);
    }

    pub fn encoder_epochs(&self) -> impl Iterator<Item = &EncoderEpoch> {
        self.records.iter().filter_map(|r| match &r.event {
            LogEvent::Encoder(e) => Some(e),
            _ => None,
        })
    }

    pub fn score_epochs(&self) -> impl Iterator<Item = &ScoreEpoch> {
        self.records.iter().filter_map(|r| match &r.event {
            LogEvent::Score(e) => Some(e),
            _ => None,
        })
    }

    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.records.iter_mut().for_each(|r| r.elapsed_seconds = 0.0);
        out
    }

    /// One JSON object per line: a header with seed and config hash, then
    /// one line per record.
    pub fn write_ndjson(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        let header = serde_json::json!({ "kind": "header", "seed": self.seed, "config_hash": self.config_hash });
        writeln!(buf, "{header}").expect("write to vec");
        for r in &self.records {
            writeln!(buf, "{}", serde_json::to_string(r)?).expect("write to vec");
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_ndjson(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: serde_json::Value =
            serde_json::from_str(lines.next().ok_or_else(|| Error::config("empty training log"))?)?;
        let mut log = TrainingLog::new(
            header["seed"].as_u64().unwrap_or_default(),
            header["config_hash"].as_str().unwrap_or_default(),
        );
        for line in lines {
            log.records.push(serde_json::from_str(line)?);
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trip() {
        let mut log = TrainingLog::new(3, "abc");
        log.push(
            LogEvent::Score(ScoreEpoch {
                epoch: 0,
                loss: 0.25,
                validation_auc: Some(0.5),
                validation_mean_normal: None,
                validation_mean_abnormal: None,
            }),
            1.5,
        );
        log.push(LogEvent::Selection { epoch: 0, validation_auc: Some(0.5), threshold: Some(0.1) }, 2.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.ndjson");
        log.write_ndjson(&p).unwrap();
        assert_eq!(TrainingLog::read_ndjson(&p).unwrap(), log);
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 3);
    }
}
