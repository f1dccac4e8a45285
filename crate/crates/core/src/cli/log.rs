//! Append-only JSON-lines results log.
//!
//! The first line is a header carrying the full configuration. Every
//! evaluation is one `record` line written as it happens; `extend`,
//! `failure` and `summary` lines are interleaved as the campaign proceeds.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::CampaignConfig;
use crate::bo::{CampaignFailure, CampaignState, EvaluationRecord, Phase};

pub const LOG_FORMAT: &str = "mfdgp-results";
pub const LOG_VERSION: u32 = 1;
pub const LOG_FILE: &str = "results.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub budget_total: f64,
    pub budget_spent: f64,
    pub per_level_counts: Vec<usize>,
    pub incumbent: Option<EvaluationRecord>,
    pub model_best: Option<Vec<f64>>,
    pub model_best_mean: Option<f64>,
    pub model_best_sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LogLine {
    Header {
        format: String,
        version: u32,
        config: CampaignConfig,
    },
    Record(EvaluationRecord),
    Extend {
        extra: f64,
        budget_total: f64,
    },
    Failure(CampaignFailure),
    Summary(Summary),
}

impl LogLine {
    pub fn header(config: &CampaignConfig) -> Self {
        Self::Header {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            config: config.clone(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("log lines serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Parsed log contents.
#[derive(Clone, Debug)]
pub struct LogContents {
    pub config: CampaignConfig,
    pub records: Vec<EvaluationRecord>,
    pub budget_total: f64,
    pub failure: Option<CampaignFailure>,
    pub summary: Option<Summary>,
}

impl LogContents {
    /// Rebuilds the campaign ledger from the records.
    pub fn replay(&self, num_levels: usize) -> crate::Result<CampaignState> {
        let mut state = CampaignState::replay(
            self.records.clone(),
            num_levels,
            self.budget_total,
            self.config.campaign.seed,
        )?;
        state.failure = self.failure.clone();
        state.check_ledger()?;
        Ok(state)
    }
}

pub fn read_log(path: &Path) -> Result<LogContents, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_log(&text)
}

/// Strict parse: every line must be complete and newline-terminated, the
/// header comes first, and record iterations follow the campaign order.
pub fn parse_log(text: &str) -> Result<LogContents, LogError> {
    let corrupt = |line: usize, message: String| LogError::Corrupt { line, message };
    if text.is_empty() {
        return Err(corrupt(1, "empty log".into()));
    }
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut contents: Option<LogContents> = None;
    let mut seen_loop = false;
    for (i, raw) in lines.iter().enumerate() {
        let n = i + 1;
        let Some(body) = raw.strip_suffix('\n') else {
            return Err(corrupt(n, "truncated line (no terminating newline)".into()));
        };
        let parsed: LogLine = serde_json::from_str(body).map_err(|e| corrupt(n, e.to_string()))?;
        match (parsed, contents.as_mut()) {
            (LogLine::Header { format, version, config }, None) => {
                if format != LOG_FORMAT || version != LOG_VERSION {
                    return Err(corrupt(n, format!("unsupported log format {format} v{version}")));
                }
                config.validate().map_err(|e| corrupt(n, format!("invalid config: {e}")))?;
                contents = Some(LogContents {
                    budget_total: config.campaign.budget,
                    config,
                    records: Vec::new(),
                    failure: None,
                    summary: None,
                });
            }
            (_, None) => return Err(corrupt(n, "first line must be the header".into())),
            (LogLine::Header { .. }, Some(_)) => return Err(corrupt(n, "duplicate header".into())),
            (LogLine::Record(r), Some(c)) => {
                let expected = match r.phase {
                    Phase::InitialDesign if !seen_loop => 0,
                    Phase::InitialDesign => {
                        return Err(corrupt(n, "initial-design record after loop records".into()))
                    }
                    Phase::BoLoop => {
                        seen_loop = true;
                        c.records.iter().filter(|r| r.phase == Phase::BoLoop).count() + 1
                    }
                };
                if r.iteration != expected {
                    return Err(corrupt(n, format!("iteration {} where {expected} was expected", r.iteration)));
                }
                c.records.push(r);
                c.failure = None;
            }
            (LogLine::Extend { extra, budget_total }, Some(c)) => {
                if !(extra.is_finite() && extra >= 0.0) || budget_total != c.budget_total + extra {
                    return Err(corrupt(n, "inconsistent budget extension".into()));
                }
                c.budget_total = budget_total;
            }
            (LogLine::Failure(f), Some(c)) => c.failure = Some(f),
            (LogLine::Summary(s), Some(c)) => c.summary = Some(s),
        }
    }
    contents.ok_or_else(|| corrupt(1, "missing header".into()))
}

/// Sole writer of a results log. Each line is flushed as soon as it is written.
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self { file: File::create(path)? })
    }

    pub fn append(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            file: OpenOptions::new().append(true).open(path)?,
        })
    }

    pub fn write(&mut self, line: &LogLine) -> std::io::Result<()> {
        self.file.write_all(line.to_line().as_bytes())?;
        self.file.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iteration: usize, phase: Phase, level: usize) -> EvaluationRecord {
        EvaluationRecord {
            x: vec![0.1 * iteration as f64],
            level,
            y: 1.0,
            cost: 1.0,
            iteration,
            phase,
        }
    }

    fn sample_log() -> String {
        let cfg = CampaignConfig::default();
        let mut text = LogLine::header(&cfg).to_line();
        for level in 1..=5 {
            text += &LogLine::Record(record(0, Phase::InitialDesign, level)).to_line();
        }
        text += &LogLine::Record(record(1, Phase::BoLoop, 2)).to_line();
        text
    }

    #[test]
    fn round_trip() {
        let c = parse_log(&sample_log()).unwrap();
        assert_eq!(c.records.len(), 6);
        assert_eq!(c.budget_total, 40.0);
        let state = c.replay(5).unwrap();
        assert_eq!(state.budget_spent, 6.0);
    }

    #[test]
    fn truncated_final_line() {
        let text = sample_log();
        let cut = &text[..text.len() - 10];
        match parse_log(cut) {
            Err(LogError::Corrupt { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_order_iteration() {
        let mut text = sample_log();
        text += &LogLine::Record(record(3, Phase::BoLoop, 2)).to_line();
        assert!(matches!(parse_log(&text), Err(LogError::Corrupt { line: 8, .. })));
    }

    #[test]
    fn extension_accumulates() {
        let mut text = sample_log();
        text += &LogLine::Extend {
            extra: 20.0,
            budget_total: 60.0,
        }
        .to_line();
        assert_eq!(parse_log(&text).unwrap().budget_total, 60.0);
    }
}
