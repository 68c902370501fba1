//! Rule-based caption curation.
//!
//! Rules file: one `reason: pattern` per line, `#` comments. Patterns are
//! case-insensitive regular expressions tried in file order. The reserved
//! reason `duration` takes a number of seconds instead of a pattern and
//! rejects longer clips; it is checked before any text rule.

use std::fmt;
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default rule set: camera-angle, filming-time and geo-location phrasing,
/// plus a one-minute duration cap.
pub const DEFAULT_RULES: &str = include_str!("../../../../config/caption_rules.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "lowercase")]
pub enum Verdict {
    Pending,
    Kept,
    Rejected(String),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pending => f.write_str("pending"),
            Verdict::Kept => f.write_str("kept"),
            Verdict::Rejected(r) => write!(f, "rejected({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptionRecord {
    pub id: String,
    pub caption: String,
    pub duration: f64,
    pub verdict: Verdict,
}

impl CaptionRecord {
    pub fn new(id: impl Into<String>, caption: impl Into<String>, duration: f64) -> Self {
        Self {
            id: id.into(),
            caption: caption.into(),
            duration,
            verdict: Verdict::Pending,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaptionRules {
    max_duration: Option<f64>,
    patterns: Vec<(String, Regex)>,
}

impl CaptionRules {
    pub fn parse(text: &str) -> Result<Self> {
        let mut max_duration = None;
        let mut patterns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (reason, pattern) = line.split_once(':').ok_or_else(|| {
                Error::Config(format!("rules line {}: expected `reason: pattern`", lineno + 1))
            })?;
            let (reason, pattern) = (reason.trim(), pattern.trim());
            if reason.is_empty() || pattern.is_empty() {
                return Err(Error::Config(format!("rules line {}: empty reason or pattern", lineno + 1)));
            }
            if reason == "duration" {
                let secs: f64 = pattern.parse().map_err(|_| {
                    Error::Config(format!("rules line {}: duration needs seconds, got {pattern:?}", lineno + 1))
                })?;
                max_duration = Some(secs);
                continue;
            }
            let re = Regex::new(&format!("(?i){pattern}")).map_err(|e| {
                Error::Config(format!("rules line {}: invalid pattern for {reason}: {e}", lineno + 1))
            })?;
            patterns.push((reason.to_owned(), re));
        }
        Ok(Self {
            max_duration,
            patterns,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn max_duration(&self) -> Option<f64> {
        self.max_duration
    }

    pub fn reasons(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|(r, _)| r.as_str())
    }
}

impl Default for CaptionRules {
    fn default() -> Self {
        Self::parse(DEFAULT_RULES).expect("bundled rules parse")
    }
}

/// Assigns the record's verdict: the first violated rule rejects it.
pub fn filter_caption(mut rec: CaptionRecord, rules: &CaptionRules) -> CaptionRecord {
    debug_assert_eq!(rec.verdict, Verdict::Pending, "verdict assigned twice");
    rec.verdict = match rules.max_duration {
        Some(max) if rec.duration > max => Verdict::Rejected("duration".into()),
        _ => rules
            .patterns
            .iter()
            .find(|(_, re)| re.is_match(&rec.caption))
            .map_or(Verdict::Kept, |(reason, _)| Verdict::Rejected(reason.clone())),
    };
    rec
}

/// Parses `id<TAB>duration<TAB>caption` lines; blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(dur), Some(caption)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Argument(format!("corpus line {}: expected 3 tab-separated fields", lineno + 1)));
        };
        let duration: f64 = dur
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("corpus line {}: bad duration {dur:?}", lineno + 1)))?;
        out.push(CaptionRecord::new(id, caption, duration));
    }
    Ok(out)
}
