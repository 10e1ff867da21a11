use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use serde::Deserialize;
use std::sync::OnceLock;

use crate::error::{CoreError, Result};
use crate::text;

/// One timestamped social-media message.
///
/// Hashtags are normalized: lowercase, no `#` prefix, no whitespace,
/// unique within the post, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub hashtags: Vec<String>,
}

impl Post {
    /// Calendar day of the post in UTC.
    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }

    /// True if the text contains any filter keyword, case-insensitive.
    /// An empty filter list matches everything.
    pub fn matches_filters(&self, filters: &[String]) -> bool {
        if filters.is_empty() {
            return true;
        }
        let lowered = self.text.to_lowercase();
        filters.iter().any(|f| lowered.contains(&f.to_lowercase()))
    }
}

fn hashtag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#(\w+)").expect("hashtag pattern compiles"))
}

/// Extracts all hashtags from text: maximal `#`-prefixed runs of
/// alphanumeric/underscore characters, lowercased, `#` stripped,
/// in order of first appearance, de-duplicated.
pub fn extract_hashtags(text: &str) -> Vec<String> {
    let mut seen = Vec::new();
    for cap in hashtag_regex().captures_iter(text) {
        let tag = cap[1].to_lowercase();
        if !seen.contains(&tag) {
            seen.push(tag);
        }
    }
    seen
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    ts: String,
    text: String,
    #[serde(default)]
    tags: Vec<String>,
}

/// Parses one line-delimited record into a [`Post`].
///
/// Record tags are normalized and come first; hashtags found only in the
/// text are appended in order of first appearance.
pub fn parse_post_record(line: &str) -> Result<Post> {
    let raw: RawRecord = serde_json::from_str(line)
        .map_err(|e| CoreError::parse("record", e.to_string()))?;
    if raw.id.is_empty() {
        return Err(CoreError::parse("id", "must be non-empty"));
    }
    let timestamp = DateTime::parse_from_rfc3339(&raw.ts)
        .map_err(|e| CoreError::range("ts", format!("`{}`: {e}", raw.ts)))?
        .with_timezone(&Utc);

    let mut hashtags = Vec::new();
    for tag in &raw.tags {
        let norm = text::normalize_hashtag(tag)
            .ok_or_else(|| CoreError::parse("tags", format!("invalid hashtag `{tag}`")))?;
        if !hashtags.contains(&norm) {
            hashtags.push(norm);
        }
    }
    for tag in extract_hashtags(&raw.text) {
        if !hashtags.contains(&tag) {
            hashtags.push(tag);
        }
    }

    Ok(Post {
        id: raw.id,
        timestamp,
        text: raw.text,
        hashtags,
    })
}
