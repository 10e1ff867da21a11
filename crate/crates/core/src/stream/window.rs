use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::io::BufRead;
use std::ops::Range;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::stream::post::{parse_post_record, Post};

/// The four window roles used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Bootstrap window used to train the initial model.
    Bootstrap,
    /// Tumbling detection window.
    Tumbling,
    /// Sliding retraining window.
    Sliding,
    /// Fine-tuning suffix of the sliding window.
    Finetune,
}

/// A window request: kind, length in days, inclusive end date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub length_days: u32,
    pub end_date: NaiveDate,
}

impl WindowSpec {
    pub fn new(kind: WindowKind, length_days: u32, end_date: NaiveDate) -> Result<Self> {
        if length_days < 1 {
            return Err(CoreError::Config("window length must be >= 1 day".into()));
        }
        Ok(WindowSpec {
            kind,
            length_days,
            end_date,
        })
    }

    /// First calendar day covered by the window (inclusive).
    pub fn start_date(&self) -> NaiveDate {
        self.end_date - chrono::Days::new(u64::from(self.length_days) - 1)
    }
}

/// A time-ordered post stream with per-calendar-day offsets.
///
/// Immutable after load; windows are contiguous index ranges, so callers
/// get slices into the shared post buffer.
#[derive(Debug, Clone)]
pub struct PostStream {
    posts: Vec<Post>,
    days: BTreeMap<NaiveDate, Range<usize>>,
}

impl PostStream {
    /// Builds a stream from posts, sorting them by timestamp (stable).
    pub fn from_posts(mut posts: Vec<Post>) -> Self {
        posts.sort_by_key(|p| p.timestamp);
        let mut days: BTreeMap<NaiveDate, Range<usize>> = BTreeMap::new();
        for (i, post) in posts.iter().enumerate() {
            days.entry(post.day())
                .and_modify(|r| r.end = i + 1)
                .or_insert(i..i + 1);
        }
        PostStream { posts, days }
    }

    /// Loads line-delimited records from a reader.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut posts = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let post = parse_post_record(&line).map_err(|e| match e {
                CoreError::Parse { field, message } => CoreError::Parse {
                    field,
                    message: format!("line {}: {message}", lineno + 1),
                },
                CoreError::Range { field, message } => CoreError::Range {
                    field,
                    message: format!("line {}: {message}", lineno + 1),
                },
                other => other,
            })?;
            posts.push(post);
        }
        Ok(Self::from_posts(posts))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    /// First calendar day with any post.
    pub fn first_day(&self) -> Option<NaiveDate> {
        self.days.keys().next().copied()
    }

    /// Last calendar day with any post.
    pub fn last_day(&self) -> Option<NaiveDate> {
        self.days.keys().next_back().copied()
    }

    /// Number of distinct calendar days between first and last post, inclusive.
    pub fn span_days(&self) -> i64 {
        match (self.first_day(), self.last_day()) {
            (Some(a), Some(b)) => (b - a).num_days() + 1,
            _ => 0,
        }
    }

    /// Posts of one calendar day, in timestamp order.
    pub fn day(&self, date: NaiveDate) -> &[Post] {
        match self.days.get(&date) {
            Some(range) => &self.posts[range.clone()],
            None => &[],
        }
    }

    /// Posts with calendar date in `[end_date - length_days + 1, end_date]`,
    /// inclusive, in timestamp order. Empty windows are legal.
    pub fn get_last_window(&self, length_days: u32, end_date: NaiveDate) -> &[Post] {
        assert!(length_days >= 1, "window length must be >= 1 day");
        let start_date = end_date - chrono::Days::new(u64::from(length_days) - 1);
        let lo = self
            .posts
            .partition_point(|p| p.day() < start_date);
        let hi = self.posts.partition_point(|p| p.day() <= end_date);
        &self.posts[lo..hi]
    }

    /// Posts selected by a [`WindowSpec`].
    pub fn window(&self, spec: WindowSpec) -> &[Post] {
        self.get_last_window(spec.length_days, spec.end_date)
    }
}
