use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::synthetic::{SyntheticProfile, SyntheticSource};
use super::{CorpusError, HazardDictionary, TweetRecord};

/// What a source produced on one poll.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum SourceEvent {
    Record(TweetRecord),
    /// A record that could not be parsed; skipped by the stream.
    Malformed(String),
    /// Nothing available right now; a live source may produce more later.
    Idle,
    /// A finite source reached its end.
    Exhausted,
    /// The connection behind a live source is gone; it must be reopened.
    Disconnected,
}

/// A producer of posts. File replay and the synthetic generator implement
/// it here; a live social-network client implements the same trait.
pub trait PostSource: Send {
    fn poll_next(&mut self) -> SourceEvent;

    fn name(&self) -> &str;
}

/// Where a stream comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamSource {
    FileReplay {
        path: PathBuf,
        rate: Option<f64>,
    },
    Synthetic {
        seed: u64,
        /// Number of posts to generate; `None` for an endless stream.
        count: Option<usize>,
        rate: Option<f64>,
    },
}

impl StreamSource {
    pub fn rate(&self) -> Option<f64> {
        match self {
            StreamSource::FileReplay { rate, .. } | StreamSource::Synthetic { rate, .. } => *rate,
        }
    }

    pub fn open(&self) -> Result<Box<dyn PostSource>, CorpusError> {
        match self {
            StreamSource::FileReplay { path, .. } => Ok(Box::new(FileReplay::open(path.clone())?)),
            StreamSource::Synthetic { seed, count, .. } => Ok(Box::new(SyntheticSource::new(
                *seed,
                *count,
                SyntheticProfile::hydro(),
            ))),
        }
    }
}

/// Replays a JSON-lines file in file order.
pub struct FileReplay {
    name: String,
    lines: Lines<BufReader<File>>,
    line_no: usize,
}

impl FileReplay {
    pub fn open(path: PathBuf) -> Result<Self, CorpusError> {
        let file = File::open(&path)
            .map_err(|e| CorpusError::SourceUnavailable(format!("{}: {e}", path.display())))?;
        Ok(Self {
            name: path.display().to_string(),
            lines: BufReader::new(file).lines(),
            line_no: 0,
        })
    }
}

impl PostSource for FileReplay {
    fn poll_next(&mut self) -> SourceEvent {
        loop {
            self.line_no += 1;
            match self.lines.next() {
                None => return SourceEvent::Exhausted,
                Some(Err(e)) => return SourceEvent::Malformed(format!("line {}: {e}", self.line_no)),
                Some(Ok(line)) if line.trim().is_empty() => continue,
                Some(Ok(line)) => {
                    return match TweetRecord::from_json_line(&line) {
                        Ok(rec) => SourceEvent::Record(rec),
                        Err(e) => SourceEvent::Malformed(format!("line {}: {e}", self.line_no)),
                    }
                }
            }
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Keeps records that match the dictionary, plus retweets and replies of
/// records it already kept (their links are needed for the social graph).
pub struct StreamFilter {
    dict: Arc<HazardDictionary>,
    languages: Option<BTreeSet<String>>,
    kept: HashSet<String>,
    kept_order: VecDeque<String>,
    capacity: usize,
}

impl StreamFilter {
    const DEFAULT_MEMORY: usize = 1_000_000;

    pub fn new(dict: Arc<HazardDictionary>) -> Self {
        Self {
            dict,
            languages: None,
            kept: HashSet::new(),
            kept_order: VecDeque::new(),
            capacity: Self::DEFAULT_MEMORY,
        }
    }

    /// Restrict the stream to the given ISO-639-1 language codes.
    pub fn with_languages(mut self, langs: impl IntoIterator<Item = String>) -> Self {
        self.languages = Some(langs.into_iter().collect());
        self
    }

    pub fn accept(&mut self, rec: &TweetRecord) -> bool {
        if let Some(langs) = &self.languages {
            if !langs.contains(&rec.lang) {
                return false;
            }
        }
        let linked = [&rec.retweet_of, &rec.reply_to]
            .into_iter()
            .flatten()
            .any(|id| self.kept.contains(id));
        if !(linked || self.dict.matches_text(&rec.text)) {
            return false;
        }
        if self.kept.insert(rec.id.clone()) {
            self.kept_order.push_back(rec.id.clone());
            if self.kept_order.len() > self.capacity {
                if let Some(old) = self.kept_order.pop_front() {
                    self.kept.remove(&old);
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub accepted: u64,
    pub filtered_out: u64,
    pub malformed: u64,
}

/// Filtered, optionally paced stream of records.
pub struct TweetStream {
    source: Box<dyn PostSource>,
    filter: StreamFilter,
    pace: Option<Duration>,
    next_due: Option<Instant>,
    stats: StreamStats,
    ended: Option<SourceEvent>,
}

impl TweetStream {
    pub fn new(source: Box<dyn PostSource>, filter: StreamFilter, rate: Option<f64>) -> Self {
        Self {
            source,
            filter,
            pace: rate
                .filter(|r| *r > 0.0)
                .map(|r| Duration::from_secs_f64(1.0 / r)),
            next_due: None,
            stats: StreamStats::default(),
            ended: None,
        }
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    /// How the stream ended, once it has.
    pub fn end_reason(&self) -> Option<&SourceEvent> {
        self.ended.as_ref()
    }

    fn wait_for_slot(&mut self) {
        let Some(pace) = self.pace else { return };
        let now = Instant::now();
        if let Some(due) = self.next_due {
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        self.next_due = Some(self.next_due.map_or(now, |d| d.max(now)) + pace);
    }
}

impl Iterator for TweetStream {
    type Item = TweetRecord;

    fn next(&mut self) -> Option<TweetRecord> {
        if self.ended.is_some() {
            return None;
        }
        loop {
            match self.source.poll_next() {
                SourceEvent::Record(rec) => {
                    if self.filter.accept(&rec) {
                        self.stats.accepted += 1;
                        self.wait_for_slot();
                        return Some(rec);
                    }
                    self.stats.filtered_out += 1;
                }
                SourceEvent::Malformed(reason) => {
                    self.stats.malformed += 1;
                    tracing::warn!(source = self.source.name(), %reason, "skipping malformed record");
                }
                SourceEvent::Idle => std::thread::sleep(Duration::from_millis(5)),
                end @ (SourceEvent::Exhausted | SourceEvent::Disconnected) => {
                    self.ended = Some(end);
                    return None;
                }
            }
        }
    }
}

/// Opens `src` and filters it by `dict`.
pub fn open_stream(
    src: &StreamSource,
    dict: Arc<HazardDictionary>,
) -> Result<TweetStream, CorpusError> {
    Ok(TweetStream::new(src.open()?, StreamFilter::new(dict), src.rate()))
}
