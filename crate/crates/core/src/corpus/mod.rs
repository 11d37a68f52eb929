//! Post records, the hazard dictionary used to filter the incoming stream,
//! and the stream sources that feed the pipeline.

mod dictionary;
mod stream;
mod synthetic;

use std::fmt;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geoloc::Coord;

pub use dictionary::{load_dictionaries, load_dictionary, matches, HazardDictionary};
pub use stream::{
    open_stream, FileReplay, PostSource, SourceEvent, StreamFilter, StreamSource, StreamStats,
    TweetStream,
};
pub use synthetic::{SyntheticProfile, SyntheticSource};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("dictionary line {line}: {reason}")]
    MalformedDictionary { line: usize, reason: String },
    #[error("dictionary contains no keywords or hashtags")]
    EmptyDictionary,
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Veracity {
    #[default]
    Unchecked,
    Real,
    Fake,
}

impl fmt::Display for Veracity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Veracity::Unchecked => "unchecked",
            Veracity::Real => "real",
            Veracity::Fake => "fake",
        })
    }
}

/// One post as stored by the collector.
///
/// The JSON form is the tweet input format: one object per line with
/// `id`, `lang`, `created_at`, `text`, `user_id`, `retweet_of`, `reply_to`,
/// `lat`, `lon` and `place_bbox`. `veracity` is written only once checked.
#[derive(Debug, Clone, PartialEq)]
pub struct TweetRecord {
    pub id: String,
    pub lang: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub user_id: String,
    pub retweet_of: Option<String>,
    pub reply_to: Option<String>,
    pub coords: Option<Coord>,
    pub place_bbox: Option<[Coord; 4]>,
    pub veracity: Veracity,
}

impl TweetRecord {
    pub fn builder(id: impl Into<String>, text: impl Into<String>) -> TweetRecordBuilder {
        TweetRecordBuilder::new(id, text)
    }

    pub fn is_retweet(&self) -> bool {
        self.retweet_of.is_some()
    }

    /// Parses one line of the JSON-lines input format.
    pub fn from_json_line(line: &str) -> Result<Self, CorpusError> {
        let wire: WireRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord(e.to_string()))?;
        wire.try_into()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

pub struct TweetRecordBuilder {
    rec: TweetRecord,
}

impl TweetRecordBuilder {
    fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            rec: TweetRecord {
                id: id.into(),
                lang: "en".into(),
                created_at: Utc.timestamp_opt(1_630_454_400, 0).unwrap(),
                text: text.into(),
                user_id: "user".into(),
                retweet_of: None,
                reply_to: None,
                coords: None,
                place_bbox: None,
                veracity: Veracity::Unchecked,
            },
        }
    }

    pub fn lang(mut self, lang: impl Into<String>) -> Self {
        self.rec.lang = lang.into();
        self
    }

    pub fn created_at(mut self, at: DateTime<Utc>) -> Self {
        self.rec.created_at = at;
        self
    }

    pub fn user(mut self, user: impl Into<String>) -> Self {
        self.rec.user_id = user.into();
        self
    }

    pub fn retweet_of(mut self, id: impl Into<String>) -> Self {
        self.rec.retweet_of = Some(id.into());
        self
    }

    pub fn reply_to(mut self, id: impl Into<String>) -> Self {
        self.rec.reply_to = Some(id.into());
        self
    }

    pub fn coords(mut self, lat: f64, lon: f64) -> Self {
        self.rec.coords = Some(Coord::new(lat, lon));
        self
    }

    pub fn place_bbox(mut self, bbox: [Coord; 4]) -> Self {
        self.rec.place_bbox = Some(bbox);
        self
    }

    pub fn build(self) -> TweetRecord {
        self.rec
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    id: String,
    #[serde(default)]
    lang: String,
    #[serde(
        serialize_with = "serialize_millis",
        deserialize_with = "deserialize_millis"
    )]
    created_at: DateTime<Utc>,
    text: String,
    #[serde(default)]
    user_id: String,
    #[serde(default)]
    retweet_of: Option<String>,
    #[serde(default)]
    reply_to: Option<String>,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
    #[serde(default)]
    place_bbox: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "is_unchecked")]
    veracity: Veracity,
}

fn is_unchecked(v: &Veracity) -> bool {
    *v == Veracity::Unchecked
}

fn serialize_millis<S: Serializer>(at: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&at.to_rfc3339_opts(SecondsFormat::Millis, true))
}

fn deserialize_millis<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    let raw = String::deserialize(d)?;
    let at = DateTime::parse_from_rfc3339(&raw).map_err(serde::de::Error::custom)?;
    let at = at.with_timezone(&Utc);
    Ok(Utc
        .timestamp_millis_opt(at.timestamp_millis())
        .single()
        .unwrap_or(at))
}

impl TryFrom<WireRecord> for TweetRecord {
    type Error = CorpusError;

    fn try_from(w: WireRecord) -> Result<Self, Self::Error> {
        let bad = |msg: &str| CorpusError::MalformedRecord(format!("{}: {msg}", w.id));
        if w.id.trim().is_empty() {
            return Err(CorpusError::MalformedRecord("empty id".into()));
        }
        let coords = match (w.lat, w.lon) {
            (Some(lat), Some(lon)) => {
                let c = Coord::new(lat, lon);
                if !c.is_valid() {
                    return Err(bad("coordinates out of range"));
                }
                Some(c)
            }
            (None, None) => None,
            _ => return Err(bad("lat and lon must be given together")),
        };
        let place_bbox = match &w.place_bbox {
            None => None,
            Some(pairs) => {
                if pairs.len() != 4 {
                    return Err(bad("place_bbox needs exactly 4 [lat, lon] pairs"));
                }
                let corners: Vec<Coord> = pairs.iter().map(|p| Coord::new(p[0], p[1])).collect();
                if corners.iter().any(|c| !c.is_valid()) {
                    return Err(bad("place_bbox corner out of range"));
                }
                Some([corners[0], corners[1], corners[2], corners[3]])
            }
        };
        let nonempty = |s: Option<String>| s.filter(|s| !s.is_empty());
        Ok(TweetRecord {
            id: w.id,
            lang: w.lang,
            created_at: w.created_at,
            text: w.text,
            user_id: w.user_id,
            retweet_of: nonempty(w.retweet_of),
            reply_to: nonempty(w.reply_to),
            coords,
            place_bbox,
            veracity: w.veracity,
        })
    }
}

impl Serialize for TweetRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WireRecord {
            id: self.id.clone(),
            lang: self.lang.clone(),
            created_at: self.created_at,
            text: self.text.clone(),
            user_id: self.user_id.clone(),
            retweet_of: self.retweet_of.clone(),
            reply_to: self.reply_to.clone(),
            lat: self.coords.map(|c| c.lat),
            lon: self.coords.map(|c| c.lon),
            place_bbox: self
                .place_bbox
                .map(|b| b.iter().map(|c| [c.lat, c.lon]).collect()),
            veracity: self.veracity,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TweetRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        WireRecord::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}
