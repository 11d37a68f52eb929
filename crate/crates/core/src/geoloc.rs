//! Geolocation of posts: device coordinates, place bounding boxes, and a
//! gazetteer lookup over the raw text for posts that carry neither.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TweetRecord;
use crate::textprep::word_tokens;

/// Mean Earth radius in kilometres (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("distance requested for an unresolved location")]
    UnresolvedInput,
    #[error("gazetteer line {line}: {reason}")]
    MalformedGazetteer { line: usize, reason: String },
    #[error("reading gazetteer: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lat: f64,
    pub lon: f64,
}

impl Coord {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.5}, {:.5})", self.lat, self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoSource {
    Device,
    PlaceCentroid,
    Gazetteer,
    Unresolved,
}

/// A resolved (or explicitly unresolved) location of a post.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub source: GeoSource,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, source: GeoSource) -> Self {
        Self { lat, lon, source }
    }

    pub fn device(lat: f64, lon: f64) -> Self {
        Self::new(lat, lon, GeoSource::Device)
    }

    pub fn unresolved() -> Self {
        Self::new(0.0, 0.0, GeoSource::Unresolved)
    }

    pub fn is_resolved(&self) -> bool {
        self.source != GeoSource::Unresolved
    }

    pub fn coord(&self) -> Option<Coord> {
        self.is_resolved().then(|| Coord::new(self.lat, self.lon))
    }
}

/// Great-circle distance in kilometres.
pub fn haversine(a: &GeoPoint, b: &GeoPoint) -> Result<f64, GeoError> {
    match (a.coord(), b.coord()) {
        (Some(a), Some(b)) => Ok(haversine_km(a, b)),
        _ => Err(GeoError::UnresolvedInput),
    }
}

pub fn haversine_km(a: Coord, b: Coord) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Mean of the points as unit vectors on the sphere, projected back to
/// latitude/longitude. `None` when the vectors cancel out (or no points).
pub fn spherical_centroid<I>(points: I) -> Option<Coord>
where
    I: IntoIterator<Item = Coord>,
{
    let (mut x, mut y, mut z, mut n) = (0.0, 0.0, 0.0, 0usize);
    for p in points {
        let (phi, lambda) = (p.lat.to_radians(), p.lon.to_radians());
        x += phi.cos() * lambda.cos();
        y += phi.cos() * lambda.sin();
        z += phi.sin();
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let norm = (x * x + y * y + z * z).sqrt();
    if norm < 1e-12 * n as f64 {
        return None;
    }
    let (x, y, z) = (x / norm, y / norm, z / norm);
    Some(Coord::new(
        z.clamp(-1.0, 1.0).asin().to_degrees(),
        y.atan2(x).to_degrees(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub population: u64,
}

/// Place-name lookup table used in place of a named-entity recognizer.
///
/// Matching is token based: a name matches when its lowercase word tokens
/// appear contiguously in the text. Longer names win, then larger
/// populations.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    // Sorted by (token count desc, population desc, name asc).
    entries: Vec<GazetteerEntry>,
    tokens: Vec<Vec<String>>,
    by_first_token: HashMap<String, Vec<usize>>,
}

impl Gazetteer {
    pub fn new(entries: impl IntoIterator<Item = GazetteerEntry>) -> Self {
        let mut entries: Vec<(Vec<String>, GazetteerEntry)> = entries
            .into_iter()
            .map(|mut e| {
                e.name = e.name.trim().to_lowercase();
                (word_tokens(&e.name), e)
            })
            .filter(|(toks, _)| !toks.is_empty())
            .collect();
        entries.sort_by(|(ta, a), (tb, b)| {
            tb.len()
                .cmp(&ta.len())
                .then(b.population.cmp(&a.population))
                .then(a.name.cmp(&b.name))
        });
        let mut by_first_token: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, (toks, _)) in entries.iter().enumerate() {
            by_first_token.entry(toks[0].clone()).or_default().push(i);
        }
        let (tokens, entries) = entries.into_iter().unzip();
        Self {
            entries,
            tokens,
            by_first_token,
        }
    }

    /// Parses `name<TAB>lat<TAB>lon<TAB>population` lines. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, GeoError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |reason: &str| GeoError::MalformedGazetteer {
                line: line_no,
                reason: reason.to_string(),
            };
            if fields.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let name = fields[0].trim();
            if name.is_empty() {
                return Err(bad("empty name"));
            }
            let lat: f64 = fields[1].trim().parse().map_err(|_| bad("bad latitude"))?;
            let lon: f64 = fields[2].trim().parse().map_err(|_| bad("bad longitude"))?;
            let population: u64 = fields[3]
                .trim()
                .parse()
                .map_err(|_| bad("bad population"))?;
            if !Coord::new(lat, lon).is_valid() {
                return Err(bad("coordinates out of range"));
            }
            entries.push(GazetteerEntry {
                name: name.to_string(),
                lat,
                lon,
                population,
            });
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeoError> {
        let text = std::fs::read_to_string(path).map_err(|e| GeoError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// The small world gazetteer shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/gazetteer.tsv")).expect("bundled gazetteer parses")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    /// Best place-name match in `text`, if any.
    pub fn lookup(&self, text: &str) -> Option<&GazetteerEntry> {
        let words = word_tokens(text);
        let mut best: Option<usize> = None;
        for start in 0..words.len() {
            let Some(candidates) = self.by_first_token.get(&words[start]) else {
                continue;
            };
            // Candidates are already in preference order; the first that
            // matches at this position is the best one starting here.
            let hit = candidates.iter().copied().find(|&idx| {
                let name = &self.tokens[idx];
                words.len() - start >= name.len()
                    && words[start..start + name.len()] == name[..]
            });
            if let Some(idx) = hit {
                // Lower index means longer name, then larger population;
                // on a full tie the earlier position in the text stays.
                if best.is_none_or(|b| idx < b) {
                    best = Some(idx);
                }
            }
        }
        best.map(|i| &self.entries[i])
    }
}

/// Resolves the location of a record: device coordinates first, then the
/// centroid of the place bounding box, then a gazetteer match on the text.
pub fn resolve(rec: &TweetRecord, gaz: &Gazetteer) -> GeoPoint {
    if let Some(c) = rec.coords {
        return GeoPoint::new(c.lat, c.lon, GeoSource::Device);
    }
    if let Some(bbox) = &rec.place_bbox {
        let lat = bbox.iter().map(|c| c.lat).sum::<f64>() / 4.0;
        let lon = bbox.iter().map(|c| c.lon).sum::<f64>() / 4.0;
        return GeoPoint::new(lat, lon, GeoSource::PlaceCentroid);
    }
    match gaz.lookup(&rec.text) {
        Some(e) => GeoPoint::new(e.lat, e.lon, GeoSource::Gazetteer),
        None => GeoPoint::unresolved(),
    }
}
