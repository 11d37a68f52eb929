use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::stream::{PostSource, SourceEvent};
use super::TweetRecord;
use crate::geoloc::Coord;

/// One kind of hazard chatter: its vocabulary, hashtags and the places it
/// tends to happen.
#[derive(Debug, Clone)]
pub struct Theme {
    pub name: &'static str,
    pub words: &'static [&'static str],
    pub hashtags: &'static [&'static str],
    pub sites: &'static [(&'static str, f64, f64)],
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticProfile {
    pub themes: Vec<Theme>,
    pub filler: &'static [&'static str],
    pub rumor: &'static [&'static str],
    pub users: usize,
    pub start: DateTime<Utc>,
}

const WEATHER: &[&str] = &[
    "rain", "wind", "temp", "disaster", "humidity", "weather", "forecast", "degrees", "pressure",
    "cloudy", "drizzle", "gusts", "rainfall", "precipitation", "showers", "cold", "heavy",
];
const RESCUE: &[&str] = &[
    "hurricane", "water", "overflow", "help", "time", "authority", "rescue", "evacuate",
    "shelter", "flooded", "roof", "boats", "stranded", "emergency", "relief", "volunteers",
    "damage", "families",
];
const WARNING: &[&str] = &[
    "thunderstorm", "severe", "warning", "storm", "tornado", "county", "watch", "issued",
    "alert", "hail", "lightning", "until", "national", "service", "radar", "expires",
];
const RIVER: &[&str] = &[
    "flood", "river", "flooding", "level", "banks", "overflow", "groundwater", "inundation",
    "dam", "bridge", "roads", "closed", "torrent", "floodplain", "deluge", "rising",
];
const FILLER: &[&str] = &[
    "people", "today", "still", "going", "right", "please", "stay", "safe", "area", "town",
    "city", "morning", "night", "live", "update", "news", "video", "photo", "look", "huge",
    "crazy", "everyone", "family", "praying", "thanks", "worst", "week", "car", "home", "house",
    "street", "just", "really", "never", "seen", "like", "tonight", "local", "report", "power",
    "outage", "school", "traffic", "downtown", "neighbors", "hours", "days", "wow", "again",
    "thoughts",
];
const RUMOR: &[&str] = &[
    "hoax", "staged", "fake", "conspiracy", "government", "control", "lies", "cover", "secret",
    "engineered", "plot", "truth", "hidden", "scam",
];

impl SyntheticProfile {
    /// Hydrological hazard chatter: weather reports, hurricane rescue,
    /// severe storm warnings and river floods.
    pub fn hydro() -> Self {
        Self {
            themes: vec![
                Theme {
                    name: "weather",
                    words: WEATHER,
                    hashtags: &["#rain", "#rainfall", "#weather"],
                    sites: &[
                        ("mumbai", 19.0728, 72.8826),
                        ("london", 51.5074, -0.1278),
                        ("jakarta", -6.2146, 106.8451),
                    ],
                    weight: 0.3,
                },
                Theme {
                    name: "rescue",
                    words: RESCUE,
                    hashtags: &["#hurricane", "#flood"],
                    sites: &[
                        ("houston", 29.7633, -95.3633),
                        ("new orleans", 29.9547, -90.0751),
                        ("san juan", 18.4663, -66.1057),
                    ],
                    weight: 0.25,
                },
                Theme {
                    name: "warning",
                    words: WARNING,
                    hashtags: &["#storm", "#tornado"],
                    sites: &[
                        ("dallas", 32.7831, -96.8067),
                        ("atlanta", 33.7490, -84.3880),
                        ("chicago", 41.8500, -87.6500),
                    ],
                    weight: 0.25,
                },
                Theme {
                    name: "river",
                    words: RIVER,
                    hashtags: &["#flood", "#floods", "#waterlevel"],
                    sites: &[
                        ("dresden", 51.0509, 13.7383),
                        ("lagos", 6.4541, 3.3947),
                        ("dhaka", 23.7104, 90.4074),
                    ],
                    weight: 0.2,
                },
            ],
            filler: FILLER,
            rumor: RUMOR,
            users: 400,
            start: Utc.with_ymd_and_hms(2021, 9, 1, 0, 0, 0).unwrap(),
        }
    }
}

struct Posted {
    id: String,
    user: String,
    text: String,
    theme: usize,
    site: usize,
}

/// Deterministic generator of hazard chatter. Equal seeds give identical
/// streams; timestamps never decrease.
pub struct SyntheticSource {
    name: String,
    seed: u64,
    rng: ChaCha8Rng,
    profile: SyntheticProfile,
    theme_pick: WeightedIndex<f64>,
    remaining: Option<usize>,
    clock: DateTime<Utc>,
    serial: u64,
    recent: Vec<Posted>,
}

impl SyntheticSource {
    const RECENT: usize = 200;

    pub fn new(seed: u64, count: Option<usize>, profile: SyntheticProfile) -> Self {
        let theme_pick =
            WeightedIndex::new(profile.themes.iter().map(|t| t.weight)).expect("theme weights");
        Self {
            name: format!("synthetic(seed={seed})"),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: profile.start,
            profile,
            theme_pick,
            remaining: count,
            serial: 0,
            recent: Vec::new(),
        }
    }

    fn zipf_pick<'a>(&mut self, words: &[&'a str]) -> &'a str {
        let total: f64 = (1..=words.len()).map(|r| 1.0 / r as f64).sum();
        let mut x = self.rng.random::<f64>() * total;
        for (r, w) in words.iter().enumerate() {
            x -= 1.0 / (r + 1) as f64;
            if x <= 0.0 {
                return w;
            }
        }
        words[words.len() - 1]
    }

    fn compose(&mut self, theme: usize, rumor: bool) -> String {
        let t = self.profile.themes[theme].clone();
        let n = self.rng.random_range(5..=12);
        let mut words: Vec<String> = Vec::with_capacity(n + 4);
        for _ in 0..n {
            let roll = self.rng.random::<f64>();
            let w = if rumor && roll < 0.35 {
                self.zipf_pick(self.profile.rumor)
            } else if roll < 0.65 {
                self.zipf_pick(t.words)
            } else {
                self.zipf_pick(self.profile.filler)
            };
            words.push(w.to_string());
        }
        if self.rng.random_bool(0.35) {
            let tag = t.hashtags[self.rng.random_range(0..t.hashtags.len())];
            words.push(tag.to_string());
        }
        if self.rng.random_bool(0.1) {
            let who = self.rng.random_range(0..self.profile.users);
            words.insert(0, format!("@user{who}"));
        }
        if self.rng.random_bool(0.1) {
            words.push(format!("https://t.co/{:x}", self.rng.random::<u32>()));
        }
        if self.rng.random_bool(0.08) {
            let hours = self.rng.random_range(1..48);
            words.push(format!("{hours}h"));
        }
        words.join(" ")
    }

    fn jitter(&mut self, base: f64, spread: f64) -> f64 {
        base + (self.rng.random::<f64>() - 0.5) * 2.0 * spread
    }

    fn place(&mut self, rec: &mut TweetRecord, theme: usize, site: usize) {
        let (name, lat, lon) = self.profile.themes[theme].sites[site];
        let roll = self.rng.random::<f64>();
        if roll < 0.45 {
            let c = Coord::new(self.jitter(lat, 0.15), self.jitter(lon, 0.15));
            rec.coords = Some(c);
        } else if roll < 0.6 {
            let (la, lo) = (self.jitter(lat, 0.05), self.jitter(lon, 0.05));
            rec.place_bbox = Some([
                Coord::new(la - 0.1, lo - 0.1),
                Coord::new(la - 0.1, lo + 0.1),
                Coord::new(la + 0.1, lo + 0.1),
                Coord::new(la + 0.1, lo - 0.1),
            ]);
        } else if roll < 0.9 {
            rec.text.push_str(&format!(" in {name}"));
        }
    }

    fn generate(&mut self) -> TweetRecord {
        self.clock += Duration::milliseconds(self.rng.random_range(0..=3000));
        self.serial += 1;
        let id = format!("s{}-{:07}", self.seed, self.serial);
        let user = format!("u{}", self.rng.random_range(0..self.profile.users));
        let roll = self.rng.random::<f64>();

        let (rec, theme, site) = if roll < 0.12 && !self.recent.is_empty() {
            let orig = &self.recent[self.rng.random_range(0..self.recent.len())];
            let (theme, site) = (orig.theme, orig.site);
            let rec = TweetRecord::builder(&id, format!("RT @{}: {}", orig.user, orig.text))
                .user(&user)
                .created_at(self.clock)
                .retweet_of(orig.id.clone())
                .build();
            (rec, theme, site)
        } else if roll < 0.22 && !self.recent.is_empty() {
            let orig = &self.recent[self.rng.random_range(0..self.recent.len())];
            let (theme, site, parent) = (orig.theme, orig.site, orig.id.clone());
            let text = self.compose(theme, false);
            let rec = TweetRecord::builder(&id, text)
                .user(&user)
                .created_at(self.clock)
                .reply_to(parent)
                .build();
            (rec, theme, site)
        } else {
            let theme = self.theme_pick.sample(&mut self.rng);
            let site = self
                .rng
                .random_range(0..self.profile.themes[theme].sites.len());
            let rumor = self.rng.random_bool(0.04);
            let text = self.compose(theme, rumor);
            let rec = TweetRecord::builder(&id, text)
                .user(&user)
                .created_at(self.clock)
                .build();
            (rec, theme, site)
        };
        let mut rec = rec;
        self.place(&mut rec, theme, site);
        if !rec.is_retweet() {
            self.recent.push(Posted {
                id: rec.id.clone(),
                user: rec.user_id.clone(),
                text: rec.text.clone(),
                theme,
                site,
            });
            if self.recent.len() > Self::RECENT {
                self.recent.remove(0);
            }
        }
        rec
    }
}

impl PostSource for SyntheticSource {
    fn poll_next(&mut self) -> SourceEvent {
        match self.remaining.as_mut() {
            Some(0) => return SourceEvent::Exhausted,
            Some(n) => *n -= 1,
            None => {}
        }
        SourceEvent::Record(self.generate())
    }

    fn name(&self) -> &str {
        &self.name
    }
}
