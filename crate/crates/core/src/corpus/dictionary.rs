use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use super::{CorpusError, TweetRecord};
use crate::textprep::word_tokens;

/// Keywords and hashtags of one or more hazards.
///
/// Keywords match as whole lowercase tokens (multi-word keywords as
/// contiguous token runs); hashtags match as exact `#tag` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardDictionary {
    pub hazard_name: String,
    keywords: BTreeSet<String>,
    hashtags: BTreeSet<String>,
    single: HashSet<String>,
    // Multi-token keywords keyed by their first token.
    phrases: HashMap<String, Vec<Vec<String>>>,
}

impl HazardDictionary {
    pub fn new<K, H>(hazard_name: &str, keywords: K, hashtags: H) -> Result<Self, CorpusError>
    where
        K: IntoIterator,
        K::Item: AsRef<str>,
        H: IntoIterator,
        H::Item: AsRef<str>,
    {
        let keywords: BTreeSet<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        let hashtags: BTreeSet<String> = hashtags
            .into_iter()
            .map(|h| h.as_ref().trim().to_lowercase())
            .filter(|h| !h.is_empty())
            .collect();
        if let Some(h) = hashtags.iter().find(|h| !h.starts_with('#') || h.len() < 2) {
            return Err(CorpusError::MalformedDictionary {
                line: 0,
                reason: format!("hashtag {h:?} must start with '#'"),
            });
        }
        if keywords.is_empty() && hashtags.is_empty() {
            return Err(CorpusError::EmptyDictionary);
        }
        let mut single = HashSet::new();
        let mut phrases: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for k in &keywords {
            let toks = word_tokens(k);
            match toks.len() {
                0 => {}
                1 => {
                    single.insert(toks.into_iter().next().unwrap());
                }
                _ => phrases.entry(toks[0].clone()).or_default().push(toks),
            }
        }
        Ok(Self {
            hazard_name: hazard_name.to_string(),
            keywords,
            hashtags,
            single,
            phrases,
        })
    }

    /// Parses the dictionary format:
    ///
    /// ```text
    /// [hazard:flood]
    /// keywords=rain, flood, water level
    /// hashtags=#flood, #rain
    /// ```
    ///
    /// Several sections may appear; the result is their union, named after
    /// all sections joined by `+`. Lines starting with `;` are comments.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let sections = parse_sections(text)?;
        let name = sections
            .iter()
            .map(|s| s.0.as_str())
            .collect::<Vec<_>>()
            .join("+");
        let keywords = sections.iter().flat_map(|s| s.1.iter().cloned());
        let hashtags = sections.iter().flat_map(|s| s.2.iter().cloned());
        Self::new(&name, keywords.collect::<Vec<_>>(), hashtags.collect::<Vec<_>>())
    }

    /// The bundled hydrological dictionary.
    pub fn builtin_flood() -> Self {
        Self::parse(include_str!("../../data/flood.dict")).expect("bundled dictionary parses")
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn hashtags(&self) -> &BTreeSet<String> {
        &self.hashtags
    }

    pub fn matches_text(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        if !self.hashtags.is_empty() && hashtag_tokens(&lower).any(|h| self.hashtags.contains(h)) {
            return true;
        }
        let words = word_tokens(&lower);
        words.iter().enumerate().any(|(i, w)| {
            self.single.contains(w)
                || self.phrases.get(w).is_some_and(|ps| {
                    ps.iter()
                        .any(|p| words.len() - i >= p.len() && words[i..i + p.len()] == p[..])
                })
        })
    }
}

type Section = (String, Vec<String>, Vec<String>);

fn parse_sections(text: &str) -> Result<Vec<Section>, CorpusError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let bad = |reason: &str| CorpusError::MalformedDictionary {
            line: line_no,
            reason: reason.to_string(),
        };
        if let Some(header) = line.strip_prefix('[') {
            let name = header
                .strip_suffix(']')
                .and_then(|h| h.strip_prefix("hazard:"))
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| bad("section header must be [hazard:<name>]"))?;
            sections.push((name.to_lowercase(), Vec::new(), Vec::new()));
            continue;
        }
        let (key, values) = line
            .split_once('=')
            .ok_or_else(|| bad("expected keywords= or hashtags="))?;
        let section = sections
            .last_mut()
            .ok_or_else(|| bad("entry before any [hazard:<name>] header"))?;
        let values = values
            .split(',')
            .map(|v| v.trim().to_lowercase())
            .filter(|v| !v.is_empty());
        match key.trim() {
            "keywords" => section.1.extend(values),
            "hashtags" => {
                for v in values {
                    if !v.starts_with('#') || v.len() < 2 {
                        return Err(bad(&format!("hashtag {v:?} must start with '#'")));
                    }
                    section.2.push(v);
                }
            }
            other => return Err(bad(&format!("unknown key {other:?}"))),
        }
    }
    if sections.is_empty() {
        return Err(CorpusError::EmptyDictionary);
    }
    Ok(sections)
}

/// `#tag` tokens of already lowercased text.
fn hashtag_tokens(lower: &str) -> impl Iterator<Item = &str> {
    lower.match_indices('#').filter_map(move |(start, _)| {
        let rest = &lower[start + 1..];
        let len: usize = rest
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .map(char::len_utf8)
            .sum();
        (len > 0).then(|| &lower[start..start + 1 + len])
    })
}

/// Loads a dictionary file, merging every hazard section into one list.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<HazardDictionary, CorpusError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        CorpusError::SourceUnavailable(format!("{}: {e}", path.as_ref().display()))
    })?;
    HazardDictionary::parse(&text)
}

/// Loads each hazard section of a dictionary file separately.
pub fn load_dictionaries(path: impl AsRef<Path>) -> Result<Vec<HazardDictionary>, CorpusError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        CorpusError::SourceUnavailable(format!("{}: {e}", path.as_ref().display()))
    })?;
    parse_sections(&text)?
        .into_iter()
        .map(|(name, k, h)| HazardDictionary::new(&name, k, h))
        .collect()
}

pub fn matches(rec: &TweetRecord, dict: &HazardDictionary) -> bool {
    dict.matches_text(&rec.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HAZARDS: &str = include_str!("../../data/hazards.dict");

    fn rec(text: &str) -> TweetRecord {
        TweetRecord::builder("1", text).build()
    }

    fn rain() -> HazardDictionary {
        HazardDictionary::new("flood", ["rain"], Vec::<String>::new()).unwrap()
    }

    #[test]
    fn direct_parse() {
        let d = HazardDictionary::parse("[hazard:flood]\nkeywords=rain, flood\nhashtags=#flood\n")
            .unwrap();
        assert_eq!(d.hazard_name, "flood");
        assert_eq!(d.keywords().len(), 2);
        assert_eq!(d.hashtags().len(), 1);
    }

    #[test]
    fn shipped_dictionary_holds_table_terms() {
        let dicts = HazardDictionary::parse(HAZARDS).unwrap();
        assert!(dicts.keywords().contains("floodplain"));
        assert!(dicts.keywords().contains("water level"));
        assert!(dicts.hashtags().contains("#rainfall"));
        // Mixed-case hashtag collapses onto its lowercase duplicate.
        assert!(dicts.hashtags().contains("#sarscov2"));
    }

    #[test]
    fn duplicates_collapse() {
        let d =
            HazardDictionary::parse("[hazard:flood]\nkeywords=rain, Rain\nkeywords=rain\n").unwrap();
        assert_eq!(d.keywords().iter().filter(|k| *k == "rain").count(), 1);
        assert_eq!(d.keywords().len(), 1);
    }

    #[test]
    fn malformed_and_empty() {
        assert!(matches!(
            HazardDictionary::parse("keywords=rain\n"),
            Err(CorpusError::MalformedDictionary { line: 1, .. })
        ));
        assert!(matches!(
            HazardDictionary::parse("[hazard:flood]\nhashtags=flood\n"),
            Err(CorpusError::MalformedDictionary { line: 2, .. })
        ));
        assert!(matches!(
            HazardDictionary::parse("[flood]\n"),
            Err(CorpusError::MalformedDictionary { .. })
        ));
        assert!(matches!(
            HazardDictionary::parse("[hazard:flood]\nkeywords= , \n"),
            Err(CorpusError::EmptyDictionary)
        ));
        assert!(matches!(
            HazardDictionary::parse(""),
            Err(CorpusError::EmptyDictionary)
        ));
    }

    #[test]
    fn whole_token_matching() {
        assert!(matches(&rec("Heavy rain in Masjid Al Haram"), &rain()));
        assert!(!matches(&rec("brain surgery"), &rain()));
        assert!(matches(&rec("RAIN!!!"), &rain()));
    }

    #[test]
    fn hashtag_matching_is_exact() {
        let d = HazardDictionary::new("flood", Vec::<String>::new(), ["#flood"]).unwrap();
        assert!(matches(&rec("flooding everywhere #flood"), &d));
        assert!(matches(&rec("#FLOOD."), &d));
        assert!(!matches(&rec("#flooding"), &d));
        assert!(!matches(&rec("flood"), &d));
    }

    #[test]
    fn multi_word_keywords_match_contiguously() {
        let d = HazardDictionary::new("flood", ["water level"], Vec::<String>::new()).unwrap();
        assert!(matches(&rec("the water level is rising"), &d));
        assert!(matches(&rec("Water-Level alert"), &d));
        assert!(!matches(&rec("level of water"), &d));
        assert!(!matches(&rec("water"), &d));
    }

    proptest! {
        #[test]
        fn matching_is_case_insensitive(text in "[a-zA-Z #]{0,40}") {
            let d = HazardDictionary::parse(HAZARDS).unwrap();
            prop_assert_eq!(
                d.matches_text(&text.to_uppercase()),
                d.matches_text(&text)
            );
        }
    }
}
