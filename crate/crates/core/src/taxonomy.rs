//! Seven-stem instrument taxonomy and multilingual query expansion.
//!
//! Strings and Wind-Brass are queried through their sub-track names; the other
//! stems are queried through the stem keyword alone.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemId {
    Piano,
    Drums,
    Bass,
    AcousticGuitar,
    ElectricGuitar,
    Strings,
    WindBrass,
}

impl StemId {
    pub const ALL: [StemId; 7] = [
        StemId::Piano,
        StemId::Drums,
        StemId::Bass,
        StemId::AcousticGuitar,
        StemId::ElectricGuitar,
        StemId::Strings,
        StemId::WindBrass,
    ];

    /// Machine tag used in manifests and file names.
    pub fn tag(self) -> &'static str {
        match self {
            StemId::Piano => "piano",
            StemId::Drums => "drums",
            StemId::Bass => "bass",
            StemId::AcousticGuitar => "acoustic_guitar",
            StemId::ElectricGuitar => "electric_guitar",
            StemId::Strings => "strings",
            StemId::WindBrass => "wind_brass",
        }
    }

    /// Canonical English search keyword for the stem itself.
    pub fn keyword(self) -> &'static str {
        match self {
            StemId::Piano => "piano",
            StemId::Drums => "drums",
            StemId::Bass => "bass",
            StemId::AcousticGuitar => "acoustic guitar",
            StemId::ElectricGuitar => "electric guitar",
            StemId::Strings => "strings",
            StemId::WindBrass => "wind brass",
        }
    }
}

impl fmt::Display for StemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for StemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let norm = match norm.as_str() {
            "wind_and_brass" | "windbrass" => "wind_brass",
            "acousticguitar" => "acoustic_guitar",
            "electricguitar" => "electric_guitar",
            other => other,
        };
        StemId::ALL.iter().copied().find(|stem| stem.tag() == norm).ok_or_else(|| Error::UnknownStem(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stem {
    pub id: StemId,
    pub sub_tracks: Vec<String>,
}

impl Stem {
    /// Keywords that are actually queried for this stem.
    pub fn query_keywords(&self) -> Vec<&str> {
        if self.sub_tracks.is_empty() {
            vec![self.id.keyword()]
        } else {
            self.sub_tracks.iter().map(String::as_str).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    stems: Vec<Stem>,
}

const STRINGS_SUBS: [&str; 4] = ["cello", "viola", "violin", "double bass"];

const WIND_BRASS_SUBS: [&str; 13] = [
    "trombone",
    "trumpet",
    "tuba",
    "euphonium",
    "french horn",
    "english horn",
    "bassoon",
    "clarinet",
    "contra bassoon",
    "flute",
    "oboe",
    "piccolo",
    "saxophone",
];

impl Default for Taxonomy {
    fn default() -> Self {
        let stems = StemId::ALL
            .iter()
            .map(|&id| {
                let subs: &[&str] = match id {
                    StemId::Strings => &STRINGS_SUBS,
                    StemId::WindBrass => &WIND_BRASS_SUBS,
                    _ => &[],
                };
                Stem { id, sub_tracks: subs.iter().map(|s| s.to_string()).collect() }
            })
            .collect();
        Taxonomy { stems }
    }
}

impl Taxonomy {
    /// Builds a taxonomy with custom sub-track lists. Every stem must appear once,
    /// in canonical order, and only Strings and WindBrass may carry sub-tracks.
    pub fn new(stems: Vec<Stem>) -> Result<Self> {
        let taxonomy = Taxonomy { stems };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn validate(&self) -> Result<()> {
        let ids: Vec<StemId> = self.stems.iter().map(|s| s.id).collect();
        if ids != StemId::ALL {
            return Err(Error::param("taxonomy", format!("expected the 7 stems in canonical order, got {ids:?}")));
        }
        for stem in &self.stems {
            let grouped = matches!(stem.id, StemId::Strings | StemId::WindBrass);
            if grouped && stem.sub_tracks.is_empty() {
                return Err(Error::param("taxonomy", format!("{} requires sub-tracks", stem.id)));
            }
            if !grouped && !stem.sub_tracks.is_empty() {
                return Err(Error::param("taxonomy", format!("{} takes no sub-tracks", stem.id)));
            }
        }
        Ok(())
    }

    pub fn stems(&self) -> &[Stem] {
        &self.stems
    }

    pub fn stem(&self, id: StemId) -> &Stem {
        // validate() guarantees every id is present exactly once
        self.stems.iter().find(|s| s.id == id).expect("stem present")
    }

    /// All queried keywords in taxonomy order, paired with their stem.
    pub fn keywords(&self) -> Vec<(StemId, &str)> {
        self.stems.iter().flat_map(|stem| stem.query_keywords().into_iter().map(move |k| (stem.id, k))).collect()
    }
}

/// Keyword for the "solo" token of the query template.
pub const SOLO_KEY: &str = "solo";
pub const DEFAULT_PATTERN: &str = "{instrument} {solo}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub language_tag: String,
    pub pattern: String,
    /// Canonical English keyword (and `"solo"`) → localized string.
    /// Empty strings count as missing.
    pub translations: BTreeMap<String, String>,
}

impl QueryTemplate {
    fn lookup(&self, keyword: &str) -> Option<&str> {
        self.translations.get(keyword).map(|s| s.trim()).filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Query {
    pub stem: StemId,
    pub language_tag: String,
    pub keyword: String,
    pub text: String,
    /// True when any part of the query fell back to canonical English.
    pub fallback: bool,
}

impl Query {
    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{}", self.stem, self.language_tag, self.text)
    }

    pub fn from_tsv(line: &str) -> Result<Self> {
        let mut parts = line.splitn(3, '\t');
        let (Some(stem), Some(lang), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::param("query line", format!("expected 3 tab-separated fields: {line:?}")));
        };
        Ok(Query {
            stem: stem.parse()?,
            language_tag: lang.to_string(),
            keyword: String::new(),
            text: text.to_string(),
            fallback: false,
        })
    }
}

/// Expands every queried keyword against every template.
///
/// Output order is stems, then keywords, then languages in template order.
pub fn expand_queries(taxonomy: &Taxonomy, templates: &[QueryTemplate], allow_fallback: bool) -> Result<Vec<Query>> {
    if templates.is_empty() {
        return Err(Error::NoTemplates);
    }
    taxonomy.validate()?;

    let mut out = Vec::new();
    for (stem, keyword) in taxonomy.keywords() {
        for template in templates {
            let mut fallback = false;
            let mut localize = |key: &str| -> Result<String> {
                match template.lookup(key) {
                    Some(s) => Ok(s.to_string()),
                    None if allow_fallback => {
                        fallback = true;
                        Ok(key.to_string())
                    }
                    None => Err(Error::MissingTranslation {
                        keyword: key.to_string(),
                        language: template.language_tag.clone(),
                    }),
                }
            };
            let instrument = localize(keyword)?;
            let solo = localize(SOLO_KEY)?;
            let text = template.pattern.replace("{instrument}", &instrument).replace("{solo}", &solo);
            out.push(Query {
                stem,
                language_tag: template.language_tag.clone(),
                keyword: keyword.to_string(),
                text,
                fallback,
            });
        }
    }
    Ok(out)
}

/// On-disk translation config: `language_tag → { keyword → localized }`.
///
/// A `"_pattern"` entry overrides the default `"{instrument} {solo}"` template
/// for that language. Languages keep file order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TranslationConfig(pub serde_json::Map<String, serde_json::Value>);

const PATTERN_KEY: &str = "_pattern";

/// Placeholder tags for the eight non-English languages.
pub const PLACEHOLDER_LANGUAGES: [&str; 8] =
    ["lang-2", "lang-3", "lang-4", "lang-5", "lang-6", "lang-7", "lang-8", "lang-9"];

impl TranslationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(path))
    }

    /// English translations plus eight empty language slots.
    pub fn default_config(taxonomy: &Taxonomy) -> Self {
        let mut english = serde_json::Map::new();
        let mut empty = serde_json::Map::new();
        for (_, keyword) in taxonomy.keywords() {
            english.insert(keyword.to_string(), keyword.into());
            empty.insert(keyword.to_string(), "".into());
        }
        english.insert(SOLO_KEY.into(), SOLO_KEY.into());
        empty.insert(SOLO_KEY.into(), "".into());

        let mut root = serde_json::Map::new();
        root.insert("en".into(), english.into());
        for tag in PLACEHOLDER_LANGUAGES {
            root.insert(tag.into(), empty.clone().into());
        }
        TranslationConfig(root)
    }

    pub fn templates(&self) -> Result<Vec<QueryTemplate>> {
        self.0
            .iter()
            .map(|(tag, table)| {
                let table = table
                    .as_object()
                    .ok_or_else(|| Error::param("translation config", format!("{tag}: expected an object")))?;
                let mut translations = BTreeMap::new();
                let mut pattern = DEFAULT_PATTERN.to_string();
                for (key, value) in table {
                    let value = value
                        .as_str()
                        .ok_or_else(|| Error::param("translation config", format!("{tag}.{key}: expected a string")))?;
                    if key == PATTERN_KEY {
                        pattern = value.to_string();
                    } else {
                        translations.insert(key.clone(), value.to_string());
                    }
                }
                if !pattern.contains("{instrument}") {
                    return Err(Error::param("translation config", format!("{tag}: pattern lacks {{instrument}}")));
                }
                Ok(QueryTemplate { language_tag: tag.clone(), pattern, translations })
            })
            .collect()
    }
}
