//! Lexicon part-of-speech tagger. Words missing from the lexicon are nouns.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::assets::{entries, AssetFile, AssetSource};
use crate::error::{Error, Result};

use super::tfidf::KeywordScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Num,
    Other,
}

impl std::str::FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "NOUN" => PosTag::Noun,
            "VERB" => PosTag::Verb,
            "ADJ" => PosTag::Adj,
            "ADV" => PosTag::Adv,
            "NUM" => PosTag::Num,
            "OTHER" => PosTag::Other,
            _ => return Err(format!("unknown tag {s:?}")),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PosLexicon {
    tags: HashMap<String, PosTag>,
}

impl PosLexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut tags = HashMap::new();
        for (no, line) in entries(text).enumerate() {
            let mut parts = line.split_whitespace();
            let (Some(word), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse {
                    line: no + 1,
                    message: format!("POS lexicon entry {line:?} is not `word<TAB>TAG`"),
                });
            };
            let tag = tag.parse().map_err(|message| Error::Parse {
                line: no + 1,
                message,
            })?;
            tags.insert(word.to_lowercase(), tag);
        }
        Ok(Self { tags })
    }

    pub fn from_source(src: &AssetSource) -> Result<Self> {
        Self::parse(&src.read(AssetFile::PosLexicon)?)
    }

    pub fn bundled() -> &'static PosLexicon {
        static BUNDLED: OnceLock<PosLexicon> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            PosLexicon::from_source(&AssetSource::embedded()).expect("bundled POS lexicon")
        })
    }

    pub fn tag(&self, word: &str) -> PosTag {
        self.tags.get(word).copied().unwrap_or(PosTag::Noun)
    }

    pub fn is_noun_term(&self, term: &str) -> bool {
        term.split(' ')
            .next_back()
            .is_some_and(|head| self.tag(head) == PosTag::Noun)
    }
}

/// Keeps unigrams tagged noun and bigrams whose last word is a noun, in order.
pub fn filter_nouns(keywords: &[KeywordScore], lexicon: &PosLexicon) -> Vec<KeywordScore> {
    keywords
        .iter()
        .filter(|k| lexicon.is_noun_term(&k.term))
        .cloned()
        .collect()
}
