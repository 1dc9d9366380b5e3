//! Caption preprocessing: tokenization, stopword removal and a rule-based
//! suffix normalizer standing in for a dictionary lemmatizer.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::assets::{entries, AssetFile, AssetSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedCaption {
    pub source_image_id: String,
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SuffixRule {
    suffix: String,
    replacement: String,
    min_stem: usize,
    undouble: bool,
}

/// Deterministic suffix-stripping normalizer loaded from `lemma_rules.txt`.
#[derive(Debug, Clone, Default)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
    rules: Vec<SuffixRule>,
}

impl Lemmatizer {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lem = Lemmatizer::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse {
                line: no + 1,
                message: format!("malformed lemma rule {line:?}"),
            };
            if fields[0] == "=" {
                if fields.len() != 3 {
                    return Err(bad());
                }
                lem.exceptions
                    .insert(fields[1].to_string(), fields[2].to_string());
                continue;
            }
            if !(3..=4).contains(&fields.len()) {
                return Err(bad());
            }
            let undouble = match fields.get(3) {
                None => false,
                Some(&"undouble") => true,
                Some(_) => return Err(bad()),
            };
            lem.rules.push(SuffixRule {
                suffix: fields[0].to_string(),
                replacement: if fields[1] == "-" {
                    String::new()
                } else {
                    fields[1].to_string()
                },
                min_stem: fields[2].parse().map_err(|_| bad())?,
                undouble,
            });
        }
        Ok(lem)
    }

    pub fn lemma(&self, word: &str) -> String {
        if let Some(l) = self.exceptions.get(word) {
            return l.clone();
        }
        for rule in &self.rules {
            let Some(stem) = word.strip_suffix(rule.suffix.as_str()) else {
                continue;
            };
            if stem.chars().count() < rule.min_stem {
                continue;
            }
            let mut out = stem.to_string();
            if rule.undouble {
                undouble(&mut out);
            }
            out.push_str(&rule.replacement);
            return out;
        }
        word.to_string()
    }
}

// Collapses "runn" -> "run"; l, s, z, f doubles are kept (fill, dress, buzz, stuff).
fn undouble(stem: &mut String) {
    let mut rev = stem.chars().rev();
    if let (Some(a), Some(b)) = (rev.next(), rev.next()) {
        if a == b && "bdgmnprt".contains(a) {
            stem.pop();
        }
    }
}

/// Lowercasing tokenizer with stopword filtering and lemma normalization.
#[derive(Debug, Clone)]
pub struct TextPreprocessor {
    stopwords: HashSet<String>,
    lemmatizer: Lemmatizer,
}

impl TextPreprocessor {
    pub fn new(stopwords: HashSet<String>, lemmatizer: Lemmatizer) -> Self {
        Self {
            stopwords,
            lemmatizer,
        }
    }

    pub fn from_source(src: &AssetSource) -> Result<Self> {
        let stop = src.read(AssetFile::Stopwords)?;
        let rules = src.read(AssetFile::LemmaRules)?;
        Ok(Self::new(
            entries(&stop).map(str::to_lowercase).collect(),
            Lemmatizer::parse(&rules)?,
        ))
    }

    /// The preprocessor built from the bundled assets.
    pub fn bundled() -> &'static TextPreprocessor {
        static BUNDLED: OnceLock<TextPreprocessor> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            TextPreprocessor::from_source(&AssetSource::embedded())
                .expect("bundled text assets are well-formed")
        })
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn lemmatizer(&self) -> &Lemmatizer {
        &self.lemmatizer
    }

    /// Lowercase alphanumeric runs with stopwords removed.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !self.stopwords.contains(*t))
            .map(str::to_string)
            .collect()
    }

    pub fn lemmas(&self, text: &str) -> Vec<String> {
        self.tokens(text)
            .iter()
            .map(|t| self.lemmatizer.lemma(t))
            .collect()
    }

    pub fn preprocess(&self, source_image_id: &str, text: &str) -> TokenizedCaption {
        let tokens = self.tokens(text);
        let lemmas = tokens.iter().map(|t| self.lemmatizer.lemma(t)).collect();
        TokenizedCaption {
            source_image_id: source_image_id.to_string(),
            tokens,
            lemmas,
        }
    }
}

/// Preprocesses one caption with the bundled assets. The returned caption has
/// an empty `source_image_id`.
pub fn preprocess_caption(text: &str) -> TokenizedCaption {
    TextPreprocessor::bundled().preprocess("", text)
}
