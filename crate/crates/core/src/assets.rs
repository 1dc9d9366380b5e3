//! Bundled data files: stopwords, lemma rules, the POS lexicon and the
//! prompt templates.
//!
//! Every asset is compiled into the binary and can be overridden at run time
//! by pointing an [`AssetSource`] at a directory holding files of the same
//! name. Missing files in the override directory fall back to the bundled
//! copy.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssetFile {
    Stopwords,
    LemmaRules,
    PosLexicon,
    StandardSystem,
    StandardUser,
    CotSystem,
    CotUser,
}

impl AssetFile {
    pub const ALL: [AssetFile; 7] = [
        AssetFile::Stopwords,
        AssetFile::LemmaRules,
        AssetFile::PosLexicon,
        AssetFile::StandardSystem,
        AssetFile::StandardUser,
        AssetFile::CotSystem,
        AssetFile::CotUser,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            AssetFile::Stopwords => "stopwords.txt",
            AssetFile::LemmaRules => "lemma_rules.txt",
            AssetFile::PosLexicon => "pos_lexicon.txt",
            AssetFile::StandardSystem => "standard_system.txt",
            AssetFile::StandardUser => "standard_user.txt",
            AssetFile::CotSystem => "cot_system.txt",
            AssetFile::CotUser => "cot_user.txt",
        }
    }

    pub fn embedded(self) -> &'static str {
        match self {
            AssetFile::Stopwords => include_str!("../assets/stopwords.txt"),
            AssetFile::LemmaRules => include_str!("../assets/lemma_rules.txt"),
            AssetFile::PosLexicon => include_str!("../assets/pos_lexicon.txt"),
            AssetFile::StandardSystem => include_str!("../assets/standard_system.txt"),
            AssetFile::StandardUser => include_str!("../assets/standard_user.txt"),
            AssetFile::CotSystem => include_str!("../assets/cot_system.txt"),
            AssetFile::CotUser => include_str!("../assets/cot_user.txt"),
        }
    }
}

/// Where assets are read from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssetSource {
    dir: Option<PathBuf>,
}

impl AssetSource {
    pub fn embedded() -> Self {
        Self { dir: None }
    }

    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn read(&self, file: AssetFile) -> Result<Cow<'static, str>> {
        if let Some(dir) = &self.dir {
            let path = dir.join(file.file_name());
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                return Ok(Cow::Owned(text));
            }
        }
        Ok(Cow::Borrowed(file.embedded()))
    }
}

/// Non-empty, non-comment lines of a list asset, trimmed.
pub(crate) fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_dir_falls_back_per_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("stopwords.txt"), "foo\nbar\n").unwrap();
        let src = AssetSource::from_dir(dir.path());
        assert_eq!(src.read(AssetFile::Stopwords).unwrap(), "foo\nbar\n");
        assert_eq!(
            src.read(AssetFile::CotUser).unwrap(),
            AssetFile::CotUser.embedded()
        );
    }

    #[test]
    fn entries_skip_comments_and_blanks() {
        let got: Vec<_> = entries("# header\n\n a \nb\n").collect();
        assert_eq!(got, vec!["a", "b"]);
    }
}
