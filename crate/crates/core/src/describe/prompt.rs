use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assets::{AssetFile, AssetSource};
use crate::error::{Error, Result};
use crate::gateway::ChatRequest;

pub const CLUSTER_ID_PLACEHOLDER: &str = "{CLUSTER_ID}";
pub const CAPTIONS_PLACEHOLDER: &str = "{IMAGE_CAPTIONS}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Standard,
    Cot,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 2] = [PromptVariant::Standard, PromptVariant::Cot];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Standard => "standard",
            PromptVariant::Cot => "cot",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(PromptVariant::Standard),
            "cot" | "chain-of-thought" => Ok(PromptVariant::Cot),
            _ => Err(Error::Config(format!("unknown prompt variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

/// System and user templates for both prompt variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub standard: PromptTemplate,
    pub cot: PromptTemplate,
}

fn strip_final_newline(mut s: String) -> String {
    if s.ends_with('\n') {
        s.pop();
        if s.ends_with('\r') {
            s.pop();
        }
    }
    s
}

impl PromptTemplates {
    pub fn bundled() -> Self {
        Self::load(&AssetSource::embedded()).expect("bundled prompt assets")
    }

    pub fn load(src: &AssetSource) -> Result<Self> {
        let read = |f| src.read(f).map(|t| strip_final_newline(t.into_owned()));
        let templates = Self {
            standard: PromptTemplate {
                system: read(AssetFile::StandardSystem)?,
                user: read(AssetFile::StandardUser)?,
            },
            cot: PromptTemplate {
                system: read(AssetFile::CotSystem)?,
                user: read(AssetFile::CotUser)?,
            },
        };
        for v in PromptVariant::ALL {
            check_template(templates.get(v), v)?;
        }
        Ok(templates)
    }

    pub fn get(&self, variant: PromptVariant) -> &PromptTemplate {
        match variant {
            PromptVariant::Standard => &self.standard,
            PromptVariant::Cot => &self.cot,
        }
    }
}

/// `{NAME}` placeholders (upper case, digits, underscore) in `text`.
fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close)
                if close > 0
                    && after[..close]
                        .chars()
                        .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_') =>
            {
                out.push(&rest[open..open + close + 2]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn check_template(t: &PromptTemplate, variant: PromptVariant) -> Result<()> {
    for text in [&t.system, &t.user] {
        if let Some(p) = placeholders(text)
            .into_iter()
            .find(|p| *p != CLUSTER_ID_PLACEHOLDER && *p != CAPTIONS_PLACEHOLDER)
        {
            return Err(Error::Template(format!(
                "{variant} template has unresolved placeholder {p}"
            )));
        }
    }
    if !t.user.contains(CAPTIONS_PLACEHOLDER) {
        return Err(Error::Template(format!(
            "{variant} user template lacks {CAPTIONS_PLACEHOLDER}"
        )));
    }
    Ok(())
}

fn fill(template: &str, cluster_id: usize, caption_block: &str) -> String {
    template
        .replace(CLUSTER_ID_PLACEHOLDER, &cluster_id.to_string())
        .replace(CAPTIONS_PLACEHOLDER, caption_block)
}

/// Substitutes the cluster id and caption block into `variant`'s templates.
pub fn render_prompt(
    templates: &PromptTemplates,
    variant: PromptVariant,
    cluster_id: usize,
    caption_block: &str,
) -> Result<ChatRequest> {
    if caption_block.trim().is_empty() {
        return Err(Error::Template("caption block is empty".into()));
    }
    let t = templates.get(variant);
    check_template(t, variant)?;
    Ok(ChatRequest::new(
        fill(&t.system, cluster_id, caption_block),
        fill(&t.user, cluster_id, caption_block),
    ))
}
