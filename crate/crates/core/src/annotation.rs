//! Per-prompt token index sets (core tokens and the ablation categories).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenCategory {
    Core,
    Adjectives,
    Verbs,
    Prepositions,
}

impl TokenCategory {
    pub const ALL: [TokenCategory; 4] = [
        TokenCategory::Core,
        TokenCategory::Adjectives,
        TokenCategory::Verbs,
        TokenCategory::Prepositions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenCategory::Core => "core",
            TokenCategory::Adjectives => "adjectives",
            TokenCategory::Verbs => "verbs",
            TokenCategory::Prepositions => "prepositions",
        }
    }
}

impl fmt::Display for TokenCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "core" | "core_tokens" => Ok(TokenCategory::Core),
            "adj" | "adjective" | "adjectives" => Ok(TokenCategory::Adjectives),
            "verb" | "verbs" => Ok(TokenCategory::Verbs),
            "prep" | "preposition" | "prepositions" => Ok(TokenCategory::Prepositions),
            other => Err(Error::usage(format!("unknown token category {other:?}"))),
        }
    }
}

/// Token indices for one prompt. Index 0 is BOS and `token_count - 1` is EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub prompt_id: String,
    pub token_count: usize,
    #[serde(rename = "core_tokens")]
    pub core: BTreeSet<usize>,
    #[serde(default)]
    pub adjectives: BTreeSet<usize>,
    #[serde(default)]
    pub verbs: BTreeSet<usize>,
    #[serde(default)]
    pub prepositions: BTreeSet<usize>,
}

impl TokenAnnotation {
    pub fn new(prompt_id: impl Into<String>, token_count: usize, core: impl IntoIterator<Item = usize>) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            token_count,
            core: core.into_iter().collect(),
            adjectives: BTreeSet::new(),
            verbs: BTreeSet::new(),
            prepositions: BTreeSet::new(),
        }
    }

    pub fn tokens(&self, category: TokenCategory) -> &BTreeSet<usize> {
        match category {
            TokenCategory::Core => &self.core,
            TokenCategory::Adjectives => &self.adjectives,
            TokenCategory::Verbs => &self.verbs,
            TokenCategory::Prepositions => &self.prepositions,
        }
    }

    pub fn tokens_mut(&mut self, category: TokenCategory) -> &mut BTreeSet<usize> {
        match category {
            TokenCategory::Core => &mut self.core,
            TokenCategory::Adjectives => &mut self.adjectives,
            TokenCategory::Verbs => &mut self.verbs,
            TokenCategory::Prepositions => &mut self.prepositions,
        }
    }

    pub fn is_special(&self, index: usize) -> bool {
        index == 0 || index + 1 == self.token_count
    }

    /// Range and pairwise-disjointness checks.
    pub fn validate(&self) -> Result<()> {
        if self.token_count == 0 {
            return Err(Error::Schema(format!(
                "annotation {:?}: token_count is zero",
                self.prompt_id
            )));
        }
        for cat in TokenCategory::ALL {
            if let Some(&bad) = self.tokens(cat).iter().find(|&&i| i >= self.token_count) {
                return Err(Error::Index {
                    index: bad,
                    detail: format!(
                        "in {cat} of prompt {:?} is outside 0..{}",
                        self.prompt_id, self.token_count
                    ),
                });
            }
        }
        for (a_pos, a) in TokenCategory::ALL.iter().enumerate() {
            for b in &TokenCategory::ALL[a_pos + 1..] {
                if let Some(&shared) = self.tokens(*a).intersection(self.tokens(*b)).next() {
                    return Err(Error::Schema(format!(
                        "annotation {:?}: token {shared} is in both {a} and {b}",
                        self.prompt_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Annotations keyed by prompt id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotations(BTreeMap<String, TokenAnnotation>);

#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationDoc {
    Wrapped { annotations: Vec<TokenAnnotation> },
    List(Vec<TokenAnnotation>),
    Single(TokenAnnotation),
}

impl Annotations {
    pub fn new(items: impl IntoIterator<Item = TokenAnnotation>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for a in items {
            a.validate()?;
            let id = a.prompt_id.clone();
            if map.insert(id.clone(), a).is_some() {
                return Err(Error::Schema(format!("duplicate annotation for prompt {id:?}")));
            }
        }
        Ok(Self(map))
    }

    pub fn get(&self, prompt_id: &str) -> Option<&TokenAnnotation> {
        self.0.get(prompt_id)
    }

    /// Like [`Annotations::get`] but a missing prompt is a usage error.
    pub fn require(&self, prompt_id: &str) -> Result<&TokenAnnotation> {
        self.get(prompt_id)
            .ok_or_else(|| Error::usage(format!("no annotation for prompt {prompt_id:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &TokenAnnotation> {
        self.0.values()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Accepts a single annotation object, a JSON array of them, or
    /// `{"annotations": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AnnotationDoc = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("annotations: {e}")))?;
        match doc {
            AnnotationDoc::Wrapped { annotations } | AnnotationDoc::List(annotations) => {
                Self::new(annotations)
            }
            AnnotationDoc::Single(a) => Self::new([a]),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let list: Vec<&TokenAnnotation> = self.iter().collect();
        serde_json::to_string_pretty(&list).expect("annotations serialize")
    }
}

impl IntoIterator for Annotations {
    type Item = TokenAnnotation;
    type IntoIter = std::collections::btree_map::IntoValues<String, TokenAnnotation>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_index_schema() {
        let a = Annotations::from_json(
            r#"{"prompt_id": "p1", "token_count": 8, "core_tokens": [2],
                "adjectives": [1], "verbs": [3], "prepositions": [4, 5]}"#,
        )
        .unwrap();
        let p = a.require("p1").unwrap();
        assert_eq!(p.core, BTreeSet::from([2]));
        assert_eq!(p.tokens(TokenCategory::Prepositions).len(), 2);
        assert!(p.is_special(0) && p.is_special(7) && !p.is_special(3));
    }

    #[test]
    fn accepts_list_and_wrapped_forms() {
        let one = r#"{"prompt_id": "a", "token_count": 4, "core_tokens": [1]}"#;
        let two = r#"{"prompt_id": "b", "token_count": 4, "core_tokens": [2]}"#;
        assert_eq!(Annotations::from_json(&format!("[{one},{two}]")).unwrap().len(), 2);
        assert_eq!(
            Annotations::from_json(&format!(r#"{{"annotations": [{one}]}}"#)).unwrap().len(),
            1
        );
    }

    #[test]
    fn rejects_overlap_and_out_of_range() {
        let mut a = TokenAnnotation::new("p", 5, [1, 2]);
        a.verbs.insert(2);
        assert!(matches!(a.validate(), Err(Error::Schema(_))));
        let b = TokenAnnotation::new("p", 5, [5]);
        assert!(matches!(b.validate(), Err(Error::Index { index: 5, .. })));
    }

    #[test]
    fn duplicate_prompt_is_rejected() {
        let a = TokenAnnotation::new("p", 5, [1]);
        assert!(Annotations::new([a.clone(), a]).is_err());
    }

    #[test]
    fn category_names_parse() {
        assert_eq!("verbs".parse::<TokenCategory>().unwrap(), TokenCategory::Verbs);
        assert_eq!("ADJ".parse::<TokenCategory>().unwrap(), TokenCategory::Adjectives);
        assert!("nouns".parse::<TokenCategory>().is_err());
    }
}
