//! On-disk shapes of the score and ranking files.

use std::path::Path;

use abss_core::selection::NfeReport;
use abss_core::{Error, RankingResult, Result, ScoreTable, ScoringConfig, TokenCategory};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::output::read_text;

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreFile {
    pub tables: Vec<ScoreTable>,
}

impl ScoreFile {
    /// Accepts `{"tables": [...]}`, a bare array of tables or one table.
    pub fn load(path: &Path) -> Result<Self> {
        let schema = |e: serde_json::Error| Error::Schema(format!("{}: not a score file: {e}", path.display()));
        let mut doc: Value = serde_json::from_str(&read_text(path)?).map_err(schema)?;
        if let Some(tables) = doc.get_mut("tables") {
            doc = tables.take();
        }
        let tables = if doc.is_array() {
            serde_json::from_value(doc).map_err(schema)?
        } else {
            vec![serde_json::from_value(doc).map_err(schema)?]
        };
        Ok(ScoreFile { tables })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankEntry {
    pub prompt_id: String,
    pub timestep_index: usize,
    pub token_category: TokenCategory,
    pub config: ScoringConfig,
    #[serde(flatten)]
    pub ranking: RankingResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfe: Option<NfeReport>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankFile {
    pub rankings: Vec<RankEntry>,
}

impl RankFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let file: RankFile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: not a ranking file: {e}", path.display())))?;
        if file.rankings.is_empty() {
            return Err(Error::Usage(format!("{}: no rankings", path.display())));
        }
        Ok(file)
    }
}
