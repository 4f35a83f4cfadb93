//! JSON manifest binding ATTN tensors to prompts, seeds and timesteps.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tensor::{read_tensor_file, AttnTensor};
use crate::error::{Error, Result};

/// Tolerance on per-row sums of a `dit_joint` matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Unet,
    Dit,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Unet => "unet",
            ModelFamily::Dit => "dit",
        })
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unet" => Ok(ModelFamily::Unet),
            "dit" => Ok(ModelFamily::Dit),
            other => Err(Error::usage(format!("unknown model family {other:?}"))),
        }
    }
}

/// How the tensor behind a record is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    /// `(m, h*w, n)`: per-head/per-block maps before averaging.
    StackedQn,
    /// `(h, w, n)`: maps already averaged over the stacked axis.
    AggregatedHwn,
    /// `(M+N, M+N)`: head-averaged, row-softmaxed joint self-attention.
    DitJoint,
}

/// One manifest entry, field-for-field the on-disk JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub prompt_id: String,
    pub prompt_text: String,
    pub seed: u64,
    /// 1-based inference step at which the tensor was captured.
    pub timestep_index: usize,
    pub total_steps: usize,
    pub model_family: ModelFamily,
    pub tensor_kind: TensorKind,
    pub spatial: Option<(usize, usize)>,
    pub token_count: usize,
    pub image_token_count: Option<usize>,
    pub hooked_layer: Option<usize>,
    pub tensor_path: PathBuf,
}

impl SeedManifest {
    pub fn label(&self) -> String {
        format!("(prompt {}, seed {})", self.prompt_id, self.seed)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<SeedManifest>,
}

/// A manifest entry together with its loaded tensor.
#[derive(Debug, Clone)]
pub struct SeedRecord {
    pub meta: SeedManifest,
    pub tensor: Arc<AttnTensor>,
}

impl SeedRecord {
    /// Binds `tensor` to `meta` after the same checks `load_manifest` applies.
    pub fn new(meta: SeedManifest, tensor: AttnTensor) -> Result<Self> {
        if let Some(problem) = check_record(&meta, &tensor).into_iter().next() {
            return Err(Error::Consistency {
                record: meta.label(),
                detail: problem.message,
            });
        }
        Ok(Self {
            meta,
            tensor: Arc::new(tensor),
        })
    }

    pub fn seed(&self) -> u64 {
        self.meta.seed
    }

    pub fn prompt_id(&self) -> &str {
        &self.meta.prompt_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Schema,
    Io,
    Format,
    Truncated,
    InvalidElement,
    Timestep,
    Family,
    Shape,
    RowSum,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::Schema => "schema",
            DiagnosticKind::Io => "io",
            DiagnosticKind::Format => "format",
            DiagnosticKind::Truncated => "truncated",
            DiagnosticKind::InvalidElement => "invalid_element",
            DiagnosticKind::Timestep => "timestep",
            DiagnosticKind::Family => "family",
            DiagnosticKind::Shape => "shape",
            DiagnosticKind::RowSum => "row_sum",
        }
    }

    fn of(err: &Error) -> Self {
        match err {
            Error::Io { .. } | Error::Stream(_) => DiagnosticKind::Io,
            Error::Truncated { .. } => DiagnosticKind::Truncated,
            Error::InvalidElement { .. } => DiagnosticKind::InvalidElement,
            Error::Schema(_) => DiagnosticKind::Schema,
            Error::InRecord { source, .. } => DiagnosticKind::of(source),
            _ => DiagnosticKind::Format,
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    /// Position in the `records` array; `None` for manifest-level problems.
    pub record: Option<usize>,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = self.kind;
        match self.record {
            Some(i) => write!(f, "record {i}: [{kind}] {}", self.message),
            None => write!(f, "manifest: [{kind}] {}", self.message),
        }
    }
}

/// Checks a record's metadata against its tensor; returns every problem found.
pub fn check_record(meta: &SeedManifest, tensor: &AttnTensor) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| {
        out.push(Diagnostic {
            record: None,
            kind,
            message: format!("{} {message}", meta.label()),
        })
    };

    if meta.timestep_index < 1 || meta.timestep_index > meta.total_steps {
        push(
            DiagnosticKind::Timestep,
            format!(
                "timestep_index {} outside 1..={}",
                meta.timestep_index, meta.total_steps
            ),
        );
    }
    if meta.token_count == 0 {
        push(DiagnosticKind::Shape, "token_count is zero".into());
    }

    let shape = tensor.shape();
    match meta.tensor_kind {
        TensorKind::StackedQn | TensorKind::AggregatedHwn => {
            if meta.model_family != ModelFamily::Unet {
                push(
                    DiagnosticKind::Family,
                    format!("tensor_kind {:?} requires model_family unet", meta.tensor_kind),
                );
            }
            let Some((h, w)) = meta.spatial else {
                push(DiagnosticKind::Shape, "unet record lacks `spatial`".into());
                return out;
            };
            let expected: Option<Vec<usize>> = match meta.tensor_kind {
                TensorKind::StackedQn => {
                    if shape.len() == 3 {
                        Some(vec![shape[0], h * w, meta.token_count])
                    } else {
                        None
                    }
                }
                _ => Some(vec![h, w, meta.token_count]),
            };
            match expected {
                Some(exp) if exp.as_slice() == shape => {}
                Some(exp) => push(
                    DiagnosticKind::Shape,
                    format!("declares shape {exp:?} but tensor file has {shape:?}"),
                ),
                None => push(
                    DiagnosticKind::Shape,
                    format!("stacked_qn expects a 3D tensor, got {shape:?}"),
                ),
            }
        }
        TensorKind::DitJoint => {
            if meta.model_family != ModelFamily::Dit {
                push(
                    DiagnosticKind::Family,
                    "tensor_kind dit_joint requires model_family dit".into(),
                );
            }
            let Some(m) = meta.image_token_count else {
                push(DiagnosticKind::Shape, "dit record lacks `image_token_count`".into());
                return out;
            };
            let side = m + meta.token_count;
            if shape != [side, side] {
                push(
                    DiagnosticKind::Shape,
                    format!("declares joint shape [{side}, {side}] but tensor file has {shape:?}"),
                );
                return out;
            }
            for (row, values) in tensor.data().chunks_exact(side).enumerate() {
                let sum: f64 = values.iter().map(|&v| v as f64).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    push(
                        DiagnosticKind::RowSum,
                        format!("joint row {row} sums to {sum:.6}, expected 1 ± {ROW_SUM_TOLERANCE}"),
                    );
                }
            }
        }
    }
    out
}

fn parse_manifest(path: &Path) -> Result<Vec<SeedManifest>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: not valid JSON: {e}", path.display())))?;
    let records = doc
        .get("records")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema("missing field `records` (array)".into()))?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            serde_json::from_value::<SeedManifest>(r.clone())
                .map_err(|e| Error::Schema(format!("record {i}: {e}")))
        })
        .collect()
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_one(base: &Path, index: usize, meta: SeedManifest) -> Result<SeedRecord> {
    let label = format!("{index} {}", meta.label());
    let tensor = read_tensor_file(base.join(&meta.tensor_path)).map_err(|e| e.in_record(&label))?;
    if let Some(problem) = check_record(&meta, &tensor).into_iter().next() {
        return Err(Error::Consistency {
            record: label,
            detail: problem.message,
        });
    }
    Ok(SeedRecord {
        meta,
        tensor: Arc::new(tensor),
    })
}

/// Loads every record and its tensor; tensor paths resolve against the
/// manifest's directory. Fails on the first bad record.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SeedRecord>> {
    let path = path.as_ref();
    let base = base_dir(path);
    parse_manifest(path)?
        .into_iter()
        .enumerate()
        .map(|(i, meta)| load_one(&base, i, meta))
        .collect()
}

/// Loads a manifest whose records span several timesteps. A bad record
/// poisons only its own timestep's pool.
pub fn load_manifest_by_timestep(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<usize, Result<Vec<SeedRecord>>>> {
    let path = path.as_ref();
    let base = base_dir(path);
    let mut pools: BTreeMap<usize, Result<Vec<SeedRecord>>> = BTreeMap::new();
    for (i, meta) in parse_manifest(path)?.into_iter().enumerate() {
        let t = meta.timestep_index;
        let loaded = load_one(&base, i, meta);
        let slot = pools.entry(t).or_insert_with(|| Ok(Vec::new()));
        match (slot, loaded) {
            (Ok(pool), Ok(rec)) => pool.push(rec),
            (slot @ Ok(_), Err(e)) => *slot = Err(e),
            (Err(_), _) => {}
        }
    }
    Ok(pools)
}

/// Outcome of checking a whole manifest.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub records_checked: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Checks every record against its tensor file and collects all failures.
/// Never returns early: unreadable manifests become a single diagnostic.
pub fn validate_manifest(path: impl AsRef<Path>) -> ValidationReport {
    let path = path.as_ref();
    let mut report = ValidationReport::default();

    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            report.diagnostics.push(Diagnostic {
                record: None,
                kind: DiagnosticKind::Io,
                message: format!("{}: {e}", path.display()),
            });
            return report;
        }
    };
    let records = match serde_json::from_str::<Value>(&text)
        .ok()
        .and_then(|v| v.get("records").and_then(Value::as_array).cloned())
    {
        Some(r) => r,
        None => {
            report.diagnostics.push(Diagnostic {
                record: None,
                kind: DiagnosticKind::Schema,
                message: "not a JSON object with a `records` array".into(),
            });
            return report;
        }
    };

    let base = base_dir(path);
    for (i, raw) in records.into_iter().enumerate() {
        report.records_checked += 1;
        let meta = match serde_json::from_value::<SeedManifest>(raw) {
            Ok(m) => m,
            Err(e) => {
                report.diagnostics.push(Diagnostic {
                    record: Some(i),
                    kind: DiagnosticKind::Schema,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match read_tensor_file(base.join(&meta.tensor_path)) {
            Ok(tensor) => report
                .diagnostics
                .extend(check_record(&meta, &tensor).into_iter().map(|mut d| {
                    d.record = Some(i);
                    d
                })),
            Err(e) => report.diagnostics.push(Diagnostic {
                record: Some(i),
                kind: DiagnosticKind::of(&e),
                message: format!("{} {e}", meta.label()),
            }),
        }
    }
    report
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SeedManifest]) -> Result<()> {
    let path = path.as_ref();
    let doc = Manifest {
        records: records.to_vec(),
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Groups records into screening pools keyed by `(prompt_id, timestep_index)`.
pub fn group_pools(records: Vec<SeedRecord>) -> BTreeMap<(String, usize), Vec<SeedRecord>> {
    let mut pools: BTreeMap<(String, usize), Vec<SeedRecord>> = BTreeMap::new();
    for r in records {
        pools
            .entry((r.meta.prompt_id.clone(), r.meta.timestep_index))
            .or_default()
            .push(r);
    }
    pools
}
