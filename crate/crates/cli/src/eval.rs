use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abss_core::evaluation::{
    corrupt_annotations, format_p_value, ndcg, overlap_rate, paired_t_test, timestep_sweep,
    token_ablation, EvalOptions, Gain, NdcgOptions, PairedSamples, QualitySet, SweepRow,
};
use abss_core::io::{load_manifest, load_manifest_by_timestep, SeedRecord};
use abss_core::{Annotations, Error, Result, TokenAnnotation, TokenCategory};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::files::RankFile;
use crate::output::{emit, fmt_opt, read_text, to_csv, to_json, Format};
use crate::{OutputArgs, ScoringArgs};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(subcommand)]
    command: EvalCommand,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Overlap of each ranking's top K with the quality top K.
    Overlap(OverlapArgs),
    /// NDCG of each ranking against its quality table.
    Ndcg(NdcgArgs),
    /// Paired t-test between two per-prompt metric files.
    Ttest(TtestArgs),
    /// NDCG and overlap at every captured timestep.
    Sweep(ExperimentArgs),
    /// NDCG, overlap and selected quality per token category.
    Ablation(AblationArgs),
    /// Replace the core tokens of a random subset of prompts.
    Corrupt(CorruptArgs),
}

#[derive(Debug, Args)]
struct OverlapArgs {
    #[arg(long)]
    ranking: PathBuf,
    #[arg(long)]
    quality: PathBuf,
    /// List length; defaults to each ranking's K.
    #[arg(long = "k", visible_alias = "K")]
    keep: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GainArg {
    Linear,
    Exponential,
}

#[derive(Debug, Args)]
struct NdcgFlags {
    #[arg(long, value_enum, default_value_t = GainArg::Linear)]
    gain: GainArg,
    /// Score only the first positions; full list when omitted.
    #[arg(long)]
    cutoff: Option<usize>,
}

impl NdcgFlags {
    fn options(&self) -> NdcgOptions {
        NdcgOptions {
            gain: match self.gain {
                GainArg::Linear => Gain::Linear,
                GainArg::Exponential => Gain::Exponential,
            },
            cutoff: self.cutoff,
        }
    }
}

#[derive(Debug, Args)]
struct NdcgArgs {
    #[arg(long)]
    ranking: PathBuf,
    #[arg(long)]
    quality: PathBuf,
    #[command(flatten)]
    ndcg: NdcgFlags,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct TtestArgs {
    /// Per-prompt values of method A: a JSON array, an object keyed by
    /// prompt id, or an `eval` report with `rows`.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Field to read from `rows` reports.
    #[arg(long, default_value = "ndcg")]
    metric: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    quality: PathBuf,
    /// Overlap list length.
    #[arg(long = "K", default_value_t = 3)]
    keep: usize,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    ndcg: NdcgFlags,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct AblationArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Categories to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "adjectives,verbs,prepositions,core")]
    categories: Vec<String>,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Fraction of prompts to corrupt.
    #[arg(long)]
    fraction: f64,
    /// Seed of the corruption draw.
    #[arg(long)]
    rng: u64,
    /// Corrupted annotations file (written atomically); stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<ExitCode> {
    match args.command {
        EvalCommand::Overlap(a) => overlap(a),
        EvalCommand::Ndcg(a) => ndcg_cmd(a),
        EvalCommand::Ttest(a) => ttest(a),
        EvalCommand::Sweep(a) => sweep(a),
        EvalCommand::Ablation(a) => ablation(a),
        EvalCommand::Corrupt(a) => corrupt(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct MetricReport<R> {
    metric: &'static str,
    mean: f64,
    rows: Vec<R>,
}

#[derive(Debug, Serialize)]
struct OverlapRow {
    prompt_id: String,
    k: usize,
    predicted: Vec<u64>,
    truth: Vec<u64>,
    overlap: f64,
}

fn overlap(a: OverlapArgs) -> Result<()> {
    let rankings = RankFile::load(&a.ranking)?;
    let quality = QualitySet::load(&a.quality)?;
    let mut rows = Vec::new();
    for r in &rankings.rankings {
        let order = r.ranking.order();
        let k = a.keep.unwrap_or(r.ranking.selected.len()).min(order.len());
        let truth = quality.require(&r.prompt_id)?.top_k(k)?;
        let predicted = order[..k].to_vec();
        let overlap = overlap_rate(&predicted, &truth)?;
        rows.push(OverlapRow {
            prompt_id: r.prompt_id.clone(),
            k,
            predicted,
            truth,
            overlap,
        });
    }
    let mean = rows.iter().map(|r| r.overlap).sum::<f64>() / rows.len() as f64;
    let report = MetricReport {
        metric: "overlap",
        mean,
        rows,
    };
    let text = match a.output.format {
        Format::Json => to_json(&report)?,
        Format::Csv => to_csv(
            &["prompt_id", "k", "overlap"],
            report
                .rows
                .iter()
                .map(|r| vec![r.prompt_id.clone(), r.k.to_string(), r.overlap.to_string()]),
        )?,
        Format::Text => {
            let mut out = format!("{:<20} {:>4} {:>8}\n", "prompt", "K", "overlap");
            for r in &report.rows {
                out += &format!("{:<20} {:>4} {:>8.4}\n", r.prompt_id, r.k, r.overlap);
            }
            out + &format!("{:<20} {:>4} {:>8.4}\n", "mean", "", report.mean)
        }
    };
    emit(a.output.out.as_deref(), &text)
}

#[derive(Debug, Serialize)]
struct NdcgRow {
    prompt_id: String,
    ndcg: f64,
    dcg: f64,
    idcg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    relevance_shift: Option<f64>,
}

fn ndcg_cmd(a: NdcgArgs) -> Result<()> {
    let rankings = RankFile::load(&a.ranking)?;
    let quality = QualitySet::load(&a.quality)?;
    let opts = a.ndcg.options();
    let mut rows = Vec::new();
    for r in &rankings.rankings {
        let res = ndcg(&r.ranking.order(), quality.require(&r.prompt_id)?, opts)
            .map_err(|e| Error::Usage(format!("prompt {:?}: {e}", r.prompt_id)))?;
        rows.push(NdcgRow {
            prompt_id: r.prompt_id.clone(),
            ndcg: res.ndcg,
            dcg: res.dcg,
            idcg: res.idcg,
            relevance_shift: res.relevance_shift,
        });
    }
    let mean = rows.iter().map(|r| r.ndcg).sum::<f64>() / rows.len() as f64;
    let report = MetricReport {
        metric: "ndcg",
        mean,
        rows,
    };
    let text = match a.output.format {
        Format::Json => to_json(&report)?,
        Format::Csv => to_csv(
            &["prompt_id", "ndcg", "dcg", "idcg"],
            report.rows.iter().map(|r| {
                vec![r.prompt_id.clone(), r.ndcg.to_string(), r.dcg.to_string(), r.idcg.to_string()]
            }),
        )?,
        Format::Text => {
            let mut out = format!("{:<20} {:>8}\n", "prompt", "NDCG");
            for r in &report.rows {
                out += &format!("{:<20} {:>8.4}\n", r.prompt_id, r.ndcg);
            }
            out + &format!("{:<20} {:>8.4}\n", "mean", report.mean)
        }
    };
    emit(a.output.out.as_deref(), &text)
}

/// Per-prompt values, keyed when the source carries prompt ids.
enum Values {
    Plain(Vec<f64>),
    Keyed(BTreeMap<String, f64>),
}

fn number(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Schema(format!("{what}: expected a number, got {v}")))
}

fn load_values(path: &Path, metric: &str) -> Result<Values> {
    let what = path.display().to_string();
    let doc: Value = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Schema(format!("{what}: not valid JSON: {e}")))?;
    match &doc {
        Value::Array(items) => Ok(Values::Plain(
            items.iter().map(|v| number(v, &what)).collect::<Result<_>>()?,
        )),
        Value::Object(map) if map.get("rows").is_some_and(Value::is_array) => {
            let rows = map["rows"].as_array().expect("checked");
            let mut out = BTreeMap::new();
            for row in rows {
                let id = row
                    .get("prompt_id")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Schema(format!("{what}: row without prompt_id")))?;
                let v = row
                    .get(metric)
                    .ok_or_else(|| Error::Schema(format!("{what}: row {id:?} has no field {metric:?}")))?;
                if out.insert(id.to_string(), number(v, &what)?).is_some() {
                    return Err(Error::Schema(format!("{what}: prompt {id:?} appears twice")));
                }
            }
            Ok(Values::Keyed(out))
        }
        Value::Object(map) => Ok(Values::Keyed(
            map.iter()
                .map(|(k, v)| Ok((k.clone(), number(v, &what)?)))
                .collect::<Result<_>>()?,
        )),
        _ => Err(Error::Schema(format!("{what}: expected an array or object of numbers"))),
    }
}

fn align(a: Values, b: Values) -> Result<PairedSamples> {
    match (a, b) {
        (Values::Plain(a), Values::Plain(b)) => PairedSamples::new(a, b),
        (Values::Keyed(a), Values::Keyed(b)) => {
            if a.len() != b.len() || !a.keys().all(|k| b.contains_key(k)) {
                return Err(Error::Usage("the two inputs cover different prompts".into()));
            }
            PairedSamples::new(a.into_values().collect(), b.into_values().collect())
        }
        _ => Err(Error::Usage(
            "cannot pair a plain list with prompt-keyed values".into(),
        )),
    }
}

#[derive(Debug, Serialize)]
struct TtestReport {
    n: usize,
    df: usize,
    t_statistic: f64,
    p_two_sided: f64,
    /// Report rendering; `null` when p > 0.15.
    p_display: Option<String>,
    mean_difference: f64,
    sd_difference: f64,
}

fn ttest(a: TtestArgs) -> Result<()> {
    let samples = align(load_values(&a.a, &a.metric)?, load_values(&a.b, &a.metric)?)?;
    let r = paired_t_test(&samples)?;
    let report = TtestReport {
        n: samples.len(),
        df: r.df,
        t_statistic: r.t_statistic,
        p_two_sided: r.p_two_sided,
        p_display: format_p_value(r.p_two_sided),
        mean_difference: r.mean_difference,
        sd_difference: r.sd_difference,
    };
    let p_text = report.p_display.clone().unwrap_or_default();
    let text = match a.output.format {
        Format::Json => to_json(&report)?,
        Format::Csv => to_csv(
            &["n", "df", "t", "p", "p_display", "mean_difference"],
            [vec![
                report.n.to_string(),
                report.df.to_string(),
                report.t_statistic.to_string(),
                report.p_two_sided.to_string(),
                p_text.clone(),
                report.mean_difference.to_string(),
            ]],
        )?,
        Format::Text => format!(
            "t = {:.4}  df = {}  p = {}\n",
            report.t_statistic,
            report.df,
            if p_text.is_empty() { "-".to_string() } else { p_text }
        ),
    };
    emit(a.output.out.as_deref(), &text)
}

fn load_inputs(a: &ExperimentArgs) -> Result<(Annotations, QualitySet, EvalOptions)> {
    if a.keep < 1 {
        return Err(Error::Usage("K must be at least 1".into()));
    }
    Ok((
        Annotations::load(&a.annotations)?,
        QualitySet::load(&a.quality)?,
        EvalOptions {
            k: a.keep,
            ndcg: a.ndcg.options(),
        },
    ))
}

#[derive(Debug, Serialize)]
struct PromptSweepRow {
    prompt_id: String,
    #[serde(flatten)]
    row: SweepRow,
}

fn sweep(a: ExperimentArgs) -> Result<()> {
    let (annotations, quality, options) = load_inputs(&a)?;
    let config = a.scoring.config();
    let by_t = load_manifest_by_timestep(&a.manifest)?;

    // Split each timestep's pool by prompt; a load failure hits every prompt.
    let mut prompts: BTreeMap<String, BTreeMap<usize, Result<Vec<SeedRecord>>>> = BTreeMap::new();
    let mut failures: BTreeMap<usize, String> = BTreeMap::new();
    for (t, pool) in by_t {
        match pool {
            Ok(records) => {
                for r in records {
                    let slot = prompts.entry(r.meta.prompt_id.clone()).or_default().entry(t);
                    if let Ok(v) = slot.or_insert_with(|| Ok(Vec::new())) {
                        v.push(r);
                    }
                }
            }
            Err(e) => {
                failures.insert(t, e.to_string());
            }
        }
    }
    if prompts.is_empty() {
        return Err(Error::Usage("no timestep pool could be loaded".into()));
    }
    let mut rows = Vec::new();
    for (prompt, mut pools) in prompts {
        for (&t, msg) in &failures {
            pools.insert(t, Err(Error::Validation(msg.clone())));
        }
        let q = quality.require(&prompt)?;
        for row in timestep_sweep(&pools, &annotations, a.scoring.token_category, &config, q, &options)? {
            rows.push(PromptSweepRow {
                prompt_id: prompt.clone(),
                row,
            });
        }
    }
    for r in &rows {
        if let Some(e) = &r.row.error {
            eprintln!("warning: prompt {} t = {}: {e}", r.prompt_id, r.row.timestep_index);
        }
    }

    let text = match a.output.format {
        Format::Json => to_json(&serde_json::json!({ "config": config, "k": options.k, "rows": rows }))?,
        Format::Csv => to_csv(
            &["prompt_id", "timestep_index", "ndcg", "overlap", "error"],
            rows.iter().map(|r| {
                vec![
                    r.prompt_id.clone(),
                    r.row.timestep_index.to_string(),
                    r.row.ndcg.map(|v| v.to_string()).unwrap_or_default(),
                    r.row.overlap.map(|v| v.to_string()).unwrap_or_default(),
                    r.row.error.clone().unwrap_or_default(),
                ]
            }),
        )?,
        Format::Text => {
            let mut out = format!("{:<20} {:>5} {:>8} {:>8}\n", "prompt", "t", "NDCG", "overlap");
            for r in &rows {
                out += &format!(
                    "{:<20} {:>5} {:>8} {:>8}\n",
                    r.prompt_id,
                    r.row.timestep_index,
                    fmt_opt(r.row.ndcg, 4),
                    fmt_opt(r.row.overlap, 4)
                );
            }
            out
        }
    };
    emit(a.output.out.as_deref(), &text)
}

fn ablation(a: AblationArgs) -> Result<()> {
    let (annotations, quality, options) = load_inputs(&a.common)?;
    let categories = a
        .categories
        .iter()
        .map(|c| c.parse())
        .collect::<Result<Vec<TokenCategory>>>()?;
    let config = a.common.scoring.config();
    let records = load_manifest(&a.common.manifest)?;
    let report = token_ablation(&records, &annotations, &categories, &config, &quality, &options)?;
    for row in &report.rows {
        for p in &row.absent {
            eprintln!("warning: prompt {p} has no {} tokens; cell left empty", row.category);
        }
    }

    let label = |c: TokenCategory| match c {
        TokenCategory::Core => "ABSS_core",
        TokenCategory::Adjectives => "ABSS_adj",
        TokenCategory::Verbs => "ABSS_verb",
        TokenCategory::Prepositions => "ABSS_prep",
    };
    let out = a.common.output;
    let text = match out.format {
        Format::Json => to_json(&serde_json::json!({ "config": config, "k": options.k, "report": report }))?,
        Format::Csv => to_csv(
            &["category", "prompts", "ndcg", "overlap", "mean_selected_quality"],
            report.rows.iter().map(|r| {
                vec![
                    r.category.to_string(),
                    r.prompts.to_string(),
                    r.ndcg.map(|v| v.to_string()).unwrap_or_default(),
                    r.overlap.map(|v| v.to_string()).unwrap_or_default(),
                    r.mean_selected_quality.map(|v| v.to_string()).unwrap_or_default(),
                ]
            }),
        )?,
        Format::Text => {
            let mut s = format!("{:<10} {:>8} {:>8} {:>12}\n", "Method", "NDCG", "Overlap", "Sel. quality");
            for r in &report.rows {
                s += &format!(
                    "{:<10} {:>8} {:>8} {:>12}\n",
                    label(r.category),
                    fmt_opt(r.ndcg, 4),
                    fmt_opt(r.overlap, 4),
                    fmt_opt(r.mean_selected_quality, 4)
                );
            }
            s
        }
    };
    emit(out.out.as_deref(), &text)
}

fn corrupt(a: CorruptArgs) -> Result<()> {
    let annotations = Annotations::load(&a.annotations)?;
    let report = corrupt_annotations(&annotations, a.fraction, a.rng)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "corrupted {} of {} prompts: {}",
        report.corrupted.len(),
        annotations.len(),
        report.corrupted.join(", ")
    );
    let items: Vec<&TokenAnnotation> = report.annotations.iter().collect();
    emit(a.out.as_deref(), &to_json(&items)?)
}
