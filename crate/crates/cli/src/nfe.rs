use std::process::ExitCode;

use abss_core::selection::{nfe_baseline, BaselineMethod, BaselineParams, NfeReport};
use abss_core::{Error, ModelFamily, Result};
use clap::Args;
use serde::Serialize;

use crate::output::{emit, to_csv, to_json, Format};
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct NfeArgs {
    /// Backbone for the ABSS row.
    #[arg(long, default_value = "unet")]
    family: ModelFamily,
    /// Seed pool size.
    #[arg(long = "N", default_value_t = 10)]
    pool: usize,
    /// Seeds kept for full generation.
    #[arg(long = "K", default_value_t = 3)]
    keep: usize,
    /// Screening step.
    #[arg(long = "t", default_value_t = 10)]
    screen_step: usize,
    /// Total sampling steps.
    #[arg(long = "T", default_value_t = 50)]
    total_steps: usize,
    /// Hooked DiT block.
    #[arg(long = "l", default_value_t = 12)]
    hooked_layer: usize,
    /// DiT block count.
    #[arg(long = "L", default_value_t = 30)]
    total_layers: usize,
    /// Report a baseline instead of ABSS (random, golden, ns, initno, ae,
    /// nd, npnet, core2).
    #[arg(long, conflicts_with = "table")]
    baseline: Option<BaselineMethod>,
    /// Baseline parameter override, `key=value` (T, V, C, K, R, E,
    /// inversion_steps, optimization_steps, guided_steps). Unset keys take
    /// the reference setting.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Every method under the reference setting.
    #[arg(long)]
    table: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Serialize)]
struct Row {
    method: String,
    nfe: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    flags: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abss: Option<NfeReport>,
}

fn baseline_params(overrides: &[String]) -> Result<BaselineParams> {
    let mut p = BaselineParams::reference_setting();
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--param: expected key=value, got {o:?}")))?;
        let v: u32 = v
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("--param {k}: expected a non-negative integer, got {v:?}")))?;
        p.set(k.trim(), v)?;
    }
    Ok(p)
}

fn abss_row(args: &NfeArgs, family: ModelFamily) -> Result<Row> {
    let layers = (family == ModelFamily::Dit).then_some((args.hooked_layer, args.total_layers));
    let r = NfeReport::compute(args.pool, args.keep, args.screen_step, args.total_steps, family, layers)?;
    Ok(Row {
        method: format!("abss-{family}"),
        nfe: r.nfe_per_image,
        flags: String::new(),
        notes: Vec::new(),
        abss: Some(r),
    })
}

fn baseline_row(method: BaselineMethod, params: &BaselineParams) -> Result<Row> {
    let b = nfe_baseline(method, params)?;
    Ok(Row {
        method: b.method.to_string(),
        nfe: b.nfe,
        flags: b.flags,
        notes: b.notes,
        abss: None,
    })
}

pub fn run(args: NfeArgs) -> Result<ExitCode> {
    let params = baseline_params(&args.params)?;
    let rows = if args.table {
        let mut rows = vec![abss_row(&args, ModelFamily::Unet)?, abss_row(&args, ModelFamily::Dit)?];
        for m in BaselineMethod::ALL {
            rows.push(baseline_row(m, &params)?);
        }
        rows
    } else if let Some(m) = args.baseline {
        vec![baseline_row(m, &params)?]
    } else {
        vec![abss_row(&args, args.family)?]
    };

    let text = match args.output.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => to_csv(
            &["method", "nfe", "flags"],
            rows.iter()
                .map(|r| vec![r.method.clone(), format!("{:.2}", r.nfe), r.flags.clone()]),
        )?,
        Format::Text => {
            let mut out = format!("{:<12} {:>10}\n", "Method", "NFE");
            for r in &rows {
                out += &format!("{:<12} {:>10}\n", r.method, format!("{:.2}{}", r.nfe, r.flags));
            }
            let notes: Vec<_> = rows.iter().flat_map(|r| r.notes.iter().map(move |n| (r, n))).collect();
            for (r, n) in notes {
                out += &format!("{}{}: {n}\n", r.method, r.flags);
            }
            out
        }
    };
    emit(args.output.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
