use std::path::PathBuf;
use std::process::ExitCode;

use abss_core::io::{group_pools, load_manifest};
use abss_core::{score_pool, Annotations, Error, Result};
use clap::Args;
use rayon::prelude::*;

use crate::files::ScoreFile;
use crate::output::{emit, to_csv, to_json, Format};
use crate::{OutputArgs, ScoringArgs};

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn run(args: ScoreArgs) -> Result<ExitCode> {
    let config = args.scoring.config();
    config.validate()?;
    let annotations = Annotations::load(&args.annotations)?;
    let records = load_manifest(&args.manifest)?;
    if records.is_empty() {
        return Err(Error::Usage(format!("{}: manifest has no records", args.manifest.display())));
    }
    let pools: Vec<_> = group_pools(records).into_values().collect();
    let tables = pools
        .par_iter()
        .map(|pool| score_pool(pool, &annotations, args.scoring.token_category, &config))
        .collect::<Result<Vec<_>>>()?;
    let file = ScoreFile { tables };

    let text = match args.output.format {
        Format::Json => to_json(&file)?,
        Format::Csv => to_csv(
            &["prompt_id", "timestep_index", "token_category", "seed", "score"],
            file.tables.iter().flat_map(|t| {
                t.scores.iter().map(move |(seed, s)| {
                    vec![
                        t.prompt_id.clone(),
                        t.timestep_index.to_string(),
                        t.token_category.to_string(),
                        seed.to_string(),
                        s.to_string(),
                    ]
                })
            }),
        )?,
        Format::Text => {
            let mut out = String::new();
            for t in &file.tables {
                out += &format!(
                    "prompt {}  t = {}  tokens = {}  beta = {}  k = {}  sigma = {}\n",
                    t.prompt_id,
                    t.timestep_index,
                    t.token_category,
                    t.config.beta,
                    t.config.kernel_radius,
                    t.config.sigma
                );
                out += &format!("  {:>12}  {:>12}\n", "seed", "score");
                for (seed, s) in &t.scores {
                    out += &format!("  {seed:>12}  {s:>12.8}\n");
                }
            }
            out
        }
    };
    emit(args.output.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
