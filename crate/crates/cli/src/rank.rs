use std::path::PathBuf;
use std::process::ExitCode;

use abss_core::selection::NfeReport;
use abss_core::{rank, Error, ModelFamily, Result};
use clap::Args;

use crate::files::{RankEntry, RankFile, ScoreFile};
use crate::output::{emit, to_csv, to_json, Format};
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Seeds to keep per prompt.
    #[arg(long = "k", visible_alias = "K", default_value_t = 3)]
    keep: usize,
    /// Pool schedule for NFE accounting, e.g. `N=10,t=10,T=50,family=unet`
    /// or `t=10,T=50,family=dit,l=12,L=30`. N defaults to the pool size.
    #[arg(long)]
    nfe: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Default)]
struct Schedule {
    pool: Option<usize>,
    t: Option<usize>,
    total: Option<usize>,
    family: Option<ModelFamily>,
    layer: Option<usize>,
    layers: Option<usize>,
}

fn parse_schedule(spec: &str) -> Result<Schedule> {
    let mut s = Schedule::default();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--nfe: expected key=value, got {part:?}")))?;
        let num = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("--nfe: {key} must be a non-negative integer, got {value:?}")))
        };
        match key {
            "N" => s.pool = Some(num()?),
            "t" => s.t = Some(num()?),
            "T" => s.total = Some(num()?),
            "l" | "l*" => s.layer = Some(num()?),
            "L" => s.layers = Some(num()?),
            "family" => s.family = Some(value.parse()?),
            other => return Err(Error::Usage(format!("--nfe: unknown key {other:?}"))),
        }
    }
    Ok(s)
}

impl Schedule {
    fn report(&self, pool_size: usize, keep: usize) -> Result<NfeReport> {
        let need = |v: Option<usize>, k: &str| v.ok_or_else(|| Error::Usage(format!("--nfe: missing {k}")));
        let family = self.family.unwrap_or(ModelFamily::Unet);
        let layers = match family {
            ModelFamily::Dit => Some((need(self.layer, "l")?, need(self.layers, "L")?)),
            ModelFamily::Unet => None,
        };
        NfeReport::compute(
            self.pool.unwrap_or(pool_size),
            keep,
            need(self.t, "t")?,
            need(self.total, "T")?,
            family,
            layers,
        )
    }
}

pub fn run(args: RankArgs) -> Result<ExitCode> {
    if args.keep < 1 {
        return Err(Error::Usage("K must be at least 1".into()));
    }
    let schedule = args.nfe.as_deref().map(parse_schedule).transpose()?;
    let scores = ScoreFile::load(&args.scores)?;
    if scores.tables.is_empty() {
        return Err(Error::Usage(format!("{}: no score tables", args.scores.display())));
    }
    let mut rankings = Vec::with_capacity(scores.tables.len());
    for table in &scores.tables {
        let ranking = rank(table, args.keep)?;
        let nfe = schedule
            .as_ref()
            .map(|s| s.report(table.len(), ranking.selected.len()))
            .transpose()?;
        rankings.push(RankEntry {
            prompt_id: table.prompt_id.clone(),
            timestep_index: table.timestep_index,
            token_category: table.token_category,
            config: table.config,
            ranking,
            nfe,
        });
    }
    for r in &rankings {
        for w in &r.ranking.warnings {
            eprintln!("warning: prompt {}: {w}", r.prompt_id);
        }
    }
    let file = RankFile { rankings };

    let text = match args.output.format {
        Format::Json => to_json(&file)?,
        Format::Csv => to_csv(
            &["prompt_id", "timestep_index", "position", "seed", "score", "selected"],
            file.rankings.iter().flat_map(|r| {
                r.ranking.ordering.iter().enumerate().map(move |(i, s)| {
                    vec![
                        r.prompt_id.clone(),
                        r.timestep_index.to_string(),
                        (i + 1).to_string(),
                        s.seed.to_string(),
                        s.score.to_string(),
                        (i < r.ranking.selected.len()).to_string(),
                    ]
                })
            }),
        )?,
        Format::Text => {
            let mut out = String::new();
            for r in &file.rankings {
                out += &format!(
                    "prompt {}  t = {}  K = {}  selected {:?}\n",
                    r.prompt_id, r.timestep_index, r.ranking.k, r.ranking.selected
                );
                for (i, s) in r.ranking.ordering.iter().enumerate() {
                    let mark = if i < r.ranking.selected.len() { "*" } else { " " };
                    out += &format!("  {mark} {:>3}  {:>12}  {:.8}\n", i + 1, s.seed, s.score);
                }
                if let Some(n) = &r.nfe {
                    out += &format!("  NFE per image: {:.2}\n", n.nfe_per_image);
                }
            }
            out
        }
    };
    emit(args.output.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_parsing() {
        let s = parse_schedule("N=10,t=10,T=50,family=unet").unwrap();
        let r = s.report(10, 3).unwrap();
        assert!((r.nfe_per_image - 73.333_333).abs() < 1e-5);

        let s = parse_schedule("t=10, T=50, family=dit, l=12, L=30").unwrap();
        assert!((s.report(10, 3).unwrap().nfe_per_image - 71.333_333).abs() < 1e-5);

        assert!(parse_schedule("N=10,t=10,T=50,family=dit").unwrap().report(10, 3).is_err());
        assert!(parse_schedule("x=1").is_err());
        assert!(parse_schedule("t=ten").is_err());
        assert!(parse_schedule("T=50").unwrap().report(10, 3).is_err());
    }
}
