use std::path::PathBuf;
use std::process::ExitCode;

use abss_core::synth::{
    generate_fixture_suite, generate_invalid_fixtures, generate_pool, generate_sweep, write_pools,
    SynthLayout, SynthSpec,
};
use abss_core::{Error, ModelFamily, Result};
use clap::{Args, Subcommand};

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    command: SynthCommand,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Write the named fixture suite with oracle-computed expected scores.
    Suite {
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the three inputs `validate` must reject under `invalid/`.
        #[arg(long)]
        invalid: bool,
    },
    /// Write one planted pool, or one pool per timestep with `--timesteps`.
    Pool(PoolArgs),
}

fn parse_spatial(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X', ','])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(h)?, p(w)?))
}

#[derive(Debug, Args)]
struct PoolArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    prompt_id: String,
    #[arg(long, default_value = "unet")]
    family: ModelFamily,
    /// Seed pool size.
    #[arg(long = "N", default_value_t = 10)]
    pool_size: usize,
    /// Text token count.
    #[arg(long, default_value_t = 77)]
    tokens: usize,
    /// Core token indices, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    core: Vec<usize>,
    /// Planted gap: the best seed's core-token logit bonus.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Uniform logit noise scale.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    rng: u64,
    /// U-Net map size.
    #[arg(long, default_value = "16x16", value_parser = parse_spatial)]
    spatial: (usize, usize),
    /// U-Net stacked maps per capture.
    #[arg(long, default_value_t = 1)]
    stacked: usize,
    /// DiT image token count.
    #[arg(long, default_value_t = 256)]
    image_tokens: usize,
    /// DiT hooked block.
    #[arg(long, default_value_t = 12)]
    hooked_layer: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Screening step of a single pool.
    #[arg(long = "t", default_value_t = 10)]
    timestep: usize,
    #[arg(long = "T", default_value_t = 50)]
    total_steps: usize,
    /// Generate a sweep over these steps, comma separated.
    #[arg(long, value_delimiter = ',')]
    timesteps: Vec<usize>,
}

pub fn run(args: SynthArgs) -> Result<ExitCode> {
    match args.command {
        SynthCommand::Suite { out, invalid } => {
            for m in generate_fixture_suite(&out)? {
                println!("{}", m.display());
            }
            if invalid {
                for (_, m) in generate_invalid_fixtures(out.join("invalid"))? {
                    println!("{}", m.display());
                }
            }
        }
        SynthCommand::Pool(p) => {
            let layout = match p.family {
                ModelFamily::Unet => SynthLayout::Unet {
                    spatial: p.spatial,
                    stacked: p.stacked,
                },
                ModelFamily::Dit => SynthLayout::Dit {
                    image_tokens: p.image_tokens,
                    hooked_layer: p.hooked_layer,
                },
            };
            let spec = SynthSpec {
                prompt_id: p.prompt_id,
                pool_size: p.pool_size,
                token_count: p.tokens,
                core: p.core.into_iter().collect(),
                planted_gap: p.delta,
                noise_scale: p.epsilon,
                rng_seed: p.rng,
                layout,
                seed_base: p.seed_base,
                timestep_index: p.timestep,
                total_steps: p.total_steps,
            };
            let pools = if p.timesteps.is_empty() {
                vec![generate_pool(&spec)?]
            } else {
                if p.timesteps.len() < 2 {
                    return Err(Error::Usage("--timesteps needs at least 2 steps".into()));
                }
                generate_sweep(&spec, &p.timesteps)?
            };
            println!("{}", write_pools(&pools, &p.out)?.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
