use std::path::PathBuf;

use serde::Serialize;
use topogen_core::dataset::Split;
use topogen_core::dem::load_patch_png16;
use topogen_models::checkpoint::{GanCheckpoint, VaeCheckpoint};
use topogen_models::data::{PairSource, Sketches};
use topogen_models::data::ManifestPairs;
use topogen_models::eval::{evaluate, score};

use super::{load_manifest, require_file};
use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, RunManifest};
use crate::Context;

#[derive(Debug, Clone, Copy, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Serialize, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Generator to evaluate.
    #[arg(long, conflicts_with = "predictions")]
    pub gan_ckpt: Option<PathBuf>,
    /// Condition the generator on this VAE's reconstructions.
    #[arg(long, requires = "gan_ckpt")]
    pub vae_ckpt: Option<PathBuf>,
    /// Directory of precomputed `<pair_id>.png` normalized DEMs (16-bit,
    /// with sidecars) to score instead of running a generator.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct Summary {
    split: SplitArg,
    n_patches: usize,
    mean_mse: f64,
}

pub fn run(ctx: &Context, args: Args) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let data = ManifestPairs::new(&manifest, split);
    if data.is_empty() {
        return Err(CliError::input(format!("{}: split has no pairs", args.manifest.display())));
    }
    let mut run = RunManifest::new("eval", &args, &serde_json::json!({ "batch_size": args.batch_size }), None);
    run.input(&args.manifest)?;

    let report = match (&args.gan_ckpt, &args.predictions) {
        (Some(gan), None) => {
            require_file(gan, "GAN checkpoint")?;
            let gen = GanCheckpoint::load(gan)?.generator;
            run.input(gan)?;
            let vae = match &args.vae_ckpt {
                Some(p) => {
                    require_file(p, "VAE checkpoint")?;
                    run.input(p)?;
                    Some(VaeCheckpoint::load(p)?.model)
                }
                None => None,
            };
            evaluate(&data, &gen, vae.as_ref(), args.batch_size, ctx.exec)?
        }
        (None, Some(dir)) => {
            if !dir.is_dir() {
                return Err(CliError::input(format!("{}: predictions directory not found", dir.display())));
            }
            run.input(dir)?;
            let ids: Vec<String> = data.ids().map(str::to_string).collect();
            let idx: Vec<usize> = (0..data.len()).collect();
            let generated = ctx.exec.try_map(&ids, |id| {
                let path = dir.join(format!("{id}.png"));
                if !path.is_file() {
                    return Err(CliError::input(format!("{}: prediction missing", path.display())));
                }
                Ok(load_patch_png16(&path)?.values().clone())
            })?;
            let truths = ctx
                .exec
                .try_map(&idx, |&i| data.pair(i).map(|p| p.dem))?;
            score(ids, generated, &truths, ctx.exec)?
        }
        _ => return Err(CliError::input("give exactly one of --gan-ckpt or --predictions")),
    };

    let csv = args.out_dir.join("eval.csv");
    write_atomic(&csv, report.to_csv().as_bytes())?;
    let summary = Summary {
        split: args.split,
        n_patches: report.n_patches,
        mean_mse: report.mean_mse,
    };
    let summary_path = args.out_dir.join("eval_summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_atomic(&summary_path, json.as_bytes())?;
    eprintln!("mean_mse {:.6} over {} patches", report.mean_mse, report.n_patches);

    run.output(&csv)?.output(&summary_path)?;
    run.write(&args.out_dir.join("run.json"))
}
