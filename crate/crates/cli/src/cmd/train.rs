use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::Serialize;
use topogen_core::dataset::Split;
use topogen_core::sketch::TopoField;
use topogen_models::checkpoint::{gan_trace_csv, vae_trace_csv, GanCheckpoint, VaeCheckpoint};
use topogen_models::data::{load_pairs, sketch_batch, to_fields, to_grids, ManifestPairs, Pair, Sketches};
use topogen_models::train::{condition, train_cgan, train_vae};
use topogen_models::{Conditioning, GanConfig, Generator, ModelError, Vae, VaeConfig};

use super::{ensure_dir, load_manifest, require_file};
use crate::config::{resolve, Overrides};
use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, RunManifest};
use crate::render::{panel, save_rgb, shade_meters};
use crate::Context;

const PREVIEW_SAMPLES: usize = 4;

#[derive(Debug, Serialize, clap::Args)]
pub struct VaeArgs {
    /// `manifest.jsonl` of a prepared dataset; the train split is used.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Continue from this checkpoint up to `--epochs`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write a preview panel every N epochs (0 disables previews).
    #[arg(long, default_value_t = 10)]
    pub preview_every: usize,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay_gamma: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma_loss: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub input_px: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Use the standard ½(σ² + μ² − log σ² − 1) KL term.
    #[arg(long)]
    pub standard_kl: bool,
}

#[derive(Debug, Clone, Copy, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningArg {
    GroundTruth,
    VaeReconstruction,
}

impl From<ConditioningArg> for Conditioning {
    fn from(c: ConditioningArg) -> Self {
        match c {
            ConditioningArg::GroundTruth => Conditioning::GroundTruth,
            ConditioningArg::VaeReconstruction => Conditioning::VaeReconstruction,
        }
    }
}

#[derive(Debug, Serialize, clap::Args)]
pub struct GanArgs {
    /// `manifest.jsonl` of a prepared dataset; the train split is used.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Frozen VAE whose reconstructions condition the generator.
    #[arg(long)]
    pub vae_ckpt: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub conditioning: Option<ConditioningArg>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write a preview panel every N epochs (0 disables previews).
    #[arg(long, default_value_t = 10)]
    pub preview_every: usize,
    #[arg(long)]
    pub print_config: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub input_px: Option<usize>,
    #[arg(long)]
    pub ngf: Option<usize>,
    #[arg(long)]
    pub ndf: Option<usize>,
    #[arg(long)]
    pub d_layers: Option<usize>,
    #[arg(long)]
    pub unet_depth: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Use the saturating generator loss log(1 − D(G(x))).
    #[arg(long)]
    pub saturating_g: bool,
}

fn preview_due(epoch: usize, every: usize, last: usize) -> bool {
    every > 0 && ((epoch + 1).is_multiple_of(every) || epoch + 1 == last)
}

fn preview_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join("previews").join(format!("epoch_{:04}.png", epoch + 1))
}

fn check_size(found: (usize, usize), px: usize) -> Result<()> {
    if found != (px, px) {
        return Err(CliError::input(format!(
            "dataset sketches are {}x{} but the model expects {px}x{px}; set input_px to match",
            found.0, found.1
        )));
    }
    Ok(())
}

/// Park a preview failure and abort training with a placeholder error.
fn stop(slot: &mut Option<CliError>, err: CliError) -> ModelError {
    *slot = Some(err);
    ModelError::InvalidArgument("preview failed".into())
}

fn finish<T>(result: topogen_models::Result<T>, failure: Option<CliError>) -> Result<T> {
    match failure {
        Some(err) => Err(err),
        None => Ok(result?),
    }
}

fn vae_panel(vae: &Vae, inputs: &[TopoField]) -> Result<RgbImage> {
    let x = sketch_batch(inputs, vae.dtype(), vae.device())?;
    let recon = to_fields(&vae.reconstruct(&x)?)?;
    Ok(panel(&[
        inputs.iter().map(TopoField::to_rgb8).collect(),
        recon.iter().map(TopoField::to_rgb8).collect(),
    ]))
}

pub fn run_vae(ctx: &Context, args: VaeArgs) -> Result<()> {
    let mut flags = Overrides::default();
    flags
        .set("epochs", args.epochs)
        .set("batch_size", args.batch_size)
        .set("lr", args.lr)
        .set("lr_decay_gamma", args.lr_decay_gamma)
        .set("latent_dim", args.latent_dim)
        .set("alpha", args.alpha)
        .set("gamma_loss", args.gamma_loss)
        .set("seed", args.seed)
        .set("input_px", args.input_px)
        .set("base_channels", args.base_channels)
        .set("depth", args.depth)
        .set("standard_kl", args.standard_kl.then_some(true));
    let cfg: VaeConfig = resolve(ctx.file.vae.as_ref(), &flags, "vae")?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    cfg.validate()?;
    let manifest = load_manifest(&args.manifest)?;
    ensure_dir(&args.out_dir)?;
    let data = ManifestPairs::new(&manifest, Split::Train);
    if data.is_empty() {
        return Err(CliError::input(format!("{}: no training pairs", args.manifest.display())));
    }
    check_size(data.sketch(0)?.dim(), cfg.input_px)?;
    let resume = match &args.resume {
        Some(p) => {
            require_file(p, "checkpoint")?;
            Some(VaeCheckpoint::load(p)?)
        }
        None => None,
    };
    let samples: Vec<usize> = (0..data.len().min(PREVIEW_SAMPLES)).collect();
    let previews = topogen_models::data::load_sketches(&data, &samples, ctx.exec)?;

    let total = cfg.epochs;
    let mut written = Vec::new();
    let mut failure = None;
    let result = train_vae(&data, &cfg, resume, ctx.exec, &mut |e, vae| {
        eprintln!(
            "vae epoch {}/{total} recons {:.5} kl {:.5} total {:.5} lr {:.3e}",
            e.epoch + 1,
            e.recons,
            e.kl,
            e.total,
            e.lr
        );
        if preview_due(e.epoch, args.preview_every, total) {
            let path = preview_path(&args.out_dir, e.epoch);
            match vae_panel(vae, &previews).and_then(|img| save_rgb(&img, &path)) {
                Ok(()) => written.push(path),
                Err(err) => return Err(stop(&mut failure, err)),
            }
        }
        Ok(())
    });
    let ck = finish(result, failure)?;

    let ckpt = args.out_dir.join("vae.ckpt");
    ck.save(&ckpt)?;
    let trace = args.out_dir.join("trace.csv");
    write_atomic(&trace, vae_trace_csv(&ck.trace).as_bytes())?;
    eprintln!("wrote {}", ckpt.display());

    let mut run = RunManifest::new("train-vae", &args, &cfg, Some(cfg.seed));
    run.input(&args.manifest)?;
    if let Some(p) = &args.resume {
        run.input(p)?;
    }
    run.output(&ckpt)?.output(&trace)?;
    for p in &written {
        run.output(p)?;
    }
    run.write(&args.out_dir.join("run.json"))
}

fn gan_panel(gen: &Generator, vae: Option<&Vae>, samples: &[Pair]) -> Result<RgbImage> {
    let sketches: Vec<_> = samples.iter().map(|p| p.sketch.clone()).collect();
    let x = sketch_batch(&sketches, gen.dtype(), gen.device())?;
    let x = condition(&x, gen.config().conditioning, vae)?;
    let generated = to_grids(&gen.generate(&x)?)?;
    let mut fake = Vec::new();
    for (g, p) in generated.into_iter().zip(samples) {
        fake.push(shade_meters(&p.dem.with_values(g)?));
    }
    Ok(panel(&[
        sketches.iter().map(TopoField::to_rgb8).collect(),
        fake,
        samples.iter().map(|p| shade_meters(&p.dem)).collect(),
    ]))
}

pub fn run_gan(ctx: &Context, args: GanArgs) -> Result<()> {
    let mut flags = Overrides::default();
    flags
        .set("epochs", args.epochs)
        .set("batch_size", args.batch_size)
        .set("lr", args.lr)
        .set("beta1", args.beta1)
        .set("beta2", args.beta2)
        .set("lambda_l1", args.lambda_l1)
        .set("seed", args.seed)
        .set("input_px", args.input_px)
        .set("ngf", args.ngf)
        .set("ndf", args.ndf)
        .set("d_layers", args.d_layers)
        .set("unet_depth", args.unet_depth)
        .set("dropout", args.dropout)
        .set("saturating_g", args.saturating_g.then_some(true))
        .set("conditioning", args.conditioning);
    let cfg: GanConfig = resolve(ctx.file.gan.as_ref(), &flags, "gan")?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    cfg.validate()?;
    let manifest = load_manifest(&args.manifest)?;
    ensure_dir(&args.out_dir)?;
    let data = ManifestPairs::new(&manifest, Split::Train);
    if data.is_empty() {
        return Err(CliError::input(format!("{}: no training pairs", args.manifest.display())));
    }
    check_size(data.sketch(0)?.dim(), cfg.input_px)?;
    let vae = match (&args.vae_ckpt, cfg.conditioning) {
        (Some(p), Conditioning::VaeReconstruction) => {
            require_file(p, "VAE checkpoint")?;
            Some(VaeCheckpoint::load(p)?.model)
        }
        (Some(_), Conditioning::GroundTruth) => {
            log::warn!("--vae-ckpt is ignored with ground_truth conditioning");
            None
        }
        (None, _) => None,
    };
    let resume = match &args.resume {
        Some(p) => {
            require_file(p, "checkpoint")?;
            Some(GanCheckpoint::load(p)?)
        }
        None => None,
    };
    let samples: Vec<usize> = (0..data.len().min(PREVIEW_SAMPLES)).collect();
    let previews = load_pairs(&data, &samples, ctx.exec)?;

    let total = cfg.epochs;
    let mut written = Vec::new();
    let mut failure = None;
    let result = train_cgan(&data, &cfg, vae.as_ref(), resume, ctx.exec, &mut |e, gen| {
        eprintln!(
            "gan epoch {}/{total} d {:.5} g_adv {:.5} g_l1 {:.5}",
            e.epoch + 1,
            e.d,
            e.g_adv,
            e.g_l1
        );
        if preview_due(e.epoch, args.preview_every, total) {
            let path = preview_path(&args.out_dir, e.epoch);
            match gan_panel(gen, vae.as_ref(), &previews).and_then(|img| save_rgb(&img, &path)) {
                Ok(()) => written.push(path),
                Err(err) => return Err(stop(&mut failure, err)),
            }
        }
        Ok(())
    });
    let ck = finish(result, failure)?;

    let ckpt = args.out_dir.join("gan.ckpt");
    ck.save(&ckpt)?;
    let trace = args.out_dir.join("trace.csv");
    write_atomic(&trace, gan_trace_csv(&ck.trace).as_bytes())?;
    eprintln!("wrote {}", ckpt.display());

    let mut run = RunManifest::new("train-gan", &args, &cfg, Some(cfg.seed));
    run.input(&args.manifest)?;
    for p in args.vae_ckpt.iter().chain(&args.resume) {
        run.input(p)?;
    }
    run.output(&ckpt)?.output(&trace)?;
    for p in &written {
        run.output(p)?;
    }
    run.write(&args.out_dir.join("run.json"))
}
