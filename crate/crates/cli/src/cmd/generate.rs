use std::path::{Path, PathBuf};

use serde::Serialize;
use topogen_core::sketch::{TopoField, TopoMap};
use topogen_models::checkpoint::{GanCheckpoint, VaeCheckpoint};
use topogen_models::inference::{fit_sketch, generate};
use topogen_models::latent::{
    interpolate_terrains, sample_variants, CodeMode, InterpolationRequest, VariantRequest, DEFAULT_GAMMAS,
};
use topogen_models::{Generator, Vae};

use super::require_file;
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::render::{panel, save_rgb, shade_preview, write_dem};
use crate::Context;

#[derive(Debug, Serialize, clap::Args)]
pub struct Args {
    /// 8-bit RGB sketch: red ridges, green level sets, blue valleys.
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub gan_ckpt: PathBuf,
    #[arg(long)]
    pub vae_ckpt: Option<PathBuf>,
    /// Replace the sketch by its VAE reconstruction first.
    #[arg(long)]
    pub through_vae: bool,
    /// 16-bit DEM PNG to write; the sidecar, hillshade and run record go
    /// next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, clap::Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub sketch_a: PathBuf,
    #[arg(long)]
    pub sketch_b: PathBuf,
    /// Weights of sketch A, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GAMMAS)]
    pub gammas: Vec<f64>,
    #[arg(long)]
    pub vae_ckpt: PathBuf,
    #[arg(long)]
    pub gan_ckpt: PathBuf,
    /// Interpolate sampled codes instead of the means, drawn with this seed.
    #[arg(long)]
    pub sample_seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize, clap::Args)]
pub struct VariantsArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eps_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub vae_ckpt: PathBuf,
    #[arg(long)]
    pub gan_ckpt: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn load_sketch(path: &Path) -> Result<TopoField> {
    require_file(path, "sketch")?;
    Ok(TopoMap::load(path)?.to_field())
}

fn load_gan(path: &Path) -> Result<Generator> {
    require_file(path, "GAN checkpoint")?;
    Ok(GanCheckpoint::load(path)?.generator)
}

fn load_vae(path: &Path) -> Result<Vae> {
    require_file(path, "VAE checkpoint")?;
    Ok(VaeCheckpoint::load(path)?.model)
}

/// The sketch as the VAE sees it on the generate path.
fn vae_input(gen: &Generator, vae: &Vae, topo: &TopoField) -> TopoField {
    fit_sketch(&fit_sketch(topo, gen.config().input_px), vae.config().input_px)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn run(_ctx: &Context, args: Args) -> Result<()> {
    let sketch = load_sketch(&args.sketch)?;
    let gen = load_gan(&args.gan_ckpt)?;
    let vae = match (&args.vae_ckpt, args.through_vae) {
        (Some(p), true) => Some(load_vae(p)?),
        (None, true) => return Err(CliError::input("--through-vae needs --vae-ckpt")),
        (_, false) => None,
    };
    let dem = generate(&gen, vae.as_ref(), &sketch)?;
    let files = write_dem(&dem, &args.out)?;
    eprintln!("wrote {}", args.out.display());

    let mut run = RunManifest::new("generate", &args, &gen.config(), None);
    run.input(&args.sketch)?.input(&args.gan_ckpt)?;
    if let (Some(p), true) = (&args.vae_ckpt, args.through_vae) {
        run.input(p)?;
    }
    for p in files.all() {
        run.output(p)?;
    }
    run.write(&with_suffix(&args.out, ".run.json"))
}

/// Generate one DEM per decoded sketch into `out_dir/<prefix>_NN.png` and a
/// strip panel (decoded sketches over hillshades).
fn write_series(gen: &Generator, fields: &[TopoField], out_dir: &Path, prefix: &str, run: &mut RunManifest) -> Result<()> {
    let mut shades = Vec::new();
    for (i, field) in fields.iter().enumerate() {
        let dem = generate(gen, None, field)?;
        let files = write_dem(&dem, &out_dir.join(format!("{prefix}_{i:02}.png")))?;
        for p in files.all() {
            run.output(p)?;
        }
        shades.push(shade_preview(&dem)?);
    }
    let strip = out_dir.join("strip.png");
    save_rgb(&panel(&[fields.iter().map(TopoField::to_rgb8).collect(), shades]), &strip)?;
    run.output(&strip)?;
    eprintln!("wrote {} DEMs to {}", fields.len(), out_dir.display());
    Ok(())
}

pub fn run_interpolate(_ctx: &Context, args: InterpolateArgs) -> Result<()> {
    let (a, b) = (load_sketch(&args.sketch_a)?, load_sketch(&args.sketch_b)?);
    let gen = load_gan(&args.gan_ckpt)?;
    let vae = load_vae(&args.vae_ckpt)?;
    let mode = match args.sample_seed {
        Some(seed) => CodeMode::Sampled { seed },
        None => CodeMode::Mean,
    };
    let fields = interpolate_terrains(
        &InterpolationRequest {
            topo_a: vae_input(&gen, &vae, &a),
            topo_b: vae_input(&gen, &vae, &b),
            gammas: args.gammas.clone(),
            mode,
        },
        &vae,
    )?;
    let mut run = RunManifest::new("interpolate", &args, &serde_json::json!({ "gammas": args.gammas }), args.sample_seed);
    run.input(&args.sketch_a)?
        .input(&args.sketch_b)?
        .input(&args.vae_ckpt)?
        .input(&args.gan_ckpt)?;
    write_series(&gen, &fields, &args.out_dir, "interp", &mut run)?;
    run.write(&args.out_dir.join("run.json"))
}

pub fn run_variants(_ctx: &Context, args: VariantsArgs) -> Result<()> {
    let sketch = load_sketch(&args.sketch)?;
    let gen = load_gan(&args.gan_ckpt)?;
    let vae = load_vae(&args.vae_ckpt)?;
    let fields = sample_variants(
        &VariantRequest {
            topo: vae_input(&gen, &vae, &sketch),
            n_variants: args.n,
            eps_scale: args.eps_scale,
            seed: args.seed,
        },
        &vae,
    )?;
    let config = serde_json::json!({ "n": args.n, "eps_scale": args.eps_scale });
    let mut run = RunManifest::new("variants", &args, &config, Some(args.seed));
    run.input(&args.sketch)?.input(&args.vae_ckpt)?.input(&args.gan_ckpt)?;
    write_series(&gen, &fields, &args.out_dir, "variant", &mut run)?;
    run.write(&args.out_dir.join("run.json"))
}
