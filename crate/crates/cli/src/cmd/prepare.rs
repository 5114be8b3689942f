use std::path::PathBuf;

use serde::Serialize;
use topogen_core::dataset::{build_dataset, DatasetConfig, MANIFEST_FILE};

use crate::config::{resolve, Overrides};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::Context;

#[derive(Debug, Serialize, clap::Args)]
pub struct Args {
    /// Directory of `.asc` grids or 16-bit PNGs with JSON sidecars.
    #[arg(long)]
    pub dem_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub patch_px: Option<usize>,
    #[arg(long)]
    pub stride_px: Option<usize>,
    #[arg(long)]
    pub out_px: Option<usize>,
    #[arg(long)]
    pub train_n: Option<usize>,
    #[arg(long)]
    pub test_n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

pub fn run(ctx: &Context, args: Args) -> Result<()> {
    let mut flags = Overrides::default();
    flags
        .set("patch_px", args.patch_px)
        .set("stride_px", args.stride_px)
        .set("out_px", args.out_px)
        .set("train_n", args.train_n)
        .set("test_n", args.test_n)
        .set("seed", args.seed);
    let cfg: DatasetConfig = resolve(ctx.file.dataset.as_ref(), &flags, "dataset")?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    if !args.dem_dir.is_dir() {
        return Err(CliError::input(format!("{}: DEM directory not found", args.dem_dir.display())));
    }
    let manifest = build_dataset(&args.dem_dir, &args.out_dir, &cfg, ctx.exec)?;
    eprintln!(
        "prepared {} pairs in {}",
        manifest.entries.len(),
        args.out_dir.display()
    );
    let mut run = RunManifest::new("prepare", &args, &cfg, Some(cfg.seed));
    run.input(&args.dem_dir)?
        .output(&args.out_dir.join(MANIFEST_FILE))?
        .output(&args.out_dir.join("topo"))?
        .output(&args.out_dir.join("dem"))?;
    run.write(&args.out_dir.join("run.json"))
}
