use std::path::PathBuf;
use std::time::Duration;

use topogen_service::{ServiceConfig, DEFAULT_TIMEOUT_MS};

use super::require_file;
use crate::error::{CliError, Result};
use crate::Context;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub gan_ckpt: PathBuf,
    /// Needed for `through_vae`, variants and interpolation.
    #[arg(long)]
    pub vae_ckpt: Option<PathBuf>,
    /// Per-request limit; slower requests get a 503.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
}

pub fn run(_ctx: &Context, args: Args) -> Result<()> {
    require_file(&args.gan_ckpt, "GAN checkpoint")?;
    if let Some(p) = &args.vae_ckpt {
        require_file(p, "VAE checkpoint")?;
    }
    let cfg = ServiceConfig {
        host: args.host,
        port: args.port,
        gan_ckpt: args.gan_ckpt,
        vae_ckpt: args.vae_ckpt,
        timeout: Duration::from_millis(args.timeout_ms),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime(format!("tokio runtime: {e}")))?;
    rt.block_on(topogen_service::run(cfg, |addr| {
        eprintln!("listening on http://{addr} (loading checkpoints)");
    }))?;
    Ok(())
}
