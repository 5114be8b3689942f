//! Checkpoint archives.
//!
//! A checkpoint is an uncompressed tar file with fixed metadata (mtime 0,
//! uid/gid 0) holding `meta.json`, `config.json`, `trace.csv` and one
//! safetensors file per network. Identical weights give identical bytes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

use crate::cgan::{Discriminator, GanConfig, Generator};
use crate::vae::{Vae, VaeConfig};
use crate::{ModelError, Result};

pub const FORMAT: &str = "topogen-checkpoint";
pub const VERSION: u32 = 1;

const META: &str = "meta.json";
const CONFIG: &str = "config.json";
const TRACE: &str = "trace.csv";
const VAE_WEIGHTS: &str = "vae.safetensors";
const GEN_WEIGHTS: &str = "generator.safetensors";
const DISC_WEIGHTS: &str = "discriminator.safetensors";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Vae,
    Gan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub format: String,
    pub version: u32,
    pub kind: Kind,
    /// Completed epochs.
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub recons: f64,
    pub kl: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanEpoch {
    pub epoch: usize,
    pub g_adv: f64,
    pub g_l1: f64,
    pub d: f64,
    pub lr: f64,
}

#[derive(Debug)]
pub struct VaeCheckpoint {
    pub config: VaeConfig,
    pub epoch: usize,
    pub trace: Vec<VaeEpoch>,
    pub model: Vae,
}

#[derive(Debug)]
pub struct GanCheckpoint {
    pub config: GanConfig,
    pub epoch: usize,
    pub trace: Vec<GanEpoch>,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

pub fn vae_trace_csv(trace: &[VaeEpoch]) -> String {
    let mut s = String::from("epoch,recons,kl,total,lr\n");
    for e in trace {
        s.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.recons, e.kl, e.total, e.lr));
    }
    s
}

pub fn gan_trace_csv(trace: &[GanEpoch]) -> String {
    let mut s = String::from("epoch,g_adv,g_l1,d,lr\n");
    for e in trace {
        s.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.g_adv, e.g_l1, e.d, e.lr));
    }
    s
}

fn parse_rows(path: &Path, text: &str) -> Result<Vec<(usize, [f64; 4])>> {
    let bad = |msg: String| ModelError::checkpoint(path, msg);
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(bad(format!("trace row `{line}`")));
            }
            let epoch = cells[0].parse().map_err(|_| bad(format!("trace row `{line}`")))?;
            let mut vals = [0.0; 4];
            for (v, c) in vals.iter_mut().zip(&cells[1..]) {
                *v = c.parse().map_err(|_| bad(format!("trace row `{line}`")))?;
            }
            Ok((epoch, vals))
        })
        .collect()
}

/// Write `entries` as a tar archive, atomically replacing `path`.
pub fn write_archive(path: &Path, entries: &[(&str, Vec<u8>)]) -> Result<()> {
    let tmp = tmp_path(path);
    let file = File::create(&tmp).map_err(|e| ModelError::io(&tmp, e))?;
    let mut builder = tar::Builder::new(file);
    for (name, data) in entries {
        let mut header = tar::Header::new_gnu();
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder
            .append_data(&mut header, name, data.as_slice())
            .map_err(|e| ModelError::io(&tmp, e))?;
    }
    let mut file = builder.into_inner().map_err(|e| ModelError::io(&tmp, e))?;
    file.flush().map_err(|e| ModelError::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| ModelError::io(path, e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn read_archive(path: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let file = File::open(path).map_err(|e| ModelError::io(path, e))?;
    let mut archive = tar::Archive::new(file);
    let mut out = BTreeMap::new();
    let entries = archive
        .entries()
        .map_err(|e| ModelError::checkpoint(path, e.to_string()))?;
    for entry in entries {
        let mut entry = entry.map_err(|e| ModelError::checkpoint(path, e.to_string()))?;
        let name = entry
            .path()
            .map_err(|e| ModelError::checkpoint(path, e.to_string()))?
            .to_string_lossy()
            .into_owned();
        let mut data = Vec::new();
        entry
            .read_to_end(&mut data)
            .map_err(|e| ModelError::checkpoint(path, e.to_string()))?;
        out.insert(name, data);
    }
    Ok(out)
}

struct Loaded {
    path: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
    meta: Meta,
}

impl Loaded {
    fn open(path: &Path, kind: Kind) -> Result<Self> {
        let files = read_archive(path)?;
        let mut loaded = Self {
            path: path.to_path_buf(),
            files,
            meta: Meta {
                format: String::new(),
                version: 0,
                kind,
                epoch: 0,
            },
        };
        let meta: Meta = loaded.json(META)?;
        if meta.format != FORMAT || meta.version != VERSION {
            return Err(ModelError::checkpoint(
                path,
                format!("unsupported format {} v{}", meta.format, meta.version),
            ));
        }
        if meta.kind != kind {
            return Err(ModelError::checkpoint(
                path,
                format!("expected a {kind:?} checkpoint, found {:?}", meta.kind),
            ));
        }
        loaded.meta = meta;
        Ok(loaded)
    }

    fn file(&self, name: &str) -> Result<&[u8]> {
        self.files
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| ModelError::checkpoint(&self.path, format!("missing {name}")))
    }

    fn json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        serde_json::from_slice(self.file(name)?)
            .map_err(|e| ModelError::checkpoint(&self.path, format!("{name}: {e}")))
    }

    fn text(&self, name: &str) -> Result<&str> {
        std::str::from_utf8(self.file(name)?)
            .map_err(|e| ModelError::checkpoint(&self.path, format!("{name}: {e}")))
    }

    fn weights(&self, name: &str, store: &crate::params::ParamStore) -> Result<()> {
        store
            .load_safetensors(self.file(name)?)
            .map_err(|e| ModelError::checkpoint(&self.path, format!("{name}: {e}")))
    }
}

fn meta_json(kind: Kind, epoch: usize) -> Vec<u8> {
    let meta = Meta {
        format: FORMAT.into(),
        version: VERSION,
        kind,
        epoch,
    };
    serde_json::to_vec_pretty(&meta).expect("meta serializes")
}

impl VaeCheckpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_archive(
            path.as_ref(),
            &[
                (META, meta_json(Kind::Vae, self.epoch)),
                (CONFIG, serde_json::to_vec_pretty(&self.config).expect("config serializes")),
                (TRACE, vae_trace_csv(&self.trace).into_bytes()),
                (VAE_WEIGHTS, self.model.params().to_safetensors()?),
            ],
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ld = Loaded::open(path, Kind::Vae)?;
        let config: VaeConfig = ld.json(CONFIG)?;
        let model = Vae::new(&config, DType::F32, &Device::Cpu)
            .map_err(|e| ModelError::checkpoint(path, e.to_string()))?;
        ld.weights(VAE_WEIGHTS, model.params())?;
        let trace = parse_rows(path, ld.text(TRACE)?)?
            .into_iter()
            .map(|(epoch, [recons, kl, total, lr])| VaeEpoch {
                epoch,
                recons,
                kl,
                total,
                lr,
            })
            .collect();
        Ok(Self {
            config,
            epoch: ld.meta.epoch,
            trace,
            model,
        })
    }
}

impl GanCheckpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_archive(
            path.as_ref(),
            &[
                (META, meta_json(Kind::Gan, self.epoch)),
                (CONFIG, serde_json::to_vec_pretty(&self.config).expect("config serializes")),
                (TRACE, gan_trace_csv(&self.trace).into_bytes()),
                (GEN_WEIGHTS, self.generator.params().to_safetensors()?),
                (DISC_WEIGHTS, self.discriminator.params().to_safetensors()?),
            ],
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ld = Loaded::open(path, Kind::Gan)?;
        let config: GanConfig = ld.json(CONFIG)?;
        let wrap = |e: ModelError| ModelError::checkpoint(path, e.to_string());
        let generator = Generator::new(&config, DType::F32, &Device::Cpu).map_err(wrap)?;
        let discriminator = Discriminator::new(&config, DType::F32, &Device::Cpu).map_err(wrap)?;
        ld.weights(GEN_WEIGHTS, generator.params())?;
        ld.weights(DISC_WEIGHTS, discriminator.params())?;
        let trace = parse_rows(path, ld.text(TRACE)?)?
            .into_iter()
            .map(|(epoch, [g_adv, g_l1, d, lr])| GanEpoch {
                epoch,
                g_adv,
                g_l1,
                d,
                lr,
            })
            .collect();
        Ok(Self {
            config,
            epoch: ld.meta.epoch,
            trace,
            generator,
            discriminator,
        })
    }
}
