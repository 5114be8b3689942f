//! Seeded train/test corpus of (sketch, normalized DEM) pairs.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.jsonl            one {pair_id, topo_path, dem_path, split} per line
//! topo/<pair_id>.png        8-bit RGB sketch
//! dem/<pair_id>.png         16-bit normalized patch
//! dem/<pair_id>.json        its h_min / h_max / pixel_size_m sidecar
//! ```
//!
//! Paths in the manifest are relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::s;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dem::{self, normalize_patch, write_patch_png16, DemGrid};
use crate::sketch::{extract_topo_map, SketchParams};
use crate::{CoreError, Execution, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub topo_path: String,
    pub dem_path: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub patch_px: usize,
    pub stride_px: usize,
    pub out_px: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub seed: u64,
    pub sketch: SketchParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            patch_px: 200,
            stride_px: 200,
            out_px: 256,
            train_n: 3000,
            test_n: 878,
            seed: 0,
            sketch: SketchParams::default(),
        }
    }
}

/// A loaded manifest: entries plus the directory their paths are relative to.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|source| CoreError::Json {
                    path: path.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<ManifestEntry>>>()?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct TileRef {
    file: usize,
    y: usize,
    x: usize,
}

/// DEM files in `dir` (`.asc`, or `.png` with a `.json` sidecar), sorted.
pub fn list_dem_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| CoreError::io(dir, e))?.path();
        let ext = p
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("asc") => files.push(p),
            Some("png") if dem::sidecar_path(&p).exists() => files.push(p),
            _ => {}
        }
    }
    files.sort();
    Ok(files)
}

/// Tile `dem_dir`, draw a seeded train/test sample, extract sketches and
/// write the paired corpus plus `manifest.jsonl` into `out_dir`.
pub fn build_dataset(
    dem_dir: &Path,
    out_dir: &Path,
    cfg: &DatasetConfig,
    exec: Execution,
) -> Result<Manifest> {
    if !dem_dir.is_dir() {
        return Err(CoreError::io(
            dem_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "DEM directory not found"),
        ));
    }
    let files = list_dem_files(dem_dir)?;
    let grids: Vec<DemGrid> = files
        .iter()
        .map(|f| dem::load_dem(f).map(|l| l.grid))
        .collect::<Result<_>>()?;
    build_dataset_from_grids(&grids, out_dir, cfg, exec)
}

/// Same as [`build_dataset`] for grids already in memory. Each grid's
/// `origin_id` prefixes its pair ids and must be unique.
pub fn build_dataset_from_grids(
    grids: &[DemGrid],
    out_dir: &Path,
    cfg: &DatasetConfig,
    exec: Execution,
) -> Result<Manifest> {
    let mut tiles = Vec::new();
    for (file, g) in grids.iter().enumerate() {
        let (rows, cols) = g.dim();
        for y in dem::tile_offsets(rows, cfg.patch_px, cfg.stride_px) {
            for x in dem::tile_offsets(cols, cfg.patch_px, cfg.stride_px) {
                tiles.push(TileRef { file, y, x });
            }
        }
    }
    let requested = cfg.train_n + cfg.test_n;
    if tiles.len() < requested {
        return Err(CoreError::InsufficientPatches {
            available: tiles.len(),
            requested,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    tiles.shuffle(&mut rng);
    tiles.truncate(requested);
    let mut chosen: Vec<(TileRef, Split)> = tiles
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, if i < cfg.train_n { Split::Train } else { Split::Test }))
        .collect();
    chosen.sort();

    for sub in ["topo", "dem"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| CoreError::io(&d, e))?;
    }

    let entries = exec.try_map(&chosen, |(t, split)| -> Result<ManifestEntry> {
        let g = &grids[t.file];
        let base = g.origin_id().map(str::to_string).unwrap_or(format!("dem{}", t.file));
        let pair_id = dem::tile_id(&base, t.y, t.x);
        let heights = g
            .heights()
            .slice(s![t.y..t.y + cfg.patch_px, t.x..t.x + cfg.patch_px])
            .to_owned();
        let tile = DemGrid::new(heights, g.pixel_size_m())?;
        let patch = normalize_patch(&tile, cfg.out_px)?;
        let topo = extract_topo_map(&patch, &cfg.sketch)?;
        let topo_path = format!("topo/{pair_id}.png");
        let dem_path = format!("dem/{pair_id}.png");
        topo.save(out_dir.join(&topo_path))?;
        write_patch_png16(&patch, out_dir.join(&dem_path))?;
        Ok(ManifestEntry {
            pair_id,
            topo_path,
            dem_path,
            split: *split,
        })
    })?;

    // single-threaded write after a deterministic sort
    let by_id: BTreeMap<String, ManifestEntry> =
        entries.into_iter().map(|e| (e.pair_id.clone(), e)).collect();
    if by_id.len() != requested {
        return Err(CoreError::InvalidGrid(
            "duplicate pair ids: DEM file stems must be unique".into(),
        ));
    }
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        entries: by_id.into_values().collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let tmp = out_dir.join(format!("{MANIFEST_FILE}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CoreError::io(&tmp, e))?;
    f.write_all(manifest.to_jsonl().as_bytes())
        .map_err(|e| CoreError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, &path).map_err(|e| CoreError::io(&path, e))?;
    log::info!(
        "wrote {} pairs ({} train / {} test) to {}",
        requested,
        cfg.train_n,
        cfg.test_n,
        out_dir.display()
    );
    Ok(manifest)
}
