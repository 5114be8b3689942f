//! Training data access and tensor conversion.

use std::path::PathBuf;

use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3};
use topogen_core::dataset::{Manifest, ManifestEntry, Split};
use topogen_core::dem::{load_patch_png16, NormalizedPatch};
use topogen_core::sketch::TopoField;
use topogen_core::Execution;

use crate::{ModelError, Result};

/// A sketch and the normalized DEM it was extracted from.
#[derive(Debug, Clone)]
pub struct Pair {
    pub id: String,
    pub sketch: TopoField,
    pub dem: NormalizedPatch,
}

/// Indexed sketch collection.
pub trait Sketches: Sync {
    fn len(&self) -> usize;
    fn sketch(&self, i: usize) -> Result<TopoField>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Indexed sketch/DEM pairs.
pub trait PairSource: Sketches {
    fn pair(&self, i: usize) -> Result<Pair>;
}

impl Sketches for [TopoField] {
    fn len(&self) -> usize {
        <[TopoField]>::len(self)
    }

    fn sketch(&self, i: usize) -> Result<TopoField> {
        Ok(self[i].clone())
    }
}

impl Sketches for [Pair] {
    fn len(&self) -> usize {
        <[Pair]>::len(self)
    }

    fn sketch(&self, i: usize) -> Result<TopoField> {
        Ok(self[i].sketch.clone())
    }
}

impl PairSource for [Pair] {
    fn pair(&self, i: usize) -> Result<Pair> {
        Ok(self[i].clone())
    }
}

/// One split of a prepared dataset, read from disk on demand.
#[derive(Debug, Clone)]
pub struct ManifestPairs {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl ManifestPairs {
    pub fn new(manifest: &Manifest, split: Split) -> Self {
        Self {
            root: manifest.root.clone(),
            entries: manifest.split(split).cloned().collect(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.pair_id.as_str())
    }
}

impl Sketches for ManifestPairs {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn sketch(&self, i: usize) -> Result<TopoField> {
        Ok(TopoField::load(self.root.join(&self.entries[i].topo_path))?)
    }
}

impl PairSource for ManifestPairs {
    fn pair(&self, i: usize) -> Result<Pair> {
        let e = &self.entries[i];
        Ok(Pair {
            id: e.pair_id.clone(),
            sketch: self.sketch(i)?,
            dem: load_patch_png16(self.root.join(&e.dem_path))?,
        })
    }
}

pub fn load_sketches<S: Sketches + ?Sized>(src: &S, idx: &[usize], exec: Execution) -> Result<Vec<TopoField>> {
    exec.try_map(idx, |&i| src.sketch(i))
}

pub fn load_pairs<S: PairSource + ?Sized>(src: &S, idx: &[usize], exec: Execution) -> Result<Vec<Pair>> {
    exec.try_map(idx, |&i| src.pair(i))
}

/// Stack sketches into `(N, 3, H, W)`.
pub fn sketch_batch(fields: &[TopoField], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = fields.first().ok_or(ModelError::EmptyDataset)?;
    let (h, w) = first.dim();
    let mut flat = Vec::with_capacity(fields.len() * 3 * h * w);
    for f in fields {
        if f.dim() != (h, w) {
            return Err(ModelError::Shape(format!("sketch {:?} in a batch of {:?}", f.dim(), (h, w))));
        }
        flat.extend(f.data().iter().copied());
    }
    Ok(Tensor::from_vec(flat, (fields.len(), 3, h, w), device)?.to_dtype(dtype)?)
}

/// Stack normalized DEMs into `(N, 1, H, W)`.
pub fn dem_batch(patches: &[&NormalizedPatch], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = patches.first().ok_or(ModelError::EmptyDataset)?;
    let (h, w) = first.dim();
    let mut flat = Vec::with_capacity(patches.len() * h * w);
    for p in patches {
        if p.dim() != (h, w) {
            return Err(ModelError::Shape(format!("DEM {:?} in a batch of {:?}", p.dim(), (h, w))));
        }
        flat.extend(p.values().iter().copied());
    }
    Ok(Tensor::from_vec(flat, (patches.len(), 1, h, w), device)?.to_dtype(dtype)?)
}

/// Split `(N, 3, H, W)` probabilities into sketches, clamped to `[0, 1]`.
pub fn to_fields(t: &Tensor) -> Result<Vec<TopoField>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(ModelError::Shape(format!("expected 3 channels, got {c}")));
    }
    let flat: Vec<f32> = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    flat.chunks(3 * h * w)
        .take(n)
        .map(|chunk| {
            let data = Array3::from_shape_vec((3, h, w), chunk.iter().map(|v| v.clamp(0.0, 1.0)).collect())
                .expect("chunk length matches");
            Ok(TopoField::new(data)?)
        })
        .collect()
}

/// Split `(N, 1, H, W)` into grids, clamped to `[0, 1]`.
pub fn to_grids(t: &Tensor) -> Result<Vec<Array2<f64>>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 1 {
        return Err(ModelError::Shape(format!("expected 1 channel, got {c}")));
    }
    let flat: Vec<f64> = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    Ok(flat
        .chunks(h * w)
        .take(n)
        .map(|chunk| {
            Array2::from_shape_vec((h, w), chunk.iter().map(|v| v.clamp(0.0, 1.0)).collect())
                .expect("chunk length matches")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_round_trip() {
        let f = TopoField::new(Array3::from_shape_fn((3, 4, 5), |(c, r, x)| ((c * 20 + r * 5 + x) as f32) / 60.0)).unwrap();
        let g = TopoField::new(Array3::from_elem((3, 4, 5), 0.25)).unwrap();
        let t = sketch_batch(&[f.clone(), g.clone()], DType::F32, &Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[2, 3, 4, 5]);
        assert_eq!(to_fields(&t).unwrap(), vec![f, g]);

        let p = NormalizedPatch::new(Array2::from_shape_fn((4, 5), |(r, c)| (r * 5 + c) as f64 / 19.0), 10.0, 20.0, 2.0).unwrap();
        let t = dem_batch(&[&p, &p], DType::F64, &Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[2, 1, 4, 5]);
        assert_eq!(to_grids(&t).unwrap()[1], p.values().clone());
    }

    #[test]
    fn mismatched_batches_are_rejected() {
        let f = TopoField::new(Array3::zeros((3, 4, 4))).unwrap();
        let g = TopoField::new(Array3::zeros((3, 4, 5))).unwrap();
        assert!(sketch_batch(&[f, g], DType::F32, &Device::Cpu).is_err());
        assert!(matches!(sketch_batch(&[], DType::F32, &Device::Cpu), Err(ModelError::EmptyDataset)));
    }
}
