//! Test-set scoring in meters.

use ndarray::Array2;
use topogen_core::dem::{denormalize, mse_many, EvalReport, NormalizedPatch};
use topogen_core::Execution;

use crate::cgan::Generator;
use crate::data::{load_pairs, sketch_batch, to_grids, PairSource};
use crate::train::condition;
use crate::vae::Vae;
use crate::cgan::Conditioning;
use crate::{ModelError, Result};

/// Score generated normalized grids against their ground-truth patches.
/// Both sides are read back in meters with the ground truth's range.
pub fn score(
    ids: Vec<String>,
    generated: Vec<Array2<f64>>,
    truths: &[NormalizedPatch],
    exec: Execution,
) -> Result<EvalReport> {
    if generated.len() != truths.len() || ids.len() != truths.len() {
        return Err(ModelError::Shape(format!(
            "{} ids, {} generated, {} ground truths",
            ids.len(),
            generated.len(),
            truths.len()
        )));
    }
    let pairs = generated
        .into_iter()
        .zip(truths)
        .map(|(g, t)| Ok((denormalize(&t.with_values(g)?), denormalize(t))))
        .collect::<Result<Vec<_>>>()?;
    let mse = mse_many(&pairs, exec)?;
    Ok(EvalReport::new(ids, mse)?)
}

/// Run every pair of `data` through the generator (optionally after the VAE)
/// in inference mode and score it.
pub fn evaluate<S: PairSource + ?Sized>(
    data: &S,
    gen: &Generator,
    vae: Option<&Vae>,
    batch_size: usize,
    exec: Execution,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let conditioning = if vae.is_some() {
        Conditioning::VaeReconstruction
    } else {
        Conditioning::GroundTruth
    };
    let all: Vec<usize> = (0..data.len()).collect();
    let (mut ids, mut generated, mut truths) = (Vec::new(), Vec::new(), Vec::new());
    for idx in all.chunks(batch_size.max(1)) {
        let pairs = load_pairs(data, idx, exec)?;
        let sketches: Vec<_> = pairs.iter().map(|p| p.sketch.clone()).collect();
        let x = sketch_batch(&sketches, gen.dtype(), gen.device())?;
        let x = condition(&x, conditioning, vae)?;
        generated.extend(to_grids(&gen.generate(&x)?)?);
        for p in pairs {
            ids.push(p.id);
            truths.push(p.dem);
        }
    }
    score(ids, generated, &truths, exec)
}
