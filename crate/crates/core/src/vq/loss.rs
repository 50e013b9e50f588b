use serde::Serialize;

use crate::voxel::OccupancyGrid;

use super::{LatentGrid, LatentMask, VqError};

/// Logits are clamped to `±LOGIT_CLAMP` before the cross-entropy.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Loss terms of one evaluation. `codebook` and `commit` have the same value;
/// they differ only in which parameters receive their gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VqLoss {
    pub total: f64,
    pub recon: f64,
    pub codebook: f64,
    pub commit: f64,
}

impl VqLoss {
    pub fn combine(recon: f64, vq: f64, beta: f64) -> Self {
        VqLoss { total: recon + vq + beta * vq, recon, codebook: vq, commit: vq }
    }
}

/// Numerically stable binary cross-entropy of a (clamped) logit.
#[inline]
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    let l = logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    l.max(0.0) - l * target + (-l.abs()).exp().ln_1p()
}

/// Reconstruction, codebook and commitment terms for one grid.
///
/// `recon` is the mean per-voxel cross-entropy; the two quantization terms are
/// the mean squared latent error over masked cells and feature components
/// (zero when no cell is masked).
pub fn vq_loss(
    input: &OccupancyGrid,
    logits: &[f64],
    z: &LatentGrid,
    zq: &LatentGrid,
    mask: &LatentMask,
    beta: f64,
) -> Result<VqLoss, VqError> {
    if logits.len() != input.cell_count() {
        return Err(VqError::DimensionMismatch(format!(
            "{} logits for {} voxels",
            logits.len(),
            input.cell_count()
        )));
    }
    if z.dims != zq.dims || z.dim != zq.dim || z.dims != mask.dims {
        return Err(VqError::DimensionMismatch("latent grids and mask disagree".into()));
    }
    let recon = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| bce_with_logits(l, if input.get_linear(i) { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / logits.len() as f64;

    let mut sq = 0.0;
    let mut cells = 0usize;
    for c in 0..z.dims.cell_count() {
        if mask.cells[c] {
            cells += 1;
            sq += z.cell(c).iter().zip(zq.cell(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    let vq = if cells == 0 { 0.0 } else { sq / (cells * z.dim) as f64 };
    Ok(VqLoss::combine(recon, vq, beta))
}
