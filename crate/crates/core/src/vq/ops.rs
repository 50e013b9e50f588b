use crate::codec::{GridDims, IndexGrid};
use crate::exec::{self, Exec};
use crate::voxel::OccupancyGrid;

use super::{Codebook, DecoderParams, EncoderParams, LatentGrid, VqConfig, VqError};

/// Per-latent-cell occupancy, x-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentMask {
    pub dims: GridDims,
    pub cells: Vec<bool>,
}

impl LatentMask {
    pub fn all(dims: GridDims, value: bool) -> Self {
        LatentMask { dims, cells: vec![value; dims.cell_count()] }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

fn block_dims_for(grid: [usize; 3], latent: GridDims) -> Result<[usize; 3], VqError> {
    let l = latent.as_array();
    let mut b = [0; 3];
    for a in 0..3 {
        if l[a] == 0 || !grid[a].is_multiple_of(l[a]) {
            return Err(VqError::DimensionMismatch(format!(
                "grid {grid:?} is not divisible by latent grid {latent}"
            )));
        }
        b[a] = grid[a] / l[a];
    }
    Ok(b)
}

/// A latent cell is occupied iff any voxel of its block is.
pub fn occupancy_downsample(grid: &OccupancyGrid, latent: GridDims) -> Result<LatentMask, VqError> {
    let g = grid.dims();
    let b = block_dims_for(g, latent)?;
    let mut mask = LatentMask::all(latent, false);
    for i in grid.occupied() {
        let [x, y, z] = grid.coords(i);
        let cell = ((x / b[0]) * latent.y + y / b[1]) * latent.z + z / b[2];
        mask.cells[cell] = true;
    }
    Ok(mask)
}

/// Offsets (block-local, x-major) of the occupied voxels in one cell's block.
pub fn block_occupancy(grid: &OccupancyGrid, config: &VqConfig, cell: usize) -> Vec<u32> {
    let b = config.block_dims();
    let l = config.latent_dims;
    let (cx, cy, cz) = (cell / (l.y * l.z), (cell / l.z) % l.y, cell % l.z);
    let mut ones = Vec::new();
    let mut v = 0u32;
    for bx in 0..b[0] {
        for by in 0..b[1] {
            for bz in 0..b[2] {
                if grid.get(cx * b[0] + bx, cy * b[1] + by, cz * b[2] + bz) {
                    ones.push(v);
                }
                v += 1;
            }
        }
    }
    ones
}

/// Grid linear index of every voxel in a cell's block, block-local order.
pub(crate) fn block_voxel_indices(config: &VqConfig, cell: usize) -> Vec<usize> {
    let b = config.block_dims();
    let l = config.latent_dims;
    let g = config.grid_dims;
    let (cx, cy, cz) = (cell / (l.y * l.z), (cell / l.z) % l.y, cell % l.z);
    let mut out = Vec::with_capacity(config.block_len());
    for bx in 0..b[0] {
        for by in 0..b[1] {
            for bz in 0..b[2] {
                let (x, y, z) = (cx * b[0] + bx, cy * b[1] + by, cz * b[2] + bz);
                out.push((x * g[1] + y) * g[2] + z);
            }
        }
    }
    out
}

fn check_grid(grid: &OccupancyGrid, config: &VqConfig) -> Result<(), VqError> {
    config.validate()?;
    if grid.dims() != config.grid_dims {
        return Err(VqError::DimensionMismatch(format!(
            "grid dims {:?} differ from model grid {:?}",
            grid.dims(),
            config.grid_dims
        )));
    }
    Ok(())
}

/// Latent of one block given its occupied voxel offsets.
pub(crate) fn encode_block(enc: &EncoderParams, ones: &[u32], out: &mut [f64]) {
    let d = enc.latent_dim;
    out.copy_from_slice(&enc.bias);
    for &v in ones {
        let col = &enc.weight[v as usize * d..(v as usize + 1) * d];
        for (o, w) in out.iter_mut().zip(col) {
            *o += w;
        }
    }
}

/// Linear map of every block (0/1 voxels) to a latent vector.
pub fn encode(
    grid: &OccupancyGrid,
    enc: &EncoderParams,
    config: &VqConfig,
    exec: Exec,
) -> Result<LatentGrid, VqError> {
    check_grid(grid, config)?;
    if enc.block_len != config.block_len() || enc.latent_dim != config.latent_dim {
        return Err(VqError::DimensionMismatch("encoder shape does not match config".into()));
    }
    let d = config.latent_dim;
    let mut latent = LatentGrid::zeros(config.latent_dims, d);
    exec::for_each_chunk_mut(exec, &mut latent.data, d, |cell, out| {
        let ones = block_occupancy(grid, config, cell);
        encode_block(enc, &ones, out);
    });
    Ok(latent)
}

/// Squared Euclidean distance with eight independent accumulators.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let n8 = a.len() / 8 * 8;
    for (ca, cb) in a[..n8].chunks_exact(8).zip(b[..n8].chunks_exact(8)) {
        for l in 0..8 {
            let t = ca[l] - cb[l];
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for i in n8..a.len() {
        let t = a[i] - b[i];
        tail += t * t;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Nearest entry among `1..N`; the lowest index wins ties.
pub(crate) fn nearest_nonzero_entry(z: &[f64], codebook: &Codebook) -> usize {
    let mut best = 1;
    let mut best_d = f64::INFINITY;
    for k in 1..codebook.len() {
        let d = sq_dist(z, codebook.entry(k));
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub indices: IndexGrid,
    pub latent: LatentGrid,
}

/// Zero-token quantization: unoccupied cells take entry 0, occupied cells
/// the nearest of entries `1..N`.
pub fn quantize(
    latent: &LatentGrid,
    mask: &LatentMask,
    codebook: &Codebook,
    exec: Exec,
) -> Result<Quantized, VqError> {
    quantize_impl(latent, Some(mask), codebook, exec)
}

/// Quantize every cell against entries `1..N`, ignoring occupancy. Used by
/// the force-sparse configuration that has no reserved empty token.
pub fn quantize_all(latent: &LatentGrid, codebook: &Codebook, exec: Exec) -> Result<Quantized, VqError> {
    quantize_impl(latent, None, codebook, exec)
}

fn quantize_impl(
    latent: &LatentGrid,
    mask: Option<&LatentMask>,
    codebook: &Codebook,
    exec: Exec,
) -> Result<Quantized, VqError> {
    if codebook.len() < 2 {
        return Err(VqError::EmptyCodebook(codebook.len()));
    }
    if codebook.dim != latent.dim {
        return Err(VqError::DimensionMismatch(format!(
            "codebook dim {} vs latent dim {}",
            codebook.dim, latent.dim
        )));
    }
    if let Some(m) = mask {
        if m.dims != latent.dims {
            return Err(VqError::DimensionMismatch(format!(
                "mask dims {} vs latent dims {}",
                m.dims, latent.dims
            )));
        }
    }
    let n = latent.dims.cell_count();
    let idx: Vec<u32> = exec::map_range(exec, n, |c| {
        if mask.is_some_and(|m| !m.cells[c]) {
            0
        } else {
            nearest_nonzero_entry(latent.cell(c), codebook) as u32
        }
    });
    let mut q = LatentGrid::zeros(latent.dims, latent.dim);
    for (c, &k) in idx.iter().enumerate() {
        q.cell_mut(c).copy_from_slice(codebook.entry(k as usize));
    }
    Ok(Quantized { indices: IndexGrid { dims: latent.dims, indices: idx }, latent: q })
}

/// Logits of one block for one latent vector.
pub(crate) fn decode_block(dec: &DecoderParams, zq: &[f64], out: &mut [f64]) {
    let d = dec.latent_dim;
    if zq.iter().all(|&v| v == 0.0) {
        out.copy_from_slice(&dec.bias);
        return;
    }
    for (v, o) in out.iter_mut().enumerate() {
        let row = &dec.weight[v * d..(v + 1) * d];
        let mut acc = [0.0f64; 4];
        let n4 = d / 4 * 4;
        for (r, z) in row[..n4].chunks_exact(4).zip(zq[..n4].chunks_exact(4)) {
            for l in 0..4 {
                acc[l] += r[l] * z[l];
            }
        }
        let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for i in n4..d {
            s += row[i] * zq[i];
        }
        *o = dec.bias[v] + s;
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub grid: OccupancyGrid,
    /// One logit per voxel, x-major over the full grid.
    pub logits: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-voxel logits from quantized latents; a voxel is occupied when
/// `sigmoid(logit) > threshold`.
pub fn decode(
    quantized: &LatentGrid,
    dec: &DecoderParams,
    config: &VqConfig,
    threshold: f64,
    exec: Exec,
) -> Result<Decoded, VqError> {
    config.validate()?;
    if quantized.dims != config.latent_dims || quantized.dim != config.latent_dim {
        return Err(VqError::DimensionMismatch("latent grid does not match decoder config".into()));
    }
    if dec.block_len != config.block_len() || dec.latent_dim != config.latent_dim {
        return Err(VqError::DimensionMismatch("decoder shape does not match config".into()));
    }
    let bl = config.block_len();
    let mut blocks = vec![0.0; quantized.dims.cell_count() * bl];
    exec::for_each_chunk_mut(exec, &mut blocks, bl, |cell, out| {
        decode_block(dec, quantized.cell(cell), out);
    });
    let mut logits = vec![0.0; config.voxel_count()];
    let mut grid = OccupancyGrid::new(config.grid_dims);
    for cell in 0..quantized.dims.cell_count() {
        let block = &blocks[cell * bl..(cell + 1) * bl];
        for (v, gi) in block_voxel_indices(config, cell).into_iter().enumerate() {
            logits[gi] = block[v];
            if sigmoid(block[v]) > threshold {
                grid.set_linear(gi, true);
            }
        }
    }
    Ok(Decoded { grid, logits })
}
