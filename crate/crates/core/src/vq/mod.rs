//! Sparse vector-quantized autoencoder over occupancy grids.
//!
//! A 64³ occupancy grid is split into blocks, one per latent cell (8³ voxels
//! per block for the 8x8x8 profile). A shared linear map turns each block into
//! a latent vector; occupied cells are snapped to their nearest codebook entry
//! among entries `1..N`, while cells whose block is empty take entry 0, the
//! reserved zero token. A second shared linear map decodes each quantized
//! latent back to per-voxel logits.

mod checkpoint;
mod kmeans;
mod loss;
mod ops;
mod recon;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::codec::{densify, tokenize_grid, CodecError, CodecProfile, GridDims, TokenSequence};
use crate::exec::Exec;
use crate::voxel::OccupancyGrid;

pub use checkpoint::CHECKPOINT_VERSION;
pub use kmeans::{init_codebook, kmeans};
pub use loss::{bce_with_logits, vq_loss, VqLoss, LOGIT_CLAMP};
pub use ops::{
    block_occupancy, decode, encode, occupancy_downsample, quantize, quantize_all, Decoded, LatentMask, Quantized,
};
pub(crate) use recon::chamfer;
pub use recon::{recon_metrics, ReconMetrics, RECON_SCALE};
pub use train::{loss_and_gradients, train_vqvae, Gradients, LrSchedule, Optimizer, TrainConfig, TrainOutput};

#[derive(Debug, Error)]
pub enum VqError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("codebook needs at least 2 entries, has {0}")]
    EmptyCodebook(usize),
    #[error("no latent samples available for codebook initialization")]
    NoSamples,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at step {step}")]
    DivergedLoss { step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape of the autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VqConfig {
    pub grid_dims: [usize; 3],
    pub latent_dims: GridDims,
    pub latent_dim: usize,
    pub codebook_size: usize,
    /// Reserve entry 0 for empty cells. When false ("force sparse"), every
    /// cell is quantized against entries `1..N` and the mask only decides
    /// which cells are emitted as tokens.
    pub zero_token: bool,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self::for_profile(CodecProfile::Cube8)
    }
}

impl VqConfig {
    pub fn for_profile(profile: CodecProfile) -> Self {
        VqConfig {
            grid_dims: [64; 3],
            latent_dims: profile.dims(),
            latent_dim: 64,
            codebook_size: profile.codebook_size() as usize,
            zero_token: true,
        }
    }

    pub fn validate(&self) -> Result<(), VqError> {
        let l = self.latent_dims.as_array();
        for a in 0..3 {
            if l[a] == 0 || self.grid_dims[a] == 0 || !self.grid_dims[a].is_multiple_of(l[a]) {
                return Err(VqError::DimensionMismatch(format!(
                    "grid {:?} is not divisible by latent grid {}",
                    self.grid_dims, self.latent_dims
                )));
            }
        }
        if self.latent_dim == 0 {
            return Err(VqError::InvalidConfig("latent_dim must be positive".into()));
        }
        if self.codebook_size < 2 {
            return Err(VqError::EmptyCodebook(self.codebook_size));
        }
        if self.codebook_size > u32::MAX as usize {
            return Err(VqError::InvalidConfig("codebook too large".into()));
        }
        Ok(())
    }

    /// Voxels per block along each axis.
    pub fn block_dims(&self) -> [usize; 3] {
        let l = self.latent_dims.as_array();
        [self.grid_dims[0] / l[0], self.grid_dims[1] / l[1], self.grid_dims[2] / l[2]]
    }

    pub fn block_len(&self) -> usize {
        let b = self.block_dims();
        b[0] * b[1] * b[2]
    }

    pub fn voxel_count(&self) -> usize {
        self.grid_dims.iter().product()
    }
}

/// Codebook entries stored row-major, `entries[k*dim..(k+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl Codebook {
    pub fn zeros(size: usize, dim: usize) -> Self {
        Codebook { dim, entries: vec![0.0; size * dim] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        Codebook { dim, entries: rows.iter().flatten().copied().collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry(&self, k: usize) -> &[f64] {
        &self.entries[k * self.dim..(k + 1) * self.dim]
    }

    pub fn entry_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.entries[k * self.dim..(k + 1) * self.dim]
    }
}

/// One feature vector per latent cell, cells in x-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    pub dims: GridDims,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl LatentGrid {
    pub fn zeros(dims: GridDims, dim: usize) -> Self {
        LatentGrid { dims, dim, data: vec![0.0; dims.cell_count() * dim] }
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Shared block encoder. `weight` holds one latent-sized column per block
/// voxel: `weight[v*latent_dim..(v+1)*latent_dim]` is added to the latent
/// when voxel `v` of the block is occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub block_len: usize,
    pub latent_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Shared block decoder. `weight[v*latent_dim..(v+1)*latent_dim]` is the row
/// producing the logit of block voxel `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub block_len: usize,
    pub latent_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(block_len: usize, latent_dim: usize) -> Self {
        EncoderParams {
            block_len,
            latent_dim,
            weight: vec![0.0; block_len * latent_dim],
            bias: vec![0.0; latent_dim],
        }
    }

    /// Gaussian weights with variance `1/block_len`, zero bias.
    pub fn random(block_len: usize, latent_dim: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / block_len as f64).sqrt();
        let mut p = Self::zeros(block_len, latent_dim);
        for w in &mut p.weight {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }
}

impl DecoderParams {
    pub fn zeros(block_len: usize, latent_dim: usize) -> Self {
        DecoderParams {
            block_len,
            latent_dim,
            weight: vec![0.0; block_len * latent_dim],
            bias: vec![0.0; block_len],
        }
    }

    /// Gaussian weights with variance `1/latent_dim`, zero bias.
    pub fn random(block_len: usize, latent_dim: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / latent_dim as f64).sqrt();
        let mut p = Self::zeros(block_len, latent_dim);
        for w in &mut p.weight {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }
}

/// Encoder, decoder and codebook together with their shape.
#[derive(Debug, Clone, PartialEq)]
pub struct VqModel {
    pub config: VqConfig,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub codebook: Codebook,
}

impl VqModel {
    /// Randomly initialized encoder/decoder and an all-zero codebook.
    pub fn random(config: VqConfig, seed: u64) -> Result<Self, VqError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bl = config.block_len();
        Ok(VqModel {
            config,
            encoder: EncoderParams::random(bl, config.latent_dim, &mut rng),
            decoder: DecoderParams::random(bl, config.latent_dim, &mut rng),
            codebook: Codebook::zeros(config.codebook_size, config.latent_dim),
        })
    }

    pub fn validate(&self) -> Result<(), VqError> {
        self.config.validate()?;
        let bl = self.config.block_len();
        let d = self.config.latent_dim;
        let ok = self.encoder.block_len == bl
            && self.encoder.latent_dim == d
            && self.encoder.weight.len() == bl * d
            && self.encoder.bias.len() == d
            && self.decoder.block_len == bl
            && self.decoder.latent_dim == d
            && self.decoder.weight.len() == bl * d
            && self.decoder.bias.len() == bl
            && self.codebook.dim == d
            && self.codebook.len() == self.config.codebook_size;
        if !ok {
            return Err(VqError::DimensionMismatch("model parameter shapes disagree with config".into()));
        }
        Ok(())
    }

    pub fn codec(&self) -> crate::codec::Codec {
        crate::codec::Codec {
            dims: self.config.latent_dims,
            codebook_size: self.config.codebook_size as u32,
        }
    }

    /// Encode and quantize one grid.
    pub fn quantize_grid(&self, grid: &OccupancyGrid, exec: Exec) -> Result<Quantized, VqError> {
        let z = encode(grid, &self.encoder, &self.config, exec)?;
        if self.config.zero_token {
            let mask = occupancy_downsample(grid, self.config.latent_dims)?;
            quantize(&z, &mask, &self.codebook, exec)
        } else {
            quantize_all(&z, &self.codebook, exec)
        }
    }

    /// Encode, quantize and decode at the 0.5 threshold.
    pub fn reconstruct(&self, grid: &OccupancyGrid, exec: Exec) -> Result<Decoded, VqError> {
        let q = self.quantize_grid(grid, exec)?;
        decode(&q.latent, &self.decoder, &self.config, 0.5, exec)
    }

    pub fn tokens_for(&self, grid: &OccupancyGrid, exec: Exec) -> Result<TokenSequence, VqError> {
        let q = self.quantize_grid(grid, exec)?;
        Ok(tokenize_grid(&q.indices, self.codec())?)
    }

    /// Occupancy from a token stream; absent cells decode from the zero token.
    pub fn decode_tokens(&self, tokens: &TokenSequence, exec: Exec) -> Result<Decoded, VqError> {
        if tokens.codec() != self.codec() {
            return Err(VqError::DimensionMismatch(format!(
                "token stream uses {} cells / {} entries, model has {} / {}",
                tokens.codec().dims,
                tokens.codec().codebook_size,
                self.config.latent_dims,
                self.config.codebook_size
            )));
        }
        let indices = densify(tokens);
        let mut latent = LatentGrid::zeros(self.config.latent_dims, self.config.latent_dim);
        for (c, &k) in indices.indices.iter().enumerate() {
            latent.cell_mut(c).copy_from_slice(self.codebook.entry(k as usize));
        }
        decode(&latent, &self.decoder, &self.config, 0.5, exec)
    }
}
