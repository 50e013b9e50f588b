//! Full-gradient training of the block autoencoder and codebook.
//!
//! Gradients are written out by hand. The reconstruction gradient reaches the
//! encoder through the straight-through estimator; the codebook term moves
//! only codebook entries and the commitment term only the encoder. Cells whose
//! block is empty decode from the frozen zero token and contribute only to the
//! decoder bias.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::CodecProfile;
use crate::exec::{self, Exec};
use crate::voxel::OccupancyGrid;

use super::kmeans::init_codebook;
use super::loss::{bce_with_logits, VqLoss, LOGIT_CLAMP};
use super::ops::{block_occupancy, decode_block, encode_block, nearest_nonzero_entry, sigmoid};
use super::{DecoderParams, EncoderParams, VqConfig, VqError, VqModel};

/// Unique blocks per parallel work item; fixed so that the gradient sum order
/// does not depend on the thread count.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the run.
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Grids per step; the dataset is visited in a fixed cyclic order.
    pub batch_size: usize,
    /// Defaults to the profile's codebook size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebook_size: Option<usize>,
    pub seed: u64,
    pub profile: CodecProfile,
    pub latent_dim: usize,
    pub zero_token: bool,
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    pub kmeans_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.25,
            learning_rate: 0.01,
            steps: 1000,
            batch_size: 20,
            codebook_size: None,
            seed: 0,
            profile: CodecProfile::Cube8,
            latent_dim: 64,
            zero_token: true,
            optimizer: Optimizer::Adam,
            schedule: LrSchedule::Cosine,
            kmeans_iterations: 10,
        }
    }
}

impl TrainConfig {
    pub fn vq_config(&self) -> VqConfig {
        let base = VqConfig::for_profile(self.profile);
        VqConfig {
            latent_dim: self.latent_dim,
            codebook_size: self.codebook_size.unwrap_or(base.codebook_size),
            zero_token: self.zero_token,
            ..base
        }
    }

    pub fn validate(&self) -> Result<(), VqError> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(VqError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if self.steps == 0 {
            return Err(VqError::InvalidConfig("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(VqError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(VqError::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        self.vq_config().validate()
    }

    /// Parse the `key = value` training manifest.
    pub fn from_manifest(text: &str) -> Result<Self, VqError> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| VqError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_manifest(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: VqModel,
    /// Loss at the parameters used for each step, before its update.
    pub trace: Vec<VqLoss>,
}

/// Unique block patterns of a dataset and, per grid, how often each occurs.
pub(crate) struct BlockTable {
    pub patterns: Vec<Vec<u32>>,
    /// Per grid: (pattern id, multiplicity), sorted by id.
    pub per_grid: Vec<Vec<(usize, usize)>>,
    /// Per grid: cells decoded from the zero token.
    pub empty_cells: Vec<usize>,
}

impl BlockTable {
    pub fn build(grids: &[OccupancyGrid], config: &VqConfig) -> Self {
        let mut ids: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut per_grid = Vec::with_capacity(grids.len());
        let mut empty_cells = Vec::with_capacity(grids.len());
        for g in grids {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            let mut empty = 0;
            for cell in 0..config.latent_dims.cell_count() {
                let ones = block_occupancy(g, config, cell);
                if ones.is_empty() && config.zero_token {
                    empty += 1;
                    continue;
                }
                let id = *ids.entry(ones.clone()).or_insert_with(|| {
                    patterns.push(ones);
                    patterns.len() - 1
                });
                *counts.entry(id).or_default() += 1;
            }
            per_grid.push(counts.into_iter().collect());
            empty_cells.push(empty);
        }
        BlockTable { patterns, per_grid, empty_cells }
    }

    pub fn batch(&self, grids: &[usize], voxels_per_grid: usize) -> Batch {
        let mut weights: BTreeMap<usize, usize> = BTreeMap::new();
        let mut empty = 0;
        for &g in grids {
            for &(id, n) in &self.per_grid[g] {
                *weights.entry(id).or_default() += n;
            }
            empty += self.empty_cells[g];
        }
        let (ids, w): (Vec<usize>, Vec<f64>) = weights.into_iter().map(|(id, n)| (id, n as f64)).unzip();
        Batch {
            ids,
            weights: w,
            empty_cells: empty as f64,
            voxels: (grids.len() * voxels_per_grid) as f64,
        }
    }
}

pub(crate) struct Batch {
    pub ids: Vec<usize>,
    pub weights: Vec<f64>,
    pub empty_cells: f64,
    pub voxels: f64,
}

impl Batch {
    fn vq_cells(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Which loss terms contribute gradient.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Terms {
    pub recon: bool,
    pub codebook: bool,
    pub commit: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { recon: true, codebook: true, commit: true };
}

/// Gradients of the total loss, one vector per parameter block, laid out
/// like the parameters themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    pub dec_w: Vec<f64>,
    pub dec_b: Vec<f64>,
    pub codebook: Vec<f64>,
}

impl Gradients {
    fn zeros(model: &VqModel) -> Self {
        Gradients {
            enc_w: vec![0.0; model.encoder.weight.len()],
            enc_b: vec![0.0; model.encoder.bias.len()],
            dec_w: vec![0.0; model.decoder.weight.len()],
            dec_b: vec![0.0; model.decoder.bias.len()],
            codebook: vec![0.0; model.codebook.entries.len()],
        }
    }
}

struct ChunkResult {
    recon: f64,
    vq: f64,
    enc_w: Vec<f64>,
    enc_b: Vec<f64>,
    dec_w: Vec<f64>,
    dec_b: Vec<f64>,
    codebook: Vec<(usize, Vec<f64>)>,
}

pub(crate) fn loss_and_grads(
    model: &VqModel,
    table: &BlockTable,
    batch: &Batch,
    beta: f64,
    terms: Terms,
    exec: Exec,
) -> (VqLoss, Gradients) {
    let d = model.config.latent_dim;
    let bl = model.config.block_len();
    let vq_den = (batch.vq_cells() * d as f64).max(1.0);
    let n_chunks = batch.ids.len().div_ceil(GRAD_CHUNK);

    let chunks: Vec<ChunkResult> = exec::map_range(exec, n_chunks, |ci| {
        let lo = ci * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(batch.ids.len());
        let mut r = ChunkResult {
            recon: 0.0,
            vq: 0.0,
            enc_w: vec![0.0; bl * d],
            enc_b: vec![0.0; d],
            dec_w: vec![0.0; bl * d],
            dec_b: vec![0.0; bl],
            codebook: Vec::new(),
        };
        let mut z = vec![0.0; d];
        let mut logits = vec![0.0; bl];
        let mut target = vec![0.0; bl];
        let mut g_logit = vec![0.0; bl];
        let mut g_z = vec![0.0; d];
        for j in lo..hi {
            let pattern = &table.patterns[batch.ids[j]];
            let w = batch.weights[j];
            encode_block(&model.encoder, pattern, &mut z);
            let k = nearest_nonzero_entry(&z, &model.codebook);
            let zq = model.codebook.entry(k);
            decode_block(&model.decoder, zq, &mut logits);

            target.iter_mut().for_each(|t| *t = 0.0);
            for &v in pattern {
                target[v as usize] = 1.0;
            }
            let mut bce = 0.0;
            for v in 0..bl {
                bce += bce_with_logits(logits[v], target[v]);
                g_logit[v] = if logits[v].abs() > LOGIT_CLAMP {
                    0.0
                } else {
                    (sigmoid(logits[v]) - target[v]) * w / batch.voxels
                };
            }
            r.recon += w * bce;
            let sq: f64 = z.iter().zip(zq).map(|(a, b)| (a - b) * (a - b)).sum();
            r.vq += w * sq;

            g_z.iter_mut().for_each(|g| *g = 0.0);
            if terms.recon {
                for v in 0..bl {
                    let gl = g_logit[v];
                    if gl == 0.0 {
                        continue;
                    }
                    r.dec_b[v] += gl;
                    let row = &model.decoder.weight[v * d..(v + 1) * d];
                    let grow = &mut r.dec_w[v * d..(v + 1) * d];
                    for i in 0..d {
                        grow[i] += gl * zq[i];
                        g_z[i] += gl * row[i];
                    }
                }
            }
            if terms.commit {
                for i in 0..d {
                    g_z[i] += beta * 2.0 * (z[i] - zq[i]) * w / vq_den;
                }
            }
            if terms.recon || terms.commit {
                for i in 0..d {
                    r.enc_b[i] += g_z[i];
                }
                for &v in pattern {
                    let col = &mut r.enc_w[v as usize * d..(v as usize + 1) * d];
                    for i in 0..d {
                        col[i] += g_z[i];
                    }
                }
            }
            if terms.codebook {
                let g: Vec<f64> = (0..d).map(|i| 2.0 * (zq[i] - z[i]) * w / vq_den).collect();
                r.codebook.push((k, g));
            }
        }
        r
    });

    let mut grads = Gradients::zeros(model);
    let mut recon_sum = 0.0;
    let mut vq_sum = 0.0;
    for c in chunks {
        recon_sum += c.recon;
        vq_sum += c.vq;
        add_into(&mut grads.enc_w, &c.enc_w);
        add_into(&mut grads.enc_b, &c.enc_b);
        add_into(&mut grads.dec_w, &c.dec_w);
        add_into(&mut grads.dec_b, &c.dec_b);
        for (k, g) in c.codebook {
            add_into(&mut grads.codebook[k * d..(k + 1) * d], &g);
        }
    }

    // Empty cells decode from the zero vector: logits equal the decoder bias.
    if batch.empty_cells > 0.0 {
        let zero = &model.codebook.entry(0);
        let mut logits = vec![0.0; bl];
        decode_block(&model.decoder, zero, &mut logits);
        let mut bce = 0.0;
        for v in 0..bl {
            bce += bce_with_logits(logits[v], 0.0);
            if terms.recon && logits[v].abs() <= LOGIT_CLAMP {
                let gl = sigmoid(logits[v]) * batch.empty_cells / batch.voxels;
                grads.dec_b[v] += gl;
                for i in 0..d {
                    grads.dec_w[v * d + i] += gl * zero[i];
                }
            }
        }
        recon_sum += batch.empty_cells * bce;
    }
    if model.config.zero_token {
        grads.codebook[..d].iter_mut().for_each(|g| *g = 0.0);
    }

    let loss = VqLoss::combine(recon_sum / batch.voxels, vq_sum / vq_den, beta);
    (loss, grads)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(
    param: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    optimizer: Optimizer,
    lr: f64,
    step: usize,
) {
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in param.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam => {
            let t = (step + 1) as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            for i in 0..param.len() {
                let g = grad[i];
                state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
                state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
                let mh = state.m[i] / c1;
                let vh = state.v[i] / c2;
                param[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
    }
}

fn learning_rate(cfg: &TrainConfig, step: usize) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::Cosine => {
            let frac = step as f64 / cfg.steps as f64;
            cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
        }
    }
}

/// Latent vectors of every block that takes part in quantization, in dataset
/// order; these seed the codebook.
fn codebook_samples(model: &VqModel, table: &BlockTable) -> Vec<f64> {
    let d = model.config.latent_dim;
    let mut out = Vec::new();
    let mut z = vec![0.0; d];
    for grid in &table.per_grid {
        for &(id, n) in grid {
            encode_block(&model.encoder, &table.patterns[id], &mut z);
            for _ in 0..n {
                out.extend_from_slice(&z);
            }
        }
    }
    out
}

/// Full-batch loss and gradients over `grids`, every grid weighted once. The
/// encoder receives the reconstruction gradient through the straight-through
/// estimator plus the commitment gradient.
pub fn loss_and_gradients(
    model: &VqModel,
    grids: &[OccupancyGrid],
    beta: f64,
    exec: Exec,
) -> Result<(VqLoss, Gradients), VqError> {
    if grids.is_empty() {
        return Err(VqError::EmptyDataset);
    }
    model.validate()?;
    if let Some(g) = grids.iter().find(|g| g.dims() != model.config.grid_dims) {
        return Err(VqError::DimensionMismatch(format!(
            "grid {:?} does not match model grid {:?}",
            g.dims(),
            model.config.grid_dims
        )));
    }
    let table = BlockTable::build(grids, &model.config);
    let batch = table.batch(&(0..grids.len()).collect::<Vec<_>>(), model.config.voxel_count());
    Ok(loss_and_grads(model, &table, &batch, beta, Terms::ALL, exec))
}

/// Train encoder, decoder and codebook from a seeded initialization.
pub fn train_vqvae(dataset: &[OccupancyGrid], cfg: &TrainConfig, exec: Exec) -> Result<TrainOutput, VqError> {
    if dataset.is_empty() {
        return Err(VqError::EmptyDataset);
    }
    cfg.validate()?;
    let vq_cfg = cfg.vq_config();
    for g in dataset {
        if g.dims() != vq_cfg.grid_dims {
            return Err(VqError::DimensionMismatch(format!(
                "training grid {:?} does not match model grid {:?}",
                g.dims(),
                vq_cfg.grid_dims
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bl = vq_cfg.block_len();
    let mut model = VqModel {
        config: vq_cfg,
        encoder: EncoderParams::random(bl, vq_cfg.latent_dim, &mut rng),
        decoder: DecoderParams::random(bl, vq_cfg.latent_dim, &mut rng),
        codebook: super::Codebook::zeros(vq_cfg.codebook_size, vq_cfg.latent_dim),
    };

    let table = BlockTable::build(dataset, &vq_cfg);
    let samples = codebook_samples(&model, &table);
    if samples.is_empty() {
        return Err(VqError::NoSamples);
    }
    model.codebook = init_codebook(
        &samples,
        vq_cfg.latent_dim,
        vq_cfg.codebook_size,
        cfg.kmeans_iterations,
        cfg.seed.wrapping_add(1),
        exec,
    )?;

    let new_state = |n: usize| AdamState { m: vec![0.0; n], v: vec![0.0; n] };
    let mut states = [
        new_state(model.encoder.weight.len()),
        new_state(model.encoder.bias.len()),
        new_state(model.decoder.weight.len()),
        new_state(model.decoder.bias.len()),
        new_state(model.codebook.entries.len()),
    ];

    let voxels = vq_cfg.voxel_count();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let members: Vec<usize> =
            (0..cfg.batch_size.min(dataset.len())).map(|i| (step * cfg.batch_size + i) % dataset.len()).collect();
        let batch = table.batch(&members, voxels);
        let (loss, grads) = loss_and_grads(&model, &table, &batch, cfg.beta, Terms::ALL, exec);
        if !loss.total.is_finite() {
            return Err(VqError::DivergedLoss { step });
        }
        trace.push(loss);

        let lr = learning_rate(cfg, step);
        let [s_ew, s_eb, s_dw, s_db, s_cb] = &mut states;
        apply_update(&mut model.encoder.weight, &grads.enc_w, s_ew, cfg.optimizer, lr, step);
        apply_update(&mut model.encoder.bias, &grads.enc_b, s_eb, cfg.optimizer, lr, step);
        apply_update(&mut model.decoder.weight, &grads.dec_w, s_dw, cfg.optimizer, lr, step);
        apply_update(&mut model.decoder.bias, &grads.dec_b, s_db, cfg.optimizer, lr, step);
        apply_update(&mut model.codebook.entries, &grads.codebook, s_cb, cfg.optimizer, lr, step);
        if vq_cfg.zero_token {
            model.codebook.entry_mut(0).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(TrainOutput { model, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::GridDims;
    use crate::vq::ops::occupancy_downsample;
    use crate::vq::{decode, encode, quantize, quantize_all, vq_loss, Codebook};
    use rand::Rng;

    fn toy_config(zero_token: bool) -> VqConfig {
        VqConfig {
            grid_dims: [4, 2, 2],
            latent_dims: GridDims { x: 2, y: 1, z: 1 },
            latent_dim: 3,
            codebook_size: 5,
            zero_token,
        }
    }

    fn toy_model(cfg: VqConfig, seed: u64) -> VqModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = VqModel::random(cfg, seed).unwrap();
        for b in m.encoder.bias.iter_mut().chain(m.decoder.bias.iter_mut()) {
            *b = rng.gen_range(-0.5..0.5);
        }
        let mut cb = Codebook::zeros(cfg.codebook_size, cfg.latent_dim);
        for k in 1..cfg.codebook_size {
            for v in cb.entry_mut(k) {
                *v = rng.gen_range(-1.5..1.5);
            }
        }
        m.codebook = cb;
        m
    }

    fn toy_grids() -> Vec<OccupancyGrid> {
        let mut a = OccupancyGrid::new([4, 2, 2]);
        a.set(0, 0, 1, true);
        a.set(1, 1, 0, true);
        a.set(3, 0, 0, true);
        let mut b = OccupancyGrid::new([4, 2, 2]);
        b.set(0, 1, 1, true); // second cell stays empty
        vec![a, b]
    }

    /// Loss through the public per-grid operations, summed in the same way
    /// the trainer batches grids. Independent of `loss_and_grads`.
    fn reference_loss(model: &VqModel, grids: &[OccupancyGrid], beta: f64) -> VqLoss {
        let cfg = &model.config;
        let mut recon = 0.0;
        let mut sq = 0.0;
        let mut cells = 0.0;
        for g in grids {
            let mask = occupancy_downsample(g, cfg.latent_dims).unwrap();
            let z = encode(g, &model.encoder, cfg, Exec::Sequential).unwrap();
            let q = if cfg.zero_token {
                quantize(&z, &mask, &model.codebook, Exec::Sequential).unwrap()
            } else {
                quantize_all(&z, &model.codebook, Exec::Sequential).unwrap()
            };
            let dec = decode(&q.latent, &model.decoder, cfg, 0.5, Exec::Sequential).unwrap();
            let m = if cfg.zero_token { mask } else { super::super::LatentMask::all(cfg.latent_dims, true) };
            let l = vq_loss(g, &dec.logits, &z, &q.latent, &m, beta).unwrap();
            recon += l.recon;
            let n = m.count() as f64;
            sq += l.codebook * n * cfg.latent_dim as f64;
            cells += n;
        }
        VqLoss::combine(recon / grids.len() as f64, sq / (cells * model.config.latent_dim as f64), beta)
    }

    /// Reconstruction loss with the straight-through surrogate: quantized
    /// latents are `z(params) + (e_k - z(reference))` with assignments and
    /// offsets frozen at the reference parameters.
    fn ste_recon(model: &VqModel, reference: &VqModel, grids: &[OccupancyGrid]) -> f64 {
        let cfg = &model.config;
        let mut total = 0.0;
        for g in grids {
            let mask = occupancy_downsample(g, cfg.latent_dims).unwrap();
            let z0 = encode(g, &reference.encoder, cfg, Exec::Sequential).unwrap();
            let q0 = quantize(&z0, &mask, &reference.codebook, Exec::Sequential).unwrap();
            let z = encode(g, &model.encoder, cfg, Exec::Sequential).unwrap();
            let mut zq = q0.latent.clone();
            for c in 0..cfg.latent_dims.cell_count() {
                if mask.cells[c] {
                    for i in 0..cfg.latent_dim {
                        zq.cell_mut(c)[i] = z.cell(c)[i] + (q0.latent.cell(c)[i] - z0.cell(c)[i]);
                    }
                }
            }
            let dec = decode(&zq, &model.decoder, cfg, 0.5, Exec::Sequential).unwrap();
            total += vq_loss(g, &dec.logits, &z, &zq, &mask, 1.0).unwrap().recon;
        }
        total / grids.len() as f64
    }

    fn analytic(model: &VqModel, grids: &[OccupancyGrid], beta: f64, terms: Terms) -> (VqLoss, Gradients) {
        let table = BlockTable::build(grids, &model.config);
        let batch = table.batch(&(0..grids.len()).collect::<Vec<_>>(), model.config.voxel_count());
        loss_and_grads(model, &table, &batch, beta, terms, Exec::Sequential)
    }

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
    }

    enum Param {
        EncW,
        EncB,
        DecW,
        DecB,
        Codebook,
    }

    fn param_mut<'a>(m: &'a mut VqModel, p: &Param) -> &'a mut Vec<f64> {
        match p {
            Param::EncW => &mut m.encoder.weight,
            Param::EncB => &mut m.encoder.bias,
            Param::DecW => &mut m.decoder.weight,
            Param::DecB => &mut m.decoder.bias,
            Param::Codebook => &mut m.codebook.entries,
        }
    }

    fn fd_check(
        model: &VqModel,
        param: Param,
        grad: &[f64],
        f: impl Fn(&VqModel) -> f64,
    ) -> f64 {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..grad.len() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            param_mut(&mut plus, &param)[i] += h;
            param_mut(&mut minus, &param)[i] -= h;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(grad[i], numeric));
        }
        worst
    }

    #[test]
    fn batched_loss_matches_per_grid_operations() {
        for zero_token in [true, false] {
            let model = toy_model(toy_config(zero_token), 4);
            let grids = toy_grids();
            let (l, _) = analytic(&model, &grids, 0.25, Terms::ALL);
            let r = reference_loss(&model, &grids, 0.25);
            assert!((l.recon - r.recon).abs() < 1e-12, "{l:?} {r:?}");
            assert!((l.codebook - r.codebook).abs() < 1e-12, "{l:?} {r:?}");
            assert!((l.total - r.total).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let beta = 0.4;
        let grids = toy_grids();
        for seed in 0..4 {
            let model = toy_model(toy_config(true), seed);
            let only = |recon, codebook, commit| Terms { recon, codebook, commit };

            let (_, g) = analytic(&model, &grids, beta, only(true, false, false));
            let recon = |m: &VqModel| reference_loss(m, &grids, beta).recon;
            assert!(fd_check(&model, Param::DecW, &g.dec_w, recon) < 1e-4);
            assert!(fd_check(&model, Param::DecB, &g.dec_b, recon) < 1e-4);
            let ste = |m: &VqModel| ste_recon(m, &model, &grids);
            assert!(fd_check(&model, Param::EncW, &g.enc_w, ste) < 1e-4);
            assert!(fd_check(&model, Param::EncB, &g.enc_b, ste) < 1e-4);

            let (_, g) = analytic(&model, &grids, beta, only(false, true, false));
            let cbt = |m: &VqModel| reference_loss(m, &grids, beta).codebook;
            assert!(fd_check(&model, Param::Codebook, &g.codebook, cbt) < 1e-4);
            assert!(g.enc_w.iter().chain(&g.dec_w).all(|&v| v == 0.0));

            let (_, g) = analytic(&model, &grids, beta, only(false, false, true));
            let commit = |m: &VqModel| beta * reference_loss(m, &grids, beta).commit;
            assert!(fd_check(&model, Param::EncW, &g.enc_w, commit) < 1e-4);
            assert!(fd_check(&model, Param::EncB, &g.enc_b, commit) < 1e-4);
            assert!(g.codebook.iter().chain(&g.dec_w).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parallel_and_sequential_gradients_are_identical() {
        let model = toy_model(toy_config(true), 9);
        let grids = toy_grids();
        let table = BlockTable::build(&grids, &model.config);
        let batch = table.batch(&[0, 1], model.config.voxel_count());
        let a = loss_and_grads(&model, &table, &batch, 0.25, Terms::ALL, Exec::Sequential);
        let b = loss_and_grads(&model, &table, &batch, 0.25, Terms::ALL, Exec::Parallel);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    fn small_train_config() -> (Vec<OccupancyGrid>, TrainConfig) {
        let mut g = OccupancyGrid::cubic(64);
        for x in 8..40 {
            for y in 8..40 {
                g.set(x, y, 20, true);
            }
        }
        let cfg = TrainConfig { steps: 40, batch_size: 1, codebook_size: Some(32), latent_dim: 16, ..Default::default() };
        (vec![g], cfg)
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let (data, mut cfg) = small_train_config();
        cfg.learning_rate = 0.0;
        cfg.steps = 5;
        let out = train_vqvae(&data, &cfg, Exec::Parallel).unwrap();
        assert!(out.trace.windows(2).all(|w| w[0] == w[1]));
        let mut init_cfg = cfg.clone();
        init_cfg.steps = 1;
        let init = train_vqvae(&data, &init_cfg, Exec::Parallel).unwrap();
        assert_eq!(out.model, init.model);
    }

    #[test]
    fn training_is_reproducible_and_reduces_loss() {
        let (data, cfg) = small_train_config();
        let a = train_vqvae(&data, &cfg, Exec::Parallel).unwrap();
        let b = train_vqvae(&data, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
        let head: f64 = a.trace[..5].iter().map(|l| l.recon).sum();
        let tail: f64 = a.trace[35..].iter().map(|l| l.recon).sum();
        assert!(tail < head);
    }

    #[test]
    fn config_validation_and_manifest() {
        assert!(matches!(train_vqvae(&[], &TrainConfig::default(), Exec::Sequential), Err(VqError::EmptyDataset)));
        let bad = TrainConfig { beta: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { steps: 0, ..Default::default() };
        assert!(bad.validate().is_err());

        let text = "beta = 0.5\nsteps = 12\nprofile = \"16x8x8\"\noptimizer = \"sgd\"\n";
        let cfg = TrainConfig::from_manifest(text).unwrap();
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.steps, 12);
        assert_eq!(cfg.profile, CodecProfile::Wide16x8x8);
        assert_eq!(cfg.vq_config().codebook_size, 8192);
        assert_eq!(cfg.optimizer, Optimizer::Sgd);
        assert_eq!(TrainConfig::from_manifest(&cfg.to_manifest()).unwrap(), cfg);
        assert!(TrainConfig::from_manifest("bogus = 1").is_err());
    }
}
