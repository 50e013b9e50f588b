//! Binary model checkpoints.
//!
//! Layout (little endian): magic `AVQC`, format version (u32), grid dims
//! (3 × u32), latent grid dims (3 × u32), latent dim (u32), codebook size
//! (u32), zero-token flag (u32, 0 or 1), then f32 arrays in the order
//! codebook, encoder weight, encoder bias, decoder weight, decoder bias.
//! Parameters are rounded to f32 on save, so a reloaded model equals
//! [`VqModel::rounded_to_f32`] of the saved one.

use std::io::{Read, Write};
use std::path::Path;

use crate::codec::GridDims;

use super::{Codebook, DecoderParams, EncoderParams, VqConfig, VqError, VqModel};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"AVQC";

impl VqModel {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), VqError> {
        self.validate()?;
        let c = &self.config;
        w.write_all(MAGIC)?;
        let header = [
            CHECKPOINT_VERSION,
            c.grid_dims[0] as u32,
            c.grid_dims[1] as u32,
            c.grid_dims[2] as u32,
            c.latent_dims.x as u32,
            c.latent_dims.y as u32,
            c.latent_dims.z as u32,
            c.latent_dim as u32,
            c.codebook_size as u32,
            c.zero_token as u32,
        ];
        for v in header {
            w.write_all(&v.to_le_bytes())?;
        }
        let arrays = [
            &self.codebook.entries,
            &self.encoder.weight,
            &self.encoder.bias,
            &self.decoder.weight,
            &self.decoder.bias,
        ];
        let mut buf = Vec::new();
        for a in arrays {
            for v in a.iter() {
                let f = *v as f32;
                if !f.is_finite() {
                    return Err(VqError::Checkpoint(format!("parameter {v} does not fit an f32")));
                }
                buf.extend_from_slice(&f.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, VqError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| VqError::Checkpoint("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(VqError::Checkpoint("bad magic".into()));
        }
        let mut u32s = [0u32; 10];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| VqError::Checkpoint("truncated header".into()))?;
            *v = u32::from_le_bytes(b);
        }
        if u32s[0] != CHECKPOINT_VERSION {
            return Err(VqError::CheckpointVersion { found: u32s[0], expected: CHECKPOINT_VERSION });
        }
        let flag = match u32s[9] {
            0 => false,
            1 => true,
            other => return Err(VqError::Checkpoint(format!("zero-token flag {other}"))),
        };
        let config = VqConfig {
            grid_dims: [u32s[1] as usize, u32s[2] as usize, u32s[3] as usize],
            latent_dims: GridDims { x: u32s[4] as usize, y: u32s[5] as usize, z: u32s[6] as usize },
            latent_dim: u32s[7] as usize,
            codebook_size: u32s[8] as usize,
            zero_token: flag,
        };
        config.validate()?;
        let d = config.latent_dim;
        let bl = config.block_len();
        let mut read = |n: usize| -> Result<Vec<f64>, VqError> {
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes).map_err(|_| VqError::Checkpoint("truncated parameter data".into()))?;
            let v: Vec<f64> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(VqError::Checkpoint("non-finite parameter".into()));
            }
            Ok(v)
        };
        let entries = read(config.codebook_size * d)?;
        let enc_w = read(bl * d)?;
        let enc_b = read(d)?;
        let dec_w = read(bl * d)?;
        let dec_b = read(bl)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(VqError::Checkpoint("trailing bytes".into()));
        }
        let model = VqModel {
            config,
            encoder: EncoderParams { block_len: bl, latent_dim: d, weight: enc_w, bias: enc_b },
            decoder: DecoderParams { block_len: bl, latent_dim: d, weight: dec_w, bias: dec_b },
            codebook: Codebook { dim: d, entries },
        };
        if config.zero_token && model.codebook.entry(0).iter().any(|&v| v != 0.0) {
            return Err(VqError::Checkpoint("reserved entry 0 is not the zero vector".into()));
        }
        Ok(model)
    }

    /// Copy with every parameter rounded to the nearest f32, the precision
    /// kept by checkpoints.
    pub fn rounded_to_f32(&self) -> Self {
        let mut m = self.clone();
        for a in [
            &mut m.codebook.entries,
            &mut m.encoder.weight,
            &mut m.encoder.bias,
            &mut m.decoder.weight,
            &mut m.decoder.bias,
        ] {
            a.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        m
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VqError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VqError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecProfile;

    fn model() -> VqModel {
        let cfg = VqConfig { codebook_size: 6, latent_dim: 4, ..VqConfig::for_profile(CodecProfile::Wide16x8x8) };
        let mut m = VqModel::random(cfg, 3).unwrap();
        for (i, v) in m.codebook.entries.iter_mut().enumerate().skip(4) {
            *v = i as f64 * 0.1 - 1.0;
        }
        m
    }

    #[test]
    fn round_trip_keeps_f32_precision() {
        let m = model();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AVQC");
        let back = VqModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m.rounded_to_f32());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn rejects_other_versions_and_damage() {
        let mut buf = Vec::new();
        model().write_to(&mut buf).unwrap();
        let mut v2 = buf.clone();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            VqModel::read_from(&mut v2.as_slice()),
            Err(VqError::CheckpointVersion { found: 2, expected: 1 })
        ));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(VqModel::read_from(&mut &short[..]), Err(VqError::Checkpoint(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(VqModel::read_from(&mut long.as_slice()), Err(VqError::Checkpoint(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(VqModel::read_from(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn refuses_values_outside_f32() {
        let mut m = model();
        m.decoder.bias[0] = 1e300;
        assert!(matches!(m.write_to(&mut Vec::new()), Err(VqError::Checkpoint(_))));
    }
}
