//! Sparse voxel token streams.
//!
//! Each occupied latent cell is written as the triplet `<voxel> xyz K`, where
//! `xyz = (Y*Z)*x + Z*y + z` is the linearized cell coordinate and `K` the
//! codebook index. Index 0 is the reserved empty-space token and is never
//! written. Streams are canonical when sorted by ascending `xyz`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const VOXEL_MARKER: &str = "<voxel>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("{what} {value} out of range (max {max}){}", at(*.offset))]
    OutOfRange { what: &'static str, value: u64, max: u64, offset: Option<usize> },
    #[error("malformed token at byte {offset}: {reason}")]
    MalformedToken { offset: usize, reason: String },
    #[error("duplicate coordinate xyz={xyz}{}", at(*.offset))]
    DuplicateCoordinate { xyz: usize, offset: Option<usize> },
    #[error("cell {xyz} holds index {index}, codebook has {codebook_size} entries")]
    IndexOutOfCodebook { xyz: usize, index: u32, codebook_size: u32 },
    #[error("grid dims {found} do not match codec dims {expected}")]
    DimsMismatch { expected: GridDims, found: GridDims },
    #[error("unknown codec profile {0:?} (expected 8x8x8 or 16x8x8)")]
    UnknownProfile(String),
}

fn at(offset: Option<usize>) -> String {
    offset.map(|o| format!(" at byte {o}")).unwrap_or_default()
}

/// Latent grid extent per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

impl GridDims {
    pub const CUBE_8: GridDims = GridDims { x: 8, y: 8, z: 8 };
    pub const WIDE_16X8X8: GridDims = GridDims { x: 16, y: 8, z: 8 };

    pub fn cell_count(&self) -> usize {
        self.x * self.y * self.z
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    pub fn linearize(&self, c: LatentCoordinate) -> Result<usize, CodecError> {
        for (what, v, max) in [("x", c.x, self.x), ("y", c.y, self.y), ("z", c.z, self.z)] {
            if v >= max {
                return Err(CodecError::OutOfRange {
                    what,
                    value: v as u64,
                    max: max as u64 - 1,
                    offset: None,
                });
            }
        }
        Ok((self.y * self.z) * c.x + self.z * c.y + c.z)
    }

    pub fn delinearize(&self, xyz: usize) -> Result<LatentCoordinate, CodecError> {
        if xyz >= self.cell_count() {
            return Err(CodecError::OutOfRange {
                what: "xyz",
                value: xyz as u64,
                max: self.cell_count() as u64 - 1,
                offset: None,
            });
        }
        Ok(LatentCoordinate {
            x: xyz / (self.y * self.z),
            y: (xyz / self.z) % self.y,
            z: xyz % self.z,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatentCoordinate {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

/// Named latent-grid / codebook combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum CodecProfile {
    /// 8x8x8 cells, 4096 codebook entries.
    #[default]
    #[serde(rename = "8x8x8")]
    Cube8,
    /// 16x8x8 cells, 8192 codebook entries.
    #[serde(rename = "16x8x8")]
    Wide16x8x8,
}

impl CodecProfile {
    pub fn dims(self) -> GridDims {
        match self {
            CodecProfile::Cube8 => GridDims::CUBE_8,
            CodecProfile::Wide16x8x8 => GridDims::WIDE_16X8X8,
        }
    }

    pub fn codebook_size(self) -> u32 {
        match self {
            CodecProfile::Cube8 => 4096,
            CodecProfile::Wide16x8x8 => 8192,
        }
    }

    pub fn codec(self) -> Codec {
        Codec { dims: self.dims(), codebook_size: self.codebook_size() }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecProfile::Cube8 => "8x8x8",
            CodecProfile::Wide16x8x8 => "16x8x8",
        }
    }
}

impl FromStr for CodecProfile {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "8x8x8" | "cube8" => Ok(CodecProfile::Cube8),
            "16x8x8" | "wide16x8x8" => Ok(CodecProfile::Wide16x8x8),
            other => Err(CodecError::UnknownProfile(other.to_string())),
        }
    }
}

impl fmt::Display for CodecProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid dims plus codebook size; everything needed to validate a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Codec {
    pub dims: GridDims,
    pub codebook_size: u32,
}

impl Default for Codec {
    fn default() -> Self {
        CodecProfile::default().codec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoxelToken {
    pub xyz: usize,
    pub k: u32,
}

/// Dense grid of codebook indices, x-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexGrid {
    pub dims: GridDims,
    pub indices: Vec<u32>,
}

impl IndexGrid {
    pub fn zeros(dims: GridDims) -> Self {
        Self { dims, indices: vec![0; dims.cell_count()] }
    }

    pub fn nonzero_count(&self) -> usize {
        self.indices.iter().filter(|&&k| k != 0).count()
    }
}

/// Canonical sparse token sequence: ascending `xyz`, no duplicates, no zero
/// indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    codec: Codec,
    tokens: Vec<VoxelToken>,
}

impl TokenSequence {
    pub fn empty(codec: Codec) -> Self {
        Self { codec, tokens: Vec::new() }
    }

    /// Validate and canonicalize an arbitrary token list.
    pub fn new(codec: Codec, mut tokens: Vec<VoxelToken>) -> Result<Self, CodecError> {
        for t in &tokens {
            check_token(&codec, *t, None)?;
        }
        tokens.sort_by_key(|t| t.xyz);
        if let Some(w) = tokens.windows(2).find(|w| w[0].xyz == w[1].xyz) {
            return Err(CodecError::DuplicateCoordinate { xyz: w[0].xyz, offset: None });
        }
        Ok(Self { codec, tokens })
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn tokens(&self) -> &[VoxelToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Single-space separated triplets; empty string for an empty sequence.
impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{VOXEL_MARKER} {} {}", t.xyz, t.k)?;
        }
        Ok(())
    }
}

fn check_token(codec: &Codec, t: VoxelToken, offset: Option<usize>) -> Result<(), CodecError> {
    let cells = codec.dims.cell_count();
    if t.xyz >= cells {
        return Err(CodecError::OutOfRange {
            what: "xyz",
            value: t.xyz as u64,
            max: cells as u64 - 1,
            offset,
        });
    }
    if t.k == 0 || t.k >= codec.codebook_size {
        return Err(CodecError::OutOfRange {
            what: "K",
            value: t.k as u64,
            max: codec.codebook_size as u64 - 1,
            offset,
        });
    }
    Ok(())
}

/// Emit one token per non-zero cell, in ascending `xyz`.
pub fn tokenize_grid(grid: &IndexGrid, codec: Codec) -> Result<TokenSequence, CodecError> {
    if grid.dims != codec.dims || grid.indices.len() != codec.dims.cell_count() {
        return Err(CodecError::DimsMismatch { expected: codec.dims, found: grid.dims });
    }
    let mut tokens = Vec::new();
    for (xyz, &k) in grid.indices.iter().enumerate() {
        if k >= codec.codebook_size {
            return Err(CodecError::IndexOutOfCodebook {
                xyz,
                index: k,
                codebook_size: codec.codebook_size,
            });
        }
        if k != 0 {
            tokens.push(VoxelToken { xyz, k });
        }
    }
    Ok(TokenSequence { codec, tokens })
}

/// Inverse of [`tokenize_grid`]: unlisted cells get index 0.
pub fn densify(seq: &TokenSequence) -> IndexGrid {
    let mut grid = IndexGrid::zeros(seq.codec.dims);
    for t in &seq.tokens {
        grid.indices[t.xyz] = t.k;
    }
    grid
}

/// Strict parser for `<voxel> xyz K` streams separated by whitespace.
pub fn parse_tokens(text: &str, codec: Codec) -> Result<TokenSequence, CodecError> {
    let mut words = words_with_offsets(text);
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    while let Some((off, word)) = words.next() {
        if word != VOXEL_MARKER {
            return Err(CodecError::MalformedToken {
                offset: off,
                reason: format!("expected {VOXEL_MARKER:?}, found {word:?}"),
            });
        }
        let xyz = next_int(&mut words, text.len(), "xyz")?;
        let k = next_int(&mut words, text.len(), "K")?;
        let xyz_val = usize::try_from(xyz.1).unwrap_or(usize::MAX);
        let k_val = u32::try_from(k.1).unwrap_or(u32::MAX);
        if xyz_val >= codec.dims.cell_count() {
            return Err(CodecError::OutOfRange {
                what: "xyz",
                value: xyz.1,
                max: codec.dims.cell_count() as u64 - 1,
                offset: Some(xyz.0),
            });
        }
        let t = VoxelToken { xyz: xyz_val, k: k_val };
        if k_val == 0 || k.1 >= codec.codebook_size as u64 {
            return Err(CodecError::OutOfRange {
                what: "K",
                value: k.1,
                max: codec.codebook_size as u64 - 1,
                offset: Some(k.0),
            });
        }
        tokens.push(t);
        offsets.push(off);
    }

    let mut order: Vec<usize> = (0..tokens.len()).collect();
    order.sort_by_key(|&i| (tokens[i].xyz, offsets[i]));
    for w in order.windows(2) {
        if tokens[w[0]].xyz == tokens[w[1]].xyz {
            return Err(CodecError::DuplicateCoordinate {
                xyz: tokens[w[1]].xyz,
                offset: Some(offsets[w[1]]),
            });
        }
    }
    let tokens = order.into_iter().map(|i| tokens[i]).collect();
    Ok(TokenSequence { codec, tokens })
}

fn words_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_ascii_whitespace()
        .map(move |w| (w.as_ptr() as usize - text.as_ptr() as usize, w))
}

fn next_int<'a>(
    words: &mut impl Iterator<Item = (usize, &'a str)>,
    end: usize,
    what: &str,
) -> Result<(usize, u64), CodecError> {
    let Some((off, w)) = words.next() else {
        return Err(CodecError::MalformedToken {
            offset: end,
            reason: format!("unexpected end of input, expected {what}"),
        });
    };
    if w.is_empty() || !w.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CodecError::MalformedToken {
            offset: off,
            reason: format!("expected decimal {what}, found {w:?}"),
        });
    }
    let v = w.parse::<u64>().map_err(|_| CodecError::OutOfRange {
        what: if what == "K" { "K" } else { "xyz" },
        value: u64::MAX,
        max: u64::MAX,
        offset: Some(off),
    })?;
    Ok((off, v))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CompressionStats {
    pub sparse_tokens: usize,
    pub dense_tokens: usize,
    pub reduction: f64,
}

/// Token counts (in triplets) against a fully dense stream over the grid.
pub fn compression_stats(seq: &TokenSequence) -> CompressionStats {
    let dense = seq.codec.dims.cell_count();
    let sparse = seq.len();
    CompressionStats {
        sparse_tokens: sparse,
        dense_tokens: dense,
        reduction: 1.0 - sparse as f64 / dense as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c8() -> Codec {
        CodecProfile::Cube8.codec()
    }

    #[test]
    fn index_map_examples() {
        let d = GridDims::CUBE_8;
        assert_eq!(d.linearize(LatentCoordinate { x: 0, y: 0, z: 0 }).unwrap(), 0);
        assert_eq!(d.linearize(LatentCoordinate { x: 1, y: 2, z: 3 }).unwrap(), 83);
        assert_eq!(d.linearize(LatentCoordinate { x: 7, y: 7, z: 7 }).unwrap(), 511);
        assert!(d.linearize(LatentCoordinate { x: 8, y: 0, z: 0 }).is_err());
        assert!(d.delinearize(512).is_err());
        // the wide profile keeps the 64x + 8y + z mapping
        let w = GridDims::WIDE_16X8X8;
        assert_eq!(w.linearize(LatentCoordinate { x: 15, y: 7, z: 7 }).unwrap(), 1023);
        assert_eq!(w.linearize(LatentCoordinate { x: 1, y: 2, z: 3 }).unwrap(), 83);
    }

    #[test]
    fn index_map_is_bijective_over_full_domain() {
        for dims in [GridDims::CUBE_8, GridDims::WIDE_16X8X8] {
            for i in 0..dims.cell_count() {
                assert_eq!(dims.linearize(dims.delinearize(i).unwrap()).unwrap(), i);
            }
        }
    }

    #[test]
    fn tokenize_examples() {
        let empty = IndexGrid::zeros(GridDims::CUBE_8);
        assert!(tokenize_grid(&empty, c8()).unwrap().is_empty());

        let mut g = IndexGrid::zeros(GridDims::CUBE_8);
        g.indices[43] = 1930;
        let seq = tokenize_grid(&g, c8()).unwrap();
        assert_eq!(seq.to_string(), "<voxel> 43 1930");

        let mut g = IndexGrid::zeros(GridDims::CUBE_8);
        for i in 0..154 {
            g.indices[i * 3] = 1 + i as u32;
        }
        let stats = compression_stats(&tokenize_grid(&g, c8()).unwrap());
        assert_eq!(stats.sparse_tokens, 154);
        assert!((stats.reduction - (1.0 - 154.0 / 512.0)).abs() < 1e-15);
        assert!((stats.reduction - 0.699).abs() < 1e-3);

        g.indices[0] = 4096;
        assert!(matches!(
            tokenize_grid(&g, c8()),
            Err(CodecError::IndexOutOfCodebook { xyz: 0, index: 4096, .. })
        ));
    }

    #[test]
    fn parse_examples() {
        let seq = parse_tokens("<voxel> 0 1785 <voxel> 1 649", c8()).unwrap();
        assert_eq!(seq.tokens(), &[VoxelToken { xyz: 0, k: 1785 }, VoxelToken { xyz: 1, k: 649 }]);
        assert!(parse_tokens("", c8()).unwrap().is_empty());
        assert!(parse_tokens("  \n\t", c8()).unwrap().is_empty());
        assert_eq!(
            parse_tokens("<voxel> 600 5", c8()),
            Err(CodecError::OutOfRange { what: "xyz", value: 600, max: 511, offset: Some(8) })
        );
    }

    #[test]
    fn parse_canonicalizes_and_tolerates_trailing_whitespace() {
        let seq = parse_tokens("<voxel> 44 13\n<voxel>  43 1930 \n", c8()).unwrap();
        assert_eq!(seq.to_string(), "<voxel> 43 1930 <voxel> 44 13");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_tokens("<voxel> 1 2 voxel 3 4", c8()),
            Err(CodecError::MalformedToken { offset: 12, .. })
        ));
        assert!(matches!(
            parse_tokens("<voxel> 1", c8()),
            Err(CodecError::MalformedToken { offset: 9, .. })
        ));
        assert!(matches!(
            parse_tokens("<voxel> -1 2", c8()),
            Err(CodecError::MalformedToken { offset: 8, .. })
        ));
        assert!(matches!(
            parse_tokens("<voxel> 3 0", c8()),
            Err(CodecError::OutOfRange { what: "K", value: 0, .. })
        ));
        assert!(matches!(
            parse_tokens("<voxel> 3 4096", c8()),
            Err(CodecError::OutOfRange { what: "K", value: 4096, .. })
        ));
        assert_eq!(
            parse_tokens("<voxel> 5 1 <voxel> 5 2", c8()),
            Err(CodecError::DuplicateCoordinate { xyz: 5, offset: Some(12) })
        );
        assert!(matches!(
            parse_tokens("<voxel> 99999999999999999999999 2", c8()),
            Err(CodecError::OutOfRange { .. })
        ));
    }

    #[test]
    fn densify_examples() {
        let empty = TokenSequence::empty(c8());
        assert_eq!(densify(&empty), IndexGrid::zeros(GridDims::CUBE_8));

        let seq = TokenSequence::new(c8(), vec![VoxelToken { xyz: 511, k: 4095 }]).unwrap();
        let g = densify(&seq);
        assert_eq!(g.nonzero_count(), 1);
        let c = GridDims::CUBE_8.delinearize(511).unwrap();
        assert_eq!((c.x, c.y, c.z), (7, 7, 7));
        assert_eq!(g.indices[511], 4095);
    }

    #[test]
    fn compression_extremes() {
        assert_eq!(compression_stats(&TokenSequence::empty(c8())).reduction, 1.0);
        let full: Vec<_> = (0..512).map(|xyz| VoxelToken { xyz, k: 1 }).collect();
        let seq = TokenSequence::new(c8(), full).unwrap();
        assert_eq!(compression_stats(&seq).reduction, 0.0);
    }

    #[test]
    fn profiles_parse() {
        assert_eq!("16x8x8".parse::<CodecProfile>().unwrap(), CodecProfile::Wide16x8x8);
        assert_eq!("8x8x8".parse::<CodecProfile>().unwrap().codebook_size(), 4096);
        assert!("4x4x4".parse::<CodecProfile>().is_err());
    }
}
