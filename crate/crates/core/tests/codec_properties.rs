use articulate_core::codec::{densify, parse_tokens, tokenize_grid, CodecProfile, IndexGrid, TokenSequence, VoxelToken};
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = CodecProfile> {
    prop_oneof![Just(CodecProfile::Cube8), Just(CodecProfile::Wide16x8x8)]
}

/// Sparse index grid: each cell is zero with high probability.
fn index_grid(p: CodecProfile) -> impl Strategy<Value = IndexGrid> {
    let dims = p.dims();
    let n = dims.cell_count();
    let k = p.codebook_size();
    proptest::collection::vec((0..n, 1..k), 0..200).prop_map(move |cells| {
        let mut g = IndexGrid::zeros(dims);
        for (xyz, k) in cells {
            g.indices[xyz] = k;
        }
        g
    })
}

fn profile_and_grid() -> impl Strategy<Value = (CodecProfile, IndexGrid)> {
    profile().prop_flat_map(|p| (Just(p), index_grid(p)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn text_round_trip_is_exact((p, grid) in profile_and_grid()) {
        let seq = tokenize_grid(&grid, p.codec()).unwrap();
        let text = seq.to_string();
        let parsed = parse_tokens(&text, p.codec()).unwrap();
        prop_assert_eq!(&parsed, &seq);
        prop_assert_eq!(parsed.to_string(), text);
        prop_assert_eq!(densify(&parsed), grid.clone());
        prop_assert_eq!(seq.len(), grid.nonzero_count());
        prop_assert!(seq.tokens().iter().all(|t| t.k != 0));
        prop_assert!(seq.tokens().windows(2).all(|w| w[0].xyz < w[1].xyz));
    }

    #[test]
    fn canonical_sequences_survive_densify((p, grid) in profile_and_grid(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let canonical = tokenize_grid(&grid, p.codec()).unwrap();
        let mut shuffled = canonical.tokens().to_vec();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let rebuilt = TokenSequence::new(p.codec(), shuffled).unwrap();
        prop_assert_eq!(&rebuilt, &canonical);
        prop_assert_eq!(tokenize_grid(&densify(&rebuilt), p.codec()).unwrap(), canonical);
    }

    #[test]
    fn extra_whitespace_parses_to_the_same_stream((p, grid) in profile_and_grid()) {
        let seq = tokenize_grid(&grid, p.codec()).unwrap();
        let spaced: String = seq.tokens().iter().rev().map(|t| format!("\n <voxel>\t{}  {} ", t.xyz, t.k)).collect();
        prop_assert_eq!(parse_tokens(&spaced, p.codec()).unwrap(), seq);
    }

    #[test]
    fn zero_and_out_of_range_tokens_are_rejected(p in profile(), xyz in 0usize..1024) {
        let c = p.codec();
        let cells = p.dims().cell_count();
        let bad = [
            format!("<voxel> {xyz} 0"),
            format!("<voxel> {xyz} {}", p.codebook_size()),
            format!("<voxel> {cells} 1"),
            format!("<voxel> {xyz} 1 <voxel> {xyz} 2"),
        ];
        for text in &bad {
            prop_assert!(parse_tokens(text, c).is_err(), "accepted {:?}", text);
        }
        let zero = TokenSequence::new(c, vec![VoxelToken { xyz, k: 0 }]);
        prop_assert!(zero.is_err());
    }
}

#[test]
fn index_map_is_a_bijection() {
    for p in [CodecProfile::Cube8, CodecProfile::Wide16x8x8] {
        let d = p.dims();
        let mut seen = vec![false; d.cell_count()];
        for x in 0..d.x {
            for y in 0..d.y {
                for z in 0..d.z {
                    let c = articulate_core::codec::LatentCoordinate { x, y, z };
                    let i = d.linearize(c).unwrap();
                    assert_eq!(i, (d.y * d.z) * x + d.z * y + z);
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(d.delinearize(i).unwrap(), c);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert!(d.delinearize(d.cell_count()).is_err());
    }
}
