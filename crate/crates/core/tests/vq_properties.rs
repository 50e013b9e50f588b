use articulate_core::codec::GridDims;
use articulate_core::voxel::OccupancyGrid;
use articulate_core::vq::{quantize, quantize_all, Codebook, LatentGrid, LatentMask, VqConfig, VqModel};
use articulate_core::Exec;
use proptest::prelude::*;

const DIMS: GridDims = GridDims { x: 3, y: 2, z: 2 };

#[derive(Debug, Clone)]
struct Triple {
    latent: LatentGrid,
    mask: LatentMask,
    codebook: Codebook,
}

fn triple() -> impl Strategy<Value = Triple> {
    (1usize..6, 2usize..12).prop_flat_map(|(dim, k)| {
        let cells = DIMS.cell_count();
        (
            proptest::collection::vec(-3.0..3.0f64, cells * dim),
            proptest::collection::vec(any::<bool>(), cells),
            proptest::collection::vec(-3.0..3.0f64, (k - 1) * dim),
        )
            .prop_map(move |(z, m, e)| {
                let mut entries = vec![0.0; dim];
                entries.extend(e);
                Triple {
                    latent: LatentGrid { dims: DIMS, dim, data: z },
                    mask: LatentMask { dims: DIMS, cells: m },
                    codebook: Codebook { dim, entries },
                }
            })
    })
}

fn brute_force_nearest(z: &[f64], cb: &Codebook) -> usize {
    let mut best = (f64::INFINITY, 0);
    for k in 1..cb.len() {
        let d: f64 = z.iter().zip(cb.entry(k)).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

fn scaled(t: &Triple, c: f64) -> Triple {
    let mut t = t.clone();
    t.latent.data.iter_mut().chain(t.codebook.entries.iter_mut()).for_each(|v| *v *= c);
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn zero_token_rule_holds_per_cell(t in triple()) {
        let q = quantize(&t.latent, &t.mask, &t.codebook, Exec::Sequential).unwrap();
        for c in 0..DIMS.cell_count() {
            let k = q.indices.indices[c] as usize;
            if t.mask.cells[c] {
                prop_assert_eq!(k, brute_force_nearest(t.latent.cell(c), &t.codebook));
            } else {
                prop_assert_eq!(k, 0);
            }
            prop_assert_eq!(q.latent.cell(c), t.codebook.entry(k));
        }
        let all = quantize_all(&t.latent, &t.codebook, Exec::Parallel).unwrap();
        for c in 0..DIMS.cell_count() {
            prop_assert_eq!(all.indices.indices[c] as usize, brute_force_nearest(t.latent.cell(c), &t.codebook));
        }
    }

    #[test]
    fn common_scaling_keeps_assignments(t in triple(), e in -4i32..5) {
        let base = quantize(&t.latent, &t.mask, &t.codebook, Exec::Sequential).unwrap();
        let s = scaled(&t, 2f64.powi(e));
        let q = quantize(&s.latent, &s.mask, &s.codebook, Exec::Sequential).unwrap();
        prop_assert_eq!(q.indices, base.indices);
    }

    #[test]
    fn checkpoints_store_f32_parameters(seed in any::<u64>()) {
        let cfg = VqConfig {
            grid_dims: [4, 4, 4],
            latent_dims: GridDims { x: 2, y: 2, z: 1 },
            latent_dim: 3,
            codebook_size: 6,
            zero_token: seed % 2 == 0,
        };
        let model = VqModel::random(cfg, seed).unwrap();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        let back = VqModel::read_from(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &model.rounded_to_f32());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn sequential_and_parallel_reconstructions_agree(seed in any::<u64>(), bits in proptest::collection::vec(any::<bool>(), 64)) {
        let cfg = VqConfig {
            grid_dims: [4, 4, 4],
            latent_dims: GridDims { x: 2, y: 2, z: 1 },
            latent_dim: 3,
            codebook_size: 6,
            zero_token: true,
        };
        let model = VqModel::random(cfg, seed).unwrap();
        let mut g = OccupancyGrid::new([4, 4, 4]);
        for (i, b) in bits.into_iter().enumerate() {
            g.set_linear(i, b);
        }
        let a = model.reconstruct(&g, Exec::Sequential).unwrap();
        let b = model.reconstruct(&g, Exec::Parallel).unwrap();
        prop_assert_eq!(a.grid, b.grid);
        prop_assert_eq!(a.logits, b.logits);
        let tokens = model.tokens_for(&g, Exec::Sequential).unwrap();
        prop_assert!(tokens.tokens().iter().all(|t| t.k != 0));
    }
}
