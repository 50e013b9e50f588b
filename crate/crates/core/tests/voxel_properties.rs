use articulate_core::voxel::{grid_iou, normalize_mesh, OccupancyGrid, Voxelizer, DEFAULT_MARGIN};
use articulate_core::{Exec, Mesh};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -5.0..5.0f64
}

/// Random triangle soup with non-degenerate extent.
fn mesh() -> impl Strategy<Value = Mesh> {
    (4usize..12)
        .prop_flat_map(|n| {
            let verts = proptest::collection::vec([coord(), coord(), coord()], n);
            let faces = proptest::collection::vec((0..n, 0..n, 0..n), 1..16);
            (verts, faces)
        })
        .prop_filter_map("needs a valid face", |(v, f)| {
            let faces: Vec<[usize; 3]> =
                f.into_iter().filter(|(a, b, c)| a != b && b != c && a != c).map(|(a, b, c)| [a, b, c]).collect();
            Mesh::new(v, faces).ok()
        })
}

fn grid(dims: [usize; 3]) -> impl Strategy<Value = OccupancyGrid> {
    let cells = dims[0] * dims[1] * dims[2];
    proptest::collection::vec(any::<bool>(), cells).prop_map(move |bits| {
        let mut g = OccupancyGrid::new(dims);
        for (i, b) in bits.into_iter().enumerate() {
            g.set_linear(i, b);
        }
        g
    })
}

fn voxelize(m: &Mesh, exec: Exec) -> OccupancyGrid {
    let (n, _) = normalize_mesh(m, DEFAULT_MARGIN).unwrap();
    Voxelizer { exec, ..Voxelizer::default() }.voxelize(&n, 16).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occupancy_ignores_vertex_and_face_order(m in mesh(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
        let n = m.vertices.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut shuffled = m.clone();
        for (old, &new) in perm.iter().enumerate() {
            shuffled.vertices[new] = m.vertices[old];
        }
        shuffled.faces = m.faces.iter().map(|f| f.map(|i| perm[i])).collect();
        shuffled.faces.shuffle(&mut rng);
        prop_assert_eq!(voxelize(&m, Exec::Sequential), voxelize(&shuffled, Exec::Parallel));
    }

    #[test]
    fn normalization_inverts(m in mesh()) {
        let (n, t) = normalize_mesh(&m, DEFAULT_MARGIN).unwrap();
        for (orig, mapped) in m.vertices.iter().zip(&n.vertices) {
            for v in mapped {
                prop_assert!((DEFAULT_MARGIN - 1e-9..=1.0 - DEFAULT_MARGIN + 1e-9).contains(v));
            }
            let back = t.invert(*mapped);
            for a in 0..3 {
                prop_assert!((back[a] - orig[a]).abs() <= 1e-6 * orig[a].abs().max(1.0));
            }
        }
    }

    #[test]
    fn grid_iou_laws(a in grid([4, 4, 4]), b in grid([4, 4, 4]), drop in any::<u64>()) {
        let ab = grid_iou(&a, &b).unwrap();
        prop_assert_eq!(ab, grid_iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if !a.is_empty() {
            prop_assert_eq!(grid_iou(&a, &a).unwrap(), 1.0);
        }
        // Removing one shared cell from `a` cannot raise the IoU.
        let shared: Vec<usize> = a.occupied().filter(|&i| b.get_linear(i)).collect();
        if !shared.is_empty() {
            let mut smaller = a.clone();
            smaller.set_linear(shared[(drop as usize) % shared.len()], false);
            prop_assert!(grid_iou(&smaller, &b).unwrap() <= ab);
        }
    }

    #[test]
    fn grid_files_round_trip(g in grid([3, 5, 7])) {
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        let back = OccupancyGrid::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.dims(), [3, 5, 7]);
        prop_assert_eq!(back.count(), g.count());
        prop_assert!((0.0..=1.0).contains(&back.occupancy_fraction()));
        prop_assert_eq!(back, g);
    }
}
