use articulate_core::mesh::{box_mesh, Point3};
use articulate_core::metrics::{evaluate, EvalAsset, EvalOptions, EvalPart, JointRecord};
use articulate_core::segment::{segment_mesh, SeedSet, SegmentParams};
use articulate_core::shapes::{ellipsoid, fixture_suite};
use articulate_core::urdf::JointKind;
use articulate_core::voxel::{normalize_mesh, Voxelizer, DEFAULT_MARGIN};
use articulate_core::vq::{VqConfig, VqModel};
use articulate_core::Exec;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn voxelize(c: &mut Criterion) {
    let (mesh, _) = normalize_mesh(&ellipsoid([0.0; 3], [1.0, 0.7, 0.5], 96, 192), DEFAULT_MARGIN).unwrap();
    let mut g = c.benchmark_group("voxelize_64");
    for (name, exec) in MODES {
        let v = Voxelizer { exec, ..Voxelizer::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| v.voxelize(black_box(&mesh), 64).unwrap()));
    }
    g.finish();
}

fn quantize(c: &mut Criterion) {
    let model = VqModel::random(VqConfig::default(), 1).unwrap();
    let grid = articulate_core::shapes::voxelize_normalized(&fixture_suite()[0].1, 64, Exec::Parallel).unwrap();
    let mut g = c.benchmark_group("tokens_for_8x8x8");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| model.tokens_for(black_box(&grid), exec).unwrap()));
    }
    g.finish();
}

fn segment(c: &mut Criterion) {
    let mesh = ellipsoid([0.0; 3], [1.0, 0.7, 0.5], 96, 192);
    let half = |sign: f64| -> Vec<Point3> { mesh.vertices.iter().copied().filter(|v| v[0] * sign > 0.2).collect() };
    let seeds = SeedSet::new([(0, half(-1.0)), (1, half(1.0))]).unwrap();
    let params = SegmentParams::default();
    let mut g = c.benchmark_group("segment");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| segment_mesh(black_box(&mesh), &seeds, &params, exec).unwrap())
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let asset = |shift: f64| EvalAsset {
        name: "box".into(),
        parts: vec![
            EvalPart { id: 0, mesh: box_mesh([0.0; 3], [1.0, 0.8, 0.5]), joint: None },
            EvalPart {
                id: 1,
                mesh: box_mesh([shift, 0.0, 0.55], [1.0 + shift, 0.8, 0.6]),
                joint: Some(JointRecord { kind: JointKind::Revolute, origin: [0.0, 0.8, 0.55], axis: Some([1.0, 0.0, 0.0]) }),
            },
        ],
    };
    let (pred, gt) = (asset(0.05), asset(0.0));
    let mut g = c.benchmark_group("evaluate");
    for (name, exec) in MODES {
        let opts = EvalOptions { exec, ..EvalOptions::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| evaluate(black_box(&pred), &gt, &opts).unwrap()));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = voxelize, quantize, segment, evaluation
}
criterion_main!(benches);
