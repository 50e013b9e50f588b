use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{self, Exec};

use super::ops::sq_dist;
use super::{Codebook, VqError};

/// Lloyd's k-means over `dim`-sized rows of `samples`.
///
/// Seeding takes every distinct sample once (in seeded random order) before
/// repeating any, so `k` centres cover all distinct samples whenever
/// `k >= distinct`. Clusters that lose all members keep their centre.
pub fn kmeans(samples: &[f64], dim: usize, k: usize, iterations: usize, rng: &mut impl Rng, exec: Exec) -> Vec<f64> {
    let n = samples.len() / dim;
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];

    let mut seen = HashSet::new();
    let mut distinct: Vec<usize> = (0..n)
        .filter(|&i| seen.insert(row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        .collect();
    distinct.shuffle(rng);
    let mut seeds: Vec<usize> = distinct.into_iter().take(k).collect();
    while seeds.len() < k {
        seeds.push(rng.gen_range(0..n));
    }
    let mut centers: Vec<f64> = seeds.iter().flat_map(|&i| row(i).iter().copied()).collect();

    for _ in 0..iterations {
        let assign: Vec<usize> = exec::map_range(exec, n, |i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(row(i), &centers[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        });
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
    }
    centers
}

/// Codebook of `size` entries: entry 0 is the zero vector, entries `1..size`
/// are k-means centres of the latent samples.
pub fn init_codebook(
    samples: &[f64],
    dim: usize,
    size: usize,
    iterations: usize,
    seed: u64,
    exec: Exec,
) -> Result<Codebook, VqError> {
    if size < 2 {
        return Err(VqError::EmptyCodebook(size));
    }
    if dim == 0 || samples.is_empty() || !samples.len().is_multiple_of(dim) {
        return Err(VqError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans(samples, dim, size - 1, iterations, &mut rng, exec);
    let mut entries = vec![0.0; dim];
    entries.extend(centers);
    Ok(Codebook { dim, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Vec::new();
        for i in 0..200 {
            let c = if i % 2 == 0 { [3.0, -1.0] } else { [-4.0, 2.0] };
            s.push(c[0] + rng.gen_range(-0.1..0.1));
            s.push(c[1] + rng.gen_range(-0.1..0.1));
        }
        s
    }

    #[test]
    fn recovers_two_cluster_centres() {
        let s = two_clusters(1);
        let cb = init_codebook(&s, 2, 3, 20, 7, Exec::Sequential).unwrap();
        assert_eq!(cb.entry(0), &[0.0, 0.0]);
        // reference means computed directly from the generator's labels
        let mean = |parity: usize| {
            let pts: Vec<_> = s.chunks(2).enumerate().filter(|(i, _)| i % 2 == parity).map(|(_, p)| p).collect();
            let n = pts.len() as f64;
            [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let (m0, m1) = (mean(0), mean(1));
        let mut got = [cb.entry(1).to_vec(), cb.entry(2).to_vec()];
        got.sort_by(|a, b| b[0].total_cmp(&a[0]));
        for (g, m) in got.iter().zip([m0, m1]) {
            assert!((g[0] - m[0]).abs() < 1e-12 && (g[1] - m[1]).abs() < 1e-12, "{g:?} vs {m:?}");
        }
    }

    #[test]
    fn seeded_and_mode_independent() {
        let s = two_clusters(2);
        let a = init_codebook(&s, 2, 9, 5, 3, Exec::Sequential).unwrap();
        let b = init_codebook(&s, 2, 9, 5, 3, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 9);
        assert!(a.entry(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covers_every_distinct_sample_when_possible() {
        let s = vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 3.0, 3.0];
        let cb = init_codebook(&s, 2, 6, 3, 0, Exec::Sequential).unwrap();
        for p in [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]] {
            assert!((1..6).any(|k| cb.entry(k) == p));
        }
    }

    #[test]
    fn rejects_missing_samples() {
        assert!(matches!(init_codebook(&[], 2, 4, 3, 0, Exec::Sequential), Err(VqError::NoSamples)));
        assert!(matches!(init_codebook(&[1.0, 2.0], 2, 1, 3, 0, Exec::Sequential), Err(VqError::EmptyCodebook(1))));
    }
}
