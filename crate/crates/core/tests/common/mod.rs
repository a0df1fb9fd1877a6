//! Brute-force oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use promptforge::{
    build_patch_grid, FeatureMap, PatchLabel, PromptClass, PromptPoint, PromptScheme,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A `rows x cols` grid of 4-pixel patches with uniform features.
pub fn random_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dim: usize) -> FeatureMap {
    let grid = build_patch_grid(cols * 4, rows * 4, 4, 4).unwrap();
    let data = (0..rows * cols * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    FeatureMap::new(grid, dim, data).unwrap()
}

/// Features drawn from a few values so that ties are common.
pub fn coarse_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dim: usize) -> FeatureMap {
    let grid = build_patch_grid(cols * 4, rows * 4, 4, 4).unwrap();
    let data = (0..rows * cols * dim)
        .map(|_| rng.random_range(0..3) as f32)
        .collect();
    FeatureMap::new(grid, dim, data).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<PatchLabel> {
    (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                PatchLabel::Positive
            } else {
                PatchLabel::Negative
            }
        })
        .collect()
}

pub fn brute_distances(a: &FeatureMap, b: &FeatureMap) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b.num_patches()]; a.num_patches()];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut s = 0.0f64;
            for k in 0..a.dim() {
                let d = a.feature(i)[k] as f64 - b.feature(j)[k] as f64;
                s += d * d;
            }
            *cell = s.sqrt();
        }
    }
    out
}

pub fn random_class(rng: &mut ChaCha8Rng) -> PromptClass {
    match rng.random_range(0..3) {
        0 => PromptClass::Positive,
        1 => PromptClass::Negative,
        _ => PromptClass::HardNegative,
    }
}

pub fn random_scheme(rng: &mut ChaCha8Rng, w: u32, h: u32, max_points: usize) -> PromptScheme {
    let n = rng.random_range(0..=max_points);
    let points: Vec<PromptPoint> = (0..n)
        .map(|_| {
            PromptPoint::new(
                rng.random_range(0..w),
                rng.random_range(0..h),
                random_class(rng),
            )
        })
        .collect();
    PromptScheme::new(w, h, points).unwrap()
}

pub fn dist(a: &PromptPoint, b: &PromptPoint) -> f64 {
    let dx = a.x as f64 - b.x as f64;
    let dy = a.y as f64 - b.y as f64;
    (dx * dx + dy * dy).sqrt()
}

/// Exclusion by direct all-pairs check.
pub fn brute_exclusive(scheme: &PromptScheme, radius: f64) -> Vec<PromptPoint> {
    let pos: Vec<&PromptPoint> = scheme
        .points()
        .iter()
        .filter(|p| p.class == PromptClass::Positive)
        .collect();
    scheme
        .points()
        .iter()
        .filter(|p| p.class == PromptClass::Positive || pos.iter().all(|q| dist(p, q) > radius))
        .copied()
        .collect()
}

pub fn sorted(mut points: Vec<PromptPoint>) -> Vec<(u32, u32, u8)> {
    let mut v: Vec<(u32, u32, u8)> = points
        .drain(..)
        .map(|p| (p.x, p.y, p.class as u8))
        .collect();
    v.sort_unstable();
    v
}
