#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semvs::depth_map::DepthMap;
use semvs::geometry::Pixel;
use semvs::synth::{RenderedView, SynthScene};
use semvs::{DepthMaps, MatchParams, PairSet, PatchMatcher, Scene};

/// Median of `|d − gt| / gt` over valid pixels.
pub fn median_relative_error(map: &DepthMap, gt: &RenderedView) -> f64 {
    let mut errs: Vec<f64> = (0..map.len())
        .filter(|&i| map.is_valid(i))
        .map(|i| {
            let g = gt.depth.as_slice()[i];
            (map.depth(i) as f64 - g).abs() / g
        })
        .collect();
    assert!(!errs.is_empty(), "no valid pixels");
    errs.sort_by(f64::total_cmp);
    errs[errs.len() / 2]
}

pub fn matcher<'a>(
    scene: &'a Scene,
    pairs: &PairSet,
    id: u32,
    params: &MatchParams,
) -> PatchMatcher<'a> {
    let reference = scene.view(id).unwrap();
    let targets = pairs
        .target_ids(id)
        .into_iter()
        .map(|t| scene.view(t).unwrap())
        .collect();
    PatchMatcher::new(scene, reference, targets, params).unwrap()
}

pub fn compute_all(scene: &Scene, pairs: &PairSet, params: &MatchParams) -> DepthMaps {
    pairs
        .references()
        .map(|id| (id, matcher(scene, pairs, id, params).run()))
        .collect()
}

/// Pixels of `id` whose surface point is seen unoccluded by at least `k` of
/// its targets: the point projects inside the target and the target's
/// nearest pixel shows the same rectangle.
pub fn mutually_visible(synth: &SynthScene, pairs: &PairSet, id: u32, k: usize) -> Vec<usize> {
    let r = synth.rendered(id).unwrap();
    let (w, h) = r.view.image.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let Some(surface) = *r.surface.get(x, y) else {
                continue;
            };
            let d = *r.depth.get(x, y);
            let p: Vector3<f64> = r
                .view
                .camera
                .backproject(&Pixel::new(x as f64, y as f64), d)
                .unwrap();
            let seen = pairs
                .target_ids(id)
                .into_iter()
                .filter(|&t| {
                    let tv = synth.rendered(t).unwrap();
                    let Ok((q, _)) = tv.view.camera.project(&p) else {
                        return false;
                    };
                    match tv.view.labels.nearest(q.u, q.v) {
                        Some((qx, qy)) => *tv.surface.get(qx, qy) == Some(surface),
                        None => false,
                    }
                })
                .count();
            if seen >= k {
                out.push(y * w + x);
            }
        }
    }
    out
}

/// Replaces `fraction` of the labeled pixels of view `id` with a different
/// class drawn from `classes`.
pub fn inject_label_noise(
    scene: &mut Scene,
    id: u32,
    fraction: f64,
    classes: &[u8],
    seed: u64,
) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let view = scene.view_mut(id).unwrap();
    let mut flipped = 0;
    for l in view.labels.as_mut_slice() {
        if *l == semvs::UNLABELED || !rng.random_bool(fraction) {
            continue;
        }
        let others: Vec<u8> = classes.iter().copied().filter(|c| c != l).collect();
        *l = others[rng.random_range(0..others.len())];
        flipped += 1;
    }
    flipped
}

/// Valid pixel indices of a map.
pub fn valid_set(map: &DepthMap) -> BTreeSet<usize> {
    (0..map.len()).filter(|&i| map.is_valid(i)).collect()
}
