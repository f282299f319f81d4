//! PatchMatch depth estimation with slanted support planes.
//!
//! Every pixel of a reference view carries a [`PlaneHypothesis`]. Hypotheses
//! start from sparse-point seeds or uniform random draws, are scored by
//! `1 − ZNCC` over plane-warped windows in the target views, and improve by
//! alternating spatial propagation and shrinking random perturbations.
//!
//! Randomness is drawn from per-pixel ChaCha streams keyed by
//! `(seed, view id, stage)` with the pixel index as stream number, so results
//! do not depend on scheduling.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_map::{narrow, widen, DepthMap};
use crate::geometry::{apply_homography, lit, plane_homography, Pixel, PlaneHypothesis, Real};
use crate::scene_io::{Scene, View};

/// Per-view costs closer to zero than this are snapped to zero, so identical
/// windows score exactly 0 despite rounding in the warp.
const COST_SNAP: f64 = 1e-9;

/// Mean-square deviation below which a window counts as constant.
const MIN_WINDOW_VARIANCE: f64 = 1e-10;

/// Relative perturbation applied to depths seeded from sparse points.
const SEED_JITTER: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("view {0}: no sparse point is visible, depth range unknown")]
    NoDepthPrior(u32),
    #[error("view {0}: no target views to match against")]
    NoTargets(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Window half-size; the window is `(2w+1)²`.
    pub half_window: usize,
    pub iterations: usize,
    /// The sparse-point depth span is widened by this factor on both ends.
    pub depth_expansion: f64,
    /// Per-view cost when ZNCC is undefined (a constant window).
    pub cost_undefined: f64,
    /// Per-view cost ceiling, also used when the warped window leaves the
    /// target. Pixels whose final cost reaches it are invalidated.
    pub cost_cap: f64,
    pub refinement_samples: usize,
    pub seed: u64,
    /// Keep every normal on the optical axis (fronto-parallel ablation).
    pub lock_normals: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            half_window: 3,
            iterations: 3,
            depth_expansion: 1.25,
            cost_undefined: 2.0,
            cost_cap: 2.0,
            refinement_samples: 6,
            seed: 0,
            lock_normals: false,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: &str| Err(MatchError::InvalidArgument(m.into()));
        if self.half_window < 1 {
            return bad("half_window must be >= 1");
        }
        if self.iterations < 1 {
            return bad("iterations must be >= 1");
        }
        if !(self.depth_expansion >= 1.0) {
            return bad("depth_expansion must be >= 1");
        }
        if !(self.cost_cap > 0.0 && self.cost_undefined >= 0.0) {
            return bad("costs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub fn contains(&self, d: f64) -> bool {
        d >= self.min && d <= self.max
    }

    pub fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.min, self.max)
    }
}

/// Depth span of the sparse points visible in `reference`, widened by
/// `expansion` (divided at the near end, multiplied at the far end).
pub fn depth_range(
    scene: &Scene,
    reference: &View,
    expansion: f64,
) -> Result<DepthRange, MatchError> {
    let (lo, hi) = scene
        .points_in(reference.id)
        .filter_map(|p| reference.camera.project(&p.xyz).ok())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, d)| {
            (lo.min(d), hi.max(d))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(MatchError::NoDepthPrior(reference.id));
    }
    Ok(DepthRange {
        min: lo / expansion,
        max: hi * expansion,
    })
}

/// Zero-mean normalized cross-correlation. `Ok(None)` when either window has
/// (numerically) zero variance.
pub fn zncc<T: Real>(a: &[T], b: &[T]) -> Result<Option<T>, MatchError> {
    if a.len() != b.len() {
        return Err(MatchError::InvalidArgument(format!(
            "window sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(None);
    }
    let n: T = lit(a.len() as f64);
    let mean_a = a.iter().fold(T::zero(), |s, &v| s + v) / n;
    let mean_b = b.iter().fold(T::zero(), |s, &v| s + v) / n;
    let (mut cov, mut var_a, mut var_b) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    let min_var = n * lit(MIN_WINDOW_VARIANCE);
    if var_a <= min_var || var_b <= min_var {
        return Ok(None);
    }
    let r = cov / (var_a * var_b).sqrt();
    Ok(Some(r.clamp(-T::one(), T::one())))
}

/// Scores plane hypotheses at reference pixels against a fixed set of
/// targets. Holds scratch buffers, so one evaluator per thread.
pub struct CostEvaluator<'a> {
    reference: &'a View,
    targets: Vec<&'a View>,
    params: MatchParams,
    coords: Vec<(f64, f64)>,
    ref_values: Vec<f64>,
    tgt_values: Vec<f64>,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(reference: &'a View, targets: Vec<&'a View>, params: &MatchParams) -> Self {
        let cap = (2 * params.half_window + 1).pow(2);
        Self {
            reference,
            targets,
            params: *params,
            coords: Vec::with_capacity(cap),
            ref_values: Vec::with_capacity(cap),
            tgt_values: Vec::with_capacity(cap),
        }
    }

    /// Mean over targets of the per-view cost, in `[0, cost_cap]`.
    pub fn cost(&mut self, x: usize, y: usize, hyp: &PlaneHypothesis) -> f64 {
        let p = &self.params;
        if self.targets.is_empty() {
            return p.cost_cap;
        }
        let pixel = Pixel::new(x as f64, y as f64);
        let ray = self.reference.camera.intrinsics.ray(&pixel);
        if !hyp.faces(&ray) {
            return p.cost_cap;
        }

        let w = p.half_window as i64;
        let img = &self.reference.image;
        self.coords.clear();
        self.ref_values.clear();
        for dy in -w..=w {
            let qy = y as i64 + dy;
            if qy < 0 || qy >= img.height() as i64 {
                continue;
            }
            for dx in -w..=w {
                let qx = x as i64 + dx;
                if qx < 0 || qx >= img.width() as i64 {
                    continue;
                }
                self.coords.push((qx as f64, qy as f64));
                self.ref_values
                    .push(*img.get(qx as usize, qy as usize) as f64);
            }
        }
        // A constant reference window is undefined against every target.
        if zncc(&self.ref_values, &self.ref_values)
            .expect("same length")
            .is_none()
        {
            return p.cost_undefined.min(p.cost_cap);
        }

        let mut total = 0.0;
        for target in &self.targets {
            total += per_view_cost(
                self.reference,
                target,
                &pixel,
                hyp,
                &self.coords,
                &self.ref_values,
                &mut self.tgt_values,
                p,
            );
        }
        total / self.targets.len() as f64
    }
}

#[allow(clippy::too_many_arguments)]
fn per_view_cost(
    reference: &View,
    target: &View,
    pixel: &Pixel,
    hyp: &PlaneHypothesis,
    coords: &[(f64, f64)],
    ref_values: &[f64],
    tgt_values: &mut Vec<f64>,
    p: &MatchParams,
) -> f64 {
    let Ok(h) = plane_homography(&reference.camera, &target.camera, pixel, hyp) else {
        return p.cost_cap;
    };
    tgt_values.clear();
    for &(u, v) in coords {
        let Some(q) = apply_homography(&h, u, v) else {
            return p.cost_cap;
        };
        let Some(value) = target.image.sample_bilinear(q.u, q.v) else {
            return p.cost_cap;
        };
        tgt_values.push(value);
    }
    let cost = match zncc(ref_values, tgt_values).expect("same length") {
        Some(r) => {
            let c = 1.0 - r;
            if c < COST_SNAP {
                0.0
            } else {
                c
            }
        }
        None => p.cost_undefined,
    };
    cost.min(p.cost_cap)
}

/// Cost of one hypothesis at one pixel.
pub fn plane_cost(
    reference: &View,
    targets: &[&View],
    pixel: (usize, usize),
    hyp: &PlaneHypothesis,
    params: &MatchParams,
) -> f64 {
    CostEvaluator::new(reference, targets.to_vec(), params).cost(pixel.0, pixel.1, hyp)
}

/// Random stream for one pixel at one stage (0 = initialization, `t + 1` =
/// sweep `t`).
fn pixel_rng(seed: u64, view: u32, stage: u32, pixel: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&view.to_le_bytes());
    key[12..16].copy_from_slice(&stage.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(pixel as u64);
    rng
}

fn optical_axis_normal() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -1.0)
}

/// Uniform direction on the hemisphere facing a camera looking along `ray`.
fn sample_facing_normal(rng: &mut ChaCha8Rng, ray: &Vector3<f64>) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    let n = Vector3::new(r * phi.cos(), r * phi.sin(), z);
    let facing = n.dot(ray);
    if facing < 0.0 {
        n
    } else if facing > 0.0 {
        -n
    } else {
        optical_axis_normal()
    }
}

/// Rotates `n` by a random angle in `[0, max_angle]` about a random axis
/// perpendicular to it.
fn perturb_normal(rng: &mut ChaCha8Rng, n: &Vector3<f64>, max_angle: f64) -> Vector3<f64> {
    let v = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle: f64 = rng.random_range(0.0..=max_angle);
    let axis = n.cross(&v);
    let len = axis.norm();
    if len < 1e-12 {
        return *n;
    }
    let axis = axis / len;
    (n * angle.cos() + axis.cross(n) * angle.sin()).normalize()
}

/// Runs PatchMatch for one reference view.
pub struct PatchMatcher<'a> {
    reference: &'a View,
    targets: Vec<&'a View>,
    params: MatchParams,
    range: DepthRange,
    seeds: Vec<(f64, f64, f64)>,
}

impl<'a> PatchMatcher<'a> {
    pub fn new(
        scene: &'a Scene,
        reference: &'a View,
        targets: Vec<&'a View>,
        params: &MatchParams,
    ) -> Result<Self, MatchError> {
        params.validate()?;
        if targets.is_empty() {
            return Err(MatchError::NoTargets(reference.id));
        }
        let range = depth_range(scene, reference, params.depth_expansion)?;
        let seeds = scene
            .points_in(reference.id)
            .filter_map(|p| reference.camera.project(&p.xyz).ok())
            .map(|(px, d)| (px.u, px.v, d))
            .collect();
        Ok(Self {
            reference,
            targets,
            params: *params,
            range,
            seeds,
        })
    }

    pub fn range(&self) -> DepthRange {
        self.range
    }

    pub fn evaluator(&self) -> CostEvaluator<'a> {
        CostEvaluator::new(self.reference, self.targets.clone(), &self.params)
    }

    fn ray(&self, x: usize, y: usize) -> Vector3<f64> {
        self.reference
            .camera
            .intrinsics
            .ray(&Pixel::new(x as f64, y as f64))
    }

    /// Nearest projected sparse point within the seeding radius of each
    /// pixel, as a depth; ties go to the earlier point.
    fn seed_depths(&self) -> Vec<Option<f64>> {
        let (w, h) = self.reference.image.dims();
        let radius = 2.0 * self.params.half_window as f64;
        let mut best: Vec<Option<(f64, f64)>> = vec![None; w * h];
        for &(u, v, d) in &self.seeds {
            let x0 = (u - radius).floor().max(0.0) as usize;
            let y0 = (v - radius).floor().max(0.0) as usize;
            let x1 = ((u + radius).ceil() as i64).min(w as i64 - 1);
            let y1 = ((v + radius).ceil() as i64).min(h as i64 - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let dist2 = (x as f64 - u).powi(2) + (y as f64 - v).powi(2);
                    if dist2 > radius * radius {
                        continue;
                    }
                    let slot = &mut best[y * w + x];
                    if slot.is_none_or(|(b, _)| dist2 < b) {
                        *slot = Some((dist2, d));
                    }
                }
            }
        }
        best.into_iter().map(|b| b.map(|(_, d)| d)).collect()
    }

    /// Random initialization, costs included.
    pub fn init(&self) -> DepthMap {
        let (w, h) = self.reference.image.dims();
        let seeds = self.seed_depths();
        let mut eval = self.evaluator();
        let mut map = DepthMap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let idx = y * w + x;
                let mut rng = pixel_rng(self.params.seed, self.reference.id, 0, idx);
                let depth = match seeds[idx] {
                    Some(d) => d * (1.0 + rng.random_range(-SEED_JITTER..=SEED_JITTER)),
                    None => rng.random_range(self.range.min..=self.range.max),
                };
                let ray = self.ray(x, y);
                let normal = if self.params.lock_normals {
                    optical_axis_normal()
                } else {
                    sample_facing_normal(&mut rng, &ray)
                };
                let hyp = PlaneHypothesis {
                    depth: self.range.clamp(depth),
                    normal,
                };
                let (d32, n32) = narrow(&hyp);
                let stored = widen(d32, n32).expect("positive depth, non-zero normal");
                let cost = eval.cost(x, y, &stored) as f32;
                map.set(idx, d32, n32, cost);
            }
        }
        map
    }

    /// Stores `candidate` at `idx` iff its cost is strictly below the
    /// incumbent's.
    fn try_adopt(
        &self,
        map: &mut DepthMap,
        eval: &mut CostEvaluator<'_>,
        (x, y, idx): (usize, usize, usize),
        candidate: &PlaneHypothesis,
    ) -> bool {
        if !self.range.contains(candidate.depth) {
            return false;
        }
        let (d32, n32) = narrow(candidate);
        let Some(stored) = widen(d32, n32) else {
            return false;
        };
        let cost = eval.cost(x, y, &stored) as f32;
        if cost < map.cost(idx) {
            map.set(idx, d32, n32, cost);
            true
        } else {
            false
        }
    }

    /// One propagation + refinement sweep. Even iterations run top-left to
    /// bottom-right pulling from the left and top neighbors; odd iterations
    /// run in reverse pulling from the right and bottom.
    pub fn sweep(&self, map: &mut DepthMap, iteration: usize) {
        let (w, h) = map.dims();
        let forward = iteration.is_multiple_of(2);
        let mut eval = self.evaluator();
        let stage = u32::try_from(iteration + 1).expect("iteration count fits u32");
        let n = w * h;
        for step in 0..n {
            let idx = if forward { step } else { n - 1 - step };
            let (x, y) = (idx % w, idx / w);
            let ray = self.ray(x, y);

            let neighbors = if forward {
                [(x > 0).then(|| idx - 1), (y > 0).then(|| idx - w)]
            } else {
                [(x + 1 < w).then(|| idx + 1), (y + 1 < h).then(|| idx + w)]
            };
            for nidx in neighbors.into_iter().flatten() {
                let Some(plane) = map.hypothesis(nidx) else {
                    continue;
                };
                let anchor = self.ray(nidx % w, nidx / w);
                let Some(depth) = plane.depth_along(&anchor, &ray) else {
                    continue;
                };
                let candidate = PlaneHypothesis {
                    depth,
                    normal: plane.normal,
                };
                self.try_adopt(map, &mut eval, (x, y, idx), &candidate);
            }

            let mut rng = pixel_rng(self.params.seed, self.reference.id, stage, idx);
            let mut depth_radius = (self.range.max - self.range.min) / 2.0;
            let mut angle = 45f64.to_radians();
            for _ in 0..self.params.refinement_samples {
                let Some(current) = map.hypothesis(idx) else {
                    break;
                };
                let depth = current.depth + rng.random_range(-depth_radius..=depth_radius);
                let normal = if self.params.lock_normals {
                    optical_axis_normal()
                } else {
                    let n = perturb_normal(&mut rng, &current.normal, angle);
                    if n.dot(&ray) < 0.0 {
                        n
                    } else {
                        current.normal
                    }
                };
                let candidate = PlaneHypothesis {
                    depth: self.range.clamp(depth),
                    normal,
                };
                self.try_adopt(map, &mut eval, (x, y, idx), &candidate);
                depth_radius /= 2.0;
                angle /= 2.0;
            }
        }
    }

    /// Marks pixels whose cost reached the cap as invalid.
    pub fn finalize(&self, map: &mut DepthMap) {
        let cap = self.params.cost_cap as f32;
        for idx in 0..map.len() {
            if map.cost(idx) >= cap {
                map.invalidate(idx);
            }
        }
    }

    /// Full run; `observe` sees the map after initialization (iteration
    /// `None`) and after every sweep.
    pub fn run_observed(&self, mut observe: impl FnMut(Option<usize>, &DepthMap)) -> DepthMap {
        let mut map = self.init();
        observe(None, &map);
        for t in 0..self.params.iterations {
            self.sweep(&mut map, t);
            observe(Some(t), &map);
        }
        self.finalize(&mut map);
        map
    }

    pub fn run(&self) -> DepthMap {
        self.run_observed(|_, _| {})
    }
}

pub fn init_depth_map(
    scene: &Scene,
    reference: &View,
    targets: &[&View],
    params: &MatchParams,
) -> Result<DepthMap, MatchError> {
    Ok(PatchMatcher::new(scene, reference, targets.to_vec(), params)?.init())
}

pub fn propagate_and_refine(
    map: &mut DepthMap,
    scene: &Scene,
    reference: &View,
    targets: &[&View],
    params: &MatchParams,
    iteration: usize,
) -> Result<(), MatchError> {
    let matcher = PatchMatcher::new(scene, reference, targets.to_vec(), params)?;
    if map.dims() != reference.image.dims() {
        return Err(MatchError::InvalidArgument(
            "depth map does not match the reference view".into(),
        ));
    }
    matcher.sweep(map, iteration);
    Ok(())
}

pub fn compute_depth_map(
    scene: &Scene,
    reference: &View,
    targets: &[&View],
    params: &MatchParams,
) -> Result<DepthMap, MatchError> {
    Ok(PatchMatcher::new(scene, reference, targets.to_vec(), params)?.run())
}
