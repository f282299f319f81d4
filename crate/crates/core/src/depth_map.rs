//! Per-view depth maps: one plane hypothesis and matching cost per pixel.
//!
//! Storage is single precision, mirroring the on-disk layout, so a map read
//! back from disk is bit-identical to the one that was written.

use nalgebra::Vector3;

use crate::geometry::PlaneHypothesis;

/// Depth value marking an invalid pixel.
pub const INVALID_DEPTH: f32 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f32>,
    normal: Vec<[f32; 3]>,
    cost: Vec<f32>,
}

impl DepthMap {
    /// All pixels invalid, normals zero, cost zero.
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            depth: vec![INVALID_DEPTH; n],
            normal: vec![[0.0; 3]; n],
            cost: vec![0.0; n],
        }
    }

    pub fn from_planes(
        width: usize,
        height: usize,
        depth: Vec<f32>,
        normal: Vec<[f32; 3]>,
        cost: Vec<f32>,
    ) -> Option<Self> {
        let n = width * height;
        (depth.len() == n && normal.len() == n && cost.len() == n).then_some(Self {
            width,
            height,
            depth,
            normal,
            cost,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn depth(&self, idx: usize) -> f32 {
        self.depth[idx]
    }

    #[inline]
    pub fn normal(&self, idx: usize) -> [f32; 3] {
        self.normal[idx]
    }

    #[inline]
    pub fn cost(&self, idx: usize) -> f32 {
        self.cost[idx]
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        let d = self.depth[idx];
        d > 0.0 && d.is_finite()
    }

    pub fn depths(&self) -> &[f32] {
        &self.depth
    }

    pub fn normals(&self) -> &[[f32; 3]] {
        &self.normal
    }

    pub fn costs(&self) -> &[f32] {
        &self.cost
    }

    #[inline]
    pub fn set(&mut self, idx: usize, depth: f32, normal: [f32; 3], cost: f32) {
        self.depth[idx] = depth;
        self.normal[idx] = normal;
        self.cost[idx] = cost;
    }

    #[inline]
    pub fn invalidate(&mut self, idx: usize) {
        self.depth[idx] = INVALID_DEPTH;
    }

    /// Stored hypothesis widened to double precision. The normal is
    /// re-normalized in `f64` so it satisfies the unit-length invariant.
    pub fn hypothesis(&self, idx: usize) -> Option<PlaneHypothesis<f64>> {
        if !self.is_valid(idx) {
            return None;
        }
        widen(self.depth[idx], self.normal[idx])
    }

    pub fn valid_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_valid(i)).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.valid_count() as f64 / self.len() as f64
        }
    }
}

/// Rounds a hypothesis to storage precision.
pub fn narrow(hyp: &PlaneHypothesis<f64>) -> (f32, [f32; 3]) {
    let n = hyp.normal;
    (hyp.depth as f32, [n.x as f32, n.y as f32, n.z as f32])
}

/// Widens stored values to a double-precision hypothesis, re-normalizing the
/// normal so it satisfies the unit-length invariant.
pub fn widen(depth: f32, normal: [f32; 3]) -> Option<PlaneHypothesis<f64>> {
    let [x, y, z] = normal;
    let n = Vector3::new(x as f64, y as f64, z as f64);
    let len = n.norm();
    if !(len > 0.0) {
        return None;
    }
    PlaneHypothesis::new(depth as f64, n / len).ok()
}
