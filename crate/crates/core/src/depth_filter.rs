//! Multi-view depth coherence filtering.
//!
//! A reference depth survives when at least `k` neighbor depth maps agree
//! with it: the 3D point is projected into each neighbor and compared with
//! the neighbor's stored depth at the nearest pixel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_map::DepthMap;
use crate::geometry::Pixel;
use crate::pair_select::PairSet;
use crate::scene_io::{DepthMaps, Scene, View};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("view {view}: depth map is {found_w}x{found_h}, view is {width}x{height}")]
    DimensionMismatch {
        view: u32,
        width: usize,
        height: usize,
        found_w: usize,
        found_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Minimum number of confirming neighbor views.
    pub k: usize,
    /// Relative depth tolerance, measured against the neighbor's depth.
    pub tau: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { k: 2, tau: 0.01 }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.k < 1 {
            return Err(FilterError::InvalidArgument("k must be >= 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(FilterError::InvalidArgument("tau must be > 0".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_dims(view: &View, map: &DepthMap) -> Result<(), FilterError> {
    if map.dims() == view.image.dims() {
        Ok(())
    } else {
        Err(FilterError::DimensionMismatch {
            view: view.id,
            width: view.width(),
            height: view.height(),
            found_w: map.width(),
            found_h: map.height(),
        })
    }
}

/// The neighbor pixel confirming the reference depth at `(x, y)`, if any.
#[inline]
pub fn confirming_pixel(
    reference: &View,
    (x, y): (usize, usize),
    depth: f32,
    neighbor: &View,
    neighbor_map: &DepthMap,
    tau: f64,
) -> Option<(usize, usize)> {
    let pixel = Pixel::new(x as f64, y as f64);
    let world = reference.camera.backproject(&pixel, depth as f64).ok()?;
    let (q, projected) = neighbor.camera.project(&world).ok()?;
    let (qx, qy) = neighbor.labels.nearest(q.u, q.v)?;
    let idx = neighbor_map.index(qx, qy);
    if !neighbor_map.is_valid(idx) {
        return None;
    }
    let stored = neighbor_map.depth(idx) as f64;
    ((projected - stored).abs() / stored <= tau).then_some((qx, qy))
}

/// Invalidates reference pixels confirmed by fewer than `k` neighbors.
/// Costs and normals of surviving pixels are untouched.
pub fn filter_depth_map(
    map: &DepthMap,
    reference: &View,
    neighbors: &[(&View, &DepthMap)],
    params: &FilterParams,
) -> Result<DepthMap, FilterError> {
    params.validate()?;
    check_dims(reference, map)?;
    for (view, nmap) in neighbors {
        check_dims(view, nmap)?;
    }
    let mut out = map.clone();
    let (w, h) = map.dims();
    for y in 0..h {
        for x in 0..w {
            let idx = map.index(x, y);
            if !map.is_valid(idx) {
                continue;
            }
            let depth = map.depth(idx);
            let confirmations = neighbors
                .iter()
                .filter(|(view, nmap)| {
                    confirming_pixel(reference, (x, y), depth, view, nmap, params.tau).is_some()
                })
                .count();
            if confirmations < params.k {
                out.invalidate(idx);
            }
        }
    }
    Ok(out)
}

/// Filters every map against the unfiltered maps of its selected targets.
/// All reads go to `maps`, so the result does not depend on order.
pub fn filter_all(
    scene: &Scene,
    pairs: &PairSet,
    maps: &DepthMaps,
    params: &FilterParams,
) -> Result<DepthMaps, FilterError> {
    params.validate()?;
    maps.par_iter()
        .map(|(&id, map)| {
            let reference = scene
                .view(id)
                .ok_or_else(|| FilterError::InvalidArgument(format!("unknown view {id}")))?;
            let neighbors: Vec<(&View, &DepthMap)> = pairs
                .target_ids(id)
                .into_iter()
                .filter_map(|t| Some((scene.view(t)?, maps.get(&t)?)))
                .collect();
            Ok((id, filter_depth_map(map, reference, &neighbors, params)?))
        })
        .collect()
}
