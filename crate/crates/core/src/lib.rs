//! Semantic multi-view stereo.
//!
//! Dense reconstruction from posed images that carry per-pixel class labels:
//! stereo pair selection, PatchMatch depth estimation with slanted support
//! planes, multi-view depth filtering and class-aware fusion into labeled
//! point clouds. The [`synth`] module renders scenes with exact ground truth.
//!
//! Geometry is generic over `f32`/`f64`; the aliases below name both.

// `!(x > 0.0)` style checks reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod depth_filter;
pub mod depth_map;
pub mod geometry;
pub mod pair_select;
pub mod patchmatch;
pub mod raster;
pub mod scene_io;
pub mod semantic_fusion;
pub mod synth;

pub use depth_filter::{filter_all, filter_depth_map, FilterError, FilterParams};
pub use depth_map::DepthMap;
pub use geometry::{
    backproject_world, plane_homography, project, view_angle, Camera, GeometryError, Intrinsics,
    Pixel, PlaneHypothesis, Pose, Real,
};
pub use pair_select::{select_pairs, PairEntry, PairParams, PairSet};
pub use patchmatch::{
    compute_depth_map, depth_range, init_depth_map, plane_cost, propagate_and_refine, zncc,
    MatchError, MatchParams, PatchMatcher,
};
pub use raster::{GrayImage, LabelMap, Raster, RgbImage, UNLABELED};
pub use scene_io::{load_scene, ClassTable, DepthMaps, Scene, SceneError, SparsePoint, View};
pub use semantic_fusion::{fuse, split_by_class, FusedCloud, FusedPoint, SemanticMode};
pub use synth::{generate_scene, render, SynthSpec};

pub type Intrinsics32 = Intrinsics<f32>;
pub type Intrinsics64 = Intrinsics<f64>;
pub type Pose32 = Pose<f32>;
pub type Pose64 = Pose<f64>;
pub type Camera32 = Camera<f32>;
pub type Camera64 = Camera<f64>;
pub type Pixel32 = Pixel<f32>;
pub type Pixel64 = Pixel<f64>;
pub type PlaneHypothesis32 = PlaneHypothesis<f32>;
pub type PlaneHypothesis64 = PlaneHypothesis<f64>;
