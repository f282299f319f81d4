//! Depth-map fusion with semantic constraints.
//!
//! Reference views are visited in ascending id and their pixels in row-major
//! order. A valid, unconsumed pixel whose depth is confirmed by at least `k`
//! neighbor depth maps marks itself and every confirming neighbor pixel
//! consumed, so the same surface is not emitted twice. It becomes a 3D point
//! when it also passes the semantic tests:
//!
//! - its label must belong to the class filter, when one is given;
//! - in strict mode, a neighbor only counts when its label at the
//!   confirming pixel equals the reference label, and `k` such neighbors
//!   are needed.
//!
//! Consumption depends on geometry alone. Every semantic mode therefore
//! sees the same sequence of candidate pixels, which makes a strict cloud a
//! subset of the non-strict one and a single-class cloud exactly the
//! matching part of the unfiltered cloud.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_filter::{check_dims, confirming_pixel, FilterError, FilterParams};
use crate::depth_map::DepthMap;
use crate::geometry::Pixel;
use crate::pair_select::PairSet;
use crate::raster::UNLABELED;
use crate::scene_io::{ClassTable, DepthMaps, Scene, View};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticMode {
    /// Classes to keep; `None` keeps every labeled pixel.
    pub class_filter: Option<BTreeSet<u8>>,
    /// Require label agreement between the reference and confirming pixels.
    pub cross_view_strict: bool,
}

impl SemanticMode {
    pub fn validate(&self, classes: &ClassTable) -> Result<(), FusionError> {
        if let Some(filter) = &self.class_filter {
            if let Some(bad) = filter.iter().find(|&&c| !classes.contains(c)) {
                return Err(FusionError::InvalidArgument(format!(
                    "class id {bad} is not in the class table"
                )));
            }
        }
        Ok(())
    }

    /// Resolves class names through the table.
    pub fn from_names(
        names: &[impl AsRef<str>],
        strict: bool,
        classes: &ClassTable,
    ) -> Result<Self, FusionError> {
        let ids = names
            .iter()
            .map(|n| {
                classes.by_name(n.as_ref()).map(|e| e.id).ok_or_else(|| {
                    FusionError::InvalidArgument(format!("unknown class {:?}", n.as_ref()))
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            class_filter: Some(ids),
            cross_view_strict: strict,
        })
    }

    #[inline]
    pub fn admits(&self, label: u8) -> bool {
        label != UNLABELED
            && self
                .class_filter
                .as_ref()
                .is_none_or(|f| f.contains(&label))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PixelRef {
    pub view: u32,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedPoint {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub label: u8,
    /// Views merged into this point: the reference plus its confirmations.
    pub support: u32,
    /// Reference pixel the point was emitted from.
    pub origin: PixelRef,
    /// Confirming neighbor pixels.
    pub contributors: Vec<PixelRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scene: String,
    pub filter: Option<FilterParams>,
    pub mode: SemanticMode,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedCloud {
    pub points: Vec<FusedPoint>,
    pub provenance: Provenance,
}

impl FusedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count_by_label(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.points {
            *counts.entry(p.label).or_default() += 1;
        }
        counts
    }
}

struct Consumed {
    masks: BTreeMap<u32, Vec<bool>>,
}

impl Consumed {
    fn is_set(&self, view: u32, idx: usize) -> bool {
        self.masks.get(&view).is_some_and(|m| m[idx])
    }

    fn set(&mut self, view: u32, idx: usize) {
        if let Some(m) = self.masks.get_mut(&view) {
            m[idx] = true;
        }
    }
}

/// Fuses depth maps into one labeled cloud.
///
/// Neighbors of each reference are its targets in `pairs` that have a depth
/// map. The geometric test is the same one [`crate::depth_filter`] applies.
pub fn fuse(
    scene: &Scene,
    maps: &DepthMaps,
    pairs: &PairSet,
    params: &FilterParams,
    mode: &SemanticMode,
) -> Result<FusedCloud, FusionError> {
    params.validate()?;
    mode.validate(scene.classes())?;
    let mut views: BTreeMap<u32, &View> = BTreeMap::new();
    for (&id, map) in maps {
        let view = scene.view(id).ok_or_else(|| {
            FusionError::InvalidArgument(format!("depth map for unknown view {id}"))
        })?;
        check_dims(view, map)?;
        views.insert(id, view);
    }
    let mut consumed = Consumed {
        masks: maps
            .iter()
            .map(|(&id, m)| (id, vec![false; m.len()]))
            .collect(),
    };

    let mut points = Vec::new();
    let mut confirmations: Vec<PixelRef> = Vec::new();
    for (&ref_id, map) in maps {
        let reference = views[&ref_id];
        let neighbors: Vec<(&View, &DepthMap)> = pairs
            .target_ids(ref_id)
            .into_iter()
            .filter_map(|t| Some((*views.get(&t)?, maps.get(&t)?)))
            .collect();
        let (w, h) = map.dims();
        for y in 0..h {
            for x in 0..w {
                let idx = map.index(x, y);
                if !map.is_valid(idx) || consumed.is_set(ref_id, idx) {
                    continue;
                }
                let depth = map.depth(idx);
                confirmations.clear();
                for (nview, nmap) in &neighbors {
                    if let Some((qx, qy)) =
                        confirming_pixel(reference, (x, y), depth, nview, nmap, params.tau)
                    {
                        confirmations.push(PixelRef {
                            view: nview.id,
                            x: qx,
                            y: qy,
                        });
                    }
                }
                if confirmations.len() < params.k {
                    continue;
                }
                consumed.set(ref_id, idx);
                for c in &confirmations {
                    consumed.set(c.view, c.y * maps[&c.view].width() + c.x);
                }
                let label = *reference.labels.get(x, y);
                if !mode.admits(label) {
                    continue;
                }
                if mode.cross_view_strict {
                    confirmations.retain(|c| *views[&c.view].labels.get(c.x, c.y) == label);
                    if confirmations.len() < params.k {
                        continue;
                    }
                }
                let position = reference
                    .camera
                    .backproject(&Pixel::new(x as f64, y as f64), depth as f64)
                    .expect("valid depth is positive");
                points.push(FusedPoint {
                    position,
                    color: reference.rgb_at(x, y),
                    label,
                    support: 1 + confirmations.len() as u32,
                    origin: PixelRef { view: ref_id, x, y },
                    contributors: confirmations.clone(),
                });
            }
        }
    }
    Ok(FusedCloud {
        points,
        provenance: Provenance {
            scene: scene.name().to_string(),
            filter: Some(*params),
            mode: mode.clone(),
        },
    })
}

/// Partitions a cloud by label, keeping emission order inside each class.
/// Every class of the table gets an entry, empty when absent.
pub fn split_by_class(cloud: &FusedCloud, classes: &ClassTable) -> BTreeMap<u8, FusedCloud> {
    let mut parts: BTreeMap<u8, FusedCloud> = classes
        .entries()
        .iter()
        .map(|e| {
            let mut mode = cloud.provenance.mode.clone();
            mode.class_filter = Some(BTreeSet::from([e.id]));
            let part = FusedCloud {
                points: Vec::new(),
                provenance: Provenance {
                    mode,
                    ..cloud.provenance.clone()
                },
            };
            (e.id, part)
        })
        .collect();
    for p in &cloud.points {
        parts
            .entry(p.label)
            .or_insert_with(|| FusedCloud {
                points: Vec::new(),
                provenance: cloud.provenance.clone(),
            })
            .points
            .push(p.clone());
    }
    parts
}
