//! Stereo pair selection from viewing-angle and baseline criteria.
//!
//! A pair is eligible when the angle between the principal axes lies in
//! `[theta_min, theta_max]` and the distance between the optical centers lies
//! in `[low · d̄, high · d̄]`, where `d̄` is the lower median of the distances
//! over all angle-passing pairs. Eligible targets are ranked by the number of
//! shared sparse points.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::geometry::view_angle;
use crate::scene_io::Scene;

/// Slack on the angle window so that constructed boundary angles (5°, 60°)
/// are not lost to rounding in the angle computation.
pub const ANGLE_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairParams {
    pub theta_min: f64,
    pub theta_max: f64,
    pub baseline_low_factor: f64,
    pub baseline_high_factor: f64,
    pub max_targets: usize,
}

impl Default for PairParams {
    fn default() -> Self {
        Self {
            theta_min: 5.0,
            theta_max: 60.0,
            baseline_low_factor: 0.05,
            baseline_high_factor: 2.0,
            max_targets: 4,
        }
    }
}

impl PairParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 <= self.theta_min && self.theta_min < self.theta_max && self.theta_max <= 180.0) {
            return Err(format!(
                "angle window must satisfy 0 <= theta_min < theta_max <= 180 (got {}..{})",
                self.theta_min, self.theta_max
            ));
        }
        if !(0.0 < self.baseline_low_factor && self.baseline_low_factor < self.baseline_high_factor)
        {
            return Err(format!(
                "baseline factors must satisfy 0 < low < high (got {}, {})",
                self.baseline_low_factor, self.baseline_high_factor
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub target: u32,
    pub shared: usize,
    pub angle_deg: f64,
    pub baseline: f64,
}

/// Ranked targets per reference view. Every view of the scene has an entry,
/// possibly empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: BTreeMap<u32, Vec<PairEntry>>,
}

impl PairSet {
    pub fn targets(&self, reference: u32) -> &[PairEntry] {
        self.pairs.get(&reference).map_or(&[], Vec::as_slice)
    }

    pub fn target_ids(&self, reference: u32) -> Vec<u32> {
        self.targets(reference).iter().map(|e| e.target).collect()
    }

    /// Number of (reference, target) entries.
    pub fn len(&self) -> usize {
        self.pairs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// References with at least one target, ascending.
    pub fn references(&self) -> impl Iterator<Item = u32> + '_ {
        self.pairs
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(&r, _)| r)
    }
}

impl fmt::Display for PairSet {
    /// One `ref target shared angle_deg baseline` line per pair.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (reference, entries) in &self.pairs {
            for e in entries {
                writeln!(
                    f,
                    "{} {} {} {:.6} {:.6}",
                    reference, e.target, e.shared, e.angle_deg, e.baseline
                )?;
            }
        }
        Ok(())
    }
}

/// Lower median: element `⌊(n−1)/2⌋` of the sorted values.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

struct Candidate {
    i: usize,
    j: usize,
    angle: f64,
    baseline: f64,
}

pub fn select_pairs(scene: &Scene, params: &PairParams) -> PairSet {
    let views = scene.views();
    let mut set = PairSet {
        pairs: views.iter().map(|v| (v.id, Vec::new())).collect(),
    };
    if views.len() < 2 {
        return set;
    }

    let visibility: Vec<BTreeSet<usize>> = views
        .iter()
        .map(|v| {
            scene
                .points()
                .iter()
                .enumerate()
                .filter(|(_, p)| p.visible_in.contains(&v.id))
                .map(|(k, _)| k)
                .collect()
        })
        .collect();

    let mut candidates = Vec::new();
    for i in 0..views.len() {
        for j in i + 1..views.len() {
            let (pi, pj) = (&views[i].camera.pose, &views[j].camera.pose);
            let angle = view_angle(pi, pj);
            if angle < params.theta_min - ANGLE_EPS_DEG || angle > params.theta_max + ANGLE_EPS_DEG
            {
                continue;
            }
            let baseline = (pi.center() - pj.center()).norm();
            candidates.push(Candidate {
                i,
                j,
                angle,
                baseline,
            });
        }
    }

    let baselines: Vec<f64> = candidates.iter().map(|c| c.baseline).collect();
    if let Some(median) = lower_median(&baselines) {
        let lo = params.baseline_low_factor * median;
        let hi = params.baseline_high_factor * median;
        for c in &candidates {
            if c.baseline < lo || c.baseline > hi {
                continue;
            }
            let shared = visibility[c.i].intersection(&visibility[c.j]).count();
            if shared == 0 {
                continue;
            }
            for (r, t) in [(c.i, c.j), (c.j, c.i)] {
                set.pairs
                    .get_mut(&views[r].id)
                    .expect("all views keyed")
                    .push(PairEntry {
                        target: views[t].id,
                        shared,
                        angle_deg: c.angle,
                        baseline: c.baseline,
                    });
            }
        }
    }

    for entries in set.pairs.values_mut() {
        entries.sort_by(|a, b| {
            b.shared
                .cmp(&a.shared)
                .then(a.angle_deg.total_cmp(&b.angle_deg))
                .then(a.target.cmp(&b.target))
        });
        entries.truncate(params.max_targets);
    }
    if set.is_empty() {
        warn!("no stereo pair satisfies the angle and baseline criteria");
    }
    set
}
