//! Scene loading and the on-disk formats: JSON manifest, PGM/PPM rasters,
//! `DMAP` depth maps and PLY point clouds.

pub mod dmap;
pub mod ply;
pub mod pnm;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Camera, GeometryError, Intrinsics, Pose};
use crate::raster::{GrayImage, LabelMap, RgbImage, UNLABELED};

pub use dmap::{read_depthmap, write_depthmap, DmapError};
pub use ply::{read_ply, write_ply, PlyError};
pub use pnm::{load_label_map, load_pgm, load_ppm, RasterError};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("view {view}: cannot load {path}: {source}")]
    Raster {
        view: u32,
        path: PathBuf,
        #[source]
        source: RasterError,
    },
    #[error("view {view}: {raster} raster is {found_w}x{found_h}, expected {width}x{height}")]
    DimensionMismatch {
        view: u32,
        raster: &'static str,
        width: usize,
        height: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("view {view}: label map contains class id {class} missing from the class table")]
    UnknownClass { view: u32, class: u8 },
    #[error("view {view}: {source}")]
    InvalidCamera {
        view: u32,
        #[source]
        source: GeometryError,
    },
    #[error("duplicate view id {0}")]
    DuplicateView(u32),
    #[error("invalid class table: {0}")]
    InvalidClassTable(String),
    #[error("sparse point {point}: {reason}")]
    InvalidPoint { point: usize, reason: String },
    #[error("scene needs at least {needed} views, found {found}")]
    TooFewViews { needed: usize, found: usize },
}

/// One class of the label catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u8,
    pub name: String,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
}

impl ClassTable {
    /// Ids and names must be unique; id 255 is reserved for unlabeled pixels.
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self, SceneError> {
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for e in &entries {
            if e.id == UNLABELED {
                return Err(SceneError::InvalidClassTable(format!(
                    "class {:?} uses the reserved id 255",
                    e.name
                )));
            }
            if !ids.insert(e.id) {
                return Err(SceneError::InvalidClassTable(format!(
                    "duplicate class id {}",
                    e.id
                )));
            }
            if !names.insert(e.name.as_str()) {
                return Err(SceneError::InvalidClassTable(format!(
                    "duplicate class name {:?}",
                    e.name
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn contains(&self, id: u8) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn get(&self, id: u8) -> Option<&ClassEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.get(id).map(|e| e.name.as_str())
    }
}

impl Default for ClassTable {
    /// The façade catalog: building, sky, obstacle, window, door.
    fn default() -> Self {
        let entry = |id, name: &str, rgb| ClassEntry {
            id,
            name: name.to_string(),
            rgb,
        };
        Self {
            entries: vec![
                entry(0, "building", [0, 0, 255]),
                entry(1, "sky", [255, 255, 0]),
                entry(2, "obstacle", [255, 0, 0]),
                entry(3, "window", [0, 255, 0]),
                entry(4, "door", [255, 0, 255]),
            ],
        }
    }
}

/// A calibrated, posed image with its pixel-aligned label map.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub id: u32,
    pub camera: Camera<f64>,
    pub image: GrayImage,
    pub color: Option<RgbImage>,
    pub labels: LabelMap,
}

impl View {
    pub fn new(
        id: u32,
        camera: Camera<f64>,
        image: GrayImage,
        color: Option<RgbImage>,
        labels: LabelMap,
    ) -> Result<Self, SceneError> {
        let view = Self {
            id,
            camera,
            image,
            color,
            labels,
        };
        view.check_dims()?;
        Ok(view)
    }

    fn check_dims(&self) -> Result<(), SceneError> {
        let (width, height) = self.image.dims();
        let mismatch = |raster, (found_w, found_h)| SceneError::DimensionMismatch {
            view: self.id,
            raster,
            width,
            height,
            found_w,
            found_h,
        };
        if self.labels.dims() != (width, height) {
            return Err(mismatch("label", self.labels.dims()));
        }
        if let Some(color) = &self.color {
            if color.dims() != (width, height) {
                return Err(mismatch("color", color.dims()));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.image.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Point color: the color raster when present, else gray replicated.
    pub fn rgb_at(&self, x: usize, y: usize) -> [u8; 3] {
        match &self.color {
            Some(c) => *c.get(x, y),
            None => {
                let g = pnm::quantize(*self.image.get(x, y));
                [g, g, g]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoint {
    pub xyz: Vector3<f64>,
    pub visible_in: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Sorted by ascending id.
    views: Vec<View>,
    points: Vec<SparsePoint>,
    classes: ClassTable,
    name: String,
}

impl Scene {
    /// Validates all cross-references. Views are reordered by id.
    pub fn new(
        mut views: Vec<View>,
        points: Vec<SparsePoint>,
        classes: ClassTable,
    ) -> Result<Self, SceneError> {
        views.sort_by_key(|v| v.id);
        for pair in views.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(SceneError::DuplicateView(pair[0].id));
            }
        }
        for view in &views {
            view.check_dims()?;
            let mut seen = [false; 256];
            for &l in view.labels.as_slice() {
                seen[l as usize] = true;
            }
            if let Some(class) = (0..=254u8).find(|&c| seen[c as usize] && !classes.contains(c)) {
                return Err(SceneError::UnknownClass {
                    view: view.id,
                    class,
                });
            }
        }
        let scene = Self {
            views,
            points,
            classes,
            name: String::from("scene"),
        };
        for (i, p) in scene.points.iter().enumerate() {
            scene.check_point(i, p)?;
        }
        Ok(scene)
    }

    fn check_point(&self, index: usize, point: &SparsePoint) -> Result<(), SceneError> {
        let invalid = |reason: String| SceneError::InvalidPoint {
            point: index,
            reason,
        };
        if point.visible_in.is_empty() {
            return Err(invalid("visible in no view".into()));
        }
        for &id in &point.visible_in {
            let view = self
                .view(id)
                .ok_or_else(|| invalid(format!("references unknown view {id}")))?;
            let inside = view
                .camera
                .project(&point.xyz)
                .is_ok_and(|(p, _)| p.in_bounds(view.width(), view.height()));
            if !inside {
                return Err(invalid(format!("does not project inside view {id}")));
            }
        }
        Ok(())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn points(&self) -> &[SparsePoint] {
        &self.points
    }

    pub fn classes(&self) -> &ClassTable {
        &self.classes
    }

    pub fn view(&self, id: u32) -> Option<&View> {
        self.views
            .binary_search_by_key(&id, |v| v.id)
            .ok()
            .map(|i| &self.views[i])
    }

    /// Mutable access for tests that perturb rasters; the caller keeps the
    /// dimensions and ids intact.
    pub fn view_mut(&mut self, id: u32) -> Option<&mut View> {
        self.views
            .binary_search_by_key(&id, |v| v.id)
            .ok()
            .map(|i| &mut self.views[i])
    }

    /// Sparse points listed as visible in `id`.
    pub fn points_in(&self, id: u32) -> impl Iterator<Item = &SparsePoint> {
        self.points
            .iter()
            .filter(move |p| p.visible_in.contains(&id))
    }
}

/// JSON manifest as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: Vec<ViewEntry>,
    #[serde(default)]
    pub points: Vec<PointEntry>,
    pub classes: Vec<ClassEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub id: u32,
    pub image: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    /// Row-major world→camera rotation.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "C")]
    pub center: [f64; 3],
}

impl ViewEntry {
    pub fn camera(&self) -> Result<Camera<f64>, GeometryError> {
        let k = Intrinsics::with_skew(self.fx, self.fy, self.cx, self.cy, self.skew)?;
        let r = Matrix3::from_row_slice(&self.rotation);
        let pose = Pose::new(r, Vector3::from(self.center))?;
        Ok(Camera::new(k, pose))
    }

    pub fn from_camera(id: u32, width: usize, height: usize, camera: &Camera<f64>) -> Self {
        let k = &camera.intrinsics;
        let r = camera.pose.rotation();
        let c = camera.pose.center();
        Self {
            id,
            image: format!("view_{id}.pgm"),
            labels: format!("labels_{id}.pgm"),
            color: None,
            width,
            height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            skew: k.skew,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            center: [c.x, c.y, c.z],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEntry {
    pub xyz: [f64; 3],
    pub views: Vec<u32>,
}

fn load_view(entry: &ViewEntry, base: &Path) -> Result<View, SceneError> {
    let raster_err = |path: PathBuf| {
        let view = entry.id;
        move |source| SceneError::Raster { view, path, source }
    };
    let camera = entry.camera().map_err(|source| SceneError::InvalidCamera {
        view: entry.id,
        source,
    })?;
    let image_path = base.join(&entry.image);
    let image = load_pgm(&image_path).map_err(raster_err(image_path.clone()))?;
    let labels_path = base.join(&entry.labels);
    let labels = load_label_map(&labels_path).map_err(raster_err(labels_path.clone()))?;
    let color = match &entry.color {
        Some(c) => {
            let path = base.join(c);
            Some(load_ppm(&path).map_err(raster_err(path.clone()))?)
        }
        None => None,
    };
    if image.dims() != (entry.width, entry.height) {
        return Err(SceneError::DimensionMismatch {
            view: entry.id,
            raster: "image",
            width: entry.width,
            height: entry.height,
            found_w: image.width(),
            found_h: image.height(),
        });
    }
    View::new(entry.id, camera, image, color, labels)
}

/// Builds a validated scene from a parsed manifest; raster paths resolve
/// against `base`.
pub fn scene_from_manifest(manifest: &Manifest, base: &Path) -> Result<Scene, SceneError> {
    if manifest.views.len() < 2 {
        return Err(SceneError::TooFewViews {
            needed: 2,
            found: manifest.views.len(),
        });
    }
    let classes = ClassTable::new(manifest.classes.clone())?;
    let views = manifest
        .views
        .par_iter()
        .map(|entry| load_view(entry, base))
        .collect::<Result<Vec<_>, _>>()?;
    let points = manifest
        .points
        .iter()
        .map(|p| SparsePoint {
            xyz: Vector3::from(p.xyz),
            visible_in: p.views.clone(),
        })
        .collect();
    Scene::new(views, points, classes)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, SceneError> {
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SceneError::Manifest {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> io::Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

/// Loads and validates the scene described by a JSON manifest.
pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    Ok(scene_from_manifest(&manifest, base)?.with_name(name))
}

/// Depth maps keyed by view id, as consumed by filtering and fusion.
pub type DepthMaps = BTreeMap<u32, crate::depth_map::DepthMap>;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;
    use tempfile::TempDir;

    fn write_fixture(dir: &Path, label_height: usize, rotation: [f64; 9]) -> PathBuf {
        let gray = GrayImage::from_fn(100, 100, |x, y| ((x * 3 + y * 5) % 256) as f32 / 255.0);
        pnm::write_pgm(&dir.join("a.pgm"), &gray).unwrap();
        pnm::write_pgm(&dir.join("b.pgm"), &gray).unwrap();
        pnm::write_label_map(&dir.join("la.pgm"), &LabelMap::filled(100, label_height, 0)).unwrap();
        pnm::write_label_map(&dir.join("lb.pgm"), &LabelMap::filled(100, 100, 3)).unwrap();
        let view = |id: u32, image: &str, labels: &str, r: [f64; 9], cx: f64| ViewEntry {
            id,
            image: image.into(),
            labels: labels.into(),
            color: None,
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            skew: 0.0,
            rotation: r,
            center: [cx, 0.0, 0.0],
        };
        let ident = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let manifest = Manifest {
            views: vec![
                view(0, "a.pgm", "la.pgm", rotation, 0.0),
                view(1, "b.pgm", "lb.pgm", ident, 1.0),
            ],
            points: vec![PointEntry {
                xyz: [0.5, 0.0, 10.0],
                views: vec![0, 1],
            }],
            classes: ClassTable::default().entries().to_vec(),
        };
        let path = dir.join("scene.json");
        write_manifest(&path, &manifest).unwrap();
        path
    }

    const IDENT: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

    #[test]
    fn minimal_two_view_manifest() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), 100, IDENT);
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.views().len(), 2);
        assert_eq!(scene.points().len(), 1);
        assert_eq!(scene.name(), "scene");
        assert_eq!(*scene.view(1).unwrap().labels.get(4, 4), 3);
        // Loading is idempotent.
        assert_eq!(load_scene(&path).unwrap(), scene);
    }

    #[test]
    fn label_dimension_mismatch_names_view() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), 99, IDENT);
        let err = load_scene(&path).unwrap_err();
        assert!(
            matches!(
                err,
                SceneError::DimensionMismatch {
                    view: 0,
                    raster: "label",
                    ..
                }
            ),
            "{err}"
        );
        assert!(err.to_string().contains("view 0"));
    }

    #[test]
    fn reflection_is_invalid_rotation() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(
            dir.path(),
            100,
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0],
        );
        let err = load_scene(&path).unwrap_err();
        assert!(matches!(
            err,
            SceneError::InvalidCamera {
                view: 0,
                source: GeometryError::InvalidRotation(_)
            }
        ));
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let dir = TempDir::new().unwrap();
        let r = [
            FRAC_1_SQRT_2,
            FRAC_1_SQRT_2,
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            1.0,
        ];
        let path = write_fixture(dir.path(), 100, r);
        assert!(matches!(
            load_scene(&path),
            Err(SceneError::InvalidCamera { view: 0, .. })
        ));
    }

    #[test]
    fn unknown_class_and_missing_file() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), 100, IDENT);
        pnm::write_label_map(&dir.path().join("lb.pgm"), &LabelMap::filled(100, 100, 9)).unwrap();
        assert!(matches!(
            load_scene(&path),
            Err(SceneError::UnknownClass { view: 1, class: 9 })
        ));
        // 255 is the reserved void label and always accepted.
        pnm::write_label_map(&dir.path().join("lb.pgm"), &LabelMap::filled(100, 100, 255)).unwrap();
        assert!(load_scene(&path).is_ok());

        fs::remove_file(dir.path().join("b.pgm")).unwrap();
        let err = load_scene(&path).unwrap_err();
        assert!(matches!(err, SceneError::Raster { view: 1, .. }));
        assert!(err.to_string().contains("b.pgm"));
        assert!(matches!(
            load_scene(&dir.path().join("nope.json")),
            Err(SceneError::Io { .. })
        ));
    }

    #[test]
    fn sparse_point_must_project_inside() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), 100, IDENT);
        let mut manifest = read_manifest(&path).unwrap();
        manifest.points[0].xyz = [100.0, 0.0, 10.0];
        assert!(matches!(
            scene_from_manifest(&manifest, dir.path()),
            Err(SceneError::InvalidPoint { point: 0, .. })
        ));
        manifest.points[0].xyz = [0.5, 0.0, 10.0];
        manifest.points[0].views = vec![0, 7];
        assert!(matches!(
            scene_from_manifest(&manifest, dir.path()),
            Err(SceneError::InvalidPoint { point: 0, .. })
        ));
    }

    #[test]
    fn class_table_rejects_duplicates_and_reserved() {
        let mut entries = ClassTable::default().entries().to_vec();
        entries.push(ClassEntry {
            id: 0,
            name: "x".into(),
            rgb: [0; 3],
        });
        assert!(ClassTable::new(entries).is_err());
        let reserved = vec![ClassEntry {
            id: 255,
            name: "void".into(),
            rgb: [0; 3],
        }];
        assert!(ClassTable::new(reserved).is_err());
        let table = ClassTable::default();
        assert_eq!(table.by_name("window").unwrap().id, 3);
        assert_eq!(table.name(1), Some("sky"));
    }
}
