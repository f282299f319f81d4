//! Synthetic scenes with analytically known depth and labels.
//!
//! A layout of textured rectangles is ray-cast from a rig of pinhole
//! cameras. Each view gets an 8-bit image, a label map (255 where no
//! rectangle is hit), a color image and an exact ground-truth depth map.
//! Sparse points are sampled from ray hits on a jittered grid and kept when
//! they are unoccluded in at least two views.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_map::DepthMap;
use crate::geometry::{Camera, GeometryError, Intrinsics, Pixel, Pose};
use crate::raster::{GrayImage, LabelMap, Raster, RgbImage, UNLABELED};
use crate::scene_io::{
    dmap, pnm, ClassEntry, ClassTable, DepthMaps, Manifest, PointEntry, Scene, SceneError,
    SparsePoint, View, ViewEntry,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("camera {0} sees no rectangle")]
    EmptyView(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    /// Alternating squares of side `period` (world units), values 0.2 / 0.8.
    Checkerboard { period: f64 },
    /// Smooth value noise on a lattice of spacing `period`.
    Noise { period: f64, seed: u64 },
    /// Untextured surface.
    Flat { value: f32 },
}

impl Texture {
    fn value(&self, a: f64, b: f64) -> f32 {
        match *self {
            Texture::Checkerboard { period } => {
                let parity =
                    ((a / period).floor() as i64 + (b / period).floor() as i64).rem_euclid(2);
                if parity == 0 {
                    0.2
                } else {
                    0.8
                }
            }
            Texture::Noise { period, seed } => {
                let (ga, gb) = (a / period, b / period);
                let (i, j) = (ga.floor(), gb.floor());
                let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
                let (fa, fb) = (smooth(ga - i), smooth(gb - j));
                let (i, j) = (i as i64, j as i64);
                let v00 = lattice(seed, i, j);
                let v10 = lattice(seed, i + 1, j);
                let v01 = lattice(seed, i, j + 1);
                let v11 = lattice(seed, i + 1, j + 1);
                let top = v00 + (v10 - v00) * fa;
                let bottom = v01 + (v11 - v01) * fa;
                (0.1 + 0.8 * (top + (bottom - top) * fb)) as f32
            }
            Texture::Flat { value } => value,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(i as u64 ^ splitmix(j as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// A textured parallelogram `origin + s·edge_u + t·edge_v`, `s, t ∈ [0, 1]`,
/// with orthogonal edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub origin: [f64; 3],
    pub edge_u: [f64; 3],
    pub edge_v: [f64; 3],
    pub class: u8,
    pub texture: Texture,
    /// Cut-outs `[s0, t0, s1, t1]` in edge-relative coordinates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<[f64; 4]>,
}

impl Rectangle {
    /// Axis-aligned rectangle at `z`, spanning `x0..x1`, `y0..y1`.
    pub fn at_depth(
        z: f64,
        (x0, x1): (f64, f64),
        (y0, y1): (f64, f64),
        class: u8,
        texture: Texture,
    ) -> Self {
        Self {
            origin: [x0, y0, z],
            edge_u: [x1 - x0, 0.0, 0.0],
            edge_v: [0.0, y1 - y0, 0.0],
            class,
            texture,
            holes: Vec::new(),
        }
    }

    fn normal(&self) -> Vector3<f64> {
        Vector3::from(self.edge_u)
            .cross(&Vector3::from(self.edge_v))
            .normalize()
    }

    /// Ray parameter and texture value of the hit, if any.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f32)> {
        let o = Vector3::from(self.origin);
        let (eu, ev) = (Vector3::from(self.edge_u), Vector3::from(self.edge_v));
        let n = eu.cross(&ev);
        let denom = n.dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = n.dot(&(o - origin)) / denom;
        if !(t > 0.0) {
            return None;
        }
        let rel = origin + dir * t - o;
        let s = rel.dot(&eu) / eu.norm_squared();
        let r = rel.dot(&ev) / ev.norm_squared();
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&r) {
            return None;
        }
        if self
            .holes
            .iter()
            .any(|h| s > h[0] && s < h[2] && r > h[1] && r < h[3])
        {
            return None;
        }
        Some((t, self.texture.value(s * eu.norm(), r * ev.norm())))
    }

    fn validate(&self, index: usize) -> Result<(), SynthError> {
        let (eu, ev) = (Vector3::from(self.edge_u), Vector3::from(self.edge_v));
        let bad = |m: String| Err(SynthError::InvalidSpec(format!("rectangle {index}: {m}")));
        if !(eu.norm() > 0.0 && ev.norm() > 0.0) {
            return bad("degenerate edges".into());
        }
        if eu.dot(&ev).abs() > 1e-9 * eu.norm() * ev.norm() {
            return bad("edges must be orthogonal".into());
        }
        match self.texture {
            Texture::Checkerboard { period } | Texture::Noise { period, .. } if !(period > 0.0) => {
                bad(format!("texture period must be positive, got {period}"))
            }
            _ => Ok(()),
        }
    }
}

/// Cameras spread on a horizontal arc around `look_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub count: usize,
    pub radius: f64,
    pub look_at: [f64; 3],
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    /// Angular span of the arc.
    pub arc_degrees: f64,
    /// Azimuth of the first camera; defaults to `-arc_degrees / 2`. Azimuth 0
    /// places the camera at `look_at - radius·z`, looking along +z.
    #[serde(default)]
    pub start_degrees: Option<f64>,
    #[serde(default)]
    pub elevation_degrees: f64,
}

impl CameraRig {
    pub fn cameras(&self) -> Result<Vec<Camera<f64>>, SynthError> {
        let k = Intrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )?;
        let target = Vector3::from(self.look_at);
        let start = self.start_degrees.unwrap_or(-self.arc_degrees / 2.0);
        let elev = self.elevation_degrees.to_radians();
        (0..self.count)
            .map(|i| {
                let frac = if self.count > 1 {
                    i as f64 / (self.count - 1) as f64
                } else {
                    0.0
                };
                let phi = (start + self.arc_degrees * frac).to_radians();
                let offset =
                    Vector3::new(phi.sin() * elev.cos(), -elev.sin(), -phi.cos() * elev.cos())
                        * self.radius;
                let pose = Pose::look_at(target + offset, target, Vector3::new(0.0, -1.0, 0.0))?;
                Ok(Camera::new(k, pose))
            })
            .collect()
    }
}

fn default_classes() -> Vec<ClassEntry> {
    ClassTable::default().entries().to_vec()
}

fn default_supersample() -> usize {
    3
}

fn default_footprint() -> f64 {
    1.0
}

fn default_sparse_points() -> usize {
    120
}

fn default_sparse_grid() -> usize {
    12
}

fn default_window() -> usize {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rectangles: Vec<Rectangle>,
    pub cameras: CameraRig,
    #[serde(default = "default_classes")]
    pub classes: Vec<ClassEntry>,
    #[serde(default)]
    pub seed: u64,
    /// Sub-samples per pixel axis for antialiased intensities.
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    /// Width in pixels of the box filter the sub-samples cover; values above
    /// one blur edges like an optical point-spread function.
    #[serde(default = "default_footprint")]
    pub footprint: f64,
    /// Maximum number of sparse points.
    #[serde(default = "default_sparse_points")]
    pub sparse_points: usize,
    /// Spacing in pixels of the jittered sampling grid.
    #[serde(default = "default_sparse_grid")]
    pub sparse_grid: usize,
    /// Match window the checkerboards are validated against.
    #[serde(default = "default_window")]
    pub match_window: usize,
}

impl SynthSpec {
    /// Checkerboard plane at depth 10 seen by two converging cameras; the
    /// first camera looks straight at it.
    pub fn fronto_plane(width: usize, height: usize) -> Self {
        Self {
            rectangles: vec![Rectangle::at_depth(
                10.0,
                (-8.0, 8.0),
                (-6.0, 6.0),
                0,
                Texture::Checkerboard { period: 0.3 },
            )],
            cameras: CameraRig {
                count: 2,
                radius: 10.0,
                look_at: [0.0, 0.0, 10.0],
                focal: 200.0 * width as f64 / 160.0,
                width,
                height,
                arc_degrees: 6.0,
                start_degrees: Some(0.0),
                elevation_degrees: 0.0,
            },
            classes: default_classes(),
            seed: 1,
            supersample: 4,
            footprint: 2.0,
            sparse_points: 120,
            sparse_grid: 12,
            match_window: 7,
        }
    }

    /// Same rig as [`Self::fronto_plane`], but the textured plane is tilted
    /// 45° about the vertical axis through the look-at point.
    pub fn slanted_plane(width: usize, height: usize) -> Self {
        let mut spec = Self::fronto_plane(width, height);
        let (c, s) = (45f64.to_radians().cos(), 45f64.to_radians().sin());
        let half = 8.0;
        spec.rectangles = vec![Rectangle {
            origin: [-half * c, -6.0, 10.0 - half * s],
            edge_u: [2.0 * half * c, 0.0, 2.0 * half * s],
            edge_v: [0.0, 12.0, 0.0],
            class: 0,
            texture: Texture::Checkerboard { period: 0.3 },
            holes: Vec::new(),
        }];
        spec
    }

    /// Façade: a noise-textured building wall at depth 10 with a window
    /// inset at depth 10.5 and an untextured sky behind the roofline. A flat
    /// cornice of sky intensity tops the wall, so match windows centered on
    /// sky pixels see no texture.
    pub fn facade(width: usize, height: usize) -> Self {
        let (building, sky, window) = (0, 1, 3);
        let sky_value = 0.85;
        let mut wall = Rectangle::at_depth(
            10.0,
            (-6.0, 6.0),
            (-1.3, 5.0),
            building,
            Texture::Noise {
                period: 0.12,
                seed: 11,
            },
        );
        // Hole for x in [-1, 1], y in [-0.5, 1.2].
        wall.holes = vec![[5.0 / 12.0, 0.8 / 6.3, 7.0 / 12.0, 2.5 / 6.3]];
        let cornice = Rectangle::at_depth(
            10.0,
            (-6.0, 6.0),
            (-1.8, -1.3),
            building,
            Texture::Flat { value: sky_value },
        );
        let pane = Rectangle::at_depth(
            10.5,
            (-1.4, 1.4),
            (-0.9, 1.6),
            window,
            Texture::Noise {
                period: 0.1,
                seed: 23,
            },
        );
        let backdrop = Rectangle::at_depth(
            30.0,
            (-40.0, 40.0),
            (-30.0, 30.0),
            sky,
            Texture::Flat { value: sky_value },
        );
        Self {
            rectangles: vec![wall, cornice, pane, backdrop],
            cameras: CameraRig {
                count: 4,
                radius: 10.0,
                look_at: [0.0, 0.0, 10.0],
                focal: 200.0 * width as f64 / 160.0,
                width,
                height,
                arc_degrees: 24.0,
                start_degrees: None,
                elevation_degrees: 0.0,
            },
            classes: default_classes(),
            seed: 5,
            supersample: 3,
            footprint: 1.0,
            sparse_points: 150,
            sparse_grid: 10,
            match_window: 7,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.rectangles.is_empty() {
            return bad("layout has no rectangles".into());
        }
        let table = ClassTable::new(self.classes.clone())?;
        for (i, r) in self.rectangles.iter().enumerate() {
            r.validate(i)?;
            if !table.contains(r.class) {
                return bad(format!(
                    "rectangle {i}: class {} not in the class table",
                    r.class
                ));
            }
        }
        let rig = &self.cameras;
        if rig.count == 0 || rig.width < 2 || rig.height < 2 {
            return bad("camera rig needs at least one camera of size >= 2x2".into());
        }
        if !(rig.radius > 0.0 && rig.focal > 0.0) {
            return bad("camera radius and focal length must be positive".into());
        }
        if self.supersample == 0 || self.sparse_grid == 0 {
            return bad("supersample and sparse_grid must be positive".into());
        }
        if !(self.footprint > 0.0 && self.footprint <= 4.0) {
            return bad(format!(
                "footprint must be in (0, 4], got {}",
                self.footprint
            ));
        }
        // Squares of a checkerboard must be resolvable yet never fill the
        // match window, judged at the look-at distance.
        let window = self.match_window as f64;
        for (i, r) in self.rectangles.iter().enumerate() {
            if let Texture::Checkerboard { period } = r.texture {
                let px = rig.focal * period / rig.radius;
                if !(2.0..=window).contains(&px) {
                    return bad(format!(
                        "rectangle {i}: checkerboard squares are {px:.2} px, need 2..={window}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Nearest rectangle hit along a ray: (ray parameter, rectangle index, texture value).
fn cast(
    rects: &[Rectangle],
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
) -> Option<(f64, usize, f32)> {
    rects
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.intersect(origin, dir).map(|(t, v)| (t, i, v)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
}

/// World-frame ray through a pixel whose camera-frame z component is one, so
/// the ray parameter of a hit is its depth.
fn pixel_ray(camera: &Camera<f64>, u: f64, v: f64) -> Vector3<f64> {
    let ray = camera.intrinsics.ray(&Pixel::new(u, v));
    camera.pose.rotation().tr_mul(&ray)
}

/// One rendered view with its exact geometry.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub view: View,
    /// Double-precision depth per pixel; 0 where nothing is hit.
    pub depth: Raster<f64>,
    /// Index of the rectangle hit at the pixel center.
    pub surface: Raster<Option<usize>>,
    pub ground_truth: DepthMap,
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub scene: Scene,
    pub rendered: Vec<RenderedView>,
    pub spec: SynthSpec,
}

impl SynthScene {
    pub fn ground_truth(&self) -> DepthMaps {
        self.rendered
            .iter()
            .map(|r| (r.view.id, r.ground_truth.clone()))
            .collect()
    }

    pub fn rendered(&self, id: u32) -> Option<&RenderedView> {
        self.rendered.iter().find(|r| r.view.id == id)
    }
}

fn render_view(
    spec: &SynthSpec,
    id: u32,
    camera: Camera<f64>,
    table: &ClassTable,
) -> Result<RenderedView, SynthError> {
    let (w, h) = (spec.cameras.width, spec.cameras.height);
    let origin = *camera.pose.center();
    let ss = spec.supersample;
    let mut image = GrayImage::filled(w, h, 0.0);
    let mut color = RgbImage::filled(w, h, [0, 0, 0]);
    let mut labels = LabelMap::filled(w, h, UNLABELED);
    let mut depth = Raster::filled(w, h, 0.0f64);
    let mut surface = Raster::filled(w, h, None);
    let mut gt = DepthMap::new(w, h);
    let mut any_hit = false;
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for sy in 0..ss {
                for sx in 0..ss {
                    let du = ((sx as f64 + 0.5) / ss as f64 - 0.5) * spec.footprint;
                    let dv = ((sy as f64 + 0.5) / ss as f64 - 0.5) * spec.footprint;
                    let dir = pixel_ray(&camera, x as f64 + du, y as f64 + dv);
                    if let Some((_, _, v)) = cast(&spec.rectangles, &origin, &dir) {
                        acc += v as f64;
                    }
                }
            }
            let gray = pnm::quantize((acc / (ss * ss) as f64) as f32);
            *image.get_mut(x, y) = gray as f32 / 255.0;

            let dir = pixel_ray(&camera, x as f64, y as f64);
            if let Some((t, rect, _)) = cast(&spec.rectangles, &origin, &dir) {
                any_hit = true;
                let r = &spec.rectangles[rect];
                *labels.get_mut(x, y) = r.class;
                *depth.get_mut(x, y) = t;
                *surface.get_mut(x, y) = Some(rect);
                let mut n = camera.pose.rotation() * r.normal();
                let ray = camera.intrinsics.ray(&Pixel::new(x as f64, y as f64));
                if n.dot(&ray) > 0.0 {
                    n = -n;
                }
                gt.set(
                    gt.index(x, y),
                    t as f32,
                    [n.x as f32, n.y as f32, n.z as f32],
                    0.0,
                );
                let rgb = table.get(r.class).map_or([255; 3], |e| e.rgb);
                let shade = 0.35 + 0.65 * gray as f64 / 255.0;
                *color.get_mut(x, y) = rgb.map(|c| (c as f64 * shade).round() as u8);
            }
        }
    }
    if !any_hit {
        return Err(SynthError::EmptyView(id));
    }
    let view = View::new(id, camera, image, Some(color), labels)?;
    Ok(RenderedView {
        view,
        depth,
        surface,
        ground_truth: gt,
    })
}

fn sample_sparse_points(spec: &SynthSpec, cameras: &[Camera<f64>]) -> Vec<SparsePoint> {
    let (w, h) = (spec.cameras.width, spec.cameras.height);
    let grid = spec.sparse_grid;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::new();
    for camera in cameras {
        for gy in (0..h).step_by(grid) {
            for gx in (0..w).step_by(grid) {
                let u = (gx as f64 + rng.random_range(0.0..grid as f64)).min(w as f64 - 1.0);
                let v = (gy as f64 + rng.random_range(0.0..grid as f64)).min(h as f64 - 1.0);
                let origin = *camera.pose.center();
                let Some((t, rect, _)) = cast(&spec.rectangles, &origin, &pixel_ray(camera, u, v))
                else {
                    continue;
                };
                // Flat surfaces yield no SfM keypoints.
                if matches!(spec.rectangles[rect].texture, Texture::Flat { .. }) {
                    continue;
                }
                let xyz = origin + pixel_ray(camera, u, v) * t;
                let visible_in: Vec<u32> = cameras
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| unoccluded(spec, c, &xyz, w, h))
                    .map(|(i, _)| i as u32)
                    .collect();
                if visible_in.len() >= 2 {
                    points.push(SparsePoint { xyz, visible_in });
                }
            }
        }
    }
    if points.len() > spec.sparse_points {
        // Even thinning keeps the spatial spread.
        let n = points.len();
        let keep = spec.sparse_points;
        points = (0..keep).map(|i| points[i * n / keep].clone()).collect();
    }
    points
}

fn unoccluded(
    spec: &SynthSpec,
    camera: &Camera<f64>,
    xyz: &Vector3<f64>,
    w: usize,
    h: usize,
) -> bool {
    let Ok((p, depth)) = camera.project(xyz) else {
        return false;
    };
    if !p.in_bounds(w, h) {
        return false;
    }
    let origin = *camera.pose.center();
    match cast(&spec.rectangles, &origin, &pixel_ray(camera, p.u, p.v)) {
        Some((t, _, _)) => (t - depth).abs() <= 1e-6 * depth,
        None => false,
    }
}

/// Renders the scene in memory.
pub fn render(spec: &SynthSpec) -> Result<SynthScene, SynthError> {
    spec.validate()?;
    let table = ClassTable::new(spec.classes.clone())?;
    let cameras = spec.cameras.cameras()?;
    let rendered = cameras
        .par_iter()
        .enumerate()
        .map(|(i, c)| render_view(spec, i as u32, *c, &table))
        .collect::<Result<Vec<_>, _>>()?;
    let points = sample_sparse_points(spec, &cameras);
    let views = rendered.iter().map(|r| r.view.clone()).collect();
    let scene = Scene::new(views, points, table)?;
    Ok(SynthScene {
        scene,
        rendered,
        spec: spec.clone(),
    })
}

type Writer<'a> = Box<dyn Fn(&Path) -> io::Result<()> + 'a>;

/// Manifest file name written by [`generate_scene`].
pub const MANIFEST_NAME: &str = "scene.json";

/// Renders the scene and writes manifest, rasters and ground-truth depth
/// maps (`gt_<id>.dmap`) into `out_dir`. Returns the manifest path.
pub fn generate_scene(
    spec: &SynthSpec,
    out_dir: &Path,
) -> Result<(PathBuf, SynthScene), SynthError> {
    let synth = render(spec)?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut views = Vec::new();
    for r in &synth.rendered {
        let v = &r.view;
        let mut entry = ViewEntry::from_camera(v.id, v.width(), v.height(), &v.camera);
        entry.color = Some(format!("color_{}.ppm", v.id));
        let files: [(&str, Writer); 4] = [
            (&entry.image, Box::new(|p| pnm::write_pgm(p, &v.image))),
            (
                &entry.labels,
                Box::new(|p| pnm::write_label_map(p, &v.labels)),
            ),
            (
                entry.color.as_deref().expect("set above"),
                Box::new(|p| pnm::write_ppm(p, v.color.as_ref().expect("rendered with color"))),
            ),
            (
                &format!("gt_{}.dmap", v.id),
                Box::new(|p| dmap::write_depthmap(p, &r.ground_truth)),
            ),
        ];
        for (name, write) in files {
            let path = out_dir.join(name);
            write(&path).map_err(io_err(&path))?;
        }
        views.push(entry);
    }
    let manifest = Manifest {
        views,
        points: synth
            .scene
            .points()
            .iter()
            .map(|p| PointEntry {
                xyz: [p.xyz.x, p.xyz.y, p.xyz.z],
                views: p.visible_in.clone(),
            })
            .collect(),
        classes: spec.classes.clone(),
    };
    let path = out_dir.join(MANIFEST_NAME);
    crate::scene_io::write_manifest(&path, &manifest).map_err(io_err(&path))?;
    Ok((path, synth))
}

/// Ground-truth depth maps keyed by view id, as written by [`generate_scene`].
pub fn read_ground_truth(
    dir: &Path,
    ids: impl IntoIterator<Item = u32>,
) -> Result<DepthMaps, dmap::DmapError> {
    ids.into_iter()
        .map(|id| Ok((id, dmap::read_depthmap(&dir.join(format!("gt_{id}.dmap")))?)))
        .collect::<Result<BTreeMap<_, _>, _>>()
}
