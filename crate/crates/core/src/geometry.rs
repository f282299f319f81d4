//! Pinhole cameras, back/forward projection and plane-induced homographies.
//!
//! Everything here is generic over the scalar type so the same code runs in
//! `f32` and `f64`. The pipeline itself instantiates it with `f64`; the
//! round-trip tolerances only hold in double precision.
//!
//! Conventions:
//! - pixel centers sit at integer coordinates, `p = (u, v, 1)`;
//! - a [`Pose`] stores the world→camera rotation `R` and the camera center
//!   `C`, so `X_cam = R (X_world - C)`;
//! - depth is the camera-frame z coordinate, not the ray length.

use nalgebra::{Matrix3, RealField, Vector3};
use num_traits::{FromPrimitive, ToPrimitive};
use thiserror::Error;

/// Scalar types the geometry can be evaluated in.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Allowed deviation of `RᵀR` from identity and of `det R` from one.
    const ROTATION_TOL: f64;
    /// Allowed deviation of a plane normal from unit length.
    const NORMAL_TOL: f64;
    /// Relative threshold under which a plane is treated as passing through
    /// a camera center.
    const DEGENERACY_TOL: f64;
}

impl Real for f32 {
    const ROTATION_TOL: f64 = 1e-5;
    const NORMAL_TOL: f64 = 1e-5;
    const DEGENERACY_TOL: f64 = 1e-6;
}

impl Real for f64 {
    const ROTATION_TOL: f64 = 1e-9;
    const NORMAL_TOL: f64 = 1e-9;
    const DEGENERACY_TOL: f64 = 1e-12;
}

/// Converts an `f64` constant into `T`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is at or behind the camera plane (depth {0})")]
    BehindCamera(f64),
    #[error("degenerate homography: plane passes through a camera center")]
    DegenerateHomography,
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
}

/// Pinhole intrinsics, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics<T: Real = f64> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub skew: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Result<Self, GeometryError> {
        Self::with_skew(fx, fy, cx, cy, T::zero())
    }

    pub fn with_skew(fx: T, fy: T, cx: T, cy: T, skew: T) -> Result<Self, GeometryError> {
        let finite = [fx, fy, cx, cy, skew].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidArgument(
                "intrinsics must be finite".into(),
            ));
        }
        if fx <= T::zero() || fy <= T::zero() {
            return Err(GeometryError::InvalidArgument(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
    }

    pub fn identity() -> Self {
        Self {
            fx: T::one(),
            fy: T::one(),
            cx: T::zero(),
            cy: T::zero(),
            skew: T::zero(),
        }
    }

    pub fn matrix(&self) -> Matrix3<T> {
        let (o, l) = (T::zero(), T::one());
        Matrix3::new(self.fx, self.skew, self.cx, o, self.fy, self.cy, o, o, l)
    }

    pub fn inverse_matrix(&self) -> Matrix3<T> {
        let (o, l) = (T::zero(), T::one());
        let ifx = l / self.fx;
        let ify = l / self.fy;
        Matrix3::new(
            ifx,
            -self.skew * ifx * ify,
            (self.skew * self.cy - self.cx * self.fy) * ifx * ify,
            o,
            ify,
            -self.cy * ify,
            o,
            o,
            l,
        )
    }

    /// `K⁻¹p`, whose z component is one by construction.
    #[inline]
    pub fn ray(&self, p: &Pixel<T>) -> Vector3<T> {
        let y = (p.v - self.cy) / self.fy;
        let x = (p.u - self.cx - self.skew * y) / self.fx;
        Vector3::new(x, y, T::one())
    }

    /// Applies `K` to a camera-frame point and dehomogenizes. The caller
    /// guarantees a non-zero z.
    #[inline]
    pub fn to_pixel(&self, x: &Vector3<T>) -> Pixel<T> {
        let nx = x.x / x.z;
        let ny = x.y / x.z;
        Pixel::new(
            self.fx * nx + self.skew * ny + self.cx,
            self.fy * ny + self.cy,
        )
    }
}

/// World→camera rotation plus camera center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real = f64> {
    rotation: Matrix3<T>,
    center: Vector3<T>,
}

impl<T: Real> Pose<T> {
    /// Validates orthonormality and a positive unit determinant.
    pub fn new(rotation: Matrix3<T>, center: Vector3<T>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(center.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidRotation("non-finite entries".into()));
        }
        let tol: T = lit(T::ROTATION_TOL);
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        let off = gram.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if off > tol {
            return Err(GeometryError::InvalidRotation(format!(
                "RᵀR deviates from identity by {off}"
            )));
        }
        let det = rotation.determinant();
        if (det - T::one()).abs() > tol {
            return Err(GeometryError::InvalidRotation(format!(
                "determinant is {det}, expected 1"
            )));
        }
        Ok(Self { rotation, center })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            center: Vector3::zeros(),
        }
    }

    /// Camera at `center` looking at `target`. `up` is the world direction
    /// that should appear towards negative image v.
    pub fn look_at(
        center: Vector3<T>,
        target: Vector3<T>,
        up: Vector3<T>,
    ) -> Result<Self, GeometryError> {
        let forward = target - center;
        let fwd_norm = forward.norm();
        if fwd_norm <= T::zero() {
            return Err(GeometryError::InvalidArgument(
                "look_at target coincides with the camera center".into(),
            ));
        }
        let z = forward / fwd_norm;
        let x = (-up).cross(&z);
        let x_norm = x.norm();
        if x_norm <= lit(1e-12) {
            return Err(GeometryError::InvalidArgument(
                "look_at up vector is parallel to the viewing direction".into(),
            ));
        }
        let x = x / x_norm;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::new(rotation, center)
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn center(&self) -> &Vector3<T> {
        &self.center
    }

    /// `t = -R C`.
    pub fn translation(&self) -> Vector3<T> {
        -(self.rotation * self.center)
    }

    /// Principal viewing direction in world coordinates (third row of `R`).
    pub fn principal_axis(&self) -> Vector3<T> {
        self.rotation.row(2).transpose()
    }

    #[inline]
    pub fn world_to_camera(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation * (x - self.center)
    }

    #[inline]
    pub fn camera_to_world(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation.tr_mul(x) + self.center
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel<T: Real = f64> {
    pub u: T,
    pub v: T,
}

impl<T: Real> Pixel<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn homogeneous(&self) -> Vector3<T> {
        Vector3::new(self.u, self.v, T::one())
    }

    /// `0 <= u < width` and `0 <= v < height`.
    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.u >= T::zero()
            && self.v >= T::zero()
            && self.u < lit(width as f64)
            && self.v < lit(height as f64)
    }
}

/// Local support plane at a pixel: the depth of the pixel's 3D point and the
/// plane normal, both in the reference camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneHypothesis<T: Real = f64> {
    pub depth: T,
    pub normal: Vector3<T>,
}

impl<T: Real> PlaneHypothesis<T> {
    pub fn new(depth: T, normal: Vector3<T>) -> Result<Self, GeometryError> {
        if !(depth > T::zero()) || !depth.is_finite() {
            return Err(GeometryError::InvalidArgument(format!(
                "plane depth must be positive, got {depth}"
            )));
        }
        let len = normal.norm();
        if !len.is_finite() || (len - T::one()).abs() > lit(T::NORMAL_TOL) {
            return Err(GeometryError::InvalidArgument(format!(
                "plane normal must be unit length, got |n| = {len}"
            )));
        }
        Ok(Self { depth, normal })
    }

    /// Fronto-parallel plane facing the camera.
    pub fn fronto_parallel(depth: T) -> Result<Self, GeometryError> {
        Self::new(depth, Vector3::new(T::zero(), T::zero(), -T::one()))
    }

    /// Whether the plane faces a camera looking along `ray`.
    pub fn faces(&self, ray: &Vector3<T>) -> bool {
        self.normal.dot(ray) < T::zero()
    }

    /// Depth at which the ray `ray` (z = 1) meets this plane, given the plane
    /// is anchored at `anchor_ray * self.depth`.
    pub fn depth_along(&self, anchor_ray: &Vector3<T>, ray: &Vector3<T>) -> Option<T> {
        let denom = self.normal.dot(ray);
        if denom >= T::zero() {
            return None;
        }
        let offset = self.normal.dot(&(anchor_ray * self.depth));
        let depth = offset / denom;
        (depth > T::zero() && depth.is_finite()).then_some(depth)
    }
}

/// Intrinsics and pose of one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera<T: Real = f64> {
    pub intrinsics: Intrinsics<T>,
    pub pose: Pose<T>,
}

impl<T: Real> Camera<T> {
    pub fn new(intrinsics: Intrinsics<T>, pose: Pose<T>) -> Self {
        Self { intrinsics, pose }
    }

    pub fn backproject(&self, p: &Pixel<T>, depth: T) -> Result<Vector3<T>, GeometryError> {
        backproject_world(p, depth, &self.intrinsics, &self.pose)
    }

    pub fn project(&self, x: &Vector3<T>) -> Result<(Pixel<T>, T), GeometryError> {
        project(x, &self.intrinsics, &self.pose)
    }
}

fn check_depth<T: Real>(depth: T) -> Result<(), GeometryError> {
    if depth > T::zero() && depth.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidArgument(format!(
            "depth must be positive and finite, got {depth}"
        )))
    }
}

/// `X = λ K⁻¹p` in the camera frame, with `K⁻¹p` scaled to unit z.
pub fn backproject_cam<T: Real>(
    p: &Pixel<T>,
    depth: T,
    k: &Intrinsics<T>,
) -> Result<Vector3<T>, GeometryError> {
    check_depth(depth)?;
    Ok(k.ray(p) * depth)
}

/// `X = λ RᵀK⁻¹p + C` in the world frame.
pub fn backproject_world<T: Real>(
    p: &Pixel<T>,
    depth: T,
    k: &Intrinsics<T>,
    pose: &Pose<T>,
) -> Result<Vector3<T>, GeometryError> {
    let x = backproject_cam(p, depth, k)?;
    Ok(pose.camera_to_world(&x))
}

/// Projects a world point, returning its pixel and camera-frame depth.
pub fn project<T: Real>(
    x: &Vector3<T>,
    k: &Intrinsics<T>,
    pose: &Pose<T>,
) -> Result<(Pixel<T>, T), GeometryError> {
    let xc = pose.world_to_camera(x);
    if !(xc.z > T::zero()) {
        return Err(GeometryError::BehindCamera(
            xc.z.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok((k.to_pixel(&xc), xc.z))
}

/// Angle in degrees between the principal axes of two cameras.
pub fn view_angle<T: Real>(pose_i: &Pose<T>, pose_j: &Pose<T>) -> T {
    let a = pose_i.principal_axis();
    let b = pose_j.principal_axis();
    // atan2 keeps precision near 0° and 180°, where acos does not.
    let angle = a.cross(&b).norm().atan2(a.dot(&b));
    angle * lit(180.0) / T::pi()
}

/// Homography mapping reference pixels to source pixels for points on the
/// plane `hyp` anchored at `pixel` in the reference view.
///
/// With the relative motion `X_src = R X_ref + t` and the plane
/// `nᵀX = d`, the mapping is `K_src (R + t nᵀ / d) K_ref⁻¹`.
pub fn plane_homography<T: Real>(
    reference: &Camera<T>,
    source: &Camera<T>,
    pixel: &Pixel<T>,
    hyp: &PlaneHypothesis<T>,
) -> Result<Matrix3<T>, GeometryError> {
    check_depth(hyp.depth)?;
    let anchor = reference.intrinsics.ray(pixel) * hyp.depth;
    let offset = hyp.normal.dot(&anchor);

    let r_ref = reference.pose.rotation();
    let r_src = source.pose.rotation();
    let rel_rot = r_src * r_ref.transpose();
    let rel_t = r_src * (reference.pose.center() - source.pose.center());

    // Source center in the reference frame; the plane must not contain it.
    let src_center = r_ref * (source.pose.center() - reference.pose.center());
    let through_src = hyp.normal.dot(&src_center);
    let scale = offset.abs() + through_src.abs();
    let tol: T = lit(T::DEGENERACY_TOL);
    if offset.abs() <= tol * scale.max(T::one())
        || (offset - through_src).abs() <= tol * scale.max(T::one())
    {
        return Err(GeometryError::DegenerateHomography);
    }

    let euclid = rel_rot + rel_t * (hyp.normal.transpose() / offset);
    Ok(source.intrinsics.matrix() * euclid * reference.intrinsics.inverse_matrix())
}

/// Applies a homography to a pixel. Returns `None` when the mapped point is
/// at or beyond infinity (non-positive homogeneous scale).
#[inline]
pub fn apply_homography<T: Real>(h: &Matrix3<T>, u: T, v: T) -> Option<Pixel<T>> {
    let x = h[(0, 0)] * u + h[(0, 1)] * v + h[(0, 2)];
    let y = h[(1, 0)] * u + h[(1, 1)] * v + h[(1, 2)];
    let w = h[(2, 0)] * u + h[(2, 1)] * v + h[(2, 2)];
    (w > T::zero()).then(|| Pixel::new(x / w, y / w))
}
