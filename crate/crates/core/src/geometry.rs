//! Pinhole/plane algebra for a rectified stereo rig.
//!
//! Coordinates follow the usual camera convention: x right, y down, z along
//! the optical axis. A plane is the set of points `P` with `n·P = D` in the
//! reference camera frame. The target camera sits at `(T_c, 0, 0)`, so a
//! road point seen at reference column `u` appears at target column `u - d`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Mat3<T> = [[T; 3]; 3];

/// Image location in pixels, origin at the top-left pixel center.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pixel<T> {
    pub u: T,
    pub v: T,
}

impl<T> Pixel<T> {
    pub const fn new(u: T, v: T) -> Self {
        Self { u, v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics<T> {
    f: T,
    o_u: T,
    o_v: T,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(f: T, o_u: T, o_v: T) -> Result<Self> {
        if !(f.is_finite() && f > T::zero()) {
            return Err(Error::InvalidParameter(format!("focal length must be positive, got {f}")));
        }
        if !(o_u.is_finite() && o_v.is_finite()) {
            return Err(Error::InvalidParameter("principal point must be finite".into()));
        }
        Ok(Self { f, o_u, o_v })
    }

    pub fn f(&self) -> T {
        self.f
    }

    pub fn o_u(&self) -> T {
        self.o_u
    }

    pub fn o_v(&self) -> T {
        self.o_v
    }

    /// Zero-skew upper-triangular intrinsic matrix.
    pub fn matrix(&self) -> Mat3<T> {
        let (z, o) = (T::zero(), T::one());
        [[self.f, z, self.o_u], [z, self.f, self.o_v], [z, z, o]]
    }

    pub fn inverse_matrix(&self) -> Mat3<T> {
        let (z, o) = (T::zero(), T::one());
        let inv_f = o / self.f;
        [
            [inv_f, z, -self.o_u * inv_f],
            [z, inv_f, -self.o_v * inv_f],
            [z, z, o],
        ]
    }
}

/// Rectified stereo pair sharing one set of intrinsics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoRig<T> {
    intrinsics: CameraIntrinsics<T>,
    baseline: T,
}

impl<T: Real> StereoRig<T> {
    pub fn new(intrinsics: CameraIntrinsics<T>, baseline: T) -> Result<Self> {
        if !(baseline.is_finite() && baseline > T::zero()) {
            return Err(Error::InvalidParameter(format!("baseline must be positive, got {baseline}")));
        }
        Ok(Self { intrinsics, baseline })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics<T> {
        &self.intrinsics
    }

    /// Baseline `T_c` in meters.
    pub fn baseline(&self) -> T {
        self.baseline
    }

    /// Translation from the reference to the target camera.
    pub fn translation(&self) -> [T; 3] {
        [self.baseline, T::zero(), T::zero()]
    }
}

/// Calibration file contents (`f`, `o_u`, `o_v` in pixels, `baseline_Tc` in meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub f: f64,
    pub o_u: f64,
    pub o_v: f64,
    #[serde(rename = "baseline_Tc")]
    pub baseline_tc: f64,
}

impl Calibration {
    pub fn to_rig<T: Real>(&self) -> Result<StereoRig<T>> {
        let k = CameraIntrinsics::new(T::lit(self.f), T::lit(self.o_u), T::lit(self.o_v))?;
        StereoRig::new(k, T::lit(self.baseline_tc))
    }

    pub fn from_rig<T: Real>(rig: &StereoRig<T>) -> Self {
        let k = rig.intrinsics();
        Self {
            f: k.f().as_f64(),
            o_u: k.o_u().as_f64(),
            o_v: k.o_v().as_f64(),
            baseline_tc: rig.baseline().as_f64(),
        }
    }
}

/// Plane `n·P = D` in the reference camera frame with `|n| = 1`, `D > 0`
/// and `n_y >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneParams<T> {
    normal: [T; 3],
    distance: T,
}

impl<T: Real> PlaneParams<T> {
    /// Builds a plane from any nonzero normal. The pair `(n, D)` is rescaled
    /// to a unit normal and flipped as a whole when `D < 0`; both describe
    /// the same point set. A plane through the camera center or one whose
    /// normal points away from the ground (`n_y < 0` once `D > 0`) is
    /// rejected.
    pub fn new(normal: [T; 3], distance: T) -> Result<Self> {
        let norm = norm3(&normal);
        if !(norm.is_finite() && distance.is_finite()) || norm <= T::tol(1e-12) {
            return Err(Error::DegeneratePlane("normal must be a finite nonzero vector".into()));
        }
        let mut n = normal.map(|c| c / norm);
        let mut d = distance / norm;
        if d.abs() <= T::tol(1e-12) {
            return Err(Error::DegeneratePlane("plane passes through the reference camera center".into()));
        }
        if d < T::zero() {
            n = n.map(|c| -c);
            d = -d;
        }
        if n[1] < T::zero() {
            return Err(Error::DegeneratePlane(format!(
                "no road orientation: n_y = {} < 0 with D > 0 (plane above the camera)",
                n[1]
            )));
        }
        Ok(Self { normal: n, distance: d })
    }

    pub fn normal(&self) -> [T; 3] {
        self.normal
    }

    /// Distance `D` from the reference camera center, in meters.
    pub fn distance(&self) -> T {
        self.distance
    }
}

/// Road disparity projection model: `d = gain * (v cos(roll) - u sin(roll) + offset)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoadProjectionModel<T> {
    roll_phi: T,
    gain_varkappa: T,
    offset_kappa: T,
}

impl<T: Real> RoadProjectionModel<T> {
    pub fn new(roll_phi: T, gain_varkappa: T, offset_kappa: T) -> Result<Self> {
        if !(roll_phi.is_finite() && gain_varkappa.is_finite() && offset_kappa.is_finite()) {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        if roll_phi.abs() >= T::FRAC_PI_2() {
            return Err(Error::InvalidModel(format!("roll {roll_phi} outside (-pi/2, pi/2)")));
        }
        if gain_varkappa.abs() <= T::tol(1e-12) {
            return Err(Error::InvalidModel("gain is zero (plane through the baseline)".into()));
        }
        Ok(Self {
            roll_phi,
            gain_varkappa,
            offset_kappa,
        })
    }

    pub fn roll(&self) -> T {
        self.roll_phi
    }

    pub fn gain(&self) -> T {
        self.gain_varkappa
    }

    pub fn offset(&self) -> T {
        self.offset_kappa
    }

    /// Predicted disparity at `p`; negative above the vanishing line.
    pub fn disparity(&self, p: Pixel<T>) -> T {
        self.gain_varkappa * (w_transform(p, self.roll_phi) + self.offset_kappa)
    }

    /// Horizontal derivative of the source column `u - d(u, v)`.
    pub fn column_jacobian(&self) -> T {
        T::one() + self.gain_varkappa * self.roll_phi.sin()
    }
}

/// Image row rotated by the roll angle: `v cos(phi) - u sin(phi)`.
pub fn w_transform<T: Real>(p: Pixel<T>, phi: T) -> T {
    let (s, c) = phi.sin_cos();
    p.v * c - p.u * s
}

pub fn model_disparity<T: Real>(model: &RoadProjectionModel<T>, p: Pixel<T>) -> T {
    model.disparity(p)
}

/// Projective map from reference-view to target-view homogeneous pixels,
/// stored with unit bottom-right entry whenever that entry is nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography<T> {
    m: Mat3<T>,
}

impl<T: Real> Homography<T> {
    pub fn identity() -> Self {
        let (z, o) = (T::zero(), T::one());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_matrix(m: Mat3<T>) -> Result<Self> {
        if m.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite homography entry".into()));
        }
        let mut m = m;
        let s = m[2][2];
        if s != T::zero() {
            for row in m.iter_mut() {
                for x in row.iter_mut() {
                    *x = *x / s;
                }
            }
        }
        let det = det3(&m);
        if det.abs() <= T::tol(1e-12) {
            return Err(Error::DegenerateGeometry(format!("singular homography (det = {det})")));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Mat3<T> {
        &self.m
    }

    pub fn determinant(&self) -> T {
        det3(&self.m)
    }

    /// Maps `p` and dehomogenizes.
    pub fn apply(&self, p: Pixel<T>) -> Result<Pixel<T>> {
        let m = &self.m;
        let x = m[0][0] * p.u + m[0][1] * p.v + m[0][2];
        let y = m[1][0] * p.u + m[1][1] * p.v + m[1][2];
        let w = m[2][0] * p.u + m[2][1] * p.v + m[2][2];
        if w.abs() <= T::tol(1e-12) {
            return Err(Error::PointAtInfinity);
        }
        if w == T::one() {
            return Ok(Pixel::new(x, y));
        }
        Ok(Pixel::new(x / w, y / w))
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    /// Row-major entries at 17 significant digits, one row per line.
    pub fn to_row_major_string(&self) -> String {
        self.m
            .iter()
            .map(|row| {
                row.iter()
                    .map(|x| format!("{:.16e}", x.as_f64()))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl<T: Real> fmt::Display for Homography<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_row_major_string())
    }
}

pub fn apply_homography<T: Real>(h: &Homography<T>, p: Pixel<T>) -> Result<Pixel<T>> {
    h.apply(p)
}

/// Plane-induced homography `depth_ratio * K_t (R - t n^T / D) K_r^-1` for
/// an arbitrary relative pose.
pub fn homography_general<T: Real>(
    k_ref: &CameraIntrinsics<T>,
    k_tgt: &CameraIntrinsics<T>,
    rotation: &Mat3<T>,
    translation: &[T; 3],
    plane: &PlaneParams<T>,
    depth_ratio: T,
) -> Result<Homography<T>> {
    if !(depth_ratio.is_finite() && depth_ratio > T::zero()) {
        return Err(Error::InvalidParameter(format!("depth ratio must be positive, got {depth_ratio}")));
    }
    let rtr = mul3(&transpose3(rotation), rotation);
    let ortho_err = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .fold(T::zero(), |acc, (i, j)| {
            let target = if i == j { T::one() } else { T::zero() };
            acc.max((rtr[i][j] - target).abs())
        });
    if !(ortho_err <= T::tol(1e-9)) {
        return Err(Error::InvalidParameter(format!("rotation not orthonormal (error {ortho_err})")));
    }
    let n = plane.normal();
    let d = plane.distance();
    let mut core = *rotation;
    for (i, row) in core.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = *x - translation[i] * n[j] / d;
        }
    }
    let mut h = mul3(&mul3(&k_tgt.matrix(), &core), &k_ref.inverse_matrix());
    for x in h.iter_mut().flatten() {
        *x = *x * depth_ratio;
    }
    Homography::from_matrix(h)
}

/// Homography of a road plane for a rectified rig; only the first row
/// differs from the identity.
pub fn homography_stereo<T: Real>(rig: &StereoRig<T>, plane: &PlaneParams<T>) -> Result<Homography<T>> {
    let k = rig.intrinsics();
    let tc = rig.baseline();
    let [nx, ny, nz] = plane.normal();
    let d = plane.distance();
    let (z, o) = (T::zero(), T::one());
    let row0 = [
        o - tc * nx / d,
        -tc * ny / d,
        k.o_u() * tc * nx / d + k.o_v() * tc * ny / d - k.f() * tc * nz / d,
    ];
    Homography::from_matrix([row0, [z, o, z], [z, z, o]])
}

/// Homography written in road-model parameters:
/// first row `(1 + gain sin(roll), -gain cos(roll), -gain * offset)`.
pub fn homography_from_model<T: Real>(model: &RoadProjectionModel<T>) -> Result<Homography<T>> {
    let (s, c) = model.roll().sin_cos();
    let g = model.gain();
    let (z, o) = (T::zero(), T::one());
    Homography::from_matrix([[o + g * s, -g * c, -g * model.offset()], [z, o, z], [z, z, o]])
}

/// Identifies the first rows of the two homography forms.
pub fn plane_to_model<T: Real>(rig: &StereoRig<T>, plane: &PlaneParams<T>) -> Result<RoadProjectionModel<T>> {
    let k = rig.intrinsics();
    let [nx, ny, nz] = plane.normal();
    let in_image = nx.hypot(ny);
    if in_image <= T::tol(1e-12) {
        return Err(Error::DegeneratePlane("plane faces the camera head-on; roll undefined".into()));
    }
    let roll = (-nx).atan2(ny);
    if roll.abs() >= T::FRAC_PI_2() {
        return Err(Error::DegeneratePlane("plane normal has no vertical component; roll at +-pi/2".into()));
    }
    let gain = rig.baseline() * in_image / plane.distance();
    let offset = (k.f() * nz - k.o_u() * nx - k.o_v() * ny) / in_image;
    RoadProjectionModel::new(roll, gain, offset)
}

/// Inverse of [`plane_to_model`]. Requires a positive gain, since a
/// negative one corresponds to a plane above the camera.
pub fn model_to_plane<T: Real>(rig: &StereoRig<T>, model: &RoadProjectionModel<T>) -> Result<PlaneParams<T>> {
    let k = rig.intrinsics();
    let tc = rig.baseline();
    if model.gain() <= T::zero() {
        return Err(Error::DegeneratePlane(format!(
            "gain {} has no road-plane orientation",
            model.gain()
        )));
    }
    let (s, c) = model.roll().sin_cos();
    // a = |n_xy| / D, b = (f n_z - o_u n_x - o_v n_y) / D
    let a = model.gain() / tc;
    let b = model.gain() * model.offset() / tc;
    let nz_over_d = (b - a * (k.o_u() * s - k.o_v() * c)) / k.f();
    let r = a.hypot(nz_over_d);
    if !(r.is_finite() && r > T::zero()) {
        return Err(Error::DegeneratePlane("reconstructed normal cannot be normalized".into()));
    }
    PlaneParams::new([-s * a / r, c * a / r, nz_over_d / r], T::one() / r)
}

pub(crate) fn norm3<T: Real>(v: &[T; 3]) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn det3<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn mul3<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn transpose3<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = *a;
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = a[j][i];
        }
    }
    out
}
