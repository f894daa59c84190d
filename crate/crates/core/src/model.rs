//! Geometric and perceptual value types shared by every stage, plus the
//! camera projection math that lifts pixel detections into the world frame.
//!
//! The world frame is z-up. Camera frames follow the pinhole convention
//! (x right, y down, z forward).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Quaternion norm tolerance accepted by [`Pose`].
pub const UNIT_NORM_TOL: f64 = 1e-6;
/// Probability-mass tolerance accepted by [`ClassDistribution`].
pub const DIST_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid pose: quaternion norm {norm} is not within {tol} of 1")]
    InvalidPose { norm: f64, tol: f64 },
    #[error("degenerate depth {0} (must be > 0)")]
    DegenerateDepth(f64),
    #[error("pixel ({u}, {v}) outside the {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid class distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid timestamp: {0}")]
    InvalidTimestamp(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Seconds since epoch, stored at microsecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_micros(micros: i64) -> Result<Self, GeometryError> {
        if micros < 0 {
            return Err(GeometryError::InvalidTimestamp(format!(
                "negative timestamp {micros} us"
            )));
        }
        Ok(Timestamp(micros))
    }

    /// Rounds to the nearest microsecond. Use [`Timestamp::from_str`] when the
    /// decimal text is available, since that path truncates exactly.
    pub fn from_secs_f64(secs: f64) -> Result<Self, GeometryError> {
        if !secs.is_finite() {
            return Err(GeometryError::InvalidTimestamp(format!("{secs}")));
        }
        Self::from_micros((secs * 1e6).round() as i64)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Signed difference `self - other` in seconds.
    pub fn seconds_since(self, other: Timestamp) -> f64 {
        (self.0 - other.0) as f64 / 1e6
    }

    pub fn abs_diff_secs(self, other: Timestamp) -> f64 {
        (self.0 - other.0).abs() as f64 / 1e6
    }

    pub fn offset_micros(self, delta: i64) -> Result<Self, GeometryError> {
        Self::from_micros(self.0 + delta)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl FromStr for Timestamp {
    type Err = GeometryError;

    /// Parses decimal seconds; digits beyond the sixth decimal are truncated.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::InvalidTimestamp(s.to_string());
        let text = s.trim();
        let text = text.strip_prefix('+').unwrap_or(text);
        if text.starts_with('-') {
            return Err(GeometryError::InvalidTimestamp(format!(
                "negative timestamp {s}"
            )));
        }
        if text.contains(['e', 'E']) {
            // exponent notation: go through f64
            let v: f64 = text.parse().map_err(|_| bad())?;
            if v < 0.0 {
                return Err(bad());
            }
            return Self::from_secs_f64(v);
        }
        let (int_part, frac_part) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let mut micros: i64 = 0;
        for (i, b) in frac_part.bytes().take(6).enumerate() {
            micros += i64::from(b - b'0') * 10_i64.pow(5 - i as u32);
        }
        let total = whole
            .checked_mul(1_000_000)
            .and_then(|w| w.checked_add(micros))
            .ok_or_else(bad)?;
        Ok(Timestamp(total))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // The nearest f64 to a whole number of microseconds prints back as
        // the same six-decimal value, so this round trips exactly.
        serializer.serialize_f64(self.as_secs_f64())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom(format!("invalid timestamp {secs}")));
        }
        // shortest round-trip text of the f64 recovers the written decimal
        format!("{secs}").parse().map_err(serde::de::Error::custom)
    }
}

/// Camera pose in the world frame: `p_world = R(q) p_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub stamp: Timestamp,
    /// (qx, qy, qz, qw)
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Pose {
    pub fn new(stamp: Timestamp, rotation: [f64; 4], translation: [f64; 3]) -> Result<Self, GeometryError> {
        let pose = Pose {
            stamp,
            rotation,
            translation,
        };
        pose.check()?;
        Ok(pose)
    }

    pub fn identity(stamp: Timestamp) -> Self {
        Pose {
            stamp,
            rotation: [0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
        }
    }

    pub fn quaternion_norm(&self) -> f64 {
        self.rotation.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        let norm = self.quaternion_norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(GeometryError::InvalidPose {
                norm,
                tol: UNIT_NORM_TOL,
            });
        }
        if self.translation.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::Domain("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn unit_quaternion(&self) -> Result<UnitQuaternion<f64>, GeometryError> {
        self.check()?;
        let [x, y, z, w] = self.rotation;
        Ok(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    pub fn rotation_matrix(&self) -> Result<Matrix3<f64>, GeometryError> {
        Ok(*self.unit_quaternion()?.to_rotation_matrix().matrix())
    }

    pub fn translation_vec(&self) -> Vec3 {
        Vec3::from(self.translation)
    }
}

/// `R(q)·p + t`.
pub fn rotate_and_translate(pose: &Pose, point_camera: &Vec3) -> Result<Vec3, GeometryError> {
    let q = pose.unit_quaternion()?;
    Ok(q.transform_vector(point_camera) + pose.translation_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width))
            || !(self.cy >= 0.0 && self.cy < f64::from(self.height))
        {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= f64::from(self.width) && v <= f64::from(self.height)
    }

    /// Pinhole forward projection of a camera-frame point.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Lifts a pixel at metric depth into the camera frame.
pub fn back_project(
    intrinsics: &CameraIntrinsics,
    pixel: (f64, f64),
    depth: f64,
) -> Result<Vec3, GeometryError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(GeometryError::DegenerateDepth(depth));
    }
    let (u, v) = pixel;
    if !intrinsics.contains(u, v) {
        return Err(GeometryError::OutOfBounds {
            u,
            v,
            width: intrinsics.width,
            height: intrinsics.height,
        });
    }
    Ok(Vec3::new(
        depth * (u - intrinsics.cx) / intrinsics.fx,
        depth * (v - intrinsics.cy) / intrinsics.fy,
        depth,
    ))
}

/// Depth noise standard deviation, `sigma0 + k d^2`.
pub fn depth_sigma(depth: f64, sigma0: f64, k: f64) -> Result<f64, GeometryError> {
    if depth < 0.0 || depth.is_nan() {
        return Err(GeometryError::Domain(format!("negative depth {depth}")));
    }
    if sigma0 < 0.0 || k < 0.0 {
        return Err(GeometryError::Domain(format!(
            "noise parameters must be non-negative (sigma0={sigma0}, k={k})"
        )));
    }
    Ok(sigma0 + k * depth * depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoise {
    pub sigma0: f64,
    pub k: f64,
}

impl Default for DepthNoise {
    fn default() -> Self {
        DepthNoise {
            sigma0: 0.0012,
            k: 0.0019,
        }
    }
}

impl DepthNoise {
    pub fn sigma(&self, depth: f64) -> Result<f64, GeometryError> {
        depth_sigma(depth, self.sigma0, self.k)
    }
}

/// Discrete probability distribution over class names.
///
/// Entries are kept in name order so serialization and iteration are
/// deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct ClassDistribution {
    entries: BTreeMap<String, f64>,
}

impl ClassDistribution {
    /// Validates an already-normalized distribution.
    pub fn new(entries: BTreeMap<String, f64>) -> Result<Self, GeometryError> {
        Self::check_entries(&entries)?;
        let sum: f64 = entries.values().sum();
        if (sum - 1.0).abs() > DIST_SUM_TOL {
            return Err(GeometryError::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(ClassDistribution { entries })
    }

    /// Accepts mass within `tol` of one and rescales it to sum to one.
    pub fn normalized(entries: BTreeMap<String, f64>, tol: f64) -> Result<Self, GeometryError> {
        Self::check_entries(&entries)?;
        let sum: f64 = entries.values().sum();
        if (sum - 1.0).abs() > tol {
            return Err(GeometryError::InvalidDistribution(format!(
                "probabilities sum to {sum}, outside tolerance {tol}"
            )));
        }
        let entries = entries.into_iter().map(|(k, p)| (k, p / sum)).collect();
        Ok(ClassDistribution { entries })
    }

    pub fn certain(class: &str) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(class.to_string(), 1.0);
        ClassDistribution { entries }
    }

    pub fn from_pairs<'a, I: IntoIterator<Item = (&'a str, f64)>>(pairs: I) -> Result<Self, GeometryError> {
        Self::new(pairs.into_iter().map(|(k, p)| (k.to_string(), p)).collect())
    }

    fn check_entries(entries: &BTreeMap<String, f64>) -> Result<(), GeometryError> {
        if entries.is_empty() {
            return Err(GeometryError::InvalidDistribution("no entries".into()));
        }
        for (name, p) in entries {
            if name.is_empty() {
                return Err(GeometryError::InvalidDistribution("empty class name".into()));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(GeometryError::InvalidDistribution(format!(
                    "probability {p} for '{name}' outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn from_raw(entries: BTreeMap<String, f64>) -> Self {
        ClassDistribution { entries }
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn prob(&self, class: &str) -> f64 {
        self.entries.get(class).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Most probable class; ties go to the lexicographically first name.
    pub fn argmax(&self) -> &str {
        let mut best: Option<(&str, f64)> = None;
        for (name, &p) in &self.entries {
            match best {
                Some((_, bp)) if p <= bp => {}
                _ => best = Some((name, p)),
            }
        }
        best.map(|(n, _)| n).unwrap_or("")
    }
}

impl TryFrom<BTreeMap<String, f64>> for ClassDistribution {
    type Error = GeometryError;

    fn try_from(value: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        ClassDistribution::new(value)
    }
}

impl From<ClassDistribution> for BTreeMap<String, f64> {
    fn from(value: ClassDistribution) -> Self {
        value.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl PixelBox {
    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.u_min, self.v_min),
            (self.u_max, self.v_min),
            (self.u_min, self.v_max),
            (self.u_max, self.v_max),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.u_min < self.u_max && self.v_min < self.v_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObservation {
    pub stamp: Timestamp,
    pub track_id: u64,
    pub bbox: PixelBox,
    pub class_dist: ClassDistribution,
    pub depth: f64,
}

impl TrackedObservation {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.bbox.is_valid() {
            return Err(GeometryError::InvalidBox(format!(
                "bbox ({}, {}, {}, {}) needs u_min<u_max and v_min<v_max",
                self.bbox.u_min, self.bbox.v_min, self.bbox.u_max, self.bbox.v_max
            )));
        }
        if !(self.depth > 0.0) || !self.depth.is_finite() {
            return Err(GeometryError::DegenerateDepth(self.depth));
        }
        Ok(())
    }
}

/// Axis-aligned box in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb3 {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        if min.iter().chain(max.iter()).any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidBox("non-finite corner".into()));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(GeometryError::InvalidBox(format!(
                "min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Aabb3 { min, max })
    }

    pub fn from_center_half(center: Vec3, half: Vec3) -> Result<Self, GeometryError> {
        Self::new(center - half, center + half)
    }

    /// Tight hull of a non-empty point set.
    pub fn hull<'a, I: IntoIterator<Item = &'a Vec3>>(points: I) -> Result<Self, GeometryError> {
        let mut it = points.into_iter();
        let first = it
            .next()
            .ok_or_else(|| GeometryError::InvalidBox("empty point set".into()))?;
        let (mut min, mut max) = (*first, *first);
        for p in it {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self::new(min, max)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn footprint_area(&self) -> f64 {
        let e = self.extent();
        e.x * e.y
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn translated(&self, v: &Vec3) -> Aabb3 {
        Aabb3 {
            min: self.min + v,
            max: self.max + v,
        }
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }
}

/// Bounds on the synthesized depth half-extent of an observed object.
pub const DEPTH_HALF_EXTENT_MIN: f64 = 0.02;
pub const DEPTH_HALF_EXTENT_MAX: f64 = 1.0;

/// Depth half-extent assigned to a box whose metric face is `width` x `height`.
pub fn depth_half_extent(width: f64, height: f64) -> f64 {
    (0.5 * 0.5 * (width + height)).clamp(DEPTH_HALF_EXTENT_MIN, DEPTH_HALF_EXTENT_MAX)
}

/// Camera-frame box implied by an observation: the bbox face sits at the
/// measured depth and the box extends `2 * depth_half_extent` behind it.
pub fn observation_camera_corners(
    obs: &TrackedObservation,
    intrinsics: &CameraIntrinsics,
) -> Result<[Vec3; 8], GeometryError> {
    let d = obs.depth;
    let face = obs
        .bbox
        .corners()
        .map(|px| back_project(intrinsics, px, d));
    let mut front = [Vec3::zeros(); 4];
    for (slot, c) in front.iter_mut().zip(face) {
        *slot = c?;
    }
    let width = (obs.bbox.u_max - obs.bbox.u_min) * d / intrinsics.fx;
    let height = (obs.bbox.v_max - obs.bbox.v_min) * d / intrinsics.fy;
    let depth_extent = 2.0 * depth_half_extent(width, height);
    let mut corners = [Vec3::zeros(); 8];
    for (i, c) in front.iter().enumerate() {
        corners[i] = *c;
        corners[i + 4] = Vec3::new(c.x, c.y, c.z + depth_extent);
    }
    Ok(corners)
}

/// World-frame axis-aligned hull of the box implied by `obs` seen from `pose`.
pub fn observation_to_world_aabb(
    obs: &TrackedObservation,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<Aabb3, GeometryError> {
    let q = pose.unit_quaternion()?;
    let t = pose.translation_vec();
    let corners = observation_camera_corners(obs, intrinsics)?;
    let world: Vec<Vec3> = corners.iter().map(|c| q.transform_vector(c) + t).collect();
    Aabb3::hull(world.iter())
}

/// Total order on `f64` for sorting finite values.
pub(crate) fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}
