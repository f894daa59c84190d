//! Ground-truth-controlled synthetic scenes.
//!
//! Objects are world-frame boxes moving at constant velocity. A camera
//! looks along +y (optionally yawed) and sweeps along a sinusoidal path. Each
//! native frame produces one pose and one observation per visible object.
//!
//! The sensor model reports, for an object whose camera-frame box has
//! half-extents `h` and center `c`, the bbox of the box face at depth
//! `d = c.z - e`, where `e` is the depth half-extent the reconstruction
//! assigns. A noiseless observation therefore reconstructs to a box centered
//! exactly on the object's centroid.

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Frame, IngestError, ObservationStream, PoseStream};
use crate::model::{
    depth_half_extent, observation_to_world_aabb, Aabb3, CameraIntrinsics, ClassDistribution,
    DepthNoise, PixelBox, Pose, Timestamp, TrackedObservation, Vec3,
};
use crate::relations::{Body, RelationEngine};

/// Camera trajectory: `position + amplitude * sin(2 pi t / period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraPath {
    pub position: [f64; 3],
    pub sweep_amplitude: [f64; 3],
    /// seconds
    pub sweep_period: f64,
    /// Rotation about world z in degrees; 0 looks along +y.
    pub yaw_deg: f64,
}

impl Default for CameraPath {
    fn default() -> Self {
        CameraPath {
            position: [0.0, -3.0, 1.0],
            sweep_amplitude: [0.0; 3],
            sweep_period: 10.0,
            yaw_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub class: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// m/s
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Class reported on a confused detection; defaults to the next distinct
    /// class in the object list.
    #[serde(default)]
    pub confuser: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    /// seconds
    pub duration: f64,
    /// frames per second
    pub native_rate: f64,
    #[serde(default)]
    pub start_time: f64,
    /// pixel standard deviation on each bbox edge
    #[serde(default)]
    pub detection_noise: f64,
    #[serde(default)]
    pub depth_noise: DepthNoise,
    /// probability that an observation reports the confuser class
    #[serde(default)]
    pub class_confusion: f64,
    /// per-observation miss probability
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
    /// Probability mass on the reported class of a detection.
    #[serde(default = "default_class_confidence")]
    pub class_confidence: f64,
    /// Uniform pose timestamp jitter bound (seconds).
    #[serde(default)]
    pub pose_jitter: f64,
    /// Probability that a frame's pose is missing from the pose stream.
    #[serde(default)]
    pub pose_dropout: f64,
    /// Per-frame probability that the tracker re-issues an object's track id.
    #[serde(default)]
    pub track_switch: f64,
    #[serde(default)]
    pub camera: CameraPath,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

fn default_class_confidence() -> f64 {
    0.8
}

impl SyntheticSceneSpec {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::InvalidSpec(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::InvalidSpec(m));
        if !(self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.native_rate > 0.0) {
            return bad(format!("native_rate must be > 0, got {}", self.native_rate));
        }
        if self.start_time < 0.0 {
            return bad("start_time must be >= 0".into());
        }
        for (name, p) in [
            ("class_confusion", self.class_confusion),
            ("dropout", self.dropout),
            ("pose_dropout", self.pose_dropout),
            ("track_switch", self.track_switch),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be a probability, got {p}"));
            }
        }
        if !(self.class_confidence > 0.5 && self.class_confidence <= 1.0) {
            return bad(format!("class_confidence must be in (0.5, 1], got {}", self.class_confidence));
        }
        if self.detection_noise < 0.0 || self.depth_noise.sigma0 < 0.0 || self.depth_noise.k < 0.0 {
            return bad("noise parameters must be non-negative".into());
        }
        if self.pose_jitter < 0.0 || self.pose_jitter >= 0.5 / self.native_rate {
            return bad("pose_jitter must be in [0, half a frame period)".into());
        }
        if !(self.camera.sweep_period > 0.0) {
            return bad("camera.sweep_period must be > 0".into());
        }
        if self.objects.is_empty() {
            return Err(IngestError::EmptyScene);
        }
        for o in &self.objects {
            if (0..3).any(|i| !(o.min[i] < o.max[i])) {
                return bad(format!("object '{}' has an empty box", o.class));
            }
        }
        Ok(())
    }

    fn object_name(&self, i: usize) -> String {
        self.objects[i]
            .name
            .clone()
            .unwrap_or_else(|| format!("{}_{i}", self.objects[i].class))
    }

    fn confuser(&self, i: usize) -> Option<String> {
        if let Some(c) = &self.objects[i].confuser {
            return Some(c.clone());
        }
        let own = &self.objects[i].class;
        let n = self.objects.len();
        (1..n)
            .map(|k| &self.objects[(i + k) % n].class)
            .find(|c| *c != own)
            .cloned()
    }
}

/// Sensor and relation settings the generator shares with the pipeline.
#[derive(Debug, Clone)]
pub struct SensorSettings {
    pub intrinsics: CameraIntrinsics,
    pub relations: RelationEngine,
    /// meters; pairs farther apart are not related
    pub pairing_radius: f64,
}

impl Default for SensorSettings {
    fn default() -> Self {
        SensorSettings {
            intrinsics: CameraIntrinsics::default(),
            relations: RelationEngine::default(),
            pairing_radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// True relations and track assignments at one native frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub stamp: Timestamp,
    /// track id -> object name, for objects in view
    pub tracks: BTreeMap<u64, String>,
    pub relations: Vec<Triple>,
}

#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub poses: PoseStream,
    pub observations: ObservationStream,
    pub ground_truth: Vec<GroundTruthFrame>,
}

fn camera_rotation(yaw_deg: f64) -> UnitQuaternion<f64> {
    let base = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -std::f64::consts::FRAC_PI_2);
    let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians());
    yaw * base
}

struct Sensed {
    obs: TrackedObservation,
    body: Body,
}

/// Noiseless observation of `world` from the camera, if fully in view.
fn sense(
    world: &Aabb3,
    rot: &UnitQuaternion<f64>,
    cam_pos: &Vec3,
    pose: &Pose,
    stamp: Timestamp,
    k: &CameraIntrinsics,
    noise: &DepthNoise,
) -> Option<Sensed> {
    let inv = rot.inverse();
    let c = inv.transform_vector(&(world.center() - cam_pos));
    let m = inv.to_rotation_matrix();
    let h_world = world.extent() * 0.5;
    let h = m.matrix().abs() * h_world;
    let e = depth_half_extent(2.0 * h.x, 2.0 * h.y);
    let d = c.z - e;
    if d < 0.1 {
        return None;
    }
    let bbox = PixelBox {
        u_min: k.fx * (c.x - h.x) / d + k.cx,
        u_max: k.fx * (c.x + h.x) / d + k.cx,
        v_min: k.fy * (c.y - h.y) / d + k.cy,
        v_max: k.fy * (c.y + h.y) / d + k.cy,
    };
    if !k.contains(bbox.u_min, bbox.v_min) || !k.contains(bbox.u_max, bbox.v_max) {
        return None;
    }
    let obs = TrackedObservation {
        stamp,
        track_id: 0,
        bbox,
        class_dist: ClassDistribution::certain("unknown"),
        depth: d,
    };
    let aabb = observation_to_world_aabb(&obs, pose, k).ok()?;
    let sigma = noise.sigma(d).ok()?;
    Some(Sensed {
        obs,
        body: Body { aabb, sigma },
    })
}

fn detection_classes(own: &str, confuser: Option<&str>, confident: f64, confused: bool) -> ClassDistribution {
    match confuser {
        None => ClassDistribution::certain(own),
        Some(other) => {
            let (p_own, p_other) = if confused {
                (1.0 - confident, confident)
            } else {
                (confident, 1.0 - confident)
            };
            let mut m = BTreeMap::new();
            m.insert(own.to_string(), p_own);
            m.insert(other.to_string(), p_other);
            ClassDistribution::from_raw(m)
        }
    }
}

/// Deterministic given `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSceneSpec, sensor: &SensorSettings) -> Result<SyntheticRun, IngestError> {
    spec.validate()?;
    sensor.intrinsics.validate()?;
    let k = &sensor.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pixel_noise = Normal::new(0.0, spec.detection_noise.max(0.0))
        .map_err(|e| IngestError::InvalidSpec(e.to_string()))?;
    let rot = camera_rotation(spec.camera.yaw_deg);
    let qc = rot.quaternion().coords;
    let rotation = [qc.x, qc.y, qc.z, qc.w];

    let n_frames = (spec.duration * spec.native_rate).floor() as usize + 1;
    let names: Vec<String> = (0..spec.objects.len()).map(|i| spec.object_name(i)).collect();
    let confusers: Vec<Option<String>> = (0..spec.objects.len()).map(|i| spec.confuser(i)).collect();
    let mut track_of: Vec<Option<u64>> = vec![None; spec.objects.len()];
    let mut next_track: u64 = 1;

    let mut poses = Vec::with_capacity(n_frames);
    let mut frames = Vec::with_capacity(n_frames);
    let mut truth = Vec::with_capacity(n_frames);

    for i in 0..n_frames {
        let stamp = Timestamp::from_secs_f64(spec.start_time + i as f64 / spec.native_rate)?;
        let t = stamp.as_secs_f64() - spec.start_time;
        let phase = (2.0 * std::f64::consts::PI * t / spec.camera.sweep_period).sin();
        let cam_pos = Vec3::from(spec.camera.position) + Vec3::from(spec.camera.sweep_amplitude) * phase;
        let pose = Pose::new(stamp, rotation, [cam_pos.x, cam_pos.y, cam_pos.z])?;

        // fixed draw order keeps streams comparable across parameter changes
        let jitter: f64 = rng.random_range(-1.0..=1.0) * spec.pose_jitter;
        let pose_missing = rng.random::<f64>() < spec.pose_dropout;
        if !pose_missing {
            let pstamp = stamp.offset_micros((jitter * 1e6).round() as i64).unwrap_or(stamp);
            poses.push(Pose { stamp: pstamp, ..pose });
        }

        let mut observations = Vec::new();
        let mut visible: Vec<(usize, Body)> = Vec::new();
        let mut tracks = BTreeMap::new();
        for (j, o) in spec.objects.iter().enumerate() {
            let v = Vec3::from(o.velocity) * t;
            let world = Aabb3::new(Vec3::from(o.min) + v, Vec3::from(o.max) + v)?;
            let miss: f64 = rng.random();
            let confused = rng.random::<f64>() < spec.class_confusion;
            let switch = rng.random::<f64>() < spec.track_switch;
            let edge_noise: [f64; 4] = std::array::from_fn(|_| pixel_noise.sample(&mut rng));
            let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);

            let Some(sensed) = sense(&world, &rot, &cam_pos, &pose, stamp, k, &spec.depth_noise) else {
                track_of[j] = None;
                continue;
            };
            let track = match track_of[j] {
                Some(id) if !switch => id,
                _ => {
                    let id = next_track;
                    next_track += 1;
                    track_of[j] = Some(id);
                    id
                }
            };
            tracks.insert(track, names[j].clone());
            visible.push((j, sensed.body));
            if miss < spec.dropout {
                continue;
            }
            let mut obs = sensed.obs;
            obs.track_id = track;
            obs.class_dist = detection_classes(&o.class, confusers[j].as_deref(), spec.class_confidence, confused);
            let sigma = spec.depth_noise.sigma(obs.depth)?;
            obs.depth += sigma * z;
            let b = &mut obs.bbox;
            b.u_min = (b.u_min + edge_noise[0]).clamp(0.0, f64::from(k.width));
            b.v_min = (b.v_min + edge_noise[1]).clamp(0.0, f64::from(k.height));
            b.u_max = (b.u_max + edge_noise[2]).clamp(0.0, f64::from(k.width));
            b.v_max = (b.v_max + edge_noise[3]).clamp(0.0, f64::from(k.height));
            if !b.is_valid() || !(obs.depth > 0.05) {
                continue;
            }
            observations.push(obs);
        }

        let mut relations = Vec::new();
        for (a, body_a) in &visible {
            for (b, body_b) in &visible {
                if a == b {
                    continue;
                }
                if (body_a.aabb.center() - body_b.aabb.center()).norm() > sensor.pairing_radius {
                    continue;
                }
                for c in sensor.relations.infer(body_a, body_b) {
                    relations.push(Triple {
                        subject: names[*a].clone(),
                        relation: c.relation,
                        object: names[*b].clone(),
                    });
                }
            }
        }
        observations.sort_by_key(|o| o.track_id);
        frames.push(Frame { stamp, observations });
        truth.push(GroundTruthFrame {
            stamp,
            tracks,
            relations,
        });
    }

    if poses.is_empty() {
        return Err(IngestError::EmptyStream);
    }
    Ok(SyntheticRun {
        poses: PoseStream::new(poses)?,
        observations: ObservationStream::new(frames)?,
        ground_truth: truth,
    })
}

pub fn write_ground_truth(frames: &[GroundTruthFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&serde_json::to_string(f).expect("ground truth serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthFrame>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IngestError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_object(noise: f64) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            duration: 1.0,
            native_rate: 30.0,
            start_time: 0.0,
            detection_noise: noise,
            depth_noise: if noise > 0.0 { DepthNoise::default() } else { DepthNoise { sigma0: 0.0, k: 0.0 } },
            class_confusion: 0.0,
            dropout: 0.0,
            seed: 1,
            class_confidence: 0.8,
            pose_jitter: 0.0,
            pose_dropout: 0.0,
            track_switch: 0.0,
            camera: CameraPath::default(),
            objects: vec![ObjectSpec {
                name: None,
                class: "cup".into(),
                min: [-0.05, -0.05, 0.7],
                max: [0.05, 0.05, 0.82],
                velocity: [0.0; 3],
                confuser: None,
            }],
        }
    }

    #[test]
    fn noiseless_round_trip_recovers_centroid() {
        let spec = one_object(0.0);
        let run = generate_synthetic(&spec, &SensorSettings::default()).unwrap();
        let truth = Vec3::new(0.0, 0.0, 0.76);
        assert_eq!(run.observations.len(), 31);
        for (f, p) in run.observations.frames().iter().zip(run.poses.poses()) {
            assert_eq!(f.observations.len(), 1);
            let b = observation_to_world_aabb(&f.observations[0], p, &CameraIntrinsics::default()).unwrap();
            assert!((b.center() - truth).norm() < 1e-6, "{:?}", b.center());
        }
    }

    #[test]
    fn seeds_change_noisy_pixels() {
        let mut a = one_object(2.0);
        let mut b = one_object(2.0);
        a.seed = 1;
        b.seed = 2;
        let s = SensorSettings::default();
        let ra = generate_synthetic(&a, &s).unwrap();
        let rb = generate_synthetic(&b, &s).unwrap();
        assert_ne!(ra.observations, rb.observations);
        let again = generate_synthetic(&a, &s).unwrap();
        assert_eq!(ra.observations, again.observations);
        assert_eq!(ra.poses, again.poses);
    }

    #[test]
    fn full_dropout_gives_empty_frames() {
        let mut spec = one_object(0.0);
        spec.dropout = 1.0;
        let run = generate_synthetic(&spec, &SensorSettings::default()).unwrap();
        assert!(run.observations.frames().iter().all(|f| f.observations.is_empty()));
        assert_eq!(run.observations.len(), 31);
    }

    #[test]
    fn empty_scene_rejected() {
        let mut spec = one_object(0.0);
        spec.objects.clear();
        assert_eq!(
            generate_synthetic(&spec, &SensorSettings::default()).unwrap_err(),
            IngestError::EmptyScene
        );
    }

    #[test]
    fn ground_truth_lists_true_relations() {
        let mut spec = one_object(0.0);
        spec.objects.push(ObjectSpec {
            name: Some("table".into()),
            class: "table".into(),
            min: [-0.5, -0.4, 0.0],
            max: [0.5, 0.4, 0.7],
            velocity: [0.0; 3],
            confuser: None,
        });
        let run = generate_synthetic(&spec, &SensorSettings::default()).unwrap();
        let gt = &run.ground_truth[0];
        assert!(gt.relations.contains(&Triple {
            subject: "cup_0".into(),
            relation: "on_top_of".into(),
            object: "table".into(),
        }));
        assert_eq!(gt.tracks.len(), 2);
        let text = write_ground_truth(&run.ground_truth);
        assert_eq!(parse_ground_truth(&text).unwrap(), run.ground_truth);
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = one_object(1.0);
        let back = SyntheticSceneSpec::from_toml(&spec.to_toml()).unwrap();
        assert_eq!(back, spec);
    }
}
