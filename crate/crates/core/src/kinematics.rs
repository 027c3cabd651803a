//! Forward kinematics for a 6-DoF revolute serial chain and point transforms
//! between the world frame and individual link frames.
//!
//! A chain is a list of six links. Link `i` is attached to its parent by a
//! fixed offset followed by a rotation about the link's joint axis, so the
//! parent-to-child transform is `offset_i * Rot(axis_i, q_i)`. The cumulative
//! product over links `1..=k` gives the pose of link frame `k` in the world.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Cuboid;

pub const DOF: usize = 6;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Six joint angles of one arm, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub [f64; DOF]);

impl JointConfig {
    pub const ZERO: JointConfig = JointConfig([0.0; DOF]);

    pub fn new(angles: [f64; DOF]) -> Self {
        JointConfig(angles)
    }

    pub fn angles(&self) -> &[f64; DOF] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    /// Joint-space linear interpolation; `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn lerp(&self, other: &JointConfig, t: f64) -> JointConfig {
        let mut out = [0.0; DOF];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] + (other.0[i] - self.0[i]) * t;
        }
        JointConfig(out)
    }

    /// Largest absolute per-joint difference.
    pub fn linf_distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn l2_distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl HomogeneousTransform {
    pub fn identity() -> Self {
        HomogeneousTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform and checks that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = HomogeneousTransform {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        HomogeneousTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn from_axis_angle(axis: &Unit<Vector3<f64>>, angle: f64) -> Self {
        HomogeneousTransform {
            rotation: *Rotation3::from_axis_angle(axis, angle).matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn with_translation(mut self, t: Vector3<f64>) -> Self {
        self.translation = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("transform"));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        if off > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation not orthonormal (max |R^T R - I| = {off:e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!("det(R) = {det}")));
        }
        Ok(())
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &HomogeneousTransform) -> HomogeneousTransform {
        HomogeneousTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Closed-form rigid inverse `[R^T | -R^T t]`.
    pub fn inverse(&self) -> HomogeneousTransform {
        let rt = self.rotation.transpose();
        HomogeneousTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl Default for HomogeneousTransform {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl Serialize for HomogeneousTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = self.rotation[(row, col)];
            }
        }
        TransformRepr {
            r,
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HomogeneousTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        let rotation = Matrix3::from_row_slice(&repr.r);
        let translation = Vector3::from(repr.t);
        HomogeneousTransform::new(rotation, translation).map_err(serde::de::Error::custom)
    }
}

/// One revolute link: fixed offset from the parent frame, joint axis in the
/// offset frame, limits and collision geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    #[serde(with = "unit_axis")]
    pub axis: Unit<Vector3<f64>>,
    pub offset: HomogeneousTransform,
    pub limits: [f64; 2],
    pub cuboid: Cuboid,
}

mod unit_axis {
    use nalgebra::{Unit, Vector3};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &Unit<Vector3<f64>>, s: S) -> Result<S::Ok, S::Error> {
        [a.x, a.y, a.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Unit<Vector3<f64>>, D::Error> {
        let v = <[f64; 3]>::deserialize(d)?;
        let v = Vector3::from(v);
        let n = v.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(serde::de::Error::custom("joint axis must be a non-zero vector"));
        }
        Ok(Unit::new_normalize(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub links: Vec<LinkSpec>,
}

/// Lengths of the default links along their local z axes, meters.
pub const DEFAULT_LINK_LENGTHS: [f64; DOF] = [0.2, 0.25, 0.25, 0.2, 0.15, 0.1];
/// Half widths of the default link cuboids, meters.
pub const DEFAULT_HALF_WIDTHS: [f64; DOF] = [0.06, 0.055, 0.055, 0.05, 0.045, 0.04];

impl KinematicChain {
    pub fn new(links: Vec<LinkSpec>) -> Result<Self> {
        let chain = KinematicChain { links };
        chain.validate()?;
        Ok(chain)
    }

    /// Default 6-link arm mounted at `base`. Joint axes alternate Z/Y, each link
    /// extends along its own +z and its cuboid spans that extent.
    pub fn default_arm(base: HomogeneousTransform) -> Self {
        Self::revolute_arm(base, &DEFAULT_LINK_LENGTHS, &DEFAULT_HALF_WIDTHS)
    }

    /// Z/Y-alternating arm with the given link lengths and square cuboid
    /// half widths.
    pub fn revolute_arm(base: HomogeneousTransform, lengths: &[f64; DOF], half_widths: &[f64; DOF]) -> Self {
        let z = Vector3::z_axis();
        let y = Vector3::y_axis();
        let axes = [z, y, z, y, z, y];
        let links = (0..DOF)
            .map(|i| {
                let offset = if i == 0 {
                    base
                } else {
                    HomogeneousTransform::from_translation(0.0, 0.0, lengths[i - 1])
                };
                let len = lengths[i];
                let w = half_widths[i];
                LinkSpec {
                    axis: axes[i],
                    offset,
                    limits: [-PI, PI],
                    cuboid: Cuboid {
                        half_extents: Vector3::new(w, w, len / 2.0),
                        frame_offset: HomogeneousTransform::from_translation(0.0, 0.0, len / 2.0),
                    },
                }
            })
            .collect();
        KinematicChain { links }
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.len() != DOF {
            return Err(Error::InvalidChain(format!(
                "expected {DOF} links, found {}",
                self.links.len()
            )));
        }
        for (i, link) in self.links.iter().enumerate() {
            link.offset.validate()?;
            link.cuboid.validate()?;
            let [lo, hi] = link.limits;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidChain(format!("link {}: bad limits [{lo}, {hi}]", i + 1)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let chain: KinematicChain = serde_json::from_str(&text)?;
        chain.validate()?;
        Ok(chain)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn limits(&self) -> [[f64; 2]; DOF] {
        let mut out = [[0.0; 2]; DOF];
        for (o, l) in out.iter_mut().zip(&self.links) {
            *o = l.limits;
        }
        out
    }

    pub fn check_config(&self, config: &JointConfig) -> Result<()> {
        for (i, (&angle, link)) in config.0.iter().zip(&self.links).enumerate() {
            if !angle.is_finite() {
                return Err(Error::NonFinite("joint config"));
            }
            let [lo, hi] = link.limits;
            if angle < lo || angle > hi {
                return Err(Error::JointLimit {
                    joint: i,
                    angle,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Clamps each angle into its joint limits.
    pub fn clamp(&self, config: &JointConfig) -> JointConfig {
        let mut out = config.0;
        for (a, link) in out.iter_mut().zip(&self.links) {
            *a = a.clamp(link.limits[0], link.limits[1]);
        }
        JointConfig(out)
    }

    /// Parent-to-child transform of link `i` (0-based) at joint angle `angle`.
    pub fn joint_transform(&self, i: usize, angle: f64) -> HomogeneousTransform {
        let link = &self.links[i];
        link.offset
            .compose(&HomogeneousTransform::from_axis_angle(&link.axis, angle))
    }

    /// Cumulative world transform of link frame `link_index` (1-based).
    pub fn link_transform(&self, link_index: usize, config: &JointConfig) -> Result<HomogeneousTransform> {
        if !(1..=DOF).contains(&link_index) {
            return Err(Error::LinkIndex(link_index));
        }
        self.check_config(config)?;
        Ok(self.cumulative(link_index, config))
    }

    fn cumulative(&self, link_index: usize, config: &JointConfig) -> HomogeneousTransform {
        (0..link_index).fold(HomogeneousTransform::identity(), |acc, i| {
            acc.compose(&self.joint_transform(i, config.0[i]))
        })
    }

    /// World poses of all six link frames.
    pub fn forward_kinematics(&self, config: &JointConfig) -> Result<[HomogeneousTransform; DOF]> {
        self.check_config(config)?;
        Ok(self.poses_unchecked(config))
    }

    /// Forward kinematics without the joint-limit check. Callers guarantee the
    /// configuration came from this chain's limits.
    pub(crate) fn poses_unchecked(&self, config: &JointConfig) -> [HomogeneousTransform; DOF] {
        let mut out = [HomogeneousTransform::identity(); DOF];
        let mut acc = HomogeneousTransform::identity();
        for (i, pose) in out.iter_mut().enumerate() {
            acc = acc.compose(&self.joint_transform(i, config.0[i]));
            *pose = acc;
        }
        out
    }

    /// World poses of the six link cuboids (link frame composed with the
    /// cuboid's frame offset).
    pub fn link_boxes(&self, config: &JointConfig) -> Result<[crate::geometry::PosedCuboid; DOF]> {
        self.check_config(config)?;
        Ok(self.boxes_unchecked(config))
    }

    pub(crate) fn boxes_unchecked(&self, config: &JointConfig) -> [crate::geometry::PosedCuboid; DOF] {
        let poses = self.poses_unchecked(config);
        std::array::from_fn(|i| self.links[i].cuboid.posed(&poses[i]))
    }

    pub fn end_effector(&self, config: &JointConfig) -> Result<HomogeneousTransform> {
        Ok(self.forward_kinematics(config)?[DOF - 1])
    }

    /// Expresses a world point in the frame of link `link_index` (1-based).
    pub fn world_to_link_frame(
        &self,
        link_index: usize,
        config: &JointConfig,
        point_world: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        if !point_world.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        let t = self.link_transform(link_index, config)?;
        Ok(t.inverse().transform_point(point_world))
    }

    /// Maps a point given in the frame of link `link_index` into the world.
    pub fn link_to_world_frame(
        &self,
        link_index: usize,
        config: &JointConfig,
        point_local: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        if !point_local.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        let t = self.link_transform(link_index, config)?;
        Ok(t.transform_point(point_local))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(rng: &mut ChaCha8Rng) -> JointConfig {
        JointConfig(std::array::from_fn(|_| rng.gen_range(-PI..PI)))
    }

    fn chain() -> KinematicChain {
        let base = HomogeneousTransform::from_axis_angle(&Vector3::z_axis(), 0.3)
            .with_translation(Vector3::new(0.2, -0.1, 0.05));
        KinematicChain::default_arm(base)
    }

    fn max_abs(m: &Matrix4<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn zero_config_link1_is_fixed_offset() {
        let c = chain();
        let t = c.link_transform(1, &JointConfig::ZERO).unwrap();
        assert!(max_abs(&(t.to_matrix() - c.links[0].offset.to_matrix())) < 1e-15);
    }

    #[test]
    fn zero_config_poses_are_offset_products() {
        let c = chain();
        let poses = c.forward_kinematics(&JointConfig::ZERO).unwrap();
        let mut acc = Matrix4::identity();
        for (i, pose) in poses.iter().enumerate() {
            acc *= c.links[i].offset.to_matrix();
            assert!(max_abs(&(pose.to_matrix() - acc)) < 1e-15);
        }
    }

    #[test]
    fn recurrence_holds() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_config(&mut rng);
            for k in 2..=DOF {
                let prev = c.link_transform(k - 1, &q).unwrap();
                let step = c.joint_transform(k - 1, q.0[k - 1]);
                let expect = prev.compose(&step);
                let got = c.link_transform(k, &q).unwrap();
                assert_eq!(got, expect);
            }
        }
    }

    #[test]
    fn link6_matches_matrix_product() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = random_config(&mut rng);
            // Six explicit 4x4 products, each joint rotation built by Rodrigues' formula.
            let mut m = Matrix4::identity();
            for i in 0..DOF {
                let a = c.links[i].axis;
                let (s, co) = q.0[i].sin_cos();
                let k = Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
                let r = Matrix3::identity() + k * s + k * k * (1.0 - co);
                let mut rot4 = Matrix4::identity();
                rot4.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
                m = m * c.links[i].offset.to_matrix() * rot4;
            }
            let got = c.link_transform(6, &q).unwrap().to_matrix();
            assert!(max_abs(&(got - m)) < 1e-12);
            let ee = c.end_effector(&q).unwrap();
            assert!((ee.translation - m.fixed_view::<3, 1>(0, 3)).norm() < 1e-12);
        }
    }

    #[test]
    fn last_joint_only_moves_last_link() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_config(&mut rng);
        let mut q2 = q;
        q2.0[5] += 0.7;
        let a = c.forward_kinematics(&q).unwrap();
        let b = c.forward_kinematics(&q2).unwrap();
        for i in 0..5 {
            assert_eq!(a[i], b[i]);
        }
        assert!(max_abs(&(a[5].to_matrix() - b[5].to_matrix())) > 1e-3);
    }

    #[test]
    fn rotations_stay_orthonormal() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            for pose in c.forward_kinematics(&random_config(&mut rng)).unwrap() {
                pose.validate().unwrap();
            }
        }
    }

    #[test]
    fn frame_round_trip_and_matrix_inverse() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let q = random_config(&mut rng);
            let link = rng.gen_range(1..=DOF);
            let p = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let local = c.world_to_link_frame(link, &q, &p).unwrap();
            let back = c.link_to_world_frame(link, &q, &local).unwrap();
            assert!((back - p).norm() < 1e-9);

            let inv = c.link_transform(link, &q).unwrap().to_matrix().try_inverse().unwrap();
            let oracle = inv * p.push(1.0);
            assert!((local - oracle.xyz()).norm() < 1e-9);
        }
    }

    #[test]
    fn link_origin_maps_to_zero() {
        let c = chain();
        let q = JointConfig([0.1, -0.4, 0.9, 1.2, -2.0, 0.3]);
        for link in 1..=DOF {
            let origin = c.link_transform(link, &q).unwrap().translation;
            assert!(c.world_to_link_frame(link, &q, &origin).unwrap().norm() < 1e-12);
            let w = c.link_to_world_frame(link, &q, &Vector3::zeros()).unwrap();
            assert!((w - origin).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = chain();
        assert!(matches!(c.link_transform(0, &JointConfig::ZERO), Err(Error::LinkIndex(0))));
        assert!(matches!(c.link_transform(7, &JointConfig::ZERO), Err(Error::LinkIndex(7))));
        let mut q = JointConfig::ZERO;
        q.0[2] = 4.0;
        assert!(matches!(c.forward_kinematics(&q), Err(Error::JointLimit { joint: 2, .. })));
        let nan = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(c.world_to_link_frame(1, &JointConfig::ZERO, &nan).is_err());
    }

    #[test]
    fn rejects_non_orthonormal_transform() {
        let mut r = Matrix3::identity();
        r[(0, 1)] = 1e-6;
        assert!(HomogeneousTransform::new(r, Vector3::zeros()).is_err());
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(HomogeneousTransform::new(flip, Vector3::zeros()).is_err());
    }

    #[test]
    fn chain_json_round_trip() {
        let c = chain();
        let text = serde_json::to_string(&c).unwrap();
        let back: KinematicChain = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["links"][0]["offset"]["R"].as_array().unwrap().len(), 9);
        assert_eq!(v["links"][3]["cuboid"]["frame_offset"]["t"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn chain_requires_six_links() {
        let mut c = chain();
        c.links.pop();
        assert!(matches!(c.validate(), Err(Error::InvalidChain(_))));
    }
}
