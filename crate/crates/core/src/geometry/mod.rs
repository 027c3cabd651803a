//! Oriented-cuboid link geometry and inter-arm distance queries.
//!
//! Separated boxes get exact distances and witness points from GJK over their
//! eight vertices. Overlap is decided by the separating-axis test, and an
//! overlapping pair reports distance zero with witness points taken from the
//! vertices of the intersection polytope.

pub mod gjk;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{HomogeneousTransform, JointConfig, KinematicChain, DOF};

pub use gjk::{gjk_distance, GjkOutput};

/// Box geometry of one link, expressed in the link frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub half_extents: Vector3<f64>,
    pub frame_offset: HomogeneousTransform,
}

impl Cuboid {
    pub fn validate(&self) -> Result<()> {
        if !self.half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            return Err(Error::InvalidChain(format!(
                "cuboid half extents must be positive, got {:?}",
                self.half_extents.as_slice()
            )));
        }
        self.frame_offset.validate()
    }

    /// Places the cuboid given the world pose of its link frame.
    pub fn posed(&self, link_pose: &HomogeneousTransform) -> PosedCuboid {
        PosedCuboid {
            pose: link_pose.compose(&self.frame_offset),
            half_extents: self.half_extents,
        }
    }
}

/// A cuboid at a world pose; `pose` maps box coordinates to world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosedCuboid {
    pub pose: HomogeneousTransform,
    pub half_extents: Vector3<f64>,
}

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

impl PosedCuboid {
    pub fn new(pose: HomogeneousTransform, half_extents: Vector3<f64>) -> Self {
        PosedCuboid { pose, half_extents }
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.translation
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_extents.norm()
    }

    /// Vertex `i` has sign `+` on axis `k` when bit `k` of `i` is set.
    pub fn vertices(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|i| {
            let h = self.half_extents;
            let s = |bit: usize, v: f64| if i & (1 << bit) != 0 { v } else { -v };
            self.pose
                .transform_point(&Vector3::new(s(0, h.x), s(1, h.y), s(2, h.z)))
        })
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.rotation.transpose() * (p - self.pose.translation)
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k].abs() <= self.half_extents[k] + tol)
    }

    pub fn closest_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let l = self.to_local(p);
        let c = Vector3::from_fn(|k, _| l[k].clamp(-self.half_extents[k], self.half_extents[k]));
        self.pose.transform_point(&c)
    }

    /// Euclidean distance from `p` to the solid box (zero inside).
    pub fn distance_to_point(&self, p: &Vector3<f64>) -> f64 {
        let l = self.to_local(p);
        let mut sq = 0.0;
        for k in 0..3 {
            let excess = l[k].abs() - self.half_extents[k];
            if excess > 0.0 {
                sq += excess * excess;
            }
        }
        sq.sqrt()
    }

    fn on_surface(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let l = self.to_local(p);
        let inside = (0..3).all(|k| l[k].abs() <= self.half_extents[k] + tol);
        inside && (0..3).any(|k| l[k].abs() >= self.half_extents[k] - tol)
    }

    /// Projects an interior point onto the nearest face.
    fn project_to_surface(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut l = self.to_local(p);
        let mut axis = 0;
        let mut slack = f64::INFINITY;
        for k in 0..3 {
            let s = self.half_extents[k] - l[k].abs();
            if s < slack {
                slack = s;
                axis = k;
            }
        }
        l[axis] = self.half_extents[axis].copysign(if l[axis] == 0.0 { 1.0 } else { l[axis] });
        for k in 0..3 {
            l[k] = l[k].clamp(-self.half_extents[k], self.half_extents[k]);
        }
        self.pose.transform_point(&l)
    }

    /// Parameter interval of the segment `p0 + t (p1 - p0)`, `t` in [0,1],
    /// that lies inside the box.
    fn clip_segment(&self, p0: &Vector3<f64>, p1: &Vector3<f64>) -> Option<(f64, f64)> {
        let a = self.to_local(p0);
        let d = self.to_local(p1) - a;
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for k in 0..3 {
            let h = self.half_extents[k];
            if d[k].abs() < 1e-15 {
                if a[k].abs() > h {
                    return None;
                }
                continue;
            }
            let mut ta = (-h - a[k]) / d[k];
            let mut tb = (h - a[k]) / d[k];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    fn check_pose(&self) -> Result<()> {
        self.pose.validate()?;
        if !self.half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            return Err(Error::InvalidTransform("non-positive half extents".into()));
        }
        Ok(())
    }
}

/// Separating-axis overlap test for two oriented boxes. Touching counts as overlap.
pub fn obb_overlap(a: &PosedCuboid, b: &PosedCuboid) -> bool {
    let ra = a.pose.rotation;
    let rb = b.pose.rotation;
    let ha = a.half_extents;
    let hb = b.half_extents;
    // Rotation of b expressed in a's frame, and the centre offset in a's frame.
    let r = ra.transpose() * rb;
    let t = ra.transpose() * (b.center() - a.center());
    let abs_r = r.map(|v| v.abs() + 1e-12);

    for i in 0..3 {
        let rb_proj = hb.x * abs_r[(i, 0)] + hb.y * abs_r[(i, 1)] + hb.z * abs_r[(i, 2)];
        if t[i].abs() > ha[i] + rb_proj {
            return false;
        }
    }
    for j in 0..3 {
        let ra_proj = ha.x * abs_r[(0, j)] + ha.y * abs_r[(1, j)] + ha.z * abs_r[(2, j)];
        let tj = t.x * r[(0, j)] + t.y * r[(1, j)] + t.z * r[(2, j)];
        if tj.abs() > ra_proj + hb[j] {
            return false;
        }
    }
    for i in 0..3 {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        for j in 0..3 {
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            let ra_proj = ha[i1] * abs_r[(i2, j)] + ha[i2] * abs_r[(i1, j)];
            let rb_proj = hb[j1] * abs_r[(i, j2)] + hb[j2] * abs_r[(i, j1)];
            let tt = t[i2] * r[(i1, j)] - t[i1] * r[(i2, j)];
            if tt.abs() > ra_proj + rb_proj {
                return false;
            }
        }
    }
    true
}

/// Closest points between two boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoints {
    pub point_a: Vector3<f64>,
    pub point_b: Vector3<f64>,
    pub distance: f64,
}

/// Closest points between two arms, with the (1-based) link indices that
/// achieve the minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPair {
    pub point_a: Vector3<f64>,
    pub point_b: Vector3<f64>,
    pub distance: f64,
    pub link_a: usize,
    pub link_b: usize,
}

/// Exact minimum distance between two posed cuboids.
///
/// For overlapping boxes the distance is zero, `point_a` is the centroid of
/// the intersection polytope's vertices and `point_b` is a point of `b`'s
/// surface inside `a`.
pub fn min_distance_obb(a: &PosedCuboid, b: &PosedCuboid) -> Result<ClosestPoints> {
    a.check_pose()?;
    b.check_pose()?;
    Ok(min_distance_unchecked(a, b))
}

fn min_distance_unchecked(a: &PosedCuboid, b: &PosedCuboid) -> ClosestPoints {
    if obb_overlap(a, b) {
        return overlap_witness(a, b);
    }
    let va = a.vertices();
    let vb = b.vertices();
    let out = gjk_distance(&va, &vb);
    ClosestPoints {
        point_a: out.point_a,
        point_b: out.point_b,
        distance: out.distance,
    }
}

fn overlap_witness(a: &PosedCuboid, b: &PosedCuboid) -> ClosestPoints {
    const TOL: f64 = 1e-9;
    let mut region = Vec::new();
    let mut b_surface = Vec::new();
    let va = a.vertices();
    let vb = b.vertices();
    for &(i, j) in &EDGES {
        if let Some((t0, t1)) = b.clip_segment(&va[i], &va[j]) {
            for t in [t0, t1] {
                let p = va[i] + (va[j] - va[i]) * t;
                region.push(p);
                if b.on_surface(&p, TOL) {
                    b_surface.push(p);
                }
            }
        }
        if let Some((t0, t1)) = a.clip_segment(&vb[i], &vb[j]) {
            for t in [t0, t1] {
                let p = vb[i] + (vb[j] - vb[i]) * t;
                region.push(p);
                b_surface.push(p);
            }
        }
    }
    if region.is_empty() {
        // Boxes touch only within tolerance; fall back to GJK's witnesses.
        let out = gjk_distance(&va, &vb);
        return ClosestPoints {
            point_a: out.point_a,
            point_b: out.point_b,
            distance: 0.0,
        };
    }
    let centroid = region.iter().sum::<Vector3<f64>>() / region.len() as f64;
    let point_b = b_surface
        .iter()
        .fold(None::<(f64, Vector3<f64>)>, |best, p| {
            let d = (p - centroid).norm_squared();
            match best {
                Some((bd, _)) if bd <= d => best,
                _ => Some((d, *p)),
            }
        })
        .map(|(_, p)| p)
        .unwrap_or_else(|| b.project_to_surface(&centroid));
    ClosestPoints {
        point_a: centroid,
        point_b,
        distance: 0.0,
    }
}

fn check_configs(
    chain_a: &KinematicChain,
    config_a: &JointConfig,
    chain_b: &KinematicChain,
    config_b: &JointConfig,
) -> Result<([PosedCuboid; DOF], [PosedCuboid; DOF])> {
    Ok((chain_a.link_boxes(config_a)?, chain_b.link_boxes(config_b)?))
}

/// Global minimum distance over all 6x6 inter-arm link pairs. Ties go to the
/// lexicographically smallest `(link_a, link_b)`.
pub fn arm_pair_proximity(
    chain_a: &KinematicChain,
    config_a: &JointConfig,
    chain_b: &KinematicChain,
    config_b: &JointConfig,
) -> Result<ClosestPair> {
    let (boxes_a, boxes_b) = check_configs(chain_a, config_a, chain_b, config_b)?;
    Ok(boxes_proximity(&boxes_a, &boxes_b))
}

pub(crate) fn boxes_proximity(boxes_a: &[PosedCuboid; DOF], boxes_b: &[PosedCuboid; DOF]) -> ClosestPair {
    let mut best: Option<ClosestPair> = None;
    for (i, ba) in boxes_a.iter().enumerate() {
        for (j, bb) in boxes_b.iter().enumerate() {
            if let Some(b) = &best {
                // Bounding-sphere lower bound; strict so ties are still evaluated in order.
                let lower = (ba.center() - bb.center()).norm() - ba.bounding_radius() - bb.bounding_radius();
                if lower > b.distance {
                    continue;
                }
            }
            let cp = min_distance_unchecked(ba, bb);
            if best.as_ref().map_or(true, |b| cp.distance < b.distance) {
                best = Some(ClosestPair {
                    point_a: cp.point_a,
                    point_b: cp.point_b,
                    distance: cp.distance,
                    link_a: i + 1,
                    link_b: j + 1,
                });
            }
        }
    }
    best.expect("six links per arm")
}

/// True iff the two arms come within `clearance` meters of each other.
pub fn collides(
    chain_a: &KinematicChain,
    config_a: &JointConfig,
    chain_b: &KinematicChain,
    config_b: &JointConfig,
    clearance: f64,
) -> Result<bool> {
    if !(clearance >= 0.0) {
        return Err(Error::InvalidArgument(format!("clearance must be >= 0, got {clearance}")));
    }
    Ok(arm_pair_proximity(chain_a, config_a, chain_b, config_b)?.distance <= clearance)
}

/// Contact on one link of arm b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkContact {
    /// 1-based link index on arm b.
    pub link_b: usize,
    /// Witness on arm b's surface, world frame.
    pub point_world: Vector3<f64>,
}

/// Every arm-b link that overlaps some arm-a link, in link order. The witness
/// comes from the lowest-indexed arm-a link it overlaps.
pub fn arm_contacts(
    chain_a: &KinematicChain,
    config_a: &JointConfig,
    chain_b: &KinematicChain,
    config_b: &JointConfig,
) -> Result<Vec<LinkContact>> {
    let (boxes_a, boxes_b) = check_configs(chain_a, config_a, chain_b, config_b)?;
    Ok(boxes_contacts(&boxes_a, &boxes_b))
}

pub(crate) fn boxes_contacts(boxes_a: &[PosedCuboid; DOF], boxes_b: &[PosedCuboid; DOF]) -> Vec<LinkContact> {
    let mut out = Vec::new();
    for (j, bb) in boxes_b.iter().enumerate() {
        for ba in boxes_a {
            if obb_overlap(ba, bb) {
                let w = overlap_witness(ba, bb);
                out.push(LinkContact {
                    link_b: j + 1,
                    point_world: w.point_b,
                });
                break;
            }
        }
    }
    out
}

/// Distance from a world point to the nearest link cuboid of an arm.
pub fn point_to_arm_distance(boxes: &[PosedCuboid], p: &Vector3<f64>) -> f64 {
    boxes
        .iter()
        .map(|b| b.distance_to_point(p))
        .fold(f64::INFINITY, f64::min)
}
