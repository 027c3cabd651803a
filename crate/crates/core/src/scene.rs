//! The two-arm cell: an obstacle arm (arm 1) and the planning arm (arm 2).

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{self, ClosestPair, LinkContact, PosedCuboid};
use crate::kinematics::{HomogeneousTransform, JointConfig, KinematicChain, DOF};

/// Distance between the two arm bases in the default cell, meters.
pub const DEFAULT_BASE_SEPARATION: f64 = 0.5;

/// Joint limits of the default cell. Base yaw and shoulder pitch keep each arm
/// leaning into the shared workspace between the bases; the elbow stops short
/// of folding onto itself; the roll and wrist joints stay within a half turn.
pub const CELL_JOINT_LIMITS: [[f64; 2]; DOF] = [
    [-PI / 2.0, PI / 2.0],
    [0.0, PI / 2.0],
    [-PI / 2.0, PI / 2.0],
    [-0.75 * PI, 0.75 * PI],
    [-PI / 2.0, PI / 2.0],
    [-PI / 2.0, PI / 2.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Obstacle arm.
    pub arm_a: KinematicChain,
    /// Planning arm.
    pub arm_b: KinematicChain,
}

impl Default for Scene {
    fn default() -> Self {
        Scene::with_separation(DEFAULT_BASE_SEPARATION)
    }
}

impl Scene {
    /// Default arms facing each other along the world x axis, bases
    /// `separation` meters apart.
    pub fn with_separation(separation: f64) -> Self {
        let base_b = HomogeneousTransform::from_axis_angle(&Vector3::z_axis(), PI)
            .with_translation(Vector3::new(separation, 0.0, 0.0));
        let mut arm_a = KinematicChain::default_arm(HomogeneousTransform::identity());
        let mut arm_b = KinematicChain::default_arm(base_b);
        for chain in [&mut arm_a, &mut arm_b] {
            for (link, limits) in chain.links.iter_mut().zip(CELL_JOINT_LIMITS) {
                link.limits = limits;
            }
        }
        Scene { arm_a, arm_b }
    }

    pub fn load(chain_a: &Path, chain_b: &Path) -> Result<Self> {
        Ok(Scene {
            arm_a: KinematicChain::load(chain_a)?,
            arm_b: KinematicChain::load(chain_b)?,
        })
    }

    pub fn boxes(&self, config_a: &JointConfig, config_b: &JointConfig) -> Result<([PosedCuboid; DOF], [PosedCuboid; DOF])> {
        Ok((self.arm_a.link_boxes(config_a)?, self.arm_b.link_boxes(config_b)?))
    }

    pub fn proximity(&self, config_a: &JointConfig, config_b: &JointConfig) -> Result<ClosestPair> {
        geometry::arm_pair_proximity(&self.arm_a, config_a, &self.arm_b, config_b)
    }

    pub fn collides(&self, config_a: &JointConfig, config_b: &JointConfig, clearance: f64) -> Result<bool> {
        geometry::collides(&self.arm_a, config_a, &self.arm_b, config_b, clearance)
    }

    pub fn contacts(&self, config_a: &JointConfig, config_b: &JointConfig) -> Result<Vec<LinkContact>> {
        geometry::arm_contacts(&self.arm_a, config_a, &self.arm_b, config_b)
    }
}
