//! Random dual-arm pose samples labelled with a collision flag, plus the
//! arm-2 contact points of colliding samples.
//!
//! Each sample draws its own ChaCha stream (`seed`, stream = sample index), so
//! generation runs in parallel and still produces the same bytes for a given
//! seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointConfig, KinematicChain, DOF};
use crate::scene::Scene;

/// `I_F` value of a colliding pose.
pub const FLAG_COLLIDING: u8 = 0;
/// `I_F` value of a collision-free pose.
pub const FLAG_SAFE: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionRecord {
    /// 1-based link index on arm 2.
    pub link: usize,
    pub point_world: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub theta_a: JointConfig,
    pub theta_b: JointConfig,
    pub flag: u8,
    pub collisions: Vec<CollisionRecord>,
}

impl Sample {
    pub fn is_safe(&self) -> bool {
        self.flag == FLAG_SAFE
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta_a.is_finite() || !self.theta_b.is_finite() {
            return Err(Error::NonFinite("sample joint angles"));
        }
        match (self.flag, self.collisions.is_empty()) {
            (FLAG_SAFE, true) | (FLAG_COLLIDING, false) => {}
            (FLAG_SAFE, false) | (FLAG_COLLIDING, true) => {
                return Err(Error::InvalidArgument(format!(
                    "flag {} inconsistent with {} collision records",
                    self.flag,
                    self.collisions.len()
                )))
            }
            (f, _) => return Err(Error::InvalidArgument(format!("flag must be 0 or 1, got {f}"))),
        }
        for c in &self.collisions {
            if !(1..=DOF).contains(&c.link) {
                return Err(Error::LinkIndex(c.link));
            }
            if !c.point_world.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("collision point"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Generation seed; unknown for datasets read back from disk.
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn collision_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let colliding = self.samples.iter().filter(|s| !s.is_safe()).count();
        colliding as f64 / self.samples.len() as f64
    }
}

/// Each angle uniform over its joint limits.
pub fn sample_random_config<R: Rng + ?Sized>(chain: &KinematicChain, rng: &mut R) -> JointConfig {
    let mut q = [0.0; DOF];
    for (a, link) in q.iter_mut().zip(&chain.links) {
        let [lo, hi] = link.limits;
        let u: f64 = rng.gen();
        *a = lo + (hi - lo) * u;
    }
    JointConfig(q)
}

/// Labels one pose pair: flag from overlap at zero clearance, contacts on every
/// overlapping arm-2 link.
pub fn label_sample(scene: &Scene, theta_a: JointConfig, theta_b: JointConfig) -> Result<Sample> {
    let contacts = scene.contacts(&theta_a, &theta_b)?;
    let flag = if contacts.is_empty() { FLAG_SAFE } else { FLAG_COLLIDING };
    Ok(Sample {
        theta_a,
        theta_b,
        flag,
        collisions: contacts
            .into_iter()
            .map(|c| CollisionRecord {
                link: c.link_b,
                point_world: [c.point_world.x, c.point_world.y, c.point_world.z],
            })
            .collect(),
    })
}

pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_dataset(scene: &Scene, n_samples: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let theta_a = sample_random_config(&scene.arm_a, &mut rng);
            let theta_b = sample_random_config(&scene.arm_b, &mut rng);
            label_sample(scene, theta_a, theta_b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        seed: Some(seed),
    })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for s in &ds.samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io("writing dataset", e))?;
    }
    w.flush().map_err(|e| Error::io("writing dataset", e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let sample: Sample = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        sample.validate().map_err(|e| parse_err(e.to_string()))?;
        samples.push(sample);
    }
    Ok(Dataset { samples, seed: None })
}
