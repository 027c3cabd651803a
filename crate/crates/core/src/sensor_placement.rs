//! Proximity-sensor placement from logged contact points.
//!
//! Contact points recorded in the world frame are moved into the frame of the
//! link they touched (using the sample's own arm-2 configuration), snapped to
//! the nearest face of the link cuboid and expressed in that face's planar
//! coordinates. The sensor for a face sits at the mean of its hits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kinematics::{JointConfig, KinematicChain, DOF};

/// Hits farther than this from every face are rejected, meters.
pub const FACE_TOLERANCE: f64 = 1e-6;
/// Default minimum number of hits before a face gets a sensor.
pub const DEFAULT_MIN_HITS: usize = 30;
/// Links considered for sensors (1-based). The base column carries none.
pub const SENSOR_LINKS: std::ops::RangeInclusive<usize> = 2..=DOF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Face {
    #[serde(rename = "+X")]
    PosX,
    #[serde(rename = "-X")]
    NegX,
    #[serde(rename = "+Y")]
    PosY,
    #[serde(rename = "-Y")]
    NegY,
    #[serde(rename = "+Z")]
    PosZ,
    #[serde(rename = "-Z")]
    NegZ,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::PosX, Face::NegX, Face::PosY, Face::NegY, Face::PosZ, Face::NegZ];

    /// Normal axis and its sign.
    pub fn normal(self) -> (usize, f64) {
        match self {
            Face::PosX => (0, 1.0),
            Face::NegX => (0, -1.0),
            Face::PosY => (1, 1.0),
            Face::NegY => (1, -1.0),
            Face::PosZ => (2, 1.0),
            Face::NegZ => (2, -1.0),
        }
    }

    /// The two in-plane axes, in (u, v) order.
    pub fn plane_axes(self) -> (usize, usize) {
        match self.normal().0 {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Face::PosX => "+X",
            Face::NegX => "-X",
            Face::PosY => "+Y",
            Face::NegY => "-Y",
            Face::PosZ => "+Z",
            Face::NegZ => "-Z",
        }
    }

    /// File-name friendly label (`px`, `nx`, ...).
    pub fn slug(self) -> &'static str {
        match self {
            Face::PosX => "px",
            Face::NegX => "nx",
            Face::PosY => "py",
            Face::NegY => "ny",
            Face::PosZ => "pz",
            Face::NegZ => "nz",
        }
    }

    pub fn parse(s: &str) -> Option<Face> {
        Face::ALL.into_iter().find(|f| f.label() == s)
    }

    /// Half sizes of the face rectangle along (u, v).
    pub fn half_sizes(self, half_extents: &Vector3<f64>) -> [f64; 2] {
        let (u, v) = self.plane_axes();
        [half_extents[u], half_extents[v]]
    }

    /// Point on the face in cuboid coordinates.
    pub fn point(self, half_extents: &Vector3<f64>, uv: [f64; 2]) -> Vector3<f64> {
        let (n, s) = self.normal();
        let (u, v) = self.plane_axes();
        let mut p = Vector3::zeros();
        p[n] = s * half_extents[n];
        p[u] = uv[0];
        p[v] = uv[1];
        p
    }

    /// Distance from `p` (cuboid coordinates) to the face rectangle.
    pub fn distance(self, half_extents: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
        let (n, s) = self.normal();
        let (u, v) = self.plane_axes();
        let dn = p[n] - s * half_extents[n];
        let du = (p[u].abs() - half_extents[u]).max(0.0);
        let dv = (p[v].abs() - half_extents[v]).max(0.0);
        (dn * dn + du * du + dv * dv).sqrt()
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A contact point on one face of a link cuboid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceHit {
    pub link: usize,
    pub face: Face,
    pub uv: [f64; 2],
}

/// Nearest face of a cuboid to a point in cuboid coordinates. Ties go to the
/// earlier face in `Face::ALL`.
pub fn assign_face(half_extents: &Vector3<f64>, p: &Vector3<f64>, tol: f64) -> Option<(Face, [f64; 2])> {
    let mut best: Option<(Face, f64)> = None;
    for face in Face::ALL {
        let d = face.distance(half_extents, p);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((face, d));
        }
    }
    let (face, d) = best?;
    if d > tol {
        return None;
    }
    let (u, v) = face.plane_axes();
    Some((face, [p[u], p[v]]))
}

/// Maps a world point touching link `link` of `chain` at `config` onto a face.
pub fn tag_point(
    chain: &KinematicChain,
    link: usize,
    config: &JointConfig,
    point_world: &Vector3<f64>,
) -> Result<Option<FaceHit>> {
    let local = chain.world_to_link_frame(link, config, point_world)?;
    let cuboid = &chain.links[link - 1].cuboid;
    let in_box = cuboid.frame_offset.inverse().transform_point(&local);
    Ok(assign_face(&cuboid.half_extents, &in_box, FACE_TOLERANCE).map(|(face, uv)| FaceHit { link, face, uv }))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagReport {
    pub hits: Vec<FaceHit>,
    /// Points farther than the tolerance from every face.
    pub rejected: usize,
    /// Records on links that carry no sensors.
    pub skipped: usize,
}

/// Tags every logged contact point of the dataset onto arm-2 link faces.
pub fn tag_collision_points(ds: &Dataset, chain_b: &KinematicChain) -> Result<TagReport> {
    let mut report = TagReport::default();
    for s in &ds.samples {
        for c in &s.collisions {
            if !SENSOR_LINKS.contains(&c.link) {
                report.skipped += 1;
                continue;
            }
            match tag_point(chain_b, c.link, &s.theta_b, &Vector3::from(c.point_world))? {
                Some(hit) => report.hits.push(hit),
                None => report.rejected += 1,
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementStatistic {
    /// Component-wise mean of the hits.
    #[default]
    Mean,
    /// Component-wise median.
    Median,
    /// Centre of the fullest bin of a `mode_bins` x `mode_bins` histogram.
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementOptions {
    pub min_hits: usize,
    pub statistic: PlacementStatistic,
    pub mode_bins: usize,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions {
            min_hits: DEFAULT_MIN_HITS,
            statistic: PlacementStatistic::Mean,
            mode_bins: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPlacement {
    pub link: usize,
    pub face: Face,
    pub uv: [f64; 2],
    pub n_hits: usize,
}

impl SensorPlacement {
    /// Sensor position in the link frame.
    pub fn local_point(&self, chain: &KinematicChain) -> Vector3<f64> {
        let cuboid = &chain.links[self.link - 1].cuboid;
        cuboid
            .frame_offset
            .transform_point(&self.face.point(&cuboid.half_extents, self.uv))
    }

    /// Sensor position in the world at arm configuration `config`.
    pub fn world_point(&self, chain: &KinematicChain, config: &JointConfig) -> Result<Vector3<f64>> {
        chain.link_to_world_frame(self.link, config, &self.local_point(chain))
    }
}

fn face_hits(hits: &[FaceHit], link: usize, face: Face) -> Vec<[f64; 2]> {
    hits.iter()
        .filter(|h| h.link == link && h.face == face)
        .map(|h| h.uv)
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Unclamped placement statistic of a point cloud.
pub fn placement_statistic(uv: &[[f64; 2]], statistic: PlacementStatistic, half: [f64; 2], mode_bins: usize) -> [f64; 2] {
    let n = uv.len() as f64;
    match statistic {
        PlacementStatistic::Mean => {
            let su: f64 = uv.iter().map(|p| p[0]).sum();
            let sv: f64 = uv.iter().map(|p| p[1]).sum();
            [su / n, sv / n]
        }
        PlacementStatistic::Median => {
            let mut us: Vec<f64> = uv.iter().map(|p| p[0]).collect();
            let mut vs: Vec<f64> = uv.iter().map(|p| p[1]).collect();
            [median(&mut us), median(&mut vs)]
        }
        PlacementStatistic::Mode => {
            let h = Histogram::build(uv, half, mode_bins.max(1));
            let (mut bu, mut bv, mut best) = (0, 0, 0);
            for (i, row) in h.counts.iter().enumerate() {
                for (j, &c) in row.iter().enumerate() {
                    if c > best {
                        (bu, bv, best) = (i, j, c);
                    }
                }
            }
            [
                0.5 * (h.u_edges[bu] + h.u_edges[bu + 1]),
                0.5 * (h.v_edges[bv] + h.v_edges[bv + 1]),
            ]
        }
    }
}

/// Sensor location for one face: the configured statistic of its hits,
/// clamped onto the face rectangle.
pub fn optimal_placement(
    hits: &[FaceHit],
    chain: &KinematicChain,
    link: usize,
    face: Face,
    opts: &PlacementOptions,
) -> Result<SensorPlacement> {
    if !(1..=DOF).contains(&link) {
        return Err(Error::LinkIndex(link));
    }
    let uv = face_hits(hits, link, face);
    if uv.is_empty() || uv.len() < opts.min_hits {
        return Err(Error::InsufficientHits {
            link,
            face: face.label().to_string(),
            got: uv.len(),
            need: opts.min_hits.max(1),
        });
    }
    let half = face.half_sizes(&chain.links[link - 1].cuboid.half_extents);
    let raw = placement_statistic(&uv, opts.statistic, half, opts.mode_bins);
    Ok(SensorPlacement {
        link,
        face,
        uv: [raw[0].clamp(-half[0], half[0]), raw[1].clamp(-half[1], half[1])],
        n_hits: uv.len(),
    })
}

/// Placements for every face of every sensor link, plus the faces that had
/// too few hits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlacementSet {
    pub placements: Vec<SensorPlacement>,
    pub insufficient: Vec<(usize, Face, usize)>,
}

pub fn place_sensors(hits: &[FaceHit], chain: &KinematicChain, opts: &PlacementOptions) -> Result<PlacementSet> {
    let mut set = PlacementSet::default();
    for link in SENSOR_LINKS {
        for face in Face::ALL {
            match optimal_placement(hits, chain, link, face, opts) {
                Ok(p) => set.placements.push(p),
                Err(Error::InsufficientHits { got, .. }) => set.insufficient.push((link, face, got)),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct PlacementEntry {
    uv: [f64; 2],
    n_hits: usize,
}

impl PlacementSet {
    pub fn to_json(&self) -> Result<String> {
        let mut map: BTreeMap<String, BTreeMap<String, PlacementEntry>> = BTreeMap::new();
        for p in &self.placements {
            map.entry(p.link.to_string()).or_default().insert(
                p.face.label().to_string(),
                PlacementEntry {
                    uv: p.uv,
                    n_hits: p.n_hits,
                },
            );
        }
        Ok(serde_json::to_string_pretty(&map)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, BTreeMap<String, PlacementEntry>> = serde_json::from_str(text)?;
        let mut placements = Vec::new();
        for (link, faces) in map {
            let link: usize = link
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad link key {link:?}")))?;
            if !(1..=DOF).contains(&link) {
                return Err(Error::LinkIndex(link));
            }
            for (face, e) in faces {
                let face = Face::parse(&face).ok_or_else(|| Error::InvalidArgument(format!("bad face {face:?}")))?;
                placements.push(SensorPlacement {
                    link,
                    face,
                    uv: e.uv,
                    n_hits: e.n_hits,
                });
            }
        }
        placements.sort_by_key(|p| (p.link, p.face));
        Ok(PlacementSet {
            placements,
            insufficient: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

/// 2-D histogram of hits over a face rectangle. `counts[u_bin][v_bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub u_edges: Vec<f64>,
    pub v_edges: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
}

impl Histogram {
    fn build(uv: &[[f64; 2]], half: [f64; 2], bins: usize) -> Self {
        let edges = |h: f64| (0..=bins).map(|i| -h + 2.0 * h * i as f64 / bins as f64).collect::<Vec<_>>();
        let bin = |x: f64, h: f64| {
            let t = ((x + h) / (2.0 * h) * bins as f64).floor();
            (t.max(0.0) as usize).min(bins - 1)
        };
        let mut counts = vec![vec![0usize; bins]; bins];
        for p in uv {
            counts[bin(p[0], half[0])][bin(p[1], half[1])] += 1;
        }
        Histogram {
            u_edges: edges(half[0]),
            v_edges: edges(half[1]),
            counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u_bin,v_bin,u_lo,u_hi,v_lo,v_hi,count")?;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                writeln!(
                    w,
                    "{i},{j},{},{},{},{},{c}",
                    self.u_edges[i],
                    self.u_edges[i + 1],
                    self.v_edges[j],
                    self.v_edges[j + 1]
                )?;
            }
        }
        Ok(())
    }
}

/// Hit histogram over one face; bin edges span the face rectangle and
/// out-of-range values fall into the edge bins.
pub fn face_histogram(hits: &[FaceHit], chain: &KinematicChain, link: usize, face: Face, bins: usize) -> Result<Histogram> {
    if !(1..=DOF).contains(&link) {
        return Err(Error::LinkIndex(link));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let uv = face_hits(hits, link, face);
    if uv.is_empty() {
        return Err(Error::InsufficientHits {
            link,
            face: face.label().to_string(),
            got: 0,
            need: 1,
        });
    }
    let half = face.half_sizes(&chain.links[link - 1].cuboid.half_extents);
    Ok(Histogram::build(&uv, half, bins))
}
