//! Executes roadmap paths on arm 2 while arm 1 follows a scripted motion.
//!
//! Each edge is a joint-space linear interpolation over a fixed number of
//! substeps. At every substep the placed sensors are read; a reading below
//! `d_safe` while moving forward is a violation event: the upcoming node is
//! blacklisted, the arm retreats to the last reached node and the path is
//! replanned from there. A true collision check runs at every substep and
//! ends the episode on contact.

use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_random_config, sample_rng};
use crate::error::{Error, Result};
use crate::geometry::point_to_arm_distance;
use crate::kinematics::{JointConfig, KinematicChain, DOF};
use crate::roadmap::{LatentGraph, PathResult};
use crate::scene::Scene;
use crate::sensor_placement::{Face, SensorPlacement};

pub const DEFAULT_D_SAFE: f64 = 0.05;
pub const DEFAULT_SUBSTEPS: usize = 10;
pub const DEFAULT_MAX_STEPS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub link: usize,
    pub face: Face,
    pub uv: [f64; 2],
    /// Distance from the sensor point to the nearest arm-1 cuboid.
    pub distance: f64,
    pub step: usize,
}

pub fn simulate_readings(
    placements: &[SensorPlacement],
    chain_b: &KinematicChain,
    config_b: &JointConfig,
    chain_a: &KinematicChain,
    config_a: &JointConfig,
    step: usize,
) -> Result<Vec<SensorReading>> {
    if placements.is_empty() {
        return Ok(Vec::new());
    }
    let boxes_a = chain_a.link_boxes(config_a)?;
    placements
        .iter()
        .map(|p| {
            let world = p.world_point(chain_b, config_b)?;
            Ok(SensorReading {
                link: p.link,
                face: p.face,
                uv: p.uv,
                distance: point_to_arm_distance(&boxes_a, &world),
                step,
            })
        })
        .collect()
}

/// Arm-1 motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstacleScript {
    Parked {
        config: JointConfig,
    },
    /// Back and forth along the waypoint polyline at `speed` rad/s (L∞).
    Sweep {
        waypoints: Vec<JointConfig>,
        speed: f64,
    },
    /// Once along the waypoint polyline at `speed` rad/s (L∞), then parked at
    /// the last waypoint.
    Reach {
        waypoints: Vec<JointConfig>,
        speed: f64,
        /// Seconds spent at each waypoint before moving on; missing entries
        /// are zero.
        #[serde(default)]
        dwell: Vec<f64>,
    },
    /// Greedy coordinate steps that bring arm 1's end effector toward arm 2's.
    Chase {
        start: JointConfig,
        speed: f64,
    },
}

impl ObstacleScript {
    fn validate(&self, chain: &KinematicChain) -> Result<()> {
        let check_speed = |s: f64| {
            if s.is_finite() && s > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("obstacle speed must be positive, got {s}")))
            }
        };
        match self {
            ObstacleScript::Parked { config } => chain.check_config(config),
            ObstacleScript::Reach { dwell, .. } if dwell.iter().any(|d| !(d.is_finite() && *d >= 0.0)) => {
                Err(Error::InvalidArgument("dwell times must be finite and non-negative".into()))
            }
            ObstacleScript::Sweep { waypoints, speed } | ObstacleScript::Reach { waypoints, speed, .. } => {
                check_speed(*speed)?;
                if waypoints.is_empty() {
                    return Err(Error::InvalidArgument("sweep needs at least one waypoint".into()));
                }
                waypoints.iter().try_for_each(|w| chain.check_config(w))
            }
            ObstacleScript::Chase { start, speed } => {
                check_speed(*speed)?;
                chain.check_config(start)
            }
        }
    }

    fn initial(&self) -> JointConfig {
        match self {
            ObstacleScript::Parked { config } => *config,
            ObstacleScript::Sweep { waypoints, .. } | ObstacleScript::Reach { waypoints, .. } => waypoints[0],
            ObstacleScript::Chase { start, .. } => *start,
        }
    }
}

fn sweep_at(waypoints: &[JointConfig], speed: f64, t: f64) -> JointConfig {
    let durations: Vec<f64> = waypoints.windows(2).map(|w| w[0].linf_distance(&w[1]) / speed).collect();
    let total: f64 = durations.iter().sum();
    if total <= 0.0 {
        return waypoints[0];
    }
    let mut s = t % (2.0 * total);
    if s > total {
        s = 2.0 * total - s;
    }
    for (i, d) in durations.iter().enumerate() {
        if s <= *d {
            return waypoints[i].lerp(&waypoints[i + 1], if *d > 0.0 { s / d } else { 1.0 });
        }
        s -= d;
    }
    *waypoints.last().expect("non-empty")
}

fn reach_at(waypoints: &[JointConfig], dwell: &[f64], speed: f64, t: f64) -> JointConfig {
    let mut s = t;
    for (i, w) in waypoints.iter().enumerate() {
        s -= dwell.get(i).copied().unwrap_or(0.0);
        if s <= 0.0 {
            return *w;
        }
        let Some(next) = waypoints.get(i + 1) else { break };
        let d = w.linf_distance(next) / speed;
        if s < d {
            return w.lerp(next, s / d);
        }
        s -= d;
    }
    *waypoints.last().expect("non-empty")
}

struct Obstacle<'a> {
    script: &'a ObstacleScript,
    q: JointConfig,
}

impl<'a> Obstacle<'a> {
    fn new(script: &'a ObstacleScript) -> Self {
        Obstacle {
            script,
            q: script.initial(),
        }
    }

    fn advance(&mut self, t: f64, dt: f64, scene: &Scene, q_b: &JointConfig) -> Result<JointConfig> {
        match self.script {
            ObstacleScript::Parked { config } => self.q = *config,
            ObstacleScript::Sweep { waypoints, speed } => self.q = sweep_at(waypoints, *speed, t),
            ObstacleScript::Reach { waypoints, speed, dwell } => self.q = reach_at(waypoints, dwell, *speed, t),
            ObstacleScript::Chase { speed, .. } => {
                let target = scene.arm_b.end_effector(q_b)?.translation;
                let dist = |q: &JointConfig| -> Result<f64> {
                    Ok((scene.arm_a.end_effector(q)?.translation - target).norm())
                };
                let step = speed * dt;
                let mut best = (dist(&self.q)?, self.q);
                for j in 0..DOF {
                    for sign in [1.0, -1.0] {
                        let mut c = self.q;
                        c.0[j] += sign * step;
                        let c = scene.arm_a.clamp(&c);
                        let d = dist(&c)?;
                        if d < best.0 {
                            best = (d, c);
                        }
                    }
                }
                self.q = best.1;
            }
        }
        Ok(self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionParams {
    /// Joint speed, rad/s.
    pub omega: f64,
    /// Shortest simulated substep, s.
    pub dt_min: f64,
    /// Duration of one holding substep, s.
    pub hold_dt: f64,
    /// Holds and back-offs allowed before an edge is attempted anyway.
    pub max_hold: usize,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            omega: 1.0,
            dt_min: 0.001,
            hold_dt: 0.05,
            max_hold: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub start: JointConfig,
    pub goals: Vec<JointConfig>,
    pub obstacle_script: ObstacleScript,
    pub d_safe: f64,
    pub max_steps: usize,
    pub interp_substeps: usize,
    pub seed: u64,
    #[serde(default)]
    pub motion: MotionParams,
}

impl EpisodeConfig {
    fn validate(&self, scene: &Scene) -> Result<()> {
        if !(self.d_safe > 0.0) {
            return Err(Error::InvalidArgument(format!("d_safe must be > 0, got {}", self.d_safe)));
        }
        if self.goals.is_empty() {
            return Err(Error::InvalidArgument("episode needs at least one goal".into()));
        }
        if self.interp_substeps == 0 {
            return Err(Error::InvalidArgument("interp_substeps must be >= 1".into()));
        }
        let m = &self.motion;
        if !(m.omega > 0.0 && m.dt_min > 0.0 && m.hold_dt > 0.0) {
            return Err(Error::InvalidArgument("motion parameters must be positive".into()));
        }
        scene.arm_b.check_config(&self.start)?;
        self.goals.iter().try_for_each(|g| scene.arm_b.check_config(g))?;
        self.obstacle_script.validate(&scene.arm_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Move,
    Retreat,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    NoPath { start_component: usize, goal_component: usize },
    MaxSteps,
    Collision { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub theta_a: JointConfig,
    pub theta_b: JointConfig,
    /// One distance per sensor, in placement order.
    pub readings: Vec<f64>,
    pub phase: Phase,
    pub target: Option<usize>,
    pub anchor: Option<usize>,
    /// Index into [`EpisodeOutcome::paths`].
    pub path: usize,
    pub violation: bool,
    pub event: bool,
    pub collision: bool,
    /// Node reached at the end of this substep.
    pub reached: Option<usize>,
}

/// Deterministic part of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub failure: Option<Failure>,
    pub replans: usize,
    pub goals_reached: usize,
    pub steps: usize,
    /// Σ L∞ joint distance / ω over every executed substep.
    pub motion_time: f64,
    /// Every path that was active, initial plans and replans alike.
    pub paths: Vec<Vec<usize>>,
    /// Nodes reached, in order.
    pub executed: Vec<usize>,
    pub blacklisted: Vec<usize>,
}

/// Wall-clock planning cost; varies between runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTiming {
    pub plan_s: f64,
    pub replan_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub outcome: EpisodeOutcome,
    pub trace: Vec<TraceRecord>,
    pub timing: EpisodeTiming,
}

impl EpisodeResult {
    /// T = planning + replanning wall-clock + simulated motion time.
    pub fn total_runtime(&self) -> f64 {
        self.timing.plan_s + self.timing.replan_s.iter().sum::<f64>() + self.outcome.motion_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub successes: usize,
    /// Percent.
    pub sr: f64,
    pub t_mean: f64,
    pub replans_mean: f64,
    /// Median replan latency over all replans, seconds; `None` without replans.
    pub median_replan_s: Option<f64>,
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no episode results".into()));
    }
    let n = results.len();
    let successes = results.iter().filter(|r| r.outcome.success).count();
    let mut lat: Vec<f64> = results.iter().flat_map(|r| r.timing.replan_s.iter().copied()).collect();
    lat.sort_by(f64::total_cmp);
    let median_replan_s = match lat.len() {
        0 => None,
        m if m % 2 == 1 => Some(lat[m / 2]),
        m => Some(0.5 * (lat[m / 2 - 1] + lat[m / 2])),
    };
    Ok(Metrics {
        episodes: n,
        successes,
        sr: 100.0 * successes as f64 / n as f64,
        t_mean: results.iter().map(EpisodeResult::total_runtime).sum::<f64>() / n as f64,
        replans_mean: results.iter().map(|r| r.outcome.replans as f64).sum::<f64>() / n as f64,
        median_replan_s,
    })
}

/// Shared, immutable planning context. Start and goal configurations are
/// mapped onto the largest safe component.
pub struct Planner<'a> {
    pub graph: &'a LatentGraph,
    pub placements: &'a [SensorPlacement],
    pub scene: &'a Scene,
    component: Vec<usize>,
}

struct Segment {
    phase: Phase,
    from: JointConfig,
    to: JointConfig,
    n: usize,
    k: usize,
    dt: f64,
}

impl<'a> Planner<'a> {
    pub fn new(graph: &'a LatentGraph, placements: &'a [SensorPlacement], scene: &'a Scene) -> Result<Self> {
        let component: Vec<usize> = graph.largest_component().into_iter().collect();
        if component.is_empty() {
            return Err(Error::NoSafeNodes);
        }
        Ok(Planner {
            graph,
            placements,
            scene,
            component,
        })
    }

    /// Largest safe component, ascending ids.
    pub fn component(&self) -> &[usize] {
        &self.component
    }

    pub fn theta(&self, id: usize) -> JointConfig {
        self.graph.nodes[id].theta_b
    }

    /// Component node whose `theta_b` is closest (L2) to `q`; ties go to the
    /// smaller id.
    pub fn nearest_node(&self, q: &JointConfig) -> usize {
        let mut best = (f64::INFINITY, self.component[0]);
        for &id in &self.component {
            let d = self.theta(id).l2_distance(q);
            if d < best.0 {
                best = (d, id);
            }
        }
        best.1
    }

    fn readings(&self, q_a: &JointConfig, q_b: &JointConfig, step: usize) -> Result<Vec<f64>> {
        Ok(simulate_readings(self.placements, &self.scene.arm_b, q_b, &self.scene.arm_a, q_a, step)?
            .into_iter()
            .map(|r| r.distance)
            .collect())
    }

    pub fn run_episode(&self, ec: &EpisodeConfig) -> Result<EpisodeResult> {
        ec.validate(self.scene)?;
        Episode::new(self, ec).run()
    }

    /// Runs episodes in parallel; results keep the input order.
    pub fn run_batch(&self, configs: &[EpisodeConfig]) -> Result<Vec<EpisodeResult>> {
        configs.par_iter().map(|ec| self.run_episode(ec)).collect()
    }
}

struct Episode<'p, 'a> {
    p: &'p Planner<'a>,
    ec: &'p EpisodeConfig,
    obstacle: Obstacle<'p>,
    goal_nodes: Vec<usize>,
    start_node: usize,
    q_a: JointConfig,
    q_b: JointConfig,
    t: f64,
    step: usize,
    anchor: Option<usize>,
    anchor_q: JointConfig,
    upcoming: VecDeque<usize>,
    blacklist: BTreeSet<usize>,
    leg: usize,
    holds: usize,
    /// Nodes reached by forward moves, most recent last; backing off pops it.
    trail: Vec<usize>,
    backing_off: Option<usize>,
    last_min: f64,
    segment: Option<Segment>,
    outcome: EpisodeOutcome,
    trace: Vec<TraceRecord>,
    timing: EpisodeTiming,
}

impl<'p, 'a> Episode<'p, 'a> {
    fn new(p: &'p Planner<'a>, ec: &'p EpisodeConfig) -> Self {
        let obstacle = Obstacle::new(&ec.obstacle_script);
        let q_a = obstacle.q;
        Episode {
            p,
            ec,
            obstacle,
            goal_nodes: ec.goals.iter().map(|g| p.nearest_node(g)).collect(),
            start_node: p.nearest_node(&ec.start),
            q_a,
            q_b: ec.start,
            t: 0.0,
            step: 0,
            anchor: None,
            anchor_q: ec.start,
            upcoming: VecDeque::new(),
            blacklist: BTreeSet::new(),
            leg: 0,
            holds: 0,
            trail: Vec::new(),
            backing_off: None,
            last_min: f64::INFINITY,
            segment: None,
            outcome: EpisodeOutcome {
                success: false,
                failure: None,
                replans: 0,
                goals_reached: 0,
                steps: 0,
                motion_time: 0.0,
                paths: Vec::new(),
                executed: Vec::new(),
                blacklisted: Vec::new(),
            },
            trace: Vec::new(),
            timing: EpisodeTiming::default(),
        }
    }

    fn goal(&self) -> usize {
        self.goal_nodes[self.leg]
    }

    fn finish(mut self, failure: Option<Failure>) -> Result<EpisodeResult> {
        self.outcome.success = failure.is_none();
        self.outcome.failure = failure;
        self.outcome.steps = self.step;
        Ok(EpisodeResult {
            outcome: self.outcome,
            trace: self.trace,
            timing: self.timing,
        })
    }

    /// Plans from the anchor (or the start node before it is reached) to the
    /// current goal and installs the path.
    fn plan(&mut self, replanning: bool) -> std::result::Result<(), Failure> {
        let from = self.anchor.unwrap_or(self.start_node);
        let clock = Instant::now();
        let res = self.p.graph.shortest_path(from, self.goal(), &self.blacklist);
        let elapsed = clock.elapsed().as_secs_f64();
        if replanning {
            self.timing.replan_s.push(elapsed);
        } else {
            self.timing.plan_s += elapsed;
        }
        match res {
            Ok(PathResult { nodes, .. }) => {
                let skip = usize::from(self.anchor.is_some());
                self.upcoming = nodes.iter().skip(skip).copied().collect();
                self.outcome.paths.push(nodes);
                Ok(())
            }
            Err(Error::NoPath {
                start_component,
                goal_component,
                ..
            }) => Err(Failure::NoPath {
                start_component,
                goal_component,
            }),
            // Endpoints are component nodes and never blacklisted.
            Err(e) => unreachable!("planner invariant violated: {e}"),
        }
    }

    fn segment_to(&self, phase: Phase, to: JointConfig) -> Option<Segment> {
        let dist = self.q_b.linf_distance(&to);
        if dist == 0.0 {
            return None;
        }
        let n = self.ec.interp_substeps;
        Some(Segment {
            phase,
            from: self.q_b,
            to,
            n,
            k: 0,
            dt: (dist / self.ec.motion.omega / n as f64).max(self.ec.motion.dt_min),
        })
    }

    /// Forward arrival at the head of the active path.
    fn reach(&mut self, node: usize) {
        self.upcoming.pop_front();
        self.trail.push(node);
        self.arrive(node);
    }

    fn arrive(&mut self, node: usize) {
        self.anchor = Some(node);
        self.anchor_q = self.p.theta(node);
        self.outcome.executed.push(node);
        if let Some(last) = self.trace.last_mut() {
            if last.step == self.step {
                last.reached = Some(node);
            }
        }
    }

    fn run(mut self) -> Result<EpisodeResult> {
        self.last_min = self
            .p
            .readings(&self.q_a, &self.q_b, 0)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if let Err(f) = self.plan(false) {
            return self.finish(Some(f));
        }
        loop {
            if self.segment.is_none() {
                let Some(&target) = self.upcoming.front() else {
                    // Leg complete.
                    self.outcome.goals_reached += 1;
                    self.leg += 1;
                    if self.leg == self.goal_nodes.len() {
                        return self.finish(None);
                    }
                    self.blacklist.clear();
                    if let Err(f) = self.plan(false) {
                        return self.finish(Some(f));
                    }
                    continue;
                };
                if self.last_min < self.ec.d_safe && self.holds < self.ec.motion.max_hold {
                    self.holds += 1;
                    // Still too close at a node: back off one node along the
                    // trail if possible, otherwise wait in place.
                    let back = match self.trail.as_slice() {
                        [.., prev, _] if !self.blacklist.contains(prev) => Some(*prev),
                        _ => None,
                    };
                    if let Some(prev) = back {
                        if let Some(seg) = self.segment_to(Phase::Retreat, self.p.theta(prev)) {
                            self.trail.pop();
                            self.backing_off = Some(prev);
                            self.segment = Some(seg);
                            continue;
                        }
                    }
                    self.segment = Some(Segment {
                        phase: Phase::Hold,
                        from: self.q_b,
                        to: self.q_b,
                        n: 1,
                        k: 0,
                        dt: self.ec.motion.hold_dt,
                    });
                } else {
                    self.holds = 0;
                    match self.segment_to(Phase::Move, self.p.theta(target)) {
                        Some(s) => self.segment = Some(s),
                        None => {
                            self.reach(target);
                            continue;
                        }
                    }
                }
            }

            if self.step >= self.ec.max_steps {
                return self.finish(Some(Failure::MaxSteps));
            }
            let seg = self.segment.as_mut().expect("segment set above");
            seg.k += 1;
            let (phase, done, dt) = (seg.phase, seg.k == seg.n, seg.dt);
            let next_q = if done { seg.to } else { seg.from.lerp(&seg.to, seg.k as f64 / seg.n as f64) };
            self.step += 1;
            self.t += dt;
            self.outcome.motion_time += self.q_b.linf_distance(&next_q) / self.ec.motion.omega;
            self.q_b = next_q;
            self.q_a = self.obstacle.advance(self.t, dt, self.p.scene, &self.q_b)?;

            let collision = self.p.scene.collides(&self.q_a, &self.q_b, 0.0)?;
            let readings = self.p.readings(&self.q_a, &self.q_b, self.step)?;
            self.last_min = readings.iter().copied().fold(f64::INFINITY, f64::min);
            let violation = self.last_min < self.ec.d_safe;
            let event = violation && phase == Phase::Move && !collision;
            let target = self.upcoming.front().copied();
            self.trace.push(TraceRecord {
                step: self.step,
                time: self.t,
                theta_a: self.q_a,
                theta_b: self.q_b,
                readings,
                phase,
                target,
                anchor: self.anchor,
                path: self.outcome.paths.len() - 1,
                violation,
                event,
                collision,
                reached: None,
            });
            if collision {
                let step = self.step;
                return self.finish(Some(Failure::Collision { step }));
            }

            if event {
                self.outcome.replans += 1;
                let target = target.expect("moving toward a node");
                let protected = target == self.goal() || self.anchor.is_none();
                if !protected && self.blacklist.insert(target) {
                    self.outcome.blacklisted.push(target);
                }
                if let Err(f) = self.plan(true) {
                    return self.finish(Some(f));
                }
                self.segment = self.segment_to(Phase::Retreat, self.anchor_q);
                continue;
            }
            if done {
                self.segment = None;
                if phase == Phase::Move {
                    let target = target.expect("moving toward a node");
                    self.reach(target);
                } else if let Some(prev) = self.backing_off.take() {
                    self.arrive(prev);
                    if let Err(f) = self.plan(true) {
                        return self.finish(Some(f));
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// One goal.
    A,
    /// Three sequential goals.
    B,
}

impl Mode {
    pub fn n_goals(self) -> usize {
        match self {
            Mode::A => 1,
            Mode::B => 3,
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "A" | "a" => Some(Mode::A),
            "B" | "b" => Some(Mode::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchParams {
    pub d_safe: f64,
    pub interp_substeps: usize,
    pub max_steps: usize,
    /// Arm-1 sweep speed, rad/s.
    pub obstacle_speed: f64,
    /// Clearance arm 1's sweep keeps from arm 2 at the start and every goal.
    pub task_clearance: f64,
    /// Seconds arm 1 stays at each excursion pose.
    pub obstacle_dwell: f64,
    pub motion: MotionParams,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            d_safe: DEFAULT_D_SAFE,
            interp_substeps: DEFAULT_SUBSTEPS,
            max_steps: DEFAULT_MAX_STEPS,
            obstacle_speed: 0.5,
            task_clearance: 0.05,
            obstacle_dwell: 2.0,
            motion: MotionParams::default(),
        }
    }
}

const DEMO_DRAWS: usize = 2000;
const TASK_DRAWS: usize = 1000;
const HOME_DRAWS: usize = 50;
const EXCURSION_DRAWS: usize = 2000;
const EXCURSION_CHECKS: usize = 16;
/// Seconds by which arm 1 precedes arm 2 at a contested node.
const EXCURSION_LEAD: f64 = 0.5;

/// Benchmark episodes. Start and goals are `theta_b` of distinct random
/// component nodes. Arm 1 waits at a home pose clear of every node on arm 2's
/// unobstructed shortest paths and makes out-and-back excursions into them:
/// for each leg where one can be found, a pose that would collide with arm 2
/// at the leg's middle node, timed to arrive just before arm 2 would and held
/// for `obstacle_dwell` seconds. Excursions keep `task_clearance` from arm 2 at
/// the start and at every goal, and arm 1 parks at home afterwards. Every
/// task is therefore contested on its initial path yet solvable once arm 1
/// has withdrawn; draws without any excursion are redrawn.
pub fn generate_episodes(planner: &Planner, mode: Mode, n: usize, seed: u64, params: &BenchParams) -> Result<Vec<EpisodeConfig>> {
    let comp = planner.component();
    if comp.len() < mode.n_goals() + 1 {
        return Err(Error::InvalidArgument(format!(
            "largest component has {} nodes, need at least {}",
            comp.len(),
            mode.n_goals() + 1
        )));
    }
    (0..n)
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            for _ in 0..TASK_DRAWS {
                let picks: Vec<usize> = comp.choose_multiple(&mut rng, mode.n_goals() + 1).copied().collect();
                let Some(obstacle_script) = contested_script(planner, &picks, params, &mut rng)? else {
                    continue;
                };
                return Ok(EpisodeConfig {
                    start: planner.theta(picks[0]),
                    goals: picks[1..].iter().map(|&id| planner.theta(id)).collect(),
                    obstacle_script,
                    d_safe: params.d_safe,
                    max_steps: params.max_steps,
                    interp_substeps: params.interp_substeps,
                    seed: rng.gen(),
                    motion: params.motion,
                });
            }
            Err(Error::InvalidArgument(format!(
                "episode {i}: no contested task found in {TASK_DRAWS} draws"
            )))
        })
        .collect()
}

fn contested_script<R: Rng>(
    planner: &Planner,
    stops: &[usize],
    params: &BenchParams,
    rng: &mut R,
) -> Result<Option<ObstacleScript>> {
    let scene = planner.scene;
    let c = params.task_clearance;
    let mut legs = Vec::new();
    for leg in stops.windows(2) {
        legs.push(planner.graph.shortest_path(leg[0], leg[1], &BTreeSet::new())?.nodes);
    }
    let on_path: BTreeSet<usize> = legs.iter().flatten().copied().collect();
    let clear_of = |q_a: &JointConfig, ids: &mut dyn Iterator<Item = usize>| -> Result<bool> {
        for id in ids {
            if scene.collides(q_a, &planner.theta(id), c)? {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut home = None;
    for _ in 0..HOME_DRAWS {
        let q = sample_random_config(&scene.arm_a, rng);
        if clear_of(&q, &mut stops.iter().copied())? && clear_of(&q, &mut on_path.iter().copied())? {
            home = Some(q);
            break;
        }
    }
    let Some(home) = home else {
        return Ok(None);
    };

    let mut waypoints = vec![home];
    let mut dwell = Vec::new();
    // Arm 2's unobstructed schedule and arm 1's own clock.
    let (mut t_b, mut t_a) = (0.0, 0.0);
    for leg in &legs {
        let half = leg.len() / 2;
        let edge_time = |w: &[usize]| {
            let d = planner.theta(w[0]).linf_distance(&planner.theta(w[1]));
            (d / params.motion.omega).max(params.interp_substeps as f64 * params.motion.dt_min)
        };
        let arrival = t_b + leg[..=half].windows(2).map(edge_time).sum::<f64>();
        t_b = arrival + leg[half..].windows(2).map(edge_time).sum::<f64>();

        // Walk from home toward a random pose that overlaps arm 2 at the middle
        // node and stop at the first point that does; nothing before it may
        // come near a stop.
        let mid = planner.theta(leg[half]);
        let mut found = None;
        'draw: for _ in 0..EXCURSION_DRAWS {
            let far = sample_random_config(&scene.arm_a, rng);
            if !scene.collides(&far, &mid, 0.0)? || !clear_of(&far, &mut stops.iter().copied())? {
                continue;
            }
            for k in 1..=EXCURSION_CHECKS {
                let q = home.lerp(&far, k as f64 / EXCURSION_CHECKS as f64);
                if !clear_of(&q, &mut stops.iter().copied())? {
                    continue 'draw;
                }
                if scene.collides(&q, &mid, 0.0)? {
                    found = Some(q);
                    break 'draw;
                }
            }
        }
        let Some(m) = found else { continue };
        let travel = home.linf_distance(&m) / params.obstacle_speed;
        let due = arrival - EXCURSION_LEAD;
        if waypoints.len() == 1 && travel > due {
            // Too far to make the first meeting: start partway out instead.
            waypoints[0] = home.lerp(&m, 1.0 - due.max(0.0) / travel);
            dwell.extend([0.0, params.obstacle_dwell]);
            waypoints.extend([m, home]);
            t_a = due.max(0.0) + params.obstacle_dwell + travel;
            continue;
        }
        let wait = (due - travel - t_a).max(0.0);
        dwell.extend([wait, params.obstacle_dwell]);
        waypoints.extend([m, home]);
        t_a += wait + 2.0 * travel + params.obstacle_dwell;
    }
    if waypoints.len() == 1 {
        return Ok(None);
    }
    Ok(Some(ObstacleScript::Reach {
        waypoints,
        speed: params.obstacle_speed,
        dwell,
    }))
}

/// Demo scenario: the first contested single-goal task (as in
/// [`generate_episodes`]) from a seeded search whose episode replans at
/// least once and still succeeds.
pub fn demo_scenario(planner: &Planner, seed: u64, params: &BenchParams) -> Result<(EpisodeConfig, EpisodeResult)> {
    let comp = planner.component();
    if comp.len() < 2 {
        return Err(Error::InvalidArgument("largest component has fewer than 2 nodes".into()));
    }
    let mut rng = sample_rng(seed, u64::MAX);
    for _ in 0..DEMO_DRAWS {
        let picks: Vec<usize> = comp.choose_multiple(&mut rng, 2).copied().collect();
        let Some(obstacle_script) = contested_script(planner, &picks, params, &mut rng)? else {
            continue;
        };
        let ec = EpisodeConfig {
            start: planner.theta(picks[0]),
            goals: vec![planner.theta(picks[1])],
            obstacle_script,
            d_safe: params.d_safe,
            max_steps: params.max_steps,
            interp_substeps: params.interp_substeps,
            seed,
            motion: params.motion,
        };
        let res = planner.run_episode(&ec)?;
        if res.outcome.success && res.outcome.replans >= 1 {
            return Ok((ec, res));
        }
    }
    Err(Error::InvalidArgument(format!("no demo scenario found in {DEMO_DRAWS} draws")))
}
