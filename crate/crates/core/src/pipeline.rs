//! Run configuration and the file-producing pipeline stages.
//!
//! Every stage reads its inputs from the output directory, writes its outputs
//! through a guard that deletes them again if the stage fails, and records
//! the produced files with SHA-256 digests in `manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{generate_dataset, read_dataset, write_dataset, Dataset};
use crate::error::{Error, Result};
use crate::reactive_planner::{
    compute_metrics, demo_scenario, generate_episodes, BenchParams, EpisodeResult, Metrics, Mode, MotionParams, Planner,
    DEFAULT_D_SAFE, DEFAULT_MAX_STEPS, DEFAULT_SUBSTEPS,
};
use crate::roadmap::{build_graph, LatentGraph, DEFAULT_K, DEFAULT_N_SYNTHETIC};
use crate::scene::Scene;
use crate::sensor_placement::{
    face_histogram, place_sensors, tag_collision_points, Face, PlacementOptions, PlacementSet, PlacementStatistic,
    DEFAULT_MIN_HITS, SENSOR_LINKS,
};
use crate::vae::{fit_logistic, train, LatentLabel, PoseVector, TrainConfig, VaeModel, DEFAULT_BETA, DEFAULT_HIDDEN};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const PLACEMENT_FILE: &str = "placement.json";
pub const MODEL_FILE: &str = "model.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Chain files, relative to the config file. Both or neither.
    pub chain_a: Option<PathBuf>,
    pub chain_b: Option<PathBuf>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            chain_a: None,
            chain_b: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { n_samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub min_hits: usize,
    pub statistic: PlacementStatistic,
    pub mode_bins: usize,
    pub histogram_bins: usize,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            min_hits: DEFAULT_MIN_HITS,
            statistic: PlacementStatistic::Mean,
            mode_bins: 10,
            histogram_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub hidden: Vec<usize>,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Size of the independently generated evaluation set.
    pub heldout_samples: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            beta: DEFAULT_BETA,
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            heldout_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub k: usize,
    pub n_synthetic: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            k: DEFAULT_K,
            n_synthetic: DEFAULT_N_SYNTHETIC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodesConfig {
    pub mode: Mode,
    pub episodes: usize,
    /// Per-substep traces are written for this many episodes.
    pub save_traces: usize,
    pub d_safe: f64,
    pub interp_substeps: usize,
    pub max_steps: usize,
    pub obstacle_speed: f64,
    pub task_clearance: f64,
    pub obstacle_dwell: f64,
    pub omega: f64,
    pub dt_min: f64,
    pub hold_dt: f64,
    pub max_hold: usize,
}

impl Default for EpisodesConfig {
    fn default() -> Self {
        let b = BenchParams::default();
        EpisodesConfig {
            mode: Mode::A,
            episodes: 100,
            save_traces: 5,
            d_safe: DEFAULT_D_SAFE,
            interp_substeps: DEFAULT_SUBSTEPS,
            max_steps: DEFAULT_MAX_STEPS,
            obstacle_speed: b.obstacle_speed,
            task_clearance: b.task_clearance,
            obstacle_dwell: b.obstacle_dwell,
            omega: b.motion.omega,
            dt_min: b.motion.dt_min,
            hold_dt: b.motion.hold_dt,
            max_hold: b.motion.max_hold,
        }
    }
}

impl EpisodesConfig {
    pub fn bench_params(&self) -> BenchParams {
        BenchParams {
            d_safe: self.d_safe,
            interp_substeps: self.interp_substeps,
            max_steps: self.max_steps,
            obstacle_speed: self.obstacle_speed,
            task_clearance: self.task_clearance,
            obstacle_dwell: self.obstacle_dwell,
            motion: MotionParams {
                omega: self.omega,
                dt_min: self.dt_min,
                hold_dt: self.hold_dt,
                max_hold: self.max_hold,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub scene: SceneConfig,
    pub data: DataConfig,
    pub sensors: SensorConfig,
    pub vae: VaeConfig,
    pub graph: GraphConfig,
    pub episodes: EpisodesConfig,
    /// Directory that relative chain paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 7,
            scene: SceneConfig::default(),
            data: DataConfig::default(),
            sensors: SensorConfig::default(),
            vae: VaeConfig::default(),
            graph: GraphConfig::default(),
            episodes: EpisodesConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scene(&self) -> Result<Scene> {
        match (&self.scene.chain_a, &self.scene.chain_b) {
            (None, None) => Ok(Scene::default()),
            (Some(a), Some(b)) => Scene::load(&self.base_dir.join(a), &self.base_dir.join(b)),
            _ => Err(Error::Config("scene needs both chain_a and chain_b, or neither".into())),
        }
    }

    /// Per-purpose seed derived from the run seed.
    pub fn derived_seed(&self, purpose: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(purpose.as_bytes());
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }

    fn seeds(&self) -> BTreeMap<String, u64> {
        SEED_PURPOSES.iter().map(|p| (p.to_string(), self.derived_seed(p))).collect()
    }
}

const SEED_PURPOSES: [&str; 7] = ["data", "heldout", "vae-init", "vae-train", "graph", "episodes", "demo"];

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    /// Wall-clock content; differs between reruns.
    pub volatile: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_path: Option<String>,
    pub config: Option<Config>,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub stages: BTreeMap<String, Vec<OutputRecord>>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Files written by one stage; removed on drop unless committed.
struct StageOutputs<'a> {
    out: &'a Path,
    files: Vec<(PathBuf, bool)>,
    committed: bool,
}

impl<'a> StageOutputs<'a> {
    fn new(out: &'a Path) -> Self {
        StageOutputs {
            out,
            files: Vec::new(),
            committed: false,
        }
    }

    fn claim(&mut self, rel: &str, volatile: bool) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        self.files.push((path.clone(), volatile));
        Ok(path)
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<PathBuf> {
        self.write_with(rel, false, contents)
    }

    fn write_with(&mut self, rel: &str, volatile: bool, contents: &str) -> Result<PathBuf> {
        let path = self.claim(rel, volatile)?;
        fs::write(&path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }

    fn commit(mut self) -> Result<Vec<OutputRecord>> {
        let mut records = Vec::new();
        for (path, volatile) in &self.files {
            let rel = path.strip_prefix(self.out).unwrap_or(path);
            records.push(OutputRecord {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(path)?,
                volatile: *volatile,
            });
        }
        self.committed = true;
        Ok(records)
    }
}

impl Drop for StageOutputs<'_> {
    fn drop(&mut self) {
        if !self.committed {
            for (path, _) in &self.files {
                let _ = fs::remove_file(path);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeEvaluation {
    pub final_loss: f64,
    pub train_logistic_accuracy: f64,
    pub heldout_logistic_accuracy: f64,
    pub heldout_decoder_accuracy: f64,
    /// Share of safe training samples whose embedding decodes as safe.
    pub safe_self_consistency: f64,
    pub heldout_samples: usize,
    pub separator: crate::vae::LogisticSeparator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRun {
    pub mode: Mode,
    pub results: Vec<EpisodeResult>,
    pub metrics: Metrics,
}

impl ModeRun {
    pub fn summary_line(&self) -> String {
        let m = &self.metrics;
        let lat = m
            .median_replan_s
            .map_or("n/a".to_string(), |s| format!("{:.3} ms", s * 1e3));
        format!(
            "mode {:?}: {} episodes, SR {:.1}%, T_mean {:.3} s, mean replans {:.2}, median replan latency {}",
            self.mode, m.episodes, m.sr, m.t_mean, m.replans_mean, lat
        )
    }
}

/// Pipeline bound to one configuration and output directory.
pub struct Pipeline {
    pub cfg: Config,
    pub out: PathBuf,
    pub scene: Scene,
    config_path: Option<PathBuf>,
}

impl Pipeline {
    pub fn new(cfg: Config, out: &Path, config_path: Option<&Path>) -> Result<Self> {
        let scene = cfg.scene()?;
        fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
        Ok(Pipeline {
            cfg,
            out: out.to_path_buf(),
            scene,
            config_path: config_path.map(Path::to_path_buf),
        })
    }

    fn input(&self, stage: &'static str, rel: &str) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingInput { stage, path })
        }
    }

    fn record(&self, stage: &str, outputs: Vec<OutputRecord>) -> Result<()> {
        let path = self.out.join(MANIFEST_FILE);
        let mut manifest = if path.is_file() { RunManifest::load(&path)? } else { RunManifest::default() };
        manifest.tool = "dualarm".into();
        manifest.version = env!("CARGO_PKG_VERSION").into();
        manifest.config_path = self.config_path.as_ref().map(|p| p.display().to_string());
        manifest.config = Some(self.cfg.clone());
        manifest.seed = self.cfg.seed;
        manifest.seeds = self.cfg.seeds();
        manifest.stages.insert(stage.to_string(), outputs);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load_dataset(&self, stage: &'static str) -> Result<Dataset> {
        read_dataset(&self.input(stage, DATASET_FILE)?)
    }

    pub fn load_model(&self, stage: &'static str) -> Result<VaeModel> {
        VaeModel::load(&self.input(stage, MODEL_FILE)?)
    }

    pub fn load_graph(&self, stage: &'static str) -> Result<LatentGraph> {
        LatentGraph::load(&self.input(stage, GRAPH_FILE)?)
    }

    pub fn load_placement(&self, stage: &'static str) -> Result<PlacementSet> {
        PlacementSet::load(&self.input(stage, PLACEMENT_FILE)?)
    }

    pub fn gen_data(&self) -> Result<Dataset> {
        let mut outs = StageOutputs::new(&self.out);
        let ds = generate_dataset(&self.scene, self.cfg.data.n_samples, self.cfg.derived_seed("data"))?;
        write_dataset(&ds, &outs.claim(DATASET_FILE, false)?)?;
        self.record("gen-data", outs.commit()?)?;
        Ok(ds)
    }

    pub fn place_sensors(&self) -> Result<PlacementSet> {
        let ds = self.load_dataset("place-sensors")?;
        let mut outs = StageOutputs::new(&self.out);
        let report = tag_collision_points(&ds, &self.scene.arm_b)?;
        let s = &self.cfg.sensors;
        let opts = PlacementOptions {
            min_hits: s.min_hits,
            statistic: s.statistic,
            mode_bins: s.mode_bins,
        };
        let set = place_sensors(&report.hits, &self.scene.arm_b, &opts)?;
        outs.write(PLACEMENT_FILE, &set.to_json()?)?;
        for link in SENSOR_LINKS {
            for face in Face::ALL {
                // Faces without hits get no histogram; the summary lists them.
                let h = match face_histogram(&report.hits, &self.scene.arm_b, link, face, s.histogram_bins) {
                    Err(Error::InsufficientHits { .. }) => continue,
                    other => other?,
                };
                let mut buf = Vec::new();
                h.write_csv(&mut buf).map_err(|e| Error::io("formatting histogram", e))?;
                let text = String::from_utf8(buf).expect("csv is utf-8");
                outs.write(&format!("histograms/link{link}_{}.csv", face.slug()), &text)?;
            }
        }
        let mut summary = String::from("link,face,n_hits,u,v,placed\n");
        let mut counts: BTreeMap<(usize, Face), usize> = BTreeMap::new();
        for h in &report.hits {
            *counts.entry((h.link, h.face)).or_default() += 1;
        }
        for link in SENSOR_LINKS {
            for face in Face::ALL {
                let n = counts.get(&(link, face)).copied().unwrap_or(0);
                match set.placements.iter().find(|p| p.link == link && p.face == face) {
                    Some(p) => writeln!(summary, "{link},{},{n},{},{},true", face.label(), p.uv[0], p.uv[1]),
                    None => writeln!(summary, "{link},{},{n},,,false", face.label()),
                }
                .expect("writing to a String");
            }
        }
        writeln!(summary, "# rejected {}, skipped {}", report.rejected, report.skipped).expect("writing to a String");
        outs.write("placement_summary.csv", &summary)?;
        self.record("place-sensors", outs.commit()?)?;
        Ok(set)
    }

    pub fn train_vae(&self, mut on_epoch: impl FnMut(&crate::vae::EpochLoss)) -> Result<(VaeModel, VaeEvaluation)> {
        let ds = self.load_dataset("train-vae")?;
        let mut outs = StageOutputs::new(&self.out);
        let v = &self.cfg.vae;
        let mut model = VaeModel::new(&v.hidden, v.beta, self.cfg.derived_seed("vae-init"))?;
        let tc = TrainConfig {
            epochs: v.epochs,
            batch_size: v.batch_size,
            learning_rate: v.learning_rate,
            seed: self.cfg.derived_seed("vae-train"),
        };
        let xs: Vec<PoseVector> = ds.samples.iter().map(PoseVector::from_sample).collect();
        let report = train(&mut model, &xs, &tc, |e| on_epoch(e))?;
        model.save(&outs.claim(MODEL_FILE, false)?)?;
        let mut loss_csv = String::from("epoch,loss,recon,kl\n");
        for e in &report.epochs {
            writeln!(loss_csv, "{},{},{},{}", e.epoch, e.loss, e.recon, e.kl).expect("writing to a String");
        }
        outs.write("loss.csv", &loss_csv)?;

        let eval = self.evaluate_vae(&model, &ds, &xs, report.final_loss().unwrap_or(f64::NAN))?;
        outs.write("vae_eval.json", &(serde_json::to_string_pretty(&eval)? + "\n"))?;
        self.record("train-vae", outs.commit()?)?;
        Ok((model, eval))
    }

    fn evaluate_vae(&self, model: &VaeModel, ds: &Dataset, xs: &[PoseVector], final_loss: f64) -> Result<VaeEvaluation> {
        let mu = model.encode_means(xs);
        let labels: Vec<bool> = ds.samples.iter().map(|s| s.is_safe()).collect();
        let separator = fit_logistic(&mu, &labels)?;
        let n_held = self.cfg.vae.heldout_samples.max(1);
        let held = generate_dataset(&self.scene, n_held, self.cfg.derived_seed("heldout"))?;
        let hx: Vec<PoseVector> = held.samples.iter().map(PoseVector::from_sample).collect();
        let hmu = model.encode_means(&hx);
        let hlabels: Vec<bool> = held.samples.iter().map(|s| s.is_safe()).collect();
        let decoded = model.decode_many(&hmu);
        let dec_ok = decoded
            .iter()
            .zip(&hlabels)
            .filter(|(out, &l)| (crate::vae::label_from_flag(out[crate::vae::FLAG_INDEX]) == LatentLabel::Safe) == l)
            .count();
        let safe_mu: Vec<[f64; 2]> = mu.iter().zip(&labels).filter(|(_, &l)| l).map(|(z, _)| *z).collect();
        let safe_ok = model
            .decode_many(&safe_mu)
            .iter()
            .filter(|out| crate::vae::label_from_flag(out[crate::vae::FLAG_INDEX]) == LatentLabel::Safe)
            .count();
        Ok(VaeEvaluation {
            final_loss,
            train_logistic_accuracy: separator.accuracy(&mu, &labels),
            heldout_logistic_accuracy: separator.accuracy(&hmu, &hlabels),
            heldout_decoder_accuracy: dec_ok as f64 / n_held as f64,
            safe_self_consistency: if safe_mu.is_empty() { 0.0 } else { safe_ok as f64 / safe_mu.len() as f64 },
            heldout_samples: n_held,
            separator,
        })
    }

    pub fn build_graph(&self) -> Result<LatentGraph> {
        let ds = self.load_dataset("build-graph")?;
        let model = self.load_model("build-graph")?;
        let mut outs = StageOutputs::new(&self.out);
        let g = &self.cfg.graph;
        let graph = build_graph(&model, &ds, &self.scene.arm_b, g.k, g.n_synthetic, self.cfg.derived_seed("graph"))?;
        graph.save(&outs.claim(GRAPH_FILE, false)?)?;
        let comp = graph.components();
        let largest = graph.largest_component();
        let mut csv = String::from("id,z0,z1,label,source,component,in_largest\n");
        for n in &graph.nodes {
            let c = comp[n.id].map_or(String::new(), |c| c.to_string());
            let label = if n.is_safe() { "safe" } else { "colliding" };
            let source = match n.source {
                crate::roadmap::NodeSource::Dataset => "dataset",
                crate::roadmap::NodeSource::Synthetic => "synthetic",
            };
            writeln!(csv, "{},{},{},{label},{source},{c},{}", n.id, n.z[0], n.z[1], largest.contains(&n.id))
                .expect("writing to a String");
        }
        outs.write("latent.csv", &csv)?;
        self.record("build-graph", outs.commit()?)?;
        Ok(graph)
    }

    fn planning_inputs(&self, stage: &'static str) -> Result<(LatentGraph, PlacementSet)> {
        Ok((self.load_graph(stage)?, self.load_placement(stage)?))
    }

    /// Runs `n` episodes of `mode` and writes them under `dir`.
    fn episodes_into(
        &self,
        outs: &mut StageOutputs,
        dir: &str,
        planner: &Planner,
        mode: Mode,
        n: usize,
    ) -> Result<ModeRun> {
        let e = &self.cfg.episodes;
        let seed = self.cfg.derived_seed("episodes") ^ mode.n_goals() as u64;
        let configs = generate_episodes(planner, mode, n, seed, &e.bench_params())?;
        let results = planner.run_batch(&configs)?;

        let mut episodes = String::new();
        for c in &configs {
            episodes.push_str(&serde_json::to_string(c)?);
            episodes.push('\n');
        }
        outs.write(&format!("{dir}/episodes.jsonl"), &episodes)?;

        let mut metrics = String::from("episode,mode,success,failure,replans,goals_reached,steps,motion_time_s,initial_path_nodes,executed_nodes\n");
        let mut timing = String::from("episode,plan_ms,replan_ms_total,replan_ms_median,total_runtime_s\n");
        for (i, r) in results.iter().enumerate() {
            let o = &r.outcome;
            let failure = o.failure.map_or(String::new(), |f| match f {
                crate::reactive_planner::Failure::NoPath { .. } => "no_path".into(),
                crate::reactive_planner::Failure::MaxSteps => "max_steps".into(),
                crate::reactive_planner::Failure::Collision { step } => format!("collision@{step}"),
            });
            writeln!(
                metrics,
                "{i},{:?},{},{failure},{},{},{},{},{},{}",
                mode,
                o.success,
                o.replans,
                o.goals_reached,
                o.steps,
                o.motion_time,
                o.paths.first().map_or(0, Vec::len),
                o.executed.len()
            )
            .expect("writing to a String");
            let mut lat = r.timing.replan_s.clone();
            lat.sort_by(f64::total_cmp);
            let med = if lat.is_empty() { String::new() } else { format!("{}", lat[lat.len() / 2] * 1e3) };
            writeln!(
                timing,
                "{i},{},{},{med},{}",
                r.timing.plan_s * 1e3,
                r.timing.replan_s.iter().sum::<f64>() * 1e3,
                r.total_runtime()
            )
            .expect("writing to a String");
        }
        outs.write(&format!("{dir}/metrics.csv"), &metrics)?;
        outs.write_with(&format!("{dir}/timing.csv"), true, &timing)?;
        for (i, r) in results.iter().enumerate().take(e.save_traces) {
            let mut text = String::new();
            for rec in &r.trace {
                text.push_str(&serde_json::to_string(rec)?);
                text.push('\n');
            }
            outs.write(&format!("{dir}/traces/episode_{i:03}.jsonl"), &text)?;
            outs.write(&format!("{dir}/traces/episode_{i:03}_outcome.json"), &(serde_json::to_string(&r.outcome)? + "\n"))?;
        }
        let metrics = compute_metrics(&results)?;
        let run = ModeRun { mode, results, metrics };
        outs.write_with(&format!("{dir}/summary.txt"), true, &(run.summary_line() + "\n"))?;
        Ok(run)
    }

    pub fn run_episodes(&self) -> Result<ModeRun> {
        let (graph, placement) = self.planning_inputs("run-episodes")?;
        let planner = Planner::new(&graph, &placement.placements, &self.scene)?;
        let mut outs = StageOutputs::new(&self.out);
        let run = self.episodes_into(&mut outs, "episodes", &planner, self.cfg.episodes.mode, self.cfg.episodes.episodes)?;
        self.record("run-episodes", outs.commit()?)?;
        Ok(run)
    }

    /// Mode A and mode B with the configured episode count each.
    pub fn bench(&self) -> Result<Vec<ModeRun>> {
        let (graph, placement) = self.planning_inputs("bench")?;
        let planner = Planner::new(&graph, &placement.placements, &self.scene)?;
        let mut outs = StageOutputs::new(&self.out);
        let n = self.cfg.episodes.episodes;
        let runs = vec![
            self.episodes_into(&mut outs, "bench/A", &planner, Mode::A, n)?,
            self.episodes_into(&mut outs, "bench/B", &planner, Mode::B, n)?,
        ];
        let mut table = String::from("mode,episodes,successes,sr_percent,t_mean_s,replans_mean,median_replan_ms\n");
        for r in &runs {
            let m = &r.metrics;
            writeln!(
                table,
                "{:?},{},{},{:.1},{:.4},{:.3},{}",
                r.mode,
                m.episodes,
                m.successes,
                m.sr,
                m.t_mean,
                m.replans_mean,
                m.median_replan_s.map_or(String::new(), |s| format!("{:.4}", s * 1e3))
            )
            .expect("writing to a String");
        }
        outs.write_with("bench/summary.csv", true, &table)?;
        self.record("bench", outs.commit()?)?;
        Ok(runs)
    }

    /// Demo replanning episode plus latent path overlays.
    pub fn export_plots(&self) -> Result<EpisodeResult> {
        let (graph, placement) = self.planning_inputs("export-plots")?;
        let planner = Planner::new(&graph, &placement.placements, &self.scene)?;
        let mut outs = StageOutputs::new(&self.out);
        let (ec, res) = demo_scenario(&planner, self.cfg.derived_seed("demo"), &self.cfg.episodes.bench_params())?;
        outs.write("plots/demo_episode.json", &(serde_json::to_string_pretty(&ec)? + "\n"))?;
        let mut trace = String::new();
        for rec in &res.trace {
            trace.push_str(&serde_json::to_string(rec)?);
            trace.push('\n');
        }
        outs.write("plots/demo_trace.jsonl", &trace)?;
        let mut paths = String::from("path,order,node,z0,z1\n");
        for (p, nodes) in res.outcome.paths.iter().enumerate() {
            for (k, &id) in nodes.iter().enumerate() {
                let z = graph.nodes[id].z;
                writeln!(paths, "{p},{k},{id},{},{}", z[0], z[1]).expect("writing to a String");
            }
        }
        outs.write("plots/path_overlay.csv", &paths)?;
        let mut executed = String::from("order,node,z0,z1\n");
        for (k, &id) in res.outcome.executed.iter().enumerate() {
            let z = graph.nodes[id].z;
            writeln!(executed, "{k},{id},{},{}", z[0], z[1]).expect("writing to a String");
        }
        outs.write("plots/executed_path.csv", &executed)?;
        let mut blk = String::from("node,z0,z1\n");
        for &id in &res.outcome.blacklisted {
            let z = graph.nodes[id].z;
            writeln!(blk, "{id},{},{}", z[0], z[1]).expect("writing to a String");
        }
        outs.write("plots/blacklisted.csv", &blk)?;
        self.record("export-plots", outs.commit()?)?;
        Ok(res)
    }
}
