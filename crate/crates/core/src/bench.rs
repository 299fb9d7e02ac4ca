//! Episode runner, benchmark protocol and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::write_xyz;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grasp::GraspCandidate;
use crate::mesh::Mesh;
use crate::ml::{load_model, ClassifierKind, ClassifierPolicy, ModelFile, QPolicy};
use crate::policies::{
    Action, BfsPolicy, BrickPolicy, H2dPolicy, H3dPolicy, InfoGainPolicy, Policy, PolicyContext, RandomPolicy,
};
use crate::sim::Simulator;
use crate::viewsphere::{arc_distance, neighbor, Direction, SphericalPose};

pub const POLICY_NAMES: [&str; 9] = [
    "random",
    "brick",
    "bfs",
    "h2d",
    "h3d",
    "infogain",
    "classifier",
    "classifier-lda",
    "qlearn",
];

/// Policies that may leave the step lattice and so are not comparable to
/// the lattice search.
const OFF_LATTICE: [&str; 1] = ["infogain"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// The decision that led here; `None` for the start view and for the
    /// second half of a double step.
    pub action: Option<Action>,
    pub direction: Option<Direction>,
    pub pose: SphericalPose,
    pub grasp_found: bool,
    pub unexplored_count: usize,
    pub decision_time_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum FailureCause {
    NoGraspAtBudget,
    /// The policy proved no grasp is reachable and stopped.
    PolicyStopped,
    PolicyError(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub object: String,
    pub rotation_deg: f64,
    pub policy: String,
    pub seed: u64,
    pub config_hash: String,
    pub success: bool,
    /// Moves until the grasp; the step budget on failure.
    pub steps_used: usize,
    pub travel_m: f64,
    pub decisions: usize,
    pub decision_time_s: f64,
    pub steps: Vec<StepRecord>,
    pub grasp: Option<GraspCandidate>,
    pub failure: Option<FailureCause>,
}

impl EpisodeRecord {
    pub fn effective_steps(&self, cfg: &RunConfig) -> f64 {
        self.travel_m / cfg.viewsphere.step_arc_m()
    }
}

/// Seed for one (object, rotation) episode, independent of job order.
pub fn episode_seed(base: u64, object: &str, rotation_deg: f64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in object.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    base ^ h ^ (rotation_deg.to_bits()).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn dump_step(dir: &Path, sim: &Simulator, policy: &str, rot: f64, step: usize, model: &crate::cloud::SceneModel) -> Result<()> {
    let stem = format!("{}_{}_{}_step{}", sim.object_name, rot, policy, step);
    write_xyz(&dir.join(format!("{stem}_object.xyz")), &model.object_cloud.points)?;
    write_xyz(&dir.join(format!("{stem}_table.xyz")), &model.table_cloud.points)?;
    write_xyz(&dir.join(format!("{stem}_unexplored.xyz")), model.unexplored.unexplored_points())
}

/// One episode: fuse, try to grasp, otherwise ask the policy where to go,
/// until a grasp is found or the step budget runs out.
pub fn run_episode(
    sim: &mut Simulator,
    policy: &mut dyn Policy,
    rotation_deg: f64,
    seed: u64,
    dump_dir: Option<&Path>,
) -> Result<EpisodeRecord> {
    let cfg = sim.config().clone();
    let name = policy.name();
    if policy.training_manifest().iter().any(|o| *o == sim.object_name) {
        return Err(Error::TrainingObject {
            policy: name,
            object: sim.object_name.clone(),
        });
    }
    policy.begin_episode(seed);
    let max_steps = cfg.scene.max_steps;
    let center = sim.center();
    let mut pose = sim.start();
    let mut history = vec![pose];
    let (mut model, mut grasp) = sim.model_and_grasp(&history);
    let mut steps = vec![StepRecord {
        step: 0,
        action: None,
        direction: None,
        pose,
        grasp_found: grasp.is_some(),
        unexplored_count: model.unexplored.unexplored_count(),
        decision_time_s: 0.0,
        scores: Vec::new(),
    }];
    if let Some(dir) = dump_dir {
        dump_step(dir, sim, &name, rotation_deg, 0, &model)?;
    }
    let mut travel = 0.0;
    let mut decisions = 0;
    let mut decision_time = 0.0;
    let mut failure = None;
    let mut used = 0;

    while grasp.is_none() && used < max_steps {
        let t0 = Instant::now();
        let decision = {
            let mut ctx = PolicyContext {
                model: &model,
                pose,
                step: used,
                history: &history,
                center,
                cfg: &cfg,
                sim,
            };
            policy.decide(&mut ctx)
        };
        let dt = if cfg.output.record_timing { t0.elapsed().as_secs_f64() } else { 0.0 };
        decisions += 1;
        decision_time += dt;
        let decision = match decision {
            Ok(d) => d,
            Err(e) => {
                failure = Some(FailureCause::PolicyError(e.to_string()));
                break;
            }
        };
        let targets: Vec<(Option<Direction>, SphericalPose)> = match decision.action {
            Action::Stop => {
                failure = Some(FailureCause::PolicyStopped);
                break;
            }
            Action::Move { direction, steps: k } => {
                let mut out = Vec::new();
                let mut p = pose;
                for _ in 0..k.max(1) {
                    p = neighbor(&p, direction, 1, &cfg.viewsphere).ok_or_else(|| {
                        Error::Harness(format!("{name} chose {direction} out of the workspace"))
                    })?;
                    out.push((Some(direction), p));
                }
                out
            }
            Action::Jump { pose: p } => {
                if !cfg.viewsphere.polar_in_bounds(p.polar_deg) {
                    return Err(Error::Harness(format!("{name} jumped out of the workspace")));
                }
                vec![(None, p)]
            }
        };
        let mut first = true;
        for (direction, next) in targets {
            if used == max_steps {
                break;
            }
            let next = sim.canonical(&next);
            travel += arc_distance(&pose, &next)?;
            pose = next;
            history.push(pose);
            used += 1;
            let before = model.unexplored.unexplored_count();
            (model, grasp) = sim.model_and_grasp(&history);
            let after = model.unexplored.unexplored_count();
            if after > before {
                return Err(Error::Harness(format!("unexplored count rose from {before} to {after}")));
            }
            steps.push(StepRecord {
                step: used,
                action: first.then_some(decision.action),
                direction,
                pose,
                grasp_found: grasp.is_some(),
                unexplored_count: after,
                decision_time_s: if first { dt } else { 0.0 },
                scores: if first { decision.scores.clone() } else { Vec::new() },
            });
            first = false;
            if let Some(dir) = dump_dir {
                dump_step(dir, sim, &name, rotation_deg, used, &model)?;
            }
            if grasp.is_some() {
                break;
            }
        }
    }
    let success = grasp.is_some();
    if !success && failure.is_none() {
        failure = Some(FailureCause::NoGraspAtBudget);
    }
    Ok(EpisodeRecord {
        object: sim.object_name.clone(),
        rotation_deg,
        policy: name,
        seed,
        config_hash: cfg.hash(),
        success,
        steps_used: if success { used } else { max_steps },
        travel_m: travel,
        decisions,
        decision_time_s: decision_time,
        steps,
        grasp,
        failure,
    })
}

/// `count` integer rotations in [0, 359], the same for every policy.
pub fn generate_pose_set(count: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0..360)).collect()
}

/// Learned models referenced by the configuration, loaded once.
#[derive(Clone, Debug, Default)]
pub struct LoadedModels {
    pub logistic: Option<ModelFile>,
    pub lda: Option<ModelFile>,
    pub qnet: Option<ModelFile>,
}

impl LoadedModels {
    /// Loads only the models the listed policies need.
    pub fn for_policies(policies: &[String], cfg: &RunConfig) -> Result<Self> {
        let load = |needed: bool, path: &Option<PathBuf>, key: &str| -> Result<Option<ModelFile>> {
            if !needed {
                return Ok(None);
            }
            let path = path
                .as_ref()
                .ok_or_else(|| Error::Config(format!("bench.models.{key} must name a trained model file")))?;
            load_model(path).map(Some)
        };
        let has = |n: &str| policies.iter().any(|p| p == n);
        let m = &cfg.bench.models;
        Ok(Self {
            logistic: load(has("classifier"), &m.logistic, "logistic")?,
            lda: load(has("classifier-lda"), &m.lda, "lda")?,
            qnet: load(has("qlearn"), &m.qnet, "qnet")?,
        })
    }
}

pub fn make_policy(name: &str, cfg: &RunConfig, models: &LoadedModels) -> Result<Box<dyn Policy + Send>> {
    let missing = || Error::Config(format!("policy {name} needs a trained model"));
    let classifier = |m: &Option<ModelFile>, kind: ClassifierKind| -> Result<Box<dyn Policy + Send>> {
        match m {
            Some(ModelFile::SelfSup(model)) if model.classifier.kind == kind => {
                Ok(Box::new(ClassifierPolicy { model: model.clone() }))
            }
            Some(_) => Err(Error::ModelFormat(format!("model for {name} has the wrong kind"))),
            None => Err(missing()),
        }
    };
    Ok(match name {
        "random" => Box::new(RandomPolicy::new(cfg.seed)),
        "brick" => Box::new(BrickPolicy),
        "bfs" => Box::new(BfsPolicy::new()),
        "h2d" => Box::new(H2dPolicy),
        "h3d" => Box::new(H3dPolicy),
        "infogain" => Box::new(InfoGainPolicy::new(cfg)),
        "classifier" => classifier(&models.logistic, ClassifierKind::Logistic)?,
        "classifier-lda" => classifier(&models.lda, ClassifierKind::Discriminant)?,
        "qlearn" => match &models.qnet {
            Some(ModelFile::Q(model)) => Box::new(QPolicy { model: model.clone() }),
            Some(_) => return Err(Error::ModelFormat("qlearn model has the wrong kind".into())),
            None => return Err(missing()),
        },
        other => return Err(Error::UnknownPolicy(other.to_string())),
    })
}

/// Every policy on every (object, rotation). Each (object, rotation) gets
/// one simulator shared by all policies, so renders and grasp verdicts are
/// computed once. Records come back sorted by object, rotation and policy
/// order, whatever the scheduling.
pub fn run_benchmark(
    objects: &[(String, Mesh)],
    policies: &[String],
    rotations: &[u32],
    cfg: &RunConfig,
    models: &LoadedModels,
    dump_dir: Option<&Path>,
) -> Result<Vec<EpisodeRecord>> {
    for p in policies {
        let policy = make_policy(p, cfg, models)?;
        for (o, _) in objects {
            if policy.training_manifest().contains(o) {
                return Err(Error::TrainingObject {
                    policy: p.clone(),
                    object: o.clone(),
                });
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..objects.len())
        .flat_map(|o| (0..rotations.len()).map(move |r| (o, r)))
        .collect();
    let per_job: Vec<Result<Vec<EpisodeRecord>>> = jobs
        .par_iter()
        .map(|&(o, r)| {
            let (name, mesh) = &objects[o];
            let rot = rotations[r] as f64;
            let mut sim = Simulator::new(name, mesh, rot, cfg.start_pose(), cfg);
            let seed = episode_seed(cfg.seed, name, rot);
            policies
                .iter()
                .map(|p| {
                    let mut policy = make_policy(p, cfg, models)?;
                    run_episode(&mut sim, policy.as_mut(), rot, seed, dump_dir)
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for r in per_job {
        records.extend(r?);
    }
    check_bfs_dominance(&records)?;
    Ok(records)
}

/// No lattice policy may succeed in fewer steps than the exhaustive search
/// from the same start.
pub fn check_bfs_dominance(records: &[EpisodeRecord]) -> Result<()> {
    let mut bfs: BTreeMap<(String, u64), &EpisodeRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.policy == "bfs") {
        bfs.insert((r.object.clone(), r.rotation_deg.to_bits()), r);
    }
    for r in records {
        if r.policy == "bfs" || OFF_LATTICE.contains(&r.policy.as_str()) || !r.success {
            continue;
        }
        let Some(b) = bfs.get(&(r.object.clone(), r.rotation_deg.to_bits())) else {
            continue;
        };
        if !b.success || r.steps_used < b.steps_used {
            return Err(Error::Harness(format!(
                "{} succeeded on {} at {} deg in {} steps but the exhaustive search needed {}",
                r.policy,
                r.object,
                r.rotation_deg,
                r.steps_used,
                if b.success { b.steps_used.to_string() } else { "more than the budget".into() }
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyClass {
    Easy,
    Medium,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Difficulty {
    pub class: DifficultyClass,
    pub ratio: f64,
}

/// Random-over-optimal success ratio at one step. Both zero reads as 1.
pub fn classify_ratio(random_success: f64, bfs_success: f64) -> Difficulty {
    let ratio = if bfs_success <= 0.0 { 1.0 } else { random_success / bfs_success };
    let class = if ratio <= 0.40 {
        DifficultyClass::Hard
    } else if ratio <= 0.80 {
        DifficultyClass::Medium
    } else {
        DifficultyClass::Easy
    };
    Difficulty { class, ratio }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub object: String,
    pub policy: String,
    pub episodes: usize,
    /// Fraction of episodes with a grasp after 0, 1, ..., max_steps moves.
    pub success_by_step: Vec<f64>,
    pub mean_steps: f64,
    pub mean_travel_m: f64,
    pub mean_effective_steps: f64,
    /// Per decision.
    pub mean_decision_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_hash: String,
    pub seed: u64,
    pub max_steps: usize,
    pub rows: Vec<CurveRow>,
    pub difficulty: Vec<(String, Difficulty)>,
}

impl BenchmarkReport {
    pub fn row(&self, object: &str, policy: &str) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.object == object && r.policy == policy)
    }
}

fn sorted_records(records: &[EpisodeRecord]) -> Vec<&EpisodeRecord> {
    let mut v: Vec<&EpisodeRecord> = records.iter().collect();
    v.sort_by(|a, b| {
        a.object
            .cmp(&b.object)
            .then(a.policy.cmp(&b.policy))
            .then(a.rotation_deg.total_cmp(&b.rotation_deg))
    });
    v
}

fn summarize<'a>(object: &str, policy: &str, group: &[&'a EpisodeRecord], cfg: &RunConfig) -> CurveRow {
    let n = group.len().max(1) as f64;
    let max = cfg.scene.max_steps;
    let success_by_step = (0..=max)
        .map(|k| group.iter().filter(|r| r.success && r.steps_used <= k).count() as f64 / n)
        .collect();
    let decisions: usize = group.iter().map(|r| r.decisions).sum();
    CurveRow {
        object: object.into(),
        policy: policy.into(),
        episodes: group.len(),
        success_by_step,
        mean_steps: group.iter().map(|r| r.steps_used as f64).sum::<f64>() / n,
        mean_travel_m: group.iter().map(|r| r.travel_m).sum::<f64>() / n,
        mean_effective_steps: group.iter().map(|r| r.effective_steps(cfg)).sum::<f64>() / n,
        mean_decision_time_s: if decisions == 0 {
            0.0
        } else {
            group.iter().map(|r| r.decision_time_s).sum::<f64>() / decisions as f64
        },
    }
}

/// Success curves, means and difficulty per object. A pure function of the
/// record set: input order does not matter.
pub fn build_report(records: &[EpisodeRecord], cfg: &RunConfig) -> BenchmarkReport {
    let sorted = sorted_records(records);
    let mut groups: BTreeMap<(String, String), Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in sorted {
        groups.entry((r.object.clone(), r.policy.clone())).or_default().push(r);
    }
    let rows: Vec<CurveRow> = groups
        .iter()
        .map(|((o, p), g)| summarize(o, p, g, cfg))
        .collect();
    let step = cfg.bench.difficulty_step.min(cfg.scene.max_steps);
    let objects: BTreeSet<&String> = rows.iter().map(|r| &r.object).collect();
    let difficulty = objects
        .into_iter()
        .filter_map(|o| {
            let find = |p: &str| rows.iter().find(|r| &r.object == o && r.policy == p);
            let (random, bfs) = (find("random")?, find("bfs")?);
            Some((o.clone(), classify_ratio(random.success_by_step[step], bfs.success_by_step[step])))
        })
        .collect();
    BenchmarkReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        max_steps: cfg.scene.max_steps,
        rows,
        difficulty,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub episodes: usize,
    pub mean_steps: f64,
    pub mean_travel_m: f64,
    pub mean_effective_steps: f64,
    pub mean_decision_time_s: f64,
}

/// Travel and decision time of each policy pooled over all objects.
pub fn compare_exploration(records: &[EpisodeRecord], policies: &[&str], cfg: &RunConfig) -> Vec<ComparisonRow> {
    let sorted = sorted_records(records);
    policies
        .iter()
        .map(|p| {
            let group: Vec<&EpisodeRecord> = sorted.iter().copied().filter(|r| r.policy == *p).collect();
            let row = summarize("all", p, &group, cfg);
            ComparisonRow {
                policy: p.to_string(),
                episodes: row.episodes,
                mean_steps: row.mean_steps,
                mean_travel_m: row.mean_travel_m,
                mean_effective_steps: row.mean_effective_steps,
                mean_decision_time_s: row.mean_decision_time_s,
            }
        })
        .collect()
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_records_jsonl(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// One row per (object, policy): hash, seed, curve and means.
pub fn write_success_csv(path: &Path, report: &BenchmarkReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["config_hash".to_string(), "seed".into(), "object".into(), "policy".into(), "episodes".into()];
    header.extend((0..=report.max_steps).map(|k| format!("step{k}")));
    header.extend(["mean_steps", "mean_travel_m", "mean_effective_steps", "mean_decision_time_s"].map(String::from));
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![
            report.config_hash.clone(),
            report.seed.to_string(),
            r.object.clone(),
            r.policy.clone(),
            r.episodes.to_string(),
        ];
        rec.extend(r.success_by_step.iter().map(|v| v.to_string()));
        rec.extend([r.mean_steps, r.mean_travel_m, r.mean_effective_steps, r.mean_decision_time_s].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_difficulty_csv(path: &Path, report: &BenchmarkReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["config_hash", "seed", "object", "ratio", "class"])?;
    for (o, d) in &report.difficulty {
        let class = match d.class {
            DifficultyClass::Easy => "easy",
            DifficultyClass::Medium => "medium",
            DifficultyClass::Hard => "hard",
        };
        w.write_record([report.config_hash.as_str(), &report.seed.to_string(), o, &d.ratio.to_string(), class])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow], cfg: &RunConfig) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "config_hash",
        "seed",
        "policy",
        "episodes",
        "mean_steps",
        "mean_travel_m",
        "mean_effective_steps",
        "mean_decision_time_s",
    ])?;
    for r in rows {
        w.write_record([
            cfg.hash(),
            cfg.seed.to_string(),
            r.policy.clone(),
            r.episodes.to_string(),
            r.mean_steps.to_string(),
            r.mean_travel_m.to_string(),
            r.mean_effective_steps.to_string(),
            r.mean_decision_time_s.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
