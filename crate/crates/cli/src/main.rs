use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avgrasp::bench::{
    build_report, compare_exploration, episode_seed, generate_pose_set, make_policy, read_records_jsonl,
    run_benchmark, run_episode, write_comparison_csv, write_difficulty_csv, write_records_jsonl,
    write_success_csv, LoadedModels, POLICY_NAMES,
};
use avgrasp::catalog::resolve_object;
use avgrasp::config::RunConfig;
use avgrasp::mesh::Mesh;
use avgrasp::ml::{generate_selfsup_dataset, save_model, train_qnet, train_selfsup, ModelFile};
use avgrasp::sim::Simulator;
use avgrasp::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "avgrasp", version, about = "Active-vision grasp synthesis simulator and benchmark")]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true, env = "AVGRASP_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Write object, table and unexplored clouds for every step.
    #[arg(long, global = true)]
    dump_clouds: bool,

    /// Leave decision times out of records so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one episode and write its record.
    Run {
        /// Bundled object name or OBJ path.
        #[arg(long)]
        object: String,
        /// Object rotation about the table normal, degrees.
        #[arg(long, default_value_t = 0.0)]
        pose: f64,
        #[arg(long)]
        policy: String,
    },
    /// Train a learned policy.
    Train {
        #[arg(value_enum)]
        kind: TrainKind,
        /// Self-supervised poses per object.
        #[arg(long)]
        poses: Option<usize>,
        /// Q-learning episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Training objects, overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        objects: Vec<String>,
    },
    /// Run policies over a shared pose set and write records and reports.
    Benchmark {
        #[arg(long, value_delimiter = ',')]
        objects: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        #[arg(long)]
        poses: Option<usize>,
        /// The 100-pose protocol.
        #[arg(long, conflicts_with = "poses")]
        full: bool,
    },
    /// Travel and decision time of the 3D heuristic against information gain.
    Compare {
        #[arg(long, value_delimiter = ',')]
        objects: Vec<String>,
        #[arg(long)]
        poses: Option<usize>,
    },
    /// Rebuild reports from stored episode records.
    Report {
        #[arg(long)]
        records: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TrainKind {
    Selfsup,
    Qlearn,
}

fn load_objects(names: &[String]) -> Result<Vec<(String, Mesh)>> {
    names.iter().map(|n| resolve_object(n)).collect()
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn dump_dir(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    if !cfg.output.dump_clouds {
        return Ok(None);
    }
    let dir = cfg.output.dir.join("clouds");
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(Some(dir))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn check_policies(policies: &[String]) -> Result<()> {
    for p in policies {
        if !POLICY_NAMES.contains(&p.as_str()) {
            return Err(Error::UnknownPolicy(p.clone()));
        }
    }
    Ok(())
}

fn cmd_run(cfg: &RunConfig, object: &str, pose: f64, policy: &str) -> Result<()> {
    check_policies(&[policy.to_string()])?;
    let (name, mesh) = resolve_object(object)?;
    let models = LoadedModels::for_policies(&[policy.to_string()], cfg)?;
    let mut p = make_policy(policy, cfg, &models)?;
    let mut sim = Simulator::new(&name, &mesh, pose, cfg.start_pose(), cfg);
    let rec = run_episode(&mut sim, p.as_mut(), pose, episode_seed(cfg.seed, &name, pose), dump_dir(cfg)?.as_deref())?;
    let path = cfg.output.dir.join(format!("run_{name}_{pose}_{policy}.json"));
    write_text(&path, &(serde_json::to_string_pretty(&rec)? + "\n"))?;
    println!(
        "{} {} pose {}: {} after {} steps, travel {:.3} m",
        policy,
        name,
        pose,
        if rec.success { "grasp" } else { "no grasp" },
        rec.steps_used,
        rec.travel_m
    );
    println!("record: {}", path.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, kind: TrainKind) -> Result<()> {
    let dir = cfg.output.dir.join("models");
    match kind {
        TrainKind::Selfsup => {
            let objects = load_objects(&cfg.ml.selfsup_objects)?;
            let samples = generate_selfsup_dataset(&objects, cfg.ml.selfsup_poses_per_object, cfg, cfg.seed);
            let t = train_selfsup(&samples, cfg)?;
            let mut csv = String::from("config_hash,seed,kind,samples,train,heldout,heldout_accuracy\n");
            for m in [&t.logistic, &t.lda] {
                let name = m.classifier.kind.name();
                let path = dir.join(format!("selfsup-{name}.model"));
                save_model(&path, &ModelFile::SelfSup(m.clone()))?;
                let acc = m.heldout_accuracy.map_or("".to_string(), |a| a.to_string());
                csv.push_str(&format!(
                    "{},{},{name},{},{},{},{acc}\n",
                    cfg.hash(),
                    cfg.seed,
                    t.samples,
                    t.train_samples,
                    t.heldout_samples
                ));
                println!("{name}: held-out accuracy {acc} ({} held out), model {}", t.heldout_samples, path.display());
            }
            println!("{} samples, labels per direction {:?}", t.samples, t.label_counts);
            write_text(&dir.join("selfsup-metrics.csv"), &csv)
        }
        TrainKind::Qlearn => {
            let objects = load_objects(&cfg.ml.q.objects)?;
            let (model, result) = train_qnet(&objects, cfg, cfg.seed);
            let path = dir.join("qnet.model");
            save_model(&path, &ModelFile::Q(model))?;
            let mut csv = String::from("config_hash,seed,episode,steps,loss\n");
            for (i, (s, l)) in result.steps.iter().zip(&result.losses).enumerate() {
                csv.push_str(&format!("{},{},{i},{s},{l}\n", cfg.hash(), cfg.seed));
            }
            write_text(&dir.join("qnet-curve.csv"), &csv)?;
            let n = result.steps.len();
            let w = n.min(50);
            let mean = |s: &[usize]| s.iter().sum::<usize>() as f64 / s.len().max(1) as f64;
            println!(
                "{n} episodes; mean steps first {w}: {:.2}, last {w}: {:.2}; model {}",
                mean(&result.steps[..w]),
                mean(&result.steps[n - w..]),
                path.display()
            );
            Ok(())
        }
    }
}

fn write_reports(cfg: &RunConfig, records: &[avgrasp::bench::EpisodeRecord], policies: &[String]) -> Result<()> {
    let dir = &cfg.output.dir;
    let report = build_report(records, cfg);
    write_success_csv(&dir.join("success_by_step.csv"), &report)?;
    write_difficulty_csv(&dir.join("difficulty.csv"), &report)?;
    let pair = ["h3d", "infogain"];
    if pair.iter().all(|p| policies.iter().any(|q| q == p)) {
        write_comparison_csv(&dir.join("comparison.csv"), &compare_exploration(records, &pair, cfg), cfg)?;
    }
    for r in &report.rows {
        println!(
            "{:<14} {:<15} mean steps {:.2}  curve {:?}",
            r.object,
            r.policy,
            r.mean_steps,
            r.success_by_step.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
        );
    }
    for (o, d) in &report.difficulty {
        println!("{o}: {:?} (ratio {:.2})", d.class, d.ratio);
    }
    println!("config {} seed {} -> {}", report.config_hash, report.seed, dir.display());
    Ok(())
}

fn cmd_benchmark(cfg: &RunConfig, policies: &[String]) -> Result<()> {
    check_policies(policies)?;
    let objects = load_objects(&cfg.bench.objects)?;
    let models = LoadedModels::for_policies(policies, cfg)?;
    let poses = generate_pose_set(cfg.bench.poses, cfg.bench.pose_seed);
    let records = run_benchmark(&objects, policies, &poses, cfg, &models, dump_dir(cfg)?.as_deref())?;
    write_records_jsonl(&cfg.output.dir.join("records.jsonl"), &records)?;
    write_reports(cfg, &records, policies)
}

fn cmd_report(cfg: &RunConfig, path: &Path) -> Result<()> {
    let records = read_records_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::InsufficientData(format!("{} holds no records", path.display())));
    }
    if let Some(r) = records.iter().find(|r| r.config_hash != cfg.hash()) {
        return Err(Error::Config(format!(
            "records come from config {} but the current config is {}",
            r.config_hash,
            cfg.hash()
        )));
    }
    let mut policies: Vec<String> = records.iter().map(|r| r.policy.clone()).collect();
    policies.sort();
    policies.dedup();
    write_reports(cfg, &records, &policies)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.out_dir {
        cfg.output.dir = d;
    }
    if cli.dump_clouds {
        cfg.output.dump_clouds = true;
    }
    if cli.no_timing {
        cfg.output.record_timing = false;
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.cmd {
        Command::Run { object, pose, policy } => cmd_run(&cfg, &object, pose, &policy),
        Command::Train {
            kind,
            poses,
            episodes,
            objects,
        } => {
            if let Some(p) = poses {
                cfg.ml.selfsup_poses_per_object = p;
            }
            if let Some(e) = episodes {
                cfg.ml.q.episodes = e;
            }
            if !objects.is_empty() {
                match kind {
                    TrainKind::Selfsup => cfg.ml.selfsup_objects = objects,
                    TrainKind::Qlearn => cfg.ml.q.objects = objects,
                }
            }
            cfg.validate()?;
            cmd_train(&cfg, kind)
        }
        Command::Benchmark {
            objects,
            policies,
            poses,
            full,
        } => {
            if !objects.is_empty() {
                cfg.bench.objects = objects;
            }
            if !policies.is_empty() {
                cfg.bench.policies = policies;
            }
            if let Some(p) = poses {
                cfg.bench.poses = p;
            }
            if full {
                cfg.bench.poses = 100;
            }
            cfg.validate()?;
            let policies = cfg.bench.policies.clone();
            cmd_benchmark(&cfg, &policies)
        }
        Command::Compare { objects, poses } => {
            if !objects.is_empty() {
                cfg.bench.objects = objects;
            }
            if let Some(p) = poses {
                cfg.bench.poses = p;
            }
            cfg.validate()?;
            cmd_benchmark(&cfg, &["h3d".to_string(), "infogain".to_string()])
        }
        Command::Report { records } => cmd_report(&cfg, &records),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::UnknownPolicy(_) | Error::UnknownObject(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
