use avgrasp::bench::{
    build_report, check_bfs_dominance, make_policy, read_records_jsonl, run_benchmark, run_episode, write_records_jsonl,
    EpisodeRecord, LoadedModels,
};
use avgrasp::catalog::resolve_object;
use avgrasp::config::RunConfig;
use avgrasp::ml::{load_model, save_model, train_qnet, ModelFile};
use avgrasp::policies::Action;
use avgrasp::sim::Simulator;
use avgrasp::viewsphere::arc_distance;
use avgrasp::Error;

fn quiet() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.output.record_timing = false;
    cfg
}

fn check_episode(r: &EpisodeRecord, cfg: &RunConfig) {
    let vs = &cfg.viewsphere;
    assert!(r.steps_used <= cfg.scene.max_steps, "{r:?}");
    assert_eq!(r.steps.first().map(|s| s.step), Some(0));
    let found: Vec<usize> = r.steps.iter().filter(|s| s.grasp_found).map(|s| s.step).collect();
    if r.success {
        assert_eq!(found, vec![r.steps_used], "grasp only at the terminal step");
        assert!(r.grasp.is_some());
    } else {
        assert!(found.is_empty());
    }
    let mut travel = 0.0;
    for w in r.steps.windows(2) {
        assert!(w[1].unexplored_count <= w[0].unexplored_count);
        travel += arc_distance(&w[0].pose, &w[1].pose).unwrap();
    }
    assert!((travel - r.travel_m).abs() < 1e-9, "{} vs {}", travel, r.travel_m);
    let lattice = r.policy != "infogain";
    for s in &r.steps {
        assert!(vs.polar_in_bounds(s.pose.polar_deg), "{:?}", s.pose);
        if lattice {
            assert_eq!((s.pose.polar_deg - vs.polar_min_deg) % vs.step_deg, 0.0);
        }
        if let Some(Action::Jump { .. }) = s.action {
            assert!(!lattice);
        }
    }
}

#[test]
fn small_benchmark_respects_episode_and_suite_invariants() {
    let cfg = quiet();
    let objects = vec![resolve_object("mug").unwrap(), resolve_object("hex_prism").unwrap()];
    let policies: Vec<String> = ["random", "brick", "bfs", "h2d", "h3d", "infogain"].map(String::from).to_vec();
    let recs = run_benchmark(&objects, &policies, &[15, 200], &cfg, &LoadedModels::default(), None).unwrap();
    assert_eq!(recs.len(), 2 * 2 * policies.len());
    for r in &recs {
        check_episode(r, &cfg);
        assert_eq!(r.config_hash, cfg.hash());
        assert_eq!(r.decision_time_s, 0.0);
    }
    check_bfs_dominance(&recs).unwrap();

    let again = run_benchmark(&objects, &policies, &[15, 200], &cfg, &LoadedModels::default(), None).unwrap();
    assert_eq!(recs, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    write_records_jsonl(&path, &recs).unwrap();
    let back = read_records_jsonl(&path).unwrap();
    assert_eq!(back, recs);
    let mut reversed = back.clone();
    reversed.reverse();
    assert_eq!(build_report(&reversed, &cfg), build_report(&recs, &cfg));
}

#[test]
fn trained_q_model_survives_a_file_round_trip() {
    let mut cfg = quiet();
    cfg.ml.q.episodes = 4;
    cfg.ml.q.objects = vec!["prism6x6x6".into()];
    let objects = vec![resolve_object("prism6x6x6").unwrap()];
    let (model, result) = train_qnet(&objects, &cfg, 3);
    assert_eq!(result.steps.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.model");
    save_model(&path, &ModelFile::Q(model.clone())).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, ModelFile::Q(model));

    let models = LoadedModels {
        qnet: Some(loaded),
        ..LoadedModels::default()
    };
    let (name, mesh) = resolve_object("can").unwrap();
    let mut policy = make_policy("qlearn", &cfg, &models).unwrap();
    let mut sim = Simulator::new(&name, &mesh, 45.0, cfg.start_pose(), &cfg);
    let rec = run_episode(&mut sim, policy.as_mut(), 45.0, 0, None).unwrap();
    check_episode(&rec, &cfg);

    let (train_name, train_mesh) = resolve_object("prism6x6x6").unwrap();
    let mut sim = Simulator::new(&train_name, &train_mesh, 0.0, cfg.start_pose(), &cfg);
    assert!(matches!(
        run_episode(&mut sim, policy.as_mut(), 0.0, 0, None),
        Err(Error::TrainingObject { .. })
    ));
    let refused = run_benchmark(
        &[resolve_object("prism6x6x6").unwrap()],
        &["qlearn".to_string()],
        &[0],
        &cfg,
        &models,
        None,
    );
    assert!(matches!(refused, Err(Error::TrainingObject { .. })));
}

#[test]
fn dumped_clouds_are_written_per_step() {
    let cfg = quiet();
    let dir = tempfile::tempdir().unwrap();
    let (name, mesh) = resolve_object("ball").unwrap();
    let mut sim = Simulator::new(&name, &mesh, 0.0, cfg.start_pose(), &cfg);
    let mut policy = make_policy("h3d", &cfg, &LoadedModels::default()).unwrap();
    let rec = run_episode(&mut sim, policy.as_mut(), 0.0, 0, Some(dir.path())).unwrap();
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    // Object, table and unexplored clouds for every step.
    assert_eq!(files, 3 * rec.steps.len());
}
