//! Learned policies: height-map state features, PCA, linear direction
//! classifiers trained on self-supervised rollouts, and a deep Q-network.

mod classifier;
mod dataset;
mod haf;
pub mod io;
mod pca;
mod qnet;

pub use classifier::{ClassifierKind, LinearClassifier, TrainParams, NUM_CLASSES};
pub use dataset::{generate_selfsup_dataset, label_start, random_start, split_heldout, Sample};
pub use haf::{build_state, haf_extract};
pub use io::{load_model, save_model, ModelFile};
pub use pca::Pca;
pub use qnet::{
    epsilon_at, greedy_action, q_input, q_train, td_target, valid_mask, Adam, Dense, Mlp, QTrainResult,
    ReplayBuffer, Transition,
};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::policies::{argmax_first, Action, Policy, PolicyContext, PolicyDecision};
use crate::viewsphere::Direction;

/// PCA plus a linear classifier over the compressed state.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfSupModel {
    pub haf_grid: usize,
    pub haf_region_m: f64,
    pub pca: Pca,
    pub classifier: LinearClassifier,
    pub training_objects: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub heldout_accuracy: Option<f64>,
}

impl SelfSupModel {
    pub fn scores(&self, state: &[f64]) -> [f64; NUM_CLASSES] {
        self.classifier.scores(&self.pca.transform(state))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QModel {
    pub haf_grid: usize,
    pub haf_region_m: f64,
    pub net: Mlp,
    pub training_objects: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SelfSupTraining {
    pub logistic: SelfSupModel,
    pub lda: SelfSupModel,
    pub samples: usize,
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub label_counts: [usize; NUM_CLASSES],
}

/// Fits PCA on the training split and both classifier kinds on its
/// projection. Held-out accuracy is stored on each model.
pub fn train_selfsup(samples: &[Sample], cfg: &RunConfig) -> Result<SelfSupTraining> {
    let (train, test) = split_heldout(samples, cfg.ml.heldout_fraction);
    let states: Vec<Vec<f64>> = train.iter().map(|s| s.state.clone()).collect();
    let pca = Pca::fit(&states, cfg.ml.pca_components)?;
    let project = |set: &[&Sample]| -> (Vec<Vec<f64>>, Vec<Direction>) {
        (
            set.iter().map(|s| pca.transform(&s.state)).collect(),
            set.iter().map(|s| s.label).collect(),
        )
    };
    let (xs, ys) = project(&train);
    let (xt, yt) = project(&test);
    let params = TrainParams {
        learning_rate: cfg.ml.logistic_learning_rate,
        epochs: cfg.ml.logistic_epochs,
        l2: cfg.ml.logistic_l2,
        shrinkage: cfg.ml.lda_shrinkage,
    };
    let mut objects: Vec<String> = samples.iter().map(|s| s.object.clone()).collect();
    objects.sort();
    objects.dedup();
    let make = |kind| -> Result<SelfSupModel> {
        let clf = LinearClassifier::train(kind, &xs, &ys, &params)?;
        let acc = (!xt.is_empty()).then(|| clf.accuracy(&xt, &yt));
        Ok(SelfSupModel {
            haf_grid: cfg.ml.haf_grid,
            haf_region_m: cfg.ml.haf_region_m,
            pca: pca.clone(),
            classifier: clf,
            training_objects: objects.clone(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            heldout_accuracy: acc,
        })
    };
    let mut label_counts = [0; NUM_CLASSES];
    for s in samples {
        label_counts[s.label.index()] += 1;
    }
    Ok(SelfSupTraining {
        logistic: make(ClassifierKind::Logistic)?,
        lda: make(ClassifierKind::Discriminant)?,
        samples: samples.len(),
        train_samples: train.len(),
        heldout_samples: test.len(),
        label_counts,
    })
}

/// Trains the Q-network and wraps it with its manifest.
pub fn train_qnet(objects: &[(String, Mesh)], cfg: &RunConfig, seed: u64) -> (QModel, QTrainResult) {
    let result = q_train(objects, cfg, seed);
    let mut names: Vec<String> = objects.iter().map(|(n, _)| n.clone()).collect();
    names.sort();
    names.dedup();
    let model = QModel {
        haf_grid: cfg.ml.haf_grid,
        haf_region_m: cfg.ml.haf_region_m,
        net: result.net.clone(),
        training_objects: names,
        config_hash: cfg.hash(),
        seed,
    };
    (model, result)
}

fn masked_choice(scores: &[f64], ctx: &PolicyContext<'_>) -> Result<PolicyDecision> {
    let valid = valid_mask(&ctx.pose, ctx.cfg);
    let masked: Vec<f64> = scores
        .iter()
        .zip(&valid)
        .map(|(s, ok)| if *ok { *s } else { f64::NEG_INFINITY })
        .collect();
    let i = argmax_first(&masked).filter(|&i| valid[i]);
    // A class the model never saw scores minus infinity everywhere; fall
    // back to the first valid direction rather than an invalid one.
    let i = i
        .or_else(|| valid.iter().position(|v| *v))
        .ok_or_else(|| Error::Harness("no valid neighbor".into()))?;
    Ok(PolicyDecision {
        action: Action::Move {
            direction: Direction::ALL[i],
            steps: 1,
        },
        scores: Direction::ALL
            .iter()
            .zip(scores)
            .filter(|(d, _)| valid[d.index()])
            .map(|(d, s)| (d.to_string(), *s))
            .collect(),
    })
}

/// Predicts the next direction from the self-supervised classifier.
pub struct ClassifierPolicy {
    pub model: SelfSupModel,
}

impl Policy for ClassifierPolicy {
    fn name(&self) -> String {
        match self.model.classifier.kind {
            ClassifierKind::Logistic => "classifier".into(),
            ClassifierKind::Discriminant => "classifier-lda".into(),
        }
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        let state = build_state(ctx.model, &ctx.pose, self.model.haf_grid, &ctx.center, self.model.haf_region_m);
        masked_choice(&self.model.scores(&state), ctx)
    }

    fn training_manifest(&self) -> &[String] {
        &self.model.training_objects
    }
}

/// Greedy action of the trained Q-network over valid directions.
pub struct QPolicy {
    pub model: QModel,
}

impl Policy for QPolicy {
    fn name(&self) -> String {
        "qlearn".into()
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        let mut state = build_state(ctx.model, &ctx.pose, self.model.haf_grid, &ctx.center, self.model.haf_region_m);
        let n = state.len();
        state[n - 2] /= 90.0;
        state[n - 1] /= 360.0;
        masked_choice(&self.model.net.forward(&state), ctx)
    }

    fn training_manifest(&self) -> &[String] {
        &self.model.training_objects
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::sim::Simulator;
    use crate::viewsphere::{neighbor, SphericalPose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic_samples(n: usize) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Direction::E } else { Direction::W };
                let mut state: Vec<f64> = (0..52).map(|_| rng.random_range(0.0..0.01)).collect();
                state[0] = if label == Direction::E { 0.1 } else { 0.0 };
                Sample {
                    object: "prism6x6x6".into(),
                    rotation_deg: 0.0,
                    start: SphericalPose::new(0.4, 50.0, 0.0),
                    state,
                    label,
                    path_len: 1,
                }
            })
            .collect()
    }

    #[test]
    fn model_files_round_trip_exactly() {
        let cfg = RunConfig::default();
        let t = train_selfsup(&synthetic_samples(60), &cfg).unwrap();
        for m in [t.logistic, t.lda] {
            let file = ModelFile::SelfSup(m);
            let text = io::to_text(&file);
            assert_eq!(io::from_text(&text).unwrap(), file);
            assert_eq!(io::to_text(&io::from_text(&text).unwrap()), text);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = ModelFile::Q(QModel {
            haf_grid: 5,
            haf_region_m: 0.3,
            net: Mlp::new(&[52, 16, 8], &mut rng),
            training_objects: vec!["prism10x8x4".into()],
            config_hash: cfg.hash(),
            seed: 1,
        });
        let text = io::to_text(&q);
        assert!(text.lines().next().unwrap().starts_with('{'));
        assert_eq!(io::from_text(&text).unwrap(), q);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/q.model");
        save_model(&path, &q).unwrap();
        assert_eq!(load_model(&path).unwrap(), q);
        assert!(matches!(io::from_text("not json\n"), Err(Error::ModelFormat(_))));
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(io::from_text(&truncated), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn learned_policies_only_emit_valid_moves() {
        let cfg = RunConfig::default();
        let (name, mesh) = crate::catalog::resolve_object("can").unwrap();
        let t = train_selfsup(&synthetic_samples(60), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = QModel {
            haf_grid: 5,
            haf_region_m: 0.3,
            net: Mlp::new(&[52, 32, 8], &mut rng),
            training_objects: vec![],
            config_hash: String::new(),
            seed: 0,
        };
        let mut policies: Vec<Box<dyn Policy>> = vec![
            Box::new(ClassifierPolicy { model: t.logistic }),
            Box::new(ClassifierPolicy { model: t.lda }),
            Box::new(QPolicy { model: q }),
        ];
        for top in [10.0, 50.0, 70.0] {
            let start = SphericalPose::new(0.4, top, 40.0);
            let mut sim = Simulator::new(&name, &mesh, 0.0, start, &cfg);
            let model = sim.model(&[start]);
            for p in policies.iter_mut() {
                let center: Point = sim.center();
                let history = [start];
                let mut ctx = PolicyContext {
                    model: &model,
                    pose: start,
                    step: 0,
                    history: &history,
                    center,
                    cfg: &cfg,
                    sim: &mut sim,
                };
                let a = p.decide(&mut ctx).unwrap();
                let b = p.decide(&mut ctx).unwrap();
                assert_eq!(a, b, "fixed state gives a fixed decision");
                match a.action {
                    Action::Move { direction, steps: 1 } => {
                        assert!(neighbor(&start, direction, 1, &cfg.viewsphere).is_some())
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
        }
    }

    #[test]
    fn perfect_classifier_reproduces_training_labels() {
        let cfg = RunConfig::default();
        let samples = synthetic_samples(60);
        let t = train_selfsup(&samples, &cfg).unwrap();
        let clf = t.logistic;
        for s in samples.iter().take(10) {
            let z = clf.pca.transform(&s.state);
            assert_eq!(clf.classifier.predict(&z), s.label);
        }
    }
}
