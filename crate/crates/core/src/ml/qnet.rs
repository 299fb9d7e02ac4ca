use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::haf::build_state;
use crate::config::RunConfig;
use crate::mesh::Mesh;
use crate::policies::{argmax_first, random_direction};
use crate::sim::Simulator;
use crate::viewsphere::{enumerate_neighbors, neighbor, Direction, SphericalPose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Fully connected network: ReLU between layers, linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer gradients, same shapes as the layers.
pub type Grads = Vec<Dense>;

impl Mlp {
    /// He-normal weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
                Dense {
                    w: DMatrix::from_fn(w[1], w[0], |_, _| normal.sample(rng)),
                    b: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    w: DMatrix::zeros(w[1], w[0]),
                    b: DVector::zeros(w[1]),
                })
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.ncols()];
        s.extend(self.layers.iter().map(|l| l.w.nrows()));
        s
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let out = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x));
        out.last().expect("at least one layer").iter().copied().collect()
    }

    /// Activations of every layer for a batch stored column-wise; the first
    /// entry is the input.
    fn forward_batch(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * acts.last().expect("input pushed");
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            if i + 1 < self.layers.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Loss `mean_i 0.5 (Q(s_i, a_i) - y_i)^2` and its gradient. Only the
    /// taken action's output contributes.
    pub fn td_loss_and_grads(&self, states: &DMatrix<f64>, actions: &[usize], targets: &[f64]) -> (f64, Grads) {
        let acts = self.forward_batch(states);
        let out = acts.last().expect("output");
        let n = actions.len() as f64;
        let mut delta = DMatrix::zeros(out.nrows(), out.ncols());
        let mut loss = 0.0;
        for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let e = out[(a, i)] - y;
            loss += 0.5 * e * e / n;
            delta[(a, i)] = e / n;
        }
        let mut grads: Grads = Vec::with_capacity(self.layers.len());
        for li in (0..self.layers.len()).rev() {
            let input = &acts[li];
            let gw = &delta * input.transpose();
            let gb = DVector::from_fn(delta.nrows(), |r, _| delta.row(r).sum());
            grads.push(Dense { w: gw, b: gb });
            if li > 0 {
                let mut back = self.layers[li].w.transpose() * &delta;
                back.zip_apply(input, |g, h| {
                    if h <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        (loss, grads)
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let z = Mlp::zeros(&net.sizes()).layers;
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: z.clone(),
            v: z,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        for ((layer, g), (m, v)) in net.layers.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            };
            update(layer.w.as_mut_slice(), g.w.as_slice(), m.w.as_mut_slice(), v.w.as_mut_slice());
            update(layer.b.as_mut_slice(), g.b.as_slice(), m.b.as_mut_slice(), v.b.as_mut_slice());
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Direction,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Directions available from the next pose.
    pub next_valid: [bool; 8],
    pub terminal: bool,
}

/// Fixed-capacity ring buffer sampled uniformly with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Bootstrapped target; terminal transitions use the reward alone.
pub fn td_target(net: &Mlp, t: &Transition, gamma: f64) -> f64 {
    if t.terminal {
        return t.reward;
    }
    let q = net.forward(&t.next_state);
    let best = q
        .iter()
        .zip(&t.next_valid)
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    t.reward + if best.is_finite() { gamma * best } else { 0.0 }
}

pub fn valid_mask(pose: &SphericalPose, cfg: &RunConfig) -> [bool; 8] {
    let mut m = [false; 8];
    for (d, _) in enumerate_neighbors(pose, &cfg.viewsphere) {
        m[d.index()] = true;
    }
    m
}

/// Highest-valued valid direction, ties by canonical order.
pub fn greedy_action(q: &[f64], valid: &[bool; 8]) -> Option<Direction> {
    let masked: Vec<f64> = q
        .iter()
        .zip(valid)
        .map(|(v, ok)| if *ok { *v } else { f64::NEG_INFINITY })
        .collect();
    let i = argmax_first(&masked)?;
    valid[i].then(|| Direction::ALL[i])
}

/// The network input: heights in meters, angles scaled to [0, 1].
pub fn q_input(model: &crate::cloud::SceneModel, pose: &SphericalPose, center: &crate::geom::Point, cfg: &RunConfig) -> Vec<f64> {
    let mut s = build_state(model, pose, cfg.ml.haf_grid, center, cfg.ml.haf_region_m);
    let n = s.len();
    s[n - 2] /= 90.0;
    s[n - 1] /= 360.0;
    s
}

pub fn epsilon_at(episode: usize, cfg: &crate::config::QConfig) -> f64 {
    let span = (cfg.epsilon_decay_fraction * cfg.episodes as f64).max(1.0);
    let f = (episode as f64 / span).min(1.0);
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTrainResult {
    pub net: Mlp,
    /// Steps used per episode, `max_steps` on failure.
    pub steps: Vec<usize>,
    pub losses: Vec<f64>,
}

/// Epsilon-greedy deep Q-learning with experience replay. Each episode
/// draws an object and a rotation, starts at the configured start pose and
/// runs until a grasp is found or the step budget is spent.
pub fn q_train(objects: &[(String, Mesh)], cfg: &RunConfig, seed: u64) -> QTrainResult {
    let q = &cfg.ml.q;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = 2 * cfg.ml.haf_grid * cfg.ml.haf_grid + 2;
    let mut sizes = vec![input];
    sizes.extend(&q.hidden);
    sizes.push(8);
    let mut net = Mlp::new(&sizes, &mut rng);
    let mut opt = Adam::new(&net, q.learning_rate);
    let mut replay = ReplayBuffer::new(q.replay_capacity);
    let mut sims: HashMap<(usize, u32), Simulator> = HashMap::new();
    let mut steps_curve = Vec::with_capacity(q.episodes);
    let mut losses = Vec::with_capacity(q.episodes);
    let max_steps = cfg.scene.max_steps;

    for ep in 0..q.episodes {
        let eps = epsilon_at(ep, q);
        let oi = rng.random_range(0..objects.len());
        let rot = rng.random_range(0..360u32);
        let sim = sims
            .entry((oi, rot))
            .or_insert_with(|| Simulator::new(&objects[oi].0, &objects[oi].1, rot as f64, cfg.start_pose(), cfg));
        let center = sim.center();
        let mut pose = sim.start();
        let mut history = vec![pose];
        let (mut model, grasp) = sim.model_and_grasp(&history);
        let mut used = max_steps;
        let mut ep_loss = 0.0;
        if grasp.is_some() {
            used = 0;
        } else {
            for step in 0..max_steps {
                let state = q_input(&model, &pose, &center, cfg);
                let valid = valid_mask(&pose, cfg);
                let dir = if rng.random::<f64>() < eps {
                    random_direction(&pose, &cfg.viewsphere, &mut rng)
                } else {
                    greedy_action(&net.forward(&state), &valid)
                }
                .expect("every lattice pose has a valid neighbor");
                pose = neighbor(&pose, dir, 1, &cfg.viewsphere).expect("direction was valid");
                history.push(pose);
                let (next_model, g) = sim.model_and_grasp(&history);
                model = next_model;
                let found = g.is_some();
                let terminal = found || step + 1 == max_steps;
                replay.push(Transition {
                    state,
                    action: dir,
                    reward: if found { 0.0 } else { -1.0 },
                    next_state: q_input(&model, &pose, &center, cfg),
                    next_valid: valid_mask(&pose, cfg),
                    terminal,
                });
                if replay.len() >= q.batch_size.min(replay.capacity) {
                    let batch = replay.sample(q.batch_size, &mut rng);
                    let states = DMatrix::from_fn(input, batch.len(), |r, c| batch[c].state[r]);
                    let actions: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
                    let targets: Vec<f64> = batch.iter().map(|t| td_target(&net, t, q.gamma)).collect();
                    let (loss, grads) = net.td_loss_and_grads(&states, &actions, &targets);
                    opt.step(&mut net, &grads);
                    ep_loss += loss;
                }
                if found {
                    used = step + 1;
                    break;
                }
            }
        }
        steps_curve.push(used);
        losses.push(ep_loss);
    }
    QTrainResult {
        net,
        steps: steps_curve,
        losses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(net: &Mlp, s: &DMatrix<f64>, a: &[usize], y: &[f64], layer: usize, idx: usize, h: f64) -> f64 {
        let mut plus = net.clone();
        plus.layers[layer].w.as_mut_slice()[idx] += h;
        let mut minus = net.clone();
        minus.layers[layer].w.as_mut_slice()[idx] -= h;
        (plus.td_loss_and_grads(s, a, y).0 - minus.td_loss_and_grads(s, a, y).0) / (2.0 * h)
    }

    #[test]
    fn gradient_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[52, 128, 128, 128, 128, 8], &mut rng);
        let s = DMatrix::from_fn(52, 4, |_, _| rng.random_range(0.0..1.0));
        let a = [1, 5, 5, 7];
        let y = [-1.0, 0.0, -2.0, 0.5];
        let (_, grads) = net.td_loss_and_grads(&s, &a, &y);
        let mut checked = 0;
        while checked < 20 {
            let layer = rng.random_range(0..net.layers.len());
            let idx = rng.random_range(0..net.layers[layer].w.len());
            let analytic = grads[layer].w.as_slice()[idx];
            if analytic.abs() < 1e-6 {
                continue;
            }
            let numeric = numeric_grad(&net, &s, &a, &y, layer, idx, 1e-6);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            assert!(rel < 1e-4, "layer {layer} idx {idx}: {analytic} vs {numeric}");
            checked += 1;
        }
    }

    #[test]
    fn zero_network_breaks_ties_canonically() {
        let net = Mlp::zeros(&[52, 128, 128, 128, 128, 8]);
        let q = net.forward(&[0.3; 52]);
        assert_eq!(q.len(), 8);
        assert!(q.iter().all(|v| *v == 0.0));
        assert_eq!(greedy_action(&q, &[true; 8]), Some(Direction::N));
        let mut top = [true; 8];
        top[Direction::N.index()] = false;
        top[Direction::NE.index()] = false;
        top[Direction::NW.index()] = false;
        assert_eq!(greedy_action(&q, &top), Some(Direction::E));
    }

    #[test]
    fn terminal_target_is_the_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 4, 8], &mut rng);
        let mut t = Transition {
            state: vec![0.1, 0.2, 0.3],
            action: Direction::E,
            reward: -1.0,
            next_state: vec![0.3, 0.2, 0.1],
            next_valid: [true; 8],
            terminal: true,
        };
        assert_eq!(td_target(&net, &t, 0.9), -1.0);
        t.terminal = false;
        let best = net.forward(&t.next_state).into_iter().fold(f64::NEG_INFINITY, f64::max);
        assert!((td_target(&net, &t, 0.9) - (-1.0 + 0.9 * best)).abs() < 1e-12);
    }

    #[test]
    fn adam_fits_a_fixed_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::new(&[4, 16, 8], &mut rng);
        let mut opt = Adam::new(&net, 1e-2);
        let s = DMatrix::from_fn(4, 8, |_, _| rng.random_range(-1.0..1.0));
        let a: Vec<usize> = (0..8).collect();
        let y = vec![-3.0; 8];
        let first = net.td_loss_and_grads(&s, &a, &y).0;
        for _ in 0..300 {
            let (_, g) = net.td_loss_and_grads(&s, &a, &y);
            opt.step(&mut net, &g);
        }
        assert!(net.td_loss_and_grads(&s, &a, &y).0 < 1e-3 * first);
    }

    #[test]
    fn replay_overwrites_oldest() {
        let mut r = ReplayBuffer::new(2);
        let t = |x: f64| Transition {
            state: vec![x],
            action: Direction::N,
            reward: 0.0,
            next_state: vec![x],
            next_valid: [true; 8],
            terminal: true,
        };
        r.push(t(1.0));
        r.push(t(2.0));
        r.push(t(3.0));
        assert_eq!(r.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seen: Vec<f64> = r.sample(50, &mut rng).iter().map(|t| t.state[0]).collect();
        assert!(seen.contains(&2.0) && seen.contains(&3.0) && !seen.contains(&1.0));
    }

    #[test]
    fn epsilon_schedule() {
        let q = crate::config::QConfig {
            episodes: 100,
            ..Default::default()
        };
        assert_eq!(epsilon_at(0, &q), 1.0);
        assert!((epsilon_at(30, &q) - 0.525).abs() < 1e-12);
        assert!((epsilon_at(60, &q) - 0.05).abs() < 1e-12);
        assert!((epsilon_at(99, &q) - 0.05).abs() < 1e-12);
    }
}
