//! Factorized multi-head Q-network with replay and hard target sync.
//!
//! Every transition is a terminal single-step episode, so the regression
//! target of each head is the immediate reward. The target network is kept
//! and synced on schedule but never enters the target.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::env::{AssociationEnv, JointAction, StateNormalizer};
use crate::error::{Error, Result};
use crate::heads::MultiHeadNet;
use crate::nn::{argmax, flatten_params, load_params, Adam, AdamConfig, DenseGrad};
use crate::ppo::TrainingSet;

pub const Q_OUTPUT_GAIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub lr: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub min_fill: usize,
    pub target_sync: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub total_steps: u64,
    /// Scenarios acted on between consecutive gradient steps.
    pub num_envs: usize,
    /// Environment steps per curve point.
    pub log_every: u64,
    pub trunk: Vec<usize>,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            max_grad_norm: 0.5,
            batch_size: 256,
            buffer_capacity: 300_000,
            min_fill: 10_000,
            target_sync: 1000,
            eps_start: 1.0,
            eps_end: 0.01,
            eps_decay_steps: 500_000,
            total_steps: 200_000,
            num_envs: 32,
            log_every: 2056,
            trunk: vec![1024, 512, 256, 128],
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.max_grad_norm > 0.0
            && self.batch_size > 0
            && self.buffer_capacity >= self.batch_size
            && self.min_fill >= self.batch_size
            && self.min_fill <= self.buffer_capacity
            && self.target_sync > 0
            && (0.0..=1.0).contains(&self.eps_start)
            && (0.0..=1.0).contains(&self.eps_end)
            && self.eps_end <= self.eps_start
            && self.eps_decay_steps > 0
            && self.total_steps > 0
            && self.num_envs > 0
            && self.log_every > 0
            && !self.trunk.is_empty()
            && !self.trunk.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid DQN configuration {self:?}")))
        }
    }

    pub fn schedule(&self) -> EpsSchedule {
        EpsSchedule {
            start: self.eps_start,
            end: self.eps_end,
            decay_steps: self.eps_decay_steps,
        }
    }
}

/// Cosine-annealed exploration rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsSchedule {
    pub fn value(&self, t: u64) -> f64 {
        let frac = t.min(self.decay_steps) as f64 / self.decay_steps as f64;
        self.end + (self.start - self.end) / 2.0 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Ring buffer of transitions. States are stored as dataset row indices.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    num_uavs: usize,
    states: Vec<usize>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, num_uavs: usize) -> Self {
        Self {
            capacity,
            num_uavs,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest slot once full.
    pub fn push(&mut self, state: usize, actions: &[usize], reward: f64) {
        assert_eq!(actions.len(), self.num_uavs, "one action per UAV");
        if self.len() < self.capacity {
            self.states.push(state);
            self.actions.extend_from_slice(actions);
            self.rewards.push(reward);
        } else {
            let i = self.next;
            self.states[i] = state;
            self.actions[i * self.num_uavs..(i + 1) * self.num_uavs].copy_from_slice(actions);
            self.rewards[i] = reward;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform slot indices, with replacement.
    pub fn sample_slots<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.len())).collect()
    }

    pub fn state(&self, slot: usize) -> usize {
        self.states[slot]
    }

    pub fn actions(&self, slot: usize) -> &[usize] {
        &self.actions[slot * self.num_uavs..(slot + 1) * self.num_uavs]
    }

    pub fn reward(&self, slot: usize) -> f64 {
        self.rewards[slot]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub body: MultiHeadNet,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(dims: (usize, usize, usize), trunk: &[usize], normalizer: StateNormalizer, rng: &mut R) -> Result<Self> {
        Ok(Self {
            body: MultiHeadNet::new(dims, trunk, Q_OUTPUT_GAIN, normalizer, rng)?,
        })
    }

    /// Per-head Q-values for normalized features.
    pub fn q_values(&self, features: ArrayView1<f64>) -> Result<Vec<Array1<f64>>> {
        Ok(self.body.forward_one(features)?.1)
    }

    pub fn greedy(&self, raw_state: &[f64]) -> Result<JointAction> {
        let x = self.body.features(raw_state)?;
        let q = self.q_values(x.view())?;
        Ok(JointAction::from_indices(q.iter().map(|q| argmax(q.as_slice().expect("contiguous")))))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::QNetwork,
            num_uavs: self.body.num_uavs,
            num_bs: self.body.num_bs,
            num_beams: self.body.num_beams,
            trunk: self.body.trunk_widths(),
            critic: Vec::new(),
            normalizer: self.body.normalizer.clone(),
            params: flatten_params(self.body.layers()),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::QNetwork {
            return Err(Error::Shape(format!("checkpoint holds a {:?}, not a Q-network", ck.kind)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dims = (ck.num_uavs, ck.num_bs, ck.num_beams);
        let mut net = Self::new(dims, &ck.trunk, ck.normalizer.clone(), &mut rng)?;
        let used = load_params(net.body.layers_mut(), &ck.params)?;
        if used != ck.params.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} parameters, architecture needs {used}",
                ck.params.len()
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Per head: a uniform random index with probability `eps`, else the
/// argmax (lowest index on ties).
pub fn choose_eps_greedy<R: Rng + ?Sized>(q_heads: &[ArrayView1<f64>], eps: f64, rng: &mut R) -> Vec<usize> {
    q_heads
        .iter()
        .map(|q| {
            if rng.random::<f64>() < eps {
                rng.random_range(0..q.len())
            } else {
                argmax(q.as_slice().expect("contiguous"))
            }
        })
        .collect()
}

pub fn act_eps_greedy<R: Rng + ?Sized>(net: &QNetwork, raw_state: &[f64], eps: f64, rng: &mut R) -> Result<JointAction> {
    let x = net.body.features(raw_state)?;
    let q = net.q_values(x.view())?;
    let views: Vec<_> = q.iter().map(|q| q.view()).collect();
    Ok(JointAction::from_indices(choose_eps_greedy(&views, eps, rng)))
}

/// Mean over samples and heads of `(Q_m(s, a_m) - r)^2`, with gradients.
pub fn dqn_loss(net: &QNetwork, features: Array2<f64>, actions: &Array2<usize>, rewards: &[f64]) -> Result<(f64, Vec<DenseGrad>)> {
    let b = features.nrows();
    let m_count = net.body.num_uavs;
    if b == 0 || actions.dim() != (b, m_count) || rewards.len() != b {
        return Err(Error::Shape("DQN batch fields are misaligned".into()));
    }
    let fwd = net.body.forward(features)?;
    let scale = 1.0 / (b * m_count) as f64;
    let mut loss = 0.0;
    let mut d_out = Vec::with_capacity(m_count);
    for (m, q) in fwd.outputs.iter().enumerate() {
        let mut d = Array2::zeros(q.raw_dim());
        for i in 0..b {
            let a = actions[[i, m]];
            let err = q[[i, a]] - rewards[i];
            loss += err * err * scale;
            d[[i, a]] = 2.0 * err * scale;
        }
        d_out.push(d);
    }
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite DQN loss over {b} samples")));
    }
    Ok((loss, net.body.backward(&fwd, d_out, None)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnCurvePoint {
    pub step: u64,
    pub mean_reward: f64,
    pub epsilon: f64,
}

pub struct DqnTrainer {
    pub online: QNetwork,
    pub target: QNetwork,
    pub buffer: ReplayBuffer,
    pub cfg: DqnConfig,
    opt: Adam,
    pub rng: ChaCha8Rng,
    pub env_steps: u64,
    pub learner_steps: u64,
}

impl DqnTrainer {
    pub fn new(online: QNetwork, cfg: DqnConfig, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let opt = Adam::new(
            online.body.layers(),
            AdamConfig {
                lr: cfg.lr,
                max_grad_norm: Some(cfg.max_grad_norm),
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            target: online.clone(),
            buffer: ReplayBuffer::new(cfg.buffer_capacity, online.body.num_uavs),
            online,
            cfg,
            opt,
            rng,
            env_steps: 0,
            learner_steps: 0,
        })
    }

    /// One gradient step on a uniform replay sample; syncs the target
    /// network every `target_sync` learner steps.
    pub fn learn(&mut self, features: &Array2<f64>) -> Result<f64> {
        let slots = self.buffer.sample_slots(self.cfg.batch_size, &mut self.rng);
        let rows: Vec<usize> = slots.iter().map(|&s| self.buffer.state(s)).collect();
        let m_count = self.online.body.num_uavs;
        let actions = Array2::from_shape_fn((slots.len(), m_count), |(i, m)| self.buffer.actions(slots[i])[m]);
        let rewards: Vec<f64> = slots.iter().map(|&s| self.buffer.reward(s)).collect();
        let (loss, grads) = dqn_loss(&self.online, features.select(Axis(0), &rows), &actions, &rewards)?;
        let mut layers: Vec<_> = self.online.body.layers_mut().collect();
        self.opt.apply(&mut layers, &grads)?;
        self.learner_steps += 1;
        if self.learner_steps.is_multiple_of(self.cfg.target_sync) {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    pub fn train(&mut self, env: &AssociationEnv, data: &TrainingSet, mut on_log: impl FnMut(&DqnCurvePoint)) -> Result<Vec<DqnCurvePoint>> {
        data.check(env)?;
        let features = data.feature_matrix(&self.online.body.normalizer);
        let schedule = self.cfg.schedule();
        let mut curve = Vec::new();
        let (mut window_sum, mut window_len) = (0.0, 0u64);
        let mut next_log = self.cfg.log_every;
        while self.env_steps < self.cfg.total_steps {
            let n = (self.cfg.total_steps - self.env_steps).min(self.cfg.num_envs as u64) as usize;
            let ids: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..data.scenarios.len())).collect();
            let fwd = self.online.body.forward(features.select(Axis(0), &ids))?;
            for (i, &id) in ids.iter().enumerate() {
                let eps = schedule.value(self.env_steps);
                let rows: Vec<_> = fwd.outputs.iter().map(|q| q.row(i)).collect();
                let actions = choose_eps_greedy(&rows, eps, &mut self.rng);
                let reward = env
                    .step(&data.scenarios[id], &data.tables[id], &JointAction::from_indices(actions.iter().copied()))?
                    .reward;
                self.buffer.push(id, &actions, reward);
                self.env_steps += 1;
                window_sum += reward;
                window_len += 1;
                if self.env_steps >= next_log || self.env_steps == self.cfg.total_steps {
                    let point = DqnCurvePoint {
                        step: self.env_steps,
                        mean_reward: window_sum / window_len as f64,
                        epsilon: eps,
                    };
                    on_log(&point);
                    curve.push(point);
                    (window_sum, window_len) = (0.0, 0);
                    next_log += self.cfg.log_every;
                }
            }
            if self.buffer.len() >= self.cfg.min_fill {
                self.learn(&features)?;
            }
        }
        Ok(curve)
    }
}

pub fn train(env: &AssociationEnv, data: &TrainingSet, cfg: &DqnConfig) -> Result<(QNetwork, Vec<DqnCurvePoint>)> {
    cfg.validate()?;
    data.check(env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = (env.num_uavs, env.num_bs, env.num_beams);
    let net = QNetwork::new(dims, &cfg.trunk, data.fit_normalizer()?, &mut rng)?;
    let mut trainer = DqnTrainer::new(net, cfg.clone(), rng)?;
    let curve = trainer.train(env, data, |_| {})?;
    Ok((trainer.online, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> QNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QNetwork::new((2, 1, 3), &[5, 4], StateNormalizer::identity(18), &mut rng).unwrap()
    }

    #[test]
    fn epsilon_endpoints() {
        let s = DqnConfig::default().schedule();
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(500_000), 0.01);
        assert_eq!(s.value(900_000), 0.01);
        assert!((s.value(250_000) - 0.505).abs() < 1e-15);
    }

    #[test]
    fn greedy_with_dominant_q() {
        let mut net = tiny(0);
        for (m, head) in net.body.heads.iter_mut().enumerate() {
            head.w.fill(0.0);
            head.b.fill(0.0);
            head.b[m] = 9.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = act_eps_greedy(&net, &[0.1; 18], 0.0, &mut rng).unwrap();
            assert_eq!(a, JointAction::from_indices([0, 1]));
        }
    }

    #[test]
    fn identical_transitions_loss() {
        let net = tiny(2);
        let x = Array2::from_elem((3, 18), 0.4);
        let q = net.q_values(x.row(0)).unwrap();
        let actions = Array2::from_shape_fn((3, 2), |(_, m)| m + 1);
        let (loss, _) = dqn_loss(&net, x, &actions, &[2.0; 3]).unwrap();
        let expect = ((q[0][1] - 2.0).powi(2) + (q[1][2] - 2.0).powi(2)) / 2.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut b = ReplayBuffer::new(2, 1);
        b.push(0, &[0], 1.0);
        b.push(1, &[1], 2.0);
        b.push(2, &[2], 3.0);
        assert_eq!(b.len(), 2);
        assert_eq!((b.state(0), b.actions(0), b.reward(0)), (2, &[2][..], 3.0));
        assert_eq!(b.state(1), 1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = tiny(3);
        assert_eq!(QNetwork::from_checkpoint(&net.to_checkpoint()).unwrap(), net);
    }
}
