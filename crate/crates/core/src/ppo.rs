//! Multi-head PPO: one categorical head per UAV over the flat BS-beam index,
//! a shared trunk, and a critic that reads the trunk output.
//!
//! Episodes are single decisions, so GAE collapses to `A = r - V(s)` and the
//! return is the reward itself. The joint ratio multiplies per-head
//! probabilities (log-probs are summed). The critic is trained on a
//! stop-gradient copy of the trunk features with its own optimizer, so only
//! the actor objective shapes the trunk.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::BeamGainTable;
use crate::channel::Scenario;
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::env::{assemble_state, AssociationEnv, JointAction, StateNormalizer};
use crate::error::{Error, Result};
use crate::heads::{MultiHeadNet, HIDDEN_GAIN};
use crate::nn::{flatten_params, load_params, Activation, Adam, AdamConfig, Categorical, DenseGrad, Mlp, MlpTape};

pub const ACTOR_OUTPUT_GAIN: f64 = 0.01;
pub const CRITIC_OUTPUT_GAIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub total_steps: u64,
    pub trunk: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.97,
            clip_eps: 0.15,
            beta_start: 0.2,
            beta_end: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            max_grad_norm: 0.5,
            batch_size: 2056,
            epochs: 12,
            minibatches: 8,
            total_steps: 200_000,
            trunk: vec![1024, 512, 256, 128],
            critic_hidden: vec![64, 32],
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.clip_eps > 0.0
            && self.beta_start >= 0.0
            && self.beta_end >= 0.0
            && self.actor_lr > 0.0
            && self.critic_lr > 0.0
            && self.max_grad_norm > 0.0
            && self.batch_size > 0
            && self.epochs >= 1
            && self.minibatches >= 1
            && self.minibatches <= self.batch_size
            && self.total_steps > 0
            && !self.trunk.is_empty()
            && !self.trunk.contains(&0)
            && !self.critic_hidden.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PPO configuration {self:?}")))
        }
    }

    /// Entropy coefficient, linear from `beta_start` at step 0 to `beta_end`
    /// at `total_steps`, constant afterwards.
    pub fn beta(&self, step: u64) -> f64 {
        let frac = (step as f64 / self.total_steps as f64).min(1.0);
        self.beta_start + (self.beta_end - self.beta_start) * frac
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            max_grad_norm: Some(self.max_grad_norm),
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: JointAction,
    /// Log-probability of each head's chosen index.
    pub log_probs: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub body: MultiHeadNet,
    pub critic: Mlp,
}

/// Cached batch forward pass.
pub struct ActorCriticForward {
    pub heads: crate::heads::HeadsForward,
    pub critic: MlpTape,
}

impl ActorCriticForward {
    pub fn logits(&self) -> &[Array2<f64>] {
        &self.heads.outputs
    }

    pub fn values(&self) -> Array1<f64> {
        self.critic.output.column(0).to_owned()
    }
}

/// Per-sample training inputs for one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    /// Normalized states, `B x 3MLN`.
    pub features: Array2<f64>,
    /// `B x M` chosen indices.
    pub actions: Array2<usize>,
    /// Joint log-probability under the behavior policy.
    pub old_log_prob: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// `-mean min(rho A, clip(rho) A)`.
    pub policy: f64,
    /// Mean over samples of the mean per-head entropy.
    pub entropy: f64,
    /// `mean (V - R)^2`.
    pub value: f64,
    pub clip_fraction: f64,
    pub max_ratio_dev: f64,
    pub approx_kl: f64,
}

impl LossTerms {
    pub fn actor(&self, beta: f64) -> f64 {
        self.policy - beta * self.entropy
    }
}

pub struct LossGrads {
    pub terms: LossTerms,
    /// Trunk then heads.
    pub actor: Vec<DenseGrad>,
    pub critic: Vec<DenseGrad>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        dims: (usize, usize, usize),
        trunk: &[usize],
        critic_hidden: &[usize],
        normalizer: StateNormalizer,
        rng: &mut R,
    ) -> Result<Self> {
        let body = MultiHeadNet::new(dims, trunk, ACTOR_OUTPUT_GAIN, normalizer, rng)?;
        let mut widths = vec![body.feature_dim()];
        widths.extend_from_slice(critic_hidden);
        widths.push(1);
        let critic = Mlp::new(&widths, HIDDEN_GAIN, CRITIC_OUTPUT_GAIN, Activation::Identity, rng);
        Ok(Self { body, critic })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.body.dims()
    }

    pub fn state_dim(&self) -> usize {
        self.body.state_dim()
    }

    pub fn forward(&self, features: Array2<f64>) -> Result<ActorCriticForward> {
        let heads = self.body.forward(features)?;
        let critic = self.critic.forward(heads.features().clone())?;
        Ok(ActorCriticForward { heads, critic })
    }

    /// Chooses a joint action for a raw `3MLN` state.
    pub fn act<R: Rng + ?Sized>(&self, raw_state: &[f64], mode: ActMode, rng: &mut R) -> Result<ActOutput> {
        let x = self.body.features(raw_state)?;
        let (z, logits) = self.body.forward_one(x.view())?;
        let mut actions = Vec::with_capacity(logits.len());
        let mut log_probs = Vec::with_capacity(logits.len());
        for (m, l) in logits.iter().enumerate() {
            let l = l.as_slice().expect("contiguous");
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::Inference(m));
            }
            let dist = Categorical::from_logits(l);
            let a = match mode {
                ActMode::Sample => dist.sample(rng),
                ActMode::Greedy => dist.mode(),
            };
            actions.push(a);
            log_probs.push(dist.log_prob(a));
        }
        let value = self.critic.forward_one(z.view())?[0];
        Ok(ActOutput {
            action: JointAction::from_indices(actions),
            log_probs,
            value,
        })
    }

    fn evaluate(&self, mb: &Minibatch, beta: f64, clip_eps: f64, want_grads: bool) -> Result<(LossTerms, Option<(Vec<DenseGrad>, Vec<DenseGrad>)>)> {
        let b = mb.features.nrows();
        let m_count = self.body.num_uavs;
        if b == 0 || mb.actions.dim() != (b, m_count) || mb.old_log_prob.len() != b || mb.advantages.len() != b || mb.returns.len() != b {
            return Err(Error::Shape("minibatch fields are misaligned".into()));
        }
        let fwd = self.forward(mb.features.clone())?;
        let bf = b as f64;
        let mf = m_count as f64;

        let mut dists = Vec::with_capacity(m_count);
        for logits in fwd.logits() {
            dists.push(
                logits
                    .outer_iter()
                    .map(|row| Categorical::from_logits(row.as_slice().expect("contiguous")))
                    .collect::<Vec<_>>(),
            );
        }

        let mut terms = LossTerms::default();
        let mut g_logp = vec![0.0; b];
        for i in 0..b {
            let mut new_lp = 0.0;
            for (m, d) in dists.iter().enumerate() {
                new_lp += d[i].log_prob(mb.actions[[i, m]]);
                terms.entropy += d[i].entropy() / (bf * mf);
            }
            let log_ratio = new_lp - mb.old_log_prob[i];
            let ratio = log_ratio.exp();
            let adv = mb.advantages[i];
            let surr1 = ratio * adv;
            let surr2 = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
            terms.policy -= surr1.min(surr2) / bf;
            if surr1 <= surr2 {
                g_logp[i] = -ratio * adv / bf;
            }
            if (ratio - 1.0).abs() > clip_eps {
                terms.clip_fraction += 1.0 / bf;
            }
            terms.max_ratio_dev = terms.max_ratio_dev.max((ratio - 1.0).abs());
            terms.approx_kl += ((ratio - 1.0) - log_ratio) / bf;
        }
        let values = fwd.values();
        let diff = &values - &mb.returns;
        terms.value = diff.mapv(|d| d * d).sum() / bf;

        let finite = [terms.policy, terms.entropy, terms.value].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Training(format!(
                "non-finite loss: policy {}, entropy {}, value {} over {b} samples",
                terms.policy, terms.entropy, terms.value
            )));
        }
        if !want_grads {
            return Ok((terms, None));
        }

        let ent_scale = beta / (bf * mf);
        let mut d_logits = Vec::with_capacity(m_count);
        for (m, d) in dists.iter().enumerate() {
            let k = self.body.num_actions();
            let mut g = Array2::zeros((b, k));
            for i in 0..b {
                let dist = &d[i];
                let h = dist.entropy();
                let a = mb.actions[[i, m]];
                for j in 0..k {
                    let p = dist.probs[j];
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    let ent = if p > 0.0 { p * (dist.log_probs[j] + h) } else { 0.0 };
                    g[[i, j]] = g_logp[i] * (onehot - p) + ent_scale * ent;
                }
            }
            d_logits.push(g);
        }
        let actor = self.body.backward(&fwd.heads, d_logits, None);
        let d_v = diff.mapv(|d| 2.0 * d / bf).insert_axis(Axis(1));
        let (critic, _) = self.critic.backward(&fwd.critic, d_v, false);
        Ok((terms, Some((actor, critic))))
    }

    /// Loss terms without gradients.
    pub fn loss(&self, mb: &Minibatch, beta: f64, clip_eps: f64) -> Result<LossTerms> {
        Ok(self.evaluate(mb, beta, clip_eps, false)?.0)
    }

    /// Loss terms and gradients of the actor objective (trunk and heads) and
    /// of the critic MSE (critic layers only).
    pub fn loss_and_grads(&self, mb: &Minibatch, beta: f64, clip_eps: f64) -> Result<LossGrads> {
        let (terms, grads) = self.evaluate(mb, beta, clip_eps, true)?;
        let (actor, critic) = grads.expect("requested");
        Ok(LossGrads { terms, actor, critic })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut params = flatten_params(self.body.layers());
        params.extend(flatten_params(&self.critic.layers));
        let critic = self.critic.layers[..self.critic.layers.len() - 1]
            .iter()
            .map(|l| l.outputs())
            .collect();
        Checkpoint {
            kind: ModelKind::ActorCritic,
            num_uavs: self.body.num_uavs,
            num_bs: self.body.num_bs,
            num_beams: self.body.num_beams,
            trunk: self.body.trunk_widths(),
            critic,
            normalizer: self.body.normalizer.clone(),
            params,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::ActorCritic {
            return Err(Error::Shape(format!("checkpoint holds a {:?}, not an actor-critic", ck.kind)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dims = (ck.num_uavs, ck.num_bs, ck.num_beams);
        let mut net = Self::new(dims, &ck.trunk, &ck.critic, ck.normalizer.clone(), &mut rng)?;
        let used = load_params(net.body.layers_mut(), &ck.params)?;
        let used = used + load_params(net.critic.layers.iter_mut(), &ck.params[used..])?;
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

/// Generalized advantage estimation over a trajectory segment.
/// `bootstrap` is the value of the state following the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminal: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    if values.len() != t_len || terminal.len() != t_len {
        return Err(Error::Shape("rewards, values and terminal flags differ in length".into()));
    }
    let mut adv = vec![0.0; t_len];
    let mut gae = 0.0;
    for t in (0..t_len).rev() {
        let next_value = if t + 1 < t_len { values[t + 1] } else { bootstrap };
        let live = if terminal[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Rescales to zero mean and unit population standard deviation. A constant
/// input becomes all zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
}

/// One collected batch; every entry is a terminal single-step episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub scenario_ids: Vec<usize>,
    pub features: Array2<f64>,
    pub actions: Array2<usize>,
    /// `B x M` per-head log-probabilities.
    pub log_probs: Array2<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn minibatch(&self, rows: &[usize]) -> Minibatch {
        Minibatch {
            features: self.features.select(Axis(0), rows),
            actions: self.actions.select(Axis(0), rows),
            old_log_prob: rows.iter().map(|&i| self.log_probs.row(i).sum()).collect(),
            advantages: rows.iter().map(|&i| self.advantages[i]).collect(),
            returns: rows.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// `max |rho - 1|` on the first minibatch, before any parameter step.
    pub initial_ratio_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_reward: f64,
    pub entropy_beta: f64,
}

/// Training scenarios with their beam tables and precomputed raw states.
pub struct TrainingSet<'a> {
    pub scenarios: &'a [Scenario],
    pub tables: &'a [BeamGainTable],
}

impl TrainingSet<'_> {
    pub fn check(&self, env: &AssociationEnv) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Shape("training dataset is empty".into()));
        }
        if self.scenarios.len() != self.tables.len() {
            return Err(Error::Shape(format!(
                "{} scenarios but {} beam tables",
                self.scenarios.len(),
                self.tables.len()
            )));
        }
        for (s, t) in self.scenarios.iter().zip(self.tables) {
            env.check(s, t)?;
        }
        Ok(())
    }

    pub fn fit_normalizer(&self) -> Result<StateNormalizer> {
        StateNormalizer::fit(self.scenarios.iter().map(|s| &s.channel))
    }

    /// Normalized features of every scenario, one row each.
    pub fn feature_matrix(&self, normalizer: &StateNormalizer) -> Array2<f64> {
        let dim = normalizer.dim();
        let mut out = Array2::zeros((self.scenarios.len(), dim));
        for (mut row, s) in out.outer_iter_mut().zip(self.scenarios) {
            row.assign(&Array1::from(normalizer.normalize(&assemble_state(&s.channel))));
        }
        out
    }
}

pub struct PpoTrainer {
    pub net: ActorCritic,
    pub cfg: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    pub rng: ChaCha8Rng,
    pub steps: u64,
}

impl PpoTrainer {
    pub fn new(net: ActorCritic, cfg: PpoConfig, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let actor_opt = Adam::new(net.body.layers(), cfg.adam(cfg.actor_lr));
        let critic_opt = Adam::new(&net.critic.layers, cfg.adam(cfg.critic_lr));
        Ok(Self {
            net,
            cfg,
            actor_opt,
            critic_opt,
            rng,
            steps: 0,
        })
    }

    /// Samples `size` scenarios with replacement and acts on each.
    pub fn collect(&mut self, env: &AssociationEnv, data: &TrainingSet, features: &Array2<f64>, size: usize) -> Result<RolloutBatch> {
        let ids: Vec<usize> = (0..size).map(|_| self.rng.random_range(0..data.scenarios.len())).collect();
        let x = features.select(Axis(0), &ids);
        let fwd = self.net.forward(x.clone())?;
        let m_count = self.net.body.num_uavs;
        let mut actions = Array2::zeros((size, m_count));
        let mut log_probs = Array2::zeros((size, m_count));
        let mut rewards = Vec::with_capacity(size);
        for (i, &id) in ids.iter().enumerate() {
            for (m, logits) in fwd.logits().iter().enumerate() {
                let row = logits.row(i);
                let row = row.as_slice().expect("contiguous");
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Inference(m));
                }
                let dist = Categorical::from_logits(row);
                let a = dist.sample(&mut self.rng);
                actions[[i, m]] = a;
                log_probs[[i, m]] = dist.log_prob(a);
            }
            let action = JointAction::from_indices(actions.row(i).iter().copied());
            rewards.push(env.step(&data.scenarios[id], &data.tables[id], &action)?.reward);
        }
        let values = fwd.values().to_vec();
        let (mut advantages, returns) = compute_gae(
            &rewards,
            &values,
            &vec![true; size],
            0.0,
            self.cfg.gamma,
            self.cfg.gae_lambda,
        )?;
        normalize_advantages(&mut advantages);
        Ok(RolloutBatch {
            scenario_ids: ids,
            features: x,
            actions,
            log_probs,
            rewards,
            values,
            advantages,
            returns,
        })
    }

    /// `epochs` passes over shuffled minibatches of the batch.
    pub fn update(&mut self, batch: &RolloutBatch, beta: f64) -> Result<UpdateStats> {
        let n = batch.len();
        let chunk = n.div_ceil(self.cfg.minibatches.min(n));
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats {
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            approx_kl: 0.0,
            clip_fraction: 0.0,
            initial_ratio_dev: 0.0,
        };
        let mut count = 0.0;
        for epoch in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for (k, rows) in order.chunks(chunk).enumerate() {
                let mb = batch.minibatch(rows);
                let LossGrads { terms, actor, critic } = self.net.loss_and_grads(&mb, beta, self.cfg.clip_eps)?;
                if epoch == 0 && k == 0 {
                    stats.initial_ratio_dev = terms.max_ratio_dev;
                }
                let mut actor_layers: Vec<_> = self.net.body.layers_mut().collect();
                self.actor_opt.apply(&mut actor_layers, &actor)?;
                let mut critic_layers: Vec<_> = self.net.critic.layers.iter_mut().collect();
                self.critic_opt.apply(&mut critic_layers, &critic)?;
                stats.policy_loss += terms.policy;
                stats.value_loss += terms.value;
                stats.entropy += terms.entropy;
                stats.approx_kl += terms.approx_kl;
                stats.clip_fraction += terms.clip_fraction;
                count += 1.0;
            }
        }
        stats.policy_loss /= count;
        stats.value_loss /= count;
        stats.entropy /= count;
        stats.approx_kl /= count;
        stats.clip_fraction /= count;
        Ok(stats)
    }

    /// Runs collection and updates until `total_steps` decisions have been
    /// taken. `on_update` sees every curve point as it is produced.
    pub fn train(
        &mut self,
        env: &AssociationEnv,
        data: &TrainingSet,
        mut on_update: impl FnMut(&CurvePoint, &UpdateStats),
    ) -> Result<Vec<CurvePoint>> {
        data.check(env)?;
        let features = data.feature_matrix(&self.net.body.normalizer);
        let mut curve = Vec::new();
        while self.steps < self.cfg.total_steps {
            let size = (self.cfg.total_steps - self.steps).min(self.cfg.batch_size as u64) as usize;
            let beta = self.cfg.beta(self.steps);
            let batch = self.collect(env, data, &features, size)?;
            let stats = self.update(&batch, beta)?;
            self.steps += size as u64;
            let point = CurvePoint {
                step: self.steps,
                mean_reward: batch.rewards.iter().sum::<f64>() / size as f64,
                entropy_beta: beta,
            };
            on_update(&point, &stats);
            curve.push(point);
        }
        Ok(curve)
    }
}

/// Generator used for initialization and training.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fits the normalizer on the training set, initializes from `cfg.seed`
/// and trains.
pub fn train(env: &AssociationEnv, data: &TrainingSet, cfg: &PpoConfig) -> Result<(ActorCritic, Vec<CurvePoint>)> {
    cfg.validate()?;
    data.check(env)?;
    let mut rng = seeded_rng(cfg.seed);
    let dims = (env.num_uavs, env.num_bs, env.num_beams);
    let net = ActorCritic::new(dims, &cfg.trunk, &cfg.critic_hidden, data.fit_normalizer()?, &mut rng)?;
    let mut trainer = PpoTrainer::new(net, cfg.clone(), rng)?;
    let curve = trainer.train(env, data, |_, _| {})?;
    Ok((trainer.net, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dims: (usize, usize, usize), seed: u64) -> ActorCritic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 3 * dims.0 * dims.1 * dims.2;
        ActorCritic::new(dims, &[6, 5], &[4], StateNormalizer::identity(dim), &mut rng).unwrap()
    }

    #[test]
    fn gae_single_step() {
        let (a, r) = compute_gae(&[5.0], &[3.0], &[true], 100.0, 0.99, 0.97).unwrap();
        assert_eq!((a[0], r[0]), (2.0, 5.0));
    }

    #[test]
    fn gae_two_step_hand_unroll() {
        let (g, l) = (0.99, 0.97);
        let (r, v, boot) = ([1.0, 2.0], [0.5, -0.25], 0.75);
        let d0 = r[0] + g * v[1] - v[0];
        let d1 = r[1] + g * boot - v[1];
        let (a, ret) = compute_gae(&r, &v, &[false, false], boot, g, l).unwrap();
        assert!((a[0] - (d0 + g * l * d1)).abs() < 1e-12);
        assert!((a[1] - d1).abs() < 1e-12);
        assert!((ret[0] - (a[0] + v[0])).abs() < 1e-12);
        let (a0, _) = compute_gae(&r, &v, &[false, false], boot, g, 0.0).unwrap();
        assert_eq!(a0, vec![d0, d1]);
    }

    #[test]
    fn beta_schedule() {
        let cfg = PpoConfig::default();
        assert_eq!(cfg.beta(0), 0.2);
        assert!((cfg.beta(cfg.total_steps) - 0.005).abs() < 1e-15);
        assert!((cfg.beta(cfg.total_steps / 2) - 0.1025).abs() < 1e-15);
    }

    #[test]
    fn normalized_advantages() {
        let mut a = vec![1.0, 2.0, 4.0, 8.0, -3.0];
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / 5.0;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12 && (var.sqrt() - 1.0).abs() < 1e-12);
        let mut c = vec![3.0; 4];
        normalize_advantages(&mut c);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn act_rejects_wrong_state_length() {
        let net = tiny((2, 1, 2), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(net.act(&[0.0; 5], ActMode::Sample, &mut rng), Err(Error::Shape(_))));
    }

    #[test]
    fn greedy_follows_dominant_logit() {
        let mut net = tiny((2, 1, 3), 1);
        for head in &mut net.body.heads {
            head.w.fill(0.0);
            head.b = ndarray::array![0.0, 0.0, 50.0];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = net.act(&[0.3; 18], ActMode::Greedy, &mut rng).unwrap();
        assert_eq!(out.action, JointAction::from_indices([2, 2]));
    }

    #[test]
    fn nan_logits_are_inference_errors() {
        let mut net = tiny((1, 1, 2), 2);
        net.body.heads[0].b[1] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(net.act(&[0.0; 6], ActMode::Sample, &mut rng), Err(Error::Inference(0))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = tiny((2, 2, 2), 3);
        let back = ActorCritic::from_checkpoint(&net.to_checkpoint()).unwrap();
        assert_eq!(back, net);
        let mut ck = net.to_checkpoint();
        ck.params.pop();
        assert!(ActorCritic::from_checkpoint(&ck).is_err());
    }

    #[test]
    fn clip_saturation_zeroes_logit_gradient() {
        let net = tiny((1, 1, 3), 4);
        let x = Array2::from_elem((1, 9), 0.2);
        let fwd = net.forward(x.clone()).unwrap();
        let lp = Categorical::from_logits(fwd.logits()[0].row(0).as_slice().unwrap()).log_prob(1);
        let mb = Minibatch {
            features: x,
            actions: Array2::from_elem((1, 1), 1),
            old_log_prob: ndarray::array![lp - 1.3f64.ln()],
            advantages: ndarray::array![1.0],
            returns: ndarray::array![0.0],
        };
        let g = net.loss_and_grads(&mb, 0.0, 0.15).unwrap();
        assert!(g.actor.iter().all(|g: &DenseGrad| g.sum_sq() == 0.0));
    }
}
