//! Single-step association environment.
//!
//! A joint action picks one flat (BS, beam) index per UAV. Each BS admits
//! at most `C` contenders ranked by desired received power; among admitted
//! UAVs that collide on the same beam the strongest keeps it. Only admitted
//! links transmit, so the SINR of every served UAV sees interference from
//! all other served links. The reward is the mean per-UAV rate in Mb/s minus
//! `eta` times the capacity excess.

use serde::{Deserialize, Serialize};

use crate::beam::BeamGainTable;
use crate::channel::{ChannelTensor, Scenario};
use crate::error::{Error, Result};

/// Reward and rate outputs are divided by this before reporting (Mb/s).
pub const RATE_UNIT: f64 = 1e6;

/// Gains below this (in dB) are clamped when building learner features.
pub const GAIN_FLOOR_DB: f64 = -200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkBudget {
    /// Total BS transmit power, split evenly across its beams.
    pub total_power_w: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_hz: f64,
    /// Reward penalty per excess contender.
    pub penalty_eta: f64,
    /// Per-BS admission capacity; defaults to the number of beams.
    pub capacity: Option<usize>,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            total_power_w: 40.0,
            bandwidth_hz: 20e6,
            noise_dbm_hz: -174.0,
            penalty_eta: 1e3,
            capacity: None,
        }
    }
}

impl LinkBudget {
    pub fn per_beam_power(&self, num_beams: usize) -> f64 {
        self.total_power_w / num_beams as f64
    }

    /// Thermal noise power `N0 * B` in watts.
    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.noise_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz
    }

    pub fn capacity(&self, num_beams: usize) -> usize {
        self.capacity.unwrap_or(num_beams)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_power_w > 0.0 && self.bandwidth_hz > 0.0 && self.penalty_eta >= 0.0)
            || !self.noise_dbm_hz.is_finite()
        {
            return Err(Error::Config(format!("invalid link budget {self:?}")));
        }
        Ok(())
    }
}

/// One flat BS-beam index per UAV; `None` marks a UAV that requests nothing
/// (used by baselines when every beam is taken).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction(pub Vec<Option<usize>>);

impl JointAction {
    pub fn from_indices(actions: impl IntoIterator<Item = usize>) -> Self {
        Self(actions.into_iter().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Flat indices with `None` mapped to `usize::MAX`.
    pub fn raw(&self) -> Vec<usize> {
        self.0.iter().map(|a| a.unwrap_or(usize::MAX)).collect()
    }
}

/// Splits a flat action into `(bs, beam)`.
pub fn decode_action(action: usize, num_bs: usize, num_beams: usize) -> Result<(usize, usize)> {
    let num_actions = num_bs * num_beams;
    if action >= num_actions {
        return Err(Error::ActionOutOfRange {
            action,
            num_actions,
        });
    }
    Ok((action / num_beams, action % num_beams))
}

pub fn encode_action(bs: usize, beam: usize, num_beams: usize) -> usize {
    bs * num_beams + beam
}

/// Flattens `[gain, azimuth, zenith]`, each row-major over `(m, l, n)`.
pub fn assemble_state(channel: &ChannelTensor) -> Vec<f64> {
    channel
        .gain
        .iter()
        .chain(channel.azimuth.iter())
        .chain(channel.zenith.iter())
        .copied()
        .collect()
}

/// Inverse of [`assemble_state`].
pub fn disassemble_state(state: &[f64], dims: (usize, usize, usize)) -> Result<ChannelTensor> {
    let links = dims.0 * dims.1 * dims.2;
    if state.len() != 3 * links {
        return Err(Error::Shape(format!(
            "state has {} entries, expected {}",
            state.len(),
            3 * links
        )));
    }
    let block = |i: usize| {
        ndarray::Array3::from_shape_vec(dims, state[i * links..(i + 1) * links].to_vec())
            .expect("block length checked")
    };
    Ok(ChannelTensor {
        gain: block(0),
        azimuth: block(1),
        zenith: block(2),
    })
}

/// Learner-side view of the state: the gain block in dB (floored), then
/// every feature z-scored with statistics frozen from the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StateNormalizer {
    fn features(raw: &[f64]) -> Vec<f64> {
        let links = raw.len() / 3;
        raw.iter()
            .enumerate()
            .map(|(i, &x)| {
                if i < links {
                    if x > 0.0 {
                        (10.0 * x.log10()).max(GAIN_FLOOR_DB)
                    } else {
                        GAIN_FLOOR_DB
                    }
                } else {
                    x
                }
            })
            .collect()
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(channels: impl IntoIterator<Item = &'a ChannelTensor>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for ch in channels {
            let f = Self::features(&assemble_state(ch));
            if sum.is_empty() {
                sum = vec![0.0; f.len()];
                sum_sq = vec![0.0; f.len()];
            } else if f.len() != sum.len() {
                return Err(Error::Shape("channels differ in size".into()));
            }
            for (i, x) in f.iter().enumerate() {
                sum[i] += x;
                sum_sq[i] += x * x;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Shape("cannot fit normalizer on an empty dataset".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(s, mu)| {
                let var = (s / n - mu * mu).max(0.0);
                if var.sqrt() > 1e-6 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        Self::features(raw)
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (mu, sd))| (x - mu) / sd)
            .collect()
    }
}

/// `P_tx * |h|^2 * 10^(G*/10)`.
pub fn desired_power(per_beam_power: f64, channel_gain: f64, beam_gain_db: f64) -> f64 {
    per_beam_power * channel_gain * 10f64.powf(beam_gain_db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Admission {
    /// `admitted[m]` after capacity and beam-conflict resolution.
    pub admitted: Vec<bool>,
    /// Contender set of every BS, in UAV index order.
    pub contenders: Vec<Vec<usize>>,
    /// Total capacity excess `sum_l max(0, |U_l| - C)`.
    pub overcap: usize,
    /// UAVs that passed capacity but lost a beam collision.
    pub conflict_denied: Vec<usize>,
}

impl Admission {
    pub fn admitted_set(&self) -> Vec<usize> {
        (0..self.admitted.len()).filter(|&m| self.admitted[m]).collect()
    }

    pub fn denied_set(&self) -> Vec<usize> {
        (0..self.admitted.len()).filter(|&m| !self.admitted[m]).collect()
    }
}

/// Orders UAVs by descending power, lower index first on ties.
fn by_power_desc(powers: &[f64]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |a, b| powers[*b].total_cmp(&powers[*a]).then(a.cmp(b))
}

/// Power-ranked admission control over decoded `(bs, beam)` requests.
pub fn admit(links: &[Option<(usize, usize)>], powers: &[f64], num_bs: usize, capacity: usize) -> Admission {
    let m_count = links.len();
    let mut contenders = vec![Vec::new(); num_bs];
    for (m, link) in links.iter().enumerate() {
        if let Some((l, _)) = link {
            contenders[*l].push(m);
        }
    }
    let mut admitted = vec![false; m_count];
    let mut overcap = 0;
    for group in &contenders {
        overcap += group.len().saturating_sub(capacity);
        let mut ranked = group.clone();
        ranked.sort_by(by_power_desc(powers));
        for &m in ranked.iter().take(capacity) {
            admitted[m] = true;
        }
    }
    // Beam exclusivity among admitted UAVs: strongest keeps the beam.
    let mut ranked: Vec<usize> = (0..m_count).filter(|&m| admitted[m]).collect();
    ranked.sort_by(by_power_desc(powers));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut conflict_denied = Vec::new();
    for m in ranked {
        let link = links[m].expect("admitted UAVs have a link");
        if taken.contains(&link) {
            admitted[m] = false;
            conflict_denied.push(m);
        } else {
            taken.push(link);
        }
    }
    conflict_denied.sort_unstable();
    Admission {
        admitted,
        contenders,
        overcap,
        conflict_denied,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub admission: Admission,
    /// Desired received power per UAV for its requested link (W).
    pub requested_power: Vec<f64>,
    pub interference: Vec<f64>,
    pub sinr: Vec<f64>,
    /// Shannon rate per UAV in bits/s; zero for denied UAVs.
    pub rates: Vec<f64>,
    /// Mean rate in Mb/s minus the capacity penalty.
    pub reward: f64,
}

impl StepOutcome {
    pub fn rates_mbps(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r / RATE_UNIT).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationEnv {
    pub budget: LinkBudget,
    pub num_uavs: usize,
    pub num_bs: usize,
    pub num_beams: usize,
}

impl AssociationEnv {
    pub fn new(budget: LinkBudget, num_uavs: usize, num_bs: usize, num_beams: usize) -> Result<Self> {
        budget.validate()?;
        if num_uavs == 0 || num_bs == 0 || num_beams == 0 {
            return Err(Error::Config("environment dimensions must be positive".into()));
        }
        Ok(Self {
            budget,
            num_uavs,
            num_bs,
            num_beams,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.num_bs * self.num_beams
    }

    pub fn state_dim(&self) -> usize {
        3 * self.num_uavs * self.num_actions()
    }

    pub fn capacity(&self) -> usize {
        self.budget.capacity(self.num_beams)
    }

    pub fn per_beam_power(&self) -> f64 {
        self.budget.per_beam_power(self.num_beams)
    }

    pub fn check(&self, scenario: &Scenario, table: &BeamGainTable) -> Result<()> {
        let dims = (self.num_uavs, self.num_bs, self.num_beams);
        if scenario.channel.dims() != dims || table.dims() != dims {
            return Err(Error::Shape(format!(
                "environment expects {dims:?}, channel is {:?}, beam table is {:?}",
                scenario.channel.dims(),
                table.dims()
            )));
        }
        Ok(())
    }

    /// Received power of link `(m, l, n)` at UAV `m`.
    pub fn link_power(&self, scenario: &Scenario, table: &BeamGainTable, m: usize, l: usize, n: usize) -> f64 {
        desired_power(
            self.per_beam_power(),
            scenario.channel.gain[[m, l, n]],
            table.g_star[[m, l, n]],
        )
    }

    pub fn step(&self, scenario: &Scenario, table: &BeamGainTable, action: &JointAction) -> Result<StepOutcome> {
        self.check(scenario, table)?;
        if action.len() != self.num_uavs {
            return Err(Error::Shape(format!(
                "joint action has {} entries for {} UAVs",
                action.len(),
                self.num_uavs
            )));
        }
        let links = action
            .0
            .iter()
            .map(|a| a.map(|a| decode_action(a, self.num_bs, self.num_beams)).transpose())
            .collect::<Result<Vec<_>>>()?;
        let requested_power: Vec<f64> = links
            .iter()
            .enumerate()
            .map(|(m, link)| link.map_or(0.0, |(l, n)| self.link_power(scenario, table, m, l, n)))
            .collect();
        let admission = admit(&links, &requested_power, self.num_bs, self.capacity());

        let noise = self.budget.noise_power();
        let active: Vec<(usize, usize, usize)> = admission
            .admitted_set()
            .into_iter()
            .map(|m| {
                let (l, n) = links[m].expect("admitted");
                (m, l, n)
            })
            .collect();
        let mut interference = vec![0.0; self.num_uavs];
        let mut sinr = vec![0.0; self.num_uavs];
        let mut rates = vec![0.0; self.num_uavs];
        for m in 0..self.num_uavs {
            interference[m] = active
                .iter()
                .filter(|(other, _, _)| *other != m)
                .map(|&(_, l, n)| self.link_power(scenario, table, m, l, n))
                .sum();
            if admission.admitted[m] {
                sinr[m] = requested_power[m] / (interference[m] + noise);
                rates[m] = self.budget.bandwidth_hz * (1.0 + sinr[m]).log2();
            }
        }
        let reward = rates.iter().sum::<f64>() / RATE_UNIT / self.num_uavs as f64
            - self.budget.penalty_eta * admission.overcap as f64;
        Ok(StepOutcome {
            admission,
            requested_power,
            interference,
            sinr,
            rates,
            reward,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn one_link(gain: f64, g_db: f64) -> (Scenario, BeamGainTable) {
        let mut channel = ChannelTensor::zeros(1, 1, 1);
        channel.gain[[0, 0, 0]] = gain;
        let scenario = Scenario {
            uav_positions: vec![[0.0, 0.0, 60.0]],
            channel,
        };
        let table = BeamGainTable {
            g_star: Array3::from_elem((1, 1, 1), g_db),
            phi_star: Array3::zeros((1, 1, 1)),
        };
        (scenario, table)
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_action(0, 4, 16).unwrap(), (0, 0));
        assert_eq!(decode_action(17, 4, 16).unwrap(), (1, 1));
        for a in 0..64 {
            let (l, n) = decode_action(a, 4, 16).unwrap();
            assert_eq!(encode_action(l, n, 16), a);
        }
        assert!(matches!(decode_action(64, 4, 16), Err(Error::ActionOutOfRange { .. })));
    }

    #[test]
    fn state_ordering() {
        let mut ch = ChannelTensor::zeros(1, 1, 1);
        ch.gain[[0, 0, 0]] = 2e-9;
        ch.azimuth[[0, 0, 0]] = 40.0;
        ch.zenith[[0, 0, 0]] = 120.0;
        assert_eq!(assemble_state(&ch), vec![2e-9, 40.0, 120.0]);

        let mut ch = ChannelTensor::zeros(2, 1, 2);
        ch.gain.fill(1.0);
        ch.azimuth.fill(2.0);
        ch.zenith.fill(3.0);
        assert_eq!(assemble_state(&ch), vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn desired_power_examples() {
        let p = desired_power(2.5, 1e-10, 4.04);
        assert!((p - 2.5 * 1e-10 * 10f64.powf(0.404)).abs() < 1e-24);
        assert!((p - 6.34e-10).abs() < 0.01e-10);
        assert_eq!(desired_power(2.5, 1e-10, 0.0), 2.5e-10);
        assert_eq!(desired_power(2.5, 0.0, 4.04), 0.0);
    }

    #[test]
    fn admission_top_c() {
        let links = vec![Some((0, 0)), Some((0, 1)), Some((0, 2))];
        let a = admit(&links, &[3e-10, 1e-10, 2e-10], 1, 2);
        assert_eq!(a.admitted_set(), vec![0, 2]);
        assert_eq!(a.overcap, 1);
    }

    #[test]
    fn admission_no_contention() {
        let links = vec![Some((0, 0)), Some((1, 0)), Some((2, 3))];
        let a = admit(&links, &[1.0, 2.0, 3.0], 3, 1);
        assert_eq!(a.admitted_set(), vec![0, 1, 2]);
        assert_eq!(a.overcap, 0);
    }

    #[test]
    fn admission_ties_go_to_lower_index() {
        let links = vec![Some((0, 0)), Some((0, 1)), Some((0, 2))];
        let a = admit(&links, &[1.0, 1.0, 1.0], 1, 2);
        assert_eq!(a.admitted_set(), vec![0, 1]);
        let links = vec![Some((0, 1)), Some((0, 1))];
        let a = admit(&links, &[1.0, 1.0], 1, 2);
        assert_eq!(a.admitted_set(), vec![0]);
        assert_eq!(a.conflict_denied, vec![1]);
        assert_eq!(a.overcap, 0);
    }

    #[test]
    fn single_link_sinr_and_rate() {
        let budget = LinkBudget {
            total_power_w: 2.5,
            ..LinkBudget::default()
        };
        assert!((budget.noise_power() - 7.96e-14).abs() < 0.01e-14);
        let env = AssociationEnv::new(budget, 1, 1, 1).unwrap();
        let (s, t) = one_link(1e-10, 4.04);
        let out = env.step(&s, &t, &JointAction::from_indices([0])).unwrap();
        let signal = 2.5 * 1e-10 * 10f64.powf(0.404);
        let sinr = signal / env.budget.noise_power();
        assert!((out.sinr[0] - sinr).abs() < 1e-9 * sinr);
        assert!((out.sinr[0] - 7965.0).abs() < 10.0);
        assert!((out.rates[0] / 1e6 - 259.0).abs() < 0.5);
        assert_eq!(out.reward, out.rates[0] / 1e6);
    }

    #[test]
    fn nobody_admitted_reward_is_penalty_only() {
        let env = AssociationEnv::new(LinkBudget::default(), 1, 1, 1).unwrap();
        let (s, t) = one_link(1e-10, 0.0);
        let out = env.step(&s, &t, &JointAction(vec![None])).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.admission.admitted_set().is_empty());
    }
}
