//! Held-out evaluation, summary statistics, latency measurement and the
//! plain-text outputs consumed by plotting tools.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{closest_bs_assign, hungarian_assign, max_gain_assign, random_assign, CostMatrix};
use crate::beam::BeamGainTable;
use crate::channel::Scenario;
use crate::dqn::QNetwork;
use crate::env::{assemble_state, AssociationEnv, JointAction, RATE_UNIT};
use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::ppo::{ActMode, ActorCritic};

/// Number of evenly spaced rate points in a CDF table.
pub const CDF_POINTS: usize = 200;

/// Tolerance of the reward identity check, relative to `max(1, |reward|)`.
pub const REWARD_TOLERANCE: f64 = 1e-9;

pub const METHOD_NAMES: [&str; 6] = ["ppo", "dqn", "hungarian", "maxgain", "closest", "random"];

pub enum Method {
    /// Greedy (arg-max) actions of a trained actor.
    Ppo(Box<ActorCritic>),
    /// Greedy actions of a trained Q-network.
    Dqn(Box<QNetwork>),
    Hungarian,
    MaxGain,
    Closest,
    /// Uniform actions; scenario `i` draws from stream `i` of `seed`.
    Random { seed: u64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ppo(_) => "ppo",
            Self::Dqn(_) => "dqn",
            Self::Hungarian => "hungarian",
            Self::MaxGain => "maxgain",
            Self::Closest => "closest",
            Self::Random { .. } => "random",
        }
    }

    fn check_dims(&self, env: &AssociationEnv) -> Result<()> {
        let dims = match self {
            Self::Ppo(net) => net.dims(),
            Self::Dqn(net) => net.body.dims(),
            _ => return Ok(()),
        };
        if dims != (env.num_uavs, env.num_bs, env.num_beams) {
            return Err(Error::Shape(format!(
                "{} checkpoint is for (M, L, N) = {dims:?}, dataset is ({}, {}, {})",
                self.name(),
                env.num_uavs,
                env.num_bs,
                env.num_beams
            )));
        }
        Ok(())
    }

    pub fn decide(&self, ctx: &EvalContext, index: usize, scenario: &Scenario, table: &BeamGainTable) -> Result<JointAction> {
        let env = &ctx.env;
        match self {
            Self::Ppo(net) => {
                // Greedy mode never touches the generator.
                let mut unused = ChaCha8Rng::seed_from_u64(0);
                Ok(net.act(&assemble_state(&scenario.channel), ActMode::Greedy, &mut unused)?.action)
            }
            Self::Dqn(net) => net.greedy(&assemble_state(&scenario.channel)),
            Self::Hungarian => hungarian_assign(&CostMatrix::signal_power(env, scenario, table)?),
            Self::MaxGain => max_gain_assign(&scenario.channel, table),
            Self::Closest => closest_bs_assign(&scenario.uav_positions, &ctx.bs_positions, &scenario.channel, table),
            Self::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(index as u64);
                Ok(random_assign(env.num_uavs, env.num_bs, env.num_beams, &mut rng))
            }
        }
    }
}

pub struct EvalContext {
    pub env: AssociationEnv,
    pub bs_positions: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub scenario: usize,
    pub method: String,
    pub rates_mbps: Vec<f64>,
    pub reward: f64,
    /// Capacity excess `Psi`.
    pub overcap: usize,
    pub admitted: usize,
    pub latency_ms: f64,
}

impl EvalRecord {
    /// `reward == mean(rates) - eta * Psi` within [`REWARD_TOLERANCE`].
    pub fn reward_consistent(&self, penalty_eta: f64) -> bool {
        let m = self.rates_mbps.len() as f64;
        let expect = self.rates_mbps.iter().sum::<f64>() / m - penalty_eta * self.overcap as f64;
        (self.reward - expect).abs() <= REWARD_TOLERANCE * self.reward.abs().max(1.0)
    }
}

pub fn evaluate(method: &Method, ctx: &EvalContext, scenarios: &[Scenario], tables: &[BeamGainTable]) -> Result<Vec<EvalRecord>> {
    if scenarios.len() != tables.len() {
        return Err(Error::Shape(format!(
            "{} scenarios but {} beam tables",
            scenarios.len(),
            tables.len()
        )));
    }
    method.check_dims(&ctx.env)?;
    let mut out = Vec::with_capacity(scenarios.len());
    for (i, (s, t)) in scenarios.iter().zip(tables).enumerate() {
        ctx.env.check(s, t)?;
        let start = Instant::now();
        let action = method.decide(ctx, i, s, t)?;
        let latency_ms = (start.elapsed().as_secs_f64() * 1e3).max(f64::MIN_POSITIVE);
        let outcome = ctx.env.step(s, t, &action)?;
        out.push(EvalRecord {
            scenario: i,
            method: method.name().to_string(),
            rates_mbps: outcome.rates.iter().map(|r| r / RATE_UNIT).collect(),
            reward: outcome.reward,
            overcap: outcome.admission.overcap,
            admitted: outcome.admission.admitted_set().len(),
            latency_ms,
        });
    }
    Ok(out)
}

/// Linear interpolation between closest ranks of an ascending sample:
/// rank `q/100 * (n - 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical CDF at `points` evenly spaced values spanning the sample range.
pub fn cdf_table(sorted: &[f64], points: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let n = sorted.len() as f64;
    (0..points)
        .map(|k| {
            let x = if k + 1 == points {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64
            };
            let below = sorted.partition_point(|v| *v <= x);
            (x, below as f64 / n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: String,
    pub scenarios: usize,
    pub mean_reward: f64,
    /// Mean of the pooled per-UAV rates (Mb/s).
    pub mean_throughput: f64,
    pub p5_throughput: f64,
    pub p50_throughput: f64,
    pub p95_throughput: f64,
    pub p5_reward: f64,
    pub mean_overcap: f64,
    pub mean_admitted: f64,
    /// Wall-clock figures make output machine-dependent; callers clear this
    /// when they need reproducible files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_latency_ms: Option<f64>,
    #[serde(skip)]
    pub cdf: Vec<(f64, f64)>,
}

pub fn aggregate(records: &[EvalRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Shape("cannot summarize an empty record list".into()));
    }
    let n = records.len() as f64;
    let mut rates: Vec<f64> = records.iter().flat_map(|r| r.rates_mbps.iter().copied()).collect();
    rates.sort_by(f64::total_cmp);
    let mut rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    rewards.sort_by(f64::total_cmp);
    let mean = |f: &dyn Fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(Summary {
        method: records[0].method.clone(),
        scenarios: records.len(),
        mean_reward: mean(&|r| r.reward),
        mean_throughput: rates.iter().sum::<f64>() / rates.len() as f64,
        p5_throughput: percentile(&rates, 5.0),
        p50_throughput: percentile(&rates, 50.0),
        p95_throughput: percentile(&rates, 95.0),
        p5_reward: percentile(&rewards, 5.0),
        mean_overcap: mean(&|r| r.overcap as f64),
        mean_admitted: mean(&|r| r.admitted as f64),
        mean_latency_ms: Some(mean(&|r| r.latency_ms)),
        cdf: cdf_table(&rates, CDF_POINTS),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    /// Median of the means of ten equal groups of samples.
    pub median_of_means_ms: f64,
}

pub const LATENCY_WARMUP: usize = 10;

/// Times `reps` calls of `call` after [`LATENCY_WARMUP`] untimed ones.
pub fn benchmark_latency(reps: usize, mut call: impl FnMut() -> Result<()>) -> Result<LatencyStats> {
    if reps == 0 {
        return Err(Error::Config("latency benchmark needs at least one repetition".into()));
    }
    for _ in 0..LATENCY_WARMUP {
        call()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        call()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let n = reps as f64;
    let mean_ms = samples.iter().sum::<f64>() / n;
    let std_ms = (samples.iter().map(|s| (s - mean_ms).powi(2)).sum::<f64>() / n).sqrt();
    let groups = 10.min(reps);
    let size = reps / groups;
    let mut means: Vec<f64> = samples
        .chunks_exact(size)
        .take(groups)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        samples: reps,
        mean_ms,
        std_ms,
        median_of_means_ms: percentile(&means, 50.0),
    })
}

/// One row per record: `scenario,method,reward,overcap,admitted,rate_0..`
/// and `latency_ms` last when `timing` is set.
pub fn records_csv(records: &[EvalRecord], timing: bool) -> String {
    let m = records.first().map_or(0, |r| r.rates_mbps.len());
    let mut out = String::from("scenario,method,reward,overcap,admitted");
    for i in 0..m {
        let _ = write!(out, ",rate_{i}");
    }
    if timing {
        out.push_str(",latency_ms");
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{},{},{},{}", r.scenario, r.method, r.reward, r.overcap, r.admitted);
        for rate in &r.rates_mbps {
            let _ = write!(out, ",{rate}");
        }
        if timing {
            let _ = write!(out, ",{}", r.latency_ms);
        }
        out.push('\n');
    }
    out
}

pub fn cdf_csv(summary: &Summary) -> String {
    let mut out = String::from("rate_mbps,cdf\n");
    for (x, f) in &summary.cdf {
        let _ = writeln!(out, "{x},{f}");
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 5.0) - 5.95).abs() < 1e-12);
        assert_eq!(percentile(&[2.5; 7], 5.0), 2.5);
        assert_eq!(percentile(&[2.5; 7], 95.0), 2.5);
        assert_eq!(percentile(&[1.0, 3.0], 50.0), 2.0);
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let v = [0.0, 0.0, 1.0, 4.0, 9.0];
        let cdf = cdf_table(&v, CDF_POINTS);
        assert_eq!(cdf.len(), CDF_POINTS);
        assert!(cdf.windows(2).all(|w| w[1].1 >= w[0].1 && w[1].0 >= w[0].0));
        assert_eq!(cdf.last().unwrap(), &(9.0, 1.0));
        assert_eq!(cdf[0], (0.0, 0.4));
    }

    #[test]
    fn reward_identity() {
        let r = EvalRecord {
            scenario: 0,
            method: "x".into(),
            rates_mbps: vec![10.0, 20.0],
            reward: 15.0 - 2e3,
            overcap: 2,
            admitted: 2,
            latency_ms: 1.0,
        };
        assert!(r.reward_consistent(1e3));
        assert!(!r.reward_consistent(0.0));
    }

    #[test]
    fn empty_dataset_gives_no_records() {
        let ctx = EvalContext {
            env: AssociationEnv::new(Default::default(), 1, 1, 1).unwrap(),
            bs_positions: vec![[0.0; 3]],
        };
        assert!(evaluate(&Method::Hungarian, &ctx, &[], &[]).unwrap().is_empty());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn latency_stats_shape() {
        let mut calls = 0;
        let s = benchmark_latency(100, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 110);
        assert_eq!(s.samples, 100);
        assert!(s.mean_ms >= 0.0 && s.std_ms >= 0.0);
    }
}
