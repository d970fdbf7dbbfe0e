//! Reference association rules: signal-power Hungarian matching, two greedy
//! heuristics and uniform random choice.
//!
//! Greedy rules rank beams by the effective gain `|h|^2 * 10^(G*/10)`. A UAV
//! that finds every beam taken gets `None` (denied).

use ndarray::Array2;
use rand::Rng;

use crate::beam::BeamGainTable;
use crate::channel::{ChannelTensor, Scenario};
use crate::env::{encode_action, AssociationEnv, JointAction};
use crate::error::{Error, Result};
use crate::geometry::{distance, Position};

/// `M x LN` negated desired signal powers (watts).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(pub Array2<f64>);

impl CostMatrix {
    pub fn signal_power(env: &AssociationEnv, scenario: &Scenario, table: &BeamGainTable) -> Result<Self> {
        env.check(scenario, table)?;
        let k = env.num_actions();
        Ok(Self(Array2::from_shape_fn((env.num_uavs, k), |(m, a)| {
            -env.link_power(scenario, table, m, a / env.num_beams, a % env.num_beams)
        })))
    }
}

/// Minimum-cost assignment of every row to a distinct column
/// (Kuhn-Munkres with row/column potentials, `O(rows^2 * cols)`).
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let (rows, cols) = cost.dim();
    if rows > cols {
        return Err(Error::Infeasible { rows, cols });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Shape("cost matrix has non-finite entries".into()));
    }
    // 1-based with a virtual column 0, after the classic formulation.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

pub fn hungarian_assign(cost: &CostMatrix) -> Result<JointAction> {
    Ok(JointAction::from_indices(hungarian(&cost.0)?))
}

/// `|h|^2 * 10^(G*/10)` for link `(m, l, n)`.
pub fn effective_gain(channel: &ChannelTensor, table: &BeamGainTable, m: usize, l: usize, n: usize) -> f64 {
    channel.gain[[m, l, n]] * 10f64.powf(table.g_star[[m, l, n]] / 10.0)
}

/// Walks each UAV's BS ranking in order and takes the best free beam of the
/// first BS that still has one.
fn greedy(channel: &ChannelTensor, table: &BeamGainTable, ranking: impl Fn(usize) -> Vec<usize>) -> Result<JointAction> {
    let (m_count, l_count, n_count) = channel.dims();
    if table.dims() != channel.dims() {
        return Err(Error::Shape(format!(
            "channel is {:?}, beam table is {:?}",
            channel.dims(),
            table.dims()
        )));
    }
    let mut taken = vec![false; l_count * n_count];
    let mut out = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut choice = None;
        for l in ranking(m) {
            let mut best: Option<(usize, f64)> = None;
            for n in 0..n_count {
                if taken[encode_action(l, n, n_count)] {
                    continue;
                }
                let g = effective_gain(channel, table, m, l, n);
                if best.is_none_or(|(_, bg)| g > bg) {
                    best = Some((n, g));
                }
            }
            if let Some((n, _)) = best {
                choice = Some(encode_action(l, n, n_count));
                break;
            }
        }
        if let Some(a) = choice {
            taken[a] = true;
        }
        out.push(choice);
    }
    Ok(JointAction(out))
}

/// Stable descending sort of BS indices by `key`.
fn rank_desc(count: usize, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    idx
}

/// BS with the highest mean channel gain over its beams, then its strongest
/// free beam.
pub fn max_gain_assign(channel: &ChannelTensor, table: &BeamGainTable) -> Result<JointAction> {
    let (_, l_count, n_count) = channel.dims();
    greedy(channel, table, |m| {
        rank_desc(l_count, |l| {
            (0..n_count).map(|n| channel.gain[[m, l, n]]).sum::<f64>() / n_count as f64
        })
    })
}

/// Nearest BS by 3D distance (lower index on ties), then its strongest free
/// beam.
pub fn closest_bs_assign(
    uav_positions: &[Position],
    bs_positions: &[Position],
    channel: &ChannelTensor,
    table: &BeamGainTable,
) -> Result<JointAction> {
    let (m_count, l_count, _) = channel.dims();
    if uav_positions.len() != m_count || bs_positions.len() != l_count {
        return Err(Error::Shape(format!(
            "{} UAV and {} BS positions for a {:?} channel",
            uav_positions.len(),
            bs_positions.len(),
            channel.dims()
        )));
    }
    greedy(channel, table, |m| {
        rank_desc(l_count, |l| -distance(&uav_positions[m], &bs_positions[l]))
    })
}

/// Independent uniform flat indices; collisions are allowed.
pub fn random_assign<R: Rng + ?Sized>(num_uavs: usize, num_bs: usize, num_beams: usize, rng: &mut R) -> JointAction {
    let k = num_bs * num_beams;
    JointAction::from_indices((0..num_uavs).map(|_| rng.random_range(0..k)))
}
