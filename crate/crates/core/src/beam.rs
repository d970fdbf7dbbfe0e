//! Stage-1 scan-angle optimization and the cached beam-gain table.
//!
//! Each (UAV, BS, beam) link is optimized independently: simulated annealing
//! with Cauchy moves and geometric cooling explores the beam's codebook
//! sector, and a golden-section search polishes the incumbent whenever the
//! temperature collapses or progress stalls.

use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::antenna::AntennaModel;
use crate::channel::{quantize, Scenario, SceneConfig};
use crate::error::{Error, Result};
use crate::format::{BlockReader, BlockWriter, Header};
use crate::geometry::{boresight_toward_origin, departure_in_bs_frame};

pub const TABLE_MAGIC: &[u8; 6] = b"AERBT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub t0: f64,
    /// Geometric cooling factor in (0, 1).
    pub alpha: f64,
    pub t_max: usize,
    /// Stop tolerance, dB.
    pub epsilon: f64,
    /// Iterations without improvement that trigger a local refinement.
    pub stagnation_window: usize,
    /// Golden-section bracket tolerance, degrees.
    pub refine_tol: f64,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            t0: 10.0,
            alpha: 0.95,
            t_max: 300,
            epsilon: 1e-4,
            stagnation_window: 25,
            refine_tol: 1e-3,
            seed: 7,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0)
            || !(self.alpha > 0.0 && self.alpha < 1.0)
            || self.t_max == 0
            || !(self.epsilon > 0.0)
            || !(self.refine_tol > 0.0)
        {
            return Err(Error::Config(format!("invalid annealing schedule {self:?}")));
        }
        Ok(())
    }
}

/// Half-open interval `[lo, hi)` of scan angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const FULL: Window = Window { lo: -180.0, hi: 180.0 };

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    /// Periodic wrap into the window.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = self.lo + (x - self.lo).rem_euclid(self.width());
        if w >= self.hi {
            self.lo
        } else {
            w
        }
    }

    /// Codebook sector of beam `n` out of `num_beams`.
    pub fn sector(n: usize, num_beams: usize) -> Window {
        let width = 360.0 / num_beams as f64;
        Window {
            lo: -180.0 + n as f64 * width,
            hi: -180.0 + (n + 1) as f64 * width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptimum {
    pub angle: f64,
    pub gain: f64,
    pub evaluations: usize,
}

struct Tracker<F> {
    objective: F,
    best_angle: f64,
    best_gain: f64,
    evaluations: usize,
}

impl<F: Fn(f64) -> f64> Tracker<F> {
    fn eval(&mut self, angle: f64) -> Result<f64> {
        let value = (self.objective)(angle);
        self.evaluations += 1;
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { angle, value });
        }
        if value > self.best_gain {
            self.best_gain = value;
            self.best_angle = angle;
        }
        Ok(value)
    }

    /// Golden-section maximization on a bracket around the incumbent.
    fn refine(&mut self, window: Window, half_width: f64, tol: f64) -> Result<()> {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut a = (self.best_angle - half_width).max(window.lo);
        let mut b = (self.best_angle + half_width).min(window.hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = self.eval(c)?;
        let mut fd = self.eval(d)?;
        while b - a > tol {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = self.eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = self.eval(d)?;
            }
        }
        let mid = 0.5 * (a + b);
        if window.contains(mid) {
            self.eval(mid)?;
        }
        Ok(())
    }
}

/// Maximizes `objective` over `window`.
///
/// The returned gain is the best value among all evaluated candidates, so
/// it is never below the value at the initial random sample.
pub fn optimize_scan_angle<F, R>(
    objective: F,
    window: Window,
    cfg: &AnnealConfig,
    rng: &mut R,
) -> Result<ScanOptimum>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if !(window.width() > 0.0) {
        return Err(Error::Config(format!("empty search window {window:?}")));
    }
    let mut tr = Tracker {
        objective,
        best_angle: f64::NAN,
        best_gain: f64::NEG_INFINITY,
        evaluations: 0,
    };
    let refine_half_width = window.width() / 20.0;
    let mut current = window.wrap(window.lo + window.width() * rng.random::<f64>());
    let mut current_gain = tr.eval(current)?;
    let mut temperature = cfg.t0;
    let mut since_improvement = 0usize;
    let mut cold_refined = false;

    for _ in 0..cfg.t_max {
        let scale = temperature * window.width() / 20.0;
        let step = scale * (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan();
        let candidate = window.wrap(current + step);
        let before = tr.best_gain;
        let gain = tr.eval(candidate)?;
        let delta = gain - current_gain;
        if delta >= 0.0 || rng.random::<f64>() <= (delta / temperature).exp() {
            current = candidate;
            current_gain = gain;
        }
        if tr.best_gain > before {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        temperature *= cfg.alpha;

        let cold = temperature < 0.01 * cfg.t0;
        let stalled = since_improvement >= cfg.stagnation_window;
        if (cold && !cold_refined) || stalled {
            let before = tr.best_gain;
            tr.refine(window, refine_half_width, cfg.refine_tol)?;
            cold_refined |= cold;
            since_improvement = 0;
            current = tr.best_angle;
            current_gain = tr.best_gain;
            if cold && tr.best_gain - before < cfg.epsilon {
                break;
            }
        }
        if temperature < cfg.epsilon {
            break;
        }
    }
    tr.refine(window, refine_half_width, cfg.refine_tol)?;
    Ok(ScanOptimum {
        angle: tr.best_angle,
        gain: tr.best_gain,
        evaluations: tr.evaluations,
    })
}

/// Optimized total gain `g_star` (dBi) and scan angle `phi_star` (degrees),
/// indexed `[m, l, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGainTable {
    pub g_star: Array3<f64>,
    pub phi_star: Array3<f64>,
}

impl BeamGainTable {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.g_star.dim()
    }

    /// Linear antenna gain of link `(m, l, n)`.
    pub fn linear_gain(&self, m: usize, l: usize, n: usize) -> f64 {
        crate::antenna::db_to_linear(self.g_star[[m, l, n]])
    }
}

/// Departure direction of link `(m, l, n)` in the BS frame, from the mean
/// arrival angles stored in the channel tensor.
pub fn link_direction(scenario: &Scenario, scene: &SceneConfig, m: usize, l: usize, n: usize) -> (f64, f64) {
    let ch = &scenario.channel;
    let boresight = boresight_toward_origin(&scene.bs_positions[l]);
    departure_in_bs_frame(ch.zenith[[m, l, n]], ch.azimuth[[m, l, n]], boresight)
}

/// Per-link RNG: stream `link` of the generator keyed by the annealing seed
/// and the scenario index.
pub fn link_rng(seed: u64, scenario: u64, link: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ scenario.rotate_left(32));
    rng.set_stream(link);
    rng
}

pub fn build_beam_gain_table(
    scenario: &Scenario,
    scenario_index: u64,
    scene: &SceneConfig,
    antenna: &AntennaModel,
    cfg: &AnnealConfig,
) -> Result<BeamGainTable> {
    let (m_count, l_count, n_count) = scenario.channel.dims();
    if l_count != scene.bs_positions.len() {
        return Err(Error::Shape(format!(
            "channel has {l_count} BSs but the scene lists {}",
            scene.bs_positions.len()
        )));
    }
    let mut g_star = Array3::zeros((m_count, l_count, n_count));
    let mut phi_star = Array3::zeros((m_count, l_count, n_count));
    for m in 0..m_count {
        for l in 0..l_count {
            for n in 0..n_count {
                let (zenith, azimuth) = link_direction(scenario, scene, m, l, n);
                let window = Window::sector(n, n_count);
                let link = ((m * l_count + l) * n_count + n) as u64;
                let mut rng = link_rng(cfg.seed, scenario_index, link);
                let opt = optimize_scan_angle(
                    |scan| antenna.total_gain_db(zenith, azimuth, scan),
                    window,
                    cfg,
                    &mut rng,
                )
                .map_err(|e| Error::Link {
                    m,
                    l,
                    n,
                    source: Box::new(e),
                })?;
                g_star[[m, l, n]] = quantize(opt.gain);
                phi_star[[m, l, n]] = quantize_in_window(opt.angle, window);
            }
        }
    }
    Ok(BeamGainTable { g_star, phi_star })
}

pub fn build_tables(
    scenarios: &[Scenario],
    scene: &SceneConfig,
    antenna: &AntennaModel,
    cfg: &AnnealConfig,
) -> Result<Vec<BeamGainTable>> {
    scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| build_beam_gain_table(s, i as u64, scene, antenna, cfg))
        .collect()
}

fn quantize_in_window(angle: f64, window: Window) -> f64 {
    let q = quantize(angle);
    if q >= window.hi {
        (window.hi as f32).next_down() as f64
    } else if q < window.lo {
        (window.lo as f32).next_up() as f64
    } else {
        q
    }
}

pub fn write_tables(path: &Path, tables: &[BeamGainTable]) -> Result<()> {
    let (m, l, n) = tables.first().map(BeamGainTable::dims).unwrap_or((1, 1, 1));
    if tables.iter().any(|t| t.dims() != (m, l, n)) {
        return Err(Error::Shape("beam tables must share M, L, N".into()));
    }
    let header = Header {
        count: tables.len(),
        m,
        l,
        n,
    };
    let mut w = BlockWriter::create(path, TABLE_MAGIC, header)?;
    for t in tables {
        w.write_f32s(t.g_star.iter().copied())?;
        w.write_f32s(t.phi_star.iter().copied())?;
    }
    w.finish()
}

pub fn read_tables(path: &Path) -> Result<Vec<BeamGainTable>> {
    let (mut r, h) = BlockReader::open(path, TABLE_MAGIC)?;
    let links = h.m * h.l * h.n;
    let shape = (h.m, h.l, h.n);
    let mut out = Vec::with_capacity(h.count);
    for _ in 0..h.count {
        let g_star = Array3::from_shape_vec(shape, r.read_f32s(links)?).expect("length matches");
        let phi_star = Array3::from_shape_vec(shape, r.read_f32s(links)?).expect("length matches");
        if g_star.iter().any(|g| !g.is_finite()) {
            return Err(Error::Shape("non-finite beam gain in table".into()));
        }
        out.push(BeamGainTable { g_star, phi_star });
    }
    r.expect_eof()?;
    Ok(out)
}
