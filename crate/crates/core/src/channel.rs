//! Synthetic channel twin.
//!
//! Stands in for a ray-traced site model: UAV positions are drawn uniformly
//! over the corridor box at a fixed altitude, and each (UAV, BS, beam) link
//! gets a free-space line-of-sight component plus a handful of attenuated,
//! angle-jittered scattered components. The output schema (gain plus mean
//! zenith/azimuth arrival angles per link) is what the rest of the pipeline
//! consumes.

use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Position};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Base-station coordinates of the four-cell reference site, in meters.
pub const REFERENCE_BS_POSITIONS: [Position; 4] = [
    [-127.0, 92.0, 5.0],
    [-30.0, 30.0, 5.2],
    [115.0, 36.0, 5.5],
    [-60.0, -83.0, 5.0],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// UAV flight altitude in meters.
    pub altitude: f64,
    pub num_uavs: usize,
    pub num_bs: usize,
    pub num_beams: usize,
    pub bs_positions: Vec<Position>,
    pub carrier_freq_hz: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub paths: PathModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            x_range: [-200.0, 130.0],
            y_range: [-150.0, 150.0],
            altitude: 60.0,
            num_uavs: 4,
            num_bs: 2,
            num_beams: 4,
            bs_positions: REFERENCE_BS_POSITIONS[..2].to_vec(),
            carrier_freq_hz: 3.5e9,
            seed: 1,
            paths: PathModel::default(),
        }
    }
}

impl SceneConfig {
    /// Four base stations, sixteen beams each.
    pub fn reference_site(num_uavs: usize, altitude: f64) -> Self {
        Self {
            altitude,
            num_uavs,
            num_bs: 4,
            num_beams: 16,
            bs_positions: REFERENCE_BS_POSITIONS.to_vec(),
            ..Self::default()
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_uavs == 0 || self.num_bs == 0 || self.num_beams == 0 {
            return bad("num_uavs, num_bs and num_beams must all be >= 1".into());
        }
        for (name, r) in [("x_range", self.x_range), ("y_range", self.y_range)] {
            if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
                return bad(format!("{name} = {r:?} is not a nonempty interval"));
            }
        }
        if self.bs_positions.len() != self.num_bs {
            return bad(format!(
                "bs_positions has {} entries but num_bs = {}",
                self.bs_positions.len(),
                self.num_bs
            ));
        }
        for (i, a) in self.bs_positions.iter().enumerate() {
            if self.bs_positions[..i].contains(a) {
                return bad(format!("duplicate BS position {a:?}"));
            }
        }
        let max_bs_height = self
            .bs_positions
            .iter()
            .map(|p| p[2])
            .fold(f64::NEG_INFINITY, f64::max);
        if !(self.altitude > max_bs_height) {
            return bad(format!(
                "altitude {} must exceed the tallest BS ({max_bs_height})",
                self.altitude
            ));
        }
        if !(self.carrier_freq_hz > 0.0) {
            return bad("carrier_freq_hz must be positive".into());
        }
        self.paths.validate()
    }
}

/// Knobs of the parametric multipath generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathModel {
    /// Upper bound of the uniform scattered-path count.
    pub max_nlos_paths: usize,
    /// Scattered-path attenuation relative to LOS, uniform in this dB range.
    pub nlos_loss_db: [f64; 2],
    /// Half-width of the uniform AoA jitter around the LOS angles.
    pub aoa_jitter_deg: f64,
    /// Enables altitude-dependent LOS blockage.
    pub los_blockage: bool,
}

impl Default for PathModel {
    fn default() -> Self {
        Self {
            max_nlos_paths: 4,
            nlos_loss_db: [6.0, 20.0],
            aoa_jitter_deg: 15.0,
            los_blockage: true,
        }
    }
}

impl PathModel {
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.nlos_loss_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || self.aoa_jitter_deg < 0.0 {
            return Err(Error::Config("invalid multipath model parameters".into()));
        }
        Ok(())
    }

    /// Probability that the direct path is blocked at a given altitude.
    pub fn blockage_probability(&self, altitude: f64) -> f64 {
        if self.los_blockage {
            (0.3 - altitude / 1000.0).max(0.0)
        } else {
            0.0
        }
    }
}

/// One resolved propagation path arriving at a UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub amplitude: Complex64,
    /// Degrees, measured from +x counterclockwise, in [0, 360).
    pub azimuth: f64,
    /// Degrees from the +z axis, in [0, 180].
    pub zenith: f64,
    pub delay_index: usize,
}

impl PathComponent {
    pub fn power(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

/// Per-link gain and mean arrival angles, indexed `[m, l, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub gain: Array3<f64>,
    pub azimuth: Array3<f64>,
    pub zenith: Array3<f64>,
}

impl ChannelTensor {
    pub fn zeros(m: usize, l: usize, n: usize) -> Self {
        Self {
            gain: Array3::zeros((m, l, n)),
            azimuth: Array3::zeros((m, l, n)),
            zenith: Array3::zeros((m, l, n)),
        }
    }

    /// `(M, L, N)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.gain.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if self.azimuth.dim() != dims || self.zenith.dim() != dims {
            return Err(Error::Shape("gain/azimuth/zenith tensors differ in shape".into()));
        }
        if self.gain.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::Shape("channel gain must be finite and nonnegative".into()));
        }
        if self.azimuth.iter().any(|a| !(0.0..360.0).contains(a)) {
            return Err(Error::Shape("azimuth outside [0, 360)".into()));
        }
        if self.zenith.iter().any(|z| !(0.0..=180.0).contains(z)) {
            return Err(Error::Shape("zenith outside [0, 180]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub uav_positions: Vec<Position>,
    pub channel: ChannelTensor,
}

impl Scenario {
    pub fn num_uavs(&self) -> usize {
        self.uav_positions.len()
    }
}

/// RNG for scenario `index` of a dataset drawn with `seed`.
pub fn scenario_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

/// Draws UAV positions and synthesizes the full channel tensor.
pub fn sample_scenario<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;
    let [x0, x1] = cfg.x_range;
    let [y0, y1] = cfg.y_range;
    let uav_positions: Vec<Position> = (0..cfg.num_uavs)
        .map(|_| {
            let x = quantize_in(x0 + (x1 - x0) * rng.random::<f64>(), x0, x1);
            let y = quantize_in(y0 + (y1 - y0) * rng.random::<f64>(), y0, y1);
            [x, y, quantize(cfg.altitude)]
        })
        .collect();

    let (m_count, l_count, n_count) = (cfg.num_uavs, cfg.num_bs, cfg.num_beams);
    let mut channel = ChannelTensor::zeros(m_count, l_count, n_count);
    for (m, uav) in uav_positions.iter().enumerate() {
        for (l, bs) in cfg.bs_positions.iter().enumerate() {
            for n in 0..n_count {
                let paths = synthesize_paths(uav, bs, cfg, rng)?;
                let (zenith, azimuth) = mean_aoa(&paths)?;
                channel.gain[[m, l, n]] = quantize(aggregate_gain(&paths));
                channel.azimuth[[m, l, n]] = quantize_azimuth(azimuth);
                channel.zenith[[m, l, n]] = quantize(zenith).clamp(0.0, 180.0);
            }
        }
    }
    Ok(Scenario {
        uav_positions,
        channel,
    })
}

/// Generates `count` scenarios; scenario `i` uses the stream `seed ^ i`.
pub fn generate_dataset(cfg: &SceneConfig, count: usize, seed: u64) -> Result<Vec<Scenario>> {
    (0..count as u64)
        .map(|i| sample_scenario(cfg, &mut scenario_rng(seed, i)))
        .collect()
}

/// Multipath components for one (UAV, BS) pair.
///
/// The LOS path carries the Friis amplitude `lambda / (4 pi d)`; each scattered
/// path is 6-20 dB weaker (by default) with a random phase and angles jittered
/// around the LOS arrival direction. A blocked link keeps at least one
/// scattered path.
pub fn synthesize_paths<R: Rng + ?Sized>(
    uav: &Position,
    bs: &Position,
    cfg: &SceneConfig,
    rng: &mut R,
) -> Result<Vec<PathComponent>> {
    let distance = geometry::distance(uav, bs);
    if !(distance > 1e-9) {
        return Err(Error::DegenerateGeometry(*uav));
    }
    let model = &cfg.paths;
    let (los_zenith, los_azimuth) = geometry::arrival_angles(uav, bs);
    let los_amplitude = cfg.wavelength() / (4.0 * std::f64::consts::PI * distance);
    let los_power = los_amplitude * los_amplitude;

    let blocked = rng.random::<f64>() < model.blockage_probability(cfg.altitude);
    let min_nlos = usize::from(blocked);
    let max_nlos = model.max_nlos_paths.max(min_nlos);
    let nlos_count = rng.random_range(min_nlos..=max_nlos);

    let mut paths = Vec::with_capacity(nlos_count + 1);
    if !blocked {
        paths.push(PathComponent {
            amplitude: Complex64::new(los_amplitude, 0.0),
            azimuth: los_azimuth,
            zenith: los_zenith,
            delay_index: 0,
        });
    }
    let [loss_lo, loss_hi] = model.nlos_loss_db;
    let jitter = model.aoa_jitter_deg;
    for k in 1..=nlos_count {
        let loss_db = loss_lo + (loss_hi - loss_lo) * rng.random::<f64>();
        let power = los_power * 10f64.powf(-loss_db / 10.0);
        let phase = std::f64::consts::TAU * rng.random::<f64>();
        let d_az = jitter * (2.0 * rng.random::<f64>() - 1.0);
        let d_ze = jitter * (2.0 * rng.random::<f64>() - 1.0);
        paths.push(PathComponent {
            amplitude: Complex64::from_polar(power.sqrt(), phase),
            azimuth: geometry::wrap_360(los_azimuth + d_az),
            zenith: (los_zenith + d_ze).clamp(0.0, 180.0),
            delay_index: k,
        });
    }
    Ok(paths)
}

/// Total multipath power `sum_k |z_k|^2`.
pub fn aggregate_gain(paths: &[PathComponent]) -> f64 {
    paths.iter().map(PathComponent::power).sum()
}

/// Arithmetic mean of per-path `(zenith, azimuth)` in degrees.
///
/// Azimuths are averaged on raw degrees without circular unwrapping, so a
/// path cluster straddling 0/360 averages toward 180.
pub fn mean_aoa(paths: &[PathComponent]) -> Result<(f64, f64)> {
    if paths.is_empty() {
        return Err(Error::NoPaths);
    }
    let k = paths.len() as f64;
    let zenith = paths.iter().map(|p| p.zenith).sum::<f64>() / k;
    let azimuth = paths.iter().map(|p| p.azimuth).sum::<f64>() / k;
    Ok((zenith, azimuth))
}

// Stored values are rounded through f32 so the on-disk format round-trips
// bit-exactly.
pub(crate) fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

fn quantize_in(x: f64, lo: f64, hi: f64) -> f64 {
    let q = quantize(x);
    if q < lo {
        (lo as f32).next_up() as f64
    } else if q > hi {
        (hi as f32).next_down() as f64
    } else {
        q
    }
}

fn quantize_azimuth(az: f64) -> f64 {
    let q = quantize(az);
    if q >= 360.0 {
        0.0
    } else {
        q
    }
}
