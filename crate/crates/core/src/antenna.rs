//! Sectorized element pattern and uniform-planar-array beamforming gain.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Floor applied to the array gain when the steering/beamforming inner
/// product vanishes.
pub const ARRAY_GAIN_FLOOR_DB: f64 = -400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElementPattern {
    /// Peak element gain, dBi.
    pub g_e_max: f64,
    pub theta_3db: f64,
    pub phi_3db: f64,
    /// Front-to-back ratio, dB.
    pub a_m: f64,
    /// Vertical side-lobe limit, dB.
    pub sla_v: f64,
}

impl Default for ElementPattern {
    fn default() -> Self {
        Self {
            g_e_max: -8.0,
            theta_3db: 65.0,
            phi_3db: 90.0,
            a_m: 30.0,
            sla_v: 30.0,
        }
    }
}

impl ElementPattern {
    /// Vertical attenuation `A_E,V(theta)` (nonpositive, dB).
    pub fn vertical_attenuation(&self, zenith: f64) -> f64 {
        -(12.0 * ((zenith - 90.0) / self.theta_3db).powi(2)).min(self.sla_v)
    }

    /// Horizontal attenuation `A_E,H(phi)` (nonpositive, dB).
    pub fn horizontal_attenuation(&self, azimuth: f64) -> f64 {
        -(12.0 * (azimuth / self.phi_3db).powi(2)).min(self.a_m)
    }

    /// Element gain in dBi for a direction in the BS frame.
    ///
    /// Written as `G_max - min{-(A_V + A_H), A_m}`; since both attenuations
    /// are nonpositive this is the same as `G_max - min{|A_V| + |A_H|, A_m}`.
    pub fn gain_db(&self, zenith: f64, azimuth: f64) -> f64 {
        let total = self.vertical_attenuation(zenith) + self.horizontal_attenuation(azimuth);
        self.g_e_max - (-total).min(self.a_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayConfig {
    pub n_h: usize,
    pub n_v: usize,
    /// Horizontal spacing in wavelengths.
    pub d_h: f64,
    /// Vertical spacing in wavelengths.
    pub d_v: f64,
    /// Downtilt, degrees.
    pub tilt_deg: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_h: 4,
            n_v: 4,
            d_h: 0.5,
            d_v: 0.5,
            tilt_deg: 15.0,
        }
    }
}

impl ArrayConfig {
    pub fn num_elements(&self) -> usize {
        self.n_h * self.n_v
    }

    /// Upper bound of the array gain, `10 log10(N_H N_V)`.
    pub fn max_array_gain_db(&self) -> f64 {
        10.0 * (self.num_elements() as f64).log10()
    }

    /// Element `(u, v)` lives at index `v * n_h + u`.
    pub fn steering_vector(&self, zenith: f64, azimuth: f64) -> Vec<Complex64> {
        let (st, ct) = zenith.to_radians().sin_cos();
        let sp = azimuth.to_radians().sin();
        let horiz = self.d_h * st * sp;
        let vert = self.d_v * ct;
        let mut out = Vec::with_capacity(self.num_elements());
        for v in 0..self.n_v {
            for u in 0..self.n_h {
                let phase = TAU * (u as f64 * horiz + v as f64 * vert);
                out.push(Complex64::from_polar(1.0, phase));
            }
        }
        out
    }

    /// Unit-norm beamforming weights for a horizontal scan angle.
    pub fn beamforming_vector(&self, scan: f64) -> Vec<Complex64> {
        let (stilt, ctilt) = self.tilt_deg.to_radians().sin_cos();
        let horiz = self.d_h * scan.to_radians().sin() * ctilt;
        let vert = self.d_v * stilt;
        let amp = 1.0 / (self.num_elements() as f64).sqrt();
        let mut out = Vec::with_capacity(self.num_elements());
        for v in 0..self.n_v {
            for u in 0..self.n_h {
                let phase = -TAU * (u as f64 * horiz - v as f64 * vert);
                out.push(Complex64::from_polar(amp, phase));
            }
        }
        out
    }

    /// `10 log10 |V^H W|^2`, floored at [`ARRAY_GAIN_FLOOR_DB`].
    ///
    /// Peaks at `10 log10(N_H N_V)` in the direction zenith = 90 - tilt,
    /// azimuth = -scan.
    pub fn array_gain_db(&self, zenith: f64, azimuth: f64, scan: f64) -> f64 {
        let v = self.steering_vector(zenith, azimuth);
        let w = self.beamforming_vector(scan);
        let inner: Complex64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
        let p = inner.norm_sqr();
        if p > 0.0 {
            (10.0 * p.log10()).max(ARRAY_GAIN_FLOOR_DB)
        } else {
            ARRAY_GAIN_FLOOR_DB
        }
    }
}

/// Element pattern plus array configuration of one BS.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AntennaModel {
    pub element: ElementPattern,
    pub array: ArrayConfig,
}

impl AntennaModel {
    /// Total gain `A_E + A_V` in dBi.
    pub fn total_gain_db(&self, zenith: f64, azimuth: f64, scan: f64) -> f64 {
        self.element.gain_db(zenith, azimuth) + self.array.array_gain_db(zenith, azimuth, scan)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_gain_examples() {
        let p = ElementPattern::default();
        assert!((p.gain_db(90.0, 0.0) + 8.0).abs() < 1e-12);
        assert!((p.horizontal_attenuation(90.0) + 12.0).abs() < 1e-12);
        assert!((p.gain_db(90.0, 90.0) + 20.0).abs() < 1e-12);
        assert!((p.gain_db(90.0, 180.0) + 38.0).abs() < 1e-12);
    }

    #[test]
    fn element_gain_is_bounded_on_grid() {
        let p = ElementPattern::default();
        for ze in 0..=180 {
            for az in -180..180 {
                let g = p.gain_db(ze as f64, az as f64);
                assert!(g <= p.g_e_max + 1e-12);
                assert!(g >= p.g_e_max - p.a_m - 1e-12);
            }
        }
    }

    #[test]
    fn steering_at_broadside_is_all_ones() {
        let a = ArrayConfig::default();
        for x in a.steering_vector(90.0, 0.0) {
            assert!((x - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_phases_two_by_two() {
        let a = ArrayConfig {
            n_h: 2,
            n_v: 2,
            ..ArrayConfig::default()
        };
        let s = std::f64::consts::PI * 0.5;
        let expected = [0.0, s, 0.0, s];
        for (x, e) in a.steering_vector(90.0, 30.0).iter().zip(expected) {
            assert!((x - Complex64::from_polar(1.0, e)).norm() < 1e-12);
        }
    }

    #[test]
    fn beamforming_has_unit_norm() {
        let a = ArrayConfig::default();
        for scan in [-170.0, -20.0, 0.0, 33.3, 179.0] {
            let w = a.beamforming_vector(scan);
            let n: f64 = w.iter().map(|x| x.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
            for x in &w {
                assert!((x.norm() - 0.25).abs() < 1e-12);
            }
        }
        let flat = ArrayConfig {
            tilt_deg: 0.0,
            ..ArrayConfig::default()
        };
        for x in flat.beamforming_vector(0.0) {
            assert!((x - Complex64::new(0.25, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn matched_direction_reaches_coherent_bound() {
        let a = ArrayConfig::default();
        let g = a.array_gain_db(90.0 - a.tilt_deg, -25.0, 25.0);
        assert!((g - 12.04).abs() < 0.01);
        assert!((g - a.max_array_gain_db()).abs() < 1e-9);
    }

    #[test]
    fn single_element_has_zero_array_gain() {
        let a = ArrayConfig {
            n_h: 1,
            n_v: 1,
            ..ArrayConfig::default()
        };
        for (ze, az, scan) in [(10.0, 20.0, 30.0), (120.0, -100.0, 5.0)] {
            assert!(a.array_gain_db(ze, az, scan).abs() < 1e-12);
        }
    }

    #[test]
    fn total_gain_composition() {
        let g = -8.0 + 12.04;
        assert!((db_to_linear(g) - 2.535).abs() < 0.001);
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(-30.0) - 1e-3).abs() < 1e-15);
        let model = AntennaModel::default();
        let (ze, az, scan) = (75.0, 10.0, -10.0);
        let direct = model.total_gain_db(ze, az, scan);
        let parts = model.element.gain_db(ze, az) + model.array.array_gain_db(ze, az, scan);
        assert_eq!(direct, parts);
    }

    #[test]
    fn array_gain_below_bound_and_smooth_in_scan() {
        let model = AntennaModel::default();
        let bound = model.array.max_array_gain_db() + 1e-9;
        let (ze, az) = (70.0, 35.0);
        let mut prev = model.total_gain_db(ze, az, -180.0);
        let step = 0.01;
        let mut scan = -180.0 + step;
        while scan < 180.0 {
            let g = model.total_gain_db(ze, az, scan);
            assert!(model.array.array_gain_db(ze, az, scan) <= bound);
            // Away from the deep nulls the slope stays bounded.
            if g > -30.0 && prev > -30.0 {
                assert!((g - prev).abs() <= 20.0 * step, "jump {} at {scan}", g - prev);
            }
            prev = g;
            scan += step;
        }
    }
}
