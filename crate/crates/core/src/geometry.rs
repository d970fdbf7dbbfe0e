//! Angle conventions shared by the channel and antenna models.
//!
//! Zenith is measured from +z, azimuth from +x counterclockwise, both in
//! degrees. Arrival angles describe the direction from the receiver toward
//! the incoming wave.

pub type Position = [f64; 3];

pub fn distance(a: &Position, b: &Position) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `(zenith, azimuth)` of the direction from `receiver` toward `source`.
pub fn arrival_angles(receiver: &Position, source: &Position) -> (f64, f64) {
    let d = [
        source[0] - receiver[0],
        source[1] - receiver[1],
        source[2] - receiver[2],
    ];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let zenith = (d[2] / r).clamp(-1.0, 1.0).acos().to_degrees();
    let azimuth = wrap_360(d[1].atan2(d[0]).to_degrees());
    (zenith, azimuth)
}

/// Wraps into [0, 360).
pub fn wrap_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps into [-180, 180).
pub fn wrap_180(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        -180.0
    } else {
        w
    }
}

/// Azimuth of a BS boresight that faces the scene origin.
pub fn boresight_toward_origin(bs: &Position) -> f64 {
    if bs[0] == 0.0 && bs[1] == 0.0 {
        0.0
    } else {
        wrap_360((-bs[1]).atan2(-bs[0]).to_degrees())
    }
}

/// Converts a mean arrival direction seen at the UAV into the departure
/// direction `(zenith, azimuth)` in the BS's local frame (azimuth relative to
/// boresight, in [-180, 180)).
pub fn departure_in_bs_frame(arrival_zenith: f64, arrival_azimuth: f64, boresight: f64) -> (f64, f64) {
    (180.0 - arrival_zenith, wrap_180(arrival_azimuth + 180.0 - boresight))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps() {
        assert_eq!(wrap_360(-10.0), 350.0);
        assert_eq!(wrap_360(720.0), 0.0);
        assert_eq!(wrap_180(180.0), -180.0);
        assert_eq!(wrap_180(190.0), -170.0);
        assert_eq!(wrap_180(-180.0), -180.0);
    }

    #[test]
    fn arrival_and_departure_are_reverse_directions() {
        let bs = [-30.0, 30.0, 5.0];
        let uav = [20.0, 80.0, 60.0];
        let (ze, az) = arrival_angles(&uav, &bs);
        let (dz, da) = departure_in_bs_frame(ze, az, 0.0);
        let (ze2, az2) = arrival_angles(&bs, &uav);
        assert!((dz - ze2).abs() < 1e-9);
        assert!((wrap_360(da) - az2).abs() < 1e-9);
    }

    #[test]
    fn boresight_points_at_origin() {
        assert!((boresight_toward_origin(&[-100.0, 0.0, 5.0]) - 0.0).abs() < 1e-12);
        assert!((boresight_toward_origin(&[0.0, 100.0, 5.0]) - 270.0).abs() < 1e-12);
    }
}
