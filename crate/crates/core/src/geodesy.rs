//! WGS-84 transforms and the Vincenty inverse geodesic.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
const E2: f64 = WGS84_F * (2.0 - WGS84_F);
const EP2: f64 = E2 / (1.0 - E2);

/// Geodetic position: degrees and ellipsoidal height in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticPos {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeodeticPos {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self> {
        if !(lat.abs() <= 90.0 && lon.abs() <= 180.0 && alt.is_finite()) {
            return Err(Error::Domain(format!("invalid geodetic position ({lat}, {lon}, {alt})")));
        }
        Ok(Self { lat, lon, alt })
    }
}

pub fn geodetic_to_ecef(g: &GeodeticPos) -> Vector3<f64> {
    let (sl, cl) = g.lat.to_radians().sin_cos();
    let (so, co) = g.lon.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - E2 * sl * sl).sqrt();
    Vector3::new((n + g.alt) * cl * co, (n + g.alt) * cl * so, (n * (1.0 - E2) + g.alt) * sl)
}

/// Bowring's closed form followed by fixed-point refinement of latitude.
pub fn ecef_to_geodetic(p: &Vector3<f64>) -> Result<GeodeticPos> {
    if !(p.norm() > 1e5) {
        return Err(Error::Domain("ECEF point too close to the Earth's center".into()));
    }
    let (x, y, z) = (p.x, p.y, p.z);
    let rho = x.hypot(y);
    let lon = y.atan2(x);
    let theta = (z * WGS84_A).atan2(rho * WGS84_B);
    let (st, ct) = theta.sin_cos();
    let mut lat = (z + EP2 * WGS84_B * st.powi(3)).atan2(rho - E2 * WGS84_A * ct.powi(3));
    let mut alt: f64;
    for _ in 0..10 {
        let (sl, cl) = lat.sin_cos();
        let n = WGS84_A / (1.0 - E2 * sl * sl).sqrt();
        alt = rho * cl + z * sl - WGS84_A * (1.0 - E2 * sl * sl).sqrt();
        let next = z.atan2(rho * (1.0 - E2 * n / (n + alt)));
        let done = (next - lat).abs() < 1e-12;
        lat = next;
        if done {
            break;
        }
    }
    let (sl, cl) = lat.sin_cos();
    alt = rho * cl + z * sl - WGS84_A * (1.0 - E2 * sl * sl).sqrt();
    Ok(GeodeticPos { lat: lat.to_degrees(), lon: lon.to_degrees(), alt })
}

/// Rows are the east, north and up unit vectors at `g`.
pub fn enu_rotation(g: &GeodeticPos) -> Matrix3<f64> {
    let (sl, cl) = g.lat.to_radians().sin_cos();
    let (so, co) = g.lon.to_radians().sin_cos();
    Matrix3::new(-so, co, 0.0, -sl * co, -sl * so, cl, cl * co, cl * so, sl)
}

/// `(east, north, up)` of `est - truth` in the local frame at `truth`.
pub fn ecef_error_to_enu(truth: &GeodeticPos, est: &Vector3<f64>) -> Vector3<f64> {
    enu_rotation(truth) * (est - geodetic_to_ecef(truth))
}

/// ECEF vector for a local ENU vector at `g`.
pub fn enu_to_ecef_delta(g: &GeodeticPos, enu: &Vector3<f64>) -> Vector3<f64> {
    enu_rotation(g).transpose() * enu
}

/// Inverse geodesic distance on WGS-84 (Vincenty 1975).
pub fn vincenty_distance(g1: &GeodeticPos, g2: &GeodeticPos) -> Result<f64> {
    let f = WGS84_F;
    // longitude difference wrapped into [-180, 180)
    let l = ((g2.lon - g1.lon + 180.0).rem_euclid(360.0) - 180.0).to_radians();
    let u1 = ((1.0 - f) * g1.lat.to_radians().tan()).atan();
    let u2 = ((1.0 - f) * g2.lat.to_radians().tan()).atan();
    let (su1, cu1) = u1.sin_cos();
    let (su2, cu2) = u2.sin_cos();

    let mut lambda = l;
    for _ in 0..200 {
        let (sl, cl) = lambda.sin_cos();
        let sin_sigma = ((cu2 * sl).powi(2) + (cu1 * su2 - su1 * cu2 * cl).powi(2)).sqrt();
        if sin_sigma == 0.0 {
            // coincident points
            return Ok(0.0);
        }
        let cos_sigma = su1 * su2 + cu1 * cu2 * cl;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cu1 * cu2 * sl / sin_sigma;
        let cos2_alpha = 1.0 - sin_alpha * sin_alpha;
        let cos_2sm = if cos2_alpha != 0.0 { cos_sigma - 2.0 * su1 * su2 / cos2_alpha } else { 0.0 };
        let c = f / 16.0 * cos2_alpha * (4.0 + f * (4.0 - 3.0 * cos2_alpha));
        let prev = lambda;
        lambda = l
            + (1.0 - c)
                * f
                * sin_alpha
                * (sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
        if lambda.abs() > PI {
            return Err(Error::VincentyNonConvergence);
        }
        if (lambda - prev).abs() < 1e-12 {
            let u_sq = cos2_alpha * (WGS84_A * WGS84_A - WGS84_B * WGS84_B) / (WGS84_B * WGS84_B);
            let a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
            let b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
            let delta_sigma = b
                * sin_sigma
                * (cos_2sm
                    + b / 4.0
                        * (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                            - b / 6.0
                                * cos_2sm
                                * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                                * (-3.0 + 4.0 * cos_2sm * cos_2sm)));
            return Ok(WGS84_B * a * (sigma - delta_sigma));
        }
    }
    Err(Error::VincentyNonConvergence)
}
