//! Geodesic distance on the WGS84 ellipsoid.
//!
//! Distances come from Vincenty's inverse formula. When the iteration fails to
//! converge (near-antipodal pairs) or the pair is exactly antipodal, the result
//! falls back to a great-circle distance on the WGS84 mean radius and the
//! returned [`Geodesic`] is flagged as approximate. Callers never see an error.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

/// WGS84 semi-major axis in kilometers.
pub const WGS84_A_KM: f64 = 6378.137;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS84 semi-minor axis in kilometers.
pub const WGS84_B_KM: f64 = WGS84_A_KM * (1.0 - WGS84_F);
/// WGS84 mean radius `(2a + b) / 3` in kilometers, used by the spherical fallback.
pub const WGS84_MEAN_RADIUS_KM: f64 = (2.0 * WGS84_A_KM + WGS84_B_KM) / 3.0;

const MAX_ITERATIONS: usize = 200;
const LAMBDA_TOLERANCE: f64 = 1e-12;
// cos(sigma) on the auxiliary sphere below this is treated as an antipodal pair.
const ANTIPODAL_COS: f64 = -1.0 + 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} is outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("coordinate is not finite (lat {lat}, lon {lon})")]
    NonFinite { lat: f64, lon: f64 },
}

/// A latitude/longitude pair in degrees on the WGS84 ellipsoid.
///
/// Longitude is normalized into `[-180, 180)` on construction and pinned to
/// zero at the poles, so two values compare equal iff they denote the same
/// place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::NonFinite { lat, lon });
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        let lon = if lat.abs() == 90.0 { 0.0 } else { normalize_lon(lon) };
        // + 0.0 folds -0.0 into 0.0
        Ok(GeoPoint {
            lat: lat + 0.0,
            lon: lon + 0.0,
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Lexicographic (lat, lon) ordering; total because coordinates are finite.
    pub fn canonical_cmp(&self, other: &GeoPoint) -> Ordering {
        self.lat
            .total_cmp(&other.lat)
            .then(self.lon.total_cmp(&other.lon))
    }

    /// Unit vector of this point on the sphere, treating geodetic latitude as
    /// spherical latitude.
    pub(crate) fn unit_vector(&self) -> [f64; 3] {
        let (sl, cl) = self.lat.to_radians().sin_cos();
        let (so, co) = self.lon.to_radians().sin_cos();
        [cl * co, cl * so, sl]
    }

    pub(crate) fn from_unit_vector(v: [f64; 3]) -> GeoPoint {
        let lat = v[2].atan2(v[0].hypot(v[1])).to_degrees().clamp(-90.0, 90.0);
        let lon = v[1].atan2(v[0]).to_degrees();
        GeoPoint::new(lat, lon).expect("finite unit vector")
    }
}

impl Eq for GeoPoint {}

impl Hash for GeoPoint {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.lat.to_bits().hash(state);
        self.lon.to_bits().hash(state);
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if l >= 180.0 {
        l -= 360.0;
    }
    if l < -180.0 {
        l += 360.0;
    }
    l
}

/// Result of an inverse geodesic computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodesic {
    pub distance_km: f64,
    /// Forward azimuth at the first point, degrees clockwise from north.
    pub initial_azimuth: f64,
    /// True when the spherical fallback was used instead of Vincenty's formula.
    pub approximate: bool,
}

/// Solves the inverse problem from `a` to `b`.
pub fn inverse(a: GeoPoint, b: GeoPoint) -> Geodesic {
    if a == b {
        return Geodesic {
            distance_km: 0.0,
            initial_azimuth: 0.0,
            approximate: false,
        };
    }
    vincenty_inverse(a, b).unwrap_or_else(|| spherical_inverse(a, b))
}

/// Geodesic distance in kilometers. Symmetric bit-for-bit: the pair is put in
/// canonical order before solving.
pub fn geodesic_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    distance_flagged(a, b).0
}

/// Distance in kilometers plus the approximate flag.
pub fn distance_flagged(a: GeoPoint, b: GeoPoint) -> (f64, bool) {
    let (p, q) = if a.canonical_cmp(&b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let g = inverse(p, q);
    (g.distance_km, g.approximate)
}

fn reduced(lat_deg: f64) -> (f64, f64) {
    let tan_u = (1.0 - WGS84_F) * lat_deg.to_radians().tan();
    let cos_u = 1.0 / (1.0 + tan_u * tan_u).sqrt();
    let sin_u = tan_u * cos_u;
    // tan() blows up at the poles; recover the exact limits
    if lat_deg == 90.0 {
        (1.0, 0.0)
    } else if lat_deg == -90.0 {
        (-1.0, 0.0)
    } else {
        (sin_u, cos_u)
    }
}

fn wrap_pi(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y < -PI {
        y += 2.0 * PI;
    }
    y
}

fn vincenty_inverse(a: GeoPoint, b: GeoPoint) -> Option<Geodesic> {
    let f = WGS84_F;
    let l = wrap_pi((b.lon - a.lon).to_radians());
    let (sin_u1, cos_u1) = reduced(a.lat);
    let (sin_u2, cos_u2) = reduced(b.lat);

    let cos_sigma0 = sin_u1 * sin_u2 + cos_u1 * cos_u2 * l.cos();
    if cos_sigma0 < ANTIPODAL_COS {
        return None;
    }

    let mut lambda = l;
    let mut converged = false;
    let (mut sin_sigma, mut cos_sigma, mut sigma) = (0.0, 1.0, 0.0);
    let (mut cos_sq_alpha, mut cos_2sigma_m) = (1.0, 0.0);
    let (mut sin_lambda, mut cos_lambda) = (0.0, 1.0);

    for _ in 0..MAX_ITERATIONS {
        (sin_lambda, cos_lambda) = lambda.sin_cos();
        let t1 = cos_u2 * sin_lambda;
        let t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda;
        let sin_sq_sigma = t1 * t1 + t2 * t2;
        if sin_sq_sigma == 0.0 {
            // coincident on the auxiliary sphere
            return Some(Geodesic {
                distance_km: 0.0,
                initial_azimuth: 0.0,
                approximate: false,
            });
        }
        sin_sigma = sin_sq_sigma.sqrt();
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        cos_2sigma_m = if cos_sq_alpha != 0.0 {
            cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        } else {
            // equatorial line
            0.0
        };
        let c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
        let previous = lambda;
        lambda = l
            + (1.0 - c)
                * f
                * sin_alpha
                * (sigma
                    + c * sin_sigma
                        * (cos_2sigma_m
                            + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
        if lambda.abs() > PI {
            return None;
        }
        if (lambda - previous).abs() <= LAMBDA_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }

    let a_km = WGS84_A_KM;
    let b_km = WGS84_B_KM;
    let u_sq = cos_sq_alpha * (a_km * a_km - b_km * b_km) / (b_km * b_km);
    let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    let c2m = cos_2sigma_m;
    let delta_sigma = big_b
        * sin_sigma
        * (c2m
            + big_b / 4.0
                * (cos_sigma * (-1.0 + 2.0 * c2m * c2m)
                    - big_b / 6.0
                        * c2m
                        * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                        * (-3.0 + 4.0 * c2m * c2m)));
    let distance_km = b_km * big_a * (sigma - delta_sigma);
    let azimuth = (cos_u2 * sin_lambda)
        .atan2(cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda)
        .to_degrees();

    Some(Geodesic {
        distance_km,
        initial_azimuth: azimuth,
        approximate: false,
    })
}

/// Haversine distance on the mean-radius sphere; cheap, within about 0.5% of
/// the ellipsoidal value.
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    spherical_inverse(a, b).distance_km
}

fn spherical_inverse(a: GeoPoint, b: GeoPoint) -> Geodesic {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = wrap_pi((b.lon - a.lon).to_radians());
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let central = 2.0 * h.sqrt().min(1.0).asin();
    let azimuth = (dlambda.sin() * phi2.cos())
        .atan2(phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos())
        .to_degrees();
    Geodesic {
        distance_km: WGS84_MEAN_RADIUS_KM * central,
        initial_azimuth: azimuth,
        approximate: true,
    }
}

/// Solves the direct problem: the point reached from `start` after travelling
/// `distance_km` along the geodesic with initial `azimuth_deg`.
pub fn destination(start: GeoPoint, azimuth_deg: f64, distance_km: f64) -> GeoPoint {
    if distance_km == 0.0 {
        return start;
    }
    let f = WGS84_F;
    let a_km = WGS84_A_KM;
    let b_km = WGS84_B_KM;
    let (sin_a1, cos_a1) = azimuth_deg.to_radians().sin_cos();
    let (sin_u1, cos_u1) = reduced(start.lat);
    let sigma1 = sin_u1.atan2(cos_u1 * cos_a1);
    let sin_alpha = cos_u1 * sin_a1;
    let cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
    let u_sq = cos_sq_alpha * (a_km * a_km - b_km * b_km) / (b_km * b_km);
    let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));

    let sigma0 = distance_km / (b_km * big_a);
    let mut sigma = sigma0;
    let (mut sin_sigma, mut cos_sigma, mut cos_2sigma_m);
    let mut iterations = 0;
    loop {
        cos_2sigma_m = (2.0 * sigma1 + sigma).cos();
        (sin_sigma, cos_sigma) = sigma.sin_cos();
        let c2m = cos_2sigma_m;
        let delta_sigma = big_b
            * sin_sigma
            * (c2m
                + big_b / 4.0
                    * (cos_sigma * (-1.0 + 2.0 * c2m * c2m)
                        - big_b / 6.0
                            * c2m
                            * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                            * (-3.0 + 4.0 * c2m * c2m)));
        let previous = sigma;
        sigma = sigma0 + delta_sigma;
        iterations += 1;
        if (sigma - previous).abs() <= LAMBDA_TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    (sin_sigma, cos_sigma) = sigma.sin_cos();
    cos_2sigma_m = (2.0 * sigma1 + sigma).cos();

    let x = sin_u1 * sin_sigma - cos_u1 * cos_sigma * cos_a1;
    let lat2 = (sin_u1 * cos_sigma + cos_u1 * sin_sigma * cos_a1)
        .atan2((1.0 - f) * (sin_alpha * sin_alpha + x * x).sqrt());
    let lambda = (sin_sigma * sin_a1).atan2(cos_u1 * cos_sigma - sin_u1 * sin_sigma * cos_a1);
    let c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
    let l = lambda
        - (1.0 - c)
            * f
            * sin_alpha
            * (sigma
                + c * sin_sigma
                    * (cos_2sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
    let lat = lat2.to_degrees().clamp(-90.0, 90.0);
    GeoPoint::new(lat, start.lon + l.to_degrees()).expect("direct solution is finite")
}
