//! Weighted geodesic l1 median and median-based dispersion.
//!
//! The median is found with Weiszfeld's iteration carried out in the tangent
//! plane of the current iterate: each step uses exact ellipsoidal distances and
//! forward azimuths to the data points, takes the Weiszfeld step in local
//! east/north coordinates, and maps back with the direct geodesic solution.
//! Sets that do not fit inside a hemisphere fall back to the weighted medoid.

use std::collections::HashMap;

use thiserror::Error;

use crate::geodesy::{destination, geodesic_distance, inverse, GeoPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("point set is empty")]
    Empty,
    #[error("{points} points but {weights} weights")]
    LengthMismatch { points: usize, weights: usize },
    #[error("weight #{index} is {value}; weights must be positive and finite")]
    BadWeight { index: usize, value: f64 },
}

/// A non-empty multiset of points with strictly positive finite weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointSet {
    points: Vec<GeoPoint>,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    pub fn new(points: Vec<GeoPoint>, weights: Vec<f64>) -> Result<Self, StatsError> {
        if points.is_empty() {
            return Err(StatsError::Empty);
        }
        if points.len() != weights.len() {
            return Err(StatsError::LengthMismatch {
                points: points.len(),
                weights: weights.len(),
            });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(StatsError::BadWeight { index, value });
        }
        Ok(WeightedPointSet { points, weights })
    }

    /// All weights equal to one.
    pub fn unweighted(points: Vec<GeoPoint>) -> Result<Self, StatsError> {
        let weights = vec![1.0; points.len()];
        Self::new(points, weights)
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (GeoPoint, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Stopping rules for [`geodesic_l1_median`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianOptions {
    /// Objective tolerance per unit weight, km.
    pub tol_km: f64,
    pub max_iter: usize,
}

impl Default for MedianOptions {
    fn default() -> Self {
        MedianOptions {
            tol_km: 0.01,
            max_iter: 1000,
        }
    }
}

/// `sum_j w_j * d(x, p_j)` in km.
pub fn weighted_distance_sum(x: GeoPoint, set: &WeightedPointSet) -> f64 {
    set.iter().map(|(p, w)| w * geodesic_distance(x, p)).sum()
}

// Distance below which an iterate is considered to sit on a data point.
const COINCIDENT_KM: f64 = 1e-9;
// Radius around a data point inside which its optimality condition is tested.
const VERTEX_CHECK_KM: f64 = 1e-3;
// Step off a non-optimal data point.
const PERTURB_KM: f64 = 1e-3;

/// Weighted l1 (geometric) median under the geodesic metric.
///
/// Degenerate cases resolve deterministically: a single distinct point is
/// returned as is, and any point carrying at least half the total weight is the
/// median (this covers two-point sets: the heavier point wins, the first one on
/// ties). Sets spreading over more than a hemisphere start from the medoid,
/// never ending worse than it.
pub fn geodesic_l1_median(set: &WeightedPointSet, opts: &MedianOptions) -> GeoPoint {
    let merged = merge_coincident(set);
    if merged.len() == 1 {
        return merged[0].0;
    }
    let total: f64 = merged.iter().map(|(_, w)| w).sum();
    if let Some(&(p, _)) = merged.iter().find(|(_, w)| 2.0 * w >= total) {
        return p;
    }

    match hemisphere_centroid(&merged) {
        Some(start) => weiszfeld(&merged, start, opts),
        None => {
            // The centroid is meaningless here. Descend from the best data
            // point instead and keep whichever is better.
            let m = medoid(&merged);
            let x = weiszfeld(&merged, m, opts);
            let cost = |q: GeoPoint| -> f64 { merged.iter().map(|&(p, w)| w * geodesic_distance(q, p)).sum() };
            if cost(x) < cost(m) {
                x
            } else {
                m
            }
        }
    }
}

fn merge_coincident(set: &WeightedPointSet) -> Vec<(GeoPoint, f64)> {
    let mut order: Vec<(GeoPoint, f64)> = Vec::with_capacity(set.len());
    let mut seen: HashMap<GeoPoint, usize> = HashMap::with_capacity(set.len());
    for (p, w) in set.iter() {
        match seen.get(&p) {
            Some(&i) => order[i].1 += w,
            None => {
                seen.insert(p, order.len());
                order.push((p, w));
            }
        }
    }
    order
}

/// Normalized weighted centroid, or `None` when some point lies 90 degrees or
/// more from it (the set spans more than a hemisphere).
fn hemisphere_centroid(points: &[(GeoPoint, f64)]) -> Option<GeoPoint> {
    let total: f64 = points.iter().map(|(_, w)| w).sum();
    let units: Vec<[f64; 3]> = points.iter().map(|(p, _)| p.unit_vector()).collect();
    let mut c = [0.0; 3];
    for (u, (_, w)) in units.iter().zip(points) {
        for k in 0..3 {
            c[k] += w * u[k];
        }
    }
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if norm <= 1e-12 * total {
        return None;
    }
    let c = [c[0] / norm, c[1] / norm, c[2] / norm];
    if units
        .iter()
        .any(|u| u[0] * c[0] + u[1] * c[1] + u[2] * c[2] <= 0.0)
    {
        return None;
    }
    Some(GeoPoint::from_unit_vector(c))
}

fn medoid(points: &[(GeoPoint, f64)]) -> GeoPoint {
    let mut best = points[0].0;
    let mut best_cost = f64::INFINITY;
    for &(candidate, _) in points {
        let cost: f64 = points
            .iter()
            .map(|&(p, w)| w * geodesic_distance(candidate, p))
            .sum();
        if cost < best_cost {
            best_cost = cost;
            best = candidate;
        }
    }
    best
}

/// Resultant of weighted unit directions (east, north) from `origin` toward
/// every point other than `skip`, and the matching `sum w / d`.
fn pull_from(origin: GeoPoint, points: &[(GeoPoint, f64)], skip: usize) -> ([f64; 2], f64) {
    let mut r = [0.0; 2];
    let mut den = 0.0;
    for (j, &(p, w)) in points.iter().enumerate() {
        if j == skip {
            continue;
        }
        let g = inverse(origin, p);
        if g.distance_km <= COINCIDENT_KM {
            continue;
        }
        let (s, c) = g.initial_azimuth.to_radians().sin_cos();
        r[0] += w * s;
        r[1] += w * c;
        den += w / g.distance_km;
    }
    (r, den)
}

fn heading(v: [f64; 2]) -> f64 {
    v[0].atan2(v[1]).to_degrees()
}

fn weiszfeld(
    points: &[(GeoPoint, f64)],
    start: GeoPoint,
    opts: &MedianOptions,
) -> GeoPoint {
    let stop_km = opts.tol_km * 1e-2;
    let mut checked = vec![false; points.len()];
    let mut x = start;
    let cost = |q: GeoPoint| -> f64 { points.iter().map(|&(p, w)| w * geodesic_distance(q, p)).sum() };

    for _ in 0..opts.max_iter {
        let mut num = [0.0; 2];
        let mut den = 0.0;
        let mut nearest = (usize::MAX, f64::INFINITY);
        let mut on_vertex = None;
        for (j, &(p, w)) in points.iter().enumerate() {
            let g = inverse(x, p);
            let d = g.distance_km;
            if d < nearest.1 {
                nearest = (j, d);
            }
            if d <= COINCIDENT_KM {
                on_vertex = Some(j);
                continue;
            }
            let (s, c) = g.initial_azimuth.to_radians().sin_cos();
            num[0] += w * s;
            num[1] += w * c;
            den += w / d;
        }

        let (k, dk) = nearest;
        let at_vertex = on_vertex.or((dk <= VERTEX_CHECK_KM && !checked[k]).then_some(k));
        if let Some(k) = at_vertex {
            // Sitting on (or next to) a data point: keep it if optimal,
            // otherwise take the Vardi-Zhang step away from it.
            checked[k] = true;
            let vertex = points[k].0;
            let (r, den_others) = pull_from(vertex, points, k);
            let norm = r[0].hypot(r[1]);
            if norm <= points[k].1 {
                return vertex;
            }
            let len = ((1.0 - points[k].1 / norm) * norm / den_others).max(PERTURB_KM);
            x = destination(vertex, heading(r), len);
            continue;
        }

        let step = [num[0] / den, num[1] / den];
        let len = step[0].hypot(step[1]);
        if len == 0.0 {
            return x;
        }
        // Weiszfeld crawls away from clusters of heavy points; stretch the
        // step while the objective keeps falling.
        let dir = heading(step);
        let mut t = len;
        let mut next = destination(x, dir, t);
        let mut f_next = cost(next);
        for _ in 0..64 {
            let trial = destination(x, dir, 2.0 * t);
            let f_trial = cost(trial);
            if f_trial >= f_next {
                break;
            }
            t *= 2.0;
            next = trial;
            f_next = f_trial;
        }
        x = next;
        if t <= stop_km {
            break;
        }
    }
    x
}

/// Median of a slice of finite values; mean of the two middle values for even
/// lengths. Reorders the slice.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        return Some(upper);
    }
    let lower = values[..mid]
        .iter()
        .copied()
        .max_by(f64::total_cmp)
        .expect("non-empty lower half");
    Some((lower + upper) / 2.0)
}

/// Median distance from `center` to the points of `set`. Weights are ignored.
pub fn dispersion(center: GeoPoint, set: &WeightedPointSet) -> f64 {
    let mut distances: Vec<f64> = set
        .points()
        .iter()
        .map(|&p| geodesic_distance(center, p))
        .collect();
    median(&mut distances).expect("point sets are non-empty")
}

/// Median absolute deviation about the geodesic median (unit weights).
pub fn mad_spread(points: &[GeoPoint]) -> Result<f64, StatsError> {
    let set = WeightedPointSet::unweighted(points.to_vec())?;
    let center = geodesic_l1_median(&set, &MedianOptions::default());
    Ok(dispersion(center, &set))
}
