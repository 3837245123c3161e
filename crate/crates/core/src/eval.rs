//! Leave-many-out evaluation: holdout splits, error summaries, per-round
//! accuracy, gamma sweeps, error histograms, and city-level accuracy by
//! nearest-city reverse geocoding.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geodesy::{geodesic_distance, great_circle_distance, GeoPoint};
use crate::graph::{SocialNetwork, UserId};
use crate::ground_truth::SeedSet;
use crate::robust::median;
use crate::solver::{infer, EstimateState, SolverConfig, SolverError};

/// Reverse-geocoding population floor used by default.
pub const DEFAULT_MIN_POPULATION: u64 = 5_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("holdout needs at least 2 seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("holdout fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("city table is empty (after population filter)")]
    NoCities,
    #[error("duplicate city name {0:?}")]
    DuplicateCity(String),
    #[error("histogram bin edges must be strictly increasing")]
    BadBinEdges,
    #[error("gamma list is empty")]
    NoGammas,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub train: SeedSet,
    pub test: SeedSet,
    pub rng_seed: u64,
    pub fraction: f64,
}

/// Holds out `round(fraction * |seeds|)` seeds (at least one, leaving at least
/// one for training), chosen by a seeded shuffle of the user-ordered seeds.
pub fn holdout_split(seeds: &SeedSet, fraction: f64, rng_seed: u64) -> Result<HoldoutSplit, EvalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::BadFraction(fraction));
    }
    let n = seeds.len();
    if n < 2 {
        return Err(EvalError::TooFewSeeds(n));
    }
    let test_size = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut users: Vec<UserId> = seeds.users().collect();
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let held: HashSet<UserId> = users[..test_size].iter().copied().collect();
    let (test, train): (Vec<_>, Vec<_>) = seeds.iter().partition(|(u, _)| held.contains(u));
    Ok(HoldoutSplit {
        train: train.into_iter().collect(),
        test: test.into_iter().collect(),
        rng_seed,
        fraction,
    })
}

/// One row of the per-round table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRow {
    pub iteration: usize,
    /// Test users located by the end of this round.
    pub located: usize,
    /// Test users first located in this round.
    pub added: usize,
    pub median_error_km: Option<f64>,
    pub median_error_new_km: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub test_users: usize,
    pub located: usize,
    pub coverage: f64,
    pub median_error_km: Option<f64>,
    pub mean_error_km: Option<f64>,
    pub per_iteration: Vec<IterationRow>,
    pub city_accuracy: Option<f64>,
}

/// (first located round, error km) for every located test user.
fn located_errors(estimates: &EstimateState, test: &SeedSet) -> Vec<(usize, f64)> {
    test.iter()
        .filter_map(|(user, truth)| {
            estimates
                .get(user)
                .map(|e| (e.first_located_iteration, geodesic_distance(e.point, truth)))
        })
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Errors over located test users only; coverage reports how many that is.
pub fn evaluate(estimates: &EstimateState, test: &SeedSet) -> EvalReport {
    let located = located_errors(estimates, test);
    let mut errors: Vec<f64> = located.iter().map(|&(_, e)| e).collect();
    let mean_error_km = mean(&errors);
    let median_error_km = median(&mut errors);

    let first_round = if located.iter().any(|&(k, _)| k == 0) { 0 } else { 1 };
    let last_round = located
        .iter()
        .map(|&(k, _)| k)
        .max()
        .unwrap_or(0)
        .max(estimates.iteration);
    let per_iteration = (first_round..=last_round)
        .map(|k| {
            let mut upto: Vec<f64> = located.iter().filter(|&&(j, _)| j <= k).map(|&(_, e)| e).collect();
            let mut new: Vec<f64> = located.iter().filter(|&&(j, _)| j == k).map(|&(_, e)| e).collect();
            IterationRow {
                iteration: k,
                located: upto.len(),
                added: new.len(),
                median_error_km: median(&mut upto),
                median_error_new_km: median(&mut new),
            }
        })
        .collect();

    EvalReport {
        test_users: test.len(),
        located: located.len(),
        coverage: if test.is_empty() {
            0.0
        } else {
            located.len() as f64 / test.len() as f64
        },
        median_error_km,
        mean_error_km,
        per_iteration,
        city_accuracy: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub name: String,
    pub point: GeoPoint,
    pub population: u64,
}

/// Reverse-geocoding table. Names are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CityTable {
    entries: Vec<City>,
}

impl CityTable {
    pub fn new(entries: Vec<City>) -> Result<Self, EvalError> {
        let mut names = HashSet::new();
        for c in &entries {
            if !names.insert(c.name.as_str()) {
                return Err(EvalError::DuplicateCity(c.name.clone()));
            }
        }
        Ok(CityTable { entries })
    }

    pub fn entries(&self) -> &[City] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_min_population(&self, min_population: u64) -> CityTable {
        CityTable {
            entries: self
                .entries
                .iter()
                .filter(|c| c.population >= min_population)
                .cloned()
                .collect(),
        }
    }

    /// Nearest city by geodesic distance; ties go to the larger population,
    /// then the smaller name.
    pub fn nearest(&self, point: GeoPoint) -> Option<&City> {
        let rough: Vec<f64> = self
            .entries
            .iter()
            .map(|c| great_circle_distance(point, c.point))
            .collect();
        let closest = rough.iter().copied().fold(f64::INFINITY, f64::min);
        // the sphere and the ellipsoid disagree by well under 1%
        let cutoff = closest * 1.01 + 1.0;
        self.entries
            .iter()
            .zip(&rough)
            .filter(|(_, &r)| r <= cutoff)
            .map(|(c, _)| (geodesic_distance(point, c.point), c))
            .min_by(|(da, a), (db, b)| {
                da.total_cmp(db)
                    .then(b.population.cmp(&a.population))
                    .then(a.name.cmp(&b.name))
            })
            .map(|(_, c)| c)
    }
}

/// Fraction of located test users whose estimate and truth reverse-geocode to
/// the same city among cities with at least `min_population` inhabitants.
/// `Ok(None)` when no test user is located.
pub fn city_accuracy(
    estimates: &EstimateState,
    test: &SeedSet,
    cities: &CityTable,
    min_population: u64,
) -> Result<Option<f64>, EvalError> {
    let table = cities.with_min_population(min_population);
    if table.is_empty() {
        return Err(EvalError::NoCities);
    }
    let pairs: Vec<(GeoPoint, GeoPoint)> = test
        .iter()
        .filter_map(|(u, truth)| estimates.point(u).map(|est| (est, truth)))
        .collect();
    if pairs.is_empty() {
        return Ok(None);
    }
    let correct = pairs
        .par_iter()
        .filter(|(est, truth)| {
            est == truth
                || table.nearest(*est).map(|c| &c.name) == table.nearest(*truth).map(|c| &c.name)
        })
        .count();
    Ok(Some(correct as f64 / pairs.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub gamma_km: f64,
    pub located: usize,
    pub coverage: f64,
    pub median_error_km: Option<f64>,
    pub mean_error_km: Option<f64>,
}

/// One full solver run per gamma (other settings from `base`), evaluated on
/// `test`. Rows follow the order of `gammas`.
pub fn gamma_sweep(
    net: &SocialNetwork,
    train: &SeedSet,
    test: &SeedSet,
    gammas: &[f64],
    base: &SolverConfig,
) -> Result<Vec<SweepRow>, EvalError> {
    if gammas.is_empty() {
        return Err(EvalError::NoGammas);
    }
    gammas
        .par_iter()
        .map(|&gamma_km| {
            let cfg = SolverConfig { gamma_km, ..*base };
            let (state, _) = infer(net, train, &cfg)?;
            let report = evaluate(&state, test);
            Ok(SweepRow {
                gamma_km,
                located: report.located,
                coverage: report.coverage,
                median_error_km: report.median_error_km,
                mean_error_km: report.mean_error_km,
            })
        })
        .collect()
}

/// Counts of located test-user errors per bin: `[0, e0)`, `[e0, e1)`, ...,
/// `[e_last, inf)`; the result has `edges.len() + 1` entries.
pub fn error_histogram(estimates: &EstimateState, test: &SeedSet, edges: &[f64]) -> Result<Vec<usize>, EvalError> {
    if edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) || edges.iter().any(|e| e.is_nan()) {
        return Err(EvalError::BadBinEdges);
    }
    let mut counts = vec![0; edges.len() + 1];
    for (_, error) in located_errors(estimates, test) {
        let bin = edges.partition_point(|&e| e <= error);
        counts[bin] += 1;
    }
    Ok(counts)
}
