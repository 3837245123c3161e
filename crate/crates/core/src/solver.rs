//! Dispersion-constrained total-variation minimization by parallel coordinate
//! descent.
//!
//! Each round reads one immutable snapshot of the estimates. Every non-seed node
//! proposes the weighted geodesic median of its located neighbors and keeps it
//! only if the median distance from the proposal to those neighbors is within
//! `gamma`. Proposals are computed in parallel and applied together at the round
//! barrier, so the result does not depend on scheduling or thread count.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::geodesy::{geodesic_distance, GeoPoint};
use crate::graph::{NodeIndex, SocialNetwork, UserId};
use crate::ground_truth::SeedSet;
use crate::robust::{dispersion, geodesic_l1_median, MedianOptions, WeightedPointSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("gamma must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("median tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Largest accepted ego-network dispersion, km. `f64::INFINITY` disables the
    /// constraint.
    pub gamma_km: f64,
    pub iterations: usize,
    pub median: MedianOptions,
    /// Stop before `iterations` once a round changes nothing.
    pub stop_when_unchanged: bool,
    /// Verify per-node descent on every accepted update of an already located
    /// node and count violations in the report.
    pub check_descent: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma_km: 100.0,
            iterations: 5,
            median: MedianOptions::default(),
            stop_when_unchanged: false,
            check_descent: false,
        }
    }
}

impl SolverConfig {
    pub fn new(gamma_km: f64, iterations: usize) -> Result<Self, SolverError> {
        let cfg = SolverConfig {
            gamma_km,
            iterations,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.gamma_km.is_nan() || self.gamma_km <= 0.0 {
            return Err(SolverError::InvalidGamma(self.gamma_km));
        }
        if self.iterations == 0 {
            return Err(SolverError::NoIterations);
        }
        if !(self.median.tol_km > 0.0 && self.median.tol_km.is_finite()) {
            return Err(SolverError::InvalidTolerance(self.median.tol_km));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateSource {
    Seed,
    Inferred,
}

impl fmt::Display for EstimateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateSource::Seed => "seed",
            EstimateSource::Inferred => "inferred",
        })
    }
}

impl FromStr for EstimateSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seed" => Ok(EstimateSource::Seed),
            "inferred" => Ok(EstimateSource::Inferred),
            other => Err(format!("unknown estimate source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationEstimate {
    pub user: UserId,
    pub point: GeoPoint,
    /// Median distance to located neighbors, km; `None` when no neighbor is
    /// located.
    pub dispersion_km: Option<f64>,
    pub source: EstimateSource,
    /// Round in which the user first received a location; 0 for seeds.
    pub first_located_iteration: usize,
}

/// Located users after some number of rounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateState {
    pub iteration: usize,
    located: BTreeMap<UserId, LocationEstimate>,
}

impl EstimateState {
    pub fn from_estimates(iteration: usize, estimates: impl IntoIterator<Item = LocationEstimate>) -> Self {
        EstimateState {
            iteration,
            located: estimates.into_iter().map(|e| (e.user, e)).collect(),
        }
    }

    pub fn get(&self, user: UserId) -> Option<&LocationEstimate> {
        self.located.get(&user)
    }

    pub fn point(&self, user: UserId) -> Option<GeoPoint> {
        self.located.get(&user).map(|e| e.point)
    }

    pub fn len(&self) -> usize {
        self.located.len()
    }

    pub fn is_empty(&self) -> bool {
        self.located.is_empty()
    }

    /// Estimates in ascending user order.
    pub fn iter(&self) -> impl Iterator<Item = &LocationEstimate> + '_ {
        self.located.values()
    }

    pub fn points(&self) -> HashMap<UserId, GeoPoint> {
        self.located.iter().map(|(&u, e)| (u, e.point)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationStats {
    pub iteration: usize,
    pub newly_located: usize,
    pub located_total: usize,
    pub accepted_updates: usize,
    /// Proposals rejected for exceeding gamma.
    pub rejected_updates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InferReport {
    pub iterations: Vec<IterationStats>,
    pub seed_count: usize,
    /// Seeds with no edges; they pass through unchanged.
    pub seeds_outside_network: usize,
    pub descent_violations: usize,
    pub stopped_early: bool,
}

/// `sum_j w_ij d(candidate, f_j)` over located neighbors of `user`; `None` when
/// the user is unknown or has no located neighbor.
pub fn nodal_variation(
    net: &SocialNetwork,
    state: &EstimateState,
    user: UserId,
    candidate: GeoPoint,
) -> Option<f64> {
    let mut any = false;
    let mut total = 0.0;
    for (j, w) in net.neighbors_of(user)? {
        if let Some(p) = state.point(j) {
            any = true;
            total += w as f64 * geodesic_distance(candidate, p);
        }
    }
    any.then_some(total)
}

/// Proposal for a non-seed user from the given state: the weighted median of
/// its located neighbors and the unweighted dispersion there, or `None` when
/// nothing is located around it or the dispersion exceeds gamma.
pub fn node_update(
    net: &SocialNetwork,
    state: &EstimateState,
    user: UserId,
    cfg: &SolverConfig,
) -> Option<(GeoPoint, f64)> {
    let neighbors: Vec<(GeoPoint, f64)> = net
        .neighbors_of(user)?
        .filter_map(|(j, w)| state.point(j).map(|p| (p, w as f64)))
        .collect();
    match propose(neighbors, cfg)? {
        Proposal::Accepted { point, dispersion, .. } => Some((point, dispersion)),
        Proposal::Rejected => None,
    }
}

enum Proposal {
    Accepted {
        point: GeoPoint,
        dispersion: f64,
        set: WeightedPointSet,
    },
    Rejected,
}

fn propose(mut neighbors: Vec<(GeoPoint, f64)>, cfg: &SolverConfig) -> Option<Proposal> {
    if neighbors.is_empty() {
        return None;
    }
    // canonical order makes the proposal a function of the neighbor multiset
    neighbors.sort_by(|a, b| a.0.canonical_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (points, weights) = neighbors.into_iter().unzip();
    let set = WeightedPointSet::new(points, weights).expect("edge weights are positive");
    let point = geodesic_l1_median(&set, &cfg.median);
    let disp = dispersion(point, &set);
    Some(if disp <= cfg.gamma_km {
        Proposal::Accepted {
            point,
            dispersion: disp,
            set,
        }
    } else {
        Proposal::Rejected
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    point: GeoPoint,
    dispersion: Option<f64>,
    seed: bool,
    first: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Fixed,
    Isolated,
    Rejected,
    Accepted {
        point: GeoPoint,
        dispersion: f64,
        descent_ok: bool,
    },
}

fn evaluate_node(net: &SocialNetwork, snapshot: &[Option<Slot>], i: NodeIndex, cfg: &SolverConfig) -> Outcome {
    let current = snapshot[i as usize];
    if matches!(current, Some(Slot { seed: true, .. })) {
        return Outcome::Fixed;
    }
    let neighbors: Vec<(GeoPoint, f64)> = net
        .neighbors(i)
        .filter_map(|(j, w)| snapshot[j as usize].map(|s| (s.point, w as f64)))
        .collect();
    match propose(neighbors, cfg) {
        None => Outcome::Isolated,
        Some(Proposal::Rejected) => Outcome::Rejected,
        Some(Proposal::Accepted {
            point,
            dispersion,
            set,
        }) => {
            let descent_ok = match (cfg.check_descent, current) {
                (true, Some(old)) => {
                    let slack = cfg.median.tol_km * set.total_weight();
                    let cost = |x: GeoPoint| -> f64 {
                        set.iter().map(|(p, w)| w * geodesic_distance(x, p)).sum()
                    };
                    cost(point) <= cost(old.point) + slack
                }
                _ => true,
            };
            Outcome::Accepted {
                point,
                dispersion,
                descent_ok,
            }
        }
    }
}

fn round_parallel(net: &SocialNetwork, snapshot: &[Option<Slot>], cfg: &SolverConfig) -> Vec<Outcome> {
    (0..net.node_count() as NodeIndex)
        .into_par_iter()
        .map(|i| evaluate_node(net, snapshot, i, cfg))
        .collect()
}

/// Applies one round's outcomes; returns (stats, changed, descent violations).
fn apply_round(
    snapshot: &mut [Option<Slot>],
    outcomes: &[Outcome],
    iteration: usize,
    cfg: &SolverConfig,
) -> (IterationStats, bool, usize) {
    let mut stats = IterationStats {
        iteration,
        newly_located: 0,
        located_total: 0,
        accepted_updates: 0,
        rejected_updates: 0,
    };
    let mut changed = false;
    let mut violations = 0;
    for (slot, outcome) in snapshot.iter_mut().zip(outcomes) {
        match *outcome {
            Outcome::Fixed | Outcome::Isolated => {}
            Outcome::Rejected => stats.rejected_updates += 1,
            Outcome::Accepted {
                point,
                dispersion,
                descent_ok,
            } => {
                stats.accepted_updates += 1;
                if !descent_ok {
                    violations += 1;
                }
                debug_assert!(
                    !cfg.check_descent || descent_ok,
                    "accepted update increased nodal variation"
                );
                match slot {
                    Some(s) => {
                        changed |= s.point != point;
                        s.point = point;
                        s.dispersion = Some(dispersion);
                    }
                    None => {
                        changed = true;
                        stats.newly_located += 1;
                        *slot = Some(Slot {
                            point,
                            dispersion: Some(dispersion),
                            seed: false,
                            first: iteration,
                        });
                    }
                }
            }
        }
    }
    stats.located_total = snapshot.iter().filter(|s| s.is_some()).count();
    (stats, changed, violations)
}

/// Runs `cfg.iterations` bulk-synchronous rounds from `seeds` on the current
/// rayon pool.
pub fn infer(
    net: &SocialNetwork,
    seeds: &SeedSet,
    cfg: &SolverConfig,
) -> Result<(EstimateState, InferReport), SolverError> {
    cfg.validate()?;
    let mut snapshot: Vec<Option<Slot>> = vec![None; net.node_count()];
    let mut report = InferReport {
        seed_count: seeds.len(),
        ..InferReport::default()
    };
    for (user, point) in seeds.iter() {
        match net.index_of(user) {
            Some(i) => {
                snapshot[i as usize] = Some(Slot {
                    point,
                    dispersion: None,
                    seed: true,
                    first: 0,
                })
            }
            None => report.seeds_outside_network += 1,
        }
    }

    let mut performed = 0;
    for k in 1..=cfg.iterations {
        let outcomes = round_parallel(net, &snapshot, cfg);
        let (stats, changed, violations) = apply_round(&mut snapshot, &outcomes, k, cfg);
        report.iterations.push(stats);
        report.descent_violations += violations;
        performed = k;
        if cfg.stop_when_unchanged && !changed {
            report.stopped_early = k < cfg.iterations;
            break;
        }
    }

    // seed dispersion against the final snapshot
    let seed_dispersion: Vec<Option<f64>> = (0..net.node_count() as NodeIndex)
        .into_par_iter()
        .map(|i| match snapshot[i as usize] {
            Some(s) if s.seed => {
                let points: Vec<GeoPoint> = net
                    .neighbors(i)
                    .filter_map(|(j, _)| snapshot[j as usize].map(|n| n.point))
                    .collect();
                WeightedPointSet::unweighted(points)
                    .ok()
                    .map(|set| dispersion(s.point, &set))
            }
            _ => None,
        })
        .collect();

    let mut located = BTreeMap::new();
    for (i, slot) in snapshot.iter().enumerate() {
        if let Some(s) = slot {
            let user = net.user(i as NodeIndex);
            located.insert(
                user,
                LocationEstimate {
                    user,
                    point: s.point,
                    dispersion_km: if s.seed { seed_dispersion[i] } else { s.dispersion },
                    source: if s.seed {
                        EstimateSource::Seed
                    } else {
                        EstimateSource::Inferred
                    },
                    first_located_iteration: s.first,
                },
            );
        }
    }
    for (user, point) in seeds.iter() {
        located.entry(user).or_insert(LocationEstimate {
            user,
            point,
            dispersion_km: None,
            source: EstimateSource::Seed,
            first_located_iteration: 0,
        });
    }

    Ok((
        EstimateState {
            iteration: performed,
            located,
        },
        report,
    ))
}

/// [`infer`] on a dedicated pool of `threads` workers.
pub fn infer_with_threads(
    net: &SocialNetwork,
    seeds: &SeedSet,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<(EstimateState, InferReport), SolverError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SolverError::ThreadPool(e.to_string()))?;
    pool.install(|| infer(net, seeds, cfg))
}

/// The unconstrained special case: [`infer`] with `gamma = inf`.
pub fn spatial_label_propagation(
    net: &SocialNetwork,
    seeds: &SeedSet,
    iterations: usize,
) -> Result<(EstimateState, InferReport), SolverError> {
    let cfg = SolverConfig {
        gamma_km: f64::INFINITY,
        iterations,
        ..SolverConfig::default()
    };
    infer(net, seeds, &cfg)
}
