//! Planted-city benchmark generator.
//!
//! Cities are picked from a bundled list of real city centers so that they are
//! far apart; users are scattered uniformly over a disc around each center and
//! befriend mostly nearby users of the same city. A small fraction of edges is
//! rewired to other cities. Everything is drawn from one seeded ChaCha stream,
//! so a config reproduces its output bit for bit.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use thiserror::Error;

use crate::eval::{City, CityTable};
use crate::formats::read_city_table;
use crate::geodesy::{destination, geodesic_distance, GeoPoint};
use crate::graph::{SocialNetwork, UserId, WeightedEdge};
use crate::ground_truth::SeedSet;

const CITY_LIST: &str = include_str!("../data/cities.tsv");

/// Candidate neighbours examined when attaching a user to its city's tree.
const TREE_CANDIDATES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("only {placed} of {wanted} cities can be placed {min_km} km apart")]
    Infeasible { wanted: usize, placed: usize, min_km: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub num_cities: usize,
    pub users_per_city: usize,
    pub city_radius_km: f64,
    pub intra_edge_mean_degree: f64,
    pub inter_edge_fraction: f64,
    pub seed_fraction: f64,
    pub rng_seed: u64,
}

impl SynthConfig {
    /// The committed benchmark: 50 cities of 400 users, 15 km discs, mean
    /// degree 4, 5% of edges between cities, 10% seeds.
    pub fn benchmark() -> Self {
        SynthConfig {
            num_cities: 50,
            users_per_city: 400,
            city_radius_km: 15.0,
            intra_edge_mean_degree: 4.0,
            inter_edge_fraction: 0.05,
            seed_fraction: 0.1,
            rng_seed: 20140701,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.num_cities == 0 {
            return bad("num_cities must be positive");
        }
        if self.users_per_city == 0 {
            return bad("users_per_city must be positive");
        }
        if !(self.city_radius_km > 0.0 && self.city_radius_km.is_finite()) {
            return bad("city_radius must be a positive finite distance");
        }
        if !(self.intra_edge_mean_degree > 0.0 && self.intra_edge_mean_degree.is_finite()) {
            return bad("intra_edge_mean_degree must be positive");
        }
        if !(0.0..1.0).contains(&self.inter_edge_fraction) {
            return bad("inter_edge_fraction must be in [0, 1)");
        }
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return bad("seed_fraction must be in (0, 1]");
        }
        if (self.num_cities as u128) * (self.users_per_city as u128) > u64::MAX as u128 / 2 {
            return bad("too many users");
        }
        Ok(())
    }

    pub fn user_id(&self, city: usize, j: usize) -> UserId {
        UserId((city * self.users_per_city + j + 1) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub network: SocialNetwork,
    pub truth: SeedSet,
    pub seeds: SeedSet,
    /// User to index into `cities`.
    pub assignment: BTreeMap<UserId, usize>,
    pub cities: Vec<City>,
}

impl SynthOutput {
    /// Truth restricted to users that are not seeds.
    pub fn non_seed_truth(&self) -> SeedSet {
        self.truth
            .iter()
            .filter(|(u, _)| !self.seeds.contains(*u))
            .collect()
    }

    /// Edges whose endpoints live in different cities.
    pub fn inter_city_edges(&self) -> usize {
        self.network
            .edges()
            .iter()
            .filter(|e| self.assignment[&e.u()] != self.assignment[&e.v()])
            .count()
    }
}

/// The bundled list of 200 real cities.
pub fn city_catalog() -> CityTable {
    read_city_table(CITY_LIST.as_bytes()).expect("bundled city list parses")
}

struct Resident {
    id: UserId,
    point: GeoPoint,
    // planar offset from the city center, km
    x: f64,
    y: f64,
}

fn planar(a: &Resident, b: &Resident) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn pick_cities(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<City>, SynthError> {
    let catalog = city_catalog();
    let mut order: Vec<usize> = (0..catalog.len()).collect();
    order.shuffle(rng);
    let min_km = 20.0 * cfg.city_radius_km;
    let mut chosen: Vec<City> = Vec::with_capacity(cfg.num_cities);
    for i in order {
        let c = &catalog.entries()[i];
        if chosen.iter().all(|o| geodesic_distance(o.point, c.point) >= min_km) {
            chosen.push(c.clone());
            if chosen.len() == cfg.num_cities {
                return Ok(chosen);
            }
        }
    }
    Err(SynthError::Infeasible {
        wanted: cfg.num_cities,
        placed: chosen.len(),
        min_km,
    })
}

fn place_users(cfg: &SynthConfig, city: usize, center: GeoPoint, rng: &mut ChaCha8Rng) -> Vec<Resident> {
    (0..cfg.users_per_city)
        .map(|j| {
            let r = (cfg.city_radius_km * rng.random::<f64>().sqrt()).min(cfg.city_radius_km * (1.0 - 1e-9));
            let az = 360.0 * rng.random::<f64>();
            let (s, c) = az.to_radians().sin_cos();
            Resident {
                id: cfg.user_id(city, j),
                point: destination(center, az, r),
                x: r * s,
                y: r * c,
            }
        })
        .collect()
}

fn pair(a: UserId, b: UserId) -> (UserId, UserId) {
    (a.min(b), a.max(b))
}

/// Spanning tree plus distance-biased random pairs until the degree target.
fn city_edges(cfg: &SynthConfig, residents: &[Resident], rng: &mut ChaCha8Rng) -> Vec<(UserId, UserId)> {
    let n = residents.len();
    let max_pairs = n * (n - 1) / 2;
    let target = ((n as f64 * cfg.intra_edge_mean_degree / 2.0).round() as usize)
        .max(n - 1)
        .min(max_pairs);
    let mut seen = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for t in 1..n {
        let me = &residents[order[t]];
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..TREE_CANDIDATES.min(t) {
            let other = order[rng.random_range(0..t)];
            let d = planar(me, &residents[other]);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, other));
            }
        }
        let e = pair(me.id, residents[best.unwrap().1].id);
        seen.insert(e);
        edges.push(e);
    }

    let length = cfg.city_radius_km / 3.0;
    let mut attempts = 0usize;
    let budget = 1000 * target.max(1);
    while edges.len() < target && attempts < budget {
        attempts += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let d = planar(&residents[a], &residents[b]);
        if rng.random::<f64>() >= (-d / length).exp() {
            continue;
        }
        let e = pair(residents[a].id, residents[b].id);
        if seen.insert(e) {
            edges.push(e);
        }
    }
    edges
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let cities = pick_cities(cfg, &mut rng)?;

    let mut residents: Vec<Vec<Resident>> = Vec::with_capacity(cities.len());
    for (c, city) in cities.iter().enumerate() {
        residents.push(place_users(cfg, c, city.point, &mut rng));
    }
    let mut edges: Vec<(UserId, UserId)> = Vec::new();
    for rs in &residents {
        edges.extend(city_edges(cfg, rs, &mut rng));
    }

    let city_of = |u: UserId| ((u.0 - 1) as usize) / cfg.users_per_city;
    let mut seen: HashSet<(UserId, UserId)> = edges.iter().copied().collect();
    let mut degree: BTreeMap<UserId, usize> = BTreeMap::new();
    for &(a, b) in &edges {
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    if cities.len() > 1 && cfg.inter_edge_fraction > 0.0 {
        let total_users = cities.len() * cfg.users_per_city;
        for e in edges.iter_mut() {
            if rng.random::<f64>() >= cfg.inter_edge_fraction {
                continue;
            }
            // keep one endpoint, move the other to a user of another city;
            // never strand a user without friends
            let (keep, drop) = if rng.random::<bool>() { (e.0, e.1) } else { (e.1, e.0) };
            let (keep, drop) = if degree[&drop] > 1 {
                (keep, drop)
            } else if degree[&keep] > 1 {
                (drop, keep)
            } else {
                continue;
            };
            for _ in 0..8 {
                let k = rng.random_range(0..total_users);
                let target = cfg.user_id(k / cfg.users_per_city, k % cfg.users_per_city);
                if city_of(target) == city_of(keep) {
                    continue;
                }
                let moved = pair(keep, target);
                if seen.contains(&moved) {
                    continue;
                }
                seen.remove(e);
                seen.insert(moved);
                *degree.get_mut(&drop).unwrap() -= 1;
                *degree.entry(target).or_default() += 1;
                *e = moved;
                break;
            }
        }
    }

    let geometric = Geometric::new(0.5).expect("valid probability");
    let weighted: Vec<WeightedEdge> = edges
        .iter()
        .map(|&(a, b)| WeightedEdge::new(a, b, 1 + geometric.sample(&mut rng)).expect("distinct users"))
        .collect();
    let network = SocialNetwork::from_edges(weighted).expect("edges are unique");

    let mut truth = SeedSet::new();
    let mut seeds = SeedSet::new();
    let mut assignment = BTreeMap::new();
    let per_city_seeds = ((cfg.seed_fraction * cfg.users_per_city as f64).round() as usize).clamp(1, cfg.users_per_city);
    for (c, rs) in residents.iter().enumerate() {
        for r in rs {
            truth.insert(r.id, r.point);
            assignment.insert(r.id, c);
        }
        let mut picks = index::sample(&mut rng, rs.len(), per_city_seeds).into_vec();
        picks.sort_unstable();
        for j in picks {
            seeds.insert(rs[j].id, rs[j].point);
        }
    }

    Ok(SynthOutput {
        network,
        truth,
        seeds,
        assignment,
        cities,
    })
}

/// Moves `round(fraction * |seeds|)` seeds to a uniformly random point of some
/// other city's disc. Returns the corrupted seed set and the moved users.
pub fn mislocate_seeds(
    out: &SynthOutput,
    cfg: &SynthConfig,
    fraction: f64,
    rng_seed: u64,
) -> (SeedSet, Vec<UserId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let users: Vec<UserId> = out.seeds.users().collect();
    let k = ((fraction.clamp(0.0, 1.0) * users.len() as f64).round() as usize).min(users.len());
    let mut picks = index::sample(&mut rng, users.len(), k).into_vec();
    picks.sort_unstable();
    let mut seeds = out.seeds.clone();
    let mut moved = Vec::with_capacity(k);
    for i in picks {
        let user = users[i];
        let home = out.assignment[&user];
        if out.cities.len() < 2 {
            break;
        }
        let mut other = rng.random_range(0..out.cities.len() - 1);
        if other >= home {
            other += 1;
        }
        let r = cfg.city_radius_km * rng.random::<f64>().sqrt() * (1.0 - 1e-9);
        let az = 360.0 * rng.random::<f64>();
        seeds.insert(user, destination(out.cities[other].point, az, r));
        moved.push(user);
    }
    (seeds, moved)
}
