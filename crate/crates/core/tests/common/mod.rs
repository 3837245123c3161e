#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::LazyLock;

use geographiclib_rs::{DirectGeodesic, Geodesic, InverseGeodesic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geotv::formats::{read_gazetteer, read_gps, read_profiles, read_seeds, write_estimates};
use geotv::ground_truth::derive_seeds;
use geotv::robust::{geodesic_l1_median, MedianOptions, WeightedPointSet};
use geotv::solver::EstimateState;
use geotv::synth::{generate, SynthConfig, SynthOutput};
use geotv::{GeoPoint, SeedSet, SocialNetwork, UserId};

static WGS84: LazyLock<Geodesic> = LazyLock::new(Geodesic::wgs84);

pub fn p(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

/// Independent ellipsoidal distance, km.
pub fn oracle_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let s: f64 = WGS84.inverse(a.lat(), a.lon(), b.lat(), b.lon());
    s / 1000.0
}

/// (distance km, initial azimuth deg) from the independent solver.
pub fn oracle_inverse(a: GeoPoint, b: GeoPoint) -> (f64, f64) {
    let (s, azi1, _, _): (f64, f64, f64, f64) = WGS84.inverse(a.lat(), a.lon(), b.lat(), b.lon());
    (s / 1000.0, azi1)
}

pub fn oracle_direct(start: GeoPoint, azimuth_deg: f64, km: f64) -> GeoPoint {
    let (lat, lon): (f64, f64) = WGS84.direct(start.lat(), start.lon(), azimuth_deg, km * 1000.0);
    p(lat, lon)
}

pub fn random_point<R: Rng>(rng: &mut R) -> GeoPoint {
    let lat = (2.0 * rng.random::<f64>() - 1.0).asin().to_degrees();
    let lon = 360.0 * rng.random::<f64>() - 180.0;
    p(lat, lon)
}

pub fn antipode(a: GeoPoint) -> GeoPoint {
    p(-a.lat(), a.lon() + 180.0)
}

/// Uniform pairs on the sphere, skipping pairs within 1 degree of antipodal.
pub fn random_pairs(seed: u64, n: usize) -> Vec<(GeoPoint, GeoPoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = random_point(&mut rng);
        let b = random_point(&mut rng);
        if oracle_km(b, antipode(a)) > 111.0 {
            out.push((a, b));
        }
    }
    out
}

pub fn oracle_objective(x: GeoPoint, pts: &[(GeoPoint, f64)]) -> f64 {
    pts.iter().map(|&(q, w)| w * oracle_km(x, q)).sum()
}

/// Random weighted set of 1..=7 points inside a disc of radius `radius_km`.
pub fn random_weighted_set<R: Rng>(rng: &mut R, radius_km: f64) -> Vec<(GeoPoint, f64)> {
    let center = p(140.0 * rng.random::<f64>() - 70.0, 360.0 * rng.random::<f64>() - 180.0);
    let n = rng.random_range(1..=7);
    (0..n)
        .map(|_| {
            let r = radius_km * rng.random::<f64>().sqrt();
            let az = 360.0 * rng.random::<f64>();
            (oracle_direct(center, az, r), rng.random_range(0.5..5.0))
        })
        .collect()
}

/// Coarse-to-fine grid search of the weighted distance sum in an azimuthal
/// equidistant frame around the first point, finishing at 100 m spacing.
pub fn grid_median(pts: &[(GeoPoint, f64)]) -> (GeoPoint, f64) {
    let origin = pts[0].0;
    let to_point = |x: f64, y: f64| -> GeoPoint {
        let r = x.hypot(y);
        if r == 0.0 {
            origin
        } else {
            oracle_direct(origin, x.atan2(y).to_degrees(), r)
        }
    };
    let xy: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(q, _)| {
            let (d, az) = oracle_inverse(origin, q);
            let (s, c) = az.to_radians().sin_cos();
            (d * s, d * c)
        })
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &xy {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = 1.0;
    let (mut cx, mut cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let mut half = ((x1 - x0).max(y1 - y0) / 2.0 + pad).max(1.0);
    let mut best = (origin, f64::INFINITY);
    loop {
        let step = (half / 16.0).max(0.1);
        let n = (half / step).ceil() as i64;
        let mut stage_best = (cx, cy, f64::INFINITY);
        for i in -n..=n {
            for j in -n..=n {
                let (x, y) = (cx + i as f64 * step, cy + j as f64 * step);
                let f = oracle_objective(to_point(x, y), pts);
                if f < stage_best.2 {
                    stage_best = (x, y, f);
                }
            }
        }
        if stage_best.2 < best.1 {
            best = (to_point(stage_best.0, stage_best.1), stage_best.2);
        }
        if step <= 0.1 {
            return best;
        }
        cx = stage_best.0;
        cy = stage_best.1;
        half = 2.0 * step;
    }
}

pub fn ours_median(pts: &[(GeoPoint, f64)], opts: &MedianOptions) -> GeoPoint {
    let set = WeightedPointSet::new(pts.iter().map(|x| x.0).collect(), pts.iter().map(|x| x.1).collect()).unwrap();
    geodesic_l1_median(&set, opts)
}

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn open(path: PathBuf) -> BufReader<File> {
    BufReader::new(File::open(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
}

/// Clock used for the ground-truth fixture.
pub const FIXTURE_NOW: i64 = 1_700_000_000;

/// Runs the seeding pass over the ground-truth fixture and compares with the
/// expected seed file. Returns the number of seeds on success.
pub fn check_ground_truth_fixture() -> Result<usize, String> {
    let dir = fixture_dir("ground_truth");
    let events = read_gps(open(dir.join("gps.tsv"))).map_err(|e| e.to_string())?;
    let (claims, _) = read_profiles(open(dir.join("profiles.tsv"))).map_err(|e| e.to_string())?;
    let gaz = read_gazetteer(open(dir.join("gazetteer.tsv"))).map_err(|e| e.to_string())?;
    let expected = read_seeds(open(dir.join("expected_seeds.tsv"))).map_err(|e| e.to_string())?;
    let (got, _) = derive_seeds(&events, &claims, &gaz, FIXTURE_NOW);

    let got_users: Vec<u64> = got.iter().map(|r| r.user.0).collect();
    let want_users: Vec<u64> = expected.iter().map(|r| r.user.0).collect();
    if got_users != want_users {
        return Err(format!("seed users differ: got {got_users:?}, want {want_users:?}"));
    }
    for (g, w) in got.iter().zip(&expected) {
        if g.source != w.source {
            return Err(format!("user {}: source {} != {}", g.user, g.source, w.source));
        }
        let off_m = oracle_km(g.home, w.home) * 1000.0;
        if off_m > 1.0 {
            return Err(format!("user {}: home off by {off_m:.3} m", g.user));
        }
        if (g.spread_km - w.spread_km).abs() > 0.2 {
            return Err(format!("user {}: spread {} != {}", g.user, g.spread_km, w.spread_km));
        }
    }
    Ok(got.len())
}

/// Plain sequential label propagation: every round, each non-seed user with
/// located neighbors moves to their weighted median, reading only the previous
/// round's locations. Returns (point, first round located) per user.
pub fn reference_slp(net: &SocialNetwork, seeds: &SeedSet, iterations: usize) -> BTreeMap<UserId, (GeoPoint, usize)> {
    let mut state: BTreeMap<UserId, (GeoPoint, usize)> = seeds.iter().map(|(u, q)| (u, (q, 0))).collect();
    let opts = MedianOptions::default();
    for k in 1..=iterations {
        let mut next = state.clone();
        for &u in net.users() {
            if seeds.contains(u) {
                continue;
            }
            let mut located: Vec<(GeoPoint, f64)> = net
                .neighbors_of(u)
                .unwrap()
                .filter_map(|(v, w)| state.get(&v).map(|&(q, _)| (q, w as f64)))
                .collect();
            if located.is_empty() {
                continue;
            }
            located.sort_by(|a, b| a.0.canonical_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let m = ours_median(&located, &opts);
            let first = state.get(&u).map_or(k, |&(_, f)| f);
            next.insert(u, (m, first));
        }
        state = next;
    }
    state
}

pub fn same_as_reference(state: &EstimateState, reference: &BTreeMap<UserId, (GeoPoint, usize)>) -> Result<(), String> {
    if state.len() != reference.len() {
        return Err(format!("{} located vs {} in reference", state.len(), reference.len()));
    }
    for e in state.iter() {
        match reference.get(&e.user) {
            Some(&(q, k)) if q == e.point && k == e.first_located_iteration => {}
            other => return Err(format!("user {}: {:?} vs reference {:?}", e.user, (e.point, e.first_located_iteration), other)),
        }
    }
    Ok(())
}

pub struct Benchmark {
    pub cfg: SynthConfig,
    pub out: SynthOutput,
    /// Every non-seed user with its planted location.
    pub test: SeedSet,
}

pub fn benchmark() -> Benchmark {
    let cfg = SynthConfig::benchmark();
    let out = generate(&cfg).expect("benchmark config is feasible");
    let test = out.non_seed_truth();
    Benchmark { cfg, out, test }
}

pub fn estimates_bytes(state: &EstimateState) -> Vec<u8> {
    let mut buf = Vec::new();
    write_estimates(&mut buf, state).unwrap();
    buf
}
