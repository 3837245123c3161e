//! Seed locations from GPS event streams and profile strings, plus per-user
//! mobility statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geodesy::{geodesic_distance, GeoPoint};
use crate::graph::UserId;
use crate::robust::{dispersion, geodesic_l1_median, median, MedianOptions, WeightedPointSet};

/// Minimum number of GPS events for a GPS home.
pub const MIN_GPS_EVENTS: usize = 3;
/// Largest accepted spread of GPS events about their median, km.
pub const MAX_GPS_SPREAD_KM: f64 = 30.0;
/// Largest accepted speed between consecutive GPS events, km/h.
pub const MAX_SPEED_KMH: f64 = 1000.0;
/// Profile claims older than this are ignored.
pub const PROFILE_MAX_AGE_SECS: i64 = 90 * 86_400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsEvent {
    pub user: UserId,
    pub point: GeoPoint,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileClaim {
    user: UserId,
    text: String,
    observed_at: i64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundTruthError {
    #[error("profile text for user {0} is blank")]
    BlankProfile(UserId),
    #[error("gazetteer names {0:?} and {1:?} collide after normalization to {2:?}")]
    DuplicatePlace(String, String, String),
    #[error("gazetteer name is blank")]
    BlankPlace,
}

impl ProfileClaim {
    pub fn new(user: UserId, text: impl Into<String>, observed_at: i64) -> Result<Self, GroundTruthError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(GroundTruthError::BlankProfile(user));
        }
        Ok(ProfileClaim {
            user,
            text,
            observed_at,
        })
    }

    pub fn user(&self) -> UserId {
        self.user
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn observed_at(&self) -> i64 {
        self.observed_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SeedSource {
    Gps,
    Gazetteer,
    /// Known by construction (synthetic benchmarks).
    Planted,
}

impl fmt::Display for SeedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedSource::Gps => "gps",
            SeedSource::Gazetteer => "gazetteer",
            SeedSource::Planted => "planted",
        })
    }
}

impl FromStr for SeedSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gps" => Ok(SeedSource::Gps),
            "gazetteer" => Ok(SeedSource::Gazetteer),
            "planted" => Ok(SeedSource::Planted),
            other => Err(format!("unknown seed source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthRecord {
    pub user: UserId,
    pub home: GeoPoint,
    pub source: SeedSource,
    /// Spread of the evidence about `home`, km. Zero for gazetteer matches.
    pub spread_km: f64,
}

/// Known locations keyed by user: the seed set fed to the solver, or a test
/// set for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedSet(BTreeMap<UserId, GeoPoint>);

impl SeedSet {
    pub fn new() -> Self {
        SeedSet::default()
    }

    pub fn insert(&mut self, user: UserId, point: GeoPoint) -> Option<GeoPoint> {
        self.0.insert(user, point)
    }

    pub fn get(&self, user: UserId) -> Option<GeoPoint> {
        self.0.get(&user).copied()
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.0.contains_key(&user)
    }

    pub fn remove(&mut self, user: UserId) -> Option<GeoPoint> {
        self.0.remove(&user)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries in ascending user order.
    pub fn iter(&self) -> impl Iterator<Item = (UserId, GeoPoint)> + '_ {
        self.0.iter().map(|(&u, &p)| (u, p))
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.0.keys().copied()
    }
}

impl FromIterator<(UserId, GeoPoint)> for SeedSet {
    fn from_iter<T: IntoIterator<Item = (UserId, GeoPoint)>>(iter: T) -> Self {
        SeedSet(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<&'a GroundTruthRecord> for SeedSet {
    fn from_iter<T: IntoIterator<Item = &'a GroundTruthRecord>>(iter: T) -> Self {
        iter.into_iter().map(|r| (r.user, r.home)).collect()
    }
}

fn sorted_by_time(events: &[GpsEvent]) -> Vec<GpsEvent> {
    let mut sorted = events.to_vec();
    sorted.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then(a.point.canonical_cmp(&b.point))
    });
    sorted
}

/// Largest speed over consecutive events in km/h, or `None` with fewer than two
/// events. Events are sorted by time first. Simultaneous events at different
/// places give `+inf`; simultaneous events at one place are skipped.
pub fn max_speed(events: &[GpsEvent]) -> Option<f64> {
    if events.len() < 2 {
        return None;
    }
    let sorted = sorted_by_time(events);
    let mut fastest = 0.0f64;
    for pair in sorted.windows(2) {
        let d = geodesic_distance(pair[0].point, pair[1].point);
        let dt_hours = (pair[1].timestamp - pair[0].timestamp) as f64 / 3600.0;
        let speed = if dt_hours == 0.0 {
            if d > 0.0 {
                f64::INFINITY
            } else {
                continue;
            }
        } else {
            d / dt_hours
        };
        fastest = fastest.max(speed);
    }
    Some(fastest)
}

/// Static home of one user's GPS events, if the user qualifies: at least three
/// events, spread about the median at most 30 km, and never faster than
/// 1000 km/h between consecutive events.
pub fn gps_home(events: &[GpsEvent]) -> Option<GroundTruthRecord> {
    if events.len() < MIN_GPS_EVENTS {
        return None;
    }
    if max_speed(events)? > MAX_SPEED_KMH {
        return None;
    }
    let sorted = sorted_by_time(events);
    let set = WeightedPointSet::unweighted(sorted.iter().map(|e| e.point).collect()).ok()?;
    let home = geodesic_l1_median(&set, &MedianOptions::default());
    let spread_km = dispersion(home, &set);
    if spread_km > MAX_GPS_SPREAD_KM {
        return None;
    }
    Some(GroundTruthRecord {
        user: events[0].user,
        home,
        source: SeedSource::Gps,
        spread_km,
    })
}

/// Trim, lowercase, and collapse internal whitespace runs to one space.
pub fn normalize_place(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Unambiguous place names keyed by normalized form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    entries: HashMap<String, GeoPoint>,
}

impl Gazetteer {
    /// Builds from raw names; names colliding after normalization are an error.
    pub fn from_entries<I, S>(entries: I) -> Result<Self, GroundTruthError>
    where
        I: IntoIterator<Item = (S, GeoPoint)>,
        S: AsRef<str>,
    {
        let mut map: HashMap<String, GeoPoint> = HashMap::new();
        let mut raw: HashMap<String, String> = HashMap::new();
        for (name, point) in entries {
            let name = name.as_ref();
            let key = normalize_place(name);
            if key.is_empty() {
                return Err(GroundTruthError::BlankPlace);
            }
            if let Some(previous) = raw.get(&key) {
                return Err(GroundTruthError::DuplicatePlace(
                    previous.clone(),
                    name.to_string(),
                    key,
                ));
            }
            raw.insert(key.clone(), name.to_string());
            map.insert(key, point);
        }
        Ok(Gazetteer { entries: map })
    }

    pub fn lookup(&self, text: &str) -> Option<GeoPoint> {
        self.entries.get(&normalize_place(text)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Home from one user's profile claims: the most recent claim observed no later
/// than `now` and at most 90 days before it, matched exactly against the
/// gazetteer.
pub fn gazetteer_home(claims: &[ProfileClaim], gaz: &Gazetteer, now: i64) -> Option<GroundTruthRecord> {
    let latest = claims
        .iter()
        .filter(|c| c.observed_at <= now && now - c.observed_at <= PROFILE_MAX_AGE_SECS)
        .max_by(|a, b| {
            a.observed_at
                .cmp(&b.observed_at)
                // equal timestamps: prefer the lexicographically smallest text
                .then_with(|| b.text.cmp(&a.text))
        })?;
    let home = gaz.lookup(&latest.text)?;
    Some(GroundTruthRecord {
        user: latest.user,
        home,
        source: SeedSource::Gazetteer,
        spread_km: 0.0,
    })
}

/// Merges per-source records into one record per user, GPS taking precedence.
/// Within a source the first record for a user wins. Output is sorted by user.
pub fn merge_seeds(gps: &[GroundTruthRecord], gazetteer: &[GroundTruthRecord]) -> Vec<GroundTruthRecord> {
    let mut merged: BTreeMap<UserId, GroundTruthRecord> = BTreeMap::new();
    for r in gps {
        merged.entry(r.user).or_insert(*r);
    }
    for r in gazetteer {
        merged.entry(r.user).or_insert(*r);
    }
    merged.into_values().collect()
}

/// Per-source tallies from [`derive_seeds`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeedCounts {
    pub gps_users: usize,
    pub gps_seeds: usize,
    pub profile_users: usize,
    pub gazetteer_seeds: usize,
    pub merged: usize,
}

/// Full seeding pass: GPS homes for qualifying users, gazetteer homes from
/// fresh profile claims, merged with GPS precedence.
pub fn derive_seeds(
    events: &[GpsEvent],
    claims: &[ProfileClaim],
    gaz: &Gazetteer,
    now: i64,
) -> (Vec<GroundTruthRecord>, SeedCounts) {
    let by_user = group_by_user(events.iter().copied(), |e| e.user);
    let gps: Vec<GroundTruthRecord> = by_user.values().filter_map(|ev| gps_home(ev)).collect();
    let claims_by_user = group_by_user(claims.iter().cloned(), |c| c.user);
    let gazetteer: Vec<GroundTruthRecord> = claims_by_user
        .values()
        .filter_map(|c| gazetteer_home(c, gaz, now))
        .collect();
    let merged = merge_seeds(&gps, &gazetteer);
    let counts = SeedCounts {
        gps_users: by_user.len(),
        gps_seeds: gps.len(),
        profile_users: claims_by_user.len(),
        gazetteer_seeds: gazetteer.len(),
        merged: merged.len(),
    };
    (merged, counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityStats {
    pub user: UserId,
    pub home: GeoPoint,
    pub mean_radius_km: f64,
    pub median_radius_km: f64,
    pub max_speed_kmh: f64,
}

/// Activity radii about the geodesic median of a user's GPS events. `None`
/// with fewer than three events.
pub fn mobility_stats(events: &[GpsEvent]) -> Option<MobilityStats> {
    if events.len() < MIN_GPS_EVENTS {
        return None;
    }
    let points: Vec<GeoPoint> = sorted_by_time(events).iter().map(|e| e.point).collect();
    let set = WeightedPointSet::unweighted(points).ok()?;
    let home = geodesic_l1_median(&set, &MedianOptions::default());
    let mut radii: Vec<f64> = set.points().iter().map(|&p| geodesic_distance(home, p)).collect();
    let mean_radius_km = radii.iter().sum::<f64>() / radii.len() as f64;
    let median_radius_km = median(&mut radii)?;
    Some(MobilityStats {
        user: events[0].user,
        home,
        mean_radius_km,
        median_radius_km,
        max_speed_kmh: max_speed(events)?,
    })
}

/// Groups items by user, preserving input order within each group.
pub fn group_by_user<T, F>(items: impl IntoIterator<Item = T>, user_of: F) -> BTreeMap<UserId, Vec<T>>
where
    F: Fn(&T) -> UserId,
{
    let mut groups: BTreeMap<UserId, Vec<T>> = BTreeMap::new();
    for item in items {
        groups.entry(user_of(&item)).or_default().push(item);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::destination;

    const HOUR: i64 = 3600;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn ev(point: GeoPoint, timestamp: i64) -> GpsEvent {
        GpsEvent {
            user: UserId(7),
            point,
            timestamp,
        }
    }

    #[test]
    fn two_events_are_not_enough() {
        let a = p(34.0, -118.0);
        assert_eq!(gps_home(&[ev(a, 0), ev(a, HOUR)]), None);
    }

    #[test]
    fn stationary_user() {
        let a = p(34.0, -118.0);
        let r = gps_home(&[ev(a, 0), ev(a, HOUR), ev(a, 2 * HOUR)]).unwrap();
        assert_eq!(r.home, a);
        assert_eq!(r.spread_km, 0.0);
        assert_eq!(r.source, SeedSource::Gps);
    }

    #[test]
    fn teleporting_user_is_rejected() {
        let a = p(34.0, -118.0);
        let far = destination(a, 45.0, 200.0);
        // 200 km in 5 minutes = 2400 km/h
        let events = [ev(a, 0), ev(a, 10 * HOUR), ev(far, 10 * HOUR + 300)];
        assert!((max_speed(&events).unwrap() - 2400.0).abs() < 1e-6);
        assert_eq!(gps_home(&events), None);
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let a = p(10.0, 10.0);
        let b = destination(a, 0.0, 100.0);
        assert!((max_speed(&[ev(b, HOUR), ev(a, 0)]).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn speed_edge_cases() {
        let a = p(10.0, 10.0);
        assert_eq!(max_speed(&[ev(a, 0)]), None);
        assert_eq!(max_speed(&[ev(a, 5), ev(a, 5)]), Some(0.0));
        let b = destination(a, 0.0, 1.0);
        assert_eq!(max_speed(&[ev(a, 5), ev(b, 5)]), Some(f64::INFINITY));
        let c = destination(b, 90.0, 1200.0);
        let legs = [ev(a, 0), ev(b, 360), ev(c, 360 + HOUR)];
        assert!((max_speed(&legs).unwrap() - 1200.0).abs() < 1e-6);
    }

    #[test]
    fn mobile_user_exceeds_spread() {
        let a = p(48.0, 2.0);
        let events = [
            ev(a, 0),
            ev(destination(a, 0.0, 200.0), 100 * HOUR),
            ev(destination(a, 120.0, 200.0), 200 * HOUR),
            ev(destination(a, 240.0, 200.0), 300 * HOUR),
        ];
        assert_eq!(gps_home(&events), None);
    }

    fn gaz() -> Gazetteer {
        Gazetteer::from_entries([
            ("malibu, ca", p(34.0259, -118.7798)),
            ("Paris", p(48.8566, 2.3522)),
            ("London", p(51.5074, -0.1278)),
        ])
        .unwrap()
    }

    fn claim(text: &str, at: i64) -> ProfileClaim {
        ProfileClaim::new(UserId(7), text, at).unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_place("  Malibu,   CA \t"), "malibu, ca");
        let r = gazetteer_home(&[claim("  Malibu, CA ", 0)], &gaz(), 10).unwrap();
        assert_eq!(r.home, p(34.0259, -118.7798));
        assert_eq!(r.source, SeedSource::Gazetteer);
    }

    #[test]
    fn staleness() {
        let now = 1_000 * 86_400;
        assert!(gazetteer_home(&[claim("paris", now - 91 * 86_400)], &gaz(), now).is_none());
        assert!(gazetteer_home(&[claim("paris", now - 90 * 86_400)], &gaz(), now).is_some());
        assert!(gazetteer_home(&[claim("paris", now + 1)], &gaz(), now).is_none());
    }

    #[test]
    fn multiple_locations_do_not_match() {
        assert!(gazetteer_home(&[claim("Paris | London", 0)], &gaz(), 0).is_none());
    }

    #[test]
    fn most_recent_fresh_claim_decides() {
        let claims = [claim("London", 100), claim("Nowhere Special", 200)];
        assert!(gazetteer_home(&claims, &gaz(), 300).is_none());
        let claims = [claim("Nowhere Special", 100), claim("London", 200)];
        assert_eq!(
            gazetteer_home(&claims, &gaz(), 300).unwrap().home,
            p(51.5074, -0.1278)
        );
        let mut reversed = claims.to_vec();
        reversed.reverse();
        assert_eq!(
            gazetteer_home(&claims, &gaz(), 300),
            gazetteer_home(&reversed, &gaz(), 300)
        );
    }

    #[test]
    fn gazetteer_rejects_collisions() {
        let dup = Gazetteer::from_entries([("Paris", p(0.0, 0.0)), ("  PARIS ", p(1.0, 1.0))]);
        assert!(matches!(dup, Err(GroundTruthError::DuplicatePlace(..))));
        assert!(ProfileClaim::new(UserId(1), "   ", 0).is_err());
    }

    #[test]
    fn gps_takes_precedence() {
        let rec = |user, source| GroundTruthRecord {
            user: UserId(user),
            home: p(user as f64, 0.0),
            source,
            spread_km: 0.0,
        };
        let merged = merge_seeds(
            &[rec(1, SeedSource::Gps), rec(2, SeedSource::Gps)],
            &[rec(2, SeedSource::Gazetteer), rec(3, SeedSource::Gazetteer)],
        );
        let sources: Vec<_> = merged.iter().map(|r| (r.user.0, r.source)).collect();
        assert_eq!(
            sources,
            vec![
                (1, SeedSource::Gps),
                (2, SeedSource::Gps),
                (3, SeedSource::Gazetteer)
            ]
        );
    }

    #[test]
    fn mobility_examples() {
        let a = p(40.0, -74.0);
        let still = mobility_stats(&[ev(a, 0), ev(a, HOUR), ev(a, 2 * HOUR)]).unwrap();
        assert_eq!(still.mean_radius_km, 0.0);
        assert_eq!(still.median_radius_km, 0.0);
        assert!(mobility_stats(&[ev(a, 0), ev(a, HOUR)]).is_none());

        // two events at home and one 30 km out: home is the majority vertex
        let out = destination(a, 10.0, 30.0);
        let s = mobility_stats(&[ev(a, 0), ev(a, HOUR), ev(out, 2 * HOUR)]).unwrap();
        assert_eq!(s.home, a);
        assert_eq!(s.median_radius_km, 0.0);
        assert!((s.mean_radius_km - 10.0).abs() < 1e-9);
    }

    #[test]
    fn commuter_radii() {
        // 2:1 split between two places 20 km apart
        let home = p(51.0, 0.0);
        let work = destination(home, 90.0, 20.0);
        let mut events = Vec::new();
        for day in 0..10 {
            let t = day * 24 * HOUR;
            events.push(ev(home, t));
            events.push(ev(home, t + HOUR));
            events.push(ev(work, t + 10 * HOUR));
        }
        let s = mobility_stats(&events).unwrap();
        assert_eq!(s.home, home);
        assert_eq!(s.median_radius_km, 0.0);
        assert!((s.mean_radius_km - 20.0 / 3.0).abs() < 1e-9);
    }
}
