//! The reciprocated mention network.
//!
//! Directed mention counts are aggregated per ordered pair; an undirected edge
//! exists only when both directions were observed, weighted by the smaller of
//! the two totals. The finished [`SocialNetwork`] is immutable and stores a
//! compressed adjacency index over dense node indices.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geodesy::{geodesic_distance, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for UserId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(UserId)
    }
}

/// A directed mention tally as read from input. Self-mentions and zero counts
/// are representable here and rejected during network construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MentionRecord {
    pub src: UserId,
    pub dst: UserId,
    pub count: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("self loop on user {0}")]
    SelfLoop(UserId),
    #[error("edge ({0}, {1}) has zero weight")]
    ZeroWeight(UserId, UserId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(UserId, UserId),
}

/// An undirected edge stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightedEdge {
    u: UserId,
    v: UserId,
    weight: u64,
}

impl WeightedEdge {
    pub fn new(a: UserId, b: UserId, weight: u64) -> Result<Self, GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        if weight == 0 {
            return Err(GraphError::ZeroWeight(u, v));
        }
        Ok(WeightedEdge { u, v, weight })
    }

    pub fn u(&self) -> UserId {
        self.u
    }

    pub fn v(&self) -> UserId {
        self.v
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }
}

/// Tallies from [`SocialNetwork::build_reciprocal`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records_in: u64,
    pub directed_pairs: u64,
    pub reciprocated_edges: u64,
    pub dropped_self_mentions: u64,
    pub dropped_zero_counts: u64,
}

impl IngestReport {
    pub fn dropped(&self) -> u64 {
        self.dropped_self_mentions + self.dropped_zero_counts
    }
}

/// Dense index of a user inside a [`SocialNetwork`].
pub type NodeIndex = u32;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SocialNetwork {
    users: Vec<UserId>,
    index: HashMap<UserId, NodeIndex>,
    offsets: Vec<usize>,
    targets: Vec<NodeIndex>,
    weights: Vec<u64>,
    edges: Vec<WeightedEdge>,
}

/// Output of [`SocialNetwork::total_variation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalVariation {
    pub km: f64,
    /// Edges with at most one located endpoint.
    pub skipped_edges: usize,
}

impl SocialNetwork {
    /// Aggregates directed mention counts and keeps reciprocated pairs.
    pub fn build_reciprocal<I>(records: I) -> (SocialNetwork, IngestReport)
    where
        I: IntoIterator<Item = MentionRecord>,
    {
        let mut report = IngestReport::default();
        let mut directed: HashMap<(UserId, UserId), u64> = HashMap::new();
        for r in records {
            report.records_in += 1;
            if r.src == r.dst {
                report.dropped_self_mentions += 1;
                continue;
            }
            if r.count == 0 {
                report.dropped_zero_counts += 1;
                continue;
            }
            let total = directed.entry((r.src, r.dst)).or_insert(0);
            *total = total.saturating_add(r.count);
        }
        report.directed_pairs = directed.len() as u64;

        let edges: Vec<WeightedEdge> = directed
            .iter()
            .filter(|((src, dst), _)| src < dst)
            .filter_map(|(&(src, dst), &forward)| {
                directed
                    .get(&(dst, src))
                    .map(|&backward| WeightedEdge::new(src, dst, forward.min(backward)))
            })
            .collect::<Result<_, _>>()
            .expect("aggregated pairs are valid edges");
        report.reciprocated_edges = edges.len() as u64;

        let net = Self::from_edges(edges).expect("aggregated pairs are unique");
        (net, report)
    }

    /// Builds the network from undirected edges (any endpoint order).
    pub fn from_edges<I>(edges: I) -> Result<SocialNetwork, GraphError>
    where
        I: IntoIterator<Item = WeightedEdge>,
    {
        let mut edges: Vec<WeightedEdge> = edges.into_iter().collect();
        edges.sort_unstable();
        for pair in edges.windows(2) {
            if pair[0].u == pair[1].u && pair[0].v == pair[1].v {
                return Err(GraphError::DuplicateEdge(pair[0].u, pair[0].v));
            }
        }

        let mut users: Vec<UserId> = edges.iter().flat_map(|e| [e.u, e.v]).collect();
        users.sort_unstable();
        users.dedup();
        let index: HashMap<UserId, NodeIndex> = users
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, i as NodeIndex))
            .collect();

        let mut degree = vec![0usize; users.len()];
        for e in &edges {
            degree[index[&e.u] as usize] += 1;
            degree[index[&e.v] as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(users.len() + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..users.len()].to_vec();
        let mut targets = vec![0; offsets[users.len()]];
        let mut weights = vec![0; offsets[users.len()]];
        for e in &edges {
            let (a, b) = (index[&e.u], index[&e.v]);
            for (from, to) in [(a, b), (b, a)] {
                let slot = &mut fill[from as usize];
                targets[*slot] = to;
                weights[*slot] = e.weight;
                *slot += 1;
            }
        }
        // neighbor lists sorted by index
        for i in 0..users.len() {
            let range = offsets[i]..offsets[i + 1];
            let mut row: Vec<(NodeIndex, u64)> = targets[range.clone()]
                .iter()
                .copied()
                .zip(weights[range.clone()].iter().copied())
                .collect();
            row.sort_unstable();
            for (k, (t, w)) in row.into_iter().enumerate() {
                targets[range.start + k] = t;
                weights[range.start + k] = w;
            }
        }

        Ok(SocialNetwork {
            users,
            index,
            offsets,
            targets,
            weights,
            edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.users.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order.
    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    /// Users in ascending id order; position equals [`NodeIndex`].
    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn user(&self, idx: NodeIndex) -> UserId {
        self.users[idx as usize]
    }

    pub fn index_of(&self, user: UserId) -> Option<NodeIndex> {
        self.index.get(&user).copied()
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.index.contains_key(&user)
    }

    pub fn neighbors(&self, idx: NodeIndex) -> impl Iterator<Item = (NodeIndex, u64)> + '_ {
        let range = self.offsets[idx as usize]..self.offsets[idx as usize + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// Neighbors of `user` with edge weights, or `None` for unknown users.
    pub fn neighbors_of(&self, user: UserId) -> Option<impl Iterator<Item = (UserId, u64)> + '_> {
        let idx = self.index_of(user)?;
        Some(self.neighbors(idx).map(|(j, w)| (self.user(j), w)))
    }

    /// Neighbor count; `None` flags a user absent from the network.
    pub fn degree(&self, user: UserId) -> Option<usize> {
        self.index_of(user).map(|i| {
            let i = i as usize;
            self.offsets[i + 1] - self.offsets[i]
        })
    }

    /// `sum w_ij d(f_i, f_j)` over edges whose endpoints are both located.
    pub fn total_variation(&self, locations: &HashMap<UserId, GeoPoint>) -> TotalVariation {
        let mut km = 0.0;
        let mut skipped_edges = 0;
        for e in &self.edges {
            match (locations.get(&e.u), locations.get(&e.v)) {
                (Some(&a), Some(&b)) => km += e.weight as f64 * geodesic_distance(a, b),
                _ => skipped_edges += 1,
            }
        }
        TotalVariation { km, skipped_edges }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::destination;

    fn m(src: u64, dst: u64, count: u64) -> MentionRecord {
        MentionRecord {
            src: UserId(src),
            dst: UserId(dst),
            count,
        }
    }

    #[test]
    fn min_of_reciprocated_counts() {
        let (net, report) = SocialNetwork::build_reciprocal([m(1, 2, 5), m(2, 1, 2)]);
        assert_eq!(net.edges(), &[WeightedEdge::new(UserId(1), UserId(2), 2).unwrap()]);
        assert_eq!(report.reciprocated_edges, 1);
        assert_eq!(report.directed_pairs, 2);
    }

    #[test]
    fn unreciprocated_is_dropped() {
        let (net, _) = SocialNetwork::build_reciprocal([m(1, 2, 5)]);
        assert_eq!(net.edge_count(), 0);
        assert_eq!(net.node_count(), 0);
    }

    #[test]
    fn composition_and_isolated_users() {
        let (net, _) = SocialNetwork::build_reciprocal([m(1, 2, 3), m(2, 1, 3), m(1, 3, 1)]);
        assert_eq!(net.edge_count(), 1);
        assert_eq!(net.edges()[0].weight(), 3);
        assert!(!net.contains(UserId(3)));
    }

    #[test]
    fn repeated_pairs_sum_and_bad_records_tally() {
        let (net, report) = SocialNetwork::build_reciprocal([
            m(1, 2, 1),
            m(1, 2, 4),
            m(2, 1, 7),
            m(3, 3, 2),
            m(4, 1, 0),
        ]);
        assert_eq!(net.edges()[0].weight(), 5);
        assert_eq!(report.dropped_self_mentions, 1);
        assert_eq!(report.dropped_zero_counts, 1);
        assert_eq!(report.dropped(), 2);
        assert_eq!(report.records_in, 5);
    }

    #[test]
    fn star_degrees() {
        let (net, _) = SocialNetwork::build_reciprocal(
            (1..=3).flat_map(|leaf| [m(0, leaf, 1), m(leaf, 0, 1)]),
        );
        assert_eq!(net.degree(UserId(0)), Some(3));
        assert_eq!(net.degree(UserId(2)), Some(1));
        assert_eq!(net.degree(UserId(99)), None);
    }

    #[test]
    fn from_edges_rejects_duplicates_and_loops() {
        let e = |a, b, w| WeightedEdge::new(UserId(a), UserId(b), w);
        assert!(matches!(e(1, 1, 1), Err(GraphError::SelfLoop(_))));
        assert!(matches!(e(1, 2, 0), Err(GraphError::ZeroWeight(..))));
        let dup = SocialNetwork::from_edges([e(1, 2, 1).unwrap(), e(2, 1, 3).unwrap()]);
        assert!(matches!(dup, Err(GraphError::DuplicateEdge(..))));
    }

    #[test]
    fn total_variation_examples() {
        let e = |a, b, w| WeightedEdge::new(UserId(a), UserId(b), w).unwrap();
        let origin = GeoPoint::new(40.0, -3.0).unwrap();

        let tri = SocialNetwork::from_edges([e(1, 2, 1), e(2, 3, 1), e(1, 3, 1)]).unwrap();
        let same: HashMap<UserId, GeoPoint> =
            (1..=3).map(|u| (UserId(u), origin)).collect();
        assert_eq!(tri.total_variation(&same).km, 0.0);

        let single = SocialNetwork::from_edges([e(1, 2, 2)]).unwrap();
        let locs: HashMap<UserId, GeoPoint> = [
            (UserId(1), origin),
            (UserId(2), destination(origin, 90.0, 10.0)),
        ]
        .into();
        assert!((single.total_variation(&locs).km - 20.0).abs() < 1e-9);

        let partial: HashMap<UserId, GeoPoint> = [(UserId(1), origin)].into();
        let tv = tri.total_variation(&partial);
        assert_eq!(tv.km, 0.0);
        assert_eq!(tv.skipped_edges, 3);
    }
}
