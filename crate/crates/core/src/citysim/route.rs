//! Route sampling over the segment graph of a city.
//!
//! Graph nodes are segment endpoints (merged when they coincide), edges are
//! road segments weighted by length.

use std::collections::{BTreeMap, HashMap};

use petgraph::algo::astar;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attrspace::PolicySpec;
use crate::segtree::Interval;

use super::city::{CityModel, Point, RoadSegment, StreetId};

/// Relative tolerance on the straight-line source–destination distance.
pub const LENGTH_TOLERANCE: f64 = 0.01;

/// Sources tried before giving up.
pub const MAX_ATTEMPTS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("route length must be positive, got {0}")]
    BadLength(f64),
    #[error("no destination at distance {length} m within {attempts} attempts")]
    NoDestination { length: f64, attempts: usize },
    #[error("city has no road segments")]
    EmptyCity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub source: Point,
    pub destination: Point,
    pub length: f64,
    /// Road segments in travel order.
    pub path: Vec<RoadSegment>,
}

impl RouteSpec {
    /// Maximal runs of consecutive segments per street.
    pub fn intervals(&self) -> Vec<(StreetId, Interval)> {
        let mut per_street: BTreeMap<StreetId, Vec<u32>> = BTreeMap::new();
        for s in &self.path {
            per_street.entry(s.street).or_default().push(s.segment);
        }
        let mut out = Vec::new();
        for (street, mut segs) in per_street {
            segs.sort_unstable();
            segs.dedup();
            let mut lo = segs[0];
            let mut hi = lo;
            for &s in &segs[1..] {
                if s == hi + 1 {
                    hi = s;
                } else {
                    out.push((street, Interval::new(lo, hi).expect("lo <= hi")));
                    lo = s;
                    hi = s;
                }
            }
            out.push((street, Interval::new(lo, hi).expect("lo <= hi")));
        }
        out
    }

    pub fn to_policy_spec(&self, validity: Interval) -> PolicySpec {
        PolicySpec {
            authorized: self.intervals(),
            validity,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoadGraph {
    graph: UnGraph<Point, (RoadSegment, f64)>,
}

fn key(p: &Point) -> (i64, i64) {
    ((p.x * 1000.0).round() as i64, (p.y * 1000.0).round() as i64)
}

impl RoadGraph {
    pub fn build(city: &CityModel) -> Self {
        let mut graph = UnGraph::new_undirected();
        let mut index: HashMap<(i64, i64), NodeIndex> = HashMap::new();
        let mut node = |g: &mut UnGraph<Point, (RoadSegment, f64)>, p: Point| {
            *index.entry(key(&p)).or_insert_with(|| g.add_node(p))
        };
        for street in &city.streets {
            for seg in 1..=street.segments {
                let (a, b) = street.segment_endpoints(seg);
                let (na, nb) = (node(&mut graph, a), node(&mut graph, b));
                let at = RoadSegment {
                    street: street.id,
                    segment: seg,
                };
                graph.add_edge(na, nb, (at, a.distance(&b)));
            }
        }
        RoadGraph { graph }
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    /// Shortest path by length; `None` when disconnected.
    pub fn shortest_path(&self, from: NodeIndex, to: NodeIndex) -> Option<Vec<RoadSegment>> {
        let goal = self.graph[to];
        let (_, nodes) = astar(
            &self.graph,
            from,
            |n| n == to,
            |e| e.weight().1,
            |n| self.graph[n].distance(&goal),
        )?;
        let path = nodes
            .windows(2)
            .map(|w| {
                self.graph
                    .edges_connecting(w[0], w[1])
                    .min_by(|x, y| x.weight().1.total_cmp(&y.weight().1))
                    .expect("consecutive path nodes are adjacent")
                    .weight()
                    .0
            })
            .collect();
        Some(path)
    }

    /// Uniform source node; destination uniform among nodes whose
    /// straight-line distance from the source is within
    /// [`LENGTH_TOLERANCE`] of `length`.
    pub fn sample_route(&self, length: f64, rng: &mut impl Rng) -> Result<RouteSpec, RouteError> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(RouteError::BadLength(length));
        }
        if self.graph.edge_count() == 0 {
            return Err(RouteError::EmptyCity);
        }
        let nodes: Vec<NodeIndex> = self.graph.node_indices().collect();
        let tol = length * LENGTH_TOLERANCE;
        for _ in 0..MAX_ATTEMPTS {
            let src = *nodes.choose(rng).expect("non-empty");
            let sp = self.graph[src];
            let locus: Vec<NodeIndex> = nodes
                .iter()
                .copied()
                .filter(|n| (self.graph[*n].distance(&sp) - length).abs() <= tol)
                .collect();
            let Some(&dst) = locus.choose(rng) else {
                continue;
            };
            let Some(path) = self.shortest_path(src, dst) else {
                continue;
            };
            return Ok(RouteSpec {
                source: sp,
                destination: self.graph[dst],
                length,
                path,
            });
        }
        Err(RouteError::NoDestination {
            length,
            attempts: MAX_ATTEMPTS,
        })
    }
}

pub fn sample_route(city: &CityModel, length: f64, rng: &mut impl Rng) -> Result<RouteSpec, RouteError> {
    RoadGraph::build(city).sample_route(length, rng)
}
