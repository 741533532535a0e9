//! Base communication topology, broadcast delivery and joint-connectivity checks.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_TOPOLOGY_ATTEMPTS: usize = 1000;

/// Undirected base graph. Directed per-step graphs come from who broadcasts.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    adjacency: Vec<Vec<bool>>,
    positions: Option<Vec<[f64; 2]>>,
}

impl Topology {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("topology needs at least one node"));
        }
        let mut adjacency = vec![vec![false; n]; n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            adjacency[a][b] = true;
            adjacency[b][a] = true;
        }
        Ok(Topology {
            adjacency,
            positions: None,
        })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::from_edges(n, &edges)
    }

    /// Connects every pair of points closer than `radius`.
    pub fn geometric(positions: Vec<[f64; 2]>, radius: f64) -> Self {
        let n = positions.len();
        let mut adjacency = vec![vec![false; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let dx = positions[a][0] - positions[b][0];
                let dy = positions[a][1] - positions[b][1];
                if dx * dx + dy * dy <= radius * radius {
                    adjacency[a][b] = true;
                    adjacency[b][a] = true;
                }
            }
        }
        Topology {
            adjacency,
            positions: Some(positions),
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i]
            .iter()
            .enumerate()
            .filter_map(|(j, &e)| e.then_some(j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn mean_degree(&self) -> f64 {
        let total: usize = (0..self.len()).map(|i| self.degree(i)).sum();
        total as f64 / self.len() as f64
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.len();
        reachable(n, 0, |i, j| self.adjacency[i][j]).iter().all(|&r| r)
    }

    pub fn edge_count(&self) -> usize {
        (0..self.len()).map(|i| self.degree(i)).sum::<usize>() / 2
    }
}

fn reachable(n: usize, start: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// How the base graph radius is picked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Connectivity {
    /// Radius chosen so that the expected mean degree matches.
    MeanDegree(f64),
    Radius(f64),
}

/// Probability that two uniform points in the unit square are within `r`,
/// valid for `0 ≤ r ≤ 1`.
fn unit_square_distance_cdf(r: f64) -> f64 {
    std::f64::consts::PI * r * r - 8.0 / 3.0 * r.powi(3) + 0.5 * r.powi(4)
}

/// Radius whose expected mean degree over `n` uniform nodes is `degree`.
/// Targets beyond what `r = 1` gives fall back to the square's diagonal.
pub fn radius_for_degree(n: usize, degree: f64) -> f64 {
    let target = degree / (n as f64 - 1.0);
    if target >= unit_square_distance_cdf(1.0) {
        return std::f64::consts::SQRT_2;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if unit_square_distance_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Random geometric graph on the unit square, resampled until connected.
pub fn generate_topology<R: Rng + ?Sized>(
    n: usize,
    connectivity: Connectivity,
    rng: &mut R,
) -> Result<Topology> {
    if n < 2 {
        return Err(Error::invalid("topology generation needs at least two nodes"));
    }
    let radius = match connectivity {
        Connectivity::MeanDegree(d) if d > 0.0 => radius_for_degree(n, d),
        Connectivity::Radius(r) if r > 0.0 => r,
        other => return Err(Error::invalid(format!("invalid connectivity {other:?}"))),
    };
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        let positions = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let topology = Topology::geometric(positions, radius);
        if topology.is_connected() {
            return Ok(topology);
        }
    }
    Err(Error::TopologyGeneration {
        attempts: MAX_TOPOLOGY_ATTEMPTS,
    })
}

/// Who broadcast and who heard whom at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundLog {
    pub step: usize,
    pub broadcasters: Vec<bool>,
    /// Sender ids per receiving node, ascending.
    pub inboxes: Vec<Vec<usize>>,
    pub nob: usize,
}

impl RoundLog {
    /// Whether the directed edge `from → to` exists in this round.
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.inboxes[to].binary_search(&from).is_ok()
    }
}

/// Broadcasts reach every base neighbour of the sender.
pub fn deliver(base: &Topology, broadcasters: &[bool], step: usize) -> Result<RoundLog> {
    if broadcasters.len() != base.len() {
        return Err(Error::invalid(format!(
            "{} broadcast flags for {} nodes",
            broadcasters.len(),
            base.len()
        )));
    }
    let inboxes = (0..base.len())
        .map(|i| base.neighbors(i).filter(|&j| broadcasters[j]).collect())
        .collect();
    Ok(RoundLog {
        step,
        broadcasters: broadcasters.to_vec(),
        inboxes,
        nob: broadcasters.iter().filter(|&&g| g).count(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PjcResult {
    pub is_pjc: bool,
    /// Shortest prefix of the window whose union graph is strongly connected.
    pub t_min: Option<usize>,
}

/// Tests strong connectivity of the union of the rounds' directed graphs.
pub fn pjc_check(window: &[RoundLog]) -> Result<PjcResult> {
    let first = window
        .first()
        .ok_or_else(|| Error::invalid("pjc_check needs a nonempty window"))?;
    let n = first.broadcasters.len();
    let mut union = vec![vec![false; n]; n];
    for (t, round) in window.iter().enumerate() {
        if round.inboxes.len() != n {
            return Err(Error::invalid("rounds in the window disagree on node count"));
        }
        for (to, inbox) in round.inboxes.iter().enumerate() {
            for &from in inbox {
                union[from][to] = true;
            }
        }
        let forward = reachable(n, 0, |i, j| union[i][j]);
        let backward = reachable(n, 0, |i, j| union[j][i]);
        if forward.iter().chain(&backward).all(|&r| r) {
            return Ok(PjcResult {
                is_pjc: true,
                t_min: Some(t + 1),
            });
        }
    }
    Ok(PjcResult {
        is_pjc: false,
        t_min: None,
    })
}
