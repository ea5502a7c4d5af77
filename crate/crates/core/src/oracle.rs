//! Brute-force and analytic reference values.

use crate::cantor::{CantorKind, CantorSet, CantorSpec};
use crate::error::{Error, Result};
use crate::graph::ChainGraph;

pub const MAX_FINITE_NODES: usize = 12;

/// A finite metric space with a time-`T` successor map.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChainSystem {
    dist: Vec<Vec<f64>>,
    successor: Vec<usize>,
    max_len: usize,
}

impl FiniteChainSystem {
    /// Chain length cap defaults to `nodes`, which never loses an optimum:
    /// with nonnegative costs an optimal chain need not revisit a node, so
    /// paths need at most `nodes - 1` hops and loops at most `nodes`.
    pub fn new(dist: Vec<Vec<f64>>, successor: Vec<usize>) -> Result<Self> {
        let n = dist.len();
        Self::with_max_len(dist, successor, n)
    }

    pub fn with_max_len(dist: Vec<Vec<f64>>, successor: Vec<usize>, max_len: usize) -> Result<Self> {
        let n = dist.len();
        if n == 0 || n > MAX_FINITE_NODES {
            return Err(Error::Input(format!("finite system needs 1..={MAX_FINITE_NODES} nodes, got {n}")));
        }
        if successor.len() != n || successor.iter().any(|&s| s >= n) {
            return Err(Error::Input("successor map must send nodes to nodes".into()));
        }
        if max_len == 0 {
            return Err(Error::Input("chain length cap must be positive".into()));
        }
        if dist.iter().any(|row| row.len() != n) {
            return Err(Error::Input("distance matrix must be square".into()));
        }
        let tol = |a: f64| 1e-12 * a.abs().max(1.0);
        for i in 0..n {
            if dist[i][i] != 0.0 {
                return Err(Error::Input(format!("d({i},{i}) must be 0")));
            }
            for j in 0..n {
                let d = dist[i][j];
                if !(d.is_finite() && d >= 0.0) || d != dist[j][i] || (i != j && d == 0.0) {
                    return Err(Error::Input(format!("d({i},{j}) = {d} is not a metric value")));
                }
                for k in 0..n {
                    if d > dist[i][k] + dist[k][j] + tol(d) {
                        return Err(Error::Input(format!("triangle inequality fails at ({i},{k},{j})")));
                    }
                }
            }
        }
        Ok(Self {
            dist,
            successor,
            max_len,
        })
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a][b]
    }

    pub fn successor(&self, a: usize) -> usize {
        self.successor[a]
    }

    /// Hop `u -> w` costs `d(succ(u), w)`.
    pub fn hop_cost(&self, u: usize, w: usize) -> f64 {
        self.dist[self.successor[u]][w]
    }

    /// The complete graph whose paths are exactly the chains of this system.
    pub fn to_graph(&self) -> Result<ChainGraph> {
        let n = self.len();
        let arcs: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|u| (0..n).map(move |w| (u, w)))
            .map(|(u, w)| (u, w, self.hop_cost(u, w)))
            .collect();
        ChainGraph::from_arcs(n, &arcs)
    }
}

/// Minimum of `Σ d(succ(x_i), x_{i+1})` over chains `x = x_0, …, x_k = y`
/// with `1 <= k <= max_len`, by exhaustive enumeration of chains whose
/// nodes are pairwise distinct (except `x_k = x_0` when `x = y`).
pub fn brute_chain_cost(sys: &FiniteChainSystem, x: usize, y: usize) -> f64 {
    let n = sys.len();
    let mut used = vec![false; n];
    used[x] = true;
    let mut best = f64::INFINITY;
    extend(sys, y, x, 0.0, 0, &mut used, &mut best);
    best
}

fn extend(
    sys: &FiniteChainSystem,
    y: usize,
    at: usize,
    cost: f64,
    hops: usize,
    used: &mut [bool],
    best: &mut f64,
) {
    if hops == sys.max_len {
        return;
    }
    for w in 0..sys.len() {
        let c = cost + sys.hop_cost(at, w);
        // costs are nonnegative, so a prefix at least as expensive as the
        // best complete chain cannot improve it
        if c >= *best {
            continue;
        }
        if w == y {
            *best = c;
            continue;
        }
        if used[w] {
            continue;
        }
        used[w] = true;
        extend(sys, y, w, c, hops + 1, used, best);
        used[w] = false;
    }
}

/// Metric used by [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceMetric {
    /// Points in the unit square, Euclidean distance.
    Euclidean,
    /// Points on a 0..=20 integer lattice, L1 distance (all sums exact).
    IntegerL1,
}

/// A random system on `n` points with a random successor map.
pub fn random_instance<R: rand::Rng>(rng: &mut R, n: usize, metric: InstanceMetric) -> Result<FiniteChainSystem> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = match metric {
            InstanceMetric::Euclidean => [rng.gen::<f64>(), rng.gen::<f64>()],
            InstanceMetric::IntegerL1 => [rng.gen_range(0..=20) as f64, rng.gen_range(0..=20) as f64],
        };
        // distinct points keep the distance a metric
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    let dist = pts
        .iter()
        .map(|a| {
            pts.iter()
                .map(|b| match metric {
                    InstanceMetric::Euclidean => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
                    InstanceMetric::IntegerL1 => (a[0] - b[0]).abs() + (a[1] - b[1]).abs(),
                })
                .collect()
        })
        .collect();
    let succ = (0..n).map(|_| rng.gen_range(0..n)).collect();
    FiniteChainSystem::new(dist, succ)
}

/// Total jump length any loop based outside `K` must pay: `μ(K)`.
pub fn cantor_loop_bound(spec: &CantorSpec) -> Result<f64> {
    spec.validate()?;
    match spec.kind {
        CantorKind::Null => Ok(0.0),
        CantorKind::Fat => Ok(CantorSet::build(spec)?.measure()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64], succ: Vec<usize>) -> FiniteChainSystem {
        let dist = points
            .iter()
            .map(|a| points.iter().map(|b| (a - b).abs()).collect())
            .collect();
        FiniteChainSystem::new(dist, succ).unwrap()
    }

    #[test]
    fn successor_costs_nothing() {
        let s = line(&[0.0, 1.0, 3.0], vec![1, 2, 0]);
        assert_eq!(brute_chain_cost(&s, 0, 1), 0.0);
        assert_eq!(brute_chain_cost(&s, 0, 0), 0.0);
    }

    #[test]
    fn two_fixed_points_cost_one_jump() {
        let s = line(&[0.0, 2.5], vec![0, 1]);
        assert_eq!(brute_chain_cost(&s, 0, 1), 2.5);
        assert_eq!(brute_chain_cost(&s, 0, 0), 0.0);
    }

    #[test]
    fn rejects_non_metric() {
        let bad = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        assert!(FiniteChainSystem::new(bad, vec![0, 1, 2]).is_err());
        assert!(FiniteChainSystem::new(vec![vec![0.0]], vec![1]).is_err());
    }

    #[test]
    fn loop_bounds() {
        let fat = cantor_loop_bound(&CantorSpec::fat(0.25, 12)).unwrap();
        assert!((fat - 0.25).abs() <= 0.25 * 2f64.powi(-12));
        let half = cantor_loop_bound(&CantorSpec::fat(0.5, 12)).unwrap();
        assert!((half - 0.5).abs() <= 1.3e-4);
        assert_eq!(cantor_loop_bound(&CantorSpec::null(5)).unwrap(), 0.0);
    }
}
