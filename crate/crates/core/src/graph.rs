//! Discretised strong-chain transition graphs.
//!
//! A hop from grid node `u` flows for one of the configured flow times `t`
//! and then jumps from `ψ_t(u)` to a grid node `w`; its weight is the jump
//! length `d(ψ_t(u), w)`. Every graph path is therefore a genuine strong
//! chain with `t_i ≥ T`, and path costs bound the true chain cost from above.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{trajectory, FlowSystem};
use crate::grid::GridSpec;

/// Flow-time ladder and jump radius for [`build_chain_graph_with`].
#[derive(Debug, Clone, Serialize)]
pub struct ChainParams {
    /// Minimum flow time `T`.
    pub t_min: f64,
    /// Hop durations, all `>= T`.
    pub flow_times: Vec<f64>,
    /// Jump radius; `None` means `3 * h_max`.
    pub r_jump: Option<f64>,
    /// Integration step; `None` means the flow's default for the grid.
    pub step: Option<f64>,
    /// Allow jumps longer than `r_jump` through a transit layer whose moves
    /// cost their Euclidean length.
    pub long_jumps: bool,
}

impl ChainParams {
    /// Flow times `{T, 1.5T, 2T, 3T}`, jump radius `3 h_max`.
    pub fn new(t_min: f64) -> Self {
        Self {
            t_min,
            flow_times: vec![t_min, 1.5 * t_min, 2.0 * t_min, 3.0 * t_min],
            r_jump: None,
            step: None,
            long_jumps: true,
        }
    }

    pub fn with_flow_times(mut self, times: Vec<f64>) -> Self {
        self.flow_times = times;
        self
    }

    pub fn with_r_jump(mut self, r: f64) -> Self {
        self.r_jump = Some(r);
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn without_long_jumps(mut self) -> Self {
        self.long_jumps = false;
        self
    }
}

/// Immutable CSR graph over grid nodes.
#[derive(Debug, Clone)]
pub struct ChainGraph {
    grid: Option<GridSpec>,
    t_min: f64,
    flow_times: Vec<f64>,
    r_jump: f64,
    step: f64,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    edge_time: Vec<u8>,
    /// `endpoint_snap[u * m + k]`: distance from `ψ_{t_k}(u)` to its nearest
    /// active node.
    endpoint_snap: Vec<f64>,
    forced_snaps: usize,
    transit: Option<Transit>,
}

/// Neighbour moves of the long-jump layer.
#[derive(Debug, Clone)]
struct Transit {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

pub fn build_chain_graph(
    sys: &FlowSystem,
    grid: &GridSpec,
    t_min: f64,
    flow_times: &[f64],
    r_jump: f64,
) -> Result<ChainGraph> {
    let params = ChainParams {
        t_min,
        flow_times: flow_times.to_vec(),
        r_jump: Some(r_jump),
        step: None,
        long_jumps: true,
    };
    build_chain_graph_with(sys, grid, &params)
}

pub fn build_chain_graph_with(
    sys: &FlowSystem,
    grid: &GridSpec,
    params: &ChainParams,
) -> Result<ChainGraph> {
    if grid.torus() != sys.torus() {
        return Err(Error::config("grid and flow live on different tori"));
    }
    let t_min = params.t_min;
    if !(t_min > 0.0 && t_min.is_finite()) {
        return Err(Error::config(format!("T must be positive, got {t_min}")));
    }
    if params.flow_times.is_empty() || params.flow_times.len() > u8::MAX as usize {
        return Err(Error::config("need between 1 and 255 flow times"));
    }
    let mut times = params.flow_times.clone();
    if times.iter().any(|t| !(t.is_finite() && *t >= t_min)) {
        return Err(Error::config("every flow time must be finite and >= T"));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let h_max = grid.h_max();
    let r_jump = params.r_jump.unwrap_or(3.0 * h_max);
    if !(r_jump >= h_max) {
        return Err(Error::config(format!(
            "jump radius {r_jump} is smaller than grid spacing {h_max}"
        )));
    }
    let step = params.step.unwrap_or_else(|| sys.default_step(grid.h_min()));
    let n = grid.len();
    let m = times.len();
    let active: Vec<usize> = (0..n).filter(|&i| grid.is_active(i)).collect();

    struct NodeEdges {
        edges: Vec<(u32, f64, u8)>,
        snaps: Vec<f64>,
        forced: usize,
    }

    let per_node: Vec<NodeEdges> = (0..n)
        .into_par_iter()
        .map(|u| -> Result<NodeEdges> {
            if !grid.is_active(u) {
                return Ok(NodeEdges {
                    edges: Vec::new(),
                    snaps: vec![f64::INFINITY; m],
                    forced: 0,
                });
            }
            let x0 = grid.coords(u);
            let ends = trajectory(sys, &x0, &times, step)?;
            let mut near = Vec::new();
            let mut edges: Vec<(u32, f64, u8)> = Vec::new();
            let mut snaps = Vec::with_capacity(m);
            let mut forced = 0;
            for (k, p) in ends.iter().enumerate() {
                grid.nodes_within(p, r_jump, &mut near);
                near.retain(|&(w, _)| grid.is_active(w));
                if near.is_empty() {
                    // nearest active node lies beyond r_jump
                    let (w, d) = active
                        .iter()
                        .map(|&w| (w, grid.torus().dist(p, &grid.coords(w))))
                        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                        .expect("mask keeps at least one node");
                    near.push((w, d));
                    forced += 1;
                }
                let snap = near.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                snaps.push(snap);
                edges.extend(near.iter().map(|&(w, d)| (w as u32, d, k as u8)));
            }
            // keep the cheapest hop per target
            edges.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
            edges.dedup_by_key(|e| e.0);
            Ok(NodeEdges {
                edges,
                snaps,
                forced,
            })
        })
        .collect::<Result<_>>()?;

    let mut offsets = Vec::with_capacity(n + 1);
    let total: usize = per_node.iter().map(|p| p.edges.len()).sum();
    let mut targets = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut edge_time = Vec::with_capacity(total);
    let mut endpoint_snap = Vec::with_capacity(n * m);
    let mut forced_snaps = 0;
    offsets.push(0);
    for p in per_node {
        for (w, d, k) in p.edges {
            targets.push(w);
            weights.push(d);
            edge_time.push(k);
        }
        offsets.push(targets.len());
        endpoint_snap.extend(p.snaps);
        forced_snaps += p.forced;
    }

    let transit = params.long_jumps.then(|| build_transit(grid));

    Ok(ChainGraph {
        grid: Some(grid.clone()),
        t_min,
        flow_times: times,
        r_jump,
        step,
        offsets,
        targets,
        weights,
        edge_time,
        endpoint_snap,
        forced_snaps,
        transit,
    })
}

/// King-move adjacency over all grid nodes, weighted by Euclidean length.
fn build_transit(grid: &GridSpec) -> Transit {
    let n = grid.len();
    let d = grid.dims();
    let h = grid.spacings();
    let mut moves: Vec<(Vec<i64>, f64)> = Vec::new();
    let count = 3usize.pow(d as u32);
    for code in 0..count {
        let mut c = code;
        let mut off = vec![0i64; d];
        for o in off.iter_mut() {
            *o = (c % 3) as i64 - 1;
            c /= 3;
        }
        if off.iter().all(|&o| o == 0) {
            continue;
        }
        let len = off
            .iter()
            .zip(&h)
            .map(|(&o, &hj)| (o as f64 * hj).powi(2))
            .sum::<f64>()
            .sqrt();
        moves.push((off, len));
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(n * moves.len());
    let mut weights = Vec::with_capacity(n * moves.len());
    let mut multi = vec![0usize; d];
    let mut other = vec![0usize; d];
    offsets.push(0);
    for u in 0..n {
        grid.multi_index(u, &mut multi);
        let start = targets.len();
        for (off, len) in &moves {
            for j in 0..d {
                let c = grid.counts()[j] as i64;
                other[j] = (multi[j] as i64 + off[j]).rem_euclid(c) as usize;
            }
            let w = grid.index(&other);
            if w != u {
                targets.push(w as u32);
                weights.push(*len);
            }
        }
        // tiny axes wrap onto the same neighbour twice
        let mut pairs: Vec<(u32, f64)> = targets[start..]
            .iter()
            .copied()
            .zip(weights[start..].iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pairs.dedup_by_key(|p| p.0);
        targets.truncate(start);
        weights.truncate(start);
        for (t, w) in pairs {
            targets.push(t);
            weights.push(w);
        }
        offsets.push(targets.len());
    }
    Transit {
        offsets,
        targets,
        weights,
    }
}

impl ChainGraph {
    /// Graph from explicit weighted arcs `(from, to, weight)`, with no grid.
    pub fn from_arcs(nodes: usize, arcs: &[(usize, usize, f64)]) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::config("empty graph"));
        }
        let mut sorted: Vec<(usize, usize, f64)> = arcs.to_vec();
        for &(u, w, d) in &sorted {
            if u >= nodes || w >= nodes {
                return Err(Error::Input(format!("arc {u}->{w} out of range")));
            }
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Input(format!("arc weight {d} is not a nonnegative real")));
            }
        }
        sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        sorted.dedup_by_key(|a| (a.0, a.1));
        let mut offsets = vec![0; nodes + 1];
        for &(u, _, _) in &sorted {
            offsets[u + 1] += 1;
        }
        for i in 0..nodes {
            offsets[i + 1] += offsets[i];
        }
        Ok(Self {
            grid: None,
            t_min: 0.0,
            flow_times: Vec::new(),
            r_jump: f64::INFINITY,
            step: 0.0,
            offsets,
            targets: sorted.iter().map(|a| a.1 as u32).collect(),
            weights: sorted.iter().map(|a| a.2).collect(),
            edge_time: vec![0; sorted.len()],
            endpoint_snap: Vec::new(),
            forced_snaps: 0,
            transit: None,
        })
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn flow_times(&self) -> &[f64] {
        &self.flow_times
    }

    pub fn r_jump(&self) -> f64 {
        self.r_jump
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn forced_snaps(&self) -> usize {
        self.forced_snaps
    }

    pub fn has_long_jumps(&self) -> bool {
        self.transit.is_some()
    }

    /// Grid spacing, zero for explicit graphs.
    pub fn h_max(&self) -> f64 {
        self.grid.as_ref().map_or(0.0, GridSpec::h_max)
    }

    /// Outgoing arcs `(target, weight, flow-time index)` of `u`.
    pub fn arcs(&self, u: usize) -> impl Iterator<Item = (usize, f64, usize)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        r.map(move |e| {
            (
                self.targets[e] as usize,
                self.weights[e],
                self.edge_time[e] as usize,
            )
        })
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// Snap distance of the hop `u --t_k-->`; zero for explicit graphs.
    pub fn endpoint_snap(&self, u: usize, k: usize) -> f64 {
        if self.endpoint_snap.is_empty() {
            0.0
        } else {
            self.endpoint_snap[u * self.flow_times.len() + k]
        }
    }

    pub(crate) fn transit_arcs(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let t = self.transit.as_ref();
        let range = t.map_or(0..0, |t| t.offsets[u]..t.offsets[u + 1]);
        range.map(move |e| {
            let t = t.unwrap();
            (t.targets[e] as usize, t.weights[e])
        })
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }
}
