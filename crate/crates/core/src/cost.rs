//! Single-source chain costs over a [`ChainGraph`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowSystem;
use crate::graph::{build_chain_graph_with, ChainGraph, ChainParams};
use crate::grid::GridSpec;

/// Default snap budget multiplier.
pub const C_SNAP: f64 = 4.0;

/// Snap budget of a path with `hops` chain hops.
pub fn slack(c_snap: f64, h_max: f64, hops: u32) -> f64 {
    c_snap * h_max * f64::from(hops.max(1))
}

/// Approximation of `L_T(source, ·)` on the grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CostField {
    pub source: usize,
    pub t_min: f64,
    /// Cheapest path cost using at least one hop; `values[source]` is the
    /// cheapest loop. `+inf` marks unreachable nodes.
    pub values: Vec<f64>,
    /// Hop count of the returned path.
    pub hops: Vec<u32>,
    /// Sum of hop snap distances along the returned path.
    pub snap_sum: Vec<f64>,
    pub h_max: f64,
    pub r_jump: f64,
    pub flow_times: Vec<f64>,
    pub c_snap: f64,
}

impl CostField {
    /// Slack `τ = c_snap · h_max · hops` of the path to `node`.
    pub fn slack(&self, node: usize) -> f64 {
        slack(self.c_snap, self.h_max, self.hops[node])
    }

    pub fn max_slack(&self) -> f64 {
        (0..self.values.len())
            .filter(|&i| self.values[i].is_finite())
            .map(|i| self.slack(i))
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, ties broken by the smaller node index
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Total jump length (strong chains).
    Sum,
    /// Largest single jump (ordinary chains).
    Bottleneck,
}

pub(crate) struct Labels {
    pub cost: Vec<f64>,
    pub hops: Vec<u32>,
    pub snap: Vec<f64>,
}

struct State {
    cost: Vec<f64>,
    hops: Vec<u32>,
    snap: Vec<f64>,
    /// Bottleneck mode: largest completed jump before the current one.
    base: Vec<f64>,
    /// Bottleneck mode: length of the jump that reached the slot.
    jump: Vec<f64>,
    heap: BinaryHeap<Entry>,
}

impl State {
    fn relax(&mut self, slot: usize, c: f64, hops: u32, snap: f64, base: f64, jump: f64) {
        if c < self.cost[slot] {
            self.cost[slot] = c;
            self.hops[slot] = hops;
            self.snap[slot] = snap;
            self.base[slot] = base;
            self.jump[slot] = jump;
            self.heap.push(Entry {
                cost: c,
                node: slot as u32,
            });
        }
    }
}

/// Label-setting search from `source` over paths with at least one hop.
/// Slots `0..n` are chain nodes, `n..2n` the long-jump transit layer.
/// A long jump continues the jump that landed on its entry node; in
/// bottleneck mode its accumulated length counts as one jump, so there the
/// search is a heuristic upper bound rather than an exact minimax.
/// Stops as soon as `stop_at` is settled.
pub(crate) fn search(g: &ChainGraph, source: usize, mode: Mode, stop_at: Option<usize>) -> Labels {
    let n = g.node_count();
    let transit = g.has_long_jumps();
    let slots = if transit { 2 * n } else { n };
    let mut st = State {
        cost: vec![f64::INFINITY; slots],
        hops: vec![0; slots],
        snap: vec![0.0; slots],
        base: vec![0.0; slots],
        jump: vec![0.0; slots],
        heap: BinaryHeap::new(),
    };
    let mut done = vec![false; slots];
    let active = |w: usize| g.grid().map_or(true, |gr| gr.is_active(w));
    let land = |prev: f64, wt: f64| match mode {
        Mode::Sum => prev + wt,
        Mode::Bottleneck => prev.max(wt),
    };

    for (w, wt, k) in g.arcs(source) {
        st.relax(w, land(0.0, wt), 1, g.endpoint_snap(source, k), 0.0, wt);
    }

    while let Some(Entry { cost: c, node }) = st.heap.pop() {
        let v = node as usize;
        if done[v] || c > st.cost[v] {
            continue;
        }
        done[v] = true;
        if Some(v) == stop_at {
            break;
        }
        let (h, s, base, jump) = (st.hops[v], st.snap[v], st.base[v], st.jump[v]);
        if v < n {
            if transit {
                st.relax(n + v, c, h, s, base, jump);
            }
            for (w, wt, k) in g.arcs(v) {
                st.relax(w, land(c, wt), h + 1, s + g.endpoint_snap(v, k), c, wt);
            }
        } else {
            let t = v - n;
            if active(t) {
                st.relax(t, c, h, s, base, jump);
            }
            for (t2, len) in g.transit_arcs(t) {
                let (nc, nj) = match mode {
                    Mode::Sum => (c + len, jump + len),
                    Mode::Bottleneck => (base.max(jump + len), jump + len),
                };
                st.relax(n + t2, nc, h, s, base, nj);
            }
        }
    }
    st.cost.truncate(n);
    st.hops.truncate(n);
    st.snap.truncate(n);
    Labels {
        cost: st.cost,
        hops: st.hops,
        snap: st.snap,
    }
}

fn field_from(g: &ChainGraph, source: usize, labels: Labels) -> CostField {
    CostField {
        source,
        t_min: g.t_min(),
        values: labels.cost,
        hops: labels.hops,
        snap_sum: labels.snap,
        h_max: g.h_max(),
        r_jump: g.r_jump(),
        flow_times: g.flow_times().to_vec(),
        c_snap: C_SNAP,
    }
}

/// Strong-chain cost field `L_T(source, ·)`.
pub fn chain_cost(g: &ChainGraph, source: usize) -> Result<CostField> {
    if source >= g.node_count() {
        return Err(Error::Input(format!("source node {source} out of range")));
    }
    let labels = search(g, source, Mode::Sum, None);
    if g.has_long_jumps() {
        if let Some(grid) = g.grid() {
            if let Some(w) = (0..g.node_count())
                .find(|&w| grid.is_active(w) && !labels.cost[w].is_finite())
            {
                return Err(Error::Internal(format!(
                    "node {w} unreachable from {source} despite long jumps"
                )));
            }
        }
    }
    Ok(field_from(g, source, labels))
}

/// Ordinary-chain cost: the smallest achievable largest jump.
pub fn bottleneck_cost(g: &ChainGraph, source: usize) -> Result<CostField> {
    if source >= g.node_count() {
        return Err(Error::Input(format!("source node {source} out of range")));
    }
    Ok(field_from(g, source, search(g, source, Mode::Bottleneck, None)))
}

/// Cheapest loop at `source`, found with an early-exit search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopCost {
    pub value: f64,
    pub hops: u32,
    pub snap_sum: f64,
}

pub(crate) fn loop_cost(g: &ChainGraph, source: usize, mode: Mode) -> LoopCost {
    let l = search(g, source, mode, Some(source));
    LoopCost {
        value: l.cost[source],
        hops: l.hops[source],
        snap_sum: l.snap[source],
    }
}

/// Cost fields from `source` for each `T` in ascending `t_list`; hop times
/// scale with `T` as in `base`. The last element stands in for `L_∞`.
pub fn cost_monotonicity_probe(
    sys: &FlowSystem,
    grid: &GridSpec,
    source: usize,
    t_list: &[f64],
    base: &ChainParams,
) -> Result<Vec<CostField>> {
    if t_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config("T list must be ascending"));
    }
    let multipliers: Vec<f64> = base.flow_times.iter().map(|t| t / base.t_min).collect();
    t_list
        .iter()
        .map(|&t| {
            let mut p = base.clone();
            p.t_min = t;
            p.flow_times = multipliers.iter().map(|m| m * t).collect();
            let g = build_chain_graph_with(sys, grid, &p)?;
            chain_cost(&g, source)
        })
        .collect()
}
