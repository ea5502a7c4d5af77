//! Chain-recurrence classification by refinement ladders.
//!
//! For every node of the coarsest grid the loop cost `L_T(x,x)` is computed
//! on each nested grid of the ladder. A node is an SCR candidate when the
//! strong-chain loop costs stay within slack at every level and shrink
//! under refinement; CR uses the same test on bottleneck (largest jump)
//! loop costs. The ratio test is a heuristic: the grid values converge to
//! `L_T` for Lipschitz flows only empirically.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{loop_cost, slack, Mode, C_SNAP};
use crate::error::{Error, Result};
use crate::flow::FlowSystem;
use crate::graph::{build_chain_graph_with, ChainGraph, ChainParams};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub c_snap: f64,
    /// Largest accepted ratio between consecutive ladder levels.
    pub ratio_max: f64,
    /// Values at or below this count as exact zeros in the ratio test.
    pub zero_floor: f64,
    /// A finest-level value at most `c_floor · h_coarse` is below the
    /// resolution of the classified grid and waives the ratio test.
    pub c_floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            c_snap: C_SNAP,
            ratio_max: 0.75,
            zero_floor: 1e-12,
            c_floor: 0.9,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_snap > 0.0
            && self.c_snap.is_finite()
            && self.ratio_max > 0.0
            && self.ratio_max < 1.0
            && self.zero_floor >= 0.0
            && self.zero_floor.is_finite()
            && self.c_floor >= 0.0
            && self.c_floor.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid thresholds {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecurrenceClass {
    #[serde(rename = "SCR-candidate")]
    Scr,
    #[serde(rename = "CR-only-candidate")]
    CrOnly,
    #[serde(rename = "non-recurrent-candidate")]
    NonRecurrent,
}

impl RecurrenceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Scr => "SCR-candidate",
            Self::CrOnly => "CR-only-candidate",
            Self::NonRecurrent => "non-recurrent-candidate",
        }
    }

    pub fn is_cr(self) -> bool {
        self != Self::NonRecurrent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub counts: Vec<usize>,
    pub h_max: f64,
    pub r_jump: f64,
    pub step: f64,
    pub edges: usize,
    pub forced_snaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecurrence {
    /// Index in the coarsest grid.
    pub node: usize,
    pub coords: Vec<f64>,
    /// Strong loop cost per level.
    pub strong: Vec<f64>,
    /// Slack of the strong loop per level.
    pub strong_slack: Vec<f64>,
    /// Bottleneck loop cost per level; NaN when not computed (SCR nodes).
    pub bottleneck: Vec<f64>,
    /// `strong[l + 1] / strong[l]`.
    pub strong_ratios: Vec<f64>,
    pub bottleneck_ratios: Vec<f64>,
    pub class: RecurrenceClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub system: String,
    pub t_min: f64,
    pub flow_times: Vec<f64>,
    pub thresholds: Thresholds,
    pub levels: Vec<LevelSummary>,
    pub nodes: Vec<NodeRecurrence>,
}

impl RecurrenceReport {
    pub fn count(&self, class: RecurrenceClass) -> usize {
        self.nodes.iter().filter(|n| n.class == class).count()
    }

    pub fn nodes_of(&self, class: RecurrenceClass) -> impl Iterator<Item = &NodeRecurrence> {
        self.nodes.iter().filter(move |n| n.class == class)
    }
}

fn ratio(prev: f64, next: f64, floor: f64) -> f64 {
    if prev <= floor {
        if next <= floor {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        next / prev
    }
}

/// Value within tolerance at every level, and either every consecutive
/// ratio at most `ratio_max` or the finest value below `c_floor · h_coarse`.
pub fn passes_refinement(
    values: &[f64],
    tolerances: &[f64],
    h_coarse: f64,
    thresholds: &Thresholds,
) -> bool {
    let within = values.iter().zip(tolerances).all(|(v, t)| v <= t);
    let shrinking = values
        .windows(2)
        .all(|w| ratio(w[0], w[1], thresholds.zero_floor) <= thresholds.ratio_max);
    let unresolved = values.last().is_some_and(|&v| v <= thresholds.c_floor * h_coarse);
    within && (shrinking || unresolved)
}

/// Classify with default chain parameters for `T`.
pub fn scr_classify(
    sys: &FlowSystem,
    ladder: &[GridSpec],
    t_min: f64,
    thresholds: &Thresholds,
) -> Result<RecurrenceReport> {
    scr_classify_with(sys, ladder, &ChainParams::new(t_min), thresholds)
}

pub fn scr_classify_with(
    sys: &FlowSystem,
    ladder: &[GridSpec],
    params: &ChainParams,
    thresholds: &Thresholds,
) -> Result<RecurrenceReport> {
    thresholds.validate()?;
    if ladder.len() < 2 {
        return Err(Error::config("a refinement ladder needs at least two grids"));
    }
    if let Some(l) = ladder.windows(2).position(|w| !w[0].nests_in(&w[1])) {
        return Err(Error::config(format!("ladder level {} does not nest in level {}", l, l + 1)));
    }
    let graphs: Vec<ChainGraph> = ladder
        .iter()
        .map(|g| build_chain_graph_with(sys, g, params))
        .collect::<Result<_>>()?;
    let coarse = &ladder[0];
    let h_coarse = coarse.h_max();
    let sources: Vec<usize> = (0..coarse.len()).filter(|&i| coarse.is_active(i)).collect();

    let nodes: Vec<NodeRecurrence> = sources
        .par_iter()
        .map(|&node| {
            let mut strong = Vec::with_capacity(graphs.len());
            let mut strong_slack = Vec::with_capacity(graphs.len());
            let mut bottleneck = Vec::with_capacity(graphs.len());
            let mut bottleneck_tol = Vec::with_capacity(graphs.len());
            for (g, grid) in graphs.iter().zip(ladder) {
                let u = coarse.refine_index(node, grid);
                let s = loop_cost(g, u, Mode::Sum);
                strong.push(s.value);
                strong_slack.push(slack(thresholds.c_snap, g.h_max(), s.hops));
            }
            let scr = passes_refinement(&strong, &strong_slack, h_coarse, thresholds);
            // SCR implies CR; bottleneck costs are only needed otherwise
            for (g, grid) in graphs.iter().zip(ladder) {
                let u = coarse.refine_index(node, grid);
                let b = if scr { f64::NAN } else { loop_cost(g, u, Mode::Bottleneck).value };
                bottleneck.push(b);
                bottleneck_tol.push(thresholds.c_snap * g.h_max());
            }
            let ratios = |v: &[f64]| {
                v.windows(2)
                    .map(|w| ratio(w[0], w[1], thresholds.zero_floor))
                    .collect::<Vec<_>>()
            };
            let class = if scr {
                RecurrenceClass::Scr
            } else if passes_refinement(&bottleneck, &bottleneck_tol, h_coarse, thresholds) {
                RecurrenceClass::CrOnly
            } else {
                RecurrenceClass::NonRecurrent
            };
            NodeRecurrence {
                node,
                coords: coarse.coords(node),
                strong_ratios: ratios(&strong),
                bottleneck_ratios: ratios(&bottleneck),
                strong,
                strong_slack,
                bottleneck,
                class,
            }
        })
        .collect();

    let levels = graphs
        .iter()
        .zip(ladder)
        .map(|(g, grid)| LevelSummary {
            counts: grid.counts().to_vec(),
            h_max: grid.h_max(),
            r_jump: g.r_jump(),
            step: g.step(),
            edges: g.edge_count(),
            forced_snaps: g.forced_snaps(),
        })
        .collect();

    Ok(RecurrenceReport {
        system: sys.label().to_string(),
        t_min: params.t_min,
        flow_times: graphs[0].flow_times().to_vec(),
        thresholds: *thresholds,
        levels,
        nodes,
    })
}

/// Nested ladder `base, 2·base, 4·base, …` with `levels` grids.
pub fn doubling_ladder(base: &GridSpec, levels: usize) -> Result<Vec<GridSpec>> {
    if levels == 0 {
        return Err(Error::config("ladder needs at least one level"));
    }
    let mut out = vec![base.clone()];
    for _ in 1..levels {
        let next = out.last().expect("nonempty").refined(2)?;
        out.push(next);
    }
    Ok(out)
}

/// Two-level ladder `[base, factor · base]`.
pub fn two_level_ladder(base: &GridSpec, factor: usize) -> Result<Vec<GridSpec>> {
    Ok(vec![base.clone(), base.refined(factor)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FnField;
    use crate::torus::Torus;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn gradient_circle() -> FlowSystem {
        let f = FnField::new(1, |x, out| out[0] = -(2.0 * PI * x[0]).sin());
        FlowSystem::new("gradient-circle", Torus::unit(1), Arc::new(f)).unwrap()
    }

    #[test]
    fn refinement_rule() {
        let t = Thresholds::default();
        let tol = [1.0, 1.0];
        assert!(passes_refinement(&[0.4, 0.2], &tol, 0.01, &t));
        assert!(!passes_refinement(&[0.4, 0.35], &tol, 0.01, &t));
        // below the coarse resolution the ratio is not informative
        assert!(passes_refinement(&[0.005, 0.005], &tol, 0.01, &t));
        assert!(!passes_refinement(&[0.4, 0.2], &[0.3, 1.0], 0.01, &t));
        assert!(passes_refinement(&[0.0, 0.0], &tol, 0.01, &t));
    }

    #[test]
    fn gradient_circle_scr_is_the_fixed_points() {
        let grid = GridSpec::uniform(Torus::unit(1), 64).unwrap();
        let ladder = two_level_ladder(&grid, 16).unwrap();
        let rep = scr_classify(&gradient_circle(), &ladder, 1.0, &Thresholds::default()).unwrap();
        let scr: Vec<f64> = rep.nodes_of(RecurrenceClass::Scr).map(|n| n.coords[0]).collect();
        assert_eq!(scr, vec![0.0, 0.5]);
        assert_eq!(rep.count(RecurrenceClass::CrOnly), 0);
        assert_eq!(rep.levels.len(), 2);
    }

    #[test]
    fn ladder_must_nest() {
        let t = Torus::unit(1);
        let a = GridSpec::uniform(t.clone(), 64).unwrap();
        let b = GridSpec::uniform(t, 96).unwrap();
        let sys = gradient_circle();
        let th = Thresholds::default();
        assert!(matches!(scr_classify(&sys, &[a.clone(), b], 1.0, &th), Err(Error::Config(_))));
        assert!(matches!(scr_classify(&sys, &[a], 1.0, &th), Err(Error::Config(_))));
    }

    #[test]
    fn doubling_ladder_nests() {
        let g = GridSpec::uniform(Torus::unit(2), 8).unwrap();
        let l = doubling_ladder(&g, 3).unwrap();
        assert_eq!(l[2].counts(), &[32, 32]);
        assert!(l[0].nests_in(&l[1]) && l[1].nests_in(&l[2]));
    }
}
