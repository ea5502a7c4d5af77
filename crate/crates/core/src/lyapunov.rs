//! Lyapunov functions built from chain costs, and checks of the Lyapunov,
//! first-integral and constancy properties for sampled scalar fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{CantorSet, CantorSpec};
use crate::cost::{chain_cost, slack, C_SNAP};
use crate::error::{Error, Result};
use crate::flow::{trajectory, FlowSystem};
use crate::graph::ChainGraph;
use crate::grid::GridSpec;
use crate::scalar::ScalarField;
use crate::torus::Torus;

/// 64 uniform intervals on `[0, T]` plus the endpoint.
pub const DEFAULT_SAMPLES: usize = 65;

/// Tolerance `2τ` for fields synthesized on `g`, with `τ` the one-hop slack.
pub fn synthesis_tolerance(g: &ChainGraph) -> f64 {
    2.0 * slack(C_SNAP, g.h_max(), 1)
}

fn graph_grid(g: &ChainGraph) -> Result<&GridSpec> {
    g.grid()
        .ok_or_else(|| Error::config("Lyapunov synthesis needs a grid-backed chain graph"))
}

/// `h̃(y) = L_T(base, y)` sampled on the graph's grid.
pub fn synth_tilde(g: &ChainGraph, base: usize) -> Result<ScalarField> {
    let grid = graph_grid(g)?;
    let cost = chain_cost(g, base)?;
    if let Some(i) = cost.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(
            &grid.coords(i),
            format!("chain cost from node {base} is not finite here"),
        ));
    }
    ScalarField::new(grid.clone(), cost.values)
}

/// `h(y) = max_{s ∈ [0,T]} h̃(ψ_s(y))`, with the max taken over
/// `n_samples` uniform times including both ends.
pub fn synth_lyapunov(
    g: &ChainGraph,
    sys: &FlowSystem,
    base: usize,
    t: f64,
    n_samples: usize,
) -> Result<ScalarField> {
    let tilde = synth_tilde(g, base)?;
    lyapunov_from_tilde(&tilde, sys, t, n_samples, g.step())
}

/// The max-along-orbit step of [`synth_lyapunov`] for an arbitrary `h̃`.
pub fn lyapunov_from_tilde(
    tilde: &ScalarField,
    sys: &FlowSystem,
    t: f64,
    n_samples: usize,
    step: f64,
) -> Result<ScalarField> {
    if n_samples < 2 {
        return Err(Error::config("synthesis needs at least two time samples"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::config(format!("synthesis time must be finite and nonnegative, got {t}")));
    }
    if tilde.grid().torus() != sys.torus() {
        return Err(Error::Input("field and flow live on different tori".into()));
    }
    let times: Vec<f64> = (0..n_samples)
        .map(|k| t * k as f64 / (n_samples - 1) as f64)
        .collect();
    let grid = tilde.grid();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let path = trajectory(sys, &grid.coords(y), &times, step)?;
            let mut best = f64::NEG_INFINITY;
            for p in &path {
                best = best.max(tilde.try_interpolate(p)?);
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    ScalarField::new(grid.clone(), values)
}

/// Bound `Lip(h̃) · sup|V| · T / (n_samples − 1)` on the error of taking the
/// max over sampled times instead of all of `[0, T]`.
pub fn sampling_error_bound(tilde: &ScalarField, sys: &FlowSystem, t: f64, n_samples: usize) -> f64 {
    tilde.lipschitz_estimate() * sys.sup_speed(64) * t / (n_samples.max(2) - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovVerdict {
    pub is_lyapunov: bool,
    pub is_first_integral: bool,
    pub is_constant: bool,
    /// Worst `h(ψ_t(y)) − h(y)` over samples and probe times.
    pub max_increase: f64,
    /// Worst `|h(ψ_t(y)) − h(y)|`.
    pub max_drift: f64,
    /// Largest central-difference estimate of `dh·V` at kept samples.
    pub max_dh_dot_v: f64,
    /// Samples left out of the `dh·V` estimate as likely kinks.
    pub kink_skipped: usize,
    /// Grid nodes whose drift stays within `tol` at every probe time.
    pub neutral_set_nodes: Vec<usize>,
    pub tol: f64,
    pub probe_times: Vec<f64>,
    pub samples: usize,
}

/// Settings for [`verify_lyapunov_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub probe_times: Vec<f64>,
    pub tol: f64,
    /// Integration step; defaults to the flow's step for the field's grid.
    pub step: Option<f64>,
    /// Compute the neutral set over all grid nodes.
    pub neutral_set: bool,
}

impl VerifyConfig {
    pub fn new(probe_times: Vec<f64>, tol: f64) -> Self {
        Self {
            probe_times,
            tol,
            step: None,
            neutral_set: true,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn without_neutral_set(mut self) -> Self {
        self.neutral_set = false;
        self
    }
}

/// `count` uniform points on `torus` from a seeded stream.
pub fn random_samples(torus: &Torus, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            torus
                .periods()
                .iter()
                .map(|&p| rng.gen_range(0.0..p))
                .collect()
        })
        .collect()
}

/// `k` probe times evenly spread over `(0, t_max]`.
pub fn probe_times(t_max: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|i| t_max * i as f64 / k as f64).collect()
}

pub fn verify_lyapunov(
    h: &ScalarField,
    sys: &FlowSystem,
    t_probe: &[f64],
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<LyapunovVerdict> {
    verify_lyapunov_with(h, sys, samples, &VerifyConfig::new(t_probe.to_vec(), tol))
}

/// Largest `h(ψ_t(x)) − h(x)` (signed) and `|·|` over the probe times.
fn drift_at(
    h: &ScalarField,
    sys: &FlowSystem,
    x: &[f64],
    times: &[f64],
    step: f64,
) -> Result<(f64, f64)> {
    let h0 = h.try_interpolate(x)?;
    let path = trajectory(sys, x, times, step)?;
    let mut inc = f64::NEG_INFINITY;
    let mut drift: f64 = 0.0;
    for p in &path {
        let d = h.try_interpolate(p)? - h0;
        inc = inc.max(d);
        drift = drift.max(d.abs());
    }
    Ok((inc, drift))
}

pub fn verify_lyapunov_with(
    h: &ScalarField,
    sys: &FlowSystem,
    samples: &[Vec<f64>],
    cfg: &VerifyConfig,
) -> Result<LyapunovVerdict> {
    let grid = h.grid();
    if grid.torus() != sys.torus() {
        return Err(Error::Input("field and flow live on different tori".into()));
    }
    if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        return Err(Error::config(format!("tolerance must be finite and nonnegative, got {}", cfg.tol)));
    }
    if samples.iter().any(|s| s.len() != grid.dims()) {
        return Err(Error::Input("sample dimension differs from the field".into()));
    }
    let mut times = cfg.probe_times.clone();
    times.sort_by(f64::total_cmp);
    if times.first().is_some_and(|t| !(*t >= 0.0 && t.is_finite())) || times.last().is_some_and(|t| !t.is_finite()) {
        return Err(Error::config("probe times must be finite and nonnegative"));
    }
    let step = cfg.step.unwrap_or_else(|| sys.default_step(grid.h_min()));

    let drifts = samples
        .par_iter()
        .map(|x| drift_at(h, sys, x, &times, step))
        .collect::<Result<Vec<_>>>()?;
    let max_increase = drifts.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let max_drift = drifts.iter().map(|d| d.1).fold(0.0, f64::max);
    let max_increase = if max_increase.is_finite() { max_increase } else { 0.0 };

    let (max_dh_dot_v, kink_skipped) = directional_derivative(h, sys, samples)?;

    let neutral_set_nodes = if cfg.neutral_set {
        let flags = (0..grid.len())
            .into_par_iter()
            .map(|y| drift_at(h, sys, &grid.coords(y), &times, step).map(|d| d.1 <= cfg.tol))
            .collect::<Result<Vec<bool>>>()?;
        flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    } else {
        Vec::new()
    };

    let is_constant = h.range() <= cfg.tol;
    let is_first_integral = is_constant || max_drift <= cfg.tol;
    let is_lyapunov = is_first_integral || max_increase <= cfg.tol;
    Ok(LyapunovVerdict {
        is_lyapunov,
        is_first_integral,
        is_constant,
        max_increase,
        max_drift,
        max_dh_dot_v,
        kink_skipped,
        neutral_set_nodes,
        tol: cfg.tol,
        probe_times: times,
        samples: samples.len(),
    })
}

/// Central differences with spacing `h_grid / 2`; samples where the one-sided
/// slopes disagree by more than ten times the median disagreement are skipped.
fn directional_derivative(
    h: &ScalarField,
    sys: &FlowSystem,
    samples: &[Vec<f64>],
) -> Result<(f64, usize)> {
    let grid = h.grid();
    let n = grid.dims();
    let mut est = Vec::with_capacity(samples.len());
    let mut disagreement = Vec::with_capacity(samples.len());
    for x in samples {
        let h0 = h.try_interpolate(x)?;
        let v = sys.eval(x);
        let mut p = x.clone();
        let mut dot = 0.0;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let d = 0.5 * grid.spacing(j);
            p[j] = x[j] + d;
            let hr = h.try_interpolate(&p)?;
            p[j] = x[j] - d;
            let hl = h.try_interpolate(&p)?;
            p[j] = x[j];
            let (sr, sl) = ((hr - h0) / d, (h0 - hl) / d);
            dot += 0.5 * (sr + sl) * v[j];
            worst = worst.max((sr - sl).abs());
        }
        est.push(dot);
        disagreement.push(worst);
    }
    let mut sorted = disagreement.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let cut = (10.0 * median).max(1e-9 * h.lipschitz_estimate().max(1.0));
    let mut max = f64::NEG_INFINITY;
    let mut skipped = 0;
    for (e, d) in est.iter().zip(&disagreement) {
        if *d > cut {
            skipped += 1;
        } else {
            max = max.max(*e);
        }
    }
    Ok((if max.is_finite() { max } else { 0.0 }, skipped))
}

/// `(1/δ) ∫_0^x 1_K − (1/(1−δ)) ∫_0^x 1_{K^c}` with `δ` the measure of `set`.
pub fn explicit_cantor_value(set: &CantorSet, x: f64) -> f64 {
    let delta = set.measure();
    let x = x.rem_euclid(1.0);
    let inside = set.measure_below(x);
    inside / delta - (x - inside) / (1.0 - delta)
}

/// Explicit Lyapunov function of the Cantor flow. For the null kind this is
/// the approximant at the construction depth, with `δ = (2/3)^depth`.
pub fn explicit_cantor_lyapunov(spec: &CantorSpec, grid: &GridSpec) -> Result<ScalarField> {
    if grid.dims() != 1 || grid.torus().period(0) != 1.0 {
        return Err(Error::config("the Cantor flow lives on the unit circle"));
    }
    let set = CantorSet::build(spec)?;
    if !(set.measure() > 0.0 && set.measure() < 1.0) {
        return Err(Error::config("Cantor set measure must lie strictly between 0 and 1"));
    }
    ScalarField::from_fn(grid.clone(), |x| explicit_cantor_value(&set, x[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::build_cantor_flow;
    use crate::flow::FnField;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn gradient_circle() -> FlowSystem {
        let f = FnField::new(1, |x, out| out[0] = -(2.0 * PI * x[0]).sin());
        FlowSystem::new("gradient-circle", Torus::unit(1), Arc::new(f)).unwrap()
    }

    #[test]
    fn constant_field_has_every_flag() {
        let sys = gradient_circle();
        let grid = GridSpec::uniform(Torus::unit(1), 64).unwrap();
        let h = ScalarField::from_fn(grid, |_| 2.5).unwrap();
        let s = random_samples(sys.torus(), 50, 1);
        let v = verify_lyapunov(&h, &sys, &[0.5, 1.0], &s, 1e-9).unwrap();
        assert!(v.is_constant && v.is_first_integral && v.is_lyapunov);
        assert_eq!(v.max_drift, 0.0);
        assert_eq!(v.neutral_set_nodes.len(), 64);
    }

    #[test]
    fn cosine_decreases_along_gradient_flow() {
        let sys = gradient_circle();
        let grid = GridSpec::uniform(Torus::unit(1), 512).unwrap();
        let h = ScalarField::from_fn(grid.clone(), |x| -(2.0 * PI * x[0]).cos()).unwrap();
        let s = random_samples(sys.torus(), 200, 7);
        let tol = 1e-3;
        let v = verify_lyapunov(&h, &sys, &probe_times(1.0, 4), &s, tol).unwrap();
        assert!(v.is_lyapunov);
        assert!(!v.is_first_integral);
        assert!(v.max_dh_dot_v <= 1e-3);
        for &n in &v.neutral_set_nodes {
            let x = grid.coords(n)[0];
            let d = x.min((x - 0.5).abs()).min(1.0 - x);
            assert!(d < 0.05, "node at {x} is not near a fixed point");
        }
        assert!(!v.neutral_set_nodes.is_empty());
    }

    #[test]
    fn explicit_cantor_function() {
        let spec = CantorSpec::fat(0.25, 8);
        let set = CantorSet::build(&spec).unwrap();
        let delta = set.measure();
        assert!(explicit_cantor_value(&set, 0.0).abs() < 1e-12);
        assert!(explicit_cantor_value(&set, 1.0 - 1e-15).abs() < 1e-9);
        // drop across the first removed gap
        let (a, b) = set.removed()[0][0];
        let drop = explicit_cantor_value(&set, a) - explicit_cantor_value(&set, b);
        assert!((drop - (b - a) / (1.0 - delta)).abs() < 1e-12);

        let grid = GridSpec::uniform(Torus::unit(1), 2048).unwrap();
        let h = explicit_cantor_lyapunov(&spec, &grid).unwrap();
        let lip = 1.0 / delta + 1.0 / (1.0 - delta);
        assert!(h.lipschitz_estimate() <= lip + 1e-6);
        let sys = build_cantor_flow(&spec).unwrap();
        let s = random_samples(sys.torus(), 300, 3);
        let cfg = VerifyConfig::new(probe_times(2.0, 4), lip * grid.h_max()).without_neutral_set();
        let v = verify_lyapunov_with(&h, &sys, &s, &cfg).unwrap();
        assert!(v.is_lyapunov, "max increase {}", v.max_increase);
        assert!(!v.is_first_integral);
    }

    #[test]
    fn rejects_mismatched_torus() {
        let sys = gradient_circle();
        let grid = GridSpec::uniform(Torus::unit(2), 8).unwrap();
        let h = ScalarField::from_fn(grid, |_| 0.0).unwrap();
        assert!(verify_lyapunov(&h, &sys, &[1.0], &[], 0.1).is_err());
    }
}
