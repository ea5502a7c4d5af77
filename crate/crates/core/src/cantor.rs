//! Finite-depth Cantor sets on `R/Z` and the circle flows that vanish on them.
//!
//! The fat kind is a Smith–Volterra–Cantor construction: level `k` removes a
//! centred open interval of length `a * 4^-k` from each of the `2^(k-1)`
//! closed intervals left by the previous level. `a` is normalised so that the
//! depth-`d` approximant `K_d` has measure exactly `δ`. The null kind removes
//! middle thirds, so `μ(K_d) = (2/3)^d`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowSystem, VectorField};
use crate::torus::Torus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CantorKind {
    Fat,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub kind: CantorKind,
    /// `δ` for the fat kind, ignored (zero) for the null kind.
    pub target_measure: f64,
    pub depth: u32,
}

impl CantorSpec {
    pub fn fat(delta: f64, depth: u32) -> Self {
        Self {
            kind: CantorKind::Fat,
            target_measure: delta,
            depth,
        }
    }

    pub fn null(depth: u32) -> Self {
        Self {
            kind: CantorKind::Null,
            target_measure: 0.0,
            depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 24 {
            return Err(Error::config(format!(
                "cantor depth must be in 1..=24, got {}",
                self.depth
            )));
        }
        match self.kind {
            CantorKind::Fat => {
                let d = self.target_measure;
                if !(d > 0.0 && d < 1.0) {
                    return Err(Error::config(format!(
                        "fat cantor set needs 0 < δ < 1, got {d}"
                    )));
                }
            }
            CantorKind::Null => {
                if self.target_measure != 0.0 {
                    return Err(Error::config("null cantor set has target measure 0"));
                }
            }
        }
        Ok(())
    }
}

/// Materialised depth-`d` approximant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantorSet {
    spec: CantorSpec,
    /// Open intervals removed at each level (level 1 first), sorted.
    removed: Vec<Vec<(f64, f64)>>,
    /// Closed intervals of `K_d`, sorted, covering `0` and `1`.
    kept: Vec<(f64, f64)>,
    /// Prefix sums of kept lengths: `kept_prefix[i]` is the measure of
    /// `kept[..i]`.
    kept_prefix: Vec<f64>,
}

impl CantorSet {
    pub fn build(spec: &CantorSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.depth as i32;
        let mut kept = vec![(0.0_f64, 1.0_f64)];
        let mut removed = Vec::with_capacity(spec.depth as usize);
        let scale = match spec.kind {
            CantorKind::Fat => 2.0 * (1.0 - spec.target_measure) / (1.0 - 2f64.powi(-d)),
            CantorKind::Null => 0.0,
        };
        for k in 1..=d {
            let mut next = Vec::with_capacity(kept.len() * 2);
            let mut gaps = Vec::with_capacity(kept.len());
            for &(l, r) in &kept {
                let len = r - l;
                let gap = match spec.kind {
                    CantorKind::Fat => scale * 4f64.powi(-k),
                    CantorKind::Null => len / 3.0,
                };
                if gap >= len {
                    return Err(Error::config(format!(
                        "level {k} gap {gap} does not fit in interval of length {len}"
                    )));
                }
                let c = 0.5 * (l + r);
                let (gl, gr) = (c - 0.5 * gap, c + 0.5 * gap);
                next.push((l, gl));
                next.push((gr, r));
                gaps.push((gl, gr));
            }
            kept = next;
            removed.push(gaps);
        }
        let mut kept_prefix = Vec::with_capacity(kept.len() + 1);
        let mut acc = 0.0;
        kept_prefix.push(0.0);
        for &(l, r) in &kept {
            acc += r - l;
            kept_prefix.push(acc);
        }
        Ok(Self {
            spec: spec.clone(),
            removed,
            kept,
            kept_prefix,
        })
    }

    pub fn spec(&self) -> &CantorSpec {
        &self.spec
    }

    pub fn removed(&self) -> &[Vec<(f64, f64)>] {
        &self.removed
    }

    pub fn kept(&self) -> &[(f64, f64)] {
        &self.kept
    }

    /// Lebesgue measure of `K_d`.
    pub fn measure(&self) -> f64 {
        *self.kept_prefix.last().unwrap()
    }

    /// Total length removed, summed level by level.
    pub fn removed_length(&self) -> f64 {
        self.removed
            .iter()
            .flat_map(|lvl| lvl.iter().map(|(l, r)| r - l))
            .sum()
    }

    /// All interval endpoints of `K_d`, sorted, without the duplicate `1 ≡ 0`.
    pub fn endpoints(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.kept.iter().flat_map(|&(l, r)| [l, r]).collect();
        e.retain(|&x| x < 1.0);
        e
    }

    /// Index of the last kept interval whose left end is `<= x`.
    fn locate(&self, x: f64) -> usize {
        self.kept
            .partition_point(|&(l, _)| l <= x)
            .saturating_sub(1)
    }

    /// Whether `x` (reduced mod 1) lies in `K_d`.
    pub fn contains(&self, x: f64) -> bool {
        let x = x.rem_euclid(1.0);
        let (l, r) = self.kept[self.locate(x)];
        l <= x && x <= r
    }

    /// Circle distance from `x` to `K_d`.
    pub fn dist_to_set(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        let i = self.locate(x);
        let (l, r) = self.kept[i];
        if x >= l && x <= r {
            return 0.0;
        }
        // x lies in the gap (r, next_l); the last kept interval ends at 1 so
        // i + 1 always exists here
        let next_l = self.kept.get(i + 1).map_or(1.0, |p| p.0);
        (x - r).min(next_l - x)
    }

    /// Circle distance from `x` to the finite endpoint set `∂K_d`.
    pub fn dist_to_endpoints(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        let i = self.locate(x);
        let (l, r) = self.kept[i];
        let next_l = self.kept.get(i + 1).map_or(1.0, |p| p.0);
        let mut best = (x - l).abs().min((x - r).abs());
        best = best.min((next_l - x).abs());
        best.min(x).min(1.0 - x)
    }

    /// Zero set of the flow: `K_d` itself for the fat kind, the endpoint set
    /// of `K_d` for the null kind.
    pub fn dist_to_zero_set(&self, x: f64) -> f64 {
        match self.spec.kind {
            CantorKind::Fat => self.dist_to_set(x),
            CantorKind::Null => self.dist_to_endpoints(x),
        }
    }

    /// `∫_0^x 1_{K_d}`, for `x ∈ [0, 1]`.
    pub fn measure_below(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let i = self.locate(x);
        let (l, r) = self.kept[i];
        self.kept_prefix[i] + (x.min(r) - l).max(0.0)
    }
}

/// Profile of the speed `φ` as a function of the distance to the zero set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiProfile {
    /// `φ = min(1, dist)`, Lipschitz with constant 1.
    #[default]
    Lipschitz,
    /// `φ = min(1, dist)^2`, `C^{1,1}`.
    Squared,
}

/// `V(x) = φ(x) ∂/∂x` on `R/Z`.
#[derive(Debug, Clone)]
pub struct CantorField {
    set: Arc<CantorSet>,
    profile: PhiProfile,
}

impl CantorField {
    pub fn phi(&self, x: f64) -> f64 {
        let d = self.set.dist_to_zero_set(x).min(1.0);
        match self.profile {
            PhiProfile::Lipschitz => d,
            PhiProfile::Squared => d * d,
        }
    }

    pub fn set(&self) -> &CantorSet {
        &self.set
    }
}

impl VectorField for CantorField {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.phi(x[0]);
    }
}

pub fn build_cantor_flow(spec: &CantorSpec) -> Result<FlowSystem> {
    build_cantor_flow_with(spec, PhiProfile::default())
}

pub fn build_cantor_flow_with(spec: &CantorSpec, profile: PhiProfile) -> Result<FlowSystem> {
    let set = Arc::new(CantorSet::build(spec)?);
    let label = match spec.kind {
        CantorKind::Fat => "cantor-fat",
        CantorKind::Null => "cantor-null",
    };
    let field = CantorField { set, profile };
    Ok(FlowSystem::new(label, Torus::unit(1), Arc::new(field))?.with_lipschitz_bound(1.0))
}
