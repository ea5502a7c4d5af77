//! Uniform product grids on a torus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::Torus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    torus: Torus,
    counts: Vec<usize>,
    /// Optional restriction: only `true` nodes take part in chains.
    mask: Option<Vec<bool>>,
}

impl GridSpec {
    pub fn new(torus: Torus, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != torus.dims() {
            return Err(Error::config(format!(
                "grid has {} axes, torus has {}",
                counts.len(),
                torus.dims()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::config("grid axis with zero nodes"));
        }
        let total: usize = counts.iter().product();
        if total < 2 {
            return Err(Error::config("grid needs at least two nodes"));
        }
        Ok(Self {
            torus,
            counts,
            mask: None,
        })
    }

    /// Same node count on every axis.
    pub fn uniform(torus: Torus, per_axis: usize) -> Result<Self> {
        let n = torus.dims();
        Self::new(torus, vec![per_axis; n])
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::config("mask length differs from node count"));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::config("mask excludes every node"));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.torus.period(axis) / self.counts[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dims()).map(|j| self.spacing(j)).collect()
    }

    pub fn h_max(&self) -> f64 {
        (0..self.dims()).map(|j| self.spacing(j)).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.dims())
            .map(|j| self.spacing(j))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn is_active(&self, node: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[node])
    }

    /// Node index from per-axis indices; axis 0 varies fastest.
    pub fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for j in (0..self.dims()).rev() {
            idx = idx * self.counts[j] + multi[j];
        }
        idx
    }

    pub fn multi_index(&self, mut node: usize, out: &mut [usize]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = node % self.counts[j];
            node /= self.counts[j];
        }
    }

    pub fn coords_into(&self, node: usize, out: &mut [f64]) {
        let mut r = node;
        for (j, o) in out.iter_mut().enumerate() {
            *o = (r % self.counts[j]) as f64 * self.spacing(j);
            r /= self.counts[j];
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dims()];
        self.coords_into(node, &mut c);
        c
    }

    /// Nearest grid node to `x` (mask ignored).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for j in (0..self.dims()).rev() {
            let n = self.counts[j];
            let k = (x[j] / self.spacing(j)).round().rem_euclid(n as f64) as usize % n;
            idx = idx * n + k;
        }
        idx
    }

    /// Nodes within distance `radius` of `x` (mask ignored), pushed as
    /// `(node, distance)` in increasing node order.
    pub fn nodes_within(&self, x: &[f64], radius: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let n = self.dims();
        let mut ranges = Vec::with_capacity(n);
        for j in 0..n {
            let h = self.spacing(j);
            let cnt = self.counts[j] as i64;
            let lo = ((x[j] - radius) / h).ceil() as i64;
            let hi = ((x[j] + radius) / h).floor() as i64;
            let (lo, hi) = if hi - lo + 1 >= cnt {
                (0, cnt - 1)
            } else {
                (lo, hi)
            };
            ranges.push((lo, hi));
        }
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut multi = vec![0usize; n];
        let mut pos = vec![0.0; n];
        loop {
            for j in 0..n {
                let k = cur[j].rem_euclid(self.counts[j] as i64) as usize;
                multi[j] = k;
                pos[j] = k as f64 * self.spacing(j);
            }
            let d = self.torus.dist(x, &pos);
            if d <= radius {
                out.push((self.index(&multi), d));
            }
            let mut j = 0;
            loop {
                if j == n {
                    out.sort_unstable_by_key(|p| p.0);
                    out.dedup_by_key(|p| p.0);
                    return;
                }
                cur[j] += 1;
                if cur[j] > ranges[j].1 {
                    cur[j] = ranges[j].0;
                    j += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// Whether every node of `self` is also a node of `finer`.
    pub fn nests_in(&self, finer: &GridSpec) -> bool {
        self.torus == finer.torus
            && self
                .counts
                .iter()
                .zip(&finer.counts)
                .all(|(c, f)| f % c == 0)
    }

    /// Index in `finer` of coarse node `node`; requires `nests_in`.
    pub fn refine_index(&self, node: usize, finer: &GridSpec) -> usize {
        let mut m = vec![0; self.dims()];
        self.multi_index(node, &mut m);
        for (j, mj) in m.iter_mut().enumerate() {
            *mj *= finer.counts[j] / self.counts[j];
        }
        finer.index(&m)
    }

    /// Grid with every axis count multiplied by `factor`; the mask is dropped.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.torus.clone(),
            self.counts.iter().map(|c| c * factor).collect(),
        )
    }
}
