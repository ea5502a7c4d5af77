//! Flat tori `R^n / (P_1 Z x ... x P_n Z)` with the quotient Euclidean metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    periods: Vec<f64>,
}

impl Torus {
    pub fn new(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::config("torus needs at least one axis"));
        }
        if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::config(format!("torus period must be positive, got {p}")));
        }
        Ok(Self { periods })
    }

    /// `R^n / Z^n`.
    pub fn unit(dims: usize) -> Self {
        Self {
            periods: vec![1.0; dims.max(1)],
        }
    }

    pub fn uniform(dims: usize, period: f64) -> Result<Self> {
        Self::new(vec![period; dims.max(1)])
    }

    pub fn dims(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.periods[axis]
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    pub fn max_period(&self) -> f64 {
        self.periods.iter().cloned().fold(0.0, f64::max)
    }

    /// Reduce a single coordinate into `[0, P_axis)`.
    #[inline]
    pub fn reduce_coord(&self, axis: usize, x: f64) -> f64 {
        let p = self.periods[axis];
        let r = x.rem_euclid(p);
        // rem_euclid can round up to exactly p for tiny negative inputs
        if r >= p {
            0.0
        } else {
            r
        }
    }

    pub fn reduce_in_place(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = self.reduce_coord(j, *v);
        }
    }

    /// Signed shortest displacement from `a` to `b` along one axis, in `[-P/2, P/2]`.
    #[inline]
    pub fn axis_delta(&self, axis: usize, a: f64, b: f64) -> f64 {
        let p = self.periods[axis];
        let mut d = (b - a).rem_euclid(p);
        if d > 0.5 * p {
            d -= p;
        }
        d
    }

    /// Quotient distance between raw coordinate slices (no dimension check).
    #[inline]
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.periods.len() {
            let p = self.periods[j];
            let d = (a[j] - b[j]).abs().rem_euclid(p);
            let d = d.min(p - d);
            s += d * d;
        }
        s.sqrt()
    }

    pub fn point(&self, coords: Vec<f64>) -> Result<TorusPoint> {
        TorusPoint::new(self, coords)
    }
}

/// A point on a torus; coordinates are stored reduced to `[0, P_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(torus: &Torus, mut coords: Vec<f64>) -> Result<Self> {
        if coords.len() != torus.dims() {
            return Err(Error::Input(format!(
                "point has {} coordinates, torus has {} axes",
                coords.len(),
                torus.dims()
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Input(format!("non-finite coordinate {c}")));
        }
        torus.reduce_in_place(&mut coords);
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dims(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn reduced(&self, torus: &Torus) -> Result<Self> {
        Self::new(torus, self.coords.clone())
    }
}

/// `sqrt(sum_j min(|d_j|, P_j - |d_j|)^2)`.
pub fn torus_distance(a: &TorusPoint, b: &TorusPoint, torus: &Torus) -> Result<f64> {
    if a.dims() != torus.dims() || b.dims() != torus.dims() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} / {} vs torus {}",
            a.dims(),
            b.dims(),
            torus.dims()
        )));
    }
    Ok(torus.dist(a.coords(), b.coords()))
}
