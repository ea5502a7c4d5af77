//! Grid-sampled scalar fields with periodic multilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
    lipschitz_estimate: f64,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(&grid.coords(i), format!("non-finite field value {}", values[i])));
        }
        let lipschitz_estimate = max_adjacent_slope(&grid, &values);
        Ok(Self {
            grid,
            values,
            lipschitz_estimate,
        })
    }

    /// Sample `f` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; grid.dims()];
        let values = (0..grid.len())
            .map(|i| {
                grid.coords_into(i, &mut x);
                f(&x)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Largest `|v_i - v_j| / h` over axis-adjacent node pairs.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.lipschitz_estimate
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }

    /// Periodic multilinear interpolation; exact at nodes.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.grid.dims();
        let counts = self.grid.counts();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        let mut base_v = Vec::new();
        let mut frac_v = Vec::new();
        let (base, frac): (&mut [usize], &mut [f64]) = if d <= 8 {
            (&mut base[..d], &mut frac[..d])
        } else {
            base_v.resize(d, 0);
            frac_v.resize(d, 0.0);
            (&mut base_v[..], &mut frac_v[..])
        };
        for j in 0..d {
            let n = counts[j];
            let s = self.grid.torus().reduce_coord(j, x[j]) / self.grid.spacing(j);
            let i = s.floor();
            frac[j] = s - i;
            base[j] = (i as usize) % n;
        }
        // corner values, bit j of the corner index selects the upper node on axis j
        let mut corners: Vec<f64> = (0..(1usize << d))
            .map(|corner| {
                let mut idx = 0;
                for j in (0..d).rev() {
                    let k = if corner >> j & 1 == 1 {
                        (base[j] + 1) % counts[j]
                    } else {
                        base[j]
                    };
                    idx = idx * counts[j] + k;
                }
                self.values[idx]
            })
            .collect();
        // collapse one axis at a time with a + t(b - a), exact on constants
        for &t in frac.iter() {
            let half = corners.len() / 2;
            for c in 0..half {
                let (a, b) = (corners[2 * c], corners[2 * c + 1]);
                corners[c] = if t == 0.0 { a } else { a + t * (b - a) };
            }
            corners.truncate(half);
        }
        corners[0]
    }

    /// Interpolated value, or a numeric error if it is not finite.
    pub fn try_interpolate(&self, x: &[f64]) -> Result<f64> {
        let v = self.interpolate(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::numeric(x, "non-finite interpolated value"))
        }
    }

    /// `self - other` on a common grid.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::Input("fields live on different grids".into()));
        }
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        ScalarField::new(self.grid.clone(), v)
    }

    pub fn scaled(&self, factor: f64) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|v| v * factor).collect())
    }

    /// Largest node-wise absolute difference.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Input("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn max_adjacent_slope(grid: &GridSpec, values: &[f64]) -> f64 {
    let d = grid.dims();
    let mut m = vec![0usize; d];
    let mut best = 0.0f64;
    for i in 0..grid.len() {
        grid.multi_index(i, &mut m);
        for j in 0..d {
            if grid.counts()[j] < 2 {
                continue;
            }
            let keep = m[j];
            m[j] = (keep + 1) % grid.counts()[j];
            let k = grid.index(&m);
            m[j] = keep;
            best = best.max((values[k] - values[i]).abs() / grid.spacing(j));
        }
    }
    best
}
