//! Hamiltonians on `T*T^n = T^n x R^n` and their fixed-step flows.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowSystem, Rk4, MAX_STEP};
use crate::torus::Torus;

/// `H(x, y)` with both partial gradients. Must be periodic in `x`.
pub trait Hamiltonian: Send + Sync {
    fn dims(&self) -> usize;
    fn value(&self, x: &[f64], y: &[f64]) -> f64;
    fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn grad_y(&self, x: &[f64], y: &[f64], out: &mut [f64]);
}

#[derive(Clone)]
pub struct HamiltonianSystem {
    torus: Torus,
    hamiltonian: Arc<dyn Hamiltonian>,
    energy_level: f64,
    label: String,
}

impl fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("label", &self.label)
            .field("torus", &self.torus)
            .field("energy_level", &self.energy_level)
            .finish()
    }
}

impl HamiltonianSystem {
    pub fn new(
        label: impl Into<String>,
        torus: Torus,
        hamiltonian: Arc<dyn Hamiltonian>,
        energy_level: f64,
    ) -> Result<Self> {
        if hamiltonian.dims() != torus.dims() {
            return Err(Error::config("hamiltonian dimension does not match torus"));
        }
        Ok(Self {
            torus,
            hamiltonian,
            energy_level,
            label: label.into(),
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn hamiltonian(&self) -> &Arc<dyn Hamiltonian> {
        &self.hamiltonian
    }

    pub fn energy_level(&self) -> f64 {
        self.energy_level
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dims(&self) -> usize {
        self.torus.dims()
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.hamiltonian.value(x, y)
    }

    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dims()];
        self.hamiltonian.grad_x(x, y, &mut g);
        g
    }

    pub fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dims()];
        self.hamiltonian.grad_y(x, y, &mut g);
        g
    }
}

/// `H(x, y) = a |y|^2 + <y, W(x)>`.
///
/// Covers the geodesic Hamiltonian (`a = 1/2`, `W = 0`), the Mañé
/// Hamiltonian of a field `Y` (`a = 1/2`, `W = Y`) and the two-torus
/// examples `|y|^2 - <b(x), y>` (`a = 1`, `W = -b`).
#[derive(Clone)]
pub struct MechanicalHamiltonian {
    kinetic: f64,
    drift: FlowSystem,
}

impl MechanicalHamiltonian {
    pub fn new(kinetic: f64, drift: FlowSystem) -> Result<Self> {
        if !(kinetic > 0.0 && kinetic.is_finite()) {
            return Err(Error::config("kinetic coefficient must be positive"));
        }
        Ok(Self { kinetic, drift })
    }

    pub fn kinetic(&self) -> f64 {
        self.kinetic
    }

    pub fn drift(&self) -> &FlowSystem {
        &self.drift
    }
}

impl Hamiltonian for MechanicalHamiltonian {
    fn dims(&self) -> usize {
        self.drift.dims()
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let w = self.drift.eval(x);
        let mut s = 0.0;
        for j in 0..y.len() {
            s += self.kinetic * y[j] * y[j] + y[j] * w[j];
        }
        s
    }

    fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = y.len();
        if y.iter().all(|v| *v == 0.0) {
            out.fill(0.0);
            return;
        }
        let jac = self.drift.jacobian(x);
        for k in 0..n {
            out[k] = (0..n).map(|j| y[j] * jac[j * n + k]).sum();
        }
    }

    fn grad_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let w = self.drift.eval(x);
        for j in 0..y.len() {
            out[j] = 2.0 * self.kinetic * y[j] + w[j];
        }
    }
}

/// `H(x, y) = |y|^2 / 2 + <y, Y(x)>` on the torus of `y_field`, energy level 0.
pub fn mane_hamiltonian(y_field: &FlowSystem) -> HamiltonianSystem {
    let h = MechanicalHamiltonian {
        kinetic: 0.5,
        drift: y_field.clone(),
    };
    HamiltonianSystem {
        torus: y_field.torus().clone(),
        hamiltonian: Arc::new(h),
        energy_level: 0.0,
        label: format!("mane({})", y_field.label()),
    }
}

/// Phase-space state after integration.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseState {
    /// Reduced base point.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `|H(z_t) - H(z_0)|`.
    pub energy_drift: f64,
    /// Largest `|H - H(z_0)|` seen at any step.
    pub max_energy_drift: f64,
}

const BLOW_UP: f64 = 1e12;

/// Fixed-step RK4 for `x' = d_y H`, `y' = -d_x H`.
pub fn integrate_hamiltonian(
    sys: &HamiltonianSystem,
    x0: &[f64],
    y0: &[f64],
    t: f64,
    step: f64,
) -> Result<PhaseState> {
    let n = sys.dims();
    if x0.len() != n || y0.len() != n {
        return Err(Error::Input("phase point dimension mismatch".into()));
    }
    if !(step.is_finite() && step > 0.0 && step <= MAX_STEP) {
        return Err(Error::config(format!("invalid step {step}")));
    }
    if !t.is_finite() {
        return Err(Error::config("flow time must be finite"));
    }
    let h = sys.hamiltonian();
    let dir = if t < 0.0 { -1.0 } else { 1.0 };
    let rhs = |z: &[f64], out: &mut [f64]| {
        let (x, y) = z.split_at(n);
        let (ox, oy) = out.split_at_mut(n);
        h.grad_y(x, y, ox);
        h.grad_x(x, y, oy);
        for v in ox.iter_mut() {
            *v *= dir;
        }
        for v in oy.iter_mut() {
            *v *= -dir;
        }
    };
    let mut z: Vec<f64> = x0.iter().chain(y0.iter()).copied().collect();
    let e0 = h.value(x0, y0);
    let mut rk = Rk4::new(2 * n);
    let total = t.abs();
    let full = (total / step).floor() as u64;
    let mut max_drift: f64 = 0.0;
    let mut done = 0.0;
    let mut take = |z: &mut Vec<f64>, dt: f64, max_drift: &mut f64| -> Result<()> {
        let ok = rk.step(&rhs, z, dt);
        if !ok || z[n..].iter().any(|v| v.abs() > BLOW_UP) {
            return Err(Error::numeric(z, "hamiltonian trajectory blew up"));
        }
        let e = h.value(&z[..n], &z[n..]);
        *max_drift = max_drift.max((e - e0).abs());
        Ok(())
    };
    for i in 0..full {
        take(&mut z, step, &mut max_drift)?;
        done = (i + 1) as f64 * step;
    }
    if total - done > 0.0 {
        take(&mut z, total - done, &mut max_drift)?;
    }
    let (x, y) = z.split_at(n);
    let energy = h.value(x, y);
    let mut xr = x.to_vec();
    sys.torus().reduce_in_place(&mut xr);
    Ok(PhaseState {
        x: xr,
        y: y.to_vec(),
        energy_drift: (energy - e0).abs(),
        max_energy_drift: max_drift,
    })
}
