//! Vector fields on tori and fixed-step RK4 integration of their flows.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::torus::{Torus, TorusPoint};

/// Largest integration step accepted by [`integrate`].
pub const MAX_STEP: f64 = 0.1;

/// A vector field `V: T^n -> R^n`. Implementations must be periodic in every
/// coordinate with the periods of the torus they are attached to.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Row-major Jacobian `out[i * n + k] = dV_i / dx_k`. Return `false` when
    /// no analytic form is available; callers then use central differences.
    fn jacobian(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

/// `V(x) = c`.
#[derive(Debug, Clone)]
pub struct ConstantField(pub Vec<f64>);

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Field backed by closures.
pub struct FnField {
    dim: usize,
    eval: Box<EvalFn>,
    jacobian: Option<Box<EvalFn>>,
}

impl FnField {
    pub fn new(dim: usize, eval: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Box::new(eval),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(jac));
        self
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.jacobian {
            Some(j) => {
                j(x, out);
                true
            }
            None => false,
        }
    }
}

/// A flow on a torus: the field, its torus and an optional Lipschitz bound.
#[derive(Clone)]
pub struct FlowSystem {
    torus: Torus,
    field: Arc<dyn VectorField>,
    lipschitz_bound: Option<f64>,
    label: String,
}

impl fmt::Debug for FlowSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowSystem")
            .field("label", &self.label)
            .field("torus", &self.torus)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish()
    }
}

impl FlowSystem {
    pub fn new(
        label: impl Into<String>,
        torus: Torus,
        field: Arc<dyn VectorField>,
    ) -> Result<Self> {
        if field.dim() != torus.dims() {
            return Err(Error::config(format!(
                "field dimension {} does not match torus dimension {}",
                field.dim(),
                torus.dims()
            )));
        }
        Ok(Self {
            torus,
            field,
            lipschitz_bound: None,
            label: label.into(),
        })
    }

    pub fn with_lipschitz_bound(mut self, bound: f64) -> Self {
        self.lipschitz_bound = Some(bound);
        self
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn field(&self) -> &Arc<dyn VectorField> {
        &self.field
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    pub fn dims(&self) -> usize {
        self.torus.dims()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims()];
        self.field.eval(x, &mut out);
        out
    }

    /// Jacobian of the field; analytic when the field provides it, otherwise
    /// central differences with spacing `1e-4 * P_k`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dims();
        let mut out = vec![0.0; n * n];
        if self.field.jacobian(x, &mut out) {
            return out;
        }
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for k in 0..n {
            let step = 1e-4 * self.torus.period(k);
            xp[k] = x[k] + step;
            self.field.eval(&xp, &mut fp);
            xp[k] = x[k] - step;
            self.field.eval(&xp, &mut fm);
            xp[k] = x[k];
            for i in 0..n {
                out[i * n + k] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        out
    }

    /// Supremum of `|V|` over a uniform probe grid with `per_axis` nodes per axis.
    pub fn sup_speed(&self, per_axis: usize) -> f64 {
        let n = self.dims();
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(n as u32);
        let mut x = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut best: f64 = 0.0;
        for idx in 0..total {
            let mut r = idx;
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = (r % per_axis) as f64 * self.torus.period(j) / per_axis as f64;
                r /= per_axis;
            }
            self.field.eval(&x, &mut v);
            best = best.max(v.iter().map(|c| c * c).sum::<f64>().sqrt());
        }
        best
    }

    /// `min(1e-3, spacing / (4 sup|V|))`.
    pub fn default_step(&self, grid_spacing: f64) -> f64 {
        let sup = self.sup_speed(64);
        if sup > 0.0 {
            (grid_spacing / (4.0 * sup)).min(1e-3)
        } else {
            1e-3
        }
    }
}

/// Scratch space for one RK4 stepper.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// One classical RK4 step of size `h` for `x' = f(x)`, in place.
    pub(crate) fn step<F>(&mut self, f: &F, x: &mut [f64], h: f64) -> bool
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let n = x.len();
        f(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        let mut finite = true;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
            finite &= x[i].is_finite();
        }
        finite
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(step.is_finite() && step > 0.0 && step <= MAX_STEP) {
        return Err(Error::config(format!(
            "integration step must lie in (0, {MAX_STEP}], got {step}"
        )));
    }
    Ok(())
}

/// Advance unreduced coordinates `x` by time `t` (any sign) with fixed steps;
/// the final partial step lands exactly on `t`.
pub(crate) fn advance_raw(
    sys: &FlowSystem,
    rk: &mut Rk4,
    x: &mut [f64],
    t: f64,
    step: f64,
) -> Result<()> {
    if t == 0.0 {
        return Ok(());
    }
    let dir = t.signum();
    let f = |p: &[f64], out: &mut [f64]| {
        sys.field.eval(p, out);
        if dir < 0.0 {
            out.iter_mut().for_each(|v| *v = -*v);
        }
    };
    let total = t.abs();
    let full = (total / step).floor() as u64;
    let mut done = 0.0;
    for i in 0..full {
        if !rk.step(&f, x, step) {
            return Err(Error::numeric(x, "non-finite state during integration"));
        }
        done = (i + 1) as f64 * step;
    }
    let rest = total - done;
    if rest > 0.0 && !rk.step(&f, x, rest) {
        return Err(Error::numeric(x, "non-finite state during integration"));
    }
    Ok(())
}

/// Fixed-step classical RK4 solution of `x' = V(x)` from `x0` over time `t`.
pub fn integrate(sys: &FlowSystem, x0: &TorusPoint, t: f64, step: f64) -> Result<TorusPoint> {
    check_step(step)?;
    if !t.is_finite() {
        return Err(Error::config(format!("flow time must be finite, got {t}")));
    }
    if x0.dims() != sys.dims() {
        return Err(Error::Input("initial point dimension mismatch".into()));
    }
    let mut x = x0.coords().to_vec();
    let mut v = vec![0.0; sys.dims()];
    sys.field.eval(&x, &mut v);
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::numeric(&x, "non-finite field value"));
    }
    let mut rk = Rk4::new(sys.dims());
    advance_raw(sys, &mut rk, &mut x, t, step)?;
    TorusPoint::new(sys.torus(), x)
}

/// States at each of the ascending nonnegative `times`, computed along one
/// trajectory. Output coordinates are reduced.
pub fn trajectory(
    sys: &FlowSystem,
    x0: &[f64],
    times: &[f64],
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    check_step(step)?;
    let mut out = Vec::with_capacity(times.len());
    let mut rk = Rk4::new(sys.dims());
    let mut x = x0.to_vec();
    let mut now = 0.0;
    for &t in times {
        if !(t >= now && t.is_finite()) {
            return Err(Error::config("trajectory sample times must be ascending and finite"));
        }
        advance_raw(sys, &mut rk, &mut x, t - now, step)?;
        now = t;
        let mut r = x.clone();
        sys.torus().reduce_in_place(&mut r);
        out.push(r);
    }
    Ok(out)
}
