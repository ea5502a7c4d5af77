//! Closed one-forms, Liouville classes, fiberwise translations, sublevel
//! containment of exact Lagrangian graphs, and leading-order analysis of
//! exact deformations.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Potential};
use crate::flow::{FlowSystem, FnField};
use crate::grid::GridSpec;
use crate::hamiltonian::{Hamiltonian, HamiltonianSystem};
use crate::lyapunov::{verify_lyapunov_with, LyapunovVerdict, VerifyConfig};
use crate::scalar::ScalarField;
use crate::torus::Torus;

/// Largest curl accepted for a closed form.
pub const CURL_TOL: f64 = 1e-6;
/// Tolerance for `H̃ = 0` on the zero section and for the sign of `F`.
pub const ZERO_SECTION_TOL: f64 = 1e-9;
/// Largest log–log misfit accepted by the order fit.
pub const ORDER_FIT_TOL: f64 = 0.05;

/// How closedness of a one-form is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closedness {
    /// Built as `du` from a periodic potential.
    Exact,
    /// Symmetric Jacobian checked on a probe grid.
    Closed { max_curl: f64 },
}

/// A one-form `θ = Σ θ_j dx^j` with expression components.
#[derive(Debug, Clone)]
pub struct OneForm {
    torus: Torus,
    components: Vec<Expr>,
    potential: Option<Expr>,
}

impl OneForm {
    pub fn new(torus: Torus, components: Vec<Expr>) -> Result<Self> {
        let n = torus.dims();
        if components.len() != n {
            return Err(Error::config(format!(
                "one-form has {} components on a {n}-torus",
                components.len()
            )));
        }
        if let Some(e) = components.iter().find(|e| e.arity() > n || e.uses_param()) {
            return Err(Error::Expr(format!("component {e} is not a function of x1..x{n}")));
        }
        Ok(Self {
            torus,
            components,
            potential: None,
        })
    }

    pub fn parse(torus: Torus, sources: &[&str]) -> Result<Self> {
        let comps = sources
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(torus, comps)
    }

    /// `du` for a potential `u` on the torus.
    pub fn exact(torus: Torus, potential: Expr) -> Result<Self> {
        let n = torus.dims();
        let p = Potential::new(potential.clone(), n)?;
        let comps = p.expr().gradient(n);
        let mut form = Self::new(torus, comps)?;
        form.potential = Some(potential);
        Ok(form)
    }

    pub fn constant(torus: Torus, c: &[f64]) -> Result<Self> {
        Self::new(torus, c.iter().map(|&v| Expr::Const(v)).collect())
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn dims(&self) -> usize {
        self.torus.dims()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.components) {
            *o = e.eval(x, 0.0);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims()];
        self.eval_into(x, &mut out);
        out
    }

    /// `θ + η`.
    pub fn add(&self, other: &OneForm) -> Result<OneForm> {
        if self.torus != other.torus {
            return Err(Error::config("one-forms live on different tori"));
        }
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| Expr::Add(Box::new(a.clone()), Box::new(b.clone())))
            .collect();
        let mut sum = OneForm::new(self.torus.clone(), comps)?;
        if let (Some(a), Some(b)) = (&self.potential, &other.potential) {
            sum.potential = Some(Expr::Add(Box::new(a.clone()), Box::new(b.clone())));
        }
        Ok(sum)
    }

    /// Largest `|∂θ_j/∂x_k − ∂θ_k/∂x_j|` and `|θ(x + P_j e_j) − θ(x)|` over `probe`.
    pub fn max_defect(&self, probe: &GridSpec) -> f64 {
        let n = self.dims();
        let jac: Vec<Vec<Expr>> = self
            .components
            .iter()
            .map(|e| (0..n).map(|k| e.derivative(k)).collect())
            .collect();
        (0..probe.len())
            .into_par_iter()
            .map(|i| {
                let x = probe.coords(i);
                let mut worst: f64 = 0.0;
                for j in 0..n {
                    for k in (j + 1)..n {
                        let c = jac[j][k].eval(&x, 0.0) - jac[k][j].eval(&x, 0.0);
                        worst = worst.max(c.abs());
                    }
                }
                let base = self.eval(&x);
                let mut xs = x.clone();
                for j in 0..n {
                    xs[j] += self.torus.period(j);
                    let shifted = self.eval(&xs);
                    xs[j] = x[j];
                    for (a, b) in base.iter().zip(&shifted) {
                        worst = worst.max((a - b).abs());
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Closedness certificate; a geometry error when the curl check fails.
    pub fn certify(&self, probe: &GridSpec) -> Result<Closedness> {
        if probe.torus() != &self.torus {
            return Err(Error::config("probe grid lives on another torus"));
        }
        if let Some(u) = &self.potential {
            let defect = periodicity_defect(u, probe);
            if defect > CURL_TOL {
                return Err(Error::Geometry(format!(
                    "potential {u} is not periodic (defect {defect:.3e})"
                )));
            }
            return Ok(Closedness::Exact);
        }
        let c = self.max_defect(probe);
        if c > CURL_TOL {
            return Err(Error::Geometry(format!(
                "one-form is not closed and periodic: defect {c:.3e} exceeds {CURL_TOL:e}"
            )));
        }
        Ok(Closedness::Closed { max_curl: c })
    }
}

fn periodicity_defect(u: &Expr, probe: &GridSpec) -> f64 {
    let torus = probe.torus();
    (0..probe.len())
        .map(|i| {
            let x = probe.coords(i);
            let base = u.eval(&x, 0.0);
            (0..torus.dims())
                .map(|j| {
                    let mut xs = x.clone();
                    xs[j] += torus.period(j);
                    (u.eval(&xs, 0.0) - base).abs()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Cohomology class of a closed one-form in the basis `dx^1, …, dx^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleClass {
    pub components: Vec<f64>,
}

impl LiouvilleClass {
    pub fn distance(&self, other: &LiouvilleClass) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &LiouvilleClass) -> LiouvilleClass {
        LiouvilleClass {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Component `j` is the grid average of `θ_j`, i.e. `∮ θ` over the `j`-th
/// cycle divided by `P_j`.
pub fn liouville_class(theta: &OneForm, probe: &GridSpec) -> Result<LiouvilleClass> {
    theta.certify(probe)?;
    let n = theta.dims();
    let sums = (0..probe.len())
        .into_par_iter()
        .map(|i| theta.eval(&probe.coords(i)))
        .reduce(
            || vec![0.0; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let count = probe.len() as f64;
    Ok(LiouvilleClass {
        components: sums.into_iter().map(|s| s / count).collect(),
    })
}

/// `H̃(x, y) = H(x, y + θ(x)) − c`.
struct Translated {
    inner: Arc<dyn Hamiltonian>,
    theta: OneForm,
    jac: Vec<Expr>,
    shift: f64,
}

impl Translated {
    fn moved(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut t = self.theta.eval(x);
        t.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        t
    }
}

impl Hamiltonian for Translated {
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.inner.value(x, &self.moved(x, y)) - self.shift
    }

    fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = x.len();
        let z = self.moved(x, y);
        self.inner.grad_x(x, &z, out);
        let mut gy = vec![0.0; n];
        self.inner.grad_y(x, &z, &mut gy);
        // chain rule through θ: Σ_j ∂H/∂y_j ∂θ_j/∂x_k
        for (k, o) in out.iter_mut().enumerate() {
            *o += (0..n).map(|j| gy[j] * self.jac[j * n + k].eval(x, 0.0)).sum::<f64>();
        }
    }

    fn grad_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.inner.grad_y(x, &self.moved(x, y), out);
    }
}

/// The symplectic change `(x, y) ↦ (x, y + θ(x))` applied to `H`, shifted to
/// energy level zero.
pub fn fiberwise_translate(h: &HamiltonianSystem, theta: &OneForm) -> Result<HamiltonianSystem> {
    if h.torus() != theta.torus() {
        return Err(Error::config("hamiltonian and one-form live on different tori"));
    }
    let n = theta.dims();
    let jac = theta
        .components()
        .iter()
        .flat_map(|e| (0..n).map(move |k| e.derivative(k)))
        .collect();
    let t = Translated {
        inner: h.hamiltonian().clone(),
        theta: theta.clone(),
        jac,
        shift: h.energy_level(),
    };
    HamiltonianSystem::new(
        format!("{}+theta", h.label()),
        h.torus().clone(),
        Arc::new(t),
        0.0,
    )
}

/// Where to probe `F ≥ 0`: every node of `grid` against a cube of momenta.
#[derive(Debug, Clone)]
pub struct MomentumProbe {
    pub grid: GridSpec,
    pub y_radius: f64,
    pub y_per_axis: usize,
}

impl MomentumProbe {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            y_radius: 2.0,
            y_per_axis: 9,
        }
    }

    fn momenta(&self) -> Vec<Vec<f64>> {
        let n = self.grid.dims();
        let k = self.y_per_axis.max(2);
        let total = k.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                (0..n)
                    .map(|_| {
                        let i = idx % k;
                        idx /= k;
                        -self.y_radius + 2.0 * self.y_radius * i as f64 / (k - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// `H̃ = ⟨y, Y(x)⟩ + F(x, y)` around an invariant zero section.
#[derive(Clone)]
pub struct ZeroSectionReduction {
    hamiltonian: HamiltonianSystem,
    flow: FlowSystem,
    /// Smallest `F` seen on the probe set.
    pub min_f: f64,
}

impl fmt::Debug for ZeroSectionReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZeroSectionReduction")
            .field("hamiltonian", &self.hamiltonian)
            .field("min_f", &self.min_f)
            .finish()
    }
}

impl ZeroSectionReduction {
    /// `Y(x) = d_y H̃(x, 0)`.
    pub fn flow(&self) -> &FlowSystem {
        &self.flow
    }

    pub fn hamiltonian(&self) -> &HamiltonianSystem {
        &self.hamiltonian
    }

    /// `F(x, y) = H̃(x, y) − ⟨y, Y(x)⟩`.
    pub fn f(&self, x: &[f64], y: &[f64]) -> f64 {
        let v = self.flow.eval(x);
        self.hamiltonian.value(x, y) - y.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
    }
}

pub fn zero_section_reduction(
    h: &HamiltonianSystem,
    probe: &MomentumProbe,
) -> Result<ZeroSectionReduction> {
    if probe.grid.torus() != h.torus() {
        return Err(Error::config("probe grid lives on another torus"));
    }
    let n = h.dims();
    let zero = vec![0.0; n];
    for i in 0..probe.grid.len() {
        let x = probe.grid.coords(i);
        let v = h.value(&x, &zero);
        if !(v.abs() <= ZERO_SECTION_TOL) {
            return Err(Error::Geometry(format!(
                "hamiltonian is {v:.3e} on the zero section at {x:?}, not 0"
            )));
        }
    }
    let ham = h.hamiltonian().clone();
    let field = FnField::new(n, move |x, out| {
        let zero = vec![0.0; x.len()];
        ham.grad_y(x, &zero, out);
    });
    let flow = FlowSystem::new(format!("{}-zero-section", h.label()), h.torus().clone(), Arc::new(field))?;
    let mut red = ZeroSectionReduction {
        hamiltonian: h.clone(),
        flow,
        min_f: f64::INFINITY,
    };
    let momenta = probe.momenta();
    let worst = (0..probe.grid.len())
        .into_par_iter()
        .map(|i| {
            let x = probe.grid.coords(i);
            let v = red.flow.eval(&x);
            let mut best = (f64::INFINITY, Vec::new(), 0.0);
            for y in &momenta {
                let lin: f64 = y.iter().zip(&v).map(|(a, b)| a * b).sum();
                let hv = red.hamiltonian.value(&x, y);
                let f = hv - lin;
                let slack = ZERO_SECTION_TOL * (1.0 + hv.abs() + lin.abs());
                if f + slack < best.0 + best.2 || best.1.is_empty() {
                    best = (f, y.clone(), slack);
                }
            }
            (best.0, x, best.1, best.2)
        })
        .collect::<Vec<_>>();
    for (f, x, y, slack) in worst {
        if f < -slack {
            return Err(Error::Convexity { x, y, value: f });
        }
        red.min_f = red.min_f.min(f);
    }
    Ok(red)
}

/// A potential `u(x)` possibly depending on a deformation parameter `r`.
pub trait ScalarPotential: Send + Sync {
    fn dims(&self) -> usize;
    fn value(&self, x: &[f64], r: f64) -> f64;
    fn gradient(&self, x: &[f64], r: f64, out: &mut [f64]);
}

impl ScalarPotential for Potential {
    fn dims(&self) -> usize {
        Potential::dims(self)
    }

    fn value(&self, x: &[f64], r: f64) -> f64 {
        Potential::value(self, x, r)
    }

    fn gradient(&self, x: &[f64], r: f64, out: &mut [f64]) {
        self.gradient_into(x, r, out)
    }
}

type ValueFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// Closure-backed potential. Without an analytic gradient, central
/// differences with spacing `1e-4 · P_j` are used.
pub struct FnPotential {
    periods: Vec<f64>,
    value: Box<ValueFn>,
    gradient: Option<Box<GradFn>>,
}

impl FnPotential {
    pub fn new(torus: &Torus, value: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            periods: torus.periods().to_vec(),
            value: Box::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        g: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }
}

impl ScalarPotential for FnPotential {
    fn dims(&self) -> usize {
        self.periods.len()
    }

    fn value(&self, x: &[f64], r: f64) -> f64 {
        (self.value)(x, r)
    }

    fn gradient(&self, x: &[f64], r: f64, out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            return g(x, r, out);
        }
        let mut p = x.to_vec();
        for (j, o) in out.iter_mut().enumerate() {
            let d = 1e-4 * self.periods[j];
            p[j] = x[j] + d;
            let a = (self.value)(&p, r);
            p[j] = x[j] - d;
            let b = (self.value)(&p, r);
            p[j] = x[j];
            *o = (a - b) / (2.0 * d);
        }
    }
}

/// Position of `du(T^n)` relative to `U_Σ = {H < c}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Containment {
    /// `H ∘ du = c` everywhere.
    OnLevel,
    /// Inside the closure, touching `Σ` somewhere or not.
    InsideClosure,
    /// Outside `U_Σ` and touching `Σ`.
    OutsideTouching,
    /// Strictly outside the closure.
    Outside,
    /// Meets both sides of `Σ`.
    Crossing,
}

impl Containment {
    pub fn describe(self) -> &'static str {
        match self {
            Containment::OnLevel => "contained in Sigma",
            Containment::InsideClosure => "inside closure(U_Sigma)",
            Containment::OutsideTouching => "outside closure(U_Sigma) boundary-touching",
            Containment::Outside => "outside closure(U_Sigma)",
            Containment::Crossing => "crosses Sigma",
        }
    }

    pub fn inside_closure(self) -> bool {
        matches!(self, Containment::OnLevel | Containment::InsideClosure)
    }

    pub fn outside(self) -> bool {
        matches!(
            self,
            Containment::OnLevel | Containment::OutsideTouching | Containment::Outside
        )
    }
}

/// Extremes of `s(x) = H(x, du(x)) − c` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublevelReport {
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
    pub tol: f64,
    pub verdict: Containment,
}

pub fn sublevel_check(
    h: &HamiltonianSystem,
    c: f64,
    u: &dyn ScalarPotential,
    r: f64,
    grid: &GridSpec,
) -> Result<SublevelReport> {
    sublevel_check_tol(h, c, u, r, grid, ZERO_SECTION_TOL)
}

pub fn sublevel_check_tol(
    h: &HamiltonianSystem,
    c: f64,
    u: &dyn ScalarPotential,
    r: f64,
    grid: &GridSpec,
    tol: f64,
) -> Result<SublevelReport> {
    if grid.torus() != h.torus() || u.dims() != h.dims() {
        return Err(Error::config("potential, hamiltonian and grid must share the torus"));
    }
    let n = h.dims();
    let vals = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.coords(i);
            let mut p = vec![0.0; n];
            u.gradient(&x, r, &mut p);
            let s = h.value(&x, &p) - c;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::numeric(&x, "non-finite H(x, du(x))"))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mut imin, mut imax) = (0, 0);
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[imin] {
            imin = i;
        }
        if *v > vals[imax] {
            imax = i;
        }
    }
    let (min, max) = (vals[imin], vals[imax]);
    let verdict = if min >= -tol && max <= tol {
        Containment::OnLevel
    } else if max <= tol {
        Containment::InsideClosure
    } else if min > tol {
        Containment::Outside
    } else if min >= -tol {
        Containment::OutsideTouching
    } else {
        Containment::Crossing
    };
    Ok(SublevelReport {
        min,
        max,
        argmin: grid.coords(imin),
        argmax: grid.coords(imax),
        tol,
        verdict,
    })
}

/// Settings shared by the rigidity probes.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Containment tolerance.
    pub tol: f64,
    /// `‖du‖∞` below this counts as `du ≈ 0`.
    pub du_tol: f64,
    /// Lyapunov checks: samples, probe times and tolerance.
    pub samples: Vec<Vec<f64>>,
    pub probe_times: Vec<f64>,
    pub lyapunov_tol: f64,
}

/// Outcome of the inner-rigidity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerRigidityReport {
    pub containment: SublevelReport,
    /// `u` checked as a Lyapunov function of the reduced flow, when contained.
    pub lyapunov: Option<LyapunovVerdict>,
    pub du_sup: f64,
    pub reduced_flow_scr: bool,
    pub pass: bool,
    pub summary: String,
}

/// For `u` with `du(T^n)` in the closed sublevel of `H̃` (energy 0, zero
/// section invariant): when the reduced flow is strongly chain recurrent
/// everywhere, `u` must be a first integral and `du ≈ 0`. Passes when
/// `du ≈ 0` or containment fails.
pub fn inner_rigidity_probe(
    reduction: &ZeroSectionReduction,
    u: &dyn ScalarPotential,
    grid: &GridSpec,
    reduced_flow_scr: bool,
    cfg: &ProbeConfig,
) -> Result<InnerRigidityReport> {
    let h = reduction.hamiltonian();
    let containment = sublevel_check_tol(h, 0.0, u, 0.0, grid, cfg.tol)?;
    let n = grid.dims();
    let du_sup = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut p = vec![0.0; n];
            u.gradient(&grid.coords(i), 0.0, &mut p);
            p.iter().map(|v| v.abs()).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    if !containment.verdict.inside_closure() {
        return Ok(InnerRigidityReport {
            summary: format!("containment fails ({})", containment.verdict.describe()),
            containment,
            lyapunov: None,
            du_sup,
            reduced_flow_scr,
            pass: true,
        });
    }
    let field = ScalarField::from_fn(grid.clone(), |x| u.value(x, 0.0))?;
    let vcfg = VerifyConfig::new(cfg.probe_times.clone(), cfg.lyapunov_tol).without_neutral_set();
    let verdict = verify_lyapunov_with(&field, reduction.flow(), &cfg.samples, &vcfg)?;
    let flat = du_sup <= cfg.du_tol;
    let (pass, summary) = match (flat, reduced_flow_scr) {
        (true, _) => (true, "du = 0 up to tolerance: the graph is the zero section".to_string()),
        (false, true) => (
            false,
            format!(
                "contained graph with ‖du‖ = {du_sup:.3e} over a strongly chain recurrent flow (first integral: {})",
                verdict.is_first_integral
            ),
        ),
        (false, false) => (
            true,
            "contained graph away from the zero section; the flow is not strongly chain recurrent everywhere"
                .to_string(),
        ),
    };
    Ok(InnerRigidityReport {
        containment,
        lyapunov: Some(verdict),
        du_sup,
        reduced_flow_scr,
        pass,
        summary,
    })
}

/// Exact-graph deformation `Λ_r = du_r(T^n)` sampled at parameters `r_i`.
#[derive(Clone)]
pub struct DeformationFamily {
    pub samples: Vec<f64>,
    pub potential: Arc<dyn ScalarPotential>,
    /// Caller asserts analyticity in `r`; the order fit cannot certify it.
    pub analytic: bool,
    pub label: String,
}

impl fmt::Debug for DeformationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeformationFamily")
            .field("label", &self.label)
            .field("samples", &self.samples)
            .field("analytic", &self.analytic)
            .finish()
    }
}

impl DeformationFamily {
    pub fn new(
        label: impl Into<String>,
        potential: Arc<dyn ScalarPotential>,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::config("a deformation family needs at least 4 parameter samples"));
        }
        if samples.windows(2).any(|w| !(w[0] < w[1])) || !(samples[0] > 0.0) {
            return Err(Error::config("parameter samples must be positive and strictly increasing"));
        }
        if samples.last().unwrap() / samples[0] < 10.0 - 1e-12 {
            return Err(Error::config("parameter samples must span at least a decade"));
        }
        Ok(Self {
            samples,
            potential,
            analytic: true,
            label: label.into(),
        })
    }

    /// Family from an expression in `x1..xn` and `r`.
    pub fn parse(torus: &Torus, src: &str, samples: Vec<f64>) -> Result<Self> {
        let p = Potential::parse(src, torus.dims())?;
        Self::new(src, Arc::new(p), samples)
    }

    /// `u_r(x) − u_r(0)`, so that constant shifts do not count.
    pub fn normalized(&self, x: &[f64], r: f64) -> f64 {
        let origin = vec![0.0; x.len()];
        self.potential.value(x, r) - self.potential.value(&origin, r)
    }
}

/// Default parameter samples: a geometric sweep over `[0.01, 0.1]`.
pub fn default_family_samples() -> Vec<f64> {
    (0..6).map(|k| 0.01 * 10f64.powf(k as f64 / 5.0)).collect()
}

/// Neville extrapolation to `r = 0` through `(r_i, w_i)`.
fn extrapolate_to_zero(r: &[f64], w: &[f64]) -> f64 {
    let mut p = w.to_vec();
    let n = r.len();
    for k in 1..n {
        for i in 0..(n - k) {
            p[i] = (r[i + k] * p[i] - r[i] * p[i + 1]) / (r[i + k] - r[i]);
        }
    }
    p[0]
}

/// The order fit and recovered leading coefficient of a family.
#[derive(Debug, Clone, Serialize)]
pub struct LeadingTerm {
    pub order: u32,
    pub slope: f64,
    pub residual: f64,
    pub v: ScalarField,
    /// Spread between the two- and three-point extrapolations.
    pub richardson_error: f64,
    pub min_dv_dot_y: f64,
    pub dv_dot_y_ok: bool,
    /// `−v` checked as a Lyapunov function of the reduced flow.
    pub verdict: LyapunovVerdict,
    pub v_constant: bool,
    pub analytic_assumed: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum OuterOutcome {
    /// `Λ_r = Λ` for every sampled `r`.
    Degenerate { notice: String },
    Leading(Box<LeadingTerm>),
}

impl OuterOutcome {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, OuterOutcome::Degenerate { .. })
    }

    pub fn leading(&self) -> Option<&LeadingTerm> {
        match self {
            OuterOutcome::Leading(l) => Some(l),
            OuterOutcome::Degenerate { .. } => None,
        }
    }
}

/// Below this sup-norm a family member counts as the zero potential.
const DEGENERATE_NORM: f64 = 1e-12;

/// `u_r = r^h v + O(r^{h+1})`: fit `h`, extrapolate `v`, check `dv·Y ≥ −tol`
/// and test `−v` as a Lyapunov function for `Y`.
pub fn outer_leading_term(
    fam: &DeformationFamily,
    grid: &GridSpec,
    reduced: &FlowSystem,
    cfg: &ProbeConfig,
) -> Result<OuterOutcome> {
    if grid.torus() != reduced.torus() || fam.potential.dims() != grid.dims() {
        return Err(Error::config("family, grid and reduced flow must share the torus"));
    }
    let rs = &fam.samples;
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.coords(i)).collect();
    let norms: Vec<f64> = rs
        .iter()
        .map(|&r| {
            nodes
                .par_iter()
                .map(|x| fam.normalized(x, r).abs())
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    if norms.iter().all(|&n| n <= DEGENERATE_NORM) {
        return Ok(OuterOutcome::Degenerate {
            notice: format!(
                "family {} is identically zero up to constants: Lambda_r = Lambda",
                fam.label
            ),
        });
    }
    // vanishing at some samples only: no power law fits
    if norms.iter().any(|&n| n <= DEGENERATE_NORM) {
        return Err(Error::Analyticity {
            slope: f64::NAN,
            residual: f64::INFINITY,
        });
    }
    let (slope, fit_residual) = loglog_fit(rs, &norms);
    let order = slope.round();
    let residual = fit_residual.max((slope - order).abs());
    if residual > ORDER_FIT_TOL || order < 1.0 {
        return Err(Error::Analyticity { slope, residual });
    }
    let order = order as u32;
    let r3 = &rs[..3];
    let v_at = |x: &[f64]| -> (f64, f64) {
        let w: Vec<f64> = r3
            .iter()
            .map(|&r| fam.normalized(x, r) / r.powi(order as i32))
            .collect();
        let two = extrapolate_to_zero(&r3[..2], &w[..2]);
        let three = extrapolate_to_zero(r3, &w);
        (three, (three - two).abs())
    };
    let vals: Vec<(f64, f64)> = nodes.par_iter().map(|x| v_at(x)).collect();
    let richardson_error = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    let v = ScalarField::new(grid.clone(), vals.iter().map(|v| v.0).collect())?;

    // dv·Y by central differences of the pointwise extrapolant
    let min_dv_dot_y = nodes
        .par_iter()
        .map(|x| {
            let y = reduced.eval(x);
            let mut p = x.clone();
            let mut dot = 0.0;
            for j in 0..x.len() {
                if y[j] == 0.0 {
                    continue;
                }
                let d = 1e-4 * grid.torus().period(j);
                p[j] = x[j] + d;
                let a = v_at(&p).0;
                p[j] = x[j] - d;
                let b = v_at(&p).0;
                p[j] = x[j];
                dot += (a - b) / (2.0 * d) * y[j];
            }
            dot
        })
        .reduce(|| f64::INFINITY, f64::min);
    let neg = v.scaled(-1.0)?;
    let vcfg = VerifyConfig::new(cfg.probe_times.clone(), cfg.lyapunov_tol).without_neutral_set();
    let verdict = verify_lyapunov_with(&neg, reduced, &cfg.samples, &vcfg)?;
    let v_constant = v.range() <= cfg.lyapunov_tol;
    Ok(OuterOutcome::Leading(Box::new(LeadingTerm {
        order,
        slope,
        residual,
        richardson_error,
        min_dv_dot_y,
        dv_dot_y_ok: min_dv_dot_y >= -cfg.tol,
        verdict,
        v_constant,
        analytic_assumed: fam.analytic,
        v,
    })))
}

/// Least-squares slope of `ln n` against `ln r`, and the RMS residual.
fn loglog_fit(r: &[f64], n: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    (slope, rms)
}

/// One family in an admissibility sweep.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyProbe {
    pub label: String,
    /// `H ∘ du_r ≥ 0` at every sampled `r`.
    pub admissible: bool,
    pub min_s: f64,
    pub outcome: Option<OuterOutcome>,
}

impl FamilyProbe {
    /// Admissible families must end in the degenerate notice or a constant `v`.
    pub fn rigid(&self) -> bool {
        match (&self.outcome, self.admissible) {
            (_, false) => true,
            (Some(OuterOutcome::Degenerate { .. }), _) => true,
            (Some(OuterOutcome::Leading(l)), _) => l.v_constant,
            (None, true) => false,
        }
    }
}

/// Run each family through `sublevel_check` at every sample and, for the
/// admissible ones, through `outer_leading_term`.
pub fn admissible_family_probe(
    reduction: &ZeroSectionReduction,
    families: &[DeformationFamily],
    grid: &GridSpec,
    cfg: &ProbeConfig,
) -> Result<Vec<FamilyProbe>> {
    let h = reduction.hamiltonian();
    families
        .iter()
        .map(|fam| {
            let mut min_s = f64::INFINITY;
            for &r in &fam.samples {
                let rep = sublevel_check_tol(h, 0.0, fam.potential.as_ref(), r, grid, cfg.tol)?;
                min_s = min_s.min(rep.min);
            }
            let admissible = min_s >= -cfg.tol;
            let outcome = if admissible {
                Some(outer_leading_term(fam, grid, reduction.flow(), cfg)?)
            } else {
                None
            };
            Ok(FamilyProbe {
                label: fam.label.clone(),
                admissible,
                min_s,
                outcome,
            })
        })
        .collect()
}

/// Trigonometric families tried against a rotation flow: the constant and
/// zero families are admissible, the others leave the closed superlevel set.
pub fn rotation_probe_families(torus: &Torus) -> Result<Vec<DeformationFamily>> {
    [
        "0*r",
        "0.3*r",
        "r*sin(2*pi*x1)",
        "r*cos(2*pi*x2)",
        "r*(sin(2*pi*x1)+cos(2*pi*x2))",
        "r^2*sin(2*pi*(x1-x2))",
        "r*sin(2*pi*x1)+r^2*cos(2*pi*x2)",
    ]
    .iter()
    .map(|s| DeformationFamily::parse(torus, s, default_family_samples()))
    .collect()
}
