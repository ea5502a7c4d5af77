//! Built-in systems, loadable by label with `key = value` parameters.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::cantor::{build_cantor_flow_with, CantorSpec, PhiProfile};
use crate::error::{Error, Result};
use crate::expr::ExprField;
use crate::flow::{FlowSystem, FnField};
use crate::hamiltonian::{mane_hamiltonian, HamiltonianSystem, MechanicalHamiltonian};
use crate::torus::Torus;

pub const LABELS: [&str; 7] = [
    "cantor-fat",
    "cantor-null",
    "rotation",
    "gradient-circle",
    "mane",
    "pps-example",
    "outer-example",
];

/// Golden-ratio conjugate, the default second rotation frequency.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Parsed `key = value` lines. Blank lines and `#` comments are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value, got {raw:?}", no + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", no + 1)));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self(
            pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    /// Later values win.
    pub fn merged(&self, over: &KeyValues) -> KeyValues {
        let mut m = self.0.clone();
        m.extend(over.0.iter().map(|(k, v)| (k.clone(), v.clone())));
        KeyValues(m)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::config(format!("{key}: not a number: {s:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::config(format!("{key} must be finite")))
                }
            }
        }
    }

    pub fn u32_or(&self, key: &str, default: u32) -> Result<u32> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::config(format!("{key}: not a nonnegative integer: {s:?}"))),
        }
    }

    /// Errors on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::config(format!(
                "unknown parameter {k:?}; expected one of {allowed:?}"
            ))),
            None => Ok(()),
        }
    }
}

/// A catalog entry ready for analysis.
#[derive(Debug, Clone)]
pub struct CatalogSystem {
    pub label: String,
    /// The flow under study; for Hamiltonian entries, the flow on the zero section.
    pub flow: FlowSystem,
    pub hamiltonian: Option<HamiltonianSystem>,
    pub cantor: Option<CantorSpec>,
    /// Known to be strongly chain transitive.
    pub transitive: bool,
}

/// Zero set `[1/3, 2/3]`: `f = dist(s, [1/3, 2/3])^2` on `R/Z`.
pub fn outer_f(s: f64) -> f64 {
    let d = outer_signed_dist(s);
    d * d
}

pub fn outer_f_prime(s: f64) -> f64 {
    2.0 * outer_signed_dist(s)
}

/// Signed distance to the band, positive above `2/3` and negative below `1/3`
/// (measured the short way round the circle).
fn outer_signed_dist(s: f64) -> f64 {
    let s = s.rem_euclid(1.0);
    let (a, b) = (1.0 / 3.0, 2.0 / 3.0);
    if (a..=b).contains(&s) {
        0.0
    } else if s > b {
        let up = s - b;
        let down = 1.0 - s + a;
        if up <= down {
            up
        } else {
            -down
        }
    } else {
        let down = a - s;
        let up = s + 1.0 - b;
        if down <= up {
            -down
        } else {
            up
        }
    }
}

/// `x1' = -f(x1)` on `R/Z`, the first factor of the outer example's zero-section flow.
pub fn outer_subsystem() -> FlowSystem {
    let f = FnField::new(1, |x, o| o[0] = -outer_f(x[0]))
        .with_jacobian(|x, o| o[0] = -outer_f_prime(x[0]));
    FlowSystem::new("outer-example-x1", Torus::unit(1), Arc::new(f))
        .expect("1-d field on the circle")
        .with_lipschitz_bound(4.0 / 3.0)
}

/// Leading term `g(x1)` of the outer example's deformation family: `g' = w − q/2`
/// with `w = sin²(3π(s − 1/3))` on the band `[1/3, 2/3]` and
/// `q = sin²((3π/2)(s − 2/3))` on the rest of the circle `[2/3, 4/3]`.
/// `g' ≥ 0` where `f = 0`, `g' ≤ 0` where `f > 0`, and `g(1/3) = 0`.
pub fn outer_family_g(s: f64) -> f64 {
    // ∫ sin²(a(t − t0)) dt from t0 to t
    let prim = |t: f64, t0: f64, a: f64| 0.5 * (t - t0) - (2.0 * a * (t - t0)).sin() / (4.0 * a);
    let t = lift_past_band(s);
    if t <= 2.0 / 3.0 {
        prim(t, 1.0 / 3.0, 3.0 * PI)
    } else {
        prim(2.0 / 3.0, 1.0 / 3.0, 3.0 * PI) - 0.5 * prim(t, 2.0 / 3.0, 1.5 * PI)
    }
}

pub fn outer_family_g_prime(s: f64) -> f64 {
    let t = lift_past_band(s);
    if t <= 2.0 / 3.0 {
        (3.0 * PI * (t - 1.0 / 3.0)).sin().powi(2)
    } else {
        -0.5 * (1.5 * PI * (t - 2.0 / 3.0)).sin().powi(2)
    }
}

/// Representative of `s` in `[1/3, 4/3)`.
fn lift_past_band(s: f64) -> f64 {
    let s = s.rem_euclid(1.0);
    if s < 1.0 / 3.0 {
        s + 1.0
    } else {
        s
    }
}

fn rotation(a1: f64, a2: f64) -> FlowSystem {
    let f = FnField::new(2, move |_, o| {
        o[0] = a1;
        o[1] = a2;
    })
    .with_jacobian(|_, o| o.fill(0.0));
    FlowSystem::new("rotation", Torus::unit(2), Arc::new(f))
        .expect("2-d field on T^2")
        .with_lipschitz_bound(0.0)
}

fn profile(kv: &KeyValues) -> Result<PhiProfile> {
    match kv.get("profile").unwrap_or("lipschitz") {
        "lipschitz" => Ok(PhiProfile::Lipschitz),
        "squared" => Ok(PhiProfile::Squared),
        p => Err(Error::config(format!("profile must be lipschitz or squared, got {p:?}"))),
    }
}

fn mechanical(label: &str, drift: FlowSystem) -> Result<HamiltonianSystem> {
    let torus = drift.torus().clone();
    let h = MechanicalHamiltonian::new(1.0, drift)?;
    HamiltonianSystem::new(label, torus, Arc::new(h), 0.0)
}

/// Load a catalog system by label.
pub fn load(label: &str, kv: &KeyValues) -> Result<CatalogSystem> {
    let plain = |flow: FlowSystem, transitive| CatalogSystem {
        label: label.to_string(),
        flow,
        hamiltonian: None,
        cantor: None,
        transitive,
    };
    match label {
        "cantor-fat" | "cantor-null" => {
            kv.check_keys(&["delta", "depth", "profile"])?;
            let spec = if label == "cantor-fat" {
                CantorSpec::fat(kv.f64_or("delta", 0.25)?, kv.u32_or("depth", 12)?)
            } else {
                if kv.get("delta").is_some() {
                    return Err(Error::config("cantor-null takes no delta"));
                }
                CantorSpec::null(kv.u32_or("depth", 1)?)
            };
            let flow = build_cantor_flow_with(&spec, profile(kv)?)?;
            Ok(CatalogSystem {
                cantor: Some(spec),
                ..plain(flow, false)
            })
        }
        "rotation" => {
            kv.check_keys(&["alpha1", "alpha2"])?;
            let (a1, a2) = (kv.f64_or("alpha1", 1.0)?, kv.f64_or("alpha2", GOLDEN)?);
            Ok(plain(rotation(a1, a2), is_irrational_pair(a1, a2)))
        }
        "gradient-circle" => {
            kv.check_keys(&[])?;
            let f = FnField::new(1, |x, o| o[0] = -(2.0 * PI * x[0]).sin())
                .with_jacobian(|x, o| o[0] = -2.0 * PI * (2.0 * PI * x[0]).cos());
            let flow = FlowSystem::new(label, Torus::unit(1), Arc::new(f))?
                .with_lipschitz_bound(2.0 * PI);
            Ok(plain(flow, false))
        }
        "mane" => {
            kv.check_keys(&["y1", "y2", "period"])?;
            let period = kv.f64_or("period", 1.0)?;
            let default = format!("{GOLDEN}");
            let c1 = kv.get("y1").unwrap_or("1");
            let c2 = kv.get("y2").unwrap_or(&default);
            let field = ExprField::parse(&[c1, c2])?;
            let flow = FlowSystem::new(label, Torus::uniform(2, period)?, field.into_arc())?;
            // constant rotations with an irrational ratio are the transitive case
            let transitive = kv.get("y1").is_none() && kv.get("y2").is_none();
            let h = mane_hamiltonian(&flow);
            Ok(CatalogSystem {
                hamiltonian: Some(h),
                ..plain(flow, transitive)
            })
        }
        "pps-example" => {
            kv.check_keys(&["period"])?;
            let period = kv.f64_or("period", 2.0 * PI)?;
            if period <= 0.0 || ((period / PI).round() - period / PI).abs() > 1e-9 || period < PI - 1e-9 {
                return Err(Error::config(format!(
                    "pps-example needs a period that is a multiple of pi, got {period}"
                )));
            }
            let f = FnField::new(2, |x, o| {
                o[0] = -(1.0 - (2.0 * x[0]).cos());
                o[1] = -1.0;
            })
            .with_jacobian(|x, o| {
                o.fill(0.0);
                o[0] = -2.0 * (2.0 * x[0]).sin();
            });
            let flow = FlowSystem::new(label, Torus::uniform(2, period)?, Arc::new(f))?;
            let h = mechanical(label, flow.clone())?;
            Ok(CatalogSystem {
                hamiltonian: Some(h),
                ..plain(flow, false)
            })
        }
        "outer-example" => {
            kv.check_keys(&["subsystem"])?;
            let f = FnField::new(2, |x, o| {
                o[0] = -outer_f(x[0]);
                o[1] = -1.0;
            })
            .with_jacobian(|x, o| {
                o.fill(0.0);
                o[0] = -outer_f_prime(x[0]);
            });
            let full = FlowSystem::new(label, Torus::unit(2), Arc::new(f))?;
            let h = mechanical(label, full.clone())?;
            let flow = match kv.get("subsystem").unwrap_or("full") {
                "full" => full,
                "x1" => outer_subsystem(),
                s => return Err(Error::config(format!("subsystem must be full or x1, got {s:?}"))),
            };
            Ok(CatalogSystem {
                hamiltonian: Some(h),
                ..plain(flow, false)
            })
        }
        _ => Err(Error::config(format!(
            "unknown system {label:?}; known systems: {}",
            LABELS.join(", ")
        ))),
    }
}

/// Rough irrationality test for a frequency ratio: no denominator up to 1000.
fn is_irrational_pair(a1: f64, a2: f64) -> bool {
    if a1 == 0.0 || a2 == 0.0 {
        return false;
    }
    let r = a2 / a1;
    !(1..=1000).any(|q| {
        let p = (r * q as f64).round();
        (r * q as f64 - p).abs() < 1e-9
    })
}
