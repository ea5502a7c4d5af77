//! Command dispatch behind the `chainscope` binary.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cantor::{build_cantor_flow, CantorSet, CantorSpec};
use crate::catalog::{self, outer_family_g, outer_family_g_prime, CatalogSystem, KeyValues};
use crate::cost::chain_cost;
use crate::error::{Error, Result};
use crate::expr::Potential;
use crate::flow::{integrate, FlowSystem};
use crate::graph::{build_chain_graph_with, ChainParams};
use crate::grid::GridSpec;
use crate::hamiltonian::mane_hamiltonian;
use crate::lyapunov::{
    explicit_cantor_lyapunov, probe_times, random_samples, synth_lyapunov, synth_tilde,
    synthesis_tolerance, verify_lyapunov_with, VerifyConfig, DEFAULT_SAMPLES,
};
use crate::oracle::{brute_chain_cost, random_instance, InstanceMetric};
use crate::recurrence::{scr_classify_with, RecurrenceClass, RecurrenceReport, Thresholds};
use crate::report::{gnuplot_script, to_json, write_field_csv, write_recurrence_csv, write_text};
use crate::scalar::ScalarField;
use crate::symplectic::{
    default_family_samples, liouville_class, outer_leading_term, sublevel_check,
    zero_section_reduction, DeformationFamily, FnPotential, MomentumProbe, OneForm, OuterOutcome,
    ProbeConfig, ScalarPotential,
};
use crate::torus::{Torus, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Lyapunov,
    Rigidity,
    Outer,
    Examples,
    Selftest,
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "analyze" => Command::Analyze,
            "lyapunov" => Command::Lyapunov,
            "rigidity" => Command::Rigidity,
            "outer" => Command::Outer,
            "examples" => Command::Examples,
            "selftest" => Command::Selftest,
            _ => return Err(Error::config(format!("unknown subcommand {s:?}"))),
        })
    }
}

/// Keys understood by the run itself; every other key goes to the system.
pub const RUN_KEYS: [&str; 19] = [
    "system", "grid", "T", "refine", "levels", "hops", "c_snap", "ratio_max", "c_floor",
    "out", "seed", "base", "potential", "family", "r", "samples", "threads", "energy", "step",
];

/// Fully resolved run settings.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub system: String,
    pub system_params: KeyValues,
    /// Nodes per axis; `None` picks a default from the system's dimension.
    pub grid: Option<usize>,
    /// Refinement factor between ladder levels.
    pub refine: usize,
    pub levels: usize,
    pub t: f64,
    /// Number of hop durations, spread over `[T, 3T]`.
    pub hops: usize,
    pub step: Option<f64>,
    pub thresholds: Thresholds,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub base: Option<Vec<f64>>,
    pub potential: Option<String>,
    pub family: Option<String>,
    pub r_samples: Vec<f64>,
    pub samples: usize,
    pub threads: Option<usize>,
    pub energy: Option<f64>,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(format!("{key} must be positive and finite, got {v}")))
    }
}

fn list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let v: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{key}: not a number: {p:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::config(format!("{key} entries must be finite")))
            }
        })
        .collect()
}

impl RunConfig {
    /// Build from merged `key = value` settings (flags already merged over
    /// the config file).
    pub fn resolve(command: Command, kv: &KeyValues) -> Result<Self> {
        let mut system_params = KeyValues::default();
        for (k, v) in kv.iter() {
            if !RUN_KEYS.contains(&k) {
                system_params.set(k, v);
            }
        }
        let count = |key: &str, default: u32, min: u32| -> Result<usize> {
            let v = kv.u32_or(key, default)?;
            if v < min {
                return Err(Error::config(format!("{key} must be at least {min}, got {v}")));
            }
            Ok(v as usize)
        };
        let d = Thresholds::default();
        let thresholds = Thresholds {
            c_snap: positive("c_snap", kv.f64_or("c_snap", d.c_snap)?)?,
            ratio_max: positive("ratio_max", kv.f64_or("ratio_max", d.ratio_max)?)?,
            c_floor: kv.f64_or("c_floor", d.c_floor)?,
            zero_floor: d.zero_floor,
        };
        thresholds.validate()?;
        let system = kv.get("system").unwrap_or(match command {
            Command::Rigidity => "pps-example",
            Command::Outer => "outer-example",
            _ => "cantor-fat",
        });
        let cfg = RunConfig {
            command,
            system: system.to_string(),
            system_params,
            grid: match kv.get("grid") {
                Some(_) => Some(count("grid", 0, 2)?),
                None => None,
            },
            refine: count("refine", 16, 2)?,
            levels: count("levels", 2, 2)?,
            t: positive("T", kv.f64_or("T", 1.0)?)?,
            hops: count("hops", 4, 1)?,
            step: match kv.get("step") {
                Some(_) => Some(positive("step", kv.f64_or("step", 0.0)?)?),
                None => None,
            },
            thresholds,
            out_dir: PathBuf::from(kv.get("out").unwrap_or("chainscope-out")),
            seed: match kv.get("seed") {
                None => 1,
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::config(format!("seed: not an integer: {s:?}")))?,
            },
            base: kv.get("base").map(|s| list("base", s)).transpose()?,
            potential: kv.get("potential").map(str::to_string),
            family: kv.get("family").map(str::to_string),
            r_samples: match kv.get("r") {
                Some(s) => list("r", s)?,
                None => default_family_samples(),
            },
            samples: count("samples", 1000, 1)?,
            threads: match kv.get("threads") {
                Some(_) => Some(count("threads", 0, 1)?),
                None => None,
            },
            energy: kv.get("energy").map(|_| kv.f64_or("energy", 0.0)).transpose()?,
        };
        Ok(cfg)
    }

    /// Hop durations `T (1 + 2k / (m − 1))`, `k = 0..m`.
    pub fn flow_times(&self) -> Vec<f64> {
        if self.hops == 1 {
            return vec![self.t];
        }
        (0..self.hops)
            .map(|k| self.t * (1.0 + 2.0 * k as f64 / (self.hops - 1) as f64))
            .collect()
    }

    fn chain_params(&self) -> ChainParams {
        let p = ChainParams::new(self.t).with_flow_times(self.flow_times());
        match self.step {
            Some(s) => p.with_step(s),
            None => p,
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    /// One-screen human summary.
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Worker count: `CHAINSCOPE_THREADS` wins over the config.
pub fn worker_count(cfg: &RunConfig) -> Result<Option<usize>> {
    match std::env::var("CHAINSCOPE_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(format!("CHAINSCOPE_THREADS must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(cfg.threads),
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(cfg)? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.command {
        Command::Analyze => analyze(cfg),
        Command::Lyapunov => lyapunov(cfg),
        Command::Rigidity => rigidity(cfg),
        Command::Outer => outer(cfg),
        Command::Examples => examples(cfg),
        Command::Selftest => selftest(cfg),
    })
}

struct Artifacts<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            files: Vec::new(),
        }
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(self.dir, name, text)?;
        self.files.push(self.dir.join(name));
        Ok(())
    }

    fn field(&mut self, name: &str, field: &ScalarField, extra: &[(&str, &[f64])]) -> Result<()> {
        let mut buf = Vec::new();
        write_field_csv(&mut buf, field, extra)?;
        self.text(name, &String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))?)
    }

    fn plot(&mut self, name: &str, data: &str, dims: usize, title: &str, cols: &[(usize, &str)]) -> Result<()> {
        self.text(name, &gnuplot_script(data, dims, title, cols))
    }
}

fn load_system(cfg: &RunConfig) -> Result<CatalogSystem> {
    catalog::load(&cfg.system, &cfg.system_params)
}

fn default_grid(cfg: &RunConfig, dims: usize, one_d: usize, more: usize) -> usize {
    cfg.grid.unwrap_or(if dims == 1 { one_d } else { more })
}

#[derive(Serialize)]
struct AnalyzeSummary<'a> {
    config: &'a RunConfig,
    nodes: usize,
    scr_candidates: usize,
    cr_only: usize,
    non_recurrent: usize,
    /// For Cantor systems: SCR-candidates farther than one cell from the zero set.
    scr_outside_zero_set: Option<usize>,
    report: &'a RecurrenceReport,
}

fn analyze(cfg: &RunConfig) -> Result<Outcome> {
    let sys = load_system(cfg)?;
    let torus = sys.flow.torus().clone();
    let n = default_grid(cfg, torus.dims(), 512, 32);
    let base = GridSpec::uniform(torus.clone(), n)?;
    let ladder: Vec<GridSpec> = (0..cfg.levels)
        .map(|l| base.refined(cfg.refine.pow(l as u32)))
        .collect::<Result<_>>()?;
    let rep = scr_classify_with(&sys.flow, &ladder, &cfg.chain_params(), &cfg.thresholds)?;
    let outside = match &sys.cantor {
        Some(spec) => {
            let set = CantorSet::build(spec)?;
            Some(
                rep.nodes_of(RecurrenceClass::Scr)
                    .filter(|r| set.dist_to_zero_set(r.coords[0]) > base.h_max())
                    .count(),
            )
        }
        None => None,
    };
    let summary = AnalyzeSummary {
        config: cfg,
        nodes: rep.nodes.len(),
        scr_candidates: rep.count(RecurrenceClass::Scr),
        cr_only: rep.count(RecurrenceClass::CrOnly),
        non_recurrent: rep.count(RecurrenceClass::NonRecurrent),
        scr_outside_zero_set: outside,
        report: &rep,
    };
    let mut art = Artifacts::new(&cfg.out_dir);
    let mut buf = Vec::new();
    write_recurrence_csv(&mut buf, &rep)?;
    art.text("recurrence.csv", &String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))?)?;
    if rep.nodes.len() == base.len() {
        let coarse: Vec<f64> = rep.nodes.iter().map(|r| r.strong[0]).collect();
        let fine: Vec<f64> = rep.nodes.iter().map(|r| *r.strong.last().unwrap()).collect();
        let class: Vec<f64> = rep
            .nodes
            .iter()
            .map(|r| match r.class {
                RecurrenceClass::Scr => 0.0,
                RecurrenceClass::CrOnly => 1.0,
                RecurrenceClass::NonRecurrent => 2.0,
            })
            .collect();
        let field = ScalarField::new(base.clone(), coarse)?;
        art.field("loop_cost.csv", &field, &[("finest", &fine), ("class", &class)])?;
        art.plot(
            "loop_cost.gp",
            "loop_cost.csv",
            torus.dims(),
            &format!("{}: loop cost per ladder level", cfg.system),
            &[(1, "coarsest"), (2, "finest")],
        )?;
    }
    art.text("summary.json", &to_json(&summary)?)?;
    let mut s = format!(
        "{}: {} coarse nodes on a {}-level ladder (x{}), T = {}\n  SCR-candidate {}, CR-only {}, non-recurrent {}\n",
        cfg.system,
        summary.nodes,
        cfg.levels,
        cfg.refine,
        cfg.t,
        summary.scr_candidates,
        summary.cr_only,
        summary.non_recurrent
    );
    if let Some(o) = outside {
        let _ = writeln!(s, "  SCR-candidates farther than one cell from the zero set: {o}");
    }
    Ok(Outcome {
        exit_code: 0,
        summary: s,
        files: art.files,
    })
}

#[derive(Serialize)]
struct LyapunovSummary<'a> {
    config: &'a RunConfig,
    base_node: usize,
    base_coords: Vec<f64>,
    tolerance: f64,
    range: f64,
    lipschitz_estimate: f64,
    verdict: &'a crate::lyapunov::LyapunovVerdict,
}

fn lyapunov(cfg: &RunConfig) -> Result<Outcome> {
    let sys = load_system(cfg)?;
    let torus = sys.flow.torus().clone();
    let n = default_grid(cfg, torus.dims(), 512, 32);
    let grid = GridSpec::uniform(torus.clone(), n)?;
    let g = build_chain_graph_with(&sys.flow, &grid, &cfg.chain_params())?;
    let at = cfg.base.clone().unwrap_or_else(|| vec![0.0; torus.dims()]);
    let base_point = TorusPoint::new(&torus, at)?;
    let base = grid.nearest(base_point.coords());
    let tilde = synth_tilde(&g, base)?;
    let h = synth_lyapunov(&g, &sys.flow, base, cfg.t, DEFAULT_SAMPLES)?;
    let tol = synthesis_tolerance(&g);
    let samples = random_samples(&torus, cfg.samples, cfg.seed);
    let vcfg = VerifyConfig::new(probe_times(5.0 * cfg.t, 10), tol).with_step(g.step());
    let verdict = verify_lyapunov_with(&h, &sys.flow, &samples, &vcfg)?;
    let mut art = Artifacts::new(&cfg.out_dir);
    art.field("lyapunov.csv", &h, &[("tilde", tilde.values())])?;
    art.plot(
        "lyapunov.gp",
        "lyapunov.csv",
        torus.dims(),
        &format!("{}: synthesized Lyapunov function", cfg.system),
        &[(1, "h"), (2, "tilde")],
    )?;
    let summary = LyapunovSummary {
        config: cfg,
        base_node: base,
        base_coords: grid.coords(base),
        tolerance: tol,
        range: h.range(),
        lipschitz_estimate: h.lipschitz_estimate(),
        verdict: &verdict,
    };
    art.text("summary.json", &to_json(&summary)?)?;
    let s = format!(
        "{}: base {:?}, grid {n}, T = {}\n  Lyapunov {} (max increase {:.3e}, tol {:.3e}), first integral {}, constant {}\n  range {:.4}, neutral set {} of {} nodes\n",
        cfg.system,
        grid.coords(base),
        cfg.t,
        verdict.is_lyapunov,
        verdict.max_increase,
        tol,
        verdict.is_first_integral,
        verdict.is_constant,
        h.range(),
        verdict.neutral_set_nodes.len(),
        grid.len()
    );
    Ok(Outcome {
        exit_code: if verdict.is_lyapunov { 0 } else { 1 },
        summary: s,
        files: art.files,
    })
}

fn hamiltonian_of(sys: &CatalogSystem) -> Result<crate::hamiltonian::HamiltonianSystem> {
    sys.hamiltonian
        .clone()
        .ok_or_else(|| Error::config(format!("system {} has no Hamiltonian", sys.label)))
}

#[derive(Serialize)]
struct RigiditySummary<'a> {
    config: &'a RunConfig,
    energy: f64,
    potential: &'a str,
    sublevel: &'a crate::symplectic::SublevelReport,
    verdict: &'static str,
    /// Smallest `F` on the probe set when the zero section is invariant.
    zero_section_min_f: Option<f64>,
}

fn rigidity(cfg: &RunConfig) -> Result<Outcome> {
    let sys = load_system(cfg)?;
    let h = hamiltonian_of(&sys)?;
    let torus = h.torus().clone();
    let src = cfg.potential.as_deref().unwrap_or("0");
    let u = Potential::parse(src, torus.dims())?;
    let n = default_grid(cfg, torus.dims(), 4096, 256);
    let grid = GridSpec::uniform(torus.clone(), n)?;
    let c = cfg.energy.unwrap_or(h.energy_level());
    let rep = sublevel_check(&h, c, &u, 0.0, &grid)?;
    let probe = MomentumProbe::new(GridSpec::uniform(torus.clone(), 16)?);
    let min_f = if c == 0.0 {
        zero_section_reduction(&h, &probe).ok().map(|r| r.min_f)
    } else {
        None
    };
    let s_field = ScalarField::from_fn(grid.clone(), |x| {
        let mut p = vec![0.0; x.len()];
        ScalarPotential::gradient(&u, x, 0.0, &mut p);
        h.value(x, &p) - c
    })?;
    let mut art = Artifacts::new(&cfg.out_dir);
    art.field("sublevel.csv", &s_field, &[])?;
    art.plot(
        "sublevel.gp",
        "sublevel.csv",
        torus.dims(),
        &format!("{}: H(x, du(x)) - c for u = {src}", cfg.system),
        &[(1, "s")],
    )?;
    let summary = RigiditySummary {
        config: cfg,
        energy: c,
        potential: src,
        sublevel: &rep,
        verdict: rep.verdict.describe(),
        zero_section_min_f: min_f,
    };
    art.text("summary.json", &to_json(&summary)?)?;
    let s = format!(
        "{}: u = {src}, c = {c}\n  min s = {:.3e} at {:?}, max s = {:.3e}\n  verdict: {}\n",
        cfg.system,
        rep.min,
        rep.argmin,
        rep.max,
        rep.verdict.describe()
    );
    Ok(Outcome {
        exit_code: 0,
        summary: s,
        files: art.files,
    })
}

/// The outer example's family `u_r = r g(x1)`.
pub fn outer_family(samples: Vec<f64>) -> Result<DeformationFamily> {
    let p = FnPotential::new(&Torus::unit(2), |x, r| r * outer_family_g(x[0])).with_gradient(|x, r, out| {
        out[0] = r * outer_family_g_prime(x[0]);
        out[1] = 0.0;
    });
    DeformationFamily::new("r*g(x1)", Arc::new(p), samples)
}

#[derive(Serialize)]
struct OuterSummary<'a> {
    config: &'a RunConfig,
    family: String,
    /// `(r, min s, max s, verdict)` per sample.
    containment: Vec<(f64, f64, f64, &'static str)>,
    outcome: &'a OuterOutcome,
}

fn outer(cfg: &RunConfig) -> Result<Outcome> {
    let sys = load_system(cfg)?;
    let h = hamiltonian_of(&sys)?;
    let torus = h.torus().clone();
    let fam = match cfg.family.as_deref() {
        None if cfg.system == "outer-example" => outer_family(cfg.r_samples.clone())?,
        Some("builtin") => outer_family(cfg.r_samples.clone())?,
        Some(src) => DeformationFamily::parse(&torus, src, cfg.r_samples.clone())?,
        None => return Err(Error::config("outer needs a family expression in x1..xn and r")),
    };
    let n = default_grid(cfg, torus.dims(), 1024, 128);
    let grid = GridSpec::uniform(torus.clone(), n)?;
    let reduction = zero_section_reduction(&h, &MomentumProbe::new(GridSpec::uniform(torus.clone(), 16)?))?;
    let mut containment = Vec::new();
    for &r in &fam.samples {
        let rep = sublevel_check(&h, 0.0, fam.potential.as_ref(), r, &grid)?;
        containment.push((r, rep.min, rep.max, rep.verdict.describe()));
    }
    let pcfg = ProbeConfig {
        tol: 1e-9,
        du_tol: 1e-6,
        samples: random_samples(&torus, cfg.samples.min(500), cfg.seed),
        probe_times: probe_times(5.0 * cfg.t, 5),
        lyapunov_tol: grid.h_max(),
    };
    let outcome = outer_leading_term(&fam, &grid, reduction.flow(), &pcfg)?;
    let mut art = Artifacts::new(&cfg.out_dir);
    let mut s = format!("{}: family {}\n", cfg.system, fam.label);
    for (r, lo, hi, v) in &containment {
        let _ = writeln!(s, "  r = {r:.4}: min s = {lo:.3e}, max s = {hi:.3e} ({v})");
    }
    let ok = match &outcome {
        OuterOutcome::Degenerate { notice } => {
            let _ = writeln!(s, "  {notice}");
            true
        }
        OuterOutcome::Leading(l) => {
            art.field("leading_term.csv", &l.v, &[])?;
            art.plot(
                "leading_term.gp",
                "leading_term.csv",
                torus.dims(),
                &format!("{}: leading term v of {}", cfg.system, fam.label),
                &[(1, "v")],
            )?;
            let _ = writeln!(
                s,
                "  order {} (slope {:.4}, residual {:.2e}), min dv.Y = {:.3e} ({}), -v Lyapunov {}, v constant {}",
                l.order,
                l.slope,
                l.residual,
                l.min_dv_dot_y,
                if l.dv_dot_y_ok { "ok" } else { "violated" },
                l.verdict.is_lyapunov,
                l.v_constant
            );
            l.dv_dot_y_ok && l.verdict.is_lyapunov
        }
    };
    let summary = OuterSummary {
        config: cfg,
        family: fam.label.clone(),
        containment,
        outcome: &outcome,
    };
    art.text("summary.json", &to_json(&summary)?)?;
    Ok(Outcome {
        exit_code: if ok { 0 } else { 1 },
        summary: s,
        files: art.files,
    })
}

fn examples(cfg: &RunConfig) -> Result<Outcome> {
    let rows: Vec<(&str, &str)> = vec![
        ("cantor-fat", "circle flow vanishing on a fat Cantor set (delta, depth, profile)"),
        ("cantor-null", "circle flow vanishing on the endpoints of a middle-thirds approximant (depth, profile)"),
        ("rotation", "linear flow on T^2 (alpha1, alpha2)"),
        ("gradient-circle", "V = -sin(2 pi x) on the circle"),
        ("mane", "H = |y|^2/2 + <y, Y(x)> with expression components (y1, y2, period)"),
        ("pps-example", "H = y1^2 + y2^2 - (1 - cos 2x1) y1 - y2 (period)"),
        ("outer-example", "H = y1^2 + y2^2 - f(x1) y1 - y2, f = dist(x1, [1/3, 2/3])^2 (subsystem)"),
    ];
    let mut s = String::new();
    for (l, d) in &rows {
        let _ = writeln!(s, "{l:<16} {d}");
    }
    let mut art = Artifacts::new(&cfg.out_dir);
    let json: Vec<_> = rows
        .iter()
        .map(|(l, d)| serde_json::json!({ "label": l, "description": d }))
        .collect();
    art.text("examples.json", &to_json(&json)?)?;
    Ok(Outcome {
        exit_code: 0,
        summary: s,
        files: art.files,
    })
}

/// One line of the self-test.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check {
            name: name.into(),
            pass,
            detail,
        },
        Err(e) => Check {
            name: name.into(),
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

/// A quick pass over the main invariants at small sizes.
pub fn selftest_checks(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("oracle-equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for k in 0..50 {
            let sys = random_instance(&mut rng, 2 + k % 8, InstanceMetric::Euclidean)?;
            let g = sys.to_graph()?;
            for x in 0..sys.len() {
                let f = chain_cost(&g, x)?;
                for y in 0..sys.len() {
                    let b = brute_chain_cost(&sys, x, y);
                    if f.values[y] != b {
                        worst = worst.max((f.values[y] - b).abs());
                    }
                }
            }
        }
        Ok((worst == 0.0, format!("max mismatch {worst:e}")))
    }));
    out.push(check("cantor-measure", || {
        let set = CantorSet::build(&CantorSpec::fat(0.25, 12))?;
        let err = (set.measure() - 0.25).abs();
        Ok((err <= 1e-9, format!("|mu(K) - 1/4| = {err:e}")))
    }));
    out.push(check("rk4-order", || {
        let sys = catalog::load("gradient-circle", &KeyValues::default())?.flow;
        let x0 = TorusPoint::new(sys.torus(), vec![0.1])?;
        let reference = integrate(&sys, &x0, 1.0, 1e-4)?.coords()[0];
        let e1 = (integrate(&sys, &x0, 1.0, 0.05)?.coords()[0] - reference).abs();
        let e2 = (integrate(&sys, &x0, 1.0, 0.025)?.coords()[0] - reference).abs();
        Ok((e1 / e2 >= 8.0, format!("error ratio {:.2}", e1 / e2)))
    }));
    out.push(check("gradient-circle-classification", || {
        let sys = catalog::load("gradient-circle", &KeyValues::default())?.flow;
        let grid = GridSpec::uniform(Torus::unit(1), 64)?;
        let ladder = vec![grid.clone(), grid.refined(16)?];
        let rep = scr_classify_with(&sys, &ladder, &ChainParams::new(1.0), &Thresholds::default())?;
        let scr: Vec<f64> = rep.nodes_of(RecurrenceClass::Scr).map(|r| r.coords[0]).collect();
        Ok((scr == vec![0.0, 0.5], format!("SCR-candidates at {scr:?}")))
    }));
    out.push(check("explicit-cantor-lyapunov", || {
        let spec = CantorSpec::fat(0.25, 12);
        let grid = GridSpec::uniform(Torus::unit(1), 1024)?;
        let h = explicit_cantor_lyapunov(&spec, &grid)?;
        let sys = build_cantor_flow(&spec)?;
        let tol = (1.0 / 0.25 + 1.0 / 0.75) * grid.h_max();
        let v = verify_lyapunov_with(
            &h,
            &sys,
            &random_samples(sys.torus(), 200, seed),
            &VerifyConfig::new(probe_times(2.0, 4), tol).without_neutral_set(),
        )?;
        Ok((
            v.is_lyapunov && !v.is_first_integral,
            format!("max increase {:.2e}, max drift {:.2e}", v.max_increase, v.max_drift),
        ))
    }));
    out.push(check("primo-identity", || {
        let sys = catalog::load("pps-example", &KeyValues::default())?;
        let h = hamiltonian_of(&sys)?;
        let grid = GridSpec::uniform(h.torus().clone(), 128)?;
        let u = Potential::parse("-2*cos(x1)", 2)?;
        let rep = sublevel_check(&h, 0.0, &u, 0.0, &grid)?;
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            let x = grid.coords(i);
            let mut p = [0.0; 2];
            u.gradient_into(&x, 0.0, &mut p);
            let s = x[0].sin();
            worst = worst.max((h.value(&x, &p) - 4.0 * s * s * (1.0 - s)).abs());
        }
        Ok((
            worst <= 1e-9 && rep.min >= -1e-9,
            format!("identity error {worst:.2e}, min s {:.2e}", rep.min),
        ))
    }));
    out.push(check("mane-reduction", || {
        let y = catalog::load("mane", &KeyValues::from_pairs([("y1", "sin(2*pi*x2)"), ("y2", "1+0.5*cos(2*pi*x1)")]))?.flow;
        let h = mane_hamiltonian(&y);
        let red = zero_section_reduction(&h, &MomentumProbe::new(GridSpec::uniform(y.torus().clone(), 8)?))?;
        let mut worst: f64 = 0.0;
        for x in random_samples(y.torus(), 20, seed) {
            let a = y.eval(&x);
            let b = red.flow().eval(&x);
            worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        }
        Ok((worst <= 1e-12, format!("max |Y - Y_recovered| = {worst:e}")))
    }));
    out.push(check("liouville-classes", || {
        let t = Torus::unit(2);
        let probe = GridSpec::uniform(t.clone(), 32)?;
        let a = OneForm::parse(t.clone(), &["0.3 + cos(2*pi*x1)", "-0.7 + sin(2*pi*x2)"])?;
        let b = OneForm::exact(t, crate::expr::Expr::parse("sin(2*pi*x1)*sin(2*pi*x2)")?)?;
        let ca = liouville_class(&a, &probe)?;
        let cb = liouville_class(&b, &probe)?;
        let cab = liouville_class(&a.add(&b)?, &probe)?;
        let err = cab.distance(&ca.add(&cb)).max((ca.components[0] - 0.3).abs());
        Ok((err <= 1e-6, format!("additivity error {err:e}")))
    }));
    out.push(check("periodic-field", || {
        let sys = catalog::load("pps-example", &KeyValues::default())?.flow;
        let mut worst: f64 = 0.0;
        for x in random_samples(sys.torus(), 50, seed) {
            let a = sys.eval(&x);
            let b = sys.eval(&[x[0] + 2.0 * PI, x[1] - 2.0 * PI]);
            worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        }
        Ok((worst <= 1e-12, format!("max periodicity defect {worst:e}")))
    }));
    out
}

fn selftest(cfg: &RunConfig) -> Result<Outcome> {
    let checks = selftest_checks(cfg.seed);
    let mut s = String::new();
    for c in &checks {
        let _ = writeln!(s, "{} {:<32} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let all = checks.iter().all(|c| c.pass);
    let mut art = Artifacts::new(&cfg.out_dir);
    art.text("selftest.json", &to_json(&checks)?)?;
    Ok(Outcome {
        exit_code: if all { 0 } else { 1 },
        summary: s,
        files: art.files,
    })
}

/// Flow used for a lyapunov or analyze run, for callers that want it.
pub fn system_flow(cfg: &RunConfig) -> Result<FlowSystem> {
    Ok(load_system(cfg)?.flow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_splits_system_keys() {
        let kv = KeyValues::from_pairs([("system", "cantor-fat"), ("delta", "0.5"), ("grid", "64")]);
        let cfg = RunConfig::resolve(Command::Analyze, &kv).unwrap();
        assert_eq!(cfg.grid, Some(64));
        assert_eq!(cfg.system_params.get("delta"), Some("0.5"));
        assert!(cfg.system_params.get("grid").is_none());
        assert_eq!(cfg.flow_times(), vec![1.0, 1.0 + 2.0 / 3.0, 1.0 + 4.0 / 3.0, 3.0]);
    }

    #[test]
    fn rejects_bad_numbers() {
        for (k, v) in [("T", "-1"), ("grid", "1"), ("T", "nan"), ("refine", "x"), ("base", "0.1,z")] {
            let kv = KeyValues::from_pairs([(k, v)]);
            let e = RunConfig::resolve(Command::Analyze, &kv).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{k}={v}");
        }
        assert!("frobnicate".parse::<Command>().is_err());
    }
}
