//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::time::{Duration, Instant};

use chainscope::app::outer_family;
use chainscope::cantor::{build_cantor_flow, CantorSet, CantorSpec};
use chainscope::catalog::{self, outer_family_g, outer_subsystem, KeyValues};
use chainscope::cost::{chain_cost, cost_monotonicity_probe, slack, CostField, C_SNAP};
use chainscope::expr::{Expr, Potential};
use chainscope::flow::{integrate, FlowSystem};
use chainscope::graph::{build_chain_graph_with, ChainGraph, ChainParams};
use chainscope::grid::GridSpec;
use chainscope::hamiltonian::{integrate_hamiltonian, mane_hamiltonian};
use chainscope::lyapunov::{
    explicit_cantor_lyapunov, probe_times, random_samples, synth_lyapunov, synthesis_tolerance,
    verify_lyapunov_with, VerifyConfig, DEFAULT_SAMPLES,
};
use chainscope::oracle::{brute_chain_cost, cantor_loop_bound, random_instance, InstanceMetric};
use chainscope::recurrence::{scr_classify_with, two_level_ladder, RecurrenceClass, Thresholds};
use chainscope::symplectic::{
    admissible_family_probe, default_family_samples, liouville_class, outer_leading_term,
    rotation_probe_families, sublevel_check, zero_section_reduction, MomentumProbe, OneForm,
    OuterOutcome, ProbeConfig, ScalarPotential,
};
use chainscope::torus::Torus;
use chainscope::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String)>;

/// Flow times `T (1 + 2k / (m − 1))`.
fn ladder_times(t: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| t * (1.0 + 2.0 * k as f64 / (m - 1) as f64))
        .collect()
}

fn params(t: f64, m: usize) -> ChainParams {
    ChainParams::new(t).with_flow_times(ladder_times(t, m)).with_step(0.01)
}

fn fat() -> CantorSpec {
    CantorSpec::fat(0.25, 12)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut pairs = 0usize;
    let mut mismatches = 0usize;
    for k in 0..200 {
        let n = rng.gen_range(1..=12);
        let metric = if k % 2 == 0 {
            InstanceMetric::Euclidean
        } else {
            InstanceMetric::IntegerL1
        };
        let sys = random_instance(&mut rng, n, metric)?;
        let g = sys.to_graph()?;
        for x in 0..n {
            let f = chain_cost(&g, x)?;
            for y in 0..n {
                pairs += 1;
                if f.values[y] != brute_chain_cost(&sys, x, y) {
                    mismatches += 1;
                }
            }
        }
    }
    Ok((mismatches == 0, format!("{pairs} pairs, {mismatches} mismatches")))
}

struct PropertyStats {
    triangle: f64,
    reach: f64,
    lipschitz: f64,
    monotone: f64,
}

/// Worst excess over the allowed slack for each cost-function property;
/// non-positive means the property holds. The single-hop slack applies
/// except for monotonicity, which gets the slack of the larger-T path.
fn cost_properties(sys: &FlowSystem, grid: &GridSpec, p: &ChainParams) -> Result<PropertyStats> {
    let g: ChainGraph = build_chain_graph_with(sys, grid, p)?;
    let tau = slack(C_SNAP, grid.h_max(), 1);
    let torus = grid.torus();
    let sources: Vec<usize> = (0..6).map(|k| (k * grid.len()) / 6 + grid.len() / 17).collect();
    let fields: Vec<CostField> = sources
        .iter()
        .map(|&s| chain_cost(&g, s))
        .collect::<Result<_>>()?;
    let mut s = PropertyStats {
        triangle: f64::NEG_INFINITY,
        reach: f64::NEG_INFINITY,
        lipschitz: f64::NEG_INFINITY,
        monotone: f64::NEG_INFINITY,
    };
    for (a, fa) in fields.iter().enumerate() {
        for (b, fb) in fields.iter().enumerate() {
            if a == b {
                continue;
            }
            let via = fa.values[sources[b]];
            for z in 0..grid.len() {
                s.triangle = s.triangle.max(fa.values[z] - via - fb.values[z] - 2.0 * tau);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (&src, f) in sources.iter().zip(&fields) {
        let x0 = torus.point(grid.coords(src))?;
        let t = p.t_min;
        for dt in [t, 2.0 * t, 3.0 * t, 4.0 * t] {
            let y = integrate(sys, &x0, dt, g.step())?;
            let w = grid.nearest(y.coords());
            s.reach = s.reach.max(f.values[w] - tau);
        }
        for _ in 0..2000 {
            let y = rng.gen_range(0..grid.len());
            let z = rng.gen_range(0..grid.len());
            let d = torus.dist(&grid.coords(y), &grid.coords(z));
            s.lipschitz = s.lipschitz.max((f.values[z] - f.values[y]).abs() - d - tau);
        }
    }
    for &src in sources.iter().take(3) {
        let probe = cost_monotonicity_probe(sys, grid, src, &[p.t_min, 2.0 * p.t_min], p)?;
        for z in 0..grid.len() {
            // each hop at the larger T splits into at most two shorter hops
            s.monotone = s.monotone.max(probe[0].values[z] - probe[1].values[z] - probe[1].slack(z));
        }
    }
    Ok(s)
}

fn cost_function_suite() -> Outcome {
    let systems: Vec<(&str, FlowSystem, GridSpec)> = vec![
        ("fat", build_cantor_flow(&fat())?, GridSpec::uniform(Torus::unit(1), 2048)?),
        ("null", build_cantor_flow(&CantorSpec::null(1))?, GridSpec::uniform(Torus::unit(1), 2048)?),
        (
            "rotation",
            catalog::load("rotation", &KeyValues::default())?.flow,
            GridSpec::new(Torus::unit(2), vec![64, 32])?,
        ),
        ("outer-x1", outer_subsystem(), GridSpec::uniform(Torus::unit(1), 2048)?),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, sys, grid) in &systems {
        let s = cost_properties(sys, grid, &params(1.0, 4))?;
        let pass = s.triangle <= 0.0 && s.reach <= 0.0 && s.lipschitz <= 0.0 && s.monotone <= 0.0;
        ok &= pass;
        detail.push(format!(
            "{name}: excess tri {:.1e} reach {:.1e} lip {:.1e} mono {:.1e}",
            s.triangle, s.reach, s.lipschitz, s.monotone
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn fat_classification() -> Outcome {
    let spec = fat();
    let sys = build_cantor_flow(&spec)?;
    let set = CantorSet::build(&spec)?;
    let mu = cantor_loop_bound(&spec)?;

    let base = GridSpec::uniform(Torus::unit(1), 512)?;
    let rep = scr_classify_with(&sys, &two_level_ladder(&base, 16)?, &params(1.0, 16), &Thresholds::default())?;
    let h = base.h_max();
    let mut misplaced = 0;
    for r in &rep.nodes {
        let d = set.dist_to_zero_set(r.coords[0]);
        let scr = r.class == RecurrenceClass::Scr;
        if (scr && d > h) || (d == 0.0 && !scr) {
            misplaced += 1;
        }
    }

    // Loops based in K^c either jump straight back (cost = displacement
    // over one hop) or wrap around the circle, crossing all of K. Where the
    // straight return costs at least μ(K), the loop must sit near μ(K).
    let t = 4.0;
    let (a, b) = set.removed()[0][0];
    let mut band_ok = true;
    let mut lower_ok = true;
    let mut wrap = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut drift: f64 = 0.0;
    for n in [4096usize, 8192] {
        let grid = GridSpec::uniform(Torus::unit(1), n)?;
        let g = build_chain_graph_with(&sys, &grid, &params(t, 16))?;
        let tau = slack(C_SNAP, grid.h_max(), 1);
        let mut loops = Vec::new();
        for k in 0..64 {
            let x = a + (b - a) * (k as f64 + 0.5) / 64.0;
            let src = grid.nearest(&[x]);
            let xs = grid.coords(src);
            let end = integrate(&sys, &Torus::unit(1).point(xs.clone())?, t, 0.01)?;
            let disp = Torus::unit(1).dist(&xs, end.coords());
            let l = chain_cost(&g, src)?.values[src];
            if l < 0.8 * mu.min(disp) - tau {
                lower_ok = false;
            }
            if disp >= mu {
                loops.push(l);
                if !(0.8 * mu..=1.2 * mu).contains(&l) {
                    band_ok = false;
                }
            }
        }
        // spot checks in deeper gaps
        for gap in set.removed().iter().skip(1).take(3).flat_map(|lvl| lvl.iter().take(4)) {
            let x = 0.5 * (gap.0 + gap.1);
            let src = grid.nearest(&[x]);
            let xs = grid.coords(src);
            let end = integrate(&sys, &Torus::unit(1).point(xs.clone())?, t, 0.01)?;
            let disp = Torus::unit(1).dist(&xs, end.coords());
            let l = chain_cost(&g, src)?.values[src];
            if l < 0.8 * mu.min(disp) - tau {
                lower_ok = false;
            }
        }
        if let Some(p) = &prev {
            for (lo, hi) in p.iter().zip(&loops) {
                drift = drift.max((hi - lo).abs() / lo);
                if (hi - mu).abs() > (lo - mu).abs() + tau {
                    band_ok = false;
                }
            }
        }
        let mean = loops.iter().sum::<f64>() / loops.len().max(1) as f64;
        wrap.push((n, loops.len(), mean));
        prev = Some(loops);
    }
    let ok = misplaced == 0 && band_ok && lower_ok && drift <= 0.1 && wrap.iter().all(|w| w.1 > 0);
    Ok((
        ok,
        format!(
            "misplaced {misplaced}/{}; wrap-around loops {:?} vs mu {mu:.4}; relative change {drift:.3}; lower bound {}",
            rep.nodes.len(),
            wrap.iter().map(|w| format!("n={} k={} mean={:.4}", w.0, w.1, w.2)).collect::<Vec<_>>(),
            if lower_ok { "ok" } else { "violated" }
        ),
    ))
}

fn null_classification() -> Outcome {
    let sys = build_cantor_flow(&CantorSpec::null(1))?;
    let p = params(1.0, 16);
    let base = GridSpec::uniform(Torus::unit(1), 512)?;
    let rep = scr_classify_with(&sys, &two_level_ladder(&base, 16)?, &p, &Thresholds::default())?;
    let not_scr = rep.nodes.len() - rep.count(RecurrenceClass::Scr);
    let coarse = GridSpec::uniform(Torus::unit(1), 2048)?;
    let ladder = vec![coarse.clone(), coarse.refined(2)?];
    let doubling = scr_classify_with(&sys, &ladder, &p, &Thresholds::default())?;
    let max_at = |l: usize| doubling.nodes.iter().map(|r| r.strong[l]).fold(0.0, f64::max);
    let ratio = max_at(1) / max_at(0);
    Ok((
        not_scr == 0 && (0.3..=0.7).contains(&ratio),
        format!(
            "{not_scr} of {} nodes not SCR; max loop {:.3e} -> {:.3e}, ratio {ratio:.3}",
            rep.nodes.len(),
            max_at(0),
            max_at(1)
        ),
    ))
}

fn lyapunov_soundness() -> Outcome {
    let runs: Vec<(&str, FlowSystem, GridSpec, Vec<f64>)> = vec![
        ("fat", build_cantor_flow(&fat())?, GridSpec::uniform(Torus::unit(1), 2048)?, vec![0.0, 0.32]),
        ("null", build_cantor_flow(&CantorSpec::null(1))?, GridSpec::uniform(Torus::unit(1), 2048)?, vec![0.1]),
        (
            "rotation",
            catalog::load("rotation", &KeyValues::default())?.flow,
            GridSpec::uniform(Torus::unit(2), 64)?,
            vec![0.0],
        ),
        ("outer-x1", outer_subsystem(), GridSpec::uniform(Torus::unit(1), 2048)?, vec![0.0, 0.1, 0.8]),
    ];
    let t = 1.0;
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, sys, grid, bases) in &runs {
        let g = build_chain_graph_with(sys, grid, &ChainParams::new(t).with_flow_times(ladder_times(t, 4)))?;
        let tol = synthesis_tolerance(&g);
        let samples = random_samples(sys.torus(), 1000, 11);
        let cfg = VerifyConfig::new(probe_times(5.0 * t, 10), tol).with_step(g.step());
        for &b in bases {
            let base = grid.nearest(&vec![b; grid.dims()]);
            let h = synth_lyapunov(&g, sys, base, t, DEFAULT_SAMPLES)?;
            let v = verify_lyapunov_with(&h, sys, &samples, &cfg)?;
            let mut pass = v.is_lyapunov;
            match *name {
                "rotation" => pass &= h.range() <= tol,
                "outer-x1" => {
                    let cell = grid.h_max();
                    let covered = (0..grid.len())
                        .filter(|&i| {
                            let x = grid.coords(i)[0];
                            x >= 1.0 / 3.0 + cell && x <= 2.0 / 3.0 - cell
                        })
                        .all(|i| v.neutral_set_nodes.contains(&i));
                    pass &= !v.is_constant && h.range() >= 0.1 && covered;
                }
                _ => {}
            }
            ok &= pass;
            detail.push(format!(
                "{name}@{b}: {} range {:.3} inc {:.1e}/{tol:.1e}",
                if pass { "ok" } else { "FAIL" },
                h.range(),
                v.max_increase
            ));
        }
    }
    Ok((ok, detail.join("; ")))
}

fn explicit_cantor() -> Outcome {
    let spec = fat();
    let grid = GridSpec::uniform(Torus::unit(1), 4096)?;
    let h = explicit_cantor_lyapunov(&spec, &grid)?;
    let sys = build_cantor_flow(&spec)?;
    let bound = 1.0 / 0.25 + 1.0 / 0.75;
    let lip = h.lipschitz_estimate();
    let v = verify_lyapunov_with(
        &h,
        &sys,
        &random_samples(sys.torus(), 1000, 5),
        &VerifyConfig::new(probe_times(5.0, 10), bound * grid.h_max()),
    )?;
    Ok((
        v.is_lyapunov && !v.is_first_integral && lip <= bound + 1e-6,
        format!(
            "lyapunov {}, first integral {}, Lipschitz {lip:.6} (bound {bound:.6})",
            v.is_lyapunov, v.is_first_integral
        ),
    ))
}

fn sublevel_identity() -> Outcome {
    let sys = catalog::load("pps-example", &KeyValues::default())?;
    let h = sys.hamiltonian.expect("pps-example is Hamiltonian");
    let grid = GridSpec::uniform(h.torus().clone(), 512)?;
    let u = Potential::parse("-2*cos(x1)", 2)?;
    let rep = sublevel_check(&h, 0.0, &u, 0.0, &grid)?;
    let mut worst: f64 = 0.0;
    let mut p = [0.0; 2];
    for i in 0..grid.len() {
        let x = grid.coords(i);
        ScalarPotential::gradient(&u, &x, 0.0, &mut p);
        let s = x[0].sin();
        worst = worst.max((h.value(&x, &p) - 4.0 * s * s * (1.0 - s)).abs());
    }
    Ok((
        worst <= 1e-9 && rep.min >= -1e-9,
        format!("max identity error {worst:.2e}, min H(x, du) {:.2e}", rep.min),
    ))
}

fn mane_reduction() -> Outcome {
    let kv = KeyValues::from_pairs([
        ("y1", "1 + 0.5*sin(2*pi*x2)"),
        ("y2", "0.7 + 0.3*cos(2*pi*x1)"),
    ]);
    let y = catalog::load("mane", &kv)?.flow;
    let h = mane_hamiltonian(&y);
    let torus = y.torus().clone();
    let step = 1e-3;
    let mut worst: f64 = 0.0;
    for x in random_samples(&torus, 10, 3) {
        for k in 1..=10 {
            let t = k as f64;
            let z = integrate_hamiltonian(&h, &x, &[0.0, 0.0], t, step)?;
            let f = integrate(&y, &torus.point(x.clone())?, t, step)?;
            let dy = z.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(torus.dist(&z.x, f.coords())).max(dy);
        }
    }
    let red = zero_section_reduction(&h, &MomentumProbe::new(GridSpec::uniform(torus.clone(), 16)?))?;
    let mut round_trip: f64 = 0.0;
    for x in random_samples(&torus, 200, 4) {
        let a = y.eval(&x);
        let b = red.flow().eval(&x);
        round_trip = round_trip.max(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
    }
    Ok((
        worst <= 1e-6 && round_trip <= 1e-12,
        format!("trajectory sup-distance {worst:.2e}, round trip {round_trip:.2e}"),
    ))
}

fn trig_term(rng: &mut ChaCha8Rng, var: &str) -> String {
    format!(
        "{:.6}*sin(2*pi*{var}) + {:.6}*cos(4*pi*{var})",
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0)
    )
}

fn liouville_classes() -> Outcome {
    let t = Torus::unit(2);
    let probe = GridSpec::uniform(t.clone(), 64)?;
    let constant = OneForm::constant(t.clone(), &[0.3, -1.2])?;
    let exact = OneForm::exact(t.clone(), Expr::parse("sin(2*pi*x1)*cos(2*pi*x2) + cos(2*pi*x2)")?)?;
    let mixed = OneForm::parse(t.clone(), &["0.4 + sin(2*pi*x1)", "-0.9 + cos(2*pi*x2)"])?;
    let mut worst: f64 = 0.0;
    for (form, want) in [(&constant, [0.3, -1.2]), (&exact, [0.0, 0.0]), (&mixed, [0.4, -0.9])] {
        let c = liouville_class(form, &probe)?;
        worst = worst.max(c.components.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut additivity: f64 = 0.0;
    for _ in 0..20 {
        let mut form = || -> Result<OneForm> {
            let c1: f64 = rng.gen_range(-2.0..2.0);
            let c2: f64 = rng.gen_range(-2.0..2.0);
            let a = format!("{c1:.6} + {}", trig_term(&mut rng, "x1"));
            let b = format!("{c2:.6} + {}", trig_term(&mut rng, "x2"));
            let closed = OneForm::parse(t.clone(), &[&a, &b])?;
            let pot = format!("{:.6}*sin(2*pi*(x1 + x2))", rng.gen_range(-1.0..1.0));
            closed.add(&OneForm::exact(t.clone(), Expr::parse(&pot)?)?)
        };
        let a = form()?;
        let b = form()?;
        let sum = liouville_class(&a.add(&b)?, &probe)?;
        let parts = liouville_class(&a, &probe)?.add(&liouville_class(&b, &probe)?);
        additivity = additivity.max(sum.distance(&parts));
    }
    Ok((
        worst <= 1e-6 && additivity <= 1e-6,
        format!("class error {worst:.2e}, additivity error {additivity:.2e}"),
    ))
}

fn outer_rigidity() -> Outcome {
    let sys = catalog::load("outer-example", &KeyValues::default())?;
    let h = sys.hamiltonian.expect("outer-example is Hamiltonian");
    let torus = h.torus().clone();
    let grid = GridSpec::uniform(torus.clone(), 1024)?;
    let reduction = zero_section_reduction(&h, &MomentumProbe::new(GridSpec::uniform(torus.clone(), 16)?))?;
    let cfg = ProbeConfig {
        tol: 1e-9,
        du_tol: 1e-6,
        samples: random_samples(&torus, 500, 1),
        probe_times: probe_times(5.0, 5),
        lyapunov_tol: grid.h_max(),
    };
    let fam = outer_family(default_family_samples())?;
    let (order, g_err, dv_ok) = match outer_leading_term(&fam, &grid, reduction.flow(), &cfg)? {
        OuterOutcome::Leading(l) => {
            let err = (0..grid.len())
                .map(|i| (l.v.value(i) - (outer_family_g(grid.coords(i)[0]) - outer_family_g(0.0))).abs())
                .fold(0.0, f64::max);
            (l.order, err, l.dv_dot_y_ok && l.min_dv_dot_y >= -1e-9)
        }
        OuterOutcome::Degenerate { .. } => (0, f64::INFINITY, false),
    };
    let mut min_s = f64::INFINITY;
    for r in [0.1, 0.5, 1.0] {
        min_s = min_s.min(sublevel_check(&h, 0.0, fam.potential.as_ref(), r, &grid)?.min);
    }

    let rot = catalog::load("rotation", &KeyValues::default())?.flow;
    let mane = mane_hamiltonian(&rot);
    let rgrid = GridSpec::uniform(rot.torus().clone(), 64)?;
    let rred = zero_section_reduction(&mane, &MomentumProbe::new(GridSpec::uniform(rot.torus().clone(), 16)?))?;
    let rcfg = ProbeConfig {
        samples: random_samples(rot.torus(), 300, 2),
        lyapunov_tol: 2.0 * rgrid.h_max(),
        ..cfg
    };
    let probes = admissible_family_probe(&rred, &rotation_probe_families(rot.torus())?, &rgrid, &rcfg)?;
    let admissible = probes.iter().filter(|p| p.admissible).count();
    let rigid = probes.iter().all(|p| p.rigid());
    Ok((
        order == 1 && g_err <= 1e-3 && dv_ok && min_s >= -1e-9 && rigid && admissible > 0,
        format!(
            "order {order}, sup|v - g| {g_err:.2e}, dv.Y ok {dv_ok}, min s {min_s:.2e}; rotation: {admissible} admissible of {}, all rigid {rigid}",
            probes.len()
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("oracle equivalence", oracle_equivalence, Some(Duration::from_secs(10))),
        ("cost function properties", cost_function_suite, Some(Duration::from_secs(120))),
        ("fat Cantor classification", fat_classification, Some(Duration::from_secs(60))),
        ("null Cantor classification", null_classification, None),
        ("Lyapunov synthesis soundness", lyapunov_soundness, None),
        ("explicit Cantor Lyapunov function", explicit_cantor, None),
        ("sublevel identity", sublevel_identity, Some(Duration::from_secs(5))),
        ("Mane reduction", mane_reduction, None),
        ("Liouville classes", liouville_classes, None),
        ("outer rigidity mechanism", outer_rigidity, None),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let in_time = budget.map_or(true, |b| took <= b);
        let (pass, detail) = match result {
            Ok((p, d)) => (p && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s{}]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
