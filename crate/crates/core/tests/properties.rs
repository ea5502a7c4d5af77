use chainscope::cantor::{build_cantor_flow, CantorSet, CantorSpec};
use chainscope::catalog::KeyValues;
use chainscope::cost::chain_cost;
use chainscope::expr::Expr;
use chainscope::graph::ChainGraph;
use chainscope::grid::GridSpec;
use chainscope::lyapunov::explicit_cantor_value;
use chainscope::oracle::{brute_chain_cost, random_instance, InstanceMetric};
use chainscope::report::{read_field_csv, write_field_csv};
use chainscope::scalar::ScalarField;
use chainscope::symplectic::{liouville_class, OneForm};
use chainscope::torus::Torus;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bellman_ford(n: usize, arcs: &[(usize, usize, f64)], s: usize) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; n];
    for &(u, w, c) in arcs {
        if u == s {
            d[w] = d[w].min(c);
        }
    }
    for _ in 0..n {
        for &(u, w, c) in arcs {
            if d[u] + c < d[w] {
                d[w] = d[u] + c;
            }
        }
    }
    d
}

fn arcs(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (1..=max_nodes).prop_flat_map(|n| {
        let arc = (0..n, 0..n, 0u32..64).prop_map(|(u, w, c)| (u, w, f64::from(c) / 8.0));
        (Just(n), prop::collection::vec(arc, 0..4 * n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_cost_matches_brute_force(seed in any::<u64>(), n in 1usize..=9, l1 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let metric = if l1 { InstanceMetric::IntegerL1 } else { InstanceMetric::Euclidean };
        let sys = random_instance(&mut rng, n, metric).unwrap();
        let g = sys.to_graph().unwrap();
        for x in 0..n {
            let f = chain_cost(&g, x).unwrap();
            for y in 0..n {
                prop_assert_eq!(f.values[y], brute_chain_cost(&sys, x, y));
            }
        }
    }

    #[test]
    fn chain_cost_matches_bellman_ford((n, arcs) in arcs(10)) {
        let g = ChainGraph::from_arcs(n, &arcs).unwrap();
        for s in 0..n {
            prop_assert_eq!(chain_cost(&g, s).unwrap().values, bellman_ford(n, &arcs, s));
        }
    }

    #[test]
    fn graph_costs_obey_triangle_inequality((n, arcs) in arcs(8)) {
        let g = ChainGraph::from_arcs(n, &arcs).unwrap();
        let fields: Vec<_> = (0..n).map(|s| chain_cost(&g, s).unwrap().values).collect();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    prop_assert!(fields[x][z] <= fields[x][y] + fields[y][z]);
                }
            }
        }
    }

    #[test]
    fn torus_distance_is_a_metric(
        a in prop::collection::vec(-5.0f64..5.0, 2),
        b in prop::collection::vec(-5.0f64..5.0, 2),
        c in prop::collection::vec(-5.0f64..5.0, 2),
        k in -3i32..3,
    ) {
        let t = Torus::new(vec![1.0, 2.0 * std::f64::consts::PI]).unwrap();
        let d = |p: &[f64], q: &[f64]| t.dist(p, q);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        let shifted = vec![a[0] + f64::from(k), a[1] - f64::from(k) * t.period(1)];
        prop_assert!(d(&a, &shifted) <= 1e-9);
        prop_assert!(d(&a, &b) <= 0.5 * (1.0 + t.period(1) * t.period(1)).sqrt() + 1e-12);
    }

    #[test]
    fn fat_cantor_measure_hits_target(delta in 0.05f64..0.95, depth in 4u32..=12) {
        let set = CantorSet::build(&CantorSpec::fat(delta, depth)).unwrap();
        prop_assert!((set.measure() - delta).abs() <= 1e-9);
        prop_assert!((set.measure() + set.removed_length() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cantor_field_vanishes_on_kept_endpoints(delta in 0.1f64..0.9) {
        let spec = CantorSpec::fat(delta, 8);
        let set = CantorSet::build(&spec).unwrap();
        let sys = build_cantor_flow(&spec).unwrap();
        for x in set.endpoints() {
            prop_assert!(sys.eval(&[x])[0].abs() <= 1e-12);
        }
        for lvl in set.removed() {
            for &(a, b) in lvl.iter().take(4) {
                prop_assert!(sys.eval(&[0.5 * (a + b)])[0] > 0.0);
            }
        }
    }

    #[test]
    fn explicit_cantor_function_is_lipschitz(delta in 0.1f64..0.9, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let set = CantorSet::build(&CantorSpec::fat(delta, 10)).unwrap();
        let d = set.measure();
        let bound = 1.0 / d + 1.0 / (1.0 - d);
        let dx = (x - y).abs().min(1.0 - (x - y).abs());
        let dh = (explicit_cantor_value(&set, x) - explicit_cantor_value(&set, y)).abs();
        prop_assert!(dh <= bound * dx + 1e-9);
        prop_assert!(explicit_cantor_value(&set, 0.0).abs() <= 1e-12);
    }

    #[test]
    fn liouville_class_is_additive(
        c in prop::collection::vec(-2.0f64..2.0, 4),
        s in prop::collection::vec(-1.0f64..1.0, 4),
        p in -1.0f64..1.0,
    ) {
        let t = Torus::unit(2);
        let probe = GridSpec::uniform(t.clone(), 32).unwrap();
        let a = OneForm::parse(t.clone(), &[
            &format!("{} + {}*sin(2*pi*x1)", c[0], s[0]),
            &format!("{} + {}*cos(2*pi*x2)", c[1], s[1]),
        ]).unwrap();
        let b = OneForm::parse(t.clone(), &[
            &format!("{} + {}*cos(4*pi*x1)", c[2], s[2]),
            &format!("{} + {}*sin(2*pi*x2)", c[3], s[3]),
        ]).unwrap()
        .add(&OneForm::exact(t.clone(), Expr::parse(&format!("{p}*sin(2*pi*(x1 - x2))")).unwrap()).unwrap())
        .unwrap();
        let ca = liouville_class(&a, &probe).unwrap();
        let cb = liouville_class(&b, &probe).unwrap();
        let cab = liouville_class(&a.add(&b).unwrap(), &probe).unwrap();
        prop_assert!(cab.distance(&ca.add(&cb)) <= 1e-9);
        prop_assert!((ca.components[0] - c[0]).abs() <= 1e-9);
        prop_assert!((cb.components[1] - c[3]).abs() <= 1e-9);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_constants(vals in prop::collection::vec(-10.0f64..10.0, 48), k in -10.0f64..10.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let grid = GridSpec::new(Torus::unit(2), vec![8, 6]).unwrap();
        let f = ScalarField::new(grid.clone(), vals.clone()).unwrap();
        for i in 0..grid.len() {
            prop_assert_eq!(f.interpolate(&grid.coords(i)), vals[i]);
        }
        let flat = ScalarField::new(grid, vec![k; 48]).unwrap();
        prop_assert_eq!(flat.interpolate(&[x, y]), k);
    }

    #[test]
    fn field_csv_round_trips(vals in prop::collection::vec(-1e6f64..1e6, 30)) {
        let grid = GridSpec::new(Torus::new(vec![1.0, 3.0]).unwrap(), vec![5, 6]).unwrap();
        let f = ScalarField::new(grid.clone(), vals.clone()).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &f, &[]).unwrap();
        let t = read_field_csv(buf.as_slice()).unwrap();
        for i in 0..grid.len() {
            prop_assert_eq!(&t.coords[i], &grid.coords(i));
            prop_assert_eq!(t.values[i][0], vals[i]);
        }
    }

    #[test]
    fn key_values_round_trip(entries in prop::collection::btree_map("[a-z][a-z0-9_]{0,6}", "[A-Za-z0-9.*+()-]{1,10}", 0..6)) {
        let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let kv = KeyValues::parse(&text).unwrap();
        for (k, v) in &entries {
            prop_assert_eq!(kv.get(k), Some(v.as_str()));
        }
    }
}
