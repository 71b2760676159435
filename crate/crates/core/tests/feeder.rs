mod common;

use common::*;
use dercap_core::error::FeederError;
use dercap_core::feeder::*;
use nalgebra::{DMatrix, Matrix3};
use proptest::prelude::*;

fn two_node_single(r: f64, x: f64) -> FeederModel {
    let (rm, xm) = phase_a(r, x);
    model(vec![node(0, "a"), node(1, "a")], vec![line(0, 1, rm, xm)], vec![], vec![])
}

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

#[test]
fn loads_two_node_fixture() {
    let m = load("two_node.json");
    assert_eq!(m.num_buses(), 1);
    assert_eq!(m.lines.len(), 1);
    assert_eq!(m.loads.len(), 1);
    assert!((m.z_base_ohm() - 1.0).abs() < 1e-15);
}

#[test]
fn loads_ieee37_fixture() {
    let m = load("ieee37.json");
    // 37 feeder buses plus the OLTC secondary ahead of the substation transformer.
    assert_eq!(m.nodes.len(), 38);
    assert_eq!(m.lines.len(), 37);
    assert_eq!(m.ders.len(), 108);
    assert_eq!(m.node_by_label("SUB"), Some(0));
    assert_eq!(m.node_by_label("799"), Some(1));
    assert!(m.ders.iter().all(|d| d.node >= 2));
    assert!(m.nodes.iter().all(|n| n.phases.count() == 3));
    let p: f64 = m.loads.iter().map(|l| l.p_kw).sum();
    assert!((p - 2000.0).abs() < 1e-3);
}

#[test]
fn loop_is_rejected() {
    let text = r#"{"base_kva":1000,"base_kv":1,"substation":{"tap_step":0.0063,"max_taps":16},
      "nodes":[{"id":0,"phases":"a"},{"id":1,"phases":"a"},{"id":2,"phases":"a"}],
      "lines":[{"from":0,"to":1,"r_ohm":[[0.1,0,0],[0,0,0],[0,0,0]],"x_ohm":[[0.1,0,0],[0,0,0],[0,0,0]]},
               {"from":1,"to":2,"r_ohm":[[0.1,0,0],[0,0,0],[0,0,0]],"x_ohm":[[0.1,0,0],[0,0,0],[0,0,0]]},
               {"from":2,"to":1,"r_ohm":[[0.1,0,0],[0,0,0],[0,0,0]],"x_ohm":[[0.1,0,0],[0,0,0],[0,0,0]]}]}"#;
    assert!(matches!(FeederModel::from_json(text), Err(FeederError::Cycle { .. })));
}

#[test]
fn detached_cycle_is_rejected() {
    let text = r#"{"base_kva":1000,"base_kv":1,"substation":{"tap_step":0.0063,"max_taps":16},
      "nodes":[{"id":0,"phases":"a"},{"id":1,"phases":"a"},{"id":2,"phases":"a"}],
      "lines":[{"from":2,"to":1,"r_ohm":[[0.1,0,0],[0,0,0],[0,0,0]],"x_ohm":[[0.1,0,0],[0,0,0],[0,0,0]]},
               {"from":1,"to":2,"r_ohm":[[0.1,0,0],[0,0,0],[0,0,0]],"x_ohm":[[0.1,0,0],[0,0,0],[0,0,0]]}]}"#;
    assert!(matches!(FeederModel::from_json(text), Err(FeederError::Cycle { .. })));
}

#[test]
fn malformed_documents_name_the_problem() {
    match FeederModel::from_json("{\"base_kva\": 1000,\n \"base_kv\": }") {
        Err(FeederError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let bad_phase = r#"{"base_kva":1000,"base_kv":1,"substation":{"tap_step":0.0063,"max_taps":16},
      "nodes":[{"id":0,"phases":"a"},{"id":1,"phases":"ax"}],"lines":[]}"#;
    match FeederModel::from_json(bad_phase) {
        Err(FeederError::Schema { field, .. }) => assert_eq!(field, "nodes[1].phases"),
        other => panic!("{other:?}"),
    }
    let dangling = r#"{"base_kva":1000,"base_kv":1,"substation":{"tap_step":0.0063,"max_taps":16},
      "nodes":[{"id":0,"phases":"a"},{"id":1,"phases":"a"}],"lines":[]}"#;
    assert!(matches!(FeederModel::from_json(dangling), Err(FeederError::Dangling { node: 1, .. })));
    let unsym = r#"{"base_kva":1000,"base_kv":1,"substation":{"tap_step":0.0063,"max_taps":16},
      "nodes":[{"id":0,"phases":"ab"},{"id":1,"phases":"ab"}],
      "lines":[{"from":0,"to":1,"r_ohm":[[0.1,0.02,0],[0,0.1,0],[0,0,0]],"x_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0]]}]}"#;
    assert!(matches!(FeederModel::from_json(unsym), Err(FeederError::Schema { .. })));
}

#[test]
fn json_round_trip() {
    let m = load("ieee37.json");
    let text = serde_json::to_string(&m.to_doc()).unwrap();
    let back = FeederModel::from_json(&text).unwrap();
    assert_eq!(back.lines, m.lines);
    assert_eq!(back.loads, m.loads);
    assert_eq!(back.ders, m.ders);
    assert_eq!(back.nodes, m.nodes);
}

#[test]
fn incidence_two_node() {
    let m = model(
        vec![node(0, "abc"), node(1, "abc")],
        vec![line(0, 1, Matrix3::identity() * 0.1, Matrix3::identity() * 0.1)],
        vec![],
        vec![],
    );
    let inc = build_incidence(&m);
    assert_eq!(inc.m, -DMatrix::<f64>::identity(3, 3));
    assert_eq!(inc.m0, DMatrix::<f64>::identity(3, 3));
}

#[test]
fn incidence_chain_reproduces_branch_equations() {
    // 0 → 1 → 2, single phase, r = 0.1, x = 0.2 pu on both lines.
    let (rm, xm) = phase_a(0.1, 0.2);
    let m = model(
        vec![node(0, "a"), node(1, "a"), node(2, "a")],
        vec![line(0, 1, rm, xm), line(1, 2, rm, xm)],
        vec![],
        vec![],
    );
    let inc = build_incidence(&m);
    // Hand solution: loads of 0.3 + j0.1 at node 1 and 0.2 + j0.1 at node 2.
    let (f1, g1, f2, g2) = (0.5, 0.2, 0.2, 0.1);
    let y1 = 1.0 - 2.0 * (0.1 * f1 + 0.2 * g1);
    let y2 = y1 - 2.0 * (0.1 * f2 + 0.2 * g2);
    let mt_y = inc.m.transpose() * nalgebra::DVector::from_vec(vec![y1, y2]) + &inc.m0 * nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0]);
    let expect = [0.2 * f1 + 0.4 * g1, 0.2 * f2 + 0.4 * g2];
    for k in 0..2 {
        assert!((mt_y[k] - expect[k]).abs() < 1e-14);
    }
    let sens = FeederSensitivities::compute(&m);
    let y = solve_voltages(&sens, &[-0.3, -0.2], &[-0.1, -0.1], 1.0);
    assert!((y[0] - y1).abs() < 1e-14 && (y[1] - y2).abs() < 1e-14);
}

#[test]
fn incidence_star_inverse() {
    let z = Matrix3::identity() * 0.1;
    let m = model(
        vec![node(0, "abc"), node(1, "abc"), node(2, "abc"), node(3, "abc")],
        vec![line(0, 1, z, z), line(1, 2, z, z), line(1, 3, z, z)],
        vec![],
        vec![],
    );
    let inc = build_incidence(&m);
    let minv_t = inc.m.transpose().try_inverse().expect("tree incidence is invertible");
    let prod = minv_t * &inc.m0;
    for r in 0..9 {
        for c in 0..3 {
            let want = if r % 3 == c { -1.0 } else { 0.0 };
            assert!((prod[(r, c)] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn two_node_single_phase_drop() {
    let m = two_node_single(0.1, 0.1);
    let sens = FeederSensitivities::compute(&m);
    for (p, q) in [(1.0, 0.0), (0.0, 1.0), (-0.4, 0.7)] {
        let y = solve_voltages(&sens, &[p], &[q], 1.0);
        assert!((y[0] - 1.0 - 2.0 * (0.1 * p + 0.1 * q)).abs() < 1e-14);
    }
    assert!(sens.r_eq[(0, 0)] >= 0.0 && sens.x_eq[(0, 0)] >= 0.0);
}

#[test]
fn zero_impedance_means_flat_voltage() {
    let z = Matrix3::zeros();
    let m = model(vec![node(0, "abc"), node(1, "abc"), node(2, "abc")], vec![line(0, 1, z, z), line(1, 2, z, z)], vec![], vec![]);
    let sens = FeederSensitivities::compute(&m);
    assert!(sens.r_eq.iter().all(|&v| v == 0.0));
    assert!(sens.x_eq.iter().all(|&v| v == 0.0));
    let y = solve_voltages(&sens, &[0.3; 6], &[-0.2; 6], 1.01);
    assert!(y.iter().all(|&v| (v - 1.0201).abs() < 1e-15));
}

#[test]
fn diagonal_impedance_decouples_phases() {
    let z = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.1, 0.12, 0.08));
    let m = model(vec![node(0, "abc"), node(1, "abc"), node(2, "abc")], vec![line(0, 1, z, z), line(1, 2, z, z)], vec![], vec![]);
    let sens = FeederSensitivities::compute(&m);
    for (u, &(_, pu)) in m.index.entries.iter().enumerate() {
        for (v, &(_, pv)) in m.index.entries.iter().enumerate() {
            if pu != pv {
                assert_eq!(sens.r_eq[(u, v)], 0.0);
                assert_eq!(sens.x_eq[(u, v)], 0.0);
            }
        }
    }
}

#[test]
fn flat_profiles() {
    let m = load("ieee37.json");
    let sens = FeederSensitivities::compute(&m);
    let n = m.index.len();
    assert!(solve_voltages(&sens, &vec![0.0; n], &vec![0.0; n], 1.0).iter().all(|&v| v == 1.0));
    assert!(solve_voltages(&sens, &vec![0.0; n], &vec![0.0; n], 1.02).iter().all(|&v| (v - 1.0404).abs() < 1e-15));
}

#[test]
fn four_node_matches_dense_oracle() {
    let m = load("four_node.json");
    let sens = FeederSensitivities::compute(&m);
    let op = OperatingPoint::nominal(&m);
    let (p, q) = op.injections_pu(&m, &[40.0, 70.0], &[10.0, -30.0]);
    let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
    let sens = sens.with_loss_constants(lp.clone(), lq.clone());
    let y = solve_voltages(&sens, &p, &q, 1.03);
    let oracle = dense_voltages(&m, &p, &q, &lp, &lq, 1.03);
    assert!(rel_close(&y, &oracle, 1e-12), "{y:?} vs {oracle:?}");
}

#[test]
fn fixtures_match_dense_oracle() {
    for name in ["two_node.json", "four_node.json", "ieee37.json"] {
        let m = load(name);
        let sens = FeederSensitivities::compute(&m);
        let op = OperatingPoint::nominal(&m);
        let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
        let sens = sens.with_loss_constants(lp.clone(), lq.clone());
        let qd: Vec<f64> = m.ders.iter().map(|d| 0.3 * d.s_kva).collect();
        let (p, q) = op.injections_pu(&m, &op.der_avail_kw, &qd);
        let y = solve_voltages(&sens, &p, &q, 0.98);
        let oracle = dense_voltages(&m, &p, &q, &lp, &lq, 0.98);
        assert!(rel_close(&y, &oracle, 1e-12), "{name}");
    }
}

#[test]
fn flow_examples() {
    let (rm, xm) = phase_a(0.1, 0.1);
    let m = model(
        vec![node(0, "a"), node(1, "a"), node(2, "a"), node(3, "a")],
        vec![line(0, 1, rm, xm), line(1, 2, rm, xm), line(2, 3, rm, xm)],
        vec![],
        vec![],
    );
    let z = [0.0; 3];
    let f = line_flows(&m, &[0.0, 0.0, -1.0], &[0.0, 0.0, -0.5], &z, &z);
    assert_eq!(f.p, vec![1.0, 1.0, 1.0]);
    assert_eq!(f.q, vec![0.5, 0.5, 0.5]);
    let f = line_flows(&m, &z, &z, &z, &z);
    assert!(f.p.iter().chain(&f.q).all(|&v| v == 0.0));
}

#[test]
fn ieee37_root_flow_sums_loads_and_losses() {
    let m = load("ieee37.json");
    let sens = FeederSensitivities::compute(&m);
    let op = OperatingPoint::scaled(&m, 1.0, 0.0, "peak load, no solar");
    let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
    let (p, q) = op.injections_pu(&m, &op.der_avail_kw, &vec![0.0; m.ders.len()]);
    let f = line_flows(&m, &p, &q, &lp, &lq);
    let (rp, rq) = f.root_totals(&m);
    let base = m.phase_base_kva();
    for ph in [Phase::A, Phase::B, Phase::C] {
        let mut want_p = 0.0;
        let mut want_q = 0.0;
        for (u, &(_, x)) in m.index.entries.iter().enumerate() {
            if x == ph {
                want_p += op.load_p_kw[u] / base + lp[u];
                want_q += op.load_q_kvar[u] / base + lq[u];
            }
        }
        assert!((rp[ph.index()] - want_p).abs() < 1e-12);
        assert!((rq[ph.index()] - want_q).abs() < 1e-12);
    }
}

#[test]
fn incidence_relation_holds_for_flows() {
    let m = load("four_node.json");
    let inc = build_incidence(&m);
    let p = [-0.3, 0.1, -0.25];
    let q = [-0.1, 0.05, -0.1];
    let lp = [0.01, 0.002, 0.003];
    let lq = [0.02, 0.001, 0.004];
    let f = line_flows(&m, &p, &q, &lp, &lq);
    let mf = &inc.m * nalgebra::DVector::from_column_slice(&f.p);
    let mg = &inc.m * nalgebra::DVector::from_column_slice(&f.q);
    for k in 0..3 {
        assert!((mf[k] - (p[k] - lp[k])).abs() < 1e-15);
        assert!((mg[k] - (q[k] - lq[k])).abs() < 1e-15);
    }
}

#[test]
fn loss_constant_examples() {
    let m = load("ieee37.json");
    let sens = FeederSensitivities::compute(&m);
    let op = OperatingPoint::scaled(&m, 0.0, 0.0, "empty");
    let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
    assert!(lp.iter().chain(&lq).all(|&v| v == 0.0));

    // x = 0.1 pu, r = 0 so the lossless voltage stays at 1; unit real flow.
    let (rm, xm) = phase_a(0.0, 0.1);
    let m = model(
        vec![node(0, "a"), node(1, "a")],
        vec![line(0, 1, rm, xm)],
        vec![Load {
            node: 1,
            phase: Phase::A,
            p_kw: m.phase_base_kva(),
            q_kvar: 0.0,
        }],
        vec![],
    );
    let sens = FeederSensitivities::compute(&m);
    let (lp, lq) = estimate_loss_constants(&m, &sens, &OperatingPoint::nominal(&m));
    assert!((lq[0] - 0.1).abs() < 1e-12);
    assert_eq!(lp[0], 0.0);
}

#[test]
fn ieee37_loss_constants_close_to_fixed_point() {
    let m = load("ieee37.json");
    let sens = FeederSensitivities::compute(&m);
    let op = OperatingPoint::scaled(&m, 1.0, 0.0, "peak load");
    let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
    // One re-substitution: flows and voltages with the estimated losses, then recompute.
    let (p, q) = op.injections_pu(&m, &op.der_avail_kw, &vec![0.0; m.ders.len()]);
    let with = sens.clone().with_loss_constants(lp.clone(), lq.clone());
    let y = solve_voltages(&with, &p, &q, 1.0);
    let f = line_flows(&m, &p, &q, &lp, &lq);
    let mut again = 0.0;
    for u in 0..lq.len() {
        again += reactive_loss(f.p[u], f.q[u], y[u], with.x_diag[u]).unwrap();
    }
    let est: f64 = lq.iter().sum();
    assert!(est > 0.0);
    assert!((est - again).abs() <= 0.25 * again, "{est} vs {again}");
}

#[test]
fn reactive_loss_examples() {
    assert!((reactive_loss(1.0, 0.0, 1.0, 0.1).unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(reactive_loss(0.0, 0.0, 1.0, 0.1).unwrap(), 0.0);
    assert!((reactive_loss(0.6, 0.8, 1.0, 0.05).unwrap() - 0.05).abs() < 1e-15);
    assert!(matches!(reactive_loss(1.0, 0.0, 0.0, 0.1), Err(FeederError::NonPositiveVoltage(_))));
}

#[test]
fn substation_var_examples() {
    let (rm, xm) = phase_a(0.0, 0.0);
    let mk = |ders: Vec<Der>| {
        model(
            vec![node(0, "a"), node(1, "a")],
            vec![line(0, 1, rm, xm)],
            vec![Load {
                node: 1,
                phase: Phase::A,
                p_kw: 0.0,
                q_kvar: 500.0,
            }],
            ders,
        )
    };
    let m = mk(vec![]);
    let sens = FeederSensitivities::compute(&m);
    let op = OperatingPoint::nominal(&m);
    let st = evaluate(&m, &sens, &op, &[], &[], 1.0).unwrap();
    assert!((st.q_net_kvar - 500.0).abs() < 1e-9);

    let m = mk(vec![Der {
        id: 0,
        node: 1,
        phase: Phase::A,
        p_rated_kw: 0.0,
        s_kva: 600.0,
    }]);
    let sens = FeederSensitivities::compute(&m);
    let op = OperatingPoint::nominal(&m);
    let st = evaluate(&m, &sens, &op, &[0.0], &[500.0], 1.0).unwrap();
    assert!(st.q_net_kvar.abs() < 1e-9);
}

#[test]
fn ieee37_base_demand_is_load_plus_losses() {
    let m = load("ieee37.json");
    let sens0 = FeederSensitivities::compute(&m);
    let op = OperatingPoint::nominal(&m);
    let (lp, lq) = estimate_loss_constants(&m, &sens0, &op);
    let sens = sens0.with_loss_constants(lp, lq);
    let st = evaluate(&m, &sens, &op, &op.der_avail_kw, &vec![0.0; m.ders.len()], 1.0).unwrap();
    let load_q: f64 = m.loads.iter().map(|l| l.q_kvar).sum();
    assert!(st.q_net_kvar > load_q);
    assert!(st.q_net_kvar < 1.2 * load_q, "{}", st.q_net_kvar);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_oracle_on_small_feeders(seed in any::<u64>(), v0 in 0.9f64..1.1) {
        let m = random_feeder(seed, 5);
        let sens = FeederSensitivities::compute(&m);
        let op = OperatingPoint::nominal(&m);
        let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
        let sens = sens.with_loss_constants(lp.clone(), lq.clone());
        let (p, q) = op.injections_pu(&m, &[], &[]);
        let y = solve_voltages(&sens, &p, &q, v0);
        let oracle = dense_voltages(&m, &p, &q, &lp, &lq, v0);
        prop_assert!(rel_close(&y, &oracle, 1e-12));
    }

    #[test]
    fn voltages_are_affine_in_injections(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let m = random_feeder(seed, 8);
        let sens = FeederSensitivities::compute(&m);
        let op = OperatingPoint::nominal(&m);
        let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
        let sens = sens.with_loss_constants(lp, lq);
        let (p, q) = op.injections_pu(&m, &[], &[]);
        let ap: Vec<f64> = p.iter().map(|v| alpha * v).collect();
        let aq: Vec<f64> = q.iter().map(|v| alpha * v).collect();
        let y1 = solve_voltages(&sens, &p, &q, 1.0);
        let ya = solve_voltages(&sens, &ap, &aq, 1.0);
        for u in 0..y1.len() {
            let lhs = ya[u] - 1.0 - sens.l_c[u];
            let rhs = alpha * (y1[u] - 1.0 - sens.l_c[u]);
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + ya[u].abs() + rhs.abs()), "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn lossless_root_flow_is_negated_injection(seed in any::<u64>()) {
        let m = random_feeder(seed, 10);
        let op = OperatingPoint::nominal(&m);
        let (p, q) = op.injections_pu(&m, &[], &[]);
        let z = vec![0.0; p.len()];
        let f = line_flows(&m, &p, &q, &z, &z);
        let (rp, rq) = f.root_totals(&m);
        for ph in [Phase::A, Phase::B, Phase::C] {
            let (mut sp, mut sq) = (0.0, 0.0);
            for (u, &(_, x)) in m.index.entries.iter().enumerate() {
                if x == ph { sp += p[u]; sq += q[u]; }
            }
            prop_assert!((rp[ph.index()] + sp).abs() < 1e-12);
            prop_assert!((rq[ph.index()] + sq).abs() < 1e-12);
        }
    }

    #[test]
    fn single_phase_sensitivities_nonnegative(seed in any::<u64>()) {
        let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(seed);
        use rand::Rng;
        let n = rng.gen_range(2..12);
        let mut nodes = vec![node(0, "a")];
        let mut lines = vec![];
        for j in 1..n {
            nodes.push(node(j, "a"));
            let (r, x) = phase_a(rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3));
            lines.push(line(rng.gen_range(0..j), j, r, x));
        }
        let m = model(nodes, lines, vec![], vec![]);
        let sens = FeederSensitivities::compute(&m);
        prop_assert!(sens.r_eq.iter().all(|&v| v >= 0.0));
        prop_assert!(sens.x_eq.iter().all(|&v| v >= 0.0));
        let inc = build_incidence(&m);
        prop_assert!(inc.m.clone().lu().try_inverse().is_some());
    }
}
