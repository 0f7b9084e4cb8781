use std::path::PathBuf;

use dip::opf::*;
use dip_core::{CooMatrix, PartitionedNlp};
use num_complex::Complex64;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> OpfCase {
    parse_matpower_case(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn single_region(case: &OpfCase) -> OpfPartition {
    partition_opf(case, &[case.buses.iter().map(|b| b.id).collect()]).unwrap()
}

/// Injections `v_k conj(i_k)` accumulated branch by branch from the pi
/// model, independent of the admittance matrix.
fn branch_flow_injections(case: &OpfCase, v: &[Complex64]) -> Vec<Complex64> {
    let idx = case.bus_lookup();
    let mut s = vec![Complex64::default(); case.buses.len()];
    for (k, b) in case.buses.iter().enumerate() {
        let ysh = Complex64::new(b.gs, b.bs);
        s[k] += v[k] * (ysh * v[k]).conj();
    }
    for br in case.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (idx[&br.from], idx[&br.to]);
        let ys = Complex64::new(br.r, br.x).inv();
        let half = Complex64::new(0.0, br.b / 2.0);
        let tau = if br.tap == 0.0 { 1.0 } else { br.tap };
        let i_f = (ys + half) / (tau * tau) * v[f] - ys / tau * v[t];
        let i_t = (ys + half) * v[t] - ys / tau * v[f];
        s[f] += v[f] * i_f.conj();
        s[t] += v[t] * i_t.conj();
    }
    s
}

fn perturbed(case: &OpfCase, seed: f64) -> OpfPoint {
    let mut pt = OpfPoint::flat(case);
    for k in 0..case.buses.len() {
        pt.e[k] = 1.0 + 0.04 * (seed + 1.7 * k as f64).sin();
        pt.f[k] = 0.1 * (seed + 0.3 * k as f64).cos();
    }
    for g in 0..case.generators.len() {
        pt.p[g] += 0.1 * (seed + g as f64).sin();
        pt.q[g] -= 0.05 * (seed + 2.0 * g as f64).cos();
    }
    pt
}

#[test]
fn parses_reference_cases() {
    for (name, buses, branches, gens) in [
        ("case9.m", 9, 9, 3),
        ("case14.m", 14, 20, 5),
        ("case118.m", 118, 186, 54),
    ] {
        let c = load(name);
        assert_eq!((c.buses.len(), c.branches.len(), c.generators.len()), (buses, branches, gens), "{name}");
        assert_eq!(c.slack_buses().len(), 1, "{name}");
        assert_eq!(c.base_mva, 100.0);
    }
}

#[test]
fn matpower_round_trip_preserves_case118() {
    let c = load("case118.m");
    assert_eq!(parse_matpower_case(&write_matpower_case(&c)).unwrap(), c);
}

#[test]
fn balance_rows_match_branch_flow_oracle() {
    for name in ["case9.m", "case14.m", "case118.m"] {
        let case = load(name);
        let part = single_region(&case);
        for pt in [OpfPoint::flat(&case), perturbed(&case, 0.4)] {
            let x = pt.restrict(&part.layouts[0]);
            let g = part.problem.evaluate(0, &x).unwrap().g;
            let v: Vec<Complex64> = pt.e.iter().zip(&pt.f).map(|(&e, &f)| Complex64::new(e, f)).collect();
            let s = branch_flow_injections(&case, &v);
            for (k, bus) in case.buses.iter().enumerate() {
                let mut want = s[k] + Complex64::new(bus.pd, bus.qd);
                for (gi, gen) in case.generators.iter().enumerate() {
                    if gen.in_service && gen.bus == bus.id {
                        want -= Complex64::new(pt.p[gi], pt.q[gi]);
                    }
                }
                assert!((g[2 * k] - want.re).abs() < 1e-10, "{name} P bus {}", bus.id);
                assert!((g[2 * k + 1] - want.im).abs() < 1e-10, "{name} Q bus {}", bus.id);
            }
        }
    }
}

#[test]
fn flat_start_without_demand_is_balanced() {
    let mut case = load("two_bus.m");
    for b in &mut case.buses {
        b.pd = 0.0;
        b.qd = 0.0;
    }
    let part = single_region(&case);
    let mut pt = OpfPoint::flat(&case);
    pt.p = vec![0.0];
    pt.q = vec![0.0];
    let g = part.problem.evaluate(0, &pt.restrict(&part.layouts[0])).unwrap().g;
    assert!(g.iter().all(|v| *v == 0.0), "{g:?}");
}

/// Newton power flow in polar form for the two-bus case: slack `1∠0`, PQ
/// bus with the given load over a lossless line of reactance `x`.
fn two_bus_power_flow(pd: f64, qd: f64, x: f64) -> (f64, f64) {
    let b = 1.0 / x;
    let (mut vm, mut va) = (1.0_f64, 0.0_f64);
    for _ in 0..50 {
        // injections at bus 2 with B = [[-b, b], [b, -b]]
        let p = vm * b * va.sin();
        let q = vm * vm * b - vm * b * va.cos();
        let r = [p + pd, q + qd];
        if r[0].abs().max(r[1].abs()) < 1e-14 {
            break;
        }
        let j = [[vm * b * va.cos(), b * va.sin()], [vm * b * va.sin(), 2.0 * vm * b - b * va.cos()]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        va -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        vm -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
    }
    (vm, va)
}

#[test]
fn power_flow_solution_satisfies_equalities() {
    let case = load("two_bus.m");
    let (vm, va) = two_bus_power_flow(0.5, 0.2, 0.1);
    let v2 = Complex64::from_polar(vm, va);
    // slack supplies the load plus reactive line losses
    let i = (Complex64::new(1.0, 0.0) - v2) / Complex64::new(0.0, 0.1);
    let s1 = i.conj();
    let part = single_region(&case);
    let pt = OpfPoint {
        e: vec![1.0, v2.re],
        f: vec![0.0, v2.im],
        p: vec![s1.re],
        q: vec![s1.im],
    };
    let g = part.problem.evaluate(0, &pt.restrict(&part.layouts[0])).unwrap().g;
    assert_eq!(g.len(), 6);
    assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    assert!((s1.re - 0.5).abs() < 1e-12);
}

#[test]
fn objective_uses_system_base() {
    let case = load("two_bus.m");
    let part = single_region(&case);
    let mut pt = OpfPoint::flat(&case);
    pt.p = vec![0.5];
    let f = part.problem.evaluate(0, &pt.restrict(&part.layouts[0])).unwrap().f;
    // 0.01 * 50^2 + 20 * 50
    assert!((f - 1025.0).abs() < 1e-9);
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    let case = load("case118.m");
    for part in [
        single_region(&case),
        {
            let ties = parse_tie_specs(&std::fs::read_to_string(fixture("ties_2x118.json")).unwrap()).unwrap();
            let ic = interconnect_copies(&case, 2, &ties).unwrap();
            partition_opf(&ic.case, &ic.regions).unwrap()
        },
    ] {
        for (i, layout) in part.layouts.iter().enumerate() {
            let d = part.problem.subsystems()[i].dims();
            let x: Vec<f64> = (0..layout.n_x()).map(|j| 1.0 + 0.1 * (j as f64 * 0.37).sin()).collect();
            let gamma: Vec<f64> = (0..d.n_g).map(|j| (j as f64 * 1.1).cos()).collect();
            let mu: Vec<f64> = (0..d.n_h).map(|j| 0.3 + 0.2 * (j as f64).sin().abs()).collect();
            let rep = part.problem.check_derivatives_fd(i, &x, &gamma, &mu, 1e-5).unwrap();
            assert!(rep.passed, "region {i}: {rep:?}");
        }
    }
}

fn two_region_14() -> (OpfCase, OpfPartition) {
    let case = load("case14.m");
    let regions = vec![vec![1, 2, 3, 4, 5], vec![6, 7, 8, 9, 10, 11, 12, 13, 14]];
    let part = partition_opf(&case, &regions).unwrap();
    (case, part)
}

#[test]
fn partition_round_trip_matches_centralized_model() {
    let (case, part) = two_region_14();
    let central = single_region(&case);
    let pt = perturbed(&case, 1.3);
    let xs: Vec<Vec<f64>> = part.layouts.iter().map(|l| pt.restrict(l)).collect();
    let points: Vec<_> = xs
        .iter()
        .zip(part.problem.subsystems())
        .map(|(x, s)| {
            let mut p = dip_core::SubsystemPoint::zeros(s.dims());
            p.x = x.clone();
            p
        })
        .collect();
    assert_eq!(part.problem.consensus_violation(&points), 0.0);
    assert_eq!(OpfPoint::assemble(&case, &part.layouts, &xs), pt);

    let xc = pt.restrict(&central.layouts[0]);
    let gc = central.problem.evaluate(0, &xc).unwrap();
    let mut f = 0.0;
    for (r, layout) in part.layouts.iter().enumerate() {
        let v = part.problem.evaluate(r, &xs[r]).unwrap();
        f += v.f;
        for (j, &k) in layout.buses.iter().enumerate() {
            assert_eq!(v.g[2 * j], gc.g[2 * k]);
            assert_eq!(v.g[2 * j + 1], gc.g[2 * k + 1]);
        }
    }
    assert!((f - gc.f).abs() <= 1e-12 * gc.f.abs());
    let n_c = part.problem.n_c();
    assert_eq!(n_c, part.rows.len());
}

fn stacked_coupling(p: &PartitionedNlp) -> Vec<Vec<(usize, usize, f64)>> {
    let mut rows = vec![Vec::new(); p.n_c()];
    for (i, s) in p.subsystems().iter().enumerate() {
        let a: &CooMatrix = s.coupling();
        for &(r, c, v) in a.triplets() {
            rows[r].push((i, c, v));
        }
    }
    rows
}

#[test]
fn coupling_rows_pair_owner_and_copy() {
    let (_, part) = two_region_14();
    for (r, entries) in stacked_coupling(&part.problem).iter().enumerate() {
        assert_eq!(entries.len(), 2, "row {r}");
        let row = part.rows[r];
        let plus = entries.iter().find(|e| e.2 == 1.0).unwrap();
        let minus = entries.iter().find(|e| e.2 == -1.0).unwrap();
        assert_eq!((plus.0, minus.0), (row.owner, row.holder));
    }
    assert!(part.problem.coupling_rhs().iter().all(|b| *b == 0.0));
}

#[test]
fn flat_start_has_zero_consensus() {
    let (case, part) = two_region_14();
    let start = dip_core::initial_points(&part.problem, part.flat_start(&case), 0.1).unwrap();
    assert_eq!(part.problem.consensus_violation(&start), 0.0);
}

#[test]
fn two_bus_split_has_four_coupling_rows() {
    let case = load("two_bus.m");
    let part = partition_opf(&case, &[vec![1], vec![2]]).unwrap();
    assert_eq!(part.problem.n_c(), 4);
    assert_eq!(part.tie_lines, vec![0]);
    assert_eq!(part.layouts[0].n_x(), 2 * (1 + 1 + 1));
    assert_eq!(part.layouts[1].n_x(), 2 * (1 + 1));
}

#[test]
fn partition_errors() {
    let case = load("case14.m");
    let bad = |regions: Vec<Vec<usize>>| partition_opf(&case, &regions).unwrap_err();
    assert!(matches!(bad(vec![vec![1, 2, 3]]), OpfError::Partition(_)));
    assert!(matches!(
        bad(vec![(6..=14).collect(), vec![1, 2, 3, 4, 5]]),
        OpfError::Partition(_)
    ));
    assert!(matches!(
        bad(vec![vec![1, 2, 3, 4, 5, 5], (6..=14).collect()]),
        OpfError::Partition(_)
    ));
    assert!(matches!(
        bad(vec![vec![1, 2, 3, 4, 5, 99], (6..=14).collect()]),
        OpfError::Partition(_)
    ));
    // 1 and 8 are not adjacent
    assert!(matches!(
        bad(vec![vec![1, 8, 2, 3, 4, 5], vec![6, 7, 9, 10, 11, 12, 13, 14]]),
        OpfError::RegionDisconnected { region: 1 }
    ));
}

#[test]
fn interconnecting_two_bus_copies() {
    let case = load("two_bus.m");
    let ties = [TieSpec {
        copy_a: 1,
        bus_a: 2,
        copy_b: 2,
        bus_b: 1,
        r: 0.01,
        x: 0.1,
        b: 0.0,
    }];
    let ic = interconnect_copies(&case, 2, &ties).unwrap();
    assert_eq!(ic.stride, 10);
    assert_eq!(ic.case.buses.len(), 4);
    assert_eq!(ic.case.branches.len(), 3);
    assert_eq!(ic.case.generators.len(), 2);
    assert_eq!(ic.regions, vec![vec![1, 2], vec![11, 12]]);
    assert_eq!(ic.case.slack_buses(), vec![0]);
    assert_eq!(ic.case.buses[2].kind, BusType::Pv);
    let last = ic.case.branches.last().unwrap();
    assert_eq!((last.from, last.to), (2, 11));
    let part = partition_opf(&ic.case, &ic.regions).unwrap();
    assert_eq!(part.problem.n_c(), 4);
}

#[test]
fn interconnect_errors() {
    let case = load("two_bus.m");
    let tie = |copy_b, bus_b| TieSpec {
        copy_a: 1,
        bus_a: 1,
        copy_b,
        bus_b,
        r: 0.0,
        x: 0.1,
        b: 0.0,
    };
    assert!(interconnect_copies(&case, 1, &[]).is_err());
    assert!(interconnect_copies(&case, 2, &[tie(3, 1)]).is_err());
    assert!(interconnect_copies(&case, 2, &[tie(2, 7)]).is_err());
    assert!(interconnect_copies(&case, 2, &[tie(1, 2)]).is_err());
    // copies without a tie line between them
    let ic = interconnect_copies(&case, 2, &[]).unwrap();
    assert!(matches!(partition_opf(&ic.case, &ic.regions), Err(OpfError::NoTies { region: 1 })));
}

#[test]
fn six_copy_fixture_builds() {
    let case = load("case118.m");
    let ties = parse_tie_specs(&std::fs::read_to_string(fixture("ties_6x118.json")).unwrap()).unwrap();
    let ic = interconnect_copies(&case, 6, &ties).unwrap();
    assert_eq!(ic.stride, 1000);
    let part = partition_opf(&ic.case, &ic.regions).unwrap();
    assert_eq!(part.problem.len(), 6);
    assert_eq!(part.tie_lines.len(), 7);
    // every tie adds one copy at each end: 2 * 2 * 7 rows
    assert_eq!(part.problem.n_c(), 28);
}

#[test]
fn unpartitioned_model_rejects_bad_topology() {
    let mut case = load("two_bus.m");
    case.buses[1].kind = BusType::Slack;
    assert!(matches!(build_opf_nlp(&case), Err(OpfError::SlackCount(2))));
    let mut case = load("two_bus.m");
    case.branches[0].in_service = false;
    assert!(matches!(build_opf_nlp(&case), Err(OpfError::Disconnected { bus: 2 })));
    let nlp = build_opf_nlp(&load("case9.m")).unwrap();
    assert_eq!(nlp.layout.n_x(), 2 * (9 + 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn admittance_symmetric_and_losses_nonnegative(
        mags in proptest::collection::vec(0.9f64..1.1, 118),
        angles in proptest::collection::vec(-0.3f64..0.3, 118),
    ) {
        let case = load("case118.m");
        let y = build_admittance(&case).unwrap();
        for k in 0..y.order() {
            for (m, v) in y.row(k) {
                prop_assert_eq!(y.get(m, k), v);
            }
        }
        let v: Vec<Complex64> = mags.iter().zip(&angles).map(|(&r, &a)| Complex64::from_polar(r, a)).collect();
        let s = y.injections(&v);
        let oracle = branch_flow_injections(&case, &v);
        for (a, b) in s.iter().zip(&oracle) {
            prop_assert!((a - b).norm() < 1e-9);
        }
        // series losses plus shunt conductance, both nonnegative here
        let total: f64 = s.iter().map(|z| z.re).sum();
        prop_assert!(total >= -1e-9);
    }
}
