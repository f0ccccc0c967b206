use proptest::prelude::*;

use tensiform::analysis::{compare_functionals, equilibrium_residual, extended_force_densities};
use tensiform::fixtures::{self, Support};
use tensiform::io::{run_request, SolveRequest};
use tensiform::linear_fdm::{assemble_d, solve_linear_fdm};
use tensiform::model::DofMap;
use tensiform::optimizer::{minimize_many, strut_lengths};
use tensiform::{minimize_constrained, Assembly, ElementFunctional, Init, MemberRole, Model, SolveOptions};

fn small_net() -> impl Strategy<Value = (Model, Vec<f64>)> {
    (3usize..6, 3usize..6, prop::array::uniform4(-2.0f64..2.0)).prop_flat_map(|(rows, cols, z)| {
        let model = fixtures::make_net(rows, cols, &fixtures::corner_supports(rows, cols, z));
        let n = model.members.len();
        (Just(model), prop::collection::vec(0.2f64..3.0, n))
    })
}

/// Gives every cable its own `PowerLength(q/2, 2)`.
fn with_half_densities(model: &Model, q: &[f64]) -> Model {
    let mut m = model.clone();
    m.functionals = q.iter().map(|&q| ElementFunctional::PowerLength { weight: q / 2.0, power: 2 }).collect();
    for (i, mem) in m.members.iter_mut().enumerate() {
        mem.role = MemberRole::Cable { functional: i };
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn d_is_exactly_symmetric((model, q) in small_net()) {
        let d = assemble_d(&model, &q).unwrap().d;
        prop_assert_eq!(d.clone(), d.transpose());
    }

    #[test]
    fn positive_densities_solve_by_factorization((model, q) in small_net()) {
        let d = assemble_d(&model, &q).unwrap().d;
        prop_assert!((-d).cholesky().is_some());
        prop_assert!(solve_linear_fdm(&model, &q).is_ok());
    }

    #[test]
    fn optimizer_reproduces_linear_solution((model, q) in small_net(), seed in 0u64..1000) {
        let m = with_half_densities(&model, &q);
        let lin = solve_linear_fdm(&m, &q).unwrap();
        let opts = SolveOptions::default().with_seed(seed).with_tolerance(1e-10);
        let s = minimize_constrained(&m, &opts).unwrap();
        prop_assert!(s.converged);
        let d = s.coords.iter().zip(&lin.coords).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-6, "max difference {}", d);
    }

    #[test]
    fn dof_map_is_a_bijection((model, _q) in small_net(), extra in prop::collection::vec(any::<bool>(), 36)) {
        let mut m = model.clone();
        for (node, &fix) in m.nodes.iter_mut().zip(&extra) {
            node.fixed |= fix;
        }
        prop_assume!(m.nodes.iter().any(|n| !n.fixed));
        let dofs = DofMap::build(&m).unwrap();
        prop_assert_eq!(dofs.len(), 3 * m.free_node_count());
        for i in 0..dofs.len() {
            let (node, axis) = dofs.node_axis(i);
            prop_assert_eq!(dofs.index(node, axis), Some(i));
        }
        let x = dofs.gather(&m);
        let back = m.with_coordinates(&dofs, &x);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn simplex_solves_satisfy_the_contract(seed in 0u64..10_000) {
        let model = fixtures::make_simplex(10.0);
        let opts = SolveOptions::default().with_seed(seed);
        let s = minimize_constrained(&model, &opts).unwrap();
        prop_assert!(s.constraint_violation <= 1e-9 * 10.0);
        for w in s.trace.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy, "energy rose {} -> {}", w[0].energy, w[1].energy);
        }
        if s.converged {
            prop_assert!(s.residual_norm <= opts.gradient_tolerance * s.residual_scale);
            let report = equilibrium_residual(&model, &s.coords, &s.forces).unwrap();
            let limit = 10.0 * opts.gradient_tolerance * s.forces.mean_abs_cable_force().max(1.0);
            prop_assert!(report.inf_norm <= limit, "residual {} > {}", report.inf_norm, limit);
        }
    }

    #[test]
    fn fixed_nodes_never_move(seed in 0u64..10_000, z in -2.0f64..2.0) {
        let supports = [
            Support { row: 0, col: 0, z },
            Support { row: 0, col: 3, z: 0.0 },
            Support { row: 3, col: 3, z },
            Support { row: 3, col: 0, z: 0.0 },
            Support { row: 1, col: 2, z: 1.5 },
        ];
        let model = fixtures::make_net(4, 4, &supports);
        let s = minimize_constrained(&model, &SolveOptions::default().with_seed(seed)).unwrap();
        let dofs = DofMap::build(&model).unwrap();
        let solved = model.with_coordinates(&dofs, &s.coords);
        for (a, b) in model.nodes.iter().zip(&solved.nodes) {
            if a.fixed {
                prop_assert_eq!(a.position, b.position);
            }
        }
    }

    #[test]
    fn extended_densities_rebuild_forces(seed in 0u64..10_000) {
        let model = fixtures::make_strut20(3, 1.0, 2.0, 10.0).unwrap();
        let s = minimize_constrained(&model, &SolveOptions::default().with_seed(seed)).unwrap();
        let dens = extended_force_densities(&model, &s.coords, &s.forces).unwrap();
        for (d, &n) in dens.iter().zip(&s.forces.member_forces) {
            prop_assert!(((d.q * d.length) - n).abs() <= 1e-12 * n.abs());
            prop_assert!(((d.w4 * 4.0 * d.length.powi(3)) - n).abs() <= 1e-12 * n.abs());
        }
    }
}

#[test]
fn strut_lengths_hold_at_every_converged_strut20_state() {
    let model = fixtures::make_strut20(6, 1.0, 2.0, 10.0).unwrap();
    let seeds: Vec<u64> = (0..6).collect();
    for s in minimize_many(&model, &SolveOptions::default(), &seeds) {
        let s = s.unwrap();
        for l in strut_lengths(&model, &s.coords).unwrap() {
            assert!((l - 10.0).abs() <= 1e-8, "strut length {l}");
        }
    }
}

#[test]
fn parallel_batches_match_sequential_solves() {
    let model = fixtures::make_simplex(10.0);
    let seeds: Vec<u64> = (0..8).collect();
    let batch = minimize_many(&model, &SolveOptions::default(), &seeds);
    for (seed, b) in seeds.iter().zip(batch) {
        let single = minimize_constrained(&model, &SolveOptions::default().with_seed(*seed)).unwrap();
        assert_eq!(b.unwrap().coords, single.coords);
    }
}

#[test]
fn same_request_gives_byte_identical_coordinates() {
    let model = fixtures::make_strut20(4, 1.0, 2.0, 10.0).unwrap();
    let req = SolveRequest::formfind(&model, SolveOptions::default().with_seed(42));
    let (a, _) = run_request(&req);
    let (b, _) = run_request(&req);
    let bits = |r: &tensiform::io::SolveResult| -> Vec<u64> {
        r.state.as_ref().unwrap().coords.iter().map(|x| x.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn comparison_is_deterministic_under_a_fixed_seed() {
    let model = fixtures::make_ring_membrane(6.5, 6, 16).unwrap();
    let opts = SolveOptions { init: Init::Model, max_iterations: 3000, ..SolveOptions::default() };
    let fs = [ElementFunctional::PlainArea, ElementFunctional::PowerArea { weight: 1.0, power: 2 }];
    let a = compare_functionals(&model, &fs, &opts).unwrap();
    let b = compare_functionals(&model, &fs, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn residual_from_gradient_forces_equals_gradient_plus_strut_terms() {
    let model = fixtures::make_simplex(10.0);
    let asm = Assembly::new(&model).unwrap();
    let x = asm.initial_coordinates();
    let (g, mut forces) = asm.gradient(&x).unwrap();
    forces.strut_multipliers = vec![0.0; model.strut_count()];
    let report = equilibrium_residual(&model, &x, &forces).unwrap();
    let inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((report.inf_norm - inf).abs() <= 1e-12 * inf.max(1.0));
}
