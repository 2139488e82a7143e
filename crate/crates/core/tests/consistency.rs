use proptest::prelude::*;

use phasefield_control::adjoint::{
    gradient_from_adjoint, solve_adjoint, solve_adjoint_with_sources, AdjointPair,
};
use phasefield_control::grid::{
    inner_product, inner_product_q, laplacian_apply, time_antiderivative, Bc, Field, Grid,
    GridConfig, SpaceTime,
};
use phasefield_control::objective::ObjectiveSpec;
use phasefield_control::optimizer::{project_box, ControlBox};
use phasefield_control::potentials::PotentialSpec;
use phasefield_control::sensitivity::solve_linearized;
use phasefield_control::state::{solve_state, StateProblem};
use phasefield_control::verify::duality_terms;

fn grid_2d(nx: usize, ny: usize) -> Grid {
    Grid::new(&GridConfig {
        lengths: vec![1.0, 0.7],
        cells: vec![nx, ny],
        time_steps: 4,
        final_time: 0.4,
        max_nodes: 1_000_000,
    })
    .unwrap()
}

fn field_from(grid: &Grid, bc: Bc, raw: &[f64]) -> Field {
    let n = grid.node_count(bc);
    Field::new(
        grid,
        bc,
        (0..n)
            .map(|i| raw[i % raw.len()] * (1.0 + i as f64).sin())
            .collect(),
    )
    .unwrap()
}

fn st_from(grid: &Grid, bc: Bc, raw: &[f64]) -> SpaceTime {
    let mut k = 0usize;
    let mut st = SpaceTime::from_fn(grid, bc, |_, _| {
        k += 1;
        raw[k % raw.len()]
    });
    st.levels[0].values.iter_mut().for_each(|v| *v = 0.0);
    st
}

fn problem(grid: &Grid, potential: PotentialSpec) -> StateProblem {
    StateProblem::new(
        grid.clone(),
        potential,
        0.8,
        Field::from_fn(grid, Bc::Neumann, |x| 0.5 + 0.5 * (2.0 * x[0]).sin().abs()),
        Field::from_fn(grid, Bc::Dirichlet, |x| 0.3 * (3.0 * x[0]).sin()),
        Field::from_fn(grid, Bc::Neumann, |x| {
            0.4 * (std::f64::consts::PI * x[0]).cos()
        }),
    )
    .unwrap()
}

fn objective(grid: &Grid) -> ObjectiveSpec {
    let chi = SpaceTime::from_fn(grid, Bc::Neumann, |t, x| {
        if x[0] > 0.4 && t > 0.2 {
            1.0
        } else {
            0.0
        }
    });
    let theta_q = SpaceTime::from_fn(grid, Bc::Dirichlet, |t, x| 0.2 * t * x[0]);
    ObjectiveSpec::new(grid, 0.6, 0.1, 1e-2, chi, theta_q).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplacian_is_symmetric(
        nx in 3usize..9, ny in 3usize..7,
        a in prop::collection::vec(-1.0f64..1.0, 1..20),
        b in prop::collection::vec(-1.0f64..1.0, 1..20),
        neumann in any::<bool>(),
    ) {
        for g in [Grid::interval(1.3, nx, 2, 1.0).unwrap(), grid_2d(nx, ny)] {
            let bc = if neumann { Bc::Neumann } else { Bc::Dirichlet };
            let (u, v) = (field_from(&g, bc, &a), field_from(&g, bc, &b));
            let uv = inner_product(&g, &laplacian_apply(&g, &u), &v).unwrap();
            let vu = inner_product(&g, &u, &laplacian_apply(&g, &v)).unwrap();
            prop_assert!((uv - vu).abs() <= 1e-10 * (1.0 + uv.abs()), "{uv} vs {vu}");
            // −Δ is positive semidefinite.
            prop_assert!(inner_product(&g, &laplacian_apply(&g, &u), &u).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn antiderivative_is_linear(
        a in prop::collection::vec(-2.0f64..2.0, 1..30),
        b in prop::collection::vec(-2.0f64..2.0, 1..30),
        alpha in -3.0f64..3.0,
    ) {
        let g = Grid::interval(1.0, 6, 9, 0.9).unwrap();
        let (u, v) = (st_from(&g, Bc::Neumann, &a), st_from(&g, Bc::Neumann, &b));
        let mut comb = u.clone();
        comb.axpy(alpha, &v);
        let lhs = time_antiderivative(&g, &comb);
        let mut rhs = time_antiderivative(&g, &u);
        rhs.axpy(alpha, &time_antiderivative(&g, &v));
        prop_assert!(lhs.zip_map(&rhs, |x, y| x - y).max_abs() <= 1e-12);
        prop_assert_eq!(lhs.levels[0].max_abs(), 0.0);
    }

    #[test]
    fn projection_is_nonexpansive(
        a in prop::collection::vec(-10.0f64..10.0, 1..30),
        b in prop::collection::vec(-10.0f64..10.0, 1..30),
        lo in -3.0f64..0.0, width in 0.0f64..4.0,
    ) {
        let g = Grid::interval(1.0, 7, 5, 1.0).unwrap();
        let bx = ControlBox::constant(&g, lo, lo + width).unwrap();
        let (u, v) = (st_from(&g, Bc::Dirichlet, &a), st_from(&g, Bc::Dirichlet, &b));
        let (pu, pv) = (project_box(&bx, &u).unwrap(), project_box(&bx, &v).unwrap());
        prop_assert!(bx.contains(&pu));
        prop_assert_eq!(project_box(&bx, &pu).unwrap(), pu.clone());
        for (lu, (lv, (lpu, lpv))) in u.levels.iter().zip(v.levels.iter().zip(pu.levels.iter().zip(&pv.levels))).skip(1) {
            for i in 0..lu.len() {
                prop_assert!((lpu.values[i] - lpv.values[i]).abs() <= (lu.values[i] - lv.values[i]).abs());
            }
        }
    }

    #[test]
    fn sensitivity_is_linear(
        a in prop::collection::vec(-1.0f64..1.0, 1..20),
        b in prop::collection::vec(-1.0f64..1.0, 1..20),
        alpha in -2.0f64..2.0,
    ) {
        let g = Grid::interval(1.0, 10, 6, 0.3).unwrap();
        let p = problem(&g, PotentialSpec::logarithmic(1.2).unwrap());
        let base = solve_state(&p, &p.constant_control(0.5)).unwrap();
        let (h1, h2) = (st_from(&g, Bc::Dirichlet, &a), st_from(&g, Bc::Dirichlet, &b));
        let mut h = h1.clone();
        h.axpy(alpha, &h2);
        let s = solve_linearized(&p, &base, &h).unwrap();
        let s1 = solve_linearized(&p, &base, &h1).unwrap();
        let s2 = solve_linearized(&p, &base, &h2).unwrap();
        let scale = 1.0 + s.theta.max_abs() + s.phi.max_abs();
        let mut t = s1.theta.clone();
        t.axpy(alpha, &s2.theta);
        let mut f = s1.phi.clone();
        f.axpy(alpha, &s2.phi);
        prop_assert!(t.zip_map(&s.theta, |x, y| x - y).max_abs() <= 1e-9 * scale);
        prop_assert!(f.zip_map(&s.phi, |x, y| x - y).max_abs() <= 1e-9 * scale);
    }
}

/// Pairing the adjoint one level off must break the duality identity.
#[test]
fn shifted_adjoint_fails_duality() {
    let g = Grid::interval(1.0, 16, 12, 0.6).unwrap();
    let p = problem(&g, PotentialSpec::regular());
    let obj = objective(&g);
    let u = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| (4.0 * t + x[0]).sin());
    let base = solve_state(&p, &u).unwrap();
    let h = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| {
        (2.0 * t).cos() * (5.0 * x[0]).sin() + 0.3
    });

    let adj = solve_adjoint(&p, &base, &obj).unwrap();
    assert!(duality_terms(&p, &obj, &base, &adj, &h).unwrap().residual() <= 1e-9);

    // Adjoint stored one level later than the control it pairs with.
    let mut late = adj.clone();
    late.p.levels.rotate_right(1);
    late.p.levels[0] = Field::zeros(&g, Bc::Dirichlet);
    let r = duality_terms(&p, &obj, &base, &late, &h)
        .unwrap()
        .residual();
    assert!(r >= 1e-3, "shifted pairing residual {r}");

    // Sources read one level early.
    let (phi_src, theta_src) = obj.adjoint_sources(&g, &base).unwrap();
    let shift = |s: &SpaceTime| {
        let mut s = s.clone();
        s.levels.rotate_left(1);
        s
    };
    let early =
        solve_adjoint_with_sources(&p, &base, &shift(&theta_src), &shift(&phi_src)).unwrap();
    let r = duality_terms(&p, &obj, &base, &early, &h)
        .unwrap()
        .residual();
    assert!(r >= 1e-3, "shifted sources residual {r}");
}

/// Halving dt leaves the adjoint gradient close to the coarse one: the
/// discrete adjoint approximates a continuous one rather than a grid artifact.
#[test]
fn gradient_converges_under_time_refinement() {
    let grads: Vec<SpaceTime> = [20usize, 40, 80]
        .iter()
        .map(|&n| {
            let g = Grid::interval(1.0, 16, n, 0.5).unwrap();
            let p = problem(&g, PotentialSpec::regular());
            let obj = objective(&g);
            let u = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| (4.0 * t + x[0]).sin());
            let base = solve_state(&p, &u).unwrap();
            let adj: AdjointPair = solve_adjoint(&p, &base, &obj).unwrap();
            gradient_from_adjoint(&p, &adj)
        })
        .collect();
    // Compare on the common time levels t = 0.05 k, k = 1..=10.
    let diff = |coarse: &SpaceTime, fine: &SpaceTime| {
        let ratio = (fine.levels.len() - 1) / (coarse.levels.len() - 1);
        (1..coarse.levels.len())
            .map(|n| {
                coarse.levels[n]
                    .zip_map(&fine.levels[n * ratio], |a, b| a - b)
                    .max_abs()
            })
            .fold(0.0f64, f64::max)
    };
    let d1 = diff(&grads[0], &grads[1]);
    let d2 = diff(&grads[1], &grads[2]);
    assert!(d2 < 0.7 * d1, "{d1} then {d2}");
}

#[test]
fn duality_holds_for_every_smooth_potential() {
    let g = Grid::interval(1.0, 12, 8, 0.4).unwrap();
    let obj = objective(&g);
    let h = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| (3.0 * t + 7.0 * x[0]).sin());
    for potential in [
        PotentialSpec::regular(),
        PotentialSpec::logarithmic(1.5).unwrap(),
        PotentialSpec::rational(),
    ] {
        let p = problem(&g, potential);
        let base = solve_state(&p, &p.constant_control(0.2)).unwrap();
        let adj = solve_adjoint(&p, &base, &obj).unwrap();
        let t = duality_terms(&p, &obj, &base, &adj, &h).unwrap();
        assert!(t.residual() <= 1e-9, "{t:?}");
        let direct = inner_product_q(&g, &gradient_from_adjoint(&p, &adj), &h).unwrap();
        assert!((direct - t.control).abs() <= 1e-12 * (1.0 + direct.abs()));
    }
}
