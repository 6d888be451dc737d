mod common;

use lossnet_core::equilibrium::{
    closed_form_xt, fixed_point_residual, solve_equilibrium, solve_xt, Method, SolveOptions, Start,
};
use lossnet_core::fluid::{integrate, vector_field, FluidState};
use lossnet_core::{catalog, Network};

fn field_norm(net: &Network, x: &FluidState) -> f64 {
    vector_field(net, x)
        .unwrap()
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn methods_agree_on_random_networks() {
    let mut rng = common::rng(4);
    let tol = 1e-10;
    let mut solved = 0;
    for _ in 0..25 {
        let net = common::random_network(&mut rng, 4, 3);
        let ode = solve_equilibrium(
            &net,
            &SolveOptions {
                tol,
                ..SolveOptions::with_method(Method::Ode)
            },
        );
        let phi = solve_equilibrium(
            &net,
            &SolveOptions {
                tol,
                ..SolveOptions::with_method(Method::Phi)
            },
        );
        let (Ok(ode), Ok(phi)) = (ode, phi) else {
            continue;
        };
        solved += 1;
        assert!(ode.x.distance(&phi.x) < 1e-7);
        for p in [&ode, &phi] {
            assert!(fixed_point_residual(&net, &p.x).unwrap() <= 10.0 * tol);
            assert!(field_norm(&net, &p.x) <= 10.0 * tol);
            assert!(p.complementarity(&net) <= 10.0 * tol);
            if let Ok(y) = solve_xt(&net, &p.t) {
                assert!(
                    y.distance(&p.x) <= 1e-8,
                    "x^t differs by {}",
                    y.distance(&p.x)
                );
            }
        }
    }
    assert!(solved >= 20, "only {solved} of 25 solved by both methods");
}

#[test]
fn deterministic_routes_match_closed_form() {
    let mut rng = common::rng(6);
    for (prefix, cycle, mu) in [(3, 0, 0.0), (1, 2, 0.4), (0, 3, 0.2), (2, 2, 1.0)] {
        let net = common::deterministic_network(&mut rng, prefix, cycle, mu);
        let p = solve_equilibrium(
            &net,
            &SolveOptions {
                tol: 1e-11,
                ..Default::default()
            },
        )
        .unwrap();
        let y = closed_form_xt(&net, &p.t)
            .unwrap()
            .expect("single deterministic class");
        assert!(y.distance(&p.x) < 1e-8);
    }
}

#[test]
fn fluid_from_empty_reaches_equilibrium() {
    let net = catalog::four_node();
    let eq = solve_equilibrium(&net, &SolveOptions::with_method(Method::Phi)).unwrap();
    let traj = integrate(&net, &FluidState::zeros(&net), 40.0, 0.01, None).unwrap();
    assert!(traj.last().distance(&eq.x) < 1e-6);
}

#[test]
fn given_start_is_used() {
    let net = catalog::golden_ratio();
    let eq = solve_equilibrium(&net, &SolveOptions::default()).unwrap();
    let opts = SolveOptions {
        start: Start::Given(eq.x.clone()),
        ..SolveOptions::with_method(Method::Phi)
    };
    let again = solve_equilibrium(&net, &opts).unwrap();
    assert!(again.iterations <= 1);
    assert!(again.x.distance(&eq.x) < 1e-9);
}
