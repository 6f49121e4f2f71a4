//! Geometry and stability routines against brute-force references.

mod support;

use grasp_core::object::min_enclosing_sphere;
use grasp_core::rng::substream;
use grasp_core::stability::wrench_resistance_test;
use grasp_core::{load_object, OrientedPoint};
use nalgebra::Vector3;
use rand::Rng;
use support::{assets, axis_loads, brute_enclosing_sphere, brute_signed_distance, constructed_contact_sets, grid_resists};

#[test]
fn signed_distance_matches_triangle_scan() {
    let mut rng = substream(1, "sdf-oracle", 0);
    for name in ["sphere", "box", "torus", "mug"] {
        let obj = load_object(assets().join(format!("objects/{name}.obj")), 64).unwrap();
        let (center, radius) = obj.min_enclosing_sphere();
        let sdf = obj.sdf().unwrap();
        for _ in 0..250 {
            let offset = Vector3::from_fn(|_, _| rng.random_range(-1.3..1.3)) * radius;
            let p = center + offset;
            let (got, want) = (sdf.signed_distance(&p), brute_signed_distance(&obj.mesh, &p));
            assert!((got - want).abs() < 1e-9, "{name} at {p:?}: {got} vs {want}");
        }
    }
}

#[test]
fn enclosing_sphere_matches_subset_search() {
    let mut rng = substream(2, "mes-oracle", 0);
    for cloud in 0..4 {
        let stretch = Vector3::new(1.0, 0.3 + 0.2 * cloud as f64, 0.6);
        let points: Vec<Vector3<f64>> = (0..100)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).component_mul(&stretch))
            .collect();
        let got = min_enclosing_sphere(&points).unwrap();
        let (center, radius) = brute_enclosing_sphere(&points);
        assert!((got.radius - radius).abs() < 1e-9, "cloud {cloud}: {} vs {radius}", got.radius);
        assert!((got.center - center).norm() < 1e-6, "cloud {cloud}");
    }
}

#[test]
fn resistance_lp_agrees_with_force_grid() {
    let sets = constructed_contact_sets();
    assert_eq!(sets.len(), 20);
    let loads = axis_loads();
    let (mut feasible, mut infeasible) = (0, 0);
    for (contacts, mu) in &sets {
        let points: Vec<OrientedPoint> = contacts.iter().map(|(p, n)| OrientedPoint::new(*p, *n)).collect();
        let report = wrench_resistance_test(&points, &Vector3::zeros(), *mu, &loads).unwrap();
        assert!(report.solver_errors.is_empty(), "{:?}", report.solver_errors);
        for (k, load) in loads.iter().enumerate() {
            let expected = grid_resists(contacts, &-load, *mu);
            assert_eq!(report.per_direction[k], expected, "contacts {contacts:?}, mu {mu}, direction {k}");
            if expected {
                feasible += 1;
            } else {
                infeasible += 1;
            }
        }
    }
    assert!(feasible > 10 && infeasible > 10, "{feasible} feasible, {infeasible} infeasible");
}
