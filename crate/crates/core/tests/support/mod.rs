//! Independent reference implementations used as test oracles. Shared with
//! the acceptance suite of the command-line crate.
#![allow(dead_code)]

use std::collections::HashSet;

use grasp_core::contact::ContactMap;
use grasp_core::energy::{evaluate, ContactParam, EnergyWeights, Objective};
use grasp_core::object::Mesh;
use grasp_core::transfer::init_pose;
use grasp_core::{GraspPose, HandModel, Metric, ObjectModel};
use nalgebra::{Matrix3, Vector3, Vector6};
use rand::Rng;

type V = Vector3<f64>;

pub fn assets() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn segment_distance(p: &V, a: &V, b: &V) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Unsigned distance to a triangle: plane projection when it lands inside,
/// otherwise the nearest edge.
fn triangle_distance(p: &V, [a, b, c]: [V; 3]) -> f64 {
    let n = (b - a).cross(&(c - a));
    if n.norm() > 0.0 {
        let n = n.normalize();
        let q = p - n * (p - a).dot(&n);
        let inside = [(a, b), (b, c), (c, a)].iter().all(|(u, v)| (v - u).cross(&(q - u)).dot(&n) >= 0.0);
        if inside {
            return (p - q).norm();
        }
    }
    segment_distance(p, &a, &b).min(segment_distance(p, &b, &c)).min(segment_distance(p, &c, &a))
}

/// Solid angle of a triangle seen from `p`.
fn solid_angle(p: &V, [a, b, c]: [V; 3]) -> f64 {
    let (a, b, c) = (a - p, b - p, c - p);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * num.atan2(den)
}

/// Signed distance by scanning every triangle, negative inside. The side is
/// decided by the winding number.
pub fn brute_signed_distance(mesh: &Mesh, p: &V) -> f64 {
    let tris = (0..mesh.triangles.len()).map(|t| mesh.triangle(t));
    let d = tris.clone().map(|t| triangle_distance(p, t)).fold(f64::INFINITY, f64::min);
    let winding: f64 = tris.map(|t| solid_angle(p, t)).sum::<f64>() / (4.0 * std::f64::consts::PI);
    if winding > 0.5 {
        -d
    } else {
        d
    }
}

fn sphere_through(points: &[V]) -> Option<(V, f64)> {
    match points {
        [a, b] => Some(((a + b) / 2.0, (a - b).norm() / 2.0)),
        [a, b, c] => {
            // center = a + s (b - a) + t (c - a), equidistant from all three
            let (u, v) = (b - a, c - a);
            let m = nalgebra::Matrix2::new(u.dot(&u), u.dot(&v), u.dot(&v), v.dot(&v));
            let st = m.try_inverse()? * nalgebra::Vector2::new(u.dot(&u), v.dot(&v)) / 2.0;
            let center = a + u * st.x + v * st.y;
            Some((center, (center - a).norm()))
        }
        [a, b, c, d] => {
            let m = Matrix3::from_rows(&[(b - a).transpose(), (c - a).transpose(), (d - a).transpose()]);
            let rhs = V::new((b - a).norm_squared(), (c - a).norm_squared(), (d - a).norm_squared()) / 2.0;
            let x = m.try_inverse()? * rhs;
            Some((a + x, x.norm()))
        }
        _ => None,
    }
}

/// Smallest sphere through 2, 3 or 4 of the points that contains them all.
pub fn brute_enclosing_sphere(points: &[V]) -> (V, f64) {
    let n = points.len();
    let mut best = (V::zeros(), f64::INFINITY);
    let mut consider = |subset: &[V]| {
        if let Some((c, r)) = sphere_through(subset) {
            if r < best.1 && points.iter().all(|p| (p - c).norm() <= r * (1.0 + 1e-9)) {
                best = (c, r);
            }
        }
    };
    for i in 0..n {
        for j in i + 1..n {
            consider(&[points[i], points[j]]);
            for k in j + 1..n {
                consider(&[points[i], points[j], points[k]]);
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    consider(&[points[i], points[j], points[k], points[l]]);
                }
            }
        }
    }
    best
}

fn wrench(p: &V, f: &V) -> Vector6<f64> {
    let t = p.cross(f);
    Vector6::new(f.x, f.y, f.z, t.x, t.y, t.z)
}

fn quantize(w: &Vector6<f64>) -> [i64; 6] {
    std::array::from_fn(|k| (w[k] * 1e6).round() as i64)
}

/// Forces a contact may apply on a grid: normal push `a` in quarter steps,
/// tangential part on a half-step lattice in world axes, kept inside the
/// largest disc every friction pyramid with `PYRAMID_EDGES` edges contains.
fn force_grid(p: &V, outward: &V, mu: f64) -> Vec<Vector6<f64>> {
    let n = outward.normalize();
    let helper = if n.x.abs() < 0.9 { V::x() } else { V::y() };
    let e1 = (helper - n * helper.dot(&n)).normalize();
    let e2 = n.cross(&e1);
    let inscribed = (std::f64::consts::PI / 8.0).cos();
    let steps = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut out = Vec::new();
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        for s1 in steps {
            for s2 in steps {
                let t = (e1 * s1 + e2 * s2) * (mu * a);
                if t.norm() <= mu * a * inscribed + 1e-12 {
                    out.push(wrench(p, &(-n * a + t)));
                }
            }
        }
    }
    out
}

/// Whether grid forces at the contacts (position, outward normal) sum to
/// exactly `target`. Meet in the middle over two halves of the contacts.
pub fn grid_resists(contacts: &[(V, V)], target: &Vector6<f64>, mu: f64) -> bool {
    let grids: Vec<Vec<Vector6<f64>>> = contacts.iter().map(|(p, n)| force_grid(p, n, mu)).collect();
    let sums = |part: &[Vec<Vector6<f64>>]| {
        let mut acc = vec![Vector6::zeros()];
        for g in part {
            acc = acc.iter().flat_map(|s| g.iter().map(move |w| s + w)).collect();
        }
        acc
    };
    let (left, right) = grids.split_at(grids.len() / 2);
    let seen: HashSet<[i64; 6]> = sums(left).iter().map(quantize).collect();
    sums(right).iter().any(|w| seen.contains(&quantize(&(target - w))))
}

/// Contact sets on the unit sphere at the six axis points, with loads along
/// the axes, so feasible loads are met exactly by grid forces and infeasible
/// ones miss by a wide margin.
pub fn constructed_contact_sets() -> Vec<(Vec<(V, V)>, f64)> {
    let axes = [V::x(), -V::x(), V::y(), -V::y(), V::z(), -V::z()];
    let mut sets = Vec::new();
    for mask in 1u32..64 {
        let size = mask.count_ones();
        if !(2..=4).contains(&size) || mask % 3 != 0 {
            continue;
        }
        let contacts: Vec<(V, V)> = (0..6).filter(|k| mask & (1 << k) != 0).map(|k| (axes[k], axes[k])).collect();
        let mu = if sets.len() % 2 == 0 { 1.0 } else { 0.1 };
        sets.push((contacts, mu));
        if sets.len() == 20 {
            break;
        }
    }
    sets
}

/// External loads of 0.5 N along +x, -x, +y, -y, +z, -z applied at the center.
pub fn axis_loads() -> [Vector6<f64>; 6] {
    let axes = [V::x(), -V::x(), V::y(), -V::y(), V::z(), -V::z()];
    std::array::from_fn(|k| wrench(&V::zeros(), &(axes[k] * 0.5)))
}

/// Random pose near the object: palm pulled toward the center so links
/// penetrate, joints spread past their limits.
pub fn random_pose(hand: &HandModel, obj: &ObjectModel, rng: &mut impl Rng) -> GraspPose {
    let mut pose = init_pose(hand, obj, rng);
    let pull = rng.random_range(0.6..0.95);
    for k in 0..3 {
        pose.q_global[k] = obj.centroid[k] + (pose.q_global[k] - obj.centroid[k]) * pull;
    }
    for (q, joint) in pose.q_joint.iter_mut().zip(&hand.joints) {
        *q = rng.random_range(joint.lower_limit - 0.2..joint.upper_limit + 0.2);
    }
    pose
}

pub fn random_contacts(hand: &HandModel, count: usize, rng: &mut impl Rng) -> Vec<ContactParam> {
    (0..count)
        .map(|_| {
            let r = rng.random_range(0..hand.contact_regions.len());
            (r, rng.random_range(0.1..0.9), rng.random_range(0.1..0.9))
        })
        .collect()
}

pub fn term_weights(dfc: f64, pen: f64, prior: f64, contact: f64) -> EnergyWeights {
    EnergyWeights { dfc, pen, prior, contact, dist: 0.0 }
}

/// Relative error `|g - fd| / |fd|` between the analytic gradient and central
/// differences with step `h`, over the pose and, with `contacts`, their
/// `(u, v)` parameters. Without contacts the transfer objective for `goal`
/// is differentiated.
pub fn gradient_error(
    hand: &HandModel,
    obj: &ObjectModel,
    pose: &GraspPose,
    contacts: Option<&[ContactParam]>,
    goal: &ContactMap,
    w: &EnergyWeights,
    h: f64,
) -> f64 {
    let n = pose.to_vec().len();
    let energy = |x: &[f64]| {
        let p = GraspPose::from_slice(&x[..n]);
        let params: Vec<ContactParam> = contacts
            .map(|c| c.iter().enumerate().map(|(i, &(r, _, _))| (r, x[n + 2 * i], x[n + 2 * i + 1])).collect())
            .unwrap_or_default();
        let objective = match contacts {
            Some(_) => Objective::Synthesis { contacts: &params },
            None => Objective::Transfer { goal, metric: Metric::Aligned, hints: None },
        };
        let eval = evaluate(hand, obj, &p, objective, w, true).unwrap();
        (eval.breakdown.total, eval.gradient.unwrap())
    };
    let mut x = pose.to_vec();
    for &(_, u, v) in contacts.unwrap_or_default() {
        x.extend([u, v]);
    }
    let (_, grad) = energy(&x);
    let fd: Vec<f64> = (0..x.len())
        .map(|k| {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[k] += h;
            b[k] -= h;
            (energy(&a).0 - energy(&b).0) / (2.0 * h)
        })
        .collect();
    let diff = grad.iter().zip(&fd).map(|(g, f)| (g - f).powi(2)).sum::<f64>().sqrt();
    let scale = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}
