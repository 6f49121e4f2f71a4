//! Energy terms for grasp synthesis and map transfer, with analytic gradients.
//!
//! Gradients are laid out as `[translation(3), rotation vector(3), joints(N)]`,
//! followed in synthesis mode by `(u, v)` for every contact.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{
    contact_value_derivative, contact_value_unchecked, ContactError, ContactMap, Metric, Nearest,
};
use crate::hand::{forward_kinematics, GraspPose, HandError, HandModel, Kinematics, PoseGradient};
use crate::math::{relu, Vec3};
use crate::object::{GeometryError, MeshSdf, ObjectModel};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    pub dfc: f64,
    pub pen: f64,
    pub prior: f64,
    pub contact: f64,
    /// Pulls synthesis contact points onto the surface: `sum |delta(x_i)|`.
    pub dist: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self { dfc: 1.0, pen: 100.0, prior: 10.0, contact: 100.0, dist: 20.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dfc_norm: f64,
    pub e_pen: f64,
    pub e_prior: f64,
    pub e_contact: f64,
    pub e_dist: f64,
    pub total: f64,
    pub weights: EnergyWeights,
}

/// A contact point on the hand: `(region index, u, v)`.
pub type ContactParam = (usize, f64, f64);

#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    Synthesis { contacts: &'a [ContactParam] },
    /// `goal` is used as given; sharpen it beforehand if desired. `hints` is a
    /// previous [`Evaluation::nearest`]; it speeds up the search only.
    Transfer { goal: &'a ContactMap, metric: Metric, hints: Option<&'a [Nearest]> },
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub breakdown: EnergyBreakdown,
    pub gradient: Option<Vec<f64>>,
    /// Minimizing hand sample per object sample (transfer objective only).
    pub nearest: Option<Vec<Nearest>>,
}

/// Total wrench `Gc` of unit normals `c_i` at points `x_i`, and its norm.
pub fn dfc(points: &[Vec3], normals: &[Vec3]) -> Result<(Vector6<f64>, f64), EnergyError> {
    if points.len() != normals.len() {
        return Err(EnergyError::Dimension { what: "contact normals", expected: points.len(), got: normals.len() });
    }
    if points.len() < 2 {
        return Err(EnergyError::Dimension { what: "contact count (at least)", expected: 2, got: points.len() });
    }
    let (mut force, mut torque) = (Vec3::zeros(), Vec3::zeros());
    for (x, c) in points.iter().zip(normals) {
        force += c;
        torque += x.cross(c);
    }
    let gc = Vector6::new(force.x, force.y, force.z, torque.x, torque.y, torque.z);
    Ok((gc, gc.norm()))
}

/// `sum max(0, -delta(p))` over the given hand points.
pub fn penetration_energy(points: &[Vec3], obj: &ObjectModel) -> Result<f64, GeometryError> {
    let sdf = obj.sdf()?;
    Ok(points.iter().map(|p| penetration_at(obj, sdf, p).0).sum())
}

/// Depth of `p` inside the object and the depth's gradient.
fn penetration_at(obj: &ObjectModel, sdf: &MeshSdf, p: &Vec3) -> (f64, Vec3) {
    if obj.distance_lower_bound(p) > 0.0 {
        return (0.0, Vec3::zeros());
    }
    let q = sdf.query(p);
    if q.distance < 0.0 {
        (-q.distance, -q.gradient)
    } else {
        (0.0, Vec3::zeros())
    }
}

/// `|| relu(q - upper) + relu(lower - q) ||` over the joint angles.
pub fn prior_energy(pose: &GraspPose, hand: &HandModel) -> Result<f64, HandError> {
    hand.check_pose(pose)?;
    Ok(joint_violations(pose, hand).iter().map(|v| v * v).sum::<f64>().sqrt())
}

fn joint_violations(pose: &GraspPose, hand: &HandModel) -> Vec<f64> {
    hand.joints
        .iter()
        .zip(&pose.q_joint)
        .map(|(j, &q)| relu(q - j.upper_limit) - relu(j.lower_limit - q))
        .collect()
}

/// Gradient of [`prior_energy`] w.r.t. the joint angles; zero inside the limits.
pub fn prior_gradient(pose: &GraspPose, hand: &HandModel) -> Vec<f64> {
    let v = joint_violations(pose, hand);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| x / norm).collect()
}

/// Mean squared difference between two maps of the same object.
pub fn contact_match_energy(current: &ContactMap, goal: &ContactMap) -> Result<f64, ContactError> {
    if current.values.len() != goal.values.len() {
        return Err(ContactError::LengthMismatch { expected: goal.values.len(), got: current.values.len() });
    }
    if current.object != goal.object {
        return Err(ContactError::ObjectMismatch { expected: goal.object.clone(), got: current.object.clone() });
    }
    let n = current.values.len().max(1) as f64;
    Ok(current.values.iter().zip(&goal.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// World contact points with their derivatives w.r.t. `u` and `v`.
fn contact_points(hand: &HandModel, kin: &Kinematics, contacts: &[ContactParam]) -> Result<Vec<(usize, Vec3, Vec3, Vec3)>, HandError> {
    contacts
        .iter()
        .map(|&(r, u, v)| {
            let spec = hand
                .contact_regions
                .get(r)
                .ok_or(HandError::RegionOutOfRange { index: r, count: hand.contact_regions.len() })?;
            let iso = &kin.link_transforms[spec.link];
            Ok((spec.link, kin.contact_point(spec, u, v), iso.rotation * spec.edge1, iso.rotation * spec.edge2))
        })
        .collect()
}

pub fn evaluate(
    hand: &HandModel,
    obj: &ObjectModel,
    pose: &GraspPose,
    objective: Objective,
    weights: &EnergyWeights,
    with_gradient: bool,
) -> Result<Evaluation, EnergyError> {
    let sdf = obj.sdf()?;
    let kin = forward_kinematics(hand, pose)?;
    let surface = kin.surface(hand);
    let mut acc = PoseGradient::new(hand.links.len());
    let mut b = EnergyBreakdown { weights: *weights, ..Default::default() };

    let mut point_grads = vec![Vec3::zeros(); surface.len()];
    for (i, p) in surface.points.iter().enumerate() {
        let (depth, g) = penetration_at(obj, sdf, &p.position);
        b.e_pen += depth;
        point_grads[i] = g * weights.pen;
    }

    let mut extra = Vec::new();
    let mut nearest_out = None;
    match objective {
        Objective::Synthesis { contacts } => {
            let pts = contact_points(hand, &kin, contacts)?;
            let mut xs = Vec::with_capacity(pts.len());
            let mut cs = Vec::with_capacity(pts.len());
            let mut dcs = Vec::with_capacity(pts.len());
            let mut dist_grads = Vec::with_capacity(pts.len());
            for (_, x, _, _) in &pts {
                let q = sdf.query(x);
                let (n, dn) = sdf.shading_normal(&q);
                xs.push(*x);
                cs.push(-n);
                dcs.push(-dn);
                b.e_dist += q.distance.abs();
                dist_grads.push(q.gradient * q.distance.signum());
            }
            let (gc, norm) = dfc(&xs, &cs)?;
            b.dfc_norm = norm;
            if with_gradient {
                let g = if norm > 0.0 { gc / norm } else { Vector6::zeros() };
                let (gf, gt) = (g.fixed_rows::<3>(0).into_owned(), g.fixed_rows::<3>(3).into_owned());
                for (i, (link, x, e1, e2)) in pts.iter().enumerate() {
                    let dfc_x = cs[i].cross(&gt) + dcs[i].transpose() * (gf + gt.cross(x));
                    let gx: Vec3 = dfc_x * weights.dfc + dist_grads[i] * weights.dist;
                    acc.add(*link, x, &gx);
                    extra.push(gx.dot(e1));
                    extra.push(gx.dot(e2));
                }
            }
            b.total = weights.dfc * b.dfc_norm + weights.dist * b.e_dist;
        }
        Objective::Transfer { goal, metric, hints } => {
            goal.check_against(obj)?;
            let params = goal.params();
            let positions = surface.positions();
            let found = hand.point_index().nearest(&kin, obj, metric, &params, hints)?;
            let nearest = nearest_out.insert(found);
            let m = nearest.len() as f64;
            for (i, (nr, g)) in nearest.iter().zip(&goal.values).enumerate() {
                let c = contact_value_unchecked(nr.distance);
                let diff = c - g;
                b.e_contact += diff * diff / m;
                if with_gradient && diff != 0.0 {
                    let s = &obj.surface_points[i];
                    let w = s.position - positions[nr.hand_index];
                    let dd_dw = params.pair_gradient(&w, &-s.normal, metric);
                    let coef = weights.contact * 2.0 * diff / m * contact_value_derivative(nr.distance);
                    point_grads[nr.hand_index] -= dd_dw * coef;
                }
            }
            b.total = weights.contact * b.e_contact;
        }
    }

    b.e_prior = prior_energy(pose, hand)?;
    b.total += weights.pen * b.e_pen + weights.prior * b.e_prior;
    if !with_gradient {
        return Ok(Evaluation { breakdown: b, gradient: None, nearest: nearest_out });
    }

    for ((p, link), g) in surface.points.iter().zip(&surface.link_of).zip(&point_grads) {
        if *g != Vec3::zeros() {
            acc.add(*link, &p.position, g);
        }
    }
    let mut grad = acc.finish(hand, &kin, pose);
    for (k, g) in prior_gradient(pose, hand).into_iter().enumerate() {
        grad[6 + k] += weights.prior * g;
    }
    grad.extend(extra);
    Ok(Evaluation { breakdown: b, gradient: Some(grad), nearest: nearest_out })
}
