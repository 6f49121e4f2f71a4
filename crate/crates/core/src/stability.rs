//! Quasi-static grasp evaluation: a small contact-closing refinement, contact
//! extraction, a friction-pyramid LP per external wrench, and joint-angle
//! diversity over the grasps that pass.

use std::f64::consts::TAU;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{contact_value_unchecked, ContactParams, Metric};
use crate::hand::{forward_kinematics, GraspPose, HandError, HandModel, PoseGradient};
use crate::math::{orthonormal_tangent, relu, Vec3};
use crate::object::{GeometryError, ObjectModel};
use crate::points::OrientedPoint;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("friction coefficient must be positive, got {0}")]
    Friction(f64),
}

/// Directions of the six resistance tests, in report order.
pub const DIRECTIONS: [[f64; 3]; 6] =
    [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];

/// Edges of the linearized friction cone.
pub const PYRAMID_EDGES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    pub friction_mu: f64,
    /// kg
    pub object_mass: f64,
    /// m/s^2, applied along each of the six directions
    pub acceleration: f64,
    /// Object samples farther than this from the hand surface are not contacts (m).
    pub contact_tolerance: f64,
    /// Links closer than this to the object are advanced during refinement (m).
    pub refine_distance: f64,
    pub refine_step: f64,
    /// Distance parameters for the contact-value part of contact extraction.
    pub contact: ContactParams,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            friction_mu: 1.0,
            object_mass: 0.1,
            acceleration: 0.5,
            contact_tolerance: 0.002,
            refine_distance: 0.005,
            refine_step: 0.01,
            contact: ContactParams::default(),
        }
    }
}

impl StabilityConfig {
    /// External wrenches (force, torque about the centroid) for the six tests.
    pub fn external_wrenches(&self) -> [Vector6<f64>; 6] {
        let f = self.object_mass * self.acceleration;
        DIRECTIONS.map(|d| Vector6::new(f * d[0], f * d[1], f * d[2], 0.0, 0.0, 0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `+x, -x, +y, -y, +z, -z`
    pub per_direction: [bool; 6],
    pub passed: bool,
    /// Deepest hand sample inside the object (m).
    pub max_penetration: f64,
    pub contact_count: usize,
    pub friction_mu: f64,
    /// Solver messages for directions that failed for numerical reasons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solver_errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    pub per_joint_std: Vec<f64>,
    pub mean_std: f64,
    pub sample_count: usize,
}

/// One step that pulls nearly touching links onto the object.
///
/// For every link whose closest sample lies within `refine_distance` outside
/// the object, the target of that sample is its projection on the surface.
/// The joint angles then take one gradient step on `1/2 sum |s (p - target)|^2`
/// with `s = contact.length_scale`; the root stays where it is, as a
/// controller holding the wrist would keep it. Joints never move further
/// outside their limits.
pub fn refine_contacts(
    hand: &HandModel,
    obj: &ObjectModel,
    pose: &GraspPose,
    cfg: &StabilityConfig,
) -> Result<GraspPose, StabilityError> {
    let sdf = obj.sdf()?;
    let kin = forward_kinematics(hand, pose)?;
    let surface = kin.surface(hand);
    // closest sample per link: (distance, sample index)
    let mut closest: Vec<Option<(f64, usize)>> = vec![None; hand.links.len()];
    for (i, (p, &link)) in surface.points.iter().zip(&surface.link_of).enumerate() {
        if obj.distance_lower_bound(&p.position) >= cfg.refine_distance {
            continue;
        }
        let d = sdf.signed_distance(&p.position);
        if closest[link].is_none_or(|(best, _)| d < best) {
            closest[link] = Some((d, i));
        }
    }
    let scale = cfg.contact.length_scale;
    let mut acc = PoseGradient::new(hand.links.len());
    let mut any = false;
    for (link, entry) in closest.iter().enumerate() {
        let Some((d, i)) = *entry else { continue };
        if d <= 0.0 || d >= cfg.refine_distance {
            continue;
        }
        let p = surface.points[i].position;
        let residual = p - sdf.query(&p).closest;
        acc.add(link, &p, &(residual * scale * scale));
        any = true;
    }
    if !any {
        return Ok(pose.clone());
    }
    let grad = acc.finish(hand, &kin, pose);
    let mut out = pose.clone();
    for (j, joint) in hand.joints.iter().enumerate() {
        let old = pose.q_joint[j];
        let new = old - cfg.refine_step * grad[6 + j];
        out.q_joint[j] = new.clamp(old.min(joint.lower_limit), old.max(joint.upper_limit));
    }
    Ok(out)
}

/// Object samples touched by the hand: aligned contact value at least 0.5 and
/// within `tolerance` of the hand's surface (inside the hand counts). Returned
/// with the object's outward normals.
pub fn extract_contacts(
    hand: &HandModel,
    obj: &ObjectModel,
    pose: &GraspPose,
    tolerance: f64,
    params: &ContactParams,
) -> Result<Vec<OrientedPoint>, StabilityError> {
    let kin = forward_kinematics(hand, pose)?;
    let nearest = hand
        .point_index()
        .nearest(&kin, obj, Metric::Aligned, params, None)
        .map_err(|e| GeometryError::Parse(e.to_string()))?;
    Ok(obj
        .surface_points
        .iter()
        .zip(&nearest)
        .filter(|(s, n)| {
            contact_value_unchecked(n.distance) >= 0.5 && kin.hand_signed_distance(hand, &s.position).0 <= tolerance
        })
        .map(|(s, _)| *s)
        .collect())
}

/// Deepest penetration of a hand sample into the object (0 when none).
pub fn max_penetration(hand: &HandModel, obj: &ObjectModel, pose: &GraspPose) -> Result<f64, StabilityError> {
    let sdf = obj.sdf()?;
    let kin = forward_kinematics(hand, pose)?;
    Ok(kin
        .surface(hand)
        .points
        .iter()
        .filter(|p| obj.distance_lower_bound(&p.position) < 0.0)
        .map(|p| relu(-sdf.signed_distance(&p.position)))
        .fold(0.0, f64::max))
}

/// Unit-normal-force pyramid edges for a contact with outward normal `n`:
/// each edge pushes into the object with unit normal component.
pub fn pyramid_edges(n: &Vec3, mu: f64) -> [Vec3; PYRAMID_EDGES] {
    let t1 = orthonormal_tangent(n);
    let t2 = n.cross(&t1);
    std::array::from_fn(|k| {
        let a = TAU * k as f64 / PYRAMID_EDGES as f64;
        -n + (t1 * a.cos() + t2 * a.sin()) * mu
    })
}

/// Whether contact forces inside the friction pyramids, with normal force at
/// most 1 per contact, can cancel each external wrench. Torques are taken
/// about `reference`. The returned report has `max_penetration` 0.
pub fn wrench_resistance_test(
    contacts: &[OrientedPoint],
    reference: &Vec3,
    friction_mu: f64,
    wrenches: &[Vector6<f64>; 6],
) -> Result<StabilityReport, StabilityError> {
    if !(friction_mu > 0.0) {
        return Err(StabilityError::Friction(friction_mu));
    }
    // columns of the grasp map, one per pyramid edge
    let columns: Vec<Vector6<f64>> = contacts
        .iter()
        .flat_map(|c| {
            let arm = c.position - reference;
            pyramid_edges(&c.normal, friction_mu).map(|e| {
                let t = arm.cross(&e);
                Vector6::new(e.x, e.y, e.z, t.x, t.y, t.z)
            })
        })
        .collect();
    let mut per_direction = [false; 6];
    let mut solver_errors = Vec::new();
    for (k, w) in wrenches.iter().enumerate() {
        if contacts.is_empty() {
            continue;
        }
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = columns.iter().map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
        for chunk in vars.chunks(PYRAMID_EDGES) {
            lp.add_constraint(chunk.iter().map(|&v| (v, 1.0)), ComparisonOp::Le, 1.0);
        }
        for row in 0..6 {
            let expr: Vec<_> = vars.iter().zip(&columns).map(|(&v, c)| (v, c[row])).filter(|t| t.1 != 0.0).collect();
            lp.add_constraint(expr, ComparisonOp::Eq, -w[row]);
        }
        match lp.solve() {
            Ok(outcome) => per_direction[k] = outcome.solution().is_some(),
            Err(microlp::Error::Infeasible) => {}
            Err(e) => solver_errors.push(format!("direction {k}: {e}")),
        }
    }
    Ok(StabilityReport {
        per_direction,
        passed: per_direction.iter().all(|&p| p),
        max_penetration: 0.0,
        contact_count: contacts.len(),
        friction_mu,
        solver_errors,
    })
}

/// Refines `pose`, extracts its contacts and runs the six resistance tests
/// about the object's centroid. Returns the refined pose with its report.
pub fn evaluate_grasp(
    hand: &HandModel,
    obj: &ObjectModel,
    pose: &GraspPose,
    cfg: &StabilityConfig,
) -> Result<(GraspPose, StabilityReport), StabilityError> {
    let refined = refine_contacts(hand, obj, pose, cfg)?;
    let contacts = extract_contacts(hand, obj, &refined, cfg.contact_tolerance, &cfg.contact)?;
    let mut report = wrench_resistance_test(&contacts, &obj.centroid, cfg.friction_mu, &cfg.external_wrenches())?;
    report.max_penetration = max_penetration(hand, obj, &refined)?;
    Ok((refined, report))
}

/// Population standard deviation of every joint over the passing grasps.
/// With fewer than two passing grasps the deviations are reported as 0.
pub fn diversity(poses: &[GraspPose], reports: &[StabilityReport]) -> DiversityStats {
    let passing: Vec<&GraspPose> = poses.iter().zip(reports).filter(|(_, r)| r.passed).map(|(p, _)| p).collect();
    let joints = poses.first().map_or(0, |p| p.q_joint.len());
    let sample_count = passing.len();
    if sample_count < 2 {
        return DiversityStats { per_joint_std: vec![0.0; joints], mean_std: 0.0, sample_count };
    }
    let n = sample_count as f64;
    let per_joint_std: Vec<f64> = (0..joints)
        .map(|j| {
            let mean = passing.iter().map(|p| p.q_joint[j]).sum::<f64>() / n;
            (passing.iter().map(|p| (p.q_joint[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let mean_std = if joints == 0 { 0.0 } else { per_joint_std.iter().sum::<f64>() / joints as f64 };
    DiversityStats { per_joint_std, mean_std, sample_count }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contact(p: [f64; 3], n: [f64; 3]) -> OrientedPoint {
        OrientedPoint::new(Vec3::from(p), Vec3::from(n).normalize())
    }

    fn test(contacts: &[OrientedPoint], mu: f64) -> StabilityReport {
        let cfg = StabilityConfig::default();
        wrench_resistance_test(contacts, &Vec3::zeros(), mu, &cfg.external_wrenches()).unwrap()
    }

    #[test]
    fn no_contacts_fail_everything() {
        let r = test(&[], 1.0);
        assert_eq!(r.per_direction, [false; 6]);
        assert!(!r.passed);
    }

    #[test]
    fn single_contact_cannot_pull() {
        let r = test(&[contact([0.05, 0.0, 0.0], [1.0, 0.0, 0.0])], 1.0);
        assert!(!r.passed);
        // the contact can only push toward -x, so a load along -x is unresisted
        assert!(r.per_direction[0]);
        assert!(!r.per_direction[1]);
    }

    #[test]
    fn antipodal_pair_resists_all_directions() {
        let c = [contact([0.05, 0.0, 0.0], [1.0, 0.0, 0.0]), contact([-0.05, 0.0, 0.0], [-1.0, 0.0, 0.0])];
        assert!(test(&c, 1.0).passed);
        // without enough friction the tangential directions fail
        let weak = test(&c, 0.01);
        assert!(weak.per_direction[0] && weak.per_direction[1]);
        assert!(!weak.per_direction[2]);
    }

    #[test]
    fn nonpositive_friction_is_rejected() {
        let cfg = StabilityConfig::default();
        assert!(wrench_resistance_test(&[], &Vec3::zeros(), 0.0, &cfg.external_wrenches()).is_err());
    }

    #[test]
    fn pyramid_edges_have_unit_normal_component() {
        let n = Vec3::new(0.3, -0.2, 0.9).normalize();
        for e in pyramid_edges(&n, 0.7) {
            assert!((e.dot(&n) + 1.0).abs() < 1e-12);
            assert!(((e + n).norm() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn diversity_examples() {
        let pass = StabilityReport {
            per_direction: [true; 6],
            passed: true,
            max_penetration: 0.0,
            contact_count: 2,
            friction_mu: 1.0,
            solver_errors: vec![],
        };
        let fail = StabilityReport { passed: false, per_direction: [false; 6], ..pass.clone() };
        let pose = |q: f64| GraspPose::new(Vec3::zeros(), Vec3::zeros(), vec![q, 1.0]);
        let same = diversity(&[pose(0.3), pose(0.3)], &[pass.clone(), pass.clone()]);
        assert_eq!(same.per_joint_std, vec![0.0, 0.0]);
        let two = diversity(&[pose(0.0), pose(0.2)], &[pass.clone(), pass.clone()]);
        assert!((two.per_joint_std[0] - 0.1).abs() < 1e-15);
        assert_eq!(two.sample_count, 2);
        let with_outlier = diversity(&[pose(0.0), pose(0.2), pose(3.0)], &[pass.clone(), pass.clone(), fail.clone()]);
        assert_eq!(with_outlier, two);
        let lonely = diversity(&[pose(0.0), pose(3.0)], &[pass, fail]);
        assert_eq!((lonely.mean_std, lonely.sample_count), (0.0, 1));
    }
}
