use nalgebra::{Isometry3, UnitQuaternion};

use super::{ContactRegionSpec, GraspPose, HandError, HandModel};
use crate::math::{so3_left_jacobian, Vec3};
use crate::points::OrientedPoint;

/// World transforms of every link plus the world-frame joint axes, for one pose.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub link_transforms: Vec<Isometry3<f64>>,
    /// World direction of each joint axis (file order).
    pub joint_axes: Vec<Vec3>,
    /// A world point on each joint axis.
    pub joint_anchors: Vec<Vec3>,
}

pub fn forward_kinematics(hand: &HandModel, pose: &GraspPose) -> Result<Kinematics, HandError> {
    hand.check_pose(pose)?;
    let mut link_transforms = vec![Isometry3::identity(); hand.links.len()];
    link_transforms[hand.root_link] = pose.root_transform();
    let mut joint_axes = vec![Vec3::zeros(); hand.joints.len()];
    let mut joint_anchors = vec![Vec3::zeros(); hand.joints.len()];
    for &j in hand.fk_order() {
        let joint = &hand.joints[j];
        let frame = link_transforms[joint.parent_link] * joint.origin;
        let spin = UnitQuaternion::from_axis_angle(&joint.axis, pose.q_joint[j]);
        link_transforms[joint.child_link] = frame * spin;
        joint_axes[j] = frame.rotation * joint.axis.into_inner();
        joint_anchors[j] = frame.translation.vector;
    }
    Ok(Kinematics { link_transforms, joint_axes, joint_anchors })
}

/// World-frame hand surface samples together with the link each belongs to.
#[derive(Clone, Debug, Default)]
pub struct HandSurface {
    pub points: Vec<OrientedPoint>,
    pub link_of: Vec<usize>,
}

impl HandSurface {
    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Kinematics {
    pub fn surface(&self, hand: &HandModel) -> HandSurface {
        let n = hand.sample_count();
        let mut points = Vec::with_capacity(n);
        let mut link_of = Vec::with_capacity(n);
        for (l, link) in hand.links.iter().enumerate() {
            let iso = &self.link_transforms[l];
            debug_assert_eq!(points.len(), hand.sample_offset(l));
            for s in &link.surface_samples {
                points.push(s.transformed(iso));
                link_of.push(l);
            }
        }
        HandSurface { points, link_of }
    }

    pub fn contact_point(&self, region: &ContactRegionSpec, u: f64, v: f64) -> Vec3 {
        let iso = &self.link_transforms[region.link];
        iso.transform_point(&region.local_point(u, v).into()).coords
    }

    /// Exact signed distance from a world point to the union of all link
    /// primitives, and the link attaining it.
    pub fn hand_signed_distance(&self, hand: &HandModel, p: &Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (l, link) in hand.links.iter().enumerate() {
            let local = self.link_transforms[l].inverse_transform_point(&(*p).into()).coords;
            for prim in &link.primitives {
                let d = prim.signed_distance(&local);
                if d < best.0 {
                    best = (d, l);
                }
            }
        }
        best
    }
}

pub fn hand_surface(hand: &HandModel, pose: &GraspPose) -> Result<Vec<OrientedPoint>, HandError> {
    Ok(forward_kinematics(hand, pose)?.surface(hand).points)
}

/// One contact point per `(region, u, v)` triple, in world coordinates.
pub fn sample_contact_points(
    hand: &HandModel,
    pose: &GraspPose,
    params: &[(usize, f64, f64)],
) -> Result<Vec<Vec3>, HandError> {
    let kin = forward_kinematics(hand, pose)?;
    params
        .iter()
        .map(|&(region, u, v)| {
            let spec = hand.contact_regions.get(region).ok_or(HandError::RegionOutOfRange {
                index: region,
                count: hand.contact_regions.len(),
            })?;
            Ok(kin.contact_point(spec, u, v))
        })
        .collect()
}

/// Accumulates `dE/dp` for world points rigidly attached to links and turns
/// the sum into a gradient over `[translation, rotation vector, joints]`.
///
/// Per link it keeps the net "force" `sum g` and "moment" `sum p x g` about the
/// world origin; joint derivatives are then `axis . (M - anchor x F)` over the
/// joint's subtree.
#[derive(Clone, Debug)]
pub struct PoseGradient {
    force: Vec<Vec3>,
    moment: Vec<Vec3>,
}

impl PoseGradient {
    pub fn new(link_count: usize) -> Self {
        Self { force: vec![Vec3::zeros(); link_count], moment: vec![Vec3::zeros(); link_count] }
    }

    pub fn add(&mut self, link: usize, point: &Vec3, grad: &Vec3) {
        self.force[link] += grad;
        self.moment[link] += point.cross(grad);
    }

    pub fn finish(mut self, hand: &HandModel, kin: &Kinematics, pose: &GraspPose) -> Vec<f64> {
        let mut out = vec![0.0; 6 + hand.joint_count()];
        for &j in hand.fk_order().iter().rev() {
            let joint = &hand.joints[j];
            let (c, p) = (joint.child_link, joint.parent_link);
            let lever = self.moment[c] - kin.joint_anchors[j].cross(&self.force[c]);
            out[6 + j] = kin.joint_axes[j].dot(&lever);
            let (f, m) = (self.force[c], self.moment[c]);
            self.force[p] += f;
            self.moment[p] += m;
        }
        let root = hand.root_link;
        let t = pose.translation();
        let f = self.force[root];
        let omega = self.moment[root] - t.cross(&f);
        let dr = so3_left_jacobian(&pose.rotation_vector()).transpose() * omega;
        out[..3].copy_from_slice(f.as_slice());
        out[3..6].copy_from_slice(dr.as_slice());
        out
    }
}
