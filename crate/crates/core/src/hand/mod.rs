//! Articulated hand models: loading, validation and posing.
//!
//! A hand is a tree of links connected by revolute joints. Each link carries
//! primitive collision geometry (spheres, capsules, boxes) from which a fixed
//! set of oriented surface samples is generated at load time. The sample
//! spacing is stored in the hand file so every run sees the same samples.

mod kinematics;
mod primitive;

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::HandPointIndex;
use crate::math::{rpy_to_matrix, Vec3};
use crate::points::OrientedPoint;

pub use kinematics::{
    forward_kinematics, hand_surface, sample_contact_points, HandSurface, Kinematics,
    PoseGradient,
};
pub use primitive::{Primitive, Shape};

#[derive(Debug, Error)]
pub enum HandError {
    #[error("failed to read hand file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed hand file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid hand model: {0}")]
    Validation(String),
    #[error("pose has {got} joint values, hand {hand} has {expected} joints")]
    DimensionMismatch {
        hand: String,
        expected: usize,
        got: usize,
    },
    #[error("contact region index {index} out of range ({count} regions)")]
    RegionOutOfRange { index: usize, count: usize },
}

fn default_spacing() -> f64 {
    0.005
}

/// `xyz` translation followed by fixed-axis roll/pitch/yaw.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl FrameSpec {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        let rot = UnitQuaternion::from_matrix(&rpy_to_matrix(&self.rpy));
        Isometry3::from_parts(Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]), rot)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Sphere,
    Capsule,
    Box,
}

/// Primitive dims: sphere `[radius]`, capsule `[radius, length]` (axis = local z),
/// box `[size_x, size_y, size_z]` (full edge lengths).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    #[serde(default)]
    pub transform: FrameSpec,
    pub dims: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    #[serde(default)]
    pub primitives: Vec<PrimitiveSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointFileSpec {
    pub name: String,
    pub parent: String,
    pub child: String,
    #[serde(default)]
    pub origin: FrameSpec,
    pub axis: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFileSpec {
    pub link: String,
    pub origin: [f64; 3],
    pub edge1: [f64; 3],
    pub edge2: [f64; 3],
}

/// On-disk hand description (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandFile {
    pub name: String,
    pub palm_link: String,
    pub palm_backward_direction: [f64; 3],
    #[serde(default = "default_spacing")]
    pub sample_spacing: f64,
    /// Number of contact points used by force-closure synthesis.
    #[serde(default)]
    pub contact_count: Option<usize>,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointFileSpec>,
    #[serde(default)]
    pub contact_regions: Vec<RegionFileSpec>,
}

/// A revolute joint between two links.
#[derive(Clone, Debug)]
pub struct JointSpec {
    pub name: String,
    pub parent_link: usize,
    pub child_link: usize,
    /// Joint frame in the parent link frame at zero angle.
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vec3>,
    pub lower_limit: f64,
    pub upper_limit: f64,
}

impl JointSpec {
    pub fn mid_range(&self) -> f64 {
        0.5 * (self.lower_limit + self.upper_limit)
    }
}

#[derive(Clone, Debug)]
pub struct LinkGeometry {
    pub link_name: String,
    pub primitives: Vec<Primitive>,
    /// Link-frame oriented samples of the link's outer surface.
    pub surface_samples: Vec<OrientedPoint>,
}

/// A planar rectangle on a link: `origin + u * edge1 + v * edge2`, `u, v in [0, 1]`.
#[derive(Clone, Debug)]
pub struct ContactRegionSpec {
    pub link: usize,
    pub origin: Vec3,
    pub edge1: Vec3,
    pub edge2: Vec3,
}

impl ContactRegionSpec {
    pub fn local_point(&self, u: f64, v: f64) -> Vec3 {
        self.origin + self.edge1 * u + self.edge2 * v
    }
}

#[derive(Clone, Debug)]
pub struct HandModel {
    pub name: String,
    pub links: Vec<LinkGeometry>,
    /// Joints in file order; this order defines `GraspPose::q_joint`.
    pub joints: Vec<JointSpec>,
    pub root_link: usize,
    pub palm_link: usize,
    pub palm_backward_direction: Unit<Vec3>,
    pub contact_regions: Vec<ContactRegionSpec>,
    pub sample_spacing: f64,
    pub contact_count: usize,
    /// Joint indices with every parent joint listed before its children.
    fk_order: Vec<usize>,
    sample_offsets: Vec<usize>,
    point_index: OnceLock<HandPointIndex>,
}

/// Hand configuration: root translation (m), root axis-angle rotation (rad),
/// then one angle per revolute joint (rad).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub q_global: [f64; 6],
    pub q_joint: Vec<f64>,
}

impl GraspPose {
    pub fn new(translation: Vec3, rotation: Vec3, q_joint: Vec<f64>) -> Self {
        Self {
            q_global: [
                translation.x,
                translation.y,
                translation.z,
                rotation.x,
                rotation.y,
                rotation.z,
            ],
            q_joint,
        }
    }

    pub fn identity(joint_count: usize) -> Self {
        Self { q_global: [0.0; 6], q_joint: vec![0.0; joint_count] }
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.q_global[0], self.q_global[1], self.q_global[2])
    }

    pub fn rotation_vector(&self) -> Vec3 {
        Vec3::new(self.q_global[3], self.q_global[4], self.q_global[5])
    }

    pub fn root_transform(&self) -> Isometry3<f64> {
        let t = self.translation();
        Isometry3::from_parts(
            Translation3::new(t.x, t.y, t.z),
            UnitQuaternion::from_scaled_axis(self.rotation_vector()),
        )
    }

    pub fn dof(&self) -> usize {
        6 + self.q_joint.len()
    }

    /// `[q_global | q_joint]` as one flat vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.q_global.to_vec();
        v.extend_from_slice(&self.q_joint);
        v
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut q_global = [0.0; 6];
        q_global.copy_from_slice(&values[..6]);
        Self { q_global, q_joint: values[6..].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.q_global.iter().chain(&self.q_joint).all(|v| v.is_finite())
    }
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn invalid(msg: impl Into<String>) -> HandError {
    HandError::Validation(msg.into())
}

pub fn load_hand_model(path: impl AsRef<Path>) -> Result<HandModel, HandError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HandError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: HandFile = serde_json::from_str(&text)?;
    HandModel::from_file(&file)
}

impl HandModel {
    pub fn from_json(text: &str) -> Result<Self, HandError> {
        let file: HandFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &HandFile) -> Result<Self, HandError> {
        if file.links.is_empty() {
            return Err(invalid("hand has no links"));
        }
        if !(file.sample_spacing > 0.0) {
            return Err(invalid("sample_spacing must be positive"));
        }
        let mut index = HashMap::new();
        for (i, link) in file.links.iter().enumerate() {
            if index.insert(link.name.as_str(), i).is_some() {
                return Err(invalid(format!("duplicate link '{}'", link.name)));
            }
        }
        let lookup = |name: &str, what: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| invalid(format!("{what} refers to unknown link '{name}'")))
        };

        let mut links = Vec::with_capacity(file.links.len());
        for spec in &file.links {
            links.push(build_link(spec, file.sample_spacing)?);
        }

        let mut joints = Vec::with_capacity(file.joints.len());
        let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
        for (j, js) in file.joints.iter().enumerate() {
            let parent = lookup(&js.parent, &format!("joint '{}'", js.name))?;
            let child = lookup(&js.child, &format!("joint '{}'", js.name))?;
            let axis = vec3(&js.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("joint '{}' axis is not unit length", js.name)));
            }
            if !(js.limits[0] < js.limits[1]) {
                return Err(invalid(format!("joint '{}' has lower limit >= upper limit", js.name)));
            }
            if parent == child {
                return Err(invalid(format!("joint '{}' connects a link to itself", js.name)));
            }
            if parent_joint[child].replace(j).is_some() {
                return Err(invalid(format!("link '{}' has two parent joints", js.child)));
            }
            joints.push(JointSpec {
                name: js.name.clone(),
                parent_link: parent,
                child_link: child,
                origin: js.origin.to_isometry(),
                axis: Unit::new_unchecked(axis),
                lower_limit: js.limits[0],
                upper_limit: js.limits[1],
            });
        }

        let roots: Vec<usize> = (0..links.len()).filter(|&l| parent_joint[l].is_none()).collect();
        let root_link = match roots.as_slice() {
            [r] => *r,
            [] => return Err(invalid("joint graph is cyclic: every link has a parent")),
            _ => return Err(invalid("joint graph is not connected: several root links")),
        };

        // breadth-first from the root; anything left over sits on a cycle
        let mut fk_order = Vec::with_capacity(joints.len());
        let mut frontier = vec![root_link];
        while let Some(link) = frontier.pop() {
            for (j, joint) in joints.iter().enumerate() {
                if joint.parent_link == link {
                    fk_order.push(j);
                    frontier.push(joint.child_link);
                }
            }
            if fk_order.len() > joints.len() {
                break;
            }
        }
        if fk_order.len() != joints.len() {
            return Err(invalid("joint graph is cyclic"));
        }

        let palm_link = lookup(&file.palm_link, "palm_link")?;
        let back = vec3(&file.palm_backward_direction);
        if (back.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("palm_backward_direction is not unit length"));
        }

        let mut contact_regions = Vec::with_capacity(file.contact_regions.len());
        for r in &file.contact_regions {
            let link = lookup(&r.link, "contact region")?;
            let (e1, e2) = (vec3(&r.edge1), vec3(&r.edge2));
            if e1.cross(&e2).norm() <= 1e-12 * (e1.norm() * e2.norm()).max(1e-300) {
                return Err(invalid(format!(
                    "contact region on '{}' has parallel edges",
                    r.link
                )));
            }
            contact_regions.push(ContactRegionSpec { link, origin: vec3(&r.origin), edge1: e1, edge2: e2 });
        }
        let contact_count = file.contact_count.unwrap_or(contact_regions.len().min(4));
        if contact_count > 0 && contact_regions.is_empty() {
            return Err(invalid("contact_count > 0 but the hand has no contact regions"));
        }

        let mut sample_offsets = Vec::with_capacity(links.len() + 1);
        let mut acc = 0;
        for link in &links {
            sample_offsets.push(acc);
            acc += link.surface_samples.len();
        }
        sample_offsets.push(acc);

        Ok(Self {
            name: file.name.clone(),
            links,
            joints,
            root_link,
            palm_link,
            palm_backward_direction: Unit::new_unchecked(back),
            contact_regions,
            sample_spacing: file.sample_spacing,
            contact_count,
            fk_order,
            sample_offsets,
            point_index: OnceLock::new(),
        })
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Pose-independent search structure over the surface samples, built on
    /// first use.
    pub fn point_index(&self) -> &HandPointIndex {
        self.point_index.get_or_init(|| HandPointIndex::new(self))
    }

    pub fn sample_count(&self) -> usize {
        *self.sample_offsets.last().unwrap_or(&0)
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.link_name == name)
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.lower_limit).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.upper_limit).collect()
    }

    pub fn mid_range_joints(&self) -> Vec<f64> {
        self.joints.iter().map(JointSpec::mid_range).collect()
    }

    /// Clamp the joint angles into their limits; the root is unbounded.
    pub fn clamp_to_limits(&self, pose: &GraspPose) -> GraspPose {
        let mut out = pose.clone();
        for (q, j) in out.q_joint.iter_mut().zip(&self.joints) {
            *q = q.clamp(j.lower_limit, j.upper_limit);
        }
        out
    }

    pub fn check_pose(&self, pose: &GraspPose) -> Result<(), HandError> {
        if pose.q_joint.len() != self.joints.len() {
            return Err(HandError::DimensionMismatch {
                hand: self.name.clone(),
                expected: self.joints.len(),
                got: pose.q_joint.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn fk_order(&self) -> &[usize] {
        &self.fk_order
    }

    pub(crate) fn sample_offset(&self, link: usize) -> usize {
        self.sample_offsets[link]
    }
}

fn build_link(spec: &LinkSpec, spacing: f64) -> Result<LinkGeometry, HandError> {
    let mut primitives = Vec::with_capacity(spec.primitives.len());
    for p in &spec.primitives {
        let positive = p.dims.iter().all(|d| *d > 0.0 && d.is_finite());
        let shape = match (p.kind, p.dims.as_slice()) {
            (PrimitiveKind::Sphere, [r]) if positive => Shape::Sphere { radius: *r },
            (PrimitiveKind::Capsule, [r, l]) if positive => Shape::Capsule { radius: *r, length: *l },
            (PrimitiveKind::Box, [x, y, z]) if positive => Shape::Box {
                half_extents: Vec3::new(0.5 * x, 0.5 * y, 0.5 * z),
            },
            _ => {
                return Err(invalid(format!(
                    "link '{}': bad {:?} dims {:?}",
                    spec.name, p.kind, p.dims
                )))
            }
        };
        primitives.push(Primitive { shape, transform: p.transform.to_isometry() });
    }

    // drop samples buried inside another primitive of the same link
    let mut surface_samples = Vec::new();
    for (i, prim) in primitives.iter().enumerate() {
        for s in prim.surface_samples(spacing) {
            let buried = primitives
                .iter()
                .enumerate()
                .any(|(k, other)| k != i && other.signed_distance(&s.position) < -1e-9);
            if !buried {
                surface_samples.push(s);
            }
        }
    }
    Ok(LinkGeometry { link_name: spec.name.clone(), primitives, surface_samples })
}
