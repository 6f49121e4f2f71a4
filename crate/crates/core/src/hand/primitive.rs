//! Collision primitives of hand links and their surface sampling.

use std::f64::consts::PI;

use nalgebra::Isometry3;

use crate::math::Vec3;
use crate::points::OrientedPoint;

/// Capsules run along the local z axis and are centered on the origin.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Capsule { radius: f64, length: f64 },
    Box { half_extents: Vec3 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    /// Primitive frame expressed in the link frame.
    pub transform: Isometry3<f64>,
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

impl Primitive {
    /// Signed distance from a point given in the link frame.
    pub fn signed_distance(&self, p_link: &Vec3) -> f64 {
        let p = self.transform.inverse_transform_point(&(*p_link).into()).coords;
        match &self.shape {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Capsule { radius, length } => {
                let z = p.z.clamp(-0.5 * length, 0.5 * length);
                (p - Vec3::new(0.0, 0.0, z)).norm() - radius
            }
            Shape::Box { half_extents } => {
                let q = p.abs() - half_extents;
                let outside = q.map(|c| c.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
        }
    }

    /// Bounding sphere in the link frame.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let c = self.transform.translation.vector;
        let r = match &self.shape {
            Shape::Sphere { radius } => *radius,
            Shape::Capsule { radius, length } => radius + 0.5 * length,
            Shape::Box { half_extents } => half_extents.norm(),
        };
        (c, r)
    }

    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Capsule { radius, length } => {
                4.0 * PI * radius * radius + 2.0 * PI * radius * length
            }
            Shape::Box { half_extents: h } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
        }
    }

    /// Deterministic, roughly uniform surface samples at the given spacing,
    /// expressed in the link frame.
    pub fn surface_samples(&self, spacing: f64) -> Vec<OrientedPoint> {
        let local = match &self.shape {
            Shape::Sphere { radius } => {
                let n = ((4.0 * PI * radius * radius) / (spacing * spacing)).ceil().max(8.0);
                fibonacci_cap(n as usize, *radius, Vec3::zeros(), 1.0, false)
            }
            Shape::Capsule { radius, length } => capsule_samples(*radius, *length, spacing),
            Shape::Box { half_extents } => box_samples(half_extents, spacing),
        };
        local.iter().map(|p| p.transformed(&self.transform)).collect()
    }
}

/// Area-uniform points on the spherical cap `z >= 1 - 2 * fraction` (fraction 1
/// is the full sphere, 0.5 a hemisphere). `flip` mirrors the cap onto -z.
fn fibonacci_cap(
    n: usize,
    radius: f64,
    center: Vec3,
    fraction: f64,
    flip: bool,
) -> Vec<OrientedPoint> {
    let sign = if flip { -1.0 } else { 1.0 };
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * fraction * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            let normal = Vec3::new(rho * phi.cos(), rho * phi.sin(), sign * z);
            OrientedPoint::new(center + normal * radius, normal)
        })
        .collect()
}

fn capsule_samples(radius: f64, length: f64, spacing: f64) -> Vec<OrientedPoint> {
    let mut out = Vec::new();
    let rings = (length / spacing).ceil().max(1.0) as usize;
    let around = ((2.0 * PI * radius) / spacing).ceil().max(6.0) as usize;
    for k in 0..rings {
        let z = -0.5 * length + (k as f64 + 0.5) * length / rings as f64;
        let offset = if k % 2 == 0 { 0.0 } else { 0.5 };
        for j in 0..around {
            let phi = 2.0 * PI * (j as f64 + offset) / around as f64;
            let normal = Vec3::new(phi.cos(), phi.sin(), 0.0);
            out.push(OrientedPoint::new(
                Vec3::new(radius * normal.x, radius * normal.y, z),
                normal,
            ));
        }
    }
    let cap = ((2.0 * PI * radius * radius) / (spacing * spacing)).ceil().max(4.0) as usize;
    let top = Vec3::new(0.0, 0.0, 0.5 * length);
    out.extend(fibonacci_cap(cap, radius, top, 0.5, false));
    out.extend(fibonacci_cap(cap, radius, -top, 0.5, true));
    out
}

fn box_samples(h: &Vec3, spacing: f64) -> Vec<OrientedPoint> {
    let mut out = Vec::new();
    for axis in 0..3 {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let na = (2.0 * h[a] / spacing).ceil().max(1.0) as usize;
        let nb = (2.0 * h[b] / spacing).ceil().max(1.0) as usize;
        for sign in [1.0, -1.0] {
            let mut normal = Vec3::zeros();
            normal[axis] = sign;
            for i in 0..na {
                for j in 0..nb {
                    let mut p = Vec3::zeros();
                    p[axis] = sign * h[axis];
                    p[a] = -h[a] + (i as f64 + 0.5) * 2.0 * h[a] / na as f64;
                    p[b] = -h[b] + (j as f64 + 0.5) * 2.0 * h[b] / nb as f64;
                    out.push(OrientedPoint::new(p, normal));
                }
            }
        }
    }
    out
}
