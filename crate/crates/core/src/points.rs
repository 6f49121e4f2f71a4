use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::math::Vec3;

/// A point with an attached unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedPoint {
    pub position: Vec3,
    pub normal: Vec3,
}

impl OrientedPoint {
    pub fn new(position: Vec3, normal: Vec3) -> Self {
        Self { position, normal }
    }

    /// Positions are transformed, normals only rotated.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.transform_point(&self.position.into()).coords,
            normal: iso.rotation * self.normal,
        }
    }
}
