//! Hand-agnostic dexterous grasp synthesis and transfer.
//!
//! Grasps for one hand are synthesized by Langevin sampling of a force-closure
//! energy, encoded as contact maps on the object surface, and re-targeted to
//! other hands by fitting their pose to the map. Grasps are then checked with a
//! quasi-static friction-cone test.

pub mod contact;
pub mod dataset;
pub mod energy;
pub mod hand;
pub mod math;
pub mod object;
pub mod points;
pub mod rng;
pub mod sampler;
pub mod stability;
pub mod transfer;

pub use contact::{ContactMap, ContactParams, Metric};
pub use energy::{EnergyBreakdown, EnergyWeights};
pub use hand::{load_hand_model, GraspPose, HandModel};
pub use object::{load_object, ObjectModel, SurfacePoint};
pub use points::OrientedPoint;

pub const TOOL_VERSION: &str = concat!("grasp-core ", env!("CARGO_PKG_VERSION"));
