//! Deterministic radio ray tracing.
//!
//! The library launches ray cones from an equiangularly subdivided
//! icosahedron, traces specular reflections and wedge diffractions
//! through a triangle-mesh scene (shooting and bouncing rays), refines
//! every found path by recursively subdividing its launch cone into six
//! child cones, and can cross-check the result against an image-method
//! solver that computes the same paths in closed form.
//!
//! Pipeline:
//!
//! ```text
//! launcher  ->  tracer  ->  refiner  ->  channel
//!    |            |            |
//!    +-- geodesic +-- SBR walk +-- six-sub-cone descent
//!
//! image_method: closed-form reference for the same scene
//! ```
//!
//! All math is f64, all angles radians, all distances meters. Every
//! stage is deterministic: identical inputs produce identical outputs,
//! including under the parallel (rayon) execution paths.

pub mod channel;
pub mod geometry;
pub mod image_method;
pub mod launcher;
pub mod refiner;
pub mod scene;
pub mod tracer;

pub use geometry::{Ray, RayCone, SpherePoint, Vec3, EPS_HIT};
pub use scene::{Face, Material, Scene, Wedge};
