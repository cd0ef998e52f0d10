//! Time-optimal quantum gate synthesis through q-geodesic continuation.

pub mod bounds;
pub mod continuation;
pub mod dynamics;
pub mod liealg;
pub mod pipeline;
pub mod shooting;
