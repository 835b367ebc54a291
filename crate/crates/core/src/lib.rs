pub mod bodies;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod interpolation;
pub mod linalg;
pub mod lp;
pub mod map;
pub mod positions;
pub mod random;
pub mod regular;
pub mod sphere;
pub mod subspaces;

pub use bodies::{BodySpec, ConvexBody};
pub use error::{GeomError, Result};
pub use map::PositionMap;
