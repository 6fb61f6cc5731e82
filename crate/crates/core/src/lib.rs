//! Numerical laboratory for finite pointed metric measure spaces.

pub mod curvature;
pub mod error;
pub mod io;
pub mod metric;
pub mod models;
pub mod pmgh;
pub mod space;
pub mod tangent;
pub mod transport;

pub use error::{Error, Result};
pub use metric::{Geometry, Metric};
pub use space::{FiniteSpace, Point, PointedSpace};
pub use transport::{Coupling, Interpolator, Measure};
