//! Numerical Finsler geometry on a single global chart.

pub mod certificate;
pub mod classify;
pub mod error;
pub mod fd;
pub mod geodesic;
pub mod hypersurface;
pub mod jacobi;
pub mod jet;
pub mod metric;
pub mod ode;
pub mod quadrature;
pub mod spray;
pub mod tcurv;
pub mod types;

pub use error::{GeometryError, Result};
pub use jet::{Jet, JetLayout, Real};
pub use metric::{evaluate_jet, CovectorField, MatrixField, MetricFamily, MetricSpec, Seed};
pub use types::{ChartDomain, DomainKind, Flag, Point, TangentVector};
