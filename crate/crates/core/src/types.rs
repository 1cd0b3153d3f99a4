//! Points, tangent vectors, flags and chart domains on a single global chart.

use nalgebra::DVector;

use crate::error::{GeometryError, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 4;

pub fn check_dim(dim: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(GeometryError::UnsupportedDimension(dim))
    }
}

/// Chart coordinates of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: DVector<f64>,
}

impl Point {
    pub fn new(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A vector in `T_x M`, carrying its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: Point, components: DVector<f64>) -> Result<Self> {
        if base.dim() != components.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: base.dim(),
                got: components.len(),
            });
        }
        Ok(Self { base, components })
    }

    pub fn from_slices(base: &[f64], components: &[f64]) -> Result<Self> {
        Self::new(Point::from_slice(base), DVector::from_column_slice(components))
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| *c == 0.0)
    }

    /// Errors unless the vector is usable as a pole or geodesic velocity.
    pub fn nonzero(&self) -> Result<&Self> {
        if self.is_zero() {
            Err(GeometryError::ZeroVector)
        } else {
            Ok(self)
        }
    }
}

/// A flag `(P, y)`: the plane `P = span{y, u}` with distinguished pole `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Flag {
    pub base: Point,
    pub pole: DVector<f64>,
    pub transverse: DVector<f64>,
}

impl Flag {
    pub fn new(base: Point, pole: DVector<f64>, transverse: DVector<f64>) -> Result<Self> {
        let n = base.dim();
        for v in [&pole, &transverse] {
            if v.len() != n {
                return Err(GeometryError::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        if pole.norm() == 0.0 {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Self {
            base,
            pole,
            transverse,
        })
    }
}

/// The region of `ℝⁿ` on which a metric's closed form is valid.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    AllSpace,
    OpenBall { center: DVector<f64>, radius: f64 },
    Box { lo: DVector<f64>, hi: DVector<f64> },
}

/// Chart domain plus the safety margin integrators keep from its boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    pub kind: DomainKind,
    pub margin: f64,
}

impl ChartDomain {
    pub fn all_space() -> Self {
        Self {
            kind: DomainKind::AllSpace,
            margin: 0.0,
        }
    }

    pub fn ball(center: DVector<f64>, radius: f64, margin: f64) -> Self {
        Self {
            kind: DomainKind::OpenBall { center, radius },
            margin,
        }
    }

    /// Signed distance-like slack to the boundary (positive inside).
    pub fn slack(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::AllSpace => f64::INFINITY,
            DomainKind::OpenBall { center, radius } => {
                let d2: f64 = x
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                radius - d2.sqrt()
            }
            DomainKind::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(v, (l, h))| (v - l).min(h - v))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite()) && self.slack(x) > 0.0
    }

    /// Membership in the domain shrunk by `margin`.
    pub fn contains_with_margin(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite()) && self.slack(x) > self.margin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_membership_and_margin() {
        let d = ChartDomain::ball(DVector::zeros(2), 1.0, 0.05);
        assert!(d.contains(&[0.97, 0.0]));
        assert!(!d.contains_with_margin(&[0.97, 0.0]));
        assert!(!d.contains(&[1.0, 0.0]));
        assert!(!d.contains(&[f64::NAN, 0.0]));
        assert!(ChartDomain::all_space().contains_with_margin(&[1e6, -1e6]));
    }

    #[test]
    fn box_domain() {
        let d = ChartDomain {
            kind: DomainKind::Box {
                lo: DVector::from_vec(vec![-1.0, 0.0]),
                hi: DVector::from_vec(vec![1.0, 2.0]),
            },
            margin: 0.1,
        };
        assert!(d.contains(&[0.0, 1.95]));
        assert!(!d.contains_with_margin(&[0.0, 1.95]));
        assert!(!d.contains(&[0.0, -0.01]));
    }

    #[test]
    fn zero_vectors_rejected() {
        let v = TangentVector::from_slices(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(v.nonzero().unwrap_err(), GeometryError::ZeroVector);
        assert!(TangentVector::from_slices(&[0.0, 0.0], &[1.0]).is_err());
        assert!(check_dim(5).is_err());
    }
}
