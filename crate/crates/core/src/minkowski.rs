//! Four-vector algebra with metric signature (+,-,-,-), c = 1.

use crate::real::Real;
use std::ops::{Add, Mul, Neg, Sub};

/// A point or tangent in Minkowski space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourVector<T = f64>(pub [T; 4]);

impl<T: Real> FourVector<T> {
    pub fn new(t: T, x: T, y: T, z: T) -> Self {
        FourVector([t, x, y, z])
    }

    pub fn zero() -> Self {
        FourVector([T::zero(); 4])
    }

    pub fn time(&self) -> T {
        self.0[0]
    }

    /// Minkowski inner product a⁰b⁰ − a¹b¹ − a²b² − a³b³.
    pub fn dot(&self, other: &Self) -> T {
        self.0[0] * other.0[0] - self.0[1] * other.0[1] - self.0[2] * other.0[2]
            - self.0[3] * other.0[3]
    }

    /// Minkowski square of self.
    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    /// (a − b)² in the Minkowski metric.
    pub fn interval_sq(&self, other: &Self) -> T {
        (*self - *other).norm_sq()
    }

    pub fn scale(&self, c: T) -> Self {
        FourVector([self.0[0] * c, self.0[1] * c, self.0[2] * c, self.0[3] * c])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.value().is_finite())
    }

    pub fn map_value(&self) -> FourVector<f64> {
        FourVector([
            self.0[0].value(),
            self.0[1].value(),
            self.0[2].value(),
            self.0[3].value(),
        ])
    }
}

impl FourVector<f64> {
    pub fn lift<T: Real>(&self) -> FourVector<T> {
        FourVector([
            T::from_f64(self.0[0]),
            T::from_f64(self.0[1]),
            T::from_f64(self.0[2]),
            T::from_f64(self.0[3]),
        ])
    }
}

impl<T: Real> Add for FourVector<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        FourVector([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
            self.0[3] + rhs.0[3],
        ])
    }
}

impl<T: Real> Sub for FourVector<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        FourVector([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
            self.0[3] - rhs.0[3],
        ])
    }
}

impl<T: Real> Neg for FourVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        FourVector([-self.0[0], -self.0[1], -self.0[2], -self.0[3]])
    }
}

impl<T: Real> Mul<T> for FourVector<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.scale(rhs)
    }
}

/// Metric component η_{μμ} for the fixed (+,-,-,-) signature.
pub fn metric_diag(mu: usize) -> f64 {
    if mu == 0 {
        1.0
    } else {
        -1.0
    }
}
