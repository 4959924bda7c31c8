//! Bijections between natural hyperparameters and search coordinates.

use crate::kernels::{Bound, CoordinateKind};
use crate::scalar::Real;

/// Logistic coordinates are clipped here; `σ(±36)` is within `3e-16` of its limit.
const LOGISTIC_LIMIT: f64 = 36.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform<T> {
    /// `η = exp(x)` on `[ln lo, ln hi]`.
    Log { lo: T, hi: T },
    /// `η = lo + (hi − lo)·σ(x)`.
    Logistic { lo: T, hi: T },
    /// `η = x`, projected onto `[lo, hi]`.
    Identity { lo: T, hi: T },
}

impl<T: Real> Transform<T> {
    pub fn new(kind: CoordinateKind, (lo, hi): Bound<T>) -> Self {
        match kind {
            CoordinateKind::Scale if lo > T::zero() => Transform::Log { lo, hi },
            CoordinateKind::Interval if hi > lo => Transform::Logistic { lo, hi },
            _ => Transform::Identity { lo, hi },
        }
    }

    /// Box of the search coordinate.
    pub fn search_bounds(&self) -> (T, T) {
        match *self {
            Transform::Log { lo, hi } => (lo.ln(), hi.ln()),
            Transform::Logistic { .. } => (-T::lit(LOGISTIC_LIMIT), T::lit(LOGISTIC_LIMIT)),
            Transform::Identity { lo, hi } => (lo, hi),
        }
    }

    pub fn natural_bounds(&self) -> (T, T) {
        match *self {
            Transform::Log { lo, hi } | Transform::Logistic { lo, hi } | Transform::Identity { lo, hi } => (lo, hi),
        }
    }

    pub fn to_natural(&self, x: T) -> T {
        let (lo, hi) = self.natural_bounds();
        let eta = match *self {
            Transform::Log { .. } => x.exp(),
            Transform::Logistic { .. } => lo + (hi - lo) * logistic(x),
            Transform::Identity { .. } => x,
        };
        eta.max(lo).min(hi)
    }

    pub fn to_search(&self, eta: T) -> T {
        let (a, b) = self.search_bounds();
        let x = match *self {
            Transform::Log { .. } => eta.ln(),
            Transform::Logistic { lo, hi } => {
                let u = (eta - lo) / (hi - lo);
                (u / (T::one() - u)).ln()
            }
            Transform::Identity { .. } => eta,
        };
        if x.is_finite_value() {
            x.max(a).min(b)
        } else if x > T::zero() {
            b
        } else {
            a
        }
    }

    /// `dη/dx`.
    pub fn derivative(&self, x: T) -> T {
        match *self {
            Transform::Log { .. } => x.exp(),
            Transform::Logistic { lo, hi } => {
                let s = logistic(x);
                (hi - lo) * s * (T::one() - s)
            }
            Transform::Identity { .. } => T::one(),
        }
    }

    /// Starting-point sampling coordinate: uniform `u ∈ [0, 1]` mapped to a
    /// search coordinate. Scale-like coordinates are sampled log-uniformly.
    pub fn sample(&self, u: T) -> T {
        match *self {
            Transform::Log { .. } => {
                let (a, b) = self.search_bounds();
                a + (b - a) * u
            }
            Transform::Logistic { lo, hi } => {
                let u = u.max(T::lit(1e-6)).min(T::one() - T::lit(1e-6));
                self.to_search(lo + (hi - lo) * u)
            }
            Transform::Identity { lo, hi } => {
                let floor = lo.max(T::lit(1e-8)).min(hi);
                if hi <= floor {
                    return hi;
                }
                let (a, b) = (floor.ln(), hi.ln());
                (a + (b - a) * u).exp()
            }
        }
    }

    /// Typical simplex edge at `x`.
    pub fn initial_step(&self, x: T) -> T {
        match *self {
            Transform::Log { .. } | Transform::Logistic { .. } => T::lit(0.5),
            Transform::Identity { lo, hi } => (x.abs() * T::lit(0.25))
                .max(T::lit(1e-4))
                .min((hi - lo) * T::lit(0.5)),
        }
    }
}

fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
