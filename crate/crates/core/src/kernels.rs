//! Parameterized kernel families `P(η)` with analytic `∂P/∂η_i` and feasible boxes.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Kernel family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "SS", alias = "ss")]
    StableSpline,
    #[serde(rename = "DC", alias = "dc")]
    DiagonalCorrelated,
    #[serde(rename = "TC", alias = "tc")]
    TunedCorrelated,
    #[serde(rename = "Ridge", alias = "ridge")]
    Ridge,
    #[serde(rename = "Diagonal", alias = "diagonal")]
    Diagonal,
}

/// How the optimizer should treat one hyperparameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateKind {
    /// Positive scale, searched in log coordinates.
    Scale,
    /// Bounded interval, searched through a logistic bijection.
    Interval,
    /// Nonnegative amplitude whose floor `0` is a legitimate optimum.
    NonNegative,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::StableSpline,
        KernelFamily::DiagonalCorrelated,
        KernelFamily::TunedCorrelated,
        KernelFamily::Ridge,
        KernelFamily::Diagonal,
    ];

    /// Number of hyperparameters for FIR order `n`.
    pub fn n_hyper(self, n: usize) -> usize {
        match self {
            KernelFamily::StableSpline | KernelFamily::TunedCorrelated => 2,
            KernelFamily::DiagonalCorrelated => 3,
            KernelFamily::Ridge => 1,
            KernelFamily::Diagonal => n,
        }
    }

    pub fn coordinate_kinds(self, n: usize) -> Vec<CoordinateKind> {
        use CoordinateKind::*;
        match self {
            KernelFamily::StableSpline | KernelFamily::TunedCorrelated => vec![Scale, Interval],
            KernelFamily::DiagonalCorrelated => vec![Scale, Interval, Interval],
            KernelFamily::Ridge => vec![NonNegative],
            KernelFamily::Diagonal => vec![NonNegative; n],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::StableSpline => "SS",
            KernelFamily::DiagonalCorrelated => "DC",
            KernelFamily::TunedCorrelated => "TC",
            KernelFamily::Ridge => "Ridge",
            KernelFamily::Diagonal => "Diagonal",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(KernelFamily::StableSpline),
            "dc" => Ok(KernelFamily::DiagonalCorrelated),
            "tc" => Ok(KernelFamily::TunedCorrelated),
            "ridge" => Ok(KernelFamily::Ridge),
            "diagonal" | "diag" => Ok(KernelFamily::Diagonal),
            _ => Err(Error::InvalidArgument(format!(
                "unknown kernel family '{s}' (expected SS, DC, TC, Ridge or Diagonal)"
            ))),
        }
    }
}

/// Closed interval bound of one hyperparameter.
pub type Bound<T> = (T, T);

/// Default feasible box, strictly inside the closed constraint sets
/// `c ≥ 0, 0 ≤ α ≤ 1, |ρ| ≤ 1`.
pub fn default_omega<T: Real>(family: KernelFamily, n: usize) -> Vec<Bound<T>> {
    let scale = (T::lit(1e-8), T::lit(1e8));
    let alpha = (T::lit(1e-6), T::one() - T::lit(1e-6));
    let rho = (-T::one() + T::lit(1e-6), T::one() - T::lit(1e-6));
    let amplitude = (T::zero(), T::lit(1e8));
    match family {
        KernelFamily::StableSpline | KernelFamily::TunedCorrelated => vec![scale, alpha],
        KernelFamily::DiagonalCorrelated => vec![scale, alpha, rho],
        KernelFamily::Ridge => vec![amplitude],
        KernelFamily::Diagonal => vec![amplitude; n],
    }
}

/// Family tag, hyperparameters and feasible box for an order-`n` kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<T: Real> {
    pub family: KernelFamily,
    pub eta: Vec<T>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Bound<T>>>,
}

impl<T: Real> KernelSpec<T> {
    /// Spec with the default box; `eta` is validated against it.
    pub fn new(family: KernelFamily, eta: Vec<T>, n: usize) -> Result<Self> {
        let spec = Self { family, eta, n, omega: None };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec with the default box and a feasible placeholder `eta`
    /// (`c = 1`, `α = 0.9`, `ρ = 0`, unit diagonal), for use as an
    /// optimizer template.
    pub fn template(family: KernelFamily, n: usize) -> Result<Self> {
        let eta = match family {
            KernelFamily::StableSpline | KernelFamily::TunedCorrelated => vec![T::one(), T::lit(0.9)],
            KernelFamily::DiagonalCorrelated => vec![T::one(), T::lit(0.9), T::zero()],
            KernelFamily::Ridge => vec![T::one()],
            KernelFamily::Diagonal => vec![T::one(); n],
        };
        Self::new(family, eta, n)
    }

    pub fn with_omega(mut self, omega: Vec<Bound<T>>) -> Result<Self> {
        self.omega = Some(omega);
        self.validate()?;
        Ok(self)
    }

    /// Same family and box with new hyperparameters (unchecked until use).
    pub fn with_eta(&self, eta: Vec<T>) -> Self {
        Self { family: self.family, eta, n: self.n, omega: self.omega.clone() }
    }

    pub fn omega(&self) -> Vec<Bound<T>> {
        self.omega
            .clone()
            .unwrap_or_else(|| default_omega(self.family, self.n))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Dimension("kernel order n must be at least 1".into()));
        }
        let p = self.family.n_hyper(self.n);
        if self.eta.len() != p {
            return Err(Error::Dimension(format!(
                "{} kernel takes {p} hyperparameters, got {}",
                self.family,
                self.eta.len()
            )));
        }
        let omega = self.omega();
        if omega.len() != p {
            return Err(Error::Dimension(format!(
                "feasible box has {} intervals, expected {p}",
                omega.len()
            )));
        }
        for (i, (&x, &(lo, hi))) in self.eta.iter().zip(&omega).enumerate() {
            if !(lo <= hi) || !lo.is_finite_value() || !hi.is_finite_value() {
                return Err(Error::InvalidArgument(format!(
                    "feasible interval {i} is not a compact interval: [{}, {}]",
                    lo.as_f64(),
                    hi.as_f64()
                )));
            }
            if !(x >= lo && x <= hi) {
                return Err(Error::Domain(format!(
                    "{}: eta[{i}] = {} outside [{}, {}]",
                    self.family,
                    x.as_f64(),
                    lo.as_f64(),
                    hi.as_f64()
                )));
            }
        }
        Ok(())
    }
}

/// Kernel matrix `P(η)`. Both triangles come from one evaluation per entry, so
/// the result is exactly symmetric.
pub fn kernel_matrix<T: Real>(spec: &KernelSpec<T>) -> Result<DMatrix<T>> {
    spec.validate()?;
    let p = build(spec.family, &spec.eta, spec.n);
    if spec.family == KernelFamily::DiagonalCorrelated {
        linalg::check_psd(&p)?;
    }
    Ok(p)
}

/// `∂P/∂η_i`, elementwise.
pub fn kernel_gradient<T: Real>(spec: &KernelSpec<T>, i: usize) -> Result<DMatrix<T>> {
    spec.validate()?;
    let p = spec.family.n_hyper(spec.n);
    if i >= p {
        return Err(Error::InvalidArgument(format!(
            "coordinate {i} out of range for {} kernel with {p} hyperparameters",
            spec.family
        )));
    }
    Ok(derivative(spec.family, &spec.eta, spec.n, i))
}

/// All partial derivatives `∂P/∂η_i`, `i = 0..p`.
pub fn kernel_gradients<T: Real>(spec: &KernelSpec<T>) -> Result<Vec<DMatrix<T>>> {
    spec.validate()?;
    Ok((0..spec.family.n_hyper(spec.n))
        .map(|i| derivative(spec.family, &spec.eta, spec.n, i))
        .collect())
}

fn symmetric_fill<T: Real>(n: usize, f: impl Fn(usize, usize) -> T) -> DMatrix<T> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..=j {
            // 1-based lags
            let v = f(k + 1, j + 1);
            m[(k, j)] = v;
            m[(j, k)] = v;
        }
    }
    m
}

fn build<T: Real>(family: KernelFamily, eta: &[T], n: usize) -> DMatrix<T> {
    match family {
        KernelFamily::TunedCorrelated => {
            let (c, a) = (eta[0], eta[1]);
            symmetric_fill(n, |k, j| c * a.powi(k.max(j) as i32))
        }
        KernelFamily::DiagonalCorrelated => {
            let (c, a, rho) = (eta[0], eta[1], eta[2]);
            let root = a.sqrt();
            symmetric_fill(n, |k, j| c * root.powi((k + j) as i32) * rho.powi(k.abs_diff(j) as i32))
        }
        KernelFamily::StableSpline => {
            let (c, a) = (eta[0], eta[1]);
            symmetric_fill(n, |k, j| {
                let m = k.max(j);
                c * (a.powi((k + j + m) as i32) / T::lit(2.0) - a.powi((3 * m) as i32) / T::lit(6.0))
            })
        }
        KernelFamily::Ridge => DMatrix::identity(n, n) * eta[0],
        KernelFamily::Diagonal => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eta)),
    }
}

fn derivative<T: Real>(family: KernelFamily, eta: &[T], n: usize, i: usize) -> DMatrix<T> {
    let int = |x: usize| T::from_usize_lossy(x);
    match (family, i) {
        (KernelFamily::Ridge, _) => DMatrix::identity(n, n),
        (KernelFamily::Diagonal, i) => {
            let mut m = DMatrix::zeros(n, n);
            m[(i, i)] = T::one();
            m
        }
        (KernelFamily::TunedCorrelated, 0) => build(family, &[T::one(), eta[1]], n),
        (KernelFamily::TunedCorrelated, _) => {
            let (c, a) = (eta[0], eta[1]);
            symmetric_fill(n, |k, j| {
                let m = k.max(j);
                c * int(m) * a.powi(m as i32 - 1)
            })
        }
        (KernelFamily::DiagonalCorrelated, 0) => build(family, &[T::one(), eta[1], eta[2]], n),
        (KernelFamily::DiagonalCorrelated, 1) => {
            let (c, a, rho) = (eta[0], eta[1], eta[2]);
            let root = a.sqrt();
            // d/dα α^{(k+j)/2} = (k+j)/2 · α^{(k+j)/2 - 1} = (k+j)/2 · √α^{k+j-2}
            symmetric_fill(n, |k, j| {
                c * int(k + j) / T::lit(2.0)
                    * root.powi((k + j) as i32 - 2)
                    * rho.powi(k.abs_diff(j) as i32)
            })
        }
        (KernelFamily::DiagonalCorrelated, _) => {
            let (c, a, rho) = (eta[0], eta[1], eta[2]);
            let root = a.sqrt();
            symmetric_fill(n, |k, j| {
                let d = k.abs_diff(j);
                if d == 0 {
                    T::zero()
                } else {
                    c * root.powi((k + j) as i32) * int(d) * rho.powi(d as i32 - 1)
                }
            })
        }
        (KernelFamily::StableSpline, 0) => build(family, &[T::one(), eta[1]], n),
        (KernelFamily::StableSpline, _) => {
            let (c, a) = (eta[0], eta[1]);
            symmetric_fill(n, |k, j| {
                let m = k.max(j);
                let e1 = k + j + m;
                let e2 = 3 * m;
                c * (int(e1) * a.powi(e1 as i32 - 1) / T::lit(2.0)
                    - int(e2) * a.powi(e2 as i32 - 1) / T::lit(6.0))
            })
        }
    }
}
