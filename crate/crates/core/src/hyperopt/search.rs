//! Box-constrained multi-start minimization in transformed coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::transform::Transform;
use super::{Method, OptimizerConfig};
use crate::error::{Error, Result};
use crate::kernels::{Bound, CoordinateKind};
use crate::scalar::Real;

/// A scalar function of a hyperparameter vector living in a box.
pub trait Objective<T: Real>: Sync {
    fn bounds(&self) -> Vec<Bound<T>>;

    fn coordinate_kinds(&self) -> Vec<CoordinateKind>;

    fn value(&self, eta: &[T]) -> Result<T>;

    fn value_grad(&self, eta: &[T]) -> Result<(T, Vec<T>)>;
}

/// Result of one local search.
#[derive(Debug, Clone)]
pub struct LocalResult<T> {
    pub start: Vec<T>,
    /// Final point in search coordinates.
    pub x: Vec<T>,
    pub eta: Vec<T>,
    pub value: T,
    /// Infinity norm of the projected gradient in search coordinates.
    pub gradient_norm: T,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Criterion value after every accepted iterate.
    pub history: Vec<T>,
}

/// All local searches plus the index of the winner.
#[derive(Debug, Clone)]
pub struct SearchOutcome<T> {
    pub runs: Vec<LocalResult<T>>,
    pub best: usize,
    pub boundary: bool,
}

impl<T: Real> SearchOutcome<T> {
    pub fn winner(&self) -> &LocalResult<T> {
        &self.runs[self.best]
    }
}

/// The objective seen in search coordinates.
struct Transformed<'a, T: Real, O: ?Sized> {
    obj: &'a O,
    transforms: Vec<Transform<T>>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<'a, T: Real, O: Objective<T> + ?Sized> Transformed<'a, T, O> {
    fn new(obj: &'a O) -> Result<Self> {
        let bounds = obj.bounds();
        let kinds = obj.coordinate_kinds();
        if bounds.len() != kinds.len() || bounds.is_empty() {
            return Err(Error::Dimension(format!(
                "objective has {} bounds and {} coordinate kinds",
                bounds.len(),
                kinds.len()
            )));
        }
        let transforms: Vec<_> = kinds.iter().zip(&bounds).map(|(&k, &b)| Transform::new(k, b)).collect();
        let (lower, upper) = transforms.iter().map(|t| t.search_bounds()).unzip();
        Ok(Self { obj, transforms, lower, upper })
    }

    fn dim(&self) -> usize {
        self.transforms.len()
    }

    fn natural(&self, x: &[T]) -> Vec<T> {
        self.transforms.iter().zip(x).map(|(t, &x)| t.to_natural(x)).collect()
    }

    fn search(&self, eta: &[T]) -> Vec<T> {
        self.transforms.iter().zip(eta).map(|(t, &e)| t.to_search(e)).collect()
    }

    fn project(&self, x: &mut [T]) {
        for ((xi, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.max(lo).min(hi);
        }
    }

    fn value(&self, x: &[T]) -> T {
        match self.obj.value(&self.natural(x)) {
            Ok(v) if v.is_finite_value() => v,
            _ => T::max_value().unwrap(),
        }
    }

    fn value_grad(&self, x: &[T]) -> Option<(T, Vec<T>)> {
        let (v, g) = self.obj.value_grad(&self.natural(x)).ok()?;
        if !v.is_finite_value() || g.iter().any(|g| !g.is_finite_value()) {
            return None;
        }
        let g = g
            .iter()
            .zip(&self.transforms)
            .zip(x)
            .map(|((&g, t), &x)| g * t.derivative(x))
            .collect();
        Some((v, g))
    }

    /// Gradient with the components pushing out of the box removed.
    fn projected_gradient(&self, x: &[T], g: &[T]) -> Vec<T> {
        (0..self.dim())
            .map(|i| {
                let at_lo = x[i] <= self.lower[i] && g[i] > T::zero();
                let at_hi = x[i] >= self.upper[i] && g[i] < T::zero();
                if at_lo || at_hi {
                    T::zero()
                } else {
                    g[i]
                }
            })
            .collect()
    }

    fn on_boundary(&self, x: &[T]) -> bool {
        (0..self.dim()).any(|i| x[i] <= self.lower[i] || x[i] >= self.upper[i])
    }
}

/// Relative rounding level of a criterion value; accepted iterates never
/// raise the value by more than this.
pub const VALUE_NOISE: f64 = 1e-12;

const FD_HESSIAN_MAX_DIM: usize = 12;
const TERMINATION_FACTOR: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;
const MAX_REFRESHES: usize = 5;

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn small_step<T: Real>(a: &[T], b: &[T], tol: T) -> bool {
    a.iter().zip(b).all(|(&x, &y)| (x - y).abs() <= tol * (T::one() + x.abs()))
}

/// Nelder–Mead with adaptive coefficients, every trial point projected onto the box.
fn nelder_mead<T: Real, O: Objective<T> + ?Sized>(
    f: &Transformed<'_, T, O>,
    x0: &[T],
    cfg: &OptimizerConfig,
    history: &mut Vec<T>,
) -> (Vec<T>, T, usize, usize) {
    let p = f.dim();
    let pf = T::from_usize_lossy(p);
    let alpha = T::one();
    let beta = T::one() + T::lit(2.0) / pf;
    let gamma = T::lit(0.75) - T::lit(0.5) / pf;
    let delta = (T::one() - T::one() / pf).max(T::lit(0.5));
    let step_tol = T::lit(cfg.step_tol);

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(p + 1);
    simplex.push((x0.to_vec(), f.value(x0)));
    for i in 0..p {
        let mut x = x0.to_vec();
        let h = f.transforms[i].initial_step(x0[i]);
        x[i] = if x0[i] + h <= f.upper[i] { x0[i] + h } else { x0[i] - h };
        f.project(&mut x);
        let v = f.value(&x);
        simplex.push((x, v));
    }
    let mut evals = p + 1;
    let order = |s: &mut Vec<(Vec<T>, T)>| {
        // stable sort keeps earlier vertices first on ties
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    };
    order(&mut simplex);
    history.push(simplex[0].1);
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let best = simplex[0].1;
        let worst = simplex[p].1;
        let spread_small = (worst - best).abs() <= T::lit(1e-14) * (T::one() + best.abs());
        let size_small = simplex[1..].iter().all(|(x, _)| small_step(x, &simplex[0].0, step_tol));
        if size_small || (spread_small && simplex[1..].iter().all(|(x, _)| small_step(x, &simplex[0].0, T::lit(1e-6)))) {
            break;
        }
        let mut centroid = vec![T::zero(); p];
        for (x, _) in &simplex[..p] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c += xi / pf;
            }
        }
        let along = |t: T| {
            let mut x: Vec<T> = centroid
                .iter()
                .zip(&simplex[p].0)
                .map(|(&c, &w)| c + t * (c - w))
                .collect();
            f.project(&mut x);
            x
        };
        let xr = along(alpha);
        let fr = f.value(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(beta);
            let fe = f.value(&xe);
            evals += 1;
            simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[p - 1].1 {
            simplex[p] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[p].1 {
                let xc = along(gamma);
                let fc = f.value(&xc);
                (xc, fc)
            } else {
                let xc = along(-gamma);
                let fc = f.value(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < simplex[p].1.min(fr) {
                simplex[p] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, &bi) in x.iter_mut().zip(&x_best) {
                        *xi = bi + delta * (*xi - bi);
                    }
                    *v = f.value(x);
                }
                evals += p;
            }
        }
        order(&mut simplex);
        history.push(simplex[0].1);
    }
    let (x, v) = simplex.swap_remove(0);
    (x, v, iterations, evals)
}

/// Projected BFGS with Armijo backtracking along the projection arc.
/// Returns `(x, value, projected-gradient norm, converged, iterations, evaluations)`.
fn projected_bfgs<T: Real, O: Objective<T> + ?Sized>(
    f: &Transformed<'_, T, O>,
    x0: &[T],
    cfg: &OptimizerConfig,
    history: &mut Vec<T>,
) -> (Vec<T>, T, T, bool, usize, usize) {
    let p = f.dim();
    let mut x = x0.to_vec();
    f.project(&mut x);
    let mut evals = 1;
    let Some((mut fx, mut g)) = f.value_grad(&x) else {
        return (x, T::max_value().unwrap(), T::max_value().unwrap(), false, 0, evals);
    };
    history.push(fx);
    let grad_tol = T::lit(cfg.grad_tol);
    let step_tol = T::lit(cfg.step_tol);
    let identity = || {
        let mut h = vec![T::zero(); p * p];
        for i in 0..p {
            h[i * p + i] = T::one();
        }
        h
    };
    let mut hinv = identity();
    let mut scaled = false;
    let mut iterations = 0;
    // Iterate past the convergence tolerance: flat criteria need a much
    // smaller gradient before the hyperparameters themselves settle.
    let done = |pg: &[T], fx: T| inf_norm(pg) <= T::lit(TERMINATION_FACTOR) * grad_tol * (T::one() + fx.abs());
    let mut pg = f.projected_gradient(&x, &g);
    let mut stalls = 0;
    let mut refreshes = 0;
    while !done(&pg, fx) && iterations < cfg.max_iters {
        iterations += 1;
        let free: Vec<bool> = (0..p).map(|i| pg[i] != T::zero() || (x[i] > f.lower[i] && x[i] < f.upper[i])).collect();
        let mut d: Vec<T> = (0..p)
            .map(|i| {
                if !free[i] {
                    return T::zero();
                }
                -(0..p).filter(|&j| free[j]).fold(T::zero(), |acc, j| acc + hinv[i * p + j] * pg[j])
            })
            .collect();
        if dot(&d, &pg) >= T::zero() {
            hinv = identity();
            scaled = false;
            d = pg.iter().map(|&v| -v).collect();
        }
        if !scaled {
            // first step: move at most one unit in any search coordinate
            let m = inf_norm(&d);
            if m > T::one() {
                d.iter_mut().for_each(|v| *v /= m);
            }
        }
        let mut t = T::one();
        let mut accepted = None;
        // Near the optimum the achievable decrease drops below the rounding
        // noise of the criterion. A step that shrinks the directional
        // derivative while raising the value by no more than that noise is
        // kept as a fallback.
        let mut fallback = None;
        let slope0 = dot(&d, &pg).abs();
        for _ in 0..MAX_HALVINGS {
            let mut xn: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + t * di).collect();
            f.project(&mut xn);
            if small_step(&xn, &x, T::lit(1e-3) * step_tol) {
                break;
            }
            evals += 1;
            if let Some((fnew, gnew)) = f.value_grad(&xn) {
                let decrease: T = x.iter().zip(&xn).zip(&pg).fold(T::zero(), |acc, ((&a, &b), &gi)| acc + gi * (b - a));
                if fnew <= fx + T::lit(1e-4) * decrease {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
                let noise = T::lit(VALUE_NOISE) * (T::one() + fx.abs());
                if fallback.is_none()
                    && fnew <= fx + noise
                    && dot(&d, &f.projected_gradient(&xn, &gnew)).abs() <= T::lit(0.5) * slope0
                {
                    fallback = Some((xn, fnew, gnew));
                }
            }
            t *= T::lit(0.5);
        }
        let accepted = accepted.or(fallback);
        let Some((xn, fnew, gnew)) = accepted else {
            // Backtracking failed: rebuild the curvature from gradient
            // differences once per iterate, then give up.
            stalls += 1;
            if stalls > 1 {
                break;
            }
            let (h, ev) = fd_inverse_hessian(f, &x, &g, &pg);
            evals += ev;
            match h {
                Some(h) => {
                    hinv = h;
                    scaled = true;
                }
                None => {
                    hinv = identity();
                    scaled = false;
                }
            }
            continue;
        };
        stalls = 0;
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        let tiny_step = small_step(&xn, &x, step_tol);
        let tiny_drop = (fx - fnew).abs() <= T::lit(1e-15) * (T::one() + fx.abs());
        x = xn;
        fx = fnew;
        g = gnew;
        history.push(fx);
        pg = f.projected_gradient(&x, &g);
        if sy > T::lit(1e-12) * (dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                hinv = identity().into_iter().map(|v| v * gamma).collect();
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy, p);
        }
        if tiny_step && tiny_drop {
            // a stuck quasi-Newton model gets one rebuilt curvature
            if refreshes >= MAX_REFRESHES || done(&pg, fx) {
                break;
            }
            refreshes += 1;
            let (h, ev) = fd_inverse_hessian(f, &x, &g, &pg);
            evals += ev;
            if let Some(h) = h {
                hinv = h;
                scaled = true;
            } else {
                break;
            }
        }
    }
    let gn = inf_norm(&pg);
    let converged = gn <= grad_tol * (T::one() + fx.abs());
    (x, fx, gn, converged, iterations, evals)
}

/// Inverse of a forward-difference Hessian of the search-space gradient over
/// the coordinates not held at a bound (identity on the rest); `None` unless
/// it is positive definite. Only attempted for small dimension.
fn fd_inverse_hessian<T: Real, O: Objective<T> + ?Sized>(
    f: &Transformed<'_, T, O>,
    x: &[T],
    g: &[T],
    pg: &[T],
) -> (Option<Vec<T>>, usize) {
    let p = f.dim();
    if p > FD_HESSIAN_MAX_DIM {
        return (None, 0);
    }
    let free: Vec<usize> = (0..p).filter(|&i| pg[i] != T::zero() || (x[i] > f.lower[i] && x[i] < f.upper[i])).collect();
    let k = free.len();
    let mut hess = nalgebra::DMatrix::<T>::zeros(k, k);
    for (jj, &j) in free.iter().enumerate() {
        let mut h = T::lit(1e-5) * (T::one() + x[j].abs());
        if x[j] + h > f.upper[j] {
            h = -h;
        }
        let mut xj = x.to_vec();
        xj[j] += h;
        let Some((_, gj)) = f.value_grad(&xj) else {
            return (None, jj + 1);
        };
        for (ii, &i) in free.iter().enumerate() {
            hess[(ii, jj)] = (gj[i] - g[i]) / h;
        }
    }
    let hess = (&hess + hess.transpose()) * T::lit(0.5);
    let Some(inv) = hess.cholesky().map(|c| c.inverse()) else {
        return (None, k);
    };
    let mut out = vec![T::zero(); p * p];
    for i in 0..p {
        out[i * p + i] = T::one();
    }
    for (ii, &i) in free.iter().enumerate() {
        for (jj, &j) in free.iter().enumerate() {
            out[i * p + j] = inv[(ii, jj)];
        }
    }
    (Some(out), k)
}

fn bfgs_update<T: Real>(h: &mut [T], s: &[T], y: &[T], sy: T, p: usize) {
    let rho = T::one() / sy;
    let hy: Vec<T> = (0..p).map(|i| (0..p).fold(T::zero(), |acc, j| acc + h[i * p + j] * y[j])).collect();
    let yhy = dot(y, &hy);
    // H ← H − ρ(Hy sᵀ + s yᵀH) + (ρ² yᵀHy + ρ) s sᵀ
    for i in 0..p {
        for j in 0..p {
            h[i * p + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn local_search<T: Real, O: Objective<T> + ?Sized>(
    f: &Transformed<'_, T, O>,
    start: Vec<T>,
    cfg: &OptimizerConfig,
) -> LocalResult<T> {
    let mut history = Vec::new();
    let method = cfg.method.unwrap_or(if f.dim() <= 3 { Method::SimplexSearch } else { Method::GradientQuasiNewton });
    let (x_init, nm_iters, nm_evals) = match method {
        Method::SimplexSearch => {
            let (x, _, it, ev) = nelder_mead(f, &start, cfg, &mut history);
            (x, it, ev)
        }
        Method::GradientQuasiNewton => (start.clone(), 0, 0),
    };
    let (x, value, gn, converged, it, ev) = projected_bfgs(f, &x_init, cfg, &mut history);
    LocalResult {
        eta: f.natural(&x),
        start,
        x,
        value,
        gradient_norm: gn,
        converged,
        iterations: nm_iters + it,
        evaluations: nm_evals + ev,
        history,
    }
}

/// Latin-hypercube starting points in search coordinates.
fn latin_hypercube<T: Real>(transforms: &[Transform<T>], count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = transforms.len();
    let columns: Vec<Vec<usize>> = (0..p)
        .map(|_| {
            let mut perm: Vec<usize> = (0..count).collect();
            for i in (1..count).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            perm
        })
        .collect();
    (0..count)
        .map(|k| {
            (0..p)
                .map(|i| {
                    let cell = columns[i][k];
                    let u = (cell as f64 + rng.random::<f64>()) / count as f64;
                    transforms[i].sample(T::lit(u))
                })
                .collect()
        })
        .collect()
}

/// Multi-start minimization: `cfg.restarts` Latin-hypercube points plus the
/// optional warm start (given in natural coordinates, listed first).
///
/// Local searches may run in parallel; the winner is chosen by an ordered
/// reduction (lowest value, ties within `1e-12` relative broken by the
/// smallest search-coordinate norm, then by index).
pub fn minimize<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    warm_start: Option<&[T]>,
    cfg: &OptimizerConfig,
) -> Result<SearchOutcome<T>> {
    cfg.validate()?;
    let f = Transformed::new(obj)?;
    let mut starts = Vec::with_capacity(cfg.restarts + 1);
    if let Some(w) = warm_start {
        if w.len() != f.dim() {
            return Err(Error::Dimension(format!("warm start has {} entries, expected {}", w.len(), f.dim())));
        }
        starts.push(f.search(w));
    }
    starts.extend(latin_hypercube(&f.transforms, cfg.restarts, cfg.seed));
    let runs: Vec<LocalResult<T>> = starts.into_par_iter().map(|s| local_search(&f, s, cfg)).collect();
    let norm = |x: &[T]| dot(x, x);
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        let b = &runs[best];
        let tie = (r.value - b.value).abs() <= T::lit(1e-12) * (T::one() + b.value.abs());
        if (!tie && r.value < b.value) || (tie && norm(&r.x) < norm(&b.x)) {
            best = i;
        }
    }
    let winner = &runs[best];
    if !winner.value.is_finite_value() || winner.value == T::max_value().unwrap() {
        return Err(Error::NonConvergence {
            restarts: runs.len(),
            best_value: f64::INFINITY,
            best_eta: winner.eta.iter().map(|v| v.as_f64()).collect(),
        });
    }
    let boundary = f.on_boundary(&winner.x);
    Ok(SearchOutcome { boundary, runs, best })
}
