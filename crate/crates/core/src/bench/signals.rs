//! Test inputs IT1–IT4 and their stationary autocorrelations.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Order of the IT1 low-pass filter (it has `LOWPASS_ORDER + 1` taps).
pub const LOWPASS_ORDER: usize = 50;
/// IT1 cutoff as a fraction of the Nyquist frequency.
pub const LOWPASS_CUTOFF: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputKind {
    /// White Gaussian noise through a low-pass filter with band `[0, 0.6]`.
    #[serde(rename = "IT1", alias = "it1")]
    It1,
    /// Unit-variance white Gaussian noise.
    #[serde(rename = "IT2", alias = "it2")]
    It2,
    /// White noise through `1/(1 − 0.95q⁻¹)²`.
    #[serde(rename = "IT3", alias = "it3")]
    It3,
    /// White noise through `1/(1 − 0.05q⁻¹)²`.
    #[serde(rename = "IT4", alias = "it4")]
    It4,
}

impl InputKind {
    pub const ALL: [InputKind; 4] = [InputKind::It1, InputKind::It2, InputKind::It3, InputKind::It4];

    pub fn name(self) -> &'static str {
        match self {
            InputKind::It1 => "IT1",
            InputKind::It2 => "IT2",
            InputKind::It3 => "IT3",
            InputKind::It4 => "IT4",
        }
    }

    /// Pole of the double-pole filter for IT3/IT4.
    pub fn pole(self) -> Option<f64> {
        match self {
            InputKind::It3 => Some(0.95),
            InputKind::It4 => Some(0.05),
            _ => None,
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        InputKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown input kind {s:?} (expected IT1..IT4)")))
    }
}

/// Hamming-windowed sinc low-pass taps, unit DC gain.
pub fn lowpass_taps() -> Vec<f64> {
    let m = LOWPASS_ORDER as f64;
    let wc = LOWPASS_CUTOFF * PI;
    let mut h: Vec<f64> = (0..=LOWPASS_ORDER)
        .map(|k| {
            let t = k as f64 - m / 2.0;
            let sinc = if t == 0.0 { wc / PI } else { (wc * t).sin() / (PI * t) };
            let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / m).cos();
            sinc * window
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= dc);
    h
}

/// `len` samples of the given input. IT2 is raw unit-variance white noise;
/// the filtered inputs are rescaled to unit sample variance.
pub fn generate_input(kind: InputKind, len: usize, seed: u64) -> Vec<f64> {
    generate_input_with(kind, len, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn generate_input_with<R: Rng + ?Sized>(kind: InputKind, len: usize, rng: &mut R) -> Vec<f64> {
    let mut white = |m: usize| -> Vec<f64> { (0..m).map(|_| rng.sample(StandardNormal)).collect() };
    let mut u = match kind {
        InputKind::It2 => return white(len),
        InputKind::It1 => {
            // discard the filter start-up so every sample is stationary
            let h = lowpass_taps();
            let w = white(len + LOWPASS_ORDER);
            (0..len)
                .map(|t| h.iter().enumerate().map(|(k, hk)| hk * w[t + LOWPASS_ORDER - k]).sum())
                .collect::<Vec<f64>>()
        }
        InputKind::It3 | InputKind::It4 => {
            let a = kind.pole().unwrap();
            let w = white(len);
            let mut u = vec![0.0; len];
            for t in 0..len {
                let u1 = if t >= 1 { u[t - 1] } else { 0.0 };
                let u2 = if t >= 2 { u[t - 2] } else { 0.0 };
                u[t] = 2.0 * a * u1 - a * a * u2 + w[t];
            }
            u
        }
    };
    normalize_variance(&mut u);
    u
}

fn normalize_variance(u: &mut [f64]) {
    if u.len() < 2 {
        return;
    }
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var > 0.0 {
        let s = var.sqrt();
        u.iter_mut().for_each(|x| *x /= s);
    }
}

/// Stationary autocorrelation `ρ(k)`, `k = 0..lags`, of the normalized input.
pub fn autocorrelation(kind: InputKind, lags: usize) -> Vec<f64> {
    match kind {
        InputKind::It2 => (0..lags).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(),
        InputKind::It1 => {
            let h = lowpass_taps();
            let energy: f64 = h.iter().map(|x| x * x).sum();
            (0..lags)
                .map(|k| h.iter().zip(h.iter().skip(k)).map(|(a, b)| a * b).sum::<f64>() / energy)
                .collect()
        }
        InputKind::It3 | InputKind::It4 => {
            // impulse response (j+1)aʲ; γ(k) ∝ aᵏ((1+a²)/(1−a²)³ + k/(1−a²)²)
            let a = kind.pole().unwrap();
            let r = a * a;
            (0..lags)
                .map(|k| a.powi(k as i32) * (1.0 + k as f64 * (1.0 - r) / (1.0 + r)))
                .collect()
        }
    }
}

/// Toeplitz limit `Σ` of `ΦᵀΦ/N` for an order-`n` FIR model.
pub fn input_covariance(kind: InputKind, n: usize) -> DMatrix<f64> {
    let rho = autocorrelation(kind, n);
    DMatrix::from_fn(n, n, |i, j| rho[i.abs_diff(j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_autocorrelation(u: &[f64], k: usize) -> f64 {
        let n = u.len();
        let mean = u.iter().sum::<f64>() / n as f64;
        let c = |k: usize| (0..n - k).map(|t| (u[t] - mean) * (u[t + k] - mean)).sum::<f64>() / n as f64;
        c(k) / c(0)
    }

    #[test]
    fn white_input_has_unit_variance() {
        let n = 20000;
        let u = generate_input(InputKind::It2, n, 1);
        let var = u.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn filtered_inputs_match_their_autocorrelation() {
        for kind in [InputKind::It1, InputKind::It3, InputKind::It4] {
            let u = generate_input(kind, 200_000, 7);
            let rho = autocorrelation(kind, 4);
            for k in 1..4 {
                let tol = if kind == InputKind::It3 { 0.03 } else { 0.01 };
                assert!((sample_autocorrelation(&u, k) - rho[k]).abs() < tol, "{kind} lag {k}");
            }
        }
        let a: f64 = 0.05;
        let lag1 = autocorrelation(InputKind::It4, 2)[1];
        assert_relative_eq!(lag1, 2.0 * a / (1.0 + a * a), max_relative = 1e-12);
    }

    #[test]
    fn double_pole_closed_form_matches_series() {
        let a: f64 = 0.95;
        let rho = autocorrelation(InputKind::It3, 6);
        let gamma = |k: usize| (0..20000usize).map(|j| (j + 1) as f64 * a.powi(j as i32) * (j + k + 1) as f64 * a.powi((j + k) as i32)).sum::<f64>();
        for (k, r) in rho.iter().enumerate() {
            assert_relative_eq!(*r, gamma(k) / gamma(0), max_relative = 1e-10);
        }
    }

    #[test]
    fn lowpass_is_symmetric_with_unit_gain() {
        let h = lowpass_taps();
        assert_eq!(h.len(), LOWPASS_ORDER + 1);
        for k in 0..h.len() {
            assert_relative_eq!(h[k], h[h.len() - 1 - k], epsilon = 1e-15);
        }
        assert_relative_eq!(h.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn it3_gram_is_worse_conditioned_than_it2() {
        let n = 30;
        let big_n = 500;
        let cond = |kind| {
            let u = generate_input(kind, big_n + n, 3);
            let phi = crate::model::build_regressor(&u, n, big_n + n).unwrap();
            crate::linalg::spd_condition(&phi.tr_mul(&phi))
        };
        assert!(cond(InputKind::It3) > 100.0 * cond(InputKind::It2));
    }

    #[test]
    fn kind_names_parse() {
        for k in InputKind::ALL {
            assert_eq!(k.name().parse::<InputKind>().unwrap(), k);
            assert_eq!(k.name().to_lowercase().parse::<InputKind>().unwrap(), k);
        }
        assert!("IT5".parse::<InputKind>().is_err());
    }
}
