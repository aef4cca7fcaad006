//! Sampled spectra on the uniform grid `omega_n = -pi + 2 pi n / N`.
//!
//! Forward transform is `H(omega) = sum_i h_i exp(-j omega i)`; integrals
//! over `[-pi, pi)` are the grid mean (rectangular rule).

use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::C64;

pub const DEFAULT_GRID: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSamples {
    values: Vec<C64>,
}

pub fn omega(n: usize, len: usize) -> f64 {
    -PI + 2.0 * PI * n as f64 / len as f64
}

impl SpectrumSamples {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("empty spectrum");
        }
        Ok(Self { values })
    }

    pub fn from_real(values: Vec<f64>) -> Result<Self> {
        Self::new(values.into_iter().map(|v| C64::new(v, 0.0)).collect())
    }

    /// Samples `f(omega)` on an `n`-point grid.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> C64) -> Self {
        Self { values: (0..n).map(|k| f(omega(k, n))).collect() }
    }

    pub fn from_real_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(n, |w| C64::new(f(w), 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn omega(&self, n: usize) -> f64 {
        omega(n, self.len())
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// `(1/2pi) * integral` over one period.
    pub fn mean(&self) -> C64 {
        self.values.iter().sum::<C64>() / self.len() as f64
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.len() != other.len() {
            return invalid(format!("grid mismatch: {} vs {}", self.len(), other.len()));
        }
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Lag coefficients `t_i = (1/2pi) integral S(omega) exp(j omega i)` for `i` in `first..=last`.
    pub fn lags(&self, first: i64, last: i64) -> Result<Vec<C64>> {
        inverse_dtft(self, first, last)
    }

    /// CSV with header `omega,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,re,im\n");
        for (n, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{:.12},{:.15e},{:.15e}\n", self.omega(n), v.re, v.im));
        }
        s
    }
}

/// DTFT of `taps` whose first entry sits at lag `first_lag`.
pub fn dtft(taps: &[C64], first_lag: i64, n: usize) -> Result<SpectrumSamples> {
    if n == 0 || taps.len() > n {
        return invalid(format!("grid of {n} points too small for {} taps", taps.len()));
    }
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (k, &h) in taps.iter().enumerate() {
        let lag = first_lag + k as i64;
        let sign = if lag.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        buf[lag.rem_euclid(n as i64) as usize] += h * sign;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    SpectrumSamples::new(buf)
}

pub fn inverse_dtft(spec: &SpectrumSamples, first: i64, last: i64) -> Result<Vec<C64>> {
    let n = spec.len();
    if last < first || (last - first + 1) as usize > n {
        return invalid(format!("lag window {first}..={last} does not fit a {n}-point grid"));
    }
    let mut buf = spec.values.clone();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok((first..=last)
        .map(|i| {
            let sign = if i.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            buf[i.rem_euclid(n as i64) as usize] * (sign * scale)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(taps: &[C64], first: i64, w: f64) -> C64 {
        taps.iter().enumerate().map(|(k, &h)| h * C64::from_polar(1.0, -w * (first + k as i64) as f64)).sum()
    }

    #[test]
    fn matches_direct_sum() {
        let taps = vec![C64::new(0.3, -0.1), C64::new(1.0, 0.2), C64::new(-0.4, 0.5)];
        let s = dtft(&taps, -1, 64).unwrap();
        for n in [0, 5, 31, 63] {
            let d = direct(&taps, -1, s.omega(n));
            assert!((s.values()[n] - d).norm() < 1e-12);
        }
    }

    #[test]
    fn grid_starts_at_minus_pi() {
        let s = SpectrumSamples::from_real_fn(8, |w| w);
        assert_eq!(s.values()[0].re, -PI);
        assert!((s.values()[4].re).abs() < 1e-15);
    }

    #[test]
    fn epr4_spectrum_is_real_nonnegative() {
        let h: Vec<C64> = [0.5, 0.5, -0.5, -0.5].iter().map(|&x| C64::new(x, 0.0)).collect();
        let s = dtft(&h, 0, 256).unwrap();
        let p = s.map(|v| C64::new(v.norm_sqr(), 0.0));
        assert!(p.min_re() >= 0.0);
        assert!((p.mean().re - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_reproduces_taps(
            re in prop::collection::vec(-2.0f64..2.0, 1..12),
            im in prop::collection::vec(-2.0f64..2.0, 12),
            first in -6i64..6,
        ) {
            let taps: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
            let n = 4 * taps.len().max(8);
            let s = dtft(&taps, first, n).unwrap();
            let back = inverse_dtft(&s, first, first + taps.len() as i64 - 1).unwrap();
            for (a, b) in taps.iter().zip(&back) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }
    }
}
