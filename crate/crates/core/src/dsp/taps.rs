use nalgebra::DMatrix;

use super::spectrum::{dtft, SpectrumSamples};
use crate::error::{invalid, Error, Result};
use crate::C64;

/// Causal discrete-time channel `h_0..h_nu`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTaps {
    taps: Vec<C64>,
}

impl ChannelTaps {
    pub fn new(taps: Vec<C64>) -> Result<Self> {
        if taps.is_empty() {
            return invalid("channel needs at least one tap");
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return invalid("channel taps must be finite");
        }
        Ok(Self { taps })
    }

    pub fn from_real(taps: &[f64]) -> Result<Self> {
        Self::new(taps.iter().map(|&t| C64::new(t, 0.0)).collect())
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    pub fn is_real(&self) -> bool {
        self.taps.iter().all(|t| t.im == 0.0)
    }

    pub fn get(&self, i: i64) -> C64 {
        if i < 0 {
            return C64::new(0.0, 0.0);
        }
        self.taps.get(i as usize).copied().unwrap_or_default()
    }

    pub fn spectrum(&self, n: usize) -> Result<SpectrumSamples> {
        dtft(&self.taps, 0, n)
    }

    /// `|H(omega)|^2` on an `n`-point grid.
    pub fn power_spectrum(&self, n: usize) -> Result<SpectrumSamples> {
        Ok(self.spectrum(n)?.map(|v| C64::new(v.norm_sqr(), 0.0)))
    }

    /// `g_i = sum_k h_k conj(h_{k-i})`.
    pub fn autocorrelation(&self) -> AutocorrTaps {
        let nu = self.memory() as i64;
        let g = (0..=nu).map(|i| (i..=nu).map(|k| self.get(k) * self.get(k - i).conj()).sum()).collect();
        AutocorrTaps { taps: g }
    }

    /// Full linear convolution `r_k = sum_i h_i c_{k-i}`, length `N + nu`.
    pub fn convolve(&self, c: &[C64]) -> Vec<C64> {
        convolve(&self.taps, c)
    }

    pub fn epr4() -> Self {
        Self::from_real(&[0.5, 0.5, -0.5, -0.5]).expect("static taps")
    }

    pub fn proakis_b() -> Self {
        Self::from_real(&[0.407, 0.815, 0.407]).expect("static taps")
    }
}

pub fn convolve(a: &[C64], b: &[C64]) -> Vec<C64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Hermitian-symmetric lag sequence stored as `g_0..g_L`; `g_{-i} = conj(g_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AutocorrTaps {
    taps: Vec<C64>,
}

impl AutocorrTaps {
    pub fn new(mut taps: Vec<C64>) -> Result<Self> {
        if taps.is_empty() {
            return invalid("autocorrelation needs g_0");
        }
        if taps[0].im.abs() > 1e-9 * taps[0].norm().max(1.0) {
            return invalid("g_0 must be real");
        }
        taps[0].im = 0.0;
        Ok(Self { taps })
    }

    pub fn from_real(taps: &[f64]) -> Result<Self> {
        Self::new(taps.iter().map(|&t| C64::new(t, 0.0)).collect())
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn at(&self, i: i64) -> C64 {
        let k = i.unsigned_abs() as usize;
        match self.taps.get(k) {
            Some(&v) if i >= 0 => v,
            Some(&v) => v.conj(),
            None => C64::new(0.0, 0.0),
        }
    }

    /// Keeps lags `0..=len-1`.
    pub fn truncated(&self, memory: usize) -> Self {
        let n = (memory + 1).min(self.taps.len());
        Self { taps: self.taps[..n].to_vec() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { taps: self.taps.iter().map(|&t| t * s).collect() }
    }

    /// Drops trailing lags whose magnitude is below `rel * g_0`.
    pub fn trimmed(&self, rel: f64) -> Self {
        let thr = rel * self.taps[0].norm();
        let last = self.taps.iter().rposition(|t| t.norm() >= thr).unwrap_or(0);
        Self { taps: self.taps[..=last].to_vec() }
    }

    pub fn spectrum(&self, n: usize) -> Result<SpectrumSamples> {
        let l = self.memory() as i64;
        let two_sided: Vec<C64> = (-l..=l).map(|i| self.at(i)).collect();
        Ok(dtft(&two_sided, -l, n)?.map(|v| C64::new(v.re, 0.0)))
    }

    /// `N x N` Toeplitz matrix with `(G)_{lm} = g_{l-m}`.
    pub fn toeplitz(&self, n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |l, m| self.at(l as i64 - m as i64))
    }

    /// `y = G x` with the `N x N` Toeplitz `G`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = x.len() as i64;
        let l = self.memory() as i64;
        (0..n).map(|k| ((k - l).max(0)..=(k + l).min(n - 1)).map(|m| self.at(k - m) * x[m as usize]).sum()).collect()
    }
}

/// Log-determinant of a Hermitian banded matrix given by its lower band.
///
/// `band(i, j)` returns `A_{ij}` for `0 <= i - j <= bw`.
pub fn banded_cholesky_logdet(n: usize, bw: usize, band: impl Fn(usize, usize) -> C64) -> Result<f64> {
    let w = bw + 1;
    let mut l = vec![C64::new(0.0, 0.0); n * w];
    let idx = |i: usize, j: usize| i * w + (i - j);
    let mut logdet = 0.0;
    for j in 0..n {
        let lo = j.saturating_sub(bw);
        let mut d = band(j, j).re;
        for k in lo..j {
            d -= l[idx(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[idx(j, j)] = C64::new(djj, 0.0);
        logdet += 2.0 * djj.ln();
        for i in (j + 1)..(j + w).min(n) {
            let mut s = band(i, j);
            for k in i.saturating_sub(bw).max(lo)..j {
                s -= l[idx(i, k)] * l[idx(j, k)].conj();
            }
            l[idx(i, j)] = s / djj;
        }
    }
    Ok(logdet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn epr4_autocorrelation() {
        let g = ChannelTaps::epr4().autocorrelation();
        let want = [1.0, 0.25, -0.5, -0.25];
        for (a, b) in g.taps().iter().zip(want) {
            assert!((a.re - b).abs() < 1e-15 && a.im == 0.0);
        }
    }

    #[test]
    fn toeplitz_matches_channel_gram() {
        let h = ChannelTaps::new(vec![C64::new(1.0, 0.2), C64::new(-0.3, 0.4), C64::new(0.1, -0.5)]).unwrap();
        let n = 7;
        let hm = DMatrix::from_fn(n + 2, n, |t, m| h.get(t as i64 - m as i64));
        let gram = hm.adjoint() * &hm;
        let g = h.autocorrelation().toeplitz(n);
        assert!((gram - g).norm() < 1e-12);
    }

    #[test]
    fn banded_logdet_matches_dense() {
        let g = AutocorrTaps::from_real(&[2.0, 0.6, -0.3]).unwrap();
        let n = 9;
        let dense = g.toeplitz(n);
        let chol = nalgebra::Cholesky::new(dense.clone()).unwrap();
        let want: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum();
        let got = banded_cholesky_logdet(n, 2, |i, j| g.at(i as i64 - j as i64)).unwrap();
        assert!((want - got).abs() < 1e-12);
    }

    #[test]
    fn banded_rejects_indefinite() {
        let g = AutocorrTaps::from_real(&[1.0, 2.0]).unwrap();
        let e = banded_cholesky_logdet(4, 1, |i, j| g.at(i as i64 - j as i64)).unwrap_err();
        assert!(matches!(e, Error::NotPositiveDefinite { .. }));
    }

    proptest! {
        #[test]
        fn toeplitz_apply_equals_matrix_product(
            g in prop::collection::vec(-1.0f64..1.0, 1..5),
            x in prop::collection::vec(-1.0f64..1.0, 1..20),
        ) {
            let g = AutocorrTaps::from_real(&g).unwrap();
            let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, -0.5 * v)).collect();
            let y = g.apply(&xc);
            let m = g.toeplitz(xc.len()) * nalgebra::DVector::from_vec(xc.clone());
            for (a, b) in y.iter().zip(m.iter()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn autocorr_spectrum_is_squared_magnitude(
            h in prop::collection::vec(-1.0f64..1.0, 1..6),
        ) {
            let h = ChannelTaps::from_real(&h).unwrap();
            let a = h.power_spectrum(64).unwrap();
            let b = h.autocorrelation().spectrum(64).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }
    }
}
