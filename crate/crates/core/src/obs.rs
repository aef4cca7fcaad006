//! Observation models: whitened (Forney) and matched-filter (Ungerboeck)
//! sufficient statistics, scalar and block-valued.
//!
//! Symbols before time 0 and after `N-1` are zero. Forney observations have
//! length `N + nu`; Ungerboeck observations have length `N` and equal
//! `G c + n` with `E[n n^H] = N0 G`.

use nalgebra::{DMatrix, DVector};

use crate::dsp::{
    cross_correlation, dtft, inverse_dtft, AutocorrTaps, ChannelTaps, PulseSamples, SeededRng, SpectrumSamples,
    DEFAULT_GRID,
};
use crate::error::{invalid, Error, Result};
use crate::C64;

/// Anything that maps a symbol sequence to noisy observations.
///
/// Symbols and observations are flattened `dim`-vectors per time step.
pub trait ChannelSimulator: Sync {
    fn symbol_dim(&self) -> usize {
        1
    }
    fn simulate(&self, symbols: &[C64], rng: &mut SeededRng) -> Vec<C64>;
}

/// Colours white noise: `n_k = sum_u F_u^H w_{u + k D}` with `F_u` of size `q x k`.
#[derive(Clone, Debug)]
pub struct NoiseShaper {
    taps: Vec<C64>,
    q: usize,
    k: usize,
    decimation: usize,
}

impl NoiseShaper {
    pub fn scalar(taps: Vec<C64>, decimation: usize) -> Self {
        Self { taps, q: 1, k: 1, decimation }
    }

    pub fn from_blocks(blocks: &[DMatrix<C64>], decimation: usize) -> Result<Self> {
        let (q, k) = blocks.first().map(|b| b.shape()).unwrap_or((0, 0));
        if q == 0 || blocks.iter().any(|b| b.shape() != (q, k)) {
            return invalid("noise shaper blocks must be non-empty and equally sized");
        }
        let mut taps = Vec::with_capacity(blocks.len() * q * k);
        for b in blocks {
            for r in 0..q {
                for c in 0..k {
                    taps.push(b[(r, c)]);
                }
            }
        }
        Ok(Self { taps, q, k, decimation })
    }

    fn len(&self) -> usize {
        self.taps.len() / (self.q * self.k)
    }

    /// Number of white `q`-vectors needed for `n` outputs.
    pub fn white_len(&self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            (n - 1) * self.decimation + self.len()
        }
    }

    pub fn apply(&self, white: &[C64], n: usize) -> Vec<C64> {
        let (q, k, d) = (self.q, self.k, self.decimation);
        let taps_len = self.len();
        let mut out = vec![C64::new(0.0, 0.0); n * k];
        for t in 0..n {
            for u in 0..taps_len {
                let w = &white[(u + t * d) * q..(u + t * d + 1) * q];
                let f = &self.taps[u * q * k..(u + 1) * q * k];
                for c in 0..k {
                    let mut s = C64::new(0.0, 0.0);
                    for r in 0..q {
                        s += f[r * k + c].conj() * w[r];
                    }
                    out[t * k + c] += s;
                }
            }
        }
        out
    }

    pub fn sample(&self, n: usize, n0: f64, rng: &mut SeededRng) -> Vec<C64> {
        let white: Vec<C64> = (0..self.white_len(n) * self.q).map(|_| rng.complex_gaussian(n0)).collect();
        self.apply(&white, n)
    }
}

#[derive(Clone, Debug)]
pub struct ForneyModel {
    pub h: ChannelTaps,
    pub n0: f64,
}

impl ForneyModel {
    pub fn new(h: ChannelTaps, n0: f64) -> Result<Self> {
        check_n0(n0)?;
        Ok(Self { h, n0 })
    }

    pub fn memory(&self) -> usize {
        self.h.memory()
    }

    pub fn to_ungerboeck(&self) -> UngerboeckModel {
        UngerboeckModel {
            g: self.h.autocorrelation(),
            n0: self.n0,
            shaper: NoiseShaper::scalar(self.h.taps().to_vec(), 1),
        }
    }
}

impl ChannelSimulator for ForneyModel {
    fn simulate(&self, symbols: &[C64], rng: &mut SeededRng) -> Vec<C64> {
        let mut r = self.h.convolve(symbols);
        r.iter_mut().for_each(|v| *v += rng.complex_gaussian(self.n0));
        r
    }
}

#[derive(Clone, Debug)]
pub struct UngerboeckModel {
    pub g: AutocorrTaps,
    pub n0: f64,
    shaper: NoiseShaper,
}

impl UngerboeckModel {
    /// Matched-filter statistics of a discrete channel; noise is the matched-filtered white noise.
    pub fn from_channel(h: &ChannelTaps, n0: f64) -> Result<Self> {
        Ok(ForneyModel::new(h.clone(), n0)?.to_ungerboeck())
    }

    /// Uses a spectral factor of `g` to colour the noise.
    pub fn from_autocorr(g: AutocorrTaps, n0: f64) -> Result<Self> {
        check_n0(n0)?;
        let h = spectral_factorize(&g)?;
        Ok(Self { g, n0, shaper: NoiseShaper::scalar(h.taps().to_vec(), 1) })
    }

    /// Statistics of a pulse sampled every `spacing` pulse samples (`tau * oversampling`).
    pub fn from_pulse(p: &PulseSamples, spacing: usize, n0: f64) -> Result<Self> {
        check_n0(n0)?;
        let g = pulse_autocorrelation(p, spacing)?;
        let s = (p.oversampling() as f64).sqrt();
        let f = p.samples().iter().map(|v| v / s).collect();
        Ok(Self { g, n0, shaper: NoiseShaper::scalar(f, spacing) })
    }

    pub fn with_n0(mut self, n0: f64) -> Result<Self> {
        check_n0(n0)?;
        self.n0 = n0;
        Ok(self)
    }

    pub fn memory(&self) -> usize {
        self.g.memory()
    }

    pub fn shaper(&self) -> &NoiseShaper {
        &self.shaper
    }
}

impl ChannelSimulator for UngerboeckModel {
    fn simulate(&self, symbols: &[C64], rng: &mut SeededRng) -> Vec<C64> {
        let mut y = self.g.apply(symbols);
        let n = self.shaper.sample(symbols.len(), self.n0, rng);
        y.iter_mut().zip(n).for_each(|(a, b)| *a += b);
        y
    }
}

fn check_n0(n0: f64) -> Result<()> {
    if !(n0 > 0.0 && n0.is_finite()) {
        return invalid(format!("N0 must be positive, got {n0}"));
    }
    Ok(())
}

/// `g_i = integral p(t) conj(p(t - i T)) dt` with `T = spacing` samples, trimmed below `1e-6 g_0`.
pub fn pulse_autocorrelation(p: &PulseSamples, spacing: usize) -> Result<AutocorrTaps> {
    if spacing == 0 {
        return invalid("symbol spacing must be a positive number of samples");
    }
    let max_lag = p.samples().len() / spacing + 1;
    let g: Vec<C64> = (0..=max_lag).map(|i| p.correlation((i * spacing) as i64)).collect();
    Ok(AutocorrTaps::new(g)?.trimmed(1e-6))
}

/// Samples per symbol for spacing `tau` at the pulse's oversampling; errors if not an integer.
pub fn spacing_samples(p: &PulseSamples, tau: f64) -> Result<usize> {
    let d = tau * p.oversampling() as f64;
    let r = d.round();
    if (d - r).abs() > 1e-9 || r < 1.0 {
        return invalid(format!(
            "tau * oversampling = {d} must be a positive integer (tau {tau}, oversampling {})",
            p.oversampling()
        ));
    }
    Ok(r as usize)
}

/// Minimum-phase `h` with `h (x) conj(h_{-.}) = g`.
///
/// Cepstral estimate on a dense grid followed by Newton refinement of the
/// autocorrelation equations.
pub fn spectral_factorize(g: &AutocorrTaps) -> Result<ChannelTaps> {
    let nu = g.memory();
    let g0 = g.taps()[0].re;
    if g0 <= 0.0 {
        return invalid("g_0 must be positive");
    }
    let n = DEFAULT_GRID.max((32 * (nu + 1)).next_power_of_two());
    let spec = g.spectrum(n)?;
    let min = spec.min_re();
    if min < -1e-9 * g0 {
        return Err(Error::InvalidInput(format!(
            "autocorrelation is not nonnegative-definite: spectrum minimum {min:e}"
        )));
    }
    let floor = 1e-13 * g0;
    let logs = spec.map(|v| C64::new(v.re.max(floor).ln(), 0.0));
    let half = (n / 2) as i64;
    let ceps = inverse_dtft(&logs, 0, half - 1)?;
    let mut causal = ceps.clone();
    causal[0] *= 0.5;
    let logh = dtft(&causal, 0, n)?;
    let hspec = logh.map(|v| v.exp());
    let mut h = inverse_dtft(&hspec, 0, nu as i64)?;
    if h[0].re < 0.0 {
        h.iter_mut().for_each(|v| *v = -*v);
    }
    let rot = h[0].conj() / h[0].norm();
    h.iter_mut().for_each(|v| *v *= rot);
    newton_polish(&mut h, g);
    for _ in 0..3 {
        let roots = crate::optim::polynomial_roots(&h);
        if roots.iter().all(|z| z.norm() <= 1.0) {
            break;
        }
        h = reflect_outside_zeros(&h, &roots);
        newton_polish(&mut h, g);
    }
    ChannelTaps::new(h)
}

/// Mirrors zeros with `|z| > 1` to `1/conj(z)` without changing `|H(omega)|`.
fn reflect_outside_zeros(h: &[C64], roots: &[C64]) -> Vec<C64> {
    let mut lead = h[0];
    let mut poly = vec![C64::new(1.0, 0.0)];
    for &z in roots {
        let z = if z.norm() > 1.0 {
            lead *= z.norm();
            1.0 / z.conj()
        } else {
            z
        };
        let mut next = poly.clone();
        next.push(C64::new(0.0, 0.0));
        for i in 0..poly.len() {
            next[i + 1] -= z * poly[i];
        }
        poly = next;
    }
    poly.iter().map(|c| c * lead).collect()
}

fn autocorr_residual(h: &[C64], g: &AutocorrTaps) -> Vec<f64> {
    let nu = h.len() as i64 - 1;
    let at = |i: i64| {
        if i < 0 || i > nu {
            C64::new(0.0, 0.0)
        } else {
            h[i as usize]
        }
    };
    let mut out = Vec::with_capacity(2 * nu as usize + 1);
    for i in 0..=nu {
        let f: C64 = (i..=nu).map(|k| at(k) * at(k - i).conj()).sum::<C64>() - g.at(i);
        out.push(f.re);
        if i > 0 {
            out.push(f.im);
        }
    }
    out
}

fn newton_polish(h: &mut [C64], g: &AutocorrTaps) {
    let nu = h.len() - 1;
    let dim = 2 * nu + 1;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut res = autocorr_residual(h, g);
    for _ in 0..60 {
        let r0 = norm(&res);
        if r0 < 1e-15 * g.taps()[0].re {
            break;
        }
        let at = |i: i64, h: &[C64]| {
            if i < 0 || i > nu as i64 {
                C64::new(0.0, 0.0)
            } else {
                h[i as usize]
            }
        };
        // columns: Re h_0, then (Re h_m, Im h_m) for m >= 1
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..=nu as i64 {
            let rows: Vec<(usize, bool)> =
                if i == 0 { vec![(0, true)] } else { vec![(2 * i as usize - 1, true), (2 * i as usize, false)] };
            for m in 0..=nu as i64 {
                let d_re = at(m - i, h).conj() + at(m + i, h);
                let d_im = C64::new(0.0, 1.0) * (at(m - i, h).conj() - at(m + i, h));
                for &(row, real) in &rows {
                    let pick = |z: C64| if real { z.re } else { z.im };
                    if m == 0 {
                        jac[(row, 0)] = pick(d_re);
                    } else {
                        jac[(row, 2 * m as usize - 1)] = pick(d_re);
                        jac[(row, 2 * m as usize)] = pick(d_im);
                    }
                }
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_vec(res.iter().map(|v| -v).collect())) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = h.to_vec();
            trial[0].re += t * step[0];
            for m in 1..=nu {
                trial[m] += C64::new(step[2 * m - 1], step[2 * m]) * t;
            }
            let r = autocorr_residual(&trial, g);
            if norm(&r) < r0 {
                h.copy_from_slice(&trial);
                res = r;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
}

/// True when all zeros of `sum h_i z^{-i}` lie in `|z| <= 1 + tol`.
pub fn is_minimum_phase(h: &ChannelTaps, tol: f64) -> bool {
    crate::optim::polynomial_roots(h.taps()).iter().all(|z| z.norm() <= 1.0 + tol)
}

/// Stationary block model `G_0..G_L` (`K x K`), with `G_{-i} = G_i^H`.
#[derive(Clone, Debug)]
pub struct BlockUngerboeckModel {
    lags: Vec<DMatrix<C64>>,
    pub n0: f64,
    shaper: Option<NoiseShaper>,
}

impl BlockUngerboeckModel {
    pub fn new(lags: Vec<DMatrix<C64>>, n0: f64) -> Result<Self> {
        let k = lags.first().map(|m| m.nrows()).unwrap_or(0);
        if k == 0 || lags.iter().any(|m| m.shape() != (k, k)) {
            return invalid("block lags must be non-empty square matrices of equal size");
        }
        check_n0(n0)?;
        Ok(Self { lags, n0, shaper: None })
    }

    pub fn with_shaper(mut self, shaper: NoiseShaper) -> Result<Self> {
        if shaper.k != self.dim() {
            return invalid("noise shaper output dimension does not match block size");
        }
        self.shaper = Some(shaper);
        Ok(self)
    }

    pub fn from_forney(h: &[DMatrix<C64>], n0: f64) -> Result<Self> {
        let nu = h.len() as i64 - 1;
        let lags = (0..=nu)
            .map(|i| {
                (0..=nu - i)
                    .map(|k| h[k as usize].adjoint() * &h[(k + i) as usize])
                    .fold(DMatrix::zeros(h[0].ncols(), h[0].ncols()), |a, b| a + b)
            })
            .collect();
        Self::new(lags, n0)?.with_shaper(NoiseShaper::from_blocks(h, 1)?)
    }

    pub fn dim(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn memory(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn lags(&self) -> &[DMatrix<C64>] {
        &self.lags
    }

    pub fn at(&self, i: i64) -> DMatrix<C64> {
        let k = i.unsigned_abs() as usize;
        match self.lags.get(k) {
            Some(m) if i >= 0 => m.clone(),
            Some(m) => m.adjoint(),
            None => DMatrix::zeros(self.dim(), self.dim()),
        }
    }

    /// `G(omega) = sum_i G_i exp(-j omega i)` per grid point.
    pub fn spectrum(&self, n: usize) -> Vec<DMatrix<C64>> {
        let l = self.memory() as i64;
        (0..n)
            .map(|t| {
                let w = crate::dsp::omega(t, n);
                let mut s = DMatrix::zeros(self.dim(), self.dim());
                for i in -l..=l {
                    s += self.at(i) * C64::from_polar(1.0, -w * i as f64);
                }
                s
            })
            .collect()
    }

    /// CSV `lag,row,col,re,im` for lags `0..=L`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,row,col,re,im\n");
        for (i, m) in self.lags.iter().enumerate() {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    s.push_str(&format!("{i},{r},{c},{:.15e},{:.15e}\n", m[(r, c)].re, m[(r, c)].im));
                }
            }
        }
        s
    }

    /// `y = G c` over flattened `K`-vectors.
    pub fn apply(&self, c: &[C64]) -> Vec<C64> {
        let k = self.dim();
        let n = c.len() / k;
        let l = self.memory() as i64;
        let mut out = vec![C64::new(0.0, 0.0); n * k];
        for t in 0..n as i64 {
            for m in (t - l).max(0)..=(t + l).min(n as i64 - 1) {
                let g = self.at(t - m);
                for r in 0..k {
                    for col in 0..k {
                        out[t as usize * k + r] += g[(r, col)] * c[m as usize * k + col];
                    }
                }
            }
        }
        out
    }
}

impl ChannelSimulator for BlockUngerboeckModel {
    fn symbol_dim(&self) -> usize {
        self.dim()
    }

    fn simulate(&self, symbols: &[C64], rng: &mut SeededRng) -> Vec<C64> {
        let mut y = self.apply(symbols);
        let shaper = self.shaper.as_ref().expect("block model simulation needs a noise shaper");
        let n = shaper.sample(symbols.len() / self.dim(), self.n0, rng);
        y.iter_mut().zip(n).for_each(|(a, b)| *a += b);
        y
    }
}

/// Block Forney model `r_k = sum_i H_i c_{k-i} + w_k`.
#[derive(Clone, Debug)]
pub struct BlockForneyModel {
    pub h: Vec<DMatrix<C64>>,
    pub n0: f64,
}

impl BlockForneyModel {
    pub fn new(h: Vec<DMatrix<C64>>, n0: f64) -> Result<Self> {
        let shape = h.first().map(|m| m.shape()).unwrap_or((0, 0));
        if shape.0 == 0 || h.iter().any(|m| m.shape() != shape) {
            return invalid("channel blocks must be non-empty and equally sized");
        }
        check_n0(n0)?;
        Ok(Self { h, n0 })
    }

    /// `H(omega)` per grid point.
    pub fn spectrum(&self, n: usize) -> Vec<DMatrix<C64>> {
        (0..n)
            .map(|t| {
                let w = crate::dsp::omega(t, n);
                self.h.iter().enumerate().fold(DMatrix::zeros(self.h[0].nrows(), self.h[0].ncols()), |acc, (i, m)| {
                    acc + m * C64::from_polar(1.0, -w * i as f64)
                })
            })
            .collect()
    }

    /// `E_H = sum_l Tr(H_l H_l^H)`.
    pub fn energy(&self) -> f64 {
        self.h.iter().map(|m| m.norm_squared()).sum()
    }

    /// Real 2x2 channel with memory 3 used as the MIMO reference example.
    pub fn reference_2x2() -> Vec<DMatrix<C64>> {
        const H: [[f64; 4]; 4] = [
            [-0.080302, 0.256280, 0.385964, 0.353422],
            [0.440662, -0.168631, 0.159813, -0.338684],
            [-0.358555, -0.303972, -0.084969, 0.668917],
            [0.669006, 0.066229, 0.347376, -0.207065],
        ];
        H.iter().map(|m| DMatrix::from_row_slice(2, 2, m).map(|v| C64::new(v, 0.0))).collect()
    }
}

impl ChannelSimulator for BlockForneyModel {
    fn symbol_dim(&self) -> usize {
        self.h[0].ncols()
    }

    fn simulate(&self, symbols: &[C64], rng: &mut SeededRng) -> Vec<C64> {
        let (rows, k) = self.h[0].shape();
        let n = symbols.len() / k;
        let nu = self.h.len() - 1;
        let mut r = vec![C64::new(0.0, 0.0); (n + nu) * rows];
        for t in 0..n + nu {
            for (i, hi) in self.h.iter().enumerate() {
                if t < i || t - i >= n {
                    continue;
                }
                let c = &symbols[(t - i) * k..(t - i + 1) * k];
                for a in 0..rows {
                    for b in 0..k {
                        r[t * rows + a] += hi[(a, b)] * c[b];
                    }
                }
            }
        }
        r.iter_mut().for_each(|v| *v += rng.complex_gaussian(self.n0));
        r
    }
}

/// Frequency-division layout: `K` carriers at offsets `F_l` (units of `1/T`).
#[derive(Clone, Debug)]
pub struct FdmLayout {
    pub pulses: Vec<PulseSamples>,
    pub offsets: Vec<f64>,
    pub spacing: usize,
    pub max_lags: usize,
}

/// Stationary model after rotating symbols `x_k = c_k o exp(j 2 pi F_l k T)` and
/// matched-filter outputs `z_k = y_k o exp(j 2 pi F_l k T)`.
///
/// `(G_i)_{l,u} = exp(j2pi F_l i T) integral p_u(t) conj(p_l(t - iT)) exp(-j2pi(F_l-F_u) t) dt`,
/// truncated once the remaining lag energy drops below `1e-4` of the total.
pub fn fdm_stationary_model(layout: &FdmLayout, n0: f64) -> Result<BlockUngerboeckModel> {
    let k = layout.pulses.len();
    if k == 0 || layout.offsets.len() != k {
        return invalid("need one offset per carrier pulse");
    }
    let os = layout.pulses[0].oversampling() as f64;
    let d = layout.spacing;
    let span = layout.pulses.iter().map(|p| p.samples().len()).max().unwrap_or(0);
    let full = span / d + 1;
    let mut lags = Vec::with_capacity(full + 1);
    for i in 0..=full {
        let mut m = DMatrix::zeros(k, k);
        for l in 0..k {
            for u in 0..k {
                let df = layout.offsets[l] - layout.offsets[u];
                let w = std::f64::consts::TAU * df;
                let ph = C64::from_polar(1.0, std::f64::consts::TAU * layout.offsets[l] * (i * d) as f64 / os);
                let val = cross_correlation(&layout.pulses[u], &layout.pulses[l], (i * d) as i64, |t| {
                    C64::from_polar(1.0, -w * t)
                });
                m[(l, u)] = ph * val;
            }
        }
        lags.push(m);
    }
    let energy: Vec<f64> =
        lags.iter().enumerate().map(|(i, m)| if i == 0 { m.norm_squared() } else { 2.0 * m.norm_squared() }).collect();
    let total: f64 = energy.iter().sum();
    let mut keep = lags.len() - 1;
    let mut tail = 0.0;
    while keep > 0 && tail + energy[keep] < 1e-4 * total {
        tail += energy[keep];
        keep -= 1;
    }
    if keep > layout.max_lags {
        return Err(Error::InvalidInput(format!(
            "interference extends over {keep} lags, more than the allowed {}",
            layout.max_lags
        )));
    }
    lags.truncate(keep + 1);
    BlockUngerboeckModel::new(lags, n0)
}

/// `exp(j 2 pi F_l k T)` for each carrier, with `T = symbol_time` in pulse time units.
pub fn fdm_rotation(offsets: &[f64], symbol_time: f64, k: i64) -> Vec<C64> {
    offsets.iter().map(|f| C64::from_polar(1.0, std::f64::consts::TAU * f * symbol_time * k as f64)).collect()
}

/// `|H(omega)|^2`-style spectrum of an autocorrelation, clamped at zero.
pub fn folded_spectrum(g: &AutocorrTaps, n: usize) -> Result<SpectrumSamples> {
    Ok(g.spectrum(n)?.map(|v| C64::new(v.re.max(0.0), 0.0)))
}
