//! Nonlinear satellite channel: IMUX filter, Saleh amplifier and OMUX filter,
//! with receiver models built from a simplified Volterra expansion
//! `s(t) = sum_k sum_i c_k |c_k|^{2i} h_i(t - kT)`.
//!
//! Waveforms are sampled at `oversampling` samples per unit time. Symbol `k`
//! of a modulated record sits at sample `pad + k * spacing`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;

use crate::air::{mc_air_trellis, AirConfig, AirEstimate};
use crate::detector::{Alphabet, DetectionLaw, FrontEnd, MismatchedLaw};
use crate::dsp::{
    cholesky_pd, cross_correlation, kaiser, parse_taps, AutocorrTaps, Constellation, Modulation, PulseSamples,
    SeededRng, DEFAULT_GRID,
};
use crate::error::{invalid, Error, Result};
use crate::obs::{
    folded_spectrum, pulse_autocorrelation, spacing_samples, BlockUngerboeckModel, ChannelSimulator, NoiseShaper,
};
use crate::shortening::{design_block_cs, design_scalar_cs, truncation_law, ShortenerKind, DEFAULT_FRONT_END_LAGS};
use crate::{db_to_lin, lin_to_db, C64};

pub const MIN_OVERSAMPLING: usize = 8;
pub const IMUX_BANDWIDTH: f64 = 0.94;
pub const OMUX_BANDWIDTH: f64 = 0.85;

/// Memoryless Saleh amplifier driven at `ibo_db` below single-tone saturation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SalehHpa {
    pub alpha_a: f64,
    pub beta_a: f64,
    pub alpha_phi: f64,
    pub beta_phi: f64,
    pub ibo_db: f64,
}

impl Default for SalehHpa {
    fn default() -> Self {
        Self { alpha_a: 2.1322, beta_a: 1.0746, alpha_phi: 1.7054, beta_phi: 1.5072, ibo_db: 0.0 }
    }
}

impl SalehHpa {
    pub fn with_ibo(ibo_db: f64) -> Self {
        Self { ibo_db, ..Self::default() }
    }

    pub fn am_am(&self, rho: f64) -> f64 {
        self.alpha_a * rho / (1.0 + self.beta_a * rho * rho)
    }

    /// Phase rotation in radians.
    pub fn am_pm(&self, rho: f64) -> f64 {
        self.alpha_phi * rho * rho / (1.0 + self.beta_phi * rho * rho)
    }

    /// Input amplitude giving the peak output amplitude.
    pub fn saturation_input(&self) -> f64 {
        1.0 / self.beta_a.sqrt()
    }

    pub fn saturation_output(&self) -> f64 {
        self.alpha_a / (2.0 * self.beta_a.sqrt())
    }

    /// Output power of an unmodulated carrier at saturation.
    pub fn saturation_power(&self) -> f64 {
        self.saturation_output().powi(2)
    }

    pub fn apply(&self, x: C64) -> C64 {
        let rho = x.norm();
        if rho == 0.0 {
            return C64::new(0.0, 0.0);
        }
        x / rho * C64::from_polar(self.am_am(rho), self.am_pm(rho))
    }

    fn check(&self) -> Result<()> {
        let p = [self.alpha_a, self.beta_a, self.alpha_phi, self.beta_phi];
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) || self.alpha_a == 0.0 || self.beta_a == 0.0 {
            return invalid("Saleh parameters must be finite, alpha_a and beta_a positive");
        }
        if !self.ibo_db.is_finite() {
            return invalid("IBO must be finite");
        }
        Ok(())
    }
}

/// Linear-phase FIR with Butterworth magnitude `|H(f)|^2 = 1 / (1 + (2f/B)^(2n))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuxFilterDesign {
    /// Two-sided 3-dB bandwidth in units of 1/T.
    pub bandwidth: f64,
    pub order: u32,
    /// Impulse response length in symbol times.
    pub span: usize,
}

impl MuxFilterDesign {
    pub fn imux() -> Self {
        Self { bandwidth: IMUX_BANDWIDTH, order: 6, span: 32 }
    }

    pub fn omux() -> Self {
        Self { bandwidth: OMUX_BANDWIDTH, order: 4, span: 32 }
    }

    pub fn magnitude(&self, f: f64) -> f64 {
        let x = 2.0 * f / self.bandwidth;
        1.0 / (1.0 + x.powi(2 * self.order as i32)).sqrt()
    }

    /// Taps at `oversampling` samples per unit time with unit DC gain.
    pub fn taps(&self, oversampling: usize) -> Result<Vec<C64>> {
        if !(self.bandwidth > 0.0) || self.order == 0 || self.span == 0 || oversampling == 0 {
            return invalid("filter needs positive bandwidth, order, span and oversampling");
        }
        let os = oversampling as f64;
        let half = self.span * oversampling / 2;
        let fmax = (os / 2.0).min(20.0 * self.bandwidth);
        let steps = 4096;
        let df = fmax / steps as f64;
        let mag: Vec<f64> = (0..steps).map(|s| self.magnitude((s as f64 + 0.5) * df)).collect();
        let mut taps: Vec<C64> = (0..=2 * half)
            .map(|m| {
                let t = (m as f64 - half as f64) / os;
                let v: f64 =
                    mag.iter().enumerate().map(|(s, a)| a * (2.0 * PI * (s as f64 + 0.5) * df * t).cos()).sum();
                let w = kaiser(m as f64 - half as f64, half as f64, 5.0);
                C64::new(2.0 * v * df / os * w, 0.0)
            })
            .collect();
        let dc: C64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= dc);
        Ok(taps)
    }
}

/// Parses a filter tap file: `oversampling=<n>` header plus `re im` lines.
pub fn parse_filter_file(text: &str) -> Result<(usize, Vec<C64>)> {
    let mut os = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() != "oversampling" {
                return invalid(format!("line {}: unknown header '{}'", ln + 1, k.trim()));
            }
            let n = v
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("line {}: bad oversampling '{}'", ln + 1, v.trim())))?;
            os = Some(n);
        }
    }
    let Some(os) = os.filter(|&n| n > 0) else {
        return invalid("filter file needs an 'oversampling=<n>' header");
    };
    Ok((os, parse_taps(text)?))
}

pub fn format_filter_file(oversampling: usize, taps: &[C64]) -> String {
    format!("oversampling={oversampling}\n{}", crate::dsp::format_taps(taps))
}

/// Reads a tap file and checks it was designed for `oversampling`.
pub fn read_filter_file(path: &Path, oversampling: usize) -> Result<Vec<C64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let (os, taps) = parse_filter_file(&text)?;
    if os != oversampling {
        return invalid(format!("{}: taps are for oversampling {os}, system uses {oversampling}", path.display()));
    }
    Ok(taps)
}

/// Centered FIR filtering; output has the input length and no delay.
pub fn filter_centered(x: &[C64], taps: &[C64]) -> Vec<C64> {
    let c = (taps.len() - 1) / 2;
    let n = x.len() as i64;
    (0..n)
        .map(|i| {
            taps.iter()
                .enumerate()
                .filter_map(|(m, t)| {
                    let j = i + c as i64 - m as i64;
                    (0..n).contains(&j).then(|| t * x[j as usize])
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TransponderSpec {
    pub imux: Vec<C64>,
    pub omux: Vec<C64>,
    /// `None` runs the amplifier in linear mode.
    pub hpa: Option<SalehHpa>,
    pub oversampling: usize,
}

impl TransponderSpec {
    /// Default IMUX/OMUX designs with the Saleh amplifier at `ibo_db`.
    pub fn standard(oversampling: usize, ibo_db: f64) -> Result<Self> {
        Ok(Self {
            imux: MuxFilterDesign::imux().taps(oversampling)?,
            omux: MuxFilterDesign::omux().taps(oversampling)?,
            hpa: Some(SalehHpa::with_ibo(ibo_db)),
            oversampling,
        })
    }

    /// Filters only.
    pub fn linear(oversampling: usize) -> Result<Self> {
        Ok(Self { hpa: None, ..Self::standard(oversampling, 0.0)? })
    }

    pub fn passthrough(oversampling: usize, hpa: Option<SalehHpa>) -> Self {
        let one = vec![C64::new(1.0, 0.0)];
        Self { imux: one.clone(), omux: one, hpa, oversampling }
    }

    fn check(&self) -> Result<()> {
        if self.oversampling < MIN_OVERSAMPLING {
            return invalid(format!(
                "oversampling {} below {MIN_OVERSAMPLING}; spectral regrowth would alias",
                self.oversampling
            ));
        }
        for (name, t) in [("IMUX", &self.imux), ("OMUX", &self.omux)] {
            if t.is_empty() || t.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return invalid(format!("{name} taps must be non-empty and finite"));
            }
        }
        if let Some(h) = &self.hpa {
            h.check()?;
        }
        Ok(())
    }

    fn filter_len(&self) -> usize {
        self.imux.len() + self.omux.len()
    }
}

/// Transponder with its amplifier drive fixed by a calibration record.
#[derive(Clone, Debug)]
pub struct Transponder {
    spec: TransponderSpec,
    drive: f64,
}

impl Transponder {
    /// Sets the drive so the mean IMUX output power of `reference` sits `ibo_db` below saturation.
    pub fn calibrate(spec: TransponderSpec, reference: &[C64]) -> Result<Self> {
        spec.check()?;
        check_finite(reference, "transponder input")?;
        let drive = match &spec.hpa {
            None => 1.0,
            Some(h) => {
                let p = mean_power(&filter_centered(reference, &spec.imux));
                if !(p > 0.0) {
                    return invalid("calibration record has no power");
                }
                (h.saturation_input().powi(2) * db_to_lin(-h.ibo_db) / p).sqrt()
            }
        };
        Ok(Self { spec, drive })
    }

    pub fn spec(&self) -> &TransponderSpec {
        &self.spec
    }

    pub fn drive(&self) -> f64 {
        self.drive
    }

    pub fn oversampling(&self) -> usize {
        self.spec.oversampling
    }

    /// `P_sat`, or unit power in linear mode.
    pub fn saturation_power(&self) -> f64 {
        self.spec.hpa.map_or(1.0, |h| h.saturation_power())
    }

    pub fn process(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_finite(x, "transponder input")?;
        let mut u = filter_centered(x, &self.spec.imux);
        if let Some(h) = &self.spec.hpa {
            u.iter_mut().for_each(|v| *v = h.apply(*v * self.drive));
        }
        let out = filter_centered(&u, &self.spec.omux);
        check_finite(&out, "transponder output")?;
        Ok(out)
    }

    /// Output back-off of an OMUX output record in dB; `None` in linear mode.
    pub fn obo_db(&self, output: &[C64]) -> Option<f64> {
        self.spec.hpa.map(|h| lin_to_db(h.saturation_power() / mean_power(output)))
    }
}

#[derive(Clone, Debug)]
pub struct TransponderOutput {
    pub waveform: Vec<C64>,
    pub obo_db: Option<f64>,
    pub drive: f64,
}

/// IMUX, Saleh map at the configured IBO (drive set from this waveform), OMUX.
pub fn simulate_transponder(waveform: &[C64], spec: &TransponderSpec) -> Result<TransponderOutput> {
    let t = Transponder::calibrate(spec.clone(), waveform)?;
    let out = t.process(waveform)?;
    Ok(TransponderOutput { obo_db: t.obo_db(&out), drive: t.drive, waveform: out })
}

fn check_finite(x: &[C64], what: &str) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return invalid(format!("{what} has a non-finite sample at index {i}"));
    }
    Ok(())
}

/// Mean power over the central three quarters, away from record edges.
fn mean_power(x: &[C64]) -> f64 {
    let (lo, hi) = if x.len() >= 8 { (x.len() / 8, x.len() - x.len() / 8) } else { (0, x.len()) };
    x[lo..hi].iter().map(|v| v.norm_sqr()).sum::<f64>() / (hi - lo).max(1) as f64
}

/// Linear modulator with `pad` idle samples on both sides of the record.
#[derive(Clone, Debug)]
pub struct Modulator {
    pulse: PulseSamples,
    spacing: usize,
    pad: usize,
}

impl Modulator {
    pub fn new(pulse: PulseSamples, spacing: usize, pad: usize) -> Result<Self> {
        if spacing == 0 {
            return invalid("symbol spacing must be positive");
        }
        let pad = pad.max(pulse_reach(&pulse));
        Ok(Self { pulse, spacing, pad })
    }

    pub fn pulse(&self) -> &PulseSamples {
        &self.pulse
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn record_len(&self, symbols: usize) -> usize {
        2 * self.pad + symbols.saturating_sub(1) * self.spacing + 1
    }

    pub fn waveform(&self, symbols: &[C64]) -> Vec<C64> {
        let mut x = vec![C64::new(0.0, 0.0); self.record_len(symbols.len())];
        let (lo, hi) = self.pulse.offsets();
        for (k, c) in symbols.iter().enumerate() {
            let at = (self.pad + k * self.spacing) as i64;
            for o in lo..=hi {
                x[(at + o) as usize] += c * self.pulse.at_offset(o);
            }
        }
        x
    }
}

fn pulse_reach(p: &PulseSamples) -> usize {
    let (lo, hi) = p.offsets();
    lo.unsigned_abs().max(hi.unsigned_abs()) as usize
}

/// Modulator plus calibrated transponder.
#[derive(Clone, Debug)]
pub struct SatelliteChain {
    pub modulator: Modulator,
    pub transponder: Transponder,
    obo_db: Option<f64>,
}

const CALIBRATION_SYMBOLS: usize = 4096;

impl SatelliteChain {
    /// Calibrates the drive on a fixed random record of `constellation` symbols.
    pub fn new(spec: TransponderSpec, pulse: PulseSamples, tau: f64, constellation: &Constellation) -> Result<Self> {
        if pulse.oversampling() != spec.oversampling {
            return invalid("pulse and transponder oversampling differ");
        }
        if constellation.is_gaussian() {
            return invalid("satellite chain needs a finite constellation");
        }
        let spacing = spacing_samples(&pulse, tau)?;
        let pad = pulse_reach(&pulse) + spec.filter_len();
        let modulator = Modulator::new(pulse, spacing, pad)?;
        let mut rng = SeededRng::new(0x5a7e);
        let pts = constellation.points();
        let c: Vec<C64> = (0..CALIBRATION_SYMBOLS).map(|_| pts[rng.index(pts.len())]).collect();
        let x = modulator.waveform(&c);
        let transponder = Transponder::calibrate(spec, &x)?;
        let obo_db = transponder.obo_db(&transponder.process(&x)?);
        Ok(Self { modulator, transponder, obo_db })
    }

    /// OBO measured on the calibration record.
    pub fn obo_db(&self) -> Option<f64> {
        self.obo_db
    }

    pub fn oversampling(&self) -> usize {
        self.transponder.oversampling()
    }

    pub fn spacing(&self) -> usize {
        self.modulator.spacing
    }

    pub fn transmit(&self, symbols: &[C64]) -> Result<Vec<C64>> {
        self.transponder.process(&self.modulator.waveform(symbols))
    }
}

/// Kernels `h_0..h_{N_V-1}` of the simplified expansion, multiplying `c |c|^{2i}`.
#[derive(Clone, Debug)]
pub struct VolterraModel {
    order: usize,
    kernels: Vec<PulseSamples>,
    spacing: usize,
}

impl VolterraModel {
    pub fn new(order: usize, kernels: Vec<PulseSamples>, spacing: usize) -> Result<Self> {
        if order % 2 == 0 {
            return invalid(format!("Volterra order must be odd, got {order}"));
        }
        if kernels.len() != (order + 1) / 2 {
            return invalid(format!("order {order} needs {} kernels, got {}", (order + 1) / 2, kernels.len()));
        }
        let first = &kernels[0];
        if kernels.iter().any(|k| {
            k.oversampling() != first.oversampling()
                || k.center() != first.center()
                || k.samples().len() != first.samples().len()
        }) {
            return invalid("kernels must share oversampling and support");
        }
        if spacing == 0 {
            return invalid("symbol spacing must be positive");
        }
        Ok(Self { order, kernels, spacing })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[PulseSamples] {
        &self.kernels
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn oversampling(&self) -> usize {
        self.kernels[0].oversampling()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VolterraProbe {
    pub modulation: Modulation,
    pub symbols: usize,
    pub seed: u64,
    /// Ridge weight relative to the mean diagonal of the normal matrix.
    pub ridge: f64,
    /// Kernel support in symbols on each side of the center.
    pub window: usize,
}

impl Default for VolterraProbe {
    fn default() -> Self {
        Self { modulation: Modulation::Apsk16, symbols: 20_000, seed: 11, ridge: 1e-8, window: 16 }
    }
}

#[derive(Clone, Debug)]
pub struct VolterraFit {
    pub model: VolterraModel,
    /// Residual power relative to the output power, in dB.
    pub residual_db: f64,
    /// Model error `s - s_hat` on samples `pad + k d + q`, flattened over `k` then `q`.
    residual: Vec<C64>,
    symbols: usize,
}

impl VolterraFit {
    /// Variance of the model error at the output of a filter matched to `pulse`, sampled at symbol instants.
    pub fn matched_distortion(&self, pulse: &PulseSamples) -> f64 {
        let d = self.model.spacing;
        let os = self.model.oversampling() as f64;
        let n = self.residual.len() as i64;
        let (lo, hi) = pulse.offsets();
        let guard = self.model.kernels[0].center() / d + 1;
        let ks: Vec<usize> = (guard..self.symbols.saturating_sub(guard)).collect();
        if ks.is_empty() {
            return 0.0;
        }
        ks.iter()
            .map(|&k| {
                let at = (k * d) as i64;
                (lo..=hi)
                    .filter(|o| (0..n).contains(&(at + o)))
                    .map(|o| self.residual[(at + o) as usize] * pulse.at_offset(o).conj())
                    .sum::<C64>()
                    .norm_sqr()
                    / (os * os)
            })
            .sum::<f64>()
            / ks.len() as f64
    }
}

/// Least-squares fit of an order-`order` simplified expansion to the noise-free chain output.
///
/// Kernel samples at each phase `q` of the symbol interval are solved jointly over the
/// `2 window + 1` symbol offsets; the normal matrix is shared by all phases.
pub fn fit_volterra(order: usize, chain: &SatelliteChain, probe: &VolterraProbe) -> Result<VolterraFit> {
    if order % 2 == 0 || order > 9 {
        return invalid(format!("Volterra order must be odd and at most 9, got {order}"));
    }
    if probe.symbols < 4 * probe.window + 16 {
        return invalid("probe record too short for the kernel window");
    }
    let constellation = Constellation::new(probe.modulation);
    if constellation.is_gaussian() {
        return invalid("probe needs a finite constellation");
    }
    let terms = (order + 1) / 2;
    let (d, pad, k_win) = (chain.spacing(), chain.modulator.pad, probe.window as i64);
    let n = probe.symbols;
    let mut rng = SeededRng::substream(probe.seed, 0);
    let pts = constellation.points();
    let c: Vec<C64> = (0..n).map(|_| pts[rng.index(pts.len())]).collect();
    let s = chain.transmit(&c)?;

    let width = 2 * probe.window + 1;
    let p = terms * width;
    let lifted = |k: i64, i: usize| -> C64 {
        if (0..n as i64).contains(&k) {
            let v = c[k as usize];
            v * v.norm_sqr().powi(i as i32)
        } else {
            C64::new(0.0, 0.0)
        }
    };
    let z = DMatrix::from_fn(n, p, |k, col| {
        let (i, j) = (col / width, col % width);
        lifted(k as i64 - (j as i64 - k_win), i)
    });
    let targets = DMatrix::from_fn(n, d, |k, q| s[pad + k * d + q]);
    let zh = z.adjoint();
    let mut r = &zh * &z;
    let ridge = probe.ridge.max(0.0) * (r.trace().re / p as f64).max(f64::MIN_POSITIVE);
    for i in 0..p {
        r[(i, i)] += C64::new(ridge, 0.0);
    }
    let chol = cholesky_pd(&r)
        .ok_or_else(|| Error::Degenerate("Volterra normal matrix is ill-conditioned; increase the ridge".into()))?;
    let h = chol.solve(&(&zh * &targets));
    let err = &targets - &z * &h;
    let residual_db = lin_to_db(err.norm_squared() / targets.norm_squared().max(f64::MIN_POSITIVE));

    let os = chain.oversampling();
    let kernels = (0..terms)
        .map(|i| {
            let samples = (0..width * d).map(|m| h[(i * width + m / d, m % d)]).collect();
            PulseSamples::from_samples(samples, os, probe.window * d)
        })
        .collect::<Result<Vec<_>>>()?;
    let residual = (0..n * d).map(|m| err[(m / d, m % d)]).collect();
    Ok(VolterraFit { model: VolterraModel::new(order, kernels, d)?, residual_db, residual, symbols: n })
}

/// `h_bar = sum_i h_i`, the linear pulse seen by constant-modulus symbols.
pub fn psk_equivalent_pulse(model: &VolterraModel) -> PulseSamples {
    let k0 = &model.kernels[0];
    let samples = (0..k0.samples().len()).map(|m| model.kernels.iter().map(|k| k.samples()[m]).sum()).collect();
    PulseSamples::from_samples(samples, k0.oversampling(), k0.center()).expect("kernel support is valid")
}

/// `V = E[c c^H]` of the lifted vector `[c, c|c|^2, ..., c|c|^{2(terms-1)}]`.
#[derive(Clone, Debug)]
pub struct SymbolVectorStats {
    pub v: DMatrix<C64>,
}

impl SymbolVectorStats {
    pub fn new(constellation: &Constellation, terms: usize) -> Result<Self> {
        if constellation.is_gaussian() || terms == 0 {
            return invalid("symbol statistics need a finite constellation and at least one term");
        }
        let pts = constellation.points();
        let mut v = DMatrix::zeros(terms, terms);
        for p in pts {
            let lifted: Vec<C64> = (0..terms).map(|i| p * p.norm_sqr().powi(i as i32)).collect();
            for a in 0..terms {
                for b in 0..terms {
                    v[(a, b)] += lifted[a] * lifted[b].conj();
                }
            }
        }
        Ok(Self { v: v / C64::new(pts.len() as f64, 0.0) })
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.v.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Numerical rank at relative tolerance `1e-9`.
    pub fn rank(&self) -> usize {
        let e = self.eigenvalues();
        let top = e.last().copied().unwrap_or(0.0);
        e.iter().filter(|&&x| x > 1e-9 * top).count()
    }

    /// `V + eps * tr(V) / K * I`.
    pub fn regularized(&self, eps: f64) -> Self {
        let k = self.v.nrows();
        let add = eps * self.v.trace().re / k as f64;
        Self { v: &self.v + DMatrix::identity(k, k) * C64::new(add, 0.0) }
    }
}

/// Block matched-filter-bank model of an APSK signal and the lifted symbol statistics.
///
/// `(G_i)_{m,l} = integral h_l(t) conj(h_m(t - iT)) dt`. A rank-deficient `V` is rejected
/// unless `regularization > 0` loads its diagonal.
pub fn apsk_block_statistics(
    model: &VolterraModel,
    constellation: &Constellation,
    n0: f64,
    regularization: f64,
) -> Result<(BlockUngerboeckModel, SymbolVectorStats)> {
    if constellation.is_constant_modulus() {
        return invalid("constant-modulus constellation: the lifted vector is rank one; use psk_equivalent_pulse");
    }
    if model.terms() > 3 {
        return invalid("block statistics support orders up to 5");
    }
    let mut stats = SymbolVectorStats::new(constellation, model.terms())?;
    if regularization > 0.0 {
        stats = stats.regularized(regularization);
    }
    let rank = stats.rank();
    if rank < model.terms() {
        return invalid(format!(
            "symbol vector correlation has rank {rank} < {}: fit order at most {} or regularize",
            model.terms(),
            2 * rank - 1
        ));
    }
    let d = model.spacing as i64;
    let kn = model.terms();
    let hs = &model.kernels;
    let lag =
        |i: i64| DMatrix::from_fn(kn, kn, |m, l| cross_correlation(&hs[l], &hs[m], i * d, |_| C64::new(1.0, 0.0)));
    let g0 = lag(0);
    let scale = g0.norm().max(f64::MIN_POSITIVE);
    let max_lag = hs[0].samples().len() as i64 / d + 1;
    let mut lags = vec![g0];
    for i in 1..=max_lag {
        lags.push(lag(i));
    }
    while lags.len() > 1 && lags.last().unwrap().norm() < 1e-6 * scale {
        lags.pop();
    }
    let os = model.oversampling() as f64;
    let blocks: Vec<DMatrix<C64>> =
        (0..hs[0].samples().len()).map(|u| DMatrix::from_fn(1, kn, |_, m| hs[m].samples()[u] / os.sqrt())).collect();
    let bm = BlockUngerboeckModel::new(lags, n0)?.with_shaper(NoiseShaper::from_blocks(&blocks, model.spacing)?)?;
    let worst = bm
        .spectrum(256)
        .into_iter()
        .map(|g| {
            let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
            h.symmetric_eigen().eigenvalues.min()
        })
        .fold(f64::INFINITY, f64::min);
    if worst < -1e-6 * scale {
        return Err(Error::Degenerate(format!("block spectrum not PSD (min eigenvalue {worst:e})")));
    }
    Ok((bm, stats))
}

/// Chain output plus white receiver noise, observed through a bank of matched filters.
///
/// Symbols are lifted vectors of the bank's dimension; only the first entry drives the chain.
#[derive(Clone, Debug)]
pub struct SatelliteLink {
    chain: SatelliteChain,
    receive: Vec<PulseSamples>,
    n0: f64,
}

impl SatelliteLink {
    pub fn new(chain: SatelliteChain, receive: Vec<PulseSamples>, n0: f64) -> Result<Self> {
        if receive.is_empty() || receive.iter().any(|p| p.oversampling() != chain.oversampling()) {
            return invalid("receive filters must be non-empty and share the chain oversampling");
        }
        if !(n0 > 0.0) {
            return invalid("N0 must be positive");
        }
        Ok(Self { chain, receive, n0 })
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// Matched-filter outputs `(1/os) sum_n r[n] conj(h_m[n - pad - k d])`, interleaved per symbol.
    pub fn matched_outputs(&self, r: &[C64], symbols: usize) -> Vec<C64> {
        let (d, pad) = (self.chain.spacing(), self.chain.modulator.pad);
        let os = self.chain.oversampling() as f64;
        let len = r.len() as i64;
        let mut out = Vec::with_capacity(symbols * self.receive.len());
        for k in 0..symbols {
            let at = (pad + k * d) as i64;
            for h in &self.receive {
                let (lo, hi) = h.offsets();
                let s: C64 =
                    (lo.max(-at)..=hi.min(len - 1 - at)).map(|o| r[(at + o) as usize] * h.at_offset(o).conj()).sum();
                out.push(s / os);
            }
        }
        out
    }
}

impl ChannelSimulator for SatelliteLink {
    fn symbol_dim(&self) -> usize {
        self.receive.len()
    }

    fn simulate(&self, symbols: &[C64], rng: &mut SeededRng) -> Vec<C64> {
        let dim = self.receive.len();
        let n = symbols.len() / dim;
        let c: Vec<C64> = symbols.iter().step_by(dim).copied().collect();
        let mut r = self.chain.transmit(&c).expect("finite symbols give a finite waveform");
        let var = self.n0 * self.chain.oversampling() as f64;
        r.iter_mut().for_each(|v| *v += rng.complex_gaussian(var));
        self.matched_outputs(&r, n)
    }
}

/// `N0` for a given `P_sat / (N0 F)` in dB.
pub fn n0_from_psat(psat: f64, psat_n0_db: f64, bandwidth: f64) -> f64 {
    psat / (db_to_lin(psat_n0_db) * bandwidth)
}

/// Scalar receiver for PSK on the satellite channel: matched filter to `h_bar`.
#[derive(Clone, Debug)]
pub struct PskReceiver {
    pub pulse: PulseSamples,
    pub g: AutocorrTaps,
    /// Variance of the model error at the matched-filter output.
    pub distortion: f64,
}

impl PskReceiver {
    pub fn new(fit: &VolterraFit) -> Result<Self> {
        let pulse = psk_equivalent_pulse(&fit.model);
        let g = pulse_autocorrelation(&pulse, fit.model.spacing)?;
        let distortion = fit.matched_distortion(&pulse);
        Ok(Self { pulse, g, distortion })
    }

    /// Noise level the detector is designed for: `N0` plus model distortion referred to the input.
    pub fn design_n0(&self, n0: f64) -> f64 {
        n0 + self.distortion / self.g.at(0).re
    }

    pub fn law(&self, kind: ShortenerKind, memory: usize, n0: f64, noise_scale: f64) -> Result<MismatchedLaw> {
        if !(noise_scale > 0.0) {
            return invalid("noise scale must be positive");
        }
        let n = self.design_n0(n0) * noise_scale;
        match kind {
            ShortenerKind::Cs => design_scalar_cs(&folded_spectrum(&self.g, DEFAULT_GRID)?, n, memory)?
                .law_for_matched_filter(DEFAULT_FRONT_END_LAGS),
            ShortenerKind::Truncation => truncation_law(&self.g, n, memory, 1.0),
            ShortenerKind::MmseLegacy => invalid("the satellite receiver supports cs and truncation"),
        }
    }
}

/// Block receiver for APSK: matched-filter bank on all kernels.
#[derive(Clone, Debug)]
pub struct ApskReceiver {
    pub model: BlockUngerboeckModel,
    pub stats: SymbolVectorStats,
    pub distortion: f64,
}

impl ApskReceiver {
    pub fn new(fit: &VolterraFit, constellation: &Constellation, regularization: f64) -> Result<Self> {
        let (model, stats) = apsk_block_statistics(&fit.model, constellation, 1.0, regularization)?;
        let distortion = fit.matched_distortion(&fit.model.kernels[0]);
        Ok(Self { model, stats, distortion })
    }

    pub fn design_n0(&self, n0: f64) -> f64 {
        n0 + self.distortion / self.model.lags()[0][(0, 0)].re
    }

    pub fn law(&self, kind: ShortenerKind, memory: usize, n0: f64, noise_scale: f64) -> Result<MismatchedLaw> {
        if !(noise_scale > 0.0) {
            return invalid("noise scale must be positive");
        }
        let n = self.design_n0(n0) * noise_scale;
        match kind {
            ShortenerKind::Cs => design_block_cs(&self.model.spectrum(DEFAULT_GRID), &self.stats.v, n, memory)?
                .law_for_matched_filter(DEFAULT_FRONT_END_LAGS),
            ShortenerKind::Truncation => {
                let s = C64::new(1.0 / n, 0.0);
                let target = (0..=memory as i64).map(|i| self.model.at(i) * s).collect();
                MismatchedLaw::new(FrontEnd::identity(self.model.dim(), 1.0 / n), target)
            }
            ShortenerKind::MmseLegacy => invalid("the satellite receiver supports cs and truncation"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SatelliteConfig {
    pub modulation: Modulation,
    pub rolloff: f64,
    pub span: usize,
    pub oversampling: usize,
    pub ibo_db: f64,
    pub imux: MuxFilterDesign,
    pub omux: MuxFilterDesign,
    /// Replaces the designed filters when set.
    pub imux_taps: Option<Vec<C64>>,
    pub omux_taps: Option<Vec<C64>>,
    pub order: usize,
    pub probe: VolterraProbe,
    /// Diagonal loading of `V` for APSK; zero rejects a rank-deficient `V`.
    pub regularization: f64,
    pub psat_n0_db: Vec<f64>,
    pub detectors: Vec<ShortenerKind>,
    pub memories: Vec<usize>,
    pub noise_scales: Vec<f64>,
    pub air: AirConfig,
}

impl Default for SatelliteConfig {
    fn default() -> Self {
        Self {
            modulation: Modulation::Psk8,
            rolloff: 0.05,
            span: 32,
            oversampling: 8,
            ibo_db: 0.0,
            imux: MuxFilterDesign::imux(),
            omux: MuxFilterDesign::omux(),
            imux_taps: None,
            omux_taps: None,
            order: 5,
            probe: VolterraProbe { modulation: Modulation::Psk8, ..VolterraProbe::default() },
            regularization: 0.0,
            psat_n0_db: vec![6.0, 10.0],
            detectors: vec![ShortenerKind::Cs, ShortenerKind::Truncation],
            memories: vec![1, 2],
            noise_scales: vec![1.0],
            air: AirConfig::new(10_000, 10, 7),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SatellitePoint {
    pub psat_n0_db: f64,
    pub detector: ShortenerKind,
    pub memory: usize,
    pub noise_scale: f64,
    pub air: AirEstimate,
}

#[derive(Clone, Debug)]
pub struct SatelliteRun {
    pub obo_db: Option<f64>,
    pub residual_db: f64,
    pub points: Vec<SatellitePoint>,
}

impl SatelliteRun {
    /// Best estimate over noise scales for one detector, memory and SNR.
    pub fn best(&self, detector: ShortenerKind, memory: usize, psat_n0_db: f64) -> Option<&SatellitePoint> {
        self.points
            .iter()
            .filter(|p| p.detector == detector && p.memory == memory && (p.psat_n0_db - psat_n0_db).abs() < 1e-9)
            .max_by(|a, b| a.air.value.total_cmp(&b.air.value))
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("psat_n0_db,detector,L,noise_scale,air,se\n");
        for p in &self.points {
            let name = match p.detector {
                ShortenerKind::Cs => "cs",
                ShortenerKind::Truncation => "trunc",
                ShortenerKind::MmseLegacy => "mmse-legacy",
            };
            s.push_str(&format!(
                "{},{name},{},{},{:.6},{:.6}\n",
                p.psat_n0_db, p.memory, p.noise_scale, p.air.value, p.air.std_error
            ));
        }
        s
    }
}

impl SatelliteConfig {
    pub fn transponder_spec(&self) -> Result<TransponderSpec> {
        let os = self.oversampling;
        Ok(TransponderSpec {
            imux: match &self.imux_taps {
                Some(t) => t.clone(),
                None => self.imux.taps(os)?,
            },
            omux: match &self.omux_taps {
                Some(t) => t.clone(),
                None => self.omux.taps(os)?,
            },
            hpa: Some(SalehHpa::with_ibo(self.ibo_db)),
            oversampling: os,
        })
    }

    pub fn chain(&self) -> Result<SatelliteChain> {
        let pulse = PulseSamples::rrc(self.rolloff, self.span, self.oversampling)?;
        SatelliteChain::new(self.transponder_spec()?, pulse, 1.0, &Constellation::new(self.modulation))
    }
}

/// Fits the receiver model, then estimates the AIR of every detector, memory, noise scale and SNR.
pub fn satellite_air(cfg: &SatelliteConfig) -> Result<SatelliteRun> {
    let constellation = Constellation::new(cfg.modulation);
    let chain = cfg.chain()?;
    let probe = VolterraProbe { modulation: cfg.modulation, ..cfg.probe };
    let fit = fit_volterra(cfg.order, &chain, &probe)?;
    let bandwidth = 1.0 + cfg.rolloff;
    let psat = chain.transponder.saturation_power();
    let psk = constellation.is_constant_modulus();
    let (psk_rx, apsk_rx) = if psk {
        (Some(PskReceiver::new(&fit)?), None)
    } else {
        (None, Some(ApskReceiver::new(&fit, &constellation, cfg.regularization)?))
    };
    let receive = match &psk_rx {
        Some(rx) => vec![rx.pulse.clone()],
        None => fit.model.kernels.clone(),
    };
    let alphabet =
        if psk { Alphabet::scalar(&constellation)? } else { Alphabet::lifted(&constellation, fit.model.terms())? };
    let mut points = Vec::new();
    // detectors at one SNR share noise and symbol streams so their differences are paired
    for (job, &snr) in cfg.psat_n0_db.iter().enumerate() {
        let n0 = n0_from_psat(psat, snr, bandwidth);
        let link = SatelliteLink::new(chain.clone(), receive.clone(), n0)?;
        for &detector in &cfg.detectors {
            for &memory in &cfg.memories {
                for &noise_scale in &cfg.noise_scales {
                    let law = match (&psk_rx, &apsk_rx) {
                        (Some(rx), _) => rx.law(detector, memory, n0, noise_scale)?,
                        (_, Some(rx)) => rx.law(detector, memory, n0, noise_scale)?,
                        _ => unreachable!(),
                    };
                    let air = mc_air_trellis(&link, &DetectionLaw::from(law), &alphabet, &cfg.air.for_job(job as u64))?;
                    points.push(SatellitePoint { psat_n0_db: snr, detector, memory, noise_scale, air });
                }
            }
        }
    }
    Ok(SatelliteRun { obo_db: chain.obo_db(), residual_db: fit.residual_db, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::convolve;
    use proptest::prelude::*;

    fn chain(os: usize, spec: TransponderSpec, m: Modulation) -> SatelliteChain {
        let p = PulseSamples::rrc(0.05, 32, os).unwrap();
        SatelliteChain::new(spec, p, 1.0, &Constellation::new(m)).unwrap()
    }

    fn small_probe(m: Modulation) -> VolterraProbe {
        VolterraProbe { modulation: m, symbols: 4000, window: 12, ..VolterraProbe::default() }
    }

    #[test]
    fn saleh_peak_closed_form() {
        let h = SalehHpa::default();
        let r = h.saturation_input();
        assert!((h.am_am(r) - 2.1322 / (2.0 * 1.0746f64.sqrt())).abs() < 1e-12);
        assert_eq!(h.am_am(0.0), 0.0);
        assert!(h.am_am(r * 0.99) < h.am_am(r) && h.am_am(r * 1.01) < h.am_am(r));
    }

    proptest! {
        #[test]
        fn saleh_single_maximum(aa in 0.5f64..4.0, ba in 0.2f64..3.0, x in 0.01f64..5.0) {
            let h = SalehHpa { alpha_a: aa, beta_a: ba, ..SalehHpa::default() };
            let r = h.saturation_input();
            prop_assert!((h.am_am(r) - aa / (2.0 * ba.sqrt())).abs() < 1e-12);
            prop_assert!(h.am_am(x) <= h.am_am(r) + 1e-12);
            let step = 1e-3;
            if x + step < r {
                prop_assert!(h.am_am(x + step) > h.am_am(x));
            } else if x > r {
                prop_assert!(h.am_am(x + step) < h.am_am(x));
            }
        }
    }

    #[test]
    fn linear_passthrough_is_identity() {
        let spec = TransponderSpec::passthrough(8, None);
        let x: Vec<C64> = (0..64).map(|i| C64::new((i as f64).sin(), (0.3 * i as f64).cos())).collect();
        let out = simulate_transponder(&x, &spec).unwrap();
        assert_eq!(out.waveform, x);
        assert!(out.obo_db.is_none());
    }

    #[test]
    fn cw_at_saturation_gives_psat() {
        let h = SalehHpa::with_ibo(0.0);
        let spec = TransponderSpec::passthrough(8, Some(h));
        let x = vec![C64::from_polar(0.37, 0.4); 256];
        let out = simulate_transponder(&x, &spec).unwrap();
        assert!((out.drive * 0.37 - h.saturation_input()).abs() < 1e-12);
        let p = out.waveform.iter().map(|v| v.norm_sqr()).sum::<f64>() / 256.0;
        assert!((p - h.saturation_power()).abs() < 1e-12);
        assert!(out.obo_db.unwrap().abs() < 1e-10);
    }

    #[test]
    fn rejects_low_oversampling_and_nan() {
        assert!(simulate_transponder(&[C64::new(1.0, 0.0)], &TransponderSpec::passthrough(4, None)).is_err());
        let spec = TransponderSpec::passthrough(8, Some(SalehHpa::default()));
        let t = Transponder::calibrate(spec, &[C64::new(1.0, 0.0); 8]).unwrap();
        assert!(t.process(&[C64::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn filter_three_db_points() {
        for (d, os) in [(MuxFilterDesign::imux(), 8), (MuxFilterDesign::omux(), 16)] {
            let taps = d.taps(os).unwrap();
            let c = (taps.len() - 1) as f64 / 2.0;
            let gain = |f: f64| {
                taps.iter()
                    .enumerate()
                    .map(|(m, t)| t * C64::from_polar(1.0, -2.0 * PI * f * (m as f64 - c) / os as f64))
                    .sum::<C64>()
                    .norm_sqr()
            };
            assert!((gain(0.0) - 1.0).abs() < 1e-12);
            assert!((gain(d.bandwidth / 2.0) - 0.5).abs() < 0.02, "{}", gain(d.bandwidth / 2.0));
            assert!(gain(d.bandwidth) < 0.1);
        }
    }

    #[test]
    fn filter_file_round_trip() {
        let taps = MuxFilterDesign::omux().taps(8).unwrap();
        let (os, back) = parse_filter_file(&format_filter_file(8, &taps)).unwrap();
        assert_eq!(os, 8);
        assert_eq!(back, taps);
        assert!(parse_filter_file("1 0\n").is_err());
        assert!(parse_filter_file("oversampling=x\n1 0\n").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imux.txt");
        std::fs::write(&path, format_filter_file(16, &taps)).unwrap();
        assert!(read_filter_file(&path, 8).is_err());
        assert_eq!(read_filter_file(&path, 16).unwrap().len(), taps.len());
    }

    #[test]
    fn modulated_signal_has_positive_obo() {
        let c = chain(8, TransponderSpec::standard(8, 0.0).unwrap(), Modulation::Psk8);
        let obo = c.obo_db().unwrap();
        assert!(obo > 0.0 && obo < 3.0, "{obo}");
    }

    #[test]
    fn obo_independent_of_oversampling() {
        let mut rng = SeededRng::new(3);
        let pts = Constellation::new(Modulation::Psk8);
        let sym: Vec<C64> = (0..3000).map(|_| pts.points()[rng.index(8)]).collect();
        let obo: Vec<f64> = [8, 16]
            .iter()
            .map(|&os| {
                let p = PulseSamples::rrc(0.05, 32, os).unwrap();
                let m = Modulator::new(p, os, 0).unwrap();
                let out =
                    simulate_transponder(&m.waveform(&sym), &TransponderSpec::standard(os, 0.0).unwrap()).unwrap();
                out.obo_db.unwrap()
            })
            .collect();
        assert!((obo[0] - obo[1]).abs() < 0.05, "{obo:?}");
    }

    #[test]
    fn linear_fit_recovers_cascade() {
        let os = 8;
        let c = chain(os, TransponderSpec::linear(os).unwrap(), Modulation::Apsk16);
        let fit = fit_volterra(3, &c, &small_probe(Modulation::Apsk16)).unwrap();
        let spec = c.transponder.spec();
        let pulse = c.modulator.pulse().samples();
        let cascade = convolve(&convolve(pulse, &spec.imux), &spec.omux);
        let center = c.modulator.pulse().center() + (spec.imux.len() - 1) / 2 + (spec.omux.len() - 1) / 2;
        let h1 = &fit.model.kernels()[0];
        let (lo, hi) = h1.offsets();
        let mut err = 0.0;
        let mut norm = 0.0;
        for o in lo..=hi {
            let want = cascade[(center as i64 + o) as usize];
            err += (h1.at_offset(o) - want).norm_sqr();
            norm += want.norm_sqr();
        }
        assert!(err / norm < 1e-3, "{}", err / norm);
        let e3 = fit.model.kernels()[1].energy();
        assert!(e3 < 1e-4 * h1.energy(), "{e3}");
        assert!(fit.residual_db < -25.0, "{}", fit.residual_db);
    }

    #[test]
    fn saleh_fit_residual_small_and_monotone() {
        let os = 8;
        let c = chain(os, TransponderSpec::standard(os, 0.0).unwrap(), Modulation::Qpsk);
        let q = fit_volterra(5, &c, &small_probe(Modulation::Qpsk)).unwrap();
        // the simplified expansion leaves about -16 dB of intermodulation at saturation
        assert!(q.residual_db < -15.0, "{}", q.residual_db);
        let backed_off = chain(os, TransponderSpec::standard(os, 6.0).unwrap(), Modulation::Qpsk);
        let q6 = fit_volterra(5, &backed_off, &small_probe(Modulation::Qpsk)).unwrap();
        assert!(q6.residual_db < -20.0, "{}", q6.residual_db);
        let r: Vec<f64> = [1, 3, 5]
            .iter()
            .map(|&v| fit_volterra(v, &c, &small_probe(Modulation::Apsk16)).unwrap().residual_db)
            .collect();
        assert!(r[1] <= r[0] + 1e-9 && r[2] <= r[1] + 1e-9, "{r:?}");
    }

    #[test]
    fn psk_pulse_is_kernel_sum() {
        let k: Vec<PulseSamples> =
            (0..3).map(|i| PulseSamples::from_samples(vec![C64::new(i as f64, 1.0); 5], 8, 2).unwrap()).collect();
        let m = VolterraModel::new(5, k.clone(), 8).unwrap();
        let h = psk_equivalent_pulse(&m);
        assert!(h.samples().iter().all(|v| *v == C64::new(3.0, 3.0)));
        let lin = VolterraModel::new(1, vec![k[1].clone()], 8).unwrap();
        assert_eq!(psk_equivalent_pulse(&lin), k[1]);
        assert!(VolterraModel::new(4, k.clone(), 8).is_err());
        assert!(VolterraModel::new(3, k, 8).is_err());
    }

    #[test]
    fn symbol_vector_stats_by_finite_sum() {
        let c = Constellation::new(Modulation::Apsk16);
        let s = SymbolVectorStats::new(&c, 2).unwrap();
        let moment = |k: i32| c.points().iter().map(|p| p.norm_sqr().powi(k)).sum::<f64>() / 16.0;
        let oracle = [[moment(1), moment(2)], [moment(2), moment(3)]];
        for a in 0..2 {
            for b in 0..2 {
                assert!((s.v[(a, b)] - C64::new(oracle[a][b], 0.0)).norm() < 1e-12);
            }
        }
        assert_eq!(s.rank(), 2);
        // two rings span only two directions of the three-term lifted vector
        assert_eq!(SymbolVectorStats::new(&c, 3).unwrap().rank(), 2);
        assert_eq!(SymbolVectorStats::new(&Constellation::new(Modulation::Apsk32), 3).unwrap().rank(), 3);
        assert_eq!(SymbolVectorStats::new(&Constellation::new(Modulation::Psk8), 3).unwrap().rank(), 1);
    }

    fn toy_model(terms: usize, nonlinear: bool) -> VolterraModel {
        let os = 8;
        let base = PulseSamples::rrc(0.3, 8, os).unwrap();
        let kernels = (0..terms)
            .map(|i| {
                let s = base
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(m, v)| match (i, nonlinear) {
                        (0, _) => *v,
                        (_, false) => C64::new(0.0, 0.0),
                        _ => v * C64::new(0.1 / i as f64, 0.05) * (1.0 + 0.01 * m as f64),
                    })
                    .collect();
                PulseSamples::from_samples(s, os, base.center()).unwrap()
            })
            .collect();
        VolterraModel::new(2 * terms - 1, kernels, os).unwrap()
    }

    #[test]
    fn apsk_statistics_dispatch() {
        let m = toy_model(3, true);
        let err = apsk_block_statistics(&m, &Constellation::new(Modulation::Psk8), 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains("psk_equivalent_pulse"));
        assert!(apsk_block_statistics(&m, &Constellation::new(Modulation::Apsk16), 0.1, 0.0).is_err());
        assert!(apsk_block_statistics(&m, &Constellation::new(Modulation::Apsk16), 0.1, 1e-3).is_ok());
        assert!(apsk_block_statistics(&m, &Constellation::new(Modulation::Apsk32), 0.1, 0.0).is_ok());
    }

    #[test]
    fn linear_kernels_collapse_to_scalar() {
        let m = toy_model(2, false);
        let (bm, _) = apsk_block_statistics(&m, &Constellation::new(Modulation::Apsk16), 0.1, 0.0).unwrap();
        let g = pulse_autocorrelation(&m.kernels()[0], m.spacing()).unwrap();
        for (i, lag) in bm.lags().iter().enumerate() {
            assert!((lag[(0, 0)] - g.at(i as i64)).norm() < 1e-12);
            for (r, c) in [(0, 1), (1, 0), (1, 1)] {
                assert_eq!(lag[(r, c)], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn block_shaper_covariance_matches_g0() {
        let m = toy_model(2, true);
        let (bm, _) = apsk_block_statistics(&m, &Constellation::new(Modulation::Apsk16), 0.1, 0.0).unwrap();
        let os = m.oversampling() as f64;
        let mut cov = DMatrix::<C64>::zeros(2, 2);
        let hs = m.kernels();
        for u in 0..hs[0].samples().len() {
            for a in 0..2 {
                for b in 0..2 {
                    cov[(a, b)] += hs[a].samples()[u].conj() * hs[b].samples()[u] / os;
                }
            }
        }
        assert!((cov - bm.at(0)).norm() < 1e-12);
        assert!((bm.at(-1) - bm.at(1).adjoint()).norm() < 1e-15);
    }

    #[test]
    fn block_cs_rate_monotone_in_memory() {
        let m = toy_model(2, true);
        let c = Constellation::new(Modulation::Apsk16);
        let (bm, stats) = apsk_block_statistics(&m, &c, 0.2, 0.0).unwrap();
        let spec = bm.spectrum(1024);
        let rates: Vec<f64> = (0..=2).map(|l| design_block_cs(&spec, &stats.v, 0.2, l).unwrap().i_opt).collect();
        assert!(rates[0] <= rates[1] + 1e-9 && rates[1] <= rates[2] + 1e-9, "{rates:?}");
    }

    #[test]
    fn link_mf_outputs_follow_model_without_noise() {
        let os = 8;
        let c = chain(os, TransponderSpec::linear(os).unwrap(), Modulation::Psk8);
        let fit = fit_volterra(1, &c, &small_probe(Modulation::Psk8)).unwrap();
        let rx = PskReceiver::new(&fit).unwrap();
        let link = SatelliteLink::new(c.clone(), vec![rx.pulse.clone()], 1e-12).unwrap();
        let pts = Constellation::new(Modulation::Psk8);
        let mut rng = SeededRng::new(5);
        let sym: Vec<C64> = (0..400).map(|_| pts.points()[rng.index(8)]).collect();
        let y = link.matched_outputs(&c.transmit(&sym).unwrap(), sym.len());
        let want = rx.g.apply(&sym);
        let (mut e, mut p) = (0.0, 0.0);
        for k in 40..360 {
            e += (y[k] - want[k]).norm_sqr();
            p += want[k].norm_sqr();
        }
        assert!(e / p < 1e-3, "{}", e / p);
        assert!(rx.design_n0(0.1) >= 0.1);
    }
}
