//! Time and time-frequency packing: packed-signal simulation, the single-user
//! detector menu, grid search of the spectral efficiency and the E_b/N0 fixed point.
//!
//! Times are in units of the reference symbol time `T_B` (the pulse's own
//! symbol time) and frequencies in units of `1/T_B`. A point `(tau, nu)` sends
//! symbols every `tau` on carriers spaced by `nu`, so `eta = I / (tau nu)`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::air::{
    ase, awgn_mi, interference_budget, mc_air_iq_rails, mc_air_trellis, monte_carlo_blocks, sbs_air, AirConfig,
    AirEstimate, DetectorKind,
};
use crate::detector::{Alphabet, FrontEnd, MismatchedLaw};
use crate::dsp::{
    cholesky_pd, convolve, cross_correlation, rc_spectrum, rrc_value, AutocorrTaps, ChannelTaps, Constellation,
    Modulation, PulseSamples, SeededRng, DEFAULT_GRID,
};
use crate::error::{invalid, Error, Result};
use crate::obs::{
    fdm_rotation, folded_spectrum, pulse_autocorrelation, spacing_samples, spectral_factorize, ChannelSimulator,
    NoiseShaper,
};
use crate::optim::{bisect, CubicSpline};
use crate::shortening::{design_scalar_cs, realize_front_end, truncation_law, DEFAULT_FRONT_END_LAGS};
use crate::txfilter::{ideal_band_power, interpolate_spectrum, optimize_transmit_filter, realize_pulse, TxOptions};
use crate::{db_to_lin, lin_to_db, C64};

pub const MAX_EQUALIZER_TAPS: usize = 22;

/// Matched-filter outputs of the central carrier of a packed multicarrier signal.
///
/// Output sample `k * phases + p` is the matched filter at time `k tau + p tau / phases`.
/// Neighbour carriers `l = -J..J, l != 0` carry i.i.d. uniform symbols from `points`.
#[derive(Clone, Debug)]
pub struct PackedSignal {
    pulse: PulseSamples,
    tau: f64,
    spacing: usize,
    phases: usize,
    freq_spacing: f64,
    neighbors: usize,
    points: Vec<C64>,
    n0: f64,
    reach: i64,
    /// `tables[l + J][p][n + reach]`.
    tables: Vec<Vec<Vec<C64>>>,
    shaper: NoiseShaper,
}

impl PackedSignal {
    pub fn new(
        pulse: &PulseSamples,
        tau: f64,
        freq_spacing: f64,
        neighbors: usize,
        points: &[C64],
        n0: f64,
    ) -> Result<Self> {
        Self::with_phases(pulse, tau, freq_spacing, neighbors, points, n0, 1)
    }

    pub fn with_phases(
        pulse: &PulseSamples,
        tau: f64,
        freq_spacing: f64,
        neighbors: usize,
        points: &[C64],
        n0: f64,
        phases: usize,
    ) -> Result<Self> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return invalid(format!("N0 must be positive, got {n0}"));
        }
        if !(freq_spacing > 0.0) {
            return invalid("carrier spacing must be positive");
        }
        if neighbors > 0 && points.is_empty() {
            return invalid("neighbour carriers need a constellation");
        }
        let spacing = spacing_samples(pulse, tau)?;
        if phases == 0 || spacing % phases != 0 {
            return invalid(format!("{phases} output phases do not divide {spacing} samples per symbol"));
        }
        let sub = (spacing / phases) as i64;
        let reach = pulse.samples().len() as i64 / spacing as i64 + 2;
        let j = neighbors as i64;
        let tables = (-j..=j)
            .map(|l| {
                let w = std::f64::consts::TAU * l as f64 * freq_spacing;
                (0..phases as i64)
                    .map(|p| {
                        (-reach..=reach)
                            .map(|n| {
                                cross_correlation(pulse, pulse, n * spacing as i64 + p * sub, |t| {
                                    C64::from_polar(1.0, w * t)
                                })
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let s = (pulse.oversampling() as f64).sqrt();
        let shaper = NoiseShaper::scalar(pulse.samples().iter().map(|v| v / s).collect(), sub as usize);
        Ok(Self {
            pulse: pulse.clone(),
            tau,
            spacing,
            phases,
            freq_spacing,
            neighbors,
            points: points.to_vec(),
            n0,
            reach,
            tables,
            shaper,
        })
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn pulse(&self) -> &PulseSamples {
        &self.pulse
    }

    /// Coefficient from carrier `l`, symbol lag `n`, output phase `p`.
    pub fn coefficient(&self, l: i64, p: usize, n: i64) -> C64 {
        if l.unsigned_abs() as usize > self.neighbors || n.abs() > self.reach {
            return C64::new(0.0, 0.0);
        }
        self.tables[(l + self.neighbors as i64) as usize][p][(n + self.reach) as usize]
    }

    /// Coefficient at a signed sub-symbol offset `s` (units of `tau / phases`).
    fn coefficient_at(&self, l: i64, s: i64) -> C64 {
        let ph = self.phases as i64;
        self.coefficient(l, s.rem_euclid(ph) as usize, s.div_euclid(ph))
    }

    /// Own-carrier ISI taps `g_n` at symbol spacing.
    pub fn autocorrelation(&self) -> Result<AutocorrTaps> {
        pulse_autocorrelation(&self.pulse, self.spacing)
    }

    fn es(&self) -> f64 {
        if self.points.is_empty() {
            1.0
        } else {
            self.points.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.points.len() as f64
        }
    }

    /// Adjacent-carrier power at a symbol-instant output.
    pub fn interference_power(&self) -> Result<f64> {
        if self.neighbors == 0 {
            return Ok(0.0);
        }
        let b = interference_budget(
            &self.pulse,
            self.tau,
            self.freq_spacing,
            2 * self.neighbors + 1,
            DetectorKind::Trellis(self.reach as usize),
            self.es(),
        )?;
        Ok(b.ni)
    }

    /// Everything a symbol-by-symbol detector does not model.
    pub fn sbs_interference_power(&self) -> Result<f64> {
        Ok(interference_budget(
            &self.pulse,
            self.tau,
            self.freq_spacing,
            2 * self.neighbors + 1,
            DetectorKind::SymbolBySymbol,
            self.es(),
        )?
        .ni)
    }
}

impl ChannelSimulator for PackedSignal {
    fn simulate(&self, symbols: &[C64], rng: &mut SeededRng) -> Vec<C64> {
        let n = symbols.len() as i64;
        let ph = self.phases;
        let j = self.neighbors as i64;
        let reach = self.reach;
        let others: Vec<(i64, Vec<C64>)> = (-j..=j)
            .filter(|&l| l != 0)
            .map(|l| {
                let seq = (-reach..n + reach)
                    .map(|m| {
                        let c = self.points[rng.index(self.points.len())];
                        c * fdm_rotation(&[l as f64 * self.freq_spacing], self.tau, m)[0]
                    })
                    .collect();
                (l, seq)
            })
            .collect();
        let mut y = self.shaper.sample(symbols.len() * ph, self.n0, rng);
        for k in 0..n {
            for p in 0..ph {
                let out = &mut y[(k as usize) * ph + p];
                let own = &self.tables[j as usize][p];
                for m in (k - reach).max(0)..=(k + reach).min(n - 1) {
                    *out += own[(k - m + reach) as usize] * symbols[m as usize];
                }
                for (l, seq) in &others {
                    let tab = &self.tables[(l + j) as usize][p];
                    for m in k - reach..=k + reach {
                        *out += tab[(k - m + reach) as usize] * seq[(m + reach) as usize];
                    }
                }
            }
        }
        y
    }
}

/// Wiener equalizer on matched-filter samples: `z_k = sum_j conj(w_j) y[k * phases + first + j]`.
#[derive(Clone, Debug)]
pub struct MmseEqualizer {
    pub taps: Vec<C64>,
    pub first: i64,
    pub oversampling: usize,
    pub mse: f64,
    /// `E[z_k conj(c_k)] / E|c|^2`.
    pub gain: f64,
}

impl MmseEqualizer {
    pub fn apply(&self, y: &[C64], n: usize) -> Vec<C64> {
        let len = y.len() as i64;
        (0..n as i64)
            .map(|k| {
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(j, w)| {
                        let i = k * self.oversampling as i64 + self.first + j as i64;
                        if (0..len).contains(&i) {
                            w.conj() * y[i as usize]
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// Variance of `z_k - gain c_k`.
    pub fn residual_variance(&self, es: f64) -> f64 {
        let q = es * self.gain;
        (q - q * q / es).max(1e-300)
    }
}

/// Wiener solution with the decision delay chosen for minimum MSE.
pub fn design_mmse_equalizer(signal: &PackedSignal, taps: usize) -> Result<MmseEqualizer> {
    if taps == 0 || taps > MAX_EQUALIZER_TAPS {
        return invalid(format!("equalizer needs 1..={MAX_EQUALIZER_TAPS} taps, got {taps}"));
    }
    let es = signal.es();
    let ph = signal.phases as i64;
    let j = signal.neighbors as i64;
    let span = (signal.reach + 1) * ph;
    let cache: RefCell<HashMap<(i64, i64), C64>> = RefCell::new(HashMap::new());
    let coef = |l: i64, s: i64| *cache.borrow_mut().entry((l, s)).or_insert_with(|| signal.coefficient_at(l, s));
    // Covariance of samples at sub-symbol offsets a, b.
    let cov = |a: i64, b: i64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for l in -j..=j {
            let mlo = (a.min(b) - span).div_euclid(ph);
            let mhi = (a.max(b) + span).div_euclid(ph) + 1;
            for m in mlo..=mhi {
                acc += coef(l, a - m * ph) * coef(l, b - m * ph).conj();
            }
        }
        acc * es + coef(0, a - b) * signal.n0
    };
    let m = taps as i64;
    let mut best: Option<MmseEqualizer> = None;
    for first in -(m - 1) - ph..=ph {
        let r = DMatrix::from_fn(taps, taps, |a, b| cov(first + a as i64, first + b as i64));
        let x = DVector::from_fn(taps, |a, _| coef(0, first + a as i64) * es);
        let chol = cholesky_pd(&r).ok_or_else(|| Error::Degenerate("equalizer covariance is singular".into()))?;
        let w = chol.solve(&x);
        let q = x.dotc(&w).re;
        let mse = es - q;
        if best.as_ref().map_or(true, |b| mse < b.mse - 1e-15) {
            best = Some(MmseEqualizer {
                taps: w.iter().copied().collect(),
                first,
                oversampling: signal.phases,
                mse,
                gain: q / es,
            });
        }
    }
    best.ok_or_else(|| Error::Degenerate("no equalizer delay evaluated".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PackingDetector {
    SbsMf,
    /// Symbol-by-symbol on whitened samples.
    SbsWf,
    SbsMmse {
        taps: usize,
        oversampling: usize,
    },
    /// Truncated whitened channel.
    TrellisForney(usize),
    /// Truncated matched-filter autocorrelation.
    TrellisUngerboeck(usize),
    TrellisCs(usize),
}

impl PackingDetector {
    /// Parses `sbs-mf | sbs-wf | sbs-mmse | trellis-forney | trellis-ungerboeck | trellis-cs`.
    pub fn parse(name: &str, memory: usize, mmse_taps: usize, mmse_oversampling: usize) -> Result<Self> {
        Ok(match name {
            "sbs-mf" => Self::SbsMf,
            "sbs-wf" => Self::SbsWf,
            "sbs-mmse" => Self::SbsMmse { taps: mmse_taps, oversampling: mmse_oversampling },
            "trellis-forney" => Self::TrellisForney(memory),
            "trellis-ungerboeck" => Self::TrellisUngerboeck(memory),
            "trellis-cs" => Self::TrellisCs(memory),
            other => return invalid(format!("unknown detector '{other}'")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SbsMf => "sbs-mf",
            Self::SbsWf => "sbs-wf",
            Self::SbsMmse { .. } => "sbs-mmse",
            Self::TrellisForney(_) => "trellis-forney",
            Self::TrellisUngerboeck(_) => "trellis-ungerboeck",
            Self::TrellisCs(_) => "trellis-cs",
        }
    }
}

impl FromStr for PackingDetector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 1, 11, 1)
    }
}

/// Minimum-phase factor of `g` and its FIR whitening filter `1 / conj(H)`.
fn whitening(g: &AutocorrTaps) -> Result<(ChannelTaps, FrontEnd)> {
    let spec = folded_spectrum(g, DEFAULT_GRID)?;
    if spec.min_re() < 1e-3 * spec.max_abs() {
        return Err(Error::Degenerate(
            "folded spectrum has near-nulls; whitening filter is unstable at this spacing".into(),
        ));
    }
    let h = spectral_factorize(g)?;
    let inv = h.spectrum(DEFAULT_GRID)?.map(|v| C64::new(1.0, 0.0) / v.conj());
    Ok((h, realize_front_end(&inv, DEFAULT_FRONT_END_LAGS)?))
}

fn compose(outer: &FrontEnd, inner: &FrontEnd) -> FrontEnd {
    FrontEnd::scalar(outer.first_lag() + inner.first_lag(), convolve(outer.taps(), inner.taps()))
}

/// Trellis law on the matched-filter samples; adjacent-carrier power is lumped with the noise.
pub fn trellis_law(signal: &PackedSignal, detector: PackingDetector) -> Result<MismatchedLaw> {
    let g = signal.autocorrelation()?;
    let n0 = signal.n0 + signal.interference_power()?;
    match detector {
        PackingDetector::TrellisUngerboeck(l) => truncation_law(&g, n0, l, 1.0),
        PackingDetector::TrellisCs(l) => {
            design_scalar_cs(&folded_spectrum(&g, DEFAULT_GRID)?, n0, l)?.law_for_matched_filter(DEFAULT_FRONT_END_LAGS)
        }
        PackingDetector::TrellisForney(l) => {
            let (h, white) = whitening(&g)?;
            let short = ChannelTaps::new(h.taps()[..=l.min(h.memory())].to_vec())?;
            let fe = compose(&FrontEnd::matched(&short, n0), &white);
            MismatchedLaw::scalar(fe, short.autocorrelation().scaled(1.0 / n0).taps())
        }
        _ => invalid("symbol-by-symbol detectors have no trellis law"),
    }
}

/// Achievable rate of `detector` on `signal` with symbols from `constellation`.
///
/// With `rails`, QPSK is detected as two independent binary rails.
pub fn packed_air(
    signal: &PackedSignal,
    detector: PackingDetector,
    constellation: &Constellation,
    rails: bool,
    cfg: &AirConfig,
) -> Result<AirEstimate> {
    if constellation.is_gaussian() {
        return invalid("Monte Carlo rates need a finite constellation");
    }
    let points = constellation.points().to_vec();
    let es = constellation.energy();
    let sbs = |transform: &(dyn Fn(&[C64], usize) -> Vec<C64> + Sync), gain: C64, aux: f64| {
        monte_carlo_blocks(cfg, |rng| {
            let idx: Vec<usize> = (0..cfg.symbols).map(|_| rng.index(points.len())).collect();
            let c: Vec<C64> = idx.iter().map(|&i| points[i]).collect();
            let y = signal.simulate(&c, rng);
            let z = transform(&y, cfg.symbols);
            Ok(sbs_air(&z, &idx, &points, gain, aux, 1)?.value)
        })
    };
    match detector {
        PackingDetector::SbsMf => {
            if signal.phases != 1 {
                return invalid("symbol-by-symbol matched filter uses one sample per symbol");
            }
            let g0 = signal.coefficient(0, 0, 0);
            let aux = signal.n0 * g0.re + signal.sbs_interference_power()?;
            sbs(&|y, n| y[..n].to_vec(), g0, aux)
        }
        PackingDetector::SbsWf => {
            if signal.phases != 1 {
                return invalid("whitened detection uses one sample per symbol");
            }
            let (h, white) = whitening(&signal.autocorrelation()?)?;
            let tail: f64 = h.taps()[1..].iter().map(|v| v.norm_sqr()).sum();
            let aux = signal.n0 + es * tail + signal.interference_power()?;
            sbs(&|y, n| white.apply(y, n), h.taps()[0], aux)
        }
        PackingDetector::SbsMmse { taps, oversampling } => {
            if oversampling != signal.phases {
                return invalid(format!(
                    "equalizer oversampling {oversampling} differs from the signal's {} phases",
                    signal.phases
                ));
            }
            let eq = design_mmse_equalizer(signal, taps)?;
            let aux = eq.residual_variance(es);
            sbs(&|y, n| eq.apply(y, n), C64::new(eq.gain, 0.0), aux)
        }
        _ => {
            if signal.phases != 1 {
                return invalid("trellis detectors use one sample per symbol");
            }
            let law = trellis_law(signal, detector)?;
            if rails {
                if constellation.modulation() != Modulation::Qpsk {
                    return invalid("rail detection needs Gray-mapped QPSK");
                }
                mc_air_iq_rails(signal, &law.scaled(0.5).into(), cfg)
            } else {
                mc_air_trellis(signal, &law.into(), &Alphabet::scalar(constellation)?, cfg)
            }
        }
    }
}

/// Solution of `E_s/N0 = I(E_s/N0) E_b/N0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    /// `None` when `I = 0` forces `E_s/N0 = 0`.
    pub esn0_db: Option<f64>,
    pub rate: f64,
    pub iterations: usize,
    pub residual_db: f64,
}

impl FixedPoint {
    pub fn is_degenerate(&self) -> bool {
        self.esn0_db.is_none()
    }
}

/// Damped fixed-point iteration in dB with a bisection fallback on `[lo, hi]`.
pub fn ebn0_fixed_point(rate: impl Fn(f64) -> f64, ebn0_db: f64, lo: f64, hi: f64) -> Result<FixedPoint> {
    if !(hi > lo) {
        return invalid("empty E_s/N0 range");
    }
    let map = |x: f64| -> Option<f64> {
        let r = rate(x);
        (r > 0.0 && r.is_finite()).then(|| ebn0_db + lin_to_db(r))
    };
    let mut x = 0.5 * (lo + hi);
    for it in 1..=200 {
        let Some(next) = map(x) else { break };
        let step = next - x;
        if step.abs() < 1e-9 {
            return Ok(FixedPoint { esn0_db: Some(next), rate: rate(next), iterations: it, residual_db: step.abs() });
        }
        x = (x + 0.7 * step).clamp(lo, hi);
    }
    let resid = |x: f64| match map(x) {
        Some(v) => v - x,
        None => f64::NEG_INFINITY,
    };
    if map(lo).is_none() && map(hi).is_none() {
        return Ok(FixedPoint { esn0_db: None, rate: 0.0, iterations: 0, residual_db: 0.0 });
    }
    let (rl, rh) = (resid(lo), resid(hi));
    if !(rl >= 0.0 && rh <= 0.0) {
        return Err(Error::NoConvergence(format!(
            "no E_s/N0 solution in [{lo}, {hi}] dB for E_b/N0 = {ebn0_db} dB (residuals {rl:.3e}, {rh:.3e})"
        )));
    }
    let x = bisect(lo, hi, 1e-10, |x| resid(x).max(-1e3))?;
    let r = resid(x);
    Ok(FixedPoint { esn0_db: Some(x), rate: rate(x), iterations: 200, residual_db: r.abs() })
}

/// Orthogonal-signalling reference: `I_awgn / (1 + alpha)` at the E_b/N0 fixed point.
pub fn orthogonal_eta(constellation: &Constellation, rolloff: f64, ebn0_db: f64) -> Result<f64> {
    let pts = constellation.points().to_vec();
    let rate = |x: f64| awgn_mi(&pts, 1.0 / db_to_lin(x)).unwrap_or(0.0);
    let fp = ebn0_fixed_point(rate, ebn0_db, -20.0, 40.0)?;
    Ok(ase(fp.rate, 1.0 + rolloff, 1.0)?.eta)
}

/// RRC pulse for bandwidth scale `w`: `sqrt(w) rrc(w t)`, unit energy.
pub fn scaled_rrc(alpha: f64, w: f64, span: usize, oversampling: usize) -> Result<PulseSamples> {
    if !(w > 0.0) {
        return invalid("bandwidth scale must be positive");
    }
    if (w - 1.0).abs() < 1e-12 {
        return PulseSamples::rrc(alpha, span, oversampling);
    }
    let half = ((span as f64 / w) * oversampling as f64 / 2.0).round() as i64;
    let samples = (-half..=half)
        .map(|m| {
            let t = m as f64 / oversampling as f64;
            let edge = (half as f64 - m.abs() as f64) / half as f64;
            let taper = if edge < 0.125 { 0.5 - 0.5 * (std::f64::consts::PI * edge / 0.125).cos() } else { 1.0 };
            C64::new(rrc_value(alpha, w * t) * taper, 0.0)
        })
        .collect();
    Ok(PulseSamples::from_samples(samples, oversampling, half as usize)?.normalized())
}

#[derive(Clone, Debug)]
pub struct PackingConfig {
    pub modulation: Modulation,
    pub rolloff: f64,
    pub span: usize,
    pub oversampling: usize,
    pub detector: PackingDetector,
    pub rails: bool,
    pub taus: Vec<f64>,
    pub nus: Vec<f64>,
    /// Pulse bandwidth scales; empty means the nominal pulse only.
    pub widths: Vec<f64>,
    pub esn0_db: Vec<f64>,
    pub ebn0_db: Vec<f64>,
    /// Adjacent carriers per side.
    pub neighbors: usize,
    pub air: AirConfig,
    pub budget: Option<Duration>,
}

#[derive(Clone, Debug)]
pub struct GridPoint {
    pub tau: f64,
    pub nu: f64,
    pub width: f64,
    pub esn0_db: f64,
    pub air: AirEstimate,
    pub eta: f64,
}

/// Best point at one E_b/N0 after the fixed point on each interpolated curve.
#[derive(Clone, Debug)]
pub struct EbOptimum {
    pub ebn0_db: f64,
    pub eta_max: f64,
    pub eta_se: f64,
    pub tau_opt: f64,
    pub nu_opt: f64,
    pub width_opt: f64,
    pub esn0_db: f64,
}

/// `eta(tau, nu, width)` at one E_b/N0; `None` where the fixed point left the simulated range.
#[derive(Clone, Debug)]
pub struct EbSlice {
    pub ebn0_db: f64,
    pub eta: Vec<Option<(f64, f64, f64)>>,
}

#[derive(Clone, Debug)]
pub struct PackingGridResult {
    pub taus: Vec<f64>,
    pub nus: Vec<f64>,
    pub widths: Vec<f64>,
    pub points: Vec<GridPoint>,
    /// Per E_b/N0: `(eta, eta_se, esn0_db)` for each `(tau, nu, width)` in row-major order.
    pub slices: Vec<EbSlice>,
    pub optima: Vec<EbOptimum>,
    pub budget_exceeded: bool,
}

impl PackingGridResult {
    fn index(&self, t: usize, n: usize, w: usize) -> usize {
        (t * self.nus.len() + n) * self.widths.len() + w
    }

    /// Bilinear interpolation of `eta` in `(tau, nu)` at width index `w`.
    ///
    /// Bilinear maxima over a cell sit on its corners, so the grid maximum is also the
    /// maximum of the interpolant.
    pub fn eta_at(&self, slice: usize, tau: f64, nu: f64, w: usize) -> Option<f64> {
        let locate = |axis: &[f64], v: f64| -> Option<(usize, usize, f64)> {
            if axis.len() == 1 {
                return ((axis[0] - v).abs() < 1e-12).then_some((0, 0, 0.0));
            }
            let i = axis.windows(2).position(|p| v >= p[0] - 1e-12 && v <= p[1] + 1e-12)?;
            Some((i, i + 1, (v - axis[i]) / (axis[i + 1] - axis[i])))
        };
        let (t0, t1, ft) = locate(&self.taus, tau)?;
        let (n0, n1, fnu) = locate(&self.nus, nu)?;
        let at = |t, n| self.slices[slice].eta[self.index(t, n, w)].map(|v| v.0);
        let (a, b, c, d) = (at(t0, n0)?, at(t1, n0)?, at(t0, n1)?, at(t1, n1)?);
        Some((1.0 - ft) * (1.0 - fnu) * a + ft * (1.0 - fnu) * b + (1.0 - ft) * fnu * c + ft * fnu * d)
    }

    /// `tau,nu,W,esn0_db,air,eta`.
    pub fn grid_csv(&self) -> String {
        let mut s = String::from("tau,nu,W,esn0_db,air,eta\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{},{:.10},{:.10}\n", p.tau, p.nu, p.width, p.esn0_db, p.air.value, p.eta));
        }
        s
    }

    /// `ebn0_db,eta_max,tau_opt,nu_opt`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("ebn0_db,eta_max,tau_opt,nu_opt\n");
        for o in &self.optima {
            s.push_str(&format!("{},{:.10},{},{}\n", o.ebn0_db, o.eta_max, o.tau_opt, o.nu_opt));
        }
        s
    }
}

/// Grid search of `eta = I / (tau nu)` with spline interpolation in E_s/N0 and the E_b/N0 fixed point.
pub fn optimize_ase(cfg: &PackingConfig) -> Result<PackingGridResult> {
    if cfg.taus.is_empty() || cfg.nus.is_empty() || cfg.esn0_db.len() < 2 {
        return invalid("need nonempty tau and nu grids and at least two E_s/N0 points");
    }
    if cfg.taus.iter().chain(&cfg.nus).any(|v| !(*v > 0.0)) {
        return invalid("tau and nu must be positive");
    }
    let mut esn0 = cfg.esn0_db.clone();
    esn0.sort_by(f64::total_cmp);
    esn0.dedup();
    let widths = if cfg.widths.is_empty() { vec![1.0] } else { cfg.widths.clone() };
    let constellation = Constellation::new(cfg.modulation);
    let mut combos: Vec<(f64, f64, f64)> = Vec::new();
    for &t in &cfg.taus {
        for &n in &cfg.nus {
            for &w in &widths {
                combos.push((t, n, w));
            }
        }
    }
    let pulses: Vec<PulseSamples> =
        widths.iter().map(|&w| scaled_rrc(cfg.rolloff, w, cfg.span, cfg.oversampling)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..combos.len()).flat_map(|c| (0..esn0.len()).map(move |s| (c, s))).collect();
    let start = Instant::now();
    let results: Vec<Option<AirEstimate>> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(c, s))| {
            if cfg.budget.is_some_and(|b| start.elapsed() > b) {
                return Ok(None);
            }
            let (tau, nu, w) = combos[c];
            let wi = widths.iter().position(|&x| x == w).unwrap_or(0);
            let phases = match cfg.detector {
                PackingDetector::SbsMmse { oversampling, .. } => oversampling,
                _ => 1,
            };
            let signal = PackedSignal::with_phases(
                &pulses[wi],
                tau,
                nu,
                cfg.neighbors,
                constellation.points(),
                1.0 / db_to_lin(esn0[s]) * constellation.energy(),
                phases,
            )?;
            packed_air(&signal, cfg.detector, &constellation, cfg.rails, &cfg.air.for_job(job as u64)).map(Some)
        })
        .collect::<Result<_>>()?;
    let budget_exceeded = results.iter().any(|r| r.is_none());

    let mut points = Vec::new();
    for (&(c, s), r) in jobs.iter().zip(&results) {
        if let Some(air) = r {
            let (tau, nu, width) = combos[c];
            points.push(GridPoint { tau, nu, width, esn0_db: esn0[s], air: air.clone(), eta: air.value / (tau * nu) });
        }
    }

    let mut slices: Vec<EbSlice> =
        cfg.ebn0_db.iter().map(|&e| EbSlice { ebn0_db: e, eta: vec![None; combos.len()] }).collect();
    for (c, &(tau, nu, _)) in combos.iter().enumerate() {
        let curve: Vec<(f64, &AirEstimate)> =
            (0..esn0.len()).filter_map(|s| results[c * esn0.len() + s].as_ref().map(|a| (esn0[s], a))).collect();
        if curve.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = curve.iter().map(|p| p.0).collect();
        let spline = CubicSpline::new(xs.clone(), curve.iter().map(|p| p.1.value).collect())?;
        let ses: Vec<f64> = curve.iter().map(|p| p.1.std_error).collect();
        let (lo, hi) = spline.range();
        for slice in slices.iter_mut() {
            if let Ok(fp) = ebn0_fixed_point(|x| spline.eval(x), slice.ebn0_db, lo, hi) {
                if let Some(x) = fp.esn0_db {
                    let se = linear(&xs, &ses, x);
                    slice.eta[c] = Some((fp.rate / (tau * nu), se / (tau * nu), x));
                }
            }
        }
    }
    let mut optima = Vec::new();
    for slice in &slices {
        let best = slice
            .eta
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.map(|v| (c, v)))
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
        if let Some((c, (eta, se, x))) = best {
            let (tau, nu, w) = combos[c];
            optima.push(EbOptimum {
                ebn0_db: slice.ebn0_db,
                eta_max: eta,
                eta_se: se,
                tau_opt: tau,
                nu_opt: nu,
                width_opt: w,
                esn0_db: x,
            });
        }
    }
    Ok(PackingGridResult {
        taus: cfg.taus.clone(),
        nus: cfg.nus.clone(),
        widths,
        points,
        slices,
        optima,
        budget_exceeded,
    })
}

fn linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let f = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + f * (ys[i] - ys[i - 1])
}

/// Pulse families compared at a fixed bandwidth-time product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FtnPulse {
    /// Transmit spectrum optimized for the CS receiver of the same memory.
    Optimized,
    /// Root raised cosine whose band edge `(1 + alpha) / (2 T_0)` equals `W`.
    Rrc(f64),
}

#[derive(Clone, Debug)]
pub struct FtnSetup {
    /// `W T` with `T = 1`.
    pub bandwidth_wt: f64,
    pub oversampling: usize,
    pub span: usize,
    pub kaiser_beta: f64,
    pub tx: TxOptions,
}

impl Default for FtnSetup {
    fn default() -> Self {
        Self { bandwidth_wt: 0.24, oversampling: 4, span: 64, kaiser_beta: 6.0, tx: TxOptions::default() }
    }
}

/// Continuous-time pulse of the given family, band-limited to `|f| <= W`.
pub fn ftn_pulse(kind: FtnPulse, setup: &FtnSetup, memory: usize, n0: f64) -> Result<PulseSamples> {
    let wt = setup.bandwidth_wt;
    let realized = match kind {
        FtnPulse::Optimized => {
            let spec = optimize_transmit_filter(&ideal_band_power(wt, DEFAULT_GRID)?, n0, memory, &setup.tx)?;
            let psd = spec.psd.clone();
            realize_pulse(
                move |f| interpolate_spectrum(&psd, std::f64::consts::TAU * f),
                wt,
                setup.oversampling,
                setup.span,
                setup.kaiser_beta,
            )?
        }
        FtnPulse::Rrc(alpha) => {
            let t0 = (1.0 + alpha) / (2.0 * wt);
            realize_pulse(move |f| rc_spectrum(alpha, f * t0), wt, setup.oversampling, setup.span, setup.kaiser_beta)?
        }
    };
    Ok(realized.pulse)
}

/// BPSK rate of a CS receiver with memory `memory` for the pulse family at `E_s/N0`.
pub fn ftn_air(kind: FtnPulse, setup: &FtnSetup, memory: usize, esn0_db: f64, cfg: &AirConfig) -> Result<AirEstimate> {
    let n0 = 1.0 / db_to_lin(esn0_db);
    let pulse = ftn_pulse(kind, setup, memory, n0)?;
    let signal = PackedSignal::new(&pulse, 1.0, 1.0, 0, &[], n0)?;
    let c = Constellation::new(Modulation::Bpsk);
    packed_air(&signal, PackingDetector::TrellisCs(memory), &c, false, cfg)
}

/// `eta = I / (W T)` at each E_b/N0 from a spline over simulated E_s/N0 points.
///
/// Returns `(ebn0_db, eta, eta_se)`.
pub fn ftn_eta_curve(
    kind: FtnPulse,
    setup: &FtnSetup,
    memory: usize,
    esn0_db: &[f64],
    ebn0_db: &[f64],
    cfg: &AirConfig,
) -> Result<Vec<(f64, f64, f64)>> {
    let est: Vec<AirEstimate> = esn0_db
        .par_iter()
        .enumerate()
        .map(|(j, &s)| ftn_air(kind, setup, memory, s, &cfg.for_job(j as u64)))
        .collect::<Result<_>>()?;
    let spline = CubicSpline::new(esn0_db.to_vec(), est.iter().map(|e| e.value).collect())?;
    let ses: Vec<f64> = est.iter().map(|e| e.std_error).collect();
    let (lo, hi) = spline.range();
    ebn0_db
        .iter()
        .map(|&eb| {
            let fp = ebn0_fixed_point(|x| spline.eval(x), eb, lo, hi)?;
            let x = fp.esn0_db.ok_or_else(|| Error::Degenerate("zero rate".into()))?;
            let wt = setup.bandwidth_wt;
            Ok((eb, ase(fp.rate, wt, 1.0)?.eta, linear(esn0_db, &ses, x) / wt))
        })
        .collect()
}
