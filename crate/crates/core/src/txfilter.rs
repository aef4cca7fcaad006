//! Transmit spectra for a memory-limited CS receiver.
//!
//! The optimal spectrum has the form
//! `|P(w)|^2 = max(0, N0 sqrt(A(w)) / |H(w)| - N0 / |H(w)|^2)` with
//! `A(w) = sum_{|l| <= L} A_l exp(j l w)` nonnegative, so only `L + 1`
//! coefficients are searched. The overall scale of `A` is fixed by the
//! power constraint.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dsp::{convolve, omega, ChannelTaps, PulseSamples, SeededRng, SpectrumSamples};
use crate::error::{invalid, Error, Result};
use crate::optim::nelder_mead;
use crate::shortening::design_scalar_cs;
use crate::C64;

const INFEASIBLE: f64 = 1e3;

#[derive(Clone, Debug)]
pub struct TxOptions {
    pub multistart: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TxOptions {
    fn default() -> Self {
        Self { multistart: 3, max_iter: 4000, tol: 1e-12, seed: 1 }
    }
}

/// Optimized transmit spectrum.
#[derive(Clone, Debug)]
pub struct TransmitFilterSpec {
    pub memory: usize,
    pub n0: f64,
    /// `A_0..A_L`; `A_{-l} = conj(A_l)`. `None` when the flat spectrum won.
    pub coefficients: Option<Vec<C64>>,
    pub psd: SpectrumSamples,
    /// `mean(|P|^2) - 1`.
    pub power_residual: f64,
    /// `-log2 C` of the CS design on the combined channel.
    pub objective: f64,
    pub flat_objective: f64,
    pub start_objectives: Vec<f64>,
    pub converged: bool,
}

impl TransmitFilterSpec {
    pub fn flat_fallback(&self) -> bool {
        self.coefficients.is_none()
    }

    pub fn coefficient(&self, l: i64) -> Option<C64> {
        let a = self.coefficients.as_ref()?;
        let v = *a.get(l.unsigned_abs() as usize)?;
        Some(if l >= 0 { v } else { v.conj() })
    }

    /// `A(w) = a_0 + sum_l a_l cos(l w) + b_l sin(l w)`; returns `(a, b)`.
    pub fn trig_coefficients(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let a = self.coefficients.as_ref()?;
        let cos = a.iter().enumerate().map(|(l, v)| if l == 0 { v.re } else { 2.0 * v.re }).collect();
        let sin = a.iter().enumerate().map(|(l, v)| if l == 0 { 0.0 } else { -2.0 * v.im }).collect();
        Some((cos, sin))
    }

    /// CSV `ell,re,im` for `l = -L..L`.
    pub fn coefficients_csv(&self) -> String {
        let mut s = String::from("ell,re,im\n");
        if let Some(a) = &self.coefficients {
            let l = a.len() as i64 - 1;
            for i in -l..=l {
                let v = self.coefficient(i).unwrap();
                s.push_str(&format!("{i},{:.15e},{:.15e}\n", v.re, v.im));
            }
        }
        s
    }

    pub fn spectrum_csv(&self) -> String {
        psd_csv(&self.psd)
    }
}

pub fn psd_csv(psd: &SpectrumSamples) -> String {
    let mut s = String::from("omega,psq\n");
    for (n, v) in psd.values().iter().enumerate() {
        s.push_str(&format!("{:.12},{:.15e}\n", psd.omega(n), v.re));
    }
    s
}

/// Smallest `t >= 0` with `mean(max(0, t a_n - c_n)) = target`; entries with `a_n = 0` never contribute.
fn solve_piecewise(a: &[f64], c: &[f64], target: f64) -> Result<f64> {
    let n = a.len() as f64;
    let mut pts: Vec<(f64, f64, f64)> =
        a.iter().zip(c).filter(|(&ai, _)| ai > 0.0).map(|(&ai, &ci)| (ci / ai, ai, ci)).collect();
    if pts.is_empty() {
        return Err(Error::Degenerate("no frequency can carry power".into()));
    }
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut sa, mut sc) = (0.0, 0.0);
    for k in 0..pts.len() {
        sa += pts[k].1;
        sc += pts[k].2;
        let t = (n * target + sc) / sa;
        if k + 1 == pts.len() || t <= pts[k + 1].0 {
            return Ok(t);
        }
    }
    unreachable!()
}

fn usable(power: &SpectrumSamples) -> Result<Vec<f64>> {
    let p = power.re();
    let mx = p.iter().copied().fold(0.0, f64::max);
    if !(mx > 0.0) || p.iter().any(|v| !v.is_finite() || *v < -1e-9 * mx) {
        return invalid("channel power spectrum must be finite, nonnegative and not identically zero");
    }
    Ok(p.into_iter().map(|v| if v > 1e-14 * mx { v } else { 0.0 }).collect())
}

fn is_even(p: &[f64]) -> bool {
    let n = p.len();
    let mx = p.iter().copied().fold(0.0, f64::max);
    (1..n).all(|i| (p[i] - p[n - i]).abs() <= 1e-10 * mx)
}

/// CS objective of a given transmit spectrum.
pub fn objective_of_psd(power: &SpectrumSamples, psd: &SpectrumSamples, n0: f64, memory: usize) -> Result<f64> {
    let combined = power.zip_map(psd, |h, p| C64::new(h.re.max(0.0) * p.re.max(0.0), 0.0))?;
    Ok(design_scalar_cs(&combined, n0, memory)?.i_opt)
}

struct Family {
    h_abs: Vec<f64>,
    c: Vec<f64>,
    n0: f64,
    real: bool,
    memory: usize,
}

impl Family {
    fn new(power: &[f64], n0: f64, memory: usize, real: bool) -> Self {
        let h_abs = power.iter().map(|v| v.sqrt()).collect();
        let c = power.iter().map(|&v| if v > 0.0 { n0 / v } else { f64::INFINITY }).collect();
        Self { h_abs, c, n0, real, memory }
    }

    fn params(&self) -> usize {
        if self.real {
            self.memory
        } else {
            2 * self.memory
        }
    }

    /// Coefficients with `A_0 = 1`.
    fn shape(&self, x: &[f64]) -> Vec<C64> {
        let mut a = vec![C64::new(1.0, 0.0)];
        for l in 0..self.memory {
            a.push(if self.real { C64::new(x[l], 0.0) } else { C64::new(x[2 * l], x[2 * l + 1]) });
        }
        a
    }

    fn a_of_w(a: &[C64], n: usize) -> Vec<f64> {
        (0..n)
            .map(|t| {
                let w = omega(t, n);
                a[0].re
                    + a.iter()
                        .enumerate()
                        .skip(1)
                        .map(|(l, v)| 2.0 * (v * C64::from_polar(1.0, l as f64 * w)).re)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Normalized spectrum and scaled coefficients, or the amount of negativity.
    fn psd(&self, shape: &[C64]) -> std::result::Result<(Vec<f64>, Vec<C64>), f64> {
        let aw = Self::a_of_w(shape, self.h_abs.len());
        let min = aw.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-12 {
            return Err(-min);
        }
        let slope: Vec<f64> = aw
            .iter()
            .zip(&self.h_abs)
            .map(|(&v, &h)| if h > 0.0 { self.n0 * v.max(0.0).sqrt() / h } else { 0.0 })
            .collect();
        let t = solve_piecewise(&slope, &self.c, 1.0).map_err(|_| 1.0)?;
        let psd = slope.iter().zip(&self.c).map(|(&s, &c)| (t * s - c).max(0.0)).collect();
        Ok((psd, shape.iter().map(|v| v * (t * t)).collect()))
    }
}

/// Searches the optimal family for the best CS objective at memory `L`.
pub fn optimize_transmit_filter(
    power: &SpectrumSamples,
    n0: f64,
    memory: usize,
    opts: &TxOptions,
) -> Result<TransmitFilterSpec> {
    if !(n0 > 0.0) {
        return invalid("N0 must be positive");
    }
    if memory + 1 > 8 {
        return invalid("at most 8 transmit-filter coefficients are supported");
    }
    let p = usable(power)?;
    let family = Family::new(&p, n0, memory, is_even(&p));
    let power_s = SpectrumSamples::from_real(p.clone())?;
    let eval = |x: &[f64]| -> f64 {
        match family.psd(&family.shape(x)) {
            Err(neg) => INFEASIBLE * (1.0 + neg),
            Ok((psd, _)) => {
                let psd = SpectrumSamples::from_real(psd).expect("nonempty");
                match objective_of_psd(&power_s, &psd, n0, memory) {
                    Ok(v) => -v,
                    Err(_) => INFEASIBLE,
                }
            }
        }
    };
    let dim = family.params();
    let mut starts = vec![vec![0.0; dim]];
    let mut rng = SeededRng::new(opts.seed);
    let radius = 0.5 / memory.max(1) as f64;
    for _ in 1..opts.multistart.max(1) {
        starts.push((0..dim).map(|_| radius * (2.0 * rng.uniform() - 1.0) / 2f64.sqrt()).collect());
    }
    let runs: Vec<_> = starts
        .par_iter()
        .map(|s| {
            let mut f = |x: &[f64]| eval(x);
            nelder_mead(&mut f, s, 0.1 * radius, opts.tol, opts.max_iter)
        })
        .collect();
    let converged = runs.iter().any(|r| r.iterations < opts.max_iter);
    let start_objectives: Vec<f64> = runs.iter().map(|r| -r.value).collect();
    let best = runs.iter().min_by(|a, b| a.value.total_cmp(&b.value)).expect("at least one start");
    let flat = SpectrumSamples::from_real(vec![1.0; p.len()])?;
    let flat_objective = objective_of_psd(&power_s, &flat, n0, memory)?;
    if best.value >= INFEASIBLE {
        return Err(Error::NoConvergence("every start was infeasible".into()));
    }
    let (psd, coefficients, objective) = if -best.value >= flat_objective {
        let (psd, coef) = family.psd(&family.shape(&best.x)).expect("feasible optimum");
        (SpectrumSamples::from_real(psd)?, Some(coef), -best.value)
    } else {
        (flat, None, flat_objective)
    };
    let power_residual = psd.mean().re - 1.0;
    Ok(TransmitFilterSpec {
        memory,
        n0,
        coefficients,
        psd,
        power_residual,
        objective,
        flat_objective,
        start_objectives,
        converged,
    })
}

#[derive(Clone, Debug)]
pub struct WaterfillingSpec {
    pub level: f64,
    pub psd: SpectrumSamples,
}

impl WaterfillingSpec {
    /// `mean log2(1 + |P|^2 |H|^2 / N0)`.
    pub fn capacity(&self, power: &SpectrumSamples, n0: f64) -> f64 {
        self.psd.values().iter().zip(power.values()).map(|(p, h)| (1.0 + p.re * h.re.max(0.0) / n0).log2()).sum::<f64>()
            / self.psd.len() as f64
    }
}

/// `|P|^2 = max(0, theta - N0 / |H|^2)` with `mean(|P|^2) = total_power`.
pub fn waterfilling(power: &SpectrumSamples, n0: f64, total_power: f64) -> Result<WaterfillingSpec> {
    if !(n0 > 0.0 && total_power > 0.0) {
        return invalid("N0 and total power must be positive");
    }
    let p = usable(power)?;
    let a: Vec<f64> = p.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let c: Vec<f64> = p.iter().map(|&v| if v > 0.0 { n0 / v } else { 0.0 }).collect();
    let level = solve_piecewise(&a, &c, total_power)?;
    let psd = a.iter().zip(&c).map(|(&ai, &ci)| if ai > 0.0 { (level - ci).max(0.0) } else { 0.0 }).collect();
    Ok(WaterfillingSpec { level, psd: SpectrumSamples::from_real(psd)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CombinedMemory {
    pub channel: usize,
    pub combined: usize,
}

impl CombinedMemory {
    /// Whether the filtered channel keeps at least the channel memory.
    pub fn holds(&self) -> bool {
        self.combined >= self.channel
    }
}

/// Memory of `h * p` after dropping edge taps below `rel` of the peak.
pub fn combined_memory(h: &ChannelTaps, p: &[C64], rel: f64) -> Result<CombinedMemory> {
    if p.is_empty() {
        return invalid("empty filter");
    }
    let c = convolve(h.taps(), p);
    let peak = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..c.len()).filter(|&i| c[i].norm() >= rel * peak).collect();
    let combined = match (keep.first(), keep.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    };
    Ok(CombinedMemory { channel: h.memory(), combined })
}

/// FIR taps of a transmit filter with amplitude `sqrt(|P|^2)` and zero phase, lags `-half..=half`.
pub fn psd_to_taps(psd: &SpectrumSamples, half: usize) -> Result<Vec<C64>> {
    let amp = psd.map(|v| C64::new(v.re.max(0.0).sqrt(), 0.0));
    amp.lags(-(half as i64), half as i64)
}

/// SVD-parallelized MIMO transmission with per-branch optimized spectra.
#[derive(Clone, Debug)]
pub struct MimoPrecoding {
    pub branches: Vec<TransmitFilterSpec>,
    pub branch_powers: Vec<f64>,
    /// Squared singular values per branch, descending.
    pub gains: Vec<SpectrumSamples>,
    /// Right singular vectors per grid point (columns are branches).
    pub right: Vec<DMatrix<C64>>,
    pub left: Vec<DMatrix<C64>>,
    pub objective: f64,
    /// Near-equal singular values somewhere on the grid.
    pub crossing: bool,
}

impl MimoPrecoding {
    /// `P(w) = V(w) diag(sqrt(|P_i(w)|^2 * P_i))` per grid point.
    pub fn precoder_spectrum(&self) -> Vec<DMatrix<C64>> {
        self.right
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let mut m = v.clone();
                for (i, b) in self.branches.iter().enumerate() {
                    let s = (b.psd.values()[t].re.max(0.0) * self.branch_powers[i]).sqrt();
                    m.column_mut(i).scale_mut(s);
                }
                m
            })
            .collect()
    }
}

/// Per-frequency SVD with descending singular values and the first nonzero entry of each right vector real-positive.
pub fn ordered_svd(h: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>, DMatrix<C64>) {
    let k = h.ncols();
    let svd = h.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").adjoint();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut uu = DMatrix::zeros(u.nrows(), order.len());
    let mut vv = DMatrix::zeros(k, order.len());
    let mut s = Vec::new();
    for (j, &i) in order.iter().enumerate() {
        let vc = v.column(i);
        let lead = vc.iter().find(|z| z.norm() > 1e-12).copied().unwrap_or(C64::new(1.0, 0.0));
        let rot = C64::from_polar(1.0, -lead.arg());
        vv.set_column(j, &(vc * rot));
        uu.set_column(j, &(u.column(i) * rot));
        s.push(svd.singular_values[i]);
    }
    (uu, s, vv)
}

/// Joint design: per-frequency SVD, per-branch spectra, and a power split summing to `K`.
pub fn mimo_precoders(h_spec: &[DMatrix<C64>], n0: f64, memory: usize, opts: &TxOptions) -> Result<MimoPrecoding> {
    let k = h_spec.first().map(|m| m.ncols()).unwrap_or(0);
    if k == 0 || k > 4 || h_spec.iter().any(|m| m.ncols() != k || m.nrows() < k) {
        return invalid("MIMO precoding needs K <= 4 inputs and at least K outputs");
    }
    let n = h_spec.len();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut gains = vec![vec![0.0; n]; k];
    let mut crossing = false;
    for (t, h) in h_spec.iter().enumerate() {
        let (u, s, v) = ordered_svd(h);
        for i in 0..k {
            gains[i][t] = s[i] * s[i];
            if i + 1 < k && s[0] > 0.0 && (s[i] - s[i + 1]) <= 1e-6 * s[0] {
                crossing = true;
            }
        }
        left.push(u);
        right.push(v);
    }
    let gains: Vec<SpectrumSamples> = gains.into_iter().map(SpectrumSamples::from_real).collect::<Result<_>>()?;
    let branch = |i: usize, pw: f64| -> Result<TransmitFilterSpec> {
        if pw <= 1e-9 {
            return Ok(TransmitFilterSpec {
                memory,
                n0,
                coefficients: None,
                psd: SpectrumSamples::from_real(vec![0.0; n])?,
                power_residual: 0.0,
                objective: 0.0,
                flat_objective: 0.0,
                start_objectives: vec![0.0],
                converged: true,
            });
        }
        let scaled = gains[i].map(|v| v * pw);
        optimize_transmit_filter(&scaled, n0, memory, opts)
    };
    let total = |powers: &[f64]| -> Result<(f64, Vec<TransmitFilterSpec>)> {
        let specs: Vec<TransmitFilterSpec> =
            (0..k).into_par_iter().map(|i| branch(i, powers[i])).collect::<Result<_>>()?;
        Ok((specs.iter().map(|s| s.objective).sum(), specs))
    };
    let to_powers = |x: &[f64]| -> Vec<f64> {
        let e: Vec<f64> = (0..k).map(|i| if i + 1 < k { x[i].clamp(-30.0, 30.0).exp() } else { 1.0 }).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| k as f64 * v / s).collect()
    };
    let inner = TxOptions { multistart: opts.multistart.min(2), ..opts.clone() };
    let mut outer = |x: &[f64]| -> f64 {
        let pw = to_powers(x);
        let specs: Result<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                if pw[i] <= 1e-9 {
                    return Ok(0.0);
                }
                optimize_transmit_filter(&gains[i].map(|v| v * pw[i]), n0, memory, &inner).map(|s| s.objective)
            })
            .collect();
        specs.map(|v| -v.iter().sum::<f64>()).unwrap_or(INFEASIBLE)
    };
    let res = nelder_mead(&mut outer, &vec![0.0; k - 1], 0.5, 1e-7, 200);
    let branch_powers = to_powers(&res.x);
    let (objective, branches) = total(&branch_powers)?;
    Ok(MimoPrecoding { branches, branch_powers, gains, right, left, objective, crossing })
}

/// Continuous-time pulse realized from a target `|P(f)|^2` supported on `|f| <= W`.
#[derive(Clone, Debug)]
pub struct PulseRealization {
    pub pulse: PulseSamples,
    /// Max deviation of the realized `|P(f)|^2` from the target over the support.
    pub max_error: f64,
}

/// Samples `p(t) = integral_{-W}^{W} sqrt(|P(f)|^2) exp(j 2 pi f t) df` at `t = m / oversampling`
/// over `+-span/2` symbols with a Kaiser window, then normalizes to unit energy.
pub fn realize_pulse(
    psd: impl Fn(f64) -> f64,
    bandwidth_wt: f64,
    oversampling: usize,
    span: usize,
    kaiser_beta: f64,
) -> Result<PulseRealization> {
    if !(bandwidth_wt > 0.0) || oversampling < 2 || span < 4 {
        return invalid("need W T > 0, oversampling >= 2 and span >= 4");
    }
    if 2.0 * bandwidth_wt > oversampling as f64 {
        return invalid("oversampling too low for the pulse bandwidth");
    }
    let nf = 8192;
    let df = 2.0 * bandwidth_wt / nf as f64;
    let freqs: Vec<f64> = (0..nf).map(|i| -bandwidth_wt + (i as f64 + 0.5) * df).collect();
    let amp: Vec<f64> = freqs.iter().map(|&f| psd(f).max(0.0).sqrt()).collect();
    let half = (span * oversampling / 2) as i64;
    let samples: Vec<C64> = (-half..=half)
        .map(|m| {
            let t = m as f64 / oversampling as f64;
            let v: C64 =
                freqs.iter().zip(&amp).map(|(&f, &a)| C64::from_polar(a, 2.0 * std::f64::consts::PI * f * t)).sum();
            v * df * crate::dsp::kaiser(m as f64, half as f64, kaiser_beta)
        })
        .collect();
    let pulse = PulseSamples::from_samples(samples, oversampling, half as usize)?.normalized();
    let target_energy: f64 = amp.iter().map(|a| a * a).sum::<f64>() * df;
    let mut max_error: f64 = 0.0;
    for i in (0..nf).step_by(16) {
        let f = freqs[i];
        let got: C64 = pulse
            .samples()
            .iter()
            .enumerate()
            .map(|(m, s)| s * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * pulse.time(m)))
            .sum::<C64>()
            / oversampling as f64;
        max_error = max_error.max((got.norm_sqr() - amp[i] * amp[i] / target_energy).abs());
    }
    Ok(PulseRealization { pulse, max_error })
}

/// Linear interpolation of a symbol-rate spectrum at `w` in `[-pi, pi]`.
pub fn interpolate_spectrum(psd: &SpectrumSamples, w: f64) -> f64 {
    let n = psd.len();
    let pos = (w + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * n as f64;
    let i = pos.floor();
    let frac = pos - i;
    let a = psd.values()[(i as i64).rem_euclid(n as i64) as usize].re;
    let b = psd.values()[(i as i64 + 1).rem_euclid(n as i64) as usize].re;
    a + frac * (b - a)
}

/// Max deviation of `sum_k |P(f + k)|^2` from its mean over one period (zero for Nyquist pulses).
pub fn folded_flatness(psd: impl Fn(f64) -> f64, bandwidth_wt: f64) -> f64 {
    let reach = bandwidth_wt.ceil() as i64 + 1;
    let vals: Vec<f64> = (0..512)
        .map(|i| {
            let f = -0.5 + (i as f64 + 0.5) / 512.0;
            (-reach..=reach)
                .map(|k| {
                    let g = f + k as f64;
                    if g.abs() <= bandwidth_wt {
                        psd(g)
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
}

/// Symbol-rate channel of an ideal band `|f| <= W` seen at symbol spacing `T = 1`.
pub fn ideal_band_power(bandwidth_wt: f64, n: usize) -> Result<SpectrumSamples> {
    if !(bandwidth_wt > 0.0 && 2.0 * bandwidth_wt <= 1.0) {
        return invalid("ideal band needs 0 < 2 W T <= 1");
    }
    let edge = 2.0 * std::f64::consts::PI * bandwidth_wt;
    Ok(SpectrumSamples::from_real_fn(n, |w| if w.abs() <= edge { 1.0 } else { 0.0 }))
}
