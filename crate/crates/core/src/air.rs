//! Achievable information rates by Monte Carlo and closed forms.

use rayon::prelude::*;

use crate::detector::{log_likelihoods, Alphabet, DetectionLaw};
use crate::dsp::{cross_correlation, PulseSamples, SeededRng};
use crate::error::{invalid, Error, Result};
use crate::obs::{spacing_samples, ChannelSimulator};
use crate::C64;

pub const MIN_BLOCK_SYMBOLS: usize = 1000;

#[derive(Clone, Debug)]
pub struct AirConfig {
    /// Symbols per block.
    pub symbols: usize,
    pub blocks: usize,
    pub seed: u64,
    /// Block `b` draws from substream `stream_offset + b + 1`.
    pub stream_offset: u64,
}

impl Default for AirConfig {
    fn default() -> Self {
        Self { symbols: 100_000, blocks: 10, seed: 7, stream_offset: 0 }
    }
}

impl AirConfig {
    pub fn new(symbols: usize, blocks: usize, seed: u64) -> Self {
        Self { symbols, blocks, seed, stream_offset: 0 }
    }

    /// Same budget on a disjoint set of substreams for job `job`.
    pub fn for_job(&self, job: u64) -> Self {
        Self { stream_offset: self.stream_offset + job * self.blocks as u64, ..self.clone() }
    }

    fn check(&self) -> Result<()> {
        if self.symbols < MIN_BLOCK_SYMBOLS {
            return invalid(format!("need at least {MIN_BLOCK_SYMBOLS} symbols per block, got {}", self.symbols));
        }
        if self.blocks < 2 {
            return invalid("need at least two blocks for a standard error");
        }
        Ok(())
    }
}

/// Rate estimate in bits per channel use with its standard error over blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AirEstimate {
    pub value: f64,
    pub std_error: f64,
    pub symbols: usize,
    pub blocks: usize,
    pub seed: u64,
}

impl AirEstimate {
    pub fn from_blocks(values: &[f64], symbols: usize, seed: u64) -> Result<Self> {
        let b = values.len();
        if b == 0 {
            return invalid("no blocks");
        }
        let mean = values.iter().sum::<f64>() / b as f64;
        let var = if b > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64 } else { 0.0 };
        if !mean.is_finite() {
            return Err(Error::Degenerate("non-finite rate estimate".into()));
        }
        Ok(Self { value: mean, std_error: (var / b as f64).sqrt(), symbols, blocks: b, seed })
    }

    /// Closed-form value with zero error.
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, symbols: 0, blocks: 0, seed: 0 }
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn combined_se(&self, other: &AirEstimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// Runs `f` once per block on its own substream and averages.
pub fn monte_carlo_blocks(cfg: &AirConfig, f: impl Fn(&mut SeededRng) -> Result<f64> + Sync) -> Result<AirEstimate> {
    cfg.check()?;
    let values: Vec<f64> = (0..cfg.blocks as u64)
        .into_par_iter()
        .map(|b| f(&mut SeededRng::substream(cfg.seed, cfg.stream_offset + b + 1)))
        .collect::<Result<_>>()?;
    AirEstimate::from_blocks(&values, cfg.symbols, cfg.seed)
}

/// `(1/N) E[log2 q(r|c) - log2 q(r)]` with `r` from `sim` and the metric from `law`.
pub fn mc_air_trellis(
    sim: &(impl ChannelSimulator + ?Sized),
    law: &DetectionLaw,
    alphabet: &Alphabet,
    cfg: &AirConfig,
) -> Result<AirEstimate> {
    if sim.symbol_dim() != alphabet.dim() {
        return invalid("simulator and alphabet symbol dimensions differ");
    }
    monte_carlo_blocks(cfg, |rng| {
        let idx: Vec<usize> = (0..cfg.symbols).map(|_| rng.index(alphabet.size())).collect();
        let r = sim.simulate(&alphabet.map(&idx), rng);
        let (path, total) = log_likelihoods(law, alphabet, &r, &idx, None)?;
        let v = (path - total) / (cfg.symbols as f64 * std::f64::consts::LN_2);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Degenerate("non-finite path metric".into()))
        }
    })
}

/// `sqrt(2) Re(r)` or `sqrt(2) Im(r)` as real-valued observations.
pub fn rail(r: &[C64], quadrature: bool) -> Vec<C64> {
    let s = 2f64.sqrt();
    r.iter().map(|v| C64::new(s * if quadrature { v.im } else { v.re }, 0.0)).collect()
}

/// QPSK with Gray mapping detected as two BPSK rails of a real channel.
///
/// `rail_law` must be the BPSK law for one rail: exact or truncated laws use `2 N0`,
/// CS laws are designed at `N0` and scaled by `1/2`. Returns the QPSK rate (sum of rails).
pub fn mc_air_iq_rails(
    sim: &(impl ChannelSimulator + ?Sized),
    rail_law: &DetectionLaw,
    cfg: &AirConfig,
) -> Result<AirEstimate> {
    let bpsk = Alphabet::from_points(vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)])?;
    let s = 1.0 / 2f64.sqrt();
    monte_carlo_blocks(cfg, |rng| {
        let i_idx: Vec<usize> = (0..cfg.symbols).map(|_| rng.index(2)).collect();
        let q_idx: Vec<usize> = (0..cfg.symbols).map(|_| rng.index(2)).collect();
        let sym: Vec<C64> = i_idx
            .iter()
            .zip(&q_idx)
            .map(|(&a, &b)| C64::new(if a == 0 { s } else { -s }, if b == 0 { s } else { -s }))
            .collect();
        let r = sim.simulate(&sym, rng);
        let mut total = 0.0;
        for (q, idx) in [(false, &i_idx), (true, &q_idx)] {
            let (path, norm) = log_likelihoods(rail_law, &bpsk, &rail(&r, q), idx, None)?;
            total += path - norm;
        }
        Ok(total / (cfg.symbols as f64 * std::f64::consts::LN_2))
    })
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Symbol-by-symbol rate with the Gaussian auxiliary channel `r_k = gain c_k + CN(0, aux_var)`.
///
/// `received` and `symbols` are aligned and split into `blocks` equal parts for the standard error.
pub fn sbs_air(
    received: &[C64],
    symbols: &[usize],
    points: &[C64],
    gain: C64,
    aux_var: f64,
    blocks: usize,
) -> Result<AirEstimate> {
    if !(aux_var > 0.0) {
        return invalid("auxiliary variance must be positive");
    }
    if received.len() < symbols.len() || points.is_empty() || blocks == 0 || symbols.len() < blocks {
        return invalid("inconsistent symbol-by-symbol inputs");
    }
    let m = points.len() as f64;
    let per = symbols.len() / blocks;
    let values: Vec<f64> = (0..blocks)
        .map(|b| {
            let mut acc = 0.0;
            let mut metrics = vec![0.0; points.len()];
            for k in b * per..(b + 1) * per {
                for (j, p) in points.iter().enumerate() {
                    metrics[j] = -(received[k] - gain * p).norm_sqr() / aux_var;
                }
                acc += metrics[symbols[k]] - (lse(&metrics) - m.ln());
            }
            acc / (per as f64 * std::f64::consts::LN_2)
        })
        .collect();
    AirEstimate::from_blocks(&values, per, 0)
}

/// Same with Gaussian symbols of energy `es`; `q(r)` is the Gaussian output density.
pub fn sbs_air_gaussian(
    received: &[C64],
    symbols: &[C64],
    gain: C64,
    aux_var: f64,
    es: f64,
    blocks: usize,
) -> Result<AirEstimate> {
    if !(aux_var > 0.0) {
        return invalid("auxiliary variance must be positive");
    }
    if received.len() < symbols.len() || blocks == 0 || symbols.len() < blocks {
        return invalid("inconsistent symbol-by-symbol inputs");
    }
    let out_var = es * gain.norm_sqr() + aux_var;
    let per = symbols.len() / blocks;
    let values: Vec<f64> = (0..blocks)
        .map(|b| {
            let mut acc = 0.0;
            for k in b * per..(b + 1) * per {
                let cond = -(received[k] - gain * symbols[k]).norm_sqr() / aux_var - aux_var.ln();
                let marg = -received[k].norm_sqr() / out_var - out_var.ln();
                acc += cond - marg;
            }
            acc / (per as f64 * std::f64::consts::LN_2)
        })
        .collect();
    AirEstimate::from_blocks(&values, per, 0)
}

/// `log2(1 + es |gain|^2 / (n0 + ni))`.
pub fn gaussian_capacity(es: f64, gain: C64, n0: f64, ni: f64) -> f64 {
    (1.0 + es * gain.norm_sqr() / (n0 + ni)).log2()
}

/// Gauss-Hermite nodes and weights for `integral exp(-x^2) f(x) dx`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j =
        nalgebra::DMatrix::from_fn(
            n,
            n,
            |a, b| {
                if a + 1 == b || b + 1 == a {
                    ((a.max(b)) as f64 / 2.0).sqrt()
                } else {
                    0.0
                }
            },
        );
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Mutual information of a uniform finite constellation on `r = c + CN(0, n0)` in bits.
pub fn awgn_mi(points: &[C64], n0: f64) -> Result<f64> {
    if !(n0 > 0.0) || points.is_empty() {
        return invalid("need N0 > 0 and a nonempty constellation");
    }
    let (x, w) = gauss_hermite(40);
    let m = points.len();
    let scale = n0.sqrt();
    let mut acc = 0.0;
    for pi in points {
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                let n = C64::new(a * scale, b * scale);
                let terms: Vec<f64> = points.iter().map(|pj| -((pi - pj + n).norm_sqr() - n.norm_sqr()) / n0).collect();
                acc += wa * wb / std::f64::consts::PI * lse(&terms);
            }
        }
    }
    Ok((m as f64).log2() - acc / (m as f64 * std::f64::consts::LN_2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorKind {
    SymbolBySymbol,
    /// Trellis detector covering own-carrier lags `|n| <= L`.
    Trellis(usize),
}

/// Interference bookkeeping for the central carrier.
#[derive(Clone, Debug)]
pub struct InterferenceBudget {
    pub es: f64,
    pub ni: f64,
    pub memory: Option<usize>,
    /// `(n, l, |h(n, l)|^2)` for every nonzero coefficient.
    pub coefficients: Vec<(i64, i64, f64)>,
}

/// `|h(n,l)| = |integral p(t) conj(p(t - nT)) exp(j 2 pi l F t) dt|` summed over the
/// terms the detector does not model, times `es`.
///
/// `tau` and `f_spacing` are in units of the pulse's reference symbol time.
pub fn interference_budget(
    pulse: &PulseSamples,
    tau: f64,
    f_spacing: f64,
    carriers: usize,
    detector: DetectorKind,
    es: f64,
) -> Result<InterferenceBudget> {
    if carriers == 0 {
        return invalid("need at least one carrier");
    }
    let d = spacing_samples(pulse, tau)? as i64;
    let reach = pulse.samples().len() as i64 / d + 1;
    let half = (carriers as i64 - 1) / 2;
    let mut coefficients = Vec::new();
    let mut ni = 0.0;
    for l in -half..=(carriers as i64 - 1 - half) {
        let w = std::f64::consts::TAU * l as f64 * f_spacing;
        for n in -reach..=reach {
            let v = cross_correlation(pulse, pulse, n * d, |t| C64::from_polar(1.0, w * t)).norm_sqr();
            if v < 1e-15 {
                continue;
            }
            coefficients.push((n, l, v));
            let modeled = match detector {
                DetectorKind::SymbolBySymbol => n == 0 && l == 0,
                DetectorKind::Trellis(mem) => l == 0 && n.unsigned_abs() as usize <= mem,
            };
            if !modeled {
                ni += es * v;
            }
        }
    }
    let memory = match detector {
        DetectorKind::Trellis(m) => Some(m),
        DetectorKind::SymbolBySymbol => None,
    };
    Ok(InterferenceBudget { es, ni, memory, coefficients })
}

/// Spectral efficiency `eta = I / (F T)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AseValue {
    pub eta: f64,
    pub rate: f64,
    pub ft: f64,
}

pub fn ase(rate: f64, f: f64, t: f64) -> Result<AseValue> {
    let ft = f * t;
    if !(ft > 0.0) {
        return invalid("F T must be positive");
    }
    Ok(AseValue { eta: rate / ft, rate, ft })
}

/// CSV `<x_name>,air,stderr`.
pub fn curve_csv(x_name: &str, rows: &[(f64, AirEstimate)]) -> String {
    let mut s = format!("{x_name},air,stderr\n");
    for (x, e) in rows {
        s.push_str(&format!("{x},{:.10},{:.10}\n", e.value, e.std_error));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{ForneyLaw, MismatchedLaw};
    use crate::dsp::{ChannelTaps, Constellation, Modulation};
    use crate::obs::ForneyModel;

    fn cfg(symbols: usize, blocks: usize, seed: u64) -> AirConfig {
        AirConfig::new(symbols, blocks, seed)
    }

    /// Binary-input AWGN mutual information by trapezoidal integration of the real LLR density.
    fn biawgn_oracle(snr: f64) -> f64 {
        // r = 1 + n, n ~ N(0, s2) per real dimension; s2 = N0 / 2 with Es = 1.
        let s2 = 0.5 / snr;
        let steps = 200_000;
        let lim = 1.0 + 12.0 * s2.sqrt();
        let dx = 2.0 * lim / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let y = -lim + i as f64 * dx;
            let p = (-(y - 1.0).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
            let wgt = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += wgt * p * (1.0 + (-2.0 * y / s2).exp()).log2();
        }
        1.0 - acc * dx
    }

    #[test]
    fn gauss_hermite_integrates_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(a, b)| a * a * b).sum();
        assert!((m0 - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!((m2 - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn awgn_mi_matches_oracle() {
        let c = Constellation::new(Modulation::Bpsk);
        for snr_db in [-3.0, 0.0, 3.0] {
            let snr = 10f64.powf(snr_db / 10.0);
            let mi = awgn_mi(c.points(), 1.0 / snr).unwrap();
            assert!((mi - biawgn_oracle(snr)).abs() < 1e-6, "{snr_db}: {mi}");
        }
        let q = Constellation::new(Modulation::Qpsk);
        assert!((awgn_mi(q.points(), 0.5).unwrap() - 2.0 * biawgn_oracle(1.0)).abs() < 1e-6);
    }

    #[test]
    fn trellis_air_on_isi_free_bpsk_matches_closed_form() {
        let h = ChannelTaps::from_real(&[1.0]).unwrap();
        let sim = ForneyModel::new(h.clone(), 1.0).unwrap();
        let a = Alphabet::scalar(&Constellation::new(Modulation::Bpsk)).unwrap();
        let law = ForneyLaw::scalar(&h, 1.0).unwrap().into();
        let e = mc_air_trellis(&sim, &law, &a, &cfg(20_000, 8, 3)).unwrap();
        let want = biawgn_oracle(1.0);
        assert!((e.value - want).abs() < 3.0 * e.std_error + 1e-3, "{} vs {want} (se {})", e.value, e.std_error);
    }

    #[test]
    fn seeds_reproduce_and_mismatch_does_not_help() {
        let h = ChannelTaps::epr4();
        let n0 = 0.4;
        let sim = ForneyModel::new(h.clone(), n0).unwrap();
        let a = Alphabet::scalar(&Constellation::new(Modulation::Bpsk)).unwrap();
        let exact: DetectionLaw = MismatchedLaw::exact_from_forney(&h, n0).unwrap().into();
        let trunc: DetectionLaw = crate::shortening::truncation_law_forney(&h, n0, 1, 1.0).unwrap().into();
        let c = cfg(4000, 4, 11);
        let e1 = mc_air_trellis(&sim, &exact, &a, &c).unwrap();
        let e2 = mc_air_trellis(&sim, &exact, &a, &c).unwrap();
        assert_eq!(e1, e2);
        let t = mc_air_trellis(&sim, &trunc, &a, &c).unwrap();
        assert!(t.value <= e1.value + 3.0 * t.combined_se(&e1));
    }

    #[test]
    fn standard_error_scales_with_block_length() {
        // SE ~ 1/sqrt(N): four times the symbols halves it.
        let h = ChannelTaps::from_real(&[1.0, 0.6]).unwrap();
        let sim = ForneyModel::new(h.clone(), 0.5).unwrap();
        let a = Alphabet::scalar(&Constellation::new(Modulation::Bpsk)).unwrap();
        let law: DetectionLaw = ForneyLaw::scalar(&h, 0.5).unwrap().into();
        let short = mc_air_trellis(&sim, &law, &a, &cfg(1000, 64, 21)).unwrap();
        let long = mc_air_trellis(&sim, &law, &a, &cfg(4000, 64, 21)).unwrap();
        let ratio = long.std_error / short.std_error;
        assert!((ratio - 0.5).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn rails_match_complex_qpsk_detection() {
        let h = ChannelTaps::from_real(&[1.0, 0.5]).unwrap();
        let n0 = 0.5;
        let sim = ForneyModel::new(h.clone(), n0).unwrap();
        let rail_law: DetectionLaw = ForneyLaw::scalar(&h, 2.0 * n0).unwrap().into();
        let q = Alphabet::scalar(&Constellation::new(Modulation::Qpsk)).unwrap();
        let full: DetectionLaw = ForneyLaw::scalar(&h, n0).unwrap().into();
        let c = cfg(5000, 6, 2);
        let rails = mc_air_iq_rails(&sim, &rail_law, &c).unwrap();
        let joint = mc_air_trellis(&sim, &full, &q, &c).unwrap();
        assert!((rails.value - joint.value).abs() < 3.0 * rails.combined_se(&joint) + 5e-3);
    }

    #[test]
    fn sbs_air_limits() {
        let c = Constellation::new(Modulation::Qpsk);
        let mut rng = SeededRng::new(4);
        let n = 40_000;
        let idx: Vec<usize> = (0..n).map(|_| rng.index(4)).collect();
        let r: Vec<C64> = idx.iter().map(|&i| c.points()[i] + rng.complex_gaussian(0.5)).collect();
        let e = sbs_air(&r, &idx, c.points(), C64::new(1.0, 0.0), 0.5, 8).unwrap();
        let want = awgn_mi(c.points(), 0.5).unwrap();
        assert!((e.value - want).abs() < 3.0 * e.std_error + 2e-3);
        let far = sbs_air(&r, &idx, c.points(), C64::new(1.0, 0.0), 1e6, 8).unwrap();
        assert!(far.value.abs() < 1e-3);
        assert!(sbs_air(&r, &idx, c.points(), C64::new(1.0, 0.0), 0.0, 8).is_err());
    }

    #[test]
    fn sbs_gaussian_matches_capacity_with_gaussian_interference() {
        let mut rng = SeededRng::new(9);
        let n = 50_000;
        let (n0, ni, g) = (0.3, 0.2, C64::new(0.8, 0.3));
        let sym: Vec<C64> = (0..n).map(|_| rng.complex_gaussian(1.0)).collect();
        let r: Vec<C64> = sym.iter().map(|&c| g * c + rng.complex_gaussian(n0 + ni)).collect();
        let e = sbs_air_gaussian(&r, &sym, g, n0 + ni, 1.0, 10).unwrap();
        let want = gaussian_capacity(1.0, g, n0, ni);
        assert!((e.value - want).abs() < 3.0 * e.std_error + 1e-3, "{} vs {want}", e.value);
    }

    #[test]
    fn interference_budget_cases() {
        let p = PulseSamples::rrc(0.2, 32, 8).unwrap();
        let orth = interference_budget(&p, 1.0, 1.2, 1, DetectorKind::SymbolBySymbol, 1.0).unwrap();
        assert!(orth.ni < 1e-5, "{}", orth.ni);
        let packed = interference_budget(&p, 0.75, 1.2, 1, DetectorKind::SymbolBySymbol, 1.0).unwrap();
        let d = 6;
        let oracle: f64 = (1..40i64).map(|n| 2.0 * p.correlation(n * d).norm_sqr()).sum();
        assert!((packed.ni - oracle).abs() < 1e-12);
        let trellis = interference_budget(&p, 0.75, 1.0, 3, DetectorKind::Trellis(30), 1.0).unwrap();
        let adjacent: f64 = trellis.coefficients.iter().filter(|c| c.1 != 0).map(|c| c.2).sum();
        assert!((trellis.ni - adjacent).abs() < 1e-6);
    }

    #[test]
    fn ase_divides() {
        assert_eq!(ase(2.0, 1.0, 1.0).unwrap().eta, 2.0);
        assert!((ase(1.0, 0.9, 0.75).unwrap().eta - 1.0 / 0.675).abs() < 1e-12);
        assert!(ase(1.0, 0.0, 1.0).is_err());
    }
}
