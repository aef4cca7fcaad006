//! Reduced-memory receiver designs expressed in the absorbed Ungerboeck form.
//!
//! A design is a pair of target taps `Gr_0..Gr_L` and a front-end filter.
//! The closed-form channel-shortening (CS) design maximises the Gaussian
//! achievable rate; truncation and the classical MMSE shortener are baselines.

mod adaptive;
mod block;
mod legacy;

pub use adaptive::{adaptive_cs, AdaptiveDesign};
pub use block::{block_lag_spectrum, design_block_cs, finite_n_gaussian_air, BlockShortenerDesign};
pub use legacy::{mmse_legacy_cs, LegacyDesign};

use nalgebra::DMatrix;

use crate::detector::{FrontEnd, MismatchedLaw};
use crate::dsp::{kaiser, AutocorrTaps, ChannelTaps, SpectrumSamples, DEFAULT_GRID};
use crate::error::{invalid, Error, Result};
use crate::C64;

/// Half-length of realized front-end filters.
pub const DEFAULT_FRONT_END_LAGS: usize = 64;
const TAPER_BETA: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShortenerKind {
    Cs,
    Truncation,
    MmseLegacy,
}

impl std::str::FromStr for ShortenerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cs" => Ok(Self::Cs),
            "trunc" | "truncation" => Ok(Self::Truncation),
            "mmse-legacy" | "mmse" | "legacy" => Ok(Self::MmseLegacy),
            other => invalid(format!("unknown shortener '{other}' (cs|trunc|mmse-legacy)")),
        }
    }
}

/// Closed-form CS design for a scalar channel.
#[derive(Clone, Debug)]
pub struct ShortenerDesign {
    pub memory: usize,
    /// Noise level the design was computed for; unknown for training-based designs.
    pub n0: Option<f64>,
    /// `b_0..b_L` of `B(omega) = N0 / (|H|^2 + N0)`.
    pub b: Vec<C64>,
    pub c_opt: f64,
    /// Prediction-error filter `u_0..u_L` with `|U|^2 = Gr + 1`.
    pub u: Vec<C64>,
    pub gr: AutocorrTaps,
    /// Gaussian achievable rate `-log2 C` in bits per symbol.
    pub i_opt: f64,
    power: Option<SpectrumSamples>,
    channel: Option<SpectrumSamples>,
}

/// CS design from the folded channel power spectrum `|H(omega)|^2` on the standard grid.
pub fn design_scalar_cs(power: &SpectrumSamples, n0: f64, memory: usize) -> Result<ShortenerDesign> {
    check_n0(n0)?;
    let scale = power.max_abs().max(1.0);
    if power.min_re() < -1e-9 * scale {
        return invalid("channel power spectrum must be nonnegative");
    }
    let b_spec = power.map(|v| C64::new(n0 / (v.re.max(0.0) + n0), 0.0));
    let mut d = design_from_b(&b_spec.lags(0, memory as i64)?, memory)?;
    d.n0 = Some(n0);
    d.power = Some(power.clone());
    Ok(d)
}

/// CS design for a known discrete channel; also enables the whitened-input front end.
pub fn design_scalar_cs_for_channel(h: &ChannelTaps, n0: f64, memory: usize) -> Result<ShortenerDesign> {
    let n = DEFAULT_GRID.max(16 * (h.memory() + 1));
    let spec = h.spectrum(n)?;
    let power = spec.map(|v| C64::new(v.norm_sqr(), 0.0));
    let mut d = design_scalar_cs(&power, n0, memory)?;
    d.channel = Some(spec);
    Ok(d)
}

/// CS design from the error autocorrelation `b_0..b_L`.
pub fn design_from_b(b: &[C64], memory: usize) -> Result<ShortenerDesign> {
    if b.len() < memory + 1 {
        return invalid(format!("need {} lags of b, got {}", memory + 1, b.len()));
    }
    let lags: Vec<DMatrix<C64>> = b[..=memory].iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
    let core = block::cs_core(&lags, &DMatrix::identity(1, 1))?;
    let u: Vec<C64> = core.u.iter().map(|m| m[(0, 0)]).collect();
    let c_opt = core.c_opt[(0, 0)].re;
    let gr = AutocorrTaps::new(core.gr.iter().map(|m| m[(0, 0)]).collect())?;
    Ok(ShortenerDesign {
        memory,
        n0: None,
        b: b[..=memory].to_vec(),
        c_opt,
        u,
        gr,
        i_opt: core.i_opt,
        power: None,
        channel: None,
    })
}

fn check_n0(n0: f64) -> Result<()> {
    if !(n0 > 0.0 && n0.is_finite()) {
        return invalid(format!("N0 must be positive, got {n0}"));
    }
    Ok(())
}

impl ShortenerDesign {
    pub fn gr_spectrum(&self, n: usize) -> Result<SpectrumSamples> {
        self.gr.spectrum(n)
    }

    pub fn power(&self) -> Option<&SpectrumSamples> {
        self.power.as_ref()
    }

    /// `b_i` for `|i| <= L`, zero beyond.
    pub fn b_at(&self, i: i64) -> C64 {
        match self.b.get(i.unsigned_abs() as usize) {
            Some(&v) if i >= 0 => v,
            Some(&v) => v.conj(),
            None => C64::new(0.0, 0.0),
        }
    }

    fn need_power(&self) -> Result<(&SpectrumSamples, f64)> {
        match (self.power.as_ref(), self.n0) {
            (Some(p), Some(n0)) => Ok((p, n0)),
            _ => invalid("design has no channel spectrum"),
        }
    }

    /// Front end applied to matched-filter outputs: `(Gr + 1) / (|H|^2 + N0)`.
    pub fn mf_front_end_spectrum(&self) -> Result<SpectrumSamples> {
        let (p, n0) = self.need_power()?;
        let gr = self.gr.spectrum(p.len())?;
        p.zip_map(&gr, |v, g| C64::new((g.re + 1.0) / (v.re.max(0.0) + n0), 0.0))
    }

    /// `Hr(omega) = H (Gr + 1) / (|H|^2 + N0)`; needs the complex channel.
    pub fn hr_spectrum(&self) -> Result<SpectrumSamples> {
        let h =
            self.channel.as_ref().ok_or_else(|| Error::InvalidInput("design built without channel phase".into()))?;
        let (_, n0) = self.need_power()?;
        let gr = self.gr.spectrum(h.len())?;
        h.zip_map(&gr, |v, g| v * (g.re + 1.0) / (v.norm_sqr() + n0))
    }

    /// Law for matched-filter (Ungerboeck) observations.
    pub fn law_for_matched_filter(&self, max_lag: usize) -> Result<MismatchedLaw> {
        let fe = realize_front_end(&self.mf_front_end_spectrum()?, max_lag)?;
        MismatchedLaw::scalar(fe, self.gr.taps())
    }

    /// Law for whitened (Forney) observations: the front end is `Hr^H`.
    pub fn law_for_forney(&self, max_lag: usize) -> Result<MismatchedLaw> {
        let fe = realize_front_end(&self.hr_spectrum()?.map(|v| v.conj()), max_lag)?;
        MismatchedLaw::scalar(fe, self.gr.taps())
    }
}

/// FIR realization over lags `-max_lag..=max_lag`; the outer half is Kaiser-tapered.
pub fn realize_front_end(spec: &SpectrumSamples, max_lag: usize) -> Result<FrontEnd> {
    let m = max_lag as i64;
    let taps = spec.lags(-m, m)?;
    let half = max_lag as f64 / 2.0;
    let taps = taps
        .into_iter()
        .zip(-m..=m)
        .map(|(t, i)| {
            let d = (i.abs() as f64 - half).max(0.0);
            t * kaiser(d, half, TAPER_BETA)
        })
        .collect();
    Ok(FrontEnd::scalar(-m, taps))
}

/// Largest deviation between a realized scalar front end and its target spectrum.
pub fn realization_error(fe: &FrontEnd, target: &SpectrumSamples) -> Result<f64> {
    let got = crate::dsp::dtft(fe.taps(), fe.first_lag(), target.len())?;
    Ok(got.values().iter().zip(target.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// Truncated-autocorrelation law for matched-filter outputs, metric scaled by `1 / (N0 * noise_scale)`.
pub fn truncation_law(g: &AutocorrTaps, n0: f64, memory: usize, noise_scale: f64) -> Result<MismatchedLaw> {
    check_n0(n0)?;
    if !(noise_scale > 0.0) {
        return invalid("noise scale must be positive");
    }
    let s = 1.0 / (n0 * noise_scale);
    MismatchedLaw::scalar(FrontEnd::identity(1, s), g.truncated(memory).scaled(s).taps())
}

/// Truncated-autocorrelation law for whitened outputs through the matched filter.
pub fn truncation_law_forney(h: &ChannelTaps, n0: f64, memory: usize, noise_scale: f64) -> Result<MismatchedLaw> {
    let s = 1.0 / (n0 * noise_scale);
    MismatchedLaw::scalar(
        FrontEnd::matched(h, n0 * noise_scale),
        h.autocorrelation().truncated(memory).scaled(s).taps(),
    )
}

fn gaussian_air_terms(n0: f64, power: &[f64], cross: &[f64], hr_sq: &[f64], gr: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..power.len() {
        let one_gr = 1.0 + gr[i];
        if one_gr <= 0.0 {
            return Err(Error::Degenerate(format!(
                "1 + Gr(omega) = {one_gr:e} is not positive; Gaussian rate undefined"
            )));
        }
        acc += 2.0 * cross[i] - gr[i] + one_gr.ln() - hr_sq[i] * (power[i] + n0) / one_gr;
    }
    Ok(acc / power.len() as f64 / std::f64::consts::LN_2)
}

/// Gaussian-input achievable rate (bits) of any absorbed law on matched-filter outputs.
///
/// `front` is the front-end response applied to the matched-filter output and
/// `gr` the target spectrum, both on the grid of `power`.
pub fn gaussian_air_mf(power: &SpectrumSamples, n0: f64, front: &SpectrumSamples, gr: &SpectrumSamples) -> Result<f64> {
    let p: Vec<f64> = power.values().iter().map(|v| v.re.max(0.0)).collect();
    let cross: Vec<f64> = front.values().iter().zip(&p).map(|(f, v)| f.re * v).collect();
    let hr: Vec<f64> = front.values().iter().zip(&p).map(|(f, v)| f.norm_sqr() * v).collect();
    gaussian_air_terms(n0, &p, &cross, &hr, &gr.re())
}

/// Same for whitened observations; `front` is the response `conj(Hr)` applied to `r`.
pub fn gaussian_air_forney(
    channel: &SpectrumSamples,
    n0: f64,
    front: &SpectrumSamples,
    gr: &SpectrumSamples,
) -> Result<f64> {
    let p: Vec<f64> = channel.values().iter().map(|v| v.norm_sqr()).collect();
    let cross: Vec<f64> = front.values().iter().zip(channel.values()).map(|(f, h)| (f * h).re).collect();
    let hr: Vec<f64> = front.values().iter().map(|f| f.norm_sqr()).collect();
    gaussian_air_terms(n0, &p, &cross, &hr, &gr.re())
}

/// Gaussian rate of a realized law on matched-filter outputs.
pub fn gaussian_air_of_law(power: &SpectrumSamples, n0: f64, law: &MismatchedLaw) -> Result<f64> {
    let n = power.len();
    let fe = &law.front_end;
    let front = crate::dsp::dtft(fe.taps(), fe.first_lag(), n)?;
    let gr = AutocorrTaps::new(law.target.iter().map(|m| m[(0, 0)]).collect())?.spectrum(n)?;
    gaussian_air_mf(power, n0, &front, &gr)
}
