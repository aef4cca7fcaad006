use nalgebra::{DMatrix, DVector};

use super::check_n0;
use crate::detector::{FrontEnd, MismatchedLaw};
use crate::dsp::{cholesky_pd, convolve, ChannelTaps};
use crate::error::{invalid, Error, Result};
use crate::C64;

/// Classical MMSE shortener: a finite prefilter `W` shaping the channel into a monic target `Q`.
#[derive(Clone, Debug)]
pub struct LegacyDesign {
    /// Prefilter output `z_k = sum_j conj(w_j) r_{k+j}`, `j = first_offset..`.
    pub prefilter: Vec<C64>,
    pub first_offset: i64,
    /// Target `q_0 = 1, q_1..q_L`.
    pub target: Vec<C64>,
    pub mse: f64,
    pub law: MismatchedLaw,
}

/// Joint MMSE design of prefilter and target for whitened observations.
///
/// The metric is `-|z_k - sum_i q_i c_{k-i}|^2 / mse` written in the absorbed form.
pub fn mmse_legacy_cs(h: &ChannelTaps, n0: f64, memory: usize, prefilter_len: usize) -> Result<LegacyDesign> {
    check_n0(n0)?;
    if prefilter_len == 0 {
        return invalid("prefilter length must be positive");
    }
    let nu = h.memory() as i64;
    let len = prefilter_len as i64;
    let first = -((len - 1 - nu).max(0) / 2);
    let last = first + len - 1;
    // Symbols c_{k+m} for m in m_lo..=m_hi cover both the window and the target.
    let m_lo = (first - nu).min(-(memory as i64));
    let m_hi = last.max(0);
    let width = (m_hi - m_lo + 1) as usize;
    let a = DMatrix::from_fn(prefilter_len, width, |j, m| h.get(first + j as i64 - (m_lo + m as i64)));
    let ryy = &a * a.adjoint() + DMatrix::identity(prefilter_len, prefilter_len) * C64::new(n0, 0.0);
    let ryc = DMatrix::from_fn(prefilter_len, memory + 1, |j, i| a[(j, (-(i as i64) - m_lo) as usize)]);
    let chol = cholesky_pd(&ryy).ok_or_else(|| Error::Degenerate("prefilter normal equations are singular".into()))?;
    let sol = chol.solve(&ryc);
    let phi = DMatrix::identity(memory + 1, memory + 1) - ryc.adjoint() * &sol;
    let phi = (&phi + phi.adjoint()) * C64::new(0.5, 0.0);
    let mut e0 = DVector::zeros(memory + 1);
    e0[0] = C64::new(1.0, 0.0);
    let phi_inv_e0 =
        cholesky_pd(&phi).ok_or_else(|| Error::Degenerate("target normal equations are singular".into()))?.solve(&e0);
    let denom = phi_inv_e0[0].re;
    if !(denom > 0.0) {
        return Err(Error::Degenerate("non-positive MMSE normaliser".into()));
    }
    let mse = 1.0 / denom;
    let p = phi_inv_e0 * C64::new(mse, 0.0);
    let w = sol * &p;
    let target: Vec<C64> = p.iter().map(|v| v.conj()).collect();
    let prefilter: Vec<C64> = w.iter().copied().collect();

    // z = prefilter as a filter on r (lags -last..=-first), then x_k = sum_i conj(q_i) z_{k+i} / mse.
    let pre: Vec<C64> = prefilter.iter().rev().map(|v| v.conj()).collect();
    let tq: Vec<C64> = target.iter().rev().map(|v| v.conj() / mse).collect();
    let fe = FrontEnd::scalar(-last - memory as i64, convolve(&pre, &tq));
    let q = ChannelTaps::new(target.clone())?;
    let gr = q.autocorrelation().scaled(1.0 / mse);
    let law = MismatchedLaw::scalar(fe, gr.taps())?;
    Ok(LegacyDesign { prefilter, first_offset: first, target, mse, law })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{dtft, AutocorrTaps, DEFAULT_GRID};
    use crate::shortening::{design_scalar_cs_for_channel, gaussian_air_forney};

    fn legacy_rate(h: &ChannelTaps, n0: f64, l: usize, len: usize) -> f64 {
        let d = mmse_legacy_cs(h, n0, l, len).unwrap();
        let fe = &d.law.front_end;
        let front = dtft(fe.taps(), fe.first_lag(), DEFAULT_GRID).unwrap();
        let gr = AutocorrTaps::new(d.law.target.iter().map(|m| m[(0, 0)]).collect())
            .unwrap()
            .spectrum(DEFAULT_GRID)
            .unwrap();
        gaussian_air_forney(&h.spectrum(DEFAULT_GRID).unwrap(), n0, &front, &gr).unwrap()
    }

    #[test]
    fn isi_free_reduces_to_scaled_identity() {
        let h = ChannelTaps::from_real(&[1.0]).unwrap();
        let d = mmse_legacy_cs(&h, 0.25, 0, 7).unwrap();
        assert!((d.mse - 0.2).abs() < 1e-12);
        for (j, w) in d.prefilter.iter().enumerate() {
            let want = if d.first_offset + j as i64 == 0 { 0.8 } else { 0.0 };
            assert!((w.re - want).abs() < 1e-12 && w.im.abs() < 1e-12);
        }
    }

    #[test]
    fn front_end_is_prefilter_then_target_correlation() {
        let h = ChannelTaps::from_real(&[0.9, 0.5, -0.3]).unwrap();
        let d = mmse_legacy_cs(&h, 0.2, 1, 9).unwrap();
        let r: Vec<C64> = (0..40).map(|i| C64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos())).collect();
        let x = d.law.front_end.apply(&r, 20);
        let z = |k: i64| -> C64 {
            d.prefilter
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    let i = k + d.first_offset + j as i64;
                    if (0..40).contains(&i) {
                        w.conj() * r[i as usize]
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
                .sum()
        };
        for k in 5..15i64 {
            let want = (z(k) + d.target[1].conj() * z(k + 1)) / d.mse;
            assert!((x[k as usize] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn legacy_rate_never_exceeds_cs() {
        let h = ChannelTaps::epr4();
        for snr in [0.0, 4.0, 8.0] {
            let n0 = 10f64.powf(-snr / 10.0);
            let cs = design_scalar_cs_for_channel(&h, n0, 1).unwrap();
            let legacy = legacy_rate(&h, n0, 1, 31);
            assert!(legacy <= cs.i_opt + 1e-9, "{legacy} vs {}", cs.i_opt);
        }
    }

    #[test]
    fn long_prefilter_target_is_cs_target_plus_identity() {
        let h = ChannelTaps::epr4();
        let n0 = 0.25;
        let cs = design_scalar_cs_for_channel(&h, n0, 1).unwrap();
        let d = mmse_legacy_cs(&h, n0, 1, 121).unwrap();
        assert!((d.mse - cs.c_opt).abs() < 1e-6);
        assert!((d.law.target[0][(0, 0)] - cs.gr.at(0) - 1.0).norm() < 1e-5);
        assert!((d.law.target[1][(0, 0)] - cs.gr.at(1)).norm() < 1e-5);
    }

    #[test]
    fn full_memory_gap_closes_with_snr() {
        let h = ChannelTaps::epr4();
        let gap = |snr: f64| {
            let n0 = 10f64.powf(-snr / 10.0);
            design_scalar_cs_for_channel(&h, n0, 3).unwrap().i_opt - legacy_rate(&h, n0, 3, 61)
        };
        let (lo, mid, hi) = (gap(0.0), gap(10.0), gap(20.0));
        assert!(lo > mid && mid > hi && hi >= -1e-9, "{lo} {mid} {hi}");
        assert!(hi < 0.15, "{hi}");
    }
}
