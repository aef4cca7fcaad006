use nalgebra::{DMatrix, DVector};

use super::{design_from_b, ShortenerDesign};
use crate::detector::{FrontEnd, MismatchedLaw};
use crate::dsp::{cholesky_pd, convolve};
use crate::error::{invalid, Error, Result};
use crate::C64;

const MIN_TRAINING_PER_TAP: usize = 50;
const CHUNK: usize = 4096;

/// Training-based CS: LS linear estimator, error autocorrelation, then the closed form.
#[derive(Clone, Debug)]
pub struct AdaptiveDesign {
    /// Estimator `c_hat_k = sum_j w_j r_{k+j}` for `j = first_offset..`.
    pub mmse_taps: Vec<C64>,
    pub first_offset: i64,
    /// `b_hat_0..b_hat_L`.
    pub b_hat: Vec<C64>,
    pub training_mse: f64,
    /// `None` when the estimated error correlation is singular (noise-free training).
    pub design: Option<ShortenerDesign>,
}

impl AdaptiveDesign {
    pub fn is_degenerate(&self) -> bool {
        self.design.is_none()
    }

    /// Law on the received samples: the estimator followed by `Gr + 1`.
    pub fn law(&self) -> Result<MismatchedLaw> {
        let d = self.design.as_ref().ok_or_else(|| Error::Degenerate("adaptive design is degenerate".into()))?;
        let l = d.memory as i64;
        let est: Vec<C64> = self.mmse_taps.iter().rev().copied().collect();
        let est_first = -(self.first_offset + self.mmse_taps.len() as i64 - 1);
        let mut shaping: Vec<C64> = (-l..=l).map(|i| d.gr.at(i)).collect();
        shaping[l as usize] += 1.0;
        let taps = convolve(&est, &shaping);
        MismatchedLaw::scalar(FrontEnd::scalar(est_first - l, taps), d.gr.taps())
    }
}

/// Runs the adaptive design on a training block.
///
/// `received[k]` is the whitened sample at time `k`; it may extend past the
/// training block so the estimator can use future samples.
pub fn adaptive_cs(training: &[C64], received: &[C64], memory: usize, mmse_len: usize) -> Result<AdaptiveDesign> {
    if mmse_len == 0 {
        return invalid("estimator length must be positive");
    }
    if training.len() < MIN_TRAINING_PER_TAP * mmse_len {
        return invalid(format!(
            "training length {} below {} x estimator length {mmse_len}",
            training.len(),
            MIN_TRAINING_PER_TAP
        ));
    }
    // A causal channel spreads each symbol forward, so the window favours later samples.
    let past = (mmse_len as i64 - 1) / 3;
    let first = -past;
    let last = first + mmse_len as i64 - 1;
    let start = past as usize;
    let stop = training.len().min((received.len() as i64 - last).max(0) as usize);
    if stop <= start + memory + mmse_len {
        return invalid("received block too short for the training window");
    }
    let window = |k: usize| (first..=last).map(move |j| (k as i64 + j) as usize);

    let mut r = DMatrix::<C64>::zeros(mmse_len, mmse_len);
    let mut p = DVector::<C64>::zeros(mmse_len);
    let mut k = start;
    while k < stop {
        let end = (k + CHUNK).min(stop);
        let y = DMatrix::from_fn(end - k, mmse_len, |a, b| received[window(k + a).nth(b).unwrap()]);
        let c = DVector::from_iterator(end - k, training[k..end].iter().copied());
        let yh = y.adjoint();
        r += &yh * &y;
        p += yh * c;
        k = end;
    }
    let herm = (&r + r.adjoint()) * C64::new(0.5, 0.0);
    let w = cholesky_pd(&herm)
        .ok_or_else(|| {
            let e = herm.symmetric_eigenvalues();
            let (lo, hi) = e.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            Error::Degenerate(format!("training normal equations ill-conditioned (condition number {:.3e})", hi / lo))
        })?
        .solve(&p);

    let err: Vec<C64> = (start..stop)
        .map(|k| {
            let est: C64 = window(k).zip(w.iter()).map(|(i, t)| t * received[i]).sum();
            training[k] - est
        })
        .collect();
    let m = err.len();
    let mut b_hat: Vec<C64> =
        (0..=memory).map(|i| (0..m - i).map(|t| err[t + i] * err[t].conj()).sum::<C64>() / m as f64).collect();
    b_hat[0] = C64::new(b_hat[0].re, 0.0);
    let training_mse = b_hat[0].re;

    let scale = training.iter().map(|c| c.norm_sqr()).sum::<f64>() / training.len() as f64;
    let design = if training_mse <= 1e-12 * scale.max(1e-300) {
        None
    } else {
        match design_from_b(&b_hat, memory) {
            Ok(d) => Some(d),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        }
    };
    Ok(AdaptiveDesign { mmse_taps: w.iter().copied().collect(), first_offset: first, b_hat, training_mse, design })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{ChannelTaps, Constellation, Modulation, SeededRng, DEFAULT_GRID};
    use crate::obs::{ChannelSimulator, ForneyModel};
    use crate::shortening::design_scalar_cs;

    fn training(h: &ChannelTaps, n0: f64, n: usize, seed: u64) -> (Vec<C64>, Vec<C64>) {
        let c = Constellation::new(Modulation::Bpsk);
        let mut rng = SeededRng::new(seed);
        let sym: Vec<C64> = (0..n).map(|_| c.points()[rng.index(2)]).collect();
        let r =
            if n0 > 0.0 { ForneyModel::new(h.clone(), n0).unwrap().simulate(&sym, &mut rng) } else { h.convolve(&sym) };
        (sym, r)
    }

    #[test]
    fn noiseless_identity_channel_is_degenerate() {
        let h = ChannelTaps::from_real(&[1.0]).unwrap();
        let (c, r) = training(&h, 0.0, 2000, 1);
        let a = adaptive_cs(&c, &r, 1, 11).unwrap();
        assert!(a.is_degenerate());
        assert!(a.b_hat.iter().all(|b| b.norm() < 1e-12));
        assert!(a.law().is_err());
    }

    #[test]
    fn short_training_is_rejected() {
        let h = ChannelTaps::from_real(&[1.0]).unwrap();
        let (c, r) = training(&h, 0.1, 100, 1);
        assert!(adaptive_cs(&c, &r, 1, 11).is_err());
    }

    #[test]
    fn estimate_improves_with_training_length() {
        let h = ChannelTaps::epr4();
        let n0 = 10f64.powf(-0.6);
        let exact = design_scalar_cs(&h.power_spectrum(DEFAULT_GRID).unwrap(), n0, 1).unwrap();
        let err = |n: usize| {
            let (c, r) = training(&h, n0, n, 5);
            let a = adaptive_cs(&c, &r, 1, 31).unwrap();
            (0..=1).map(|i| (a.b_hat[i] - exact.b[i]).norm()).fold(0.0, f64::max)
        };
        let short = err(2000);
        let long = err(100_000);
        assert!(long < short, "{long} vs {short}");
        assert!(long < 0.01);
    }

    #[test]
    fn law_front_end_applies_estimator_then_shaping() {
        let h = ChannelTaps::from_real(&[1.0, 0.4]).unwrap();
        let (c, r) = training(&h, 0.2, 5000, 3);
        let a = adaptive_cs(&c, &r, 1, 15).unwrap();
        let law = a.law().unwrap();
        let x = law.front_end.apply(&r, 50);
        let d = a.design.as_ref().unwrap();
        let est: Vec<C64> = (0..60)
            .map(|k| {
                (0..a.mmse_taps.len())
                    .map(|j| {
                        let i = k as i64 + a.first_offset + j as i64;
                        if i < 0 {
                            C64::new(0.0, 0.0)
                        } else {
                            a.mmse_taps[j] * r[i as usize]
                        }
                    })
                    .sum()
            })
            .collect();
        for k in 1..49usize {
            let want = est[k] * (d.gr.at(0) + 1.0) + d.gr.at(1) * est[k - 1] + d.gr.at(-1) * est[k + 1];
            assert!((x[k] - want).norm() < 1e-10);
        }
    }
}
