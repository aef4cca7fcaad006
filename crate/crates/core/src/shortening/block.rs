use nalgebra::DMatrix;

use super::{check_n0, TAPER_BETA};
use crate::detector::{FrontEnd, MismatchedLaw};
use crate::dsp::{cholesky_pd, inverse_dtft, kaiser, SpectrumSamples};
use crate::error::{invalid, Error, Result};
use crate::C64;

pub(super) struct CsCore {
    pub c_opt: DMatrix<C64>,
    pub u: Vec<DMatrix<C64>>,
    pub gr: Vec<DMatrix<C64>>,
    pub i_opt: f64,
}

fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn condition_number(m: &DMatrix<C64>) -> f64 {
    let e = hermitize(m).symmetric_eigenvalues();
    let (lo, hi) = e.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v.abs())));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `log2 det` of a Hermitian positive-definite matrix.
pub(super) fn log2_det_pd(m: &DMatrix<C64>, what: &str) -> Result<f64> {
    let chol = cholesky_pd(m).ok_or_else(|| Error::Degenerate(format!("{what} is not positive definite")))?;
    Ok(chol.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum::<f64>() / std::f64::consts::LN_2)
}

/// Block Toeplitz matrix with blocks `(i, j) -> B_{j-i}` for lags `1..=L`.
fn block_toeplitz(b: &[DMatrix<C64>], l: usize) -> DMatrix<C64> {
    let k = b[0].nrows();
    let mut m = DMatrix::zeros(l * k, l * k);
    for i in 0..l {
        for j in 0..l {
            let blk = if j >= i { b[j - i].clone() } else { b[i - j].adjoint() };
            m.view_mut((i * k, j * k), (k, k)).copy_from(&blk);
        }
    }
    m
}

/// Shared CS solution from `B_0..B_L`.
pub(super) fn cs_core(b: &[DMatrix<C64>], v: &DMatrix<C64>) -> Result<CsCore> {
    let l = b.len() - 1;
    let k = b[0].nrows();
    let mut c = hermitize(&b[0]);
    let mut x = DMatrix::<C64>::zeros(l * k, k);
    if l > 0 {
        let big = block_toeplitz(b, l);
        let chol = cholesky_pd(&big).ok_or_else(|| {
            Error::Degenerate(format!(
                "error-correlation matrix is not positive definite (condition number {:.3e})",
                condition_number(&big)
            ))
        })?;
        let mut row = DMatrix::<C64>::zeros(k, l * k);
        for i in 0..l {
            row.view_mut((0, i * k), (k, k)).copy_from(&b[i + 1]);
        }
        x = chol.solve(&row.adjoint());
        c = hermitize(&(&b[0] - &row * &x));
    }
    let c_inv = cholesky_pd(&c)
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::Degenerate("prediction-error matrix C is not positive definite".into()))?;
    let u0 =
        cholesky_pd(&c_inv).ok_or_else(|| Error::Degenerate("C^-1 is not positive definite".into()))?.l().adjoint();
    let mut u = vec![u0.clone()];
    for i in 0..l {
        let xi = x.view((i * k, 0), (k, k)).adjoint();
        u.push(-(&u0 * xi));
    }
    let v_inv = cholesky_pd(v)
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::InvalidInput("V must be Hermitian positive definite".into()))?;
    let gr = (0..=l)
        .map(|i| {
            let mut s = DMatrix::zeros(k, k);
            for j in i..=l {
                s += u[j - i].adjoint() * &u[j];
            }
            if i == 0 {
                s = hermitize(&(s - &v_inv));
            }
            s
        })
        .collect();
    let i_opt = log2_det_pd(v, "V")? - log2_det_pd(&c, "C")?;
    Ok(CsCore { c_opt: c, u, gr, i_opt })
}

/// Entrywise inverse DTFT of a matrix spectrum over lags `first..=last`.
pub fn block_lag_spectrum(spec: &[DMatrix<C64>], first: i64, last: i64) -> Result<Vec<DMatrix<C64>>> {
    let (r, c) = spec.first().map(|m| m.shape()).unwrap_or((0, 0));
    if r == 0 {
        return invalid("empty matrix spectrum");
    }
    let count = (last - first + 1) as usize;
    let mut out = vec![DMatrix::zeros(r, c); count];
    for a in 0..r {
        for b in 0..c {
            let s = SpectrumSamples::new(spec.iter().map(|m| m[(a, b)]).collect())?;
            for (i, v) in inverse_dtft(&s, first, last)?.into_iter().enumerate() {
                out[i][(a, b)] = v;
            }
        }
    }
    Ok(out)
}

fn block_spectrum_of(lags: &[DMatrix<C64>], n: usize) -> Vec<DMatrix<C64>> {
    let k = lags[0].nrows();
    let l = lags.len() as i64 - 1;
    (0..n)
        .map(|t| {
            let w = crate::dsp::omega(t, n);
            let mut s = DMatrix::zeros(k, k);
            for i in -l..=l {
                let m = if i >= 0 { lags[i as usize].clone() } else { lags[(-i) as usize].adjoint() };
                s += m * C64::from_polar(1.0, -w * i as f64);
            }
            s
        })
        .collect()
}

/// Block CS design for vector symbols with correlation `V`.
#[derive(Clone, Debug)]
pub struct BlockShortenerDesign {
    pub memory: usize,
    pub n0: f64,
    pub v: DMatrix<C64>,
    /// `B_0..B_L`.
    pub b: Vec<DMatrix<C64>>,
    pub c_opt: DMatrix<C64>,
    pub u: Vec<DMatrix<C64>>,
    pub gr: Vec<DMatrix<C64>>,
    pub i_opt: f64,
    g_spec: Vec<DMatrix<C64>>,
}

/// Block CS from the matrix spectrum `G(omega) = H^H H` on the standard grid.
pub fn design_block_cs(
    g_spec: &[DMatrix<C64>],
    v: &DMatrix<C64>,
    n0: f64,
    memory: usize,
) -> Result<BlockShortenerDesign> {
    check_n0(n0)?;
    let k = v.nrows();
    if k == 0 || k > 8 || v.shape() != (k, k) {
        return invalid("V must be square with 1 <= K <= 8");
    }
    if g_spec.is_empty() || g_spec.iter().any(|m| m.shape() != (k, k)) {
        return invalid("G(omega) must be K x K on every grid point");
    }
    if (v - v.adjoint()).norm() > 1e-12 * (1.0 + v.norm()) || cholesky_pd(v).is_none() {
        return invalid("V must be Hermitian positive definite");
    }
    let unit = k == 1 && v[(0, 0)] == C64::new(1.0, 0.0);
    let b_spec: Vec<DMatrix<C64>> = if unit {
        g_spec.iter().map(|g| DMatrix::from_element(1, 1, C64::new(n0 / (g[(0, 0)].re.max(0.0) + n0), 0.0))).collect()
    } else {
        let v_inv = cholesky_pd(v).unwrap().inverse();
        g_spec
            .iter()
            .map(|g| {
                let a = hermitize(&(&v_inv + g * C64::new(1.0 / n0, 0.0)));
                cholesky_pd(&a)
                    .map(|c| c.inverse())
                    .ok_or_else(|| Error::Degenerate("V^-1 + G/N0 is not positive definite".into()))
            })
            .collect::<Result<_>>()?
    };
    let b = block_lag_spectrum(&b_spec, 0, memory as i64)?;
    let core = cs_core(&b, v)?;
    Ok(BlockShortenerDesign {
        memory,
        n0,
        v: v.clone(),
        b,
        c_opt: core.c_opt,
        u: core.u,
        gr: core.gr,
        i_opt: core.i_opt,
        g_spec: g_spec.to_vec(),
    })
}

impl BlockShortenerDesign {
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn gr_spectrum(&self, n: usize) -> Vec<DMatrix<C64>> {
        block_spectrum_of(&self.gr, n)
    }

    /// Front end on matched-filter outputs: `(Gr + V^-1) V (G V + N0 I)^-1`.
    pub fn mf_front_end_spectrum(&self) -> Result<Vec<DMatrix<C64>>> {
        let k = self.dim();
        let v_inv = cholesky_pd(&self.v).unwrap().inverse();
        let gr = self.gr_spectrum(self.g_spec.len());
        self.g_spec
            .iter()
            .zip(gr)
            .map(|(g, r)| {
                let m = g * &self.v + DMatrix::identity(k, k) * C64::new(self.n0, 0.0);
                let inv = m.try_inverse().ok_or_else(|| Error::Degenerate("G V + N0 I is singular".into()))?;
                Ok((r + &v_inv) * &self.v * inv)
            })
            .collect()
    }

    pub fn law_for_matched_filter(&self, max_lag: usize) -> Result<MismatchedLaw> {
        let m = max_lag as i64;
        let taps = block_lag_spectrum(&self.mf_front_end_spectrum()?, -m, m)?;
        let half = max_lag as f64 / 2.0;
        let taps: Vec<DMatrix<C64>> = taps
            .into_iter()
            .zip(-m..=m)
            .map(|(t, i)| t * C64::new(kaiser((i.abs() as f64 - half).max(0.0), half, TAPER_BETA), 0.0))
            .collect();
        MismatchedLaw::new(FrontEnd::from_blocks(-m, &taps)?, self.gr.clone())
    }
}

/// Gaussian rate of the CS detector over a finite block of `n` vector symbols (bits per vector).
///
/// `h` are the Forney blocks; the channel matrix is square block lower-triangular.
pub fn finite_n_gaussian_air(h: &[DMatrix<C64>], v: &DMatrix<C64>, n0: f64, memory: usize, n: usize) -> Result<f64> {
    check_n0(n0)?;
    let (kr, k) = h.first().map(|m| m.shape()).unwrap_or((0, 0));
    if k == 0 || n == 0 || v.shape() != (k, k) || h.iter().any(|m| m.shape() != (kr, k)) {
        return invalid("inconsistent block sizes");
    }
    let v_inv = cholesky_pd(v)
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidInput("V must be Hermitian positive definite".into()))?;
    let mut big_h = DMatrix::<C64>::zeros(n * kr, n * k);
    for t in 0..n {
        for (i, hi) in h.iter().enumerate() {
            if t >= i {
                big_h.view_mut((t * kr, (t - i) * k), (kr, k)).copy_from(hi);
            }
        }
    }
    let mut a = big_h.adjoint() * &big_h * C64::new(1.0 / n0, 0.0);
    for t in 0..n {
        let mut blk = a.view_mut((t * k, t * k), (k, k));
        blk += &v_inv;
    }
    let big_b = cholesky_pd(&a)
        .ok_or_else(|| Error::Degenerate("finite-N information matrix is not positive definite".into()))?
        .inverse();
    let mut total = 0.0;
    for t in 0..n {
        let l = memory.min(n - 1 - t);
        let btt = big_b.view((t * k, t * k), (k, k)).into_owned();
        let c = if l == 0 {
            btt
        } else {
            let row = big_b.view((t * k, (t + 1) * k), (k, l * k)).into_owned();
            let sub = big_b.view(((t + 1) * k, (t + 1) * k), (l * k, l * k)).into_owned();
            let x = cholesky_pd(&sub)
                .ok_or_else(|| Error::Degenerate("finite-N sub-block is not positive definite".into()))?
                .solve(&row.adjoint());
            btt - row * x
        };
        total -= log2_det_pd(&c, "finite-N C")?;
    }
    Ok(log2_det_pd(v, "V")? + total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{ChannelTaps, DEFAULT_GRID};
    use crate::obs::BlockForneyModel;
    use crate::shortening::{design_scalar_cs, gaussian_air_mf};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_mimo() -> Vec<DMatrix<C64>> {
        vec![
            DMatrix::from_row_slice(2, 2, &[c(0.8, 0.1), c(0.3, -0.2), c(-0.1, 0.4), c(0.7, 0.0)]),
            DMatrix::from_row_slice(2, 2, &[c(0.2, 0.3), c(-0.4, 0.1), c(0.3, 0.0), c(0.1, -0.3)]),
        ]
    }

    fn g_spec(h: &[DMatrix<C64>], n: usize) -> Vec<DMatrix<C64>> {
        BlockForneyModel::new(h.to_vec(), 1.0).unwrap().spectrum(n).iter().map(|m| m.adjoint() * m).collect()
    }

    fn mimo_capacity(h: &[DMatrix<C64>], n0: f64) -> f64 {
        let gs = g_spec(h, DEFAULT_GRID);
        let k = h[0].ncols();
        gs.iter().map(|g| log2_det_pd(&(DMatrix::identity(k, k) + g * c(1.0 / n0, 0.0)), "I+G").unwrap()).sum::<f64>()
            / gs.len() as f64
    }

    #[test]
    fn unit_block_matches_scalar_path_exactly() {
        let h = ChannelTaps::epr4();
        let p = h.power_spectrum(DEFAULT_GRID).unwrap();
        let gs: Vec<DMatrix<C64>> = p.values().iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        for l in 0..=3 {
            let s = design_scalar_cs(&p, 0.25, l).unwrap();
            let b = design_block_cs(&gs, &DMatrix::identity(1, 1), 0.25, l).unwrap();
            assert_eq!(s.i_opt, b.i_opt);
            assert_eq!(s.c_opt, b.c_opt[(0, 0)].re);
            for i in 0..=l {
                assert_eq!(s.gr.taps()[i], b.gr[i][(0, 0)]);
                assert_eq!(s.u[i], b.u[i][(0, 0)]);
            }
        }
    }

    #[test]
    fn full_memory_reaches_mimo_capacity() {
        let h = random_mimo();
        let n0 = 0.3;
        let d = design_block_cs(&g_spec(&h, DEFAULT_GRID), &DMatrix::identity(2, 2), n0, 1).unwrap();
        assert!((d.i_opt - mimo_capacity(&h, n0)).abs() < 1e-6);
        let l0 = design_block_cs(&g_spec(&h, DEFAULT_GRID), &DMatrix::identity(2, 2), n0, 0).unwrap();
        assert!(l0.i_opt < d.i_opt);
    }

    #[test]
    fn gr_plus_v_inverse_factors_as_u() {
        let h = random_mimo();
        let v = DMatrix::from_row_slice(2, 2, &[c(1.2, 0.0), c(0.3, 0.1), c(0.3, -0.1), c(0.8, 0.0)]);
        let d = design_block_cs(&g_spec(&h, 512), &v, 0.5, 1).unwrap();
        let cu = d.u[0].adjoint() * &d.u[0];
        assert!((cu - d.c_opt.clone().try_inverse().unwrap()).norm() < 1e-9);
        assert!((&d.gr[1] - d.u[0].adjoint() * &d.u[1]).norm() < 1e-12);
    }

    #[test]
    fn realized_block_front_end_gives_closed_form_rate_for_k1() {
        let h = ChannelTaps::from_real(&[0.9, 0.4, -0.2]).unwrap();
        let p = h.power_spectrum(DEFAULT_GRID).unwrap();
        let gs: Vec<DMatrix<C64>> = p.values().iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let d = design_block_cs(&gs, &DMatrix::identity(1, 1), 0.2, 1).unwrap();
        let f = SpectrumSamples::new(d.mf_front_end_spectrum().unwrap().iter().map(|m| m[(0, 0)]).collect()).unwrap();
        let gr = SpectrumSamples::new(d.gr_spectrum(DEFAULT_GRID).iter().map(|m| m[(0, 0)]).collect()).unwrap();
        assert!((gaussian_air_mf(&p, 0.2, &f, &gr).unwrap() - d.i_opt).abs() < 1e-9);
    }

    #[test]
    fn finite_n_full_memory_is_exact_block_information() {
        let h = random_mimo();
        let n0 = 0.4;
        let n = 6;
        let v = DMatrix::identity(2, 2);
        let air = finite_n_gaussian_air(&h, &v, n0, n - 1, n).unwrap();
        let mut big = DMatrix::<C64>::zeros(2 * n, 2 * n);
        for t in 0..n {
            for (i, hi) in h.iter().enumerate() {
                if t >= i {
                    big.view_mut((2 * t, 2 * (t - i)), (2, 2)).copy_from(hi);
                }
            }
        }
        let exact = log2_det_pd(&(DMatrix::identity(2 * n, 2 * n) + big.adjoint() * big * c(1.0 / n0, 0.0)), "x")
            .unwrap()
            / n as f64;
        assert!((air - exact).abs() < 1e-9);
    }

    #[test]
    fn finite_n_converges_to_stationary_rate() {
        let h = random_mimo();
        let v = DMatrix::identity(2, 2);
        let d = design_block_cs(&g_spec(&h, DEFAULT_GRID), &v, 0.5, 1).unwrap();
        let air = finite_n_gaussian_air(&h, &v, 0.5, 1, 128).unwrap();
        assert!((air - d.i_opt).abs() < 0.02, "{air} vs {}", d.i_opt);
    }

    #[test]
    fn rejects_bad_v() {
        let gs = vec![DMatrix::<C64>::identity(2, 2); 16];
        let v = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(design_block_cs(&gs, &v, 0.1, 1).is_err());
    }
}
