use nalgebra::DMatrix;

use crate::dsp::{AutocorrTaps, ChannelTaps, Constellation};
use crate::error::{invalid, Result};
use crate::C64;

/// Symbol alphabet as a list of `dim`-vectors.
#[derive(Clone, Debug)]
pub struct Alphabet {
    dim: usize,
    points: Vec<C64>,
}

impl Alphabet {
    pub fn scalar(c: &Constellation) -> Result<Self> {
        if c.is_gaussian() {
            return invalid("trellis detection needs a finite constellation");
        }
        Ok(Self { dim: 1, points: c.points().to_vec() })
    }

    pub fn from_points(points: Vec<C64>) -> Result<Self> {
        if points.is_empty() {
            return invalid("empty alphabet");
        }
        Ok(Self { dim: 1, points })
    }

    /// All `M^K` combinations of `K` independent streams; stream 0 is the fastest digit.
    pub fn product(c: &Constellation, k: usize) -> Result<Self> {
        let base = Self::scalar(c)?;
        let m = base.size();
        let total = m.checked_pow(k as u32).filter(|&t| t <= 1 << 16);
        let Some(total) = total else {
            return invalid("product alphabet too large");
        };
        let mut points = Vec::with_capacity(total * k);
        for idx in 0..total {
            let mut r = idx;
            for _ in 0..k {
                points.push(c.points()[r % m]);
                r /= m;
            }
        }
        Ok(Self { dim: k, points })
    }

    /// Lifted vectors `[c, c|c|^2, ..., c|c|^{2(n-1)}]`.
    pub fn lifted(c: &Constellation, n: usize) -> Result<Self> {
        let base = Self::scalar(c)?;
        let mut points = Vec::with_capacity(base.size() * n);
        for &p in c.points() {
            for i in 0..n {
                points.push(p * p.norm_sqr().powi(i as i32));
            }
        }
        Ok(Self { dim: n, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn vector(&self, a: usize) -> &[C64] {
        &self.points[a * self.dim..(a + 1) * self.dim]
    }

    /// Flattened symbol vectors for an index sequence.
    pub fn map(&self, idx: &[usize]) -> Vec<C64> {
        idx.iter().flat_map(|&a| self.vector(a).iter().copied()).collect()
    }
}

/// Linear front end `x_k = sum_i F_i y_{k-i}` with `F_i` of size `k x r`, lags from `first_lag`.
#[derive(Clone, Debug)]
pub struct FrontEnd {
    first_lag: i64,
    taps: Vec<C64>,
    k: usize,
    r: usize,
}

impl FrontEnd {
    pub fn scalar(first_lag: i64, taps: Vec<C64>) -> Self {
        Self { first_lag, taps, k: 1, r: 1 }
    }

    pub fn from_blocks(first_lag: i64, blocks: &[DMatrix<C64>]) -> Result<Self> {
        let (k, r) = blocks.first().map(|b| b.shape()).unwrap_or((0, 0));
        if k == 0 || blocks.iter().any(|b| b.shape() != (k, r)) {
            return invalid("front-end blocks must be non-empty and equally sized");
        }
        let mut taps = Vec::with_capacity(blocks.len() * k * r);
        for b in blocks {
            for i in 0..k {
                for j in 0..r {
                    taps.push(b[(i, j)]);
                }
            }
        }
        Ok(Self { first_lag, taps, k, r })
    }

    pub fn identity(dim: usize, scale: f64) -> Self {
        let m = DMatrix::<C64>::identity(dim, dim) * C64::new(scale, 0.0);
        Self::from_blocks(0, &[m]).expect("identity block")
    }

    /// Matched filter `x_k = sum_i conj(h_i) r_{k+i} / n0`.
    pub fn matched(h: &ChannelTaps, n0: f64) -> Self {
        let nu = h.memory() as i64;
        let taps = (-nu..=0).map(|i| h.get(-i).conj() / n0).collect();
        Self::scalar(-nu, taps)
    }

    pub fn first_lag(&self) -> i64 {
        self.first_lag
    }

    pub fn num_taps(&self) -> usize {
        self.taps.len() / (self.k * self.r)
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn in_dim(&self) -> usize {
        self.r
    }

    pub fn out_dim(&self) -> usize {
        self.k
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { taps: self.taps.iter().map(|t| t * s).collect(), ..self.clone() }
    }

    /// Output for time steps `0..n`; `y` outside its range is zero.
    pub fn apply(&self, y: &[C64], n: usize) -> Vec<C64> {
        let (k, r) = (self.k, self.r);
        let len_y = (y.len() / r) as i64;
        let mut out = vec![C64::new(0.0, 0.0); n * k];
        for t in 0..n as i64 {
            for (j, block) in self.taps.chunks(k * r).enumerate() {
                let src = t - (self.first_lag + j as i64);
                if src < 0 || src >= len_y {
                    continue;
                }
                let yv = &y[src as usize * r..(src as usize + 1) * r];
                for a in 0..k {
                    let mut s = C64::new(0.0, 0.0);
                    for b in 0..r {
                        s += block[a * r + b] * yv[b];
                    }
                    out[t as usize * k + a] += s;
                }
            }
        }
        out
    }
}

/// Whitened-observation law: `log q(r_k | .) = -|| r_k - sum_i H_i c_{k-i} ||^2 / N0`.
#[derive(Clone, Debug)]
pub struct ForneyLaw {
    pub taps: Vec<DMatrix<C64>>,
    pub n0: f64,
}

impl ForneyLaw {
    pub fn new(taps: Vec<DMatrix<C64>>, n0: f64) -> Result<Self> {
        let shape = taps.first().map(|m| m.shape()).unwrap_or((0, 0));
        if shape.0 == 0 || taps.iter().any(|m| m.shape() != shape) {
            return invalid("Forney law needs equally sized channel blocks");
        }
        if !(n0 > 0.0) {
            return invalid("N0 must be positive");
        }
        Ok(Self { taps, n0 })
    }

    pub fn scalar(h: &ChannelTaps, n0: f64) -> Result<Self> {
        Self::new(h.taps().iter().map(|&t| DMatrix::from_element(1, 1, t)).collect(), n0)
    }

    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn obs_dim(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn symbol_dim(&self) -> usize {
        self.taps[0].ncols()
    }
}

/// Absorbed Ungerboeck-form law
/// `log q(r | c) = sum_k [2 Re(c_k^H x_k) - c_k^H Gr_0 c_k - 2 Re(c_k^H sum_{i=1..L} Gr_i c_{k-i})]`
/// with `x` the front-end output. Noise scaling is absorbed in `front_end` and `target`.
#[derive(Clone, Debug)]
pub struct MismatchedLaw {
    pub front_end: FrontEnd,
    pub target: Vec<DMatrix<C64>>,
}

impl MismatchedLaw {
    pub fn new(front_end: FrontEnd, target: Vec<DMatrix<C64>>) -> Result<Self> {
        let k = front_end.out_dim();
        if target.is_empty() || target.iter().any(|m| m.shape() != (k, k)) {
            return invalid("target blocks must match the front-end output dimension");
        }
        if (target[0].clone() - target[0].adjoint()).norm() > 1e-9 * (1.0 + target[0].norm()) {
            return invalid("Gr_0 must be Hermitian");
        }
        Ok(Self { front_end, target })
    }

    pub fn scalar(front_end: FrontEnd, target: &[C64]) -> Result<Self> {
        Self::new(front_end, target.iter().map(|&t| DMatrix::from_element(1, 1, t)).collect())
    }

    /// Exact detection from matched-filter outputs: `x = y / N0`, `Gr = G / N0`.
    pub fn exact_ungerboeck(g: &AutocorrTaps, n0: f64) -> Result<Self> {
        Self::scalar(FrontEnd::identity(1, 1.0 / n0), &g.scaled(1.0 / n0).taps().to_vec())
    }

    /// Exact detection from whitened outputs through the matched filter.
    pub fn exact_from_forney(h: &ChannelTaps, n0: f64) -> Result<Self> {
        Self::scalar(FrontEnd::matched(h, n0), &h.autocorrelation().scaled(1.0 / n0).taps().to_vec())
    }

    pub fn memory(&self) -> usize {
        self.target.len() - 1
    }

    /// Multiplies the whole metric by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self { front_end: self.front_end.scaled(s), target: self.target.iter().map(|m| m * C64::new(s, 0.0)).collect() }
    }

    pub fn target_at(&self, i: i64) -> DMatrix<C64> {
        let k = i.unsigned_abs() as usize;
        match self.target.get(k) {
            Some(m) if i >= 0 => m.clone(),
            Some(m) => m.adjoint(),
            None => DMatrix::zeros(self.front_end.out_dim(), self.front_end.out_dim()),
        }
    }
}

#[derive(Clone, Debug)]
pub enum DetectionLaw {
    Forney(ForneyLaw),
    Mismatched(MismatchedLaw),
}

impl DetectionLaw {
    pub fn memory(&self) -> usize {
        match self {
            DetectionLaw::Forney(l) => l.memory(),
            DetectionLaw::Mismatched(l) => l.memory(),
        }
    }
}

impl From<ForneyLaw> for DetectionLaw {
    fn from(l: ForneyLaw) -> Self {
        DetectionLaw::Forney(l)
    }
}

impl From<MismatchedLaw> for DetectionLaw {
    fn from(l: MismatchedLaw) -> Self {
        DetectionLaw::Mismatched(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Modulation;

    #[test]
    fn product_alphabet_enumerates_all_pairs() {
        let a = Alphabet::product(&Constellation::new(Modulation::Bpsk), 2).unwrap();
        assert_eq!(a.size(), 4);
        assert_eq!(a.vector(1), &[C64::new(-1.0, 0.0), C64::new(1.0, 0.0)]);
    }

    #[test]
    fn lifted_alphabet_for_psk_repeats_symbol() {
        let a = Alphabet::lifted(&Constellation::new(Modulation::Psk8), 3).unwrap();
        let v = a.vector(5);
        assert!((v[0] - v[2]).norm() < 1e-15);
    }

    #[test]
    fn matched_front_end_is_correlation() {
        let h = ChannelTaps::from_real(&[1.0, 0.5]).unwrap();
        let r = vec![C64::new(1.0, 0.0), C64::new(-0.5, 0.0), C64::new(-0.5, 0.0)];
        let x = FrontEnd::matched(&h, 1.0).apply(&r, 2);
        assert!((x[0] - C64::new(0.75, 0.0)).norm() < 1e-15);
        assert!((x[1] - C64::new(-0.75, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian_gr0() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, 1.0), C64::new(1.0, 0.0)],
        );
        assert!(MismatchedLaw::new(FrontEnd::identity(2, 1.0), vec![m]).is_err());
    }
}
