//! Shared signal-processing primitives.

mod constellation;
mod pulse;
mod rng;
mod spectrum;
mod taps;
mod window;

pub use constellation::{Constellation, Modulation, APSK16_GAMMA, APSK32_GAMMA};
pub use pulse::{cross_correlation, rc_spectrum, rc_value, rrc_value, PulseSamples, DEFAULT_SPAN};
pub use rng::SeededRng;
pub use spectrum::{dtft, inverse_dtft, omega, SpectrumSamples, DEFAULT_GRID};
pub use taps::{banded_cholesky_logdet, convolve, AutocorrTaps, ChannelTaps};
pub use window::{bessel_i0, kaiser};

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{invalid, Error, Result};
use crate::C64;

/// Cholesky factor of the Hermitian part of `m`, or `None` unless it is positive definite.
///
/// The complex factorization in nalgebra accepts negative pivots, so the diagonal is checked here.
pub fn cholesky_pd(m: &DMatrix<C64>) -> Option<Cholesky<C64, Dyn>> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let chol = h.cholesky()?;
    let ok = chol.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.im.abs() <= 1e-12 * d.re && d.re.is_finite());
    ok.then_some(chol)
}

/// Per-symbol log-determinant of `I + G_N / N0` in bits, finite `N` and the limit.
///
/// The first value is `(1/N) log2 det(I + G_N/N0)` by banded Cholesky,
/// the second `(1/2pi) integral log2(1 + G(omega)/N0)`.
pub fn szego_logdet(g: &AutocorrTaps, n: usize, n0: f64) -> Result<(f64, f64)> {
    if n0 <= 0.0 {
        return invalid("N0 must be positive");
    }
    if n == 0 {
        return invalid("N must be positive");
    }
    let finite = banded_cholesky_logdet(n, g.memory().min(n - 1), |i, j| {
        let v = g.at(i as i64 - j as i64) / n0;
        if i == j {
            v + 1.0
        } else {
            v
        }
    })? / (n as f64 * std::f64::consts::LN_2);
    let spec = g.spectrum(DEFAULT_GRID.max(16 * (g.memory() + 1)))?;
    let asym = spec.values().iter().map(|v| (1.0 + v.re / n0).log2()).sum::<f64>() / spec.len() as f64;
    Ok((finite, asym))
}

/// Parses a tap file: one `re im` pair (or a lone real value) per line; `#` starts a comment.
pub fn parse_taps(text: &str) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.contains('=') {
            continue;
        }
        let parts: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        let num =
            |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidInput(format!("line {}: bad number '{s}'", ln + 1)));
        match parts.as_slice() {
            [re] => out.push(C64::new(num(re)?, 0.0)),
            [re, im] => out.push(C64::new(num(re)?, num(im)?)),
            _ => return invalid(format!("line {}: expected 're im'", ln + 1)),
        }
    }
    if out.is_empty() {
        return invalid("no taps found");
    }
    Ok(out)
}

pub fn format_taps(taps: &[C64]) -> String {
    taps.iter().map(|t| format!("{:.17e} {:.17e}\n", t.re, t.im)).collect()
}

pub fn read_taps(path: &std::path::Path) -> Result<Vec<C64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_taps(&text)
}
