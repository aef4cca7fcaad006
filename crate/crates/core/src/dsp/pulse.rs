use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::C64;

pub const DEFAULT_SPAN: usize = 32;

/// Oversampled continuous-time pulse; sample `m` sits at `t = (m - center) / oversampling`
/// in units of the symbol time.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSamples {
    samples: Vec<C64>,
    oversampling: usize,
    center: usize,
}

impl PulseSamples {
    pub fn from_samples(samples: Vec<C64>, oversampling: usize, center: usize) -> Result<Self> {
        if samples.is_empty() || oversampling == 0 || center >= samples.len() {
            return invalid("pulse needs samples, oversampling >= 1 and an in-range center");
        }
        Ok(Self { samples, oversampling, center })
    }

    pub fn rrc(alpha: f64, span: usize, oversampling: usize) -> Result<Self> {
        check(alpha, span, oversampling)?;
        Ok(Self::tabulate(span, oversampling, |t| rrc_value(alpha, t)).normalized())
    }

    pub fn rc(alpha: f64, span: usize, oversampling: usize) -> Result<Self> {
        check(alpha, span, oversampling)?;
        Ok(Self::tabulate(span, oversampling, |t| rc_value(alpha, t)).normalized())
    }

    /// Gaussian pulse with 3-dB bandwidth-time product `bt`.
    pub fn gaussian(bt: f64, span: usize, oversampling: usize) -> Result<Self> {
        if bt <= 0.0 {
            return invalid("BT must be positive");
        }
        check(0.0, span, oversampling)?;
        let k = 2.0 * PI * PI * bt * bt / 2f64.ln();
        Ok(Self::tabulate(span, oversampling, |t| (-k * t * t).exp()).normalized())
    }

    /// Unit-energy rectangle on `[0, 1)`.
    pub fn rectangular(oversampling: usize) -> Result<Self> {
        if oversampling == 0 {
            return invalid("oversampling must be >= 1");
        }
        Self::from_samples(vec![C64::new(1.0, 0.0); oversampling], oversampling, 0).map(|p| p.normalized())
    }

    fn tabulate(span: usize, os: usize, f: impl Fn(f64) -> f64) -> Self {
        let half = span * os / 2;
        let taper = (span / 8).max(1) as f64;
        let edge = span as f64 / 2.0;
        let samples = (0..=2 * half)
            .map(|m| {
                let t = (m as f64 - half as f64) / os as f64;
                let d = edge - t.abs();
                let w = if d >= taper { 1.0 } else { 0.5 - 0.5 * (PI * d / taper).cos() };
                C64::new(f(t) * w, 0.0)
            })
            .collect();
        Self { samples, oversampling: os, center: half }
    }

    pub fn normalized(mut self) -> Self {
        let e = self.energy().sqrt();
        if e > 0.0 {
            self.samples.iter_mut().for_each(|s| *s /= e);
        }
        self
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn time(&self, m: usize) -> f64 {
        (m as f64 - self.center as f64) / self.oversampling as f64
    }

    /// `integral |p(t)|^2 dt` by the rectangular rule.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.oversampling as f64
    }

    /// `integral p(t) conj(p(t - shift / oversampling)) dt` for an integer sample shift.
    pub fn correlation(&self, shift: i64) -> C64 {
        cross_correlation(self, self, shift, |_| C64::new(1.0, 0.0))
    }

    /// Pulse value at sample offset `k` relative to the center, zero outside the span.
    pub fn at_offset(&self, k: i64) -> C64 {
        let m = k + self.center as i64;
        if m < 0 {
            return C64::new(0.0, 0.0);
        }
        self.samples.get(m as usize).copied().unwrap_or_default()
    }

    /// Lowest and highest sample offsets relative to the center.
    pub fn offsets(&self) -> (i64, i64) {
        (-(self.center as i64), (self.samples.len() - 1 - self.center) as i64)
    }
}

/// `integral a(t) conj(b(t - shift/os)) w(t) dt` on the common sample grid.
pub fn cross_correlation(a: &PulseSamples, b: &PulseSamples, shift: i64, weight: impl Fn(f64) -> C64) -> C64 {
    assert_eq!(a.oversampling, b.oversampling, "pulses must share oversampling");
    let os = a.oversampling as f64;
    let (alo, ahi) = a.offsets();
    let (blo, bhi) = b.offsets();
    let lo = alo.max(blo + shift);
    let hi = ahi.min(bhi + shift);
    (lo..=hi).map(|k| a.at_offset(k) * b.at_offset(k - shift).conj() * weight(k as f64 / os)).sum::<C64>() / os
}

fn check(alpha: f64, span: usize, os: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("roll-off {alpha} outside [0, 1]"));
    }
    if span < 8 {
        return invalid(format!("span {span} below 8 symbols"));
    }
    if os < 1 {
        return invalid("oversampling must be >= 1");
    }
    Ok(())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub fn rrc_value(alpha: f64, t: f64) -> f64 {
    if alpha == 0.0 {
        return sinc(t);
    }
    if t.abs() < 1e-12 {
        return 1.0 - alpha + 4.0 * alpha / PI;
    }
    let x = 4.0 * alpha * t;
    if (x.abs() - 1.0).abs() < 1e-9 {
        let a = PI / (4.0 * alpha);
        return alpha / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    ((PI * t * (1.0 - alpha)).sin() + x * (PI * t * (1.0 + alpha)).cos()) / (PI * t * (1.0 - x * x))
}

pub fn rc_value(alpha: f64, t: f64) -> f64 {
    let x = 2.0 * alpha * t;
    if alpha > 0.0 && (x.abs() - 1.0).abs() < 1e-9 {
        return PI / 4.0 * sinc(1.0 / (2.0 * alpha));
    }
    sinc(t) * (PI * alpha * t).cos() / (1.0 - x * x)
}

/// Raised-cosine spectrum shape on `|f| <= (1+alpha)/2` (unit symbol time), value 1 in the flat part.
pub fn rc_spectrum(alpha: f64, f: f64) -> f64 {
    let f = f.abs();
    let f1 = (1.0 - alpha) / 2.0;
    let f2 = (1.0 + alpha) / 2.0;
    if f <= f1 {
        1.0
    } else if f <= f2 {
        0.5 * (1.0 + (PI / alpha * (f - f1)).cos())
    } else {
        0.0
    }
}
