use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::C64;

/// DVB-S2 ring ratio for 16APSK (rate 2/3 entry).
pub const APSK16_GAMMA: f64 = 3.15;
/// DVB-S2 ring ratios for 32APSK (rate 3/4 entry).
pub const APSK32_GAMMA: (f64, f64) = (2.84, 5.27);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Psk8,
    Apsk16,
    Apsk32,
    /// Placeholder for Gaussian inputs; only closed-form paths accept it.
    Gaussian,
}

impl Modulation {
    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Psk8 => "8psk",
            Modulation::Apsk16 => "16apsk",
            Modulation::Apsk32 => "32apsk",
            Modulation::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Modulation::Bpsk,
            "qpsk" => Modulation::Qpsk,
            "8psk" | "psk8" => Modulation::Psk8,
            "16apsk" | "apsk16" => Modulation::Apsk16,
            "32apsk" | "apsk32" => Modulation::Apsk32,
            "gaussian" | "gauss" => Modulation::Gaussian,
            other => return Err(Error::InvalidInput(format!("unknown modulation '{other}'"))),
        })
    }
}

/// Zero-mean, unit-energy symbol alphabet.
#[derive(Clone, Debug)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<C64>,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let points = match modulation {
            Modulation::Bpsk => vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
            // index bit 0 drives the in-phase sign, bit 1 the quadrature sign
            Modulation::Qpsk => (0..4)
                .map(|a| {
                    let re = if a & 1 == 0 { 1.0 } else { -1.0 };
                    let im = if a & 2 == 0 { 1.0 } else { -1.0 };
                    C64::new(re, im) / 2f64.sqrt()
                })
                .collect(),
            Modulation::Psk8 => (0..8).map(|m| C64::from_polar(1.0, PI * (2 * m + 1) as f64 / 8.0)).collect(),
            Modulation::Apsk16 => return Self::apsk16(APSK16_GAMMA),
            Modulation::Apsk32 => return Self::apsk32(APSK32_GAMMA.0, APSK32_GAMMA.1),
            Modulation::Gaussian => Vec::new(),
        };
        Self { modulation, points }
    }

    /// 4+12 APSK with outer/inner radius ratio `gamma`.
    pub fn apsk16(gamma: f64) -> Self {
        let mut pts = ring(4, 1.0, PI / 4.0);
        pts.extend(ring(12, gamma, PI / 12.0));
        Self { modulation: Modulation::Apsk16, points: normalize(pts) }
    }

    /// 4+12+16 APSK with ring ratios `gamma1`, `gamma2` relative to the inner ring.
    pub fn apsk32(gamma1: f64, gamma2: f64) -> Self {
        let mut pts = ring(4, 1.0, PI / 4.0);
        pts.extend(ring(12, gamma1, PI / 12.0));
        pts.extend(ring(16, gamma2, 0.0));
        Self { modulation: Modulation::Apsk32, points: normalize(pts) }
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn is_gaussian(&self) -> bool {
        self.modulation == Modulation::Gaussian
    }

    pub fn bits_per_symbol(&self) -> f64 {
        (self.size() as f64).log2()
    }

    pub fn mean(&self) -> C64 {
        self.points.iter().sum::<C64>() / self.size() as f64
    }

    pub fn energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.size() as f64
    }

    pub fn is_constant_modulus(&self) -> bool {
        let e = self.energy();
        self.points.iter().all(|p| (p.norm_sqr() - e).abs() < 1e-12)
    }
}

fn ring(n: usize, radius: f64, phase: f64) -> Vec<C64> {
    (0..n).map(|k| C64::from_polar(radius, phase + 2.0 * PI * k as f64 / n as f64)).collect()
}

fn normalize(pts: Vec<C64>) -> Vec<C64> {
    let e = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
    let s = e.sqrt();
    pts.into_iter().map(|p| p / s).collect()
}
