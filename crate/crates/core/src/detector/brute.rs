use super::law::{Alphabet, DetectionLaw};
use crate::error::{invalid, Result};
use crate::C64;

pub const MAX_SEQUENCES: u64 = 1 << 24;

/// Exhaustive APPs over all `M^N` sequences.
#[derive(Clone, Debug)]
pub struct BruteForce {
    pub probs: Vec<f64>,
    pub alphabet_size: usize,
    pub log_likelihood: f64,
}

/// `log q(r | c)` evaluated from the sequence form of the law.
pub fn sequence_log_metric(law: &DetectionLaw, alphabet: &Alphabet, obs: &[C64], idx: &[usize]) -> f64 {
    let n = idx.len();
    let c = alphabet.map(idx);
    let k = alphabet.dim();
    match law {
        DetectionLaw::Forney(f) => {
            let (rd, _) = f.taps[0].shape();
            let nu = f.memory();
            let mut total = 0.0;
            for t in 0..n + nu {
                for row in 0..rd {
                    let mut mean = C64::new(0.0, 0.0);
                    for (i, h) in f.taps.iter().enumerate() {
                        if t >= i && t - i < n {
                            for col in 0..k {
                                mean += h[(row, col)] * c[(t - i) * k + col];
                            }
                        }
                    }
                    total -= (obs[t * rd + row] - mean).norm_sqr() / f.n0;
                }
            }
            total
        }
        DetectionLaw::Mismatched(m) => {
            let x = m.front_end.apply(obs, n);
            let lin: f64 = c.iter().zip(&x).map(|(a, b)| 2.0 * (a.conj() * b).re).sum();
            let l = m.memory() as i64;
            let mut quad = 0.0;
            for t in 0..n as i64 {
                for u in (t - l).max(0)..=(t + l).min(n as i64 - 1) {
                    let g = m.target_at(t - u);
                    for r in 0..k {
                        for col in 0..k {
                            quad += (c[t as usize * k + r].conj() * g[(r, col)] * c[u as usize * k + col]).re;
                        }
                    }
                }
            }
            lin - quad
        }
    }
}

pub fn brute_force_map(
    law: &DetectionLaw,
    alphabet: &Alphabet,
    obs: &[C64],
    n: usize,
    priors: Option<&[f64]>,
) -> Result<BruteForce> {
    let m = alphabet.size();
    let count = (m as u64).checked_pow(n as u32).filter(|&c| c <= MAX_SEQUENCES);
    let Some(count) = count else {
        return invalid(format!("{m}^{n} sequences exceed the exhaustive-search limit"));
    };
    if let Some(p) = priors {
        if p.len() != n * m {
            return invalid("prior table has the wrong size");
        }
    }
    let mut logs = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; n];
    for code in 0..count {
        let mut r = code;
        for slot in idx.iter_mut() {
            *slot = (r % m as u64) as usize;
            r /= m as u64;
        }
        let prior: f64 = idx.iter().enumerate().map(|(k, &a)| priors.map_or(-(m as f64).ln(), |p| p[k * m + a])).sum();
        logs.push(prior + sequence_log_metric(law, alphabet, obs, &idx));
    }
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut probs = vec![0.0; n * m];
    for (code, w) in weights.iter().enumerate() {
        let mut r = code;
        for k in 0..n {
            probs[k * m + r % m] += w / z;
            r /= m;
        }
    }
    Ok(BruteForce { probs, alphabet_size: m, log_likelihood: mx + z.ln() })
}
