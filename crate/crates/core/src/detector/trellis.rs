use super::law::{Alphabet, DetectionLaw, ForneyLaw, MismatchedLaw};
use crate::error::{invalid, Error, Result};
use crate::C64;

pub const MAX_STATES: usize = 1 << 20;

#[derive(Clone, Copy, Debug, Default)]
pub struct BcjrOptions {
    /// Replace log-sum-exp by max.
    pub max_log: bool,
}

/// Per-symbol APPs and forward normalisers.
#[derive(Clone, Debug)]
pub struct Posteriors {
    pub probs: Vec<f64>,
    pub alphabet_size: usize,
    /// `log` of the forward normaliser at each step, then the termination term.
    pub log_norms: Vec<f64>,
    /// `log q(r) = log sum_c P(c) q(r|c)`; exact unless `max_log`.
    pub log_likelihood: f64,
}

impl Posteriors {
    pub fn len(&self) -> usize {
        self.probs.len() / self.alphabet_size
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.probs[k * self.alphabet_size..(k + 1) * self.alphabet_size]
    }
}

/// Highest-APP symbol per step; ties resolve to the lowest index.
pub fn map_decide(p: &Posteriors) -> Vec<usize> {
    (0..p.len())
        .map(|k| {
            let row = p.at(k);
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

fn lse(vals: &[f64]) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn combine(vals: &[f64], max_log: bool) -> f64 {
    if max_log {
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        lse(vals)
    }
}

enum Source {
    Pending,
    Ung { x: Vec<C64>, steady: Vec<f64>, law: MismatchedLaw },
    For { r: Vec<C64>, means: Vec<C64>, law: ForneyLaw },
}

/// Branch metrics of one observation block.
pub(crate) struct Branches<'a> {
    alphabet: &'a Alphabet,
    m: usize,
    l: usize,
    states: usize,
    n: usize,
    src: Source,
    final_beta: Vec<f64>,
}

impl<'a> Branches<'a> {
    pub(crate) fn new(law: &DetectionLaw, alphabet: &'a Alphabet, obs: &[C64], n: usize) -> Result<Self> {
        let m = alphabet.size();
        let l = law.memory();
        let states = (m as u128).checked_pow(l as u32).unwrap_or(u128::MAX);
        if states > MAX_STATES as u128 {
            return Err(Error::TooManyStates { states, limit: MAX_STATES });
        }
        let states = states as usize;
        let mut b = Self { alphabet, m, l, states, n, src: Source::Pending, final_beta: vec![0.0; states] };
        match law {
            DetectionLaw::Mismatched(law) => {
                if law.front_end.out_dim() != alphabet.dim() {
                    return invalid("front-end output dimension differs from symbol dimension");
                }
                let x = law.front_end.apply(obs, n);
                let mut steady = vec![0.0; states * m];
                for s in 0..states {
                    let intf = b.ung_interference(law, s, l);
                    for a in 0..m {
                        steady[s * m + a] = ung_const(law, alphabet.vector(a), &intf);
                    }
                }
                b.src = Source::Ung { x, steady, law: law.clone() };
            }
            DetectionLaw::Forney(law) => {
                if law.symbol_dim() != alphabet.dim() {
                    return invalid("channel input dimension differs from symbol dimension");
                }
                let rd = law.obs_dim();
                if obs.len() != (n + l) * rd {
                    return invalid(format!(
                        "Forney observations must hold {} samples, got {}",
                        (n + l) * rd,
                        obs.len()
                    ));
                }
                let mut means = vec![C64::new(0.0, 0.0); states * m * rd];
                for s in 0..states {
                    for a in 0..m {
                        let mu = b.forney_mean(law, s, a, l);
                        means[(s * m + a) * rd..(s * m + a + 1) * rd].copy_from_slice(&mu);
                    }
                }
                b.final_beta = (0..states).map(|s| b.forney_tail(law, obs, s)).collect();
                b.src = Source::For { r: obs.to_vec(), means, law: law.clone() };
            }
        }
        Ok(b)
    }

    fn digit(&self, s: usize, j: usize) -> usize {
        (s / self.m.pow(j as u32 - 1)) % self.m
    }

    fn ung_interference(&self, law: &MismatchedLaw, s: usize, upto: usize) -> Vec<C64> {
        let k = self.alphabet.dim();
        let mut acc = vec![C64::new(0.0, 0.0); k];
        for i in 1..=upto.min(self.l) {
            let c = self.alphabet.vector(self.digit(s, i));
            let g = &law.target[i];
            for r in 0..k {
                for col in 0..k {
                    acc[r] += g[(r, col)] * c[col];
                }
            }
        }
        acc
    }

    fn forney_mean(&self, law: &ForneyLaw, s: usize, a: usize, upto: usize) -> Vec<C64> {
        let (rd, k) = law.taps[0].shape();
        let mut mu = vec![C64::new(0.0, 0.0); rd];
        let mut add = |h: &nalgebra::DMatrix<C64>, c: &[C64]| {
            for r in 0..rd {
                for col in 0..k {
                    mu[r] += h[(r, col)] * c[col];
                }
            }
        };
        add(&law.taps[0], self.alphabet.vector(a));
        for i in 1..=upto.min(self.l) {
            add(&law.taps[i], self.alphabet.vector(self.digit(s, i)));
        }
        mu
    }

    fn forney_tail(&self, law: &ForneyLaw, r: &[C64], s: usize) -> f64 {
        let (rd, k) = law.taps[0].shape();
        let n = self.n as i64;
        let mut total = 0.0;
        for t in 0..self.l {
            let mut mu = vec![C64::new(0.0, 0.0); rd];
            for i in (t + 1)..=self.l {
                let j = i - t;
                if n - (j as i64) < 0 {
                    continue;
                }
                let c = self.alphabet.vector(self.digit(s, j));
                for row in 0..rd {
                    for col in 0..k {
                        mu[row] += law.taps[i][(row, col)] * c[col];
                    }
                }
            }
            let obs = &r[(self.n + t) * rd..(self.n + t + 1) * rd];
            total -= obs.iter().zip(&mu).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / law.n0;
        }
        total
    }

    /// Branch metrics `out[s * M + a]` of step `k`.
    pub(crate) fn fill(&self, k: usize, out: &mut [f64]) {
        let m = self.m;
        match &self.src {
            Source::Pending => unreachable!("branches used before construction finished"),
            Source::Ung { x, steady, law } => {
                let dim = self.alphabet.dim();
                let xk = &x[k * dim..(k + 1) * dim];
                let data: Vec<f64> = (0..m)
                    .map(|a| 2.0 * self.alphabet.vector(a).iter().zip(xk).map(|(c, v)| (c.conj() * v).re).sum::<f64>())
                    .collect();
                if k >= self.l {
                    for s in 0..self.states {
                        for a in 0..m {
                            out[s * m + a] = steady[s * m + a] + data[a];
                        }
                    }
                } else {
                    for s in 0..self.states {
                        let intf = self.ung_interference(law, s, k);
                        for a in 0..m {
                            out[s * m + a] = ung_const(law, self.alphabet.vector(a), &intf) + data[a];
                        }
                    }
                }
            }
            Source::For { r, means, law } => {
                let rd = law.obs_dim();
                let rk = &r[k * rd..(k + 1) * rd];
                for s in 0..self.states {
                    for a in 0..m {
                        let d = if k >= self.l {
                            means[(s * m + a) * rd..(s * m + a + 1) * rd]
                                .iter()
                                .zip(rk)
                                .map(|(mu, v)| (v - mu).norm_sqr())
                                .sum::<f64>()
                        } else {
                            self.forney_mean(law, s, a, k)
                                .iter()
                                .zip(rk)
                                .map(|(mu, v)| (v - mu).norm_sqr())
                                .sum::<f64>()
                        };
                        out[s * m + a] = -d / law.n0;
                    }
                }
            }
        }
    }

    fn next(&self, s: usize, a: usize) -> usize {
        if self.l == 0 {
            0
        } else {
            (s * self.m + a) % self.states
        }
    }
}

fn ung_const(law: &MismatchedLaw, c: &[C64], intf: &[C64]) -> f64 {
    let g0 = &law.target[0];
    let k = c.len();
    let mut quad = 0.0;
    for r in 0..k {
        for col in 0..k {
            quad += (c[r].conj() * g0[(r, col)] * c[col]).re;
        }
    }
    let cross: f64 = c.iter().zip(intf).map(|(a, b)| (a.conj() * b).re).sum();
    -quad - 2.0 * cross
}

fn prior_row(priors: Option<&[f64]>, k: usize, m: usize) -> Vec<f64> {
    match priors {
        Some(p) => p[k * m..(k + 1) * m].to_vec(),
        None => vec![-(m as f64).ln(); m],
    }
}

fn check_priors(priors: Option<&[f64]>, n: usize, m: usize) -> Result<()> {
    if let Some(p) = priors {
        if p.len() != n * m {
            return invalid(format!("priors need {} entries, got {}", n * m, p.len()));
        }
    }
    Ok(())
}

/// One forward step; returns the log normaliser and overwrites `alpha`.
fn forward_step(b: &Branches, alpha: &mut Vec<f64>, out: &[f64], prior: &[f64], max_log: bool) -> f64 {
    let m = b.m;
    let mut next = vec![f64::NEG_INFINITY; b.states];
    let mut buf = vec![0.0; m.max(b.states)];
    if b.l == 0 {
        for a in 0..m {
            buf[a] = alpha[0] + out[a] + prior[a];
        }
        next[0] = combine(&buf[..m], max_log);
    } else {
        let stride = b.states / m;
        for (sp, slot) in next.iter_mut().enumerate() {
            let a = sp % m;
            let base = sp / m;
            for j in 0..m {
                let s = base + j * stride;
                buf[j] = alpha[s] + out[s * m + a] + prior[a];
            }
            *slot = combine(&buf[..m], max_log);
        }
    }
    let norm = combine(&next, max_log);
    next.iter_mut().for_each(|v| *v -= norm);
    *alpha = next;
    norm
}

fn initial_alpha(states: usize) -> Vec<f64> {
    let mut a = vec![f64::NEG_INFINITY; states];
    a[0] = 0.0;
    a
}

/// Symbol-wise APPs by the forward-backward recursion in the log domain.
pub fn bcjr(
    law: &DetectionLaw,
    alphabet: &Alphabet,
    obs: &[C64],
    n: usize,
    priors: Option<&[f64]>,
    opts: BcjrOptions,
) -> Result<Posteriors> {
    let b = Branches::new(law, alphabet, obs, n)?;
    let m = b.m;
    check_priors(priors, n, m)?;
    let mut alphas = Vec::with_capacity((n + 1) * b.states);
    let mut alpha = initial_alpha(b.states);
    let mut out = vec![0.0; b.states * m];
    let mut log_norms = Vec::with_capacity(n + 1);
    for k in 0..n {
        alphas.extend_from_slice(&alpha);
        b.fill(k, &mut out);
        log_norms.push(forward_step(&b, &mut alpha, &out, &prior_row(priors, k, m), opts.max_log));
    }
    let term: Vec<f64> = alpha.iter().zip(&b.final_beta).map(|(a, f)| a + f).collect();
    log_norms.push(combine(&term, opts.max_log));
    let mut beta = b.final_beta.clone();
    let mut probs = vec![0.0; n * m];
    let mut buf = vec![0.0; b.states.max(m)];
    for k in (0..n).rev() {
        b.fill(k, &mut out);
        let prior = prior_row(priors, k, m);
        let alpha_k = &alphas[k * b.states..(k + 1) * b.states];
        let mut app = vec![0.0; m];
        for (a, slot) in app.iter_mut().enumerate() {
            for s in 0..b.states {
                buf[s] = alpha_k[s] + out[s * m + a] + prior[a] + beta[b.next(s, a)];
            }
            *slot = combine(&buf[..b.states], opts.max_log);
        }
        let z = lse(&app);
        for a in 0..m {
            probs[k * m + a] = (app[a] - z).exp();
        }
        let mut nb = vec![f64::NEG_INFINITY; b.states];
        for (s, slot) in nb.iter_mut().enumerate() {
            for a in 0..m {
                buf[a] = out[s * m + a] + prior[a] + beta[b.next(s, a)];
            }
            *slot = combine(&buf[..m], opts.max_log);
        }
        let mx = nb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        nb.iter_mut().for_each(|v| *v -= mx);
        beta = nb;
    }
    let log_likelihood = log_norms.iter().sum();
    Ok(Posteriors { probs, alphabet_size: m, log_norms, log_likelihood })
}

/// `(log q(r|c), log q(r))` for the transmitted index sequence, forward pass only.
pub fn log_likelihoods(
    law: &DetectionLaw,
    alphabet: &Alphabet,
    obs: &[C64],
    symbols: &[usize],
    priors: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let n = symbols.len();
    let b = Branches::new(law, alphabet, obs, n)?;
    let m = b.m;
    check_priors(priors, n, m)?;
    let mut alpha = initial_alpha(b.states);
    let mut out = vec![0.0; b.states * m];
    let mut total = 0.0;
    let mut path = 0.0;
    let mut state = 0usize;
    for (k, &a) in symbols.iter().enumerate() {
        b.fill(k, &mut out);
        path += out[state * m + a];
        state = b.next(state, a);
        total += forward_step(&b, &mut alpha, &out, &prior_row(priors, k, m), false);
    }
    path += b.final_beta[state];
    let term: Vec<f64> = alpha.iter().zip(&b.final_beta).map(|(a, f)| a + f).collect();
    total += lse(&term);
    Ok((path, total))
}
