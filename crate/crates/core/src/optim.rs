//! Small numerical helpers: root bracketing, Nelder–Mead, natural cubic spline.

use crate::error::{invalid, Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoConvergence(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < tol {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finds `x` with `f(x) = target` for increasing `f`, growing the upper bracket geometrically.
pub fn solve_increasing(target: f64, lo: f64, hi0: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut hi = hi0;
    let mut n = 0;
    while f(hi) < target {
        hi *= 4.0;
        n += 1;
        if n > 200 || !hi.is_finite() {
            return Err(Error::NoConvergence("could not bracket root".into()));
        }
    }
    bisect(lo, hi, 1e-13 * hi.max(1.0), |x| f(x) - target)
}

#[derive(Clone, Debug)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimises `f` from `start` with initial simplex edge `step`.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> NelderMeadResult {
    let n = start.len();
    if n == 0 {
        return NelderMeadResult { x: Vec::new(), value: f(&[]), iterations: 0 };
    }
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = (values[n] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < tol && size < tol.sqrt() {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = simplex[i].iter().zip(&best).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NelderMeadResult { x: simplex[best].clone(), value: values[best], iterations: it }
}

/// Natural cubic spline through strictly increasing knots.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return invalid("spline needs at least two matching knots");
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("spline knots must be strictly increasing");
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut off = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                off[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let w = off[i - 1] / diag[i - 1];
                diag[i] -= w * off[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (0..k).rev() {
                let next = if i + 1 < k { off[i] * m[i + 2] } else { 0.0 };
                m[i + 1] = (rhs[i] - next) / diag[i];
            }
        }
        Ok(Self { x, y, m })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Evaluates inside the knot range; outside it extrapolates linearly from the end segment.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Zeros of `sum_i c_i z^{-i}` (equivalently of `sum_i c_i z^{n-i}`).
pub fn polynomial_roots(c: &[crate::C64]) -> Vec<crate::C64> {
    use crate::C64;
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Vec::new();
    }
    if c[0].norm() == 0.0 {
        return vec![C64::new(f64::INFINITY, 0.0)];
    }
    let mut comp = nalgebra::DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    match comp.clone().schur().eigenvalues() {
        Some(ev) => ev.iter().copied().collect(),
        None => vec![C64::new(f64::NAN, 0.0); n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_quadratic() {
        use crate::C64;
        let r = polynomial_roots(&[C64::new(1.0, 0.0), C64::new(-3.0, 0.0), C64::new(2.0, 0.0)]);
        let mut m: Vec<f64> = r.iter().map(|z| z.re).collect();
        m.sort_by(f64::total_cmp);
        assert!((m[0] - 1.0).abs() < 1e-12 && (m[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(0.0, 2.0, 1e-14, |x| x * x - 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(bisect(0.0, 1.0, 1e-9, |x| x + 1.0).is_err());
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(&mut f, &[-1.2, 1.0], 0.5, 1e-14, 5000);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn spline_reproduces_cubic_interior_and_knots() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = CubicSpline::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((s.eval(*a) - b).abs() < 1e-12);
        }
        assert!((s.eval(2.5) - 2.5f64.sin()).abs() < 0.02);
        let lin = CubicSpline::new(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, 7.0]).unwrap();
        assert!((lin.eval(2.0) - 5.0).abs() < 1e-12);
    }
}
