/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= y / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser weight for lag `i` in a window reaching zero just past `|i| = half`.
pub fn kaiser(i: f64, half: f64, beta: f64) -> f64 {
    let r = i / (half + 1.0);
    if r.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - r * r).sqrt()) / bessel_i0(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-13);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-10);
    }

    #[test]
    fn kaiser_is_one_at_center() {
        assert!((kaiser(0.0, 10.0, 6.0) - 1.0).abs() < 1e-15);
        assert!(kaiser(10.0, 10.0, 6.0) < 0.1);
    }
}
