//! Bessel functions of the first kind for integer order.
//!
//! Values come from Bessel's integral `J_n(x) = (1/2π)∫₀^{2π} cos(nθ − x sin θ) dθ`
//! evaluated with the trapezoidal rule, which converges geometrically for a
//! periodic analytic integrand.

use std::f64::consts::PI;

/// `J_n(x)` for integer `n` (negative orders use `J_{−n} = (−1)^n J_n`).
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    let nodes = 64 + 2 * (x.abs().ceil() as usize + n as usize);
    let h = 2.0 * PI / nodes as f64;
    let mut acc = 0.0;
    for i in 0..nodes {
        let th = i as f64 * h;
        acc += (n as f64 * th - x * th.sin()).cos();
    }
    acc / nodes as f64
}

/// `J_n'(x) = (J_{n−1}(x) − J_{n+1}(x)) / 2`.
pub fn bessel_j_prime(n: i32, x: f64) -> f64 {
    0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
}

/// The `k`-th positive zero of `J_m` (k ≥ 1).
pub fn bessel_zero(m: u32, k: u32) -> f64 {
    assert!(k >= 1, "zeros are numbered from 1");
    let m = m as i32;
    let step = 0.05;
    let mut a = 1e-3;
    let mut fa = bessel_j(m, a);
    let mut found = 0;
    loop {
        let b = a + step;
        let fb = bessel_j(m, b);
        if fa != 0.0 && fa.signum() != fb.signum() {
            found += 1;
            if found == k {
                return refine_zero(m, a, b);
            }
        }
        a = b;
        fa = fb;
    }
}

fn refine_zero(m: i32, mut lo: f64, mut hi: f64) -> f64 {
    let flo = bessel_j(m, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-15 * mid {
            break;
        }
        let fm = bessel_j(m, mid);
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        let d = bessel_j_prime(m, x);
        if d != 0.0 {
            x -= bessel_j(m, x) / d;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_argument_limits() {
        assert!((bessel_j(0, 0.0) - 1.0).abs() < 1e-15);
        assert!(bessel_j(1, 0.0).abs() < 1e-15);
        // J_1(x) ≈ x/2 near the origin.
        assert!((bessel_j(1, 1e-4) - 5e-5).abs() < 1e-12);
    }

    #[test]
    fn recurrence_holds() {
        // J_{n-1} + J_{n+1} = (2n/x) J_n
        for &x in &[0.7, 3.3, 11.0] {
            for n in 1..5 {
                let lhs = bessel_j(n - 1, x) + bessel_j(n + 1, x);
                let rhs = 2.0 * n as f64 / x * bessel_j(n, x);
                assert!((lhs - rhs).abs() < 1e-13, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn first_zero_of_j0() {
        assert!((bessel_zero(0, 1) - 2.404_825_557_695_773).abs() < 1e-12);
    }
}
