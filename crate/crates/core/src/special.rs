//! Bessel functions of the first kind for integer order.
//!
//! All orders `0..=n` at a given argument come out of a single Miller
//! (downward) recurrence normalised with `J₀ + 2ΣJ₂ₖ = 1`. Small arguments use
//! the power series directly.

/// `J_0(x) ..= J_nmax(x)`.
pub fn bessel_j_seq(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    bessel_j_fill(x, &mut out);
    out
}

/// Fills `out[k] = J_k(x)` for `k < out.len()`.
pub fn bessel_j_fill(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let ax = x.abs();
    if ax < 1e-4 {
        series_fill(ax, out);
    } else {
        miller_fill(ax, out);
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
}

/// `J_n(x)` for any integer order.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let na = n.unsigned_abs() as usize;
    let mut buf = vec![0.0; na + 1];
    bessel_j_fill(x, &mut buf);
    let v = buf[na];
    if n < 0 && na % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `J_{m-1}(x), J_m(x), J_{m+1}(x)` for `m ≥ 0`, using `J_{-1} = -J_1`.
pub fn bessel_j_triplet(m: u32, x: f64, scratch: &mut Vec<f64>) -> [f64; 3] {
    let m = m as usize;
    scratch.clear();
    scratch.resize(m + 2, 0.0);
    bessel_j_fill(x, scratch);
    let below = if m == 0 { -scratch[1] } else { scratch[m - 1] };
    [below, scratch[m], scratch[m + 1]]
}

/// `J_m'(x) = (J_{m-1} − J_{m+1})/2`.
pub fn bessel_j_prime(m: i32, x: f64) -> f64 {
    0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x))
}

fn series_fill(x: f64, out: &mut [f64]) {
    // J_k(x) = Σ_j (-1)^j (x/2)^{2j+k} / (j! (j+k)!)
    let half = 0.5 * x;
    let q = -half * half;
    let mut lead = 1.0; // (x/2)^k / k!
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            lead *= half / k as f64;
        }
        if lead == 0.0 {
            *slot = 0.0;
            continue;
        }
        let mut term = lead;
        let mut sum = lead;
        for j in 1..30 {
            term *= q / (j as f64 * (j + k) as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        *slot = sum;
    }
}

fn miller_fill(x: f64, out: &mut [f64]) {
    let nmax = out.len() - 1;
    let top = (nmax as f64).max(x);
    let mut start = (top + 30.0 + 30.0 * x.cbrt()).ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let inv_x = 1.0 / x;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-300; // J_k
    let mut norm = 0.0;
    for v in out.iter_mut() {
        *v = 0.0;
    }
    let mut k = start;
    loop {
        if k <= nmax {
            out[k] = j_cur;
        }
        if k.is_multiple_of(2) {
            norm += if k == 0 { j_cur } else { 2.0 * j_cur };
        }
        if k == 0 {
            break;
        }
        let j_prev = 2.0 * k as f64 * inv_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        k -= 1;
        if j_cur.abs() > 1e250 {
            let s = 1e-250;
            j_cur *= s;
            j_next *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    let inv = 1.0 / norm;
    for v in out.iter_mut() {
        *v *= inv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Bessel's integral, J_n(x) = (1/π)∫_0^π cos(nτ − x sin τ) dτ; the
    // trapezoid rule is spectrally accurate for this periodic integrand.
    fn integral_oracle(n: i32, x: f64) -> f64 {
        let m = 4096 + 4 * x.abs() as usize;
        let h = PI / m as f64;
        let mut s = 0.5 * ((0.0f64).cos() + (n as f64 * PI).cos());
        for i in 1..m {
            let t = i as f64 * h;
            s += (n as f64 * t - x * t.sin()).cos();
        }
        s * h / PI
    }

    #[test]
    fn reference_values() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!(bessel_j(0, 2.404_825_557_695_773).abs() < 1e-14);
        assert!(bessel_j(1, 3.831_705_970_207_512).abs() < 1e-14);
    }

    #[test]
    fn matches_integral_representation() {
        for &x in &[1e-6, 1e-3, 0.3, 1.0, 5.5, 17.0, 99.9, 480.0, 999.0] {
            for n in 0..8 {
                let a = bessel_j(n, x);
                let b = integral_oracle(n, x);
                assert!((a - b).abs() < 1e-12, "J_{n}({x}) = {a} vs {b}");
            }
        }
    }

    #[test]
    fn origin_and_symmetry() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        for n in 1..5 {
            assert_eq!(bessel_j(n, 0.0), 0.0);
            let x = 2.7;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((bessel_j(-n, x) - sign * bessel_j(n, x)).abs() < 1e-15);
            assert!((bessel_j(n, -x) - sign * bessel_j(n, x)).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_and_triplet() {
        let x = 3.3;
        let h = 1e-5;
        for m in 0..4 {
            let fd = (bessel_j(m, x + h) - bessel_j(m, x - h)) / (2.0 * h);
            assert!((bessel_j_prime(m, x) - fd).abs() < 1e-9);
            let mut s = Vec::new();
            let t = bessel_j_triplet(m as u32, x, &mut s);
            assert!((t[0] - bessel_j(m - 1, x)).abs() < 1e-15);
            assert!((t[1] - bessel_j(m, x)).abs() < 1e-15);
            assert!((t[2] - bessel_j(m + 1, x)).abs() < 1e-15);
        }
    }

    #[test]
    fn series_branch_continuity() {
        for n in 0..4 {
            for x in [0.999e-4, 1.001e-4] {
                assert!((bessel_j(n, x) - integral_oracle(n, x)).abs() < 1e-14);
            }
        }
    }
}
