//! Hermite functions, Laguerre polynomials and Laguerre functions, special Hermite
//! functions and the radial derivative identity for the scaled Laguerre functions.
//!
//! Conventions:
//! * `h_k(t) = (2^k k! √π)^{-1/2} H_k(t) e^{-t²/2}` (orthonormal on the line);
//! * `φ_k(z) = L_k^{n-1}(|z|²/2) e^{-|z|²/4}` on `R^{2n}` and `φ_k^λ(z) = φ_k(√λ z)`;
//! * `Φ_{αβ}(x + iy) = (2π)^{-n/2} ∫ e^{i x·ξ} Φ_α(ξ + y/2) Φ_β(ξ - y/2) dξ`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{param, Error, Result};
use crate::quad::{gauss_hermite, gauss_legendre, Rule};

/// Largest Hermite degree accepted by [`hermite_h`].
pub const HERMITE_MAX_DEGREE: usize = 2000;

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of the Gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection formula
        return (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `(k+n-1)!/k!` as a float (product of `n-1` factors).
pub fn rising_ratio(k: usize, n: usize) -> f64 {
    (1..n).map(|i| (k + i) as f64).product()
}

/// Binomial coefficient `binom(k+ν, k)` for real `ν > -1`.
pub fn binom_upper(k: usize, nu: f64) -> f64 {
    (ln_gamma(k as f64 + nu + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma(nu + 1.0)).exp()
}

/// Normalized Hermite function `h_k(t)`.
///
/// The recurrence runs on `h_k e^{t²/2}` with dynamic rescaling, so large `|t|`
/// does not underflow prematurely.
pub fn hermite_h(k: usize, t: f64) -> Result<f64> {
    if k > HERMITE_MAX_DEGREE {
        return Err(Error::Range(format!(
            "Hermite degree {k} exceeds the supported maximum {HERMITE_MAX_DEGREE}"
        )));
    }
    let (v, log_scale) = hermite_scaled(k, t);
    Ok(v * (log_scale - 0.5 * t * t).exp())
}

/// Returns `(v, s)` with `h_k(t) = v · exp(s - t²/2)`.
fn hermite_scaled(k: usize, t: f64) -> (f64, f64) {
    let mut p0 = PI.powf(-0.25);
    let mut log_scale = 0.0;
    if k == 0 {
        return (p0, 0.0);
    }
    let mut p1 = 2f64.sqrt() * t * p0;
    for j in 1..k {
        let jf = j as f64;
        let p2 = (2.0 / (jf + 1.0)).sqrt() * t * p1 - (jf / (jf + 1.0)).sqrt() * p0;
        p0 = p1;
        p1 = p2;
        let mag = p1.abs().max(p0.abs());
        if mag > 1e150 {
            p0 /= mag;
            p1 /= mag;
            log_scale += mag.ln();
        }
    }
    (p1, log_scale)
}

/// Polynomial part `h_k(t) e^{t²/2}` for all degrees `0..=kmax`.
fn hermite_poly_all(kmax: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut p0 = PI.powf(-0.25);
    out.push(p0);
    if kmax == 0 {
        return out;
    }
    let mut p1 = 2f64.sqrt() * t * p0;
    out.push(p1);
    for j in 1..kmax {
        let jf = j as f64;
        let p2 = (2.0 / (jf + 1.0)).sqrt() * t * p1 - (jf / (jf + 1.0)).sqrt() * p0;
        p0 = p1;
        p1 = p2;
        out.push(p1);
    }
    out
}

/// Hermite function `Φ_α(y) = Π_j h_{α_j}(y_j)` on `R^n`.
pub fn hermite_fn(alpha: &[usize], y: &[f64]) -> Result<f64> {
    if alpha.len() != y.len() {
        return Err(Error::Dimension {
            expected: alpha.len(),
            got: y.len(),
        });
    }
    let mut p = 1.0;
    for (&a, &t) in alpha.iter().zip(y) {
        p *= hermite_h(a, t)?;
    }
    Ok(p)
}

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (k+a)^{-s}` for `s > 1`, `a > 0`, by direct
/// summation followed by the Euler–Maclaurin tail.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a > 0.0);
    const N: usize = 24;
    // B_{2j}/(2j)!
    const B: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
        -3617.0 / 10670622842880000.0,
    ];
    let mut sum: f64 = (0..N).map(|k| (k as f64 + a).powf(-s)).sum();
    let x = N as f64 + a;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // derivative factor s(s+1)…(s+2j-2) x^{-s-2j+1}
    let mut fac = s;
    let mut pw = x.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        sum += b * fac * pw;
        let q = s + 2.0 * j as f64;
        fac *= (q + 1.0) * (q + 2.0);
        pw /= x * x;
    }
    sum
}

/// `Z(n, m) = Σ_{k≥0} binom(k+n-1, k) (2k+n)^{-(n+m)}` in closed form through
/// Hurwitz zeta values: the binomial is a polynomial in `y = 2k+n`.
pub fn laguerre_origin_sum(n: usize, m: usize) -> f64 {
    // binom(k+n-1, k) = Π_{i=1}^{n-1} (y - n + 2i) / (2^{n-1} (n-1)!)
    let mut coef = vec![1.0];
    for i in 1..n {
        let c0 = 2.0 * i as f64 - n as f64;
        let mut next = vec![0.0; coef.len() + 1];
        for (d, c) in coef.iter().enumerate() {
            next[d + 1] += c;
            next[d] += c * c0;
        }
        coef = next;
    }
    let norm = 2f64.powi(n as i32 - 1) * (1..n).map(|i| i as f64).product::<f64>();
    coef.iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(d, c)| {
            let s = (n + m - d) as f64;
            // Σ_k (2k+n)^{-s} = 2^{-s} ζ(s, n/2)
            c * 2f64.powf(-s) * hurwitz_zeta(s, n as f64 / 2.0)
        })
        .sum::<f64>()
        / norm
}

/// Laguerre polynomial `L_k^ν(x)` by the forward three-term recurrence.
pub fn laguerre(k: usize, nu: f64, x: f64) -> f64 {
    let mut l0 = 1.0;
    if k == 0 {
        return l0;
    }
    let mut l1 = 1.0 + nu - x;
    for j in 1..k {
        let jf = j as f64;
        let l2 = ((2.0 * jf + 1.0 + nu - x) * l1 - (jf + nu) * l0) / (jf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// All values `L_0^ν(x), ..., L_kmax^ν(x)` written into `out` (resized).
pub fn laguerre_all(kmax: usize, nu: f64, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if kmax == 0 {
        return;
    }
    let mut l0 = 1.0;
    let mut l1 = 1.0 + nu - x;
    out.push(l1);
    for j in 1..kmax {
        let jf = j as f64;
        let l2 = ((2.0 * jf + 1.0 + nu - x) * l1 - (jf + nu) * l0) / (jf + 1.0);
        l0 = l1;
        l1 = l2;
        out.push(l1);
    }
}

/// Laguerre function as a function of `r² = |z|²`: `L_k^{n-1}(r²/2) e^{-r²/4}`.
pub fn phi_r2(k: usize, n: usize, r2: f64) -> f64 {
    laguerre(k, n as f64 - 1.0, 0.5 * r2) * (-0.25 * r2).exp()
}

/// Laguerre function `φ_k(z)` on `R^{2n}`.
pub fn laguerre_fn(k: usize, n: usize, z: &[f64]) -> Result<f64> {
    if z.len() != 2 * n {
        return Err(Error::Dimension {
            expected: 2 * n,
            got: z.len(),
        });
    }
    Ok(phi_r2(k, n, z.iter().map(|c| c * c).sum()))
}

/// Scaled Laguerre function `φ_k^λ(z) = φ_k(√λ z)`.
pub fn laguerre_fn_scaled(k: usize, n: usize, lambda: f64, z: &[f64]) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(param("lambda", "must be positive"));
    }
    let r2: f64 = z.iter().map(|c| c * c).sum();
    if z.len() != 2 * n {
        return Err(Error::Dimension {
            expected: 2 * n,
            got: z.len(),
        });
    }
    Ok(phi_r2(k, n, lambda * r2))
}

/// Special Hermite function `Φ_{αβ}(x + iy)` with `z = (x, y) ∈ R^{2n}`.
///
/// The Fourier integral factorizes over coordinates; each factor is evaluated by
/// Gauss–Hermite quadrature whose order doubles until successive values differ by
/// less than `1e-8`.
pub fn special_hermite(alpha: &[usize], beta: &[usize], z: &[f64]) -> Result<Complex64> {
    let n = alpha.len();
    if beta.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: beta.len(),
        });
    }
    if z.len() != 2 * n {
        return Err(Error::Dimension {
            expected: 2 * n,
            got: z.len(),
        });
    }
    let mut prod = Complex64::new(1.0, 0.0);
    for j in 0..n {
        prod *= special_hermite_1d(alpha[j], beta[j], z[j], z[n + j])?;
    }
    Ok(prod)
}

fn special_hermite_1d(a: usize, b: usize, x: f64, y: f64) -> Result<Complex64> {
    let eval = |rule: &Rule| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let pa = hermite_poly_all(a, xi + 0.5 * y)[a];
            let pb = hermite_poly_all(b, xi - 0.5 * y)[b];
            acc += Complex64::from_polar(w * pa * pb, x * xi);
        }
        acc * ((-0.25 * y * y).exp() / (2.0 * PI).sqrt())
    };
    let mut order = 32;
    let mut prev = eval(&gauss_hermite(order));
    let mut err = f64::INFINITY;
    while order < 512 {
        order *= 2;
        let next = eval(&gauss_hermite(order));
        err = (next - prev).norm();
        prev = next;
        if err < 1e-8 {
            return Ok(prev);
        }
    }
    Err(Error::Quadrature { achieved: err })
}

/// Both sides of the radial derivative identity for `φ_k^{|μ|}(r)` with respect to
/// `μ_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    /// Central finite difference of the left side.
    pub finite_difference: f64,
    /// The closed-form right side.
    pub closed_form: f64,
}

/// `∂/∂μ_j φ_k^{|μ|}(r)` by central differences and by the Laguerre identity
/// `r d/dr L_k^{n-1} = k L_k^{n-1} - (k+n-1) L_{k-1}^{n-1}`.
pub fn phi_mu_derivative(k: usize, n: usize, mu: &[f64], j: usize, r: f64) -> Result<DerivativeCheck> {
    let norm = mu.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(param("mu", "must be nonzero"));
    }
    if j >= mu.len() {
        return Err(Error::Dimension {
            expected: mu.len(),
            got: j,
        });
    }
    let r2 = r * r;
    let value = |m: &[f64]| {
        let a = m.iter().map(|c| c * c).sum::<f64>().sqrt();
        phi_r2(k, n, a * r2)
    };
    let h = 1e-5;
    let mut plus = mu.to_vec();
    let mut minus = mu.to_vec();
    plus[j] += h;
    minus[j] -= h;
    let fd = (value(&plus) - value(&minus)) / (2.0 * h);
    let pk = phi_r2(k, n, norm * r2);
    let pkm1 = if k == 0 { 0.0 } else { phi_r2(k - 1, n, norm * r2) };
    let kf = k as f64;
    let closed = (mu[j] / norm)
        * (kf * pk / norm - (kf + n as f64 - 1.0) * pkm1 / norm - 0.25 * r2 * pk);
    Ok(DerivativeCheck {
        finite_difference: fd,
        closed_form: closed,
    })
}

/// Exact `‖φ_k^λ‖²_{L²(R^{2n})} = |S^{2n-1}| 2^{n-1} λ^{-n} (k+n-1)!/k!`.
pub fn phi_l2_norm_sq_exact(k: usize, n: usize, lambda: f64) -> f64 {
    crate::quad::sphere_area(2 * n) * 2f64.powi(n as i32 - 1) * lambda.powi(-(n as i32))
        * rising_ratio(k, n)
}

/// `‖φ_k^λ‖_{L²(R^{2n})}` by composite Gauss–Legendre quadrature of the radial
/// integral (independent of the closed form).
pub fn phi_l2_norm(k: usize, n: usize, lambda: f64) -> f64 {
    // The Laguerre function is negligible beyond r² = 2(4k + 2n + 80)/λ.
    let rmax = (2.0 * (4.0 * k as f64 + 2.0 * n as f64 + 80.0) / lambda).sqrt();
    let panels = 16 + 2 * k;
    let base = gauss_legendre(24);
    let mut acc = 0.0;
    for p in 0..panels {
        let a = rmax * p as f64 / panels as f64;
        let b = rmax * (p + 1) as f64 / panels as f64;
        acc += base.mapped(a, b).integrate(|r| {
            let v = phi_r2(k, n, lambda * r * r);
            v * v * r.powi(2 * n as i32 - 1)
        });
    }
    (acc * crate::quad::sphere_area(2 * n)).sqrt()
}

/// The normalized quantity `‖φ_k^{|μ|}‖₂ · |μ|^{n/2} · k^{-(n-1)/2}` whose uniform
/// boundedness in `k` and `μ` expresses the Laguerre L²-estimate.
pub fn phi_l2_norm_check(k: usize, n: usize, mu: &[f64]) -> Result<f64> {
    if k == 0 {
        return Err(param("k", "the normalized estimate is stated for k >= 1"));
    }
    let a = mu.iter().map(|c| c * c).sum::<f64>().sqrt();
    if a == 0.0 {
        return Err(param("mu", "must be nonzero"));
    }
    Ok(phi_l2_norm(k, n, a) * a.powf(n as f64 / 2.0) * (k as f64).powf(-(n as f64 - 1.0) / 2.0))
}

/// `sup_z |φ_k(z)|` by a dense radial scan refined with golden-section search.
pub fn phi_sup(k: usize, n: usize) -> f64 {
    let rmax2 = 2.0 * (4.0 * k as f64 + 2.0 * n as f64 + 40.0);
    let samples = 400 + 40 * k;
    let f = |r2: f64| phi_r2(k, n, r2).abs();
    let mut best = (0.0, f(0.0));
    for i in 1..=samples {
        let r2 = rmax2 * i as f64 / samples as f64;
        let v = f(r2);
        if v > best.1 {
            best = (r2, v);
        }
    }
    let step = rmax2 / samples as f64;
    let (mut a, mut b) = ((best.0 - step).max(0.0), best.0 + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.1.max(f(0.5 * (a + b)))
}

/// Empirical constant `c_n` in `‖φ_k‖_∞ = c_n (k+n-1)!/k!`, the ratio evaluated at `k`.
pub fn phi_sup_ratio(k: usize, n: usize) -> f64 {
    phi_sup(k, n) / rising_ratio(k, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_and_origin_sums() {
        let pi = std::f64::consts::PI;
        assert!((hurwitz_zeta(2.0, 1.0) - pi * pi / 6.0).abs() < 1e-14);
        assert!((hurwitz_zeta(4.0, 1.0) - pi.powi(4) / 90.0).abs() < 1e-14);
        assert!((hurwitz_zeta(3.0, 0.5) - 7.0 * 1.2020569031595942).abs() < 1e-13);
        assert!((laguerre_origin_sum(1, 1) - pi * pi / 8.0).abs() < 1e-14);
        assert!((laguerre_origin_sum(2, 3) - pi.powi(4) / 2880.0).abs() < 1e-15);
        // direct partial sum for n = 3, m = 2 plus a generous tail bound
        let direct: f64 = (0..200000)
            .map(|k| binom_upper(k, 2.0) * ((2 * k + 3) as f64).powi(-5))
            .sum();
        assert!((laguerre_origin_sum(3, 2) - direct).abs() < 1e-9);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut f = 1.0f64;
        for k in 1..30 {
            f *= k as f64;
            assert!((ln_gamma(k as f64 + 1.0) - f.ln()).abs() < 1e-12 * f.ln().max(1.0));
        }
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn hermite_values_at_origin() {
        assert!((hermite_h(0, 0.0).unwrap() - PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(hermite_h(1, 0.0).unwrap(), 0.0);
        assert!(hermite_h(HERMITE_MAX_DEGREE + 1, 0.0).is_err());
    }

    #[test]
    fn hermite_h2_normalized() {
        // 200-node Gauss–Hermite: ∫ h_2² = ∫ (h_2 e^{t²/2})² e^{-t²}.
        let r = gauss_hermite(200);
        let q = r.integrate(|t| hermite_poly_all(2, t)[2].powi(2));
        assert!((q - 1.0).abs() < 1e-10, "q={q}");
    }

    #[test]
    fn hermite_large_argument_does_not_underflow_early() {
        // h_1500 peaks near sqrt(2k); the rescaled recurrence keeps it finite.
        let t = (2.0f64 * 1500.0).sqrt() * 0.9;
        let v = hermite_h(1500, t).unwrap();
        assert!(v.is_finite() && v.abs() > 1e-3, "v={v}");
    }

    #[test]
    fn hermite_fn_orthonormal_on_fine_grid() {
        let alphas: Vec<[usize; 2]> = vec![[0, 0], [1, 0], [0, 2], [2, 2], [4, 0], [1, 3]];
        let rule = gauss_legendre(120).mapped(-12.0, 12.0);
        for a in &alphas {
            for b in &alphas {
                let mut s = 0.0;
                for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                    for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                        s += wx * wy * hermite_fn(a, &[x, y]).unwrap() * hermite_fn(b, &[x, y]).unwrap();
                    }
                }
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-8, "{a:?} {b:?} {s}");
            }
        }
        assert!((hermite_fn(&[0, 0], &[0.0, 0.0]).unwrap() - PI.powf(-0.5)).abs() < 1e-15);
        assert_eq!(hermite_fn(&[1, 0], &[0.0, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn laguerre_closed_forms() {
        for &nu in &[0.0, 0.5, 1.0, 3.0] {
            for i in 0..50 {
                let x = 0.37 * i as f64;
                let l2 = (x * x - 2.0 * (nu + 2.0) * x + (nu + 1.0) * (nu + 2.0)) / 2.0;
                let l3 = (-x * x * x + 3.0 * (nu + 3.0) * x * x - 3.0 * (nu + 2.0) * (nu + 3.0) * x
                    + (nu + 1.0) * (nu + 2.0) * (nu + 3.0))
                    / 6.0;
                assert_eq!(laguerre(0, nu, x), 1.0);
                assert!((laguerre(1, nu, x) - (1.0 + nu - x)).abs() < 1e-12);
                assert!((laguerre(2, nu, x) - l2).abs() < 1e-12 * l2.abs().max(1.0));
                assert!((laguerre(3, nu, x) - l3).abs() < 1e-12 * l3.abs().max(1.0));
            }
        }
        for n in 1..4 {
            assert!((laguerre(1, n as f64 - 1.0, 0.7) - (n as f64 - 0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn laguerre_at_zero_is_binomial() {
        for nu in 0..5 {
            for k in 0..=20 {
                let exact = binom_upper(k, nu as f64);
                let v = laguerre(k, nu as f64, 0.0);
                assert!((v - exact).abs() < 1e-10 * exact, "k={k} nu={nu}");
            }
        }
    }

    #[test]
    fn laguerre_all_agrees_with_single() {
        let mut buf = Vec::new();
        laguerre_all(30, 1.0, 3.3, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            assert_eq!(*v, laguerre(k, 1.0, 3.3));
        }
    }

    #[test]
    fn laguerre_functions_basic() {
        assert_eq!(laguerre_fn(0, 1, &[0.0, 0.0]).unwrap(), 1.0);
        let z = [0.3, -1.1];
        let r2: f64 = z.iter().map(|c| c * c).sum();
        assert!((laguerre_fn(0, 1, &z).unwrap() - (-r2 / 4.0).exp()).abs() < 1e-15);
        for n in 1..4 {
            for k in 0..10 {
                let v = laguerre_fn(k, n, &vec![0.0; 2 * n]).unwrap();
                let exact = rising_ratio(k, n) / (1..n).map(|i| i as f64).product::<f64>();
                assert!((v - exact).abs() < 1e-10 * exact);
            }
        }
        // radiality: two points with equal norm
        let a = laguerre_fn(3, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = laguerre_fn(3, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            laguerre_fn_scaled(2, 1, 4.0, &[0.5, 0.0]).unwrap(),
            laguerre_fn(2, 1, &[1.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn laguerre_radial_derivative_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let r: f64 = rng.gen_range(0.05..8.0);
            let k = rng.gen_range(1..=30usize);
            let n = rng.gen_range(1..=3usize);
            let nu = n as f64 - 1.0;
            let h = 1e-6 * r.max(1.0);
            let d = (laguerre(k, nu, r + h) - laguerre(k, nu, r - h)) / (2.0 * h);
            let lhs = r * d;
            let rhs = k as f64 * laguerre(k, nu, r) - (k as f64 + nu) * laguerre(k - 1, nu, r);
            let scale = rhs.abs().max(laguerre(k, nu, r).abs()).max(1.0);
            assert!((lhs - rhs).abs() < 1e-6 * scale, "k={k} r={r} {lhs} {rhs}");
        }
    }

    #[test]
    fn sup_ratio_constant_in_k() {
        // ‖φ_k‖_∞ = c_n (k+n-1)!/k!: the ratio stays within 10% for k = 2..40.
        for n in 1..=2 {
            let ratios: Vec<f64> = (2..=40).map(|k| phi_sup_ratio(k, n)).collect();
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max / min <= 1.1, "n={n} ratios {min} {max}");
        }
    }

    #[test]
    fn special_hermite_diagonal_sum_is_laguerre() {
        // Σ_{|α|=k} Φ_{αα}(z) = (2π)^{-n/2} φ_k(z) for n = 1.
        let pts = [[0.0, 0.0], [0.5, -0.3], [1.2, 0.7], [-2.0, 1.5], [0.1, 2.5]];
        for k in 0..=3 {
            for z in &pts {
                let v = special_hermite(&[k], &[k], z).unwrap();
                let exact = laguerre_fn(k, 1, z).unwrap() / (2.0 * PI).sqrt();
                assert!((v - exact).norm() <= 1e-6 * exact.abs().max(1e-3), "k={k} z={z:?} {v} {exact}");
            }
        }
        assert!(special_hermite(&[0], &[0], &[0.0, 0.0]).unwrap().re > 0.0);
    }

    #[test]
    fn special_hermite_normalized() {
        // ∫ |Φ_{αβ}|² = 1 on a fine box grid
        for (a, b) in [(0usize, 0usize), (1, 2), (3, 0)] {
            let rule = gauss_legendre(60).mapped(-9.0, 9.0);
            let mut s = 0.0;
            for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                    s += wx * wy * special_hermite(&[a], &[b], &[x, y]).unwrap().norm_sqr();
                }
            }
            assert!((s - 1.0).abs() < 1e-6, "a={a} b={b} s={s}");
        }
    }

    #[test]
    fn derivative_identity_examples() {
        let c = phi_mu_derivative(3, 1, &[0.7], 0, 1.3).unwrap();
        assert!((c.finite_difference - c.closed_form).abs() < 1e-6, "{c:?}");
        let c0 = phi_mu_derivative(0, 2, &[0.4, -0.3], 1, 0.9).unwrap();
        let expect = 0.6 * 0.25 * 0.81 * phi_r2(0, 2, 0.5 * 0.81);
        assert!((c0.closed_form - expect).abs() < 1e-15);
        assert!((c0.finite_difference - expect).abs() < 1e-8);
        let neg = phi_mu_derivative(3, 1, &[-0.7], 0, 1.3).unwrap();
        assert!((neg.closed_form + c.closed_form).abs() < 1e-14);
        assert!(phi_mu_derivative(1, 1, &[0.0], 0, 1.0).is_err());
    }

    #[test]
    fn l2_norms_match_closed_form_and_scale() {
        for n in 1..=2 {
            for k in [0usize, 1, 5, 20] {
                for lam in [0.25, 1.0, 4.0] {
                    let q = phi_l2_norm(k, n, lam);
                    let e = phi_l2_norm_sq_exact(k, n, lam).sqrt();
                    assert!((q - e).abs() < 1e-9 * e, "n={n} k={k} lam={lam} {q} {e}");
                }
            }
        }
        // n = 1: k-independent; μ-scaling exponent -n/2
        let vals: Vec<f64> = (1..=60).map(|k| phi_l2_norm_check(k, 1, &[1.0]).unwrap()).collect();
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 1.0 + 1e-8);
        let xs: Vec<f64> = [0.25f64, 1.0, 4.0].iter().map(|m| m.ln()).collect();
        let ys: Vec<f64> = [0.25, 1.0, 4.0].iter().map(|&m| phi_l2_norm(7, 1, m).ln()).collect();
        let (slope, _) = crate::quad::linear_fit(&xs, &ys);
        assert!((slope + 0.5).abs() < 0.02);
        // k = 0 Gaussian integral: ∫ e^{-λ|z|²/2} dz = 2π/λ in the plane
        assert!((phi_l2_norm(0, 1, 2.0).powi(2) - PI).abs() < 1e-10);
    }
}
