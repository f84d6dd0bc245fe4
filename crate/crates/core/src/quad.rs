//! Quadrature rules: Gauss–Legendre, Gauss–Jacobi, Gauss–Hermite, product rules on
//! spheres, deterministic low-discrepancy sphere samples and tail extrapolation of
//! algebraically converging sums.

use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use crate::specfun::ln_gamma;

/// A one-dimensional rule: nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Affinely maps a rule on `[-1, 1]` to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        Rule {
            nodes: self.nodes.iter().map(|t| mid + half * t).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    /// Applies the rule to `f`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre rule with `n` nodes on `[-1, 1]`, computed by Newton iteration on
/// the Legendre three-term recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Golub–Welsch: nodes and weights from the Jacobi matrix of a weight function with
/// total mass `mu0`.
fn golub_welsch(diag: &[f64], offdiag_sq: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = diag[i];
        if i + 1 < n {
            let b = offdiag_sq[i].sqrt();
            t[(i, i + 1)] = b;
            t[(i + 1, i)] = b;
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Jacobi rule for the weight `(1-x)^a (1+x)^b` on `[-1, 1]`, `a, b > -1`.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Rule {
    assert!(n >= 1 && a > -1.0 && b > -1.0);
    let ab = a + b;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (k, d) in diag.iter_mut().enumerate() {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        *d = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
    }
    for (i, o) in off.iter_mut().enumerate() {
        let k = (i + 1) as f64;
        let s = 2.0 * k + ab;
        *o = 4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0));
    }
    let mu0 = ((ab + 1.0) * 2f64.ln() + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
        - ln_gamma(ab + 2.0))
    .exp();
    golub_welsch(&diag, &off, mu0)
}

/// Gauss–Hermite rule for the weight `exp(-x^2)` on the real line.
///
/// Rules are memoized per node count.
pub fn gauss_hermite(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("rule cache poisoned").get(&n) {
        return r.clone();
    }
    let r = gauss_hermite_uncached(n);
    cache.lock().expect("rule cache poisoned").insert(n, r.clone());
    r
}

fn gauss_hermite_uncached(n: usize) -> Rule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| k as f64 / 2.0).collect();
    golub_welsch(&diag, &off, PI.sqrt())
}

/// Surface measure of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

/// A quadrature rule on the unit sphere `S^{m-1}` of `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Product rule on `S^{m-1}` whose weights sum to the sphere area.
///
/// `m = 1` gives the two points `±1` with unit weights, `m = 2` uses `2·order`
/// equispaced angles and `m >= 3` peels off one polar coordinate at a time with a
/// Gauss–Jacobi rule of `order` nodes in the weight `(1-t^2)^{(m-3)/2}`.
pub fn sphere_rule(m: usize, order: usize) -> SphereRule {
    assert!(m >= 1 && order >= 1);
    match m {
        1 => SphereRule {
            nodes: vec![vec![1.0], vec![-1.0]],
            weights: vec![1.0, 1.0],
        },
        2 => {
            let count = 2 * order;
            let w = 2.0 * PI / count as f64;
            let nodes = (0..count)
                .map(|i| {
                    let th = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect();
            SphereRule {
                nodes,
                weights: vec![w; count],
            }
        }
        _ => {
            let e = (m as f64 - 3.0) / 2.0;
            let polar = gauss_jacobi(order, e, e);
            let sub = sphere_rule(m - 1, order);
            let mut nodes = Vec::with_capacity(polar.len() * sub.nodes.len());
            let mut weights = Vec::with_capacity(nodes.capacity());
            for (&t, &wt) in polar.nodes.iter().zip(&polar.weights) {
                let r = (1.0 - t * t).max(0.0).sqrt();
                for (eta, &ws) in sub.nodes.iter().zip(&sub.weights) {
                    let mut v = Vec::with_capacity(m);
                    v.push(t);
                    v.extend(eta.iter().map(|c| r * c));
                    nodes.push(v);
                    weights.push(wt * ws);
                }
            }
            SphereRule { nodes, weights }
        }
    }
}

/// Radical inverse of `i` in base `b` (van der Corput sequence).
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Deterministic low-discrepancy points on `S^{m-1}`.
///
/// `m = 1` alternates `+1, -1`; `m = 2` uses equispaced angles; `m = 3` uses the
/// Fibonacci spiral; larger `m` maps Halton points through the Box–Muller transform
/// and normalizes.
pub fn sphere_samples(m: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(m >= 1);
    match m {
        1 => (0..count)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * i as f64;
                    vec![r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
        _ => {
            assert!(m <= PRIMES.len(), "sphere sampling supports m <= 16");
            (0..count)
                .map(|i| {
                    let idx = i as u64 + 1;
                    let mut v: Vec<f64> = Vec::with_capacity(m);
                    let mut d = 0;
                    while v.len() < m {
                        let u1 = radical_inverse(idx, PRIMES[d % PRIMES.len()]).max(1e-300);
                        let u2 = radical_inverse(idx, PRIMES[(d + 1) % PRIMES.len()]);
                        let r = (-2.0 * u1.ln()).sqrt();
                        v.push(r * (2.0 * PI * u2).cos());
                        if v.len() < m {
                            v.push(r * (2.0 * PI * u2).sin());
                        }
                        d += 2;
                    }
                    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    v.iter().map(|c| c / norm).collect()
                })
                .collect()
        }
    }
}

/// Richardson extrapolation of partial sums `S_K, S_{2K}, S_{4K}` whose tails behave
/// like `a K^{-p} + b K^{-p-1}`. Works componentwise on complex samples.
pub fn richardson_tail(
    s1: &[num_complex::Complex64],
    s2: &[num_complex::Complex64],
    s4: &[num_complex::Complex64],
    p: f64,
) -> Vec<num_complex::Complex64> {
    let a = 2f64.powf(-p);
    let b = 2f64.powf(-p - 1.0);
    s1.iter()
        .zip(s2)
        .zip(s4)
        .map(|((&x1, &x2), &x4)| {
            let d1 = x2 - x1;
            let d2 = x4 - x2;
            let y = (d1 * a - d2) / (a - b);
            let x = d1 - y;
            let tail4 = x * (a * a / (1.0 - a)) + y * (b * b / (1.0 - b));
            x4 + tail4
        })
        .collect()
}

/// Scalar version of [`richardson_tail`].
pub fn richardson_scalar(s1: f64, s2: f64, s4: f64, p: f64) -> f64 {
    let a = 2f64.powf(-p);
    let b = 2f64.powf(-p - 1.0);
    let d1 = s2 - s1;
    let d2 = s4 - s2;
    let y = (d1 * a - d2) / (a - b);
    let x = d1 - y;
    s4 + x * (a * a / (1.0 - a)) + y * (b * b / (1.0 - b))
}

/// Richardson table for partial sums `S_{L/2^{J-1}}, …, S_{L/2}, S_L` whose error
/// behaves like `a_0 L^{-p} + a_1 L^{-p-1} + …`.
///
/// Returns the most extrapolated entry and the distance to the previous column as
/// an error estimate.
pub fn richardson_table(partials: &[num_complex::Complex64], p: f64) -> (num_complex::Complex64, f64) {
    assert!(!partials.is_empty());
    let mut col = partials.to_vec();
    let mut prev_best = col[col.len() - 1];
    let mut best = prev_best;
    for j in 0..partials.len() - 1 {
        let f = 2f64.powf(p + j as f64) - 1.0;
        let next: Vec<_> = col.windows(2).map(|w| w[1] + (w[1] - w[0]) / f).collect();
        prev_best = best;
        best = next[next.len() - 1];
        col = next;
    }
    let err = if partials.len() > 1 {
        (best - prev_best).norm()
    } else {
        f64::INFINITY
    };
    (best, err)
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
