//! Spectral calculus of the sub-Laplacian: the projections `P_λ`, the inversion
//! formula, Riesz means and general multipliers `m(𝓛)` as operators on grid
//! functions and as pointwise kernels, the Laguerre coefficients of the Riesz
//! kernel, dyadic pieces, and the scaling, decay and restriction fits.
//!
//! Kernels are assembled from the spectral density
//! `p_λ(x,u) = Σ_k λ^{n+m-1} / (2π(2k+n))^{n+m} ∫_{S^{m-1}} ẽ_k^{λη}(x,u) dσ(η)`
//! as `G_m(x,u) = ∫ m(λ) p_λ(x,u) dλ`. The `k`-series of `p_λ` has an algebraic tail
//! `~ K^{-m}`, which is removed by a Richardson table over partial sums at
//! `K/8, K/4, K/2, K`.
//!
//! Grid operators use two routes: the `P_λ` route evaluates `f^μ` at
//! `μ = λη/(2k+n)` and sums projections, while the μ-slice route decomposes `f`
//! on the dual grid of [`partial_fourier_u`] into eigencomponents
//! `Π_k^μ f^μ` with eigenvalue `(2k+n)|μ|` and applies `m` to each of them.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::fields::{
    accumulate_mode, fourier_u_at, inverse_partial_fourier_u, mixed_norm, partial_fourier_u, sub_laplacian_apply, Domain,
    DualGridFunction, Grid, GridFunction,
};
use crate::group::{homogeneous_norm, GroupPoint, MetivierStructure};
use crate::quad::{gauss_jacobi, gauss_legendre, linear_fit, richardson_table, sphere_rule};
use crate::specfun::{binom_upper, laguerre_origin_sum, ln_gamma, phi_r2};
use crate::symplectic::factorize_eta;
use crate::twisted::ProjectionFamily;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Truncation and quadrature settings of a spectral multiplier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierProfile {
    /// Riesz order `δ` (linear) or `α` (bilinear).
    pub order: f64,
    /// Dilation parameter `R`.
    pub r: f64,
    /// Dyadic index, when the profile describes a dyadic piece.
    pub j: Option<u32>,
    /// Largest Laguerre index `K` of the kernel series (Richardson levels are
    /// `K/8, K/4, K/2, K`).
    pub k_max: usize,
    /// Order of the product rule on `S^{m-1}`.
    pub sphere_order: usize,
    /// Gauss nodes per radial cell.
    pub radial_order: usize,
}

impl MultiplierProfile {
    /// Default settings for the given order: `R = 1`, `K = 1024`, sphere order 6,
    /// 16 radial nodes per cell.
    pub fn new(order: f64) -> Self {
        MultiplierProfile {
            order,
            r: 1.0,
            j: None,
            k_max: 1024,
            sphere_order: 6,
            radial_order: 16,
        }
    }

    /// Checks positivity of all orders.
    pub fn validate(&self) -> Result<()> {
        if !(self.order >= 0.0) || !self.order.is_finite() {
            return Err(param("order", "must be finite and nonnegative"));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(param("r", "must be positive"));
        }
        if self.k_max < 8 {
            return Err(param("k_max", "must be at least 8"));
        }
        if self.sphere_order == 0 || self.radial_order < 2 {
            return Err(param("sphere_order, radial_order", "must be positive (radial order at least 2)"));
        }
        Ok(())
    }

    /// The Richardson levels `K/8, K/4, K/2, K`.
    fn levels(&self) -> [usize; 4] {
        let k = self.k_max;
        [k / 8, k / 4, k / 2, k]
    }
}

/// Quadrature nodes on `S^{m-1}` with their symplectic factorizations.
#[derive(Debug, Clone)]
pub struct SphereNodes {
    /// Unit directions `η`.
    pub eta: Vec<Vec<f64>>,
    /// Surface weights (summing to the sphere area).
    pub weights: Vec<f64>,
    /// Factors `A_η`.
    pub a: Vec<DMatrix<f64>>,
    /// `|det A_η|`.
    pub det_a: Vec<f64>,
}

impl SphereNodes {
    /// Builds the product rule of the given order and factorizes every node.
    pub fn new(s: &MetivierStructure, order: usize) -> Result<Self> {
        let rule = sphere_rule(s.m, order.max(1));
        let mut a = Vec::with_capacity(rule.nodes.len());
        let mut det_a = Vec::with_capacity(rule.nodes.len());
        for eta in &rule.nodes {
            let f = factorize_eta(s, eta)?;
            det_a.push(f.det_a.abs());
            a.push(f.a);
        }
        Ok(SphereNodes {
            eta: rule.nodes,
            weights: rule.weights,
            a,
            det_a,
        })
    }

    /// `∫_{S^{m-1}} |det A_η| dσ(η)` by the rule.
    pub fn det_integral(&self) -> f64 {
        self.weights.iter().zip(&self.det_a).map(|(w, d)| w * d).sum()
    }

    /// Whether every `A_η` is orthogonal (the H-type situation).
    pub fn orthogonal(&self) -> bool {
        self.a.iter().all(|a| {
            let d = a.transpose() * a - DMatrix::identity(a.nrows(), a.ncols());
            d.norm() < 1e-8
        })
    }
}

/// A kernel value with its truncation and quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    /// Real part.
    pub re: f64,
    /// Imaginary part.
    pub im: f64,
    /// Estimate of the absolute error (Laguerre tail plus quadrature).
    pub err_est: f64,
}

impl KernelValue {
    /// The value as a complex number.
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    fn new(v: Complex64, err_est: f64) -> Self {
        KernelValue {
            re: v.re,
            im: v.im,
            err_est,
        }
    }
}

/// A spectral multiplier `m(λ) = smooth(λ) (b − λ)^{right_power}` on `[a, b]`,
/// zero elsewhere.
pub struct Multiplier<'a> {
    /// Support `[a, b]`.
    pub support: (f64, f64),
    /// Smooth factor.
    pub smooth: Box<dyn Fn(f64) -> f64 + 'a>,
    /// Power of the endpoint factor `(b − λ)`, absorbed by a Gauss–Jacobi rule.
    pub right_power: f64,
    /// Points inside the support where `m` is not smooth or changes scale.
    pub breakpoints: Vec<f64>,
}

impl<'a> Multiplier<'a> {
    /// Riesz multiplier `(1 − λ/R)_+^δ = R^{-δ} (R − λ)^δ`.
    pub fn riesz(delta: f64, r: f64) -> Multiplier<'static> {
        let c = r.powf(-delta);
        Multiplier {
            support: (0.0, r),
            smooth: Box::new(move |_| c),
            right_power: delta,
            breakpoints: vec![],
        }
    }

    /// A general multiplier given on `[a, b]`.
    pub fn from_fn(a: f64, b: f64, f: impl Fn(f64) -> f64 + 'a) -> Self {
        Multiplier {
            support: (a, b),
            smooth: Box::new(f),
            right_power: 0.0,
            breakpoints: vec![],
        }
    }

    /// Dyadic piece `φ_j^δ(λ) = (1−λ)_+^δ φ(2^j(1−λ))` of the Riesz multiplier.
    pub fn dyadic(delta: f64, j: u32, cutoff: &'a DyadicCutoff) -> Self {
        let (lo, hi) = dyadic_window(j);
        let scale = 2f64.powi(j as i32);
        let mut breakpoints = vec![];
        let cells = 8;
        for c in 1..cells {
            breakpoints.push(lo + (hi - lo) * c as f64 / cells as f64);
        }
        Multiplier {
            support: (lo, hi),
            smooth: Box::new(move |l| (1.0 - l).max(0.0).powf(delta) * cutoff.phi(scale * (1.0 - l))),
            right_power: 0.0,
            breakpoints,
        }
    }

    /// `m(λ)`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let (a, b) = self.support;
        if lambda < a || lambda > b {
            return 0.0;
        }
        let e = if self.right_power == 0.0 {
            1.0
        } else {
            (b - lambda).max(0.0).powf(self.right_power)
        };
        (self.smooth)(lambda) * e
    }

    /// Quadrature nodes and weights for `∫ m(λ) F(λ) dλ`, with `cells_per_unit`
    /// cells per unit length on top of the breakpoints.
    pub(crate) fn rule(&self, order: usize, cells_per_unit: f64) -> Vec<(f64, f64)> {
        let (a, b) = self.support;
        let mut edges = vec![a];
        let mut bps: Vec<f64> = self.breakpoints.iter().cloned().filter(|p| *p > a && *p < b).collect();
        bps.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
        edges.extend(bps);
        edges.push(b);
        let gl = gauss_legendre(order);
        let gj = (self.right_power > 0.0).then(|| gauss_jacobi(order, self.right_power, 0.0));
        let mut out = Vec::new();
        let nseg = edges.len() - 1;
        for s in 0..nseg {
            let (lo, hi) = (edges[s], edges[s + 1]);
            let cells = ((hi - lo) * cells_per_unit).ceil().max(1.0) as usize;
            for c in 0..cells {
                let c0 = lo + (hi - lo) * c as f64 / cells as f64;
                let c1 = lo + (hi - lo) * (c + 1) as f64 / cells as f64;
                let half = 0.5 * (c1 - c0);
                let last = s + 1 == nseg && c + 1 == cells;
                match (&gj, last) {
                    (Some(g), true) => {
                        let scale = half.powf(self.right_power + 1.0);
                        for (x, w) in g.nodes.iter().zip(&g.weights) {
                            let l = c0 + half * (x + 1.0);
                            out.push((l, w * scale * (self.smooth)(l)));
                        }
                    }
                    _ => {
                        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                            let l = c0 + half * (x + 1.0);
                            out.push((l, w * half * self.eval(l)));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Per-direction geometry of an evaluation point.
struct Geometry {
    /// `|A_η x|²`.
    r2: Vec<f64>,
    /// `η·u`.
    w: Vec<f64>,
    /// Sphere weight times `|det A_η|`.
    c: Vec<f64>,
    /// Distinct values of `|A_η x|²`.
    uniq: Vec<f64>,
    /// Index into `uniq` per direction.
    slot: Vec<usize>,
}

impl Geometry {
    /// Oscillation count per unit `λ` of `λ ↦ p_λ(x,u)`.
    fn cells_per_unit(&self, n: usize, b: f64) -> f64 {
        let wmax = self.w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let rmax = self.r2.iter().fold(0.0f64, |a, v| a.max(*v));
        wmax / (n as f64 * 2.0 * PI) + ((b * rmax).sqrt() / PI + 1.0) / b.max(1e-300)
    }
}

/// Pointwise evaluator of `p_λ` and of multiplier kernels.
pub struct KernelEvaluator<'a> {
    s: &'a MetivierStructure,
    sphere: SphereNodes,
    levels: [usize; 4],
    radial_order: usize,
}

impl<'a> KernelEvaluator<'a> {
    /// Prepares the sphere rule and truncation levels of `profile`.
    pub fn new(s: &'a MetivierStructure, profile: &MultiplierProfile) -> Result<Self> {
        profile.validate()?;
        Ok(KernelEvaluator {
            s,
            sphere: SphereNodes::new(s, profile.sphere_order)?,
            levels: profile.levels(),
            radial_order: profile.radial_order,
        })
    }

    /// The sphere rule in use.
    pub fn sphere(&self) -> &SphereNodes {
        &self.sphere
    }

    /// Oscillation count per unit `λ` of `λ ↦ p_λ(point)` on `[0, b]`.
    pub(crate) fn cells_per_unit(&self, point: &GroupPoint, b: f64) -> Result<f64> {
        Ok(self.geometry(point)?.cells_per_unit(self.s.n, b))
    }

    /// Gauss nodes per radial cell.
    pub(crate) fn radial_order(&self) -> usize {
        self.radial_order
    }

    fn geometry(&self, p: &GroupPoint) -> Result<Geometry> {
        let (n, m) = (self.s.n, self.s.m);
        if p.x.len() != 2 * n || p.u.len() != m {
            return Err(Error::Dimension {
                expected: 2 * n + m,
                got: p.x.len() + p.u.len(),
            });
        }
        let sp = &self.sphere;
        let mut g = Geometry {
            r2: vec![],
            w: vec![],
            c: vec![],
            uniq: vec![],
            slot: vec![],
        };
        for i in 0..sp.eta.len() {
            let a = &sp.a[i];
            let r2: f64 = (0..2 * n)
                .map(|r| (0..2 * n).map(|c| a[(r, c)] * p.x[c]).sum::<f64>().powi(2))
                .sum();
            g.r2.push(r2);
            g.w.push(sp.eta[i].iter().zip(&p.u).map(|(e, u)| e * u).sum());
            g.c.push(sp.weights[i] * sp.det_a[i]);
            let slot = match g.uniq.iter().position(|v| (v - r2).abs() <= 1e-14 * r2) {
                Some(j) => j,
                None => {
                    g.uniq.push(r2);
                    g.uniq.len() - 1
                }
            };
            g.slot.push(slot);
        }
        Ok(g)
    }

    /// Partial sums of the `k`-series of `p_λ` at the Richardson levels.
    fn partials(&self, g: &Geometry, lambda: f64) -> [Complex64; 4] {
        let (n, m) = (self.s.n, self.s.m);
        let q = (n + m) as i32;
        let pref = lambda.powi(q - 1) * (2.0 * PI).powi(-q);
        let mut out = [ZERO; 4];
        let mut acc = ZERO;
        let mut lev = 0;
        let last = self.levels[3];
        let mut phis = vec![0.0; g.uniq.len()];
        for k in 0..last {
            let y = (2 * k + n) as f64;
            for (v, r2) in phis.iter_mut().zip(&g.uniq) {
                *v = if *r2 == 0.0 {
                    binom_upper(k, n as f64 - 1.0)
                } else {
                    phi_r2(k, n, lambda * r2 / y)
                };
            }
            let mut t = ZERO;
            for i in 0..g.c.len() {
                t += Complex64::from_polar(g.c[i] * phis[g.slot[i]], -lambda * g.w[i] / y);
            }
            acc += t * y.powi(-q);
            while lev < 4 && k + 1 == self.levels[lev] {
                out[lev] = acc * pref;
                lev += 1;
            }
        }
        out
    }

    fn p_value(&self, g: &Geometry, lambda: f64) -> (Complex64, f64) {
        let parts = self.partials(g, lambda);
        richardson_table(&parts, self.s.m as f64)
    }

    /// The spectral density `p_λ(x,u)`.
    pub fn p_lambda(&self, point: &GroupPoint, lambda: f64) -> Result<KernelValue> {
        if !(lambda > 0.0) {
            return Err(param("lambda", "must be positive"));
        }
        let g = self.geometry(point)?;
        let (v, e) = self.p_value(&g, lambda);
        Ok(KernelValue::new(v, e))
    }

    /// `p_λ(x,u)` at every node of a λ-rule, with tail estimates.
    pub fn p_table(&self, point: &GroupPoint, lambdas: &[f64]) -> Result<Vec<(Complex64, f64)>> {
        let g = self.geometry(point)?;
        Ok(lambdas.iter().map(|&l| self.p_value(&g, l)).collect())
    }

    /// Kernel `G_m(x,u) = ∫ m(λ) p_λ(x,u) dλ` of the multiplier `m(𝓛)`.
    ///
    /// The error estimate adds the Richardson tail estimates to the difference
    /// from a rule with a quarter fewer nodes per cell.
    pub fn multiplier_kernel(&self, point: &GroupPoint, mult: &Multiplier) -> Result<KernelValue> {
        let g = self.geometry(point)?;
        let cpu = g.cells_per_unit(self.s.n, mult.support.1);
        let hi = mult.rule(self.radial_order, cpu);
        let lo = mult.rule((self.radial_order - self.radial_order / 4).max(2), cpu);
        let mut v_hi = ZERO;
        let mut tail = 0.0;
        for (l, w) in hi {
            if w == 0.0 || l <= 0.0 {
                continue;
            }
            let (p, e) = self.p_value(&g, l);
            v_hi += p * w;
            tail += w.abs() * e;
        }
        let mut v_lo = ZERO;
        for (l, w) in lo {
            if w == 0.0 || l <= 0.0 {
                continue;
            }
            v_lo += self.p_value(&g, l).0 * w;
        }
        Ok(KernelValue::new(v_hi, tail + (v_hi - v_lo).norm()))
    }
}

/// Riesz kernel `S_R^δ(x,u)` at each point (with `R = profile.r`).
///
/// Requires `δ > m − 1`, the integrability condition of the `μ`-integral.
pub fn riesz_kernel(
    s: &MetivierStructure,
    delta: f64,
    points: &[GroupPoint],
    profile: &MultiplierProfile,
) -> Result<Vec<KernelValue>> {
    riesz_guard(s, delta)?;
    let ev = KernelEvaluator::new(s, profile)?;
    let mult = Multiplier::riesz(delta, profile.r);
    points.iter().map(|p| ev.multiplier_kernel(p, &mult)).collect()
}

fn riesz_guard(s: &MetivierStructure, delta: f64) -> Result<()> {
    if !(delta > s.m as f64 - 1.0) {
        return Err(Error::Guard(format!(
            "delta = {delta} must exceed m - 1 = {} for the kernel integral to converge",
            s.m as f64 - 1.0
        )));
    }
    Ok(())
}

/// Closed form `S_R^δ(0,0) = (2π)^{-(n+m)} R^{Q/2} D Z Γ(δ+1)Γ(n+m)/Γ(δ+n+m+1)` with
/// `D = ∫|det A_η| dσ` (by the sphere rule) and `Z = Σ_k binom(k+n-1,k)(2k+n)^{-(n+m)}`
/// summed through Hurwitz zeta values.
pub fn riesz_kernel_origin(s: &MetivierStructure, delta: f64, r: f64, sphere_order: usize) -> Result<f64> {
    let d = SphereNodes::new(s, sphere_order)?.det_integral();
    let (n, m) = (s.n, s.m);
    let q = n + m;
    let beta = (ln_gamma(delta + 1.0) + ln_gamma(q as f64) - ln_gamma(delta + q as f64 + 1.0)).exp();
    Ok((2.0 * PI).powi(-(q as i32)) * r.powi(q as i32) * d * laguerre_origin_sum(n, m) * beta)
}

/// Result of [`kernel_scaling_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ScalingCheck {
    /// `max |S_R(x,u) − R^{Q/2} S_1(√R x, R u)| / |S_R(x,u)|`.
    pub max_rel_dev: f64,
    /// Per point: direct value, rescaled value.
    pub rows: Vec<(KernelValue, KernelValue)>,
}

/// Compares `S_R^δ(x,u)` with `R^{Q/2} S_1^δ(√R x, R u)`, both by quadrature with
/// the same profile.
pub fn kernel_scaling_check(
    s: &MetivierStructure,
    delta: f64,
    r: f64,
    points: &[GroupPoint],
    profile: &MultiplierProfile,
) -> Result<ScalingCheck> {
    riesz_guard(s, delta)?;
    let ev = KernelEvaluator::new(s, profile)?;
    let direct = Multiplier::riesz(delta, r);
    let unit = Multiplier::riesz(delta, 1.0);
    let fac = r.powf(s.q() as f64 / 2.0);
    let mut rows = vec![];
    let mut worst: f64 = 0.0;
    for p in points {
        let a = ev.multiplier_kernel(p, &direct)?;
        let sp = GroupPoint::new(
            p.x.iter().map(|c| c * r.sqrt()).collect(),
            p.u.iter().map(|c| c * r).collect(),
        )?;
        let b1 = ev.multiplier_kernel(&sp, &unit)?;
        let b = KernelValue::new(b1.value() * fac, b1.err_est * fac);
        let dev = (a.value() - b.value()).norm() / a.value().norm().max(1e-300);
        worst = worst.max(dev);
        rows.push((a, b));
    }
    Ok(ScalingCheck {
        max_rel_dev: worst,
        rows,
    })
}

/// Least-squares decay fit along a dilation orbit.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Fitted slope of `log|S|` against `log(1 + |(A x, u)|)`.
    pub slope: f64,
    /// Intercept of the fit.
    pub intercept: f64,
    /// Homogeneous norms of the sample points.
    pub radii: Vec<f64>,
    /// `|S|` at the sample points.
    pub values: Vec<f64>,
    /// Error estimates at the sample points.
    pub errors: Vec<f64>,
    /// Number of leading points above the noise floor (used in the fit).
    pub used: usize,
    /// Whether at least three points were above the noise floor.
    pub conclusive: bool,
}

/// Points `δ_t(ω₀)` with homogeneous norm `|(A_{e_1} x, u)| = t` for each `t`.
pub fn dilation_orbit(s: &MetivierStructure, base: &GroupPoint, radii: &[f64]) -> Result<Vec<GroupPoint>> {
    let mut e1 = vec![0.0; s.m];
    e1[0] = 1.0;
    let a = factorize_eta(s, &e1)?.a;
    let ax: Vec<f64> = (0..2 * s.n).map(|r| (0..2 * s.n).map(|c| a[(r, c)] * base.x[c]).sum()).collect();
    let rho = homogeneous_norm(&GroupPoint::new(ax, base.u.clone())?);
    if rho == 0.0 {
        return Err(param("base", "must differ from the identity"));
    }
    radii
        .iter()
        .map(|&t| {
            let d = t / rho;
            GroupPoint::new(base.x.iter().map(|c| c * d).collect(), base.u.iter().map(|c| c * d * d).collect())
        })
        .collect()
}

/// Fits the decay of `|values|` against `log(1 + radii)` over the leading points
/// whose values exceed ten times their error estimate.
pub fn fit_decay(radii: &[f64], values: &[f64], errors: &[f64]) -> DecayFit {
    let used = values
        .iter()
        .zip(errors)
        .take_while(|(v, e)| **v > 10.0 * **e && **v > 0.0)
        .count();
    let xs: Vec<f64> = radii[..used].iter().map(|r| (1.0 + r).ln()).collect();
    let ys: Vec<f64> = values[..used].iter().map(|v| v.ln()).collect();
    let (slope, intercept) = if used >= 2 {
        linear_fit(&xs, &ys)
    } else {
        (f64::NAN, f64::NAN)
    };
    DecayFit {
        slope,
        intercept,
        radii: radii.to_vec(),
        values: values.to_vec(),
        errors: errors.to_vec(),
        used,
        conclusive: used >= 3,
    }
}

/// Decay fit of `|S^δ|` along the dilation orbit of `base` (requires `δ > 2N − 1`).
pub fn kernel_decay_fit(
    s: &MetivierStructure,
    delta: f64,
    n_order: usize,
    base: &GroupPoint,
    radii: &[f64],
    profile: &MultiplierProfile,
) -> Result<DecayFit> {
    if !(delta > 2.0 * n_order as f64 - 1.0) {
        return Err(Error::Guard(format!("delta = {delta} must exceed 2N - 1 = {}", 2 * n_order - 1)));
    }
    let pts = dilation_orbit(s, base, radii)?;
    let vals = riesz_kernel(s, delta, &pts, profile)?;
    let v: Vec<f64> = vals.iter().map(|k| k.value().norm()).collect();
    let e: Vec<f64> = vals.iter().map(|k| k.err_est).collect();
    Ok(fit_decay(radii, &v, &e))
}

/// Closed-form Laguerre coefficient `R_k(μ, F) = (1 − (2k+n)|μ|)_+^δ |det A_{μ/|μ|}|`.
pub fn laguerre_coefficient(s: &MetivierStructure, delta: f64, k: usize, mu: &[f64]) -> Result<f64> {
    let (rho, det) = mu_polar(s, mu)?;
    Ok((1.0 - (2 * k + s.n) as f64 * rho).max(0.0).powf(delta) * det)
}

fn mu_polar(s: &MetivierStructure, mu: &[f64]) -> Result<(f64, f64)> {
    if mu.len() != s.m {
        return Err(Error::Dimension {
            expected: s.m,
            got: mu.len(),
        });
    }
    let rho = mu.iter().map(|c| c * c).sum::<f64>().sqrt();
    if rho == 0.0 {
        return Err(param("mu", "must be nonzero"));
    }
    let eta: Vec<f64> = mu.iter().map(|c| c / rho).collect();
    Ok((rho, factorize_eta(s, &eta)?.det_a.abs()))
}

/// Result of [`laguerre_roundtrip`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RoundtripCheck {
    /// Closed form.
    pub closed_form: f64,
    /// Radial quadrature of the coefficient integral.
    pub quadrature: f64,
    /// Relative difference.
    pub rel_error: f64,
}

/// Integrates `R_k(μ,F) = 2^{1-n} k!/(k+n-1)! ∫_0^∞ F^μ(r) φ_k^{|μ|}(r) r^{2n-1} dr`
/// against the profile `F^μ(r) = |μ|^n Σ_j (1 − (2j+n)|μ|)_+^δ |det A| φ_j^{|μ|}(r)`
/// synthesized from the closed-form coefficients, by composite Gauss–Legendre
/// quadrature in `r`.
pub fn laguerre_roundtrip(
    s: &MetivierStructure,
    delta: f64,
    k: usize,
    mu: &[f64],
    radial_order: usize,
) -> Result<RoundtripCheck> {
    let (rho, det) = mu_polar(s, mu)?;
    let n = s.n;
    let closed_form = laguerre_coefficient(s, delta, k, mu)?;
    let jmax = ((1.0 / rho - n as f64) / 2.0).floor().max(0.0) as usize;
    let coeffs: Vec<f64> = (0..=jmax)
        .map(|j| (1.0 - (2 * j + n) as f64 * rho).max(0.0).powf(delta) * det)
        .collect();
    let profile = |r: f64| -> f64 {
        let r2 = rho * r * r;
        rho.powi(n as i32) * coeffs.iter().enumerate().map(|(j, c)| c * phi_r2(j, n, r2)).sum::<f64>()
    };
    // cells of unit width in s = |μ| r²/2, up to where e^{-s} is negligible
    let deg = (jmax.max(k)) as f64;
    let s_max = 4.0 * deg + 2.0 * n as f64 + 90.0;
    let cells = s_max.ceil() as usize;
    let gl = gauss_legendre(radial_order);
    let mut acc = 0.0;
    for c in 0..cells {
        let r0 = (2.0 * c as f64 / rho).sqrt();
        let r1 = (2.0 * (c + 1) as f64 / rho).sqrt();
        acc += gl
            .mapped(r0, r1)
            .integrate(|r| profile(r) * phi_r2(k, n, rho * r * r) * r.powi(2 * n as i32 - 1));
    }
    let norm = 2f64.powi(1 - n as i32) / crate::specfun::rising_ratio(k, n);
    let quadrature = norm * acc;
    let rel_error = if closed_form == 0.0 {
        quadrature.abs()
    } else {
        (quadrature - closed_form).abs() / closed_form.abs()
    };
    Ok(RoundtripCheck {
        closed_form,
        quadrature,
        rel_error,
    })
}

/// Smooth dyadic cutoff `φ(s) = χ(s) − χ(2s)` supported in `(½, 2)`, where `χ` is a
/// smooth step equal to 1 on `[0, 1]` and 0 on `[2, ∞)`; `Σ_j φ(2^j s) = 1` for `s > 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DyadicCutoff;

impl DyadicCutoff {
    /// `χ(s)`.
    pub fn chi(&self, s: f64) -> f64 {
        1.0 - smooth_step(s - 1.0)
    }

    /// `φ(s)`.
    pub fn phi(&self, s: f64) -> f64 {
        if s <= 0.5 || s >= 2.0 {
            return 0.0;
        }
        self.chi(s) - self.chi(2.0 * s)
    }

    /// `max |Σ_{|j|≤40} φ(2^j s) − 1|` over a logarithmic grid of `s ∈ [2^{-20}, 2^{20}]`.
    pub fn partition_error(&self) -> f64 {
        partition_error(&|s| self.phi(s))
    }
}

/// `max |Σ_{|j|≤40} φ(2^j s) − 1|` over a logarithmic grid of `s ∈ [2^{-20}, 2^{20}]`.
pub fn partition_error(phi: &dyn Fn(f64) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..=4000 {
        let s = 2f64.powf(-20.0 + 40.0 * i as f64 / 4000.0);
        let sum: f64 = (-40..=40).map(|j| phi(2f64.powi(j) * s)).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    worst
}

/// Errors when `phi` fails the partition-of-unity check by more than `1e-10`.
pub fn check_partition(phi: &dyn Fn(f64) -> f64) -> Result<()> {
    let e = partition_error(phi);
    if e > 1e-10 {
        return Err(param("cutoff", &format!("partition of unity fails by {e:.3e}")));
    }
    Ok(())
}

/// `C^∞` step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Support `[1 − 2^{−j+1}, 1 − 2^{−j−1}]` (clipped at 0) of the dyadic piece `j`.
pub fn dyadic_window(j: u32) -> (f64, f64) {
    let j = j as i32;
    ((1.0 - 2f64.powi(1 - j)).max(0.0), 1.0 - 2f64.powi(-j - 1))
}

/// `φ_j^δ(λ) = (1−λ)_+^δ φ(2^j (1−λ))`.
pub fn dyadic_multiplier(delta: f64, j: u32, cutoff: &dyn Fn(f64) -> f64, lambda: f64) -> f64 {
    if lambda >= 1.0 {
        return 0.0;
    }
    (1.0 - lambda).powf(delta) * cutoff(2f64.powi(j as i32) * (1.0 - lambda))
}

/// Decomposition of a group function on the dual grid into eigencomponents
/// `Π_k^μ f^μ` of `𝓛` with eigenvalue `(2k+n)|μ|` up to a cut.
pub struct SpectralSlices {
    grid: Grid,
    dual: DualGridFunction,
    /// Per dual node: `(λ, component)` for every level below the cut.
    levels: Vec<Vec<(f64, Vec<Complex64>)>>,
    /// Per dual node: `f^μ` minus the retained components.
    residual: Vec<Vec<Complex64>>,
    /// Per dual node: `⟨Π_k f^μ, f^μ⟩` for every retained level.
    weights: Vec<Vec<f64>>,
    /// Per dual node: `‖f^μ‖²`.
    layer_mass: Vec<f64>,
    /// Largest retained eigenvalue bound.
    pub lambda_cut: f64,
}

impl SpectralSlices {
    /// Decomposes `f`, keeping every component with eigenvalue `≤ lambda_cut`.
    pub fn new(s: &MetivierStructure, f: &GridFunction, lambda_cut: f64) -> Result<Self> {
        Self::build(s, f, lambda_cut, true)
    }

    fn build(s: &MetivierStructure, f: &GridFunction, lambda_cut: f64, keep: bool) -> Result<Self> {
        if f.grid.domain != Domain::Group {
            return Err(param("f", "spectral slices need a group grid"));
        }
        if f.grid.n != s.n || f.grid.m != s.m {
            return Err(Error::GridMismatch("grid does not match the structure".into()));
        }
        const BLOCK: usize = 32;
        let dual = partial_fourier_u(f)?;
        let layer_grid = f.grid.layer_grid();
        let n = s.n;
        let mut levels = vec![];
        let mut residual = vec![];
        let mut weights = vec![];
        let mut layer_mass = vec![];
        for mf in 0..dual.mu_len() {
            let mu = dual.mu(mf);
            let rho = mu.iter().map(|c| c * c).sum::<f64>().sqrt();
            let eta: Vec<f64> = mu.iter().map(|c| c / rho).collect();
            let layer = GridFunction::from_data(&layer_grid, dual.layer(mf))?;
            let mut rest = layer.clone();
            let mut lv = vec![];
            let mut wv = vec![];
            if n as f64 * rho <= lambda_cut && layer.max_abs() > 0.0 {
                let fam = ProjectionFamily::new(s, &eta, rho, &layer)?;
                // levels k with (2k+n)ρ ≤ cut
                let count = ((lambda_cut / rho - n as f64) / 2.0).floor() as usize + 1;
                let mut k0 = 0;
                while k0 < count {
                    let k1 = (k0 + BLOCK).min(count);
                    for (j, p) in fam.project_range(k0, k1)?.into_iter().enumerate() {
                        wv.push(p.inner(&layer)?.re);
                        if keep {
                            rest.axpy(Complex64::new(-1.0, 0.0), &p)?;
                            lv.push(((2 * (k0 + j) + n) as f64 * rho, p.data));
                        } else {
                            lv.push(((2 * (k0 + j) + n) as f64 * rho, vec![]));
                        }
                    }
                    k0 = k1;
                }
            }
            layer_mass.push(layer.l2_norm().powi(2));
            levels.push(lv);
            weights.push(wv);
            residual.push(if keep { rest.data } else { vec![] });
        }
        Ok(SpectralSlices {
            grid: f.grid.clone(),
            dual,
            levels,
            residual,
            weights,
            layer_mass,
            lambda_cut,
        })
    }

    /// Every retained component as `(μ, λ, layer)`.
    pub(crate) fn components(&self) -> Vec<(Vec<f64>, f64, &[Complex64])> {
        let mut out = vec![];
        for (mf, lv) in self.levels.iter().enumerate() {
            let mu = self.dual.mu(mf);
            for (lam, comp) in lv {
                out.push((mu.clone(), *lam, comp.as_slice()));
            }
        }
        out
    }

    /// Weight `(Δμ/2π)^m` of one dual node in the inverse transform.
    pub(crate) fn node_weight(&self) -> f64 {
        (self.dual.dmu() / (2.0 * PI)).powi(self.grid.m as i32)
    }

    /// `m(𝓛) f`, with `beyond` applied to everything above the cut.
    pub fn apply(&self, m: &dyn Fn(f64) -> f64, beyond: f64) -> Result<GridFunction> {
        let ml = self.dual.mu_len();
        let xl = self.grid.x_len();
        let mut data = vec![ZERO; xl * ml];
        for mf in 0..ml {
            for (lam, comp) in &self.levels[mf] {
                let c = m(*lam);
                if c == 0.0 {
                    continue;
                }
                for xi in 0..xl {
                    data[xi * ml + mf] += comp[xi] * c;
                }
            }
            if beyond != 0.0 {
                for xi in 0..xl {
                    data[xi * ml + mf] += self.residual[mf][xi] * beyond;
                }
            }
        }
        let d = DualGridFunction {
            grid: self.grid.clone(),
            axis: self.dual.axis.clone(),
            data,
            boundary_mass: self.dual.boundary_mass,
        };
        inverse_partial_fourier_u(&d)
    }

    /// `(λ, ⟨Π f^μ, f^μ⟩ Δμ^m (2π)^{-m})` for every retained component, and the
    /// total `Σ_μ ‖f^μ‖² Δμ^m (2π)^{-m}`, which equals `‖f‖₂²` by Plancherel.
    ///
    /// The inner-product form stays accurate when a component extends beyond the
    /// box while `f^μ` itself is localized inside it.
    pub fn masses(&self) -> (Vec<(f64, f64)>, f64) {
        let w = (self.dual.dmu() / (2.0 * PI)).powi(self.grid.m as i32);
        let mut out = vec![];
        for (lv, wv) in self.levels.iter().zip(&self.weights) {
            for ((lam, _), m) in lv.iter().zip(wv) {
                out.push((*lam, m * w));
            }
        }
        let total = self.layer_mass.iter().sum::<f64>() * w;
        (out, total)
    }
}

/// `m(𝓛) f` for a multiplier supported in `[a, b]` (μ-slice route).
pub fn multiplier_apply(
    s: &MetivierStructure,
    f: &GridFunction,
    m: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
) -> Result<GridFunction> {
    if !(a >= 0.0 && b > a) {
        return Err(param("support", "needs 0 <= a < b"));
    }
    let slices = SpectralSlices::new(s, f, b)?;
    slices.apply(&|l| if l >= a && l <= b { m(l) } else { 0.0 }, 0.0)
}

/// Riesz mean `S_R^δ f` (μ-slice route).
pub fn riesz_apply(s: &MetivierStructure, f: &GridFunction, delta: f64, r: f64) -> Result<GridFunction> {
    if !(delta >= 0.0) || !(r > 0.0) {
        return Err(param("delta, r", "need delta >= 0 and r > 0"));
    }
    let slices = SpectralSlices::new(s, f, r)?;
    slices.apply(&|l| (1.0 - l / r).max(0.0).powf(delta), 0.0)
}

/// Dyadic piece `T_j^δ f = φ_j^δ(𝓛) f` (μ-slice route); the cutoff must pass the
/// partition-of-unity check.
pub fn dyadic_piece_apply(
    s: &MetivierStructure,
    f: &GridFunction,
    delta: f64,
    j: u32,
    cutoff: &dyn Fn(f64) -> f64,
) -> Result<GridFunction> {
    check_partition(cutoff)?;
    let slices = SpectralSlices::new(s, f, 1.0)?;
    slices.apply(&|l| dyadic_multiplier(delta, j, cutoff, l), 0.0)
}

/// Result of [`p_lambda`].
#[derive(Debug, Clone)]
pub struct SpectralSlice {
    /// `P_λ f` on the grid.
    pub value: GridFunction,
    /// Relative L² size of the Richardson correction of the `k`-series.
    pub tail_estimate: f64,
    /// Whether the projection vanished identically.
    pub negligible: bool,
}

/// `P_λ f = Σ_k λ^{m-1} (2π)^{-m} (2k+n)^{-m} ∫_{S^{m-1}} e^{-iμ·u} Π_k^{μ} f^{μ} dσ(η)`
/// with `μ = λη/(2k+n)`, where `Π_k^μ` is the normalized projection of
/// [`crate::twisted::projection_via_a`]; this equals the definition through
/// `f ∗ ẽ_k^{λη}`. The `k`-series is Richardson-extrapolated over `K/4, K/2, K`.
pub fn p_lambda(s: &MetivierStructure, f: &GridFunction, lambda: f64, profile: &MultiplierProfile) -> Result<SpectralSlice> {
    if !(lambda > 0.0) {
        return Err(param("lambda", "must be positive"));
    }
    profile.validate()?;
    if f.grid.domain != Domain::Group || f.grid.n != s.n || f.grid.m != s.m {
        return Err(Error::GridMismatch("p_lambda needs a group grid of the structure".into()));
    }
    let sphere = SphereNodes::new(s, profile.sphere_order)?;
    let (n, m) = (s.n, s.m);
    let lv = profile.levels();
    let levels = [lv[1], lv[2], lv[3]];
    let layer_grid = f.grid.layer_grid();
    let nyquist = PI / f.grid.hu();
    let mut acc = GridFunction::zeros(&f.grid);
    let mut snaps: Vec<GridFunction> = vec![];
    for k in 0..levels[2] {
        let y = (2 * k + n) as f64;
        let rho = lambda / y;
        let coef = lambda.powi(m as i32 - 1) * (2.0 * PI).powi(-(m as i32)) * y.powi(-(m as i32));
        if rho > nyquist {
            // f^μ beyond the dual range of the centre grid is not represented
            if levels.contains(&(k + 1)) {
                snaps.push(acc.clone());
            }
            continue;
        }
        for (i, eta) in sphere.eta.iter().enumerate() {
            let mu: Vec<f64> = eta.iter().map(|e| e * rho).collect();
            let layer = GridFunction::from_data(&layer_grid, fourier_u_at(f, &mu)?)?;
            let proj = ProjectionFamily::new(s, eta, rho, &layer)?.project(k)?;
            accumulate_mode(&mut acc, &mu, &proj.data, Complex64::new(coef * sphere.weights[i], 0.0));
        }
        if levels.contains(&(k + 1)) {
            snaps.push(acc.clone());
        }
    }
    let mut best = GridFunction::zeros(&f.grid);
    for i in 0..best.data.len() {
        let parts = [snaps[0].data[i], snaps[1].data[i], snaps[2].data[i]];
        best.data[i] = richardson_table(&parts, m as f64).0;
    }
    let nb = best.l2_norm();
    let negligible = nb == 0.0;
    let tail_estimate = if negligible {
        0.0
    } else {
        best.sub(&snaps[2])?.l2_norm() / nb
    };
    Ok(SpectralSlice {
        value: best,
        tail_estimate,
        negligible,
    })
}

/// `‖𝓛g − λg‖₂ / ‖g‖₂` over the nodes whose coordinates all lie within
/// `keep` times the grid extents, with `𝓛` by central differences.
pub fn interior_eigen_residual(s: &MetivierStructure, g: &GridFunction, lambda: f64, keep: f64) -> Result<f64> {
    let lg = sub_laplacian_apply(s, g)?;
    let grid = &g.grid;
    let mut x = vec![0.0; 2 * grid.n];
    let mut u = vec![0.0; grid.m];
    let (mut num, mut den) = (0.0, 0.0);
    for xi in 0..grid.x_len() {
        grid.x_coords(xi, &mut x);
        if x.iter().any(|c| c.abs() > keep * grid.x_extent) {
            continue;
        }
        for ui in 0..grid.u_len() {
            grid.u_coords(ui, &mut u);
            if u.iter().any(|c| c.abs() > keep * grid.u_extent) {
                continue;
            }
            let v = g.at(xi, ui);
            num += (lg.at(xi, ui) - v * lambda).norm_sqr();
            den += v.norm_sqr();
        }
    }
    if den == 0.0 {
        return Err(param("g", "vanishes on the interior window"));
    }
    Ok((num / den).sqrt())
}

/// Result of [`inversion_check`].
#[derive(Debug, Clone, Serialize)]
pub struct InversionReport {
    /// `‖∫ P_λ f dλ − f‖₂ / ‖f‖₂` by the λ-rule.
    pub rel_error: f64,
    /// Upper end of the λ-band.
    pub band: f64,
    /// Fraction of `‖f‖²` carried by eigencomponents inside the band.
    pub captured_mass: f64,
    /// Number of λ-nodes.
    pub nodes: usize,
    /// Band-coverage warning.
    pub warning: Option<String>,
}

/// Spectral masses `(λ, ⟨Π f^μ, f^μ⟩ Δμ^m (2π)^{-m})` of every eigencomponent of `f`
/// with eigenvalue `≤ lambda_cut`, and the total `‖f‖₂²`, without storing the
/// components.
pub fn spectral_masses(s: &MetivierStructure, f: &GridFunction, lambda_cut: f64) -> Result<(Vec<(f64, f64)>, f64)> {
    Ok(SpectralSlices::build(s, f, lambda_cut, false)?.masses())
}

/// Smallest eigenvalue bound capturing `1 − 1e-6` of the spectral mass of `f`,
/// together with the captured fraction. The search doubles the cut up to the
/// eigenvalue `(π/h_x)²` resolved by the first-layer grid.
pub fn spectral_band(s: &MetivierStructure, f: &GridFunction) -> Result<(f64, f64)> {
    if f.max_abs() == 0.0 {
        return Ok((1.0, 1.0));
    }
    let top = (PI / f.grid.hx()).powi(2);
    let mut cut = 4.0f64.min(top);
    loop {
        let (mut ms, total) = spectral_masses(s, f, cut)?;
        ms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite eigenvalues"));
        let mut acc = 0.0;
        for (lam, m) in &ms {
            acc += m;
            if acc >= (1.0 - 1e-6) * total {
                return Ok((*lam, (acc / total).min(1.0)));
            }
        }
        if cut >= top {
            return Ok((cut, (acc / total).min(1.0)));
        }
        cut = (2.0 * cut).min(top);
    }
}

/// Reconstructs `f` from `∫_0^Λ P_λ f dλ` with a Gauss–Legendre rule of
/// `lambda_nodes` nodes on the spectral band `[0, Λ]`.
pub fn inversion_check(
    s: &MetivierStructure,
    f: &GridFunction,
    lambda_nodes: usize,
    profile: &MultiplierProfile,
) -> Result<InversionReport> {
    let norm = f.l2_norm();
    if norm == 0.0 {
        return Ok(InversionReport {
            rel_error: 0.0,
            band: 0.0,
            captured_mass: 1.0,
            nodes: lambda_nodes,
            warning: None,
        });
    }
    let (band, captured_mass) = spectral_band(s, f)?;
    let rule = gauss_legendre(lambda_nodes).mapped(0.0, band);
    let mut acc = GridFunction::zeros(&f.grid);
    for (l, w) in rule.nodes.iter().zip(&rule.weights) {
        let p = p_lambda(s, f, *l, profile)?;
        acc.axpy(Complex64::new(*w, 0.0), &p.value)?;
    }
    let rel_error = acc.sub(f)?.l2_norm() / norm;
    let warning = (captured_mass < 1.0 - 1e-6)
        .then(|| format!("spectral band captures only {:.8} of the mass", captured_mass));
    Ok(InversionReport {
        rel_error,
        band,
        captured_mass,
        nodes: lambda_nodes,
        warning,
    })
}

/// `‖G_m‖₂` for the kernel of `m(𝓛)`, `m` supported in `[a, b]`, by Plancherel in
/// `u`: `‖G_m‖₂² = (2π)^{-m} ∫ ‖G^μ‖²_{L²(R^{2n})} dμ` with
/// `G^μ = (|μ|/2π)^n Σ_k m((2k+n)|μ|) φ_k^{|μ|}∘A |det A|`, whose layer norm
/// follows from the orthogonality of the Laguerre functions. The `|μ|`-integral
/// uses Gauss–Legendre cells on each support interval `[a, b]/(2k+n)` and the
/// `k`-series is Richardson-extrapolated.
pub fn g_m_kernel_l2(
    s: &MetivierStructure,
    m: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    profile: &MultiplierProfile,
) -> Result<f64> {
    if !(a >= 0.0 && b > a) {
        return Err(param("support", "needs 0 <= a < b"));
    }
    profile.validate()?;
    let sphere = SphereNodes::new(s, profile.sphere_order)?;
    let (n, mm) = (s.n, s.m);
    let gl = gauss_legendre(profile.radial_order);
    let levels = profile.levels();
    let mut parts = [ZERO; 4];
    let mut acc = 0.0;
    let mut lev = 0;
    let cells = 4;
    for k in 0..levels[3] {
        let y = (2 * k + n) as f64;
        let mut term = 0.0;
        for c in 0..cells {
            let r0 = (a + (b - a) * c as f64 / cells as f64) / y;
            let r1 = (a + (b - a) * (c + 1) as f64 / cells as f64) / y;
            term += gl.mapped(r0, r1).integrate(|rho| {
                let mv = m(y * rho);
                // ‖φ_k^ρ∘A |det A|‖² = |det A| ‖φ_k^ρ‖², summed over the sphere
                let layer: f64 = sphere
                    .weights
                    .iter()
                    .zip(&sphere.det_a)
                    .map(|(w, d)| w * d)
                    .sum::<f64>()
                    * crate::specfun::phi_l2_norm_sq_exact(k, n, rho);
                rho.powi(mm as i32 - 1) * (rho / (2.0 * PI)).powi(2 * n as i32) * mv * mv * layer
            });
        }
        acc += term;
        while lev < 4 && k + 1 == levels[lev] {
            parts[lev] = Complex64::new(acc, 0.0);
            lev += 1;
        }
    }
    let (v, _) = richardson_table(&parts, mm as f64);
    Ok((v.re * (2.0 * PI).powi(-(mm as i32))).sqrt())
}

/// Closed form of [`g_m_kernel_l2`]:
/// `‖G_m‖₂² = (2π)^{-(n+m)} D Z ∫_a^b λ^{n+m-1} m(λ)² dλ`.
pub fn g_m_kernel_l2_closed(
    s: &MetivierStructure,
    m: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    sphere_order: usize,
) -> Result<f64> {
    let d = SphereNodes::new(s, sphere_order)?.det_integral();
    let q = (s.n + s.m) as i32;
    let gl = gauss_legendre(32);
    let mut integral = 0.0;
    let cells = 16;
    for c in 0..cells {
        let l0 = a + (b - a) * c as f64 / cells as f64;
        let l1 = a + (b - a) * (c + 1) as f64 / cells as f64;
        integral += gl.mapped(l0, l1).integrate(|l| l.powi(q - 1) * m(l).powi(2));
    }
    Ok(((2.0 * PI).powi(-q) * d * laguerre_origin_sum(s.n, s.m) * integral).sqrt())
}

/// Width-scaling fit of `‖G_m‖₂` for `m = χ_{[b−w, b]}`.
#[derive(Debug, Clone, Serialize)]
pub struct WidthFit {
    /// Fitted slope of `log ‖G_m‖₂` against `log w`.
    pub slope: f64,
    /// `(w, ‖G_m‖₂)` rows.
    pub rows: Vec<(f64, f64)>,
}

/// Fits `log ‖G_m‖₂` against `log w` for indicator multipliers of width `w` ending at `b`.
pub fn width_scaling_fit(s: &MetivierStructure, b: f64, widths: &[f64], profile: &MultiplierProfile) -> Result<WidthFit> {
    let mut rows = vec![];
    for &w in widths {
        let norm = g_m_kernel_l2(s, &|_| 1.0, b - w, b, profile)?;
        rows.push((w, norm));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    Ok(WidthFit {
        slope: linear_fit(&xs, &ys).0,
        rows,
    })
}

/// A Gaussian trial function `e^{−a|x|² − b|u|²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianTrial {
    /// Width parameter in `x`.
    pub a: f64,
    /// Width parameter in `u`.
    pub b: f64,
}

impl GaussianTrial {
    /// `‖f‖_p` in closed form.
    pub fn lp_norm(&self, s: &MetivierStructure, p: f64) -> f64 {
        if p.is_infinite() {
            return 1.0;
        }
        ((PI / (p * self.a)).powi(s.n as i32) * (PI / (p * self.b)).powf(s.m as f64 / 2.0)).powf(1.0 / p)
    }

    /// Samples the trial on a grid.
    pub fn sample(&self, grid: &Grid) -> GridFunction {
        GridFunction::from_fn(grid, |x, u| {
            let x2: f64 = x.iter().map(|c| c * c).sum();
            let u2: f64 = u.iter().map(|c| c * c).sum();
            Complex64::new((-self.a * x2 - self.b * u2).exp(), 0.0)
        })
    }
}

/// Pointwise `P_λ f` for a Gaussian trial on an H-type group (orthogonal `A_η`).
///
/// For radial `g`, `g ×_ρ φ_k^ρ = ⟨g, φ_k^ρ⟩ φ_k^ρ / φ_k(0)` and
/// `⟨e^{−a|·|²}, φ_k^ρ⟩ = π^n/Γ(n) (2/ρ)^n Γ(k+n)/k! (s−1)^k / s^{k+n}` with
/// `s = 2a/ρ + ½`, so every term of the `k`-series is explicit.
pub struct GaussianProjection<'a> {
    s: &'a MetivierStructure,
    sphere: SphereNodes,
    trial: GaussianTrial,
    levels: [usize; 4],
}

impl<'a> GaussianProjection<'a> {
    /// Prepares the sphere rule; errors unless every `A_η` is orthogonal.
    pub fn new(s: &'a MetivierStructure, trial: GaussianTrial, profile: &MultiplierProfile) -> Result<Self> {
        profile.validate()?;
        let sphere = SphereNodes::new(s, profile.sphere_order)?;
        if !sphere.orthogonal() {
            return Err(param("group", "the Gaussian closed form needs an H-type group"));
        }
        if !(trial.a > 0.0 && trial.b > 0.0) {
            return Err(param("trial", "widths must be positive"));
        }
        Ok(GaussianProjection {
            s,
            sphere,
            trial,
            levels: profile.levels(),
        })
    }

    /// `P_λ f(x,u)` with a Richardson tail estimate.
    pub fn eval(&self, lambda: f64, x: &[f64], u: &[f64]) -> Result<KernelValue> {
        if !(lambda > 0.0) {
            return Err(param("lambda", "must be positive"));
        }
        let (n, m) = (self.s.n, self.s.m);
        if x.len() != 2 * n || u.len() != m {
            return Err(Error::Dimension {
                expected: 2 * n + m,
                got: x.len() + u.len(),
            });
        }
        let x2: f64 = x.iter().map(|c| c * c).sum();
        let q = (n + m) as i32;
        let pref = lambda.powi(q - 1) * (2.0 * PI).powi(-q);
        let (a, b) = (self.trial.a, self.trial.b);
        let mut parts = [ZERO; 4];
        let mut acc = ZERO;
        let mut lev = 0;
        for k in 0..self.levels[3] {
            let y = (2 * k + n) as f64;
            let rho = lambda / y;
            let sv = 2.0 * a / rho + 0.5;
            let layer = PI.powi(n as i32) * (2.0 / rho).powi(n as i32) * ((sv - 1.0) / sv).powi(k as i32) * sv.powi(-(n as i32))
                * phi_r2(k, n, rho * x2);
            let centre = (PI / b).powf(m as f64 / 2.0) * (-rho * rho / (4.0 * b)).exp();
            let mut sph = ZERO;
            for (i, eta) in self.sphere.eta.iter().enumerate() {
                let w: f64 = eta.iter().zip(u).map(|(e, v)| e * v).sum();
                sph += Complex64::from_polar(self.sphere.weights[i] * self.sphere.det_a[i], -rho * w);
            }
            acc += sph * (layer * centre * y.powi(-q));
            while lev < 4 && k + 1 == self.levels[lev] {
                parts[lev] = acc * pref;
                lev += 1;
            }
        }
        let (v, e) = richardson_table(&parts, m as f64);
        Ok(KernelValue::new(v, e))
    }

    /// `‖P_λ f‖_{p'}` over `R^{2n} × R^m`: the maximum over a radial sample grid for
    /// `p = 1`, otherwise a polar quadrature on `|x| ≤ x_max`, `|u| = t, u ∥ e_1`,
    /// `t ≤ u_max`.
    pub fn dual_norm(&self, lambda: f64, p: f64, x_max: f64, u_max: f64, samples: usize) -> Result<f64> {
        let (n, m) = (self.s.n, self.s.m);
        let at = |r: f64, t: f64| -> Result<f64> {
            let mut x = vec![0.0; 2 * n];
            x[0] = r;
            let mut u = vec![0.0; m];
            u[0] = t;
            Ok(self.eval(lambda, &x, &u)?.value().norm())
        };
        if p == 1.0 {
            let mut best: f64 = 0.0;
            for i in 0..=samples {
                for j in 0..=samples {
                    let r = x_max * i as f64 / samples as f64;
                    let t = u_max * j as f64 / samples as f64;
                    best = best.max(at(r, t)?);
                }
            }
            return Ok(best);
        }
        let pp = p / (p - 1.0);
        let gl = gauss_legendre(samples.max(4));
        let rr = gl.mapped(0.0, x_max);
        let tt = gl.mapped(0.0, u_max);
        let mut acc = 0.0;
        for (r, wr) in rr.nodes.iter().zip(&rr.weights) {
            for (t, wt) in tt.nodes.iter().zip(&tt.weights) {
                acc += wr * wt * r.powi(2 * n as i32 - 1) * t.powi(m as i32 - 1) * at(*r, *t)?.powf(pp);
            }
        }
        let area = crate::quad::sphere_area(2 * n) * crate::quad::sphere_area(m);
        Ok((acc * area).powf(1.0 / pp))
    }
}

/// Result of [`restriction_scaling_fit`].
#[derive(Debug, Clone, Serialize)]
pub struct RestrictionFit {
    /// Fitted slope of `log(‖P_λ f‖_{p'} / ‖f‖_p)` against `log λ`.
    pub slope: f64,
    /// The exponent `Q(1/p − 1/2) − 1`.
    pub target: f64,
    /// `(λ, ‖P_λ f‖_{p'}, ‖f‖_p)` rows.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Upper end `(2m+2)/(m+3)` of the admissible range of `p`.
pub fn restriction_bound(m: usize) -> f64 {
    (2.0 * m as f64 + 2.0) / (m as f64 + 3.0)
}

fn check_admissible(m: usize, p: f64) -> Result<()> {
    let bound = restriction_bound(m);
    if !(p >= 1.0 && p <= bound) {
        return Err(Error::Admissibility { p, bound });
    }
    Ok(())
}

/// Fits the growth exponent of `‖P_λ f‖_{p'}` in `λ` for a Gaussian trial, to be
/// compared with `Q(1/p − 1/2) − 1`.
pub fn restriction_scaling_fit(
    s: &MetivierStructure,
    trial: GaussianTrial,
    p: f64,
    lambdas: &[f64],
    profile: &MultiplierProfile,
) -> Result<RestrictionFit> {
    check_admissible(s.m, p)?;
    let gp = GaussianProjection::new(s, trial, profile)?;
    let fp = trial.lp_norm(s, p);
    let mut rows = vec![];
    for &l in lambdas {
        // the projection lives on scales |x| ~ λ^{-1/2}, |u| ~ λ^{-1}
        let xm = 6.0 / l.sqrt() + 3.0 / trial.a.sqrt();
        let um = 6.0 / l + 3.0 / trial.b.sqrt();
        rows.push((l, gp.dual_norm(l, p, xm, um, 24)?, fp));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (r.1 / r.2).ln()).collect();
    Ok(RestrictionFit {
        slope: linear_fit(&xs, &ys).0,
        target: s.q() as f64 * (1.0 / p - 0.5) - 1.0,
        rows,
    })
}

/// Result of [`mixed_restriction_check`].
#[derive(Debug, Clone, Serialize)]
pub struct MixedRestriction {
    /// The exponent `m(2/r − 1) + n(1/p − 1/q) − 1`.
    pub exponent: f64,
    /// `(λ, λ^{-exponent} ‖P_λ f‖_{L^{r'}L^q} / ‖f‖_{L^r L^p})` rows.
    pub ratios: Vec<(f64, f64)>,
    /// `max / min` of the ratios.
    pub spread: f64,
}

/// The normalized mixed-norm restriction ratio over a list of `λ` (grid route).
#[allow(clippy::too_many_arguments)]
pub fn mixed_restriction_check(
    s: &MetivierStructure,
    f: &GridFunction,
    p: f64,
    q: f64,
    r: f64,
    lambdas: &[f64],
    profile: &MultiplierProfile,
) -> Result<MixedRestriction> {
    if !(p >= 1.0 && p <= 2.0 && q >= 2.0) {
        return Err(param("p, q", "need 1 <= p <= 2 <= q <= inf"));
    }
    check_admissible(s.m, r)?;
    let (n, m) = (s.n as f64, s.m as f64);
    let inv = |v: f64| if v.is_infinite() { 0.0 } else { 1.0 / v };
    let exponent = m * (2.0 * inv(r) - 1.0) + n * (inv(p) - inv(q)) - 1.0;
    let r_dual = if r == 1.0 { f64::INFINITY } else { r / (r - 1.0) };
    let fnorm = mixed_norm(f, r, p)?;
    if fnorm == 0.0 {
        return Err(param("f", "must be nonzero"));
    }
    let mut ratios = vec![];
    for &l in lambdas {
        let pl = p_lambda(s, f, l, profile)?;
        ratios.push((l, l.powf(-exponent) * mixed_norm(&pl.value, r_dual, q)? / fnorm));
    }
    let mx = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let mn = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(MixedRestriction {
        exponent,
        ratios,
        spread: mx / mn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heis() -> MetivierStructure {
        MetivierStructure::heisenberg(1)
    }

    fn profile(order: f64, k: usize) -> MultiplierProfile {
        MultiplierProfile {
            k_max: k,
            ..MultiplierProfile::new(order)
        }
    }

    fn pt(x: &[f64], u: &[f64]) -> GroupPoint {
        GroupPoint::new(x.to_vec(), u.to_vec()).unwrap()
    }

    #[test]
    fn profile_validation() {
        assert!(MultiplierProfile::new(4.0).validate().is_ok());
        assert!(MultiplierProfile::new(-1.0).validate().is_err());
        assert!(profile(4.0, 4).validate().is_err());
        let p = MultiplierProfile {
            radial_order: 1,
            ..MultiplierProfile::new(1.0)
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn origin_kernel_matches_closed_form() {
        let s = heis();
        let exact = riesz_kernel_origin(&s, 4.0, 1.0, 6).unwrap();
        // (2π)^{-2} · 2 · π²/8 · Γ(5)Γ(2)/Γ(7) = 1/16 · 1/30
        assert!((exact - 1.0 / 480.0).abs() < 1e-15);
        let v = riesz_kernel(&s, 4.0, &[GroupPoint::identity(&s)], &profile(4.0, 1024)).unwrap()[0];
        assert!((v.re - exact).abs() < 1e-10 * exact, "{} {}", v.re, exact);
        assert!(v.im.abs() < 1e-14);
        assert!(v.err_est < 1e-8 * exact);
    }

    #[test]
    fn origin_kernel_refined_oracle() {
        let s = heis();
        let p = pt(&[0.3, -0.2], &[0.4]);
        let base = riesz_kernel(&s, 4.0, &[p.clone()], &profile(4.0, 256)).unwrap()[0];
        let fine = MultiplierProfile {
            k_max: 1024,
            radial_order: 64,
            ..MultiplierProfile::new(4.0)
        };
        let oracle = riesz_kernel(&s, 4.0, &[p], &fine).unwrap()[0];
        assert!((base.value() - oracle.value()).norm() <= 1e-4 * oracle.value().norm());
        assert!((base.value() - oracle.value()).norm() <= 10.0 * base.err_est + 1e-12);
    }

    #[test]
    fn kernel_guard_and_symmetry() {
        let s = heis();
        assert!(matches!(riesz_kernel(&s, 0.0, &[], &profile(0.0, 64)), Err(Error::Guard(_))));
        let q = MetivierStructure::quaternionic();
        assert!(riesz_kernel(&q, 2.0, &[], &profile(2.0, 64)).is_err());
        let pr = profile(4.0, 256);
        let a = riesz_kernel(&s, 4.0, &[pt(&[0.5, 0.2], &[0.7])], &pr).unwrap()[0];
        let b = riesz_kernel(&s, 4.0, &[pt(&[0.5, 0.2], &[-0.7])], &pr).unwrap()[0];
        assert!((a.value() - b.value().conj()).norm() < 1e-14);
        let c = riesz_kernel(&s, 4.0, &[pt(&[-0.5, -0.2], &[0.7])], &pr).unwrap()[0];
        assert!((a.value() - c.value()).norm() < 1e-14);
    }

    #[test]
    fn scaling_identity() {
        let s = heis();
        let pts = vec![pt(&[0.4, 0.1], &[0.3]), pt(&[0.0, 1.0], &[-1.2]), pt(&[0.8, -0.6], &[0.0])];
        let pr = profile(4.0, 256);
        let one = kernel_scaling_check(&s, 4.0, 1.0, &pts, &pr).unwrap();
        assert_eq!(one.max_rel_dev, 0.0);
        for r in [0.25, 4.0] {
            let c = kernel_scaling_check(&s, 4.0, r, &pts, &pr).unwrap();
            assert!(c.max_rel_dev <= 1e-6, "{}", c.max_rel_dev);
        }
    }

    #[test]
    fn decay_fit_on_centre_axis() {
        let s = heis();
        let radii = [3.0, 3.5, 4.0, 4.5, 5.0, 6.0];
        let fit = kernel_decay_fit(&s, 4.0, 2, &pt(&[0.0, 0.0], &[1.0]), &radii, &profile(4.0, 1024)).unwrap();
        assert!(fit.conclusive, "{fit:?}");
        assert!(fit.slope <= -3.5, "{fit:?}");
        assert!(kernel_decay_fit(&s, 3.0, 2, &pt(&[0.0, 0.0], &[1.0]), &radii, &profile(3.0, 64)).is_err());
    }

    #[test]
    fn laguerre_coefficients() {
        let s = heis();
        assert_eq!(laguerre_coefficient(&s, 3.0, 3, &[0.2]).unwrap(), 0.0);
        assert!((laguerre_coefficient(&s, 3.0, 1, &[0.2]).unwrap() - 0.064).abs() < 1e-15);
        let rt = laguerre_roundtrip(&s, 3.0, 1, &[0.2], 24).unwrap();
        assert!(rt.rel_error < 1e-5, "{rt:?}");
        let rt = laguerre_roundtrip(&s, 2.5, 7, &[-0.03], 24).unwrap();
        assert!(rt.rel_error < 1e-5, "{rt:?}");
        assert!(laguerre_coefficient(&s, 3.0, 1, &[0.0]).is_err());
        for k in 0..5 {
            let a = laguerre_coefficient(&s, 2.0, k, &[0.05]).unwrap();
            let b = laguerre_coefficient(&s, 2.0, k + 1, &[0.05]).unwrap();
            assert!(b <= a);
        }
        let q = MetivierStructure::quaternionic();
        let rt = laguerre_roundtrip(&q, 3.0, 2, &[0.0, 0.06, 0.08], 24).unwrap();
        assert!(rt.rel_error < 1e-5, "{rt:?}");
    }

    #[test]
    fn cutoff_partition() {
        let c = DyadicCutoff;
        assert!(c.partition_error() < 1e-12);
        assert!(check_partition(&|s| c.phi(s)).is_ok());
        assert!(check_partition(&|s| if (0.5..2.0).contains(&s) { 0.4 } else { 0.0 }).is_err());
        assert_eq!(dyadic_window(2), (0.5, 0.875));
        assert_eq!(dyadic_window(0), (0.0, 0.5));
    }

    fn small_grid() -> Grid {
        Grid::group(1, 1, 24, 32, 6.0, 12.0).unwrap()
    }

    /// A grid long in the centre direction, for functions narrow in `μ`.
    fn long_grid() -> Grid {
        Grid::group(1, 1, 24, 64, 6.0, 32.0).unwrap()
    }

    fn mode(grid: &Grid, k: usize, lam0: f64) -> GridFunction {
        // e^{-iλ₀u} φ_k^{λ₀}(x) times a broad centre envelope (μ-spread 1/√50)
        GridFunction::from_fn(grid, |x, u| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Complex64::from_polar(phi_r2(k, 1, lam0 * r2) * (-u[0] * u[0] / 100.0).exp(), -lam0 * u[0])
        })
    }

    #[test]
    fn slices_reproduce_and_localize() {
        let s = heis();
        let grid = small_grid();
        let f = TrialGaussian::sample(&grid);
        let sl = SpectralSlices::new(&s, &f, 4.0).unwrap();
        let back = sl.apply(&|_| 1.0, 1.0).unwrap();
        assert!(back.rel_l2_error(&f).unwrap() < 1e-12);
        let (ms, total) = sl.masses();
        assert!((total - f.l2_norm().powi(2)).abs() < 1e-10 * total);
        let kept: f64 = ms.iter().map(|m| m.1).sum();
        assert!(kept <= total * (1.0 + 1e-9) && kept > 0.9 * total, "{kept} {total}");
        // (1 − λ/R)_+ is affine on the band of f, so S_R^1 f = f − 𝓛f/R there
        let wide = Grid::group(1, 1, 32, 48, 8.0, 16.0).unwrap();
        let f = GaussianTrial { a: 0.25, b: 0.125 }.sample(&wide);
        let r = 40.0;
        let out = riesz_apply(&s, &f, 1.0, r).unwrap();
        let lf = sub_laplacian_apply(&s, &f).unwrap().scale(Complex64::new(1.0 / r, 0.0));
        let e = out.sub(&f.sub(&lf).unwrap()).unwrap().l2_norm() / lf.l2_norm();
        assert!(e < 0.05, "{e}");
        // a mode with spectrum near 2 is annihilated by R = 1
        let lg = long_grid();
        let g = mode(&lg, 0, 2.0);
        let none = riesz_apply(&s, &g, 2.0, 1.0).unwrap();
        assert!(none.l2_norm() < 1e-3 * g.l2_norm(), "{}", none.l2_norm() / g.l2_norm());
    }

    struct TrialGaussian;
    impl TrialGaussian {
        fn sample(grid: &Grid) -> GridFunction {
            GaussianTrial { a: 0.5, b: 0.25 }.sample(grid)
        }
    }

    #[test]
    fn riesz_monotone_in_r_and_bounded() {
        let s = heis();
        let grid = small_grid();
        let f = TrialGaussian::sample(&grid);
        let mut prev = f64::INFINITY;
        for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let e = riesz_apply(&s, &f, 1.0, r).unwrap().sub(&f).unwrap().l2_norm();
            assert!(e <= prev * (1.0 + 1e-12));
            prev = e;
        }
        let m = |l: f64| (3.0 * l).sin();
        let t = multiplier_apply(&s, &f, &m, 0.0, 3.0).unwrap();
        assert!(t.l2_norm() <= f.l2_norm() * (1.0 + 1e-10));
    }

    #[test]
    fn dyadic_pieces_sum_to_riesz_mean() {
        let s = heis();
        let grid = small_grid();
        let f = TrialGaussian::sample(&grid);
        let c = DyadicCutoff;
        let cut = |x: f64| c.phi(x);
        let full = riesz_apply(&s, &f, 2.0, 1.0).unwrap();
        let mut acc = GridFunction::zeros(&grid);
        let mut errs = vec![];
        for j in 0..=8 {
            acc = acc.add(&dyadic_piece_apply(&s, &f, 2.0, j, &cut).unwrap()).unwrap();
            errs.push(acc.sub(&full).unwrap().l2_norm() / full.l2_norm());
        }
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(errs[8] <= 1e-3, "{errs:?}");
        // a single mode far outside the window is annihilated
        let lg = long_grid();
        let g = mode(&lg, 0, 2.0);
        let far = dyadic_piece_apply(&s, &g, 2.0, 3, &cut).unwrap();
        assert!(far.l2_norm() < 1e-3 * g.l2_norm(), "{}", far.l2_norm() / g.l2_norm());
        let bad = |x: f64| if (0.5..2.0).contains(&x) { 0.4 } else { 0.0 };
        assert!(dyadic_piece_apply(&s, &g, 2.0, 1, &bad).is_err());
    }

    #[test]
    fn g_m_routes_agree_and_width_slope() {
        let s = heis();
        let pr = profile(0.0, 512);
        for (a, b) in [(0.5, 1.0), (0.0, 2.0)] {
            let m = |l: f64| 1.0 + l * l;
            let num = g_m_kernel_l2(&s, &m, a, b, &pr).unwrap();
            let closed = g_m_kernel_l2_closed(&s, &m, a, b, 6).unwrap();
            assert!((num - closed).abs() < 1e-8 * closed, "{num} {closed}");
        }
        let widths: Vec<f64> = (3..=7).map(|i| 2f64.powi(-i)).collect();
        let fit = width_scaling_fit(&s, 1.0, &widths, &pr).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn gaussian_projection_matches_grid_route() {
        let s = heis();
        let trial = GaussianTrial { a: 0.5, b: 0.25 };
        let grid = Grid::group(1, 1, 32, 48, 7.0, 14.0).unwrap();
        let f = trial.sample(&grid);
        let pr = profile(0.0, 32);
        let lam = 1.0;
        let grid_p = p_lambda(&s, &f, lam, &pr).unwrap();
        let gp = GaussianProjection::new(&s, trial, &profile(0.0, 256)).unwrap();
        let mut worst: f64 = 0.0;
        let scale = grid_p.value.max_abs();
        for (xi, ui) in [(16usize * 32 + 16, 24usize), (18 * 32 + 15, 26), (20 * 32 + 16, 20)] {
            let mut x = vec![0.0; 2];
            let mut u = vec![0.0; 1];
            grid.x_coords(xi, &mut x);
            grid.u_coords(ui, &mut u);
            let a = gp.eval(lam, &x, &u).unwrap().value();
            worst = worst.max((a - grid_p.value.at(xi, ui)).norm() / scale);
        }
        assert!(worst < 2e-2, "{worst}");
    }

    #[test]
    fn p_lambda_eigen_and_linearity() {
        let s = heis();
        let grid = small_grid();
        let f = TrialGaussian::sample(&grid);
        let g = GridFunction::from_fn(&grid, |x, u| Complex64::new(x[0], 0.3) * (-(x[0] * x[0] + x[1] * x[1]) - u[0] * u[0] / 4.0).exp());
        let pr = profile(0.0, 16);
        let lam = 1.0;
        let pf = p_lambda(&s, &f, lam, &pr).unwrap();
        let pg = p_lambda(&s, &g, lam, &pr).unwrap();
        let sum = p_lambda(&s, &f.add(&g.scale(Complex64::new(0.0, 2.0))).unwrap(), lam, &pr).unwrap();
        let lin = pf.value.add(&pg.value.scale(Complex64::new(0.0, 2.0))).unwrap();
        let lin_err = sum.value.sub(&lin).unwrap().max_abs() / lin.max_abs();
        assert!(lin_err < 1e-12, "{lin_err}");
        // eigen-residual on the interior window decreases like h²
        let mut res = vec![];
        for (nx, nu) in [(24, 32), (48, 64)] {
            let gr = Grid::group(1, 1, nx, nu, 6.0, 12.0).unwrap();
            let p = p_lambda(&s, &TrialGaussian::sample(&gr), lam, &pr).unwrap();
            res.push(interior_eigen_residual(&s, &p.value, lam, 0.5).unwrap());
        }
        assert!(res[1] < res[0] / 3.0 && res[1] < 0.05, "{res:?}");
        // f real and even in u: P_λ f is real (the ±η terms are conjugate)
        let im: f64 = pf.value.data.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        assert!(im < 1e-12 * pf.value.max_abs(), "{im}");
        assert!(p_lambda(&s, &f, 0.0, &pr).is_err());
        let z = p_lambda(&s, &GridFunction::zeros(&grid), lam, &pr).unwrap();
        assert!(z.negligible);
    }

    #[test]
    fn inversion_from_projections() {
        let s = heis();
        let grid = Grid::group(1, 1, 32, 32, 8.0, 6.0).unwrap();
        let f = GaussianTrial { a: 0.25, b: 0.5 }.sample(&grid);
        let pr = profile(0.0, 32);
        let coarse = inversion_check(&s, &f, 24, &pr).unwrap();
        let fine = inversion_check(&s, &f, 48, &pr).unwrap();
        assert!(fine.warning.is_none(), "{fine:?}");
        assert!(fine.captured_mass >= 1.0 - 1e-6);
        assert!(fine.rel_error < coarse.rel_error / 10.0, "{coarse:?} {fine:?}");
        assert!(fine.rel_error < 2e-3, "{fine:?}");
        let z = inversion_check(&s, &GridFunction::zeros(&grid), 12, &pr).unwrap();
        assert_eq!(z.rel_error, 0.0);
    }

    #[test]
    fn restriction_admissibility_and_homogeneity() {
        let s = heis();
        let pr = profile(0.0, 128);
        let t = GaussianTrial { a: 16.0, b: 16.0 };
        assert!(matches!(
            restriction_scaling_fit(&s, t, 2.0, &[1.0, 2.0], &pr),
            Err(Error::Admissibility { .. })
        ));
        let lams = [0.25, 0.5, 1.0, 2.0, 4.0];
        let fit = restriction_scaling_fit(&s, t, 1.0, &lams, &pr).unwrap();
        assert_eq!(fit.target, 1.0);
        assert!((fit.slope - 1.0).abs() <= 0.3, "{fit:?}");
    }
}
