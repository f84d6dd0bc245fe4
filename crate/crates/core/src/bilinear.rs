//! Bilinear Riesz means `S_R^α(f,g) = ∬ (1 − (λ₁+λ₂)/R)_+^α P_{λ₁}f P_{λ₂}g dλ₁dλ₂`,
//! their kernels, the dyadic pieces `T_j^α` with multiplier
//! `φ_j^α(s,t) = (1−s−t)_+^α φ(2^j(1−s−t))`, and the Fourier-series splitting
//! `φ_j^α(s,t) = Σ_k γ_{j,k}^α(s) e^{iπkt}` on `t ∈ [−1, 1]` (even extension), which
//! turns every dyadic piece into a sum of products of linear multipliers.
//!
//! Operators act on grid functions through the eigencomponents of
//! [`SpectralSlices`]. Kernels come from the spectral density `p_λ` of
//! [`KernelEvaluator`]: the full kernel by a tensor rule on the simplex
//! `λ₁ + λ₂ ≤ R`, the dyadic kernels by the separated form
//! `K_j(ω₁,ω₂) = Σ_k G_{γ_k}(ω₁) H_k(ω₂)` with `G_{γ_k} = ∫ γ_{j,k}(λ) p_λ dλ` and
//! `H_k = ∫_0^1 cos(πkλ) p_λ dλ`, which shares one table of `p_λ` per point.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::fields::{accumulate_mode, GridFunction};
use crate::group::{GroupPoint, MetivierStructure};
use crate::quad::{gauss_legendre, linear_fit};
use crate::specfun::{laguerre_origin_sum, ln_gamma};
use crate::spectral::{
    check_partition, dilation_orbit, dyadic_window, fit_decay, DecayFit, KernelEvaluator, KernelValue, Multiplier,
    MultiplierProfile, ScalingCheck, SpectralSlices, SphereNodes,
};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `φ_j^α(|s|,|t|) = (1−|s|−|t|)_+^α φ(2^j(1−|s|−|t|))`.
pub fn bilinear_dyadic_multiplier(alpha: f64, j: u32, cutoff: &dyn Fn(f64) -> f64, s: f64, t: f64) -> f64 {
    let v = 1.0 - s.abs() - t.abs();
    if v <= 0.0 {
        return 0.0;
    }
    v.powf(alpha) * cutoff(2f64.powi(j as i32) * v)
}

/// Gauss nodes and weights on the part of `[0, 1]` where `t ↦ φ_j^α(s,t)` can be
/// nonzero, fine enough to integrate against `cos(πkt)` for `k ≤ k_max`.
fn t_rule(j: u32, k_max: usize, s: f64, order: usize) -> Vec<(f64, f64)> {
    let s = s.abs();
    if s >= 1.0 {
        return vec![];
    }
    // 1 − s − t must lie in the support (2^{-j-1}, 2^{-j+1}) of φ(2^j ·)
    let lo = (1.0 - s - 2f64.powi(1 - j as i32)).max(0.0);
    let hi = (1.0 - s - 2f64.powi(-(j as i32) - 1)).min(1.0);
    if hi <= lo {
        return vec![];
    }
    let cells = (((hi - lo) * k_max as f64 / 2.0).ceil() as usize).max(8);
    let gl = gauss_legendre(order);
    let mut out = Vec::with_capacity(cells * order);
    for c in 0..cells {
        let a = lo + (hi - lo) * c as f64 / cells as f64;
        let b = lo + (hi - lo) * (c + 1) as f64 / cells as f64;
        let half = 0.5 * (b - a);
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            out.push((a + half * (x + 1.0), w * half));
        }
    }
    out
}

/// `γ_{j,k}^α(s) = ½∫_{−1}^1 φ_j^α(|s|,|t|) e^{−iπkt} dt = ∫_0^1 φ_j^α(|s|,t) cos(πkt) dt`
/// for `k = 0..=k_max` (real and even in `k`).
pub fn gamma_row(alpha: f64, j: u32, k_max: usize, s: f64, cutoff: &dyn Fn(f64) -> f64) -> Vec<f64> {
    gamma_row_order(alpha, j, k_max, s, cutoff, 16)
}

/// [`gamma_row`] together with the per-`k` quadrature error estimate
/// `|γ_k(16-point cells) − γ_k(10-point cells)|`.
pub fn gamma_row_with_error(
    alpha: f64,
    j: u32,
    k_max: usize,
    s: f64,
    cutoff: &dyn Fn(f64) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let hi = gamma_row_order(alpha, j, k_max, s, cutoff, 16);
    let lo = gamma_row_order(alpha, j, k_max, s, cutoff, 10);
    let err = hi.iter().zip(&lo).map(|(a, b)| (a - b).abs()).collect();
    (hi, err)
}

fn gamma_row_order(alpha: f64, j: u32, k_max: usize, s: f64, cutoff: &dyn Fn(f64) -> f64, order: usize) -> Vec<f64> {
    let mut row = vec![0.0; k_max + 1];
    for (t, w) in t_rule(j, k_max, s, order) {
        let v = w * bilinear_dyadic_multiplier(alpha, j, cutoff, s, t);
        if v == 0.0 {
            continue;
        }
        let step = Complex64::from_polar(1.0, PI * t);
        let mut z = Complex64::new(1.0, 0.0);
        for r in row.iter_mut() {
            *r += v * z.re;
            z *= step;
        }
    }
    row
}

/// Table of `γ_{j,k}^α(s)` over sample points `s` and `k = 0..=k_max`.
#[derive(Debug, Clone, Serialize)]
pub struct GammaTable {
    /// Order `α`.
    pub alpha: f64,
    /// Dyadic index.
    pub j: u32,
    /// Largest frequency.
    pub k_max: usize,
    /// Sample points `s`.
    pub s: Vec<f64>,
    /// `values[i][k] = γ_{j,k}^α(s_i)`.
    pub values: Vec<Vec<f64>>,
}

/// `γ_{j,k}^α(s)` for every sample `s` and `k = 0..=k_max`.
pub fn fourier_coefficients(alpha: f64, j: u32, k_max: usize, s: &[f64], cutoff: &dyn Fn(f64) -> f64) -> GammaTable {
    GammaTable {
        alpha,
        j,
        k_max,
        s: s.to_vec(),
        values: s.iter().map(|&v| gamma_row(alpha, j, k_max, v, cutoff)).collect(),
    }
}

/// Partial Fourier sum `Σ_{|k|≤K} γ_k e^{iπkt} = γ_0 + 2Σ_{k=1}^K γ_k cos(πkt)`.
pub fn gamma_reconstruct(row: &[f64], t: f64) -> f64 {
    row.iter()
        .enumerate()
        .map(|(k, g)| if k == 0 { *g } else { 2.0 * g * (PI * k as f64 * t).cos() })
        .sum()
}

/// Result of [`gamma_parseval`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParsevalCheck {
    /// `2 Σ_{|k|≤K} |γ_k|²`.
    pub coefficient_sum: f64,
    /// `∫_{−1}^1 |φ_j^α(|s|,|t|)|² dt` by direct quadrature.
    pub direct: f64,
    /// Relative difference.
    pub rel_error: f64,
}

/// Parseval identity `2 Σ_k |γ_{j,k}^α(s)|² = ∫_{−1}^1 |φ_j^α(|s|,|t|)|² dt`.
pub fn gamma_parseval(alpha: f64, j: u32, k_max: usize, s: f64, cutoff: &dyn Fn(f64) -> f64) -> ParsevalCheck {
    let row = gamma_row(alpha, j, k_max, s, cutoff);
    let coefficient_sum = 2.0 * row.iter().enumerate().map(|(k, g)| if k == 0 { g * g } else { 2.0 * g * g }).sum::<f64>();
    let direct = 2.0
        * t_rule(j, 64, s, 16)
            .iter()
            .map(|(t, w)| w * bilinear_dyadic_multiplier(alpha, j, cutoff, s, *t).powi(2))
            .sum::<f64>();
    let rel_error = if direct == 0.0 {
        coefficient_sum
    } else {
        (coefficient_sum - direct).abs() / direct
    };
    ParsevalCheck {
        coefficient_sum,
        direct,
        rel_error,
    }
}

/// Result of [`gamma_decay_check`].
#[derive(Debug, Clone, Serialize)]
pub struct GammaDecay {
    /// Per `j`: `max_{s,k} |γ_{j,k}^α(s)| (1+|k|)^{1+δ} 2^{j(α−δ)}`.
    pub normalized: Vec<(u32, f64)>,
    /// `max / min` of the normalized column.
    pub ratio: f64,
    /// Per `j`: `max_s |γ_{j,0}^α(s)|`.
    pub k0: Vec<(u32, f64)>,
    /// Fitted slope of `log₂ max_s |γ_{j,0}|` against `j`.
    pub k0_slope: f64,
}

/// Uniformity in `j` of the bound `|γ_{j,k}^α(s)| ≤ C 2^{−j(α−δ)} (1+|k|)^{−1−δ}` over
/// `s_samples` midpoints of `[0, 1]` and `|k| ≤ k_max`.
pub fn gamma_decay_check(
    alpha: f64,
    delta: f64,
    j_max: u32,
    k_max: usize,
    s_samples: usize,
    cutoff: &dyn Fn(f64) -> f64,
) -> Result<GammaDecay> {
    if !(delta > 0.0 && delta < alpha) {
        return Err(param("delta", "needs 0 < delta < alpha"));
    }
    if s_samples == 0 {
        return Err(param("s_samples", "must be positive"));
    }
    let s: Vec<f64> = (0..s_samples).map(|i| (i as f64 + 0.5) / s_samples as f64).collect();
    let mut normalized = vec![];
    let mut k0 = vec![];
    for j in 0..=j_max {
        let table = fourier_coefficients(alpha, j, k_max, &s, cutoff);
        let mut best: f64 = 0.0;
        let mut best0: f64 = 0.0;
        for row in &table.values {
            best0 = best0.max(row[0].abs());
            for (k, g) in row.iter().enumerate() {
                best = best.max(g.abs() * (1.0 + k as f64).powf(1.0 + delta));
            }
        }
        normalized.push((j, best * 2f64.powf(j as f64 * (alpha - delta))));
        k0.push((j, best0));
    }
    let mx = normalized.iter().map(|v| v.1).fold(0.0, f64::max);
    let mn = normalized.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = k0.iter().map(|v| v.0 as f64).collect();
    let ys: Vec<f64> = k0.iter().map(|v| v.1.log2()).collect();
    Ok(GammaDecay {
        normalized,
        ratio: mx / mn,
        k0,
        k0_slope: linear_fit(&xs, &ys).0,
    })
}

/// `Σ_{c,d} m(λ_c, λ_d) f_c g_d` over the eigencomponents `f_c`, `g_d` of `f` and `g`
/// with eigenvalues up to `cut`; `m` must vanish once either argument exceeds `cut`.
pub fn bilinear_multiplier_apply(
    s: &MetivierStructure,
    f: &GridFunction,
    g: &GridFunction,
    m: &dyn Fn(f64, f64) -> f64,
    cut: f64,
) -> Result<GridFunction> {
    f.grid.check_same(&g.grid)?;
    let sf = SpectralSlices::new(s, f, cut)?;
    let sg = SpectralSlices::new(s, g, cut)?;
    let w = Complex64::new(sf.node_weight(), 0.0);
    let mut out = GridFunction::zeros(&f.grid);
    let mut fc = GridFunction::zeros(&f.grid);
    for (mu, lam, comp) in sf.components() {
        let mg = sg.apply(&|l| m(lam, l), 0.0)?;
        if mg.max_abs() == 0.0 {
            continue;
        }
        fc.data.iter_mut().for_each(|v| *v = ZERO);
        accumulate_mode(&mut fc, &mu, comp, w);
        for (o, (a, b)) in out.data.iter_mut().zip(fc.data.iter().zip(&mg.data)) {
            *o += a * b;
        }
    }
    Ok(out)
}

/// Bilinear Riesz mean `S_R^α(f,g)`.
pub fn bilinear_riesz_apply(
    s: &MetivierStructure,
    f: &GridFunction,
    g: &GridFunction,
    alpha: f64,
    r: f64,
) -> Result<GridFunction> {
    if !(alpha >= 0.0) || !(r > 0.0) {
        return Err(param("alpha, r", "need alpha >= 0 and r > 0"));
    }
    bilinear_multiplier_apply(s, f, g, &|a, b| (1.0 - (a + b) / r).max(0.0).powf(alpha), r)
}

/// Dyadic bilinear piece `T_j^α(f,g)`; the cutoff must pass the partition check.
pub fn dyadic_bilinear_apply(
    s: &MetivierStructure,
    f: &GridFunction,
    g: &GridFunction,
    alpha: f64,
    j: u32,
    cutoff: &dyn Fn(f64) -> f64,
) -> Result<GridFunction> {
    check_partition(cutoff)?;
    bilinear_multiplier_apply(s, f, g, &|a, b| bilinear_dyadic_multiplier(alpha, j, cutoff, a, b), 1.0)
}

/// Separated form `T_j^α(f,g) = Σ_{|k|≤K} (γ_{j,k}^α(𝓛) f)(cos(πk𝓛) χ_{[0,1]}(𝓛) g)`.
pub fn separated_bilinear_apply(
    s: &MetivierStructure,
    f: &GridFunction,
    g: &GridFunction,
    alpha: f64,
    j: u32,
    k_max: usize,
    cutoff: &dyn Fn(f64) -> f64,
) -> Result<GridFunction> {
    check_partition(cutoff)?;
    f.grid.check_same(&g.grid)?;
    let sf = SpectralSlices::new(s, f, 1.0)?;
    let sg = SpectralSlices::new(s, g, 1.0)?;
    let mut rows: HashMap<u64, Vec<f64>> = HashMap::new();
    for (_, lam, _) in sf.components() {
        rows.entry(lam.to_bits()).or_insert_with(|| gamma_row(alpha, j, k_max, lam, cutoff));
    }
    let mut out = GridFunction::zeros(&f.grid);
    for k in 0..=k_max {
        let gf = sf.apply(&|l| rows.get(&l.to_bits()).map_or(0.0, |r| r[k]), 0.0)?;
        if gf.max_abs() == 0.0 {
            continue;
        }
        let hg = sg.apply(&|l| if l <= 1.0 { (PI * k as f64 * l).cos() } else { 0.0 }, 0.0)?;
        let c = if k == 0 { 1.0 } else { 2.0 };
        for (o, (a, b)) in out.data.iter_mut().zip(gf.data.iter().zip(&hg.data)) {
            *o += a * b * c;
        }
    }
    Ok(out)
}

fn bilinear_guard(s: &MetivierStructure, alpha: f64) -> Result<()> {
    let bound = 2.0 * (s.m as f64 - 1.0);
    if !(alpha > bound) {
        return Err(Error::Guard(format!("alpha = {alpha} must exceed 2(m - 1) = {bound}")));
    }
    Ok(())
}

/// Closed form `S_R^α(0,0) = (2π)^{-Q} (D Z)² R^Q Γ(α+1) Γ(n+m)² / Γ(α+2n+2m+1)`,
/// with `D`, `Z` as in [`crate::spectral::riesz_kernel_origin`].
pub fn bilinear_kernel_origin(s: &MetivierStructure, alpha: f64, r: f64, sphere_order: usize) -> Result<f64> {
    let d = SphereNodes::new(s, sphere_order)?.det_integral();
    let h = (s.n + s.m) as f64;
    let c = (2.0 * PI).powf(-h) * d * laguerre_origin_sum(s.n, s.m);
    let beta = (ln_gamma(alpha + 1.0) + 2.0 * ln_gamma(h) - ln_gamma(alpha + 2.0 * h + 1.0)).exp();
    Ok(c * c * r.powf(2.0 * h) * beta)
}

/// Bilinear Riesz kernel `S_R^α(ω₁, ω₂)` (with `R = profile.r`) by a tensor rule on the
/// simplex: `λ₁ = Rt`, `λ₂ = R(1−t)σ`, Gauss–Jacobi at the endpoints `t = 1`, `σ = 1`.
pub fn bilinear_kernel(
    s: &MetivierStructure,
    alpha: f64,
    pairs: &[(GroupPoint, GroupPoint)],
    profile: &MultiplierProfile,
) -> Result<Vec<KernelValue>> {
    bilinear_guard(s, alpha)?;
    let ev = KernelEvaluator::new(s, profile)?;
    pairs.iter().map(|(a, b)| bilinear_kernel_at(&ev, alpha, profile.r, a, b)).collect()
}

fn bilinear_kernel_at(ev: &KernelEvaluator, alpha: f64, r: f64, w1: &GroupPoint, w2: &GroupPoint) -> Result<KernelValue> {
    let order = ev.radial_order();
    let lo_order = (order - order / 4).max(2);
    let (hi, e_hi) = simplex_rule_value(ev, alpha, r, w1, w2, order)?;
    let (lo, _) = simplex_rule_value(ev, alpha, r, w1, w2, lo_order)?;
    Ok(KernelValue {
        re: hi.re,
        im: hi.im,
        err_est: e_hi + (hi - lo).norm(),
    })
}

fn simplex_rule_value(
    ev: &KernelEvaluator,
    alpha: f64,
    r: f64,
    w1: &GroupPoint,
    w2: &GroupPoint,
    order: usize,
) -> Result<(Complex64, f64)> {
    let cpu = ev.cells_per_unit(w1, r)?.max(ev.cells_per_unit(w2, r)?) * r;
    let outer = Multiplier {
        support: (0.0, 1.0),
        smooth: Box::new(|_| 1.0),
        right_power: alpha + 1.0,
        breakpoints: vec![],
    }
    .rule(order, cpu);
    let inner = Multiplier {
        support: (0.0, 1.0),
        smooth: Box::new(|_| 1.0),
        right_power: alpha,
        breakpoints: vec![],
    }
    .rule(order, ev.cells_per_unit(w2, r)? * r);
    let l1: Vec<f64> = outer.iter().map(|(t, _)| r * t).collect();
    let p1 = ev.p_table(w1, &l1)?;
    let mut total = ZERO;
    let mut err = 0.0;
    for ((t, wt), (pa, ea)) in outer.iter().zip(&p1) {
        let span = r * (1.0 - t);
        let l2: Vec<f64> = inner.iter().map(|(sg, _)| span * sg).collect();
        let p2 = ev.p_table(w2, &l2)?;
        let mut acc = ZERO;
        let mut acc_abs = 0.0;
        let mut acc_err = 0.0;
        for ((_, ws), (pb, eb)) in inner.iter().zip(&p2) {
            acc += pb * *ws;
            acc_abs += ws.abs() * pb.norm();
            acc_err += ws.abs() * eb;
        }
        // Jacobian r²(1−t) and the weight (1−t)^{α+1}(1−σ)^α are inside the rules
        let c = r * r * wt;
        total += pa * acc * c;
        err += c.abs() * (ea * acc_abs + pa.norm() * acc_err);
    }
    Ok((total, err))
}

/// Compares `S_R^α(ω₁,ω₂)` with `R^Q S_1^α(δ_{√R} ω₁, δ_{√R} ω₂)`.
pub fn bilinear_scaling_check(
    s: &MetivierStructure,
    alpha: f64,
    r: f64,
    pairs: &[(GroupPoint, GroupPoint)],
    profile: &MultiplierProfile,
) -> Result<ScalingCheck> {
    bilinear_guard(s, alpha)?;
    let ev = KernelEvaluator::new(s, profile)?;
    let fac = r.powi(s.q() as i32);
    let dil = |p: &GroupPoint| {
        GroupPoint::new(p.x.iter().map(|c| c * r.sqrt()).collect(), p.u.iter().map(|c| c * r).collect())
    };
    let mut rows = vec![];
    let mut worst: f64 = 0.0;
    for (a, b) in pairs {
        let direct = bilinear_kernel_at(&ev, alpha, r, a, b)?;
        let unit = bilinear_kernel_at(&ev, alpha, 1.0, &dil(a)?, &dil(b)?)?;
        let scaled = KernelValue {
            re: unit.re * fac,
            im: unit.im * fac,
            err_est: unit.err_est * fac,
        };
        worst = worst.max((direct.value() - scaled.value()).norm() / direct.value().norm().max(1e-300));
        rows.push((direct, scaled));
    }
    Ok(ScalingCheck {
        max_rel_dev: worst,
        rows,
    })
}

/// Per-point moments of the separated dyadic kernels.
#[derive(Debug, Clone)]
pub struct PointMoments {
    /// Per dyadic index (in the evaluator's order): `G_{γ_{j,k}}(ω)` for `k = 0..=K`.
    pub g: Vec<Vec<Complex64>>,
    /// Per dyadic index: error estimates of `g`.
    pub g_err: Vec<Vec<f64>>,
    /// `H_k(ω) = ∫_0^1 cos(πkλ) p_λ(ω) dλ` for `k = 0..=K`.
    pub h: Vec<Complex64>,
    /// Error estimates of `h`.
    pub h_err: Vec<f64>,
}

/// Dyadic bilinear kernels `K_j^α` by the separated Fourier-series form, with one
/// `p_λ` table per point on shared λ-nodes of `[0, 1]`.
pub struct DyadicKernelEvaluator<'a> {
    ev: KernelEvaluator<'a>,
    js: Vec<u32>,
    k_max: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `gamma[jj][i][k] = γ_{j,k}(λ_i)`.
    gamma: Vec<Vec<Vec<f64>>>,
}

impl<'a> DyadicKernelEvaluator<'a> {
    /// Prepares λ-nodes resolving `cos(πKλ)` and `p_λ` at homogeneous norms up to
    /// `max_norm`, and the coefficient tables of every `j` in `js`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s: &'a MetivierStructure,
        alpha: f64,
        js: &[u32],
        k_max: usize,
        max_norm: f64,
        profile: &MultiplierProfile,
        cutoff: &dyn Fn(f64) -> f64,
    ) -> Result<Self> {
        check_partition(cutoff)?;
        let ev = KernelEvaluator::new(s, profile)?;
        let osc = max_norm * max_norm / (2.0 * PI * s.n as f64) + 2.0 * max_norm / PI + 1.0;
        let cells = (k_max as f64 / 2.0 + osc).ceil() as usize;
        let gl = gauss_legendre(12);
        let mut nodes = vec![];
        let mut weights = vec![];
        for c in 0..cells {
            let a = c as f64 / cells as f64;
            let half = 0.5 / cells as f64;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                nodes.push(a + half * (x + 1.0));
                weights.push(w * half);
            }
        }
        let gamma = js
            .iter()
            .map(|&j| nodes.iter().map(|&l| gamma_row(alpha, j, k_max, l, cutoff)).collect())
            .collect();
        Ok(DyadicKernelEvaluator {
            ev,
            js: js.to_vec(),
            k_max,
            nodes,
            weights,
            gamma,
        })
    }

    /// The dyadic indices served.
    pub fn js(&self) -> &[u32] {
        &self.js
    }

    /// `G_{γ_{j,k}}(ω)` and `H_k(ω)` for every `j` and `k`.
    pub fn moments(&self, point: &GroupPoint) -> Result<PointMoments> {
        let table = self.ev.p_table(point, &self.nodes)?;
        let kk = self.k_max + 1;
        let mut h = vec![ZERO; kk];
        let mut h_err = vec![0.0; kk];
        for ((l, w), (p, e)) in self.nodes.iter().zip(&self.weights).zip(&table) {
            let step = Complex64::from_polar(1.0, PI * l);
            let mut z = Complex64::new(1.0, 0.0);
            for k in 0..kk {
                h[k] += p * (w * z.re);
                h_err[k] += w * e;
                z *= step;
            }
        }
        let mut g = vec![];
        let mut g_err = vec![];
        for rows in &self.gamma {
            let mut gj = vec![ZERO; kk];
            let mut ej = vec![0.0; kk];
            for ((row, w), (p, e)) in rows.iter().zip(&self.weights).zip(&table) {
                for k in 0..kk {
                    gj[k] += p * (w * row[k]);
                    ej[k] += (w * row[k]).abs() * e;
                }
            }
            g.push(gj);
            g_err.push(ej);
        }
        Ok(PointMoments { g, g_err, h, h_err })
    }

    /// `K_j(ω₁, ω₂)` for the `jj`-th dyadic index from the moments of both points.
    /// The error estimate adds the propagated `p_λ` errors and the size of the last
    /// retained Fourier term times `K`.
    pub fn combine(&self, jj: usize, a: &PointMoments, b: &PointMoments) -> KernelValue {
        let mut v = ZERO;
        let mut err = 0.0;
        let mut last = 0.0;
        for k in 0..=self.k_max {
            let c = if k == 0 { 1.0 } else { 2.0 };
            let term = a.g[jj][k] * b.h[k] * c;
            v += term;
            err += c * (a.g_err[jj][k] * b.h[k].norm() + a.g[jj][k].norm() * b.h_err[k]);
            last = term.norm();
        }
        KernelValue {
            re: v.re,
            im: v.im,
            err_est: err + last * self.k_max as f64,
        }
    }
}

/// Result of [`bilinear_kernel_decay_fit`].
#[derive(Debug, Clone, Serialize)]
pub struct BilinearDecay {
    /// Decay fits of `|K_0^α|` along each ray, first argument moving.
    pub first: Vec<DecayFit>,
    /// Decay fits of `|K_0^α|` along each ray, second argument moving.
    pub second: Vec<DecayFit>,
    /// Per `j`: `max |K_j^α(ω₁,ω₂)| (1+|ω₁|)^{2N} (1+|ω₂|)^{2N}` over the sample set.
    pub weighted_sup: Vec<(u32, f64)>,
    /// Per `j`: error estimate of the weighted value attaining the weighted sup.
    pub weighted_err: Vec<f64>,
    /// Per `j`: `max |K_j^α|` over the sample set.
    pub sup: Vec<(u32, f64)>,
    /// Fitted slope of `log₂` of the weighted sup against `j`.
    pub j_rate: f64,
    /// Fitted slope of `log₂` of the plain sup against `j`.
    pub j_rate_plain: f64,
    /// The exponent `−(α − 4N + 1)`.
    pub target_rate: f64,
}

/// Decay of the dyadic kernels along dilation orbits of the ray bases (other
/// argument at the identity) and the `j`-decay of their suprema over the pairs
/// formed by the identity and every orbit point, for `j = 0..=j_max`.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_kernel_decay_fit(
    s: &MetivierStructure,
    alpha: f64,
    n_order: usize,
    rays: &[GroupPoint],
    radii: &[f64],
    j_max: u32,
    k_max: usize,
    profile: &MultiplierProfile,
    cutoff: &dyn Fn(f64) -> f64,
) -> Result<BilinearDecay> {
    if !(alpha > 4.0 * n_order as f64 - 1.0) {
        return Err(Error::Guard(format!("alpha = {alpha} must exceed 4N - 1 = {}", 4 * n_order - 1)));
    }
    let max_norm = radii.iter().cloned().fold(0.0, f64::max);
    let js: Vec<u32> = (0..=j_max).collect();
    let dk = DyadicKernelEvaluator::new(s, alpha, &js, k_max, max_norm, profile, cutoff)?;
    let origin = GroupPoint::identity(s);
    let m0 = dk.moments(&origin)?;
    let weight = |r1: f64, r2: f64| ((1.0 + r1) * (1.0 + r2)).powi(2 * n_order as i32);
    let nj = js.len();
    let mut wsup = vec![0.0f64; nj];
    let mut sup = vec![0.0f64; nj];
    let mut werr = vec![0.0f64; nj];
    for jj in 0..nj {
        let k = dk.combine(jj, &m0, &m0);
        wsup[jj] = k.value().norm();
        sup[jj] = wsup[jj];
        werr[jj] = k.err_est;
    }
    let mut first = vec![];
    let mut second = vec![];
    for base in rays {
        let pts = dilation_orbit(s, base, radii)?;
        let mut v1 = vec![];
        let mut v2 = vec![];
        for (p, r) in pts.iter().zip(radii) {
            let mp = dk.moments(p)?;
            for jj in 0..nj {
                let a = dk.combine(jj, &mp, &m0);
                let b = dk.combine(jj, &m0, &mp);
                for k in [a, b] {
                    let v = k.value().norm();
                    sup[jj] = sup[jj].max(v);
                    let w = weight(*r, 0.0);
                    if v * w > wsup[jj] {
                        wsup[jj] = v * w;
                        werr[jj] = k.err_est * w;
                    }
                }
                if jj == 0 {
                    v1.push(a);
                    v2.push(b);
                }
            }
        }
        let fit = |vals: &[KernelValue]| {
            let v: Vec<f64> = vals.iter().map(|k| k.value().norm()).collect();
            let e: Vec<f64> = vals.iter().map(|k| k.err_est).collect();
            fit_decay(radii, &v, &e)
        };
        first.push(fit(&v1));
        second.push(fit(&v2));
    }
    let xs: Vec<f64> = js.iter().map(|&j| j as f64).collect();
    let rate = |v: &[f64]| linear_fit(&xs, &v.iter().map(|x| x.log2()).collect::<Vec<_>>()).0;
    Ok(BilinearDecay {
        first,
        second,
        weighted_sup: js.iter().cloned().zip(wsup.iter().cloned()).collect(),
        weighted_err: werr,
        sup: js.iter().cloned().zip(sup.iter().cloned()).collect(),
        j_rate: rate(&wsup),
        j_rate_plain: rate(&sup),
        target_rate: -(alpha - 4.0 * n_order as f64 + 1.0),
    })
}

/// Dyadic bilinear kernel `K_j^α(ω₁,ω₂) = ∬ φ_j^α(λ₁,λ₂) p_{λ₁}(ω₁) p_{λ₂}(ω₂)` by a
/// direct tensor rule over the window `1 − λ₁ − λ₂ ∈ [2^{-j-1}, 2^{-j+1}]`, the
/// reference for the separated form.
pub fn dyadic_kernel_direct(
    s: &MetivierStructure,
    alpha: f64,
    j: u32,
    w1: &GroupPoint,
    w2: &GroupPoint,
    profile: &MultiplierProfile,
    cutoff: &dyn Fn(f64) -> f64,
) -> Result<KernelValue> {
    let ev = KernelEvaluator::new(s, profile)?;
    let (wlo, whi) = dyadic_window(j);
    // λ₁ ∈ [0, whi], λ₂ ∈ [max(0, wlo − λ₁), whi − λ₁]
    let cpu = ev.cells_per_unit(w1, 1.0)?.max(ev.cells_per_unit(w2, 1.0)?).max(8.0);
    let order = ev.radial_order();
    let run = |order: usize| -> Result<Complex64> {
        let gl = gauss_legendre(order);
        let cells = (whi * cpu).ceil() as usize;
        let mut total = ZERO;
        for c in 0..cells {
            let a = whi * c as f64 / cells as f64;
            let b = whi * (c + 1) as f64 / cells as f64;
            let r1 = gl.mapped(a, b);
            let p1 = ev.p_table(w1, &r1.nodes)?;
            for ((l1, wt1), (pa, _)) in r1.nodes.iter().zip(&r1.weights).zip(&p1) {
                let lo = (wlo - l1).max(0.0);
                let hi = whi - l1;
                if hi <= lo {
                    continue;
                }
                let inner_cells = ((hi - lo) * cpu).ceil().max(1.0) as usize;
                let mut acc = ZERO;
                for ic in 0..inner_cells {
                    let ia = lo + (hi - lo) * ic as f64 / inner_cells as f64;
                    let ib = lo + (hi - lo) * (ic + 1) as f64 / inner_cells as f64;
                    let r2 = gl.mapped(ia, ib);
                    let p2 = ev.p_table(w2, &r2.nodes)?;
                    for ((l2, wt2), (pb, _)) in r2.nodes.iter().zip(&r2.weights).zip(&p2) {
                        acc += pb * (wt2 * bilinear_dyadic_multiplier(alpha, j, cutoff, *l1, *l2));
                    }
                }
                total += pa * acc * *wt1;
            }
        }
        Ok(total)
    };
    let hi = run(order)?;
    let lo = run((order - order / 4).max(2))?;
    Ok(KernelValue {
        re: hi.re,
        im: hi.im,
        err_est: (hi - lo).norm(),
    })
}
