//! Empirical operator-norm lower bounds and threshold tables.
//!
//! The lab reports `max_trials ‖T(f₁,…)‖_{p_out} / Π ‖f_i‖_{p_i}` over seeded trial
//! families next to the known smoothness thresholds: `Q(1/p − ½) − ½` for the
//! Riesz means, and the five-region surface `α(p₁,p₂)` for the bilinear Riesz
//! means. Lower bounds are evidence of consistency only; boundedness itself is
//! not machine-checkable.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bilinear::bilinear_riesz_apply;
use crate::error::{param, Error, Result};
use crate::fields::{Grid, GridFunction};
use crate::group::{homogeneous_norm, inverse, multiply, GroupPoint, MetivierStructure};
use crate::spectral::{restriction_bound, riesz_apply};
use crate::specfun::hermite_fn;

/// `L^p` norm on the grid for `p ∈ (0, ∞]` (a quasi-norm when `p < 1`).
pub fn lp_quasi_norm(f: &GridFunction, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(param("p", "must lie in (0, inf]"));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let s: f64 = f.data.iter().map(|a| a.norm().powf(p)).sum();
    Ok((s * f.grid.cell_volume()).powf(1.0 / p))
}

/// An operator of one or more grid-function arguments.
pub struct NormOperator<'a> {
    /// Number of arguments.
    pub arity: usize,
    /// Short label.
    pub name: String,
    apply: Box<dyn Fn(&[GridFunction]) -> Result<GridFunction> + 'a>,
}

impl<'a> NormOperator<'a> {
    /// An operator given by a closure.
    pub fn from_fn(
        arity: usize,
        name: impl Into<String>,
        f: impl Fn(&[GridFunction]) -> Result<GridFunction> + 'a,
    ) -> Self {
        NormOperator {
            arity,
            name: name.into(),
            apply: Box::new(f),
        }
    }

    /// The identity.
    pub fn identity() -> NormOperator<'static> {
        NormOperator::from_fn(1, "identity", |f: &[GridFunction]| Ok(f[0].clone()))
    }

    /// Riesz mean `S_R^δ`.
    pub fn riesz(s: &'a MetivierStructure, delta: f64, r: f64) -> Self {
        NormOperator::from_fn(1, format!("riesz(delta={delta},R={r})"), move |f: &[GridFunction]| {
            riesz_apply(s, &f[0], delta, r)
        })
    }

    /// Bilinear Riesz mean `S_R^α`.
    pub fn bilinear_riesz(s: &'a MetivierStructure, alpha: f64, r: f64) -> Self {
        NormOperator::from_fn(2, format!("bilinear_riesz(alpha={alpha},R={r})"), move |f: &[GridFunction]| {
            bilinear_riesz_apply(s, &f[0], &f[1], alpha, r)
        })
    }

    /// Applies the operator.
    pub fn apply(&self, args: &[GridFunction]) -> Result<GridFunction> {
        if args.len() != self.arity {
            return Err(Error::Dimension {
                expected: self.arity,
                got: args.len(),
            });
        }
        (self.apply)(args)
    }
}

/// A trial function given pointwise in exponential coordinates.
pub type Trial = Box<dyn Fn(&[f64], &[f64]) -> Complex64>;

/// Families of trial functions, scaled to stay inside the box of the grid.
#[derive(Debug, Clone, Copy)]
pub enum TrialFamily {
    /// Centred Gaussians `e^{−a|x|² − b|u|²}` with random widths.
    Gaussian,
    /// Gaussians left-translated by a random group element.
    OffsetGaussian,
    /// `ψ(|δ_{1/t}ω|)` for the bump `ψ(ρ) = e^{−1/(1−ρ²)}` on `ρ < 1`, with `t` on a
    /// dyadic δ_t-orbit.
    DilatedBump,
    /// Random superpositions of Hermite functions in `x` times a Gaussian in `u`.
    Hermite,
    /// Cycles through the four families above.
    Mixed,
    /// Drawing function supplied by the caller.
    Custom(fn(&mut ChaCha8Rng, &Grid) -> Trial),
}

impl fmt::Display for TrialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TrialFamily::Gaussian => "gaussian",
            TrialFamily::OffsetGaussian => "offset-gaussian",
            TrialFamily::DilatedBump => "dilated-bump",
            TrialFamily::Hermite => "hermite",
            TrialFamily::Mixed => "mixed",
            TrialFamily::Custom(_) => "custom",
        };
        f.write_str(s)
    }
}

impl TrialFamily {
    /// Parses a family name as printed by `Display` (except `custom`).
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "gaussian" => TrialFamily::Gaussian,
            "offset-gaussian" => TrialFamily::OffsetGaussian,
            "dilated-bump" => TrialFamily::DilatedBump,
            "hermite" => TrialFamily::Hermite,
            "mixed" => TrialFamily::Mixed,
            _ => return Err(param("family", format!("unknown trial family {name:?}"))),
        })
    }

    /// Draws one trial for `grid` from `rng`; `index` selects the member of `Mixed`.
    pub fn draw(&self, s: &MetivierStructure, grid: &Grid, index: usize, rng: &mut ChaCha8Rng) -> Trial {
        let ex = grid.x_extent;
        let eu = grid.u_extent;
        let a0 = 18.0 / (ex * ex);
        let b0 = 18.0 / (eu * eu);
        match self {
            TrialFamily::Mixed => {
                let fam = [
                    TrialFamily::Gaussian,
                    TrialFamily::OffsetGaussian,
                    TrialFamily::DilatedBump,
                    TrialFamily::Hermite,
                ][index % 4];
                fam.draw(s, grid, index, rng)
            }
            TrialFamily::Gaussian => {
                let a = a0 * 2f64.powf(rng.gen_range(0.0..2.0));
                let b = b0 * 2f64.powf(rng.gen_range(0.0..2.0));
                Box::new(move |x, u| Complex64::new((-a * dot(x, x) - b * dot(u, u)).exp(), 0.0))
            }
            TrialFamily::OffsetGaussian => {
                let a = 2.0 * a0 * 2f64.powf(rng.gen_range(0.0..2.0));
                let b = 2.0 * b0 * 2f64.powf(rng.gen_range(0.0..2.0));
                let c = GroupPoint {
                    x: (0..2 * s.n).map(|_| rng.gen_range(-0.25..0.25) * ex).collect(),
                    u: (0..s.m).map(|_| rng.gen_range(-0.25..0.25) * eu).collect(),
                };
                let ci = inverse(&c);
                let s = s.clone();
                Box::new(move |x, u| {
                    let w = GroupPoint {
                        x: x.to_vec(),
                        u: u.to_vec(),
                    };
                    match multiply(&s, &ci, &w) {
                        Ok(p) => Complex64::new((-a * dot(&p.x, &p.x) - b * dot(&p.u, &p.u)).exp(), 0.0),
                        Err(_) => Complex64::new(0.0, 0.0),
                    }
                })
            }
            TrialFamily::DilatedBump => {
                // support |x| < 2t, |u| < t²
                let t_max = 0.9 * (0.5 * ex).min(eu.sqrt());
                let step = rng.gen_range(0..4);
                let t = t_max * 2f64.powf(-0.5 * step as f64);
                Box::new(move |x, u| {
                    let p = GroupPoint {
                        x: x.iter().map(|c| c / t).collect(),
                        u: u.iter().map(|c| c / (t * t)).collect(),
                    };
                    let r = homogeneous_norm(&p);
                    if r >= 1.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new((-1.0 / (1.0 - r * r)).exp(), 0.0)
                    }
                })
            }
            TrialFamily::Hermite => {
                let scale = 7.0 / ex * rng.gen_range(1.0..1.5);
                let b = b0 * 2f64.powf(rng.gen_range(0.0..2.0));
                let dim = 2 * s.n;
                let mut terms = vec![];
                for _ in 0..4 {
                    let alpha: Vec<usize> = (0..dim).map(|_| rng.gen_range(0..3)).collect();
                    let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    terms.push((alpha, c));
                }
                Box::new(move |x, u| {
                    let y: Vec<f64> = x.iter().map(|c| c * scale).collect();
                    let sum: Complex64 = terms
                        .iter()
                        .map(|(alpha, c)| c * hermite_fn(alpha, &y).unwrap_or(0.0))
                        .sum();
                    sum * (-b * dot(u, u)).exp()
                })
            }
            TrialFamily::Custom(f) => f(rng, grid),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Samples `trial ∘ δ_{1/t}` on a grid.
pub fn sample_trial(trial: &Trial, grid: &Grid, t: f64) -> GridFunction {
    let mut xs = vec![0.0; 2 * grid.n];
    let mut us = vec![0.0; grid.m];
    GridFunction::from_fn(grid, |x, u| {
        for (d, c) in xs.iter_mut().zip(x) {
            *d = c / t;
        }
        for (d, c) in us.iter_mut().zip(u) {
            *d = c / (t * t);
        }
        trial(&xs, &us)
    })
}

/// Settings shared by the lower-bound estimators.
#[derive(Debug, Clone, Copy)]
pub struct TrialSpec {
    /// Trial family.
    pub family: TrialFamily,
    /// Number of trials.
    pub n_trials: usize,
    /// Base seed; trial `i` uses the stream seeded by `seed ⊕ i`.
    pub seed: u64,
    /// Dilation `t` applied to every trial (`f ∘ δ_{1/t}`).
    pub dilation: f64,
}

impl TrialSpec {
    /// `n_trials` undilated trials of `family`.
    pub fn new(family: TrialFamily, n_trials: usize, seed: u64) -> Self {
        TrialSpec {
            family,
            n_trials,
            seed,
            dilation: 1.0,
        }
    }
}

/// Result of [`operator_norm_lower_bound`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEstimate {
    /// Largest ratio over the non-degenerate trials (0 when there are none).
    pub estimate: f64,
    /// Running maximum after each trial.
    pub running: Vec<f64>,
    /// Trials that entered the estimate.
    pub trials_used: usize,
    /// Degenerate trials (an input of zero or non-finite norm) that were skipped.
    pub skipped: usize,
    /// Base seed.
    pub seed: u64,
}

/// `max_trials ‖op(f₁,…,f_k)‖_{p_out} / Π ‖f_i‖_{p_i}` over seeded trials.
pub fn operator_norm_lower_bound(
    s: &MetivierStructure,
    op: &NormOperator,
    grid: &Grid,
    p_in: &[f64],
    p_out: f64,
    spec: &TrialSpec,
) -> Result<NormEstimate> {
    if p_in.len() != op.arity {
        return Err(Error::Dimension {
            expected: op.arity,
            got: p_in.len(),
        });
    }
    if !(spec.dilation > 0.0) {
        return Err(param("dilation", "must be positive"));
    }
    let mut best: f64 = 0.0;
    let mut running = Vec::with_capacity(spec.n_trials);
    let mut used = 0;
    let mut skipped = 0;
    for i in 0..spec.n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ i as u64);
        let mut args = Vec::with_capacity(op.arity);
        let mut denom = 1.0;
        for &p in p_in {
            let trial = spec.family.draw(s, grid, i, &mut rng);
            let f = sample_trial(&trial, grid, spec.dilation);
            denom *= lp_quasi_norm(&f, p)?;
            args.push(f);
        }
        if !(denom > 0.0 && denom.is_finite()) {
            skipped += 1;
            running.push(best);
            continue;
        }
        let out = op.apply(&args)?;
        let ratio = lp_quasi_norm(&out, p_out)? / denom;
        if ratio.is_finite() {
            best = best.max(ratio);
            used += 1;
        } else {
            skipped += 1;
        }
        running.push(best);
    }
    Ok(NormEstimate {
        estimate: best,
        running,
        trials_used: used,
        skipped,
        seed: spec.seed,
    })
}

/// Riesz-mean threshold `Q(1/p − ½) − ½`.
pub fn riesz_threshold(q: usize, p: f64) -> f64 {
    q as f64 * (1.0 / p - 0.5) - 0.5
}

/// Exponents covered by the Riesz theorem: `1 ≤ p ≤ (2m+2)/(m+3)`, together with
/// the spectral-theorem case `p = 2`.
pub fn riesz_admissible(m: usize, p: f64) -> Result<()> {
    let bound = restriction_bound(m);
    if p == 2.0 || (p >= 1.0 && p <= bound) {
        Ok(())
    } else {
        Err(Error::Admissibility { p, bound })
    }
}

/// One row of [`riesz_threshold_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    /// Exponent.
    pub p: f64,
    /// Order tested.
    pub delta: f64,
    /// `Q(1/p − ½) − ½`.
    pub threshold: f64,
    /// Whether `δ` exceeds the threshold.
    pub above: bool,
    /// Lower bound with the undilated trials at radius `R`.
    pub estimate: f64,
    /// Lower bound with the trials dilated by `t` at radius `R/t²`.
    pub dilated_estimate: f64,
    /// `|estimate − dilated_estimate| / max(estimate, dilated_estimate)`.
    pub dilation_dev: f64,
    /// Trials that entered the undilated estimate.
    pub trials: usize,
    /// Degenerate trials skipped in the undilated estimate.
    pub skipped: usize,
    /// Base seed.
    pub seed: u64,
}

/// Lower bounds of `‖S_R^δ‖_{p→p}` next to the threshold for every `(p, δ)`,
/// repeated with every trial dilated by `t` and `R` replaced by `R/t²` (the two
/// agree in the continuum by the scaling identity).
#[allow(clippy::too_many_arguments)]
pub fn riesz_threshold_scan(
    s: &MetivierStructure,
    grid: &Grid,
    ps: &[f64],
    deltas: &[f64],
    r: f64,
    t: f64,
    spec: &TrialSpec,
) -> Result<Vec<ThresholdRow>> {
    for &p in ps {
        riesz_admissible(s.m, p)?;
    }
    if !(t > 0.0) {
        return Err(param("t", "dilation factor must be positive"));
    }
    let q = s.q();
    let mut rows = vec![];
    for &p in ps {
        for &delta in deltas {
            let op = NormOperator::riesz(s, delta, r);
            let base = operator_norm_lower_bound(s, &op, grid, &[p], p, spec)?;
            let op_t = NormOperator::riesz(s, delta, r / (t * t));
            let spec_t = TrialSpec {
                dilation: spec.dilation * t,
                ..*spec
            };
            let dil = operator_norm_lower_bound(s, &op_t, grid, &[p], p, &spec_t)?;
            let threshold = riesz_threshold(q, p);
            let top = base.estimate.max(dil.estimate);
            rows.push(ThresholdRow {
                p,
                delta,
                threshold,
                above: delta > threshold,
                estimate: base.estimate,
                dilated_estimate: dil.estimate,
                dilation_dev: if top > 0.0 {
                    (base.estimate - dil.estimate).abs() / top
                } else {
                    0.0
                },
                trials: base.trials_used,
                skipped: base.skipped,
                seed: spec.seed,
            });
        }
    }
    Ok(rows)
}

/// The regions of the bilinear threshold surface in `(x, y) = (1/p₁, 1/p₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// `x, y ≤ ½`, `x + y ≤ ½`.
    I,
    /// `x, y ≤ ½`, `x + y ≥ ½`.
    II,
    /// `x ≥ ½ ≥ y`, `x + y ≤ 1`.
    III,
    /// `y ≥ ½ ≥ x`, `x + y ≤ 1`.
    IIISwap,
    /// `x ≥ ½ ≥ y`, `x + y ≥ 1`.
    IV,
    /// `y ≥ ½ ≥ x`, `x + y ≥ 1`.
    IVSwap,
    /// `x, y ≥ ½`.
    V,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::I => "I",
            Region::II => "II",
            Region::III => "III",
            Region::IIISwap => "III-swap",
            Region::IV => "IV",
            Region::IVSwap => "IV-swap",
            Region::V => "V",
        };
        f.write_str(s)
    }
}

/// Region of `(x, y) = (1/p₁, 1/p₂) ∈ [0, 1]²`; boundary points go to the first
/// matching region in the order V, I, II, III, IV and their swaps.
pub fn region_of(x: f64, y: f64) -> Result<Region> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(param("p1, p2", "need 1 <= p1, p2 <= inf"));
    }
    let s = x + y;
    Ok(if x >= 0.5 && y >= 0.5 {
        Region::V
    } else if x <= 0.5 && y <= 0.5 {
        if s <= 0.5 {
            Region::I
        } else {
            Region::II
        }
    } else if x > 0.5 {
        if s <= 1.0 {
            Region::III
        } else {
            Region::IV
        }
    } else if s <= 1.0 {
        Region::IIISwap
    } else {
        Region::IVSwap
    })
}

/// Threshold of `region` at `(x, y) = (1/p₁, 1/p₂)` for homogeneous dimension `q`.
pub fn region_formula(region: Region, q: f64, x: f64, y: f64) -> f64 {
    let s = x + y;
    match region {
        Region::I => q * (1.0 - s) - 0.5,
        Region::II => (q - 1.0) * (1.0 - s),
        Region::III => q * (0.5 - y) - (1.0 - s),
        Region::IIISwap => q * (0.5 - x) - (1.0 - s),
        Region::IV => q * (x - 0.5),
        Region::IVSwap => q * (y - 0.5),
        Region::V => q * (s - 1.0),
    }
}

/// Bilinear threshold `α(p₁, p₂)` and its region (`p = f64::INFINITY` allowed).
pub fn bilinear_threshold(q: usize, p1: f64, p2: f64) -> Result<(Region, f64)> {
    if !(p1 >= 1.0) || !(p2 >= 1.0) {
        return Err(param("p1, p2", "need 1 <= p1, p2 <= inf"));
    }
    let (x, y) = (1.0 / p1, 1.0 / p2);
    let r = region_of(x, y)?;
    Ok((r, region_formula(r, q as f64, x, y)))
}

/// Result of [`threshold_convexity_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// Largest `α(mid) − (α(a) + α(b))/2` over consecutive sample triples on every
    /// segment between two anchor points (non-positive for a convex surface).
    pub worst_violation: f64,
    /// Number of segments checked.
    pub segments: usize,
    /// `max |α(x,y) − α(y,x)|` over the sample lattice.
    pub swap_max_dev: f64,
    /// Whether the violation stays below `1e-12` and the swap deviation below `1e-12`.
    pub convex: bool,
}

/// Anchor points `(1/p₁, 1/p₂)` of the threshold surface: `(1,1)`, `(2,2)`, `(∞,∞)`,
/// `(1,∞)`, `(2,∞)`.
pub const ANCHORS: [(f64, f64); 5] = [(1.0, 1.0), (0.5, 0.5), (0.0, 0.0), (1.0, 0.0), (0.5, 0.0)];

fn threshold_xy(q: f64, x: f64, y: f64) -> f64 {
    let r = region_of(x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)).unwrap_or(Region::V);
    region_formula(r, q, x, y)
}

/// Midpoint convexity of `α` along all segments between anchors (and their
/// mirror images), with `samples` points per segment, and swap symmetry.
pub fn threshold_convexity_check(q: usize, samples: usize) -> ConvexityReport {
    let q = q as f64;
    let samples = samples.max(3);
    let mut anchors: Vec<(f64, f64)> = ANCHORS.to_vec();
    for &(x, y) in ANCHORS.iter() {
        if x != y {
            anchors.push((y, x));
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut segments = 0;
    for i in 0..anchors.len() {
        for j in i + 1..anchors.len() {
            let (a, b) = (anchors[i], anchors[j]);
            segments += 1;
            let vals: Vec<f64> = (0..samples)
                .map(|k| {
                    let t = k as f64 / (samples - 1) as f64;
                    threshold_xy(q, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
                })
                .collect();
            for w in vals.windows(3) {
                worst = worst.max(w[1] - 0.5 * (w[0] + w[2]));
            }
        }
    }
    let mut swap: f64 = 0.0;
    for i in 0..=40 {
        for j in 0..=40 {
            let (x, y) = (i as f64 / 40.0, j as f64 / 40.0);
            swap = swap.max((threshold_xy(q, x, y) - threshold_xy(q, y, x)).abs());
        }
    }
    ConvexityReport {
        worst_violation: worst,
        segments,
        swap_max_dev: swap,
        convex: worst <= 1e-12 && swap <= 1e-12,
    }
}

/// One row of [`bilinear_region_table`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionRow {
    /// First exponent.
    pub p1: f64,
    /// Second exponent.
    pub p2: f64,
    /// Target exponent `1/p = 1/p₁ + 1/p₂`.
    pub p: f64,
    /// Region of `(1/p₁, 1/p₂)`.
    pub region: Region,
    /// Threshold `α(p₁, p₂)`.
    pub paper_threshold: f64,
    /// `threshold + margin`.
    pub alpha_tested: f64,
    /// Lower bound of `‖S_R^α‖_{L^{p₁}×L^{p₂}→L^p}`.
    pub estimate: f64,
    /// Trials that entered the estimate.
    pub trials: usize,
    /// Base seed.
    pub seed: u64,
}

/// Threshold, region and empirical lower bound at `α = threshold + margin` for every
/// exponent pair.
pub fn bilinear_region_table(
    s: &MetivierStructure,
    grid: &Grid,
    pairs: &[(f64, f64)],
    margin: f64,
    r: f64,
    spec: &TrialSpec,
) -> Result<Vec<RegionRow>> {
    let q = s.q();
    let mut rows = vec![];
    for &(p1, p2) in pairs {
        let (region, threshold) = bilinear_threshold(q, p1, p2)?;
        let alpha = (threshold + margin).max(0.0);
        let p = 1.0 / (1.0 / p1 + 1.0 / p2);
        let op = NormOperator::bilinear_riesz(s, alpha, r);
        let est = operator_norm_lower_bound(s, &op, grid, &[p1, p2], p, spec)?;
        rows.push(RegionRow {
            p1,
            p2,
            p,
            region,
            paper_threshold: threshold,
            alpha_tested: alpha,
            estimate: est.estimate,
            trials: est.trials_used,
            seed: spec.seed,
        });
    }
    Ok(rows)
}

/// CSV header of [`region_rows_csv`].
pub const REGION_CSV_HEADER: &str = "p1,p2,p,region,paper_threshold,alpha_tested,estimate,trials,seed";

/// Renders region rows as CSV (shortest round-trip float formatting, `inf` for `∞`).
pub fn region_rows_csv(rows: &[RegionRow]) -> String {
    let mut out = String::from(REGION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.p1, r.p2, r.p, r.region, r.paper_threshold, r.alpha_tested, r.estimate, r.trials, r.seed
        ));
    }
    out
}
