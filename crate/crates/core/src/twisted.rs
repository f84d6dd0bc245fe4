//! Twisted convolution on the first layer, the special Hermite projections
//! `g ↦ (λ/2π)^n g ×_λ φ_k^λ` and their `A_η`-conjugated versions, and the
//! reconstruction of a function from its projections.
//!
//! Sign convention: `φ ×_λ ψ(z) = ∫ φ(z−w) ψ(w) e^{(i/2) λ zᵀ J_{2n} w} dw`, the
//! phase for which `(f∗g)^μ = f^μ ×_μ g^μ` holds with the group law of this crate
//! and for which `g ×_λ φ_k^λ` is an eigenfunction of `L^λ`.
//!
//! Every convolution reduces to the primitive
//! `out(z) = h^{2n} Σ_y a(y) κ(z−y) e^{−(i/2) zᵀ B y}` with `a` sampled on the grid
//! and `κ` tabulated on the lattice of node differences.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param, Error, Result};
use crate::fields::{Domain, Grid, GridFunction};
use crate::group::{standard_symplectic, MetivierStructure};
use crate::specfun::{laguerre_all, phi_r2};
use crate::symplectic::factorize_eta;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Grid size per axis from which the FFT path is the default for `n = 1`.
pub const ACCELERATED_FROM: usize = 64;

/// Grid size per axis above which the FFT path recomputes row spectra on the fly
/// instead of caching them.
const PLAN_CACHE_LIMIT: usize = 160;

/// Choice of evaluation path for the twisted-convolution primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    /// FFT path for `n = 1` with `nx >= 64`, direct quadrature otherwise.
    Auto,
    /// Direct quadrature, any `n`.
    Direct,
    /// Modulation–convolution–modulation sandwich with FFTs, `n = 1` only.
    Accelerated,
}

/// A kernel tabulated on the lattice of node differences `d h`,
/// `d ∈ {−(N−1), …, N−1}^{2n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffKernel {
    /// Half-dimension.
    pub n: usize,
    /// Grid points per axis `N`.
    pub nx: usize,
    /// Values, row-major over `(d_1 + N − 1, …, d_{2n} + N − 1)`.
    pub data: Vec<Complex64>,
}

impl DiffKernel {
    /// Tabulates a function of the difference vector.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let d = 2 * grid.n;
        let side = 2 * grid.nx - 1;
        let h = grid.hx();
        let len = side.pow(d as u32);
        let mut z = vec![0.0; d];
        let mut data = Vec::with_capacity(len);
        for flat in 0..len {
            let mut r = flat;
            for a in (0..d).rev() {
                z[a] = ((r % side) as f64 - (grid.nx as f64 - 1.0)) * h;
                r /= side;
            }
            data.push(f(&z));
        }
        DiffKernel {
            n: grid.n,
            nx: grid.nx,
            data,
        }
    }

    /// Extends a layer grid function to the difference lattice, zero outside the box.
    pub fn from_grid(g: &GridFunction) -> Self {
        let grid = &g.grid;
        let d = 2 * grid.n;
        let side = 2 * grid.nx - 1;
        let len = side.pow(d as u32);
        let half = (grid.nx / 2) as isize;
        let mut idx = vec![0isize; d];
        let mut data = Vec::with_capacity(len);
        for flat in 0..len {
            let mut r = flat;
            for a in (0..d).rev() {
                idx[a] = (r % side) as isize - (grid.nx as isize - 1) + half;
                r /= side;
            }
            data.push(grid.x_flat(&idx).map_or(ZERO, |i| g.data[i]));
        }
        DiffKernel {
            n: grid.n,
            nx: grid.nx,
            data,
        }
    }
}

fn check_layer(g: &GridFunction) -> Result<()> {
    if g.grid.domain != Domain::Layer {
        return Err(Error::GridMismatch("twisted convolution acts on layer grids".into()));
    }
    Ok(())
}

fn check_kernel(grid: &Grid, k: &DiffKernel) -> Result<()> {
    if k.n != grid.n || k.nx != grid.nx {
        return Err(Error::GridMismatch("difference kernel does not match the grid".into()));
    }
    Ok(())
}

/// The primitive `out(z) = h^{2n} Σ_y a(y) κ(z−y) e^{−(i/2) zᵀ B y}`.
pub fn twisted_sum(a: &GridFunction, kappa: &DiffKernel, b: &DMatrix<f64>, path: Path) -> Result<GridFunction> {
    check_layer(a)?;
    check_kernel(&a.grid, kappa)?;
    let d = 2 * a.grid.n;
    if b.nrows() != d || b.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: b.nrows(),
        });
    }
    let use_fft = match path {
        Path::Direct => false,
        Path::Accelerated => {
            if a.grid.n != 1 {
                return Err(param("path", "the accelerated path needs n = 1"));
            }
            true
        }
        Path::Auto => a.grid.n == 1 && a.grid.nx >= ACCELERATED_FROM,
    };
    if use_fft {
        // any 2×2 skew matrix is c J_2
        TwistedPlan::new(a, b[(0, 1)])?.apply(kappa)
    } else {
        Ok(direct_sum(a, kappa, b))
    }
}

fn direct_sum(a: &GridFunction, kappa: &DiffKernel, b: &DMatrix<f64>) -> GridFunction {
    let grid = &a.grid;
    let d = 2 * grid.n;
    let nx = grid.nx;
    let side = 2 * nx - 1;
    let nodes: Vec<f64> = (0..nx).map(|i| grid.x_node(i)).collect();
    let prefix_len = nx.pow(d as u32 - 1);
    let strides: Vec<usize> = (0..d).map(|q| side.pow((d - 1 - q) as u32)).collect();
    let mut out = GridFunction::zeros(grid);
    let mut zm = vec![0usize; d];
    let mut z = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut phase = vec![vec![ZERO; nx]; d];
    let mut pm = vec![0usize; d.saturating_sub(1)];
    let vol = grid.cell_volume();
    for zi in 0..grid.x_len() {
        grid.x_multi(zi, &mut zm);
        for q in 0..d {
            z[q] = nodes[zm[q]];
        }
        for q in 0..d {
            w[q] = (0..d).map(|p| z[p] * b[(p, q)]).sum();
            for (j, e) in phase[q].iter_mut().enumerate() {
                *e = Complex64::from_polar(1.0, -0.5 * w[q] * nodes[j]);
            }
        }
        let last = d - 1;
        let mut acc = ZERO;
        for p in 0..prefix_len {
            let mut r = p;
            for q in (0..last).rev() {
                pm[q] = r % nx;
                r /= nx;
            }
            let mut ph = Complex64::new(1.0, 0.0);
            let mut kb = 0usize;
            for q in 0..last {
                ph *= phase[q][pm[q]];
                kb += (zm[q] + nx - 1 - pm[q]) * strides[q];
            }
            let arow = &a.data[p * nx..(p + 1) * nx];
            let kbase = kb + zm[last] + nx - 1;
            let el = &phase[last];
            let mut inner = ZERO;
            for j in 0..nx {
                let av = arow[j];
                if av == ZERO {
                    continue;
                }
                inner += av * kappa.data[kbase - j] * el[j];
            }
            acc += ph * inner;
        }
        out.data[zi] = acc * vol;
    }
    out
}

/// Cached row spectra for the FFT path of the primitive with `n = 1`,
/// `B = c J_2`, and a fixed first operand `a`.
///
/// `out(i1,i2) = h² Σ_{j1} e^{(i/2) c z2 y1} · IFFT(FFT(a(j1,·) e^{−(i/2) c z1 y2}) ⊙ FFT(κ(i1−j1,·)))[i2]`.
pub struct TwistedPlan {
    grid: Grid,
    c: f64,
    a: Vec<Complex64>,
    rows: Option<Vec<Complex64>>,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    outer: Vec<Complex64>,
}

impl TwistedPlan {
    /// Precomputes the modulated row spectra of `a`.
    pub fn new(a: &GridFunction, c: f64) -> Result<Self> {
        check_layer(a)?;
        if a.grid.n != 1 {
            return Err(param("a", "the FFT path needs n = 1"));
        }
        let nx = a.grid.nx;
        let len = 2 * nx;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let nodes: Vec<f64> = (0..nx).map(|i| a.grid.x_node(i)).collect();
        let mut outer = vec![ZERO; nx * nx];
        for i2 in 0..nx {
            for j1 in 0..nx {
                outer[i2 * nx + j1] = Complex64::from_polar(1.0, 0.5 * c * nodes[i2] * nodes[j1]);
            }
        }
        let mut plan = TwistedPlan {
            grid: a.grid.clone(),
            c,
            a: a.data.clone(),
            rows: None,
            len,
            fwd,
            inv,
            outer,
        };
        if nx <= PLAN_CACHE_LIMIT {
            let mut rows = vec![ZERO; nx * nx * len];
            for i1 in 0..nx {
                for j1 in 0..nx {
                    let dst = &mut rows[(i1 * nx + j1) * len..(i1 * nx + j1 + 1) * len];
                    plan.row_spectrum(i1, j1, dst);
                }
            }
            plan.rows = Some(rows);
        }
        Ok(plan)
    }

    fn row_spectrum(&self, i1: usize, j1: usize, dst: &mut [Complex64]) {
        let nx = self.grid.nx;
        let z1 = self.grid.x_node(i1);
        for (j2, v) in dst.iter_mut().enumerate() {
            *v = if j2 < nx {
                self.a[j1 * nx + j2] * Complex64::from_polar(1.0, -0.5 * self.c * z1 * self.grid.x_node(j2))
            } else {
                ZERO
            };
        }
        self.fwd.process(dst);
    }

    /// Evaluates the primitive for one difference kernel.
    pub fn apply(&self, kappa: &DiffKernel) -> Result<GridFunction> {
        check_kernel(&self.grid, kappa)?;
        let nx = self.grid.nx;
        let len = self.len;
        let side = 2 * nx - 1;
        // spectra of κ(d1, ·), placed circularly
        let mut kspec = vec![ZERO; side * len];
        let mut knz = vec![false; side];
        for d1 in 0..side {
            let dst = &mut kspec[d1 * len..(d1 + 1) * len];
            for d2 in 0..side {
                let v = kappa.data[d1 * side + d2];
                let shift = d2 as isize - (nx as isize - 1);
                dst[shift.rem_euclid(len as isize) as usize] = v;
                if v != ZERO {
                    knz[d1] = true;
                }
            }
            if knz[d1] {
                self.fwd.process(dst);
            }
        }
        let row_nz: Vec<bool> = (0..nx).map(|j1| self.a[j1 * nx..(j1 + 1) * nx].iter().any(|v| *v != ZERO)).collect();
        let mut out = GridFunction::zeros(&self.grid);
        let mut buf = vec![ZERO; len];
        let mut acc = vec![ZERO; nx];
        let scale = self.grid.cell_volume() / len as f64;
        for i1 in 0..nx {
            acc.iter_mut().for_each(|v| *v = ZERO);
            for j1 in 0..nx {
                let d1 = i1 + nx - 1 - j1;
                if !knz[d1] || !row_nz[j1] {
                    continue;
                }
                match &self.rows {
                    Some(rows) => buf.copy_from_slice(&rows[(i1 * nx + j1) * len..(i1 * nx + j1 + 1) * len]),
                    None => self.row_spectrum(i1, j1, &mut buf),
                }
                for (b, k) in buf.iter_mut().zip(&kspec[d1 * len..(d1 + 1) * len]) {
                    *b *= k;
                }
                self.inv.process(&mut buf);
                for i2 in 0..nx {
                    acc[i2] += self.outer[i2 * nx + j1] * buf[i2];
                }
            }
            for i2 in 0..nx {
                out.data[i1 * nx + i2] = acc[i2] * scale;
            }
        }
        Ok(out)
    }
}

/// `φ ×_λ ψ(z) = ∫ φ(z−w) ψ(w) e^{(i/2) λ zᵀ J_{2n} w} dw` (`λ = 0` gives the
/// ordinary convolution). `φ` is zero outside the box.
pub fn twisted_convolution(n: usize, lambda: f64, phi: &GridFunction, psi: &GridFunction) -> Result<GridFunction> {
    twisted_convolution_with(n, lambda, phi, psi, Path::Auto)
}

/// [`twisted_convolution`] with an explicit evaluation path.
pub fn twisted_convolution_with(
    n: usize,
    lambda: f64,
    phi: &GridFunction,
    psi: &GridFunction,
    path: Path,
) -> Result<GridFunction> {
    check_layer(phi)?;
    phi.grid.check_same(&psi.grid)?;
    if phi.grid.n != n {
        return Err(Error::Dimension {
            expected: n,
            got: phi.grid.n,
        });
    }
    let b = standard_symplectic(n) * (-lambda);
    twisted_sum(psi, &DiffKernel::from_grid(phi), &b, path)
}

/// `μ`-twisted convolution `√|det J_μ| ∫ φ(x−y) ψ(y) e^{(i/2) xᵀ J_μ y} dy`.
pub fn mu_twisted_convolution(
    s: &MetivierStructure,
    mu: &[f64],
    phi: &GridFunction,
    psi: &GridFunction,
) -> Result<GridFunction> {
    check_layer(phi)?;
    phi.grid.check_same(&psi.grid)?;
    if mu.iter().all(|c| *c == 0.0) {
        return Err(param("mu", "must be nonzero; use the group convolution of layers at mu = 0"));
    }
    let j = s.j_of(mu)?;
    let measure = j.determinant().abs().sqrt();
    let out = twisted_sum(psi, &DiffKernel::from_grid(phi), &(-j), Path::Auto)?;
    Ok(out.scale(Complex64::new(measure, 0.0)))
}

/// Laguerre kernel `φ_k^λ(A d) |det A|` on the difference lattice.
fn laguerre_kernel(grid: &Grid, k: usize, lambda: f64, a: &DMatrix<f64>, det_a: f64) -> DiffKernel {
    let n = grid.n;
    let d = 2 * n;
    let mut ad = vec![0.0; d];
    DiffKernel::from_fn(grid, |z| {
        for (r, v) in ad.iter_mut().enumerate() {
            *v = (0..d).map(|c| a[(r, c)] * z[c]).sum();
        }
        let r2: f64 = ad.iter().map(|v| v * v).sum();
        Complex64::new(phi_r2(k, n, lambda * r2) * det_a.abs(), 0.0)
    })
}

fn norm_factor(n: usize, lambda: f64) -> Complex64 {
    Complex64::new((lambda / (2.0 * PI)).powi(n as i32), 0.0)
}

/// Special Hermite projection `(λ/2π)^n g ×_λ φ_k^λ`.
pub fn hermite_projection(n: usize, lambda: f64, k: usize, g: &GridFunction) -> Result<GridFunction> {
    check_layer(g)?;
    if lambda <= 0.0 {
        return Err(param("lambda", "must be positive"));
    }
    if g.grid.n != n {
        return Err(Error::Dimension {
            expected: n,
            got: g.grid.n,
        });
    }
    let id = DMatrix::identity(2 * n, 2 * n);
    let kappa = laguerre_kernel(&g.grid, k, lambda, &id, 1.0);
    // g ×_λ φ = Σ_w g(w) φ(z−w) e^{−(i/2) λ zᵀ J w}
    let b = standard_symplectic(n) * lambda;
    Ok(twisted_sum(g, &kappa, &b, Path::Auto)?.scale(norm_factor(n, lambda)))
}

/// Projection onto the `λ(2k+n)`-eigenspace of `Δ^{λη}`:
/// `(λ/2π)^n ∫ g(x−y) φ_k^λ(A_η y) |det A_η| e^{(i/2) λ xᵀ J_η y} dy`, which equals
/// `(g_η ×_λ φ_k^λ)∘A_η` with `g_η = g∘A_η^{-1}`, evaluated in the original
/// coordinates.
pub fn projection_via_a(
    s: &MetivierStructure,
    eta: &[f64],
    lambda: f64,
    k: usize,
    g: &GridFunction,
) -> Result<GridFunction> {
    ProjectionFamily::new(s, eta, lambda, g)?.project(k)
}

/// Projections of one layer function onto every level `k` for a fixed `(η, λ)`,
/// sharing the FFT plan across levels.
pub struct ProjectionFamily {
    grid: Grid,
    lambda: f64,
    a: DMatrix<f64>,
    det_a: f64,
    b: DMatrix<f64>,
    g: GridFunction,
    plan: Option<TwistedPlan>,
}

impl ProjectionFamily {
    /// Factorizes `J_η` and prepares the FFT plan when `n = 1`.
    pub fn new(s: &MetivierStructure, eta: &[f64], lambda: f64, g: &GridFunction) -> Result<Self> {
        check_layer(g)?;
        if lambda <= 0.0 {
            return Err(param("lambda", "must be positive"));
        }
        if g.grid.n != s.n {
            return Err(Error::Dimension {
                expected: s.n,
                got: g.grid.n,
            });
        }
        let f = factorize_eta(s, eta)?;
        let b = &f.j_eta * lambda;
        let plan = if s.n == 1 && g.grid.nx >= ACCELERATED_FROM {
            Some(TwistedPlan::new(g, b[(0, 1)])?)
        } else {
            None
        };
        Ok(ProjectionFamily {
            grid: g.grid.clone(),
            lambda,
            a: f.a,
            det_a: f.det_a,
            b,
            g: g.clone(),
            plan,
        })
    }

    /// The projection onto level `k`.
    pub fn project(&self, k: usize) -> Result<GridFunction> {
        let kappa = laguerre_kernel(&self.grid, k, self.lambda, &self.a, self.det_a);
        let raw = match &self.plan {
            Some(p) => p.apply(&kappa)?,
            None => direct_sum(&self.g, &kappa, &self.b),
        };
        Ok(raw.scale(norm_factor(self.grid.n, self.lambda)))
    }

    /// The projections onto levels `k0..k1`, with the Laguerre tables of the whole
    /// range built by one recurrence per lattice point.
    pub fn project_range(&self, k0: usize, k1: usize) -> Result<Vec<GridFunction>> {
        if k1 <= k0 {
            return Ok(vec![]);
        }
        let n = self.grid.n;
        let d = 2 * n;
        let width = k1 - k0;
        let mut table: Vec<f64> = Vec::new();
        let mut ad = vec![0.0; d];
        let mut lag = Vec::with_capacity(k1);
        let det = self.det_a.abs();
        let first = DiffKernel::from_fn(&self.grid, |z| {
            for (r, v) in ad.iter_mut().enumerate() {
                *v = (0..d).map(|c| self.a[(r, c)] * z[c]).sum();
            }
            let r2: f64 = ad.iter().map(|v| v * v).sum::<f64>() * self.lambda;
            laguerre_all(k1 - 1, n as f64 - 1.0, 0.5 * r2, &mut lag);
            let e = (-0.25 * r2).exp() * det;
            table.extend(lag[k0..k1].iter().map(|l| l * e));
            Complex64::new(lag[k0] * e, 0.0)
        });
        let points = first.data.len();
        let scale = norm_factor(n, self.lambda);
        let mut out = Vec::with_capacity(width);
        for j in 0..width {
            let kappa = DiffKernel {
                data: (0..points).map(|p| Complex64::new(table[p * width + j], 0.0)).collect(),
                ..first.clone()
            };
            let raw = match &self.plan {
                Some(p) => p.apply(&kappa)?,
                None => direct_sum(&self.g, &kappa, &self.b),
            };
            out.push(raw.scale(scale));
        }
        Ok(out)
    }
}

/// Partial sum `(λ/2π)^n Σ_{k ≤ K_max} g ×_λ φ_k^λ` and its relative L² error.
pub fn reconstruct(n: usize, lambda: f64, g: &GridFunction, k_max: usize) -> Result<(GridFunction, f64)> {
    let errs = reconstruct_sweep(n, lambda, g, k_max)?;
    Ok((errs.partial, *errs.errors.last().expect("at least one level")))
}

/// Result of [`reconstruct_sweep`].
#[derive(Debug, Clone)]
pub struct ReconstructionSweep {
    /// Partial sum up to the last level.
    pub partial: GridFunction,
    /// Relative L² error after each level `0..=K_max`.
    pub errors: Vec<f64>,
}

/// Relative L² reconstruction error after each level `k = 0..=K_max`.
pub fn reconstruct_sweep(n: usize, lambda: f64, g: &GridFunction, k_max: usize) -> Result<ReconstructionSweep> {
    check_layer(g)?;
    if g.grid.n != n {
        return Err(Error::Dimension {
            expected: n,
            got: g.grid.n,
        });
    }
    let s = MetivierStructure::heisenberg(n);
    let fam = ProjectionFamily::new(&s, &[1.0], lambda, g)?;
    let norm = g.l2_norm();
    let mut partial = GridFunction::zeros(&g.grid);
    let mut errors = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        partial.axpy(Complex64::new(1.0, 0.0), &fam.project(k)?)?;
        let err = partial.sub(g)?.l2_norm();
        errors.push(if norm > 0.0 { err / norm } else { err });
    }
    Ok(ReconstructionSweep { partial, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{fourier_u_at, skew_laplacian_apply, twisted_laplacian_apply};
    use crate::group::group_convolution;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn gaussian(grid: &Grid, z0: &[f64], w: f64) -> GridFunction {
        GridFunction::from_fn(grid, |x, _| {
            let r2: f64 = x.iter().zip(z0).map(|(a, b)| (a - b) * (a - b)).sum();
            c((-r2 / w).exp())
        })
    }

    fn laguerre_layer(grid: &Grid, k: usize, lambda: f64) -> GridFunction {
        GridFunction::from_fn(grid, |x, _| c(phi_r2(k, grid.n, lambda * x.iter().map(|v| v * v).sum::<f64>())))
    }

    #[test]
    fn batched_levels_match_single_levels() {
        let s = MetivierStructure::heisenberg(1);
        for nx in [16, 64] {
            let grid = Grid::layer(1, nx, 5.0).unwrap();
            let g = gaussian(&grid, &[0.4, -0.3], 2.0);
            let fam = ProjectionFamily::new(&s, &[-1.0], 0.7, &g).unwrap();
            let batch = fam.project_range(2, 7).unwrap();
            assert_eq!(batch.len(), 5);
            for (j, b) in batch.iter().enumerate() {
                let one = fam.project(2 + j).unwrap();
                assert!(b.sub(&one).unwrap().max_abs() <= 1e-12 * one.max_abs().max(1e-300));
            }
            assert!(fam.project_range(3, 3).unwrap().is_empty());
        }
    }

    #[test]
    fn zero_lambda_is_ordinary_convolution() {
        let grid = Grid::layer(1, 16, 4.0).unwrap();
        let f = gaussian(&grid, &[0.5, -0.2], 1.0);
        let g = GridFunction::from_fn(&grid, |x, _| Complex64::new(x[0], 1.0) * (-(x[0] * x[0] + x[1] * x[1])).exp());
        let out = twisted_convolution(1, 0.0, &f, &g).unwrap();
        let h2 = grid.cell_volume();
        let nx = grid.nx as isize;
        for i in 0..nx {
            for j in 0..nx {
                let mut acc = c(0.0);
                for p in 0..nx {
                    for q in 0..nx {
                        let (di, dj) = (i - p + nx / 2, j - q + nx / 2);
                        if (0..nx).contains(&di) && (0..nx).contains(&dj) {
                            acc += f.data[(di * nx + dj) as usize] * g.data[(p * nx + q) as usize];
                        }
                    }
                }
                assert!((out.data[(i * nx + j) as usize] - acc * h2).norm() < 1e-12);
            }
        }
        let zero = twisted_convolution(1, 1.0, &f, &GridFunction::zeros(&grid)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn laguerre_self_convolution() {
        let grid = Grid::layer(1, 96, 12.0).unwrap();
        for k in 0..=2 {
            let p = laguerre_layer(&grid, k, 1.0);
            let out = twisted_convolution(1, 1.0, &p, &p).unwrap();
            let expect = p.scale(c(2.0 * PI));
            assert!(out.rel_l2_error(&expect).unwrap() <= 1e-4, "k={k}");
        }
    }

    #[test]
    fn paths_agree() {
        for nx in [16usize, 64] {
            let grid = Grid::layer(1, nx, 6.0).unwrap();
            let f = gaussian(&grid, &[0.7, -0.4], 1.5);
            let g = GridFunction::from_fn(&grid, |x, _| Complex64::new(x[1], 0.5) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp());
            for lam in [0.0, 0.8, -1.7] {
                let d = twisted_convolution_with(1, lam, &f, &g, Path::Direct).unwrap();
                let a = twisted_convolution_with(1, lam, &f, &g, Path::Accelerated).unwrap();
                assert!(d.sub(&a).unwrap().max_abs() <= 1e-8 * d.max_abs(), "nx={nx} lam={lam}");
            }
            let p_direct = {
                let kappa = laguerre_kernel(&grid, 2, 0.9, &DMatrix::identity(2, 2), 1.0);
                twisted_sum(&g, &kappa, &(standard_symplectic(1) * 0.9), Path::Direct).unwrap()
            };
            let plan = TwistedPlan::new(&g, 0.9).unwrap();
            let p_fft = plan.apply(&laguerre_kernel(&grid, 2, 0.9, &DMatrix::identity(2, 2), 1.0)).unwrap();
            assert!(p_direct.sub(&p_fft).unwrap().max_abs() <= 1e-8 * p_direct.max_abs());
        }
        let g4 = Grid::layer(2, 4, 2.0).unwrap();
        let f4 = gaussian(&g4, &[0.0; 4], 1.0);
        assert!(twisted_convolution_with(2, 1.0, &f4, &f4, Path::Accelerated).is_err());
    }

    #[test]
    fn projection_examples() {
        let grid = Grid::layer(1, 64, 10.0).unwrap();
        let lam = 1.0;
        // ground state is reproduced by k = 0
        let g0 = laguerre_layer(&grid, 0, lam);
        let p0 = hermite_projection(1, lam, 0, &g0).unwrap();
        assert!(p0.rel_l2_error(&g0).unwrap() < 1e-8);
        for j in 0..4 {
            let g = laguerre_layer(&grid, j, lam);
            for k in 0..4 {
                let p = hermite_projection(1, lam, k, &g).unwrap();
                if k == j {
                    assert!(p.rel_l2_error(&g).unwrap() < 1e-8, "j={j}");
                } else {
                    assert!(p.l2_norm() < 1e-8 * g.l2_norm(), "j={j} k={k}");
                }
            }
        }
        let a = gaussian(&grid, &[1.0, 0.5], 2.0);
        let b = GridFunction::from_fn(&grid, |x, _| Complex64::new(0.0, x[0]) * (-(x[0] * x[0] + x[1] * x[1]) / 3.0).exp());
        let sum = a.add(&b.scale(c(2.0))).unwrap();
        let lhs = hermite_projection(1, lam, 2, &sum).unwrap();
        let rhs = hermite_projection(1, lam, 2, &a).unwrap().add(&hermite_projection(1, lam, 2, &b).unwrap().scale(c(2.0))).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12 * lhs.max_abs());
        // idempotence and orthogonality
        let p1 = hermite_projection(1, lam, 1, &a).unwrap();
        let p11 = hermite_projection(1, lam, 1, &p1).unwrap();
        assert!(p11.rel_l2_error(&p1).unwrap() < 1e-6);
        let p3 = hermite_projection(1, lam, 3, &a).unwrap();
        assert!(p1.inner(&p3).unwrap().norm() <= 1e-6 * p1.l2_norm() * p3.l2_norm());
    }

    #[test]
    fn reconstruction_of_single_mode_and_offset_gaussian() {
        let grid = Grid::layer(1, 64, 10.0).unwrap();
        let g = laguerre_layer(&grid, 2, 1.0).scale(c(0.7));
        let (_, err) = reconstruct(1, 1.0, &g, 2).unwrap();
        assert!(err < 1e-6);
        let off = gaussian(&grid, &[1.0, -0.5], 2.0);
        let sweep = reconstruct_sweep(1, 1.0, &off, 40).unwrap();
        assert!(sweep.errors.windows(2).all(|w| w[1] <= w[0] + 1e-13));
        assert!(sweep.errors[0] >= sweep.errors[10]);
        assert!(*sweep.errors.last().unwrap() < 1e-4, "{:?}", sweep.errors.last());
    }

    fn eigen_residual(nx: usize, k: usize) -> f64 {
        let grid = Grid::layer(1, nx, 10.0).unwrap();
        let g = gaussian(&grid, &[0.8, -0.3], 2.0);
        let p = hermite_projection(1, 1.0, k, &g).unwrap();
        let lp = twisted_laplacian_apply(1, 1.0, &p).unwrap();
        lp.sub(&p.scale(c((2 * k + 1) as f64))).unwrap().l2_norm() / p.l2_norm()
    }

    #[test]
    fn projections_are_eigenfunctions_second_order() {
        for k in 0..=3 {
            let (r1, r2) = (eigen_residual(64, k), eigen_residual(128, k));
            assert!((r1 / r2).log2() >= 1.8, "k={k} {r1} {r2}");
        }
    }

    #[test]
    fn projection_via_a_reduces_to_hermite_projection() {
        let s = MetivierStructure::heisenberg(1);
        let grid = Grid::layer(1, 32, 8.0).unwrap();
        let g = gaussian(&grid, &[0.5, 0.5], 2.0);
        for k in 0..3 {
            let a = projection_via_a(&s, &[1.0], 1.3, k, &g).unwrap();
            let b = hermite_projection(1, 1.3, k, &g).unwrap();
            assert!(a.sub(&b).unwrap().max_abs() < 1e-12 * b.max_abs());
        }
        // η = −1 flips the twist; it matches the conjugated projection of conj(g)
        let gc = g.conj();
        let a = projection_via_a(&s, &[-1.0], 1.3, 1, &g).unwrap();
        let b = hermite_projection(1, 1.3, 1, &gc).unwrap().conj();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12 * b.max_abs());
    }

    #[test]
    fn quaternionic_projection_smoke() {
        let s = MetivierStructure::quaternionic();
        let eta = [0.6, 0.0, 0.8];
        let j = s.j_of(&eta).unwrap();
        let mut res = vec![];
        for nx in [8usize, 14] {
            let grid = Grid::layer(2, nx, 5.0).unwrap();
            let g = gaussian(&grid, &[0.3, 0.0, -0.2, 0.1], 2.0);
            let p = projection_via_a(&s, &eta, 1.0, 0, &g).unwrap();
            let lp = skew_laplacian_apply(&j, &p).unwrap();
            res.push(lp.sub(&p.scale(c(2.0))).unwrap().l2_norm() / p.l2_norm());
        }
        assert!(res[1] < res[0] && res[1] < 0.1, "{res:?}");
    }

    #[test]
    fn conjugation_consistency_quaternionic() {
        // Δ^{λη}(g∘A) = (L^λ g)∘A for g(z) = e^{−|z−z0|²/2}, with L^λ g in closed form.
        let s = MetivierStructure::quaternionic();
        let eta = [0.0, 0.6, -0.8];
        let f = factorize_eta(&s, &eta).unwrap();
        let lam = 1.0;
        let z0 = [0.4, -0.3, 0.2, 0.1];
        let lg = |z: &[f64]| -> Complex64 {
            let d: Vec<f64> = z.iter().zip(&z0).map(|(a, b)| a - b).collect();
            let r2: f64 = d.iter().map(|v| v * v).sum();
            let g = (-r2 / 2.0).exp();
            let lap = (r2 - 4.0) * g;
            // Σ_j (z_{n+j} ∂_j − z_j ∂_{n+j}) g with ∂_i g = −d_i g
            let rot = (z[2] * -d[0] - z[0] * -d[2]) + (z[3] * -d[1] - z[1] * -d[3]);
            let zz: f64 = z.iter().map(|v| v * v).sum();
            Complex64::new(-lap + 0.25 * lam * lam * zz * g, -lam * rot * g)
        };
        let mut errs = vec![];
        for nx in [16usize, 32] {
            let grid = Grid::layer(2, nx, 6.0).unwrap();
            let az = |x: &[f64]| -> Vec<f64> { (0..4).map(|r| (0..4).map(|cc| f.a[(r, cc)] * x[cc]).sum()).collect() };
            let ga = GridFunction::from_fn(&grid, |x, _| {
                let y = az(x);
                c((-y.iter().zip(&z0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0).exp())
            });
            let lhs = skew_laplacian_apply(&(&f.j_eta * lam), &ga).unwrap();
            let rhs = GridFunction::from_fn(&grid, |x, _| lg(&az(x)));
            errs.push(lhs.rel_l2_error(&rhs).unwrap());
        }
        assert!((errs[0] / errs[1]).log2() >= 1.8, "{errs:?}");
    }

    #[test]
    fn twisted_young_bound() {
        let grid = Grid::layer(1, 32, 6.0).unwrap();
        let f = gaussian(&grid, &[0.5, 0.0], 1.0);
        let g = GridFunction::from_fn(&grid, |x, _| Complex64::new(x[0].cos(), x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp());
        for lam in [0.5, 1.0, 3.0] {
            let out = twisted_convolution(1, lam, &f, &g).unwrap();
            let l1 = crate::fields::lp_norm(&f, 1.0).unwrap();
            assert!(out.l2_norm() <= l1 * g.l2_norm() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn mu_twisted_measure_and_group_compatibility() {
        let s = MetivierStructure::heisenberg(1);
        let lay = Grid::layer(1, 16, 4.0).unwrap();
        let f = gaussian(&lay, &[0.2, 0.0], 1.0);
        let g = gaussian(&lay, &[0.0, -0.3], 1.5);
        let a = mu_twisted_convolution(&s, &[1.0], &f, &g).unwrap();
        let b = twisted_convolution(1, 1.0, &f, &g).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-14);
        let a2 = mu_twisted_convolution(&s, &[2.0], &f, &g).unwrap();
        let b2 = twisted_convolution(1, 2.0, &f, &g).unwrap();
        assert!(a2.sub(&b2.scale(c(2.0))).unwrap().max_abs() < 1e-14);
        assert!(mu_twisted_convolution(&s, &[0.0], &f, &g).is_err());

        // (f∗g)^μ = f^μ ×_μ g^μ at |μ| = 1; hx²/2 is a multiple of hu so every
        // centre argument of the group convolution is a node.
        let grid = Grid::group(1, 1, 16, 48, 4.0, 3.0).unwrap();
        assert_eq!(grid.hx() * grid.hx() / 2.0, grid.hu());
        let ff = GridFunction::from_fn(&grid, |x, u| c((-2.0 * ((x[0] - 0.3).powi(2) + x[1] * x[1]) - 2.0 * u[0] * u[0]).exp()));
        let gg = GridFunction::from_fn(&grid, |x, u| Complex64::new(1.0, 0.5 * x[1]) * (-2.0 * (x[0] * x[0] + (x[1] + 0.2).powi(2)) - 2.0 * (u[0] - 0.2).powi(2)).exp());
        let conv = group_convolution(&s, &ff, &gg).unwrap();
        eprintln!("outside fraction {}", conv.outside_fraction);
        let mu = [1.0];
        let lhs = fourier_u_at(&conv.value, &mu).unwrap();
        let fl = GridFunction::from_data(&lay, fourier_u_at(&ff, &mu).unwrap()).unwrap();
        let gl = GridFunction::from_data(&lay, fourier_u_at(&gg, &mu).unwrap()).unwrap();
        let rhs = mu_twisted_convolution(&s, &mu, &fl, &gl).unwrap();
        let lhs = GridFunction::from_data(&lay, lhs).unwrap();
        assert!(lhs.rel_l2_error(&rhs).unwrap() <= 1e-3, "{}", lhs.rel_l2_error(&rhs).unwrap());
    }
}
