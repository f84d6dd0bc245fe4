//! Métivier group data and exact group arithmetic in exponential coordinates.
//!
//! A point is `(x, u) ∈ R^{2n} × R^m`, the product is
//! `(x,u)·(y,v) = (x+y, u+v+½[x,y])` with `[x,y]_k = ⟨x, J_k y⟩`, and the dilations
//! are `δ_t(x,u) = (tx, t²u)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{param, Error, Result};
use crate::fields::{Domain, GridFunction};
use crate::quad::sphere_samples;

/// Default non-degeneracy floor for `|det J_η|`.
pub const EPS_ND: f64 = 1e-8;
/// Default number of sphere samples used to certify non-degeneracy.
pub const N_SPHERE_SAMPLES: usize = 4096;

/// The standard symplectic matrix `J_{2n} = [[0, I], [-I, 0]]`.
pub fn standard_symplectic(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Result of sampling `|det J_η|` over the unit sphere of the centre.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetCertificate {
    /// Smallest sampled `|det J_η|`.
    pub min_abs_det: f64,
    /// Largest sampled `|det J_η|`.
    pub max_abs_det: f64,
    /// Sample attaining the minimum.
    pub argmin: Vec<f64>,
    /// Sample attaining the maximum.
    pub argmax: Vec<f64>,
    /// Number of samples.
    pub samples: usize,
}

/// Group data `(n, m, J_1..J_m)` with a sampled non-degeneracy certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetivierStructure {
    /// Half-dimension of the first layer.
    pub n: usize,
    /// Centre dimension.
    pub m: usize,
    /// Skew structure matrices, each `2n × 2n`.
    pub j: Vec<DMatrix<f64>>,
    /// Floor for `|det J_η|`.
    pub eps_nd: f64,
    /// Samples used for the certificate.
    pub n_sphere_samples: usize,
    /// Certificate computed at construction.
    pub certificate: DetCertificate,
}

impl MetivierStructure {
    /// Validates dimensions, exact skew-symmetry and sampled non-degeneracy.
    pub fn new(n: usize, m: usize, j: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::with_options(n, m, j, EPS_ND, N_SPHERE_SAMPLES)
    }

    /// As [`MetivierStructure::new`] with an explicit floor and sample count.
    pub fn with_options(
        n: usize,
        m: usize,
        j: Vec<DMatrix<f64>>,
        eps_nd: f64,
        n_sphere_samples: usize,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(param("n, m", "must be positive"));
        }
        if j.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: j.len(),
            });
        }
        for (idx, jk) in j.iter().enumerate() {
            if jk.nrows() != 2 * n || jk.ncols() != 2 * n {
                return Err(Error::Dimension {
                    expected: 2 * n,
                    got: jk.nrows(),
                });
            }
            for r in 0..2 * n {
                for c in 0..2 * n {
                    if jk[(r, c)] + jk[(c, r)] != 0.0 {
                        return Err(Error::NotSkew { index: idx, row: r, col: c });
                    }
                }
            }
        }
        if n_sphere_samples == 0 {
            return Err(param("n_sphere_samples", "must be positive"));
        }
        let mut s = MetivierStructure {
            n,
            m,
            j,
            eps_nd,
            n_sphere_samples,
            certificate: DetCertificate {
                min_abs_det: 0.0,
                max_abs_det: 0.0,
                argmin: vec![],
                argmax: vec![],
                samples: 0,
            },
        };
        s.certificate = s.det_scan(n_sphere_samples)?;
        Ok(s)
    }

    /// Heisenberg group `H^n` with `J_1 = J_{2n}`.
    pub fn heisenberg(n: usize) -> Self {
        Self::new(n, 1, vec![standard_symplectic(n)]).expect("the Heisenberg structure is valid")
    }

    /// Quaternionic H-type group (`2n = 4`, `m = 3`) with left multiplication by
    /// `i`, `j`, `k` on `H ≅ R^4`.
    pub fn quaternionic() -> Self {
        let qi = [
            [0.0, -1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 1.0, 0.0],
        ];
        let qj = [
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
        ];
        let qk = [
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ];
        let mk = |a: [[f64; 4]; 4]| DMatrix::from_fn(4, 4, |r, c| a[r][c]);
        Self::new(2, 3, vec![mk(qi), mk(qj), mk(qk)]).expect("the quaternionic structure is valid")
    }

    /// Homogeneous dimension `Q = 2n + 2m`.
    pub fn q(&self) -> usize {
        2 * self.n + 2 * self.m
    }

    /// `J_μ = Σ_k μ_k J_k`.
    pub fn j_of(&self, mu: &[f64]) -> Result<DMatrix<f64>> {
        if mu.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                got: mu.len(),
            });
        }
        let mut out = DMatrix::zeros(2 * self.n, 2 * self.n);
        for (c, jk) in mu.iter().zip(&self.j) {
            out += jk * *c;
        }
        Ok(out)
    }

    /// Samples `|det J_η|` at `samples` deterministic points of the unit sphere and
    /// fails with a degeneracy error carrying `η` when one falls below the floor.
    pub fn det_scan(&self, samples: usize) -> Result<DetCertificate> {
        if samples == 0 {
            return Err(param("n_samples", "must be at least 1"));
        }
        let mut cert = DetCertificate {
            min_abs_det: f64::INFINITY,
            max_abs_det: 0.0,
            argmin: vec![],
            argmax: vec![],
            samples,
        };
        for eta in sphere_samples(self.m, samples) {
            let d = self.j_of(&eta)?.determinant().abs();
            if d < self.eps_nd {
                return Err(Error::Degenerate {
                    det: d,
                    floor: self.eps_nd,
                    eta,
                });
            }
            if d < cert.min_abs_det {
                cert.min_abs_det = d;
                cert.argmin = eta.clone();
            }
            if d > cert.max_abs_det {
                cert.max_abs_det = d;
                cert.argmax = eta;
            }
        }
        Ok(cert)
    }

    /// Parses `{"n": int, "m": int, "J": [[row-major 2n×2n floats], ...]}`; nested
    /// row lists are accepted as well.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let get_usize = |k: &str| -> Result<usize> {
            v.get(k)
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .ok_or_else(|| Error::Parse(format!("missing or invalid field \"{k}\"")))
        };
        let n = get_usize("n")?;
        let m = get_usize("m")?;
        let js = v
            .get("J")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("missing array field \"J\"".into()))?;
        let d = 2 * n;
        let mut mats = Vec::with_capacity(js.len());
        for (idx, jv) in js.iter().enumerate() {
            let mut flat = Vec::with_capacity(d * d);
            flatten_numbers(jv, &mut flat)
                .map_err(|e| Error::Parse(format!("J[{idx}]: {e}")))?;
            if flat.len() != d * d {
                return Err(Error::Parse(format!(
                    "J[{idx}] has {} entries, expected {}",
                    flat.len(),
                    d * d
                )));
            }
            mats.push(DMatrix::from_row_slice(d, d, &flat));
        }
        Self::new(n, m, mats)
    }

    /// Serializes to the configuration format read by [`MetivierStructure::from_json`].
    pub fn to_json(&self) -> String {
        let js: Vec<Vec<f64>> = self
            .j
            .iter()
            .map(|jk| {
                let d = jk.nrows();
                (0..d * d).map(|i| jk[(i / d, i % d)]).collect()
            })
            .collect();
        serde_json::json!({"n": self.n, "m": self.m, "J": js}).to_string()
    }

    fn check(&self, a: &GroupPoint) -> Result<()> {
        if a.x.len() != 2 * self.n {
            return Err(Error::Dimension {
                expected: 2 * self.n,
                got: a.x.len(),
            });
        }
        if a.u.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                got: a.u.len(),
            });
        }
        Ok(())
    }

    /// `[x, y]_k = ⟨x, J_k y⟩`, summed over the upper triangle so that
    /// `[x, x] = 0` holds exactly in floating point.
    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.j
            .iter()
            .map(|jk| {
                let d = jk.nrows();
                let mut s = 0.0;
                for r in 0..d {
                    for c in r + 1..d {
                        let a = jk[(r, c)];
                        if a != 0.0 {
                            s += a * (x[r] * y[c] - x[c] * y[r]);
                        }
                    }
                }
                s
            })
            .collect()
    }
}

fn flatten_numbers(v: &Value, out: &mut Vec<f64>) -> std::result::Result<(), String> {
    match v {
        Value::Number(x) => {
            out.push(x.as_f64().ok_or("non-finite number")?);
            Ok(())
        }
        Value::Array(a) => a.iter().try_for_each(|e| flatten_numbers(e, out)),
        _ => Err("expected numbers".into()),
    }
}

/// A group element `(x, u)` in exponential coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    /// First-layer coordinates (length `2n`).
    pub x: Vec<f64>,
    /// Centre coordinates (length `m`).
    pub u: Vec<f64>,
}

impl GroupPoint {
    /// Builds a point, rejecting non-finite components.
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if x.iter().chain(&u).any(|c| !c.is_finite()) {
            return Err(param("point", "components must be finite"));
        }
        Ok(GroupPoint { x, u })
    }

    /// The identity of a structure.
    pub fn identity(s: &MetivierStructure) -> Self {
        GroupPoint {
            x: vec![0.0; 2 * s.n],
            u: vec![0.0; s.m],
        }
    }
}

/// Group product `(x+y, u+v+½[x,y])`.
pub fn multiply(s: &MetivierStructure, a: &GroupPoint, b: &GroupPoint) -> Result<GroupPoint> {
    s.check(a)?;
    s.check(b)?;
    let br = s.bracket(&a.x, &b.x);
    Ok(GroupPoint {
        x: a.x.iter().zip(&b.x).map(|(p, q)| p + q).collect(),
        u: a.u.iter().zip(&b.u).zip(&br).map(|((p, q), c)| p + q + 0.5 * c).collect(),
    })
}

/// Inverse `(-x, -u)`.
pub fn inverse(a: &GroupPoint) -> GroupPoint {
    GroupPoint {
        x: a.x.iter().map(|c| -c).collect(),
        u: a.u.iter().map(|c| -c).collect(),
    }
}

/// Dilation `δ_t(x, u) = (tx, t²u)`.
pub fn dilate(t: f64, a: &GroupPoint) -> Result<GroupPoint> {
    if !(t > 0.0) {
        return Err(param("t", "dilation factor must be positive"));
    }
    Ok(GroupPoint {
        x: a.x.iter().map(|c| t * c).collect(),
        u: a.u.iter().map(|c| t * t * c).collect(),
    })
}

/// Homogeneous norm `(|x|⁴/16 + |u|²)^{1/4}`.
pub fn homogeneous_norm(a: &GroupPoint) -> f64 {
    let x2: f64 = a.x.iter().map(|c| c * c).sum();
    let u2: f64 = a.u.iter().map(|c| c * c).sum();
    (x2 * x2 / 16.0 + u2).powf(0.25)
}

/// Left-invariant distance `|a^{-1}·b|`.
pub fn left_distance(s: &MetivierStructure, a: &GroupPoint, b: &GroupPoint) -> Result<f64> {
    Ok(homogeneous_norm(&multiply(s, &inverse(a), b)?))
}

/// Output of [`group_convolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionOutput {
    /// The convolution on the common grid.
    pub value: GridFunction,
    /// Fraction of the `|g|`-weighted evaluations whose translated argument left
    /// the box (a warning is due when this is not negligible).
    pub outside_fraction: f64,
}

/// Group convolution `f∗g(x,u) = ∫ f((x,u)·(y,v)^{-1}) g(y,v) dy dv`.
///
/// The first-layer part of the argument `x - y` stays on the node lattice; the
/// centre part `u - v - ½[x,y]` is sampled by multilinear interpolation. Values
/// outside the box are zero.
pub fn group_convolution(s: &MetivierStructure, f: &GridFunction, g: &GridFunction) -> Result<ConvolutionOutput> {
    f.grid.check_same(&g.grid)?;
    let grid = &f.grid;
    if grid.domain != Domain::Group || grid.n != s.n || grid.m != s.m {
        return Err(Error::GridMismatch("group convolution needs a group grid of the structure".into()));
    }
    let d = 2 * s.n;
    let half = (grid.nx / 2) as isize;
    let mut out = GridFunction::zeros(grid);
    let (xl, ul) = (grid.x_len(), grid.u_len());
    let mut xm = vec![0usize; d];
    let mut ym = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut u = vec![0.0; s.m];
    let mut v = vec![0.0; s.m];
    let mut arg = vec![0.0; s.m];
    let mut diff = vec![0isize; d];
    let vol = grid.cell_volume();
    let (mut outside, mut total) = (0.0, 0.0);
    let gabs: Vec<f64> = g.data.iter().map(|c| c.norm()).collect();
    for xi in 0..xl {
        grid.x_multi(xi, &mut xm);
        grid.x_coords(xi, &mut x);
        for yi in 0..xl {
            let g_row = &g.data[yi * ul..(yi + 1) * ul];
            if g_row.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
                continue;
            }
            grid.x_multi(yi, &mut ym);
            grid.x_coords(yi, &mut y);
            let row_mass: f64 = gabs[yi * ul..(yi + 1) * ul].iter().sum();
            for a in 0..d {
                diff[a] = xm[a] as isize - ym[a] as isize + half;
            }
            let br = s.bracket(&x, &y);
            let fx = grid.x_flat(&diff);
            total += row_mass * ul as f64;
            let Some(fx) = fx else {
                outside += row_mass * ul as f64;
                continue;
            };
            for ui in 0..ul {
                grid.u_coords(ui, &mut u);
                let mut acc = Complex64::new(0.0, 0.0);
                for vi in 0..ul {
                    let gv = g_row[vi];
                    if gv == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    grid.u_coords(vi, &mut v);
                    let mut inside = true;
                    for k in 0..s.m {
                        arg[k] = u[k] - v[k] - 0.5 * br[k];
                        if arg[k].abs() > grid.u_extent {
                            inside = false;
                        }
                    }
                    if !inside {
                        outside += gabs[yi * ul + vi];
                        continue;
                    }
                    acc += f.sample_u_linear(fx, &arg) * gv;
                }
                out.data[xi * ul + ui] += acc * vol;
            }
        }
    }
    Ok(ConvolutionOutput {
        value: out,
        outside_fraction: if total > 0.0 { outside / total } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, s: &MetivierStructure, scale: f64) -> GroupPoint {
        GroupPoint {
            x: (0..2 * s.n).map(|_| rng.gen_range(-scale..scale)).collect(),
            u: (0..s.m).map(|_| rng.gen_range(-scale..scale)).collect(),
        }
    }

    fn structures() -> Vec<MetivierStructure> {
        vec![
            MetivierStructure::heisenberg(1),
            MetivierStructure::heisenberg(2),
            MetivierStructure::quaternionic(),
        ]
    }

    #[test]
    fn heisenberg_product_example() {
        let s = MetivierStructure::heisenberg(1);
        let a = GroupPoint::new(vec![1.0, 0.0], vec![0.0]).unwrap();
        let b = GroupPoint::new(vec![0.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(multiply(&s, &a, &b).unwrap(), GroupPoint::new(vec![1.0, 1.0], vec![0.5]).unwrap());
        let p = GroupPoint::new(vec![0.3, -2.0], vec![1.5]).unwrap();
        assert_eq!(multiply(&s, &p, &GroupPoint::identity(&s)).unwrap(), p);
        assert_eq!(multiply(&s, &p, &inverse(&p)).unwrap(), GroupPoint::identity(&s));
        assert!(multiply(&s, &p, &GroupPoint::new(vec![1.0], vec![0.0]).unwrap()).is_err());
        assert!(GroupPoint::new(vec![f64::NAN, 0.0], vec![0.0]).is_err());
    }

    #[test]
    fn dilation_examples_and_automorphism() {
        let a = GroupPoint::new(vec![1.0, 0.0], vec![1.0]).unwrap();
        assert_eq!(dilate(2.0, &a).unwrap(), GroupPoint::new(vec![2.0, 0.0], vec![4.0]).unwrap());
        assert_eq!(dilate(1.0, &a).unwrap(), a);
        assert!(dilate(0.0, &a).is_err());
        assert!(dilate(-1.0, &a).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in structures() {
            for _ in 0..100 {
                let (p, q) = (random_point(&mut rng, &s, 2.0), random_point(&mut rng, &s, 2.0));
                let t = rng.gen_range(0.2..3.0);
                let lhs = dilate(t, &multiply(&s, &p, &q).unwrap()).unwrap();
                let rhs = multiply(&s, &dilate(t, &p).unwrap(), &dilate(t, &q).unwrap()).unwrap();
                for (a, b) in lhs.x.iter().chain(&lhs.u).zip(rhs.x.iter().chain(&rhs.u)) {
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
                let back = dilate(t, &dilate(1.0 / t, &p).unwrap()).unwrap();
                for (a, b) in back.x.iter().chain(&back.u).zip(p.x.iter().chain(&p.u)) {
                    assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn associativity_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in structures() {
            for _ in 0..1000 {
                let a = random_point(&mut rng, &s, 3.0);
                let b = random_point(&mut rng, &s, 3.0);
                let c = random_point(&mut rng, &s, 3.0);
                let l = multiply(&s, &multiply(&s, &a, &b).unwrap(), &c).unwrap();
                let r = multiply(&s, &a, &multiply(&s, &b, &c).unwrap()).unwrap();
                for (p, q) in l.x.iter().chain(&l.u).zip(r.x.iter().chain(&r.u)) {
                    assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn norm_examples_homogeneity_and_triangle() {
        let s = MetivierStructure::heisenberg(1);
        assert_eq!(homogeneous_norm(&GroupPoint::identity(&s)), 0.0);
        assert!((homogeneous_norm(&GroupPoint::new(vec![2.0, 0.0], vec![0.0]).unwrap()) - 1.0).abs() < 1e-15);
        assert!((homogeneous_norm(&GroupPoint::new(vec![0.0, 0.0], vec![1.0]).unwrap()) - 1.0).abs() < 1e-15);
        let o = GroupPoint::identity(&s);
        let e1 = GroupPoint::new(vec![1.0, 0.0], vec![0.0]).unwrap();
        assert!((left_distance(&s, &o, &e1).unwrap() - (1.0f64 / 16.0).powf(0.25)).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in structures() {
            for _ in 0..10_000 {
                let a = random_point(&mut rng, &s, 2.0);
                let b = random_point(&mut rng, &s, 2.0);
                let ab = homogeneous_norm(&multiply(&s, &a, &b).unwrap());
                assert!(ab <= homogeneous_norm(&a) + homogeneous_norm(&b) + 1e-12);
            }
            for _ in 0..100 {
                let a = random_point(&mut rng, &s, 2.0);
                let t = rng.gen_range(0.1..5.0);
                let lhs = homogeneous_norm(&dilate(t, &a).unwrap());
                assert!((lhs - t * homogeneous_norm(&a)).abs() < 1e-12 * lhs.max(1.0));
            }
        }
    }

    #[test]
    fn left_invariance_of_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for s in structures() {
            for _ in 0..100 {
                let g = random_point(&mut rng, &s, 2.0);
                let a = random_point(&mut rng, &s, 2.0);
                let b = random_point(&mut rng, &s, 2.0);
                assert_eq!(left_distance(&s, &a, &a).unwrap(), 0.0);
                let d0 = left_distance(&s, &a, &b).unwrap();
                let d1 = left_distance(&s, &multiply(&s, &g, &a).unwrap(), &multiply(&s, &g, &b).unwrap()).unwrap();
                assert!((d0 - d1).abs() <= 1e-12 * d0.max(1.0));
            }
        }
    }

    #[test]
    fn builtin_structures() {
        let h = MetivierStructure::heisenberg(1);
        assert_eq!(h.q(), 4);
        assert_eq!(h.certificate.min_abs_det, 1.0);
        let q = MetivierStructure::quaternionic();
        assert_eq!(q.q(), 10);
        for a in 0..3 {
            let sq = &q.j[a] * &q.j[a];
            assert_eq!(sq, -DMatrix::<f64>::identity(4, 4));
            for b in 0..3 {
                if a != b {
                    assert_eq!(&q.j[a] * &q.j[b] + &q.j[b] * &q.j[a], DMatrix::zeros(4, 4));
                }
            }
        }
        assert!((q.certificate.min_abs_det - 1.0).abs() < 1e-12);
        assert!((q.certificate.max_abs_det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_config_roundtrip_and_rejection() {
        let q = MetivierStructure::quaternionic();
        let back = MetivierStructure::from_json(&q.to_json()).unwrap();
        assert_eq!(back.j, q.j);
        let nested = r#"{"n":1,"m":1,"J":[[[0,1],[-1,0]]]}"#;
        assert_eq!(MetivierStructure::from_json(nested).unwrap().j, MetivierStructure::heisenberg(1).j);
        let bad = r#"{"n":1,"m":1,"J":[[1,1,-1,0]]}"#;
        let e = MetivierStructure::from_json(bad).unwrap_err();
        assert_eq!(e.to_string(), "J[0] not skew at (0,0)");
        let bad2 = r#"{"n":1,"m":1,"J":[[0,1,-2,0]]}"#;
        assert_eq!(MetivierStructure::from_json(bad2).unwrap_err().to_string(), "J[0] not skew at (0,1)");
        let degenerate = r#"{"n":2,"m":1,"J":[[0,1,0,0, -1,0,0,0, 0,0,0,0, 0,0,0,0]]}"#;
        assert!(matches!(MetivierStructure::from_json(degenerate), Err(Error::Degenerate { .. })));
        assert!(MetivierStructure::from_json(r#"{"n":1,"m":1}"#).is_err());
        assert!(MetivierStructure::from_json(r#"{"n":1,"m":1,"J":[[0,1,-1]]}"#).is_err());
    }

    fn gauss(grid: &Grid, cx: f64, cy: f64, cu: f64, w: f64) -> GridFunction {
        GridFunction::from_fn(grid, |x, u| {
            Complex64::new(
                (-((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / w - (u[0] - cu).powi(2) / w).exp(),
                0.0,
            )
        })
    }

    #[test]
    fn convolution_zero_and_linearity() {
        let s = MetivierStructure::heisenberg(1);
        let grid = Grid::group(1, 1, 8, 8, 3.0, 4.0).unwrap();
        let f1 = gauss(&grid, 0.0, 0.0, 0.0, 1.0);
        let f2 = gauss(&grid, 0.5, -0.5, 0.3, 0.7);
        let g = gauss(&grid, -0.3, 0.2, 0.0, 0.8);
        let zero = group_convolution(&s, &f1, &GridFunction::zeros(&grid)).unwrap();
        assert_eq!(zero.value.max_abs(), 0.0);
        let lhs = group_convolution(&s, &f1.add(&f2).unwrap(), &g).unwrap().value;
        let rhs = group_convolution(&s, &f1, &g).unwrap().value.add(&group_convolution(&s, &f2, &g).unwrap().value).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12 * lhs.max_abs());
    }

    #[test]
    fn haar_jacobian_of_dilation() {
        // ∫ |f∘δ_{1/t}| = t^Q ∫ |f| for a bump well inside the box.
        let q = MetivierStructure::heisenberg(1).q() as i32;
        let grid = Grid::group(1, 1, 64, 64, 8.0, 16.0).unwrap();
        let bump = |x: &[f64], u: &[f64]| (-(x[0] * x[0] + x[1] * x[1]) - u[0] * u[0]).exp();
        let base = GridFunction::from_fn(&grid, |x, u| Complex64::new(bump(x, u), 0.0));
        let sum = |f: &GridFunction| f.data.iter().map(|c| c.norm()).sum::<f64>() * grid.cell_volume();
        for t in [1.5f64, 2.0] {
            let d = GridFunction::from_fn(&grid, |x, u| Complex64::new(bump(&[x[0] / t, x[1] / t], &[u[0] / (t * t)]), 0.0));
            let ratio = sum(&d) / sum(&base);
            assert!((ratio - t.powi(q)).abs() < 1e-6 * t.powi(q), "t={t} ratio={ratio}");
        }
    }
}
