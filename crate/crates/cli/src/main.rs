//! `metivier`: command-line front end for group ingestion, kernel evaluation,
//! spectral experiments and threshold tables. Tables are written as CSV (to
//! `--out` or standard output); grid functions use the JSON-header binary format
//! of the fields module. Validation errors print one line starting with `ERR:`
//! and exit with status 2.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metivier::bilinear::{bilinear_kernel, bilinear_riesz_apply, bilinear_kernel_decay_fit, gamma_decay_check, gamma_row_with_error};
use metivier::fields::{read_grid, write_grid, Grid, GridFunction};
use metivier::group::{GroupPoint, MetivierStructure};
use metivier::norms::{bilinear_region_table, region_rows_csv, riesz_threshold_scan, TrialFamily, TrialSpec};
use metivier::quad::sphere_samples;
use metivier::spectral::{
    inversion_check, kernel_decay_fit, kernel_scaling_check, restriction_scaling_fit, riesz_apply, riesz_kernel,
    DyadicCutoff, GaussianTrial, MultiplierProfile,
};
use metivier::symplectic::factorize_eta;

type CliResult<T> = Result<T, String>;

fn lib<T>(r: metivier::error::Result<T>) -> CliResult<T> {
    r.map_err(|e| e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "metivier", version, about = "Riesz means and bilinear Riesz means on Métivier groups")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Group: `heisenberg`, `quaternionic`, or a path to a JSON structure file.
    #[arg(long, alias = "builtin", global = true, default_value = "heisenberg")]
    group: String,
    /// Half-dimension `n` of the built-in Heisenberg group.
    #[arg(long, global = true, default_value_t = 1)]
    n: usize,
    /// Base seed of every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Laguerre truncation `K` of the spectral density (per-command default when absent).
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Order of the sphere rule for the central directions.
    #[arg(long, global = true, default_value_t = 6)]
    sphere_order: usize,
    /// Gauss order of the radial (λ) rules.
    #[arg(long, global = true, default_value_t = 16)]
    radial_order: usize,
    /// Grid points `nx,nu` per axis (per-command default when absent).
    #[arg(long, global = true, value_parser = parse_usize_pair)]
    grid: Option<(usize, usize)>,
    /// Half-widths `ex,eu` of the grid box (per-command default when absent).
    #[arg(long, global = true, value_parser = parse_f64_pair)]
    extent: Option<(f64, f64)>,
    /// Output path (standard output when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rows whose error column exceeds this value are reported on standard error.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Also write `<out>.plot.py`, a plotting script that reads the CSV.
    #[arg(long, global = true)]
    emit_plotscript: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Group structure commands.
    #[command(subcommand)]
    Group(GroupCmd),
    /// Symplectic factorization of `J_η` over deterministic unit directions.
    FactorizeScan {
        /// Number of directions.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Riesz kernel commands.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Riesz means of grid functions.
    #[command(subcommand)]
    Riesz(RieszCmd),
    /// Bilinear Riesz means.
    #[command(subcommand)]
    Bilinear(BilinearCmd),
    /// Restriction exponent fit for a Gaussian trial.
    #[command(subcommand)]
    Restriction(RestrictionCmd),
    /// Reconstruction of a Gaussian trial from its spectral projections.
    Invert {
        /// Gauss–Legendre nodes on the spectral band.
        #[arg(long, default_value_t = 48)]
        nodes: usize,
        /// Gaussian widths `a,b` of the trial.
        #[arg(long, value_parser = parse_f64_pair, default_value = "0.25,0.5")]
        trial: (f64, f64),
    },
    /// Empirical operator-norm lower bounds.
    #[command(subcommand)]
    Norms(NormsCmd),
    /// Fourier coefficients of the bilinear dyadic multipliers.
    #[command(subcommand)]
    Gamma(GammaCmd),
}

#[derive(Subcommand, Debug)]
enum GroupCmd {
    /// Prints n, m, Q, the matrices J_k and the non-degeneracy certificate.
    Inspect,
}

#[derive(Subcommand, Debug)]
enum KernelCmd {
    /// `S_R^δ` at the points of a CSV file (columns x_1..x_2n, u_1..u_m).
    Eval {
        /// Riesz order δ.
        #[arg(long)]
        delta: f64,
        /// Radius R.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Points file.
        #[arg(long)]
        points: PathBuf,
    },
    /// `S_R^δ(x,u)` against `R^{Q/2} S_1^δ(√R x, R u)` at the points of a CSV file.
    Scaling {
        /// Riesz order δ.
        #[arg(long)]
        delta: f64,
        /// Radius R.
        #[arg(long)]
        r: f64,
        /// Points file.
        #[arg(long)]
        points: PathBuf,
    },
    /// `|S_1^δ|` along the dilation orbit of a ray base point and the fitted slope.
    #[command(alias = "decay-fit")]
    Decay {
        /// Riesz order δ.
        #[arg(long, default_value_t = 4.0)]
        delta: f64,
        /// Decay order N (needs δ > 2N − 1).
        #[arg(long = "order-n", default_value_t = 2)]
        order_n: usize,
        /// Base point `x_1,..,x_2n,u_1,..,u_m` of the ray.
        #[arg(long, default_value = "0,0,1")]
        ray: String,
        /// Homogeneous radii of the orbit.
        #[arg(long, default_value = "3,3.5,4,4.5,5,6")]
        radii: String,
    },
}

#[derive(Subcommand, Debug)]
enum RieszCmd {
    /// `S_R^δ f` for a grid file (or a sampled Gaussian trial), written as a grid file.
    Apply {
        /// Riesz order δ.
        #[arg(long)]
        delta: f64,
        /// Radius R.
        #[arg(long)]
        r: f64,
        /// Input grid file; a Gaussian trial on `--grid`/`--extent` when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Gaussian widths `a,b` of the trial.
        #[arg(long, value_parser = parse_f64_pair, default_value = "0.25,0.125")]
        trial: (f64, f64),
    },
}

#[derive(Subcommand, Debug)]
enum BilinearCmd {
    /// `S_R^α(f, g)` for two grid files (or sampled Gaussian trials), written as a grid file.
    Apply {
        /// Order α.
        #[arg(long)]
        alpha: f64,
        /// Radius R.
        #[arg(long)]
        r: f64,
        /// First input grid file; a Gaussian trial when absent.
        #[arg(long)]
        f: Option<PathBuf>,
        /// Second input grid file; a Gaussian trial when absent.
        #[arg(long)]
        g: Option<PathBuf>,
        /// Gaussian widths `a,b` of the trials.
        #[arg(long, value_parser = parse_f64_pair, default_value = "0.25,0.125")]
        trial: (f64, f64),
    },
    /// Region, threshold and empirical lower bound per exponent pair.
    Regions {
        /// Exponent pairs `p1,p2;p1,p2;..` (`inf` allowed).
        #[arg(long, default_value = "1,1;2,2;inf,inf;1,inf;2,inf")]
        pairs: String,
        /// Margin above the threshold at which α is tested.
        #[arg(long, default_value_t = 0.5)]
        margin: f64,
        /// Radius R.
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        /// Trials per pair.
        #[arg(long, default_value_t = 2)]
        trials: usize,
        /// Trial family.
        #[arg(long, default_value = "gaussian")]
        family: String,
    },
    /// `S_R^α(ω₁, ω₂)` at point pairs from a CSV file (both points per row).
    Kernel {
        /// Order α.
        #[arg(long)]
        alpha: f64,
        /// Radius R.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Pairs file.
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Decay of the dyadic kernels `K_j^α` by the separated Fourier-series form.
    Decay {
        /// Order α.
        #[arg(long, default_value_t = 8.0)]
        alpha: f64,
        /// Decay order N (needs α > 4N − 1).
        #[arg(long = "order-n", default_value_t = 2)]
        order_n: usize,
        /// Largest dyadic index.
        #[arg(long, default_value_t = 4)]
        jmax: u32,
        /// Fourier truncation of the γ-series.
        #[arg(long, default_value_t = 256)]
        fourier: usize,
        /// Homogeneous radii of the orbits.
        #[arg(long, default_value = "4,5,6,7,8")]
        radii: String,
    },
}

#[derive(Subcommand, Debug)]
enum RestrictionCmd {
    /// `‖P_λ f‖_{p'} / ‖f‖_p` over λ and the fitted slope.
    Fit {
        /// Exponent p.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Values of λ.
        #[arg(long, default_value = "0.25,0.5,1,2,4")]
        lambdas: String,
        /// Gaussian widths `a,b` of the trial.
        #[arg(long, value_parser = parse_f64_pair, default_value = "16,16")]
        trial: (f64, f64),
    },
}

#[derive(Subcommand, Debug)]
enum NormsCmd {
    /// Lower bounds of `‖S_R^δ‖_{p→p}` next to the threshold `Q(1/p − ½) − ½`.
    Scan {
        /// Exponents p.
        #[arg(long, default_value = "2")]
        p: String,
        /// Orders δ.
        #[arg(long, default_value = "4")]
        delta: String,
        /// Radius R.
        #[arg(long, default_value_t = 8.0)]
        r: f64,
        /// Dilation t of the comparison run.
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        t: f64,
        /// Trials.
        #[arg(long, default_value_t = 6)]
        trials: usize,
        /// Trial family.
        #[arg(long, default_value = "gaussian")]
        family: String,
    },
}

#[derive(Subcommand, Debug)]
enum GammaCmd {
    /// `γ_{j,k}^α(s)` on `samples` midpoints of `[0,1]` for `k ≤ kmax`.
    Table {
        /// Order α.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        /// Dyadic index.
        #[arg(long, default_value_t = 0)]
        j: u32,
        /// Number of s-samples.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Normalized maxima `max |γ_{j,k}| (1+k)^{1+δ} 2^{j(α−δ)}` over j.
    Decay {
        /// Order α.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        /// Loss δ.
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Largest dyadic index.
        #[arg(long, default_value_t = 6)]
        jmax: u32,
        /// Number of s-samples.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn parse_usize_pair(s: &str) -> Result<(usize, usize), String> {
    let v: Vec<&str> = s.split(',').collect();
    if v.len() != 2 {
        return Err(format!("expected two comma-separated integers, got {s:?}"));
    }
    let a = v[0].trim().parse().map_err(|_| format!("invalid integer {:?}", v[0]))?;
    let b = v[1].trim().parse().map_err(|_| format!("invalid integer {:?}", v[1]))?;
    Ok((a, b))
}

fn parse_f64_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_f64_list(s)?;
    if v.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got {s:?}"));
    }
    Ok((v[0], v[1]))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let t = s.trim();
    match t {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => t.parse().map_err(|_| format!("invalid number {t:?}")),
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_f64).collect()
}

fn load_group(c: &Common) -> CliResult<MetivierStructure> {
    match c.group.as_str() {
        "heisenberg" => {
            if c.n == 0 {
                return Err("invalid parameter n: must be positive".into());
            }
            Ok(MetivierStructure::heisenberg(c.n))
        }
        "quaternionic" => Ok(MetivierStructure::quaternionic()),
        path => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read group file {path}: {e}"))?;
            lib(MetivierStructure::from_json(&text))
        }
    }
}

fn profile(c: &Common, order: f64, default_k: usize) -> CliResult<MultiplierProfile> {
    let p = MultiplierProfile {
        k_max: c.kmax.unwrap_or(default_k),
        sphere_order: c.sphere_order,
        radial_order: c.radial_order,
        ..MultiplierProfile::new(order)
    };
    lib(p.validate())?;
    Ok(p)
}

fn group_grid(c: &Common, s: &MetivierStructure, nx: usize, nu: usize, ex: f64, eu: f64) -> CliResult<Grid> {
    let (nx, nu) = c.grid.unwrap_or((nx, nu));
    let (ex, eu) = c.extent.unwrap_or((ex, eu));
    lib(Grid::group(s.n, s.m, nx, nu, ex, eu))
}

/// Reads points from CSV rows of numbers; blank lines, `#` comments and a
/// non-numeric header line are skipped.
fn read_rows(path: &Path, width: usize) -> CliResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut rows = vec![];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, String> = line.split(',').map(parse_f64).collect();
        match vals {
            Ok(v) if v.len() == width => rows.push(v),
            Ok(v) => {
                return Err(format!(
                    "{}:{}: expected {width} columns, got {}",
                    path.display(),
                    i + 1,
                    v.len()
                ))
            }
            Err(e) if rows.is_empty() && i == 0 => {
                let _ = e;
            }
            Err(e) => return Err(format!("{}:{}: {e}", path.display(), i + 1)),
        }
    }
    Ok(rows)
}

fn to_point(s: &MetivierStructure, v: &[f64]) -> CliResult<GroupPoint> {
    let d = 2 * s.n;
    lib(GroupPoint::new(v[..d].to_vec(), v[d..d + s.m].to_vec()))
}

fn coord_header(s: &MetivierStructure, suffix: &str) -> Vec<String> {
    let mut h: Vec<String> = (1..=2 * s.n).map(|i| format!("x{i}{suffix}")).collect();
    h.extend((1..=s.m).map(|i| format!("u{i}{suffix}")));
    h
}

/// Shortest round-trip form, in scientific notation outside `[1e-4, 1e6)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

/// A CSV table with the index of its error column.
struct Table {
    header: Vec<String>,
    rows: Vec<String>,
    err_col: Option<usize>,
}

impl Table {
    fn new(header: Vec<String>, err_col: Option<&str>) -> Self {
        let err_col = err_col.and_then(|e| header.iter().position(|h| h == e));
        Table {
            header,
            rows: vec![],
            err_col,
        }
    }

    fn push(&mut self, fields: &[String]) {
        self.rows.push(fields.join(","));
    }

    fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

fn emit(c: &Common, t: &Table) -> CliResult<()> {
    if let Some(col) = t.err_col {
        for (i, r) in t.rows.iter().enumerate() {
            if let Some(v) = r.split(',').nth(col).and_then(|x| x.parse::<f64>().ok()) {
                if v > c.tol {
                    eprintln!("WARN: row {} has {} = {v} above --tol {}", i + 1, t.header[col], c.tol);
                }
            }
        }
    }
    emit_text(c, &t.render())?;
    if c.emit_plotscript {
        let out = c.out.as_ref().ok_or("--emit-plotscript needs --out")?;
        let script = plot_script(out, &t.header);
        let mut p = out.clone().into_os_string();
        p.push(".plot.py");
        fs::write(&p, script).map_err(|e| format!("cannot write plot script: {e}"))?;
    }
    Ok(())
}

fn emit_text(c: &Common, text: &str) -> CliResult<()> {
    match &c.out {
        Some(p) => fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| format!("cannot write to stdout: {e}"))
        }
    }
}

fn plot_script(csv: &Path, header: &[String]) -> String {
    let name = csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "# Plots every numeric column of {name} against the first column.");
    let _ = writeln!(s, "import csv");
    let _ = writeln!(s, "import os");
    let _ = writeln!(s, "import matplotlib.pyplot as plt");
    let _ = writeln!(s);
    let _ = writeln!(s, "HERE = os.path.dirname(os.path.abspath(__file__))");
    let _ = writeln!(s, "with open(os.path.join(HERE, {name:?})) as fh:");
    let _ = writeln!(s, "    rows = list(csv.DictReader(fh))");
    let _ = writeln!(s, "COLUMNS = {:?}", header);
    let _ = writeln!(s, "def num(v):");
    let _ = writeln!(s, "    try:");
    let _ = writeln!(s, "        return float(v)");
    let _ = writeln!(s, "    except ValueError:");
    let _ = writeln!(s, "        return None");
    let _ = writeln!(s, "x = [num(r[COLUMNS[0]]) for r in rows]");
    let _ = writeln!(s, "fig, ax = plt.subplots()");
    let _ = writeln!(s, "for col in COLUMNS[1:]:");
    let _ = writeln!(s, "    y = [num(r[col]) for r in rows]");
    let _ = writeln!(s, "    if all(v is not None for v in y):");
    let _ = writeln!(s, "        ax.plot(x, y, marker='o', label=col)");
    let _ = writeln!(s, "ax.set_xlabel(COLUMNS[0])");
    let _ = writeln!(s, "ax.legend()");
    let _ = writeln!(s, "fig.savefig(os.path.join(HERE, {:?}))", format!("{name}.png"));
    s
}

fn group_inspect(c: &Common) -> CliResult<()> {
    let s = load_group(c)?;
    let mut out = String::new();
    let _ = writeln!(out, "n = {}", s.n);
    let _ = writeln!(out, "m = {}", s.m);
    let _ = writeln!(out, "Q = {}", s.q());
    for (k, j) in s.j.iter().enumerate() {
        let _ = writeln!(out, "J[{k}] =");
        for r in 0..j.nrows() {
            let row: Vec<String> = (0..j.ncols()).map(|cc| num(j[(r, cc)])).collect();
            let _ = writeln!(out, "  [{}]", row.join(", "));
        }
    }
    let cert = &s.certificate;
    let _ = writeln!(out, "certificate.samples = {}", cert.samples);
    let _ = writeln!(out, "certificate.min_abs_det = {}", num(cert.min_abs_det));
    let _ = writeln!(out, "certificate.max_abs_det = {}", num(cert.max_abs_det));
    let _ = writeln!(out, "certificate.argmin = [{}]", join(&cert.argmin));
    let _ = writeln!(out, "certificate.argmax = [{}]", join(&cert.argmax));
    let _ = writeln!(out, "certificate.floor = {}", num(s.eps_nd));
    emit_text(c, &out)
}

fn factorize_scan(c: &Common, samples: usize) -> CliResult<()> {
    let s = load_group(c)?;
    let mut header: Vec<String> = (1..=s.m).map(|i| format!("eta{i}")).collect();
    header.extend((1..=s.n).map(|i| format!("sigma{i}")));
    header.extend(["det_a", "abs_det_j", "residual", "det_rel_err"].map(String::from));
    let mut t = Table::new(header, Some("residual"));
    for eta in sphere_samples(s.m, samples) {
        let f = lib(factorize_eta(&s, &eta))?;
        let det_j = f.j_eta.clone().determinant().abs();
        let det_err = (f.det_a * f.det_a - det_j).abs() / det_j;
        let mut row: Vec<String> = eta.iter().chain(&f.sigma).map(|&v| num(v)).collect();
        row.extend([f.det_a, det_j, f.residual, det_err].map(num));
        t.push(&row);
    }
    emit(c, &t)
}

fn kernel_cmd(c: &Common, cmd: &KernelCmd) -> CliResult<()> {
    let s = load_group(c)?;
    let width = 2 * s.n + s.m;
    match cmd {
        KernelCmd::Eval { delta, r, points } => {
            let pr = MultiplierProfile {
                r: *r,
                ..profile(c, *delta, 256)?
            };
            let pts: Vec<GroupPoint> = read_rows(points, width)?.iter().map(|v| to_point(&s, v)).collect::<CliResult<_>>()?;
            let vals = lib(riesz_kernel(&s, *delta, &pts, &pr))?;
            let mut h = coord_header(&s, "");
            h.extend(["re", "im", "err_est"].map(String::from));
            let mut t = Table::new(h, Some("err_est"));
            for (p, v) in pts.iter().zip(&vals) {
                t.push(&[join(&p.x), join(&p.u), join(&[v.re, v.im, v.err_est])]);
            }
            emit(c, &t)
        }
        KernelCmd::Scaling { delta, r, points } => {
            let pr = profile(c, *delta, 256)?;
            let pts: Vec<GroupPoint> = read_rows(points, width)?.iter().map(|v| to_point(&s, v)).collect::<CliResult<_>>()?;
            let chk = lib(kernel_scaling_check(&s, *delta, *r, &pts, &pr))?;
            let mut h = coord_header(&s, "");
            h.extend(
                ["direct_re", "direct_im", "direct_err", "scaled_re", "scaled_im", "scaled_err", "rel_dev"].map(String::from),
            );
            let mut t = Table::new(h, Some("rel_dev"));
            for (p, (d, sc)) in pts.iter().zip(&chk.rows) {
                let dev = (d.value() - sc.value()).norm() / d.value().norm().max(1e-300);
                t.push(&[
                    join(&p.x),
                    join(&p.u),
                    join(&[d.re, d.im, d.err_est, sc.re, sc.im, sc.err_est, dev]),
                ]);
            }
            emit(c, &t)
        }
        KernelCmd::Decay {
            delta,
            order_n,
            ray,
            radii,
        } => {
            let pr = profile(c, *delta, 1024)?;
            let base = parse_f64_list(ray)?;
            if base.len() != width {
                return Err(format!("--ray needs {width} coordinates"));
            }
            let radii = parse_f64_list(radii)?;
            let fit = lib(kernel_decay_fit(&s, *delta, *order_n, &to_point(&s, &base)?, &radii, &pr))?;
            let h = ["radius", "abs_value", "err_est", "used_in_fit", "slope", "conclusive"].map(String::from).to_vec();
            let mut t = Table::new(h, None);
            for (i, ((r, v), e)) in fit.radii.iter().zip(&fit.values).zip(&fit.errors).enumerate() {
                t.push(&[
                    join(&[*r, *v, *e]),
                    (i < fit.used).to_string(),
                    num(fit.slope),
                    fit.conclusive.to_string(),
                ]);
            }
            emit(c, &t)
        }
    }
}

fn riesz_cmd(c: &Common, cmd: &RieszCmd) -> CliResult<()> {
    let s = load_group(c)?;
    match cmd {
        RieszCmd::Apply { delta, r, input, trial } => {
            let f = grid_input(c, &s, input.as_deref(), *trial)?;
            let out = lib(riesz_apply(&s, &f, *delta, *r))?;
            write_grid_out(c, &out)
        }
    }
}

/// Reads a grid file, or samples the Gaussian trial on the command-line grid.
fn grid_input(c: &Common, s: &MetivierStructure, path: Option<&Path>, trial: (f64, f64)) -> CliResult<GridFunction> {
    match path {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            lib(read_grid(std::io::BufReader::new(file)))
        }
        None => {
            let g = group_grid(c, s, 32, 48, 8.0, 16.0)?;
            Ok(GaussianTrial { a: trial.0, b: trial.1 }.sample(&g))
        }
    }
}

fn write_grid_out(c: &Common, f: &GridFunction) -> CliResult<()> {
    let mut buf = vec![];
    lib(write_grid(f, &mut buf))?;
    match &c.out {
        Some(p) => fs::write(p, buf).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => std::io::stdout().write_all(&buf).map_err(|e| e.to_string()),
    }
}

fn cutoff(s: f64) -> f64 {
    DyadicCutoff.phi(s)
}

fn bilinear_cmd(c: &Common, cmd: &BilinearCmd) -> CliResult<()> {
    let s = load_group(c)?;
    match cmd {
        BilinearCmd::Apply { alpha, r, f, g, trial } => {
            let f = grid_input(c, &s, f.as_deref(), *trial)?;
            let g = grid_input(c, &s, g.as_deref(), *trial)?;
            write_grid_out(c, &lib(bilinear_riesz_apply(&s, &f, &g, *alpha, *r))?)
        }
        BilinearCmd::Regions {
            pairs,
            margin,
            r,
            trials,
            family,
        } => {
            let pairs: Vec<(f64, f64)> = pairs
                .split(';')
                .map(parse_f64_pair)
                .collect::<Result<_, _>>()?;
            let grid = group_grid(c, &s, 10, 12, 5.0, 8.0)?;
            let spec = TrialSpec::new(lib(TrialFamily::parse(family))?, *trials, c.seed);
            let rows = lib(bilinear_region_table(&s, &grid, &pairs, *margin, *r, &spec))?;
            let text = region_rows_csv(&rows);
            let mut t = Table::new(text.lines().next().unwrap_or("").split(',').map(String::from).collect(), None);
            for l in text.lines().skip(1) {
                t.push(&[l.to_string()]);
            }
            emit(c, &t)
        }
        BilinearCmd::Kernel { alpha, r, pairs } => {
            let width = 2 * (2 * s.n + s.m);
            let pr = MultiplierProfile {
                r: *r,
                ..profile(c, *alpha, 256)?
            };
            let rows = read_rows(pairs, width)?;
            let half = width / 2;
            let pts: Vec<(GroupPoint, GroupPoint)> = rows
                .iter()
                .map(|v| Ok((to_point(&s, &v[..half])?, to_point(&s, &v[half..])?)))
                .collect::<CliResult<_>>()?;
            let vals = lib(bilinear_kernel(&s, *alpha, &pts, &pr))?;
            let mut h = coord_header(&s, "_1");
            h.extend(coord_header(&s, "_2"));
            h.extend(["re", "im", "err_est"].map(String::from));
            let mut t = Table::new(h, Some("err_est"));
            for ((a, b), v) in pts.iter().zip(&vals) {
                t.push(&[join(&a.x), join(&a.u), join(&b.x), join(&b.u), join(&[v.re, v.im, v.err_est])]);
            }
            emit(c, &t)
        }
        BilinearCmd::Decay {
            alpha,
            order_n,
            jmax,
            fourier,
            radii,
        } => {
            let pr = profile(c, *alpha, 1024)?;
            let radii = parse_f64_list(radii)?;
            let rays = default_rays(&s)?;
            let d = lib(bilinear_kernel_decay_fit(&s, *alpha, *order_n, &rays, &radii, *jmax, *fourier, &pr, &cutoff))?;
            let worst = d
                .first
                .iter()
                .chain(&d.second)
                .map(|f| f.slope)
                .fold(f64::NEG_INFINITY, f64::max);
            let h = ["j", "weighted_sup", "err_est", "sup", "j_rate", "j_rate_plain", "target_rate", "worst_slope"]
                .map(String::from)
                .to_vec();
            let mut t = Table::new(h, None);
            for (i, ((j, w), (_, sp))) in d.weighted_sup.iter().zip(&d.sup).enumerate() {
                t.push(&[
                    j.to_string(),
                    join(&[*w, d.weighted_err[i], *sp, d.j_rate, d.j_rate_plain, d.target_rate, worst]),
                ]);
            }
            emit(c, &t)
        }
    }
}

/// Centre axis, first-layer axis and a diagonal direction.
fn default_rays(s: &MetivierStructure) -> CliResult<Vec<GroupPoint>> {
    let d = 2 * s.n;
    let mut a = vec![0.0; d];
    let mut ua = vec![0.0; s.m];
    ua[0] = 1.0;
    let mut b = vec![0.0; d];
    b[0] = 1.0;
    let mut cx = vec![0.0; d];
    cx[0] = 0.6;
    cx[1] = 0.6;
    let mut cu = vec![0.0; s.m];
    cu[0] = 0.5;
    Ok(vec![
        lib(GroupPoint::new(std::mem::take(&mut a), ua))?,
        lib(GroupPoint::new(b, vec![0.0; s.m]))?,
        lib(GroupPoint::new(cx, cu))?,
    ])
}

fn restriction_cmd(c: &Common, cmd: &RestrictionCmd) -> CliResult<()> {
    let s = load_group(c)?;
    match cmd {
        RestrictionCmd::Fit { p, lambdas, trial } => {
            let lams = parse_f64_list(lambdas)?;
            let pr = profile(c, 0.0, 128)?;
            let coarse = MultiplierProfile {
                k_max: pr.k_max / 2,
                ..pr.clone()
            };
            let tr = GaussianTrial { a: trial.0, b: trial.1 };
            let fit = lib(restriction_scaling_fit(&s, tr, *p, &lams, &pr))?;
            let half = lib(restriction_scaling_fit(&s, tr, *p, &lams, &coarse))?;
            let h = ["lambda", "dual_norm", "primal_norm", "ratio", "err_est", "slope", "target"].map(String::from).to_vec();
            let mut t = Table::new(h, None);
            for (row, low) in fit.rows.iter().zip(&half.rows) {
                let ratio = row.1 / row.2;
                let err = (ratio - low.1 / low.2).abs();
                t.push(&[join(&[row.0, row.1, row.2, ratio, err, fit.slope, fit.target])]);
            }
            emit(c, &t)
        }
    }
}

fn invert_cmd(c: &Common, nodes: usize, trial: (f64, f64)) -> CliResult<()> {
    let s = load_group(c)?;
    let g = group_grid(c, &s, 32, 32, 8.0, 6.0)?;
    let f = GaussianTrial { a: trial.0, b: trial.1 }.sample(&g);
    let pr = profile(c, 0.0, 32)?;
    let rep = lib(inversion_check(&s, &f, nodes, &pr))?;
    if let Some(w) = &rep.warning {
        eprintln!("WARN: {w}");
    }
    let h = ["nodes", "band", "captured_mass", "rel_error"].map(String::from).to_vec();
    let mut t = Table::new(h, Some("rel_error"));
    t.push(&[rep.nodes.to_string(), join(&[rep.band, rep.captured_mass, rep.rel_error])]);
    emit(c, &t)
}

fn norms_cmd(c: &Common, cmd: &NormsCmd) -> CliResult<()> {
    let s = load_group(c)?;
    match cmd {
        NormsCmd::Scan {
            p,
            delta,
            r,
            t,
            trials,
            family,
        } => {
            let grid = group_grid(c, &s, 12, 16, 5.0, 8.0)?;
            let spec = TrialSpec::new(lib(TrialFamily::parse(family))?, *trials, c.seed);
            let rows = lib(riesz_threshold_scan(&s, &grid, &parse_f64_list(p)?, &parse_f64_list(delta)?, *r, *t, &spec))?;
            let h = [
                "p",
                "delta",
                "threshold",
                "above",
                "estimate",
                "dilated_estimate",
                "dilation_dev",
                "trials",
                "skipped",
                "seed",
            ]
            .map(String::from)
            .to_vec();
            let mut tb = Table::new(h, None);
            for row in rows {
                tb.push(&[
                    join(&[row.p, row.delta, row.threshold]),
                    row.above.to_string(),
                    join(&[row.estimate, row.dilated_estimate, row.dilation_dev]),
                    row.trials.to_string(),
                    row.skipped.to_string(),
                    row.seed.to_string(),
                ]);
            }
            emit(c, &tb)
        }
    }
}

fn gamma_cmd(c: &Common, cmd: &GammaCmd) -> CliResult<()> {
    match cmd {
        GammaCmd::Table { alpha, j, samples } => {
            let k_max = c.kmax.unwrap_or(64);
            let h = ["s", "k", "gamma", "err_est"].map(String::from).to_vec();
            let mut t = Table::new(h, Some("err_est"));
            for i in 0..*samples {
                let sv = (i as f64 + 0.5) / *samples as f64;
                let (row, err) = gamma_row_with_error(*alpha, *j, k_max, sv, &cutoff);
                for (k, (g, e)) in row.iter().zip(&err).enumerate() {
                    t.push(&[num(sv), k.to_string(), num(*g), num(*e)]);
                }
            }
            emit(c, &t)
        }
        GammaCmd::Decay {
            alpha,
            delta,
            jmax,
            samples,
        } => {
            let k_max = c.kmax.unwrap_or(512);
            let d = lib(gamma_decay_check(*alpha, *delta, *jmax, k_max, *samples, &cutoff))?;
            let h = ["j", "normalized", "k0_max", "ratio", "k0_slope"].map(String::from).to_vec();
            let mut t = Table::new(h, None);
            for ((j, nv), (_, k0)) in d.normalized.iter().zip(&d.k0) {
                t.push(&[j.to_string(), join(&[*nv, *k0, d.ratio, d.k0_slope])]);
            }
            emit(c, &t)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Group(GroupCmd::Inspect) => group_inspect(c),
        Cmd::FactorizeScan { samples } => factorize_scan(c, *samples),
        Cmd::Kernel(k) => kernel_cmd(c, k),
        Cmd::Riesz(r) => riesz_cmd(c, r),
        Cmd::Bilinear(b) => bilinear_cmd(c, b),
        Cmd::Restriction(r) => restriction_cmd(c, r),
        Cmd::Invert { nodes, trial } => invert_cmd(c, *nodes, *trial),
        Cmd::Norms(n) => norms_cmd(c, n),
        Cmd::Gamma(g) => gamma_cmd(c, g),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            println!("ERR: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("ERR: {}", e.replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
