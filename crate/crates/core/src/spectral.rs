//! Spectrum of the Bochner Laplacian `Delta_0`, Hessian spectra on the
//! Coulomb slice, and the Green's operator of `Delta_0 - lambda`.

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::{Configuration, Coupling, Links, ReferenceConnection};
use crate::energy::Hessian;
use crate::error::{GlError, Result};
use crate::lattice::{codiff1_into, LatticeTorus, OneForm, ScalarField};
use crate::linalg::{self, axpy, dot, lobpcg, minres, EigOptions, MinresOptions, Vector};
use crate::poisson::PoissonSolver;
use crate::tangent::Tangent;

pub(crate) fn c2r(z: &[Complex64]) -> Vector {
    z.iter().flat_map(|v| [v.re, v.im]).collect()
}

pub(crate) fn r2c(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// Near-kernel cut `max(1e-6, c h^2)` with `h` the geometric mean spacing.
pub fn near_kernel_threshold(lat: &LatticeTorus, c: f64) -> f64 {
    let h = lat.mesh();
    (c * h * h).max(1e-6)
}

/// Lowest eigenpairs of `Delta_0` with orthonormal eigensections.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub eigensections: Vec<ScalarField>,
    pub residuals: Vec<f64>,
    /// Index groups of eigenvalues equal within `cluster_tol`.
    pub multiplicity_clusters: Vec<Vec<usize>>,
    pub cluster_tol: f64,
}

impl SpectrumResult {
    /// Cluster containing eigenvalue number `level` (1-based cluster count).
    pub fn cluster(&self, level: usize) -> Option<&[usize]> {
        self.multiplicity_clusters.get(level.checked_sub(1)?).map(|v| v.as_slice())
    }

    pub fn cluster_value(&self, level: usize) -> Option<f64> {
        let c = self.cluster(level)?;
        Some(c.iter().map(|&i| self.eigenvalues[i]).sum::<f64>() / c.len() as f64)
    }

    pub fn cluster_sections(&self, level: usize) -> Option<Vec<ScalarField>> {
        Some(self.cluster(level)?.iter().map(|&i| self.eigensections[i].clone()).collect())
    }

    /// CSV with columns `index,eigenvalue,residual,cluster`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue,residual,cluster\n");
        for (c, members) in self.multiplicity_clusters.iter().enumerate() {
            for &i in members {
                s.push_str(&format!("{},{:.16e},{:.16e},{}\n", i + 1, self.eigenvalues[i], self.residuals[i], c + 1));
            }
        }
        s
    }
}

fn group_clusters(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(last) if (v - values[*last.last().expect("nonempty")]).abs() <= tol => last.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

fn delta0_flat(links: &Links) -> impl Fn(&[f64]) -> Vector + '_ {
    move |v: &[f64]| c2r(&links.laplacian(&r2c(v)))
}

fn flat_precond(solver: &PoissonSolver, sigma: f64) -> impl Fn(&[f64]) -> Vector + '_ {
    move |v: &[f64]| {
        let mut z = r2c(v);
        solver.apply_multiplier(&mut z, |s| 1.0 / (s + sigma));
        c2r(&z)
    }
}

/// Lowest `k` eigenpairs of the covariant five-point Laplacian of the
/// reference connection.
pub fn laplacian0_spectrum(lat: &LatticeTorus, rc: &ReferenceConnection, k: usize) -> Result<SpectrumResult> {
    laplacian0_spectrum_with(lat, rc, k, &EigOptions { tol: 1e-11, ..Default::default() })
}

pub fn laplacian0_spectrum_with(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    k: usize,
    opts: &EigOptions,
) -> Result<SpectrumResult> {
    let n = lat.sites();
    if k == 0 || k > n {
        return Err(GlError::Precondition(format!("cannot compute {k} eigenpairs on {n} sites")));
    }
    let links = Links::reference(lat, rc);
    let solver = PoissonSolver::new(lat);
    let sigma = 2.0 * std::f64::consts::PI * (lat.degree as f64 + 1.0) / lat.area();
    let op = delta0_flat(&links);
    let pre = flat_precond(&solver, sigma);
    // Each complex eigenvector occupies a two-dimensional real eigenspace.
    let kr = (2 * k).min(2 * n);
    let res = lobpcg(2 * n, kr, &op, Some(&pre), &[], opts)?;
    complexify(lat, &links, &res.vectors, k)
}

/// Converts real eigenvectors of the realified operator into `k` complex
/// orthonormal eigensections by Gram-Schmidt and a complex Rayleigh-Ritz.
fn complexify(lat: &LatticeTorus, links: &Links, real: &[Vector], k: usize) -> Result<SpectrumResult> {
    let mut zs: Vec<Vec<Complex64>> = Vec::new();
    for v in real {
        let mut z = r2c(v);
        for _ in 0..2 {
            for q in &zs {
                let c: Complex64 = q.iter().zip(&z).map(|(a, b)| a.conj() * b).sum();
                z.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nz = z.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nz > 0.5 {
            z.iter_mut().for_each(|a| *a /= nz);
            zs.push(z);
        }
    }
    let m = zs.len();
    let az: Vec<Vec<Complex64>> = zs.iter().map(|z| links.laplacian(z)).collect();
    let h = DMatrix::<Complex<f64>>::from_fn(m, m, |i, j| {
        let a: Complex64 = zs[i].iter().zip(&az[j]).map(|(p, q)| p.conj() * q).sum();
        let b: Complex64 = zs[j].iter().zip(&az[i]).map(|(p, q)| p.conj() * q).sum();
        let v = 0.5 * (a + b.conj());
        Complex::new(v.re, v.im)
    });
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let k = k.min(m);
    let w = lat.cell();
    let mut values = Vec::with_capacity(k);
    let mut sections = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut z = vec![Complex64::new(0.0, 0.0); lat.sites()];
        for r in 0..m {
            let coef = eig.eigenvectors[(r, c)];
            let coef = Complex64::new(coef.re, coef.im);
            z.iter_mut().zip(&zs[r]).for_each(|(a, b)| *a += coef * b);
        }
        // Deterministic phase: the largest entry (first in index order) is real positive.
        let mut best = 0;
        for (i, v) in z.iter().enumerate() {
            if v.norm() > z[best].norm() * (1.0 + 1e-9) {
                best = i;
            }
        }
        let ph = z[best].conj() / z[best].norm();
        let nz = z.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        z.iter_mut().for_each(|a| *a *= ph / (nz * w.sqrt()));
        let lz = links.laplacian(&z);
        let mu = ScalarField { values: z.clone() }.dot(lat, &ScalarField { values: lz.clone() });
        let r: f64 = lz.iter().zip(&z).map(|(a, b)| (a - mu * b).norm_sqr()).sum::<f64>();
        values.push(mu);
        residuals.push((r * w).sqrt());
        sections.push(ScalarField { values: z });
    }
    let maxres = residuals.iter().copied().fold(0.0, f64::max);
    let cluster_tol = (10.0 * maxres).max(1e-6);
    Ok(SpectrumResult {
        multiplicity_clusters: group_clusters(&values, cluster_tol),
        eigenvalues: values,
        eigensections: sections,
        residuals,
        cluster_tol,
    })
}

/// Full spectrum of `Delta_0` by dense diagonalization (small grids only).
pub fn laplacian0_dense(lat: &LatticeTorus, rc: &ReferenceConnection) -> Vec<f64> {
    let links = Links::reference(lat, rc);
    let n = lat.sites();
    let h = DMatrix::<Complex<f64>>::from_fn(n, n, |_, _| Complex::new(0.0, 0.0));
    let mut h = h;
    let mut e = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = Complex64::new(1.0, 0.0);
        let col = links.laplacian(&e);
        e[j] = Complex64::new(0.0, 0.0);
        for i in 0..n {
            h[(i, j)] = Complex::new(col[i].re, col[i].im);
        }
    }
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `mu_level / kappa^2`, the coupling at which the normal phase loses
/// stability along the given eigencluster.
pub fn find_threshold(lat: &LatticeTorus, rc: &ReferenceConnection, kappa: f64, level_index: usize) -> Result<f64> {
    if level_index == 0 {
        return Err(GlError::Precondition("levels are counted from 1".into()));
    }
    let per = lat.degree.max(1) as usize;
    let k = (per * (level_index + 1)).min(lat.sites());
    let spec = laplacian0_spectrum(lat, rc, k)?;
    let mu = spec
        .cluster_value(level_index)
        .ok_or_else(|| GlError::Precondition(format!("level {level_index} beyond the computed spectrum")))?;
    Ok(mu / (kappa * kappa))
}

/// Lowest eigenvalues of a Hessian restricted to the Coulomb slice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HessianReport {
    pub eigenvalues: Vec<f64>,
    pub morse_index: usize,
    pub near_kernel_dim: usize,
    pub gap: Option<f64>,
    pub threshold: f64,
}

impl HessianReport {
    fn from_values(mut eigenvalues: Vec<f64>, threshold: f64) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let morse_index = eigenvalues.iter().filter(|&&v| v < -threshold).count();
        let near_kernel_dim = eigenvalues.iter().filter(|&&v| v.abs() <= threshold).count();
        let gap = eigenvalues.iter().copied().find(|&v| v > threshold);
        Self { eigenvalues, morse_index, near_kernel_dim, gap, threshold }
    }
}

/// Eigenvalues of the normal-phase operator
/// `Q(a, psi) = (d* d a, Delta_0 psi - kappa^2 tau psi)` on `d* a = 0`.
///
/// The section block contributes each `mu_i - kappa^2 tau` twice (real
/// count); the connection block contributes the two harmonic zero modes and
/// the nonzero symbols of the lattice Laplacian.
pub fn normal_hessian_eigs(lat: &LatticeTorus, rc: &ReferenceConnection, cpl: &Coupling, k: usize) -> Result<HessianReport> {
    let spec = laplacian0_spectrum(lat, rc, k.div_ceil(2).max(1))?;
    let mut vals: Vec<f64> = Vec::new();
    for &mu in &spec.eigenvalues {
        let q = mu - cpl.kappa * cpl.kappa * cpl.tau;
        vals.push(q);
        vals.push(q);
    }
    let mut conn: Vec<f64> = PoissonSolver::new(lat).symbol().iter().copied().filter(|&s| s > 0.0).collect();
    conn.extend([0.0, 0.0]);
    vals.extend(conn);
    vals.sort_by(f64::total_cmp);
    vals.truncate(k);
    Ok(HessianReport::from_values(vals, near_kernel_threshold(lat, 1.0)))
}

/// Infinitesimal gauge action `chi -> (d chi, i chi phi)` and its adjoint
/// `(alpha, psi) -> d* alpha + Im(conj(phi) psi)`, in flat coordinates.
#[derive(Clone, Debug)]
pub struct GaugeOrbit {
    pub lat: LatticeTorus,
    pub phi: Vec<Complex64>,
}

impl GaugeOrbit {
    pub fn apply(&self, chi: &[f64]) -> Vector {
        let lat = &self.lat;
        let n = lat.sites();
        let (h1, h2) = (lat.h1(), lat.h2());
        let mut v = vec![0.0; 4 * n];
        for x in 0..n {
            v[x] = (chi[lat.fwd1(x)] - chi[x]) / h1;
            v[n + x] = (chi[lat.fwd2(x)] - chi[x]) / h2;
            let z = Complex64::new(0.0, chi[x]) * self.phi[x];
            v[2 * n + 2 * x] = z.re;
            v[2 * n + 2 * x + 1] = z.im;
        }
        v
    }

    pub fn adjoint(&self, v: &[f64]) -> Vector {
        let lat = &self.lat;
        let n = lat.sites();
        let mut out = vec![0.0; n];
        codiff1_into(lat, &v[..n], &v[n..2 * n], &mut out);
        for x in 0..n {
            let psi = Complex64::new(v[2 * n + 2 * x], v[2 * n + 2 * x + 1]);
            out[x] += (self.phi[x].conj() * psi).im;
        }
        out
    }
}

/// Options for Hessian spectra on the slice.
#[derive(Clone, Debug)]
pub struct HessianOptions {
    pub eig: EigOptions,
    /// Constant `c` of the near-kernel cut `max(1e-6, c h^2)`.
    pub threshold_c: f64,
}

impl Default for HessianOptions {
    fn default() -> Self {
        Self { eig: EigOptions { tol: 1e-8, max_iter: 4000, guard: 6, seed: 11 }, threshold_c: 1.0 }
    }
}

/// The gauge-fixed Hessian `J + 2 L L*` in flat coordinates together with
/// a Fourier preconditioner.
pub struct SliceHessian {
    pub hess: Hessian,
    pub orbit: GaugeOrbit,
    solver: PoissonSolver,
    sigma: f64,
}

impl SliceHessian {
    pub fn new(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration, cpl: &Coupling) -> Result<Self> {
        let hess = Hessian::new(lat, rc, cfg, cpl)?;
        let orbit = GaugeOrbit { lat: lat.clone(), phi: cfg.phi.values.clone() };
        let sigma = 2.0 * (cpl.kappa * cpl.kappa * cpl.tau + rc.f0) + 1.0 / lat.area();
        Ok(Self { hess, orbit, solver: PoissonSolver::new(lat), sigma })
    }

    pub fn apply(&self, v: &[f64]) -> Vector {
        let mut y = self.hess.apply_flat(v);
        let g = self.orbit.apply(&self.orbit.adjoint(v));
        axpy(&mut y, 2.0, &g);
        y
    }

    pub fn precondition(&self, v: &[f64]) -> Vector {
        let n = self.orbit.lat.sites();
        let mut out = Vec::with_capacity(4 * n);
        for c in 0..2 {
            let f = &v[c * n..(c + 1) * n];
            out.extend(self.solver.apply_multiplier_real(f, |s| 1.0 / (2.0 * s + self.sigma)));
        }
        let mut z = r2c(&v[2 * n..]);
        self.solver.apply_multiplier(&mut z, |s| 1.0 / (2.0 * s + self.sigma));
        out.extend(c2r(&z));
        out
    }

    pub fn dim(&self) -> usize {
        4 * self.orbit.lat.sites()
    }

    /// Whether an eigenvector of `J + 2 L L*` lies along the gauge orbit.
    pub fn is_gauge_mode(&self, v: &[f64], lambda: f64) -> bool {
        let l = self.orbit.adjoint(v);
        let q = 2.0 * dot(&l, &l) / dot(v, v);
        lambda > 0.0 && q > 0.5 * lambda
    }
}

/// Lowest `m` slice eigenpairs of `J/2` (the operator of the quadratic form
/// `E(cfg + v) - E(cfg) = <v, (J/2) v> + ...`), gauge-orbit modes removed.
pub fn hessian_eigenpairs(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    m: usize,
    opts: &HessianOptions,
) -> Result<(HessianReport, Vec<Tangent>)> {
    let sh = SliceHessian::new(lat, rc, cfg, cpl)?;
    let op = |v: &[f64]| sh.apply(v);
    let pre = |v: &[f64]| sh.precondition(v);
    let mut extra = 4;
    loop {
        let want = (m + extra).min(sh.dim() - 1);
        let res = lobpcg(sh.dim(), want, &op, Some(&pre), &[], &opts.eig)?;
        let mut vals = Vec::new();
        let mut vecs = Vec::new();
        for (l, v) in res.values.iter().zip(&res.vectors) {
            if !sh.is_gauge_mode(v, *l) {
                vals.push(0.5 * l);
                vecs.push(v.clone());
            }
        }
        if vals.len() >= m || want == sh.dim() - 1 {
            vals.truncate(m);
            vecs.truncate(m);
            let scale = 1.0 / lat.cell().sqrt();
            let tangents = vecs
                .iter()
                .map(|v| Tangent::from_flat(lat, &v.iter().map(|x| x * scale).collect::<Vector>()))
                .collect::<Result<Vec<_>>>()?;
            return Ok((HessianReport::from_values(vals, near_kernel_threshold(lat, opts.threshold_c)), tangents));
        }
        extra *= 2;
    }
}

pub fn hessian_eigs(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    m: usize,
    opts: &HessianOptions,
) -> Result<HessianReport> {
    Ok(hessian_eigenpairs(lat, rc, cfg, cpl, m, opts)?.0)
}

/// Second variation `d^2/ds^2 E(cfg + s v)` at `s = 0`, assembled from the
/// exact Hessian of the discrete energy.
pub fn hessian_quadratic(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    direction: &Tangent,
) -> Result<f64> {
    direction.a.check(lat)?;
    direction.psi.check(lat)?;
    Ok(Hessian::new(lat, rc, cfg, cpl)?.quadratic(direction))
}

/// Second variation split along the Bogomolny rewrite
/// `E = ||(D_1 + i D_2) phi||^2 + ||b - (tau - |phi|^2)/2||^2 + 2 pi tau d + R`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BogomolnySecondVariation {
    /// Second variation of the two squares.
    pub squares: f64,
    /// Second variation of the lattice remainder `R`.
    pub defect: f64,
    pub total: f64,
}

fn second_derivative_sq(g: Complex64, g1: Complex64, g2: Complex64) -> f64 {
    2.0 * g1.norm_sqr() + 2.0 * (g.conj() * g2).re
}

/// Bogomolny-form evaluation of the second variation (critical coupling).
pub fn hessian_quadratic_bogomolny(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    v: &Tangent,
) -> Result<BogomolnySecondVariation> {
    if !cpl.is_critical() {
        return Err(GlError::Precondition("Bogomolny form needs kappa = 1/sqrt(2)".into()));
    }
    cfg.check(lat)?;
    v.a.check(lat)?;
    v.psi.check(lat)?;
    let links = Links::new(lat, rc, &cfg.a);
    let n = lat.sites();
    let hs = [lat.h1(), lat.h2()];
    let phi = &cfg.phi.values;
    let psi = &v.psi.values;
    let al = [&v.a.comp1, &v.a.comp2];
    let us = [&links.u1, &links.u2];
    let i = Complex64::new(0.0, 1.0);
    let mut curl_a = vec![0.0; n];
    crate::lattice::curl_into(lat, &v.a.comp1, &v.a.comp2, &mut curl_a);
    let mut sq_x = 0.0;
    let mut sq_d = 0.0;
    let mut sq_y = 0.0;
    let mut bphi = 0.0;
    for x in 0..n {
        let nb = [lat.fwd1(x), lat.fwd2(x)];
        let mut gx = Complex64::new(0.0, 0.0);
        let mut gx1 = gx;
        let mut gx2 = gx;
        for mu in 0..2 {
            let (u, h, a) = (us[mu][x], hs[mu], al[mu][x]);
            let g = (u * phi[nb[mu]] - phi[x]) / h;
            let g1 = -i * a * u * phi[nb[mu]] + (u * psi[nb[mu]] - psi[x]) / h;
            let g2 = -h * a * a * u * phi[nb[mu]] - 2.0 * i * a * u * psi[nb[mu]];
            sq_d += second_derivative_sq(g, g1, g2);
            let w = if mu == 0 { Complex64::new(1.0, 0.0) } else { i };
            gx += w * g;
            gx1 += w * g1;
            gx2 += w * g2;
        }
        sq_x += second_derivative_sq(gx, gx1, gx2);
        let y = links.b[x] - 0.5 * (cpl.tau - phi[x].norm_sqr());
        let y1 = curl_a[x] + (phi[x].conj() * psi[x]).re;
        sq_y += 2.0 * y1 * y1 + 2.0 * y * psi[x].norm_sqr();
        bphi += 4.0 * curl_a[x] * (phi[x].conj() * psi[x]).re + 2.0 * links.b[x] * psi[x].norm_sqr();
    }
    let w = lat.cell();
    let squares = w * (sq_x + sq_y);
    let defect = w * (sq_d - sq_x - bphi);
    Ok(BogomolnySecondVariation { squares, defect, total: squares + defect })
}

/// Green's operator of `Delta_0 - lambda`, zero on a given kernel.
pub struct GreenOperator {
    links: Links,
    lambda: f64,
    kernel: Vec<Vector>,
    solver: PoissonSolver,
    sigma: f64,
    pub opts: MinresOptions,
}

impl GreenOperator {
    /// `kernel` holds the eigensections of `Delta_0` at `lambda` (empty when
    /// `lambda` is regular).
    pub fn new(lat: &LatticeTorus, rc: &ReferenceConnection, lambda: f64, kernel: &[ScalarField]) -> Result<Self> {
        let mut real = Vec::new();
        for z in kernel {
            z.check(lat)?;
            real.push(c2r(&z.values));
            real.push(c2r(&z.scale(Complex64::new(0.0, 1.0)).values));
        }
        let kernel = linalg::orthonormalize(real, &[], 1e-8);
        Ok(Self {
            links: Links::reference(lat, rc),
            lambda,
            kernel,
            solver: PoissonSolver::new(lat),
            sigma: lambda.abs() + rc.f0 + 1.0 / lat.area(),
            opts: MinresOptions { rtol: 1e-12, max_iter: 20000 },
        })
    }

    fn project(&self, v: &mut [f64]) {
        linalg::project_out(v, &self.kernel);
    }

    /// Orthogonal projection onto the complement of the kernel.
    pub fn perp(&self, f: &ScalarField) -> ScalarField {
        let mut v = c2r(&f.values);
        self.project(&mut v);
        ScalarField { values: r2c(&v) }
    }

    /// `(Delta_0 - lambda) u` for the reference connection.
    pub fn shifted(&self, u: &ScalarField) -> ScalarField {
        let l = self.links.laplacian(&u.values);
        ScalarField { values: l.iter().zip(&u.values).map(|(a, b)| a - self.lambda * b).collect() }
    }

    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        rhs.check(&self.links.lat)?;
        let mut b = c2r(&rhs.values);
        self.project(&mut b);
        let op = |v: &[f64]| {
            let mut w = v.to_vec();
            self.project(&mut w);
            let l = self.links.laplacian(&r2c(&w));
            let mut y = c2r(&l);
            axpy(&mut y, -self.lambda, &w);
            self.project(&mut y);
            y
        };
        let pre = |v: &[f64]| {
            let mut w = v.to_vec();
            self.project(&mut w);
            let mut z = r2c(&w);
            self.solver.apply_multiplier(&mut z, |s| 1.0 / (s + self.sigma));
            let mut y = c2r(&z);
            self.project(&mut y);
            y
        };
        let out = minres(&op, &b, Some(&pre), &self.opts)?;
        let mut x = out.x;
        self.project(&mut x);
        Ok(ScalarField { values: r2c(&x) })
    }
}

/// Solves `(Delta_0 - lambda) u = P rhs` with `u` orthogonal to the
/// eigenspace at `lambda` (if `lambda` is within `1e-6` of an eigenvalue).
pub fn green_solve(lat: &LatticeTorus, rc: &ReferenceConnection, lambda: f64, rhs: &ScalarField) -> Result<ScalarField> {
    let mut k = (lat.degree.max(1) as usize * 2).min(lat.sites());
    let kernel = loop {
        let spec = laplacian0_spectrum(lat, rc, k)?;
        let top = *spec.eigenvalues.last().expect("nonempty");
        if top > lambda + spec.cluster_tol.max(1e-6) || k == lat.sites() {
            let tol = spec.cluster_tol.max(1e-6);
            break spec
                .eigenvalues
                .iter()
                .zip(&spec.eigensections)
                .filter(|(m, _)| (**m - lambda).abs() <= tol)
                .map(|(_, s)| s.clone())
                .collect::<Vec<_>>();
        }
        k = (2 * k).min(lat.sites());
    };
    GreenOperator::new(lat, rc, lambda, &kernel)?.solve(rhs)
}

/// Harmonic part of a 1-form in the slice.
pub fn harmonic_magnitude(a: &OneForm) -> f64 {
    let h = a.harmonic_part();
    h[0].hypot(h[1])
}
