//! Instability and moduli diagnostics at critical points.
//!
//! The first-order operator
//!
//! ```text
//! L(c, psi) = ( curl c - i div c + conj(phi) psi ,  X psi / 2 - (i/2)(c1 + i c2) phi )
//! ```
//!
//! with `X = D_1 + i D_2` is complex linear for `I(c, psi) = (*c, i psi)`:
//! `L I = i L` holds exactly. Its near-kernel carries the energy-decreasing
//! directions at irreducible non-vortex critical points.
//!
//! The forward-difference `X` has a doubler at momentum `(pi/2h, -pi/2h)`,
//! so discrete near-kernels contain high-frequency modes with no continuum
//! counterpart. Modes are split by `h^2 ||D v||^2 / ||v||^2`, which is
//! `O(h^2)` for smooth modes and of order one for doublers.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::{Configuration, Coupling, Links, ReferenceConnection};
use crate::energy::{colocated_bogomolny_norms, total_energy, Hessian};
use crate::error::{GlError, Result};
use crate::lattice::{codiff1_into, curl_into, ksum, LatticeTorus, OneForm, ScalarField};
use crate::linalg::{dot, lobpcg, minres, norm, orthonormalize, EigOptions, MinresOptions, Vector};
use crate::poisson::PoissonSolver;
use crate::spectral::{c2r, hessian_eigs, near_kernel_threshold, r2c, HessianOptions, SliceHessian};
use crate::tangent::{complex_structure_flat, Tangent};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn forward_div(lat: &LatticeTorus, c1: &[f64], c2: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lat.sites()];
    crate::lattice::forward_div_into(lat, c1, c2, &mut out);
    out
}

/// Transpose of the forward divergence.
fn forward_div_t(lat: &LatticeTorus, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (h1, h2) = (lat.h1(), lat.h2());
    let n = lat.sites();
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    for y in 0..n {
        a1[y] = (g[lat.bwd1(y)] - g[y]) / h1;
        a2[y] = (g[lat.bwd2(y)] - g[y]) / h2;
    }
    (a1, a2)
}

/// Transpose of `curl`.
fn curl_t(lat: &LatticeTorus, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (h1, h2) = (lat.h1(), lat.h2());
    let n = lat.sites();
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    for y in 0..n {
        a1[y] = (g[y] - g[lat.bwd2(y)]) / h2;
        a2[y] = (g[lat.bwd1(y)] - g[y]) / h1;
    }
    (a1, a2)
}

fn interleave(z: &[Complex64], out: &mut Vec<f64>) {
    for v in z {
        out.push(v.re);
        out.push(v.im);
    }
}

/// The operator `L` at one configuration.
#[derive(Clone, Debug)]
pub struct LOperator {
    pub links: Links,
    pub phi: Vec<Complex64>,
}

impl LOperator {
    pub fn new(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration) -> Result<Self> {
        cfg.check(lat)?;
        Ok(Self { links: Links::new(lat, rc, &cfg.a), phi: cfg.phi.values.clone() })
    }

    pub fn apply(&self, v: &Tangent) -> (ScalarField, ScalarField) {
        let lat = &self.links.lat;
        let n = lat.sites();
        let mut curl = vec![0.0; n];
        curl_into(lat, &v.a.comp1, &v.a.comp2, &mut curl);
        let div = forward_div(lat, &v.a.comp1, &v.a.comp2);
        let psi = &v.psi.values;
        let f = (0..n).map(|x| Complex64::new(curl[x], -div[x]) + self.phi[x].conj() * psi[x]).collect();
        let xp = self.links.xop(psi);
        let xi = (0..n)
            .map(|x| 0.5 * xp[x] - 0.5 * I * Complex64::new(v.a.comp1[x], v.a.comp2[x]) * self.phi[x])
            .collect();
        (ScalarField { values: f }, ScalarField { values: xi })
    }

    pub fn adjoint(&self, f: &ScalarField, xi: &ScalarField) -> Tangent {
        let lat = &self.links.lat;
        let n = lat.sites();
        let re: Vec<f64> = f.values.iter().map(|z| z.re).collect();
        let im: Vec<f64> = f.values.iter().map(|z| z.im).collect();
        let (mut a1, mut a2) = curl_t(lat, &re);
        let (d1, d2) = forward_div_t(lat, &im);
        let xa = self.links.xop_adj(&xi.values);
        let mut psi = Vec::with_capacity(n);
        for x in 0..n {
            let w = xi.values[x].conj() * self.phi[x];
            a1[x] += -d1[x] + 0.5 * w.im;
            a2[x] += -d2[x] + 0.5 * w.re;
            psi.push(self.phi[x] * f.values[x] + 0.5 * xa[x]);
        }
        Tangent { a: OneForm { comp1: a1, comp2: a2 }, psi: ScalarField { values: psi } }
    }

    /// Flat codomain layout: `f` then `xi`, each as interleaved re/im.
    pub fn apply_flat(&self, v: &[f64]) -> Vector {
        let t = Tangent::from_flat(&self.links.lat, v).expect("flat tangent of lattice size");
        let (f, xi) = self.apply(&t);
        let mut out = Vec::with_capacity(v.len());
        interleave(&f.values, &mut out);
        interleave(&xi.values, &mut out);
        out
    }

    pub fn adjoint_flat(&self, w: &[f64]) -> Vector {
        let n = self.links.lat.sites();
        let f = ScalarField { values: r2c(&w[..2 * n]) };
        let xi = ScalarField { values: r2c(&w[2 * n..]) };
        self.adjoint(&f, &xi).to_flat()
    }
}

/// Applies `L` at `cfg` to a tangent direction.
pub fn l_apply(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    direction: &Tangent,
) -> Result<(ScalarField, ScalarField)> {
    direction.a.check(lat)?;
    direction.psi.check(lat)?;
    Ok(LOperator::new(lat, rc, cfg)?.apply(direction))
}

/// Applies the adjoint of `L` at `cfg`.
pub fn l_adjoint(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    f: &ScalarField,
    xi: &ScalarField,
) -> Result<Tangent> {
    f.check(lat)?;
    xi.check(lat)?;
    Ok(LOperator::new(lat, rc, cfg)?.adjoint(f, xi))
}

/// Concatenated forward differences of the blocks of a flat vector:
/// `plain` real blocks first, then complex blocks differenced with or
/// without transport.
fn diffs(links: &Links, v: &[f64], plain: usize, layout: &[Block]) -> Vector {
    let lat = &links.lat;
    let n = lat.sites();
    let (h1, h2) = (lat.h1(), lat.h2());
    let mut out = Vec::with_capacity(2 * v.len());
    let mut off = 0;
    for _ in 0..plain {
        let f = &v[off..off + n];
        for x in 0..n {
            out.push((f[lat.fwd1(x)] - f[x]) / h1);
            out.push((f[lat.fwd2(x)] - f[x]) / h2);
        }
        off += n;
    }
    for b in layout {
        let z = r2c(&v[off..off + 2 * n]);
        match b {
            Block::Section => {
                let (g1, g2) = links.cov(&z);
                interleave(&g1, &mut out);
                interleave(&g2, &mut out);
            }
            Block::Function => {
                for x in 0..n {
                    let g1 = (z[lat.fwd1(x)] - z[x]) / h1;
                    let g2 = (z[lat.fwd2(x)] - z[x]) / h2;
                    out.extend([g1.re, g1.im, g2.re, g2.im]);
                }
            }
        }
        off += 2 * n;
    }
    out
}

/// `h^2 ||D v||^2 / ||v||^2`.
fn roughness(links: &Links, v: &[f64], plain: usize, layout: &[Block]) -> f64 {
    let d = diffs(links, v, plain, layout);
    links.lat.cell() * dot(&d, &d) / dot(v, v)
}

/// Splits a near-kernel subspace by roughness. Near-degenerate singular
/// vectors mix smooth modes with doublers, so the roughness form is
/// diagonalized on the whole subspace; each resulting vector is reported
/// with its Rayleigh singular value.
fn resolve_subspace(
    vs: Vec<Vector>,
    links: &Links,
    plain: usize,
    layout: &[Block],
    normal: &dyn Fn(&[f64]) -> Vector,
    cut: f64,
) -> (Vec<SingularMode>, Vec<Vector>) {
    let vs = orthonormalize(vs, &[], 1e-8);
    let m = vs.len();
    if m == 0 {
        return (Vec::new(), Vec::new());
    }
    let ds: Vec<Vector> = vs.iter().map(|v| diffs(links, v, plain, layout)).collect();
    let w = links.lat.cell();
    let g = DMatrix::from_fn(m, m, |i, j| w * dot(&ds[i], &ds[j]));
    let (vals, vecs) = crate::linalg::sorted_eigen(g);
    let mut modes = Vec::with_capacity(m);
    let mut phys = Vec::new();
    for k in 0..m {
        let mut u = vec![0.0; vs[0].len()];
        for (i, v) in vs.iter().enumerate() {
            crate::linalg::axpy(&mut u, vecs[(i, k)], v);
        }
        let sigma = dot(&u, &normal(&u)).max(0.0).sqrt();
        let physical = vals[k] < cut;
        modes.push(SingularMode { sigma, roughness: vals[k], physical });
        if physical {
            phys.push(u);
        }
    }
    (modes, phys)
}

#[derive(Clone, Copy)]
enum Block {
    Section,
    Function,
}

/// One computed singular value with its smoothness measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingularMode {
    pub sigma: f64,
    pub roughness: f64,
    pub physical: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelReport {
    pub near_kernel_dim: usize,
    /// Physical singular values, ascending.
    pub singular_values: Vec<f64>,
    /// Every computed mode, doublers included.
    pub modes: Vec<SingularMode>,
    pub threshold: f64,
    pub roughness_cut: f64,
    /// Orthonormal physical near-kernel, in flat tangent coordinates scaled
    /// to unit tangent norm.
    #[serde(skip)]
    pub basis: Vec<Tangent>,
    /// Largest distance of `I b` from the span of the basis, over basis `b`.
    pub complex_structure_defect: Option<f64>,
    pub coker_dim: Option<usize>,
    pub coker_modes: Vec<SingularMode>,
    /// Physical kernel dimension minus physical cokernel dimension.
    pub index_estimate: Option<i64>,
}

#[derive(Clone, Debug)]
pub struct ThresholdOptions {
    /// Constant `C` of the near-kernel cut `max(1e-6, C h^2)`.
    pub c: f64,
    /// Modes with roughness at or above this are treated as doublers.
    pub roughness_cut: f64,
    /// Number of lowest singular values to compute.
    pub count: usize,
    pub eig: EigOptions,
    /// Also compute the cokernel side and the index estimate.
    pub cokernel: bool,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            c: 10.0,
            roughness_cut: 1.0,
            count: 12,
            eig: EigOptions { tol: 1e-10, max_iter: 10000, guard: 8, seed: 5 },
            cokernel: true,
        }
    }
}

fn fourier_precond<'a>(
    solver: &'a PoissonSolver,
    n: usize,
    plain: usize,
    complex: usize,
    shift: f64,
    weight: f64,
) -> impl Fn(&[f64]) -> Vector + 'a {
    move |v: &[f64]| {
        let mut out = Vec::with_capacity(v.len());
        for c in 0..plain {
            out.extend(solver.apply_multiplier_real(&v[c * n..(c + 1) * n], |s| 1.0 / (s + shift)));
        }
        for c in 0..complex {
            let off = plain * n + 2 * c * n;
            let mut z = r2c(&v[off..off + 2 * n]);
            solver.apply_multiplier(&mut z, |s| 1.0 / (weight * s + shift));
            out.extend(c2r(&z));
        }
        out
    }
}

fn mean_phi2(phi: &[Complex64]) -> f64 {
    ksum(phi.iter().map(|z| z.norm_sqr())) / phi.len() as f64
}

/// Largest distance of `I b` from `span(basis)` over an orthonormal flat basis.
fn closure_defect(n: usize, basis: &[Vector]) -> f64 {
    let mut worst: f64 = 0.0;
    for b in basis {
        let mut ib = complex_structure_flat(n, b);
        for q in basis {
            let s = dot(q, &ib);
            ib.iter_mut().zip(q).for_each(|(x, y)| *x -= s * y);
        }
        worst = worst.max(norm(&ib));
    }
    worst
}

fn to_tangents(lat: &LatticeTorus, vs: &[Vector]) -> Result<Vec<Tangent>> {
    let s = 1.0 / lat.cell().sqrt();
    vs.iter().map(|v| Tangent::from_flat(lat, &v.iter().map(|x| x * s).collect::<Vector>())).collect()
}

/// Classifies computed modes: those below the threshold are resolved by
/// roughness as a subspace, the rest individually.
#[allow(clippy::too_many_arguments)]
fn split_modes(
    values: &[f64],
    vectors: &[Vector],
    threshold: f64,
    links: &Links,
    plain: usize,
    layout: &[Block],
    normal: &dyn Fn(&[f64]) -> Vector,
    cut: f64,
) -> (Vec<SingularMode>, Vec<Vector>) {
    let low: Vec<Vector> = values
        .iter()
        .zip(vectors)
        .filter(|(l, _)| l.max(0.0).sqrt() < threshold)
        .map(|(_, v)| v.clone())
        .collect();
    let (mut modes, phys) = resolve_subspace(low, links, plain, layout, normal, cut);
    for (l, v) in values.iter().zip(vectors) {
        let sigma = l.max(0.0).sqrt();
        if sigma >= threshold {
            let r = roughness(links, v, plain, layout);
            modes.push(SingularMode { sigma, roughness: r, physical: r < cut });
        }
    }
    modes.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    (modes, phys)
}

fn kernel_report(
    lat: &LatticeTorus,
    modes: Vec<SingularMode>,
    kept: Vec<Vector>,
    coker: Option<(Vec<SingularMode>, usize)>,
    threshold: f64,
    cut: f64,
    closure: bool,
) -> Result<KernelReport> {
    let n = lat.sites();
    let defect = (closure && !kept.is_empty()).then(|| closure_defect(n, &kept));
    let (coker_modes, coker_dim) = match coker {
        Some((m, d)) => (m, Some(d)),
        None => (Vec::new(), None),
    };
    Ok(KernelReport {
        near_kernel_dim: kept.len(),
        singular_values: modes.iter().filter(|m| m.physical).map(|m| m.sigma).collect(),
        modes,
        threshold,
        roughness_cut: cut,
        basis: to_tangents(lat, &kept)?,
        complex_structure_defect: defect,
        coker_dim,
        index_estimate: coker_dim.map(|c| kept.len() as i64 - c as i64),
        coker_modes,
    })
}

/// Lowest singular values and vectors of `L` at `cfg`, with the cokernel
/// side from `L L*`.
pub fn near_kernel(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    opts: &ThresholdOptions,
) -> Result<KernelReport> {
    let op = LOperator::new(lat, rc, cfg)?;
    let n = lat.sites();
    let solver = PoissonSolver::new(lat);
    let shift = mean_phi2(&op.phi) + 1.0 / lat.area();
    let pre = fourier_precond(&solver, n, 2, 1, shift, 0.25);
    let normal = |v: &[f64]| op.adjoint_flat(&op.apply_flat(v));
    let res = lobpcg(4 * n, opts.count, &normal, Some(&pre), &[], &opts.eig)?;
    let threshold = near_kernel_threshold(lat, opts.c);
    let (modes, kept) =
        split_modes(&res.values, &res.vectors, threshold, &op.links, 2, &[Block::Section], &normal, opts.roughness_cut);
    let coker = if opts.cokernel {
        let pre_c = fourier_precond(&solver, n, 0, 2, shift, 1.0);
        let normal_c = |w: &[f64]| op.apply_flat(&op.adjoint_flat(w));
        let r = lobpcg(4 * n, opts.count, &normal_c, Some(&pre_c), &[], &opts.eig)?;
        let layout = [Block::Function, Block::Section];
        let (cm, ck) = split_modes(&r.values, &r.vectors, threshold, &op.links, 0, &layout, &normal_c, opts.roughness_cut);
        Some((cm, ck.len()))
    } else {
        None
    };
    kernel_report(lat, modes, kept, coker, threshold, opts.roughness_cut, true)
}

/// Full SVD of the assembled `L` (small grids only), classified like
/// [`near_kernel`].
pub fn near_kernel_dense(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    opts: &ThresholdOptions,
) -> Result<KernelReport> {
    let op = LOperator::new(lat, rc, cfg)?;
    let n = lat.sites();
    if n > 400 {
        return Err(GlError::Precondition(format!("dense assembly refused for {n} sites")));
    }
    let m: DMatrix<f64> = crate::linalg::assemble(4 * n, &|v| op.apply_flat(v));
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let threshold = near_kernel_threshold(lat, opts.c);
    let take = opts.count.min(order.len());
    let values: Vec<f64> = order[..take].iter().map(|&k| svd.singular_values[k].powi(2)).collect();
    let right: Vec<Vector> = order[..take].iter().map(|&k| vt.row(k).iter().copied().collect()).collect();
    let left: Vec<Vector> = order[..take].iter().map(|&k| u.column(k).iter().copied().collect()).collect();
    let normal = |v: &[f64]| op.adjoint_flat(&op.apply_flat(v));
    let normal_c = |w: &[f64]| op.apply_flat(&op.adjoint_flat(w));
    let (modes, kept) =
        split_modes(&values, &right, threshold, &op.links, 2, &[Block::Section], &normal, opts.roughness_cut);
    let layout = [Block::Function, Block::Section];
    let (cm, ck) = split_modes(&values, &left, threshold, &op.links, 0, &layout, &normal_c, opts.roughness_cut);
    kernel_report(lat, modes, kept, Some((cm, ck.len())), threshold, opts.roughness_cut, true)
}

/// `sum conj(X phi) (-i)(c1 + i c2) psi / 2` weighted by the cell: the
/// complex pairing whose real part is `I1`. It scales by `mu^2` under
/// `v -> mu v`.
pub fn pairing(links: &Links, phi: &[Complex64], v: &Tangent) -> Complex64 {
    let xp = links.xop(phi);
    let w = links.lat.cell();
    let terms: Vec<Complex64> = (0..phi.len())
        .map(|x| 0.5 * xp[x].conj() * (-I) * Complex64::new(v.a.comp1[x], v.a.comp2[x]) * v.psi.values[x])
        .collect();
    let re = ksum(terms.iter().map(|z| z.re));
    let im = ksum(terms.iter().map(|z| z.im));
    Complex64::new(w * re, w * im)
}

/// `b - (tau - |phi|^2)/2` per site.
pub fn sign_field(links: &Links, phi: &[Complex64], tau: f64) -> Vec<f64> {
    links.b.iter().zip(phi).map(|(b, z)| b - 0.5 * (tau - z.norm_sqr())).collect()
}

/// `v -> mu v` through the complex structure.
pub fn rotate(v: &Tangent, mu: Complex64) -> Tangent {
    v.scale(mu.re).add(&v.complex_structure().scale(mu.im))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstabilityCertificate {
    #[serde(skip)]
    pub direction: Option<Tangent>,
    pub basis_index: usize,
    pub i1: f64,
    pub i2: f64,
    /// `|pairing|` before rotation; after rotation `i1 = -r`.
    pub r: f64,
    /// Half the second derivative of the energy along the direction, the
    /// coefficient of `t^2` in `E(cfg + t v) - E(cfg)`.
    pub second_variation: f64,
    /// `||dX||^2 + ||dY||^2` along the direction: the squares that vanish on
    /// exact kernel elements.
    pub squares: f64,
    /// `second_variation - (4 i1 + i2)`.
    pub pairing_defect: f64,
    pub phase_applied: [f64; 2],
    pub steps: [f64; 2],
    pub energy_drop: [f64; 2],
    pub sign_negative_fraction: f64,
    pub sign_violations: usize,
    pub sign_max: f64,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub basis_index: usize,
    pub i1: f64,
    pub i2: f64,
    pub second_variation: f64,
}

fn squares_of(links: &Links, phi: &[Complex64], v: &Tangent) -> f64 {
    let lat = &links.lat;
    let n = lat.sites();
    let psi = &v.psi.values;
    let mut curl = vec![0.0; n];
    curl_into(lat, &v.a.comp1, &v.a.comp2, &mut curl);
    let xp = links.xop(psi);
    let mut s = 0.0;
    for x in 0..n {
        let (p, q) = (lat.fwd1(x), lat.fwd2(x));
        let dx = xp[x] - I * v.a.comp1[x] * links.u1[x] * phi[p] + v.a.comp2[x] * links.u2[x] * phi[q];
        let dy = curl[x] + (phi[x].conj() * psi[x]).re;
        s += dx.norm_sqr() + dy * dy;
    }
    lat.cell() * s
}

fn check_irreducible_nonvortex(links: &Links, cfg: &Configuration, cpl: &Coupling) -> Result<()> {
    if cfg.phi.norm_sup() <= 1e-4 * cpl.tau.sqrt() {
        return Err(GlError::Precondition("configuration is reducible".into()));
    }
    let d = links.lat.degree as f64;
    let (x, y) = colocated_bogomolny_norms(links, &cfg.phi.values, cpl.tau);
    let t = 1e-2 * (2.0 * std::f64::consts::PI * cpl.tau * d).sqrt();
    if x < t && y < t {
        return Err(GlError::VortexDetected);
    }
    Ok(())
}

/// Searches the near-kernel for an energy-decreasing direction. Every basis
/// vector is rotated by the phase making `I1 = -r`; candidates are ranked by
/// second variation and the first with a negative energy change at both
/// sampled steps is returned.
pub fn certify_instability(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    kernel: &KernelReport,
) -> Result<InstabilityCertificate> {
    cfg.check(lat)?;
    let links = Links::new(lat, rc, &cfg.a);
    check_irreducible_nonvortex(&links, cfg, cpl)?;
    if kernel.basis.is_empty() {
        return Err(GlError::Precondition("empty near-kernel".into()));
    }
    let phi = &cfg.phi.values;
    let hess = Hessian::new(lat, rc, cfg, cpl)?;
    let sign = sign_field(&links, phi, cpl.tau);
    let w = lat.cell();
    struct Cand {
        k: usize,
        dir: Tangent,
        mu: Complex64,
        r: f64,
        i1: f64,
        i2: f64,
        sv: f64,
    }
    let mut cands = Vec::new();
    for (k, b) in kernel.basis.iter().enumerate() {
        let b = b.scale(1.0 / b.norm(lat));
        let p = pairing(&links, phi, &b);
        let (r, theta) = (p.norm(), p.arg());
        let mu = Complex64::from_polar(1.0, 0.5 * (std::f64::consts::PI - theta));
        let dir = rotate(&b, mu);
        let i1 = pairing(&links, phi, &dir).re;
        let i2 = w * ksum(sign.iter().zip(&dir.psi.values).map(|(s, z)| s * z.norm_sqr()));
        let sv = 0.5 * hess.quadratic(&dir);
        cands.push(Cand { k, dir, mu, r, i1, i2, sv });
    }
    cands.sort_by(|a, b| a.sv.total_cmp(&b.sv));
    let summaries: Vec<CandidateSummary> = cands
        .iter()
        .map(|c| CandidateSummary { basis_index: c.k, i1: c.i1, i2: c.i2, second_variation: c.sv })
        .collect();
    let e0 = total_energy(&links, phi, cpl);
    let scale = cfg.phi.norm_l2(lat);
    let steps = [1e-2 * scale, 1e-1 * scale];
    for c in cands.iter().filter(|c| c.sv < 0.0) {
        let drop = steps.map(|t| {
            let moved = Configuration {
                a: cfg.a.add(&c.dir.a.scale(t)),
                phi: cfg.phi.add(&c.dir.psi.scale(Complex64::new(t, 0.0))),
            };
            total_energy(&Links::new(lat, rc, &moved.a), &moved.phi.values, cpl) - e0
        });
        if drop.iter().all(|d| *d < 0.0) {
            let negative = sign.iter().filter(|s| **s < 0.0).count();
            return Ok(InstabilityCertificate {
                direction: Some(c.dir.clone()),
                basis_index: c.k,
                i1: c.i1,
                i2: c.i2,
                r: c.r,
                second_variation: c.sv,
                squares: squares_of(&links, phi, &c.dir),
                pairing_defect: c.sv - (4.0 * c.i1 + c.i2),
                phase_applied: [c.mu.re, c.mu.im],
                steps,
                energy_drop: drop,
                sign_negative_fraction: negative as f64 / sign.len() as f64,
                sign_violations: sign.len() - negative,
                sign_max: sign.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                candidates: summaries,
            });
        }
    }
    Err(GlError::CertificationFailed)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexReport {
    pub count: usize,
    pub negative_eigenvalues: Vec<f64>,
    /// `d + 1`.
    pub expected_min: usize,
    pub satisfied: bool,
    pub threshold: f64,
}

/// Counts negative slice-Hessian eigenvalues, enlarging the block until a
/// non-negative eigenvalue has been seen.
pub fn index_lower_bound(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    opts: &HessianOptions,
) -> Result<IndexReport> {
    let mut m = 2 * lat.degree as usize + 4;
    loop {
        let rep = hessian_eigs(lat, rc, cfg, cpl, m, opts)?;
        let top = rep.eigenvalues.last().copied().unwrap_or(0.0);
        if top >= -rep.threshold || m >= 4 * lat.sites() / 2 {
            let neg: Vec<f64> = rep.eigenvalues.iter().copied().filter(|&v| v < -rep.threshold).collect();
            let expected_min = lat.degree as usize + 1;
            return Ok(IndexReport {
                count: neg.len(),
                satisfied: neg.len() >= expected_min,
                negative_eigenvalues: neg,
                expected_min,
                threshold: rep.threshold,
            });
        }
        m *= 2;
    }
}

/// `alpha = -i (c1 + i c2)`: the (0,1) part of a connection perturbation,
/// normalized so that `|alpha| = |c|` pointwise.
pub fn alpha_from_a(a: &OneForm) -> ScalarField {
    ScalarField { values: a.comp1.iter().zip(&a.comp2).map(|(c1, c2)| -I * Complex64::new(*c1, *c2)).collect() }
}

/// Inverse of [`alpha_from_a`].
pub fn a_from_alpha(alpha: &ScalarField) -> OneForm {
    let z: Vec<Complex64> = alpha.values.iter().map(|a| I * a).collect();
    OneForm { comp1: z.iter().map(|v| v.re).collect(), comp2: z.iter().map(|v| v.im).collect() }
}

/// The vortex map `nu = (-(b - (tau - |phi|^2)/2), X phi)` and its exact
/// derivative. With this normalization `||nu||^2` is the sum of the two
/// Bogomolny squares.
#[derive(Clone, Debug)]
pub struct VortexMap {
    pub links: Links,
    pub phi: Vec<Complex64>,
    pub tau: f64,
}

impl VortexMap {
    pub fn new(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration, tau: f64) -> Result<Self> {
        cfg.check(lat)?;
        Ok(Self { links: Links::new(lat, rc, &cfg.a), phi: cfg.phi.values.clone(), tau })
    }

    /// `[r (N real), z (N complex, interleaved)]`.
    pub fn residual(&self) -> Vector {
        let mut out: Vector = sign_field(&self.links, &self.phi, self.tau).iter().map(|v| -v).collect();
        interleave(&self.links.xop(&self.phi), &mut out);
        out
    }

    pub fn apply_flat(&self, v: &[f64]) -> Vector {
        let lat = &self.links.lat;
        let n = lat.sites();
        let t = Tangent::from_flat(lat, v).expect("flat tangent of lattice size");
        let psi = &t.psi.values;
        let phi = &self.phi;
        let mut curl = vec![0.0; n];
        curl_into(lat, &t.a.comp1, &t.a.comp2, &mut curl);
        let mut out: Vector = (0..n).map(|x| -curl[x] - (phi[x].conj() * psi[x]).re).collect();
        let xp = self.links.xop(psi);
        let z: Vec<Complex64> = (0..n)
            .map(|x| {
                xp[x] - I * t.a.comp1[x] * self.links.u1[x] * phi[lat.fwd1(x)]
                    + t.a.comp2[x] * self.links.u2[x] * phi[lat.fwd2(x)]
            })
            .collect();
        interleave(&z, &mut out);
        out
    }

    pub fn adjoint_flat(&self, w: &[f64]) -> Vector {
        let lat = &self.links.lat;
        let n = lat.sites();
        let phi = &self.phi;
        let r = &w[..n];
        let z = r2c(&w[n..]);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let (mut a1, mut a2) = curl_t(lat, &neg);
        let xa = self.links.xop_adj(&z);
        let mut psi = Vec::with_capacity(n);
        for x in 0..n {
            let g1 = -I * self.links.u1[x] * phi[lat.fwd1(x)];
            let g2 = self.links.u2[x] * phi[lat.fwd2(x)];
            a1[x] += (z[x].conj() * g1).re;
            a2[x] += (z[x].conj() * g2).re;
            psi.push(xa[x] - r[x] * phi[x]);
        }
        Tangent { a: OneForm { comp1: a1, comp2: a2 }, psi: ScalarField { values: psi } }.to_flat()
    }

    /// `D nu` in the `alpha` picture.
    pub fn apply_alpha(&self, alpha: &ScalarField, psi: &ScalarField) -> (Vec<f64>, ScalarField) {
        let n = self.links.lat.sites();
        let t = Tangent { a: a_from_alpha(alpha), psi: psi.clone() };
        let out = self.apply_flat(&t.to_flat());
        (out[..n].to_vec(), ScalarField { values: r2c(&out[n..]) })
    }

    /// Adjoint of [`VortexMap::apply_alpha`].
    pub fn adjoint_alpha(&self, f: &[f64], xi: &ScalarField) -> (ScalarField, ScalarField) {
        let mut w = f.to_vec();
        interleave(&xi.values, &mut w);
        let t = Tangent::from_flat(&self.links.lat, &self.adjoint_flat(&w)).expect("lattice size");
        (alpha_from_a(&t.a), t.psi)
    }

    /// `D nu* D nu + d d*` on the connection part: the normal operator of
    /// `D nu` restricted to `d* c = 0`.
    fn normal_flat(&self, v: &[f64]) -> Vector {
        let lat = &self.links.lat;
        let n = lat.sites();
        let mut y = self.adjoint_flat(&self.apply_flat(v));
        let mut div = vec![0.0; n];
        codiff1_into(lat, &v[..n], &v[n..2 * n], &mut div);
        let g = crate::lattice::gradient0(lat, &div);
        for x in 0..n {
            y[x] += g.comp1[x];
            y[n + x] += g.comp2[x];
        }
        y
    }
}

#[derive(Clone, Debug)]
pub struct VortexSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for VortexSolveOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 40 }
    }
}

/// Gauss-Newton on `||nu||^2`, started from `cfg`. Returns the solution
/// and the final residual norm.
pub fn solve_vortex_equations(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    tau: f64,
    opts: &VortexSolveOptions,
) -> Result<(Configuration, f64)> {
    let n = lat.sites();
    let solver = PoissonSolver::new(lat);
    let wn = |r: &[f64]| (lat.cell() * dot(r, r)).sqrt();
    let mut cur = cfg.clone();
    let mut map = VortexMap::new(lat, rc, &cur, tau)?;
    let mut res = map.residual();
    let mut rn = wn(&res);
    let scale = (tau * lat.area()).sqrt();
    for _ in 0..opts.max_iter {
        if rn <= opts.tol * scale {
            return Ok((cur, rn));
        }
        let shift = mean_phi2(&map.phi) + 1.0 / lat.area();
        let pre = fourier_precond(&solver, n, 2, 1, shift, 1.0);
        let rhs: Vector = map.adjoint_flat(&res).iter().map(|v| -v).collect();
        let sol = minres(&|v| map.normal_flat(v), &rhs, Some(&pre), &MinresOptions { rtol: 1e-12, max_iter: 20000 })?;
        let step = Tangent::from_flat(lat, &sol.x)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = Configuration {
                a: cur.a.add(&step.a.scale(alpha)),
                phi: cur.phi.add(&step.psi.scale(Complex64::new(alpha, 0.0))),
            };
            let m = VortexMap::new(lat, rc, &trial, tau)?;
            let r = m.residual();
            let tn = wn(&r);
            if tn < rn {
                cur = trial;
                map = m;
                res = r;
                rn = tn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn <= opts.tol * scale {
        Ok((cur, rn))
    } else {
        Err(GlError::IterationLimit { iterations: opts.max_iter, residual: rn })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HessianCheck {
    /// `||D nu v||^2`.
    pub dnu_sq: f64,
    /// Half the second variation of the two Bogomolny squares.
    pub squares_half: f64,
    /// Half the full second variation, lattice remainder included.
    pub full_half: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VortexLinearization {
    /// Near-kernel of `D nu` restricted to `d* c = 0`.
    pub kernel: KernelReport,
    /// Lowest computed singular values of `D nu*` with roughness.
    pub adjoint_modes: Vec<SingularMode>,
    /// Smallest physical singular value of the adjoint.
    pub adjoint_min_physical: Option<f64>,
    pub nu_residual: f64,
    pub checks: Vec<HessianCheck>,
    pub max_rel_err_squares: f64,
    pub max_rel_err_full: f64,
    /// Smallest slice-Hessian eigenvalue orthogonal to the near-kernel.
    pub morse_bott_gap: Option<f64>,
    /// `||L t|| / ||t||` for moduli tangents, minimized over gauge directions.
    pub moduli_l_residual: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct VortexOptions {
    pub threshold: ThresholdOptions,
    pub solve: VortexSolveOptions,
    pub random_directions: usize,
    pub seed: u64,
    pub hessian: HessianOptions,
}

impl Default for VortexOptions {
    fn default() -> Self {
        Self {
            threshold: ThresholdOptions::default(),
            solve: VortexSolveOptions::default(),
            random_directions: 20,
            seed: 99,
            hessian: HessianOptions::default(),
        }
    }
}

/// Moduli analysis at a vortex. `cfg` must be an energy minimizer at
/// critical coupling; the vortex equations are then solved exactly on the
/// lattice from it, and `D nu` is analysed at that solution. The Morse-Bott
/// gap is taken from the energy Hessian at `cfg`.
pub fn vortex_linearization(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    opts: &VortexOptions,
) -> Result<VortexLinearization> {
    if !cpl.is_critical() {
        return Err(GlError::Precondition("vortex moduli need kappa = 1/sqrt(2)".into()));
    }
    let (sol, nu_residual) = solve_vortex_equations(lat, rc, cfg, cpl.tau, &opts.solve)?;
    let map = VortexMap::new(lat, rc, &sol, cpl.tau)?;
    let n = lat.sites();
    let solver = PoissonSolver::new(lat);
    let shift = mean_phi2(&map.phi) + 1.0 / lat.area();
    let pre = fourier_precond(&solver, n, 2, 1, shift, 1.0);
    let topt = &opts.threshold;
    let res = lobpcg(4 * n, topt.count, &|v| map.normal_flat(v), Some(&pre), &[], &topt.eig)?;
    let threshold = near_kernel_threshold(lat, topt.c);
    let normal = |v: &[f64]| map.normal_flat(v);
    let (modes, kept) =
        split_modes(&res.values, &res.vectors, threshold, &map.links, 2, &[Block::Section], &normal, topt.roughness_cut);
    // Adjoint side: lowest eigenvalues of D nu D nu*.
    let pre_c = {
        let s = &solver;
        move |w: &[f64]| {
            let mut out = s.apply_multiplier_real(&w[..n], |q| 1.0 / (q + shift));
            let mut z = r2c(&w[n..]);
            s.apply_multiplier(&mut z, |q| 1.0 / (q + shift));
            out.extend(c2r(&z));
            out
        }
    };
    let normal_c = |w: &[f64]| map.apply_flat(&map.adjoint_flat(w));
    let adj = lobpcg(3 * n, topt.count, &normal_c, Some(&pre_c), &[], &topt.eig)?;
    let (adjoint_modes, adj_kept) =
        split_modes(&adj.values, &adj.vectors, threshold, &map.links, 1, &[Block::Section], &normal_c, topt.roughness_cut);
    let adjoint_min_physical = adjoint_modes.iter().filter(|m| m.physical).map(|m| m.sigma).reduce(f64::min);

    // Second variation against ||D nu v||^2 on random directions.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let hess = Hessian::new(lat, rc, &sol, cpl)?;
    let mut checks = Vec::new();
    let (mut e_sq, mut e_full) = (0.0f64, 0.0f64);
    for _ in 0..opts.random_directions {
        let v: Vector = (0..4 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dv = map.apply_flat(&v);
        let dnu_sq = lat.cell() * dot(&dv, &dv);
        let t = Tangent::from_flat(lat, &v)?;
        let bog = crate::spectral::hessian_quadratic_bogomolny(lat, rc, &sol, cpl, &t)?;
        let full_half = 0.5 * hess.quadratic(&t);
        let c = HessianCheck { dnu_sq, squares_half: 0.5 * bog.squares, full_half };
        e_sq = e_sq.max((c.squares_half - dnu_sq).abs() / dnu_sq);
        e_full = e_full.max((c.full_half - dnu_sq).abs() / dnu_sq);
        checks.push(c);
    }

    // Morse-Bott gap at the energy minimizer, orthogonal to the moduli.
    let sh = SliceHessian::new(lat, rc, cfg, cpl)?;
    let mut eig = opts.hessian.eig.clone();
    eig.tol = eig.tol.max(1e-8);
    let gap_res = lobpcg(sh.dim(), 4, &|v| sh.apply(v), Some(&|v: &[f64]| sh.precondition(v)), &kept, &eig)?;
    let morse_bott_gap = gap_res
        .values
        .iter()
        .zip(&gap_res.vectors)
        .find(|(l, v)| !sh.is_gauge_mode(v, **l))
        .map(|(l, _)| 0.5 * l);

    let lop = LOperator::new(lat, rc, &sol)?;
    let moduli_l_residual = kept
        .iter()
        .filter(|v| {
            // Skip the constant phase rotation, which L does not annihilate.
            let t = Tangent::from_flat(lat, v).expect("size");
            let ip = ScalarField { values: sol.phi.values.iter().map(|z| I * z).collect() };
            let c = t.psi.dot(lat, &ip).abs() / (t.norm(lat) * ip.norm_l2(lat));
            c < 0.5
        })
        .map(|v| gauge_minimized_residual(&lop, lat, v))
        .collect::<Result<Vec<f64>>>()?;

    let basis = to_tangents(lat, &kept)?;
    Ok(VortexLinearization {
        kernel: KernelReport {
            near_kernel_dim: kept.len(),
            singular_values: modes.iter().filter(|m| m.physical).map(|m| m.sigma).collect(),
            modes,
            threshold,
            roughness_cut: topt.roughness_cut,
            basis,
            complex_structure_defect: None,
            coker_dim: Some(adj_kept.len()),
            index_estimate: Some(kept.len() as i64 - adj_kept.len() as i64),
            coker_modes: adjoint_modes.clone(),
        },
        adjoint_modes,
        adjoint_min_physical,
        nu_residual,
        checks,
        max_rel_err_squares: e_sq,
        max_rel_err_full: e_full,
        morse_bott_gap,
        moduli_l_residual,
    })
}

/// `min_chi ||L (v + (d chi, i chi phi))|| / ||v||`.
fn gauge_minimized_residual(lop: &LOperator, lat: &LatticeTorus, v: &[f64]) -> Result<f64> {
    let n = lat.sites();
    let orbit = crate::spectral::GaugeOrbit { lat: lat.clone(), phi: lop.phi.clone() };
    let lv = lop.apply_flat(v);
    let m = |chi: &[f64]| orbit.adjoint(&lop.adjoint_flat(&lop.apply_flat(&orbit.apply(chi))));
    let rhs: Vector = orbit.adjoint(&lop.adjoint_flat(&lv)).iter().map(|x| -x).collect();
    let sol = minres(&m, &rhs, None, &MinresOptions { rtol: 1e-10, max_iter: 20 * n })?;
    let mut w = v.to_vec();
    let g = orbit.apply(&sol.x);
    w.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    Ok(norm(&lop.apply_flat(&w)) / norm(v))
}
