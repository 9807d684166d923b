//! Branches of irreducible solutions bifurcating from the normal phase.
//!
//! Along an eigencluster of `Delta_0` with eigenvalue `mu` the predictor is
//!
//! ```text
//! a = t^2 A,   phi = t Phi + t^3 Psi,   tau = mu / kappa^2 + eps t^2,
//! ```
//!
//! where `d* d A` is the current of `Phi`, `eps = ||Phi||_4^4 - (2/kappa^2)
//! ||dA||^2` and `Psi = -G_mu (kappa^2 |Phi|^2 Phi + Delta'[A] Phi)`, with
//! `Delta'[A]` the derivative of the covariant Laplacian in the connection.
//! The gradient of the energy at the predictor is `O(t^4)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::bundle::{Configuration, Coupling, Links, ReferenceConnection};
use crate::energy::gradient_links;
use crate::error::{GlError, Result};
use crate::lattice::{ksum, LatticeTorus, OneForm, ScalarField};
use crate::poisson::{hodge_solve_with, PoissonSolver};
use crate::solvers::{newton_refine, SolveOptions, SolveReport};
use crate::spectral::{laplacian0_spectrum, GreenOperator};

/// One point of an assembled branch.
#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub t: f64,
    pub phi_dir: ScalarField,
    pub a_coeff: OneForm,
    pub psi_coeff: ScalarField,
    pub epsilon: f64,
    pub tau: f64,
    pub assembled: Configuration,
    /// Gradient norm of the energy at `(assembled, tau)`.
    pub residual_norm: f64,
    /// Fraction of the current discarded as exact or harmonic.
    pub discarded_fraction: f64,
    /// `|<Phi_t, Phi_t'>|` with the previous point of the list.
    pub overlap_prev: Option<f64>,
    pub refined: Option<SolveReport>,
}

#[derive(Clone, Debug)]
pub struct BranchOptions {
    /// Hand each predictor to Newton refinement.
    pub refine: bool,
    /// Use the nonlinear fixed-point correction for the section.
    pub nonlinear: bool,
    pub solve: SolveOptions,
    pub direction: DirectionOptions,
    pub fixpoint: FixpointOptions,
    /// Worker threads for the per-`t` points.
    pub threads: usize,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            refine: false,
            nonlinear: false,
            solve: SolveOptions::default(),
            direction: DirectionOptions::default(),
            fixpoint: FixpointOptions::default(),
            threads: 1,
        }
    }
}

/// Current `Im(conj(phi) U0 phi_+) / h` of the reference connection.
pub fn reference_current(links0: &Links, phi: &ScalarField) -> OneForm {
    links0.current(&phi.values)
}

/// `A` with `d* d A` equal to the coexact part of the current of `Phi`,
/// together with the fraction of the current that was discarded.
pub fn coeff_a(lat: &LatticeTorus, rc: &ReferenceConnection, phi: &ScalarField) -> Result<(OneForm, f64)> {
    phi.check(lat)?;
    let links0 = Links::reference(lat, rc);
    hodge_solve_with(&PoissonSolver::new(lat), lat, &reference_current(&links0, phi))
}

/// `||Phi||_4^4 - (2/kappa^2) ||dA||^2`.
pub fn coeff_epsilon(lat: &LatticeTorus, rc: &ReferenceConnection, phi: &ScalarField, kappa: f64) -> Result<f64> {
    let (a, _) = coeff_a(lat, rc, phi)?;
    Ok(epsilon_from(lat, phi, &a, kappa))
}

fn epsilon_from(lat: &LatticeTorus, phi: &ScalarField, a: &OneForm, kappa: f64) -> f64 {
    let da = crate::lattice::exterior_d(lat, a).expect("shapes checked");
    phi.l4_pow4(lat) - 2.0 / (kappa * kappa) * da.dot(lat, &da)
}

/// `kappa^2 |Phi|^2 Phi + Delta'[A] Phi`.
fn cubic_source(links0: &Links, phi: &ScalarField, a: &OneForm, kappa: f64) -> ScalarField {
    let k2 = kappa * kappa;
    let l1 = links0.laplacian_dc(&phi.values, a);
    ScalarField { values: phi.values.iter().zip(&l1).map(|(z, l)| k2 * z.norm_sqr() * z + l).collect() }
}

/// `Psi = -G_mu (kappa^2 |Phi|^2 Phi + Delta'[A] Phi)`.
pub fn coeff_psi(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    phi: &ScalarField,
    a: &OneForm,
    kappa: f64,
    green: &GreenOperator,
) -> Result<ScalarField> {
    phi.check(lat)?;
    a.check(lat)?;
    let links0 = Links::reference(lat, rc);
    let src = cubic_source(&links0, phi, a, kappa);
    Ok(green.solve(&src)?.scale(Complex64::new(-1.0, 0.0)))
}

#[derive(Clone, Debug)]
pub struct FixpointOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for FixpointOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_sweeps: 200 }
    }
}

/// Result of the nonlinear section correction.
#[derive(Clone, Debug)]
pub struct FixpointResult {
    /// The full correction (of order `t^3`), orthogonal to the cluster.
    pub psi: ScalarField,
    /// Connection `hodge_solve(J(t Phi + psi))` at the fixed point.
    pub a: OneForm,
    pub sweeps: usize,
    /// Successive-difference ratios, one per sweep after the first.
    pub ratios: Vec<f64>,
}

/// Solves `(Delta_0 - mu) psi = P[kappa^2 eps t^2 phi - (Delta_A - Delta_0) phi
/// - kappa^2 |phi|^2 phi]` for `phi = t Phi + psi` by fixed-point sweeps, with
/// `A` recomputed from the current of `phi` every sweep.
#[allow(clippy::too_many_arguments)]
pub fn fixpoint_psi(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    phi_dir: &ScalarField,
    t: f64,
    epsilon: f64,
    kappa: f64,
    green: &GreenOperator,
    opts: &FixpointOptions,
) -> Result<FixpointResult> {
    let links0 = Links::reference(lat, rc);
    let solver = PoissonSolver::new(lat);
    let k2 = kappa * kappa;
    let base = phi_dir.scale(Complex64::new(t, 0.0));
    // Differences below this are rounding in `t Phi + psi`, not iteration error.
    let floor = 1e3 * f64::EPSILON * base.norm_l2(lat);
    let mut psi = ScalarField::zeros(lat);
    let mut a;
    let mut prev_diff: Option<f64> = None;
    let mut ratios = Vec::new();
    for sweep in 1..=opts.max_sweeps {
        let phi = base.add(&psi);
        a = hodge_solve_with(&solver, lat, &reference_current(&links0, &phi))?.0;
        let la = Links::new(lat, rc, &a).laplacian(&phi.values);
        let l0 = links0.laplacian(&phi.values);
        let rhs = ScalarField {
            values: (0..lat.sites())
                .map(|x| {
                    let z = phi.values[x];
                    k2 * epsilon * t * t * z - (la[x] - l0[x]) - k2 * z.norm_sqr() * z
                })
                .collect(),
        };
        let next = green.solve(&rhs)?;
        let diff = next.sub(&psi).norm_l2(lat);
        let size = next.norm_l2(lat);
        if diff <= opts.tol * size.max(1e-300) || diff <= floor {
            return Ok(FixpointResult { psi: next, a, sweeps: sweep, ratios });
        }
        if let Some(p) = prev_diff {
            let ratio = diff / p;
            ratios.push(ratio);
            if ratio > 1.0 && sweep > 3 {
                return Err(GlError::NotContraction { t, ratio });
            }
        }
        prev_diff = Some(diff);
        psi = next;
    }
    let ratio = ratios.last().copied().unwrap_or(f64::NAN);
    if ratio < 1.0 {
        Err(GlError::IterationLimit { iterations: opts.max_sweeps, residual: prev_diff.unwrap_or(f64::NAN) })
    } else {
        Err(GlError::NotContraction { t, ratio })
    }
}

/// `(||D_A phi||^2 + kappa^2 ||phi||_4^4) / (kappa^2 ||phi||^2) - mu / kappa^2`
/// for `phi = Phi + Psi`: the shift of `tau` from the threshold at which the
/// section equation is satisfied along `phi`. For `phi = t Phi + O(t^3)`
/// it equals `t^2` times [`coeff_epsilon`] at leading order.
pub fn epsilon_solve(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    phi: &ScalarField,
    psi: &ScalarField,
    a: &OneForm,
    kappa: f64,
    mu: f64,
) -> Result<f64> {
    phi.check(lat)?;
    psi.check(lat)?;
    a.check(lat)?;
    let f = phi.add(psi);
    let n2 = f.dot(lat, &f);
    if n2 == 0.0 {
        return Err(GlError::Precondition("zero section in epsilon_solve".into()));
    }
    let links = Links::new(lat, rc, a);
    let (g1, g2) = links.cov(&f.values);
    let kin = lat.cell() * ksum(g1.iter().zip(&g2).map(|(p, q)| p.norm_sqr() + q.norm_sqr()));
    let k2 = kappa * kappa;
    Ok((kin + k2 * f.l4_pow4(lat)) / (k2 * n2) - mu / k2)
}

#[derive(Clone, Debug)]
pub struct DirectionOptions {
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DirectionOptions {
    fn default() -> Self {
        Self { starts: 8, seed: 2024, tol: 1e-10, max_iter: 100 }
    }
}

/// Reduced map on the cluster: components of the projection of
/// `kappa^2 |Phi|^2 Phi + Delta'[A(Phi)] Phi` onto the cluster basis.
pub struct ReducedMap<'a> {
    lat: &'a LatticeTorus,
    links0: Links,
    solver: PoissonSolver,
    basis: &'a [ScalarField],
    kappa: f64,
}

impl<'a> ReducedMap<'a> {
    pub fn new(lat: &'a LatticeTorus, rc: &ReferenceConnection, basis: &'a [ScalarField], kappa: f64) -> Self {
        Self { lat, links0: Links::reference(lat, rc), solver: PoissonSolver::new(lat), basis, kappa }
    }

    pub fn section(&self, c: &[Complex64]) -> ScalarField {
        let mut s = ScalarField::zeros(self.lat);
        for (ci, e) in c.iter().zip(self.basis) {
            s.axpy(*ci, e);
        }
        s
    }

    /// The full vector `P F(Phi)` in the cluster coordinates.
    pub fn full(&self, c: &[Complex64]) -> Vec<Complex64> {
        let phi = self.section(c);
        let a = hodge_solve_with(&self.solver, self.lat, &reference_current(&self.links0, &phi)).expect("shapes").0;
        let f = cubic_source(&self.links0, &phi, &a, self.kappa);
        self.basis.iter().map(|e| e.hdot(self.lat, &f)).collect()
    }

    /// Tangential part of [`ReducedMap::full`] on the unit sphere; its
    /// `i Phi` component vanishes identically.
    pub fn tangential(&self, c: &[Complex64]) -> Vec<Complex64> {
        let f = self.full(c);
        let radial: Complex64 = c.iter().zip(&f).map(|(a, b)| a.conj() * b).sum();
        f.iter().zip(c).map(|(fi, ci)| fi - radial.re * ci).collect()
    }

    /// `Im <Phi, P F(Phi)>`, the `i Phi` component.
    pub fn phase_component(&self, c: &[Complex64]) -> f64 {
        let f = self.full(c);
        c.iter().zip(&f).map(|(a, b)| a.conj() * b).sum::<Complex64>().im
    }
}

fn normalize(c: &mut [Complex64]) {
    let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    c.iter_mut().for_each(|z| *z /= n);
}

fn fix_phase(c: &mut [Complex64]) {
    let mut best = 0;
    for (i, z) in c.iter().enumerate() {
        if z.norm() > c[best].norm() * (1.0 + 1e-9) {
            best = i;
        }
    }
    let ph = c[best].conj() / c[best].norm();
    c.iter_mut().for_each(|z| *z *= ph);
}

/// Zero of the reduced map on the unit sphere of the cluster, modulo the
/// global phase. Newton on the sphere from seeded multistarts; the result
/// with the smallest residual wins (ties broken by coefficient order).
pub fn direction_find(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cluster: &[ScalarField],
    kappa: f64,
    opts: &DirectionOptions,
) -> Result<(ScalarField, f64)> {
    let dim = cluster.len();
    if dim == 0 {
        return Err(GlError::Precondition("empty eigencluster".into()));
    }
    if dim == 1 {
        return Ok((cluster[0].clone(), 0.0));
    }
    let map = ReducedMap::new(lat, rc, cluster, kappa);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for _ in 0..opts.starts {
        let mut c: Vec<Complex64> =
            (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        normalize(&mut c);
        let res = newton_on_sphere(&map, &mut c, opts);
        fix_phase(&mut c);
        let better = match &best {
            None => true,
            Some((r, bc)) => {
                res < *r * (1.0 - 1e-6) || ((res - r).abs() <= 1e-6 * r.max(1e-300) && lex_less(&c, bc))
            }
        };
        if better {
            best = Some((res, c));
        }
    }
    let (res, c) = best.expect("at least one start");
    if res > opts.tol.max(1e-6) {
        return Err(GlError::IterationLimit { iterations: opts.max_iter, residual: res });
    }
    Ok((map.section(&c), res))
}

fn lex_less(a: &[Complex64], b: &[Complex64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        for (p, q) in [(x.re, y.re), (x.im, y.im)] {
            if (p - q).abs() > 1e-9 {
                return p < q;
            }
        }
    }
    false
}

fn residual_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn newton_on_sphere(map: &ReducedMap<'_>, c: &mut Vec<Complex64>, opts: &DirectionOptions) -> f64 {
    let dim = c.len();
    let n = 2 * dim;
    let flat = |c: &[Complex64]| -> Vec<f64> { c.iter().flat_map(|z| [z.re, z.im]).collect() };
    let mut r = map.tangential(c);
    let mut rn = residual_norm(&r);
    for _ in 0..opts.max_iter {
        if rn < opts.tol {
            break;
        }
        // Finite-difference Jacobian of the tangential residual.
        let h = 1e-6;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let mut cp = c.clone();
            let mut cm = c.clone();
            let d = if k % 2 == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
            cp[k / 2] += d;
            cm[k / 2] -= d;
            let fp = flat(&map.tangential(&cp));
            let fm = flat(&map.tangential(&cm));
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_vec(flat(&r).iter().map(|v| -v).collect());
        let svd = jac.svd(true, true);
        let Ok(step) = svd.solve(&rhs, 1e-10 * svd.singular_values.max()) else {
            break;
        };
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let mut trial: Vec<Complex64> =
                c.iter().enumerate().map(|(i, z)| z + alpha * Complex64::new(step[2 * i], step[2 * i + 1])).collect();
            normalize(&mut trial);
            let rt = map.tangential(&trial);
            let rtn = residual_norm(&rt);
            if rtn < rn {
                *c = trial;
                r = rt;
                rn = rtn;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    rn
}

/// Builds the branch from eigencluster `level_index` at every `t` in the
/// list. Failures at individual `t` are kept in the output.
pub fn assemble_branch(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    kappa: f64,
    level_index: usize,
    t_list: &[f64],
    opts: &BranchOptions,
) -> Result<Vec<Result<BranchPoint>>> {
    if level_index == 0 {
        return Err(GlError::Precondition("levels are counted from 1".into()));
    }
    let per = lat.degree.max(1) as usize;
    let spec = laplacian0_spectrum(lat, rc, (per * (level_index + 1)).min(lat.sites()))?;
    let cluster = spec
        .cluster_sections(level_index)
        .ok_or_else(|| GlError::Precondition(format!("level {level_index} beyond computed spectrum")))?;
    let mu = spec.cluster_value(level_index).expect("cluster exists");
    let green = GreenOperator::new(lat, rc, mu, &cluster)?;
    let (phi_dir, _) = direction_find(lat, rc, &cluster, kappa, &opts.direction)?;
    let (a_coeff, discarded) = coeff_a(lat, rc, &phi_dir)?;
    let epsilon = epsilon_from(lat, &phi_dir, &a_coeff, kappa);
    let psi_coeff = coeff_psi(lat, rc, &phi_dir, &a_coeff, kappa, &green)?;
    let point_at = |t: f64| -> Result<BranchPoint> {
        if !(t > 0.0) {
            return Err(GlError::Precondition(format!("branch parameter must be positive, got {t}")));
        }
        let tau = mu / (kappa * kappa) + epsilon * t * t;
        let assembled = if opts.nonlinear {
            let fp = fixpoint_psi(lat, rc, &phi_dir, t, epsilon, kappa, &green, &opts.fixpoint)?;
            Configuration { a: fp.a, phi: phi_dir.scale(Complex64::new(t, 0.0)).add(&fp.psi) }
        } else {
            Configuration {
                a: a_coeff.scale(t * t),
                phi: phi_dir.scale(Complex64::new(t, 0.0)).add(&psi_coeff.scale(Complex64::new(t * t * t, 0.0))),
            }
        };
        let cpl = Coupling::new(tau, kappa)?;
        let links = Links::new(lat, rc, &assembled.a);
        let residual_norm = gradient_links(&links, &assembled.phi.values, &cpl).norm(lat);
        let refined = if opts.refine { Some(newton_refine(lat, rc, &cpl, &assembled, &opts.solve)?) } else { None };
        Ok(BranchPoint {
            t,
            phi_dir: phi_dir.clone(),
            a_coeff: a_coeff.clone(),
            psi_coeff: psi_coeff.clone(),
            epsilon,
            tau,
            assembled,
            residual_norm,
            discarded_fraction: discarded,
            overlap_prev: None,
            refined,
        })
    };
    let threads = opts.threads.max(1).min(t_list.len().max(1));
    let mut out: Vec<Result<BranchPoint>> = if threads == 1 {
        t_list.iter().map(|&t| point_at(t)).collect()
    } else {
        let chunk = t_list.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = t_list
                .chunks(chunk)
                .map(|ts| s.spawn(|| ts.iter().map(|&t| point_at(t)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("branch worker panicked")).collect()
        })
    };
    // One direction serves the whole list, so consecutive overlaps are 1.
    for p in out.iter_mut().skip(1).flatten() {
        p.overlap_prev = Some(phi_dir.hdot(lat, &phi_dir).norm());
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Branch table row for CSV output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchRow {
    pub t: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub residual: f64,
    pub classification: String,
    pub harmonic_defect: f64,
}

impl BranchPoint {
    pub fn row(&self) -> BranchRow {
        let (classification, harmonic_defect) = match &self.refined {
            Some(r) => (r.classification.to_string(), r.harmonic[0].hypot(r.harmonic[1])),
            None => ("predictor".to_string(), 0.0),
        };
        BranchRow { t: self.t, tau: self.tau, epsilon: self.epsilon, residual: self.residual_norm, classification, harmonic_defect }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial(area_side: f64) -> (LatticeTorus, ReferenceConnection, ScalarField) {
        let lat = LatticeTorus::new(8, 8, area_side, area_side, 0).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let c = 1.0 / lat.area().sqrt();
        let phi = ScalarField::constant(&lat, Complex64::new(c, 0.0));
        (lat, rc, phi)
    }

    #[test]
    fn constant_section_on_trivial_bundle() {
        let (lat, rc, phi) = trivial(1.0);
        let (a, frac) = coeff_a(&lat, &rc, &phi).unwrap();
        assert_eq!(a.norm_sup(), 0.0);
        assert_eq!(frac, 0.0);
        assert!((coeff_epsilon(&lat, &rc, &phi, 0.7).unwrap() - 1.0).abs() < 1e-12);
        let (lat, rc, phi) = trivial(2.0);
        assert!((coeff_epsilon(&lat, &rc, &phi, 0.7).unwrap() - 0.25).abs() < 1e-12);
        let green = GreenOperator::new(&lat, &rc, 0.0, std::slice::from_ref(&phi)).unwrap();
        let psi = coeff_psi(&lat, &rc, &phi, &a, 0.7, &green).unwrap();
        assert!(psi.norm_sup() < 1e-14);
    }

    #[test]
    fn epsilon_solve_cancels_the_eigenvalue() {
        let lat = LatticeTorus::unit(12, 1).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let spec = laplacian0_spectrum(&lat, &rc, 1).unwrap();
        let phi = &spec.eigensections[0];
        let z = ScalarField::zeros(&lat);
        let e = epsilon_solve(&lat, &rc, phi, &z, &OneForm::zeros(&lat), 0.6, spec.eigenvalues[0]).unwrap();
        assert!((e - phi.l4_pow4(&lat)).abs() < 1e-9);
    }

    #[test]
    fn fixpoint_on_trivial_bundle_is_exact_vacuum() {
        // Constant sections: psi stays zero and tau = eps t^2 solves exactly.
        let (lat, rc, phi) = trivial(1.0);
        let green = GreenOperator::new(&lat, &rc, 0.0, std::slice::from_ref(&phi)).unwrap();
        let t = 0.3;
        let fp = fixpoint_psi(&lat, &rc, &phi, t, 1.0, 0.8, &green, &FixpointOptions::default()).unwrap();
        assert!(fp.psi.norm_sup() < 1e-14);
        let tau = t * t * 1.0;
        let cfg = Configuration { a: fp.a, phi: phi.scale(Complex64::new(t, 0.0)) };
        let g = crate::energy::gradient(&lat, &rc, &cfg, &Coupling::new(tau, 0.8).unwrap()).unwrap();
        assert!(g.norm(&lat) < 1e-13);
        let e = epsilon_solve(&lat, &rc, &cfg.phi, &ScalarField::zeros(&lat), &cfg.a, 0.8, 0.0).unwrap();
        assert!((e - tau).abs() < 1e-14);
    }

    #[test]
    fn reduced_map_phase_component_vanishes_and_is_equivariant() {
        let lat = LatticeTorus::unit(16, 2).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let spec = laplacian0_spectrum(&lat, &rc, 2).unwrap();
        let map = ReducedMap::new(&lat, &rc, &spec.eigensections, 0.7);
        let c = vec![Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.7)];
        let f = map.full(&c);
        assert!(map.phase_component(&c).abs() < 1e-12 * residual_norm(&f));
        let mu = Complex64::from_polar(1.0, 1.1);
        let cm: Vec<Complex64> = c.iter().map(|z| z * mu).collect();
        let fm = map.full(&cm);
        for (a, b) in fm.iter().zip(&f) {
            assert!((a - mu * b).norm() < 1e-10 * residual_norm(&f));
        }
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x = [0.1, 0.2, 0.4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(4)).collect();
        assert!((loglog_slope(&x, &y) - 4.0).abs() < 1e-12);
    }
}
