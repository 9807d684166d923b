//! Energy minimization, gauge-fixed Newton refinement and classification of
//! the resulting critical points.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::{gauge_by_angle, Configuration, Coupling, Links, ReferenceConnection};
use crate::energy::{colocated_bogomolny_norms, energy_from_links, gradient_links, total_energy, EnergyBreakdown, Hessian};
use crate::error::{GlError, Result};
use crate::lattice::{LatticeTorus, OneForm, ScalarField};
use crate::linalg::{minres, MinresOptions};
use crate::poisson::{exact_potential, PoissonSolver};
use crate::spectral::{hessian_eigs, HessianOptions, SliceHessian};
use crate::tangent::Tangent;

pub use crate::spectral::find_threshold;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Normal,
    Vortex,
    Nonminimal,
    Unconverged,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Normal => "normal",
            Classification::Vortex => "vortex",
            Classification::Nonminimal => "nonminimal",
            Classification::Unconverged => "unconverged",
        };
        f.write_str(s)
    }
}

/// The numbers a classification was decided on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evidence {
    pub phi_sup: f64,
    pub irreducible_threshold: f64,
    /// `||(D_1 + i D_2) phi||` with site-centred differences, present at
    /// critical coupling. Used for the vortex decision.
    pub dbar_norm: Option<f64>,
    /// `||b - (tau - |phi|^2)/2||` with plaquette-averaged curvature.
    pub residual_norm: Option<f64>,
    /// The same two norms with forward differences (first order in `h`).
    pub forward_dbar_norm: Option<f64>,
    pub forward_residual_norm: Option<f64>,
    pub vortex_threshold: Option<f64>,
    pub hessian_min: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub final_cfg: Configuration,
    pub grad_norm: f64,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub classification: Classification,
    pub evidence: Evidence,
    /// Mean components of the connection perturbation.
    pub harmonic: [f64; 2],
    pub energy_history: Vec<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub newton_max_iter: usize,
    /// `||phi||_inf > irreducible_tol * sqrt(tau)` marks an irreducible point.
    pub irreducible_tol: f64,
    /// Both Bogomolny norms below `vortex_tol * sqrt(2 pi tau d)` mark a vortex.
    pub vortex_tol: f64,
    /// Compute the lowest slice Hessian eigenvalue as extra evidence.
    pub hessian_check: bool,
    pub seed: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 20000,
            newton_max_iter: 60,
            irreducible_tol: 1e-4,
            vortex_tol: 1e-2,
            hessian_check: false,
            seed: None,
        }
    }
}

/// A small random configuration from a recorded seed.
pub fn random_init(lat: &LatticeTorus, amplitude: f64, seed: u64) -> Configuration {
    let mut c = Configuration::random(lat, 0.0, amplitude, seed);
    c.a = OneForm::zeros(lat);
    c
}

struct Workspace<'a> {
    lat: &'a LatticeTorus,
    rc: &'a ReferenceConnection,
    cpl: &'a Coupling,
    solver: PoissonSolver,
}

impl<'a> Workspace<'a> {
    fn new(lat: &'a LatticeTorus, rc: &'a ReferenceConnection, cpl: &'a Coupling) -> Self {
        Self { lat, rc, cpl, solver: PoissonSolver::new(lat) }
    }

    fn links(&self, cfg: &Configuration) -> Links {
        Links::new(self.lat, self.rc, &cfg.a)
    }

    fn energy(&self, cfg: &Configuration) -> f64 {
        total_energy(&self.links(cfg), &cfg.phi.values, self.cpl)
    }

    fn gradient(&self, cfg: &Configuration) -> Tangent {
        gradient_links(&self.links(cfg), &cfg.phi.values, self.cpl)
    }

    /// Moves into the Coulomb slice; returns the phase applied to sections.
    fn project(&self, cfg: &mut Configuration) -> Vec<f64> {
        let chi: Vec<f64> = exact_potential(&self.solver, self.lat, &cfg.a).iter().map(|v| -v).collect();
        *cfg = gauge_by_angle(self.lat, cfg, &chi);
        chi
    }

    /// Rotates the global phase so that `phi` is real and positive at its
    /// largest entry.
    fn pin_phase(&self, cfg: &mut Configuration) {
        let mut best = 0;
        for (i, z) in cfg.phi.values.iter().enumerate() {
            if z.norm() > cfg.phi.values[best].norm() * (1.0 + 1e-12) {
                best = i;
            }
        }
        let z = cfg.phi.values[best];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            cfg.phi = cfg.phi.scale(ph);
        }
    }

    fn precondition(&self, g: &Tangent) -> Tangent {
        let sigma = 2.0 * (self.cpl.kappa * self.cpl.kappa * self.cpl.tau + self.rc.f0) + 1.0 / self.lat.area();
        let m = |s: f64| 1.0 / (2.0 * s + sigma);
        let a = OneForm {
            comp1: self.solver.apply_multiplier_real(&g.a.comp1, m),
            comp2: self.solver.apply_multiplier_real(&g.a.comp2, m),
        };
        let mut z = g.psi.values.clone();
        self.solver.apply_multiplier(&mut z, m);
        Tangent { a, psi: ScalarField { values: z } }
    }
}

fn step(cfg: &Configuration, p: &Tangent, alpha: f64) -> Configuration {
    Configuration { a: cfg.a.add(&p.a.scale(alpha)), phi: cfg.phi.add(&p.psi.scale(Complex64::new(alpha, 0.0))) }
}

fn rotate_sections(t: &Tangent, chi: &[f64]) -> Tangent {
    Tangent {
        a: t.a.clone(),
        psi: ScalarField {
            values: t.psi.values.iter().zip(chi).map(|(z, &c)| z * Complex64::from_polar(1.0, c)).collect(),
        },
    }
}

/// Classifies a configuration and assembles a report.
pub fn classify(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cpl: &Coupling,
    cfg: Configuration,
    iterations: usize,
    energy_history: Vec<f64>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let links = Links::new(lat, rc, &cfg.a);
    let grad_norm = gradient_links(&links, &cfg.phi.values, cpl).norm(lat);
    let energy = energy_from_links(&links, &cfg.phi.values, cpl);
    let phi_sup = cfg.phi.norm_sup();
    let irreducible_threshold = opts.irreducible_tol * cpl.tau.sqrt();
    let (dbar_norm, residual_norm, forward_dbar_norm, forward_residual_norm, vortex_threshold) =
        match &energy.bogomolny {
            Some(b) => {
                let (x, y) = colocated_bogomolny_norms(&links, &cfg.phi.values, cpl.tau);
                (
                    Some(x),
                    Some(y),
                    Some(b.dbar_term.sqrt()),
                    Some(b.residual_term.sqrt()),
                    Some(opts.vortex_tol * (2.0 * std::f64::consts::PI * cpl.tau * lat.degree as f64).sqrt()),
                )
            }
            None => (None, None, None, None, None),
        };
    let hessian_min = if opts.hessian_check && grad_norm < opts.grad_tol {
        hessian_eigs(lat, rc, &cfg, cpl, 1, &HessianOptions::default())?.eigenvalues.first().copied()
    } else {
        None
    };
    let classification = if grad_norm >= opts.grad_tol || !grad_norm.is_finite() {
        Classification::Unconverged
    } else if phi_sup <= irreducible_threshold {
        Classification::Normal
    } else {
        match (dbar_norm, residual_norm, vortex_threshold) {
            (Some(x), Some(y), Some(t)) if x < t && y < t => Classification::Vortex,
            _ => Classification::Nonminimal,
        }
    };
    let harmonic = cfg.a.harmonic_part();
    Ok(SolveReport {
        final_cfg: cfg,
        grad_norm,
        energy,
        iterations,
        classification,
        evidence: Evidence {
            phi_sup,
            irreducible_threshold,
            dbar_norm,
            residual_norm,
            forward_dbar_norm,
            forward_residual_norm,
            vortex_threshold,
            hessian_min,
        },
        harmonic,
        energy_history,
        seed: opts.seed,
    })
}

/// Preconditioned nonlinear conjugate gradients with Armijo backtracking
/// and Coulomb projection every iteration. A short Newton polish finishes
/// the solve once the descent stalls at rounding level.
pub fn minimize(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cpl: &Coupling,
    init: &Configuration,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    init.check(lat)?;
    let ws = Workspace::new(lat, rc, cpl);
    let mut cfg = init.clone();
    ws.project(&mut cfg);
    let mut e = ws.energy(&cfg);
    let mut history = vec![e];
    let mut g = ws.gradient(&cfg);
    let mut z = ws.precondition(&g);
    let mut p = z.scale(-1.0);
    let mut gz = g.dot(lat, &z);
    let mut alpha_prev = 1.0;
    let mut it = 0;
    let mut stalls = 0;
    let mut best_gn = g.norm(lat);
    while it < opts.max_iter {
        let gn = g.norm(lat);
        if gn < opts.grad_tol {
            break;
        }
        let mut slope = g.dot(lat, &p);
        if slope >= 0.0 {
            p = z.scale(-1.0);
            slope = -gz;
        }
        // Newton estimate of the step along p.
        let hess = Hessian { links: ws.links(&cfg), phi: cfg.phi.values.clone(), cpl: *cpl };
        let curv = hess.quadratic(&p);
        let mut alpha = if curv > 0.0 { -slope / curv } else { 2.0 * alpha_prev };
        let slack = 1e-13 * e.abs().max(1.0);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = step(&cfg, &p, alpha);
            let et = ws.energy(&trial);
            if et <= e + 1e-4 * alpha * slope + slack {
                accepted = Some((trial, et));
                break;
            }
            alpha *= 0.5;
        }
        let Some((mut next, en)) = accepted else {
            stalls += 1;
            if stalls > 3 {
                break;
            }
            p = z.scale(-1.0);
            continue;
        };
        alpha_prev = alpha;
        let chi = ws.project(&mut next);
        cfg = next;
        let e_prev = e;
        e = en.min(ws.energy(&cfg));
        history.push(e);
        let z_old = rotate_sections(&z, &chi);
        p = rotate_sections(&p, &chi);
        g = ws.gradient(&cfg);
        // Along nearly flat directions (lattice-pinned vortex translations)
        // the energy moves below rounding while the gradient still falls.
        let gn_new = g.norm(lat);
        if en >= e_prev - slack && gn_new >= 0.999 * best_gn {
            stalls += 1;
        } else {
            stalls = 0;
        }
        best_gn = best_gn.min(gn_new);
        z = ws.precondition(&g);
        let gz_new = g.dot(lat, &z);
        // Polak-Ribiere with restart.
        let beta = ((gz_new - g.dot(lat, &z_old)) / gz).max(0.0);
        gz = gz_new;
        p = z.scale(-1.0).add(&p.scale(beta));
        it += 1;
        if stalls > 3 {
            break;
        }
    }
    let gn = ws.gradient(&cfg).norm(lat);
    if gn >= opts.grad_tol && gn < 1e-3 * (1.0 + cpl.tau) {
        if let Ok(polished) = newton_core(&ws, &cfg, opts, true) {
            if polished.1 < gn {
                cfg = polished.0;
                it += polished.2;
                history.push(ws.energy(&cfg));
            }
        }
    }
    ws.pin_phase(&mut cfg);
    classify(lat, rc, cpl, cfg, it, history, opts)
}

/// Gauge-fixed Newton iteration; returns the configuration, its gradient
/// norm and the iteration count.
fn newton_core(
    ws: &Workspace<'_>,
    init: &Configuration,
    opts: &SolveOptions,
    descent_only: bool,
) -> Result<(Configuration, f64, usize)> {
    let lat = ws.lat;
    let mut cfg = init.clone();
    ws.project(&mut cfg);
    ws.pin_phase(&mut cfg);
    let mut g = ws.gradient(&cfg);
    let mut gn = g.norm(lat);
    let mut it = 0;
    let mut failures = 0;
    while gn >= opts.grad_tol && it < opts.newton_max_iter {
        let sh = SliceHessian::new(lat, ws.rc, &cfg, ws.cpl)?;
        let op = |v: &[f64]| sh.apply(v);
        let pre = |v: &[f64]| sh.precondition(v);
        let rhs: Vec<f64> = g.to_flat().iter().map(|v| -v).collect();
        let eta = (0.1 * gn).clamp(1e-12, 1e-4);
        let sol = match minres(&op, &rhs, Some(&pre), &MinresOptions { rtol: eta, max_iter: 4000 }) {
            Ok(s) => s.x,
            Err(GlError::IterationLimit { .. }) => {
                failures += 1;
                if failures > 2 {
                    break;
                }
                let r = minres(&op, &rhs, Some(&pre), &MinresOptions { rtol: 1e-2, max_iter: 8000 });
                match r {
                    Ok(s) => s.x,
                    Err(_) => break,
                }
            }
            Err(e) => return Err(e),
        };
        let d = Tangent::from_flat(lat, &sol)?;
        let e0 = ws.energy(&cfg);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let mut trial = step(&cfg, &d, alpha);
            let gt = ws.gradient(&trial).norm(lat);
            let ok_energy = !descent_only || ws.energy(&trial) <= e0 + 1e-12 * e0.abs().max(1.0);
            if gt < (1.0 - 1e-4 * alpha) * gn && ok_energy {
                ws.project(&mut trial);
                ws.pin_phase(&mut trial);
                cfg = trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        it += 1;
        if !moved {
            break;
        }
        g = ws.gradient(&cfg);
        gn = g.norm(lat);
    }
    Ok((cfg, gn, it))
}

/// Newton-Krylov refinement to a nearby critical point of any index.
///
/// The linear systems use `J + 2 L L*` (the Hessian plus the gauge-orbit
/// penalty), so the step stays in the Coulomb slice; the global phase is
/// pinned at the largest entry of `phi`. Harmonic components of the
/// connection are free unknowns and are reported.
pub fn newton_refine(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cpl: &Coupling,
    init: &Configuration,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    init.check(lat)?;
    let ws = Workspace::new(lat, rc, cpl);
    let g0 = ws.gradient(init).norm(lat);
    if g0 < opts.grad_tol {
        return classify(lat, rc, cpl, init.clone(), 0, vec![ws.energy(init)], opts);
    }
    let (cfg, gn, it) = newton_core(&ws, init, opts, false)?;
    if gn >= opts.grad_tol && gn > 1e-3 * g0 {
        // No progress: check whether the slice Jacobian is singular.
        let rep = hessian_eigs(lat, rc, &cfg, cpl, 6, &HessianOptions::default())?;
        if rep.near_kernel_dim > 0 {
            return Err(GlError::SingularJacobian { near_kernel_dim: rep.near_kernel_dim });
        }
    }
    let e = ws.energy(&cfg);
    classify(lat, rc, cpl, cfg, it, vec![e], opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_phase_is_returned_immediately() {
        let lat = LatticeTorus::unit(8, 1).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let cpl = Coupling::critical(20.0).unwrap();
        let r = newton_refine(&lat, &rc, &cpl, &Configuration::normal(&lat), &SolveOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.classification, Classification::Normal);
    }

    #[test]
    fn trivial_bundle_relaxes_to_vacuum() {
        let lat = LatticeTorus::unit(12, 0).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let cpl = Coupling::new(3.0, 0.9).unwrap();
        let mut init = random_init(&lat, 0.3, 5);
        init.phi.values.iter_mut().for_each(|z| *z += 1.0);
        let r = minimize(&lat, &rc, &cpl, &init, &SolveOptions::default()).unwrap();
        assert!(r.grad_norm < 1e-8);
        assert!(r.energy.total < 1e-12);
        let dev = r.final_cfg.phi.values.iter().map(|z| (z.norm_sqr() - 3.0).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-8);
        for w in r.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn below_bradlow_the_section_dies() {
        let lat = LatticeTorus::unit(12, 1).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let cpl = Coupling::critical(0.5 * Coupling::tau_bradlow(&lat)).unwrap();
        let r = minimize(&lat, &rc, &cpl, &random_init(&lat, 0.5, 1), &SolveOptions::default()).unwrap();
        assert_eq!(r.classification, Classification::Normal);
        assert!(r.evidence.phi_sup < 1e-6);
    }

    #[test]
    fn above_bradlow_a_vortex_forms() {
        let lat = LatticeTorus::unit(16, 1).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let cpl = Coupling::critical(8.0 * std::f64::consts::PI).unwrap();
        let r = minimize(&lat, &rc, &cpl, &random_init(&lat, 0.5, 2), &SolveOptions::default()).unwrap();
        assert_eq!(r.classification, Classification::Vortex, "{:?}", r.evidence);
        let target = 16.0 * std::f64::consts::PI.powi(2);
        assert!((r.energy.total - target).abs() < 0.05 * target);
    }
}
