//! The discrete Ginzburg-Landau functional
//!
//! ```text
//! E = h1 h2 sum_x [ b^2 + |D_1 phi|^2 + |D_2 phi|^2 + kappa^2/2 (tau - |phi|^2)^2 ]
//! ```
//!
//! with its exact gradient, exact second variation and the Bogomolny split.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::{Configuration, Coupling, Links, ReferenceConnection};
use crate::error::{GlError, Result};
use crate::lattice::{codiff1_into, curl_into, ksum, LatticeTorus, OneForm, ScalarField};
use crate::tangent::Tangent;

/// Terms of the critical-coupling rewrite
/// `E = dbar_term + residual_term + topological_term + defect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BogomolnyTerms {
    /// `|| (D_1 + i D_2) phi ||^2`.
    pub dbar_term: f64,
    /// `|| b - (tau - |phi|^2)/2 ||^2`.
    pub residual_term: f64,
    /// `2 pi tau d`.
    pub topological_term: f64,
    /// Lattice remainder `||D phi||^2 - ||(D_1 + i D_2) phi||^2 - <b, |phi|^2>`.
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub curvature_term: f64,
    pub kinetic_term: f64,
    pub potential_term: f64,
    pub total: f64,
    pub bogomolny: Option<BogomolnyTerms>,
}

pub(crate) fn terms(links: &Links, phi: &[Complex64], cpl: &Coupling) -> (f64, f64, f64) {
    let lat = &links.lat;
    let w = lat.cell();
    let (g1, g2) = links.cov(phi);
    let curv = w * ksum(links.b.iter().map(|b| b * b));
    let kin = w * ksum(g1.iter().zip(&g2).map(|(a, b)| a.norm_sqr() + b.norm_sqr()));
    let k2 = cpl.kappa * cpl.kappa;
    let pot = w * ksum(phi.iter().map(|z| {
        let r = cpl.tau - z.norm_sqr();
        0.5 * k2 * r * r
    }));
    (curv, kin, pot)
}

pub(crate) fn total_energy(links: &Links, phi: &[Complex64], cpl: &Coupling) -> f64 {
    let (a, b, c) = terms(links, phi, cpl);
    a + b + c
}

pub(crate) fn bogomolny_terms(links: &Links, phi: &[Complex64], cpl: &Coupling, kinetic: f64) -> BogomolnyTerms {
    let lat = &links.lat;
    let w = lat.cell();
    let x = links.xop(phi);
    let dbar_term = w * ksum(x.iter().map(|z| z.norm_sqr()));
    let residual_term = w * ksum(links.b.iter().zip(phi).map(|(b, z)| {
        let y = b - 0.5 * (cpl.tau - z.norm_sqr());
        y * y
    }));
    let bphi = w * ksum(links.b.iter().zip(phi).map(|(b, z)| b * z.norm_sqr()));
    BogomolnyTerms {
        dbar_term,
        residual_term,
        topological_term: 2.0 * std::f64::consts::PI * cpl.tau * lat.degree as f64,
        defect: kinetic - dbar_term - bphi,
    }
}

/// Energy and its parts; the Bogomolny record is present only at
/// `kappa = 1/sqrt(2)`.
pub fn energy(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration, cpl: &Coupling) -> Result<EnergyBreakdown> {
    cfg.check(lat)?;
    let links = Links::new(lat, rc, &cfg.a);
    Ok(energy_from_links(&links, &cfg.phi.values, cpl))
}

pub(crate) fn energy_from_links(links: &Links, phi: &[Complex64], cpl: &Coupling) -> EnergyBreakdown {
    let (c, k, p) = terms(links, phi, cpl);
    EnergyBreakdown {
        curvature_term: c,
        kinetic_term: k,
        potential_term: p,
        total: c + k + p,
        bogomolny: cpl.is_critical().then(|| bogomolny_terms(links, phi, cpl, k)),
    }
}

pub(crate) fn gradient_links(links: &Links, phi: &[Complex64], cpl: &Coupling) -> Tangent {
    let lat = &links.lat;
    let n = lat.sites();
    let (h1, h2) = (lat.h1(), lat.h2());
    let mut a = OneForm::zeros(lat);
    // 2 d* b
    for y in 0..n {
        a.comp1[y] = 2.0 * (links.b[y] - links.b[lat.bwd2(y)]) / h2;
        a.comp2[y] = 2.0 * (links.b[lat.bwd1(y)] - links.b[y]) / h1;
    }
    for x in 0..n {
        a.comp1[x] -= 2.0 / h1 * (phi[x].conj() * links.u1[x] * phi[lat.fwd1(x)]).im;
        a.comp2[x] -= 2.0 / h2 * (phi[x].conj() * links.u2[x] * phi[lat.fwd2(x)]).im;
    }
    let k2 = cpl.kappa * cpl.kappa;
    let lap = links.laplacian(phi);
    let psi = lap
        .iter()
        .zip(phi)
        .map(|(l, z)| 2.0 * l - 2.0 * k2 * (cpl.tau - z.norm_sqr()) * z)
        .collect();
    Tangent { a, psi: ScalarField { values: psi } }
}

/// Exact gradient of the discrete energy in the weighted inner product.
pub fn gradient(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration, cpl: &Coupling) -> Result<Tangent> {
    cfg.check(lat)?;
    let links = Links::new(lat, rc, &cfg.a);
    Ok(gradient_links(&links, &cfg.phi.values, cpl))
}

/// The Hessian operator of the discrete energy at a fixed configuration.
#[derive(Clone, Debug)]
pub struct Hessian {
    pub links: Links,
    pub phi: Vec<Complex64>,
    pub cpl: Coupling,
}

impl Hessian {
    pub fn new(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration, cpl: &Coupling) -> Result<Self> {
        cfg.check(lat)?;
        Ok(Self { links: Links::new(lat, rc, &cfg.a), phi: cfg.phi.values.clone(), cpl: *cpl })
    }

    /// `J v`, the derivative of the gradient along `v`.
    pub fn apply(&self, v: &Tangent) -> Tangent {
        let links = &self.links;
        let lat = &links.lat;
        let n = lat.sites();
        let (h1, h2) = (lat.h1(), lat.h2());
        let phi = &self.phi;
        let psi = &v.psi.values;
        let al = &v.a;
        let mut db = vec![0.0; n];
        curl_into(lat, &al.comp1, &al.comp2, &mut db);
        let mut a = OneForm::zeros(lat);
        for y in 0..n {
            a.comp1[y] = 2.0 * (db[y] - db[lat.bwd2(y)]) / h2;
            a.comp2[y] = 2.0 * (db[lat.bwd1(y)] - db[y]) / h1;
        }
        for x in 0..n {
            let (p, q) = (lat.fwd1(x), lat.fwd2(x));
            let up1 = links.u1[x] * phi[p];
            let up2 = links.u2[x] * phi[q];
            a.comp1[x] += -2.0 / h1 * (psi[x].conj() * up1 + phi[x].conj() * links.u1[x] * psi[p]).im
                + 2.0 * al.comp1[x] * (phi[x].conj() * up1).re;
            a.comp2[x] += -2.0 / h2 * (psi[x].conj() * up2 + phi[x].conj() * links.u2[x] * psi[q]).im
                + 2.0 * al.comp2[x] * (phi[x].conj() * up2).re;
        }
        let k2 = self.cpl.kappa * self.cpl.kappa;
        let tau = self.cpl.tau;
        let l1 = links.laplacian_dc(phi, al);
        let l0 = links.laplacian(psi);
        let s = (0..n)
            .map(|x| {
                let z = phi[x];
                2.0 * l1[x] + 2.0 * l0[x] - 2.0 * k2 * (tau - z.norm_sqr()) * psi[x]
                    + 4.0 * k2 * (z.conj() * psi[x]).re * z
            })
            .collect();
        Tangent { a, psi: ScalarField { values: s } }
    }

    pub fn apply_flat(&self, v: &[f64]) -> Vec<f64> {
        let t = Tangent::from_flat(&self.links.lat, v).expect("flat tangent of lattice size");
        self.apply(&t).to_flat()
    }

    /// `d^2/ds^2 E(cfg + s v)` at `s = 0`.
    pub fn quadratic(&self, v: &Tangent) -> f64 {
        v.dot(&self.links.lat, &self.apply(v))
    }
}

/// Second variation `d^2/ds^2 E(cfg + s v)|_{s=0}` from the exact Hessian.
pub fn second_variation(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
    v: &Tangent,
) -> Result<f64> {
    Ok(Hessian::new(lat, rc, cfg, cpl)?.quadratic(v))
}

/// Pointwise Bogomolny residuals: `(D_1 + i D_2) phi` and
/// `b - (tau - |phi|^2)/2` (real, stored with zero imaginary part).
///
/// The squared weighted norms of the two fields are the `dbar_term` and
/// `residual_term` of [`BogomolnyTerms`].
pub fn bogomolny_residuals(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
    cpl: &Coupling,
) -> Result<(ScalarField, ScalarField)> {
    if !cpl.is_critical() {
        return Err(GlError::Precondition(format!("Bogomolny split needs kappa = 1/sqrt(2), got {}", cpl.kappa)));
    }
    cfg.check(lat)?;
    let links = Links::new(lat, rc, &cfg.a);
    let x = links.xop(&cfg.phi.values);
    let y: Vec<f64> = links.b.iter().zip(&cfg.phi.values).map(|(b, z)| b - 0.5 * (cpl.tau - z.norm_sqr())).collect();
    Ok((ScalarField { values: x }, ScalarField::from_real(&y)))
}

/// Norms of the Bogomolny residuals evaluated with site-centred stencils:
/// central covariant differences for `(D_1 + i D_2) phi` and the curvature
/// averaged over the four plaquettes around a site. Both are second order in
/// the mesh, whereas the forward-difference residuals are only first order.
pub fn colocated_bogomolny_norms(links: &Links, phi: &[Complex64], tau: f64) -> (f64, f64) {
    let lat = &links.lat;
    let (h1, h2) = (lat.h1(), lat.h2());
    let i = Complex64::new(0.0, 1.0);
    let mut sx = Vec::with_capacity(lat.sites());
    let mut sy = Vec::with_capacity(lat.sites());
    for x in 0..lat.sites() {
        let (p, q) = (lat.bwd1(x), lat.bwd2(x));
        let d1 = (links.u1[x] * phi[lat.fwd1(x)] - links.u1[p].conj() * phi[p]) / (2.0 * h1);
        let d2 = (links.u2[x] * phi[lat.fwd2(x)] - links.u2[q].conj() * phi[q]) / (2.0 * h2);
        sx.push((d1 + i * d2).norm_sqr());
        let b = 0.25 * (links.b[x] + links.b[p] + links.b[q] + links.b[lat.bwd2(p)]);
        let y = b - 0.5 * (tau - phi[x].norm_sqr());
        sy.push(y * y);
    }
    let w = lat.cell();
    ((w * ksum(sx)).sqrt(), (w * ksum(sy)).sqrt())
}

/// `|| d* j ||` for the gauge current `j = Im(conj(phi) U phi_+) / h`.
pub fn current_divergence(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration) -> Result<f64> {
    cfg.check(lat)?;
    let j = Links::new(lat, rc, &cfg.a).current(&cfg.phi.values);
    let mut div = vec![0.0; lat.sites()];
    codiff1_into(lat, &j.comp1, &j.comp2, &mut div);
    Ok((lat.cell() * ksum(div.iter().map(|v| v * v))).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup(n: usize, d: u32) -> (LatticeTorus, ReferenceConnection) {
        let lat = LatticeTorus::new(n, n + 2, 1.0, 1.3, d).unwrap();
        let rc = ReferenceConnection::new(&lat);
        (lat, rc)
    }

    #[test]
    fn normal_phase_energy_closed_form() {
        for d in 0..3 {
            let (lat, rc) = setup(8, d);
            let cpl = Coupling::new(3.0, 0.9).unwrap();
            let e = energy(&lat, &rc, &Configuration::normal(&lat), &cpl).unwrap();
            let want = 4.0 * PI * PI * (d * d) as f64 / lat.area() + 0.81 * 9.0 * lat.area() / 2.0;
            assert!((e.total - want).abs() < 1e-12 * want);
            assert!(e.bogomolny.is_none());
            let g = gradient(&lat, &rc, &Configuration::normal(&lat), &cpl).unwrap();
            assert_eq!(g.norm(&lat), 0.0);
        }
    }

    #[test]
    fn vacuum_on_trivial_bundle() {
        let (lat, rc) = setup(8, 0);
        let cpl = Coupling::critical(2.5).unwrap();
        let cfg = Configuration { a: OneForm::zeros(&lat), phi: ScalarField::constant(&lat, Complex64::new(2.5f64.sqrt(), 0.0)) };
        let e = energy(&lat, &rc, &cfg, &cpl).unwrap();
        assert!(e.total.abs() < 1e-24);
        assert!(gradient(&lat, &rc, &cfg, &cpl).unwrap().norm(&lat) < 1e-13);
        assert!(current_divergence(&lat, &rc, &cfg).unwrap() < 1e-13);
    }

    #[test]
    fn bogomolny_split_is_exact_with_defect() {
        let (lat, rc) = setup(10, 2);
        let cpl = Coupling::critical(7.0).unwrap();
        let cfg = Configuration::random(&lat, 0.5, 1.0, 17);
        let e = energy(&lat, &rc, &cfg, &cpl).unwrap();
        let b = e.bogomolny.as_ref().unwrap();
        let sum = b.dbar_term + b.residual_term + b.topological_term + b.defect;
        assert!((sum - e.total).abs() < 1e-10 * e.total);
        assert!((e.curvature_term + e.kinetic_term + e.potential_term - e.total).abs() <= 1e-12 * e.total);
        let (x, y) = bogomolny_residuals(&lat, &rc, &cfg, &cpl).unwrap();
        assert!((x.dot(&lat, &x) - b.dbar_term).abs() < 1e-10 * b.dbar_term);
        assert!((y.dot(&lat, &y) - b.residual_term).abs() < 1e-10 * b.residual_term);
        let off = Coupling::new(7.0, 1.0).unwrap();
        assert!(bogomolny_residuals(&lat, &rc, &cfg, &off).is_err());
    }

    #[test]
    fn normal_phase_bogomolny_residual_closed_form() {
        let (lat, rc) = setup(8, 1);
        let tau = 0.5 * Coupling::tau_bradlow(&lat);
        let cpl = Coupling::critical(tau).unwrap();
        let e = energy(&lat, &rc, &Configuration::normal(&lat), &cpl).unwrap();
        let b = e.bogomolny.unwrap();
        let want = lat.area() * (0.5 * tau - 2.0 * PI / lat.area()).powi(2);
        assert!((b.residual_term - want).abs() < 1e-12 * want);
        assert_eq!(b.dbar_term, 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (lat, rc) = setup(12, 1);
        let cpl = Coupling::new(5.0, 0.8).unwrap();
        let cfg = Configuration::random(&lat, 1.0, 1.5, 5);
        let g = gradient(&lat, &rc, &cfg, &cpl).unwrap();
        for s in 0..20 {
            let dir = Configuration::random(&lat, 1.0, 1.0, 100 + s);
            let v = Tangent { a: dir.a, psi: dir.phi };
            let step = 1e-5;
            let ep = |t: f64| {
                let c = Configuration { a: cfg.a.add(&v.a.scale(t)), phi: cfg.phi.add(&v.psi.scale(Complex64::new(t, 0.0))) };
                energy(&lat, &rc, &c, &cpl).unwrap().total
            };
            let fd = (ep(step) - ep(-step)) / (2.0 * step);
            let an = g.dot(&lat, &v);
            assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let (lat, rc) = setup(8, 2);
        let cpl = Coupling::new(4.0, 1.1).unwrap();
        let cfg = Configuration::random(&lat, 1.0, 1.0, 6);
        let h = Hessian::new(&lat, &rc, &cfg, &cpl).unwrap();
        let dir = Configuration::random(&lat, 1.0, 1.0, 7);
        let v = Tangent { a: dir.a, psi: dir.phi };
        let step = 1e-6;
        let gp = |t: f64| {
            let c = Configuration { a: cfg.a.add(&v.a.scale(t)), phi: cfg.phi.add(&v.psi.scale(Complex64::new(t, 0.0))) };
            gradient(&lat, &rc, &c, &cpl).unwrap()
        };
        let fd = gp(step).sub(&gp(-step)).scale(0.5 / step);
        let an = h.apply(&v);
        assert!(fd.sub(&an).norm(&lat) < 1e-6 * an.norm(&lat));
        // symmetry
        let dir2 = Configuration::random(&lat, 1.0, 1.0, 8);
        let w = Tangent { a: dir2.a, psi: dir2.phi };
        let l = w.dot(&lat, &h.apply(&v));
        let r = v.dot(&lat, &h.apply(&w));
        assert!((l - r).abs() < 1e-10 * l.abs().max(1.0));
    }
}
