//! The degree-`d` line bundle: reference connection, configurations, gauge
//! action and covariant differences.
//!
//! Sections live in the reference trivialization. A link carries the
//! parallel transport
//!
//! ```text
//! U_mu(x) = exp(-i (theta0_mu(x) + h_mu c_mu(x)))
//! ```
//!
//! so that `D_mu phi(x) = (U_mu(x) phi(x + e_mu) - phi(x)) / h_mu`, and the
//! curvature density is `b = f0 + curl c` with `f0 = 2 pi d / area`. With
//! this orientation the lowest Landau level for `d > 0` is annihilated by
//! `D_1 + i D_2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GlError, Result};
use crate::lattice::{curl_into, LatticeTorus, OneForm, ScalarField};
use crate::poisson::{exact_potential, PoissonSolver};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Landau-gauge link angles with uniform plaquette flux `2 pi d / (n1 n2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceConnection {
    pub theta0: OneForm,
    pub f0: f64,
}

impl ReferenceConnection {
    pub fn new(lat: &LatticeTorus) -> Self {
        let (n1, n2) = (lat.n1, lat.n2);
        let d = lat.degree as f64;
        let mut theta0 = OneForm::zeros(lat);
        for i in 0..n1 {
            for j in 0..n2 {
                let x = lat.idx(i, j);
                theta0.comp2[x] = 2.0 * PI * d * i as f64 / (n1 * n2) as f64;
                if i == n1 - 1 {
                    theta0.comp1[x] = -2.0 * PI * d * j as f64 / n2 as f64;
                }
            }
        }
        Self { theta0, f0: 2.0 * PI * d / lat.area() }
    }

    /// Plaquette holonomy angles of the reference links, reduced to `(-pi, pi]`.
    pub fn plaquette_angles(&self, lat: &LatticeTorus) -> Vec<f64> {
        let t = &self.theta0;
        (0..lat.sites())
            .map(|x| {
                let raw = t.comp1[x] + t.comp2[lat.fwd1(x)] - t.comp1[lat.fwd2(x)] - t.comp2[x];
                wrap_angle(raw)
            })
            .collect()
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Positive couplings `(tau, kappa)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub tau: f64,
    pub kappa: f64,
}

impl Coupling {
    pub fn new(tau: f64, kappa: f64) -> Result<Self> {
        if !(tau > 0.0 && kappa > 0.0 && tau.is_finite() && kappa.is_finite()) {
            return Err(GlError::Precondition(format!("couplings must be positive, got tau={tau}, kappa={kappa}")));
        }
        Ok(Self { tau, kappa })
    }

    /// `kappa = 1/sqrt(2)`.
    pub fn critical(tau: f64) -> Result<Self> {
        Self::new(tau, std::f64::consts::FRAC_1_SQRT_2)
    }

    pub fn is_critical(&self) -> bool {
        (self.kappa - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12
    }

    pub fn tau_bradlow(lat: &LatticeTorus) -> f64 {
        4.0 * PI * lat.degree as f64 / lat.area()
    }
}

/// A connection perturbation `a` and a section `phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub a: OneForm,
    pub phi: ScalarField,
}

impl Configuration {
    /// The normal phase `(reference connection, 0)`.
    pub fn normal(lat: &LatticeTorus) -> Self {
        Self { a: OneForm::zeros(lat), phi: ScalarField::zeros(lat) }
    }

    pub fn check(&self, lat: &LatticeTorus) -> Result<()> {
        self.a.check(lat)?;
        self.phi.check(lat)
    }

    /// Deterministic small random configuration.
    pub fn random(lat: &LatticeTorus, amp_a: f64, amp_phi: f64, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = lat.sites();
        let a = OneForm {
            comp1: (0..n).map(|_| amp_a * rng.gen_range(-1.0..1.0)).collect(),
            comp2: (0..n).map(|_| amp_a * rng.gen_range(-1.0..1.0)).collect(),
        };
        let phi = ScalarField {
            values: (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp_phi)
                .collect(),
        };
        Self { a, phi }
    }

    /// Curvature density `b = f0 + curl a`.
    pub fn curvature(&self, lat: &LatticeTorus, rc: &ReferenceConnection) -> Vec<f64> {
        let mut b = vec![0.0; lat.sites()];
        curl_into(lat, &self.a.comp1, &self.a.comp2, &mut b);
        b.iter_mut().for_each(|v| *v += rc.f0);
        b
    }

    /// Total flux `sum_p b h1 h2`, equal to `2 pi d`.
    pub fn flux(&self, lat: &LatticeTorus, rc: &ReferenceConnection) -> f64 {
        lat.cell() * crate::lattice::ksum(self.curvature(lat, rc))
    }
}

/// Parallel transports and curvature of one configuration, precomputed for
/// repeated operator application.
#[derive(Clone, Debug)]
pub struct Links {
    pub lat: LatticeTorus,
    pub u1: Vec<Complex64>,
    pub u2: Vec<Complex64>,
    pub b: Vec<f64>,
}

impl Links {
    pub fn new(lat: &LatticeTorus, rc: &ReferenceConnection, a: &OneForm) -> Self {
        let (h1, h2) = (lat.h1(), lat.h2());
        let u1 = (0..lat.sites()).map(|x| Complex64::from_polar(1.0, -(rc.theta0.comp1[x] + h1 * a.comp1[x]))).collect();
        let u2 = (0..lat.sites()).map(|x| Complex64::from_polar(1.0, -(rc.theta0.comp2[x] + h2 * a.comp2[x]))).collect();
        let mut b = vec![0.0; lat.sites()];
        curl_into(lat, &a.comp1, &a.comp2, &mut b);
        b.iter_mut().for_each(|v| *v += rc.f0);
        Self { lat: lat.clone(), u1, u2, b }
    }

    /// Links of the reference connection alone.
    pub fn reference(lat: &LatticeTorus, rc: &ReferenceConnection) -> Self {
        Self::new(lat, rc, &OneForm::zeros(lat))
    }

    /// `(D_1 phi, D_2 phi)`.
    pub fn cov(&self, phi: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let lat = &self.lat;
        let (h1, h2) = (lat.h1(), lat.h2());
        let n = lat.sites();
        let mut g1 = Vec::with_capacity(n);
        let mut g2 = Vec::with_capacity(n);
        for x in 0..n {
            g1.push((self.u1[x] * phi[lat.fwd1(x)] - phi[x]) / h1);
            g2.push((self.u2[x] * phi[lat.fwd2(x)] - phi[x]) / h2);
        }
        (g1, g2)
    }

    /// Adjoint of [`Links::cov`]: `D_1* w1 + D_2* w2`.
    pub fn cov_adj(&self, w1: &[Complex64], w2: &[Complex64]) -> Vec<Complex64> {
        let lat = &self.lat;
        let (h1, h2) = (lat.h1(), lat.h2());
        (0..lat.sites())
            .map(|y| {
                let p = lat.bwd1(y);
                let q = lat.bwd2(y);
                (self.u1[p].conj() * w1[p] - w1[y]) / h1 + (self.u2[q].conj() * w2[q] - w2[y]) / h2
            })
            .collect()
    }

    /// Covariant Laplacian `D* D phi`.
    pub fn laplacian(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let lat = &self.lat;
        let (h1, h2) = (lat.h1(), lat.h2());
        let (c1, c2) = (1.0 / (h1 * h1), 1.0 / (h2 * h2));
        (0..lat.sites())
            .map(|x| {
                let p = lat.bwd1(x);
                let q = lat.bwd2(x);
                (2.0 * c1 + 2.0 * c2) * phi[x]
                    - c1 * (self.u1[x] * phi[lat.fwd1(x)] + self.u1[p].conj() * phi[p])
                    - c2 * (self.u2[x] * phi[lat.fwd2(x)] + self.u2[q].conj() * phi[q])
            })
            .collect()
    }

    /// Derivative of `laplacian(phi)` in the connection along `alpha`.
    pub fn laplacian_dc(&self, phi: &[Complex64], alpha: &OneForm) -> Vec<Complex64> {
        let lat = &self.lat;
        let (h1, h2) = (lat.h1(), lat.h2());
        // dU = -i h alpha U on each link.
        (0..lat.sites())
            .map(|x| {
                let p = lat.bwd1(x);
                let q = lat.bwd2(x);
                let t1 = -I * alpha.comp1[x] * self.u1[x] * phi[lat.fwd1(x)] + I * alpha.comp1[p] * self.u1[p].conj() * phi[p];
                let t2 = -I * alpha.comp2[x] * self.u2[x] * phi[lat.fwd2(x)] + I * alpha.comp2[q] * self.u2[q].conj() * phi[q];
                -(t1 / h1 + t2 / h2)
            })
            .collect()
    }

    /// `(D_1 + i D_2) phi`.
    pub fn xop(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let (g1, g2) = self.cov(phi);
        g1.iter().zip(&g2).map(|(a, b)| a + I * b).collect()
    }

    /// Adjoint of [`Links::xop`].
    pub fn xop_adj(&self, w: &[Complex64]) -> Vec<Complex64> {
        let w2: Vec<Complex64> = w.iter().map(|z| -I * z).collect();
        self.cov_adj(w, &w2)
    }

    /// Gauge current `j_mu = Im(conj(phi(x)) U_mu(x) phi(x + e_mu)) / h_mu`.
    pub fn current(&self, phi: &[Complex64]) -> OneForm {
        let lat = &self.lat;
        let (h1, h2) = (lat.h1(), lat.h2());
        let mut j = OneForm::zeros(lat);
        for x in 0..lat.sites() {
            j.comp1[x] = (phi[x].conj() * self.u1[x] * phi[lat.fwd1(x)]).im / h1;
            j.comp2[x] = (phi[x].conj() * self.u2[x] * phi[lat.fwd2(x)]).im / h2;
        }
        j
    }
}

/// Both components of the covariant forward difference of `phi`.
pub fn covariant_diff(
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cfg: &Configuration,
) -> Result<(ScalarField, ScalarField)> {
    cfg.check(lat)?;
    let (g1, g2) = Links::new(lat, rc, &cfg.a).cov(&cfg.phi.values);
    Ok((ScalarField { values: g1 }, ScalarField { values: g2 }))
}

/// Cauchy-Riemann operator `(D_1 phi + i D_2 phi) / 2`.
pub fn dbar(lat: &LatticeTorus, rc: &ReferenceConnection, cfg: &Configuration) -> Result<ScalarField> {
    cfg.check(lat)?;
    let x = Links::new(lat, rc, &cfg.a).xop(&cfg.phi.values);
    Ok(ScalarField { values: x.into_iter().map(|z| 0.5 * z).collect() })
}

/// Applies `gamma = exp(i chi)` for a real function `chi`:
/// `a -> a + d chi`, `phi -> gamma phi`.
pub fn gauge_by_angle(lat: &LatticeTorus, cfg: &Configuration, chi: &[f64]) -> Configuration {
    let dchi = crate::lattice::gradient0(lat, chi);
    Configuration {
        a: cfg.a.add(&dchi),
        phi: ScalarField {
            values: cfg.phi.values.iter().zip(chi).map(|(z, &c)| z * Complex64::from_polar(1.0, c)).collect(),
        },
    }
}

/// Applies a unit-modulus gauge transformation.
///
/// Link angles shift by the principal logarithmic derivative of `gamma`.
/// A `gamma` whose phase winds around a plaquette cannot be written this way
/// within the flux sector and is rejected.
pub fn gauge_transform(lat: &LatticeTorus, cfg: &Configuration, gamma: &ScalarField) -> Result<Configuration> {
    cfg.check(lat)?;
    gamma.check(lat)?;
    if let Some(z) = gamma.values.iter().find(|z| (z.norm() - 1.0).abs() > 1e-12) {
        return Err(GlError::Precondition(format!("gauge transformation has modulus {}", z.norm())));
    }
    let (h1, h2) = (lat.h1(), lat.h2());
    let g = &gamma.values;
    let mut d1 = vec![0.0; lat.sites()];
    let mut d2 = vec![0.0; lat.sites()];
    for x in 0..lat.sites() {
        d1[x] = (g[lat.fwd1(x)] * g[x].conj()).arg();
        d2[x] = (g[lat.fwd2(x)] * g[x].conj()).arg();
    }
    for x in 0..lat.sites() {
        let w = d1[x] + d2[lat.fwd1(x)] - d1[lat.fwd2(x)] - d2[x];
        if w.abs() > PI {
            return Err(GlError::FluxSector);
        }
    }
    let mut a = cfg.a.clone();
    for x in 0..lat.sites() {
        a.comp1[x] += d1[x] / h1;
        a.comp2[x] += d2[x] / h2;
    }
    let phi = ScalarField { values: cfg.phi.values.iter().zip(g).map(|(z, g)| z * g).collect() };
    Ok(Configuration { a, phi })
}

/// Gauge-transforms into the Coulomb slice `d* a = 0`.
pub fn coulomb_project_with(solver: &PoissonSolver, lat: &LatticeTorus, cfg: &Configuration) -> Configuration {
    let chi = exact_potential(solver, lat, &cfg.a);
    let minus: Vec<f64> = chi.iter().map(|v| -v).collect();
    gauge_by_angle(lat, cfg, &minus)
}

pub fn coulomb_project(lat: &LatticeTorus, cfg: &Configuration) -> Result<Configuration> {
    cfg.check(lat)?;
    Ok(coulomb_project_with(&PoissonSolver::new(lat), lat, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{codifferential_1_real, gradient0};

    #[test]
    fn reference_flux_is_uniform_and_quantized() {
        for d in 0..4 {
            let lat = LatticeTorus::new(7, 9, 1.0, 2.0, d).unwrap();
            let rc = ReferenceConnection::new(&lat);
            let want = wrap_angle(2.0 * PI * d as f64 / 63.0);
            for a in rc.plaquette_angles(&lat) {
                assert!((a - want).abs() < 1e-12);
            }
            let cfg = Configuration::random(&lat, 1.0, 1.0, 4);
            assert!((cfg.flux(&lat, &rc) - 2.0 * PI * d as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn trivial_bundle_constant_section_is_flat() {
        let lat = LatticeTorus::unit(8, 0).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let cfg = Configuration { a: OneForm::zeros(&lat), phi: ScalarField::constant(&lat, Complex64::new(0.3, -2.0)) };
        let (g1, g2) = covariant_diff(&lat, &rc, &cfg).unwrap();
        assert!(g1.norm_sup() == 0.0 && g2.norm_sup() == 0.0);
        assert!(dbar(&lat, &rc, &cfg).unwrap().norm_sup() == 0.0);
    }

    #[test]
    fn dbar_of_plane_wave_matches_stencil() {
        let lat = LatticeTorus::new(12, 10, 1.0, 1.0, 0).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let phi = ScalarField::from_fn(&lat, |x1, _| Complex64::from_polar(1.0, 2.0 * PI * x1));
        let cfg = Configuration { a: OneForm::zeros(&lat), phi };
        let got = dbar(&lat, &rc, &cfg).unwrap();
        let h = lat.h1();
        let step = (Complex64::from_polar(1.0, 2.0 * PI * h) - 1.0) / h;
        for x in 0..lat.sites() {
            let want = 0.5 * step * cfg.phi.values[x];
            assert!((got.values[x] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn laplacian_is_cov_adj_cov() {
        let lat = LatticeTorus::new(8, 6, 1.0, 0.8, 2).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let cfg = Configuration::random(&lat, 2.0, 1.0, 8);
        let l = Links::new(&lat, &rc, &cfg.a);
        let (g1, g2) = l.cov(&cfg.phi.values);
        let a = l.cov_adj(&g1, &g2);
        let b = l.laplacian(&cfg.phi.values);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).norm() < 1e-9 * (1.0 + q.norm()));
        }
    }

    #[test]
    fn gauge_transform_identity_and_constant() {
        let lat = LatticeTorus::unit(8, 1).unwrap();
        let cfg = Configuration::random(&lat, 1.0, 1.0, 3);
        let one = ScalarField::constant(&lat, Complex64::new(1.0, 0.0));
        assert_eq!(gauge_transform(&lat, &cfg, &one).unwrap(), cfg);
        let g = Complex64::from_polar(1.0, 0.7);
        let out = gauge_transform(&lat, &cfg, &ScalarField::constant(&lat, g)).unwrap();
        assert!(out.a.sub(&cfg.a).norm_sup() < 1e-12);
        assert!(out.phi.sub(&cfg.phi.scale(g)).norm_sup() < 1e-14);
        let bad = ScalarField::constant(&lat, Complex64::new(2.0, 0.0));
        assert!(matches!(gauge_transform(&lat, &cfg, &bad), Err(GlError::Precondition(_))));
    }

    #[test]
    fn vortex_gauge_is_rejected() {
        let lat = LatticeTorus::unit(8, 0).unwrap();
        let cfg = Configuration::normal(&lat);
        // Phase winding once around the centre of a plaquette.
        let g = ScalarField::from_fn(&lat, |x, y| {
            let z = Complex64::new(x - 0.51, y - 0.49);
            z / z.norm()
        });
        assert!(matches!(gauge_transform(&lat, &cfg, &g), Err(GlError::FluxSector)));
    }

    #[test]
    fn coulomb_projection_removes_pure_gauge() {
        let lat = LatticeTorus::new(12, 10, 1.0, 1.4, 1).unwrap();
        let f: Vec<f64> = (0..lat.sites()).map(|x| ((x * 7) % 13) as f64 / 13.0).collect();
        let cfg = Configuration { a: gradient0(&lat, &f), phi: ScalarField::zeros(&lat) };
        let out = coulomb_project(&lat, &cfg).unwrap();
        assert!(out.a.norm_sup() < 1e-10);

        let cfg = Configuration::random(&lat, 1.0, 1.0, 1);
        let p = coulomb_project(&lat, &cfg).unwrap();
        let div = codifferential_1_real(&lat, &p.a).unwrap();
        assert!(div.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10);
        let pp = coulomb_project(&lat, &p).unwrap();
        assert!(pp.a.sub(&p.a).norm_sup() < 1e-12);
        assert!(pp.phi.sub(&p.phi).norm_sup() < 1e-12);
    }
}
