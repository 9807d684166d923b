//! Tangent vectors `(alpha, psi)` to configuration space and their flat
//! real coordinates.
//!
//! The flat layout is `[alpha_1 (N), alpha_2 (N), re psi_0, im psi_0, ...]`.
//! Every coordinate carries the same quadrature weight `h1 h2`, so the
//! Euclidean product of flat vectors times the cell measure is the tangent
//! inner product `<alpha, alpha'> + Re <psi, psi'>`.

use num_complex::Complex64;

use crate::error::{check_len, Result};
use crate::lattice::{LatticeTorus, OneForm, ScalarField};

#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub a: OneForm,
    pub psi: ScalarField,
}

impl Tangent {
    pub fn zeros(lat: &LatticeTorus) -> Self {
        Self { a: OneForm::zeros(lat), psi: ScalarField::zeros(lat) }
    }

    pub fn dim(lat: &LatticeTorus) -> usize {
        4 * lat.sites()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.a.comp1.len());
        v.extend_from_slice(&self.a.comp1);
        v.extend_from_slice(&self.a.comp2);
        for z in &self.psi.values {
            v.push(z.re);
            v.push(z.im);
        }
        v
    }

    pub fn from_flat(lat: &LatticeTorus, v: &[f64]) -> Result<Self> {
        let n = lat.sites();
        check_len(4 * n, v.len())?;
        Ok(Self {
            a: OneForm { comp1: v[..n].to_vec(), comp2: v[n..2 * n].to_vec() },
            psi: ScalarField { values: v[2 * n..].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect() },
        })
    }

    pub fn dot(&self, lat: &LatticeTorus, other: &Self) -> f64 {
        self.a.dot(lat, &other.a) + self.psi.dot(lat, &other.psi)
    }

    pub fn norm(&self, lat: &LatticeTorus) -> f64 {
        self.dot(lat, self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { a: self.a.scale(s), psi: self.psi.scale(Complex64::new(s, 0.0)) }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { a: self.a.add(&other.a), psi: self.psi.add(&other.psi) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { a: self.a.sub(&other.a), psi: self.psi.sub(&other.psi) }
    }

    /// Complex structure `(alpha, psi) -> (*alpha, i psi)`; squares to `-1`.
    pub fn complex_structure(&self) -> Self {
        Self { a: self.a.star(), psi: self.psi.scale(Complex64::new(0.0, 1.0)) }
    }

    /// Multiplies the section part by a constant phase.
    pub fn rotate_phase(&self, mu: Complex64) -> Self {
        Self { a: self.a.clone(), psi: self.psi.scale(mu) }
    }
}

/// Flat-coordinate complex structure, see [`Tangent::complex_structure`].
pub fn complex_structure_flat(n: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for x in 0..n {
        out[x] = -v[n + x];
        out[n + x] = v[x];
        out[2 * n + 2 * x] = -v[2 * n + 2 * x + 1];
        out[2 * n + 2 * x + 1] = v[2 * n + 2 * x];
    }
    out
}
