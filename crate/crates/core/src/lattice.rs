//! Discrete exterior calculus on a periodic rectangular grid.
//!
//! Sites are indexed row-major, `(i, j) -> i * n2 + j`, where `i` runs along
//! the first axis (spacing `h1`) and `j` along the second (spacing `h2`).
//! A link component `mu` is stored at its base site, and the plaquette with
//! lower-left corner `(i, j)` is stored at the same index. Forward differences
//! define `d`; the codifferentials are their exact adjoints under inner
//! products weighted by the cell measure `h1 * h2`, so every summation by
//! parts identity holds to rounding error.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, GlError, Result};

/// Flat rectangular torus `[0, len1) x [0, len2)` carrying a line bundle of
/// the given degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeTorus {
    pub n1: usize,
    pub n2: usize,
    pub len1: f64,
    pub len2: f64,
    pub degree: u32,
}

impl LatticeTorus {
    pub fn new(n1: usize, n2: usize, len1: f64, len2: f64, degree: u32) -> Result<Self> {
        if n1 < 4 || n2 < 4 {
            return Err(GlError::InvalidLattice(format!(
                "grid {n1}x{n2} is smaller than 4x4"
            )));
        }
        if !(len1 > 0.0 && len2 > 0.0 && len1.is_finite() && len2.is_finite()) {
            return Err(GlError::InvalidLattice(format!(
                "side lengths must be positive, got {len1} x {len2}"
            )));
        }
        Ok(Self { n1, n2, len1, len2, degree })
    }

    /// Unit-area square torus with an `n x n` grid.
    pub fn unit(n: usize, degree: u32) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0, degree)
    }

    #[inline]
    pub fn h1(&self) -> f64 {
        self.len1 / self.n1 as f64
    }

    #[inline]
    pub fn h2(&self) -> f64 {
        self.len2 / self.n2 as f64
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.len1 * self.len2
    }

    /// Quadrature weight of one cell.
    #[inline]
    pub fn cell(&self) -> f64 {
        self.h1() * self.h2()
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.n1 * self.n2
    }

    /// Geometric mean mesh width; used for `h`-scaled thresholds.
    pub fn mesh(&self) -> f64 {
        self.cell().sqrt()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    /// Neighbour one step forward along axis 1.
    #[inline]
    pub fn fwd1(&self, x: usize) -> usize {
        let n = self.sites();
        let y = x + self.n2;
        if y >= n {
            y - n
        } else {
            y
        }
    }

    /// Neighbour one step forward along axis 2.
    #[inline]
    pub fn fwd2(&self, x: usize) -> usize {
        if (x + 1).is_multiple_of(self.n2) {
            x + 1 - self.n2
        } else {
            x + 1
        }
    }

    #[inline]
    pub fn bwd1(&self, x: usize) -> usize {
        if x < self.n2 {
            x + self.sites() - self.n2
        } else {
            x - self.n2
        }
    }

    #[inline]
    pub fn bwd2(&self, x: usize) -> usize {
        if x.is_multiple_of(self.n2) {
            x + self.n2 - 1
        } else {
            x - 1
        }
    }

    /// Coordinates `(x1, x2)` of a site.
    pub fn position(&self, x: usize) -> (f64, f64) {
        let i = x / self.n2;
        let j = x % self.n2;
        (i as f64 * self.h1(), j as f64 * self.h2())
    }

    /// Same geometry with a different grid resolution.
    pub fn with_grid(&self, n1: usize, n2: usize) -> Result<Self> {
        Self::new(n1, n2, self.len1, self.len2, self.degree)
    }

    pub fn with_degree(&self, degree: u32) -> Self {
        Self { degree, ..self.clone() }
    }
}

/// Complex value per site. Real scalars carry zero imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Vec<Complex64>,
}

/// Imaginary-valued 1-form `i (comp1 dx1 + comp2 dx2)` sampled on links.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub comp1: Vec<f64>,
    pub comp2: Vec<f64>,
}

/// Imaginary-valued 2-form `i values dx1 ^ dx2` sampled on plaquettes.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoForm {
    pub values: Vec<f64>,
}

/// Neumaier-compensated sum in index order.
pub fn ksum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl ScalarField {
    pub fn zeros(lat: &LatticeTorus) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); lat.sites()] }
    }

    pub fn constant(lat: &LatticeTorus, c: Complex64) -> Self {
        Self { values: vec![c; lat.sites()] }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self { values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    pub fn from_fn(lat: &LatticeTorus, f: impl Fn(f64, f64) -> Complex64) -> Self {
        Self {
            values: (0..lat.sites())
                .map(|x| {
                    let (a, b) = lat.position(x);
                    f(a, b)
                })
                .collect(),
        }
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn check(&self, lat: &LatticeTorus) -> Result<()> {
        check_len(lat.sites(), self.values.len())
    }

    /// Real inner product `Re <self, other>` weighted by the cell measure.
    pub fn dot(&self, lat: &LatticeTorus, other: &Self) -> f64 {
        lat.cell() * ksum(self.values.iter().zip(&other.values).map(|(a, b)| (a.conj() * b).re))
    }

    /// Hermitian inner product `<self, other>`, antilinear in `self`.
    pub fn hdot(&self, lat: &LatticeTorus, other: &Self) -> Complex64 {
        let re = ksum(self.values.iter().zip(&other.values).map(|(a, b)| (a.conj() * b).re));
        let im = ksum(self.values.iter().zip(&other.values).map(|(a, b)| (a.conj() * b).im));
        Complex64::new(re, im) * lat.cell()
    }

    pub fn norm_l2(&self, lat: &LatticeTorus) -> f64 {
        self.dot(lat, self).sqrt()
    }

    pub fn norm_lp(&self, lat: &LatticeTorus, p: f64) -> f64 {
        (lat.cell() * ksum(self.values.iter().map(|z| z.norm().powf(p)))).powf(1.0 / p)
    }

    /// `|| self ||_{L^4}^4`.
    pub fn l4_pow4(&self, lat: &LatticeTorus) -> f64 {
        lat.cell() * ksum(self.values.iter().map(|z| z.norm_sqr() * z.norm_sqr()))
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { values: self.values.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    pub fn axpy(&mut self, s: Complex64, other: &Self) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }
}

impl OneForm {
    pub fn zeros(lat: &LatticeTorus) -> Self {
        Self { comp1: vec![0.0; lat.sites()], comp2: vec![0.0; lat.sites()] }
    }

    pub fn check(&self, lat: &LatticeTorus) -> Result<()> {
        check_len(lat.sites(), self.comp1.len())?;
        check_len(lat.sites(), self.comp2.len())
    }

    pub fn dot(&self, lat: &LatticeTorus, other: &Self) -> f64 {
        let s1 = ksum(self.comp1.iter().zip(&other.comp1).map(|(a, b)| a * b));
        let s2 = ksum(self.comp2.iter().zip(&other.comp2).map(|(a, b)| a * b));
        lat.cell() * (s1 + s2)
    }

    pub fn norm_l2(&self, lat: &LatticeTorus) -> f64 {
        self.dot(lat, self).sqrt()
    }

    pub fn norm_sup(&self) -> f64 {
        self.comp1.iter().chain(&self.comp2).map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            comp1: self.comp1.iter().map(|v| v * s).collect(),
            comp2: self.comp2.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            comp1: self.comp1.iter().zip(&other.comp1).map(|(a, b)| a + b).collect(),
            comp2: self.comp2.iter().zip(&other.comp2).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.comp1.iter_mut().zip(&other.comp1) {
            *a += s * b;
        }
        for (a, b) in self.comp2.iter_mut().zip(&other.comp2) {
            *a += s * b;
        }
    }

    /// Mean of each component: the harmonic part of the form.
    pub fn harmonic_part(&self) -> [f64; 2] {
        let n = self.comp1.len() as f64;
        [ksum(self.comp1.iter().copied()) / n, ksum(self.comp2.iter().copied()) / n]
    }

    pub fn constant(lat: &LatticeTorus, c1: f64, c2: f64) -> Self {
        Self { comp1: vec![c1; lat.sites()], comp2: vec![c2; lat.sites()] }
    }

    /// Site-local Hodge star `(c1, c2) -> (-c2, c1)`.
    pub fn star(&self) -> Self {
        Self { comp1: self.comp2.iter().map(|v| -v).collect(), comp2: self.comp1.clone() }
    }
}

impl TwoForm {
    pub fn zeros(lat: &LatticeTorus) -> Self {
        Self { values: vec![0.0; lat.sites()] }
    }

    pub fn check(&self, lat: &LatticeTorus) -> Result<()> {
        check_len(lat.sites(), self.values.len())
    }

    pub fn dot(&self, lat: &LatticeTorus, other: &Self) -> f64 {
        lat.cell() * ksum(self.values.iter().zip(&other.values).map(|(a, b)| a * b))
    }

    pub fn norm_l2(&self, lat: &LatticeTorus) -> f64 {
        self.dot(lat, self).sqrt()
    }

    /// `sum_p values(p) h1 h2`.
    pub fn integral(&self, lat: &LatticeTorus) -> f64 {
        lat.cell() * ksum(self.values.iter().copied())
    }
}

/// Discrete gradient of a real function: forward differences on links.
pub fn gradient0(lat: &LatticeTorus, f: &[f64]) -> OneForm {
    let (h1, h2) = (lat.h1(), lat.h2());
    let mut a = OneForm::zeros(lat);
    for x in 0..lat.sites() {
        a.comp1[x] = (f[lat.fwd1(x)] - f[x]) / h1;
        a.comp2[x] = (f[lat.fwd2(x)] - f[x]) / h2;
    }
    a
}

pub(crate) fn curl_into(lat: &LatticeTorus, c1: &[f64], c2: &[f64], out: &mut [f64]) {
    let (h1, h2) = (lat.h1(), lat.h2());
    for x in 0..lat.sites() {
        out[x] = (c2[lat.fwd1(x)] - c2[x]) / h1 - (c1[lat.fwd2(x)] - c1[x]) / h2;
    }
}

/// Discrete exterior derivative on 1-forms: circulation per plaquette
/// divided by its area.
pub fn exterior_d(lat: &LatticeTorus, a: &OneForm) -> Result<TwoForm> {
    a.check(lat)?;
    let mut out = TwoForm::zeros(lat);
    curl_into(lat, &a.comp1, &a.comp2, &mut out.values);
    Ok(out)
}

pub(crate) fn codiff1_into(lat: &LatticeTorus, c1: &[f64], c2: &[f64], out: &mut [f64]) {
    let (h1, h2) = (lat.h1(), lat.h2());
    for x in 0..lat.sites() {
        out[x] = -((c1[x] - c1[lat.bwd1(x)]) / h1 + (c2[x] - c2[lat.bwd2(x)]) / h2);
    }
}

/// Real-valued `d* a` (backward divergence with a minus sign).
pub fn codifferential_1_real(lat: &LatticeTorus, a: &OneForm) -> Result<Vec<f64>> {
    a.check(lat)?;
    let mut out = vec![0.0; lat.sites()];
    codiff1_into(lat, &a.comp1, &a.comp2, &mut out);
    Ok(out)
}

/// `d* : 1-forms -> 0-forms`, the adjoint of [`gradient0`].
pub fn codifferential_1(lat: &LatticeTorus, a: &OneForm) -> Result<ScalarField> {
    Ok(ScalarField::from_real(&codifferential_1_real(lat, a)?))
}

/// `d* : 2-forms -> 1-forms`, the adjoint of [`exterior_d`].
pub fn codifferential_2(lat: &LatticeTorus, b: &TwoForm) -> Result<OneForm> {
    b.check(lat)?;
    let (h1, h2) = (lat.h1(), lat.h2());
    let mut a = OneForm::zeros(lat);
    for y in 0..lat.sites() {
        a.comp1[y] = (b.values[y] - b.values[lat.bwd2(y)]) / h2;
        a.comp2[y] = (b.values[lat.bwd1(y)] - b.values[y]) / h1;
    }
    Ok(a)
}

/// Five-point Laplacian `d* d` on real functions.
pub fn laplacian0_real(lat: &LatticeTorus, f: &[f64]) -> Vec<f64> {
    let (h1, h2) = (lat.h1(), lat.h2());
    (0..lat.sites())
        .map(|x| {
            (2.0 * f[x] - f[lat.fwd1(x)] - f[lat.bwd1(x)]) / (h1 * h1)
                + (2.0 * f[x] - f[lat.fwd2(x)] - f[lat.bwd2(x)]) / (h2 * h2)
        })
        .collect()
}

/// Forward divergence `d1+ c1 + d2+ c2`, evaluated at the base site.
pub(crate) fn forward_div_into(lat: &LatticeTorus, c1: &[f64], c2: &[f64], out: &mut [f64]) {
    let (h1, h2) = (lat.h1(), lat.h2());
    for x in 0..lat.sites() {
        out[x] = (c1[lat.fwd1(x)] - c1[x]) / h1 + (c2[lat.fwd2(x)] - c2[x]) / h2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_form(lat: &LatticeTorus, rng: &mut ChaCha8Rng) -> OneForm {
        OneForm {
            comp1: (0..lat.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            comp2: (0..lat.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(LatticeTorus::new(3, 8, 1.0, 1.0, 0).is_err());
        assert!(LatticeTorus::new(8, 8, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn neighbour_tables_wrap() {
        let lat = LatticeTorus::new(5, 7, 1.0, 2.0, 0).unwrap();
        for x in 0..lat.sites() {
            assert_eq!(lat.bwd1(lat.fwd1(x)), x);
            assert_eq!(lat.bwd2(lat.fwd2(x)), x);
        }
        assert_eq!(lat.fwd1(lat.idx(4, 3)), lat.idx(0, 3));
        assert_eq!(lat.fwd2(lat.idx(2, 6)), lat.idx(2, 0));
    }

    #[test]
    fn d_of_zero_and_of_gradients_vanish() {
        let lat = LatticeTorus::new(9, 6, 1.3, 0.7, 0).unwrap();
        let z = exterior_d(&lat, &OneForm::zeros(&lat)).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..lat.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dd = exterior_d(&lat, &gradient0(&lat, &f)).unwrap();
        assert!(dd.values.iter().all(|v| v.abs() < 1e-12), "{:?}", dd.values);
    }

    #[test]
    fn exterior_d_matches_stencil_loop() {
        let lat = LatticeTorus::unit(32, 0).unwrap();
        let n = 32usize;
        let h = 1.0 / n as f64;
        let mut a = OneForm::zeros(&lat);
        for i in 0..n {
            for j in 0..n {
                a.comp2[i * n + j] = (2.0 * std::f64::consts::PI * i as f64 * h).sin();
            }
        }
        let da = exterior_d(&lat, &a).unwrap();
        for i in 0..n {
            let s0 = (2.0 * std::f64::consts::PI * i as f64 * h).sin();
            let s1 = (2.0 * std::f64::consts::PI * ((i + 1) % n) as f64 * h).sin();
            for j in 0..n {
                assert!((da.values[i * n + j] - (s1 - s0) / h).abs() < 1e-12);
            }
        }
        assert!(da.integral(&lat).abs() < 1e-12);
    }

    #[test]
    fn codifferentials_are_adjoint() {
        let lat = LatticeTorus::new(8, 8, 1.0, 1.5, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_form(&lat, &mut rng);
            let f: Vec<f64> = (0..lat.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = ScalarField::from_real(&codifferential_1_real(&lat, &a).unwrap())
                .dot(&lat, &ScalarField::from_real(&f));
            let rhs = a.dot(&lat, &gradient0(&lat, &f));
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));

            let b = TwoForm { values: (0..lat.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let lhs2 = codifferential_2(&lat, &b).unwrap().dot(&lat, &a);
            let rhs2 = b.dot(&lat, &exterior_d(&lat, &a).unwrap());
            assert!((lhs2 - rhs2).abs() <= 1e-12 * (1.0 + rhs2.abs()));
        }
        let z = codifferential_1(&lat, &OneForm::zeros(&lat)).unwrap();
        assert!(z.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn codifferential_of_gradient_is_five_point_laplacian_dense() {
        // Dense assembly: build the Laplacian column by column from unit vectors.
        let lat = LatticeTorus::unit(8, 0).unwrap();
        let n = lat.sites();
        let h2 = lat.h1() * lat.h1();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..8 {
            for j in 0..8 {
                let x = i * 8 + j;
                dense[x][x] = 4.0 / h2;
                for y in [((i + 1) % 8) * 8 + j, ((i + 7) % 8) * 8 + j, i * 8 + (j + 1) % 8, i * 8 + (j + 7) % 8] {
                    dense[x][y] -= 1.0 / h2;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = codifferential_1_real(&lat, &gradient0(&lat, &f)).unwrap();
        for x in 0..n {
            let want: f64 = (0..n).map(|y| dense[x][y] * f[y]).sum();
            assert!((got[x] - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
        let lap = laplacian0_real(&lat, &f);
        for x in 0..n {
            assert!((lap[x] - got[x]).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let lat = LatticeTorus::unit(8, 0).unwrap();
        let small = LatticeTorus::unit(4, 0).unwrap();
        let a = OneForm::zeros(&small);
        assert!(matches!(exterior_d(&lat, &a), Err(GlError::Dimension { .. })));
    }

    #[test]
    fn star_squares_to_minus_one() {
        let lat = LatticeTorus::unit(6, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_form(&lat, &mut rng);
        let ss = a.star().star();
        assert_eq!(ss, a.scale(-1.0));
        assert!((a.star().norm_l2(&lat) - a.norm_l2(&lat)).abs() < 1e-14);
    }
}
