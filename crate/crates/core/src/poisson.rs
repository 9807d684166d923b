//! Periodic FFT solves for the five-point Laplacian and the Hodge projection.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::lattice::{codiff1_into, curl_into, ksum, LatticeTorus, OneForm};

/// Two-dimensional periodic FFT with the five-point Laplacian symbol cached.
#[derive(Clone)]
pub struct PoissonSolver {
    n1: usize,
    n2: usize,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    symbol: Vec<f64>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PoissonSolver({}x{})", self.n1, self.n2)
    }
}

impl PoissonSolver {
    pub fn new(lat: &LatticeTorus) -> Self {
        let mut planner = FftPlanner::new();
        let (n1, n2) = (lat.n1, lat.n2);
        let (h1, h2) = (lat.h1(), lat.h2());
        let mut symbol = vec![0.0; n1 * n2];
        for k in 0..n1 {
            let s1 = (std::f64::consts::PI * k as f64 / n1 as f64).sin();
            for l in 0..n2 {
                let s2 = (std::f64::consts::PI * l as f64 / n2 as f64).sin();
                symbol[k * n2 + l] = 4.0 * s1 * s1 / (h1 * h1) + 4.0 * s2 * s2 / (h2 * h2);
            }
        }
        Self {
            n1,
            n2,
            fwd1: planner.plan_fft_forward(n1),
            inv1: planner.plan_fft_inverse(n1),
            fwd2: planner.plan_fft_forward(n2),
            inv2: planner.plan_fft_inverse(n2),
            symbol,
        }
    }

    /// Eigenvalues of `d* d` on functions (equivalently of `d d*` on
    /// 2-forms), in FFT order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (n1, n2) = (self.n1, self.n2);
        let (p1, p2) = if forward { (&self.fwd1, &self.fwd2) } else { (&self.inv1, &self.inv2) };
        p2.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); n1];
        for j in 0..n2 {
            for i in 0..n1 {
                col[i] = data[i * n2 + j];
            }
            p1.process(&mut col);
            for i in 0..n1 {
                data[i * n2 + j] = col[i];
            }
        }
        if !forward {
            let s = 1.0 / (n1 * n2) as f64;
            data.iter_mut().for_each(|z| *z *= s);
        }
    }

    /// Multiplies the Fourier coefficients by `m(symbol)` in place.
    pub fn apply_multiplier(&self, data: &mut [Complex64], m: impl Fn(f64) -> f64) {
        self.transform(data, true);
        for (z, &s) in data.iter_mut().zip(&self.symbol) {
            *z *= m(s);
        }
        self.transform(data, false);
    }

    pub fn apply_multiplier_real(&self, f: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut z: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply_multiplier(&mut z, m);
        z.into_iter().map(|v| v.re).collect()
    }

    /// Mean-free solution of `d* d u = f - mean(f)`.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        self.apply_multiplier_real(f, inv_or_zero)
    }
}

pub(crate) fn inv_or_zero(s: f64) -> f64 {
    if s > 1e-12 * (1.0 + s) && s != 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

/// Solves `d* d A = j_coexact` with `d* A = 0` and no harmonic part.
///
/// Returns the potential together with the fraction of `||j||^2` that was
/// discarded as exact or harmonic.
pub fn hodge_solve_with(solver: &PoissonSolver, lat: &LatticeTorus, j: &OneForm) -> Result<(OneForm, f64)> {
    j.check(lat)?;
    let n = lat.sites();
    let mut dj = vec![0.0; n];
    curl_into(lat, &j.comp1, &j.comp2, &mut dj);
    // A = d* (d d*)^{-2} d j on the coexact sector.
    let g = solver.apply_multiplier_real(&dj, |s| inv_or_zero(s) * inv_or_zero(s));
    let (h1, h2) = (lat.h1(), lat.h2());
    let mut a = OneForm::zeros(lat);
    for y in 0..n {
        a.comp1[y] = (g[y] - g[lat.bwd2(y)]) / h2;
        a.comp2[y] = (g[lat.bwd1(y)] - g[y]) / h1;
    }
    let jn = j.dot(lat, j);
    let frac = if jn == 0.0 {
        0.0
    } else {
        // coexact part of j is d* (d d*)^{-1} d j; its norm^2 is <dj, (dd*)^{-1} dj>.
        let q = solver.apply_multiplier_real(&dj, inv_or_zero);
        let kept = lat.cell() * ksum(dj.iter().zip(&q).map(|(a, b)| a * b));
        (1.0 - kept / jn).clamp(0.0, 1.0)
    };
    Ok((a, frac))
}

pub fn hodge_solve(lat: &LatticeTorus, j: &OneForm) -> Result<(OneForm, f64)> {
    hodge_solve_with(&PoissonSolver::new(lat), lat, j)
}

/// Exact (gradient) component `d chi` of a 1-form, with `chi` returned.
pub fn exact_potential(solver: &PoissonSolver, lat: &LatticeTorus, a: &OneForm) -> Vec<f64> {
    let mut div = vec![0.0; lat.sites()];
    codiff1_into(lat, &a.comp1, &a.comp2, &mut div);
    solver.solve(&div)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{codifferential_1_real, codifferential_2, exterior_d, gradient0, laplacian0_real};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn poisson_matches_dense_solve() {
        let lat = LatticeTorus::new(10, 12, 1.0, 1.7, 0).unwrap();
        let n = lat.sites();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for x in 0..n {
            let mut e = vec![0.0; n];
            e[x] = 1.0;
            let col = laplacian0_real(&lat, &e);
            for y in 0..n {
                m[(y, x)] = col[y];
            }
        }
        // Pin the constant mode by adding the rank-one projector.
        let m = m + DMatrix::from_element(n, n, 1.0 / n as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = f.iter().sum::<f64>() / n as f64;
        f.iter_mut().for_each(|v| *v -= mean);
        let dense = m.lu().solve(&DVector::from_vec(f.clone())).unwrap();
        let fft = PoissonSolver::new(&lat).solve(&f);
        let scale = dense.amax();
        for x in 0..n {
            assert!((dense[x] - fft[x]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn hodge_zero_and_harmonic() {
        let lat = LatticeTorus::unit(8, 0).unwrap();
        let (a, f) = hodge_solve(&lat, &OneForm::zeros(&lat)).unwrap();
        assert_eq!(a.norm_sup(), 0.0);
        assert_eq!(f, 0.0);
        let (a, f) = hodge_solve(&lat, &OneForm::constant(&lat, 0.3, -1.2)).unwrap();
        assert!(a.norm_sup() < 1e-12);
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hodge_inverts_coexact_input() {
        let lat = LatticeTorus::new(16, 16, 1.0, 1.3, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = crate::lattice::TwoForm { values: (0..lat.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let j = codifferential_2(&lat, &b).unwrap();
        let (a, frac) = hodge_solve(&lat, &j).unwrap();
        let dda = codifferential_2(&lat, &exterior_d(&lat, &a).unwrap()).unwrap();
        assert!(dda.sub(&j).norm_l2(&lat) < 1e-10 * j.norm_l2(&lat));
        let div = codifferential_1_real(&lat, &a).unwrap();
        assert!(div.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12 * (1.0 + a.norm_sup() / lat.h1()));
        assert!(frac < 1e-12);
        assert!(a.harmonic_part().iter().all(|v| v.abs() < 1e-12));

        // Adding an exact part changes nothing but the diagnostic.
        let f: Vec<f64> = (0..lat.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let j2 = j.add(&gradient0(&lat, &f));
        let (a2, frac2) = hodge_solve(&lat, &j2).unwrap();
        assert!(a2.sub(&a).norm_l2(&lat) < 1e-10 * a.norm_l2(&lat));
        assert!(frac2 > 0.0 && frac2 < 1.0);
    }
}
