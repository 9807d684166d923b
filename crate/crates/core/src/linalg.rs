//! Matrix-free real symmetric eigensolver (LOBPCG), preconditioned MINRES,
//! and small dense helpers used as oracles.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{GlError, Result};

pub type Vector = Vec<f64>;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators keep the order fixed and vectorize.
    let mut s = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            s[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += s * b;
    }
}

pub fn scale(x: &mut [f64], s: f64) {
    x.iter_mut().for_each(|v| *v *= s);
}

/// Removes the components along an orthonormal set.
pub fn project_out(v: &mut [f64], basis: &[Vector]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(v, -c, q);
        }
    }
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns whose
/// norm drops below `drop_tol` times their input norm are discarded.
pub fn orthonormalize(vs: Vec<Vector>, against: &[Vector], drop_tol: f64) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let n0 = norm(&v);
        if n0 == 0.0 || !n0.is_finite() {
            continue;
        }
        scale(&mut v, 1.0 / n0);
        for _ in 0..2 {
            project_out(&mut v, against);
            for q in &out {
                let c = dot(q, &v);
                axpy(&mut v, -c, q);
            }
        }
        let n1 = norm(&v);
        if n1 > drop_tol {
            scale(&mut v, 1.0 / n1);
            out.push(v);
        }
    }
    out
}

/// Options for [`lobpcg`].
#[derive(Clone, Debug)]
pub struct EigOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 2000, guard: 4, seed: 7 }
    }
}

#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vector>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Lowest `k` eigenpairs of a real symmetric operator of dimension `n`.
///
/// `constraints` is an orthonormal set the iteration stays orthogonal to.
/// Residuals are `||A x - lambda x||` for unit `x`; convergence requires
/// all `k` to fall below `opts.tol * max(1, |lambda|)`.
pub fn lobpcg(
    n: usize,
    k: usize,
    op: &dyn Fn(&[f64]) -> Vector,
    precond: Option<&dyn Fn(&[f64]) -> Vector>,
    constraints: &[Vector],
    opts: &EigOptions,
) -> Result<EigResult> {
    use rand::{Rng, SeedableRng};
    if k == 0 {
        return Ok(EigResult { values: vec![], vectors: vec![], residuals: vec![], iterations: 0 });
    }
    let avail = n.saturating_sub(constraints.len());
    if k > avail {
        return Err(GlError::Precondition(format!("requested {k} eigenpairs of a {avail}-dimensional space")));
    }
    let m = (k + opts.guard).min(avail);
    if 3 * m >= avail {
        return dense_fallback(n, k, op, constraints);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let init: Vec<Vector> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut x = orthonormalize(init, constraints, 1e-8);
    let mut p: Vec<Vector> = Vec::new();
    let mut ax: Vec<Vector> = x.iter().map(|v| op(v)).collect();
    let (mut lam, mut xs, mut axs) = rayleigh_ritz(&x, &ax, m);
    x = std::mem::take(&mut xs);
    ax = std::mem::take(&mut axs);
    let mut res = vec![f64::INFINITY; m];
    for it in 0..opts.max_iter {
        let mut r: Vec<Vector> = Vec::with_capacity(m);
        for i in 0..x.len() {
            let mut ri = ax[i].clone();
            axpy(&mut ri, -lam[i], &x[i]);
            // Residual of the operator compressed to the constraint complement.
            project_out(&mut ri, constraints);
            res[i] = norm(&ri);
            r.push(ri);
        }
        let converged = (0..k).all(|i| res[i] <= opts.tol * lam[i].abs().max(1.0));
        if converged {
            return Ok(EigResult {
                values: lam[..k].to_vec(),
                vectors: x[..k].to_vec(),
                residuals: res[..k].to_vec(),
                iterations: it,
            });
        }
        // Only precondition unconverged residuals; converged columns are
        // kept in the basis through X.
        let mut w: Vec<Vector> = Vec::new();
        for i in 0..x.len() {
            if res[i] > 0.1 * opts.tol * lam[i].abs().max(1.0) {
                let mut wi = match precond {
                    Some(t) => t(&r[i]),
                    None => r[i].clone(),
                };
                project_out(&mut wi, constraints);
                w.push(wi);
            }
        }
        let mut basis = x.clone();
        let extra = orthonormalize(w.into_iter().chain(p.iter().cloned()).collect(), &concat(constraints, &basis), 1e-10);
        let nx = basis.len();
        basis.extend(extra);
        let mut abasis: Vec<Vector> = ax.clone();
        for v in &basis[nx..] {
            abasis.push(op(v));
        }
        let (l2, xnew, axnew) = rayleigh_ritz(&basis, &abasis, m);
        // New search directions: the part of X_new outside span(X_old).
        p = xnew
            .iter()
            .map(|v| {
                let mut d = v.clone();
                for q in &x {
                    let c = dot(q, &d);
                    axpy(&mut d, -c, q);
                }
                d
            })
            .collect();
        lam = l2;
        x = xnew;
        ax = axnew;
    }
    let worst = (0..k).map(|i| res[i]).fold(0.0, f64::max);
    Err(GlError::IterationLimit { iterations: opts.max_iter, residual: worst })
}

fn concat(a: &[Vector], b: &[Vector]) -> Vec<Vector> {
    a.iter().chain(b).cloned().collect()
}

/// Rayleigh-Ritz on an orthonormal basis; returns the lowest `m` Ritz pairs
/// together with the images `A x`.
fn rayleigh_ritz(basis: &[Vector], abasis: &[Vector], m: usize) -> (Vec<f64>, Vec<Vector>, Vec<Vector>) {
    let s = basis.len();
    let mut g = DMatrix::<f64>::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let v = 0.5 * (dot(&basis[i], &abasis[j]) + dot(&basis[j], &abasis[i]));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let (vals, vecs) = sorted_eigen(g);
    let m = m.min(s);
    let n = basis[0].len();
    let mut xs = Vec::with_capacity(m);
    let mut axs = Vec::with_capacity(m);
    for c in 0..m {
        let mut xv = vec![0.0; n];
        let mut av = vec![0.0; n];
        for r in 0..s {
            let w = vecs[(r, c)];
            axpy(&mut xv, w, &basis[r]);
            axpy(&mut av, w, &abasis[r]);
        }
        xs.push(xv);
        axs.push(av);
    }
    (vals[..m].to_vec(), xs, axs)
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn sorted_eigen(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let s = g.nrows();
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(s, s, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Assembles the matrix of a linear operator column by column.
pub fn assemble(n_in: usize, op: &dyn Fn(&[f64]) -> Vector) -> DMatrix<f64> {
    let mut e = vec![0.0; n_in];
    let first = {
        e[0] = 1.0;
        let c = op(&e);
        e[0] = 0.0;
        c
    };
    let mut m = DMatrix::<f64>::zeros(first.len(), n_in);
    m.column_mut(0).copy_from_slice(&first);
    for j in 1..n_in {
        e[j] = 1.0;
        let c = op(&e);
        e[j] = 0.0;
        m.column_mut(j).copy_from_slice(&c);
    }
    m
}

fn dense_fallback(n: usize, k: usize, op: &dyn Fn(&[f64]) -> Vector, constraints: &[Vector]) -> Result<EigResult> {
    let mut a = assemble(n, op);
    a = 0.5 * (&a + a.transpose());
    if !constraints.is_empty() {
        // Compress onto the orthogonal complement of the constraints.
        let q = orthonormal_complement(n, constraints);
        let qa = DMatrix::from_fn(n, q.len(), |r, c| q[c][r]);
        let b = qa.transpose() * &a * &qa;
        let (vals, vecs) = sorted_eigen(b);
        let vectors: Vec<Vector> = (0..k).map(|c| (&qa * vecs.column(c)).iter().copied().collect()).collect();
        return finish_dense(vals, vectors, op, k);
    }
    let (vals, vecs) = sorted_eigen(a);
    let vectors = (0..k).map(|c| vecs.column(c).iter().copied().collect()).collect();
    finish_dense(vals, vectors, op, k)
}

fn finish_dense(vals: Vec<f64>, vectors: Vec<Vector>, op: &dyn Fn(&[f64]) -> Vector, k: usize) -> Result<EigResult> {
    let residuals = vectors
        .iter()
        .zip(&vals)
        .map(|(v, &l)| {
            let mut r = op(v);
            axpy(&mut r, -l, v);
            norm(&r)
        })
        .collect();
    Ok(EigResult { values: vals[..k].to_vec(), vectors, residuals, iterations: 0 })
}

/// Orthonormal basis of the complement of an orthonormal set in `R^n`.
pub fn orthonormal_complement(n: usize, set: &[Vector]) -> Vec<Vector> {
    let units: Vec<Vector> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut out = orthonormalize(units, set, 1e-6);
    out.truncate(n - set.len());
    out
}

/// Options for [`minres`].
#[derive(Clone, Debug)]
pub struct MinresOptions {
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for MinresOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, max_iter: 5000 }
    }
}

#[derive(Clone, Debug)]
pub struct MinresResult {
    pub x: Vector,
    pub iterations: usize,
    /// True residual `||b - A x|| / ||b||`.
    pub relres: f64,
}

/// Preconditioned MINRES for symmetric, possibly indefinite or singular but
/// consistent systems. The preconditioner must be symmetric positive
/// (semi)definite on the relevant subspace.
pub fn minres(
    op: &dyn Fn(&[f64]) -> Vector,
    b: &[f64],
    precond: Option<&dyn Fn(&[f64]) -> Vector>,
    opts: &MinresOptions,
) -> Result<MinresResult> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(MinresResult { x: vec![0.0; n], iterations: 0, relres: 0.0 });
    }
    let apply_m = |v: &[f64]| match precond {
        Some(m) => m(v),
        None => v.to_vec(),
    };
    let mut x = vec![0.0; n];
    let mut total_it = 0;
    // Restart on a stagnating recurrence, recomputing the true residual.
    for _restart in 0..6 {
        let mut r1: Vector = {
            let ax = op(&x);
            b.iter().zip(&ax).map(|(a, c)| a - c).collect()
        };
        let rel = norm(&r1) / bnorm;
        if rel <= opts.rtol {
            return Ok(MinresResult { x, iterations: total_it, relres: rel });
        }
        let mut y = apply_m(&r1);
        let beta1 = dot(&r1, &y);
        if beta1 <= 0.0 {
            return Err(GlError::Precondition("preconditioner is not positive definite".into()));
        }
        let beta1 = beta1.sqrt();
        let mut oldb = 0.0;
        let mut beta = beta1;
        let mut dbar = 0.0;
        let mut epsln = 0.0;
        let mut phibar = beta1;
        let mut cs = -1.0;
        let mut sn = 0.0;
        let mut w = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        let mut r2 = r1.clone();
        let target = opts.rtol * bnorm;
        let mut itn = 0;
        // Estimate of ||b - A x|| scaled back from the M^{-1} norm.
        let scale_est = norm(&r1) / beta1;
        while total_it < opts.max_iter {
            itn += 1;
            total_it += 1;
            let v: Vector = y.iter().map(|t| t / beta).collect();
            y = op(&v);
            if itn >= 2 {
                axpy(&mut y, -beta / oldb, &r1);
            }
            let alfa = dot(&v, &y);
            axpy(&mut y, -alfa / beta, &r2);
            r1 = std::mem::replace(&mut r2, y.clone());
            y = apply_m(&r2);
            oldb = beta;
            let bb = dot(&r2, &y);
            beta = if bb > 0.0 { bb.sqrt() } else { 0.0 };
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = gbar.hypot(beta).max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;
            let w1 = std::mem::replace(&mut w2, w.clone());
            for i in 0..n {
                w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            }
            axpy(&mut x, phi, &w);
            if phibar * scale_est <= 0.5 * target || beta == 0.0 {
                break;
            }
        }
        let ax = op(&x);
        let rel = norm(&b.iter().zip(&ax).map(|(a, c)| a - c).collect::<Vector>()) / bnorm;
        if rel <= opts.rtol {
            return Ok(MinresResult { x, iterations: total_it, relres: rel });
        }
        if total_it >= opts.max_iter {
            return Err(GlError::IterationLimit { iterations: total_it, residual: rel });
        }
    }
    let ax = op(&x);
    let rel = norm(&b.iter().zip(&ax).map(|(a, c)| a - c).collect::<Vector>()) / bnorm;
    if rel <= opts.rtol * 10.0 {
        Ok(MinresResult { x, iterations: total_it, relres: rel })
    } else {
        Err(GlError::IterationLimit { iterations: total_it, residual: rel })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiag(v: &[f64]) -> Vector {
        let n = v.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                (2.0 + 0.01 * i as f64) * v[i] - l - r
            })
            .collect()
    }

    #[test]
    fn lobpcg_matches_dense() {
        let n = 120;
        let dense = assemble(n, &tridiag);
        let (vals, _) = sorted_eigen(dense);
        let res = lobpcg(n, 5, &tridiag, None, &[], &EigOptions { tol: 1e-10, ..Default::default() }).unwrap();
        for i in 0..5 {
            assert!((res.values[i] - vals[i]).abs() < 1e-9, "{} vs {}", res.values[i], vals[i]);
        }
    }

    #[test]
    fn lobpcg_respects_constraints() {
        let n = 90;
        let full = lobpcg(n, 3, &tridiag, None, &[], &EigOptions::default()).unwrap();
        let c = vec![full.vectors[0].clone()];
        let res = lobpcg(n, 2, &tridiag, None, &c, &EigOptions::default()).unwrap();
        assert!((res.values[0] - full.values[1]).abs() < 1e-8);
        assert!(dot(&res.vectors[0], &c[0]).abs() < 1e-10);
    }

    #[test]
    fn minres_indefinite_system() {
        let n = 80;
        let op = |v: &[f64]| -> Vector { tridiag(v).iter().zip(v).map(|(a, b)| a - 0.5 * b).collect() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vector = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = minres(&op, &b, None, &MinresOptions::default()).unwrap();
        let ax = op(&r.x);
        let err: f64 = ax.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-9 * norm(&b));
        let m = assemble(n, &op);
        let x = m.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - r.x[i]).abs() < 1e-8 * x.amax());
        }
    }

    #[test]
    fn minres_with_preconditioner() {
        let n = 60;
        let op = |v: &[f64]| -> Vector { tridiag(v) };
        let pre = |v: &[f64]| -> Vector { v.iter().enumerate().map(|(i, x)| x / (2.0 + 0.01 * i as f64)).collect() };
        let b: Vector = (0..n).map(|i| (i as f64).sin()).collect();
        let r = minres(&op, &b, Some(&pre), &MinresOptions::default()).unwrap();
        assert!(r.relres < 1e-10);
    }
}
