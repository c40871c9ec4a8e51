//! Dense linear-algebra kernels shared by the pipeline: least squares via
//! the pseudo-inverse, rank/nullspace decisions with an explicit ambiguity
//! band, and modified Gram-Schmidt orthogonalisation.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Tolerances};

/// Relative cutoff for treating a singular value as zero in the
/// pseudo-inverse (distinct from the rank decision threshold, which is
/// caller-visible and tolerance-driven).
const PINV_EPS: f64 = 1e-12;

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn mat_inf_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// Minimum-norm least-squares solution of `Ax = b` plus the 2-norm of the
/// residual. Acceptability is judged by the caller.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    assert_eq!(a.nrows(), b.len());
    if a.nrows() == 0 || a.ncols() == 0 {
        return (DVector::zeros(a.ncols()), b.norm());
    }
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let eps = PINV_EPS * max_sv.max(1e-300) * a.nrows().max(a.ncols()) as f64;
    let x = svd
        .solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()));
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Rank and an orthonormal nullspace basis of `A`, with the threshold
/// scaled by `1 + ‖A‖∞`. Errors out when a singular value falls inside the
/// ambiguity band `[τ/10, 10τ]`, so callers report ill-conditioning instead
/// of guessing.
pub fn rank_and_nullspace(
    a: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<(usize, Vec<DVector<f64>>), Error> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return Ok((0, Vec::new()));
    }
    let threshold = tol.rank * (1.0 + mat_inf_norm(a));
    let svd = a.clone().svd(false, true);
    for &s in svd.singular_values.iter() {
        if s >= threshold / 10.0 && s <= threshold * 10.0 {
            return Err(Error::Numerical(format!(
                "rank decision ambiguous: singular value {s:.3e} near threshold {threshold:.3e}"
            )));
        }
    }
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut rank = 0;
    let mut nullspace = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold {
            rank += 1;
        } else {
            nullspace.push(v_t.row(i).transpose());
        }
    }
    // Singular vectors only span the first min(m,n) directions; any extra
    // columns of a wide matrix are handled by nalgebra's full V^T.
    for i in svd.singular_values.len()..v_t.nrows() {
        nullspace.push(v_t.row(i).transpose());
    }
    Ok((rank, nullspace))
}

/// Modified Gram-Schmidt step: orthogonalises `u` against an orthogonal
/// (not necessarily normalised) basis. Returns `None` when the remainder is
/// negligible relative to `u`, i.e. `u` is linearly dependent on the basis.
pub fn orthogonalise(
    u: &DVector<f64>,
    basis: &[DVector<f64>],
    tol: &Tolerances,
) -> Option<DVector<f64>> {
    let norm_u = u.norm();
    if norm_u == 0.0 {
        return None;
    }
    let mut v = u.clone();
    for _ in 0..2 {
        for b in basis {
            let bb = b.dot(b);
            if bb > 0.0 {
                let coeff = v.dot(b) / bb;
                v -= b * coeff;
            }
        }
    }
    if v.norm() <= tol.independence * norm_u {
        None
    } else {
        Some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn least_squares_identity() {
        let a = DMatrix::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (x, r) = solve_least_squares(&a, &b);
        assert!((x - b).norm() < 1e-12);
        assert!(r < 1e-12);
    }

    #[test]
    fn least_squares_zero_matrix() {
        let a = DMatrix::zeros(3, 2);
        let b = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let (x, r) = solve_least_squares(&a, &b);
        assert!(x.norm() < 1e-12);
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_local_optimality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let (x, r) = solve_least_squares(&a, &b);
        for _ in 0..20 {
            let d = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let perturbed = (&a * (&x + &d * 1e-6) - &b).norm();
            assert!(perturbed + 1e-14 >= r);
        }
    }

    #[test]
    fn rank_identity_and_zero() {
        let (rank, ns) = rank_and_nullspace(&DMatrix::identity(4, 4), &tol()).unwrap();
        assert_eq!((rank, ns.len()), (4, 0));
        let (rank, ns) = rank_and_nullspace(&DMatrix::zeros(3, 3), &tol()).unwrap();
        assert_eq!((rank, ns.len()), (0, 3));
    }

    #[test]
    fn rank_nullspace_products_vanish() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.random_range(2..6usize);
            let r = rng.random_range(1..n);
            let u = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
            let v = DMatrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
            let a = u * v; // rank ≤ r
            match rank_and_nullspace(&a, &tol()) {
                Ok((rank, ns)) => {
                    assert_eq!(rank + ns.len(), n);
                    for x in &ns {
                        assert!((&a * x).norm() <= 1e-8 * (1.0 + mat_inf_norm(&a)));
                    }
                }
                Err(Error::Numerical(_)) => {} // ambiguity band is a legal outcome
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn orthogonalise_dependent_and_orthogonal() {
        let b = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let dep = orthogonalise(&(&b * 2.5), &[b.clone()], &tol());
        assert!(dep.is_none());
        let u = DVector::from_vec(vec![0.0, 0.0, 3.0]);
        let kept = orthogonalise(&u, &[b], &tol()).unwrap();
        assert!((kept - u).norm() < 1e-12);
    }

    #[test]
    fn orthogonalise_running_example_vector() {
        // The second basis vector of R(a) in the worked example is
        // independent of the first.
        let b = DVector::from_vec(vec![2.0, 1.0, 0.0, 1.0, 0.0, 2.0]);
        let u = DVector::from_vec(vec![1.0, 2.0, 0.0, 2.0, 0.0, 1.0]);
        let v = orthogonalise(&u, &[b.clone()], &tol()).unwrap();
        assert!(v.norm() > 1e-6);
        assert!(v.dot(&b).abs() <= 1e-10 * v.norm() * b.norm());
    }
}
