//! Small dense numerics shared by the chart, algebra and solver code:
//! finite-difference Jacobians, a damping-free Newton iteration, and
//! rank-revealing factorizations on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn diff_inf_norm(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference Jacobian of `f` at `x`, one column per input
/// coordinate. `f` may be vector valued; the output shape is inferred from
/// its first evaluation.
pub fn jacobian_central<E>(
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    x: &[f64],
    step: f64,
) -> Result<DMatrix<f64>, E> {
    let mut probe = x.to_vec();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + step;
        let plus = f(&probe)?;
        probe[j] = x[j] - step;
        let minus = f(&probe)?;
        probe[j] = x[j];
        cols.push(DVector::from_iterator(
            plus.len(),
            plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * step)),
        ));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Directional central difference of a vector-valued map: d/dt f(x + t d)
/// at t = 0.
pub fn directional_central<E>(
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    x: &[f64],
    direction: &[f64],
    step: f64,
) -> Result<Vec<f64>, E> {
    let shift = |sign: f64| -> Vec<f64> {
        x.iter()
            .zip(direction)
            .map(|(xi, di)| xi + sign * step * di)
            .collect()
    };
    let plus = f(&shift(1.0))?;
    let minus = f(&shift(-1.0))?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * step))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewtonFailure<E> {
    Inner(E),
    DidNotConverge { iterations: usize, residual: f64 },
    SingularJacobian,
}

/// Undamped Newton iteration on a square system `f(z) = 0` with a
/// central-difference Jacobian. Converges when the residual infinity norm
/// drops to `tol`.
pub fn newton_root<E>(
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    start: &[f64],
    tol: f64,
    max_iter: usize,
    fd_step: f64,
) -> Result<Vec<f64>, NewtonFailure<E>> {
    let mut z = start.to_vec();
    let mut residual = f(&z).map_err(NewtonFailure::Inner)?;
    for _ in 0..max_iter {
        if inf_norm(&residual) <= tol {
            return Ok(z);
        }
        let jac = jacobian_central(&mut f, &z, fd_step).map_err(NewtonFailure::Inner)?;
        let rhs = DVector::from_column_slice(&residual);
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or(NewtonFailure::SingularJacobian)?;
        for (zi, di) in z.iter_mut().zip(delta.iter()) {
            *zi -= di;
        }
        residual = f(&z).map_err(NewtonFailure::Inner)?;
    }
    if inf_norm(&residual) <= tol {
        Ok(z)
    } else {
        Err(NewtonFailure::DidNotConverge {
            iterations: max_iter,
            residual: inf_norm(&residual),
        })
    }
}

pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |m, s| m.min(*s))
}

/// (smallest, largest) singular values.
pub fn singular_extrema(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = a.clone().singular_values();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for s in sv.iter() {
        lo = lo.min(*s);
        hi = hi.max(*s);
    }
    (lo, hi)
}

/// Orthonormal basis of the column space (thin QR).
pub fn orthonormal_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Orthonormal basis of the null space of `a`, assuming full row rank:
/// project out the row space and take the dominant left singular vectors
/// of the complement.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let m = a.nrows();
    let q = orthonormal_columns(&a.transpose());
    let mut proj = DMatrix::identity(n, n);
    proj -= &q * q.transpose();
    let svd = proj.svd(true, false);
    let u = svd.u.expect("u requested");
    u.columns(0, n - m).into_owned()
}

/// Component of `v` orthogonal to the column space of the orthonormal `q`.
pub fn orthogonal_component(q: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    v - q * (q.transpose() * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    enum Never {}

    #[test]
    fn jacobian_of_quadratic() {
        let f = |x: &[f64]| -> Result<Vec<f64>, Never> { Ok(vec![x[0] * x[0], x[0] * x[1]]) };
        let jac = jacobian_central(f, &[2.0, 3.0], 1e-6).unwrap();
        assert!((jac[(0, 0)] - 4.0).abs() < 1e-9);
        assert!((jac[(0, 1)] - 0.0).abs() < 1e-9);
        assert!((jac[(1, 0)] - 3.0).abs() < 1e-9);
        assert!((jac[(1, 1)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn newton_on_cubic() {
        let f = |x: &[f64]| -> Result<Vec<f64>, Never> {
            Ok(vec![x[0] * x[0] * x[0] + 3.0 * x[0] - 7.0])
        };
        let root = newton_root(f, &[1.0], 1e-12, 50, 1e-6).unwrap();
        assert!((root[0] - 1.406_287_579_960_534_7).abs() < 1e-10);
    }

    #[test]
    fn newton_reports_divergence() {
        // No real root: x^2 + 1 = 0.
        let f = |x: &[f64]| -> Result<Vec<f64>, Never> { Ok(vec![x[0] * x[0] + 1.0]) };
        let err = newton_root(f, &[1.0], 1e-12, 20, 1e-6).unwrap_err();
        assert!(matches!(err, NewtonFailure::DidNotConverge { .. }));
    }

    #[test]
    fn null_space_of_selection() {
        // p(x) = (x2, x3) on R^3: null space is the x1 axis.
        let a = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let ns = null_space(&a);
        assert_eq!(ns.shape(), (3, 1));
        assert!((ns[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(ns[(1, 0)].abs() < 1e-12);
        assert!(ns[(2, 0)].abs() < 1e-12);
    }

    #[test]
    fn null_space_columns_are_orthonormal() {
        let a = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, -1.0, 0.5]);
        let ns = null_space(&a);
        assert_eq!(ns.shape(), (4, 3));
        let gram = ns.transpose() * &ns;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-10);
            }
        }
        // Each column annihilated by a.
        let prod = a * &ns;
        for v in prod.iter() {
            assert!(v.abs() < 1e-10);
        }
    }
}
