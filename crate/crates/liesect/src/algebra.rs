//! The Lie algebra side of the correspondence: a finite-difference bracket
//! from second derivatives of the product, closure of candidate frames,
//! and transversality against the vertical subspace.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::group::{FibrationChart, GroupChart, GroupError, RANK_TOL};
use crate::numeric;

/// Central-difference step for the outer derivative in the bracket. The
/// rules are smooth near the identity, so the O(h^2) truncation sits near
/// 1e-10 and stays far under every closure tolerance.
pub const BRACKET_FD_STEP: f64 = 1e-5;

/// Default closure tolerance: bracket error budget times ten. True closure
/// lands near 1e-10, genuine failure near 1e-1.
pub const DEFAULT_CLOSURE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("frame column {index} has dimension {got}, expected {expected}")]
    ColumnDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("frame has {got} columns but the base dimension budget is 1..={max}")]
    ColumnCount { got: usize, max: usize },
    #[error("frame column {index} has a non-finite entry")]
    NonFinite { index: usize },
    #[error(
        "frame columns are not linearly independent: smallest singular value {smin:.3e} <= {tol:.0e}"
    )]
    RankDeficient { smin: f64, tol: f64 },
}

/// `m` linearly independent tangent vectors at the identity: the candidate
/// basis of the subalgebra, equivalently the intended image of the section
/// differential at the base point.
#[derive(Debug, Clone)]
pub struct AlgebraFrame {
    columns: DMatrix<f64>,
}

impl AlgebraFrame {
    pub fn new(group: &GroupChart, columns: &[Vec<f64>]) -> Result<Self, AlgebraError> {
        let n = group.dim();
        if columns.is_empty() || columns.len() > n {
            return Err(AlgebraError::ColumnCount {
                got: columns.len(),
                max: n,
            });
        }
        for (index, column) in columns.iter().enumerate() {
            if column.len() != n {
                return Err(AlgebraError::ColumnDimension {
                    index,
                    expected: n,
                    got: column.len(),
                });
            }
            if !column.iter().all(|c| c.is_finite()) {
                return Err(AlgebraError::NonFinite { index });
            }
        }
        let matrix = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        let smin = numeric::min_singular_value(&matrix);
        let independent = smin > RANK_TOL;
        if !independent {
            return Err(AlgebraError::RankDeficient {
                smin,
                tol: RANK_TOL,
            });
        }
        Ok(AlgebraFrame { columns: matrix })
    }

    /// Number of frame vectors (the base dimension `m`).
    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    /// Group dimension `n`.
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.column(j).iter().copied().collect()
    }

    /// The combination `sum_i t_i F_i`.
    pub fn combine(&self, t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (j, tj) in t.iter().enumerate() {
            for (oi, fi) in out.iter_mut().zip(self.columns.column(j).iter()) {
                *oi += tj * fi;
            }
        }
        out
    }
}

/// Mixed second derivative of the product: the derivative in `g` at `e`
/// along `xdir` of `g -> D2mu(g, e) ydir`, by central differences. The
/// inner derivative is exact (closed form or dual numbers).
fn mixed_second(
    group: &GroupChart,
    xdir: &[f64],
    ydir: &[f64],
) -> Result<Vec<f64>, GroupError> {
    let e = group.identity();
    let shifted = |sign: f64| -> Vec<f64> {
        e.iter()
            .zip(xdir)
            .map(|(ei, xi)| ei + sign * BRACKET_FD_STEP * xi)
            .collect()
    };
    let plus = group.d2mu_apply(&shifted(1.0), ydir)?;
    let minus = group.d2mu_apply(&shifted(-1.0), ydir)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * BRACKET_FD_STEP))
        .collect())
}

/// The Lie bracket on tangent vectors at the identity, from the
/// antisymmetrized mixed second derivative of the product rule.
pub fn bracket(group: &GroupChart, x: &[f64], y: &[f64]) -> Result<Vec<f64>, GroupError> {
    let a = mixed_second(group, x, y)?;
    let b = mixed_second(group, y, x)?;
    Ok(a.iter().zip(&b).map(|(ai, bi)| ai - bi).collect())
}

/// Whether a frame spans a Lie subalgebra, with the worst off-span bracket
/// component as evidence.
#[derive(Debug, Clone, Serialize)]
pub struct ClosureReport {
    pub is_subalgebra: bool,
    /// Largest Euclidean norm over basis pairs of the bracket component
    /// orthogonal to the frame span.
    pub max_residual: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub tolerance: f64,
}

/// Bracket every pair of frame vectors and measure what sticks out of the
/// span. Projection uses the orthonormal factor of the frame.
pub fn closure_check(
    group: &GroupChart,
    frame: &AlgebraFrame,
    tolerance: f64,
) -> Result<ClosureReport, AlgebraError> {
    let q = numeric::orthonormal_columns(frame.matrix());
    let mut max_residual = 0.0_f64;
    let mut worst_pair = None;
    for i in 0..frame.len() {
        for j in (i + 1)..frame.len() {
            let br = bracket(group, &frame.column(i), &frame.column(j))?;
            let v = DVector::from_vec(br);
            let residual = numeric::orthogonal_component(&q, &v).norm();
            if residual > max_residual || worst_pair.is_none() {
                max_residual = residual;
                worst_pair = Some((i, j));
            }
        }
    }
    Ok(ClosureReport {
        is_subalgebra: max_residual <= tolerance,
        max_residual,
        worst_pair,
        tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    pub is_transversal: bool,
    /// Ratio of extreme singular values of `[frame | vertical basis]`.
    pub condition_number: f64,
    pub smallest_singular_value: f64,
}

/// Assemble `[frame | vertical basis]` and decide whether the frame is a
/// complement of the vertical subspace.
pub fn transversality_check(
    group: &GroupChart,
    fibration: &FibrationChart,
    frame: &AlgebraFrame,
) -> Result<TransversalityReport, AlgebraError> {
    let vertical = fibration.vertical_subspace(group)?;
    let n = group.dim();
    let total = frame.len() + vertical.ncols();
    let mut assembled = DMatrix::zeros(n, total);
    assembled
        .columns_mut(0, frame.len())
        .copy_from(frame.matrix());
    assembled
        .columns_mut(frame.len(), vertical.ncols())
        .copy_from(&vertical);
    let (smin, smax) = numeric::singular_extrema(&assembled);
    Ok(TransversalityReport {
        is_transversal: smin > RANK_TOL,
        condition_number: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        smallest_singular_value: smin,
    })
}

/// One row of a structure-constants table: `[F_i, F_j]` expanded in the
/// frame basis by least squares, with the off-span remainder.
#[derive(Debug, Clone, Serialize)]
pub struct StructurePair {
    pub i: usize,
    pub j: usize,
    pub bracket: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub off_span_residual: f64,
}

/// Structure constants of a frame under the finite-difference bracket.
pub fn structure_constants(
    group: &GroupChart,
    frame: &AlgebraFrame,
) -> Result<Vec<StructurePair>, AlgebraError> {
    let qr = frame.matrix().clone().qr();
    let q = qr.q();
    let r = qr.r();
    let mut pairs = Vec::new();
    for i in 0..frame.len() {
        for j in (i + 1)..frame.len() {
            let br = bracket(group, &frame.column(i), &frame.column(j))?;
            let v = DVector::from_vec(br.clone());
            let rhs = q.transpose() * &v;
            let coefficients = r
                .clone()
                .solve_upper_triangular(&rhs)
                .map(|c| c.iter().copied().collect())
                .unwrap_or_else(|| vec![f64::NAN; frame.len()]);
            let off_span_residual = numeric::orthogonal_component(&q, &v).norm();
            pairs.push(StructurePair {
                i,
                j,
                bracket: br,
                coefficients,
                off_span_residual,
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::group::{builtin_abelian_exp, builtin_triangular_affine};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Hand-derived bracket of the semidirect product: ([A,B], Av - Bu)
    /// for X = (A, u), Y = (B, v) in lower-triangular coordinates.
    fn semidirect_bracket(x: &[f64], y: &[f64]) -> Vec<f64> {
        let (p, q, r, u1, u2) = (x[0], x[1], x[2], x[3], x[4]);
        let (s, t, w, v1, v2) = (y[0], y[1], y[2], y[3], y[4]);
        vec![
            0.0,
            q * s + r * t - t * p - w * q,
            0.0,
            p * v1 - s * u1,
            q * v1 + r * v2 - t * u1 - w * u2,
        ]
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    #[test]
    fn abelian_bracket_vanishes() {
        let group = GroupChart::abelian_exp();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = random_vec(&mut rng, 2);
            let y = random_vec(&mut rng, 2);
            let br = bracket(&group, &x, &y).unwrap();
            assert!(numeric::inf_norm(&br) <= 1e-9);
        }
    }

    #[test]
    fn bracket_of_vector_with_itself_is_zero() {
        let group = GroupChart::triangular_affine();
        let x = [0.3, -0.2, 0.5, 0.1, 0.7];
        let br = bracket(&group, &x, &x).unwrap();
        assert_eq!(numeric::inf_norm(&br), 0.0);
    }

    #[test]
    fn triangular_bracket_matches_semidirect_formula() {
        let group = GroupChart::triangular_affine();
        // [(I, 0), (0, e2)] = (0, e2)
        let x = [1.0, 0.0, 1.0, 0.0, 0.0];
        let y = [0.0, 0.0, 0.0, 0.0, 1.0];
        let br = bracket(&group, &x, &y).unwrap();
        assert!(numeric::diff_inf_norm(&br, &[0.0, 0.0, 0.0, 0.0, 1.0]) <= 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random_vec(&mut rng, 5);
            let y = random_vec(&mut rng, 5);
            let numeric_br = bracket(&group, &x, &y).unwrap();
            let analytic = semidirect_bracket(&x, &y);
            assert!(
                numeric::diff_inf_norm(&numeric_br, &analytic) <= 1e-6,
                "finite-difference bracket disagrees with hand formula"
            );
        }
    }

    #[test]
    fn antisymmetry_on_samples() {
        for group in [GroupChart::abelian_exp(), GroupChart::triangular_affine()] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..50 {
                let x = random_vec(&mut rng, group.dim());
                let y = random_vec(&mut rng, group.dim());
                let xy = bracket(&group, &x, &y).unwrap();
                let yx = bracket(&group, &y, &x).unwrap();
                let sum: Vec<f64> = xy.iter().zip(&yx).map(|(a, b)| a + b).collect();
                assert!(numeric::inf_norm(&sum) <= 1e-9);
            }
        }
    }

    #[test]
    fn bilinearity_on_samples() {
        for group in [GroupChart::abelian_exp(), GroupChart::triangular_affine()] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..20 {
                let n = group.dim();
                let x = random_vec(&mut rng, n);
                let xp = random_vec(&mut rng, n);
                let y = random_vec(&mut rng, n);
                let a: f64 = rng.random_range(-2.0..=2.0);
                let b: f64 = rng.random_range(-2.0..=2.0);
                let combo: Vec<f64> = x.iter().zip(&xp).map(|(u, v)| a * u + b * v).collect();
                let lhs = bracket(&group, &combo, &y).unwrap();
                let bx = bracket(&group, &x, &y).unwrap();
                let bxp = bracket(&group, &xp, &y).unwrap();
                let rhs: Vec<f64> = bx.iter().zip(&bxp).map(|(u, v)| a * u + b * v).collect();
                assert!(numeric::diff_inf_norm(&lhs, &rhs) <= 1e-8);
            }
        }
    }

    #[test]
    fn jacobi_identity_on_samples() {
        for group in [GroupChart::abelian_exp(), GroupChart::triangular_affine()] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let n = group.dim();
                let x = random_vec(&mut rng, n);
                let y = random_vec(&mut rng, n);
                let z = random_vec(&mut rng, n);
                let cyc1 = bracket(&group, &x, &bracket(&group, &y, &z).unwrap()).unwrap();
                let cyc2 = bracket(&group, &y, &bracket(&group, &z, &x).unwrap()).unwrap();
                let cyc3 = bracket(&group, &z, &bracket(&group, &x, &y).unwrap()).unwrap();
                let total: Vec<f64> = (0..n).map(|i| cyc1[i] + cyc2[i] + cyc3[i]).collect();
                assert!(numeric::inf_norm(&total) <= 1e-6);
            }
        }
    }

    #[test]
    fn heisenberg_bracket_from_expressions() {
        // mu((g1,g2,g3),(h1,h2,h3)) = (g1+h1, g2+h2, g3+h3+g1*h2)
        let group = GroupChart::custom(
            vec![0.0, 0.0, 0.0],
            vec![
                parse("g1+h1").unwrap(),
                parse("g2+h2").unwrap(),
                parse("g3+h3+g1*h2").unwrap(),
            ],
            0.5,
        )
        .unwrap();
        let br = bracket(&group, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!(numeric::diff_inf_norm(&br, &[0.0, 0.0, 1.0]) <= 1e-9);
    }

    #[test]
    fn abelian_frames_are_always_closed() {
        let group = GroupChart::abelian_exp();
        let frame = AlgebraFrame::new(&group, &[vec![2.0, 1.0]]).unwrap();
        let report = closure_check(&group, &frame, DEFAULT_CLOSURE_TOL).unwrap();
        assert!(report.is_subalgebra);
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn triangular_scaled_identity_frame_is_closed() {
        let group = GroupChart::triangular_affine();
        let k = 1.3;
        let frame = AlgebraFrame::new(
            &group,
            &[vec![k, 0.0, k, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let report = closure_check(&group, &frame, DEFAULT_CLOSURE_TOL).unwrap();
        assert!(report.is_subalgebra, "residual {}", report.max_residual);
    }

    #[test]
    fn triangular_nonclosed_frame_detected() {
        let group = GroupChart::triangular_affine();
        // {(E21, e1), (diag(1,0), e2)}: bracket is (E21, -e1), orthogonal to
        // the span.
        let frame = AlgebraFrame::new(
            &group,
            &[vec![0.0, 1.0, 0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let report = closure_check(&group, &frame, DEFAULT_CLOSURE_TOL).unwrap();
        assert!(!report.is_subalgebra);
        assert!(report.max_residual > 0.1);
        assert_eq!(report.worst_pair, Some((0, 1)));
    }

    #[test]
    fn closure_verdict_invariant_under_basis_change() {
        let group = GroupChart::triangular_affine();
        let closed = [vec![1.0, 0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]];
        let open = [vec![0.0, 1.0, 0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for columns in [closed, open] {
            let frame = AlgebraFrame::new(&group, &columns).unwrap();
            let verdict = closure_check(&group, &frame, DEFAULT_CLOSURE_TOL)
                .unwrap()
                .is_subalgebra;
            for _ in 0..5 {
                // random invertible 2x2 recombination
                let (a, b, c, d) = loop {
                    let a: f64 = rng.random_range(-2.0..=2.0);
                    let b: f64 = rng.random_range(-2.0..=2.0);
                    let c: f64 = rng.random_range(-2.0..=2.0);
                    let d: f64 = rng.random_range(-2.0..=2.0);
                    if (a * d - b * c).abs() > 0.2 {
                        break (a, b, c, d);
                    }
                };
                let mixed: Vec<Vec<f64>> = vec![
                    (0..5).map(|i| a * columns[0][i] + c * columns[1][i]).collect(),
                    (0..5).map(|i| b * columns[0][i] + d * columns[1][i]).collect(),
                ];
                let mixed_frame = AlgebraFrame::new(&group, &mixed).unwrap();
                let mixed_verdict = closure_check(&group, &mixed_frame, DEFAULT_CLOSURE_TOL)
                    .unwrap()
                    .is_subalgebra;
                assert_eq!(verdict, mixed_verdict);
            }
        }
    }

    #[test]
    fn transversality_abelian() {
        let (group, fibration) = builtin_abelian_exp();
        for k in [-3.0, 0.0, 5.0] {
            let frame = AlgebraFrame::new(&group, &[vec![k, 1.0]]).unwrap();
            let report = transversality_check(&group, &fibration, &frame).unwrap();
            assert!(report.is_transversal);
        }
        let vertical_frame = AlgebraFrame::new(&group, &[vec![1.0, 0.0]]).unwrap();
        let report = transversality_check(&group, &fibration, &vertical_frame).unwrap();
        assert!(!report.is_transversal);
    }

    #[test]
    fn transversality_triangular_closed_frame() {
        let (group, fibration) = builtin_triangular_affine();
        let frame = AlgebraFrame::new(
            &group,
            &[vec![2.0, 0.0, 2.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let report = transversality_check(&group, &fibration, &frame).unwrap();
        assert!(report.is_transversal);
        assert!(report.condition_number.is_finite());
    }

    #[test]
    fn rank_deficient_frame_rejected() {
        let group = GroupChart::triangular_affine();
        let err = AlgebraFrame::new(
            &group,
            &[vec![1.0, 0.0, 1.0, 0.0, 0.0], vec![2.0, 0.0, 2.0, 0.0, 0.0]],
        )
        .unwrap_err();
        assert!(matches!(err, AlgebraError::RankDeficient { .. }));
    }

    #[test]
    fn structure_constants_of_closed_frame() {
        let group = GroupChart::triangular_affine();
        let k = 1.0;
        let frame = AlgebraFrame::new(
            &group,
            &[vec![k, 0.0, k, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let table = structure_constants(&group, &frame).unwrap();
        assert_eq!(table.len(), 1);
        // [F1, F2] = (0, k e2) = k * F2
        assert!((table[0].coefficients[0]).abs() < 1e-6);
        assert!((table[0].coefficients[1] - k).abs() < 1e-6);
        assert!(table[0].off_span_residual < 1e-7);
    }
}
