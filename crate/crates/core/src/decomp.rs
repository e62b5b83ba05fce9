//! Linear combinations of unitaries `A = Σ c_k A_k`.
//!
//! The default construction splits the singular values of `A/σ_max` into a
//! pair of complex phases: with `A = UΣVᵀ` and `Σ' = Σ/σ_max`,
//! `W± = U(Σ' ± i√(I − Σ'²))Vᵀ` are unitary and `A = (σ_max/2)(W₊ + W₋)`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::numerics::{svd, ComplexMatrix, RealMatrix};

#[derive(Debug, Clone)]
pub struct UnitaryDecomposition {
    pub terms: Vec<(Complex64, ComplexMatrix)>,
}

impl UnitaryDecomposition {
    pub fn dim(&self) -> usize {
        self.terms.first().map_or(0, |(_, m)| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Σ c_k A_k`.
    pub fn recompose(&self) -> ComplexMatrix {
        let n = self.dim();
        self.terms
            .iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, (c, m)| acc + m * *c)
    }
}

pub fn decompose(a: &RealMatrix) -> Result<UnitaryDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(invalid(format!(
            "dimension {n} is not a power of two; pad the system first"
        )));
    }
    if a.iter().all(|&x| x == 0.0) {
        return Err(invalid("cannot decompose the zero matrix"));
    }
    let dec = svd(a)?;
    let smax = dec.singular_values[0];
    let u = dec.u.map(|x| Complex64::new(x, 0.0));
    let v_t = dec.v_t.map(|x| Complex64::new(x, 0.0));
    let phases = |sign: f64| -> ComplexMatrix {
        let diag: Vec<Complex64> = dec
            .singular_values
            .iter()
            .map(|&s| {
                let c = (s / smax).min(1.0);
                Complex64::new(c, sign * (1.0 - c * c).max(0.0).sqrt())
            })
            .collect();
        let mut us = u.clone();
        for (j, d) in diag.into_iter().enumerate() {
            us.column_mut(j).iter_mut().for_each(|x| *x *= d);
        }
        us * &v_t
    };
    let c = Complex64::new(smax / 2.0, 0.0);
    Ok(UnitaryDecomposition {
        terms: vec![(c, phases(1.0)), (c, phases(-1.0))],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    /// `‖A_k†A_k − I‖_F` per term.
    pub unitarity: Vec<f64>,
    /// `‖Σ c_k A_k − A‖_F`.
    pub reconstruction: f64,
    /// Frobenius norm of the source matrix, for relative tolerances.
    pub source_norm: f64,
}

impl DecompositionReport {
    pub fn max_unitarity(&self) -> f64 {
        self.unitarity.iter().copied().fold(0.0, f64::max)
    }

    /// Unitarity `≤ tol` and reconstruction `≤ tol·max(1, ‖A‖_F)`.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_unitarity() <= tol && self.reconstruction <= tol * self.source_norm.max(1.0)
    }
}

pub fn validate(dec: &UnitaryDecomposition, a: &RealMatrix) -> Result<DecompositionReport> {
    let n = a.nrows();
    if dec.dim() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dec.dim(),
        });
    }
    let eye = ComplexMatrix::identity(n, n);
    let unitarity = dec
        .terms
        .iter()
        .map(|(_, m)| (m.adjoint() * m - &eye).norm())
        .collect();
    let source = a.map(|x| Complex64::new(x, 0.0));
    Ok(DecompositionReport {
        unitarity,
        reconstruction: (dec.recompose() - source).norm(),
        source_norm: a.norm(),
    })
}

/// Embeds an `N×N` system into the next power of two: `A` top-left,
/// identity on the padding diagonal, `b` zero-padded.
pub fn pad_to_power_of_two(a: &RealMatrix, b: &DVector<f64>) -> (RealMatrix, DVector<f64>) {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "system matrix must be square");
    assert_eq!(b.len(), n, "right-hand side must match the matrix");
    let dim = n.max(1).next_power_of_two();
    if dim == n {
        return (a.clone(), b.clone());
    }
    let mut padded = RealMatrix::identity(dim, dim);
    padded.view_mut((0, 0), (n, n)).copy_from(a);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(b);
    (padded, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_splits_into_identities() {
        let dec = decompose(&RealMatrix::identity(4, 4)).unwrap();
        assert_eq!(dec.len(), 2);
        let eye = ComplexMatrix::identity(4, 4);
        for (c, m) in &dec.terms {
            assert!((c - Complex64::new(0.5, 0.0)).norm() < 1e-15);
            assert!((m - &eye).norm() < 1e-12);
        }
    }

    #[test]
    fn diagonal_half_one() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        let dec = decompose(&a).unwrap();
        let root = 0.75f64.sqrt();
        let plus = &dec.terms[0].1;
        let minus = &dec.terms[1].1;
        assert!((plus[(0, 0)] - Complex64::new(0.5, root)).norm() < 1e-12);
        assert!((minus[(0, 0)] - Complex64::new(0.5, -root)).norm() < 1e-12);
        assert!((plus[(1, 1)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(plus[(0, 1)].norm() < 1e-12);
        let report = validate(&dec, &a).unwrap();
        assert!(report.passes(1e-10));
    }

    #[test]
    fn random_matrix_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = RealMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let report = validate(&decompose(&a).unwrap(), &a).unwrap();
        assert!(report.passes(1e-10), "{report:?}");
    }

    #[test]
    fn rejects_bad_shapes_and_zero() {
        assert!(decompose(&RealMatrix::identity(3, 3)).is_err());
        assert!(decompose(&RealMatrix::zeros(2, 3)).is_err());
        assert!(decompose(&RealMatrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn validation_flags_non_unitary_term() {
        let a = RealMatrix::identity(2, 2);
        let bad = UnitaryDecomposition {
            terms: vec![(
                Complex64::new(1.0, 0.0),
                ComplexMatrix::from_diagonal(&DVector::from_vec(vec![
                    Complex64::new(1.0, 0.0),
                    Complex64::new(2.0, 0.0),
                ])),
            )],
        };
        let report = validate(&bad, &a).unwrap();
        assert!(report.unitarity[0] > 1e-3);
        assert!(!report.passes(1e-10));

        let single = UnitaryDecomposition {
            terms: vec![(Complex64::new(1.0, 0.0), ComplexMatrix::identity(2, 2))],
        };
        let report = validate(&single, &a).unwrap();
        assert_eq!(report.unitarity, vec![0.0]);
        assert_eq!(report.reconstruction, 0.0);
    }

    #[test]
    fn padding() {
        let a = RealMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 1.0, 0.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (pa, pb) = pad_to_power_of_two(&a, &b);
        assert_eq!(pa.nrows(), 4);
        assert_eq!(pa[(3, 3)], 1.0);
        assert_eq!(pb[3], 0.0);
        let x = a.clone().lu().solve(&b).unwrap();
        let px = pa.lu().solve(&pb).unwrap();
        for i in 0..3 {
            assert!((x[i] - px[i]).abs() < 1e-12);
        }
        assert!(px[3].abs() < 1e-12);

        let one = RealMatrix::from_element(1, 1, 2.0);
        let (p1, _) = pad_to_power_of_two(&one, &DVector::from_element(1, 1.0));
        assert_eq!(p1, one);
        let id = RealMatrix::identity(64, 64);
        let (p64, _) = pad_to_power_of_two(&id, &DVector::zeros(64));
        assert_eq!(p64.nrows(), 64);
    }
}
