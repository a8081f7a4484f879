//! Small dense symmetric eigen-solver.
//!
//! Cyclic Jacobi rotations. Intended for matrices up to a few dozen rows
//! (graph Laplacians, 3x3 gain matrices), where it is deterministic and
//! accurate to roundoff.

use nalgebra::DMatrix;

/// Off-diagonal Frobenius norm below which the sweep stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
///
/// Only the lower triangle's symmetry is assumed; the input is not checked.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    let n = m.nrows();
    let mut a = m.clone();
    let scale = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(1.0);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_TOLERANCE * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *symmetric_eigenvalues(m).last().expect("eigenvalues of an empty matrix")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_is_its_own_spectrum() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(symmetric_eigenvalues(&m), vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-14);
        assert!((e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_trace_and_frobenius_norm() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, -1.0, 0.5, 0.0, -1.0, 3.0, 0.2, 1.0, 0.5, 0.2, 1.0, -0.3, 0.0, 1.0, -0.3, 2.0,
            ],
        );
        let e = symmetric_eigenvalues(&m);
        let trace: f64 = (0..4).map(|i| m[(i, i)]).sum();
        let fro2: f64 = m.iter().map(|x| x * x).sum();
        assert!((e.iter().sum::<f64>() - trace).abs() < 1e-12);
        assert!((e.iter().map(|x| x * x).sum::<f64>() - fro2).abs() < 1e-11);
    }

    proptest::proptest! {
        #[test]
        fn matches_nalgebra_symmetric_eigen(n in 1usize..8, entries in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let m = DMatrix::from_fn(n, n, |i, j| {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                entries[a * 8 + b]
            });
            let ours = symmetric_eigenvalues(&m);
            let mut reference: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(|x, y| x.total_cmp(y));
            for (a, b) in ours.iter().zip(&reference) {
                proptest::prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", ours, reference);
            }
        }
    }
}
