//! Small dense linear algebra on the fertility matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const POWER_ITER_CAP: usize = 5_000;
const POWER_REL_TOL: f64 = 1e-13;

fn to_matrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let n = m.len();
    DMatrix::from_fn(n, n, |i, j| m[i][j])
}

/// Perron root of a 2x2 non-negative matrix from its characteristic
/// polynomial; the discriminant is `(a-d)²/4 + bc >= 0`.
pub fn perron_root_2x2(m: [[f64; 2]; 2]) -> f64 {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    half_tr + (half_diff * half_diff + m[0][1] * m[1][0]).sqrt()
}

/// Power iteration on `A + Id` with Collatz–Wielandt bounds.
///
/// Returns `None` if the bounds do not meet within the iteration cap, which
/// happens for reducible matrices whose leading blocks have close roots.
pub fn perron_root_iterative(m: &[Vec<f64>]) -> Option<f64> {
    let n = m.len();
    if n == 0 {
        return Some(0.0);
    }
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    for _ in 0..POWER_ITER_CAP {
        for i in 0..n {
            y[i] = x[i] + m[i].iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
        }
        let mut lower = f64::INFINITY;
        let mut upper = 0.0f64;
        for i in 0..n {
            let r = y[i] / x[i];
            lower = lower.min(r);
            upper = upper.max(r);
        }
        if upper - lower <= POWER_REL_TOL * upper {
            return Some(0.5 * (upper + lower) - 1.0);
        }
        let norm = y.iter().cloned().fold(0.0, f64::max);
        for i in 0..n {
            x[i] = y[i] / norm;
            // entries only shrink towards zero on reducible inputs; keep them positive
            if x[i] < 1e-300 {
                x[i] = 1e-300;
            }
        }
    }
    None
}

/// Spectral radius of a non-negative square matrix.
pub fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 0.0,
        1 => m[0][0].abs(),
        2 => perron_root_2x2([[m[0][0], m[0][1]], [m[1][0], m[1][1]]]),
        _ => perron_root_iterative(m).unwrap_or_else(|| {
            to_matrix(m)
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        }),
    }
}

fn require_subcritical(m: &[Vec<f64>]) -> Result<()> {
    let rho = spectral_radius(m);
    if rho < 1.0 {
        Ok(())
    } else {
        Err(Error::NotSubcritical(rho))
    }
}

fn solve(a: DMatrix<f64>, rhs: DVector<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    a.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Shape(format!("singular {n}x{n} system")))
}

/// `u = (Id - ℵ^T)^{-1} 1_p`.
pub fn branching_vector(fertility: &[Vec<f64>]) -> Result<Vec<f64>> {
    require_subcritical(fertility)?;
    let n = fertility.len();
    let a = DMatrix::identity(n, n) - to_matrix(fertility).transpose();
    solve(a, DVector::from_element(n, 1.0))
}

/// `(Id - ℵ)^{-1} μ0`, the long-run rate of each mark without constraints.
pub fn mean_rates(fertility: &[Vec<f64>], mu0: &[f64]) -> Result<Vec<f64>> {
    require_subcritical(fertility)?;
    let n = fertility.len();
    let a = DMatrix::identity(n, n) - to_matrix(fertility);
    solve(a, DVector::from_column_slice(mu0))
}

/// `(σ_min, σ_max)` of the matrix.
pub fn singular_value_range(m: &[Vec<f64>]) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = to_matrix(m).singular_values();
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    (min, max)
}

/// Invertible when `σ_min > 1e-12 · ‖ℵ‖₂`; the zero matrix is singular.
pub fn is_invertible(m: &[Vec<f64>]) -> bool {
    let (min, max) = singular_value_range(m);
    max > 0.0 && min > 1e-12 * max
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXAMPLE: [[f64; 2]; 2] = [[0.2, 0.3], [0.1, 0.4]];

    fn example() -> Vec<Vec<f64>> {
        EXAMPLE.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn radius_examples() {
        assert_eq!(spectral_radius(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]), 0.0);
        let half_id: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 0.5 } else { 0.0 }).collect()).collect();
        assert!((spectral_radius(&half_id) - 0.5).abs() < 1e-12);
        // char. polynomial x² - 0.6x + 0.05 has roots 0.5 and 0.1
        assert!((spectral_radius(&example()) - 0.5).abs() < 1e-15);
        assert!((perron_root_iterative(&example()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reducible_matrix_falls_back() {
        let m = vec![
            vec![0.5, 0.0, 0.0],
            vec![0.0, 0.4999999, 0.0],
            vec![0.0, 0.0, 0.1],
        ];
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn branching_vector_examples() {
        assert_eq!(branching_vector(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(), vec![1.0, 1.0]);
        assert!((branching_vector(&[vec![0.5]]).unwrap()[0] - 2.0).abs() < 1e-15);
        // (Id - ℵ^T) = [[0.8, -0.1], [-0.3, 0.6]], det 0.45, inverse / 0.45 = [[0.6, 0.1], [0.3, 0.8]]
        let u = branching_vector(&example()).unwrap();
        assert!((u[0] - 0.7 / 0.45).abs() < 1e-13);
        assert!((u[1] - 1.1 / 0.45).abs() < 1e-13);
        assert!(matches!(branching_vector(&[vec![1.0]]), Err(Error::NotSubcritical(_))));
    }

    #[test]
    fn mean_rates_example() {
        let r = mean_rates(&example(), &[0.5, 0.5]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-13 && (r[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn invertibility() {
        assert!(!is_invertible(&[vec![0.0, 0.0], vec![0.0, 0.0]]));
        assert!(is_invertible(&example()));
        assert!(!is_invertible(&[vec![0.1, 0.2], vec![0.2, 0.4]]));
    }

    fn subcritical(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, n), n).prop_map(move |m| {
            let rho = spectral_radius(&m);
            let scale = if rho > 0.0 { 0.9 / rho } else { 1.0 };
            m.into_iter().map(|r| r.into_iter().map(|v| v * scale).collect()).collect()
        })
    }

    proptest! {
        #[test]
        fn iterative_matches_closed_form(m in proptest::collection::vec(proptest::collection::vec(0.0..2.0f64, 2), 2)) {
            let closed = perron_root_2x2([[m[0][0], m[0][1]], [m[1][0], m[1][1]]]);
            let eig = nalgebra::Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            prop_assert!((closed - eig).abs() <= 1e-10 * closed.max(1e-300) + 1e-14);
            if let Some(it) = perron_root_iterative(&m) {
                prop_assert!((it - closed).abs() <= 1e-10 * closed.max(1.0));
            }
        }

        #[test]
        fn branching_residual(m in (2usize..6).prop_flat_map(subcritical)) {
            let u = branching_vector(&m).unwrap();
            let n = m.len();
            for i in 0..n {
                let lhs = u[i] - (0..n).map(|j| m[j][i] * u[j]).sum::<f64>();
                prop_assert!((lhs - 1.0).abs() <= 1e-10);
                prop_assert!(u[i] >= 1.0 - 1e-12);
            }
        }
    }
}
