//! Thomas algorithm for tridiagonal systems.

/// Solves `A x = rhs` in place, where `A` has sub-diagonal `lower`
/// (`lower[0]` unused), diagonal `diag` and super-diagonal `upper`
/// (`upper[n-1]` unused). `diag` and `rhs` are overwritten; the solution is
/// left in `rhs`.
///
/// No pivoting: the matrix must be (close to) diagonally dominant.
pub fn solve_in_place(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return;
    }
    for i in 1..n {
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_apply(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn small_system() {
        // [2 1 0; 1 2 1; 0 1 2] x = [4 8 8] -> x = [1 2 3]
        let lower = [0.0, 1.0, 1.0];
        let mut diag = [2.0, 2.0, 2.0];
        let upper = [1.0, 1.0, 0.0];
        let mut rhs = [4.0, 8.0, 8.0];
        solve_in_place(&lower, &mut diag, &upper, &mut rhs);
        for (got, want) in rhs.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn recovers_solution_of_dominant_systems(
            raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..40)
        ) {
            let n = raw.len();
            let lower: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let upper: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let diag: Vec<f64> = (0..n).map(|i| 2.5 + lower[i].abs() + upper[i].abs()).collect();
            let x: Vec<f64> = raw.iter().map(|r| r.2).collect();
            let mut rhs = dense_apply(&lower, &diag, &upper, &x);
            let mut d = diag.clone();
            solve_in_place(&lower, &mut d, &upper, &mut rhs);
            for (got, want) in rhs.iter().zip(&x) {
                prop_assert!((got - want).abs() < 1e-12);
            }
        }
    }
}
