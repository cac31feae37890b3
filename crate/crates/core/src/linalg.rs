//! Linear solves for first-passage systems `x = b + P x` with `P` substochastic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest system solved by dense LU; larger ones use Gauss-Seidel sweeps.
pub const DENSE_SOLVE_LIMIT: usize = 2_000;
pub const ITERATIVE_TOLERANCE: f64 = 1e-10;
pub const ITERATIVE_SWEEP_CAP: usize = 1_000_000;

/// `x_i = rhs_i + sum_j coeffs_i[j].1 * x_{coeffs_i[j].0}` over local indices.
#[derive(Debug, Default, Clone)]
pub(crate) struct SparseSystem {
    coeffs: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn with_capacity(n: usize) -> Self {
        SparseSystem {
            coeffs: Vec::with_capacity(n),
            rhs: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.coeffs.push(coeffs);
        self.rhs.push(rhs);
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }
}

pub(crate) fn solve_fixed_point(system: &SparseSystem) -> Result<Vec<f64>> {
    let n = system.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let x = if n <= DENSE_SOLVE_LIMIT {
        solve_dense(system)?
    } else {
        solve_gauss_seidel(system)?
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}

fn solve_dense(system: &SparseSystem) -> Result<Vec<f64>> {
    let n = system.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, row) in system.coeffs.iter().enumerate() {
        for &(j, p) in row {
            a[(i, j)] -= p;
        }
    }
    let b = DVector::from_column_slice(&system.rhs);
    a.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or(Error::SingularSystem)
}

fn solve_gauss_seidel(system: &SparseSystem) -> Result<Vec<f64>> {
    let n = system.len();
    let mut x = vec![0.0; n];
    for _ in 0..ITERATIVE_SWEEP_CAP {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut diag = 0.0;
            let mut acc = system.rhs[i];
            for &(j, p) in &system.coeffs[i] {
                if j == i {
                    diag += p;
                } else {
                    acc += p * x[j];
                }
            }
            if diag >= 1.0 {
                return Err(Error::SingularSystem);
            }
            let v = acc / (1.0 - diag);
            delta = delta.max((v - x[i]).abs());
            x[i] = v;
        }
        if delta < ITERATIVE_TOLERANCE {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        sweeps: ITERATIVE_SWEEP_CAP,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_system(n: usize) -> SparseSystem {
        // walk with p = 0.5 forward, 0.5 stay; expected steps to exit from i is 2 (n - i)
        let mut sys = SparseSystem::with_capacity(n);
        for i in 0..n {
            let mut c = vec![(i, 0.5)];
            if i + 1 < n {
                c.push((i + 1, 0.5));
            }
            sys.push(c, 1.0);
        }
        sys
    }

    #[test]
    fn dense_and_iterative_agree() {
        let sys = chain_system(6);
        let dense = solve_dense(&sys).unwrap();
        let gs = solve_gauss_seidel(&sys).unwrap();
        for i in 0..6 {
            assert!((dense[i] - 2.0 * (6 - i) as f64).abs() < 1e-9);
            assert!((dense[i] - gs[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn large_system_uses_iterative_path() {
        let n = DENSE_SOLVE_LIMIT + 10;
        let x = solve_fixed_point(&chain_system(n)).unwrap();
        assert!((x[n - 1] - 2.0).abs() < 1e-8);
        assert!((x[0] - 2.0 * n as f64).abs() < 1e-6);
    }

    #[test]
    fn closed_class_is_singular() {
        let mut sys = SparseSystem::with_capacity(2);
        sys.push(vec![(1, 1.0)], 1.0);
        sys.push(vec![(0, 1.0)], 1.0);
        assert!(solve_fixed_point(&sys).is_err());
    }
}
