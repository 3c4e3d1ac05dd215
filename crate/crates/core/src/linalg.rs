//! Dense linear-algebra primitives used throughout the crate: matrix
//! exponential, input-matrix discretization, and small Sylvester/Lyapunov
//! solves.
//!
//! Everything here targets the small, well-scaled matrices of modal models
//! (state dimensions of a few tens), so the solvers favour robustness over
//! asymptotic complexity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Padé-13 numerator coefficients for the matrix exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// 1-norm bound below which the unscaled Padé-13 approximant is accurate
/// to machine precision (Higham's theta_13).
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling-and-squaring with a Padé-13 approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("expm requires a square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("expm requires finite entries".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a1 = a / 2f64.powi(s as i32);

    let eye = DMatrix::<f64>::identity(n, n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let b = &PADE13;
    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &eye;
    let u = &a1 * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &eye;

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Pade solve in expm is singular".into()))?;

    for _ in 0..s {
        x = &x * &x;
    }
    Ok(x)
}

/// Discretizes the input matrix of `x' = Ac x + Bc u` under a zero-order
/// hold via the augmented exponential
/// `exp([[Ac, Bc], [0, 0]] dt) = [[A, B], [0, I]]`.
///
/// Exact for singular `Ac` (rigid-body or zero-frequency modes).
pub fn discretize_input_van_loan(
    ac: &DMatrix<f64>,
    bc: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = ac.nrows();
    let m = bc.ncols();
    if ac.ncols() != n || bc.nrows() != n {
        return Err(Error::InvalidInput(
            "Ac must be square and Bc must have matching row count".into(),
        ));
    }
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(bc * dt));
    let e = expm(&aug)?;
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, m)).into_owned();
    Ok((a, b))
}

/// Solves the Sylvester equation `A X + X B = C` by Kronecker vectorization.
///
/// Intended for the small coupling blocks of modal models; the vectorized
/// system has dimension `nrows(C) * ncols(C)`.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.nrows();
    if a.ncols() != n || b.ncols() != m || c.nrows() != n || c.ncols() != m {
        return Err(Error::InvalidInput(
            "Sylvester dimensions are inconsistent".into(),
        ));
    }
    let nm = n * m;
    if nm > 10_000 {
        return Err(Error::InvalidInput(format!(
            "Sylvester system too large for dense vectorization ({nm} unknowns)"
        )));
    }

    // kron(I_m, A) + kron(B^T, I_n), acting on vec(X) in column-major order.
    let mut big = DMatrix::<f64>::zeros(nm, nm);
    for j in 0..m {
        big.view_mut((j * n, j * n), (n, n)).copy_from(a);
    }
    for bj in 0..m {
        for bi in 0..m {
            // (B^T)[bi, bj] = B[bj, bi]
            let w = b[(bj, bi)];
            if w != 0.0 {
                for d in 0..n {
                    big[(bi * n + d, bj * n + d)] += w;
                }
            }
        }
    }

    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Sylvester system".into()))?;
    Ok(DMatrix::from_column_slice(n, m, sol.as_slice()))
}

/// Solves the continuous Lyapunov equation `A P + P A^T + Q = 0` for `P`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = solve_sylvester(a, &a.transpose(), &(-q))?;
    Ok(symmetrize(&p))
}

/// Returns `(M + M^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Maximum absolute asymmetry `max |M - M^T|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Checks that `m` is symmetric within `tol` relative to its magnitude.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1e-300);
    asymmetry(m) <= tol * scale
}

/// True when all eigenvalues of `a` have strictly negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}
