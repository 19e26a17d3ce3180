//! Small dense helpers shared by the solvers.

use alloc::vec::Vec;

use nalgebra::{Complex, ComplexField, DMatrix, DVector, SymmetricEigen};

/// Induced infinity norm (max absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.modulus())
        .fold(0.0, f64::max)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.min()
}

/// Factor `F` with `F' F = m` for a symmetric PSD `m`; eigen-directions with
/// eigenvalue below `floor` are dropped, so `F` has one row per retained mode.
pub fn psd_factor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let kept: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] >= floor).collect();
    let mut f = DMatrix::zeros(kept.len(), n);
    for (row, &k) in kept.iter().enumerate() {
        let s = libm::sqrt(eig.eigenvalues[k]);
        for c in 0..n {
            f[(row, c)] = s * eig.eigenvectors[(c, k)];
        }
    }
    f
}

/// Symmetric square root `S` with `S S' = m` (negative eigenvalues clipped).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let d = eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Solves `P = A' P A + Q` for Schur-stable `A` by Smith doubling.
pub fn stein(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if spectral_radius(a) >= 1.0 {
        return None;
    }
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = ak.transpose() * &p * &ak;
        let done = norm_inf(&inc) <= 1e-15 * norm_inf(&p).max(1.0);
        p += inc;
        ak = &ak * &ak;
        if done {
            symmetrize(&mut p);
            return Some(p);
        }
    }
    None
}

pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stein_scalar_geometric_sum() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = stein(&a, &q).unwrap();
        assert_relative_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert!(stein(&DMatrix::from_element(1, 1, 1.0), &q).is_none());
    }

    #[test]
    fn factor_reproduces_psd_matrix() {
        let q = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, -1.0, -1.0, -1.0, 2.0]);
        let f = psd_factor(&q, 1e-12);
        assert_eq!(f.nrows(), 2);
        assert_relative_eq!(f.transpose() * &f, q.clone(), epsilon = 1e-12);
        let s = psd_sqrt(&q);
        assert_relative_eq!(&s * s.transpose(), q, epsilon = 1e-12);
    }

    #[test]
    fn norms() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.5]);
        assert_eq!(norm_inf(&m), 3.0);
        assert_relative_eq!(spectral_radius(&DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])), 1.0, epsilon = 1e-12);
    }
}
