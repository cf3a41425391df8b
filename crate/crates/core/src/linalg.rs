//! Dense symmetric kernels backed by LAPACK, and a small CSR matrix.

use std::os::raw::c_char;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Assembles from triplets, summing duplicates in insertion order per entry.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            // Stable sort keeps the summation order of duplicates deterministic.
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == j {
                    s += row[k].1;
                    k += 1;
                }
                cols.push(j);
                vals.push(s);
            }
            row_ptr.push(cols.len());
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Lowest `k` eigenpairs of a dense symmetric matrix (column-major `n×n`, destroyed).
///
/// Returns ascending eigenvalues and a column-major `n×k` eigenvector block.
pub fn symmetric_lowest(a: &mut [f64], n: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 || k > n || a.len() != n * n {
        return Err(Error::InvalidArgument(format!("cannot request {k} eigenpairs of a {n}x{n} matrix")));
    }
    let ni = n as i32;
    let ki = k as i32;
    let range = if k == n { b'A' } else { b'I' } as c_char;
    let mut m = 0i32;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * k];
    let mut isuppz = vec![0i32; 2 * k.max(1)];
    let mut work = vec![0.0; 1];
    let mut iwork = vec![0i32; 1];
    let mut info = 0i32;
    for query in [true, false] {
        let (lwork, liwork) = if query { (-1, -1) } else { (work.len() as i32, iwork.len() as i32) };
        // SAFETY: buffers sized per the LAPACK contract for dsyevr; the
        // workspace query pass only writes work[0] and iwork[0].
        unsafe {
            lapack_sys::dsyevr_(
                &(b'V' as c_char),
                &range,
                &(b'L' as c_char),
                &ni,
                a.as_mut_ptr(),
                &ni,
                &0.0,
                &0.0,
                &1,
                &ki,
                &0.0,
                &mut m,
                w.as_mut_ptr(),
                z.as_mut_ptr(),
                &ni,
                isuppz.as_mut_ptr(),
                work.as_mut_ptr(),
                &lwork,
                iwork.as_mut_ptr(),
                &liwork,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Eigensolver(format!("dsyevr returned info = {info}")));
        }
        if query {
            work = vec![0.0; work[0] as usize];
            iwork = vec![0; iwork[0] as usize];
        }
    }
    if m as usize != k {
        return Err(Error::Eigensolver(format!("dsyevr found {m} of {k} requested eigenpairs")));
    }
    w.truncate(k);
    Ok((w, z))
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    let ni = n as i32;
    let mut buf = a.as_slice().to_vec();
    let mut w = vec![0.0; n];
    let mut work = vec![0.0; 1];
    let mut info = 0i32;
    for query in [true, false] {
        let lwork = if query { -1 } else { work.len() as i32 };
        // SAFETY: dsyev with jobz = 'N' only touches `buf`, `w` and `work`.
        unsafe {
            lapack_sys::dsyev_(
                &(b'N' as c_char),
                &(b'L' as c_char),
                &ni,
                buf.as_mut_ptr(),
                &ni,
                w.as_mut_ptr(),
                work.as_mut_ptr(),
                &lwork,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Numeric(format!("dsyev returned info = {info}")));
        }
        if query {
            work = vec![0.0; work[0] as usize];
        }
    }
    Ok(w)
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let ni = n as i32;
    let mut l = a.clone();
    let mut info = 0i32;
    // SAFETY: dpotrf factors the n×n column-major buffer in place.
    unsafe {
        lapack_sys::dpotrf_(&(b'L' as c_char), &ni, l.as_mut_slice().as_mut_ptr(), &ni, &mut info);
    }
    if info != 0 {
        return Err(Error::Numeric(format!("Cholesky factorization failed (info = {info})")));
    }
    for j in 0..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn invert_lower(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let ni = n as i32;
    let mut inv = l.clone();
    let mut info = 0i32;
    // SAFETY: dtrtri inverts the n×n column-major triangle in place.
    unsafe {
        lapack_sys::dtrtri_(&(b'L' as c_char), &(b'N' as c_char), &ni, inv.as_mut_slice().as_mut_ptr(), &ni, &mut info);
    }
    if info != 0 {
        return Err(Error::Numeric(format!("triangular inverse failed (info = {info})")));
    }
    Ok(inv)
}
