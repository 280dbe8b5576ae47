//! Dense 3-way tensor storage and the kernels the factorization loop is built
//! from: unfolding, Khatri-Rao, MTTKRP, reconstruction.
//!
//! Index conventions (fixed throughout the crate):
//! * storage is column-major over modes: entry (i, j, k) lives at `i + I*(j + J*k)`,
//! * mode-1 unfolding is I x (J*K) with (i, j, k) in column `j + J*k`,
//! * mode-2 unfolding is J x (I*K) with (i, j, k) in column `i + I*k`,
//! * mode-3 unfolding is K x (I*J) with (i, j, k) in column `i + I*j`,
//! * `khatri_rao(a, b)` has row `i*n + j` equal to `a[i, :] * b[j, :]` elementwise.
//!
//! Under these conventions `unfold(x, 1) == u * diag(lambda) * khatri_rao(t, v)^T`
//! for an exact CP tensor, which the tests pin down.

use crate::decomp::CpModel;
use crate::error::{Error, Result};

/// Dense 3-way tensor with an observation mask. `mask[idx] == false` marks a
/// missing cell; the stored value at a missing cell is meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl Tensor3 {
    /// All-zero, fully observed tensor.
    pub fn new(dims: (usize, usize, usize)) -> Result<Self> {
        let (i, j, k) = dims;
        if i == 0 || j == 0 || k == 0 {
            return Err(Error::invalid(format!("tensor dims must be positive, got {i}x{j}x{k}")));
        }
        let len = i * j * k;
        Ok(Tensor3 { dims, values: vec![0.0; len], mask: vec![true; len] })
    }

    /// Fully observed tensor from a flat value buffer in storage order.
    pub fn from_values(dims: (usize, usize, usize), values: Vec<f64>) -> Result<Self> {
        let mut t = Tensor3::new(dims)?;
        if values.len() != t.values.len() {
            return Err(Error::invalid(format!(
                "value buffer has {} entries, dims {}x{}x{} need {}",
                values.len(),
                dims.0,
                dims.1,
                dims.2,
                t.values.len()
            )));
        }
        t.values = values;
        Ok(t)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims.0 && j < self.dims.1 && k < self.dims.2);
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index(i, j, k);
        self.values[idx] = v;
    }

    #[inline]
    pub fn observed(&self, i: usize, j: usize, k: usize) -> bool {
        self.mask[self.index(i, j, k)]
    }

    pub fn set_observed(&mut self, i: usize, j: usize, k: usize, observed: bool) {
        let idx = self.index(i, j, k);
        self.mask[idx] = observed;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.mask
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().zip(&self.mask).all(|(v, &m)| !m || v.is_finite())
    }

    /// Frobenius norm over all stored values (callers impute before fitting,
    /// so every cell participates).
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Row-major dense matrix. Factor matrices are tall (rows = mode size,
/// cols = rank), so rows are the unit-stride axis the hot loops walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix buffer has {} entries, shape {rows}x{cols} needs {}",
                data.len(),
                rows * cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "matmul shape mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let out_row = out.row_mut(r);
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(kk);
                for (c, &b) in b_row.iter().enumerate() {
                    out_row[c] += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Gram matrix `A^T A` (cols x cols), accumulated row by row so the scan
    /// stays unit-stride.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut g = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for a in 0..n {
                let va = row[a];
                if va == 0.0 {
                    continue;
                }
                let g_row = g.row_mut(a);
                for b in a..n {
                    g_row[b] += va * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                let v = g.get(b, a);
                g.set(a, b, v);
            }
        }
        g
    }

    pub fn col_norm(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self.get(r, c)).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale_col(&mut self, c: usize, s: f64) {
        for r in 0..self.rows {
            let v = self.get(r, c);
            self.set(r, c, v * s);
        }
    }
}

fn check_mode(mode: usize) -> Result<()> {
    if !(1..=3).contains(&mode) {
        return Err(Error::invalid(format!("mode must be 1, 2 or 3, got {mode}")));
    }
    Ok(())
}

/// Mode-n unfolding. Masks are dropped; callers unfold imputed tensors.
pub fn unfold(x: &Tensor3, mode: usize) -> Result<Matrix> {
    check_mode(mode)?;
    let (i_dim, j_dim, k_dim) = x.dims();
    let m = match mode {
        1 => {
            let mut m = Matrix::zeros(i_dim, j_dim * k_dim);
            for k in 0..k_dim {
                for j in 0..j_dim {
                    let col = j + j_dim * k;
                    for i in 0..i_dim {
                        m.set(i, col, x.get(i, j, k));
                    }
                }
            }
            m
        }
        2 => {
            let mut m = Matrix::zeros(j_dim, i_dim * k_dim);
            for k in 0..k_dim {
                for j in 0..j_dim {
                    for i in 0..i_dim {
                        m.set(j, i + i_dim * k, x.get(i, j, k));
                    }
                }
            }
            m
        }
        _ => {
            let mut m = Matrix::zeros(k_dim, i_dim * j_dim);
            for k in 0..k_dim {
                for j in 0..j_dim {
                    for i in 0..i_dim {
                        m.set(k, i + i_dim * j, x.get(i, j, k));
                    }
                }
            }
            m
        }
    };
    Ok(m)
}

/// Inverse of `unfold`: rebuilds the tensor (fully observed) from a mode-n
/// unfolding of the given dims.
pub fn refold(m: &Matrix, mode: usize, dims: (usize, usize, usize)) -> Result<Tensor3> {
    check_mode(mode)?;
    let (i_dim, j_dim, k_dim) = dims;
    let (want_rows, want_cols) = match mode {
        1 => (i_dim, j_dim * k_dim),
        2 => (j_dim, i_dim * k_dim),
        _ => (k_dim, i_dim * j_dim),
    };
    if (m.rows(), m.cols()) != (want_rows, want_cols) {
        return Err(Error::invalid(format!(
            "refold mode {mode} of dims {i_dim}x{j_dim}x{k_dim} needs a {want_rows}x{want_cols} matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let mut x = Tensor3::new(dims)?;
    for k in 0..k_dim {
        for j in 0..j_dim {
            for i in 0..i_dim {
                let v = match mode {
                    1 => m.get(i, j + j_dim * k),
                    2 => m.get(j, i + i_dim * k),
                    _ => m.get(k, i + i_dim * j),
                };
                x.set(i, j, k, v);
            }
        }
    }
    Ok(x)
}

/// Column-wise Khatri-Rao product: `(m x R) x (n x R) -> (m*n x R)` with
/// row `i*n + j = a[i, :] * b[j, :]`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "khatri_rao column mismatch: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let r = a.cols();
    let mut out = Matrix::zeros(a.rows() * b.rows(), r);
    for i in 0..a.rows() {
        let a_row = a.row(i);
        for j in 0..b.rows() {
            let b_row = b.row(j);
            let o_row = out.row_mut(i * b.rows() + j);
            for c in 0..r {
                o_row[c] = a_row[c] * b_row[c];
            }
        }
    }
    Ok(out)
}

/// Matricized-tensor-times-Khatri-Rao-product for the given mode, equal to
/// `unfold(x, mode) * khatri_rao(later, earlier)` of the other two factors
/// but computed in one pass over the tensor.
///
/// `factors` are the mode-1..3 factor matrices; the entry for `mode` itself
/// is ignored.
pub fn mttkrp(x: &Tensor3, factors: [&Matrix; 3], mode: usize) -> Result<Matrix> {
    check_mode(mode)?;
    let (i_dim, j_dim, k_dim) = x.dims();
    let [u, v, t] = factors;
    let r = factors[mode % 3].cols();
    for (m, (f, dim)) in [(u, i_dim), (v, j_dim), (t, k_dim)].iter().enumerate() {
        if m + 1 == mode {
            continue;
        }
        if f.rows() != *dim || f.cols() != r {
            return Err(Error::invalid(format!(
                "mttkrp factor for mode {} must be {}x{r}, got {}x{}",
                m + 1,
                dim,
                f.rows(),
                f.cols()
            )));
        }
    }
    let xv = x.values();
    let out = match mode {
        1 => {
            let mut out = Matrix::zeros(i_dim, r);
            let mut w = vec![0.0; r];
            for k in 0..k_dim {
                let t_row = t.row(k);
                for j in 0..j_dim {
                    let v_row = v.row(j);
                    for c in 0..r {
                        w[c] = v_row[c] * t_row[c];
                    }
                    let base = i_dim * (j + j_dim * k);
                    for i in 0..i_dim {
                        let xval = xv[base + i];
                        if xval == 0.0 {
                            continue;
                        }
                        let o_row = out.row_mut(i);
                        for c in 0..r {
                            o_row[c] += xval * w[c];
                        }
                    }
                }
            }
            out
        }
        2 => {
            let mut out = Matrix::zeros(j_dim, r);
            let mut s = vec![0.0; r];
            for k in 0..k_dim {
                let t_row = t.row(k);
                for j in 0..j_dim {
                    s.iter_mut().for_each(|v| *v = 0.0);
                    let base = i_dim * (j + j_dim * k);
                    for i in 0..i_dim {
                        let xval = xv[base + i];
                        if xval == 0.0 {
                            continue;
                        }
                        let u_row = u.row(i);
                        for c in 0..r {
                            s[c] += xval * u_row[c];
                        }
                    }
                    let o_row = out.row_mut(j);
                    for c in 0..r {
                        o_row[c] += s[c] * t_row[c];
                    }
                }
            }
            out
        }
        _ => {
            let mut out = Matrix::zeros(k_dim, r);
            let mut s = vec![0.0; r];
            for k in 0..k_dim {
                for j in 0..j_dim {
                    s.iter_mut().for_each(|v| *v = 0.0);
                    let base = i_dim * (j + j_dim * k);
                    for i in 0..i_dim {
                        let xval = xv[base + i];
                        if xval == 0.0 {
                            continue;
                        }
                        let u_row = u.row(i);
                        for c in 0..r {
                            s[c] += xval * u_row[c];
                        }
                    }
                    let v_row = v.row(j);
                    let o_row = out.row_mut(k);
                    for c in 0..r {
                        o_row[c] += s[c] * v_row[c];
                    }
                }
            }
            out
        }
    };
    Ok(out)
}

/// Dense reconstruction `sum_r lambda_r u_r (o) v_r (o) t_r`.
pub fn reconstruct(model: &CpModel) -> Tensor3 {
    let (i_dim, j_dim, k_dim) = model.dims();
    let r = model.rank();
    let mut x = Tensor3::new((i_dim, j_dim, k_dim)).expect("model dims are positive");
    let mut coef = vec![0.0; r];
    let (u, v, t) = (model.u(), model.v(), model.t());
    let lambda = model.lambda();
    for k in 0..k_dim {
        let t_row = t.row(k);
        for j in 0..j_dim {
            let v_row = v.row(j);
            for c in 0..r {
                coef[c] = lambda[c] * v_row[c] * t_row[c];
            }
            let base = i_dim * (j + j_dim * k);
            let xv = x.values_mut();
            for i in 0..i_dim {
                let u_row = u.row(i);
                let mut acc = 0.0;
                for c in 0..r {
                    acc += u_row[c] * coef[c];
                }
                xv[base + i] = acc;
            }
        }
    }
    x
}

/// Relative reconstruction error `||x - xhat||_F / ||x||_F`, streamed without
/// materializing the reconstruction.
pub fn relative_error(x: &Tensor3, model: &CpModel) -> Result<f64> {
    if x.dims() != model.dims() {
        return Err(Error::invalid(format!(
            "tensor dims {:?} do not match model dims {:?}",
            x.dims(),
            model.dims()
        )));
    }
    let norm = x.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::numerical("relative error undefined for a zero-norm tensor".to_string()));
    }
    Ok(residual_norm(x, model) / norm)
}

/// `||x - reconstruct(model)||_F` with x treated as fully observed.
pub(crate) fn residual_norm(x: &Tensor3, model: &CpModel) -> f64 {
    residual_norm_parts(x, model.lambda(), model.u(), model.v(), model.t())
}

pub(crate) fn residual_norm_parts(
    x: &Tensor3,
    lambda: &[f64],
    u: &Matrix,
    v: &Matrix,
    t: &Matrix,
) -> f64 {
    let (i_dim, j_dim, k_dim) = x.dims();
    let r = lambda.len();
    let xv = x.values();
    let mut coef = vec![0.0; r];
    let mut acc = 0.0;
    for k in 0..k_dim {
        let t_row = t.row(k);
        for j in 0..j_dim {
            let v_row = v.row(j);
            for c in 0..r {
                coef[c] = lambda[c] * v_row[c] * t_row[c];
            }
            let base = i_dim * (j + j_dim * k);
            for i in 0..i_dim {
                let u_row = u.row(i);
                let mut est = 0.0;
                for c in 0..r {
                    est += u_row[c] * coef[c];
                }
                let d = xv[base + i] - est;
                acc += d * d;
            }
        }
    }
    acc.sqrt()
}
