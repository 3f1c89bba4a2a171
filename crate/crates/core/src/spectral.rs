//! Orthonormal 2D DCT-II / DCT-III pair and a plain 2D DFT.
//!
//! Both transforms are evaluated separably (a pass over rows, then over
//! columns) from precomputed basis tables, which costs `O(MN(M+N))`. The DCT
//! uses the orthonormal scaling `α(0) = √(1/M)`, `α(k) = √(2/M)` per
//! dimension, so the forward and inverse transforms are mutual transposes:
//! energy is preserved and `⟨dct2(W), F⟩ = ⟨W, idct2(F)⟩`.
//!
//! The DFT uses the unnormalized forward convention; the inverse carries the
//! `1/(MN)` factor.

use std::collections::HashSet;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Which basis a coefficient grid is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    Dct,
    DftRealPart,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Basis::Dct => "dct",
            Basis::DftRealPart => "dft-real-part",
        }
    }
}

/// A grid of transform coefficients tagged with its basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SpectralMatrix<T> {
    pub basis: Basis,
    pub coeffs: Matrix<T>,
}

impl<T: Scalar> SpectralMatrix<T> {
    pub fn dct(coeffs: Matrix<T>) -> Self {
        Self {
            basis: Basis::Dct,
            coeffs,
        }
    }

    pub fn rows(&self) -> usize {
        self.coeffs.rows()
    }

    pub fn cols(&self) -> usize {
        self.coeffs.cols()
    }

    /// Energy of one coefficient: its square.
    #[inline]
    pub fn energy(&self, u: usize, v: usize) -> T {
        let c = self.coeffs[(u, v)];
        c * c
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, u: usize, v: usize) -> Complex<T> {
        self.data[u * self.cols + v]
    }

    pub fn set(&mut self, u: usize, v: usize, value: Complex<T>) {
        self.data[u * self.cols + v] = value;
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn real_part(&self) -> Matrix<T> {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).re)
    }

    pub fn imag_part(&self) -> Matrix<T> {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).im)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            Some(p) => Err(Error::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
            None => Ok(()),
        }
    }
}

/// `table[k][n] = α(k) cos(π (2n+1) k / (2len))`, stored as a `len × len` matrix.
fn dct_table<T: Scalar>(len: usize) -> Matrix<T> {
    let period = 4 * len;
    let denom = T::of_usize(2 * len);
    let dc = T::one() / T::of_usize(len).sqrt();
    let ac = (T::of(2.0) / T::of_usize(len)).sqrt();
    Matrix::from_fn(len, len, |k, n| {
        // Reduce the phase to one period before scaling to keep the
        // argument small for large indices.
        let phase = ((2 * n + 1) * k) % period;
        let scale = if k == 0 { dc } else { ac };
        scale * (T::PI() * T::of_usize(phase) / denom).cos()
    })
}

/// Cached basis tables for an `M × N` orthonormal DCT.
#[derive(Debug, Clone)]
pub struct Dct2d<T> {
    rows: usize,
    cols: usize,
    row_basis: Matrix<T>,
    col_basis: Matrix<T>,
}

impl<T: Scalar> Dct2d<T> {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        Ok(Self {
            rows,
            cols,
            row_basis: dct_table(rows),
            col_basis: dct_table(cols),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Forward DCT-II: `C_M · W · C_Nᵀ`.
    pub fn forward(&self, w: &Matrix<T>) -> Result<SpectralMatrix<T>> {
        w.ensure_shape(self.rows, self.cols)?;
        w.check_finite()?;
        let by_rows = self.row_basis.matmul(w)?;
        Ok(SpectralMatrix::dct(by_rows.matmul_t(&self.col_basis)?))
    }

    /// Inverse (DCT-III): `C_Mᵀ · F · C_N`.
    pub fn inverse(&self, f: &SpectralMatrix<T>) -> Result<Matrix<T>> {
        if f.basis != Basis::Dct {
            return Err(Error::WrongBasis {
                expected: Basis::Dct.name(),
                actual: f.basis.name(),
            });
        }
        f.coeffs.ensure_shape(self.rows, self.cols)?;
        f.coeffs.check_finite()?;
        let by_rows = self.row_basis.t_matmul(&f.coeffs)?;
        by_rows.matmul(&self.col_basis)
    }

    /// Inverse DCT of a grid that is zero except at `entries`, evaluating only
    /// the listed basis images.
    pub fn inverse_sparse(&self, entries: &[(usize, usize, T)]) -> Result<Matrix<T>> {
        check_sparse_entries(entries.iter().map(|&(u, v, _)| (u, v)), self.rows, self.cols)?;
        let mut out = Matrix::zeros(self.rows, self.cols);
        self.accumulate_sparse(entries, T::one(), &mut out);
        Ok(out)
    }

    /// `out += scale · Σ value · basis(u, v)` for already validated entries.
    pub(crate) fn accumulate_sparse(&self, entries: &[(usize, usize, T)], scale: T, out: &mut Matrix<T>) {
        for &(u, v, value) in entries {
            let value = value * scale;
            let col_basis = self.col_basis.row(v);
            for (i, &cu) in self.row_basis.row(u).iter().enumerate() {
                let a = value * cu;
                for (o, &cv) in out.row_mut(i).iter_mut().zip(col_basis) {
                    *o += a * cv;
                }
            }
        }
    }

    /// `⟨U, basis(u, v)⟩` for every listed index, i.e. the forward DCT of `U`
    /// gathered at `indices`.
    pub fn forward_at(&self, upstream: &Matrix<T>, indices: &[(usize, usize)]) -> Result<Vec<T>> {
        upstream.ensure_shape(self.rows, self.cols)?;
        // Column pass once, then one dot product per requested row frequency.
        let by_cols = upstream.matmul_t(&self.col_basis)?;
        Ok(indices
            .iter()
            .map(|&(u, v)| {
                self.row_basis
                    .row(u)
                    .iter()
                    .enumerate()
                    .map(|(i, &cu)| cu * by_cols[(i, v)])
                    .sum()
            })
            .collect())
    }
}

/// Cached twiddle tables for an `M × N` DFT.
#[derive(Debug, Clone)]
pub struct Dft2d<T> {
    rows: usize,
    cols: usize,
    row_cos: Matrix<T>,
    row_sin: Matrix<T>,
    col_cos: Matrix<T>,
    col_sin: Matrix<T>,
}

/// `cos(2π k n / len)` and `sin(2π k n / len)` tables.
fn twiddle_tables<T: Scalar>(len: usize) -> (Matrix<T>, Matrix<T>) {
    let denom = T::of_usize(len);
    let angle = |k: usize, n: usize| T::of(2.0) * T::PI() * T::of_usize((k * n) % len) / denom;
    (
        Matrix::from_fn(len, len, |k, n| angle(k, n).cos()),
        Matrix::from_fn(len, len, |k, n| angle(k, n).sin()),
    )
}

impl<T: Scalar> Dft2d<T> {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        let (row_cos, row_sin) = twiddle_tables(rows);
        let (col_cos, col_sin) = twiddle_tables(cols);
        Ok(Self {
            rows,
            cols,
            row_cos,
            row_sin,
            col_cos,
            col_sin,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// `F[u,v] = Σ W[i,j] e^{-2πi(ui/M + vj/N)}`.
    pub fn forward(&self, w: &Matrix<T>) -> Result<ComplexMatrix<T>> {
        w.ensure_shape(self.rows, self.cols)?;
        w.check_finite()?;
        // Along columns: G = W · e^{-iθ_N}ᵀ, real input so G = W·C - i W·S.
        let g_re = w.matmul_t(&self.col_cos)?;
        let g_im = w.matmul_t(&self.col_sin)?.scale(-T::one());
        self.row_pass(&g_re, &g_im, -T::one())
    }

    /// Real part of `(1/MN) Σ F[u,v] e^{+2πi(ui/M + vj/N)}`.
    pub fn inverse_real_part(&self, f: &ComplexMatrix<T>) -> Result<Matrix<T>> {
        if f.shape() != (self.rows, self.cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", f.rows, f.cols),
            });
        }
        f.check_finite()?;
        let re = f.real_part();
        let im = f.imag_part();
        // Along columns with e^{+iθ}: (re + i im)(c + i s).
        let g_re = sub(&re.matmul_t(&self.col_cos)?, &im.matmul_t(&self.col_sin)?);
        let g_im = re.matmul_t(&self.col_sin)?.add(&im.matmul_t(&self.col_cos)?)?;
        let full = self.row_pass(&g_re, &g_im, T::one())?;
        let norm = T::one() / T::of_usize(self.rows * self.cols);
        Ok(full.real_part().scale(norm))
    }

    /// Applies `e^{sign·2πi ui/M}` along rows to a complex grid given as parts.
    fn row_pass(&self, g_re: &Matrix<T>, g_im: &Matrix<T>, sign: T) -> Result<ComplexMatrix<T>> {
        // H = E · G with E = C + i·sign·S (tables are symmetric).
        let cre = self.row_cos.matmul(g_re)?;
        let cim = self.row_cos.matmul(g_im)?;
        let sre = self.row_sin.matmul(g_re)?;
        let sim = self.row_sin.matmul(g_im)?;
        let data = (0..self.rows * self.cols)
            .map(|p| {
                let (a, b, c, d) = (cre.as_slice()[p], cim.as_slice()[p], sre.as_slice()[p], sim.as_slice()[p]);
                Complex::new(a - sign * d, b + sign * c)
            })
            .collect();
        ComplexMatrix::new(self.rows, self.cols, data)
    }

    /// Real part of the inverse DFT of a grid whose only nonzeros are real
    /// values at `entries`, evaluated per entry.
    pub fn inverse_real_sparse(&self, entries: &[(usize, usize, T)]) -> Result<Matrix<T>> {
        check_sparse_entries(entries.iter().map(|&(u, v, _)| (u, v)), self.rows, self.cols)?;
        let mut out = Matrix::zeros(self.rows, self.cols);
        self.accumulate_real_sparse(entries, T::one(), &mut out);
        Ok(out)
    }

    pub(crate) fn accumulate_real_sparse(&self, entries: &[(usize, usize, T)], scale: T, out: &mut Matrix<T>) {
        let norm = scale / T::of_usize(self.rows * self.cols);
        for &(u, v, value) in entries {
            let value = value * norm;
            let (cu, su) = (self.row_cos.row(u), self.row_sin.row(u));
            let (cv, sv) = (self.col_cos.row(v), self.col_sin.row(v));
            for i in 0..self.rows {
                let (a, b) = (value * cu[i], value * su[i]);
                for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                    // cos(x + y) = cos x cos y - sin x sin y
                    *o += a * cv[j] - b * sv[j];
                }
            }
        }
    }

    /// Adjoint of [`Dft2d::inverse_real_sparse`] at `indices`:
    /// `(1/MN) Σ U[i,j] cos(2π(ui/M + vj/N))`.
    pub fn real_adjoint_at(&self, upstream: &Matrix<T>, indices: &[(usize, usize)]) -> Result<Vec<T>> {
        upstream.ensure_shape(self.rows, self.cols)?;
        let by_cos = upstream.matmul_t(&self.col_cos)?;
        let by_sin = upstream.matmul_t(&self.col_sin)?;
        let norm = T::one() / T::of_usize(self.rows * self.cols);
        Ok(indices
            .iter()
            .map(|&(u, v)| {
                let (cu, su) = (self.row_cos.row(u), self.row_sin.row(u));
                let s: T = (0..self.rows)
                    .map(|i| cu[i] * by_cos[(i, v)] - su[i] * by_sin[(i, v)])
                    .sum();
                s * norm
            })
            .collect())
    }
}

impl<T: Scalar> ComplexMatrix<T> {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

fn sub<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let mut out = a.clone();
    out.axpy(-T::one(), b).expect("operands share a shape");
    out
}

pub(crate) fn check_sparse_entries(
    indices: impl Iterator<Item = (usize, usize)>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let mut seen = HashSet::new();
    for (u, v) in indices {
        if u >= rows || v >= cols {
            return Err(Error::IndexOutOfBounds { u, v, rows, cols });
        }
        if !seen.insert((u, v)) {
            return Err(Error::DuplicateIndex { u, v });
        }
    }
    Ok(())
}

/// Orthonormal 2D DCT-II of `w`.
pub fn dct2<T: Scalar>(w: &Matrix<T>) -> Result<SpectralMatrix<T>> {
    Dct2d::new(w.rows(), w.cols())?.forward(w)
}

/// Inverse of [`dct2`].
pub fn idct2<T: Scalar>(f: &SpectralMatrix<T>) -> Result<Matrix<T>> {
    Dct2d::new(f.rows(), f.cols())?.inverse(f)
}

/// Inverse DCT of an `rows × cols` grid holding only `entries`.
pub fn idct2_sparse<T: Scalar>(entries: &[(usize, usize, T)], rows: usize, cols: usize) -> Result<Matrix<T>> {
    Dct2d::new(rows, cols)?.inverse_sparse(entries)
}

/// Unnormalized 2D DFT of a real matrix.
pub fn dft2_real<T: Scalar>(w: &Matrix<T>) -> Result<ComplexMatrix<T>> {
    Dft2d::new(w.rows(), w.cols())?.forward(w)
}

/// Real part of the `1/(MN)`-normalized inverse DFT.
pub fn idft2_real_part<T: Scalar>(f: &ComplexMatrix<T>) -> Result<Matrix<T>> {
    Dft2d::new(f.rows(), f.cols())?.inverse_real_part(f)
}
