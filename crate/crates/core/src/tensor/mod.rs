//! Dense third-order tensors and the DFT-based t-product algebra.
//!
//! A [`Tensor3`] of size `n1 × n2 × n3` is stored row-major over `(i, j, k)`
//! so every tube `T(i, j, :)` is contiguous. All products are defined through
//! the unnormalized DFT along the third dimension: the forward transform has
//! no scaling and the inverse divides by `n3`.

mod fft;
pub mod io;
mod svd;

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use svd::{
    energy_cdf, energy_cdf_from_energies, matrix_energy_cdf, mode3_unfolding, tsvd, tube_energies,
    tubal_rank, TSvdFactors,
};
pub(crate) use svd::complex_singular_values;

pub type CMatrix = DMatrix<Complex64>;

/// Imaginary residue allowed when returning from the frequency domain,
/// relative to the largest real magnitude (floored at 1).
const IMAG_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n1, n2, n3] = self.dims;
        write!(f, "Tensor3({n1}x{n2}x{n3})")?;
        if self.data.len() <= 32 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        assert!(n1 > 0 && n2 > 0 && n3 > 0, "tensor dims must be positive");
        Tensor3 {
            dims: [n1, n2, n3],
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    /// Builds a tensor from row-major data (k fastest), rejecting bad lengths
    /// and non-finite entries.
    pub fn from_vec(n1: usize, n2: usize, n3: usize, data: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor dims must be positive, got {n1}x{n2}x{n3}"
            )));
        }
        if data.len() != n1 * n2 * n3 {
            return Err(Error::dims(
                "Tensor3::from_vec",
                format!("{} values for {n1}x{n2}x{n3}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor3::from_vec"));
        }
        Ok(Tensor3 {
            dims: [n1, n2, n3],
            data,
        })
    }

    pub fn from_fn(
        n1: usize,
        n2: usize,
        n3: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Tensor3::zeros(n1, n2, n3);
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    t[(i, j, k)] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Stacks frontal slices `T(:, :, k)`.
    pub fn from_frontal_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no frontal slices".into()))?;
        let (n1, n2) = first.shape();
        if slices.iter().any(|s| s.shape() != (n1, n2)) {
            return Err(Error::dims("from_frontal_slices", "ragged slices"));
        }
        let n3 = slices.len();
        let t = Tensor3::from_fn(n1, n2, n3, |i, j, k| slices[k][(i, j)]);
        t.check_finite("from_frontal_slices")?;
        Ok(t)
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.dims[0], self.dims[1], self.dims[2])
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn n3(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable raw access. Callers are responsible for keeping entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn tube(&self, i: usize, j: usize) -> &[f64] {
        let start = self.offset(i, j, 0);
        &self.data[start..start + self.dims[2]]
    }

    pub fn tube_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = self.offset(i, j, 0);
        let n3 = self.dims[2];
        &mut self.data[start..start + n3]
    }

    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        let (n1, n2, _) = self.dims();
        DMatrix::from_fn(n1, n2, |i, j| self[(i, j, k)])
    }

    /// The `n1 × 1 × n3` lateral slice `T(:, j, :)`.
    pub fn lateral_slice(&self, j: usize) -> Tensor3 {
        self.select_lateral(&[j])
    }

    /// Gathers the lateral slices listed in `cols`, in order.
    pub fn select_lateral(&self, cols: &[usize]) -> Tensor3 {
        let (n1, _, n3) = self.dims();
        let mut out = Tensor3::zeros(n1, cols.len().max(1), n3);
        if cols.is_empty() {
            return out;
        }
        for i in 0..n1 {
            for (jj, &j) in cols.iter().enumerate() {
                out.tube_mut(i, jj).copy_from_slice(self.tube(i, j));
            }
        }
        out
    }

    /// Concatenates tensors along the second dimension.
    pub fn concat_lateral(parts: &[Tensor3]) -> Result<Tensor3> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let (n1, _, n3) = first.dims();
        if parts.iter().any(|p| p.n1() != n1 || p.n3() != n3) {
            return Err(Error::dims("concat_lateral", "n1/n3 differ between parts"));
        }
        let n2: usize = parts.iter().map(Tensor3::n2).sum();
        let mut out = Tensor3::zeros(n1, n2, n3);
        for i in 0..n1 {
            let mut jj = 0;
            for p in parts {
                for j in 0..p.n2() {
                    out.tube_mut(i, jj).copy_from_slice(p.tube(i, j));
                    jj += 1;
                }
            }
        }
        Ok(out)
    }

    /// Concatenates tensors along the first dimension.
    pub fn concat_rows(parts: &[Tensor3]) -> Result<Tensor3> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let (_, n2, n3) = first.dims();
        if parts.iter().any(|p| p.n2() != n2 || p.n3() != n3) {
            return Err(Error::dims("concat_rows", "n2/n3 differ between parts"));
        }
        let n1: usize = parts.iter().map(Tensor3::n1).sum();
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor3 {
            dims: [n1, n2, n3],
            data,
        })
    }

    /// Rows `start..end` of the first dimension.
    pub fn row_range(&self, start: usize, end: usize) -> Tensor3 {
        assert!(start < end && end <= self.n1());
        let (_, n2, n3) = self.dims();
        Tensor3 {
            dims: [end - start, n2, n3],
            data: self.data[start * n2 * n3..end * n2 * n3].to_vec(),
        }
    }

    pub fn check_finite(&self, ctx: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(ctx))
        }
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_norm_sq().sqrt()
    }

    pub fn fro_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        self.map(|v| v * s)
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::dims(
                "zip_map",
                format!("{:?} vs {:?}", self.dims(), other.dims()),
            ));
        }
        Ok(Tensor3 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Number of entries with magnitude below `tol`.
    pub fn count_below(&self, tol: f64) -> usize {
        self.data.iter().filter(|v| v.abs() < tol).count()
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }
}

/// Frequency representation: slice `k` holds the k-th DFT coefficient of
/// every tube.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqTensor3 {
    dims: [usize; 3],
    slices: Vec<CMatrix>,
}

impl FreqTensor3 {
    pub fn from_slices(slices: Vec<CMatrix>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no frequency slices".into()))?;
        let (n1, n2) = first.shape();
        if slices.iter().any(|s| s.shape() != (n1, n2)) {
            return Err(Error::dims("FreqTensor3::from_slices", "ragged slices"));
        }
        Ok(FreqTensor3 {
            dims: [n1, n2, slices.len()],
            slices,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn n3(&self) -> usize {
        self.dims[2]
    }

    pub fn slice(&self, k: usize) -> &CMatrix {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[CMatrix] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<CMatrix> {
        self.slices
    }

    /// `Σ_k ‖X̂⁽ᵏ⁾‖²_F`; equals `n3 · ‖X‖²_F` for the transform of a real tensor.
    pub fn fro_norm_sq(&self) -> f64 {
        self.slices.iter().map(|s| s.norm_squared()).sum()
    }

    /// Slice-wise conjugate transpose.
    pub fn adjoint(&self) -> FreqTensor3 {
        let slices: Vec<CMatrix> = self.slices.iter().map(|s| s.adjoint()).collect();
        FreqTensor3 {
            dims: [self.dims[1], self.dims[0], self.dims[2]],
            slices,
        }
    }

    /// Slice-wise matrix product.
    pub fn mul(&self, other: &FreqTensor3) -> Result<FreqTensor3> {
        if self.dims[1] != other.dims[0] || self.dims[2] != other.dims[2] {
            return Err(Error::dims(
                "FreqTensor3::mul",
                format!("{:?} * {:?}", self.dims(), other.dims()),
            ));
        }
        let slices = self
            .slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a * b)
            .collect();
        Ok(FreqTensor3 {
            dims: [self.dims[0], other.dims[1], self.dims[2]],
            slices,
        })
    }

    /// Largest deviation from conjugate symmetry `X̂⁽ⁿ³⁻ᵏ⁾ = conj(X̂⁽ᵏ⁾)`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n3 = self.dims[2];
        let mut worst: f64 = 0.0;
        for k in 0..n3 {
            let partner = (n3 - k) % n3;
            let d = (&self.slices[partner] - self.slices[k].map(|z| z.conj())).camax();
            worst = worst.max(d);
        }
        worst
    }
}

/// Unnormalized forward DFT of every tube.
pub fn dft3(t: &Tensor3) -> Result<FreqTensor3> {
    t.check_finite("dft3")?;
    let (n1, n2, n3) = t.dims();
    let mut slices = vec![CMatrix::zeros(n1, n2); n3];
    let mut buf = vec![Complex64::new(0.0, 0.0); n3];
    let plan = fft::plan(n3, false);
    for i in 0..n1 {
        for j in 0..n2 {
            for (b, &v) in buf.iter_mut().zip(t.tube(i, j)) {
                *b = Complex64::new(v, 0.0);
            }
            plan.process(&mut buf);
            for (k, z) in buf.iter().enumerate() {
                slices[k][(i, j)] = *z;
            }
        }
    }
    Ok(FreqTensor3 {
        dims: [n1, n2, n3],
        slices,
    })
}

/// Inverse DFT (scaled by `1/n3`). Fails if the result carries an imaginary
/// component above tolerance, i.e. the input was not conjugate symmetric.
pub fn idft3(f: &FreqTensor3) -> Result<Tensor3> {
    let (n1, n2, n3) = f.dims();
    if f
        .slices
        .iter()
        .any(|s| s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
    {
        return Err(Error::NonFinite("idft3"));
    }
    let mut out = Tensor3::zeros(n1, n2, n3);
    let mut buf = vec![Complex64::new(0.0, 0.0); n3];
    let plan = fft::plan(n3, true);
    let inv = 1.0 / n3 as f64;
    let mut max_im: f64 = 0.0;
    let mut max_re: f64 = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = f.slices[k][(i, j)];
            }
            plan.process(&mut buf);
            for (o, z) in out.tube_mut(i, j).iter_mut().zip(&buf) {
                *o = z.re * inv;
                max_im = max_im.max((z.im * inv).abs());
                max_re = max_re.max((z.re * inv).abs());
            }
        }
    }
    if max_im > IMAG_TOL * max_re.max(1.0) {
        return Err(Error::ImaginaryResidual(max_im));
    }
    Ok(out)
}

/// t-product `A * B`: circular convolution of tubes, computed as slice-wise
/// matrix products in the frequency domain.
pub fn tprod(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    if a.n2() != b.n1() || a.n3() != b.n3() {
        return Err(Error::dims(
            "tprod",
            format!("{:?} * {:?}", a.dims(), b.dims()),
        ));
    }
    let fa = dft3(a)?;
    let fb = dft3(b)?;
    idft3(&fa.mul(&fb)?)
}

/// Tensor transpose: each frontal slice transposed, slices `2..n3` reversed.
pub fn ttranspose(t: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = t.dims();
    Tensor3::from_fn(n2, n1, n3, |j, i, k| t[(i, j, (n3 - k) % n3)])
}

/// Identity tensor: first frontal slice `I_n`, all others zero.
pub fn identity_tensor(n: usize, n3: usize) -> Tensor3 {
    Tensor3::from_fn(n, n, n3, |i, j, k| if k == 0 && i == j { 1.0 } else { 0.0 })
}

pub fn fro_norm(t: &Tensor3) -> f64 {
    t.fro_norm()
}

pub fn l1_norm(t: &Tensor3) -> f64 {
    t.l1_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n1: usize, n2: usize, n3: usize, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(n1, n2, n3, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_slice_dft_is_identity() {
        let t = random(3, 2, 1, 1);
        let f = dft3(&t).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(f.slice(0)[(i, j)], Complex64::new(t[(i, j, 0)], 0.0));
            }
        }
    }

    #[test]
    fn delta_tube_transforms_to_constant() {
        let t = Tensor3::from_vec(1, 1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let f = dft3(&t).unwrap();
        for k in 0..4 {
            assert!((f.slice(k)[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn round_trip_3x3x4() {
        let t = random(3, 3, 4, 7);
        let back = idft3(&dft3(&t).unwrap()).unwrap();
        let err = back.sub(&t).unwrap().fro_norm() / t.fro_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn non_symmetric_spectrum_is_rejected() {
        let mut s = vec![CMatrix::zeros(1, 1); 4];
        s[1][(0, 0)] = Complex64::new(0.0, 1.0);
        let f = FreqTensor3::from_slices(s).unwrap();
        assert!(matches!(idft3(&f), Err(Error::ImaginaryResidual(_))));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(Tensor3::from_vec(1, 1, 2, vec![1.0, f64::NAN]).is_err());
        let mut t = Tensor3::zeros(1, 1, 2);
        t.as_mut_slice()[1] = f64::INFINITY;
        assert!(matches!(dft3(&t), Err(Error::NonFinite(_))));
    }

    #[test]
    fn tprod_degenerate_tube_is_matmul() {
        let a = Tensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor3::from_vec(2, 1, 1, vec![1.0, 1.0]).unwrap();
        let c = tprod(&a, &b).unwrap();
        assert!((c[(0, 0, 0)] - 3.0).abs() < 1e-14);
        assert!((c[(1, 0, 0)] - 7.0).abs() < 1e-14);
    }

    #[test]
    fn tprod_identity_left() {
        let b = random(2, 5, 3, 3);
        let c = tprod(&identity_tensor(2, 3), &b).unwrap();
        assert!(c.sub(&b).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn tprod_rejects_mismatch() {
        let a = random(2, 3, 4, 1);
        let b = random(2, 3, 4, 2);
        assert!(matches!(tprod(&a, &b), Err(Error::DimMismatch { .. })));
        let c = random(3, 3, 2, 2);
        assert!(tprod(&a, &c).is_err());
    }

    #[test]
    fn transpose_of_matrix() {
        let t = random(2, 3, 1, 5);
        let tt = ttranspose(&t);
        assert_eq!(tt.dims(), (3, 2, 1));
        assert_eq!(tt[(2, 1, 0)], t[(1, 2, 0)]);
        assert_eq!(ttranspose(&tt), t);
    }

    #[test]
    fn norms() {
        assert_eq!(Tensor3::zeros(2, 2, 2).fro_norm(), 0.0);
        let ones = Tensor3::from_fn(2, 2, 2, |_, _, _| 1.0);
        assert_eq!(ones.l1_norm(), 8.0);
        let t = random(3, 4, 5, 9);
        let f = dft3(&t).unwrap();
        let parseval = f.fro_norm_sq() / 5.0;
        assert!((parseval - t.fro_norm_sq()).abs() < 1e-12 * t.fro_norm_sq());
    }

    #[test]
    fn identity_definition() {
        let id = identity_tensor(3, 4);
        assert_eq!(id.frontal_slice(0), DMatrix::identity(3, 3));
        for k in 1..4 {
            assert_eq!(id.frontal_slice(k), DMatrix::zeros(3, 3));
        }
    }

    #[test]
    fn concat_and_select() {
        let a = random(2, 3, 2, 1);
        let b = random(2, 1, 2, 2);
        let c = Tensor3::concat_lateral(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.select_lateral(&[0, 1, 2]), a);
        assert_eq!(c.lateral_slice(3), b);
        let r = Tensor3::concat_rows(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(r.row_range(2, 4), a);
    }
}
