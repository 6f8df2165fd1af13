use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{dft3, idft3, CMatrix, FreqTensor3, Tensor3};
use crate::error::{Error, Result};

/// Factors of `T = U * Θ * Vᵀ`.
///
/// `theta` is f-diagonal. Singular tubes `Θ(i, i, :)` are reported in order of
/// decreasing tube energy; every frequency slice is individually sorted, so
/// the tube energies are sorted as well.
#[derive(Clone, Debug)]
pub struct TSvdFactors {
    pub u: Tensor3,
    pub theta: Tensor3,
    pub v: Tensor3,
}

impl TSvdFactors {
    /// `‖Θ(i, i, :)‖²_F` for each singular tube.
    pub fn tube_energies(&self) -> Vec<f64> {
        let m = self.theta.n1().min(self.theta.n2());
        (0..m)
            .map(|i| self.theta.tube(i, i).iter().map(|v| v * v).sum())
            .collect()
    }
}

struct SliceSvd {
    u: CMatrix,
    sigma: Vec<f64>,
    v: CMatrix,
}

pub fn tsvd(t: &Tensor3) -> Result<TSvdFactors> {
    let (n1, n2, n3) = t.dims();
    let f = dft3(t)?;
    let mut us: Vec<Option<CMatrix>> = vec![None; n3];
    let mut thetas: Vec<Option<CMatrix>> = vec![None; n3];
    let mut vs: Vec<Option<CMatrix>> = vec![None; n3];
    for k in 0..=n3 / 2 {
        let partner = (n3 - k) % n3;
        let s = if partner == k {
            // Self-conjugate slice: decompose the real matrix so the factors
            // stay real and the inverse transform is real.
            real_slice_svd(&f.slice(k).map(|z| z.re))
        } else {
            complex_slice_svd(f.slice(k))
        };
        let mut th = CMatrix::zeros(n1, n2);
        for (i, &sv) in s.sigma.iter().enumerate() {
            th[(i, i)] = Complex64::new(sv, 0.0);
        }
        if partner != k {
            us[partner] = Some(s.u.map(|z| z.conj()));
            vs[partner] = Some(s.v.map(|z| z.conj()));
            thetas[partner] = Some(th.clone());
        }
        us[k] = Some(s.u);
        vs[k] = Some(s.v);
        thetas[k] = Some(th);
    }
    let collect = |v: Vec<Option<CMatrix>>| -> Result<Tensor3> {
        idft3(&FreqTensor3::from_slices(
            v.into_iter().map(|m| m.expect("every slice filled")).collect(),
        )?)
    };
    Ok(TSvdFactors {
        u: collect(us)?,
        theta: collect(thetas)?,
        v: collect(vs)?,
    })
}

fn complex_slice_svd(m: &CMatrix) -> SliceSvd {
    let (n1, n2) = m.shape();
    if n2 > n1 {
        let t = jacobi_svd(&m.adjoint());
        return SliceSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    jacobi_svd(m)
}

fn real_slice_svd(m: &DMatrix<f64>) -> SliceSvd {
    // Real input keeps every rotation phase at ±1, so the factors stay real.
    let s = complex_slice_svd(&m.map(|x| Complex64::new(x, 0.0)));
    SliceSvd {
        u: s.u.map(|z| Complex64::new(z.re, 0.0)),
        sigma: s.sigma,
        v: s.v.map(|z| Complex64::new(z.re, 0.0)),
    }
}

/// One-sided (Hestenes) Jacobi SVD of a tall or square matrix. Columns of
/// `W = A V` are rotated until mutually orthogonal; then `W = U Σ`.
fn jacobi_svd(a: &CMatrix) -> SliceSvd {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = CMatrix::identity(n, n);
    let eps = f64::EPSILON;
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let g = w.column(p).dotc(&w.column(q));
                let gamma = g.norm();
                if gamma == 0.0 || gamma <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = (g / gamma).conj();
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, phase, c, s);
                rotate(&mut v, p, q, phase, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let order = descending_order(&norms);
    let largest = norms.iter().cloned().fold(0.0, f64::max);
    let tol = largest * m.max(n) as f64 * eps;
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u_cols: Vec<_> = order
        .iter()
        .filter(|&&j| norms[j] > tol)
        .map(|&j| w.column(j) / Complex64::new(norms[j], 0.0))
        .collect();
    let v_cols: Vec<_> = order.iter().map(|&j| v.column(j).into_owned()).collect();
    SliceSvd {
        u: complete_basis(m, u_cols),
        sigma,
        v: CMatrix::from_columns(&v_cols),
    }
}

fn rotate(x: &mut CMatrix, p: usize, q: usize, phase: Complex64, c: f64, s: f64) {
    for i in 0..x.nrows() {
        let a = x[(i, p)];
        let b = x[(i, q)] * phase;
        x[(i, p)] = a * c - b * s;
        x[(i, q)] = a * s + b * c;
    }
}

/// Singular values of a real matrix, largest first.
fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let a = m.map(|x| Complex64::new(x, 0.0));
    let a = if a.ncols() > a.nrows() { a.adjoint() } else { a };
    jacobi_svd(&a).sigma
}

/// Singular values of a complex matrix, largest first.
pub(crate) fn complex_singular_values(m: &CMatrix) -> Vec<f64> {
    complex_slice_svd(m).sigma
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Extends orthonormal columns to a full unitary `n × n` basis by
/// Gram–Schmidt against the standard basis.
fn complete_basis(n: usize, mut cols: Vec<nalgebra::DVector<Complex64>>) -> CMatrix {
    let mut e = 0;
    while cols.len() < n && e < n {
        let mut cand = nalgebra::DVector::<Complex64>::zeros(n);
        cand[e] = Complex64::new(1.0, 0.0);
        e += 1;
        // two passes keep the residual orthogonal to working precision
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&cand);
                cand -= c * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-6 {
            cols.push(cand / Complex64::new(norm, 0.0));
        }
    }
    CMatrix::from_columns(&cols)
}

/// Energies of the singular tubes, largest first.
pub fn tube_energies(t: &Tensor3) -> Result<Vec<f64>> {
    Ok(tsvd(t)?.tube_energies())
}

/// Number of singular tubes whose Frobenius norm exceeds `tol` times the
/// largest tube norm.
pub fn tubal_rank(t: &Tensor3, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} < 0")));
    }
    let norms: Vec<f64> = tube_energies(t)?.into_iter().map(f64::sqrt).collect();
    let largest = norms.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return Ok(0);
    }
    Ok(norms.iter().filter(|&&n| n > tol * largest).count())
}

/// Cumulative normalized energy of the singular tubes.
pub fn energy_cdf(t: &Tensor3) -> Result<Vec<f64>> {
    if t.fro_norm() == 0.0 {
        return Err(Error::Zero("tensor"));
    }
    energy_cdf_from_energies(&tube_energies(t)?)
}

pub fn energy_cdf_from_energies(energies: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return Err(Error::Zero("energy"));
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = energies
        .iter()
        .map(|e| {
            acc += e;
            (acc / total).min(1.0)
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Ok(cdf)
}

/// Mode-3 unfolding: an `n3 × (n1·n2)` matrix whose rows are the frontal
/// slices flattened.
pub fn mode3_unfolding(t: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = t.dims();
    DMatrix::from_fn(n3, n1 * n2, |k, c| t[(c / n2, c % n2, k)])
}

/// Cumulative normalized squared singular values of a matrix.
pub fn matrix_energy_cdf(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let e: Vec<f64> = singular_values(m).iter().map(|s| s * s).collect();
    energy_cdf_from_energies(&e)
}
