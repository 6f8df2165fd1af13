#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tubalsr::Tensor3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(n1: usize, n2: usize, n3: usize, rng: &mut ChaCha8Rng) -> Tensor3 {
    Tensor3::from_fn(n1, n2, n3, |_, _, _| rng.random_range(-1.0..1.0))
}

/// `C(i, j, k) = Σ_l Σ_m A(i, l, m) · B(l, j, (k − m) mod n3)`.
pub fn naive_tprod(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let (n1, r, n3) = a.dims();
    let n2 = b.n2();
    Tensor3::from_fn(n1, n2, n3, |i, j, k| {
        let mut s = 0.0;
        for l in 0..r {
            for m in 0..n3 {
                s += a[(i, l, m)] * b[(l, j, (k + n3 - m) % n3)];
            }
        }
        s
    })
}

/// `Tᵀ(i, j, k) = T(j, i, (n3 − k) mod n3)`.
pub fn naive_transpose(t: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = t.dims();
    Tensor3::from_fn(n2, n1, n3, |i, j, k| t[(j, i, (n3 - k) % n3)])
}

/// Direct `O(n3²)` DFT of every tube: `(re, im)` per entry.
pub fn naive_dft(t: &Tensor3) -> Vec<(f64, f64)> {
    let (n1, n2, n3) = t.dims();
    let mut out = Vec::with_capacity(t.len());
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                let (mut re, mut im) = (0.0, 0.0);
                for m in 0..n3 {
                    let ang = -2.0 * std::f64::consts::PI * (k * m) as f64 / n3 as f64;
                    re += t[(i, j, m)] * ang.cos();
                    im += t[(i, j, m)] * ang.sin();
                }
                out.push((re, im));
            }
        }
    }
    out
}

pub fn rel_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    a.sub(b).unwrap().fro_norm() / b.fro_norm().max(1e-300)
}

/// Column-major dense matrix `M` with `vec(D * A) = M · vec(A)`, built by
/// pushing unit codes through the naive t-product.
pub fn synthesis_matrix(d: &Tensor3, n2: usize) -> (Vec<Vec<f64>>, usize, usize) {
    let (n1, r, n3) = d.dims();
    let rows = n1 * n2 * n3;
    let cols = r * n2 * n3;
    let mut m = vec![vec![0.0; rows]; cols];
    for (c, col) in m.iter_mut().enumerate() {
        let mut e = Tensor3::zeros(r, n2, n3);
        e.as_mut_slice()[c] = 1.0;
        col.copy_from_slice(naive_tprod(d, &e).as_slice());
    }
    (m, rows, cols)
}

/// Cyclic coordinate descent on `‖Mx − t‖² + λ‖x‖₁` from zero, to a
/// coordinate-change tolerance of `1e-14`.
pub fn lasso_cd(d: &Tensor3, t: &Tensor3, lambda: f64) -> Tensor3 {
    let (_, r, n3) = d.dims();
    let n2 = t.n2();
    let (m, rows, cols) = synthesis_matrix(d, n2);
    let target = t.as_slice();
    let mut x = vec![0.0; cols];
    let mut resid: Vec<f64> = target.to_vec();
    let norms: Vec<f64> = m.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    for _ in 0..100_000 {
        let mut biggest: f64 = 0.0;
        for j in 0..cols {
            if norms[j] == 0.0 {
                continue;
            }
            let rho: f64 = (0..rows).map(|i| m[j][i] * resid[i]).sum::<f64>() + norms[j] * x[j];
            let new = soft(rho, lambda / 2.0) / norms[j];
            let delta = new - x[j];
            if delta != 0.0 {
                for i in 0..rows {
                    resid[i] -= delta * m[j][i];
                }
                x[j] = new;
                biggest = biggest.max(delta.abs());
            }
        }
        if biggest < 1e-14 {
            break;
        }
    }
    Tensor3::from_vec(r, n2, n3, x).unwrap()
}

fn soft(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// `‖D * A − T‖²_F + λ‖A‖₁` through the naive t-product.
pub fn naive_objective(d: &Tensor3, a: &Tensor3, t: &Tensor3, lambda: f64) -> f64 {
    naive_tprod(d, a).sub(t).unwrap().fro_norm_sq() + lambda * a.l1_norm()
}

/// Central differences of `f` at `x` in every coordinate.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over all entries.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Accelerated projected gradient on `min ‖T − D * A‖²_F` subject to
/// `‖D(:, j, :)‖²_F ≤ 1`, returning the primal objective reached. The step
/// uses `σ²_max ≤ n3·‖A‖²_F`.
pub fn projected_gradient_dictionary(t: &Tensor3, a: &Tensor3, iters: usize) -> f64 {
    let (n1, _, n3) = t.dims();
    let r = a.n1();
    let at = naive_transpose(a);
    let step = 1.0 / (2.0 * n3 as f64 * a.fro_norm_sq());
    let project = |d: &mut Tensor3| {
        for j in 0..r {
            let norm = (0..n1).flat_map(|i| d.tube(i, j).to_vec()).map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                for i in 0..n1 {
                    d.tube_mut(i, j).iter_mut().for_each(|v| *v /= norm);
                }
            }
        }
    };
    let mut d = Tensor3::zeros(n1, r, n3);
    let mut y = d.clone();
    let mut tk = 1.0f64;
    for _ in 0..iters {
        let g = naive_tprod(&naive_tprod(&y, a).sub(t).unwrap(), &at).scale(2.0);
        let mut next = y.zip_map(&g, |v, g| v - step * g).unwrap();
        project(&mut next);
        let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        let w = (tk - 1.0) / tn;
        y = next.zip_map(&d, |n, o| n + w * (n - o)).unwrap();
        d = next;
        tk = tn;
    }
    naive_tprod(&d, a).sub(t).unwrap().fro_norm_sq()
}

/// `T = D₀ * A₀` for unit-norm Gaussian atoms and codes with `k` random
/// nonzero tubes per column.
pub fn planted_samples(n1: usize, n: usize, n3: usize, r: usize, k: usize, seed: u64) -> (Tensor3, Tensor3) {
    use rand::seq::index::sample;
    use rand_distr::{Distribution, StandardNormal};
    let d0 = tubalsr::dict::Dictionary::gaussian(n1, r, n3, seed).into_atoms();
    let mut g = rng(seed ^ 0xa0);
    let mut a0 = Tensor3::zeros(r, n, n3);
    for j in 0..n {
        for atom in sample(&mut g, r, k) {
            for v in a0.tube_mut(atom, j) {
                *v = StandardNormal.sample(&mut g);
            }
        }
    }
    let t = naive_tprod(&d0, &a0);
    (d0, t)
}
