//! ISTA-T: proximal gradient for the tensor lasso
//! `min_A ‖D * A − T‖²_F + λ‖A‖₁`.
//!
//! The gradient is `∇f(A) = 2·Dᵀ * (D * A − T)` and the step uses the
//! frequency-domain bound `L = Σ_k ‖D̂⁽ᵏ⁾ᴴ D̂⁽ᵏ⁾‖²_F`. When that bound is below
//! the actual Lipschitz constant of `∇f` (tiny dictionaries with spectral
//! norm under √2) the step falls back to the actual constant, otherwise the
//! iteration would not be a descent method.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{complex_singular_values, dft3, idft3, tprod, ttranspose, CMatrix, FreqTensor3, Tensor3};

/// Entries below this magnitude count as zero when reporting sparsity.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    pub code: Tensor3,
}

impl SparseCode {
    /// Fraction of coefficients with `|a| < 1e-12`.
    pub fn sparsity(&self) -> f64 {
        self.code.count_below(ZERO_TOL) as f64 / self.code.len() as f64
    }

    pub fn nonzeros(&self) -> usize {
        self.code.len() - self.code.count_below(ZERO_TOL)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IstaConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for IstaConfig {
    fn default() -> Self {
        IstaConfig {
            lambda: 0.1,
            max_iters: 500,
            rel_tol: 1e-8,
        }
    }
}

impl IstaConfig {
    pub fn new(lambda: f64) -> Self {
        IstaConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {} must be > 0", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("rel_tol {} < 0", self.rel_tol)));
        }
        Ok(())
    }
}

pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    debug_assert!(tau >= 0.0);
    x.signum() * (x.abs() - tau).max(0.0)
}

pub fn soft_threshold_tensor(t: &Tensor3, tau: f64) -> Tensor3 {
    t.map(|x| soft_threshold(x, tau))
}

/// Step-size diagnostics for a dictionary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzReport {
    /// `Σ_k ‖D̂⁽ᵏ⁾ᴴ D̂⁽ᵏ⁾‖²_F`
    pub frobenius_bound: f64,
    /// `max_k σ_max(D̂⁽ᵏ⁾)²`
    pub spectral: f64,
    /// Constant actually used for the step `1/L`.
    pub step_constant: f64,
}

impl LipschitzReport {
    /// Slack of the frequency bound over the per-slice spectral constant.
    pub fn slack_ratio(&self) -> f64 {
        self.frobenius_bound / self.spectral
    }
}

/// `L = Σ_k ‖D̂⁽ᵏ⁾ᴴ D̂⁽ᵏ⁾‖²_F`.
pub fn lipschitz_const(d: &Tensor3) -> Result<f64> {
    let fd = dft3(d)?;
    let l = frobenius_bound(&fd);
    if l == 0.0 {
        return Err(Error::Zero("dictionary"));
    }
    Ok(l)
}

fn frobenius_bound(fd: &FreqTensor3) -> f64 {
    fd.slices()
        .iter()
        .map(|s| (s.adjoint() * s).norm_squared())
        .sum()
}

fn spectral_bound(fd: &FreqTensor3) -> f64 {
    fd.slices()
        .iter()
        .map(|s| {
            let m = complex_singular_values(s).first().copied().unwrap_or(0.0);
            m * m
        })
        .fold(0.0, f64::max)
}

pub fn lipschitz_report(d: &Tensor3) -> Result<LipschitzReport> {
    let fd = dft3(d)?;
    report_from_freq(&fd)
}

fn report_from_freq(fd: &FreqTensor3) -> Result<LipschitzReport> {
    let frob = frobenius_bound(fd);
    if frob == 0.0 {
        return Err(Error::Zero("dictionary"));
    }
    let spectral = spectral_bound(fd);
    Ok(LipschitzReport {
        frobenius_bound: frob,
        spectral,
        // ∇f carries the factor 2, so its Lipschitz constant is 2σ²
        step_constant: frob.max(2.0 * spectral),
    })
}

/// `∇f(A) = 2·Dᵀ * (D * A − T)`.
pub fn grad_f(d: &Tensor3, a: &Tensor3, t: &Tensor3) -> Result<Tensor3> {
    check_shapes(d, a, t)?;
    let r = tprod(d, a)?.sub(t)?;
    Ok(tprod(&ttranspose(d), &r)?.scale(2.0))
}

/// `‖D * A − T‖²_F + λ‖A‖₁`.
pub fn objective(d: &Tensor3, a: &Tensor3, t: &Tensor3, lambda: f64) -> Result<f64> {
    check_shapes(d, a, t)?;
    let r = tprod(d, a)?.sub(t)?;
    Ok(r.fro_norm_sq() + lambda * a.l1_norm())
}

fn check_shapes(d: &Tensor3, a: &Tensor3, t: &Tensor3) -> Result<()> {
    let (n1, r, n3) = d.dims();
    if a.n1() != r || a.n3() != n3 || t.n1() != n1 || t.n2() != a.n2() || t.n3() != n3 {
        return Err(Error::dims(
            "sparse coding",
            format!("D {:?}, A {:?}, T {:?}", d.dims(), a.dims(), t.dims()),
        ));
    }
    Ok(())
}

/// A dictionary held in the frequency domain together with its step
/// constant, shared by ISTA-T and its unrolled variant.
#[derive(Clone, Debug)]
pub struct CodingOperator {
    dhat: Vec<CMatrix>,
    dims: (usize, usize, usize),
    lipschitz: LipschitzReport,
}

impl CodingOperator {
    pub fn new(d: &Tensor3) -> Result<Self> {
        let fd = dft3(d)?;
        let lipschitz = report_from_freq(&fd)?;
        Ok(CodingOperator {
            dims: d.dims(),
            dhat: fd.into_slices(),
            lipschitz,
        })
    }

    pub fn lipschitz(&self) -> LipschitzReport {
        self.lipschitz
    }

    pub fn step_constant(&self) -> f64 {
        self.lipschitz.step_constant
    }

    /// `(n1, r, n3)` of the dictionary.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    fn check_target(&self, t: &Tensor3) -> Result<()> {
        if t.n1() != self.dims.0 || t.n3() != self.dims.2 {
            return Err(Error::dims(
                "sparse coding",
                format!("dictionary {:?} vs target {:?}", self.dims, t.dims()),
            ));
        }
        Ok(())
    }

    /// `D * A`.
    pub fn forward(&self, a: &Tensor3) -> Result<Tensor3> {
        let fa = dft3(a)?;
        let slices = self.dhat.iter().zip(fa.slices()).map(|(d, a)| d * a).collect();
        idft3(&FreqTensor3::from_slices(slices)?)
    }

    /// `Dᵀ * X`.
    pub fn adjoint(&self, x: &Tensor3) -> Result<Tensor3> {
        let fx = dft3(x)?;
        let slices = self
            .dhat
            .iter()
            .zip(fx.slices())
            .map(|(d, x)| d.adjoint() * x)
            .collect();
        idft3(&FreqTensor3::from_slices(slices)?)
    }

    /// Residual `D̂Â − T̂` per slice, returned with `‖D * A − T‖²_F`.
    fn residual(&self, a: &Tensor3, that: &FreqTensor3) -> Result<(Vec<CMatrix>, f64)> {
        let fa = dft3(a)?;
        let n3 = self.dims.2 as f64;
        let res: Vec<CMatrix> = self
            .dhat
            .iter()
            .zip(fa.slices())
            .zip(that.slices())
            .map(|((d, a), t)| d * a - t)
            .collect();
        let sq = res.iter().map(|r| r.norm_squared()).sum::<f64>() / n3;
        Ok((res, sq))
    }

    fn gradient_from_residual(&self, res: &[CMatrix]) -> Result<Tensor3> {
        let two = Complex64::new(2.0, 0.0);
        let slices = self
            .dhat
            .iter()
            .zip(res)
            .map(|(d, r)| d.adjoint() * r * two)
            .collect();
        idft3(&FreqTensor3::from_slices(slices)?)
    }

    /// `A − (1/L)∇f(A)`: the gradient step before shrinkage.
    pub fn gradient_step(&self, a: &Tensor3, t: &Tensor3) -> Result<Tensor3> {
        self.check_target(t)?;
        let that = dft3(t)?;
        let (res, _) = self.residual(a, &that)?;
        let g = self.gradient_from_residual(&res)?;
        let inv_l = 1.0 / self.step_constant();
        a.zip_map(&g, |a, g| a - inv_l * g)
    }

    /// ISTA-T started from `init`.
    pub fn ista_from(&self, t: &Tensor3, cfg: &IstaConfig, init: &Tensor3) -> Result<IstaResult> {
        cfg.validate()?;
        self.check_target(t)?;
        if init.dims() != (self.dims.1, t.n2(), self.dims.2) {
            return Err(Error::dims(
                "ista_t",
                format!("initial code {:?}", init.dims()),
            ));
        }
        let that = dft3(t)?;
        let inv_l = 1.0 / self.step_constant();
        let tau = cfg.lambda / self.step_constant();

        let mut a = init.clone();
        let (mut res, sq) = self.residual(&a, &that)?;
        let mut obj = sq + cfg.lambda * a.l1_norm();
        let mut trace = vec![obj];
        let mut converged = false;
        let mut iterations = 0;

        for _ in 0..cfg.max_iters {
            let g = self.gradient_from_residual(&res)?;
            let next = a.zip_map(&g, |a, g| soft_threshold(a - inv_l * g, tau))?;
            let (next_res, sq) = self.residual(&next, &that)?;
            let next_obj = sq + cfg.lambda * next.l1_norm();
            if !next_obj.is_finite() {
                return Err(Error::NonFinite("ista_t iterate"));
            }
            let moved = next.sub(&a)?.fro_norm();
            iterations += 1;
            trace.push(next_obj);
            let decrease = (obj - next_obj) / obj.max(f64::MIN_POSITIVE);
            let settled = moved <= cfg.rel_tol * next.fro_norm();
            a = next;
            res = next_res;
            obj = next_obj;
            if obj == 0.0 || (decrease < cfg.rel_tol && settled) {
                converged = true;
                break;
            }
        }
        Ok(IstaResult {
            code: SparseCode { code: a },
            trace,
            iterations,
            converged,
            lipschitz: self.lipschitz,
        })
    }

    /// Unrolled ISTA-T from zero with one threshold per iteration
    /// (LISTA-T). With every threshold equal to `λ/L` this is exactly
    /// `ista_t` truncated to `thresholds.len()` iterations.
    pub fn unrolled(&self, t: &Tensor3, thresholds: &[f64]) -> Result<Tensor3> {
        Ok(self.unrolled_with_trace(t, thresholds)?.pop().expect("initial iterate"))
    }

    /// All iterates `A_0 = 0, A_1, …, A_K` of the unrolled solver.
    pub fn unrolled_with_trace(&self, t: &Tensor3, thresholds: &[f64]) -> Result<Vec<Tensor3>> {
        self.check_target(t)?;
        let that = dft3(t)?;
        let inv_l = 1.0 / self.step_constant();
        let mut a = Tensor3::zeros(self.dims.1, t.n2(), self.dims.2);
        let mut iterates = Vec::with_capacity(thresholds.len() + 1);
        for &tau in thresholds {
            let (res, _) = self.residual(&a, &that)?;
            let g = self.gradient_from_residual(&res)?;
            let next = a.zip_map(&g, |a, g| soft_threshold(a - inv_l * g, tau))?;
            next.check_finite("lista_t iterate")?;
            iterates.push(std::mem::replace(&mut a, next));
        }
        iterates.push(a);
        Ok(iterates)
    }
}

#[derive(Clone, Debug)]
pub struct IstaResult {
    pub code: SparseCode,
    /// Objective at the starting point followed by one value per iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Relative objective decrease and relative step both fell below
    /// `rel_tol` before `max_iters`.
    pub converged: bool,
    pub lipschitz: LipschitzReport,
}

impl IstaResult {
    pub fn final_objective(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// ISTA-T from `A₀ = 0`.
pub fn ista_t(d: &Tensor3, t: &Tensor3, cfg: &IstaConfig) -> Result<IstaResult> {
    let op = CodingOperator::new(d)?;
    let init = Tensor3::zeros(d.n2(), t.n2(), d.n3());
    op.ista_from(t, cfg, &init)
}

/// ISTA-T from a caller-supplied starting code.
pub fn ista_t_warm(d: &Tensor3, t: &Tensor3, cfg: &IstaConfig, init: &Tensor3) -> Result<IstaResult> {
    CodingOperator::new(d)?.ista_from(t, cfg, init)
}

/// Writes `iteration,objective` rows.
pub fn write_trace_csv<W: Write>(trace: &[f64], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iteration", "objective"])?;
    for (i, v) in trace.iter().enumerate() {
        wr.write_record([i.to_string(), format!("{v:e}")])?;
    }
    wr.flush()?;
    Ok(())
}
