//! Dictionary training: alternating ISTA-T sparse coding with a
//! frequency-domain dictionary update.
//!
//! With the codes fixed, the dictionary update
//!
//! ```text
//! min_D̂ Σ_k ‖T̂⁽ᵏ⁾ − D̂⁽ᵏ⁾Â⁽ᵏ⁾‖²_F   s.t.  Σ_k ‖D̂⁽ᵏ⁾(:, j)‖² ≤ c,  j ∈ [r]
//! ```
//!
//! decouples across frequency slices except for the per-atom constraints.
//! It is solved through its Lagrange dual in `λ ∈ ℝ^r_{≥0}`:
//! `D̂⁽ᵏ⁾(Λ) = T̂⁽ᵏ⁾Â⁽ᵏ⁾ᴴ (Â⁽ᵏ⁾Â⁽ᵏ⁾ᴴ + Λ)⁻¹` and
//! `g(Λ) = −Σ_k Tr(D̂⁽ᵏ⁾(Λ) Â⁽ᵏ⁾ T̂⁽ᵏ⁾ᴴ) − c Σ_j λ_j`, maximized by projected
//! Newton. The spatial constraint `‖D(:, j, :)‖²_F ≤ 1` maps to `c = n3`
//! under the unnormalized DFT.
//!
//! The outer loop warm-starts ISTA-T from the previous codes, which keeps the
//! training objective nonincreasing.

use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{objective, CodingOperator, IstaConfig};
use crate::tensor::{dft3, idft3, io, CMatrix, FreqTensor3, Tensor3};

/// Spatial per-atom bound `‖D(:, j, :)‖²_F ≤ 1`.
pub const ATOM_NORM_BOUND: f64 = 1.0;
/// Tolerance on the per-atom bound.
pub const ATOM_NORM_SLACK: f64 = 1e-9;
/// Ridge added to the negated Hessian before factorization.
const HESSIAN_RIDGE: f64 = 1e-10;
/// Newton stops once the KKT residual drops below this.
const NEWTON_TOL: f64 = 1e-11;
/// Reported as converged when the KKT residual is below this.
pub const KKT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    atoms: Tensor3,
}

impl Dictionary {
    /// Wraps `n1 × r × n3` atoms, checking the per-atom norm bound.
    pub fn new(atoms: Tensor3) -> Result<Self> {
        let d = Dictionary { atoms };
        if let Some((j, n)) = d
            .atom_norms_sq()
            .into_iter()
            .enumerate()
            .find(|(_, n)| *n > ATOM_NORM_BOUND + ATOM_NORM_SLACK)
        {
            return Err(Error::InvalidArgument(format!(
                "atom {j} has squared norm {n} > {ATOM_NORM_BOUND}"
            )));
        }
        Ok(d)
    }

    /// Seeded i.i.d. N(0, 1) atoms scaled to unit norm.
    pub fn gaussian(n1: usize, r: usize, n3: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Tensor3::from_fn(n1, r, n3, |_, _, _| StandardNormal.sample(&mut rng));
        Dictionary {
            atoms: normalize_atoms(&raw, true),
        }
    }

    pub fn atoms(&self) -> &Tensor3 {
        &self.atoms
    }

    pub fn into_atoms(self) -> Tensor3 {
        self.atoms
    }

    pub fn r(&self) -> usize {
        self.atoms.n2()
    }

    pub fn atom_norms_sq(&self) -> Vec<f64> {
        atom_norms_sq(&self.atoms)
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: &DictionaryMeta) -> Result<()> {
        let path = path.as_ref();
        io::save_tns3(&self.atoms, path)?;
        fs::write(sidecar(path), serde_json::to_string_pretty(meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, DictionaryMeta)> {
        let path = path.as_ref();
        let atoms = io::load_tns3(path)?;
        let meta: DictionaryMeta = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
        if meta.r != atoms.n2() {
            return Err(Error::Format(format!(
                "sidecar says r = {}, tensor has {}",
                meta.r,
                atoms.n2()
            )));
        }
        Ok((Dictionary::new(atoms)?, meta))
    }
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// JSON sidecar stored next to a dictionary's TNS3 file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryMeta {
    pub r: usize,
    pub lambda: f64,
    pub iters: usize,
    pub seed: u64,
    pub constraint_bound: f64,
}

fn atom_norms_sq(atoms: &Tensor3) -> Vec<f64> {
    let (n1, r, _) = atoms.dims();
    (0..r)
        .map(|j| {
            (0..n1)
                .map(|i| atoms.tube(i, j).iter().map(|v| v * v).sum::<f64>())
                .sum()
        })
        .collect()
}

/// Rescales atoms to unit norm; with `all == false` only atoms above the
/// bound are touched.
fn normalize_atoms(atoms: &Tensor3, all: bool) -> Tensor3 {
    let norms = atom_norms_sq(atoms);
    let mut out = atoms.clone();
    let (n1, r, _) = atoms.dims();
    for (j, &n) in norms.iter().enumerate().take(r) {
        if n > 0.0 && (all || n > ATOM_NORM_BOUND) {
            let s = (ATOM_NORM_BOUND / n).sqrt();
            for i in 0..n1 {
                out.tube_mut(i, j).iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    out
}

/// Coupled dictionaries sharing one sparse code.
///
/// Both blocks are stored in the units they were trained in: a coarse patch
/// is multiplied by `coarse_scale` before coding and the fine reconstruction
/// is divided by `fine_scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct DictionaryPair {
    pub fine: Dictionary,
    pub coarse: Dictionary,
    pub fine_scale: f64,
    pub coarse_scale: f64,
}

impl DictionaryPair {
    pub fn new(fine: Dictionary, coarse: Dictionary, fine_scale: f64, coarse_scale: f64) -> Result<Self> {
        if fine.r() != coarse.r() || fine.atoms.n3() != coarse.atoms.n3() {
            return Err(Error::dims(
                "DictionaryPair",
                format!("fine {:?} vs coarse {:?}", fine.atoms.dims(), coarse.atoms.dims()),
            ));
        }
        if !(fine_scale > 0.0 && coarse_scale > 0.0) {
            return Err(Error::InvalidArgument("block scales must be positive".into()));
        }
        Ok(DictionaryPair {
            fine,
            coarse,
            fine_scale,
            coarse_scale,
        })
    }

    pub fn r(&self) -> usize {
        self.fine.r()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualVariables {
    pub lambdas: Vec<f64>,
}

impl DualVariables {
    pub fn zeros(r: usize) -> Self {
        DualVariables {
            lambdas: vec![0.0; r],
        }
    }

    fn check(&self, r: usize) -> Result<()> {
        if self.lambdas.len() != r {
            return Err(Error::dims(
                "dual variables",
                format!("{} multipliers for {r} atoms", self.lambdas.len()),
            ));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument("dual variables must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Per-slice sufficient statistics of the dictionary subproblem:
/// `M_k = T̂⁽ᵏ⁾Â⁽ᵏ⁾ᴴ` and `G_k = Â⁽ᵏ⁾Â⁽ᵏ⁾ᴴ`.
#[derive(Clone, Debug)]
pub struct DualProblem {
    cross: Vec<CMatrix>,
    gram: Vec<CMatrix>,
    r: usize,
    n3: usize,
}

#[derive(Clone, Debug)]
pub struct DualEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub dual: DualVariables,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// `max_j λ_j·|‖D(:, j, :)‖²_F − 1|`
    pub complementary_slackness: f64,
    pub converged: bool,
    /// Set when a Hessian could not be factored and gradient ascent was used.
    pub used_gradient_fallback: bool,
}

impl DualProblem {
    pub fn new(t_hat: &FreqTensor3, a_hat: &FreqTensor3) -> Result<Self> {
        let (_, nt, n3) = t_hat.dims();
        let (r, na, n3a) = a_hat.dims();
        if nt != na || n3 != n3a {
            return Err(Error::dims(
                "dictionary update",
                format!("T̂ {:?} vs Â {:?}", t_hat.dims(), a_hat.dims()),
            ));
        }
        let mut cross = Vec::with_capacity(n3);
        let mut gram = Vec::with_capacity(n3);
        for (t, a) in t_hat.slices().iter().zip(a_hat.slices()) {
            let ah = a.adjoint();
            cross.push(t * &ah);
            gram.push(a * &ah);
        }
        Ok(DualProblem {
            cross,
            gram,
            r,
            n3,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Frequency-domain atom bound `c = n3 · 1`.
    pub fn bound(&self) -> f64 {
        self.n3 as f64 * ATOM_NORM_BOUND
    }

    fn factor(&self, k: usize, dual: &DualVariables) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
        let mut s = self.gram[k].clone();
        for (j, &l) in dual.lambdas.iter().enumerate() {
            s[(j, j)] += Complex64::new(l, 0.0);
        }
        Cholesky::new(s).ok_or(Error::Singular("dictionary update (ÂÂᴴ + Λ)"))
    }

    /// Per-slice `(D̂⁽ᵏ⁾, (ÂÂᴴ + Λ)⁻¹)`.
    fn solve_slices(&self, dual: &DualVariables) -> Result<Vec<(CMatrix, CMatrix)>> {
        dual.check(self.r)?;
        let n3 = self.n3;
        let mut half: Vec<(CMatrix, CMatrix)> = (0..=n3 / 2)
            .map(|k| {
                let chol = self.factor(k, dual)?;
                let inv = chol.inverse();
                // S is Hermitian, so D̂ᴴ = S⁻¹ Mᴴ
                let d = chol.solve(&self.cross[k].adjoint()).adjoint();
                if d.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Singular("dictionary update (ÂÂᴴ + Λ)"));
                }
                Ok((d, inv))
            })
            .collect::<Result<_>>()?;
        // real samples: slice n3−k is the conjugate of slice k
        for k in [0, n3 / 2] {
            if 2 * k % n3 == 0 {
                let (d, inv) = &mut half[k];
                d.iter_mut().for_each(|z| z.im = 0.0);
                inv.iter_mut().for_each(|z| z.im = 0.0);
            }
        }
        for k in n3 / 2 + 1..n3 {
            let (d, inv) = &half[n3 - k];
            half.push((d.conjugate(), inv.conjugate()));
        }
        Ok(half)
    }

    pub fn dictionary(&self, dual: &DualVariables) -> Result<FreqTensor3> {
        let slices = self.solve_slices(dual)?.into_iter().map(|(d, _)| d).collect();
        FreqTensor3::from_slices(slices)
    }

    pub fn evaluate(&self, dual: &DualVariables) -> Result<DualEval> {
        let solved = self.solve_slices(dual)?;
        let r = self.r;
        let c = self.bound();
        let mut value = -c * dual.lambdas.iter().sum::<f64>();
        let mut gradient = vec![-c; r];
        let mut hessian = DMatrix::<f64>::zeros(r, r);
        for (k, (d, p)) in solved.iter().enumerate() {
            // Tr(D̂ Mᴴ) = Tr(M S⁻¹ Mᴴ)
            let tr: Complex64 = d
                .iter()
                .zip(self.cross[k].iter())
                .map(|(a, b)| a * b.conj())
                .sum();
            value -= tr.re;
            let q = d.adjoint() * d;
            for i in 0..r {
                gradient[i] += q[(i, i)].re;
                for j in 0..r {
                    hessian[(i, j)] -= 2.0 * (p[(i, j)].conj() * q[(i, j)]).re;
                }
            }
        }
        Ok(DualEval {
            value,
            gradient,
            hessian,
        })
    }

    /// Spatial constraint slack `‖D(:, j, :)‖²_F − 1` from a dual gradient.
    fn slack(&self, gradient: &[f64]) -> Vec<f64> {
        gradient.iter().map(|g| g / self.n3 as f64).collect()
    }

    fn kkt(&self, dual: &DualVariables, gradient: &[f64]) -> (f64, f64) {
        let slack = self.slack(gradient);
        let mut residual: f64 = 0.0;
        let mut compl: f64 = 0.0;
        for (&l, &s) in dual.lambdas.iter().zip(&slack) {
            let rj = if l > 0.0 { s.abs() } else { s.max(0.0) };
            residual = residual.max(rj);
            compl = compl.max(l * s.abs());
        }
        (residual, compl)
    }

    /// Projected Newton ascent on the dual, with backtracking on the dual
    /// value. Multipliers at zero with a nonpositive gradient are held fixed.
    pub fn solve_newton(&self, init: &DualVariables, iters: usize) -> Result<NewtonOutcome> {
        init.check(self.r)?;
        let r = self.r;
        let mut dual = init.clone();
        let mut eval = match self.evaluate(&dual) {
            Ok(e) => e,
            Err(Error::Singular(_)) => {
                // lift off the singular boundary by a tiny relative ridge
                let scale = (0..self.n3)
                    .map(|k| self.gram[k].diagonal().iter().map(|z| z.re).sum::<f64>())
                    .sum::<f64>()
                    / (r * self.n3) as f64;
                let lift = 1e-8 * scale.max(f64::MIN_POSITIVE);
                dual.lambdas.iter_mut().for_each(|l| *l = l.max(lift));
                self.evaluate(&dual)?
            }
            Err(e) => return Err(e),
        };
        let mut fallback = false;
        let mut iterations = 0;
        let mut grad_step = 1.0 / (eval.hessian.norm() + 1e-12);

        for _ in 0..iters {
            let (res, _) = self.kkt(&dual, &eval.gradient);
            if res < NEWTON_TOL {
                break;
            }
            iterations += 1;
            let free: Vec<usize> = (0..r)
                .filter(|&j| dual.lambdas[j] > 0.0 || eval.gradient[j] > 0.0)
                .collect();
            if free.is_empty() {
                break;
            }
            let neg_h = DMatrix::from_fn(free.len(), free.len(), |a, b| {
                let v = -eval.hessian[(free[a], free[b])];
                if a == b {
                    v + HESSIAN_RIDGE
                } else {
                    v
                }
            });
            let g_free = nalgebra::DVector::from_iterator(
                free.len(),
                free.iter().map(|&j| eval.gradient[j]),
            );
            let direction = match Cholesky::new(neg_h) {
                Some(ch) => ch.solve(&g_free),
                None => {
                    fallback = true;
                    grad_step *= 0.5;
                    &g_free * grad_step
                }
            };

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = dual.clone();
                for (idx, &j) in free.iter().enumerate() {
                    trial.lambdas[j] = (dual.lambdas[j] + t * direction[idx]).max(0.0);
                }
                if let Ok(te) = self.evaluate(&trial) {
                    if te.value >= eval.value - 1e-14 * eval.value.abs() {
                        accepted = Some((trial, te));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((d, e)) => {
                    let stalled = d == dual;
                    dual = d;
                    eval = e;
                    if stalled {
                        break;
                    }
                }
                None => break,
            }
        }
        let (kkt_residual, complementary_slackness) = self.kkt(&dual, &eval.gradient);
        Ok(NewtonOutcome {
            dual,
            iterations,
            kkt_residual,
            complementary_slackness,
            converged: kkt_residual < KKT_TOL,
            used_gradient_fallback: fallback,
        })
    }
}

/// `D̂⁽ᵏ⁾ = (T̂⁽ᵏ⁾Â⁽ᵏ⁾ᴴ)(Â⁽ᵏ⁾Â⁽ᵏ⁾ᴴ + Λ)⁻¹` for every slice.
pub fn dict_from_dual(
    t_hat: &FreqTensor3,
    a_hat: &FreqTensor3,
    dual: &DualVariables,
) -> Result<FreqTensor3> {
    DualProblem::new(t_hat, a_hat)?.dictionary(dual)
}

/// Dual value, gradient and Hessian at `dual`.
pub fn dual_objective(
    dual: &DualVariables,
    t_hat: &FreqTensor3,
    a_hat: &FreqTensor3,
) -> Result<DualEval> {
    DualProblem::new(t_hat, a_hat)?.evaluate(dual)
}

pub fn newton_solve_dual(
    t_hat: &FreqTensor3,
    a_hat: &FreqTensor3,
    init: &DualVariables,
    iters: usize,
) -> Result<NewtonOutcome> {
    DualProblem::new(t_hat, a_hat)?.solve_newton(init, iters)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub r: usize,
    /// Outer alternations.
    pub iters: usize,
    pub ista: IstaConfig,
    pub newton_iters: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut cfg = TrainConfig::new(32, 0.001, 20, 0);
        cfg.ista.max_iters = 200;
        cfg
    }
}

impl TrainConfig {
    pub fn new(r: usize, lambda: f64, iters: usize, seed: u64) -> Self {
        TrainConfig {
            r,
            iters,
            ista: IstaConfig::new(lambda),
            newton_iters: 50,
            seed,
        }
    }

    pub fn meta(&self) -> DictionaryMeta {
        DictionaryMeta {
            r: self.r,
            lambda: self.ista.lambda,
            iters: self.iters,
            seed: self.seed,
            constraint_bound: ATOM_NORM_BOUND,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub dictionary: Dictionary,
    pub code: Tensor3,
    /// Training objective at initialization and after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// Worst KKT residual seen across dictionary updates.
    pub worst_kkt: f64,
    pub newton_fallbacks: usize,
}

impl TrainReport {
    /// `‖D * A − T‖_F / ‖T‖_F` for the final pair.
    pub fn relative_error(&self, samples: &Tensor3) -> Result<f64> {
        let op = CodingOperator::new(self.dictionary.atoms())?;
        Ok(op.forward(&self.code)?.sub(samples)?.fro_norm() / samples.fro_norm())
    }
}

/// Alternating minimization over `(D, A)` for `samples` laid out as
/// `n1 × patches × n3`.
pub fn train_dictionary(samples: &Tensor3, cfg: &TrainConfig) -> Result<TrainReport> {
    if cfg.iters == 0 || cfg.r == 0 {
        return Err(Error::InvalidArgument("r and iters must be >= 1".into()));
    }
    cfg.ista.validate()?;
    if samples.fro_norm() == 0.0 {
        return Err(Error::Zero("training samples"));
    }
    let (n1, n, n3) = samples.dims();
    let lambda = cfg.ista.lambda;
    let mut dict = Dictionary::gaussian(n1, cfg.r, n3, cfg.seed);
    let mut code = Tensor3::zeros(cfg.r, n, n3);
    let mut trace = vec![objective(dict.atoms(), &code, samples, lambda)?];
    let t_hat = dft3(samples)?;
    let mut worst_kkt: f64 = 0.0;
    let mut fallbacks = 0;

    for _ in 0..cfg.iters {
        let op = CodingOperator::new(dict.atoms())?;
        code = op.ista_from(samples, &cfg.ista, &code)?.code.code;
        let current = objective(dict.atoms(), &code, samples, lambda)?;

        let active: Vec<usize> = (0..cfg.r)
            .filter(|&j| (0..n).any(|p| code.tube(j, p).iter().any(|v| *v != 0.0)))
            .collect();
        let mut next_obj = current;
        if !active.is_empty() {
            let a_active = select_rows(&code, &active);
            let problem = DualProblem::new(&t_hat, &dft3(&a_active)?)?;
            let outcome = problem.solve_newton(&DualVariables::zeros(active.len()), cfg.newton_iters)?;
            worst_kkt = worst_kkt.max(outcome.kkt_residual);
            fallbacks += usize::from(outcome.used_gradient_fallback);
            let updated = normalize_atoms(&idft3(&problem.dictionary(&outcome.dual)?)?, false);
            let mut candidate = dict.atoms().clone();
            for (jj, &j) in active.iter().enumerate() {
                for i in 0..n1 {
                    candidate.tube_mut(i, j).copy_from_slice(updated.tube(i, jj));
                }
            }
            let cand_obj = objective(&candidate, &code, samples, lambda)?;
            // the update is an exact minimizer, so a rise only reflects
            // round-off; keep the previous atoms in that case
            if cand_obj <= current {
                dict = Dictionary { atoms: candidate };
                next_obj = cand_obj;
            }
        }
        trace.push(next_obj);
    }
    Ok(TrainReport {
        dictionary: dict,
        code,
        objective_trace: trace,
        worst_kkt,
        newton_fallbacks: fallbacks,
    })
}

fn select_rows(t: &Tensor3, rows: &[usize]) -> Tensor3 {
    let parts: Vec<Tensor3> = rows.iter().map(|&j| t.row_range(j, j + 1)).collect();
    Tensor3::concat_rows(&parts).expect("rows share n2/n3")
}

/// Trains one dictionary on fine patches stacked over coarse patches (each
/// block scaled by `1/√rows`) and splits it into a coupled pair.
pub fn train_joint(
    fine_patches: &Tensor3,
    coarse_patches: &Tensor3,
    cfg: &TrainConfig,
) -> Result<(DictionaryPair, TrainReport)> {
    if fine_patches.n2() != coarse_patches.n2() {
        return Err(Error::dims(
            "train_joint",
            format!(
                "{} fine patches vs {} coarse patches",
                fine_patches.n2(),
                coarse_patches.n2()
            ),
        ));
    }
    if fine_patches.n3() != coarse_patches.n3() {
        return Err(Error::dims("train_joint", "patch depth differs"));
    }
    let nf = fine_patches.n1();
    let fine_scale = 1.0 / (nf as f64).sqrt();
    let coarse_scale = 1.0 / (coarse_patches.n1() as f64).sqrt();
    let stacked = Tensor3::concat_rows(&[
        fine_patches.scale(fine_scale),
        coarse_patches.scale(coarse_scale),
    ])?;
    let report = train_dictionary(&stacked, cfg)?;
    let atoms = report.dictionary.atoms();
    let fine = Dictionary::new(atoms.row_range(0, nf))?;
    let coarse = Dictionary::new(atoms.row_range(nf, atoms.n1()))?;
    Ok((DictionaryPair::new(fine, coarse, fine_scale, coarse_scale)?, report))
}
