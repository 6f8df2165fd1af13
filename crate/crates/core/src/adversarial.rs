//! Adversarial refinement of the sparse-coding generator.
//!
//! The generator is LISTA-T on the frozen coarse dictionary, synthesis with
//! the frozen fine dictionary, and a learned linear map over patch cells.
//! Its trainable parameters are the per-iteration thresholds and that map.
//! The discriminator is a small fully connected network on flattened fine
//! patches. All gradients are derived by hand.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiomap::RadioMap;
use crate::sparse::CodingOperator;
use crate::sr::{extract_patches, super_resolve_with, PatchGrid, SrModel};
use crate::tensor::{io, Tensor3};

const LEAK: f64 = 0.2;
/// Probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]` inside the losses.
pub const P_CLAMP: f64 = 1e-7;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAK * z
    }
}

fn leaky_slope(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAK
    }
}

/// `−ln clamp(σ(z))` for `real = true`, `−ln(1 − clamp(σ(z)))` otherwise,
/// with its derivative in `z` (zero where the clamp is active).
fn bce(z: f64, real: bool) -> (f64, f64) {
    let p = sigmoid(z);
    let pc = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let active = pc == p;
    if real {
        (-pc.ln(), if active { p - 1.0 } else { 0.0 })
    } else {
        (-(1.0 - pc).ln(), if active { p } else { 0.0 })
    }
}

/// Column `j` of a `rows × cols × n3` tensor, flattened cell-major.
fn flatten_column(t: &Tensor3, j: usize) -> Vec<f64> {
    (0..t.n1()).flat_map(|i| t.tube(i, j).iter().copied()).collect()
}

/// `input → h1 → h2 → 1` with leaky-rectifier hidden layers and a logistic
/// output. Parameters live in one flat vector:
/// `W1 (h1×input), b1, W2 (h2×h1), b2, w3 (h2), b3`, matrices row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub input: usize,
    pub h1: usize,
    pub h2: usize,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DiscManifest {
    input: usize,
    h1: usize,
    h2: usize,
    params: usize,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

struct DiscTrace {
    x: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    z3: f64,
}

impl Discriminator {
    fn layout(input: usize, h1: usize, h2: usize) -> Layout {
        let w1 = 0;
        let b1 = w1 + h1 * input;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + h2;
        Layout { w1, b1, w2, b2, w3, b3, len: b3 + 1 }
    }

    pub fn zeros(input: usize, h1: usize, h2: usize) -> Self {
        Discriminator {
            input,
            h1,
            h2,
            params: vec![0.0; Self::layout(input, h1, h2).len],
        }
    }

    /// He-scaled Gaussian weights, zero biases.
    pub fn random(input: usize, h1: usize, h2: usize, seed: u64) -> Self {
        let mut d = Self::zeros(input, h1, h2);
        let l = Self::layout(input, h1, h2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (range, fan_in) in [(l.w1..l.b1, input), (l.w2..l.b2, h1), (l.w3..l.b3, h2)] {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive sd");
            for p in &mut d.params[range] {
                *p = normal.sample(&mut rng);
            }
        }
        d
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Multiplies the output-layer weights and bias, scaling every logit.
    pub fn scale_output(&mut self, s: f64) {
        let l = Self::layout(self.input, self.h1, self.h2);
        self.params[l.w3..].iter_mut().for_each(|p| *p *= s);
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input {
            return Err(Error::dims(
                "discriminator",
                format!("input of {} values, network expects {}", x.len(), self.input),
            ));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> DiscTrace {
        let l = Self::layout(self.input, self.h1, self.h2);
        let p = &self.params;
        let z1: Vec<f64> = (0..self.h1)
            .map(|h| {
                let row = &p[l.w1 + h * self.input..l.w1 + (h + 1) * self.input];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[l.b1 + h]
            })
            .collect();
        let a1: Vec<f64> = z1.iter().map(|&z| leaky(z)).collect();
        let z2: Vec<f64> = (0..self.h2)
            .map(|h| {
                let row = &p[l.w2 + h * self.h1..l.w2 + (h + 1) * self.h1];
                row.iter().zip(&a1).map(|(w, v)| w * v).sum::<f64>() + p[l.b2 + h]
            })
            .collect();
        let a2: Vec<f64> = z2.iter().map(|&z| leaky(z)).collect();
        let z3 = p[l.w3..l.b3].iter().zip(&a2).map(|(w, v)| w * v).sum::<f64>() + p[l.b3];
        DiscTrace {
            x: x.to_vec(),
            z1,
            a1,
            z2,
            a2,
            z3,
        }
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.trace(x).z3)
    }

    /// Probability that `x` is a real fine patch.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Accumulates `dz3 · ∂z3/∂θ` into `grad` (if given) and returns
    /// `dz3 · ∂z3/∂x`.
    fn backward(&self, t: &DiscTrace, dz3: f64, grad: Option<&mut [f64]>) -> Vec<f64> {
        let l = Self::layout(self.input, self.h1, self.h2);
        let p = &self.params;
        let dz2: Vec<f64> = (0..self.h2)
            .map(|h| dz3 * p[l.w3 + h] * leaky_slope(t.z2[h]))
            .collect();
        let dz1: Vec<f64> = (0..self.h1)
            .map(|g| {
                let da: f64 = (0..self.h2).map(|h| p[l.w2 + h * self.h1 + g] * dz2[h]).sum();
                da * leaky_slope(t.z1[g])
            })
            .collect();
        if let Some(grad) = grad {
            for h in 0..self.h2 {
                grad[l.w3 + h] += dz3 * t.a2[h];
                grad[l.b2 + h] += dz2[h];
                for g in 0..self.h1 {
                    grad[l.w2 + h * self.h1 + g] += dz2[h] * t.a1[g];
                }
            }
            grad[l.b3] += dz3;
            for g in 0..self.h1 {
                grad[l.b1 + g] += dz1[g];
                let row = &mut grad[l.w1 + g * self.input..l.w1 + (g + 1) * self.input];
                for (r, v) in row.iter_mut().zip(&t.x) {
                    *r += dz1[g] * v;
                }
            }
        }
        (0..self.input)
            .map(|i| (0..self.h1).map(|g| p[l.w1 + g * self.input + i] * dz1[g]).sum())
            .collect()
    }

    /// `−mean ln D(real) − mean ln(1 − D(fake))` and its parameter gradient.
    pub fn loss_grad(&self, real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        if real.is_empty() || fake.is_empty() {
            return Err(Error::InvalidArgument("empty discriminator batch".into()));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (set, is_real) in [(real, true), (fake, false)] {
            let w = 1.0 / set.len() as f64;
            for x in set {
                self.check_input(x)?;
                let t = self.trace(x);
                let (l, dl) = bce(t.z3, is_real);
                loss += w * l;
                self.backward(&t, w * dl, Some(&mut grad));
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("discriminator loss"));
        }
        Ok((loss, grad))
    }

    /// Fraction of real inputs scored above ½ and fake inputs scored below.
    pub fn accuracy(&self, real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<f64> {
        let mut hits = 0usize;
        for x in real {
            hits += usize::from(self.logit(x)? > 0.0);
        }
        for x in fake {
            hits += usize::from(self.logit(x)? < 0.0);
        }
        Ok(hits as f64 / (real.len() + fake.len()) as f64)
    }

    /// `<path>` holds the parameters as a `len × 1 × 1` TNS3 tensor,
    /// `<path>.json` the layer sizes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let t = Tensor3::from_vec(self.params.len(), 1, 1, self.params.clone())?;
        io::save_tns3(&t, path)?;
        let m = DiscManifest {
            input: self.input,
            h1: self.h1,
            h2: self.h2,
            params: self.params.len(),
        };
        fs::write(path.with_extension("json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m: DiscManifest = serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
        let t = io::load_tns3(path)?;
        if t.len() != m.params || m.params != Self::layout(m.input, m.h1, m.h2).len {
            return Err(Error::Format("discriminator parameter count mismatch".into()));
        }
        Ok(Discriminator {
            input: m.input,
            h1: m.h1,
            h2: m.h2,
            params: t.into_vec(),
        })
    }
}

/// The frozen dictionary stage of the generator.
#[derive(Clone, Debug)]
pub struct FrozenPair {
    pub coarse: CodingOperator,
    pub fine: CodingOperator,
    /// `1 / fine_scale`: maps synthesized patches back to normalized units.
    pub inv_fine: f64,
}

impl FrozenPair {
    pub fn new(model: &SrModel) -> Result<Self> {
        Ok(FrozenPair {
            coarse: model.coarse_operator()?,
            fine: model.fine_operator()?,
            inv_fine: 1.0 / model.pair.fine_scale,
        })
    }

    fn fine_rows(&self) -> usize {
        self.fine.dims().0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorRefiner {
    /// LISTA-T threshold of each unrolled iteration.
    pub thresholds: Vec<f64>,
    /// Linear map over the cells of a fine patch, applied to every AP slice.
    pub w: DMatrix<f64>,
}

struct GenTrace {
    iterates: Vec<Tensor3>,
    /// Pre-shrinkage values `A_t − (1/L)∇f(A_t)`.
    pre: Vec<Tensor3>,
    /// Synthesized fine patches before the linear map.
    y: Tensor3,
}

impl GeneratorRefiner {
    /// `k` thresholds equal to `λ / L` and `W = I`: the generator then
    /// reproduces ISTA-T with `k` iterations exactly.
    pub fn identity(frozen: &FrozenPair, k: usize, lambda: f64) -> Self {
        GeneratorRefiner {
            thresholds: vec![lambda / frozen.coarse.step_constant(); k],
            w: DMatrix::identity(frozen.fine_rows(), frozen.fine_rows()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.thresholds.len() + self.w.len()
    }

    /// Thresholds followed by `W` in column-major order.
    pub fn params(&self) -> Vec<f64> {
        self.thresholds.iter().chain(self.w.iter()).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let k = self.thresholds.len();
        self.thresholds.copy_from_slice(&p[..k]);
        self.w.as_mut_slice().copy_from_slice(&p[k..]);
    }

    fn check(&self, frozen: &FrozenPair) -> Result<()> {
        let f = frozen.fine_rows();
        if self.w.shape() != (f, f) {
            return Err(Error::dims(
                "generator",
                format!("refiner map {:?} for {f}-cell fine patches", self.w.shape()),
            ));
        }
        Ok(())
    }

    fn apply_w(&self, y: &Tensor3) -> Tensor3 {
        let (f, n, n3) = y.dims();
        let mut x = Tensor3::zeros(f, n, n3);
        for a in 0..f {
            for b in 0..f {
                let w = self.w[(a, b)];
                if w == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let src = y.tube(b, j).to_vec();
                    for (o, v) in x.tube_mut(a, j).iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            }
        }
        x
    }

    fn trace(&self, frozen: &FrozenPair, coarse: &Tensor3) -> Result<(GenTrace, Tensor3)> {
        self.check(frozen)?;
        let iterates = frozen.coarse.unrolled_with_trace(coarse, &self.thresholds)?;
        let pre = iterates[..self.thresholds.len()]
            .iter()
            .map(|a| frozen.coarse.gradient_step(a, coarse))
            .collect::<Result<Vec<_>>>()?;
        let code = iterates.last().expect("initial iterate");
        let y = frozen.fine.forward(code)?.scale(frozen.inv_fine);
        let x = self.apply_w(&y);
        Ok((GenTrace { iterates, pre, y }, x))
    }

    /// Fine patches (normalized units) for coarse patches scaled by the
    /// coarse block factor, one per lateral slice.
    pub fn generate(&self, frozen: &FrozenPair, coarse: &Tensor3) -> Result<Tensor3> {
        self.check(frozen)?;
        let code = frozen.coarse.unrolled(coarse, &self.thresholds)?;
        let y = frozen.fine.forward(&code)?.scale(frozen.inv_fine);
        Ok(self.apply_w(&y))
    }

    /// Parameter gradient given `dx = ∂loss/∂output`.
    fn backward(&self, frozen: &FrozenPair, t: &GenTrace, dx: &Tensor3) -> Result<Vec<f64>> {
        let (f, n, _) = dx.dims();
        let k = self.thresholds.len();
        let mut grad = vec![0.0; self.param_count()];
        let mut dy = Tensor3::zeros(f, n, dx.n3());
        for a in 0..f {
            for b in 0..f {
                let w = self.w[(a, b)];
                let mut gw = 0.0;
                for j in 0..n {
                    let (ga, yb) = (dx.tube(a, j), t.y.tube(b, j));
                    gw += ga.iter().zip(yb).map(|(g, y)| g * y).sum::<f64>();
                    if w != 0.0 {
                        for (o, g) in dy.tube_mut(b, j).iter_mut().zip(ga) {
                            *o += w * g;
                        }
                    }
                }
                grad[k + b * f + a] = gw;
            }
        }
        let mut da = frozen.fine.adjoint(&dy)?.scale(frozen.inv_fine);
        let two_over_l = 2.0 / frozen.coarse.step_constant();
        for s in (0..k).rev() {
            let tau = self.thresholds[s];
            let z = &t.pre[s];
            let mut dtau = 0.0;
            let gz = z.zip_map(&da, |z, g| if z.abs() > tau { g } else { 0.0 })?;
            for (z, g) in z.as_slice().iter().zip(da.as_slice()) {
                if z.abs() > tau {
                    dtau -= z.signum() * g;
                }
            }
            grad[s] = dtau;
            if s > 0 {
                let back = frozen.coarse.adjoint(&frozen.coarse.forward(&gz)?)?;
                da = gz.zip_map(&back, |g, b| g - two_over_l * b)?;
            }
        }
        debug_assert_eq!(t.iterates.len(), k + 1);
        Ok(grad)
    }

    /// Generator loss `content_weight · mean‖G(T) − T′‖²_F
    /// + η · mean(−ln D(G(T)))` and its parameter gradient.
    pub fn loss_grad(
        &self,
        frozen: &FrozenPair,
        disc: &Discriminator,
        coarse: &Tensor3,
        fine: &Tensor3,
        content_weight: f64,
        eta: f64,
    ) -> Result<(GenLoss, Vec<f64>)> {
        let (t, x) = self.trace(frozen, coarse)?;
        if x.dims() != fine.dims() {
            return Err(Error::dims(
                "generator loss",
                format!("output {:?} vs target {:?}", x.dims(), fine.dims()),
            ));
        }
        let n = x.n2();
        if n == 0 {
            return Err(Error::InvalidArgument("empty generator batch".into()));
        }
        let inv_n = 1.0 / n as f64;
        let diff = x.sub(fine)?;
        let content = diff.fro_norm_sq() * inv_n;
        let mut dx = diff.scale(2.0 * content_weight * inv_n);
        let mut adversarial = 0.0;
        if eta != 0.0 {
            for j in 0..n {
                let xs = flatten_column(&x, j);
                disc.check_input(&xs)?;
                let dt = disc.trace(&xs);
                let (l, dl) = bce(dt.z3, true);
                adversarial += inv_n * l;
                let dxs = disc.backward(&dt, eta * inv_n * dl, None);
                let n3 = x.n3();
                for (idx, g) in dxs.into_iter().enumerate() {
                    dx.tube_mut(idx / n3, j)[idx % n3] += g;
                }
            }
        }
        let loss = GenLoss {
            content,
            adversarial,
            total: content_weight * content + eta * adversarial,
        };
        if !loss.total.is_finite() {
            return Err(Error::NonFinite("generator loss"));
        }
        Ok((loss, self.backward(frozen, &t, &dx)?))
    }

    /// `<path>` holds `W` as an `f × f × 1` TNS3 tensor, `<path>.json` the
    /// thresholds.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = self.w.nrows();
        let t = Tensor3::from_fn(f, f, 1, |i, j, _| self.w[(i, j)]);
        io::save_tns3(&t, path)?;
        fs::write(path.with_extension("json"), serde_json::to_string_pretty(&self.thresholds)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let thresholds: Vec<f64> = serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
        let t = io::load_tns3(path)?;
        if t.n1() != t.n2() || t.n3() != 1 {
            return Err(Error::Format(format!("refiner map has dims {:?}", t.dims())));
        }
        let f = t.n1();
        Ok(GeneratorRefiner {
            thresholds,
            w: DMatrix::from_fn(f, f, |i, j| t[(i, j, 0)]),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenLoss {
    pub content: f64,
    pub adversarial: f64,
    pub total: f64,
}

/// Super-resolution with the refined generator in place of ISTA-T.
pub fn super_resolve_refined(
    coarse: &RadioMap,
    model: &SrModel,
    frozen: &FrozenPair,
    refiner: &GeneratorRefiner,
) -> Result<RadioMap> {
    super_resolve_with(coarse, model, |patch| refiner.generate(frozen, patch))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TganConfig {
    pub content_weight: f64,
    /// Adversarial loss weight `η`.
    pub eta: f64,
    pub learning_rate: f64,
    pub disc_learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Discriminator-only epochs before alternating updates start.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    /// Unrolled LISTA-T iterations in the generator.
    pub lista_iters: usize,
    /// Fraction of patches held out for discriminator accuracy.
    pub holdout_fraction: f64,
    pub disc_hidden: (usize, usize),
    /// Sparsity weight behind the initial thresholds `λ / L`.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TganConfig {
    fn default() -> Self {
        TganConfig {
            content_weight: 1.0,
            eta: 1e-3,
            learning_rate: 1e-4,
            disc_learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 30,
            warmup_epochs: 10,
            batch_size: 16,
            lista_iters: 16,
            holdout_fraction: 0.25,
            disc_hidden: (64, 32),
            lambda: 1e-3,
            seed: 0,
        }
    }
}

impl TganConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.eta >= 0.0) || !(self.content_weight >= 0.0) {
            return bad("loss weights must be >= 0");
        }
        if !(self.learning_rate > 0.0) || !(self.disc_learning_rate > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if self.batch_size == 0 || self.lista_iters == 0 {
            return bad("batch size and LISTA iterations must be positive");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub content_loss: f64,
    pub adv_loss: f64,
    pub disc_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TganOutcome {
    pub refiner: GeneratorRefiner,
    pub disc: Discriminator,
    /// Entry 0 is the state after discriminator warm-up, before any
    /// generator update.
    pub history: Vec<EpochStats>,
}

pub fn write_history_csv<W: Write>(history: &[EpochStats], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "content_loss", "adv_loss", "disc_accuracy"])?;
    for h in history {
        out.write_record([
            h.epoch.to_string(),
            format!("{:e}", h.content_loss),
            format!("{:e}", h.adv_loss),
            format!("{}", h.disc_accuracy),
        ])?;
    }
    out.flush()?;
    Ok(())
}

struct Momentum {
    v: Vec<f64>,
    lr: f64,
    mu: f64,
}

impl Momentum {
    fn new(n: usize, lr: f64, mu: f64) -> Self {
        Momentum { v: vec![0.0; n], lr, mu }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.v).zip(grad) {
            *v = self.mu * *v - self.lr * g;
            *p += *v;
        }
    }
}

/// Coupled (coarse, fine) patch sets in generator units, harvested at
/// stride 1 from every map pair.
pub fn tgan_patches(
    fine_maps: &[RadioMap],
    coarse_maps: &[RadioMap],
    model: &SrModel,
) -> Result<(Tensor3, Tensor3)> {
    if fine_maps.len() != coarse_maps.len() || fine_maps.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} fine maps vs {} coarse maps",
            fine_maps.len(),
            coarse_maps.len()
        )));
    }
    let s = model.scale;
    let mut coarse_parts = Vec::new();
    let mut fine_parts = Vec::new();
    for (f, c) in fine_maps.iter().zip(coarse_maps) {
        if (f.rows(), f.cols()) != (c.rows() * s, c.cols() * s) || f.aps() != c.aps() {
            return Err(Error::dims(
                "train_tgan",
                format!("fine {:?} vs coarse {:?} at scale {s}", f.tensor.dims(), c.tensor.dims()),
            ));
        }
        let grid = PatchGrid::new((c.rows(), c.cols()), model.coarse_patch, (1, 1))?;
        coarse_parts.push(
            extract_patches(&model.range.normalize(&c.tensor), &grid)?.scale(model.pair.coarse_scale),
        );
        fine_parts.push(extract_patches(&model.range.normalize(&f.tensor), &grid.scaled(s))?);
    }
    Ok((
        Tensor3::concat_lateral(&coarse_parts)?,
        Tensor3::concat_lateral(&fine_parts)?,
    ))
}

fn columns(t: &Tensor3) -> Vec<Vec<f64>> {
    (0..t.n2()).map(|j| flatten_column(t, j)).collect()
}

/// Alternating adversarial training with frozen dictionaries: one
/// discriminator step then one generator step per batch.
pub fn train_tgan(
    fine_maps: &[RadioMap],
    coarse_maps: &[RadioMap],
    model: &SrModel,
    cfg: &TganConfig,
) -> Result<TganOutcome> {
    cfg.validate()?;
    let frozen = FrozenPair::new(model)?;
    let (coarse, fine) = tgan_patches(fine_maps, coarse_maps, model)?;
    let total = coarse.n2();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let n_hold = ((cfg.holdout_fraction * total as f64).round() as usize).clamp(1, total - 1);
    let (hold, train) = order.split_at(n_hold);
    if train.is_empty() {
        return Err(Error::InvalidArgument("not enough patches for a training split".into()));
    }
    let (hold_coarse, hold_fine) = (coarse.select_lateral(hold), fine.select_lateral(hold));
    let (train_coarse, train_fine) = (coarse.select_lateral(train), fine.select_lateral(train));
    let hold_real = columns(&hold_fine);

    let mut refiner = GeneratorRefiner::identity(&frozen, cfg.lista_iters, cfg.lambda);
    let input = fine.n1() * fine.n3();
    let mut disc = Discriminator::random(input, cfg.disc_hidden.0, cfg.disc_hidden.1, cfg.seed ^ 0xd15c);
    let mut d_opt = Momentum::new(disc.params().len(), cfg.disc_learning_rate, cfg.momentum);
    let mut g_opt = Momentum::new(refiner.param_count(), cfg.learning_rate, cfg.momentum);

    let stats = |epoch: usize, refiner: &GeneratorRefiner, disc: &Discriminator| -> Result<EpochStats> {
        let generated = refiner.generate(&frozen, &train_coarse)?;
        let content = generated.sub(&train_fine)?.fro_norm_sq() / train.len() as f64;
        let mut adv = 0.0;
        for x in columns(&generated) {
            adv += bce(disc.logit(&x)?, true).0;
        }
        let fake = columns(&refiner.generate(&frozen, &hold_coarse)?);
        Ok(EpochStats {
            epoch,
            content_loss: content,
            adv_loss: adv / train.len() as f64,
            disc_accuracy: disc.accuracy(&hold_real, &fake)?,
        })
    };

    let mut batches: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.warmup_epochs + cfg.epochs {
        if epoch == cfg.warmup_epochs {
            history.push(stats(0, &refiner, &disc)?);
        }
        let adversarial_phase = epoch >= cfg.warmup_epochs;
        batches.shuffle(&mut rng);
        for chunk in batches.chunks(cfg.batch_size) {
            let bc = train_coarse.select_lateral(chunk);
            let bf = train_fine.select_lateral(chunk);
            let fake = columns(&refiner.generate(&frozen, &bc)?);
            let (_, dg) = disc.loss_grad(&columns(&bf), &fake)?;
            d_opt.step(disc.params_mut(), &dg);
            if adversarial_phase {
                let (_, gg) = refiner.loss_grad(&frozen, &disc, &bc, &bf, cfg.content_weight, cfg.eta)?;
                let mut p = refiner.params();
                g_opt.step(&mut p, &gg);
                let k = refiner.thresholds.len();
                p[..k].iter_mut().for_each(|t| *t = t.max(0.0));
                refiner.set_params(&p);
            }
        }
        if adversarial_phase {
            let st = stats(epoch + 1 - cfg.warmup_epochs, &refiner, &disc)?;
            if !st.content_loss.is_finite() || st.content_loss > 10.0 * history[0].content_loss {
                return Err(Error::Diverged(format!(
                    "content loss {:e} at epoch {} exceeds 10x initial {:e}",
                    st.content_loss, st.epoch, history[0].content_loss
                )));
            }
            history.push(st);
        }
    }
    if history.is_empty() {
        history.push(stats(0, &refiner, &disc)?);
    }
    Ok(TganOutcome {
        refiner,
        disc,
        history,
    })
}
