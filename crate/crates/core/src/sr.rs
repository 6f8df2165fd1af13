//! Patchwise super-resolution of coarse radio maps with a coupled dictionary
//! pair, the interpolation baseline and PSNR.
//!
//! Patches span the full AP depth; only the two spatial dimensions are cut.
//! A patch of `p1 × p2` cells becomes one lateral slice of a
//! `(p1·p2) × patches × n3` sample tensor, row `a·p2 + b` holding cell
//! `(a, b)` of the patch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::fs;
use std::path::Path;

use crate::dict::{train_joint, Dictionary, DictionaryMeta, DictionaryPair, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::radiomap::RadioMap;
use crate::sparse::{CodingOperator, IstaConfig};
use crate::tensor::Tensor3;

/// Block mean over `s × s` cells of every AP slice.
pub fn downsample(map: &RadioMap, s: usize) -> Result<RadioMap> {
    let (n1, n2, n3) = map.tensor.dims();
    if s == 0 || n1 % s != 0 || n2 % s != 0 {
        return Err(Error::InvalidArgument(format!(
            "{n1}x{n2} map is not divisible by factor {s}"
        )));
    }
    let inv = 1.0 / (s * s) as f64;
    let mut out = Tensor3::zeros(n1 / s, n2 / s, n3);
    for i in 0..n1 / s {
        for j in 0..n2 / s {
            let tube = out.tube_mut(i, j);
            for a in 0..s {
                for b in 0..s {
                    for (o, v) in tube.iter_mut().zip(map.tensor.tube(i * s + a, j * s + b)) {
                        *o += v;
                    }
                }
            }
            tube.iter_mut().for_each(|v| *v *= inv);
        }
    }
    RadioMap::new(out, map.origin, (map.spacing.0 * s as f64, map.spacing.1 * s as f64))
}

/// Per-AP bilinear interpolation to `s×` resolution.
///
/// Fine cell `m` samples source coordinate `m / s`, so every `s`-th fine
/// cell reproduces a source cell exactly; positions past the last source
/// cell replicate the edge. The AP dimension is never interpolated.
pub fn upsample_interp(map: &RadioMap, s: usize) -> Result<RadioMap> {
    if s < 2 {
        return Err(Error::InvalidArgument(format!("upsampling factor {s} < 2")));
    }
    let (n1, n2, n3) = map.tensor.dims();
    let taps = |n: usize, m: usize| -> (usize, usize, f64) {
        let pos = m as f64 / s as f64;
        let i0 = pos.floor() as usize;
        if i0 + 1 >= n {
            (n - 1, n - 1, 0.0)
        } else {
            (i0, i0 + 1, pos - i0 as f64)
        }
    };
    let mut out = Tensor3::zeros(n1 * s, n2 * s, n3);
    for mi in 0..n1 * s {
        let (i0, i1, fi) = taps(n1, mi);
        for mj in 0..n2 * s {
            let (j0, j1, fj) = taps(n2, mj);
            let w = [
                ((i0, j0), (1.0 - fi) * (1.0 - fj)),
                ((i0, j1), (1.0 - fi) * fj),
                ((i1, j0), fi * (1.0 - fj)),
                ((i1, j1), fi * fj),
            ];
            let tube = out.tube_mut(mi, mj);
            for ((i, j), wt) in w {
                if wt != 0.0 {
                    for (o, v) in tube.iter_mut().zip(map.tensor.tube(i, j)) {
                        *o += wt * v;
                    }
                }
            }
        }
    }
    RadioMap::new(out, map.origin, (map.spacing.0 / s as f64, map.spacing.1 / s as f64))
}

/// Placement of `p1 × p2` patches over an `n1 × n2` grid. Offsets advance by
/// the stride; a final offset flush with the far edge is appended when the
/// stride would leave cells uncovered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub map_dims: (usize, usize),
    pub patch: (usize, usize),
    pub stride: (usize, usize),
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn offsets(n: usize, p: usize, s: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=n - p).step_by(s).collect();
    if *v.last().expect("n >= p") != n - p {
        v.push(n - p);
    }
    v
}

impl PatchGrid {
    pub fn new(map_dims: (usize, usize), patch: (usize, usize), stride: (usize, usize)) -> Result<Self> {
        if patch.0 == 0 || patch.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidArgument("patch and stride must be positive".into()));
        }
        if patch.0 > map_dims.0 || patch.1 > map_dims.1 {
            return Err(Error::dims(
                "PatchGrid",
                format!("patch {patch:?} larger than map {map_dims:?}"),
            ));
        }
        Ok(PatchGrid {
            map_dims,
            patch,
            stride,
            rows: offsets(map_dims.0, patch.0, stride.0),
            cols: offsets(map_dims.1, patch.1, stride.1),
        })
    }

    /// Patch offsets in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .flat_map(move |&r| self.cols.iter().map(move |&c| (r, c)))
    }

    pub fn count(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn patch_len(&self) -> usize {
        self.patch.0 * self.patch.1
    }

    /// The same placement on an `s×` finer grid.
    pub fn scaled(&self, s: usize) -> PatchGrid {
        PatchGrid {
            map_dims: (self.map_dims.0 * s, self.map_dims.1 * s),
            patch: (self.patch.0 * s, self.patch.1 * s),
            stride: (self.stride.0 * s, self.stride.1 * s),
            rows: self.rows.iter().map(|r| r * s).collect(),
            cols: self.cols.iter().map(|c| c * s).collect(),
        }
    }

    fn check_map(&self, t: &Tensor3) -> Result<()> {
        if (t.n1(), t.n2()) != self.map_dims {
            return Err(Error::dims(
                "patch grid",
                format!("grid for {:?}, map is {:?}", self.map_dims, t.dims()),
            ));
        }
        Ok(())
    }
}

pub fn extract_patches(map: &Tensor3, grid: &PatchGrid) -> Result<Tensor3> {
    grid.check_map(map)?;
    let (p1, p2) = grid.patch;
    let mut out = Tensor3::zeros(p1 * p2, grid.count(), map.n3());
    for (idx, (r, c)) in grid.positions().enumerate() {
        for a in 0..p1 {
            for b in 0..p2 {
                out.tube_mut(a * p2 + b, idx).copy_from_slice(map.tube(r + a, c + b));
            }
        }
    }
    Ok(out)
}

/// Inverse of [`extract_patches`]: overlapping contributions are averaged
/// per cell, accumulated in patch order.
pub fn assemble_patches(samples: &Tensor3, grid: &PatchGrid) -> Result<Tensor3> {
    let (p1, p2) = grid.patch;
    if samples.n1() != p1 * p2 || samples.n2() != grid.count() {
        return Err(Error::dims(
            "assemble_patches",
            format!(
                "samples {:?} for {} patches of {p1}x{p2}",
                samples.dims(),
                grid.count()
            ),
        ));
    }
    let n3 = samples.n3();
    let (n1, n2) = grid.map_dims;
    let mut sum = Tensor3::zeros(n1, n2, n3);
    let mut hits = vec![0u32; n1 * n2];
    for (idx, (r, c)) in grid.positions().enumerate() {
        for a in 0..p1 {
            for b in 0..p2 {
                hits[(r + a) * n2 + c + b] += 1;
                for (o, v) in sum.tube_mut(r + a, c + b).iter_mut().zip(samples.tube(a * p2 + b, idx)) {
                    *o += v;
                }
            }
        }
    }
    for i in 0..n1 {
        for j in 0..n2 {
            let h = hits[i * n2 + j];
            debug_assert!(h > 0, "grid leaves cell uncovered");
            let inv = 1.0 / h as f64;
            sum.tube_mut(i, j).iter_mut().for_each(|v| *v *= inv);
        }
    }
    Ok(sum)
}

/// Affine map of dBm readings onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub const IDENTITY: ValueRange = ValueRange { lo: 0.0, hi: 1.0 };

    pub fn of(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument("empty value range".into()));
        }
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Ok(ValueRange { lo, hi })
    }

    pub fn normalize(&self, t: &Tensor3) -> Tensor3 {
        let inv = 1.0 / (self.hi - self.lo);
        t.map(|v| (v - self.lo) * inv)
    }

    pub fn denormalize(&self, t: &Tensor3) -> Tensor3 {
        let w = self.hi - self.lo;
        t.map(|v| v * w + self.lo)
    }
}

/// A trained coupled dictionary plus the patch geometry it was trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct SrModel {
    pub pair: DictionaryPair,
    /// Patch size on the coarse grid.
    pub coarse_patch: (usize, usize),
    /// Patch stride on the coarse grid.
    pub stride: (usize, usize),
    /// Upsampling factor `s`.
    pub scale: usize,
    pub range: ValueRange,
}

impl SrModel {
    fn check(&self, coarse: &RadioMap) -> Result<()> {
        let (p1, p2) = self.coarse_patch;
        let s = self.scale;
        let (nc, r, n3) = self.pair.coarse.atoms().dims();
        let nf = self.pair.fine.atoms().n1();
        if nc != p1 * p2 || nf != p1 * p2 * s * s || r != self.pair.r() {
            return Err(Error::dims(
                "super_resolve",
                format!(
                    "dictionaries {nc}/{nf} rows for {p1}x{p2} patches at scale {s}"
                ),
            ));
        }
        if coarse.aps() != n3 {
            return Err(Error::dims(
                "super_resolve",
                format!("map has {} APs, dictionaries {n3}", coarse.aps()),
            ));
        }
        Ok(())
    }

    pub fn coarse_operator(&self) -> Result<CodingOperator> {
        CodingOperator::new(self.pair.coarse.atoms())
    }

    pub fn fine_operator(&self) -> Result<CodingOperator> {
        CodingOperator::new(self.pair.fine.atoms())
    }

    /// `fine.tns3` and `coarse.tns3` (each with a dictionary sidecar) plus
    /// `model.json` inside `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, meta: &DictionaryMeta) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.pair.fine.save(dir.join("fine.tns3"), meta)?;
        self.pair.coarse.save(dir.join("coarse.tns3"), meta)?;
        let m = SrModelManifest {
            coarse_patch: self.coarse_patch,
            stride: self.stride,
            scale: self.scale,
            range: self.range,
            fine_scale: self.pair.fine_scale,
            coarse_scale: self.pair.coarse_scale,
        };
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, DictionaryMeta)> {
        let dir = dir.as_ref();
        let m: SrModelManifest = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let (fine, meta) = Dictionary::load(dir.join("fine.tns3"))?;
        let (coarse, _) = Dictionary::load(dir.join("coarse.tns3"))?;
        let model = SrModel {
            pair: DictionaryPair::new(fine, coarse, m.fine_scale, m.coarse_scale)?,
            coarse_patch: m.coarse_patch,
            stride: m.stride,
            scale: m.scale,
            range: m.range,
        };
        let (p1, p2) = model.coarse_patch;
        if model.pair.coarse.atoms().n1() != p1 * p2 || model.pair.fine.atoms().n1() != p1 * p2 * model.scale * model.scale {
            return Err(Error::Format("dictionary rows do not match the patch geometry".into()));
        }
        Ok((model, meta))
    }
}

#[derive(Serialize, Deserialize)]
struct SrModelManifest {
    coarse_patch: (usize, usize),
    stride: (usize, usize),
    scale: usize,
    range: ValueRange,
    fine_scale: f64,
    coarse_scale: f64,
}

/// Runs the patch pipeline with a caller-supplied per-patch generator.
///
/// `generate` receives one coarse patch (`p1·p2 × 1 × n3`, normalized and
/// multiplied by the coarse block scale) and returns the fine patch in
/// normalized units. Patches are processed in parallel and assembled in
/// grid order.
pub fn super_resolve_with<F>(coarse: &RadioMap, model: &SrModel, generate: F) -> Result<RadioMap>
where
    F: Fn(&Tensor3) -> Result<Tensor3> + Sync,
{
    model.check(coarse)?;
    let grid = PatchGrid::new((coarse.rows(), coarse.cols()), model.coarse_patch, model.stride)?;
    let patches = extract_patches(&model.range.normalize(&coarse.tensor), &grid)?
        .scale(model.pair.coarse_scale);
    let fine: Vec<Tensor3> = (0..grid.count())
        .into_par_iter()
        .map(|j| generate(&patches.lateral_slice(j)))
        .collect::<Result<_>>()?;
    let fine = Tensor3::concat_lateral(&fine)?;
    let s = model.scale;
    let assembled = assemble_patches(&fine, &grid.scaled(s))?;
    let out = model.range.denormalize(&assembled);
    out.check_finite("super_resolve output")?;
    RadioMap::new(
        out,
        coarse.origin,
        (coarse.spacing.0 / s as f64, coarse.spacing.1 / s as f64),
    )
}

/// Code each coarse patch against the coarse dictionary with ISTA-T, then
/// synthesize the fine patch `D′ * A` and assemble with overlap averaging.
pub fn super_resolve(coarse: &RadioMap, model: &SrModel, cfg: &IstaConfig) -> Result<RadioMap> {
    let coarse_op = model.coarse_operator()?;
    let fine_op = model.fine_operator()?;
    let inv_fine = 1.0 / model.pair.fine_scale;
    let r = model.pair.r();
    super_resolve_with(coarse, model, |patch| {
        let init = Tensor3::zeros(r, 1, patch.n3());
        let code = coarse_op.ista_from(patch, cfg, &init)?.code.code;
        Ok(fine_op.forward(&code)?.scale(inv_fine))
    })
}

/// `20·log₁₀(MAX / RMSE)` with `MAX` the dynamic range of `reference`;
/// `+∞` for identical inputs.
pub fn psnr(reference: &RadioMap, estimate: &RadioMap) -> Result<f64> {
    let (n1, n2, _) = reference.tensor.dims();
    let cells: Vec<(usize, usize)> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
    psnr_cells(reference, estimate, &cells)
}

/// PSNR restricted to `cells`; the peak is still the dynamic range of the
/// whole reference map.
pub fn psnr_cells(reference: &RadioMap, estimate: &RadioMap, cells: &[(usize, usize)]) -> Result<f64> {
    if reference.tensor.dims() != estimate.tensor.dims() {
        return Err(Error::dims(
            "psnr",
            format!("{:?} vs {:?}", reference.tensor.dims(), estimate.tensor.dims()),
        ));
    }
    if cells.is_empty() {
        return Err(Error::InvalidArgument("psnr over no cells".into()));
    }
    let range = ValueRange::of(reference.tensor.as_slice().iter().copied())?;
    let peak = if reference.tensor.max_abs() == 0.0 && estimate.tensor.max_abs() == 0.0 {
        1.0
    } else {
        range.hi - range.lo
    };
    let mut sq = 0.0;
    let mut n = 0usize;
    for &(i, j) in cells {
        for (a, b) in reference.tensor.tube(i, j).iter().zip(estimate.tensor.tube(i, j)) {
            sq += (a - b) * (a - b);
            n += 1;
        }
    }
    let rmse = (sq / n as f64).sqrt();
    if rmse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / rmse).log10())
}

/// Splits a fine map into `b1 × b2` blocks, a seeded fraction of which keep
/// their fine readings for training; the rest are held out.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSplit {
    pub block: (usize, usize),
    pub blocks: (usize, usize),
    train: Vec<bool>,
}

impl BlockSplit {
    pub fn random(map_dims: (usize, usize), block: (usize, usize), train_fraction: f64, seed: u64) -> Result<Self> {
        if block.0 == 0 || block.1 == 0 || map_dims.0 % block.0 != 0 || map_dims.1 % block.1 != 0 {
            return Err(Error::InvalidArgument(format!(
                "blocks {block:?} do not tile {map_dims:?}"
            )));
        }
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::InvalidArgument(format!("train fraction {train_fraction}")));
        }
        let blocks = (map_dims.0 / block.0, map_dims.1 / block.1);
        let total = blocks.0 * blocks.1;
        let n_train = ((train_fraction * total as f64).round() as usize).min(total);
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut train = vec![false; total];
        for &b in &order[..n_train] {
            train[b] = true;
        }
        Ok(BlockSplit { block, blocks, train })
    }

    pub fn is_train_cell(&self, i: usize, j: usize) -> bool {
        self.train[(i / self.block.0) * self.blocks.1 + j / self.block.1]
    }

    pub fn train_blocks(&self) -> usize {
        self.train.iter().filter(|&&t| t).count()
    }

    pub fn held_out_cells(&self) -> Vec<(usize, usize)> {
        self.cells(false)
    }

    pub fn train_cells(&self) -> Vec<(usize, usize)> {
        self.cells(true)
    }

    fn cells(&self, train: bool) -> Vec<(usize, usize)> {
        let (n1, n2) = (self.blocks.0 * self.block.0, self.blocks.1 * self.block.1);
        (0..n1)
            .flat_map(|i| (0..n2).map(move |j| (i, j)))
            .filter(|&(i, j)| self.is_train_cell(i, j) == train)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrTrainConfig {
    pub scale: usize,
    pub coarse_patch: (usize, usize),
    /// Stride used when super-resolving.
    pub stride: (usize, usize),
    /// Stride used when harvesting training pairs.
    pub train_stride: (usize, usize),
    pub dict: TrainConfig,
}

impl Default for SrTrainConfig {
    fn default() -> Self {
        SrTrainConfig {
            scale: 2,
            coarse_patch: (4, 4),
            stride: (2, 2),
            train_stride: (1, 1),
            dict: TrainConfig::default(),
        }
    }
}

/// Harvests coupled (fine, coarse) patch pairs whose footprint lies entirely
/// in training blocks (or anywhere when `split` is `None`), normalized to the
/// range of the training readings.
pub fn training_patches(
    fine: &RadioMap,
    split: Option<&BlockSplit>,
    cfg: &SrTrainConfig,
) -> Result<(Tensor3, Tensor3, ValueRange)> {
    let s = cfg.scale;
    let coarse = downsample(fine, s)?;
    let usable = |i: usize, j: usize| split.is_none_or(|sp| sp.is_train_cell(i, j));
    let range = ValueRange::of(
        (0..fine.rows())
            .flat_map(|i| (0..fine.cols()).map(move |j| (i, j)))
            .filter(|&(i, j)| usable(i, j))
            .flat_map(|(i, j)| fine.fingerprint(i, j).to_vec()),
    )?;
    let grid = PatchGrid::new((coarse.rows(), coarse.cols()), cfg.coarse_patch, cfg.train_stride)?;
    let (p1, p2) = cfg.coarse_patch;
    let keep: Vec<usize> = grid
        .positions()
        .enumerate()
        .filter(|&(_, (r, c))| {
            (r * s..(r + p1) * s).all(|i| (c * s..(c + p2) * s).all(|j| usable(i, j)))
        })
        .map(|(idx, _)| idx)
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("no training patch fits the training blocks".into()));
    }
    let coarse_all = extract_patches(&range.normalize(&coarse.tensor), &grid)?;
    let fine_all = extract_patches(&range.normalize(&fine.tensor), &grid.scaled(s))?;
    Ok((fine_all.select_lateral(&keep), coarse_all.select_lateral(&keep), range))
}

pub fn train_sr_model(
    fine: &RadioMap,
    split: Option<&BlockSplit>,
    cfg: &SrTrainConfig,
) -> Result<(SrModel, TrainReport)> {
    let (fp, cp, range) = training_patches(fine, split, cfg)?;
    if fp.n2() < cfg.dict.r {
        return Err(Error::InvalidArgument(format!(
            "{} training patches cannot train {} atoms",
            fp.n2(),
            cfg.dict.r
        )));
    }
    let (pair, report) = train_joint(&fp, &cp, &cfg.dict)?;
    Ok((
        SrModel {
            pair,
            coarse_patch: cfg.coarse_patch,
            stride: cfg.stride,
            scale: cfg.scale,
            range,
        },
        report,
    ))
}
