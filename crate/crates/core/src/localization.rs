//! Location estimation from RSS fingerprints: weighted KNN over a radio map
//! and a one-hidden-layer softmax classifier over grid cells.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiomap::{MapGeometry, RadioMap, RSS_CEIL_DBM, RSS_FLOOR_DBM};
use crate::tensor::{io, Tensor3};

/// One RSS reading per AP, in dBm.
#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    pub rss: Vec<f64>,
}

impl Fingerprint {
    pub fn new(rss: Vec<f64>) -> Result<Self> {
        if let Some(v) = rss.iter().find(|v| !(RSS_FLOOR_DBM..=RSS_CEIL_DBM).contains(*v)) {
            return Err(Error::InvalidArgument(format!("RSS {v} dBm out of range")));
        }
        Ok(Fingerprint { rss })
    }

    /// Unheard APs read as the −110 dBm floor.
    pub fn with_missing(rss: &[Option<f64>]) -> Result<Self> {
        Fingerprint::new(rss.iter().map(|v| v.unwrap_or(RSS_FLOOR_DBM)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationEstimate {
    pub x: f64,
    pub y: f64,
    pub cell: (usize, usize),
    pub confidence: f64,
}

fn check_depth(fp: &[f64], n3: usize) -> Result<()> {
    if fp.len() != n3 {
        return Err(Error::dims(
            "fingerprint",
            format!("{} readings for {n3} APs", fp.len()),
        ));
    }
    Ok(())
}

/// Inverse-distance-weighted centroid of the `k` RPs nearest in RSS space,
/// weights `1/(d + 10⁻⁶)`. An exact match returns that RP. Confidence is the
/// weight share of the nearest RP.
pub fn wknn_locate(fp: &[f64], map: &RadioMap, k: usize) -> Result<LocationEstimate> {
    let cells = map.cells();
    if k == 0 || k > cells {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={cells}")));
    }
    check_depth(fp, map.aps())?;
    let mut dist: Vec<(f64, usize)> = (0..cells)
        .map(|c| {
            let (i, j) = map.cell_of_index(c);
            let d2: f64 = map.fingerprint(i, j).iter().zip(fp).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2.sqrt(), c)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if dist[0].0 == 0.0 {
        let cell = map.cell_of_index(dist[0].1);
        let (x, y) = map.cell_center(cell.0, cell.1);
        return Ok(LocationEstimate {
            x,
            y,
            cell,
            confidence: 1.0,
        });
    }
    let (mut x, mut y, mut wsum) = (0.0, 0.0, 0.0);
    for &(d, c) in &dist[..k] {
        let w = 1.0 / (d + 1e-6);
        let (i, j) = map.cell_of_index(c);
        let (cx, cy) = map.cell_center(i, j);
        x += w * cx;
        y += w * cy;
        wsum += w;
    }
    let (x, y) = (x / wsum, y / wsum);
    Ok(LocationEstimate {
        x,
        y,
        cell: map.cell_containing(x, y),
        confidence: (1.0 / (dist[0].0 + 1e-6)) / wsum,
    })
}

pub fn loc_error(est: (f64, f64), truth: (f64, f64)) -> f64 {
    ((est.0 - truth.0).powi(2) + (est.1 - truth.1).powi(2)).sqrt()
}

/// `(e, fraction of errors ≤ e)` at each distinct error value.
pub fn error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &e) in sorted.iter().enumerate() {
        let frac = if i + 1 == sorted.len() { 1.0 } else { (i + 1) as f64 / n };
        match out.last_mut() {
            Some(last) if last.0 == e => last.1 = frac,
            _ => out.push((e, frac)),
        }
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn write_cdf_csv<W: Write>(cdf: &[(f64, f64)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["error_m", "fraction"])?;
    for (e, f) in cdf {
        out.write_record([e.to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Noisy draws of every training fingerprint per epoch.
    pub draws_per_epoch: usize,
    /// Gaussian noise added to training fingerprints, in dB.
    pub noise_db: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 128,
            epochs: 200,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            draws_per_epoch: 1,
            noise_db: 2.0,
            seed: 0,
        }
    }
}

/// `n3 → hidden (tanh) → cells (softmax)`. Inputs are standardized per AP
/// with statistics of the training fingerprints. Parameters live in one flat
/// vector `W1 (hidden×n3), b1, W2 (cells×hidden), b2`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub geometry: MapGeometry,
    pub hidden: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierManifest {
    geometry: MapGeometry,
    hidden: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    params: usize,
    bytes: usize,
}

struct ClsTrace {
    x: Vec<f64>,
    a: Vec<f64>,
    logits: Vec<f64>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl Classifier {
    /// Xavier-scaled hidden weights and a zero output layer, so every class
    /// starts equally likely.
    pub fn new(geometry: MapGeometry, hidden: usize, mean: Vec<f64>, scale: Vec<f64>, seed: u64) -> Result<Self> {
        let n3 = geometry.dims[2];
        if mean.len() != n3 || scale.len() != n3 || hidden == 0 {
            return Err(Error::dims("classifier", format!("{n3} APs, {hidden} hidden units")));
        }
        let mut c = Classifier {
            geometry,
            hidden,
            mean,
            scale,
            params: Vec::new(),
        };
        c.params = vec![0.0; c.param_count()];
        let normal = Normal::new(0.0, (1.0 / n3 as f64).sqrt()).expect("positive sd");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut c.params[..hidden * n3] {
            *p = normal.sample(&mut rng);
        }
        Ok(c)
    }

    pub fn inputs(&self) -> usize {
        self.geometry.dims[2]
    }

    pub fn classes(&self) -> usize {
        self.geometry.dims[0] * self.geometry.dims[1]
    }

    pub fn param_count(&self) -> usize {
        let (n, h, c) = (self.inputs(), self.hidden, self.classes());
        h * n + h + c * h + c
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn trace(&self, fp: &[f64]) -> ClsTrace {
        let (n, h, c) = (self.inputs(), self.hidden, self.classes());
        let p = &self.params;
        let x: Vec<f64> = fp
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let b1 = h * n;
        let w2 = b1 + h;
        let b2 = w2 + c * h;
        let a: Vec<f64> = (0..h)
            .map(|u| {
                let z: f64 = p[u * n..(u + 1) * n].iter().zip(&x).map(|(w, v)| w * v).sum();
                (z + p[b1 + u]).tanh()
            })
            .collect();
        let logits = (0..c)
            .map(|k| {
                p[w2 + k * h..w2 + (k + 1) * h].iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + p[b2 + k]
            })
            .collect();
        ClsTrace { x, a, logits }
    }

    pub fn logits(&self, fp: &[f64]) -> Result<Vec<f64>> {
        check_depth(fp, self.inputs())?;
        Ok(self.trace(fp).logits)
    }

    pub fn probabilities(&self, fp: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(fp)?))
    }

    fn cell_center(&self, c: usize) -> ((usize, usize), (f64, f64)) {
        let g = &self.geometry;
        let (i, j) = (c / g.dims[1], c % g.dims[1]);
        (
            (i, j),
            (
                g.origin[0] + (i as f64 + 0.5) * g.spacing[0],
                g.origin[1] + (j as f64 + 0.5) * g.spacing[1],
            ),
        )
    }

    /// Arg-max cell, located at its center, with its softmax probability.
    pub fn classify(&self, fp: &[f64]) -> Result<LocationEstimate> {
        let probs = self.probabilities(fp)?;
        let (best, conf) = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc });
        let (cell, (x, y)) = self.cell_center(best);
        Ok(LocationEstimate {
            x,
            y,
            cell,
            confidence: conf,
        })
    }

    /// Mean cross-entropy over `(fingerprint, cell index)` pairs and its
    /// parameter gradient.
    pub fn loss_grad(&self, batch: &[(&[f64], usize)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty classifier batch".into()));
        }
        let (n, h, c) = (self.inputs(), self.hidden, self.classes());
        let (b1, w2) = (h * n, h * n + h);
        let b2 = w2 + c * h;
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        let inv = 1.0 / batch.len() as f64;
        for &(fp, label) in batch {
            check_depth(fp, n)?;
            if label >= c {
                return Err(Error::InvalidArgument(format!("label {label} outside {c} cells")));
            }
            let t = self.trace(fp);
            let probs = softmax(&t.logits);
            loss -= inv * probs[label].max(f64::MIN_POSITIVE).ln();
            let mut da = vec![0.0; h];
            for k in 0..c {
                let dz = inv * (probs[k] - f64::from(u8::from(k == label)));
                grad[b2 + k] += dz;
                for u in 0..h {
                    grad[w2 + k * h + u] += dz * t.a[u];
                    da[u] += dz * p[w2 + k * h + u];
                }
            }
            for u in 0..h {
                let dz = da[u] * (1.0 - t.a[u] * t.a[u]);
                grad[b1 + u] += dz;
                for (g, x) in grad[u * n..(u + 1) * n].iter_mut().zip(&t.x) {
                    *g += dz * x;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("classifier loss"));
        }
        Ok((loss, grad))
    }

    /// Parameters as a `len × 1 × 1` TNS3 tensor at `<path>`, everything
    /// else (including the model byte size) in `<path>.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let t = Tensor3::from_vec(self.params.len(), 1, 1, self.params.clone())?;
        io::save_tns3(&t, path)?;
        let m = ClassifierManifest {
            geometry: self.geometry.clone(),
            hidden: self.hidden,
            mean: self.mean.clone(),
            scale: self.scale.clone(),
            params: self.params.len(),
            bytes: fs::metadata(path)?.len() as usize,
        };
        fs::write(path.with_extension("json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m: ClassifierManifest = serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
        let t = io::load_tns3(path)?;
        let mut c = Classifier::new(m.geometry, m.hidden, m.mean, m.scale, 0)?;
        if t.len() != c.param_count() {
            return Err(Error::Format("classifier parameter count mismatch".into()));
        }
        c.params = t.into_vec();
        Ok(c)
    }
}

/// `(fingerprint, cell)` training pairs on the output grid. Without `aug`
/// the grid is the map's own. With `aug` the grid is the augmentation
/// map's: each of its cells contributes its own fingerprint and that of the
/// `map` cell containing its center.
pub fn training_set(map: &RadioMap, aug: Option<&RadioMap>) -> Result<(MapGeometry, Vec<(Vec<f64>, usize)>)> {
    match aug {
        None => {
            let samples = (0..map.cells())
                .map(|c| {
                    let (i, j) = map.cell_of_index(c);
                    (map.fingerprint(i, j).to_vec(), c)
                })
                .collect();
            Ok((map.geometry(), samples))
        }
        Some(fine) => {
            if fine.aps() != map.aps() {
                return Err(Error::dims(
                    "training set",
                    format!("{} vs {} APs", map.aps(), fine.aps()),
                ));
            }
            let mut samples = Vec::with_capacity(2 * fine.cells());
            for c in 0..fine.cells() {
                let (i, j) = fine.cell_of_index(c);
                let (x, y) = fine.cell_center(i, j);
                let (ci, cj) = map.cell_containing(x, y);
                samples.push((map.fingerprint(ci, cj).to_vec(), c));
            }
            for c in 0..fine.cells() {
                let (i, j) = fine.cell_of_index(c);
                samples.push((fine.fingerprint(i, j).to_vec(), c));
            }
            Ok((fine.geometry(), samples))
        }
    }
}

/// Cross-entropy training by minibatch SGD with momentum on noisy draws of
/// the training fingerprints. With `aug`, the output grid is the
/// augmentation map's and both maps supply samples.
pub fn train_classifier(map: &RadioMap, aug: Option<&RadioMap>, cfg: &ClassifierConfig) -> Result<Classifier> {
    if !(cfg.learning_rate > 0.0) || !(0.0..1.0).contains(&cfg.momentum) || cfg.batch_size == 0 || !(cfg.noise_db >= 0.0) {
        return Err(Error::InvalidArgument("invalid classifier config".into()));
    }
    let (geometry, samples) = training_set(map, aug)?;
    let classes = geometry.dims[0] * geometry.dims[1];
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least two cells to classify".into()));
    }
    let n3 = geometry.dims[2];
    let count = samples.len() as f64;
    let mean: Vec<f64> = (0..n3).map(|k| samples.iter().map(|(f, _)| f[k]).sum::<f64>() / count).collect();
    let scale: Vec<f64> = (0..n3)
        .map(|k| {
            let var = samples.iter().map(|(f, _)| (f[k] - mean[k]).powi(2)).sum::<f64>() / count;
            (var + cfg.noise_db * cfg.noise_db).sqrt().max(1e-6)
        })
        .collect();
    let mut clf = Classifier::new(geometry, cfg.hidden, mean, scale, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc1a5);
    let noise = Normal::new(0.0, cfg.noise_db.max(f64::MIN_POSITIVE)).expect("positive sd");
    let mut velocity = vec![0.0; clf.param_count()];
    let mut order: Vec<usize> = (0..samples.len() * cfg.draws_per_epoch.max(1)).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let noisy: Vec<(Vec<f64>, usize)> = chunk
                .iter()
                .map(|&o| {
                    let (f, label) = &samples[o % samples.len()];
                    let x = f
                        .iter()
                        .map(|v| if cfg.noise_db > 0.0 { v + noise.sample(&mut rng) } else { *v })
                        .collect();
                    (x, *label)
                })
                .collect();
            let batch: Vec<(&[f64], usize)> = noisy.iter().map(|(f, l)| (f.as_slice(), *l)).collect();
            let (_, g) = clf.loss_grad(&batch)?;
            for ((p, v), g) in clf.params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
    }
    Ok(clf)
}

/// Noisy queries at every RP of `truth`: `draws` fingerprints per cell with
/// `N(0, σ²)` added and clamped to the RSS range, each paired with its cell
/// center.
pub fn noisy_queries(truth: &RadioMap, draws: usize, noise_db: f64, seed: u64) -> Vec<(Vec<f64>, (f64, f64))> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_db.max(f64::MIN_POSITIVE)).expect("positive sd");
    let mut out = Vec::with_capacity(truth.cells() * draws);
    for c in 0..truth.cells() {
        let (i, j) = truth.cell_of_index(c);
        for _ in 0..draws {
            let fp = truth
                .fingerprint(i, j)
                .iter()
                .map(|v| {
                    let n = if noise_db > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (v + n).clamp(RSS_FLOOR_DBM, RSS_CEIL_DBM)
                })
                .collect();
            out.push((fp, truth.cell_center(i, j)));
        }
    }
    out
}
