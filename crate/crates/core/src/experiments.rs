//! Seeded synthetic benchmark experiments. Each harness
//! returns plain numbers; callers decide what to print, write or assert.

use serde::{Deserialize, Serialize};

use crate::adversarial::{train_tgan, TganConfig, TganOutcome};
use crate::error::Result;
use crate::localization::{loc_error, median, noisy_queries, train_classifier, wknn_locate, Classifier, ClassifierConfig};
use crate::radiomap::RadioMap;
use crate::sr::{downsample, psnr, psnr_cells, super_resolve, train_sr_model, upsample_interp, BlockSplit, SrTrainConfig};
use crate::synth::Scenario;
use crate::tensor::{energy_cdf, matrix_energy_cdf, mode3_unfolding, Tensor3};

/// Components needed for the cumulative energy to reach `level`.
pub fn components_for(cdf: &[f64], level: f64) -> usize {
    cdf.iter().position(|&c| c >= level).map_or(cdf.len(), |p| p + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyComparison {
    pub tsvd_cdf: Vec<f64>,
    pub matrix_cdf: Vec<f64>,
    pub tsvd_components: usize,
    pub matrix_components: usize,
}

/// t-SVD vs matrix SVD of the mode-3 unfolding at a 95% energy level.
/// With `center` the global mean is subtracted first, so the common dBm
/// offset does not swamp both spectra.
pub fn energy_comparison(t: &Tensor3, center: bool) -> Result<EnergyComparison> {
    let t = if center {
        let mean = t.as_slice().iter().sum::<f64>() / t.len() as f64;
        t.map(|v| v - mean)
    } else {
        t.clone()
    };
    let tsvd_cdf = energy_cdf(&t)?;
    let matrix_cdf = matrix_energy_cdf(&mode3_unfolding(&t))?;
    Ok(EnergyComparison {
        tsvd_components: components_for(&tsvd_cdf, 0.95),
        matrix_components: components_for(&matrix_cdf, 0.95),
        tsvd_cdf,
        matrix_cdf,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrExperimentConfig {
    pub region: (f64, f64),
    pub aps: usize,
    pub block: (usize, usize),
    pub train_fraction: f64,
    pub sr: SrTrainConfig,
}

impl Default for SrExperimentConfig {
    fn default() -> Self {
        SrExperimentConfig {
            region: (32.0, 32.0),
            aps: 8,
            block: (8, 8),
            train_fraction: 0.7,
            sr: SrTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrExperimentResult {
    pub psnr_sr: f64,
    pub psnr_interp: f64,
    /// RMSE between the coarse input and the block mean of the output.
    pub consistency_rmse: f64,
    pub dict_objective: Vec<f64>,
}

pub struct SrExperimentMaps {
    pub fine: RadioMap,
    pub coarse: RadioMap,
    pub sr: RadioMap,
    pub interp: RadioMap,
}

pub fn consistency_rmse(coarse: &RadioMap, fine_estimate: &RadioMap, s: usize) -> Result<f64> {
    let back = downsample(fine_estimate, s)?;
    let d = back.tensor.sub(&coarse.tensor)?;
    Ok((d.fro_norm_sq() / d.len() as f64).sqrt())
}

/// Fine map with a seeded 70/30 block split: the dictionary pair is trained
/// on training blocks only; both estimators are scored on held-out blocks.
pub fn sr_experiment(seed: u64, cfg: &SrExperimentConfig) -> Result<(SrExperimentResult, SrExperimentMaps)> {
    let fine = Scenario::with_random_aps(cfg.region, (1.0, 1.0), cfg.aps, seed).generate()?;
    let split = BlockSplit::random((fine.rows(), fine.cols()), cfg.block, cfg.train_fraction, seed)?;
    let mut sr_cfg = cfg.sr.clone();
    sr_cfg.dict.seed = seed;
    let (model, report) = train_sr_model(&fine, Some(&split), &sr_cfg)?;
    let coarse = downsample(&fine, sr_cfg.scale)?;
    let sr = super_resolve(&coarse, &model, &sr_cfg.dict.ista)?;
    let interp = upsample_interp(&coarse, sr_cfg.scale)?;
    let held = split.held_out_cells();
    let result = SrExperimentResult {
        psnr_sr: psnr_cells(&fine, &sr, &held)?,
        psnr_interp: psnr_cells(&fine, &interp, &held)?,
        consistency_rmse: consistency_rmse(&coarse, &sr, sr_cfg.scale)?,
        dict_objective: report.objective_trace,
    };
    Ok((result, SrExperimentMaps { fine, coarse, sr, interp }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub k: usize,
    pub queries_per_cell: usize,
    pub query_noise_db: f64,
    pub sr: SrTrainConfig,
    pub classifier: ClassifierConfig,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        let mut sr = SrTrainConfig {
            coarse_patch: (2, 2),
            stride: (1, 1),
            ..Default::default()
        };
        sr.dict.r = 8;
        LocalizationConfig {
            k: 3,
            queries_per_cell: 10,
            query_noise_db: 2.0,
            sr,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub wknn: Vec<f64>,
    pub coarse_only: Vec<f64>,
    pub augmented: Vec<f64>,
    pub psnr_sr: f64,
    pub psnr_interp: f64,
}

impl LocalizationResult {
    pub fn medians(&self) -> (f64, f64, f64) {
        (median(&self.wknn), median(&self.coarse_only), median(&self.augmented))
    }
}

pub struct LocalizationModels {
    pub coarse: RadioMap,
    pub sr: RadioMap,
    pub coarse_only: Classifier,
    pub augmented: Classifier,
}

/// The 6 m × 16 m, 14-AP scenario surveyed at 2 m. A fine survey of a
/// different site (same AP count, new AP positions) trains the dictionary
/// pair; the coarse survey is super-resolved and used to augment the
/// classifier. Queries are noisy fingerprints of the 1 m ground truth.
pub fn localization_experiment(seed: u64, cfg: &LocalizationConfig) -> Result<(LocalizationResult, LocalizationModels)> {
    let site = Scenario::reference_site(seed);
    let truth = site.generate()?;
    let s = cfg.sr.scale;
    let coarse = downsample(&truth, s)?;
    let other = Scenario::with_random_aps(site.region, site.spacing, truth.aps(), seed.wrapping_add(1000)).generate()?;
    let mut sr_cfg = cfg.sr.clone();
    sr_cfg.dict.seed = seed;
    let (model, _) = train_sr_model(&other, None, &sr_cfg)?;
    let sr = super_resolve(&coarse, &model, &sr_cfg.dict.ista)?;
    let interp = upsample_interp(&coarse, s)?;

    let ccfg = ClassifierConfig {
        seed,
        ..cfg.classifier.clone()
    };
    let coarse_only = train_classifier(&coarse, None, &ccfg)?;
    let augmented = train_classifier(&coarse, Some(&sr), &ccfg)?;
    let queries = noisy_queries(&truth, cfg.queries_per_cell, cfg.query_noise_db, seed ^ 0x9e37_79b9);
    let mut out = LocalizationResult {
        wknn: Vec::with_capacity(queries.len()),
        coarse_only: Vec::with_capacity(queries.len()),
        augmented: Vec::with_capacity(queries.len()),
        psnr_sr: psnr(&truth, &sr)?,
        psnr_interp: psnr(&truth, &interp)?,
    };
    for (fp, at) in &queries {
        let w = wknn_locate(fp, &coarse, cfg.k)?;
        out.wknn.push(loc_error((w.x, w.y), *at));
        let c = coarse_only.classify(fp)?;
        out.coarse_only.push(loc_error((c.x, c.y), *at));
        let a = augmented.classify(fp)?;
        out.augmented.push(loc_error((a.x, a.y), *at));
    }
    Ok((
        out,
        LocalizationModels {
            coarse,
            sr,
            coarse_only,
            augmented,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanExperimentConfig {
    pub region: (f64, f64),
    pub aps: usize,
    /// Maps supplying adversarial training patches.
    pub maps: usize,
    pub sr: SrTrainConfig,
    pub tgan: TganConfig,
}

impl Default for GanExperimentConfig {
    fn default() -> Self {
        let mut sr = SrTrainConfig::default();
        sr.dict.iters = 10;
        GanExperimentConfig {
            region: (32.0, 32.0),
            aps: 8,
            maps: 2,
            sr,
            tgan: TganConfig::default(),
        }
    }
}

/// Trains a dictionary pair on one synthetic map, then runs adversarial
/// refinement on patches from `maps` maps of the same site.
pub fn gan_experiment(seed: u64, cfg: &GanExperimentConfig) -> Result<TganOutcome> {
    let site = Scenario::with_random_aps(cfg.region, (1.0, 1.0), cfg.aps, seed);
    let mut fines = Vec::with_capacity(cfg.maps);
    for m in 0..cfg.maps.max(1) {
        let mut sc = site.clone();
        sc.params.seed = seed.wrapping_add(m as u64 * 7919);
        fines.push(sc.generate()?);
    }
    let mut sr_cfg = cfg.sr.clone();
    sr_cfg.dict.seed = seed;
    let (model, _) = train_sr_model(&fines[0], None, &sr_cfg)?;
    let coarses = fines.iter().map(|f| downsample(f, sr_cfg.scale)).collect::<Result<Vec<_>>>()?;
    let tcfg = TganConfig {
        seed,
        lambda: sr_cfg.dict.ista.lambda,
        ..cfg.tgan.clone()
    };
    train_tgan(&fines, &coarses, &model, &tcfg)
}
