//! One function per subcommand. Each `cmd_*` creates a run directory; the
//! stage functions below it write into a given directory and return a JSON
//! summary, so the pipeline can reuse them.

use std::fs::{self, File};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use tubalsr::adversarial::write_history_csv;
use tubalsr::experiments::{
    components_for, gan_experiment, localization_experiment, sr_experiment, GanExperimentConfig, LocalizationConfig,
    SrExperimentConfig,
};
use tubalsr::localization::{error_cdf, median, write_cdf_csv};
use tubalsr::sr::{downsample, psnr, super_resolve, train_sr_model, upsample_interp, SrModel};
use tubalsr::synth::gen_low_tubal_rank;
use tubalsr::tensor::{energy_cdf, io, matrix_energy_cdf, mode3_unfolding};
use tubalsr::{RadioMap, Tensor3};

use crate::config::*;
use crate::error::Result;
use crate::run::{execute, RunOutcome, Timings};

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<RunOutcome> {
    execute(out, "synth", cfg, vec![cfg.seed], |dir, _| synth(cfg, dir).map(|(v, _)| v))
}

#[derive(Serialize)]
struct ApRow {
    ap: usize,
    x_m: f64,
    y_m: f64,
}

/// Writes `tensor.tns3` (low-rank mode) or `map.tns3` with its sidecar and
/// `aps.csv`. Returns the generated map, if any.
pub fn synth(cfg: &SynthConfig, dir: &Path) -> Result<(Value, Option<RadioMap>)> {
    if let Some(lr) = &cfg.low_rank {
        let (a, b, c) = lr.dims;
        let t = gen_low_tubal_rank(a, b, c, lr.rank, cfg.seed)?;
        io::save_tns3(&t, dir.join("tensor.tns3"))?;
        return Ok((json!({ "dims": [a, b, c], "rank": lr.rank }), None));
    }
    let sc = cfg.scenario();
    let map = sc.generate()?;
    map.save(dir.join("map.tns3"))?;
    let rows: Vec<ApRow> = sc
        .params
        .aps
        .iter()
        .enumerate()
        .map(|(ap, &(x_m, y_m))| ApRow { ap, x_m, y_m })
        .collect();
    write_csv(&dir.join("aps.csv"), &rows)?;
    let (n1, n2, n3) = map.tensor.dims();
    Ok((json!({ "dims": [n1, n2, n3] }), Some(map)))
}

pub fn cmd_svd_report(cfg: &SvdReportConfig, out: &Path) -> Result<RunOutcome> {
    let input = cfg.input.as_deref().expect("validated");
    let t = io::load_tns3(input)?;
    execute(out, "svd-report", cfg, Vec::new(), |dir, _| {
        svd_report(&t, cfg.center, cfg.level, &dir.join("svd_report.csv"))
    })
}

#[derive(Serialize)]
struct SvdRow {
    component: usize,
    tsvd_cdf: Option<f64>,
    matrix_cdf: Option<f64>,
}

/// Cumulative energy of the t-SVD tubes and of the mode-3 unfolding's
/// singular values, one row per component.
pub fn svd_report(t: &Tensor3, center: bool, level: f64, path: &Path) -> Result<Value> {
    let t = if center {
        let m = mean(t.as_slice());
        t.map(|v| v - m)
    } else {
        t.clone()
    };
    let tsvd = energy_cdf(&t)?;
    let matrix = matrix_energy_cdf(&mode3_unfolding(&t))?;
    let rows: Vec<SvdRow> = (0..tsvd.len().max(matrix.len()))
        .map(|i| SvdRow {
            component: i + 1,
            tsvd_cdf: tsvd.get(i).copied(),
            matrix_cdf: matrix.get(i).copied(),
        })
        .collect();
    write_csv(path, &rows)?;
    Ok(json!({
        "level": level,
        "centered": center,
        "tsvd_components": components_for(&tsvd, level),
        "matrix_components": components_for(&matrix, level),
    }))
}

#[derive(Serialize)]
struct ObjectiveRow {
    iteration: usize,
    objective: f64,
}

fn write_objective(path: &Path, trace: &[f64]) -> Result<()> {
    let rows: Vec<ObjectiveRow> = trace
        .iter()
        .enumerate()
        .map(|(iteration, &objective)| ObjectiveRow { iteration, objective })
        .collect();
    write_csv(path, &rows)
}

pub fn cmd_train_dict(cfg: &TrainDictConfig, out: &Path) -> Result<RunOutcome> {
    execute(out, "train-dict", cfg, vec![cfg.seed], |dir, t| {
        let fine = match &cfg.input {
            Some(p) => RadioMap::load(p)?,
            None => cfg.synth.scenario().generate()?,
        };
        let (model, report) = t.time("train", || Ok(train_sr_model(&fine, None, &cfg.sr)?))?;
        model.save(dir.join("model"), &cfg.sr.dict.meta())?;
        write_objective(&dir.join("objective.csv"), &report.objective_trace)?;
        Ok(json!({
            "atoms": model.pair.r(),
            "final_objective": report.objective_trace.last(),
            "worst_kkt": report.worst_kkt,
            "newton_fallbacks": report.newton_fallbacks,
        }))
    })
}

pub fn cmd_super_resolve(cfg: &SuperResolveConfig, out: &Path) -> Result<RunOutcome> {
    if let Some(m) = &cfg.model {
        return execute(out, "super-resolve", cfg, Vec::new(), |dir, t| {
            let (model, _) = SrModel::load(m)?;
            let fine = cfg.reference.as_ref().map(RadioMap::load).transpose()?;
            let coarse = match (&cfg.input, &fine) {
                (Some(i), _) => RadioMap::load(i)?,
                (None, Some(f)) => downsample(f, model.scale)?,
                (None, None) => unreachable!("validated"),
            };
            let sr = t.time("super_resolve", || Ok(super_resolve(&coarse, &model, &cfg.ista)?))?;
            let interp = upsample_interp(&coarse, model.scale)?;
            sr.save(dir.join("sr.tns3"))?;
            interp.save(dir.join("trilinear.tns3"))?;
            let Some(fine) = fine else {
                return Ok(json!({}));
            };
            let row = PsnrRow {
                seed: None,
                psnr_sr: psnr(&fine, &sr)?,
                psnr_trilinear: psnr(&fine, &interp)?,
                consistency_rmse: tubalsr::experiments::consistency_rmse(&coarse, &sr, model.scale)?,
            };
            write_csv(&dir.join("psnr.csv"), &[&row])?;
            Ok(json!({ "psnr_sr": row.psnr_sr, "psnr_trilinear": row.psnr_trilinear }))
        });
    }
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| cfg.seed + k).collect();
    execute(out, "super-resolve", cfg, seeds.clone(), |dir, t| {
        super_resolve_experiment(&cfg.experiment, &seeds, dir, t)
    })
}

#[derive(Serialize)]
struct PsnrRow {
    seed: Option<u64>,
    psnr_sr: f64,
    psnr_trilinear: f64,
    consistency_rmse: f64,
}

/// Held-out-block PSNR of sparse-coding SR and the interpolation baseline
/// per seed; maps and the dictionary objective trace of the first seed.
pub fn super_resolve_experiment(cfg: &SrExperimentConfig, seeds: &[u64], dir: &Path, t: &mut Timings) -> Result<Value> {
    let mut rows = Vec::with_capacity(seeds.len());
    for (n, &seed) in seeds.iter().enumerate() {
        let (res, maps) = t.time(&format!("seed_{seed}"), || Ok(sr_experiment(seed, cfg)?))?;
        log::info!(
            "seed {seed}: sr {:.2} dB, trilinear {:.2} dB",
            res.psnr_sr,
            res.psnr_interp
        );
        if n == 0 {
            maps.fine.save(dir.join("fine.tns3"))?;
            maps.coarse.save(dir.join("coarse.tns3"))?;
            maps.sr.save(dir.join("sr.tns3"))?;
            maps.interp.save(dir.join("trilinear.tns3"))?;
            write_objective(&dir.join("objective.csv"), &res.dict_objective)?;
        }
        rows.push(PsnrRow {
            seed: Some(seed),
            psnr_sr: res.psnr_sr,
            psnr_trilinear: res.psnr_interp,
            consistency_rmse: res.consistency_rmse,
        });
    }
    write_csv(&dir.join("psnr.csv"), &rows)?;
    let sr: Vec<f64> = rows.iter().map(|r| r.psnr_sr).collect();
    let tri: Vec<f64> = rows.iter().map(|r| r.psnr_trilinear).collect();
    Ok(json!({
        "mean_psnr_sr": mean(&sr),
        "mean_psnr_trilinear": mean(&tri),
        "mean_margin_db": mean(&sr) - mean(&tri),
        "sr_wins": rows.iter().filter(|r| r.psnr_sr > r.psnr_trilinear).count(),
    }))
}

pub fn cmd_train_tgan(cfg: &TrainTganConfig, out: &Path) -> Result<RunOutcome> {
    execute(out, "train-tgan", cfg, vec![cfg.seed], |dir, t| {
        train_tgan(&cfg.experiment, cfg.seed, dir, t)
    })
}

/// Refiner, discriminator and the per-epoch history.
pub fn train_tgan(cfg: &GanExperimentConfig, seed: u64, dir: &Path, t: &mut Timings) -> Result<Value> {
    let outcome = t.time("train", || Ok(gan_experiment(seed, cfg)?))?;
    outcome.refiner.save(dir.join("refiner.tns3"))?;
    outcome.disc.save(dir.join("discriminator.tns3"))?;
    write_history_csv(&outcome.history, File::create(dir.join("history.csv"))?)?;
    let (first, last) = (&outcome.history[0], outcome.history.last().expect("nonempty"));
    Ok(json!({
        "initial_disc_accuracy": first.disc_accuracy,
        "final_disc_accuracy": last.disc_accuracy,
        "initial_content_loss": first.content_loss,
        "final_content_loss": last.content_loss,
    }))
}

pub fn cmd_localize(cfg: &LocalizeConfig, out: &Path) -> Result<RunOutcome> {
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| cfg.seed + k).collect();
    execute(out, "localize", cfg, seeds.clone(), |dir, t| {
        localize(&cfg.experiment, &seeds, dir, t)
    })
}

#[derive(Serialize)]
struct MedianRow {
    seed: u64,
    wknn_m: f64,
    classifier_m: f64,
    classifier_sr_m: f64,
    psnr_sr: f64,
    psnr_trilinear: f64,
}

/// Error CDFs of wKNN and of the classifier with and without SR samples,
/// pooled over seeds; per-seed medians; the first seed's models.
pub fn localize(cfg: &LocalizationConfig, seeds: &[u64], dir: &Path, t: &mut Timings) -> Result<Value> {
    let (mut wknn, mut coarse, mut aug) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows = Vec::with_capacity(seeds.len());
    for (n, &seed) in seeds.iter().enumerate() {
        let (res, models) = t.time(&format!("seed_{seed}"), || Ok(localization_experiment(seed, cfg)?))?;
        if n == 0 {
            models.coarse.save(dir.join("coarse.tns3"))?;
            models.sr.save(dir.join("sr.tns3"))?;
            models.coarse_only.save(dir.join("classifier.tns3"))?;
            models.augmented.save(dir.join("classifier_sr.tns3"))?;
        }
        let (w, c, a) = res.medians();
        log::info!("seed {seed}: median wknn {w:.3} m, classifier {c:.3} m, classifier+sr {a:.3} m");
        rows.push(MedianRow {
            seed,
            wknn_m: w,
            classifier_m: c,
            classifier_sr_m: a,
            psnr_sr: res.psnr_sr,
            psnr_trilinear: res.psnr_interp,
        });
        wknn.extend(res.wknn);
        coarse.extend(res.coarse_only);
        aug.extend(res.augmented);
    }
    for (name, errs) in [("wknn", &wknn), ("classifier", &coarse), ("classifier_sr", &aug)] {
        write_cdf_csv(&error_cdf(errs), File::create(dir.join(format!("cdf_{name}.csv")))?)?;
    }
    write_csv(&dir.join("medians.csv"), &rows)?;
    Ok(json!({
        "queries": wknn.len(),
        "median_wknn_m": median(&wknn),
        "median_classifier_m": median(&coarse),
        "median_classifier_sr_m": median(&aug),
    }))
}

pub fn cmd_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<RunOutcome> {
    execute(out, "pipeline", cfg, vec![cfg.seed], |dir, t| {
        let sub = |name: &str| -> Result<std::path::PathBuf> {
            let d = dir.join(name);
            fs::create_dir_all(&d)?;
            Ok(d)
        };
        let (synth_res, map) = t.time("synth", || synth(&cfg.synth, &sub("synth")?))?;
        let tensor = match map {
            Some(m) => m.tensor,
            None => io::load_tns3(dir.join("synth/tensor.tns3"))?,
        };
        let svd_dir = sub("svd")?;
        let svd = t.time("svd", || {
            Ok(json!({
                "raw": svd_report(&tensor, false, cfg.svd_level, &svd_dir.join("svd_report.csv"))?,
                "centered": svd_report(&tensor, true, cfg.svd_level, &svd_dir.join("svd_report_centered.csv"))?,
            }))
        })?;
        let sr = t.stage("super_resolve", |t| {
            super_resolve_experiment(&cfg.super_resolve, &[cfg.seed], &sub("super_resolve")?, t)
        })?;
        let loc = t.stage("localize", |t| localize(&cfg.localize, &[cfg.seed], &sub("localize")?, t))?;
        let tgan = if cfg.run_tgan {
            t.stage("tgan", |t| train_tgan(&cfg.tgan, cfg.seed, &sub("tgan")?, t))?
        } else {
            Value::Null
        };
        Ok(json!({
            "synth": synth_res,
            "svd": svd,
            "super_resolve": sr,
            "localize": loc,
            "tgan": tgan,
        }))
    })
}
