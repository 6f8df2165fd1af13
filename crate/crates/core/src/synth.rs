//! Ground-truth generators: planted low-tubal-rank tensors and log-distance
//! path-loss radio maps with spatially correlated shadowing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiomap::{RadioMap, RSS_CEIL_DBM, RSS_FLOOR_DBM};
use crate::tensor::{tprod, Tensor3};

/// `tprod(G1, G2)` for seeded Gaussian `G1: n1×r×n3`, `G2: r×n2×n3`.
pub fn gen_low_tubal_rank(n1: usize, n2: usize, n3: usize, r: usize, seed: u64) -> Result<Tensor3> {
    if r > n1.min(n2) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} exceeds min({n1}, {n2})"
        )));
    }
    if r == 0 {
        return Ok(Tensor3::zeros(n1, n2, n3));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |a, b, c| Tensor3::from_fn(a, b, c, |_, _, _| StandardNormal.sample(&mut rng));
    let g1 = gauss(n1, r, n3);
    let g2 = gauss(r, n2, n3);
    tprod(&g1, &g2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossParams {
    /// RSS at the reference distance.
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub shadowing_db: f64,
    pub correlation_length_m: f64,
    pub aps: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams {
            tx_power_dbm: -30.0,
            path_loss_exponent: 2.7,
            reference_distance_m: 1.0,
            shadowing_db: 4.0,
            correlation_length_m: 3.0,
            aps: Vec::new(),
            seed: 0,
        }
    }
}

impl PathLossParams {
    /// Noise-free log-distance RSS from one AP, unclamped.
    pub fn mean_rss(&self, ap: (f64, f64), p: (f64, f64)) -> f64 {
        let d = ((p.0 - ap.0).powi(2) + (p.1 - ap.1).powi(2)).sqrt();
        let d0 = self.reference_distance_m;
        self.tx_power_dbm - 10.0 * self.path_loss_exponent * (d.max(d0) / d0).log10()
    }

    fn validate(&self) -> Result<()> {
        if self.aps.is_empty() {
            return Err(Error::InvalidArgument("no access points".into()));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::InvalidArgument("path-loss exponent must be > 0".into()));
        }
        if !(self.shadowing_db >= 0.0) || !(self.reference_distance_m > 0.0) {
            return Err(Error::InvalidArgument("shadowing must be >= 0 and d0 > 0".into()));
        }
        if !(self.correlation_length_m > 0.0) {
            return Err(Error::InvalidArgument("correlation length must be > 0".into()));
        }
        Ok(())
    }
}

/// A rectangular survey region sampled on a regular grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Region extent `(x, y)` in meters.
    pub region: (f64, f64),
    /// Grid spacing `(dx, dy)` in meters.
    pub spacing: (f64, f64),
    pub params: PathLossParams,
}

impl Scenario {
    /// `ap_count` APs placed uniformly inside `region`, seeded.
    pub fn with_random_aps(region: (f64, f64), spacing: (f64, f64), ap_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a9e5);
        let aps = (0..ap_count)
            .map(|_| (rng.random_range(0.0..region.0), rng.random_range(0.0..region.1)))
            .collect();
        Scenario {
            region,
            spacing,
            params: PathLossParams {
                aps,
                seed,
                ..Default::default()
            },
        }
    }

    /// 6 m × 16 m at 1 m spacing with 14 APs inside: a `6 × 16 × 14` map.
    pub fn reference_site(seed: u64) -> Self {
        Scenario::with_random_aps((6.0, 16.0), (1.0, 1.0), 14, seed)
    }

    pub fn generate(&self) -> Result<RadioMap> {
        gen_radiomap(self.region, self.spacing, &self.params)
    }
}

/// RSS(rp, ap) = P₀ − 10γ·log₁₀(max(d, d0)/d0) + shadowing, clamped to
/// `[−110, 0]` dBm. Shadowing is an independent unit-variance Gaussian field
/// per AP, scaled to `σ` dB, with squared-exponential correlation of the
/// configured length.
pub fn gen_radiomap(region: (f64, f64), spacing: (f64, f64), params: &PathLossParams) -> Result<RadioMap> {
    params.validate()?;
    if !(spacing.0 > 0.0 && spacing.1 > 0.0 && region.0 >= spacing.0 && region.1 >= spacing.1) {
        return Err(Error::InvalidArgument(format!(
            "region {region:?} with spacing {spacing:?} has no cells"
        )));
    }
    let n1 = (region.0 / spacing.0).round() as usize;
    let n2 = (region.1 / spacing.1).round() as usize;
    let n3 = params.aps.len();
    let centers: Vec<(f64, f64)> = (0..n1 * n2)
        .map(|c| {
            let (i, j) = (c / n2, c % n2);
            ((i as f64 + 0.5) * spacing.0, (j as f64 + 0.5) * spacing.1)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let shadow = if params.shadowing_db > 0.0 {
        correlated_fields(&centers, n3, params.correlation_length_m, &mut rng)
            .into_iter()
            .map(|f| f.into_iter().map(|v| v * params.shadowing_db).collect())
            .collect()
    } else {
        vec![vec![0.0; centers.len()]; n3]
    };

    let mut t = Tensor3::zeros(n1, n2, n3);
    for (c, &p) in centers.iter().enumerate() {
        for (k, &ap) in params.aps.iter().enumerate() {
            let v = params.mean_rss(ap, p) + shadow[k][c];
            t[(c / n2, c % n2, k)] = v.clamp(RSS_FLOOR_DBM, RSS_CEIL_DBM);
        }
    }
    RadioMap::new(t, (0.0, 0.0), spacing)
}

/// `count` unit-variance fields over `points`: white noise smoothed by the
/// kernel `exp(−d²/ℓ²)` and renormalized point-wise, which gives the
/// correlation `exp(−d²/(2ℓ²))` away from the borders.
fn correlated_fields(points: &[(f64, f64)], count: usize, len: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let kernel: Vec<Vec<(usize, f64)>> = points
        .iter()
        .map(|&(x, y)| {
            let row: Vec<(usize, f64)> = points
                .iter()
                .enumerate()
                .filter_map(|(q, &(u, v))| {
                    let d2 = (x - u).powi(2) + (y - v).powi(2);
                    let w = (-d2 / (len * len)).exp();
                    (w > 1e-12).then_some((q, w))
                })
                .collect();
            let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            row.into_iter().map(|(q, w)| (q, w / norm)).collect()
        })
        .collect();
    (0..count)
        .map(|_| {
            let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            kernel
                .iter()
                .map(|row| row.iter().map(|&(q, w)| w * white[q]).sum())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tubal_rank;

    #[test]
    fn low_rank_generator() {
        assert_eq!(gen_low_tubal_rank(4, 5, 3, 0, 1).unwrap().fro_norm(), 0.0);
        assert_eq!(tubal_rank(&gen_low_tubal_rank(8, 8, 4, 2, 3).unwrap(), 1e-8).unwrap(), 2);
        assert_eq!(tubal_rank(&gen_low_tubal_rank(4, 6, 3, 4, 3).unwrap(), 1e-8).unwrap(), 4);
        assert!(gen_low_tubal_rank(3, 5, 2, 4, 0).is_err());
    }

    #[test]
    fn ap_on_rp_is_strongest() {
        let params = PathLossParams {
            aps: vec![(2.5, 3.5)],
            shadowing_db: 0.0,
            ..Default::default()
        };
        let m = gen_radiomap((6.0, 8.0), (1.0, 1.0), &params).unwrap();
        let best = m.tensor[(2, 3, 0)];
        assert!(m.tensor.as_slice().iter().all(|&v| v <= best));
        assert_eq!(best, -30.0);
    }

    #[test]
    fn isotropic_without_shadowing() {
        let params = PathLossParams {
            aps: vec![(3.0, 3.0)],
            shadowing_db: 0.0,
            ..Default::default()
        };
        let m = gen_radiomap((6.0, 6.0), (1.0, 1.0), &params).unwrap();
        // (1,2) and (2,1) have centers (1.5,2.5), (2.5,1.5): both √2.5 m away
        assert_eq!(m.tensor[(1, 2, 0)], m.tensor[(2, 1, 0)]);
        assert_eq!(m.tensor[(0, 0, 0)], m.tensor[(5, 5, 0)]);
    }

    #[test]
    fn deterministic_and_in_range() {
        let s = Scenario::reference_site(11);
        let a = s.generate().unwrap();
        assert_eq!(a.tensor.dims(), (6, 16, 14));
        assert_eq!(a, s.generate().unwrap());
        a.check_rss_range().unwrap();
        assert_ne!(a, Scenario::reference_site(12).generate().unwrap());
    }

    #[test]
    fn empty_ap_list_rejected() {
        assert!(gen_radiomap((4.0, 4.0), (1.0, 1.0), &PathLossParams::default()).is_err());
    }

    #[test]
    fn shadowing_has_requested_spread() {
        let mut p = PathLossParams {
            aps: vec![(0.0, 0.0); 40],
            tx_power_dbm: -40.0,
            ..Default::default()
        };
        let noisy = gen_radiomap((12.0, 12.0), (1.0, 1.0), &p).unwrap();
        p.shadowing_db = 0.0;
        let clean = gen_radiomap((12.0, 12.0), (1.0, 1.0), &p).unwrap();
        let diff = noisy.tensor.sub(&clean.tensor).unwrap();
        let sd = (diff.fro_norm_sq() / diff.len() as f64).sqrt();
        assert!((sd - 4.0).abs() < 1.0, "{sd}");
    }
}
