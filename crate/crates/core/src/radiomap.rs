//! RSS fingerprint tensors bound to a physical grid.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{io, Tensor3};

/// RSS floor in dBm; also the reading used for a missing AP.
pub const RSS_FLOOR_DBM: f64 = -110.0;
pub const RSS_CEIL_DBM: f64 = 0.0;

/// `n1 × n2` reference points by `n3` access points.
///
/// RP `(i, j)` is the grid cell whose center sits at
/// `(x0 + (i + ½)·dx, y0 + (j + ½)·dy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadioMap {
    pub tensor: Tensor3,
    pub origin: (f64, f64),
    pub spacing: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    pub dims: [usize; 3],
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
}

impl RadioMap {
    pub fn new(tensor: Tensor3, origin: (f64, f64), spacing: (f64, f64)) -> Result<Self> {
        if !(spacing.0 > 0.0 && spacing.1 > 0.0) || !spacing.0.is_finite() || !spacing.1.is_finite() {
            return Err(Error::InvalidArgument(format!("spacing {spacing:?} must be > 0")));
        }
        if !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::NonFinite("map origin"));
        }
        tensor.check_finite("RadioMap")?;
        Ok(RadioMap {
            tensor,
            origin,
            spacing,
        })
    }

    /// Unit-spaced map at the origin; convenient for pure tensor work.
    pub fn unit(tensor: Tensor3) -> Result<Self> {
        RadioMap::new(tensor, (0.0, 0.0), (1.0, 1.0))
    }

    /// Fails unless every reading lies in `[−110, 0]` dBm.
    pub fn check_rss_range(&self) -> Result<()> {
        if let Some(v) = self
            .tensor
            .as_slice()
            .iter()
            .find(|v| !(RSS_FLOOR_DBM..=RSS_CEIL_DBM).contains(*v))
        {
            return Err(Error::InvalidArgument(format!("RSS {v} dBm out of range")));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.tensor.n1()
    }

    pub fn cols(&self) -> usize {
        self.tensor.n2()
    }

    pub fn aps(&self) -> usize {
        self.tensor.n3()
    }

    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i * self.cols() + j
    }

    pub fn cell_of_index(&self, c: usize) -> (usize, usize) {
        (c / self.cols(), c % self.cols())
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.spacing.0,
            self.origin.1 + (j as f64 + 0.5) * self.spacing.1,
        )
    }

    /// Cell containing `(x, y)`, clamped to the grid.
    pub fn cell_containing(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        (
            clamp((x - self.origin.0) / self.spacing.0, self.rows()),
            clamp((y - self.origin.1) / self.spacing.1, self.cols()),
        )
    }

    pub fn fingerprint(&self, i: usize, j: usize) -> &[f64] {
        self.tensor.tube(i, j)
    }

    pub fn geometry(&self) -> MapGeometry {
        let (n1, n2, n3) = self.tensor.dims();
        MapGeometry {
            dims: [n1, n2, n3],
            origin: [self.origin.0, self.origin.1],
            spacing: [self.spacing.0, self.spacing.1],
        }
    }

    /// Writes `<path>` as TNS3 and `<path>.json` (extension replaced) with the
    /// grid geometry.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        io::save_tns3(&self.tensor, path)?;
        fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&self.geometry())?,
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let tensor = io::load_tns3(path)?;
        let geo: MapGeometry = serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
        let (n1, n2, n3) = tensor.dims();
        if geo.dims != [n1, n2, n3] {
            return Err(Error::Format(format!(
                "geometry sidecar dims {:?} disagree with tensor {:?}",
                geo.dims,
                tensor.dims()
            )));
        }
        RadioMap::new(
            tensor,
            (geo.origin[0], geo.origin[1]),
            (geo.spacing[0], geo.spacing[1]),
        )
    }
}
