//! Scene geometry: where the transmitter, receiver, surface, region of
//! interest and user sit, and the element layout of each.
//!
//! All coordinates are expressed in the same length unit as
//! [`SceneConfig::wavelength`]. The defaults use wavelength units
//! (`wavelength = 1`), so `[30, 50, 50]` means `[30λ, 50λ, 50λ]`.
//!
//! Planar grids (the surface and the region of interest) lie in the y–z
//! plane and face `+x`. Element `(row, col)` sits at
//! `center + (col - (cols-1)/2)·pitch·ŷ + ((rows-1)/2 - row)·pitch·ẑ`, so
//! row 0 is the top row and indices run row-major. This matches the
//! orientation of a raster image dropped into the region of interest.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Converts a power in dBm to watts. `-inf` maps to exactly zero.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub(crate) fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn norm(v: &Point3) -> f64 {
    distance(v, &[0.0; 3])
}

/// Full description of the simulated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Carrier wavelength, in the same unit as every coordinate below.
    pub wavelength: f64,

    pub tx_position: Point3,
    /// Orientation of the transmit ULA (unit vector).
    pub tx_axis: Point3,
    pub n_tx: usize,

    pub rx_position: Point3,
    pub rx_axis: Point3,
    pub n_rx: usize,

    /// Center of the surface.
    pub ris_origin: Point3,
    /// Number of element rows (along z).
    pub ris_rows: usize,
    /// Number of element columns (along y).
    pub ris_cols: usize,
    pub element_pitch: f64,

    pub roi_center: Point3,
    /// The region of interest is a `roi_side_voxels × roi_side_voxels` grid.
    pub roi_side_voxels: usize,
    pub voxel_pitch: f64,

    pub ue_position: Point3,

    pub tx_power_dbm: f64,
    /// Noise power at the user, used for spectral efficiency.
    pub ue_noise_dbm: f64,
    /// Aggregate sensing disturbance at the receiver. `-inf` disables it.
    pub rx_noise_dbm: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            wavelength: 1.0,
            tx_position: [30.0, 50.0, 50.0],
            tx_axis: [0.0, 1.0, 0.0],
            n_tx: 2,
            rx_position: [30.0, 52.0, 50.0],
            rx_axis: [0.0, 1.0, 0.0],
            n_rx: 2,
            ris_origin: [0.0, 0.0, 0.0],
            ris_rows: 20,
            ris_cols: 20,
            element_pitch: 0.5,
            roi_center: [50.0, 0.0, 0.0],
            roi_side_voxels: 30,
            voxel_pitch: 1.0,
            ue_position: [30.0, -50.0, 0.0],
            tx_power_dbm: 0.0,
            ue_noise_dbm: -80.0,
            rx_noise_dbm: -80.0,
        }
    }
}

impl SceneConfig {
    /// Parses a flat `key = value` file. Missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: SceneConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScene(msg));
        if !(self.wavelength > 0.0) {
            return bad(format!("wavelength must be positive, got {}", self.wavelength));
        }
        if self.n_tx == 0 || self.n_rx == 0 {
            return bad("n_tx and n_rx must be at least 1".into());
        }
        if self.ris_rows * self.ris_cols == 0 {
            return bad("the surface needs at least one element".into());
        }
        if self.roi_side_voxels == 0 {
            return bad("the region of interest needs at least one voxel".into());
        }
        if !(self.element_pitch > 0.0) || !(self.voxel_pitch > 0.0) {
            return bad("element_pitch and voxel_pitch must be positive".into());
        }
        for (name, axis) in [("tx_axis", &self.tx_axis), ("rx_axis", &self.rx_axis)] {
            if (norm(axis) - 1.0).abs() > 1e-12 {
                return bad(format!("{name} must have unit norm, got {}", norm(axis)));
            }
        }
        let points = [
            self.tx_position,
            self.tx_axis,
            self.rx_position,
            self.rx_axis,
            self.ris_origin,
            self.roi_center,
            self.ue_position,
        ];
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return bad("coordinates must be finite".into());
        }
        if !self.tx_power_dbm.is_finite() {
            return bad("tx_power_dbm must be finite".into());
        }
        if self.ue_noise_dbm.is_nan() || self.rx_noise_dbm.is_nan() {
            return bad("powers must not be NaN".into());
        }
        Ok(())
    }

    pub fn n_ris(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    pub fn n_voxels(&self) -> usize {
        self.roi_side_voxels * self.roi_side_voxels
    }

    /// Length of a vectorized sensing channel, `N_t·N_r`.
    pub fn n_links(&self) -> usize {
        self.n_tx * self.n_rx
    }

    /// Distance between the surface center and the region-of-interest center.
    pub fn roi_distance(&self) -> f64 {
        distance(&self.ris_origin, &self.roi_center)
    }

    /// Moves the region of interest to `[d, 0, 0]` relative to the surface.
    pub fn with_roi_distance(mut self, d: f64) -> Self {
        self.roi_center = [self.ris_origin[0] + d, self.ris_origin[1], self.ris_origin[2]];
        self
    }

    pub fn with_ris_size(mut self, rows: usize, cols: usize) -> Self {
        self.ris_rows = rows;
        self.ris_cols = cols;
        self
    }

    /// Upper end of the scattering-coefficient range, `4πS²/λ²` with `S`
    /// the voxel area.
    pub fn max_scattering(&self) -> f64 {
        let area = self.voxel_pitch * self.voxel_pitch;
        4.0 * std::f64::consts::PI * area * area / (self.wavelength * self.wavelength)
    }

    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn rx_noise_watts(&self) -> f64 {
        dbm_to_watts(self.rx_noise_dbm)
    }

    pub fn ue_noise_watts(&self) -> f64 {
        dbm_to_watts(self.ue_noise_dbm)
    }

    pub fn element_positions(&self, which: ArrayKind) -> PointSet {
        let points = match which {
            ArrayKind::Tx => ula(self.tx_position, self.tx_axis, self.n_tx, self.wavelength / 2.0),
            ArrayKind::Rx => ula(self.rx_position, self.rx_axis, self.n_rx, self.wavelength / 2.0),
            ArrayKind::Ris => planar(self.ris_origin, self.ris_rows, self.ris_cols, self.element_pitch),
            ArrayKind::Roi => planar(
                self.roi_center,
                self.roi_side_voxels,
                self.roi_side_voxels,
                self.voxel_pitch,
            ),
            ArrayKind::Ue => vec![self.ue_position],
        };
        PointSet { kind: which, points }
    }
}

fn ula(center: Point3, axis: Point3, n: usize, spacing: f64) -> Vec<Point3> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| {
            let offset = (i as f64 - mid) * spacing;
            [
                center[0] + offset * axis[0],
                center[1] + offset * axis[1],
                center[2] + offset * axis[2],
            ]
        })
        .collect()
}

fn planar(center: Point3, rows: usize, cols: usize, pitch: f64) -> Vec<Point3> {
    let row_mid = (rows as f64 - 1.0) / 2.0;
    let col_mid = (cols as f64 - 1.0) / 2.0;
    let mut points = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            points.push([
                center[0],
                center[1] + (col as f64 - col_mid) * pitch,
                center[2] + (row_mid - row as f64) * pitch,
            ]);
        }
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArrayKind {
    Tx,
    Rx,
    Ris,
    Roi,
    Ue,
}

impl FromStr for ArrayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tx" => Ok(Self::Tx),
            "rx" => Ok(Self::Rx),
            "ris" => Ok(Self::Ris),
            "roi" => Ok(Self::Roi),
            "ue" => Ok(Self::Ue),
            other => Err(Error::Usage(format!(
                "unknown array `{other}` (expected tx, rx, ris, roi or ue)"
            ))),
        }
    }
}

impl fmt::Display for ArrayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Tx => "tx",
            Self::Rx => "rx",
            Self::Ris => "ris",
            Self::Roi => "roi",
            Self::Ue => "ue",
        };
        f.write_str(name)
    }
}

/// Ordered element centers of one array or grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub kind: ArrayKind,
    pub points: Vec<Point3>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point3> {
        self.points.iter()
    }
}
