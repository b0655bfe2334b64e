//! Shared domain types and frequency-coordinate conventions.
//!
//! Every grid uses a centered-DC layout: along an axis of `n` samples, index `i`
//! sits at real-space coordinate `(i - n/2) * pitch` and at spatial frequency
//! `(i - n/2) / (n * pitch)` cycles/µm. Index 0 carries the unmatched
//! most-negative (Nyquist) frequency.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Illumination and detection optics. Lengths in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    pub wavelength_vacuum: f64,
    pub n_medium: f64,
    pub na_condenser: f64,
    pub na_objective: f64,
}

impl OpticalConfig {
    pub fn new(wavelength_vacuum: f64, n_medium: f64, na_condenser: f64, na_objective: f64) -> Result<Self> {
        let cfg = OpticalConfig { wavelength_vacuum, n_medium, na_condenser, na_objective };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 532 nm, medium 1.574, matched NA 1.2 (the polystyrene bead experiment).
    pub fn bead_default() -> Self {
        OpticalConfig { wavelength_vacuum: 0.532, n_medium: 1.574, na_condenser: 1.2, na_objective: 1.2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_vacuum > 0.0 && self.wavelength_vacuum.is_finite()) {
            return Err(Error::InvalidParameter(format!("wavelength must be > 0, got {}", self.wavelength_vacuum)));
        }
        if !(self.n_medium >= 1.0 && self.n_medium.is_finite()) {
            return Err(Error::InvalidParameter(format!("medium index must be >= 1, got {}", self.n_medium)));
        }
        for (name, na) in [("condenser", self.na_condenser), ("objective", self.na_objective)] {
            if !(na > 0.0 && na <= self.n_medium) {
                return Err(Error::InvalidParameter(format!(
                    "{name} NA must lie in (0, n_medium = {}], got {na}",
                    self.n_medium
                )));
            }
        }
        Ok(())
    }

    /// Wavenumber in the medium, rad/µm.
    pub fn k0(&self) -> f64 {
        2.0 * PI * self.n_medium / self.wavelength_vacuum
    }

    /// Lateral NA cutoff `2π·NA/λ` in rad/µm.
    pub fn k_na_r(&self, na: f64) -> f64 {
        2.0 * PI * na / self.wavelength_vacuum
    }

    /// Axial component at the NA edge, `sqrt(k0² - k_NAr²)`.
    pub fn k_na_z(&self, na: f64) -> f64 {
        let k0 = self.k0();
        let kr = self.k_na_r(na);
        (k0 * k0 - kr * kr).max(0.0).sqrt()
    }

    pub fn k_na_r_condenser(&self) -> f64 {
        self.k_na_r(self.na_condenser)
    }

    pub fn k_na_r_objective(&self) -> f64 {
        self.k_na_r(self.na_objective)
    }

    /// Scattering potential `k0²(n²/n_m² - 1)/4π` of a refractive index.
    pub fn potential_from_index(&self, n: f64) -> f64 {
        let k0 = self.k0();
        k0 * k0 * (n * n / (self.n_medium * self.n_medium) - 1.0) / (4.0 * PI)
    }

    /// Inverse of [`potential_from_index`](Self::potential_from_index) without clamping.
    pub fn radicand_from_potential(&self, f: f64) -> f64 {
        let k0 = self.k0();
        1.0 + 4.0 * PI * f / (k0 * k0)
    }
}

/// Isotropic voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// µm per voxel.
    pub pitch: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, pitch: f64) -> Result<Self> {
        let g = GridSpec { nx, ny, nz, pitch };
        g.validate()?;
        Ok(g)
    }

    pub fn cubic(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, n, n, pitch)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, n) in [("x", self.nx), ("y", self.ny), ("z", self.nz)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidParameter(format!("grid n{axis} must be even and >= 8, got {n}")));
            }
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::InvalidParameter(format!("pitch must be > 0, got {}", self.pitch)));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fov(&self) -> [f64; 3] {
        [self.nx as f64 * self.pitch, self.ny as f64 * self.pitch, self.nz as f64 * self.pitch]
    }

    pub fn min_fov(&self) -> f64 {
        let f = self.fov();
        f[0].min(f[1]).min(f[2])
    }

    /// Frequency step per axis, cycles/µm.
    pub fn freq_step(&self) -> [f64; 3] {
        let f = self.fov();
        [1.0 / f[0], 1.0 / f[1], 1.0 / f[2]]
    }

    /// Nyquist frequency `1/(2·pitch)`, identical on every axis.
    pub fn nyquist(&self) -> f64 {
        0.5 / self.pitch
    }

    /// Real-space coordinate (µm) of an index along an axis of `n` samples.
    pub fn coordinate(&self, n: usize, i: usize) -> f64 {
        (i as f64 - (n / 2) as f64) * self.pitch
    }

    /// Whether the lateral band edge `2·NA_obj/λ` is below Nyquist. Logs a warning otherwise.
    pub fn check_band(&self, config: &OpticalConfig) -> bool {
        let edge = 2.0 * config.na_objective / config.wavelength_vacuum;
        let ok = self.nyquist() > edge;
        if !ok {
            log::warn!(
                "grid Nyquist {:.4} cycles/um does not exceed lateral band edge {:.4} cycles/um; \
                 frequencies beyond Nyquist are discarded",
                self.nyquist(),
                edge
            );
        }
        ok
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Signed frequency (cycles/µm) of index `i` on an axis with `n` samples and the given pitch.
pub fn axis_frequency(n: usize, pitch: f64, i: usize) -> f64 {
    (i as f64 - (n / 2) as f64) / (n as f64 * pitch)
}

/// Nearest centered index for a frequency in cycles/µm, or `None` outside the axis.
pub fn nearest_frequency_index(n: usize, pitch: f64, xi: f64) -> Option<usize> {
    let idx = (xi * n as f64 * pitch).round() + (n / 2) as f64;
    if idx >= 0.0 && idx < n as f64 {
        Some(idx as usize)
    } else {
        None
    }
}

/// Index of the point mirrored through DC, modulo the axis length.
#[inline]
pub fn mirror_index(n: usize, i: usize) -> usize {
    (n - i) % n
}

/// Signed spatial frequency (cycles/µm) of a voxel under the centered-DC layout.
pub fn frequency_coordinate(grid: &GridSpec, index: [usize; 3]) -> Result<[f64; 3]> {
    let dims = grid.dims();
    if index.iter().zip(dims.iter()).any(|(i, n)| i >= n) {
        return Err(Error::IndexOutOfRange { index: index.to_vec(), shape: dims.to_vec() });
    }
    Ok([
        axis_frequency(grid.nx, grid.pitch, index[0]),
        axis_frequency(grid.ny, grid.pitch, index[1]),
        axis_frequency(grid.nz, grid.pitch, index[2]),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    RefractiveIndex,
    ScatteringPotential,
    /// High-pass filtered values; not a physical refractive index.
    Filtered,
    /// Binary 0/1 payload, e.g. a transfer-function support.
    Mask,
}

/// Real scalar volume on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub grid: GridSpec,
    pub values: Array3<f64>,
    pub kind: VolumeKind,
}

impl Volume3D {
    pub fn new(grid: GridSpec, values: Array3<f64>, kind: VolumeKind) -> Result<Self> {
        let v = Volume3D { grid, values, kind };
        v.validate()?;
        Ok(v)
    }

    pub fn filled(grid: GridSpec, value: f64, kind: VolumeKind) -> Result<Self> {
        Self::new(grid, Array3::from_elem(grid.shape(), value), kind)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.dim() != self.grid.shape() {
            return Err(Error::InvariantViolation(format!(
                "values shape {:?} does not match grid {:?}",
                self.values.dim(),
                self.grid.shape()
            )));
        }
        if let Some(bad) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation(format!("non-finite value {bad}")));
        }
        if self.kind == VolumeKind::RefractiveIndex {
            if let Some(bad) = self.values.iter().find(|&&v| v < 1.0) {
                return Err(Error::InvariantViolation(format!("refractive index {bad} < 1")));
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.values.len() as f64
    }

    /// Scattering potential of a refractive-index volume.
    pub fn to_scattering_potential(&self, config: &OpticalConfig) -> Result<Volume3D> {
        match self.kind {
            VolumeKind::RefractiveIndex => Ok(Volume3D {
                grid: self.grid,
                values: self.values.mapv(|n| config.potential_from_index(n)),
                kind: VolumeKind::ScatteringPotential,
            }),
            VolumeKind::ScatteringPotential => Ok(self.clone()),
            other => Err(Error::KindMismatch(format!("cannot derive a scattering potential from {other:?}"))),
        }
    }
}

/// Complex 3D spectrum in centered-DC layout with per-voxel sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum3D {
    pub grid: GridSpec,
    pub values: Array3<Complex64>,
    pub weights: Array3<f64>,
}

impl Spectrum3D {
    pub fn zeros(grid: GridSpec) -> Self {
        Spectrum3D {
            grid,
            values: Array3::zeros(grid.shape()),
            weights: Array3::zeros(grid.shape()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.dim() != self.grid.shape() || self.weights.dim() != self.grid.shape() {
            return Err(Error::InvariantViolation("spectrum arrays do not match grid".into()));
        }
        for (v, w) in self.values.iter().zip(self.weights.iter()) {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvariantViolation(format!("weight {w} is not a finite non-negative number")));
            }
            if *w == 0.0 && *v != Complex64::new(0.0, 0.0) {
                return Err(Error::InvariantViolation("nonzero value at a zero-weight voxel".into()));
            }
        }
        Ok(())
    }

    pub fn filled_voxels(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    /// Largest relative deviation from `values(-k) = conj(values(k))`, ignoring
    /// voxels whose mirror falls outside the grid.
    pub fn hermitian_deviation(&self) -> f64 {
        let (nx, ny, nz) = self.grid.shape();
        let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for ((i, j, k), v) in self.values.indexed_iter() {
            if i == 0 || j == 0 || k == 0 {
                continue;
            }
            let m = self.values[[nx - i, ny - j, nz - k]];
            worst = worst.max((v - m.conj()).norm());
        }
        worst / scale
    }
}

/// Complex optical field sampled on a 2D grid at the focal plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField2D {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
    pub values: Array2<Complex64>,
    /// Illumination wavevector in rad/µm.
    pub k_illum: [f64; 3],
}

impl ComplexField2D {
    pub fn new(pitch: f64, values: Array2<Complex64>, k_illum: [f64; 3]) -> Self {
        let (nx, ny) = values.dim();
        ComplexField2D { nx, ny, pitch, values, k_illum }
    }

    /// Checks the field against the optics: `|k| = k0`, `k_z > 0`, lateral component
    /// within the condenser aperture.
    pub fn validate(&self, config: &OpticalConfig) -> Result<()> {
        validate_illumination(self.k_illum, config)?;
        if self.values.dim() != (self.nx, self.ny) {
            return Err(Error::InvariantViolation("field shape does not match nx/ny".into()));
        }
        if !(self.pitch > 0.0) {
            return Err(Error::InvariantViolation("field pitch must be > 0".into()));
        }
        Ok(())
    }

    /// The unit-amplitude incident plane wave `exp(i k_r·r)` on this field's grid at z = 0.
    pub fn incident_wave(&self) -> Array2<Complex64> {
        incident_wave(self.nx, self.ny, self.pitch, self.k_illum)
    }
}

pub(crate) fn incident_wave(nx: usize, ny: usize, pitch: f64, k: [f64; 3]) -> Array2<Complex64> {
    Array2::from_shape_fn((nx, ny), |(i, j)| {
        let x = (i as f64 - (nx / 2) as f64) * pitch;
        let y = (j as f64 - (ny / 2) as f64) * pitch;
        Complex64::from_polar(1.0, k[0] * x + k[1] * y)
    })
}

/// Illumination wavevector invariants shared by fields and illumination sets.
pub fn validate_illumination(k: [f64; 3], config: &OpticalConfig) -> Result<()> {
    let k0 = config.k0();
    let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    if ((norm - k0) / k0).abs() > 1e-9 {
        return Err(Error::InvariantViolation(format!("|k_illum| = {norm} differs from k0 = {k0}")));
    }
    if !(k[2] > 0.0) {
        return Err(Error::Evanescent(format!("k_z = {} must be positive", k[2])));
    }
    let kr = k[0].hypot(k[1]);
    let limit = config.k_na_r_condenser();
    if kr > limit * (1.0 + 1e-12) {
        return Err(Error::Evanescent(format!("lateral |k| = {kr} exceeds condenser cutoff {limit}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frequency_coordinate_examples() {
        let g = GridSpec::cubic(64, 0.25).unwrap();
        assert_eq!(frequency_coordinate(&g, [32, 32, 32]).unwrap(), [0.0, 0.0, 0.0]);
        // one step is 1/(64·0.25) = 0.0625 cycles/um
        assert_eq!(frequency_coordinate(&g, [33, 32, 32]).unwrap(), [0.0625, 0.0, 0.0]);
        assert_eq!(frequency_coordinate(&g, [0, 32, 32]).unwrap(), [-2.0, 0.0, 0.0]);
        assert!(matches!(frequency_coordinate(&g, [64, 0, 0]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn frequency_is_odd_about_dc() {
        let g = GridSpec::new(16, 8, 10, 0.3).unwrap();
        for d in 1..8usize {
            let a = frequency_coordinate(&g, [8 + d, 4, 5]).unwrap();
            let b = frequency_coordinate(&g, [8 - d, 4, 5]).unwrap();
            assert_eq!(a[0], -b[0]);
        }
    }

    #[test]
    fn na_cutoffs_close_on_sphere() {
        let c = OpticalConfig::new(0.532, 1.337, 1.2, 1.1).unwrap();
        for na in [c.na_condenser, c.na_objective] {
            let (kr, kz, k0) = (c.k_na_r(na), c.k_na_z(na), c.k0());
            assert_relative_eq!(kr * kr + kz * kz, k0 * k0, max_relative = 1e-12);
        }
    }

    #[test]
    fn config_and_grid_validation() {
        assert!(OpticalConfig::new(0.0, 1.3, 1.0, 1.0).is_err());
        assert!(OpticalConfig::new(0.5, 0.9, 0.5, 0.5).is_err());
        assert!(OpticalConfig::new(0.5, 1.33, 1.4, 1.0).is_err());
        assert!(GridSpec::new(7, 8, 8, 0.1).is_err());
        assert!(GridSpec::new(8, 6, 8, 0.1).is_err());
        assert!(GridSpec::new(8, 8, 8, -0.1).is_err());
        let g = GridSpec::cubic(64, 0.2).unwrap();
        assert!(!g.check_band(&OpticalConfig::bead_default()));
        assert!(GridSpec::cubic(128, 0.1).unwrap().check_band(&OpticalConfig::bead_default()));
    }

    #[test]
    fn index_volume_rejects_sub_unity() {
        let g = GridSpec::cubic(8, 0.1).unwrap();
        let mut vals = Array3::from_elem(g.shape(), 1.33);
        vals[[1, 2, 3]] = 0.9;
        assert!(matches!(Volume3D::new(g, vals, VolumeKind::RefractiveIndex), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn potential_roundtrip() {
        let c = OpticalConfig::bead_default();
        let f = c.potential_from_index(1.5983);
        assert!(f > 0.0);
        assert_relative_eq!(c.n_medium * c.radicand_from_potential(f).sqrt(), 1.5983, max_relative = 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn na_identity_holds(lambda in 0.3f64..1.2, n in 1.0f64..1.8, fc in 0.01f64..1.0, fo in 0.01f64..1.0) {
            let c = OpticalConfig::new(lambda, n, fc * n, fo * n).unwrap();
            let k0 = c.k0();
            let kr = c.k_na_r_objective();
            let kz = c.k_na_z(c.na_objective);
            proptest::prop_assert!(((kz * kz + kr * kr) - k0 * k0).abs() <= 1e-12 * k0 * k0);
        }
    }
}
